//! Conspicuous giving: with a status term the demand for a duty can rise
//! with its price.
use ethical_fibers::duty::ConstraintSet;
use ethical_fibers::economy::{Agent, Fiber, UtilitySpec};
use ethical_fibers::scenarios::veblen_demand_curve;

fn main() {
    let fiber = Fiber::new(
        "y",
        vec!["money".into()],
        vec!["charity".into()],
        vec![1.0],
        ConstraintSet::default(),
    )
    .unwrap();
    let sweep: Vec<f64> = (1..=30).map(|k| 0.1 * k as f64).collect();
    for theta in [0.0, 5.0] {
        let agent = Agent {
            id: "patron".into(),
            endowment: vec![10.0],
            utility: UtilitySpec::veblen(vec![1.0], vec![1.0], vec![0.5]),
            lambda: 1.0,
            theta,
        };
        let curve = veblen_demand_curve(&agent, &fiber, 0, &sweep).unwrap();
        println!("θ = {theta}: rising on {:?}", curve.increasing);
        for (p, e) in curve.points.iter().step_by(5) {
            println!("  p={p:.1}  e={e:.3}");
        }
    }
}
