//! Two agents, two goods: the classic box.
use ethical_fibers::economy::{Agent, Economy, Fiber};
use ethical_fibers::{solve, SolverSettings};

fn main() {
    let fiber = Fiber::plain("y", &["apples", "bread"]);
    let agents = vec![
        Agent::cobb_douglas("ann", vec![0.3, 0.0], vec![0.5, 0.5]),
        Agent::cobb_douglas("bob", vec![0.0, 0.7], vec![0.5, 0.5]),
    ];
    let economy = Economy::new(fiber, agents).unwrap();
    let r = solve(&economy, &SolverSettings::default()).unwrap();
    println!("price of bread in apples: {:.6}", r.price_ratio(1));
    for (id, b) in &r.allocations {
        println!("{id}: apples {:.4}, bread {:.4}", b.x[0], b.x[1]);
    }
    println!(
        "{} iterations, residual {:.1e}, index {:?}",
        r.iterations, r.residual, r.index
    );
}
