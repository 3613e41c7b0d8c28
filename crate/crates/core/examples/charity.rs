//! A planned donation meets a forgotten debt: the debt is paid in full and the
//! donation shrinks without vanishing.
use ethical_fibers::duty::ConstraintSet;
use ethical_fibers::economy::{demand, Agent, Fiber, UtilitySpec};

fn main() {
    let donor = Agent {
        id: "donor".into(),
        endowment: vec![1000.0],
        utility: UtilitySpec::cobb_douglas(vec![1.0], vec![1.0]),
        lambda: 1.0,
        theta: 0.0,
    };
    for debt in [0.0, 500.0] {
        let fiber = Fiber::new(
            "y",
            vec!["money".into()],
            vec!["charity".into()],
            vec![1.0],
            ConstraintSet {
                predicates: vec![],
                prior_claim_total: debt,
            },
        )
        .unwrap();
        let b = demand(&donor, &fiber.unit_prices(), &fiber).unwrap();
        println!("debt {debt:>5}: keeps {:8.2}, donates {:8.2}", b.x[0], b.e[0]);
    }
}
