use ethical_fibers::economy::{Agent, Economy, Fiber};
use ethical_fibers::equilibrium::{locate_equilibria, OracleGrid};

fn main() {
    let fiber = Fiber::plain("y", &["x1", "x2"]);
    let economy = Economy::new(
        fiber,
        vec![
            Agent::cobb_douglas("a", vec![2.0, 0.5], vec![0.7, 0.3]),
            Agent::cobb_douglas("b", vec![0.5, 2.0], vec![0.2, 0.8]),
        ],
    )
    .unwrap();
    let found = locate_equilibria(&economy, &OracleGrid::default(), 1e-10).unwrap();
    let mut sum = 0;
    for e in &found {
        let i = e.index.value().unwrap_or(0);
        sum += i as i32;
        println!("p = {:?}  index {i:+}", e.prices);
    }
    println!("{} equilibria, index sum {sum:+}", found.len());
}
