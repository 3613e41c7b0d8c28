use ethical_fibers::scenarios::{estimate_critical_mass, run_sugar, SugarMarketConfig};

fn main() {
    let base = SugarMarketConfig::default();
    for phi in [0.73, 0.2, 0.05] {
        let r = run_sugar(&SugarMarketConfig { phi, ..base.clone() }, 42);
        let tail: Vec<String> = r.shares[8..14].iter().map(|s| format!("{s:.3}")).collect();
        println!(
            "φ={phi:.2}  periods 8..14: {}  collapse: {:?}",
            tail.join(" "),
            r.collapse_period
        );
    }
    let cm = estimate_critical_mass(&base, 42, 1e-4).unwrap();
    println!(
        "critical mass φ* ≈ {:.4} after {} bisections",
        cm.phi_star.unwrap(),
        cm.iterations
    );
}
