use ethical_fibers::topology::{
    discrete_topology, projection_continuous, verify_topology_axioms, BaseSpace, OpenFamily,
};

fn main() {
    let base = BaseSpace::new(vec!["y1".into(), "y2".into(), "y3".into()]).unwrap();
    let open = discrete_topology(&base);
    let report = verify_topology_axioms(&open, &base);
    println!(
        "discrete topology on {} points: {} open sets, axioms pass: {}",
        base.m(),
        open.len(),
        report.passed
    );

    // Two goods and one duty in every fiber.
    let cont = projection_continuous(&base, &open, (2, 1));
    println!(
        "projection continuous: {} ({} preimages)",
        cont.passed, cont.preimages_checked
    );

    // {y1} and {y2} without their union.
    let broken = OpenFamily::from_masks([0b000, 0b001, 0b010, 0b111]);
    let report = verify_topology_axioms(&broken, &base);
    println!("broken family passes: {}", report.passed);
    if let Some(w) = report.witness {
        println!("  witness: {w}");
    }
}
