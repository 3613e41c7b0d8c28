use ethical_fibers::preferences::{
    check_all, construct_ordinal_utility, induced_relation, ChoiceGrid, PreferenceRelation,
};
use ethical_fibers::ExtendedBundle;

fn main() {
    let pts: Vec<ExtendedBundle> = [
        (0., 0., 0.),
        (1., 0., 0.),
        (0., 1., 1.),
        (1., 1., 0.),
        (2., 1., 1.),
    ]
    .iter()
    .map(|&(a, b, e)| ExtendedBundle::new(vec![a, b], vec![e]))
    .collect();
    let grid = ChoiceGrid::new(pts).unwrap();

    // Goods plus a duty, weighted equally.
    let rel = induced_relation(|b| b.coords().map(|q| (1.0 + q).ln()).sum(), grid.clone()).unwrap();
    for r in check_all(&rel) {
        println!("{:?}: {}", r.axiom, r.passed);
    }
    let u = construct_ordinal_utility(&rel).unwrap();
    println!("ranks: {:?}", u.ranks());

    // A cycle a > b > c > a on three points cannot be represented.
    let three = ChoiceGrid::new(grid.points()[..3].to_vec()).unwrap();
    let cycle =
        PreferenceRelation::from_pairs(three, &[(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (2, 0)]).unwrap();
    match construct_ordinal_utility(&cycle) {
        Ok(_) => println!("cycle represented?"),
        Err(e) => println!("cycle rejected: {e}"),
    }
}
