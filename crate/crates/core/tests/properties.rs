//! Property tests for the invariants each module promises.

mod common;

use common::*;
use ethical_fibers::duty::{ConstraintSet, Dimension, Predicate, SourcedPredicate};
use ethical_fibers::economy::{demand, disposable_income, Agent, Economy, Fiber, UtilitySpec};
use ethical_fibers::equilibrium::{excess_demand, solve, trade_volume, SolverSettings};
use ethical_fibers::preferences::{
    axiom1_utility, check_all, induced_from_values, lexicographic_compare, ComplianceProfile,
};
use ethical_fibers::scenarios::{ethical_share, run_sugar, veblen_demand_curve, SugarMarketConfig};
use ethical_fibers::transition::{project_trace, run_path};
use ethical_fibers::{parse_str, RunConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::cmp::Ordering;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..1.0, n)
}

/// Three goods, one duty, three agents, with an optional set of constraints
/// chosen by `kind`.
fn duty_economy(
    alpha: &[Vec<f64>],
    beta: &[f64],
    endow: &[Vec<f64>],
    lambda: &[f64],
    kind: u8,
    duty_price: f64,
) -> Economy {
    let mut c = ConstraintSet::default();
    if kind & 1 != 0 {
        c.predicates.push(SourcedPredicate {
            source: "min".into(),
            predicate: Predicate::AtLeast(Dimension::Duty("d".into()), 0.05),
        });
    }
    if kind & 2 != 0 {
        c.predicates.push(SourcedPredicate {
            source: "ban".into(),
            predicate: Predicate::EqualsZero(Dimension::Good("c".into())),
        });
    }
    if kind & 4 != 0 {
        c.prior_claim_total = 0.2;
    }
    let fiber = Fiber::new(
        "y",
        vec!["a".into(), "b".into(), "c".into()],
        vec!["d".into()],
        vec![duty_price],
        c,
    )
    .unwrap();
    let agents = (0..alpha.len())
        .map(|i| Agent {
            id: format!("h{i}"),
            endowment: endow[i].clone(),
            utility: UtilitySpec::cobb_douglas(alpha[i].clone(), vec![beta[i]]),
            lambda: lambda[i],
            theta: 0.0,
        })
        .collect();
    Economy::new(fiber, agents).unwrap()
}

prop_compose! {
    fn arb_duty_economy()(
        alpha in prop::collection::vec(weights(3), 3),
        beta in weights(3),
        endow in prop::collection::vec(prop::collection::vec(0.5f64..4.0, 3), 3),
        lambda in prop::collection::vec(0.0f64..2.0, 3),
        kind in 0u8..8,
        duty_price in 0.5f64..2.0,
    ) -> Economy {
        duty_economy(&alpha, &beta, &endow, &lambda, kind, duty_price)
    }
}

// ---------------------------------------------------------------------------
// Random path configurations

/// A three-step path over three fibers with the same goods. Constraints per
/// step are taken from `bundles`, each a subset of {require_min, forbid}.
fn path_config(
    alpha: &[Vec<f64>],
    beta: &[f64],
    endow: &[Vec<f64>],
    bundles: &[u8],
    scarcity: &[f64],
) -> RunConfig {
    let goods = ["g0", "g1", "g2"];
    let agents: Vec<_> = (0..alpha.len())
        .map(|i| {
            json!({
                "id": format!("h{i}"),
                "endowment": goods.iter().zip(&endow[i]).map(|(g, w)| (g.to_string(), json!(w))).collect::<serde_json::Map<_, _>>(),
                "utility": {
                    "alpha": goods.iter().zip(&alpha[i]).map(|(g, a)| (g.to_string(), json!(a))).collect::<serde_json::Map<_, _>>(),
                    "beta": {"d": beta[i]}
                }
            })
        })
        .collect();
    let mut bundle_map = serde_json::Map::new();
    let mut fibers = serde_json::Map::new();
    for (k, &b) in bundles.iter().enumerate() {
        let mut active = vec![];
        if b & 1 != 0 {
            active.push("floor");
        }
        if b & 2 != 0 {
            active.push("ban");
        }
        bundle_map.insert(format!("y{k}"), json!({"active": active}));
        fibers.insert(format!("y{k}"), json!({"goods": goods, "duties": ["d"]}));
    }
    let mut doc = json!({
        "seed": 3,
        "registry": {
            "goods": goods,
            "imperfect_duties": ["d"],
            "maxims": {
                "give": {"class": "imperfect", "params": {"duty": "d"}},
                "floor": {"class": "perfect", "kind": "require_min", "params": {"dimension": "d", "level": 0.05}},
                "ban": {"class": "perfect", "kind": "forbid", "params": {"good": "g2"}}
            },
            "bundles": bundle_map
        },
        "economy": {"fibers": fibers, "agents": agents},
        "path": (0..bundles.len()).map(|k| json!({"t": k, "y": format!("y{k}")})).collect::<Vec<_>>(),
    });
    if !scarcity.is_empty() {
        doc["profile"] = json!({"lambda_max": 2.0, "scarcity": scarcity});
    }
    parse_str(&doc.to_string()).expect("generated config is valid")
}

fn run(config: &RunConfig) -> Vec<ethical_fibers::transition::TraceRecord> {
    run_path(
        &config.fibers,
        config.agents(),
        config.path.as_ref().unwrap(),
        config.profile.as_ref(),
        config.solver(),
    )
    .unwrap()
}

prop_compose! {
    fn arb_agents()(agents in 2usize..=3)(
        alpha in prop::collection::vec(weights(3), agents),
        beta in weights(agents),
        endow in prop::collection::vec(prop::collection::vec(0.5f64..4.0, 3), agents),
    ) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
        (alpha, beta, endow)
    }
}

fn decreasing_scarcity() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 3).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // -- equilibrium -------------------------------------------------------

    #[test]
    fn walras_law_on_every_iterate(eco in arb_duty_economy()) {
        let r = solve(&eco, &SolverSettings::default()).unwrap();
        for it in &r.history {
            prop_assert!(it.walras.abs() <= 1e-10 * (1.0 + it.walras_scale));
        }
    }

    #[test]
    fn excess_demand_is_homogeneous(eco in arb_duty_economy(), p in prop::collection::vec(0.2f64..5.0, 3)) {
        let base = eco.fiber.prices(&p).unwrap();
        let z = excess_demand(&eco, &base).unwrap();
        for k in [0.5, 2.0, 10.0] {
            let zk = excess_demand(&eco, &base.scaled(k)).unwrap();
            for (a, b) in z.iter().zip(&zk) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn cd_economies_converge(seed in any::<u64>()) {
        let (alpha, endow) = random_cd(&mut ChaCha8Rng::seed_from_u64(seed));
        let (p, _) = cd_two_good(&alpha, &endow);
        let r = solve(&cd_economy(&alpha, &endow), &SolverSettings::default()).unwrap();
        prop_assert!(r.converged && r.residual <= 1e-8);
        prop_assert!(r.iterations <= 10_000);
        prop_assert!((r.price_ratio(1) - p).abs() <= 1e-6 * p.max(1.0));
    }

    #[test]
    fn equilibria_respect_constraints(eco in arb_duty_economy()) {
        let r = solve(&eco, &SolverSettings::default()).unwrap();
        for (_, b) in &r.allocations {
            prop_assert!(eco.fiber.holds(b));
        }
        if eco.fiber.is_forbidden(2) {
            prop_assert_eq!(trade_volume(&eco, &r, 2), 0.0);
        }
    }

    // -- demand ------------------------------------------------------------

    #[test]
    fn demand_exhausts_disposable_income(eco in arb_duty_economy(), p in prop::collection::vec(0.2f64..5.0, 3)) {
        let prices = eco.fiber.prices(&p).unwrap();
        for a in &eco.agents {
            let income = disposable_income(a, &prices, &eco.fiber);
            prop_assume!(income > 0.5);
            let b = demand(a, &prices, &eco.fiber).unwrap();
            let spent = prices.dot(&b.flat());
            prop_assert!((spent - income).abs() <= 1e-8 * income.abs().max(1.0), "{} vs {}", spent, income);
            prop_assert!(eco.fiber.holds(&b));
        }
    }

    #[test]
    fn demand_is_homogeneous(eco in arb_duty_economy(), p in prop::collection::vec(0.2f64..5.0, 3)) {
        let prices = eco.fiber.prices(&p).unwrap();
        for a in &eco.agents {
            let b = demand(a, &prices, &eco.fiber).unwrap();
            for k in [0.5, 2.0, 10.0] {
                let bk = demand(a, &prices.scaled(k), &eco.fiber).unwrap();
                for (u, v) in b.coords().zip(bk.coords()) {
                    prop_assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()));
                }
            }
        }
    }

    #[test]
    fn axiom1_utility_is_strictly_monotone(
        x in prop::collection::vec(0.0f64..10.0, 2),
        e in prop::collection::vec(0.0f64..10.0, 1),
        alpha in weights(2),
        beta in weights(1),
        lambda in 0.1f64..3.0,
        coord in 0usize..3,
    ) {
        let u0 = axiom1_utility(&x, &e, &alpha, &beta, lambda).unwrap();
        let (mut x1, mut e1) = (x.clone(), e.clone());
        if coord < 2 { x1[coord] += 1e-3 } else { e1[0] += 1e-3 }
        let u1 = axiom1_utility(&x1, &e1, &alpha, &beta, lambda).unwrap();
        prop_assert!(u1 > u0);
    }

    // -- preferences -------------------------------------------------------

    #[test]
    fn induced_relations_are_rational(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_grid(&mut rng, n);
        let values: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut rng, -5.0..5.0f64).round()).collect();
        let rel = induced_from_values(&values, grid).unwrap();
        for report in check_all(&rel).iter().take(3) {
            prop_assert!(report.passed, "{:?}", report);
        }
    }

    #[test]
    fn lexicographic_order_is_total(
        a in (0.0f64..2.0, -5.0f64..5.0), b in (0.0f64..2.0, -5.0f64..5.0), c in (0.0f64..2.0, -5.0f64..5.0),
        round in any::<bool>(),
    ) {
        let mk = |(s, u): (f64, f64)| {
            let s = if round { s.round() } else { s };
            ComplianceProfile { perfect_shortfall: s, inclination_utility: if round { u.round() } else { u } }
        };
        let (a, b, c) = (mk(a), mk(b), mk(c));
        prop_assert_eq!(lexicographic_compare(&a, &b), lexicographic_compare(&b, &a).reverse());
        if lexicographic_compare(&a, &b) != Ordering::Less && lexicographic_compare(&b, &c) != Ordering::Less {
            prop_assert!(lexicographic_compare(&a, &c) != Ordering::Less);
        }
        if a.perfect_shortfall < b.perfect_shortfall {
            prop_assert_eq!(lexicographic_compare(&a, &b), Ordering::Greater);
        }
    }

    // -- scenarios ---------------------------------------------------------

    #[test]
    fn sugar_share_is_monotone(seed in any::<u64>(), phi in 0.0f64..1.0, dphi in 0.0f64..0.3, premium in 0.0f64..1.0, dp in 0.0f64..0.3) {
        let cfg = SugarMarketConfig { population: 2000, ..Default::default() };
        let lo = SugarMarketConfig { phi, ..cfg.clone() };
        let hi = SugarMarketConfig { phi: (phi + dphi).min(1.0), ..cfg };
        prop_assert!(ethical_share(&lo, seed, premium) <= ethical_share(&hi, seed, premium));
        prop_assert!(ethical_share(&lo, seed, premium + dp) <= ethical_share(&lo, seed, premium));
        let report = run_sugar(&lo, seed);
        prop_assert!(report.shares.iter().all(|s| (0.0..=phi + 1e-12).contains(s)));
    }

    #[test]
    fn veblen_without_status_never_rises(alpha in weights(2), beta in 0.1f64..2.0, lambda in 0.0f64..3.0, m in 0.5f64..5.0, p_bar in 0.0f64..3.0) {
        let fiber = Fiber::new("y", vec!["m".into(), "g".into()], vec!["d".into()], vec![1.0], ConstraintSet::default()).unwrap();
        let agent = Agent {
            id: "v".into(),
            endowment: vec![m, 1.0],
            utility: UtilitySpec::veblen(alpha, vec![beta], vec![p_bar]),
            lambda,
            theta: 0.0,
        };
        let sweep: Vec<f64> = (1..=50).map(|k| 0.1 * k as f64).collect();
        let curve = veblen_demand_curve(&agent, &fiber, 0, &sweep).unwrap();
        prop_assert!(curve.increasing.is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    // -- transitions -------------------------------------------------------

    #[test]
    fn projection_matches_path((alpha, beta, endow) in arb_agents(), bundles in prop::collection::vec(0u8..4, 3), scarcity in decreasing_scarcity()) {
        let config = path_config(&alpha, &beta, &endow, &bundles, &scarcity);
        let trace = run(&config);
        prop_assert_eq!(project_trace(&trace), config.path.as_ref().unwrap().y_sequence());
        for r in &trace {
            let own = &config.fibers[&r.y_id];
            for (_, b) in &r.result.allocations {
                prop_assert!(own.holds(b));
            }
        }
    }

    #[test]
    fn identity_transport_is_stationary((alpha, beta, endow) in arb_agents(), bundle in 0u8..4) {
        let config = path_config(&alpha, &beta, &endow, &[bundle; 3], &[]);
        let trace = run(&config);
        let tol = 1e-6;
        for w in trace.windows(2) {
            for ((_, a), (_, b)) in w[0].result.allocations.iter().zip(&w[1].result.allocations) {
                for (u, v) in a.coords().zip(b.coords()) {
                    prop_assert!((u - v).abs() <= tol * (1.0 + u.abs()), "{} vs {}", u, v);
                }
            }
        }
    }

    #[test]
    fn duty_share_rises_with_lambda((alpha, beta, endow) in arb_agents(), bundle in 0u8..4, scarcity in decreasing_scarcity()) {
        let config = path_config(&alpha, &beta, &endow, &[bundle; 3], &scarcity);
        let trace = run(&config);
        let shares: Vec<f64> = trace.iter().map(|r| r.duty_share).collect();
        for w in shares.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "{:?}", shares);
        }
    }
}
