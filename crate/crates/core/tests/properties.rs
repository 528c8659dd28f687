mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use storage_bilevel::case::{
    parse_case, serialize_case, Branch, Bus, Cost, Generator, Load, LoadProfile, LowerLevelModel, Network,
};
use storage_bilevel::conic::{dualize, evaluate_dual, evaluate_primal};
use storage_bilevel::data;
use storage_bilevel::opf::{build_lower_level, estimate_price_bounds, solve_lower_level, PriceWidths, Screen};
use storage_bilevel::reduce::{reduce, TechniqueKind, TechniqueSpec, UpperLevelModel};
use storage_bilevel::smoothing::{residual, SmoothingKind};
use storage_bilevel::solver::{
    branch_and_bound, enumerate_binaries, solve_nlp, Block, Fixings, Nlp, QuadExpr, RowCone, SolveOptions,
};

use common::*;

fn kind() -> impl Strategy<Value = SmoothingKind> {
    prop_oneof![Just(SmoothingKind::Chks), Just(SmoothingKind::Kanzow)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn scalar_roots_multiply_to_eps_squared(kind in kind(), lx in -2.0f64..1.0, le in -4.0f64..-0.5) {
        let (x0, eps) = (10f64.powf(lx), 10f64.powf(le));
        let y0 = scalar_root(kind, x0, eps);
        prop_assert!((x0 * y0 - eps * eps).abs() <= 1e-10, "{x0} {y0} {eps}");
    }

    #[test]
    fn residual_vanishes_on_the_smoothed_hyperbola(kind in kind(), lx in -2.0f64..1.0, le in -3.0f64..0.0) {
        let (x0, eps) = (10f64.powf(lx), 10f64.powf(le));
        let r = residual(kind, &[x0], &[eps * eps / x0], eps)[0];
        prop_assert!(r.abs() <= 1e-12 * x0.max(1.0), "{r}");
    }

    #[test]
    fn jacobians_match_central_differences(kind in kind(), n in 1usize..=5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let err = jacobian_error(&mut rng, kind, n);
        prop_assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn weak_duality_holds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, d, x, y) = random_primal_dual(&mut rng);
        let (ep, ed) = (evaluate_primal(&p, &x).unwrap(), evaluate_dual(&d, &y).unwrap());
        prop_assert!(ep.infeasibility <= 1e-12 && ed.infeasibility <= 1e-12);
        prop_assert!(ep.objective - ed.objective >= -1e-9, "{} < {}", ep.objective, ed.objective);
    }
}

#[test]
fn mccormick_envelopes_contain_the_product() {
    for model in [LowerLevelModel::Dc, LowerLevelModel::Jabr] {
        let inst = instance(data::CASE3, 3, model, &LoadProfile::flat(3));
        let bundle = build_lower_level(&inst, &Screen::all(&inst)).unwrap();
        let op = solve_lower_level(&bundle, &[0.1, -0.2, 0.0], &[0.0; 3], &SolveOptions::default()).unwrap();
        let (dual, pairing) = dualize(&bundle.program);
        for width in [1.0, 50.0, 1000.0] {
            let widths = PriceWidths { active: width, reactive: width };
            let prices = estimate_price_bounds(&op.prices, widths).unwrap();
            let spec = TechniqueSpec::new(TechniqueKind::Mc);
            let r = reduce(&UpperLevelModel::new(&inst), &bundle, &dual, &pairing, &prices, &spec).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(width as u64);
            let (n, worst) = mccormick_soundness(&mut rng, &r, &prices, inst.storage.rating, bundle.storage_bus, 2000);
            assert!(n >= 2000);
            assert!(worst <= 1e-12, "{model:?} width {width}: {worst}");
        }
    }
}

fn knapsack(costs: &[f64], weights: &[f64], need: f64) -> Nlp {
    let mut p = Nlp::new();
    let vars: Vec<usize> = (0..costs.len()).map(|j| p.add_var(format!("x{j}"), 0.0, 1.0, 1.0)).collect();
    let mut row = QuadExpr::constant(-need);
    let mut obj = QuadExpr::constant(0.0);
    for (&j, (&c, &w)) in vars.iter().zip(costs.iter().zip(weights)) {
        row.add_linear(j, w);
        obj.add_linear(j, c);
    }
    p.objective = obj;
    p.add_block("cover", Block::Rows { cone: RowCone::Geq, rows: vec![row] });
    p.integer = vars;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn branch_and_bound_matches_enumeration(
        costs in prop::collection::vec(0.5f64..5.0, 3..=6),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = costs.iter().map(|_| rand::Rng::random_range(&mut rng, 0.5..3.0)).collect();
        let need = 0.4 * weights.iter().sum::<f64>();
        let nlp = knapsack(&costs, &weights, need);
        let opts = SolveOptions::default();
        let node = |fixed: &Fixings| {
            let mut sub = nlp.clone();
            for &(j, v) in fixed {
                sub.lower[j] = v;
                sub.upper[j] = v;
            }
            let start: Vec<f64> = (0..sub.num_vars()).map(|j| 0.5f64.clamp(sub.lower[j], sub.upper[j])).collect();
            solve_nlp(&sub, &start, &opts)
        };
        let a = branch_and_bound(&nlp.integer, &Vec::new(), node, &opts);
        let b = enumerate_binaries(&nlp.integer, &Vec::new(), node);
        prop_assert!(a.status.is_usable() && b.status.is_usable());
        prop_assert!((a.objective - b.objective).abs() <= 1e-6 * b.objective.abs().max(1.0), "{} vs {}", a.objective, b.objective);
    }
}

fn network() -> impl Strategy<Value = Network> {
    (2usize..=6)
        .prop_flat_map(|n| {
            let buses = prop::collection::vec((0.85f64..0.95, 1.05f64..1.15, -0.1f64..0.1, -0.2f64..0.2), n);
            let gens = prop::collection::vec(
                (1..=n, 0.0f64..1.0, 1.0f64..5.0, 0.0f64..0.05, 1.0f64..50.0, 0.0f64..100.0),
                1..=3,
            );
            let branches = prop::collection::vec(
                (0.0f64..0.05, 0.01f64..0.3, 0.0f64..0.1, prop::option::of(0.1f64..3.0), 0.9f64..1.1, -0.2f64..0.2),
                n - 1,
            );
            let loads = prop::collection::vec((0.05f64..2.0, -0.5f64..0.5), n);
            (Just(n), buses, gens, branches, loads)
        })
        .prop_map(|(n, buses, gens, branches, loads)| Network {
            name: "random".into(),
            base_mva: 100.0,
            buses: buses
                .into_iter()
                .enumerate()
                .map(|(i, (vmin, vmax, gs, bs))| Bus { id: i + 1, vmin, vmax, gs, bs })
                .collect(),
            generators: gens
                .into_iter()
                .map(|(bus, pmin, pmax, c2, c1, c0)| Generator {
                    bus,
                    pmin,
                    pmax,
                    qmin: -pmax,
                    qmax: pmax,
                    cost: Cost { c2, c1, c0 },
                })
                .collect(),
            branches: branches
                .into_iter()
                .enumerate()
                .map(|(k, (r, x, b, rate, tap, shift))| Branch { from: k + 1, to: k + 2, r, x, b, rate, tap, shift })
                .collect(),
            loads: loads.into_iter().take(n).enumerate().map(|(i, (pd, qd))| Load { bus: i + 1, pd, qd }).collect(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parsed_cases_round_trip_exactly(net in network()) {
        // a value read from a file always has an exact preimage in file units
        let first = parse_case(&serialize_case(&net)).unwrap();
        let text = serialize_case(&first);
        let again = parse_case(&text).unwrap();
        prop_assert_eq!(&again, &first);
        prop_assert_eq!(serialize_case(&again), text);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * a.abs().max(b.abs());
        for (g, h) in net.generators.iter().zip(&first.generators) {
            prop_assert!(close(g.cost.c2, h.cost.c2) && close(g.cost.c1, h.cost.c1) && close(g.pmax, h.pmax));
        }
        for (b, c) in net.branches.iter().zip(&first.branches) {
            prop_assert!(close(b.x, c.x) && close(b.b, c.b));
        }
    }
}

#[test]
fn bundled_cases_round_trip_exactly() {
    for text in [data::CASE3, data::CASE5] {
        let net = parse_case(text).unwrap();
        assert_eq!(parse_case(&serialize_case(&net)).unwrap(), net);
    }
}
