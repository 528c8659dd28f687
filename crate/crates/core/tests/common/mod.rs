//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use rand::Rng;
use storage_bilevel::case::{
    build_instance, parse_case, BilevelInstance, Branch, Bus, Cost, Generator, Load, LoadProfile, LowerLevelModel,
    Network, StorageSpec,
};
use storage_bilevel::conic::{dualize, Affine, ConicBuilder, ConicProgram, DualProgram, DualVarKind, Relation};
use storage_bilevel::opf::PriceSurface;
use storage_bilevel::reduce::ReducedProblem;
use storage_bilevel::smoothing::{jacobian, residual, SmoothingKind};
use storage_bilevel::solver::Block;

pub fn instance(text: &str, bus: usize, model: LowerLevelModel, profile: &LoadProfile) -> BilevelInstance {
    build_instance(parse_case(text).unwrap(), profile, StorageSpec::new(bus), model, 0.85).unwrap()
}

pub fn bus(id: usize) -> Bus {
    Bus { id, vmin: 0.9, vmax: 1.1, gs: 0.0, bs: 0.0 }
}

pub fn generator(bus: usize, c2: f64, c1: f64) -> Generator {
    Generator { bus, pmin: 0.0, pmax: 10.0, qmin: -10.0, qmax: 10.0, cost: Cost { c2, c1, c0: 0.0 } }
}

/// Two buses joined by one lossless line; the load sits at bus 2.
pub fn two_bus_network(gens: Vec<Generator>, rate: Option<f64>, load: f64) -> Network {
    Network {
        name: "two".into(),
        base_mva: 100.0,
        buses: vec![bus(1), bus(2)],
        generators: gens,
        branches: vec![Branch { from: 1, to: 2, r: 0.0, x: 0.1, b: 0.0, rate, tap: 1.0, shift: 0.0 }],
        loads: vec![Load { bus: 2, pd: load, qd: 0.0 }],
    }
}

/// Root of a monotone scalar function between `lo` and `hi`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let neg_lo = f(lo) < 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Positive root `y₀` of the scalar smoothed equation for `x₀`.
pub fn scalar_root(kind: SmoothingKind, x0: f64, eps: f64) -> f64 {
    let f = |y: f64| residual(kind, &[x0], &[y], eps)[0];
    let mut hi = 2.0 * eps * eps / x0 + 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    bisect(f, 0.0, hi)
}

fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Largest relative deviation of the analytic Jacobians from central
/// differences at a random point of dimension `n`.
pub fn jacobian_error(rng: &mut impl Rng, kind: SmoothingKind, n: usize) -> f64 {
    let (x, y) = (random_vec(rng, n), random_vec(rng, n));
    let eps = rng.random_range(0.05..1.0);
    let (jx, jy) = jacobian(kind, &x, &y, eps);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for (wrt_x, jac) in [(true, &jx), (false, &jy)] {
            let (mut xp, mut xm, mut yp, mut ym) = (x.clone(), x.clone(), y.clone(), y.clone());
            if wrt_x {
                xp[j] += h;
                xm[j] -= h;
            } else {
                yp[j] += h;
                ym[j] -= h;
            }
            let (fp, fm) = (residual(kind, &xp, &yp, eps), residual(kind, &xm, &ym, eps));
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                worst = worst.max((jac.at(i, j) - fd).abs() / fd.abs().max(1.0));
            }
        }
    }
    worst
}

struct RowSpec {
    rel: Relation,
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

fn affine(a: &[f64], b: &[f64], c: f64) -> Affine {
    let mut e = Affine::constant(c);
    for (j, &v) in a.iter().enumerate() {
        e.add_term(storage_bilevel::conic::VarId(j), v);
    }
    for (k, &v) in b.iter().enumerate() {
        e.add_param(storage_bilevel::conic::ParamId(k), v);
    }
    e
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(p, q)| p * q).sum()
}

/// A random conic program with a feasible point `x` and a dual feasible
/// point `y`. The linear objective is chosen last so that `y` satisfies
/// stationarity.
pub fn random_primal_dual(rng: &mut impl Rng) -> (ConicProgram, DualProgram, Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=5);
    let np = rng.random_range(0..=2);
    let x0 = random_vec(rng, n);
    let theta = random_vec(rng, np);
    let bounds: Vec<(Option<f64>, Option<f64>)> = x0
        .iter()
        .map(|&v| {
            let lo = rng.random_bool(0.4).then(|| v - rng.random_range(0.0..1.0));
            let hi = rng.random_bool(0.4).then(|| v + rng.random_range(0.0..1.0));
            (lo, hi)
        })
        .collect();
    let mut rows = Vec::new();
    for _ in 0..rng.random_range(0..=4) {
        let (a, b) = (random_vec(rng, n), random_vec(rng, np));
        let at = dot(&a, &x0) + dot(&b, &theta);
        let rel = if rng.random_bool(0.5) { Relation::Eq } else { Relation::Geq };
        let slack = if rel == Relation::Geq { rng.random_range(0.0..1.0) } else { 0.0 };
        rows.push(RowSpec { rel, a, b, c: slack - at });
    }
    let mut socs = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        let dim = rng.random_range(1..=3);
        let tail: Vec<RowSpec> = (0..dim)
            .map(|_| RowSpec {
                rel: Relation::Eq,
                a: random_vec(rng, n),
                b: random_vec(rng, np),
                c: rng.random_range(-1.0..1.0),
            })
            .collect();
        let norm = tail.iter().map(|t| (dot(&t.a, &x0) + dot(&t.b, &theta) + t.c).powi(2)).sum::<f64>().sqrt();
        let (a, b) = (random_vec(rng, n), random_vec(rng, np));
        let c = norm + rng.random_range(0.0..1.0) - dot(&a, &x0) - dot(&b, &theta);
        socs.push((RowSpec { rel: Relation::Eq, a, b, c }, tail));
    }
    let mut quad = Vec::new();
    for j in 0..n {
        if rng.random_bool(0.5) {
            quad.push((j, rng.random_range(0.0..2.0)));
        }
    }
    let c0 = rng.random_range(-1.0..1.0);

    let build = |lin: &[f64]| {
        let mut bld = ConicBuilder::new();
        let vars: Vec<_> = bounds
            .iter()
            .enumerate()
            .map(|(j, &(lo, hi))| bld.add_variable(&format!("x{j}"), lo, hi).unwrap())
            .collect();
        for (k, &v) in theta.iter().enumerate() {
            bld.add_parameter(&format!("t{k}"), v).unwrap();
        }
        for (r, row) in rows.iter().enumerate() {
            bld.add_linear(&format!("r{r}"), row.rel, affine(&row.a, &row.b, row.c)).unwrap();
        }
        for (m, (head, tail)) in socs.iter().enumerate() {
            let tail = tail.iter().map(|t| affine(&t.a, &t.b, t.c)).collect();
            bld.add_soc(&format!("s{m}"), affine(&head.a, &head.b, head.c), tail).unwrap();
        }
        let quad = quad.iter().map(|&(j, q)| (vars[j], q)).collect();
        bld.set_quadratic_objective(affine(lin, &[], c0), quad).unwrap();
        bld.build()
    };

    let (d0, _) = dualize(&build(&vec![0.0; n]));
    let mut y = vec![0.0; d0.num_vars()];
    for (k, v) in d0.vars.iter().enumerate() {
        y[k] = match v.kind {
            DualVarKind::Equality { .. } | DualVarKind::Copy { .. } => rng.random_range(-2.0..2.0),
            DualVarKind::Inequality { .. } => rng.random_range(0.0..2.0),
            DualVarKind::Cone { .. } => 0.0,
        };
    }
    for block in &d0.cones {
        for &k in &block[1..] {
            y[k] = rng.random_range(-1.0..1.0);
        }
        let t = block[1..].iter().map(|&k| y[k] * y[k]).sum::<f64>().sqrt();
        y[block[0]] = t + rng.random_range(0.0..1.0);
    }
    let lin: Vec<f64> = d0.stationarity.iter().map(|row| -row.residual(&x0, &y)).collect();
    let p = build(&lin);
    let (d, _) = dualize(&p);
    (p, d, x0, y)
}

/// Checks the McCormick rows of a reduced problem at `samples` random
/// points inside the injection and price boxes, with `w` set to the exact
/// product. Returns the number of sampled products and the largest row
/// violation.
pub fn mccormick_soundness(
    rng: &mut impl Rng,
    r: &ReducedProblem,
    prices: &PriceSurface,
    rating: f64,
    bus: usize,
    samples: usize,
) -> (usize, f64) {
    let nlp = &r.nlp;
    let mut triples = Vec::new();
    for &(w, a, b) in r.products() {
        let name = &nlp.names[w];
        let (tag, rest) = match (name.strip_prefix("wp["), name.strip_prefix("wq[")) {
            (Some(rest), _) => ('p', rest),
            (_, Some(rest)) => ('q', rest),
            _ => continue,
        };
        let t: usize = rest.trim_end_matches(']').parse().unwrap();
        let bounds = if tag == 'p' { prices.bounds1.as_ref() } else { prices.bounds2.as_ref() }.unwrap();
        let block = nlp.blocks.iter().find(|(n, _)| n == &format!("McCormick {tag}")).map(|(_, b)| b).unwrap();
        let Block::Rows { rows, .. } = block else { panic!("McCormick block is not linear") };
        let rows: Vec<_> = rows.iter().filter(|row| row.vars().any(|v| v == w)).cloned().collect();
        assert_eq!(rows.len(), 4, "{name}");
        triples.push((w, a, b, bounds.lower[t][bus], bounds.upper[t][bus], rows));
    }
    let mut x = vec![0.0; nlp.num_vars()];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..samples.div_ceil(triples.len().max(1)) {
        for (w, a, b, llo, lhi, rows) in &triples {
            let p = rng.random_range(-rating..=rating);
            let l = rng.random_range(*llo..=*lhi);
            x[*a] = p;
            x[*b] = l;
            x[*w] = p * l;
            let scale = (rating * llo.abs().max(lhi.abs())).max(1.0);
            for row in rows {
                worst = worst.max(-row.eval(&x) / scale);
            }
            count += 1;
        }
    }
    (count, worst)
}
