//! Multistart over seeded perturbations of a base point.

use std::cmp::Ordering;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nlp::{solve_nlp, Nlp};
use super::{Solution, SolveOptions, Status};
use crate::par;

/// Start `k` for the given base: start 0 is the base itself, the others add
/// independent uniform noise in `[−radius, radius]` to every scaled
/// variable, then clip into the bounds.
pub fn perturbed_start(nlp: &Nlp, base: &[f64], k: usize, opts: &SolveOptions) -> Vec<f64> {
    if k == 0 {
        return base.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
    (0..nlp.num_vars())
        .map(|j| {
            let d = nlp.scale[j];
            let v = base[j] + d * rng.random_range(-opts.radius..=opts.radius);
            v.clamp(nlp.lower[j], nlp.upper[j])
        })
        .collect()
}

/// Orders solutions best first: usable before unusable, then lower
/// objective, then lexicographically smaller point. Independent of the order
/// in which solutions were produced.
pub fn compare(a: &Solution, b: &Solution) -> Ordering {
    let key = |s: &Solution| if s.status.is_usable() { 0 } else { 1 };
    key(a)
        .cmp(&key(b))
        .then_with(|| {
            if key(a) == 0 {
                a.objective.total_cmp(&b.objective)
            } else {
                a.infeasibility.total_cmp(&b.infeasibility)
            }
        })
        .then_with(|| {
            a.point.iter().zip(&b.point).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
        })
}

/// Solves from `opts.starts` perturbed starts and keeps the best. When no
/// start succeeds the least infeasible point is returned with the worst
/// status seen.
pub fn multistart(nlp: &Nlp, base: &[f64], opts: &SolveOptions) -> Solution {
    let clock = Instant::now();
    let ks: Vec<usize> = (0..opts.starts.max(1)).collect();
    let results = par::map(&ks, |&k| solve_nlp(nlp, &perturbed_start(nlp, base, k, opts), opts));
    merge(results, clock)
}

pub(crate) fn merge(results: Vec<Solution>, clock: Instant) -> Solution {
    let iterations = results.iter().map(|s| s.iterations).sum();
    let worst = results.iter().map(|s| s.status).max_by_key(|s| s.rank()).unwrap_or(Status::IterationLimit);
    let mut best = results.into_iter().min_by(compare).expect("at least one start");
    if !best.status.is_usable() {
        best.status = worst;
    }
    best.iterations = iterations;
    best.wall_time = clock.elapsed().as_secs_f64();
    best
}
