//! Primal-dual interior point method for `min ½xᵀPx + qᵀx  s.t. Ax + s = b,
//! s ∈ K` on the homogeneous self-dual embedding, with Mehrotra
//! predictor-corrector steps and Nesterov–Todd scaling.

use std::time::Instant;

use super::cones::{self, Cone, Scaling};
use super::linalg::{dot, inf_norm, Csc, SparseLu};
use super::{SolveOptions, Status};

/// Problem data in solver form. `p` is the diagonal of `P`.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub n: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub a: Csc,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

#[derive(Debug, Clone)]
pub struct ConicResult {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

struct Scaled {
    p: Vec<f64>,
    q: Vec<f64>,
    a: Csc,
    at: Csc,
    b: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

/// Ruiz equilibration of `[[P, Aᵀ], [A, 0]]` with one scale per cone block
/// for second-order cones, followed by a cost scaling.
fn equilibrate(prob: &StandardForm) -> Scaled {
    let n = prob.n;
    let m = prob.b.len();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let offs = cones::offsets(&prob.cones);
    let a = &prob.a;
    for _ in 0..15 {
        let mut col = vec![0.0f64; n];
        let mut row = vec![0.0f64; m];
        for j in 0..n {
            col[j] = (prob.p[j] * d[j] * d[j]).abs();
            for k in a.colptr[j]..a.colptr[j + 1] {
                let v = (a.vals[k] * d[j] * e[a.rowidx[k]]).abs();
                col[j] = col[j].max(v);
                row[a.rowidx[k]] = row[a.rowidx[k]].max(v);
            }
        }
        for (k, c) in prob.cones.iter().enumerate() {
            if let Cone::Soc(_) = c {
                let r = offs[k]..offs[k + 1];
                let mx = row[r.clone()].iter().copied().fold(0.0, f64::max);
                row[r].iter_mut().for_each(|v| *v = mx);
            }
        }
        let fix = |v: f64| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 };
        for j in 0..n {
            d[j] *= fix(col[j]).clamp(1e-4, 1e4);
        }
        for i in 0..m {
            e[i] *= fix(row[i]).clamp(1e-4, 1e4);
        }
    }
    for v in d.iter_mut().chain(e.iter_mut()) {
        *v = v.clamp(1e-8, 1e8);
    }
    let mut trip = Vec::with_capacity(a.nnz());
    for j in 0..n {
        for k in a.colptr[j]..a.colptr[j + 1] {
            trip.push((a.rowidx[k], j, a.vals[k] * e[a.rowidx[k]] * d[j]));
        }
    }
    let sa = Csc::from_triplets(m, n, &trip);
    let sat = Csc::from_triplets(n, m, &trip.iter().map(|&(i, j, v)| (j, i, v)).collect::<Vec<_>>());
    let qd: Vec<f64> = prob.q.iter().zip(&d).map(|(q, d)| q * d).collect();
    let pd: Vec<f64> = prob.p.iter().zip(&d).map(|(p, d)| p * d * d).collect();
    let pmean = if n > 0 { pd.iter().map(|v| v.abs()).sum::<f64>() / n as f64 } else { 0.0 };
    let c = 1.0 / pmean.max(inf_norm(&qd)).clamp(1e-4, 1e4);
    Scaled {
        p: pd.iter().map(|v| v * c).collect(),
        q: qd.iter().map(|v| v * c).collect(),
        a: sa,
        at: sat,
        b: prob.b.iter().zip(&e).map(|(b, e)| b * e).collect(),
        d,
        e,
        c,
    }
}

/// Maps a scaled iterate back to original units: `(x, s, z)`.
fn unscale(sc: &Scaled, x: &[f64], s: &[f64], z: &[f64], tau: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (
        x.iter().zip(&sc.d).map(|(x, d)| x * d / tau).collect(),
        s.iter().zip(&sc.e).map(|(s, e)| s / e / tau).collect(),
        z.iter().zip(&sc.e).map(|(z, e)| z * e / (sc.c * tau)).collect(),
    )
}

struct Kkt<'a> {
    sc: &'a Scaled,
    lu: SparseLu,
    reg: f64,
}

impl Kkt<'_> {
    fn matrix(&self, w2: &[(usize, usize, f64)], reg_sign: f64) -> Csc {
        let n = self.sc.p.len();
        let m = self.sc.b.len();
        let mut t = Vec::with_capacity(2 * self.sc.a.nnz() + n + m + w2.len());
        for j in 0..n {
            t.push((j, j, self.sc.p[j] + reg_sign * self.reg));
        }
        for j in 0..n {
            for k in self.sc.a.colptr[j]..self.sc.a.colptr[j + 1] {
                let i = self.sc.a.rowidx[k];
                let v = self.sc.a.vals[k];
                t.push((n + i, j, v));
                t.push((j, n + i, v));
            }
        }
        for i in 0..m {
            t.push((n + i, n + i, -reg_sign * self.reg));
        }
        for &(i, j, v) in w2 {
            t.push((n + i, n + j, -v));
        }
        Csc::from_triplets(n + m, n + m, &t)
    }

    /// Factors `[[P + δI, Aᵀ], [A, −W² − δI]]` and returns a solver that
    /// refines against the unregularized matrix.
    fn solve_fn(&mut self, w2: Vec<(usize, usize, f64)>) -> Option<impl Fn(&[f64]) -> Vec<f64>> {
        let k = self.matrix(&w2, 1.0);
        let exact = self.matrix(&w2, 0.0);
        let f = self.lu.factor(&k).ok()?;
        Some(move |rhs: &[f64]| f.solve_refined(rhs, |v| exact.mul(v), 20))
    }
}

/// Solves a standard-form problem.
pub fn solve_standard(prob: &StandardForm, opts: &SolveOptions) -> ConicResult {
    let start = Instant::now();
    let n = prob.n;
    let m = prob.b.len();
    let sc = equilibrate(prob);
    let cs = &prob.cones;
    let nu = cones::degree(cs) as f64;
    let offs = cones::offsets(cs);
    let zero_rows: Vec<bool> = {
        let mut v = vec![false; m];
        for (k, c) in cs.iter().enumerate() {
            if let Cone::Zero(_) = c {
                v[offs[k]..offs[k + 1]].iter_mut().for_each(|t| *t = true);
            }
        }
        v
    };
    let mut kkt = Kkt { sc: &sc, lu: SparseLu::new(), reg: 1e-9 };

    // initial point from one solve with W = I on non-zero cones
    let init_w2: Vec<(usize, usize, f64)> = (0..m).filter(|&i| !zero_rows[i]).map(|i| (i, i, 1.0)).collect();
    let (mut x, mut s, mut z) = {
        let solve = kkt.solve_fn(init_w2);
        let mut rhs: Vec<f64> = sc.q.iter().map(|v| -v).collect();
        rhs.extend_from_slice(&sc.b);
        let sol = match solve {
            Some(f) => f(&rhs),
            None => vec![0.0; n + m],
        };
        let sol: Vec<f64> = sol.into_iter().map(|v| if v.is_finite() { v } else { 0.0 }).collect();
        let x = sol[..n].to_vec();
        let v = &sol[n..];
        let mut s: Vec<f64> = v.iter().map(|t| -t).collect();
        let mut z = v.to_vec();
        for (k, &c) in cs.iter().enumerate() {
            let r = offs[k]..offs[k + 1];
            if let Cone::Zero(_) = c {
                s[r.clone()].iter_mut().for_each(|t| *t = 0.0);
                continue;
            }
            cones::shift_into(c, &mut s[r.clone()]);
            cones::shift_into(c, &mut z[r]);
        }
        (x, s, z)
    };
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let mut status = Status::IterationLimit;
    let mut iterations = 0;
    let bnorm = inf_norm(&prob.b);
    let qnorm = inf_norm(&prob.q);
    let mut last = (f64::NAN, f64::NAN, f64::INFINITY, f64::INFINITY);
    let mut stalls = 0;

    for it in 0..=opts.max_iter {
        iterations = it;
        // residuals in scaled space
        let px: Vec<f64> = sc.p.iter().zip(&x).map(|(p, x)| p * x).collect();
        let xpx = dot(&x, &px);
        let atz = sc.at.mul(&z);
        let ax = sc.a.mul(&x);
        let rx: Vec<f64> = (0..n).map(|j| px[j] + atz[j] + sc.q[j] * tau).collect();
        let rz: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - sc.b[i] * tau).collect();
        let rtau = dot(&sc.q, &x) + dot(&sc.b, &z) + kappa + xpx / tau;

        // convergence in original units
        let (xo, so, zo) = unscale(&sc, &x, &s, &z, tau);
        let pxo: Vec<f64> = prob.p.iter().zip(&xo).map(|(p, x)| p * x).collect();
        let xpxo = dot(&xo, &pxo);
        let pobj = 0.5 * xpxo + dot(&prob.q, &xo);
        let dobj = -0.5 * xpxo - dot(&prob.b, &zo);
        let axo = prob.a.mul(&xo);
        let res_p = inf_norm(&(0..m).map(|i| axo[i] + so[i] - prob.b[i]).collect::<Vec<_>>());
        let atzo = prob.a.mul_t(&zo);
        let res_d = inf_norm(&(0..n).map(|j| pxo[j] + atzo[j] + prob.q[j]).collect::<Vec<_>>());
        let gap = (pobj - dobj).abs();
        let feas_p = res_p <= opts.feas_tol * (1.0 + bnorm + inf_norm(&xo).max(inf_norm(&so)));
        let feas_d = res_d <= opts.feas_tol * (1.0 + qnorm + inf_norm(&xo).max(inf_norm(&zo)));
        let gap_ok = gap <= opts.opt_tol * pobj.abs().min(dobj.abs()).max(1.0);
        last = (pobj, dobj, res_p, res_d);
        if opts.trace {
            eprintln!(
                "conic it={it} pobj={pobj:.9e} dobj={dobj:.9e} res_p={res_p:.2e} res_d={res_d:.2e} tau={tau:.2e} kappa={kappa:.2e}"
            );
        }
        if feas_p && feas_d && gap_ok {
            status = Status::Optimal;
            break;
        }
        // infeasibility certificates on the unnormalized iterate
        let zc: Vec<f64> = z.iter().zip(&sc.e).map(|(z, e)| z * e).collect();
        let btz = dot(&prob.b, &zc);
        let zn = inf_norm(&zc).max(1e-300);
        if btz < 0.0 && inf_norm(&prob.a.mul_t(&zc)) / zn <= 1e-8 * (-btz / zn) && -btz / zn > 1e-10 {
            status = Status::Infeasible;
            break;
        }
        let xc: Vec<f64> = x.iter().zip(&sc.d).map(|(x, d)| x * d).collect();
        let qtx = dot(&prob.q, &xc);
        let xn = inf_norm(&xc).max(1e-300);
        if qtx < 0.0 {
            let pxc: Vec<f64> = prob.p.iter().zip(&xc).map(|(p, x)| p * x).collect();
            let sc_: Vec<f64> = s.iter().zip(&sc.e).map(|(s, e)| s / e).collect();
            let axs: Vec<f64> = prob.a.mul(&xc).iter().zip(&sc_).map(|(a, s)| a + s).collect();
            let lim = 1e-8 * (-qtx / xn);
            if inf_norm(&pxc) / xn <= lim && inf_norm(&axs) / xn <= lim && -qtx / xn > 1e-10 {
                status = Status::Unbounded;
                break;
            }
        }
        if it == opts.max_iter {
            break;
        }
        if let Some(limit) = opts.time_limit {
            if start.elapsed().as_secs_f64() > limit {
                status = Status::TimeLimit;
                break;
            }
        }

        let mu = (cones::complementarity(cs, &s, &z) + tau * kappa) / (nu + 1.0);
        let scaling = Scaling::new(cs, &s, &z);
        let w2 = scaling.w2_entries(0, 1.0);
        let Some(solve) = kkt.solve_fn(w2) else {
            status = Status::InfeasiblePoint;
            break;
        };
        let mut rhs1: Vec<f64> = sc.q.iter().map(|v| -v).collect();
        rhs1.extend_from_slice(&sc.b);
        let sol1 = solve(&rhs1);
        if sol1.iter().any(|v| !v.is_finite()) {
            status = Status::InfeasiblePoint;
            break;
        }
        let (x1, z1) = sol1.split_at(n);
        let px1: Vec<f64> = sc.p.iter().zip(x1).map(|(p, v)| p * v).collect();

        // one Newton direction for a given centering / correction
        let direction = |dx: &[f64], dz: &[f64], dtau: f64, rs: &[f64], rk: f64| {
            let wl = scaling.apply(&scaling.lambda_div(rs));
            let mut rhs: Vec<f64> = dx.iter().map(|v| -v).collect();
            rhs.extend((0..m).map(|i| -dz[i] - wl[i]));
            let sol2 = solve(&rhs);
            let (x2, z2) = sol2.split_at(n);
            let px2: Vec<f64> = sc.p.iter().zip(x2).map(|(p, v)| p * v).collect();
            let num = -dtau - rk / tau - dot(&sc.q, x2) - dot(&sc.b, z2) - 2.0 * dot(&x, &px2) / tau;
            let den = dot(&sc.q, x1) + dot(&sc.b, z1) - kappa / tau + 2.0 * dot(&x, &px1) / tau - xpx / (tau * tau);
            let dt = num / den;
            let ddx: Vec<f64> = (0..n).map(|j| x2[j] + dt * x1[j]).collect();
            let ddz: Vec<f64> = (0..m).map(|i| z2[i] + dt * z1[i]).collect();
            let w2dz = scaling.apply_w2(&ddz);
            let dds: Vec<f64> = (0..m).map(|i| if zero_rows[i] { 0.0 } else { wl[i] - w2dz[i] }).collect();
            let dk = (rk - kappa * dt) / tau;
            (ddx, dds, ddz, dt, dk)
        };
        let step_len = |ds: &[f64], dz: &[f64], dt: f64, dk: f64| {
            let mut a = cones::max_step_all(cs, &s, ds).min(cones::max_step_all(cs, &z, dz));
            if dt < 0.0 {
                a = a.min(-tau / dt);
            }
            if dk < 0.0 {
                a = a.min(-kappa / dk);
            }
            a
        };

        // predictor
        let lam2 = cones::jordan_all(cs, &scaling.lambda, &scaling.lambda);
        let rs_aff: Vec<f64> = lam2.iter().map(|v| -v).collect();
        let (_, dsa, dza, dta, dka) = direction(&rx, &rz, rtau, &rs_aff, -tau * kappa);
        let alpha_aff = step_len(&dsa, &dza, dta, dka).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let wds = scaling.apply_inv(&dsa);
        let wdz = scaling.apply(&dza);
        let eta = cones::jordan_all(cs, &wds, &wdz);
        let e = cones::unit(cs, sigma * mu);
        let rs: Vec<f64> = (0..m).map(|i| -lam2[i] - eta[i] + e[i]).collect();
        let rk = sigma * mu - tau * kappa - dta * dka;
        let f = 1.0 - sigma;
        let drx: Vec<f64> = rx.iter().map(|v| v * f).collect();
        let drz: Vec<f64> = rz.iter().map(|v| v * f).collect();
        let (dx, ds, dz, dt, dk) = direction(&drx, &drz, rtau * f, &rs, rk);
        let alpha = (0.99 * step_len(&ds, &dz, dt, dk)).min(1.0);
        if !(alpha > 1e-12) || dx.iter().chain(&dz).any(|v| !v.is_finite()) {
            stalls += 1;
            if stalls > 2 {
                status = Status::InfeasiblePoint;
                break;
            }
            continue;
        }
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..m {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
        tau += alpha * dt;
        kappa += alpha * dk;
        // rescale the embedding when τ and κ drift far from one
        let norm = tau.max(kappa);
        if !(1e-20..=1e20).contains(&norm) {
            break;
        }
    }

    let (xo, so, zo) = unscale(&sc, &x, &s, &z, tau);
    if status == Status::IterationLimit || status == Status::InfeasiblePoint || status == Status::TimeLimit {
        // report near-optimal iterates as feasible
        let scale = 1.0 + bnorm.max(qnorm) + inf_norm(&xo);
        if last.2 <= 1e-6 * scale && last.3 <= 1e-6 * scale && status != Status::TimeLimit {
            status = Status::Feasible;
        }
    }
    ConicResult {
        x: xo,
        s: so,
        z: zo,
        status,
        iterations,
        primal_objective: last.0,
        dual_objective: last.1,
        primal_residual: last.2,
        dual_residual: last.3,
    }
}
