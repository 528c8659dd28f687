use storage_bilevel::case::{build_instance, parse_case, BilevelInstance, LoadProfile, LowerLevelModel, StorageSpec};
use storage_bilevel::conic::evaluate_primal;
use storage_bilevel::data;
use storage_bilevel::opf::{build_lower_level, screen_limits, solve_lower_level, thermal_violations, Screen};
use storage_bilevel::solver::SolveOptions;

fn instance(text: &str, bus: usize, model: LowerLevelModel, profile: &LoadProfile) -> BilevelInstance {
    build_instance(parse_case(text).unwrap(), profile, StorageSpec::new(bus), model, 0.85).unwrap()
}

fn idle(inst: &BilevelInstance) -> Vec<f64> {
    vec![0.0; inst.horizon()]
}

#[test]
fn price_matches_finite_difference() {
    let opts = SolveOptions::default();
    for model in [LowerLevelModel::Dc, LowerLevelModel::Jabr] {
        let inst = instance(data::CASE3, 3, model, &LoadProfile::flat(1));
        let bundle = build_lower_level(&inst, &Screen::all(&inst)).unwrap();
        let base = solve_lower_level(&bundle, &idle(&inst), &idle(&inst), &opts).unwrap();
        for i in 0..3 {
            let h = 1e-4;
            let mut bumped = inst.clone();
            bumped.loads[0].pd[i] += h;
            let b2 = build_lower_level(&bumped, &Screen::all(&bumped)).unwrap();
            let op = solve_lower_level(&b2, &idle(&inst), &idle(&inst), &opts).unwrap();
            let fd = (op.primal_objective - base.primal_objective) / h;
            let lam = base.prices.lambda1[0][i];
            assert!((fd - lam).abs() <= 0.05 * lam.abs().max(1.0), "{model:?} bus {i}: fd {fd} price {lam}");
        }
    }
}

#[test]
fn uncongested_lossless_prices_are_uniform() {
    let mut net = parse_case(data::CASE5).unwrap();
    for br in &mut net.branches {
        br.rate = None;
    }
    let inst = build_instance(net, &LoadProfile::flat(2), StorageSpec::new(2), LowerLevelModel::Dc, 0.85).unwrap();
    let bundle = build_lower_level(&inst, &Screen::none()).unwrap();
    let op = solve_lower_level(&bundle, &idle(&inst), &idle(&inst), &SolveOptions::default()).unwrap();
    for hour in &op.prices.lambda1 {
        let (lo, hi) = hour.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi - lo <= 1e-6, "{hour:?}");
    }
}

#[test]
fn dc_balance_holds_per_hour() {
    let inst = instance(data::CASE3, 2, LowerLevelModel::Dc, &LoadProfile::winter_weekday());
    let bundle = build_lower_level(&inst, &Screen::all(&inst)).unwrap();
    let bids: Vec<f64> = (0..24).map(|t| if t % 2 == 0 { 0.3 } else { -0.3 }).collect();
    let op = solve_lower_level(&bundle, &bids, &[], &SolveOptions::default()).unwrap();
    for (t, bid) in bids.iter().enumerate() {
        let (pd, _) = inst.bus_loads(t);
        let gen: f64 = bundle.pg[t].iter().map(|v| op.x[v.0]).sum();
        let net = gen + bid - pd.iter().sum::<f64>();
        assert!(net.abs() <= 1e-7, "hour {t}: {net}");
    }
}

#[test]
fn jabr_cones_hold_at_solution() {
    for (text, bus) in [(data::CASE3, 3), (data::CASE5, 2)] {
        let inst = instance(text, bus, LowerLevelModel::Jabr, &LoadProfile::winter_weekday());
        let opts = SolveOptions { feas_tol: 1e-10, opt_tol: 1e-10, ..SolveOptions::default() };
        let (_, bundle, op) = screen_limits(&inst, &Screen::none(), &idle(&inst), &idle(&inst), &opts).unwrap();
        assert_eq!(op.status, storage_bilevel::solver::Status::Optimal);
        let prog = bundle.with_bids(&idle(&inst), &idle(&inst)).unwrap();
        let ev = evaluate_primal(&prog, &op.x).unwrap();
        assert!(ev.infeasibility <= 1e-8, "{}", ev.infeasibility);
        assert!(thermal_violations(&inst, &bundle, &op.x, 1e-6).is_empty());
        assert!(op.relative_gap_pct().abs() < 1e-6);
    }
}

// A small complex type and a Newton power flow, used to build an AC-feasible
// dispatch that the relaxations must not exceed.
#[derive(Clone, Copy, Debug)]
struct C(f64, f64);

impl C {
    fn mul(self, o: C) -> C {
        C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
    fn add(self, o: C) -> C {
        C(self.0 + o.0, self.1 + o.1)
    }
    fn conj(self) -> C {
        C(self.0, -self.1)
    }
    fn inv(self) -> C {
        let d = self.0 * self.0 + self.1 * self.1;
        C(self.0 / d, -self.1 / d)
    }
    fn polar(m: f64, a: f64) -> C {
        C(m * a.cos(), m * a.sin())
    }
}

struct Ac {
    ybus: Vec<Vec<C>>,
    branches: Vec<(usize, usize, C, C, C, C)>,
}

fn ac_model(inst: &BilevelInstance) -> Ac {
    let net = &inst.network;
    let n = net.buses.len();
    let mut ybus = vec![vec![C(0.0, 0.0); n]; n];
    let mut branches = Vec::new();
    for (k, br) in net.branches.iter().enumerate() {
        let (f, t) = net.branch_ends(k);
        let ys = C(br.r, br.x).inv();
        let tap = C::polar(br.tap, br.shift);
        let half = C(0.0, br.b / 2.0);
        let tt = br.tap * br.tap;
        let yff = ys.add(half).mul(C(1.0 / tt, 0.0));
        let yft = C(-1.0, 0.0).mul(ys).mul(tap.conj().inv());
        let ytf = C(-1.0, 0.0).mul(ys).mul(tap.inv());
        let ytt = ys.add(half);
        ybus[f][f] = ybus[f][f].add(yff);
        ybus[f][t] = ybus[f][t].add(yft);
        ybus[t][f] = ybus[t][f].add(ytf);
        ybus[t][t] = ybus[t][t].add(ytt);
        branches.push((f, t, yff, yft, ytf, ytt));
    }
    for (i, b) in net.buses.iter().enumerate() {
        ybus[i][i] = ybus[i][i].add(C(b.gs, b.bs));
    }
    Ac { ybus, branches }
}

fn injections(ac: &Ac, v: &[C]) -> Vec<C> {
    (0..v.len())
        .map(|i| {
            let cur = (0..v.len()).fold(C(0.0, 0.0), |s, j| s.add(ac.ybus[i][j].mul(v[j])));
            v[i].mul(cur.conj())
        })
        .collect()
}

/// Cost of the AC operating point with every bus at 1.0 p.u., bus 1 as
/// slack and bus 2 producing `p2`; `None` when it breaks a limit.
fn ac_cost(inst: &BilevelInstance, ac: &Ac, p2: f64) -> Option<f64> {
    let (pd, qd) = inst.bus_loads(0);
    let target = [p2 - pd[1], -pd[2]];
    let residual = |a: &[f64; 2]| {
        let v = [C(1.0, 0.0), C::polar(1.0, a[0]), C::polar(1.0, a[1])];
        let s = injections(ac, &v);
        [s[1].0 - target[0], s[2].0 - target[1]]
    };
    let mut ang = [0.0f64; 2];
    for _ in 0..50 {
        let r = residual(&ang);
        if r[0].abs().max(r[1].abs()) < 1e-13 {
            break;
        }
        let h = 1e-7;
        let mut jac = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut a = ang;
            a[c] += h;
            let rp = residual(&a);
            for row in 0..2 {
                jac[row][c] = (rp[row] - r[row]) / h;
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        ang[0] -= (jac[1][1] * r[0] - jac[0][1] * r[1]) / det;
        ang[1] -= (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det;
    }
    let r = residual(&ang);
    if r[0].abs().max(r[1].abs()) > 1e-9 {
        return None;
    }
    let v = [C(1.0, 0.0), C::polar(1.0, ang[0]), C::polar(1.0, ang[1])];
    let s = injections(ac, &v);
    let pg = [s[0].0 + pd[0], p2, s[2].0 + pd[2]];
    let qg = [s[0].1 + qd[0], s[1].1 + qd[1], s[2].1 + qd[2]];
    let net = &inst.network;
    for (g, gen) in net.generators.iter().enumerate() {
        let ok = pg[g] >= gen.pmin - 1e-9 && pg[g] <= gen.pmax + 1e-9 && qg[g] >= gen.qmin && qg[g] <= gen.qmax;
        if !ok {
            return None;
        }
    }
    for (k, &(f, t, yff, yft, ytf, ytt)) in ac.branches.iter().enumerate() {
        let sf = v[f].mul(yff.mul(v[f]).add(yft.mul(v[t])).conj());
        let st = v[t].mul(ytf.mul(v[f]).add(ytt.mul(v[t])).conj());
        if let Some(rate) = net.branches[k].rate {
            if sf.0.hypot(sf.1) > rate || st.0.hypot(st.1) > rate {
                return None;
            }
        }
    }
    Some(net.generators.iter().zip(pg).map(|(g, p)| g.cost.eval(p)).sum())
}

#[test]
fn relaxations_lower_bound_ac_feasible_dispatches() {
    let jabr = instance(data::CASE3, 3, LowerLevelModel::Jabr, &LoadProfile::flat(1));
    let dc = instance(data::CASE3, 3, LowerLevelModel::Dc, &LoadProfile::flat(1));
    let ac = ac_model(&jabr);
    let costs: Vec<f64> = (0..=60).filter_map(|k| ac_cost(&jabr, &ac, 0.05 * k as f64)).collect();
    assert!(!costs.is_empty(), "no AC-feasible fixture point");
    let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
    for inst in [&jabr, &dc] {
        let bundle = build_lower_level(inst, &Screen::all(inst)).unwrap();
        let op = solve_lower_level(&bundle, &[0.0], &[0.0], &SolveOptions::default()).unwrap();
        assert!(op.primal_objective <= best + 1e-6, "{:?}: {} > {}", inst.model, op.primal_objective, best);
    }
}
