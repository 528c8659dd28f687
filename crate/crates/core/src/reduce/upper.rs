use serde::{Deserialize, Serialize};

use super::{lin, BlockTag, Builder, VarTag};
use crate::case::{BilevelInstance, TerminalPolicy};
use crate::solver::{QuadExpr, RowCone};

/// The storage owner's decision problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperLevelModel {
    pub horizon: usize,
    pub rating: f64,
    pub capacity: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub initial_energy: f64,
    pub terminal: TerminalPolicy,
    /// Reactive bids allowed.
    pub reactive: bool,
}

impl UpperLevelModel {
    pub fn new(inst: &BilevelInstance) -> Self {
        let s = &inst.storage;
        Self {
            horizon: inst.horizon(),
            rating: s.rating,
            capacity: s.capacity,
            eta_ch: s.eta_ch,
            eta_dis: s.eta_dis,
            initial_energy: s.initial_energy(),
            terminal: s.terminal,
            reactive: inst.reactive_bids,
        }
    }

    pub(crate) fn emit(&self, b: &mut Builder, reactive: bool, binaries: bool) -> UpperVars {
        let (s, up) = (self.rating, VarTag::Upper);
        let mut v = UpperVars::default();
        for t in 0..self.horizon {
            v.soe.push(b.var(format!("soe[{t}]"), 0.0, self.capacity, up));
            v.p_ch.push(b.var(format!("p_ch[{t}]"), 0.0, s, up));
            v.p_dis.push(b.var(format!("p_dis[{t}]"), 0.0, s, up));
            v.p_es.push(b.var(format!("p_es[{t}]"), -s, s, up));
            if reactive {
                v.q_ch.push(b.var(format!("q_ch[{t}]"), 0.0, s, up));
                v.q_dis.push(b.var(format!("q_dis[{t}]"), 0.0, s, up));
                v.q_es.push(b.var(format!("q_es[{t}]"), -s, s, up));
            }
            if binaries {
                v.xp.push(b.binary(format!("xp[{t}]"), up));
                if reactive {
                    v.xq.push(b.binary(format!("xq[{t}]"), up));
                }
            }
        }

        let mut eq = Vec::new();
        for t in 0..self.horizon {
            // soe[t] = soe[t−1] + η·p_ch − p_dis/η
            let mut r = lin(&[(v.soe[t], 1.0), (v.p_ch[t], -self.eta_ch), (v.p_dis[t], 1.0 / self.eta_dis)], 0.0);
            if t == 0 {
                r.add_const(-self.initial_energy);
            } else {
                r.add_linear(v.soe[t - 1], -1.0);
            }
            eq.push(r);
            eq.push(lin(&[(v.p_es[t], 1.0), (v.p_dis[t], -1.0), (v.p_ch[t], 1.0)], 0.0));
            if reactive {
                eq.push(lin(&[(v.q_es[t], 1.0), (v.q_dis[t], -1.0), (v.q_ch[t], 1.0)], 0.0));
            }
        }
        if self.terminal == TerminalPolicy::Fixed && self.horizon > 0 {
            eq.push(lin(&[(v.soe[self.horizon - 1], 1.0)], -self.initial_energy));
        }
        b.rows("storage balance", BlockTag::Upper, RowCone::Eq, eq);

        let mut geq = Vec::new();
        let sides = [(&v.xp, &v.p_ch, &v.p_dis), (&v.xq, &v.q_ch, &v.q_dis)];
        for (x, ch, dis) in sides {
            for t in 0..x.len() {
                geq.push(lin(&[(x[t], s), (ch[t], -1.0)], 0.0));
                geq.push(lin(&[(x[t], -s), (dis[t], -1.0)], s));
            }
        }
        b.rows("charge or discharge", BlockTag::Upper, RowCone::Geq, geq);

        if reactive {
            for t in 0..self.horizon {
                let rows = vec![QuadExpr::constant(s), QuadExpr::var(v.p_es[t]), QuadExpr::var(v.q_es[t])];
                b.rows(format!("apparent power[{t}]"), BlockTag::Upper, RowCone::Soc, rows);
            }
        }
        v
    }
}

/// NLP indices of the upper-level variables, per hour. Reactive and
/// binary lists are empty when unused.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpperVars {
    pub soe: Vec<usize>,
    pub p_ch: Vec<usize>,
    pub p_dis: Vec<usize>,
    pub p_es: Vec<usize>,
    pub q_ch: Vec<usize>,
    pub q_dis: Vec<usize>,
    pub q_es: Vec<usize>,
    /// `1` allows charging, `0` discharging.
    pub xp: Vec<usize>,
    pub xq: Vec<usize>,
}
