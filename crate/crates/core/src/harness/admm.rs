//! Consensus ADMM over duplicated arc flows.
//!
//! Each arc flow has two copies, one at its tail (as an outgoing flow) and
//! one at its head (as an incoming flow). A round solves every node's local
//! problem
//! `min −log s + ⟨p, t⟩ + μ‖t − g‖²  s.t.  Σ t_out − Σ t_in = s,  box`
//! (sinks drop `s` and the equality), then sets `g` to the per-arc average of
//! the two copies and updates `p ← p + μ(t − g)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::num::NumProblem;
use super::oracle::{oracle_solve, OracleOptions};
use super::HarnessError;
use crate::par::Exec;
use crate::problem::{BoxSet, EqualityConstraints, Objective, Problem, Term};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmOptions {
    pub mu: f64,
    pub rounds: usize,
    pub exec: Exec,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            mu: 1.0,
            rounds: 30,
            exec: Exec::default(),
        }
    }
}

/// Per-node copies, prices and consensus targets (all of length `2·degree`,
/// outgoing arcs first).
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub copies: Vec<DVector<f64>>,
    pub prices: Vec<DVector<f64>>,
    pub targets: Vec<DVector<f64>>,
    pub rates: Vec<f64>,
    pub mu: f64,
    pub round: usize,
}

#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    /// `max_arc |t^(tail) − t^(head)|` after the round.
    pub residual: f64,
    /// Local problems solved this round at source nodes.
    pub instances: Vec<(usize, Problem)>,
}

#[derive(Debug, Clone)]
pub struct AdmmTrace {
    pub target: usize,
    pub rounds: Vec<RoundRecord>,
    pub state: ConsensusState,
}

impl AdmmTrace {
    /// The target node's local problem from every round.
    pub fn target_instances(&self) -> Vec<Problem> {
        self.rounds
            .iter()
            .filter_map(|r| {
                r.instances
                    .iter()
                    .find(|(i, _)| *i == self.target)
                    .map(|(_, p)| p.clone())
            })
            .collect()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.residual).collect()
    }
}

struct Layout {
    out: Vec<usize>,
    inc: Vec<usize>,
}

impl Layout {
    fn dim(&self) -> usize {
        self.out.len() + self.inc.len()
    }

    fn caps(&self, num: &NumProblem) -> Vec<f64> {
        self.out
            .iter()
            .chain(&self.inc)
            .map(|&a| num.arc_cap(a))
            .collect()
    }
}

/// Local problem of source node `i` at prices `p` and targets `g`.
pub fn local_problem(
    num: &NumProblem,
    i: usize,
    p: &DVector<f64>,
    g: &DVector<f64>,
    mu: f64,
) -> Result<Problem, HarnessError> {
    let (out, inc) = num.incident(i);
    let lay = Layout { out, inc };
    let d2 = lay.dim();
    let n = 1 + d2;
    let prm = &num.params;
    let mut e0 = DVector::zeros(n);
    e0[0] = 1.0;
    let mut price_row = DVector::zeros(n);
    price_row.rows_mut(1, d2).copy_from(p);
    let mut sel = DMatrix::zeros(d2, n);
    for k in 0..d2 {
        sel[(k, k + 1)] = 1.0;
    }
    let terms = vec![
        Term::neg_log(e0, 0.0, prm.s_min, prm.s_max),
        Term::linear(price_row, 0.0),
        Term::quadratic(2.0 * mu, sel, g.clone()),
    ];
    let mut a = DMatrix::zeros(1, n);
    a[(0, 0)] = -1.0;
    for k in 0..lay.out.len() {
        a[(0, 1 + k)] = 1.0;
    }
    for k in 0..lay.inc.len() {
        a[(0, 1 + lay.out.len() + k)] = -1.0;
    }
    let mut lo = vec![prm.s_min];
    let mut hi = vec![prm.s_max];
    lo.extend(std::iter::repeat_n(0.0, d2));
    hi.extend(lay.caps(num));
    let problem = Problem::new(
        Objective::Separable { terms },
        EqualityConstraints::new(a, DVector::zeros(1))?,
        BoxSet::new(DVector::from_vec(lo), DVector::from_vec(hi))?,
    )?;
    Ok(problem)
}

/// Reference local solver: the high-accuracy oracle.
pub fn oracle_subsolver(problem: &Problem) -> Result<DVector<f64>, HarnessError> {
    Ok(oracle_solve(problem, &OracleOptions::default())?.x())
}

pub fn initial_state(num: &NumProblem, mu: f64) -> ConsensusState {
    let dims: Vec<usize> = (0..num.nodes()).map(|i| 2 * num.degree(i)).collect();
    let zeros = |d: &usize| DVector::zeros(*d);
    ConsensusState {
        copies: dims.iter().map(zeros).collect(),
        prices: dims.iter().map(zeros).collect(),
        targets: dims.iter().map(zeros).collect(),
        rates: vec![0.0; num.nodes()],
        mu,
        round: 0,
    }
}

pub fn consensus_admm_driver<F>(
    num: &NumProblem,
    opts: &AdmmOptions,
    solver: F,
) -> Result<AdmmTrace, HarnessError>
where
    F: Fn(&Problem) -> Result<DVector<f64>, HarnessError> + Sync + Send,
{
    if !(opts.mu > 0.0 && opts.mu.is_finite()) {
        return Err(HarnessError::Params(format!("mu must be > 0, got {}", opts.mu)));
    }
    let n_nodes = num.nodes();
    let layouts: Vec<Layout> = (0..n_nodes)
        .map(|i| {
            let (out, inc) = num.incident(i);
            Layout { out, inc }
        })
        .collect();
    // Slot of each arc at its tail (outgoing) and head (incoming).
    let arcs = num.arcs();
    let mut tail_slot = vec![0; arcs.len()];
    let mut head_slot = vec![0; arcs.len()];
    for (i, lay) in layouts.iter().enumerate() {
        for (k, &a) in lay.out.iter().enumerate() {
            debug_assert_eq!(arcs[a].tail, i);
            tail_slot[a] = k;
        }
        for (k, &a) in lay.inc.iter().enumerate() {
            debug_assert_eq!(arcs[a].head, i);
            head_slot[a] = lay.out.len() + k;
        }
    }

    let mu = opts.mu;
    let mut state = initial_state(num, mu);
    let mut rounds = Vec::with_capacity(opts.rounds);
    for t in 0..opts.rounds {
        let nodes: Vec<usize> = (0..n_nodes).collect();
        let st = &state;
        let solved = opts.exec.map(&nodes, |&i| -> Result<_, HarnessError> {
            let lay = &layouts[i];
            if num.is_sink[i] {
                let caps = lay.caps(num);
                let t_loc = DVector::from_fn(lay.dim(), |k, _| {
                    (st.targets[i][k] - st.prices[i][k] / (2.0 * mu)).clamp(0.0, caps[k])
                });
                return Ok((0.0, t_loc, None));
            }
            let prob = local_problem(num, i, &st.prices[i], &st.targets[i], mu)?.with_meta(
                serde_json::json!({"node": i, "round": t, "seed": num.seed, "mu": mu}),
            );
            let x = solver(&prob)?;
            Ok((x[0], x.rows(1, lay.dim()).into_owned(), Some(prob)))
        });
        let mut instances = Vec::new();
        for (i, r) in solved.into_iter().enumerate() {
            let (s, t_loc, prob) = r?;
            state.rates[i] = s;
            state.copies[i] = t_loc;
            if let Some(p) = prob {
                instances.push((i, p));
            }
        }
        let mut residual = 0.0f64;
        for (a, arc) in arcs.iter().enumerate() {
            let x_tail = state.copies[arc.tail][tail_slot[a]];
            let x_head = state.copies[arc.head][head_slot[a]];
            residual = residual.max((x_tail - x_head).abs());
            let avg = 0.5 * (x_tail + x_head);
            state.targets[arc.tail][tail_slot[a]] = avg;
            state.targets[arc.head][head_slot[a]] = avg;
        }
        for i in 0..n_nodes {
            let step = (&state.copies[i] - &state.targets[i]) * mu;
            state.prices[i] += step;
        }
        state.round = t + 1;
        rounds.push(RoundRecord {
            round: t,
            residual,
            instances,
        });
    }
    Ok(AdmmTrace {
        target: num.target_node(),
        rounds,
        state,
    })
}
