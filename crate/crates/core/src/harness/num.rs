//! Random network-utility instances: maximize `Σ log sᵢ` over source rates
//! subject to flow conservation and arc capacities.
//!
//! Every undirected link carries two arcs (one per direction) with the same
//! capacity. Sink nodes absorb flow and have no conservation constraint.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumParams {
    pub nodes: usize,
    pub max_degree: usize,
    /// Probability of each extra link on top of the spanning tree.
    pub edge_prob: f64,
    pub sinks: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// Capacities are drawn on a 1/8 grid from `[c_lo, c_hi]`.
    pub c_lo: f64,
    pub c_hi: f64,
}

impl Default for NumParams {
    fn default() -> Self {
        Self {
            nodes: 10,
            max_degree: 4,
            edge_prob: 0.3,
            sinks: 3,
            s_min: 0.5,
            s_max: 2.0,
            c_lo: 0.5,
            c_hi: 1.5,
        }
    }
}

impl NumParams {
    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Params(m.to_string()));
        if self.nodes < 2 {
            return bad("need at least 2 nodes");
        }
        if self.max_degree < 1 {
            return bad("max degree must be >= 1");
        }
        if self.sinks == 0 || self.sinks >= self.nodes {
            return bad("need 1 <= sinks < nodes");
        }
        if !(self.s_min > 0.0 && self.s_min <= self.s_max) {
            return bad("need 0 < s_min <= s_max");
        }
        if !(self.c_lo > 0.0 && self.c_lo <= self.c_hi) {
            return bad("need 0 < c_lo <= c_hi");
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return bad("edge_prob must be in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub u: usize,
    pub v: usize,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumProblem {
    pub params: NumParams,
    pub seed: u64,
    pub links: Vec<Link>,
    pub is_sink: Vec<bool>,
}

/// Directed arc `2e` is `u → v` of link `e`, arc `2e + 1` is `v → u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub tail: usize,
    pub head: usize,
    pub link: usize,
}

impl NumProblem {
    pub fn nodes(&self) -> usize {
        self.is_sink.len()
    }

    pub fn arcs(&self) -> Vec<Arc> {
        self.links
            .iter()
            .enumerate()
            .flat_map(|(e, l)| {
                [
                    Arc { tail: l.u, head: l.v, link: e },
                    Arc { tail: l.v, head: l.u, link: e },
                ]
            })
            .collect()
    }

    pub fn arc_cap(&self, arc: usize) -> f64 {
        self.links[arc / 2].cap
    }

    /// Outgoing and incoming arc indices of node `i`, in link order.
    pub fn incident(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let mut out = Vec::new();
        let mut inc = Vec::new();
        for (e, l) in self.links.iter().enumerate() {
            if l.u == i {
                out.push(2 * e);
                inc.push(2 * e + 1);
            } else if l.v == i {
                out.push(2 * e + 1);
                inc.push(2 * e);
            }
        }
        (out, inc)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.links.iter().filter(|l| l.u == i || l.v == i).count()
    }

    pub fn sources(&self) -> Vec<usize> {
        (0..self.nodes()).filter(|&i| !self.is_sink[i]).collect()
    }

    /// Source with the largest degree (lowest index on ties).
    pub fn target_node(&self) -> usize {
        let mut best = (0, usize::MAX);
        for i in self.sources() {
            let d = self.degree(i);
            if best.1 == usize::MAX || d > best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    pub fn is_connected(&self) -> bool {
        let n = self.nodes();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for l in &self.links {
                for (a, b) in [(l.u, l.v), (l.v, l.u)] {
                    if a == i && !seen[b] {
                        seen[b] = true;
                        queue.push_back(b);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Largest total rate that can be routed to the sinks when every source
    /// sends at most `per_source`.
    pub fn max_flow(&self, per_source: f64) -> f64 {
        let n = self.nodes();
        let (src, snk) = (n, n + 1);
        let mut cap = vec![vec![0.0f64; n + 2]; n + 2];
        for l in &self.links {
            cap[l.u][l.v] += l.cap;
            cap[l.v][l.u] += l.cap;
        }
        for (i, &sink) in self.is_sink.iter().enumerate() {
            if sink {
                cap[i][snk] = f64::INFINITY;
            } else {
                cap[src][i] = per_source;
            }
        }
        edmonds_karp(&mut cap, src, snk)
    }
}

fn edmonds_karp(cap: &mut [Vec<f64>], s: usize, t: usize) -> f64 {
    let n = cap.len();
    let mut total = 0.0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if prev[v] == usize::MAX && cap[u][v] > 1e-12 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            return total;
        }
        let mut push = f64::INFINITY;
        let mut v = t;
        while v != s {
            push = push.min(cap[prev[v]][v]);
            v = prev[v];
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        total += push;
    }
}

/// Margin on `s_min` required by the feasibility check, so a strictly
/// feasible rate profile exists.
const FEASIBILITY_MARGIN: f64 = 1.01;

pub fn gen_num_problem(params: NumParams, seed: u64) -> Result<NumProblem, HarnessError> {
    params.validate()?;
    let n = params.nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut degree = vec![0usize; n];
    let mut adjacent = vec![vec![false; n]; n];
    let mut pairs = Vec::new();
    for k in 1..n {
        let open: Vec<usize> = order[..k]
            .iter()
            .cloned()
            .filter(|&j| degree[j] < params.max_degree)
            .collect();
        let &j = open
            .get(rng.random_range(0..open.len().max(1)))
            .ok_or_else(|| HarnessError::Infeasible("degree cap blocks a spanning tree".into()))?;
        let i = order[k];
        pairs.push((i.min(j), i.max(j)));
        degree[i] += 1;
        degree[j] += 1;
        adjacent[i][j] = true;
        adjacent[j][i] = true;
    }
    for i in 0..n {
        for j in i + 1..n {
            let draw = rng.random::<f64>();
            if !adjacent[i][j]
                && degree[i] < params.max_degree
                && degree[j] < params.max_degree
                && draw < params.edge_prob
            {
                pairs.push((i, j));
                degree[i] += 1;
                degree[j] += 1;
                adjacent[i][j] = true;
                adjacent[j][i] = true;
            }
        }
    }
    pairs.sort_unstable();
    let steps = ((params.c_hi - params.c_lo) * 8.0).floor() as u32;
    let c_lo_grid = (params.c_lo * 8.0).ceil() / 8.0;
    let links = pairs
        .into_iter()
        .map(|(u, v)| Link {
            u,
            v,
            cap: c_lo_grid + rng.random_range(0..=steps) as f64 / 8.0,
        })
        .collect();
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let mut is_sink = vec![false; n];
    for &i in &nodes[..params.sinks] {
        is_sink[i] = true;
    }
    let num = NumProblem {
        params,
        seed,
        links,
        is_sink,
    };
    let demand = params.s_min * FEASIBILITY_MARGIN;
    let need = demand * num.sources().len() as f64;
    if num.max_flow(demand) < need - 1e-9 {
        return Err(HarnessError::Infeasible(format!(
            "capacities cannot carry s_min from every source (seed {seed})"
        )));
    }
    Ok(num)
}

/// First seed at or after `seed` that yields a feasible instance.
pub fn gen_feasible(params: NumParams, seed: u64, tries: u64) -> Result<NumProblem, HarnessError> {
    let mut last = None;
    for s in seed..seed.saturating_add(tries) {
        match gen_num_problem(params, s) {
            Ok(p) => return Ok(p),
            Err(HarnessError::Infeasible(m)) => last = Some(m),
            Err(e) => return Err(e),
        }
    }
    Err(HarnessError::Infeasible(last.unwrap_or_default()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_nodes_one_link() {
        let params = NumParams {
            nodes: 2,
            sinks: 1,
            c_lo: 4.0,
            c_hi: 4.0,
            ..NumParams::default()
        };
        let p = gen_num_problem(params, 0).unwrap();
        assert_eq!(p.links.len(), 1);
        assert_eq!(p.links[0].cap, 4.0);
        assert_eq!(p.sources().len(), 1);
        assert_eq!(p.max_flow(1.0), 1.0);
    }

    #[test]
    fn deterministic_and_structured() {
        let a = gen_num_problem(NumParams::default(), 7).unwrap();
        let b = gen_num_problem(NumParams::default(), 7).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        assert!((0..a.nodes()).all(|i| a.degree(i) <= 4));
        assert!(a.links.iter().all(|l| (l.cap * 8.0).fract() == 0.0 && l.cap >= 0.5));
        assert!(!a.is_sink[a.target_node()]);
    }

    #[test]
    fn max_flow_small_graph() {
        // Path 0 - 1 - 2 with sink 2: both sources share the 1→2 link.
        let p = NumProblem {
            params: NumParams::default(),
            seed: 0,
            links: vec![Link { u: 0, v: 1, cap: 1.0 }, Link { u: 1, v: 2, cap: 1.5 }],
            is_sink: vec![false, false, true],
        };
        assert_eq!(p.max_flow(1.0), 1.5);
        assert_eq!(p.max_flow(0.5), 1.0);
        let (out, inc) = p.incident(1);
        assert_eq!(out, vec![1, 2]);
        assert_eq!(inc, vec![0, 3]);
    }

    #[test]
    fn rejects_bad_params() {
        let p = NumParams {
            sinks: 0,
            ..NumParams::default()
        };
        assert!(matches!(gen_num_problem(p, 0), Err(HarnessError::Params(_))));
    }
}
