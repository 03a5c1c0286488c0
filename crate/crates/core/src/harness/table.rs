//! Bound-verification table over the consensus subproblems of one node.

use serde::{Deserialize, Serialize};

use super::admm::{consensus_admm_driver, oracle_subsolver, AdmmOptions};
use super::num::{gen_feasible, NumParams, NumProblem};
use super::oracle::{oracle_solve, OracleOptions, OracleSolution};
use super::HarnessError;
use crate::alm::{run_alm, verify, InnerStats, Verification};
use crate::designer::{design, DesignInput, DesignReport};
use crate::fxp::OverflowPolicy;
use crate::par::Exec;
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub params: NumParams,
    pub seed: u64,
    pub eps: Vec<f64>,
    pub instances: usize,
    pub mu: f64,
    pub alpha: f64,
    pub rho: f64,
    pub policy: OverflowPolicy,
    pub samples: usize,
    /// Not serialized: reports are identical across execution modes.
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            params: NumParams::default(),
            seed: 7,
            eps: vec![1.0, 0.1, 0.01],
            instances: 30,
            mu: 1.0,
            alpha: 0.5,
            rho: 2.0,
            policy: OverflowPolicy::Strict,
            samples: 10_000,
            exec: Exec::default(),
        }
    }
}

/// Generated network, the target node's subproblems and their references.
#[derive(Debug, Clone)]
pub struct Workload {
    pub num: NumProblem,
    pub target: usize,
    pub instances: Vec<Problem>,
    pub references: Vec<OracleSolution>,
    pub consensus_residuals: Vec<f64>,
}

pub fn build_workload(cfg: &TableConfig) -> Result<Workload, HarnessError> {
    let num = gen_feasible(cfg.params, cfg.seed, 1000)?;
    let opts = AdmmOptions {
        mu: cfg.mu,
        rounds: cfg.instances,
        exec: cfg.exec,
    };
    let trace = consensus_admm_driver(&num, &opts, oracle_subsolver)?;
    let instances = trace.target_instances();
    let references = cfg
        .exec
        .map(&instances, |p| oracle_solve(p, &OracleOptions::default()))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Workload {
        target: trace.target,
        consensus_residuals: trace.residuals(),
        num,
        instances,
        references,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub index: usize,
    pub verification: Option<Verification>,
    /// Error message when the strict fixed-point run signalled overflow.
    pub overflow: Option<String>,
    pub saturations: u64,
    pub dual_contained: bool,
    pub eps_out_within: bool,
    pub eps_gp_within: bool,
    pub inner: InnerStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub eps: f64,
    pub fl: u32,
    pub wl: u32,
    pub k_in: u64,
    pub k_out: u64,
    /// Loosest bounds and worst achieved values over the instances.
    pub opt_lo: f64,
    pub opt_achieved: f64,
    pub opt_hi: f64,
    pub feas_achieved: f64,
    pub feas_bound: f64,
    /// Smallest bound/achieved ratio over the instances.
    pub slack_opt: f64,
    pub slack_feas: f64,
    pub instances: usize,
    pub overflow_runs: usize,
    pub saturations: u64,
    pub all_within_bounds: bool,
    pub bounds_within_eps: bool,
    pub dual_contained: bool,
    pub dual_box_admits_all: bool,
    pub error_bounds_respected: bool,
    pub outcomes: Vec<InstanceOutcome>,
}

impl TableRow {
    pub fn passed(&self) -> bool {
        self.overflow_runs == 0
            && self.saturations == 0
            && self.all_within_bounds
            && self.bounds_within_eps
            && self.dual_contained
    }
}

fn slack(bound: f64, achieved: f64) -> f64 {
    if achieved == 0.0 {
        f64::INFINITY
    } else {
        bound / achieved.abs()
    }
}

/// Run the designed fixed-point solver on every instance at one accuracy.
pub fn run_row(
    work: &Workload,
    design: &DesignReport,
    policy: OverflowPolicy,
    exec: Exec,
) -> TableRow {
    let mut cfg = design.alm_config(design.fixed(policy));
    cfg.measure_errors = true;
    let stop = design.stop_config();
    let idx: Vec<usize> = (0..work.instances.len()).collect();
    let outcomes: Vec<InstanceOutcome> = exec.map(&idx, |&i| {
        let prob = &work.instances[i];
        let refsol = &work.references[i];
        match run_alm(prob, &cfg, &stop) {
            Ok(rep) => InstanceOutcome {
                index: i,
                verification: Some(verify(&rep, prob, refsol.f, &refsol.lambda())),
                overflow: None,
                saturations: rep.audit.saturations,
                dual_contained: rep.dual_contained,
                eps_out_within: rep.eps_out_max <= rep.eps_out_bound,
                eps_gp_within: rep.eps_gp_max <= rep.eps_gp_bound,
                inner: rep.inner,
            },
            Err(e) => InstanceOutcome {
                index: i,
                verification: None,
                overflow: Some(e.to_string()),
                saturations: 0,
                dual_contained: false,
                eps_out_within: false,
                eps_gp_within: false,
                inner: InnerStats::default(),
            },
        }
    });

    let verified: Vec<&Verification> = outcomes.iter().filter_map(|o| o.verification.as_ref()).collect();
    let mut row = TableRow {
        eps: design.eps,
        fl: design.fl,
        wl: design.wl,
        k_in: design.k_in,
        k_out: design.k_out,
        opt_lo: 0.0,
        opt_achieved: 0.0,
        opt_hi: 0.0,
        feas_achieved: 0.0,
        feas_bound: 0.0,
        slack_opt: f64::INFINITY,
        slack_feas: f64::INFINITY,
        instances: outcomes.len(),
        overflow_runs: outcomes.iter().filter(|o| o.overflow.is_some()).count(),
        saturations: outcomes.iter().map(|o| o.saturations).sum(),
        all_within_bounds: verified.len() == outcomes.len() && verified.iter().all(|v| v.passed()),
        bounds_within_eps: verified.iter().all(|v| v.worst_bound() <= design.eps),
        dual_contained: outcomes.iter().all(|o| o.dual_contained),
        dual_box_admits_all: verified.iter().all(|v| v.dual_box_admits),
        error_bounds_respected: outcomes.iter().all(|o| o.eps_out_within && o.eps_gp_within),
        outcomes: Vec::new(),
    };
    for (k, v) in verified.iter().enumerate() {
        let b = &v.bounds;
        if k == 0 {
            row.opt_lo = b.opt_lo;
            row.opt_hi = b.opt_hi;
        }
        row.opt_lo = row.opt_lo.min(b.opt_lo);
        row.opt_hi = row.opt_hi.max(b.opt_hi);
        row.feas_bound = row.feas_bound.max(b.feas);
        if v.opt_gap.abs() > row.opt_achieved.abs() {
            row.opt_achieved = v.opt_gap;
        }
        row.feas_achieved = row.feas_achieved.max(v.infeasibility);
        let side = if v.opt_gap < 0.0 { -b.opt_lo } else { b.opt_hi };
        row.slack_opt = row.slack_opt.min(slack(side, v.opt_gap));
        row.slack_feas = row.slack_feas.min(slack(b.feas, v.infeasibility));
    }
    row.outcomes = outcomes;
    row
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableReport {
    pub config: TableConfig,
    pub network_seed: u64,
    pub links: usize,
    pub target_node: usize,
    pub subproblem_dim: usize,
    pub consensus_residuals: Vec<f64>,
    pub designs: Vec<DesignReport>,
    pub rows: Vec<TableRow>,
}

impl TableReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(TableRow::passed)
    }
}

pub fn design_for(work: &Workload, cfg: &TableConfig, eps: f64) -> Result<DesignReport, HarnessError> {
    let mut input = DesignInput::new(&work.instances, eps);
    input.alpha = cfg.alpha;
    input.rho = cfg.rho;
    input.samples = cfg.samples;
    input.seed = cfg.seed;
    input.exec = cfg.exec;
    Ok(design(&input)?)
}

pub fn reproduce_table(cfg: &TableConfig) -> Result<TableReport, HarnessError> {
    let work = build_workload(cfg)?;
    let mut designs = Vec::new();
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        let d = design_for(&work, cfg, eps)?;
        rows.push(run_row(&work, &d, cfg.policy, cfg.exec));
        designs.push(d);
    }
    Ok(TableReport {
        config: cfg.clone(),
        network_seed: work.num.seed,
        links: work.num.links.len(),
        target_node: work.target,
        subproblem_dim: work.instances.first().map(|p| p.n()).unwrap_or(0),
        consensus_residuals: work.consensus_residuals,
        designs,
        rows,
    })
}

/// Text table with the columns `ε | fl-wl | low., opt., up. | feas., bound`,
/// followed by the slack ratios and audit flags.
pub fn render(report: &TableReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<6} | {:<6} | {:>10}  {:>10}  {:>10} | {:>10}  {:>10}\n",
        "eps", "fl-wl", "low.", "opt.", "up.", "feas.", "bound"
    ));
    s.push_str(&format!("{}\n", "-".repeat(84)));
    for r in &report.rows {
        s.push_str(&format!(
            "{:<6} | {:<6} | {:>10.4e}  {:>10.4e}  {:>10.4e} | {:>10.4e}  {:>10.4e}\n",
            r.eps,
            format!("{}-{}", r.fl, r.wl),
            r.opt_lo,
            r.opt_achieved,
            r.opt_hi,
            r.feas_achieved,
            r.feas_bound
        ));
    }
    s.push('\n');
    s.push_str(&format!(
        "{:<6} | {:>10} {:>10} | {:>8} {:>9} {:>6}\n",
        "eps", "slack opt", "slack feas", "overflow", "K_out", "pass"
    ));
    for r in &report.rows {
        s.push_str(&format!(
            "{:<6} | {:>10.1} {:>10.1} | {:>8} {:>9} {:>6}\n",
            r.eps,
            r.slack_opt,
            r.slack_feas,
            r.overflow_runs as u64 + r.saturations,
            r.k_out,
            if r.passed() { "yes" } else { "NO" }
        ));
    }
    s
}
