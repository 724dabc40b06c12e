//! Robbins-Monro augmented Lagrangian method.
//!
//! Each outer iteration approximately minimizes `L(., y^k, c)` over `X` with
//! a fixed number `S^{k+1}` of projected stochastic gradient steps
//! `w_{s+1} = P_X(w_s - gamma_s g_s)`, `gamma_s = tau eta / (s + beta)`, then
//! updates `y^{k+1} = max(0, y^k + c h(x^{k+1}))`. The budget grows
//! geometrically instead of testing subproblem accuracy.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::auglag::{stoch_grad_into, MultiplierVector, PenaltyState, SampleBatch};
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::{MetricsRow, Monitor};
use crate::par;
use crate::problem::StochasticProblem;
use crate::rng::{streams, RngStream};

/// Default budget growth `1.7^{1 + 0.0001}`.
pub fn default_growth() -> f64 {
    1.7f64.powf(1.0001)
}

/// Budget growth `base^{1+q}`.
pub fn growth_from(base: f64, q: f64) -> f64 {
    base.powf(1.0 + q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmalmConfig {
    /// Constant penalty `c`.
    pub c: f64,
    /// Initial budget `S^0`.
    pub s0: u64,
    /// Per-outer-iteration budget multiplier.
    pub budget_growth: f64,
    /// Complexity exponent `q` of the schedule.
    pub q: f64,
    pub tau: f64,
    pub eta: f64,
    pub beta: f64,
    pub batch_obj: usize,
    /// Constraint indices per step; `None` uses every constraint once.
    pub batch_con: Option<usize>,
    pub outer_iters: usize,
    pub seed: u64,
    /// Upper bound on each `S^k`.
    pub budget_cap: Option<u64>,
    /// Upper bound on the cumulative inner-iteration count.
    pub total_cap: u64,
    /// Starting point, projected onto `X`; defaults to `P_X(0)`.
    pub x0: Option<Vec<f64>>,
}

impl Default for RmalmConfig {
    fn default() -> Self {
        Self {
            c: 10.0,
            s0: 5,
            budget_growth: default_growth(),
            q: 1e-4,
            tau: 1.0,
            eta: 1.0,
            beta: 1.0,
            batch_obj: 50,
            batch_con: None,
            outer_iters: 16,
            seed: 0,
            budget_cap: None,
            total_cap: 10_000_000,
            x0: None,
        }
    }
}

impl RmalmConfig {
    /// Lists every offending field.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let positive = [
            ("c", self.c),
            ("tau", self.tau),
            ("eta", self.eta),
            ("beta", self.beta),
            ("q", self.q),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.s0 < 2 {
            errs.push(format!("s0 must be at least 2, got {}", self.s0));
        }
        if !(self.budget_growth >= 1.0 && self.budget_growth.is_finite()) {
            errs.push(format!("budget_growth must be at least 1, got {}", self.budget_growth));
        }
        if self.batch_obj == 0 {
            errs.push("batch_obj must be at least 1".into());
        }
        if self.batch_con == Some(0) {
            errs.push("batch_con must be at least 1".into());
        }
        if let Some(cap) = self.budget_cap {
            if cap < 2 {
                errs.push(format!("budget_cap must be at least 2, got {cap}"));
            }
        }
        if self.total_cap == 0 {
            errs.push("total_cap must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// `gamma_s^k = tau eta / (s + beta)`.
pub fn step_size(s: u64, _k: usize, cfg: &RmalmConfig) -> f64 {
    cfg.tau * cfg.eta / (s as f64 + cfg.beta)
}

/// `S^k = ceil(S^0 growth^k)`, clipped at `budget_cap`.
pub fn subproblem_budget(k: usize, cfg: &RmalmConfig) -> u64 {
    let raw = (cfg.s0 as f64 * cfg.budget_growth.powf(k as f64)).ceil();
    let s = if raw >= u64::MAX as f64 { u64::MAX } else { raw as u64 };
    cfg.budget_cap.map_or(s, |cap| s.min(cap))
}

/// Reusable buffers for [`inner_loop`].
#[derive(Debug, Default)]
pub struct InnerWorkspace {
    batch: SampleBatch,
    grad: Vec<f64>,
}

/// Runs `S - 1` projected stochastic gradient steps from `x_start` and
/// returns `w_S`.
#[allow(clippy::too_many_arguments)]
pub fn inner_loop(
    prob: &StochasticProblem,
    x_start: &[f64],
    st: &PenaltyState,
    budget: u64,
    k: usize,
    cfg: &RmalmConfig,
    rng: &mut RngStream,
    ws: &mut InnerWorkspace,
) -> Result<Vec<f64>> {
    if budget < 2 {
        return Err(Error::Parameter(format!("inner budget must be at least 2, got {budget}")));
    }
    prob.check_point(x_start)?;
    let batch_con = cfg.batch_con;
    let mut w = x_start.to_vec();
    ws.grad.resize(prob.dim(), 0.0);
    for s in 1..budget {
        match batch_con {
            Some(b) => ws.batch.redraw(prob, cfg.batch_obj, b, rng),
            None => {
                ws.batch.redraw(prob, cfg.batch_obj, 0, rng);
                ws.batch.zeta.extend(0..prob.num_constraints());
            }
        }
        stoch_grad_into(prob, &w, st, &ws.batch, &mut ws.grad)?;
        linalg::axpy(-step_size(s, k, cfg), &ws.grad, &mut w);
        prob.project(&mut w);
    }
    Ok(w)
}

/// Outcome of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    /// One row per outer iteration, starting with the initial point.
    pub rows: Vec<MetricsRow>,
    /// `x^0, x^1, ..`.
    pub iterates: Vec<Vec<f64>>,
    /// `y^0, y^1, ..`.
    pub multipliers: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Sum of the executed budgets.
    pub total_inner: u64,
}

/// Metrics hook, called with `(k, cumulative inner iterations, row)`.
pub type Callback<'a> = dyn FnMut(usize, u64, &MetricsRow) + 'a;

fn check_finite(x: &[f64], k: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonConvergence {
            iterations: k,
            residual: f64::NAN,
        })
    }
}

/// Runs `outer_iters` outer iterations from `x^0 = P_X(x0)`, `y^0 = 0`.
pub fn solve(
    prob: &StochasticProblem,
    cfg: &RmalmConfig,
    monitor: &Monitor,
    callback: &mut Callback<'_>,
) -> Result<SolveTrace> {
    cfg.validate()?;
    let start = Instant::now();
    let mut x = match &cfg.x0 {
        Some(x0) => {
            prob.check_point(x0)?;
            prob.projected(x0)
        }
        None => prob.projected(&vec![0.0; prob.dim()]),
    };
    let mut st = PenaltyState::new(cfg.c, MultiplierVector::zeros(prob.num_constraints()))?;
    let mut rng = RngStream::new(cfg.seed, streams::SOLVER);
    let mut ws = InnerWorkspace::default();

    let h = prob.constraint_values(&x);
    let first = monitor.row(0, 0, &x, st.y().as_slice(), &h, start.elapsed().as_secs_f64());
    callback(0, 0, &first);
    let mut trace = SolveTrace {
        rows: vec![first],
        iterates: vec![x.clone()],
        multipliers: vec![st.y().as_slice().to_vec()],
        x: Vec::new(),
        y: Vec::new(),
        total_inner: 0,
    };

    for k in 0..cfg.outer_iters {
        let budget = subproblem_budget(k + 1, cfg);
        let total = trace.total_inner.saturating_add(budget);
        if total > cfg.total_cap {
            return Err(Error::BudgetExceeded {
                k: k + 1,
                requested: total,
                cap: cfg.total_cap,
            });
        }
        x = inner_loop(prob, &x, &st, budget, k, cfg, &mut rng, &mut ws)?;
        check_finite(&x, k + 1)?;
        trace.total_inner = total;
        let h = prob.constraint_values(&x);
        let y = st.y().update(cfg.c, &h)?;
        st.set_y(y);
        let row = monitor.row(k + 1, total, &x, st.y().as_slice(), &h, start.elapsed().as_secs_f64());
        callback(k + 1, total, &row);
        trace.rows.push(row);
        trace.iterates.push(x.clone());
        trace.multipliers.push(st.y().as_slice().to_vec());
    }
    trace.x = x;
    trace.y = st.y().as_slice().to_vec();
    Ok(trace)
}

/// Independent runs for each seed, in parallel when available.
pub fn solve_seeds(
    prob: &StochasticProblem,
    cfg: &RmalmConfig,
    seeds: &[u64],
    monitor: &Monitor,
) -> Vec<Result<SolveTrace>> {
    par::map_indexed(seeds.len(), |i| {
        let cfg = RmalmConfig {
            seed: seeds[i],
            ..cfg.clone()
        };
        solve(prob, &cfg, monitor, &mut |_, _, _| {})
    })
}
