//! Primal-dual stochastic gradient baseline.
//!
//! ```text
//! x^{t+1} = P_X(x^t - gamma_t (g_f + (M/B) sum_{j in batch} y_j grad h_j(x^t)))
//! y^{t+1} = (y^t + gamma_t (M/B) sum_{j in batch} e_j h_j(x^{t+1}))_+
//! gamma_t = step0 / (1 + t)^decay
//! ```

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::auglag::SampleBatch;
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::{MetricsRow, Monitor};
use crate::problem::StochasticProblem;
use crate::rmalm::{Callback, SolveTrace};
use crate::rng::{streams, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdsgConfig {
    pub step0: f64,
    pub decay: f64,
    pub batch_obj: usize,
    /// `None` uses every constraint once per step.
    pub batch_con: Option<usize>,
    pub iters: usize,
    pub seed: u64,
    /// Record metrics every this many iterations (and at the end).
    pub record_every: usize,
}

impl Default for PdsgConfig {
    fn default() -> Self {
        Self {
            step0: 0.1,
            decay: 0.5,
            batch_obj: 50,
            batch_con: None,
            iters: 50_000,
            seed: 0,
            record_every: 1000,
        }
    }
}

impl PdsgConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            errs.push(format!("step0 must be positive, got {}", self.step0));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            errs.push(format!("decay must be nonnegative, got {}", self.decay));
        }
        if self.batch_obj == 0 {
            errs.push("batch_obj must be at least 1".into());
        }
        if self.batch_con == Some(0) {
            errs.push("batch_con must be at least 1".into());
        }
        if self.record_every == 0 {
            errs.push("record_every must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn step(&self, t: usize) -> f64 {
        self.step0 / ((1 + t) as f64).powf(self.decay)
    }
}

/// Last iterates and their running averages.
#[derive(Debug, Clone, PartialEq)]
pub struct PdsgTrace {
    /// Metrics of the recorded last iterates.
    pub trace: SolveTrace,
    /// `xbar^t` at the recorded iterations.
    pub averaged: Vec<Vec<f64>>,
    /// Metrics of the averaged iterates.
    pub averaged_rows: Vec<MetricsRow>,
}

/// `xbar^k = (1/k) sum_{t <= k} x^t`, computed incrementally.
pub fn running_average(iterates: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let first = iterates.first().ok_or(Error::EmptyInput)?;
    let mut avg = vec![0.0; first.len()];
    let mut out = Vec::with_capacity(iterates.len());
    for (t, x) in iterates.iter().enumerate() {
        let w = 1.0 / (t + 1) as f64;
        for (a, xi) in avg.iter_mut().zip(x) {
            *a += w * (xi - *a);
        }
        out.push(avg.clone());
    }
    Ok(out)
}

fn fill_batch(prob: &StochasticProblem, cfg: &PdsgConfig, rng: &mut RngStream, batch: &mut SampleBatch) {
    match cfg.batch_con {
        Some(b) => batch.redraw(prob, cfg.batch_obj, b, rng),
        None => {
            batch.redraw(prob, cfg.batch_obj, 0, rng);
            batch.zeta.extend(0..prob.num_constraints());
        }
    }
}

pub fn pdsg_solve(
    prob: &StochasticProblem,
    cfg: &PdsgConfig,
    monitor: &Monitor,
    callback: &mut Callback<'_>,
) -> Result<PdsgTrace> {
    cfg.validate()?;
    let start = Instant::now();
    let n = prob.dim();
    let m = prob.num_constraints();
    let mut rng = RngStream::new(cfg.seed, streams::BASELINE);
    let mut x = prob.projected(&vec![0.0; n]);
    let mut y = vec![0.0; m];
    let mut avg = x.clone();
    let mut batch = SampleBatch::default();
    let mut g = vec![0.0; n];
    let cons = prob.constraints().clone();

    let h0 = prob.constraint_values(&x);
    let first = monitor.row(0, 0, &x, &y, &h0, start.elapsed().as_secs_f64());
    callback(0, 0, &first);
    let mut out = PdsgTrace {
        trace: SolveTrace {
            rows: vec![first.clone()],
            iterates: vec![x.clone()],
            multipliers: vec![y.clone()],
            x: Vec::new(),
            y: Vec::new(),
            total_inner: 0,
        },
        averaged: vec![avg.clone()],
        averaged_rows: vec![first],
    };

    for t in 0..cfg.iters {
        let gamma = cfg.step(t);
        fill_batch(prob, cfg, &mut rng, &mut batch);
        batch.validate(prob)?;
        g.fill(0.0);
        if let Some(f0) = prob.deterministic() {
            f0.add_gradient(&x, 1.0, &mut g);
        }
        if let Some(s) = prob.sampler() {
            let w = 1.0 / batch.xi.len() as f64;
            for d in &batch.xi {
                s.add_sample_gradient(*d, &x, w, &mut g);
            }
        }
        let scale = if batch.zeta.is_empty() {
            0.0
        } else {
            m as f64 / batch.zeta.len() as f64
        };
        for &j in &batch.zeta {
            if y[j] > 0.0 {
                cons.add_gradient(j, &x, scale * y[j], &mut g);
            }
        }
        linalg::axpy(-gamma, &g, &mut x);
        prob.project(&mut x);
        for &j in &batch.zeta {
            y[j] += gamma * scale * cons.value(j, &x);
        }
        for v in y.iter_mut() {
            *v = v.max(0.0);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonConvergence {
                iterations: t + 1,
                residual: f64::NAN,
            });
        }
        // x^0 counts as the first averaged point
        let w = 1.0 / (t + 2) as f64;
        for (a, xi) in avg.iter_mut().zip(&x) {
            *a += w * (xi - *a);
        }
        let done = t + 1;
        if done % cfg.record_every == 0 || done == cfg.iters {
            let wall = start.elapsed().as_secs_f64();
            let h = prob.constraint_values(&x);
            let row = monitor.row(done, done as u64, &x, &y, &h, wall);
            callback(done, done as u64, &row);
            let h_avg = prob.constraint_values(&avg);
            out.averaged_rows.push(monitor.row(done, done as u64, &avg, &y, &h_avg, wall));
            out.trace.rows.push(row);
            out.trace.iterates.push(x.clone());
            out.trace.multipliers.push(y.clone());
            out.averaged.push(avg.clone());
        }
    }
    out.trace.total_inner = cfg.iters as u64;
    out.trace.x = x;
    out.trace.y = y;
    Ok(out)
}
