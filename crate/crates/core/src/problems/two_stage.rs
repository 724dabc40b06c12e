//! Quadratic two-stage stochastic program in single-program (SAA) form.
//!
//! Variables are laid out as `(x1, y_1, ..., y_N)`, each block of length `n`.
//! Scenario `i` contributes
//! `0.5 z_i^T (xi_i xi_i^T + lambda I) z_i + xi_i^T z_i` with `z_i = (x1, y_i)`,
//! and the coupling constraint
//! `0.5 |y_i - y0|^2 + 0.5 |x1 - x0|^2 - R^2 / 2 <= 0`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::problem::{ConstraintSet, Draw, FrozenDraws, Linear, ObjectiveSampler, StochasticProblem};
use crate::projection::{Block, FeasibleSet};
use crate::rng::{streams, RngStream};

pub const DEFAULT_LAMBDA: f64 = 2.0;
pub const DEFAULT_RADIUS: f64 = 5.0;
pub const DEFAULT_ANCHOR: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoStageInstance {
    pub n: usize,
    pub seed: u64,
    pub lambda: f64,
    pub radius: f64,
    /// First-stage cost, entries in `[1, 3]`.
    pub cost: Vec<f64>,
    /// Per-component means in `[5, 25]` and standard deviations in `[5, 15]`
    /// of the `2n`-dimensional scenario law, fixed per instance.
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub scenarios: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

impl TwoStageInstance {
    pub fn generate(n: usize, scenarios: usize, seed: u64, lambda: f64, radius: f64) -> Result<Self> {
        if n == 0 || scenarios == 0 {
            return Err(Error::Parameter(format!(
                "two-stage sizes must be positive (n={n}, N={scenarios})"
            )));
        }
        if !(lambda > 0.0) {
            return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
        }
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!("R must be positive, got {radius}")));
        }
        let mut rng = RngStream::new(seed, streams::GENERATOR);
        let cost = (0..n).map(|_| rng.uniform(1.0, 3.0)).collect();
        let mean: Vec<f64> = (0..2 * n).map(|_| rng.uniform(5.0, 25.0)).collect();
        let std_dev: Vec<f64> = (0..2 * n).map(|_| rng.uniform(5.0, 15.0)).collect();
        let scen = (0..scenarios)
            .map(|_| {
                mean.iter()
                    .zip(&std_dev)
                    .map(|(m, s)| m + s * rng.normal())
                    .collect()
            })
            .collect();
        Ok(Self {
            n,
            seed,
            lambda,
            radius,
            cost,
            mean,
            std_dev,
            scenarios: scen,
            x0: vec![DEFAULT_ANCHOR; n],
            y0: vec![DEFAULT_ANCHOR; n],
        })
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    pub fn dim(&self) -> usize {
        self.n * (self.num_scenarios() + 1)
    }

    /// Objective Hessian of scenario `i` with respect to `z_i`.
    pub fn scenario_hessian(&self, i: usize) -> DMatrix<f64> {
        let xi = nalgebra::DVector::from_column_slice(&self.scenarios[i]);
        &xi * xi.transpose() + DMatrix::identity(2 * self.n, 2 * self.n) * self.lambda
    }

    pub fn witness(&self) -> Vec<f64> {
        let mut w = self.x0.clone();
        for _ in 0..self.num_scenarios() {
            w.extend_from_slice(&self.y0);
        }
        w
    }

    pub fn to_problem(&self) -> StochasticProblem {
        let n = self.n;
        let dim = self.dim();
        let mut cost = vec![0.0; dim];
        cost[..n].copy_from_slice(&self.cost);
        let set = FeasibleSet::product(
            vec![
                Block::new(0..n, FeasibleSet::Ball { center: self.x0.clone(), radius: 1.0 }),
                Block::new(n..dim, FeasibleSet::Whole),
            ],
            dim,
        )
        .expect("valid two-stage layout");
        StochasticProblem::new(dim, Arc::new(TwoStageConstraints::from(self)), set)
            .expect("valid two-stage problem")
            .with_deterministic(Arc::new(Linear { q: cost, r: 0.0 }))
            .with_sampler(Arc::new(TwoStageSampler {
                n,
                lambda: self.lambda,
                scenarios: self.scenarios.clone(),
            }))
            .with_witness(self.witness())
            .with_name(format!("two_stage(n={}, N={}, seed={})", n, self.num_scenarios(), self.seed))
    }
}

/// Finite-sum scenario objective.
#[derive(Debug, Clone)]
pub struct TwoStageSampler {
    n: usize,
    lambda: f64,
    scenarios: Vec<Vec<f64>>,
}

impl TwoStageSampler {
    fn blocks<'a>(&self, i: usize, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let n = self.n;
        (&x[..n], &x[n * (i + 1)..n * (i + 2)])
    }

    fn index(draw: Draw) -> usize {
        match draw {
            Draw::Index(i) => i,
            Draw::Seeded(_) => panic!("seeded draw on a finite-sum sampler"),
        }
    }

    /// Returns `xi^T z` for scenario `i`.
    fn inner(&self, i: usize, x: &[f64]) -> f64 {
        let (x1, yi) = self.blocks(i, x);
        let xi = &self.scenarios[i];
        linalg::dot(&xi[..self.n], x1) + linalg::dot(&xi[self.n..], yi)
    }
}

impl ObjectiveSampler for TwoStageSampler {
    fn finite_sum_size(&self) -> Option<usize> {
        Some(self.scenarios.len())
    }

    fn sample_value(&self, draw: Draw, x: &[f64]) -> f64 {
        let i = Self::index(draw);
        let (x1, yi) = self.blocks(i, x);
        let t = self.inner(i, x);
        0.5 * (t * t + self.lambda * (linalg::norm_sq(x1) + linalg::norm_sq(yi))) + t
    }

    fn add_sample_gradient(&self, draw: Draw, x: &[f64], scale: f64, out: &mut [f64]) {
        let i = Self::index(draw);
        let n = self.n;
        let t = self.inner(i, x);
        let xi = &self.scenarios[i];
        let w = scale * (t + 1.0);
        for k in 0..n {
            out[k] += w * xi[k] + scale * self.lambda * x[k];
        }
        let off = n * (i + 1);
        for k in 0..n {
            out[off + k] += w * xi[n + k] + scale * self.lambda * x[off + k];
        }
    }

    fn add_mean_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) -> bool {
        let n = self.n;
        let count = self.scenarios.len();
        let w = scale / count as f64;
        // first-stage block needs a reduction, recourse blocks are disjoint
        let first = par::chunked_sum(count, n, |range, acc| {
            for i in range {
                let c = self.inner(i, x) + 1.0;
                linalg::axpy(c, &self.scenarios[i][..n], acc);
            }
        });
        for k in 0..n {
            out[k] += w * (first[k] + count as f64 * self.lambda * x[k]);
        }
        for i in 0..count {
            let c = w * (self.inner(i, x) + 1.0);
            let off = n * (i + 1);
            for k in 0..n {
                out[off + k] += c * self.scenarios[i][n + k] + w * self.lambda * x[off + k];
            }
        }
        true
    }

    fn held_out(&self, size: usize, seed: u64) -> Arc<dyn ObjectiveSampler> {
        Arc::new(FrozenDraws::new(Arc::new(self.clone()), size, seed))
    }
}

#[derive(Debug, Clone)]
pub struct TwoStageConstraints {
    n: usize,
    count: usize,
    x0: Vec<f64>,
    y0: Vec<f64>,
    radius: f64,
}

impl From<&TwoStageInstance> for TwoStageConstraints {
    fn from(inst: &TwoStageInstance) -> Self {
        Self {
            n: inst.n,
            count: inst.num_scenarios(),
            x0: inst.x0.clone(),
            y0: inst.y0.clone(),
            radius: inst.radius,
        }
    }
}

impl ConstraintSet for TwoStageConstraints {
    fn len(&self) -> usize {
        self.count
    }

    fn value(&self, j: usize, x: &[f64]) -> f64 {
        let n = self.n;
        let yj = &x[n * (j + 1)..n * (j + 2)];
        0.5 * linalg::dist_sq(yj, &self.y0) + 0.5 * linalg::dist_sq(&x[..n], &self.x0)
            - 0.5 * self.radius * self.radius
    }

    fn add_gradient(&self, j: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            out[k] += scale * (x[k] - self.x0[k]);
        }
        let off = n * (j + 1);
        for k in 0..n {
            out[off + k] += scale * (x[off + k] - self.y0[k]);
        }
    }
}

/// Seeded two-stage instance as a finite-sum problem.
pub fn gen_two_stage(n: usize, scenarios: usize, seed: u64, lambda: f64, radius: f64) -> Result<StochasticProblem> {
    Ok(TwoStageInstance::generate(n, scenarios, seed, lambda, radius)?.to_problem())
}
