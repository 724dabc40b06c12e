//! Stochastic convex QCQP with least-squares objective over `[-10, 10]^n`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::least_squares::{normalized_gaussian_sample, LeastSquaresSampler, LsSample};
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{Quadratic, QuadraticConstraints, StochasticProblem};
use crate::projection::FeasibleSet;
use crate::rng::{streams, RngStream};

pub const QCQP_BOX: f64 = 10.0;

/// How the objective's random data is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SampleMode {
    /// Fresh draws on demand.
    Expectation,
    /// `samples` stored draws, uniform over them.
    FiniteSum { samples: usize },
}

/// Generated QCQP data. `q` holds row-major `n x n` matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QcqpInstance {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub mode: SampleMode,
    pub q: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Stored objective samples (finite-sum mode only).
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

/// Random symmetric PSD matrix scaled to unit spectral norm.
fn unit_psd(n: usize, rng: &mut RngStream) -> Vec<f64> {
    let g = DMatrix::from_row_slice(n, n, &rng.normals(n * n));
    let s = &g * g.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let top = SymmetricEigen::new(s.clone()).eigenvalues.max();
    let s = s / top;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = s[(i, j)];
        }
    }
    out
}

impl QcqpInstance {
    pub fn generate(n: usize, p: usize, m: usize, mode: SampleMode, seed: u64) -> Result<Self> {
        if n == 0 || p == 0 || m == 0 {
            return Err(Error::Parameter(format!(
                "qcqp dimensions must be positive (n={n}, p={p}, M={m})"
            )));
        }
        if let SampleMode::FiniteSum { samples: 0 } = mode {
            return Err(Error::Parameter("finite-sum sample count must be positive".into()));
        }
        let mut rng = RngStream::new(seed, streams::GENERATOR);
        let q = (0..m).map(|_| unit_psd(n, &mut rng)).collect();
        let a = (0..m)
            .map(|_| {
                let mut v = rng.normals(n);
                let nv = linalg::norm(&v);
                v.iter_mut().for_each(|x| *x /= nv);
                v
            })
            .collect();
        let b = (0..m).map(|_| rng.uniform(0.1, 1.1)).collect();
        let (h, c) = match mode {
            SampleMode::Expectation => (Vec::new(), Vec::new()),
            SampleMode::FiniteSum { samples } => (0..samples)
                .map(|_| {
                    let s = normalized_gaussian_sample(p, n, &mut rng);
                    (s.h, s.c)
                })
                .unzip(),
        };
        Ok(Self {
            n,
            p,
            seed,
            mode,
            q,
            a,
            b,
            h,
            c,
        })
    }

    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn sampler(&self) -> LeastSquaresSampler {
        match self.mode {
            SampleMode::Expectation => LeastSquaresSampler::gaussian(self.n, self.p),
            SampleMode::FiniteSum { .. } => {
                let samples = self
                    .h
                    .iter()
                    .zip(&self.c)
                    .map(|(h, c)| LsSample {
                        h: h.clone(),
                        c: c.clone(),
                    })
                    .collect();
                LeastSquaresSampler::stored(self.n, self.p, samples)
            }
        }
    }

    /// `h_j(x) = 0.5 x^T Q_j x + a_j^T x - b_j`.
    pub fn constraints(&self) -> QuadraticConstraints {
        QuadraticConstraints(
            self.q
                .iter()
                .zip(&self.a)
                .zip(&self.b)
                .map(|((q, a), b)| Quadratic {
                    dim: self.n,
                    p: q.clone(),
                    q: a.clone(),
                    r: -b,
                })
                .collect(),
        )
    }

    pub fn to_problem(&self) -> StochasticProblem {
        StochasticProblem::new(
            self.n,
            Arc::new(self.constraints()),
            FeasibleSet::Box {
                lo: -QCQP_BOX,
                hi: QCQP_BOX,
            },
        )
        .expect("valid qcqp layout")
        .with_sampler(Arc::new(self.sampler()))
        // h_j(0) = -b_j <= -0.1
        .with_witness(vec![0.0; self.n])
        .with_name(format!("qcqp(n={}, p={}, M={}, seed={})", self.n, self.p, self.b.len(), self.seed))
    }
}

/// Seeded stochastic QCQP instance.
pub fn gen_qcqp(n: usize, p: usize, m: usize, mode: SampleMode, seed: u64) -> Result<StochasticProblem> {
    Ok(QcqpInstance::generate(n, p, m, mode, seed)?.to_problem())
}
