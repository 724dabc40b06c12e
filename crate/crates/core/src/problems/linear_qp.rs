//! Finite-sum least-squares QP with linear inequality constraints whose
//! dual strong-concavity modulus is computable. Used for rate checks.
//!
//! The unconstrained minimizer violates every constraint by a margin in
//! `[0.5, 1.0]`, so all constraints are active at the solution.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::least_squares::{LeastSquaresSampler, LsSample};
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{LinearConstraints, StochasticProblem};
use crate::projection::FeasibleSet;
use crate::rng::{streams, RngStream};

pub const LINEAR_QP_BOX: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearQpInstance {
    pub n: usize,
    pub seed: u64,
    /// Row-major `n x n` sample matrices and targets.
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// Row-major `M x n` with orthonormal rows.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Unconstrained minimizer of the sample-mean objective.
    pub x_free: Vec<f64>,
}

/// Curvature constants of a [`LinearQpInstance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearQpConstants {
    /// Strong convexity modulus of the objective.
    pub mu: f64,
    /// Lipschitz constant of the objective gradient.
    pub l_f: f64,
    /// Lower bound `lambda_min(A A^T) / L_f` on the dual strong concavity.
    pub alpha: f64,
    /// Exact dual curvature `lambda_min(A P^{-1} A^T)`, `P` the objective
    /// Hessian. Governs the asymptotic exact-ALM contraction.
    pub dual_curvature: f64,
    /// Lipschitz constant of `h` (spectral norm of `A`).
    pub l_h: f64,
}

impl LinearQpInstance {
    pub fn generate(n: usize, m: usize, samples: usize, seed: u64) -> Result<Self> {
        if n == 0 || m == 0 || samples == 0 {
            return Err(Error::Parameter(format!(
                "linear qp sizes must be positive (n={n}, M={m}, N={samples})"
            )));
        }
        if m > n {
            return Err(Error::Parameter(format!(
                "linear qp needs M <= n for independent constraints (M={m}, n={n})"
            )));
        }
        let mut rng = RngStream::new(seed, streams::GENERATOR);
        let scale = 0.2 / (n as f64).sqrt();
        let mut target = rng.normals(n);
        let tn = linalg::norm(&target);
        target.iter_mut().for_each(|v| *v *= 2.0 / tn);

        let mut h = Vec::with_capacity(samples);
        let mut c = Vec::with_capacity(samples);
        for _ in 0..samples {
            let mut hi: Vec<f64> = rng.normals(n * n).into_iter().map(|v| v * scale).collect();
            for k in 0..n {
                hi[k * n + k] += 1.0;
            }
            let mut ci = vec![0.0; n];
            linalg::matvec(&hi, n, n, &target, &mut ci);
            for v in ci.iter_mut() {
                *v += 0.5 * rng.normal();
            }
            h.push(hi);
            c.push(ci);
        }

        let g = DMatrix::from_row_slice(n, m, &rng.normals(n * m));
        let q = g.qr().q();
        let mut a = vec![0.0; m * n];
        for j in 0..m {
            for k in 0..n {
                a[j * n + k] = q[(k, j)];
            }
        }

        let sampler = LeastSquaresSampler::stored(n, n, pack(&h, &c));
        let mom = sampler.moments().expect("stored sampler has moments");
        let p = mom.hessian();
        let x_free = p
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Data("sample Hessian is not positive definite".into()))?
            .solve(&DVector::from_column_slice(&mom.b));
        let x_free: Vec<f64> = x_free.iter().copied().collect();
        let b = (0..m)
            .map(|j| linalg::dot(&a[j * n..(j + 1) * n], &x_free) - rng.uniform(0.5, 1.0))
            .collect();
        Ok(Self {
            n,
            seed,
            h,
            c,
            a,
            b,
            x_free,
        })
    }

    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn sampler(&self) -> LeastSquaresSampler {
        LeastSquaresSampler::stored(self.n, self.n, pack(&self.h, &self.c))
    }

    pub fn constants(&self) -> LinearQpConstants {
        let n = self.n;
        let m = self.num_constraints();
        let p = self.sampler().moments().expect("moments").hessian();
        let eig = SymmetricEigen::new(p.clone()).eigenvalues;
        let (mu, l_f) = (eig.min(), eig.max());
        let a = DMatrix::from_row_slice(m, n, &self.a);
        let aat = &a * a.transpose();
        let aat_eig = SymmetricEigen::new(aat.clone()).eigenvalues;
        let p_inv = p.try_inverse().expect("positive definite Hessian");
        let dual = &a * p_inv * a.transpose();
        let dual = (&dual + dual.transpose()) * 0.5;
        LinearQpConstants {
            mu,
            l_f,
            alpha: aat_eig.min() / l_f,
            dual_curvature: SymmetricEigen::new(dual).eigenvalues.min(),
            l_h: aat_eig.max().sqrt(),
        }
    }

    /// Strictly feasible point `x_free - 1.5 A^T 1` (rows of `A` orthonormal).
    pub fn witness(&self) -> Vec<f64> {
        let n = self.n;
        let mut w = self.x_free.clone();
        for j in 0..self.num_constraints() {
            linalg::axpy(-1.5, &self.a[j * n..(j + 1) * n], &mut w);
        }
        w
    }

    pub fn to_problem(&self) -> StochasticProblem {
        let cons = LinearConstraints::new(self.a.clone(), self.b.clone(), self.n).expect("valid layout");
        StochasticProblem::new(
            self.n,
            Arc::new(cons),
            FeasibleSet::Box {
                lo: -LINEAR_QP_BOX,
                hi: LINEAR_QP_BOX,
            },
        )
        .expect("valid linear qp")
        .with_sampler(Arc::new(self.sampler()))
        .with_witness(self.witness())
        .with_name(format!(
            "linear_qp(n={}, M={}, N={}, seed={})",
            self.n,
            self.num_constraints(),
            self.h.len(),
            self.seed
        ))
    }
}

fn pack(h: &[Vec<f64>], c: &[Vec<f64>]) -> Vec<LsSample> {
    h.iter()
        .zip(c)
        .map(|(h, c)| LsSample {
            h: h.clone(),
            c: c.clone(),
        })
        .collect()
}

pub fn gen_linear_qp(n: usize, m: usize, samples: usize, seed: u64) -> Result<StochasticProblem> {
    Ok(LinearQpInstance::generate(n, m, samples, seed)?.to_problem())
}
