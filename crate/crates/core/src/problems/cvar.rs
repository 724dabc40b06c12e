//! CVaR portfolio problem in auxiliary-variable form.
//!
//! Variables are `(a, x, y)` with `a` the loss threshold, `x` the portfolio
//! on the simplex and `y >= 0` the scenario excess losses:
//!
//! ```text
//! minimize   a + 1/((1-p) N) sum_i y_i  (+ eps/2 |(a, x, y)|^2)
//! subject to -x^T xi_i - a - y_i <= 0,   i = 1..N
//!            R - m^T x <= 0
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{ConstraintSet, SmoothFunction, StochasticProblem};
use crate::projection::{Block, FeasibleSet};
use crate::rng::{streams, RngStream};

/// Returns matrix and CVaR parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortfolioInstance {
    /// `N x n`, one row per period.
    pub returns: Vec<Vec<f64>>,
    pub p: f64,
    pub min_return: f64,
    /// Column means.
    pub mean: Vec<f64>,
    pub eps_reg: f64,
}

impl PortfolioInstance {
    pub fn new(returns: Vec<Vec<f64>>, p: f64, min_return: Option<f64>, eps_reg: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Parameter(format!("safety level p must lie in (0, 1), got {p}")));
        }
        if !(eps_reg >= 0.0) {
            return Err(Error::Parameter(format!("eps_reg must be nonnegative, got {eps_reg}")));
        }
        let rows = returns.len();
        let cols = returns.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(Error::Data("returns matrix is empty".into()));
        }
        if let Some((i, r)) = returns.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::RaggedRow {
                row: i + 1,
                expected: cols,
                found: r.len(),
            });
        }
        let mean: Vec<f64> = (0..cols)
            .map(|j| returns.iter().map(|r| r[j]).sum::<f64>() / rows as f64)
            .collect();
        let min_return = min_return.unwrap_or_else(|| mean.iter().sum::<f64>() / cols as f64);
        Ok(Self {
            returns,
            p,
            min_return,
            mean,
            eps_reg,
        })
    }

    pub fn periods(&self) -> usize {
        self.returns.len()
    }

    pub fn assets(&self) -> usize {
        self.mean.len()
    }

    pub fn dim(&self) -> usize {
        1 + self.assets() + self.periods()
    }

    pub fn tail_weight(&self) -> f64 {
        1.0 / ((1.0 - self.p) * self.periods() as f64)
    }

    /// Packs `(a, x, y)` into a decision vector.
    pub fn pack(&self, a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(a);
        v.extend_from_slice(x);
        v.extend_from_slice(y);
        v
    }

    /// A feasible point, strictly feasible whenever some asset mean
    /// exceeds the minimum desired return.
    pub fn witness(&self) -> Vec<f64> {
        let n = self.assets();
        let best = (0..n)
            .max_by(|&i, &j| self.mean[i].total_cmp(&self.mean[j]))
            .unwrap_or(0);
        let mut x = vec![0.5 / n as f64; n];
        x[best] += 0.5;
        let worst_loss = self
            .returns
            .iter()
            .map(|r| -linalg::dot(r, &x))
            .fold(f64::NEG_INFINITY, f64::max);
        let y = vec![1.0; self.periods()];
        self.pack(worst_loss + 1.0, &x, &y)
    }

    pub fn to_problem(&self) -> StochasticProblem {
        let n = self.assets();
        let dim = self.dim();
        let set = FeasibleSet::product(
            vec![
                Block::new(0..1, FeasibleSet::Whole),
                Block::new(1..1 + n, FeasibleSet::Simplex),
                Block::new(1 + n..dim, FeasibleSet::NonNegative),
            ],
            dim,
        )
        .expect("valid cvar layout");
        StochasticProblem::new(dim, Arc::new(CvarConstraints::from(self)), set)
            .expect("valid cvar problem")
            .with_deterministic(Arc::new(CvarObjective {
                assets: n,
                tail_weight: self.tail_weight(),
                eps_reg: self.eps_reg,
            }))
            .with_witness(self.witness())
            .with_name(format!("cvar(N={}, n={}, p={})", self.periods(), n, self.p))
    }
}

#[derive(Debug, Clone)]
pub struct CvarObjective {
    assets: usize,
    tail_weight: f64,
    eps_reg: f64,
}

impl SmoothFunction for CvarObjective {
    fn value(&self, v: &[f64]) -> f64 {
        let y = &v[1 + self.assets..];
        let mut f = v[0] + self.tail_weight * y.iter().sum::<f64>();
        if self.eps_reg > 0.0 {
            f += 0.5 * self.eps_reg * linalg::norm_sq(v);
        }
        f
    }

    fn add_gradient(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        out[0] += scale;
        for o in &mut out[1 + self.assets..] {
            *o += scale * self.tail_weight;
        }
        if self.eps_reg > 0.0 {
            linalg::axpy(scale * self.eps_reg, v, out);
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvarConstraints {
    returns: Vec<Vec<f64>>,
    mean: Vec<f64>,
    min_return: f64,
}

impl From<&PortfolioInstance> for CvarConstraints {
    fn from(inst: &PortfolioInstance) -> Self {
        Self {
            returns: inst.returns.clone(),
            mean: inst.mean.clone(),
            min_return: inst.min_return,
        }
    }
}

impl ConstraintSet for CvarConstraints {
    fn len(&self) -> usize {
        self.returns.len() + 1
    }

    fn value(&self, j: usize, v: &[f64]) -> f64 {
        let n = self.mean.len();
        let x = &v[1..1 + n];
        if j < self.returns.len() {
            -linalg::dot(x, &self.returns[j]) - v[0] - v[1 + n + j]
        } else {
            self.min_return - linalg::dot(&self.mean, x)
        }
    }

    fn add_gradient(&self, j: usize, _v: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.mean.len();
        if j < self.returns.len() {
            out[0] -= scale;
            linalg::axpy(-scale, &self.returns[j], &mut out[1..1 + n]);
            out[1 + n + j] -= scale;
        } else {
            linalg::axpy(-scale, &self.mean, &mut out[1..1 + n]);
        }
    }
}

/// CVaR problem for a returns matrix; `min_return` defaults to the mean of
/// the column means.
pub fn gen_cvar(returns: Vec<Vec<f64>>, p: f64, min_return: Option<f64>) -> Result<StochasticProblem> {
    Ok(PortfolioInstance::new(returns, p, min_return, 0.0)?.to_problem())
}

/// Synthetic `periods x assets` returns: asset `j` has mean in `[0, 0.1]`
/// and volatility in `[0.1, 0.3]`, periods are independent Gaussian draws.
pub fn synthetic_returns(periods: usize, assets: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if periods == 0 || assets == 0 {
        return Err(Error::Parameter(format!(
            "returns sizes must be positive (N={periods}, n={assets})"
        )));
    }
    let mut rng = RngStream::new(seed, streams::GENERATOR);
    let mean: Vec<f64> = (0..assets).map(|_| rng.uniform(0.0, 0.1)).collect();
    let vol: Vec<f64> = (0..assets).map(|_| rng.uniform(0.1, 0.3)).collect();
    Ok((0..periods)
        .map(|_| mean.iter().zip(&vol).map(|(m, v)| m + v * rng.normal()).collect())
        .collect())
}

/// Parses a rectangular numeric CSV (one row per period, one column per
/// asset, optional single header row).
pub fn parse_returns_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line_no, line) in text.lines().enumerate() {
        let row = line_no + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        if row == 1 && parsed.iter().any(Option::is_none) && fields.iter().all(|f| !f.is_empty()) {
            // header
            width = Some(fields.len());
            continue;
        }
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::RaggedRow {
                row,
                expected,
                found: fields.len(),
            });
        }
        let mut values = Vec::with_capacity(expected);
        for (col, (f, v)) in fields.iter().zip(parsed).enumerate() {
            match v {
                Some(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Parse {
                        row,
                        column: col + 1,
                        value: f.to_string(),
                    })
                }
            }
        }
        out.push(values);
    }
    if out.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    Ok(out)
}

pub fn load_returns_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_returns_csv(&text)
}
