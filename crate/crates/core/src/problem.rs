//! The constrained stochastic problem abstraction.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::projection::FeasibleSet;
use crate::rng::RngStream;

/// A smooth convex function with gradient.
pub trait SmoothFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// `out += scale * grad(x)`.
    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]);
}

/// One draw of the random objective component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Draw {
    /// Index into a finite sample set.
    Index(usize),
    /// Seed of a fresh realization, for expectation-form samplers.
    Seeded(u64),
}

/// The stochastic objective component `F(x, xi)`.
pub trait ObjectiveSampler: Send + Sync {
    /// `Some(N)` when `xi` is uniform over `N` stored samples.
    fn finite_sum_size(&self) -> Option<usize>;

    fn sample_value(&self, draw: Draw, x: &[f64]) -> f64;

    /// `out += scale * grad_x F(x, draw)`.
    fn add_sample_gradient(&self, draw: Draw, x: &[f64], scale: f64, out: &mut [f64]);

    fn draw(&self, rng: &mut RngStream) -> Draw {
        match self.finite_sum_size() {
            Some(n) => Draw::Index(rng.index(n)),
            None => Draw::Seeded(rng.next_u64()),
        }
    }

    /// Exact mean `(1/N) sum_i F(x, xi_i)`; `None` for expectation-form
    /// samplers.
    fn mean_value(&self, x: &[f64]) -> Option<f64> {
        let n = self.finite_sum_size()?;
        let total = par::chunked_sum(n, 1, |range, acc| {
            for i in range {
                acc[0] += self.sample_value(Draw::Index(i), x);
            }
        });
        Some(total[0] / n as f64)
    }

    /// `out += scale * grad of the mean`; returns `false` (leaving `out`
    /// untouched) for expectation-form samplers.
    fn add_mean_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) -> bool {
        let Some(n) = self.finite_sum_size() else {
            return false;
        };
        let w = scale / n as f64;
        let g = par::chunked_sum(n, x.len(), |range, acc| {
            for i in range {
                self.add_sample_gradient(Draw::Index(i), x, 1.0, acc);
            }
        });
        linalg::axpy(w, &g, out);
        true
    }

    /// A finite-sum surrogate built from `size` fresh draws of the seeded
    /// stream `seed`. Used to evaluate expectation-form objectives.
    fn held_out(&self, size: usize, seed: u64) -> Arc<dyn ObjectiveSampler>;
}

/// Finite sample of draws from another sampler.
pub struct FrozenDraws {
    inner: Arc<dyn ObjectiveSampler>,
    draws: Vec<Draw>,
}

impl FrozenDraws {
    pub fn new(inner: Arc<dyn ObjectiveSampler>, size: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, crate::rng::streams::HELD_OUT);
        let draws = (0..size).map(|_| inner.draw(&mut rng)).collect();
        Self { inner, draws }
    }
}

impl ObjectiveSampler for FrozenDraws {
    fn finite_sum_size(&self) -> Option<usize> {
        Some(self.draws.len())
    }

    fn sample_value(&self, draw: Draw, x: &[f64]) -> f64 {
        match draw {
            Draw::Index(i) => self.inner.sample_value(self.draws[i], x),
            Draw::Seeded(_) => self.inner.sample_value(draw, x),
        }
    }

    fn add_sample_gradient(&self, draw: Draw, x: &[f64], scale: f64, out: &mut [f64]) {
        match draw {
            Draw::Index(i) => self.inner.add_sample_gradient(self.draws[i], x, scale, out),
            Draw::Seeded(_) => self.inner.add_sample_gradient(draw, x, scale, out),
        }
    }

    fn held_out(&self, size: usize, seed: u64) -> Arc<dyn ObjectiveSampler> {
        self.inner.held_out(size, seed)
    }
}

/// The constraint functions `h_1..h_M`.
pub trait ConstraintSet: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, j: usize, x: &[f64]) -> f64;

    /// `out += scale * grad h_j(x)`.
    fn add_gradient(&self, j: usize, x: &[f64], scale: f64, out: &mut [f64]);

    /// Writes `h(x)` into `out`.
    fn values_into(&self, x: &[f64], out: &mut [f64]) {
        par::fill_indexed(out, |j| self.value(j, x));
    }
}

/// Quadratic `0.5 x^T P x + q^T x + r` with dense symmetric `P` (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub dim: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub r: f64,
}

impl Quadratic {
    pub fn new(p: Vec<f64>, q: Vec<f64>, r: f64) -> Result<Self> {
        let dim = q.len();
        if p.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                got: p.len(),
            });
        }
        Ok(Self { dim, p, q, r })
    }
}

/// Affine function `q^T x + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub q: Vec<f64>,
    pub r: f64,
}

impl SmoothFunction for Linear {
    fn value(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.q, x) + self.r
    }

    fn add_gradient(&self, _x: &[f64], scale: f64, out: &mut [f64]) {
        linalg::axpy(scale, &self.q, out);
    }
}

impl SmoothFunction for Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        let mut quad = 0.0;
        for i in 0..self.dim {
            quad += x[i] * linalg::dot(&self.p[i * self.dim..(i + 1) * self.dim], x);
        }
        0.5 * quad + linalg::dot(&self.q, x) + self.r
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for i in 0..self.dim {
            out[i] += scale * (linalg::dot(&self.p[i * self.dim..(i + 1) * self.dim], x) + self.q[i]);
        }
    }
}

/// Wraps value/gradient closures as a [`SmoothFunction`].
pub struct FnFunction<V, G> {
    value: V,
    gradient: G,
}

impl<V, G> FnFunction<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    /// `gradient(x, g)` must overwrite `g` with the gradient at `x`.
    pub fn new(value: V, gradient: G) -> Self {
        Self { value, gradient }
    }
}

impl<V, G> SmoothFunction for FnFunction<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let mut g = vec![0.0; x.len()];
        (self.gradient)(x, &mut g);
        linalg::axpy(scale, &g, out);
    }
}

/// A list of individually specified constraint functions.
#[derive(Clone, Default)]
pub struct FunctionConstraints(pub Vec<Arc<dyn SmoothFunction>>);

impl ConstraintSet for FunctionConstraints {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn value(&self, j: usize, x: &[f64]) -> f64 {
        self.0[j].value(x)
    }

    fn add_gradient(&self, j: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        self.0[j].add_gradient(x, scale, out)
    }
}

/// Linear inequalities `A x <= b` with row-major `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraints {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl LinearConstraints {
    pub fn new(a: Vec<f64>, b: Vec<f64>, cols: usize) -> Result<Self> {
        let rows = b.len();
        if a.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: a.len(),
            });
        }
        Ok(Self { rows, cols, a, b })
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.a[j * self.cols..(j + 1) * self.cols]
    }
}

impl ConstraintSet for LinearConstraints {
    fn len(&self) -> usize {
        self.rows
    }

    fn value(&self, j: usize, x: &[f64]) -> f64 {
        linalg::dot(self.row(j), x) - self.b[j]
    }

    fn add_gradient(&self, j: usize, _x: &[f64], scale: f64, out: &mut [f64]) {
        linalg::axpy(scale, self.row(j), out);
    }
}

/// Convex constraints given as quadratics, `h_j(x) = q_j(x) <= 0`.
#[derive(Debug, Clone, Default)]
pub struct QuadraticConstraints(pub Vec<Quadratic>);

impl ConstraintSet for QuadraticConstraints {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn value(&self, j: usize, x: &[f64]) -> f64 {
        self.0[j].value(x)
    }

    fn add_gradient(&self, j: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        self.0[j].add_gradient(x, scale, out)
    }
}

/// A constrained stochastic convex problem
/// `min f0(x) + E F(x, xi)  s.t. h(x) <= 0, x in X`.
#[derive(Clone)]
pub struct StochasticProblem {
    dim: usize,
    f0: Option<Arc<dyn SmoothFunction>>,
    sampler: Option<Arc<dyn ObjectiveSampler>>,
    constraints: Arc<dyn ConstraintSet>,
    set: FeasibleSet,
    witness: Option<Vec<f64>>,
    name: String,
}

impl fmt::Debug for StochasticProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StochasticProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("num_constraints", &self.constraints.len())
            .field("finite_sum_size", &self.finite_sum_size())
            .field("set", &self.set)
            .finish()
    }
}

impl StochasticProblem {
    pub fn new(dim: usize, constraints: Arc<dyn ConstraintSet>, set: FeasibleSet) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("dimension must be positive".into()));
        }
        if let FeasibleSet::Product { blocks } = &set {
            let end = blocks.last().map_or(0, |b| b.range.end);
            if end != dim {
                return Err(Error::BlockLayout(format!(
                    "product set covers 0..{end}, problem dimension is {dim}"
                )));
            }
        }
        if let FeasibleSet::Ball { center, .. } = &set {
            if center.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: center.len(),
                });
            }
        }
        Ok(Self {
            dim,
            f0: None,
            sampler: None,
            constraints,
            set,
            witness: None,
            name: String::from("problem"),
        })
    }

    pub fn with_deterministic(mut self, f0: Arc<dyn SmoothFunction>) -> Self {
        self.f0 = Some(f0);
        self
    }

    pub fn with_sampler(mut self, sampler: Arc<dyn ObjectiveSampler>) -> Self {
        self.sampler = Some(sampler);
        self
    }

    pub fn with_witness(mut self, witness: Vec<f64>) -> Self {
        self.witness = Some(witness);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn deterministic(&self) -> Option<&Arc<dyn SmoothFunction>> {
        self.f0.as_ref()
    }

    pub fn sampler(&self) -> Option<&Arc<dyn ObjectiveSampler>> {
        self.sampler.as_ref()
    }

    pub fn constraints(&self) -> &Arc<dyn ConstraintSet> {
        &self.constraints
    }

    /// A strictly feasible point supplied by the generator, if any.
    pub fn witness(&self) -> Option<&[f64]> {
        self.witness.as_deref()
    }

    /// `Some(N)` for finite-sum objectives, `Some(0)` when there is no
    /// random component, `None` for expectation form.
    pub fn finite_sum_size(&self) -> Option<usize> {
        match &self.sampler {
            None => Some(0),
            Some(s) => s.finite_sum_size(),
        }
    }

    /// Whether the full objective can be evaluated exactly.
    pub fn is_deterministic_evaluable(&self) -> bool {
        self.finite_sum_size().is_some()
    }

    pub fn project(&self, x: &mut [f64]) {
        self.set.project(x)
    }

    pub fn projected(&self, x: &[f64]) -> Vec<f64> {
        self.set.projected(x)
    }

    /// Full objective `f0(x) + (1/N) sum_i F(x, xi_i)`.
    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        let mut v = self.f0.as_ref().map_or(0.0, |f| f.value(x));
        if let Some(s) = &self.sampler {
            v += s.mean_value(x).ok_or(Error::UnsupportedExactEvaluation)?;
        }
        Ok(v)
    }

    /// `out += scale * grad f(x)` for the full objective.
    pub fn add_objective_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        if let Some(s) = &self.sampler {
            if !s.add_mean_gradient(x, scale, out) {
                return Err(Error::UnsupportedExactEvaluation);
            }
        }
        if let Some(f) = &self.f0 {
            f.add_gradient(x, scale, out);
        }
        Ok(())
    }

    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.num_constraints()];
        self.constraints.values_into(x, &mut h);
        h
    }

    /// Copy of this problem whose random objective is replaced by a
    /// held-out finite sample of `size` draws. Finite-sum and deterministic
    /// problems are returned unchanged.
    pub fn with_held_out_objective(&self, size: usize, seed: u64) -> Self {
        let mut out = self.clone();
        if let Some(s) = &self.sampler {
            if s.finite_sum_size().is_none() {
                out.sampler = Some(s.held_out(size, seed));
            }
        }
        out
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Averaged and maximum positive-part violation of `h`.
pub fn violations(hvals: &[f64]) -> (f64, f64) {
    if hvals.is_empty() {
        return (0.0, 0.0);
    }
    let mut sum = 0.0;
    let mut max = 0.0_f64;
    for &h in hvals {
        let v = h.max(0.0);
        sum += v;
        max = max.max(v);
    }
    (sum / hvals.len() as f64, max)
}
