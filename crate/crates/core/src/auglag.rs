//! Augmented Lagrangian
//! `L(x, y, c) = f(x) + (c/2) |(h(x) + y/c)_+|^2 - |y|^2 / (2c)`,
//! its exact and stochastic gradients, and the multiplier update.

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{Draw, StochasticProblem};
use crate::rng::RngStream;

/// Componentwise nonnegative multiplier estimate `y`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiplierVector(Vec<f64>);

impl MultiplierVector {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    /// Rejects negative or non-finite components.
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if let Some((j, v)) = y.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Parameter(format!("multiplier {j} must be finite and nonnegative, got {v}")));
        }
        Ok(Self(y))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `max(0, y + c h)`.
    pub fn update(&self, c: f64, hvals: &[f64]) -> Result<Self> {
        multiplier_update(self, c, hvals)
    }
}

/// `y_j <- max(0, y_j + c h_j)`.
pub fn multiplier_update(y: &MultiplierVector, c: f64, hvals: &[f64]) -> Result<MultiplierVector> {
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("penalty must be positive, got {c}")));
    }
    if hvals.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: hvals.len(),
        });
    }
    Ok(MultiplierVector(
        y.0.iter().zip(hvals).map(|(y, h)| (y + c * h).max(0.0)).collect(),
    ))
}

/// Penalty `c > 0` together with the current multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    c: f64,
    y: MultiplierVector,
}

impl PenaltyState {
    pub fn new(c: f64, y: MultiplierVector) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Parameter(format!("penalty must be positive, got {c}")));
        }
        Ok(Self { c, y })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn y(&self) -> &MultiplierVector {
        &self.y
    }

    pub fn set_y(&mut self, y: MultiplierVector) {
        self.y = y;
    }

    /// Penalty weight `c (h_j + y_j / c)_+ = (y_j + c h_j)_+`.
    fn weight(&self, j: usize, h: f64) -> f64 {
        (self.y.0[j] + self.c * h).max(0.0)
    }

    fn check(&self, prob: &StochasticProblem) -> Result<()> {
        if self.y.len() != prob.num_constraints() {
            return Err(Error::Dimension {
                expected: prob.num_constraints(),
                got: self.y.len(),
            });
        }
        Ok(())
    }
}

/// Objective draws `xi` and constraint indices `zeta` for one stochastic
/// gradient.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleBatch {
    pub xi: Vec<Draw>,
    pub zeta: Vec<usize>,
}

impl SampleBatch {
    pub fn new(xi: Vec<Draw>, zeta: Vec<usize>) -> Self {
        Self { xi, zeta }
    }

    /// `batch_obj` objective draws and `batch_con` constraint indices drawn
    /// uniformly with replacement. A problem without a random objective
    /// gets no objective draws.
    pub fn draw(prob: &StochasticProblem, batch_obj: usize, batch_con: usize, rng: &mut RngStream) -> Self {
        let mut b = Self::default();
        b.redraw(prob, batch_obj, batch_con, rng);
        b
    }

    /// Refills in place; objective draws come first, then constraint indices.
    pub fn redraw(&mut self, prob: &StochasticProblem, batch_obj: usize, batch_con: usize, rng: &mut RngStream) {
        self.xi.clear();
        self.zeta.clear();
        if let Some(s) = prob.sampler() {
            self.xi.extend((0..batch_obj).map(|_| s.draw(rng)));
        }
        let m = prob.num_constraints();
        if m > 0 {
            self.zeta.extend((0..batch_con).map(|_| rng.index(m)));
        }
    }

    /// Every objective sample and every constraint exactly once.
    pub fn full(prob: &StochasticProblem) -> Result<Self> {
        let n = prob.finite_sum_size().ok_or(Error::UnsupportedExactEvaluation)?;
        Ok(Self {
            xi: (0..n).map(Draw::Index).collect(),
            zeta: (0..prob.num_constraints()).collect(),
        })
    }

    pub fn validate(&self, prob: &StochasticProblem) -> Result<()> {
        if prob.sampler().is_some() && self.xi.is_empty() {
            return Err(Error::Batch("objective batch is empty".into()));
        }
        let m = prob.num_constraints();
        if m > 0 && self.zeta.is_empty() {
            return Err(Error::Batch("constraint batch is empty".into()));
        }
        if let Some(j) = self.zeta.iter().find(|j| **j >= m) {
            return Err(Error::Batch(format!("constraint index {j} out of range 0..{m}")));
        }
        if let Some(n) = prob.sampler().and_then(|s| s.finite_sum_size()) {
            for d in &self.xi {
                if let Draw::Index(i) = d {
                    if *i >= n {
                        return Err(Error::Batch(format!("sample index {i} out of range 0..{n}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `L(x, y, c)` with the exact objective.
pub fn auglag_value(prob: &StochasticProblem, x: &[f64], st: &PenaltyState) -> Result<f64> {
    prob.check_point(x)?;
    st.check(prob)?;
    let f = prob.objective_value(x)?;
    let h = prob.constraint_values(x);
    let c = st.c;
    let penalty: f64 = h.iter().enumerate().map(|(j, hj)| st.weight(j, *hj).powi(2)).sum();
    Ok(f + (penalty - linalg::norm_sq(st.y.as_slice())) / (2.0 * c))
}

/// `grad f(x) + c sum_j (h_j(x) + y_j/c)_+ grad h_j(x)`.
pub fn auglag_grad_full(prob: &StochasticProblem, x: &[f64], st: &PenaltyState) -> Result<Vec<f64>> {
    let mut g = vec![0.0; prob.dim()];
    auglag_grad_full_into(prob, x, st, &mut g)?;
    Ok(g)
}

/// Writes the exact gradient into `out`.
pub fn auglag_grad_full_into(prob: &StochasticProblem, x: &[f64], st: &PenaltyState, out: &mut [f64]) -> Result<()> {
    prob.check_point(x)?;
    st.check(prob)?;
    out.fill(0.0);
    prob.add_objective_gradient(x, 1.0, out)?;
    let cons = prob.constraints();
    let h = prob.constraint_values(x);
    for (j, hj) in h.iter().enumerate() {
        let w = st.weight(j, *hj);
        if w > 0.0 {
            cons.add_gradient(j, x, w, out);
        }
    }
    Ok(())
}

/// Unbiased estimate
/// `grad f0 + (1/B_obj) sum_xi grad F + (M/B_con) sum_zeta c (h_j + y_j/c)_+ grad h_j`.
pub fn stoch_grad(prob: &StochasticProblem, w: &[f64], st: &PenaltyState, batch: &SampleBatch) -> Result<Vec<f64>> {
    let mut g = vec![0.0; prob.dim()];
    stoch_grad_into(prob, w, st, batch, &mut g)?;
    Ok(g)
}

/// Writes the stochastic gradient into `out`.
pub fn stoch_grad_into(
    prob: &StochasticProblem,
    w: &[f64],
    st: &PenaltyState,
    batch: &SampleBatch,
    out: &mut [f64],
) -> Result<()> {
    prob.check_point(w)?;
    st.check(prob)?;
    batch.validate(prob)?;
    out.fill(0.0);
    if let Some(f0) = prob.deterministic() {
        f0.add_gradient(w, 1.0, out);
    }
    if let Some(s) = prob.sampler() {
        let scale = 1.0 / batch.xi.len() as f64;
        for d in &batch.xi {
            s.add_sample_gradient(*d, w, scale, out);
        }
    }
    if !batch.zeta.is_empty() {
        let cons = prob.constraints();
        let scale = prob.num_constraints() as f64 / batch.zeta.len() as f64;
        for &j in &batch.zeta {
            let wj = st.weight(j, cons.value(j, w));
            if wj > 0.0 {
                cons.add_gradient(j, w, scale * wj, out);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::problem::{FunctionConstraints, Linear, Quadratic, SmoothFunction};
    use crate::problems::{QcqpInstance, SampleMode};
    use crate::projection::FeasibleSet;

    /// `f(x) = x^2`, `h(x) = x - 1`.
    fn scalar_problem() -> StochasticProblem {
        let h: Arc<dyn SmoothFunction> = Arc::new(Linear { q: vec![1.0], r: -1.0 });
        StochasticProblem::new(1, Arc::new(FunctionConstraints(vec![h])), FeasibleSet::Whole)
            .unwrap()
            .with_deterministic(Arc::new(Quadratic::new(vec![2.0], vec![0.0], 0.0).unwrap()))
    }

    fn state(c: f64, y: &[f64]) -> PenaltyState {
        PenaltyState::new(c, MultiplierVector::new(y.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn value_examples() {
        let p = scalar_problem();
        assert_eq!(auglag_value(&p, &[0.0], &state(2.0, &[0.0])).unwrap(), 0.0);
        assert_eq!(auglag_value(&p, &[2.0], &state(2.0, &[0.0])).unwrap(), 5.0);
        assert_eq!(auglag_value(&p, &[0.0], &state(2.0, &[2.0])).unwrap(), -1.0);
    }

    #[test]
    fn gradient_examples() {
        let p = scalar_problem();
        assert_eq!(auglag_grad_full(&p, &[0.0], &state(2.0, &[0.0])).unwrap(), vec![0.0]);
        assert_eq!(auglag_grad_full(&p, &[2.0], &state(2.0, &[0.0])).unwrap(), vec![6.0]);
    }

    #[test]
    fn multiplier_update_examples() {
        let y = MultiplierVector::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(y.update(2.0, &[-1.0, 0.5]).unwrap().as_slice(), &[0.0, 3.0]);
        let z = MultiplierVector::zeros(3);
        assert_eq!(z.update(4.0, &[-1.0, 0.0, -0.1]).unwrap(), z);
        let y = MultiplierVector::new(vec![5.0]).unwrap();
        assert_eq!(y.update(1.0, &[0.0]).unwrap().as_slice(), &[5.0]);
        assert!(matches!(y.update(1.0, &[0.0, 1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rejects_negative_multipliers_and_penalty() {
        assert!(MultiplierVector::new(vec![0.0, -1e-3]).is_err());
        assert!(PenaltyState::new(0.0, MultiplierVector::zeros(1)).is_err());
    }

    #[test]
    fn full_batch_equals_exact_gradient() {
        let inst = QcqpInstance::generate(3, 2, 2, SampleMode::FiniteSum { samples: 4 }, 5).unwrap();
        let p = inst.to_problem();
        let st = state(3.0, &[0.5, 1.5]);
        let x = [0.4, -0.9, 1.3];
        let exact = auglag_grad_full(&p, &x, &st).unwrap();
        let full = stoch_grad(&p, &x, &st, &SampleBatch::full(&p).unwrap()).unwrap();
        for (a, b) in exact.iter().zip(&full) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn single_constraint_scale_is_one() {
        let p = scalar_problem();
        let st = state(2.0, &[0.0]);
        let b = SampleBatch::new(vec![], vec![0]);
        assert_eq!(stoch_grad(&p, &[2.0], &st, &b).unwrap(), vec![6.0]);
    }

    #[test]
    fn batch_errors() {
        let p = scalar_problem();
        let st = state(2.0, &[0.0]);
        let b = SampleBatch::new(vec![], vec![1]);
        assert!(matches!(stoch_grad(&p, &[0.0], &st, &b), Err(Error::Batch(_))));
        let b = SampleBatch::new(vec![], vec![]);
        assert!(matches!(stoch_grad(&p, &[0.0], &st, &b), Err(Error::Batch(_))));
    }

    #[test]
    fn expectation_form_has_no_exact_value() {
        let p = QcqpInstance::generate(3, 2, 1, SampleMode::Expectation, 1).unwrap().to_problem();
        assert!(matches!(
            auglag_value(&p, &[0.0; 3], &state(1.0, &[0.0])),
            Err(Error::UnsupportedExactEvaluation)
        ));
    }
}
