//! Rate constants and empirical checks of the convergence theory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem and schedule constants entering the rate bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Strong convexity modulus of `f`.
    pub mu: f64,
    /// Lipschitz constant of `h`.
    pub l_h: f64,
    /// Second-moment bound of the stochastic gradient.
    pub sigma: f64,
    /// Strong concavity modulus of the dual function.
    pub alpha: f64,
    /// Lipschitz modulus at the origin of the inverse KKT operator.
    pub a_l: f64,
    /// Diameter of `X`.
    pub d: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub eta: f64,
    pub beta: f64,
}

/// Exact-ALM dual contraction factor and the derived fixed-budget rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contraction {
    /// `theta = (1 + alpha c)^{-2}`.
    pub theta: f64,
    /// `rho = 2 theta`.
    pub rho: f64,
    /// Whether `theta < 1/2`, so that `rho < 1`.
    pub linear: bool,
}

fn require_positive(pairs: &[(&str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

pub fn contraction_theta(alpha: f64, c: f64) -> Result<Contraction> {
    require_positive(&[("alpha", alpha), ("c", c)])?;
    let theta = (1.0 + alpha * c).powi(-2);
    Ok(Contraction {
        theta,
        rho: 2.0 * theta,
        linear: theta < 0.5,
    })
}

/// `theta' = [((2 + alpha c) a_l) / (c + alpha c^2)]^2`.
pub fn theta_prime(alpha: f64, c: f64, a_l: f64) -> Result<f64> {
    require_positive(&[("alpha", alpha), ("c", c), ("a_l", a_l)])?;
    Ok(((2.0 + alpha * c) * a_l / (c + alpha * c * c)).powi(2))
}

/// `v = max{eta^2 tau_hi^2 sigma^2 / (2 mu eta tau_lo - 1), (beta + 1) d^2}`.
pub fn lemma34_v(tc: &TheoryConstants) -> Result<f64> {
    let denom = 2.0 * tc.mu * tc.eta * tc.tau_lo - 1.0;
    if !(denom > 0.0) {
        return Err(Error::AssumptionViolated(format!(
            "2 mu eta tau_lo > 1 fails: 2 * {} * {} * {} = {}",
            tc.mu,
            tc.eta,
            tc.tau_lo,
            denom + 1.0
        )));
    }
    let noise = (tc.eta * tc.tau_hi * tc.sigma).powi(2) / denom;
    Ok(noise.max((tc.beta + 1.0) * tc.d * tc.d))
}

/// Least-squares fit of `log(value)` on `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Estimate of `log rho`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl RateFit {
    pub fn rate(&self) -> f64 {
        self.slope.exp()
    }
}

pub fn fit_linear_rate(trajectory: &[(f64, f64)]) -> Result<RateFit> {
    if trajectory.len() < 5 {
        return Err(Error::Parameter(format!(
            "rate fit needs at least 5 points, got {}",
            trajectory.len()
        )));
    }
    let mut pts = Vec::with_capacity(trajectory.len());
    for (i, &(k, v)) in trajectory.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::LogDomain { index: i, value: v });
        }
        pts.push((k, v.ln()));
    }
    let n = pts.len() as f64;
    let mk = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mk).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mk) * (p.1 - ml)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - ml).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("rate fit needs distinct k values".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept: ml - slope * mk,
        r_squared,
    })
}

/// Measured versus predicted growth of the total inner work between two
/// accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub eps1: f64,
    pub eps2: f64,
    pub budget1: u64,
    pub budget2: u64,
    /// `budget2 / budget1`.
    pub measured: f64,
    /// `(eps1 / eps2)^{1+q}`.
    pub predicted: f64,
    /// `measured / predicted` lies in `[1/factor, factor]`.
    pub agrees: bool,
}

pub fn complexity_check(eps1: f64, eps2: f64, budgets: (u64, u64), q: f64, factor: f64) -> Result<ComplexityReport> {
    if !(eps2 > 0.0 && eps1 >= eps2) {
        return Err(Error::Parameter(format!(
            "accuracies must satisfy eps1 >= eps2 > 0, got {eps1} and {eps2}"
        )));
    }
    require_positive(&[("q", q), ("factor", factor)])?;
    if budgets.0 == 0 {
        return Err(Error::Parameter("budget to reach eps1 must be positive".into()));
    }
    let measured = budgets.1 as f64 / budgets.0 as f64;
    let predicted = (eps1 / eps2).powf(1.0 + q);
    let ratio = measured / predicted;
    Ok(ComplexityReport {
        eps1,
        eps2,
        budget1: budgets.0,
        budget2: budgets.1,
        measured,
        predicted,
        agrees: ratio >= 1.0 / factor && ratio <= factor,
    })
}

/// Cumulative work at the first point of `(cum_inner, value)` where
/// `value <= eps`.
pub fn budget_to_reach(path: &[(u64, f64)], eps: f64) -> Result<u64> {
    path.iter()
        .find(|(_, v)| *v <= eps)
        .map(|(b, _)| *b)
        .ok_or_else(|| Error::UnreachableAccuracy {
            eps,
            best: path.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        })
}
