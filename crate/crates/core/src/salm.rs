//! Stochastic ALM by noise injection: exact subproblem solves perturbed by
//! zero-mean noise, with a decaying penalty `c^k = c0 (k+1)^{-q}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::auglag::{auglag_grad_full_into, MultiplierVector, PenaltyState};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::problem::StochasticProblem;
use crate::rng::{streams, RngStream};

/// Default iteration cap of [`exact_subproblem`].
pub const MAX_SUBPROBLEM_ITERS: usize = 1_000_000;

/// Zero-mean noise laws, each scaled so that `E|eps|^2 = sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    /// `N(0, sigma^2 / n)` per component.
    #[default]
    Gaussian,
    /// `U[-sigma sqrt(3/n), sigma sqrt(3/n)]` per component.
    Uniform,
    /// `+-sigma / sqrt(n)` per component.
    Rademacher,
}

impl NoiseLaw {
    pub fn sample(self, sigma: f64, n: usize, rng: &mut RngStream) -> Vec<f64> {
        let s = sigma / (n as f64).sqrt();
        match self {
            NoiseLaw::Gaussian => (0..n).map(|_| s * rng.normal()).collect(),
            NoiseLaw::Uniform => {
                let half = s * 3f64.sqrt();
                (0..n).map(|_| rng.uniform(-half, half)).collect()
            }
            NoiseLaw::Rademacher => (0..n).map(|_| s * rng.rademacher()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SalmConfig {
    pub c0: f64,
    /// Penalty decay exponent in `(1/2, 1]`.
    pub q: f64,
    pub sigma: f64,
    pub noise_law: NoiseLaw,
    pub outer_iters: usize,
    pub inner_tol: f64,
    pub seeds: Vec<u64>,
}

impl Default for SalmConfig {
    fn default() -> Self {
        Self {
            c0: 1.0,
            q: 0.75,
            sigma: 0.1,
            noise_law: NoiseLaw::Gaussian,
            outer_iters: 200,
            inner_tol: 1e-10,
            seeds: vec![0],
        }
    }
}

impl SalmConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            errs.push(format!("c0 must be positive, got {}", self.c0));
        }
        if !(self.q > 0.5 && self.q <= 1.0) {
            errs.push(format!(
                "q must lie in (1/2, 1] so that sum c^k diverges and sum (c^k)^2 converges, got {}",
                self.q
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            errs.push(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(self.inner_tol > 0.0) {
            errs.push(format!("inner_tol must be positive, got {}", self.inner_tol));
        }
        if self.seeds.is_empty() {
            errs.push("seeds must not be empty".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// `c^k = c0 (k+1)^{-q}`.
    pub fn penalty(&self, k: usize) -> f64 {
        self.c0 * ((k + 1) as f64).powf(-self.q)
    }
}

/// Unit-step projected gradient residual `|x - P_X(x - g)|`.
pub fn projected_residual(prob: &StochasticProblem, x: &[f64], g: &[f64]) -> f64 {
    let mut z: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    prob.project(&mut z);
    linalg::dist(x, &z)
}

/// `argmin_{x in X} L(x, y, c)` from `P_X(0)`.
pub fn exact_subproblem(prob: &StochasticProblem, st: &PenaltyState, tol: f64) -> Result<Vec<f64>> {
    let x0 = prob.projected(&vec![0.0; prob.dim()]);
    exact_subproblem_from(prob, st, &x0, tol, MAX_SUBPROBLEM_ITERS)
}

/// Accelerated projected gradient with backtracking and adaptive restart,
/// warm-started at `x_start`. Stops once the unit-step projected gradient
/// residual is at most `tol`.
pub fn exact_subproblem_from(
    prob: &StochasticProblem,
    st: &PenaltyState,
    x_start: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = prob.dim();
    let mut x = prob.projected(x_start);
    let mut gx = vec![0.0; n];
    auglag_grad_full_into(prob, &x, st, &mut gx)?;
    let mut residual = projected_residual(prob, &x, &gx);
    if residual <= tol {
        return Ok(x);
    }

    let mut lip = 1.0_f64;
    let mut z = x.clone();
    let mut gz = gx.clone();
    let mut t = 1.0_f64;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    for _ in 0..max_iters {
        // backtracking on the gradient-difference form of the descent condition
        loop {
            for i in 0..n {
                x_new[i] = z[i] - gz[i] / lip;
            }
            prob.project(&mut x_new);
            auglag_grad_full_into(prob, &x_new, st, &mut g_new)?;
            let mut dd = 0.0;
            let mut dg = 0.0;
            for i in 0..n {
                let d = x_new[i] - z[i];
                dd += d * d;
                dg += d * (g_new[i] - gz[i]);
            }
            if dg <= lip * dd || dd == 0.0 {
                break;
            }
            lip *= 2.0;
            if !lip.is_finite() {
                return Err(Error::NonConvergence {
                    iterations: 0,
                    residual,
                });
            }
        }
        residual = projected_residual(prob, &x_new, &g_new);
        if residual <= tol {
            return Ok(x_new);
        }
        if !residual.is_finite() {
            break;
        }
        // restart when the momentum direction opposes progress
        let mut align = 0.0;
        for i in 0..n {
            align += (z[i] - x_new[i]) * (x_new[i] - x[i]);
        }
        if align > 0.0 {
            t = 1.0;
            z.copy_from_slice(&x_new);
            gz.copy_from_slice(&g_new);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            for i in 0..n {
                z[i] = x_new[i] + mom * (x_new[i] - x[i]);
            }
            t = t_next;
            auglag_grad_full_into(prob, &z, st, &mut gz)?;
        }
        x.copy_from_slice(&x_new);
        lip *= 0.9;
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        residual,
    })
}

/// One noise-injected run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalmTrajectory {
    pub seed: u64,
    /// `c^k` for `k = 0..=K`.
    pub c: Vec<f64>,
    /// `|y^k - y*|^2` for `k = 0..=K`.
    pub dist_sq_y: Vec<f64>,
    /// `|yhat^{k+1} - y*|` of the noiseless update from `y^k`, `k = 0..K`.
    pub dist_y_hat: Vec<f64>,
    /// Norm of the sample mean of the injected noise.
    pub noise_mean_norm: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Runs one seed from `y^0 = 0`.
pub fn salm_seed(prob: &StochasticProblem, cfg: &SalmConfig, seed: u64, y_star: &[f64]) -> Result<SalmTrajectory> {
    let m = prob.num_constraints();
    if y_star.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: y_star.len(),
        });
    }
    let n = prob.dim();
    let mut rng = RngStream::new(seed, streams::NOISE);
    let mut y = MultiplierVector::zeros(m);
    let mut x_hat = prob.projected(&vec![0.0; n]);
    let mut noise_sum = vec![0.0; n];
    let mut traj = SalmTrajectory {
        seed,
        c: (0..=cfg.outer_iters).map(|k| cfg.penalty(k)).collect(),
        dist_sq_y: vec![linalg::dist_sq(y.as_slice(), y_star)],
        dist_y_hat: Vec::with_capacity(cfg.outer_iters),
        noise_mean_norm: 0.0,
        x: x_hat.clone(),
        y: Vec::new(),
    };
    for k in 0..cfg.outer_iters {
        let c = cfg.penalty(k);
        let st = PenaltyState::new(c, y.clone())?;
        x_hat = exact_subproblem_from(prob, &st, &x_hat, cfg.inner_tol, MAX_SUBPROBLEM_ITERS)?;
        let y_hat = y.update(c, &prob.constraint_values(&x_hat))?;
        traj.dist_y_hat.push(linalg::dist(y_hat.as_slice(), y_star));

        let eps = cfg.noise_law.sample(cfg.sigma, n, &mut rng);
        linalg::axpy(1.0, &eps, &mut noise_sum);
        let mut x = x_hat.clone();
        linalg::axpy(-c, &eps, &mut x);
        prob.project(&mut x);
        y = y.update(c, &prob.constraint_values(&x))?;
        traj.dist_sq_y.push(linalg::dist_sq(y.as_slice(), y_star));
        traj.x = x;
    }
    if cfg.outer_iters > 0 {
        traj.noise_mean_norm = linalg::norm(&noise_sum) / cfg.outer_iters as f64;
    }
    traj.y = y.into_vec();
    Ok(traj)
}

/// Runs every seed of `cfg`, in parallel when available.
pub fn salm_run(prob: &StochasticProblem, cfg: &SalmConfig, y_star: &[f64]) -> Result<Vec<SalmTrajectory>> {
    cfg.validate()?;
    par::map_indexed(cfg.seeds.len(), |i| salm_seed(prob, cfg, cfg.seeds[i], y_star))
        .into_iter()
        .collect()
}

pub const SALM_COLUMNS: [&str; 4] = ["seed", "k", "c_k", "dist_sq_y"];

/// Trajectory CSV with columns `seed,k,c_k,dist_sq_y`.
pub fn trajectory_to_csv(traj: &SalmTrajectory) -> String {
    let mut out = SALM_COLUMNS.join(",");
    out.push('\n');
    for (k, (c, d)) in traj.c.iter().zip(&traj.dist_sq_y).enumerate() {
        out.push_str(&format!("{},{},{:.16e},{:.16e}\n", traj.seed, k, c, d));
    }
    out
}

pub fn write_trajectory_csv(path: impl AsRef<Path>, traj: &SalmTrajectory) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, trajectory_to_csv(traj)).map_err(|e| Error::io(path, e))
}
