//! TOML-configured experiments: instance construction, solver runs over
//! seeds, ground truth, metrics files and rate reports.
//!
//! A configuration has three sections:
//!
//! ```toml
//! [problem]
//! kind = "qcqp"          # qcqp | two_stage | cvar | linear_qp | quadratic
//! n = 10
//! p = 5
//! m = 5
//! samples = 1000         # omit for expectation form
//! seed = 1
//!
//! [solver]
//! kind = "rmalm"         # rmalm | salm | pdsg | oracle
//! c = 10.0
//! eta = 5.0
//! beta = 50.0
//!
//! [run]
//! seeds = [1, 2, 3]
//! out = "out"
//! oracle = true
//! ```
//!
//! Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{pdsg_solve, PdsgConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, write_metrics_csv, MetricsRow, Monitor, HELD_OUT_SEED, HELD_OUT_SIZE};
use crate::oracle::{self, GroundTruth};
use crate::par;
use crate::problem::{LinearConstraints, Quadratic, StochasticProblem};
use crate::problems::{
    load_returns_csv, synthetic_returns, LinearQpConstants, LinearQpInstance, PortfolioInstance, QcqpInstance,
    SampleMode, TwoStageInstance,
};
use crate::projection::FeasibleSet;
use crate::rmalm::{self, growth_from, RmalmConfig};
use crate::salm::{self, NoiseLaw, SalmConfig};
use crate::theory::{self, ComplexityReport, RateFit};

fn default_lambda() -> f64 {
    crate::problems::two_stage::DEFAULT_LAMBDA
}

fn default_radius() -> f64 {
    crate::problems::two_stage::DEFAULT_RADIUS
}

fn default_safety() -> f64 {
    0.95
}

/// Source of a returns matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticReturns {
    pub periods: usize,
    pub assets: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Qcqp {
        n: usize,
        p: usize,
        m: usize,
        /// Finite-sum size; expectation form when absent.
        samples: Option<usize>,
        seed: u64,
    },
    TwoStage {
        n: usize,
        scenarios: usize,
        seed: u64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Cvar {
        /// CSV file, relative to the configuration file.
        returns: Option<PathBuf>,
        synthetic: Option<SyntheticReturns>,
        #[serde(default = "default_safety")]
        p: f64,
        min_return: Option<f64>,
        #[serde(default)]
        eps_reg: f64,
    },
    LinearQp {
        n: usize,
        m: usize,
        samples: usize,
        seed: u64,
    },
    /// `min 0.5 x^T P x + q^T x + r  s.t.  A x <= b, x in X`.
    Quadratic {
        hessian: Vec<Vec<f64>>,
        linear: Vec<f64>,
        #[serde(default)]
        constant: f64,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        set: FeasibleSet,
    },
}

/// A constructed problem with its serializable instance data.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub problem: StochasticProblem,
    pub instance: serde_json::Value,
    pub constants: Option<LinearQpConstants>,
}

impl ProblemSpec {
    fn validate(&self, errs: &mut Vec<String>) {
        fn positive(errs: &mut Vec<String>, name: &str, v: usize) {
            if v == 0 {
                errs.push(format!("problem.{name} must be positive"));
            }
        }
        match self {
            ProblemSpec::Qcqp { n, p, m, samples, .. } => {
                positive(errs, "n", *n);
                positive(errs, "p", *p);
                positive(errs, "m", *m);
                if let Some(s) = samples {
                    positive(errs, "samples", *s);
                }
            }
            ProblemSpec::TwoStage {
                n,
                scenarios,
                lambda,
                radius,
                ..
            } => {
                positive(errs, "n", *n);
                positive(errs, "scenarios", *scenarios);
                if !(*lambda > 0.0) {
                    errs.push(format!("problem.lambda must be positive, got {lambda}"));
                }
                if !(*radius > 0.0) {
                    errs.push(format!("problem.radius must be positive, got {radius}"));
                }
            }
            ProblemSpec::Cvar {
                returns,
                synthetic,
                p,
                eps_reg,
                ..
            } => {
                if returns.is_some() == synthetic.is_some() {
                    errs.push("problem: exactly one of returns and synthetic must be given".into());
                }
                if let Some(s) = synthetic {
                    positive(errs, "synthetic.periods", s.periods);
                    positive(errs, "synthetic.assets", s.assets);
                }
                if !(*p > 0.0 && *p < 1.0) {
                    errs.push(format!("problem.p must lie in (0, 1), got {p}"));
                }
                if !(*eps_reg >= 0.0) {
                    errs.push(format!("problem.eps_reg must be nonnegative, got {eps_reg}"));
                }
            }
            ProblemSpec::LinearQp { n, m, samples, .. } => {
                positive(errs, "n", *n);
                positive(errs, "m", *m);
                positive(errs, "samples", *samples);
                if m > n {
                    errs.push(format!("problem.m must not exceed problem.n ({m} > {n})"));
                }
            }
            ProblemSpec::Quadratic {
                hessian, linear, a, b, ..
            } => {
                let n = linear.len();
                positive(errs, "linear length", n);
                if hessian.len() != n || hessian.iter().any(|r| r.len() != n) {
                    errs.push(format!("problem.hessian must be {n} x {n}"));
                }
                if a.len() != b.len() || a.iter().any(|r| r.len() != n) {
                    errs.push(format!("problem.a must be {} x {n}", b.len()));
                }
            }
        }
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Builds the problem. Relative paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<BuiltProblem> {
        Ok(match self {
            ProblemSpec::Qcqp { n, p, m, samples, seed } => {
                let mode = samples.map_or(SampleMode::Expectation, |samples| SampleMode::FiniteSum { samples });
                let inst = QcqpInstance::generate(*n, *p, *m, mode, *seed)?;
                BuiltProblem {
                    problem: inst.to_problem(),
                    instance: serde_json::to_value(&inst)?,
                    constants: None,
                }
            }
            ProblemSpec::TwoStage {
                n,
                scenarios,
                seed,
                lambda,
                radius,
            } => {
                let inst = TwoStageInstance::generate(*n, *scenarios, *seed, *lambda, *radius)?;
                BuiltProblem {
                    problem: inst.to_problem(),
                    instance: serde_json::to_value(&inst)?,
                    constants: None,
                }
            }
            ProblemSpec::Cvar {
                returns,
                synthetic,
                p,
                min_return,
                eps_reg,
            } => {
                let data = match (returns, synthetic) {
                    (Some(path), None) => load_returns_csv(base.join(path))?,
                    (None, Some(s)) => synthetic_returns(s.periods, s.assets, s.seed)?,
                    _ => {
                        return Err(Error::Validation(vec![
                            "problem: exactly one of returns and synthetic must be given".into(),
                        ]))
                    }
                };
                let inst = PortfolioInstance::new(data, *p, *min_return, *eps_reg)?;
                BuiltProblem {
                    problem: inst.to_problem(),
                    instance: serde_json::to_value(&inst)?,
                    constants: None,
                }
            }
            ProblemSpec::LinearQp { n, m, samples, seed } => {
                let inst = LinearQpInstance::generate(*n, *m, *samples, *seed)?;
                BuiltProblem {
                    problem: inst.to_problem(),
                    constants: Some(inst.constants()),
                    instance: serde_json::to_value(&inst)?,
                }
            }
            ProblemSpec::Quadratic {
                hessian,
                linear,
                constant,
                a,
                b,
                set,
            } => {
                let n = linear.len();
                let f = Quadratic::new(hessian.concat(), linear.clone(), *constant)?;
                let cons = LinearConstraints::new(a.concat(), b.clone(), n)?;
                let problem = StochasticProblem::new(n, Arc::new(cons), set.clone())?
                    .with_deterministic(Arc::new(f))
                    .with_name("quadratic");
                BuiltProblem {
                    problem,
                    instance: serde_json::to_value(self)?,
                    constants: None,
                }
            }
        })
    }
}

fn default_growth_base() -> f64 {
    1.7
}

/// RMALM settings; the budget grows by `growth_base^{1+q}` unless
/// `budget_growth` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmalmSection {
    pub c: f64,
    pub s0: u64,
    #[serde(default = "default_growth_base")]
    pub growth_base: f64,
    pub budget_growth: Option<f64>,
    pub q: f64,
    pub tau: f64,
    pub eta: f64,
    pub beta: f64,
    pub batch_obj: usize,
    pub batch_con: Option<usize>,
    pub outer_iters: usize,
    pub budget_cap: Option<u64>,
    pub total_cap: u64,
}

impl Default for RmalmSection {
    fn default() -> Self {
        let d = RmalmConfig::default();
        Self {
            c: d.c,
            s0: d.s0,
            growth_base: default_growth_base(),
            budget_growth: None,
            q: d.q,
            tau: d.tau,
            eta: d.eta,
            beta: d.beta,
            batch_obj: d.batch_obj,
            batch_con: d.batch_con,
            outer_iters: d.outer_iters,
            budget_cap: d.budget_cap,
            total_cap: d.total_cap,
        }
    }
}

impl RmalmSection {
    pub fn to_config(&self, seed: u64) -> RmalmConfig {
        RmalmConfig {
            c: self.c,
            s0: self.s0,
            budget_growth: self.budget_growth.unwrap_or_else(|| growth_from(self.growth_base, self.q)),
            q: self.q,
            tau: self.tau,
            eta: self.eta,
            beta: self.beta,
            batch_obj: self.batch_obj,
            batch_con: self.batch_con,
            outer_iters: self.outer_iters,
            seed,
            budget_cap: self.budget_cap,
            total_cap: self.total_cap,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SalmSection {
    pub c0: f64,
    pub q: f64,
    pub sigma: f64,
    pub noise_law: NoiseLaw,
    pub outer_iters: usize,
    pub inner_tol: f64,
}

impl Default for SalmSection {
    fn default() -> Self {
        let d = SalmConfig::default();
        Self {
            c0: d.c0,
            q: d.q,
            sigma: d.sigma,
            noise_law: d.noise_law,
            outer_iters: d.outer_iters,
            inner_tol: d.inner_tol,
        }
    }
}

impl SalmSection {
    pub fn to_config(&self, seeds: Vec<u64>) -> SalmConfig {
        SalmConfig {
            c0: self.c0,
            q: self.q,
            sigma: self.sigma,
            noise_law: self.noise_law,
            outer_iters: self.outer_iters,
            inner_tol: self.inner_tol,
            seeds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdsgSection {
    pub step0: f64,
    pub decay: f64,
    pub batch_obj: usize,
    pub batch_con: Option<usize>,
    pub iters: usize,
    pub record_every: usize,
}

impl Default for PdsgSection {
    fn default() -> Self {
        let d = PdsgConfig::default();
        Self {
            step0: d.step0,
            decay: d.decay,
            batch_obj: d.batch_obj,
            batch_con: d.batch_con,
            iters: d.iters,
            record_every: d.record_every,
        }
    }
}

impl PdsgSection {
    pub fn to_config(&self, seed: u64) -> PdsgConfig {
        PdsgConfig {
            step0: self.step0,
            decay: self.decay,
            batch_obj: self.batch_obj,
            batch_con: self.batch_con,
            iters: self.iters,
            seed,
            record_every: self.record_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverSpec {
    Rmalm(RmalmSection),
    Salm(SalmSection),
    Pdsg(PdsgSection),
    Oracle {},
}

impl SolverSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SolverSpec::Rmalm(_) => "rmalm",
            SolverSpec::Salm(_) => "salm",
            SolverSpec::Pdsg(_) => "pdsg",
            SolverSpec::Oracle {} => "oracle",
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_oracle_tol() -> f64 {
    1e-10
}

fn default_held_out_size() -> usize {
    HELD_OUT_SIZE
}

fn default_held_out_seed() -> u64 {
    HELD_OUT_SEED
}

fn default_feas_tol() -> f64 {
    oracle::DEFAULT_FEAS_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory, relative to the working directory.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub threads: Option<usize>,
    /// Compute ground truth so iterate errors are reported.
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
    /// Existing ground-truth file to reuse, relative to the configuration.
    pub ground_truth: Option<PathBuf>,
    #[serde(default = "default_held_out_size")]
    pub held_out_size: usize,
    #[serde(default = "default_held_out_seed")]
    pub held_out_seed: u64,
    /// Dual strong concavity modulus for the rate report; linear QP
    /// instances supply their own bound.
    pub alpha: Option<f64>,
    /// Pair `[eps1, eps2]` of `|y - y*|^2` thresholds for the complexity check.
    pub complexity_eps: Option<Vec<f64>>,
    /// Agreement factor of the complexity check.
    #[serde(default = "default_factor")]
    pub complexity_factor: f64,
    #[serde(default = "default_feas_tol")]
    pub feas_tol: f64,
}

fn default_factor() -> f64 {
    2.0
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            out: default_out(),
            threads: None,
            oracle: false,
            oracle_tol: default_oracle_tol(),
            ground_truth: None,
            held_out_size: default_held_out_size(),
            held_out_seed: default_held_out_seed(),
            alpha: None,
            complexity_eps: None,
            complexity_factor: default_factor(),
            feas_tol: default_feas_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub solver: SolverSpec,
    #[serde(default)]
    pub run: RunSection,
}

/// Command-line overrides of the run section.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub threads: Option<usize>,
}

fn collect(prefix: &str, r: Result<()>, errs: &mut Vec<String>) {
    if let Err(Error::Validation(v)) = r {
        errs.extend(v.into_iter().map(|m| format!("{prefix}.{m}")));
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(vec![e.to_string().trim().to_string()]))
    }

    /// Reads, applies overrides and validates.
    pub fn load(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(out) = &overrides.out {
            cfg.run.out = out.clone();
        }
        if let Some(seeds) = &overrides.seeds {
            cfg.run.seeds = seeds.clone();
        }
        if let Some(t) = overrides.threads {
            cfg.run.threads = Some(t);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reports every offending field at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.problem.validate(&mut errs);
        match &self.solver {
            SolverSpec::Rmalm(s) => {
                collect("solver", s.to_config(0).validate(), &mut errs);
                if !(s.growth_base >= 1.0) {
                    errs.push(format!("solver.growth_base must be at least 1, got {}", s.growth_base));
                }
            }
            SolverSpec::Salm(s) => collect("solver", s.to_config(self.run.seeds.clone()).validate(), &mut errs),
            SolverSpec::Pdsg(s) => collect("solver", s.to_config(0).validate(), &mut errs),
            SolverSpec::Oracle {} => {}
        }
        let run = &self.run;
        if run.seeds.is_empty() {
            errs.push("run.seeds must not be empty".into());
        }
        if run.threads == Some(0) {
            errs.push("run.threads must be positive".into());
        }
        if !(run.oracle_tol > 0.0) {
            errs.push(format!("run.oracle_tol must be positive, got {}", run.oracle_tol));
        }
        if run.held_out_size == 0 {
            errs.push("run.held_out_size must be positive".into());
        }
        if let Some(a) = run.alpha {
            if !(a > 0.0) {
                errs.push(format!("run.alpha must be positive, got {a}"));
            }
        }
        if let Some(eps) = &run.complexity_eps {
            if eps.len() != 2 || !(eps[1] > 0.0 && eps[0] > eps[1]) {
                errs.push("run.complexity_eps must be [eps1, eps2] with eps1 > eps2 > 0".into());
            }
        }
        if !(run.complexity_factor >= 1.0) {
            errs.push(format!("run.complexity_factor must be at least 1, got {}", run.complexity_factor));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Per-seed record of the configuration that produced a metrics file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub instance_hash: String,
    pub problem: String,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
}

/// Seed-averaged `|y^k - y*|^2` with a log-linear fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub seeds: usize,
    /// `(k, cum_inner, mean dist_sq_y)`.
    pub points: Vec<(usize, u64, f64)>,
    pub fit: RateFit,
    pub measured_rate: f64,
    /// `(1 + alpha c)^{-2}` when `alpha` is known.
    pub theta: Option<f64>,
    /// `2 theta`.
    pub predicted_rate: Option<f64>,
}

impl RateReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "seeds {}\nslope {:.6e}\nr_squared {:.6}\nmeasured_rate {:.6}\n",
            self.seeds, self.fit.slope, self.fit.r_squared, self.measured_rate
        );
        if let (Some(t), Some(p)) = (self.theta, self.predicted_rate) {
            out.push_str(&format!("theta {t:.6}\npredicted_rate {p:.6}\n"));
        }
        out.push_str("\nk,cum_inner,mean_dist_sq_y,fitted\n");
        for (k, cum, v) in &self.points {
            let fitted = (self.fit.intercept + self.fit.slope * *k as f64).exp();
            out.push_str(&format!("{k},{cum},{v:.16e},{fitted:.16e}\n"));
        }
        out
    }
}

/// Averages `dist_sq_y` across seeds (over the common prefix of `k`) and
/// fits a linear rate. `alpha_c` enables the predicted rate `2 theta`.
pub fn rate_report(runs: &[Vec<MetricsRow>], alpha_c: Option<(f64, f64)>) -> Result<RateReport> {
    if runs.len() < 2 {
        return Err(Error::Parameter(format!(
            "rate report needs at least 2 seeds, got {}",
            runs.len()
        )));
    }
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let mut points = Vec::with_capacity(len);
    for i in 0..len {
        let mut sum = 0.0;
        for rows in runs {
            sum += rows[i].dist_sq_y.ok_or_else(|| {
                Error::Schema(format!("dist_sq_y missing at k = {}", rows[i].k))
            })?;
        }
        let cum = runs.iter().map(|r| r[i].cum_inner).max().unwrap_or(0);
        points.push((runs[0][i].k, cum, sum / runs.len() as f64));
    }
    let fit = theory::fit_linear_rate(&points.iter().map(|p| (p.0 as f64, p.2)).collect::<Vec<_>>())?;
    let contraction = alpha_c.map(|(a, c)| theory::contraction_theta(a, c)).transpose()?;
    Ok(RateReport {
        seeds: runs.len(),
        measured_rate: fit.rate(),
        theta: contraction.map(|c| c.theta),
        predicted_rate: contraction.map(|c| c.rho),
        fit,
        points,
    })
}

/// Reads metrics CSVs, writes `rate_report.json` and `rate_report.txt`
/// into `out`.
pub fn emit_rate_report(csvs: &[PathBuf], alpha_c: Option<(f64, f64)>, out: &Path) -> Result<RateReport> {
    let runs = csvs
        .iter()
        .map(metrics::read_metrics_csv)
        .collect::<Result<Vec<_>>>()?;
    let report = rate_report(&runs, alpha_c)?;
    create_dir(out)?;
    write_file(&out.join("rate_report.json"), &serde_json::to_string_pretty(&report)?)?;
    write_file(&out.join("rate_report.txt"), &report.to_table())?;
    Ok(report)
}

/// Final state of one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub last: Option<MetricsRow>,
    /// SALM only: initial and final `|y - y*|^2`.
    pub initial_dist_sq_y: Option<f64>,
    pub final_dist_sq_y: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub solver: String,
    pub problem: String,
    pub instance_hash: String,
    pub f_opt: Option<f64>,
    pub seeds: Vec<SeedSummary>,
    pub rate: Option<RateReport>,
    pub complexity: Option<ComplexityReport>,
    /// Feasible iterate of least objective across seeds.
    pub best_feasible_objective: Option<f64>,
    pub files: Vec<String>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Writes the instance data as `instance.json` in `out`.
pub fn generate(cfg: &ExperimentConfig, config_path: &Path) -> Result<PathBuf> {
    let built = cfg.problem.build(&base_dir(config_path))?;
    create_dir(&cfg.run.out)?;
    let path = cfg.run.out.join("instance.json");
    let doc = serde_json::json!({
        "instance_hash": cfg.problem.hash(),
        "problem": built.problem.name(),
        "spec": cfg.problem,
        "instance": built.instance,
    });
    write_file(&path, &serde_json::to_string(&doc)?)?;
    Ok(path)
}

/// Problem on which exact evaluation happens: expectation-form objectives
/// are replaced by the held-out sample.
fn exact_problem(prob: &StochasticProblem, run: &RunSection) -> StochasticProblem {
    prob.with_held_out_objective(run.held_out_size, run.held_out_seed)
}

/// Computes or loads ground truth and writes `ground_truth.json`.
pub fn ground_truth(cfg: &ExperimentConfig, config_path: &Path, built: &BuiltProblem) -> Result<GroundTruth> {
    let hash = cfg.problem.hash();
    let truth = match &cfg.run.ground_truth {
        Some(p) => {
            let gt = GroundTruth::read(base_dir(config_path).join(p))?;
            if gt.instance_hash != hash {
                return Err(Error::Schema(format!(
                    "ground truth {} belongs to instance {}, expected {hash}",
                    p.display(),
                    gt.instance_hash
                )));
            }
            gt
        }
        None => {
            let mut gt = oracle::solve_exact(&exact_problem(&built.problem, &cfg.run), cfg.run.oracle_tol)?;
            gt.instance_hash = hash;
            gt
        }
    };
    create_dir(&cfg.run.out)?;
    truth.write(cfg.run.out.join("ground_truth.json"))?;
    Ok(truth)
}

fn write_manifest(cfg: &ExperimentConfig, built: &BuiltProblem, seed: u64, files: Vec<String>) -> Result<String> {
    let name = format!("manifest_seed{seed}.json");
    let manifest = Manifest {
        format: metrics::METRICS_VERSION.trim_start_matches("# ").to_string(),
        seed,
        instance_hash: cfg.problem.hash(),
        problem: built.problem.name().to_string(),
        config: cfg.clone(),
        files,
    };
    write_file(&cfg.run.out.join(&name), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(name)
}

/// Runs the configured solver over all seeds and writes metrics, manifests,
/// ground truth (when requested or needed) and `summary.json`.
pub fn run_experiment(cfg: &ExperimentConfig, config_path: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    if let Some(t) = cfg.run.threads {
        par::set_threads(t);
    }
    let run = &cfg.run;
    let built = cfg.problem.build(&base_dir(config_path))?;
    let prob = &built.problem;
    create_dir(&run.out)?;

    let needs_truth = run.oracle
        || run.ground_truth.is_some()
        || matches!(cfg.solver, SolverSpec::Salm(_) | SolverSpec::Oracle {});
    let truth = if needs_truth {
        Some(ground_truth(cfg, config_path, &built)?)
    } else {
        None
    };
    let mut monitor = Monitor::with_held_out(prob, run.held_out_size, run.held_out_seed);
    if let Some(t) = &truth {
        monitor = monitor.with_truth(t.clone());
    }

    let mut summary = RunSummary {
        solver: cfg.solver.name().into(),
        problem: prob.name().into(),
        instance_hash: cfg.problem.hash(),
        f_opt: truth.as_ref().map(|t| t.f_opt),
        seeds: Vec::new(),
        rate: None,
        complexity: None,
        best_feasible_objective: None,
        files: Vec::new(),
    };
    if truth.is_some() {
        summary.files.push("ground_truth.json".into());
    }

    let seeds = &run.seeds;
    match &cfg.solver {
        SolverSpec::Oracle {} => {}
        SolverSpec::Rmalm(section) => {
            let results = par::map_indexed(seeds.len(), |i| {
                let seed = seeds[i];
                let trace = rmalm::solve(prob, &section.to_config(seed), &monitor, &mut |_, _, _| {})?;
                let name = format!("metrics_seed{seed}.csv");
                write_metrics_csv(run.out.join(&name), &trace.rows)?;
                let manifest = write_manifest(cfg, &built, seed, vec![name.clone()])?;
                Ok::<_, Error>((trace, vec![name, manifest]))
            });
            let mut traces = Vec::new();
            for (i, r) in results.into_iter().enumerate() {
                let (trace, files) = r?;
                summary.files.extend(files);
                summary.seeds.push(SeedSummary {
                    seed: seeds[i],
                    last: trace.rows.last().cloned(),
                    initial_dist_sq_y: None,
                    final_dist_sq_y: None,
                });
                traces.push(trace);
            }
            let eval = monitor.eval_problem();
            summary.best_feasible_objective = oracle::best_feasible_iterate_with(&traces, prob, run.feas_tol, |x| {
                eval.objective_value(x)
            })
            .ok()
            .and_then(|x| eval.objective_value(&x).ok());
            if truth.is_some() && traces.len() >= 2 {
                let rows: Vec<_> = traces.iter().map(|t| t.rows.clone()).collect();
                let alpha = run.alpha.or(built.constants.map(|c| c.alpha));
                if let Ok(report) = rate_report(&rows, alpha.map(|a| (a, section.c))) {
                    write_file(&run.out.join("rate_report.txt"), &report.to_table())?;
                    summary.files.push("rate_report.txt".into());
                    summary.rate = Some(report);
                }
                if let (Some(eps), Some(rate)) = (&run.complexity_eps, &summary.rate) {
                    let path: Vec<_> = rate.points.iter().map(|p| (p.1, p.2)).collect();
                    let b1 = theory::budget_to_reach(&path, eps[0])?;
                    let b2 = theory::budget_to_reach(&path, eps[1])?;
                    summary.complexity = Some(theory::complexity_check(
                        eps[0],
                        eps[1],
                        (b1, b2),
                        section.q,
                        run.complexity_factor,
                    )?);
                }
            }
        }
        SolverSpec::Pdsg(section) => {
            let results = par::map_indexed(seeds.len(), |i| {
                let seed = seeds[i];
                let out = pdsg_solve(prob, &section.to_config(seed), &monitor, &mut |_, _, _| {})?;
                let name = format!("metrics_seed{seed}.csv");
                let avg = format!("metrics_avg_seed{seed}.csv");
                write_metrics_csv(run.out.join(&name), &out.trace.rows)?;
                write_metrics_csv(run.out.join(&avg), &out.averaged_rows)?;
                let manifest = write_manifest(cfg, &built, seed, vec![name.clone(), avg.clone()])?;
                Ok::<_, Error>((out, vec![name, avg, manifest]))
            });
            for (i, r) in results.into_iter().enumerate() {
                let (out, files) = r?;
                summary.files.extend(files);
                summary.seeds.push(SeedSummary {
                    seed: seeds[i],
                    last: out.averaged_rows.last().cloned(),
                    initial_dist_sq_y: None,
                    final_dist_sq_y: None,
                });
            }
        }
        SolverSpec::Salm(section) => {
            let truth = truth.as_ref().expect("salm runs compute ground truth");
            let salm_cfg = section.to_config(seeds.clone());
            let eval = exact_problem(prob, run);
            let trajs = salm::salm_run(&eval, &salm_cfg, &truth.y_star)?;
            for t in &trajs {
                let name = format!("salm_seed{}.csv", t.seed);
                salm::write_trajectory_csv(run.out.join(&name), t)?;
                let manifest = write_manifest(cfg, &built, t.seed, vec![name.clone()])?;
                summary.files.push(name);
                summary.files.push(manifest);
                summary.seeds.push(SeedSummary {
                    seed: t.seed,
                    last: None,
                    initial_dist_sq_y: t.dist_sq_y.first().copied(),
                    final_dist_sq_y: t.dist_sq_y.last().copied(),
                });
            }
        }
    }
    summary.files.push("summary.json".into());
    write_file(&run.out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
