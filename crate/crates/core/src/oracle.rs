//! Deterministic reference solutions for finite-sum instances.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::auglag::{MultiplierVector, PenaltyState};
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{violations, StochasticProblem};
use crate::rmalm::SolveTrace;
use crate::salm::{exact_subproblem_from, projected_residual, MAX_SUBPROBLEM_ITERS};

/// Penalty used by [`solve_exact`].
pub const ORACLE_PENALTY: f64 = 10.0;

/// Outer-iteration cap of the reference ALM.
pub const ORACLE_MAX_OUTER: usize = 10_000;

/// Feasibility tolerance of [`best_feasible_iterate`] unless overridden.
pub const DEFAULT_FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Hash of the instance description; empty when not tied to one.
    #[serde(default)]
    pub instance_hash: String,
    pub x_opt: Vec<f64>,
    pub y_star: Vec<f64>,
    pub f_opt: f64,
    pub tol: f64,
}

impl GroundTruth {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Components of the KKT residual at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// `|x - P_X(x - grad f - sum_j y_j grad h_j)|`.
    pub stationarity: f64,
    /// `max_j |y_j h_j(x)|`.
    pub complementarity: f64,
    /// `max_j (h_j(x))_+`.
    pub violation: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.complementarity).max(self.violation)
    }
}

pub fn kkt_residual(prob: &StochasticProblem, x: &[f64], y: &[f64]) -> Result<KktResidual> {
    prob.check_point(x)?;
    let mut g = vec![0.0; prob.dim()];
    prob.add_objective_gradient(x, 1.0, &mut g)?;
    let h = prob.constraint_values(x);
    let cons = prob.constraints();
    for (j, yj) in y.iter().enumerate() {
        if *yj != 0.0 {
            cons.add_gradient(j, x, *yj, &mut g);
        }
    }
    Ok(KktResidual {
        stationarity: projected_residual(prob, x, &g),
        complementarity: y.iter().zip(&h).map(|(y, h)| (y * h).abs()).fold(0.0, f64::max),
        violation: violations(&h).1,
    })
}

/// Reference solution with the default penalty.
pub fn solve_exact(prob: &StochasticProblem, tol: f64) -> Result<GroundTruth> {
    solve_exact_with(prob, tol, ORACLE_PENALTY)
}

/// Exact ALM with warm-started subproblems until
/// `max(|dx|, |dy| / c, max violation)` falls below `tol` (scaled down by the
/// multiplier size so complementarity also meets it). Fails unless the KKT
/// residual at the output is within `10 tol`.
pub fn solve_exact_with(prob: &StochasticProblem, tol: f64, c: f64) -> Result<GroundTruth> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    if !prob.is_deterministic_evaluable() {
        return Err(Error::UnsupportedExactEvaluation);
    }
    let inner_tol = (0.1 * tol).min(1e-11);
    let mut x = prob.projected(&vec![0.0; prob.dim()]);
    let mut st = PenaltyState::new(c, MultiplierVector::zeros(prob.num_constraints()))?;
    let mut last = f64::INFINITY;
    for _ in 0..ORACLE_MAX_OUTER {
        let x_next = exact_subproblem_from(prob, &st, &x, inner_tol, MAX_SUBPROBLEM_ITERS)?;
        let h = prob.constraint_values(&x_next);
        let y_next = st.y().update(c, &h)?;
        let step = linalg::dist(&x_next, &x)
            .max(linalg::dist(y_next.as_slice(), st.y().as_slice()) / c)
            .max(violations(&h).1);
        let scale = linalg::max_abs(y_next.as_slice()).max(1.0);
        x = x_next;
        st.set_y(y_next);
        last = step;
        if step * scale <= tol {
            let y = st.y().as_slice().to_vec();
            let kkt = kkt_residual(prob, &x, &y)?;
            if kkt.max() > 10.0 * tol {
                return Err(Error::NonConvergence {
                    iterations: 0,
                    residual: kkt.max(),
                });
            }
            return Ok(GroundTruth {
                instance_hash: String::new(),
                f_opt: prob.objective_value(&x)?,
                x_opt: x,
                y_star: y,
                tol,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: ORACLE_MAX_OUTER,
        residual: last,
    })
}

/// Multiplier path `y^0, y^1, .., y^iters` of exact ALM with constant
/// penalty `c`, subproblems solved to `inner_tol`.
pub fn exact_alm_path(
    prob: &StochasticProblem,
    c: f64,
    y0: &[f64],
    iters: usize,
    inner_tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut st = PenaltyState::new(c, MultiplierVector::new(y0.to_vec())?)?;
    let mut x = prob.projected(&vec![0.0; prob.dim()]);
    let mut path = vec![y0.to_vec()];
    for _ in 0..iters {
        x = exact_subproblem_from(prob, &st, &x, inner_tol, MAX_SUBPROBLEM_ITERS)?;
        let y = st.y().update(c, &prob.constraint_values(&x))?;
        path.push(y.as_slice().to_vec());
        st.set_y(y);
    }
    Ok(path)
}

/// Feasible iterate of smallest exact objective across all traces.
pub fn best_feasible_iterate(traces: &[SolveTrace], prob: &StochasticProblem, feas_tol: f64) -> Result<Vec<f64>> {
    best_feasible_iterate_with(traces, prob, feas_tol, |x| prob.objective_value(x))
}

/// As [`best_feasible_iterate`] with a caller-supplied objective. Ties go
/// to the earliest iterate in trace order, then iteration order.
pub fn best_feasible_iterate_with<F>(
    traces: &[SolveTrace],
    prob: &StochasticProblem,
    feas_tol: f64,
    objective: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut best: Option<(f64, &Vec<f64>)> = None;
    let mut min_violation = f64::INFINITY;
    for trace in traces {
        for x in &trace.iterates {
            let viol = violations(&prob.constraint_values(x)).1;
            min_violation = min_violation.min(viol);
            if viol > feas_tol {
                continue;
            }
            let f = objective(x)?;
            if best.is_none_or(|(fb, _)| f < fb) {
                best = Some((f, x));
            }
        }
    }
    best.map(|(_, x)| x.clone())
        .ok_or(Error::EmptyFeasibleSet { min_violation })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::problem::{FunctionConstraints, Linear, Quadratic, SmoothFunction};
    use crate::projection::FeasibleSet;

    fn kkt_problem(bound: f64) -> StochasticProblem {
        let h: Arc<dyn SmoothFunction> = Arc::new(Linear { q: vec![1.0], r: -bound });
        StochasticProblem::new(
            1,
            Arc::new(FunctionConstraints(vec![h])),
            FeasibleSet::boxed(-10.0, 10.0).unwrap(),
        )
        .unwrap()
        .with_deterministic(Arc::new(Quadratic::new(vec![1.0], vec![-3.0], 4.5).unwrap()))
    }

    fn trace(iterates: Vec<Vec<f64>>) -> SolveTrace {
        SolveTrace {
            rows: vec![],
            x: iterates.last().cloned().unwrap_or_default(),
            multipliers: vec![],
            y: vec![],
            total_inner: 0,
            iterates,
        }
    }

    #[test]
    fn scalar_kkt_examples() {
        // x <= 2 gives stationarity (x - 3) + y = 0 at x = 2, y = 1
        let prob = kkt_problem(2.0);
        let gt = solve_exact(&prob, 1e-10).unwrap();
        assert!((gt.x_opt[0] - 2.0).abs() < 1e-9);
        assert!((gt.y_star[0] - 1.0).abs() < 1e-9);
        assert!((gt.f_opt - 0.5).abs() < 1e-9);
        let kkt = kkt_residual(&prob, &gt.x_opt, &gt.y_star).unwrap();
        assert!(kkt.max() <= 10.0 * gt.tol);

        // x <= 1: x = 1, y = 2, f = 2
        let gt = solve_exact(&kkt_problem(1.0), 1e-10).unwrap();
        assert!((gt.x_opt[0] - 1.0).abs() < 1e-9);
        assert!((gt.y_star[0] - 2.0).abs() < 1e-9);
        assert!((gt.f_opt - 2.0).abs() < 1e-9);
    }

    #[test]
    fn inactive_constraint_gives_zero_multiplier() {
        let prob = kkt_problem(5.0);
        let gt = solve_exact(&prob, 1e-10).unwrap();
        assert_eq!(gt.y_star, vec![0.0]);
        assert!((gt.x_opt[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn penalty_does_not_change_solution() {
        let prob = kkt_problem(1.0);
        let a = solve_exact_with(&prob, 1e-10, 1.0).unwrap();
        let b = solve_exact_with(&prob, 1e-10, 10.0).unwrap();
        assert!(linalg::dist(&a.x_opt, &b.x_opt) <= 100.0 * 1e-10);
        assert!(linalg::dist(&a.y_star, &b.y_star) <= 100.0 * 1e-10);
    }

    #[test]
    fn best_feasible_selection() {
        let prob = kkt_problem(1.0);
        let t = trace(vec![vec![0.0], vec![2.0], vec![1.0]]);
        assert_eq!(best_feasible_iterate(&[t], &prob, 1e-6).unwrap(), vec![1.0]);

        let infeasible = trace(vec![vec![3.0], vec![2.5]]);
        let feasible = trace(vec![vec![-1.0], vec![0.5]]);
        assert_eq!(
            best_feasible_iterate(&[infeasible.clone(), feasible], &prob, 1e-6).unwrap(),
            vec![0.5]
        );
        match best_feasible_iterate(&[infeasible], &prob, 1e-6) {
            Err(Error::EmptyFeasibleSet { min_violation }) => assert_eq!(min_violation, 1.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ties_go_to_earliest_iterate() {
        let prob = kkt_problem(10.0);
        // 0 and 6 are equidistant from 3
        let a = trace(vec![vec![6.0]]);
        let b = trace(vec![vec![0.0]]);
        let best = best_feasible_iterate(&[a, b], &prob, 1e-6).unwrap();
        assert_eq!(best, vec![6.0]);
    }

    #[test]
    fn ground_truth_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let gt = GroundTruth {
            instance_hash: "abc".into(),
            x_opt: vec![2.0, 1.0 / 3.0],
            y_star: vec![1.0],
            f_opt: 0.5,
            tol: 1e-10,
        };
        let path = dir.path().join("gt.json");
        gt.write(&path).unwrap();
        assert_eq!(GroundTruth::read(&path).unwrap(), gt);
    }
}
