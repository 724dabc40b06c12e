use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rmalm_core::linalg;
use rmalm_core::oracle::solve_exact;
use rmalm_core::problems::{
    gen_cvar, gen_qcqp, load_returns_csv, parse_returns_csv, synthetic_returns, LinearQpInstance, QcqpInstance,
    SampleMode, TwoStageInstance,
};
use rmalm_core::{Draw, Error};

#[test]
fn qcqp_offsets_pass_uniformity_test() {
    let m = 10_000;
    let inst = QcqpInstance::generate(1, 1, m, SampleMode::Expectation, 99).unwrap();
    let mut b = inst.b.clone();
    b.sort_by(f64::total_cmp);
    let cdf = |v: f64| ((v - 0.1) / 1.0).clamp(0.0, 1.0);
    let mut d = 0.0f64;
    for (i, v) in b.iter().enumerate() {
        let f = cdf(*v);
        d = d.max((i + 1) as f64 / m as f64 - f).max(f - i as f64 / m as f64);
    }
    // Kolmogorov critical value at significance 0.01
    let critical = 1.628 / (m as f64).sqrt();
    assert!(d < critical, "KS statistic {d} exceeds {critical}");
    assert!(b.iter().all(|v| (0.1..=1.1).contains(v)));
}

#[test]
fn qcqp_data_invariants() {
    let inst = QcqpInstance::generate(6, 3, 8, SampleMode::FiniteSum { samples: 5 }, 4).unwrap();
    for a in &inst.a {
        assert!((linalg::norm(a) - 1.0).abs() <= 1e-12);
    }
    for q in &inst.q {
        let m = DMatrix::from_row_slice(6, 6, q);
        assert!((&m - m.transpose()).abs().max() <= 1e-15);
        let eig = SymmetricEigen::new(m).eigenvalues;
        assert!((eig.max() - 1.0).abs() <= 1e-8);
        assert!(eig.min() >= -1e-10);
    }
    let prob = inst.to_problem();
    assert!(prob.constraint_values(&[0.0; 6]).iter().all(|h| *h <= -0.1));
}

#[test]
fn generators_are_deterministic() {
    let a = QcqpInstance::generate(4, 2, 3, SampleMode::FiniteSum { samples: 10 }, 8).unwrap();
    let b = QcqpInstance::generate(4, 2, 3, SampleMode::FiniteSum { samples: 10 }, 8).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = QcqpInstance::generate(4, 2, 3, SampleMode::FiniteSum { samples: 10 }, 9).unwrap();
    assert_ne!(a.b, c.b);
    let s = TwoStageInstance::generate(2, 3, 5, 2.0, 5.0).unwrap();
    let t = TwoStageInstance::generate(2, 3, 5, 2.0, 5.0).unwrap();
    assert_eq!(s.scenarios, t.scenarios);
    assert_eq!(synthetic_returns(10, 3, 1).unwrap(), synthetic_returns(10, 3, 1).unwrap());
}

#[test]
fn finite_sum_objective_is_sample_mean() {
    let prob = gen_qcqp(2, 2, 1, SampleMode::FiniteSum { samples: 4 }, 7).unwrap();
    let inst = QcqpInstance::generate(2, 2, 1, SampleMode::FiniteSum { samples: 4 }, 7).unwrap();
    let x = [0.7, -1.3];
    let mut direct = 0.0;
    for (h, c) in inst.h.iter().zip(&inst.c) {
        let mut r = vec![0.0; 2];
        linalg::matvec(h, 2, 2, &x, &mut r);
        direct += 0.5 * linalg::dist_sq(&r, c) / 4.0;
    }
    assert!((prob.objective_value(&x).unwrap() - direct).abs() <= 1e-14);
    let s = prob.sampler().unwrap();
    let mean = (0..4).map(|i| s.sample_value(Draw::Index(i), &x)).sum::<f64>() / 4.0;
    assert!((prob.objective_value(&x).unwrap() - mean).abs() <= 1e-14);
}

#[test]
fn generated_problems_have_strictly_feasible_witnesses() {
    let problems = [
        gen_qcqp(5, 3, 4, SampleMode::Expectation, 1).unwrap(),
        TwoStageInstance::generate(3, 6, 2, 2.0, 5.0).unwrap().to_problem(),
        LinearQpInstance::generate(5, 3, 20, 3).unwrap().to_problem(),
    ];
    for prob in &problems {
        let w = prob.witness().expect("witness");
        assert_eq!(prob.projected(w), w.to_vec());
        assert!(prob.constraint_values(w).iter().all(|h| *h < 0.0), "{}", prob.name());
    }
}

#[test]
fn two_stage_scenario_hessian_dominates_lambda() {
    let (n, scenarios, lambda) = (3, 2, 2.0);
    let inst = TwoStageInstance::generate(n, scenarios, 1, lambda, 5.0).unwrap();
    let prob = inst.to_problem();
    let s = prob.sampler().unwrap();
    for i in 0..scenarios {
        let coords: Vec<usize> = (0..n).chain(n * (i + 1)..n * (i + 2)).collect();
        let x: Vec<f64> = (0..prob.dim()).map(|k| 0.3 * k as f64 - 1.0).collect();
        let grad = |v: &[f64]| {
            let mut g = vec![0.0; prob.dim()];
            s.add_sample_gradient(Draw::Index(i), v, 1.0, &mut g);
            g
        };
        let mut hess = DMatrix::zeros(2 * n, 2 * n);
        for (col, &k) in coords.iter().enumerate() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += 1e-3;
            xm[k] -= 1e-3;
            let (gp, gm) = (grad(&xp), grad(&xm));
            for (row, &r) in coords.iter().enumerate() {
                hess[(row, col)] = (gp[r] - gm[r]) / 2e-3;
            }
        }
        let xi = DVector::from_column_slice(&inst.scenarios[i]);
        let expect = &xi * xi.transpose() + DMatrix::identity(2 * n, 2 * n) * lambda;
        assert!((&hess - &expect).abs().max() <= 1e-6 * expect.abs().max());
        let eig = SymmetricEigen::new((&hess + hess.transpose()) * 0.5).eigenvalues;
        assert!(eig.min() >= lambda - 1e-6);
    }
}

const RETURNS: [[f64; 2]; 4] = [[0.10, -0.05], [-0.02, 0.08], [0.05, 0.01], [-0.10, 0.03]];

/// Minimizes the CVaR LP over `(a, x1, x2, y1..y4)` by enumerating
/// every vertex: six active inequalities plus `x1 + x2 = 1`.
fn cvar_lp_by_vertices(p: f64) -> f64 {
    let n_periods = RETURNS.len();
    let dim = 3 + n_periods;
    let mean: Vec<f64> = (0..2).map(|j| RETURNS.iter().map(|r| r[j]).sum::<f64>() / 4.0).collect();
    let min_return = (mean[0] + mean[1]) / 2.0;
    // rows g with g . v <= r
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, r) in RETURNS.iter().enumerate() {
        let mut g = vec![0.0; dim];
        g[0] = -1.0;
        g[1] = -r[0];
        g[2] = -r[1];
        g[3 + i] = -1.0;
        rows.push((g, 0.0));
    }
    let mut g = vec![0.0; dim];
    g[1] = -mean[0];
    g[2] = -mean[1];
    rows.push((g, -min_return));
    for k in 1..dim {
        let mut g = vec![0.0; dim];
        g[k] = -1.0;
        rows.push((g, 0.0));
    }
    let weight = 1.0 / ((1.0 - p) * n_periods as f64);
    let objective = |v: &[f64]| v[0] + weight * v[3..].iter().sum::<f64>();
    let mut best = f64::INFINITY;
    let m = rows.len();
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != dim - 1 {
            continue;
        }
        let mut a = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        let mut r = 0;
        for (k, (g, b)) in rows.iter().enumerate() {
            if mask & (1 << k) != 0 {
                for c in 0..dim {
                    a[(r, c)] = g[c];
                }
                rhs[r] = *b;
                r += 1;
            }
        }
        a[(r, 1)] = 1.0;
        a[(r, 2)] = 1.0;
        rhs[r] = 1.0;
        let Some(v) = a.lu().solve(&rhs) else { continue };
        let v: Vec<f64> = v.iter().copied().collect();
        if rows.iter().all(|(g, b)| linalg::dot(g, &v) <= b + 1e-10) {
            best = best.min(objective(&v));
        }
    }
    best
}

#[test]
fn cvar_matches_vertex_enumeration() {
    let returns: Vec<Vec<f64>> = RETURNS.iter().map(|r| r.to_vec()).collect();
    for p in [0.5, 0.95] {
        let prob = gen_cvar(returns.clone(), p, None).unwrap();
        let gt = solve_exact(&prob, 1e-9).unwrap();
        let lp = cvar_lp_by_vertices(p);
        assert!((gt.f_opt - lp).abs() <= 1e-6, "p = {p}: {} vs {lp}", gt.f_opt);
    }
}

#[test]
fn cvar_boundary_example() {
    let prob = gen_cvar(vec![vec![1.0, 1.0]; 3], 0.95, None).unwrap();
    let v = [-1.0, 0.5, 0.5, 0.0, 0.0, 0.0];
    assert_eq!(prob.constraint_values(&v), vec![0.0; 4]);
    assert_eq!(prob.num_constraints(), 4);
    assert!(gen_cvar(vec![vec![1.0]], 1.0, None).is_err());
    assert!(matches!(gen_cvar(vec![], 0.5, None), Err(Error::Data(_))));
}

#[test]
fn returns_csv_loading() {
    assert_eq!(parse_returns_csv("1.0,2.0\n3.0,4.0").unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    assert_eq!(parse_returns_csv("A,B\n1,2\n3,4\n").unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    assert!(matches!(
        parse_returns_csv("1,2\n3,4\n5,6,7\n"),
        Err(Error::RaggedRow { row: 3, .. })
    ));
    assert!(matches!(parse_returns_csv("1,2\n3,x\n"), Err(Error::Parse { .. })));
    assert!(parse_returns_csv("1,2\n3,\n").is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "0.01,0.02\n-0.01,0.03").unwrap();
    assert_eq!(load_returns_csv(&path).unwrap().len(), 2);
    assert!(matches!(load_returns_csv(dir.path().join("missing.csv")), Err(Error::Io { .. })));
}
