use proptest::prelude::*;
use rmalm_core::auglag::{auglag_grad_full, auglag_value, multiplier_update, stoch_grad};
use rmalm_core::linalg;
use rmalm_core::problems::{gen_qcqp, SampleMode};
use rmalm_core::{Draw, MultiplierVector, PenaltyState, SampleBatch, StochasticProblem};

fn small_qcqp() -> StochasticProblem {
    gen_qcqp(3, 2, 2, SampleMode::FiniteSum { samples: 4 }, 21).unwrap()
}

fn state(c: f64, y: Vec<f64>) -> PenaltyState {
    PenaltyState::new(c, MultiplierVector::new(y).unwrap()).unwrap()
}

/// `f(x) + (1/2c) sum ((y + c h)_+)^2 - |y|^2 / 2c`, from the sample and
/// constraint definitions.
fn reference_value(prob: &StochasticProblem, x: &[f64], c: f64, y: &[f64]) -> f64 {
    let s = prob.sampler().unwrap();
    let n = s.finite_sum_size().unwrap();
    let f = (0..n).map(|i| s.sample_value(Draw::Index(i), x)).sum::<f64>() / n as f64;
    let h = prob.constraint_values(x);
    let pen: f64 = y.iter().zip(&h).map(|(y, h)| (y + c * h).max(0.0).powi(2)).sum();
    f + pen / (2.0 * c) - linalg::norm_sq(y) / (2.0 * c)
}

fn point() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (
        prop::collection::vec(-3.0f64..3.0, 3),
        prop::collection::vec(0.0f64..3.0, 2),
        0.1f64..10.0,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn value_matches_definition((x, y, c) in point()) {
        let prob = small_qcqp();
        let v = auglag_value(&prob, &x, &state(c, y.clone())).unwrap();
        let r = reference_value(&prob, &x, c, &y);
        prop_assert!((v - r).abs() <= 1e-10 * (1.0 + r.abs()));
    }

    #[test]
    fn gradient_matches_central_differences((x, y, c) in point()) {
        let prob = small_qcqp();
        let st = state(c, y);
        let g = auglag_grad_full(&prob, &x, &st).unwrap();
        for i in 0..3 {
            let h = 1e-6 * (1.0 + x[i].abs());
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (auglag_value(&prob, &xp, &st).unwrap() - auglag_value(&prob, &xm, &st).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0));
        }
    }

    #[test]
    fn constraint_gradients_match_differences(x in prop::collection::vec(-3.0f64..3.0, 3)) {
        let prob = small_qcqp();
        let cons = prob.constraints();
        for j in 0..cons.len() {
            let mut g = vec![0.0; 3];
            cons.add_gradient(j, &x, 1.0, &mut g);
            for i in 0..3 {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += 1e-6;
                xm[i] -= 1e-6;
                let fd = (cons.value(j, &xp) - cons.value(j, &xm)) / 2e-6;
                prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn singleton_batches_average_to_full_gradient((x, y, c) in point()) {
        let prob = small_qcqp();
        let st = state(c, y);
        let full = auglag_grad_full(&prob, &x, &st).unwrap();
        let mut avg = vec![0.0; 3];
        for i in 0..4 {
            for j in 0..2 {
                let g = stoch_grad(&prob, &x, &st, &SampleBatch::new(vec![Draw::Index(i)], vec![j])).unwrap();
                linalg::axpy(1.0 / 8.0, &g, &mut avg);
            }
        }
        prop_assert!(linalg::max_abs(&linalg::sub(&avg, &full)) <= 1e-12);
    }

    #[test]
    fn augmented_lagrangian_is_convex_along_chords(
        (a, y, c) in point(),
        b in prop::collection::vec(-3.0f64..3.0, 3),
        t in 0.0f64..1.0,
    ) {
        let prob = small_qcqp();
        let st = state(c, y);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let lhs = auglag_value(&prob, &mid, &st).unwrap();
        let rhs = t * auglag_value(&prob, &a, &st).unwrap() + (1.0 - t) * auglag_value(&prob, &b, &st).unwrap();
        prop_assert!(lhs <= rhs + 1e-10);
    }

    #[test]
    fn multiplier_update_is_nonnegative_and_nonexpansive(
        y1 in prop::collection::vec(0.0f64..5.0, 4),
        y2 in prop::collection::vec(0.0f64..5.0, 4),
        h in prop::collection::vec(-5.0f64..5.0, 4),
        c in 0.01f64..100.0,
    ) {
        let u1 = multiplier_update(&MultiplierVector::new(y1.clone()).unwrap(), c, &h).unwrap();
        let u2 = multiplier_update(&MultiplierVector::new(y2.clone()).unwrap(), c, &h).unwrap();
        prop_assert!(u1.as_slice().iter().all(|v| *v >= 0.0));
        for j in 0..4 {
            prop_assert_eq!(u1.as_slice()[j], (y1[j] + c * h[j]).max(0.0));
        }
        prop_assert!(linalg::dist(u1.as_slice(), u2.as_slice()) <= linalg::dist(&y1, &y2) + 1e-12);
    }
}

#[test]
fn batches_outside_the_problem_are_rejected() {
    let prob = small_qcqp();
    let st = state(1.0, vec![0.0, 0.0]);
    let x = [0.0; 3];
    assert!(stoch_grad(&prob, &x, &st, &SampleBatch::new(vec![Draw::Index(4)], vec![0])).is_err());
    assert!(stoch_grad(&prob, &x, &st, &SampleBatch::new(vec![Draw::Index(0)], vec![2])).is_err());
    assert!(stoch_grad(&prob, &x, &st, &SampleBatch::new(vec![], vec![0])).is_err());
}

#[test]
fn invalid_states_are_rejected() {
    assert!(MultiplierVector::new(vec![-1e-3]).is_err());
    assert!(MultiplierVector::new(vec![f64::NAN]).is_err());
    assert!(PenaltyState::new(0.0, MultiplierVector::zeros(1)).is_err());
}
