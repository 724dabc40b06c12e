use proptest::prelude::*;
use rmalm_core::linalg;
use rmalm_core::projection::{project_ball, project_box, project_product, project_simplex, Block};
use rmalm_core::FeasibleSet;

/// Exact projection onto the simplex by enumerating supports.
fn simplex_by_enumeration(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (support.iter().map(|&i| z[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut x = vec![0.0; n];
        for &i in &support {
            x[i] = z[i] - shift;
        }
        if x.iter().any(|v| *v < 0.0) {
            continue;
        }
        let d = linalg::dist_sq(&x, z);
        if best.as_ref().is_none_or(|(b, _)| d < *b) {
            best = Some((d, x));
        }
    }
    best.unwrap().1
}

fn product_set() -> FeasibleSet {
    FeasibleSet::product(
        vec![
            Block::new(0..3, FeasibleSet::Simplex),
            Block::new(3..4, FeasibleSet::NonNegative),
            Block::new(4..6, FeasibleSet::ball(vec![1.0, -1.0], 0.5).unwrap()),
            Block::new(6..7, FeasibleSet::boxed(-2.0, 2.0).unwrap()),
        ],
        7,
    )
    .unwrap()
}

fn sets() -> Vec<FeasibleSet> {
    vec![
        FeasibleSet::boxed(-1.0, 3.0).unwrap(),
        FeasibleSet::ball(vec![0.5; 7], 2.0).unwrap(),
        FeasibleSet::Simplex,
        FeasibleSet::NonNegative,
        product_set(),
    ]
}

fn vec7() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projections_are_idempotent(z in vec7()) {
        for set in sets() {
            let p = set.projected(&z);
            let pp = set.projected(&p);
            prop_assert!(linalg::dist(&p, &pp) <= 1e-12, "{set:?}");
        }
    }

    #[test]
    fn projections_are_nonexpansive(a in vec7(), b in vec7()) {
        for set in sets() {
            let d = linalg::dist(&set.projected(&a), &set.projected(&b));
            prop_assert!(d <= linalg::dist(&a, &b) + 1e-12, "{set:?}");
        }
    }

    #[test]
    fn simplex_output_is_a_distribution(z in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let p = project_simplex(&z).unwrap();
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn simplex_matches_enumeration(z in prop::collection::vec(-3.0f64..3.0, 1..=8)) {
        let p = project_simplex(&z).unwrap();
        let q = simplex_by_enumeration(&z);
        prop_assert!(linalg::max_abs(&linalg::sub(&p, &q)) <= 1e-8);
    }

    #[test]
    fn box_clamps(z in vec7(), lo in -5.0f64..0.0, width in 0.0f64..5.0) {
        let p = project_box(&z, lo, lo + width).unwrap();
        for (pi, zi) in p.iter().zip(&z) {
            prop_assert_eq!(*pi, zi.clamp(lo, lo + width));
        }
    }

    #[test]
    fn ball_output_is_inside(z in vec7(), r in 0.01f64..10.0) {
        let center = vec![1.0; 7];
        let p = project_ball(&z, &center, r).unwrap();
        prop_assert!(linalg::dist(&p, &center) <= r * (1.0 + 1e-12));
    }
}

#[test]
fn simplex_example_satisfies_kkt_and_grid_search() {
    let z = [0.5, 0.5, 1.0];
    let p = project_simplex(&z).unwrap();
    let expect = [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0];
    assert!(linalg::max_abs(&linalg::sub(&p, &expect)) <= 1e-12);

    // all coordinates positive, so z - p is a constant multiple of 1
    let shift: Vec<f64> = z.iter().zip(&expect).map(|(a, b)| a - b).collect();
    assert!(shift.iter().all(|s| (s - shift[0]).abs() <= 1e-12));

    let steps = 600;
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..=steps {
        for j in 0..=steps - i {
            let x = [
                i as f64 / steps as f64,
                j as f64 / steps as f64,
                (steps - i - j) as f64 / steps as f64,
            ];
            let d = linalg::dist_sq(&x, &z);
            if d < best.0 {
                best = (d, x);
            }
        }
    }
    assert!(linalg::max_abs(&linalg::sub(&best.1, &expect)) <= 2.0 / steps as f64);
}

#[test]
fn product_example_composes_blocks() {
    let blocks = vec![
        Block::new(0..3, FeasibleSet::Simplex),
        Block::new(3..4, FeasibleSet::NonNegative),
    ];
    let p = project_product(&[0.5, 0.5, 1.0, -3.0], &blocks).unwrap();
    let mut expect = project_simplex(&[0.5, 0.5, 1.0]).unwrap();
    expect.push(0.0);
    assert_eq!(p, expect);
}

#[test]
fn bad_sets_are_rejected() {
    assert!(FeasibleSet::boxed(1.0, 0.0).is_err());
    assert!(FeasibleSet::ball(vec![0.0], 0.0).is_err());
    assert!(project_simplex(&[]).is_err());
    let overlapping = vec![
        Block::new(0..2, FeasibleSet::NonNegative),
        Block::new(1..3, FeasibleSet::NonNegative),
    ];
    assert!(FeasibleSet::product(overlapping, 3).is_err());
}
