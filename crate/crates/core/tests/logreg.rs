mod common;

use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::Rng;
use tsclass::logreg::{self, sigmoid, LogRConfig, LogRModel, Optimizer};
use tsclass::Label;

fn nll(x: &Array2<f64>, y: &[Label], lambda: f64, theta: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for (row, l) in x.rows().into_iter().zip(y) {
        let z = theta[0] + theta[1] * row[0] + theta[2] * row[1];
        let p = 1.0 / (1.0 + (-z).exp());
        s -= if *l == Label::Broken {
            p.ln()
        } else {
            (1.0 - p).ln()
        };
    }
    s + 0.5 * lambda * (theta[1] * theta[1] + theta[2] * theta[2])
}

/// Zooming grid search: a 21³ grid that recentres and shrinks each round.
fn grid_oracle(x: &Array2<f64>, y: &[Label], lambda: f64) -> [f64; 3] {
    let mut center = [0.0; 3];
    let mut half = 4.0;
    while half > 1e-5 {
        let mut best = (f64::INFINITY, center);
        for i in -10..=10 {
            for j in -10..=10 {
                for k in -10..=10 {
                    let t = [
                        center[0] + half * i as f64 / 10.0,
                        center[1] + half * j as f64 / 10.0,
                        center[2] + half * k as f64 / 10.0,
                    ];
                    let l = nll(x, y, lambda, t);
                    if l < best.0 {
                        best = (l, t);
                    }
                }
            }
        }
        center = best.1;
        half *= 0.5;
    }
    center
}

fn oracle_instance() -> (Array2<f64>, Vec<Label>) {
    (
        array![
            [0.5, 1.0],
            [1.5, -0.5],
            [-1.0, 0.3],
            [2.0, 1.2],
            [-0.4, -1.5],
            [0.1, 0.7]
        ],
        vec![
            Label::Broken,
            Label::Broken,
            Label::Intact,
            Label::Broken,
            Label::Intact,
            Label::Intact,
        ],
    )
}

#[test]
fn newton_matches_grid_oracle() {
    let (x, y) = oracle_instance();
    let want = grid_oracle(&x, &y, 1.0);
    for optimizer in [Optimizer::Newton, Optimizer::Gradient] {
        let cfg = LogRConfig {
            optimizer,
            max_iter: 200_000,
            ..Default::default()
        };
        let m = logreg::fit(x.view(), &y, &cfg).unwrap();
        assert!(m.converged, "{optimizer:?}");
        let got = [m.intercept, m.weights[0], m.weights[1]];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 5e-4, "{optimizer:?}: {got:?} vs {want:?}");
        }
        let oracle = LogRModel {
            intercept: want[0],
            weights: want[1..].to_vec(),
            reg_strength: 1.0,
            converged: true,
            iterations: 0,
        };
        assert_eq!(
            m.predict_rows(x.view()).unwrap(),
            oracle.predict_rows(x.view()).unwrap()
        );
    }
}

#[test]
fn symmetric_instances() {
    let zeros = Array2::zeros((4, 2));
    let y = vec![Label::Intact, Label::Broken, Label::Intact, Label::Broken];
    let m = logreg::fit(zeros.view(), &y, &LogRConfig::default()).unwrap();
    assert!(m.intercept.abs() < 1e-12 && m.weights.iter().all(|w| w.abs() < 1e-12));
    assert_eq!(m.predict_proba(&[0.0, 0.0]).unwrap(), 0.5);
    assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), Label::Broken);

    let x = array![[-1.0], [1.0]];
    let m = logreg::fit(
        x.view(),
        &[Label::Intact, Label::Broken],
        &LogRConfig::default(),
    )
    .unwrap();
    assert!(m.intercept.abs() < 1e-10 && m.weights[0] > 0.0);
}

#[test]
fn probability_examples() {
    assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
    let p = sigmoid(-1000.0);
    assert!((0.0..1e-300).contains(&p) && p.is_finite());
    assert_eq!(sigmoid(1000.0), 1.0);
    let m = LogRModel {
        intercept: 0.0,
        weights: vec![1.0],
        reg_strength: 1.0,
        converged: true,
        iterations: 0,
    };
    assert_eq!(m.predict(&[(0.49f64 / 0.51).ln()]).unwrap(), Label::Intact);
    assert!(m.predict(&[1.0, 2.0]).is_err());
}

#[test]
fn invalid_inputs() {
    let x = array![[0.0], [1.0]];
    assert!(logreg::fit(
        x.view(),
        &[Label::Intact, Label::Intact],
        &LogRConfig::default()
    )
    .is_err());
    let y = [Label::Intact, Label::Broken];
    assert!(logreg::fit(
        x.view(),
        &y,
        &LogRConfig {
            reg_strength: -1.0,
            ..Default::default()
        }
    )
    .is_err());
    assert!(logreg::fit(
        x.view(),
        &y,
        &LogRConfig {
            tol: 0.0,
            ..Default::default()
        }
    )
    .is_err());
    assert!(logreg::fit(
        array![[f64::INFINITY], [1.0]].view(),
        &y,
        &LogRConfig::default()
    )
    .is_err());
}

#[test]
fn separable_data_without_penalty_stays_finite() {
    let x = array![[-2.0], [-1.0], [1.0], [2.0]];
    let y = [Label::Intact, Label::Intact, Label::Broken, Label::Broken];
    let m = logreg::fit(
        x.view(),
        &y,
        &LogRConfig {
            reg_strength: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(m.intercept.is_finite() && m.weights[0].is_finite());
    assert_eq!(m.predict_rows(x.view()).unwrap(), y.to_vec());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logit_identity_and_monotonicity(z in -30.0f64..30.0, dz in 1e-6f64..1.0) {
        let (p, q) = (sigmoid(z), sigmoid(-z));
        prop_assert!((p + q - 1.0).abs() < 1e-15);
        prop_assert!(((p / q).ln() - z).abs() < 1e-9);
        prop_assert!(sigmoid(z + dz) > p);
    }

    #[test]
    fn fitted_loss_beats_random_parameters(seed in 0u64..10_000, n in 6usize..40) {
        let mut r = common::rng(seed);
        let x = common::random_matrix(&mut r, n, 2);
        let y = common::random_labels(&mut r, n);
        let m = logreg::fit(x.view(), &y, &LogRConfig::default()).unwrap();
        let w = Array1::from(m.weights.clone());
        let best = logreg::loss(x.view(), &y, 1.0, m.intercept, w.view());
        for _ in 0..100 {
            let t = [r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)];
            prop_assert!(best <= nll(&x, &y, 1.0, t) + 1e-12);
        }
        for row in x.rows() {
            let v = row.to_vec();
            let z = m.decision(&v).unwrap();
            prop_assert_eq!(m.predict(&v).unwrap() == Label::Broken, z >= 0.0);
        }
    }
}
