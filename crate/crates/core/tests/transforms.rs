mod common;

use ndarray::{array, Array2};
use proptest::prelude::*;
use tsclass::dataset::Segment;
use tsclass::linalg::symmetric_eigen;
use tsclass::transforms::{
    correlation, cov_matrix, cov_sqrt, cov_transform, feature_names, std_transform,
    transform_segments, upper_triangle, CovMatrix, TransformKind,
};
use tsclass::Label;

#[test]
fn hand_examples() {
    let s = std_transform(array![[1.0], [2.0], [3.0], [4.0], [5.0]].view()).unwrap();
    assert!((s[0] - 1.5811388300841898).abs() < 1e-12);

    let c = cov_matrix(array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]].view()).unwrap();
    assert!((c.sigma[[0, 1]] - 2.0).abs() < 1e-12);
    assert!((c.sigma[[0, 0]] - 1.0).abs() < 1e-12);
    assert!((c.sigma[[1, 1]] - 4.0).abs() < 1e-12);

    let r = cov_sqrt(&CovMatrix {
        sigma: array![[2.0, 1.0], [1.0, 2.0]],
    })
    .unwrap();
    assert!((r.dot(&r) - array![[2.0, 1.0], [1.0, 2.0]])
        .iter()
        .all(|v| v.abs() < 1e-10));

    let k = correlation(&CovMatrix {
        sigma: array![[4.0, 2.0], [2.0, 4.0]],
    })
    .unwrap();
    assert!((k[[0, 1]] - 0.5).abs() < 1e-15);
    assert!(correlation(&CovMatrix {
        sigma: array![[0.0, 0.0], [0.0, 1.0]]
    })
    .is_err());
}

#[test]
fn feature_counts() {
    for (kind, m, d) in [
        (TransformKind::Std, 6, 6),
        (TransformKind::Cov, 6, 21),
        (TransformKind::Cov, 3, 6),
    ] {
        assert_eq!(kind.n_features(m), d);
        let names: Vec<String> = (0..m).map(|j| format!("c{j}")).collect();
        assert_eq!(feature_names(kind, &names).len(), d);
        let mut r = common::rng(m as u64);
        let w = common::random_matrix(&mut r, 300, m);
        let f = tsclass::transforms::transform_window(kind, w.view()).unwrap();
        assert_eq!(f.len(), d);
    }
}

#[test]
fn indefinite_matrix_has_no_square_root() {
    assert!(cov_sqrt(&CovMatrix {
        sigma: array![[1.0, 2.0], [2.0, 1.0]]
    })
    .is_err());
}

#[test]
fn single_sample_window_is_rejected() {
    assert!(std_transform(array![[1.0, 2.0]].view()).is_err());
    assert!(cov_transform(array![[1.0, 2.0]].view()).is_err());
}

#[test]
fn segment_transform_with_channel_subset() {
    let mut r = common::rng(3);
    let segs: Vec<Segment> = (0..5)
        .map(|i| Segment {
            samples: common::random_matrix(&mut r, 50, 6),
            source_index: i,
            window_index: 0,
            label: Label::from_index(i % 2),
        })
        .collect();
    let names: Vec<String> = ["ax", "ay", "bx", "by", "cx", "cy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let x_only = [0usize, 2, 4];
    let fm = transform_segments(&segs, TransformKind::Cov, &names, Some(&x_only)).unwrap();
    assert_eq!(fm.values.dim(), (5, 6));
    assert_eq!(fm.labels, segs.iter().map(|s| s.label).collect::<Vec<_>>());
    assert_eq!(fm.feature_names[1], "sqrtcov(ax,bx)");
    let direct = cov_transform(segs[2].samples.select(ndarray::Axis(1), &x_only).view()).unwrap();
    assert_eq!(fm.values.row(2).to_vec(), direct);
    assert!(transform_segments(&segs, TransformKind::Std, &names, Some(&[7])).is_err());
    assert!(transform_segments(&segs, TransformKind::Std, &names, Some(&[])).is_err());
}

fn window_strategy() -> impl Strategy<Value = Array2<f64>> {
    (2usize..40, 1usize..7, any::<u64>()).prop_map(|(n, m, seed)| {
        let mut r = common::rng(seed);
        let mix = common::random_matrix(&mut r, m, m);
        common::random_matrix(&mut r, n, m).dot(&mix) * 3.0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn std_is_root_of_covariance_diagonal(w in window_strategy()) {
        let s = std_transform(w.view()).unwrap();
        let c = cov_matrix(w.view()).unwrap();
        for (j, v) in s.iter().enumerate() {
            prop_assert!((c.sigma[[j, j]].sqrt() - v).abs() < 1e-10);
        }
    }

    #[test]
    fn covariance_is_symmetric_psd_and_root_squares_back(w in window_strategy()) {
        let c = cov_matrix(w.view()).unwrap();
        prop_assert!((&c.sigma - &c.sigma.t()).iter().all(|v| v.abs() < 1e-10));
        let e = symmetric_eigen(c.sigma.view()).unwrap();
        prop_assert!(e.values.iter().all(|&v| v >= -1e-10));
        let r = cov_sqrt(&c).unwrap();
        prop_assert!((r.dot(&r) - &c.sigma).iter().all(|v| v.abs() < 1e-8));
        prop_assert_eq!(upper_triangle(&r), cov_transform(w.view()).unwrap());
    }

    #[test]
    fn correlation_has_unit_diagonal(w in window_strategy()) {
        let c = cov_matrix(w.view()).unwrap();
        prop_assume!((0..c.sigma.nrows()).all(|j| c.sigma[[j, j]] > 1e-12));
        let k = correlation(&c).unwrap();
        for i in 0..k.nrows() {
            prop_assert_eq!(k[[i, i]], 1.0);
            for j in 0..k.ncols() {
                prop_assert!(k[[i, j]].abs() <= 1.0);
            }
        }
    }

    #[test]
    fn transforms_ignore_a_constant_offset(w in window_strategy(), shift in -100.0f64..100.0) {
        let moved = &w + shift;
        let a = cov_transform(w.view()).unwrap();
        let b = cov_transform(moved.view()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6 * (1.0 + x.abs()));
        }
    }
}
