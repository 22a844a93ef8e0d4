mod common;

use ndarray::{array, Array2, Axis};
use proptest::prelude::*;
use tsclass::pca::{self, PcaModel};
use tsclass::pipeline::{self, prepare, PipelineConfig};
use tsclass::transforms::{transform_segments, TransformKind};

fn normalized_cov(m: &PcaModel, x: &Array2<f64>) -> Array2<f64> {
    let xn = m.normalize(x.view()).unwrap();
    xn.t().dot(&xn) / x.nrows() as f64
}

fn pairwise_max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let da = (&a.row(i) - &a.row(j)).mapv(|v| v * v).sum().sqrt();
            let db = (&b.row(i) - &b.row(j)).mapv(|v| v * v).sum().sqrt();
            worst = worst.max((da - db).abs());
        }
    }
    worst
}

#[test]
fn random_matrices_satisfy_the_oracles() {
    let mut r = common::rng(2);
    for _ in 0..50 {
        let x = common::random_matrix(&mut r, 20, 5).dot(&common::random_matrix(&mut r, 5, 5));
        let m = pca::fit_values(x.view(), 5).unwrap();
        let cov = normalized_cov(&m, &x);
        for k in 0..5 {
            let w = m.components.column(k);
            let res = cov.dot(&w) - &w * m.eigenvalues[k];
            assert!(res.mapv(|v| v * v).sum().sqrt() < 1e-8);
            assert!((w.dot(&w) - 1.0).abs() < 1e-10);
        }
        let xn = m.normalize(x.view()).unwrap();
        let p = m.project_values(x.view()).unwrap();
        assert!(pairwise_max_diff(&xn, &p) < 1e-8);
        let back = p.dot(&m.components.t());
        assert!((&back - &xn).mapv(|v| v * v).sum().sqrt() < 1e-8);
        let ratio = m.explained_variance_ratio().unwrap();
        assert!((ratio.sum() - 1.0).abs() < 1e-10);
        assert!(ratio.windows(2).into_iter().all(|w| w[0] >= w[1] - 1e-15));
    }
}

#[test]
fn rank_one_data() {
    let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]];
    let m = pca::fit_values(x.view(), 1).unwrap();
    assert!((m.eigenvalues[0] - 2.0).abs() < 1e-12);
    assert!(m.eigenvalues[1].abs() < 1e-12);
    let r = m.explained_variance_ratio().unwrap();
    assert!((r[0] - 1.0).abs() < 1e-12);
    assert_eq!(m.project_values(x.view()).unwrap().ncols(), 1);
}

#[test]
fn json_round_trip_and_bad_dimensions() {
    let mut r = common::rng(4);
    let x = common::random_matrix(&mut r, 10, 4);
    let m = pca::fit_values(x.view(), 2).unwrap();
    let back: PcaModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
    let mut v: serde_json::Value = serde_json::to_value(&m).unwrap();
    v["d"] = 9.into();
    assert!(serde_json::from_value::<PcaModel>(v).is_err());
}

#[test]
fn seven_components_carry_most_cov_variance() {
    let mut cfg = PipelineConfig::default();
    cfg.data.n_series_per_class = 6;
    let set = pipeline::load_or_generate(&cfg).unwrap();
    let prep = prepare(&cfg, &set).unwrap();
    let fm =
        transform_segments(&prep.train, TransformKind::Cov, &prep.channel_names, None).unwrap();
    assert_eq!(fm.n_features(), 21);
    let m = pca::fit(&fm, 7).unwrap();
    let r = m.explained_variance_ratio().unwrap();
    let head: f64 = r.iter().take(7).sum();
    assert!(head > 0.9, "first seven ratios sum to {head}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_of_the_mean_is_zero(seed in 0u64..10_000, n in 3usize..30, d in 1usize..6) {
        let mut r = common::rng(seed);
        let x = common::random_matrix(&mut r, n, d);
        let k = 1 + (seed as usize) % d;
        let m = pca::fit_values(x.view(), k).unwrap();
        let p = m.project_values(m.mean.view().insert_axis(Axis(0))).unwrap();
        prop_assert!(p.iter().all(|v| v.abs() < 1e-12));
        let proj = m.project_values(x.view()).unwrap();
        let mean = proj.mean_axis(Axis(0)).unwrap();
        prop_assert!(mean.iter().all(|v| v.abs() < 1e-10));
        let var = proj.var_axis(Axis(0), 0.0);
        for (j, v) in var.iter().enumerate() {
            prop_assert!((v - m.eigenvalues[j]).abs() < 1e-9);
        }
    }
}
