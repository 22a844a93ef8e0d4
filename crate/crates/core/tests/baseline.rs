mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use tsclass::baseline::{
    fit_line, fit_line_coefficients, line_distribution, moment_form, monitor, MonitorConfig,
    RegressionLine,
};
use tsclass::dataset::{generate, GeneratorConfig, Preset};
use tsclass::pipeline::baseline_lines;
use tsclass::{Label, MultivariateSeries, NoiseLevel};

fn two_channel(x: Vec<f64>, y: Vec<f64>) -> MultivariateSeries {
    let n = x.len();
    let samples = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { x[i] } else { y[i] });
    MultivariateSeries::new(samples, 5.0, vec!["accx_FJ".into(), "bmx".into()]).unwrap()
}

#[test]
fn closed_and_moment_forms_agree() {
    let mut r = common::rng(8);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..10).map(|_| r.gen_range(0.05..3.0)).collect();
        let y: Vec<f64> = (0..10).map(|_| r.gen_range(0.05..3.0)).collect();
        let (a0, a1) = fit_line_coefficients(&x, &y).unwrap();
        let (b0, b1) = moment_form(&x, &y).unwrap();
        assert!(
            (a0 - b0).abs() < 1e-10 && (a1 - b1).abs() < 1e-10,
            "{a0} {a1} vs {b0} {b1}"
        );
    }
}

#[test]
fn hand_example_and_degenerate_x() {
    let l = fit_line(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap();
    assert!(l.intercept.abs() < 1e-12 && (l.incline - 1.5).abs() < 1e-12);
    assert!(fit_line(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    assert!(fit_line(&[1.0], &[1.0]).is_err());
    assert!(fit_line(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn sixty_minutes_give_fifty_one_lines() {
    let mut r = common::rng(1);
    let n = 60 * 300;
    let x: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let out = monitor(&two_channel(x, y), &MonitorConfig::default()).unwrap();
    assert_eq!(out.lines.len(), 51);
    assert!(out.gaps.is_empty());
    assert!(out
        .lines
        .windows(2)
        .all(|w| w[1].window_start_index == w[0].window_start_index + 300));
}

#[test]
fn proportional_channels_give_the_exact_line() {
    let n = 30 * 300;
    let x: Vec<f64> = (0..n)
        .map(|t| {
            let t = t as f64 / 5.0;
            (1.0 + 0.5 * (t / 400.0).sin()) * (t * 0.9).sin()
        })
        .collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
    let out = monitor(&two_channel(x, y), &MonitorConfig::default()).unwrap();
    assert_eq!(out.lines.len(), 21);
    for l in &out.lines {
        assert!(
            l.intercept.abs() < 1e-8 && (l.incline - 3.0).abs() < 1e-8,
            "{l:?}"
        );
    }
}

#[test]
fn constant_window_is_recorded_as_a_gap() {
    let n = 12 * 300;
    let x = vec![1.0; n];
    let y: Vec<f64> = (0..n).map(|t| (t as f64).sin()).collect();
    let out = monitor(&two_channel(x, y), &MonitorConfig::default()).unwrap();
    assert!(out.lines.is_empty());
    assert_eq!(out.gaps.len(), 3);
}

#[test]
fn bad_configs_are_rejected() {
    let s = two_channel(vec![0.0; 2700], vec![0.0; 2700]);
    let same = MonitorConfig {
        y_channel: "accx_FJ".into(),
        ..Default::default()
    };
    assert!(monitor(&s, &same).is_err());
    let missing = MonitorConfig {
        y_channel: "nope".into(),
        ..Default::default()
    };
    assert!(monitor(&s, &missing).is_err());
    let step = MonitorConfig {
        window_minutes: 2,
        step_minutes: 2,
        ..Default::default()
    };
    assert!(monitor(&s, &step).is_err());
    assert!(monitor(&s, &MonitorConfig::default()).is_err());
}

#[test]
fn line_summary_examples() {
    let line = |a, b| RegressionLine {
        window_start_index: 0,
        intercept: a,
        incline: b,
    };
    let s = line_distribution(&[line(0.0, 1.0), line(2.0, 3.0)]).unwrap();
    assert_eq!((s.mean_intercept, s.mean_incline), (1.0, 2.0));
    let same = line_distribution(&[line(0.5, 0.5); 4]).unwrap();
    assert_eq!((same.std_intercept, same.std_incline), (0.0, 0.0));
    assert!(line_distribution(&[]).is_err());
}

#[test]
fn stationary_inclines_have_bounded_drift() {
    let mut cfg = GeneratorConfig::preset(Preset::Slack, NoiseLevel::One, 1, 4);
    cfg.series_len = 6 * 60 * 300;
    cfg.sea_state = None;
    cfg.base_noise_std = vec![0.0; 6];
    let set = generate(&cfg).unwrap();
    for (s, _) in &set.items {
        let out = monitor(s, &MonitorConfig::default()).unwrap();
        let mut b: Vec<f64> = out.lines.iter().map(|l| l.incline).collect();
        let k = b.len();
        b.sort_by(f64::total_cmp);
        let median = b[k / 2];
        let iqr = b[3 * k / 4] - b[k / 4];
        let inside = b
            .iter()
            .filter(|v| (*v - median).abs() <= 3.0 * iqr)
            .count();
        assert!(inside as f64 >= 0.95 * k as f64, "{inside} of {k}");
    }
}

/// Whether thresholding at `t` classifies every intact and every broken line.
fn accuracy_at(vals: &[(f64, Label)], t: f64, broken_above: bool) -> (bool, bool) {
    let ok = |v: f64, l: Label| ((v > t) == broken_above) == (l == Label::Broken);
    (
        vals.iter()
            .filter(|(_, l)| *l == Label::Intact)
            .all(|&(v, l)| ok(v, l)),
        vals.iter()
            .filter(|(_, l)| *l == Label::Broken)
            .all(|&(v, l)| ok(v, l)),
    )
}

#[test]
fn class_clouds_differ_but_overlap() {
    let cfg = GeneratorConfig::preset(Preset::Slack, NoiseLevel::One, 4, 6);
    let set = generate(&cfg).unwrap();
    let lines = baseline_lines(&MonitorConfig::default(), &set).unwrap();
    let cloud = |label| -> Vec<RegressionLine> {
        lines
            .iter()
            .filter(|l| l.label == label)
            .map(|l| l.line)
            .collect()
    };
    let (a, b) = (
        line_distribution(&cloud(Label::Intact)).unwrap(),
        line_distribution(&cloud(Label::Broken)).unwrap(),
    );
    assert!(a.mean_intercept != b.mean_intercept && a.mean_incline != b.mean_incline);
    for pick in [
        |l: &RegressionLine| l.intercept,
        |l: &RegressionLine| l.incline,
    ] {
        let vals: Vec<(f64, Label)> = lines.iter().map(|l| (pick(&l.line), l.label)).collect();
        for &(t, _) in &vals {
            for dir in [true, false] {
                assert_ne!(
                    accuracy_at(&vals, t, dir),
                    (true, true),
                    "threshold {t} separates the clouds"
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shift_and_scale(seed in 0u64..10_000, shift in -5.0f64..5.0, scale in 0.1f64..10.0) {
        let mut r = common::rng(seed);
        let x: Vec<f64> = (0..10).map(|_| r.gen_range(0.1..2.0)).collect();
        let y: Vec<f64> = (0..10).map(|_| r.gen_range(0.1..2.0)).collect();
        let (b0, b1) = fit_line_coefficients(&x, &y).unwrap();
        let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let (s0, s1) = fit_line_coefficients(&x, &shifted).unwrap();
        prop_assert!((s0 - b0 - shift).abs() < 1e-9 && (s1 - b1).abs() < 1e-9);
        let scaled: Vec<f64> = y.iter().map(|v| v * scale).collect();
        let (c0, c1) = fit_line_coefficients(&x, &scaled).unwrap();
        prop_assert!((c0 - scale * b0).abs() < 1e-9 * scale.max(1.0) && (c1 - scale * b1).abs() < 1e-9 * scale.max(1.0));
    }

    #[test]
    fn line_count_formula(minutes in 11usize..40, window in 2usize..11, seed in 0u64..100) {
        let mut r = common::rng(seed);
        let n = minutes * 300;
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let cfg = MonitorConfig { window_minutes: window, ..Default::default() };
        let out = monitor(&two_channel(x, y), &cfg).unwrap();
        prop_assert_eq!(out.lines.len() + out.gaps.len(), minutes - window + 1);
    }
}
