use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsclass::cnn::layers::Activation;
use tsclass::cnn::search::write_trial_log;
use tsclass::cnn::{
    checkpoint, evaluate_mse, grad_check, random_search, train, CnnConfig, CnnData, CnnModel,
    SearchSpace, TrainConfig,
};
use tsclass::Label;

fn random_inputs(n: usize, len: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n)
        .map(|_| (0..6 * len).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let labels = (0..n).map(|i| Label::from_index(i % 2)).collect();
    (inputs, labels)
}

fn data(inputs: Vec<Vec<f64>>, labels: Vec<Label>, channels: usize) -> CnnData {
    let len = inputs[0].len() / channels;
    CnnData {
        inputs,
        labels,
        channels,
        len,
    }
}

#[test]
fn full_network_gradient_check() {
    let (x, y) = random_inputs(4, 300, 3);
    for act in Activation::ALL {
        let m = CnnModel::new(CnnConfig {
            activation: act,
            ..Default::default()
        })
        .unwrap();
        let g = grad_check(&m, &x, &y, 1e-5, 11).unwrap();
        assert!(g.checked > 50, "{act:?}: only {} checked", g.checked);
        assert!(g.max_rel_error < 1e-4, "{act:?}: {g:?}");
    }
}

#[test]
fn fc_only_gradient_check() {
    let cfg = CnnConfig {
        in_channels: 6,
        input_len: 5,
        conv_layers: vec![],
        pool: None,
        activation: Activation::Tanh,
        ..Default::default()
    };
    let m = CnnModel::new(cfg).unwrap();
    let (x, y) = random_inputs(3, 5, 8);
    let g = grad_check(&m, &x, &y, 1e-5, 2).unwrap();
    assert!(g.max_rel_error < 1e-7, "{g:?}");
}

#[test]
fn relu_kink_is_excluded() {
    // zero input and zero conv biases put every conv1 pre-activation on the kink
    let mut m = CnnModel::new(CnnConfig {
        activation: Activation::Relu,
        ..Default::default()
    })
    .unwrap();
    let b = m
        .tensors
        .iter()
        .find(|t| t.name == "conv1.bias")
        .unwrap()
        .range();
    m.params[b].fill(0.0);
    let g = grad_check(&m, &[vec![0.0; 1800]], &[Label::Broken], 1e-5, 0).unwrap();
    assert!(g.excluded > 0, "{g:?}");
    assert!(g.max_rel_error < 1e-4, "{g:?}");
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let (x, y) = random_inputs(6, 300, 1);
    let d = data(x, y, 6);
    let mut m = CnnModel::new(CnnConfig::default()).unwrap();
    let before = m.params.clone();
    train(
        &mut m,
        &d,
        None,
        &TrainConfig {
            epochs: 2,
            batch_size: 4,
            learning_rate: 0.0,
            weight_decay: 1e-3,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(m.params, before);
}

#[test]
fn single_sample_memorization() {
    let (x, _) = random_inputs(1, 300, 5);
    let d = data(x, vec![Label::Broken], 6);
    let mut m = CnnModel::new(CnnConfig::default()).unwrap();
    let r = train(
        &mut m,
        &d,
        None,
        &TrainConfig {
            epochs: 500,
            batch_size: 1,
            learning_rate: 1e-2,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(
        evaluate_mse(&m, &d).unwrap() < 1e-3,
        "final {:?}",
        r.train_mse.last()
    );
}

#[test]
fn loss_decreases_early() {
    let (x, _) = random_inputs(1, 300, 9);
    let d = data(x, vec![Label::Intact], 6);
    for lr in [1e-3, 1e-2] {
        let mut m = CnnModel::new(CnnConfig::default()).unwrap();
        let r = train(
            &mut m,
            &d,
            None,
            &TrainConfig {
                epochs: 5,
                batch_size: 1,
                learning_rate: lr,
                ..Default::default()
            },
        )
        .unwrap();
        let after = evaluate_mse(&m, &d).unwrap();
        assert!(
            after < r.train_mse[0],
            "lr {lr}: {:?} then {after}",
            r.train_mse
        );
        assert!(
            r.train_mse.windows(2).all(|w| w[1] < w[0]),
            "lr {lr}: {:?}",
            r.train_mse
        );
    }
}

#[test]
fn training_is_deterministic() {
    let (x, y) = random_inputs(20, 300, 2);
    let d = data(x, y, 6);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 10,
        learning_rate: 1e-2,
        weight_decay: 1e-5,
        ..Default::default()
    };
    let run = || {
        let mut m = CnnModel::new(CnnConfig::default()).unwrap();
        let r = train(&mut m, &d, Some(&d), &cfg).unwrap();
        (m.params, r)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert_eq!(ra, rb);
}

#[test]
fn log_uniform_learning_rate_quartiles() {
    let space = SearchSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut logs: Vec<f64> = (0..10_000)
        .map(|_| space.sample(&mut rng).learning_rate.log10())
        .collect();
    logs.sort_by(f64::total_cmp);
    for (q, want) in [(0.25, -3.25), (0.5, -2.5), (0.75, -1.75)] {
        let got = logs[(q * logs.len() as f64) as usize];
        assert!((got - want).abs() < 0.1, "q{q}: {got}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let p = space.sample(&mut rng);
        assert!([10, 30, 50, 100].contains(&p.batch_size));
        assert!((1e-7..=5e-4).contains(&p.weight_decay));
    }
}

#[test]
fn single_trial_search_and_log() {
    let cfg = CnnConfig {
        input_len: 4,
        conv_layers: vec![],
        pool: None,
        ..Default::default()
    };
    let (x, y) = random_inputs(12, 4, 4);
    let d = data(x, y, 6);
    let space = SearchSpace {
        n_trials: 1,
        ..Default::default()
    };
    let base = TrainConfig {
        epochs: 3,
        ..Default::default()
    };
    let r = random_search(&space, &cfg, &base, &d, &d, 7).unwrap();
    assert_eq!(r.trials.len(), 1);
    assert_eq!(r.best, r.trials[0]);
    let mut buf = Vec::new();
    write_trial_log(&mut buf, &r.trials).unwrap();
    let line: serde_json::Value =
        serde_json::from_slice(buf.split(|b| *b == b'\n').next().unwrap()).unwrap();
    assert_eq!(line["trial"], 0);
    assert!(line["learning_rate"].as_f64().is_some());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = CnnModel::new(CnnConfig {
        seed: 9,
        activation: Activation::Swish,
        ..Default::default()
    })
    .unwrap();
    let manifest = checkpoint::save(&m, &dir.path().join("model")).unwrap();
    let back = checkpoint::load(&manifest).unwrap();
    assert_eq!(back, m);
}
