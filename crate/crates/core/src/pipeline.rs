//! End-to-end runs: window → transform → standardise → PCA → classify →
//! report, with every intermediate written under `out_dir`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{self, MonitorConfig, RegressionLine};
use crate::cnn::{
    self, Activation, ChannelScaler, CnnConfig, CnnData, CnnModel, SearchSpace, TrainConfig,
};
use crate::dataset::{self, GeneratorConfig, Label, LabeledSeriesSet, NoiseLevel, Preset, Segment};
use crate::dtree::{self, DecisionTree, FeatureSet, TreeConfig};
use crate::error::{Error, Result};
use crate::eval::{self, Method, MethodReport};
use crate::io;
use crate::logreg::{self, LogRConfig, LogRModel};
use crate::pca::{self, PcaModel};
use crate::svm::{self, SvmConfig, SvmModel};
use crate::transforms::{transform_segments, FeatureMatrix, TransformKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Logreg,
    Dtree,
    Svm,
    Cnn,
    Baseline,
}

impl MethodKind {
    pub const CLASSIFIERS: [MethodKind; 4] = [
        MethodKind::Logreg,
        MethodKind::Dtree,
        MethodKind::Svm,
        MethodKind::Cnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Logreg => "logreg",
            MethodKind::Dtree => "dtree",
            MethodKind::Svm => "svm",
            MethodKind::Cnn => "cnn",
            MethodKind::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Read a series set from this directory instead of generating one.
    pub input: Option<PathBuf>,
    pub preset: Preset,
    pub n_series_per_class: usize,
    pub series_len: usize,
    pub window_seconds: f64,
    pub test_fraction: f64,
    /// Restrict transforms and the CNN to these channels.
    pub channels: Option<Vec<String>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            input: None,
            preset: Preset::Slack,
            n_series_per_class: 20,
            series_len: dataset::DEFAULT_SERIES_LEN,
            window_seconds: dataset::DEFAULT_WINDOW_SECONDS,
            test_fraction: 0.2,
            channels: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtreeSection {
    pub tree: TreeConfig,
    /// Choose the pre-pruning limits by cross-validated grid search over the
    /// preset ranges for the feature set.
    pub grid_search: bool,
    /// Take `ccp_alpha` from the presets instead of `tree.ccp_alpha`.
    pub preset_alpha: bool,
    pub k_folds: usize,
}

impl Default for DtreeSection {
    fn default() -> Self {
        DtreeSection {
            tree: TreeConfig::default(),
            grid_search: true,
            preset_alpha: true,
            k_folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub svm: SvmConfig,
    /// When set, C is chosen from this grid by cross-validation.
    pub c_grid: Option<Vec<f64>>,
    pub k_folds: usize,
}

impl Default for SvmSection {
    fn default() -> Self {
        SvmSection {
            svm: SvmConfig::default(),
            c_grid: None,
            k_folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct CnnSection {
    pub model: CnnConfig,
    pub train: TrainConfig,
    /// Replace activation, learning rate, weight decay and batch size with
    /// the tuned values for the noise level.
    pub noise_preset: bool,
    /// Run a random search instead of a single training run.
    pub search: Option<SearchSpace>,
}

/// Tuned CNN settings per noise level: activation, learning rate, weight
/// decay and batch size.
pub fn cnn_noise_preset(noise: NoiseLevel) -> (Activation, f64, f64, usize) {
    match noise {
        NoiseLevel::One => (Activation::LeakyRelu, 2.562e-2, 1.243e-5, 30),
        NoiseLevel::Ten => (Activation::LeakyRelu, 2.102e-3, 1.221e-5, 10),
        NoiseLevel::Fifty => (Activation::Swish, 1.017e-2, 1.520e-7, 30),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub transform: TransformKind,
    pub pcs: Option<usize>,
    pub method: MethodKind,
    pub noise: NoiseLevel,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub logreg: LogRConfig,
    pub dtree: DtreeSection,
    pub svm: SvmSection,
    pub cnn: CnnSection,
    pub baseline: MonitorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            transform: TransformKind::Cov,
            pcs: Some(4),
            method: MethodKind::Logreg,
            noise: NoiseLevel::One,
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            logreg: LogRConfig::default(),
            dtree: DtreeSection::default(),
            svm: SvmSection::default(),
            cnn: CnnSection::default(),
            baseline: MonitorConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(serde_json::to_vec(self)?);
        Ok(digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }))
    }

    fn n_channels(&self) -> usize {
        self.data
            .channels
            .as_ref()
            .map_or(dataset::DEFAULT_CHANNELS.len(), Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.transform.n_features(self.n_channels());
        if let Some(p) = self.pcs {
            if p == 0 || p > d {
                return Err(Error::config(
                    "pcs",
                    format!(
                        "must lie in 1..={d} for the {:?} transform, got {p}",
                        self.transform
                    ),
                ));
            }
        }
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(Error::config("data.test_fraction", "must lie in (0, 1)"));
        }
        if !(self.data.window_seconds > 0.0) {
            return Err(Error::config("data.window_seconds", "must be positive"));
        }
        if self.data.input.is_none() && self.data.n_series_per_class == 0 {
            return Err(Error::config("data.n_series_per_class", "must be positive"));
        }
        if self.dtree.k_folds < 2 || self.svm.k_folds < 2 {
            return Err(Error::config("k_folds", "must be at least 2"));
        }
        if matches!(&self.svm.c_grid, Some(g) if g.is_empty() || g.iter().any(|c| !(*c > 0.0))) {
            return Err(Error::config(
                "svm.c_grid",
                "must be non-empty with positive entries",
            ));
        }
        Ok(())
    }

    fn feature_set(&self) -> FeatureSet {
        match (self.transform, self.pcs) {
            (TransformKind::Std, _) => FeatureSet::Std,
            (TransformKind::Cov, None) => FeatureSet::Cov,
            (TransformKind::Cov, Some(_)) => FeatureSet::CovPca4,
        }
    }
}

pub fn load_or_generate(cfg: &PipelineConfig) -> Result<LabeledSeriesSet> {
    match &cfg.data.input {
        Some(dir) => io::read_set(dir),
        None => {
            let mut g = GeneratorConfig::preset(
                cfg.data.preset,
                cfg.noise,
                cfg.data.n_series_per_class,
                cfg.seed,
            );
            g.series_len = cfg.data.series_len;
            dataset::generate(&g)
        }
    }
}

/// Windowed segments split into training and test sets.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Vec<Segment>,
    pub test: Vec<Segment>,
    pub channel_names: Vec<String>,
    /// Selected channel indices.
    pub channels: Vec<usize>,
}

pub fn prepare(cfg: &PipelineConfig, set: &LabeledSeriesSet) -> Result<Prepared> {
    let (first, _) = set
        .items
        .first()
        .ok_or_else(|| Error::input("empty series set"))?;
    let channel_names = first.channel_names().to_vec();
    let channels = match &cfg.data.channels {
        None => (0..channel_names.len()).collect(),
        Some(names) => names
            .iter()
            .map(|n| {
                first
                    .channel_index(n)
                    .ok_or_else(|| Error::config("data.channels", format!("unknown channel {n}")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let segments = dataset::window(set, cfg.data.window_seconds)?;
    let (train, test) = dataset::split(segments, cfg.data.test_fraction, cfg.seed)?;
    Ok(Prepared {
        train,
        test,
        channel_names,
        channels,
    })
}

/// Standardised (and optionally projected) features of both splits.
#[derive(Clone, Debug)]
pub struct Features {
    pub raw_train: FeatureMatrix,
    pub raw_test: FeatureMatrix,
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub scaler: dataset::Scaler,
    pub pca: Option<PcaModel>,
}

pub fn featurize(prep: &Prepared, kind: TransformKind, pcs: Option<usize>) -> Result<Features> {
    let raw_train =
        transform_segments(&prep.train, kind, &prep.channel_names, Some(&prep.channels))?;
    let raw_test = transform_segments(&prep.test, kind, &prep.channel_names, Some(&prep.channels))?;
    let std = dataset::standardize(&raw_train, &raw_test)?;
    let (train, test, pca) = match pcs {
        None => (std.train, std.test, None),
        Some(d) => {
            let model = pca::fit(&std.train, d)?;
            (
                model.project(&std.train)?,
                model.project(&std.test)?,
                Some(model),
            )
        }
    };
    Ok(Features {
        raw_train,
        raw_test,
        train,
        test,
        scaler: std.scaler,
        pca,
    })
}

/// Fitted classical model, tagged by kind in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Logreg(LogRModel),
    Dtree(DecisionTree),
    Svm(SvmModel),
}

impl ModelFile {
    pub fn predict_rows(&self, x: ndarray::ArrayView2<'_, f64>) -> Result<Vec<Label>> {
        match self {
            ModelFile::Logreg(m) => m.predict_rows(x),
            ModelFile::Dtree(m) => m.predict_rows(x),
            ModelFile::Svm(m) => m.predict_rows(x),
        }
    }

    pub fn n_support(&self) -> Option<usize> {
        match self {
            ModelFile::Svm(m) => Some(m.n_support()),
            _ => None,
        }
    }
}

/// Fit a classical method on `train`; returns the model and a summary of
/// the chosen settings.
pub fn fit_classical(
    cfg: &PipelineConfig,
    kind: MethodKind,
    train: &FeatureMatrix,
) -> Result<(ModelFile, String)> {
    let x = train.values.view();
    let y = &train.labels;
    match kind {
        MethodKind::Logreg => {
            let m = logreg::fit(x, y, &cfg.logreg)?;
            let s = format!("lambda={}", m.reg_strength);
            Ok((ModelFile::Logreg(m), s))
        }
        MethodKind::Dtree => {
            let sec = &cfg.dtree;
            let mut tree_cfg = sec.tree.clone();
            if sec.grid_search {
                let grid = dtree::preset_grid(cfg.feature_set(), tree_cfg.criterion);
                let r = dtree::grid_search(x, y, tree_cfg.criterion, &grid, sec.k_folds, cfg.seed)?;
                tree_cfg = TreeConfig {
                    ccp_alpha: tree_cfg.ccp_alpha,
                    ..r.best
                };
            }
            if sec.preset_alpha {
                tree_cfg.ccp_alpha =
                    dtree::preset_ccp_alpha(cfg.feature_set(), tree_cfg.criterion, cfg.noise);
            }
            let m = dtree::fit(x, y, &tree_cfg)?;
            let s = format!(
                "criterion={:?} max_depth={} min_split={} min_leaf={} ccp_alpha={} nodes={}",
                tree_cfg.criterion,
                tree_cfg.max_depth.map_or("none".into(), |d| d.to_string()),
                tree_cfg.min_samples_split,
                tree_cfg.min_samples_leaf,
                tree_cfg.ccp_alpha,
                m.node_count()
            )
            .to_lowercase();
            Ok((ModelFile::Dtree(m), s))
        }
        MethodKind::Svm => {
            let sec = &cfg.svm;
            let mut svm_cfg = sec.svm.clone();
            if let Some(grid) = &sec.c_grid {
                svm_cfg.c = svm::tune_c(x, y, &svm_cfg, grid, sec.k_folds, cfg.seed)?.c;
            }
            let m = svm::fit(x, y, &svm_cfg)?;
            let kernel = match m.kernel {
                svm::Kernel::Linear => "linear".to_string(),
                svm::Kernel::Rbf { gamma } => format!("rbf gamma={gamma:.6}"),
            };
            let s = format!("{kernel} C={} sv={}", m.c, m.n_support());
            Ok((ModelFile::Svm(m), s))
        }
        MethodKind::Cnn | MethodKind::Baseline => Err(Error::config(
            "method",
            format!("{} is not a feature classifier", kind.name()),
        )),
    }
}

struct ClassicalMethod<'a> {
    cfg: &'a PipelineConfig,
    kind: MethodKind,
    features: &'a Features,
    model: Option<ModelFile>,
    summary: String,
}

impl Method for ClassicalMethod<'_> {
    fn name(&self) -> String {
        self.kind.name().into()
    }

    fn config_summary(&self) -> String {
        self.summary.clone()
    }

    fn fit(&mut self) -> Result<()> {
        let (m, s) = fit_classical(self.cfg, self.kind, &self.features.train)?;
        self.model = Some(m);
        self.summary = s;
        Ok(())
    }

    fn is_trained(&self) -> bool {
        self.model.is_some()
    }

    fn predict_test(&self) -> Result<Vec<Label>> {
        let m = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Training(format!("{} is not trained", self.kind.name())))?;
        m.predict_rows(self.features.test.values.view())
    }
}

/// CNN inputs of both splits after per-channel standardisation.
pub struct CnnInputs {
    pub train: CnnData,
    pub test: CnnData,
    pub scaler: ChannelScaler,
}

pub fn cnn_inputs(prep: &Prepared) -> Result<CnnInputs> {
    let mut train = CnnData::from_segments(&prep.train, Some(&prep.channels))?;
    let mut test = CnnData::from_segments(&prep.test, Some(&prep.channels))?;
    let scaler = ChannelScaler::fit(&train)?;
    scaler.apply(&mut train)?;
    scaler.apply(&mut test)?;
    Ok(CnnInputs {
        train,
        test,
        scaler,
    })
}

/// Model and training configuration after applying the noise preset and
/// the data shape.
pub fn resolved_cnn(cfg: &PipelineConfig, data: &CnnData) -> (CnnConfig, TrainConfig) {
    let sec = &cfg.cnn;
    let mut model = CnnConfig {
        in_channels: data.channels,
        input_len: data.len,
        ..sec.model.clone()
    };
    let mut train = sec.train.clone();
    if sec.noise_preset {
        let (act, lr, wd, bs) = cnn_noise_preset(cfg.noise);
        model.activation = act;
        train.learning_rate = lr;
        train.weight_decay = wd;
        train.batch_size = bs;
    }
    (model, train)
}

pub struct CnnOutcome {
    pub model: CnnModel,
    /// Training settings of the returned model.
    pub train: TrainConfig,
    pub report: cnn::TrainReport,
    pub trials: Vec<cnn::TrialRecord>,
}

pub fn fit_cnn(cfg: &PipelineConfig, inputs: &CnnInputs) -> Result<CnnOutcome> {
    let (model_cfg, train_cfg) = resolved_cnn(cfg, &inputs.train);
    match &cfg.cnn.search {
        Some(space) => {
            let r = cnn::random_search(
                space,
                &model_cfg,
                &train_cfg,
                &inputs.train,
                &inputs.test,
                cfg.seed,
            )?;
            let p = &r.best.params;
            let train = TrainConfig {
                learning_rate: p.learning_rate,
                weight_decay: p.weight_decay,
                batch_size: p.batch_size,
                seed: r.best.seed,
                ..train_cfg
            };
            Ok(CnnOutcome {
                model: r.best_model,
                train,
                report: cnn::TrainReport {
                    train_mse: r.best.train_mse.into_iter().collect(),
                    test_mse: r.best.test_mse.into_iter().collect(),
                },
                trials: r.trials,
            })
        }
        None => {
            let mut model = CnnModel::new(model_cfg)?;
            let report = cnn::train(&mut model, &inputs.train, Some(&inputs.test), &train_cfg)?;
            Ok(CnnOutcome {
                model,
                train: train_cfg,
                report,
                trials: Vec::new(),
            })
        }
    }
}

struct CnnMethod<'a> {
    cfg: &'a PipelineConfig,
    inputs: &'a CnnInputs,
    outcome: Option<CnnOutcome>,
}

impl Method for CnnMethod<'_> {
    fn name(&self) -> String {
        "cnn".into()
    }

    fn config_summary(&self) -> String {
        let (mut m, mut t) = resolved_cnn(self.cfg, &self.inputs.train);
        if let Some(o) = &self.outcome {
            m = o.model.config.clone();
            t = o.train.clone();
        }
        let mut s = format!(
            "act={} lr={:.4e} wd={:.4e} batch={} epochs={}",
            serde_json::to_value(m.activation)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            t.learning_rate,
            t.weight_decay,
            t.batch_size,
            t.epochs
        );
        if let Some(o) = &self.outcome {
            if let Some(mse) = o.report.test_mse.last() {
                let _ = write!(s, " test_mse={mse:.3e}");
            }
        }
        s
    }

    fn fit(&mut self) -> Result<()> {
        self.outcome = Some(fit_cnn(self.cfg, self.inputs)?);
        Ok(())
    }

    fn is_trained(&self) -> bool {
        self.outcome.is_some()
    }

    fn predict_test(&self) -> Result<Vec<Label>> {
        let o = self
            .outcome
            .as_ref()
            .ok_or_else(|| Error::Training("cnn is not trained".into()))?;
        o.model.predict_batch(&self.inputs.test.inputs)
    }
}

/// Results of a run plus every file written.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub reports: Vec<MethodReport>,
    pub config_hash: String,
    pub artifacts: Vec<PathBuf>,
    /// Support-vector count when an SVM was trained.
    pub n_support: Option<usize>,
}

fn persist_common(cfg: &PipelineConfig, hash: &str, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let p = cfg.out_dir.join("config.json");
    fs::write(&p, cfg.to_json()? + "\n")?;
    artifacts.push(p);
    let p = cfg.out_dir.join("config.sha256");
    fs::write(&p, format!("{hash}\n"))?;
    artifacts.push(p);
    Ok(())
}

pub fn write_feature_bundle(
    cfg: &PipelineConfig,
    f: &Features,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    for (name, fm) in [
        ("features_train.csv", &f.raw_train),
        ("features_test.csv", &f.raw_test),
        ("model_input_train.csv", &f.train),
        ("model_input_test.csv", &f.test),
    ] {
        let p = cfg.out_dir.join(name);
        io::write_features(&p, fm)?;
        artifacts.push(p);
    }
    let p = cfg.out_dir.join("scaler.json");
    io::write_json(&p, &f.scaler)?;
    artifacts.push(p);
    if let Some(m) = &f.pca {
        let p = cfg.out_dir.join("pca.json");
        io::write_json(&p, m)?;
        artifacts.push(p);
    }
    Ok(())
}

fn persist_reports(
    cfg: &PipelineConfig,
    reports: &[MethodReport],
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let p = cfg.out_dir.join("report.csv");
    eval::write_reports_csv(fs::File::create(&p)?, reports)?;
    artifacts.push(p);
    let p = cfg.out_dir.join("report.txt");
    fs::write(&p, eval::format_table(reports))?;
    artifacts.push(p);
    Ok(())
}

fn run_methods(
    cfg: &PipelineConfig,
    kinds: &[MethodKind],
    set: &LabeledSeriesSet,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let mut artifacts = Vec::new();
    persist_common(cfg, &hash, &mut artifacts)?;
    let prep = prepare(cfg, set)?;
    let needs_features = kinds.iter().any(|k| *k != MethodKind::Cnn);
    let features = if needs_features {
        let f = featurize(&prep, cfg.transform, cfg.pcs)?;
        write_feature_bundle(cfg, &f, &mut artifacts)?;
        Some(f)
    } else {
        None
    };
    let cnn_in = if kinds.contains(&MethodKind::Cnn) {
        Some(cnn_inputs(&prep)?)
    } else {
        None
    };

    let mut reports = Vec::new();
    let mut n_support = None;
    for &kind in kinds {
        let (report, model_path) = match kind {
            MethodKind::Cnn => {
                let inputs = cnn_in.as_ref().expect("cnn inputs");
                let mut m = CnnMethod {
                    cfg,
                    inputs,
                    outcome: None,
                };
                let ((), train_ms) = eval::time_ms(|| m.fit())?;
                let report = eval::evaluate_method(&m, &inputs.test.labels, train_ms)?;
                let o = m.outcome.as_ref().expect("trained");
                let manifest = cnn::checkpoint::save(&o.model, &cfg.out_dir.join("model_cnn"))?;
                artifacts.push(manifest.with_extension("bin"));
                let p = cfg.out_dir.join("cnn_scaler.json");
                io::write_json(&p, &inputs.scaler)?;
                artifacts.push(p);
                let p = cfg.out_dir.join("cnn_curves.json");
                io::write_json(&p, &o.report)?;
                artifacts.push(p);
                if !o.trials.is_empty() {
                    let p = cfg.out_dir.join("cnn_trials.jsonl");
                    cnn::search::write_trial_log(fs::File::create(&p)?, &o.trials)?;
                    artifacts.push(p);
                }
                (report, manifest)
            }
            MethodKind::Baseline => {
                return Err(Error::config(
                    "method",
                    "baseline produces no classification report",
                ))
            }
            _ => {
                let f = features.as_ref().expect("features");
                let mut m = ClassicalMethod {
                    cfg,
                    kind,
                    features: f,
                    model: None,
                    summary: String::new(),
                };
                let ((), train_ms) = eval::time_ms(|| m.fit())?;
                let report = eval::evaluate_method(&m, &f.test.labels, train_ms)?;
                let model = m.model.as_ref().expect("trained");
                if let Some(sv) = model.n_support() {
                    n_support = Some(sv);
                }
                let p = cfg.out_dir.join(format!("model_{}.json", kind.name()));
                io::write_json(&p, model)?;
                (report, p)
            }
        };
        artifacts.push(model_path.clone());
        let file = model_path
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        reports.push(MethodReport {
            config: format!("{} model={file} config={hash}", report.config),
            ..report
        });
    }
    persist_reports(cfg, &reports, &mut artifacts)?;
    Ok(PipelineOutput {
        reports,
        config_hash: hash,
        artifacts,
        n_support,
    })
}

/// Run the configured method end to end.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let set = load_or_generate(cfg)?;
    if cfg.method == MethodKind::Baseline {
        return run_baseline(cfg, &set);
    }
    run_methods(cfg, &[cfg.method], &set)
}

/// Run the four classifiers on one split and write the comparison table.
pub fn compare(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let set = load_or_generate(cfg)?;
    run_methods(cfg, &MethodKind::CLASSIFIERS, &set)
}

/// Same as [`compare`] on an existing series set.
pub fn compare_on(
    cfg: &PipelineConfig,
    set: &LabeledSeriesSet,
    kinds: &[MethodKind],
) -> Result<PipelineOutput> {
    run_methods(cfg, kinds, set)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledLine {
    pub series: usize,
    pub label: Label,
    #[serde(flatten)]
    pub line: RegressionLine,
}

/// Regression lines of every series in the set.
pub fn baseline_lines(cfg: &MonitorConfig, set: &LabeledSeriesSet) -> Result<Vec<LabeledLine>> {
    let mut out = Vec::new();
    for (i, (s, label)) in set.items.iter().enumerate() {
        let r = baseline::monitor(s, cfg)?;
        out.extend(r.lines.into_iter().map(|line| LabeledLine {
            series: i,
            label: *label,
            line,
        }));
    }
    Ok(out)
}

pub fn write_labeled_lines(path: &Path, lines: &[LabeledLine]) -> Result<()> {
    let mut wtr = io::csv_writer(path)?;
    wtr.write_record(["series", "label", "window_start", "intercept", "incline"])?;
    for l in lines {
        wtr.write_record([
            l.series.to_string(),
            l.label.as_u8().to_string(),
            l.line.window_start_index.to_string(),
            l.line.intercept.to_string(),
            l.line.incline.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_labeled_lines(path: &Path) -> Result<Vec<LabeledLine>> {
    let mut rdr = io::csv_reader(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| {
            rec.get(i)
                .ok_or_else(|| Error::input("baseline line row is too short"))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?
                .parse()
                .map_err(|_| Error::input(format!("cannot parse `{}`", rec.get(i).unwrap_or(""))))
        };
        out.push(LabeledLine {
            series: num(0)? as usize,
            label: if field(1)? == "1" {
                Label::Broken
            } else {
                Label::Intact
            },
            line: RegressionLine {
                window_start_index: num(2)? as usize,
                intercept: num(3)?,
                incline: num(4)?,
            },
        });
    }
    Ok(out)
}

fn run_baseline(cfg: &PipelineConfig, set: &LabeledSeriesSet) -> Result<PipelineOutput> {
    let hash = cfg.hash()?;
    let mut artifacts = Vec::new();
    persist_common(cfg, &hash, &mut artifacts)?;
    let lines = baseline_lines(&cfg.baseline, set)?;
    let p = cfg.out_dir.join("baseline_lines.csv");
    write_labeled_lines(&p, &lines)?;
    artifacts.push(p);
    let mut summaries = Vec::new();
    for label in [Label::Intact, Label::Broken] {
        let ls: Vec<RegressionLine> = lines
            .iter()
            .filter(|l| l.label == label)
            .map(|l| l.line)
            .collect();
        if !ls.is_empty() {
            summaries.push((label, baseline::line_distribution(&ls)?));
        }
    }
    let p = cfg.out_dir.join("baseline_summary.json");
    io::write_json(&p, &summaries)?;
    artifacts.push(p);
    Ok(PipelineOutput {
        reports: Vec::new(),
        config_hash: hash,
        artifacts,
        n_support: None,
    })
}

// --- plot bundles -------------------------------------------------------------

/// `pair_i_j.csv` for every feature pair and `marginal_i.csv` per feature,
/// each with a trailing label column.
pub fn emit_feature_plots(fm: &FeatureMatrix, dir: &Path) -> Result<Vec<PathBuf>> {
    let d = fm.n_features();
    if d == 0 || fm.n_rows() == 0 {
        return Err(Error::input("no features to plot"));
    }
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let write = |path: &Path, cols: &[usize]| -> Result<()> {
        let mut wtr = io::csv_writer(path)?;
        let mut header: Vec<String> = cols.iter().map(|&c| fm.feature_names[c].clone()).collect();
        header.push("label".into());
        wtr.write_record(&header)?;
        for (row, label) in fm.values.rows().into_iter().zip(&fm.labels) {
            let mut rec: Vec<String> = cols.iter().map(|&c| row[c].to_string()).collect();
            rec.push(label.as_u8().to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    };
    for i in 0..d {
        for j in i + 1..d {
            let p = dir.join(format!("pair_{i}_{j}.csv"));
            write(&p, &[i, j])?;
            out.push(p);
        }
    }
    for i in 0..d {
        let p = dir.join(format!("marginal_{i}.csv"));
        write(&p, &[i])?;
        out.push(p);
    }
    Ok(out)
}

/// Rows `(component, ratio, cumulative)` for the retained components.
pub fn emit_pca_ratio(model: &PcaModel, dir: &Path) -> Result<PathBuf> {
    let ratio = model.explained_variance_ratio()?;
    fs::create_dir_all(dir)?;
    let p = dir.join("pca_ratio.csv");
    let mut wtr = io::csv_writer(&p)?;
    wtr.write_record(["component", "ratio", "cumulative"])?;
    let mut cum = 0.0;
    for k in 0..model.d {
        cum += ratio[k];
        wtr.write_record([(k + 1).to_string(), ratio[k].to_string(), cum.to_string()])?;
    }
    wtr.flush()?;
    Ok(p)
}

/// `(intercept, incline, label)` cloud.
pub fn emit_baseline_cloud(lines: &[LabeledLine], dir: &Path) -> Result<PathBuf> {
    if lines.is_empty() {
        return Err(Error::input("no regression lines"));
    }
    fs::create_dir_all(dir)?;
    let p = dir.join("baseline_cloud.csv");
    let mut wtr = io::csv_writer(&p)?;
    wtr.write_record(["intercept", "incline", "label"])?;
    for l in lines {
        wtr.write_record([
            l.line.intercept.to_string(),
            l.line.incline.to_string(),
            l.label.as_u8().to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(p)
}

/// fc1 embedding of every input as `(x1, .., xk, label)`.
pub fn emit_embedding(model: &CnnModel, data: &CnnData, dir: &Path) -> Result<PathBuf> {
    if data.is_empty() {
        return Err(Error::input("no inputs to embed"));
    }
    let (_, emb) = model.forward(&data.inputs)?;
    fs::create_dir_all(dir)?;
    let p = dir.join("cnn_embedding.csv");
    let mut wtr = io::csv_writer(&p)?;
    let k = model.config.hidden;
    let mut header: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    wtr.write_record(&header)?;
    for (e, l) in emb.iter().zip(&data.labels) {
        let mut rec: Vec<String> = e.iter().map(|v| v.to_string()).collect();
        rec.push(l.as_u8().to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(p)
}
