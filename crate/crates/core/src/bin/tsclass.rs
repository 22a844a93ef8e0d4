use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tsclass::cnn::{self, ChannelScaler, CnnData, SearchSpace};
use tsclass::dataset::{self, GeneratorConfig, Preset};
use tsclass::dtree::{self, Criterion, FeatureSet, TreeConfig};
use tsclass::eval::{self, MethodReport};
use tsclass::io;
use tsclass::pipeline::{self, MethodKind, ModelFile, PipelineConfig};
use tsclass::svm::{self, KernelKind};
use tsclass::transforms::TransformKind;
use tsclass::{logreg, pca, Error, NoiseLevel, Result};

#[derive(Parser)]
#[command(
    name = "tsclass",
    version,
    about = "Intact/broken classification of multichannel sensor series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled surrogate series set.
    Generate(GenerateArgs),
    /// Window, split and transform a series set into feature matrices.
    Transform(TransformArgs),
    /// Fit PCA on a feature matrix and project one or more matrices.
    Pca(PcaArgs),
    /// Regression-line monitor over every series in a set.
    Baseline(BaselineArgs),
    /// Train one classifier.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Score a trained model on a test set.
    Evaluate(EvaluateArgs),
    /// Run the four classifiers on one split and write the comparison table.
    Compare(RunArgs),
    /// Run the configured method end to end.
    Run(RunArgs),
    /// Write CSV bundles for external plotting.
    EmitPlots(PlotArgs),
}

fn parse_noise(s: &str) -> std::result::Result<NoiseLevel, String> {
    let n: u32 = s.parse().map_err(|_| format!("`{s}` is not an integer"))?;
    NoiseLevel::try_from(n).map_err(|e| e.to_string())
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    n_per_class: usize,
    #[arg(long, value_parser = parse_noise, default_value = "1")]
    noise: NoiseLevel,
    #[arg(long, value_enum, default_value_t = Preset::Slack)]
    preset: Preset,
    #[arg(long, default_value_t = dataset::DEFAULT_SERIES_LEN)]
    series_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Data and split options shared by the pipeline-backed subcommands. Flags
/// override values from `--config`.
#[derive(Args, Clone, Default)]
struct DataArgs {
    /// JSON pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Series set directory; generated from the seed when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_parser = parse_noise)]
    noise: Option<NoiseLevel>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    series_len: Option<usize>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    window_seconds: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Comma-separated channel names.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<String>>,
}

impl DataArgs {
    fn resolve(&self, out: &Path) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        cfg.out_dir = out.to_path_buf();
        let d = &mut cfg.data;
        if let Some(v) = &self.input {
            d.input = Some(v.clone());
        }
        if let Some(v) = self.n_per_class {
            d.n_series_per_class = v;
        }
        if let Some(v) = self.series_len {
            d.series_len = v;
        }
        if let Some(v) = self.preset {
            d.preset = v;
        }
        if let Some(v) = self.window_seconds {
            d.window_seconds = v;
        }
        if let Some(v) = self.test_fraction {
            d.test_fraction = v;
        }
        if let Some(v) = &self.channels {
            d.channels = Some(v.clone());
        }
        if let Some(v) = self.noise {
            cfg.noise = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = TransformKind::Cov)]
    kind: TransformKind,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PcaArgs {
    /// Feature matrix the components are fitted on.
    #[arg(long)]
    train: PathBuf,
    /// Further matrices to project with the fitted model.
    #[arg(long)]
    project: Vec<PathBuf>,
    #[arg(long)]
    pcs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    x_channel: Option<String>,
    #[arg(long)]
    y_channel: Option<String>,
    #[arg(long)]
    window_minutes: Option<usize>,
    #[arg(long)]
    step_minutes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TrainCommand {
    Logreg(LogregArgs),
    Dtree(DtreeArgs),
    Svm(SvmArgs),
    Cnn(CnnArgs),
}

#[derive(Args)]
struct FeatureTrainArgs {
    /// Training feature matrix (CSV with a trailing label column).
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LogregArgs {
    #[command(flatten)]
    common: FeatureTrainArgs,
    /// L2 penalty λ in λ/2·‖β‖².
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Prune {
    None,
    Pre,
    Post,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureSetArg {
    Std,
    Cov,
    CovPca4,
}

impl From<FeatureSetArg> for FeatureSet {
    fn from(f: FeatureSetArg) -> Self {
        match f {
            FeatureSetArg::Std => FeatureSet::Std,
            FeatureSetArg::Cov => FeatureSet::Cov,
            FeatureSetArg::CovPca4 => FeatureSet::CovPca4,
        }
    }
}

#[derive(Args)]
struct DtreeArgs {
    #[command(flatten)]
    common: FeatureTrainArgs,
    #[arg(long, value_enum, default_value_t = Criterion::Gini)]
    criterion: Criterion,
    /// `pre` grid-searches depth and leaf limits, `post` applies cost-complexity pruning.
    #[arg(long, value_enum, default_value_t = Prune::None)]
    prune: Prune,
    /// Pruning strength for `--prune post`; the preset for the feature set when absent.
    #[arg(long)]
    ccp_alpha: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 2)]
    min_samples_split: usize,
    #[arg(long, default_value_t = 1)]
    min_samples_leaf: usize,
    /// Selects the preset grid and pruning strength.
    #[arg(long, value_enum, default_value_t = FeatureSetArg::CovPca4)]
    feature_set: FeatureSetArg,
    #[arg(long, value_parser = parse_noise, default_value = "1")]
    noise: NoiseLevel,
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
    /// Also write the cost-complexity pruning path.
    #[arg(long)]
    path: bool,
}

#[derive(Args)]
struct SvmArgs {
    #[command(flatten)]
    common: FeatureTrainArgs,
    #[arg(long, value_enum, default_value_t = KernelKind::Rbf)]
    kernel: KernelKind,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    gamma: Option<f64>,
    /// Cross-validate C over `lo,hi,count` (log-spaced).
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

#[derive(Args)]
struct CnnArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Random-search trials; a single run with the configured settings when absent.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Use the tuned activation, learning rate, weight decay and batch size for the noise level.
    #[arg(long)]
    noise_preset: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// `model_<method>.json`, or a CNN checkpoint manifest.
    #[arg(long)]
    model: PathBuf,
    /// Test feature matrix for the classical models.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Channel scaler written next to a CNN checkpoint.
    #[arg(long)]
    cnn_scaler: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    transform: Option<TransformKind>,
    /// Principal components kept; 0 disables PCA.
    #[arg(long)]
    pcs: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<MethodKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Feature matrix for pairwise scatter and marginal files.
    #[arg(long)]
    features: Option<PathBuf>,
    /// PCA model for the explained-variance table.
    #[arg(long)]
    pca: Option<PathBuf>,
    /// Regression lines written by `baseline`.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// CNN checkpoint manifest for the embedding; needs the data options and `--cnn-scaler`.
    #[arg(long)]
    cnn: Option<PathBuf>,
    #[arg(long)]
    cnn_scaler: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Stdout writes that tolerate a closed pipe.
fn say(text: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_artifacts(paths: &[PathBuf]) {
    for p in paths {
        say(p.display());
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut g = GeneratorConfig::preset(a.preset, a.noise, a.n_per_class, a.seed);
    g.series_len = a.series_len;
    let set = dataset::generate(&g)?;
    io::write_set(&a.out, &set)?;
    io::write_json(&a.out.join("generator.json"), &g)?;
    say(format!(
        "{} series written to {}",
        set.len(),
        a.out.display()
    ));
    Ok(())
}

fn transform(a: TransformArgs) -> Result<()> {
    let mut cfg = a.data.resolve(&a.out)?;
    cfg.transform = a.kind;
    cfg.pcs = None;
    cfg.validate()?;
    let set = pipeline::load_or_generate(&cfg)?;
    let prep = pipeline::prepare(&cfg, &set)?;
    let f = pipeline::featurize(&prep, cfg.transform, None)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut artifacts = Vec::new();
    pipeline::write_feature_bundle(&cfg, &f, &mut artifacts)?;
    print_artifacts(&artifacts);
    Ok(())
}

fn run_pca(a: PcaArgs) -> Result<()> {
    let train = io::read_features(&a.train)?;
    if a.pcs == 0 || a.pcs > train.n_features() {
        return Err(Error::config(
            "pcs",
            format!("must lie in 1..={}, got {}", train.n_features(), a.pcs),
        ));
    }
    let model = pca::fit(&train, a.pcs)?;
    fs::create_dir_all(&a.out)?;
    let mut artifacts = vec![a.out.join("pca.json")];
    io::write_json(&artifacts[0], &model)?;
    for src in std::iter::once(&a.train).chain(&a.project) {
        let fm = if src == &a.train {
            train.clone()
        } else {
            io::read_features(src)?
        };
        let stem = src
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("features");
        let p = a.out.join(format!("{stem}_pca{}.csv", a.pcs));
        io::write_features(&p, &model.project(&fm)?)?;
        artifacts.push(p);
    }
    artifacts.push(pipeline::emit_pca_ratio(&model, &a.out)?);
    print_artifacts(&artifacts);
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let mut cfg = a.data.resolve(&a.out)?;
    cfg.method = MethodKind::Baseline;
    let b = &mut cfg.baseline;
    if let Some(v) = a.x_channel {
        b.x_channel = v;
    }
    if let Some(v) = a.y_channel {
        b.y_channel = v;
    }
    if let Some(v) = a.window_minutes {
        b.window_minutes = v;
    }
    if let Some(v) = a.step_minutes {
        b.step_minutes = v;
    }
    print_artifacts(&pipeline::run_pipeline(&cfg)?.artifacts);
    Ok(())
}

fn save_model(out: &Path, name: &str, model: &ModelFile) -> Result<()> {
    fs::create_dir_all(out)?;
    let p = out.join(format!("model_{name}.json"));
    io::write_json(&p, model)?;
    say(format!("{}", p.display()));
    Ok(())
}

fn train_logreg(a: LogregArgs) -> Result<()> {
    let train = io::read_features(&a.common.train)?;
    let cfg = logreg::LogRConfig {
        reg_strength: a.lambda,
        ..Default::default()
    };
    let m = logreg::fit(train.values.view(), &train.labels, &cfg)?;
    save_model(&a.common.out, "logreg", &ModelFile::Logreg(m))
}

fn train_dtree(a: DtreeArgs) -> Result<()> {
    let train = io::read_features(&a.common.train)?;
    let x = train.values.view();
    let set: FeatureSet = a.feature_set.into();
    let mut cfg = TreeConfig {
        criterion: a.criterion,
        max_depth: a.max_depth,
        min_samples_split: a.min_samples_split,
        min_samples_leaf: a.min_samples_leaf,
        ccp_alpha: 0.0,
    };
    if a.prune == Prune::Pre {
        let grid = dtree::preset_grid(set, a.criterion);
        let r = dtree::grid_search(
            x,
            &train.labels,
            a.criterion,
            &grid,
            a.k_folds,
            a.common.seed,
        )?;
        say(format!("grid search cv accuracy {:.4}", r.cv_score));
        cfg = r.best;
    }
    if a.prune == Prune::Post {
        cfg.ccp_alpha = a
            .ccp_alpha
            .unwrap_or_else(|| dtree::preset_ccp_alpha(set, a.criterion, a.noise));
    } else if let Some(alpha) = a.ccp_alpha {
        cfg.ccp_alpha = alpha;
    }
    let m = dtree::fit(x, &train.labels, &cfg)?;
    if a.path {
        let unpruned = dtree::fit(
            x,
            &train.labels,
            &TreeConfig {
                ccp_alpha: 0.0,
                ..cfg.clone()
            },
        )?;
        let path = dtree::ccp_path(&unpruned);
        fs::create_dir_all(&a.common.out)?;
        let p = a.common.out.join("ccp_path.json");
        io::write_json(&p, &path.entries)?;
        say(format!("{}", p.display()));
    }
    fs::create_dir_all(&a.common.out)?;
    io::write_json(&a.common.out.join("tree_config.json"), &cfg)?;
    save_model(&a.common.out, "dtree", &ModelFile::Dtree(m))
}

fn train_svm(a: SvmArgs) -> Result<()> {
    let train = io::read_features(&a.common.train)?;
    let x = train.values.view();
    let mut cfg = svm::SvmConfig {
        kernel: a.kernel,
        gamma: a.gamma,
        c: a.c,
        tol: a.tol,
        ..Default::default()
    };
    if let Some(g) = &a.c_grid {
        if !(g.len() == 3 && g[0] > 0.0 && g[1] >= g[0] && g[2] >= 1.0 && g[2].fract() == 0.0) {
            return Err(Error::config(
                "c-grid",
                "expected lo,hi,count with 0 < lo <= hi and a positive integer count",
            ));
        }
        let grid = svm::log_grid(g[0], g[1], g[2] as usize);
        let r = svm::tune_c(x, &train.labels, &cfg, &grid, a.k_folds, a.common.seed)?;
        say(format!(
            "selected C = {} (cv accuracy {:.4}{})",
            r.c,
            r.cv_score,
            if r.at_boundary {
                ", at grid boundary"
            } else {
                ""
            }
        ));
        cfg.c = r.c;
    }
    let m = svm::fit(x, &train.labels, &cfg)?;
    say(format!(
        "{} support vectors ({} at C)",
        m.n_support(),
        m.n_bounded()
    ));
    save_model(&a.common.out, "svm", &ModelFile::Svm(m))
}

fn train_cnn(a: CnnArgs) -> Result<()> {
    let mut cfg = a.data.resolve(&a.out)?;
    cfg.method = MethodKind::Cnn;
    if let Some(e) = a.epochs {
        cfg.cnn.train.epochs = e;
    }
    if a.noise_preset {
        cfg.cnn.noise_preset = true;
    }
    if let Some(t) = a.trials {
        cfg.cnn.search = Some(SearchSpace {
            n_trials: t,
            ..cfg.cnn.search.unwrap_or_default()
        });
    }
    let out = pipeline::run_pipeline(&cfg)?;
    say(eval::format_table(&out.reports).trim_end());
    print_artifacts(&out.artifacts);
    Ok(())
}

fn cnn_test_data(data: &DataArgs, out: &Path, scaler: Option<&PathBuf>) -> Result<CnnData> {
    let cfg = data.resolve(out)?;
    let scaler: ChannelScaler = io::read_json(
        scaler.ok_or_else(|| Error::config("cnn-scaler", "required for a CNN checkpoint"))?,
    )?;
    let set = pipeline::load_or_generate(&cfg)?;
    let prep = pipeline::prepare(&cfg, &set)?;
    let mut test = CnnData::from_segments(&prep.test, Some(&prep.channels))?;
    scaler.apply(&mut test)?;
    Ok(test)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.model)?;
    let report = match serde_json::from_str::<ModelFile>(&text) {
        Ok(model) => {
            let test_path = a
                .test
                .as_ref()
                .ok_or_else(|| Error::config("test", "required for a feature model"))?;
            let test = io::read_features(test_path)?;
            let name = match model {
                ModelFile::Logreg(_) => "logreg",
                ModelFile::Dtree(_) => "dtree",
                ModelFile::Svm(_) => "svm",
            };
            timed_report(name, &test.labels, &a.model, || {
                model.predict_rows(test.values.view())
            })?
        }
        Err(_) => {
            let model = cnn::checkpoint::load(&a.model)?;
            let test = cnn_test_data(&a.data, &a.out, a.cnn_scaler.as_ref())?;
            timed_report("cnn", &test.labels, &a.model, || {
                model.predict_batch(&test.inputs)
            })?
        }
    };
    fs::create_dir_all(&a.out)?;
    let p = a.out.join("report.csv");
    eval::write_reports_csv(fs::File::create(&p)?, std::slice::from_ref(&report))?;
    say(eval::format_table(std::slice::from_ref(&report)).trim_end());
    say(format!("{}", p.display()));
    Ok(())
}

fn timed_report(
    name: &str,
    truth: &[tsclass::Label],
    model_path: &Path,
    predict: impl Fn() -> Result<Vec<tsclass::Label>>,
) -> Result<MethodReport> {
    let mut best = f64::INFINITY;
    let mut pred = Vec::new();
    for _ in 0..eval::TEST_TIMING_REPEATS {
        let (p, ms) = eval::time_ms(&predict)?;
        best = best.min(ms);
        pred = p;
    }
    MethodReport::from_predictions(
        name,
        &pred,
        truth,
        f64::NAN,
        best,
        format!("model={}", model_path.display()),
    )
}

fn run_args(a: &RunArgs) -> Result<PipelineConfig> {
    let mut cfg = a.data.resolve(&a.out)?;
    if let Some(t) = a.transform {
        cfg.transform = t;
    }
    if let Some(p) = a.pcs {
        cfg.pcs = (p > 0).then_some(p);
    }
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(e) = a.epochs {
        cfg.cnn.train.epochs = e;
    }
    if let Some(t) = a.trials {
        cfg.cnn.search = Some(SearchSpace {
            n_trials: t,
            ..cfg.cnn.search.clone().unwrap_or_default()
        });
    }
    Ok(cfg)
}

fn run(a: RunArgs, all: bool) -> Result<()> {
    let cfg = run_args(&a)?;
    let out = if all {
        pipeline::compare(&cfg)?
    } else {
        pipeline::run_pipeline(&cfg)?
    };
    if !out.reports.is_empty() {
        say(eval::format_table(&out.reports).trim_end());
    }
    print_artifacts(&out.artifacts);
    Ok(())
}

fn emit_plots(a: PlotArgs) -> Result<()> {
    let mut artifacts = Vec::new();
    if let Some(p) = &a.features {
        artifacts.extend(pipeline::emit_feature_plots(
            &io::read_features(p)?,
            &a.out,
        )?);
    }
    if let Some(p) = &a.pca {
        artifacts.push(pipeline::emit_pca_ratio(&io::read_json(p)?, &a.out)?);
    }
    if let Some(p) = &a.baseline {
        artifacts.push(pipeline::emit_baseline_cloud(
            &pipeline::read_labeled_lines(p)?,
            &a.out,
        )?);
    }
    if let Some(p) = &a.cnn {
        let model = cnn::checkpoint::load(p)?;
        let test = cnn_test_data(&a.data, &a.out, a.cnn_scaler.as_ref())?;
        artifacts.push(pipeline::emit_embedding(&model, &test, &a.out)?);
    }
    if artifacts.is_empty() {
        return Err(Error::config(
            "emit-plots",
            "give at least one of --features, --pca, --baseline, --cnn",
        ));
    }
    print_artifacts(&artifacts);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Transform(a) => transform(a),
        Command::Pca(a) => run_pca(a),
        Command::Baseline(a) => baseline(a),
        Command::Train(TrainCommand::Logreg(a)) => train_logreg(a),
        Command::Train(TrainCommand::Dtree(a)) => train_dtree(a),
        Command::Train(TrainCommand::Svm(a)) => train_svm(a),
        Command::Train(TrainCommand::Cnn(a)) => train_cnn(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => run(a, true),
        Command::Run(a) => run(a, false),
        Command::EmitPlots(a) => emit_plots(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
