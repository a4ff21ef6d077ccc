//! `cgait` command line. Exit codes: 0 success, 1 runtime failure, 2 usage
//! or configuration error.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use cgait_core::adjudicator::{AdjudicatorConfig, ChatBackend, ManualClock};
use cgait_core::cnn::{evaluate, grid_search, train, ArchConfig, HyperGrid, Network, TrainConfig};
use cgait_core::fixture::{decode_windows, encode_windows};
use cgait_core::signal::Window;
use cgait_core::xmed::{discrepancy_summary, XmedConfig};
use cgait_core::Severity;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::backend::{HttpBackend, HttpBackendConfig, MockBackend, SystemClock};
use crate::config::{LlmConfig, ServiceConfig};
use crate::data::{window_index, DataSet};
use crate::pipeline::{analyze, read_model, write_model};
use crate::report::{
    classification_table, confusion_csv, explanation_csv, explanation_svg, run_summary_csv, xmed_csv_row, XmedRow,
    XMED_CSV_HEADER,
};
use crate::service::{AppState, StateParts};
use crate::synth::{write_data_dir, SynthConfig};
use crate::sweep::{run_sweep, summarize, CASES_CSV_HEADER};

#[derive(Debug, Parser)]
#[command(name = "cgait", version, about = "Gait severity classification with explanation review")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic data directory with a planted class feature.
    Synth(SynthArgs),
    /// Pack windows into the binary window fixture format.
    Ingest(IngestArgs),
    /// Train a model on the train split and write a checkpoint.
    Train(TrainArgs),
    /// Nested cross-validated grid search.
    Tune(TuneArgs),
    /// Classify one window.
    Predict(WindowArgs),
    /// Per-frame explanation maps of one window as CSV.
    Explain(ExplainArgs),
    /// Discrepancy report for every selected window.
    Xmed(XmedBatchArgs),
    /// Per-class metrics and confusion matrix.
    Evaluate(EvaluateArgs),
    /// Adjudication sweep summarized as a run report.
    Contest(ContestArgs),
    /// SVG figure of a window with both explanation maps.
    Report(ReportArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub subjects_per_class: usize,
    #[arg(long, default_value_t = 3)]
    pub windows_per_subject: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Leave out the planted feature.
    #[arg(long)]
    pub unplanted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

/// Where windows come from: a data directory (split by subject with
/// `--seed`) or a window fixture file.
#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
pub struct SourceArgs {
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub fixture: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Ignored for fixtures, which are used whole.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    /// Five conv blocks and two hidden dense layers.
    Default,
    /// Two conv blocks and one hidden dense layer; fast on one core.
    Small,
}

impl ArchArg {
    pub fn config(self) -> ArchConfig {
        match self {
            ArchArg::Default => ArchConfig::default(),
            ArchArg::Small => small_arch(),
        }
    }
}

pub fn small_arch() -> ArchConfig {
    ArchConfig {
        conv_channels: vec![16, 32],
        kernel_size: 9,
        pool_size: 4,
        dense_widths: vec![32],
        ..ArchConfig::default()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML with optional `[arch]` and `[train]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    /// Seeds the split, the initialization and the batch order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub outer: usize,
    #[arg(long, default_value_t = 2)]
    pub inner: usize,
    #[arg(long, value_enum, default_value = "small")]
    pub arch: ArchArg,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.0003,0.001")]
    pub learning_rates: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5")]
    pub dropouts: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "32")]
    pub batch_sizes: Vec<usize>,
    /// Write the full search result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct XmedArgs {
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 10)]
    pub merge_gap: usize,
    #[arg(long, default_value_t = 3.0)]
    pub alert_pct: f64,
}

impl XmedArgs {
    fn config(&self) -> Result<XmedConfig, CliError> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) || !(self.alert_pct > 0.0 && self.alert_pct.is_finite()) {
            return Err(CliError::usage("--threshold and --alert-pct must be positive"));
        }
        Ok(XmedConfig {
            threshold: self.threshold,
            merge_gap: self.merge_gap,
            alert_pct: self.alert_pct,
        })
    }
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub subject: String,
    #[arg(long)]
    pub window: usize,
    #[command(flatten)]
    pub xmed: XmedArgs,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub target: WindowArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub target: WindowArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct XmedBatchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub xmed: XmedArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub select: SelectArgs,
    /// Write the classification report and confusion matrix as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MockArg {
    /// Always keep the classifier's label.
    Retain,
    /// Always answer the true label.
    Correct,
    /// Always answer `--label`.
    Fixed,
}

#[derive(Debug, Args)]
pub struct ContestArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: BackendArg,
    #[arg(long, value_enum, default_value = "retain")]
    pub mock: MockArg,
    #[arg(long)]
    pub label: Option<Severity>,
    /// Service config whose `[llm]` table configures the HTTP backend.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of windows to adjudicate, taken in order.
    #[arg(long, default_value_t = 30)]
    pub cases: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-case CSV.
    #[arg(long)]
    pub cases_out: Option<PathBuf>,
    #[arg(long)]
    pub run: Option<String>,
    #[command(flatten)]
    pub xmed: XmedArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn runtime(msg: impl ToString) -> Self {
        CliError::Runtime(msg.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn load_data(dir: &Path) -> Result<DataSet> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("data directory {} does not exist", dir.display())));
    }
    DataSet::load(dir).map_err(|e| CliError::usage(e.to_string()))
}

fn load_model(path: &Path) -> Result<Network> {
    if !path.is_file() {
        return Err(CliError::usage(format!("checkpoint {} does not exist", path.display())));
    }
    read_model(path).map_err(|e| CliError::usage(e.to_string()))
}

fn pick(data: &DataSet, split: SplitArg, seed: u64) -> Result<Vec<Window>> {
    if split == SplitArg::All {
        return Ok(data.windows());
    }
    let s = data.split(seed).map_err(|e| CliError::usage(e.to_string()))?;
    Ok(match split {
        SplitArg::Train => s.train,
        SplitArg::Val => s.val,
        SplitArg::Test => s.test,
        SplitArg::All => unreachable!(),
    })
}

fn select(sel: &SelectArgs) -> Result<Vec<Window>> {
    if let Some(dir) = &sel.source.data_dir {
        return pick(&load_data(dir)?, sel.split, sel.seed);
    }
    let path = sel.source.fixture.as_ref().expect("clap enforces one source");
    let bytes = fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let stem = path.file_stem().map_or("fixture".into(), |s| s.to_string_lossy().into_owned());
    decode_windows(&bytes, &stem).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        subjects_per_class: a.subjects_per_class,
        windows_per_subject: a.windows_per_subject,
        seed: a.seed,
        planted: !a.unplanted,
        ..SynthConfig::default()
    };
    if cfg.subjects_per_class == 0 || cfg.windows_per_subject == 0 {
        return Err(CliError::usage("--subjects-per-class and --windows-per-subject must be at least 1"));
    }
    let manifest = write_data_dir(&a.out, &cfg).map_err(CliError::runtime)?;
    println!("wrote {} subjects to {}", manifest.len(), a.out.display());
    Ok(())
}

fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let windows = pick(&load_data(&a.data_dir)?, a.split, a.seed)?;
    let bytes = encode_windows(&windows).map_err(CliError::runtime)?;
    write_file(&a.out, &bytes)?;
    println!("{} windows sha256 {}", windows.len(), hex::encode(Sha256::digest(&bytes)));
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    arch: Option<ArchConfig>,
    train: Option<TrainConfig>,
}

fn train_settings(a: &TrainArgs) -> Result<(ArchConfig, TrainConfig)> {
    let file = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            toml::from_str::<TrainFile>(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        }
        None => TrainFile::default(),
    };
    let arch = a.arch.map(ArchArg::config).or(file.arch).unwrap_or_default();
    let mut t = file.train.unwrap_or_default();
    t.seed = a.seed;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.dropout {
        t.dropout_rate = v;
    }
    if let Some(v) = a.patience {
        t.patience = (v > 0).then_some(v);
    }
    Ok((arch, t))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let data = load_data(&a.data_dir)?;
    let (arch, tc) = train_settings(a)?;
    let split = data.split(a.seed).map_err(|e| CliError::usage(e.to_string()))?;
    let net = arch.build(tc.dropout_rate, tc.seed).map_err(|e| CliError::usage(e.to_string()))?;
    println!(
        "split train {} val {} test {} windows; {} parameters",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        net.parameter_count()
    );
    let (net, hist) = train(net, &split.train, &split.val, &tc).map_err(CliError::runtime)?;
    for e in &hist.epochs {
        println!(
            "epoch {:>3} train_loss {:.4} train_acc {:.4} val_loss {:.4} val_acc {:.4} val_f1 {:.4}",
            e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy, e.val_f1
        );
    }
    println!("best epoch {}{}", hist.best_epoch, if hist.stopped_early { " (stopped early)" } else { "" });
    let (_, cm) = evaluate(&net, &split.test).map_err(CliError::runtime)?;
    let r = cm.report();
    println!("test accuracy {:.4} weighted_f1 {:.4}", r.accuracy, r.weighted_avg.f1);
    let digest = write_model(&net, &a.out).map_err(CliError::runtime)?;
    println!("checkpoint {} sha256 {digest}", a.out.display());
    Ok(())
}

fn cmd_tune(a: &TuneArgs) -> Result<()> {
    let windows = load_data(&a.data_dir)?.windows();
    let base = TrainConfig {
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let grid = HyperGrid {
        archs: vec![a.arch.config()],
        learning_rates: a.learning_rates.clone(),
        dropout_rates: a.dropouts.clone(),
        batch_sizes: a.batch_sizes.clone(),
    }
    .points(&base);
    let res = grid_search(&windows, &grid, a.outer, a.inner, a.seed).map_err(|e| CliError::usage(e.to_string()))?;
    println!("candidate,learning_rate,dropout,batch_size,mean_inner_f1");
    for (i, c) in res.candidates.iter().enumerate() {
        let t = &c.params.train;
        println!("{i},{},{},{},{:.4}", t.learning_rate, t.dropout_rate, t.batch_size, c.mean_inner_f1);
    }
    let outer: Vec<String> = res.outer_f1.iter().map(|f| format!("{f:.4}")).collect();
    println!("best {} outer_f1 {}", res.best_index, outer.join(" "));
    if let Some(out) = &a.out {
        write_file(out, serde_json::to_vec_pretty(&res).expect("serializable"))?;
    }
    Ok(())
}

fn target_window(a: &WindowArgs) -> Result<(Network, Window, XmedConfig)> {
    let xmed = a.xmed.config()?;
    let net = load_model(&a.checkpoint)?;
    let data = load_data(&a.data_dir)?;
    let subject = data
        .subject(&a.subject)
        .ok_or_else(|| CliError::usage(format!("unknown subject {}", a.subject)))?;
    let window = subject
        .window(a.window)
        .ok_or_else(|| CliError::usage(format!("subject {} has no window {}", a.subject, a.window)))?;
    Ok((net, window, xmed))
}

fn cmd_predict(a: &WindowArgs) -> Result<()> {
    let (net, window, xmed) = target_window(a)?;
    let an = analyze(&net, &window, &xmed).map_err(CliError::runtime)?;
    let out = serde_json::json!({
        "subject_id": window.source_id,
        "window_index": a.window,
        "label": window.label,
        "prediction": an.prediction,
        "xmed": an.discrepancy.summary(),
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}

fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let (net, window, xmed) = target_window(&a.target)?;
    let an = analyze(&net, &window, &xmed).map_err(CliError::runtime)?;
    write_file(&a.out, explanation_csv(&window, &an.gradcam, &an.lrp, &an.discrepancy))?;
    println!(
        "predicted {} discrepancy {:.1}%{}",
        an.prediction.predicted_class,
        an.discrepancy.discrepancy_percentage,
        if an.discrepancy.alert { " alert" } else { "" }
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let (net, window, xmed) = target_window(&a.target)?;
    let an = analyze(&net, &window, &xmed).map_err(CliError::runtime)?;
    let title = format!(
        "{} window {}: predicted {} ({:.3}), label {}",
        window.source_id,
        a.target.window,
        an.prediction.predicted_class,
        an.prediction.confidence,
        window.label.map_or("unlabeled".to_string(), |l| l.to_string())
    );
    write_file(&a.out, explanation_svg(&title, &window, &an.gradcam, &an.lrp, &an.discrepancy))?;
    Ok(())
}

fn cmd_xmed(a: &XmedBatchArgs) -> Result<()> {
    let xmed = a.xmed.config()?;
    let net = load_model(&a.checkpoint)?;
    let windows = select(&a.select)?;
    let mut csv = String::from(XMED_CSV_HEADER);
    csv.push('\n');
    let mut reports = Vec::with_capacity(windows.len());
    for w in &windows {
        let an = analyze(&net, w, &xmed).map_err(CliError::runtime)?;
        csv.push_str(&xmed_csv_row(&XmedRow {
            window: w,
            window_index: window_index(w),
            predicted: an.prediction.predicted_class,
            confidence: an.prediction.confidence,
            report: &an.discrepancy,
        }));
        csv.push('\n');
        if let Some(label) = w.label {
            reports.push((an.discrepancy, label == an.prediction.predicted_class));
        }
    }
    write_file(&a.out, csv)?;
    let n_correct = reports.iter().filter(|r| r.1).count();
    println!("windows {} correct {} incorrect {}", windows.len(), n_correct, reports.len() - n_correct);
    match discrepancy_summary(reports.iter().map(|(r, c)| (r, *c))) {
        Ok((c, i)) => println!("mean discrepancy correct {c:.2}% incorrect {i:.2}%"),
        Err(e) => println!("group means unavailable: {e}"),
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let net = load_model(&a.checkpoint)?;
    let windows = select(&a.select)?;
    let (loss, cm) = evaluate(&net, &windows).map_err(|e| CliError::usage(e.to_string()))?;
    let report = cm.report();
    print!("{}", classification_table(&report));
    println!();
    print!("{}", confusion_csv(&cm));
    println!("mean loss {loss:.4}");
    if let Some(path) = &a.json {
        let body = serde_json::json!({"report": report, "confusion": cm.counts});
        write_file(path, serde_json::to_vec_pretty(&body).expect("serializable"))?;
    }
    Ok(())
}

fn cmd_contest(a: &ContestArgs) -> Result<()> {
    let xmed = a.xmed.config()?;
    let net = load_model(&a.checkpoint)?;
    let mut windows = select(&a.select)?;
    windows.truncate(a.cases);
    if windows.is_empty() {
        return Err(CliError::usage("no windows selected"));
    }
    let llm = match &a.config {
        Some(p) => ServiceConfig::load(p).map_err(|e| CliError::usage(e.to_string()))?.llm,
        None => LlmConfig::default(),
    };
    let adj: AdjudicatorConfig = llm.adjudicator();
    let run = a.run.clone().unwrap_or_else(|| match a.backend {
        BackendArg::Mock => format!("mock-{:?}", a.mock).to_lowercase(),
        BackendArg::Http => llm.model_name.clone(),
    });
    let cases = match a.backend {
        BackendArg::Http => {
            let backend = HttpBackend::new(&HttpBackendConfig {
                base_url: llm.base_url.clone(),
                api_key: llm.api_key(),
                timeout_s: llm.timeout_s,
            });
            run_sweep(&net, &windows, &xmed, &adj, &SystemClock, |_| &backend as &dyn ChatBackend)
        }
        BackendArg::Mock => {
            let clock = ManualClock::new(0);
            match a.mock {
                MockArg::Retain => {
                    let m = MockBackend::retain();
                    run_sweep(&net, &windows, &xmed, &adj, &clock, |_| &m as &dyn ChatBackend)
                }
                MockArg::Fixed => {
                    let label = a.label.ok_or_else(|| CliError::usage("--mock fixed needs --label"))?;
                    let m = MockBackend::fixed(label);
                    run_sweep(&net, &windows, &xmed, &adj, &clock, |_| &m as &dyn ChatBackend)
                }
                MockArg::Correct => {
                    let per_class: Vec<MockBackend> = Severity::ALL.into_iter().map(MockBackend::fixed).collect();
                    run_sweep(&net, &windows, &xmed, &adj, &clock, |w| {
                        &per_class[w.label.map_or(0, |l| l.index())] as &dyn ChatBackend
                    })
                }
            }
        }
    }
    .map_err(CliError::runtime)?;
    let summary = summarize(&run, &cases);
    write_file(&a.out, run_summary_csv(std::slice::from_ref(&summary)))?;
    if let Some(path) = &a.cases_out {
        let mut csv = String::from(CASES_CSV_HEADER);
        csv.push('\n');
        for c in &cases {
            csv.push_str(&c.csv_row());
            csv.push('\n');
        }
        write_file(path, csv)?;
    }
    let c = summary.confusion;
    println!(
        "cases {} retain_correct {} retain_incorrect {} overturn_correct {} overturn_incorrect {} sca {}",
        cases.len(),
        c.retain_correct,
        c.retain_incorrect,
        c.overturn_correct,
        c.overturn_incorrect,
        summary.sca_pct.map_or("n/a".to_string(), |v| format!("{v:.2}%"))
    );
    Ok(())
}

fn cmd_serve(a: &ServeArgs) -> Result<()> {
    let cfg = ServiceConfig::load(&a.config).map_err(|e| CliError::usage(e.to_string()))?;
    let data = load_data(&cfg.data_directory)?;
    let model = cfg.checkpoint_path.as_deref().map(load_model).transpose()?;
    let state = AppState::with_system_clock(StateParts {
        data,
        model,
        xmed: cfg.xmed,
        adjudicator: cfg.llm.adjudicator(),
        auto_adjudicate_on_alert: cfg.auto_adjudicate_on_alert,
        auth_token: cfg.auth_token.clone(),
        backend: cfg.llm.build_backend(),
        clock: Arc::new(SystemClock),
        audit_log_path: cfg.audit_log_path.clone(),
        llm_concurrency: cfg.llm.max_concurrency,
    })
    .map_err(|e| CliError::usage(e.to_string()))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.listen_address)
            .await
            .map_err(|e| CliError::usage(format!("cannot listen on {}: {e}", cfg.listen_address)))?;
        let addr = listener.local_addr().map_err(CliError::runtime)?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        crate::service::serve(state, listener).await.map_err(CliError::runtime)
    })
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Xmed(a) => cmd_xmed(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Contest(a) => cmd_contest(a),
        Command::Report(a) => cmd_report(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

/// Parse `args`, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
