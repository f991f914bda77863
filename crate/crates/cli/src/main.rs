//! `qgan`: ingest flows, screen features, synthesize data, train, detect and evaluate.

mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use qgan_core::data::{
    aggregate_1s, candidate_series, inject_anomalies, ingest_csv, make_windows, read_intervals,
    select_features, split_benign_train, synth_series, write_intervals, LabeledSeries, TimeWindow,
};
use qgan_core::detect::{
    score_series, write_scores_csv, DetectionMode, MetricsReport, Threshold, Weights,
};
use qgan_core::model::{ModelBody, ModelFile};
use qgan_core::pipeline::{calibrate, evaluate_modes, prepare};
use qgan_core::qgan::{
    evaluate_mse, train, train_classical, ClassicalGan, GanModel, Qgan, TrainedQgan,
};
use qgan_core::qsim::Backend;
use qgan_core::vqc::ParamVector;

use config::{BackendKind, RunConfig, ScoreSplit};

#[derive(Parser, Debug)]
#[command(name = "qgan", version, about = "Quantum GAN anomaly detection for network time series")]
struct Cli {
    /// TOML run configuration (default: $QGAN_CONFIG, else built-in defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed` and `synth.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Aggregate a raw flow CSV into one-second intervals.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Rank every numeric flow column by Granger causality toward the attack label.
    FeatureSelect {
        #[arg(long)]
        input: PathBuf,
    },
    /// Write a synthetic labeled interval series.
    Synth,
    /// Train a model on an interval CSV and calibrate its thresholds.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Train the parameter-matched classical GAN instead.
        #[arg(long)]
        baseline: bool,
    },
    /// Score an interval CSV in one detection mode.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// combined, gen_only or disc_only (default: `detect.mode`).
        #[arg(long)]
        mode: Option<DetectionMode>,
    },
    /// Score every detection mode and report metrics side by side.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Also evaluate on the noisy backend.
        #[arg(long)]
        noisy: bool,
    },
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn training(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    pub fn detection(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<qgan_core::Error> for CliError {
    fn from(e: qgan_core::Error) -> Self {
        Self::input(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::resolve(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.synth.seed = seed;
    }
    cfg.validate()?;
    fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", cli.out.display())))?;
    let out = Output {
        dir: cli.out,
        cfg: &cfg,
    };
    out.text("effective_config.toml", &cfg.to_toml())?;
    match cli.command {
        Command::Ingest { input } => cmd_ingest(&out, &input),
        Command::FeatureSelect { input } => cmd_feature_select(&out, &input),
        Command::Synth => cmd_synth(&out),
        Command::Train { input, baseline } => cmd_train(&out, &input, baseline),
        Command::Detect { input, model, mode } => {
            cmd_detect(&out, &input, &model, mode.unwrap_or(cfg.detect.mode))
        }
        Command::Evaluate {
            input,
            model,
            noisy,
        } => cmd_evaluate(&out, &input, &model, noisy),
    }
}

/// Artifact writer that stamps the effective configuration into every file.
struct Output<'a> {
    dir: PathBuf,
    cfg: &'a RunConfig,
}

impl Output<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.path(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
    }

    fn text(&self, name: &str, body: &str) -> CliResult<()> {
        let mut f = self.create(name)?;
        f.write_all(body.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| CliError::input(format!("cannot write {name}: {e}")))
    }

    /// JSON report with the effective config under `"config"`.
    fn report<T: Serialize>(&self, name: &str, body: T) -> CliResult<()> {
        let mut v = serde_json::to_value(body).expect("report serializes");
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("config".into(), serde_json::to_value(self.cfg).expect("config serializes"));
        }
        self.json(name, &v)
    }

    fn json<T: Serialize>(&self, name: &str, body: &T) -> CliResult<()> {
        self.text(name, &(serde_json::to_string_pretty(body).expect("json serializes") + "\n"))
    }

    /// CSV preceded by `#` comment lines holding the effective config.
    fn csv<F>(&self, name: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> qgan_core::Result<()>,
    {
        let mut f = self.create(name)?;
        let mut header = String::from("# effective config\n");
        for line in self.cfg.to_toml().lines() {
            header.push_str("# ");
            header.push_str(line);
            header.push('\n');
        }
        f.write_all(header.as_bytes())
            .map_err(|e| CliError::input(format!("cannot write {name}: {e}")))?;
        body(&mut f)?;
        f.flush()
            .map_err(|e| CliError::input(format!("cannot write {name}: {e}")))
    }
}

fn cmd_ingest(out: &Output, input: &Path) -> CliResult<()> {
    let (records, ingest) = ingest_csv(input, &out.cfg.data.columns)?;
    let (intervals, agg) = aggregate_1s(&records)?;
    out.csv("intervals.csv", |w| write_intervals(w, &intervals))?;
    let attack_seconds = intervals.iter().filter(|i| i.label()).count();
    out.report(
        "ingest_report.json",
        json!({
            "rows_read": ingest.rows_read,
            "rows_dropped": ingest.rows_dropped,
            "intervals": agg.buckets,
            "filled_intervals": agg.filled,
            "attack_records": agg.attack_records,
            "attack_intervals": attack_seconds,
        }),
    )?;
    println!(
        "{} rows ({} dropped) -> {} intervals, {} with attacks",
        ingest.rows_read, ingest.rows_dropped, agg.buckets, attack_seconds
    );
    Ok(())
}

fn cmd_feature_select(out: &Output, input: &Path) -> CliResult<()> {
    let data = &out.cfg.data;
    let c = candidate_series(input, &data.columns)?;
    let (ranked, singular) = select_features(&c.columns, &c.labels, data.granger_alpha, data.granger_max_lag)?;
    let skipped: Vec<_> = c
        .skipped
        .iter()
        .map(|n| json!({"feature": n, "reason": "no numeric values"}))
        .chain(singular.iter().map(|(n, r)| json!({"feature": n, "reason": r})))
        .collect();
    let rows: Vec<_> = ranked
        .iter()
        .map(|r| {
            json!({
                "feature": r.result.feature,
                "f_stat": r.result.f_stat,
                "p_value": r.result.p_value,
                "selected": r.selected,
            })
        })
        .collect();
    out.report("granger.json", json!({"ranking": rows, "skipped": skipped}))?;
    for r in ranked.iter().filter(|r| r.selected) {
        println!("{}\tp={:.3e}", r.result.feature, r.result.p_value);
    }
    Ok(())
}

fn cmd_synth(out: &Output) -> CliResult<()> {
    let s = &out.cfg.synth;
    let series = synth_series(&s.series, s.seed)?;
    let series = inject_anomalies(&series, &s.anomalies)?;
    out.csv("synth.csv", |w| write_intervals(w, &series.to_intervals()))?;
    let labeled = series.labels.iter().filter(|&&l| l).count();
    out.report(
        "synth_report.json",
        json!({"points": series.len(), "anomaly_intervals": s.anomalies.len(), "labeled_points": labeled}),
    )?;
    println!("{} points, {} anomalous", series.len(), labeled);
    Ok(())
}

fn load_series(path: &Path) -> CliResult<LabeledSeries> {
    Ok(LabeledSeries::from_intervals(&read_intervals(path)?))
}

fn threshold_json(t: &[(DetectionMode, Threshold)]) -> serde_json::Value {
    t.iter()
        .map(|(m, t)| (m.name().to_owned(), serde_json::to_value(t).unwrap()))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn cmd_train(out: &Output, input: &Path, baseline: bool) -> CliResult<()> {
    let cfg = out.cfg;
    let series = load_series(input)?;
    let prepared = prepare(&series, cfg.data.split_ratio)?;
    let tc = cfg.train_config();
    let training = |e: qgan_core::Error| CliError::training(format!("training failed: {e}"));

    let (body, losses, history_len, last) = if baseline {
        let st = train_classical(&prepared.train, &tc, &cfg.circuit.classical).map_err(training)?;
        let losses = st.weight_losses(cfg.train.weight_policy);
        (
            ModelBody::Classical(st.gan),
            losses,
            st.step_count,
            (st.last_loss_g, st.last_loss_d),
        )
    } else {
        let (_, st) = train(&prepared.train, &tc).map_err(training)?;
        let losses = st.weight_losses(cfg.train.weight_policy);
        (
            ModelBody::Quantum {
                generator_plan: cfg.circuit.generator.clone(),
                discriminator_plan: cfg.circuit.discriminator.clone(),
                theta_g: st.theta_g,
                theta_d: st.theta_d,
            },
            losses,
            st.step_count,
            (st.last_loss_g, st.last_loss_d),
        )
    };
    let weights = Weights::from_losses(losses.0, losses.1).map_err(training)?;
    let loaded = LoadedModel::from_body(&body)?;
    let model = loaded.bind(tc.backend)?;
    let thresholds = calibrate(&*model, &prepared.train, weights, cfg.detect.percentile).map_err(training)?;
    let train_mse = evaluate_mse(&*model, &prepared.train).map_err(training)?;
    let file = ModelFile {
        body,
        seed: tc.seed,
        learning_rate: tc.learning_rate,
        epochs: tc.epochs,
        optimizer: tc.optimizer,
        backend: tc.backend,
        scaler: prepared.scaler,
        last_loss_g: last.0,
        last_loss_d: last.1,
        step_count: history_len,
        weight_policy: cfg.train.weight_policy,
        weight_losses: losses,
        train_mse,
        thresholds: thresholds.clone(),
        config_echo: cfg.flatten(),
    };
    out.text("model.txt", &file.to_text())?;
    out.report(
        "train_report.json",
        json!({
            "kind": if baseline { "classical" } else { "quantum" },
            "steps": history_len,
            "loss_g": last.0,
            "loss_d": last.1,
            "w_g": weights.w_g,
            "w_d": weights.w_d,
            "train_mse": train_mse,
            "train_windows": prepared.train.len(),
            "test_windows": prepared.test.len(),
            "clamped_test_points": prepared.clamped,
            "thresholds": threshold_json(&thresholds),
        }),
    )?;
    println!(
        "trained {} steps, L_G={:.6} L_D={:.6}, train MSE {:.6}",
        history_len, last.0, last.1, train_mse
    );
    Ok(())
}

/// Model reconstructed from a model file, ready to bind to a backend.
enum LoadedModel {
    Quantum {
        qgan: Qgan,
        theta_g: ParamVector,
        theta_d: ParamVector,
    },
    Classical(ClassicalGan),
}

impl LoadedModel {
    fn from_body(body: &ModelBody) -> CliResult<Self> {
        Ok(match body {
            ModelBody::Quantum {
                generator_plan,
                discriminator_plan,
                theta_g,
                theta_d,
            } => {
                let qgan = Qgan::new(generator_plan, discriminator_plan)
                    .map_err(|e| CliError::detection(format!("model circuit: {e}")))?;
                if theta_g.len() != qgan.generator.circuit.total_params
                    || theta_d.len() != qgan.discriminator.circuit.total_params
                {
                    return Err(CliError::detection("model parameters do not match its circuits"));
                }
                Self::Quantum {
                    qgan,
                    theta_g: theta_g.clone(),
                    theta_d: theta_d.clone(),
                }
            }
            ModelBody::Classical(gan) => Self::Classical(gan.clone()),
        })
    }

    fn bind(&self, backend: Backend) -> CliResult<Box<dyn GanModel + '_>> {
        match self {
            Self::Quantum {
                qgan,
                theta_g,
                theta_d,
            } => Ok(Box::new(TrainedQgan {
                qgan,
                theta_g,
                theta_d,
                backend,
            })),
            Self::Classical(gan) => match backend {
                Backend::Pure => Ok(Box::new(gan.clone())),
                Backend::Noisy(_) => Err(CliError::input("the classical baseline has no noisy backend")),
            },
        }
    }
}

fn load_model(path: &Path) -> CliResult<ModelFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::detection(format!("cannot read model {}: {e}", path.display())))?;
    ModelFile::from_text(&text)
        .map_err(|e| CliError::detection(format!("invalid model {}: {e}", path.display())))
}

/// Windows to score plus benign training windows for recalibration, both scaled
/// with the model's scaler.
fn scoring_windows(cfg: &RunConfig, series: &LabeledSeries, file: &ModelFile) -> CliResult<(Vec<TimeWindow>, Vec<TimeWindow>)> {
    let split = split_benign_train(series, cfg.data.split_ratio)?;
    let (train_scaled, _) = file.scaler.apply_series(&split.train);
    let train = qgan_core::data::benign_windows(&make_windows(&train_scaled, split.train_offset)?);
    let score = match cfg.detect.split {
        ScoreSplit::Test => {
            let (test_scaled, _) = file.scaler.apply_series(&split.test);
            make_windows(&test_scaled, split.test_offset)?
        }
        ScoreSplit::All => make_windows(&file.scaler.apply_series(series).0, 0)?,
    };
    Ok((score, train))
}

/// Thresholds valid for `backend`: stored ones when it matches training, else recalibrated.
fn thresholds_for(
    cfg: &RunConfig,
    file: &ModelFile,
    model: &dyn GanModel,
    backend: Backend,
    train: &[TimeWindow],
    weights: Weights,
) -> CliResult<Vec<(DetectionMode, Threshold)>> {
    if backend == file.backend {
        if file.thresholds.is_empty() {
            return Err(CliError::detection("model file has no thresholds"));
        }
        return Ok(file.thresholds.clone());
    }
    log::info!("scoring backend differs from training; recalibrating thresholds");
    if train.is_empty() {
        return Err(CliError::detection("no benign training windows to recalibrate on"));
    }
    calibrate(model, train, weights, cfg.detect.percentile)
        .map_err(|e| CliError::detection(format!("recalibration failed: {e}")))
}

fn cmd_detect(out: &Output, input: &Path, model_path: &Path, mode: DetectionMode) -> CliResult<()> {
    let cfg = out.cfg;
    let file = load_model(model_path)?;
    let series = load_series(input)?;
    let (windows, train) = scoring_windows(cfg, &series, &file)?;
    let weights = Weights::from_losses(file.weight_losses.0, file.weight_losses.1)
        .map_err(|e| CliError::detection(e.to_string()))?;
    let loaded = LoadedModel::from_body(&file.body)?;
    let backend = cfg.backend(cfg.detect.backend);
    let model = loaded.bind(backend)?;
    let thresholds = thresholds_for(cfg, &file, &*model, backend, &train, weights)?;
    let threshold = thresholds
        .iter()
        .find(|(m, _)| *m == mode)
        .map(|(_, t)| *t)
        .ok_or_else(|| CliError::detection(format!("no threshold for mode {}", mode.name())))?;
    let report = score_series(&*model, &windows, mode, weights, Some(&threshold))?;
    out.csv(&format!("scores_{}.csv", mode.name()), |w| write_scores_csv(w, &report))?;
    out.json(&format!("metrics_{}.json", mode.name()), &report.metrics.summary())?;
    print_metrics(mode, &report.metrics);
    Ok(())
}

fn print_metrics(mode: DetectionMode, m: &MetricsReport) {
    println!(
        "{:<9} accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} mse {:.6}",
        mode.name(),
        m.accuracy,
        m.precision,
        m.recall,
        m.f1,
        m.mse
    );
}

fn cmd_evaluate(out: &Output, input: &Path, model_path: &Path, noisy: bool) -> CliResult<()> {
    let cfg = out.cfg;
    let file = load_model(model_path)?;
    let series = load_series(input)?;
    let (windows, train) = scoring_windows(cfg, &series, &file)?;
    let weights = Weights::from_losses(file.weight_losses.0, file.weight_losses.1)
        .map_err(|e| CliError::detection(e.to_string()))?;
    let loaded = LoadedModel::from_body(&file.body)?;
    let mut backends = vec![(cfg.detect.backend, cfg.backend(cfg.detect.backend))];
    if noisy && cfg.detect.backend != BackendKind::Noisy {
        backends.push((BackendKind::Noisy, cfg.backend(BackendKind::Noisy)));
    }
    let mut results = serde_json::Map::new();
    for (kind, backend) in backends {
        let model = loaded.bind(backend)?;
        let thresholds = thresholds_for(cfg, &file, &*model, backend, &train, weights)?;
        let reports = evaluate_modes(&*model, &windows, weights, &thresholds)?;
        let mut modes = serde_json::Map::new();
        println!("[{}]", if kind == BackendKind::Noisy { "noisy" } else { "pure" });
        for r in &reports {
            print_metrics(r.mode, &r.metrics);
            let m = &r.metrics;
            modes.insert(
                r.mode.name().into(),
                json!({
                    "metrics": m.summary(),
                    "confusion": {"tp": m.tp, "fp": m.fp, "tn": m.tn, "fn": m.fn_},
                    "threshold": r.threshold,
                }),
            );
        }
        let key = if kind == BackendKind::Noisy { "noisy" } else { "pure" };
        results.insert(key.into(), modes.into());
    }
    out.report(
        "evaluation.json",
        json!({"windows": windows.len(), "w_g": weights.w_g, "w_d": weights.w_d, "backends": results}),
    )
}
