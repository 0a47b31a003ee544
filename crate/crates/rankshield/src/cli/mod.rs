//! Command-line harness: deterministic experiment runs with self-contained
//! records.
//!
//! Each command reads JSON configs, derives a content-addressed run id from
//! the resolved configuration, and writes its outputs under `<out>/<run id>/`
//! next to a record that embeds everything needed to replay the run. Exit
//! codes: 0 success, 2 usage or config error, 3 runtime divergence, 4 I/O
//! failure.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Parser, Subcommand};
use log::warn;
use ndarray::s;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::attacks::{first_flip_scan, AttackConfig, AttackMethod};
use crate::data::{
    load_csv, normalize, synth_gaussians, Dataset, LabelColumn, NormalizationKind, SynthSpec,
};
use crate::error::{Error, Result};
use crate::explain::{simple_gradient, RankOrder};
use crate::metrics::{
    auc, comp, correlation, dffot, suff, CorrelationKind, MetricReport, RemovalBaseline,
    RemovalSet, ReportMeta,
};
use crate::model::io::{load_model, save_model};
use crate::model::second_order::hessian_spectral_norm;
use crate::model::{predict, AnyModel};
use crate::thickness::{pairwise_thickness, topk_thickness, PerturbDistribution, ThicknessVariant};
use crate::training::{train, TrainConfig};
use crate::util::derive_seed;

/// Environment variable that overrides config seeds when `--seed` is absent.
pub const SEED_ENV_VAR: &str = "RANKSHIELD_SEED";

/// Fraction of samples that must be processed for an attack run to succeed.
const ATTACK_SUCCESS_FRACTION: f64 = 0.95;

/// Power-iteration budget for the per-sample Hessian norm column.
const HESSIAN_ITERS: usize = 30;
const HESSIAN_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(
    name = "rankshield",
    version,
    about = "Train, attack, and evaluate top-k ranking explanations of dense classifiers"
)]
pub struct Cli {
    /// Directory that receives one `<run id>/` folder per command invocation.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,

    /// Overrides every config seed; beats the RANKSHIELD_SEED variable.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for per-sample attack and thickness work.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Train a classifier from a JSON job ({"train": ..., "data": ...}).
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Attack every sample's explanation and record flips.
    Attack {
        #[arg(long)]
        model: PathBuf,
        /// CSV file or JSON data-source spec.
        #[arg(long)]
        data: PathBuf,
        /// Attack configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Attack only the first N samples.
        #[arg(long)]
        limit: Option<usize>,
        /// Row name in report tables; defaults to the model file stem.
        #[arg(long)]
        label: Option<String>,
    },
    /// Compute explanation and classification metrics.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated list: auc, p_at_k, dffot, comp, suff.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        /// Attack configuration JSON; required by the p_at_k metric.
        #[arg(long)]
        attack_config: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Estimate per-sample and model-level ranking thickness.
    Thickness {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Thickness job JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Join run records into comparison tables and scatter data.
    Report {
        /// Paths to record.json files from earlier runs.
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
}

/// Where a command's dataset comes from. CSV paths inside a JSON spec are
/// resolved relative to the spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synth(SynthSpec),
    Csv {
        path: PathBuf,
        label: LabelSpec,
        #[serde(default = "default_true")]
        has_header: bool,
        #[serde(default)]
        normalize: Option<NormalizationKind>,
    },
    Inline {
        features: Vec<Vec<f64>>,
        #[serde(default)]
        labels: Option<Vec<usize>>,
    },
}

fn default_true() -> bool {
    true
}

/// Label column as either a header name or a zero-based index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelSpec {
    Index(usize),
    Name(String),
}

impl From<&LabelSpec> for LabelColumn {
    fn from(spec: &LabelSpec) -> Self {
        match spec {
            LabelSpec::Index(i) => LabelColumn::Index(*i),
            LabelSpec::Name(s) => LabelColumn::Name(s.clone()),
        }
    }
}

/// Training command config: optimization settings plus the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainJob {
    pub train: TrainConfig,
    pub data: DataSource,
}

/// Thickness command config. `pair` switches from top-k thickness to one
/// explicit feature pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThicknessJob {
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub pair: Option<(usize, usize)>,
    #[serde(default = "default_variant")]
    pub variant: ThicknessVariant,
    pub distribution: PerturbDistribution,
    #[serde(default = "default_m1")]
    pub m1: usize,
    #[serde(default = "default_m2")]
    pub m2: usize,
    #[serde(default)]
    pub seed: u64,
    /// Also record each sample's saliency-Hessian spectral norm.
    #[serde(default = "default_true")]
    pub hessian_norm: bool,
}

fn default_variant() -> ThicknessVariant {
    ThicknessVariant::Indicator
}

fn default_m1() -> usize {
    200
}

fn default_m2() -> usize {
    64
}

/// Self-contained result of one command invocation. Replaying the embedded
/// config with the same binary reproduces the aggregates bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: String,
    pub timestamp: String,
    pub command: String,
    /// Row name used by `report` tables.
    pub label: String,
    /// Training method or attack method behind this run.
    pub algorithm: String,
    pub seed: u64,
    /// Resolved configuration after seed overrides.
    pub config: Value,
    pub model_path: Option<String>,
    pub report: MetricReport,
    pub version: String,
}

/// Executes one parsed command; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let ctx = Ctx {
        out: cli.out,
        seed: cli.seed,
        jobs: cli.jobs.max(1),
    };
    match cli.command {
        Cmd::Train { config } => cmd_train(&ctx, &config),
        Cmd::Attack {
            model,
            data,
            config,
            limit,
            label,
        } => cmd_attack(&ctx, &model, &data, &config, limit, label),
        Cmd::Evaluate {
            model,
            data,
            metrics,
            attack_config,
            limit,
            label,
        } => cmd_evaluate(&ctx, &model, &data, &metrics, attack_config.as_deref(), limit, label),
        Cmd::Thickness {
            model,
            data,
            config,
            limit,
            label,
        } => cmd_thickness(&ctx, &model, &data, &config, limit, label),
        Cmd::Report { records } => cmd_report(&ctx, &records),
    }?;
    Ok(0)
}

struct Ctx {
    out: PathBuf,
    seed: Option<u64>,
    jobs: usize,
}

impl Ctx {
    /// Seed precedence: --seed, then RANKSHIELD_SEED, then the config value.
    fn effective_seed(&self, config_seed: u64) -> Result<u64> {
        resolve_seed(self.seed, std::env::var(SEED_ENV_VAR).ok().as_deref(), config_seed)
    }

    /// Creates `<out>/<run_id>/` and returns it.
    fn run_dir(&self, run_id: &str) -> Result<PathBuf> {
        let dir = self.out.join(run_id);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn resolve_seed(cli: Option<u64>, env: Option<&str>, config: u64) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    if let Some(raw) = env {
        return raw.trim().parse::<u64>().map_err(|_| {
            Error::Usage(format!("{SEED_ENV_VAR} must be an unsigned integer, got {raw:?}"))
        });
    }
    Ok(config)
}

/// First 12 hex digits of a digest over the command name and its resolved
/// configuration; identical configs land in identical run directories.
fn run_id(command: &str, payload: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update(b"\n");
    hasher.update(payload.to_string().as_bytes());
    let digest = hasher.finalize();
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_model_file(path: &Path) -> Result<AnyModel> {
    load_model(path).map_err(|e| Error::Config(format!("model {}: {e}", path.display())))
}

/// Loads `--data`: a bare CSV (header row, last column is the label) or a
/// JSON `DataSource` spec. Returns the dataset with a snapshot of the source.
fn load_data_file(path: &Path) -> Result<(Dataset, Value)> {
    let source = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let probe = fs::File::open(path)
                .map_err(|e| Error::Config(format!("data {}: {e}", path.display())))?;
            drop(probe);
            let cols = count_csv_columns(path)?;
            DataSource::Csv {
                path: path.to_path_buf(),
                label: LabelSpec::Index(cols.saturating_sub(1)),
                has_header: true,
                normalize: None,
            }
        }
        _ => read_config::<DataSource>(path)?,
    };
    let dataset = realize_data(&source, path.parent())?;
    let snapshot = serde_json::to_value(&source)?;
    Ok((dataset, snapshot))
}

fn count_csv_columns(path: &Path) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Config(format!("data {}: {e}", path.display())))?;
    let mut first = csv::StringRecord::new();
    let got = reader
        .read_record(&mut first)
        .map_err(|e| Error::Config(format!("data {}: {e}", path.display())))?;
    if !got {
        return Err(Error::Config(format!("data {}: empty file", path.display())));
    }
    Ok(first.len())
}

/// Materializes a data source. Relative CSV paths resolve against `base`,
/// the directory of the spec file that named them.
fn realize_data(source: &DataSource, base: Option<&Path>) -> Result<Dataset> {
    match source {
        DataSource::Synth(spec) => synth_gaussians(spec),
        DataSource::Csv {
            path,
            label,
            has_header,
            normalize: norm,
        } => {
            let resolved = if path.is_relative() {
                base.map(|b| b.join(path)).unwrap_or_else(|| path.clone())
            } else {
                path.clone()
            };
            let dataset = load_csv(&resolved, &label.into(), *has_header)
                .map_err(|e| Error::Config(format!("data {}: {e}", resolved.display())))?;
            match norm {
                Some(kind) => normalize(&dataset, *kind),
                None => Ok(dataset),
            }
        }
        DataSource::Inline { features, labels } => {
            let rows = features.len();
            let cols = features.first().map_or(0, |r| r.len());
            let flat: Vec<f64> = features.iter().flatten().copied().collect();
            if flat.len() != rows * cols {
                return Err(Error::Config("inline feature rows have unequal lengths".into()));
            }
            let features = ndarray::Array2::from_shape_vec((rows, cols), flat)
                .map_err(|e| Error::Config(format!("inline features: {e}")))?;
            let labels = labels.clone().unwrap_or_else(|| vec![0; rows]);
            Dataset::new(features, labels)
        }
    }
}

/// Keeps the first `limit` samples; `None` keeps everything.
fn truncate(dataset: Dataset, limit: Option<usize>) -> Dataset {
    match limit {
        Some(m) if m < dataset.len() => Dataset {
            features: dataset.features.slice(s![..m, ..]).to_owned(),
            labels: dataset.labels[..m].to_vec(),
            feature_names: dataset.feature_names,
            label_names: dataset.label_names,
            normalization: dataset.normalization,
        },
        _ => dataset,
    }
}

fn default_label(explicit: Option<String>, model_path: &Path) -> String {
    explicit.unwrap_or_else(|| {
        model_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into())
    })
}

fn attack_method_name(method: &AttackMethod) -> &'static str {
    match method {
        AttackMethod::ErAttack => "er_attack",
        AttackMethod::MseAttack => "mse_attack",
        AttackMethod::MooTr(_) => "moo_tr",
    }
}

fn write_record(dir: &Path, record: &ExperimentRecord) -> Result<()> {
    let mut text = serde_json::to_string_pretty(record)?;
    text.push('\n');
    fs::write(dir.join("record.json"), text)?;
    Ok(())
}

fn record_skeleton(
    command: &str,
    label: String,
    algorithm: String,
    seed: u64,
    config: Value,
    model_path: Option<&Path>,
    report: MetricReport,
) -> ExperimentRecord {
    ExperimentRecord {
        run_id: run_id(command, &config),
        timestamp: Utc::now().to_rfc3339(),
        command: command.to_string(),
        label,
        algorithm,
        seed,
        config,
        model_path: model_path.map(|p| p.display().to_string()),
        report,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn cmd_train(ctx: &Ctx, config_path: &Path) -> Result<()> {
    let mut job: TrainJob = read_config(config_path)?;
    job.train.seed = ctx.effective_seed(job.train.seed)?;
    let dataset = realize_data(&job.data, config_path.parent())?;
    let (net, history) = train(&job.train, &dataset)?;

    let snapshot = serde_json::to_value(&job)?;
    let id = run_id("train", &snapshot);
    let dir = ctx.run_dir(&id)?;

    let model_path = dir.join("model.json");
    save_model(&AnyModel::Dense(net), &model_path)?;

    let mut hist = BufWriter::new(fs::File::create(dir.join("history.jsonl"))?);
    for stats in &history.epochs {
        serde_json::to_writer(&mut hist, stats)?;
        hist.write_all(b"\n")?;
    }
    hist.flush()?;

    let last = history
        .last()
        .ok_or_else(|| Error::Internal("training produced no epochs".into()))?;
    let mut aggregates = BTreeMap::new();
    aggregates.insert("loss".to_string(), last.loss);
    aggregates.insert("regularizer".to_string(), last.regularizer);
    aggregates.insert("accuracy".to_string(), last.accuracy);
    aggregates.insert("mean_gap".to_string(), last.mean_gap);
    if let Some(a) = last.auc {
        aggregates.insert("auc".to_string(), a);
    }
    let report = MetricReport {
        metrics: aggregates.keys().cloned().collect(),
        per_sample: Vec::new(),
        aggregates,
        metadata: ReportMeta {
            k: job.train.method.probe_k(),
            ..ReportMeta::default()
        },
    };

    let method = job.train.method.name().to_string();
    let record = record_skeleton(
        "train",
        method.clone(),
        method.clone(),
        job.train.seed,
        snapshot,
        Some(&model_path),
        report,
    );
    write_record(&dir, &record)?;

    println!(
        "train {method}: {} epochs on {} samples",
        history.epochs.len(),
        dataset.len()
    );
    match last.auc {
        Some(a) => println!(
            "final loss {:.4}, accuracy {:.4}, auc {:.4}",
            last.loss, last.accuracy, a
        ),
        None => println!("final loss {:.4}, accuracy {:.4}", last.loss, last.accuracy),
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_attack(
    ctx: &Ctx,
    model_path: &Path,
    data_path: &Path,
    config_path: &Path,
    limit: Option<usize>,
    label: Option<String>,
) -> Result<()> {
    let model = load_model_file(model_path)?;
    let (dataset, data_snapshot) = load_data_file(data_path)?;
    let dataset = truncate(dataset, limit);
    let mut config: AttackConfig = read_config(config_path)?;
    config.seed = ctx.effective_seed(config.seed)?;

    let snapshot = json!({
        "attack": serde_json::to_value(&config)?,
        "data": data_snapshot,
        "model": model_path.display().to_string(),
        "limit": limit,
    });
    let id = run_id("attack", &snapshot);
    let dir = ctx.run_dir(&id)?;

    let outcome = first_flip_scan(&model, &dataset, &config, ctx.jobs)?;
    for (i, msg) in &outcome.failures {
        warn!("sample {i}: {msg}");
    }

    let mut lines = BufWriter::new(fs::File::create(dir.join("results.jsonl"))?);
    let mut rows: Vec<BTreeMap<String, f64>> = Vec::with_capacity(outcome.results.len());
    for (i, result) in outcome.results.iter().enumerate() {
        let mut row = BTreeMap::new();
        let line = match result {
            Some(res) => {
                row.insert("p_at_k".to_string(), res.final_p_at_k());
                row.insert("first_flip".to_string(), outcome.first_flips[i] as f64);
                row.insert("flipped".to_string(), f64::from(res.first_flip_iter.is_some()));
                row.insert("iters_run".to_string(), res.iters_run as f64);
                let mut value = serde_json::to_value(res)?;
                value
                    .as_object_mut()
                    .expect("attack result serializes to an object")
                    .insert("sample_id".to_string(), json!(i));
                value
            }
            None => {
                let msg = outcome
                    .failures
                    .iter()
                    .find(|(j, _)| *j == i)
                    .map(|(_, m)| m.clone())
                    .unwrap_or_default();
                json!({ "sample_id": i, "error": msg })
            }
        };
        serde_json::to_writer(&mut lines, &line)?;
        lines.write_all(b"\n")?;
        rows.push(row);
    }
    lines.flush()?;

    let metrics = ["p_at_k", "first_flip", "flipped", "iters_run"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let report = MetricReport::from_rows(
        metrics,
        rows,
        ReportMeta {
            k: Some(config.k),
            removal_counts: None,
            attack_config_hash: Some(run_id("attack-config", &serde_json::to_value(&config)?)),
        },
    );

    let processed = dataset.len() - outcome.failures.len();
    let mean_p = report.aggregates.get("p_at_k").copied().unwrap_or(f64::NAN);
    let mean_flip = report.aggregates.get("first_flip").copied().unwrap_or(f64::NAN);
    println!(
        "attack {}: processed {processed}/{} samples, {} failures",
        attack_method_name(&config.method),
        dataset.len(),
        outcome.failures.len()
    );
    println!(
        "mean P@{} = {:.4}, mean first flip = {:.1} (never flipped = {})",
        config.k,
        mean_p,
        mean_flip,
        config.max_iters + 1
    );

    let record = record_skeleton(
        "attack",
        default_label(label, model_path),
        attack_method_name(&config.method).to_string(),
        config.seed,
        snapshot,
        Some(model_path),
        report,
    );
    write_record(&dir, &record)?;
    println!("wrote {}", dir.display());

    if (processed as f64) < ATTACK_SUCCESS_FRACTION * dataset.len() as f64 {
        return Err(Error::Attack(format!(
            "only {processed}/{} samples processed",
            dataset.len()
        )));
    }
    Ok(())
}

/// Metrics the evaluate command understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MetricName {
    Auc,
    PAtK,
    Dffot,
    Comp,
    Suff,
}

impl MetricName {
    fn parse(raw: &str) -> Result<Self> {
        match raw.trim() {
            "auc" => Ok(MetricName::Auc),
            "p_at_k" => Ok(MetricName::PAtK),
            "dffot" => Ok(MetricName::Dffot),
            "comp" => Ok(MetricName::Comp),
            "suff" => Ok(MetricName::Suff),
            other => Err(Error::Usage(format!(
                "unknown metric {other:?}; expected auc, p_at_k, dffot, comp, suff"
            ))),
        }
    }

    fn key(self) -> &'static str {
        match self {
            MetricName::Auc => "auc",
            MetricName::PAtK => "p_at_k",
            MetricName::Dffot => "dffot",
            MetricName::Comp => "comp",
            MetricName::Suff => "suff",
        }
    }
}

fn cmd_evaluate(
    ctx: &Ctx,
    model_path: &Path,
    data_path: &Path,
    metric_names: &[String],
    attack_config_path: Option<&Path>,
    limit: Option<usize>,
    label: Option<String>,
) -> Result<()> {
    if metric_names.is_empty() {
        return Err(Error::Usage(
            "no metrics requested; pass --metrics with a comma-separated list".into(),
        ));
    }
    let mut wanted = Vec::new();
    for raw in metric_names {
        let m = MetricName::parse(raw)?;
        if !wanted.contains(&m) {
            wanted.push(m);
        }
    }

    let model = load_model_file(model_path)?;
    let (dataset, data_snapshot) = load_data_file(data_path)?;
    let dataset = truncate(dataset, limit);
    if dataset.is_empty() {
        return Err(Error::Usage("dataset is empty".into()));
    }

    let mut attack_config: Option<AttackConfig> = match attack_config_path {
        Some(p) => Some(read_config(p)?),
        None => None,
    };
    if let Some(cfg) = attack_config.as_mut() {
        cfg.seed = ctx.effective_seed(cfg.seed)?;
    }
    if wanted.contains(&MetricName::PAtK) && attack_config.is_none() {
        return Err(Error::Usage(
            "the p_at_k metric measures ranking overlap after an attack; pass --attack-config"
                .into(),
        ));
    }

    let order = RankOrder::default();
    let baseline = RemovalBaseline::Zero;
    let removal = RemovalSet::default_for(dataset.n_features());
    let needs_removal = wanted.contains(&MetricName::Comp) || wanted.contains(&MetricName::Suff);

    let snapshot = json!({
        "metrics": wanted.iter().map(|m| m.key()).collect::<Vec<_>>(),
        "attack": attack_config.as_ref().map(serde_json::to_value).transpose()?,
        "data": data_snapshot,
        "model": model_path.display().to_string(),
        "limit": limit,
    });
    let id = run_id("evaluate", &snapshot);
    let dir = ctx.run_dir(&id)?;

    let mut rows: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); dataset.len()];
    if wanted.iter().any(|m| {
        matches!(m, MetricName::Dffot | MetricName::Comp | MetricName::Suff)
    }) {
        for i in 0..dataset.len() {
            let x = dataset.sample(i);
            let saliency = simple_gradient(&model, &x)?;
            if wanted.contains(&MetricName::Dffot) {
                let d = dffot(&model, &x, &saliency, order, &baseline)?;
                rows[i].insert("dffot".to_string(), d.fraction);
            }
            if wanted.contains(&MetricName::Comp) {
                let c = comp(&model, &x, &saliency, &removal, order, &baseline)?;
                rows[i].insert("comp".to_string(), c);
            }
            if wanted.contains(&MetricName::Suff) {
                let s = suff(&model, &x, &saliency, &removal, order, &baseline)?;
                rows[i].insert("suff".to_string(), s);
            }
        }
    }

    if wanted.contains(&MetricName::PAtK) {
        let cfg = attack_config.as_ref().expect("checked above");
        let outcome = first_flip_scan(&model, &dataset, cfg, ctx.jobs)?;
        for (i, msg) in &outcome.failures {
            warn!("sample {i}: {msg}");
        }
        for (i, result) in outcome.results.iter().enumerate() {
            if let Some(res) = result {
                rows[i].insert("p_at_k".to_string(), res.final_p_at_k());
            }
        }
    }

    let per_sample_keys: Vec<String> = wanted
        .iter()
        .filter(|m| !matches!(m, MetricName::Auc))
        .map(|m| m.key().to_string())
        .collect();
    let mut report = MetricReport::from_rows(
        per_sample_keys.clone(),
        rows,
        ReportMeta {
            k: attack_config.as_ref().map(|c| c.k),
            removal_counts: needs_removal.then(|| removal.0.clone()),
            attack_config_hash: attack_config
                .as_ref()
                .map(|c| Ok::<_, Error>(run_id("attack-config", &serde_json::to_value(c)?)))
                .transpose()?,
        },
    );
    if wanted.contains(&MetricName::Auc) {
        let a = auc(&model, &dataset)?;
        report.metrics.push("auc".to_string());
        report.aggregates.insert("auc".to_string(), a);
    }

    let mut csv = csv::Writer::from_path(dir.join("metrics.csv"))?;
    let mut header = vec!["sample_id".to_string()];
    header.extend(per_sample_keys.iter().cloned());
    csv.write_record(&header)?;
    for (i, row) in report.per_sample.iter().enumerate() {
        let mut cells = vec![i.to_string()];
        for key in &per_sample_keys {
            cells.push(row.get(key).map(|v| v.to_string()).unwrap_or_default());
        }
        csv.write_record(&cells)?;
    }
    csv.flush()?;

    for (name, value) in &report.aggregates {
        println!("{name} = {value:.6}");
    }

    let record = record_skeleton(
        "evaluate",
        default_label(label, model_path),
        "evaluate".to_string(),
        attack_config.as_ref().map_or(0, |c| c.seed),
        snapshot,
        Some(model_path),
        report,
    );
    write_record(&dir, &record)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_thickness(
    ctx: &Ctx,
    model_path: &Path,
    data_path: &Path,
    config_path: &Path,
    limit: Option<usize>,
    label: Option<String>,
) -> Result<()> {
    let mut job: ThicknessJob = read_config(config_path)?;
    job.seed = ctx.effective_seed(job.seed)?;
    if job.pair.is_none() && job.k.is_none() {
        return Err(Error::Usage("thickness needs either \"k\" or \"pair\"".into()));
    }

    let model = load_model_file(model_path)?;
    let (dataset, data_snapshot) = load_data_file(data_path)?;
    let dataset = truncate(dataset, limit);
    if dataset.is_empty() {
        return Err(Error::Usage("dataset is empty".into()));
    }

    let snapshot = json!({
        "thickness": serde_json::to_value(&job)?,
        "data": data_snapshot,
        "model": model_path.display().to_string(),
        "limit": limit,
    });
    let id = run_id("thickness", &snapshot);
    let dir = ctx.run_dir(&id)?;

    // Per-sample seeds match model_thickness_with, so the aggregate below
    // equals the library's model-level estimate for the same seed.
    let one = |i: usize| -> Result<BTreeMap<String, f64>> {
        let x = dataset.sample(i);
        let sample_seed = derive_seed(job.seed, i as u64);
        let estimate = match job.pair {
            Some((a, b)) => pairwise_thickness(
                &model,
                &x,
                &job.distribution,
                a,
                b,
                job.m1,
                job.m2,
                job.variant,
                sample_seed,
            )?,
            None => topk_thickness(
                &model,
                &x,
                &job.distribution,
                job.k.expect("validated above"),
                job.m1,
                job.m2,
                job.variant,
                sample_seed,
            )?,
        };
        let mut row = BTreeMap::new();
        row.insert("thickness".to_string(), estimate.value);
        row.insert("std_error".to_string(), estimate.std_error);
        if job.hessian_norm {
            let class = predict(&model, &x)?;
            let norm = hessian_spectral_norm(
                &model,
                &x,
                class,
                HESSIAN_ITERS,
                HESSIAN_TOL,
                derive_seed(job.seed.wrapping_add(1), i as u64),
            )?;
            row.insert("hessian_norm".to_string(), norm);
        }
        Ok(row)
    };
    let rows: Result<Vec<BTreeMap<String, f64>>> = if ctx.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.jobs)
            .build()
            .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
        pool.install(|| (0..dataset.len()).into_par_iter().map(one).collect())
    } else {
        (0..dataset.len()).map(one).collect()
    };
    let rows = rows?;

    let mut metric_keys = vec!["thickness".to_string(), "std_error".to_string()];
    if job.hessian_norm {
        metric_keys.push("hessian_norm".to_string());
    }
    let report = MetricReport::from_rows(
        metric_keys.clone(),
        rows,
        ReportMeta {
            k: if job.pair.is_none() { job.k } else { None },
            ..ReportMeta::default()
        },
    );
    let model_level = report.aggregates.get("thickness").copied().unwrap_or(f64::NAN);

    let mut csv = csv::Writer::from_path(dir.join("thickness.csv"))?;
    let mut header = vec!["sample_id".to_string()];
    header.extend(metric_keys.iter().cloned());
    csv.write_record(&header)?;
    for (i, row) in report.per_sample.iter().enumerate() {
        let mut cells = vec![i.to_string()];
        for key in &metric_keys {
            cells.push(row.get(key).map(|v| v.to_string()).unwrap_or_default());
        }
        csv.write_record(&cells)?;
    }
    let mut footer = vec!["model".to_string(), model_level.to_string()];
    footer.resize(1 + metric_keys.len(), String::new());
    csv.write_record(&footer)?;
    csv.flush()?;

    println!(
        "thickness ({:?}, {} samples): model level = {:.4}",
        job.variant,
        dataset.len(),
        model_level
    );

    let record = record_skeleton(
        "thickness",
        default_label(label, model_path),
        "thickness".to_string(),
        job.seed,
        snapshot,
        Some(model_path),
        report,
    );
    write_record(&dir, &record)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_report(ctx: &Ctx, record_paths: &[PathBuf]) -> Result<()> {
    let mut records = Vec::new();
    for path in record_paths {
        let record: ExperimentRecord = read_config(path)?;
        records.push(record);
    }

    let mut shared_k: Option<usize> = None;
    for record in &records {
        if let Some(k) = record.report.metadata.k {
            match shared_k {
                Some(existing) if existing != k => {
                    return Err(Error::Usage(format!(
                        "records mix k = {existing} and k = {k}; report needs one k"
                    )));
                }
                _ => shared_k = Some(k),
            }
        }
    }

    let joined = Value::Array(records.iter().map(|r| json!(r.run_id)).collect());
    let id = run_id("report", &joined);
    let dir = ctx.run_dir(&id)?;

    let mut columns: BTreeSet<String> = BTreeSet::new();
    for record in &records {
        columns.extend(record.report.aggregates.keys().cloned());
    }
    let columns: Vec<String> = columns.into_iter().collect();

    let mut csv = csv::Writer::from_path(dir.join("table.csv"))?;
    let mut header = vec![
        "label".to_string(),
        "command".to_string(),
        "algorithm".to_string(),
        "k".to_string(),
    ];
    header.extend(columns.iter().cloned());
    csv.write_record(&header)?;
    let mut stdout_rows = Vec::new();
    for record in &records {
        let mut cells = vec![
            record.label.clone(),
            record.command.clone(),
            record.algorithm.clone(),
            record
                .report
                .metadata
                .k
                .map(|k| k.to_string())
                .unwrap_or_default(),
        ];
        for column in &columns {
            let cell = record
                .report
                .aggregates
                .get(column)
                .map(|v| table_cell(column, *v))
                .unwrap_or_default();
            cells.push(cell);
        }
        csv.write_record(&cells)?;
        stdout_rows.push(cells);
    }
    csv.flush()?;
    print_table(&header, &stdout_rows);

    let thickness = records.iter().find(|r| r.command == "thickness");
    let attack = records.iter().find(|r| r.command == "attack");
    if let (Some(t), Some(a)) = (thickness, attack) {
        if t.report.per_sample.len() != a.report.per_sample.len() {
            return Err(Error::Usage(format!(
                "scatter join needs matching sample counts, got {} and {}",
                t.report.per_sample.len(),
                a.report.per_sample.len()
            )));
        }
        let mut triples = Vec::new();
        for (i, (tr, ar)) in t.report.per_sample.iter().zip(&a.report.per_sample).enumerate() {
            let thick = tr.get("thickness");
            let hess = tr.get("hessian_norm");
            let flip = ar.get("first_flip");
            if let (Some(&th), Some(&he), Some(&fl)) = (thick, hess, flip) {
                triples.push((i, th, he, fl));
            }
        }
        let mut csv = csv::Writer::from_path(dir.join("scatter.csv"))?;
        csv.write_record(["sample_id", "thickness", "hessian_norm", "first_flip"])?;
        for (i, th, he, fl) in &triples {
            csv.write_record([i.to_string(), th.to_string(), he.to_string(), fl.to_string()])?;
        }
        csv.flush()?;

        let thicks: Vec<f64> = triples.iter().map(|t| t.1).collect();
        let hessians: Vec<f64> = triples.iter().map(|t| t.2).collect();
        let flips: Vec<f64> = triples.iter().map(|t| t.3).collect();
        let correlations = json!({
            "n": triples.len(),
            "pearson": {
                "thickness_first_flip": corr_or_null(&thicks, &flips, CorrelationKind::Pearson),
                "hessian_norm_first_flip":
                    corr_or_null(&hessians, &flips, CorrelationKind::Pearson),
            },
            "spearman": {
                "thickness_first_flip": corr_or_null(&thicks, &flips, CorrelationKind::Spearman),
                "hessian_norm_first_flip":
                    corr_or_null(&hessians, &flips, CorrelationKind::Spearman),
            },
        });
        let mut text = serde_json::to_string_pretty(&correlations)?;
        text.push('\n');
        fs::write(dir.join("correlations.json"), text)?;
        println!(
            "scatter: {} samples, spearman(thickness, first flip) = {}",
            triples.len(),
            correlations["spearman"]["thickness_first_flip"]
        );
    }

    println!("wrote {}", dir.display());
    Ok(())
}

/// Ranking-overlap columns are conventionally shown in percent.
fn table_cell(column: &str, value: f64) -> String {
    if column == "p_at_k" {
        (value * 100.0).to_string()
    } else {
        value.to_string()
    }
}

fn corr_or_null(xs: &[f64], ys: &[f64], kind: CorrelationKind) -> Value {
    match correlation(xs, ys, kind) {
        Ok(v) => json!(v),
        Err(e) => {
            warn!("correlation skipped: {e}");
            Value::Null
        }
    }
}

fn print_table(header: &[String], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            let cell = trim_cell(cell);
            if cell.len() > widths[i] {
                widths[i] = cell.len();
            }
        }
    }
    let fmt_row = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:width$}", trim_cell(c), width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", fmt_row(header));
    for row in rows {
        println!("{}", fmt_row(row));
    }
}

/// Shortens long round-trip floats for terminal display only.
fn trim_cell(cell: &str) -> String {
    match cell.parse::<f64>() {
        Ok(v) if cell.len() > 8 => format!("{v:.4}"),
        _ => cell.to_string(),
    }
}
