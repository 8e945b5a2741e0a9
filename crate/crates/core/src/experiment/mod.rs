//! Declarative experiment runner: data → splits → scaling → training →
//! evaluation → artifacts on disk, plus the 16-model sweep, the channel
//! ablation protocol and report rendering.

mod gradcheck;

pub use gradcheck::{gradcheck_suite, GradCheckRow};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{
    generate_raw_records, load_channels, split_oot, split_oou, split_random, assemble_dataset,
    Channel, DataError, Dataset, MonthIndex, Sample, Scaler, Splits, SyntheticSpec, Vocabulary,
};
use crate::metrics::{
    derive_seed, evaluate, EvalOptions, F1Average, MetricsError, MetricsReport, SampleMeta,
    SliceKey,
};
use crate::model::{
    build_model_subset, BaseModel, FusionConfig, FusionGroup, ModelError, MultimodalModel,
};
use crate::train::{save_model, train, TrainConfig, TrainError, TrainTrace};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config parse error: {0}")]
    Toml(String),
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("artifact {path} failed to parse back: {message}")]
    ArtifactCheck { path: PathBuf, message: String },
}

// ── spec ────────────────────────────────────────────────────────────

/// Exactly one data source per experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files { dir: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    Random,
    Oot,
    Oou,
}

impl std::str::FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<SplitMode, String> {
        match s {
            "random" => Ok(SplitMode::Random),
            "oot" => Ok(SplitMode::Oot),
            "oou" => Ok(SplitMode::Oou),
            other => Err(format!("unknown split mode {other:?}")),
        }
    }
}

fn default_holdout_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(default)]
    pub mode: SplitMode,
    /// Test fraction for the OOT/OOU holdout.
    #[serde(default = "default_holdout_fraction")]
    pub fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> SplitSpec {
        SplitSpec {
            mode: SplitMode::Random,
            fraction: default_holdout_fraction(),
        }
    }
}

fn default_resamples() -> usize {
    10_000
}
fn default_level() -> f64 {
    0.90
}
fn default_slices() -> Vec<SliceKey> {
    vec![SliceKey::Agency, SliceKey::LagBucket]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSpec {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_slices")]
    pub slices: Vec<SliceKey>,
    #[serde(default)]
    pub period_cut: Option<MonthIndex>,
    #[serde(default)]
    pub f1_average: F1Average,
}

impl Default for EvalSpec {
    fn default() -> EvalSpec {
        EvalSpec {
            resamples: default_resamples(),
            level: default_level(),
            slices: default_slices(),
            period_cut: None,
            f1_average: F1Average::Weighted,
        }
    }
}

fn default_max_vocab() -> usize {
    20_000
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything one run needs. The experiment `seed` drives split, model
/// initialization, training and bootstrap seeds through deterministic
/// derivation; the `train.seed` field is folded in rather than used
/// directly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub data: DataSource,
    pub fusion: FusionConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentSpec {
    /// Canonical JSON hash; changes iff any spec field changes.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if let DataSource::Files { dir } = &self.data {
            if !dir.is_dir() {
                return Err(ExperimentError::InvalidSpec(format!(
                    "data directory {} does not exist",
                    dir.display()
                )));
            }
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.classes > self.fusion.num_classes {
                return Err(ExperimentError::InvalidSpec(format!(
                    "synthetic classes {} exceed num_classes {}",
                    s.classes, self.fusion.num_classes
                )));
            }
        }
        self.fusion.validate()?;
        Ok(())
    }
}

/// Parses a TOML spec file.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec, ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| ExperimentError::Toml(e.to_string()))
}

// ── artifacts ───────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub manifest: PathBuf,
    pub params: PathBuf,
    pub trace: PathBuf,
    pub metrics_csv: PathBuf,
    pub metrics_txt: PathBuf,
}

impl ArtifactPaths {
    pub fn in_dir(dir: &Path) -> ArtifactPaths {
        ArtifactPaths {
            manifest: dir.join("manifest.json"),
            params: dir.join("params.json"),
            trace: dir.join("trace.csv"),
            metrics_csv: dir.join("metrics.csv"),
            metrics_txt: dir.join("metrics.txt"),
        }
    }

    pub fn all(&self) -> [&PathBuf; 5] {
        [
            &self.manifest,
            &self.params,
            &self.trace,
            &self.metrics_csv,
            &self.metrics_txt,
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spec_hash: String,
    pub seed: u64,
    pub version: String,
}

pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub report: MetricsReport,
    pub trace: TrainTrace,
}

// ── pipeline pieces ─────────────────────────────────────────────────

// Seed derivation tags.
const TAG_SPLIT: u64 = 1;
const TAG_MODEL: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_EVAL: u64 = 4;
const TAG_VAL_CARVE: u64 = 5;

pub struct PreparedData {
    pub dataset: Dataset,
    pub vocab: Vocabulary,
    pub splits: Splits,
}

/// Loads or generates the dataset, splits it, and fits scaling on the
/// training split only.
pub fn prepare_data(spec: &ExperimentSpec) -> Result<PreparedData, ExperimentError> {
    let (mut dataset, vocab) = match &spec.data {
        DataSource::Synthetic(synth) => {
            crate::data::generate_synthetic(synth, spec.fusion.max_len, spec.max_vocab)?
        }
        DataSource::Files { dir } => {
            let paths = crate::data::ChannelPaths::in_dir(dir);
            let (dataset, vocab, _report) =
                load_channels(&paths, spec.fusion.max_len, spec.max_vocab)?;
            (dataset, vocab)
        }
    };
    for s in &dataset.samples {
        if s.label as usize > spec.fusion.num_classes {
            return Err(ExperimentError::InvalidSpec(format!(
                "label {} exceeds num_classes {}",
                s.label, spec.fusion.num_classes
            )));
        }
    }
    let split_seed = derive_seed(spec.seed, TAG_SPLIT);
    let splits = match spec.split.mode {
        SplitMode::Random => split_random(dataset.len(), split_seed)?,
        SplitMode::Oot => {
            let holdout = split_oot(&dataset, spec.split.fraction)?;
            carve_validation(holdout.train_val, holdout.test, split_seed)
        }
        SplitMode::Oou => {
            let holdout = split_oou(&dataset, spec.split.fraction, split_seed)?;
            carve_validation(holdout.train_val, holdout.test, split_seed)
        }
    };
    let train_samples: Vec<&Sample> = splits.train.iter().map(|&i| &dataset.samples[i]).collect();
    let scaler = Scaler::fit(&train_samples);
    drop(train_samples);
    scaler.apply_dataset(&mut dataset);
    Ok(PreparedData {
        dataset,
        vocab,
        splits,
    })
}

/// Splits a holdout's train side into train/validation (20% validation,
/// floor), seed-deterministically.
fn carve_validation(mut train_val: Vec<usize>, test: Vec<usize>, seed: u64) -> Splits {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_VAL_CARVE));
    train_val.shuffle(&mut rng);
    let val_n = train_val.len() / 5;
    let mut validation: Vec<usize> = train_val[..val_n].to_vec();
    let mut train: Vec<usize> = train_val[val_n..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Splits {
        train,
        validation,
        test,
    }
}

/// Class probabilities over an index set, evaluated in chunks.
pub fn predict_probabilities(
    model: &MultimodalModel,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let mut probs = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(128) {
        let batch: Vec<&Sample> = chunk.iter().map(|&i| &dataset.samples[i]).collect();
        probs.extend(model.predict_proba(&batch)?);
    }
    Ok(probs)
}

fn eval_options(spec: &ExperimentSpec) -> EvalOptions {
    EvalOptions {
        resamples: spec.eval.resamples,
        level: spec.eval.level,
        seed: derive_seed(spec.seed, TAG_EVAL),
        slices: spec.eval.slices.clone(),
        period_cut: spec.eval.period_cut,
        f1_average: spec.eval.f1_average,
    }
}

/// Trains one model on prepared data and evaluates the test split.
pub fn train_and_evaluate(
    spec: &ExperimentSpec,
    prepared: &PreparedData,
    channels: &[Channel],
) -> Result<(MultimodalModel, TrainTrace, MetricsReport), ExperimentError> {
    let model = build_model_subset(
        &spec.fusion,
        prepared.vocab.size(),
        channels,
        derive_seed(spec.seed, TAG_MODEL),
    )?;
    let mut train_cfg = spec.train.clone();
    train_cfg.seed = derive_seed(spec.seed, derive_seed(spec.train.seed, TAG_TRAIN));
    let dataset = &prepared.dataset;
    let train_refs: Vec<&Sample> = prepared.splits.train.iter().map(|&i| &dataset.samples[i]).collect();
    let val_refs: Vec<&Sample> = prepared
        .splits
        .validation
        .iter()
        .map(|&i| &dataset.samples[i])
        .collect();
    let trace = train(&model, &train_refs, &val_refs, &train_cfg)?;

    let probs = predict_probabilities(&model, dataset, &prepared.splits.test)?;
    let labels: Vec<usize> = prepared
        .splits
        .test
        .iter()
        .map(|&i| (dataset.samples[i].label - 1) as usize)
        .collect();
    let meta: Vec<SampleMeta> = prepared
        .splits
        .test
        .iter()
        .map(|&i| {
            let s = &dataset.samples[i];
            SampleMeta {
                agency: s.agency,
                lag_months: s.lag_months,
                time_index: s.time_index,
            }
        })
        .collect();
    let report = evaluate(&probs, &labels, Some(&meta), &eval_options(spec))?;
    Ok((model, trace, report))
}

fn write_artifacts(
    spec: &ExperimentSpec,
    dir: &Path,
    model: &MultimodalModel,
    trace: &TrainTrace,
    report: &MetricsReport,
) -> Result<ArtifactPaths, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let paths = ArtifactPaths::in_dir(dir);
    let manifest = Manifest {
        spec_hash: spec.hash(),
        seed: spec.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    std::fs::write(&paths.manifest, serde_json::to_string_pretty(&manifest)?)?;
    save_model(model, &paths.params)?;
    std::fs::write(&paths.trace, trace.to_csv())?;
    std::fs::write(&paths.metrics_csv, report.to_csv())?;
    std::fs::write(&paths.metrics_txt, report.render_text())?;
    verify_artifacts(&paths)?;
    Ok(paths)
}

/// Re-reads every artifact and checks that it parses.
pub fn verify_artifacts(paths: &ArtifactPaths) -> Result<(), ExperimentError> {
    let check = |path: &PathBuf, ok: bool, message: &str| {
        if ok {
            Ok(())
        } else {
            Err(ExperimentError::ArtifactCheck {
                path: path.clone(),
                message: message.to_string(),
            })
        }
    };
    for path in paths.all() {
        if !path.is_file() {
            return Err(ExperimentError::MissingArtifact(path.clone()));
        }
    }
    let manifest = std::fs::read_to_string(&paths.manifest)?;
    check(
        &paths.manifest,
        serde_json::from_str::<Manifest>(&manifest).is_ok(),
        "invalid manifest JSON",
    )?;
    let params = std::fs::read_to_string(&paths.params)?;
    check(
        &paths.params,
        serde_json::from_str::<serde_json::Value>(&params).is_ok(),
        "invalid params JSON",
    )?;
    for csv_path in [&paths.trace, &paths.metrics_csv] {
        let mut reader = csv::Reader::from_path(csv_path).map_err(|e| {
            ExperimentError::ArtifactCheck {
                path: csv_path.clone(),
                message: e.to_string(),
            }
        })?;
        for record in reader.records() {
            record.map_err(|e| ExperimentError::ArtifactCheck {
                path: csv_path.clone(),
                message: e.to_string(),
            })?;
        }
    }
    Ok(())
}

/// End-to-end single run: prepare, train, evaluate, write and verify
/// artifacts.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunArtifacts, ExperimentError> {
    spec.validate()?;
    let prepared = prepare_data(spec)?;
    let (model, trace, report) = train_and_evaluate(spec, &prepared, &Channel::ALL)?;
    write_artifacts(spec, &spec.out_dir, &model, &trace, &report)?;
    Ok(RunArtifacts {
        out_dir: spec.out_dir.clone(),
        report,
        trace,
    })
}

// ── sweep ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub group: u8,
    pub base: String,
    pub auc: Option<f64>,
    pub auc_ci: Option<(f64, f64)>,
    pub f1: Option<f64>,
    pub f1_ci: Option<(f64, f64)>,
    pub status: String,
}

/// Trains all 16 (group, base) architectures on one shared dataset and
/// split, each with its own derived seed. Failures are recorded per row
/// and the sweep continues. Rows come back ordered by AUC descending.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<LeaderboardRow>, ExperimentError> {
    spec.validate()?;
    let prepared = prepare_data(spec)?;
    let mut rows = Vec::new();
    for group in FusionGroup::ALL {
        for base in BaseModel::ALL {
            let mut row_spec = spec.clone();
            row_spec.fusion.group = group;
            row_spec.fusion.base = base;
            row_spec.seed = derive_seed(
                spec.seed,
                0x100 + group.number() as u64 * 16 + base as u64,
            );
            let out_dir = spec
                .out_dir
                .join(format!("g{}_{}", group.number(), base.as_str()));
            row_spec.out_dir = out_dir.clone();
            let row = match train_and_evaluate(&row_spec, &prepared, &Channel::ALL) {
                Ok((model, trace, report)) => {
                    write_artifacts(&row_spec, &out_dir, &model, &trace, &report)?;
                    LeaderboardRow {
                        group: group.number(),
                        base: base.as_str().to_string(),
                        auc: report.weighted_auc,
                        auc_ci: report.ci.get("weighted_auc").copied(),
                        f1: report.f1,
                        f1_ci: report.ci.get("f1").copied(),
                        status: "ok".to_string(),
                    }
                }
                Err(e) => LeaderboardRow {
                    group: group.number(),
                    base: base.as_str().to_string(),
                    auc: None,
                    auc_ci: None,
                    f1: None,
                    f1_ci: None,
                    status: e.to_string().replace(',', ";"),
                },
            };
            rows.push(row);
        }
    }
    rows.sort_by(|a, b| {
        b.auc
            .unwrap_or(f64::NEG_INFINITY)
            .partial_cmp(&a.auc.unwrap_or(f64::NEG_INFINITY))
            .unwrap()
            .then_with(|| (a.group, a.base.clone()).cmp(&(b.group, b.base.clone())))
    });
    std::fs::create_dir_all(&spec.out_dir)?;
    std::fs::write(spec.out_dir.join("leaderboard.csv"), leaderboard_csv(&rows))?;
    Ok(rows)
}

pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let fmt_ci = |v: Option<(f64, f64)>| match v {
        Some((lo, hi)) => (format!("{lo:.6}"), format!("{hi:.6}")),
        None => (String::new(), String::new()),
    };
    let mut out = String::from("group,base,auc,auc_ci_low,auc_ci_high,f1,f1_ci_low,f1_ci_high,status\n");
    for r in rows {
        let (alo, ahi) = fmt_ci(r.auc_ci);
        let (flo, fhi) = fmt_ci(r.f1_ci);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.group,
            r.base,
            fmt(r.auc),
            alo,
            ahi,
            fmt(r.f1),
            flo,
            fhi,
            r.status
        ));
    }
    out
}

// ── ablation ────────────────────────────────────────────────────────

/// Rebuilds and retrains the configured architecture from scratch on each
/// channel subset, evaluating every run on the same test split.
pub fn run_ablation(
    spec: &ExperimentSpec,
    subsets: &[Vec<Channel>],
) -> Result<BTreeMap<String, MetricsReport>, ExperimentError> {
    spec.validate()?;
    let prepared = prepare_data(spec)?;
    let mut reports = BTreeMap::new();
    for subset in subsets {
        if subset.is_empty() {
            return Err(ExperimentError::InvalidSpec(
                "ablation subset is empty".to_string(),
            ));
        }
        let name = subset
            .iter()
            .map(|c| c.as_str())
            .collect::<Vec<_>>()
            .join("+");
        let (_, _, report) = train_and_evaluate(spec, &prepared, subset)?;
        reports.insert(name, report);
    }
    std::fs::create_dir_all(&spec.out_dir)?;
    let mut csv = String::from("subset,weighted_auc,f1,support\n");
    for (name, report) in &reports {
        csv.push_str(&format!(
            "{name},{},{},{}\n",
            report.weighted_auc.map(|v| format!("{v:.6}")).unwrap_or_default(),
            report.f1.map(|v| format!("{v:.6}")).unwrap_or_default(),
            report.support
        ));
    }
    std::fs::write(spec.out_dir.join("ablation.csv"), csv)?;
    Ok(reports)
}

// ── reporting ───────────────────────────────────────────────────────

/// Renders a human-readable summary of an experiment directory.
pub fn render_report(dir: &Path) -> Result<String, ExperimentError> {
    let paths = ArtifactPaths::in_dir(dir);
    if !paths.manifest.is_file() {
        return Err(ExperimentError::MissingArtifact(paths.manifest));
    }
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&paths.manifest)?)?;
    let mut out = String::new();
    out.push_str(&format!(
        "experiment {} (seed {}, version {})\n\n",
        dir.display(),
        manifest.seed,
        manifest.version
    ));
    if !paths.metrics_txt.is_file() {
        return Err(ExperimentError::MissingArtifact(paths.metrics_txt));
    }
    out.push_str(&std::fs::read_to_string(&paths.metrics_txt)?);
    let leaderboard = dir.join("leaderboard.csv");
    if leaderboard.is_file() {
        out.push_str("\nleaderboard:\n");
        out.push_str(&std::fs::read_to_string(&leaderboard)?);
    }
    let ablation = dir.join("ablation.csv");
    if ablation.is_file() {
        out.push_str("\nablation:\n");
        out.push_str(&std::fs::read_to_string(&ablation)?);
    }
    Ok(out)
}

/// Writes synthetic channel files (the external ingestion format) to a
/// directory.
pub fn write_synthetic_files(
    synth: &SyntheticSpec,
    dir: &Path,
) -> Result<crate::data::ChannelPaths, ExperimentError> {
    let records = generate_raw_records(synth)?;
    Ok(crate::data::write_channel_files(&records, dir)?)
}

/// In-memory synthetic dataset via the shared ingestion path; exposed for
/// tests and probes.
pub fn synthetic_dataset(
    synth: &SyntheticSpec,
    max_len: usize,
    max_vocab: usize,
) -> Result<(Dataset, Vocabulary), ExperimentError> {
    let records = generate_raw_records(synth)?;
    Ok(assemble_dataset(&records, max_len, max_vocab)?)
}

#[cfg(test)]
mod tests;
