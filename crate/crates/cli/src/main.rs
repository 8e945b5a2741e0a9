//! Experiment runner CLI: build, train, evaluate, ablate, slice and report
//! over any (group, base) fusion configuration or the full 16-model sweep.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use creditfuse::data::{Channel, Signal, SyntheticSpec};
use creditfuse::experiment::{
    gradcheck_suite, load_spec, render_report, run_ablation, run_experiment, run_sweep,
    write_synthetic_files, DataSource, ExperimentSpec, SplitMode,
};
use creditfuse::layers::CrossAttentionForm;
use creditfuse::model::{BaseModel, FusionConfig, FusionGroup};
use creditfuse::train::SelectionMetric;

#[derive(Parser)]
#[command(name = "creditfuse", version, about = "Multimodal credit-rating fusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one fusion configuration.
    Run(SpecArgs),
    /// Train and evaluate all 16 (group, base) configurations.
    Sweep(SpecArgs),
    /// Retrain the configured architecture on channel subsets.
    Ablate(AblateArgs),
    /// Render a human-readable summary of an experiment directory.
    Report {
        /// Experiment output directory.
        dir: PathBuf,
    },
    /// Generate synthetic channel files in the ingestion format.
    Synth(SynthArgs),
    /// Run the gradient verification suite.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// TOML experiment spec; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fusion group 1-4.
    #[arg(long)]
    group: Option<u8>,
    /// Base model: cnn, lstm, gru or att.
    #[arg(long)]
    base: Option<BaseModel>,
    /// Split mode: random, oot or oou.
    #[arg(long)]
    split: Option<SplitMode>,
    /// Holdout fraction for oot/oou splits.
    #[arg(long)]
    split_fraction: Option<f64>,
    /// Bootstrap resample count.
    #[arg(long)]
    resamples: Option<usize>,

    // TrainConfig overrides.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    /// Selection metric: val_auc or val_loss.
    #[arg(long)]
    selection: Option<String>,
    #[arg(long)]
    grad_clip_norm: Option<f64>,

    // FusionConfig overrides.
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    kernel: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    pool: Option<usize>,
    #[arg(long)]
    stack_dropout: Option<f64>,
    #[arg(long)]
    head_hidden: Option<usize>,
    #[arg(long)]
    head_dropout: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    attn_dim: Option<usize>,
    #[arg(long)]
    encoder_heads: Option<usize>,
    #[arg(long)]
    encoder_blocks: Option<usize>,
    #[arg(long)]
    encoder_ff: Option<usize>,
    /// Cross-attention form: standard or paper_literal.
    #[arg(long)]
    cross_attention_form: Option<String>,
    #[arg(long)]
    max_vocab: Option<usize>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Comma-separated channels forming one subset (e.g. "bond,text");
    /// defaults to the five single-channel runs.
    #[arg(long)]
    channels: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "synthetic-data")]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    /// Signal placement: text_only, numeric_only or joint.
    #[arg(long, default_value = "joint")]
    signal: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random instances per layer kind.
    #[arg(long, default_value_t = 12)]
    instances: usize,
    /// Sampled parameter coordinates per full model.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Desk-scale demo spec used when no config file is given.
fn default_spec() -> ExperimentSpec {
    let mut fusion = FusionConfig::new(FusionGroup::G3, BaseModel::Cnn);
    fusion.filters = 32;
    fusion.units = 32;
    fusion.attn_dim = 32;
    fusion.embed_dim = 16;
    fusion.max_len = 64;
    let mut spec = ExperimentSpec {
        data: DataSource::Synthetic(SyntheticSpec {
            n: 600,
            classes: 8,
            signal: Signal::Joint,
            seed: 0,
        }),
        fusion,
        train: Default::default(),
        split: Default::default(),
        eval: Default::default(),
        max_vocab: 5000,
        out_dir: PathBuf::from("out"),
        seed: 0,
    };
    spec.train.epochs = 10;
    spec.train.batch_size = 50;
    spec.train.learning_rate = 1e-3;
    spec.eval.resamples = 1000;
    spec
}

fn parse_signal(s: &str) -> Result<Signal> {
    match s {
        "text_only" => Ok(Signal::TextOnly),
        "numeric_only" => Ok(Signal::NumericOnly),
        "joint" => Ok(Signal::Joint),
        other => bail!("unknown signal {other:?} (text_only, numeric_only, joint)"),
    }
}

fn build_spec(args: &SpecArgs) -> Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => load_spec(path).with_context(|| format!("reading {}", path.display()))?,
        None => default_spec(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.out_dir = out.clone();
    }
    if let Some(group) = args.group {
        spec.fusion.group = FusionGroup::try_from(group).map_err(|e| anyhow::anyhow!(e))?;
    }
    if let Some(base) = args.base {
        spec.fusion.base = base;
    }
    if let Some(split) = args.split {
        spec.split.mode = split;
    }
    if let Some(fraction) = args.split_fraction {
        spec.split.fraction = fraction;
    }
    if let Some(resamples) = args.resamples {
        spec.eval.resamples = resamples;
    }

    macro_rules! set {
        ($($target:expr => $flag:expr),* $(,)?) => {
            $(if let Some(v) = $flag { $target = v; })*
        };
    }
    set! {
        spec.train.epochs => args.epochs,
        spec.train.batch_size => args.batch_size,
        spec.train.learning_rate => args.learning_rate,
        spec.train.beta1 => args.beta1,
        spec.train.beta2 => args.beta2,
        spec.train.adam_eps => args.adam_eps,
        spec.fusion.num_classes => args.num_classes,
        spec.fusion.filters => args.filters,
        spec.fusion.kernel => args.kernel,
        spec.fusion.stride => args.stride,
        spec.fusion.units => args.units,
        spec.fusion.pool => args.pool,
        spec.fusion.stack_dropout => args.stack_dropout,
        spec.fusion.head_hidden => args.head_hidden,
        spec.fusion.head_dropout => args.head_dropout,
        spec.fusion.embed_dim => args.embed_dim,
        spec.fusion.max_len => args.max_len,
        spec.fusion.attn_dim => args.attn_dim,
        spec.fusion.encoder_heads => args.encoder_heads,
        spec.fusion.encoder_blocks => args.encoder_blocks,
        spec.fusion.encoder_ff => args.encoder_ff,
        spec.max_vocab => args.max_vocab,
    }
    if let Some(clip) = args.grad_clip_norm {
        spec.train.grad_clip_norm = Some(clip);
    }
    if let Some(selection) = &args.selection {
        spec.train.selection = match selection.as_str() {
            "val_auc" => SelectionMetric::ValAuc,
            "val_loss" => SelectionMetric::ValLoss,
            other => bail!("unknown selection metric {other:?} (val_auc, val_loss)"),
        };
    }
    if let Some(form) = &args.cross_attention_form {
        spec.fusion.cross_attention_form = match form.as_str() {
            "standard" => CrossAttentionForm::Standard,
            "paper_literal" => CrossAttentionForm::PaperLiteral,
            other => bail!("unknown cross-attention form {other:?}"),
        };
    }
    Ok(spec)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undef".to_string())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let spec = build_spec(&args)?;
            let artifacts = run_experiment(&spec)?;
            println!(
                "group {} / {}: weighted AUC {}, F1 {} (test n={})",
                spec.fusion.group.number(),
                spec.fusion.base.as_str(),
                fmt_metric(artifacts.report.weighted_auc),
                fmt_metric(artifacts.report.f1),
                artifacts.report.support,
            );
            println!("artifacts in {}", artifacts.out_dir.display());
        }
        Command::Sweep(args) => {
            let spec = build_spec(&args)?;
            let rows = run_sweep(&spec)?;
            println!("group base     auc      f1       status");
            for r in &rows {
                println!(
                    "{:>5} {:<8} {:<8} {:<8} {}",
                    r.group,
                    r.base,
                    fmt_metric(r.auc),
                    fmt_metric(r.f1),
                    r.status
                );
            }
            println!(
                "leaderboard written to {}",
                spec.out_dir.join("leaderboard.csv").display()
            );
        }
        Command::Ablate(args) => {
            let spec = build_spec(&args.spec)?;
            let subsets: Vec<Vec<Channel>> = match &args.channels {
                Some(list) => {
                    let subset = list
                        .split(',')
                        .map(|c| c.trim().parse::<Channel>().map_err(|e| anyhow::anyhow!(e)))
                        .collect::<Result<Vec<Channel>>>()?;
                    vec![subset]
                }
                None => Channel::ALL.iter().map(|&c| vec![c]).collect(),
            };
            let reports = run_ablation(&spec, &subsets)?;
            println!("subset            auc      f1");
            for (name, report) in &reports {
                println!(
                    "{:<17} {:<8} {}",
                    name,
                    fmt_metric(report.weighted_auc),
                    fmt_metric(report.f1)
                );
            }
            println!(
                "table written to {}",
                spec.out_dir.join("ablation.csv").display()
            );
        }
        Command::Report { dir } => {
            print!("{}", render_report(&dir)?);
        }
        Command::Synth(args) => {
            let spec = SyntheticSpec {
                n: args.n,
                classes: args.classes,
                signal: parse_signal(&args.signal)?,
                seed: args.seed,
            };
            let paths = write_synthetic_files(&spec, &args.out)?;
            println!("wrote {} records to:", args.n);
            for p in paths.all() {
                println!("  {}", p.display());
            }
        }
        Command::Gradcheck(args) => {
            let rows = gradcheck_suite(args.instances, args.samples, args.seed)?;
            let mut failed = 0;
            for r in &rows {
                let ok = r.max_relative_error < 1e-4;
                if !ok {
                    failed += 1;
                }
                println!(
                    "{} {:<22} instances {:>3}  max rel err {:.3e}",
                    if ok { "PASS" } else { "FAIL" },
                    r.name,
                    r.instances,
                    r.max_relative_error
                );
            }
            if failed > 0 {
                bail!("{failed} gradient checks failed");
            }
        }
    }
    Ok(())
}
