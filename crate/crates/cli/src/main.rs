//! `fairmap` command-line driver: run, sweep, compare and synth.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fairmap::experiment::{
    emit_comparison, generate_synthetic, run_experiment, run_sweep, ExperimentConfig, Matching,
    Pipeline, RunReport, SweepReport, SyntheticConfig,
};
use fairmap::regularizers::{RegularizerConfig, RegularizerKind};
use fairmap::{FeatureSchema, ModelKind};

#[derive(Parser)]
#[command(name = "fairmap", version, about = "Fair score pre-processing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one pipeline and write its report.
    Run(RunArgs),
    /// Fine-tune over the config's λ grid for every trial.
    Sweep(SweepArgs),
    /// Match regularizer sweeps to a preprocess run and tabulate curves.
    Compare(CompareArgs),
    /// Write a synthetic two-group dataset as CSV plus its schema.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Overrides {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Training epochs for the baseline model.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long, value_enum)]
    pipeline: Option<PipelineArg>,
    /// k for the per-group nearest-neighbour interpolation.
    #[arg(long)]
    neighbors: Option<usize>,
    /// Bins used by histogram specification.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_enum)]
    regularizer: Option<RegularizerArg>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// Configs to compare: exactly one preprocess config and at least one
    /// regularized config with a sweep section.
    #[arg(long = "config", required = true, num_args = 1..)]
    configs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "match-wgf")]
    matching: MatchingArg,
    /// Master seed applied to every config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// CSV file to write.
    #[arg(long)]
    out: PathBuf,
    /// Schema file to write (TOML); defaults to `<out>.schema.toml`.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    per_group: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    label_noise: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Baseline,
    Preprocess,
    Regularized,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Lr,
    Mlp,
    Margin,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegularizerArg {
    Emd,
    Kl,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchingArg {
    MatchWgf,
    MatchTidp,
}

fn load_config(o: &Overrides) -> anyhow::Result<ExperimentConfig> {
    let mut c = ExperimentConfig::load(&o.config)?;
    if let Some(s) = o.seed {
        c.seed = s;
    }
    if let Some(dir) = &o.output {
        c.output_dir = Some(dir.clone());
    }
    if let Some(m) = o.model {
        c.model.kind = match m {
            ModelArg::Lr => ModelKind::LogisticRegression,
            ModelArg::Mlp => ModelKind::Mlp3Layer,
            ModelArg::Margin => ModelKind::Margin,
        };
        c.model.loss = None;
    }
    if let Some(e) = o.epochs {
        c.model.train.epochs = e;
    }
    if let Some(lr) = o.learning_rate {
        c.model.train.learning_rate = lr;
    }
    Ok(c)
}

fn cmd_run(a: &RunArgs) -> anyhow::Result<()> {
    let mut c = load_config(&a.common)?;
    if let Some(p) = a.pipeline {
        c.pipeline = match p {
            PipelineArg::Baseline => Pipeline::Baseline,
            PipelineArg::Preprocess => Pipeline::Preprocess,
            PipelineArg::Regularized => Pipeline::Regularized,
        };
    }
    if let Some(k) = a.neighbors {
        c.preprocess.neighbor_count = k;
    }
    if let Some(b) = a.bins {
        c.preprocess.histogram_bins = b;
    }
    if a.regularizer.is_some() || a.lambda.is_some() {
        let mut r = c
            .regularizer
            .unwrap_or_else(|| RegularizerConfig::new(RegularizerKind::Emd, 0.0));
        if let Some(k) = a.regularizer {
            r.kind = match k {
                RegularizerArg::Emd => RegularizerKind::Emd,
                RegularizerArg::Kl => RegularizerKind::KlGaussian,
            };
        }
        if let Some(l) = a.lambda {
            r.lambda = l;
        }
        c.regularizer = Some(r);
    }
    c.validate()?;
    let report = run_experiment(&c)?;
    print_run(&report);
    Ok(())
}

fn print_run(r: &RunReport) {
    if r.unseen_group_rows > 0 {
        log::warn!("{} test rows rejected: group unseen in training", r.unseen_group_rows);
    }
    if r.dropped_rows > 0 {
        log::warn!("{} rows dropped at ingest", r.dropped_rows);
    }
    println!("{:<12} {:>9} {:>9} {:>11} {:>11} {:>9}", "pipeline", "accuracy", "auc", "delta_tidp", "delta_wgf", "min_tau");
    for p in &r.pipelines {
        let f = &p.fairness;
        println!(
            "{:<12} {:>9.4} {:>9} {:>11.4} {:>11.4} {:>9.4}",
            p.label(),
            f.accuracy_at_half,
            f.auc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
            f.delta_tidp,
            f.delta_wgf_avg,
            p.min_kendall_tau()
        );
    }
    if let Some(dir) = &r.config.output_dir {
        println!("wrote {}", dir.display());
    }
}

fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let mut c = load_config(&a.common)?;
    if let Some(t) = a.trials {
        match c.sweep.as_mut() {
            Some(s) => s.trials = t,
            None => bail!("config has no [sweep] section"),
        }
    }
    c.validate()?;
    print_sweep(&run_sweep(&c)?);
    Ok(())
}

fn print_sweep(r: &SweepReport) {
    println!(
        "baseline delta_tidp {:.4}, accuracy {:.4}",
        r.baseline.fairness.delta_tidp, r.baseline.fairness.accuracy_at_half
    );
    println!("{:<14} {:>8} {:>17} {:>17} {:>9}", "regularizer", "lambda", "delta_tidp", "delta_wgf", "accuracy");
    for s in &r.summary {
        println!(
            "{:<14} {:>8} {:>8.4} ±{:>7.4} {:>8.4} ±{:>7.4} {:>9.4}",
            s.kind.as_str(),
            s.lambda,
            s.delta_tidp_mean,
            s.delta_tidp_std,
            s.delta_wgf_mean,
            s.delta_wgf_std,
            s.accuracy_mean
        );
    }
    if let Some(dir) = &r.config.output_dir {
        println!("wrote {}", dir.display());
    }
}

fn cmd_compare(a: &CompareArgs) -> anyhow::Result<()> {
    let configs = a
        .configs
        .iter()
        .map(|p| {
            let mut c = ExperimentConfig::load(p)?;
            if let Some(s) = a.seed {
                c.seed = s;
            }
            // only the comparison itself is written
            c.output_dir = None;
            Ok(c)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let matching = match a.matching {
        MatchingArg::MatchWgf => Matching::MatchWgf,
        MatchingArg::MatchTidp => Matching::MatchTidp,
    };
    let cmp = fairmap::compare_pipelines(&configs, matching)?;
    println!("preprocess target {:.4}", cmp.target);
    println!("{:<24} {:>8} {:>11} {:>11} {:>12}", "selection", "lambda", "delta_tidp", "delta_wgf", "pre_no_worse");
    for s in &cmp.selections {
        println!(
            "{:<24} {:>8} {:>11.4} {:>11.4} {:>12.3}",
            s.label, s.lambda, s.delta_tidp, s.delta_wgf_avg, s.preprocess_no_worse
        );
    }
    if let Some(dir) = &a.output {
        emit_comparison(&cmp, dir).map_err(|e| e.in_stage("emit"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let mut cfg = SyntheticConfig::default();
    if let Some(n) = a.per_group {
        cfg.per_group = n;
    }
    if let Some(d) = a.feature_dim {
        cfg.feature_dim = d;
    }
    if let Some(s) = a.shift {
        cfg.score_mean_shift = s;
    }
    if let Some(p) = a.label_noise {
        cfg.label_noise = p;
    }
    let ds = generate_synthetic(&cfg, a.seed)?;
    let names: Vec<String> = (0..ds.feature_dim()).map(|j| format!("x{j}")).collect();
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut header = names.clone();
    header.extend(["group".to_string(), "label".to_string()]);
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.features().row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.group_names()[ds.groups()[i] - 1].clone());
        rec.push(ds.labels()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().with_context(|| format!("writing {}", a.out.display()))?;
    let schema = FeatureSchema::all_numeric(names, "group", "label")?.with_groups(ds.group_names().to_vec());
    let schema_path = a.schema.clone().unwrap_or_else(|| default_schema_path(&a.out));
    std::fs::write(&schema_path, toml::to_string(&schema)?)
        .with_context(|| format!("writing {}", schema_path.display()))?;
    println!("wrote {} rows to {} and schema {}", ds.len(), a.out.display(), schema_path.display());
    Ok(())
}

fn default_schema_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".schema.toml");
    PathBuf::from(s)
}

/// Stage tag for the exit message; errors raised before any pipeline stage
/// are attributed to the CLI's own steps.
fn stage_of(e: &anyhow::Error, fallback: &'static str) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<fairmap::Error>().and_then(|f| f.stage()))
        .unwrap_or(fallback)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (result, fallback) = match &cli.command {
        Command::Run(a) => (cmd_run(a), "config"),
        Command::Sweep(a) => (cmd_sweep(a), "config"),
        Command::Compare(a) => (cmd_compare(a), "config"),
        Command::Synth(a) => (cmd_synth(a), "synth"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = stage_of(&e, fallback);
            let msg = match e.downcast_ref::<fairmap::Error>() {
                Some(fairmap::Error::Stage { source, .. }) => source.to_string(),
                // fairmap errors already spell out their cause
                Some(other) => other.to_string(),
                None => format!("{e:#}"),
            };
            eprintln!("fairmap: error [{stage}]: {msg}");
            ExitCode::FAILURE
        }
    }
}
