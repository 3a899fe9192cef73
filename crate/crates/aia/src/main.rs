use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use aia::eval::{evaluate, write_csv, ParetoRow};
use aia::experiment::{self, HarnessConfig};
use aia::jsonl::{load_jsonl, save_jsonl};
use aia::model::{load_bundle, load_predictor, save_bundle, save_predictor};
use aia::synthetic::{generate_synthetic, Splits, SyntheticConfig};
use aia_core::engine::train;
use aia_core::predictor::{pretrain, DEFAULT_HASH_BITS};
use aia_core::{Dataset, SubsetSampler, TaskLoss};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "aia",
    version,
    about = "Active information acquisition by learning to search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic train/test pair as JSONL.
    Gen(GenArgs),
    /// Pre-train a task predictor on random subsets of parts.
    Pretrain(PretrainArgs),
    /// Jointly train predictor and policy for one λ; writes a bundle.
    Train(TrainArgs),
    /// Evaluate a bundle on a test set.
    Eval(EvalArgs),
    /// Train and evaluate one bundle per λ from a shared pre-trained predictor.
    Sweep(SweepArgs),
    /// First-k static baseline rows.
    Baseline(BaselineArgs),
    /// Measure the regret-bound quantities of a bundle on a sample.
    Audit(AuditArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    ZeroOne,
    LogLoss,
}

impl From<LossArg> for TaskLoss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::ZeroOne => TaskLoss::ZeroOne,
            LossArg::LogLoss => TaskLoss::LogLoss,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Uniform,
    Full,
}

#[derive(Args)]
struct GenArgs {
    /// Training split output.
    #[arg(long)]
    data: PathBuf,
    /// Test split output.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    parts: usize,
    #[arg(long, default_value_t = 4000)]
    train_size: usize,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    #[arg(long, default_value_t = 0.2)]
    hard_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    #[arg(long, default_value_t = DEFAULT_HASH_BITS)]
    hash_bits: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ModelOpts {
    #[arg(long, default_value_t = DEFAULT_HASH_BITS)]
    hash_bits: u32,
    #[arg(long, default_value_t = experiment::HARNESS_PREDICTOR_LEARN_RATE)]
    predictor_lr: f64,
    /// Pre-training passes.
    #[arg(long, default_value_t = 2)]
    pretrain_passes: usize,
    /// Joint training passes.
    #[arg(long, default_value_t = 2)]
    passes: usize,
    #[arg(long, default_value_t = aia_core::selector::DEFAULT_POLICY_LEARN_RATE)]
    policy_lr: f64,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    quadratic: OnOff,
    #[arg(long, value_enum, default_value_t = LossArg::LogLoss)]
    loss: LossArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelOpts {
    fn harness(&self) -> HarnessConfig {
        let mut cfg = HarnessConfig::default();
        cfg.predictor.hash_bits = self.hash_bits;
        cfg.predictor.learn_rate = self.predictor_lr;
        cfg.pretrain_passes = self.pretrain_passes;
        cfg.task_loss = self.loss.into();
        cfg.train.passes = self.passes;
        cfg.train.policy_learn_rate = self.policy_lr;
        cfg.train.quadratic = matches!(self.quadratic, OnOff::On);
        cfg.train.seed = self.seed;
        cfg
    }
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Predictor output.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = SamplerArg::Uniform)]
    sampler: SamplerArg,
    #[command(flatten)]
    opts: ModelOpts,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Bundle output.
    #[arg(long)]
    model: PathBuf,
    /// Pre-trained predictor; pre-trains from `--data` when absent.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[command(flatten)]
    opts: ModelOpts,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long = "lambda", required = true)]
    lambdas: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opts: ModelOpts,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long = "k", required = true)]
    ks: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opts: ModelOpts,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sample to audit.
    #[arg(long)]
    test: PathBuf,
    /// Audit at most this many instances.
    #[arg(long, default_value_t = 100)]
    limit: usize,
    #[arg(long, default_value_t = 0.01)]
    slack: f64,
    /// Audit CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &Path, hash_bits: u32, classes: Option<usize>) -> Result<Dataset> {
    load_jsonl(path, hash_bits, classes).with_context(|| format!("loading {}", path.display()))
}

fn load_splits(data: &Path, test: &Path, hash_bits: u32) -> Result<Splits> {
    let train = load(data, hash_bits, None)?;
    let test = load(test, hash_bits, Some(train.classes()))?;
    if test.parts() != train.parts() {
        bail!(
            "test set has {} parts, training set {}",
            test.parts(),
            train.parts()
        );
    }
    Ok(Splits { train, test })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_rows(rows: &[ParetoRow], out: Option<&Path>) -> Result<()> {
    write_csv(output(out)?, rows)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => {
            let cfg = SyntheticConfig {
                classes: a.classes,
                parts: a.parts,
                train_size: a.train_size,
                test_size: a.test_size,
                hard_fraction: a.hard_fraction,
                noise: a.noise,
                hash_bits: a.hash_bits,
                seed: a.seed,
                ..SyntheticConfig::default()
            };
            let splits = generate_synthetic(&cfg)?;
            save_jsonl(&splits.train, &a.data)?;
            save_jsonl(&splits.test, &a.test)?;
        }
        Command::Pretrain(a) => {
            let cfg = a.opts.harness();
            let data = load(&a.data, cfg.predictor.hash_bits, None)?;
            let sampler = match a.sampler {
                SamplerArg::Uniform => SubsetSampler::Uniform,
                SamplerArg::Full => SubsetSampler::Full,
            };
            let p = pretrain(
                &data,
                cfg.predictor,
                sampler,
                cfg.pretrain_passes,
                cfg.train.seed,
            )?;
            save_predictor(&a.model, &p)?;
        }
        Command::Train(a) => {
            let cfg = a.opts.harness();
            let data = load(&a.data, cfg.predictor.hash_bits, None)?;
            let initial = match &a.init {
                Some(path) => load_predictor(path)?,
                None => pretrain(
                    &data,
                    cfg.predictor,
                    SubsetSampler::Uniform,
                    cfg.pretrain_passes,
                    cfg.train.seed,
                )?,
            };
            let bundle = train(&data, initial, cfg.loss(a.lambda)?, cfg.train)?;
            save_bundle(&a.model, &bundle)?;
        }
        Command::Eval(a) => {
            let bundle = load_bundle(&a.model)?;
            let test = load(
                &a.test,
                bundle.predictor.hash_bits(),
                Some(bundle.classes()),
            )?;
            emit_rows(&[evaluate(&bundle, &test)?], a.out.as_deref())?;
        }
        Command::Sweep(a) => {
            let cfg = a.opts.harness();
            let splits = load_splits(&a.data, &a.test, cfg.predictor.hash_bits)?;
            let rows = experiment::sweep_lambda(&splits, &a.lambdas, &cfg)?;
            emit_rows(&rows, a.out.as_deref())?;
        }
        Command::Baseline(a) => {
            let cfg = a.opts.harness();
            let splits = load_splits(&a.data, &a.test, cfg.predictor.hash_bits)?;
            let rows = experiment::static_baseline(&splits, &a.ks, &cfg)?;
            emit_rows(&rows, a.out.as_deref())?;
        }
        Command::Audit(a) => {
            let bundle = load_bundle(&a.model)?;
            let test = load(
                &a.test,
                bundle.predictor.hash_bits(),
                Some(bundle.classes()),
            )?;
            let sample = &test.instances()[..a.limit.min(test.len())];
            let report = experiment::audit(sample, &bundle, a.slack)?;
            print!("{report}");
            if let Some(path) = &a.out {
                experiment::write_audit_csv(output(Some(path))?, &report)?;
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
