use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gqa_core::distort::DistortionType;
use gqa_core::harness::{self, ExperimentConfig, Profile, ReferenceSource, Split};
use gqa_core::metrics::MetricId;
use gqa_core::{GqaError, Seed};

#[derive(Debug, Parser)]
#[command(name = "gqa", version, about = "No-reference geometry quality assessment of point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; every random choice is derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct Experiment {
    /// Dataset manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// TOML file overriding profile values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// Replace learned patch weights with uniform ones.
    #[arg(long)]
    uniform_weights: bool,
    /// Use one whole-cloud patch instead of N local patches.
    #[arg(long)]
    no_patching: bool,
}

impl Experiment {
    fn config(&self) -> Result<ExperimentConfig, GqaError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path, self.profile)?,
            None => ExperimentConfig::profile(self.profile),
        };
        cfg.uniform_weights |= self.uniform_weights;
        cfg.no_patching |= self.no_patching;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate distorted lists from reference clouds.
    Synth {
        /// Directory of reference .ply/.xyz files.
        #[arg(long, conflicts_with = "builtin")]
        refs: Option<PathBuf>,
        /// Number of built-in synthetic references to use instead.
        #[arg(long)]
        builtin: Option<usize>,
        /// Comma-separated distortion tags, e.g. GN,UN,RD,GD.
        #[arg(long, default_value = "GN,UN,RD,GD")]
        dtypes: String,
        #[arg(long, default_value_t = 10)]
        levels: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Label every manifest item with its pseudo-MOS.
    Pmos {
        #[arg(long)]
        manifest: PathBuf,
        /// Write the labelled manifest here instead of in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank every list with full-reference metrics.
    Metric {
        #[arg(long)]
        manifest: PathBuf,
        /// `all` or a comma-separated list such as po2po_mse,pl2pl_hd.
        #[arg(long, default_value = "all")]
        metrics: String,
        #[command(flatten)]
        common: Common,
    },
    /// Pre-train the patch feature extractor on distortion-level classification.
    Pretrain {
        #[command(flatten)]
        exp: Experiment,
        #[command(flatten)]
        common: Common,
    },
    /// Train the index and weight heads with listMLE.
    Train {
        #[command(flatten)]
        exp: Experiment,
        /// Pre-trained checkpoint (default: <out>/checkpoint_pretrain.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the heads to pseudo-MOS labels.
    Finetune {
        #[command(flatten)]
        exp: Experiment,
        /// Trained checkpoint (default: <out>/checkpoint_train.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score lists with a checkpoint and report NDCG.
    Rank {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[command(flatten)]
        common: Common,
    },
    /// Predict absolute scores and compare them with pseudo-MOS.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a predictions table.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cmd: Command) -> Result<(), GqaError> {
    match cmd {
        Command::Synth { refs, builtin, dtypes, levels, common } => {
            let source = match (refs, builtin) {
                (Some(dir), _) => ReferenceSource::Dir(dir),
                (None, Some(n)) => ReferenceSource::Builtin(n),
                (None, None) => return Err(GqaError::Config("synth needs --refs <dir> or --builtin <count>".into())),
            };
            let dtypes = DistortionType::parse_list(&dtypes)?;
            let m = harness::cmd_synth(&source, &dtypes, levels, Seed(common.seed), &common.out)?;
            println!("{} references, {} lists -> {}", m.references.len(), m.lists.len(), common.out.join("manifest.json").display());
        }
        Command::Pmos { manifest, out } => {
            let m = harness::cmd_pmos(&manifest, out.as_deref())?;
            let n: usize = m.lists.iter().map(|l| l.items.len()).sum();
            println!("labelled {n} items");
        }
        Command::Metric { manifest, metrics, common } => {
            let ids = MetricId::parse_list(&metrics)?;
            let rows = harness::cmd_metric(&manifest, &ids, &common.out)?;
            println!("{} metric rankings -> {}", rows.len(), common.out.display());
        }
        Command::Pretrain { exp, common } => {
            let o = harness::cmd_pretrain(&exp.manifest, &exp.config()?, Seed(common.seed), &common.out)?;
            report_training(&o, "accuracy");
        }
        Command::Train { exp, checkpoint, common } => {
            let o = harness::cmd_train(&exp.manifest, &exp.config()?, Seed(common.seed), checkpoint.as_deref(), &common.out)?;
            report_training(&o, "NDCG");
        }
        Command::Finetune { exp, checkpoint, common } => {
            let o = harness::cmd_finetune(&exp.manifest, &exp.config()?, Seed(common.seed), checkpoint.as_deref(), &common.out)?;
            report_training(&o, "PLCC");
        }
        Command::Rank { manifest, checkpoint, split, common } => {
            let r = harness::cmd_rank(&manifest, &checkpoint, split, &common.out)?;
            for row in &r.summary {
                println!("{:<6} {:.4}", row.dtype, row.value);
            }
        }
        Command::Score { manifest, checkpoint, split, common } => {
            let s = harness::cmd_score(&manifest, &checkpoint, split, &common.out)?.stats;
            println!("RMSE {:.4}  PLCC {:.4}  KRCC {:.4}  SRCC {:.4}", s.rmse, s.plcc, s.krcc, s.srcc);
        }
        Command::Eval { predictions, common } => {
            for row in harness::cmd_eval(&predictions, &common.out)? {
                println!("{:<6} {:<10} {:.4}", row.dtype, row.metric, row.value);
            }
        }
    }
    Ok(())
}

fn report_training(o: &harness::TrainOutcome, what: &str) {
    if let Some(last) = o.logs.last() {
        let val = last.val.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!("epoch {}: loss {:.4}, train {what} {:.4}, held-out {val}", last.epoch, last.loss, last.train);
    }
    println!("checkpoint -> {}", o.checkpoint.display());
}

fn exit_code(e: &GqaError) -> u8 {
    match e {
        GqaError::Staging(_) => 3,
        GqaError::Config(_) | GqaError::UnknownDistortion(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
