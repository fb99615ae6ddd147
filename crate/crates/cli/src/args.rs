use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use equisym::bench::{TrainConfig, Variant};
use equisym::checks::{Fault, Suite};
use equisym::config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "equisym",
    version,
    about = "Stochastic symmetrisation checks and the matrix-inversion benchmark"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run property suites and report the worst error per property.
    Check(CheckArgs),
    /// Train one model; writes history.csv, model.ckpt and summary.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint on fresh test inputs.
    Eval(EvalArgs),
    /// Train and evaluate every (variant, d, seed) combination.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(value_parser = parse_suite, default_value = "all")]
    pub suite: Suite,
    /// Random tuples per law.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true, value_parser = parse_fault, default_value = "none")]
    pub inject_fault: Fault,
}

/// Flags mirroring the training configuration. Unset flags fall back to the
/// config file, then to the defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct TrainFlags {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// plain_mlp, sym_haar, sym_recursive or canonical_deterministic
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Matrix dimension
    #[arg(long)]
    pub d: Option<usize>,
    /// Hidden width of every MLP
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Adam steps
    #[arg(long)]
    pub steps: Option<usize>,
    /// Fresh samples per step
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Monte Carlo draws per test prediction
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Root seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reject inputs with a larger condition number
    #[arg(long)]
    pub cond_cap: Option<f64>,
    /// Write checkpoints/step-N.ckpt every N steps (0 = never)
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Test points used by the final evaluation
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Output directory; overrides EQUISYM_OUT and the config file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Skip the evaluation that produces summary.json.
    #[arg(long)]
    pub skip_eval: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub n_test: usize,
    #[arg(long, default_value_t = 100)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e4)]
    pub cond_cap: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_variant)]
    pub variants: Vec<Variant>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    /// Also write medians over seeds, ordered by loss.
    #[arg(long)]
    pub summary: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: equisym::Error| e.to_string())
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: equisym::Error| e.to_string())
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    s.parse().map_err(|e: equisym::Error| e.to_string())
}

impl TrainFlags {
    /// Config file (if any) with flags applied on top.
    pub fn resolve(&self) -> equisym::Result<RunConfig> {
        let mut run = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    equisym::Error::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        let c: &mut TrainConfig = &mut run.train;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            variant,
            d,
            hidden,
            steps,
            batch,
            lr,
            mc_samples,
            seed,
            cond_cap,
            checkpoint_every,
            n_test
        );
        Ok(run)
    }
}
