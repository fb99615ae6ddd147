//! `equisym` command-line driver.
//!
//! Exit status: 0 on success, 1 when a property or run fails, 2 on usage
//! errors (bad flags, unknown config keys, unusable paths).

mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use equisym::bench::{
    evaluate, history_csv, median_summary, median_summary_csv, run_sweep, sweep_csv,
    train_with_checkpoints, Model, Summary, TrainConfig,
};
use equisym::checks;
use equisym::config::RunConfig;
use equisym::nn::checkpoint::Checkpoint;
use equisym::Error;

use args::{CheckArgs, Cli, Command, EvalArgs, SweepArgs, TrainArgs};

const OUT_ENV: &str = "EQUISYM_OUT";
const DEFAULT_OUT: &str = "equisym-out";

enum Failure {
    Usage(String),
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Failed(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check(a) => check(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// `--out`, then `EQUISYM_OUT`, then the config file, then the default.
fn output_dir(flag: Option<&Path>, from_file: Option<&str>) -> Result<PathBuf, Failure> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| {
            std::env::var_os(OUT_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .or_else(|| from_file.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir).map_err(|e| {
        Failure::Usage(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::Failed(format!("cannot write {}: {e}", path.display())))
}

fn check(a: CheckArgs) -> Result<(), Failure> {
    if a.samples == 0 {
        return Err(Failure::Usage("--samples must be positive".into()));
    }
    let report = checks::run(a.suite, a.inject_fault, a.samples, a.seed);
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<String> = report.failures().iter().map(|f| f.name.clone()).collect();
        Err(Failure::Failed(format!(
            "failing properties: {}",
            names.join("; ")
        )))
    }
}

fn run_name(c: &TrainConfig) -> String {
    format!("{}-d{}-seed{}", c.variant, c.d, c.seed)
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let run = a.flags.resolve()?;
    let config = run.train;
    config.validate()?;
    let dir = output_dir(a.flags.out.as_deref(), run.out_dir.as_deref())?.join(run_name(&config));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    write(&dir.join("config.txt"), &RunConfig::render(&config))?;
    let ckpt_dir = dir.join("checkpoints");
    let outcome = train_with_checkpoints(&config, |step, model| {
        std::fs::create_dir_all(&ckpt_dir)?;
        model
            .to_checkpoint()
            .save(&ckpt_dir.join(format!("step-{step}.ckpt")))
    })?;
    write(&dir.join("history.csv"), &history_csv(&outcome.history))?;
    let mut ck = outcome.model.to_checkpoint();
    ck.meta
        .insert("steps".into(), outcome.history.len().to_string());
    ck.meta.insert("seed".into(), config.seed.to_string());
    ck.save(&dir.join("model.ckpt"))?;
    if let Some(e) = outcome.aborted {
        return Err(Failure::Failed(format!(
            "training stopped after {} steps: {e}; history written to {}",
            outcome.history.len(),
            dir.display()
        )));
    }
    let last = outcome.history.last().map_or(f64::NAN, |(_, o)| *o);
    if a.skip_eval {
        println!(
            "{}: {} steps, final objective {last:.6e}, artifacts in {}",
            run_name(&config),
            outcome.history.len(),
            dir.display()
        );
        return Ok(());
    }
    let ev = evaluate(
        &outcome.model,
        config.n_test,
        config.mc_samples,
        config.cond_cap,
        &mut config.eval_stream(),
    )?;
    let summary = Summary {
        variant: config.variant,
        d: config.d,
        final_loss: ev.mean_loss,
        equiv_gap: ev.equiv_gap,
        seed: config.seed,
    };
    write(&dir.join("summary.json"), &summary.to_json())?;
    println!(
        "{}: {} steps, final objective {last:.6e}, test loss {:.6e}, equivariance gap {:.3e}, artifacts in {}",
        run_name(&config),
        outcome.history.len(),
        ev.mean_loss,
        ev.equiv_gap,
        dir.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let ck = Checkpoint::load(&a.checkpoint)
        .map_err(|e| Failure::Usage(format!("cannot load {}: {e}", a.checkpoint.display())))?;
    let model = Model::from_checkpoint(&ck)?;
    let config = TrainConfig {
        variant: model.variant(),
        d: model.d(),
        n_test: a.n_test,
        mc_samples: a.mc_samples,
        seed: a.seed,
        cond_cap: a.cond_cap,
        ..TrainConfig::default()
    };
    config.validate()?;
    let dir = output_dir(a.out.as_deref(), None)?;
    let ev = evaluate(
        &model,
        a.n_test,
        a.mc_samples,
        a.cond_cap,
        &mut config.eval_stream(),
    )?;
    let summary = Summary {
        variant: model.variant(),
        d: model.d(),
        final_loss: ev.mean_loss,
        equiv_gap: ev.equiv_gap,
        seed: a.seed,
    };
    let stem = a
        .checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    let path = dir.join(format!("{stem}-eval-seed{}.json", a.seed));
    write(&path, &summary.to_json())?;
    println!(
        "{} d={}: test loss {:.6e}, equivariance gap {:.3e}, summary in {}",
        model.variant(),
        model.d(),
        ev.mean_loss,
        ev.equiv_gap,
        path.display()
    );
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let run = a.flags.resolve()?;
    let dir = output_dir(a.flags.out.as_deref(), run.out_dir.as_deref())?;
    let rows = run_sweep(&run.train, &a.dims, &a.variants, &a.seeds)?;
    let path = dir.join("sweep.csv");
    write(&path, &sweep_csv(&rows))?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!(
        "{} cells ({failed} failed), results in {}",
        rows.len(),
        path.display()
    );
    if a.summary {
        let table = median_summary_csv(&median_summary(&rows));
        write(&dir.join("sweep_summary.csv"), &table)?;
        print!("{table}");
    }
    Ok(())
}
