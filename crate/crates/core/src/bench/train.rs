use rayon::prelude::*;

use super::model::{Model, Variant};
use super::task::{loss_from_input, sample_task, TaskSample};
use crate::error::{Error, Result};
use crate::groups::Group;
use crate::nn::{adam_step, AdamState};
use crate::stream::RandomStream;

/// Objectives above this abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub d: usize,
    /// Width of every hidden layer.
    pub hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Monte Carlo samples per test prediction.
    pub mc_samples: usize,
    pub seed: u64,
    pub cond_cap: f64,
    /// Emit a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub n_test: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::PlainMlp,
            d: 2,
            hidden: 64,
            steps: 20_000,
            batch: 128,
            lr: 1e-4,
            mc_samples: 100,
            seed: 0,
            cond_cap: 1e4,
            checkpoint_every: 0,
            n_test: 512,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("hidden", self.hidden),
            ("batch", self.batch),
            ("mc_samples", self.mc_samples),
            ("n_test", self.n_test),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.cond_cap >= 1.0) {
            return Err(Error::Config(format!(
                "cond_cap must be at least 1, got {}",
                self.cond_cap
            )));
        }
        Ok(())
    }

    /// Streams derived from the seed: parameter init, training, evaluation.
    fn streams(&self) -> (RandomStream, RandomStream, RandomStream) {
        let mut root = RandomStream::new(self.seed);
        (root.split(0), root.split(1), root.split(2))
    }

    pub fn initial_model(&self) -> Result<Model> {
        self.validate()?;
        Model::new(self.variant, self.d, self.hidden, &mut self.streams().0)
    }

    pub fn eval_stream(&self) -> RandomStream {
        self.streams().2
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// `(step, objective)` for every completed step, starting at 1.
    pub history: Vec<(usize, f64)>,
    /// Why training stopped early, if it did.
    pub aborted: Option<Error>,
}

pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_checkpoints(config, |_, _| Ok(()))
}

/// Adam on the Jensen objective with a fresh batch every step.
/// `on_checkpoint(step, model)` runs every `checkpoint_every` steps.
pub fn train_with_checkpoints<F>(config: &TrainConfig, mut on_checkpoint: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &Model) -> Result<()>,
{
    config.validate()?;
    let (mut init, mut stream, _) = config.streams();
    let mut model = Model::new(config.variant, config.d, config.hidden, &mut init)?;
    let mut adam = AdamState::new(&model.tensor_sizes());
    let mut history = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let mut st = stream.split(step as u64);
        let mut data = st.split(0);
        let batch: Vec<TaskSample> = (0..config.batch)
            .map(|_| sample_task(config.d, &mut data, config.cond_cap))
            .collect::<Result<_>>()?;
        let (objective, grads) = match model.jensen_objective(&batch, &mut st.split(1)) {
            Ok(v) => v,
            Err(e @ (Error::NonFinite(_) | Error::DegenerateProjection { .. })) => {
                return Ok(TrainOutcome {
                    model,
                    history,
                    aborted: Some(e),
                });
            }
            Err(e) => return Err(e),
        };
        if !(objective <= DIVERGENCE_THRESHOLD) {
            let e = Error::NonFinite(format!(
                "objective {objective:e} at step {step} exceeds {DIVERGENCE_THRESHOLD:e}"
            ));
            return Ok(TrainOutcome {
                model,
                history,
                aborted: Some(e),
            });
        }
        if let Err(e) = adam_step(
            &mut model.tensors_mut(),
            &grads.tensors(),
            &mut adam,
            config.lr,
        ) {
            return Ok(TrainOutcome {
                model,
                history,
                aborted: Some(e),
            });
        }
        history.push((step, objective));
        if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 {
            on_checkpoint(step, &model)?;
        }
    }
    Ok(TrainOutcome {
        model,
        history,
        aborted: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub mean_loss: f64,
    pub equiv_gap: f64,
}

/// Mean test loss of the `n_mc`-sample averaged predictor on `n_test` fresh
/// inputs, and the mean coupled equivariance gap under a Haar `Q` per input.
/// Test point `i` reads `stream.split(i)`; points are evaluated in parallel.
pub fn evaluate(
    model: &Model,
    n_test: usize,
    n_mc: usize,
    cond_cap: f64,
    stream: &mut RandomStream,
) -> Result<Evaluation> {
    if n_test == 0 || n_mc == 0 {
        return Err(Error::EmptyInput(
            "evaluation needs test points and Monte Carlo samples".into(),
        ));
    }
    let streams: Vec<RandomStream> = (0..n_test).map(|i| stream.split(i as u64)).collect();
    let o = Group::orthogonal(model.d());
    let per_point: Vec<Result<(f64, f64)>> = streams
        .into_par_iter()
        .map(|mut ps| {
            let t = sample_task(model.d(), &mut ps.split(0), cond_cap)?;
            let mc = ps.split(1);
            let q = o
                .haar_sample(&mut ps.split(2))?
                .as_matrix()
                .expect("orthogonal");
            let pred = model.predict_mean(&t.x, n_mc, &mut mc.clone())?;
            let gap = model.equivariance_gap(&t.x, &q, n_mc, &mut mc.clone())?;
            Ok((loss_from_input(&t.x, &pred)?, gap))
        })
        .collect();
    let (mut loss, mut gap) = (0.0, 0.0);
    for r in per_point {
        let (l, g) = r?;
        loss += l;
        gap += g;
    }
    Ok(Evaluation {
        mean_loss: loss / n_test as f64,
        equiv_gap: gap / n_test as f64,
    })
}

/// One sweep cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub variant: Variant,
    pub d: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub equiv_gap: f64,
    /// `ok`, or a short reason the cell failed.
    pub status: String,
}

/// Train and evaluate one configuration.
pub fn run_cell(config: &TrainConfig) -> SweepRow {
    let mut row = SweepRow {
        variant: config.variant,
        d: config.d,
        seed: config.seed,
        final_loss: f64::NAN,
        equiv_gap: f64::NAN,
        status: "ok".into(),
    };
    let outcome = match train(config) {
        Ok(o) => o,
        Err(e) => {
            row.status = status_text(&e);
            return row;
        }
    };
    if let Some(e) = &outcome.aborted {
        row.status = status_text(e);
        return row;
    }
    match evaluate(
        &outcome.model,
        config.n_test,
        config.mc_samples,
        config.cond_cap,
        &mut config.eval_stream(),
    ) {
        Ok(ev) => {
            row.final_loss = ev.mean_loss;
            row.equiv_gap = ev.equiv_gap;
        }
        Err(e) => row.status = status_text(&e),
    }
    row
}

fn status_text(e: &Error) -> String {
    format!("failed: {e}").replace([',', '\n', '"'], ";")
}

/// Every `(variant, d, seed)` cell of the grid, run in parallel, sorted by
/// `(d, variant, seed)`.
pub fn run_sweep(
    base: &TrainConfig,
    dims: &[usize],
    variants: &[Variant],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if dims.is_empty() || variants.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one dimension, variant and seed".into(),
        ));
    }
    let mut cells = Vec::new();
    for &d in dims {
        for &variant in variants {
            for &seed in seeds {
                let c = TrainConfig {
                    variant,
                    d,
                    seed,
                    ..base.clone()
                };
                c.validate()?;
                cells.push(c);
            }
        }
    }
    let mut rows: Vec<SweepRow> = cells.par_iter().map(run_cell).collect();
    rows.sort_by(|a, b| (a.d, a.variant, a.seed).cmp(&(b.d, b.variant, b.seed)));
    Ok(rows)
}
