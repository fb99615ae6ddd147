//! The orthogonally equivariant matrix-inversion benchmark.
//!
//! Inputs are Gaussian `X ∈ GL(d)`, targets `X⁻¹`, and `O(d)` acts by
//! `Q·X = QX` on inputs and `Q·Y = YQᵀ` on outputs. Matrices enter and leave
//! the networks flattened row-major.

mod jensen;
mod model;
mod report;
mod task;
mod train;

pub use jensen::{jensen_certificate, jensen_objective, JensenCertificate};
pub use model::{BaseDraw, Model, ModelGrads, Variant, GS_RETRIES};
pub use report::{
    format_float, history_csv, median, median_summary, median_summary_csv, sweep_csv, MedianRow,
    Summary, HISTORY_HEADER, SWEEP_HEADER, SWEEP_SUMMARY_HEADER,
};
pub use task::{loss, loss_from_input, sample_task, TaskSample, MAX_REJECTIONS};
pub use train::{
    evaluate, run_cell, run_sweep, train, train_with_checkpoints, Evaluation, SweepRow,
    TrainConfig, TrainOutcome, DIVERGENCE_THRESHOLD,
};
