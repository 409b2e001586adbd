//! Experiment harness: dataset generation, training, evaluation and
//! ablation sweeps over the desk pick-and-place task.

pub mod commands;
pub mod config;
pub mod error;
pub mod metrics;
pub mod runner;
pub mod visual;

pub use commands::{
    ablation_cells, cmd_ablate, cmd_eval, cmd_gen_data, cmd_train, run_cell, run_cell_observed,
    with_summaries, Ablation, Cell, EvalOptions, EvalSource, EvalSpec, TrainReport, CONFIG_FILE,
    LOSS_FILE, METRICS_FILE, WEIGHTS_FILE,
};
pub use config::{ExperimentConfig, Overrides};
pub use error::{exit, HarnessError};
pub use metrics::{
    read_losses, read_metrics, summarize, write_losses, write_metrics, LossRow, MetricsRow,
    LOSS_HEADER, METRICS_HEADER,
};
pub use runner::{eval_scenes, evaluate, make_demos, train_run, Actor, EvalStats};
pub use visual::{trace_file_name, write_trace_images};
