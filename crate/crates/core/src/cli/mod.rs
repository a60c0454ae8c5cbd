//! Run configuration, checkpoints and the `train` / `eval` / `infer` /
//! `plot-data` commands behind the `usdl` binary.

mod commands;
pub mod config;
pub mod model;

use std::path::Path;

use crate::dataio::{synth_dataset, synth_manifest, write_dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::nethead::TrainConfig;

pub use commands::{
    cmd_eval, cmd_infer, cmd_plot_data, cmd_train, evaluate, load_for, predict, read_predictions, sample_loss,
    select_split, train_model, untrained_model, PlotFiles, Prediction, TrainSummary, CHECKPOINT_FILE,
    CONFIG_SNAPSHOT_FILE, CS_CURVE_FILE, DEFAULT_ACTION, PREDICTIONS_FILE, REPORT_FILE, SCATTER_FILE, SCORES_FILE,
    SEGMENT_DIST_FILE, TRAIN_LOG_FILE,
};
pub use config::{default_final_scale, DataPaths, EvalSplit, Mode, ResolvedSetup, RunConfig};
pub use model::ModelCheckpoint;

/// Process exit code for a failed command: 1 for invalid input or
/// configuration, 2 for runtime failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::ReportMissing(_) | Error::DegenerateSeries | Error::RhoOutOfRange(_) => 2,
        _ => 1,
    }
}

/// Writes a synthetic dataset into `dir` together with a `run.toml` for `mode`.
pub fn write_synthetic_run(dir: &Path, synth: &SynthConfig, n_train: usize, mode: Mode) -> Result<RunConfig> {
    let records = synth_dataset(synth)?;
    let manifest = synth_manifest("synthetic", synth, &records, n_train)?;
    let files = write_dataset(&dir.join("data"), &manifest, &records)?;
    let config = RunConfig::new(mode, TrainConfig::with_seed(synth.seed), files.into(), dir.join("out"));
    config.save(&dir.join("run.toml"))?;
    Ok(config)
}
