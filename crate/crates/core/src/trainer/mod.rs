//! Alternating optimization, checkpointing, validation and the ablation suite.

mod ablation;
mod fit;
mod state;
mod step;

pub use ablation::{
    median, run_ablation_suite, summarize, AblationReport, AblationRow, Protocol, RunResult,
    SuiteProgress, Variant,
};
pub use fit::{
    fit, fit_with_progress, resume, validation_psnr, Progress, BEST_DIR, LAST_DIR, TIMING_LOG,
    TRAIN_LOG,
};
pub use state::{BatchSampler, RngStreams, TrainState, OPTIM_FILE, STATE_FILE};
pub use step::{
    contour_update, discriminator_update, generator_update, train_step, train_step_batch, Batch,
};
