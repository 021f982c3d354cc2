use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::state::TrainState;
use super::step::{train_step_batch, Batch};
use crate::config::TrainConfig;
use crate::domain::Image2D;
use crate::error::{Error, Result};
use crate::losses::{total_generator_loss, LossReport};
use crate::metrics::psnr;
use crate::networks::ModelBundle;
use crate::synthdata::{DatasetSplit, PhantomSample};

pub const TRAIN_LOG: &str = "train_log.csv";
pub const TIMING_LOG: &str = "timing.csv";
pub const LAST_DIR: &str = "last";
pub const BEST_DIR: &str = "best";

/// What [`fit`] reports to its observer.
#[derive(Clone, Copy, Debug)]
pub enum Progress<'a> {
    Step {
        step: u64,
        report: &'a LossReport,
        total: f64,
    },
    Validation {
        step: u64,
        psnr_db: f64,
        improved: bool,
    },
}

/// Mean PSNR of A→B translations against the aligned B images.
pub fn validation_psnr(model: &ModelBundle<f32>, pairs: &[PhantomSample]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig(
            "validation needs at least one eval pair".into(),
        ));
    }
    let mut total = 0.0;
    for chunk in pairs.chunks(16) {
        let xs: Vec<Image2D> = chunk.iter().map(|p| p.domain_a.clone()).collect();
        for (out, pair) in model.translate_batch(&xs, 1.0)?.iter().zip(chunk) {
            total += psnr(out, &pair.domain_b)?;
        }
    }
    Ok(total / pairs.len() as f64)
}

fn validation_pairs<'a>(config: &TrainConfig, data: &'a DatasetSplit) -> &'a [PhantomSample] {
    let n = if config.eval_images == 0 {
        data.eval_pairs.len()
    } else {
        config.eval_images.min(data.eval_pairs.len())
    };
    &data.eval_pairs[..n]
}

/// Trains from scratch into `out`, returning the `last` checkpoint directory.
///
/// `out` receives `config.json`, `train_log.csv`, `timing.csv`, and the
/// `last` and `best` checkpoints.
pub fn fit(config: &TrainConfig, data: &DatasetSplit, out: &Path) -> Result<PathBuf> {
    fit_with_progress(config, data, out, &mut |_| {})
}

pub fn fit_with_progress(
    config: &TrainConfig,
    data: &DatasetSplit,
    out: &Path,
    observer: &mut dyn FnMut(Progress<'_>),
) -> Result<PathBuf> {
    let state = TrainState::new(config.clone(), data.train_a.len(), data.train_b.len())?;
    fs::create_dir_all(out).map_err(Error::io(out))?;
    let cfg_path = out.join("config.json");
    fs::write(&cfg_path, config.to_json() + "\n").map_err(Error::io(&cfg_path))?;
    let log = open_log(&out.join(TRAIN_LOG), LossReport::CSV_HEADER, None)?;
    let timing = open_log(&out.join(TIMING_LOG), "step,wall_seconds", None)?;
    run(state, data, out, config.steps, log, timing, observer)
}

/// Continues the run in `out` from its `last` checkpoint up to `steps` total.
///
/// Log rows written after that checkpoint are discarded first, so the
/// resulting log matches an uninterrupted run.
pub fn resume(
    out: &Path,
    data: &DatasetSplit,
    steps: u64,
    observer: &mut dyn FnMut(Progress<'_>),
) -> Result<PathBuf> {
    let state = TrainState::load(&out.join(LAST_DIR))?;
    let log = open_log(
        &out.join(TRAIN_LOG),
        LossReport::CSV_HEADER,
        Some(state.step),
    )?;
    let timing = open_log(&out.join(TIMING_LOG), "step,wall_seconds", Some(state.step))?;
    run(state, data, out, steps, log, timing, observer)
}

/// Opens a CSV log; with `keep_until`, keeps existing rows up to that step.
fn open_log(path: &Path, header: &str, keep_until: Option<u64>) -> Result<BufWriter<fs::File>> {
    let mut kept = vec![header.to_string()];
    if let Some(limit) = keep_until {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        kept.extend(
            text.lines()
                .skip(1)
                .filter(|l| {
                    l.split(',')
                        .next()
                        .and_then(|s| s.parse::<u64>().ok())
                        .is_some_and(|s| s <= limit)
                })
                .map(str::to_string),
        );
    }
    let file = fs::File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    for line in kept {
        writeln!(w, "{line}").map_err(Error::io(path))?;
    }
    Ok(w)
}

fn run(
    mut state: TrainState,
    data: &DatasetSplit,
    out: &Path,
    steps: u64,
    mut log: BufWriter<fs::File>,
    mut timing: BufWriter<fs::File>,
    observer: &mut dyn FnMut(Progress<'_>),
) -> Result<PathBuf> {
    let log_path = out.join(TRAIN_LOG);
    let timing_path = out.join(TIMING_LOG);
    let pairs = validation_pairs(&state.config, data);
    let weights = state.config.effective_weights();
    let batch_size = state.config.batch_size;
    let eval_every = state.config.eval_every;
    let started = Instant::now();

    while state.step < steps {
        let (ia, ib) = state.sampler.next_batch(batch_size, &mut state.rngs.data);
        let xs: Vec<Image2D> = ia.iter().map(|&i| data.train_a[i].clone()).collect();
        let ys: Vec<Image2D> = ib.iter().map(|&i| data.train_b[i].clone()).collect();
        let report = train_step_batch(&mut state, &Batch::new(&xs, &ys)?)?;
        let total = total_generator_loss(&report, &weights)?;
        writeln!(log, "{}", report.csv_row(state.step, total)).map_err(Error::io(&log_path))?;
        writeln!(
            timing,
            "{},{:.3}",
            state.step,
            started.elapsed().as_secs_f64()
        )
        .map_err(Error::io(&timing_path))?;
        observer(Progress::Step {
            step: state.step,
            report: &report,
            total,
        });
        if eval_every > 0 && state.step % eval_every == 0 && state.step < steps {
            log.flush().map_err(Error::io(&log_path))?;
            timing.flush().map_err(Error::io(&timing_path))?;
            checkpoint(&mut state, pairs, out, observer)?;
        }
    }
    log.flush().map_err(Error::io(&log_path))?;
    timing.flush().map_err(Error::io(&timing_path))?;
    checkpoint(&mut state, pairs, out, observer)?;
    Ok(out.join(LAST_DIR))
}

/// Validates, updates `best` on improvement, and always refreshes `last`.
fn checkpoint(
    state: &mut TrainState,
    pairs: &[PhantomSample],
    out: &Path,
    observer: &mut dyn FnMut(Progress<'_>),
) -> Result<()> {
    let score = validation_psnr(&state.model, pairs)?;
    let improved = state.best_validation.is_none_or(|b| score > b);
    if improved {
        state.best_validation = Some(score);
    }
    observer(Progress::Validation {
        step: state.step,
        psnr_db: score,
        improved,
    });
    if improved {
        state.save(&out.join(BEST_DIR))?;
    }
    state.save(&out.join(LAST_DIR))
}
