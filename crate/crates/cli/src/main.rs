//! `pathbone` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pathbone::metrics::{evaluate_pairs, OracleTranslator};
use pathbone::networks::checkpoint::load_model;
use pathbone::synthdata::{
    export_png, hconcat, load_dataset, load_eval_pairs, load_image, make_splits, save_image,
    write_dataset, ImageDomain, MIN_PHANTOM_SIZE,
};
use pathbone::trainer::{fit_with_progress, run_ablation_suite, Progress, SuiteProgress};
use pathbone::{ArchConfig, ContourMode, Image2D, IntensitySpace, Setting, TrainConfig};

#[derive(Parser)]
#[command(
    name = "pathbone",
    version,
    about = "Path- and bone-contour-regularized CT synthesis on synthetic phantoms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic phantom dataset.
    GenData(GenDataArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Translate one image at a given flow time.
    Translate(TranslateArgs),
    /// Render the translation trajectory as a horizontal PNG montage.
    Trajectory(TrajectoryArgs),
    /// Score a checkpoint on the held-out aligned pairs.
    Evaluate(EvaluateArgs),
    /// Train and evaluate all ablation settings over several seeds.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Training images per domain.
    #[arg(long, default_value_t = 400)]
    n_train: usize,
    /// Held-out aligned evaluation pairs.
    #[arg(long, default_value_t = 50)]
    n_eval: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 64, value_parser = parse_size)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Training options shared by `train` and `ablate`; unset flags keep the
/// value from `--config` or the built-in default.
#[derive(Args, Default)]
struct TrainOverrides {
    /// Flat `key = value` configuration file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training iterations.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Architecture preset: standard or compact.
    #[arg(long, value_parser = ArchConfig::preset)]
    arch: Option<ArchConfig>,
    #[arg(long)]
    lambda_rec: Option<f64>,
    #[arg(long)]
    lambda_gan: Option<f64>,
    #[arg(long)]
    lambda_path: Option<f64>,
    #[arg(long)]
    lambda_bone: Option<f64>,
    #[arg(long)]
    lambda_kl: Option<f64>,
    /// Attention strength in the path weights 1 + alpha·W.
    #[arg(long)]
    alpha: Option<f64>,
    /// Steps between validation checkpoints (0 disables).
    #[arg(long)]
    eval_every: Option<u64>,
    /// Evaluation pairs used for validation (0 uses all).
    #[arg(long)]
    eval_images: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `gen-data`.
    #[arg(long)]
    data: PathBuf,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// A: baseline, B: with path loss, C: with path and bone losses.
    #[arg(long, value_parser = parse_with::<Setting>)]
    setting: Option<Setting>,
    #[arg(long)]
    seed: Option<u64>,
    /// Penalize every decoder layer (true) or only the output (false).
    #[arg(long)]
    multiscale: Option<bool>,
    /// Weight the path loss by the bone attention map.
    #[arg(long)]
    use_attention_map: Option<bool>,
    /// learned, sobel-input or none.
    #[arg(long, value_parser = parse_with::<ContourMode>)]
    contour_mode: Option<ContourMode>,
    #[command(flatten)]
    common: TrainOverrides,
}

#[derive(Args)]
struct TranslateArgs {
    /// Checkpoint directory.
    #[arg(long)]
    ckpt: PathBuf,
    /// Input `.pbi` image in domain A.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output path; `.png` exports 8-bit grayscale, anything else `.pbi`.
    #[arg(long)]
    out: PathBuf,
    /// Flow time in [0, 1]; 1 is the translation, 0 the reconstruction.
    #[arg(long, default_value_t = 1.0, value_parser = parse_theta)]
    theta: f64,
}

#[derive(Args)]
struct TrajectoryArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of panels, at least 2.
    #[arg(long, value_parser = parse_panels)]
    steps: usize,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint directory (required unless `--oracle`).
    #[arg(long, required_unless_present = "oracle")]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Output `eval_report.json`.
    #[arg(long)]
    report: PathBuf,
    /// Testing hook: score the aligned ground truth instead of a model.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds.
    #[arg(long, default_value = "0,1,2", value_parser = parse_seeds)]
    seeds: Seeds,
    #[command(flatten)]
    common: TrainOverrides,
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

fn parse_with<T: std::str::FromStr<Err = pathbone::Error>>(s: &str) -> pathbone::Result<T> {
    s.parse()
}

fn parse_theta(s: &str) -> std::result::Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(format!("theta must lie in [0, 1], got {t}"))
    }
}

fn parse_panels(s: &str) -> std::result::Result<usize, String> {
    let n: usize = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if n >= 2 {
        Ok(n)
    } else {
        Err(format!("need at least 2 panels, got {n}"))
    }
}

fn parse_size(s: &str) -> std::result::Result<usize, String> {
    let n: usize = s.parse().map_err(|_| format!("`{s}` is not a size"))?;
    if n >= MIN_PHANTOM_SIZE {
        Ok(n)
    } else {
        Err(format!("size must be at least {MIN_PHANTOM_SIZE}, got {n}"))
    }
}

fn parse_seeds(s: &str) -> std::result::Result<Seeds, String> {
    let seeds = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| format!("`{p}` is not a seed"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err("at least one seed is required".into());
    }
    Ok(Seeds(seeds))
}

impl TrainOverrides {
    fn base_config(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => TrainConfig::from_kv_file(path)?,
            None => TrainConfig::default(),
        };
        if let Some(arch) = &self.arch {
            c.arch = arch.clone();
        }
        let w = &mut c.weights;
        for (slot, value) in [
            (&mut w.lambda_rec, self.lambda_rec),
            (&mut w.lambda_gan, self.lambda_gan),
            (&mut w.lambda_path, self.lambda_path),
            (&mut w.lambda_bone, self.lambda_bone),
            (&mut w.lambda_kl, self.lambda_kl),
            (&mut w.alpha, self.alpha),
            (&mut c.learning_rate, self.learning_rate),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        c.steps = self.steps.unwrap_or(c.steps);
        c.batch_size = self.batch_size.unwrap_or(c.batch_size);
        c.eval_every = self.eval_every.unwrap_or(c.eval_every);
        c.eval_images = self.eval_images.unwrap_or(c.eval_images);
        Ok(c)
    }
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut c = self.common.base_config()?;
        if let Some(s) = self.setting {
            c.setting = s;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(m) = self.multiscale {
            c.multiscale = m;
        }
        if let Some(a) = self.use_attention_map {
            c.use_attention_map = a;
        }
        if let Some(m) = self.contour_mode {
            c.contour_mode = m;
        }
        c.validate()?;
        Ok(c)
    }
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    let split = make_splits(args.n_train, args.n_eval, args.size, args.seed)?;
    write_dataset(&args.out, &split, &split.manifest(args.size, args.seed))?;
    eprintln!(
        "wrote {} + {} training images and {} eval pairs to {}",
        split.train_a.len(),
        split.train_b.len(),
        split.eval_pairs.len(),
        args.out.display()
    );
    Ok(())
}

fn report_progress(p: Progress<'_>, total_steps: u64) {
    match p {
        Progress::Step {
            step,
            report,
            total,
        } if step % 100 == 0 || step == total_steps => {
            eprintln!(
                "step {step}/{total_steps}  total {total:.4}  rec {:.4}/{:.4}  gan {:.4}/{:.4}  path {:.4}  bone {:.4}",
                report.rec_x, report.rec_y, report.gan_g, report.gan_d, report.path, report.bone
            );
        }
        Progress::Validation {
            step,
            psnr_db,
            improved,
        } => {
            eprintln!(
                "step {step}: validation psnr {psnr_db:.3} dB{}",
                if improved { " (best)" } else { "" }
            );
        }
        Progress::Step { .. } => {}
    }
}

fn train(args: &TrainArgs) -> Result<()> {
    let config = args.config()?;
    let data = load_dataset(&args.data)?;
    let ckpt = fit_with_progress(&config, &data, &args.out, &mut |p| {
        report_progress(p, config.steps)
    })?;
    eprintln!("checkpoint: {}", ckpt.display());
    Ok(())
}

fn load_input(path: &Path) -> Result<Image2D> {
    let img =
        load_image(path).with_context(|| format!("reading input image {}", path.display()))?;
    Ok(match img.space() {
        IntensitySpace::Normalized => img,
        IntensitySpace::Unit => img.to_normalized(),
    })
}

fn write_output(img: &Image2D, path: &Path) -> Result<()> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
    {
        export_png(img, path)?;
    } else {
        save_image(img, ImageDomain::B, path)?;
    }
    Ok(())
}

fn translate(args: &TranslateArgs) -> Result<()> {
    let (model, _) = load_model(&args.ckpt)?;
    let x = load_input(&args.input)?;
    write_output(&model.translate(&x, args.theta)?, &args.out)
}

fn trajectory(args: &TrajectoryArgs) -> Result<()> {
    let (model, _) = load_model(&args.ckpt)?;
    let x = load_input(&args.input)?;
    let panels = model.trajectory(&x, args.steps)?;
    export_png(&hconcat(&panels)?, &args.out)?;
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let pairs = load_eval_pairs(&args.data)?;
    let report = if args.oracle {
        evaluate_pairs(&OracleTranslator, &pairs, None)?
    } else {
        let ckpt = args
            .ckpt
            .as_ref()
            .expect("clap enforces --ckpt without --oracle");
        let (model, _) = load_model(ckpt)?;
        evaluate_pairs(&model, &pairs, None)?
    };
    report.write(&args.report)?;
    let a = &report.aggregate;
    println!(
        "psnr {:.3} ± {:.3} dB  ssim {:.4} ± {:.4}  dice {:.4} ± {:.4}  (n = {})",
        a.psnr_db.mean,
        a.psnr_db.std,
        a.ssim.mean,
        a.ssim.std,
        a.dice.mean,
        a.dice.std,
        report.count
    );
    Ok(())
}

fn ablate(args: &AblateArgs) -> Result<()> {
    let base = args.common.base_config()?;
    base.validate()?;
    let data = load_dataset(&args.data)?;
    let steps = base.steps;
    let report = run_ablation_suite(&data, &base, &args.seeds.0, &args.out, &mut |p| match p {
        SuiteProgress::RunStarted { setting, seed } => eprintln!("== {setting} seed {seed}"),
        SuiteProgress::Training(p) => report_progress(p, steps),
        SuiteProgress::RunFinished { result, reused } => eprintln!(
            "== {} seed {}: psnr {:.3} ssim {:.4} dice {:.4}{}",
            result.setting,
            result.seed,
            result.psnr,
            result.ssim,
            result.dice,
            if reused { " (reused)" } else { "" }
        ),
    })?;
    print!("{}", report.to_csv());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Translate(a) => translate(a),
        Command::Trajectory(a) => trajectory(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
