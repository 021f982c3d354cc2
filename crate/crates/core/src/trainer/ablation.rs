use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fit::{fit_with_progress, Progress, LAST_DIR};
use super::state::TrainState;
use crate::config::{ArchConfig, ContourMode, Setting, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_pairs, EvalReport};
use crate::synthdata::DatasetSplit;

/// The six configurations compared by the ablation suite, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    A,
    B,
    C,
    #[serde(rename = "C-multiscale")]
    CNoMultiscale,
    #[serde(rename = "C-attention")]
    CNoAttention,
    #[serde(rename = "C-sobel")]
    CSobelContour,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::A,
        Variant::B,
        Variant::C,
        Variant::CNoMultiscale,
        Variant::CNoAttention,
        Variant::CSobelContour,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::A => "A",
            Variant::B => "B",
            Variant::C => "C",
            Variant::CNoMultiscale => "C-multiscale",
            Variant::CNoAttention => "C-attention",
            Variant::CSobelContour => "C-sobel",
        }
    }

    /// `base` with this variant's switches applied.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        c.multiscale = true;
        c.use_attention_map = true;
        c.contour_mode = ContourMode::Learned;
        match self {
            Variant::A => c.setting = Setting::A,
            Variant::B => c.setting = Setting::B,
            Variant::C => c.setting = Setting::C,
            Variant::CNoMultiscale => {
                c.setting = Setting::C;
                c.multiscale = false;
            }
            Variant::CNoAttention => {
                c.setting = Setting::C;
                c.use_attention_map = false;
            }
            Variant::CSobelContour => {
                c.setting = Setting::C;
                c.contour_mode = ContourMode::SobelInput;
            }
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.label())
    }
}

/// Held-out metrics of one trained run (means over the eval pairs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub setting: Variant,
    pub seed: u64,
    pub psnr: f64,
    pub ssim: f64,
    pub dice: f64,
}

/// Per-setting medians over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: Variant,
    pub seed_count: usize,
    pub psnr_median: f64,
    pub ssim_median: f64,
    pub dice_median: f64,
}

/// Conditions under which the suite ran.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub image_size: usize,
    pub n_train_per_domain: usize,
    pub n_eval: usize,
    pub batch_size: usize,
    pub steps: u64,
    pub seeds: Vec<u64>,
    pub arch: ArchConfig,
    pub checkpoint: String,
}

/// Contents of `ablation_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub protocol: Protocol,
    pub rows: Vec<AblationRow>,
    pub runs: Vec<RunResult>,
}

impl AblationReport {
    pub const CSV_HEADER: &'static str = "setting,seed_count,psnr_median,ssim_median,dice_median";

    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.setting == v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.setting, r.seed_count, r.psnr_median, r.ssim_median, r.dice_median
            ));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let csv = dir.join("ablation_report.csv");
        fs::write(&csv, self.to_csv()).map_err(Error::io(&csv))?;
        let json = dir.join("ablation_report.json");
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(&json, text + "\n").map_err(Error::io(&json))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        serde_json::from_str(&text).map_err(Error::json(path))
    }
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Aggregates per-run results into report rows in [`Variant::ALL`] order.
pub fn summarize(runs: &[RunResult]) -> Vec<AblationRow> {
    Variant::ALL
        .iter()
        .filter_map(|&v| {
            let rs: Vec<&RunResult> = runs.iter().filter(|r| r.setting == v).collect();
            if rs.is_empty() {
                return None;
            }
            let col =
                |f: fn(&RunResult) -> f64| median(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            Some(AblationRow {
                setting: v,
                seed_count: rs.len(),
                psnr_median: col(|r| r.psnr),
                ssim_median: col(|r| r.ssim),
                dice_median: col(|r| r.dice),
            })
        })
        .collect()
}

/// Observer events of [`run_ablation_suite`].
#[derive(Clone, Copy, Debug)]
pub enum SuiteProgress<'a> {
    RunStarted { setting: Variant, seed: u64 },
    Training(Progress<'a>),
    RunFinished { result: &'a RunResult, reused: bool },
}

fn run_dir(out: &Path, v: Variant, seed: u64) -> PathBuf {
    out.join("runs").join(format!("{}_seed{seed}", v.label()))
}

/// Reads a finished run's evaluation if its checkpoint matches `config`.
fn reuse(dir: &Path, config: &TrainConfig) -> Option<EvalReport> {
    let state = TrainState::load(&dir.join(LAST_DIR)).ok()?;
    if state.step != config.steps || &state.config != config {
        return None;
    }
    let text = fs::read_to_string(dir.join("eval_report.json")).ok()?;
    serde_json::from_str(&text).ok()
}

/// Trains and evaluates every variant for every seed, then writes
/// `ablation_report.{csv,json}` into `out`.
///
/// Finished runs found under `out/runs` with an identical configuration are
/// reused, so an interrupted suite can be restarted.
pub fn run_ablation_suite(
    data: &DatasetSplit,
    base: &TrainConfig,
    seeds: &[u64],
    out: &Path,
    observer: &mut dyn FnMut(SuiteProgress<'_>),
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "ablation needs at least one seed".into(),
        ));
    }
    let mut runs = Vec::new();
    for &seed in seeds {
        for &v in &Variant::ALL {
            let config = TrainConfig {
                seed,
                ..v.apply(base)
            };
            let dir = run_dir(out, v, seed);
            let (report, reused) = match reuse(&dir, &config) {
                Some(r) => (r, true),
                None => {
                    observer(SuiteProgress::RunStarted { setting: v, seed });
                    let ckpt = fit_with_progress(&config, data, &dir, &mut |p| {
                        observer(SuiteProgress::Training(p))
                    })?;
                    let model = TrainState::load(&ckpt)?.model;
                    let report = evaluate_pairs(&model, &data.eval_pairs, None)?;
                    report.write(&dir.join("eval_report.json"))?;
                    (report, false)
                }
            };
            let result = RunResult {
                setting: v,
                seed,
                psnr: report.aggregate.psnr_db.mean,
                ssim: report.aggregate.ssim.mean,
                dice: report.aggregate.dice.mean,
            };
            observer(SuiteProgress::RunFinished {
                result: &result,
                reused,
            });
            runs.push(result);
        }
    }
    let report = AblationReport {
        protocol: Protocol {
            image_size: data.image_size(),
            n_train_per_domain: data.train_a.len(),
            n_eval: data.eval_pairs.len(),
            batch_size: base.batch_size,
            steps: base.steps,
            seeds: seeds.to_vec(),
            arch: base.arch.clone(),
            checkpoint: LAST_DIR.into(),
        },
        rows: summarize(&runs),
        runs,
    };
    report.write(out)?;
    Ok(report)
}
