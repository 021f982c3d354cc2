use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::io::{load_image, save_image, ImageDomain};
use super::phantom::{generate_phantom, PhantomSample};
use crate::domain::{Image2D, Mask};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Bumped whenever [`generate_phantom`] changes its output.
pub const GENERATOR_VERSION: &str = "phantom-v1";

/// Unpaired training collections plus aligned evaluation pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train_a: Vec<Image2D>,
    pub train_b: Vec<Image2D>,
    pub eval_pairs: Vec<PhantomSample>,
    /// Generation seed of each `train_a` image, in list order.
    pub train_a_seeds: Vec<u64>,
    pub train_b_seeds: Vec<u64>,
}

/// `manifest.json` of a dataset directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator_version: String,
    pub size: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_eval: usize,
    pub train_a_seeds: Vec<u64>,
    pub train_b_seeds: Vec<u64>,
    pub eval_seeds: Vec<u64>,
}

/// Draws the three disjoint seed ranges and shuffles the training lists.
pub fn make_splits(n_train: usize, n_eval: usize, size: usize, seed: u64) -> Result<DatasetSplit> {
    if n_train == 0 || n_eval == 0 {
        return Err(Error::InvalidConfig(
            "n_train and n_eval must be >= 1".into(),
        ));
    }
    let n = n_train as u64;
    let mut a_seeds: Vec<u64> = (seed..seed + n).collect();
    let mut b_seeds: Vec<u64> = (seed + n..seed + 2 * n).collect();
    let eval_seeds = seed + 2 * n..seed + 2 * n + n_eval as u64;
    let mut rng = seeded_rng(seed, "splits");
    a_seeds.shuffle(&mut rng);
    b_seeds.shuffle(&mut rng);
    let train_a = a_seeds
        .iter()
        .map(|&s| Ok(generate_phantom(s, size)?.domain_a))
        .collect::<Result<_>>()?;
    let train_b = b_seeds
        .iter()
        .map(|&s| Ok(generate_phantom(s, size)?.domain_b))
        .collect::<Result<_>>()?;
    let eval_pairs = eval_seeds
        .map(|s| generate_phantom(s, size))
        .collect::<Result<_>>()?;
    Ok(DatasetSplit {
        train_a,
        train_b,
        eval_pairs,
        train_a_seeds: a_seeds,
        train_b_seeds: b_seeds,
    })
}

impl DatasetSplit {
    pub fn manifest(&self, size: usize, seed: u64) -> Manifest {
        Manifest {
            generator_version: GENERATOR_VERSION.into(),
            size,
            seed,
            n_train: self.train_a.len(),
            n_eval: self.eval_pairs.len(),
            train_a_seeds: self.train_a_seeds.clone(),
            train_b_seeds: self.train_b_seeds.clone(),
            eval_seeds: self.eval_pairs.iter().map(|p| p.seed).collect(),
        }
    }

    /// Side length of the images (all are square and equal).
    pub fn image_size(&self) -> usize {
        self.train_a.first().map(|i| i.height()).unwrap_or(0)
    }
}

fn train_name(i: usize) -> String {
    format!("{i:04}.pbi")
}

fn eval_name(i: usize, suffix: &str) -> String {
    format!("{i:03}_{suffix}.pbi")
}

/// Writes `trainA/`, `trainB/`, `eval/` and `manifest.json` under `dir`.
pub fn write_dataset(dir: &Path, split: &DatasetSplit, manifest: &Manifest) -> Result<()> {
    let sub = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::create_dir_all(&p).map_err(Error::io(&p))?;
        Ok(p)
    };
    let (ta, tb, ev) = (sub("trainA")?, sub("trainB")?, sub("eval")?);
    for (i, img) in split.train_a.iter().enumerate() {
        save_image(img, ImageDomain::A, &ta.join(train_name(i)))?;
    }
    for (i, img) in split.train_b.iter().enumerate() {
        save_image(img, ImageDomain::B, &tb.join(train_name(i)))?;
    }
    for (i, pair) in split.eval_pairs.iter().enumerate() {
        save_image(&pair.domain_a, ImageDomain::A, &ev.join(eval_name(i, "a")))?;
        save_image(&pair.domain_b, ImageDomain::B, &ev.join(eval_name(i, "b")))?;
        save_image(
            &pair.bone_mask.to_image(),
            ImageDomain::Mask,
            &ev.join(eval_name(i, "mask")),
        )?;
    }
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(Error::io(&path))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    serde_json::from_str(&text).map_err(Error::json(&path))
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        })
    }
}

/// Loads only the evaluation pairs of a dataset directory.
pub fn load_eval_pairs(dir: &Path) -> Result<Vec<PhantomSample>> {
    let ev = dir.join("eval");
    require_dir(&ev)?;
    let manifest = read_manifest(dir)?;
    manifest
        .eval_seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| {
            let mask_img = load_image(&ev.join(eval_name(i, "mask")))?;
            Ok(PhantomSample {
                domain_a: load_image(&ev.join(eval_name(i, "a")))?,
                domain_b: load_image(&ev.join(eval_name(i, "b")))?,
                bone_mask: Mask::from_image(&mask_img)?,
                seed,
            })
        })
        .collect()
}

/// Loads a directory written by [`write_dataset`].
pub fn load_dataset(dir: &Path) -> Result<DatasetSplit> {
    let manifest = read_manifest(dir)?;
    let load_list = |name: &str, n: usize| -> Result<Vec<Image2D>> {
        let d = dir.join(name);
        require_dir(&d)?;
        (0..n).map(|i| load_image(&d.join(train_name(i)))).collect()
    };
    Ok(DatasetSplit {
        train_a: load_list("trainA", manifest.train_a_seeds.len())?,
        train_b: load_list("trainB", manifest.train_b_seeds.len())?,
        eval_pairs: load_eval_pairs(dir)?,
        train_a_seeds: manifest.train_a_seeds,
        train_b_seeds: manifest.train_b_seeds,
    })
}
