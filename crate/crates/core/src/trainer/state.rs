use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pathbone_tape::{Adam, AdamConfig, Moments, Tensor};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::networks::checkpoint::{decode_tensors, encode_tensors, load_model, save_model};
use crate::networks::ModelBundle;
use crate::rng::{seeded_rng, Rng};

pub const OPTIM_FILE: &str = "optim.bin";
pub const STATE_FILE: &str = "state.json";

/// The random streams consumed during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngStreams {
    pub data: Rng,
    pub theta: Rng,
    pub h: Rng,
    pub noise: Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            data: seeded_rng(seed, "data"),
            theta: seeded_rng(seed, "theta"),
            h: seeded_rng(seed, "h"),
            noise: seeded_rng(seed, "noise"),
        }
    }
}

/// Epoch-wise shuffled index streams over the two unpaired collections.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSampler {
    order_a: Vec<usize>,
    order_b: Vec<usize>,
    pos_a: usize,
    pos_b: usize,
}

impl BatchSampler {
    pub fn new(n_a: usize, n_b: usize) -> Self {
        Self {
            order_a: (0..n_a).collect(),
            order_b: (0..n_b).collect(),
            pos_a: n_a,
            pos_b: n_b,
        }
    }

    fn draw(order: &mut [usize], pos: &mut usize, count: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if *pos >= order.len() {
                order.shuffle(rng);
                *pos = 0;
            }
            out.push(order[*pos]);
            *pos += 1;
        }
        out
    }

    /// Indices into the A and B collections for the next batch.
    pub fn next_batch(&mut self, batch: usize, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
        let a = Self::draw(&mut self.order_a, &mut self.pos_a, batch, rng);
        let b = Self::draw(&mut self.order_b, &mut self.pos_b, batch, rng);
        (a, b)
    }
}

/// Everything needed to continue training bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub config: TrainConfig,
    pub model: ModelBundle<f32>,
    pub optimizer: Adam<f32>,
    pub rngs: RngStreams,
    pub sampler: BatchSampler,
    pub best_validation: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    step: u64,
    best_validation: Option<f64>,
    rngs: RngStreams,
    sampler: BatchSampler,
    adam_steps: BTreeMap<String, u64>,
}

impl TrainState {
    /// Fresh state; the model is initialized from `config.seed`.
    pub fn new(config: TrainConfig, n_a: usize, n_b: usize) -> Result<Self> {
        config.validate()?;
        let model = ModelBundle::new(config.arch.clone(), config.seed)?;
        let optimizer = Adam::new(AdamConfig {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: 1e-8,
        });
        Ok(Self {
            step: 0,
            rngs: RngStreams::new(config.seed),
            sampler: BatchSampler::new(n_a, n_b),
            model,
            optimizer,
            config,
            best_validation: None,
        })
    }

    /// Writes a full checkpoint directory: weights, config, optimizer and state.
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_model(dir, &self.model, &self.config)?;
        let mut tensors: Vec<(String, &Tensor<f32>)> = Vec::new();
        let mut adam_steps = BTreeMap::new();
        for (name, m) in self.optimizer.moments() {
            tensors.push((format!("{name}.m"), &m.m));
            tensors.push((format!("{name}.v"), &m.v));
            adam_steps.insert(name.to_string(), m.step);
        }
        let optim = dir.join(OPTIM_FILE);
        fs::write(
            &optim,
            encode_tensors(tensors.iter().map(|(n, t)| (n.as_str(), *t))),
        )
        .map_err(Error::io(&optim))?;
        let state = StateFile {
            step: self.step,
            best_validation: self.best_validation,
            rngs: self.rngs.clone(),
            sampler: self.sampler.clone(),
            adam_steps,
        };
        let path = dir.join(STATE_FILE);
        let json = serde_json::to_string(&state).expect("state serializes");
        fs::write(&path, json).map_err(Error::io(&path))
    }

    /// Restores a directory written by [`save`](Self::save).
    pub fn load(dir: &Path) -> Result<Self> {
        let (model, config) = load_model(dir)?;
        let path = dir.join(STATE_FILE);
        let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
        let state: StateFile = serde_json::from_str(&text).map_err(Error::json(&path))?;
        let optim = dir.join(OPTIM_FILE);
        let bytes = fs::read(&optim).map_err(Error::io(&optim))?;
        let mut tensors: BTreeMap<String, Tensor<f32>> =
            decode_tensors(&bytes, &optim)?.into_iter().collect();
        let mut optimizer = Adam::new(AdamConfig {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: 1e-8,
        });
        for (name, step) in state.adam_steps {
            let mut take = |suffix: &str| {
                tensors
                    .remove(&format!("{name}.{suffix}"))
                    .ok_or_else(|| Error::Checkpoint {
                        path: optim.clone(),
                        reason: format!("missing moment `{name}.{suffix}`"),
                    })
            };
            let (m, v) = (take("m")?, take("v")?);
            optimizer.set_moments(name, Moments { step, m, v });
        }
        Ok(Self {
            step: state.step,
            config,
            model,
            optimizer,
            rngs: state.rngs,
            sampler: state.sampler,
            best_validation: state.best_validation,
        })
    }
}
