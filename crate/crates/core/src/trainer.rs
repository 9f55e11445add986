//! Object-level splitting, batch sampling and the training loop.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{params_from_tensors, params_to_tensors};
use crate::dataset::{Condition, Dataset, Split, SplitAssignment};
use crate::encoder::{batch_forward_backward_raw, Batch, EncoderParams};
use crate::error::{Error, Result};
use crate::format::{decode_tensors, encode_tensors, tensor_words, words_tensor, write_atomic};
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

/// Stream used by the object split shuffle, distinct from the training stream.
const SPLIT_STREAM: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: u64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 32,
            learning_rate: adam.learning_rate,
            steps: 2000,
            seed: 0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            weight_decay: adam.weight_decay,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive, weight_decay non-negative".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::SchemaError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Assigns `round(test_fraction · N)` (half up) shuffled objects to test.
pub fn split_objects(
    object_ids: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    if object_ids.is_empty() {
        return Err(Error::EmptyManifest);
    }
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidConfig("test_fraction must lie in [0, 1]".into()));
    }
    let mut ids: Vec<&String> = object_ids.iter().collect();
    ids.sort();
    ids.dedup();
    let n_test = ((test_fraction * ids.len() as f64) + 0.5).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    ids.shuffle(&mut rng);
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), if i < n_test { Split::Test } else { Split::Train }))
        .collect())
}

pub fn split_by_object(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    Ok(SplitAssignment {
        objects: split_objects(&dataset.object_ids(), test_fraction, seed)?,
    })
}

/// Serializable generator state: seed, stream and word position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    pub fn to_words(&self) -> Vec<u32> {
        let mut w: Vec<u32> = self
            .seed
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        w.extend([self.stream as u32, (self.stream >> 32) as u32]);
        w.extend((0..4).map(|i| (self.word_pos >> (32 * i)) as u32));
        w
    }

    pub fn from_words(w: &[u32]) -> Result<Self> {
        if w.len() != 14 {
            return Err(Error::SchemaError(format!("rng state has {} words, expected 14", w.len())));
        }
        let mut seed = [0u8; 32];
        for (i, word) in w[..8].iter().enumerate() {
            seed[4 * i..4 * i + 4].copy_from_slice(&word.to_le_bytes());
        }
        let stream = w[8] as u64 | (w[9] as u64) << 32;
        let word_pos = (0..4).fold(0u128, |acc, i| acc | (w[10 + i] as u128) << (32 * i));
        Ok(Self {
            seed,
            stream,
            word_pos,
        })
    }
}

/// Training pool of one split, grouped by ground-truth material.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    /// (material index, part indices), ascending by material index.
    groups: Vec<(usize, Vec<usize>)>,
}

impl BatchSampler {
    /// Pools the split's main-condition parts; unseen-condition parts are evaluation-only.
    pub fn new(dataset: &Dataset, split: Split) -> Self {
        let mut by_material: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, p) in dataset.parts.iter().enumerate() {
            if p.split == split && p.condition == Condition::Main {
                let m = dataset
                    .material_index(&p.truth_material_id)
                    .expect("dataset validates material references");
                by_material.entry(m).or_default().push(i);
            }
        }
        Self {
            groups: by_material.into_iter().collect(),
        }
    }

    pub fn distinct_materials(&self) -> usize {
        self.groups.len()
    }

    /// `(material indices, part indices)` with pairwise-distinct materials.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
        if batch_size > self.groups.len() {
            return Err(Error::InsufficientDistinctMaterials {
                needed: batch_size,
                available: self.groups.len(),
            });
        }
        let picks = index::sample(rng, self.groups.len(), batch_size);
        let mut materials = Vec::with_capacity(batch_size);
        let mut parts = Vec::with_capacity(batch_size);
        for g in picks.iter() {
            let (m, pool) = &self.groups[g];
            materials.push(*m);
            parts.push(pool[rng.random_range(0..pool.len())]);
        }
        Ok((materials, parts))
    }
}

/// One-shot form of [`BatchSampler::sample`].
pub fn sample_batch<R: Rng>(
    dataset: &Dataset,
    split: Split,
    batch_size: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    BatchSampler::new(dataset, split).sample(batch_size, rng)
}

/// Everything needed to continue a run bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: EncoderParams<f32>,
    pub optimizer: Adam<f32>,
    pub rng: RngState,
    /// Loss of every completed step, in order.
    pub history: Vec<f32>,
}

impl TrainState {
    pub fn new(config: &TrainConfig, init: EncoderParams<f32>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        Self {
            optimizer: Adam::new(config.adam(), &init),
            params: init,
            rng: RngState::capture(&rng),
            history: Vec::new(),
        }
    }

    pub fn step(&self) -> u64 {
        self.optimizer.step
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut tensors = params_to_tensors(&self.params);
        for (prefix, moments) in [("optim.m.", &self.optimizer.m), ("optim.v.", &self.optimizer.v)] {
            tensors.extend(
                moments
                    .named_tensors()
                    .into_iter()
                    .map(|(n, t)| (format!("{prefix}{n}"), t.clone())),
            );
        }
        let step = self.optimizer.step;
        tensors.push(("train.step".into(), words_tensor(&[step as u32, (step >> 32) as u32])));
        tensors.push(("train.rng".into(), words_tensor(&self.rng.to_words())));
        tensors.push((
            "train.history".into(),
            Tensor::from_vec(&[self.history.len()], self.history.clone()).expect("rank-1"),
        ));
        encode_tensors(&tensors)
    }

    /// Decodes a full training checkpoint; `adam` supplies hyperparameters for the restored optimizer.
    pub fn decode(bytes: &[u8], adam: AdamConfig) -> Result<Self> {
        let mut map: HashMap<String, Tensor<f32>> = decode_tensors(bytes)?.into_iter().collect();
        let params = params_from_tensors(&mut map, "", None)?;
        let m = params_from_tensors(&mut map, "optim.m.", Some(params.config))?;
        let v = params_from_tensors(&mut map, "optim.v.", Some(params.config))?;
        let mut take = |name: &str| {
            map.remove(name)
                .ok_or_else(|| Error::SchemaError(format!("checkpoint lacks {name}; not a training state")))
        };
        let step_words = tensor_words(&take("train.step")?);
        if step_words.len() != 2 {
            return Err(Error::SchemaError("malformed train.step".into()));
        }
        let step = step_words[0] as u64 | (step_words[1] as u64) << 32;
        let rng = RngState::from_words(&tensor_words(&take("train.rng")?))?;
        let history = take("train.history")?.into_data();
        if history.len() as u64 != step {
            return Err(Error::SchemaError(format!(
                "history has {} entries for step {step}",
                history.len()
            )));
        }
        Ok(Self {
            params,
            optimizer: Adam {
                config: adam,
                step,
                m,
                v,
            },
            rng,
            history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path, adam: AdamConfig) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::decode(&bytes, adam)
    }
}

/// Runs updates until `state` has completed `until` steps in total.
/// `on_step` sees each completed step index (1-based) and its loss.
pub fn train_until(
    config: &TrainConfig,
    dataset: &Dataset,
    state: &mut TrainState,
    until: u64,
    mut on_step: impl FnMut(u64, f32),
) -> Result<()> {
    config.validate()?;
    let sampler = BatchSampler::new(dataset, Split::Train);
    if sampler.distinct_materials() == 0 {
        return Err(Error::InvalidConfig("dataset has no training parts".into()));
    }
    let mut rng = state.rng.restore();
    while state.optimizer.step < until {
        let step = state.optimizer.step + 1;
        let (mats, parts) = sampler.sample(config.batch_size, &mut rng)?;
        let mat_refs: Vec<_> = mats.iter().map(|&i| &dataset.materials[i]).collect();
        let part_refs: Vec<_> = parts.iter().map(|&i| &dataset.parts[i]).collect();
        let batch = Batch::from_samples(&state.params, &mat_refs, &part_refs)?;
        let (loss, grads) = batch_forward_backward_raw(&state.params, &batch)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        state.optimizer.update(&mut state.params, &grads);
        state.history.push(loss);
        on_step(step, loss);
    }
    state.rng = RngState::capture(&rng);
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: EncoderParams<f32>,
    /// `(step, loss)` for every step, 1-based.
    pub history: Vec<(u64, f32)>,
}

pub fn train(config: &TrainConfig, dataset: &Dataset, init: EncoderParams<f32>) -> Result<TrainOutcome> {
    let mut state = TrainState::new(config, init);
    train_until(config, dataset, &mut state, config.steps, |_, _| {})?;
    Ok(TrainOutcome {
        history: history_pairs(&state.history),
        params: state.params,
    })
}

pub fn history_pairs(losses: &[f32]) -> Vec<(u64, f32)> {
    losses.iter().enumerate().map(|(i, &l)| (i as u64 + 1, l)).collect()
}

pub fn history_csv(history: &[(u64, f32)]) -> String {
    let mut out = String::from("step,loss\n");
    for (step, loss) in history {
        writeln!(out, "{step},{loss}").expect("writing to a String");
    }
    out
}
