//! Adversarial training loops for the matte and image generators.
//!
//! Every iteration updates the discriminator once and then the generator
//! once. Batches are drawn with a seed derived from `(seed, step)`, so a run
//! resumed from a checkpoint continues exactly like an uninterrupted one.

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{load_dataset, make_training_batch, BatchOptions, SamplePair, TrainingBatch};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_losses, total_s2i_loss, total_s2m_loss, GanMode, LossBreakdown, LossWeights,
    RandomConvExtractor,
};
use crate::nn::{
    images_to_tensor, planes_to_tensor, Adam, AdamConfig, Checkpoint, CheckpointKind, NetConfig,
    PatchDiscriminator, S2INet, S2MNet,
};

/// Seed of the fixed perceptual feature extractor.
pub const EXTRACTOR_SEED: u64 = 0x5eed;
const DISC_SEED_SALT: u64 = 0xd15c;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    S2m,
    S2iUnbraided,
    S2iBraidedFinetune,
}

impl Stage {
    pub fn kind(self) -> CheckpointKind {
        match self {
            Stage::S2m => CheckpointKind::S2m,
            Stage::S2iUnbraided => CheckpointKind::S2iUnbraided,
            Stage::S2iBraidedFinetune => CheckpointKind::S2iBraided,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::InvalidInput(format!("unknown stage {s}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub net: NetConfig,
    pub weights: LossWeights,
    pub gan_mode: GanMode,
    pub lr_g: f64,
    pub lr_d: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub seed: u64,
    /// Write `ckpt_<step>.safetensors` every this many steps; 0 disables.
    pub checkpoint_every: u64,
    pub augment: bool,
    /// Unbraided image checkpoint that the braided fine-tune starts from.
    pub init_checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::S2m,
            net: NetConfig::default(),
            weights: LossWeights::default(),
            gan_mode: GanMode::default(),
            lr_g: 2e-4,
            lr_d: 2e-4,
            batch_size: 1,
            iterations: 100,
            seed: 0,
            checkpoint_every: 0,
            augment: true,
            init_checkpoint: None,
        }
    }
}

/// Batch seed for a given step.
pub fn batch_seed(seed: u64, step: u64) -> u64 {
    let mut z = seed ^ step.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug)]
pub enum Generator {
    Matte(S2MNet),
    Image(S2INet),
}

impl Generator {
    fn params(&self) -> &crate::nn::ParamStore {
        match self {
            Generator::Matte(n) => &n.params,
            Generator::Image(n) => &n.params,
        }
    }
}

/// Networks, optimizers and the step counter of one training run.
#[derive(Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: PatchDiscriminator,
    opt_g: Adam,
    opt_d: Adam,
    extractor: RandomConvExtractor,
    step: u64,
}

fn adam(lr: f64) -> AdamConfig {
    AdamConfig {
        lr,
        ..AdamConfig::default()
    }
}

impl Trainer {
    /// Fresh networks; the braided fine-tune loads its unbraided starting point.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.net.validate()?;
        if config.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        let dtype = DType::F32;
        let disc_in = if config.stage == Stage::S2m { 2 } else { 7 };
        let discriminator = PatchDiscriminator::new(
            disc_in,
            config.net.base_channels,
            config.net.patch_disc_layers,
            config.seed ^ DISC_SEED_SALT,
            dtype,
        )?;
        let generator = match config.stage {
            Stage::S2m => Generator::Matte(S2MNet::new(config.net.clone(), config.seed, dtype)?),
            Stage::S2iUnbraided => {
                Generator::Image(S2INet::new(config.net.clone(), config.seed, dtype)?)
            }
            Stage::S2iBraidedFinetune => {
                let path = config.init_checkpoint.clone().ok_or_else(|| {
                    Error::MissingCheckpoint(PathBuf::from("<unbraided checkpoint>"))
                })?;
                let ck = Checkpoint::load(&path)?;
                if ck.kind != CheckpointKind::S2iUnbraided {
                    return Err(Error::Checkpoint(format!(
                        "fine-tuning starts from an s2i_unbraided checkpoint, got {}",
                        ck.kind.as_str()
                    )));
                }
                if ck.config != config.net {
                    return Err(Error::Checkpoint(
                        "unbraided checkpoint has a different network config".into(),
                    ));
                }
                let disc_params = ck.section("disc");
                if !disc_params.is_empty() {
                    discriminator.params.load(&disc_params)?;
                }
                Generator::Image(S2INet::from_checkpoint(&ck)?)
            }
        };
        Ok(Self {
            opt_g: Adam::new(adam(config.lr_g)),
            opt_d: Adam::new(adam(config.lr_d)),
            extractor: RandomConvExtractor::new(EXTRACTOR_SEED, dtype)?,
            generator,
            discriminator,
            config,
            step: 0,
        })
    }

    /// Completed iterations.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn generator_params(&self) -> &crate::nn::ParamStore {
        self.generator.params()
    }

    /// Indices into `pairs` for the batch of `step`.
    ///
    /// The matte stage alternates braided and unbraided batches; the image
    /// stages only see their own style.
    pub fn select(&self, pairs: &[SamplePair], step: u64) -> Result<Vec<usize>> {
        let braided: Vec<usize> = (0..pairs.len())
            .filter(|&i| pairs[i].meta.style.is_braided())
            .collect();
        let unbraided: Vec<usize> = (0..pairs.len())
            .filter(|&i| !pairs[i].meta.style.is_braided())
            .collect();
        let pool = match self.config.stage {
            Stage::S2m => {
                if braided.is_empty() || (step.is_multiple_of(2) && !unbraided.is_empty()) {
                    unbraided
                } else {
                    braided
                }
            }
            Stage::S2iUnbraided => unbraided,
            Stage::S2iBraidedFinetune => braided,
        };
        if pool.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no training samples for stage {:?}",
                self.config.stage
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(batch_seed(self.config.seed, step) ^ 1);
        let n = self.config.batch_size;
        Ok(if pool.len() >= n {
            pool.choose_multiple(&mut rng, n).copied().collect()
        } else {
            (0..n)
                .map(|_| *pool.choose(&mut rng).expect("non-empty"))
                .collect()
        })
    }

    /// Builds the batch for the next iteration.
    pub fn next_batch(&self, pairs: &[SamplePair]) -> Result<TrainingBatch> {
        let step = self.step + 1;
        let chosen: Vec<SamplePair> = self
            .select(pairs, step)?
            .into_iter()
            .map(|i| pairs[i].clone())
            .collect();
        for p in &chosen {
            if p.dims() != (self.config.net.image_size, self.config.net.image_size) {
                return Err(Error::DimensionMismatch {
                    expected: (self.config.net.image_size, self.config.net.image_size),
                    actual: p.dims(),
                });
            }
        }
        make_training_batch(
            &chosen,
            batch_seed(self.config.seed, step),
            BatchOptions {
                augment: self.config.augment,
            },
        )
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self, batch: &TrainingBatch) -> Result<LossBreakdown> {
        let dtype = self.generator.params().dtype();
        let dev = Device::Cpu;
        let matte = planes_to_tensor(&batch.matte.iter().collect::<Vec<_>>(), dtype, &dev)?;
        let w = self.config.weights;
        let mode = self.config.gan_mode;
        let breakdown = match &self.generator {
            Generator::Matte(net) => {
                let x =
                    planes_to_tensor(&batch.sketch_mono.iter().collect::<Vec<_>>(), dtype, &dev)?;
                let fake = net.forward(&x)?;
                let d_real = self
                    .discriminator
                    .forward(&Tensor::cat(&[&matte, &x], 1)?)?;
                let d_fake = self
                    .discriminator
                    .forward(&Tensor::cat(&[&fake.detach(), &x], 1)?)?;
                let (_, d_loss) = adversarial_losses(&d_real, &d_fake, mode)?;
                let adv_d = d_loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
                if !adv_d.is_finite() {
                    return Err(Error::NonFiniteLoss("adv_d"));
                }
                self.opt_d
                    .step(&self.discriminator.params, &d_loss.backward()?)?;
                let d_fake = self.discriminator.forward(&Tensor::cat(&[&fake, &x], 1)?)?;
                let (total, terms) = total_s2m_loss(&fake, &matte, &d_fake, &w, mode)?;
                let breakdown = terms.breakdown(&w, adv_d)?;
                breakdown.check_finite()?;
                self.opt_g.step(&net.params, &total.backward()?)?;
                breakdown
            }
            Generator::Image(net) => {
                let s =
                    images_to_tensor(&batch.sketch_color.iter().collect::<Vec<_>>(), dtype, &dev)?;
                let bg =
                    images_to_tensor(&batch.background.iter().collect::<Vec<_>>(), dtype, &dev)?;
                let real = images_to_tensor(&batch.image.iter().collect::<Vec<_>>(), dtype, &dev)?;
                let fake = net.forward(&s, &matte, &bg)?;
                let cond = Tensor::cat(&[&s, &matte], 1)?;
                let d_real = self
                    .discriminator
                    .forward(&Tensor::cat(&[&real, &cond], 1)?)?;
                let d_fake = self
                    .discriminator
                    .forward(&Tensor::cat(&[&fake.detach(), &cond], 1)?)?;
                let (_, d_loss) = adversarial_losses(&d_real, &d_fake, mode)?;
                let adv_d = d_loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
                if !adv_d.is_finite() {
                    return Err(Error::NonFiniteLoss("adv_d"));
                }
                self.opt_d
                    .step(&self.discriminator.params, &d_loss.backward()?)?;
                let d_fake = self
                    .discriminator
                    .forward(&Tensor::cat(&[&fake, &cond], 1)?)?;
                let (total, terms) =
                    total_s2i_loss(&fake, &real, &matte, &d_fake, &self.extractor, &w, mode)?;
                let breakdown = terms.breakdown(&w, adv_d)?;
                breakdown.check_finite()?;
                self.opt_g.step(&net.params, &total.backward()?)?;
                breakdown
            }
        };
        self.step += 1;
        Ok(breakdown)
    }

    /// Draws the next batch from `pairs` and trains on it.
    pub fn advance(&mut self, pairs: &[SamplePair]) -> Result<LossBreakdown> {
        let batch = self.next_batch(pairs)?;
        self.train_step(&batch)
    }

    /// Full training state: generator, discriminator and both optimizers.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(self.config.stage.kind(), self.config.net.clone(), self.step);
        ck.insert_all("gen", self.generator.params().tensors());
        ck.insert_all("disc", self.discriminator.params.tensors());
        ck.insert_all("opt_g", self.opt_g.state_tensors());
        ck.insert_all("opt_d", self.opt_d.state_tensors());
        ck.extra
            .insert("train_config".into(), serde_json::to_string(&self.config)?);
        ck.extra
            .insert("opt_g_steps".into(), self.opt_g.steps().to_string());
        ck.extra
            .insert("opt_d_steps".into(), self.opt_d.steps().to_string());
        Ok(ck)
    }

    /// Restores a run saved by [`Trainer::checkpoint`]; `config` may change the
    /// iteration budget and checkpoint cadence but not the model.
    pub fn resume(config: TrainConfig, ck: &Checkpoint) -> Result<Self> {
        if ck.kind != config.stage.kind() || ck.config != config.net {
            return Err(Error::Checkpoint(
                "checkpoint does not match the training config".into(),
            ));
        }
        let dtype = DType::F32;
        let disc_in = if config.stage == Stage::S2m { 2 } else { 7 };
        let discriminator = PatchDiscriminator::new(
            disc_in,
            config.net.base_channels,
            config.net.patch_disc_layers,
            0,
            dtype,
        )?;
        discriminator.params.load(&ck.section("disc"))?;
        let generator = match config.stage {
            Stage::S2m => Generator::Matte(S2MNet::from_checkpoint(ck)?),
            _ => Generator::Image(S2INet::from_checkpoint(ck)?),
        };
        let steps = |k: &str| -> Result<u64> {
            ck.extra
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("missing {k}")))
        };
        Ok(Self {
            opt_g: Adam::from_state(
                adam(config.lr_g),
                steps("opt_g_steps")?,
                &ck.section("opt_g"),
            ),
            opt_d: Adam::from_state(
                adam(config.lr_d),
                steps("opt_d_steps")?,
                &ck.section("opt_d"),
            ),
            extractor: RandomConvExtractor::new(EXTRACTOR_SEED, dtype)?,
            generator,
            discriminator,
            config,
            step: ck.step,
        })
    }
}

/// One record of `train_log.jsonl`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    #[serde(flatten)]
    pub losses: LossBreakdown,
}

pub const FINAL_CHECKPOINT: &str = "final.safetensors";
pub const TRAIN_LOG: &str = "train_log.jsonl";

pub fn periodic_checkpoint_name(step: u64) -> String {
    format!("ckpt_{step:06}.safetensors")
}

/// Trains on `pairs` until `trainer.config.iterations`, logging every step to
/// `out_dir/train_log.jsonl` and writing checkpoints. Returns the final
/// checkpoint path.
pub fn run_loop(trainer: &mut Trainer, pairs: &[SamplePair], out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_dir.join(TRAIN_LOG))?;
    let every = trainer.config.checkpoint_every;
    while trainer.step() < trainer.config.iterations {
        let losses = trainer.advance(pairs)?;
        let step = trainer.step();
        writeln!(
            log,
            "{}",
            serde_json::to_string(&LogRecord { step, losses })?
        )?;
        if every > 0 && step.is_multiple_of(every) && step < trainer.config.iterations {
            trainer
                .checkpoint()?
                .save(out_dir.join(periodic_checkpoint_name(step)))?;
        }
    }
    let path = out_dir.join(FINAL_CHECKPOINT);
    trainer.checkpoint()?.save(&path)?;
    Ok(path)
}

/// Loads the dataset and runs a stage from scratch (or from its unbraided
/// starting point for the braided fine-tune).
pub fn run_stage(config: TrainConfig, dataset_dir: &Path, out_dir: &Path) -> Result<PathBuf> {
    if config.stage == Stage::S2iBraidedFinetune {
        match &config.init_checkpoint {
            Some(p) if p.exists() => {}
            Some(p) => return Err(Error::MissingCheckpoint(p.clone())),
            None => {
                return Err(Error::MissingCheckpoint(PathBuf::from(
                    "<unbraided checkpoint>",
                )))
            }
        }
    }
    let pairs = load_dataset(dataset_dir)?;
    let mut trainer = Trainer::new(config)?;
    run_loop(&mut trainer, &pairs, out_dir)
}

/// Reads `train_log.jsonl`.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
