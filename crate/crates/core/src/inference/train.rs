use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::langevin::{langevin_infer, GeneratorPosterior, LangevinConfig};
use super::optim::{Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig, GeneratorParams};
use crate::rng::{derive_seed, Stream};
use crate::tensor::Tensor;

const TAG_PARAMS: u64 = 0x5041_5241;
const TAG_BANK: u64 = 0x4241_4e4b;
const TAG_SHUFFLE: u64 = 0x5348_5546;
const TAG_FRESH: u64 = 0x4652_5348;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Per-example inference settings; the seed field is replaced per chain.
    pub langevin: LangevinConfig,
    /// Start each chain from the example's banked latent instead of a fresh draw.
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 20,
            learning_rate: 5e-3,
            optimizer: OptimizerKind::default(),
            langevin: LangevinConfig::default(),
            warm_start: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "invalid learning rate {}",
                self.learning_rate
            )));
        }
        self.langevin.validate()
    }
}

/// Persistent per-example latents `Zᵢ`, stored as an `N × d` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBank {
    pub z: Tensor,
}

impl LatentBank {
    pub fn new_random(n: usize, d: usize, seed: u64) -> Self {
        LatentBank {
            z: Stream::new(seed).normal_tensor(&[n, d], 1.0),
        }
    }

    pub fn len(&self) -> usize {
        self.z.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.z.shape()[1]
    }

    pub fn row(&self, i: usize) -> Tensor {
        let d = self.dim();
        Tensor::vector(&self.z.data()[i * d..(i + 1) * d])
    }

    pub fn set_row(&mut self, i: usize, z: &Tensor) {
        let d = self.dim();
        self.z.data_mut()[i * d..(i + 1) * d].copy_from_slice(z.data());
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean over examples of `‖Yᵢ − g(Zᵢ)‖² / D`.
    pub mse: f64,
    pub mean_z_norm2: f64,
    pub wall_ms: u128,
    /// `(mean f(data), mean f(synth))` for cooperative training.
    pub descriptor: Option<(f64, f64)>,
}

impl EpochMetrics {
    pub fn csv_header(cooperative: bool) -> &'static str {
        if cooperative {
            "epoch,mse,mean_z_norm2,wall_ms,mean_f_data,mean_f_synth"
        } else {
            "epoch,mse,mean_z_norm2,wall_ms"
        }
    }

    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{}",
            self.epoch, self.mse, self.mean_z_norm2, self.wall_ms
        );
        if let Some((fd, fs)) = self.descriptor {
            s.push_str(&format!(",{fd},{fs}"));
        }
        s
    }

    /// Same metrics ignoring wall-clock time.
    pub fn same_values(&self, other: &EpochMetrics) -> bool {
        self.epoch == other.epoch
            && self.mse == other.mse
            && self.mean_z_norm2 == other.mean_z_norm2
            && self.descriptor == other.descriptor
    }
}

pub(crate) fn check_dataset(generator: &Generator, data: &[Tensor]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let shape = generator.output_shape();
    for (i, y) in data.iter().enumerate() {
        if y.shape() != shape {
            return Err(Error::Dataset(format!(
                "image {i} has shape {:?}, generator emits {:?}",
                y.shape(),
                shape
            )));
        }
    }
    Ok(())
}

/// Runs the posterior chain for every example of a batch against `targets[i]`, reading
/// start points from a snapshot of the bank and writing the results back afterwards.
pub(crate) fn infer_batch(
    generator: &Generator,
    targets: &[Tensor],
    batch: &[usize],
    bank: &mut LatentBank,
    tcfg: &TrainConfig,
    step_seed: u64,
) -> Result<Vec<Tensor>> {
    let d = generator.latent_dim();
    let mut out = Vec::with_capacity(batch.len());
    for &i in batch {
        if i >= targets.len() || i >= bank.len() {
            return Err(Error::Index(format!(
                "batch index {i} (dataset has {} images)",
                targets.len()
            )));
        }
        let chain_seed = derive_seed(step_seed, i as u64);
        let z0 = if tcfg.warm_start {
            bank.row(i)
        } else {
            Stream::new(derive_seed(chain_seed, TAG_FRESH)).normal_tensor(&[d], 1.0)
        };
        let lcfg = LangevinConfig {
            seed: chain_seed,
            ..tcfg.langevin.clone()
        };
        let posterior = GeneratorPosterior {
            generator,
            y: &targets[i],
        };
        let z = langevin_infer(&posterior, &z0, &lcfg).map_err(|e| e.at_example(i))?;
        out.push(z);
    }
    for (&i, z) in batch.iter().zip(&out) {
        bank.set_row(i, z);
    }
    Ok(out)
}

/// Averages `∂/∂θ log p(Yᵢ, Zᵢ)` over the batch in batch order and takes one ascent step.
pub(crate) fn update_generator(
    generator: &mut Generator,
    optimizer: &mut Optimizer,
    latents: &[Tensor],
    targets: &[&Tensor],
    lr: f64,
) -> Result<GeneratorParams> {
    let mut acc = generator.params.zeros_like();
    for (z, y) in latents.iter().zip(targets) {
        acc.add_scaled(&generator.grad_theta(z, y)?, 1.0)?;
    }
    acc.scale(1.0 / latents.len() as f64);
    optimizer.step(generator.params.tensors_mut(), acc.tensors(), lr)?;
    Ok(acc)
}

/// One Monte-Carlo EM step: infer `Zᵢ` for each example of the batch, then ascend the
/// batch-mean of `∂/∂θ log p(Yᵢ, Zᵢ)`. Returns the averaged gradient that was applied.
pub fn mle_step(
    generator: &mut Generator,
    data: &[Tensor],
    batch: &[usize],
    bank: &mut LatentBank,
    tcfg: &TrainConfig,
    optimizer: &mut Optimizer,
    step_seed: u64,
) -> Result<GeneratorParams> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let latents = infer_batch(generator, data, batch, bank, tcfg, step_seed)?;
    let targets: Vec<&Tensor> = batch.iter().map(|&i| &data[i]).collect();
    update_generator(generator, optimizer, &latents, &targets, tcfg.learning_rate)
}

/// Mean reconstruction error and mean latent norm² over the whole set with banked latents.
pub fn evaluate(generator: &Generator, data: &[Tensor], bank: &LatentBank) -> Result<(f64, f64)> {
    let mut mse = 0.0;
    let mut zn = 0.0;
    let dlen = generator.output_len() as f64;
    for (i, y) in data.iter().enumerate() {
        let z = bank.row(i);
        let g = generator.generate(&z)?;
        mse += g.sub(y)?.norm_sq() / dlen;
        zn += z.norm_sq();
    }
    let n = data.len() as f64;
    Ok((mse / n, zn / n))
}

/// Seed used for epoch `epoch` (1-based).
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    derive_seed(seed, epoch as u64)
}

/// Epoch order: a seeded shuffle chunked into minibatches.
pub(crate) fn epoch_batches(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    Stream::new(derive_seed(seed, TAG_SHUFFLE)).shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Complete training state; everything needed to resume lives here.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub generator: Generator,
    pub config: TrainConfig,
    pub optimizer: Optimizer,
    pub bank: LatentBank,
    pub seed: u64,
    /// Seeds of the completed epochs, in order.
    pub epoch_seeds: Vec<u64>,
}

impl Trainer {
    pub fn new(
        gcfg: GeneratorConfig,
        tcfg: TrainConfig,
        n_examples: usize,
        seed: u64,
    ) -> Result<Self> {
        tcfg.validate()?;
        let generator = Generator::init(gcfg, derive_seed(seed, TAG_PARAMS))?;
        let bank = LatentBank::new_random(
            n_examples,
            generator.latent_dim(),
            derive_seed(seed, TAG_BANK),
        );
        Ok(Trainer {
            generator,
            optimizer: Optimizer::new(tcfg.optimizer),
            config: tcfg,
            bank,
            seed,
            epoch_seeds: Vec::new(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch_seeds.len()
    }

    pub fn run_epoch(&mut self, data: &[Tensor]) -> Result<EpochMetrics> {
        check_dataset(&self.generator, data)?;
        if self.bank.len() != data.len() {
            return Err(Error::Dataset(format!(
                "latent bank has {} rows but the dataset has {} images",
                self.bank.len(),
                data.len()
            )));
        }
        let start = Instant::now();
        let epoch = self.epochs_done() + 1;
        let eseed = epoch_seed(self.seed, epoch);
        for (b, batch) in epoch_batches(data.len(), self.config.batch_size, eseed)
            .iter()
            .enumerate()
        {
            mle_step(
                &mut self.generator,
                data,
                batch,
                &mut self.bank,
                &self.config,
                &mut self.optimizer,
                derive_seed(eseed, b as u64 + 1),
            )?;
        }
        let (mse, mean_z_norm2) = evaluate(&self.generator, data, &self.bank)?;
        self.epoch_seeds.push(eseed);
        Ok(EpochMetrics {
            epoch,
            mse,
            mean_z_norm2,
            wall_ms: start.elapsed().as_millis(),
            descriptor: None,
        })
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub metrics: Vec<EpochMetrics>,
}

/// A training run that stopped early; `trainer` holds the state at the failure, or is
/// `None` when nothing was computed.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    pub trainer: Option<Box<Trainer>>,
    pub metrics: Vec<EpochMetrics>,
}

impl std::fmt::Display for TrainAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "training aborted after {} epochs: {}",
            self.metrics.len(),
            self.error
        )
    }
}

impl std::error::Error for TrainAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Trains for `tcfg.epochs` epochs from a fresh initialization.
pub fn train(
    data: &[Tensor],
    gcfg: GeneratorConfig,
    tcfg: TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, Box<TrainAbort>> {
    let early = |error| {
        Box::new(TrainAbort {
            error,
            trainer: None,
            metrics: Vec::new(),
        })
    };
    let trainer = Trainer::new(gcfg, tcfg, data.len(), seed).map_err(early)?;
    check_dataset(&trainer.generator, data).map_err(early)?;
    resume(trainer, data)
}

/// Continues training until `trainer.config.epochs` epochs are done.
pub fn resume(mut trainer: Trainer, data: &[Tensor]) -> Result<TrainOutcome, Box<TrainAbort>> {
    let mut metrics = Vec::new();
    while trainer.epochs_done() < trainer.config.epochs {
        match trainer.run_epoch(data) {
            Ok(m) => {
                log::info!(
                    "epoch {} mse {:.6} |z|² {:.3}",
                    m.epoch,
                    m.mse,
                    m.mean_z_norm2
                );
                metrics.push(m);
            }
            Err(error) => {
                return Err(Box::new(TrainAbort {
                    error,
                    trainer: Some(Box::new(trainer)),
                    metrics,
                }))
            }
        }
    }
    Ok(TrainOutcome { trainer, metrics })
}

/// `n` images `g(Z)` with `Z ~ N(0, I)` drawn from one seeded stream, so shorter requests
/// are prefixes of longer ones.
pub fn sample_prior(generator: &Generator, n: usize, seed: u64) -> Result<Vec<Tensor>> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let mut s = Stream::new(seed);
    (0..n)
        .map(|_| {
            let z = s.normal_tensor(&[generator.latent_dim()], 1.0);
            generator.generate(&z)
        })
        .collect()
}
