//! Cooperative training: descriptor samples replace the data targets in the generator
//! update, while latent inference still targets the observed images.

use std::time::Instant;

use super::{descriptor_step, langevin_sample_images, mean_score, Descriptor, DescriptorConfig};
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::inference::{
    check_dataset, epoch_batches, epoch_seed, evaluate, infer_batch, update_generator,
    EpochMetrics, TrainConfig, Trainer,
};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

const TAG_DESCRIPTOR: u64 = 0x4445_5343;
const TAG_SYNTH: u64 = 0x5359_4e54;

/// Generator training state plus the descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct CoopTrainer {
    pub trainer: Trainer,
    pub descriptor: Descriptor,
}

impl CoopTrainer {
    pub fn new(
        gcfg: GeneratorConfig,
        tcfg: TrainConfig,
        dcfg: DescriptorConfig,
        n_examples: usize,
        seed: u64,
    ) -> Result<Self> {
        let trainer = Trainer::new(gcfg, tcfg, n_examples, seed)?;
        let descriptor = Descriptor::init(
            dcfg,
            trainer.generator.output_shape(),
            derive_seed(seed, TAG_DESCRIPTOR),
        )?;
        Ok(CoopTrainer {
            trainer,
            descriptor,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.trainer.epochs_done()
    }

    /// One cooperative step over a batch; each stage's error carries its label.
    pub fn step(
        &mut self,
        data: &[Tensor],
        batch: &[usize],
        step_seed: u64,
    ) -> Result<Vec<Tensor>> {
        let t = &mut self.trainer;
        let latents = infer_batch(&t.generator, data, batch, &mut t.bank, &t.config, step_seed)
            .map_err(|e| e.at_stage("infer"))?;
        let generated = latents
            .iter()
            .map(|z| t.generator.generate(z))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_stage("generate"))?;
        let synth = langevin_sample_images(
            &self.descriptor,
            &generated,
            &self.descriptor.config,
            derive_seed(step_seed, TAG_SYNTH),
        )
        .map_err(|e| e.at_stage("sample"))?;
        let observed: Vec<&Tensor> = batch.iter().map(|&i| &data[i]).collect();
        let synth_refs: Vec<&Tensor> = synth.iter().collect();
        let lr = self.descriptor.config.learning_rate;
        descriptor_step(&mut self.descriptor, &observed, &synth_refs, lr)
            .map_err(|e| e.at_stage("descriptor"))?;
        update_generator(
            &mut t.generator,
            &mut t.optimizer,
            &latents,
            &synth_refs,
            t.config.learning_rate,
        )
        .map_err(|e| e.at_stage("generator"))?;
        Ok(synth)
    }

    /// Runs one epoch. The descriptor metrics are the mean score over the dataset and
    /// over the epoch's synthesized targets, both under the end-of-epoch descriptor.
    pub fn run_epoch(&mut self, data: &[Tensor]) -> Result<EpochMetrics> {
        check_dataset(&self.trainer.generator, data)?;
        if self.trainer.bank.len() != data.len() {
            return Err(Error::Dataset(format!(
                "latent bank has {} rows but the dataset has {} images",
                self.trainer.bank.len(),
                data.len()
            )));
        }
        let start = Instant::now();
        let epoch = self.epochs_done() + 1;
        let eseed = epoch_seed(self.trainer.seed, epoch);
        let mut synthesized = Vec::with_capacity(data.len());
        for (b, batch) in epoch_batches(data.len(), self.trainer.config.batch_size, eseed)
            .iter()
            .enumerate()
        {
            synthesized.extend(self.step(data, batch, derive_seed(eseed, b as u64 + 1))?);
        }
        let (mse, mean_z_norm2) = evaluate(&self.trainer.generator, data, &self.trainer.bank)?;
        let f_data = mean_score(&self.descriptor, data)?;
        let f_synth = mean_score(&self.descriptor, &synthesized)?;
        self.trainer.epoch_seeds.push(eseed);
        Ok(EpochMetrics {
            epoch,
            mse,
            mean_z_norm2,
            wall_ms: start.elapsed().as_millis(),
            descriptor: Some((f_data, f_synth)),
        })
    }
}

#[derive(Debug)]
pub struct CoopOutcome {
    pub trainer: CoopTrainer,
    pub metrics: Vec<EpochMetrics>,
}

#[derive(Debug)]
pub struct CoopAbort {
    pub error: Error,
    pub trainer: Option<Box<CoopTrainer>>,
    pub metrics: Vec<EpochMetrics>,
}

impl std::fmt::Display for CoopAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "cooperative training aborted after {} epochs: {}",
            self.metrics.len(),
            self.error
        )
    }
}

impl std::error::Error for CoopAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub fn coop_train(
    data: &[Tensor],
    gcfg: GeneratorConfig,
    tcfg: TrainConfig,
    dcfg: DescriptorConfig,
    seed: u64,
) -> Result<CoopOutcome, Box<CoopAbort>> {
    let early = |error| {
        Box::new(CoopAbort {
            error,
            trainer: None,
            metrics: Vec::new(),
        })
    };
    let trainer = CoopTrainer::new(gcfg, tcfg, dcfg, data.len(), seed).map_err(early)?;
    check_dataset(&trainer.trainer.generator, data).map_err(early)?;
    coop_resume(trainer, data)
}

pub fn coop_resume(
    mut trainer: CoopTrainer,
    data: &[Tensor],
) -> Result<CoopOutcome, Box<CoopAbort>> {
    let mut metrics = Vec::new();
    while trainer.epochs_done() < trainer.trainer.config.epochs {
        match trainer.run_epoch(data) {
            Ok(m) => {
                if let Some((fd, fs)) = m.descriptor {
                    log::info!(
                        "epoch {} mse {:.6} f(data) {fd:.4} f(synth) {fs:.4}",
                        m.epoch,
                        m.mse
                    );
                }
                metrics.push(m);
            }
            Err(error) => {
                return Err(Box::new(CoopAbort {
                    error,
                    trainer: Some(Box::new(trainer)),
                    metrics,
                }))
            }
        }
    }
    Ok(CoopOutcome { trainer, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::DescriptorParams;
    use crate::generator::DeconvSpec;
    use crate::rng::Stream;

    fn gcfg() -> GeneratorConfig {
        GeneratorConfig {
            latent_dim: 3,
            fc_shape: [2, 2, 4],
            layers: vec![DeconvSpec {
                kernel: 4,
                stride: 2,
                pad: 1,
                out_channels: 3,
            }],
            top_k: vec![6],
            sigma: 0.3,
        }
    }

    fn dcfg() -> DescriptorConfig {
        DescriptorConfig {
            convs: vec![super::super::ConvSpec {
                kernel: 2,
                stride: 2,
                pad: 0,
                out_channels: 4,
            }],
            ..DescriptorConfig::default()
        }
    }

    fn tcfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 3,
            ..TrainConfig::default()
        }
    }

    fn data(n: usize) -> Vec<Tensor> {
        let mut s = Stream::new(77);
        (0..n)
            .map(|_| s.normal_tensor(&[4, 4, 3], 0.4).map(f64::tanh))
            .collect()
    }

    #[test]
    fn deterministic_metrics() {
        let d = data(5);
        let a = coop_train(&d, gcfg(), tcfg(2), dcfg(), 9).unwrap();
        let b = coop_train(&d, gcfg(), tcfg(2), dcfg(), 9).unwrap();
        assert_eq!(a.metrics.len(), 2);
        for (x, y) in a.metrics.iter().zip(&b.metrics) {
            assert!(x.same_values(y));
            assert!(x.descriptor.is_some());
        }
        assert_eq!(a.trainer, b.trainer);
    }

    #[test]
    fn zero_step_zero_descriptor_freezes_generator() {
        // Synthesized targets equal the generator's own outputs, so its gradient vanishes.
        let d = data(4);
        let cfg = DescriptorConfig { steps: 0, ..dcfg() };
        let mut t = CoopTrainer::new(gcfg(), tcfg(1), cfg.clone(), d.len(), 1).unwrap();
        t.descriptor.params = DescriptorParams::zeros(&cfg, [4, 4, 3]).unwrap();
        let before = t.trainer.generator.params.clone();
        let bank_before = t.trainer.bank.clone();
        let synth = t.step(&d, &[0, 2], 5).unwrap();
        assert_eq!(t.trainer.generator.params, before);
        assert_ne!(t.trainer.bank, bank_before);
        for (i, y) in [0, 2].iter().zip(&synth) {
            assert_eq!(
                *y,
                t.trainer
                    .generator
                    .generate(&t.trainer.bank.row(*i))
                    .unwrap()
            );
        }
    }

    #[test]
    fn stage_errors_are_labelled() {
        let d = data(3);
        let mut t = CoopTrainer::new(gcfg(), tcfg(1), dcfg(), d.len(), 1).unwrap();
        let err = t.step(&d, &[7], 0).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "infer", .. }), "{err}");
    }
}
