//! Binary checkpoint: `"SGAO"`, little-endian `u32` version, `u64` header length, a JSON
//! header (metadata and tensor manifest), then the tensor blobs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptor::{CoopTrainer, Descriptor, DescriptorConfig, DescriptorParams};
use crate::error::{CheckpointError, Error, Result};
use crate::generator::{Generator, GeneratorConfig, GeneratorParams};
use crate::inference::{LatentBank, Optimizer, TrainConfig, Trainer};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"SGAO";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 16;
const BANK: &str = "bank.z";

/// Stored element type of a tensor blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub descriptor: Option<DescriptorConfig>,
    /// Completed epochs.
    pub epoch: usize,
    pub seed: u64,
    pub epoch_seeds: Vec<u64>,
    pub optimizer_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: Dtype,
    /// Byte offset into the blob section.
    offset: u64,
    length: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    metadata: CheckpointMeta,
    tensors: Vec<ManifestEntry>,
}

/// Metadata plus named tensors, in the order they are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<(String, Tensor)>,
}

fn moment_names(prefix: &str, names: &[String]) -> Vec<String> {
    names
        .iter()
        .map(|n| format!("optim.{prefix}.{n}"))
        .collect()
}

impl Checkpoint {
    /// A freshly initialized generator with no training state.
    pub fn from_generator(generator: &Generator, seed: u64) -> Self {
        let tensors = generator
            .params
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        Checkpoint {
            meta: CheckpointMeta {
                generator: generator.config.clone(),
                train: TrainConfig::default(),
                descriptor: None,
                epoch: 0,
                seed,
                epoch_seeds: Vec::new(),
                optimizer_steps: 0,
            },
            tensors,
        }
    }

    pub fn from_trainer(trainer: &Trainer) -> Self {
        let mut ck = Self::from_generator(&trainer.generator, trainer.seed);
        ck.meta.train = trainer.config.clone();
        ck.meta.epoch = trainer.epochs_done();
        ck.meta.epoch_seeds = trainer.epoch_seeds.clone();
        ck.meta.optimizer_steps = trainer.optimizer.step_count;
        let names = trainer.generator.params.names();
        let opt = &trainer.optimizer;
        for (n, t) in moment_names("m", &names).into_iter().zip(&opt.first_moment) {
            ck.tensors.push((n, t.clone()));
        }
        for (n, t) in moment_names("v", &names)
            .into_iter()
            .zip(&opt.second_moment)
        {
            ck.tensors.push((n, t.clone()));
        }
        ck.tensors.push((BANK.into(), trainer.bank.z.clone()));
        ck
    }

    pub fn from_coop(trainer: &CoopTrainer) -> Self {
        let mut ck = Self::from_trainer(&trainer.trainer);
        let d = &trainer.descriptor;
        ck.meta.descriptor = Some(d.config.clone());
        for (n, t) in d.params.names().into_iter().zip(d.params.tensors()) {
            ck.tensors.push((n, t.clone()));
        }
        ck
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CheckpointError::MissingTensor(name.into()).into())
    }

    fn named_map(&self) -> BTreeMap<String, Tensor> {
        self.tensors.iter().cloned().collect()
    }

    pub fn generator(&self) -> Result<Generator> {
        let params = GeneratorParams::from_named(&self.meta.generator, &self.named_map())?;
        Generator::new(self.meta.generator.clone(), params)
    }

    pub fn trainer(&self) -> Result<Trainer> {
        let generator = self.generator()?;
        let mut optimizer = Optimizer::new(self.meta.train.optimizer);
        optimizer.step_count = self.meta.optimizer_steps;
        let names = generator.params.names();
        let has_moments = self.tensors.iter().any(|(n, _)| n.starts_with("optim."));
        if has_moments {
            optimizer.first_moment = moment_names("m", &names)
                .iter()
                .map(|n| self.tensor(n).cloned())
                .collect::<Result<_>>()?;
            optimizer.second_moment = moment_names("v", &names)
                .iter()
                .map(|n| self.tensor(n).cloned())
                .collect::<Result<_>>()?;
        }
        let bank = LatentBank {
            z: self.tensor(BANK)?.clone(),
        };
        if bank.z.rank() != 2 || bank.z.shape()[1] != generator.latent_dim() {
            return Err(CheckpointError::Manifest(format!(
                "{BANK} has shape {:?}, expected [N, {}]",
                bank.z.shape(),
                generator.latent_dim()
            ))
            .into());
        }
        if self.meta.epoch != self.meta.epoch_seeds.len() {
            return Err(CheckpointError::Manifest(format!(
                "epoch {} but {} stored epoch seeds",
                self.meta.epoch,
                self.meta.epoch_seeds.len()
            ))
            .into());
        }
        Ok(Trainer {
            generator,
            config: self.meta.train.clone(),
            optimizer,
            bank,
            seed: self.meta.seed,
            epoch_seeds: self.meta.epoch_seeds.clone(),
        })
    }

    pub fn descriptor(&self) -> Result<Option<Descriptor>> {
        let Some(cfg) = &self.meta.descriptor else {
            return Ok(None);
        };
        let shape = self.meta.generator.output_shape()?;
        let mut params = DescriptorParams::zeros(cfg, shape)?;
        for (name, slot) in params.names().into_iter().zip(params.tensors_mut()) {
            *slot = self.tensor(&name)?.clone();
        }
        Descriptor::new(cfg.clone(), params, shape).map(Some)
    }

    pub fn coop_trainer(&self) -> Result<CoopTrainer> {
        let descriptor = self
            .descriptor()?
            .ok_or_else(|| Error::Config("checkpoint has no descriptor".into()))?;
        Ok(CoopTrainer {
            trainer: self.trainer()?,
            descriptor,
        })
    }

    pub fn to_bytes(&self, dtype: Dtype) -> Result<Vec<u8>> {
        let mut manifest = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            let length = (t.numel() * dtype.size()) as u64;
            manifest.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype,
                offset,
                length,
            });
            offset += length;
        }
        let header = serde_json::to_vec(&Header {
            metadata: self.meta.clone(),
            tensors: manifest,
        })?;
        let mut out = Vec::with_capacity(PREAMBLE + header.len() + offset as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            match dtype {
                Dtype::F32 => t
                    .data()
                    .iter()
                    .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
                Dtype::F64 => t
                    .data()
                    .iter()
                    .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(CheckpointError::TruncatedHeader.into());
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic { found: magic }.into());
        }
        if bytes.len() < PREAMBLE {
            return Err(CheckpointError::TruncatedHeader.into());
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("length checked"));
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                supported: FORMAT_VERSION,
            }
            .into());
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("length checked"));
        let blob_start = (PREAMBLE as u64)
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len() as u64)
            .ok_or(CheckpointError::TruncatedHeader)? as usize;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..blob_start])
            .map_err(|e| CheckpointError::Manifest(format!("header: {e}")))?;
        let blobs = &bytes[blob_start..];
        let available = blobs.len() as u64;

        let mut spans: Vec<(u64, u64, &str)> = Vec::with_capacity(header.tensors.len());
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            if tensors.iter().any(|(n, _): &(String, Tensor)| n == &e.name) {
                return Err(
                    CheckpointError::Manifest(format!("tensor `{}` listed twice", e.name)).into(),
                );
            }
            let numel: usize = e.shape.iter().product();
            if e.shape.is_empty() || numel == 0 || e.length != (numel * e.dtype.size()) as u64 {
                return Err(CheckpointError::Manifest(format!(
                    "tensor `{}`: shape {:?} does not match length {}",
                    e.name, e.shape, e.length
                ))
                .into());
            }
            let end = e.offset.saturating_add(e.length);
            if end > available {
                return Err(CheckpointError::Truncated {
                    tensor: e.name.clone(),
                    start: e.offset,
                    end,
                    available,
                }
                .into());
            }
            spans.push((e.offset, end, &e.name));
            let raw = &blobs[e.offset as usize..end as usize];
            let data: Vec<f64> = match e.dtype {
                Dtype::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                    .collect(),
                Dtype::F64 => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect(),
            };
            tensors.push((e.name.clone(), Tensor::from_vec(&e.shape, data)?));
        }
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(CheckpointError::Manifest(format!(
                    "tensors `{}` and `{}` overlap",
                    w[0].2, w[1].2
                ))
                .into());
            }
        }
        Ok(Checkpoint {
            meta: header.metadata,
            tensors,
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint, dtype: Dtype) -> Result<()> {
    let bytes = checkpoint.to_bytes(dtype)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
