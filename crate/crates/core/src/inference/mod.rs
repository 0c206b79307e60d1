//! Posterior sampling of the latent vector and Monte-Carlo maximum-likelihood learning.

mod langevin;
mod linear;
mod optim;
mod train;

pub use langevin::{
    langevin_infer, langevin_run, GeneratorPosterior, LangevinConfig, LatentPosterior,
    DIVERGENCE_NORM,
};
pub use linear::{
    posterior_moment_check, LinearGaussianModel, MomentReport, MOMENT_MEAN_SIGMAS,
    MOMENT_VAR_REL_TOL,
};
pub use optim::{Optimizer, OptimizerKind};
pub(crate) use train::{check_dataset, epoch_batches, infer_batch, update_generator};
pub use train::{
    epoch_seed, evaluate, mle_step, resume, sample_prior, train, EpochMetrics, LatentBank,
    TrainAbort, TrainConfig, TrainOutcome, Trainer,
};
