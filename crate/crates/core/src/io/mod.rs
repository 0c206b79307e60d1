//! Files: checkpoints, datasets, image grids, the synthetic corpus and run configs.

mod checkpoint;
mod config;
mod dataset;
mod grid;
mod synth;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Dtype, FORMAT_VERSION, MAGIC,
};
pub use config::RunConfig;
pub use dataset::{center_crop, load_dataset, prepare_image, read_image, resize_bilinear, Dataset};
pub use grid::{encode_ppm, rasterize, render_grid, write_image, ImageGrid, Normalization};
pub use synth::{synthetic_corpus, synthetic_image, write_corpus};
