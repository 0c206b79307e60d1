use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sgao::descriptor::{coop_resume, CoopTrainer};
use sgao::grammar::{atlas_sidecar_json, basis_atlas, export_parse_graph, parse_graph};
use sgao::inference::{
    langevin_infer, resume, sample_prior, EpochMetrics, GeneratorPosterior, LangevinConfig, Trainer,
};
use sgao::io::{
    load_checkpoint, load_dataset, prepare_image, read_image, render_grid, save_checkpoint,
    synthetic_corpus, write_corpus, Checkpoint, Dtype, ImageGrid, Normalization, RunConfig,
};
use sgao::rng::{derive_seed, Stream};
use sgao::viz::kernel_cells;
use sgao::{Generator, Tensor};

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(
    name = "sgao",
    version,
    about = "Sparse-activation generator: training, sampling and parse graphs"
)]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON run config with optional `generator`, `train` and `descriptor` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a generator by alternating Langevin inference and parameter updates.
    Train(TrainArgs),
    /// Train a generator and a descriptor cooperatively.
    CoopTrain(TrainArgs),
    /// Draw images from the prior.
    Sample(SampleArgs),
    /// Infer latents for images and regenerate them.
    Reconstruct(ReconstructArgs),
    /// Write the parse graph of one latent as JSON.
    Parse(ParseArgs),
    /// Render the H and B bases of one feature map.
    Bases(BasesArgs),
    /// Render the deconvolution kernels of every layer.
    Kernels(CheckpointArg),
    /// Print checkpoint metadata.
    Info(CheckpointArg),
    /// Write the procedural rectangle-and-stroke corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Directory of PPM/PGM/PNG images.
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    data: Option<PathBuf>,
    /// Use N procedurally generated images instead of a directory.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Load at most this many images.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

impl From<Precision> for Dtype {
    fn from(p: Precision) -> Dtype {
        match p {
            Precision::F32 => Dtype::F32,
            Precision::F64 => Dtype::F64,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Overrides `train.epochs`.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides `train.batch_size`.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Overrides `train.learning_rate`.
    #[arg(long)]
    lr: Option<f64>,
    /// Continue from a checkpoint written by a previous run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stored precision of checkpoint tensors.
    #[arg(long, value_enum, default_value = "f32")]
    precision: Precision,
}

#[derive(Args)]
struct CheckpointArg {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of images.
    #[arg(short = 'n', long, default_value_t = 16)]
    n: usize,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Langevin steps per image.
    #[arg(long, default_value_t = 200)]
    steps: usize,
}

#[derive(Args)]
struct LatentArgs {
    /// Latent vector as comma-separated values.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        conflicts_with = "image"
    )]
    z: Option<Vec<f64>>,
    /// Infer the latent of this image instead.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Langevin steps when inferring from an image.
    #[arg(long, default_value_t = 200)]
    steps: usize,
}

#[derive(Args)]
struct ParseArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    latent: LatentArgs,
}

#[derive(Args)]
struct BasesArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Feature map, 1-based (1 is the FC output).
    #[arg(long, default_value_t = 2)]
    layer: usize,
    #[command(flatten)]
    latent: LatentArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of images.
    #[arg(short = 'n', long, default_value_t = 200)]
    n: usize,
    /// Side length in pixels.
    #[arg(long, default_value_t = 16)]
    size: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    fs::create_dir_all(&cli.out).map_err(|e| format!("{}: {e}", cli.out.display()))?;
    match cli.command {
        Command::Train(a) => train(&cli.out, cfg, cli.seed, a, false),
        Command::CoopTrain(a) => train(&cli.out, cfg, cli.seed, a, true),
        Command::Sample(a) => sample(&cli.out, cli.seed, a),
        Command::Reconstruct(a) => reconstruct(&cli.out, cli.seed, a),
        Command::Parse(a) => parse(&cli.out, cli.seed, a),
        Command::Bases(a) => bases(&cli.out, cli.seed, a),
        Command::Kernels(a) => kernels(&cli.out, &load_generator(&a.checkpoint)?),
        Command::Info(a) => info(&a.checkpoint),
        Command::Synth(a) => {
            let paths = write_corpus(&cli.out, &synthetic_corpus(a.n, a.size, cli.seed))?;
            println!("wrote {} images to {}", paths.len(), cli.out.display());
            Ok(())
        }
    }
}

fn load_generator(path: &Path) -> CliResult<Generator> {
    Ok(load_checkpoint(path)?.generator()?)
}

fn load_images(d: &DataArgs, generator: &Generator, seed: u64) -> CliResult<Vec<Tensor>> {
    let [w, h, _] = generator.output_shape();
    if let Some(n) = d.synthetic {
        if w != h {
            return Err(
                format!("synthetic images are square but the generator emits {w}×{h}").into(),
            );
        }
        let n = d.limit.map_or(n, |l| l.min(n));
        return Ok(synthetic_corpus(n, w, seed));
    }
    let dir = d
        .data
        .as_ref()
        .expect("clap requires --data or --synthetic");
    if w != h {
        return Err(
            format!("dataset images are cropped square but the generator emits {w}×{h}").into(),
        );
    }
    let ds = load_dataset(dir, w, d.limit)?;
    log::info!("loaded {} images from {}", ds.images.len(), dir.display());
    Ok(ds.images)
}

fn write_metrics(
    path: &Path,
    metrics: &[EpochMetrics],
    cooperative: bool,
    append: bool,
) -> CliResult {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    if !append {
        writeln!(f, "{}", EpochMetrics::csv_header(cooperative))?;
    }
    for m in metrics {
        writeln!(f, "{}", m.csv_row())?;
    }
    Ok(())
}

fn train(out: &Path, cfg: RunConfig, seed: u64, a: TrainArgs, cooperative: bool) -> CliResult {
    let mut tcfg = cfg.train.clone();
    if let Some(e) = a.epochs {
        tcfg.epochs = e;
    }
    if let Some(b) = a.batch_size {
        tcfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        tcfg.learning_rate = lr;
    }
    tcfg.validate()?;
    let dtype = Dtype::from(a.precision);
    let resumed = a.resume.is_some();

    let probe = Generator::init(cfg.generator.clone(), 0)?;
    let data = load_images(&a.data, &probe, seed)?;
    let metrics_path = out.join("metrics.csv");
    let ckpt_path = out.join("checkpoint.sgao");

    if cooperative {
        let mut trainer = match &a.resume {
            Some(p) => load_checkpoint(p)?.coop_trainer()?,
            None => CoopTrainer::new(
                cfg.generator,
                tcfg.clone(),
                cfg.descriptor,
                data.len(),
                seed,
            )?,
        };
        trainer.trainer.config.epochs = tcfg.epochs;
        match coop_resume(trainer, &data) {
            Ok(done) => {
                write_metrics(&metrics_path, &done.metrics, true, resumed)?;
                save_checkpoint(&ckpt_path, &Checkpoint::from_coop(&done.trainer), dtype)?;
                kernels(out, &done.trainer.trainer.generator)?;
                report(&done.metrics, &ckpt_path);
                Ok(())
            }
            Err(abort) => {
                write_metrics(&metrics_path, &abort.metrics, true, resumed)?;
                if let Some(t) = &abort.trainer {
                    save_checkpoint(
                        &out.join("checkpoint_partial.sgao"),
                        &Checkpoint::from_coop(t),
                        dtype,
                    )?;
                }
                Err(abort)
            }
        }
    } else {
        let mut trainer = match &a.resume {
            Some(p) => load_checkpoint(p)?.trainer()?,
            None => Trainer::new(cfg.generator, tcfg.clone(), data.len(), seed)?,
        };
        trainer.config.epochs = tcfg.epochs;
        match resume(trainer, &data) {
            Ok(done) => {
                write_metrics(&metrics_path, &done.metrics, false, resumed)?;
                save_checkpoint(&ckpt_path, &Checkpoint::from_trainer(&done.trainer), dtype)?;
                kernels(out, &done.trainer.generator)?;
                report(&done.metrics, &ckpt_path);
                Ok(())
            }
            Err(abort) => {
                write_metrics(&metrics_path, &abort.metrics, false, resumed)?;
                if let Some(t) = &abort.trainer {
                    save_checkpoint(
                        &out.join("checkpoint_partial.sgao"),
                        &Checkpoint::from_trainer(t),
                        dtype,
                    )?;
                }
                Err(abort)
            }
        }
    }
}

fn report(metrics: &[EpochMetrics], ckpt: &Path) {
    if let (Some(first), Some(last)) = (metrics.first(), metrics.last()) {
        println!(
            "epochs {}..{}: mse {:.6} -> {:.6}; checkpoint {}",
            first.epoch,
            last.epoch,
            first.mse,
            last.mse,
            ckpt.display()
        );
    } else {
        println!("nothing to do; checkpoint {}", ckpt.display());
    }
}

fn sample(out: &Path, seed: u64, a: SampleArgs) -> CliResult {
    let generator = load_generator(&a.checkpoint)?;
    let images = sample_prior(&generator, a.n, seed)?;
    let path = out.join("samples.ppm");
    render_grid(
        &ImageGrid::new(images, None, 1, Normalization::Fixed)?,
        &path,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn infer(generator: &Generator, y: &Tensor, steps: usize, seed: u64) -> CliResult<Tensor> {
    let z0 = Stream::new(derive_seed(seed, 0)).normal_tensor(&[generator.latent_dim()], 1.0);
    let lcfg = LangevinConfig {
        steps,
        seed: derive_seed(seed, 1),
        ..LangevinConfig::default()
    };
    Ok(langevin_infer(
        &GeneratorPosterior { generator, y },
        &z0,
        &lcfg,
    )?)
}

fn reconstruct(out: &Path, seed: u64, a: ReconstructArgs) -> CliResult {
    let generator = load_generator(&a.checkpoint)?;
    let images = load_images(&a.data, &generator, seed)?;
    let mut cells = Vec::with_capacity(2 * images.len());
    let mut mse = 0.0;
    for (i, y) in images.iter().enumerate() {
        let z = infer(&generator, y, a.steps, derive_seed(seed, i as u64))?;
        let r = generator.generate(&z)?;
        mse += r.sub(y)?.norm_sq() / r.numel() as f64;
        cells.push(y.clone());
        cells.push(r);
    }
    let path = out.join("reconstructions.ppm");
    render_grid(
        &ImageGrid::new(cells, Some(2), 1, Normalization::Fixed)?,
        &path,
    )?;
    println!(
        "mean mse {:.6} over {} images; wrote {}",
        mse / images.len() as f64,
        images.len(),
        path.display()
    );
    Ok(())
}

fn latent(generator: &Generator, a: &LatentArgs, seed: u64) -> CliResult<Tensor> {
    if let Some(z) = &a.z {
        if z.len() != generator.latent_dim() {
            return Err(format!(
                "--z has {} values, latent dimension is {}",
                z.len(),
                generator.latent_dim()
            )
            .into());
        }
        return Ok(Tensor::vector(z));
    }
    if let Some(p) = &a.image {
        let [w, _, _] = generator.output_shape();
        let y = prepare_image(&read_image(p)?, w);
        return infer(generator, &y, a.steps, seed);
    }
    Ok(Stream::new(seed).normal_tensor(&[generator.latent_dim()], 1.0))
}

fn parse(out: &Path, seed: u64, a: ParseArgs) -> CliResult {
    let generator = load_generator(&a.checkpoint)?;
    let z = latent(&generator, &a.latent, seed)?;
    let pg = parse_graph(&generator.trace(&z)?)?;
    let path = out.join("parse_graph.json");
    fs::write(&path, export_parse_graph(&pg)?).map_err(|e| format!("{}: {e}", path.display()))?;
    for l in &pg.layers {
        println!(
            "layer {}: {} AND nodes, {} activations",
            l.layer,
            l.and_nodes.len(),
            l.k_total
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn bases(out: &Path, seed: u64, a: BasesArgs) -> CliResult {
    let generator = load_generator(&a.checkpoint)?;
    let maps = generator.config.num_sparse_maps();
    if a.layer == 0 || a.layer > maps {
        return Err(format!("--layer must be in 1..={maps}").into());
    }
    let z = latent(&generator, &a.latent, seed)?;
    let trace = generator.trace(&z)?;
    let atlas = basis_atlas(&generator, &trace, a.layer - 1)?;
    if atlas.entries.is_empty() {
        return Err(format!(
            "feature map {} has no surviving activations for this latent",
            a.layer
        )
        .into());
    }
    let l = a.layer;
    let h_path = out.join(format!("bases_h_layer{l}.ppm"));
    let b_path = out.join(format!("bases_b_layer{l}.ppm"));
    let h_cells: Vec<Tensor> = atlas.entries.iter().map(|e| e.h.clone()).collect();
    let b_cells: Vec<Tensor> = atlas.entries.iter().map(|e| e.b.clone()).collect();
    // H bases of an upper map are feature maps, not images; show their channel mean.
    let h_cells = if h_cells[0].shape()[2] == 3 {
        h_cells
    } else {
        h_cells.iter().map(channel_mean).collect()
    };
    render_grid(
        &ImageGrid::new(h_cells, None, 1, Normalization::PerCell)?,
        &h_path,
    )?;
    render_grid(
        &ImageGrid::new(b_cells, None, 1, Normalization::PerCell)?,
        &b_path,
    )?;
    let side = out.join(format!("bases_layer{l}.json"));
    fs::write(&side, atlas_sidecar_json(&atlas)?)
        .map_err(|e| format!("{}: {e}", side.display()))?;
    println!(
        "{} bases; wrote {}, {}, {}",
        atlas.entries.len(),
        h_path.display(),
        b_path.display(),
        side.display()
    );
    Ok(())
}

fn channel_mean(t: &Tensor) -> Tensor {
    let s = t.shape();
    let (w, h, c) = (s[0], s[1], s[2]);
    let mut m = Tensor::zeros(&[w, h, 1]);
    for x in 0..w {
        for y in 0..h {
            let v: f64 = (0..c).map(|ch| t.get(&[x, y, ch])).sum();
            m.set(&[x, y, 0], v / c as f64);
        }
    }
    m
}

fn kernels(out: &Path, generator: &Generator) -> CliResult {
    for layer in 0..generator.config.layers.len() {
        let path = out.join(format!("kernels_layer{}.ppm", layer + 1));
        render_grid(
            &ImageGrid::new(
                kernel_cells(generator, layer)?,
                None,
                1,
                Normalization::PerCell,
            )?,
            &path,
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn info(path: &Path) -> CliResult {
    let ck = load_checkpoint(path)?;
    let g = &ck.meta.generator;
    println!("checkpoint: {}", path.display());
    println!("latent dim: {}", g.latent_dim);
    let shapes = g.feature_shapes()?;
    for (i, (s, k)) in shapes.iter().zip(&g.top_k).enumerate() {
        println!(
            "feature map {}: {}x{}x{} (top-k {k})",
            i + 1,
            s[0],
            s[1],
            s[2]
        );
    }
    for (i, l) in g.layers.iter().enumerate() {
        println!(
            "deconv{}: kernel {} stride {} pad {} -> {} channels",
            i + 1,
            l.kernel,
            l.stride,
            l.pad,
            l.out_channels
        );
    }
    let o = g.output_shape()?;
    println!("image: {}x{}x{}", o[0], o[1], o[2]);
    println!("sigma: {}", g.sigma);
    println!("epoch: {}", ck.meta.epoch);
    println!("seed: {}", ck.meta.seed);
    println!("optimizer steps: {}", ck.meta.optimizer_steps);
    println!(
        "descriptor: {}",
        if ck.meta.descriptor.is_some() {
            "yes"
        } else {
            "no"
        }
    );
    Ok(())
}
