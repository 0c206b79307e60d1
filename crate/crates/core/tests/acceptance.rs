//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use sgao::descriptor::{
    coop_train, descriptor_step, langevin_sample_images, mean_score, Descriptor, DescriptorConfig,
    ImageScore, ParamScore, QuadraticEnergy,
};
use sgao::generator::{DeconvSpec, LatentLogJoint, ParamLogJoint};
use sgao::grad_check::{grad_check, Differentiable, GradCheckOptions, GradCheckReport};
use sgao::grammar::{
    basis_h, export_parse_graph, import_parse_graph, parse_graph, reconstruct_from_layer, surviving,
};
use sgao::inference::{
    langevin_infer, langevin_run, posterior_moment_check, resume, sample_prior, train,
    LangevinConfig, LatentPosterior, LinearGaussianModel, TrainConfig, Trainer,
};
use sgao::io::{
    load_checkpoint, render_grid, save_checkpoint, synthetic_corpus, Checkpoint, Dtype, ImageGrid,
    Normalization,
};
use sgao::ops::topk;
use sgao::rng::{derive_seed, Stream};
use sgao::viz::{kernel_cells, lag1_autocorrelation};
use sgao::{Generator, GeneratorConfig, Result, Tensor};

const CORPUS_SIZE: usize = 200;
const IMAGE_SIZE: usize = 16;
const EPOCHS: usize = 100;
const SEED: u64 = 1;

type Verdict = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(budget: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (
        t < budget,
        format!("{:.1}s of {}s", t.as_secs_f64(), budget.as_secs()),
    )
}

fn artifact_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("artifact directory");
    dir
}

fn randomized_generator(seed: u64) -> Generator {
    let mut g = Generator::init(GeneratorConfig::default(), seed).unwrap();
    let mut s = Stream::new(derive_seed(seed, 7));
    g.params.fc_bias = s.normal_tensor(g.params.fc_bias.shape(), 0.3);
    for l in &mut g.params.layers {
        l.bias = s.normal_tensor(l.bias.shape(), 0.1);
    }
    g
}

fn linearization() -> Result<Verdict> {
    let start = Instant::now();
    let (mut eq2, mut eq3, mut eq5) = (0.0f64, 0.0f64, 0.0f64);
    let mut bit_exact = true;
    for pair in 0..20u64 {
        let g = randomized_generator(100 + pair);
        let z = Stream::new(200 + pair).normal_tensor(&[g.latent_dim()], 1.0);
        let trace = g.trace(&z)?;
        for layer in 0..trace.layers.len() {
            // Frozen masks make the rest of the network affine in the sparse map.
            let p = g.propagate_frozen(&trace, layer, &trace.layers[layer].sparse, 1.0)?;
            eq2 = eq2.max(p.max_abs_diff(&trace.preimage)?);

            let target = match trace.layers.get(layer + 1) {
                Some(next) => &next.preact,
                None => &trace.preimage,
            };
            let mut acc = Tensor::zeros(target.shape());
            for j in 0..surviving(&trace, layer)?.len() {
                let (s, h) = basis_h(&g, &trace, layer, j)?;
                acc.add_scaled(&h, s)?;
            }
            eq3 = eq3.max(acc.max_abs_diff(target)?);

            let y = reconstruct_from_layer(&g, &trace, layer)?;
            eq5 = eq5.max(y.max_abs_diff(&trace.output)?);
        }
        bit_exact &= g.reevaluate_frozen(&trace, &z)? == trace.output;
    }
    let (fast, time) = within(Duration::from_secs(10), start);
    Ok(check(
        eq2 < 1e-9 && eq3 < 1e-9 && eq5 < 1e-9 && bit_exact && fast,
        format!(
            "20 pairs, max error frozen map {eq2:.1e}, H bases {eq3:.1e}, B bases {eq5:.1e}, \
             re-evaluation bit-exact {bit_exact}, {time}"
        ),
    ))
}

fn tiny_generator(seed: u64) -> Generator {
    let cfg = GeneratorConfig {
        latent_dim: 2,
        fc_shape: [2, 2, 3],
        layers: vec![DeconvSpec {
            kernel: 3,
            stride: 2,
            pad: 0,
            out_channels: 1,
        }],
        top_k: vec![6],
        sigma: 0.3,
    };
    let mut g = Generator::init(cfg, seed).unwrap();
    let mut s = Stream::new(derive_seed(seed, 1));
    for t in g.params.tensors_mut() {
        *t = s.normal_tensor(t.shape(), 0.5);
    }
    g
}

fn tiny_descriptor(seed: u64) -> Descriptor {
    let cfg = DescriptorConfig {
        convs: vec![sgao::descriptor::ConvSpec {
            kernel: 3,
            stride: 2,
            pad: 1,
            out_channels: 3,
        }],
        ..DescriptorConfig::default()
    };
    let mut d = Descriptor::init(cfg, [5, 5, 2], seed).unwrap();
    let mut s = Stream::new(derive_seed(seed, 2));
    for t in d.params.tensors_mut() {
        *t = s.normal_tensor(t.shape(), 0.5);
    }
    d
}

#[derive(Default)]
struct Tally {
    worst: f64,
    checked: usize,
    skipped: usize,
}

impl Tally {
    fn add(&mut self, r: &GradCheckReport) {
        self.worst = self.worst.max(r.max_rel_error);
        self.checked += r.checked;
        self.skipped += r.skipped.len();
    }

    fn stable(&self) -> f64 {
        self.checked as f64 / (self.checked + self.skipped).max(1) as f64
    }
}

fn run_check(tally: &mut Tally, f: &dyn Differentiable, x: &Tensor) -> Result<()> {
    tally.add(&grad_check(f, x, &GradCheckOptions::default())?);
    Ok(())
}

fn gradients() -> Result<Verdict> {
    let start = Instant::now();
    let (mut gz, mut gt, mut fy, mut fp) = (
        Tally::default(),
        Tally::default(),
        Tally::default(),
        Tally::default(),
    );
    for i in 0..20u64 {
        let g = tiny_generator(300 + i);
        let mut s = Stream::new(400 + i);
        let z = s.normal_tensor(&[2], 1.0);
        let y = s.normal_tensor(&g.output_shape(), 0.5);
        run_check(
            &mut gz,
            &LatentLogJoint {
                generator: &g,
                y: &y,
            },
            &z,
        )?;
        let theta = sgao::generator::flatten(&g.params);
        run_check(
            &mut gt,
            &ParamLogJoint {
                generator: &g,
                z: &z,
                y: &y,
            },
            &theta,
        )?;

        let d = tiny_descriptor(500 + i);
        let img = s.normal_tensor(&[5, 5, 2], 1.0);
        run_check(&mut fy, &ImageScore { descriptor: &d }, &img)?;
        use sgao::descriptor::TrainableEnergy;
        run_check(
            &mut fp,
            &ParamScore {
                descriptor: &d,
                y: &img,
            },
            &d.param_vector(),
        )?;
    }
    let all = [&gz, &gt, &fy, &fp];
    let worst = all.iter().map(|t| t.worst).fold(0.0, f64::max);
    let stable = all.iter().map(|t| t.stable()).fold(1.0, f64::min);
    let (fast, time) = within(Duration::from_secs(30), start);
    Ok(check(
        worst < 1e-5 && stable >= 0.95 && fast,
        format!(
            "max rel err z {:.1e} theta {:.1e} image {:.1e} phi {:.1e}; \
             lowest stable fraction {:.3}; {} coordinates checked; {time}",
            gz.worst,
            gt.worst,
            fy.worst,
            fp.worst,
            stable,
            all.iter().map(|t| t.checked).sum::<usize>()
        ),
    ))
}

fn langevin_oracle() -> Result<Verdict> {
    let start = Instant::now();
    let a = [
        1.0, 0.5, -0.3, 0.2, 0.8, 1.2, 0.1, -0.7, 0.4, 0.3, 1.5, 0.2, -0.2, 0.6, 0.3, 0.9,
    ];
    let y = [0.5, -1.0, 0.7, 0.2];
    let model = LinearGaussianModel::new(&a, 4, 4, 0.8, &y)?;
    let (mean, _) = model.posterior();
    let cfg = LangevinConfig {
        delta: 0.1,
        steps: 20_000,
        noise: false,
        step_halving: false,
        ..LangevinConfig::default()
    };
    let z = langevin_infer(&model, &Tensor::zeros(&[4]), &cfg)?;
    let ridge = z
        .data()
        .iter()
        .zip(mean.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let noisy = LangevinConfig {
        delta: 0.1,
        seed: 11,
        step_halving: false,
        ..LangevinConfig::default()
    };
    let r = posterior_moment_check(&model, &noisy, 2_000, 100_000)?;
    let zmax = r.mean_z_scores.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let vmax = r.var_rel_err.iter().copied().fold(0.0, f64::max);
    let (fast, time) = within(Duration::from_secs(60), start);
    Ok(check(
        ridge < 1e-4 && r.passed && fast,
        format!(
            "d=4, noise-free error {ridge:.1e}; 100000 samples, max |mean z-score| {zmax:.2}, \
             max variance rel err {vmax:.3}; {time}"
        ),
    ))
}

/// Nodes and weights of the probabilists' Gauss–Hermite rule (weight `e^{−z²/2}`,
/// weights summing to one), from the eigen-decomposition of the Jacobi matrix.
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut j = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = j.symmetric_eigen();
    (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect()
}

/// `z ~ N(0, 1)`, `y = tanh(θz) + N(0, σ²)`.
struct TanhToy {
    theta: f64,
    sigma: f64,
    y: f64,
}

impl TanhToy {
    fn log_lik(&self, z: f64) -> f64 {
        let r = self.y - (self.theta * z).tanh();
        -r * r / (2.0 * self.sigma * self.sigma)
    }

    /// `∂/∂θ log p(y, z; θ)`.
    fn score(&self, z: f64) -> f64 {
        let t = (self.theta * z).tanh();
        (self.y - t) / (self.sigma * self.sigma) * (1.0 - t * t) * z
    }

    /// `∂/∂θ log p(y; θ) = E[score | y]` by an `n`-node Gauss–Hermite rule for the
    /// standard normal prior.
    fn gauss_hermite_gradient(&self, n: usize) -> f64 {
        let (num, den) = gauss_hermite(n)
            .into_iter()
            .fold((0.0, 0.0), |(num, den), (z, w)| {
                let p = w * self.log_lik(z).exp();
                (num + p * self.score(z), den + p)
            });
        num / den
    }

    /// The same expectation by the trapezoid rule on `n` nodes over `[−8, 8]`.
    fn trapezoid_gradient(&self, n: usize) -> f64 {
        let h = 16.0 / (n - 1) as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let z = -8.0 + i as f64 * h;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let p = w * (-0.5 * z * z + self.log_lik(z)).exp();
            num += p * self.score(z);
            den += p;
        }
        num / den
    }
}

impl LatentPosterior for TanhToy {
    fn latent_dim(&self) -> usize {
        1
    }

    fn log_density_and_grad(&self, z: &Tensor) -> Result<(f64, Tensor)> {
        let z = z.data()[0];
        let t = (self.theta * z).tanh();
        let g = (self.y - t) / (self.sigma * self.sigma) * (1.0 - t * t) * self.theta - z;
        Ok((self.log_lik(z) - 0.5 * z * z, Tensor::vector(&[g])))
    }
}

fn monte_carlo_gradient() -> Result<Verdict> {
    // A pole of tanh(θz) near the real axis would spoil any 21-node rule; θ = 0.5 keeps
    // it at distance π.
    let toy = TanhToy {
        theta: 0.5,
        sigma: 0.8,
        y: 0.5,
    };
    let exact = toy.gauss_hermite_gradient(21);
    let fine = toy.trapezoid_gradient(4001);
    let (chains, burn_in, keep) = (1000, 2_000, 2_000);
    let mut chain_means = Vec::with_capacity(chains);
    let mut prior = Stream::new(21);
    for c in 0..chains {
        let cfg = LangevinConfig {
            delta: 0.05,
            steps: burn_in + keep,
            seed: derive_seed(22, c as u64),
            step_halving: false,
            ..LangevinConfig::default()
        };
        let mut acc = 0.0;
        langevin_run(
            &toy,
            &Tensor::vector(&[prior.normal()]),
            &cfg,
            |step, z, _| {
                if step >= burn_in {
                    acc += toy.score(z.data()[0]);
                }
            },
        )?;
        chain_means.push(acc / keep as f64);
    }
    let n = chains as f64;
    let mc = chain_means.iter().sum::<f64>() / n;
    let sd = (chain_means.iter().map(|m| (m - mc).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    let z = (mc - exact) / se;
    Ok(check(
        z.abs() < 3.0,
        format!(
            "21-node Gauss-Hermite {exact:.6} (4001-node trapezoid {fine:.6}), Monte Carlo {mc:.5} ± {se:.5}, \
             {z:+.2} standard errors over {chains} chains"
        ),
    ))
}

fn topk_properties() -> Result<Verdict> {
    let mut s = Stream::new(31);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let shape = [1 + s.below(4), 1 + s.below(4), 1 + s.below(5)];
        let n: usize = shape.iter().product();
        // A small value alphabet forces ties.
        let levels = 1 + s.below(6);
        let data: Vec<f64> = (0..n).map(|_| s.below(levels) as f64 - 2.0).collect();
        let t = Tensor::from_vec(&shape, data.clone())?;
        let k = s.below(n + 3);
        let r = topk(&t, k);
        let k_eff = k.min(n);

        // Oracle: full stable sort descending.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| data[b].total_cmp(&data[a]));
        let mut expect: Vec<usize> = order[..k_eff].to_vec();
        let kept: Vec<usize> = (0..n).filter(|&i| r.mask.data()[i] == 1.0).collect();

        let count = r.k_effective == k_eff && kept.len() == k_eff && r.indices.len() == k_eff;
        let ordering = kept.iter().all(|&i| {
            (0..n)
                .filter(|j| !kept.contains(j))
                .all(|j| data[i] >= data[j])
        }) && r
            .indices
            .windows(2)
            .all(|w| data[w[0]] > data[w[1]] || (data[w[0]] == data[w[1]] && w[0] < w[1]));
        let tie_break = r.indices == expect;
        expect.sort_unstable();
        let mask_ok = kept == expect
            && (0..n).all(|i| {
                r.values.data()[i]
                    == if r.mask.data()[i] == 1.0 {
                        data[i]
                    } else {
                        0.0
                    }
            });
        let positive = kept.iter().all(|&i| data[i] > 0.0);
        let idempotent = !positive || topk(&r.values, k).mask == r.mask;
        let mut sum = Tensor::zeros(&shape);
        for &i in &r.indices {
            let mut single = Tensor::zeros(&shape);
            single.data_mut()[i] = data[i];
            sum.add_scaled(&single, 1.0)?;
        }
        let complete = sum == r.values;
        if !(count && ordering && tie_break && mask_ok && idempotent && complete) {
            failures.push(case);
        }
    }
    Ok(check(
        failures.is_empty(),
        format!(
            "1000 randomized cases, {} failing {:?}",
            failures.len(),
            &failures[..failures.len().min(5)]
        ),
    ))
}

struct TrainedRun {
    data: Vec<Tensor>,
    trainer: Trainer,
    final_mse: f64,
}

fn desk_training() -> Result<(Verdict, TrainedRun)> {
    let data = synthetic_corpus(CORPUS_SIZE, IMAGE_SIZE, SEED);
    let tcfg = TrainConfig {
        epochs: EPOCHS,
        ..TrainConfig::default()
    };
    let init = Trainer::new(GeneratorConfig::default(), tcfg.clone(), data.len(), SEED)?;
    let bottom = init.generator.config.layers.len() - 1;
    let lag_init = lag1_autocorrelation(&kernel_cells(&init.generator, bottom)?);

    let start = Instant::now();
    let out = train(&data, GeneratorConfig::default(), tcfg, SEED).map_err(|a| a.error)?;
    let (fast, time) = within(Duration::from_secs(600), start);

    let first = out.metrics[0].mse;
    let last = out.metrics.last().expect("epochs > 0").mse;
    let ratio = last / first;
    let cells = kernel_cells(&out.trainer.generator, bottom)?;
    let lag_trained = lag1_autocorrelation(&cells);

    let dir = artifact_dir();
    for (name, g) in [
        ("init", &init.generator),
        ("trained", &out.trainer.generator),
    ] {
        let grid = ImageGrid::new(kernel_cells(g, bottom)?, None, 1, Normalization::PerCell)?;
        render_grid(
            &grid,
            &dir.join(format!("kernels_layer{}_{name}.ppm", bottom + 1)),
        )?;
    }
    save_checkpoint(
        &dir.join("checkpoint.sgao"),
        &Checkpoint::from_trainer(&out.trainer),
        Dtype::F32,
    )?;
    let verdict = check(
        fast && ratio < 0.3 && lag_trained > lag_init,
        format!(
            "{EPOCHS} epochs on {CORPUS_SIZE} images in {time}; mse {first:.5} -> {last:.5} \
             (ratio {ratio:.3}); kernel lag-1 |rho| init {lag_init:.3} trained {lag_trained:.3}; \
             grids in {}",
            dir.display()
        ),
    );
    Ok((
        verdict,
        TrainedRun {
            data,
            trainer: out.trainer,
            final_mse: last,
        },
    ))
}

fn parse_accounting(path: &std::path::Path) -> Result<Verdict> {
    let generator = &load_checkpoint(path)?.generator()?;
    let caps = &generator.config.top_k;
    let mut s = Stream::new(71);
    let mut max_and = vec![0usize; caps.len()];
    let mut max_k = vec![0usize; caps.len()];
    let mut ok = true;
    for _ in 0..100 {
        let trace = generator.trace(&s.normal_tensor(&[generator.latent_dim()], 1.0))?;
        let pg = parse_graph(&trace)?;
        for (i, lg) in pg.layers.iter().enumerate() {
            let or_total: usize = lg.and_nodes.iter().map(|a| a.or_nodes.len()).sum();
            let recount = trace.layers[i]
                .sparse
                .data()
                .iter()
                .filter(|&&v| v > 0.0)
                .count();
            let [w, h, _] = generator.config.feature_shapes()?[i];
            ok &= lg.k_total == or_total && lg.k_total == recount && lg.k_total <= caps[i];
            ok &= lg.and_nodes.len() <= w * h;
            max_and[i] = max_and[i].max(lg.and_nodes.len());
            max_k[i] = max_k[i].max(lg.k_total);
        }
    }
    let grids_ok =
        max_and.first().is_some_and(|&a| a <= 4) && max_and.get(1).is_some_and(|&a| a <= 16);
    Ok(check(
        ok && grids_ok,
        format!("100 latents; max k_total {max_k:?} (caps {caps:?}); max AND nodes {max_and:?} (caps [4, 16])"),
    ))
}

fn descriptor_suite(run: &TrainedRun) -> Result<Verdict> {
    // No-op identity.
    let mut d = Descriptor::init(DescriptorConfig::default(), [IMAGE_SIZE, IMAGE_SIZE, 3], 81)?;
    let before = d.params.clone();
    let batch: Vec<&Tensor> = run.data[..10].iter().collect();
    descriptor_step(&mut d, &batch, &batch, 0.5)?;
    let no_op = d.params == before;

    // Quadratic energy: independent chains, final states compared with the closed form.
    let mu = Stream::new(82).normal_tensor(&[4, 4, 1], 1.0);
    let energy = QuadraticEnergy { mu };
    let cfg = DescriptorConfig {
        delta: 0.1,
        steps: 1_500,
        ..DescriptorConfig::default()
    };
    let chains = 2_000;
    let finals =
        langevin_sample_images(&energy, &vec![Tensor::zeros(&[4, 4, 1]); chains], &cfg, 83)?;
    let expect = energy.stationary_mean(cfg.sigma_q);
    let n = chains as f64;
    let mut worst_z = 0.0f64;
    for p in 0..expect.numel() {
        let xs: Vec<f64> = finals.iter().map(|t| t.data()[p]).collect();
        let m = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        worst_z = worst_z.max(((m - expect.data()[p]) / (sd / n.sqrt())).abs());
    }

    // Cooperative training on the same corpus.
    let tcfg = TrainConfig {
        epochs: EPOCHS,
        ..TrainConfig::default()
    };
    let out = coop_train(
        &run.data,
        GeneratorConfig::default(),
        tcfg,
        DescriptorConfig::default(),
        SEED,
    )
    .map_err(|a| a.error)?;
    let prior = sample_prior(
        &out.trainer.trainer.generator,
        CORPUS_SIZE,
        derive_seed(SEED, 84),
    )?;
    let f_data = mean_score(&out.trainer.descriptor, &run.data)?;
    let f_prior = mean_score(&out.trainer.descriptor, &prior)?;
    let coop_mse = out.metrics.last().expect("epochs > 0").mse;
    Ok(check(
        no_op && worst_z < 4.0 && f_data > f_prior,
        format!(
            "no-op exact {no_op}; quadratic stationary mean max |z| {worst_z:.2} over {chains} chains; \
             after {EPOCHS} cooperative epochs mean f(data) {f_data:.4} vs f(prior samples) {f_prior:.4} \
             [info: final mse cooperative {coop_mse:.5}, plain {:.5}, ratio {:.2}]",
            run.final_mse,
            coop_mse / run.final_mse
        ),
    ))
}

fn serialization(run: &TrainedRun) -> Result<Verdict> {
    // Round trip of the trained state: exact in f64, exact after narrowing in f32.
    let ck = Checkpoint::from_trainer(&run.trainer);
    let back64 = Checkpoint::from_bytes(&ck.to_bytes(Dtype::F64)?)?;
    let exact64 = back64.tensors == ck.tensors && back64.meta == ck.meta;
    let bytes32 = ck.to_bytes(Dtype::F32)?;
    let back32 = Checkpoint::from_bytes(&bytes32)?;
    let exact32 = back32.tensors.len() == ck.tensors.len()
        && back32
            .tensors
            .iter()
            .zip(&ck.tensors)
            .all(|((na, a), (nb, b))| {
                na == nb
                    && a.shape() == b.shape()
                    && a.data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| *x == (*y as f32) as f64)
            })
        && back32.to_bytes(Dtype::F32)? == bytes32;

    // Resume equals continuous.
    let data = &run.data[..40];
    let tcfg = TrainConfig {
        epochs: 4,
        batch_size: 10,
        ..TrainConfig::default()
    };
    let cont = train(data, GeneratorConfig::default(), tcfg.clone(), 91).map_err(|a| a.error)?;
    let half = train(
        data,
        GeneratorConfig::default(),
        TrainConfig {
            epochs: 2,
            ..tcfg.clone()
        },
        91,
    )
    .map_err(|a| a.error)?;
    let mut restored =
        Checkpoint::from_bytes(&Checkpoint::from_trainer(&half.trainer).to_bytes(Dtype::F64)?)?
            .trainer()?;
    restored.config.epochs = 4;
    let rest = resume(restored, data).map_err(|a| a.error)?;
    let joined: Vec<_> = half.metrics.iter().chain(&rest.metrics).collect();
    let resumed = joined.len() == cont.metrics.len()
        && joined
            .iter()
            .zip(&cont.metrics)
            .all(|(a, b)| a.same_values(b))
        && rest.trainer.generator == cont.trainer.generator
        && rest.trainer.bank == cont.trainer.bank;

    // Parse-graph JSON.
    let g = &run.trainer.generator;
    let mut s = Stream::new(92);
    let mut json_ok = true;
    for _ in 0..20 {
        let pg = parse_graph(&g.trace(&s.normal_tensor(&[g.latent_dim()], 1.0))?)?;
        let text = export_parse_graph(&pg)?;
        let again = import_parse_graph(&text)?;
        json_ok &= again == pg && export_parse_graph(&again)? == text;
    }
    Ok(check(
        exact64 && exact32 && resumed && json_ok,
        format!(
            "f64 round trip exact {exact64}; f32 round trip exact after narrowing {exact32}; \
             resume after 2 of 4 epochs matches continuous {resumed}; parse-graph JSON byte-identical {json_ok}"
        ),
    ))
}

fn report(failed: &mut bool, n: usize, name: &str, v: Result<Verdict>) {
    let (tag, detail) = match v {
        Ok(Ok(d)) => ("PASS", d),
        Ok(Err(d)) => ("FAIL", d),
        Err(e) => ("FAIL", format!("error: {e}")),
    };
    *failed |= tag == "FAIL";
    println!("criterion {n} [{name}]: {tag} - {detail}");
}

/// Criterion numbers given on the command line, or all of them.
fn selected() -> Vec<usize> {
    let picked: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    if picked.is_empty() {
        (1..=9).collect()
    } else {
        picked
    }
}

fn main() -> ExitCode {
    // Under `cargo test -- --list` and similar, behave like an empty harness.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let want = selected();
    let on = |n: usize| want.contains(&n);
    let mut failed = false;
    if on(1) {
        report(&mut failed, 1, "linearization", linearization());
    }
    if on(2) {
        report(&mut failed, 2, "gradients", gradients());
    }
    if on(3) {
        report(&mut failed, 3, "Langevin oracle", langevin_oracle());
    }
    if on(4) {
        report(
            &mut failed,
            4,
            "Monte Carlo likelihood gradient",
            monte_carlo_gradient(),
        );
    }
    if on(5) {
        report(&mut failed, 5, "Top-K properties", topk_properties());
    }
    if (6..=9).any(on) {
        match desk_training() {
            Ok((v, run)) => {
                report(&mut failed, 6, "desk-scale training", Ok(v));
                if on(7) {
                    let path = artifact_dir().join("checkpoint.sgao");
                    report(
                        &mut failed,
                        7,
                        "parse-graph accounting",
                        parse_accounting(&path),
                    );
                }
                if on(8) {
                    report(&mut failed, 8, "descriptor", descriptor_suite(&run));
                }
                if on(9) {
                    report(&mut failed, 9, "serialization", serialization(&run));
                }
            }
            Err(e) => {
                let msg = format!("training failed: {e}");
                for (n, name) in [
                    (6, "desk-scale training"),
                    (7, "parse-graph accounting"),
                    (8, "descriptor"),
                    (9, "serialization"),
                ] {
                    report(&mut failed, n, name, Err(sgao::Error::Config(msg.clone())));
                }
            }
        }
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
