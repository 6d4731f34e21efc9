//! revgen — train, sample, and inspect reversible generative networks.
//!
//! One command per process. Every artifact a command emits is a pure
//! function of (config snapshot, checkpoint, seed), so anything can be
//! regenerated bit-identically later.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use revgen_core::checkpoint::Snapshot;
use revgen_core::config::{load_config, Config};
use revgen_core::data::{
    load_mnist_idx, load_mnist_split, mnist_dir, synth_gaussian_mixture, Dataset,
};
use revgen_core::eval::{
    assemble_grid, effective_dims, feature_fit, frechet_distance, generate_class_samples,
    generate_samples, interpolate, traverse_about, traverse_dimension, InterpMode,
};
use revgen_core::gradcheck::check_gradients;
use revgen_core::latent::{clip_to_prior, clip_with_mask, ClassPriors, PriorFamily, PriorSpec};
use revgen_core::losses::{hinge_disc_loss, hinge_enc_loss};
use revgen_core::ot::{solve_exact, CostFn};
use revgen_core::params::{grads_flat, params_flat, set_params_flat, Params};
use revgen_core::revnet::{build_architecture, preset, InvertibleNet};
use revgen_core::training::{
    load_adv_model, load_ot_model, reference_fit, stream, subset_per_class, train_adversarial,
    train_ot, Features, EVAL_SEED, STREAM_EVAL, STREAM_INIT, STREAM_PRIOR,
};
use revgen_core::{Error, Result, Rng, Tensor};

#[derive(Parser)]
#[command(
    name = "revgen",
    version,
    about = "Invertible generative networks: adversarial or transport training, \
             sampling, latent-space tools, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train against a latent discriminator (reconstruction warm-up, then
    /// alternating critic/encoder epochs).
    TrainAdversarial(TrainArgs),
    /// Train adversary-free by exact optimal transport to learnable
    /// class-conditional Gaussians.
    TrainOt(TrainArgs),
    /// Decode prior draws into a PNG grid.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        /// Number of samples.
        #[arg(long)]
        n: usize,
        /// Seed for the prior draws; the same seed reproduces the PNG
        /// byte for byte.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode the line between two training examples' latents.
    Interpolate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Index of the first endpoint in the training set.
        #[arg(long)]
        index_a: usize,
        /// Index of the second endpoint.
        #[arg(long)]
        index_b: usize,
        /// Points along the line, endpoints included.
        #[arg(long)]
        steps: usize,
        /// restricted clips both endpoints into the prior's support;
        /// full interpolates raw encodings.
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep latent dimensions around a base latent, one grid row per dim.
    Traverse {
        #[arg(long)]
        ckpt: PathBuf,
        /// Comma-separated dim indices, or top:k for the k most important.
        #[arg(long)]
        dims: String,
        /// Sweep half-width in prior standard deviations.
        #[arg(long, default_value_t = 3.0)]
        range_stds: f64,
        /// Points per sweep.
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid with three rows: originals, reconstructions through the
    /// clipped latent, reconstructions through the raw latent.
    Reconstruct {
        #[arg(long)]
        ckpt: PathBuf,
        /// Number of training examples (grid columns).
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fréchet feature distance, latent-dimension usage, and round-trip
    /// error against a dataset, written as CSV.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Either one directory holding the standard IDX split, or an
        /// images file and a labels file.
        #[arg(long, num_args = 1..=2)]
        dataset: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant suite: round-trips, gradient checks,
    /// the assignment-solver oracle, and the closed-form losses.
    Selftest,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Run directory (created; holds the config snapshot, metrics CSV,
    /// log, and checkpoints).
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint to resume from.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Override one config key, e.g. --set training.batch_size=32.
    /// Repeatable; wins over the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Restricted,
    Full,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::TrainAdversarial(a) => cmd_train(a, train_adversarial),
        Cmd::TrainOt(a) => cmd_train(a, train_ot),
        Cmd::Sample { ckpt, n, seed, out } => cmd_sample(&ckpt, n, seed, &out),
        Cmd::Interpolate { ckpt, index_a, index_b, steps, mode, out } => {
            cmd_interpolate(&ckpt, index_a, index_b, steps, mode, &out)
        }
        Cmd::Traverse { ckpt, dims, range_stds, steps, out } => {
            cmd_traverse(&ckpt, &dims, range_stds, steps, &out)
        }
        Cmd::Reconstruct { ckpt, n, out } => cmd_reconstruct(&ckpt, n, &out),
        Cmd::Eval { ckpt, dataset, out } => cmd_eval(&ckpt, &dataset, &out),
        Cmd::Selftest => cmd_selftest(),
    }
}

// ── Shared plumbing ──────────────────────────────────────────────────────────

/// The dataset a config describes, with the per-class cap applied — the
/// exact set a training run sees, so example indices are stable.
fn load_train_data(cfg: &Config) -> Result<Dataset<f32>> {
    let data = match cfg.data.source.as_str() {
        "mnist" => load_mnist_split(&mnist_dir(&cfg.data.mnist_dir), true)?,
        "synthetic" => synth_gaussian_mixture(
            &mut stream(cfg.data.synth_seed, STREAM_INIT, 0),
            cfg.data.synth_n,
            cfg.data.synth_classes,
            cfg.data.synth_side,
        )?,
        other => return Err(Error::Config(format!("unknown data source '{other}'"))),
    };
    subset_per_class(&data, cfg.data.subset_per_class)
}

fn cmd_train(
    a: TrainArgs,
    train: fn(&Config, &Dataset<f32>, &Path, Option<&Path>) -> Result<revgen_core::training::TrainOutcome>,
) -> Result<()> {
    let cfg = load_config(Some(&a.config), &a.set)?;
    let data = load_train_data(&cfg)?;
    let outcome = train(&cfg, &data, &a.out, a.resume.as_deref())?;
    println!(
        "trained through epoch {}; final checkpoint {}",
        outcome.epochs_run,
        outcome.checkpoint.display()
    );
    if let Some(fd) = outcome.final_frechet {
        println!("final Fréchet feature distance {fd}");
    }
    Ok(())
}

enum Model {
    Adv { cfg: Config, net: InvertibleNet<f32>, prior: PriorSpec },
    Ot { cfg: Config, net: InvertibleNet<f32>, priors: ClassPriors<f32> },
}

impl Model {
    fn load(ckpt: &Path) -> Result<Model> {
        let snap = Snapshot::load(ckpt)?;
        match snap.string("meta/regime")?.as_str() {
            "adversarial" => {
                let (cfg, net, prior) = load_adv_model(&snap)?;
                Ok(Model::Adv { cfg, net, prior })
            }
            "ot" => {
                let (cfg, net, priors) = load_ot_model(&snap)?;
                Ok(Model::Ot { cfg, net, priors })
            }
            other => Err(Error::Checkpoint(format!("unknown training regime '{other}'"))),
        }
    }

    fn cfg(&self) -> &Config {
        match self {
            Model::Adv { cfg, .. } | Model::Ot { cfg, .. } => cfg,
        }
    }

    fn net(&self) -> &InvertibleNet<f32> {
        match self {
            Model::Adv { net, .. } | Model::Ot { net, .. } => net,
        }
    }
}

/// Write a PNG grid plus a sidecar text file holding the min/max that the
/// 8-bit normalization mapped to 0 and 255.
fn write_grid(images: &Tensor<f32>, cols: usize, out: &Path) -> Result<()> {
    let (px, w, h, c, lo, hi) = assemble_grid(images, cols)?;
    let buf_err = || Error::Shape("pixel buffer does not match grid dimensions".into());
    let save_err = |e: image::ImageError| Error::Io(format!("writing {}: {e}", out.display()));
    match c {
        1 => image::GrayImage::from_raw(w as u32, h as u32, px)
            .ok_or_else(buf_err)?
            .save_with_format(out, image::ImageFormat::Png)
            .map_err(save_err)?,
        3 => image::RgbImage::from_raw(w as u32, h as u32, px)
            .ok_or_else(buf_err)?
            .save_with_format(out, image::ImageFormat::Png)
            .map_err(save_err)?,
        _ => return Err(Error::Shape(format!("cannot encode a {c}-channel PNG"))),
    }
    let mut sidecar = out.as_os_str().to_os_string();
    sidecar.push(".txt");
    std::fs::write(&sidecar, format!("min={lo}\nmax={hi}\n"))?;
    println!("wrote {} (+ normalization sidecar)", out.display());
    Ok(())
}

fn grid_cols(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

// ── Artifact commands ────────────────────────────────────────────────────────

fn cmd_sample(ckpt: &Path, n: usize, seed: u64, out: &Path) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let model = Model::load(ckpt)?;
    let mut rng = stream(seed, STREAM_PRIOR, 0);
    let images = match &model {
        Model::Adv { net, prior, .. } => generate_samples(net, prior, &mut rng, n)?,
        Model::Ot { net, priors, .. } => {
            // Spread the budget over classes, extras to the lowest indices.
            let k = priors.classes.len();
            let mut parts = Vec::new();
            for (c, cp) in priors.classes.iter().enumerate() {
                let nc = n / k + usize::from(c < n % k);
                if nc > 0 {
                    parts.push(generate_class_samples(net, cp, &mut rng, nc)?);
                }
            }
            let refs: Vec<&Tensor<f32>> = parts.iter().collect();
            Tensor::concat(0, &refs)?
        }
    };
    write_grid(&images, grid_cols(n), out)
}

fn cmd_interpolate(
    ckpt: &Path,
    index_a: usize,
    index_b: usize,
    steps: usize,
    mode: Mode,
    out: &Path,
) -> Result<()> {
    let model = Model::load(ckpt)?;
    let data = load_train_data(model.cfg())?;
    for &i in &[index_a, index_b] {
        if i >= data.len() {
            return Err(Error::Data(format!(
                "example index {i} out of range: the training set has {} examples",
                data.len()
            )));
        }
    }
    let xa = data.gather_images(&[index_a])?;
    let xb = data.gather_images(&[index_b])?;
    let full_span;
    let (imode, prior) = match (&model, mode) {
        (Model::Adv { prior, .. }, Mode::Restricted) => (InterpMode::Restricted, prior),
        (Model::Adv { prior, .. }, Mode::Full) => (InterpMode::Full, prior),
        (Model::Ot { net, .. }, Mode::Full) => {
            // Unused by the full mode; any spec covering every dim works.
            full_span = all_dims_prior(net.latent_len())?;
            (InterpMode::Full, &full_span)
        }
        (Model::Ot { .. }, Mode::Restricted) => {
            return Err(Error::Config(
                "restricted interpolation clips to an adversarial checkpoint's prior; \
                 this checkpoint holds a transport run — use --mode full"
                    .into(),
            ))
        }
    };
    let images = interpolate(model.net(), prior, &xa, &xb, steps, imode)?;
    write_grid(&images, steps, out)
}

fn all_dims_prior(d: usize) -> Result<PriorSpec> {
    PriorSpec::new(d, (0..d).collect(), PriorFamily::StandardNormal, 1.0)
}

fn cmd_traverse(ckpt: &Path, dims: &str, range_stds: f64, steps: usize, out: &Path) -> Result<()> {
    if !(range_stds > 0.0) || !range_stds.is_finite() {
        return Err(Error::Config(format!("range_stds must be positive, got {range_stds}")));
    }
    let model = Model::load(ckpt)?;
    let rows: Vec<Tensor<f32>> = match &model {
        // Base latent: the prior mean (zero); every swept dim must be active.
        Model::Adv { net, prior, .. } => {
            let dims = parse_dims(dims, |k| {
                if k > prior.k() {
                    return Err(Error::Config(format!(
                        "top:{k} asked of a prior with {} active dims",
                        prior.k()
                    )));
                }
                Ok(prior.active_dims[..k].to_vec())
            })?;
            dims.iter()
                .map(|&d| traverse_dimension(net, prior, d, range_stds, steps))
                .collect::<Result<_>>()?
        }
        // Base latent: class 0's mean, swept by that class's per-dim std;
        // top:k picks the dims class 0 actually uses (largest stds first).
        Model::Ot { net, priors, .. } => {
            let cp = &priors.classes[0];
            let std = cp.std();
            let d = cp.dim();
            let dims = parse_dims(dims, |k| {
                if k > d {
                    return Err(Error::Config(format!("top:{k} asked of {d} latent dims")));
                }
                let mut order: Vec<usize> = (0..d).collect();
                order.sort_by(|&a, &b| {
                    let (sa, sb) = (std.data()[a], std.data()[b]);
                    sb.partial_cmp(&sa).expect("finite stds").then(a.cmp(&b))
                });
                order.truncate(k);
                Ok(order)
            })?;
            let base = cp.mean.clone().reshape(&[1, d])?;
            dims.iter()
                .map(|&dim| {
                    if dim >= d {
                        return Err(Error::Config(format!(
                            "latent dim {dim} out of range [0, {d})"
                        )));
                    }
                    traverse_about(net, &base, dim, std.data()[dim] as f64, range_stds, steps)
                })
                .collect::<Result<_>>()?
        }
    };
    let refs: Vec<&Tensor<f32>> = rows.iter().collect();
    write_grid(&Tensor::concat(0, &refs)?, steps, out)
}

/// "3,17,42" → those dims; "top:k" → the k most important per `top`.
fn parse_dims(s: &str, top: impl FnOnce(usize) -> Result<Vec<usize>>) -> Result<Vec<usize>> {
    if let Some(k) = s.strip_prefix("top:") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::Config(format!("bad dim spec '{s}': top: needs an integer")))?;
        if k == 0 {
            return Err(Error::Config("top:0 selects nothing".into()));
        }
        return top(k);
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad latent dim '{t}' in '{s}'")))
        })
        .collect()
}

fn cmd_reconstruct(ckpt: &Path, n: usize, out: &Path) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("need at least one example".into()));
    }
    let model = Model::load(ckpt)?;
    let Model::Adv { cfg, net, prior } = &model else {
        return Err(Error::Checkpoint(
            "reconstruction grids compare clipped against raw latents, which needs an \
             adversarial checkpoint; transport checkpoints have no clipped prior"
                .into(),
        ));
    };
    let data = load_train_data(cfg)?;
    if n > data.len() {
        return Err(Error::Data(format!(
            "asked for {n} examples, the training set has {}",
            data.len()
        )));
    }
    let idx: Vec<usize> = (0..n).collect();
    let x = data.gather_images(&idx)?;
    let z = net.flatten_latent(net.forward(&x)?)?;
    let restricted = net.inverse(&net.unflatten_latent(clip_to_prior(&z, prior)?)?)?;
    let full = net.inverse(&net.unflatten_latent(z)?)?;
    let grid = Tensor::concat(0, &[&x, &restricted, &full])?;
    write_grid(&grid, n, out)
}

fn cmd_eval(ckpt: &Path, dataset: &[PathBuf], out: &Path) -> Result<()> {
    let model = Model::load(ckpt)?;
    let cfg = model.cfg();
    let net = model.net();
    let data: Dataset<f32> = match dataset {
        [dir] if dir.is_dir() => load_mnist_split(dir, false)?,
        [single] => {
            return Err(Error::Data(format!(
                "{} is not a directory; pass either an IDX split directory or \
                 an images file and a labels file",
                single.display()
            )))
        }
        [images, labels] => load_mnist_idx(images, labels)?,
        _ => return Err(Error::Data("pass one or two dataset paths".into())),
    };

    let features = Features::build(cfg, &data, &mut |_| {})?;
    let data_fit = reference_fit(cfg, &data, &features)?;
    let mut rng = stream(EVAL_SEED, STREAM_EVAL, 0);
    let gen = match &model {
        Model::Adv { prior, .. } => generate_samples(net, prior, &mut rng, cfg.eval.sample_n)?,
        Model::Ot { priors, .. } => {
            let classes = priors.classes.len();
            let per = cfg.eval.sample_n.div_ceil(classes).max(2);
            let mut parts = Vec::with_capacity(classes);
            for cp in &priors.classes {
                parts.push(generate_class_samples(net, cp, &mut rng, per)?);
            }
            let refs: Vec<&Tensor<f32>> = parts.iter().collect();
            Tensor::concat(0, &refs)?
        }
    };
    let gen_fit = feature_fit(&gen, |im| features.extract(im))?;
    let fd = frechet_distance(&gen_fit, &data_fit)?;

    let m = data.len().min(cfg.eval.sample_n);
    let idx: Vec<usize> = (0..m).collect();
    let x = data.gather_images(&idx)?;
    let x_hat = net.inverse(&net.forward(&x)?)?;
    let l1 = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum::<f64>()
        / x.numel() as f64;

    let mut csv = String::from("metric,value\n");
    csv.push_str(&format!("frechet_feature_distance,{fd}\n"));
    csv.push_str(&format!("round_trip_l1,{l1}\n"));
    match &model {
        Model::Adv { prior, .. } => csv.push_str(&format!("active_dims,{}\n", prior.k())),
        Model::Ot { priors, .. } => {
            for (c, used) in effective_dims(priors, cfg.eval.std_threshold).iter().enumerate() {
                csv.push_str(&format!("effective_dims_class{c:02},{used}\n"));
            }
        }
    }
    std::fs::write(out, &csv)?;
    println!("Fréchet feature distance {fd}");
    println!("round-trip L1 per element {l1} over {m} examples");
    println!("wrote {}", out.display());
    Ok(())
}

// ── Selftest ─────────────────────────────────────────────────────────────────

type Check = (&'static str, fn() -> Result<()>);

fn selftest_checks() -> Vec<Check> {
    vec![
        ("round-trip-f64", check_round_trip_f64),
        ("round-trip-f32", check_round_trip_f32),
        ("net-gradients", check_net_gradients),
        ("recompute-matches-cached", check_recompute_matches_cached),
        ("assignment-oracle", check_assignment_oracle),
        ("hinge-closed-form", check_hinge_closed_form),
        ("frechet-closed-form", check_frechet_closed_form),
        ("checkpoint-round-trip", check_checkpoint_round_trip),
        ("clip-mask", check_clip_mask),
    ]
}

fn cmd_selftest() -> Result<()> {
    let checks = selftest_checks();
    let total = checks.len();
    let mut failed = 0usize;
    let mut first: Option<Error> = None;
    for (name, f) in checks {
        match f() {
            Ok(()) => println!("ok   {name}"),
            Err(e) => {
                println!("FAIL {name}: {e}");
                failed += 1;
                first.get_or_insert(e);
            }
        }
    }
    println!("selftest: {}/{total} checks passed", total - failed);
    match first {
        None => Ok(()),
        Some(e) => Err(e),
    }
}

fn numeric(cond: bool, msg: String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::NonFinite(msg))
    }
}

fn toy_net<S: revgen_core::Scalar>(name: &str, seed: u64) -> Result<InvertibleNet<S>> {
    let spec = preset(name).ok_or_else(|| Error::Config(format!("no preset {name}")))?;
    build_architecture(&mut Rng::new(seed), &spec)
}

fn check_round_trip_f64() -> Result<()> {
    let net = toy_net::<f64>("toy-8x8", 11)?;
    let x = Tensor::sample_normal(&mut Rng::new(12), &[4, 1, 8, 8], 0.4, 0.3)?;
    let back = net.inverse(&net.forward(&x)?)?;
    let worst = x
        .data()
        .iter()
        .zip(back.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    numeric(worst <= 1e-8, format!("f64 round-trip max abs err {worst} exceeds 1e-8"))
}

fn check_round_trip_f32() -> Result<()> {
    let net = toy_net::<f32>("mnist-small", 13)?;
    let x = Tensor::sample_normal(&mut Rng::new(14), &[2, 1, 32, 32], 0.5, 0.25)?;
    let back = net.inverse(&net.forward(&x)?)?;
    let mean = x
        .data()
        .iter()
        .zip(back.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum::<f64>()
        / x.numel() as f64;
    numeric(mean <= 1e-5, format!("f32 round-trip mean L1 {mean} exceeds 1e-5"))
}

fn check_net_gradients() -> Result<()> {
    let mut net = toy_net::<f64>("toy-4x4", 15)?;
    let x = Tensor::sample_normal(&mut Rng::new(16), &[2, 1, 4, 4], 0.3, 0.25)?;
    let theta0 = params_flat(&mut net);
    let report = check_gradients(
        |theta| {
            set_params_flat(&mut net, theta);
            net.zero_grad();
            let z4 = net.forward_train(&x).expect("forward");
            let zf = net.flatten_latent(z4).expect("flatten");
            let loss = 0.5 * zf.data().iter().map(|&v| v * v).sum::<f64>();
            let dz = net.unflatten_latent(zf).expect("unflatten");
            net.backward_cached(&dz).expect("backward");
            (loss, grads_flat(&mut net))
        },
        &theta0,
        1e-5,
        1,
    );
    numeric(
        report.max_rel_err < 1e-4,
        format!(
            "gradient rel err {} at parameter {} exceeds 1e-4",
            report.max_rel_err, report.worst_index
        ),
    )
}

fn check_recompute_matches_cached() -> Result<()> {
    let mut net = toy_net::<f64>("toy-4x4", 17)?;
    let x = Tensor::sample_normal(&mut Rng::new(18), &[3, 1, 4, 4], 0.2, 0.3)?;

    net.zero_grad();
    let z4 = net.forward_train(&x)?;
    let zf = net.flatten_latent(z4)?;
    let dz = net.unflatten_latent(zf)?;
    net.backward_cached(&dz)?;
    let cached = grads_flat(&mut net);

    net.zero_grad();
    let z4 = net.forward(&x)?;
    let dz = net.unflatten_latent(net.flatten_latent(z4.clone())?)?;
    net.backward_recompute(&z4, &dz)?;
    let recomputed = grads_flat(&mut net);

    let worst = cached
        .iter()
        .zip(&recomputed)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0f64, f64::max);
    numeric(worst < 1e-6, format!("recompute vs cached rel err {worst} exceeds 1e-6"))
}

fn check_assignment_oracle() -> Result<()> {
    let mut rng = Rng::new(19);
    for trial in 0..20 {
        let n = 2 + trial % 5;
        let c = Tensor::sample_normal(&mut rng, &[n, n], 0.0, 2.0)?;
        let plan = solve_exact(&c, CostFn::Euclidean)?;
        let best = brute_force_mean_cost(&c, n);
        numeric(
            (plan.cost - best).abs() <= 1e-12,
            format!("solver cost {} differs from brute force {} on a {n}×{n} matrix", plan.cost, best),
        )?;
    }
    Ok(())
}

fn brute_force_mean_cost(c: &Tensor<f64>, n: usize) -> f64 {
    fn go(c: &[f64], n: usize, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                go(c, n, row + 1, used, acc + c[row * n + j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(c.data(), n, 0, &mut vec![false; n], 0.0, &mut best);
    best / n as f64
}

fn check_hinge_closed_form() -> Result<()> {
    let s_prior = Tensor::from_vec(&[2, 1], vec![2.0f64, -3.0])?;
    let s_enc = Tensor::from_vec(&[2, 1], vec![0.5f64, -2.0])?;
    let (ld, dp, de) = hinge_disc_loss(&s_prior, &s_enc);
    numeric(ld == 2.75, format!("hinge disc loss {ld}, expected 2.75"))?;
    numeric(
        dp.data() == [0.0, -0.5] && de.data() == [0.5, 0.0],
        "hinge gradients differ from the closed form".into(),
    )?;
    let (le, ge) = hinge_enc_loss(&s_enc);
    numeric(le == 0.75, format!("hinge encoder loss {le}, expected 0.75"))?;
    numeric(ge.data() == [-0.5, -0.5], "encoder gradient is not -1/m".into())
}

fn check_frechet_closed_form() -> Result<()> {
    use revgen_core::eval::GaussianFit;
    let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0])?;
    let a = GaussianFit { mean: Tensor::zeros(&[2]), cov: eye.clone() };
    let same = frechet_distance(&a, &a)?;
    numeric(same == 0.0, format!("self-distance {same}, expected exactly 0"))?;

    let b = GaussianFit { mean: Tensor::from_vec(&[2], vec![2.0, 0.0])?, cov: eye };
    let shifted = frechet_distance(&a, &b)?;
    numeric((shifted - 4.0).abs() < 1e-9, format!("mean-shift distance {shifted}, expected 4"))?;

    let c = GaussianFit { mean: Tensor::zeros(&[1]), cov: Tensor::from_vec(&[1, 1], vec![4.0])? };
    let d = GaussianFit { mean: Tensor::zeros(&[1]), cov: Tensor::from_vec(&[1, 1], vec![1.0])? };
    let scale = frechet_distance(&c, &d)?;
    numeric((scale - 1.0).abs() < 1e-9, format!("std-gap distance {scale}, expected 1"))
}

fn check_checkpoint_round_trip() -> Result<()> {
    let mut snap = Snapshot::default();
    snap.push_string("meta/regime", "probe");
    snap.push_u64("meta/epoch", 3);
    snap.push_tensor("probe/w", &Tensor::from_vec(&[3], vec![1.5f32, -2.25, 0.0])?);
    let bytes = snap.to_bytes();
    let again = Snapshot::from_bytes(&bytes)?.to_bytes();
    if bytes != again {
        return Err(Error::Checkpoint("serialization is not byte-stable".into()));
    }
    let mut corrupt = bytes.clone();
    let last = corrupt.len() - 1;
    corrupt[last] ^= 0x40;
    if Snapshot::from_bytes(&corrupt).is_ok() {
        return Err(Error::Checkpoint("corruption went undetected".into()));
    }
    Ok(())
}

fn check_clip_mask() -> Result<()> {
    let prior = PriorSpec::new(4, vec![1, 3], PriorFamily::StandardNormal, 2.0)?;
    let z = Tensor::from_vec(&[1, 4], vec![3.0f64, 0.5, -5.0, 2.0])?;
    let (zc, mask) = clip_with_mask(&z, &prior)?;
    numeric(
        zc.data() == [0.0, 0.5, 0.0, 2.0],
        format!("clip produced {:?}", zc.data()),
    )?;
    numeric(
        mask.data() == [0.0, 1.0, 0.0, 0.0],
        format!("mask {:?}: inactive dims and saturated dims must be 0", mask.data()),
    )
}
