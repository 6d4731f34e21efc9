//! Training loops for both regimes: the adversarial latent-matching loop
//! (reconstruction warm-up, then alternating critic/encoder steps) and the
//! adversary-free loop that matches per-class encodings to learnable
//! Gaussians with an exact assignment solver.
//!
//! Determinism contract: every random draw comes from a stream derived as
//! `Rng::new(seed).split2(purpose, epoch)`, so runs with fixed seeds are
//! bit-identical, and a resumed run replays exactly the epochs a continuous
//! run would have produced.

use std::fs::{File, OpenOptions};
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

use crate::checkpoint::{
    record_adam, record_buffers, record_params, restore_adam, restore_buffers, restore_params,
    Snapshot,
};
use crate::config::Config;
use crate::data::{batch_iterator, Dataset};
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::eval::{
    feature_fit, frechet_distance, generate_class_samples, generate_samples,
    identity_features, train_classifier, Classifier, GaussianFit,
};
use crate::latent::{
    init_class_priors, sample_prior, select_active_dims, ClassPriors, PriorSpec,
};
use crate::losses::{
    hinge_disc_loss, hinge_enc_loss, perturbation_loss, recon_loss, LossReport,
};
use crate::optim::Adam;
use crate::ot::{ot_loss_and_grad, CostFn};
use crate::params::Params;
use crate::revnet::{build_architecture, InvertibleNet};
use crate::rng::Rng;
use crate::tensor::Tensor;

// Stream purposes; each (purpose, epoch) pair is an independent stream.
pub const STREAM_INIT: u64 = 0x01;
pub const STREAM_SHUFFLE: u64 = 0x02;
pub const STREAM_PRIOR: u64 = 0x03;
pub const STREAM_NOISE: u64 = 0x04;
pub const STREAM_EVAL: u64 = 0x05;

/// Fixed base seed for evaluation draws, independent of the training seeds
/// so differently seeded runs are measured with the same probe.
pub const EVAL_SEED: u64 = 0xE7A1;

pub fn stream(seed: u64, purpose: u64, epoch: usize) -> Rng {
    Rng::new(seed).split2(purpose, epoch as u64)
}

fn now_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

// ── Run directory ────────────────────────────────────────────────────────────

/// A run directory: config snapshot (written before the first step), plain
/// text event log (the only place wall-clock time appears), metrics CSV, and
/// checkpoints. Every artifact is regenerable from snapshot + seeds.
pub struct RunDir {
    pub root: PathBuf,
    log: File,
    metrics: File,
    pub config_crc: u32,
    step: u64,
}

const METRICS_HEADER: &str =
    "phase,epoch,recon_l1,clip_l2,adv_disc,adv_enc,perturb,ot,total,frechet\n";

impl RunDir {
    pub fn create(root: &Path, cfg: &Config) -> Result<RunDir> {
        std::fs::create_dir_all(root).map_err(|e| Error::Io(format!("{}: {e}", root.display())))?;
        let text = cfg.to_toml_string()?;
        let config_crc = crc32fast::hash(text.as_bytes());
        std::fs::write(root.join("config.toml"), &text)
            .map_err(|e| Error::Io(format!("config snapshot: {e}")))?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(root.join("run.log"))
            .map_err(|e| Error::Io(format!("run.log: {e}")))?;
        let metrics_path = root.join("metrics.csv");
        let fresh = !metrics_path.exists();
        let mut metrics = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&metrics_path)
            .map_err(|e| Error::Io(format!("metrics.csv: {e}")))?;
        if fresh {
            metrics
                .write_all(METRICS_HEADER.as_bytes())
                .map_err(|e| Error::Io(format!("metrics.csv: {e}")))?;
        }
        let mut dir = RunDir { root: root.to_path_buf(), log, metrics, config_crc, step: 0 };
        dir.log(&format!("run dir created, config crc {config_crc:#010x}"));
        Ok(dir)
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn log(&mut self, msg: &str) {
        let line = format!("[{}] step={} {}\n", now_ms(), self.step, msg);
        let _ = self.log.write_all(line.as_bytes());
    }

    pub fn append_metrics(&mut self, row: &str) -> Result<()> {
        self.metrics
            .write_all(row.as_bytes())
            .map_err(|e| Error::Io(format!("metrics.csv: {e}")))
    }

    pub fn checkpoint_path(&self, tag: &str) -> PathBuf {
        self.root.join(format!("ckpt-{tag}.rgck"))
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One metrics row; fields follow the fixed header order.
pub fn metrics_row(phase: &str, epoch: usize, report: &LossReport, frechet: Option<f64>) -> String {
    let mut cols = vec![phase.to_string(), epoch.to_string()];
    for (_, v) in report.entries() {
        cols.push(fmt_cell(v));
    }
    cols.push(report.total.to_string());
    cols.push(fmt_cell(frechet));
    cols.join(",") + "\n"
}

// ── Feature extraction for the distribution metric ───────────────────────────

pub enum Features {
    Identity,
    Classifier(Classifier<f32>),
}

impl Features {
    pub fn extract(&self, images: &Tensor<f32>) -> Result<Tensor<f64>> {
        match self {
            Features::Identity => identity_features(images),
            Features::Classifier(c) => c.features(images),
        }
    }

    /// Build the configured feature map; the classifier variant trains a
    /// small fixed-seed model on (a prefix of) the dataset.
    pub fn build(
        cfg: &Config,
        data: &Dataset<f32>,
        log: &mut dyn FnMut(&str),
    ) -> Result<Features> {
        if cfg.eval.feature == "identity" {
            return Ok(Features::Identity);
        }
        let labels = data
            .labels
            .as_ref()
            .ok_or_else(|| Error::Data("classifier features require labels".into()))?;
        let n = data.len().min(cfg.eval.classifier_train_n);
        let idx: Vec<usize> = (0..n).collect();
        let xs = data.gather_images(&idx)?;
        let ys = &labels[..n];
        let [_, c, h, w] = xs.dims4()?;
        let mut clf = Classifier::new(
            &mut Rng::new(cfg.eval.classifier_seed).split2(STREAM_INIT, 0),
            c * h * w,
            data.num_classes.max(2),
        );
        let mut trng = Rng::new(cfg.eval.classifier_seed).split2(STREAM_SHUFFLE, 0);
        let loss =
            train_classifier(&mut clf, &xs, ys, cfg.eval.classifier_epochs, 64, &mut trng)?;
        let acc = clf.accuracy(&xs, ys)?;
        log(&format!(
            "feature classifier trained on {n} examples: loss {loss:.4}, train accuracy {acc:.4}"
        ));
        Ok(Features::Classifier(clf))
    }
}

/// Gaussian fit of the configured features over a dataset prefix; the
/// reference side of the feature-distance metric.
pub fn reference_fit(
    cfg: &Config,
    data: &Dataset<f32>,
    features: &Features,
) -> Result<GaussianFit> {
    let n = data.len().min(cfg.eval.sample_n.max(1024));
    let idx: Vec<usize> = (0..n).collect();
    let xs = data.gather_images(&idx)?;
    feature_fit(&xs, |im| features.extract(im))
}

// ── Shared setup ─────────────────────────────────────────────────────────────

/// Keep at most `cap` examples per class (0 = keep everything), preserving
/// dataset order. Unlabeled data is capped as a whole.
pub fn subset_per_class<SC: crate::scalar::Scalar>(
    data: &Dataset<SC>,
    cap: usize,
) -> Result<Dataset<SC>> {
    if cap == 0 {
        return Ok(data.clone());
    }
    let keep: Vec<usize> = match &data.labels {
        Some(labels) => {
            let mut counts = vec![0usize; data.num_classes];
            let mut keep = Vec::new();
            for (i, &l) in labels.iter().enumerate() {
                if counts[l] < cap {
                    counts[l] += 1;
                    keep.push(i);
                }
            }
            keep
        }
        None => (0..data.len().min(cap)).collect(),
    };
    Ok(Dataset {
        images: data.gather_images(&keep)?,
        labels: data.labels.as_ref().map(|ls| keep.iter().map(|&i| ls[i]).collect()),
        num_classes: data.num_classes,
        shift: data.shift,
        scale: data.scale,
    })
}

fn build_net(cfg: &Config) -> Result<InvertibleNet<f32>> {
    let spec = cfg.arch_spec()?;
    build_architecture(&mut stream(cfg.training.seed_net, STREAM_INIT, 0), &spec)
}

fn init_sample(cfg: &Config, data: &Dataset<f32>) -> Result<(Tensor<f32>, Vec<usize>)> {
    let n = data.len().min(cfg.prior.select_sample);
    let idx: Vec<usize> = (0..n).collect();
    Ok((data.gather_images(&idx)?, idx))
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{name} became {v}")))
    }
}

// ── Adversarial regime ───────────────────────────────────────────────────────

pub struct AdvSession {
    pub net: InvertibleNet<f32>,
    pub disc: Discriminator<f32>,
    pub prior: PriorSpec,
    pub adam_net: Adam,
    pub adam_disc: Adam,
    pub epoch_done: usize,
}

impl AdvSession {
    /// Fresh session: nets from their seeds, active dims picked from the
    /// untrained encoder's per-dim variation on an initial sample.
    pub fn init(cfg: &Config, data: &Dataset<f32>, dir: &mut RunDir) -> Result<AdvSession> {
        let net = build_net(cfg)?;
        let d = net.latent_len();
        let k = cfg.prior.k.min(d);
        let (sample, idx) = init_sample(cfg, data)?;
        if idx.len() < 1000 {
            dir.log(&format!(
                "active-dim selection sample has only {} examples; statistics may be coarse",
                idx.len()
            ));
        }
        let dims = select_active_dims(&net, &sample, k)?;
        let prior = PriorSpec::new(d, dims, cfg.prior_family()?, cfg.prior.clip_bound)?;
        let disc = Discriminator::new(
            &mut stream(cfg.training.seed_adv, STREAM_INIT, 0),
            k,
            400,
            800,
        );
        let t = &cfg.training;
        Ok(AdvSession {
            net,
            disc,
            prior,
            adam_net: Adam::new(t.lr_net, t.beta1, t.beta2),
            adam_disc: Adam::new(t.lr_disc, t.beta1, t.beta2),
            epoch_done: 0,
        })
    }

    pub fn to_snapshot(&mut self, cfg: &Config) -> Result<Snapshot> {
        let mut snap = Snapshot::default();
        snap.push_string("meta/regime", "adversarial");
        snap.push_u64("meta/epoch", self.epoch_done as u64);
        let text = cfg.to_toml_string()?;
        snap.push_u64("meta/config_crc", crc32fast::hash(text.as_bytes()) as u64);
        snap.push_string("meta/config", &text);
        let dims: Vec<u64> = self.prior.active_dims.iter().map(|&d| d as u64).collect();
        snap.push_u64s("prior/active_dims", &dims);
        record_params(&mut snap, "net", &mut self.net);
        record_params(&mut snap, "disc", &mut self.disc);
        record_buffers(&mut snap, "disc_buf", &mut self.disc);
        record_adam(&mut snap, "adam_net", &self.adam_net);
        record_adam(&mut snap, "adam_disc", &self.adam_disc);
        Ok(snap)
    }

    pub fn restore(cfg: &Config, data: &Dataset<f32>, snap: &Snapshot, dir: &mut RunDir) -> Result<AdvSession> {
        let regime = snap.string("meta/regime")?;
        if regime != "adversarial" {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a '{regime}' run, not an adversarial one"
            )));
        }
        let mut s = AdvSession::init(cfg, data, dir)?;
        let dims: Vec<usize> = snap.u64s("prior/active_dims")?.iter().map(|&d| d as usize).collect();
        s.prior = PriorSpec::new(
            s.net.latent_len(),
            dims,
            cfg.prior_family()?,
            cfg.prior.clip_bound,
        )?;
        restore_params(snap, "net", &mut s.net)?;
        restore_params(snap, "disc", &mut s.disc)?;
        restore_buffers(snap, "disc_buf", &mut s.disc)?;
        restore_adam(snap, "adam_net", &mut s.adam_net)?;
        restore_adam(snap, "adam_disc", &mut s.adam_disc)?;
        s.epoch_done = snap.u64_scalar("meta/epoch")? as usize;
        Ok(s)
    }
}

/// One critic step: score prior draws against (detached) encodings and take
/// a hinge-loss Adam step on the critic alone. Returns the critic loss.
pub fn adv_disc_step(
    s: &mut AdvSession,
    xb: &Tensor<f32>,
    prior_rng: &mut Rng,
) -> Result<f64> {
    let n = xb.shape()[0];
    let z = s.net.flatten_latent(s.net.forward(xb)?)?;
    let z_enc = s.prior.gather_active(&z)?;
    let z_prior = s.prior.gather_active(&sample_prior::<f32>(&s.prior, prior_rng, n))?;
    let both = Tensor::concat(0, &[&z_prior, &z_enc])?;
    let scores = s.disc.forward_train(&both)?;
    let halves = scores.split(0, &[n, n])?;
    let (loss, dp, de) = hinge_disc_loss(&halves[0], &halves[1]);
    check_finite("critic loss", loss)?;
    s.disc.zero_grad();
    s.disc.backward(&Tensor::concat(0, &[&dp, &de])?)?;
    s.adam_disc.step(&mut s.disc)?;
    Ok(loss)
}

/// One encoder/decoder step: reconstruction + clip penalty + the encoder's
/// adversarial term, applied to the net alone (the critic's parameters are
/// read but never stepped). Returns (recon_l1, clip_l2, adv_enc, total).
pub fn adv_net_step(
    s: &mut AdvSession,
    xb: &Tensor<f32>,
    lambda_l1: f64,
    lambda_l2: f64,
    adversarial: bool,
) -> Result<(f64, f64, Option<f64>, f64)> {
    s.net.zero_grad();
    let (l1, l2, mut total) = recon_loss(&mut s.net, &s.prior, xb, lambda_l1, lambda_l2)?;
    let mut adv = None;
    if adversarial {
        let z4 = s.net.forward(xb)?;
        let z = s.net.flatten_latent(z4.clone())?;
        let za = s.prior.gather_active(&z)?;
        let scores = s.disc.forward_train(&za)?;
        let (le, ds) = hinge_enc_loss(&scores);
        let dza = s.disc.backward(&ds)?;
        let dz = s.prior.scatter_active(&dza)?;
        let dz4 = s.net.unflatten_latent(dz)?;
        s.net.backward_recompute(&z4, &dz4)?;
        // The critic accumulated gradients while routing ours; they must
        // never reach its optimizer.
        s.disc.zero_grad();
        adv = Some(le);
        total += le;
    }
    check_finite("net loss", total)?;
    s.adam_net.step(&mut s.net)?;
    Ok((l1, l2, adv, total))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    pub final_frechet: Option<f64>,
    pub checkpoint: PathBuf,
}

/// Full adversarial run: reconstruction-only epochs, then alternating
/// critic/net epochs. Appends one metrics row per epoch and checkpoints on
/// the configured cadence plus a final checkpoint (which for a zero-epoch
/// run is exactly the initialized state).
pub fn train_adversarial(
    cfg: &Config,
    data: &Dataset<f32>,
    out: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut dir = RunDir::create(out, cfg)?;
    let features = Features::build(cfg, data, &mut |m| dir.log(m))?;
    let data_fit = reference_fit(cfg, data, &features)?;
    let mut s = match resume {
        Some(p) => {
            let snap = Snapshot::load(p)?;
            let s = AdvSession::restore(cfg, data, &snap, &mut dir)?;
            dir.log(&format!("resumed from {} at epoch {}", p.display(), s.epoch_done));
            s
        }
        None => AdvSession::init(cfg, data, &mut dir)?,
    };
    let t = &cfg.training;
    let total_epochs = t.recon_epochs + t.adv_epochs;
    let mut final_frechet = None;
    let mut step: u64 = 0;
    for epoch in s.epoch_done..total_epochs {
        let phase_adv = epoch >= t.recon_epochs;
        let mut shuffle = stream(t.seed_data, STREAM_SHUFFLE, epoch);
        let mut prior_rng = stream(t.seed_adv, STREAM_PRIOR, epoch);
        let batches = batch_iterator(data, t.batch_size, &mut shuffle, false)?;
        let nb = batches.len() as f64;
        let (mut a_l1, mut a_l2, mut a_d, mut a_e, mut a_t) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ids in &batches {
            let xb = data.gather_images(ids)?;
            if phase_adv {
                a_d += adv_disc_step(&mut s, &xb, &mut prior_rng)?;
            }
            let (l1, l2, adv, total) =
                adv_net_step(&mut s, &xb, cfg.losses.lambda_l1, cfg.losses.lambda_l2, phase_adv)?;
            a_l1 += l1;
            a_l2 += l2;
            a_e += adv.unwrap_or(0.0);
            a_t += total;
            step += 1;
            dir.set_step(step);
        }
        let mut eval_rng = stream(EVAL_SEED, STREAM_EVAL, epoch);
        let gen = generate_samples(&s.net, &s.prior, &mut eval_rng, cfg.eval.sample_n)?;
        let gen_fit = feature_fit(&gen, |im| features.extract(im))?;
        let fd = frechet_distance(&gen_fit, &data_fit)?;
        check_finite("feature distance", fd)?;
        final_frechet = Some(fd);
        let report = LossReport {
            recon_l1: Some(a_l1 / nb),
            clip_l2: Some(a_l2 / nb),
            adv_disc: phase_adv.then_some(a_d / nb),
            adv_enc: phase_adv.then_some(a_e / nb),
            perturb: None,
            ot: None,
            total: a_t / nb,
        };
        let phase = if phase_adv { "adv" } else { "recon" };
        dir.append_metrics(&metrics_row(phase, epoch, &report, Some(fd)))?;
        dir.log(&format!(
            "epoch {epoch} ({phase}): recon_l1 {} total {} frechet {fd}",
            a_l1 / nb,
            a_t / nb
        ));
        s.epoch_done = epoch + 1;
        if t.checkpoint_every > 0 && s.epoch_done % t.checkpoint_every == 0 {
            let p = dir.checkpoint_path(&format!("{:04}", s.epoch_done));
            s.to_snapshot(cfg)?.save(&p)?;
            dir.log(&format!("wrote {}", p.display()));
        }
    }
    let final_path = dir.checkpoint_path("final");
    s.to_snapshot(cfg)?.save(&final_path)?;
    dir.log(&format!("wrote {}", final_path.display()));
    Ok(TrainOutcome { epochs_run: s.epoch_done, final_frechet, checkpoint: final_path })
}

// ── Transport regime ─────────────────────────────────────────────────────────

pub struct OtSession {
    pub net: InvertibleNet<f32>,
    pub priors: ClassPriors<f32>,
    pub adam_net: Adam,
    pub adam_prior: Adam,
    pub epoch_done: usize,
}

impl OtSession {
    pub fn init(cfg: &Config, data: &Dataset<f32>, dir: &mut RunDir) -> Result<OtSession> {
        let labels = data
            .labels
            .as_ref()
            .ok_or_else(|| Error::Data("the transport regime requires labels".into()))?;
        let net = build_net(cfg)?;
        let (sample, idx) = init_sample(cfg, data)?;
        if idx.len() < 1000 {
            dir.log(&format!(
                "prior initialization sample has only {} examples; statistics may be coarse",
                idx.len()
            ));
        }
        let priors = init_class_priors(&net, &sample, &labels[..idx.len()], data.num_classes)?;
        let t = &cfg.training;
        Ok(OtSession {
            net,
            priors,
            adam_net: Adam::new(t.lr_net, t.beta1, t.beta2),
            adam_prior: Adam::new(t.lr_prior, t.beta1, t.beta2),
            epoch_done: 0,
        })
    }

    pub fn to_snapshot(&mut self, cfg: &Config) -> Result<Snapshot> {
        let mut snap = Snapshot::default();
        snap.push_string("meta/regime", "ot");
        snap.push_u64("meta/epoch", self.epoch_done as u64);
        let text = cfg.to_toml_string()?;
        snap.push_u64("meta/config_crc", crc32fast::hash(text.as_bytes()) as u64);
        snap.push_string("meta/config", &text);
        snap.push_u64("priors/count", self.priors.classes.len() as u64);
        record_params(&mut snap, "net", &mut self.net);
        record_params(&mut snap, "priors", &mut self.priors);
        record_adam(&mut snap, "adam_net", &self.adam_net);
        record_adam(&mut snap, "adam_prior", &self.adam_prior);
        Ok(snap)
    }

    pub fn restore(cfg: &Config, data: &Dataset<f32>, snap: &Snapshot, dir: &mut RunDir) -> Result<OtSession> {
        let regime = snap.string("meta/regime")?;
        if regime != "ot" {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a '{regime}' run, not a transport one"
            )));
        }
        let mut s = OtSession::init(cfg, data, dir)?;
        let count = snap.u64_scalar("priors/count")? as usize;
        if count != s.priors.classes.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {count} class priors, dataset wants {}",
                s.priors.classes.len()
            )));
        }
        restore_params(snap, "net", &mut s.net)?;
        restore_params(snap, "priors", &mut s.priors)?;
        restore_adam(snap, "adam_net", &mut s.adam_net)?;
        restore_adam(snap, "adam_prior", &mut s.adam_prior)?;
        s.epoch_done = snap.u64_scalar("meta/epoch")? as usize;
        Ok(s)
    }
}

/// One transport step over a labeled batch: per class present in the batch,
/// exactly match encodings against an equal-size draw from that class's
/// Gaussian and push gradients through both sides; classes absent from the
/// batch are skipped. Adds the weighted perturbation term, then steps the
/// net and the priors jointly. Returns (sum of class transport costs,
/// perturbation loss if enabled).
pub fn ot_step(
    s: &mut OtSession,
    xb: &Tensor<f32>,
    yb: &[usize],
    cost: CostFn,
    lambda_p: f64,
    noise_std: f64,
    noise_rng: &mut Rng,
) -> Result<(f64, Option<f64>)> {
    let n = xb.shape()[0];
    s.net.zero_grad();
    s.priors.zero_grad();
    let z4 = s.net.forward(xb)?;
    let z = s.net.flatten_latent(z4.clone())?;
    let d = z.shape()[1];
    let mut dz = Tensor::zeros(&[n, d]);
    let mut ot_total = 0.0;
    for class in 0..s.priors.classes.len() {
        let rows: Vec<usize> = (0..n).filter(|&i| yb[i] == class).collect();
        if rows.is_empty() {
            continue;
        }
        let m = rows.len();
        let mut zc = Tensor::zeros(&[m, d]);
        for (i, &r) in rows.iter().enumerate() {
            zc.data_mut()[i * d..(i + 1) * d].copy_from_slice(&z.data()[r * d..(r + 1) * d]);
        }
        let g = Tensor::sample_normal(noise_rng, &[m, d], 0.0, 1.0)?;
        let y = s.priors.classes[class].sample_with_noise(&g)?;
        let (cost_c, dx, dy, _) = ot_loss_and_grad(&zc, &y, cost)?;
        ot_total += cost_c;
        for (i, &r) in rows.iter().enumerate() {
            for j in 0..d {
                dz.data_mut()[r * d + j] += dx.data()[i * d + j];
            }
        }
        s.priors.classes[class].backward_sample(&g, &dy)?;
    }
    check_finite("transport loss", ot_total)?;
    s.net.backward_recompute(&z4, &s.net.unflatten_latent(dz)?)?;
    let mut perturb = None;
    if lambda_p > 0.0 {
        let p = perturbation_loss(&mut s.net, xb, noise_std, noise_rng, lambda_p)?;
        check_finite("perturbation loss", p)?;
        perturb = Some(p);
    }
    s.adam_net.step(&mut s.net)?;
    s.adam_prior.step(&mut s.priors)?;
    Ok((ot_total, perturb))
}

/// Full transport run over stratified, class-balanced minibatches.
pub fn train_ot(
    cfg: &Config,
    data: &Dataset<f32>,
    out: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut dir = RunDir::create(out, cfg)?;
    let features = Features::build(cfg, data, &mut |m| dir.log(m))?;
    let data_fit = reference_fit(cfg, data, &features)?;
    let mut s = match resume {
        Some(p) => {
            let snap = Snapshot::load(p)?;
            let s = OtSession::restore(cfg, data, &snap, &mut dir)?;
            dir.log(&format!("resumed from {} at epoch {}", p.display(), s.epoch_done));
            s
        }
        None => OtSession::init(cfg, data, &mut dir)?,
    };
    let t = &cfg.training;
    let cost = cfg.cost_fn()?;
    let classes = s.priors.classes.len();
    let batch = t.per_class_batch * classes;
    let mut final_frechet = None;
    let mut step: u64 = 0;
    for epoch in s.epoch_done..t.ot_epochs {
        let mut shuffle = stream(t.seed_data, STREAM_SHUFFLE, epoch);
        let mut noise = stream(t.seed_data, STREAM_NOISE, epoch);
        let batches = batch_iterator(data, batch, &mut shuffle, true)?;
        let nb = batches.len() as f64;
        let (mut a_ot, mut a_p, mut a_t) = (0.0, 0.0, 0.0);
        for ids in &batches {
            let xb = data.gather_images(ids)?;
            let yb = data.gather_labels(ids)?;
            let (ot, perturb) = ot_step(
                &mut s,
                &xb,
                &yb,
                cost,
                cfg.losses.lambda_p,
                cfg.losses.noise_std,
                &mut noise,
            )?;
            a_ot += ot;
            a_p += perturb.unwrap_or(0.0);
            a_t += ot + cfg.losses.lambda_p * perturb.unwrap_or(0.0);
            step += 1;
            dir.set_step(step);
        }
        let mut eval_rng = stream(EVAL_SEED, STREAM_EVAL, epoch);
        let per = cfg.eval.sample_n.div_ceil(classes).max(2);
        let mut parts = Vec::with_capacity(classes);
        for cp in &s.priors.classes {
            parts.push(generate_class_samples(&s.net, cp, &mut eval_rng, per)?);
        }
        let refs: Vec<&Tensor<f32>> = parts.iter().collect();
        let gen = Tensor::concat(0, &refs)?;
        let gen_fit = feature_fit(&gen, |im| features.extract(im))?;
        let fd = frechet_distance(&gen_fit, &data_fit)?;
        check_finite("feature distance", fd)?;
        final_frechet = Some(fd);
        let report = LossReport {
            recon_l1: None,
            clip_l2: None,
            adv_disc: None,
            adv_enc: None,
            perturb: (cfg.losses.lambda_p > 0.0).then_some(a_p / nb),
            ot: Some(a_ot / nb),
            total: a_t / nb,
        };
        dir.append_metrics(&metrics_row("ot", epoch, &report, Some(fd)))?;
        dir.log(&format!("epoch {epoch} (ot): transport {} frechet {fd}", a_ot / nb));
        s.epoch_done = epoch + 1;
        if t.checkpoint_every > 0 && s.epoch_done % t.checkpoint_every == 0 {
            let p = dir.checkpoint_path(&format!("{:04}", s.epoch_done));
            s.to_snapshot(cfg)?.save(&p)?;
            dir.log(&format!("wrote {}", p.display()));
        }
    }
    let final_path = dir.checkpoint_path("final");
    s.to_snapshot(cfg)?.save(&final_path)?;
    dir.log(&format!("wrote {}", final_path.display()));
    Ok(TrainOutcome { epochs_run: s.epoch_done, final_frechet, checkpoint: final_path })
}

// ── Data-free checkpoint loading (for sampling and evaluation tools) ─────────

/// Rebuild an adversarial checkpoint's net and prior from its own embedded
/// config snapshot; no dataset is needed.
pub fn load_adv_model(snap: &Snapshot) -> Result<(Config, InvertibleNet<f32>, PriorSpec)> {
    let regime = snap.string("meta/regime")?;
    if regime != "adversarial" {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds a '{regime}' run, not an adversarial one"
        )));
    }
    let cfg = Config::from_toml_str(&snap.string("meta/config")?)?;
    let mut net = build_net(&cfg)?;
    restore_params(snap, "net", &mut net)?;
    let dims: Vec<usize> = snap.u64s("prior/active_dims")?.iter().map(|&d| d as usize).collect();
    let prior =
        PriorSpec::new(net.latent_len(), dims, cfg.prior_family()?, cfg.prior.clip_bound)?;
    Ok((cfg, net, prior))
}

/// Rebuild a transport checkpoint's net and class priors.
pub fn load_ot_model(snap: &Snapshot) -> Result<(Config, InvertibleNet<f32>, ClassPriors<f32>)> {
    let regime = snap.string("meta/regime")?;
    if regime != "ot" {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds a '{regime}' run, not a transport one"
        )));
    }
    let cfg = Config::from_toml_str(&snap.string("meta/config")?)?;
    let mut net = build_net(&cfg)?;
    restore_params(snap, "net", &mut net)?;
    let count = snap.u64_scalar("priors/count")? as usize;
    let d = net.latent_len();
    let classes: Result<Vec<_>> = (0..count)
        .map(|_| {
            crate::latent::ClassPrior::from_moments(
                Tensor::zeros(&[d]),
                &Tensor::filled(&[d], 1.0f32),
            )
        })
        .collect();
    let mut priors = ClassPriors { classes: classes? };
    restore_params(snap, "priors", &mut priors)?;
    Ok((cfg, net, priors))
}
