//! The invertible network core: reversible residual blocks, invertible
//! subsampling, end-to-end exact inverses, and memory-efficient
//! backpropagation that reconstructs activations instead of storing them.
//!
//! A block computes
//!   y1 = F(x2) + x1,  y2 = G(y1) + x2
//! over a first-half/second-half channel split, and inverts algebraically:
//!   x2 = y2 − G(y1),  x1 = y1 − F(x2).

use crate::error::{Error, Result};
use crate::layers::{relu_backward, relu_forward, Conv};
use crate::memprobe::ActBuf;
use crate::params::{scoped, Params};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

// ── The residual functions F and G ───────────────────────────────────────────

/// conv (C_half→width) → ReLU → conv (width→C_half); input and output
/// shapes match, as the additive coupling requires.
#[derive(Debug)]
pub struct CouplingFn<S: Scalar> {
    pub c1: Conv<S>,
    pub c2: Conv<S>,
    /// Pre-activation cached between forward_train and backward.
    pre: Option<ActBuf<S>>,
}

impl<S: Scalar> CouplingFn<S> {
    pub fn new(rng: &mut Rng, half_ch: usize, width: usize, k: usize) -> Self {
        CouplingFn {
            c1: Conv::new(rng, half_ch, width, k),
            c2: Conv::new(rng, width, half_ch, k),
            pre: None,
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let h = self.c1.forward(x)?;
        self.c2.forward(&relu_forward(&h))
    }

    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let h = self.c1.forward_train(x)?;
        let y = self.c2.forward_train(&relu_forward(&h))?;
        self.pre = Some(ActBuf::new(h));
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<S>) -> Result<Tensor<S>> {
        let h = self
            .pre
            .take()
            .ok_or_else(|| Error::Shape("CouplingFn::backward without forward_train".into()))?
            .into_inner();
        let dh_post = self.c2.backward(dy)?;
        let dh = relu_backward(&h, &dh_post)?;
        self.c1.backward(&dh)
    }
}

impl<S: Scalar> Params<S> for CouplingFn<S> {
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    ) {
        self.c1.visit_params(&scoped(prefix, "c1"), f);
        self.c2.visit_params(&scoped(prefix, "c2"), f);
    }
}

// ── Reversible block ─────────────────────────────────────────────────────────

#[derive(Debug)]
pub struct RevBlock<S: Scalar> {
    pub f: CouplingFn<S>,
    pub g: CouplingFn<S>,
}

impl<S: Scalar> RevBlock<S> {
    pub fn new(rng: &mut Rng, half_ch: usize, width: usize, k: usize) -> Self {
        RevBlock {
            f: CouplingFn::new(rng, half_ch, width, k),
            g: CouplingFn::new(rng, half_ch, width, k),
        }
    }

    /// y1 = F(x2) + x1; y2 = G(y1) + x2
    pub fn forward(&self, x1: &Tensor<S>, x2: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        let y1 = self.f.forward(x2)?.add(x1)?;
        let y2 = self.g.forward(&y1)?.add(x2)?;
        Ok((y1, y2))
    }

    /// x2 = y2 − G(y1); x1 = y1 − F(x2)
    pub fn inverse(&self, y1: &Tensor<S>, y2: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        let x2 = y2.sub(&self.g.forward(y1)?)?;
        let x1 = y1.sub(&self.f.forward(&x2)?)?;
        Ok((x1, x2))
    }

    /// Forward caching layer activations for the reference (stored-activation)
    /// backward pass.
    pub fn forward_train(&mut self, x1: &Tensor<S>, x2: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        let y1 = self.f.forward_train(x2)?.add(x1)?;
        let y2 = self.g.forward_train(&y1)?.add(x2)?;
        Ok((y1, y2))
    }

    /// Backward consuming the caches left by [`forward_train`].
    pub fn backward_cached(&mut self, dy1: &Tensor<S>, dy2: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        let dy1_eff = dy1.add(&self.g.backward(dy2)?)?;
        let dx2 = dy2.add(&self.f.backward(&dy1_eff)?)?;
        Ok((dy1_eff, dx2))
    }

    /// Memory-efficient backward: reconstructs (x1, x2) from the outputs via
    /// the inverse, recomputes F/G activations locally, and returns inputs
    /// plus input gradients. Accumulates parameter gradients.
    pub fn backward_from_outputs(
        &mut self,
        y1: &Tensor<S>,
        y2: &Tensor<S>,
        dy1: &Tensor<S>,
        dy2: &Tensor<S>,
    ) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>, Tensor<S>)> {
        // Reconstruct x2 (and G's activations) from y1.
        let gy = self.g.forward_train(y1)?;
        let x2 = y2.sub(&gy)?;
        let dy1_eff = dy1.add(&self.g.backward(dy2)?)?;
        // Reconstruct x1 (and F's activations) from x2.
        let fx = self.f.forward_train(&x2)?;
        let x1 = y1.sub(&fx)?;
        let dx2 = dy2.add(&self.f.backward(&dy1_eff)?)?;
        Ok((x1, x2, dy1_eff, dx2))
    }

    /// Backward through the *inverse* map (y1,y2) ↦ (x1,x2), given its
    /// outputs and their gradients. Returns the reconstructed (y1, y2) and
    /// gradients w.r.t. them; parameter gradients pick up the inverse pass's
    /// negative signs.
    pub fn backward_through_inverse(
        &mut self,
        x1: &Tensor<S>,
        x2: &Tensor<S>,
        dx1: &Tensor<S>,
        dx2: &Tensor<S>,
    ) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>, Tensor<S>)> {
        // x1 = y1 − F(x2): gradient −F'ᵀdx1 flows into x2.
        let fx = self.f.forward_train(x2)?;
        let y1 = x1.add(&fx)?;
        let neg_df = self.f.backward(&dx1.scale(-S::one()))?;
        let dx2_acc = dx2.add(&neg_df)?;
        // x2 = y2 − G(y1): gradient −G'ᵀdx2_acc flows into y1.
        let gy = self.g.forward_train(&y1)?;
        let y2 = x2.add(&gy)?;
        let neg_dg = self.g.backward(&dx2_acc.scale(-S::one()))?;
        let dy1 = dx1.add(&neg_dg)?;
        Ok((y1, y2, dy1, dx2_acc))
    }
}

impl<S: Scalar> Params<S> for RevBlock<S> {
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    ) {
        self.f.visit_params(&scoped(prefix, "f"), f);
        self.g.visit_params(&scoped(prefix, "g"), f);
    }
}

// ── Invertible subsampling ───────────────────────────────────────────────────

/// Space-to-depth by factor 2 with the modified checkerboard channel order:
/// the first output half holds the diagonal phases (0,0),(1,1) of every input
/// channel, the second half the anti-diagonal phases (0,1),(1,0). Pure index
/// permutation — the inverse is bit-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subsample;

/// Phase offsets (dy, dx) in modified-checkerboard order.
const PHASES: [(usize, usize); 4] = [(0, 0), (1, 1), (0, 1), (1, 0)];

impl Subsample {
    pub fn forward<S: Scalar>(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let [n, c, h, w] = x.dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("subsample needs even extents, got {h}×{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros(&[n, 4 * c, oh, ow]);
        for ni in 0..n {
            for (q, &(py, px)) in PHASES.iter().enumerate() {
                for ci in 0..c {
                    let oc = q * c + ci;
                    for i in 0..oh {
                        for j in 0..ow {
                            let src = ((ni * c + ci) * h + 2 * i + py) * w + 2 * j + px;
                            let dst = ((ni * 4 * c + oc) * oh + i) * ow + j;
                            out.data_mut()[dst] = x.data()[src];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn inverse<S: Scalar>(&self, y: &Tensor<S>) -> Result<Tensor<S>> {
        let [n, c4, oh, ow] = y.dims4()?;
        if c4 % 4 != 0 {
            return Err(Error::Shape(format!("subsample inverse needs 4k channels, got {c4}")));
        }
        let c = c4 / 4;
        let (h, w) = (2 * oh, 2 * ow);
        let mut out = Tensor::zeros(&[n, c, h, w]);
        for ni in 0..n {
            for (q, &(py, px)) in PHASES.iter().enumerate() {
                for ci in 0..c {
                    let oc = q * c + ci;
                    for i in 0..oh {
                        for j in 0..ow {
                            let dst = ((ni * c + ci) * h + 2 * i + py) * w + 2 * j + px;
                            let src = ((ni * 4 * c + oc) * oh + i) * ow + j;
                            out.data_mut()[dst] = y.data()[src];
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

// ── The whole net ────────────────────────────────────────────────────────────

#[derive(Debug)]
pub enum Stage<S: Scalar> {
    Block(RevBlock<S>),
    Sub(Subsample),
}

/// Ordered stages plus shape bookkeeping. The latent dimensionality always
/// equals the input dimensionality — every stage preserves element count.
#[derive(Debug)]
pub struct InvertibleNet<S: Scalar> {
    pub stages: Vec<Stage<S>>,
    pub input_shape: [usize; 3],  // C,H,W
    pub latent_shape: [usize; 3], // C,H,W after the last stage
}

fn split_halves<S: Scalar>(x: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
    let [_, c, _, _] = x.dims4()?;
    if c % 2 != 0 {
        return Err(Error::Shape(format!("cannot halve {c} channels")));
    }
    let mut parts = x.split(1, &[c / 2, c / 2])?;
    let x2 = parts.pop().expect("two parts");
    let x1 = parts.pop().expect("two parts");
    Ok((x1, x2))
}

fn join_halves<S: Scalar>(x1: &Tensor<S>, x2: &Tensor<S>) -> Result<Tensor<S>> {
    Tensor::concat(1, &[x1, x2])
}

impl<S: Scalar> InvertibleNet<S> {
    pub fn latent_len(&self) -> usize {
        self.latent_shape.iter().product()
    }

    pub fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        let [_, c, h, w] = x.dims4()?;
        if [c, h, w] != self.input_shape {
            return Err(Error::Shape(format!(
                "input shape {:?} does not match net input {:?}",
                [c, h, w],
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Encoder: x ↦ z, stage by stage.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let mut v = x.clone();
        for stage in &self.stages {
            v = match stage {
                Stage::Block(b) => {
                    let (x1, x2) = split_halves(&v)?;
                    let (y1, y2) = b.forward(&x1, &x2)?;
                    join_halves(&y1, &y2)?
                }
                Stage::Sub(s) => s.forward(&v)?,
            };
        }
        Ok(v)
    }

    /// Decoder: z ↦ x through the stage inverses in reverse order.
    pub fn inverse(&self, z: &Tensor<S>) -> Result<Tensor<S>> {
        let mut v = z.clone();
        for stage in self.stages.iter().rev() {
            v = match stage {
                Stage::Block(b) => {
                    let (y1, y2) = split_halves(&v)?;
                    let (x1, x2) = b.inverse(&y1, &y2)?;
                    join_halves(&x1, &x2)?
                }
                Stage::Sub(s) => s.inverse(&v)?,
            };
        }
        Ok(v)
    }

    /// Forward retaining every stage's layer activations (reference path;
    /// memory grows with depth).
    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let mut v = x.clone();
        for stage in &mut self.stages {
            v = match stage {
                Stage::Block(b) => {
                    let (x1, x2) = split_halves(&v)?;
                    let (y1, y2) = b.forward_train(&x1, &x2)?;
                    join_halves(&y1, &y2)?
                }
                Stage::Sub(s) => s.forward(&v)?,
            };
        }
        Ok(v)
    }

    /// Reference backward consuming the activations stored by
    /// [`forward_train`]. Accumulates parameter gradients, returns dL/dx.
    pub fn backward_cached(&mut self, dz: &Tensor<S>) -> Result<Tensor<S>> {
        let mut d = dz.clone();
        for stage in self.stages.iter_mut().rev() {
            d = match stage {
                Stage::Block(b) => {
                    let (dy1, dy2) = split_halves(&d)?;
                    let (dx1, dx2) = b.backward_cached(&dy1, &dy2)?;
                    join_halves(&dx1, &dx2)?
                }
                Stage::Sub(s) => s.inverse(&d)?,
            };
        }
        Ok(d)
    }

    /// Memory-efficient backward: walks stages in reverse, reconstructing
    /// each stage's input from its output via the stage inverse, so no
    /// activations from the forward pass are needed (`z` is the stored
    /// output). Peak retained activations stay constant in depth.
    pub fn backward_recompute(&mut self, z: &Tensor<S>, dz: &Tensor<S>) -> Result<Tensor<S>> {
        let mut v = z.clone();
        let mut d = dz.clone();
        for stage in self.stages.iter_mut().rev() {
            match stage {
                Stage::Block(b) => {
                    let (y1, y2) = split_halves(&v)?;
                    let (dy1, dy2) = split_halves(&d)?;
                    let (x1, x2, dx1, dx2) = b.backward_from_outputs(&y1, &y2, &dy1, &dy2)?;
                    v = join_halves(&x1, &x2)?;
                    d = join_halves(&dx1, &dx2)?;
                }
                Stage::Sub(s) => {
                    v = s.inverse(&v)?;
                    d = s.inverse(&d)?;
                }
            }
        }
        Ok(d)
    }

    /// Backward through the decoder pass x̂ = inverse(z): given the decoder
    /// output `x_hat` and dL/dx̂, rebuilds the inverse chain stage by stage
    /// (running forward) and returns dL/dz. Parameter gradients accumulate
    /// with the inverse pass's signs. Memory stays constant in depth.
    pub fn backward_through_inverse(
        &mut self,
        x_hat: &Tensor<S>,
        dx_hat: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        let mut v = x_hat.clone();
        let mut d = dx_hat.clone();
        for stage in self.stages.iter_mut() {
            match stage {
                Stage::Block(b) => {
                    let (x1, x2) = split_halves(&v)?;
                    let (dx1, dx2) = split_halves(&d)?;
                    let (y1, y2, dy1, dy2) = b.backward_through_inverse(&x1, &x2, &dx1, &dx2)?;
                    v = join_halves(&y1, &y2)?;
                    d = join_halves(&dy1, &dy2)?;
                }
                Stage::Sub(s) => {
                    v = s.forward(&v)?;
                    d = s.forward(&d)?;
                }
            }
        }
        Ok(d)
    }

    /// Latent tensor reshaped to rows [N × d].
    pub fn flatten_latent(&self, z: Tensor<S>) -> Result<Tensor<S>> {
        let [n, c, h, w] = z.dims4()?;
        z.reshape(&[n, c * h * w])
    }

    /// Rows [N × d] back to the latent tensor shape.
    pub fn unflatten_latent(&self, z2: Tensor<S>) -> Result<Tensor<S>> {
        let [n, d] = z2.dims2()?;
        let [c, h, w] = self.latent_shape;
        if d != c * h * w {
            return Err(Error::Shape(format!("latent width {d}, net wants {}", c * h * w)));
        }
        z2.reshape(&[n, c, h, w])
    }

    pub fn block_count(&self) -> usize {
        self.stages.iter().filter(|s| matches!(s, Stage::Block(_))).count()
    }

    pub fn subsample_count(&self) -> usize {
        self.stages.iter().filter(|s| matches!(s, Stage::Sub(_))).count()
    }
}

impl<S: Scalar> Params<S> for InvertibleNet<S> {
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    ) {
        for (i, stage) in self.stages.iter_mut().enumerate() {
            if let Stage::Block(b) = stage {
                b.visit_params(&scoped(prefix, &format!("s{i:02}")), f);
            }
        }
    }
}

// ── Architecture construction ────────────────────────────────────────────────

/// One subsampling step followed by `blocks` reversible blocks whose F/G use
/// the given intermediate width and kernel extent.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGroup {
    pub blocks: usize,
    pub width: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub input: [usize; 3], // C,H,W
    pub groups: Vec<StageGroup>,
}

impl ArchSpec {
    /// Closed-form parameter count: Σ over convs of O·C·k² + O.
    pub fn param_count(&self) -> usize {
        let mut total = 0usize;
        let mut ch = self.input[0];
        for g in &self.groups {
            ch *= 4;
            let half = ch / 2;
            let per_conv_pair =
                g.width * half * g.kernel * g.kernel + g.width    // C_half→width
                + half * g.width * g.kernel * g.kernel + half; // width→C_half
            total += g.blocks * 2 * per_conv_pair; // F and G
        }
        total
    }
}

/// Named presets reachable from the CLI/config.
pub fn preset(name: &str) -> Option<ArchSpec> {
    match name {
        // 5 subsampling stages interleaved with 8 blocks, width 64.
        // 1×32×32 → latent 1024. The final stage sits at 1×1 spatial
        // resolution, where a 1×1 kernel is the honest choice.
        "mnist-small" => Some(ArchSpec {
            input: [1, 32, 32],
            groups: vec![
                StageGroup { blocks: 2, width: 64, kernel: 3 },
                StageGroup { blocks: 2, width: 64, kernel: 3 },
                StageGroup { blocks: 2, width: 64, kernel: 3 },
                StageGroup { blocks: 1, width: 64, kernel: 3 },
                StageGroup { blocks: 1, width: 64, kernel: 1 },
            ],
        }),
        // 3×64×64 → latent 12288; 11 blocks, 6 subsamples, ≈59M parameters.
        "celeba-fig4" => Some(ArchSpec {
            input: [3, 64, 64],
            groups: vec![
                StageGroup { blocks: 2, width: 128, kernel: 3 },
                StageGroup { blocks: 2, width: 128, kernel: 3 },
                StageGroup { blocks: 2, width: 320, kernel: 3 },
                StageGroup { blocks: 2, width: 384, kernel: 3 },
                StageGroup { blocks: 2, width: 224, kernel: 3 },
                StageGroup { blocks: 1, width: 96, kernel: 3 },
            ],
        }),
        // Small nets for synthetic-data runs and fast tests.
        "toy-8x8" => Some(ArchSpec {
            input: [1, 8, 8],
            groups: vec![
                StageGroup { blocks: 2, width: 16, kernel: 3 },
                StageGroup { blocks: 2, width: 16, kernel: 3 },
            ],
        }),
        "toy-4x4" => Some(ArchSpec {
            input: [1, 4, 4],
            groups: vec![
                StageGroup { blocks: 1, width: 8, kernel: 3 },
                StageGroup { blocks: 1, width: 8, kernel: 1 },
            ],
        }),
        _ => None,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["mnist-small", "celeba-fig4", "toy-8x8", "toy-4x4"]
}

/// Instantiate a net from a stage description.
pub fn build_architecture<S: Scalar>(rng: &mut Rng, spec: &ArchSpec) -> Result<InvertibleNet<S>> {
    let [c0, h0, w0] = spec.input;
    let (mut c, mut h, mut w) = (c0, h0, w0);
    let mut stages = Vec::new();
    for (gi, g) in spec.groups.iter().enumerate() {
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Config(format!(
                "group {gi}: spatial extent {h}×{w} not divisible by 2"
            )));
        }
        stages.push(Stage::Sub(Subsample));
        c *= 4;
        h /= 2;
        w /= 2;
        if c % 2 != 0 {
            return Err(Error::Config(format!("group {gi}: channel count {c} not splittable")));
        }
        if g.kernel % 2 == 0 || g.kernel == 0 {
            return Err(Error::Config(format!("group {gi}: kernel {} must be odd", g.kernel)));
        }
        for _ in 0..g.blocks {
            stages.push(Stage::Block(RevBlock::new(rng, c / 2, g.width, g.kernel)));
        }
    }
    Ok(InvertibleNet { stages, input_shape: [c0, h0, w0], latent_shape: [c, h, w] })
}
