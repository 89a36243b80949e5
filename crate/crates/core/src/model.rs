//! Iterative linear-attention kernel map with Fourier-filtered queries, plus
//! the dense-projection baseline.
//!
//! A sample is a pair of `N × d` matrices: loadings `G` and solutions `V`,
//! one column per in-context instance, one row per grid node. Every block
//! updates both streams residually,
//!
//! ```text
//! S  = h² (K_gᵀ G + K_vᵀ V)                 K_s = S_s W_K
//! G' = G + N(scale · P(G W_Q) · S)          scale = 1/√d_k
//! V' = V + N(scale · P(V W_Q) · S)
//! ```
//!
//! where `P` is the spatial projection: a per-channel Fourier multiplier for
//! [`Variant::Nips`], a dense `N × N` matrix per stream otherwise. The last
//! layer yields the kernel `K = A Bᵀ` with `A = scale (P(G W_Q) + P(V W_Q))`
//! and `B = G W_K`, and predictions `u = h² A (Bᵀ f)`.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::sha256_hex;
use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::tensor::fft::half_len;
use crate::tensor::{Tape, Tensor, Var};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NIPSCK1\0";
pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Nips,
    /// Dense projection, attention matrices formed explicitly (`O(N²d)`).
    NaoWpQuadratic,
    /// Dense projection evaluated in linear-attention order.
    NaoWpLinear,
}

impl Variant {
    pub fn is_dense(self) -> bool {
        !matches!(self, Variant::Nips)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nips" => Ok(Variant::Nips),
            "nao-wp" | "nao-wp-quadratic" => Ok(Variant::NaoWpQuadratic),
            "nao-wp-linear" => Ok(Variant::NaoWpLinear),
            _ => Err(Error::Config(format!("unknown variant {s:?}; expected nips, nao-wp, nao-wp-linear"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Nips => "nips",
            Variant::NaoWpQuadratic => "nao-wp",
            Variant::NaoWpLinear => "nao-wp-linear",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormPlacement {
    /// Token and channel axes in the first block, channel axis afterwards.
    FirstLayerBoth,
    AllLayersBoth,
}

impl std::str::FromStr for NormPlacement {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(NormPlacement::FirstLayerBoth),
            "all" => Ok(NormPlacement::AllLayersBoth),
            _ => Err(Error::Config(format!("unknown norm placement {s:?}; expected first or all"))),
        }
    }
}

impl std::fmt::Display for NormPlacement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormPlacement::FirstLayerBoth => "first",
            NormPlacement::AllLayersBoth => "all",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Total layers, the last of which produces the kernel.
    pub layers: usize,
    /// Instances per sample.
    pub d: usize,
    pub d_k: usize,
    /// Largest retained frequency magnitude on each axis.
    pub modes: usize,
    /// Grid points per side.
    pub grid: usize,
    pub norm_placement: NormPlacement,
    pub variant: Variant,
    /// Divide each sample's loadings and solutions by their RMS before the
    /// first block and undo the ratio on the kernel.
    pub normalize_streams: bool,
}

impl ModelConfig {
    pub fn new(grid: usize, d: usize, d_k: usize, layers: usize) -> Self {
        ModelConfig {
            layers,
            d,
            d_k,
            modes: default_modes(grid),
            grid,
            norm_placement: NormPlacement::FirstLayerBoth,
            variant: Variant::Nips,
            normalize_streams: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::Config(format!("need at least 2 layers, got {}", self.layers)));
        }
        if self.d == 0 || self.d_k == 0 {
            return Err(Error::Config("d and d_k must be positive".into()));
        }
        if self.grid < 3 {
            return Err(Error::Config(format!("grid must be at least 3 points per side, got {}", self.grid)));
        }
        if self.modes > self.grid / 2 {
            return Err(Error::Config(format!(
                "{} modes exceed the Nyquist frequency {} of a {}-point axis",
                self.modes,
                self.grid / 2,
                self.grid
            )));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.grid * self.grid
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.grid - 1) as f64
    }

    pub fn quadrature_weight(&self) -> f64 {
        self.spacing().powi(2)
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.d_k as f64).sqrt()
    }

    /// Spectrum rows holding frequencies `|k₁| ≤ modes`, without repeats.
    pub fn retained_rows(&self) -> Vec<usize> {
        retained_rows(self.grid, self.modes)
    }

    pub fn retained_cols(&self) -> usize {
        (self.modes + 1).min(half_len(self.grid))
    }

    /// Shape of one layer's Fourier multiplier.
    pub fn filter_shape(&self) -> [usize; 4] {
        [self.retained_rows().len(), self.retained_cols(), self.d_k, 2]
    }

    /// Same architecture on another grid; the retained frequencies carry over.
    pub fn regrid(&self, grid: usize) -> Result<Self> {
        let cfg = ModelConfig { grid, ..self.clone() };
        cfg.validate()?;
        Ok(cfg)
    }

    fn norm_axes(&self, layer: usize) -> &'static [usize] {
        match (self.norm_placement, layer) {
            (NormPlacement::FirstLayerBoth, 0) | (NormPlacement::AllLayersBoth, _) => &[0, 1],
            (NormPlacement::FirstLayerBoth, _) => &[1],
        }
    }
}

pub fn default_modes(grid: usize) -> usize {
    12.min(grid / 2)
}

pub fn retained_rows(n: usize, modes: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..=modes.min(n - 1)).collect();
    for k in 1..=modes {
        let r = (n - k % n) % n;
        if !rows.contains(&r) {
            rows.push(r);
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq)]
pub enum Filter {
    /// Complex multipliers, `rows × cols × d_k × 2`.
    Fourier(Tensor),
    /// Dense projections for the loading and solution streams, `N × N` each.
    Dense { g: Tensor, v: Tensor },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub filter: Filter,
}

impl LayerParams {
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.w_q, &self.w_k];
        match &self.filter {
            Filter::Fourier(r) => out.push(r),
            Filter::Dense { g, v } => out.extend([g, v]),
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.w_q, &mut self.w_k];
        match &mut self.filter {
            Filter::Fourier(r) => out.push(r),
            Filter::Dense { g, v } => out.extend([g, v]),
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NipsModel {
    pub cfg: ModelConfig,
    pub layers: Vec<LayerParams>,
}

/// Exact learnable-scalar count; complex entries count twice.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let proj = 2 * cfg.d * cfg.d_k;
    let filter = if cfg.variant.is_dense() {
        2 * cfg.nodes() * cfg.nodes()
    } else {
        cfg.filter_shape().iter().product()
    };
    cfg.layers * (proj + filter)
}

impl NipsModel {
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (cfg.d as f64).sqrt();
        let nodes = cfg.nodes();
        let layers = (0..cfg.layers)
            .map(|_| {
                let w_q = Tensor::from_fn(&[cfg.d, cfg.d_k], |_| rng.random_range(-bound..bound));
                let w_k = Tensor::from_fn(&[cfg.d, cfg.d_k], |_| rng.random_range(-bound..bound));
                let filter = if cfg.variant.is_dense() {
                    let std = 1.0 / (nodes as f64 * cfg.quadrature_weight());
                    let dist = Normal::new(0.0, std).expect("positive std");
                    let g = Tensor::from_fn(&[nodes, nodes], |_| dist.sample(&mut rng));
                    let v = Tensor::from_fn(&[nodes, nodes], |_| dist.sample(&mut rng));
                    Filter::Dense { g, v }
                } else {
                    let shape = cfg.filter_shape();
                    let amp = 1.0 / (shape[0] * shape[1]) as f64;
                    Filter::Fourier(Tensor::from_fn(&shape, |_| amp * rng.sample::<f64, _>(StandardNormal)))
                };
                LayerParams { w_q, w_k, filter }
            })
            .collect();
        Ok(NipsModel { cfg, layers })
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(LayerParams::tensors).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(LayerParams::tensors_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let c = &self.cfg;
        c.validate()?;
        if self.layers.len() != c.layers {
            return Err(Error::dim(format!("{} layer parameter sets for {} layers", self.layers.len(), c.layers)));
        }
        for (l, p) in self.layers.iter().enumerate() {
            let bad = |what: &str, got: &[usize]| Error::dim(format!("layer {l}: {what} has shape {got:?}"));
            for w in [&p.w_q, &p.w_k] {
                if w.shape() != [c.d, c.d_k] {
                    return Err(bad("projection", w.shape()));
                }
            }
            match &p.filter {
                Filter::Fourier(r) if !c.variant.is_dense() => {
                    if r.shape() != c.filter_shape() {
                        return Err(bad("Fourier multiplier", r.shape()));
                    }
                }
                Filter::Dense { g, v } if c.variant.is_dense() => {
                    for w in [g, v] {
                        if w.shape() != [c.nodes(), c.nodes()] {
                            return Err(bad("dense projection", w.shape()));
                        }
                    }
                }
                _ => return Err(Error::Config(format!("layer {l}: filter kind does not match variant"))),
            }
        }
        Ok(())
    }

    /// Places every parameter on `tape`, trainable or constant.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let mut leaf = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
        let layers = self
            .layers
            .iter()
            .map(|p| BoundLayer {
                w_q: leaf(&p.w_q),
                w_k: leaf(&p.w_k),
                filter: match &p.filter {
                    Filter::Fourier(r) => BoundFilter::Fourier(leaf(r)),
                    Filter::Dense { g, v } => BoundFilter::Dense { g: leaf(g), v: leaf(v) },
                },
            })
            .collect();
        BoundModel { layers }
    }

    /// Kernel factors built from one sample's `N × d` loadings and solutions.
    pub fn kernel_factors(&self, g: &Tensor, v: &Tensor) -> Result<KernelFactors> {
        self.check_shapes()?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let gv = tape.constant(g.clone());
        let vv = tape.constant(v.clone());
        let (a, b) = kernel_on_tape(&mut tape, &self.cfg, &bound, gv, vv)?;
        Ok(KernelFactors { n: self.cfg.grid, a: tape.value(a).clone(), b: tape.value(b).clone() })
    }

    pub fn extract_kernel(&self, g: &Tensor, v: &Tensor) -> Result<KernelMatrix> {
        self.kernel_factors(g, v)?.materialize()
    }

    /// Predicts the solution for each column of `f` with the kernel of `(g, v)`.
    pub fn predict(&self, g: &Tensor, v: &Tensor, f: &Tensor) -> Result<Tensor> {
        forward_predict(&self.kernel_factors(g, v)?, f)
    }

    /// The same weights on another grid; Fourier multipliers transfer as is.
    pub fn regrid(&self, grid: usize) -> Result<Self> {
        if self.cfg.variant.is_dense() {
            return Err(Error::Config("dense projections are tied to their grid".into()));
        }
        let cfg = self.cfg.regrid(grid)?;
        if cfg.filter_shape() != self.cfg.filter_shape() {
            return Err(Error::Config(format!(
                "retained modes {:?} on {grid} points differ from {:?}",
                cfg.filter_shape(),
                self.cfg.filter_shape()
            )));
        }
        Ok(NipsModel { cfg, layers: self.layers.clone() })
    }
}

#[derive(Clone, Copy, Debug)]
pub enum BoundFilter {
    Fourier(Var),
    Dense { g: Var, v: Var },
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLayer {
    pub w_q: Var,
    pub w_k: Var,
    pub filter: BoundFilter,
}

impl BoundLayer {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.w_q, self.w_k];
        match self.filter {
            BoundFilter::Fourier(r) => out.push(r),
            BoundFilter::Dense { g, v } => out.extend([g, v]),
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct BoundModel {
    pub layers: Vec<BoundLayer>,
}

impl BoundModel {
    /// Parameter handles in declaration order, matching [`NipsModel::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(BoundLayer::vars).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stream {
    Load,
    Solution,
}

/// Channel-wise Fourier multiplier on an `N × c` stack of grid functions.
pub fn fourier_filter_on_tape(tape: &mut Tape, cfg: &ModelConfig, y: Var, r: Var) -> Result<Var> {
    let (nodes, c) = tape.value(y).dims2()?;
    let n = cfg.grid;
    if nodes != n * n {
        return Err(Error::dim(format!("{nodes} rows do not form a {n}×{n} grid")));
    }
    let rows = cfg.retained_rows();
    let field = tape.reshape(y, &[n, n, c])?;
    let spec = tape.rfft2(field)?;
    let filtered = tape.spectral_mul(spec, r, &rows)?;
    let back = tape.irfft2(filtered, n)?;
    tape.reshape(back, &[nodes, c])
}

fn project(tape: &mut Tape, cfg: &ModelConfig, y: Var, filter: BoundFilter, stream: Stream) -> Result<Var> {
    match filter {
        BoundFilter::Fourier(r) => fourier_filter_on_tape(tape, cfg, y, r),
        BoundFilter::Dense { g, v } => {
            let w = if stream == Stream::Load { g } else { v };
            let out = tape.matmul(w, y)?;
            Ok(tape.scale(out, cfg.quadrature_weight()))
        }
    }
}

/// One residual block; `layer` is the zero-based block index.
pub fn block_on_tape(
    tape: &mut Tape,
    cfg: &ModelConfig,
    p: &BoundLayer,
    layer: usize,
    g: Var,
    v: Var,
) -> Result<(Var, Var)> {
    let h2 = cfg.quadrature_weight();
    let gq = tape.matmul(g, p.w_q)?;
    let vq = tape.matmul(v, p.w_q)?;
    let qg = project(tape, cfg, gq, p.filter, Stream::Load)?;
    let qv = project(tape, cfg, vq, p.filter, Stream::Solution)?;
    let kg = tape.matmul(g, p.w_k)?;
    let kv = tape.matmul(v, p.w_k)?;
    let (upd_g, upd_v) = if cfg.variant == Variant::NaoWpQuadratic {
        // Explicit N×N attention matrices for each (query, key) stream pair.
        let mut term = |q: Var, k: Var, x: Var| -> Result<Var> {
            let att = tape.matmul_nt(q, k)?;
            tape.matmul(att, x)
        };
        let gg = term(qg, kg, g)?;
        let gv = term(qg, kv, v)?;
        let vv = term(qv, kv, v)?;
        let vg = term(qv, kg, g)?;
        (tape.add(gg, gv)?, tape.add(vv, vg)?)
    } else {
        let sg = tape.matmul_tn(kg, g)?;
        let sv = tape.matmul_tn(kv, v)?;
        let s = tape.add(sg, sv)?;
        (tape.matmul(qg, s)?, tape.matmul(qv, s)?)
    };
    let axes = cfg.norm_axes(layer);
    let mut out = [g, v];
    for (slot, upd) in out.iter_mut().zip([upd_g, upd_v]) {
        let scaled = tape.scale(upd, cfg.scale() * h2);
        let normed = tape.layer_norm(scaled, axes, NORM_EPS)?;
        *slot = tape.add(*slot, normed)?;
    }
    Ok((out[0], out[1]))
}

/// Final-layer factors `(A, B)` with `K = A Bᵀ`.
pub fn factors_on_tape(tape: &mut Tape, cfg: &ModelConfig, p: &BoundLayer, g: Var, v: Var) -> Result<(Var, Var)> {
    let gq = tape.matmul(g, p.w_q)?;
    let vq = tape.matmul(v, p.w_q)?;
    let qg = project(tape, cfg, gq, p.filter, Stream::Load)?;
    let qv = project(tape, cfg, vq, p.filter, Stream::Solution)?;
    let q = tape.add(qg, qv)?;
    let a = tape.scale(q, cfg.scale());
    let b = tape.matmul(g, p.w_k)?;
    Ok((a, b))
}

/// Runs all blocks and returns the kernel factors.
pub fn kernel_on_tape(tape: &mut Tape, cfg: &ModelConfig, model: &BoundModel, g: Var, v: Var) -> Result<(Var, Var)> {
    let shape = [cfg.nodes(), cfg.d];
    for x in [g, v] {
        if tape.value(x).shape() != shape {
            return Err(Error::dim(format!("sample must be {shape:?}, got {:?}", tape.value(x).shape())));
        }
    }
    let (last, blocks) = model.layers.split_last().ok_or_else(|| Error::Config("model has no layers".into()))?;
    let (sg, sv) = if cfg.normalize_streams { (stream_rms(tape.value(g))?, stream_rms(tape.value(v))?) } else { (1.0, 1.0) };
    let (mut g, mut v) = (tape.scale(g, 1.0 / sg), tape.scale(v, 1.0 / sv));
    let mut peaks = Vec::with_capacity(blocks.len());
    for (l, p) in blocks.iter().enumerate() {
        (g, v) = block_on_tape(tape, cfg, p, l, g, v)?;
        let (tg, tv) = (tape.value(g), tape.value(v));
        peaks.push(tg.max_abs().max(tv.max_abs()));
        if !tg.all_finite() || !tv.all_finite() {
            return Err(Error::Diagnostic(format!(
                "non-finite activations after block {}; max |activation| per block: {peaks:?}",
                l + 1
            )));
        }
    }
    let (a, b) = factors_on_tape(tape, cfg, last, g, v)?;
    Ok((tape.scale(a, sv / sg), b))
}

fn stream_rms(x: &Tensor) -> Result<f64> {
    let rms = (x.data().iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if rms == 0.0 {
        return Err(Error::contract(format!("cannot normalize a stream with RMS {rms}")));
    }
    Ok(rms)
}

/// `h² A (Bᵀ f)`; the quadratic baseline forms `A Bᵀ` first.
pub fn predict_on_tape(tape: &mut Tape, cfg: &ModelConfig, a: Var, b: Var, f: Var) -> Result<Var> {
    let out = if cfg.variant == Variant::NaoWpQuadratic {
        let k = tape.matmul_nt(a, b)?;
        tape.matmul(k, f)?
    } else {
        let proj = tape.matmul_tn(b, f)?;
        tape.matmul(a, proj)?
    };
    Ok(tape.scale(out, cfg.quadrature_weight()))
}

/// A rank-`d_k` kernel kept in factored form.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelFactors {
    pub n: usize,
    pub a: Tensor,
    pub b: Tensor,
}

impl KernelFactors {
    pub fn materialize(&self) -> Result<KernelMatrix> {
        let k = crate::tensor::matmul_t(&self.a, false, &self.b, true)?;
        KernelMatrix::new(self.n, k)
    }
}

/// `u = h² A (Bᵀ f)` for an `N`-vector or `N × c` stack, without forming `K`.
pub fn forward_predict(k: &KernelFactors, f: &Tensor) -> Result<Tensor> {
    let nodes = k.n * k.n;
    let cols = match *f.shape() {
        [len] if len == nodes => 1,
        [len, c] if len == nodes => c,
        ref s => return Err(Error::dim(format!("kernel on {nodes} nodes cannot act on {s:?}"))),
    };
    let f2 = f.clone().reshape(&[nodes, cols])?;
    let proj = crate::tensor::matmul_t(&k.b, true, &f2, false)?;
    let h2 = 1.0 / ((k.n - 1) as f64).powi(2);
    crate::tensor::matmul(&k.a, &proj)?.scale(h2).reshape(f.shape())
}

/// Tensor-level Fourier filter of an `N × c` stack with multipliers `r`.
pub fn fourier_filter(y: &Tensor, r: &Tensor, cfg: &ModelConfig) -> Result<Tensor> {
    let mut tape = Tape::new();
    let yv = tape.constant(y.clone());
    let rv = tape.constant(r.clone());
    let out = fourier_filter_on_tape(&mut tape, cfg, yv, rv)?;
    Ok(tape.value(out).clone())
}

fn run_block(g: &Tensor, v: &Tensor, p: &LayerParams, cfg: &ModelConfig, layer: usize) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let model = NipsModel { cfg: cfg.clone(), layers: vec![p.clone()] };
    let bound = model.bind(&mut tape, false);
    let gv = tape.constant(g.clone());
    let vv = tape.constant(v.clone());
    let (g2, v2) = block_on_tape(&mut tape, cfg, &bound.layers[0], layer, gv, vv)?;
    Ok((tape.value(g2).clone(), tape.value(v2).clone()))
}

/// One Fourier-filtered block applied to tensors.
pub fn attention_block(
    g: &Tensor,
    v: &Tensor,
    p: &LayerParams,
    cfg: &ModelConfig,
    layer: usize,
) -> Result<(Tensor, Tensor)> {
    if !matches!(p.filter, Filter::Fourier(_)) {
        return Err(Error::Config("attention_block needs Fourier multipliers".into()));
    }
    run_block(g, v, p, cfg, layer)
}

/// One dense-projection block applied to tensors.
pub fn quadratic_baseline_block(
    g: &Tensor,
    v: &Tensor,
    p: &LayerParams,
    cfg: &ModelConfig,
    layer: usize,
) -> Result<(Tensor, Tensor)> {
    if !matches!(p.filter, Filter::Dense { .. }) {
        return Err(Error::Config("quadratic_baseline_block needs dense projections".into()));
    }
    let cfg = if cfg.variant.is_dense() { cfg.clone() } else { ModelConfig { variant: Variant::NaoWpQuadratic, ..cfg.clone() } };
    run_block(g, v, p, &cfg, layer)
}

/// Final-layer factors from already-propagated streams.
pub fn extract_kernel(g: &Tensor, v: &Tensor, p: &LayerParams, cfg: &ModelConfig) -> Result<KernelFactors> {
    let mut tape = Tape::new();
    let model = NipsModel { cfg: cfg.clone(), layers: vec![p.clone()] };
    let bound = model.bind(&mut tape, false);
    let gv = tape.constant(g.clone());
    let vv = tape.constant(v.clone());
    let (a, b) = factors_on_tape(&mut tape, cfg, &bound.layers[0], gv, vv)?;
    Ok(KernelFactors { n: cfg.grid, a: tape.value(a).clone(), b: tape.value(b).clone() })
}

/// Header of the `NIPSCK1` checkpoint container.
///
/// Layout: magic, `u32` LE header length, JSON header, then little-endian
/// f64 parameter blocks in declaration order, followed by `state_blocks`
/// extra blocks (optimizer moments) with the same shapes repeated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model: ModelConfig,
    pub epoch: usize,
    pub optimizer_step: u64,
    pub loss_history: Vec<f64>,
    pub loss_history_sha256: String,
    /// How many copies of the parameter set follow the parameters.
    pub state_blocks: usize,
    /// Training configuration and anything else needed to resume.
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: NipsModel,
    /// `state_blocks` parameter-shaped sets, e.g. Adam's two moments.
    pub state: Vec<Vec<Tensor>>,
}

pub fn loss_history_digest(history: &[f64]) -> String {
    let bytes: Vec<u8> = history.iter().flat_map(|v| v.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

impl Checkpoint {
    pub fn new(model: NipsModel, epoch: usize, optimizer_step: u64, loss_history: Vec<f64>, state: Vec<Vec<Tensor>>, extra: serde_json::Value) -> Self {
        let header = CheckpointHeader {
            format_version: 1,
            model: model.cfg.clone(),
            epoch,
            optimizer_step,
            loss_history_sha256: loss_history_digest(&loss_history),
            loss_history,
            state_blocks: state.len(),
            extra,
        };
        Checkpoint { header, model, state }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = CHECKPOINT_MAGIC.to_vec();
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let shapes: Vec<Vec<usize>> = self.model.tensors().iter().map(|t| t.shape().to_vec()).collect();
        let sets = std::iter::once(self.model.tensors()).chain(self.state.iter().map(|s| s.iter().collect()));
        for set in sets {
            if set.len() != shapes.len() || set.iter().zip(&shapes).any(|(t, s)| t.shape() != s.as_slice()) {
                return Err(Error::contract("optimizer state does not match the parameter shapes"));
            }
            for t in set {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, reason: String| Error::Format { offset, reason };
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(fail(0, "bad magic, expected NIPSCK1".into()));
        }
        let hlen = bytes
            .get(8..12)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| fail(8, "truncated header length".into()))?;
        let hbytes = bytes.get(12..12 + hlen).ok_or_else(|| fail(12, "truncated JSON header".into()))?;
        let header: CheckpointHeader =
            serde_json::from_slice(hbytes).map_err(|e| fail(12, format!("invalid JSON header: {e}")))?;
        if loss_history_digest(&header.loss_history) != header.loss_history_sha256 {
            return Err(fail(12, "loss history digest mismatch".into()));
        }
        let mut model = NipsModel::init(header.model.clone(), 0)?;
        let per_set: usize = model.param_count();
        let start = 12 + hlen;
        let expected = per_set * (1 + header.state_blocks) * 8;
        let payload = &bytes[start..];
        if payload.len() != expected {
            return Err(fail(
                start + payload.len().min(expected),
                format!("payload holds {} bytes, header implies {expected}", payload.len()),
            ));
        }
        let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for t in model.tensors_mut() {
            for x in t.data_mut() {
                *x = values.next().expect("length checked");
            }
        }
        let shapes: Vec<Vec<usize>> = model.tensors().iter().map(|t| t.shape().to_vec()).collect();
        let state = (0..header.state_blocks)
            .map(|_| {
                shapes
                    .iter()
                    .map(|s| Tensor::new(s, values.by_ref().take(s.iter().product()).collect()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Checkpoint { header, model, state })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}
