//! Spectral sampling of mean-zero Gaussian random fields with covariance
//! operator `(-Δ + τ²)^(-α)` on a periodic box, restricted to the unit square.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::fft::{half_len, irfft2_raw, rfft2_raw};
use crate::tensor::Tensor;

/// Permeability where the latent field is negative.
pub const PHASE_LOW_FIELD: f64 = 12.0;
/// Permeability where the latent field is non-negative.
pub const PHASE_HIGH_FIELD: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    /// Inverse length scale.
    pub tau: f64,
    /// Smoothness exponent of the covariance operator.
    pub alpha: f64,
    /// Output grid `n1 × n2` covering `[0,1]²` including both edges.
    pub grid: (usize, usize),
    /// Side length of the periodic box the field is drawn on.
    pub period_length: f64,
    pub seed: u64,
    /// Whether the constant mode is sampled; must be false when `tau == 0`.
    #[serde(default = "default_true")]
    pub include_dc: bool,
}

fn default_true() -> bool {
    true
}

impl GrfSpec {
    pub fn new(tau: f64, alpha: f64, n: usize, seed: u64) -> Self {
        GrfSpec { tau, alpha, grid: (n, n), period_length: 2.0, seed, include_dc: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Config(format!("tau must be non-negative, got {}", self.tau)));
        }
        if self.tau == 0.0 && self.include_dc {
            return Err(Error::Domain("tau = 0 makes the constant mode singular; exclude it".into()));
        }
        if self.grid.0 < 2 || self.grid.1 < 2 {
            return Err(Error::Config(format!("grid must be at least 2×2, got {:?}", self.grid)));
        }
        self.box_dims().map(|_| ())
    }

    /// Points per side of the periodic box at the output grid spacing.
    pub fn box_dims(&self) -> Result<(usize, usize)> {
        let side = |n: usize| -> Result<usize> {
            let exact = self.period_length * (n - 1) as f64;
            let m = exact.round();
            if (exact - m).abs() > 1e-9 || m < (n - 1) as f64 || m < 2.0 {
                return Err(Error::Config(format!(
                    "period {} is not a whole multiple ≥ 1 of the grid spacing for n = {n}",
                    self.period_length
                )));
            }
            Ok(m as usize)
        };
        Ok((side(self.grid.0)?, side(self.grid.1)?))
    }

    /// Spectral density at integer wavenumber `(k1, k2)` of the periodic box.
    pub fn spectral_density(&self, k1: i64, k2: i64) -> f64 {
        if k1 == 0 && k2 == 0 && !self.include_dc {
            return 0.0;
        }
        let w = 2.0 * PI / self.period_length;
        let (w1, w2) = (w * k1 as f64, w * k2 as f64);
        (w1 * w1 + w2 * w2 + self.tau * self.tau).powf(-self.alpha)
    }
}

/// Signed frequency of DFT index `i` on an axis of length `m`.
pub fn signed_frequency(i: usize, m: usize) -> i64 {
    if i <= m / 2 {
        i as i64
    } else {
        i as i64 - m as i64
    }
}

/// Colors a white-noise field on the periodic box: `F⁻¹(λ^{1/2} F(w))`.
pub fn grf_from_white_noise(spec: &GrfSpec, noise: &Tensor) -> Result<Tensor> {
    spec.validate()?;
    let (m1, m2) = spec.box_dims()?;
    if noise.shape() != [m1, m2] {
        return Err(Error::dim(format!("white noise must be {m1}×{m2}, got {:?}", noise.shape())));
    }
    let mut spectrum = rfft2_raw(noise.data(), m1, m2, 1);
    let h = half_len(m2);
    for i in 0..m1 {
        for k in 0..h {
            let amp = spec.spectral_density(signed_frequency(i, m1), k as i64).sqrt();
            let o = (i * h + k) * 2;
            spectrum[o] *= amp;
            spectrum[o + 1] *= amp;
        }
    }
    Tensor::new(&[m1, m2], irfft2_raw(&spectrum, m1, m2, 1))
}

/// One draw on the full periodic box, with `E|F(ξ)_k|² = λ_k · m1 m2`.
pub fn sample_periodic<R: Rng + ?Sized>(spec: &GrfSpec, rng: &mut R) -> Result<Tensor> {
    spec.validate()?;
    let (m1, m2) = spec.box_dims()?;
    let noise = Tensor::from_fn(&[m1, m2], |_| rng.sample(StandardNormal));
    grf_from_white_noise(spec, &noise)
}

/// Restriction of a periodic draw to the `n1 × n2` unit-square grid.
pub fn restrict(spec: &GrfSpec, periodic: &Tensor) -> Result<Tensor> {
    let (n1, n2) = spec.grid;
    let (_, m2) = periodic.dims2()?;
    Ok(Tensor::from_fn(&[n1, n2], |k| {
        let (i, j) = (k / n2, k % n2);
        periodic.data()[(i % periodic.shape()[0]) * m2 + j % m2]
    }))
}

/// Rescales a field to unit empirical variance; an identically constant
/// field is returned unchanged.
pub fn unit_variance(field: Tensor) -> Tensor {
    let n = field.len() as f64;
    let mean = field.sum() / n;
    let var = field.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        field.scale(1.0 / var.sqrt())
    } else {
        field
    }
}

/// A unit-variance field on the `spec.grid` points of `[0,1]²`.
pub fn sample_grf<R: Rng + ?Sized>(spec: &GrfSpec, rng: &mut R) -> Result<Tensor> {
    let periodic = sample_periodic(spec, rng)?;
    Ok(unit_variance(restrict(spec, &periodic)?))
}

/// Two-phase permeability: 12 where `xi < 0`, 3 elsewhere.
pub fn binarize_microstructure(xi: &Tensor) -> Tensor {
    xi.map(|v| if v < 0.0 { PHASE_LOW_FIELD } else { PHASE_HIGH_FIELD })
}

/// Mean squared forward-difference gradient of a field on a grid of spacing `h`.
pub fn mean_sq_gradient(field: &Tensor, h: f64) -> Result<f64> {
    let (n1, n2) = field.dims2()?;
    let d = field.data();
    let (mut acc, mut count) = (0.0, 0usize);
    for i in 0..n1 {
        for j in 0..n2 {
            if i + 1 < n1 {
                acc += ((d[(i + 1) * n2 + j] - d[i * n2 + j]) / h).powi(2);
                count += 1;
            }
            if j + 1 < n2 {
                acc += ((d[i * n2 + j + 1] - d[i * n2 + j]) / h).powi(2);
                count += 1;
            }
        }
    }
    Ok(acc / count.max(1) as f64)
}

/// Derives an independent stream seed from a master seed and an index
/// (SplitMix64 finalizer applied to `master ⊕ index·φ`).
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
