//! Real 2-D discrete Fourier transforms over the leading two axes of an
//! `n1 × n2 × c` array, one transform per trailing channel.
//!
//! Convention: the forward transform is unnormalized,
//! `X[k1,k2] = Σ x[i,j] exp(-2πi (k1 i / n1 + k2 j / n2))`, and only the
//! half spectrum `k2 < ⌊n2/2⌋ + 1` is kept. The inverse carries the
//! `1 / (n1 n2)` factor and rebuilds the dropped half by conjugate symmetry.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

use super::Tensor;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Number of retained columns of a real transform along an axis of length `n`.
pub fn half_len(n: usize) -> usize {
    n / 2 + 1
}

/// Complex array stored as a real tensor with a trailing axis of length 2
/// holding (re, im).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor(Tensor);

impl ComplexTensor {
    pub fn from_interleaved(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let mut full = shape.to_vec();
        full.push(2);
        Ok(ComplexTensor(Tensor::new(&full, data)?))
    }

    /// Wrap a real tensor whose last axis has length 2.
    pub fn from_real_view(t: Tensor) -> Result<Self> {
        if t.shape().last() != Some(&2) {
            return Err(Error::dim(format!("complex view needs trailing axis 2, got {:?}", t.shape())));
        }
        Ok(ComplexTensor(t))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let mut full = shape.to_vec();
        full.push(2);
        ComplexTensor(Tensor::zeros(&full))
    }

    /// Logical shape, without the (re, im) axis.
    pub fn shape(&self) -> &[usize] {
        let s = self.0.shape();
        &s[..s.len() - 1]
    }

    pub fn get(&self, flat: usize) -> Complex64 {
        let d = self.0.data();
        Complex64::new(d[2 * flat], d[2 * flat + 1])
    }

    pub fn set(&mut self, flat: usize, z: Complex64) {
        let d = self.0.data_mut();
        d[2 * flat] = z.re;
        d[2 * flat + 1] = z.im;
    }

    pub fn len(&self) -> usize {
        self.0.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_real(&self) -> &Tensor {
        &self.0
    }

    pub fn into_real(self) -> Tensor {
        self.0
    }
}

/// Interprets a tensor as `n1 × n2 × c`; rank-2 input is a single channel.
pub(crate) fn grid_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [n1, n2] if n1 > 0 && n2 > 0 => Ok((n1, n2, 1)),
        [n1, n2, c] if n1 > 0 && n2 > 0 => Ok((n1, n2, c)),
        _ => Err(Error::dim(format!("expected an n1×n2 or n1×n2×c field, got {shape:?}"))),
    }
}

/// In-place 2-D complex transform of every channel of an `[n1][n2][c]` buffer.
fn fft2_channels(buf: &mut [Complex64], n1: usize, n2: usize, c: usize, inverse: bool) {
    let row = plan(n2, inverse);
    let col = plan(n1, inverse);
    let mut plane = vec![Complex64::default(); n1 * n2];
    let mut plane_t = vec![Complex64::default(); n1 * n2];
    let mut scratch =
        vec![Complex64::default(); row.get_inplace_scratch_len().max(col.get_inplace_scratch_len())];
    for ch in 0..c {
        for (p, z) in plane.iter_mut().enumerate() {
            *z = buf[p * c + ch];
        }
        row.process_with_scratch(&mut plane, &mut scratch);
        for i in 0..n1 {
            for j in 0..n2 {
                plane_t[j * n1 + i] = plane[i * n2 + j];
            }
        }
        col.process_with_scratch(&mut plane_t, &mut scratch);
        for i in 0..n1 {
            for j in 0..n2 {
                buf[(i * n2 + j) * c + ch] = plane_t[j * n1 + i];
            }
        }
    }
}

pub(crate) fn rfft2_raw(x: &[f64], n1: usize, n2: usize, c: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_channels(&mut buf, n1, n2, c, false);
    let h = half_len(n2);
    let mut out = vec![0.0; n1 * h * c * 2];
    for i in 0..n1 {
        for k in 0..h {
            for ch in 0..c {
                let z = buf[(i * n2 + k) * c + ch];
                let o = ((i * h + k) * c + ch) * 2;
                out[o] = z.re;
                out[o + 1] = z.im;
            }
        }
    }
    out
}

pub(crate) fn irfft2_raw(xh: &[f64], n1: usize, n2: usize, c: usize) -> Vec<f64> {
    let h = half_len(n2);
    let mut buf = vec![Complex64::default(); n1 * n2 * c];
    for i in 0..n1 {
        for k in 0..n2 {
            for ch in 0..c {
                let z = if k < h {
                    let o = ((i * h + k) * c + ch) * 2;
                    Complex64::new(xh[o], xh[o + 1])
                } else {
                    let o = ((((n1 - i) % n1) * h + (n2 - k)) * c + ch) * 2;
                    Complex64::new(xh[o], -xh[o + 1])
                };
                buf[(i * n2 + k) * c + ch] = z;
            }
        }
    }
    fft2_channels(&mut buf, n1, n2, c, true);
    let norm = 1.0 / (n1 * n2) as f64;
    buf.iter().map(|z| z.re * norm).collect()
}

/// Vector-Jacobian product of [`rfft2_raw`]: `Re(unnormalized inverse DFT)`
/// of the half-spectrum cotangent zero-extended to the full spectrum.
pub(crate) fn rfft2_vjp(g: &[f64], n1: usize, n2: usize, c: usize) -> Vec<f64> {
    let h = half_len(n2);
    let mut buf = vec![Complex64::default(); n1 * n2 * c];
    for i in 0..n1 {
        for k in 0..h {
            for ch in 0..c {
                let o = ((i * h + k) * c + ch) * 2;
                buf[(i * n2 + k) * c + ch] = Complex64::new(g[o], g[o + 1]);
            }
        }
    }
    fft2_channels(&mut buf, n1, n2, c, true);
    buf.iter().map(|z| z.re).collect()
}

/// Vector-Jacobian product of [`irfft2_raw`]: the forward transform of the
/// cotangent, scaled by `1/(n1 n2)` and doubled on columns whose conjugate
/// partner was dropped from the half spectrum.
pub(crate) fn irfft2_vjp(gx: &[f64], n1: usize, n2: usize, c: usize) -> Vec<f64> {
    let mut out = rfft2_raw(gx, n1, n2, c);
    let h = half_len(n2);
    let norm = 1.0 / (n1 * n2) as f64;
    for i in 0..n1 {
        for k in 0..h {
            let self_conjugate = k == 0 || (n2 % 2 == 0 && k == n2 / 2);
            let w = if self_conjugate { norm } else { 2.0 * norm };
            for ch in 0..c {
                let o = ((i * h + k) * c + ch) * 2;
                out[o] *= w;
                out[o + 1] *= w;
            }
        }
    }
    out
}

/// Forward real transform of an `n1 × n2` or `n1 × n2 × c` field.
/// The result has logical shape `n1 × (⌊n2/2⌋+1) × c`.
pub fn rfft2(x: &Tensor) -> Result<ComplexTensor> {
    let (n1, n2, c) = grid_dims(x.shape())?;
    ComplexTensor::from_interleaved(&[n1, half_len(n2), c], rfft2_raw(x.data(), n1, n2, c))
}

/// Inverse of [`rfft2`] onto an `n1 × n2 × c` real field.
pub fn irfft2(spectrum: &ComplexTensor, n2: usize) -> Result<Tensor> {
    let (n1, h, c) = match *spectrum.shape() {
        [n1, h, c] => (n1, h, c),
        [n1, h] => (n1, h, 1),
        ref s => return Err(Error::dim(format!("half spectrum must be rank 2 or 3, got {s:?}"))),
    };
    if n2 == 0 || half_len(n2) != h {
        return Err(Error::dim(format!("target extent {n2} inconsistent with {h} spectral columns")));
    }
    Tensor::new(&[n1, n2, c], irfft2_raw(spectrum.as_real().data(), n1, n2, c))
}
