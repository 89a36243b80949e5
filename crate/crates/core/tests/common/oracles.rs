//! Slow reference implementations built from first principles: explicit DFT
//! sums and explicit quadrature double sums.

#![allow(dead_code)]

use std::f64::consts::PI;

use nips_core::model::ModelConfig;
use nips_core::Tensor;

/// Dense `N × N` matrix of the real filter `y ↦ Re F⁻¹(D · F y)` for channel
/// `ch` of the half-spectrum multipliers `r`, by direct DFT summation.
pub fn circulant_from_multipliers(r: &Tensor, ch: usize, cfg: &ModelConfig) -> Tensor {
    let n = cfg.grid;
    let rows = cfg.retained_rows();
    let cols = cfg.retained_cols();
    let h = n / 2 + 1;
    let [_, _, c, _] = *r.shape() else { panic!("multipliers must be rank 4") };
    let half = |i: usize, k: usize| -> (f64, f64) {
        match rows.iter().position(|&q| q == i) {
            Some(q) if k < cols => {
                let o = ((q * cols + k) * c + ch) * 2;
                (r.data()[o], r.data()[o + 1])
            }
            _ => (0.0, 0.0),
        }
    };
    let full = |i: usize, k: usize| -> (f64, f64) {
        if k < h {
            half(i, k)
        } else {
            let (re, im) = half((n - i) % n, n - k);
            (re, -im)
        }
    };
    let nodes = n * n;
    let mut out = Tensor::zeros(&[nodes, nodes]);
    for x in 0..nodes {
        for z in 0..nodes {
            let (dx1, dx2) = ((x / n) as f64 - (z / n) as f64, (x % n) as f64 - (z % n) as f64);
            let mut acc = 0.0;
            for k1 in 0..n {
                for k2 in 0..n {
                    let (re, im) = full(k1, k2);
                    let phase = 2.0 * PI * (k1 as f64 * dx1 + k2 as f64 * dx2) / n as f64;
                    acc += re * phase.cos() - im * phase.sin();
                }
            }
            out.data_mut()[x * nodes + z] = acc / nodes as f64;
        }
    }
    out
}

fn layer_norm(x: &[f64], rows: usize, cols: usize, whole: bool) -> Vec<f64> {
    let eps = 1e-5;
    let norm = |vals: &[f64]| -> (f64, f64) {
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, 1.0 / (v + eps).sqrt())
    };
    if whole {
        let (m, s) = norm(x);
        x.iter().map(|a| (a - m) * s).collect()
    } else {
        let mut out = vec![0.0; x.len()];
        for i in 0..rows {
            let row = &x[i * cols..(i + 1) * cols];
            let (m, s) = norm(row);
            for j in 0..cols {
                out[i * cols + j] = (row[j] - m) * s;
            }
        }
        out
    }
}

/// `∫ K[p, q](x, y) q_j(y) dy` with
/// `K[p, q](x, y) = Σ_{ω,ν} ∫ W(x, z) p_ω(z) W^{QK}[ω, ν] q_ν(y) dz`,
/// every integral a plain `h²`-weighted sum.
pub fn kernel_integral(p: &Tensor, q: &Tensor, w: &Tensor, wqk: &[Vec<f64>], h2: f64) -> Vec<f64> {
    let (nodes, d) = (p.shape()[0], p.shape()[1]);
    let mut out = vec![0.0; nodes * d];
    for x in 0..nodes {
        for y in 0..nodes {
            let mut k_xy = 0.0;
            for z in 0..nodes {
                let wxz = w.data()[x * nodes + z];
                if wxz == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for (om, row) in wqk.iter().enumerate() {
                    for (nu, &c) in row.iter().enumerate() {
                        inner += p.data()[z * d + om] * c * q.data()[y * d + nu];
                    }
                }
                k_xy += h2 * wxz * inner;
            }
            for j in 0..d {
                out[x * d + j] += h2 * k_xy * q.data()[y * d + j];
            }
        }
    }
    out
}

/// One residual block evaluated as the quadratic double integral, with
/// projections `w_g`, `w_v` and `W^{QK} = W_Q W_Kᵀ / √d_k`.
pub fn brute_force_block(
    g: &Tensor,
    v: &Tensor,
    w_q: &Tensor,
    w_k: &Tensor,
    w_g: &Tensor,
    w_v: &Tensor,
    cfg: &ModelConfig,
    whole_norm: bool,
) -> (Tensor, Tensor) {
    let (d, dk) = (cfg.d, cfg.d_k);
    let scale = 1.0 / (dk as f64).sqrt();
    let wqk: Vec<Vec<f64>> = (0..d)
        .map(|om| {
            (0..d)
                .map(|nu| scale * (0..dk).map(|a| w_q.data()[om * dk + a] * w_k.data()[nu * dk + a]).sum::<f64>())
                .collect()
        })
        .collect();
    let h2 = cfg.quadrature_weight();
    let nodes = cfg.nodes();
    let update = |p: &Tensor, wp: &Tensor, other: &Tensor| -> Vec<f64> {
        let a = kernel_integral(p, p, wp, &wqk, h2);
        let b = kernel_integral(p, other, wp, &wqk, h2);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    };
    let ug = layer_norm(&update(g, w_g, v), nodes, d, whole_norm);
    let uv = layer_norm(&update(v, w_v, g), nodes, d, whole_norm);
    let add = |base: &Tensor, u: Vec<f64>| Tensor::new(base.shape(), base.data().iter().zip(u).map(|(a, b)| a + b).collect()).unwrap();
    (add(g, ug), add(v, uv))
}
