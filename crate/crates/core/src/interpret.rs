//! Reading physics out of a kernel: row-sum strength maps, two-phase
//! thresholding and permeability recovery from the inverse stiffness.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::darcy::{assemble_stiffness, stencil_edges, Grid2D};
use crate::error::{Error, Result};
use crate::kernel::{interior_nodes, is_boundary, KernelMatrix};
use crate::randfield::{PHASE_HIGH_FIELD, PHASE_LOW_FIELD};
use crate::tensor::Tensor;

/// `s(x) = h² Σ_y |K(x, y)|` on the grid, zero on the boundary.
pub fn rowsum_map(k: &KernelMatrix) -> Tensor {
    let (n, nodes, w) = (k.n, k.nodes(), k.quadrature_weight());
    Tensor::from_fn(&[n, n], |x| {
        if is_boundary(n, x) {
            return 0.0;
        }
        w * k.values.data()[x * nodes..(x + 1) * nodes].iter().map(|v| v.abs()).sum::<f64>()
    })
}

/// Row-sum map divided by that of a homogeneous medium, which removes the
/// decay towards the Dirichlet boundary. Zero on the boundary.
pub fn compensated_rowsum_map(k: &KernelMatrix) -> Result<Tensor> {
    let grid = Grid2D::new(k.n)?;
    let reference = rowsum_map(&crate::darcy::greens_kernel(&Tensor::full(&[k.n, k.n], 1.0), grid)?);
    rowsum_map(k).zip_map(&reference, |s, r| if r > 0.0 { s / r } else { 0.0 })
}

/// Phase labels from a kernel: Otsu on the log of the compensated row sums.
pub fn kernel_phase_map(k: &KernelMatrix) -> Result<PhaseMap> {
    let c = compensated_rowsum_map(k)?;
    threshold_twophase(&c.map(|v| if v > 0.0 { v.ln() } else { 0.0 }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    /// `n × n`; interior nodes carry 3 or 12, boundary nodes 0.
    pub labels: Tensor,
    pub threshold: f64,
}

/// Two-class Otsu threshold: the cut maximizing between-class variance.
pub fn otsu_threshold(values: &[f64]) -> Result<f64> {
    let mut v: Vec<f64> = values.to_vec();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("threshold input has non-finite values".into()));
    }
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (*v.first().unwrap_or(&0.0), *v.last().unwrap_or(&0.0));
    if lo == hi {
        return Err(Error::Domain("degenerate threshold: field is constant".into()));
    }
    let total: f64 = v.iter().sum();
    let n = v.len() as f64;
    let (mut best, mut cut) = (-1.0, 0.5 * (lo + hi));
    let mut below = 0.0;
    for i in 0..v.len() - 1 {
        below += v[i];
        if v[i] == v[i + 1] {
            continue;
        }
        let n0 = (i + 1) as f64;
        let (m0, m1) = (below / n0, (total - below) / (n - n0));
        let between = n0 * (n - n0) * (m0 - m1).powi(2);
        if between > best {
            best = between;
            cut = 0.5 * (v[i] + v[i + 1]);
        }
    }
    Ok(cut)
}

/// Labels interior nodes of a row-sum map. Stronger interaction means lower
/// permeability, so values above the threshold become 3 and the rest 12.
pub fn threshold_twophase(s: &Tensor) -> Result<PhaseMap> {
    let n = s.shape()[0];
    let idx = interior_nodes(n);
    let vals: Vec<f64> = idx.iter().map(|&x| s.data()[x]).collect();
    let threshold = otsu_threshold(&vals)?;
    let mut labels = Tensor::zeros(&[n, n]);
    for &x in &idx {
        labels.data_mut()[x] = if s.data()[x] > threshold { PHASE_HIGH_FIELD } else { PHASE_LOW_FIELD };
    }
    Ok(PhaseMap { labels, threshold })
}

/// Labels a permeability estimate: values above the threshold become 12.
pub fn threshold_permeability(b: &Tensor) -> Result<PhaseMap> {
    let n = b.shape()[0];
    let idx = interior_nodes(n);
    let vals: Vec<f64> = idx.iter().map(|&x| b.data()[x]).collect();
    let threshold = otsu_threshold(&vals)?;
    let mut labels = Tensor::zeros(&[n, n]);
    for &x in &idx {
        labels.data_mut()[x] = if b.data()[x] > threshold { PHASE_LOW_FIELD } else { PHASE_HIGH_FIELD };
    }
    Ok(PhaseMap { labels, threshold })
}

/// Fraction of interior nodes where two label maps agree.
pub fn interior_agreement(a: &Tensor, b: &Tensor) -> f64 {
    let n = a.shape()[0];
    let idx = interior_nodes(n);
    idx.iter().filter(|&&x| a.data()[x] == b.data()[x]).count() as f64 / idx.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub learning_rate: f64,
    pub iterations: usize,
    pub init: f64,
    pub clamp: (f64, f64),
    /// Stop once the objective falls by less than this fraction over `window` steps.
    pub tol: f64,
    pub window: usize,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { learning_rate: 0.05, iterations: 2000, init: 7.5, clamp: (0.5, 50.0), tol: 1e-6, window: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub grid: usize,
    /// Recovered nodal permeability, row-major `n × n`.
    pub b_star: Vec<f64>,
    pub objective: Vec<f64>,
    pub iterations: usize,
    /// Amplitude of the checkerboard mode added after descent.
    pub gauge_shift: f64,
    /// Relative L² error against the true field over identifiable nodes.
    pub microstructure_error: Option<f64>,
    pub phase_map: Vec<f64>,
    pub threshold: f64,
    pub rejected_steps: usize,
}

impl RecoveryResult {
    pub fn b_star_tensor(&self) -> Tensor {
        Tensor::new(&[self.grid, self.grid], self.b_star.clone()).expect("stored with matching length")
    }

    pub fn phase_map_tensor(&self) -> Tensor {
        Tensor::new(&[self.grid, self.grid], self.phase_map.clone()).expect("stored with matching length")
    }
}

fn to_dmatrix(t: &Tensor) -> DMatrix<f64> {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    DMatrix::from_row_slice(r, c, t.data())
}

/// Interior target `h² K` for the objective.
pub fn recovery_target(k: &KernelMatrix) -> DMatrix<f64> {
    to_dmatrix(&k.interior_block()) * k.quadrature_weight()
}

/// `‖K_B⁻¹ − T‖²_F` and its gradient with respect to every nodal value of `b`.
pub fn recovery_objective(b: &Tensor, target: &DMatrix<f64>, grid: Grid2D) -> Result<(f64, Tensor)> {
    let kb = assemble_stiffness(b, grid)?.matrix;
    let x = kb
        .cholesky()
        .ok_or_else(|| Error::Solver { reason: "stiffness lost definiteness".into(), condition: f64::INFINITY })?
        .inverse();
    if x.shape() != target.shape() {
        return Err(Error::dim(format!("target {:?} vs interior inverse {:?}", target.shape(), x.shape())));
    }
    let r = &x - target;
    let value = r.norm_squared();
    // dJ = −⟨W, dK⟩ with W = 2 X R X.
    let w = (&x * &r * &x) * 2.0;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut grad = Tensor::zeros(&[grid.n, grid.n]);
    for e in stencil_edges(grid) {
        let mut dc = 0.0;
        if let Some(p) = e.ia {
            dc += w[(p, p)];
        }
        if let Some(q) = e.ib {
            dc += w[(q, q)];
        }
        if let (Some(p), Some(q)) = (e.ia, e.ib) {
            dc -= w[(p, q)] + w[(q, p)];
        }
        let g = -dc * 0.5 * inv_h2;
        grad.data_mut()[e.a] += g;
        grad.data_mut()[e.b] += g;
    }
    Ok((value, grad))
}

fn corners(n: usize) -> [usize; 4] {
    [0, n - 1, n * (n - 1), n * n - 1]
}

/// Boundary nodes flanking each corner. Both reach the stiffness only
/// through the diagonal of the same interior node, so only their sum is
/// determined.
fn corner_pairs(n: usize) -> [(usize, usize); 4] {
    let at = |i: usize, j: usize| i * n + j;
    [
        (at(0, 1), at(1, 0)),
        (at(0, n - 2), at(1, n - 1)),
        (at(n - 2, 0), at(n - 1, 1)),
        (at(n - 1, n - 2), at(n - 2, n - 1)),
    ]
}

/// Nodes whose permeability no stiffness matrix can reveal.
pub fn unidentifiable_nodes(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = corners(n).to_vec();
    for (a, b) in corner_pairs(n) {
        v.extend([a, b]);
    }
    v.sort_unstable();
    v
}

fn checkerboard(n: usize, x: usize) -> f64 {
    if (x / n + x % n) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Interface averages are blind to `b + ε(−1)^{i+j}`; picks the `ε` that
/// minimizes total variation across stencil edges, a weighted median.
fn checkerboard_gauge(b: &Tensor, grid: Grid2D) -> f64 {
    let n = grid.n;
    let mut cand: Vec<f64> = stencil_edges(grid)
        .iter()
        .map(|e| -(b.data()[e.a] - b.data()[e.b]) * checkerboard(n, e.a) / 2.0)
        .collect();
    cand.sort_by(f64::total_cmp);
    cand[cand.len() / 2]
}

/// Relative L² distance over identifiable nodes.
pub fn microstructure_error(estimate: &Tensor, truth: &Tensor) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::dim(format!("{:?} vs {:?}", estimate.shape(), truth.shape())));
    }
    let n = truth.shape()[0];
    let skip = unidentifiable_nodes(n);
    let (mut num, mut den) = (0.0, 0.0);
    for x in 0..n * n {
        if skip.contains(&x) {
            continue;
        }
        num += (estimate.data()[x] - truth.data()[x]).powi(2);
        den += truth.data()[x].powi(2);
    }
    Ok((num / den).sqrt())
}

/// Fits nodal permeability whose interior inverse stiffness matches `h² K`.
pub fn recover_permeability(k: &KernelMatrix, truth: Option<&Tensor>, opts: &RecoveryOptions) -> Result<RecoveryResult> {
    let grid = Grid2D::new(k.n)?;
    if k.n > 21 {
        return Err(Error::contract(format!("recovery is limited to grids up to 21, got {}", k.n)));
    }
    let (lo, hi) = opts.clamp;
    if !(0.0 < lo && lo < hi && opts.learning_rate > 0.0) {
        return Err(Error::Config("recovery needs 0 < clamp.0 < clamp.1 and a positive rate".into()));
    }
    let n = grid.n;
    let target = recovery_target(k);
    let skip = corners(n);
    let mut b = Tensor::full(&[n, n], opts.init);
    let (mut m, mut v) = (vec![0.0; n * n], vec![0.0; n * n]);
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let mut trace = Vec::new();
    let mut rejected = 0;
    let mut lr = opts.learning_rate;
    let mut iters = 0;
    let (mut value, mut grad) = recovery_objective(&b, &target, grid)?;
    trace.push(value);
    for t in 1..=opts.iterations {
        iters = t;
        let mut next = b.clone();
        for x in 0..n * n {
            if skip.contains(&x) {
                continue;
            }
            let g = grad.data()[x];
            m[x] = beta1 * m[x] + (1.0 - beta1) * g;
            v[x] = beta2 * v[x] + (1.0 - beta2) * g * g;
            let mh = m[x] / (1.0 - beta1.powi(t as i32));
            let vh = v[x] / (1.0 - beta2.powi(t as i32));
            // eps is relative: objective values are far below unit scale.
            let step = if vh > 0.0 { lr * mh / (vh.sqrt() * (1.0 + eps)) } else { 0.0 };
            next.data_mut()[x] = (b.data()[x] - step).clamp(lo, hi);
        }
        match recovery_objective(&next, &target, grid) {
            Ok((nv, ng)) => {
                b = next;
                value = nv;
                grad = ng;
            }
            Err(Error::Solver { .. }) => {
                rejected += 1;
                lr *= 0.5;
                b = b.map(|x| 0.5 * (x + opts.init));
                let (nv, ng) = recovery_objective(&b, &target, grid)?;
                value = nv;
                grad = ng;
            }
            Err(e) => return Err(e),
        }
        trace.push(value);
        if t >= opts.window {
            let old = trace[t - opts.window];
            if old > 0.0 && (old - value) / old < opts.tol || value == 0.0 {
                break;
            }
        }
    }
    let shift = checkerboard_gauge(&b, grid);
    let mut b = Tensor::from_fn(&[n, n], |x| (b.data()[x] + shift * checkerboard(n, x)).clamp(lo, hi));
    for (a, c) in corner_pairs(n) {
        let mid = 0.5 * (b.data()[a] + b.data()[c]);
        b.data_mut()[a] = mid;
        b.data_mut()[c] = mid;
    }
    for &c in &skip {
        let (i, j) = (c / n, c % n);
        let ni = if i == 0 { 1 } else { n - 2 };
        let nj = if j == 0 { 1 } else { n - 2 };
        b.data_mut()[c] = 0.5 * (b.data()[ni * n + j] + b.data()[i * n + nj]);
    }
    let phase = threshold_permeability(&b)?;
    let microstructure_error = truth.map(|t| microstructure_error(&b, t)).transpose()?;
    Ok(RecoveryResult {
        grid: n,
        b_star: b.into_data(),
        objective: trace,
        iterations: iters,
        gauge_shift: shift,
        microstructure_error,
        phase_map: phase.labels.into_data(),
        threshold: phase.threshold,
        rejected_steps: rejected,
    })
}

/// Linear gray levels; `range` defaults to the field's own min and max.
pub fn to_pgm(field: &Tensor, range: Option<(f64, f64)>) -> Vec<u8> {
    let (rows, cols) = (field.shape()[0], field.shape()[1]);
    let (lo, hi) = range.unwrap_or_else(|| {
        let d = field.data();
        (d.iter().cloned().fold(f64::INFINITY, f64::min), d.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    });
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    out.extend(field.data().iter().map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn to_svg(field: &Tensor, title: &str, cell: usize) -> String {
    let (rows, cols) = (field.shape()[0], field.shape()[1]);
    let pgm = to_pgm(field, None);
    let pixels = &pgm[pgm.len() - rows * cols..];
    let (w, h) = (cols * cell, rows * cell + 20);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
    let _ = writeln!(s, "<text x=\"2\" y=\"14\" font-family=\"sans-serif\" font-size=\"12\">{title}</text>");
    for i in 0..rows {
        for j in 0..cols {
            let g = pixels[i * cols + j];
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({g},{g},{g})\"/>",
                j * cell,
                20 + i * cell
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
