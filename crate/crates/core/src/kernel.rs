use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{matmul, Tensor};

/// A kernel `K(x, y)` sampled at all `n × n` grid nodes (row-major), acting
/// on nodal functions by the quadrature `(Kf)(x) = h² Σ_y K(x, y) f(y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub n: usize,
    pub values: Tensor,
}

/// Grid metadata for serialized kernels and reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub n: usize,
    pub quadrature_weight: f64,
}

impl KernelMatrix {
    pub fn new(n: usize, values: Tensor) -> Result<Self> {
        let nodes = n * n;
        if values.shape() != [nodes, nodes] {
            return Err(Error::dim(format!(
                "kernel on a {n}×{n} grid must be {nodes}×{nodes}, got {:?}",
                values.shape()
            )));
        }
        Ok(KernelMatrix { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        KernelMatrix { n, values: Tensor::zeros(&[n * n, n * n]) }
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn quadrature_weight(&self) -> f64 {
        self.spacing().powi(2)
    }

    pub fn grid(&self) -> KernelGrid {
        KernelGrid { n: self.n, quadrature_weight: self.quadrature_weight() }
    }

    pub fn nodes(&self) -> usize {
        self.n * self.n
    }

    /// `h² K f` for an `N`-vector or an `N × d` stack of functions.
    pub fn apply(&self, f: &Tensor) -> Result<Tensor> {
        let cols = match *f.shape() {
            [len] if len == self.nodes() => 1,
            [len, d] if len == self.nodes() => d,
            ref s => return Err(Error::dim(format!("kernel on {} nodes cannot act on {s:?}", self.nodes()))),
        };
        let f2 = f.clone().reshape(&[self.nodes(), cols])?;
        let out = matmul(&self.values, &f2)?.scale(self.quadrature_weight());
        out.reshape(f.shape())
    }

    /// Row-major indices of nodes not on the boundary.
    pub fn interior_nodes(&self) -> Vec<usize> {
        interior_nodes(self.n)
    }

    /// The interior-by-interior block, `(n-2)² × (n-2)²`.
    pub fn interior_block(&self) -> Tensor {
        let idx = self.interior_nodes();
        let m = idx.len();
        let nodes = self.nodes();
        Tensor::from_fn(&[m, m], |k| self.values.data()[idx[k / m] * nodes + idx[k % m]])
    }

    /// `‖self − truth‖_F / ‖truth‖_F` over interior nodes.
    pub fn relative_error(&self, truth: &KernelMatrix) -> Result<f64> {
        if self.n != truth.n {
            return Err(Error::dim(format!("kernel grids differ: {} vs {}", self.n, truth.n)));
        }
        let a = self.interior_block();
        let b = truth.interior_block();
        let denom = b.norm();
        if denom == 0.0 {
            return Err(Error::contract("reference kernel is identically zero"));
        }
        Ok(a.sub(&b)?.norm() / denom)
    }
}

pub fn interior_nodes(n: usize) -> Vec<usize> {
    (1..n.saturating_sub(1)).flat_map(|i| (1..n - 1).map(move |j| i * n + j)).collect()
}

pub fn is_boundary(n: usize, node: usize) -> bool {
    let (i, j) = (node / n, node % n);
    i == 0 || j == 0 || i == n - 1 || j == n - 1
}
