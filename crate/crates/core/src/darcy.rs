//! Five-point finite differences for `-∇·(b∇p) = g` on the unit square with
//! `p = 0` on the boundary.
//!
//! Interface coefficients are arithmetic means of the adjacent nodal values,
//! `b_{i+1/2,j} = (b[i,j] + b[i+1,j]) / 2`, and boundary unknowns are
//! eliminated, leaving an `(n-2)² × (n-2)²` system over interior nodes in
//! row-major order. Systems are small enough for dense Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::tensor::Tensor;

/// Condition estimates beyond this are treated as singular.
const MAX_CONDITION: f64 = 1e13;

/// Uniform grid over `[0,1]²` with `n` points per side, boundary included.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid2D {
    pub n: usize,
}

impl Grid2D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Config(format!("grid needs at least 3 points per side, got {n}")));
        }
        Ok(Grid2D { n })
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn nodes(&self) -> usize {
        self.n * self.n
    }

    /// Interior points per side.
    pub fn m(&self) -> usize {
        self.n - 2
    }

    pub fn interior_index(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.m() + (j - 1)
    }

    fn check_field(&self, f: &Tensor, what: &str) -> Result<()> {
        if f.shape() != [self.n, self.n] && f.shape() != [self.nodes()] {
            return Err(Error::dim(format!(
                "{what} must be {n}×{n}, got {:?}",
                f.shape(),
                n = self.n
            )));
        }
        Ok(())
    }
}

/// Dense stiffness matrix over interior nodes.
#[derive(Clone, Debug)]
pub struct StiffnessMatrix {
    pub grid: Grid2D,
    pub matrix: DMatrix<f64>,
}

impl StiffnessMatrix {
    pub fn to_tensor(&self) -> Tensor {
        let m = self.matrix.nrows();
        Tensor::from_fn(&[m, m], |k| self.matrix[(k / m, k % m)])
    }
}

/// One interface between neighbouring nodes that enters the stencil.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    /// Node indices in the full `n × n` grid.
    pub a: usize,
    pub b: usize,
    /// Interior indices of the endpoints, `None` for boundary nodes.
    pub ia: Option<usize>,
    pub ib: Option<usize>,
}

/// Every interface with at least one interior endpoint.
pub fn stencil_edges(grid: Grid2D) -> Vec<Edge> {
    let n = grid.n;
    let interior = |i: usize, j: usize| -> Option<usize> {
        (i > 0 && j > 0 && i < n - 1 && j < n - 1).then(|| grid.interior_index(i, j))
    };
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for (di, dj) in [(1usize, 0usize), (0, 1)] {
                let (i2, j2) = (i + di, j + dj);
                if i2 >= n || j2 >= n {
                    continue;
                }
                let (ia, ib) = (interior(i, j), interior(i2, j2));
                if ia.is_some() || ib.is_some() {
                    edges.push(Edge { a: i * n + j, b: i2 * n + j2, ia, ib });
                }
            }
        }
    }
    edges
}

/// Assembles `K_B` from nodal permeability `b` (shape `n × n` or `n²`).
pub fn assemble_stiffness(b: &Tensor, grid: Grid2D) -> Result<StiffnessMatrix> {
    grid.check_field(b, "permeability")?;
    if let Some(bad) = b.data().iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("permeability must be positive and finite, found {bad}")));
    }
    let m = grid.m();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut k = DMatrix::<f64>::zeros(m * m, m * m);
    let bd = b.data();
    for e in stencil_edges(grid) {
        let c = 0.5 * (bd[e.a] + bd[e.b]) * inv_h2;
        if let Some(p) = e.ia {
            k[(p, p)] += c;
        }
        if let Some(q) = e.ib {
            k[(q, q)] += c;
        }
        if let (Some(p), Some(q)) = (e.ia, e.ib) {
            k[(p, q)] -= c;
            k[(q, p)] -= c;
        }
    }
    Ok(StiffnessMatrix { grid, matrix: k })
}

/// A factorized Darcy system for one permeability field.
pub struct DarcyOperator {
    pub stiffness: StiffnessMatrix,
    chol: Cholesky<f64, Dyn>,
    condition: f64,
}

impl DarcyOperator {
    pub fn new(b: &Tensor, grid: Grid2D) -> Result<Self> {
        let stiffness = assemble_stiffness(b, grid)?;
        let diag = stiffness.matrix.diagonal();
        let diag_ratio = diag.max() / diag.min().max(f64::MIN_POSITIVE);
        let Some(chol) = stiffness.matrix.clone().cholesky() else {
            return Err(Error::Solver {
                reason: "stiffness matrix is not positive definite".into(),
                condition: f64::INFINITY,
            });
        };
        let l = chol.l_dirty().diagonal();
        let pivot_ratio = (l.max() / l.min().max(f64::MIN_POSITIVE)).powi(2);
        let condition = pivot_ratio.max(diag_ratio);
        if !(condition < MAX_CONDITION) {
            return Err(Error::Solver { reason: "stiffness matrix is ill-conditioned".into(), condition });
        }
        Ok(DarcyOperator { stiffness, chol, condition })
    }

    pub fn grid(&self) -> Grid2D {
        self.stiffness.grid
    }

    /// Lower-bound estimate of the 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    /// Pressure on the full grid for loading `g`; boundary entries are zero.
    pub fn solve(&self, g: &Tensor) -> Result<Tensor> {
        let grid = self.grid();
        grid.check_field(g, "loading")?;
        let n = grid.n;
        let rhs = DVector::from_iterator(
            grid.m() * grid.m(),
            (1..n - 1).flat_map(|i| (1..n - 1).map(move |j| i * n + j)).map(|k| g.data()[k]),
        );
        let p_int = self.chol.solve(&rhs);
        let mut p = Tensor::zeros(&[n, n]);
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                p.data_mut()[i * n + j] = p_int[grid.interior_index(i, j)];
            }
        }
        Ok(p)
    }

    /// `K_B⁻¹` over interior nodes.
    pub fn inverse_interior(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `K_B⁻¹ / h²` embedded in the full `n² × n²` node set with zero boundary
    /// rows and columns, so that `h² Σ_y K(x,y) g(y)` reproduces [`solve`](Self::solve).
    pub fn greens_kernel(&self) -> KernelMatrix {
        let grid = self.grid();
        let n = grid.n;
        let nodes = grid.nodes();
        let inv = self.inverse_interior();
        let scale = 1.0 / (grid.h() * grid.h());
        let mut values = Tensor::zeros(&[nodes, nodes]);
        let interior = crate::kernel::interior_nodes(n);
        for (p, &x) in interior.iter().enumerate() {
            for (q, &y) in interior.iter().enumerate() {
                values.data_mut()[x * nodes + y] = inv[(p, q)] * scale;
            }
        }
        KernelMatrix { n, values }
    }
}

/// Solves `-∇·(b∇p) = g` with homogeneous Dirichlet data.
pub fn solve_darcy(b: &Tensor, g: &Tensor) -> Result<Tensor> {
    let n = b.shape()[0];
    DarcyOperator::new(b, Grid2D::new(n)?)?.solve(g)
}

/// Ground-truth kernel for permeability `b`; see [`DarcyOperator::greens_kernel`].
pub fn greens_kernel(b: &Tensor, grid: Grid2D) -> Result<KernelMatrix> {
    Ok(DarcyOperator::new(b, grid)?.greens_kernel())
}
