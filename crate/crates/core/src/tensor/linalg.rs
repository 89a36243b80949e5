use crate::error::{Error, Result};

use super::Tensor;

/// `out = alpha * op(a) * op(b) + beta * out` on row-major storage, where
/// `op(x)` is `x` or its transpose. `a` is stored `a_rows × a_cols`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    alpha: f64,
    a: &[f64],
    (a_rows, a_cols): (usize, usize),
    trans_a: bool,
    b: &[f64],
    (b_rows, b_cols): (usize, usize),
    trans_b: bool,
    beta: f64,
    out: &mut [f64],
) -> Result<(usize, usize)> {
    let (m, k) = if trans_a { (a_cols, a_rows) } else { (a_rows, a_cols) };
    let (k2, n) = if trans_b { (b_cols, b_rows) } else { (b_rows, b_cols) };
    if k != k2 {
        return Err(Error::dim(format!("inner extents differ: {m}×{k} · {k2}×{n}")));
    }
    if a.len() != a_rows * a_cols || b.len() != b_rows * b_cols || out.len() != m * n {
        return Err(Error::dim("gemm buffer length does not match extents"));
    }
    let (rsa, csa) = if trans_a { (1, a_cols) } else { (a_cols, 1) };
    let (rsb, csb) = if trans_b { (1, b_cols) } else { (b_cols, 1) };
    if m == 0 || n == 0 {
        return Ok((m, n));
    }
    if k == 0 {
        out.iter_mut().for_each(|x| *x *= beta);
        return Ok((m, n));
    }
    // SAFETY: extents and strides were validated against the slice lengths above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok((m, n))
}

/// Matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    matmul_t(a, false, b, false)
}

pub fn matmul_t(a: &Tensor, trans_a: bool, b: &Tensor, trans_b: bool) -> Result<Tensor> {
    let ad = a.dims2()?;
    let bd = b.dims2()?;
    let m = if trans_a { ad.1 } else { ad.0 };
    let n = if trans_b { bd.0 } else { bd.1 };
    let mut out = vec![0.0; m * n];
    gemm(1.0, a.data(), ad, trans_a, b.data(), bd, trans_b, 0.0, &mut out)?;
    Tensor::new(&[m, n], out)
}
