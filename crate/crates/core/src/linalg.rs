use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::abs;

/// Solves `a x = b` for a dense row-major `n x n` matrix by Gaussian
/// elimination with partial pivoting. `a` and `b` are consumed as scratch.
pub(crate) fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| abs(a[r * n + col]).total_cmp(&abs(a[s * n + col])))
            .unwrap_or(col);
        if abs(a[pivot * n + col]) < 1e-300 {
            return Err(Error::Singular);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = alloc::vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// `(I - gamma * K) x = b` for a row-major kernel `K`.
pub(crate) fn solve_resolvent(kernel: &[f64], gamma: f64, b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut a = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = -gamma * kernel[i * n + j];
        }
        a[i * n + i] += 1.0;
    }
    solve_dense(a, b.to_vec(), n)
}

/// `(I - gamma * K^T) x = b`, i.e. the discounted flow equation.
pub(crate) fn solve_resolvent_transposed(
    kernel: &[f64],
    gamma: f64,
    b: &[f64],
    n: usize,
) -> Result<Vec<f64>> {
    let mut a = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = -gamma * kernel[j * n + i];
        }
        a[i * n + i] += 1.0;
    }
    solve_dense(a, b.to_vec(), n)
}
