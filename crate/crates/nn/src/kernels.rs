//! Row-major matrix kernels. Inner loops run over contiguous slices so the
//! compiler can vectorize them.

use crate::Scalar;

#[inline]
fn axpy<F: Scalar>(y: &mut [F], a: F, x: &[F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = F::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

const MR: usize = 4;
const NR: usize = 16;

/// `c[m x n] += a[m x k] * b[k x n]`
///
/// Blocks of `MR x NR` outputs accumulate in registers across the whole
/// `k` loop; ragged edges fall back to row-wise axpy.
pub(crate) fn gemm_nn<F: Scalar>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F]) {
    let m_main = m - m % MR;
    let n_main = n - n % NR;
    for i in (0..m_main).step_by(MR) {
        for j in (0..n_main).step_by(NR) {
            let mut acc = [[F::zero(); NR]; MR];
            for kk in 0..k {
                let b_blk = &b[kk * n + j..kk * n + j + NR];
                for r in 0..MR {
                    let av = a[(i + r) * k + kk];
                    for (x, &y) in acc[r].iter_mut().zip(b_blk) {
                        *x += av * y;
                    }
                }
            }
            for (r, acc_row) in acc.iter().enumerate() {
                let c_blk = &mut c[(i + r) * n + j..(i + r) * n + j + NR];
                for (x, &y) in c_blk.iter_mut().zip(acc_row) {
                    *x += y;
                }
            }
        }
        if n_main < n {
            for r in i..i + MR {
                edge_row(r, k, n, n_main, a, b, c);
            }
        }
    }
    for r in m_main..m {
        edge_row(r, k, n, 0, a, b, c);
    }
}

fn edge_row<F: Scalar>(i: usize, k: usize, n: usize, j0: usize, a: &[F], b: &[F], c: &mut [F]) {
    let c_row = &mut c[i * n + j0..(i + 1) * n];
    for kk in 0..k {
        let aik = a[i * k + kk];
        if aik != F::zero() {
            axpy(c_row, aik, &b[kk * n + j0..(kk + 1) * n]);
        }
    }
}

pub(crate) fn transpose<F: Scalar>(rows: usize, cols: usize, x: &[F]) -> Vec<F> {
    let mut t = vec![F::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = x[i * cols + j];
        }
    }
    t
}

/// `c[m x n] += a[m x k] * b[n x k]^T`
pub(crate) fn gemm_nt<F: Scalar>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F]) {
    if m >= MR && n >= NR {
        let bt = transpose(n, k, b);
        gemm_nn(m, k, n, a, &bt, c);
        return;
    }
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (j, cij) in c_row.iter_mut().enumerate() {
            *cij += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `c[k x n] += a[m x k]^T * b[m x n]`
pub(crate) fn gemm_tn<F: Scalar>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F]) {
    if k >= MR && n >= NR {
        let at = transpose(m, k, a);
        gemm_nn(k, m, n, &at, b, c);
        return;
    }
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (kk, &aik) in a_row.iter().enumerate() {
            if aik != F::zero() {
                axpy(&mut c[kk * n..(kk + 1) * n], aik, b_row);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    c[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        c
    }


    #[test]
    fn kernels_agree_with_naive_product() {
        for (m, k, n) in [(5, 11, 7), (9, 13, 37), (4, 3, 16), (1, 20, 33), (33, 2, 18)] {
            check(m, k, n);
        }
    }

    fn check(m: usize, k: usize, n: usize) {
        let a: Vec<f64> = (0..m * k).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| ((i * 5 % 11) as f64) * 0.5 - 2.0).collect();
        let want = naive(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        gemm_nn(m, k, n, &a, &b, &mut c);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        let bt = transpose(k, n, &b);
        let mut c = vec![0.0; m * n];
        gemm_nt(m, k, n, &a, &bt, &mut c);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        let at = transpose(m, k, &a);
        let mut c = vec![0.0; m * n];
        gemm_tn(k, m, n, &at, &b, &mut c);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
