//! Dense kernels for the EASE closed form: sparse Gram matrix and SPD inverse.
//!
//! Matrices are row-major `n x n` slices. The factorization and inversion work on
//! groups of rows so that each pivot row is streamed once per group.

use rayon::prelude::*;

use crate::sparse::Csr;

const BLOCK: usize = 64;
const GROUP: usize = 8;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Lower triangle (including diagonal) of `XᵀX + l2·I` for a user×item matrix `x`.
/// Entries above the diagonal are left at zero.
pub fn gram_lower(x: &Csr, l2: f64) -> Vec<f64> {
    let n = x.n_cols();
    let xt = x.transpose();
    let mut g = vec![0.0; n * n];
    g.par_chunks_mut(n.max(1)).enumerate().for_each(|(a, row)| {
        for (&u, &va) in xt.row_indices(a).iter().zip(xt.row_values(a)) {
            let u = u as usize;
            for (&b, &vb) in x.row_indices(u).iter().zip(x.row_values(u)) {
                if b as usize > a {
                    break;
                }
                row[b as usize] += va * vb;
            }
        }
        row[a] += l2;
    });
    g
}

fn split_rows(a: &mut [f64], n: usize, lo: usize, hi: usize) -> (&[f64], &mut [f64]) {
    let (head, tail) = a.split_at_mut(hi * n);
    (&head[lo * n..lo * n + n], &mut tail[..n])
}

/// In-place Cholesky factorization of the lower triangle of `a` (`a = L·Lᵀ`).
///
/// `expired` is polled between row blocks; a `true` aborts with `Ok(false)`.
pub fn cholesky_lower(a: &mut [f64], n: usize, expired: &(dyn Fn() -> bool + Sync)) -> Result<bool, String> {
    for i0 in (0..n).step_by(BLOCK) {
        if expired() {
            return Ok(false);
        }
        let i1 = (i0 + BLOCK).min(n);
        {
            let (done, rest) = a.split_at_mut(i0 * n);
            let done: &[f64] = done;
            rest[..(i1 - i0) * n].par_chunks_mut(GROUP * n).for_each(|rows| {
                let g = rows.len() / n;
                for j in 0..i0 {
                    let rj = &done[j * n..j * n + j + 1];
                    let ljj = rj[j];
                    for r in 0..g {
                        let row = &mut rows[r * n..r * n + n];
                        let s = row[j] - dot(&row[..j], &rj[..j]);
                        row[j] = s / ljj;
                    }
                }
            });
        }
        for i in i0..i1 {
            for j in i0..=i {
                if i == j {
                    let row = &mut a[i * n..i * n + n];
                    let s = row[i] - dot(&row[..i], &row[..i]);
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(format!("matrix not positive definite at pivot {i} ({s})"));
                    }
                    row[i] = s.sqrt();
                } else {
                    let (rj, ri) = split_rows(a, n, j, i);
                    let s = ri[j] - dot(&ri[..j], &rj[..j]);
                    ri[j] = s / rj[j];
                }
            }
        }
    }
    Ok(true)
}

/// Given a Cholesky factor `L` (lower triangle of `l`), returns `Lᵀ⁻¹` stored row-major
/// as an upper-triangular matrix: row `j` holds column `j` of `L⁻¹`.
pub fn inverse_factor_transposed(l: &[f64], n: usize) -> Vec<f64> {
    let mut mt = vec![0.0; n * n];
    mt.par_chunks_mut(GROUP * n.max(1)).enumerate().for_each(|(c, rows)| {
        let j0 = c * GROUP;
        let g = rows.len() / n;
        for r in 0..g {
            let j = j0 + r;
            rows[r * n + j] = 1.0 / l[j * n + j];
        }
        for i in j0 + 1..n {
            let li = &l[i * n..i * n + i];
            let lii = l[i * n + i];
            for r in 0..g {
                let j = j0 + r;
                if j >= i {
                    continue;
                }
                let row = &mut rows[r * n..r * n + n];
                let s = dot(&li[j..i], &row[j..i]);
                row[i] = -s / lii;
            }
        }
    });
    mt
}

/// Lower triangle of `P = L⁻ᵀ·L⁻¹` from the output of [`inverse_factor_transposed`],
/// written into `out` (upper triangle untouched).
pub fn inverse_from_factor(mt: &[f64], n: usize, out: &mut [f64]) {
    out.par_chunks_mut(GROUP * n.max(1)).enumerate().for_each(|(c, rows)| {
        let i0 = c * GROUP;
        let g = rows.len() / n;
        let last = i0 + g - 1;
        for j in 0..=last {
            let mj = &mt[j * n..j * n + n];
            for r in 0..g {
                let i = i0 + r;
                if j > i {
                    continue;
                }
                let mi = &mt[i * n..i * n + n];
                rows[r * n + j] = dot(&mi[i..], &mj[i..]);
            }
        }
    });
}

/// Full inverse of a symmetric positive-definite matrix given by its lower triangle.
/// Returns `None` when `expired` fires first.
pub fn spd_inverse(mut a: Vec<f64>, n: usize, expired: &(dyn Fn() -> bool + Sync)) -> Result<Option<Vec<f64>>, String> {
    if !cholesky_lower(&mut a, n, expired)? {
        return Ok(None);
    }
    let mt = inverse_factor_transposed(&a, n);
    if expired() {
        return Ok(None);
    }
    inverse_from_factor(&mt, n, &mut a);
    for i in 0..n {
        for j in 0..i {
            a[j * n + i] = a[i * n + j];
        }
    }
    Ok(Some(a))
}
