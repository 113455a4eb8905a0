//! Restarted GMRES with incomplete-LU preconditioning: ILU(0) on the
//! original pattern, and threshold ILUT with capped fill for the harder
//! coupled systems.

use super::{norm2, spmv_acc, CsrMatrix};
use crate::error::{Error, Result};

/// Approximate inverse applied as `z = P^{-1} r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Incomplete LU factorization on the sparsity pattern of `A`.
pub struct Ilu0 {
    rows: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.rows;
        let mut values = a.values.clone();
        let row_offsets = a.row_offsets.clone();
        let col_indices = a.col_indices.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for r in 0..n {
            for k in row_offsets[r]..row_offsets[r + 1] {
                if col_indices[k] == r {
                    diag_pos[r] = k;
                }
            }
            if diag_pos[r] == usize::MAX {
                return Err(Error::SingularFactorization { col: r });
            }
        }
        // scatter buffer: column -> position in the current row
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_offsets[i]..row_offsets[i + 1] {
                pos[col_indices[k]] = k;
            }
            for kk in row_offsets[i]..row_offsets[i + 1] {
                let k = col_indices[kk];
                if k >= i {
                    break;
                }
                let dk = values[diag_pos[k]];
                if dk == 0.0 {
                    return Err(Error::SingularFactorization { col: k });
                }
                let lik = values[kk] / dk;
                values[kk] = lik;
                for kj in diag_pos[k] + 1..row_offsets[k + 1] {
                    let j = col_indices[kj];
                    let p = pos[j];
                    if p != usize::MAX {
                        values[p] -= lik * values[kj];
                    }
                }
            }
            if values[diag_pos[i]] == 0.0 {
                return Err(Error::SingularFactorization { col: i });
            }
            for k in row_offsets[i]..row_offsets[i + 1] {
                pos[col_indices[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 { rows: n, row_offsets, col_indices, values, diag_pos })
    }

    /// `z = (LU)^{-1} r`.
    fn apply_ilu(&self, r: &[f64], z: &mut [f64]) {
        let n = self.rows;
        z.copy_from_slice(r);
        for i in 0..n {
            let mut acc = z[i];
            for k in self.row_offsets[i]..self.diag_pos[i] {
                acc -= self.values[k] * z[self.col_indices[k]];
            }
            z[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for k in self.diag_pos[i] + 1..self.row_offsets[i + 1] {
                acc -= self.values[k] * z[self.col_indices[k]];
            }
            z[i] = acc / self.values[self.diag_pos[i]];
        }
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.apply_ilu(r, z);
    }
}

/// Threshold incomplete LU with capped fill per row (Saad's ILUT).
///
/// `L` has unit diagonal (stored without it), `U` carries the diagonal
/// separately; both triangles are stored in flat compressed rows.
pub struct Ilut {
    l_offsets: Vec<usize>,
    l_cols: Vec<u32>,
    l_vals: Vec<f32>,
    u_offsets: Vec<usize>,
    u_cols: Vec<u32>,
    u_vals: Vec<f32>,
    diag: Vec<f64>,
    // full-precision U rows are kept for the factorization sweep only
    u_cols64: Vec<usize>,
    u_vals64: Vec<f64>,
}

impl Ilut {
    /// Drops entries below `droptol` times the 2-norm of the current row and
    /// keeps at most `fill` extra entries in each of the L and U parts.
    pub fn new(a: &CsrMatrix, droptol: f64, fill: usize) -> Result<Self> {
        let n = a.rows;
        let mut out = Ilut {
            l_offsets: vec![0],
            l_cols: Vec::new(),
            l_vals: Vec::new(),
            u_offsets: vec![0],
            u_cols: Vec::new(),
            u_vals: Vec::new(),
            diag: vec![0.0; n],
            u_cols64: Vec::new(),
            u_vals64: Vec::new(),
        };
        // dense work row with an explicit nonzero list so the reset cost is
        // proportional to the touched entries only
        let mut w = vec![0.0f64; n];
        let mut touched = vec![false; n];
        let mut nonzeros: Vec<usize> = Vec::new();
        for i in 0..n {
            let lo = a.row_offsets[i];
            let hi = a.row_offsets[i + 1];
            let mut norm = 0.0;
            for k in lo..hi {
                let j = a.col_indices[k];
                w[j] += a.values[k];
                if !touched[j] {
                    touched[j] = true;
                    nonzeros.push(j);
                }
                norm += a.values[k] * a.values[k];
            }
            let norm = norm.sqrt().max(f64::MIN_POSITIVE);
            let tau = droptol * norm;
            // eliminate against previous rows in ascending column order
            let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = nonzeros
                .iter()
                .filter(|&&j| j < i)
                .map(|&j| std::cmp::Reverse(j))
                .collect();
            let mut seen = vec![];
            while let Some(std::cmp::Reverse(k)) = heap.pop() {
                if seen.last() == Some(&k) {
                    continue;
                }
                seen.push(k);
                let factor = w[k] / out.diag[k];
                if factor.abs() < tau {
                    w[k] = 0.0;
                    continue;
                }
                w[k] = factor;
                for idx in out.u_offsets[k]..out.u_offsets[k + 1] {
                    let j = out.u_cols64[idx];
                    w[j] -= factor * out.u_vals64[idx];
                    if !touched[j] {
                        touched[j] = true;
                        nonzeros.push(j);
                        if j < i {
                            heap.push(std::cmp::Reverse(j));
                        }
                    }
                }
            }
            // split, drop, and cap
            let mut l_row: Vec<(usize, f64)> = Vec::new();
            let mut u_row: Vec<(usize, f64)> = Vec::new();
            let mut d = 0.0;
            for &j in &nonzeros {
                let v = w[j];
                if j == i {
                    d = v;
                } else if v.abs() >= tau {
                    if j < i {
                        l_row.push((j, v));
                    } else {
                        u_row.push((j, v));
                    }
                }
            }
            let cap = |row: &mut Vec<(usize, f64)>, keep: usize| {
                if row.len() > keep {
                    row.sort_unstable_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
                    row.truncate(keep);
                }
                row.sort_unstable_by_key(|e| e.0);
            };
            cap(&mut l_row, fill);
            cap(&mut u_row, fill);
            if d == 0.0 {
                // zero pivot: substitute a small diagonal instead of failing,
                // the factorization only has to precondition
                d = tau.max(f64::MIN_POSITIVE);
            }
            out.diag[i] = d;
            for (j, v) in l_row {
                out.l_cols.push(j as u32);
                out.l_vals.push(v as f32);
            }
            out.l_offsets.push(out.l_cols.len());
            for (j, v) in u_row {
                out.u_cols.push(j as u32);
                out.u_vals.push(v as f32);
                out.u_cols64.push(j);
                out.u_vals64.push(v);
            }
            out.u_offsets.push(out.u_cols.len());
            for &j in &nonzeros {
                w[j] = 0.0;
                touched[j] = false;
            }
            nonzeros.clear();
        }
        out.u_cols64 = Vec::new();
        out.u_vals64 = Vec::new();
        Ok(out)
    }
}

impl Ilut {
    /// Stored entries in both triangles, diagonal included.
    pub fn nnz(&self) -> usize {
        self.l_vals.len() + self.u_vals.len() + self.diag.len()
    }
}

impl Preconditioner for Ilut {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.diag.len();
        z.copy_from_slice(r);
        for i in 0..n {
            let mut acc = z[i];
            for k in self.l_offsets[i]..self.l_offsets[i + 1] {
                acc -= self.l_vals[k] as f64 * z[self.l_cols[k] as usize];
            }
            z[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for k in self.u_offsets[i]..self.u_offsets[i + 1] {
                acc -= self.u_vals[k] as f64 * z[self.u_cols[k] as usize];
            }
            z[i] = acc / self.diag[i];
        }
    }
}

/// Right-preconditioned restarted GMRES.
///
/// Returns `(x, iterations, final relative residual)`; the residual is the
/// true residual of the unpreconditioned system.
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    pre: &impl Preconditioner,
    rtol: f64,
    restart: usize,
    max_iters: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = a.rows;
    let norm_b = norm2(b);
    if norm_b == 0.0 {
        return Ok((vec![0.0; n], 0, 0.0));
    }
    let mut x = vec![0.0; n];
    let mut total_iters = 0;
    let m = restart.max(1);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![0.0f64; m]; m + 1];
    let mut z = vec![0.0; n];

    loop {
        // residual r = b - A x
        let mut r = b.to_vec();
        spmv_acc(a, &x, -1.0, &mut r);
        let beta = norm2(&r);
        if beta / norm_b <= rtol {
            return Ok((x, total_iters, beta / norm_b));
        }
        if total_iters >= max_iters {
            return Err(Error::IterativeNonConvergence {
                iterations: total_iters,
                residual: beta / norm_b,
            });
        }
        basis.clear();
        for v in &mut r {
            *v /= beta;
        }
        basis.push(r);
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut k_done = 0;

        for k in 0..m {
            pre.apply(&basis[k], &mut z);
            let mut w = vec![0.0; n];
            spmv_acc(a, &z, 1.0, &mut w);
            // modified Gram-Schmidt
            for i in 0..=k {
                let hik: f64 = w.iter().zip(&basis[i]).map(|(p, q)| p * q).sum();
                hess[i][k] = hik;
                for (wv, bv) in w.iter_mut().zip(&basis[i]) {
                    *wv -= hik * bv;
                }
            }
            let hk1 = norm2(&w);
            hess[k + 1][k] = hk1;
            // apply accumulated Givens rotations to the new column
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = (hess[k][k] * hess[k][k] + hk1 * hk1).sqrt();
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hess[k][k] / denom;
                sn[k] = hess[k + 1][k] / denom;
            }
            hess[k][k] = cs[k] * hess[k][k] + sn[k] * hess[k + 1][k];
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total_iters += 1;
            k_done = k + 1;
            let rel = g[k + 1].abs() / norm_b;
            if rel <= rtol || hk1 == 0.0 || total_iters >= max_iters {
                break;
            }
            for v in &mut w {
                *v /= hk1;
            }
            basis.push(w);
        }

        // back substitution for the small least squares problem
        let mut y = vec![0.0f64; k_done];
        for i in (0..k_done).rev() {
            let mut s = g[i];
            for j in i + 1..k_done {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        // x += M^{-1} (V y)
        let mut vy = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (acc, bv) in vy.iter_mut().zip(&basis[j]) {
                *acc += yj * bv;
            }
        }
        pre.apply(&vy, &mut z);
        for (xv, zv) in x.iter_mut().zip(&z) {
            *xv += zv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spmv;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn laplacian_2d(n: usize) -> CsrMatrix {
        let idx = |i: usize, j: usize| (j % n) * n + (i % n);
        let mut trips = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let r = idx(i, j);
                trips.push((r, r, 4.1));
                trips.push((r, idx(i + 1, j), -1.0));
                trips.push((r, idx(i + n - 1, j), -1.0));
                trips.push((r, idx(i, j + 1), -1.0));
                trips.push((r, idx(i, j + n - 1), -1.0));
            }
        }
        CsrMatrix::from_triplets(n * n, n * n, &trips)
    }

    #[test]
    fn gmres_solves_shifted_laplacian() {
        let a = laplacian_2d(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..a.rows).map(|_| rng.gen::<f64>() - 0.5).collect();
        let b = spmv(&a, &xs).unwrap();
        let pre = Ilu0::new(&a).unwrap();
        let (x, its, rel) = gmres(&a, &b, &pre, 1e-12, 60, 2000).unwrap();
        assert!(rel <= 1e-12, "rel={rel:e} after {its} iterations");
        let err: f64 = x.iter().zip(&xs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "err={err:e}");
    }

    #[test]
    fn gmres_zero_rhs() {
        let a = laplacian_2d(4);
        let pre = Ilu0::new(&a).unwrap();
        let (x, its, _) = gmres(&a, &vec![0.0; a.rows], &pre, 1e-12, 30, 100).unwrap();
        assert_eq!(its, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gmres_nonconvergence_reports_iterations() {
        let a = laplacian_2d(8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b: Vec<f64> = (0..a.rows).map(|_| rng.gen::<f64>()).collect();
        let pre = Ilu0::new(&a).unwrap();
        match gmres(&a, &b, &pre, 1e-16, 2, 4) {
            Err(Error::IterativeNonConvergence { iterations, .. }) => assert!(iterations >= 4),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
