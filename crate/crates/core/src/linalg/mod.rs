//! Sparse matrix storage and linear solvers.
//!
//! Compressed sparse row matrices back all assembled operators. Two solver
//! routes are provided: a direct sparse LU with partial pivoting (default for
//! small systems) and restarted GMRES with an ILU(0) preconditioner for the
//! large per-step Newton systems.

mod gmres;
mod lu;

pub use gmres::{gmres, Ilu0, Ilut, Preconditioner};

pub use lu::SparseLu;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// Outcome of a [`solve`] call.
#[derive(Debug, Clone)]
pub struct LinearSolveReport {
    pub method: SolveMethod,
    pub iterations: usize,
    pub final_rel_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Iterative,
}

/// Linear solver selection for the Newton systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Direct,
    Gmres { restart: usize, max_iters: usize, rtol: f64 },
    /// Direct below `DIRECT_SIZE_LIMIT` unknowns, GMRES above.
    Auto,
}

/// Crossover size for [`SolverKind::Auto`].  Measured on the coupled
/// five-field Jacobians, cached-ILUT GMRES overtakes the sparse LU well
/// below this size; direct solves are kept only for small systems where
/// their zero-tolerance semantics make Newton behavior easiest to audit.
pub const DIRECT_SIZE_LIMIT: usize = 400;

impl SolverKind {
    pub fn resolve(self, n: usize) -> SolverKind {
        match self {
            SolverKind::Auto => {
                if n <= DIRECT_SIZE_LIMIT {
                    SolverKind::Direct
                } else {
                    SolverKind::Gmres { restart: 120, max_iters: 4000, rtol: 1e-12 }
                }
            }
            other => other,
        }
    }
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a CSR matrix from unordered (row, col, value) triplets,
    /// summing duplicates. Deterministic for any input order.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; rows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for r in 0..rows {
            counts[r + 1] += counts[r];
        }
        let mut entry: Vec<(usize, f64)> = vec![(0, 0.0); triplets.len()];
        let mut fill = counts.clone();
        for &(r, c, v) in triplets {
            entry[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for r in 0..rows {
            let seg = &mut entry[counts[r]..counts[r + 1]];
            seg.sort_unstable_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < seg.len() {
                let c = seg[k].0;
                let mut v = 0.0;
                while k < seg.len() && seg[k].0 == c {
                    v += seg[k].1;
                    k += 1;
                }
                col_indices.push(c);
                values.push(v);
            }
            row_offsets[r + 1] = col_indices.len();
        }
        CsrMatrix { rows, cols, row_offsets, col_indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut trips = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                trips.push((self.col_indices[k], r, self.values[k]));
            }
        }
        CsrMatrix::from_triplets(self.cols, self.rows, &trips)
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for r in 0..self.rows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                d[r][self.col_indices[k]] += self.values[k];
            }
        }
        d
    }
}

/// Sparse matrix-vector product `y = A x`.
pub fn spmv(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.cols {
        return Err(Error::DimensionMismatch(format!(
            "spmv: matrix is {}x{}, vector has length {}",
            a.rows,
            a.cols,
            x.len()
        )));
    }
    let mut y = vec![0.0; a.rows];
    for r in 0..a.rows {
        let mut acc = 0.0;
        for k in a.row_offsets[r]..a.row_offsets[r + 1] {
            acc += a.values[k] * x[a.col_indices[k]];
        }
        y[r] = acc;
    }
    Ok(y)
}

/// `y += s * A x` without allocating.
pub fn spmv_acc(a: &CsrMatrix, x: &[f64], s: f64, y: &mut [f64]) {
    debug_assert_eq!(x.len(), a.cols);
    debug_assert_eq!(y.len(), a.rows);
    for r in 0..a.rows {
        let mut acc = 0.0;
        for k in a.row_offsets[r]..a.row_offsets[r + 1] {
            acc += a.values[k] * x[a.col_indices[k]];
        }
        y[r] += s * acc;
    }
}

/// Assembles a block matrix from an `nb x nb` grid of optional blocks.
///
/// All blocks in a row must have equal row counts, all blocks in a column
/// equal column counts; `None` means a zero block.
pub fn block_compose(blocks: &[Vec<Option<&CsrMatrix>>]) -> Result<CsrMatrix> {
    let nb = blocks.len();
    if nb == 0 || blocks.iter().any(|r| r.len() != blocks[0].len()) {
        return Err(Error::DimensionMismatch("block grid must be rectangular".into()));
    }
    let mb = blocks[0].len();
    let mut row_sizes = vec![None::<usize>; nb];
    let mut col_sizes = vec![None::<usize>; mb];
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            if let Some(b) = blk {
                match row_sizes[bi] {
                    None => row_sizes[bi] = Some(b.rows),
                    Some(r) if r != b.rows => {
                        return Err(Error::DimensionMismatch(format!(
                            "block row {bi}: {r} vs {}",
                            b.rows
                        )))
                    }
                    _ => {}
                }
                match col_sizes[bj] {
                    None => col_sizes[bj] = Some(b.cols),
                    Some(c) if c != b.cols => {
                        return Err(Error::DimensionMismatch(format!(
                            "block col {bj}: {c} vs {}",
                            b.cols
                        )))
                    }
                    _ => {}
                }
            }
        }
    }
    let row_sizes: Vec<usize> = row_sizes
        .into_iter()
        .map(|s| s.ok_or_else(|| Error::DimensionMismatch("fully empty block row".into())))
        .collect::<Result<_>>()?;
    let col_sizes: Vec<usize> = col_sizes
        .into_iter()
        .map(|s| s.ok_or_else(|| Error::DimensionMismatch("fully empty block col".into())))
        .collect::<Result<_>>()?;
    let mut row_start = vec![0usize; nb + 1];
    for i in 0..nb {
        row_start[i + 1] = row_start[i] + row_sizes[i];
    }
    let mut col_start = vec![0usize; mb + 1];
    for j in 0..mb {
        col_start[j + 1] = col_start[j] + col_sizes[j];
    }
    let rows = row_start[nb];
    let cols = col_start[mb];
    let nnz: usize = blocks
        .iter()
        .flatten()
        .map(|b| b.map_or(0, |m| m.nnz()))
        .sum();
    let mut row_offsets = Vec::with_capacity(rows + 1);
    let mut col_indices = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    row_offsets.push(0);
    for bi in 0..nb {
        for r in 0..row_sizes[bi] {
            for bj in 0..mb {
                if let Some(b) = blocks[bi][bj] {
                    let off = col_start[bj];
                    for k in b.row_offsets[r]..b.row_offsets[r + 1] {
                        col_indices.push(off + b.col_indices[k]);
                        values.push(b.values[k]);
                    }
                }
            }
            row_offsets.push(col_indices.len());
        }
    }
    Ok(CsrMatrix { rows, cols, row_offsets, col_indices, values })
}

/// Reusable iterative-solver state: incomplete factors kept across solves
/// of slowly varying matrices, rebuilt when convergence degrades.
#[derive(Default)]
pub struct IterativeCache {
    ilut: Option<Ilut>,
    stale: bool,
    /// Number of factorizations performed through this cache.
    pub rebuilds: usize,
}

impl IterativeCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops the cached factors so the next solve refactorizes.
    pub fn invalidate(&mut self) {
        self.ilut = None;
        self.stale = false;
    }
}

/// GMRES iteration count above which cached factors are considered stale.
const CACHE_STALE_ITERS: usize = 90;
const ILUT_DROPTOL: f64 = 1e-4;
const ILUT_FILL: usize = 40;

/// Solves `A x = b` to the requested relative residual.
///
/// The direct route treats `tol` as a pass-through and checks it a
/// posteriori; the iterative route targets `tol` directly.
pub fn solve(a: &CsrMatrix, b: &[f64], tol: f64, kind: SolverKind) -> Result<(Vec<f64>, LinearSolveReport)> {
    solve_cached(a, b, tol, kind, None)
}

/// [`solve`] with an optional preconditioner cache for sequences of solves
/// with slowly varying matrices (Newton chains, successive time steps).
pub fn solve_cached(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    kind: SolverKind,
    cache: Option<&mut IterativeCache>,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    if a.rows != a.cols || b.len() != a.rows {
        return Err(Error::DimensionMismatch(format!(
            "solve: matrix {}x{}, rhs length {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let norm_b = norm2(b);
    match kind.resolve(a.rows) {
        SolverKind::Direct => {
            let lu = SparseLu::factorize(a)?;
            let x = lu.solve(b);
            let res = residual_norm(a, &x, b);
            let rel = if norm_b > 0.0 { res / norm_b } else { res };
            Ok((
                x,
                LinearSolveReport {
                    method: SolveMethod::Direct,
                    iterations: 0,
                    final_rel_residual: rel,
                },
            ))
        }
        SolverKind::Gmres { restart, max_iters, rtol } => {
            // row equilibration: coupled multi-field systems mix blocks of
            // very different magnitude, which ruins the ILU(0) factors
            let mut scaled = a.clone();
            let mut bs = b.to_vec();
            let mut row_scale = vec![1.0; a.rows];
            for row in 0..a.rows {
                let lo = a.row_offsets[row];
                let hi = a.row_offsets[row + 1];
                let m = a.values[lo..hi].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                if m > 0.0 {
                    row_scale[row] = 1.0 / m;
                }
                for v in &mut scaled.values[lo..hi] {
                    *v *= row_scale[row];
                }
                bs[row] *= row_scale[row];
            }
            let target = tol.max(rtol);
            let mut scratch = IterativeCache::new();
            let cache = match cache {
                Some(c) => c,
                None => &mut scratch,
            };
            let mut fresh = false;
            if cache.stale || cache.ilut.is_none() {
                cache.ilut = Some(Ilut::new(&scaled, ILUT_DROPTOL, ILUT_FILL)?);
                cache.stale = false;
                cache.rebuilds += 1;
                fresh = true;
            }
            let pre = cache.ilut.as_ref().expect("just ensured");
            let attempt = gmres(&scaled, &bs, pre, target, restart, max_iters);
            let (x, its, rel) = match attempt {
                Ok(ok) => ok,
                Err(Error::IterativeNonConvergence { .. }) if !fresh => {
                    // stale factors can fail outright; refactorize and retry
                    cache.ilut = Some(Ilut::new(&scaled, ILUT_DROPTOL, ILUT_FILL)?);
                    cache.rebuilds += 1;
                    let pre = cache.ilut.as_ref().expect("just rebuilt");
                    gmres(&scaled, &bs, pre, target, restart, max_iters)?
                }
                Err(e) => return Err(e),
            };
            if its > CACHE_STALE_ITERS {
                cache.stale = true;
            }
            Ok((
                x,
                LinearSolveReport {
                    method: SolveMethod::Iterative,
                    iterations: its,
                    final_rel_residual: rel,
                },
            ))
        }
        SolverKind::Auto => unreachable!(),
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual_norm(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = spmv(a, x).expect("conforming");
    norm2(&ax.iter().zip(b).map(|(y, b)| y - b).collect::<Vec<_>>())
}
