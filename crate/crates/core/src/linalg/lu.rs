//! Sparse direct LU with partial pivoting.
//!
//! Left-looking Gilbert-Peierls factorization over a reverse Cuthill-McKee
//! preorder of the symmetrized pattern. Both the ordering and the pivot tie
//! handling are deterministic, so identical inputs give bitwise-identical
//! factors.

use super::CsrMatrix;
use crate::error::{Error, Result};

/// LU factors of `A(p, p)` with row partial pivoting.
pub struct SparseLu {
    n: usize,
    /// RCM preorder: old index of the k-th permuted row/column.
    order: Vec<usize>,
    /// Pivot permutation: `pinv[i] = k` if permuted row `i` is the pivot of column `k`.
    pinv: Vec<usize>,
    l_colptr: Vec<usize>,
    l_rows: Vec<usize>,
    l_vals: Vec<f64>,
    u_colptr: Vec<usize>,
    u_rows: Vec<usize>,
    u_vals: Vec<f64>,
}

/// Reverse Cuthill-McKee order of the symmetrized sparsity pattern.
fn rcm_order(a: &CsrMatrix) -> Vec<usize> {
    let n = a.rows;
    // symmetric adjacency (without diagonal)
    let mut adj = vec![Vec::new(); n];
    for r in 0..n {
        for k in a.row_offsets[r]..a.row_offsets[r + 1] {
            let c = a.col_indices[k];
            if c != r {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    loop {
        // start from the unvisited vertex of minimal degree (lowest index wins ties)
        let start = match (0..n).filter(|&v| !visited[v]).min_by_key(|&v| (degree[v], v)) {
            Some(s) => s,
            None => break,
        };
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_unstable_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// CSC copy of `A(order, order)`.
struct Csc {
    colptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
}

fn permuted_csc(a: &CsrMatrix, order: &[usize]) -> Csc {
    let n = a.rows;
    let mut inv = vec![0usize; n];
    for (k, &o) in order.iter().enumerate() {
        inv[o] = k;
    }
    let mut counts = vec![0usize; n + 1];
    for r in 0..n {
        for k in a.row_offsets[r]..a.row_offsets[r + 1] {
            counts[inv[a.col_indices[k]] + 1] += 1;
        }
    }
    for c in 0..n {
        counts[c + 1] += counts[c];
    }
    let mut fill = counts.clone();
    let nnz = a.nnz();
    let mut rows = vec![0usize; nnz];
    let mut vals = vec![0.0; nnz];
    for r in 0..n {
        let pr = inv[r];
        for k in a.row_offsets[r]..a.row_offsets[r + 1] {
            let pc = inv[a.col_indices[k]];
            rows[fill[pc]] = pr;
            vals[fill[pc]] = a.values[k];
            fill[pc] += 1;
        }
    }
    Csc { colptr: counts, rows, vals }
}

const UNPIVOTED: usize = usize::MAX;

impl SparseLu {
    pub fn factorize(a: &CsrMatrix) -> Result<Self> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let order = rcm_order(a);
        let ap = permuted_csc(a, &order);

        let mut l_colptr = vec![0usize];
        let mut l_rows: Vec<usize> = Vec::new();
        let mut l_vals: Vec<f64> = Vec::new();
        let mut u_colptr = vec![0usize];
        let mut u_rows: Vec<usize> = Vec::new();
        let mut u_vals: Vec<f64> = Vec::new();

        let mut pinv = vec![UNPIVOTED; n];
        let mut x = vec![0.0; n];
        // DFS workspaces
        let mut stack = Vec::with_capacity(n);
        let mut edge_pos = vec![0usize; n];
        let mut pattern: Vec<usize> = Vec::with_capacity(n);
        let mut mark = vec![false; n];

        for col in 0..n {
            // reach: rows touched by solving L x = A(:,col), topological order
            pattern.clear();
            for &r in &ap.rows[ap.colptr[col]..ap.colptr[col + 1]] {
                if mark[r] {
                    continue;
                }
                // DFS from r through pivotal columns of L
                stack.push(r);
                edge_pos[r] = if pinv[r] != UNPIVOTED {
                    l_colptr[pinv[r]] + 1 // skip unit diagonal entry
                } else {
                    usize::MAX
                };
                mark[r] = true;
                while let Some(&v) = stack.last() {
                    let mut descended = false;
                    if pinv[v] != UNPIVOTED {
                        let lcol = pinv[v];
                        while edge_pos[v] < l_colptr[lcol + 1] {
                            let child = l_rows[edge_pos[v]];
                            edge_pos[v] += 1;
                            if !mark[child] {
                                mark[child] = true;
                                stack.push(child);
                                edge_pos[child] = if pinv[child] != UNPIVOTED {
                                    l_colptr[pinv[child]] + 1
                                } else {
                                    usize::MAX
                                };
                                descended = true;
                                break;
                            }
                        }
                    }
                    if !descended {
                        stack.pop();
                        pattern.push(v);
                    }
                }
            }
            pattern.reverse(); // topological order

            // numeric sparse triangular solve
            for &r in &pattern {
                x[r] = 0.0;
            }
            for k in ap.colptr[col]..ap.colptr[col + 1] {
                x[ap.rows[k]] = ap.vals[k];
            }
            for &r in &pattern {
                let lcol = pinv[r];
                if lcol == UNPIVOTED {
                    continue;
                }
                let xr = x[r];
                for k in l_colptr[lcol] + 1..l_colptr[lcol + 1] {
                    x[l_rows[k]] -= l_vals[k] * xr;
                }
            }

            // partial pivot among non-pivotal rows (lowest permuted index wins ties)
            let mut piv = UNPIVOTED;
            let mut piv_abs = -1.0;
            for &r in &pattern {
                if pinv[r] == UNPIVOTED {
                    let a = x[r].abs();
                    if a > piv_abs || (a == piv_abs && piv != UNPIVOTED && r < piv) {
                        piv_abs = a;
                        piv = r;
                    }
                }
            }
            if piv == UNPIVOTED || piv_abs == 0.0 {
                return Err(Error::SingularFactorization { col });
            }
            let piv_val = x[piv];

            // U column: previously pivoted rows, stored by pivot index
            let mut ucol: Vec<(usize, f64)> = pattern
                .iter()
                .filter(|&&r| pinv[r] != UNPIVOTED)
                .map(|&r| (pinv[r], x[r]))
                .collect();
            ucol.sort_unstable_by_key(|&(k, _)| k);
            for (k, v) in ucol {
                u_rows.push(k);
                u_vals.push(v);
            }
            u_rows.push(col);
            u_vals.push(piv_val);
            u_colptr.push(u_rows.len());

            // L column: unit diagonal first, then multipliers
            pinv[piv] = col;
            l_rows.push(piv);
            l_vals.push(1.0);
            let mut lcol: Vec<(usize, f64)> = pattern
                .iter()
                .filter(|&&r| pinv[r] == UNPIVOTED)
                .map(|&r| (r, x[r] / piv_val))
                .collect();
            lcol.sort_unstable_by_key(|&(r, _)| r);
            for (r, v) in lcol {
                l_rows.push(r);
                l_vals.push(v);
            }
            l_colptr.push(l_rows.len());

            for &r in &pattern {
                mark[r] = false;
            }
        }

        Ok(SparseLu {
            n,
            order,
            pinv,
            l_colptr,
            l_rows,
            l_vals,
            u_colptr,
            u_rows,
            u_vals,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        // permute rhs into the RCM order
        let mut bp = vec![0.0; n];
        for k in 0..n {
            bp[k] = b[self.order[k]];
        }
        // forward solve L y = P b: L is stored over permuted row indices,
        // column k has its pivot row first with unit value
        let mut y = bp;
        for k in 0..n {
            let pivot_row = self.l_rows[self.l_colptr[k]];
            let yk = y[pivot_row];
            for p in self.l_colptr[k] + 1..self.l_colptr[k + 1] {
                y[self.l_rows[p]] -= self.l_vals[p] * yk;
            }
        }
        // gather pivoted entries: z[k] = y[row pivoting to k]
        let mut z = vec![0.0; n];
        for r in 0..n {
            z[self.pinv[r]] = y[r];
        }
        // back solve U x = z (U upper triangular in pivot indices)
        for k in (0..n).rev() {
            let last = self.u_colptr[k + 1] - 1;
            debug_assert_eq!(self.u_rows[last], k);
            let xk = z[k] / self.u_vals[last];
            z[k] = xk;
            for p in self.u_colptr[k]..last {
                z[self.u_rows[p]] -= self.u_vals[p] * xk;
            }
        }
        // undo the RCM order
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[self.order[k]] = z[k];
        }
        x
    }
}
