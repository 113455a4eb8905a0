//! Uniform periodic triangulation of the unit square identified with the 2-torus.
//!
//! The unit square is divided into `n x n` cells, each split along the main
//! diagonal (lower-left to upper-right), giving `2n^2` triangles over `n^2`
//! nodes. Node `(i, j)` sits at `(i*h, j*h)` with `h = 1/n`; indices wrap
//! periodically, so the mesh has no boundary.

use crate::error::{Error, Result};

/// Structured triangulation of the unit torus.
#[derive(Debug, Clone)]
pub struct PeriodicMesh {
    /// Cells per side.
    pub n: usize,
    /// Mesh size, `1/n`.
    pub h: f64,
    /// Node coordinates in `[0,1)^2`, lattice order (`j`-major rows).
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise node-index triples.
    pub triangles: Vec<[usize; 3]>,
}

/// Coarse-to-fine transfer for one uniform refinement step.
///
/// Every fine node either coincides with a coarse node or is the midpoint of
/// an edge of the coarse triangulation, so injecting a coarse P1 function via
/// this map reproduces it exactly on the fine mesh.
#[derive(Debug, Clone)]
pub struct Prolongation {
    pub coarse_n: usize,
    pub fine_n: usize,
    /// For each fine node: the coincident coarse node, or the two coarse
    /// nodes whose midpoint it is.
    pub map: Vec<NodeParent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeParent {
    Coarse(usize),
    Midpoint(usize, usize),
}

impl PeriodicMesh {
    /// Lattice-to-linear node index with periodic wrap.
    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        (j % self.n) * self.n + (i % self.n)
    }

    pub fn num_nodes(&self) -> usize {
        self.n * self.n
    }

    pub fn num_triangles(&self) -> usize {
        2 * self.n * self.n
    }
}

/// Builds the uniform periodic mesh with `n` cells per side.
///
/// Cell `(i, j)` spans `[ih,(i+1)h] x [jh,(j+1)h]` and is split along the
/// diagonal from `(ih, jh)` to `((i+1)h, (j+1)h)`.
pub fn build_uniform(n: usize) -> Result<PeriodicMesh> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "mesh needs at least 2 cells per side, got {n}"
        )));
    }
    let h = 1.0 / n as f64;
    let mut nodes = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let idx = |i: usize, j: usize| (j % n) * n + (i % n);
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i, j + 1);
            let d = idx(i + 1, j + 1);
            // both CCW, sharing the a-d diagonal
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    Ok(PeriodicMesh { n, h, nodes, triangles })
}

/// Uniformly refines the mesh, returning the fine mesh and the nested-mesh
/// prolongation map.
pub fn refine(mesh: &PeriodicMesh) -> Result<(PeriodicMesh, Prolongation)> {
    let nc = mesh.n;
    let nf = 2 * nc;
    let fine = build_uniform(nf)?;
    let cidx = |i: usize, j: usize| (j % nc) * nc + (i % nc);
    let mut map = Vec::with_capacity(nf * nf);
    for j in 0..nf {
        for i in 0..nf {
            let parent = match (i % 2, j % 2) {
                (0, 0) => NodeParent::Coarse(cidx(i / 2, j / 2)),
                (1, 0) => NodeParent::Midpoint(cidx(i / 2, j / 2), cidx(i / 2 + 1, j / 2)),
                (0, 1) => NodeParent::Midpoint(cidx(i / 2, j / 2), cidx(i / 2, j / 2 + 1)),
                // cell centre lies on the coarse diagonal
                _ => NodeParent::Midpoint(cidx(i / 2, j / 2), cidx(i / 2 + 1, j / 2 + 1)),
            };
            map.push(parent);
        }
    }
    Ok((fine, Prolongation { coarse_n: nc, fine_n: nf, map }))
}

impl Prolongation {
    /// Injects coarse nodal values into the fine space.
    pub fn apply(&self, coarse: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coarse.len(), self.coarse_n * self.coarse_n);
        self.map
            .iter()
            .map(|p| match *p {
                NodeParent::Coarse(a) => coarse[a],
                NodeParent::Midpoint(a, b) => 0.5 * (coarse[a] + coarse[b]),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Signed area of triangle `k` from its unwrapped cell geometry.
    ///
    /// Stored coordinates wrap around the torus, so the true shape is
    /// recovered from the cell the triangle was cut from; the stored node
    /// indices are checked against that cell along the way.
    fn triangle_area(m: &PeriodicMesh, k: usize) -> f64 {
        let (ci, cj) = ((k / 2) % m.n, (k / 2) / m.n);
        let h = m.h;
        let corner = |di: usize, dj: usize| {
            [(ci + di) as f64 * h, (cj + dj) as f64 * h]
        };
        let expect = |di: usize, dj: usize| ((cj + dj) % m.n) * m.n + (ci + di) % m.n;
        let t = m.triangles[k];
        let (p0, p1, p2) = if k % 2 == 0 {
            assert_eq!(t, [expect(0, 0), expect(1, 0), expect(1, 1)]);
            (corner(0, 0), corner(1, 0), corner(1, 1))
        } else {
            assert_eq!(t, [expect(0, 0), expect(1, 1), expect(0, 1)]);
            (corner(0, 0), corner(1, 1), corner(0, 1))
        };
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    #[test]
    fn n2_counts() {
        let m = build_uniform(2).unwrap();
        assert_eq!(m.num_nodes(), 4);
        assert_eq!(m.num_triangles(), 8);
        let area: f64 = (0..m.num_triangles()).map(|k| triangle_area(&m, k)).sum();
        assert!((area - 1.0).abs() < 1e-14);
    }

    #[test]
    fn n4_counts() {
        let m = build_uniform(4).unwrap();
        assert_eq!(m.num_nodes(), 16);
        assert_eq!(m.num_triangles(), 32);
        assert_eq!(m.h, 0.25);
    }

    #[test]
    fn periodic_wrap() {
        let m = build_uniform(3).unwrap();
        assert_eq!(m.node_index(3, 1), m.node_index(0, 1));
    }

    #[test]
    fn rejects_small_n() {
        assert!(build_uniform(1).is_err());
        assert!(build_uniform(0).is_err());
    }

    #[test]
    fn all_triangles_ccw_with_equal_area() {
        for n in [2, 3, 5, 8] {
            let m = build_uniform(n).unwrap();
            let expect = m.h * m.h / 2.0;
            let mut total = 0.0;
            for k in 0..m.num_triangles() {
                let a = triangle_area(&m, k);
                assert!(a > 0.0, "clockwise triangle on n={n}");
                assert!((a - expect).abs() < 1e-15);
                total += a;
            }
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn every_edge_shared_by_two_triangles() {
        use std::collections::HashMap;
        for n in [2, 4, 6] {
            let m = build_uniform(n).unwrap();
            let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
            for t in &m.triangles {
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    let key = (a.min(b), a.max(b));
                    *edges.entry(key).or_insert(0) += 1;
                }
            }
            // the n=2 torus has doubled edges (two nodes joined by two distinct
            // geometric edges); count parity still must be even everywhere
            for (&(a, b), &count) in &edges {
                assert!(count % 2 == 0, "edge ({a},{b}) shared {count} times on n={n}");
            }
            if n > 2 {
                assert!(edges.values().all(|&c| c == 2));
            }
        }
    }

    #[test]
    fn refine_doubles() {
        let m = build_uniform(2).unwrap();
        let (f, p) = refine(&m).unwrap();
        assert_eq!(f.n, 4);
        assert_eq!(f.num_nodes(), 16);
        assert_eq!(p.map.len(), 16);
    }

    #[test]
    fn prolong_constant() {
        let m = build_uniform(3).unwrap();
        let (_, p) = refine(&m).unwrap();
        let fine = p.apply(&vec![1.0; 9]);
        assert!(fine.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn prolong_matches_nodal_evaluation_of_p1_function() {
        // a P1 function given by arbitrary coarse nodal values must be
        // reproduced at every fine node by direct barycentric evaluation
        let m = build_uniform(4).unwrap();
        let coarse: Vec<f64> = (0..16).map(|k| (k as f64 * 0.37).sin()).collect();
        let (fine_mesh, p) = refine(&m).unwrap();
        let fine = p.apply(&coarse);
        // independent oracle: evaluate the coarse P1 interpolant at each fine
        // node by locating the containing coarse triangle
        for (fnode, &v) in fine.iter().enumerate() {
            let [x, y] = fine_mesh.nodes[fnode];
            let hc = m.h;
            let ci = (x / hc).floor() as usize % m.n;
            let cj = (y / hc).floor() as usize % m.n;
            let xl = (x - ci as f64 * hc) / hc;
            let yl = (y - cj as f64 * hc) / hc;
            let a = coarse[m.node_index(ci, cj)];
            let b = coarse[m.node_index(ci + 1, cj)];
            let c = coarse[m.node_index(ci, cj + 1)];
            let d = coarse[m.node_index(ci + 1, cj + 1)];
            // lower triangle (a,b,d) if yl <= xl else upper (a,d,c)
            let exact = if yl <= xl {
                a + (b - a) * (xl - yl) + (d - a) * yl
            } else {
                a + (d - a) * xl + (c - a) * (yl - xl)
            };
            assert!((v - exact).abs() < 1e-14, "fine node {fnode}");
        }
    }

    #[test]
    fn double_refine_composes() {
        let m = build_uniform(2).unwrap();
        let coarse: Vec<f64> = (0..4).map(|k| k as f64).collect();
        let (mid, p1) = refine(&m).unwrap();
        let (_fine, p2) = refine(&mid).unwrap();
        assert_eq!(p2.fine_n, 8);
        let via_two = p2.apply(&p1.apply(&coarse));
        // composed prolongation is still exact for P1 data at coarse-lattice
        // nodes of the doubly refined mesh
        let m8 = build_uniform(8).unwrap();
        for j in 0..8 {
            for i in 0..8 {
                if i % 4 == 0 && j % 4 == 0 {
                    assert_eq!(via_two[m8.node_index(i, j)], coarse[m.node_index(i / 4, j / 4)]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn node_index_bijection(n in 2usize..12) {
            let m = build_uniform(n).unwrap();
            let mut seen = vec![false; n * n];
            for j in 0..n {
                for i in 0..n {
                    let k = m.node_index(i, j);
                    prop_assert!(!seen[k]);
                    seen[k] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
        }
    }
}
