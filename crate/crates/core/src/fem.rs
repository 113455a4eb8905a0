//! P1 finite elements on the periodic mesh.
//!
//! [`FemSpace`] caches element geometry and the assembled mass and stiffness
//! matrices. All nonlinear terms and diagnostics are integrated with one fixed
//! degree-2-exact quadrature rule (edge midpoints), so discrete conservation
//! identities hold exactly with respect to that rule rather than approximately.

use crate::error::{Error, Result};
use crate::linalg::{spmv, CsrMatrix};
use crate::mesh::PeriodicMesh;

/// Nodal coefficients of a continuous piecewise-linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(coeffs: Vec<f64>) -> Self {
        FeFunction { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        FeFunction { coeffs: vec![0.0; n] }
    }
}

/// Symmetric quadrature rule in barycentric coordinates; weights sum to one
/// and are scaled by the element area at use.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Highest polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Three edge midpoints with equal weights; exact for quadratics.
    pub fn edge_midpoints() -> Self {
        QuadratureRule {
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![1.0 / 3.0; 3],
            degree: 2,
        }
    }
}

/// P1 gradients and signed area for a triangle given by its vertex
/// coordinates (counterclockwise).
fn p1_gradients(p: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
        - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * det;
    let g = [
        [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
        [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
        [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
    ];
    (g, area)
}

/// P1 space over a periodic mesh with cached assembly data.
#[derive(Debug, Clone)]
pub struct FemSpace {
    pub mesh: PeriodicMesh,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub quad: QuadratureRule,
    /// Basis gradients per triangle (constant on each element).
    grads: Vec<[[f64; 2]; 3]>,
    /// Common element area `h^2/2`.
    area: f64,
}

impl FemSpace {
    pub fn new(mesh: PeriodicMesh) -> Self {
        let h = mesh.h;
        let mut grads = Vec::with_capacity(mesh.num_triangles());
        for k in 0..mesh.num_triangles() {
            let (ci, cj) = (((k / 2) % mesh.n) as f64, ((k / 2) / mesh.n) as f64);
            // unwrapped cell-local vertex coordinates (stored node positions
            // wrap around the torus and would give degenerate geometry)
            let corner = |di: f64, dj: f64| [(ci + di) * h, (cj + dj) * h];
            let p = if k % 2 == 0 {
                [corner(0.0, 0.0), corner(1.0, 0.0), corner(1.0, 1.0)]
            } else {
                [corner(0.0, 0.0), corner(1.0, 1.0), corner(0.0, 1.0)]
            };
            let (g, _) = p1_gradients(&p);
            grads.push(g);
        }
        let area = 0.5 * h * h;
        let nn = mesh.num_nodes();
        let mut mass_t = Vec::with_capacity(9 * mesh.num_triangles());
        let mut stiff_t = Vec::with_capacity(9 * mesh.num_triangles());
        for (k, t) in mesh.triangles.iter().enumerate() {
            let g = &grads[k];
            for i in 0..3 {
                for j in 0..3 {
                    let m = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                    let s = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    mass_t.push((t[i], t[j], m));
                    stiff_t.push((t[i], t[j], s));
                }
            }
        }
        let mass = CsrMatrix::from_triplets(nn, nn, &mass_t);
        let stiffness = CsrMatrix::from_triplets(nn, nn, &stiff_t);
        FemSpace {
            mesh,
            mass,
            stiffness,
            quad: QuadratureRule::edge_midpoints(),
            grads,
            area,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    /// Nodal interpolation of a coordinate function.
    pub fn interpolate<G: Fn(f64, f64) -> f64>(&self, g: G) -> Result<FeFunction> {
        let mut coeffs = Vec::with_capacity(self.num_nodes());
        for (k, p) in self.mesh.nodes.iter().enumerate() {
            let v = g(p[0], p[1]);
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "interpolate: non-finite value {v} at node {k} ({}, {})",
                    p[0], p[1]
                )));
            }
            coeffs.push(v);
        }
        Ok(FeFunction { coeffs })
    }

    /// Quadrature values of several functions on element `k`: `vals[q][f]`.
    #[inline]
    fn quad_values(&self, k: usize, fields: &[&FeFunction], vals: &mut [f64], q: usize) {
        let t = &self.mesh.triangles[k];
        let b = &self.quad.points[q];
        for (fi, f) in fields.iter().enumerate() {
            vals[fi] = b[0] * f.coeffs[t[0]] + b[1] * f.coeffs[t[1]] + b[2] * f.coeffs[t[2]];
        }
    }

    /// `∫ f(fields) φ_i dx` for every basis function, integrated by the fixed
    /// rule; the integrand sees the quadrature-evaluated field values.
    pub fn weighted_load<F>(&self, fields: &[&FeFunction], integrand: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut out = vec![0.0; self.num_nodes()];
        let mut vals = vec![0.0; fields.len()];
        for k in 0..self.mesh.num_triangles() {
            let t = &self.mesh.triangles[k];
            for q in 0..self.quad.points.len() {
                self.quad_values(k, fields, &mut vals, q);
                let w = integrand(&vals);
                if !w.is_finite() {
                    return Err(Error::NonFiniteIntegrand { element: k, point: q });
                }
                let scale = self.area * self.quad.weights[q] * w;
                let b = &self.quad.points[q];
                for i in 0..3 {
                    out[t[i]] += scale * b[i];
                }
            }
        }
        Ok(out)
    }

    /// Weighted mass matrix `N_{ij} = ∫ f(fields) φ_i φ_j dx`.
    pub fn weighted_mass<F>(&self, fields: &[&FeFunction], integrand: F) -> Result<CsrMatrix>
    where
        F: Fn(&[f64]) -> f64,
    {
        let nn = self.num_nodes();
        let mut trips = Vec::with_capacity(9 * self.mesh.num_triangles());
        let mut vals = vec![0.0; fields.len()];
        for k in 0..self.mesh.num_triangles() {
            let t = &self.mesh.triangles[k];
            for q in 0..self.quad.points.len() {
                self.quad_values(k, fields, &mut vals, q);
                let w = integrand(&vals);
                if !w.is_finite() {
                    return Err(Error::NonFiniteIntegrand { element: k, point: q });
                }
                let scale = self.area * self.quad.weights[q] * w;
                let b = &self.quad.points[q];
                for i in 0..3 {
                    for j in 0..3 {
                        trips.push((t[i], t[j], scale * b[i] * b[j]));
                    }
                }
            }
        }
        Ok(CsrMatrix::from_triplets(nn, nn, &trips))
    }

    /// `∫ f(fields) dx` by the fixed rule.
    pub fn integrate<F>(&self, fields: &[&FeFunction], integrand: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut acc = 0.0;
        let mut vals = vec![0.0; fields.len()];
        for k in 0..self.mesh.num_triangles() {
            for q in 0..self.quad.points.len() {
                self.quad_values(k, fields, &mut vals, q);
                let w = integrand(&vals);
                if !w.is_finite() {
                    return Err(Error::NonFiniteIntegrand { element: k, point: q });
                }
                acc += self.area * self.quad.weights[q] * w;
            }
        }
        Ok(acc)
    }

    /// Anisotropic stiffness `(K_A)_{ij} = ∫ (A ∇φ_j)·∇φ_i dx` for constant `A`.
    pub fn aniso_stiffness(&self, a: [[f64; 2]; 2]) -> CsrMatrix {
        let nn = self.num_nodes();
        let mut trips = Vec::with_capacity(9 * self.mesh.num_triangles());
        for (k, t) in self.mesh.triangles.iter().enumerate() {
            let g = &self.grads[k];
            for i in 0..3 {
                for j in 0..3 {
                    let agj = [
                        a[0][0] * g[j][0] + a[0][1] * g[j][1],
                        a[1][0] * g[j][0] + a[1][1] * g[j][1],
                    ];
                    trips.push((t[i], t[j], self.area * (agj[0] * g[i][0] + agj[1] * g[i][1])));
                }
            }
        }
        CsrMatrix::from_triplets(nn, nn, &trips)
    }

    /// Gradient coupling `(G_c)_{ij} = ∫ φ_j (c·∇φ_i) dx` for constant `c`.
    pub fn grad_coupling(&self, c: [f64; 2]) -> CsrMatrix {
        let nn = self.num_nodes();
        let mut trips = Vec::with_capacity(9 * self.mesh.num_triangles());
        for (k, t) in self.mesh.triangles.iter().enumerate() {
            let g = &self.grads[k];
            for i in 0..3 {
                let ci = self.area / 3.0 * (c[0] * g[i][0] + c[1] * g[i][1]);
                for j in 0..3 {
                    trips.push((t[i], t[j], ci));
                }
            }
        }
        CsrMatrix::from_triplets(nn, nn, &trips)
    }

    /// Constant gradient of a P1 function on element `k`.
    pub fn element_gradient(&self, f: &FeFunction, k: usize) -> [f64; 2] {
        let t = &self.mesh.triangles[k];
        let g = &self.grads[k];
        let mut out = [0.0, 0.0];
        for i in 0..3 {
            out[0] += f.coeffs[t[i]] * g[i][0];
            out[1] += f.coeffs[t[i]] * g[i][1];
        }
        out
    }

    pub fn norm_l2(&self, f: &FeFunction) -> f64 {
        self.quadratic_form(&self.mass, &f.coeffs).max(0.0).sqrt()
    }

    pub fn norm_h1semi(&self, f: &FeFunction) -> f64 {
        self.quadratic_form(&self.stiffness, &f.coeffs).max(0.0).sqrt()
    }

    pub fn norm_h1(&self, f: &FeFunction) -> f64 {
        let sq = self.quadratic_form(&self.mass, &f.coeffs)
            + self.quadratic_form(&self.stiffness, &f.coeffs);
        sq.max(0.0).sqrt()
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, a: &CsrMatrix, x: &[f64]) -> f64 {
        let ax = spmv(a, x).expect("conforming space matrix");
        ax.iter().zip(x).map(|(p, q)| p * q).sum()
    }
}
