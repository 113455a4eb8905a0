//! Independent dense reference implementation of one implicit time step on
//! the 2×2 periodic mesh: matrices assembled from scratch by edge-midpoint
//! quadrature, the Jacobian taken by finite differences, and the linear
//! solves done by dense Gaussian elimination.

use thermophase::model::{dpsi_split, internal_energy, MobilityMatrix, ModelParams};
use thermophase::scheme::State;

pub const N: usize = 2;
pub const NN: usize = N * N;
pub const H: f64 = 1.0 / N as f64;

pub fn node(i: usize, j: usize) -> usize {
    (j % N) * N + (i % N)
}

/// Triangles of the periodic square mesh with unwrapped vertex coordinates.
pub fn triangles() -> Vec<([usize; 3], [[f64; 2]; 3])> {
    let mut tris = Vec::new();
    for cj in 0..N {
        for ci in 0..N {
            let (x0, y0) = (ci as f64 * H, cj as f64 * H);
            tris.push((
                [node(ci, cj), node(ci + 1, cj), node(ci + 1, cj + 1)],
                [[x0, y0], [x0 + H, y0], [x0 + H, y0 + H]],
            ));
            tris.push((
                [node(ci, cj), node(ci + 1, cj + 1), node(ci, cj + 1)],
                [[x0, y0], [x0 + H, y0 + H], [x0, y0 + H]],
            ));
        }
    }
    tris
}

pub fn p1_grads(v: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
    let area = det.abs() / 2.0;
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let a = v[(i + 1) % 3];
        let b = v[(i + 2) % 3];
        g[i] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    (g, area)
}

/// Basis values at the three edge midpoints.
pub const QPHI: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

pub fn mass() -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; NN]; NN];
    for (idx, verts) in triangles() {
        let (_, area) = p1_grads(&verts);
        for q in QPHI {
            for i in 0..3 {
                for j in 0..3 {
                    m[idx[i]][idx[j]] += area / 3.0 * q[i] * q[j];
                }
            }
        }
    }
    m
}

pub fn aniso_stiffness(a: [[f64; 2]; 2]) -> Vec<Vec<f64>> {
    let mut k = vec![vec![0.0; NN]; NN];
    for (idx, verts) in triangles() {
        let (g, area) = p1_grads(&verts);
        for i in 0..3 {
            for j in 0..3 {
                let agj = [
                    a[0][0] * g[j][0] + a[0][1] * g[j][1],
                    a[1][0] * g[j][0] + a[1][1] * g[j][1],
                ];
                k[idx[i]][idx[j]] += area * (agj[0] * g[i][0] + agj[1] * g[i][1]);
            }
        }
    }
    k
}

pub fn grad_coupling(c: [f64; 2]) -> Vec<Vec<f64>> {
    let mut gmat = vec![vec![0.0; NN]; NN];
    for (idx, verts) in triangles() {
        let (g, area) = p1_grads(&verts);
        for i in 0..3 {
            let cg = c[0] * g[i][0] + c[1] * g[i][1];
            for j in 0..3 {
                // ∫ φ_j (c·∇φ_i) with ∇φ_i constant and ∫φ_j = area/3
                gmat[idx[i]][idx[j]] += area / 3.0 * cg;
            }
        }
    }
    gmat
}

/// Load vector `∫ f(fields) φ_i` by edge-midpoint quadrature.
pub fn load(fields: &[&[f64]], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; NN];
    let mut vals = vec![0.0; fields.len()];
    for (idx, verts) in triangles() {
        let (_, area) = p1_grads(&verts);
        for q in QPHI {
            for (v, field) in vals.iter_mut().zip(fields) {
                *v = (0..3).map(|i| q[i] * field[idx[i]]).sum();
            }
            let fv = f(&vals);
            for i in 0..3 {
                b[idx[i]] += area / 3.0 * q[i] * fv;
            }
        }
    }
    b
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
}

pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs())).unwrap();
        m.swap(col, piv);
        x.swap(col, piv);
        let d = m[col][col];
        assert!(d.abs() > 1e-300, "singular dense system");
        for row in col + 1..n {
            let f = m[row][col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= m[col][col];
        for row in 0..col {
            let f = m[row][col];
            x[row] -= f * x[col];
        }
    }
    x
}

pub struct DenseScheme {
    p: ModelParams,
    tau: f64,
    m: Vec<Vec<f64>>,
    tk11: Vec<Vec<f64>>,
    tk12: Vec<Vec<f64>>,
    tk22: Vec<Vec<f64>>,
    tg13: Vec<Vec<f64>>,
    tg23: Vec<Vec<f64>>,
    tl33: f64,
    gk_rho: Vec<Vec<f64>>,
    gk_eta: Vec<Vec<f64>>,
}

impl DenseScheme {
    pub fn new(p: ModelParams, mob: &MobilityMatrix, tau: f64) -> Self {
        let scale = |a: Vec<Vec<f64>>, s: f64| -> Vec<Vec<f64>> {
            a.into_iter().map(|r| r.into_iter().map(|v| v * s).collect()).collect()
        };
        let k = aniso_stiffness([[1.0, 0.0], [0.0, 1.0]]);
        DenseScheme {
            tau,
            m: mass(),
            tk11: scale(aniso_stiffness(mob.l11()), tau),
            tk12: scale(aniso_stiffness(mob.l12()), tau),
            tk22: scale(aniso_stiffness(mob.l22()), tau),
            tg13: scale(grad_coupling(mob.l13()), tau),
            tg23: scale(grad_coupling(mob.l23()), tau),
            tl33: mob.l33(),
            gk_rho: scale(k.clone(), p.gamma_rho),
            gk_eta: scale(k, p.gamma_eta),
            p,
        }
    }

    /// Five-block residual; unknown layout `[ρ'; μ'; θ'; η'; μ_η']`.
    pub fn residual(&self, old: &[f64], u: &[f64]) -> Vec<f64> {
        let p = &self.p;
        let s = |k: usize, v: &[f64]| -> Vec<f64> { v[k * NN..(k + 1) * NN].to_vec() };
        let (rho_o, theta_o, eta_o) = (s(0, old), s(2, old), s(3, old));
        let (rho, mu, theta, eta, mu_eta) = (s(0, u), s(1, u), s(2, u), s(3, u), s(4, u));
        let mut f = vec![0.0; 5 * NN];
        let acc = |f: &mut [f64], k: usize, v: Vec<f64>, s: f64| {
            for (fv, vv) in f[k * NN..(k + 1) * NN].iter_mut().zip(v) {
                *fv += s * vv;
            }
        };
        acc(&mut f, 0, matvec(&self.m, &rho), 1.0);
        acc(&mut f, 0, matvec(&self.m, &rho_o), -1.0);
        acc(&mut f, 0, matvec(&self.tk11, &mu), 1.0);
        acc(&mut f, 0, matvec(&self.tk12, &theta), -1.0);
        acc(&mut f, 0, matvec(&self.tg13, &mu_eta), 1.0);

        let b_rho = load(&[&rho, &rho_o, &theta, &eta, &eta_o], |v| {
            dpsi_split(v[0], v[1], v[2], v[3], v[4], p).unwrap().0
        });
        acc(&mut f, 1, matvec(&self.m, &mu), 1.0);
        acc(&mut f, 1, matvec(&self.gk_rho, &rho), -1.0);
        acc(&mut f, 1, b_rho, -1.0);

        let be_new = load(&[&rho, &theta, &eta], |v| internal_energy(v[0], v[1], v[2], p).unwrap());
        let be_old = load(&[&rho_o, &theta_o, &eta_o], |v| {
            internal_energy(v[0], v[1], v[2], p).unwrap()
        });
        acc(&mut f, 2, be_new, 1.0);
        acc(&mut f, 2, be_old, -1.0);
        acc(&mut f, 2, matvec(&self.tk12, &mu), 1.0);
        acc(&mut f, 2, matvec(&self.tk22, &theta), -1.0);
        acc(&mut f, 2, matvec(&self.tg23, &mu_eta), 1.0);

        let transpose_mv = |a: &[Vec<f64>], x: &[f64]| -> Vec<f64> {
            let mut y = vec![0.0; NN];
            for (i, row) in a.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    y[j] += v * x[i];
                }
            }
            y
        };
        acc(&mut f, 3, matvec(&self.m, &eta), 1.0);
        acc(&mut f, 3, matvec(&self.m, &eta_o), -1.0);
        acc(&mut f, 3, transpose_mv(&self.tg13, &mu), 1.0);
        acc(&mut f, 3, transpose_mv(&self.tg23, &theta), -1.0);
        acc(&mut f, 3, matvec(&self.m, &mu_eta), self.tau * self.tl33);

        let b_eta = load(&[&rho, &rho_o, &theta, &eta, &eta_o], |v| {
            dpsi_split(v[0], v[1], v[2], v[3], v[4], p).unwrap().1
        });
        acc(&mut f, 4, matvec(&self.m, &mu_eta), 1.0);
        acc(&mut f, 4, matvec(&self.gk_eta, &eta), -1.0);
        acc(&mut f, 4, b_eta, -1.0);
        f
    }

    /// Damped-free Newton with a centered finite-difference Jacobian.
    pub fn solve(&self, old: &[f64]) -> Vec<f64> {
        let n = 5 * NN;
        let mut u = old.to_vec();
        for _ in 0..60 {
            let f = self.residual(old, &u);
            let norm = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if norm < 1e-14 {
                return u;
            }
            let mut jac = vec![vec![0.0; n]; n];
            for col in 0..n {
                let eps = 1e-7 * (1.0 + u[col].abs());
                let mut up = u.clone();
                let mut um = u.clone();
                up[col] += eps;
                um[col] -= eps;
                let fp = self.residual(old, &up);
                let fm = self.residual(old, &um);
                for row in 0..n {
                    jac[row][col] = (fp[row] - fm[row]) / (2.0 * eps);
                }
            }
            let du = dense_solve(&jac, &f);
            for (uv, dv) in u.iter_mut().zip(&du) {
                *uv -= dv;
            }
        }
        panic!("dense reference Newton did not converge");
    }
}

pub fn flat(state: &State) -> Vec<f64> {
    let mut u = Vec::with_capacity(5 * NN);
    for f in [&state.rho, &state.mu_rho, &state.theta, &state.eta, &state.mu_eta] {
        u.extend_from_slice(&f.coeffs);
    }
    u
}

