//! Thermodynamic closure: the Helmholtz-type potential in inverse-temperature
//! form, its derivatives, the convex–concave split used by the time stepper,
//! entropy density, and the mobility matrix.
//!
//! The potential is
//! `ψ(ρ,θ,η) = ln θ + (C₁θ−C₂)ρ²(1−ρ)² + (D₁θ−D₂)B(ρ,η)` with the
//! multi-well coupling `B(ρ,η) = ρ² + 6(1−ρ)g₂ − 4(2−ρ)g₃ + 3g₂²`,
//! `g₂ = η²+(1−η)²`, `g₃ = η³+(1−η)³`. The internal energy density is
//! `e = ∂_θψ` and the entropy density `s = θe − ψ − gradient terms`.

use crate::error::{Error, Result};

/// Scalar physical and numerical constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Interface parameter of the conserved field (> 0).
    pub gamma_rho: f64,
    /// Interface parameter of the non-conserved field (> 0).
    pub gamma_eta: f64,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    /// Quadratic stabilizer of the convex–concave split (≥ 0).
    pub alpha: f64,
    /// Relative-entropy penalty (≥ 0); defaults to `alpha`.
    pub lambda: f64,
    /// Lower edge of the validated temperature box (> 0).
    pub theta_min: f64,
    /// Upper edge of the validated temperature box.
    pub theta_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            gamma_rho: 1e-3,
            gamma_eta: 1e-3,
            c1: 2.0,
            c2: 1.0,
            d1: 0.141,
            d2: 0.062,
            alpha: 20.0,
            lambda: 20.0,
            theta_min: 0.05,
            theta_max: 3.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_rho > 0.0 && self.gamma_eta > 0.0) {
            return Err(Error::InvalidArgument(
                "interface parameters gamma_rho, gamma_eta must be positive".into(),
            ));
        }
        if self.alpha < 0.0 || self.lambda < 0.0 {
            return Err(Error::InvalidArgument(
                "alpha and lambda must be nonnegative".into(),
            ));
        }
        if !(self.theta_min > 0.0 && self.theta_max > self.theta_min) {
            return Err(Error::InvalidArgument(
                "need 0 < theta_min < theta_max".into(),
            ));
        }
        Ok(())
    }
}

#[inline]
fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "potential requires theta > 0, got {theta}"
        )))
    }
}

#[inline]
fn wells(rho: f64) -> (f64, f64, f64) {
    let w = rho * rho * (1.0 - rho) * (1.0 - rho);
    let dw = 2.0 * rho * (1.0 - rho) * (1.0 - 2.0 * rho);
    let ddw = 2.0 * (1.0 - 6.0 * rho + 6.0 * rho * rho);
    (w, dw, ddw)
}

/// `B` and its first/second partials: (B, B_ρ, B_η, B_ρρ, B_ρη, B_ηη).
#[inline]
fn coupling(rho: f64, eta: f64) -> (f64, f64, f64, f64, f64, f64) {
    let em = 1.0 - eta;
    let g2 = eta * eta + em * em;
    let g3 = eta * eta * eta + em * em * em;
    let dg2 = 4.0 * eta - 2.0;
    let dg3 = 3.0 * (eta * eta - em * em);
    let b = rho * rho + 6.0 * (1.0 - rho) * g2 - 4.0 * (2.0 - rho) * g3 + 3.0 * g2 * g2;
    let b_r = 2.0 * rho - 6.0 * g2 + 4.0 * g3;
    let b_e = 6.0 * (1.0 - rho) * dg2 - 4.0 * (2.0 - rho) * dg3 + 6.0 * g2 * dg2;
    let b_rr = 2.0;
    let b_re = -6.0 * dg2 + 4.0 * dg3;
    let b_ee = 24.0 * (1.0 - rho) - 24.0 * (2.0 - rho) + 6.0 * (dg2 * dg2 + 4.0 * g2);
    (b, b_r, b_e, b_rr, b_re, b_ee)
}

/// Potential value.
pub fn psi(rho: f64, theta: f64, eta: f64, p: &ModelParams) -> Result<f64> {
    check_theta(theta)?;
    let (w, _, _) = wells(rho);
    let (b, ..) = coupling(rho, eta);
    Ok(theta.ln() + (p.c1 * theta - p.c2) * w + (p.d1 * theta - p.d2) * b)
}

/// First partials `(∂_ρψ, ∂_θψ, ∂_ηψ)`; the middle entry is the internal
/// energy density `e`.
pub fn dpsi(rho: f64, theta: f64, eta: f64, p: &ModelParams) -> Result<(f64, f64, f64)> {
    check_theta(theta)?;
    let (w, dw, _) = wells(rho);
    let (b, b_r, b_e, ..) = coupling(rho, eta);
    let ct = p.c1 * theta - p.c2;
    let dt = p.d1 * theta - p.d2;
    Ok((
        ct * dw + dt * b_r,
        1.0 / theta + p.c1 * w + p.d1 * b,
        dt * b_e,
    ))
}

/// Internal energy density `e = ∂_θψ`.
pub fn internal_energy(rho: f64, theta: f64, eta: f64, p: &ModelParams) -> Result<f64> {
    Ok(dpsi(rho, theta, eta, p)?.1)
}

/// All second partials of ψ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiHessian {
    pub rr: f64,
    pub rt: f64,
    pub re: f64,
    pub tt: f64,
    pub te: f64,
    pub ee: f64,
}

pub fn d2psi(rho: f64, theta: f64, eta: f64, p: &ModelParams) -> Result<PsiHessian> {
    check_theta(theta)?;
    let (_, dw, ddw) = wells(rho);
    let (_, b_r, b_e, b_rr, b_re, b_ee) = coupling(rho, eta);
    let ct = p.c1 * theta - p.c2;
    let dt = p.d1 * theta - p.d2;
    Ok(PsiHessian {
        rr: ct * ddw + dt * b_rr,
        rt: p.c1 * dw + p.d1 * b_r,
        re: dt * b_re,
        tt: -1.0 / (theta * theta),
        te: p.d1 * b_e,
        ee: dt * b_ee,
    })
}

/// Time-level-mixed potential derivatives of the splitting scheme:
/// the convex part is taken at the new state, the concave quadratic at the
/// old, both at the new temperature.
pub fn dpsi_split(
    rho_new: f64,
    rho_old: f64,
    theta_new: f64,
    eta_new: f64,
    eta_old: f64,
    p: &ModelParams,
) -> Result<(f64, f64)> {
    let (d_rho, _, d_eta) = dpsi(rho_new, theta_new, eta_new, p)?;
    Ok((
        d_rho + p.alpha * (rho_new - rho_old),
        d_eta + p.alpha * (eta_new - eta_old),
    ))
}

/// Entropy density `s = θe − ψ − (γ_ρ/2)|∇ρ|² − (γ_η/2)|∇η|²`.
pub fn entropy_density(
    rho: f64,
    theta: f64,
    eta: f64,
    grad_rho_sq: f64,
    grad_eta_sq: f64,
    p: &ModelParams,
) -> Result<f64> {
    let e = internal_energy(rho, theta, eta, p)?;
    let psi_v = psi(rho, theta, eta, p)?;
    Ok(theta * e - psi_v - 0.5 * p.gamma_rho * grad_rho_sq - 0.5 * p.gamma_eta * grad_eta_sq)
}

/// Checks that `ψ + (α/2)(ρ²+η²)` is convex in `(ρ,η)` over the declared
/// state box `[−0.5,1.5]² × [θ_min,θ_max]`, by sampling the analytic 2×2
/// Hessian on a grid that includes all box corners.
pub fn validate_split(p: &ModelParams) -> Result<()> {
    let mut min_eig = f64::INFINITY;
    let nr = 9;
    let nt = 7;
    for it in 0..nt {
        let theta = p.theta_min + (p.theta_max - p.theta_min) * it as f64 / (nt - 1) as f64;
        for ir in 0..nr {
            let rho = -0.5 + 2.0 * ir as f64 / (nr - 1) as f64;
            for ie in 0..nr {
                let eta = -0.5 + 2.0 * ie as f64 / (nr - 1) as f64;
                let h = d2psi(rho, theta, eta, p)?;
                let a = h.rr + p.alpha;
                let d = h.ee + p.alpha;
                let tr = a + d;
                let disc = ((a - d) * (a - d) + 4.0 * h.re * h.re).sqrt();
                min_eig = min_eig.min(0.5 * (tr - disc));
            }
        }
    }
    if min_eig < -1e-9 {
        return Err(Error::InvalidSplit { alpha: p.alpha, min_eig });
    }
    Ok(())
}

/// Symmetric positive-definite mobility matrix coupling `(∇μ_ρ, ∇θ, μ_η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityMatrix {
    m: [[f64; 5]; 5],
    /// Smallest eigenvalue.
    pub lambda0: f64,
    /// Largest eigenvalue.
    pub lambda1: f64,
}

impl MobilityMatrix {
    pub fn new(m: [[f64; 5]; 5]) -> Result<Self> {
        for i in 0..5 {
            for j in 0..i {
                if (m[i][j] - m[j][i]).abs() > 1e-12 * (1.0 + m[i][j].abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "mobility matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let eigs = sym_eigenvalues(m);
        let lambda0 = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let lambda1 = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lambda0 <= 0.0 {
            return Err(Error::IndefiniteMobility { min_eig: lambda0 });
        }
        Ok(MobilityMatrix { m, lambda0, lambda1 })
    }

    pub fn diagonal(d: [f64; 5]) -> Result<Self> {
        let mut m = [[0.0; 5]; 5];
        for i in 0..5 {
            m[i][i] = d[i];
        }
        MobilityMatrix::new(m)
    }

    /// Convergence-study mobility `diag(0.1, 0.1, 0.1, 0.1, 10)`.
    pub fn convergence() -> Self {
        MobilityMatrix::diagonal([0.1, 0.1, 0.1, 0.1, 10.0]).expect("positive diagonal")
    }

    /// Applied-run mobility `diag(0.1, 0.1, 0.001, 0.001, 1000)`.
    pub fn applied() -> Self {
        MobilityMatrix::diagonal([0.1, 0.1, 1e-3, 1e-3, 1e3]).expect("positive diagonal")
    }

    pub fn entries(&self) -> &[[f64; 5]; 5] {
        &self.m
    }

    pub fn l11(&self) -> [[f64; 2]; 2] {
        [[self.m[0][0], self.m[0][1]], [self.m[1][0], self.m[1][1]]]
    }

    pub fn l12(&self) -> [[f64; 2]; 2] {
        [[self.m[0][2], self.m[0][3]], [self.m[1][2], self.m[1][3]]]
    }

    pub fn l22(&self) -> [[f64; 2]; 2] {
        [[self.m[2][2], self.m[2][3]], [self.m[3][2], self.m[3][3]]]
    }

    pub fn l13(&self) -> [f64; 2] {
        [self.m[0][4], self.m[1][4]]
    }

    pub fn l23(&self) -> [f64; 2] {
        [self.m[2][4], self.m[3][4]]
    }

    pub fn l33(&self) -> f64 {
        self.m[4][4]
    }

    /// `ξᵀ 𝐋 ξ`.
    pub fn quadratic_form(&self, xi: &[f64; 5]) -> f64 {
        let mut acc = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                acc += xi[i] * self.m[i][j] * xi[j];
            }
        }
        acc
    }
}

/// Eigenvalues of a symmetric 5×5 matrix by cyclic Jacobi rotations.
fn sym_eigenvalues(mut a: [[f64; 5]; 5]) -> [f64; 5] {
    for _ in 0..60 {
        let mut off = 0.0;
        for i in 0..5 {
            for j in i + 1..5 {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..5 {
            for q in p + 1..5 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..5 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..5 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    [a[0][0], a[1][1], a[2][2], a[3][3], a[4][4]]
}
