//! Structural diagnostics: conserved integrals, entropy and its production
//! rate, the per-step numerical dissipation, the relative entropy between two
//! states, and the perturbed-system residuals.
//!
//! Everything here integrates with the same fixed quadrature as the scheme,
//! so the conservation identities it reports are exact up to solver
//! tolerance, not up to quadrature error.

use crate::error::Result;
use crate::fem::{FeFunction, FemSpace};
use crate::linalg::spmv;
use crate::model::{dpsi, entropy_density, internal_energy, psi, MobilityMatrix, ModelParams};
use crate::scheme::{State, StepReport, Stepper};

/// Per-step summary of every quantity the structure lemmas reference.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub total_mass: f64,
    pub total_internal_energy: f64,
    pub total_entropy: f64,
    /// Entropy-production rate 𝒟_𝐋 at the new state.
    pub dissipation_rate: f64,
    /// Entropy-balance defect of the step: ⟨Δs,1⟩ − τ𝒟_𝐋.
    pub numerical_dissipation: f64,
    pub newton_iters: usize,
    pub final_residual: f64,
}

/// `⟨ρ, 1⟩`.
pub fn total_mass(space: &FemSpace, rho: &FeFunction) -> f64 {
    spmv(&space.mass, &rho.coeffs).expect("conforming").iter().sum()
}

/// `⟨e(ρ,θ,η), 1⟩` by the fixed quadrature.
pub fn total_internal_energy(space: &FemSpace, s: &State, p: &ModelParams) -> Result<f64> {
    space.integrate(&[&s.rho, &s.theta, &s.eta], |v| {
        internal_energy(v[0], v[1], v[2], p).unwrap_or(f64::NAN)
    })
}

/// `⟨s(ρ,θ,η,∇ρ,∇η), 1⟩`; the gradient penalties are exact P1 integrals.
pub fn total_entropy(space: &FemSpace, s: &State, p: &ModelParams) -> Result<f64> {
    let bulk = space.integrate(&[&s.rho, &s.theta, &s.eta], |v| {
        entropy_density(v[0], v[1], v[2], 0.0, 0.0, p).unwrap_or(f64::NAN)
    })?;
    let grad_rho = space.quadratic_form(&space.stiffness, &s.rho.coeffs);
    let grad_eta = space.quadratic_form(&space.stiffness, &s.eta.coeffs);
    Ok(bulk - 0.5 * p.gamma_rho * grad_rho - 0.5 * p.gamma_eta * grad_eta)
}

/// Entropy-production rate: the quadratic form of the sign-flipped mobility
/// matrix on `(∇μ_ρ, ∇θ, μ_η)`, integrated exactly for P1 fields.
///
/// The sign flip on the middle block is a congruence transform of 𝐋, so the
/// form is positive semidefinite whenever 𝐋 is.
pub fn dissipation(
    space: &FemSpace,
    mu_rho: &FeFunction,
    theta: &FeFunction,
    mu_eta: &FeFunction,
    mob: &MobilityMatrix,
) -> f64 {
    let l11 = mob.l11();
    let l12 = mob.l12();
    let l22 = mob.l22();
    let l13 = mob.l13();
    let l23 = mob.l23();
    let l33 = mob.l33();
    let area = 0.5 * space.mesh.h * space.mesh.h;
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    let matvec =
        |m: [[f64; 2]; 2], v: [f64; 2]| [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]];
    let mut acc = 0.0;
    for k in 0..space.mesh.num_triangles() {
        let gm = space.element_gradient(mu_rho, k);
        let gt = space.element_gradient(theta, k);
        let t = &space.mesh.triangles[k];
        let v = [mu_eta.coeffs[t[0]], mu_eta.coeffs[t[1]], mu_eta.coeffs[t[2]]];
        let mean = (v[0] + v[1] + v[2]) / 3.0;
        // edge-midpoint rule integrates μ_η² exactly
        let mids = [(v[0] + v[1]) / 2.0, (v[1] + v[2]) / 2.0, (v[0] + v[2]) / 2.0];
        let mu_sq = (mids[0] * mids[0] + mids[1] * mids[1] + mids[2] * mids[2]) / 3.0;
        let const_part = dot(matvec(l11, gm), gm) - 2.0 * dot(matvec(l12, gt), gm)
            + dot(matvec(l22, gt), gt);
        let linear_part = 2.0 * mean * (dot(l13, gm) - dot(l23, gt));
        acc += area * (const_part + linear_part + l33 * mu_sq);
    }
    acc
}

/// Entropy-balance defect of one accepted step:
/// `D_num = ⟨sⁿ⁺¹ − sⁿ, 1⟩ − τ 𝒟_𝐋(new)`.
pub fn numerical_dissipation(
    space: &FemSpace,
    old: &State,
    new: &State,
    tau: f64,
    mob: &MobilityMatrix,
    p: &ModelParams,
) -> Result<f64> {
    let ds = total_entropy(space, new, p)? - total_entropy(space, old, p)?;
    Ok(ds - tau * dissipation(space, &new.mu_rho, &new.theta, &new.mu_eta, mob))
}

/// Relative entropy 𝒲_λ between a state and a reference (hatted) state:
/// Bregman-type potential differences plus gradient and λ-quadratic penalties.
pub fn relative_entropy(space: &FemSpace, a: &State, hat: &State, p: &ModelParams) -> Result<f64> {
    let nn = space.num_nodes();
    let mut d_rho = vec![0.0; nn];
    let mut d_eta = vec![0.0; nn];
    for i in 0..nn {
        d_rho[i] = a.rho.coeffs[i] - hat.rho.coeffs[i];
        d_eta[i] = a.eta.coeffs[i] - hat.eta.coeffs[i];
    }
    let grad = 0.5 * p.gamma_rho * space.quadratic_form(&space.stiffness, &d_rho)
        + 0.5 * p.gamma_eta * space.quadratic_form(&space.stiffness, &d_eta);
    let quad = 0.5
        * p.lambda
        * (space.quadratic_form(&space.mass, &d_rho) + space.quadratic_form(&space.mass, &d_eta));
    let bregman = space.integrate(
        &[&a.rho, &a.theta, &a.eta, &hat.rho, &hat.theta, &hat.eta],
        |v| {
            let (r, t, e, rh, th, eh) = (v[0], v[1], v[2], v[3], v[4], v[5]);
            let go = || -> Result<f64> {
                let psi_a = psi(r, t, e, p)?;
                let psi_h = psi(rh, th, eh, p)?;
                let energy_a = internal_energy(r, t, e, p)?;
                let (dr_h, _, de_h) = dpsi(rh, th, eh, p)?;
                Ok(psi_a - psi_h - energy_a * (t - th) - dr_h * (r - rh) - de_h * (e - eh))
            };
            go().unwrap_or(f64::NAN)
        },
    )?;
    Ok(grad + bregman + quad)
}

/// Defect of the scheme's weak forms at a given (old, new) pair of hatted
/// states, split per equation block.
pub fn perturbation_residuals(
    stepper: &Stepper,
    hat_old: &State,
    hat_new: &State,
) -> Result<[Vec<f64>; 5]> {
    let f = stepper.residual(hat_old, hat_new)?;
    let nn = hat_old.num_nodes();
    Ok(std::array::from_fn(|k| f[k * nn..(k + 1) * nn].to_vec()))
}

/// Aggregates the conservation-lemma quantities for one accepted step.
pub fn record(
    stepper: &Stepper,
    old: &State,
    new: &State,
    report: &StepReport,
) -> Result<DiagnosticsRecord> {
    let space = stepper.space;
    let p = stepper.params;
    let mob = stepper.mobility;
    let tau = stepper.cfg.tau;
    let diss = dissipation(space, &new.mu_rho, &new.theta, &new.mu_eta, mob);
    let numdiss = numerical_dissipation(space, old, new, tau, mob, p)?;
    Ok(DiagnosticsRecord {
        t: new.t,
        total_mass: total_mass(space, &new.rho),
        total_internal_energy: total_internal_energy(space, new, p)?,
        total_entropy: total_entropy(space, new, p)?,
        dissipation_rate: diss,
        numerical_dissipation: numdiss,
        newton_iters: report.newton_iters,
        final_residual: report.final_residual(),
    })
}
