//! Packaged numerical experiments: the mesh/time-step convergence study with
//! experimental orders of convergence, and the applied two-grain sintering
//! run with three initial temperature profiles.
//!
//! The discretisation error is estimated against the run on the uniformly
//! refined mesh with halved time step. Both runs advance in lockstep (one
//! coarse step per two fine steps) and the error norms are accumulated on the
//! fly in the fine space, so no trajectory is ever stored.

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::fem::{FeFunction, FemSpace};
use crate::linalg::SolverKind;
use crate::mesh::{build_uniform, refine};
use crate::model::{MobilityMatrix, ModelParams};
use crate::scheme::{SolverConfig, State, Stepper};

/// Squared error quantities of one refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelErrors {
    pub k: usize,
    pub h: f64,
    pub tau: f64,
    /// `max_n ‖ρ_h − ρ_{h/2}‖²_{H¹}` over the coarse time nodes t⁰..t^N.
    pub e_rho: f64,
    /// `max_n ‖θ_h − θ_{h/2}‖²_{L²}`.
    pub e_theta: f64,
    /// `max_n ‖η_h − η_{h/2}‖²_{H¹}`.
    pub e_eta: f64,
    /// `Σ_n τ ‖μ_ρ difference‖²_{H¹}`.
    pub e_mu_rho: f64,
    /// `Σ_n τ ‖θ difference‖²_{H¹}`.
    pub e_grad_theta: f64,
    /// `Σ_n τ ‖μ_η difference‖²_{L²}`.
    pub e_mu_eta: f64,
}

impl LevelErrors {
    /// The combined error: sum of the six squared norms.
    pub fn total(&self) -> f64 {
        self.e_rho + self.e_theta + self.e_eta + self.e_mu_rho + self.e_grad_theta + self.e_mu_eta
    }
}

/// Experimental order of convergence between two successive levels.
pub fn eoc(coarser: f64, finer: f64) -> f64 {
    (coarser / finer).log2()
}

/// Per-level errors of the refinement study plus derived EOC columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub levels: Vec<LevelErrors>,
}

impl ConvergenceTable {
    /// EOC columns in the order (total, ρ, θ, η, μ_ρ, ∇θ, μ_η); `None` for
    /// the first level.
    pub fn eoc_row(&self, idx: usize) -> Option<[f64; 7]> {
        if idx == 0 || idx >= self.levels.len() {
            return None;
        }
        let a = &self.levels[idx - 1];
        let b = &self.levels[idx];
        Some([
            eoc(a.total(), b.total()),
            eoc(a.e_rho, b.e_rho),
            eoc(a.e_theta, b.e_theta),
            eoc(a.e_eta, b.e_eta),
            eoc(a.e_mu_rho, b.e_mu_rho),
            eoc(a.e_grad_theta, b.e_grad_theta),
            eoc(a.e_mu_eta, b.e_mu_eta),
        ])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "k,h,tau,e_total,eoc_total,e_rho,eoc_rho,e_theta,eoc_theta,e_eta,eoc_eta,\
             e_mu_rho,eoc_mu_rho,e_grad_theta,eoc_grad_theta,e_mu_eta,eoc_mu_eta\n",
        );
        for (idx, lv) in self.levels.iter().enumerate() {
            let eocs = self.eoc_row(idx);
            let fmt_eoc = |j: usize| match eocs {
                Some(e) => format!("{:.2}", e[j]),
                None => String::new(),
            };
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{},{:e},{},{:e},{},{:e},{},{:e},{},{:e},{},{:e},{}\n",
                lv.k,
                lv.h,
                lv.tau,
                lv.total(),
                fmt_eoc(0),
                lv.e_rho,
                fmt_eoc(1),
                lv.e_theta,
                fmt_eoc(2),
                lv.e_eta,
                fmt_eoc(3),
                lv.e_mu_rho,
                fmt_eoc(4),
                lv.e_grad_theta,
                fmt_eoc(5),
                lv.e_mu_eta,
                fmt_eoc(6),
            ));
        }
        out
    }

    /// Two aligned plain-text tables in the published column order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let dash = "---".to_string();
        out.push_str(&format!(
            "{:>2}  {:>10}  {:>5}  {:>10}  {:>5}  {:>10}  {:>5}  {:>10}  {:>5}\n",
            "k", "e_total", "eoc", "e_rho", "eoc", "e_theta", "eoc", "e_eta", "eoc"
        ));
        for (idx, lv) in self.levels.iter().enumerate() {
            let e = self.eoc_row(idx);
            let g = |j: usize| e.map_or(dash.clone(), |v| format!("{:.2}", v[j]));
            out.push_str(&format!(
                "{:>2}  {:>10.3e}  {:>5}  {:>10.3e}  {:>5}  {:>10.3e}  {:>5}  {:>10.3e}  {:>5}\n",
                lv.k,
                lv.total(),
                g(0),
                lv.e_rho,
                g(1),
                lv.e_theta,
                g(2),
                lv.e_eta,
                g(3)
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "{:>2}  {:>10}  {:>5}  {:>10}  {:>5}  {:>10}  {:>5}\n",
            "k", "e_mu_rho", "eoc", "e_grad_th", "eoc", "e_mu_eta", "eoc"
        ));
        for (idx, lv) in self.levels.iter().enumerate() {
            let e = self.eoc_row(idx);
            let g = |j: usize| e.map_or(dash.clone(), |v| format!("{:.2}", v[j]));
            out.push_str(&format!(
                "{:>2}  {:>10.3e}  {:>5}  {:>10.3e}  {:>5}  {:>10.3e}  {:>5}\n",
                lv.k,
                lv.e_mu_rho,
                g(4),
                lv.e_grad_theta,
                g(5),
                lv.e_mu_eta,
                g(6)
            ));
        }
        out
    }
}

/// Shared settings of the convergence study.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub t_final: f64,
    /// `τ_k = tau_factor · h_k`.
    pub tau_factor: f64,
    pub linear_solver: SolverKind,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            t_final: 0.16,
            tau_factor: 1e-3,
            linear_solver: SolverKind::Auto,
        }
    }
}

/// Smooth initial data of the convergence study.
pub fn convergence_initial_data(
    space: &FemSpace,
) -> Result<(FeFunction, FeFunction, FeFunction)> {
    let pi2 = 2.0 * std::f64::consts::PI;
    let rho0 = space.interpolate(|x, y| 0.5 + 0.01 * (pi2 * x).cos() * (pi2 * y).cos())?;
    let theta0 = space.interpolate(|x, y| 1.0 + 0.6 * (pi2 * x).sin() * (pi2 * y).sin())?;
    let eta0 = rho0.clone();
    Ok((rho0, theta0, eta0))
}

/// Runs level `k` and its refinement in lockstep, returning the streamed
/// squared error quantities of level `k`.  Level `k` lives on the uniform
/// `2^{k+2} × 2^{k+2}` mesh with `τ = tau_factor · h`.
pub fn error_quantities(
    k: usize,
    params: &ModelParams,
    mobility: &MobilityMatrix,
    study: &StudyConfig,
) -> Result<LevelErrors> {
    let nc = 1usize << (k + 2);
    let h = 1.0 / nc as f64;
    let tau_c = study.tau_factor * h;
    let n_steps = (study.t_final / tau_c).round() as usize;
    if (n_steps as f64 * tau_c - study.t_final).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "final time {} not reachable with tau {}",
            study.t_final, tau_c
        )));
    }
    let coarse_mesh = build_uniform(nc)?;
    let (fine_mesh, prol) = refine(&coarse_mesh)?;
    let coarse = FemSpace::new(coarse_mesh);
    let fine = FemSpace::new(fine_mesh);
    let cfg_c = SolverConfig {
        tau: tau_c,
        t_final: study.t_final,
        linear_solver: study.linear_solver,
        ..SolverConfig::default()
    };
    let cfg_f = SolverConfig { tau: tau_c / 2.0, ..cfg_c.clone() };
    let step_c = Stepper::new(&coarse, params, mobility, cfg_c)?;
    let step_f = Stepper::new(&fine, params, mobility, cfg_f)?;
    let (rc, tc, ec) = convergence_initial_data(&coarse)?;
    let (rf, tf, ef) = convergence_initial_data(&fine)?;
    let mut state_c = step_c.initialize_state(rc, tc, ec)?;
    let mut state_f = step_f.initialize_state(rf, tf, ef)?;

    let diff = |cf: &FeFunction, ff: &FeFunction| -> FeFunction {
        let mut d = prol.apply(&cf.coeffs);
        for (dv, fv) in d.iter_mut().zip(&ff.coeffs) {
            *dv -= fv;
        }
        FeFunction::new(d)
    };
    let mut errs = LevelErrors {
        k,
        h,
        tau: tau_c,
        e_rho: 0.0,
        e_theta: 0.0,
        e_eta: 0.0,
        e_mu_rho: 0.0,
        e_grad_theta: 0.0,
        e_mu_eta: 0.0,
    };
    let linf = |errs: &mut LevelErrors, c: &State, f: &State| {
        errs.e_rho = errs.e_rho.max(fine.norm_h1(&diff(&c.rho, &f.rho)).powi(2));
        errs.e_theta = errs.e_theta.max(fine.norm_l2(&diff(&c.theta, &f.theta)).powi(2));
        errs.e_eta = errs.e_eta.max(fine.norm_h1(&diff(&c.eta, &f.eta)).powi(2));
    };
    // The max-in-time norms run over all time nodes including t⁰, where the
    // two trajectories hold nodal interpolants of the same initial data on
    // different meshes; for θ that interpolation gap dominates the max and
    // carries the observed fourth-order decay of the squared error.
    linf(&mut errs, &state_c, &state_f);
    for _ in 0..n_steps {
        let (next_c, _) = step_c.step(&state_c)?;
        let (mid_f, _) = step_f.step(&state_f)?;
        let (next_f, _) = step_f.step(&mid_f)?;
        state_c = next_c;
        state_f = next_f;
        linf(&mut errs, &state_c, &state_f);
        errs.e_mu_rho += tau_c * fine.norm_h1(&diff(&state_c.mu_rho, &state_f.mu_rho)).powi(2);
        errs.e_grad_theta += tau_c * fine.norm_h1(&diff(&state_c.theta, &state_f.theta)).powi(2);
        errs.e_mu_eta += tau_c * fine.norm_l2(&diff(&state_c.mu_eta, &state_f.mu_eta)).powi(2);
    }
    Ok(errs)
}

/// Full refinement study over levels `0..=k_max`.
pub fn convergence_study(
    k_max: usize,
    params: &ModelParams,
    mobility: &MobilityMatrix,
    study: &StudyConfig,
) -> Result<ConvergenceTable> {
    let mut levels = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        levels.push(error_quantities(k, params, mobility, study)?);
    }
    Ok(ConvergenceTable { levels })
}

/// Initial inverse-temperature profile of the applied experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TempProfile {
    A,
    B,
    C,
}

impl std::str::FromStr for TempProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(TempProfile::A),
            "B" | "b" => Ok(TempProfile::B),
            "C" | "c" => Ok(TempProfile::C),
            other => Err(Error::InvalidArgument(format!(
                "unknown temperature profile '{other}' (expected A, B, or C)"
            ))),
        }
    }
}

/// Two-grain initial data: tanh interfaces around two circles, the
/// non-conserved field split by sign at `x = 0.35`, and one of three
/// temperature profiles.
pub fn applied_initial_data(
    space: &FemSpace,
    profile: TempProfile,
    params: &ModelParams,
) -> Result<(FeFunction, FeFunction, FeFunction)> {
    let scale = (2.0 * params.gamma_rho).sqrt();
    let rho_fn = move |x: f64, y: f64| {
        let w1 = ((x - 11.0 / 40.0).powi(2) + (y - 0.5).powi(2)).sqrt() - 0.1;
        let w2 = ((x - 5.0 / 8.0).powi(2) + (y - 0.5).powi(2)).sqrt() - 0.2;
        1.0 - 0.5 * ((-w1).max(w2) / scale).tanh() - 0.5 * ((-w2).max(w1) / scale).tanh()
    };
    let rho0 = space.interpolate(rho_fn)?;
    let eta0 = space.interpolate(move |x, y| {
        let r = rho_fn(x, y);
        if x >= 0.35 {
            0.5 * r
        } else {
            -0.5 * r
        }
    })?;
    let theta0 = match profile {
        TempProfile::A => space.interpolate(|_, _| 1.0)?,
        TempProfile::B => {
            space.interpolate(|_, y| 1.0 + 0.6 * (2.0 * std::f64::consts::PI * y).sin())?
        }
        TempProfile::C => {
            space.interpolate(|_, y| 1.0 - 0.6 * (2.0 * std::f64::consts::PI * y).sin())?
        }
    };
    Ok((rho0, theta0, eta0))
}

/// Scale and output settings of the applied run.
#[derive(Debug, Clone)]
pub struct AppliedConfig {
    pub n: usize,
    pub tau: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    pub linear_solver: SolverKind,
}

impl Default for AppliedConfig {
    fn default() -> Self {
        AppliedConfig {
            n: 64,
            tau: 4e-3,
            t_final: 10.0,
            snapshot_times: vec![0.5, 1.5, 7.5, 10.0],
            linear_solver: SolverKind::Auto,
        }
    }
}

/// Snapshots and full diagnostics series of one applied run.
#[derive(Debug, Clone)]
pub struct AppliedRun {
    pub profile: TempProfile,
    pub snapshots: Vec<State>,
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: State,
}

/// Runs the applied experiment with the sintering mobility.
pub fn applied_experiment(
    profile: TempProfile,
    params: &ModelParams,
    cfg: &AppliedConfig,
) -> Result<AppliedRun> {
    let space = FemSpace::new(build_uniform(cfg.n)?);
    let mobility = MobilityMatrix::applied();
    let scfg = SolverConfig {
        tau: cfg.tau,
        t_final: cfg.t_final,
        linear_solver: cfg.linear_solver,
        ..SolverConfig::default()
    };
    let stepper = Stepper::new(&space, params, &mobility, scfg)?;
    let (rho0, theta0, eta0) = applied_initial_data(&space, profile, params)?;
    let mut snapshots = Vec::new();
    let mut records = Vec::new();
    let snap_times = cfg.snapshot_times.clone();
    let final_state = stepper.run(rho0, theta0, eta0, |state, _, rec| {
        records.push(rec.clone());
        if snap_times.iter().any(|&ts| (state.t - ts).abs() < 1e-9) {
            snapshots.push(state.clone());
        }
    })?;
    Ok(AppliedRun { profile, snapshots, records, final_state })
}

/// Spatial variance `∫θ² − (∫θ)²` (domain area is one).
pub fn theta_variance(space: &FemSpace, theta: &FeFunction) -> f64 {
    let mean: f64 = crate::linalg::spmv(&space.mass, &theta.coeffs)
        .expect("conforming")
        .iter()
        .sum();
    space.quadratic_form(&space.mass, &theta.coeffs) - mean * mean
}
