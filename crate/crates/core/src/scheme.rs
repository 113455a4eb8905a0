//! Fully discrete time stepper: backward differences in time with a
//! convex–concave splitting of the potential, one damped Newton solve per
//! step on the coupled five-field system.
//!
//! Unknowns are blocked by field, `[ρ; μ_ρ; θ; η; μ_η]`, giving a 5×5 block
//! Jacobian built from mass, stiffness, gradient-coupling, and state-weighted
//! mass matrices. The energy equation differences the internal energy at the
//! complete old and new states, which is what makes the discrete entropy
//! balance telescope.

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::fem::{FeFunction, FemSpace};
use crate::linalg::{block_compose, norm2, solve, spmv_acc, CsrMatrix, LinearSolveReport, SolverKind};
use crate::model::{
    d2psi, dpsi, dpsi_split, internal_energy, validate_split, MobilityMatrix, ModelParams,
};

/// One time level of the five coupled fields.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub rho: FeFunction,
    pub mu_rho: FeFunction,
    pub theta: FeFunction,
    pub eta: FeFunction,
    pub mu_eta: FeFunction,
}

impl State {
    pub fn num_nodes(&self) -> usize {
        self.rho.coeffs.len()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(5 * self.num_nodes());
        for f in [&self.rho, &self.mu_rho, &self.theta, &self.eta, &self.mu_eta] {
            u.extend_from_slice(&f.coeffs);
        }
        u
    }

    fn from_flat(t: f64, u: &[f64], nn: usize) -> State {
        let f = |k: usize| FeFunction::new(u[k * nn..(k + 1) * nn].to_vec());
        State {
            t,
            rho: f(0),
            mu_rho: f(1),
            theta: f(2),
            eta: f(3),
            mu_eta: f(4),
        }
    }

    /// Smallest nodal value of θ.
    pub fn theta_min(&self) -> f64 {
        self.theta.coeffs.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Time stepping and Newton parameters.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub tau: f64,
    pub t_final: f64,
    pub newton_rtol: f64,
    pub newton_atol: f64,
    pub max_newton_iters: usize,
    /// Backtracking factor for the damped Newton line search.
    pub damping_factor: f64,
    pub max_halvings: usize,
    /// Trial iterates with nodal θ below `(1 − θ_floor) · min θ_old` are
    /// rejected and damped.
    pub theta_floor: f64,
    pub linear_solver: SolverKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: 1e-3,
            t_final: 0.16,
            newton_rtol: 1e-10,
            newton_atol: 1e-12,
            max_newton_iters: 50,
            damping_factor: 0.5,
            max_halvings: 30,
            theta_floor: 0.9,
            linear_solver: SolverKind::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument("time step must be positive".into()));
        }
        if !(self.newton_rtol > 0.0 && self.newton_atol > 0.0) {
            return Err(Error::InvalidArgument("Newton tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one nonlinear solve.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub newton_iters: usize,
    /// Euclidean residual norm after each Newton iteration, starting with
    /// the initial guess.
    pub residual_history: Vec<f64>,
    /// Final residual 2-norm per equation block (ρ, μ_ρ, e, η, μ_η).
    pub block_residuals: [f64; 5],
    pub damping_events: usize,
    pub linear_reports: Vec<LinearSolveReport>,
}

impl StepReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Cached incomplete factors are refreshed after this many time steps.
const PRECOND_REFRESH_STEPS: usize = 8;

/// Owns the assembled constant operators for one (mesh, mobility, τ) triple.
pub struct Stepper<'a> {
    pub space: &'a FemSpace,
    pub params: &'a ModelParams,
    pub mobility: &'a MobilityMatrix,
    pub cfg: SolverConfig,
    lin_cache: std::cell::RefCell<crate::linalg::IterativeCache>,
    // τ-scaled constant blocks
    tk11: CsrMatrix,
    tk12: CsrMatrix,
    neg_tk12: CsrMatrix,
    tk22: CsrMatrix,
    tg13: CsrMatrix,
    tg23: CsrMatrix,
    tgt13: CsrMatrix,
    tgt23: CsrMatrix,
    tl33m: CsrMatrix,
    gk_rho: CsrMatrix,
    gk_eta: CsrMatrix,
}

fn scaled(m: &CsrMatrix, s: f64) -> CsrMatrix {
    let mut out = m.clone();
    out.scale(s);
    out
}

impl<'a> Stepper<'a> {
    pub fn new(
        space: &'a FemSpace,
        params: &'a ModelParams,
        mobility: &'a MobilityMatrix,
        cfg: SolverConfig,
    ) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        validate_split(params)?;
        let tau = cfg.tau;
        let k11 = space.aniso_stiffness(mobility.l11());
        let k12 = space.aniso_stiffness(mobility.l12());
        let k22 = space.aniso_stiffness(mobility.l22());
        let g13 = space.grad_coupling(mobility.l13());
        let g23 = space.grad_coupling(mobility.l23());
        Ok(Stepper {
            lin_cache: std::cell::RefCell::new(crate::linalg::IterativeCache::new()),
            space,
            params,
            mobility,
            tk11: scaled(&k11, tau),
            tk12: scaled(&k12, tau),
            neg_tk12: scaled(&k12, -tau),
            tk22: scaled(&k22, tau),
            tg13: scaled(&g13, tau),
            tg23: scaled(&g23, tau),
            tgt13: scaled(&g13.transpose(), tau),
            tgt23: scaled(&g23.transpose(), tau),
            tl33m: scaled(&space.mass, tau * mobility.l33()),
            gk_rho: scaled(&space.stiffness, params.gamma_rho),
            gk_eta: scaled(&space.stiffness, params.gamma_eta),
            cfg,
        })
    }

    fn check_theta_positive(&self, theta: &FeFunction) -> Result<()> {
        for (node, &v) in theta.coeffs.iter().enumerate() {
            if !(v > 0.0) {
                return Err(Error::NonPositiveTheta { node, value: v });
            }
        }
        Ok(())
    }

    /// Internal-energy load vector `b_e(state)_i = ∫ e(ρ,θ,η) φ_i dx`.
    fn energy_load(&self, rho: &FeFunction, theta: &FeFunction, eta: &FeFunction) -> Result<Vec<f64>> {
        let p = self.params;
        self.space.weighted_load(&[rho, theta, eta], |v| {
            internal_energy(v[0], v[1], v[2], p).unwrap_or(f64::NAN)
        })
    }

    /// Galerkin residual of the five scheme equations, τ-scaled (the flux
    /// terms carry the factor τ, the time differences appear unscaled).
    pub fn residual(&self, old: &State, guess: &State) -> Result<Vec<f64>> {
        self.check_theta_positive(&guess.theta)?;
        let nn = self.space.num_nodes();
        let p = self.params;
        let m = &self.space.mass;
        let mut f = vec![0.0; 5 * nn];

        // block 1: ⟨ρ' − ρ, v⟩ + τ⟨L₁₁∇μ' − L₁₂∇θ' + μ_η'L₁₃, ∇v⟩
        {
            let (f1, _) = f.split_at_mut(nn);
            spmv_acc(m, &guess.rho.coeffs, 1.0, f1);
            spmv_acc(m, &old.rho.coeffs, -1.0, f1);
            spmv_acc(&self.tk11, &guess.mu_rho.coeffs, 1.0, f1);
            spmv_acc(&self.tk12, &guess.theta.coeffs, -1.0, f1);
            spmv_acc(&self.tg13, &guess.mu_eta.coeffs, 1.0, f1);
        }
        // block 2: ⟨μ', v⟩ − γ_ρ⟨∇ρ', ∇v⟩ − ⟨∂_ρψ_split, v⟩
        {
            let b = self.space.weighted_load(
                &[&guess.rho, &old.rho, &guess.theta, &guess.eta, &old.eta],
                |v| dpsi_split(v[0], v[1], v[2], v[3], v[4], p).map(|d| d.0).unwrap_or(f64::NAN),
            )?;
            let f2 = &mut f[nn..2 * nn];
            spmv_acc(m, &guess.mu_rho.coeffs, 1.0, f2);
            spmv_acc(&self.gk_rho, &guess.rho.coeffs, -1.0, f2);
            for (fv, bv) in f2.iter_mut().zip(&b) {
                *fv -= bv;
            }
        }
        // block 3: ⟨e' − e, v⟩ + τ⟨L₁₂∇μ' − L₂₂∇θ' + μ_η'L₂₃, ∇v⟩
        {
            let be_new = self.energy_load(&guess.rho, &guess.theta, &guess.eta)?;
            let be_old = self.energy_load(&old.rho, &old.theta, &old.eta)?;
            let f3 = &mut f[2 * nn..3 * nn];
            for ((fv, a), b) in f3.iter_mut().zip(&be_new).zip(&be_old) {
                *fv += a - b;
            }
            spmv_acc(&self.tk12, &guess.mu_rho.coeffs, 1.0, f3);
            spmv_acc(&self.tk22, &guess.theta.coeffs, -1.0, f3);
            spmv_acc(&self.tg23, &guess.mu_eta.coeffs, 1.0, f3);
        }
        // block 4: ⟨η' − η, v⟩ + τ⟨L₁₃·∇μ' − L₂₃·∇θ' + L₃₃μ_η', v⟩
        {
            let f4 = &mut f[3 * nn..4 * nn];
            spmv_acc(m, &guess.eta.coeffs, 1.0, f4);
            spmv_acc(m, &old.eta.coeffs, -1.0, f4);
            spmv_acc(&self.tgt13, &guess.mu_rho.coeffs, 1.0, f4);
            spmv_acc(&self.tgt23, &guess.theta.coeffs, -1.0, f4);
            spmv_acc(&self.tl33m, &guess.mu_eta.coeffs, 1.0, f4);
        }
        // block 5: ⟨μ_η', v⟩ − γ_η⟨∇η', ∇v⟩ − ⟨∂_ηψ_split, v⟩
        {
            let b = self.space.weighted_load(
                &[&guess.rho, &old.rho, &guess.theta, &guess.eta, &old.eta],
                |v| dpsi_split(v[0], v[1], v[2], v[3], v[4], p).map(|d| d.1).unwrap_or(f64::NAN),
            )?;
            let f5 = &mut f[4 * nn..5 * nn];
            spmv_acc(m, &guess.mu_eta.coeffs, 1.0, f5);
            spmv_acc(&self.gk_eta, &guess.eta.coeffs, -1.0, f5);
            for (fv, bv) in f5.iter_mut().zip(&b) {
                *fv -= bv;
            }
        }
        Ok(f)
    }

    /// Exact linearization of [`Self::residual`] in the new-level unknowns.
    pub fn jacobian(&self, _old: &State, guess: &State) -> Result<CsrMatrix> {
        self.check_theta_positive(&guess.theta)?;
        let p = self.params;
        let m = &self.space.mass;
        let fields: [&FeFunction; 3] = [&guess.rho, &guess.theta, &guess.eta];
        let hess = |pick: fn(&crate::model::PsiHessian) -> f64, shift: f64| {
            self.space.weighted_mass(&fields, move |v| {
                d2psi(v[0], v[1], v[2], p).map(|h| pick(&h) + shift).unwrap_or(f64::NAN)
            })
        };
        let alpha = p.alpha;
        let n_rr = hess(|h| h.rr, alpha)?;
        let n_rt = hess(|h| h.rt, 0.0)?;
        let n_re = hess(|h| h.re, 0.0)?;
        let n_tt = hess(|h| h.tt, 0.0)?;
        let n_te = hess(|h| h.te, 0.0)?;
        let n_ee = hess(|h| h.ee, alpha)?;

        let j21 = {
            let mut a = scaled(&n_rr, -1.0);
            a = add_csr(&a, &scaled(&self.gk_rho, -1.0));
            a
        };
        let j23 = scaled(&n_rt, -1.0);
        let j24 = scaled(&n_re, -1.0);
        let j33 = add_csr(&n_tt, &scaled(&self.tk22, -1.0));
        let j51 = scaled(&n_re, -1.0);
        let j53 = scaled(&n_te, -1.0);
        let j54 = {
            let mut a = scaled(&n_ee, -1.0);
            a = add_csr(&a, &scaled(&self.gk_eta, -1.0));
            a
        };
        let j43 = neg(&self.tgt23);
        let grid: Vec<Vec<Option<&CsrMatrix>>> = vec![
            vec![Some(m), Some(&self.tk11), Some(&self.neg_tk12), None, Some(&self.tg13)],
            vec![Some(&j21), Some(m), Some(&j23), Some(&j24), None],
            vec![Some(&n_rt), Some(&self.tk12), Some(&j33), Some(&n_te), Some(&self.tg23)],
            vec![None, Some(&self.tgt13), Some(&j43), Some(m), Some(&self.tl33m)],
            vec![Some(&j51), None, Some(&j53), Some(&j54), Some(m)],
        ];
        block_compose(&grid)
    }

    /// Per-block 2-norms of a flat residual vector.
    fn block_norms(&self, f: &[f64]) -> [f64; 5] {
        let nn = self.space.num_nodes();
        std::array::from_fn(|k| norm2(&f[k * nn..(k + 1) * nn]))
    }

    /// One implicit step from `old`; returns the accepted new state.
    pub fn step(&self, old: &State) -> Result<(State, StepReport)> {
        self.step_from(old, None)
    }

    /// [`Self::step`] with an explicit Newton starting guess (for example a
    /// predictor extrapolated from earlier steps); falls back to the old
    /// state when the hint violates θ-positivity.
    pub fn step_from(&self, old: &State, hint: Option<&State>) -> Result<(State, StepReport)> {
        let nn = self.space.num_nodes();
        let theta_floor = (1.0 - self.cfg.theta_floor) * old.theta_min();
        let t_new = old.t + self.cfg.tau;
        let mut u = match hint {
            Some(h) if h.theta_min() > theta_floor => h.to_flat(),
            _ => old.to_flat(),
        };
        let mut guess = State::from_flat(t_new, &u, nn);
        let mut f = self.residual(old, &guess)?;
        let mut fnorm = norm2(&f);
        let target = self.cfg.newton_atol + self.cfg.newton_rtol * fnorm;
        let mut report = StepReport {
            newton_iters: 0,
            residual_history: vec![fnorm],
            block_residuals: self.block_norms(&f),
            damping_events: 0,
            linear_reports: Vec::new(),
        };
        let mut converged = fnorm <= target;
        let mut fnorm_prev = fnorm;
        let mut polished = false;
        let mut last_jac: Option<CsrMatrix> = None;
        while report.newton_iters < self.cfg.max_newton_iters {
            if converged && polished {
                break;
            }
            if converged {
                // one extra full Newton iteration drives the per-step
                // conservation defects to rounding level
                polished = true;
            }
            // the polish iteration reuses the previous Jacobian: the iterate
            // moved by O(target) only, and contraction is all polish needs
            let jac = match (converged, last_jac.take()) {
                (true, Some(j)) => j,
                _ => self.jacobian(old, &guess)?,
            };
            let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
            // inexact Newton: early iterates only need as many digits as the
            // quadratic contraction can use, never looser than the distance
            // to the overall target; the converged-state polish solve goes to
            // the linear solver's floor to pin the conservation defects
            let lin_tol = if converged {
                // the rhs here is the already-converged residual (~1e-10 of
                // the initial one), so a few linear digits suffice to push
                // the conservation defects to rounding level
                1e-9
            } else {
                let contraction = 0.5 * (fnorm / fnorm_prev).powi(2);
                contraction.min(1e-4).max(0.1 * target / fnorm).clamp(1e-12, 1e-4)
            };
            let mut cache = self.lin_cache.borrow_mut();
            let (delta, lin) =
                crate::linalg::solve_cached(&jac, &rhs, lin_tol, self.cfg.linear_solver, Some(&mut cache))
                    .map_err(|e| Error::StepFailed { step: 0, source: Box::new(e) })?;
            drop(cache);
            report.linear_reports.push(lin);
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..=self.cfg.max_halvings {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + s * b).collect();
                let trial_state = State::from_flat(t_new, &trial, nn);
                if trial_state.theta_min() <= theta_floor {
                    report.damping_events += 1;
                    s *= self.cfg.damping_factor;
                    continue;
                }
                let trial_f = match self.residual(old, &trial_state) {
                    Ok(v) => v,
                    Err(_) => {
                        report.damping_events += 1;
                        s *= self.cfg.damping_factor;
                        continue;
                    }
                };
                let trial_norm = norm2(&trial_f);
                // accept a polishing step even if rounding makes the norm tick up
                if trial_norm < fnorm || converged {
                    u = trial;
                    guess = trial_state;
                    f = trial_f;
                    fnorm_prev = fnorm;
                    fnorm = trial_norm;
                    accepted = true;
                    break;
                }
                report.damping_events += 1;
                s *= self.cfg.damping_factor;
            }
            if !accepted {
                if converged {
                    break; // keep the converged iterate; polishing failed
                }
                return Err(Error::ThetaFloor { halvings: self.cfg.max_halvings });
            }
            report.newton_iters += 1;
            report.residual_history.push(fnorm);
            if fnorm <= target {
                converged = true;
                last_jac = Some(jac);
            }
        }
        report.block_residuals = self.block_norms(&f);
        if !converged {
            return Err(Error::NewtonNonConvergence {
                iterations: report.newton_iters,
                residual: fnorm,
            });
        }
        Ok((guess, report))
    }

    /// Chemical potentials consistent with given (ρ, θ, η): solves the two
    /// linear variational identities at coincident time levels.
    pub fn initialize_state(
        &self,
        rho: FeFunction,
        theta: FeFunction,
        eta: FeFunction,
    ) -> Result<State> {
        self.check_theta_positive(&theta)?;
        let p = self.params;
        let nn = self.space.num_nodes();
        let mut rhs_r = vec![0.0; nn];
        let mut rhs_e = vec![0.0; nn];
        let b_r = self.space.weighted_load(&[&rho, &theta, &eta], |v| {
            dpsi(v[0], v[1], v[2], p).map(|d| d.0).unwrap_or(f64::NAN)
        })?;
        let b_e = self.space.weighted_load(&[&rho, &theta, &eta], |v| {
            dpsi(v[0], v[1], v[2], p).map(|d| d.2).unwrap_or(f64::NAN)
        })?;
        spmv_acc(&self.gk_rho, &rho.coeffs, 1.0, &mut rhs_r);
        spmv_acc(&self.gk_eta, &eta.coeffs, 1.0, &mut rhs_e);
        for i in 0..nn {
            rhs_r[i] += b_r[i];
            rhs_e[i] += b_e[i];
        }
        let (mu_rho, _) = solve(&self.space.mass, &rhs_r, 1e-12, SolverKind::Direct)?;
        let (mu_eta, _) = solve(&self.space.mass, &rhs_e, 1e-12, SolverKind::Direct)?;
        Ok(State {
            t: 0.0,
            rho,
            mu_rho: FeFunction::new(mu_rho),
            theta,
            eta,
            mu_eta: FeFunction::new(mu_eta),
        })
    }

    /// Runs from `t = 0` to `t_final`, invoking the observer after every
    /// accepted step with the new state, the step report, and per-step
    /// diagnostics.
    pub fn run<Obs>(
        &self,
        rho0: FeFunction,
        theta0: FeFunction,
        eta0: FeFunction,
        mut observer: Obs,
    ) -> Result<State>
    where
        Obs: FnMut(&State, &StepReport, &DiagnosticsRecord),
    {
        let n_steps = (self.cfg.t_final / self.cfg.tau).round() as usize;
        if (n_steps as f64 * self.cfg.tau - self.cfg.t_final).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "t_final {} is not an integer multiple of tau {}",
                self.cfg.t_final, self.cfg.tau
            )));
        }
        let mut state = self.initialize_state(rho0, theta0, eta0)?;
        let mut prev: Option<State> = None;
        for step_idx in 0..n_steps {
            if step_idx % PRECOND_REFRESH_STEPS == 0 {
                self.lin_cache.borrow_mut().invalidate();
            }
            // linear predictor from the two previous levels
            let hint = prev.as_ref().map(|pv| {
                let mut h = state.clone();
                let h_fields =
                    [&mut h.rho, &mut h.mu_rho, &mut h.theta, &mut h.eta, &mut h.mu_eta];
                let pv_fields = [&pv.rho, &pv.mu_rho, &pv.theta, &pv.eta, &pv.mu_eta];
                for (hf, pf) in h_fields.into_iter().zip(pv_fields) {
                    for (hv, pvv) in hf.coeffs.iter_mut().zip(&pf.coeffs) {
                        *hv += *hv - pvv;
                    }
                }
                h
            });
            let (new_state, report) =
                self.step_from(&state, hint.as_ref()).map_err(|e| Error::StepFailed {
                    step: step_idx,
                    source: Box::new(e),
                })?;
            prev = Some(state.clone());
            let rec = diagnostics::record(self, &state, &new_state, &report)?;
            observer(&new_state, &report, &rec);
            state = new_state;
        }
        Ok(state)
    }
}

fn neg(m: &CsrMatrix) -> CsrMatrix {
    scaled(m, -1.0)
}

/// Sparse sum of two conforming matrices.
fn add_csr(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    debug_assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    let mut trips = Vec::with_capacity(a.nnz() + b.nnz());
    for m in [a, b] {
        for r in 0..m.rows {
            for k in m.row_offsets[r]..m.row_offsets[r + 1] {
                trips.push((r, m.col_indices[k], m.values[k]));
            }
        }
    }
    CsrMatrix::from_triplets(a.rows, a.cols, &trips)
}
