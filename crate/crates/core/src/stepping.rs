//! Run configuration, the Newton–Raphson step driver and the time loop
//! shared by the 1D and radial schemes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::transform::{bounds_for, Grid, Profile, ProfileKind};
use crate::tridiag::Tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    BackwardEuler,
    CrankNicolson,
}

impl Integrator {
    /// Weight of the new time level in the non-time-derivative terms.
    pub fn implicit_weight(self) -> f64 {
        match self {
            Integrator::BackwardEuler => 1.0,
            Integrator::CrankNicolson => 0.5,
        }
    }
}

/// Full parameterisation of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub params: ModelParams,
    pub grid: Grid,
    pub tau: f64,
    pub t_final: f64,
    pub integrator: Integrator,
    /// Bound on the l² norm of the residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Bound on the last Newton update, relative to each node's distance from
    /// the lower end of the admissible range.
    pub step_tol: f64,
    /// Sort interior values after each Newton update.
    pub rearrange: bool,
    /// Use |Δ| instead of max(Δ, 0) for differences under fractional powers.
    pub abs_slope: bool,
    pub eps_reg: f64,
    pub delta_reg: f64,
    pub condensate_threshold: f64,
    /// How many times a failing step may be split in half (0 disables the retry).
    pub max_halvings: u32,
}

impl SolverConfig {
    /// Configuration with the documented defaults: backward Euler, Newton
    /// tolerance 1e-8, at most 50 iterations, rearrangement on, no
    /// regularisation, condensate threshold 1e-6 (1D) or 1e-10 (radial).
    pub fn new(params: ModelParams, grid: Grid, tau: f64, t_final: f64) -> Result<Self> {
        let cfg = Self {
            params,
            grid,
            tau,
            t_final,
            integrator: Integrator::BackwardEuler,
            newton_tol: 1e-8,
            newton_max_iter: 50,
            step_tol: 1e-10,
            rearrange: true,
            abs_slope: false,
            eps_reg: 0.0,
            delta_reg: 0.0,
            condensate_threshold: if params.dim == 1 { 1e-6 } else { 1e-10 },
            max_halvings: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        if !(self.newton_tol > 0.0) {
            return bad(format!("newton_tol must be positive, got {}", self.newton_tol));
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter must be at least 1".into());
        }
        if !(self.eps_reg >= 0.0 && self.delta_reg >= 0.0) {
            return bad("eps and delta must be nonnegative".into());
        }
        if !(self.condensate_threshold > 0.0) {
            return bad("condensate_threshold must be positive".into());
        }
        if self.grid.n_points < 3 {
            return bad("grid needs at least 3 points".into());
        }
        Ok(())
    }

    /// Number of time steps; zero when `t_final < tau`.
    pub fn n_steps(&self) -> usize {
        let ratio = self.t_final / self.tau;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
            nearest as usize
        } else {
            ratio.floor() as usize
        }
    }

    pub fn kind(&self) -> ProfileKind {
        Profile::kind_for(&self.params)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub newton_iterations: usize,
    pub final_residual_norm: f64,
    /// Newton updates after which sorting changed the iterate.
    pub rearrangements_applied: usize,
    /// Number of sub-steps used (1 unless the step was split).
    pub substeps: usize,
}

impl StepReport {
    fn merge(self, other: StepReport) -> StepReport {
        StepReport {
            newton_iterations: self.newton_iterations + other.newton_iterations,
            final_residual_norm: self.final_residual_norm.max(other.final_residual_norm),
            rearrangements_applied: self.rearrangements_applied + other.rearrangements_applied,
            substeps: self.substeps + other.substeps,
        }
    }
}

/// A discretisation frozen at one previous time level.
pub(crate) trait Scheme {
    /// Fills the residual `r` (length n−2) and, if given, the Jacobian.
    fn assemble(&self, u: &[f64], r: &mut [f64], jac: Option<&mut Tridiagonal>) -> Result<()>;
}

/// Newton iterations taken at full length before backtracking on the
/// residual norm kicks in. Clamping at the constraint (a flat part forming
/// or dissolving) can otherwise make the iteration cycle.
const LINE_SEARCH_AFTER: usize = 10;
const MIN_DAMPING: f64 = 1.0 / 1024.0;

/// Newton iteration for one implicit step, starting from `prev`.
///
/// Stops once at least one update has been applied, the residual norm is
/// below `newton_tol` (or the round-off floor of the system) and every node
/// moved by at most `step_tol` relative to its distance from the lower
/// bound, or the absolute update is below `step_tol` of the range and stopped
/// halving (round-off). The node-wise test matters next to a radial flat
/// part, where values of order 1e−20 carry the dynamics.
pub(crate) fn newton_solve<S: Scheme>(scheme: &S, prev: &Profile, cfg: &SolverConfig) -> Result<(Profile, StepReport)> {
    let n = prev.values.len();
    let (lo, hi) = bounds_for(prev.kind, &prev.params);
    let mut u = prev.values.clone();
    let mut r = vec![0.0; n - 2];
    let mut r_trial = vec![0.0; n - 2];
    let mut jac = Tridiagonal::zeros(n - 2);
    let mut report = StepReport { substeps: 1, ..Default::default() };
    let mut last_step = f64::INFINITY;
    let mut prev_step = f64::INFINITY;
    let mut last_rel = f64::INFINITY;
    // small absolute updates that stopped halving are round-off noise
    let stall_level = cfg.step_tol * (hi - lo);
    loop {
        scheme.assemble(&u, &mut r, Some(&mut jac))?;
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        report.final_residual_norm = norm;
        if !norm.is_finite() {
            return Err(Error::NonConvergence { residual: norm, iterations: report.newton_iterations });
        }
        if report.newton_iterations >= 1
            && norm < cfg.newton_tol.max(roundoff_floor(&jac, &u))
            && (last_rel <= cfg.step_tol
                || (report.newton_iterations >= 2 && last_step <= stall_level && last_step > 0.5 * prev_step))
        {
            break;
        }
        if report.newton_iterations >= cfg.newton_max_iter {
            return Err(Error::NonConvergence { residual: norm, iterations: report.newton_iterations });
        }
        let delta = jac.solve(&r)?;
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonConvergence { residual: norm, iterations: report.newton_iterations });
        }
        let old = u.clone();
        report.newton_iterations += 1;
        let damped = report.newton_iterations > LINE_SEARCH_AFTER;
        let mut lambda = 1.0;
        let mut best: Option<(f64, Vec<f64>, bool)> = None;
        loop {
            let mut trial = old.clone();
            for (k, d) in delta.iter().enumerate() {
                trial[k + 1] -= lambda * d;
            }
            let sorted = project(&mut trial, &old, lo, hi, cfg.rearrange);
            if !damped {
                u = trial;
                report.rearrangements_applied += sorted as usize;
                break;
            }
            let trial_norm = match scheme.assemble(&trial, &mut r_trial, None) {
                Ok(()) => r_trial.iter().map(|x| x * x).sum::<f64>().sqrt(),
                Err(_) => f64::INFINITY,
            };
            if best.as_ref().map_or(true, |b| trial_norm < b.0) {
                best = Some((trial_norm, trial, sorted));
            }
            if trial_norm < norm || lambda < MIN_DAMPING {
                let (_, t, sorted) = best.take().expect("at least one trial");
                u = t;
                report.rearrangements_applied += sorted as usize;
                break;
            }
            lambda *= 0.5;
        }
        prev_step = last_step;
        last_step = old.iter().zip(&u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        last_rel = relative_change(&old, &u, lo);
    }
    let out = Profile::new(prev.kind, prev.grid, u, prev.params)?;
    Ok((out, report))
}

/// Keeps the interior inside `[lo, hi]` and, if asked, sorts it; returns
/// whether sorting was needed.
///
/// A node overshooting the lower bound moves 90% of the way towards it
/// instead of landing on it: a stencil sitting exactly on the bound is a
/// root of the discrete system, so clamping would freeze nodes the Newton
/// iteration is still resolving.
fn project(u: &mut [f64], old: &[f64], lo: f64, hi: f64, rearrange: bool) -> bool {
    let n = u.len();
    for i in 1..n - 1 {
        if u[i] < lo {
            u[i] = lo + 0.1 * (old[i] - lo).max(0.0);
        } else if u[i] > hi {
            u[i] = hi;
        }
    }
    let interior = &mut u[1..n - 1];
    if rearrange && interior.windows(2).any(|w| w[1] < w[0]) {
        interior.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return true;
    }
    false
}

/// `max_i |a_i − b_i| / max(a_i − lo, b_i − lo)`, zero where both sit on `lo`.
fn relative_change(a: &[f64], b: &[f64], lo: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs();
            if d == 0.0 {
                0.0
            } else {
                d / (x - lo).max(y - lo)
            }
        })
        .fold(0.0, f64::max)
}

/// Residual norm attainable in floating point: `64 ε ‖J‖∞ max|u| √n`.
/// Mesh and step scalings can push it above an absolute tolerance.
fn roundoff_floor(jac: &Tridiagonal, u: &[f64]) -> f64 {
    let m = jac.diag.len();
    let mut row_max: f64 = 0.0;
    for i in 0..m {
        let mut s = jac.diag[i].abs();
        if i > 0 {
            s += jac.lower[i].abs();
        }
        if i + 1 < m {
            s += jac.upper[i].abs();
        }
        row_max = row_max.max(s);
    }
    let u_max = u.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    64.0 * f64::EPSILON * row_max * u_max * (m as f64).sqrt()
}

/// Receives the state after every accepted step (and once for the initial datum).
pub trait Observer {
    fn observe(&mut self, step: usize, time: f64, profile: &Profile, report: Option<&StepReport>) -> Result<()>;
}

/// Outcome of a time loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub profile: Profile,
    pub time: f64,
    pub steps: usize,
    pub newton_iterations: usize,
    pub rearrangements: usize,
    pub max_residual: f64,
}

/// Advances by one step of size `tau`, splitting into halves on Newton failure
/// while `depth < cfg.max_halvings`.
pub(crate) fn advance<F>(prev: &Profile, tau: f64, depth: u32, cfg: &SolverConfig, step: &F) -> Result<(Profile, StepReport)>
where
    F: Fn(&Profile, f64) -> Result<(Profile, StepReport)>,
{
    match step(prev, tau) {
        Ok(out) => Ok(out),
        Err(e) if e.is_nonconvergence() && depth < cfg.max_halvings => {
            let (mid, r1) = advance(prev, 0.5 * tau, depth + 1, cfg, step)?;
            let (out, r2) = advance(&mid, 0.5 * tau, depth + 1, cfg, step)?;
            Ok((out, r1.merge(r2)))
        }
        Err(e) => Err(e),
    }
}

pub(crate) fn run_loop<F>(
    u0: &Profile,
    cfg: &SolverConfig,
    observers: &mut [&mut dyn Observer],
    step: F,
) -> Result<Evolution>
where
    F: Fn(&Profile, f64) -> Result<(Profile, StepReport)>,
{
    cfg.validate()?;
    u0.check()?;
    if u0.grid != cfg.grid || u0.params != cfg.params {
        return Err(Error::InvalidParameter("initial profile does not match the solver configuration".into()));
    }
    let n_steps = cfg.n_steps();
    let mut evo = Evolution {
        profile: u0.clone(),
        time: 0.0,
        steps: 0,
        newton_iterations: 0,
        rearrangements: 0,
        max_residual: 0.0,
    };
    if n_steps == 0 {
        return Ok(evo);
    }
    for obs in observers.iter_mut() {
        obs.observe(0, 0.0, &evo.profile, None)?;
    }
    for k in 1..=n_steps {
        let time = k as f64 * cfg.tau;
        let (next, report) = advance(&evo.profile, cfg.tau, 0, cfg, &step)
            .map_err(|e| Error::StepFailed { step: k, time, source: Box::new(e) })?;
        evo.profile = next;
        evo.time = time;
        evo.steps = k;
        evo.newton_iterations += report.newton_iterations;
        evo.rearrangements += report.rearrangements_applied;
        evo.max_residual = evo.max_residual.max(report.final_residual_norm);
        for obs in observers.iter_mut() {
            obs.observe(k, time, &evo.profile, Some(&report))?;
        }
    }
    Ok(evo)
}

/// One implicit step for either scheme, chosen by `cfg.params.dim`.
pub fn solve_step(prev: &Profile, cfg: &SolverConfig) -> Result<(Profile, StepReport)> {
    step_with_tau(prev, cfg, cfg.tau)
}

pub(crate) fn step_with_tau(prev: &Profile, cfg: &SolverConfig, tau: f64) -> Result<(Profile, StepReport)> {
    match prev.kind {
        ProfileKind::InverseCdf1D => crate::solver1d::step_1d_tau(prev, cfg, tau),
        ProfileKind::RadialNormalized(_) => crate::radial::step_radial_tau(prev, cfg, tau),
    }
}

/// Time loop for either scheme.
pub fn evolve(u0: &Profile, cfg: &SolverConfig, observers: &mut [&mut dyn Observer]) -> Result<Evolution> {
    run_loop(u0, cfg, observers, |p, tau| step_with_tau(p, cfg, tau))
}
