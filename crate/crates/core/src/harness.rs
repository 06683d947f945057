//! Preset catalogue and convergence studies.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::oracle2d::{choose_r1, ExactSolution2D, Oracle2DConfig};
use crate::quad;
use crate::stepping::{evolve, Evolution, Integrator, Observer, SolverConfig, StepReport};
use crate::transform::{inverse_cdf_from_density, Grid, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PresetId {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    Val1D,
    Val2DA,
    Val2DB,
}

impl PresetId {
    pub const ALL: [PresetId; 10] = [
        PresetId::P1,
        PresetId::P2,
        PresetId::P3,
        PresetId::P4,
        PresetId::P5,
        PresetId::P6,
        PresetId::P7,
        PresetId::Val1D,
        PresetId::Val2DA,
        PresetId::Val2DB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PresetId::P1 => "P1",
            PresetId::P2 => "P2",
            PresetId::P3 => "P3",
            PresetId::P4 => "P4",
            PresetId::P5 => "P5",
            PresetId::P6 => "P6",
            PresetId::P7 => "P7",
            PresetId::Val1D => "VAL1D",
            PresetId::Val2DA => "VAL2D-A",
            PresetId::Val2DB => "VAL2D-B",
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetId::ALL
            .iter()
            .copied()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Gaussian initial datum `A e^{−|v−v0|²/(2σ²)} + background`
/// (radial data use `r` in place of `v` and ignore `v0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialDatum {
    pub amp: f64,
    pub sigma: f64,
    pub v0: f64,
    pub background: f64,
}

impl InitialDatum {
    pub fn gaussian(amp: f64, sigma: f64) -> Self {
        Self { amp, sigma, v0: 0.0, background: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amp > 0.0 && self.sigma > 0.0 && self.background >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "initial datum needs A > 0, sigma > 0, background ≥ 0; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn density(&self, x: f64) -> f64 {
        let y = x - self.v0;
        self.amp * (-y * y / (2.0 * self.sigma * self.sigma)).exp() + self.background
    }

    /// Mass on the domain (radial convention for d ≥ 2).
    pub fn mass(&self, params: &ModelParams) -> f64 {
        let r1 = params.r1;
        if params.dim == 1 {
            let mut breaks = vec![-r1, r1];
            if self.v0 > -r1 && self.v0 < r1 {
                breaks.insert(1, self.v0);
            }
            quad::integrate_breaks(|v| self.density(v), &breaks, 1e-14).value
        } else {
            let k = (params.dim - 1) as i32;
            let d = InitialDatum { v0: 0.0, ..*self };
            let mut breaks = vec![0.0, r1];
            if self.sigma < r1 {
                breaks.insert(1, self.sigma);
            }
            quad::integrate_breaks(|r| d.density(r) * r.powi(k), &breaks, 1e-14).value
        }
    }

    /// Pseudo-inverse CDF of the datum on a grid with `n` points.
    pub fn profile(&self, params: &ModelParams, n: usize) -> Result<Profile> {
        self.profile_on(params, &Grid::new(n, self.mass(params))?)
    }

    /// Pseudo-inverse CDF on a given grid, whose total mass must agree with
    /// the datum's to the tolerance of the inversion.
    pub fn profile_on(&self, params: &ModelParams, grid: &Grid) -> Result<Profile> {
        self.validate()?;
        let d = if params.dim == 1 { *self } else { InitialDatum { v0: 0.0, ..*self } };
        let f = move |x: f64| d.density(x);
        inverse_cdf_from_density(&f, params, grid)
    }
}

/// A fully specified run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub id: PresetId,
    pub config: SolverConfig,
    pub init: InitialDatum,
    /// Amplitude as listed for the run; `init.amp` differs when the datum is
    /// rescaled to a quoted mass.
    pub nominal_amp: f64,
    /// Entropy decay rate quoted for this run, if any.
    pub paper_alpha: Option<f64>,
    /// Default fit window for the entropy decay rate.
    pub decay_window: (f64, f64),
    pub description: &'static str,
}

struct Spec {
    /// Rescale the amplitude so the datum carries this mass.
    target_mass: Option<f64>,
    gamma: f64,
    dim: usize,
    r1: f64,
    init: InitialDatum,
    t_final: f64,
    tau: f64,
    n: usize,
    eps: f64,
    delta: f64,
}

fn build(id: PresetId, s: Spec, alpha: Option<f64>, window: (f64, f64), description: &'static str) -> Result<Preset> {
    let params = ModelParams::new(s.gamma, s.dim, s.r1)?;
    let mut s = s;
    let nominal_amp = s.init.amp;
    if let Some(target) = s.target_mass {
        s.init.amp *= target / s.init.mass(&params);
    }
    let mass = match id {
        PresetId::Val2DA | PresetId::Val2DB => Oracle2DConfig::new(s.init.amp, s.init.sigma, s.r1)?.initial_mass(),
        _ => s.init.mass(&params),
    };
    let grid = Grid::new(s.n, mass)?;
    let mut config = SolverConfig::new(params, grid, s.tau, s.t_final)?;
    config.eps_reg = s.eps;
    config.delta_reg = s.delta;
    Ok(Preset { id, config, init: s.init, nominal_amp, paper_alpha: alpha, decay_window: window, description })
}

/// The catalogue of runs.
pub fn preset(id: PresetId) -> Result<Preset> {
    let g = InitialDatum::gaussian;
    let one_d = |init, t_final, tau, n| Spec { target_mass: None, gamma: 2.9, dim: 1, r1: 1.0, init, t_final, tau, n, eps: 0.0, delta: 0.0 };
    // the 3D amplitudes are rescaled to the quoted masses m̄ = 0.335, 2.59, 1.41
    let three_d = |init, mass, t_final, tau, n, eps, delta| Spec {
        target_mass: Some(mass),
        gamma: 1.0,
        dim: 3,
        r1: 1.0,
        init,
        t_final,
        tau,
        n,
        eps,
        delta,
    };
    let val2d = |tau| Spec {
        target_mass: None,
        gamma: 1.0,
        dim: 2,
        r1: choose_r1(1e-4),
        init: g(4.0, 0.9),
        t_final: 0.04,
        tau,
        n: 26,
        eps: 0.0,
        delta: 0.0,
    };
    match id {
        PresetId::P1 => build(id, one_d(g(4.5, 0.7), 0.4, 1e-3, 2001), Some(23.7), (0.05, 0.35), "1D, m > m_c"),
        PresetId::P2 => build(
            id,
            one_d(InitialDatum { amp: 4.5, sigma: 0.7, v0: -1.0, background: 0.1 }, 0.4, 1e-3, 2001),
            Some(23.0),
            (0.05, 0.35),
            "1D, shifted Gaussian plus background",
        ),
        PresetId::P3 => build(id, one_d(g(1.5, 0.7), 0.4, 1e-3, 2001), Some(23.8), (0.05, 0.35), "1D, m < m_c"),
        PresetId::P4 => build(
            id,
            one_d(g(1.5, 0.1), 0.4, 1e-6, 10001),
            Some(23.1),
            (0.1, 0.35),
            "1D, concentrated, m < m_c (transient condensate)",
        ),
        PresetId::P5 => build(id, three_d(g(3.0, 0.3), 0.335, 0.2, 1e-3, 2001, 0.0, 0.0), Some(35.3), (0.02, 0.15), "3D KQ, m < m_c"),
        PresetId::P6 => build(
            id,
            three_d(g(10.0, 0.9), 2.59, 0.25, 5e-6, 50001, 1e-12, 0.0),
            Some(21.1),
            (0.05, 0.2),
            "3D KQ, m > m_c",
        ),
        PresetId::P7 => build(
            id,
            three_d(g(50.0, 0.15), 1.41, 0.25, 5e-5, 2001, 1e-10, 1e-10),
            Some(21.7),
            (0.1, 0.22),
            "3D KQ, concentrated, m < m_c (transient condensate)",
        ),
        PresetId::Val1D => build(id, one_d(g(4.5, 0.7), 0.025, 0.025 / 1000.0, 12801), None, (0.0, 0.025), "1D validation"),
        PresetId::Val2DA => build(id, val2d(0.04 / 4000.0), None, (0.0, 0.04), "2D exact validation, final time"),
        PresetId::Val2DB => build(id, val2d(0.04 / 4.0), None, (0.0, 0.04), "2D exact validation, space-time"),
    }
}

pub fn preset_by_name(name: &str) -> Result<Preset> {
    preset(name.parse()?)
}

/// Which error a convergence study measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudyMode {
    FinalTimeL2,
    SpaceTimeL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reference {
    FineMesh,
    Exact2D,
}

/// Scaling of the discrete l² error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// `√h · ‖e‖` (final time) or `√(hτ) · ‖e‖` (space-time).
    DiscreteNorm,
    /// `2^{−j} ‖e‖` (final time) or `2^{−2j} ‖e‖` (space-time).
    LevelPowers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub time_points: usize,
    pub mesh_size: usize,
    pub error: f64,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub mode: StudyMode,
    pub reference: Reference,
    pub normalization: Normalization,
    /// Set when a sub-run failed; rows stop before the failing level.
    pub failure: Option<String>,
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub fn rates(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.rate).collect()
    }
}

/// `rate_j = log2(E_{j−1} / E_j)` for `j ≥ 1`.
pub fn rates(errors: &[f64]) -> Vec<Option<f64>> {
    (0..errors.len()).map(|j| if j == 0 { None } else { Some((errors[j - 1] / errors[j]).log2()) }).collect()
}

fn assemble_rows(levels: &[(usize, usize)], errors: &[f64]) -> Vec<ConvergenceRow> {
    let r = rates(errors);
    levels
        .iter()
        .zip(errors)
        .zip(r)
        .map(|((&(tp, m), &e), rate)| ConvergenceRow { time_points: tp, mesh_size: m, error: e, rate })
        .collect()
}

/// Number of worker threads, from `CONDENSATE_LAB_THREADS` if set.
pub fn thread_budget() -> usize {
    std::env::var("CONDENSATE_LAB_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(thread_budget()).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Records the profile at prescribed step indices.
struct Sampler {
    every: usize,
    samples: Vec<Vec<f64>>,
}

impl Observer for Sampler {
    fn observe(&mut self, step: usize, _t: f64, profile: &Profile, _r: Option<&StepReport>) -> Result<()> {
        if step > 0 && step % self.every == 0 {
            self.samples.push(profile.values.clone());
        }
        Ok(())
    }
}

/// Settings of the 1D self-convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConvergence1D {
    /// Coarsest mesh has `base_intervals + 1` points.
    pub base_intervals: usize,
    /// Reference mesh has `base_intervals · 2^ref_doublings + 1` points.
    pub ref_doublings: u32,
    /// Time steps of every run in the final-time study.
    pub final_time_steps: usize,
    /// Coarsest time-step count of the space-time study.
    pub base_time_steps: usize,
    /// Time steps of the reference run in the space-time study.
    pub reference_time_steps: usize,
    pub normalization: Normalization,
}

impl Default for SelfConvergence1D {
    /// The paper-scale setup: meshes 50·2^j, reference on 12801 points, 1000 steps.
    fn default() -> Self {
        Self {
            base_intervals: 50,
            ref_doublings: 8,
            final_time_steps: 1000,
            base_time_steps: 10,
            reference_time_steps: 10 * 2usize.pow(8),
            normalization: Normalization::DiscreteNorm,
        }
    }
}

impl SelfConvergence1D {
    /// The reduced-scale setup: reference on 3201 points, 500 steps.
    pub fn reduced() -> Self {
        Self {
            base_intervals: 50,
            ref_doublings: 6,
            final_time_steps: 500,
            base_time_steps: 10,
            reference_time_steps: 10 * 2usize.pow(6),
            normalization: Normalization::DiscreteNorm,
        }
    }
}

fn run_sampled(init: &InitialDatum, base: &SolverConfig, n: usize, steps: usize, every: usize) -> Result<(Evolution, Vec<Vec<f64>>)> {
    let u0 = init.profile(&base.params, n)?;
    let mut cfg = base.clone();
    cfg.grid = u0.grid;
    cfg.tau = base.t_final / steps as f64;
    let mut sampler = Sampler { every, samples: Vec::new() };
    let evo = evolve(&u0, &cfg, &mut [&mut sampler])?;
    Ok((evo, sampler.samples))
}

/// Self-convergence of the 1D scheme against a fine-mesh reference.
///
/// Level `j` uses `base_intervals·2^j + 1` points; coarse nodes are compared
/// with the nested reference nodes. In the space-time mode level `j` also
/// uses `base_time_steps·2^j` steps and the error is summed over those time
/// points.
pub fn self_convergence_1d(
    base: &SolverConfig,
    init: &InitialDatum,
    levels: usize,
    mode: StudyMode,
    study: &SelfConvergence1D,
) -> Result<ConvergenceReport> {
    if levels == 0 {
        return Err(Error::InvalidParameter("levels must be at least 1".into()));
    }
    if levels as u32 > study.ref_doublings {
        return Err(Error::InvalidParameter("reference must be finer than every level".into()));
    }
    let ref_n = study.base_intervals * 2usize.pow(study.ref_doublings) + 1;
    let spec: Vec<(usize, usize)> = (0..levels)
        .map(|j| {
            let steps = match mode {
                StudyMode::FinalTimeL2 => study.final_time_steps,
                StudyMode::SpaceTimeL2 => study.base_time_steps * 2usize.pow(j as u32),
            };
            (steps, study.base_intervals * 2usize.pow(j as u32) + 1)
        })
        .collect();
    let finest_steps = spec[levels - 1].0;
    let ref_steps = match mode {
        StudyMode::FinalTimeL2 => study.final_time_steps,
        StudyMode::SpaceTimeL2 => study.reference_time_steps,
    };
    if ref_steps % finest_steps != 0 {
        return Err(Error::InvalidParameter("reference steps must be a multiple of every level's steps".into()));
    }
    let ref_every = ref_steps / finest_steps;
    let (reference, runs) = with_pool(|| {
        rayon::join(
            || run_sampled(init, base, ref_n, ref_steps, ref_every),
            || spec.par_iter().map(|&(steps, n)| run_sampled(init, base, n, steps, 1)).collect::<Vec<_>>(),
        )
    });
    let (ref_evo, ref_samples) = reference?;
    let mut errors = Vec::new();
    let mut failure = None;
    for (j, run) in runs.into_iter().enumerate() {
        let (evo, samples) = match run {
            Ok(r) => r,
            Err(e) => {
                failure = Some(format!("level {j}: {e}"));
                break;
            }
        };
        let (steps, n) = spec[j];
        let stride = (ref_n - 1) / (n - 1);
        let h = evo.profile.grid.spacing;
        let sq = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().enumerate().map(|(i, x)| (x - b[i * stride]).powi(2)).sum::<f64>()
        };
        let err = match mode {
            StudyMode::FinalTimeL2 => {
                let raw = sq(&evo.profile.values, &ref_evo.profile.values).sqrt();
                match study.normalization {
                    Normalization::DiscreteNorm => raw * h.sqrt(),
                    Normalization::LevelPowers => raw * 0.5f64.powi(j as i32),
                }
            }
            StudyMode::SpaceTimeL2 => {
                let skip = finest_steps / steps;
                let raw = samples
                    .iter()
                    .enumerate()
                    .map(|(k, a)| sq(a, &ref_samples[(k + 1) * skip - 1]))
                    .sum::<f64>()
                    .sqrt();
                let tau = base.t_final / steps as f64;
                match study.normalization {
                    Normalization::DiscreteNorm => raw * (h * tau).sqrt(),
                    Normalization::LevelPowers => raw * 0.25f64.powi(j as i32),
                }
            }
        };
        errors.push(err);
    }
    let done = errors.len();
    Ok(ConvergenceReport {
        rows: assemble_rows(&spec[..done], &errors),
        mode,
        reference: Reference::FineMesh,
        normalization: study.normalization,
        failure,
        notes: vec![format!("reference: {ref_n} points, {ref_steps} steps; nested-node comparison over the full mass interval")],
    })
}

/// Settings of the 2D exact-solution study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactConvergence2D {
    pub amp: f64,
    pub sigma: f64,
    pub t_final: f64,
    pub base_intervals: usize,
    pub final_time_steps: usize,
    pub base_time_steps: usize,
    pub normalization: Normalization,
    /// Level of the critical state at the outer radius, see [`choose_r1`].
    pub r1_tol: f64,
}

impl Default for ExactConvergence2D {
    fn default() -> Self {
        Self {
            amp: 4.0,
            sigma: 0.9,
            t_final: 0.04,
            base_intervals: 25,
            final_time_steps: 4000,
            base_time_steps: 4,
            normalization: Normalization::DiscreteNorm,
            r1_tol: 1e-4,
        }
    }
}

/// Convergence of the radial scheme (d = 2, γ = 1, ε = δ = 0) to the exact
/// solution, with errors restricted to the mass nodes in `[0, m̄/2]`.
pub fn exact_convergence_2d(levels: usize, mode: StudyMode, study: &ExactConvergence2D) -> Result<ConvergenceReport> {
    if levels == 0 {
        return Err(Error::InvalidParameter("levels must be at least 1".into()));
    }
    let r1 = choose_r1(study.r1_tol);
    let ocfg = Oracle2DConfig::new(study.amp, study.sigma, r1)?;
    let params = ModelParams::new(1.0, 2, r1)?;
    let mass = ocfg.initial_mass();
    let spec: Vec<(usize, usize)> = (0..levels)
        .map(|j| {
            let steps = match mode {
                StudyMode::FinalTimeL2 => study.final_time_steps,
                StudyMode::SpaceTimeL2 => study.base_time_steps * 2usize.pow(j as u32),
            };
            (steps, study.base_intervals * 2usize.pow(j as u32) + 1)
        })
        .collect();
    let init = InitialDatum::gaussian(study.amp, study.sigma);
    // exact snapshots needed: the final time, or every time point of the run
    let results: Vec<Result<f64>> = with_pool(|| {
        spec.par_iter()
            .enumerate()
            .map(|(j, &(steps, n))| {
                let grid = Grid::new(n, mass)?;
                let tau = study.t_final / steps as f64;
                let f0 = move |r: f64| init.density(r);
                let u0 = inverse_cdf_from_density(&f0, &params, &grid)?;
                let cfg = SolverConfig::new(params, grid, tau, study.t_final)?;
                let half = (0..n).filter(|&i| grid.node(i) <= 0.5 * mass).collect::<Vec<_>>();
                let mut sampler = Sampler { every: 1, samples: Vec::new() };
                let evo = evolve(&u0, &cfg, &mut [&mut sampler])?;
                let sq = |vals: &[f64], t: f64| -> Result<f64> {
                    let exact = ExactSolution2D::new(ocfg, t)?.profile(&grid)?;
                    Ok(half.iter().map(|&i| (vals[i] - exact.values[i]).powi(2)).sum::<f64>())
                };
                let h = grid.spacing;
                let err = match mode {
                    StudyMode::FinalTimeL2 => {
                        let raw = sq(&evo.profile.values, study.t_final)?.sqrt();
                        match study.normalization {
                            Normalization::DiscreteNorm => raw * h.sqrt(),
                            Normalization::LevelPowers => raw * 0.5f64.powi(j as i32),
                        }
                    }
                    StudyMode::SpaceTimeL2 => {
                        let mut total = 0.0;
                        for (k, vals) in sampler.samples.iter().enumerate() {
                            total += sq(vals, (k + 1) as f64 * tau)?;
                        }
                        match study.normalization {
                            Normalization::DiscreteNorm => (total * h * tau).sqrt(),
                            Normalization::LevelPowers => total.sqrt() * 0.25f64.powi(j as i32),
                        }
                    }
                };
                Ok(err)
            })
            .collect()
    });
    let mut errors = Vec::new();
    let mut failure = None;
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => errors.push(e),
            Err(e) => {
                failure = Some(format!("level {j}: {e}"));
                break;
            }
        }
    }
    let done = errors.len();
    Ok(ConvergenceReport {
        rows: assemble_rows(&spec[..done], &errors),
        mode,
        reference: Reference::Exact2D,
        normalization: study.normalization,
        failure,
        notes: vec![format!("R1 = {r1:.6}, errors on mass nodes in [0, m/2], m = {mass:.10}")],
    })
}

/// Builds the initial profile of a preset.
pub fn initial_profile(p: &Preset) -> Result<Profile> {
    p.init.profile_on(&p.config.params, &p.config.grid)
}

/// Convenience: the preset's configuration with another integrator.
pub fn with_integrator(mut cfg: SolverConfig, integ: Integrator) -> SolverConfig {
    cfg.integrator = integ;
    cfg
}
