//! Exact isotropic solutions of the 2D Kaniadakis–Quarati equation.
//!
//! A nonnegative isotropic solution `h` of the linear Fokker–Planck equation
//! `∂t h = Δh + div(v h)` maps to a solution `f = h / (1 + M̄_h)` of KQ, where
//! `M̄_h(t, ρ) = ∫_0^ρ h(t, r) r dr`. The linear problem is solved with its
//! fundamental solution, reduced to a radial integral with a Bessel factor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quad;
use crate::special::i0e;
use crate::transform::{inverse_cdf_from_source, Grid, MassSource, Profile};

/// Half-width of the kernel window in units of `√b`.
const KERNEL_WIDTH: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oracle2DConfig {
    pub amp: f64,
    pub sigma: f64,
    pub r1: f64,
    pub quad_tol: f64,
    /// Radius beyond which `h0` is negligible (below 1e−14).
    pub trunc_radius: f64,
    /// Panels of the partial-mass table on `[0, r1]`.
    pub table_panels: usize,
}

impl Oracle2DConfig {
    pub fn new(amp: f64, sigma: f64, r1: f64) -> Result<Self> {
        if !(amp > 0.0 && sigma > 0.0 && r1 > 0.0) || !(amp.is_finite() && sigma.is_finite() && r1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "oracle needs A, sigma, R1 > 0; got {amp}, {sigma}, {r1}"
            )));
        }
        let log_peak = amp.ln() + amp * sigma * sigma;
        let trunc_radius = sigma * (2.0 * (log_peak.max(0.0) + 14.0 * std::f64::consts::LN_10)).sqrt();
        Ok(Self { amp, sigma, r1, quad_tol: 1e-12, trunc_radius, table_panels: 2000 })
    }

    /// Mass of `f0 = A e^{−ρ²/2σ²}` on `[0, r1]` (radial convention).
    pub fn initial_mass(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        -self.amp * s2 * (-self.r1 * self.r1 / (2.0 * s2)).exp_m1()
    }

    fn h_scale(&self) -> f64 {
        self.amp * (self.amp * self.sigma * self.sigma).exp()
    }
}

/// `h0(ρ) = A e^{−ρ²/2σ²} e^{Aσ²(1 − e^{−ρ²/2σ²})}`, the linear datum matching
/// the Gaussian `f0`.
pub fn h0_from_gaussian(cfg: &Oracle2DConfig, rho: f64) -> f64 {
    let s2 = cfg.sigma * cfg.sigma;
    let g = (-rho * rho / (2.0 * s2)).exp();
    cfg.amp * g * (-cfg.amp * s2 * (-rho * rho / (2.0 * s2)).exp_m1()).exp()
}

/// `a(t) = e^{−2t}`.
pub fn kernel_a(t: f64) -> f64 {
    (-2.0 * t).exp()
}

/// `b(t) = e^{2t} − 1`.
pub fn kernel_b(t: f64) -> f64 {
    (2.0 * t).exp_m1()
}

/// Heat kernel `K_b(z) = (2πb)^{−1} e^{−|z|²/2b}` at `|z| = r`.
pub fn heat_kernel(b: f64, r: f64) -> f64 {
    (-r * r / (2.0 * b)).exp() / (2.0 * std::f64::consts::PI * b)
}

/// Solution of the linear Fokker–Planck equation from `h0` at `(t, ρ)`.
pub fn linear_fp_solution(cfg: &Oracle2DConfig, t: f64, rho: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
    }
    Ok(h_lin(cfg, t, rho))
}

fn h_lin(cfg: &Oracle2DConfig, t: f64, rho: f64) -> f64 {
    let b = kernel_b(t);
    let y = t.exp() * rho.abs();
    let w = KERNEL_WIDTH * b.sqrt();
    let lo = (y - w).max(0.0);
    let hi = (y + w).min(cfg.trunc_radius);
    if hi <= lo {
        return 0.0;
    }
    // angular integral of the shifted kernel: e^{-(y²+s²)/2b} I0(ys/b)
    let integrand = |s: f64| h0_from_gaussian(cfg, s) * (s / b) * (-(y - s) * (y - s) / (2.0 * b)).exp() * i0e(y * s / b);
    let mut breaks = vec![lo, hi];
    if y > lo && y < hi {
        breaks.insert(1, y);
    }
    let tol = cfg.quad_tol * cfg.h_scale();
    quad::integrate_breaks(integrand, &breaks, tol).value / kernel_a(t)
}

/// Exact KQ solution at a fixed time, with the partial mass of `h` tabulated
/// on `[0, r1]`.
#[derive(Debug, Clone)]
pub struct ExactSolution2D {
    pub config: Oracle2DConfig,
    pub time: f64,
    spacing: f64,
    cum: Vec<f64>,
}

impl ExactSolution2D {
    pub fn new(config: Oracle2DConfig, time: f64) -> Result<Self> {
        if !(time > 0.0) {
            return Err(Error::InvalidParameter(format!("time must be positive, got {time}")));
        }
        let panels = config.table_panels.max(1);
        let spacing = config.r1 / panels as f64;
        let tol = config.quad_tol * config.h_scale() / panels as f64;
        let pieces: Vec<f64> = (0..panels)
            .into_par_iter()
            .map(|k| {
                let a = k as f64 * spacing;
                let b = if k + 1 == panels { config.r1 } else { a + spacing };
                quad::integrate(|r| h_lin(&config, time, r) * r, a, b, tol).value
            })
            .collect();
        let mut cum = Vec::with_capacity(panels + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for p in pieces {
            acc += p;
            cum.push(acc);
        }
        Ok(Self { config, time, spacing, cum })
    }

    pub fn h(&self, rho: f64) -> f64 {
        h_lin(&self.config, self.time, rho)
    }

    /// `M̄_h(t, ρ)`.
    pub fn partial_mass_h(&self, rho: f64) -> f64 {
        let rho = rho.max(0.0);
        let panels = self.cum.len() - 1;
        let k = ((rho / self.spacing) as usize).min(panels);
        let a = k as f64 * self.spacing;
        if rho <= a {
            return self.cum[k];
        }
        let f = |r: f64| self.h(r) * r;
        // sub-panel pieces are short enough for a single Kronrod rule
        let extra = if rho - a <= self.spacing {
            quad::gk15(&f, a, rho).0
        } else {
            quad::integrate(f, a, rho, self.config.quad_tol * self.config.h_scale()).value
        };
        self.cum[k] + extra
    }

    /// `M̄_f(t, ρ) = ln(1 + M̄_h(t, ρ))`.
    pub fn partial_mass_f(&self, rho: f64) -> f64 {
        self.partial_mass_h(rho).ln_1p()
    }

    /// `f(t, ρ) = h(t, ρ) / (1 + M̄_h(t, ρ))`.
    pub fn density(&self, rho: f64) -> f64 {
        self.h(rho) / (1.0 + self.partial_mass_h(rho))
    }

    /// Normalized radial pseudo-inverse `S_exact` on the grid.
    pub fn profile(&self, grid: &Grid) -> Result<Profile> {
        let params = ModelParams::new(1.0, 2, self.config.r1)?;
        inverse_cdf_from_source(self, &params, grid)
    }
}

impl MassSource for ExactSolution2D {
    fn weight(&self, x: f64) -> f64 {
        self.density(x) * x
    }

    fn mass_between(&self, a: f64, b: f64) -> f64 {
        let (ma, mb) = (self.partial_mass_h(a), self.partial_mass_h(b));
        ((mb - ma) / (1.0 + ma)).ln_1p()
    }
}

/// `f(t, ρ)` for a single point (builds the partial-mass table).
pub fn exact_kq_density(cfg: &Oracle2DConfig, t: f64, rho: f64) -> Result<f64> {
    Ok(ExactSolution2D::new(*cfg, t)?.density(rho))
}

pub fn exact_profile(cfg: &Oracle2DConfig, t: f64, grid: &Grid) -> Result<Profile> {
    ExactSolution2D::new(*cfg, t)?.profile(grid)
}

/// Smallest radius beyond which the γ = 1 critical state stays below `tol`.
pub fn choose_r1(tol: f64) -> f64 {
    (2.0 * (1.0 / tol).ln_1p()).sqrt()
}
