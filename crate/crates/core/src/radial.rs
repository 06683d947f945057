//! Implicit scheme for the normalised radial pseudo-inverse `S(t, z)`,
//! d = 2, 3, with the (ε, δ) regularisation.
//!
//! For γ = 1 the interior rows read
//!
//! ```text
//! R_i = A (S_i − P_i) / (2 h d τ)
//!     − d (S_i + δ)^{2−2/d} [ln(F/h + ε) − ln(B/h + ε)] / h
//!     + S_i (A/(2h) + d)
//! ```
//!
//! with `A = S_{i+1} − S_{i−1}`, `F = S_{i+1} − S_i`, `B = S_i − S_{i−1}`
//! clamped at zero. For γ ≠ 1 the logarithms become `x^{γ−1}/(γ−1)`, the
//! prefactor `A/(2h)` becomes `(A/(2h))^γ` and `d` in the drift becomes `d^γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stepping::{self, run_loop, Evolution, Observer, Scheme, SolverConfig, StepReport};
use crate::transform::{Profile, ProfileKind};
use crate::tridiag::Tridiagonal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialState {
    pub profile: Profile,
    pub time: f64,
}

pub(crate) struct SchemeRadial<'a> {
    prev: &'a [f64],
    gamma: f64,
    dim: f64,
    h: f64,
    tau: f64,
    eps: f64,
    delta: f64,
    weight: f64,
    abs_slope: bool,
    prev_prefactor: Vec<f64>,
    prev_terms: Vec<f64>,
}

#[inline]
fn clamp_diff(d: f64, abs_slope: bool) -> (f64, f64) {
    if abs_slope {
        (d.abs(), if d >= 0.0 { 1.0 } else { -1.0 })
    } else if d > 0.0 {
        (d, 1.0)
    } else {
        (0.0, 0.0)
    }
}

impl<'a> SchemeRadial<'a> {
    fn new(prev: &'a [f64], cfg: &SolverConfig, tau: f64) -> Result<Self> {
        let mut s = Self {
            prev,
            gamma: cfg.params.gamma,
            dim: cfg.params.dim as f64,
            h: cfg.grid.spacing,
            tau,
            eps: cfg.eps_reg,
            delta: cfg.delta_reg,
            weight: cfg.integrator.implicit_weight(),
            abs_slope: cfg.abs_slope,
            prev_prefactor: Vec::new(),
            prev_terms: Vec::new(),
        };
        if s.weight < 1.0 {
            let n = prev.len();
            let mut pp = vec![0.0; n];
            let mut pt = vec![0.0; n];
            for i in 1..n - 1 {
                let row = s.row(prev, i, false)?;
                pp[i] = row.pref;
                pt[i] = -row.diff + prev[i] * (row.pref + row.drift_const);
            }
            s.prev_prefactor = pp;
            s.prev_terms = pt;
        }
        Ok(s)
    }

    /// `φ(x)` and `φ'(x)`: log for γ = 1, `x^{γ−1}/(γ−1)` otherwise.
    #[inline]
    fn phi(&self, x: f64, row: usize) -> Result<(f64, f64)> {
        if self.gamma == 1.0 {
            if x <= 0.0 {
                return Err(Error::LogSingularity { row });
            }
            Ok((x.ln(), 1.0 / x))
        } else {
            if x <= 0.0 && self.gamma < 2.0 {
                return Err(Error::LogSingularity { row });
            }
            let p2 = if x > 0.0 { x.powf(self.gamma - 2.0) } else if self.gamma == 2.0 { 1.0 } else { 0.0 };
            Ok((p2 * x / (self.gamma - 1.0), p2))
        }
    }

    #[inline]
    fn row(&self, s: &[f64], i: usize, with_derivs: bool) -> Result<Row> {
        let (g, d, h) = (self.gamma, self.dim, self.h);
        let (a, asg) = clamp_diff(s[i + 1] - s[i - 1], self.abs_slope);
        let (f, fsg) = clamp_diff(s[i + 1] - s[i], self.abs_slope);
        let (b, bsg) = clamp_diff(s[i] - s[i - 1], self.abs_slope);
        let slope = a / (2.0 * h);
        let (pref, dpref) = if g == 1.0 {
            (slope, asg / (2.0 * h))
        } else {
            let p = slope.powf(g);
            let p1 = if slope > 0.0 { p / slope } else { 0.0 };
            (p, g * p1 * asg / (2.0 * h))
        };
        let x = f / h + self.eps;
        let y = b / h + self.eps;
        let (phx, dphx) = self.phi(x, i)?;
        let (phy, dphy) = self.phi(y, i)?;
        let base = (s[i] + self.delta).max(0.0);
        let expo = 2.0 - 2.0 / d;
        let q = d * base.powf(expo) / h;
        let diff = q * (phx - phy);
        let mut row = Row { pref, diff, drift_const: d.powf(g), dpref: 0.0, ddiff_l: 0.0, ddiff_c: 0.0, ddiff_u: 0.0 };
        if with_derivs {
            let dq = if expo == 1.0 { d / h } else { d * expo * base.powf(expo - 1.0) / h };
            row.dpref = dpref;
            row.ddiff_l = q * dphy * bsg / h;
            row.ddiff_u = q * dphx * fsg / h;
            row.ddiff_c = dq * (phx - phy) - q * (dphx * fsg + dphy * bsg) / h;
        }
        Ok(row)
    }
}

struct Row {
    pref: f64,
    diff: f64,
    drift_const: f64,
    // ∂pref/∂S_{i+1} (= −∂pref/∂S_{i−1})
    dpref: f64,
    ddiff_l: f64,
    ddiff_c: f64,
    ddiff_u: f64,
}

impl Scheme for SchemeRadial<'_> {
    fn assemble(&self, s: &[f64], r: &mut [f64], mut jac: Option<&mut Tridiagonal>) -> Result<()> {
        let n = s.len();
        let th = self.weight;
        let cn = th < 1.0;
        let want = jac.is_some();
        for i in 1..n - 1 {
            let row = self.row(s, i, want)?;
            let si = s[i];
            let rate = (si - self.prev[i]) / self.tau;
            let pref = if cn { th * row.pref + (1.0 - th) * self.prev_prefactor[i] } else { row.pref };
            let mut ri = pref * rate / self.dim - th * row.diff + th * si * (row.pref + row.drift_const);
            if cn {
                ri += (1.0 - th) * self.prev_terms[i];
            }
            r[i - 1] = ri;
            if let Some(j) = jac.as_deref_mut() {
                let k = i - 1;
                let c = th * row.dpref * (rate / self.dim + si);
                j.lower[k] = -c - th * row.ddiff_l;
                j.upper[k] = c - th * row.ddiff_u;
                j.diag[k] = pref / (self.dim * self.tau) - th * row.ddiff_c + th * (row.pref + row.drift_const);
            }
        }
        if let Some(j) = jac {
            j.lower[0] = 0.0;
            let last = j.upper.len() - 1;
            j.upper[last] = 0.0;
        }
        Ok(())
    }
}

fn check_radial(p: &Profile, cfg: &SolverConfig) -> Result<()> {
    match p.kind {
        ProfileKind::RadialNormalized(d) if d == cfg.params.dim && d >= 2 => Ok(()),
        _ => Err(Error::InvalidParameter("the radial scheme needs a radial profile with d = params.dim ≥ 2".into())),
    }
}

/// Residual of the radial scheme (rows 1..n−2).
pub fn residual_radial(s: &[f64], s_prev: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let scheme = SchemeRadial::new(s_prev, cfg, cfg.tau)?;
    let mut r = vec![0.0; s.len() - 2];
    scheme.assemble(s, &mut r, None)?;
    Ok(r)
}

/// Analytic Jacobian of [`residual_radial`].
pub fn jacobian_radial(s: &[f64], s_prev: &[f64], cfg: &SolverConfig) -> Result<Tridiagonal> {
    let scheme = SchemeRadial::new(s_prev, cfg, cfg.tau)?;
    let mut r = vec![0.0; s.len() - 2];
    let mut j = Tridiagonal::zeros(s.len() - 2);
    scheme.assemble(s, &mut r, Some(&mut j))?;
    Ok(j)
}

pub(crate) fn step_radial_tau(prev: &Profile, cfg: &SolverConfig, tau: f64) -> Result<(Profile, StepReport)> {
    check_radial(prev, cfg)?;
    let scheme = SchemeRadial::new(&prev.values, cfg, tau)?;
    stepping::newton_solve(&scheme, prev, cfg)
}

pub fn solve_step_radial(prev: &RadialState, cfg: &SolverConfig) -> Result<(RadialState, StepReport)> {
    let (profile, rep) = step_radial_tau(&prev.profile, cfg, cfg.tau)?;
    Ok((RadialState { profile, time: prev.time + cfg.tau }, rep))
}

pub fn evolve_radial(s0: &RadialState, cfg: &SolverConfig, observers: &mut [&mut dyn Observer]) -> Result<Evolution> {
    check_radial(&s0.profile, cfg)?;
    run_loop(&s0.profile, cfg, observers, |p, tau| step_radial_tau(p, cfg, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{entropy_minimizer, ModelParams};
    use crate::transform::{minimizer_profile, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(d: usize, n: usize, mass: f64, eps: f64, delta: f64) -> SolverConfig {
        let params = ModelParams::new(1.0, d, 1.0).unwrap();
        let mut cfg = SolverConfig::new(params, Grid::new(n, mass).unwrap(), 1e-3, 1.0).unwrap();
        cfg.eps_reg = eps;
        cfg.delta_reg = delta;
        cfg
    }

    #[test]
    fn flat_zero_stencil() {
        for d in [2, 3] {
            for delta in [0.0, 1e-10] {
                let cfg = config(d, 6, 1.0, 1e-12, delta);
                let s = [0.0, 0.0, 0.0, 0.0, 0.5, 1.0];
                let r = residual_radial(&s, &s, &cfg).unwrap();
                assert_eq!(r[0], 0.0);
                assert_eq!(r[1], 0.0);
            }
        }
    }

    #[test]
    fn linear_profile_d2() {
        let mass = 0.5;
        let cfg = config(2, 11, mass, 0.0, 0.0);
        let p = 1.0 / mass;
        let s: Vec<f64> = (0..11).map(|i| p * cfg.grid.node(i)).collect();
        let r = residual_radial(&s, &s, &cfg).unwrap();
        for (k, ri) in r.iter().enumerate() {
            assert!((ri - s[k + 1] * (p + 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_slope_without_eps_is_an_error() {
        let cfg = config(2, 6, 1.0, 0.0, 0.0);
        let s = [0.0, 0.0, 0.0, 0.25, 0.5, 1.0];
        assert!(matches!(residual_radial(&s, &s, &cfg), Err(Error::LogSingularity { .. })));
    }

    fn random_monotone(rng: &mut ChaCha8Rng, n: usize, hi: f64) -> Vec<f64> {
        let mut inc: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = inc.iter().sum();
        inc.iter_mut().for_each(|x| *x *= hi / s);
        let mut u = vec![0.0];
        for d in inc {
            u.push(u.last().unwrap() + d);
        }
        u[n - 1] = hi;
        u
    }

    fn fd_error(cfg: &SolverConfig, s: &[f64], p: &[f64]) -> f64 {
        let j = jacobian_radial(s, p, cfg).unwrap();
        let m = s.len() - 2;
        let step = 1e-6;
        let mut worst: f64 = 0.0;
        for col in 0..m {
            let mut up = s.to_vec();
            let mut dn = s.to_vec();
            up[col + 1] += step;
            dn[col + 1] -= step;
            let rp = residual_radial(&up, p, cfg).unwrap();
            let rm = residual_radial(&dn, p, cfg).unwrap();
            for row in 0..m {
                let fd = (rp[row] - rm[row]) / (2.0 * step);
                let scale = j.get(row, col).abs().max(1.0);
                worst = worst.max((fd - j.get(row, col)).abs() / scale);
            }
        }
        worst
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2, 3] {
            for integ in [crate::Integrator::BackwardEuler, crate::Integrator::CrankNicolson] {
                let mut cfg = config(d, 10, 1.0, 1e-10, 1e-10);
                cfg.integrator = integ;
                let s = random_monotone(&mut rng, 10, 1.0);
                let p = random_monotone(&mut rng, 10, 1.0);
                assert!(fd_error(&cfg, &s, &p) < 1e-5);
            }
        }
    }

    #[test]
    fn general_gamma_jacobian_smoke() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::new(1.5, 3, 1.0).unwrap();
        let mut cfg = SolverConfig::new(params, Grid::new(10, 1.0).unwrap(), 1e-3, 1.0).unwrap();
        cfg.eps_reg = 1e-10;
        let s = random_monotone(&mut rng, 10, 1.0);
        let p = random_monotone(&mut rng, 10, 1.0);
        assert!(fd_error(&cfg, &s, &p) < 1e-5);
    }

    #[test]
    fn delta_scaling_at_zero() {
        // at S_i = 0 the diffusion coefficient is d·δ^{2−2/d}/h
        let h = 0.1;
        let cfg_a = config(3, 11, 1.0, 1e-3, 1e-6);
        let cfg_b = config(3, 11, 1.0, 1e-3, 1e-9);
        let s: Vec<f64> = vec![0.0, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 1.0];
        let ja = jacobian_radial(&s, &s, &cfg_a).unwrap();
        let jb = jacobian_radial(&s, &s, &cfg_b).unwrap();
        // row of S_1 = 0: the upper entry is −Q/(F + hε) with Q ∝ δ^{4/3}
        let ratio = ja.get(0, 1) / jb.get(0, 1);
        assert!((ratio - 1e3f64.powf(4.0 / 3.0)).abs() < 1e-6 * ratio, "{ratio}");
        assert!(jb.get(0, 1).abs() < 1e-9 / h);
    }

    #[test]
    fn steady_state_truncation_d2() {
        let params = ModelParams::new(1.0, 2, 1.0).unwrap();
        let m = 0.6;
        let spec = entropy_minimizer(m, &params).unwrap();
        let mut errs = Vec::new();
        for n in [101, 201, 401] {
            let grid = Grid::new(n, m).unwrap();
            let prof = minimizer_profile(&spec, &grid).unwrap();
            let cfg = SolverConfig::new(params, grid, 1e-3, 1.0).unwrap();
            let r = residual_radial(&prof.values, &prof.values, &cfg).unwrap();
            errs.push(r.iter().map(|x| x.abs()).fold(0.0, f64::max));
        }
        for w in errs.windows(2) {
            let q = w[0] / w[1];
            assert!((3.2..=4.8).contains(&q), "{errs:?}");
        }
    }

    #[test]
    fn steady_state_is_kept_by_a_step() {
        let params = ModelParams::new(1.0, 3, 1.0).unwrap();
        let m = 1.0;
        let spec = entropy_minimizer(m, &params).unwrap();
        let grid = Grid::new(41, m).unwrap();
        let prof = minimizer_profile(&spec, &grid).unwrap();
        let cfg = SolverConfig::new(params, grid, 1e-3, 1.0).unwrap();
        let st = RadialState { profile: prof.clone(), time: 0.0 };
        let (next, _) = solve_step_radial(&st, &cfg).unwrap();
        let diff = next.profile.values.iter().zip(&prof.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // one step moves the discretised minimiser by O(τ h²) only
        assert!(diff < 1e-5, "{diff}");
        next.profile.check().unwrap();
        assert_eq!(next.time, 1e-3);
    }
}
