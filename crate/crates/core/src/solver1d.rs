//! Implicit scheme for the 1D pseudo-inverse CDF `u(t, x)`.
//!
//! Interior rows `i = 1..n-2`, multiplied through by `h^γ`:
//!
//! ```text
//! R_i = P_i (u_i − p_i)/τ − (F^{γ−1} − B^{γ−1})/(γ−1) + u_i (P_i + h^γ)
//! ```
//!
//! with `F = u_{i+1} − u_i`, `B = u_i − u_{i−1}`, `P_i = ((u_{i+1} − u_{i−1})/2)^γ`
//! and `p` the previous time level. Differences are clamped at zero before
//! taking powers. Crank–Nicolson averages the prefactor `P` and the
//! remaining terms between the two time levels.

use crate::error::{Error, Result};
use crate::stepping::{self, run_loop, Evolution, Integrator, Observer, Scheme, SolverConfig, StepReport};
use crate::transform::{Profile, ProfileKind};
use crate::tridiag::Tridiagonal;

pub(crate) struct Scheme1D<'a> {
    prev: &'a [f64],
    gamma: f64,
    h_gamma: f64,
    tau: f64,
    weight: f64,
    abs_slope: bool,
    // prefactor P at the previous level (CN only)
    prev_prefactor: Vec<f64>,
    // explicit part −D(p) + p(P + h^γ) at the previous level (CN only)
    prev_terms: Vec<f64>,
}

/// `(value, d value / d diff)` of the clamped difference.
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

/// `(x^{γ−1}, x^{γ−2})` for `x ≥ 0`.
#[inline]
fn powers(x: f64, gamma: f64) -> (f64, f64) {
    if x > 0.0 {
        let p2 = x.powf(gamma - 2.0);
        (p2 * x, p2)
    } else {
        let p1 = if gamma > 1.0 { 0.0 } else { f64::INFINITY };
        let p2 = if gamma > 2.0 {
            0.0
        } else if gamma == 2.0 {
            1.0
        } else {
            f64::INFINITY
        };
        (p1, p2)
    }
}

impl<'a> Scheme1D<'a> {
    pub(crate) fn new(prev: &'a [f64], cfg: &SolverConfig, tau: f64) -> Self {
        let gamma = cfg.params.gamma;
        let h = cfg.grid.spacing;
        let weight = cfg.integrator.implicit_weight();
        let mut s = Self {
            prev,
            gamma,
            h_gamma: h.powf(gamma),
            tau,
            weight,
            abs_slope: cfg.abs_slope,
            prev_prefactor: Vec::new(),
            prev_terms: Vec::new(),
        };
        if weight < 1.0 {
            let n = prev.len();
            let mut pp = vec![0.0; n];
            let mut pt = vec![0.0; n];
            for i in 1..n - 1 {
                let (a, _) = clamp_diff(prev[i + 1] - prev[i - 1], s.abs_slope);
                let pa = (0.5 * a).powf(gamma);
                let (f1, _) = powers(clamp_diff(prev[i + 1] - prev[i], s.abs_slope).0, gamma);
                let (b1, _) = powers(clamp_diff(prev[i] - prev[i - 1], s.abs_slope).0, gamma);
                pp[i] = pa;
                pt[i] = -(f1 - b1) / (gamma - 1.0) + prev[i] * (pa + s.h_gamma);
            }
            s.prev_prefactor = pp;
            s.prev_terms = pt;
        }
        s
    }
}

impl Scheme for Scheme1D<'_> {
    fn assemble(&self, u: &[f64], r: &mut [f64], mut jac: Option<&mut Tridiagonal>) -> Result<()> {
        let n = u.len();
        let g = self.gamma;
        let th = self.weight;
        let cn = th < 1.0;
        // per-difference powers, shared by neighbouring rows
        let mut pw1 = vec![0.0; n - 1];
        let mut pw2 = vec![0.0; n - 1];
        let mut sg = vec![0.0; n - 1];
        for j in 0..n - 1 {
            let (d, s) = clamp_diff(u[j + 1] - u[j], self.abs_slope);
            let (p1, p2) = powers(d, g);
            pw1[j] = p1;
            pw2[j] = p2;
            sg[j] = s;
        }
        for i in 1..n - 1 {
            let (a2, asg) = clamp_diff(u[i + 1] - u[i - 1], self.abs_slope);
            let a = 0.5 * a2;
            let pa = a.powf(g);
            let pa1 = if a > 0.0 { pa / a } else { 0.0 };
            let ui = u[i];
            let rate = (ui - self.prev[i]) / self.tau;
            let pref = if cn { th * pa + (1.0 - th) * self.prev_prefactor[i] } else { pa };
            let diff = (pw1[i] - pw1[i - 1]) / (g - 1.0);
            let mut ri = pref * rate - th * diff + th * ui * (pa + self.h_gamma);
            if cn {
                ri += (1.0 - th) * self.prev_terms[i];
            }
            r[i - 1] = ri;
            if let Some(j) = jac.as_deref_mut() {
                let k = i - 1;
                let c = th * 0.5 * g * pa1 * asg * (rate + ui);
                let dl = pw2[i - 1] * sg[i - 1];
                let du = pw2[i] * sg[i];
                j.lower[k] = -c - th * dl;
                j.upper[k] = c - th * du;
                j.diag[k] = pref / self.tau + th * (dl + du) + th * (pa + self.h_gamma);
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

fn check_1d(p: &Profile, cfg: &SolverConfig) -> Result<()> {
    if p.kind != ProfileKind::InverseCdf1D || cfg.params.dim != 1 {
        return Err(Error::InvalidParameter("the 1D scheme needs a 1D profile and dim = 1".into()));
    }
    Ok(())
}

/// Scaled residual of the scheme (rows 1..n−2) for the configured integrator.
pub fn residual_1d(u: &[f64], u_prev: &[f64], cfg: &SolverConfig) -> Vec<f64> {
    let scheme = Scheme1D::new(u_prev, cfg, cfg.tau);
    let mut r = vec![0.0; u.len() - 2];
    scheme.assemble(u, &mut r, None).expect("1D assembly is infallible");
    r
}

/// Analytic Jacobian of [`residual_1d`] with respect to the interior values.
pub fn jacobian_1d(u: &[f64], u_prev: &[f64], cfg: &SolverConfig) -> Tridiagonal {
    let scheme = Scheme1D::new(u_prev, cfg, cfg.tau);
    let mut r = vec![0.0; u.len() - 2];
    let mut j = Tridiagonal::zeros(u.len() - 2);
    scheme.assemble(u, &mut r, Some(&mut j)).expect("1D assembly is infallible");
    j
}

pub(crate) fn step_1d_tau(prev: &Profile, cfg: &SolverConfig, tau: f64) -> Result<(Profile, StepReport)> {
    check_1d(prev, cfg)?;
    let scheme = Scheme1D::new(&prev.values, cfg, tau);
    stepping::newton_solve(&scheme, prev, cfg)
}

/// One backward-Euler step (or CN, if configured) from `u_prev`.
pub fn solve_step_1d(u_prev: &Profile, cfg: &SolverConfig) -> Result<(Profile, StepReport)> {
    step_1d_tau(u_prev, cfg, cfg.tau)
}

/// One Crank–Nicolson step regardless of `cfg.integrator`.
pub fn step_cn_1d(u_prev: &Profile, cfg: &SolverConfig) -> Result<(Profile, StepReport)> {
    let mut c = cfg.clone();
    c.integrator = Integrator::CrankNicolson;
    step_1d_tau(u_prev, &c, c.tau)
}

/// Runs `cfg.n_steps()` steps from `u0`, calling every observer after each one.
pub fn evolve_1d(u0: &Profile, cfg: &SolverConfig, observers: &mut [&mut dyn Observer]) -> Result<Evolution> {
    check_1d(u0, cfg)?;
    run_loop(u0, cfg, observers, |p, tau| step_1d_tau(p, cfg, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{entropy_minimizer, ModelParams};
    use crate::transform::{minimizer_profile, Grid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(gamma: f64, n: usize, mass: f64, tau: f64) -> SolverConfig {
        let params = ModelParams::new(gamma, 1, 1.0).unwrap();
        SolverConfig::new(params, Grid::new(n, mass).unwrap(), tau, 10.0 * tau).unwrap()
    }

    #[test]
    fn hand_evaluated_row() {
        let cfg = config(2.0, 3, 1.0, 0.1);
        assert_eq!(cfg.grid.spacing, 0.5);
        let r = residual_1d(&[0.0, 0.5, 1.0], &[0.0, 0.4, 1.0], &cfg);
        assert!((r[0] - 0.5).abs() < 1e-14, "{}", r[0]);
    }

    #[test]
    fn flat_zero_stencil_is_exact() {
        for integ in [Integrator::BackwardEuler, Integrator::CrankNicolson] {
            let mut cfg = config(2.9, 8, 1.0, 0.01);
            cfg.integrator = integ;
            let u = [-1.0, -0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0];
            let r = residual_1d(&u, &u, &cfg);
            assert_eq!(r[2], 0.0);
            assert_eq!(r[3], 0.0);
        }
    }

    #[test]
    fn flat_zero_jacobian_row() {
        // at u_{i-1} = u_i = u_{i+1} = 0 with γ > 2, every stencil power vanishes
        let cfg = config(2.9, 5, 1.0, 0.01);
        let u = [-1.0, 0.0, 0.0, 0.0, 1.0];
        let j = jacobian_1d(&u, &u, &cfg);
        let hg = cfg.grid.spacing.powf(2.9);
        assert_eq!(j.get(1, 0), 0.0);
        assert_eq!(j.get(1, 2), 0.0);
        assert!((j.get(1, 1) - hg).abs() < 1e-18);
    }

    fn random_monotone(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        let mut inc: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = inc.iter().sum();
        inc.iter_mut().for_each(|x| *x *= (hi - lo) / s);
        let mut u = vec![lo];
        for d in inc {
            u.push(u.last().unwrap() + d);
        }
        u[n - 1] = hi;
        u
    }

    fn fd_check(cfg: &SolverConfig, u: &[f64], p: &[f64]) -> f64 {
        let j = jacobian_1d(u, p, cfg);
        let m = u.len() - 2;
        let step = 1e-6;
        let mut worst: f64 = 0.0;
        for col in 0..m {
            let mut up = u.to_vec();
            let mut dn = u.to_vec();
            up[col + 1] += step;
            dn[col + 1] -= step;
            let rp = residual_1d(&up, p, cfg);
            let rm = residual_1d(&dn, p, cfg);
            for row in 0..m {
                let fd = (rp[row] - rm[row]) / (2.0 * step);
                worst = worst.max((fd - j.get(row, col)).abs());
            }
        }
        worst
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for integ in [Integrator::BackwardEuler, Integrator::CrankNicolson] {
            let mut cfg = config(2.9, 10, 2.0, 0.01);
            cfg.integrator = integ;
            let u = random_monotone(&mut rng, 10, -1.0, 1.0);
            let p = random_monotone(&mut rng, 10, -1.0, 1.0);
            assert!(fd_check(&cfg, &u, &p) < 1e-5);
            let j = jacobian_1d(&u, &p, &cfg);
            for r in 0..8usize {
                for c in 0..8 {
                    if r.abs_diff(c) > 1 {
                        assert_eq!(j.get(r, c), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn steady_state_truncation_is_second_order() {
        let params = ModelParams::new(2.9, 1, 1.0).unwrap();
        let m = 3.0;
        let spec = entropy_minimizer(m, &params).unwrap();
        let mut last = None;
        let mut ratios = Vec::new();
        for n in [101, 201, 401] {
            let grid = Grid::new(n, m).unwrap();
            let prof = minimizer_profile(&spec, &grid).unwrap();
            let cfg = SolverConfig::new(params, grid, 1e-3, 1.0).unwrap();
            let r = residual_1d(&prof.values, &prof.values, &cfg);
            // undo the h^γ scaling to compare the equation's truncation error
            let hg = grid.spacing.powf(2.9);
            let e = r.iter().map(|x| (x / hg).abs()).fold(0.0, f64::max);
            if let Some(prev) = last {
                ratios.push(prev / e);
            }
            last = Some(e);
        }
        for q in &ratios {
            assert!((3.2..=4.8).contains(q), "{ratios:?}");
        }
    }

    #[test]
    fn fixed_point_is_kept() {
        let params = ModelParams::new(2.9, 1, 1.0).unwrap();
        let m = 3.0;
        let spec = entropy_minimizer(m, &params).unwrap();
        let grid = Grid::new(41, m).unwrap();
        let prof = minimizer_profile(&spec, &grid).unwrap();
        let cfg = SolverConfig::new(params, grid, 1e-3, 1.0).unwrap();
        // relax to the discrete steady state, then step once more
        let mut u = prof;
        for _ in 0..2000 {
            u = solve_step_1d(&u, &cfg).unwrap().0;
        }
        let (next, rep) = solve_step_1d(&u, &cfg).unwrap();
        assert!(rep.newton_iterations <= 2);
        let diff = next.values.iter().zip(&u.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn rearrangement_and_abs_variant_agree() {
        let params = ModelParams::new(2.9, 1, 1.0).unwrap();
        let m = 3.0;
        let grid = Grid::new(21, m).unwrap();
        let f = |v: f64| 1.5 + 0.3 * (3.0 * v).cos();
        let mass: f64 = crate::quad::integrate(f, -1.0, 1.0, 1e-14).value;
        let grid = Grid::new(grid.n_points, mass).unwrap();
        let u0 = crate::transform::inverse_cdf_from_density(&f, &params, &grid).unwrap();
        let cfg = SolverConfig::new(params, grid, 1e-3, 1.0).unwrap();
        let mut abs_cfg = cfg.clone();
        abs_cfg.abs_slope = true;
        abs_cfg.rearrange = false;
        let (a, _) = solve_step_1d(&u0, &cfg).unwrap();
        let (b, _) = solve_step_1d(&u0, &abs_cfg).unwrap();
        let d2 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(d2 < 1e-8, "{d2}");
    }

    #[test]
    fn coarse_step_from_kinked_datum_is_valid() {
        // a coarse step from a kinked datum whose first Newton iterate crosses over
        let params = ModelParams::new(2.9, 1, 1.0).unwrap();
        let grid = Grid::new(9, 1.0).unwrap();
        let vals = vec![-1.0, -0.999, -0.998, -0.997, 0.996, 0.997, 0.998, 0.999, 1.0];
        let u0 = Profile::new(ProfileKind::InverseCdf1D, grid, vals, params).unwrap();
        let mut cfg = SolverConfig::new(params, grid, 0.5, 1.0).unwrap();
        cfg.newton_max_iter = 200;
        if let Ok((u1, _)) = solve_step_1d(&u0, &cfg) {
            u1.check().unwrap();
        }
    }

    #[test]
    fn zero_steps_returns_initial_datum() {
        let params = ModelParams::new(2.9, 1, 1.0).unwrap();
        let grid = Grid::new(11, 2.0).unwrap();
        let vals: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
        let u0 = Profile::new(ProfileKind::InverseCdf1D, grid, vals, params).unwrap();
        let cfg = SolverConfig::new(params, grid, 0.5, 0.2).unwrap();
        let evo = evolve_1d(&u0, &cfg, &mut []).unwrap();
        assert_eq!(evo.steps, 0);
        assert_eq!(evo.profile, u0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn steps_preserve_profile_invariants(seed in 0u64..1000, n in 5usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = ModelParams::new(2.9, 1, 1.0).unwrap();
            let grid = Grid::new(n, 2.0).unwrap();
            let vals = random_monotone(&mut rng, n, -1.0, 1.0);
            let u0 = Profile::new(ProfileKind::InverseCdf1D, grid, vals, params).unwrap();
            let cfg = SolverConfig::new(params, grid, 1e-3, 5e-3).unwrap();
            let evo = evolve_1d(&u0, &cfg, &mut []).unwrap();
            prop_assert!(evo.profile.check().is_ok());
            prop_assert_eq!(evo.profile.values[0], -1.0);
            prop_assert_eq!(evo.profile.values[n - 1], 1.0);
        }

        #[test]
        fn symmetry_is_preserved(n in 3usize..20) {
            let n = 2 * n + 1;
            let params = ModelParams::new(2.9, 1, 1.0).unwrap();
            let grid = Grid::new(n, 2.0).unwrap();
            let mid = (n - 1) / 2;
            let vals: Vec<f64> = (0..n).map(|i| {
                let x = (i as f64 - mid as f64) / mid as f64;
                x * x * x * 0.5 + 0.5 * x
            }).collect();
            let u0 = Profile::new(ProfileKind::InverseCdf1D, grid, vals, params).unwrap();
            let cfg = SolverConfig::new(params, grid, 1e-3, 5e-3).unwrap();
            let evo = evolve_1d(&u0, &cfg, &mut []).unwrap();
            for i in 0..n {
                prop_assert!((evo.profile.values[i] + evo.profile.values[n - 1 - i]).abs() < 1e-10);
            }
        }
    }
}
