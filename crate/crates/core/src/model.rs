//! Steady states, critical mass, entropy integrands and entropy minimisers
//! of the bosonic Fokker–Planck family
//! `∂ₜf = Δf + div(v f (1 + f^γ))` on a centred ball of radius `R1`.
//!
//! Masses in dimension `d ≥ 2` follow the radial convention: the integral over
//! the ball divided by the area of the unit sphere, i.e. `∫₀^{R1} g(r) r^{d-1} dr`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, geometric_breaks};

/// Quadrature tolerance for masses and entropy integrands.
pub const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Nonlinearity exponent γ.
    pub gamma: f64,
    /// Velocity dimension d.
    pub dim: usize,
    /// Radius R1 of the velocity domain.
    pub r1: f64,
}

impl ModelParams {
    pub fn new(gamma: f64, dim: usize, r1: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if !(r1 > 0.0 && r1.is_finite()) {
            return Err(Error::InvalidParameter(format!("r1 must be positive, got {r1}")));
        }
        Ok(Self { gamma, dim, r1 })
    }

    /// Non-fatal remarks about the parameter choice.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.dim == 1 && self.gamma <= 2.0 {
            w.push(format!(
                "gamma = {} <= 2 in 1D: the problem is not L1-supercritical and the 1D scheme assumes gamma > 2",
                self.gamma
            ));
        }
        w
    }

    /// Whether the critical mass is finite (γ > 2/d).
    pub fn is_supercritical_regime(&self) -> bool {
        self.gamma > 2.0 / self.dim as f64
    }
}

/// Critical mass; infinite in the L¹-(sub)critical regime γ ≤ 2/d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CriticalMass {
    Finite(f64),
    Infinite,
}

impl CriticalMass {
    pub fn value(&self) -> f64 {
        match self {
            CriticalMass::Finite(m) => *m,
            CriticalMass::Infinite => f64::INFINITY,
        }
    }
}

/// Entropy minimiser of a given mass: either a smooth steady state (θ > 0)
/// or the critical profile plus a Dirac mass at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerSpec {
    pub theta: f64,
    pub dirac_mass: f64,
    pub params: ModelParams,
    pub total_mass: f64,
}

/// `f_{∞,θ}(v) = (e^{γ(|v|²/2+θ)} − 1)^{−1/γ}`.
pub fn steady_state_density(theta: f64, gamma: f64, v_abs: f64) -> Result<f64> {
    if theta < 0.0 || v_abs < 0.0 {
        return Err(Error::InvalidParameter("theta and |v| must be nonnegative".into()));
    }
    if theta == 0.0 && v_abs == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(steady_state_unchecked(theta, gamma, v_abs))
}

#[inline]
pub(crate) fn steady_state_unchecked(theta: f64, gamma: f64, r: f64) -> f64 {
    (gamma * (0.5 * r * r + theta)).exp_m1().powf(-1.0 / gamma)
}

/// `c_γ = (2/γ)^{1/γ}`, the prefactor of `f_c(v) ~ c_γ |v|^{-2/γ}`.
pub fn critical_prefactor(gamma: f64) -> f64 {
    (2.0 / gamma).powf(1.0 / gamma)
}

/// Mobility `mob(s) = s (1 + s^γ)`.
pub fn mob(s: f64, gamma: f64) -> f64 {
    s * (1.0 + s.powf(gamma))
}

/// `∫_a^b f_θ(r) r^k dr` for `0 ≤ a ≤ b`.
///
/// For θ = 0 the integrable singularity at the origin is handled by
/// integrating a three-term expansion of `f_c` analytically below
/// `r = 10⁻³·R1`. Returns `+∞` if the integral diverges.
pub fn radial_moment(theta: f64, params: &ModelParams, k: f64, a: f64, b: f64) -> f64 {
    debug_assert!(a >= 0.0 && b >= a);
    if b <= a {
        return 0.0;
    }
    let gamma = params.gamma;
    let f = move |r: f64| {
        if r == 0.0 {
            if theta == 0.0 {
                return 0.0;
            }
            return steady_state_unchecked(theta, gamma, 0.0) * if k == 0.0 { 1.0 } else { 0.0 };
        }
        steady_state_unchecked(theta, gamma, r) * r.powf(k)
    };
    if theta == 0.0 {
        let split = 1e-3 * params.r1;
        let mut total = 0.0;
        if a < split {
            let hi = b.min(split);
            total += critical_series_moment(gamma, k, a, hi);
        }
        let lo = a.max(split);
        if b > lo {
            let breaks = clip_breaks(&geometric_breaks(split, params.r1.max(b), false), lo, b);
            total += quad::integrate_breaks(f, &breaks, QUAD_TOL * 0.1).value;
        }
        total
    } else {
        let feature = theta.sqrt().min(params.r1);
        let mut breaks = geometric_breaks(1e-6 * feature, params.r1.max(b), true);
        breaks.push(feature);
        breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let breaks = clip_breaks(&breaks, a, b);
        quad::integrate_breaks(f, &breaks, QUAD_TOL * 0.1).value
    }
}

fn clip_breaks(breaks: &[f64], a: f64, b: f64) -> Vec<f64> {
    let mut out = vec![a];
    out.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    out.push(b);
    out
}

/// `∫_a^b c_γ r^{k-2/γ} (1 − r²/4 + (3−γ) r⁴/96) dr`, the small-r expansion of `f_c r^k`.
fn critical_series_moment(gamma: f64, k: f64, a: f64, b: f64) -> f64 {
    let c = critical_prefactor(gamma);
    let e = k - 2.0 / gamma;
    if e <= -1.0 {
        return f64::INFINITY;
    }
    let term = |p: f64| (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0);
    c * (term(e) - 0.25 * term(e + 2.0) + (3.0 - gamma) / 96.0 * term(e + 4.0))
}

/// Mass `m_θ` of the steady state `f_{∞,θ}` on the ball (radial convention for d ≥ 2).
/// θ = 0 gives the critical mass, possibly infinite.
pub fn mass_for_theta(theta: f64, params: &ModelParams) -> f64 {
    if theta == 0.0 && !params.is_supercritical_regime() {
        return f64::INFINITY;
    }
    match params.dim {
        1 => 2.0 * radial_moment(theta, params, 0.0, 0.0, params.r1),
        d => radial_moment(theta, params, (d - 1) as f64, 0.0, params.r1),
    }
}

pub fn critical_mass(params: &ModelParams) -> CriticalMass {
    if params.is_supercritical_regime() {
        CriticalMass::Finite(mass_for_theta(0.0, params))
    } else {
        CriticalMass::Infinite
    }
}

/// Inverse of the strictly decreasing map θ ↦ m_θ, by bisection.
pub fn theta_for_mass(mass: f64, params: &ModelParams) -> Result<f64> {
    theta_for_mass_with(mass, params, critical_mass(params))
}

fn theta_for_mass_with(mass: f64, params: &ModelParams, critical: CriticalMass) -> Result<f64> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    if let CriticalMass::Finite(mc) = critical {
        if mass >= mc {
            return Err(Error::SupercriticalMass { mass, critical: mc });
        }
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while mass_for_theta(hi, params) > mass {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::InvalidParameter(format!("mass {mass} too small to invert")));
        }
    }
    let target = 1e-12 * mass;
    let mut best = (f64::INFINITY, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = mass_for_theta(mid, params);
        let err = (m - mass).abs();
        if err < best.0 {
            best = (err, mid);
        }
        if err <= target || hi - lo <= 1e-16 * hi {
            break;
        }
        if m > mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.1)
}

/// The entropy minimiser among nonnegative measures of the given mass.
/// At `mass = m_c` the supercritical branch is taken with zero Dirac mass.
pub fn entropy_minimizer(mass: f64, params: &ModelParams) -> Result<MinimizerSpec> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    let critical = critical_mass(params);
    match critical {
        CriticalMass::Finite(mc) if mass >= mc => Ok(MinimizerSpec {
            theta: 0.0,
            dirac_mass: mass - mc,
            params: *params,
            total_mass: mass,
        }),
        _ => Ok(MinimizerSpec {
            theta: theta_for_mass_with(mass, params, critical)?,
            dirac_mass: 0.0,
            params: *params,
            total_mass: mass,
        }),
    }
}

/// `Φ(f) = (1/γ) ∫₀^f log(s^γ / (1 + s^γ)) ds`.
pub fn phi(f: f64, gamma: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    if gamma == 1.0 {
        return phi_kq(f);
    }
    phi_quad(f, gamma)
}

#[inline]
fn phi_kq(f: f64) -> f64 {
    // f ln f − (1+f) ln(1+f), arranged to avoid cancellation at large f
    -f * f.recip().ln_1p() - f.ln_1p()
}

/// I₁ = ∫₀¹ log(1 + s^γ) ds.
fn log1p_pow_integral_unit(gamma: f64) -> f64 {
    let breaks = geometric_breaks(1e-8, 1.0, true);
    quad::integrate_breaks(|s: f64| s.powf(gamma).ln_1p(), &breaks, 1e-14).value
}

fn phi_quad(f: f64, gamma: f64) -> f64 {
    if f <= 1.0 {
        let breaks = clip_breaks(&geometric_breaks(1e-8 * f, f, true), 0.0, f);
        let tail = quad::integrate_breaks(|s: f64| s.powf(gamma).ln_1p(), &breaks, 1e-14).value;
        f * f.ln() - f - tail / gamma
    } else {
        let i1 = log1p_pow_integral_unit(gamma);
        let breaks = geometric_breaks(1.0, f, false);
        let j = quad::integrate_breaks(|s: f64| s.powf(-gamma).ln_1p(), &breaks, 1e-14).value;
        -1.0 - (i1 + j) / gamma
    }
}

/// `Φ'(f) = (1/γ) log(f^γ / (1 + f^γ))`.
pub fn phi_prime(f: f64, gamma: f64) -> f64 {
    if f > 1.0 {
        -f.powf(-gamma).ln_1p() / gamma
    } else {
        f.ln() - f.powf(gamma).ln_1p() / gamma
    }
}

/// `Ψ_d(s) = Ψ(s/d)` with `Ψ(s) = s Φ(1/s)` and `Ψ(0) = 0`.
pub fn psi(s: f64, gamma: f64, dim: usize) -> f64 {
    let s = s / dim as f64;
    if s <= 0.0 || !s.recip().is_finite() {
        return 0.0;
    }
    s * phi(1.0 / s, gamma)
}

/// `Ψ''(s) = 1 / (s³ mob(1/s))` (dimension 1 form).
pub fn psi_second(s: f64, gamma: f64) -> f64 {
    1.0 / (s * s * s * mob(1.0 / s, gamma))
}

/// Fast evaluator of Φ and Ψ_d for a fixed γ.
///
/// For γ ≠ 1, Φ is tabulated in `x = ln f` on `[-40, 40]` with values and
/// the first two x-derivatives, and evaluated by quintic Hermite interpolation
/// (abs. error well below 1e-12). Outside the table the small-f expansion or
/// the large-f tail expansion is used.
#[derive(Debug, Clone)]
pub struct EntropyKernel {
    gamma: f64,
    table: Option<PhiTable>,
}

#[derive(Debug, Clone)]
struct PhiTable {
    x0: f64,
    dx: f64,
    // (Φ, dΦ/dx, d²Φ/dx²) at each node
    nodes: Vec<[f64; 3]>,
    phi_inf: Option<f64>,
}

const TABLE_X_MIN: f64 = -40.0;
const TABLE_X_MAX: f64 = 40.0;
const TABLE_DX: f64 = 0.02;

impl EntropyKernel {
    pub fn new(gamma: f64) -> Self {
        if gamma == 1.0 {
            return Self { gamma, table: None };
        }
        let n = ((TABLE_X_MAX - TABLE_X_MIN) / TABLE_DX).round() as usize + 1;
        let nodes: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let x = TABLE_X_MIN + TABLE_DX * i as f64;
                let f = x.exp();
                let p1 = phi_prime(f, gamma);
                let p2 = 1.0 / mob(f, gamma);
                [phi_quad(f, gamma), f * p1, f * p1 + f * f * p2]
            })
            .collect();
        let phi_inf = (gamma > 1.0).then(|| {
            let f = TABLE_X_MAX.exp();
            nodes[n - 1][0] - large_f_tail(f, gamma)
        });
        Self { gamma, table: Some(PhiTable { x0: TABLE_X_MIN, dx: TABLE_DX, nodes, phi_inf }) }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn phi(&self, f: f64) -> f64 {
        if f <= 0.0 {
            return 0.0;
        }
        let table = match &self.table {
            None => return phi_kq(f),
            Some(t) => t,
        };
        let x = f.ln();
        if x < TABLE_X_MIN {
            let g = self.gamma;
            return f * x - f - f.powf(g + 1.0) / (g * (g + 1.0));
        }
        if x >= TABLE_X_MAX {
            return match table.phi_inf {
                Some(pinf) => pinf + large_f_tail(f, self.gamma),
                None => phi_quad(f, self.gamma),
            };
        }
        table.eval(x)
    }

    pub fn psi(&self, s: f64, dim: usize) -> f64 {
        let s = s / dim as f64;
        // Ψ(s) → 0 as s → 0; 1/s overflows for denormal s
        if s <= 0.0 || !s.recip().is_finite() {
            return 0.0;
        }
        s * self.phi(1.0 / s)
    }
}

/// `(1/γ) ∫_f^∞ log(1 + s^{-γ}) ds` for large f (γ > 1), three terms.
fn large_f_tail(f: f64, gamma: f64) -> f64 {
    let t = |k: f64| f.powf(1.0 - k * gamma) / (k * gamma - 1.0) / k;
    (t(1.0) - t(2.0) + t(3.0)) / gamma
}

impl PhiTable {
    fn eval(&self, x: f64) -> f64 {
        let pos = (x - self.x0) / self.dx;
        let i = (pos.floor() as usize).min(self.nodes.len() - 2);
        let t = pos - i as f64;
        let h = self.dx;
        let [p0, d0, s0] = self.nodes[i];
        let [p1, d1, s1] = self.nodes[i + 1];
        // quintic Hermite basis on [0, 1]
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
        let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
        p0 * h00 + p1 * h01 + h * (d0 * h10 + d1 * h11) + h * h * (s0 * h20 + s1 * h21)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(gamma: f64, dim: usize) -> ModelParams {
        ModelParams::new(gamma, dim, 1.0).unwrap()
    }

    #[test]
    fn steady_state_examples() {
        assert_abs_diff_eq!(steady_state_density(2f64.ln(), 1.0, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(steady_state_density(0.0, 1.0, 0.0), Err(Error::SingularPoint));
        // leading order 2/v² for γ = 1
        let v = 1e-4;
        let f = steady_state_density(0.0, 1.0, v).unwrap();
        assert!((f * v * v / 2.0 - 1.0).abs() < 1e-8);
        // 30-digit evaluation: (expm1(2.9*(0.125+0.1)))^(-1/2.9)
        let want = 1.029_040_163_572_478_9;
        assert_abs_diff_eq!(steady_state_density(0.1, 2.9, 0.5).unwrap(), want, epsilon = 1e-14);
    }

    #[test]
    fn steady_state_monotone() {
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let v = 0.02 * i as f64;
            let f = steady_state_density(0.3, 2.9, v).unwrap();
            assert!(f < last);
            last = f;
        }
        assert!(steady_state_density(0.3, 1.0, 0.4).unwrap() > steady_state_density(0.31, 1.0, 0.4).unwrap());
    }

    #[test]
    fn critical_series_matches_closed_form() {
        for gamma in [1.0, 2.9] {
            let c = critical_prefactor(gamma);
            for r in [1e-3, 1e-2] {
                let exact = steady_state_unchecked(0.0, gamma, r);
                let series = c * r.powf(-2.0 / gamma) * (1.0 - r * r / 4.0 + (3.0 - gamma) * r.powi(4) / 96.0);
                assert!((exact / series - 1.0).abs() < 1e-11 * (r / 1e-2).powi(6) + 1e-15);
            }
        }
    }

    #[test]
    fn critical_mass_values() {
        // 30-digit tanh-sinh reference values
        let m1 = critical_mass(&p(2.9, 1)).value();
        assert_abs_diff_eq!(m1, 5.480_880_531_386_020_6, epsilon = 1e-10);
        let m3 = critical_mass(&p(1.0, 3)).value();
        assert_abs_diff_eq!(m3, 1.841_647_455_657_482, epsilon = 1e-10);
        assert_eq!(critical_mass(&p(1.0, 2)), CriticalMass::Infinite);
        assert_eq!(critical_mass(&p(2.0, 1)), CriticalMass::Infinite);
    }

    #[test]
    fn theta_round_trip() {
        for params in [p(2.9, 1), p(1.0, 3), p(1.0, 2)] {
            for theta in [0.1, 0.5, 2.0] {
                let m = mass_for_theta(theta, &params);
                let back = theta_for_mass(m, &params).unwrap();
                assert!((back - theta).abs() < 1e-8, "{params:?} {theta} {back}");
                assert!((mass_for_theta(back, &params) - m).abs() < 1e-10 * m);
            }
        }
    }

    #[test]
    fn theta_monotone_and_errors() {
        let params = p(2.9, 1);
        let m = 2.0;
        assert!(theta_for_mass(m / 2.0, &params).unwrap() > theta_for_mass(m, &params).unwrap());
        assert!(matches!(theta_for_mass(5.37, &params), Ok(t) if t > 0.0));
        let mc = critical_mass(&params).value();
        assert!(matches!(theta_for_mass(mc, &params), Err(Error::SupercriticalMass { .. })));
        assert!(matches!(theta_for_mass(6.0, &params), Err(Error::SupercriticalMass { .. })));
        assert!(matches!(theta_for_mass(0.0, &params), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn minimizer_branches() {
        let params = p(1.0, 3);
        let sub = entropy_minimizer(0.335, &params).unwrap();
        assert!(sub.theta > 0.0 && sub.dirac_mass == 0.0);
        let sup = entropy_minimizer(2.59, &params).unwrap();
        let mc = critical_mass(&params).value();
        assert_eq!(sup.theta, 0.0);
        assert_abs_diff_eq!(sup.dirac_mass, 2.59 - mc, epsilon = 1e-14);
        assert!((sup.dirac_mass - 0.75).abs() < 0.01);
        let edge = entropy_minimizer(mc, &params).unwrap();
        assert_eq!((edge.theta, edge.dirac_mass), (0.0, 0.0));
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(0.0, 2.9), 0.0);
        assert_abs_diff_eq!(phi(1.0, 1.0), -2.0 * 2f64.ln(), epsilon = 1e-15);
        // the general quadrature route agrees with the γ = 1 closed form
        for f in [0.3, 1.0, 7.0, 1e6] {
            assert_abs_diff_eq!(phi_quad(f, 1.0), phi_kq(f), epsilon = 1e-11);
        }
        // composite Simpson oracle on the defining integral, after removing
        // the log singularity: Φ(f) = f ln f − f − (1/γ)∫₀^f ln(1+s^γ) ds
        let g = 2.9;
        let f = 3.0;
        let simpson = quad::simpson(&|s: f64| s.powf(g).ln_1p(), 0.0, f, 1 << 16);
        let oracle = f * f.ln() - f - simpson / g;
        assert_abs_diff_eq!(phi(f, g), oracle, epsilon = 1e-10);
        assert!(phi(f, g) <= 0.0);
    }

    #[test]
    fn phi_derivative_matches_finite_differences() {
        for g in [1.0, 2.9] {
            for f in [0.5, 1.0, 5.0] {
                let h = 1e-5;
                let fd = (phi(f + h, g) - phi(f - h, g)) / (2.0 * h);
                assert!((fd - phi_prime(f, g)).abs() < 1e-6, "{g} {f}");
            }
        }
    }

    #[test]
    fn psi_properties() {
        assert_eq!(psi(0.0, 2.9, 1), 0.0);
        assert_abs_diff_eq!(psi(1.0, 1.0, 1), -2.0 * 2f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(psi(3.0, 1.0, 3), psi(1.0, 1.0, 1), epsilon = 1e-15);
        for g in [1.0, 2.9] {
            assert!(psi(0.5, g, 1) + psi(1.5, g, 1) >= 2.0 * psi(1.0, g, 1));
            let mut s = 0.2;
            while s <= 5.0 {
                let h = 1e-3;
                let fd = (psi(s + h, g, 1) - 2.0 * psi(s, g, 1) + psi(s - h, g, 1)) / (h * h);
                let want = psi_second(s, g);
                assert!((fd - want).abs() < 1e-4 * want, "{g} {s}: {fd} vs {want}");
                s += 0.4;
            }
        }
    }

    #[test]
    fn psi_at_denormal_slope() {
        for gamma in [1.0, 2.9] {
            let k = EntropyKernel::new(gamma);
            assert_eq!(k.psi(1e-320, 3), 0.0);
            assert_eq!(psi(1e-320, gamma, 1), 0.0);
            assert!(k.psi(1e-300, 3).is_finite());
        }
    }

    #[test]
    fn kernel_agrees_with_quadrature() {
        for g in [2.9, 1.5, 0.7] {
            let k = EntropyKernel::new(g);
            for &f in &[1e-20, 1e-12, 3e-5, 0.01, 0.3, 0.999, 1.0, 1.7, 42.0, 1e5, 1e12, 1e16] {
                let want = phi_quad(f, g);
                assert!((k.phi(f) - want).abs() < 1e-12 * want.abs().max(1.0), "{g} {f}: {} vs {want}", k.phi(f));
            }
        }
        let k = EntropyKernel::new(2.9);
        let huge = 1e25;
        assert!((k.phi(huge) - phi_quad(huge, 2.9)).abs() < 1e-11);
        let k1 = EntropyKernel::new(1.0);
        assert_eq!(k1.psi(2.0, 1), psi(2.0, 1.0, 1));
    }

    #[test]
    fn steady_state_mass_two_rules_agree() {
        let params = p(2.9, 1);
        let theta = 0.4;
        let gk = mass_for_theta(theta, &params);
        let simpson = 2.0 * quad::simpson(&|r: f64| steady_state_unchecked(theta, 2.9, r), 0.0, 1.0, 1 << 16);
        assert!((gk - simpson).abs() < 1e-8);
        let params3 = p(1.0, 3);
        let gk3 = mass_for_theta(theta, &params3);
        let s3 = quad::simpson(&|r: f64| steady_state_unchecked(theta, 1.0, r) * r * r, 0.0, 1.0, 1 << 16);
        assert!((gk3 - s3).abs() < 1e-8);
    }
}
