//! Densities and their pseudo-inverse cumulative distributions.
//!
//! In 1D the unknown is `u(x) = inf{v : ∫_{-R1}^v f ≥ x}` on the mass interval
//! `[0, m]`. For radial data in dimension d the unknown is the normalised
//! `S(z) = R(z)^d`, where `R` inverts the radial partial mass
//! `z = ∫_0^R g(r) r^{d-1} dr`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{radial_moment, ModelParams, MinimizerSpec};
use crate::quad;

/// Cells with slope `Δ/h` below this are treated as condensate.
pub const CONDENSATE_SLOPE: f64 = 1e-8;

/// Relative tolerance on the mass check in [`inverse_cdf_from_density`].
pub const MASS_TOL: f64 = 1e-3;

/// Equispaced mass grid with `n_points` nodes on `[0, mass_total]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_points: usize,
    pub mass_total: f64,
    pub spacing: f64,
}

impl Grid {
    pub fn new(n_points: usize, mass_total: f64) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidParameter(format!("grid needs at least 3 points, got {n_points}")));
        }
        if !(mass_total > 0.0 && mass_total.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass_total}")));
        }
        Ok(Self { n_points, mass_total, spacing: mass_total / (n_points - 1) as f64 })
    }

    /// Mass coordinate of node `i`; the last node is exactly `mass_total`.
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.mass_total
        } else {
            self.spacing * i as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileKind {
    InverseCdf1D,
    RadialNormalized(usize),
}

/// A monotone grid function with pinned endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub kind: ProfileKind,
    pub grid: Grid,
    pub values: Vec<f64>,
    pub params: ModelParams,
}

impl Profile {
    pub fn new(kind: ProfileKind, grid: Grid, values: Vec<f64>, params: ModelParams) -> Result<Self> {
        let p = Self { kind, grid, values, params };
        p.check()?;
        Ok(p)
    }

    pub fn kind_for(params: &ModelParams) -> ProfileKind {
        if params.dim == 1 {
            ProfileKind::InverseCdf1D
        } else {
            ProfileKind::RadialNormalized(params.dim)
        }
    }

    /// Pinned boundary values `(left, right)`.
    pub fn bounds(&self) -> (f64, f64) {
        bounds_for(self.kind, &self.params)
    }

    /// Validates length, pinned endpoints, monotonicity and range.
    pub fn check(&self) -> Result<()> {
        let n = self.grid.n_points;
        if self.values.len() != n {
            return Err(Error::InvalidDensity(format!("profile has {} values, grid has {n}", self.values.len())));
        }
        if let ProfileKind::RadialNormalized(d) = self.kind {
            if d != self.params.dim {
                return Err(Error::InvalidParameter(format!("profile dimension {d} != params.dim {}", self.params.dim)));
            }
        }
        let (lo, hi) = self.bounds();
        if self.values[0] != lo || self.values[n - 1] != hi {
            return Err(Error::InvalidDensity("profile endpoints are not pinned".into()));
        }
        for (i, w) in self.values.windows(2).enumerate() {
            if !(w[1] >= w[0]) {
                return Err(Error::InvalidDensity(format!("profile decreases at node {i}")));
            }
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing
    }

    /// Values at every `stride`-th node (coarsening of nested grids).
    pub fn subsample(&self, stride: usize) -> Result<Profile> {
        let n = self.grid.n_points;
        if stride == 0 || (n - 1) % stride != 0 {
            return Err(Error::InvalidParameter(format!("stride {stride} does not nest into {n} points")));
        }
        let values: Vec<f64> = self.values.iter().step_by(stride).copied().collect();
        let grid = Grid::new(values.len(), self.grid.mass_total)?;
        Profile::new(self.kind, grid, values, self.params)
    }
}

pub(crate) fn bounds_for(kind: ProfileKind, params: &ModelParams) -> (f64, f64) {
    match kind {
        ProfileKind::InverseCdf1D => (-params.r1, params.r1),
        ProfileKind::RadialNormalized(d) => (0.0, params.r1.powi(d as i32)),
    }
}

/// Mass distribution in the physical variable (v in 1D, r for radial data),
/// with weight `w` such that the partial mass is `∫ w`.
pub trait MassSource: Sync {
    /// Integrand in the physical variable (density in 1D, `g(r) r^{d-1}` radially).
    fn weight(&self, x: f64) -> f64;
    /// `∫_a^b weight` for `a ≤ b`.
    fn mass_between(&self, a: f64, b: f64) -> f64;
}

/// Mass source backed by a density callable and adaptive quadrature.
pub struct DensitySource<'a> {
    density: &'a (dyn Fn(f64) -> f64 + Sync),
    radial_power: i32,
    tol: f64,
}

impl<'a> DensitySource<'a> {
    pub fn new(density: &'a (dyn Fn(f64) -> f64 + Sync), params: &ModelParams) -> Self {
        let radial_power = if params.dim == 1 { 0 } else { params.dim as i32 - 1 };
        Self { density, radial_power, tol: 1e-15 }
    }
}

impl MassSource for DensitySource<'_> {
    fn weight(&self, x: f64) -> f64 {
        (self.density)(x) * x.powi(self.radial_power)
    }

    fn mass_between(&self, a: f64, b: f64) -> f64 {
        quad::integrate(|x| self.weight(x), a, b, self.tol).value
    }
}

/// Steady state `f_{∞,θ}` (θ = 0 allowed) as a mass source.
pub struct SteadyStateSource {
    pub theta: f64,
    pub params: ModelParams,
}

impl SteadyStateSource {
    fn moment(&self, a: f64, b: f64) -> f64 {
        let k = if self.params.dim == 1 { 0.0 } else { (self.params.dim - 1) as f64 };
        radial_moment(self.theta, &self.params, k, a, b)
    }
}

impl MassSource for SteadyStateSource {
    fn weight(&self, x: f64) -> f64 {
        let r = x.abs();
        if r == 0.0 && self.theta == 0.0 {
            return f64::INFINITY;
        }
        let f = crate::model::steady_state_unchecked(self.theta, self.params.gamma, r);
        if self.params.dim == 1 {
            f
        } else {
            f * r.powi(self.params.dim as i32 - 1)
        }
    }

    fn mass_between(&self, a: f64, b: f64) -> f64 {
        if self.params.dim > 1 || a >= 0.0 {
            self.moment(a, b)
        } else if b <= 0.0 {
            self.moment(-b, -a)
        } else {
            self.moment(0.0, -a) + self.moment(0.0, b)
        }
    }
}

/// Cumulative mass tabulated on an auxiliary mesh of the physical variable.
pub struct CumulativeTable<'s, S: MassSource + ?Sized> {
    source: &'s S,
    xs: Vec<f64>,
    cum: Vec<f64>,
}

impl<'s, S: MassSource + ?Sized> CumulativeTable<'s, S> {
    pub fn new(source: &'s S, lo: f64, hi: f64, panels: usize) -> Result<Self> {
        let panels = panels.max(1);
        let xs: Vec<f64> = (0..=panels)
            .map(|k| if k == panels { hi } else { lo + (hi - lo) * k as f64 / panels as f64 })
            .collect();
        let pieces: Vec<f64> = xs.par_windows(2).map(|w| source.mass_between(w[0], w[1])).collect();
        let mut cum = Vec::with_capacity(xs.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for (k, p) in pieces.iter().enumerate() {
            if !(*p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidDensity(format!(
                    "negative or non-finite mass {p} on [{}, {}]",
                    xs[k],
                    xs[k + 1]
                )));
            }
            acc += p;
            cum.push(acc);
        }
        Ok(Self { source, xs, cum })
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Smallest x with cumulative mass ≥ `target`.
    pub fn invert(&self, target: f64) -> f64 {
        let n = self.xs.len();
        if target <= 0.0 {
            return self.xs[0];
        }
        if target >= self.total() {
            return self.xs[n - 1];
        }
        // first k with cum[k] ≥ target; the panel is [k−1, k]
        let k = self.cum.partition_point(|&c| c < target).max(1);
        let (mut a, mut b) = (self.xs[k - 1], self.xs[k]);
        let base = self.cum[k - 1];
        let need = target - base;
        let panel_mass = self.cum[k] - base;
        let x0 = self.xs[k - 1];
        let scale = self.xs[n - 1].abs().max(self.xs[0].abs()).max(1e-300);
        let mut x = if panel_mass > 0.0 { a + (b - a) * (need / panel_mass) } else { a };
        let mass_tol = 1e-15 * self.total().max(1e-300);
        for _ in 0..100 {
            let m = self.source.mass_between(x0, x);
            let resid = m - need;
            if resid.abs() <= mass_tol {
                return x;
            }
            if resid > 0.0 {
                b = x;
            } else {
                a = x;
            }
            if b - a <= 1e-15 * scale {
                return 0.5 * (a + b);
            }
            let w = self.source.weight(x);
            let newton = x - resid / w;
            x = if w.is_finite() && w > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        }
        x
    }
}

fn aux_panels(grid: &Grid) -> usize {
    (10 * (grid.n_points - 1)).max(1000)
}

/// Pseudo-inverse CDF of a density on the grid.
///
/// The density is `f(v)` on `[-R1, R1]` in 1D and the radial `g(r)` on
/// `[0, R1]` for d ≥ 2. Its mass must match `grid.mass_total` within 0.1%;
/// the targets are rescaled to the computed mass so the endpoints pin exactly.
pub fn inverse_cdf_from_density(
    density: &(dyn Fn(f64) -> f64 + Sync),
    params: &ModelParams,
    grid: &Grid,
) -> Result<Profile> {
    let source = DensitySource::new(density, params);
    inverse_cdf_from_source(&source, params, grid)
}

/// As [`inverse_cdf_from_density`] for an arbitrary [`MassSource`].
pub fn inverse_cdf_from_source<S: MassSource + ?Sized>(
    source: &S,
    params: &ModelParams,
    grid: &Grid,
) -> Result<Profile> {
    let kind = Profile::kind_for(params);
    let lo = if params.dim == 1 { -params.r1 } else { 0.0 };
    let table = CumulativeTable::new(source, lo, params.r1, aux_panels(grid))?;
    let total = table.total();
    if (total - grid.mass_total).abs() > MASS_TOL * grid.mass_total {
        return Err(Error::MassInconsistency { computed: total, expected: grid.mass_total });
    }
    let scale = total / grid.mass_total;
    let n = grid.n_points;
    let mut values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = table.invert(grid.node(i) * scale);
            to_profile_value(x, params)
        })
        .collect();
    pin_and_sort(&mut values, kind, params);
    Profile::new(kind, *grid, values, *params)
}

fn to_profile_value(x: f64, params: &ModelParams) -> f64 {
    if params.dim == 1 {
        x
    } else {
        x.powi(params.dim as i32)
    }
}

fn pin_and_sort(values: &mut [f64], kind: ProfileKind, params: &ModelParams) {
    let (lo, hi) = bounds_for(kind, params);
    let n = values.len();
    for v in values.iter_mut() {
        *v = v.clamp(lo, hi);
    }
    values[0] = lo;
    values[n - 1] = hi;
    // Newton round-off can leave neighbours out of order by an ulp
    for i in 1..n {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
}

/// Density samples `(v, f)` (1D) or `(r, g)` (radial) at cell midpoints.
/// Cells with slope below [`CONDENSATE_SLOPE`] are omitted.
pub fn density_from_profile(profile: &Profile) -> Vec<(f64, f64)> {
    let h = profile.spacing();
    let vals = &profile.values;
    let mut out = Vec::with_capacity(vals.len());
    for w in vals.windows(2) {
        let delta = w[1] - w[0];
        if delta / h < CONDENSATE_SLOPE {
            continue;
        }
        match profile.kind {
            ProfileKind::InverseCdf1D => out.push((0.5 * (w[0] + w[1]), h / delta)),
            ProfileKind::RadialNormalized(d) => {
                let s_mid = 0.5 * (w[0] + w[1]);
                out.push((s_mid.powf(1.0 / d as f64), d as f64 * h / delta))
            }
        }
    }
    out
}

/// Discretised pseudo-inverse of the entropy minimiser.
///
/// A Dirac part at the origin becomes a flat zero segment: on `[0, dirac_mass]`
/// for radial profiles, and centred at `m/2` in 1D.
pub fn minimizer_profile(spec: &MinimizerSpec, grid: &Grid) -> Result<Profile> {
    let params = spec.params;
    if (spec.total_mass - grid.mass_total).abs() > 1e-12 * grid.mass_total {
        return Err(Error::MassInconsistency { computed: spec.total_mass, expected: grid.mass_total });
    }
    let kind = Profile::kind_for(&params);
    let source = SteadyStateSource { theta: spec.theta, params };
    let lo = if params.dim == 1 { -params.r1 } else { 0.0 };
    let table = CumulativeTable::new(&source, lo, params.r1, aux_panels(grid))?;
    let smooth_mass = table.total();
    let dirac = spec.dirac_mass;
    let m = grid.mass_total;
    // rescale so the smooth part carries exactly m − dirac
    let scale = if spec.dirac_mass > 0.0 { 1.0 } else { smooth_mass / m };
    let n = grid.n_points;
    let mut values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let z = grid.node(i);
            let x = if dirac > 0.0 {
                match params.dim {
                    1 => {
                        let left = 0.5 * (m - dirac);
                        if z < left {
                            table.invert(z)
                        } else if z <= left + dirac {
                            0.0
                        } else {
                            table.invert(z - dirac)
                        }
                    }
                    _ => {
                        if z <= dirac {
                            0.0
                        } else {
                            table.invert(z - dirac)
                        }
                    }
                }
            } else {
                table.invert(z * scale)
            };
            to_profile_value(x, &params)
        })
        .collect();
    if dirac > 0.0 && params.dim == 1 {
        // the critical profile is symmetric; enforce odd symmetry exactly
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let v = 0.5 * (values[j] - values[i]);
            values[i] = -v;
            values[j] = v;
        }
    }
    pin_and_sort(&mut values, kind, &params);
    Profile::new(kind, *grid, values, params)
}

/// Length of the leading/central flat-zero set of a profile, in mass units.
pub fn flat_zero_length(profile: &Profile) -> f64 {
    let h = profile.spacing();
    let zeros: Vec<usize> = (0..profile.values.len()).filter(|&i| profile.values[i] == 0.0).collect();
    match (zeros.first(), zeros.last()) {
        (Some(&a), Some(&b)) if b > a => h * (b - a) as f64,
        _ => 0.0,
    }
}
