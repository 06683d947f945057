//! Entropy, condensate size, decay-rate and blow-up-profile diagnostics.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{entropy_minimizer, steady_state_unchecked, EntropyKernel, ModelParams};
use crate::stepping::{Observer, StepReport};
use crate::transform::{minimizer_profile, Grid, Profile, ProfileKind};

/// Shared entropy kernel for γ; tables are built once per process.
pub fn kernel_for(gamma: f64) -> Arc<EntropyKernel> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<EntropyKernel>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(k) = cache.lock().unwrap().get(&gamma.to_bits()) {
        return k.clone();
    }
    let k = Arc::new(EntropyKernel::new(gamma));
    cache.lock().unwrap().entry(gamma.to_bits()).or_insert(k).clone()
}

/// `H(u) ≈ Σ h [ (u_i² + u_{i+1}²)/4 + Ψ((u_{i+1} − u_i)/h) ]`.
pub fn entropy_1d(u: &Profile) -> f64 {
    entropy_with(u, &kernel_for(u.params.gamma))
}

/// `H_d(S) ≈ Σ h [ (S_i^{2/d} + S_{i+1}^{2/d})/4 + Ψ_d((S_{i+1} − S_i)/h) ]`.
pub fn entropy_radial(s: &Profile) -> f64 {
    entropy_with(s, &kernel_for(s.params.gamma))
}

/// Entropy of either profile kind with a given kernel.
pub fn entropy_with(p: &Profile, kernel: &EntropyKernel) -> f64 {
    let h = p.spacing();
    let v = &p.values;
    match p.kind {
        ProfileKind::InverseCdf1D => v
            .windows(2)
            .map(|w| h * (0.25 * (w[0] * w[0] + w[1] * w[1]) + kernel.psi((w[1] - w[0]) / h, 1)))
            .sum(),
        ProfileKind::RadialNormalized(d) => {
            let e = 2.0 / d as f64;
            let kin = |s: f64| if s > 0.0 { s.powf(e) } else { 0.0 };
            v.windows(2)
                .map(|w| h * (0.25 * (kin(w[0]) + kin(w[1])) + kernel.psi((w[1] - w[0]) / h, d)))
                .sum()
        }
    }
}

/// Entropy of the discretised minimiser on the same grid.
pub fn h_infinity(params: &ModelParams, grid: &Grid) -> Result<f64> {
    let spec = entropy_minimizer(grid.mass_total, params)?;
    let prof = minimizer_profile(&spec, grid)?;
    Ok(entropy_with(&prof, &kernel_for(params.gamma)))
}

/// `h · #{interior i : |u_i| < threshold}` (1D) or `S_i < threshold` (radial).
///
/// In 1D only runs of at least two consecutive small nodes count: a single
/// node where a strictly increasing profile crosses zero is not a flat part.
pub fn condensate_size(profile: &Profile, threshold: f64) -> f64 {
    let n = profile.values.len();
    let inner = &profile.values[1..n - 1];
    let count = match profile.kind {
        ProfileKind::InverseCdf1D => {
            let mut count = 0;
            let mut run = 0;
            for u in inner.iter().chain(std::iter::once(&f64::INFINITY)) {
                if u.abs() < threshold {
                    run += 1;
                } else {
                    if run >= 2 {
                        count += run;
                    }
                    run = 0;
                }
            }
            count
        }
        ProfileKind::RadialNormalized(_) => inner.iter().filter(|&&s| s < threshold).count(),
    };
    profile.spacing() * count as f64
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub entropy: Vec<(f64, f64)>,
    pub condensate: Vec<(f64, f64)>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, Profile)>,
    pub h_infinity: f64,
}

/// `α` such that `H(t) − H_∞ ≈ C e^{−αt}` on the window, by least squares on
/// the logarithm.
pub fn decay_rate(trace: &TraceSet, window: (f64, f64)) -> Result<f64> {
    let (t1, t2) = window;
    if !(t2 > t1) {
        return Err(Error::WindowInvalid(format!("empty window ({t1}, {t2})")));
    }
    let mut pts = Vec::new();
    for &(t, h) in &trace.entropy {
        if t < t1 || t > t2 {
            continue;
        }
        let rel = h - trace.h_infinity;
        if !(rel > 0.0) {
            return Err(Error::WindowInvalid(format!("relative entropy {rel:e} ≤ 0 at t = {t}")));
        }
        pts.push((t, rel.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::InsufficientSamples { found: pts.len(), needed: 2 });
    }
    Ok(-least_squares_slope(&pts))
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    pub c_tilde: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Cells this close to the flat set are left out of the profile fit.
const FIT_SKIP_CELLS: usize = 3;

/// Density samples `(|v|, f/f_c)` away from the condensate.
pub fn critical_ratio_samples(profile: &Profile, window: (f64, f64)) -> Vec<(f64, f64)> {
    let h = profile.spacing();
    let v = &profile.values;
    let gamma = profile.params.gamma;
    let ncell = v.len() - 1;
    let flat: Vec<bool> = v.windows(2).map(|w| (w[1] - w[0]) / h < crate::transform::CONDENSATE_SLOPE).collect();
    let mut near = vec![false; ncell];
    for (c, &f) in flat.iter().enumerate() {
        if f {
            let lo = c.saturating_sub(FIT_SKIP_CELLS);
            let hi = (c + FIT_SKIP_CELLS).min(ncell - 1);
            near[lo..=hi].iter_mut().for_each(|x| *x = true);
        }
    }
    let mut out = Vec::new();
    for c in 0..ncell {
        if near[c] {
            continue;
        }
        let delta = v[c + 1] - v[c];
        let (r, f) = match profile.kind {
            ProfileKind::InverseCdf1D => ((0.5 * (v[c] + v[c + 1])).abs(), h / delta),
            ProfileKind::RadialNormalized(d) => {
                ((0.5 * (v[c] + v[c + 1])).powf(1.0 / d as f64), d as f64 * h / delta)
            }
        };
        if r < window.0 || r > window.1 || r == 0.0 {
            continue;
        }
        out.push((r, f / steady_state_unchecked(0.0, gamma, r)));
    }
    out
}

/// Least-squares fit of `f/f_c ≈ 1 + c̃ |v|` on `|v| ∈ window`.
pub fn blowup_profile_fit(profile: &Profile, window: (f64, f64)) -> Result<BlowupFit> {
    let pts = fit_samples(profile, window)?;
    Ok(fit_through_origin(pts.iter().map(|&(r, q)| (r, q - 1.0))))
}

/// Least-squares fit of `f − f_c ≈ c |v|` on `|v| ∈ window`.
///
/// In 1D the deviation from the critical state is linear in `|v|`, so the
/// ratio `f/f_c − 1` grows like `|v|^{1+2/γ}` there and this form is the
/// better description.
pub fn blowup_difference_fit(profile: &Profile, window: (f64, f64)) -> Result<BlowupFit> {
    let gamma = profile.params.gamma;
    let pts = fit_samples(profile, window)?;
    Ok(fit_through_origin(pts.iter().map(|&(r, q)| (r, (q - 1.0) * steady_state_unchecked(0.0, gamma, r)))))
}

fn fit_samples(profile: &Profile, window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    if !(window.0 >= 0.0 && window.1 > window.0 && window.1 <= profile.params.r1) {
        return Err(Error::WindowInvalid(format!("({}, {}) not inside (0, R1)", window.0, window.1)));
    }
    let pts = critical_ratio_samples(profile, window);
    if pts.len() < 5 {
        return Err(Error::InsufficientSamples { found: pts.len(), needed: 5 });
    }
    Ok(pts)
}

/// `y ≈ c x` with r² measured against the mean of `y`.
fn fit_through_origin(pts: impl Iterator<Item = (f64, f64)> + Clone) -> BlowupFit {
    let n = pts.clone().count();
    let sxy: f64 = pts.clone().map(|(x, y)| x * y).sum();
    let sxx: f64 = pts.clone().map(|(x, _)| x * x).sum();
    let c = sxy / sxx;
    let mean = pts.clone().map(|p| p.1).sum::<f64>() / n as f64;
    let ss_res: f64 = pts.clone().map(|(x, y)| (y - c * x).powi(2)).sum();
    let ss_tot: f64 = pts.map(|(_, y)| (y - mean).powi(2)).sum();
    let r_squared = if ss_tot <= 1e-30 { if ss_res <= 1e-24 { 1.0 } else { 0.0 } } else { 1.0 - ss_res / ss_tot };
    BlowupFit { c_tilde: c, r_squared, samples: n }
}

/// Per-step entropy monotonicity bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    pub steps_checked: usize,
    pub max_increase: f64,
    pub violations: usize,
    pub slack: f64,
}

/// Observer collecting entropy, condensate size and snapshots.
pub struct TraceRecorder {
    pub cadence: usize,
    pub threshold: f64,
    pub snapshot_times: Vec<f64>,
    /// Compute the entropy at every step to check monotonicity.
    pub check_every_step: bool,
    pub trace: TraceSet,
    pub monotonicity: MonotonicityCheck,
    pub condensate_onset: Option<f64>,
    pub condensate_offset: Option<f64>,
    pub max_condensate: f64,
    kernel: Arc<EntropyKernel>,
    tau: f64,
    last_entropy: Option<f64>,
    last_condensate: f64,
}

impl TraceRecorder {
    pub fn new(params: &ModelParams, tau: f64, threshold: f64, h_infinity: f64) -> Self {
        Self {
            cadence: 10,
            threshold,
            snapshot_times: Vec::new(),
            check_every_step: true,
            trace: TraceSet { h_infinity, ..Default::default() },
            monotonicity: MonotonicityCheck { slack: 1e-10, ..Default::default() },
            condensate_onset: None,
            condensate_offset: None,
            max_condensate: 0.0,
            kernel: kernel_for(params.gamma),
            tau,
            last_entropy: None,
            last_condensate: 0.0,
        }
    }

    pub fn with_cadence(mut self, cadence: usize) -> Self {
        self.cadence = cadence.max(1);
        self
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    fn wants_snapshot(&self, t: f64) -> bool {
        self.snapshot_times.iter().any(|&s| (s - t).abs() < 0.5 * self.tau)
    }
}

impl Observer for TraceRecorder {
    fn observe(&mut self, step: usize, time: f64, profile: &Profile, _report: Option<&StepReport>) -> Result<()> {
        let sample = step % self.cadence == 0;
        if sample || self.check_every_step {
            let h = entropy_with(profile, &self.kernel);
            if let Some(prev) = self.last_entropy {
                let inc = h - prev;
                let m = &mut self.monotonicity;
                m.steps_checked += 1;
                m.max_increase = m.max_increase.max(inc);
                if inc > m.slack {
                    m.violations += 1;
                }
            }
            self.last_entropy = Some(h);
            if sample {
                self.trace.entropy.push((time, h));
            }
        }
        let xp = condensate_size(profile, self.threshold);
        self.max_condensate = self.max_condensate.max(xp);
        let mut snap = self.wants_snapshot(time);
        if xp > 0.0 && self.last_condensate == 0.0 && self.condensate_onset.is_none() {
            self.condensate_onset = Some(time);
            snap = true;
        }
        if xp == 0.0 && self.last_condensate > 0.0 {
            self.condensate_offset = Some(time);
            snap = true;
        }
        self.last_condensate = xp;
        if sample {
            self.trace.condensate.push((time, xp));
        }
        if snap {
            self.trace.snapshots.push((time, profile.clone()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{critical_mass, psi};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p1d(gamma: f64) -> ModelParams {
        ModelParams::new(gamma, 1, 1.0).unwrap()
    }

    fn linear_1d(n: usize, gamma: f64) -> Profile {
        let grid = Grid::new(n, 2.0).unwrap();
        let vals: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * grid.node(i) / 2.0).collect();
        let mut vals = vals;
        vals[n - 1] = 1.0;
        Profile::new(ProfileKind::InverseCdf1D, grid, vals, p1d(gamma)).unwrap()
    }

    #[test]
    fn linear_profile_entropy() {
        let exact = 1.0 / 3.0 - 4.0 * 2f64.ln();
        let mut errs = Vec::new();
        for n in [11, 21, 41] {
            errs.push((entropy_1d(&linear_1d(n, 1.0)) - exact).abs());
        }
        assert!(errs[2] < 2e-3);
        assert!((errs[0] / errs[1] - 4.0).abs() < 0.1 && (errs[1] / errs[2] - 4.0).abs() < 0.1);
    }

    #[test]
    fn flat_cells_have_only_kinetic_part() {
        let grid = Grid::new(5, 1.0).unwrap();
        let params = p1d(2.9);
        let vals = vec![-1.0, 0.0, 0.0, 0.0, 1.0];
        let prof = Profile::new(ProfileKind::InverseCdf1D, grid, vals, params).unwrap();
        let h = 0.25;
        let edge = h * (0.25 + psi(1.0 / h, 2.9, 1));
        assert!((entropy_1d(&prof) - 2.0 * edge).abs() < 1e-12);
    }

    #[test]
    fn radial_linear_entropy() {
        // S(z) = 3z/c, d = 3: ∫ ½ S^{2/3} dz + m̄ Ψ_3(3/c)
        let c: f64 = 2.0;
        let m = c / 3.0;
        let params = ModelParams::new(1.0, 3, 1.0).unwrap();
        let exact = 0.5 * (3.0 / c).powf(2.0 / 3.0) * m.powf(5.0 / 3.0) * 3.0 / 5.0 + m * psi(3.0 / c, 1.0, 3);
        let mut errs = Vec::new();
        for n in [101, 201, 401] {
            let grid = Grid::new(n, m).unwrap();
            let mut vals: Vec<f64> = (0..n).map(|i| 3.0 * grid.node(i) / c).collect();
            vals[n - 1] = 1.0;
            let prof = Profile::new(ProfileKind::RadialNormalized(3), grid, vals, params).unwrap();
            errs.push((entropy_radial(&prof) - exact).abs());
        }
        // the S^{2/3} cusp at 0 limits the kinetic rule to order 5/3
        assert!(errs[2] < 1e-4, "{errs:?}");
        assert!(errs[0] / errs[1] > 2.8 && errs[1] / errs[2] > 2.8, "{errs:?}");
    }

    #[test]
    fn minimizer_has_lowest_entropy() {
        let params = p1d(2.9);
        let m = 3.0;
        let grid = Grid::new(41, m).unwrap();
        let hinf = h_infinity(&params, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut inc: Vec<f64> = (0..40).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = inc.iter().sum();
            inc.iter_mut().for_each(|x| *x *= 2.0 / s);
            let mut vals = vec![-1.0];
            for d in inc {
                vals.push(vals.last().unwrap() + d);
            }
            vals[40] = 1.0;
            let prof = Profile::new(ProfileKind::InverseCdf1D, grid, vals, params).unwrap();
            assert!(hinf <= entropy_1d(&prof));
        }
    }

    #[test]
    fn condensate_counting() {
        let grid = Grid::new(8, 1.0).unwrap();
        let params = p1d(2.9);
        let prof = Profile::new(
            ProfileKind::InverseCdf1D,
            grid,
            vec![-1.0, -0.5, 0.0, 0.0, 0.0, 0.2, 0.7, 1.0],
            params,
        )
        .unwrap();
        assert!((condensate_size(&prof, 1e-6) - 3.0 * grid.spacing).abs() < 1e-15);
        assert!(condensate_size(&prof, 0.3) >= condensate_size(&prof, 1e-6));
        let lin = linear_1d(10, 2.9);
        assert_eq!(condensate_size(&lin, 1e-6), 0.0);
        // odd mesh: the centre node sits exactly at zero without a flat part
        let odd = linear_1d(11, 2.9);
        assert_eq!(odd.values[5], 0.0);
        assert_eq!(condensate_size(&odd, 1e-6), 0.0);
    }

    #[test]
    fn decay_rate_on_exponentials() {
        let mk = |f: &dyn Fn(f64) -> f64| TraceSet {
            entropy: (0..100).map(|k| (0.01 * k as f64, f(0.01 * k as f64))).collect(),
            h_infinity: -1.5,
            ..Default::default()
        };
        let tr = mk(&|t| -1.5 + (-2.0 * t).exp());
        assert!((decay_rate(&tr, (0.05, 0.35)).unwrap() - 2.0).abs() < 1e-10);
        let tr = mk(&|t| -1.5 + 7.0 * (-23.7 * t).exp());
        assert!((decay_rate(&tr, (0.05, 0.35)).unwrap() - 23.7).abs() < 1e-10);
        let tr = mk(&|_| -1.0);
        assert!(decay_rate(&tr, (0.05, 0.35)).unwrap().abs() < 1e-12);
        let tr = mk(&|_| -2.0);
        assert!(matches!(decay_rate(&tr, (0.05, 0.35)), Err(Error::WindowInvalid(_))));
        assert!(matches!(decay_rate(&tr, (2.0, 3.0)), Err(Error::InsufficientSamples { .. })));
    }

    /// `f_c(v)(1 + c|v|)` on `[-R1, R1]`, as a mass source.
    struct Planted {
        c: f64,
        params: ModelParams,
    }

    impl Planted {
        fn sym(&self, a: f64, b: f64, k: f64) -> f64 {
            let m = |lo: f64, hi: f64| crate::model::radial_moment(0.0, &self.params, k, lo, hi);
            if a >= 0.0 {
                m(a, b)
            } else if b <= 0.0 {
                m(-b, -a)
            } else {
                m(0.0, -a) + m(0.0, b)
            }
        }
    }

    impl crate::transform::MassSource for Planted {
        fn weight(&self, x: f64) -> f64 {
            if x == 0.0 {
                return f64::INFINITY;
            }
            steady_state_unchecked(0.0, self.params.gamma, x.abs()) * (1.0 + self.c * x.abs())
        }
        fn mass_between(&self, a: f64, b: f64) -> f64 {
            self.sym(a, b, 0.0) + self.c * self.sym(a, b, 1.0)
        }
    }

    /// 1D profile of the planted density plus a central condensate of mass `dirac`.
    fn planted_profile(c: f64, n: usize, dirac: f64) -> Profile {
        let params = ModelParams::new(2.9, 1, 0.18).unwrap();
        let src = Planted { c, params };
        let table = crate::transform::CumulativeTable::new(&src, -0.18, 0.18, 20 * n).unwrap();
        let smooth = table.total();
        let grid = Grid::new(n, smooth + dirac).unwrap();
        let left = 0.5 * smooth;
        let mut vals: Vec<f64> = (0..n)
            .map(|i| {
                let z = grid.node(i);
                if z < left {
                    table.invert(z)
                } else if z <= left + dirac {
                    0.0
                } else {
                    table.invert(z - dirac)
                }
            })
            .collect();
        vals[0] = -0.18;
        vals[n - 1] = 0.18;
        Profile::new(ProfileKind::InverseCdf1D, grid, vals, params).unwrap()
    }

    #[test]
    fn profile_fit_recovers_planted_coefficient() {
        for c in [-5.0, 0.0, 3.0] {
            let prof = planted_profile(c, 2001, 0.2);
            assert!(condensate_size(&prof, 1e-6) > 0.0);
            let fit = blowup_profile_fit(&prof, (0.01, 0.15)).unwrap();
            if c == 0.0 {
                assert!(fit.c_tilde.abs() < 0.02, "{fit:?}");
            } else {
                assert!((fit.c_tilde / c - 1.0).abs() < 0.02, "{c}: {fit:?}");
                assert!(fit.r_squared > 0.999, "{fit:?}");
            }
        }
    }

    #[test]
    fn difference_fit_on_planted_ratio() {
        // f − f_c = 3|v| f_c is not linear in |v|, so the difference fit is worse
        let prof = planted_profile(3.0, 2001, 0.2);
        let ratio = blowup_profile_fit(&prof, (0.01, 0.15)).unwrap();
        let diff = blowup_difference_fit(&prof, (0.01, 0.15)).unwrap();
        assert!(diff.r_squared < ratio.r_squared);
        assert_eq!(diff.samples, ratio.samples);
    }

    #[test]
    fn profile_fit_needs_samples() {
        let prof = planted_profile(3.0, 21, 0.2);
        assert!(matches!(
            blowup_profile_fit(&prof, (0.1, 0.11)),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(matches!(blowup_profile_fit(&prof, (0.1, 0.5)), Err(Error::WindowInvalid(_))));
    }

    #[test]
    fn recorder_tracks_onset_and_monotonicity() {
        let params = p1d(2.9);
        let mut rec = TraceRecorder::new(&params, 0.1, 1e-6, -10.0).with_cadence(1);
        let lin = linear_1d(8, 2.9);
        let flat = Profile::new(
            ProfileKind::InverseCdf1D,
            lin.grid,
            vec![-1.0, -0.5, 0.0, 0.0, 0.0, 0.2, 0.7, 1.0],
            params,
        )
        .unwrap();
        rec.observe(0, 0.0, &lin, None).unwrap();
        rec.observe(1, 0.1, &flat, None).unwrap();
        assert_eq!(rec.condensate_onset, Some(0.1));
        assert_eq!(rec.trace.entropy.len(), 2);
        assert_eq!(rec.monotonicity.steps_checked, 1);
        assert_eq!(rec.trace.snapshots.len(), 1);
    }

    #[test]
    fn radial_minimizer_entropy_below_gaussian() {
        let params = ModelParams::new(1.0, 3, 1.0).unwrap();
        let (a, sig) = (3.0, 0.3);
        let g = move |r: f64| a * (-r * r / (2.0 * sig * sig)).exp();
        let m = crate::quad::integrate(|r| g(r) * r * r, 0.0, 1.0, 1e-14).value;
        let grid = Grid::new(201, m).unwrap();
        let s0 = crate::transform::inverse_cdf_from_density(&g, &params, &grid).unwrap();
        assert!(h_infinity(&params, &grid).unwrap() < entropy_radial(&s0));
        assert!(m < critical_mass(&params).value());
    }
}
