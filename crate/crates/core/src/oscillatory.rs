//! Fourier transforms of cut-off surface measures on `M_lambda` and
//! empirical decay exponents.
//!
//! The integrand `chi(xi') e^{2 pi i x.(xi', f(xi'))} / |grad h0|` is smooth
//! and compactly supported in the chart disk, so the trapezoid rule on a
//! uniform grid converges spectrally. Grids are nested by powers of two: a
//! level and its stride-2 sublevel come out of one pass and their difference
//! is the error estimate.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_rational::Rational64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermi::{curvature_closed_form, FermiPatch};
use crate::torus::{reduce, wrap_diff};

/// Samples with `|value|` below this are left out of fits.
pub const VALUE_FLOOR: f64 = 1e-12;
/// A sample is reliable when its error estimate is below this fraction of
/// `max(|value|, VALUE_FLOOR)`.
pub const RELIABLE_FRACTION: f64 = 1e-3;
/// Angular bandwidth of the bump, in units of `1/radius`, budgeted on top of
/// the phase gradient when picking a grid.
const BUMP_BANDWIDTH: f64 = 600.0;
const MIN_INTERVALS: usize = 64;
/// Default finest grid (intervals per axis across the cutoff diameter).
pub const DEFAULT_MAX_INTERVALS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    SmoothBump,
}

/// `chi(xi') = exp(1 - 1/(1 - |xi' - center|^2 / radius^2))` inside the disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub profile: Profile,
}

impl CutoffSpec {
    pub fn bump(center: [f64; 2], radius: f64) -> Self {
        CutoffSpec { center, radius, profile: Profile::SmoothBump }
    }

    pub fn eval(&self, xi: [f64; 2]) -> f64 {
        let d0 = wrap_diff(xi[0], self.center[0]);
        let d1 = wrap_diff(xi[1], self.center[1]);
        bump((d0 * d0 + d1 * d1) / (self.radius * self.radius))
    }

    pub fn reflect(&self, free_axes: [bool; 2]) -> Self {
        let mut c = self.center;
        for k in 0..2 {
            if free_axes[k] {
                c[k] = reduce(-c[k]);
            }
        }
        CutoffSpec { center: c, ..*self }
    }
}

fn bump(rho2: f64) -> f64 {
    if rho2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - rho2)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscSample {
    pub x: [f64; 3],
    pub value: Complex64,
    pub quad_error: f64,
    /// Grid intervals per axis used for `value`.
    pub intervals: usize,
}

impl OscSample {
    pub fn reliable(&self) -> bool {
        self.quad_error < RELIABLE_FRACTION * self.value.norm().max(VALUE_FLOOR)
    }
}

struct Row {
    /// Row index on the finest grid.
    k: usize,
    /// First column index on the finest grid.
    l0: usize,
    /// `chi / |grad h0|` at each node.
    amp: Vec<f64>,
    /// Solved coordinate, unwrapped around the chart base.
    f: Vec<f64>,
}

/// Precomputed amplitude and graph values on the finest grid of a cutoff
/// disk; evaluates the transform at any frequency on any coarser level.
pub struct OscPlan {
    free: [usize; 2],
    solved: usize,
    origin: [f64; 2],
    radius: f64,
    n_max: usize,
    h: f64,
    rows: Vec<Row>,
    /// `grad f` on a coarse grid, for phase-gradient bounds.
    grad_samples: Vec<[f64; 2]>,
    normal: [f64; 3],
}

impl OscPlan {
    /// `max_intervals` is rounded up to a power of two.
    pub fn new(patch: &FermiPatch, cutoff: &CutoffSpec, max_intervals: usize) -> Result<Self> {
        let base = patch.base_free();
        let offset = (wrap_diff(cutoff.center[0], base[0]).powi(2) + wrap_diff(cutoff.center[1], base[1]).powi(2)).sqrt();
        if !(cutoff.radius > 0.0) || offset + cutoff.radius > patch.radius * (1.0 + 1e-12) {
            return Err(Error::PreconditionViolated(format!(
                "cutoff (offset {offset:.3e}, radius {:.3e}) exceeds chart radius {:.3e}",
                cutoff.radius, patch.radius
            )));
        }
        let n_max = max_intervals.max(MIN_INTERVALS).next_power_of_two();
        let r = cutoff.radius;
        let h = 2.0 * r / n_max as f64;
        // cutoff center expressed near the chart base
        let center = [base[0] + wrap_diff(cutoff.center[0], base[0]), base[1] + wrap_diff(cutoff.center[1], base[1])];
        let origin = [center[0] - r, center[1] - r];
        let free = patch.solved_axis.free();
        let solved = patch.solved_axis.index();
        let e = patch.energy.e;
        let sign = patch.branch.sign();
        let s0 = patch.base.xi[solved];

        let trig: Vec<[f64; 2]> = (0..=n_max)
            .map(|l| {
                let t = 2.0 * PI * (origin[1] + l as f64 * h);
                [t.cos(), t.sin()]
            })
            .collect();
        let rows: Vec<Row> = (0..=n_max)
            .into_par_iter()
            .filter_map(|k| {
                let y0 = -r + k as f64 * h;
                let half2 = r * r - y0 * y0;
                if half2 <= 0.0 {
                    return None;
                }
                let t = 2.0 * PI * (origin[0] + k as f64 * h);
                let (ai, bi) = (t.cos(), t.sin());
                let half = half2.sqrt();
                let l0 = ((r - half) / h).ceil().max(0.0) as usize;
                let l1 = (((r + half) / h).floor() as usize).min(n_max);
                let mut amp = Vec::with_capacity(l1 + 1 - l0);
                let mut f = Vec::with_capacity(l1 + 1 - l0);
                for l in l0..=l1 {
                    let y1 = -r + l as f64 * h;
                    let chi = bump((y0 * y0 + y1 * y1) / (r * r));
                    let [aj, bj] = trig[l];
                    let a_s = (e - ai - aj).clamp(-1.0, 1.0);
                    let b2 = bi * bi + bj * bj + (1.0 - a_s * a_s);
                    amp.push(chi / (4.0 * PI * b2.sqrt()));
                    let th = sign * a_s.acos() / (2.0 * PI);
                    f.push(s0 + wrap_diff(th, s0));
                }
                Some(Row { k, l0, amp, f })
            })
            .collect();

        let mut grad_samples = Vec::new();
        let m = 64;
        for k in 0..=m {
            for l in 0..=m {
                let q = [-r + 2.0 * r * k as f64 / m as f64, -r + 2.0 * r * l as f64 / m as f64];
                if q[0] * q[0] + q[1] * q[1] > r * r {
                    continue;
                }
                let xi = [center[0] + q[0], center[1] + q[1]];
                let bf = [(2.0 * PI * xi[0]).sin(), (2.0 * PI * xi[1]).sin()];
                let a_s = e - (2.0 * PI * xi[0]).cos() - (2.0 * PI * xi[1]).cos();
                let b_s = sign * (1.0 - a_s * a_s).max(0.0).sqrt();
                grad_samples.push([-bf[0] / b_s, -bf[1] / b_s]);
            }
        }
        let (_, normal) = curvature_closed_form(&patch.base)?;
        Ok(OscPlan { free, solved, origin, radius: r, n_max, h, rows, grad_samples, normal })
    }

    /// Unit normal of the surface at the chart base.
    pub fn normal(&self) -> [f64; 3] {
        self.normal
    }

    pub fn max_intervals(&self) -> usize {
        self.n_max
    }

    /// Grid intervals the frequency `x` needs: phase gradient plus bump
    /// bandwidth resolved at two points per period.
    pub fn required_intervals(&self, x: [f64; 3]) -> usize {
        let (xi, xj, xs) = (x[self.free[0]], x[self.free[1]], x[self.solved]);
        let g = self
            .grad_samples
            .iter()
            .map(|d| ((xi + xs * d[0]).powi(2) + (xj + xs * d[1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        let omega = 2.0 * PI * g * 1.1 + BUMP_BANDWIDTH / self.radius;
        let h = PI / omega;
        ((2.0 * self.radius / h).ceil() as usize).max(MIN_INTERVALS).next_power_of_two()
    }

    /// Transform at `x` on the grid with `intervals` intervals per axis,
    /// and on its stride-2 sublevel.
    pub fn evaluate_level(&self, x: [f64; 3], intervals: usize) -> (Complex64, Complex64) {
        let stride = self.n_max / intervals;
        let two_pi = 2.0 * PI;
        let (xi, xj, xs) = (x[self.free[0]], x[self.free[1]], x[self.solved]);
        let cols: Vec<Complex64> = (0..=self.n_max)
            .step_by(stride)
            .map(|l| Complex64::from_polar(1.0, two_pi * xj * (self.origin[1] + l as f64 * self.h)))
            .collect();
        let partial: Vec<(Complex64, Complex64)> = self
            .rows
            .par_iter()
            .filter(|row| row.k % stride == 0)
            .map(|row| {
                let mut fine = Complex64::new(0.0, 0.0);
                let mut coarse = Complex64::new(0.0, 0.0);
                let on_coarse_row = row.k % (2 * stride) == 0;
                let first = row.l0.div_ceil(stride) * stride;
                for l in (first..row.l0 + row.amp.len()).step_by(stride) {
                    let idx = l - row.l0;
                    let ph = Complex64::from_polar(row.amp[idx], two_pi * xs * row.f[idx]);
                    let term = ph * cols[l / stride];
                    fine += term;
                    if on_coarse_row && l % (2 * stride) == 0 {
                        coarse += term;
                    }
                }
                let rf = Complex64::from_polar(1.0, two_pi * xi * (self.origin[0] + row.k as f64 * self.h));
                (fine * rf, coarse * rf)
            })
            .collect();
        let (fine, coarse) = partial
            .into_iter()
            .fold((Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)), |a, b| (a.0 + b.0, a.1 + b.1));
        let hl = self.h * stride as f64;
        (fine * hl * hl, coarse * (4.0 * hl * hl))
    }

    /// Refines from the required level until the sample is reliable, the
    /// value drops below the fitting floor, or the finest grid is reached.
    /// Errors with `BudgetExceeded` when the result is still unreliable.
    pub fn sample(&self, x: [f64; 3]) -> Result<OscSample> {
        let s = self.sample_flagged(x);
        let needed = self.required_intervals(x);
        if needed > self.n_max || (!s.reliable() && s.value.norm() >= VALUE_FLOOR) {
            return Err(Error::BudgetExceeded { needed: needed.max(2 * self.n_max), cap: self.n_max });
        }
        Ok(s)
    }

    /// Like [`OscPlan::sample`], but returns the best attempt instead of an
    /// error; callers check [`OscSample::reliable`].
    pub fn sample_flagged(&self, x: [f64; 3]) -> OscSample {
        let mut n = self.required_intervals(x).min(self.n_max);
        loop {
            let (fine, coarse) = self.evaluate_level(x, n);
            let s = OscSample { x, value: fine, quad_error: (fine - coarse).norm(), intervals: n };
            let tiny = fine.norm() < VALUE_FLOOR && coarse.norm() < VALUE_FLOOR;
            if s.reliable() || tiny || n >= self.n_max {
                return s;
            }
            n *= 2;
        }
    }
}

/// `int chi e^{2 pi i x.(xi', f)} dxi' / |grad h0|` over the cutoff disk.
pub fn surface_measure_ft(patch: &FermiPatch, cutoff: &CutoffSpec, x: [f64; 3]) -> Result<OscSample> {
    // size the plan for this frequency, with one spare refinement
    let probe = OscPlan::new(patch, cutoff, MIN_INTERVALS)?;
    let n = (2 * probe.required_intervals(x)).min(8 * DEFAULT_MAX_INTERVALS);
    OscPlan::new(patch, cutoff, n)?.sample(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub direction: [f64; 3],
    /// The exact surface normal at the chart base rather than a sphere sample.
    pub is_normal: bool,
    pub radii: Vec<f64>,
    pub samples: Vec<OscSample>,
    /// Slope of `-log|I|` against `log R`; `None` with fewer than three
    /// usable samples.
    pub fitted_exponent: Option<f64>,
    /// Largest deviation of the fitted log-log points from the line.
    pub fit_residual: f64,
    /// Some fitted sample failed its error check.
    pub tainted: bool,
    #[serde(with = "opt_ratio")]
    pub predicted: Option<Rational64>,
}

mod opt_ratio {
    use num_rational::Rational64;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rational64>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_str(&r.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational64>, D::Error> {
        Option::<String>::deserialize(d)?.map(|s| s.parse().map_err(serde::de::Error::custom)).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayScan {
    pub fits: Vec<DecayFit>,
    /// Smallest exponent over untainted fits.
    pub min_exponent: Option<f64>,
    /// Index into `fits` where the minimum is attained.
    pub argmin: Option<usize>,
}

/// One CSV row per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub direction_x: f64,
    pub direction_y: f64,
    pub direction_z: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub abs_value: f64,
    pub quad_error: f64,
    pub tainted: bool,
}

impl DecayScan {
    pub fn rows(&self) -> Vec<DecayRow> {
        let mut out = Vec::new();
        for fit in &self.fits {
            for (r, s) in fit.radii.iter().zip(&fit.samples) {
                out.push(DecayRow {
                    direction_x: fit.direction[0],
                    direction_y: fit.direction[1],
                    direction_z: fit.direction[2],
                    r: *r,
                    abs_value: s.value.norm(),
                    quad_error: s.quad_error,
                    tainted: !s.reliable(),
                });
            }
        }
        out
    }
}

/// `n` quasi-uniform unit vectors (Fibonacci lattice on the sphere).
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

/// Powers of two from `r_min` to `r_max`.
pub fn dyadic_radii(r_min: f64, r_max: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut r = r_min;
    while r <= r_max * (1.0 + 1e-12) {
        v.push(r);
        r *= 2.0;
    }
    v
}

/// Least-squares slope of `-log|I|` against `log R`, dropping the two
/// smallest radii and samples under the floor.
pub fn fit_exponent(radii: &[f64], samples: &[OscSample]) -> (Option<f64>, f64, bool) {
    let used: Vec<(f64, f64, bool)> = radii
        .iter()
        .zip(samples)
        .skip(2)
        .filter(|(_, s)| s.value.norm() >= VALUE_FLOOR)
        .map(|(r, s)| (r.ln(), -s.value.norm().ln(), s.reliable()))
        .collect();
    let tainted = used.iter().any(|u| !u.2);
    if used.len() < 3 {
        return (None, 0.0, tainted);
    }
    let n = used.len() as f64;
    let mx = used.iter().map(|u| u.0).sum::<f64>() / n;
    let my = used.iter().map(|u| u.1).sum::<f64>() / n;
    let sxy: f64 = used.iter().map(|u| (u.0 - mx) * (u.1 - my)).sum();
    let sxx: f64 = used.iter().map(|u| (u.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let resid = used.iter().map(|u| (u.1 - (my + slope * (u.0 - mx))).abs()).fold(0.0, f64::max);
    (Some(slope), resid, tainted)
}

/// Decay exponents along the base normal and `directions` sphere samples.
pub fn decay_scan(
    patch: &FermiPatch,
    cutoff: &CutoffSpec,
    directions: usize,
    r_min: f64,
    r_max: f64,
) -> Result<DecayScan> {
    decay_scan_with(patch, cutoff, directions, r_min, r_max, DEFAULT_MAX_INTERVALS)
}

pub fn decay_scan_with(
    patch: &FermiPatch,
    cutoff: &CutoffSpec,
    directions: usize,
    r_min: f64,
    r_max: f64,
    max_intervals: usize,
) -> Result<DecayScan> {
    if r_min < 16.0 || r_max / r_min < 64.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "need R_min >= 16 and R_max/R_min >= 64, got {r_min}, {r_max}"
        )));
    }
    let plan = OscPlan::new(patch, cutoff, max_intervals)?;
    let mut dirs = vec![plan.normal()];
    dirs.extend(fibonacci_sphere(directions));
    let radii = dyadic_radii(r_min, r_max);
    let jobs: Vec<(usize, usize)> = (0..dirs.len()).flat_map(|d| (0..radii.len()).map(move |k| (d, k))).collect();
    let samples: Vec<OscSample> = jobs
        .par_iter()
        .map(|&(d, k)| plan.sample_flagged(dirs[d].map(|v| v * radii[k])))
        .collect();
    let fits: Vec<DecayFit> = dirs
        .iter()
        .enumerate()
        .map(|(d, dir)| {
            let s = samples[d * radii.len()..(d + 1) * radii.len()].to_vec();
            let (fitted_exponent, fit_residual, tainted) = fit_exponent(&radii, &s);
            DecayFit {
                direction: *dir,
                is_normal: d == 0,
                radii: radii.clone(),
                samples: s,
                fitted_exponent,
                fit_residual,
                tainted,
                predicted: None,
            }
        })
        .collect();
    let mut min_exponent = None;
    let mut argmin = None;
    for (i, f) in fits.iter().enumerate() {
        if let (Some(k), false) = (f.fitted_exponent, f.tainted) {
            if min_exponent.is_none_or(|m| k < m) {
                min_exponent = Some(k);
                argmin = Some(i);
            }
        }
    }
    Ok(DecayScan { fits, min_exponent, argmin })
}

/// Largest weight index `r = 2 + 2k` and the matching Lebesgue index
/// `p` with `1/p = 1/2 + 1/r`.
pub fn weight_admissible_range(k: Rational64) -> Result<(Rational64, Rational64)> {
    let zero = Rational64::from_integer(0);
    let one = Rational64::from_integer(1);
    if k <= zero || k > one {
        return Err(Error::InvalidArgument(format!("decay exponent {k} not in (0, 1]")));
    }
    let r = Rational64::from_integer(2) + Rational64::from_integer(2) * k;
    let p = (Rational64::new(1, 2) + r.recip()).recip();
    Ok((r, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusPoint;
    use approx::assert_abs_diff_eq;

    fn band_one_patch() -> FermiPatch {
        FermiPatch::at(TorusPoint::new([0.0, 0.0, 0.25])).unwrap()
    }

    #[test]
    fn admissible_ranges() {
        let r = |n, d| Rational64::new(n, d);
        assert_eq!(weight_admissible_range(r(1, 1)).unwrap(), (r(4, 1), r(4, 3)));
        assert_eq!(weight_admissible_range(r(2, 3)).unwrap().0, r(10, 3));
        assert_eq!(weight_admissible_range(r(1, 2)).unwrap().0, r(3, 1));
        assert!(weight_admissible_range(r(0, 1)).is_err());
        assert!(weight_admissible_range(r(3, 2)).is_err());
    }

    #[test]
    fn zero_frequency_is_positive_real() {
        let patch = band_one_patch();
        let cutoff = CutoffSpec::bump([0.0, 0.0], 0.08);
        let s = surface_measure_ft(&patch, &cutoff, [0.0; 3]).unwrap();
        assert!(s.value.re > 0.0);
        assert!(s.value.im.abs() < 1e-15);
        assert!(s.reliable());
    }

    #[test]
    fn conjugate_symmetry() {
        let patch = band_one_patch();
        let cutoff = CutoffSpec::bump([0.01, -0.02], 0.05);
        let plan = OscPlan::new(&patch, &cutoff, 1024).unwrap();
        let x = [3.0, -7.0, 40.0];
        let a = plan.sample(x).unwrap();
        let b = plan.sample(x.map(|v| -v)).unwrap();
        assert_abs_diff_eq!(a.value.re, b.value.re, epsilon = 1e-14);
        assert_abs_diff_eq!(a.value.im, -b.value.im, epsilon = 1e-14);
    }

    #[test]
    fn cutoff_must_fit_chart() {
        let patch = band_one_patch();
        let cutoff = CutoffSpec::bump([0.0, 0.0], 0.5);
        assert!(matches!(OscPlan::new(&patch, &cutoff, 64), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn budget_is_reported() {
        let patch = band_one_patch();
        let cutoff = CutoffSpec::bump([0.0, 0.0], 0.1);
        let plan = OscPlan::new(&patch, &cutoff, 64).unwrap();
        assert!(matches!(plan.sample([500.0, 300.0, 0.0]), Err(Error::BudgetExceeded { .. })));
        assert!(!plan.sample_flagged([500.0, 300.0, 0.0]).reliable() || plan.sample_flagged([500.0, 300.0, 0.0]).value.norm() < VALUE_FLOOR);
    }

    #[test]
    fn fit_recovers_power_law() {
        let radii = dyadic_radii(16.0, 4096.0);
        assert_eq!(radii.len(), 9);
        let samples: Vec<OscSample> = radii
            .iter()
            .map(|r| OscSample { x: [0.0; 3], value: Complex64::new(3.0 * r.powf(-0.75), 0.0), quad_error: 0.0, intervals: 64 })
            .collect();
        let (k, res, tainted) = fit_exponent(&radii, &samples);
        assert_abs_diff_eq!(k.unwrap(), 0.75, epsilon = 1e-12);
        assert!(res < 1e-12);
        assert!(!tainted);
    }

    #[test]
    fn fibonacci_points_are_unit() {
        for d in fibonacci_sphere(64) {
            assert_abs_diff_eq!(d.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-14);
        }
    }
}
