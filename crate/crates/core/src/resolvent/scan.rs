use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::kernel_auto;
use super::norms::{finite_section_norm_with, weighted_bs_norm_with, NormEstimate, NormOptions, WeightSpec};
use crate::error::{Error, Result};

/// One CSV row of a norm scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub z_re: f64,
    pub z_im: f64,
    pub p: f64,
    pub r: f64,
    pub section_radius: usize,
    pub norm: f64,
    /// `lp`, `lp_unconverged` or `weighted`.
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScanOptions {
    pub section_radius: usize,
    pub box_radius: usize,
    /// Torus grid used when `|Im z|` is large enough for it.
    pub grid_n: usize,
    pub max_panels: usize,
    pub thresholds: Vec<u8>,
    pub norm: NormOptions,
}

impl Default for ThresholdScanOptions {
    fn default() -> Self {
        ThresholdScanOptions {
            section_radius: 8,
            box_radius: 16,
            grid_n: 256,
            max_panels: 200_000,
            thresholds: vec![0, 1, 2, 3],
            norm: NormOptions::default(),
        }
    }
}

/// Fitted `d log(norm) / d log(eps)` approaching `4k` from one side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSlope {
    pub k: u8,
    /// `+1` approaches from above, `-1` from below.
    pub side: i8,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormScanReport {
    pub p: f64,
    pub r: f64,
    pub section_radius: usize,
    pub eps_list: Vec<f64>,
    pub z_samples: Vec<Complex64>,
    pub norms: Vec<f64>,
    pub converged: Vec<bool>,
    /// Max over the weight seeds, per sample (empty without seeds).
    pub weighted_norms: Vec<f64>,
    pub max_norm: f64,
    /// Slope of `log max_z norm` against `log eps`.
    pub near_threshold_slope: Option<f64>,
    pub threshold_slopes: Vec<ThresholdSlope>,
    /// Per-factor exponent `(3/2)(1/p - 1/p') - 1` of the conjectured bound,
    /// reported for comparison only.
    pub conjectured_slope: f64,
}

impl NormScanReport {
    pub fn rows(&self) -> Vec<NormRow> {
        let mut rows = Vec::new();
        for (i, z) in self.z_samples.iter().enumerate() {
            rows.push(NormRow {
                z_re: z.re,
                z_im: z.im,
                p: self.p,
                r: self.r,
                section_radius: self.section_radius,
                norm: self.norms[i],
                flag: if self.converged[i] { "lp" } else { "lp_unconverged" }.into(),
            });
            if let Some(w) = self.weighted_norms.get(i) {
                rows.push(NormRow {
                    z_re: z.re,
                    z_im: z.im,
                    p: self.p,
                    r: self.r,
                    section_radius: self.section_radius,
                    norm: *w,
                    flag: "weighted".into(),
                });
            }
        }
        rows
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn z_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// `finite_section_norm` at `p` and the Birman–Schwinger norm with `seeds`
/// random unit `l^r` weight pairs, at `z = 4k +- eps + i eps/10`.
pub fn threshold_scan(p: f64, r: f64, eps_list: &[f64], seeds: usize) -> Result<NormScanReport> {
    threshold_scan_with(p, r, eps_list, seeds, &ThresholdScanOptions::default())
}

pub fn threshold_scan_with(p: f64, r: f64, eps_list: &[f64], seeds: usize, opts: &ThresholdScanOptions) -> Result<NormScanReport> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [1, 2]")));
    }
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!("r = {r} must be >= 1")));
    }
    if eps_list.is_empty() || eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0 && *e < 2.0)) {
        return Err(Error::InvalidArgument("eps values must lie in (0, 2)".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eps_list must be strictly decreasing".into()));
    }
    if opts.thresholds.is_empty() || opts.thresholds.iter().any(|&k| k > 3) {
        return Err(Error::InvalidArgument("thresholds must be a non-empty subset of 0..=3".into()));
    }
    let weights: Vec<(WeightSpec, WeightSpec)> = (0..seeds as u64)
        .map(|s| {
            let seed = opts.norm.seed.wrapping_add(2 * s);
            Ok((
                WeightSpec::random_normalized(opts.section_radius, r, seed)?,
                WeightSpec::random_normalized(opts.section_radius, r, seed + 1)?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::new();
    for &k in &opts.thresholds {
        for side in [-1i8, 1] {
            for (ei, &eps) in eps_list.iter().enumerate() {
                let z = Complex64::new(4.0 * k as f64 + side as f64 * eps, eps / 10.0);
                samples.push((k, side, ei, z));
            }
        }
    }
    samples.sort_by(|a, b| z_order(&a.3, &b.3));

    let results: Vec<(NormEstimate, Option<f64>)> = samples
        .par_iter()
        .map(|&(_, _, _, z)| {
            let grid = kernel_auto(z, opts.grid_n, opts.box_radius, opts.max_panels)?;
            let norm = finite_section_norm_with(&grid, p, opts.section_radius, &opts.norm)?;
            let mut weighted = None;
            for (w1, w2) in &weights {
                let v = weighted_bs_norm_with(&grid, w1, w2, &opts.norm)?.value;
                weighted = Some(weighted.map_or(v, |m: f64| m.max(v)));
            }
            Ok((norm, weighted))
        })
        .collect::<Result<_>>()?;

    let norms: Vec<f64> = results.iter().map(|r| r.0.value).collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let log_eps: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let max_at_eps: Vec<f64> = (0..eps_list.len())
        .map(|ei| samples.iter().zip(&norms).filter(|(s, _)| s.2 == ei).map(|(_, n)| *n).fold(0.0, f64::max).ln())
        .collect();
    let mut threshold_slopes = Vec::new();
    for &k in &opts.thresholds {
        for side in [-1i8, 1] {
            let y: Vec<f64> = (0..eps_list.len())
                .map(|ei| {
                    let i = samples.iter().position(|s| s.0 == k && s.1 == side && s.2 == ei).expect("sample present");
                    norms[i].ln()
                })
                .collect();
            if let Some(slope) = ls_slope(&log_eps, &y) {
                threshold_slopes.push(ThresholdSlope { k, side, slope });
            }
        }
    }
    let q = 1.0 / p - (1.0 - 1.0 / p);
    Ok(NormScanReport {
        p,
        r,
        section_radius: opts.section_radius,
        eps_list: eps_list.to_vec(),
        z_samples: samples.iter().map(|s| s.3).collect(),
        converged: results.iter().map(|r| r.0.converged).collect(),
        weighted_norms: results.iter().filter_map(|r| r.1).collect(),
        norms,
        max_norm,
        near_threshold_slope: ls_slope(&log_eps, &max_at_eps),
        threshold_slopes,
        conjectured_slope: 1.5 * q - 1.0,
    })
}

/// Finite-section norms on a `z` list at two section radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub p: f64,
    pub grid_n: usize,
    pub radii: [usize; 2],
    pub z_samples: Vec<Complex64>,
    pub norms_small: Vec<f64>,
    pub norms_large: Vec<f64>,
    pub converged: bool,
    /// `norms_large / norms_small - 1` per sample.
    pub relative_change: Vec<f64>,
    pub max_small: f64,
    pub max_large: f64,
    /// `max_large / max_small - 1`.
    pub max_growth: f64,
}

impl UniformityReport {
    pub fn rows(&self) -> Vec<NormRow> {
        let mut rows = Vec::new();
        for (norms, radius) in [(&self.norms_small, self.radii[0]), (&self.norms_large, self.radii[1])] {
            for (z, n) in self.z_samples.iter().zip(norms) {
                rows.push(NormRow {
                    z_re: z.re,
                    z_im: z.im,
                    p: self.p,
                    r: f64::NAN,
                    section_radius: radius,
                    norm: *n,
                    flag: if self.converged { "lp" } else { "lp_unconverged" }.into(),
                });
            }
        }
        rows
    }
}

/// Twenty points `Re z in {-1, 2, 4, 6, 10}`, `Im z in {0.5, 1, 2, 4}`, all at
/// distance at least 1/2 from every threshold.
pub fn uniformity_z_grid() -> Vec<Complex64> {
    let mut out = Vec::new();
    for re in [-1.0, 2.0, 4.0, 6.0, 10.0] {
        for im in [0.5, 1.0, 2.0, 4.0] {
            out.push(Complex64::new(re, im));
        }
    }
    out
}

/// Compares `finite_section_norm(p)` at two section radii over `z_samples`;
/// the kernel box is twice the larger radius.
pub fn uniformity_scan(z_samples: &[Complex64], p: f64, radii: [usize; 2], grid_n: usize, opts: &NormOptions) -> Result<UniformityReport> {
    if radii[0] == 0 || radii[1] <= radii[0] {
        return Err(Error::InvalidArgument("radii must be increasing and positive".into()));
    }
    if z_samples.is_empty() {
        return Err(Error::InvalidArgument("no z samples".into()));
    }
    let mut zs = z_samples.to_vec();
    zs.sort_by(z_order);
    let box_radius = 2 * radii[1];
    let pairs: Vec<(NormEstimate, NormEstimate)> = zs
        .par_iter()
        .map(|&z| {
            let grid = kernel_auto(z, grid_n, box_radius, 200_000)?;
            Ok((finite_section_norm_with(&grid, p, radii[0], opts)?, finite_section_norm_with(&grid, p, radii[1], opts)?))
        })
        .collect::<Result<_>>()?;
    let norms_small: Vec<f64> = pairs.iter().map(|p| p.0.value).collect();
    let norms_large: Vec<f64> = pairs.iter().map(|p| p.1.value).collect();
    let max_small = norms_small.iter().copied().fold(0.0, f64::max);
    let max_large = norms_large.iter().copied().fold(0.0, f64::max);
    Ok(UniformityReport {
        p,
        grid_n,
        radii,
        converged: pairs.iter().all(|p| p.0.converged && p.1.converged),
        relative_change: norms_small.iter().zip(&norms_large).map(|(a, b)| b / a - 1.0).collect(),
        z_samples: zs,
        norms_small,
        norms_large,
        max_small,
        max_large,
        max_growth: max_large / max_small - 1.0,
    })
}

/// `finite_section_norm` at each `z`, in sorted `z` order.
pub fn section_norm_scan(z_samples: &[Complex64], p: f64, section_radius: usize, grid_n: usize, opts: &NormOptions) -> Result<Vec<NormRow>> {
    let mut zs = z_samples.to_vec();
    zs.sort_by(z_order);
    zs.par_iter()
        .map(|&z| {
            let grid = kernel_auto(z, grid_n, 2 * section_radius, 200_000)?;
            let e = finite_section_norm_with(&grid, p, section_radius, opts)?;
            Ok(NormRow {
                z_re: z.re,
                z_im: z.im,
                p,
                r: f64::NAN,
                section_radius,
                norm: e.value,
                flag: if e.converged { "lp" } else { "lp_unconverged" }.into(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = [1.0f64, 0.5, 0.25].iter().map(|e| e.ln()).collect();
        let y: Vec<f64> = x.iter().map(|l| 2.0 - 0.7 * l).collect();
        assert!((ls_slope(&x, &y).unwrap() + 0.7).abs() < 1e-12);
        assert!(ls_slope(&x[..1], &y[..1]).is_none());
    }

    #[test]
    fn grid_stays_away_from_thresholds() {
        let g = uniformity_z_grid();
        assert_eq!(g.len(), 20);
        for z in g {
            assert!((0..4).all(|k| (z - 4.0 * k as f64).norm() >= 0.5));
        }
    }

    #[test]
    fn rejects_bad_eps() {
        assert!(threshold_scan(1.2, 3.0, &[0.5, 1.0], 0).is_err());
        assert!(threshold_scan(2.5, 3.0, &[1.0, 0.5], 0).is_err());
        assert!(threshold_scan(1.2, 3.0, &[], 0).is_err());
    }

    #[test]
    fn small_threshold_scan_is_sorted_and_finite() {
        let opts = ThresholdScanOptions { section_radius: 2, box_radius: 4, thresholds: vec![1], ..Default::default() };
        let rep = threshold_scan_with(1.2, 3.0, &[1.0, 0.5], 1, &opts).unwrap();
        assert_eq!(rep.z_samples.len(), 4);
        assert!(rep.z_samples.windows(2).all(|w| w[0].re <= w[1].re));
        assert!(rep.norms.iter().all(|n| n.is_finite() && *n > 0.0));
        assert_eq!(rep.weighted_norms.len(), 4);
        assert_eq!(rep.rows().len(), 8);
        assert!(rep.conjectured_slope.abs() < 1e-12);
    }
}
