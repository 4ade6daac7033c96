//! The lattice symbol `h0(xi) = 4 sum sin^2(pi xi_j)` on the 3-torus.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosines with `|a| < C_ABSENT` carry no tangent.
pub const C_ABSENT: f64 = 1e-12;

/// A point of `T^3 = R^3 / Z^3` with its trigonometric data evaluated once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub xi: [f64; 3],
    /// `cos 2 pi xi_j`
    pub a: [f64; 3],
    /// `sin 2 pi xi_j`
    pub b: [f64; 3],
    /// `tan 2 pi xi_j`, absent where the cosine vanishes.
    pub c: [Option<f64>; 3],
}

impl TorusPoint {
    pub fn new(xi: [f64; 3]) -> Self {
        let xi = xi.map(reduce);
        let a = xi.map(|t| (2.0 * PI * t).cos());
        let b = xi.map(|t| (2.0 * PI * t).sin());
        let c = [0, 1, 2].map(|j| (a[j].abs() >= C_ABSENT).then(|| b[j] / a[j]));
        Self { xi, a, b, c }
    }

    /// Builds the point from unreduced coordinates; trig values are taken
    /// from the unreduced angles so that no rounding is introduced by `mod 1`.
    pub fn from_angles(xi: [f64; 3]) -> Self {
        let a = xi.map(|t| (2.0 * PI * t).cos());
        let b = xi.map(|t| (2.0 * PI * t).sin());
        let c = [0, 1, 2].map(|j| (a[j].abs() >= C_ABSENT).then(|| b[j] / a[j]));
        Self { xi: xi.map(reduce), a, b, c }
    }

    pub fn b_norm_sq(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum()
    }

    pub fn a_sum(&self) -> f64 {
        self.a.iter().sum()
    }

    /// Mirror `xi -> -xi` in the listed coordinates.
    pub fn reflect(&self, axes: [bool; 3]) -> Self {
        let mut xi = self.xi;
        for j in 0..3 {
            if axes[j] {
                xi[j] = -xi[j];
            }
        }
        Self::new(xi)
    }
}

/// Reduce a coordinate into `[0, 1)`.
pub fn reduce(t: f64) -> f64 {
    let r = t.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed distance `t - s` wrapped into `[-1/2, 1/2)`.
pub fn wrap_diff(t: f64, s: f64) -> f64 {
    let d = (t - s).rem_euclid(1.0);
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// Distance on the torus (max over coordinates of the wrapped difference).
pub fn torus_distance(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    (0..3).map(|j| wrap_diff(p[j], q[j]).abs()).fold(0.0, f64::max)
}

/// Spectral energy `lambda` with `E = 3 - lambda/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLevel {
    pub lambda: f64,
    #[serde(rename = "E")]
    pub e: f64,
}

impl EnergyLevel {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=12.0).contains(&lambda) || !lambda.is_finite() {
            return Err(Error::EnergyOutOfRange(lambda));
        }
        Ok(Self { lambda, e: 3.0 - lambda / 2.0 })
    }

    /// `lambda in (4, 8)`, equivalently `E in (-1, 1)`.
    pub fn is_degenerate_band(&self) -> bool {
        self.e > -1.0 && self.e < 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdKind {
    Elliptic,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub point: TorusPoint,
    pub energy: f64,
    pub kind: ThresholdKind,
}

pub fn h0(p: &TorusPoint) -> f64 {
    p.a.iter().map(|a| 2.0 * (1.0 - a)).sum()
}

pub fn grad_h0(p: &TorusPoint) -> [f64; 3] {
    p.b.map(|b| 4.0 * PI * b)
}

/// The eight critical points `xi_j in {0, 1/2}`.
pub fn critical_points() -> Vec<ThresholdPoint> {
    (0..8u8)
        .map(|mask| {
            let xi = [0, 1, 2].map(|j| if mask >> j & 1 == 1 { 0.5 } else { 0.0 });
            let energy = 4.0 * f64::from(mask.count_ones() as u8);
            let kind = if energy == 0.0 || energy == 12.0 {
                ThresholdKind::Elliptic
            } else {
                ThresholdKind::Hyperbolic
            };
            ThresholdPoint { point: TorusPoint::new(xi), energy, kind }
        })
        .collect()
}

/// `min_k |z - 4k|` over the four thresholds.
pub fn threshold_distance(z: Complex64) -> f64 {
    (0..4)
        .map(|k| (z - Complex64::new(4.0 * k as f64, 0.0)).norm())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn symbol_values() {
        assert_abs_diff_eq!(h0(&TorusPoint::new([0.0; 3])), 0.0);
        assert_abs_diff_eq!(h0(&TorusPoint::new([0.5; 3])), 12.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h0(&TorusPoint::new([0.25; 3])), 6.0, epsilon = 1e-14);
    }

    #[test]
    fn gradient_at_quarter() {
        let g = grad_h0(&TorusPoint::new([0.25, 0.0, 0.0]));
        assert_abs_diff_eq!(g[0], 4.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(g[1], 0.0);
        assert_abs_diff_eq!(g[2], 0.0);
    }

    #[test]
    fn gradient_vanishes_on_critical_set() {
        for t in critical_points() {
            for g in grad_h0(&t.point) {
                assert!(g.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn critical_point_census() {
        let cps = critical_points();
        assert_eq!(cps.len(), 8);
        let mut energies: Vec<f64> = cps.iter().map(|t| t.energy).collect();
        energies.sort_by(f64::total_cmp);
        assert_eq!(energies, vec![0.0, 4.0, 4.0, 4.0, 8.0, 8.0, 8.0, 12.0]);
        assert!(cps
            .iter()
            .any(|t| t.point.xi == [0.5, 0.0, 0.0] && t.energy == 4.0 && t.kind == ThresholdKind::Hyperbolic));
        assert!(cps
            .iter()
            .any(|t| t.point.xi == [0.0; 3] && t.energy == 0.0 && t.kind == ThresholdKind::Elliptic));
        for t in &cps {
            assert_abs_diff_eq!(h0(&t.point), t.energy, epsilon = 1e-12);
            assert_eq!(t.kind == ThresholdKind::Elliptic, t.energy == 0.0 || t.energy == 12.0);
        }
    }

    #[test]
    fn threshold_distances() {
        assert_eq!(threshold_distance(Complex64::new(2.0, 0.0)), 2.0);
        assert_eq!(threshold_distance(Complex64::new(4.0, 0.5)), 0.5);
        assert_eq!(threshold_distance(Complex64::new(6.0, 0.0)), 2.0);
    }

    #[test]
    fn tangent_absent_at_zero_cosine() {
        let p = TorusPoint::new([0.25, 0.1, -0.3]);
        assert!(p.c[0].is_none());
        assert!(p.c[1].is_some());
        assert_abs_diff_eq!(p.xi[2], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn energy_level() {
        let e = EnergyLevel::new(5.0).unwrap();
        assert_eq!(e.e, 0.5);
        assert!(e.is_degenerate_band());
        assert!(!EnergyLevel::new(8.0).unwrap().is_degenerate_band());
        assert!(EnergyLevel::new(12.5).is_err());
    }
}
