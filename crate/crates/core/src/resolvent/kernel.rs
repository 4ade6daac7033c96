use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const CONVERGENCE_REL: f64 = 1e-8;
const MAX_GRID: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelMethod {
    /// Uniform `(xi1, xi2)` grid with the `xi3` integral in closed form.
    TorusGrid,
    /// `i int_0^T e^{it(z-6)} prod_j i^{|x_j|} J_{|x_j|}(2t) dt` by
    /// Gauss–Legendre panels.
    TimeDomain { horizon: f64, panels: usize },
    /// Read back from a text table.
    Imported,
}

/// `R0(z)(x, 0)` for `|x|_inf <= box_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventGrid {
    pub z: Complex64,
    /// Torus grid points per axis (0 when not grid based).
    pub grid_n: usize,
    pub box_radius: usize,
    pub method: KernelMethod,
    values: Vec<Complex64>,
}

impl ResolventGrid {
    pub(crate) fn from_values(z: Complex64, grid_n: usize, box_radius: usize, method: KernelMethod, values: Vec<Complex64>) -> Self {
        let side = 2 * box_radius + 1;
        assert_eq!(values.len(), side * side * side);
        ResolventGrid { z, grid_n, box_radius, method, values }
    }

    fn index(&self, x: [i64; 3]) -> Option<usize> {
        let l = self.box_radius as i64;
        if x.iter().any(|c| c.abs() > l) {
            return None;
        }
        let side = 2 * l + 1;
        Some((((x[0] + l) * side + (x[1] + l)) * side + (x[2] + l)) as usize)
    }

    /// Kernel value at offset `x`, `None` outside the box.
    pub fn get(&self, x: [i64; 3]) -> Option<Complex64> {
        self.index(x).map(|i| self.values[i])
    }

    /// Kernel value at offset `x`; panics outside the box.
    pub fn at(&self, x: [i64; 3]) -> Complex64 {
        self.values[self.index(x).expect("offset outside the kernel box")]
    }

    /// Offsets in lexicographic order with their values.
    pub fn iter(&self) -> impl Iterator<Item = ([i64; 3], Complex64)> + '_ {
        let l = self.box_radius as i64;
        let side = (2 * l + 1) as usize;
        self.values.iter().enumerate().map(move |(i, v)| {
            let x3 = (i % side) as i64 - l;
            let x2 = ((i / side) % side) as i64 - l;
            let x1 = (i / (side * side)) as i64 - l;
            ([x1, x2, x3], *v)
        })
    }

    /// `((H0 - z) K)(x)` at an interior offset.
    pub fn stencil(&self, x: [i64; 3]) -> Option<Complex64> {
        let mut acc = self.get(x)? * (6.0 - self.z);
        for j in 0..3 {
            for s in [-1, 1] {
                let mut y = x;
                y[j] += s;
                acc -= self.get(y)?;
            }
        }
        Some(acc)
    }

    pub fn conj(&self) -> Self {
        ResolventGrid { z: self.z.conj(), values: self.values.iter().map(|v| v.conj()).collect(), ..self.clone() }
    }
}

fn check_off_spectrum(z: Complex64) -> Result<()> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite z = {z}")));
    }
    if z.im.abs() <= 1e-12 && z.re >= -1e-12 && z.re <= 12.0 + 1e-12 {
        return Err(Error::OnSpectrum(z.re));
    }
    Ok(())
}

/// Root of `rho + 1/rho = c` inside the unit disk.
fn small_root(c: Complex64) -> Complex64 {
    let w = (c * c - 4.0).sqrt();
    let big = if (c + w).norm() >= (c - w).norm() { (c + w) * 0.5 } else { (c - w) * 0.5 };
    big.inv()
}

/// `int_0^1 e^{2 pi i n t} / (c - 2 cos 2 pi t) dt = rho^|n| / (1/rho - rho)`.
fn line_factors(z: Complex64, a1: f64, a2: f64) -> (Complex64, Complex64) {
    let c = Complex64::new(6.0 - 2.0 * a1 - 2.0 * a2, 0.0) - z;
    let rho = small_root(c);
    (rho, (rho.inv() - rho).inv())
}

fn cosines(n: usize) -> Vec<f64> {
    (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).cos()).collect()
}

/// `K(0)` from the `n x n` grid.
fn kernel_origin(z: Complex64, n: usize) -> Complex64 {
    let a = cosines(n);
    let total: Complex64 = a
        .par_iter()
        .map(|&a1| a.iter().map(|&a2| line_factors(z, a1, a2).1).sum::<Complex64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    total / (n * n) as f64
}

/// Kernel on `|x|_inf <= box_radius` from a uniform torus grid, refined by
/// doubling `grid_n` until `K(0)` changes by less than `1e-8` relative.
pub fn kernel(z: Complex64, grid_n: usize, box_radius: usize) -> Result<ResolventGrid> {
    check_off_spectrum(z)?;
    if grid_n < 64 || !grid_n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("grid_n = {grid_n} must be a power of two >= 64")));
    }
    if 4 * box_radius > grid_n {
        return Err(Error::InvalidArgument(format!("box_radius {box_radius} exceeds grid_n/4 = {}", grid_n / 4)));
    }
    if z.im < 0.0 {
        return kernel(z.conj(), grid_n, box_radius).map(|g| g.conj());
    }
    let mut n = grid_n;
    let mut prev = kernel_origin(z, n / 2);
    loop {
        let cur = kernel_origin(z, n);
        let change = (cur - prev).norm() / cur.norm();
        if change < CONVERGENCE_REL {
            break;
        }
        if 2 * n > MAX_GRID {
            return Err(Error::NoConvergence { grid_n: n, change });
        }
        prev = cur;
        n *= 2;
    }
    Ok(kernel_on_grid(z, n, box_radius))
}

fn kernel_on_grid(z: Complex64, n: usize, box_radius: usize) -> ResolventGrid {
    let l = box_radius;
    let side = 2 * l + 1;
    let a = cosines(n);
    let mut rho = vec![ZERO; n * n];
    let mut g = vec![ZERO; n * n];
    rho.par_chunks_mut(n).zip(g.par_chunks_mut(n)).enumerate().for_each(|(k, (rr, gg))| {
        for j in 0..n {
            let (r, base) = line_factors(z, a[k], a[j]);
            rr[j] = r;
            gg[j] = base;
        }
    });
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(n);
    let mut values = vec![ZERO; side * side * side];
    let norm = 1.0 / (n * n) as f64;
    let mut buf = vec![ZERO; n * n];
    let mut col = vec![ZERO; n];
    for x3 in 0..=l {
        buf.copy_from_slice(&g);
        buf.par_chunks_mut(n).for_each(|row| fft.process(row));
        for j in 0..n {
            for k in 0..n {
                col[k] = buf[k * n + j];
            }
            fft.process(&mut col);
            for k in 0..n {
                buf[k * n + j] = col[k];
            }
        }
        for x1 in -(l as i64)..=l as i64 {
            let r1 = x1.rem_euclid(n as i64) as usize;
            for x2 in -(l as i64)..=l as i64 {
                let r2 = x2.rem_euclid(n as i64) as usize;
                let v = buf[r1 * n + r2] * norm;
                let i1 = (x1 + l as i64) as usize;
                let i2 = (x2 + l as i64) as usize;
                values[(i1 * side + i2) * side + l + x3] = v;
                values[(i1 * side + i2) * side + l - x3] = v;
            }
        }
        g.iter_mut().zip(&rho).for_each(|(gv, r)| *gv *= r);
    }
    ResolventGrid::from_values(z, n, box_radius, KernelMethod::TorusGrid, values)
}

const PANEL: f64 = 0.5;
const PANEL_ORDER: usize = 16;
/// Decay `e^{-horizon Im z}` left in the truncated tail.
const TAIL_EXPONENT: f64 = 30.0;

/// Kernel from the time-domain representation, suited to small `Im z != 0`.
/// `max_panels` caps the work.
pub fn kernel_time_domain(z: Complex64, box_radius: usize, max_panels: usize) -> Result<ResolventGrid> {
    check_off_spectrum(z)?;
    if z.im == 0.0 {
        return Err(Error::InvalidArgument("time-domain kernel needs Im z != 0".into()));
    }
    if z.im < 0.0 {
        return kernel_time_domain(z.conj(), box_radius, max_panels).map(|g| g.conj());
    }
    let horizon = (TAIL_EXPONENT / z.im).max(40.0);
    let panels = (horizon / PANEL).ceil() as usize;
    if panels > max_panels {
        return Err(Error::BudgetExceeded { needed: panels, cap: max_panels });
    }
    let l = box_radius;
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    // sorted triples |x1| >= |x2| >= |x3|
    let mut triples = Vec::new();
    for a in 0..=l {
        for b in 0..=a {
            for c in 0..=b {
                triples.push([a, b, c]);
            }
        }
    }
    let ipow = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, -1.0)];
    let partial: Vec<Vec<Complex64>> = (0..panels)
        .into_par_iter()
        .map(|p| {
            let mut acc = vec![ZERO; triples.len()];
            let mut jv = vec![0.0; l + 1];
            for (x, w) in gx.iter().zip(&gw) {
                let t = PANEL * (p as f64 + 0.5 * (x + 1.0));
                let wt = 0.5 * PANEL * w;
                for (n, v) in jv.iter_mut().enumerate() {
                    *v = libm::jn(n as i32, 2.0 * t);
                }
                let e = (Complex64::new(0.0, t) * (z - 6.0)).exp() * wt;
                for (k, tr) in triples.iter().enumerate() {
                    acc[k] += e * (jv[tr[0]] * jv[tr[1]] * jv[tr[2]]);
                }
            }
            acc
        })
        .collect();
    let mut sums = vec![ZERO; triples.len()];
    for part in partial {
        for (s, v) in sums.iter_mut().zip(part) {
            *s += v;
        }
    }
    let i = Complex64::new(0.0, 1.0);
    for (s, tr) in sums.iter_mut().zip(&triples) {
        *s *= i * ipow[(tr[0] + tr[1] + tr[2]) % 4];
    }
    let side = 2 * l + 1;
    let mut values = vec![ZERO; side * side * side];
    let lookup = |mut a: [usize; 3]| {
        a.sort_unstable_by(|p, q| q.cmp(p));
        // index of (a, b, c) in the triple enumeration
        let (x, y, c) = (a[0], a[1], a[2]);
        let before_a = x * (x + 1) * (x + 2) / 6;
        let before_b = y * (y + 1) / 2;
        before_a + before_b + c
    };
    for x1 in 0..side {
        for x2 in 0..side {
            for x3 in 0..side {
                let abs = [x1.abs_diff(l), x2.abs_diff(l), x3.abs_diff(l)];
                values[(x1 * side + x2) * side + x3] = sums[lookup(abs)];
            }
        }
    }
    Ok(ResolventGrid::from_values(z, 0, box_radius, KernelMethod::TimeDomain { horizon: panels as f64 * PANEL, panels }, values))
}

/// Below this `|Im z|` the torus grid needs more points than the doubling
/// cap allows near the spectrum, so the time-domain route is used.
const SMALL_IMAGINARY: f64 = 0.05;

/// Torus-grid kernel, falling back to the time-domain route for small
/// `|Im z|` or when grid doubling does not converge.
pub fn kernel_auto(z: Complex64, grid_n: usize, box_radius: usize, max_panels: usize) -> Result<ResolventGrid> {
    let inside = z.re > -0.5 && z.re < 12.5;
    if z.im != 0.0 && z.im.abs() < SMALL_IMAGINARY && inside {
        return kernel_time_domain(z, box_radius, max_panels);
    }
    match kernel(z, grid_n, box_radius) {
        Err(Error::NoConvergence { .. }) if z.im != 0.0 => kernel_time_domain(z, box_radius, max_panels),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_inside_unit_disk() {
        for c in [Complex64::new(3.0, 0.0), Complex64::new(-2.5, 0.0), Complex64::new(1.0, 0.3), Complex64::new(0.0, -0.1)] {
            let r = small_root(c);
            assert!(r.norm() < 1.0);
            assert!((r + r.inv() - c).norm() < 1e-12);
        }
    }

    #[test]
    fn line_integral_matches_quadrature() {
        let z = Complex64::new(5.0, 0.7);
        let (rho, base) = line_factors(z, 0.3, -0.2);
        let c = Complex64::new(6.0 - 0.6 + 0.4, 0.0) - z;
        let m = 4096;
        for n in [0, 1, 3] {
            let q: Complex64 = (0..m)
                .map(|k| {
                    let t = k as f64 / m as f64;
                    Complex64::from_polar(1.0, 2.0 * PI * n as f64 * t) / (c - 2.0 * (2.0 * PI * t).cos())
                })
                .sum::<Complex64>()
                / m as f64;
            assert!((q - base * rho.powi(n)).norm() < 1e-12);
        }
    }

    #[test]
    fn spectrum_and_argument_errors() {
        assert!(matches!(kernel(Complex64::new(5.0, 0.0), 64, 8), Err(Error::OnSpectrum(_))));
        assert!(matches!(kernel(Complex64::new(-1.0, 0.0), 48, 8), Err(Error::InvalidArgument(_))));
        assert!(matches!(kernel(Complex64::new(-1.0, 0.0), 64, 17), Err(Error::InvalidArgument(_))));
        assert!(matches!(kernel_time_domain(Complex64::new(-1.0, 0.0), 4, 100), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            kernel_time_domain(Complex64::new(4.0, 1e-4), 4, 1000),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn routes_agree_off_axis() {
        let z = Complex64::new(3.0, 0.5);
        let a = kernel(z, 256, 6).unwrap();
        let b = kernel_time_domain(z, 6, 100_000).unwrap();
        for x in [[0, 0, 0], [1, 0, 0], [2, 1, 0], [3, 3, 2], [6, -4, 1]] {
            assert!((a.at(x) - b.at(x)).norm() < 1e-8, "{x:?}: {} vs {}", a.at(x), b.at(x));
        }
    }
}
