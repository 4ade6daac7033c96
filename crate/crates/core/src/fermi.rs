//! Graph charts of the Fermi surface `M_lambda = {a1 + a2 + a3 = E}`,
//! curvature in closed form and in graph coordinates, and the
//! zero-curvature locus.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::torus::{h0, reduce, torus_distance, wrap_diff, EnergyLevel, TorusPoint};

/// Coordinate index, stored zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Axis(usize);

impl Axis {
    pub const X1: Axis = Axis(0);
    pub const X2: Axis = Axis(1);
    pub const X3: Axis = Axis(2);

    /// `k` in `{1, 2, 3}`.
    pub fn from_one_based(k: usize) -> Result<Self> {
        match k {
            1..=3 => Ok(Axis(k - 1)),
            _ => Err(Error::InvalidArgument(format!("axis {k} not in 1..=3"))),
        }
    }

    pub fn index(self) -> usize {
        self.0
    }

    /// The two remaining coordinates in increasing order.
    pub fn free(self) -> [usize; 2] {
        match self.0 {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }
}

/// Sign of `b` on the solved axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    fn of(b: f64) -> Self {
        if b >= 0.0 {
            Branch::Plus
        } else {
            Branch::Minus
        }
    }
}

/// Solve `a_axis = E - (a of the free coordinates)` for the remaining
/// coordinate on the requested branch.
pub fn solve_graph(xi_free: [f64; 2], energy: EnergyLevel, axis: Axis, branch: Branch) -> Result<f64> {
    let a_free: f64 = xi_free.iter().map(|t| (2.0 * PI * t).cos()).sum();
    let a_solved = energy.e - a_free;
    if !(-1.0..=1.0).contains(&a_solved) {
        return Err(Error::OutOfRange(a_solved));
    }
    if (a_solved.abs() - 1.0).abs() <= 1e-12 {
        return Err(Error::DegenerateBranch(a_solved));
    }
    let theta = a_solved.acos() / (2.0 * PI);
    let _ = axis;
    Ok(match branch {
        Branch::Plus => theta,
        Branch::Minus => reduce(1.0 - theta),
    })
}

/// Local chart `{(xi', f(xi'))}` of `M_lambda` around a base point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FermiPatch {
    pub energy: EnergyLevel,
    pub solved_axis: Axis,
    pub branch: Branch,
    pub base: TorusPoint,
    pub radius: f64,
}

const MAX_RADIUS: f64 = 0.1;
const BOUNDARY_SAMPLES: usize = 64;

impl FermiPatch {
    /// Chart at `base`, solving for the axis with the largest `|b_j|`
    /// (smallest index on ties).
    pub fn at(base: TorusPoint) -> Result<Self> {
        let mut axis = 0;
        for j in 1..3 {
            if base.b[j].abs() > base.b[axis].abs() {
                axis = j;
            }
        }
        Self::with_axis(base, Axis(axis))
    }

    pub fn with_axis(base: TorusPoint, axis: Axis) -> Result<Self> {
        let b = base.b[axis.0];
        if b.abs() <= 1e-8 {
            return Err(Error::PreconditionViolated(format!(
                "|b| = {:e} on the solved axis; chart not available",
                b.abs()
            )));
        }
        let energy = EnergyLevel::new(h0(&base).clamp(0.0, 12.0))?;
        let mut patch = FermiPatch { energy, solved_axis: axis, branch: Branch::of(b), base, radius: 0.0 };
        patch.radius = patch.validity_radius(b.abs());
        if patch.radius <= 0.0 {
            return Err(Error::PreconditionViolated("no chart radius available".into()));
        }
        Ok(patch)
    }

    /// Largest `r <= 0.1` whose boundary circle keeps `|b_solved|` above half
    /// its base value.
    fn validity_radius(&self, b_base: f64) -> f64 {
        let c = self.base_free();
        let ok = |r: f64| {
            (0..BOUNDARY_SAMPLES).all(|k| {
                let th = 2.0 * PI * k as f64 / BOUNDARY_SAMPLES as f64;
                let q = [c[0] + r * th.cos(), c[1] + r * th.sin()];
                let a_free: f64 = q.iter().map(|t| (2.0 * PI * t).cos()).sum();
                let a_s = self.energy.e - a_free;
                a_s.abs() < 1.0 && (1.0 - a_s * a_s).sqrt() > 0.5 * b_base
            })
        };
        if ok(MAX_RADIUS) {
            return MAX_RADIUS;
        }
        // bisection on [0, 0.1]; the admissible set is an interval around 0
        let (mut lo, mut hi) = (0.0, MAX_RADIUS);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Image of the chart under `xi_j -> -xi_j` for the flagged axes.
    pub fn reflect(&self, axes: [bool; 3]) -> Self {
        let flip = axes[self.solved_axis.0];
        let branch = match (self.branch, flip) {
            (Branch::Plus, true) => Branch::Minus,
            (Branch::Minus, true) => Branch::Plus,
            (b, false) => b,
        };
        FermiPatch { base: self.base.reflect(axes), branch, ..*self }
    }

    pub fn base_free(&self) -> [f64; 2] {
        let [i, j] = self.solved_axis.free();
        [self.base.xi[i], self.base.xi[j]]
    }

    /// Whether `xi_free` lies within the chart radius (max-norm on the torus).
    pub fn contains(&self, xi_free: [f64; 2]) -> bool {
        let c = self.base_free();
        let d0 = wrap_diff(xi_free[0], c[0]);
        let d1 = wrap_diff(xi_free[1], c[1]);
        (d0 * d0 + d1 * d1).sqrt() <= self.radius * (1.0 + 1e-12)
    }

    /// Solved coordinate, unwrapped to lie within 1/2 of the base value.
    pub fn solve(&self, xi_free: [f64; 2]) -> Result<f64> {
        let t = solve_graph(xi_free, self.energy, self.solved_axis, self.branch)?;
        let s0 = self.base.xi[self.solved_axis.0];
        Ok(s0 + wrap_diff(t, s0))
    }

    /// Surface point over `xi_free`; errors outside the chart.
    pub fn point(&self, xi_free: [f64; 2]) -> Result<TorusPoint> {
        if !self.contains(xi_free) {
            return Err(Error::OutsidePatch);
        }
        Ok(self.lift(xi_free, self.solve(xi_free)?))
    }

    fn lift(&self, xi_free: [f64; 2], solved: f64) -> TorusPoint {
        let [i, j] = self.solved_axis.free();
        let mut xi = [0.0; 3];
        xi[i] = xi_free[0];
        xi[j] = xi_free[1];
        xi[self.solved_axis.0] = solved;
        TorusPoint::new(xi)
    }

    /// Jet of `f` in coordinates `xi' = center + U eta`, to total degree `degree`.
    pub fn graph_jet(&self, center: [f64; 2], rotation: [[f64; 2]; 2], degree: usize) -> Result<Jet2> {
        let center_pt = self.point(center)?;
        let mut u = Jet2::constant(degree, self.energy.e);
        for k in 0..2 {
            let arg = Jet2::affine(
                degree,
                2.0 * PI * center[k],
                2.0 * PI * rotation[k][0],
                2.0 * PI * rotation[k][1],
            );
            u = &u - &arg.cos();
        }
        let s = self.branch.sign() / (2.0 * PI);
        let acos = u.acos();
        let f0 = center_pt.xi[self.solved_axis.0];
        let mut jet = acos.scale(s);
        // constant term: the unwrapped solved coordinate
        let s0 = self.base.xi[self.solved_axis.0];
        jet.set(0, 0, s0 + wrap_diff(f0, s0));
        Ok(jet)
    }
}

/// Solved, free-1, free-2 trig data at a chart point.
struct ChartTrig {
    a_s: f64,
    b_s: f64,
    a: [f64; 2],
    b: [f64; 2],
}

impl ChartTrig {
    fn new(p: &TorusPoint, axis: Axis) -> Self {
        let [i, j] = axis.free();
        ChartTrig { a_s: p.a[axis.0], b_s: p.b[axis.0], a: [p.a[i], p.a[j]], b: [p.b[i], p.b[j]] }
    }

    fn gradient(&self) -> [f64; 2] {
        [-self.b[0] / self.b_s, -self.b[1] / self.b_s]
    }

    fn hessian(&self) -> [[f64; 2]; 2] {
        let b3 = self.b_s;
        let b33 = b3 * b3 * b3;
        let d = |k: usize| -2.0 * PI * (self.a[k] * b3 * b3 + self.a_s * self.b[k] * self.b[k]) / b33;
        let off = -2.0 * PI * self.b[0] * self.b[1] * self.a_s / b33;
        [[d(0), off], [off, d(1)]]
    }

    fn third(&self, m: usize, k: usize, l: usize) -> f64 {
        let (a3, b3) = (self.a_s, self.b_s);
        let (a, b) = (&self.a, &self.b);
        let dl = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
        let b32 = b3 * b3;
        4.0 * PI * PI / b3
            * ((dl(k, l) * dl(l, m) * b[k] - b[m] * b[l] * b[k] / b32)
                - a3 / (b32 * b32)
                    * (dl(k, l) * a[k] * b[m] * b32
                        + dl(l, m) * a[l] * b[k] * b32
                        + dl(m, k) * a[m] * b[l] * b32
                        + 3.0 * b[m] * b[k] * b[l] * a3))
    }
}

/// `a1 a2 b3^2 + a2 a3 b1^2 + a3 a1 b2^2`, the numerator of the curvature.
pub fn curvature_numerator(p: &TorusPoint) -> f64 {
    let (a, b) = (&p.a, &p.b);
    a[0] * a[1] * b[2] * b[2] + a[1] * a[2] * b[0] * b[0] + a[2] * a[0] * b[1] * b[1]
}

/// Gaussian curvature and unit normal of the level surface through `p`.
pub fn curvature_closed_form(p: &TorusPoint) -> Result<(f64, [f64; 3])> {
    let nb2 = p.b_norm_sq();
    if nb2.sqrt() < 1e-10 {
        return Err(Error::AtCriticalPoint);
    }
    let k = 4.0 * PI * PI * curvature_numerator(p) / (nb2 * nb2);
    let n = nb2.sqrt();
    Ok((k, p.b.map(|v| v / n)))
}

/// Eigen-decomposition of a symmetric 2x2 matrix. The eigenvalue of smaller
/// absolute value comes first; each eigenvector has its first nonzero
/// component positive.
pub fn sym2_eigen(m: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (p, q, r) = (m[0][0], m[0][1], m[1][1]);
    let mean = 0.5 * (p + r);
    let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let theta = 0.5 * (2.0 * q).atan2(p - r);
    let (s, c) = theta.sin_cos();
    let mut pairs = [(mean + rad, [c, s]), (mean - rad, [-s, c])];
    if pairs[1].0.abs() < pairs[0].0.abs() {
        pairs.swap(0, 1);
    }
    let fix = |v: [f64; 2]| {
        let lead = if v[0].abs() > 1e-14 { v[0] } else { v[1] };
        if lead < 0.0 {
            [-v[0], -v[1]]
        } else {
            v
        }
    };
    ([pairs[0].0, pairs[1].0], [fix(pairs[0].1), fix(pairs[1].1)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureData {
    #[serde(rename = "K")]
    pub k: f64,
    pub nu: [f64; 3],
    /// Hessian `B(xi')` of the graph function.
    pub second_form: [[f64; 2]; 2],
    pub eigvals: [f64; 2],
    pub eigvecs: [[f64; 2]; 2],
}

/// Curvature data at a chart point.
pub fn curvature_data(patch: &FermiPatch, xi_free: [f64; 2]) -> Result<CurvatureData> {
    let p = patch.point(xi_free)?;
    let (k, nu) = curvature_closed_form(&p)?;
    let b = ChartTrig::new(&p, patch.solved_axis).hessian();
    let (eigvals, eigvecs) = sym2_eigen(b);
    Ok(CurvatureData { k, nu, second_form: b, eigvals, eigvecs })
}

/// `det(d^2 f) / (1 + |grad f|^2)^2` from the graph representation.
pub fn curvature_graph(patch: &FermiPatch, xi_free: [f64; 2]) -> Result<f64> {
    let p = patch.point(xi_free)?;
    let t = ChartTrig::new(&p, patch.solved_axis);
    let g = t.gradient();
    let h = t.hessian();
    let w = 1.0 + g[0] * g[0] + g[1] * g[1];
    Ok((h[0][0] * h[1][1] - h[0][1] * h[0][1]) / (w * w))
}

/// Graph derivatives of order 1, 2 or 3 at a chart point, flattened
/// row-major (`2`, `2x2` or `2x2x2` entries).
pub fn graph_derivatives(patch: &FermiPatch, xi_free: [f64; 2], order: usize) -> Result<Vec<f64>> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidOrder(order));
    }
    let p = patch.point(xi_free)?;
    let t = ChartTrig::new(&p, patch.solved_axis);
    Ok(match order {
        1 => t.gradient().to_vec(),
        2 => t.hessian().concat(),
        _ => {
            let mut out = Vec::with_capacity(8);
            for m in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        out.push(t.third(m, k, l));
                    }
                }
            }
            out
        }
    })
}

/// A point of `M_lambda` where the Gaussian curvature vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateLocusPoint {
    pub point: TorusPoint,
    pub energy: f64,
    pub umbilic: bool,
    pub transversal: bool,
}

const UMBILIC_FROBENIUS: f64 = 1e-8;
const TRANSVERSAL_NORM: f64 = 1e-8;
const DEDUP_DISTANCE: f64 = 1e-6;

fn classify_point(p: TorusPoint, energy: f64) -> Option<DegenerateLocusPoint> {
    let patch = FermiPatch::at(p).ok()?;
    let b = ChartTrig::new(&p, patch.solved_axis).hessian();
    let frob = (b[0][0].powi(2) + 2.0 * b[0][1].powi(2) + b[1][1].powi(2)).sqrt();
    let cross = transversality_cross(&p);
    let norm = cross.iter().map(|v| v * v).sum::<f64>().sqrt();
    Some(DegenerateLocusPoint {
        point: p,
        energy,
        umbilic: frob < UMBILIC_FROBENIUS,
        transversal: norm > TRANSVERSAL_NORM,
    })
}

/// Cosine triples `(a2, a3)` completing `a1 = t` to a zero of the curvature
/// on `M_lambda`: `a2 + a3 = E - t`, `(1 - E t) a2 a3 = -t (E - t)`.
fn complete_cosines(t: f64, e: f64, grid: usize) -> Vec<[f64; 2]> {
    let s = e - t;
    let den = 1.0 - e * t;
    let mut out = Vec::new();
    let in_range = |v: f64| v.abs() <= 1.0 + 1e-12;
    if den.abs() < 1e-14 {
        // E t = 1: the product is free and the sum forces t s = 0.
        if (t * s).abs() < 1e-12 {
            for k in 0..grid {
                let a2 = (2.0 * PI * k as f64 / grid as f64).cos();
                let a3 = s - a2;
                if in_range(a3) {
                    out.push([a2, a3.clamp(-1.0, 1.0)]);
                }
            }
        }
        return out;
    }
    let q = -t * s / den;
    let disc = s * s - 4.0 * q;
    if disc < -1e-14 {
        return out;
    }
    let sq = disc.max(0.0).sqrt();
    let (r1, r2) = (0.5 * (s + sq), 0.5 * (s - sq));
    for (a2, a3) in [(r1, r2), (r2, r1)] {
        if in_range(a2) && in_range(a3) {
            out.push([a2.clamp(-1.0, 1.0), a3.clamp(-1.0, 1.0)]);
        }
    }
    out
}

fn angle_pair(a: f64) -> [f64; 2] {
    let th = a.acos() / (2.0 * PI);
    [th, reduce(1.0 - th)]
}

/// One damped Newton step on `(xi2, xi3)` for the pair
/// `{sum a = E, curvature numerator = 0}` with `xi1` held fixed; the step is
/// kept only when it lowers the residual.
fn polish(p: TorusPoint, e: f64) -> TorusPoint {
    let residual = |q: &TorusPoint| {
        let r0 = q.a_sum() - e;
        let r1 = curvature_numerator(q);
        (r0 * r0 + r1 * r1).sqrt()
    };
    let mut best = p;
    let mut best_r = residual(&p);
    for _ in 0..4 {
        if best_r < 1e-15 {
            break;
        }
        let (a, b) = (best.a, best.b);
        // d a_j / d xi_j = -2 pi b_j ; d b_j^2 / d xi_j = 4 pi a_j b_j
        let dg0 = [-2.0 * PI * b[1], -2.0 * PI * b[2]];
        let dk = |j: usize| -> f64 {
            let da = -2.0 * PI * b[j];
            let db2 = 4.0 * PI * a[j] * b[j];
            match j {
                1 => da * (a[0] * b[2] * b[2] + a[2] * b[0] * b[0]) + a[2] * a[0] * db2,
                _ => da * (a[1] * b[0] * b[0] + a[0] * b[1] * b[1]) + a[0] * a[1] * db2,
            }
        };
        let dg1 = [dk(1), dk(2)];
        let det = dg0[0] * dg1[1] - dg0[1] * dg1[0];
        if det.abs() < 1e-12 {
            break;
        }
        let r0 = best.a_sum() - e;
        let r1 = curvature_numerator(&best);
        let d2 = (r0 * dg1[1] - r1 * dg0[1]) / det;
        let d3 = (dg0[0] * r1 - dg1[0] * r0) / det;
        let mut damp = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let cand = TorusPoint::new([best.xi[0], best.xi[1] - damp * d2, best.xi[2] - damp * d3]);
            let r = residual(&cand);
            if r < best_r {
                best = cand;
                best_r = r;
                improved = true;
                break;
            }
            damp *= 0.5;
        }
        if !improved {
            break;
        }
    }
    best
}

/// Points of `M_lambda` with vanishing Gaussian curvature.
///
/// The locus is sliced by `xi1 = k / grid` (plus the slices through
/// `a1 in {0, E}`); on each slice the remaining cosines solve a quadratic.
/// Output is deduplicated at torus distance `1e-6` and sorted by
/// coordinates.
pub fn zero_curvature_locus(energy: EnergyLevel, grid: usize) -> Vec<DegenerateLocusPoint> {
    let e = energy.e;
    if !(energy.lambda > 0.0 && energy.lambda < 12.0) || grid == 0 {
        return Vec::new();
    }
    // (xi1, a1) pairs; the slices through a1 in {0, E} carry exact cosines
    // because the quadratic has a double root there.
    let mut slices: Vec<(f64, f64)> = (0..grid)
        .map(|k| {
            let x1 = k as f64 / grid as f64;
            (x1, (2.0 * PI * x1).cos())
        })
        .collect();
    for a1 in [0.0, e] {
        if a1.abs() <= 1.0 {
            slices.extend(angle_pair(a1).map(|x1| (x1, a1)));
        }
    }
    let mut found: Vec<TorusPoint> = slices
        .par_iter()
        .flat_map_iter(|&(x1, t)| {
            let mut pts = Vec::new();
            for [a2, a3] in complete_cosines(t, e, grid) {
                for x2 in angle_pair(a2) {
                    for x3 in angle_pair(a3) {
                        let p = TorusPoint::new([x1, x2, x3]);
                        if p.b_norm_sq().sqrt() < 1e-10 {
                            continue;
                        }
                        pts.push(polish(p, e));
                    }
                }
            }
            pts
        })
        .collect();
    found.sort_by(|p, q| p.xi.partial_cmp(&q.xi).unwrap_or(std::cmp::Ordering::Equal));
    let mut kept: Vec<TorusPoint> = Vec::new();
    for p in found {
        if !kept.iter().rev().take(64).any(|q| torus_distance(&p.xi, &q.xi) < DEDUP_DISTANCE)
            && !kept.iter().any(|q| torus_distance(&p.xi, &q.xi) < DEDUP_DISTANCE)
        {
            kept.push(p);
        }
    }
    kept.into_iter().filter_map(|p| classify_point(p, energy.lambda)).collect()
}

/// `nu x grad K~` with `nu = b` (unnormalised), in closed form.
pub fn transversality_cross(p: &TorusPoint) -> [f64; 3] {
    let (a, b) = (&p.a, &p.b);
    let s = p.a_sum();
    let c = -2.0 * PI;
    [
        c * b[1] * b[2] * (a[1] - a[2]) * (1.0 - a[0] * s),
        c * b[2] * b[0] * (a[2] - a[0]) * (1.0 - a[1] * s),
        c * b[0] * b[1] * (a[0] - a[1]) * (1.0 - a[2] * s),
    ]
}

/// Returns the cross product `nu x grad K~` and whether its norm exceeds `1e-8`.
pub fn transversality_check(p: &DegenerateLocusPoint) -> ([f64; 3], bool) {
    let cross = transversality_cross(&p.point);
    let n = cross.iter().map(|v| v * v).sum::<f64>().sqrt();
    (cross, n > TRANSVERSAL_NORM)
}

/// Null-direction check at a zero-curvature point in the `xi3` chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullEigenvectorCheck {
    /// `|B (c1, c2)^T|`
    pub residual: f64,
    /// `(c1, c2) . grad_{xi'} K~ / (2 pi)` along the surface.
    pub directional_value: f64,
    /// `(1 - E^2)(3 - a1 a2 a3 E)`
    pub predicted: f64,
    /// `sum b_j c_j`
    pub orthogonality: f64,
}

/// Along-surface gradient of `K~ = a1 a2 b3^2 + ...` in the `xi3` chart.
pub fn surface_gradient_numerator(p: &TorusPoint) -> [f64; 2] {
    let (a, b) = (&p.a, &p.b);
    let e = p.a_sum();
    [
        2.0 * PI * b[0] * (a[0] - a[2]) * (1.0 - a[1] * e),
        2.0 * PI * b[1] * (a[1] - a[2]) * (1.0 - a[0] * e),
    ]
}

pub fn null_eigenvector_check(p: &TorusPoint) -> Result<NullEigenvectorCheck> {
    let e = p.a_sum();
    let bad = |m: &str| Err(Error::PreconditionViolated(m.into()));
    if !(e > -1.0 && e < 1.0) || e.abs() < 1e-12 {
        return bad("E must lie in (-1, 1) \\ {0}");
    }
    if p.b[2].abs() <= 1e-8 {
        return bad("b3 vanishes");
    }
    let (Some(c1), Some(c2), Some(c3)) = (p.c[0], p.c[1], p.c[2]) else {
        return bad("a1 a2 a3 vanishes");
    };
    let (k, _) = curvature_closed_form(p)?;
    if k.abs() >= 1e-9 {
        return bad("curvature does not vanish");
    }
    let b = ChartTrig::new(p, Axis::X3).hessian();
    let v = [b[0][0] * c1 + b[0][1] * c2, b[1][0] * c1 + b[1][1] * c2];
    let g = surface_gradient_numerator(p);
    let aprod = p.a[0] * p.a[1] * p.a[2];
    Ok(NullEigenvectorCheck {
        residual: (v[0] * v[0] + v[1] * v[1]).sqrt(),
        directional_value: (c1 * g[0] + c2 * g[1]) / (2.0 * PI),
        predicted: (1.0 - e * e) * (3.0 - aprod * e),
        orthogonality: p.b[0] * c1 + p.b[1] * c2 + p.b[2] * c3,
    })
}
