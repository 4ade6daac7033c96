//! Newton polygons of bivariate phases, computed over the rationals, and the
//! decay exponents they predict.

use std::f64::consts::PI;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::taylor::TaylorModel;

/// Coefficients below this magnitude are treated as absent.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Exact rationals serialize as `"p/q"` strings.
mod ratio_str {
    use num_rational::Rational64;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(r: &Option<Rational64>, s: S) -> Result<S::Ok, S::Error> {
            match r {
                Some(r) => s.serialize_str(&r.to_string()),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational64>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|s| s.parse().map_err(serde::de::Error::custom))
                .transpose()
        }
    }

    pub mod pair_vec {
        use super::*;
        use serde::Serialize;

        pub fn serialize<S: Serializer>(v: &[[Rational64; 2]], s: S) -> Result<S::Ok, S::Error> {
            let strs: Vec<[String; 2]> = v.iter().map(|p| [p[0].to_string(), p[1].to_string()]).collect();
            strs.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<[Rational64; 2]>, D::Error> {
            let strs = Vec::<[String; 2]>::deserialize(d)?;
            strs.into_iter()
                .map(|[a, b]| {
                    Ok([a.parse().map_err(serde::de::Error::custom)?, b.parse().map_err(serde::de::Error::custom)?])
                })
                .collect()
        }
    }
}

/// Face of the Newton polygon met by the bisectrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Face {
    Vertex { at: [i64; 2] },
    Edge { start: [i64; 2], end: [i64; 2] },
    /// Unbounded face `{x = start.0, y >= start.1}`.
    VerticalRay { start: [i64; 2] },
    /// Unbounded face `{y = start.1, x >= start.0}`.
    HorizontalRay { start: [i64; 2] },
}

impl Face {
    pub fn is_compact_edge(&self) -> bool {
        matches!(self, Face::Edge { .. })
    }

    /// Whether the lattice point `j` lies on the face.
    fn contains(&self, j: [i64; 2]) -> bool {
        match *self {
            Face::Vertex { at } => j == at,
            Face::Edge { start, end } => {
                let (dx, dy) = (end[0] - start[0], end[1] - start[1]);
                (j[0] - start[0]) * dy - (j[1] - start[1]) * dx == 0
                    && j[0] >= start[0]
                    && j[0] <= end[0]
            }
            Face::VerticalRay { start } => j[0] == start[0] && j[1] >= start[1],
            Face::HorizontalRay { start } => j[1] == start[1] && j[0] >= start[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonData {
    pub taylor_support: Vec<[usize; 2]>,
    #[serde(with = "ratio_str::pair_vec")]
    pub polyhedron_vertices: Vec<[Rational64; 2]>,
    #[serde(with = "ratio_str")]
    pub newton_distance: Rational64,
    pub principal_face: Face,
    pub principal_part: TaylorModel,
    pub vanishing_order: usize,
    /// Equal to the Newton distance when the coordinates are adapted;
    /// unresolved otherwise.
    #[serde(with = "ratio_str::opt")]
    pub height: Option<Rational64>,
    pub varchenko_exponent: Option<u8>,
    #[serde(with = "ratio_str::opt")]
    pub predicted_exponent: Option<Rational64>,
}

fn cross(o: [i64; 2], a: [i64; 2], b: [i64; 2]) -> i64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Vertices of the compact boundary of the polygon
/// `conv(support + R_{>=0}^2)`, with `x` increasing and `y` decreasing.
pub fn polygon_vertices(support: &[[i64; 2]]) -> Vec<[i64; 2]> {
    let mut pts = support.to_vec();
    pts.sort();
    pts.dedup();
    let y_min = pts.iter().map(|p| p[1]).min().unwrap_or(0);
    let mut hull: Vec<[i64; 2]> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    // The lower hull descends to the first point of minimal height, then
    // climbs; only the descending part bounds the polygon.
    let cut = hull.iter().position(|p| p[1] == y_min).unwrap_or(hull.len() - 1);
    hull.truncate(cut + 1);
    // drop points that are not minimal in x for their height
    hull.dedup_by_key(|p| p[0]);
    hull
}

/// Newton distance and principal face from the compact-boundary vertices.
fn bisectrix_face(v: &[[i64; 2]]) -> (Rational64, Face) {
    let first = v[0];
    let last = v[v.len() - 1];
    if first[0] > first[1] {
        return (Rational64::from_integer(first[0]), Face::VerticalRay { start: first });
    }
    if last[0] < last[1] {
        return (Rational64::from_integer(last[1]), Face::HorizontalRay { start: last });
    }
    for (k, &p) in v.iter().enumerate() {
        if p[0] == p[1] {
            return (Rational64::from_integer(p[0]), Face::Vertex { at: p });
        }
        if k + 1 < v.len() {
            let q = v[k + 1];
            if p[0] < p[1] && q[0] > q[1] {
                // x = y on the segment p + t (q - p)
                let num = p[1] - p[0];
                let den = (q[0] - p[0]) - (q[1] - p[1]);
                let t = Rational64::new(num, den);
                let d = Rational64::from_integer(p[0]) + t * Rational64::from_integer(q[0] - p[0]);
                return (d, Face::Edge { start: p, end: q });
            }
        }
    }
    unreachable!("the bisectrix meets the boundary of a nonempty Newton polygon")
}

/// Newton polygon, principal face and (when adapted) the predicted decay
/// exponent of a phase, ignoring its constant and linear terms.
pub fn newton_polyhedron(model: &TaylorModel) -> Result<NewtonData> {
    let mut taylor_support: Vec<[usize; 2]> = model
        .coeffs
        .iter()
        .filter(|t| t.j[0] + t.j[1] >= 2 && t.value.abs() > SUPPORT_TOL)
        .map(|t| t.j)
        .collect();
    if taylor_support.is_empty() {
        return Err(Error::EmptySupport);
    }
    taylor_support.sort();
    let support: Vec<[i64; 2]> = taylor_support.iter().map(|j| [j[0] as i64, j[1] as i64]).collect();
    let vertices = polygon_vertices(&support);
    let (newton_distance, principal_face) = bisectrix_face(&vertices);

    let on_face: Vec<([usize; 2], f64)> = taylor_support
        .iter()
        .filter(|j| principal_face.contains([j[0] as i64, j[1] as i64]))
        .map(|&j| (j, model.coeff(j[0], j[1])))
        .collect();
    let face_degree = on_face.iter().map(|(j, _)| j[0] + j[1]).max().unwrap_or(0);
    let mut principal_part = TaylorModel::from_terms(face_degree, &on_face);
    principal_part.coeffs.retain(|t| t.value != 0.0);
    principal_part.base = model.base;
    principal_part.point = model.point;
    principal_part.rotation = model.rotation;

    let mut data = NewtonData {
        taylor_support,
        polyhedron_vertices: vertices
            .iter()
            .map(|p| [Rational64::from_integer(p[0]), Rational64::from_integer(p[1])])
            .collect(),
        newton_distance,
        principal_face,
        vanishing_order: vanishing_order_on_circle(&principal_part),
        principal_part,
        height: None,
        varchenko_exponent: None,
        predicted_exponent: None,
    };
    let (adapted, exponent) = adaptedness_and_exponent(&data);
    if adapted {
        data.height = Some(data.newton_distance);
        if exponent.is_some() {
            data.varchenko_exponent = Some(0);
        }
    }
    data.predicted_exponent = exponent;
    Ok(data)
}

/// Angular jet of `g(theta) = p(cos theta, sin theta)` at `theta0`.
fn angular_jet(p: &TaylorModel, theta0: f64, degree: usize) -> Vec<f64> {
    let t = Jet2::affine(degree, theta0, 1.0, 0.0);
    let (c, s) = (t.cos(), t.sin());
    let mut acc = Jet2::zero(degree);
    for term in &p.coeffs {
        let mut m = Jet2::constant(degree, term.value);
        for _ in 0..term.j[0] {
            m = &m * &c;
        }
        for _ in 0..term.j[1] {
            m = &m * &s;
        }
        acc = &acc + &m;
    }
    let mut fact = 1.0;
    (0..=degree)
        .map(|k| {
            if k > 0 {
                fact *= k as f64;
            }
            acc.get(k, 0) * fact
        })
        .collect()
}

const CIRCLE_SAMPLES: usize = 4096;
const SIMPLE_ZERO_TOL: f64 = 1e-8;

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest multiplicity of a zero of the polynomial on the unit circle
/// (0 when it has none).
pub fn vanishing_order_on_circle(principal_part: &TaylorModel) -> usize {
    let scale = principal_part.coeffs.iter().map(|t| t.value.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let p = principal_part.scaled(1.0 / scale);
    let max_order = p.coeffs.iter().map(|t| t.j[0] + t.j[1]).max().unwrap_or(0).max(1);
    let g = |th: f64| p.eval([th.cos(), th.sin()]);
    let dg = |th: f64| angular_jet(&p, th, 1)[1];
    let step = 2.0 * PI / CIRCLE_SAMPLES as f64;
    let vals: Vec<f64> = (0..=CIRCLE_SAMPLES).map(|k| g(k as f64 * step)).collect();
    let mut roots: Vec<f64> = Vec::new();
    for k in 0..CIRCLE_SAMPLES {
        let (t0, t1) = (k as f64 * step, (k + 1) as f64 * step);
        let (g0, g1) = (vals[k], vals[k + 1]);
        if g0 == 0.0 {
            roots.push(t0);
        } else if g1 != 0.0 && (g0 > 0.0) != (g1 > 0.0) {
            roots.push(bisect(g, t0, t1));
        } else {
            // touching zero: a sign change of g' where |g| dips
            let (d0, d1) = (dg(t0), dg(t1));
            if d0 != 0.0 && d1 != 0.0 && (d0 > 0.0) != (d1 > 0.0) {
                let t = bisect(dg, t0, t1);
                if g(t).abs() < SIMPLE_ZERO_TOL {
                    roots.push(t);
                }
            }
        }
    }
    roots
        .into_iter()
        .map(|t| {
            let d = angular_jet(&p, t, max_order + 1);
            let first = (1..=max_order + 1).find(|&k| d[k].abs() > SIMPLE_ZERO_TOL);
            first.unwrap_or(max_order + 1)
        })
        .max()
        .unwrap_or(0)
}

/// Adapted when the principal face is a compact edge and the vanishing
/// order is below the Newton distance; the exponent is `1/h` when `h < 2`.
pub fn adaptedness_and_exponent(data: &NewtonData) -> (bool, Option<Rational64>) {
    let adapted = data.principal_face.is_compact_edge()
        && Rational64::from_integer(data.vanishing_order as i64) < data.newton_distance;
    let two = Rational64::from_integer(2);
    let exponent = (adapted && data.newton_distance < two).then(|| data.newton_distance.recip());
    (adapted, exponent)
}
