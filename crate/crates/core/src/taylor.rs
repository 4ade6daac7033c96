//! Taylor models of the graph function at degenerate points and their
//! classification into the cubic/quartic normal forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermi::{curvature_data, FermiPatch};
use crate::torus::{EnergyLevel, TorusPoint};

/// Coefficient of `eta1^j[0] eta2^j[1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub j: [usize; 2],
    pub value: f64,
}

/// Bivariate Taylor polynomial of `f` in `xi' = base + rotation * eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorModel {
    pub base: [f64; 2],
    pub point: TorusPoint,
    pub rotation: [[f64; 2]; 2],
    pub degree: usize,
    /// Every bi-index up to `degree`, ordered by total degree then by `j[1]`.
    pub coeffs: Vec<Term>,
}

impl TaylorModel {
    /// Model from explicit coefficients, identity rotation.
    pub fn from_terms(degree: usize, terms: &[([usize; 2], f64)]) -> Self {
        let mut m = TaylorModel {
            base: [0.0; 2],
            point: TorusPoint::new([0.0; 3]),
            rotation: [[1.0, 0.0], [0.0, 1.0]],
            degree,
            coeffs: dense_terms(degree),
        };
        for &(j, v) in terms {
            m.set(j[0], j[1], v);
        }
        m
    }

    pub fn coeff(&self, j1: usize, j2: usize) -> f64 {
        self.coeffs.iter().find(|t| t.j == [j1, j2]).map_or(0.0, |t| t.value)
    }

    pub fn set(&mut self, j1: usize, j2: usize, v: f64) {
        match self.coeffs.iter_mut().find(|t| t.j == [j1, j2]) {
            Some(t) => t.value = v,
            None => {
                self.coeffs.push(Term { j: [j1, j2], value: v });
                self.degree = self.degree.max(j1 + j2);
                sort_terms(&mut self.coeffs);
            }
        }
    }

    pub fn eval(&self, eta: [f64; 2]) -> f64 {
        self.coeffs
            .iter()
            .map(|t| t.value * eta[0].powi(t.j[0] as i32) * eta[1].powi(t.j[1] as i32))
            .sum()
    }

    /// `eta1 <-> eta2`.
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        for t in &mut out.coeffs {
            t.j = [t.j[1], t.j[0]];
        }
        out.base = [self.base[1], self.base[0]];
        out.rotation = [[self.rotation[1][1], self.rotation[1][0]], [self.rotation[0][1], self.rotation[0][0]]];
        sort_terms(&mut out.coeffs);
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.coeffs {
            t.value *= s;
        }
        out
    }
}

fn dense_terms(degree: usize) -> Vec<Term> {
    let mut v = Vec::new();
    for total in 0..=degree {
        for j2 in 0..=total {
            v.push(Term { j: [total - j2, j2], value: 0.0 });
        }
    }
    v
}

fn sort_terms(v: &mut [Term]) {
    v.sort_by_key(|t| (t.j[0] + t.j[1], t.j[1]));
}

/// Taylor expansion of the chart's graph function at `center`.
///
/// With `rotate`, `eta` runs along the eigenvectors of the Hessian `B`,
/// the eigenvalue of smaller magnitude first.
pub fn taylor_expand(patch: &FermiPatch, center: [f64; 2], degree: usize, rotate: bool) -> Result<TaylorModel> {
    if !(2..=6).contains(&degree) {
        return Err(Error::InvalidOrder(degree));
    }
    let point = patch.point(center)?;
    let rotation = if rotate {
        let cd = curvature_data(patch, center)?;
        let gap = (cd.eigvals[0] - cd.eigvals[1]).abs();
        if gap < 1e-10 {
            return Err(Error::EigenvalueCollision(gap));
        }
        let [u, v] = cd.eigvecs;
        [[u[0], v[0]], [u[1], v[1]]]
    } else {
        [[1.0, 0.0], [0.0, 1.0]]
    };
    let jet = patch.graph_jet(center, rotation, degree)?;
    let mut coeffs = dense_terms(degree);
    for t in &mut coeffs {
        t.value = jet.get(t.j[0], t.j[1]);
    }
    Ok(TaylorModel { base: center, point, rotation, degree, coeffs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    /// Vanishing quadratic part, cubic part `a12 eta1^2 eta2 + a21 eta1 eta2^2`.
    UmbilicCubic,
    /// One principal curvature vanishes; `eta1` is the flat direction.
    GenericDegenerate,
    /// Two cosines vanish; the flat direction has vanishing cubic and quartic terms.
    SpecialAxisPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFormCase {
    pub case_tag: CaseTag,
    /// Quantities the case requires to vanish, with their measured values.
    pub verified_constraints: Vec<(String, f64)>,
    /// Normal-form coefficients reported as measured.
    pub measured: Vec<(String, f64)>,
    /// `alpha_111 = 0` together with `alpha_1111 != 0`: no decay prediction.
    pub outside_hypotheses: bool,
}

const CONSTRAINT_TOL: f64 = 1e-8;
const NONZERO_TOL: f64 = 1e-3;

/// Normal-form coefficients `alpha_*`, with `eta_1` the first principal direction.
pub fn normal_form_coefficients(m: &TaylorModel) -> Vec<(String, f64)> {
    let c = |i, j| m.coeff(i, j);
    let mut v = vec![
        ("alpha_1".to_string(), c(2, 0)),
        ("alpha_2".to_string(), c(0, 2)),
        ("alpha_111".to_string(), c(3, 0)),
        ("alpha_112".to_string(), c(2, 1) / 3.0),
        ("alpha_122".to_string(), c(1, 2) / 3.0),
        ("alpha_222".to_string(), c(0, 3)),
    ];
    if m.degree >= 4 {
        for (name, j) in [("1111", [4, 0]), ("1112", [3, 1]), ("1122", [2, 2]), ("1222", [1, 3]), ("2222", [0, 4])] {
            v.push((format!("alpha_{name}"), c(j[0], j[1])));
        }
    }
    v
}

pub fn classify_normal_form(model: &TaylorModel, energy: EnergyLevel) -> Result<NormalFormCase> {
    if model.degree < 4 {
        return Err(Error::InvalidOrder(model.degree));
    }
    let c = |i, j| model.coeff(i, j);
    let abs_name = |name: &str, v: f64| (name.to_string(), v.abs());
    let quad = [c(2, 0), c(1, 1), c(0, 2)];

    if quad.iter().all(|v| v.abs() < CONSTRAINT_TOL) {
        let (a12, a21) = (c(2, 1), c(1, 2));
        if a12.abs() > NONZERO_TOL && a21.abs() > NONZERO_TOL && (energy.lambda - 6.0).abs() < 1e-9 {
            return Ok(NormalFormCase {
                case_tag: CaseTag::UmbilicCubic,
                verified_constraints: vec![
                    abs_name("alpha_1", quad[0]),
                    abs_name("alpha_2", quad[2]),
                    abs_name("mixed_quadratic", quad[1]),
                    abs_name("alpha_111", c(3, 0)),
                    abs_name("alpha_222", c(0, 3)),
                ],
                measured: vec![("alpha_12".into(), a12), ("alpha_21".into(), a21)],
                outside_hypotheses: false,
            });
        }
        return Err(Error::UnclassifiedPoint("vanishing quadratic part without umbilic cubic".into()));
    }

    let a = model.point.a;
    let zeros = a.iter().filter(|v| v.abs() < CONSTRAINT_TOL).count();
    let measured = normal_form_coefficients(model);
    if zeros == 2 {
        let constraints = vec![
            abs_name("alpha_1", c(2, 0)),
            abs_name("alpha_111", c(3, 0)),
            abs_name("alpha_1111", c(4, 0)),
        ];
        let ok = constraints.iter().all(|(_, r)| *r < CONSTRAINT_TOL) && c(2, 1).abs() > NONZERO_TOL;
        if !ok {
            return Err(Error::UnclassifiedPoint(format!(
                "special axis point without the expected normal form: {constraints:?}"
            )));
        }
        return Ok(NormalFormCase {
            case_tag: CaseTag::SpecialAxisPoint,
            verified_constraints: constraints,
            measured,
            outside_hypotheses: false,
        });
    }

    let constraints = vec![abs_name("alpha_1", c(2, 0)), abs_name("mixed_quadratic", c(1, 1))];
    if constraints.iter().all(|(_, r)| *r < CONSTRAINT_TOL) && c(0, 2).abs() > CONSTRAINT_TOL {
        let outside = c(3, 0).abs() < CONSTRAINT_TOL && c(4, 0).abs() >= CONSTRAINT_TOL;
        return Ok(NormalFormCase {
            case_tag: CaseTag::GenericDegenerate,
            verified_constraints: constraints,
            measured,
            outside_hypotheses: outside,
        });
    }
    Err(Error::UnclassifiedPoint(format!(
        "no normal form matches: quadratic part {quad:?}"
    )))
}
