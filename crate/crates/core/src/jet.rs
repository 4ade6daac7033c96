//! Truncated power series in one and two variables.
//!
//! Used to push exact Taylor coefficients through `cos`, `acos` and products
//! without finite differencing.

use std::ops::{Add, Mul, Sub};

/// Univariate series `sum c_n t^n`, truncated at a fixed length.
#[derive(Debug, Clone, PartialEq)]
pub struct Series(pub Vec<f64>);

impl Series {
    /// `Q^alpha` for a series with nonzero constant term.
    pub fn powf(&self, alpha: f64) -> Series {
        let q = &self.0;
        let n = q.len();
        let mut p = vec![0.0; n];
        p[0] = q[0].powf(alpha);
        for m in 1..n {
            let mut acc = 0.0;
            for k in 1..=m.min(n - 1) {
                acc += (alpha * k as f64 - m as f64 + k as f64) * q[k] * p[m - k];
            }
            p[m] = acc / (m as f64 * q[0]);
        }
        Series(p)
    }

    /// Taylor coefficients of `acos(u0 + t)` up to `t^degree`.
    pub fn acos_at(u0: f64, degree: usize) -> Series {
        let q = Series(
            [1.0 - u0 * u0, -2.0 * u0, -1.0]
                .into_iter()
                .chain(std::iter::repeat(0.0))
                .take(degree.max(3))
                .collect(),
        );
        let d = q.powf(-0.5);
        let mut y = vec![0.0; degree + 1];
        y[0] = u0.clamp(-1.0, 1.0).acos();
        for m in 1..=degree {
            y[m] = -d.0[m - 1] / m as f64;
        }
        Series(y)
    }
}

/// Bivariate series truncated at total degree `degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    degree: usize,
    c: Vec<f64>,
}

impl Jet2 {
    fn idx(degree: usize, i: usize, j: usize) -> usize {
        i * (degree + 1) + j
    }

    pub fn zero(degree: usize) -> Self {
        Self { degree, c: vec![0.0; (degree + 1) * (degree + 1)] }
    }

    pub fn constant(degree: usize, v: f64) -> Self {
        let mut z = Self::zero(degree);
        z.c[0] = v;
        z
    }

    /// `v0 + l1 eta1 + l2 eta2`.
    pub fn affine(degree: usize, v0: f64, l1: f64, l2: f64) -> Self {
        let mut z = Self::constant(degree, v0);
        if degree >= 1 {
            z.set(1, 0, l1);
            z.set(0, 1, l2);
        }
        z
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + j > self.degree {
            0.0
        } else {
            self.c[Self::idx(self.degree, i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i + j <= self.degree);
        let k = Self::idx(self.degree, i, j);
        self.c[k] = v;
    }

    pub fn constant_term(&self) -> f64 {
        self.c[0]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { degree: self.degree, c: self.c.iter().map(|v| v * s).collect() }
    }

    fn without_constant(&self) -> Self {
        let mut z = self.clone();
        z.c[0] = 0.0;
        z
    }

    /// Compose a univariate series (expanded around this jet's constant term)
    /// with the nilpotent part of the jet.
    pub fn compose(&self, s: &Series) -> Self {
        let v = self.without_constant();
        let mut acc = Self::constant(self.degree, *s.0.last().unwrap_or(&0.0));
        for coef in s.0.iter().rev().skip(1) {
            acc = &(&acc * &v) + &Self::constant(self.degree, *coef);
        }
        acc
    }

    pub fn cos(&self) -> Self {
        let (s0, c0) = self.c[0].sin_cos();
        self.compose(&trig_series(c0, s0, self.degree, false))
    }

    pub fn sin(&self) -> Self {
        let (s0, c0) = self.c[0].sin_cos();
        self.compose(&trig_series(c0, s0, self.degree, true))
    }

    pub fn acos(&self) -> Self {
        self.compose(&Series::acos_at(self.c[0], self.degree))
    }

    /// Iterator over `((i, j), coefficient)` for every stored monomial.
    pub fn terms(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        (0..=self.degree)
            .flat_map(move |i| (0..=self.degree - i).map(move |j| (i, j)))
            .map(move |(i, j)| ((i, j), self.get(i, j)))
    }
}

/// Taylor coefficients of `cos(u0 + t)` (or `sin`) given `cos u0`, `sin u0`.
fn trig_series(c0: f64, s0: f64, degree: usize, sine: bool) -> Series {
    // d^n/dt^n cos(u0+t) cycles through cos, -sin, -cos, sin.
    let cyc_cos = [c0, -s0, -c0, s0];
    let cyc_sin = [s0, c0, -s0, -c0];
    let cyc = if sine { cyc_sin } else { cyc_cos };
    let mut fact = 1.0;
    let mut out = Vec::with_capacity(degree + 1);
    for n in 0..=degree {
        if n > 0 {
            fact *= n as f64;
        }
        out.push(cyc[n % 4] / fact);
    }
    Series(out)
}

impl Add for &Jet2 {
    type Output = Jet2;
    fn add(self, o: &Jet2) -> Jet2 {
        debug_assert_eq!(self.degree, o.degree);
        Jet2 { degree: self.degree, c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Jet2 {
    type Output = Jet2;
    fn sub(self, o: &Jet2) -> Jet2 {
        debug_assert_eq!(self.degree, o.degree);
        Jet2 { degree: self.degree, c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &Jet2 {
    type Output = Jet2;
    fn mul(self, o: &Jet2) -> Jet2 {
        let d = self.degree;
        let mut z = Jet2::zero(d);
        for i1 in 0..=d {
            for j1 in 0..=d - i1 {
                let x = self.c[Jet2::idx(d, i1, j1)];
                if x == 0.0 {
                    continue;
                }
                for i2 in 0..=d - i1 - j1 {
                    for j2 in 0..=d - i1 - j1 - i2 {
                        z.c[Jet2::idx(d, i1 + i2, j1 + j2)] += x * o.c[Jet2::idx(d, i2, j2)];
                    }
                }
            }
        }
        z
    }
}
