use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use super::fft3::{smooth_size, Fft3};
use super::kernel::ResolventGrid;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// A linear map `C^cols -> C^rows` with its adjoint.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, v: &[Complex64]) -> Vec<Complex64>;
    fn apply_adjoint(&self, u: &[Complex64]) -> Vec<Complex64>;

    /// Real matrices keep real iterates real.
    fn is_real(&self) -> bool {
        false
    }

    fn column(&self, j: usize) -> Vec<Complex64> {
        let mut e = vec![ZERO; self.cols()];
        e[j] = Complex64::new(1.0, 0.0);
        self.apply(&e)
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl DenseOperator {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(DenseOperator { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        DenseOperator { rows, cols, data }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `diag(w1) A diag(w2)`.
    pub fn weighted(&self, w1: &[f64], w2: &[f64]) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * (w1[i] * w2[j]))
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl LinearOperator for DenseOperator {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.data.chunks(self.cols).map(|row| row.iter().zip(v).map(|(a, x)| a * x).sum()).collect()
    }

    fn apply_adjoint(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.cols];
        for (row, ui) in self.data.chunks(self.cols).zip(u) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * ui;
            }
        }
        out
    }

    fn is_real(&self) -> bool {
        self.data.iter().all(|v| v.im == 0.0)
    }

    fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

/// The finite section `[W1(x) K(x - y) W2(y)]` over `|x|_inf, |y|_inf <= S`,
/// applied by zero-padded FFT convolution.
#[derive(Debug, Clone)]
pub struct SectionOperator {
    radius: usize,
    side: usize,
    fft: Fft3,
    kernel_hat: Vec<Complex64>,
    left: Option<Vec<f64>>,
    right: Option<Vec<f64>>,
    max_entry: f64,
}

impl SectionOperator {
    pub fn new(grid: &ResolventGrid, section_radius: usize) -> Result<Self> {
        if 2 * section_radius > grid.box_radius {
            return Err(Error::InvalidArgument(format!(
                "section radius {section_radius} exceeds half the kernel box radius {}",
                grid.box_radius
            )));
        }
        let s = section_radius as i64;
        let side = 2 * section_radius + 1;
        let m = smooth_size(4 * section_radius + 1);
        let fft = Fft3::new(m);
        let mut kernel_hat = vec![ZERO; m * m * m];
        let mut max_entry = 0.0_f64;
        let wrap = |d: i64| d.rem_euclid(m as i64) as usize;
        for d1 in -2 * s..=2 * s {
            for d2 in -2 * s..=2 * s {
                for d3 in -2 * s..=2 * s {
                    let v = grid.at([d1, d2, d3]);
                    max_entry = max_entry.max(v.norm());
                    kernel_hat[(wrap(d1) * m + wrap(d2)) * m + wrap(d3)] = v;
                }
            }
        }
        let mut tmp = vec![ZERO; m * m * m];
        fft.process(&mut kernel_hat, &mut tmp, FftDirection::Forward);
        let scale = 1.0 / (m * m * m) as f64;
        kernel_hat.iter_mut().for_each(|v| *v *= scale);
        Ok(SectionOperator { radius: section_radius, side, fft, kernel_hat, left: None, right: None, max_entry })
    }

    /// Multiplies by `diag(w1)` on the left and `diag(w2)` on the right;
    /// both are indexed like the section box.
    pub fn with_weights(mut self, w1: Vec<f64>, w2: Vec<f64>) -> Result<Self> {
        let n = self.side.pow(3);
        if w1.len() != n || w2.len() != n {
            return Err(Error::InvalidArgument(format!("weights must have {n} entries")));
        }
        self.left = Some(w1);
        self.right = Some(w2);
        Ok(self)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Index of `x` in the section box, `None` outside it.
    pub fn index_of(&self, x: [i64; 3]) -> Option<usize> {
        let s = self.radius as i64;
        if x.iter().any(|c| c.abs() > s) {
            return None;
        }
        let side = self.side as i64;
        Some((((x[0] + s) * side + (x[1] + s)) * side + (x[2] + s)) as usize)
    }

    /// Largest `|K(d)|` over the offsets the section sees (unweighted).
    pub fn max_kernel_entry(&self) -> f64 {
        self.max_entry
    }

    /// `K` convolved with `v` restricted to the box; `conj_kernel` uses `conj(K)`.
    fn convolve(&self, v: &[Complex64], pre: Option<&[f64]>, post: Option<&[f64]>, conj_kernel: bool) -> Vec<Complex64> {
        let m = self.fft.size();
        let side = self.side;
        let mut buf = vec![ZERO; m * m * m];
        for i in 0..side {
            for j in 0..side {
                for k in 0..side {
                    let src = (i * side + j) * side + k;
                    let w = pre.map_or(1.0, |p| p[src]);
                    buf[(i * m + j) * m + k] = v[src] * w;
                }
            }
        }
        let mut tmp = vec![ZERO; m * m * m];
        self.fft.process(&mut buf, &mut tmp, FftDirection::Forward);
        if conj_kernel {
            // conj(K)(x) has transform conj(K^(-k)); K is even, so that is conj(K^(k)).
            buf.iter_mut().zip(&self.kernel_hat).for_each(|(b, k)| *b *= k.conj());
        } else {
            buf.iter_mut().zip(&self.kernel_hat).for_each(|(b, k)| *b *= k);
        }
        self.fft.process(&mut buf, &mut tmp, FftDirection::Inverse);
        let mut out = vec![ZERO; side * side * side];
        for i in 0..side {
            for j in 0..side {
                for k in 0..side {
                    let dst = (i * side + j) * side + k;
                    let w = post.map_or(1.0, |p| p[dst]);
                    out[dst] = buf[(i * m + j) * m + k] * w;
                }
            }
        }
        out
    }

    /// Dense copy, for small sections.
    pub fn to_dense(&self) -> DenseOperator {
        let n = self.side.pow(3);
        let cols: Vec<Vec<Complex64>> = (0..n).into_par_iter().map(|j| self.column(j)).collect();
        DenseOperator::from_fn(n, n, |i, j| cols[j][i])
    }
}

impl LinearOperator for SectionOperator {
    fn rows(&self) -> usize {
        self.side.pow(3)
    }

    fn cols(&self) -> usize {
        self.side.pow(3)
    }

    fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.convolve(v, self.right.as_deref(), self.left.as_deref(), false)
    }

    fn apply_adjoint(&self, u: &[Complex64]) -> Vec<Complex64> {
        // (W1 K W2)^* = W2 conj(K) W1 since K(x - y) = K(y - x)
        self.convolve(u, self.left.as_deref(), self.right.as_deref(), true)
    }
}

/// Iteration controls for the nonlinear power method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormOptions {
    pub restarts: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { restarts: 5, tolerance: 1e-8, max_iterations: 300, seed: 0 }
    }
}

/// Best quotient found; a lower bound on the true operator norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn lp_norm(v: &[Complex64], p: f64) -> f64 {
    let scale = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return scale;
    }
    scale * v.iter().map(|x| (x.norm() / scale).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Unit vector in the dual space norming `v`: `<dual(v), v> = ||v||_q`,
/// `||dual(v)||_{q'} = 1`.
fn duality_map(v: &[Complex64], q: f64) -> Vec<Complex64> {
    let norm = lp_norm(v, q);
    if norm == 0.0 {
        return v.to_vec();
    }
    v.iter()
        .map(|x| {
            let a = x.norm();
            if a == 0.0 {
                ZERO
            } else {
                x.conj() / a * (a / norm).powf(q - 1.0)
            }
        })
        .collect()
}

fn conj_all(v: &[Complex64]) -> Vec<Complex64> {
    v.iter().map(|x| x.conj()).collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Removes the components along `basis` (twice, for stability) and returns the norm left.
fn orthogonalise(w: &mut [Complex64], basis: &[Vec<Complex64>]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, w);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
    lp_norm(w, 2.0)
}

/// Largest singular value of the `k x k` upper bidiagonal matrix.
fn bidiagonal_top(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        let b_prev = if i > 0 { beta[i - 1] } else { 0.0 };
        gram[i * k + i] = alpha[i] * alpha[i] + b_prev * b_prev;
        if i + 1 < k {
            gram[i * k + i + 1] = alpha[i] * beta[i];
            gram[(i + 1) * k + i] = alpha[i] * beta[i];
        }
    }
    top_eigenpair(gram, k).0.max(0.0).sqrt()
}

/// Golub–Kahan–Lanczos bidiagonalisation with full reorthogonalisation; the
/// top Ritz value never exceeds the largest singular value.
fn lanczos(op: &dyn LinearOperator, start: Vec<Complex64>, opts: &NormOptions) -> NormEstimate {
    let n0 = lp_norm(&start, 2.0);
    let mut v: Vec<Complex64> = start.iter().map(|x| x / n0).collect();
    let mut us: Vec<Vec<Complex64>> = Vec::new();
    let mut vs: Vec<Vec<Complex64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut previous = f64::NAN;
    let mut value = 0.0;
    // exhausted Krylov spaces show up as residual norms at rounding level
    let exhausted = |x: f64, scale: f64| x <= 1e-13 * scale;
    let mut scale = 0.0_f64;
    for it in 1..=opts.max_iterations {
        let mut u = op.apply(&v);
        scale = scale.max(lp_norm(&u, 2.0));
        if let (Some(b), Some(last)) = (beta.last(), us.last()) {
            u.iter_mut().zip(last).for_each(|(x, y)| *x -= y * *b);
        }
        let a = orthogonalise(&mut u, &us);
        let a = if exhausted(a, scale) || us.len() == op.rows() { 0.0 } else { a };
        alpha.push(a);
        vs.push(v);
        value = bidiagonal_top(&alpha, &beta);
        if a == 0.0 {
            return NormEstimate { value, converged: true, iterations: it };
        }
        u.iter_mut().for_each(|x| *x /= a);
        let mut w = op.apply_adjoint(&u);
        scale = scale.max(lp_norm(&w, 2.0));
        w.iter_mut().zip(vs.last().unwrap()).for_each(|(x, y)| *x -= y * a);
        us.push(u);
        let b = orthogonalise(&mut w, &vs);
        if exhausted(b, scale) || vs.len() == op.cols() || (value - previous).abs() <= opts.tolerance * value {
            return NormEstimate { value, converged: true, iterations: it };
        }
        previous = value;
        beta.push(b);
        v = w.iter().map(|x| x / b).collect();
    }
    NormEstimate { value, converged: false, iterations: opts.max_iterations }
}

/// Boyd's iteration from one start vector.
fn ascend(op: &dyn LinearOperator, p: f64, q: f64, start: Vec<Complex64>, opts: &NormOptions) -> NormEstimate {
    if p == 2.0 && q == 2.0 {
        return lanczos(op, start, opts);
    }
    let p_dual = p / (p - 1.0);
    let n = lp_norm(&start, p);
    let mut v: Vec<Complex64> = start.iter().map(|x| x / n).collect();
    let mut best = 0.0_f64;
    let mut previous = f64::NAN;
    for it in 1..=opts.max_iterations {
        let w = op.apply(&v);
        let value = lp_norm(&w, q);
        best = best.max(value);
        if value == 0.0 {
            return NormEstimate { value: 0.0, converged: true, iterations: it };
        }
        if (value - previous).abs() <= opts.tolerance * value {
            return NormEstimate { value: best, converged: true, iterations: it };
        }
        previous = value;
        // u in the dual unit sphere of l^q pairing maximally with w
        let u = conj_all(&duality_map(&w, q));
        let s = op.apply_adjoint(&u);
        if lp_norm(&s, p_dual) == 0.0 {
            return NormEstimate { value: best, converged: true, iterations: it };
        }
        v = conj_all(&duality_map(&s, p_dual));
    }
    NormEstimate { value: best, converged: false, iterations: opts.max_iterations }
}

fn random_start(n: usize, real: bool, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let re = rng.gen_range(-1.0..1.0);
            let im = if real { 0.0 } else { rng.gen_range(-1.0..1.0) };
            Complex64::new(re, im)
        })
        .collect()
}

fn check_exponents(p: f64, q: f64) -> Result<()> {
    if !(p >= 1.0 && q >= p && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 1 <= p <= q, got p = {p}, q = {q}")));
    }
    Ok(())
}

/// `||op||_{p -> q}` for `1 <= p <= q`, by nonlinear power iteration with
/// duality maps (Lanczos bidiagonalisation when `p = q = 2`). The first start
/// is all ones; the rest are seeded random.
pub fn pq_norm(op: &dyn LinearOperator, p: f64, q: f64, opts: &NormOptions) -> Result<NormEstimate> {
    pq_norm_from(op, p, q, vec![vec![Complex64::new(1.0, 0.0); op.cols()]], opts)
}

/// As [`pq_norm`], starting from `starts` and topping up with seeded random
/// vectors to `opts.restarts` starts in total.
pub fn pq_norm_from(op: &dyn LinearOperator, p: f64, q: f64, mut starts: Vec<Vec<Complex64>>, opts: &NormOptions) -> Result<NormEstimate> {
    check_exponents(p, q)?;
    if p == 1.0 {
        // extreme points of the l^1 ball are the basis vectors
        let value = (0..op.cols()).into_par_iter().map(|j| lp_norm(&op.column(j), q)).reduce(|| 0.0, f64::max);
        return Ok(NormEstimate { value, converged: true, iterations: op.cols() });
    }
    if starts.iter().any(|s| s.len() != op.cols() || lp_norm(s, 2.0) == 0.0) {
        return Err(Error::InvalidArgument("start vectors must be nonzero with one entry per column".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.restarts.max(1) {
        starts.push(random_start(op.cols(), op.is_real(), &mut rng));
    }
    Ok(best_of(op, p, q, starts, opts))
}

fn best_of(op: &dyn LinearOperator, p: f64, q: f64, starts: Vec<Vec<Complex64>>, opts: &NormOptions) -> NormEstimate {
    let results: Vec<NormEstimate> = starts.into_par_iter().map(|s| ascend(op, p, q, s, opts)).collect();
    let mut best = results[0];
    let mut iterations = 0;
    for r in &results {
        iterations += r.iterations;
        if r.value > best.value {
            best = *r;
        }
    }
    NormEstimate { iterations, ..best }
}

fn dual_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// `||A||_{p -> p'}` of a dense matrix.
pub fn matrix_pq_norm(a: &DenseOperator, p: f64, opts: &NormOptions) -> Result<NormEstimate> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [1, 2]")));
    }
    if p == 1.0 {
        return Ok(NormEstimate { value: a.max_abs_entry(), converged: true, iterations: 0 });
    }
    pq_norm(a, p, dual_exponent(p), opts)
}

/// `||[K(x - y)]||_{p -> p'}` over the section `|x|_inf, |y|_inf <= S`.
/// The value is a lower bound on the norm of the truncated operator.
pub fn finite_section_norm(grid: &ResolventGrid, p: f64, section_radius: usize) -> Result<NormEstimate> {
    finite_section_norm_with(grid, p, section_radius, &NormOptions::default())
}

pub fn finite_section_norm_with(grid: &ResolventGrid, p: f64, section_radius: usize, opts: &NormOptions) -> Result<NormEstimate> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [1, 2]")));
    }
    let op = SectionOperator::new(grid, section_radius)?;
    if p == 1.0 {
        return Ok(NormEstimate { value: op.max_kernel_entry(), converged: true, iterations: 0 });
    }
    // A delta at the centre converges to a maximiser localised away from the
    // box faces, which nested sections share.
    let mut delta = vec![ZERO; op.cols()];
    delta[op.index_of([0, 0, 0]).expect("centre in box")] = Complex64::new(1.0, 0.0);
    let starts = vec![vec![Complex64::new(1.0, 0.0); op.cols()], delta];
    pq_norm_from(&op, p, dual_exponent(p), starts, opts)
}

/// A positive weight on a finite set of lattice points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub support: Vec<[i64; 3]>,
    pub values: Vec<f64>,
    pub r: f64,
    pub r_norm: f64,
}

impl WeightSpec {
    pub fn new(support: Vec<[i64; 3]>, values: Vec<f64>, r: f64) -> Result<Self> {
        if support.len() != values.len() || support.is_empty() {
            return Err(Error::InvalidArgument("support and values must be non-empty and equal length".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and strictly positive".into()));
        }
        if !(r >= 1.0) {
            return Err(Error::InvalidArgument(format!("r = {r} must be >= 1")));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != support.len() {
            return Err(Error::InvalidArgument("repeated support point".into()));
        }
        let r_norm = lp_norm(&values.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>(), r);
        Ok(WeightSpec { support, values, r, r_norm })
    }

    pub fn delta(x: [i64; 3], value: f64, r: f64) -> Result<Self> {
        Self::new(vec![x], vec![value], r)
    }

    /// Random positive weight on `|x|_inf <= radius` with unit `l^r` norm.
    pub fn random_normalized(radius: usize, r: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = radius as i64;
        let mut support = Vec::new();
        let mut values = Vec::new();
        for x1 in -s..=s {
            for x2 in -s..=s {
                for x3 in -s..=s {
                    support.push([x1, x2, x3]);
                    values.push(rng.gen_range(0.05..1.0));
                }
            }
        }
        let w = Self::new(support, values, r)?;
        let n = w.r_norm;
        Ok(w.scaled(1.0 / n))
    }

    pub fn scaled(&self, t: f64) -> Self {
        WeightSpec { values: self.values.iter().map(|v| v * t).collect(), r_norm: self.r_norm * t, ..self.clone() }
    }

    pub fn radius(&self) -> usize {
        self.support.iter().flat_map(|x| x.iter().map(|c| c.unsigned_abs() as usize)).max().unwrap_or(0)
    }

    fn on_section(&self, op: &SectionOperator) -> Vec<f64> {
        let mut out = vec![0.0; op.rows()];
        for (x, v) in self.support.iter().zip(&self.values) {
            out[op.index_of(*x).expect("support inside section")] = *v;
        }
        out
    }
}

/// Largest singular value of `[W1(x) K(x - y) W2(y)]`.
pub fn weighted_bs_norm(grid: &ResolventGrid, w1: &WeightSpec, w2: &WeightSpec) -> Result<NormEstimate> {
    weighted_bs_norm_with(grid, w1, w2, &NormOptions::default())
}

pub fn weighted_bs_norm_with(grid: &ResolventGrid, w1: &WeightSpec, w2: &WeightSpec, opts: &NormOptions) -> Result<NormEstimate> {
    let radius = w1.radius().max(w2.radius());
    let op = SectionOperator::new(grid, radius)?;
    let (l, r) = (w1.on_section(&op), w2.on_section(&op));
    let op = op.with_weights(l, r)?;
    pq_norm(&op, 2.0, 2.0, opts)
}

/// Both sides of the weighted/unweighted norm equivalence for one matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderResult {
    pub p: f64,
    pub r: f64,
    pub c_direct: f64,
    pub c_weighted: f64,
}

/// Eigenpairs of a real symmetric matrix by cyclic Jacobi rotations;
/// returns the largest eigenvalue and its unit eigenvector.
fn top_eigenpair(mut a: Vec<f64>, n: usize) -> (f64, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j].powi(2)).sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i].powi(2)).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let top = (0..n).max_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j])).unwrap_or(0);
    (a[top * n + top], (0..n).map(|k| v[k * n + top]).collect())
}

/// Top singular triple `(sigma, x, y)` of a real row-major matrix, `A y = sigma x`.
fn top_singular(a: &[f64], rows: usize, cols: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let mut gram = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in 0..cols {
            gram[i * cols + j] = (0..rows).map(|k| a[k * cols + i] * a[k * cols + j]).sum();
        }
    }
    let (lambda, y) = top_eigenpair(gram, cols);
    let ay: Vec<f64> = (0..rows).map(|i| (0..cols).map(|j| a[i * cols + j] * y[j]).sum()).collect();
    let sigma = ay.iter().map(|v| v * v).sum::<f64>().sqrt();
    let x = if sigma > 0.0 { ay.iter().map(|v| v / sigma).collect() } else { vec![0.0; rows] };
    debug_assert!((sigma * sigma - lambda).abs() <= 1e-8 * lambda.abs().max(1.0));
    (sigma, x, y)
}

fn real_lp(v: &[f64], r: f64) -> f64 {
    lp_norm(&v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>(), r)
}

/// The weight maximising `||diag(w) g||_2` over the unit `l^r` sphere.
fn best_weight(g: &[f64], p_dual: f64, r: f64) -> Vec<f64> {
    let mut w: Vec<f64> = if p_dual.is_infinite() {
        let k = (0..g.len()).max_by(|&i, &j| g[i].abs().total_cmp(&g[j].abs())).unwrap_or(0);
        (0..g.len()).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
    } else {
        let scale = g.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        g.iter().map(|x| (x.abs() / scale).powf((p_dual - 2.0) / 2.0)).collect()
    };
    let n = real_lp(&w, r);
    if n > 0.0 {
        w.iter_mut().for_each(|x| *x /= n);
    }
    w
}

fn weighted_sigma(a: &[f64], rows: usize, cols: usize, w1: &[f64], w2: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let m: Vec<f64> = (0..rows * cols).map(|k| a[k] * w1[k / cols] * w2[k % cols]).collect();
    top_singular(&m, rows, cols)
}

/// Alternating maximisation of `||W1 A W2||_2` over unit `l^r` weights.
fn optimise_weights(a: &[f64], rows: usize, cols: usize, p: f64, r: f64, mut w1: Vec<f64>, mut w2: Vec<f64>) -> f64 {
    let p_dual = dual_exponent(p);
    let n1 = real_lp(&w1, r);
    let n2 = real_lp(&w2, r);
    w1.iter_mut().for_each(|x| *x /= n1);
    w2.iter_mut().for_each(|x| *x /= n2);
    let mut best = 0.0_f64;
    let mut previous = f64::NAN;
    for _ in 0..500 {
        let (sigma, _, y) = weighted_sigma(a, rows, cols, &w1, &w2);
        best = best.max(sigma / (real_lp(&w1, r) * real_lp(&w2, r)));
        // g = A W2 y, then W1 maximises ||W1 g||_2
        let g: Vec<f64> = (0..rows).map(|i| (0..cols).map(|j| a[i * cols + j] * w2[j] * y[j]).sum()).collect();
        w1 = best_weight(&g, p_dual, r);
        let (sigma, x, _) = weighted_sigma(a, rows, cols, &w1, &w2);
        best = best.max(sigma / (real_lp(&w1, r) * real_lp(&w2, r)));
        let h: Vec<f64> = (0..cols).map(|j| (0..rows).map(|i| a[i * cols + j] * w1[i] * x[i]).sum()).collect();
        w2 = best_weight(&h, p_dual, r);
        if (best - previous).abs() <= 1e-14 * best {
            break;
        }
        previous = best;
    }
    best
}

/// Computes `||A||_{p -> p'}` directly and as the supremum of
/// `||W1 A W2||_2 / (||W1||_r ||W2||_r)` with `1/p = 1/2 + 1/r`, for a real
/// matrix. Each side is maximised from its own starts.
pub fn holder_equivalence_test(a: &DenseOperator, p: f64, trials: usize, seed: u64) -> Result<HolderResult> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [1, 2]")));
    }
    if !a.is_real() {
        return Err(Error::InvalidArgument("matrix must be real".into()));
    }
    if a.rows > 32 || a.cols > 32 {
        return Err(Error::InvalidArgument("matrix larger than 32x32".into()));
    }
    let (rows, cols) = (a.rows, a.cols);
    let r = if p == 2.0 { f64::INFINITY } else { 2.0 * p / (2.0 - p) };
    let p_dual = dual_exponent(p);
    let re: Vec<f64> = a.data.iter().map(|v| v.re).collect();

    let c_direct = if p == 1.0 {
        a.max_abs_entry()
    } else {
        let opts = NormOptions { tolerance: 1e-14, max_iterations: 2000, ..NormOptions::default() };
        let mut starts = vec![vec![Complex64::new(1.0, 0.0); cols]];
        if cols <= 10 {
            for mask in 1..(1usize << cols) {
                starts.push((0..cols).map(|j| Complex64::new(if mask >> j & 1 == 1 { -1.0 } else { 1.0 }, 0.0)).collect());
            }
        }
        for j in 0..cols {
            let mut e = vec![ZERO; cols];
            e[j] = Complex64::new(1.0, 0.0);
            starts.push(e);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            starts.push(random_start(cols, true, &mut rng));
        }
        best_of(a, p, p_dual, starts, &opts).value
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0fa1);
    let mut starts = vec![(vec![1.0; rows], vec![1.0; cols])];
    // weight concentrated on one row or one column; the alternating
    // iteration has local maxima that uniform starts miss
    let peaked = |n: usize, k: usize| (0..n).map(|i| if i == k { 1.0 } else { 0.1 }).collect::<Vec<f64>>();
    for j in 0..cols {
        starts.push((vec![1.0; rows], peaked(cols, j)));
    }
    for i in 0..rows {
        starts.push((peaked(rows, i), vec![1.0; cols]));
    }
    for _ in 0..trials {
        let w1 = (0..rows).map(|_| rng.gen_range(0.01..1.0)).collect();
        let w2 = (0..cols).map(|_| rng.gen_range(0.01..1.0)).collect();
        starts.push((w1, w2));
    }
    let c_weighted = starts
        .into_par_iter()
        .map(|(w1, w2)| optimise_weights(&re, rows, cols, p, r, w1, w2))
        .reduce(|| 0.0, f64::max);
    Ok(HolderResult { p, r, c_direct, c_weighted })
}
