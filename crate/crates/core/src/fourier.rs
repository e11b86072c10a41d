//! Truncated Fourier representation of real functions on the circle `[0, 1)`.
//!
//! A [`SpectralFunction`] of order `N` stores the coefficients `c_k`,
//! `k = -N..=N`, of `f(x) = sum_k c_k exp(2 pi i k x)`. Every constructor
//! and operation keeps the vector conjugate-symmetric, so the represented
//! function is real.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Tolerance on `|c_{-k} - conj(c_k)|`, relative to `max(1, max_k |c_k|)`.
pub const SYMMETRY_TOL: f64 = 1e-13;

const IMAG_RESIDUE_TOL: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_forward(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn fft_inverse(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Smallest power of two that is at least `n`.
pub fn grid_size_for(n: usize) -> usize {
    n.max(4).next_power_of_two()
}

/// A real function on the circle held as Fourier coefficients `c_{-N..=N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFunction {
    coeffs: Vec<Complex64>,
    order: usize,
}

impl SpectralFunction {
    /// Wraps a coefficient vector of length `2N + 1` (index `k + N`).
    ///
    /// Fails if the vector is not conjugate-symmetric to [`SYMMETRY_TOL`].
    /// Within tolerance the pair `(c_k, c_{-k})` is replaced by its
    /// symmetric average.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "coefficient vector must have odd length, got {}",
                coeffs.len()
            )));
        }
        let order = coeffs.len() / 2;
        let defect = symmetry_defect(&coeffs);
        if defect > SYMMETRY_TOL * scale_of(&coeffs) {
            return Err(Error::NotReal(defect));
        }
        Ok(Self::symmetrized(coeffs, order))
    }

    /// Internal constructor for vectors produced by a numerical operation
    /// (matrix products, linear solves) whose asymmetry is roundoff.
    pub(crate) fn from_computed(coeffs: Vec<Complex64>) -> Self {
        let order = coeffs.len() / 2;
        debug_assert!(
            symmetry_defect(&coeffs) <= 1e-9 * scale_of(&coeffs),
            "conjugate symmetry lost: defect {:e}",
            symmetry_defect(&coeffs)
        );
        Self::symmetrized(coeffs, order)
    }

    fn symmetrized(mut coeffs: Vec<Complex64>, order: usize) -> Self {
        coeffs[order].im = 0.0;
        for k in 1..=order {
            let avg = 0.5 * (coeffs[order + k] + coeffs[order - k].conj());
            coeffs[order + k] = avg;
            coeffs[order - k] = avg.conj();
        }
        Self { coeffs, order }
    }

    pub fn zero(order: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * order + 1],
            order,
        }
    }

    pub fn constant(order: usize, value: f64) -> Self {
        let mut f = Self::zero(order);
        f.coeffs[order] = Complex64::new(value, 0.0);
        f
    }

    /// `amp * cos(2 pi k x)`.
    pub fn cos_mode(order: usize, k: usize, amp: f64) -> Self {
        let mut f = Self::zero(order);
        f.add_mode(k, Complex64::new(0.5 * amp, 0.0));
        f
    }

    /// `amp * sin(2 pi k x)`.
    pub fn sin_mode(order: usize, k: usize, amp: f64) -> Self {
        let mut f = Self::zero(order);
        f.add_mode(k, Complex64::new(0.0, -0.5 * amp));
        f
    }

    /// Adds `c exp(2 pi i k x) + conj(c) exp(-2 pi i k x)` (or `Re c` when
    /// `k = 0`). Modes above the truncation order are dropped.
    pub(crate) fn add_mode(&mut self, k: usize, c: Complex64) {
        if k > self.order {
            return;
        }
        let n = self.order;
        if k == 0 {
            self.coeffs[n].re += c.re;
        } else {
            self.coeffs[n + k] += c;
            self.coeffs[n - k] += c.conj();
        }
    }

    /// Samples a real function on a grid fine enough for `order` and
    /// projects onto the truncated basis.
    pub fn sample<F: Fn(f64) -> f64>(order: usize, f: F) -> Self {
        let m = grid_size_for(4 * (2 * order + 2));
        let values = (0..m).map(|j| f(j as f64 / m as f64)).collect();
        let grid = GridFunction { values };
        from_grid(&grid, order).expect("grid sized for order")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Coefficients for `k = -N..=N`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `c_k`, zero outside the truncation.
    pub fn coeff(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.order {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + self.order as i64) as usize]
        }
    }

    /// `c_0`, the integral over the circle.
    pub fn mean(&self) -> f64 {
        self.coeffs[self.order].re
    }

    /// Copy with `c_0` set to zero.
    pub fn without_mean(&self) -> Self {
        let mut f = self.clone();
        f.coeffs[self.order] = Complex64::new(0.0, 0.0);
        f
    }

    /// Pads with zeros or truncates to a new order.
    pub fn with_order(&self, order: usize) -> Self {
        let mut out = Self::zero(order);
        let keep = order.min(self.order);
        for k in -(keep as i64)..=(keep as i64) {
            out.coeffs[(k + order as i64) as usize] = self.coeff(k);
        }
        out
    }

    /// Point evaluation by direct summation.
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = self.mean();
        let w = Complex64::from_polar(1.0, 2.0 * PI * x);
        let mut wk = w;
        for k in 1..=self.order {
            acc += 2.0 * (self.coeffs[self.order + k] * wk).re;
            wk *= w;
            if k % 32 == 0 {
                // resynchronise the running power against drift
                wk = Complex64::from_polar(1.0, 2.0 * PI * ((k + 1) as f64 * x).fract());
            }
        }
        acc
    }

    /// `int_a^b f`.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        self.mean() * (b - a) + self.periodic_antiderivative(b) - self.periodic_antiderivative(a)
    }

    /// Antiderivative without the linear term: `sum_{k != 0} c_k e_k / (2 pi i k)`.
    fn periodic_antiderivative(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        let w = Complex64::from_polar(1.0, 2.0 * PI * x.fract());
        let mut wk = w;
        for k in 1..=self.order {
            let ck = self.coeffs[self.order + k] / Complex64::new(0.0, 2.0 * PI * k as f64);
            acc += 2.0 * (ck * wk).re;
            wk *= w;
            if k % 32 == 0 {
                wk = Complex64::from_polar(1.0, 2.0 * PI * ((k + 1) as f64 * x).fract());
            }
        }
        acc
    }

    /// `max_k |c_{-k} - conj(c_k)|`.
    pub fn symmetry_defect(&self) -> f64 {
        symmetry_defect(&self.coeffs)
    }

    /// Largest coefficient modulus.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            order: self.order,
        }
    }

    fn zip_with(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let order = self.order.max(other.order);
        let coeffs = (-(order as i64)..=(order as i64))
            .map(|k| op(self.coeff(k), other.coeff(k)))
            .collect();
        Self { coeffs, order }
    }
}

fn scale_of(coeffs: &[Complex64]) -> f64 {
    coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max)
}

fn symmetry_defect(coeffs: &[Complex64]) -> f64 {
    let n = coeffs.len() / 2;
    (0..=n)
        .map(|k| (coeffs[n - k] - coeffs[n + k].conj()).norm())
        .fold(0.0, f64::max)
}

impl Add for &SpectralFunction {
    type Output = SpectralFunction;
    fn add(self, rhs: Self) -> SpectralFunction {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &SpectralFunction {
    type Output = SpectralFunction;
    fn sub(self, rhs: Self) -> SpectralFunction {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &SpectralFunction {
    type Output = SpectralFunction;
    fn neg(self) -> SpectralFunction {
        self.scale(-1.0)
    }
}

impl Mul<&SpectralFunction> for f64 {
    type Output = SpectralFunction;
    fn mul(self, rhs: &SpectralFunction) -> SpectralFunction {
        rhs.scale(self)
    }
}

/// Real samples on the uniform grid `x_j = j / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !values.len().is_power_of_two() || values.len() < 4 {
            return Err(Error::GridNotPowerOfTwo(values.len()));
        }
        Ok(Self { values })
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, j: usize) -> f64 {
        j as f64 / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

fn check_grid(m: usize, order: usize) -> Result<()> {
    if !m.is_power_of_two() || m < 4 {
        return Err(Error::GridNotPowerOfTwo(m));
    }
    if m < 2 * order + 2 {
        return Err(Error::Aliasing {
            grid: m,
            order,
            needed: 2 * order + 2,
        });
    }
    Ok(())
}

/// Evaluates `f` on the `m`-point uniform grid.
pub fn to_grid(f: &SpectralFunction, m: usize) -> Result<GridFunction> {
    check_grid(m, f.order)?;
    let n = f.order as i64;
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for k in -n..=n {
        buf[k.rem_euclid(m as i64) as usize] = f.coeff(k);
    }
    fft_inverse(m).process(&mut buf);
    let scale = f.max_abs_coeff().max(1.0);
    debug_assert!(
        buf.iter().all(|z| z.im.abs() <= IMAG_RESIDUE_TOL * scale * (2 * n + 1) as f64),
        "imaginary residue in real transform"
    );
    Ok(GridFunction {
        values: buf.into_iter().map(|z| z.re).collect(),
    })
}

/// Projects grid samples onto Fourier modes `|k| <= order`.
pub fn from_grid(g: &GridFunction, order: usize) -> Result<SpectralFunction> {
    let m = g.grid_size();
    check_grid(m, order)?;
    let mut buf: Vec<Complex64> = g.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(m).process(&mut buf);
    let inv = 1.0 / m as f64;
    let n = order as i64;
    let coeffs = (-n..=n)
        .map(|k| buf[k.rem_euclid(m as i64) as usize] * inv)
        .collect();
    Ok(SpectralFunction::symmetrized(coeffs, order))
}

/// `f^{(order)}`: multiplies `c_k` by `(2 pi i k)^order`.
pub fn differentiate(f: &SpectralFunction, order: u32) -> SpectralFunction {
    let n = f.order as i64;
    let mut coeffs: Vec<Complex64> = (-n..=n)
        .map(|k| Complex64::new(0.0, 2.0 * PI * k as f64).powu(order) * f.coeff(k))
        .collect();
    if order >= 1 {
        coeffs[f.order] = Complex64::new(0.0, 0.0);
    }
    SpectralFunction::symmetrized(coeffs, f.order)
}

/// Pointwise product truncated to the larger of the two orders.
///
/// The product of two degree-`N` trigonometric polynomials is formed on a
/// grid of at least `4N` points, which is alias-free for every retained mode.
pub fn multiply(f: &SpectralFunction, g: &SpectralFunction) -> SpectralFunction {
    let order = f.order.max(g.order);
    let m = grid_size_for(4 * order.max(1));
    let fg = to_grid(f, m).expect("dealiasing grid");
    let gg = to_grid(g, m).expect("dealiasing grid");
    let values = fg.values.iter().zip(&gg.values).map(|(a, b)| a * b).collect();
    from_grid(&GridFunction { values }, order).expect("dealiasing grid")
}

/// Gaussian noise of standard deviation `xi`, wrapped onto the circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseKernel {
    xi: f64,
}

impl NoiseKernel {
    pub fn new(xi: f64) -> Result<Self> {
        if !(xi.is_finite() && xi > 0.0) {
            return Err(Error::InvalidNoise(xi));
        }
        Ok(Self { xi })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Fourier coefficient `k` of the periodized kernel, `exp(-2 pi^2 xi^2 k^2)`.
    pub fn multiplier(&self, k: i64) -> f64 {
        let k = k as f64;
        (-2.0 * PI * PI * self.xi * self.xi * k * k).exp()
    }

    /// Number of integer translates summed on each side in real space.
    pub fn wrap_cutoff(&self) -> i64 {
        (8.0 * self.xi).ceil() as i64 + 2
    }

    /// `d^deriv/dx^deriv` of the periodized density, by direct summation
    /// of translates.
    pub fn periodized(&self, x: f64, deriv: u32) -> f64 {
        let cutoff = self.wrap_cutoff();
        let norm = 1.0 / ((2.0 * PI).sqrt() * self.xi);
        (-cutoff..=cutoff)
            .map(|m| {
                let z = (x + m as f64) / self.xi;
                let sign = if deriv.is_multiple_of(2) { 1.0 } else { -1.0 };
                sign * hermite_prob(deriv, z) * norm * (-0.5 * z * z).exp()
                    / self.xi.powi(deriv as i32)
            })
            .sum()
    }

    /// The periodized kernel as a spectral function of the given order.
    pub fn as_spectral(&self, order: usize) -> SpectralFunction {
        let n = order as i64;
        let coeffs = (-n..=n).map(|k| Complex64::new(self.multiplier(k), 0.0)).collect();
        SpectralFunction::symmetrized(coeffs, order)
    }
}

/// Probabilists' Hermite polynomial `He_n`.
fn hermite_prob(n: u32, z: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, z);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = z * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Convolution with the periodized Gaussian.
pub fn convolve_gaussian(f: &SpectralFunction, kernel: &NoiseKernel) -> SpectralFunction {
    let n = f.order as i64;
    let coeffs = (-n..=n).map(|k| f.coeff(k) * kernel.multiplier(k)).collect();
    SpectralFunction::symmetrized(coeffs, f.order)
}

/// Norms used for hypothesis checks and Taylor remainders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    /// `sum_{i <= j} max_x |f^{(i)}(x)|`.
    Ck(u32),
    /// `sum_{i <= j} ||f^{(i)}||_{L^1}`.
    Wk1(u32),
}

impl Norm {
    pub fn label(&self) -> String {
        match self {
            Norm::L1 => "L1".to_string(),
            Norm::Ck(j) => format!("C{j}"),
            Norm::Wk1(j) => format!("W{j}1"),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "l1" {
            return Ok(Norm::L1);
        }
        let parse = |t: &str| {
            t.parse::<u32>()
                .map_err(|_| Error::Config(format!("unknown norm '{s}'")))
        };
        if let Some(rest) = lower.strip_prefix('c') {
            return Ok(Norm::Ck(parse(rest)?));
        }
        if let Some(rest) = lower.strip_prefix('w') {
            if let Some(j) = rest.strip_suffix('1') {
                return Ok(Norm::Wk1(parse(j)?));
            }
        }
        Err(Error::Config(format!("unknown norm '{s}'")))
    }
}

/// Size of the evaluation grid used for norms.
pub fn fine_grid_size(order: usize) -> usize {
    grid_size_for(1024.max(8 * order))
}

pub fn norm(f: &SpectralFunction, which: Norm) -> f64 {
    match which {
        Norm::L1 => l1_norm(f),
        Norm::Ck(j) => (0..=j)
            .map(|i| {
                let d = differentiate(f, i);
                to_grid(&d, fine_grid_size(f.order)).expect("fine grid").max_abs()
            })
            .sum(),
        Norm::Wk1(j) => (0..=j).map(|i| l1_norm(&differentiate(f, i))).sum(),
    }
}

/// `int |f|` computed exactly from the antiderivative between the sign
/// changes of `f`, which are bracketed on the fine grid and refined by
/// bisection.
fn l1_norm(f: &SpectralFunction) -> f64 {
    let m = fine_grid_size(f.order);
    let grid = to_grid(f, m).expect("fine grid");
    let v = grid.values();
    let h = 1.0 / m as f64;
    // values this small are rounding noise; their sign changes are only interpolated
    let noise = 8.0 * f64::EPSILON * f.coeffs.iter().map(|c| c.norm()).sum::<f64>();
    if grid.max_abs() <= noise {
        return v.iter().map(|x| x.abs()).sum::<f64>() * h;
    }
    let mut roots = Vec::new();
    for j in 0..m {
        let (a, b) = (v[j], v[(j + 1) % m]);
        let (lo, hi) = (j as f64 * h, (j + 1) as f64 * h);
        if a == 0.0 {
            roots.push(lo);
        } else if a * b < 0.0 {
            if a.abs().max(b.abs()) <= noise {
                roots.push(lo + h * a / (a - b));
            } else {
                roots.push(refine_root(f, lo, hi, a, b, noise));
            }
        }
    }
    let c0 = f.mean();
    if roots.is_empty() {
        return c0.abs();
    }
    let prim = |x: f64| c0 * x + f.periodic_antiderivative(x);
    let mut total = 0.0;
    for w in roots.windows(2) {
        total += (prim(w[1]) - prim(w[0])).abs();
    }
    let first = roots[0];
    let last = *roots.last().unwrap();
    total += (prim(first + 1.0) - prim(last)).abs();
    total
}

/// Illinois-modified regula falsi on a bracket `f(lo) f(hi) < 0`.
fn refine_root(f: &SpectralFunction, mut lo: f64, mut hi: f64, f_lo: f64, f_hi: f64, noise: f64) -> f64 {
    let (mut fl, mut fh) = (f_lo, f_hi);
    let mut side = 0i8;
    for _ in 0..100 {
        let x = (lo * fh - hi * fl) / (fh - fl);
        if !(x > lo && x < hi) || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        let fx = f.eval(x);
        if fx.abs() <= noise {
            return x;
        }
        if fx.signum() == fl.signum() {
            lo = x;
            fl = fx;
            if side == -1 {
                fh *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fh = fx;
            if side == 1 {
                fl *= 0.5;
            }
            side = 1;
        }
    }
    if fl.abs() < fh.abs() {
        lo
    } else {
        hi
    }
}
