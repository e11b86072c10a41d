//! Circle maps and their one-parameter perturbation families.
//!
//! Maps are handled on the lift: `T: R -> R` with `T(x + 1) = T(x) + degree`.
//! A family is `T_delta = D_delta o T` with
//! `D_delta(y) = y + delta S1(y) + (delta^2 / 2) S2(y)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{NoiseKernel, SpectralFunction};

/// Grid used for expansion and admissibility checks.
pub const CHECK_GRID: usize = 4096;

/// A real trigonometric polynomial
/// `c + sum_k (a_k cos 2 pi k x + b_k sin 2 pi k x)`, `k >= 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrigPoly {
    pub constant: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    /// `amp * sin(2 pi k x)`.
    pub fn sin_mode(k: usize, amp: f64) -> Self {
        let mut sin = vec![0.0; k];
        sin[k - 1] = amp;
        Self {
            sin,
            ..Self::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    pub fn degree(&self) -> usize {
        let last = |v: &[f64]| v.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
        last(&self.cos).max(last(&self.sin))
    }

    /// `n`-th derivative at `x` (`n = 0` is the value).
    pub fn deriv(&self, x: f64, n: u32) -> f64 {
        let mut acc = if n == 0 { self.constant } else { 0.0 };
        let len = self.cos.len().max(self.sin.len());
        for i in 0..len {
            let k = (i + 1) as f64;
            let w = 2.0 * PI * k;
            let a = self.cos.get(i).copied().unwrap_or(0.0);
            let b = self.sin.get(i).copied().unwrap_or(0.0);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let (s, c) = (w * x).sin_cos();
            let scale = w.powi(n as i32);
            // derivatives of cos/sin cycle with period 4
            let (dc, ds) = match n % 4 {
                0 => (c, s),
                1 => (-s, c),
                2 => (-c, -s),
                _ => (s, -c),
            };
            acc += scale * (a * dc + b * ds);
        }
        acc
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.deriv(x, 0)
    }

    /// Exact spectral representation (modes above `order` are dropped).
    pub fn to_spectral(&self, order: usize) -> SpectralFunction {
        let mut f = SpectralFunction::constant(order, self.constant);
        let len = self.cos.len().max(self.sin.len());
        for i in 0..len {
            let a = self.cos.get(i).copied().unwrap_or(0.0);
            let b = self.sin.get(i).copied().unwrap_or(0.0);
            f.add_mode(i + 1, Complex64::new(0.5 * a, -0.5 * b));
        }
        f
    }
}

impl fmt::Display for TrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms = Vec::new();
        if self.constant != 0.0 {
            terms.push(format!("{}", self.constant));
        }
        for (i, &a) in self.cos.iter().enumerate() {
            if a != 0.0 {
                terms.push(format!("{a}*cos(2pi*{}x)", i + 1));
            }
        }
        for (i, &b) in self.sin.iter().enumerate() {
            if b != 0.0 {
                terms.push(format!("{b}*sin(2pi*{}x)", i + 1));
            }
        }
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

/// A map of the circle given on its lift, with analytic derivatives.
pub trait CircleMap: Send + Sync + fmt::Debug {
    /// Lift value `T(x)`; callers reduce mod 1.
    fn eval(&self, x: f64) -> f64;
    /// `n`-th derivative for `n` in `1..=3`.
    fn deriv(&self, x: f64, n: u32) -> f64;
    /// Topological degree: `T(x + 1) = T(x) + degree`.
    fn degree(&self) -> i64;
}

/// `T(x) = degree * x + shift + p(x)` with `p` a trigonometric polynomial.
///
/// Covers the doubling map (`2x`), the Arnold family
/// (`x + a + eps sin 2 pi x`) and custom coefficient lists.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigMap {
    pub degree: i64,
    pub shift: f64,
    pub periodic: TrigPoly,
}

impl TrigMap {
    pub fn doubling() -> Self {
        Self {
            degree: 2,
            shift: 0.0,
            periodic: TrigPoly::zero(),
        }
    }

    pub fn arnold(a: f64, eps: f64) -> Self {
        Self {
            degree: 1,
            shift: a,
            periodic: TrigPoly::sin_mode(1, eps),
        }
    }

    pub fn identity() -> Self {
        Self {
            degree: 1,
            shift: 0.0,
            periodic: TrigPoly::zero(),
        }
    }
}

impl CircleMap for TrigMap {
    fn eval(&self, x: f64) -> f64 {
        self.degree as f64 * x + self.shift + self.periodic.eval(x)
    }

    fn deriv(&self, x: f64, n: u32) -> f64 {
        let linear = if n == 1 { self.degree as f64 } else { 0.0 };
        linear + self.periodic.deriv(x, n)
    }

    fn degree(&self) -> i64 {
        self.degree
    }
}

/// Perturbation profiles `S1`, `S2` of `D_delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffeoFamily {
    pub s1: TrigPoly,
    pub s2: TrigPoly,
    pub delta_max: f64,
}

impl DiffeoFamily {
    /// Validates that `D_delta` stays an orientation-preserving
    /// diffeomorphism for every `|delta| <= delta_max` on the check grid.
    pub fn new(s1: TrigPoly, s2: TrigPoly, delta_max: f64) -> Result<Self> {
        if !(delta_max.is_finite() && delta_max >= 0.0) {
            return Err(Error::Config(format!("delta_max must be finite and >= 0, got {delta_max}")));
        }
        let fam = Self { s1, s2, delta_max };
        if let Some(delta) = fam.worst_fold() {
            return Err(Error::NotDiffeomorphism { delta });
        }
        Ok(fam)
    }

    /// `S2 = 0` family.
    pub fn first_order(s1: TrigPoly, delta_max: f64) -> Result<Self> {
        Self::new(s1, TrigPoly::zero(), delta_max)
    }

    /// Returns a delta at which `D_delta'` fails to be positive somewhere.
    fn worst_fold(&self) -> Option<f64> {
        let dm = self.delta_max;
        for j in 0..CHECK_GRID {
            let x = j as f64 / CHECK_GRID as f64;
            let a = self.s1.deriv(x, 1);
            let b = 0.5 * self.s2.deriv(x, 1);
            // minimise 1 + delta a + delta^2 b over [-dm, dm]
            let mut candidates = vec![-dm, dm];
            if b > 0.0 {
                let vertex = -a / (2.0 * b);
                if vertex.abs() <= dm {
                    candidates.push(vertex);
                }
            }
            for d in candidates {
                if 1.0 + d * a + d * d * b <= 0.0 {
                    return Some(d);
                }
            }
        }
        None
    }

    pub fn check_delta(&self, delta: f64) -> Result<()> {
        if !delta.is_finite() || delta.abs() > self.delta_max {
            return Err(Error::Inadmissible {
                delta,
                delta_max: self.delta_max,
            });
        }
        Ok(())
    }

    /// `D_delta(y)` on the lift.
    pub fn apply(&self, delta: f64, y: f64) -> f64 {
        y + delta * self.s1.eval(y) + 0.5 * delta * delta * self.s2.eval(y)
    }

    /// `n`-th derivative of `D_delta` at `y`.
    pub fn deriv(&self, delta: f64, y: f64, n: u32) -> f64 {
        let id = if n == 1 { 1.0 } else { 0.0 };
        id + delta * self.s1.deriv(y, n) + 0.5 * delta * delta * self.s2.deriv(y, n)
    }
}

/// Base map, perturbation profile and optional additive noise.
#[derive(Debug, Clone)]
pub struct MapFamily {
    pub base: Arc<dyn CircleMap>,
    pub perturbation: DiffeoFamily,
    pub noise: Option<NoiseKernel>,
}

impl MapFamily {
    pub fn new(base: impl CircleMap + 'static, perturbation: DiffeoFamily, noise: Option<NoiseKernel>) -> Self {
        Self {
            base: Arc::new(base),
            perturbation,
            noise,
        }
    }

    /// `T_delta = D_delta o T` as a map in its own right.
    pub fn perturbed(&self, delta: f64) -> Result<PerturbedMap<'_>> {
        self.perturbation.check_delta(delta)?;
        Ok(PerturbedMap { family: self, delta })
    }
}

/// The composed map `D_delta o T`.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedMap<'a> {
    family: &'a MapFamily,
    delta: f64,
}

impl PerturbedMap<'_> {
    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl CircleMap for PerturbedMap<'_> {
    fn eval(&self, x: f64) -> f64 {
        let y = self.family.base.eval(x);
        if self.delta == 0.0 {
            return y;
        }
        self.family.perturbation.apply(self.delta, y)
    }

    fn deriv(&self, x: f64, n: u32) -> f64 {
        let t = &self.family.base;
        let d = &self.family.perturbation;
        let y = t.eval(x);
        let t1 = t.deriv(x, 1);
        let d1 = d.deriv(self.delta, y, 1);
        match n {
            1 => d1 * t1,
            2 => d.deriv(self.delta, y, 2) * t1 * t1 + d1 * t.deriv(x, 2),
            3 => {
                let t2 = t.deriv(x, 2);
                d.deriv(self.delta, y, 3) * t1.powi(3)
                    + 3.0 * d.deriv(self.delta, y, 2) * t1 * t2
                    + d1 * t.deriv(x, 3)
            }
            _ => panic!("derivative order {n} not supported"),
        }
    }

    fn degree(&self) -> i64 {
        self.family.base.degree()
    }
}

/// `D_delta(T(x)) mod 1`.
pub fn evaluate_perturbed(fam: &MapFamily, delta: f64, x: f64) -> Result<f64> {
    Ok(fam.perturbed(delta)?.eval(x).rem_euclid(1.0))
}

/// Minimum of `|T'|` over the check grid.
pub fn min_abs_deriv(map: &dyn CircleMap) -> f64 {
    (0..CHECK_GRID)
        .map(|j| map.deriv(j as f64 / CHECK_GRID as f64, 1).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Contraction factor `alpha = 1 / min |T'|`, required to lie in `(0, 1)`.
pub fn alpha_from_min_deriv(min_deriv: f64) -> Result<f64> {
    let alpha = 1.0 / min_deriv;
    if !(alpha.is_finite() && alpha < 1.0) {
        return Err(Error::NotExpanding { min_deriv, alpha });
    }
    Ok(alpha)
}

/// Grid estimate of the expansion constant. Evidence, not a certificate.
pub fn check_expansion(map: &dyn CircleMap) -> Result<f64> {
    alpha_from_min_deriv(min_abs_deriv(map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn doubling_family() -> MapFamily {
        MapFamily::new(
            TrigMap::doubling(),
            DiffeoFamily::first_order(TrigPoly::sin_mode(1, 1.0), 0.05).unwrap(),
            None,
        )
    }

    #[test]
    fn unperturbed_is_base_map() {
        let fam = doubling_family();
        for &x in &[0.0, 0.1, 0.37, 0.8] {
            assert_eq!(evaluate_perturbed(&fam, 0.0, x).unwrap(), (2.0 * x).rem_euclid(1.0));
        }
    }

    #[test]
    fn doubling_perturbation_value() {
        let fam = doubling_family();
        let got = evaluate_perturbed(&fam, 0.01, 0.1).unwrap();
        let expected = (0.2 + 0.01 * (0.4 * PI).sin()).rem_euclid(1.0);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
    }

    #[test]
    fn doubling_identity_with_classical_form() {
        let fam = doubling_family();
        for j in 0..200 {
            let x = j as f64 / 200.0;
            let lhs = evaluate_perturbed(&fam, 0.02, x).unwrap();
            let rhs = (2.0 * x + 0.02 * (4.0 * PI * x).sin()).rem_euclid(1.0);
            let d = (lhs - rhs).abs();
            assert!(d.min(1.0 - d) < 1e-15, "x = {x}");
        }
    }

    #[test]
    fn arnold_rotation() {
        let fam = MapFamily::new(
            TrigMap::arnold(0.3, 0.8),
            DiffeoFamily::first_order(TrigPoly::constant(1.0), 0.1).unwrap(),
            Some(NoiseKernel::new(0.1).unwrap()),
        );
        for &x in &[0.05, 0.5, 0.93] {
            let t = 0.3 + x + 0.8 * (2.0 * PI * x).sin();
            assert_abs_diff_eq!(
                evaluate_perturbed(&fam, 0.02, x).unwrap(),
                (t + 0.02).rem_euclid(1.0),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn delta_out_of_range() {
        let fam = doubling_family();
        assert!(matches!(
            evaluate_perturbed(&fam, 0.06, 0.1),
            Err(Error::Inadmissible { .. })
        ));
    }

    #[test]
    fn expansion_constants() {
        assert_abs_diff_eq!(check_expansion(&TrigMap::doubling()).unwrap(), 0.5, epsilon = 1e-15);

        let fam = doubling_family();
        let alpha = check_expansion(&fam.perturbed(0.01).unwrap()).unwrap();
        // grid minimisation oracle: T_delta' = 2 + 4 pi delta cos 4 pi x, min at a grid point
        let oracle = (0..CHECK_GRID)
            .map(|j| 2.0 + 0.04 * PI * (4.0 * PI * j as f64 / CHECK_GRID as f64).cos())
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(oracle, 2.0 - 0.04 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha, 1.0 / oracle, epsilon = 1e-12);

        assert!(matches!(
            check_expansion(&TrigMap::arnold(0.3, 1.2)),
            Err(Error::NotExpanding { .. })
        ));
    }

    #[test]
    fn alpha_monotone_in_min_deriv() {
        let mut prev = f64::INFINITY;
        for m in [1.1, 1.5, 2.0, 3.0, 10.0] {
            let a = alpha_from_min_deriv(m).unwrap();
            assert!(a <= prev);
            prev = a;
        }
        assert!(alpha_from_min_deriv(1.0).is_err());
    }

    #[test]
    fn composed_derivatives_match_finite_differences() {
        let fam = MapFamily::new(
            TrigMap {
                degree: 3,
                shift: 0.1,
                periodic: TrigPoly {
                    constant: 0.0,
                    cos: vec![0.05],
                    sin: vec![0.0, 0.03],
                },
            },
            DiffeoFamily::new(TrigPoly::sin_mode(1, 1.0), TrigPoly::sin_mode(2, 0.5), 0.1).unwrap(),
            None,
        );
        let map = fam.perturbed(0.07).unwrap();
        let h = 1e-4;
        for &x in &[0.11, 0.42, 0.9] {
            for n in 1..=3u32 {
                let lower = |y: f64| if n == 1 { map.eval(y) } else { map.deriv(y, n - 1) };
                let fd = (lower(x + h) - lower(x - h)) / (2.0 * h);
                let exact = map.deriv(x, n);
                assert!((fd - exact).abs() < 1e-5 * exact.abs().max(1.0), "n={n} x={x}");
            }
        }
        assert_eq!(map.degree(), 3);
    }

    #[test]
    fn folding_family_rejected() {
        // D' = 1 + delta 2 pi cos 2 pi x vanishes once delta >= 1 / (2 pi)
        assert!(DiffeoFamily::first_order(TrigPoly::sin_mode(1, 1.0), 0.2).is_err());
        assert!(DiffeoFamily::first_order(TrigPoly::sin_mode(1, 1.0), 0.15).is_ok());
    }

    #[test]
    fn trig_poly_spectral_matches_eval() {
        let p = TrigPoly {
            constant: 0.3,
            cos: vec![1.0, 0.0, -0.2],
            sin: vec![0.5, 0.25],
        };
        let f = p.to_spectral(8);
        for &x in &[0.0, 0.2, 0.61] {
            assert_abs_diff_eq!(f.eval(x), p.eval(x), epsilon = 1e-14);
        }
        assert_eq!(p.degree(), 3);
    }
}
