//! Stationary densities, the resolvent on zero-mean functions, the
//! derivative operators and the linear and quadratic response formulas.
//!
//! For `T_delta = D_delta o T` with `D_delta = Id + delta S1 + (delta^2/2) S2`:
//!
//! * `R f = -(f S1)'` and `Q f = (f S1^2)'' - (f S2)'`;
//! * `Ldot = R o L_T` (deterministic) or `rho * R o L_T` (annealed);
//! * the second-order term of `L_delta h0` in `delta` is `(1/2) Q L_T h0`
//!   (convolved with the kernel in the annealed case);
//! * `hdot = (I - L0)^{-1} Ldot h0`;
//! * `qr = (I - L0)^{-1} [ (1/2) Q L_T h0 + Ldot hdot ]` is the `delta^2`
//!   coefficient of `h_delta`, and `d^2 h / d delta^2 = 2 qr`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::diagnostics::{taylor_slope_with_floor, SlopeFit};
use crate::error::{Error, Result};
use crate::fourier::{self, convolve_gaussian, differentiate, multiply, Norm, SpectralFunction};
use crate::maps::MapFamily;
use crate::par::{self, Exec};
use crate::transfer::{self, apply, build_base, build_transfer_with, OperatorMatrix};

/// Mass-conservation tolerance required before solving.
pub const MARKOV_TOL: f64 = 1e-10;
/// Largest accepted `||L h - h||_{L^1}`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Grid minimum below which a density is reported as negative.
pub const NEGATIVITY_TOL: f64 = -1e-8;
/// Largest accepted `|mean(g)|` for a resolvent input.
pub const MEAN_ZERO_TOL: f64 = 1e-11;

const POWER_ITERATION_MAX: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    PowerIteration,
}

/// Fixed point `L h = h` normalised to `int h = 1`.
#[derive(Debug, Clone)]
pub struct StationarySolve {
    pub h: SpectralFunction,
    /// `||L h - h||_{L^1}`.
    pub residual: f64,
    pub method: SolveMethod,
    /// Minimum of `h` on the fine grid.
    pub grid_min: f64,
}

fn coefficient_l1_bound(f: &SpectralFunction) -> f64 {
    f.coeffs().iter().map(|c| c.norm()).sum()
}

/// Solves `(I - L) h = 0` with the mode-0 row replaced by `c_0 = 1`; falls
/// back to power iteration from the constant density when the bordered
/// system is singular or its residual is too large.
pub fn stationary_density(op: &OperatorMatrix) -> Result<StationarySolve> {
    if op.markov_defect() > MARKOV_TOL {
        return Err(Error::NoConvergence(format!(
            "operator violates mass conservation (defect {:.3e} > {MARKOV_TOL:e})",
            op.markov_defect()
        )));
    }
    let n = op.order();
    let dim = op.dim();
    let mut a = DMatrix::<Complex64>::identity(dim, dim) - op.entries();
    for c in 0..dim {
        a[(n, c)] = Complex64::new(if c == n { 1.0 } else { 0.0 }, 0.0);
    }
    let mut rhs = DVector::<Complex64>::zeros(dim);
    rhs[n] = Complex64::new(1.0, 0.0);

    let direct = a
        .lu()
        .solve(&rhs)
        .filter(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .map(|v| normalise(SpectralFunction::from_computed(v.as_slice().to_vec())));

    let (h, method) = match direct {
        Some(h) if residual(op, &h)? < RESIDUAL_TOL => (h, SolveMethod::Direct),
        _ => (power_iteration(op)?, SolveMethod::PowerIteration),
    };
    let res = residual(op, &h)?;
    if res >= RESIDUAL_TOL {
        return Err(Error::NoConvergence(format!(
            "stationary residual {res:.3e} above {RESIDUAL_TOL:e} after direct and power iteration"
        )));
    }
    let grid_min = fourier::to_grid(&h, fourier::fine_grid_size(n))?.min();
    if grid_min < NEGATIVITY_TOL {
        return Err(Error::NegativeDensity(grid_min));
    }
    Ok(StationarySolve {
        h,
        residual: res,
        method,
        grid_min,
    })
}

fn normalise(h: SpectralFunction) -> SpectralFunction {
    let mean = h.mean();
    let mut out = h.scale(1.0 / mean);
    // c_0 = 1 exactly
    out = &out + &SpectralFunction::constant(out.order(), 1.0 - out.mean());
    out
}

fn residual(op: &OperatorMatrix, h: &SpectralFunction) -> Result<f64> {
    Ok(fourier::norm(&(&apply(op, h)? - h), Norm::L1))
}

fn power_iteration(op: &OperatorMatrix) -> Result<SpectralFunction> {
    let mut h = SpectralFunction::constant(op.order(), 1.0);
    for _ in 0..POWER_ITERATION_MAX {
        let next = normalise(apply(op, &h)?);
        let step = coefficient_l1_bound(&(&next - &h));
        h = next;
        if step < 0.1 * RESIDUAL_TOL {
            return Ok(h);
        }
    }
    Err(Error::NoConvergence(format!(
        "power iteration did not settle in {POWER_ITERATION_MAX} steps"
    )))
}

/// Factorised `(I - L0)` on the nonzero modes.
///
/// Since `L0` conserves mass, row 0 of `(I - L0) v` vanishes for
/// mean-zero `v` and the nonzero-mode block decouples.
#[derive(Debug, Clone)]
pub struct Resolvent {
    op: OperatorMatrix,
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Output of a resolvent solve with its verification residual.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub value: SpectralFunction,
    /// `||(I - L0) v - g||_{L^1}`.
    pub residual: f64,
}

impl Resolvent {
    pub fn new(op: &OperatorMatrix) -> Result<Self> {
        let n = op.order();
        let dim = op.dim();
        let full = DMatrix::<Complex64>::identity(dim, dim) - op.entries();
        let keep: Vec<usize> = (0..dim).filter(|&i| i != n).collect();
        let block = DMatrix::from_fn(dim - 1, dim - 1, |r, c| full[(keep[r], keep[c])]);
        let lu = block.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular(
                "I - L0 is singular on the zero-mean subspace (eigenvalue 1 is not simple)".into(),
            ));
        }
        Ok(Self { op: op.clone(), lu })
    }

    pub fn operator(&self) -> &OperatorMatrix {
        &self.op
    }

    /// `v` with mean 0 and `(I - L0) v = g`.
    pub fn solve(&self, g: &SpectralFunction) -> Result<Resolved> {
        let n = self.op.order();
        if g.order() != n {
            return Err(Error::OrderMismatch {
                left: n,
                right: g.order(),
            });
        }
        if g.mean().abs() > MEAN_ZERO_TOL * g.max_abs_coeff().max(1.0) {
            return Err(Error::NonzeroMean(g.mean()));
        }
        let rhs = DVector::from_iterator(
            2 * n,
            g.coeffs()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != n)
                .map(|(_, c)| *c),
        );
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("resolvent block solve failed".into()))?;
        let mut coeffs = Vec::with_capacity(2 * n + 1);
        coeffs.extend_from_slice(&sol.as_slice()[..n]);
        coeffs.push(Complex64::new(0.0, 0.0));
        coeffs.extend_from_slice(&sol.as_slice()[n..]);
        let value = SpectralFunction::from_computed(coeffs);
        let back = &value - &apply(&self.op, &value)?;
        let residual = fourier::norm(&(&back - &g.without_mean()), Norm::L1);
        Ok(Resolved { value, residual })
    }
}

/// `(I - L0)^{-1} g` for mean-zero `g`.
pub fn resolve(l0: &OperatorMatrix, g: &SpectralFunction) -> Result<SpectralFunction> {
    Ok(Resolvent::new(l0)?.solve(g)?.value)
}

/// `sum_{i=0}^{terms-1} L0^i g`, along with the norm of the last term.
#[derive(Debug, Clone)]
pub struct NeumannSum {
    pub value: SpectralFunction,
    pub terms: usize,
    /// Coefficient-sum bound on the last added term.
    pub last_term: f64,
}

pub fn neumann_partial_sum(l0: &OperatorMatrix, g: &SpectralFunction, terms: usize) -> Result<NeumannSum> {
    let mut sum = SpectralFunction::zero(g.order());
    let mut term = g.clone();
    let mut last_term = coefficient_l1_bound(g);
    for i in 0..terms {
        sum = &sum + &term;
        last_term = coefficient_l1_bound(&term);
        if i + 1 < terms {
            term = apply(l0, &term)?;
        }
    }
    Ok(NeumannSum {
        value: sum,
        terms,
        last_term,
    })
}

/// `R f = -(f S1)'` applied to `L_T f`, convolved when the family is noisy.
///
/// Accepts any input, not only the stationary density, so that it can be
/// applied to the linear response in the quadratic formula.
pub fn ldot_apply(fam: &MapFamily, base: &OperatorMatrix, f: &SpectralFunction) -> Result<SpectralFunction> {
    let g = apply(base, f)?;
    let n = g.order();
    let s1 = fam.perturbation.s1.to_spectral(n);
    let r = -&differentiate(&multiply(&g, &s1), 1);
    Ok(match &fam.noise {
        Some(kernel) => convolve_gaussian(&r, kernel),
        None => r,
    })
}

pub fn ldot_h0(fam: &MapFamily, base: &OperatorMatrix, h0: &SpectralFunction) -> Result<SpectralFunction> {
    ldot_apply(fam, base, h0)
}

/// `Q L_T f = (g S1^2)'' - (g S2)'` with `g = L_T f`, convolved when noisy.
///
/// This is the full second-derivative operator; the `delta^2` coefficient
/// of `L_delta f` is half of it.
pub fn lddot_apply(fam: &MapFamily, base: &OperatorMatrix, f: &SpectralFunction) -> Result<SpectralFunction> {
    let g = apply(base, f)?;
    let n = g.order();
    let s1 = fam.perturbation.s1.to_spectral(n);
    let s1_sq = multiply(&s1, &s1);
    let mut q = differentiate(&multiply(&g, &s1_sq), 2);
    if !fam.perturbation.s2.is_zero() {
        let s2 = fam.perturbation.s2.to_spectral(n);
        q = &q - &differentiate(&multiply(&g, &s2), 1);
    }
    Ok(match &fam.noise {
        Some(kernel) => convolve_gaussian(&q, kernel),
        None => q,
    })
}

pub fn lddot_h0(fam: &MapFamily, base: &OperatorMatrix, h0: &SpectralFunction) -> Result<SpectralFunction> {
    lddot_apply(fam, base, h0)
}

/// `hdot = (I - L0)^{-1} Ldot h0`.
pub fn linear_response(
    resolvent: &Resolvent,
    fam: &MapFamily,
    base: &OperatorMatrix,
    h0: &SpectralFunction,
) -> Result<Resolved> {
    resolvent.solve(&ldot_h0(fam, base, h0)?)
}

/// Second-order response as `(qr_limit, h_ddot)` with `h_ddot = 2 qr_limit`.
pub fn quadratic_response(
    resolvent: &Resolvent,
    fam: &MapFamily,
    base: &OperatorMatrix,
    h0: &SpectralFunction,
    h_dot: &SpectralFunction,
) -> Result<(Resolved, SpectralFunction)> {
    let second = lddot_h0(fam, base, h0)?.scale(0.5);
    let cross = ldot_apply(fam, base, h_dot)?;
    let qr = resolvent.solve(&(&second + &cross))?;
    let h_ddot = qr.value.scale(2.0);
    Ok((qr, h_ddot))
}

/// `d/d delta int phi h_delta = int phi hdot`.
pub fn observable_response(phi: &SpectralFunction, h_dot: &SpectralFunction) -> Result<f64> {
    if h_dot.mean().abs() > MEAN_ZERO_TOL * h_dot.max_abs_coeff().max(1.0) {
        return Err(Error::NonzeroMean(h_dot.mean()));
    }
    let n = phi.order().max(h_dot.order()) as i64;
    // Parseval: int phi psi = sum_k phi_k psi_{-k}
    let total: Complex64 = (-n..=n).map(|k| phi.coeff(k) * h_dot.coeff(-k)).sum();
    Ok(total.re)
}

/// Taylor remainders at a set of positive `delta`.
#[derive(Debug, Clone)]
pub struct RemainderStudy {
    pub norm: Norm,
    pub deltas: Vec<f64>,
    /// `||h_delta - h0 - delta hdot||`.
    pub first: Vec<f64>,
    /// `||h_delta - h0 - delta hdot - delta^2 qr||`.
    pub second: Vec<f64>,
    pub slope_first: SlopeFit,
    pub slope_second: SlopeFit,
}

/// Smallest remainder treated as signal rather than roundoff.
pub fn remainder_floor(h0: &SpectralFunction) -> f64 {
    1e-13 * h0.max_abs_coeff().max(1.0)
}

pub fn taylor_remainders(
    h0: &SpectralFunction,
    h_dot: &SpectralFunction,
    qr_limit: &SpectralFunction,
    perturbed: &[(f64, SpectralFunction)],
    norm: Norm,
) -> Result<RemainderStudy> {
    let mut deltas = Vec::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (delta, h) in perturbed {
        let r1 = &(h - h0) - &h_dot.scale(*delta);
        let r2 = &r1 - &qr_limit.scale(delta * delta);
        deltas.push(*delta);
        first.push(fourier::norm(&r1, norm));
        second.push(fourier::norm(&r2, norm));
    }
    let floor = remainder_floor(h0);
    let pts = |v: &[f64]| deltas.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    let slope_first = taylor_slope_with_floor(&pts(&first), floor)?;
    let slope_second = taylor_slope_with_floor(&pts(&second), floor)?;
    Ok(RemainderStudy {
        norm,
        deltas,
        first,
        second,
        slope_first,
        slope_second,
    })
}

/// Numerical resolution of a response computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    /// Fourier truncation order `N`.
    pub order: usize,
    /// Quadrature size `M` for operator assembly.
    pub quad: usize,
}

impl Discretization {
    pub fn new(order: usize, quad: usize) -> Self {
        Self { order, quad }
    }

    /// `M = 8N`.
    pub fn with_order(order: usize) -> Self {
        Self { order, quad: 8 * order }
    }
}

/// Everything a response computation produces.
#[derive(Debug, Clone)]
pub struct ResponseReport {
    pub h0: StationarySolve,
    /// Linear response, mean 0.
    pub h_dot: SpectralFunction,
    /// `d^2 h / d delta^2`, mean 0.
    pub h_ddot: SpectralFunction,
    /// `delta^2` Taylor coefficient, `h_ddot / 2`.
    pub qr_limit: SpectralFunction,
    pub diagnostics: ResponseDiagnostics,
}

#[derive(Debug, Clone, Default)]
pub struct ResponseDiagnostics {
    pub linear_resolvent_residual: f64,
    pub quadratic_resolvent_residual: f64,
    pub markov_defect: f64,
    pub remainders: Option<RemainderStudy>,
    /// `(label, deviation)` pairs against independent oracles.
    pub oracle_deviations: Vec<(String, f64)>,
    /// Hypotheses the computation relies on but does not verify.
    pub unchecked: Vec<String>,
}

/// Bundles the unperturbed operators of a family at a fixed resolution.
#[derive(Debug, Clone)]
pub struct ResponseSolver {
    family: MapFamily,
    disc: Discretization,
    l0: OperatorMatrix,
    base: OperatorMatrix,
    resolvent: Resolvent,
}

impl ResponseSolver {
    pub fn new(family: MapFamily, disc: Discretization) -> Result<Self> {
        let l0 = build_transfer_with(Exec::default(), &family, 0.0, disc.order, disc.quad)?;
        let base = if family.noise.is_some() {
            build_base(&family, disc.order, disc.quad)?
        } else {
            l0.clone()
        };
        let resolvent = Resolvent::new(&l0)?;
        Ok(Self {
            family,
            disc,
            l0,
            base,
            resolvent,
        })
    }

    pub fn family(&self) -> &MapFamily {
        &self.family
    }

    pub fn discretization(&self) -> Discretization {
        self.disc
    }

    pub fn l0(&self) -> &OperatorMatrix {
        &self.l0
    }

    /// `L_T` of the base map (equal to `L0` without noise).
    pub fn base(&self) -> &OperatorMatrix {
        &self.base
    }

    pub fn resolvent(&self) -> &Resolvent {
        &self.resolvent
    }

    /// `L_delta` at the solver's resolution.
    pub fn operator_at(&self, delta: f64) -> Result<OperatorMatrix> {
        transfer::build_transfer(&self.family, delta, self.disc.order, self.disc.quad)
    }

    pub fn stationary_at(&self, delta: f64) -> Result<StationarySolve> {
        stationary_density(&self.operator_at(delta)?)
    }

    /// Stationary densities for each delta, computed in parallel.
    pub fn stationary_sweep(&self, deltas: &[f64]) -> Result<Vec<SpectralFunction>> {
        self.stationary_sweep_with(Exec::default(), deltas)
    }

    pub fn stationary_sweep_with(&self, exec: Exec, deltas: &[f64]) -> Result<Vec<SpectralFunction>> {
        par::map_slice(exec, deltas, |&d| {
            let op = build_transfer_with(Exec::Sequential, &self.family, d, self.disc.order, self.disc.quad)?;
            Ok(stationary_density(&op)?.h)
        })
        .into_iter()
        .collect()
    }

    /// `h0`, `hdot`, `qr_limit` and `h_ddot`.
    pub fn respond(&self) -> Result<ResponseReport> {
        let h0 = stationary_density(&self.l0)?;
        let lin = linear_response(&self.resolvent, &self.family, &self.base, &h0.h)?;
        let (qr, h_ddot) = quadratic_response(&self.resolvent, &self.family, &self.base, &h0.h, &lin.value)?;
        let mut unchecked = vec![
            "smoothness class of T and D_delta (C^4 / C^5) is assumed, not verified".to_string(),
        ];
        if self.family.noise.is_none() {
            unchecked.push("expansion and diffeomorphism checks are grid evidence, not certificates".to_string());
        }
        Ok(ResponseReport {
            diagnostics: ResponseDiagnostics {
                linear_resolvent_residual: lin.residual,
                quadratic_resolvent_residual: qr.residual,
                markov_defect: self.l0.markov_defect(),
                unchecked,
                ..Default::default()
            },
            h0,
            h_dot: lin.value,
            h_ddot,
            qr_limit: qr.value,
        })
    }

    /// Remainders at positive deltas, measured in `norm`.
    pub fn remainders(&self, report: &ResponseReport, deltas: &[f64], norm: Norm) -> Result<RemainderStudy> {
        let hs = self.stationary_sweep(deltas)?;
        let pairs: Vec<(f64, SpectralFunction)> = deltas.iter().copied().zip(hs).collect();
        taylor_remainders(&report.h0.h, &report.h_dot, &report.qr_limit, &pairs, norm)
    }
}
