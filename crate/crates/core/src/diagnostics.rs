//! Empirical checks of the hypotheses behind the response formulas:
//! mixing rates, kernel lower bounds, Lasota-Yorke constants and
//! power-law fits of Taylor remainders.
//!
//! Every estimate here is evidence gathered on a finite test set and a
//! finite grid. None of them is a bound on a true operator norm.

use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fourier::{self, norm, NoiseKernel, Norm, SpectralFunction};
use crate::maps::{check_expansion, MapFamily};
use crate::par::{self, Exec};
use crate::response::Discretization;
use crate::transfer::{apply, build_deterministic, OperatorMatrix};

/// Size of the random test set.
pub const TEST_SET_SIZE: usize = 32;
/// Seed of the random test set.
pub const TEST_SET_SEED: u64 = 0x5eed_7e57;

const KERNEL_GRID: usize = 512;

pub(crate) fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Mean-zero functions with coefficients uniform in `[-1, 1]^2 / k^2`.
pub fn test_set(order: usize, count: usize, seed: u64) -> Vec<SpectralFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut f = SpectralFunction::zero(order);
            for k in 1..=order {
                let re = 2.0 * unit_uniform(&mut rng) - 1.0;
                let im = 2.0 * unit_uniform(&mut rng) - 1.0;
                f.add_mode(k, Complex64::new(re, im) / (k * k) as f64);
            }
            f
        })
        .collect()
}

/// Proxies `a_n` for `||L0^n g||_weak <= a_n ||g||_strong` on mean-zero `g`.
#[derive(Debug, Clone)]
pub struct MixingEstimate {
    /// `rates[n - 1] = a_n`.
    pub rates: Vec<f64>,
    pub strong: Norm,
    pub weak: Norm,
    pub test_set_size: usize,
}

impl MixingEstimate {
    /// Least-squares fit `a_n ~ C rho^n` over the entries above `floor`.
    pub fn geometric_fit(&self, floor: f64) -> (f64, f64) {
        let pts: Vec<(f64, f64)> = self
            .rates
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > floor)
            .map(|(i, &a)| ((i + 1) as f64, a.ln()))
            .collect();
        if pts.len() < 2 {
            let c = pts.first().map_or(0.0, |p| p.1.exp());
            return (c, 0.0);
        }
        let (slope, intercept, _) = least_squares(&pts);
        (intercept.exp(), slope.exp())
    }

    /// Smallest `n` whose predicted Neumann tail `scale sum_{i > n} C rho^i`
    /// falls below `target`; `None` if the fit does not contract.
    pub fn terms_for_tail(&self, scale: f64, target: f64, max_terms: usize) -> Option<usize> {
        let (c, rho) = self.geometric_fit(1e-15);
        if rho.is_nan() || rho >= 1.0 {
            return None;
        }
        if c * scale == 0.0 || rho == 0.0 {
            return Some(1);
        }
        (1..=max_terms).find(|&n| scale * c * rho.powi(n as i32) / (1.0 - rho) < target)
    }
}

pub fn mixing_rate(l0: &OperatorMatrix, n_max: usize, strong: Norm, weak: Norm) -> Result<MixingEstimate> {
    mixing_rate_with(Exec::default(), l0, n_max, strong, weak)
}

pub fn mixing_rate_with(
    exec: Exec,
    l0: &OperatorMatrix,
    n_max: usize,
    strong: Norm,
    weak: Norm,
) -> Result<MixingEstimate> {
    let tests = test_set(l0.order(), TEST_SET_SIZE, TEST_SET_SEED);
    let per_function: Vec<Result<Vec<f64>>> = par::map_slice(exec, &tests, |g| {
        let denom = norm(g, strong);
        let mut f = g.clone();
        let mut ratios = Vec::with_capacity(n_max);
        for _ in 0..n_max {
            f = apply(l0, &f)?;
            ratios.push(norm(&f, weak) / denom);
        }
        Ok(ratios)
    });
    let mut rates = vec![0.0f64; n_max];
    for r in per_function {
        for (a, v) in rates.iter_mut().zip(r?) {
            *a = a.max(v);
        }
    }
    Ok(MixingEstimate {
        rates,
        strong,
        weak,
        test_set_size: tests.len(),
    })
}

/// Lower bound `l` of the annealed kernel `k(x, y) = rho~(x - T_delta y)`.
#[derive(Debug, Clone)]
pub struct KernelBound {
    pub l: f64,
    pub grid: usize,
    pub warning: Option<String>,
}

/// Since `y -> T_delta(y)` only moves the argument, the kernel is bounded
/// below by the global minimum of the periodized Gaussian, attained at 1/2.
pub fn kernel_lower_bound(fam: &MapFamily, delta: f64) -> Result<KernelBound> {
    let kernel = fam
        .noise
        .ok_or_else(|| Error::NotApplicable("kernel lower bound needs a noise kernel".into()))?;
    fam.perturbation.check_delta(delta)?;
    Ok(kernel_bound_of(&kernel))
}

pub fn kernel_bound_of(kernel: &NoiseKernel) -> KernelBound {
    let l = (0..KERNEL_GRID)
        .map(|j| kernel.periodized(j as f64 / KERNEL_GRID as f64, 0))
        .chain(std::iter::once(kernel.periodized(0.5, 0)))
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let warning = (l < 1e-12).then(|| {
        format!(
            "noise width {} gives a kernel lower bound of {l:.3e}; the L1 contraction is degenerate",
            kernel.xi()
        )
    });
    KernelBound {
        l,
        grid: KERNEL_GRID,
        warning,
    }
}

/// `||rho~||_{C^k}` measured on the fine grid from the real-space sum.
pub fn kernel_ck_norm(kernel: &NoiseKernel, k: u32) -> f64 {
    let m = fourier::fine_grid_size(0).max(4096);
    (0..=k)
        .map(|i| {
            (0..m)
                .map(|j| kernel.periodized(j as f64 / m as f64, i).abs())
                .fold(0.0, f64::max)
        })
        .sum()
}

/// Constant `C` in `||L0^n g||_weak <= C (1 - l)^{n - 1} ||g||_{L^1}`: the
/// kernel's norm in `weak`, or 1 for `L^1` itself.
pub fn envelope_constant(kernel: &NoiseKernel, weak: Norm) -> f64 {
    match weak {
        Norm::L1 => 1.0,
        Norm::Ck(j) | Norm::Wk1(j) => kernel_ck_norm(kernel, j),
    }
}

/// `C (1 - l)^{n - 1}` for `n = 1..=n_max`.
pub fn contraction_envelope(constant: f64, l: f64, n_max: usize) -> Vec<f64> {
    (1..=n_max).map(|n| constant * (1.0 - l).powi(n as i32 - 1)).collect()
}

/// Lasota-Yorke constants for
/// `||L^n f||_{W^{k,1}} <= alpha^{kn} ||f||_{W^{k,1}} + B ||f||_{W^{k-1,1}}`.
#[derive(Debug, Clone)]
pub struct LYEstimate {
    pub k: u32,
    pub alpha: f64,
    /// `alpha^k`.
    pub alpha_k: f64,
    pub b_k: f64,
    pub n_max: usize,
    pub test_set_size: usize,
}

pub fn lasota_yorke_constants(
    fam: &MapFamily,
    delta: f64,
    k: u32,
    n_max: usize,
    disc: Discretization,
) -> Result<LYEstimate> {
    if k == 0 {
        return Err(Error::InvalidInput("Lasota-Yorke order must be at least 1".into()));
    }
    let map = fam.perturbed(delta)?;
    let alpha = check_expansion(&map)?;
    let op = build_deterministic(fam, delta, disc.order, disc.quad)?;
    let alpha_k = alpha.powi(k as i32);
    let mut tests = test_set(disc.order, TEST_SET_SIZE, TEST_SET_SEED);
    tests.push(SpectralFunction::constant(disc.order, 1.0));
    let per_function: Vec<Result<f64>> = par::map_slice(Exec::default(), &tests, |f| {
        let strong0 = norm(f, Norm::Wk1(k));
        let weak0 = norm(f, Norm::Wk1(k - 1));
        let mut g = f.clone();
        let mut worst: f64 = 0.0;
        for n in 1..=n_max {
            g = apply(&op, &g)?;
            let excess = norm(&g, Norm::Wk1(k)) - alpha_k.powi(n as i32) * strong0;
            worst = worst.max(excess / weak0);
        }
        Ok(worst)
    });
    let mut b_k: f64 = 0.0;
    for b in per_function {
        b_k = b_k.max(b?);
    }
    Ok(LYEstimate {
        k,
        alpha,
        alpha_k,
        b_k,
        n_max,
        test_set_size: tests.len(),
    })
}

/// Least-squares exponent of `norm ~ c delta^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    /// Fitted exponent; `+inf` when fewer than two points lie above the floor.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log regression.
    pub residual: f64,
    /// Indices of points at or below the round-off floor.
    pub excluded: Vec<usize>,
}

impl SlopeFit {
    pub fn below_floor(&self) -> bool {
        self.slope.is_infinite()
    }
}

/// Fits the exponent, excluding nonpositive norms.
pub fn taylor_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    taylor_slope_with_floor(points, 0.0)
}

/// Fits the exponent, excluding norms at or below `floor`.
pub fn taylor_slope_with_floor(points: &[(f64, f64)], floor: f64) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(d, _)| !(d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidInput("slope fit needs positive step sizes".into()));
    }
    let mut excluded = Vec::new();
    let mut logs = Vec::new();
    for (i, &(d, v)) in points.iter().enumerate() {
        if v.is_finite() && v > floor {
            logs.push((d.ln(), v.ln()));
        } else {
            excluded.push(i);
        }
    }
    if logs.len() < 2 {
        return Ok(SlopeFit {
            slope: f64::INFINITY,
            intercept: f64::NAN,
            residual: 0.0,
            excluded,
        });
    }
    let (slope, intercept, residual) = least_squares(&logs);
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
        excluded,
    })
}

/// `(slope, intercept, rms residual)` of `y ~ slope x + intercept`.
fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    (slope, intercept, (rss / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{DiffeoFamily, TrigMap, TrigPoly};
    use crate::transfer::build_annealed;
    use std::f64::consts::PI;

    fn doubling() -> MapFamily {
        MapFamily::new(
            TrigMap::doubling(),
            DiffeoFamily::first_order(TrigPoly::sin_mode(1, 1.0), 0.05).unwrap(),
            None,
        )
    }

    #[test]
    fn slopes_of_power_laws() {
        let deltas = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
        for p in [2.0, 3.0] {
            let pts: Vec<_> = deltas.iter().map(|&d| (d, 7.0 * f64::powf(d, p))).collect();
            let fit = taylor_slope(&pts).unwrap();
            assert!((fit.slope - p).abs() < 1e-10);
            assert!(fit.residual < 1e-10);
        }
    }

    #[test]
    fn slope_floor_handling() {
        let pts = [(1e-2, 1e-4), (5e-3, 0.0), (2.5e-3, -1.0), (1e-3, 1e-6)];
        let fit = taylor_slope(&pts).unwrap();
        assert_eq!(fit.excluded, vec![1, 2]);
        assert!((fit.slope - 2.0).abs() < 1e-12);

        let flat = [(1e-2, 1e-17), (5e-3, 2e-17), (2.5e-3, 0.0)];
        let fit = taylor_slope_with_floor(&flat, 1e-13).unwrap();
        assert!(fit.below_floor());
        assert!(taylor_slope(&flat[..2]).is_err());
    }

    #[test]
    fn projection_mixes_instantly() {
        let op = OperatorMatrix::projection_onto_constants(8);
        let est = mixing_rate(&op, 5, Norm::Ck(1), Norm::Ck(0)).unwrap();
        assert!(est.rates.iter().all(|&a| a == 0.0));
        assert_eq!(est.test_set_size, TEST_SET_SIZE);
    }

    #[test]
    fn doubling_mixing_decays_geometrically() {
        let op = build_deterministic(&doubling(), 0.0, 32, 256).unwrap();
        let est = mixing_rate(&op, 8, Norm::Wk1(2), Norm::Wk1(1)).unwrap();
        // mode halving: L^n g keeps only the modes 2^n k of g, so a_n 2^n stays bounded
        let scaled: Vec<f64> = est.rates.iter().enumerate().map(|(i, a)| a * 2f64.powi(i as i32 + 1)).collect();
        for s in &scaled[..5] {
            assert!(*s <= 4.0 * scaled[0], "{scaled:?}");
        }
        // all modes are gone after log2(N) + 1 steps
        assert!(est.rates[7] < 1e-14);
    }

    #[test]
    fn kernel_bound_values() {
        let kernel = NoiseKernel::new(0.1).unwrap();
        let bound = kernel_bound_of(&kernel);
        let half = (-3..=3)
            .map(|m| {
                let z: f64 = 0.5 + m as f64;
                (-z * z / 0.02).exp() / ((2.0 * PI).sqrt() * 0.1)
            })
            .sum::<f64>();
        assert!((bound.l - half).abs() < 1e-15);
        assert!(bound.l > 0.0 && bound.warning.is_none());

        let narrow = kernel_bound_of(&NoiseKernel::new(0.01).unwrap());
        assert!(narrow.l < 1e-12 && narrow.warning.is_some());

        let wide = kernel_bound_of(&NoiseKernel::new(2.0).unwrap());
        assert!(wide.l < 1.0 && wide.l > 1.0 - 1e-12);

        assert!(kernel_lower_bound(&doubling(), 0.0).is_err());
    }

    #[test]
    fn annealed_mixing_under_envelope() {
        let fam = MapFamily::new(
            TrigMap::arnold(0.3, 0.8),
            DiffeoFamily::first_order(TrigPoly::constant(1.0), 0.05).unwrap(),
            Some(NoiseKernel::new(0.1).unwrap()),
        );
        let op = build_annealed(&fam, 0.0, 32, 256).unwrap();
        let est = mixing_rate(&op, 10, Norm::Ck(1), Norm::Ck(0)).unwrap();
        let l = kernel_lower_bound(&fam, 0.0).unwrap().l;
        let c = kernel_ck_norm(&fam.noise.unwrap(), 0);
        let env = contraction_envelope(c, l, 10);
        for (a, e) in est.rates.iter().zip(&env) {
            assert!(a <= e);
        }
    }

    #[test]
    fn doubling_lasota_yorke() {
        let fam = doubling();
        let disc = Discretization::new(32, 256);
        let a = lasota_yorke_constants(&fam, 0.0, 1, 4, disc).unwrap();
        let b = lasota_yorke_constants(&fam, 0.0, 1, 10, disc).unwrap();
        assert_eq!(a.alpha, 0.5);
        assert!(b.b_k.is_finite() && b.b_k <= 1.0 + 1e-9);
        assert!(b.b_k >= a.b_k);
        // B_1 approaches 1 - 2^{-n_max} from below
        assert!(b.b_k - a.b_k < 0.1);

        let p = lasota_yorke_constants(&fam, 0.01, 1, 4, disc).unwrap();
        assert!((p.alpha - 1.0 / (2.0 - 0.04 * PI)).abs() < 1e-9);
    }
}
