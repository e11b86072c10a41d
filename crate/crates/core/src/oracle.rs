//! Independent references: Ulam discretization, Monte Carlo trajectories and
//! finite differences of `delta -> h_delta`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use statrs::function::erf::{erfc, erfc_inv};

use crate::diagnostics::{taylor_slope_with_floor, unit_uniform, SlopeFit};
use crate::error::{Error, Result};
use crate::fourier::{self, NoiseKernel, Norm, SpectralFunction};
use crate::maps::{CircleMap, MapFamily};
use crate::par::{self, Exec};
use crate::response::remainder_floor;

/// Points per bin for the deterministic part of the Ulam matrix.
pub const ULAM_SUBSAMPLES: usize = 64;
pub const ULAM_TOL: f64 = 1e-12;
pub const ULAM_MAX_ITER: usize = 100_000;
pub const HISTOGRAM_BINS: usize = 512;
/// Independent trajectory batches; batch `b` uses ChaCha8 stream `b`.
pub const MC_BATCHES: u64 = 16;

/// Piecewise-constant density on `n` equal bins, stored as bin masses.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDensity {
    masses: Vec<f64>,
}

impl BinnedDensity {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidInput("no bins".into()));
        }
        Ok(Self { masses })
    }

    /// Exact bin integrals of a spectral function.
    pub fn from_spectral(f: &SpectralFunction, n_bins: usize) -> Self {
        let w = 1.0 / n_bins as f64;
        let masses = (0..n_bins).map(|i| f.integrate(i as f64 * w, (i + 1) as f64 * w)).collect();
        Self { masses }
    }

    pub fn n_bins(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Density value on each bin.
    pub fn values(&self) -> Vec<f64> {
        let n = self.n_bins() as f64;
        self.masses.iter().map(|m| m * n).collect()
    }

    /// Merges groups of adjacent bins; `n_bins` must divide the current count.
    pub fn coarsen(&self, n_bins: usize) -> Result<Self> {
        if n_bins == 0 || !self.n_bins().is_multiple_of(n_bins) {
            return Err(Error::InvalidInput(format!(
                "cannot resample {} bins onto {n_bins}",
                self.n_bins()
            )));
        }
        let r = self.n_bins() / n_bins;
        Ok(Self {
            masses: self.masses.chunks(r).map(|c| c.iter().sum()).collect(),
        })
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n_bins() != other.n_bins() {
            return Err(Error::InvalidInput(format!(
                "bin counts differ: {} vs {}",
                self.n_bins(),
                other.n_bins()
            )));
        }
        Ok(())
    }

    /// L1 distance between the two step functions.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum())
    }

    /// Sup distance between the two step functions.
    pub fn max_distance(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        let n = self.n_bins() as f64;
        Ok(self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs() * n).fold(0.0, f64::max))
    }
}

/// Row-stochastic Ulam matrix `U = A G`: `A` carries the map (sub-sampled),
/// `G` is the circulant bin-to-bin noise matrix (identity without noise).
#[derive(Debug, Clone)]
pub struct UlamMatrix {
    n_bins: usize,
    map_rows: Vec<Vec<(usize, f64)>>,
    noise_row: Option<Vec<f64>>,
}

impl UlamMatrix {
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Row `i` of `G` is the first row shifted by `i`.
    pub fn noise_row(&self) -> Option<&[f64]> {
        self.noise_row.as_deref()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let n = self.n_bins;
        let mut out = vec![0.0; n];
        for &(l, w) in &self.map_rows[i] {
            match &self.noise_row {
                None => out[l] += w,
                Some(g) => {
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += w * g[(j + n - l) % n];
                    }
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_bins;
        DMatrix::from_fn(n, n, |i, j| self.row(i)[j])
    }

    /// `max_i |sum_j U_ij - 1|`.
    pub fn row_sum_defect(&self) -> f64 {
        let g_sum: f64 = self.noise_row.as_ref().map_or(1.0, |g| g.iter().sum());
        self.map_rows
            .iter()
            .map(|r| (r.iter().map(|(_, w)| w).sum::<f64>() * g_sum - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Standard normal cdf.
fn phi_cdf(t: f64) -> f64 {
    0.5 * erfc(-t * FRAC_1_SQRT_2)
}

fn phi_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// `Psi(u) - max(u, 0)` where `Psi(u) = int_{-inf}^u Phi(s / xi) ds`; even in `u`.
fn psi_excess(u: f64, xi: f64) -> f64 {
    let a = -u.abs();
    a * phi_cdf(a / xi) + xi * phi_pdf(a / xi)
}

/// Probability that a point uniform in bin `l` plus Gaussian noise lands in
/// bin `l + d`, periodized.
fn noise_bin_row(kernel: &NoiseKernel, n_bins: usize) -> Vec<f64> {
    let xi = kernel.xi();
    let w = 1.0 / n_bins as f64;
    let cutoff = kernel.wrap_cutoff();
    let mut row: Vec<f64> = (0..n_bins)
        .map(|d| {
            let c0 = d as f64 * w;
            let mut acc = if d == 0 { 1.0 } else { 0.0 };
            for m in (-cutoff - 1)..=cutoff {
                let c = c0 + m as f64;
                acc += (psi_excess(c + w, xi) - 2.0 * psi_excess(c, xi) + psi_excess(c - w, xi)) / w;
            }
            acc.max(0.0)
        })
        .collect();
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
    row
}

pub fn ulam_matrix(fam: &MapFamily, delta: f64, n_bins: usize) -> Result<UlamMatrix> {
    ulam_matrix_with(Exec::default(), fam, delta, n_bins)
}

pub fn ulam_matrix_with(exec: Exec, fam: &MapFamily, delta: f64, n_bins: usize) -> Result<UlamMatrix> {
    if n_bins == 0 {
        return Err(Error::InvalidInput("n_bins must be positive".into()));
    }
    let map = fam.perturbed(delta)?;
    let w = 1.0 / n_bins as f64;
    let weight = 1.0 / ULAM_SUBSAMPLES as f64;
    let map_rows = par::map_range(exec, n_bins, |i| {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for s in 0..ULAM_SUBSAMPLES {
            let x = (i as f64 + (s as f64 + 0.5) * weight) * w;
            let y = map.eval(x).rem_euclid(1.0);
            let j = ((y * n_bins as f64) as usize).min(n_bins - 1);
            match row.iter_mut().find(|(c, _)| *c == j) {
                Some(e) => e.1 += weight,
                None => row.push((j, weight)),
            }
        }
        row.sort_by_key(|e| e.0);
        row
    });
    let noise_row = fam.noise.as_ref().map(|k| noise_bin_row(k, n_bins));
    Ok(UlamMatrix {
        n_bins,
        map_rows,
        noise_row,
    })
}

/// Left fixed vector of an Ulam matrix.
#[derive(Debug, Clone)]
pub struct UlamStationary {
    pub density: BinnedDensity,
    pub iterations: usize,
    /// `||pi U - pi||_1` at exit.
    pub residual: f64,
}

/// Forward and inverse plans plus the spectrum of the noise row.
type CirculantPlan = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>, Vec<Complex64>);

/// `pi -> pi U` with the circulant factor applied by FFT.
struct LeftApply<'a> {
    u: &'a UlamMatrix,
    fft: Option<CirculantPlan>,
}

impl<'a> LeftApply<'a> {
    fn new(u: &'a UlamMatrix) -> Self {
        let fft = u.noise_row.as_ref().map(|g| {
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(u.n_bins);
            let inv = planner.plan_fft_inverse(u.n_bins);
            let mut gh: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fwd.process(&mut gh);
            (fwd, inv, gh)
        });
        Self { u, fft }
    }

    fn apply(&self, pi: &[f64]) -> Vec<f64> {
        let n = self.u.n_bins;
        let mut y = vec![0.0; n];
        for (p, row) in pi.iter().zip(&self.u.map_rows) {
            for &(l, w) in row {
                y[l] += p * w;
            }
        }
        let Some((fwd, inv, gh)) = &self.fft else {
            return y;
        };
        let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        buf.iter_mut().zip(gh).for_each(|(b, g)| *b *= g);
        inv.process(&mut buf);
        buf.iter().map(|z| z.re / n as f64).collect()
    }
}

pub fn ulam_stationary(u: &UlamMatrix) -> Result<UlamStationary> {
    let n = u.n_bins;
    let op = LeftApply::new(u);
    let mut pi = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for it in 0..ULAM_MAX_ITER {
        let mut next = op.apply(&pi);
        next.iter_mut().for_each(|v| *v = v.max(0.0));
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if residual < ULAM_TOL {
            return Ok(UlamStationary {
                density: BinnedDensity::new(pi)?,
                iterations: it + 1,
                residual,
            });
        }
    }
    Err(Error::NoConvergence(format!(
        "Ulam power iteration: residual {residual:e} after {ULAM_MAX_ITER} iterations"
    )))
}

/// Histogram of a simulated trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryEstimate {
    pub histogram: BinnedDensity,
    pub n_steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    /// `1 / sqrt(recorded samples)`.
    pub stderr_proxy: f64,
    /// Set for noiseless runs, which need not be ergodic.
    pub warning: Option<String>,
}

/// Standard normal quantile.
pub fn normal_quantile(u: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * u)
}

/// Simulates `x -> T_delta(x) + xi Z mod 1`. The `n_steps` recorded steps
/// are split over [`MC_BATCHES`] batches, each burning in separately from its
/// own stream. Uniforms are `((r >> 11) + 1/2) 2^-53`, normals their inverse cdf.
pub fn monte_carlo_stationary(
    fam: &MapFamily,
    delta: f64,
    n_steps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<TrajectoryEstimate> {
    monte_carlo_stationary_with(Exec::default(), fam, delta, n_steps, burn_in, seed)
}

pub fn monte_carlo_stationary_with(
    exec: Exec,
    fam: &MapFamily,
    delta: f64,
    n_steps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<TrajectoryEstimate> {
    if n_steps == 0 {
        return Err(Error::InvalidInput("n_steps must be positive".into()));
    }
    let map = fam.perturbed(delta)?;
    let xi = fam.noise.as_ref().map(|k| k.xi());
    let batches: Vec<u64> = (0..MC_BATCHES).collect();
    let counts = par::map_slice(exec, &batches, |&b| {
        let steps = n_steps / MC_BATCHES + u64::from(b < n_steps % MC_BATCHES);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b);
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        let mut x = unit_uniform(&mut rng);
        for t in 0..burn_in + steps {
            let mut y = map.eval(x);
            if let Some(xi) = xi {
                y += xi * normal_quantile(unit_uniform(&mut rng));
            }
            x = y.rem_euclid(1.0);
            if x >= 1.0 {
                x = 0.0;
            }
            if t >= burn_in {
                counts[((x * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
            }
        }
        counts
    });
    let mut total = vec![0u64; HISTOGRAM_BINS];
    for c in &counts {
        total.iter_mut().zip(c).for_each(|(t, v)| *t += v);
    }
    let masses = total.iter().map(|&c| c as f64 / n_steps as f64).collect();
    Ok(TrajectoryEstimate {
        histogram: BinnedDensity::new(masses)?,
        n_steps,
        burn_in,
        seed,
        stderr_proxy: 1.0 / (n_steps as f64).sqrt(),
        warning: xi
            .is_none()
            .then(|| "noiseless simulation: trajectory may not sample the invariant density".to_string()),
    })
}

/// Finite-difference derivatives of `delta -> h_delta`.
#[derive(Debug, Clone)]
pub struct FdResponse {
    /// Centered first difference, Richardson-extrapolated.
    pub h_dot: SpectralFunction,
    /// Centered second difference (the full second derivative), extrapolated likewise.
    pub h_ddot: SpectralFunction,
    /// Positive steps, descending.
    pub deltas: Vec<f64>,
    /// `||h_delta - h0 - delta h_dot||`.
    pub first: Vec<f64>,
    /// `||h_delta - h0 - delta h_dot - delta^2 h_ddot / 2||`.
    pub second: Vec<f64>,
    pub slope_first: SlopeFit,
    pub slope_second: SlopeFit,
    pub warnings: Vec<String>,
}

/// `solve(delta)` must return `h_delta`; it is called at `0` and `+-delta`.
pub fn finite_difference_response<F>(solve: F, deltas: &[f64], norm: Norm) -> Result<FdResponse>
where
    F: Fn(f64) -> Result<SpectralFunction> + Sync,
{
    finite_difference_response_with(Exec::default(), solve, deltas, norm)
}

pub fn finite_difference_response_with<F>(exec: Exec, solve: F, deltas: &[f64], norm: Norm) -> Result<FdResponse>
where
    F: Fn(f64) -> Result<SpectralFunction> + Sync,
{
    let mut ds: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
    ds.sort_by(|a, b| b.total_cmp(a));
    ds.dedup();
    if ds.len() < 4 || ds.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidInput(
            "finite differences need at least 4 distinct nonzero steps".into(),
        ));
    }
    let mut points = vec![0.0];
    for &d in &ds {
        points.push(d);
        points.push(-d);
    }
    let hs = par::map_slice(exec, &points, |&d| solve(d))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let h0 = &hs[0];
    let first_diffs: Vec<SpectralFunction> = (0..ds.len())
        .map(|i| (&hs[1 + 2 * i] - &hs[2 + 2 * i]).scale(0.5 / ds[i]))
        .collect();
    let second_diffs: Vec<SpectralFunction> = (0..ds.len())
        .map(|i| (&(&hs[1 + 2 * i] + &hs[2 + 2 * i]) - &h0.scale(2.0)).scale(1.0 / (ds[i] * ds[i])))
        .collect();
    let k = ds.len() - 1;
    let richardson = |v: &[SpectralFunction]| {
        let (a, b) = (ds[k] * ds[k], ds[k - 1] * ds[k - 1]);
        (&v[k].scale(b) - &v[k - 1].scale(a)).scale(1.0 / (b - a))
    };
    let h_dot = richardson(&first_diffs);
    let h_ddot = richardson(&second_diffs);

    let mut first = Vec::new();
    let mut second = Vec::new();
    for (i, &d) in ds.iter().enumerate() {
        let r1 = &(&hs[1 + 2 * i] - h0) - &h_dot.scale(d);
        let r2 = &r1 - &h_ddot.scale(0.5 * d * d);
        first.push(fourier::norm(&r1, norm));
        second.push(fourier::norm(&r2, norm));
    }
    let floor = remainder_floor(h0);
    let mut warnings = Vec::new();
    for (label, r) in [("first", &first), ("second", &second)] {
        let bad = r.windows(2).any(|w| w[1] > w[0] && w[1] > floor);
        if bad {
            warnings.push(format!(
                "{label}-order remainder is not monotone in delta (under-resolved or below round-off)"
            ));
        }
    }
    let pts = |v: &[f64]| ds.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    Ok(FdResponse {
        h_dot,
        h_ddot,
        slope_first: taylor_slope_with_floor(&pts(&first), floor)?,
        slope_second: taylor_slope_with_floor(&pts(&second), floor)?,
        deltas: ds,
        first,
        second,
        warnings,
    })
}

/// One row of a density comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub pair: String,
    pub l1: f64,
    pub max: f64,
    pub l1_tolerance: f64,
    pub pass: bool,
}

/// Pairwise distances after coarsening each density to `n_bins`.
pub fn compare_densities(
    items: &[(&str, &BinnedDensity)],
    tolerances: &[((&str, &str), f64)],
    n_bins: usize,
) -> Result<Vec<Comparison>> {
    let coarse = items
        .iter()
        .map(|(name, d)| Ok((*name, d.coarsen(n_bins)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for i in 0..coarse.len() {
        for j in i + 1..coarse.len() {
            let (a, da) = &coarse[i];
            let (b, db) = &coarse[j];
            let tol = tolerances
                .iter()
                .find(|((x, y), _)| (x == a && y == b) || (x == b && y == a))
                .map_or(f64::INFINITY, |t| t.1);
            let l1 = da.l1_distance(db)?;
            out.push(Comparison {
                pair: format!("{a} vs {b}"),
                l1,
                max: da.max_distance(db)?,
                l1_tolerance: tol,
                pass: l1 < tol,
            });
        }
    }
    Ok(out)
}

/// Writes `bin_left,bin_right,mass` with the seed as a leading comment.
pub fn write_histogram_csv<W: std::io::Write>(mut w: W, h: &BinnedDensity, seed: Option<u64>) -> std::io::Result<()> {
    match seed {
        Some(s) => writeln!(w, "# seed={s}")?,
        None => writeln!(w, "# seed=none")?,
    }
    writeln!(w, "bin_left,bin_right,mass")?;
    let n = h.n_bins() as f64;
    for (i, m) in h.masses().iter().enumerate() {
        writeln!(w, "{:.16e},{:.16e},{:.16e}", i as f64 / n, (i + 1) as f64 / n, m)?;
    }
    Ok(())
}
