//! Fourier-Galerkin matrices of transfer operators.
//!
//! The matrix of `L_{T_delta}` in the basis `e_k(x) = exp(2 pi i k x)` is
//! obtained from Koopman duality, `<L e_k, e_j> = int e_k(x) conj(e_j(T_delta x)) dx`,
//! evaluated by an `M`-point trapezoidal rule. The annealed operator
//! multiplies row `j` by the Gaussian multiplier of mode `j`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fourier::SpectralFunction;
use crate::maps::{check_expansion, CircleMap, MapFamily};
use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Deterministic,
    Annealed,
}

/// Dense `(2N+1) x (2N+1)` operator on Fourier coefficient vectors.
///
/// Row and column `k + N` correspond to mode `k`.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    entries: DMatrix<Complex64>,
    order: usize,
    kind: OperatorKind,
    markov_defect: f64,
}

impl OperatorMatrix {
    pub fn from_entries(entries: DMatrix<Complex64>, kind: OperatorKind) -> Result<Self> {
        let dim = entries.nrows();
        if dim != entries.ncols() || dim.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "operator must be square with odd dimension, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let mut op = Self {
            entries,
            order: dim / 2,
            kind,
            markov_defect: 0.0,
        };
        op.markov_defect = markov_defect(&op);
        Ok(op)
    }

    pub fn identity(order: usize) -> Self {
        let dim = 2 * order + 1;
        Self::from_entries(DMatrix::identity(dim, dim), OperatorKind::Deterministic).unwrap()
    }

    /// The rank-one operator `f -> (int f) 1`.
    pub fn projection_onto_constants(order: usize) -> Self {
        let dim = 2 * order + 1;
        let mut m = DMatrix::zeros(dim, dim);
        m[(order, order)] = Complex64::new(1.0, 0.0);
        Self::from_entries(m, OperatorKind::Annealed).unwrap()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        2 * self.order + 1
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Entry mapping input mode `k` to output mode `j`.
    pub fn entry(&self, j: i64, k: i64) -> Complex64 {
        let n = self.order as i64;
        self.entries[((j + n) as usize, (k + n) as usize)]
    }

    /// Mass-conservation defect measured at assembly.
    pub fn markov_defect(&self) -> f64 {
        self.markov_defect
    }

    /// Largest `|entry(-j,-k) - conj(entry(j,k))|`.
    pub fn reality_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let mirrored = self.entries[(d - 1 - r, d - 1 - c)];
                worst = worst.max((mirrored - self.entries[(r, c)].conj()).norm());
            }
        }
        worst
    }
}

fn check_quadrature(order: usize, quad: usize) -> Result<()> {
    if quad < 4 * order || quad == 0 {
        return Err(Error::Aliasing {
            grid: quad,
            order,
            needed: 4 * order,
        });
    }
    Ok(())
}

/// `M`-point quadrature matrix of the transfer operator of `map`, with no
/// expansion requirement.
///
/// No resolution check is made here; the `build_*` constructors require
/// `M >= 4N`. Under-resolved assemblies show up in [`markov_defect`].
pub fn assemble(map: &dyn CircleMap, order: usize, quad: usize, exec: Exec) -> Result<DMatrix<Complex64>> {
    if quad == 0 {
        return Err(Error::InvalidInput("quadrature size must be positive".into()));
    }
    let images: Vec<f64> = (0..quad)
        .map(|m| map.eval(m as f64 / quad as f64).rem_euclid(1.0))
        .collect();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(quad);
    let n = order as i64;
    let inv = 1.0 / quad as f64;

    // rows j >= 0; negative rows follow by conjugation
    let rows: Vec<Vec<Complex64>> = par::map_range(exec, order + 1, |j| {
        let mut buf: Vec<Complex64> = images
            .iter()
            .map(|&y| {
                let t = (j as f64 * y).rem_euclid(1.0);
                Complex64::from_polar(1.0, -2.0 * PI * t)
            })
            .collect();
        ifft.process(&mut buf);
        (-n..=n)
            .map(|k| buf[k.rem_euclid(quad as i64) as usize] * inv)
            .collect()
    });

    let dim = 2 * order + 1;
    let mut m = DMatrix::zeros(dim, dim);
    for (j, row) in rows.iter().enumerate().skip(1) {
        for (c, &v) in row.iter().enumerate() {
            m[(order + j, c)] = v;
            m[(order - j, dim - 1 - c)] = v.conj();
        }
    }
    // row 0 is its own mirror
    for c in 0..dim {
        m[(order, c)] = 0.5 * (rows[0][c] + rows[0][dim - 1 - c].conj());
    }
    Ok(m)
}

/// `L_{T_delta}` for an expanding family.
pub fn build_deterministic(fam: &MapFamily, delta: f64, order: usize, quad: usize) -> Result<OperatorMatrix> {
    build_deterministic_with(Exec::default(), fam, delta, order, quad)
}

pub fn build_deterministic_with(
    exec: Exec,
    fam: &MapFamily,
    delta: f64,
    order: usize,
    quad: usize,
) -> Result<OperatorMatrix> {
    check_quadrature(order, quad)?;
    let map = fam.perturbed(delta)?;
    check_expansion(&map)?;
    OperatorMatrix::from_entries(assemble(&map, order, quad, exec)?, OperatorKind::Deterministic)
}

/// `L_T` of the unperturbed base map, without noise and without any
/// expansion requirement. This is the inner factor of the derivative
/// operators.
pub fn build_base(fam: &MapFamily, order: usize, quad: usize) -> Result<OperatorMatrix> {
    check_quadrature(order, quad)?;
    OperatorMatrix::from_entries(
        assemble(fam.base.as_ref(), order, quad, Exec::default())?,
        OperatorKind::Deterministic,
    )
}

/// `rho_xi * L_{D_delta o T}`.
pub fn build_annealed(fam: &MapFamily, delta: f64, order: usize, quad: usize) -> Result<OperatorMatrix> {
    build_annealed_with(Exec::default(), fam, delta, order, quad)
}

pub fn build_annealed_with(
    exec: Exec,
    fam: &MapFamily,
    delta: f64,
    order: usize,
    quad: usize,
) -> Result<OperatorMatrix> {
    let kernel = fam
        .noise
        .ok_or_else(|| Error::Config("annealed operator requires a noise kernel".into()))?;
    check_quadrature(order, quad)?;
    let map = fam.perturbed(delta)?;
    let mut m = assemble(&map, order, quad, exec)?;
    let n = order as i64;
    for j in -n..=n {
        let mult = kernel.multiplier(j);
        m.row_mut((j + n) as usize).scale_mut(mult);
    }
    OperatorMatrix::from_entries(m, OperatorKind::Annealed)
}

/// Annealed operator when the family carries noise, deterministic otherwise.
pub fn build_transfer(fam: &MapFamily, delta: f64, order: usize, quad: usize) -> Result<OperatorMatrix> {
    build_transfer_with(Exec::default(), fam, delta, order, quad)
}

pub fn build_transfer_with(
    exec: Exec,
    fam: &MapFamily,
    delta: f64,
    order: usize,
    quad: usize,
) -> Result<OperatorMatrix> {
    if fam.noise.is_some() {
        build_annealed_with(exec, fam, delta, order, quad)
    } else {
        build_deterministic_with(exec, fam, delta, order, quad)
    }
}

pub(crate) fn to_vector(f: &SpectralFunction) -> DVector<Complex64> {
    DVector::from_column_slice(f.coeffs())
}

/// Matrix-vector product.
pub fn apply(op: &OperatorMatrix, f: &SpectralFunction) -> Result<SpectralFunction> {
    if op.order != f.order() {
        return Err(Error::OrderMismatch {
            left: op.order,
            right: f.order(),
        });
    }
    let out = &op.entries * to_vector(f);
    Ok(SpectralFunction::from_computed(out.as_slice().to_vec()))
}

/// `max_k |(L e_k)_0 - [k = 0]|`.
pub fn markov_defect(op: &OperatorMatrix) -> f64 {
    let n = op.order;
    (0..op.dim())
        .map(|c| {
            let expected = if c == n { 1.0 } else { 0.0 };
            (op.entries[(n, c)] - Complex64::new(expected, 0.0)).norm()
        })
        .fold(0.0, f64::max)
}
