//! Small complex Hermitian matrices and the covariance accumulators the
//! beamformers are built on.
//!
//! Everything here is sized for per-bin spatial covariance work: matrix
//! dimension equals the channel count (a handful), while the number of
//! accumulated frames can be large. Covariances are accumulated as plain
//! sums of outer products `y y^H`, without a 1/L normalization; the
//! beamformer weight formulas are invariant to that scale.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// Dense Hermitian matrix with exact conjugate symmetry.
///
/// The constructors and accumulation paths write the upper triangle and
/// mirror it, so `a[i][j] == conj(a[j][i])` holds bitwise and diagonal
/// entries have an imaginary part of exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Build from full row-major entries, verifying that the input is
    /// Hermitian to within a small tolerance and then snapping it to exact
    /// conjugate symmetry.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::EmptyInput("matrix has no rows"));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("matrix is not square".into()));
        }
        let scale: f64 = rows
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
            .max(1e-300);
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let upper = rows[i][j];
                let mirrored = rows[j][i].conj();
                if (upper - mirrored).norm() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "entries ({i},{j}) and ({j},{i}) are not conjugate-symmetric"
                    )));
                }
                let v = if i == j {
                    Complex64::new(upper.re, 0.0)
                } else {
                    0.5 * (upper + mirrored)
                };
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v.conj();
            }
        }
        Ok(m)
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    /// Sum of the (real) diagonal.
    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    /// Real quadratic form `w^H A w`. For Hermitian `A` the imaginary part
    /// vanishes; only the real part is returned.
    pub fn quadratic_form(&self, w: &[Complex64]) -> f64 {
        debug_assert_eq!(w.len(), self.dim);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.dim {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..self.dim {
                row += self.get(i, j) * w[j];
            }
            acc += w[i].conj() * row;
        }
        acc.re
    }

    /// Accumulate `weight * y y^H` into the upper triangle. Callers must
    /// finish with [`Self::mirror_upper`] to restore full storage.
    fn add_scaled_outer_upper(&mut self, y: &[Complex64], weight: f64) {
        debug_assert_eq!(y.len(), self.dim);
        for i in 0..self.dim {
            let yi = y[i];
            // Diagonal first, kept real by construction.
            let d = &mut self.data[i * self.dim + i];
            d.re += weight * yi.norm_sqr();
            for j in i + 1..self.dim {
                self.data[i * self.dim + j] += weight * yi * y[j].conj();
            }
        }
    }

    /// Copy the upper triangle onto the lower as exact conjugates.
    fn mirror_upper(&mut self) {
        for i in 0..self.dim {
            self.data[i * self.dim + i].im = 0.0;
            for j in i + 1..self.dim {
                self.data[j * self.dim + i] = self.data[i * self.dim + j].conj();
            }
        }
    }

    /// Entrywise scaling by a real factor (keeps Hermitian symmetry).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// `self + loading * I`.
    pub fn loaded(&self, loading: f64) -> Self {
        let mut m = self.clone();
        for i in 0..m.dim {
            m.data[i * m.dim + i].re += loading;
        }
        m
    }

    /// Positive semidefiniteness check with a relative eigenvalue slack:
    /// accepts when all eigenvalues are at least `-rel_tol * trace`.
    /// Implemented as a Cholesky probe of `A + (rel_tol * trace) I`, which
    /// succeeds exactly when the shifted matrix is positive definite.
    pub fn is_psd_within(&self, rel_tol: f64) -> bool {
        let shift = rel_tol * self.trace().abs() + f64::MIN_POSITIVE;
        self.loaded(shift).to_nalgebra().cholesky().is_some()
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<Complex<f64>> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }
}

/// A per-frame weighted covariance along with the parameters that shaped
/// its weights, kept for downstream reporting and reproducibility.
#[derive(Clone, Debug)]
pub struct WeightedCovariance {
    pub matrix: HermitianMatrix,
    pub frame_count: usize,
    pub shape_p: f64,
    pub floor_delta: f64,
}

fn validate_frames(frames: &[Vec<Complex64>]) -> Result<usize> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames to accumulate"));
    }
    let dim = frames[0].len();
    if dim == 0 {
        return Err(Error::EmptyInput("frames have zero channels"));
    }
    for (l, f) in frames.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "frame {l} has {} channels, frame 0 has {dim}",
                f.len()
            )));
        }
    }
    Ok(dim)
}

/// Unweighted sample covariance `sum_l y_l y_l^H` (no 1/L factor).
pub fn sample_covariance(frames: &[Vec<Complex64>]) -> Result<HermitianMatrix> {
    let dim = validate_frames(frames)?;
    let mut m = HermitianMatrix::zeros(dim);
    for y in frames {
        m.add_scaled_outer_upper(y, 1.0);
    }
    m.mirror_upper();
    Ok(m)
}

/// Per-frame weighted covariance
/// `sum_l y_l y_l^H / max(lambda_l, delta)^(1 - p/2)`.
///
/// `lambda_l` is the current speech-power estimate for frame `l` and
/// `delta` floors it *before* exponentiation, so noise-only frames enter
/// with the fixed weight `delta^(p/2 - 1)`. At `p = 2` every weight is
/// exactly 1 and the result matches [`sample_covariance`] bitwise; at
/// `p = 0` the weight is the plain inverse power `1 / max(lambda, delta)`.
pub fn weighted_covariance(
    frames: &[Vec<Complex64>],
    lambdas: &[f64],
    shape_p: f64,
    floor_delta: f64,
) -> Result<WeightedCovariance> {
    let dim = validate_frames(frames)?;
    if lambdas.len() != frames.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} lambdas for {} frames",
            lambdas.len(),
            frames.len()
        )));
    }
    if !(0.0..=2.0).contains(&shape_p) {
        return Err(Error::InvalidParameter(format!(
            "shape parameter p must lie in [0, 2], got {shape_p}"
        )));
    }
    if !(floor_delta >= 0.0 && floor_delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "floor delta must be finite and non-negative, got {floor_delta}"
        )));
    }
    if let Some(l) = lambdas.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "lambda for frame {l} must be finite and non-negative, got {}",
            lambdas[l]
        )));
    }

    let exponent = shape_p / 2.0 - 1.0;
    let mut m = HermitianMatrix::zeros(dim);
    for (y, &lambda) in frames.iter().zip(lambdas) {
        let floored = lambda.max(floor_delta);
        let weight = if shape_p == 2.0 {
            1.0
        } else {
            if floored == 0.0 {
                return Err(Error::NumericGuard(
                    "zero power estimate with zero floor delta and p < 2".into(),
                ));
            }
            floored.powf(exponent)
        };
        m.add_scaled_outer_upper(y, weight);
    }
    m.mirror_upper();
    Ok(WeightedCovariance {
        matrix: m,
        frame_count: frames.len(),
        shape_p,
        floor_delta,
    })
}

/// Solve `(A + loading * (trace(A)/dim) I) x = rhs` through a Hermitian
/// Cholesky factorization; no explicit inverse is formed.
///
/// `loading` is relative: the absolute ridge scales with the mean
/// diagonal entry, so solutions are invariant to a common rescaling of
/// `A` and the data behind it.
pub fn solve_regularized(
    matrix: &HermitianMatrix,
    rhs: &[Complex64],
    loading: f64,
) -> Result<Vec<Complex64>> {
    if rhs.len() != matrix.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has {} entries for a {}x{} matrix",
            rhs.len(),
            matrix.dim(),
            matrix.dim()
        )));
    }
    if !(loading >= 0.0 && loading.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "loading must be finite and non-negative, got {loading}"
        )));
    }
    let ridge = loading * matrix.trace() / matrix.dim() as f64;
    let loaded = matrix.loaded(ridge).to_nalgebra();
    let chol = loaded
        .cholesky()
        .ok_or(Error::SingularMatrix { bin: None })?;
    let x = chol.solve(&DVector::from_column_slice(rhs));
    Ok(x.iter().copied().collect())
}
