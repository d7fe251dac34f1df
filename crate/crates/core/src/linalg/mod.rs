//! Toleranced dense complex linear algebra.
//!
//! All deciders in this crate reduce to rank decisions on small dense
//! complex matrices. This module fixes one convention for those
//! decisions: every rank-like question is answered through a singular
//! value decomposition with the cutoff
//!
//! ```text
//! sigma_i  >  max(abs, rel * sigma_max)
//! ```
//!
//! so that downstream verdicts (invariant-subspace closures, stabilizer
//! dimensions, Jacobian nullities) inherit a single, documented
//! tolerance model instead of ad-hoc epsilons.
//!
//! Matrices are `nalgebra` dynamic matrices over `Complex<f64>`. The
//! serialization helpers in [`mat_io`] expose them in a row-major
//! `{rows, cols, re, im}` JSON shape.

mod subspace;

pub use subspace::Subspace;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense dynamically-sized complex matrix.
pub type CMat = DMatrix<Complex64>;
/// Dense dynamically-sized real matrix.
pub type RMat = DMatrix<f64>;

/// Relative/absolute cutoff pair for rank decisions.
///
/// The effective singular-value cutoff is `max(abs, rel * sigma_max)`;
/// singular values strictly above it count toward the rank.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Cutoff relative to the largest singular value.
    pub rel: f64,
    /// Absolute cutoff floor.
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-9, abs: 0.0 }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Result<Self> {
        if !rel.is_finite() || !abs.is_finite() || rel < 0.0 || abs < 0.0 {
            return Err(Error::Config(format!(
                "tolerance components must be finite and non-negative, got rel={rel}, abs={abs}"
            )));
        }
        if rel == 0.0 && abs == 0.0 {
            return Err(Error::Config(
                "tolerance must have a positive rel or abs component".into(),
            ));
        }
        Ok(Tolerance { rel, abs })
    }

    /// Singular-value cutoff for a spectrum whose largest value is `sigma_max`.
    pub fn cutoff(&self, sigma_max: f64) -> f64 {
        self.abs.max(self.rel * sigma_max)
    }
}

/// Complex entry shorthand.
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `[a, b] = a b - b a`.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Hermitian part `(m + m^*) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).map(|z| z * 0.5)
}

/// True when every entry is finite in both components.
pub fn entries_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Frobenius norm.
pub fn fro(m: &CMat) -> f64 {
    m.norm()
}

/// Sorted-descending singular values of `m` (empty input gives an empty list).
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Number of singular values above the tolerance cutoff.
pub fn numeric_rank(m: &CMat, tol: Tolerance) -> usize {
    let s = singular_values(m);
    let Some(&smax) = s.first() else { return 0 };
    let cut = tol.cutoff(smax);
    s.iter().filter(|&&x| x > cut).count()
}

/// Rank of a real matrix under the same cutoff convention.
pub fn real_rank(m: &RMat, tol: Tolerance) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let smax = s[0];
    let cut = tol.cutoff(smax);
    s.iter().filter(|&&x| x > cut).count()
}

/// Orthonormal basis of the column span, as matrix columns.
///
/// Returns an `nrows x rank` matrix with orthonormal columns; the zero
/// matrix yields zero columns.
pub fn orth_basis(m: &CMat, tol: Tolerance) -> CMat {
    let rows = m.nrows();
    if rows == 0 || m.ncols() == 0 {
        return CMat::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cut = tol.cutoff(smax);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > cut).collect();
    let mut out = CMat::zeros(rows, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

/// Orthonormal basis of the kernel `{x : m x = 0}`, as matrix columns.
///
/// A wide matrix is padded with zero rows first so the decomposition
/// carries a complete right singular basis.
pub fn nullspace_basis(m: &CMat, tol: Tolerance) -> CMat {
    let (rows, cols) = (m.nrows(), m.ncols());
    if cols == 0 {
        return CMat::zeros(0, 0);
    }
    if rows == 0 {
        return CMat::identity(cols, cols);
    }
    let work = if rows < cols {
        let mut padded = CMat::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = work.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cut = tol.cutoff(smax);
    let keep: Vec<usize> = (0..v_t.nrows())
        .filter(|&i| s.get(i).is_none_or(|&x| x <= cut))
        .collect();
    let mut out = CMat::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &v_t.row(i).adjoint());
    }
    out
}

/// Kernel of `m` as a [`Subspace`] of the column-index space.
pub fn nullspace(m: &CMat, tol: Tolerance) -> Subspace {
    Subspace::from_orthonormal(nullspace_basis(m, tol))
}

/// Moore-Penrose pseudo-inverse with the shared cutoff convention.
pub fn pseudo_inverse(m: &CMat, tol: Tolerance) -> CMat {
    let (rows, cols) = (m.nrows(), m.ncols());
    if rows == 0 || cols == 0 {
        return CMat::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u");
    let v_t = svd.v_t.expect("v_t");
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cut = tol.cutoff(smax);
    let mut sinv = CMat::zeros(v_t.nrows(), u.ncols());
    for i in 0..s.len() {
        if s[i] > cut {
            sinv[(i, i)] = c(1.0 / s[i], 0.0);
        }
    }
    v_t.adjoint() * sinv * u.adjoint()
}

/// Matrix exponential of a Hermitian matrix via its eigendecomposition.
///
/// The input must be Hermitian within `1e-12 * (1 + ||h||)`; the result
/// is Hermitian positive definite and satisfies
/// `hermitian_exp(h) * hermitian_exp(-h) = 1` to machine accuracy.
pub fn hermitian_exp(h: &CMat) -> Result<CMat> {
    if h.nrows() != h.ncols() {
        return Err(Error::Shape(format!(
            "hermitian_exp needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let defect = fro(&(h - h.adjoint()));
    if defect > 1e-12 * (1.0 + fro(h)) {
        return Err(Error::Precondition(format!(
            "hermitian_exp input deviates from Hermitian by {defect:.3e}"
        )));
    }
    if h.nrows() == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let eig = hermitian_part(h).symmetric_eigen();
    let q = &eig.eigenvectors;
    let mut lam = CMat::zeros(h.nrows(), h.nrows());
    for i in 0..h.nrows() {
        lam[(i, i)] = c(eig.eigenvalues[i].exp(), 0.0);
    }
    Ok(q * lam * q.adjoint())
}

/// Eigenvalues of a square complex matrix, through the real Schur form
/// of its realification.
///
/// The `2n x 2n` real matrix `[[X, -Y], [Y, X]]` of `m = X + iY` has
/// spectrum `{lambda, conj(lambda)}` over the spectrum of `m`, so the
/// returned list contains every eigenvalue of `m` (each possibly
/// accompanied by its spurious conjugate). Callers that need exact
/// multiplicities should test candidates against `m` directly; the
/// deciders here only use the values to seed kernel computations.
pub fn eigenvalue_candidates(m: &CMat) -> Vec<Complex64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "square matrix required");
    if n == 0 {
        return Vec::new();
    }
    let mut real = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            real[(i, j)] = z.re;
            real[(i, j + n)] = -z.im;
            real[(i + n, j)] = z.im;
            real[(i + n, j + n)] = z.re;
        }
    }
    let eigs = real.complex_eigenvalues();
    let scale = fro(m).max(1.0);
    let mut out: Vec<Complex64> = Vec::new();
    for lam in eigs.iter() {
        if !out.iter().any(|seen| (seen - lam).norm() <= 1e-8 * scale) {
            out.push(*lam);
        }
    }
    out
}

/// JSON adapter for [`CMat`] fields: row-major `{rows, cols, re, im}`.
pub mod mat_io {
    use super::{entries_finite, CMat};
    use num_complex::Complex64;
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        re: Vec<f64>,
        im: Vec<f64>,
    }

    pub fn to_repr(m: &CMat) -> impl Serialize {
        let mut re = Vec::with_capacity(m.len());
        let mut im = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Repr { rows: m.nrows(), cols: m.ncols(), re, im }
    }

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        to_repr(m).serialize(s)
    }

    fn from_repr<E: DeError>(r: Repr) -> Result<CMat, E> {
        if r.re.len() != r.rows * r.cols || r.im.len() != r.rows * r.cols {
            return Err(E::custom(format!(
                "matrix payload length {}/{} does not match {}x{}",
                r.re.len(),
                r.im.len(),
                r.rows,
                r.cols
            )));
        }
        let m = CMat::from_fn(r.rows, r.cols, |i, j| {
            Complex64::new(r.re[i * r.cols + j], r.im[i * r.cols + j])
        });
        if !entries_finite(&m) {
            return Err(E::custom("matrix entries must be finite"));
        }
        Ok(m)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    /// Adapter for `Vec<CMat>` fields, one `{rows, cols, re, im}` per entry.
    pub mod vec {
        use super::{from_repr, to_repr, CMat, Repr};
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(to_repr).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
        }
    }
}
