//! Quadruple matrix data `(a1, a2, b, c)` for the four-sphere picture.
//!
//! A datum consists of `a1, a2: End(W)` with `dim W = k`, `b: C^r -> W`,
//! and `c: W -> C^r`, subject to the integrability equation
//! `[a1, a2] + b c = 0`. The real moment map
//!
//! ```text
//! mu(m) = [a1, a1*] + [a2, a2*] + b b* - c* c
//! ```
//!
//! is Hermitian; perturbed level sets fix `mu = -zeta * 1`. The unitary
//! (complexified: general linear) group of `W` acts by
//! `g . (a1, a2, b, c) = (g a1 g^-1, g a2 g^-1, g b, c g^-1)`, and `mu`
//! is equivariant: `mu(u . m) = u mu(m) u*` for unitary `u`.
//!
//! Regularity is a pair of invariant-subspace conditions:
//!
//! * no proper subspace `W' < W` with `a_i(W') <= W'` and `im b <= W'`;
//! * no nonzero subspace `W' <= ker c` with `a_i(W') <= W'`.
//!
//! Both are decided exactly by Krylov closures; the second reduces to
//! the first on the adjoint datum `(a1*, a2*, c*, b*)` through
//! orthogonal complements.

use serde::{Deserialize, Serialize};

use crate::check::{CheckResult, Witness};
use crate::error::{Error, Result};
use crate::linalg::{
    c, commutator, entries_finite, fro, hermitian_part, mat_io, real_rank, CMat, RMat, Subspace,
    Tolerance,
};

/// Quadruple `(a1, a2, b, c)` with `a_i: k x k`, `b: k x r`, `c: r x k`.
///
/// `k = 0` (empty `W`) is admitted; it describes the trivial flat datum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdhmDatumS4 {
    pub k: usize,
    pub r: usize,
    #[serde(with = "mat_io")]
    pub a1: CMat,
    #[serde(with = "mat_io")]
    pub a2: CMat,
    #[serde(with = "mat_io")]
    pub b: CMat,
    #[serde(with = "mat_io")]
    pub c: CMat,
}

impl AdhmDatumS4 {
    pub fn new(a1: CMat, a2: CMat, b: CMat, c: CMat) -> Result<Self> {
        let k = a1.nrows();
        let r = b.ncols();
        let shapes_ok = a1.ncols() == k
            && a2.nrows() == k
            && a2.ncols() == k
            && b.nrows() == k
            && c.nrows() == r
            && c.ncols() == k;
        if !shapes_ok {
            return Err(Error::Shape(format!(
                "expected a1,a2: {k}x{k}, b: {k}x{r}, c: {r}x{k}; got a1 {}x{}, a2 {}x{}, b {}x{}, c {}x{}",
                a1.nrows(), a1.ncols(), a2.nrows(), a2.ncols(), b.nrows(), b.ncols(), c.nrows(), c.ncols()
            )));
        }
        if r == 0 {
            return Err(Error::Shape("framing rank r must be at least 1".into()));
        }
        let datum = AdhmDatumS4 { k, r, a1, a2, b, c };
        if !datum.matrices().into_iter().all(entries_finite) {
            return Err(Error::Precondition("datum entries must be finite".into()));
        }
        Ok(datum)
    }

    fn matrices(&self) -> [&CMat; 4] {
        [&self.a1, &self.a2, &self.b, &self.c]
    }

    /// Euclidean norm of the full datum.
    pub fn norm(&self) -> f64 {
        self.matrices()
            .iter()
            .map(|m| fro(m).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Entrywise distance to another datum of the same shape.
    pub fn distance(&self, other: &AdhmDatumS4) -> f64 {
        (fro(&(&self.a1 - &other.a1)).powi(2)
            + fro(&(&self.a2 - &other.a2)).powi(2)
            + fro(&(&self.b - &other.b)).powi(2)
            + fro(&(&self.c - &other.c)).powi(2))
        .sqrt()
    }
}

impl<'de> Deserialize<'de> for AdhmDatumS4 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            k: usize,
            r: usize,
            #[serde(with = "mat_io")]
            a1: CMat,
            #[serde(with = "mat_io")]
            a2: CMat,
            #[serde(with = "mat_io")]
            b: CMat,
            #[serde(with = "mat_io")]
            c: CMat,
        }
        let raw = Raw::deserialize(d)?;
        let datum = AdhmDatumS4::new(raw.a1, raw.a2, raw.b, raw.c)
            .map_err(serde::de::Error::custom)?;
        if datum.k != raw.k || datum.r != raw.r {
            return Err(serde::de::Error::custom(format!(
                "declared sizes k={}, r={} do not match matrix shapes k={}, r={}",
                raw.k, raw.r, datum.k, datum.r
            )));
        }
        Ok(datum)
    }
}

/// Moment-map level `mu = -zeta * 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelS4 {
    pub zeta: f64,
}

impl LevelS4 {
    pub fn new(zeta: f64) -> Result<Self> {
        if !zeta.is_finite() {
            return Err(Error::Config("level zeta must be finite".into()));
        }
        Ok(LevelS4 { zeta })
    }

    /// Target value of the moment map, `-zeta * 1`.
    pub fn target(&self, k: usize) -> CMat {
        CMat::identity(k, k).map(|z| z * -self.zeta)
    }
}

/// `[a1, a2] + b c`, the defect of the integrability equation.
pub fn integrability_matrix_s4(m: &AdhmDatumS4) -> CMat {
    commutator(&m.a1, &m.a2) + &m.b * &m.c
}

/// Frobenius norm of the integrability defect.
pub fn integrability_residual_s4(m: &AdhmDatumS4) -> f64 {
    fro(&integrability_matrix_s4(m))
}

/// Moment map `[a1, a1*] + [a2, a2*] + b b* - c* c`, symmetrized to be
/// exactly Hermitian.
pub fn moment_s4(m: &AdhmDatumS4) -> CMat {
    let raw = commutator(&m.a1, &m.a1.adjoint())
        + commutator(&m.a2, &m.a2.adjoint())
        + &m.b * m.b.adjoint()
        - m.c.adjoint() * &m.c;
    hermitian_part(&raw)
}

/// Distance of the moment map from the level `-zeta * 1`.
pub fn level_residual_s4(m: &AdhmDatumS4, level: &LevelS4) -> f64 {
    fro(&(moment_s4(m) - level.target(m.k)))
}

/// Group action `g . m = (g a1 g^-1, g a2 g^-1, g b, c g^-1)`.
///
/// Fails if `g` is not invertible.
pub fn act_s4(g: &CMat, m: &AdhmDatumS4) -> Result<AdhmDatumS4> {
    if g.nrows() != m.k || g.ncols() != m.k {
        return Err(Error::Shape(format!(
            "group element must be {0}x{0}, got {1}x{2}",
            m.k,
            g.nrows(),
            g.ncols()
        )));
    }
    let ginv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("group element is not invertible".into()))?;
    AdhmDatumS4::new(
        g * &m.a1 * &ginv,
        g * &m.a2 * &ginv,
        g * &m.b,
        &m.c * &ginv,
    )
}

/// First regularity condition: there is no proper subspace `W' < W`
/// with `a_i(W') <= W'` (i = 1, 2) and `im b <= W'`.
///
/// Decided exactly: the Krylov closure of `im b` under `a1, a2` is the
/// smallest such candidate; the condition holds iff the closure is all
/// of `W`. On failure the closure itself is the witness.
pub fn check_c1_s4(m: &AdhmDatumS4, tol: Tolerance) -> CheckResult {
    let seed = Subspace::span(&m.b, tol);
    let closure = seed.invariant_closure(&[&m.a1, &m.a2], tol);
    if closure.is_full() {
        CheckResult::holds()
    } else {
        CheckResult::fails_with(Witness::One(closure))
    }
}

/// Second regularity condition: there is no nonzero subspace
/// `W' <= ker c` with `a_i(W') <= W'`.
///
/// Dual to the first condition on the adjoint datum
/// `(a1*, a2*, c*, b*)`: a subspace `W'` is invariant and annihilated
/// by `c` exactly when its orthogonal complement is `a_i*`-invariant
/// and contains `im c*`. The witness returned is the orthogonal
/// complement of the adjoint closure, i.e. the largest violating `W'`.
pub fn check_c2_s4(m: &AdhmDatumS4, tol: Tolerance) -> CheckResult {
    let seed = Subspace::span(&m.c.adjoint(), tol);
    let a1h = m.a1.adjoint();
    let a2h = m.a2.adjoint();
    let closure = seed.invariant_closure(&[&a1h, &a2h], tol);
    if closure.is_full() {
        CheckResult::holds()
    } else {
        CheckResult::fails_with(Witness::One(closure.complement(tol)))
    }
}

/// Re-validates a first-condition witness: proper, `a_i`-invariant, and
/// containing `im b`, all at membership tolerance `eps`.
pub fn witness_violates_c1_s4(m: &AdhmDatumS4, w: &Subspace, eps: f64) -> bool {
    w.ambient() == m.k
        && !w.is_full()
        && w.contains_cols(&m.b, eps)
        && w.contains_cols(&(&m.a1 * w.basis()), eps)
        && w.contains_cols(&(&m.a2 * w.basis()), eps)
}

/// Re-validates a second-condition witness: nonzero, `a_i`-invariant,
/// and annihilated by `c`.
pub fn witness_violates_c2_s4(m: &AdhmDatumS4, w: &Subspace, eps: f64) -> bool {
    w.ambient() == m.k
        && !w.is_zero()
        && fro(&(&m.c * w.basis())) <= eps * (1.0 + fro(&m.c))
        && w.contains_cols(&(&m.a1 * w.basis()), eps)
        && w.contains_cols(&(&m.a2 * w.basis()), eps)
}

/// Real basis of the anti-Hermitian `k x k` matrices (dimension `k^2`).
pub(crate) fn anti_hermitian_basis(k: usize) -> Vec<CMat> {
    let mut basis = Vec::with_capacity(k * k);
    for i in 0..k {
        let mut h = CMat::zeros(k, k);
        h[(i, i)] = c(0.0, 1.0);
        basis.push(h);
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let mut h = CMat::zeros(k, k);
            h[(i, j)] = c(1.0, 0.0);
            h[(j, i)] = c(-1.0, 0.0);
            basis.push(h);
            let mut h = CMat::zeros(k, k);
            h[(i, j)] = c(0.0, 1.0);
            h[(j, i)] = c(0.0, 1.0);
            basis.push(h);
        }
    }
    basis
}

/// Flattens complex matrices into one real column vector (re, im parts).
pub(crate) fn realify_stack(mats: &[CMat]) -> Vec<f64> {
    let mut out = Vec::new();
    for m in mats {
        for z in m.iter() {
            out.push(z.re);
            out.push(z.im);
        }
    }
    out
}

/// Real dimension of the unitary stabilizer algebra of `m`:
/// anti-Hermitian `h` with `[h, a_i] = 0`, `h b = 0`, `c h = 0`.
pub fn stabilizer_dim_s4(m: &AdhmDatumS4, tol: Tolerance) -> usize {
    let basis = anti_hermitian_basis(m.k);
    if basis.is_empty() {
        return 0;
    }
    let constraint = |h: &CMat| {
        realify_stack(&[
            commutator(h, &m.a1),
            commutator(h, &m.a2),
            h * &m.b,
            &m.c * h,
        ])
    };
    let rows = constraint(&basis[0]).len();
    let mut sys = RMat::zeros(rows, basis.len());
    for (j, h) in basis.iter().enumerate() {
        let col = constraint(h);
        for (i, v) in col.into_iter().enumerate() {
            sys[(i, j)] = v;
        }
    }
    basis.len() - real_rank(&sys, tol)
}
