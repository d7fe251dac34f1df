//! Quintuple matrix data `(a1, a2, d, b, c)` for the reversed-orientation
//! projective-plane picture.
//!
//! Here `W0` and `W1` are both `C^k`; the maps are `a1, a2: W1 -> W0`,
//! `d: W0 -> W1`, `b: C^r -> W0`, `c: W1 -> C^r`, subject to the
//! integrability equation `a1 d a2 - a2 d a1 + b c = 0` and, for honest
//! monad data, surjectivity of `(a1 a2 b): W1 + W1 + C^r -> W0`.
//!
//! The moment map has two Hermitian components,
//!
//! ```text
//! mu0 = a1 a1* + a2 a2* + b b* - 1                             on W0,
//! mu1 = [da1, (da1)*] + [da2, (da2)*] - a1* a1 - a2* a2
//!       + (db)(db)* - c* c + 1                                 on W1,
//! ```
//!
//! with perturbed level sets `mu0 = 0`, `mu1 = zeta * 1` for `|zeta| < 1`.
//! The unitary pair group `U(W0) x U(W1)` acts by
//! `a_i -> g0 a_i g1^-1`, `d -> g1 d g0^-1`, `b -> g0 b`, `c -> c g1^-1`,
//! and both components are equivariant. The two components obey the
//! pointwise identity
//!
//! ```text
//! -d mu0 d* + mu1 = -sum_i a_i*(d* d + 1) a_i - c* c + 1 + d d*
//! ```
//!
//! for every datum, integrable or not.
//!
//! Regularity is again a pair of invariant-subspace conditions, now on
//! pairs of subspaces:
//!
//! * first condition: no proper pair `V0 < W0`, `V1 < W1` with
//!   `dim V1 >= dim V0`, `im b <= V0`, `d(V0) <= V1`, `a_i(V1) <= V0`;
//! * second condition: no nonzero pair `V0 <= W0`, `V1 <= W1` with
//!   `dim V1 >= dim V0`, `c(V1) = 0`, `d(V0) <= V1`, `a_i(V1) <= V0`.
//!
//! The first condition is decided by a closure computation plus a bounded
//! enlargement search and is three-valued: any violating `V0` contains the
//! closure `V0*` of `im b` under the transfer operators `t_i = a_i d`, and
//! a closed `V0` admits a partner `V1` exactly when the intersection
//! `P = a1^-1(V0) & a2^-1(V0)` has `dim P >= dim V0` (take `V1 = d(V0)`
//! extended inside `P`). When `V0*` itself admits no partner the decider
//! grows it by candidate directions (generalized eigenvectors of the
//! transfer operators, preimages under `d`) up to a fixed budget, and
//! reports `Unknown` when the search is exhausted. The second condition
//! reduces to the first on the adjoint datum `(a1*, a2*, d*, c*, b*)`
//! through orthogonal complements.

use serde::{Deserialize, Serialize};

use crate::adhm_s4::{anti_hermitian_basis, realify_stack, AdhmDatumS4};
use crate::check::{CheckResult, Verdict, Witness};
use crate::error::{Error, Result};
use crate::linalg::{
    entries_finite, eigenvalue_candidates, fro, hermitian_part, mat_io, real_rank,
    singular_values, CMat, RMat, Subspace, Tolerance,
};
use num_complex::Complex64;

/// Candidate directions tried by the first-condition enlargement search.
const ENLARGEMENT_BUDGET: usize = 50;

/// Quintuple `(a1, a2, d, b, c)` with `a_i, d: k x k`, `b: k x r`,
/// `c: r x k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonadDatumP2 {
    pub k: usize,
    pub r: usize,
    #[serde(with = "mat_io")]
    pub a1: CMat,
    #[serde(with = "mat_io")]
    pub a2: CMat,
    #[serde(with = "mat_io")]
    pub d: CMat,
    #[serde(with = "mat_io")]
    pub b: CMat,
    #[serde(with = "mat_io")]
    pub c: CMat,
}

impl MonadDatumP2 {
    pub fn new(a1: CMat, a2: CMat, d: CMat, b: CMat, c: CMat) -> Result<Self> {
        let k = a1.nrows();
        let r = b.ncols();
        let square = |m: &CMat| m.nrows() == k && m.ncols() == k;
        let shapes_ok = square(&a1)
            && square(&a2)
            && square(&d)
            && b.nrows() == k
            && c.nrows() == r
            && c.ncols() == k;
        if !shapes_ok {
            return Err(Error::Shape(format!(
                "expected a1,a2,d: {k}x{k}, b: {k}x{r}, c: {r}x{k}; got a1 {}x{}, a2 {}x{}, d {}x{}, b {}x{}, c {}x{}",
                a1.nrows(), a1.ncols(), a2.nrows(), a2.ncols(), d.nrows(), d.ncols(),
                b.nrows(), b.ncols(), c.nrows(), c.ncols()
            )));
        }
        if r == 0 {
            return Err(Error::Shape("framing rank r must be at least 1".into()));
        }
        let datum = MonadDatumP2 { k, r, a1, a2, d, b, c };
        if !datum.matrices().into_iter().all(entries_finite) {
            return Err(Error::Precondition("datum entries must be finite".into()));
        }
        Ok(datum)
    }

    fn matrices(&self) -> [&CMat; 5] {
        [&self.a1, &self.a2, &self.d, &self.b, &self.c]
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
    pub fn distance(&self, other: &MonadDatumP2) -> f64 {
        (fro(&(&self.a1 - &other.a1)).powi(2)
            + fro(&(&self.a2 - &other.a2)).powi(2)
            + fro(&(&self.d - &other.d)).powi(2)
            + fro(&(&self.b - &other.b)).powi(2)
            + fro(&(&self.c - &other.c)).powi(2))
        .sqrt()
    }
}

impl<'de> Deserialize<'de> for MonadDatumP2 {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            k: usize,
            r: usize,
            #[serde(with = "mat_io")]
            a1: CMat,
            #[serde(with = "mat_io")]
            a2: CMat,
            #[serde(with = "mat_io")]
            d: CMat,
            #[serde(with = "mat_io")]
            b: CMat,
            #[serde(with = "mat_io")]
            c: CMat,
        }
        let raw = Raw::deserialize(de)?;
        let datum = MonadDatumP2::new(raw.a1, raw.a2, raw.d, raw.b, raw.c)
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

/// Moment-map level `(mu0, mu1) = (0, zeta * 1)` with `|zeta| < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelP2 {
    pub zeta: f64,
}

impl LevelP2 {
    pub fn new(zeta: f64) -> Result<Self> {
        if !zeta.is_finite() || zeta.abs() >= 1.0 {
            return Err(Error::Config(format!(
                "level zeta must satisfy |zeta| < 1, got {zeta}"
            )));
        }
        Ok(LevelP2 { zeta })
    }

    /// Target value of the second moment component, `zeta * 1`.
    pub fn target1(&self, k: usize) -> CMat {
        CMat::identity(k, k).map(|z| z * self.zeta)
    }
}

/// `a1 d a2 - a2 d a1 + b c`, the defect of the integrability equation.
pub fn integrability_matrix_p2(m: &MonadDatumP2) -> CMat {
    &m.a1 * &m.d * &m.a2 - &m.a2 * &m.d * &m.a1 + &m.b * &m.c
}

/// Frobenius norm of the integrability defect.
pub fn integrability_residual_p2(m: &MonadDatumP2) -> f64 {
    fro(&integrability_matrix_p2(m))
}

/// Surjectivity of `(a1 a2 b): W1 + W1 + C^r -> W0`, i.e. full row rank
/// of the horizontal concatenation. On failure the witness is the
/// orthogonal complement of the column span (the directions missed).
pub fn surjectivity_check(m: &MonadDatumP2, tol: Tolerance) -> CheckResult {
    let stack = row_map(m);
    let image = Subspace::span(&stack, tol);
    if image.is_full() {
        CheckResult::holds()
    } else {
        CheckResult::fails_with(Witness::One(image.complement(tol)))
    }
}

/// Horizontal concatenation `(a1 a2 b)`, a `k x (2k + r)` matrix onto `W0`.
fn row_map(m: &MonadDatumP2) -> CMat {
    let k = m.k;
    let mut stack = CMat::zeros(k, 2 * k + m.r);
    stack.view_mut((0, 0), (k, k)).copy_from(&m.a1);
    stack.view_mut((0, k), (k, k)).copy_from(&m.a2);
    stack.view_mut((0, 2 * k), (k, m.r)).copy_from(&m.b);
    stack
}

/// Vertical concatenation `(a1; a2; c)`, a `(2k + r) x k` matrix from `W1`.
fn column_map(m: &MonadDatumP2) -> CMat {
    let k = m.k;
    let mut stack = CMat::zeros(2 * k + m.r, k);
    stack.view_mut((0, 0), (k, k)).copy_from(&m.a1);
    stack.view_mut((k, 0), (k, k)).copy_from(&m.a2);
    stack.view_mut((2 * k, 0), (m.r, k)).copy_from(&m.c);
    stack
}

/// Both moment-map components `(mu0, mu1)`, symmetrized to be exactly
/// Hermitian.
pub fn moment_p2(m: &MonadDatumP2) -> (CMat, CMat) {
    let k = m.k;
    let id = CMat::identity(k, k);
    let mu0 = &m.a1 * m.a1.adjoint() + &m.a2 * m.a2.adjoint() + &m.b * m.b.adjoint() - &id;
    let d1 = &m.d * &m.a1;
    let d2 = &m.d * &m.a2;
    let db = &m.d * &m.b;
    let mu1 = (&d1 * d1.adjoint() - d1.adjoint() * &d1)
        + (&d2 * d2.adjoint() - d2.adjoint() * &d2)
        - m.a1.adjoint() * &m.a1
        - m.a2.adjoint() * &m.a2
        + &db * db.adjoint()
        - m.c.adjoint() * &m.c
        + &id;
    (hermitian_part(&mu0), hermitian_part(&mu1))
}

/// Distance of the moment map from the level `(0, zeta * 1)`.
pub fn level_residual_p2(m: &MonadDatumP2, level: &LevelP2) -> f64 {
    let (mu0, mu1) = moment_p2(m);
    fro(&mu0).hypot(fro(&(mu1 - level.target1(m.k))))
}

/// Group action of a pair `(g0, g1)` of invertible endomorphisms:
/// `a_i -> g0 a_i g1^-1`, `d -> g1 d g0^-1`, `b -> g0 b`, `c -> c g1^-1`.
pub fn act_p2(g0: &CMat, g1: &CMat, m: &MonadDatumP2) -> Result<MonadDatumP2> {
    let shape_ok = |g: &CMat| g.nrows() == m.k && g.ncols() == m.k;
    if !shape_ok(g0) || !shape_ok(g1) {
        return Err(Error::Shape(format!(
            "group pair must be {0}x{0}, got {1}x{2} and {3}x{4}",
            m.k,
            g0.nrows(),
            g0.ncols(),
            g1.nrows(),
            g1.ncols()
        )));
    }
    let g0inv = g0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("first group factor is not invertible".into()))?;
    let g1inv = g1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("second group factor is not invertible".into()))?;
    MonadDatumP2::new(
        g0 * &m.a1 * &g1inv,
        g0 * &m.a2 * &g1inv,
        g1 * &m.d * &g0inv,
        g0 * &m.b,
        &m.c * &g1inv,
    )
}

/// Defect of the pointwise two-component identity
/// `-d mu0 d* + mu1 = -sum_i a_i*(d* d + 1) a_i - c* c + 1 + d d*`,
/// which holds for every datum. Useful as a consistency check on the
/// moment-map implementation.
pub fn combined_identity_residual(m: &MonadDatumP2) -> f64 {
    let k = m.k;
    let id = CMat::identity(k, k);
    let (mu0, mu1) = moment_p2(m);
    let lhs = -(&m.d * mu0 * m.d.adjoint()) + mu1;
    let dd1 = m.d.adjoint() * &m.d + &id;
    let rhs = -(m.a1.adjoint() * &dd1 * &m.a1) - m.a2.adjoint() * &dd1 * &m.a2
        - m.c.adjoint() * &m.c
        + &id
        + &m.d * m.d.adjoint();
    fro(&(lhs - rhs))
}

/// Smallest singular values of the two framing stacks: the row map
/// `(a1 a2 b)` out of which surjectivity is read, and the column map
/// `(a1; a2; c)` whose injectivity margin bounds the second condition.
/// On the level set the first margin is exactly 1.
pub fn max_rank_margins(m: &MonadDatumP2) -> (f64, f64) {
    let row = singular_values(&row_map(m));
    let col = singular_values(&column_map(m));
    let min_at_k = |s: &[f64]| if s.len() >= m.k { s[m.k - 1] } else { 0.0 };
    if m.k == 0 {
        return (f64::INFINITY, f64::INFINITY);
    }
    (min_at_k(&row), min_at_k(&col))
}

/// Adjoint datum `(a1*, a2*, d*, c*, b*)` with the roles of `W0` and `W1`
/// exchanged. The second condition for `m` is the first condition for
/// this datum, through orthogonal complements.
pub fn adjoint_datum_p2(m: &MonadDatumP2) -> MonadDatumP2 {
    MonadDatumP2::new(
        m.a1.adjoint(),
        m.a2.adjoint(),
        m.d.adjoint(),
        m.c.adjoint(),
        m.b.adjoint(),
    )
    .expect("adjoint of a valid datum is valid")
}

/// Intersection `a1^-1(v0) & a2^-1(v0)` inside `W1`: the space of
/// partner directions available to a closed `v0`.
fn partner_pool(m: &MonadDatumP2, v0: &Subspace, tol: Tolerance) -> Subspace {
    let p1 = v0.preimage_under(&m.a1, tol);
    let p2 = v0.preimage_under(&m.a2, tol);
    p1.intersection(&p2, tol)
}

/// Builds a violating pair on top of a transfer-closed proper `v0`, if
/// the partner pool is large enough: `v1 = d(v0)` extended inside the
/// pool to `dim v0`.
fn admissible_pair(
    m: &MonadDatumP2,
    v0: &Subspace,
    pool: &Subspace,
    tol: Tolerance,
) -> Option<(Subspace, Subspace)> {
    if pool.dim() < v0.dim() {
        return None;
    }
    let dv0 = v0.image_under(&m.d, tol);
    dv0.extend_within(pool, v0.dim(), tol)
        .map(|v1| (v0.clone(), v1))
}

/// Generalized eigenspace `ker (t - lambda)^k` of a `k x k` operator.
fn generalized_eigenspace(t: &CMat, lambda: Complex64, tol: Tolerance) -> CMat {
    let k = t.nrows();
    let shifted = t - CMat::identity(k, k).map(|z| z * lambda);
    let mut pow = CMat::identity(k, k);
    for _ in 0..k {
        pow = &pow * &shifted;
    }
    crate::linalg::nullspace_basis(&pow, tol)
}

/// Candidate directions for the first-condition enlargement search:
/// generalized eigenvectors of both transfer operators, then a basis of
/// `d^-1(pool)` for the partner pool of the starting closure.
fn candidate_directions(
    t1: &CMat,
    t2: &CMat,
    d: &CMat,
    pool: &Subspace,
    tol: Tolerance,
) -> Vec<CMat> {
    let k = t1.nrows();
    let eig_tol = Tolerance::new(1e-8, 1e-12).expect("static tolerance");
    let mut out = Vec::new();
    for t in [t1, t2] {
        for lambda in eigenvalue_candidates(t) {
            let basis = generalized_eigenspace(t, lambda, eig_tol);
            for j in 0..basis.ncols() {
                out.push(CMat::from_fn(k, 1, |i, _| basis[(i, j)]));
            }
        }
    }
    let dpre = pool.preimage_under(d, tol);
    for j in 0..dpre.dim() {
        out.push(CMat::from_fn(k, 1, |i, _| dpre.basis()[(i, j)]));
    }
    out
}

/// First regularity condition on the quintuple, three-valued.
///
/// `Holds` is certified when the closure of `im b` under the transfer
/// operators `t_i = a_i d` is all of `W0` (every violating `V0` would
/// contain it). `Fails` is certified by an explicit violating pair,
/// found either directly over the closure or over a bounded enlargement
/// of it; witnesses are re-checkable with [`witness_violates_c1p`].
/// `Unknown` means the search was exhausted without a certificate.
pub fn check_c1p(m: &MonadDatumP2, tol: Tolerance) -> CheckResult {
    let t1 = &m.a1 * &m.d;
    let t2 = &m.a2 * &m.d;
    let v0_star = Subspace::span(&m.b, tol).invariant_closure(&[&t1, &t2], tol);
    if v0_star.is_full() {
        return CheckResult::holds();
    }
    let pool_star = partner_pool(m, &v0_star, tol);
    if let Some((v0, v1)) = admissible_pair(m, &v0_star, &pool_star, tol) {
        return CheckResult::fails_with(Witness::Pair { v0, v1 });
    }
    let mut budget = ENLARGEMENT_BUDGET;
    for dir in candidate_directions(&t1, &t2, &m.d, &pool_star, tol) {
        if v0_star.contains_cols(&dir, 1e-8) {
            continue;
        }
        if budget == 0 {
            break;
        }
        budget -= 1;
        let seeded = v0_star.sum(&Subspace::span(&dir, tol), tol);
        let grown = seeded.invariant_closure(&[&t1, &t2], tol);
        if grown.is_full() {
            continue;
        }
        let pool = partner_pool(m, &grown, tol);
        if let Some((v0, v1)) = admissible_pair(m, &grown, &pool, tol) {
            return CheckResult::fails_with(Witness::Pair { v0, v1 });
        }
    }
    CheckResult::unknown()
}

/// Second regularity condition on the quintuple, three-valued.
///
/// Decided as the first condition of the adjoint datum; a violating pair
/// there complements back to a nonzero pair `(V0, V1)` with
/// `c(V1) = 0`, `d(V0) <= V1`, `a_i(V1) <= V0`, `dim V1 >= dim V0`.
pub fn check_c2p(m: &MonadDatumP2, tol: Tolerance) -> CheckResult {
    let adj = adjoint_datum_p2(m);
    let res = check_c1p(&adj, tol);
    match res.verdict {
        Verdict::Holds => CheckResult::holds(),
        Verdict::Unknown => CheckResult::unknown(),
        Verdict::Fails => {
            let (w0, w1) = res
                .witness_pair()
                .expect("failing first-condition result carries a pair");
            CheckResult::fails_with(Witness::Pair {
                v0: w1.complement(tol),
                v1: w0.complement(tol),
            })
        }
    }
}

/// Re-validates a first-condition witness pair at membership tolerance
/// `eps`: both proper, `dim v1 >= dim v0`, `im b <= v0`, `d(v0) <= v1`,
/// `a_i(v1) <= v0`.
pub fn witness_violates_c1p(m: &MonadDatumP2, v0: &Subspace, v1: &Subspace, eps: f64) -> bool {
    v0.ambient() == m.k
        && v1.ambient() == m.k
        && !v0.is_full()
        && !v1.is_full()
        && v1.dim() >= v0.dim()
        && v0.contains_cols(&m.b, eps)
        && (v0.is_zero() || v1.contains_cols(&(&m.d * v0.basis()), eps))
        && (v1.is_zero()
            || (v0.contains_cols(&(&m.a1 * v1.basis()), eps)
                && v0.contains_cols(&(&m.a2 * v1.basis()), eps)))
}

/// Re-validates a second-condition witness pair: both nonzero,
/// `dim v1 >= dim v0`, `c(v1) = 0`, `d(v0) <= v1`, `a_i(v1) <= v0`.
pub fn witness_violates_c2p(m: &MonadDatumP2, v0: &Subspace, v1: &Subspace, eps: f64) -> bool {
    v0.ambient() == m.k
        && v1.ambient() == m.k
        && !v0.is_zero()
        && !v1.is_zero()
        && v1.dim() >= v0.dim()
        && fro(&(&m.c * v1.basis())) <= eps * (1.0 + fro(&m.c))
        && v1.contains_cols(&(&m.d * v0.basis()), eps)
        && v0.contains_cols(&(&m.a1 * v1.basis()), eps)
        && v0.contains_cols(&(&m.a2 * v1.basis()), eps)
}

/// Real dimension of the unitary-pair stabilizer algebra of `m`:
/// anti-Hermitian `(h0, h1)` with `h0 a_i = a_i h1`, `h1 d = d h0`,
/// `h0 b = 0`, `c h1 = 0`.
pub fn stabilizer_dim_p2(m: &MonadDatumP2, tol: Tolerance) -> usize {
    let basis = anti_hermitian_basis(m.k);
    if basis.is_empty() {
        return 0;
    }
    let zero = CMat::zeros(m.k, m.k);
    let constraint = |h0: &CMat, h1: &CMat| {
        realify_stack(&[
            h0 * &m.a1 - &m.a1 * h1,
            h0 * &m.a2 - &m.a2 * h1,
            h1 * &m.d - &m.d * h0,
            h0 * &m.b,
            &m.c * h1,
        ])
    };
    let rows = constraint(&zero, &zero).len();
    let vars = 2 * basis.len();
    let mut sys = RMat::zeros(rows, vars);
    for (j, h) in basis.iter().enumerate() {
        for (i, v) in constraint(h, &zero).into_iter().enumerate() {
            sys[(i, j)] = v;
        }
        for (i, v) in constraint(&zero, h).into_iter().enumerate() {
            sys[(i, basis.len() + j)] = v;
        }
    }
    vars - real_rank(&sys, tol)
}

/// Collapse map to quadruple data on `W1`: `(d a1, d a2, d b, c)`.
///
/// Sends integrable quintuples to integrable quadruples:
/// `[d a1, d a2] + (d b) c = d (a1 d a2 - a2 d a1 + b c) = 0`.
pub fn p_map(m: &MonadDatumP2) -> Result<AdhmDatumS4> {
    AdhmDatumS4::new(
        &m.d * &m.a1,
        &m.d * &m.a2,
        &m.d * &m.b,
        m.c.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, pseudo_inverse};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn mat(rows: usize, cols: usize, re: &[f64]) -> CMat {
        CMat::from_fn(rows, cols, |i, j| c(re[i * cols + j], 0.0))
    }

    fn random_datum(seed: u64, k: usize, r: usize) -> MonadDatumP2 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rmat = |rows: usize, cols: usize| {
            CMat::from_fn(rows, cols, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        };
        MonadDatumP2::new(rmat(k, k), rmat(k, k), rmat(k, k), rmat(k, r), rmat(r, k)).unwrap()
    }

    /// Closed-form level point at rank 1: a1 = sqrt(1 - zeta), a2 = 0,
    /// d = 0, b = sqrt(zeta), c = 0.
    fn boundary_point(zeta: f64) -> MonadDatumP2 {
        MonadDatumP2::new(
            mat(1, 1, &[(1.0 - zeta).sqrt()]),
            CMat::zeros(1, 1),
            CMat::zeros(1, 1),
            mat(1, 1, &[zeta.sqrt()]),
            CMat::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn boundary_point_sits_on_level() {
        let zeta = 0.5;
        let m = boundary_point(zeta);
        let level = LevelP2::new(zeta).unwrap();
        let (mu0, mu1) = moment_p2(&m);
        assert!(fro(&mu0) < 1e-15);
        assert_relative_eq!(mu1[(0, 0)].re, zeta, epsilon = 1e-15);
        assert!(level_residual_p2(&m, &level) < 1e-15);
        assert_eq!(integrability_residual_p2(&m), 0.0);

        let (row_margin, col_margin) = max_rank_margins(&m);
        assert_relative_eq!(row_margin, 1.0, epsilon = 1e-14);
        assert_relative_eq!(col_margin, (1.0 - zeta).sqrt(), epsilon = 1e-14);

        assert_eq!(surjectivity_check(&m, Tolerance::default()).verdict, Verdict::Holds);
        assert_eq!(check_c1p(&m, Tolerance::default()).verdict, Verdict::Holds);

        // c = 0 admits the full pair (W0, W1) as a second-condition witness.
        let res = check_c2p(&m, Tolerance::default());
        assert_eq!(res.verdict, Verdict::Fails);
        let (v0, v1) = res.witness_pair().unwrap();
        assert!(v0.is_full() && v1.is_full());
        assert!(witness_violates_c2p(&m, v0, v1, 1e-10));

        assert_eq!(stabilizer_dim_p2(&m, Tolerance::default()), 0);
        assert_eq!(p_map(&m).unwrap().norm(), 0.0);
    }

    #[test]
    fn zero_b_and_d_fails_first_condition_with_zero_pair() {
        let m = MonadDatumP2::new(
            mat(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            mat(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            CMat::zeros(2, 2),
            CMat::zeros(2, 1),
            CMat::zeros(1, 2),
        )
        .unwrap();
        let res = check_c1p(&m, Tolerance::default());
        assert_eq!(res.verdict, Verdict::Fails);
        let (v0, v1) = res.witness_pair().unwrap();
        assert!(v0.is_zero() && v1.is_zero());
        assert!(witness_violates_c1p(&m, v0, v1, 1e-10));
    }

    #[test]
    fn enlargement_search_finds_wider_violating_pair() {
        // a1 = 1, a2 swaps e1 <-> e2, d = diag(0, 1, 0), b = e1, c = 0.
        // The closure of im b is span(e1), whose partner pool is zero;
        // growing by the transfer eigendirection e2 reaches the violating
        // pair (span(e1, e2), span(e1, e2)).
        let m = MonadDatumP2::new(
            CMat::identity(3, 3),
            mat(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            mat(3, 3, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            mat(3, 1, &[1.0, 0.0, 0.0]),
            CMat::zeros(1, 3),
        )
        .unwrap();
        let res = check_c1p(&m, Tolerance::default());
        assert_eq!(res.verdict, Verdict::Fails);
        let (v0, v1) = res.witness_pair().unwrap();
        assert_eq!(v0.dim(), 2);
        assert_eq!(v1.dim(), 2);
        assert!(witness_violates_c1p(&m, v0, v1, 1e-10));
        let e12 = Subspace::span(
            &mat(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            Tolerance::default(),
        );
        assert!(v0.approx_eq(&e12, 1e-8));
    }

    #[test]
    fn exhausted_search_reports_unknown() {
        // a1 = 1, a2 swaps e1 <-> e2, d = diag(0, 1), b = e1, c = 0.
        // span(e1) is transfer-closed with empty partner pool, and every
        // enlargement closes up to the whole space, so no certificate
        // exists either way within the search.
        let m = MonadDatumP2::new(
            CMat::identity(2, 2),
            mat(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            mat(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            mat(2, 1, &[1.0, 0.0]),
            CMat::zeros(1, 2),
        )
        .unwrap();
        let res = check_c1p(&m, Tolerance::default());
        assert_eq!(res.verdict, Verdict::Unknown);
        assert!(res.witness.is_none());
    }

    #[test]
    fn second_condition_witness_through_adjoint() {
        // Adjoint of the enlargement example: the second condition fails
        // with the complementary pair (span(e3), span(e3)).
        let m = MonadDatumP2::new(
            CMat::identity(3, 3),
            mat(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            mat(3, 3, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            CMat::zeros(3, 1),
            mat(1, 3, &[1.0, 0.0, 0.0]),
        )
        .unwrap();
        let res = check_c2p(&m, Tolerance::default());
        assert_eq!(res.verdict, Verdict::Fails);
        let (v0, v1) = res.witness_pair().unwrap();
        assert_eq!((v0.dim(), v1.dim()), (1, 1));
        assert!(witness_violates_c2p(&m, v0, v1, 1e-10));
        let e3 = Subspace::span(&mat(3, 1, &[0.0, 0.0, 1.0]), Tolerance::default());
        assert!(v0.approx_eq(&e3, 1e-8));
        assert!(v1.approx_eq(&e3, 1e-8));
    }

    #[test]
    fn combined_identity_holds_off_shell() {
        for seed in 0..20 {
            let m = random_datum(seed, 3, 2);
            let bound = 1e-12 * (1.0 + m.norm().powi(4));
            assert!(
                combined_identity_residual(&m) <= bound,
                "seed {seed}: residual {} above {bound}",
                combined_identity_residual(&m)
            );
        }
    }

    #[test]
    fn moments_are_equivariant_under_unitary_pairs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut rmat = |rows: usize, cols: usize| {
            CMat::from_fn(rows, cols, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        };
        let m = MonadDatumP2::new(rmat(3, 3), rmat(3, 3), rmat(3, 3), rmat(3, 2), rmat(2, 3))
            .unwrap();
        let g0 = rmat(3, 3).qr().q();
        let g1 = rmat(3, 3).qr().q();
        let acted = act_p2(&g0, &g1, &m).unwrap();
        let (mu0, mu1) = moment_p2(&m);
        let (nu0, nu1) = moment_p2(&acted);
        assert!(fro(&(nu0 - &g0 * mu0 * g0.adjoint())) < 1e-10);
        assert!(fro(&(nu1 - &g1 * mu1 * g1.adjoint())) < 1e-10);
        // Integrability defect transforms by g0 . g1^-1, so its vanishing
        // is preserved; check the transported residual agrees.
        let defect = integrability_matrix_p2(&m);
        let moved = integrability_matrix_p2(&acted);
        let expected = &g0 * defect * g1.try_inverse().unwrap();
        assert!(fro(&(moved - expected)) < 1e-10);
    }

    #[test]
    fn constructed_integrable_datum_and_collapse() {
        // With b of full row rank, c = -b^+ (a1 d a2 - a2 d a1) solves the
        // integrability equation; the collapse map then lands on
        // integrable quadruple data.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut rmat = |rows: usize, cols: usize| {
            CMat::from_fn(rows, cols, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        };
        let (k, r) = (2, 3);
        let (a1, a2, d, b) = (rmat(k, k), rmat(k, k), rmat(k, k), rmat(k, r));
        let defect0 = &a1 * &d * &a2 - &a2 * &d * &a1;
        let cmat = -pseudo_inverse(&b, Tolerance::default()) * defect0;
        let m = MonadDatumP2::new(a1, a2, d, b, cmat).unwrap();
        assert!(integrability_residual_p2(&m) < 1e-12);
        let q = p_map(&m).unwrap();
        assert!(crate::adhm_s4::integrability_residual_s4(&q) < 1e-12);
        assert_eq!(surjectivity_check(&m, Tolerance::default()).verdict, Verdict::Holds);
    }

    #[test]
    fn surjectivity_failure_carries_cokernel_witness() {
        let shift = mat(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let m = MonadDatumP2::new(
            shift.clone(),
            shift,
            CMat::zeros(2, 2),
            CMat::zeros(2, 1),
            CMat::zeros(1, 2),
        )
        .unwrap();
        let res = surjectivity_check(&m, Tolerance::default());
        assert_eq!(res.verdict, Verdict::Fails);
        let w = res.witness_subspace().unwrap();
        assert_eq!(w.dim(), 1);
        assert!(w.contains_cols(&mat(2, 1, &[0.0, 1.0]), 1e-10));
    }

    #[test]
    fn stabilizer_counts_diagonal_pair_symmetries() {
        // With every map zero the constraints vanish: the stabilizer is
        // all of u(k) x u(k).
        let m = MonadDatumP2::new(
            CMat::zeros(2, 2),
            CMat::zeros(2, 2),
            CMat::zeros(2, 2),
            CMat::zeros(2, 1),
            CMat::zeros(1, 2),
        )
        .unwrap();
        assert_eq!(stabilizer_dim_p2(&m, Tolerance::default()), 8);
    }

    #[test]
    fn datum_json_round_trip() {
        let m = boundary_point(0.25);
        let text = serde_json::to_string(&m).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["k"], 1);
        assert_eq!(v["r"], 1);
        let back: MonadDatumP2 = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let mut bad: serde_json::Value = serde_json::from_str(&text).unwrap();
        bad["r"] = serde_json::json!(4);
        assert!(serde_json::from_value::<MonadDatumP2>(bad).is_err());
    }
}
