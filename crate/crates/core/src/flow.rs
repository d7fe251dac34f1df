//! Sampling and optimization on moment-map level sets.
//!
//! The pieces fit together as a pipeline: [`random_integrable_s4`] and
//! [`random_integrable_p2`] draw Gaussian data satisfying the relevant
//! integrability equation exactly (by solving for `c`); the Kempf-Ness
//! flows descend the squared level residual within a complexified group
//! orbit, which preserves integrability identically; on the resulting
//! level-set points [`tangent_dimension_s4`] / [`tangent_dimension_p2`]
//! measure the real dimension of the solution variety transverse to the
//! group orbit, [`df_surjectivity_check`] decides the linear-algebra
//! criterion behind that smoothness count, and [`resolution_project`]
//! flows a `(0, zeta)`-level point down to the `(0, 0)` level while
//! tracing the collapse map `p`.
//!
//! Flows are deterministic state machines: no randomness, fixed
//! evaluation order, so identical inputs give bit-identical reports.

use serde::{Deserialize, Serialize};

use crate::adhm_s4::{
    act_s4, integrability_matrix_s4, integrability_residual_s4, level_residual_s4, moment_s4,
    stabilizer_dim_s4, AdhmDatumS4, LevelS4,
};
use crate::check::{CheckResult, Verdict, Witness};
use crate::error::{Error, Result};
use crate::linalg::{
    c, commutator, fro, hermitian_exp, hermitian_part, nullspace_basis, pseudo_inverse,
    real_rank, CMat, RMat, Subspace, Tolerance,
};
use crate::monad_p2::{
    act_p2, integrability_matrix_p2, integrability_residual_p2, level_residual_p2, moment_p2,
    p_map, stabilizer_dim_p2, surjectivity_check, LevelP2, MonadDatumP2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Accumulated group norm beyond which the orbit is treated as escaping
/// to infinity: the group element's condition number then exceeds e^100.
const INSTABILITY_NORM: f64 = 50.0;

/// Armijo sufficient-decrease constant for the backtracking line search.
const ARMIJO: f64 = 1e-4;

/// Relative objective decrease below which an accepted step counts as
/// stalled for the purposes of `stall_window`.
const REL_STALL: f64 = 1e-12;

/// Level residual below which a point counts as on-level for the
/// dimension, resolution, and trace entry points.
const ON_LEVEL: f64 = 1e-6;

/// Gradient-flow parameters.
///
/// `step0` seeds the line search; accepted steps grow by `grow`, rejected
/// trials shrink by `backtrack`. The flow stops when the level residual
/// drops to `tol`, when `max_iter` accepted steps have been taken, when
/// `stall_window` consecutive accepted steps each improve the objective
/// by less than a relative `1e-12`, or when the accumulated group norm
/// signals orbit escape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub step0: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub backtrack: f64,
    pub grow: f64,
    pub stall_window: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            step0: 0.1,
            max_iter: 50_000,
            tol: 1e-10,
            backtrack: 0.5,
            grow: 1.5,
            stall_window: 500,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step0 > 0.0
            && self.step0.is_finite()
            && self.max_iter >= 1
            && self.max_iter <= 1_000_000
            && self.tol >= 1e-12
            && self.tol.is_finite()
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.grow > 1.0
            && self.grow.is_finite()
            && self.stall_window >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid flow configuration: {self:?}")))
        }
    }
}

/// Outcome of one gradient flow.
///
/// Invariants: `converged` implies `final_residual <= tol`;
/// `instability_flag` implies `!converged`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub group_norm: f64,
    pub instability_flag: bool,
}

fn complex_gaussian<R: Rng>(rng: &mut R, scale: f64) -> num_complex::Complex64 {
    let sigma = scale * std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re * sigma, im * sigma)
}

/// Counter-based seed for sample `index` of a batch, so batches can run
/// in any parallel order and still draw identical streams per index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Fills row by row so the draw order is part of the determinism contract.
pub(crate) fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_gaussian(rng, scale);
        }
    }
    m
}

/// Random integrable quadruple: Gaussian `a1, a2, b` (entry std `scale`,
/// `b` conditioned to full row rank) and `c := -b^+ [a1, a2]`, which
/// solves the integrability equation exactly since `b b^+ = 1`.
///
/// Requires `r >= k`; deterministic for a fixed seed.
pub fn random_integrable_s4(k: usize, r: usize, seed: u64, scale: f64) -> Result<AdhmDatumS4> {
    if r < k {
        return Err(Error::Sampling(format!(
            "full row rank of b needs r >= k, got k={k}, r={r}"
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Sampling(format!("scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a1 = gaussian_matrix(&mut rng, k, k, scale);
    let a2 = gaussian_matrix(&mut rng, k, k, scale);
    let mut b = gaussian_matrix(&mut rng, k, r, scale);
    let mut attempts = 0;
    while crate::linalg::numeric_rank(&b, Tolerance::default()) < k {
        attempts += 1;
        if attempts > 100 {
            return Err(Error::Sampling("could not draw a full-row-rank b".into()));
        }
        b = gaussian_matrix(&mut rng, k, r, scale);
    }
    let cmat = -pseudo_inverse(&b, Tolerance::default()) * commutator(&a1, &a2);
    let m = AdhmDatumS4::new(a1, a2, b, cmat)?;
    let bound = 1e-10 * (1.0 + m.norm().powi(2));
    if integrability_residual_s4(&m) > bound {
        return Err(Error::Sampling(
            "sampled datum misses the integrability equation".into(),
        ));
    }
    Ok(m)
}

/// Random integrable quintuple: Gaussian `a1, a2, d, b` and
/// `c := -b^+ (a1 d a2 - a2 d a1)`; redraws until the surjectivity
/// check holds (full-row-rank `b` already guarantees it).
///
/// Requires `r >= k`; deterministic for a fixed seed.
pub fn random_integrable_p2(k: usize, r: usize, seed: u64, scale: f64) -> Result<MonadDatumP2> {
    if r < k {
        return Err(Error::Sampling(format!(
            "full row rank of b needs r >= k, got k={k}, r={r}"
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Sampling(format!("scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let a1 = gaussian_matrix(&mut rng, k, k, scale);
        let a2 = gaussian_matrix(&mut rng, k, k, scale);
        let d = gaussian_matrix(&mut rng, k, k, scale);
        let b = gaussian_matrix(&mut rng, k, r, scale);
        if crate::linalg::numeric_rank(&b, Tolerance::default()) < k {
            continue;
        }
        let defect = &a1 * &d * &a2 - &a2 * &d * &a1;
        let cmat = -pseudo_inverse(&b, Tolerance::default()) * defect;
        let m = MonadDatumP2::new(a1, a2, d, b, cmat)?;
        let bound = 1e-10 * (1.0 + m.norm().powi(2));
        if integrability_residual_p2(&m) > bound {
            continue;
        }
        if surjectivity_check(&m, Tolerance::default()).verdict == Verdict::Holds {
            return Ok(m);
        }
    }
    Err(Error::Sampling(
        "could not draw a surjective integrable quintuple in 100 attempts".into(),
    ))
}

/// Transpose involution `(a1, a2, b, c) -> (a2^T, a1^T, c^T, b^T)`.
///
/// Preserves integrability exactly (the defect maps to its transpose)
/// while swapping the roles of `b` and `c`, so it converts data that can
/// only flow to one sign of the level into data for the opposite sign.
pub fn transpose_s4(m: &AdhmDatumS4) -> Result<AdhmDatumS4> {
    AdhmDatumS4::new(
        m.a2.transpose(),
        m.a1.transpose(),
        m.c.transpose(),
        m.b.transpose(),
    )
}

/// Transpose involution `(a1, a2, d, b, c) -> (a2^T, a1^T, d^T, c^T, b^T)`,
/// the quintuple analogue of [`transpose_s4`]: integrability maps to its
/// transpose while `b` and `c` swap roles.
pub fn transpose_p2(m: &MonadDatumP2) -> Result<MonadDatumP2> {
    MonadDatumP2::new(
        m.a2.transpose(),
        m.a1.transpose(),
        m.d.transpose(),
        m.c.transpose(),
        m.b.transpose(),
    )
}

/// Draws integrable quadruples and flows them until one converges onto
/// the level, retrying with fresh derived seeds.
///
/// Each attempt also tries the [`transpose_s4`] start: `k = 1` samples
/// always have `c = 0` and can only reach nonnegative levels, while the
/// transposed branch covers the nonpositive ones.
pub fn sample_solution_s4(
    k: usize,
    r: usize,
    level: &LevelS4,
    cfg: &FlowConfig,
    seed: u64,
    attempts: usize,
) -> Result<(AdhmDatumS4, FlowReport)> {
    for attempt in 0..attempts {
        let start = random_integrable_s4(k, r, derive_seed(seed, attempt as u64), 1.0)?;
        if let Ok((m, report)) = kempf_ness_flow_s4(&start, level, cfg) {
            if report.converged {
                return Ok((m, report));
            }
        }
        let mirrored = transpose_s4(&start)?;
        if let Ok((m, report)) = kempf_ness_flow_s4(&mirrored, level, cfg) {
            if report.converged {
                return Ok((m, report));
            }
        }
    }
    Err(Error::Numerical(format!(
        "no quadruple flow converged onto the level in {attempts} attempts"
    )))
}

/// Draws integrable quintuples and flows them until one converges onto
/// the level, retrying with fresh derived seeds; the [`transpose_p2`]
/// start is tried as well, exactly as in the quadruple case.
///
/// Starts are drawn at entry scale `1/sqrt(2k + r)`: the solution torus
/// sits at `||a1||^2 + ||a2||^2 + ||b||^2 = k` by the trace identity, and
/// starting near that size keeps the descent well conditioned where
/// unit-scale draws of large `k` need very long group-direction journeys.
pub fn sample_solution_p2(
    k: usize,
    r: usize,
    level: &LevelP2,
    cfg: &FlowConfig,
    seed: u64,
    attempts: usize,
) -> Result<(MonadDatumP2, FlowReport)> {
    let scale = 1.0 / ((2 * k + r) as f64).sqrt();
    for attempt in 0..attempts {
        let start = random_integrable_p2(k, r, derive_seed(seed, attempt as u64), scale)?;
        if let Ok((m, report)) = kempf_ness_flow_p2(&start, level, cfg) {
            if report.converged {
                return Ok((m, report));
            }
        }
        if let Ok(mirrored) = transpose_p2(&start) {
            if let Ok((m, report)) = kempf_ness_flow_p2(&mirrored, level, cfg) {
                if report.converged {
                    return Ok((m, report));
                }
            }
        }
    }
    Err(Error::Numerical(format!(
        "no quintuple flow converged onto the level in {attempts} attempts"
    )))
}

/// Gradient of `F = ||mu(m) - target||^2` over Hermitian group directions:
/// `dF/ds` along `exp(s h) . m` equals `2 <h, G>` with
/// `G = sum_i ([a_i, [a_i*, E]] + [a_i*, [a_i, E]]) + {E, b b*} + {E, c* c}`
/// and `E = mu(m) - target`.
fn gradient_s4(m: &AdhmDatumS4, e: &CMat) -> CMat {
    let mut g = CMat::zeros(m.k, m.k);
    for a in [&m.a1, &m.a2] {
        let ah = a.adjoint();
        g += commutator(a, &commutator(&ah, e)) + commutator(&ah, &commutator(a, e));
    }
    let bb = &m.b * m.b.adjoint();
    let cc = m.c.adjoint() * &m.c;
    g += e * &bb + &bb * e + e * &cc + &cc * e;
    hermitian_part(&g)
}

/// Pair-group gradient of `F = ||mu0||^2 + ||mu1 - zeta 1||^2`:
/// with `E0 = mu0`, `E1 = mu1 - zeta 1`, `D_i = d a_i`,
///
/// ```text
/// G0 = {a1 a1* + a2 a2* + b b*, E0} - 2 sum_i a_i E1 a_i*,
/// G1 = -2 sum_i a_i* E0 a_i
///      + sum_i ([D_i, [D_i*, E1]] + [D_i*, [D_i, E1]])
///      + {a1* a1 + a2* a2 + (db)(db)* + c* c, E1}.
/// ```
fn gradient_p2(m: &MonadDatumP2, e0: &CMat, e1: &CMat) -> (CMat, CMat) {
    let aa = &m.a1 * m.a1.adjoint() + &m.a2 * m.a2.adjoint() + &m.b * m.b.adjoint();
    let cross0 = &m.a1 * e1 * m.a1.adjoint() + &m.a2 * e1 * m.a2.adjoint();
    let g0 = e0 * &aa + &aa * e0 - cross0.map(|z| z * 2.0);

    let db = &m.d * &m.b;
    let x = m.a1.adjoint() * &m.a1
        + m.a2.adjoint() * &m.a2
        + &db * db.adjoint()
        + m.c.adjoint() * &m.c;
    let cross1 = m.a1.adjoint() * e0 * &m.a1 + m.a2.adjoint() * e0 * &m.a2;
    let mut g1 = e1 * &x + &x * e1 - cross1.map(|z| z * 2.0);
    for dd in [&m.d * &m.a1, &m.d * &m.a2] {
        let ddh = dd.adjoint();
        g1 += commutator(&dd, &commutator(&ddh, e1)) + commutator(&ddh, &commutator(&dd, e1));
    }
    (hermitian_part(&g0), hermitian_part(&g1))
}

/// Shared line-search bookkeeping: accepted-step state transitions.
struct FlowState {
    step: f64,
    group_norm: f64,
    iterations: usize,
    stall_run: usize,
}

/// Kempf-Ness gradient flow for quadruple data: descends
/// `F = ||mu(g . m) + zeta 1||^2` over Hermitian directions, moving by
/// `exp(-s G)` with a backtracking Armijo line search. The objective is
/// non-increasing at every accepted step. Integrability is conserved by
/// equivariance and re-verified at exit.
///
/// Returns the final iterate and a [`FlowReport`]; the input must be
/// integrable.
pub fn kempf_ness_flow_s4(
    m: &AdhmDatumS4,
    level: &LevelS4,
    cfg: &FlowConfig,
) -> Result<(AdhmDatumS4, FlowReport)> {
    cfg.validate()?;
    let integ0 = integrability_residual_s4(m);
    // Scalar conjugation is trivial, so k <= 1 data keep their defect
    // exactly whatever its value; larger data must start integrable for
    // the flow to conserve the equation.
    if m.k > 1 && integ0 > 1e-8 * (1.0 + m.norm().powi(2)) {
        return Err(Error::Precondition(format!(
            "flow input must be integrable, residual {integ0:.3e}"
        )));
    }
    let mut cur = m.clone();
    let mut res = level_residual_s4(&cur, level);
    let mut f = res * res;
    let mut st = FlowState {
        step: cfg.step0,
        group_norm: 0.0,
        iterations: 0,
        stall_run: 0,
    };
    let mut instability = false;

    while res > cfg.tol && st.iterations < cfg.max_iter {
        let e = moment_s4(&cur) - level.target(cur.k);
        let g = gradient_s4(&cur, &e);
        let gnorm2 = fro(&g).powi(2);
        // Only an exactly critical point stops the search: escaping
        // orbits keep a tiny but nonzero gradient, and cutting them off
        // early would mask the instability diagnosis.
        if gnorm2 == 0.0 {
            break;
        }
        let mut s = st.step;
        let mut accepted = None;
        while s > 1e-18 * cfg.step0 {
            // An overflowing trial (exp of a large step) counts as a
            // rejection, not a hard error.
            let trial = hermitian_exp(&g.map(|z| z * (-s)))
                .and_then(|flow_g| act_s4(&flow_g, &cur));
            if let Ok(cand) = trial {
                let cand_res = level_residual_s4(&cand, level);
                let cand_f = cand_res * cand_res;
                if cand_f.is_finite() && cand_f <= f - ARMIJO * s * 2.0 * gnorm2 {
                    accepted = Some((cand, cand_res, cand_f, s));
                    break;
                }
            }
            s *= cfg.backtrack;
        }
        let Some((cand, cand_res, cand_f, s)) = accepted else {
            break;
        };
        debug_assert!(cand_f <= f);
        st.stall_run = if f - cand_f <= REL_STALL * f { st.stall_run + 1 } else { 0 };
        cur = cand;
        res = cand_res;
        f = cand_f;
        st.group_norm += s * gnorm2.sqrt();
        st.step = s * cfg.grow;
        st.iterations += 1;
        if st.group_norm > INSTABILITY_NORM {
            instability = true;
            break;
        }
        if st.stall_run >= cfg.stall_window {
            break;
        }
    }

    let drift = (integrability_residual_s4(&cur) - integ0).abs();
    let drift_bound = 1e-9 * (1.0 + m.norm().powi(3) + cur.norm().powi(3));
    if drift > drift_bound {
        return Err(Error::Numerical(format!(
            "integrability drifted by {drift:.3e} along the flow"
        )));
    }
    let converged = res <= cfg.tol;
    Ok((
        cur,
        FlowReport {
            converged,
            iterations: st.iterations,
            final_residual: res,
            group_norm: st.group_norm,
            instability_flag: instability && !converged,
        },
    ))
}

/// Kempf-Ness flow for quintuple data over the pair group, with the same
/// contract as the quadruple flow; additionally requires the surjectivity
/// check to hold on entry and re-checks it (and the integrability drift)
/// after every accepted step, treating a loss of surjectivity as orbit
/// degeneration.
pub fn kempf_ness_flow_p2(
    m: &MonadDatumP2,
    level: &LevelP2,
    cfg: &FlowConfig,
) -> Result<(MonadDatumP2, FlowReport)> {
    flow_p2_with(m, level, cfg, |_| {})
}

/// Flow core with an observer invoked on every accepted iterate (used by
/// [`resolution_project`] to trace the collapse map).
fn flow_p2_with(
    m: &MonadDatumP2,
    level: &LevelP2,
    cfg: &FlowConfig,
    mut observe: impl FnMut(&MonadDatumP2),
) -> Result<(MonadDatumP2, FlowReport)> {
    cfg.validate()?;
    let integ0 = integrability_residual_p2(m);
    if integ0 > 1e-8 * (1.0 + m.norm().powi(2)) {
        return Err(Error::Precondition(format!(
            "flow input must be integrable, residual {integ0:.3e}"
        )));
    }
    if surjectivity_check(m, Tolerance::default()).verdict != Verdict::Holds {
        return Err(Error::Precondition(
            "flow input must pass the surjectivity check".into(),
        ));
    }
    let mut cur = m.clone();
    let mut res = level_residual_p2(&cur, level);
    let mut f = res * res;
    let mut st = FlowState {
        step: cfg.step0,
        group_norm: 0.0,
        iterations: 0,
        stall_run: 0,
    };
    let mut instability = false;

    while res > cfg.tol && st.iterations < cfg.max_iter {
        let (mu0, mu1) = moment_p2(&cur);
        let e0 = mu0;
        let e1 = mu1 - level.target1(cur.k);
        let (g0, g1) = gradient_p2(&cur, &e0, &e1);
        let gnorm2 = fro(&g0).powi(2) + fro(&g1).powi(2);
        if gnorm2 == 0.0 {
            break;
        }
        let mut s = st.step;
        let mut accepted = None;
        while s > 1e-18 * cfg.step0 {
            let trial = hermitian_exp(&g0.map(|z| z * (-s))).and_then(|f0| {
                let f1 = hermitian_exp(&g1.map(|z| z * (-s)))?;
                act_p2(&f0, &f1, &cur)
            });
            if let Ok(cand) = trial {
                let cand_res = level_residual_p2(&cand, level);
                let cand_f = cand_res * cand_res;
                if cand_f.is_finite() && cand_f <= f - ARMIJO * s * 2.0 * gnorm2 {
                    accepted = Some((cand, cand_res, cand_f, s));
                    break;
                }
            }
            s *= cfg.backtrack;
        }
        let Some((cand, cand_res, cand_f, s)) = accepted else {
            break;
        };
        debug_assert!(cand_f <= f);
        st.stall_run = if f - cand_f <= REL_STALL * f { st.stall_run + 1 } else { 0 };
        cur = cand;
        res = cand_res;
        f = cand_f;
        st.group_norm += s * gnorm2.sqrt();
        st.step = s * cfg.grow;
        st.iterations += 1;
        observe(&cur);

        let drift = (integrability_residual_p2(&cur) - integ0).abs();
        if drift > 1e-9 * (1.0 + m.norm().powi(3) + cur.norm().powi(3)) {
            return Err(Error::Numerical(format!(
                "integrability drifted by {drift:.3e} along the flow"
            )));
        }
        if surjectivity_check(&cur, Tolerance::default()).verdict != Verdict::Holds {
            instability = true;
            break;
        }
        if st.group_norm > INSTABILITY_NORM {
            instability = true;
            break;
        }
        if st.stall_run >= cfg.stall_window {
            break;
        }
    }

    let converged = res <= cfg.tol;
    Ok((
        cur,
        FlowReport {
            converged,
            iterations: st.iterations,
            final_residual: res,
            group_norm: st.group_norm,
            instability_flag: instability && !converged,
        },
    ))
}

/// Constraint vector for the quadruple variety: integrability defect and
/// moment-level defect, realified.
fn constraints_s4(m: &AdhmDatumS4, level: &LevelS4) -> Vec<f64> {
    crate::adhm_s4::realify_stack(&[
        integrability_matrix_s4(m),
        moment_s4(m) - level.target(m.k),
    ])
}

fn constraints_p2(m: &MonadDatumP2, level: &LevelP2) -> Vec<f64> {
    let (mu0, mu1) = moment_p2(m);
    crate::adhm_s4::realify_stack(&[
        integrability_matrix_p2(m),
        mu0,
        mu1 - level.target1(m.k),
    ])
}

/// Forward-difference Jacobian over the real coordinates of `mats`,
/// with step `1e-6 * (1 + ||m||)`; the constraint polynomials are at
/// most cubic, so the truncation error stays controlled.
fn fd_jacobian<M: Clone>(
    m: &M,
    norm: f64,
    mats: &[fn(&mut M) -> &mut CMat],
    constraints: impl Fn(&M) -> Vec<f64>,
) -> RMat {
    let base = constraints(m);
    let eps = 1e-6 * (1.0 + norm);
    let mut cols = Vec::new();
    for accessor in mats {
        let shape = {
            let mut probe = m.clone();
            let mm = accessor(&mut probe);
            (mm.nrows(), mm.ncols())
        };
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                for part in 0..2 {
                    let mut bumped = m.clone();
                    {
                        let mm = accessor(&mut bumped);
                        mm[(i, j)] += if part == 0 { c(eps, 0.0) } else { c(0.0, eps) };
                    }
                    let shifted = constraints(&bumped);
                    let col: Vec<f64> = shifted
                        .iter()
                        .zip(base.iter())
                        .map(|(s, b)| (s - b) / eps)
                        .collect();
                    cols.push(col);
                }
            }
        }
    }
    let rows = base.len();
    let mut jac = RMat::zeros(rows, cols.len());
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            jac[(i, j)] = *v;
        }
    }
    jac
}

/// Real dimension of the quadruple solution variety at `m`, transverse to
/// the group orbit: the nullity of the finite-difference constraint
/// Jacobian minus the orbit dimension (group dimension `k^2` minus the
/// stabilizer dimension). Equals `4 k r` at smooth free points. The
/// input must be integrable and on-level (residual below `1e-6`);
/// `tol` sets the Jacobian rank cutoff (relative `1e-3` is a robust
/// choice against the `1e-6` difference step).
pub fn tangent_dimension_s4(m: &AdhmDatumS4, level: &LevelS4, tol: Tolerance) -> Result<usize> {
    if level_residual_s4(m, level) > ON_LEVEL || integrability_residual_s4(m) > ON_LEVEL {
        return Err(Error::Precondition(
            "tangent dimension needs an integrable on-level point".into(),
        ));
    }
    let accessors: [fn(&mut AdhmDatumS4) -> &mut CMat; 4] = [
        |m| &mut m.a1,
        |m| &mut m.a2,
        |m| &mut m.b,
        |m| &mut m.c,
    ];
    let jac = fd_jacobian(m, m.norm(), &accessors, |m| constraints_s4(m, level));
    let nullity = jac.ncols() - real_rank(&jac, tol);
    let orbit = m.k * m.k - stabilizer_dim_s4(m, Tolerance::default());
    nullity.checked_sub(orbit).ok_or_else(|| {
        Error::Numerical("constraint nullity smaller than the orbit dimension".into())
    })
}

/// Quintuple version of [`tangent_dimension_s4`] over the pair group
/// (dimension `2 k^2`).
pub fn tangent_dimension_p2(m: &MonadDatumP2, level: &LevelP2, tol: Tolerance) -> Result<usize> {
    if level_residual_p2(m, level) > ON_LEVEL || integrability_residual_p2(m) > ON_LEVEL {
        return Err(Error::Precondition(
            "tangent dimension needs an integrable on-level point".into(),
        ));
    }
    let accessors: [fn(&mut MonadDatumP2) -> &mut CMat; 5] = [
        |m| &mut m.a1,
        |m| &mut m.a2,
        |m| &mut m.d,
        |m| &mut m.b,
        |m| &mut m.c,
    ];
    let jac = fd_jacobian(m, m.norm(), &accessors, |m| constraints_p2(m, level));
    let nullity = jac.ncols() - real_rank(&jac, tol);
    let orbit = 2 * m.k * m.k - stabilizer_dim_p2(m, Tolerance::default());
    nullity.checked_sub(orbit).ok_or_else(|| {
        Error::Numerical("constraint nullity smaller than the orbit dimension".into())
    })
}

/// Decides whether the linear system
/// `c x = 0`, `x b = 0`, `a1 x a2 - a2 x a1 = 0`, `x a_i d - d a_i x = 0`
/// on `x: W0 -> W1` has only the trivial solution. A trivial nullspace
/// certifies the surjectivity of the constraint differential behind the
/// `4kr` dimension count. On failure the witness spans the nullspace,
/// column-major vectorized (ambient `k^2`).
pub fn df_surjectivity_check(m: &MonadDatumP2, tol: Tolerance) -> CheckResult {
    let k = m.k;
    if k == 0 {
        return CheckResult::holds();
    }
    let blocks = |x: &CMat| -> Vec<CMat> {
        vec![
            &m.c * x,
            x * &m.b,
            &m.a1 * x * &m.a2 - &m.a2 * x * &m.a1,
            x * &m.a1 * &m.d - &m.d * &m.a1 * x,
            x * &m.a2 * &m.d - &m.d * &m.a2 * x,
        ]
    };
    let rows: usize = blocks(&CMat::zeros(k, k)).iter().map(|b| b.len()).sum();
    let mut sys = CMat::zeros(rows, k * k);
    for q in 0..k {
        for p in 0..k {
            let mut basis = CMat::zeros(k, k);
            basis[(p, q)] = c(1.0, 0.0);
            let col = q * k + p;
            let mut at = 0;
            for block in blocks(&basis) {
                for z in block.iter() {
                    sys[(at, col)] = *z;
                    at += 1;
                }
            }
        }
    }
    let kernel = nullspace_basis(&sys, tol);
    if kernel.ncols() == 0 {
        CheckResult::holds()
    } else {
        CheckResult::fails_with(Witness::One(Subspace::from_orthonormal(kernel)))
    }
}

/// Norm traces used in boundedness arguments for the level set
/// `(mu0, mu1) = (0, zeta 1)`.
///
/// On-level these satisfy two trace identities:
/// `a1_norm_sq + a2_norm_sq + b_norm_sq = k` and
/// `collapse_combination = k (1 - zeta) - a1_norm_sq - a2_norm_sq`,
/// where `collapse_combination = ||d a1||^2 + ||d a2||^2 + ||c||^2 - ||d||^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessTrace {
    pub a1_norm_sq: f64,
    pub a2_norm_sq: f64,
    pub b_norm_sq: f64,
    pub collapse_combination: f64,
}

pub fn boundedness_trace(m: &MonadDatumP2, level: &LevelP2) -> Result<BoundednessTrace> {
    if level_residual_p2(m, level) > ON_LEVEL {
        return Err(Error::Precondition(
            "boundedness traces are defined on-level only".into(),
        ));
    }
    let da1 = &m.d * &m.a1;
    let da2 = &m.d * &m.a2;
    Ok(BoundednessTrace {
        a1_norm_sq: fro(&m.a1).powi(2),
        a2_norm_sq: fro(&m.a2).powi(2),
        b_norm_sq: fro(&m.b).powi(2),
        collapse_combination: fro(&da1).powi(2) + fro(&da2).powi(2) + fro(&m.c).powi(2)
            - fro(&m.d).powi(2),
    })
}

/// Result of flowing a `(0, zeta)`-level point down to the `(0, 0)` level.
///
/// `p_trace` records `||p(m_t)||` at the start and after each accepted
/// step; `p_growth_monotone` is set when the trace is non-decreasing (up
/// to 0.1% dips) and strictly grew overall, the signature of an escaping
/// orbit; `boundary_flag` marks outputs whose collapse image is the zero
/// datum (an ideal point of the coarse model).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolutionOutcome {
    pub output: MonadDatumP2,
    pub report: FlowReport,
    pub collapsed: AdhmDatumS4,
    pub p_trace: Vec<f64>,
    pub p_growth_monotone: bool,
    pub boundary_flag: bool,
}

pub fn resolution_project(
    m: &MonadDatumP2,
    level: &LevelP2,
    cfg: &FlowConfig,
) -> Result<ResolutionOutcome> {
    if level_residual_p2(m, level) > ON_LEVEL {
        return Err(Error::Precondition(
            "resolution experiments start from an on-level point".into(),
        ));
    }
    let origin = LevelP2::new(0.0).expect("zero level is valid");
    let mut trace = vec![p_map(m)?.norm()];
    let (output, report) = flow_p2_with(m, &origin, cfg, |cur| {
        let q = p_map(cur).expect("iterates stay well-formed");
        trace.push(q.norm());
    })?;
    let collapsed = p_map(&output)?;
    let p_final = collapsed.norm();
    let boundary_flag = p_final <= 1e-6 * (1.0 + output.norm());
    let nondecreasing = trace
        .windows(2)
        .all(|w| w[1] >= w[0] * (1.0 - 1e-3) - 1e-12);
    let grew = trace.last().copied().unwrap_or(0.0)
        > trace.first().copied().unwrap_or(0.0) * (1.0 + 1e-6) + 1e-9;
    Ok(ResolutionOutcome {
        output,
        report,
        collapsed,
        p_trace: trace,
        p_growth_monotone: nondecreasing && grew,
        boundary_flag,
    })
}
