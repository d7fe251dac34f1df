//! Rank-stabilization embeddings and explicit null-homotopies.
//!
//! Enlarging the framing space from `C^r` to `C^r'` by zero padding
//! embeds each moduli problem into the next. Within the enlarged frame
//! the embedded configuration can be slid along an explicit path to a
//! configuration that no longer depends on the input: on the quadruple
//! side a single path does it, on the quintuple side a two-stage path
//! (first rotate the identity blocks in, then shrink `d` away) reaches
//! the constant configuration. Every path point stays on the original
//! moment level with zero integrability defect, by block algebra rather
//! than by approximation, and carries identity blocks inside `b_t` and
//! `c_t` that force the regularity conditions to hold for `t > 0`.
//!
//! [`verify_null_homotopy_s4`] and [`verify_null_homotopy_p2`] walk a
//! grid of path times and report the worst residuals, the endpoint
//! identities, and any regularity failures.

use serde::{Deserialize, Serialize};

use crate::adhm_s4::{
    check_c1_s4, check_c2_s4, integrability_residual_s4, level_residual_s4, AdhmDatumS4, LevelS4,
};
use crate::check::Verdict;
use crate::error::{Error, Result};
use crate::linalg::{CMat, Tolerance};
use crate::monad_p2::{
    check_c1p, check_c2p, integrability_residual_p2, level_residual_p2, LevelP2, MonadDatumP2,
};

/// Level residual above which an input no longer counts as on-level.
const ON_LEVEL: f64 = 1e-6;

/// Splitting of the level value into two positive weights, one for the
/// `b`-side identity block and one for the `c`-side, with
/// `zeta_c - zeta_b` equal to the ambient level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub zeta_b: f64,
    pub zeta_c: f64,
}

impl SplitParams {
    pub fn new(zeta_b: f64, zeta_c: f64) -> Result<Self> {
        if zeta_b.is_finite() && zeta_b > 0.0 && zeta_c.is_finite() && zeta_c > 0.0 {
            Ok(SplitParams { zeta_b, zeta_c })
        } else {
            Err(Error::Config(format!(
                "split weights must be positive, got zeta_b={zeta_b}, zeta_c={zeta_c}"
            )))
        }
    }

    /// Default split for a level: `zeta_b = max(1, 1 - zeta)`, which is
    /// positive for every finite `zeta` and keeps both weights order one.
    pub fn for_level(level: &LevelS4) -> Self {
        let zeta_b = 1f64.max(1.0 - level.zeta);
        SplitParams {
            zeta_b,
            zeta_c: zeta_b + level.zeta,
        }
    }

    /// The level value this split encodes.
    pub fn zeta(&self) -> f64 {
        self.zeta_c - self.zeta_b
    }
}

fn check_t(t: f64) -> Result<()> {
    if t.is_finite() && (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Config(format!("path time must lie in [0, 1], got {t}")))
    }
}

/// Horizontal concatenation; all blocks must share a row count.
fn hcat(blocks: &[&CMat]) -> CMat {
    let rows = blocks[0].nrows();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for block in blocks {
        out.view_mut((0, at), (rows, block.ncols())).copy_from(*block);
        at += block.ncols();
    }
    out
}

/// Vertical concatenation; all blocks must share a column count.
fn vcat(blocks: &[&CMat]) -> CMat {
    let cols = blocks[0].ncols();
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for block in blocks {
        out.view_mut((at, 0), (block.nrows(), cols)).copy_from(*block);
        at += block.nrows();
    }
    out
}

fn scaled_identity(k: usize, factor: f64) -> CMat {
    CMat::identity(k, k).map(|z| z * factor)
}

/// Zero-pads the framing maps to a larger framing space: `b` gains zero
/// columns on the right, `c` zero rows below. Moment and integrability
/// values are unchanged exactly.
pub fn embed_s4(m: &AdhmDatumS4, r_new: usize) -> Result<AdhmDatumS4> {
    if r_new < m.r {
        return Err(Error::Shape(format!(
            "embedding cannot shrink the framing space: r={} > r_new={r_new}",
            m.r
        )));
    }
    let pad_b = CMat::zeros(m.k, r_new - m.r);
    let pad_c = CMat::zeros(r_new - m.r, m.k);
    AdhmDatumS4::new(
        m.a1.clone(),
        m.a2.clone(),
        hcat(&[&m.b, &pad_b]),
        vcat(&[&m.c, &pad_c]),
    )
}

/// Quintuple analogue of [`embed_s4`]; `a1, a2, d` are untouched.
pub fn embed_p2(m: &MonadDatumP2, r_new: usize) -> Result<MonadDatumP2> {
    if r_new < m.r {
        return Err(Error::Shape(format!(
            "embedding cannot shrink the framing space: r={} > r_new={r_new}",
            m.r
        )));
    }
    let pad_b = CMat::zeros(m.k, r_new - m.r);
    let pad_c = CMat::zeros(r_new - m.r, m.k);
    MonadDatumP2::new(
        m.a1.clone(),
        m.a2.clone(),
        m.d.clone(),
        hcat(&[&m.b, &pad_b]),
        vcat(&[&m.c, &pad_c]),
    )
}

/// Path from the embedded quadruple to a constant configuration inside
/// the `r + 2k` frame:
///
/// ```text
/// h_t = (sqrt(1-t) a1,  sqrt(1-t) a2,
///        [sqrt(1-t) b | 0_k | sqrt(t zeta_b) 1],
///        [sqrt(1-t) c ; sqrt(t zeta_c) 1 ; 0_k])
/// ```
///
/// Block algebra gives `mu(h_t) = (1-t) mu(m) - t (zeta_c - zeta_b) 1`
/// and integrability defect `(1-t)` times the input's, so on-level input
/// stays on-level for every `t`. At `t = 0` this is exactly the zero
/// padding; at `t = 1` the output does not depend on `m`.
pub fn homotopy_s4(
    m: &AdhmDatumS4,
    level: &LevelS4,
    t: f64,
    split: &SplitParams,
) -> Result<AdhmDatumS4> {
    check_t(t)?;
    if (split.zeta() - level.zeta).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "split encodes level {}, expected {}",
            split.zeta(),
            level.zeta
        )));
    }
    if level_residual_s4(m, level) > ON_LEVEL * (1.0 + m.norm().powi(2)) {
        return Err(Error::Precondition("homotopy input must be on-level".into()));
    }
    let k = m.k;
    let fade = (1.0 - t).sqrt();
    let b = hcat(&[
        &m.b.map(|z| z * fade),
        &CMat::zeros(k, k),
        &scaled_identity(k, (t * split.zeta_b).sqrt()),
    ]);
    let cc = vcat(&[
        &m.c.map(|z| z * fade),
        &scaled_identity(k, (t * split.zeta_c).sqrt()),
        &CMat::zeros(k, k),
    ]);
    AdhmDatumS4::new(m.a1.map(|z| z * fade), m.a2.map(|z| z * fade), b, cc)
}

fn require_unit_interval_level(level: &LevelP2) -> Result<()> {
    if level.zeta > 0.0 && level.zeta < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "quintuple homotopies require 0 < zeta < 1, got {}",
            level.zeta
        )))
    }
}

/// First quintuple path, from the embedded datum to `f(m)` inside the
/// `r + 3k` frame:
///
/// ```text
/// h_t = (sqrt(1-t) a1,  sqrt(1-t) a2,  d,
///        [sqrt(1-t) b | 0_k | sqrt(t) 1 | 0_k],
///        [sqrt(1-t) c ; sqrt(t) d* ; 0_k ; sqrt(t (1-zeta)) 1])
/// ```
///
/// Block algebra: `mu0(h_t) = (1-t) mu0(m)`, `mu1(h_t) = (1-t) mu1(m)
/// + t zeta 1`, defect `(1-t)` times the input's; on-level input stays
/// on `(0, zeta)` for every `t`. The `d d*` contributions of the
/// `sqrt(t) 1` column of `b_t` and the `sqrt(t) d*` row of `c_t` cancel,
/// which is what lets `d` ride along unscaled.
pub fn homotopy_p2_h(m: &MonadDatumP2, level: &LevelP2, t: f64) -> Result<MonadDatumP2> {
    check_t(t)?;
    require_unit_interval_level(level)?;
    if level_residual_p2(m, level) > ON_LEVEL * (1.0 + m.norm().powi(2)) {
        return Err(Error::Precondition("homotopy input must be on-level".into()));
    }
    let k = m.k;
    let fade = (1.0 - t).sqrt();
    let b = hcat(&[
        &m.b.map(|z| z * fade),
        &CMat::zeros(k, k),
        &scaled_identity(k, t.sqrt()),
        &CMat::zeros(k, k),
    ]);
    let cc = vcat(&[
        &m.c.map(|z| z * fade),
        &m.d.adjoint().map(|z| z * t.sqrt()),
        &CMat::zeros(k, k),
        &scaled_identity(k, (t * (1.0 - level.zeta)).sqrt()),
    ]);
    MonadDatumP2::new(
        m.a1.map(|z| z * fade),
        m.a2.map(|z| z * fade),
        m.d.clone(),
        b,
        cc,
    )
}

/// Second quintuple path, from `f(m)` to the constant configuration:
///
/// ```text
/// htilde_t = (0, 0, (1-t) d,
///             [0_r | 0_k | 1 | 0_k],
///             [0_r ; (1-t) d* ; 0_k ; sqrt(1-zeta) 1])
/// ```
///
/// With the `a`'s gone, `mu0 = 1 - 1 = 0` from the identity block alone
/// and the `(1-t)^2 d d*` terms of `mu1` cancel, so the whole path sits
/// on `(0, zeta)` regardless of `m`. `htilde_0` equals `h_1` and
/// `htilde_1` is independent of `m`.
pub fn homotopy_p2_htilde(m: &MonadDatumP2, level: &LevelP2, t: f64) -> Result<MonadDatumP2> {
    check_t(t)?;
    require_unit_interval_level(level)?;
    if level_residual_p2(m, level) > ON_LEVEL * (1.0 + m.norm().powi(2)) {
        return Err(Error::Precondition("homotopy input must be on-level".into()));
    }
    let k = m.k;
    let b = hcat(&[
        &CMat::zeros(k, m.r),
        &CMat::zeros(k, k),
        &CMat::identity(k, k),
        &CMat::zeros(k, k),
    ]);
    let cc = vcat(&[
        &CMat::zeros(m.r, k),
        &m.d.adjoint().map(|z| z * (1.0 - t)),
        &CMat::zeros(k, k),
        &scaled_identity(k, (1.0 - level.zeta).sqrt()),
    ]);
    MonadDatumP2::new(
        CMat::zeros(k, k),
        CMat::zeros(k, k),
        m.d.map(|z| z * (1.0 - t)),
        b,
        cc,
    )
}

/// The `t = 1` quadruple configuration, which depends only on the
/// shape and the split.
pub fn constant_configuration_s4(k: usize, r: usize, split: &SplitParams) -> Result<AdhmDatumS4> {
    AdhmDatumS4::new(
        CMat::zeros(k, k),
        CMat::zeros(k, k),
        hcat(&[
            &CMat::zeros(k, r),
            &CMat::zeros(k, k),
            &scaled_identity(k, split.zeta_b.sqrt()),
        ]),
        vcat(&[
            &CMat::zeros(r, k),
            &scaled_identity(k, split.zeta_c.sqrt()),
            &CMat::zeros(k, k),
        ]),
    )
}

/// The final quintuple configuration of the two-stage path.
pub fn constant_configuration_p2(k: usize, r: usize, level: &LevelP2) -> Result<MonadDatumP2> {
    require_unit_interval_level(level)?;
    MonadDatumP2::new(
        CMat::zeros(k, k),
        CMat::zeros(k, k),
        CMat::zeros(k, k),
        hcat(&[
            &CMat::zeros(k, r),
            &CMat::zeros(k, k),
            &CMat::identity(k, k),
            &CMat::zeros(k, k),
        ]),
        vcat(&[
            &CMat::zeros(r, k),
            &CMat::zeros(k, k),
            &CMat::zeros(k, k),
            &scaled_identity(k, (1.0 - level.zeta).sqrt()),
        ]),
    )
}

/// Which moduli problem a report refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    S4,
    P2,
}

/// Grid walk summary for one null-homotopy verification.
///
/// `endpoint_constancy` requires all endpoint identities at once: the
/// `t = 0` configuration equals the zero-padding embedding, the stage
/// boundary matches (two-stage path only), and the final configuration
/// sits within `1e-12` of the input-independent constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomotopyReport {
    pub geometry: Geometry,
    pub zeta: f64,
    pub grid: Vec<f64>,
    pub max_level_residual: f64,
    pub max_integrability_residual: f64,
    pub endpoint_constancy: bool,
    pub regularity_failures: usize,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    let ok = !grid.is_empty()
        && grid.iter().all(|t| t.is_finite() && (0.0..=1.0).contains(t))
        && grid.contains(&0.0)
        && grid.contains(&1.0);
    if ok {
        Ok(())
    } else {
        Err(Error::Config(
            "grid must consist of values in [0, 1] and contain both 0 and 1".into(),
        ))
    }
}

/// Walks the quadruple path over `grid`, recording the worst level and
/// integrability residuals, whether the endpoint identities hold, and
/// how many `t > 0` points fail a regularity check.
pub fn verify_null_homotopy_s4(
    m: &AdhmDatumS4,
    level: &LevelS4,
    grid: &[f64],
    split: &SplitParams,
) -> Result<HomotopyReport> {
    check_grid(grid)?;
    let tol = Tolerance::default();
    let mut max_level = 0f64;
    let mut max_integ = 0f64;
    let mut failures = 0;
    let mut endpoints_ok = true;
    for &t in grid {
        let h = homotopy_s4(m, level, t, split)?;
        max_level = max_level.max(level_residual_s4(&h, level));
        max_integ = max_integ.max(integrability_residual_s4(&h));
        if t > 0.0 {
            let ok = check_c1_s4(&h, tol).verdict == Verdict::Holds
                && check_c2_s4(&h, tol).verdict == Verdict::Holds;
            if !ok {
                failures += 1;
            }
        }
        if t == 0.0 && h != embed_s4(m, m.r + 2 * m.k)? {
            endpoints_ok = false;
        }
        if t == 1.0 {
            let constant = constant_configuration_s4(m.k, m.r, split)?;
            if h.distance(&constant) > 1e-12 {
                endpoints_ok = false;
            }
        }
    }
    Ok(HomotopyReport {
        geometry: Geometry::S4,
        zeta: level.zeta,
        grid: grid.to_vec(),
        max_level_residual: max_level,
        max_integrability_residual: max_integ,
        endpoint_constancy: endpoints_ok,
        regularity_failures: failures,
    })
}

/// Walks the composite quintuple path (first stage, then the `d`-fading
/// stage) over `grid`, with the same bookkeeping as the quadruple
/// version; regularity is checked at every `t > 0` of the first stage
/// and every `t` of the second.
pub fn verify_null_homotopy_p2(
    m: &MonadDatumP2,
    level: &LevelP2,
    grid: &[f64],
) -> Result<HomotopyReport> {
    check_grid(grid)?;
    let tol = Tolerance::default();
    let mut max_level = 0f64;
    let mut max_integ = 0f64;
    let mut failures = 0;
    let mut endpoints_ok = true;
    for stage in 0..2 {
        for &t in grid {
            let h = if stage == 0 {
                homotopy_p2_h(m, level, t)?
            } else {
                homotopy_p2_htilde(m, level, t)?
            };
            max_level = max_level.max(level_residual_p2(&h, level));
            max_integ = max_integ.max(integrability_residual_p2(&h));
            if stage == 1 || t > 0.0 {
                let ok = check_c1p(&h, tol).verdict == Verdict::Holds
                    && check_c2p(&h, tol).verdict == Verdict::Holds;
                if !ok {
                    failures += 1;
                }
            }
            if stage == 0 && t == 0.0 && h != embed_p2(m, m.r + 3 * m.k)? {
                endpoints_ok = false;
            }
            if stage == 1 && t == 0.0 && h != homotopy_p2_h(m, level, 1.0)? {
                endpoints_ok = false;
            }
            if stage == 1 && t == 1.0 {
                let constant = constant_configuration_p2(m.k, m.r, level)?;
                if h.distance(&constant) > 1e-12 {
                    endpoints_ok = false;
                }
            }
        }
    }
    Ok(HomotopyReport {
        geometry: Geometry::P2,
        zeta: level.zeta,
        grid: grid.to_vec(),
        max_level_residual: max_level,
        max_integrability_residual: max_integ,
        endpoint_constancy: endpoints_ok,
        regularity_failures: failures,
    })
}
