//! Gauge-field reconstruction from regular unperturbed quadruples.
//!
//! A regular datum on the zero level determines, for every point of
//! flat four-space, a pair of matrices `alpha(z)` and `beta(z)` with
//! `beta(z) alpha(z) = 0` independently of `z`. The orthogonal
//! complement of `im alpha(z)` inside `ker beta(z)` is an r-plane, and
//! an orthonormal frame `psi(z)` of it turns differentiation into a
//! gauge potential `A = psi* d psi` whose curvature is anti-self-dual.
//!
//! Conventions fixed here: coordinates `(x1, x2, x3, x4)` with complex
//! pairing `z1 = x1 + i x2`, `z2 = x3 + i x4`, orientation given by the
//! coordinate order, and the flat Euclidean Hodge star. Derivatives are
//! central differences with gauge-aligned frames, so truncation error
//! is quadratic in the step.
//!
//! [`charge_integral`] integrates the characteristic density over a
//! ball by stratified Monte Carlo plus a decay-based tail estimate and
//! reports the total charge with a statistical error bar.

use std::collections::HashMap;

use nalgebra::stack;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adhm_s4::{
    check_c1_s4, check_c2_s4, integrability_residual_s4, level_residual_s4, AdhmDatumS4, LevelS4,
};
use crate::check::Verdict;
use crate::error::{Error, Result};
use crate::flow::derive_seed;
use crate::linalg::{c, fro, hermitian_part, mat_io, nullspace_basis, CMat, Tolerance};

/// Admissible finite-difference steps.
const H_RANGE: std::ops::RangeInclusive<f64> = 1e-6..=1e-2;

/// Step used by [`charge_integral`].
const CHARGE_H: f64 = 1e-3;

/// Radial strata for the Monte Carlo ball integral.
const SHELLS: usize = 100;

/// Curvature component index pairs, in storage order.
const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Gauge data at one point: potential components `a[mu]` and curvature
/// components `f[i]` for the index pairs in [`PAIRS`] order. All ten
/// matrices are r x r and anti-Hermitian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub x: [f64; 4],
    #[serde(with = "mat_io::vec")]
    pub a: Vec<CMat>,
    #[serde(with = "mat_io::vec")]
    pub f: Vec<CMat>,
}

impl FieldPoint {
    /// Shape and anti-Hermiticity of every component.
    pub fn validate(&self) -> Result<()> {
        if self.a.len() != 4 || self.f.len() != 6 {
            return Err(Error::Shape(format!(
                "expected 4 potential and 6 curvature components, got {} and {}",
                self.a.len(),
                self.f.len()
            )));
        }
        if !self.x.iter().all(|v| v.is_finite()) {
            return Err(Error::Precondition("field point coordinates must be finite".into()));
        }
        let r = self.a[0].nrows();
        for m in self.a.iter().chain(self.f.iter()) {
            if m.nrows() != r || m.ncols() != r {
                return Err(Error::Shape(format!(
                    "field components must all be {r}x{r}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if fro(&(m + &m.adjoint())) > 1e-8 * (1.0 + fro(m)) {
                return Err(Error::Precondition(
                    "field components must be anti-Hermitian".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Ball integral of the characteristic density plus tail estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeReport {
    pub charge: f64,
    pub stderr: f64,
    pub asd_max: f64,
    pub radius: f64,
    pub samples: usize,
    pub h: f64,
}

/// Gates reconstruction on data the construction is valid for: zero
/// integrability defect, zero moment, and both regularity conditions.
fn require_regular(m: &AdhmDatumS4) -> Result<()> {
    let scale = 1.0 + m.norm().powi(2);
    if integrability_residual_s4(m) > 1e-8 * scale {
        return Err(Error::Precondition(
            "reconstruction requires an integrable datum".into(),
        ));
    }
    let level = LevelS4::new(0.0)?;
    if level_residual_s4(m, &level) > 1e-6 * scale {
        return Err(Error::Precondition(
            "reconstruction requires a datum on the zero level".into(),
        ));
    }
    let tol = Tolerance::default();
    if check_c1_s4(m, tol).verdict != Verdict::Holds
        || check_c2_s4(m, tol).verdict != Verdict::Holds
    {
        return Err(Error::Precondition(
            "reconstruction requires both regularity conditions to hold".into(),
        ));
    }
    Ok(())
}

#[allow(clippy::toplevel_ref_arg)]
fn monad_maps_unchecked(m: &AdhmDatumS4, z1: Complex64, z2: Complex64) -> (CMat, CMat) {
    let k = m.k;
    let s1 = &m.a1 - CMat::from_diagonal_element(k, k, z1);
    let s2 = &m.a2 - CMat::from_diagonal_element(k, k, z2);
    let neg_s2 = s2.map(|w| -w);
    let alpha = stack![s1; s2; m.c];
    let beta = stack![neg_s2, s1, m.b];
    (alpha, beta)
}

/// The two maps `alpha(z) = (a1 - z1; a2 - z2; c)` and
/// `beta(z) = (-(a2 - z2), a1 - z1, b)`.
///
/// Their product `beta(z) alpha(z) = [a1, a2] + b c` does not depend on
/// `z`, so it vanishes identically for integrable data.
pub fn monad_maps(m: &AdhmDatumS4, z1: Complex64, z2: Complex64) -> Result<(CMat, CMat)> {
    require_regular(m)?;
    Ok(monad_maps_unchecked(m, z1, z2))
}

#[allow(clippy::toplevel_ref_arg)]
fn fiber_frame_unchecked(
    m: &AdhmDatumS4,
    z1: Complex64,
    z2: Complex64,
    gauge_ref: Option<&CMat>,
) -> Result<CMat> {
    let (alpha, beta) = monad_maps_unchecked(m, z1, z2);
    let stacked = stack![beta; alpha.adjoint()];
    let frame = nullspace_basis(&stacked, Tolerance::default());
    if frame.ncols() != m.r {
        return Err(Error::Numerical(format!(
            "fiber degenerates at z = ({z1}, {z2}): kernel dimension {} instead of {}",
            frame.ncols(),
            m.r
        )));
    }
    let Some(reference) = gauge_ref else {
        return Ok(frame);
    };
    if reference.nrows() != frame.nrows() || reference.ncols() != m.r {
        return Err(Error::Shape(format!(
            "gauge reference must be {}x{}, got {}x{}",
            frame.nrows(),
            m.r,
            reference.nrows(),
            reference.ncols()
        )));
    }
    let overlap = frame.adjoint() * reference;
    let svd = overlap.svd(true, true);
    let smallest = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if smallest.is_nan() || smallest <= 1e-8 {
        return Err(Error::Numerical(format!(
            "gauge reference is orthogonal to the fiber at z = ({z1}, {z2})"
        )));
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok(frame * (u * v_t))
}

/// Orthonormal frame of the r-plane `ker beta(z)` minus `im alpha(z)`,
/// computed as the kernel of the stack of `beta(z)` over `alpha(z)*`.
///
/// With `gauge_ref` supplied, the frame is rotated by the unitary polar
/// factor of its overlap with the reference, the unique unitary closest
/// to matching the two frames; neighboring frames aligned to a common
/// reference then differ smoothly in `z`.
pub fn fiber_frame(
    m: &AdhmDatumS4,
    z1: Complex64,
    z2: Complex64,
    gauge_ref: Option<&CMat>,
) -> Result<CMat> {
    require_regular(m)?;
    fiber_frame_unchecked(m, z1, z2, gauge_ref)
}

fn skew_part(m: &CMat) -> CMat {
    m - hermitian_part(m)
}

fn offset_point(x: &[f64; 4], off: &[i8; 4], h: f64) -> [f64; 4] {
    [
        x[0] + h * off[0] as f64,
        x[1] + h * off[1] as f64,
        x[2] + h * off[2] as f64,
        x[3] + h * off[3] as f64,
    ]
}

/// Central-difference potential component `A_nu` at a stencil offset,
/// from frames sharing one gauge reference.
fn potential_component(
    frames: &HashMap<[i8; 4], CMat>,
    base: [i8; 4],
    nu: usize,
    h: f64,
) -> CMat {
    let mut up = base;
    up[nu] += 1;
    let mut down = base;
    down[nu] -= 1;
    let slope = (&frames[&up] - &frames[&down]).map(|w| w * (0.5 / h));
    skew_part(&(frames[&base].adjoint() * slope))
}

fn gauge_field_unchecked(m: &AdhmDatumS4, x: [f64; 4], h: f64) -> Result<FieldPoint> {
    if !(h.is_finite() && H_RANGE.contains(&h)) {
        return Err(Error::Config(format!(
            "difference step must lie in [1e-6, 1e-2], got {h}"
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Config("evaluation point must be finite".into()));
    }
    let reference = fiber_frame_unchecked(m, c(x[0], x[1]), c(x[2], x[3]), None)?;

    // Frames at the center, one step out, and the mixed double steps,
    // all in the gauge of the central frame.
    let mut frames: HashMap<[i8; 4], CMat> = HashMap::new();
    frames.insert([0; 4], reference.clone());
    let mut offsets: Vec<[i8; 4]> = Vec::with_capacity(32);
    for mu in 0..4 {
        for s in [-1i8, 1] {
            let mut o = [0i8; 4];
            o[mu] = s;
            offsets.push(o);
            for nu in 0..4 {
                if nu == mu {
                    continue;
                }
                for s2 in [-1i8, 1] {
                    let mut o2 = o;
                    o2[nu] = s2;
                    offsets.push(o2);
                }
            }
        }
    }
    for off in offsets {
        if frames.contains_key(&off) {
            continue;
        }
        let y = offset_point(&x, &off, h);
        let frame = fiber_frame_unchecked(m, c(y[0], y[1]), c(y[2], y[3]), Some(&reference))?;
        frames.insert(off, frame);
    }

    let a: Vec<CMat> = (0..4)
        .map(|nu| potential_component(&frames, [0; 4], nu, h))
        .collect();
    let mut f = Vec::with_capacity(6);
    for &(mu, nu) in &PAIRS {
        let mut up_mu = [0i8; 4];
        up_mu[mu] = 1;
        let mut down_mu = [0i8; 4];
        down_mu[mu] = -1;
        let d_mu_a_nu = (potential_component(&frames, up_mu, nu, h)
            - potential_component(&frames, down_mu, nu, h))
        .map(|w| w * (0.5 / h));
        let mut up_nu = [0i8; 4];
        up_nu[nu] = 1;
        let mut down_nu = [0i8; 4];
        down_nu[nu] = -1;
        let d_nu_a_mu = (potential_component(&frames, up_nu, mu, h)
            - potential_component(&frames, down_nu, mu, h))
        .map(|w| w * (0.5 / h));
        let comm = &a[mu] * &a[nu] - &a[nu] * &a[mu];
        f.push(skew_part(&(d_mu_a_nu - d_nu_a_mu + comm)));
    }

    let fp = FieldPoint { x, a, f };
    fp.validate()?;
    Ok(fp)
}

/// Potential and curvature at `x`: `A_mu = psi* d_mu psi` by central
/// differences of gauge-aligned frames, and
/// `F_mu_nu = d_mu A_nu - d_nu A_mu + [A_mu, A_nu]` by nested central
/// differences, every component anti-Hermitized.
pub fn gauge_field_at(m: &AdhmDatumS4, x: [f64; 4], h: f64) -> Result<FieldPoint> {
    require_regular(m)?;
    gauge_field_unchecked(m, x, h)
}

/// Relative failure of anti-self-duality, `|F + *F| / |F|` over all six
/// component pairs, with the star of the fixed orientation; zero
/// curvature gives zero.
pub fn asd_residual(fp: &FieldPoint) -> f64 {
    let f_sq: f64 = fp.f.iter().map(|m| fro(m).powi(2)).sum();
    if f_sq == 0.0 {
        return 0.0;
    }
    let dual: [CMat; 6] = [
        &fp.f[0] + &fp.f[5],
        &fp.f[1] - &fp.f[4],
        &fp.f[2] + &fp.f[3],
        &fp.f[3] + &fp.f[2],
        &fp.f[4] - &fp.f[1],
        &fp.f[5] + &fp.f[0],
    ];
    let defect_sq: f64 = dual.iter().map(|m| fro(m).powi(2)).sum();
    (defect_sq / f_sq).sqrt()
}

/// Characteristic four-form density whose integral over all of space is
/// the charge; anti-self-dual curvature makes it pointwise nonnegative.
pub fn action_density(fp: &FieldPoint) -> f64 {
    let term = |i: usize, j: usize| (&fp.f[i] * &fp.f[j]).trace().re;
    (term(0, 5) - term(1, 4) + term(2, 3)) / (4.0 * std::f64::consts::PI.powi(2))
}

/// Block-diagonal reference datum of charge `k` on a rank-`2k` frame:
/// unit-scale lumps centered at `z = (1.2 j, -0.8 j)` for
/// `j = 0, .., k-1`, which is regular and sits on the zero level
/// exactly. `k = 0` gives the empty-datum edge case.
pub fn reference_instanton(k: usize) -> Result<AdhmDatumS4> {
    if k == 0 {
        return AdhmDatumS4::new(
            CMat::zeros(0, 0),
            CMat::zeros(0, 0),
            CMat::zeros(0, 2),
            CMat::zeros(2, 0),
        );
    }
    let r = 2 * k;
    let mut a1 = CMat::zeros(k, k);
    let mut a2 = CMat::zeros(k, k);
    let mut b = CMat::zeros(k, r);
    let mut cc = CMat::zeros(r, k);
    for j in 0..k {
        a1[(j, j)] = c(1.2 * j as f64, 0.0);
        a2[(j, j)] = c(-0.8 * j as f64, 0.0);
        b[(j, 2 * j)] = c(1.0, 0.0);
        cc[(2 * j + 1, j)] = c(1.0, 0.0);
    }
    AdhmDatumS4::new(a1, a2, b, cc)
}

/// Stratified Monte Carlo integral of [`action_density`] over the ball
/// of the given radius, plus a tail estimated from the outermost
/// stratum under quartic curvature decay. `asd_max` is the worst
/// [`asd_residual`] seen across all sampled points.
///
/// Sample `i` draws from its own counter-derived stream, so the
/// parallel schedule never changes the report.
pub fn charge_integral(
    m: &AdhmDatumS4,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<ChargeReport> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Config(format!("radius must be positive, got {radius}")));
    }
    if samples == 0 {
        return Err(Error::Config("sample budget must be positive".into()));
    }
    if m.k == 0 {
        return Ok(ChargeReport {
            charge: 0.0,
            stderr: 0.0,
            asd_max: 0.0,
            radius,
            samples,
            h: CHARGE_H,
        });
    }
    require_regular(m)?;

    let shells = samples.min(SHELLS);
    let base = samples / shells;
    let rem = samples % shells;
    let mut shell_of: Vec<usize> = Vec::with_capacity(samples);
    for s in 0..shells {
        let n = base + usize::from(s < rem);
        shell_of.extend(std::iter::repeat_n(s, n));
    }
    let shell_bounds = |s: usize| {
        (
            radius * s as f64 / shells as f64,
            radius * (s + 1) as f64 / shells as f64,
        )
    };

    let evals: Vec<(f64, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, f64)> {
            let (r0, r1) = shell_bounds(shell_of[i]);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let u: f64 = rng.gen();
            let rad = (r0.powi(4) + u * (r1.powi(4) - r0.powi(4))).powf(0.25);
            let dir = loop {
                let v: [f64; 4] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let n = v.iter().map(|w| w * w).sum::<f64>().sqrt();
                if n > 1e-9 {
                    break [v[0] / n, v[1] / n, v[2] / n, v[3] / n];
                }
            };
            let x = [rad * dir[0], rad * dir[1], rad * dir[2], rad * dir[3]];
            let fp = gauge_field_unchecked(m, x, CHARGE_H)?;
            Ok((action_density(&fp), rad, asd_residual(&fp)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sums = vec![0.0; shells];
    let mut sums_sq = vec![0.0; shells];
    let mut counts = vec![0usize; shells];
    for (i, (rho, _, _)) in evals.iter().enumerate() {
        let s = shell_of[i];
        sums[s] += rho;
        sums_sq[s] += rho * rho;
        counts[s] += 1;
    }
    let half_pi_sq = std::f64::consts::PI.powi(2) / 2.0;
    let mut ball = 0.0;
    let mut variance = 0.0;
    for s in 0..shells {
        let (r0, r1) = shell_bounds(s);
        let volume = half_pi_sq * (r1.powi(4) - r0.powi(4));
        let n = counts[s] as f64;
        let mean = sums[s] / n;
        ball += volume * mean;
        if counts[s] >= 2 {
            let sample_var = ((sums_sq[s] - n * mean * mean) / (n - 1.0)).max(0.0);
            variance += volume * volume * sample_var / n;
        }
    }

    // Tail: with density falling like the eighth inverse power, the
    // integral beyond the ball is pi^2 kappa / (2 R^4) for the decay
    // coefficient kappa, estimated on the outermost stratum.
    let outer: Vec<&(f64, f64, f64)> = evals
        .iter()
        .enumerate()
        .filter(|(i, _)| shell_of[*i] == shells - 1)
        .map(|(_, e)| e)
        .collect();
    let kappa = (outer
        .iter()
        .map(|(rho, rad, _)| rho * rad.powi(8))
        .sum::<f64>()
        / outer.len() as f64)
        .max(0.0);
    let tail = std::f64::consts::PI.powi(2) * kappa / (2.0 * radius.powi(4));

    let asd_max = evals.iter().map(|e| e.2).fold(0.0, f64::max);
    Ok(ChargeReport {
        charge: ball + tail,
        stderr: variance.sqrt(),
        asd_max,
        radius,
        samples,
        h: CHARGE_H,
    })
}
