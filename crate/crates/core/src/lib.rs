//! Numerical toolkit for matrix models of framed instanton moduli spaces.
//!
//! The crate works with two families of matrix data:
//!
//! * quadruples `(a1, a2, b, c)` describing framed sheaves on the
//!   four-sphere picture, subject to `[a1, a2] + b c = 0` and a
//!   perturbed real moment-map equation;
//! * quintuples `(a1, a2, d, b, c)` describing the reversed-orientation
//!   projective-plane picture, subject to `a1 d a2 - a2 d a1 + b c = 0`,
//!   a normalisation `mu_0 = 0`, and a perturbed second equation
//!   `mu_1 = zeta`.
//!
//! On top of the raw data the crate provides toleranced linear algebra
//! ([`linalg`]), regularity deciders with certified witnesses
//! ([`adhm_s4`], [`monad_p2`]), Kempf-Ness style flows onto moment-map
//! level sets ([`flow`]), explicit rank-stabilization homotopies
//! ([`stab_limit`]), and gauge-field reconstruction with topological
//! charge estimation ([`field_recon`]). The `adhm-kit` binary exposes
//! batch drivers over NDJSON records ([`cli`]).

pub mod adhm_s4;
pub mod check;
pub mod cli;
pub mod error;
pub mod field_recon;
pub mod flow;
pub mod linalg;
pub mod monad_p2;
pub mod stab_limit;

pub use check::{CheckResult, Verdict};
pub use error::{Error, Result};
pub use linalg::{CMat, Subspace, Tolerance};
