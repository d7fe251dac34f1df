//! Three-valued verdicts with certified witnesses.

use serde::{Deserialize, Serialize};

use crate::linalg::Subspace;

/// Outcome of a decidable or semi-decidable regularity check.
///
/// `Holds` and `Fails` are certified; `Fails` carries a witness that
/// can be re-validated against the defining conditions of the violated
/// property. `Unknown` is reserved for the bounded searches that may
/// exhaust their budget without a certificate either way.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Holds,
    Fails,
    Unknown,
}

/// A violating configuration: a single invariant subspace, or the pair
/// of subspaces used by the two-space conditions.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Witness {
    One(Subspace),
    Pair { v0: Subspace, v1: Subspace },
}

/// Verdict plus optional witness.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl CheckResult {
    pub fn holds() -> Self {
        CheckResult { verdict: Verdict::Holds, witness: None }
    }

    pub fn fails_with(witness: Witness) -> Self {
        CheckResult { verdict: Verdict::Fails, witness: Some(witness) }
    }

    pub fn unknown() -> Self {
        CheckResult { verdict: Verdict::Unknown, witness: None }
    }

    pub fn holds_ok(&self) -> bool {
        self.verdict == Verdict::Holds
    }

    /// The single-subspace witness, if present.
    pub fn witness_subspace(&self) -> Option<&Subspace> {
        match &self.witness {
            Some(Witness::One(s)) => Some(s),
            _ => None,
        }
    }

    /// The paired witness, if present.
    pub fn witness_pair(&self) -> Option<(&Subspace, &Subspace)> {
        match &self.witness {
            Some(Witness::Pair { v0, v1 }) => Some((v0, v1)),
            _ => None,
        }
    }
}
