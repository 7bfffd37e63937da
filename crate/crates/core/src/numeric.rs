//! Process-wide numeric tolerances.
//!
//! The policy is read through [`policy`]. A binary may install a different
//! record once with [`set_policy`] before any simulation runs; after that the
//! record is frozen, so there is no shared mutable state.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericPolicy {
    /// Allowed deviation of `U†U` from the identity (max entry).
    pub unitary_tol: f64,
    /// Allowed deviation for Hermiticity, idempotency and completeness checks.
    pub operator_tol: f64,
    /// Allowed deviation of a state norm from 1.
    pub norm_tol: f64,
    /// Forced measurement outcomes below this probability are refused.
    pub min_forced_probability: f64,
    /// Largest register a dense state may hold.
    pub max_qubits: usize,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self {
            unitary_tol: 1e-10,
            operator_tol: 1e-10,
            norm_tol: 1e-12,
            min_forced_probability: 1e-12,
            max_qubits: 26,
        }
    }
}

static POLICY: OnceLock<NumericPolicy> = OnceLock::new();

/// The active policy (the default unless [`set_policy`] ran first).
pub fn policy() -> &'static NumericPolicy {
    POLICY.get_or_init(NumericPolicy::default)
}

/// Install a policy. Fails, returning the rejected record, if a policy is
/// already in effect.
pub fn set_policy(p: NumericPolicy) -> Result<(), NumericPolicy> {
    POLICY.set(p)
}
