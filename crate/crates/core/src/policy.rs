//! Shared numerical tolerances and resource budgets.
//!
//! Every default used by the library, the tests and the command line lives
//! here so that all three agree on what "equal" and "too large" mean.

use crate::error::{Error, Result};

/// Tolerances and budgets used across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericalPolicy {
    /// Maximum bytes a single dense matrix may occupy.
    pub memory_budget_bytes: u128,
    /// Maximum number of entries `n^m` of a moment tensor.
    pub tensor_budget: u128,
    /// Largest `|H - H^dagger|` entry accepted as Hermitian.
    pub hermitian_tol: f64,
    /// Allowed deviation of a state norm from one.
    pub norm_tol: f64,
    /// Two smallest singular values closer than this are flagged as degenerate.
    pub degeneracy_tol: f64,
    /// Largest full operator expansion (over all `4^L` strings) we compute.
    pub max_expansion_sites: usize,
}

impl Default for NumericalPolicy {
    fn default() -> Self {
        Self {
            memory_budget_bytes: 2 << 30,
            tensor_budget: 10_000_000,
            hermitian_tol: 1e-8,
            norm_tol: 1e-10,
            degeneracy_tol: 1e-12,
            max_expansion_sites: 7,
        }
    }
}

impl NumericalPolicy {
    /// Checks that a dense complex `dim x dim` matrix fits the memory budget.
    pub fn check_dense(&self, what: &str, dim: usize) -> Result<()> {
        let required = (dim as u128) * (dim as u128) * 16;
        if required > self.memory_budget_bytes {
            return Err(Error::Capacity {
                what: format!("{what} ({dim}x{dim} complex matrix, bytes)"),
                required,
                budget: self.memory_budget_bytes,
            });
        }
        Ok(())
    }

    pub fn check_tensor(&self, n: usize, order: usize) -> Result<()> {
        let required = (n as u128).checked_pow(order as u32).unwrap_or(u128::MAX);
        if required > self.tensor_budget {
            return Err(Error::Capacity {
                what: format!("moment tensor of order {order} over {n} operators (entries)"),
                required,
                budget: self.tensor_budget,
            });
        }
        Ok(())
    }
}

/// Hilbert-space dimension `2^L`, or a capacity error when it cannot be indexed.
pub fn hilbert_dim(sites: usize) -> Result<usize> {
    if sites >= 31 {
        return Err(Error::Capacity {
            what: "Hilbert space dimension".into(),
            required: 1u128 << sites.min(127),
            budget: 1 << 30,
        });
    }
    Ok(1usize << sites)
}
