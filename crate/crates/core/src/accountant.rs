//! Rényi-DP accounting for DP-SGD: the noise multiplier required for an
//! (ε, δ) budget, and the ε achieved by a given configuration.
//!
//! The mechanism model is the Poisson-subsampled Gaussian: each step includes
//! every training example independently with probability q = b/N, and one
//! Gaussian draw of scale z·C perturbs the summed clipped gradients. Per-step
//! RDP composes linearly over T = E·⌈N/b⌉ steps and converts to (ε, δ)-DP by
//! minimizing ε(α) + ln(1/δ)/(α − 1) over the order grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bisection bracket for the noise multiplier. Below 0.3 the subsampled
/// Gaussian bound is vacuous for any practical budget; above 1e4 training
/// is pure noise.
pub const Z_BRACKET: (f64, f64) = (0.3, 1.0e4);

/// Absolute tolerance of the noise-multiplier bisection.
pub const Z_TOLERANCE: f64 = 1e-3;

/// Default failure probability when a caller does not specify one. Always
/// echoed in run reports.
pub const DEFAULT_DELTA: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum AccountantError {
    #[error("Renyi order must exceed 1, got {0}")]
    InvalidOrder(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty RDP curve")]
    EmptyCurve,
    #[error(
        "budget epsilon={target_epsilon} is infeasible: even z={z_ceiling} only achieves epsilon={epsilon_at_ceiling:.6}"
    )]
    InfeasibleBudget {
        target_epsilon: f64,
        epsilon_at_ceiling: f64,
        z_ceiling: f64,
    },
}

/// Target privacy loss bound ε and failure probability δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, AccountantError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(AccountantError::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(AccountantError::InvalidArgument(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Sampling rate and step count derived from (N, b, E).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Poisson inclusion probability q = b/N.
    pub sampling_rate: f64,
    /// Composed steps T = E·⌈N/b⌉.
    pub steps: u64,
}

impl SamplingConfig {
    pub fn from_dataset(n: usize, batch_size: usize, epochs: u32) -> Result<Self, AccountantError> {
        if batch_size == 0 || n == 0 {
            return Err(AccountantError::InvalidArgument(
                "dataset size and batch size must be positive".into(),
            ));
        }
        if batch_size > n {
            return Err(AccountantError::InvalidArgument(format!(
                "batch size {batch_size} exceeds dataset size {n}"
            )));
        }
        if epochs == 0 {
            return Err(AccountantError::InvalidArgument(
                "epoch count must be positive".into(),
            ));
        }
        Ok(Self {
            sampling_rate: batch_size as f64 / n as f64,
            steps: epochs as u64 * n.div_ceil(batch_size) as u64,
        })
    }
}

/// Per-order RDP of a composed mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct RdpCurve {
    pub orders: Vec<f64>,
    pub values: Vec<f64>,
}

impl RdpCurve {
    /// The curve of one subsampled-Gaussian step over the given orders.
    pub fn single_step(z: f64, q: f64, orders: &[f64]) -> Result<Self, AccountantError> {
        let values = orders
            .iter()
            .map(|&a| rdp_single_step(z, q, a))
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(Self {
            orders: orders.to_vec(),
            values,
        })
    }

    /// Linear composition over `steps` identical steps.
    pub fn compose(&self, steps: u64) -> Self {
        Self {
            orders: self.orders.clone(),
            values: self.values.iter().map(|v| v * steps as f64).collect(),
        }
    }
}

/// The order grid: integers 2..=256 plus a few fractional orders near the
/// small-α region where the optimum usually sits.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5, 1.75, 2.5, 3.5];
    orders.extend((2..=256).map(f64::from));
    orders.sort_by(f64::total_cmp);
    orders
}

/// RDP of one Poisson-subsampled Gaussian step at order `alpha`.
///
/// q = 1 is the plain Gaussian mechanism, exactly α/(2z²). For q < 1,
/// integer orders evaluate the binomial expansion of the subsampled bound in
/// log space; fractional orders interpolate the log-convex cumulant
/// (α − 1)·ε(α) between bracketing integers (pinned to 0 at α = 1), which
/// stays an upper bound.
pub fn rdp_single_step(z: f64, q: f64, alpha: f64) -> Result<f64, AccountantError> {
    if alpha <= 1.0 || !alpha.is_finite() {
        return Err(AccountantError::InvalidOrder(alpha));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(AccountantError::InvalidArgument(format!(
            "noise multiplier must be positive, got {z}"
        )));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(AccountantError::InvalidArgument(format!(
            "sampling rate must lie in (0, 1], got {q}"
        )));
    }
    if q >= 1.0 {
        return Ok(alpha / (2.0 * z * z));
    }
    if alpha.fract() == 0.0 {
        Ok(rdp_integer_order(z, q, alpha as u64))
    } else {
        let lo = alpha.floor();
        let hi = lo + 1.0;
        let g_lo = if lo <= 1.0 {
            0.0
        } else {
            (lo - 1.0) * rdp_integer_order(z, q, lo as u64)
        };
        let g_hi = (hi - 1.0) * rdp_integer_order(z, q, hi as u64);
        let w = alpha - lo;
        Ok(((1.0 - w) * g_lo + w * g_hi) / (alpha - 1.0))
    }
}

/// ln Σ_{k=0..α} C(α,k)(1−q)^{α−k} q^k exp((k²−k)/(2z²)), divided by α−1.
/// Log-binomials accumulate incrementally; the sum is max-shifted.
fn rdp_integer_order(z: f64, q: f64, alpha: u64) -> f64 {
    debug_assert!(alpha >= 2);
    let a = alpha as f64;
    let ln_q = q.ln();
    let ln_1q = (1.0 - q).ln();
    let inv_2z2 = 1.0 / (2.0 * z * z);
    let log_term = |ln_binom: f64, k: u64| {
        ln_binom + k as f64 * ln_q + (a - k as f64) * ln_1q + (k * k - k) as f64 * inv_2z2
    };
    let mut max_lt = f64::NEG_INFINITY;
    let mut ln_binom = 0.0;
    for k in 0..=alpha {
        if k > 0 {
            ln_binom += ((a - k as f64 + 1.0) / k as f64).ln();
        }
        max_lt = max_lt.max(log_term(ln_binom, k));
    }
    let mut sum = 0.0;
    let mut ln_binom = 0.0;
    for k in 0..=alpha {
        if k > 0 {
            ln_binom += ((a - k as f64 + 1.0) / k as f64).ln();
        }
        sum += (log_term(ln_binom, k) - max_lt).exp();
    }
    // The sum is at least 1 (the expansion of (q + (1-q))^alpha with
    // exp-weights >= 1), so the log is non-negative up to rounding.
    ((max_lt + sum.ln()) / (a - 1.0)).max(0.0)
}

/// Convert an RDP curve to (ε, δ)-DP: the minimum over orders of
/// ε(α) + ln(1/δ)/(α − 1), plus the minimizing order.
pub fn epsilon_from_rdp(curve: &RdpCurve, delta: f64) -> Result<(f64, f64), AccountantError> {
    if curve.orders.is_empty() {
        return Err(AccountantError::EmptyCurve);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountantError::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let log_inv_delta = (1.0 / delta).ln();
    let mut best: Option<(f64, f64)> = None;
    for (&alpha, &value) in curve.orders.iter().zip(&curve.values) {
        if alpha <= 1.0 {
            return Err(AccountantError::InvalidOrder(alpha));
        }
        let eps = value + log_inv_delta / (alpha - 1.0);
        if best.is_none_or(|(e, _)| eps < e) {
            best = Some((eps, alpha));
        }
    }
    Ok(best.expect("curve is non-empty"))
}

/// ε achieved by (N, b, E) training at noise multiplier z, failure
/// probability δ. Strictly decreasing in z, non-decreasing in T and q.
pub fn compute_epsilon(
    n: usize,
    batch_size: usize,
    epochs: u32,
    z: f64,
    delta: f64,
) -> Result<f64, AccountantError> {
    compute_epsilon_detailed(n, batch_size, epochs, z, delta).map(|r| r.epsilon)
}

/// Everything the `accountant` CLI reports for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub delta: f64,
    pub z: f64,
    pub best_order: f64,
    pub steps: u64,
    pub sampling_rate: f64,
}

pub fn compute_epsilon_detailed(
    n: usize,
    batch_size: usize,
    epochs: u32,
    z: f64,
    delta: f64,
) -> Result<EpsilonReport, AccountantError> {
    let sampling = SamplingConfig::from_dataset(n, batch_size, epochs)?;
    let curve = RdpCurve::single_step(z, sampling.sampling_rate, &default_orders())?
        .compose(sampling.steps);
    let (epsilon, best_order) = epsilon_from_rdp(&curve, delta)?;
    Ok(EpsilonReport {
        epsilon,
        delta,
        z,
        best_order,
        steps: sampling.steps,
        sampling_rate: sampling.sampling_rate,
    })
}

/// Smallest noise multiplier (within [`Z_TOLERANCE`]) in [`Z_BRACKET`] whose
/// ε stays within the budget, found by bisection on the monotone ε(z).
pub fn compute_noise(
    n: usize,
    batch_size: usize,
    epochs: u32,
    budget: &PrivacyBudget,
) -> Result<f64, AccountantError> {
    PrivacyBudget::new(budget.epsilon, budget.delta)?;
    let (mut lo, mut hi) = Z_BRACKET;
    let eps_at = |z: f64| compute_epsilon(n, batch_size, epochs, z, budget.delta);
    let eps_ceiling = eps_at(hi)?;
    if eps_ceiling > budget.epsilon {
        return Err(AccountantError::InfeasibleBudget {
            target_epsilon: budget.epsilon,
            epsilon_at_ceiling: eps_ceiling,
            z_ceiling: hi,
        });
    }
    if eps_at(lo)? <= budget.epsilon {
        return Ok(lo);
    }
    while hi - lo > Z_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if eps_at(mid)? <= budget.epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
