//! Shared test support: an independent brute-force RDP accountant.
//!
//! This oracle exists to pin expected values for the production accountant
//! and deliberately shares none of its code paths: log-binomials come from a
//! Lanczos log-gamma instead of incremental ratio sums, series are summed
//! with explicit max-shift + Kahan compensation, and the order grid is ten
//! times finer. Its outputs for the fixed regression configs were recorded
//! before the production accountant was written.

#![allow(dead_code)]
#![allow(clippy::excessive_precision)]

/// Lanczos approximation (g = 7, n = 9), valid for x > 0.5.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    assert!(x > 0.5, "oracle ln_gamma domain");
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n);
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Kahan-compensated sum.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Single-step RDP of the Poisson-subsampled Gaussian mechanism at an
/// integer order, by direct evaluation of the binomial expansion.
pub fn rdp_integer(z: f64, q: f64, alpha: u64) -> f64 {
    assert!(z > 0.0 && q > 0.0 && q < 1.0 && alpha >= 2);
    let log_terms: Vec<f64> = (0..=alpha)
        .map(|k| {
            ln_binomial(alpha, k)
                + k as f64 * q.ln()
                + (alpha - k) as f64 * (1.0 - q).ln()
                + (k * k - k) as f64 / (2.0 * z * z)
        })
        .collect();
    let m = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum = kahan_sum(log_terms.iter().map(|&lt| (lt - m).exp()));
    (m + sum.ln()) / (alpha as f64 - 1.0)
}

/// Single-step RDP at any order > 1. Integer orders use the binomial
/// expansion; fractional orders use the chord of the log-convex cumulant
/// (alpha - 1) * rdp(alpha) between bracketing integers, with the cumulant
/// pinned to zero at alpha = 1.
pub fn rdp_single_step(z: f64, q: f64, alpha: f64) -> f64 {
    assert!(alpha > 1.0);
    if q >= 1.0 {
        return alpha / (2.0 * z * z);
    }
    if alpha.fract() == 0.0 {
        return rdp_integer(z, q, alpha as u64);
    }
    let lo = alpha.floor() as u64;
    let hi = lo + 1;
    let g_lo = if lo <= 1 {
        0.0
    } else {
        (lo as f64 - 1.0) * rdp_integer(z, q, lo)
    };
    let g_hi = (hi as f64 - 1.0) * rdp_integer(z, q, hi);
    let w = alpha - lo as f64;
    ((1.0 - w) * g_lo + w * g_hi) / (alpha - 1.0)
}

/// Order grid ten times finer than the integer grid: 1.1, 1.2, ..., 256.0.
pub fn fine_orders() -> Vec<f64> {
    (11..=2560).map(|i| i as f64 / 10.0).collect()
}

/// (epsilon, best_order) for T composed steps, minimizing
/// rdp(alpha) * T + ln(1/delta) / (alpha - 1) over the fine grid.
pub fn epsilon(n: u64, b: u64, e: u64, z: f64, delta: f64) -> (f64, f64) {
    let q = b as f64 / n as f64;
    let steps = e * n.div_ceil(b);
    let log_inv_delta = (1.0 / delta).ln();
    let mut best = (f64::INFINITY, f64::NAN);
    for alpha in fine_orders() {
        let eps = steps as f64 * rdp_single_step(z, q, alpha) + log_inv_delta / (alpha - 1.0);
        if eps < best.0 {
            best = (eps, alpha);
        }
    }
    best
}

/// Smallest noise multiplier in [0.3, 1e4] reaching the target epsilon,
/// bisected to 1e-4 (finer than the production tolerance).
pub fn noise(n: u64, b: u64, e: u64, target_eps: f64, delta: f64) -> f64 {
    let (mut lo, mut hi) = (0.3f64, 1.0e4f64);
    assert!(
        epsilon(n, b, e, hi, delta).0 <= target_eps,
        "oracle: target infeasible at bracket ceiling"
    );
    if epsilon(n, b, e, lo, delta).0 <= target_eps {
        return lo;
    }
    while hi - lo > 1.0e-4 {
        let mid = 0.5 * (lo + hi);
        if epsilon(n, b, e, mid, delta).0 <= target_eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// The fixed regression configs: (n, b, e, z, delta).
pub const REGRESSION_CONFIGS: [(u64, u64, u64, f64, f64); 10] = [
    (39_073, 256, 20, 1.0, 1e-5),
    (10_000, 100, 10, 1.5, 1e-5),
    (60_000, 256, 30, 1.1, 1e-5),
    (39_073, 256, 20, 0.8, 1e-5),
    (1_000, 50, 5, 2.0, 1e-6),
    (16_000, 256, 20, 1.0, 1e-5),
    (5_000, 500, 40, 3.0, 1e-5),
    (100_000, 1_000, 10, 0.7, 1e-6),
    (2_000, 2_000, 1, 1.0, 0.367_879_441_171_442_33),
    (39_073, 128, 60, 1.2, 1e-5),
];
