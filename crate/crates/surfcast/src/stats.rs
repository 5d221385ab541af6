//! Small statistical helpers for reporting empirical coverage.

use crate::scalar::Scalar;

/// Two-sided 99% normal-approximation confidence interval for a proportion,
/// clamped to [0, 1].
pub fn normal_ci99<S: Scalar>(p_hat: S, n: usize) -> (S, S) {
    if n == 0 {
        return (S::zero(), S::one());
    }
    // z quantile at 0.995.
    let z = S::cast(2.575_829_303_548_900_4);
    let var = p_hat * (S::one() - p_hat) / S::from_index(n);
    let half = z * var.max(S::zero()).sqrt();
    ((p_hat - half).max(S::zero()), (p_hat + half).min(S::one()))
}

/// log(sum of binomial pmf terms for 0..=k) at Binomial(n, p), computed with
/// a log-space term recurrence and a running log-sum-exp.
fn log_binom_cdf(k: usize, n: usize, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0; // cdf = 1
    }
    if p >= 1.0 {
        return if k >= n { 0.0 } else { f64::NEG_INFINITY };
    }
    let lp = p.ln();
    let lq = (1.0 - p).ln();
    let mut log_term = (n as f64) * lq; // i = 0
    let mut log_sum = log_term;
    for i in 0..k.min(n) {
        // term_{i+1}/term_i = (n - i)/(i + 1) · p/q
        log_term += ((n - i) as f64).ln() - ((i + 1) as f64).ln() + lp - lq;
        log_sum = log_add(log_sum, log_term);
    }
    log_sum.min(0.0)
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Exact two-sided 99% Clopper-Pearson interval for `k` successes in `n`
/// trials, via bisection on the binomial tail.
pub fn clopper_pearson_ci99(k: usize, n: usize) -> (f64, f64) {
    assert!(k <= n, "successes cannot exceed trials");
    if n == 0 {
        return (0.0, 1.0);
    }
    let tail = 0.005f64;
    // Lower bound: p with P(X >= k | p) = tail, i.e. cdf(k-1, p) = 1 - tail.
    let lo = if k == 0 {
        0.0
    } else {
        bisect(|p| log_binom_cdf(k - 1, n, p) - (1.0 - tail).ln())
    };
    // Upper bound: p with P(X <= k | p) = tail.
    let hi = if k == n { 1.0 } else { bisect(|p| log_binom_cdf(k, n, p) - tail.ln()) };
    (lo, hi)
}

/// Root of a decreasing function of p on [0, 1].
fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
