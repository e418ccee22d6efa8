use crate::error::{MrhError, Result};
use crate::gamma_conv::{poisson_lower_tail, poisson_pmf, poisson_upper_tail};
use crate::params::ModelParams;

/// Truncation rule for the cycle-count series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    /// Required bound on the neglected tail relative to the retained sum.
    pub tail_rel_tol: f64,
    /// A term counts as negligible below this fraction of the running sum.
    pub negligible_rel: f64,
    /// Consecutive negligible terms required before stopping early.
    pub negligible_run: usize,
    /// Overrides the default cycle budget when set.
    pub max_terms: Option<usize>,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            tail_rel_tol: 1e-10,
            negligible_rel: 1e-14,
            negligible_run: 5,
            max_terms: None,
        }
    }
}

impl TruncationPolicy {
    /// Cycle budget `ceil(mu + 10 sqrt(mu) + 20)` with `mu = t (lambda0 + max(lambda1, lambda2))`.
    pub fn cycle_budget(&self, t: f64, params: &ModelParams) -> usize {
        if let Some(n) = self.max_terms {
            return n;
        }
        let mu = t * (params.lambda0 + params.lambda1.max(params.lambda2));
        (mu + 10.0 * mu.sqrt() + 20.0).ceil() as usize
    }
}

/// Result of a truncated series evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum {
    pub value: f64,
    pub terms: usize,
    /// Bound on the neglected tail divided by the retained sum (0 when the sum is 0).
    pub rel_tail_bound: f64,
}

/// `P(N < k)` for `N ~ Poisson(mu)`.
pub(crate) fn poisson_below(k: u64, mu: f64) -> f64 {
    poisson_lower_tail(k, mu)
}

/// Sum `sum_{n >= n_min} pois(n; mu) * term(n)` where `bound(n)` is
/// nonincreasing and dominates `|term(m)|` for every `m >= n`, walking outward from the Poisson mode. Each direction stops after
/// `negligible_run` small terms once the Poisson-tail bound on the remainder
/// is below `tail_rel_tol` of the retained sum. Reaching `n_max` with the
/// bound unmet is a convergence error.
pub(crate) fn poisson_weighted_sum<F: FnMut(usize) -> f64, B: Fn(usize) -> f64>(
    mu: f64,
    n_min: usize,
    n_max: usize,
    bound: B,
    policy: &TruncationPolicy,
    mut term: F,
) -> Result<SeriesSum> {
    if n_min > n_max {
        return Ok(SeriesSum {
            value: 0.0,
            terms: 0,
            rel_tail_bound: 0.0,
        });
    }
    let mode = (mu.floor() as usize).clamp(n_min, n_max);
    let mut sum = 0.0;
    let mut terms = 0;

    // upward
    let mut run = 0;
    let mut n = mode;
    let mut upper_bound;
    loop {
        let w = poisson_pmf(n as u64, mu);
        let v = if w > 0.0 { w * term(n) } else { 0.0 };
        sum += v;
        terms += 1;
        if v.abs() < policy.negligible_rel * sum.abs() || (v == 0.0 && (n as f64) > mu) {
            run += 1;
        } else {
            run = 0;
        }
        upper_bound = bound(n + 1) * poisson_upper_tail(n as u64 + 1, mu);
        let done = upper_bound <= policy.tail_rel_tol * sum.abs() || upper_bound == 0.0;
        if (run >= policy.negligible_run && done) || upper_bound <= 1e-17 * sum.abs() {
            break;
        }
        if n == n_max {
            if !done {
                return Err(MrhError::Convergence {
                    terms,
                    bound: if sum != 0.0 {
                        upper_bound / sum.abs()
                    } else {
                        f64::INFINITY
                    },
                });
            }
            break;
        }
        n += 1;
    }

    // downward
    let mut lower_bound = 0.0;
    let global = bound(n_min);
    if mode > n_min {
        let mut run = 0;
        let mut n = mode;
        while n > n_min {
            n -= 1;
            let w = poisson_pmf(n as u64, mu);
            let v = if w > 0.0 { w * term(n) } else { 0.0 };
            sum += v;
            terms += 1;
            if v.abs() < policy.negligible_rel * sum.abs() {
                run += 1;
            } else {
                run = 0;
            }
            lower_bound = global * poisson_below(n as u64, mu);
            if (run >= policy.negligible_run && lower_bound <= policy.tail_rel_tol * sum.abs())
                || lower_bound <= 1e-17 * sum.abs()
            {
                break;
            }
        }
        if n == n_min {
            lower_bound = 0.0;
        }
    }

    let tail = upper_bound + lower_bound;
    Ok(SeriesSum {
        value: sum,
        terms,
        rel_tail_bound: if sum != 0.0 { tail / sum.abs() } else { 0.0 },
    })
}
