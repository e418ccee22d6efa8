//! Term-by-term evaluation of the occupation densities.
//!
//! Each cycle-count term is built from gamma-convolution densities `f` and
//! cdf differences `H` weighted by binomial probabilities over how many of the
//! completed off periods were resting. Two identities are used for the weight
//! on the moving time `s`:
//!
//! * `G(s; n, l0) - G(s; n + 1, l0) = pois(n; l0 s)`
//! * `g(s; n + 1, l0) = l0 pois(n; l0 s)`
//!
//! so every series is a Poisson-weighted sum handled by
//! [`poisson_weighted_sum`]. This path is exact but slow; the likelihood uses
//! [`OccupationTable`](super::OccupationTable) and the two are cross-checked in tests.

use super::series::{poisson_weighted_sum, SeriesSum, TruncationPolicy};
use crate::error::Result;
use crate::gamma_conv::{cdf_diff_h, conv_pdf, gamma_cdf_unchecked, ln_binomial, ConvSpec, GammaSpec};
use crate::params::{ModelParams, StateId};

/// `C(n, k) p^k (1 - p)^(n - k)` without `0^0` ambiguity at `p in {0, 1}`.
pub(crate) fn binomial_weight(n: u32, k: u32, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let (n, k) = (n as u64, k as u64);
    (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

fn spec(a1: u32, b1: f64, a2: u32, b2: f64) -> ConvSpec {
    ConvSpec {
        first: GammaSpec { shape: a1, rate: b1 },
        second: GammaSpec { shape: a2, rate: b2 },
    }
}

/// Binomial mixture over `k` in `0..=n` with probability `p`, skipping zero weights.
fn mixture<F: FnMut(u32) -> Result<f64>>(n: u32, p: f64, mut f: F) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..=n {
        let w = binomial_weight(n, k, p);
        if w == 0.0 {
            continue;
        }
        acc += w * f(k)?;
    }
    Ok(acc)
}

/// Series for `p_ij(s, t)` with `i in {0, 1}`; `start = 2` is handled by the caller.
pub(crate) fn density_series(
    start: StateId,
    end: StateId,
    s: f64,
    t: f64,
    params: &ModelParams,
    policy: &TruncationPolicy,
) -> Result<SeriesSum> {
    let (l0, l1, l2) = (params.lambda0, params.lambda1, params.lambda2);
    let (p1, p2) = (params.p1, params.p2());
    let y = t - s;
    let mu = l0 * s;
    let n_max = policy.cycle_budget(t, params);
    let lhi = l1.max(l2);
    // Each off period is stochastically at least Exp(lhi), so with `m` off
    // periods in total H <= G(y; m, lhi) and f <= lhi G(y; m - 1, lhi).
    let prob_m = |m: usize| gamma_cdf_unchecked(y, m as u32, lhi);
    let dens_m = |m: usize| lhi * prob_m(m.saturating_sub(1));
    use StateId::*;
    let mut err = None;
    let mut guard = |r: Result<f64>| -> f64 {
        match r {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    };
    let sum = match (start, end) {
        (Moving, Moving) => poisson_weighted_sum(
            mu,
            1,
            n_max,
            |n| dens_m(n),
            policy,
            |n| {
                let n = n as u32;
                guard(mixture(n, p1, |k| conv_pdf(y, spec(k, l1, n - k, l2))))
            },
        )?,
        (Moving, Resting) => poisson_weighted_sum(
            mu,
            0,
            n_max,
            |n| p1 * l0 * prob_m(n),
            policy,
            |n| {
                let n = n as u32;
                p1 * l0 * guard(mixture(n, p1, |k| cdf_diff_h(y, spec(k, l1, n - k, l2))))
            },
        )?,
        (Moving, Handling) => poisson_weighted_sum(
            mu,
            0,
            n_max,
            |n| p2 * l0 * prob_m(n),
            policy,
            |n| {
                let n = n as u32;
                // k counts handling periods here, weighted p2^k p1^(n-k).
                p2 * l0 * guard(mixture(n, p2, |k| cdf_diff_h(y, spec(k, l2, n - k, l1))))
            },
        )?,
        (Resting, Moving) => poisson_weighted_sum(
            mu,
            0,
            n_max,
            |n| dens_m(n + 1),
            policy,
            |n| {
                let n = n as u32;
                guard(mixture(n, p1, |k| conv_pdf(y, spec(k + 1, l1, n - k, l2))))
            },
        )?,
        // n' = n - 1 completed cycles after the initial rest.
        (Resting, Resting) => poisson_weighted_sum(
            mu,
            0,
            n_max,
            |n| p1 * l0 * prob_m(n + 1),
            policy,
            |n| {
                let n = n as u32;
                p1 * l0 * guard(mixture(n, p1, |k| cdf_diff_h(y, spec(k + 1, l1, n - k, l2))))
            },
        )?,
        (Resting, Handling) => poisson_weighted_sum(
            mu,
            0,
            n_max,
            |n| p2 * l0 * prob_m(n + 1),
            policy,
            |n| {
                let n = n as u32;
                p2 * l0 * guard(mixture(n, p1, |k| cdf_diff_h(y, spec(n - k, l2, k + 1, l1))))
            },
        )?,
        (Handling, _) => unreachable!("handled by relabelling"),
    };
    if let Some(e) = err {
        return Err(e);
    }
    Ok(sum)
}
