//! Gamma distribution functions with integer shapes and two-gamma convolutions.
//!
//! All routines work with integer shapes, so a `Gamma(k, rate)` law is the
//! waiting time for the `k`-th event of a Poisson stream and its cdf is a
//! Poisson tail probability. Convolutions use the exact partial-fraction
//! expansion when it is well conditioned; otherwise the lower-rate component
//! is written as a negative-binomial mixture of higher-rate gammas, which
//! gives a series of positive terms. Adaptive quadrature is the last resort.

use std::sync::OnceLock;

use crate::error::{domain, Result};
use crate::quad::{self, QuadOptions};

const LOG_FACT_TABLE: usize = 1 << 14;

/// Relative rate gap under which two gamma components are merged into one.
pub const MERGE_REL_GAP: f64 = 1e-6;

/// Largest tolerated relative rounding error of the partial-fraction sum.
const MAX_CANCELLATION: f64 = 1e-8;

/// Assumed relative accuracy of a single partial-fraction term.
const TERM_EPS: f64 = 1e-15;

const SERIES_MAX_TERMS: usize = 200_000;

fn log_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LOG_FACT_TABLE);
        t.push(0.0);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for i in 1..LOG_FACT_TABLE {
            // Neumaier summation keeps the running log-factorial accurate.
            let v = (i as f64).ln();
            let s = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - s) + v;
            } else {
                comp += (v - s) + sum;
            }
            sum = s;
            t.push(sum + comp);
        }
        t
    })
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LOG_FACT_TABLE {
        return log_fact_table()[n as usize];
    }
    let x = n as f64;
    let x2 = x * x;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x2 * x2 * x)
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `ln P(N = j)` for `N ~ Poisson(mu)`; `-inf` outside the support.
pub fn ln_poisson_pmf(j: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if j == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    j as f64 * mu.ln() - mu - ln_factorial(j)
}

pub fn poisson_pmf(j: u64, mu: f64) -> f64 {
    ln_poisson_pmf(j, mu).exp()
}

/// `P(N >= k)` for `N ~ Poisson(mu)`, accurate in both tails.
pub fn poisson_upper_tail(k: u64, mu: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if mu == 0.0 {
        return 0.0;
    }
    if (k as f64) > mu {
        // Sum upward from k: terms shrink geometrically once past the mode.
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = k;
        loop {
            j += 1;
            term *= mu / j as f64;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        (ln_poisson_pmf(k, mu) + sum.ln()).exp()
    } else {
        1.0 - poisson_lower_tail_below(k, mu)
    }
}

/// `P(N < k)` for `N ~ Poisson(mu)`, accurate in both tails.
pub fn poisson_lower_tail(k: u64, mu: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if mu == 0.0 {
        return 1.0;
    }
    if (k as f64) > mu {
        1.0 - poisson_upper_tail(k, mu)
    } else {
        poisson_lower_tail_below(k, mu)
    }
}

/// `P(N < k)`, summing downward from `k - 1`; intended for `k <= mu`.
fn poisson_lower_tail_below(k: u64, mu: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut j = k - 1;
    while j > 0 {
        term *= j as f64 / mu;
        j -= 1;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    (ln_poisson_pmf(k - 1, mu) + sum.ln()).exp().min(1.0)
}

/// Gamma law with integer shape and positive rate; shape 0 is the point mass at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSpec {
    pub shape: u32,
    pub rate: f64,
}

impl GammaSpec {
    pub fn new(shape: u32, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return domain(format!("gamma rate must be positive and finite, got {rate}"));
        }
        Ok(GammaSpec { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape as f64 / self.rate
    }
}

/// Two independent gamma components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvSpec {
    pub first: GammaSpec,
    pub second: GammaSpec,
}

impl ConvSpec {
    pub fn new(a1: u32, b1: f64, a2: u32, b2: f64) -> Result<Self> {
        Ok(ConvSpec {
            first: GammaSpec::new(a1, b1)?,
            second: GammaSpec::new(a2, b2)?,
        })
    }

    pub fn total_shape(&self) -> u32 {
        self.first.shape + self.second.shape
    }

    pub fn mean(&self) -> f64 {
        self.first.mean() + self.second.mean()
    }

    /// Components ordered by (rate, shape) so evaluation is order independent.
    fn canonical(&self) -> (GammaSpec, GammaSpec) {
        let (a, b) = (self.first, self.second);
        let key = |g: &GammaSpec| (g.rate, g.shape);
        if key(&a).partial_cmp(&key(&b)) == Some(std::cmp::Ordering::Greater) {
            (b, a)
        } else {
            (a, b)
        }
    }
}

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return domain(format!("argument must be finite and nonnegative, got {x}"));
    }
    Ok(())
}

fn check_rate(spec: &GammaSpec) -> Result<()> {
    if !(spec.rate.is_finite() && spec.rate > 0.0) {
        return domain(format!("gamma rate must be positive and finite, got {}", spec.rate));
    }
    Ok(())
}

/// `G(x; shape, rate)`, the gamma cdf. Shape 0 gives the unit step at 0.
pub fn gamma_cdf(x: f64, spec: GammaSpec) -> Result<f64> {
    check_x(x)?;
    check_rate(&spec)?;
    Ok(gamma_cdf_unchecked(x, spec.shape, spec.rate))
}

pub(crate) fn gamma_cdf_unchecked(x: f64, shape: u32, rate: f64) -> f64 {
    if shape == 0 {
        return 1.0;
    }
    poisson_upper_tail(shape as u64, rate * x)
}

/// `g(x; shape, rate)`, the gamma density; requires `shape >= 1`.
pub fn gamma_pdf(x: f64, spec: GammaSpec) -> Result<f64> {
    check_x(x)?;
    check_rate(&spec)?;
    if spec.shape == 0 {
        return domain("the degenerate gamma law (shape 0) has no density");
    }
    Ok(gamma_pdf_unchecked(x, spec.shape, spec.rate))
}

pub(crate) fn gamma_pdf_unchecked(x: f64, shape: u32, rate: f64) -> f64 {
    rate * poisson_pmf(shape as u64 - 1, rate * x)
}

/// Evaluation route taken by a convolution call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvRoute {
    /// One component is degenerate.
    Single,
    /// Rates within [`MERGE_REL_GAP`]: one gamma with the summed shape.
    Merged,
    /// Exact partial-fraction expansion.
    PartialFractions,
    /// Positive negative-binomial mixture series.
    MixtureSeries,
    /// Adaptive quadrature of the convolution integral.
    Quadrature,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Cdf,
    Pdf,
}

fn component_value(kind: Kind, x: f64, shape: u32, rate: f64) -> f64 {
    match kind {
        Kind::Cdf => gamma_cdf_unchecked(x, shape, rate),
        Kind::Pdf => gamma_pdf_unchecked(x, shape, rate),
    }
}

/// Merged rate preserving the mean of the sum.
fn merged_rate(lo: &GammaSpec, hi: &GammaSpec) -> f64 {
    let shape = (lo.shape + hi.shape) as f64;
    shape / (lo.shape as f64 / lo.rate + hi.shape as f64 / hi.rate)
}

/// Partial-fraction evaluation. Returns the value and its estimated relative
/// rounding error (`TERM_EPS * sum|terms| / |sum|`).
fn partial_fractions(kind: Kind, x: f64, c1: &GammaSpec, c2: &GammaSpec) -> (f64, f64) {
    // Y = Gamma(m, a) + Gamma(n, b), a != b:
    //   weight on Gamma(j, a) = C(m+n-j-1, m-j) (b/(b-a))^n (a/(a-b))^(m-j)
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut abs_sum = 0.0f64;
    let mut add = |t: f64| {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
        abs_sum += t.abs();
    };
    for (own, other) in [(c1, c2), (c2, c1)] {
        let (m, a) = (own.shape as u64, own.rate);
        let (n, b) = (other.shape as u64, other.rate);
        let diff = b - a;
        let ln_lead = n as f64 * (b / diff.abs()).ln();
        let lead_neg = diff < 0.0 && n % 2 == 1;
        let ln_ratio = (a / diff.abs()).ln();
        // sign of a/(a-b) is the sign of -(b-a)
        let ratio_neg = diff > 0.0;
        for j in 1..=m {
            let p = m - j;
            let ln_w = ln_binomial(m + n - j - 1, p) + ln_lead + p as f64 * ln_ratio;
            let neg = lead_neg ^ (ratio_neg && p % 2 == 1);
            let v = component_value(kind, x, j as u32, a);
            if v == 0.0 {
                continue;
            }
            let t = (ln_w + v.ln()).exp();
            add(if neg { -t } else { t });
        }
    }
    let value = sum + comp;
    let rel = if value != 0.0 {
        TERM_EPS * abs_sum / value.abs()
    } else if abs_sum == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    (value, rel)
}

/// Negative-binomial mixture: `Gamma(k, lo) = sum_m NB(m; k, q) Gamma(k + m, hi)`
/// with `q = lo / hi`, so every term is nonnegative.
fn mixture_series(kind: Kind, x: f64, lo: &GammaSpec, hi: &GammaSpec) -> Option<f64> {
    let q = lo.rate / hi.rate;
    let k = lo.shape as f64;
    let base = lo.shape + hi.shape;
    let ln_q = q.ln();
    let ln_1mq = (1.0 - q).ln();
    let mode = if q < 1.0 {
        ((k - 1.0) * (1.0 - q) / q).max(0.0)
    } else {
        0.0
    };
    let mut sum = 0.0;
    let mut cum_nb = 0.0;
    let mut ln_nb = k * ln_q;
    for m in 0..SERIES_MAX_TERMS {
        if m > 0 {
            ln_nb += ((k + m as f64 - 1.0) / m as f64).ln() + ln_1mq;
        }
        let shape = base + m as u32;
        let nb = ln_nb.exp();
        cum_nb += nb;
        let v = component_value(kind, x, shape, hi.rate);
        sum += nb * v;
        if (m as f64) < mode {
            continue;
        }
        let tail = (1.0 - cum_nb).max(0.0);
        let bound = match kind {
            Kind::Cdf => tail * v,
            Kind::Pdf => {
                if (shape as f64 - 1.0) >= hi.rate * x {
                    tail * v
                } else {
                    tail * hi.rate
                }
            }
        };
        if bound <= 1e-16 * sum || (tail == 0.0 && nb == 0.0) {
            return Some(sum);
        }
    }
    None
}

fn quadrature(kind: Kind, x: f64, c1: &GammaSpec, c2: &GammaSpec) -> Result<f64> {
    if x == 0.0 {
        return Ok(match kind {
            Kind::Cdf => 0.0,
            Kind::Pdf => {
                if c1.shape + c2.shape == 1 {
                    c1.rate.max(c2.rate)
                } else {
                    0.0
                }
            }
        });
    }
    let opts = QuadOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-300,
        max_panels: 2000,
    };
    let pts: Vec<f64> = (0..=16).map(|i| x * i as f64 / 16.0).collect();
    let (v, _) = quad::integrate(
        |u| {
            let left = gamma_pdf_unchecked(u, c1.shape, c1.rate);
            left * component_value(kind, x - u, c2.shape, c2.rate)
        },
        &pts,
        &opts,
    )?;
    Ok(v)
}

fn conv_eval(kind: Kind, x: f64, spec: &ConvSpec) -> Result<(f64, ConvRoute)> {
    check_x(x)?;
    check_rate(&spec.first)?;
    check_rate(&spec.second)?;
    let (lo, hi) = spec.canonical();
    if lo.shape == 0 || hi.shape == 0 {
        let g = if lo.shape == 0 { hi } else { lo };
        if g.shape == 0 {
            return match kind {
                Kind::Cdf => Ok((1.0, ConvRoute::Single)),
                Kind::Pdf => domain("convolution density needs a positive total shape"),
            };
        }
        return Ok((component_value(kind, x, g.shape, g.rate), ConvRoute::Single));
    }
    let gap = (hi.rate - lo.rate) / hi.rate;
    if gap < MERGE_REL_GAP {
        let rate = merged_rate(&lo, &hi);
        return Ok((component_value(kind, x, lo.shape + hi.shape, rate), ConvRoute::Merged));
    }
    let (v, rel) = partial_fractions(kind, x, &lo, &hi);
    if rel <= MAX_CANCELLATION {
        return Ok((v.max(0.0), ConvRoute::PartialFractions));
    }
    if let Some(v) = mixture_series(kind, x, &lo, &hi) {
        return Ok((v, ConvRoute::MixtureSeries));
    }
    Ok((quadrature(kind, x, &lo, &hi)?, ConvRoute::Quadrature))
}

/// `F(x)`: cdf of `Gamma(a1, b1) + Gamma(a2, b2)`.
pub fn conv_cdf(x: f64, spec: ConvSpec) -> Result<f64> {
    conv_eval(Kind::Cdf, x, &spec).map(|(v, _)| v.min(1.0))
}

/// Like [`conv_cdf`] but also reports the evaluation route.
pub fn conv_cdf_route(x: f64, spec: ConvSpec) -> Result<(f64, ConvRoute)> {
    conv_eval(Kind::Cdf, x, &spec).map(|(v, r)| (v.min(1.0), r))
}

/// `f(x)`: density of `Gamma(a1, b1) + Gamma(a2, b2)`; needs `a1 + a2 >= 1`.
pub fn conv_pdf(x: f64, spec: ConvSpec) -> Result<f64> {
    conv_eval(Kind::Pdf, x, &spec).map(|(v, _)| v)
}

pub fn conv_pdf_route(x: f64, spec: ConvSpec) -> Result<(f64, ConvRoute)> {
    conv_eval(Kind::Pdf, x, &spec)
}

/// `H(x) = F(x; a1, ...) - F(x; a1 + 1, ...)`.
///
/// Evaluated as `f(x; a1 + 1, b1, a2, b2) / b1`, which is the same quantity
/// without the subtraction of two nearly equal cdfs.
pub fn cdf_diff_h(x: f64, spec: ConvSpec) -> Result<f64> {
    check_x(x)?;
    let bumped = ConvSpec {
        first: GammaSpec {
            shape: spec.first.shape + 1,
            rate: spec.first.rate,
        },
        second: spec.second,
    };
    let v = conv_pdf(x, bumped)? / spec.first.rate;
    Ok(v.clamp(0.0, 1.0))
}
