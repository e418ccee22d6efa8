//! Prepared evaluator for all nine occupation densities at a fixed `(t, params)`.
//!
//! Every holding time of an off state is rewritten in terms of the larger off
//! rate `hi = max(lambda1, lambda2)`: an `Exp(hi)` period is one phase, and an
//! `Exp(lo)` period is a geometric number of `Exp(hi)` phases with success
//! probability `q = lo / hi`. The total motionless time after `n` completed
//! cycles is then `Gamma(n + extra, hi)` where `extra` has a distribution that
//! only depends on `n` and the parameters. Those distributions are tabulated
//! once; each evaluation at `s` is a double sum of nonnegative terms.

use std::sync::Arc;

use crate::error::{domain, Result};
use crate::gamma_conv::ln_poisson_pmf;
use crate::params::{ModelParams, StateId};

use super::series::TruncationPolicy;

/// Relative cut-off for Poisson weights around their mode.
const BAND_REL: f64 = 1e-20;

/// Upper limit on the number of tabulated coefficients.
const MAX_TABLE_ENTRIES: usize = 30_000_000;

/// Values `pois(k; mu)` for `k` in a band around the mode where they exceed
/// `BAND_REL` times the peak.
struct PoissonBand {
    lo: usize,
    values: Vec<f64>,
}

impl PoissonBand {
    fn new(mu: f64, cap: usize) -> Self {
        if mu == 0.0 {
            return PoissonBand {
                lo: 0,
                values: vec![1.0],
            };
        }
        let mode = (mu.floor() as usize).min(cap);
        let peak = ln_poisson_pmf(mode as u64, mu).exp();
        let floor = peak * BAND_REL;
        let mut down = Vec::new();
        let mut v = peak;
        let mut k = mode;
        while k > 0 {
            v *= k as f64 / mu;
            k -= 1;
            if v < floor {
                break;
            }
            down.push(v);
        }
        let lo = mode - down.len();
        let mut values: Vec<f64> = down.into_iter().rev().collect();
        values.push(peak);
        let mut v = peak;
        let mut k = mode;
        while k < cap {
            k += 1;
            v *= mu / k as f64;
            if v < floor {
                break;
            }
            values.push(v);
        }
        PoissonBand { lo, values }
    }

    fn hi(&self) -> usize {
        self.lo + self.values.len() - 1
    }
}

/// Tabulated extra-phase distributions for one parameter vector and horizon.
#[derive(Debug)]
pub struct OccupationTable {
    params: ModelParams,
    t: f64,
    hi_state: StateId,
    lo_state: StateId,
    rate_hi: f64,
    n_max: usize,
    m_max: usize,
    // coef[l][n * (m_max + 1) + m]: probability of m extra phases after n
    // cycles plus l additional low-rate periods.
    coef: [Vec<f64>; 3],
}

impl OccupationTable {
    pub fn new(params: &ModelParams, t: f64, policy: &TruncationPolicy) -> Result<Self> {
        params.validate()?;
        if !(t.is_finite() && t > 0.0) {
            return domain(format!("horizon must be positive, got {t}"));
        }
        let (hi_state, lo_state) = if params.lambda1 >= params.lambda2 {
            (StateId::Resting, StateId::Handling)
        } else {
            (StateId::Handling, StateId::Resting)
        };
        let rate_hi = params.rate(hi_state);
        let q = params.rate(lo_state) / rate_hi;
        let p_hi = params.entry_prob(hi_state);
        let p_lo = params.entry_prob(lo_state);

        let n_max = policy.cycle_budget(t, params);
        let mu_h = rate_hi * t;
        let m_max = (mu_h + 12.0 * mu_h.sqrt() + 40.0).ceil() as usize;
        let width = m_max + 1;
        if (n_max + 1).saturating_mul(width).saturating_mul(3) > MAX_TABLE_ENTRIES {
            return domain(format!(
                "parameters {params} with horizon {t} need a coefficient table beyond the supported size"
            ));
        }

        let geometric = |src: &[f64], dst: &mut [f64]| {
            let mut run = 0.0;
            for (d, &c) in dst.iter_mut().zip(src) {
                run = c + (1.0 - q) * run;
                *d = q * run;
            }
        };

        let mut c0 = vec![0.0; (n_max + 1) * width];
        c0[0] = 1.0;
        let mut scratch = vec![0.0; width];
        for n in 1..=n_max {
            let (prev, rest) = c0.split_at_mut(n * width);
            let prev = &prev[(n - 1) * width..];
            let row = &mut rest[..width];
            geometric(prev, &mut scratch);
            for m in 0..width {
                row[m] = p_hi * prev[m] + p_lo * scratch[m];
            }
        }
        let mut c1 = vec![0.0; (n_max + 1) * width];
        let mut c2 = vec![0.0; (n_max + 1) * width];
        for n in 0..=n_max {
            let r = n * width..(n + 1) * width;
            geometric(&c0[r.clone()], &mut c1[r.clone()]);
            geometric(&c1[r.clone()], &mut c2[r]);
        }

        Ok(OccupationTable {
            params: *params,
            t,
            hi_state,
            lo_state,
            rate_hi,
            n_max,
            m_max,
            coef: [c0, c1, c2],
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    /// Atom of `M(t)` for the given start: location and weight.
    pub fn atom(&self, start: StateId) -> (f64, f64) {
        super::atom_of(start, self.t, &self.params)
    }

    fn low_count(&self, state: StateId) -> usize {
        usize::from(state == self.lo_state)
    }

    /// All nine densities `p_ij(s, t)` for `0 < s < t`, indexed `[i][j]`.
    pub fn densities(&self, s: f64) -> [[f64; 3]; 3] {
        let t = self.t;
        let y = (t - s).max(0.0);
        let p = &self.params;
        let width = self.m_max + 1;

        // phase densities g(y; j, hi) = hi * pois(j - 1; hi y), j >= 1
        let phases = PoissonBand::new(self.rate_hi * y, usize::MAX);
        let (j_lo, j_hi) = (phases.lo + 1, phases.hi() + 1);
        let cycles = PoissonBand::new(p.lambda0 * s, self.n_max);

        // sums[l][off]: sum_n pois(n; l0 s) sum_m coef[l][n][m] g(y; n + off + m, hi)
        let mut sums = [[0.0f64; 3]; 3];
        const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)];
        for (idx, &w) in cycles.values.iter().enumerate() {
            let n = cycles.lo + idx;
            for &(l, off) in &PAIRS {
                if off == 0 && n == 0 {
                    continue;
                }
                let base = n + off;
                if base > j_hi {
                    continue;
                }
                let m_start = j_lo.saturating_sub(base);
                let m_end = (j_hi - base).min(self.m_max);
                if m_start > m_end {
                    continue;
                }
                let row = &self.coef[l][n * width..(n + 1) * width];
                let ph = &phases.values[base + m_start - j_lo..=base + m_end - j_lo];
                let inner: f64 = row[m_start..=m_end].iter().zip(ph).map(|(c, g)| c * g).sum();
                sums[l][off] += w * inner;
            }
        }
        let scale = self.rate_hi;
        for row in sums.iter_mut() {
            for v in row.iter_mut() {
                *v *= scale;
            }
        }

        let mut out = [[0.0; 3]; 3];
        out[0][0] = sums[0][0];
        for j in [StateId::Resting, StateId::Handling] {
            let lj = self.low_count(j);
            let hfac = p.lambda0 * p.entry_prob(j) / p.rate(j);
            out[0][j.index()] = hfac * sums[lj][1];
            out[j.index()][0] = sums[lj][1];
            for i in [StateId::Resting, StateId::Handling] {
                let li = self.low_count(i);
                out[i.index()][j.index()] = hfac * sums[li + lj][2];
            }
        }
        out
    }

    /// Which off state has the larger exit rate.
    pub fn fast_off_state(&self) -> StateId {
        self.hi_state
    }
}

/// Shared handle; tables are immutable once built.
pub type SharedTable = Arc<OccupationTable>;
