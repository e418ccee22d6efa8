//! Likelihood of an observed track and parameter estimation.
//!
//! The likelihood is the joint density of the increments and of any state
//! information attached to the observation times. Disallowed states are
//! zeroed in the forward variables without re-inflating the remaining mass,
//! so a fully known state sequence gives the complete-data likelihood.

mod fit;
mod nelder_mead;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{domain, MrhError, Result};
use crate::kernel::{Displacement, PreparedKernel};
use crate::params::{ModelParams, StateId};
use crate::sim::SimulatedTrack;

pub use fit::{auto_init, fit_bm_baseline, fit_mle, FitOptions, FitResult, FixedMask, Init, PARAM_NAMES};
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};

/// What is known about the hidden state at one observation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StateInfo {
    #[default]
    Unknown,
    Known(StateId),
    /// States ruled out at this time (`true` = excluded), indexed by state.
    Excluded([bool; 3]),
}

impl StateInfo {
    pub fn allowed(&self) -> [bool; 3] {
        match *self {
            StateInfo::Unknown => [true; 3],
            StateInfo::Known(s) => {
                let mut a = [false; 3];
                a[s.index()] = true;
                a
            }
            StateInfo::Excluded(ex) => ex.map(|e| !e),
        }
    }

    pub fn excluding(states: &[StateId]) -> StateInfo {
        let mut ex = [false; 3];
        for s in states {
            ex[s.index()] = true;
        }
        StateInfo::Excluded(ex)
    }
}

/// Observation times, positions and per-time state information.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    times: Vec<f64>,
    positions: Vec<Vec<f64>>,
    state_info: Vec<StateInfo>,
}

impl Track {
    pub fn new(times: Vec<f64>, positions: Vec<Vec<f64>>, state_info: Vec<StateInfo>) -> Result<Self> {
        if times.len() < 2 {
            return domain("a track needs at least two observation times");
        }
        if positions.len() != times.len() || state_info.len() != times.len() {
            return domain("times, positions and state information must have equal length");
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("observation times must be finite and strictly increasing");
        }
        let d = positions[0].len();
        if d == 0 {
            return domain("positions need at least one coordinate");
        }
        for (k, p) in positions.iter().enumerate() {
            if p.len() != d {
                return domain(format!("position {k} has {} coordinates, expected {d}", p.len()));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return domain(format!("position {k} is not finite"));
            }
        }
        Ok(Track {
            times,
            positions,
            state_info,
        })
    }

    pub fn unconstrained(times: Vec<f64>, positions: Vec<Vec<f64>>) -> Result<Self> {
        let n = times.len();
        Self::new(times, positions, vec![StateInfo::Unknown; n])
    }

    pub fn from_simulated(sim: &SimulatedTrack) -> Result<Self> {
        Self::unconstrained(sim.times.clone(), sim.positions.clone())
    }

    pub fn with_state_info(mut self, info: Vec<StateInfo>) -> Result<Self> {
        if info.len() != self.times.len() {
            return domain("state information must have one entry per observation time");
        }
        self.state_info = info;
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn state_info(&self) -> &[StateInfo] {
        &self.state_info
    }

    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    /// Number of increments `n` (one less than the number of times).
    pub fn n_increments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `(gap, displacement)` for each increment.
    pub fn increments(&self) -> Vec<(f64, Displacement)> {
        (1..self.times.len())
            .map(|k| {
                let dx = self.positions[k]
                    .iter()
                    .zip(&self.positions[k - 1])
                    .map(|(a, b)| a - b)
                    .collect();
                (self.times[k] - self.times[k - 1], Displacement::from_finite(dx))
            })
            .collect()
    }
}

/// Stationary law of the chain, proportional to `(1/lambda0, p1/lambda1, p2/lambda2)`.
pub fn stationary_dist(params: &ModelParams) -> Result<[f64; 3]> {
    params.validate()?;
    Ok(params.stationary())
}

/// Normalized forward variables after consuming `index` increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardState {
    pub weights: [f64; 3],
    pub log_lik: f64,
    pub index: usize,
}

/// Transition-kernel matrices `f(X_k, j | i, gap_k)` for every increment.
/// One prepared kernel is built per distinct gap and shared by its increments.
pub fn kernel_matrices(track: &Track, params: &ModelParams) -> Result<Vec<[[f64; 3]; 3]>> {
    params.validate()?;
    let incs = track.increments();
    let mut kernels: HashMap<u64, PreparedKernel> = HashMap::new();
    for (dt, _) in &incs {
        if let std::collections::hash_map::Entry::Vacant(e) = kernels.entry(dt.to_bits()) {
            e.insert(PreparedKernel::new(params, *dt)?);
        }
    }
    incs.par_iter()
        .map(|(dt, x)| kernels[&dt.to_bits()].transition_matrix(x))
        .collect()
}

fn masked(v: [f64; 3], allowed: [bool; 3]) -> [f64; 3] {
    let mut out = v;
    for j in 0..3 {
        if !allowed[j] {
            out[j] = 0.0;
        }
    }
    out
}

/// Forward recursion on precomputed kernel matrices. Returns the state after
/// the base step (index 0) and after each increment.
pub fn forward_from_matrices(
    initial: [f64; 3],
    matrices: &[[[f64; 3]; 3]],
    state_info: &[StateInfo],
) -> Result<Vec<ForwardState>> {
    if state_info.len() != matrices.len() + 1 {
        return domain("need one state-information entry per observation time");
    }
    let mut out = Vec::with_capacity(matrices.len() + 1);
    let a = masked(initial, state_info[0].allowed());
    let d0: f64 = a.iter().sum();
    if !(d0 > 0.0) {
        return Err(MrhError::ZeroLikelihood { index: 0 });
    }
    let mut w = a.map(|v| v / d0);
    let mut log_lik = d0.ln();
    out.push(ForwardState {
        weights: w,
        log_lik,
        index: 0,
    });
    for (k, f) in matrices.iter().enumerate() {
        let mut a = [0.0; 3];
        for (j, aj) in a.iter_mut().enumerate() {
            *aj = (0..3).map(|i| w[i] * f[i][j]).sum();
        }
        let a = masked(a, state_info[k + 1].allowed());
        let d: f64 = a.iter().sum();
        if !(d > 0.0) || !d.is_finite() {
            return Err(MrhError::ZeroLikelihood { index: k + 1 });
        }
        w = a.map(|v| v / d);
        log_lik += d.ln();
        out.push(ForwardState {
            weights: w,
            log_lik,
            index: k + 1,
        });
    }
    Ok(out)
}

/// All forward states of a track.
pub fn forward_pass(track: &Track, params: &ModelParams) -> Result<Vec<ForwardState>> {
    let m = kernel_matrices(track, params)?;
    forward_from_matrices(params.stationary(), &m, track.state_info())
}

/// Log-likelihood by the normalized forward algorithm, with the chain
/// started from its stationary law.
pub fn loglik_forward(track: &Track, params: &ModelParams) -> Result<f64> {
    Ok(forward_pass(track, params)?.last().expect("base state").log_lik)
}

pub const BRUTE_MAX_INCREMENTS: usize = 10;

/// Sum over all `3^(n+1)` state sequences, each weighted by the initial law
/// and the kernel product; state information removes disallowed sequences.
pub fn loglik_brute_from_matrices(
    initial: [f64; 3],
    matrices: &[[[f64; 3]; 3]],
    state_info: &[StateInfo],
) -> Result<f64> {
    let n = matrices.len();
    if n > BRUTE_MAX_INCREMENTS {
        return Err(MrhError::TooLarge {
            n,
            max: BRUTE_MAX_INCREMENTS,
        });
    }
    if state_info.len() != n + 1 {
        return domain("need one state-information entry per observation time");
    }
    let total = 3usize.pow(n as u32 + 1);
    let mut sum = 0.0;
    let mut seq = vec![0usize; n + 1];
    'outer: for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut() {
            *s = c % 3;
            c /= 3;
        }
        for (k, &s) in seq.iter().enumerate() {
            if !state_info[k].allowed()[s] {
                continue 'outer;
            }
        }
        let mut prod = initial[seq[0]];
        for k in 0..n {
            prod *= matrices[k][seq[k]][seq[k + 1]];
        }
        sum += prod;
    }
    if !(sum > 0.0) {
        return Err(MrhError::ZeroLikelihood { index: n });
    }
    Ok(sum.ln())
}

/// Brute-force log-likelihood for tracks with at most 10 increments.
pub fn loglik_brute(track: &Track, params: &ModelParams) -> Result<f64> {
    if track.n_increments() > BRUTE_MAX_INCREMENTS {
        return Err(MrhError::TooLarge {
            n: track.n_increments(),
            max: BRUTE_MAX_INCREMENTS,
        });
    }
    let m = kernel_matrices(track, params)?;
    loglik_brute_from_matrices(params.stationary(), &m, track.state_info())
}
