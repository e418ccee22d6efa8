//! Exact simulation of the switching chain, its moving-time occupation and
//! the observed positions.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`; path `k`
//! of a batch uses stream `k`, so batches are reproducible regardless of how
//! they are split across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::params::{ModelParams, StartSpec, StateId};

/// Piecewise-constant chain path. `states[0]` holds on `[0, jump_times[0])`,
/// `states[k]` on `[jump_times[k - 1], jump_times[k])`, the last state until `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub jump_times: Vec<f64>,
    pub states: Vec<StateId>,
    pub t_end: f64,
}

impl ChainPath {
    pub fn start(&self) -> StateId {
        self.states[0]
    }

    pub fn state_at(&self, t: f64) -> StateId {
        let k = self.jump_times.partition_point(|&u| u <= t);
        self.states[k]
    }

    /// Holding periods as `(state, begin, end)`, the last one cut at `t_end`.
    pub fn segments(&self) -> impl Iterator<Item = (StateId, f64, f64)> + '_ {
        self.states.iter().enumerate().map(move |(k, &s)| {
            let a = if k == 0 { 0.0 } else { self.jump_times[k - 1] };
            let b = self.jump_times.get(k).copied().unwrap_or(self.t_end);
            (s, a, b)
        })
    }
}

fn draw_start<R: Rng>(rng: &mut R, params: &ModelParams, start: StartSpec) -> StateId {
    match start {
        StartSpec::State(s) => s,
        StartSpec::Stationary => {
            let pi = params.stationary();
            let u: f64 = rng.random();
            if u < pi[0] {
                StateId::Moving
            } else if u < pi[0] + pi[1] {
                StateId::Resting
            } else {
                StateId::Handling
            }
        }
    }
}

struct Holding {
    exp: [Exp<f64>; 3],
    p1: f64,
}

impl Holding {
    fn new(params: &ModelParams) -> Result<Self> {
        let e = |r: f64| Exp::new(r).map_err(|e| crate::MrhError::Domain(e.to_string()));
        Ok(Holding {
            exp: [e(params.lambda0)?, e(params.lambda1)?, e(params.lambda2)?],
            p1: params.p1,
        })
    }

    fn hold<R: Rng>(&self, rng: &mut R, s: StateId) -> f64 {
        self.exp[s.index()].sample(rng)
    }

    fn next<R: Rng>(&self, rng: &mut R, s: StateId) -> StateId {
        match s {
            StateId::Moving => {
                if rng.random::<f64>() < self.p1 {
                    StateId::Resting
                } else {
                    StateId::Handling
                }
            }
            _ => StateId::Moving,
        }
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return domain(format!("horizon must be positive, got {t}"));
    }
    Ok(())
}

/// Simulate the chain on `[0, t_end]` from an explicit generator.
pub fn simulate_chain_with<R: Rng>(
    rng: &mut R,
    params: &ModelParams,
    t_end: f64,
    start: StartSpec,
) -> Result<ChainPath> {
    params.validate()?;
    check_horizon(t_end)?;
    let h = Holding::new(params)?;
    let mut s = draw_start(rng, params, start);
    let mut states = vec![s];
    let mut jump_times = Vec::new();
    let mut now = 0.0;
    loop {
        now += h.hold(rng, s);
        if now > t_end {
            break;
        }
        s = h.next(rng, s);
        jump_times.push(now);
        states.push(s);
    }
    Ok(ChainPath {
        jump_times,
        states,
        t_end,
    })
}

pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulate the chain on `[0, t_end]`.
pub fn simulate_chain(params: &ModelParams, t_end: f64, start: StartSpec, seed: u64) -> Result<ChainPath> {
    simulate_chain_with(&mut path_rng(seed, 0), params, t_end, start)
}

/// Time spent moving during `[0, t]`.
pub fn occupation_of(path: &ChainPath, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= path.t_end) {
        return domain(format!("time {t} outside the path horizon [0, {}]", path.t_end));
    }
    let mut m = 0.0;
    for (s, a, b) in path.segments() {
        if a >= t {
            break;
        }
        if s == StateId::Moving {
            m += b.min(t) - a;
        }
    }
    Ok(m)
}

/// Simulated observations of the switching Brownian motion.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrack {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub states: Vec<StateId>,
    /// `M(t)` at each observation time.
    pub occupations: Vec<f64>,
}

impl SimulatedTrack {
    pub fn dim(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }
}

/// Simulate positions at `times` (nonnegative, strictly increasing) with
/// `X(0) = 0`. Chain and normal draws use separate streams.
pub fn simulate_mrh(
    params: &ModelParams,
    times: &[f64],
    dim: usize,
    start: StartSpec,
    seed: u64,
) -> Result<SimulatedTrack> {
    params.validate()?;
    if times.is_empty() {
        return domain("need at least one observation time");
    }
    if dim == 0 {
        return domain("dimension must be at least 1");
    }
    if !(times[0] >= 0.0 && times[0].is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("observation times must be nonnegative and strictly increasing");
    }
    let t_end = times[times.len() - 1].max(f64::MIN_POSITIVE);
    let path = simulate_chain_with(&mut path_rng(seed, 0), params, t_end, start)?;
    let mut noise = path_rng(seed, 1);

    let mut occupations = Vec::with_capacity(times.len());
    let mut states = Vec::with_capacity(times.len());
    let mut positions = Vec::with_capacity(times.len());
    let mut pos = vec![0.0; dim];
    let mut m_prev = 0.0;
    for &t in times {
        let m = occupation_of(&path, t)?;
        let gain = m - m_prev;
        if gain > 0.0 {
            let sd = params.sigma * gain.sqrt();
            for c in pos.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut noise);
                *c += sd * z;
            }
        }
        m_prev = m;
        occupations.push(m);
        states.push(path.state_at(t));
        positions.push(pos.clone());
    }
    Ok(SimulatedTrack {
        times: times.to_vec(),
        positions,
        states,
        occupations,
    })
}

/// Moving time, end state and whether any jump occurred on `[0, t]`,
/// without storing the path.
pub fn sample_occupation<R: Rng>(
    rng: &mut R,
    params: &ModelParams,
    t: f64,
    start: StateId,
) -> Result<(f64, StateId, bool)> {
    let h = Holding::new(params)?;
    let mut s = start;
    let mut now = 0.0;
    let mut m = 0.0;
    loop {
        let d = h.hold(rng, s);
        if now + d > t {
            if s == StateId::Moving {
                m += t - now;
            }
            return Ok((m.min(t), s, now > 0.0));
        }
        if s == StateId::Moving {
            m += d;
        }
        now += d;
        s = h.next(rng, s);
    }
}

pub const HISTOGRAM_BINS: usize = 200;

/// Binned Monte Carlo estimate of the `(M(t), S(t))` law for one start state.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationHistogram {
    pub start: StateId,
    pub t: f64,
    pub n_paths: u64,
    /// `counts[j][b]`: paths ending in `j` with `M(t)` in bin `b` of `(0, t)`.
    pub counts: [Vec<u64>; 3],
    /// Paths with no jump (`M(t) = t` from state 0, `M(t) = 0` otherwise).
    pub atom_count: u64,
}

impl OccupationHistogram {
    pub fn bins(&self) -> usize {
        self.counts[0].len()
    }

    pub fn bin_width(&self) -> f64 {
        self.t / self.bins() as f64
    }

    pub fn bin_edges(&self, b: usize) -> (f64, f64) {
        let w = self.bin_width();
        (b as f64 * w, (b + 1) as f64 * w)
    }

    pub fn atom_frequency(&self) -> f64 {
        self.atom_count as f64 / self.n_paths as f64
    }

    /// Fraction of paths ending in each state, atoms included.
    pub fn end_state_frequencies(&self) -> [f64; 3] {
        let mut f = [0.0; 3];
        for j in 0..3 {
            f[j] = self.counts[j].iter().sum::<u64>() as f64;
        }
        f[self.start.index()] += self.atom_count as f64;
        f.map(|c| c / self.n_paths as f64)
    }

    /// Density estimate `count / (n_paths * bin_width)` for end state `j`, bin `b`.
    pub fn density(&self, j: StateId, b: usize) -> f64 {
        self.counts[j.index()][b] as f64 / (self.n_paths as f64 * self.bin_width())
    }
}

/// Simulate `n_paths` chains from `start` up to `t` and bin `(M(t), S(t))`
/// into 200 equal bins over `(0, t)`, tallying the no-jump atom separately.
pub fn empirical_occupation_law(
    params: &ModelParams,
    start: StateId,
    t: f64,
    n_paths: u64,
    seed: u64,
) -> Result<OccupationHistogram> {
    params.validate()?;
    check_horizon(t)?;
    if n_paths == 0 {
        return domain("need at least one path");
    }
    let bins = HISTOGRAM_BINS;
    let chunk = 4096u64;
    let n_chunks = n_paths.div_ceil(chunk);
    let empty = || ([vec![0u64; bins], vec![0u64; bins], vec![0u64; bins]], 0u64);
    let (counts, atom_count) = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<_> {
            let (mut counts, mut atoms) = empty();
            for k in c * chunk..((c + 1) * chunk).min(n_paths) {
                let (m, end, jumped) = sample_occupation(&mut path_rng(seed, k), params, t, start)?;
                if !jumped {
                    atoms += 1;
                    continue;
                }
                let b = ((m / t * bins as f64) as usize).min(bins - 1);
                counts[end.index()][b] += 1;
            }
            Ok((counts, atoms))
        })
        .try_reduce(empty, |mut a, b| {
            for j in 0..3 {
                for (x, y) in a.0[j].iter_mut().zip(&b.0[j]) {
                    *x += y;
                }
            }
            a.1 += b.1;
            Ok(a)
        })?;
    Ok(OccupationHistogram {
        start,
        t,
        n_paths,
        counts,
        atom_count,
    })
}
