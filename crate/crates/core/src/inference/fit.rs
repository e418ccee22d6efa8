use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, Normal};

use super::nelder_mead::{nelder_mead, NelderMeadOptions};
use super::{loglik_forward, Track};
use crate::error::{domain, Result};
use crate::params::ModelParams;
use crate::sim::path_rng;

pub const PARAM_NAMES: [&str; 5] = ["lambda0", "lambda1", "lambda2", "p1", "sigma"];

/// Parameters held at their initial value during fitting, in the order of
/// [`PARAM_NAMES`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FixedMask(pub [bool; 5]);

impl FixedMask {
    pub fn none() -> Self {
        FixedMask([false; 5])
    }

    pub fn all() -> Self {
        FixedMask([true; 5])
    }

    /// The moving-resting comparison model: `p1 = 1`, so `lambda2` never enters.
    pub fn moving_resting() -> Self {
        FixedMask([false, false, true, true, false])
    }

    pub fn free_count(&self) -> usize {
        self.0.iter().filter(|f| !**f).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Auto,
    Params(ModelParams),
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Simplex runs after the first, each started from a seeded perturbation
    /// of the best point so far.
    pub restarts: usize,
    pub restart_scale: f64,
    pub simplex: NelderMeadOptions,
    pub seed: u64,
    pub standard_errors: bool,
    pub hessian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 3,
            restart_scale: 0.3,
            simplex: NelderMeadOptions::default(),
            seed: 0,
            standard_errors: false,
            hessian_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub estimates: ModelParams,
    pub log_lik: f64,
    pub converged: bool,
    /// Total log-likelihood evaluations.
    pub iterations: usize,
    pub fixed_mask: FixedMask,
    pub initial: ModelParams,
    /// Approximate standard errors (delta method), `None` for fixed or
    /// unidentified coordinates.
    pub stderr: Option<[Option<f64>; 5]>,
    pub warnings: Vec<String>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn to_eta(p: &ModelParams) -> [f64; 5] {
    let p1 = p.p1.clamp(1e-9, 1.0 - 1e-9);
    [p.lambda0.ln(), p.lambda1.ln(), p.lambda2.ln(), logit(p1), p.sigma.ln()]
}

fn from_eta(eta: &[f64; 5]) -> Result<ModelParams> {
    ModelParams::new(eta[0].exp(), eta[1].exp(), eta[2].exp(), expit(eta[3]), eta[4].exp())
}

/// `d theta / d eta` at `p`.
fn jacobian(p: &ModelParams) -> [f64; 5] {
    [p.lambda0, p.lambda1, p.lambda2, p.p1 * (1.0 - p.p1), p.sigma]
}

/// Closed-form MLE of `sigma` for Brownian motion that never stops:
/// `sigma^2 = sum |X_i|^2 / (d sum gaps)`.
pub fn fit_bm_baseline(track: &Track) -> Result<f64> {
    let total: f64 = track.gaps().iter().sum();
    if !(total > 0.0) {
        return domain("total observation time must be positive");
    }
    let ss: f64 = track.increments().iter().map(|(_, x)| x.norm_sq()).sum();
    Ok((ss / (track.dim() as f64 * total)).sqrt())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Deterministic starting point from simple track summaries.
pub fn auto_init(track: &Track) -> Result<ModelParams> {
    let gaps = track.gaps();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let bm = fit_bm_baseline(track)?;
    let sigma = if bm > 0.0 { 2.0 * bm } else { 1.0 };

    // durations of maximal runs of exactly-zero increments
    let mut runs = Vec::new();
    let mut cur = 0.0;
    for (dt, x) in track.increments() {
        if x.is_exact_zero() {
            cur += dt;
        } else if cur > 0.0 {
            runs.push(cur);
            cur = 0.0;
        }
    }
    if cur > 0.0 {
        runs.push(cur);
    }
    runs.sort_by(f64::total_cmp);
    let (mut l1, mut l2) = if runs.is_empty() {
        (2.0 / mean_gap, 0.5 / mean_gap)
    } else {
        (
            1.0 / quantile(&runs, 0.25).max(0.5 * mean_gap),
            1.0 / quantile(&runs, 0.75).max(mean_gap),
        )
    };
    if l1 < 1.5 * l2 {
        l1 = 2.0 * l2;
    }
    let p1 = 0.7;
    // With sigma inflated twofold, sigma_bm^2 = pi0 sigma^2 gives pi0 = 1/4.
    let pi0 = (bm / sigma).powi(2).clamp(0.01, 0.99);
    let mean_off = p1 / l1 + (1.0 - p1) / l2;
    let l0 = (1.0 - pi0) / (pi0 * mean_off);
    let clamp = |r: f64| r.clamp(1e-4 / mean_gap, 1e3 / mean_gap);
    l1 = clamp(l1);
    l2 = clamp(l2);
    ModelParams::new(clamp(l0), l1, l2, p1, sigma)
}

/// Largest `rate * gap` explored by the optimizer; beyond it the occupation
/// tables grow without changing the likelihood materially.
const MAX_RATE_GAP: f64 = 1000.0;

/// Maximize the forward log-likelihood over the free parameters.
pub fn fit_mle(track: &Track, init: Init, fixed: FixedMask, opts: &FitOptions) -> Result<FitResult> {
    let initial = match init {
        Init::Auto => auto_init(track)?,
        Init::Params(p) => {
            p.validate()?;
            p
        }
    };
    let max_gap = track.gaps().into_iter().fold(0.0, f64::max);
    let eta0 = to_eta(&initial);
    let free: Vec<usize> = (0..5).filter(|&i| !fixed.0[i]).collect();
    let params_at = |z: &[f64]| -> Result<ModelParams> {
        let mut eta = eta0;
        for (k, &i) in free.iter().enumerate() {
            eta[i] = z[k];
        }
        let back = from_eta(&eta)?;
        // held values are copied, not round-tripped through the transform
        let pick = |i: usize, a: f64, b: f64| if fixed.0[i] { a } else { b };
        ModelParams::new(
            pick(0, initial.lambda0, back.lambda0),
            pick(1, initial.lambda1, back.lambda1),
            pick(2, initial.lambda2, back.lambda2),
            pick(3, initial.p1, back.p1),
            pick(4, initial.sigma, back.sigma),
        )
    };
    let objective = |z: &[f64]| -> f64 {
        if z.iter().any(|v| !v.is_finite() || v.abs() > 40.0) {
            return f64::INFINITY;
        }
        let Ok(p) = params_at(z) else {
            return f64::INFINITY;
        };
        if [p.lambda0, p.lambda1, p.lambda2]
            .iter()
            .any(|r| r * max_gap > MAX_RATE_GAP)
        {
            return f64::INFINITY;
        }
        match loglik_forward(track, &p) {
            Ok(l) if l.is_finite() => -l,
            _ => f64::INFINITY,
        }
    };

    let z0: Vec<f64> = free.iter().map(|&i| eta0[i]).collect();
    let mut evals = 0;
    let first = nelder_mead(&objective, &z0, &opts.simplex);
    evals += first.evals;
    let mut best = first;
    if !free.is_empty() {
        let mut rng = path_rng(opts.seed, 0);
        let noise = Normal::new(0.0, opts.restart_scale).expect("positive scale");
        for _ in 0..opts.restarts {
            let start: Vec<f64> = best.x.iter().map(|v| v + noise.sample(&mut rng)).collect();
            let r = nelder_mead(&objective, &start, &opts.simplex);
            evals += r.evals;
            if r.f < best.f || (r.f == best.f && r.converged && !best.converged) {
                best = r;
            }
        }
    }

    let mut warnings = Vec::new();
    if !best.f.is_finite() {
        return Ok(FitResult {
            estimates: initial,
            log_lik: f64::NEG_INFINITY,
            converged: false,
            iterations: evals,
            fixed_mask: fixed,
            initial,
            stderr: None,
            warnings: vec!["no finite log-likelihood found".into()],
        });
    }
    let estimates = params_at(&best.x)?;
    let log_lik = loglik_forward(track, &estimates)?;

    let stderr = if opts.standard_errors && !free.is_empty() {
        let (se, w) = standard_errors(&objective, &best.x, &free, &estimates, opts.hessian_step);
        evals += 2 * free.len() * free.len() + 1;
        warnings.extend(w);
        Some(se)
    } else {
        None
    };

    Ok(FitResult {
        estimates,
        log_lik,
        converged: best.converged,
        iterations: evals,
        fixed_mask: fixed,
        initial,
        stderr,
        warnings,
    })
}

fn standard_errors<F: Fn(&[f64]) -> f64>(
    f: &F,
    z: &[f64],
    free: &[usize],
    est: &ModelParams,
    h: f64,
) -> ([Option<f64>; 5], Vec<String>) {
    let k = z.len();
    let f0 = f(z);
    let at = |d: &[(usize, f64)]| {
        let mut x = z.to_vec();
        for &(i, s) in d {
            x[i] += s;
        }
        f(&x)
    };
    // Hessian of the negative log-likelihood = observed information
    let mut info = DMatrix::zeros(k, k);
    for i in 0..k {
        info[(i, i)] = (at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)]) + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            info[(i, j)] = v;
            info[(j, i)] = v;
        }
    }
    let mut warnings = Vec::new();
    let mut out = [None; 5];
    if info.iter().any(|v| !v.is_finite()) {
        warnings.push("standard errors unavailable: non-finite Hessian".into());
        return (out, warnings);
    }
    let eig = SymmetricEigen::new(info.clone());
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < 1e-6 {
        warnings.push(format!(
            "flat direction in the likelihood (smallest Hessian eigenvalue {min_eig:.3e}); standard errors unreliable"
        ));
    }
    let Some(cov) = info.try_inverse() else {
        warnings.push("standard errors unavailable: singular Hessian".into());
        return (out, warnings);
    };
    let jac = jacobian(est);
    for (a, &i) in free.iter().enumerate() {
        let v = cov[(a, a)];
        if v > 0.0 {
            out[i] = Some(jac[i] * v.sqrt());
        }
    }
    (out, warnings)
}
