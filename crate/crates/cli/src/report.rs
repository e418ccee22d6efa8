//! Fit reports and the model variants behind `mrh fit`.

use clap::ValueEnum;
use mrh_core::inference::{auto_init, PARAM_NAMES};
use mrh_core::{fit_bm_baseline, fit_mle, normal_pdf_d, FitOptions, FitResult, FixedMask, Init, ModelParams, Track};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Moving-resting-handling, all five parameters.
    Mrh,
    /// Moving-resting: `p1` fixed at 1, `lambda2` not reported.
    Mr,
    /// Brownian motion: `sigma` only.
    Bm,
}

/// Parameter values; absent entries do not apply to the model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Estimates {
    fn from_array(model: ModelKind, v: [Option<f64>; 5]) -> Self {
        let e = Estimates {
            lambda0: v[0],
            lambda1: v[1],
            lambda2: v[2],
            p1: v[3],
            sigma: v[4],
        };
        match model {
            ModelKind::Mrh => e,
            ModelKind::Mr => Estimates { lambda2: None, ..e },
            ModelKind::Bm => Estimates {
                sigma: e.sigma,
                ..Default::default()
            },
        }
    }

    fn from_params(model: ModelKind, p: &ModelParams) -> Self {
        Self::from_array(model, [p.lambda0, p.lambda1, p.lambda2, p.p1, p.sigma].map(Some))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub track: String,
    pub n_increments: usize,
    pub dim: usize,
    pub time_unit: String,
    pub round_grid: f64,
    pub init: String,
    pub fixed: Vec<String>,
    pub restarts: usize,
    pub max_evals: usize,
    pub standard_errors: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelKind,
    pub estimates: Estimates,
    /// `null` for the Brownian model when every increment is zero.
    pub loglik: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
    pub settings: Settings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Estimates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Estimates>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitReport {
    /// Full parameter vector for re-evaluating the likelihood, `None` for the
    /// Brownian model. `lambda2` does not enter when `p1 = 1`; `lambda1` stands in.
    pub fn params(&self) -> Result<Option<ModelParams>> {
        let e = &self.estimates;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Usage(format!("report lacks `{name}`")));
        let p = match self.model {
            ModelKind::Bm => return Ok(None),
            ModelKind::Mrh => ModelParams::new(
                need(e.lambda0, "lambda0")?,
                need(e.lambda1, "lambda1")?,
                need(e.lambda2, "lambda2")?,
                need(e.p1, "p1")?,
                need(e.sigma, "sigma")?,
            )?,
            ModelKind::Mr => {
                let l1 = need(e.lambda1, "lambda1")?;
                ModelParams::new(need(e.lambda0, "lambda0")?, l1, l1, 1.0, need(e.sigma, "sigma")?)?
            }
        };
        Ok(Some(p))
    }
}

/// Log-likelihood of independent Gaussian increments with variance `sigma^2 * gap`.
pub fn bm_loglik(track: &Track, sigma: f64) -> Result<Option<f64>> {
    if sigma <= 0.0 {
        return Ok(None);
    }
    let mut sum = 0.0;
    for (dt, x) in track.increments() {
        sum += normal_pdf_d(&x, sigma * sigma * dt)?.ln();
    }
    Ok(Some(sum))
}

pub fn parse_fixed(names: &[String]) -> Result<FixedMask> {
    let mut mask = FixedMask::none();
    for n in names {
        let k = PARAM_NAMES
            .iter()
            .position(|p| p.eq_ignore_ascii_case(n.trim()))
            .ok_or_else(|| CliError::Usage(format!("unknown parameter `{n}`; expected one of {PARAM_NAMES:?}")))?;
        mask.0[k] = true;
    }
    Ok(mask)
}

#[derive(Debug, Clone)]
pub struct FitRequest {
    pub model: ModelKind,
    pub init: Option<ModelParams>,
    pub fixed: FixedMask,
    pub options: FitOptions,
}

fn fixed_names(mask: FixedMask) -> Vec<String> {
    PARAM_NAMES
        .iter()
        .zip(mask.0)
        .filter(|(_, f)| *f)
        .map(|(n, _)| n.to_string())
        .collect()
}

/// Fit the requested model. `settings` is echoed into the report after the
/// init, fixed-parameter and optimizer fields are filled in.
pub fn run_fit(track: &Track, req: &FitRequest, mut settings: Settings) -> Result<FitReport> {
    settings.init = if req.init.is_some() { "given" } else { "auto" }.to_string();
    settings.restarts = req.options.restarts;
    settings.max_evals = req.options.simplex.max_evals;
    settings.standard_errors = req.options.standard_errors;

    if req.model == ModelKind::Bm {
        let sigma = fit_bm_baseline(track)?;
        settings.fixed = Vec::new();
        return Ok(FitReport {
            model: ModelKind::Bm,
            estimates: Estimates {
                sigma: Some(sigma),
                ..Default::default()
            },
            loglik: bm_loglik(track, sigma)?,
            converged: true,
            iterations: 0,
            seed: req.options.seed,
            settings,
            initial: None,
            stderr: None,
            warnings: Vec::new(),
        });
    }

    let (init, fixed) = match req.model {
        ModelKind::Mr => {
            let mut p = match req.init {
                Some(p) => p,
                None => auto_init(track)?,
            };
            p.p1 = 1.0;
            let mut mask = req.fixed;
            mask.0[2] = true;
            mask.0[3] = true;
            (Init::Params(p), mask)
        }
        _ => (req.init.map_or(Init::Auto, Init::Params), req.fixed),
    };
    settings.fixed = fixed_names(fixed);
    let r: FitResult = fit_mle(track, init, fixed, &req.options)?;
    Ok(FitReport {
        model: req.model,
        estimates: Estimates::from_params(req.model, &r.estimates),
        loglik: Some(r.log_lik),
        converged: r.converged,
        iterations: r.iterations,
        seed: req.options.seed,
        settings,
        initial: Some(Estimates::from_params(req.model, &r.initial)),
        stderr: r.stderr.map(|se| Estimates::from_array(req.model, se)),
        warnings: r.warnings,
    })
}
