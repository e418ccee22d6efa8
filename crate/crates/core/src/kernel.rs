//! Joint law of the displacement and end state over one time step, obtained
//! by mixing a centered normal over the occupation-time law.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{domain, Result};
use crate::occupation::{OccupationTable, TruncationPolicy};
use crate::params::{ModelParams, StateId};
use crate::quad::{self, gk15_rule, Panel, QuadOptions, NODES};

/// A displacement vector in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    coords: Vec<f64>,
}

impl Displacement {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return domain("displacement needs at least one coordinate");
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return domain(format!("displacement coordinate {c} is not finite"));
        }
        Ok(Displacement { coords })
    }

    pub(crate) fn from_finite(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty() && coords.iter().all(|c| c.is_finite()));
        Displacement { coords }
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    /// True only when every coordinate is exactly `0.0` (either sign).
    pub fn is_exact_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }
}

/// One evaluation of the transition kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelQuery {
    pub from_state: StateId,
    pub to_state: StateId,
    pub displacement: Displacement,
    pub dt: f64,
}

impl KernelQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return domain(format!("time step must be positive, got {}", self.dt));
        }
        Ok(())
    }
}

fn ln_normal_pdf(r2: f64, dim: usize, variance: f64) -> f64 {
    -0.5 * dim as f64 * (2.0 * PI * variance).ln() - 0.5 * r2 / variance
}

/// Centered normal density in `R^d` with covariance `variance * I`.
pub fn normal_pdf_d(x: &Displacement, variance: f64) -> Result<f64> {
    if !(variance.is_finite() && variance > 0.0) {
        return domain(format!("variance must be positive, got {variance}"));
    }
    Ok(ln_normal_pdf(x.norm_sq(), x.dim(), variance).exp())
}

/// Depth of the geometric panel ladder below `t / 2`.
const LADDER_DEPTH: i32 = 60;

/// Panels whose right end lies below this fraction of `|x|^2 / (d sigma^2)`
/// carry a normal factor below `exp(-25 d)` of its peak and are skipped.
const SKIP_FRACTION: f64 = 0.02;

type Nodes = [[f64; 9]; NODES];

/// Occupation densities at fixed quadrature nodes for one `(dt, params)`,
/// shared by every displacement observed over that time step.
#[derive(Debug)]
pub struct PreparedKernel {
    params: ModelParams,
    dt: f64,
    table: OccupationTable,
    opts: QuadOptions,
    /// `[0, inner]` is integrated in `u` with `s = inner * u^2`.
    inner: f64,
    inner_nodes: OnceLock<Nodes>,
    panels: Vec<(f64, f64)>,
    nodes: Vec<OnceLock<Nodes>>,
}

fn flat(d: [[f64; 3]; 3]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = d[i][j];
        }
    }
    out
}

impl PreparedKernel {
    pub fn new(params: &ModelParams, dt: f64) -> Result<Self> {
        Self::with_options(params, dt, QuadOptions::default())
    }

    pub fn with_options(params: &ModelParams, dt: f64, opts: QuadOptions) -> Result<Self> {
        params.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return domain(format!("time step must be positive, got {dt}"));
        }
        let table = OccupationTable::new(params, dt, &TruncationPolicy::default())?;
        let t = dt;
        let mut pts: Vec<f64> = [0.5, 0.625, 0.75, 0.875, 0.99, 1.0].iter().map(|f| f * t).collect();
        pts.extend((2..=LADDER_DEPTH).map(|k| t * 2f64.powi(-k)));
        pts.extend([t * 1e-2, t * 1e-4]);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let inner = pts[0];
        let panels: Vec<(f64, f64)> = pts.windows(2).map(|w| (w[0], w[1])).collect();
        let nodes = (0..panels.len()).map(|_| OnceLock::new()).collect();
        Ok(PreparedKernel {
            params: *params,
            dt,
            table,
            opts,
            inner,
            inner_nodes: OnceLock::new(),
            panels,
            nodes,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn panel_nodes(&self, k: usize) -> &Nodes {
        self.nodes[k].get_or_init(|| {
            let (a, b) = self.panels[k];
            let (x, _, _) = gk15_rule(a, b);
            let mut v = [[0.0; 9]; NODES];
            for (slot, &s) in v.iter_mut().zip(&x) {
                *slot = flat(self.table.densities(s));
            }
            v
        })
    }

    fn inner_panel_nodes(&self) -> &Nodes {
        self.inner_nodes.get_or_init(|| {
            let a = self.inner;
            let (u, _, _) = gk15_rule(0.0, 1.0);
            let mut v = [[0.0; 9]; NODES];
            for (slot, &ui) in v.iter_mut().zip(&u) {
                let jac = 2.0 * a * ui;
                let d = flat(self.table.densities(a * ui * ui));
                for c in 0..9 {
                    slot[c] = jac * d[c];
                }
            }
            v
        })
    }

    /// `h_ij(x, dt)` for all nine `(i, j)`, indexed `[i][j]`. The atom term
    /// `exp(-lambda0 dt) phi_d(x, sigma^2 dt)` is included in `[0][0]`.
    pub fn joint_densities(&self, x: &Displacement) -> Result<[[f64; 3]; 3]> {
        let dim = x.dim();
        let r2 = x.norm_sq();
        let var = self.params.sigma * self.params.sigma;
        let s_lo = SKIP_FRACTION * r2 / (dim as f64 * var);
        let ln_phi = |s: f64| ln_normal_pdf(r2, dim, var * s);

        let mut panels: Vec<Panel<9>> = Vec::with_capacity(self.panels.len());
        for (k, &(a, b)) in self.panels.iter().enumerate() {
            if b < s_lo {
                continue;
            }
            let (xs, _, _) = gk15_rule(a, b);
            let dens = self.panel_nodes(k);
            let mut v = [[0.0; 9]; NODES];
            for n in 0..NODES {
                let phi = ln_phi(xs[n]).exp();
                for c in 0..9 {
                    v[n][c] = phi * dens[n][c];
                }
            }
            panels.push(Panel::from_values(a, b, &v));
        }
        let mut inner = [0.0; 9];
        if self.inner >= s_lo {
            let (u, wk, _) = gk15_rule(0.0, 1.0);
            let dens = self.inner_panel_nodes();
            for n in 0..NODES {
                let s = self.inner * u[n] * u[n];
                if s == 0.0 {
                    continue;
                }
                let w = wk[n] * ln_phi(s).exp();
                for c in 0..9 {
                    inner[c] += w * dens[n][c];
                }
            }
        }

        let mut scale = 0.0f64;
        for p in &panels {
            for c in 0..9 {
                scale = scale.max(p.value[c].abs());
            }
        }
        let opts = QuadOptions {
            abs_tol: self.opts.abs_tol.max(1e-3 * self.opts.rel_tol * scale),
            ..self.opts
        };
        let table = &self.table;
        let mut f = |s: f64| {
            let phi = ln_phi(s).exp();
            let mut d = flat(table.densities(s));
            for v in d.iter_mut() {
                *v *= phi;
            }
            d
        };
        let est = quad::refine(panels, &mut f, &opts)?;

        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (est.value[3 * i + j] + inner[3 * i + j]).max(0.0);
            }
        }
        out[0][0] += (-self.params.lambda0 * self.dt + ln_normal_pdf(r2, dim, var * self.dt)).exp();
        Ok(out)
    }

    /// Transition kernel matrix `f(x, j | i, dt)`, indexed `[i][j]`: the atom
    /// probabilities at an exact-zero displacement, densities otherwise.
    pub fn transition_matrix(&self, x: &Displacement) -> Result<[[f64; 3]; 3]> {
        if x.is_exact_zero() {
            let mut out = [[0.0; 3]; 3];
            for s in [StateId::Resting, StateId::Handling] {
                out[s.index()][s.index()] = (-self.params.rate(s) * self.dt).exp();
            }
            return Ok(out);
        }
        self.joint_densities(x)
    }
}

/// `h_ij(x, t)`: density per unit volume of `X(t) = x, S(t) = j` given `S(0) = i`.
pub fn joint_density(
    from: StateId,
    to: StateId,
    x: &Displacement,
    t: f64,
    params: &ModelParams,
    quad: &QuadOptions,
) -> Result<f64> {
    let k = PreparedKernel::with_options(params, t, *quad)?;
    Ok(k.joint_densities(x)?[from.index()][to.index()])
}

/// Transition kernel: a probability at exact-zero displacements (nonzero only
/// when staying in a motionless state), a density otherwise.
pub fn transition_kernel(q: &KernelQuery, params: &ModelParams) -> Result<f64> {
    q.validate()?;
    params.validate()?;
    if q.displacement.is_exact_zero() {
        return Ok(if q.from_state == q.to_state && q.from_state.is_motionless() {
            (-params.rate(q.from_state) * q.dt).exp()
        } else {
            0.0
        });
    }
    joint_density(
        q.from_state,
        q.to_state,
        &q.displacement,
        q.dt,
        params,
        &QuadOptions::default(),
    )
}
