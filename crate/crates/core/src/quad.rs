//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.
//!
//! The integrator works on vectors of integrands sharing the same abscissae so
//! the nine transition densities of a kernel query are integrated in one pass.
//! Panels can be built from precomputed node values and handed to [`refine`],
//! which bisects only the panels that miss the tolerance.

use crate::error::{MrhError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Number of abscissae per panel.
pub const NODES: usize = 15;

/// Abscissae of the 15-point rule on `[a, b]` together with the Kronrod and
/// embedded Gauss weights (Gauss weight is zero at Kronrod-only nodes).
pub fn gk15_rule(a: f64, b: f64) -> ([f64; NODES], [f64; NODES], [f64; NODES]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut x = [0.0; NODES];
    let mut wk = [0.0; NODES];
    let mut wg = [0.0; NODES];
    for i in 0..7 {
        x[i] = c - h * XGK[i];
        x[14 - i] = c + h * XGK[i];
        wk[i] = h * WGK[i];
        wk[14 - i] = h * WGK[i];
        if i % 2 == 1 {
            wg[i] = h * WG[i / 2];
            wg[14 - i] = h * WG[i / 2];
        }
    }
    x[7] = c;
    wk[7] = h * WGK[7];
    wg[7] = h * WG[3];
    (x, wk, wg)
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-8,
            abs_tol: 0.0,
            max_panels: 400,
        }
    }
}

/// One integrated panel: Kronrod estimate and `|Kronrod - Gauss|` per component.
#[derive(Debug, Clone, Copy)]
pub struct Panel<const N: usize> {
    pub a: f64,
    pub b: f64,
    pub value: [f64; N],
    pub error: [f64; N],
}

impl<const N: usize> Panel<N> {
    /// Assemble a panel from integrand values at the [`gk15_rule`] nodes of `[a, b]`.
    pub fn from_values(a: f64, b: f64, values: &[[f64; N]; NODES]) -> Self {
        let (_, wk, wg) = gk15_rule(a, b);
        let mut value = [0.0; N];
        let mut gauss = [0.0; N];
        for (i, v) in values.iter().enumerate() {
            for c in 0..N {
                value[c] += wk[i] * v[c];
                gauss[c] += wg[i] * v[c];
            }
        }
        let mut error = [0.0; N];
        for c in 0..N {
            error[c] = (value[c] - gauss[c]).abs();
        }
        Panel { a, b, value, error }
    }

    pub fn evaluate<F: FnMut(f64) -> [f64; N]>(f: &mut F, a: f64, b: f64) -> Self {
        let (x, _, _) = gk15_rule(a, b);
        let mut values = [[0.0; N]; NODES];
        for (v, &xi) in values.iter_mut().zip(x.iter()) {
            *v = f(xi);
        }
        Self::from_values(a, b, &values)
    }
}

/// Integral estimate with its error bound.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub panels: usize,
}

fn totals<const N: usize>(panels: &[Panel<N>]) -> ([f64; N], [f64; N]) {
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for p in panels {
        for c in 0..N {
            value[c] += p.value[c];
            error[c] += p.error[c];
        }
    }
    (value, error)
}

fn tolerances<const N: usize>(value: &[f64; N], opts: &QuadOptions) -> [f64; N] {
    let mut tol = [0.0; N];
    for c in 0..N {
        tol[c] = (opts.rel_tol * value[c].abs()).max(opts.abs_tol);
    }
    tol
}

fn converged<const N: usize>(error: &[f64; N], tol: &[f64; N]) -> bool {
    error.iter().zip(tol).all(|(e, t)| *e <= *t)
}

/// Bisect the worst panels until every component meets its tolerance.
pub fn refine<const N: usize, F: FnMut(f64) -> [f64; N]>(
    mut panels: Vec<Panel<N>>,
    f: &mut F,
    opts: &QuadOptions,
) -> Result<Estimate<N>> {
    loop {
        let (value, error) = totals(&panels);
        let tol = tolerances(&value, opts);
        if converged(&error, &tol) {
            return Ok(Estimate {
                value,
                error,
                panels: panels.len(),
            });
        }
        if panels.len() >= opts.max_panels {
            let worst = (0..N)
                .max_by(|&i, &j| {
                    let ri = error[i] / tol[i].max(f64::MIN_POSITIVE);
                    let rj = error[j] / tol[j].max(f64::MIN_POSITIVE);
                    ri.total_cmp(&rj)
                })
                .unwrap_or(0);
            return Err(MrhError::Quadrature {
                estimate: value[worst],
                error: error[worst],
            });
        }
        // Score each panel by its largest error relative to the component tolerance.
        let score = |p: &Panel<N>| -> f64 {
            (0..N)
                .filter(|&c| error[c] > tol[c])
                .map(|c| p.error[c] / tol[c].max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max)
        };
        let (idx, _) = panels
            .iter()
            .enumerate()
            .map(|(i, p)| (i, score(p)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one panel");
        let p = panels.swap_remove(idx);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // Interval exhausted at machine precision; accept as is.
            panels.push(Panel { error: [0.0; N], ..p });
            continue;
        }
        panels.push(Panel::evaluate(f, p.a, mid));
        panels.push(Panel::evaluate(f, mid, p.b));
    }
}

/// Integrate a vector-valued function over `[points[0], points[last]]`, using
/// the interior points as initial panel boundaries.
pub fn integrate_vec<const N: usize, F: FnMut(f64) -> [f64; N]>(
    mut f: F,
    points: &[f64],
    opts: &QuadOptions,
) -> Result<Estimate<N>> {
    if points.len() < 2 {
        return Err(MrhError::Domain("need at least two breakpoints".into()));
    }
    let panels = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| Panel::evaluate(&mut f, w[0], w[1]))
        .collect::<Vec<_>>();
    if panels.is_empty() {
        return Ok(Estimate {
            value: [0.0; N],
            error: [0.0; N],
            panels: 0,
        });
    }
    refine(panels, &mut f, opts)
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], opts: &QuadOptions) -> Result<(f64, f64)> {
    let est = integrate_vec(|x| [f(x)], points, opts)?;
    Ok((est.value[0], est.error[0]))
}
