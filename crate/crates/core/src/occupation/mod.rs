//! Law of the moving-time occupation `M(t)` jointly with the end state `S(t)`.
//!
//! Given the start state the pair has an atom (no jump before `t`) and three
//! defective densities `p_ij(s, t)`, one per end state. Densities for a start
//! in the handling state follow from those for resting by swapping the roles
//! of the two motionless states.

mod literal;
mod series;
mod table;
mod telegraph;

use std::sync::Arc;

pub use series::{SeriesSum, TruncationPolicy};
pub use table::{OccupationTable, SharedTable};
pub use telegraph::two_state_moving_density;

use crate::error::{domain, MrhError, Result};
use crate::params::{ModelParams, StateId};
use crate::quad::{self, QuadOptions};

/// Point mass of `M(t)`: at `t` when starting (and staying) in motion, at `0`
/// when starting (and staying) in a motionless state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationAtom {
    pub location: f64,
    pub weight: f64,
    /// End state carrying the atom (always the start state).
    pub state: StateId,
}

pub(crate) fn atom_of(start: StateId, t: f64, params: &ModelParams) -> (f64, f64) {
    let w = (-params.rate(start) * t).exp();
    match start {
        StateId::Moving => (t, w),
        _ => (0.0, w),
    }
}

/// Atom of the occupation law for `start` over horizon `t`.
pub fn occ_atom(start: StateId, t: f64, params: &ModelParams) -> Result<OccupationAtom> {
    params.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return domain(format!("horizon must be positive, got {t}"));
    }
    let (location, weight) = atom_of(start, t, params);
    Ok(OccupationAtom {
        location,
        weight,
        state: start,
    })
}

fn check_s(s: f64, t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return domain(format!("horizon must be positive, got {t}"));
    }
    if !(s > 0.0 && s < t) {
        return domain(format!("occupation time must lie in (0, {t}), got {s}"));
    }
    Ok(())
}

/// Series evaluation of `p_ij(s, t)` with truncation diagnostics.
pub fn occ_density_series(
    start: StateId,
    end: StateId,
    s: f64,
    t: f64,
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<SeriesSum> {
    params.validate()?;
    check_s(s, t)?;
    if start == StateId::Handling {
        return literal::density_series(StateId::Resting, end.swapped(), s, t, &params.swapped(), trunc);
    }
    literal::density_series(start, end, s, t, params, trunc)
}

/// `p_ij(s, t) = P_i(M(t) in ds, S(t) = j) / ds`, evaluated term by term.
pub fn occ_density(
    start: StateId,
    end: StateId,
    s: f64,
    t: f64,
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<f64> {
    occ_density_series(start, end, s, t, params, trunc).map(|r| r.value)
}

/// Mixed law of `(M(t), S(t))` given `S(0) = start`.
#[derive(Debug, Clone)]
pub struct OccupationLaw {
    pub start: StateId,
    table: SharedTable,
}

impl OccupationLaw {
    pub fn new(start: StateId, t: f64, params: &ModelParams) -> Result<Self> {
        let table = OccupationTable::new(params, t, &TruncationPolicy::default())?;
        Ok(OccupationLaw {
            start,
            table: Arc::new(table),
        })
    }

    pub fn from_table(start: StateId, table: SharedTable) -> Self {
        OccupationLaw { start, table }
    }

    pub fn horizon(&self) -> f64 {
        self.table.horizon()
    }

    pub fn atom(&self) -> OccupationAtom {
        let (location, weight) = self.table.atom(self.start);
        OccupationAtom {
            location,
            weight,
            state: self.start,
        }
    }

    /// `[p_i0, p_i1, p_i2]` at `s`.
    pub fn densities(&self, s: f64) -> Result<[f64; 3]> {
        check_s(s, self.horizon())?;
        Ok(self.table.densities(s)[self.start.index()])
    }

    pub fn density(&self, end: StateId, s: f64) -> Result<f64> {
        Ok(self.densities(s)?[end.index()])
    }

    /// Integrated mass of each defective density over `(0, t)`.
    pub fn end_state_masses(&self) -> Result<[f64; 3]> {
        let t = self.horizon();
        let opts = QuadOptions {
            rel_tol: 1e-11,
            abs_tol: 1e-300,
            max_panels: 2000,
        };
        let pts = seeded_breakpoints(t);
        let table = &self.table;
        let i = self.start.index();
        let est = quad::integrate_vec(|s| table.densities(s)[i], &pts, &opts)?;
        Ok(est.value)
    }

    /// Atom weight plus the integrated densities; equals 1 up to numerical error.
    pub fn total_mass(&self) -> Result<f64> {
        let m = self.end_state_masses()?;
        Ok(self.atom().weight + m.iter().sum::<f64>())
    }
}

pub(crate) fn seeded_breakpoints(t: f64) -> Vec<f64> {
    vec![
        0.0,
        t * 1e-4,
        t * 1e-2,
        0.25 * t,
        0.5 * t,
        0.75 * t,
        t * (1.0 - 1e-2),
        t,
    ]
}

/// Atom weight plus quadrature of `sum_j p_ij` over `(0, t)`.
pub fn occ_total_mass(start: StateId, t: f64, params: &ModelParams) -> Result<f64> {
    OccupationLaw::new(start, t, params)?.total_mass()
}

/// Outcome of [`reduction_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    /// Rate of the single motionless state in the collapsed model.
    pub off_rate: f64,
    pub grid: Vec<f64>,
    pub three_state: Vec<f64>,
    pub two_state: Vec<f64>,
    pub max_abs_deviation: f64,
}

/// Compare `p_00` of the three-state model against an independent two-state
/// telegraph density when the model degenerates (`p1 in {0, 1}` or `lambda1 = lambda2`).
pub fn reduction_check(params: &ModelParams, t: f64) -> Result<ReductionReport> {
    params.validate()?;
    let off_rate = if params.p1 == 1.0 {
        params.lambda1
    } else if params.p1 == 0.0 {
        params.lambda2
    } else if params.lambda1 == params.lambda2 {
        params.lambda1
    } else {
        return Err(MrhError::Precondition(format!(
            "reduction needs p1 in {{0, 1}} or lambda1 = lambda2, got {params}"
        )));
    };
    let table = OccupationTable::new(params, t, &TruncationPolicy::default())?;
    let grid: Vec<f64> = (0..100).map(|k| t * (k as f64 + 0.5) / 100.0).collect();
    let three_state: Vec<f64> = grid.iter().map(|&s| table.densities(s)[0][0]).collect();
    let two_state = grid
        .iter()
        .map(|&s| two_state_moving_density(s, t, params.lambda0, off_rate))
        .collect::<Result<Vec<_>>>()?;
    let max_abs_deviation = three_state
        .iter()
        .zip(&two_state)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ReductionReport {
        off_rate,
        grid,
        three_state,
        two_state,
        max_abs_deviation,
    })
}
