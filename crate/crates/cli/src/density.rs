//! Occupation-density curves `p_ij(s, t)` on a uniform grid, plus atoms.

use std::io::Write;

use mrh_core::{ModelParams, OccupationTable, StateId, TruncationPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Density,
    Atom,
}

/// One CSV row. For atoms `s` is the atom location and `value` its weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub record: RecordKind,
    pub start: usize,
    pub end: usize,
    pub s: f64,
    pub value: f64,
}

/// Curves for the given start (all starts if `None`) on `grid_size` equally
/// spaced points of `[0, t]`; endpoint values are one-sided limits.
pub fn density_records(
    params: &ModelParams,
    t: f64,
    start: Option<StateId>,
    grid_size: usize,
) -> Result<Vec<DensityRecord>> {
    if grid_size < 2 {
        return Err(CliError::Usage(format!(
            "grid size must be at least 2, got {grid_size}"
        )));
    }
    let table = OccupationTable::new(params, t, &TruncationPolicy::default())?;
    let starts: Vec<StateId> = start.map_or(StateId::ALL.to_vec(), |s| vec![s]);
    let grid: Vec<f64> = (0..grid_size)
        .map(|k| {
            if k + 1 == grid_size {
                t
            } else {
                t * k as f64 / (grid_size - 1) as f64
            }
        })
        .collect();
    let values: Vec<[[f64; 3]; 3]> = grid.iter().map(|&s| table.densities(s)).collect();

    let mut out = Vec::new();
    for &i in &starts {
        for j in StateId::ALL {
            for (s, v) in grid.iter().zip(&values) {
                out.push(DensityRecord {
                    record: RecordKind::Density,
                    start: i.index(),
                    end: j.index(),
                    s: *s,
                    value: v[i.index()][j.index()],
                });
            }
        }
        let (location, weight) = table.atom(i);
        out.push(DensityRecord {
            record: RecordKind::Atom,
            start: i.index(),
            end: i.index(),
            s: location,
            value: weight,
        });
    }
    Ok(out)
}

pub fn write_records<W: Write>(out: W, records: &[DensityRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)
            .map_err(|e| CliError::io("cannot write density curves", e.into()))?;
    }
    w.flush().map_err(|e| CliError::io("cannot write density curves", e))
}
