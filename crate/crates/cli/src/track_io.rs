//! Track CSV files.
//!
//! A track file has a header row, a `time` column and one column per
//! coordinate. `time` holds either numbers (in `time_unit`) or ISO-8601
//! timestamps, which become hours since the first observation. Optional
//! `state` and `excluded` columns carry state information; `true_state` and
//! `occupation` (written by `simulate`) are ignored on input.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use clap::ValueEnum;
use mrh_core::{SimulatedTrack, StateId, StateInfo, Track};

use crate::error::{CliError, Result};

pub const TIME: &str = "time";
pub const STATE: &str = "state";
pub const EXCLUDED: &str = "excluded";
pub const TRUE_STATE: &str = "true_state";
pub const OCCUPATION: &str = "occupation";

const RESERVED: [&str; 5] = [TIME, STATE, EXCLUDED, TRUE_STATE, OCCUPATION];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum TimeUnit {
    #[default]
    Hours,
    Minutes,
    Seconds,
    Days,
}

impl TimeUnit {
    pub fn hours(self) -> f64 {
        match self {
            TimeUnit::Hours => 1.0,
            TimeUnit::Minutes => 1.0 / 60.0,
            TimeUnit::Seconds => 1.0 / 3600.0,
            TimeUnit::Days => 24.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParseOptions {
    /// Unit of numeric times; timestamps are always converted to hours.
    pub time_unit: TimeUnit,
    /// Expected number of coordinate columns, if known.
    pub dim: Option<usize>,
    /// Round coordinates to the nearest multiple of this; 0 disables rounding.
    pub round_grid: f64,
}

/// Round to the nearest multiple of `grid`; identity for `grid == 0`.
pub fn round_to_grid(x: f64, grid: f64) -> f64 {
    if grid > 0.0 {
        (x / grid).round() * grid
    } else {
        x
    }
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
    .map(|t| t.and_utc())
}

fn parse_state_list(s: &str) -> std::result::Result<Vec<StateId>, String> {
    s.split(|c: char| c == ';' || c == '|' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

pub fn parse_track(path: &Path, opts: &ParseOptions) -> Result<Track> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(format!("cannot open {}", path.display()), e))?;
    read_track(file, &path.display().to_string(), opts)
}

enum TimeKind {
    Numeric,
    Stamp(DateTime<Utc>),
}

pub fn read_track<R: Read>(reader: R, source_name: &str, opts: &ParseOptions) -> Result<Track> {
    if !(opts.round_grid >= 0.0 && opts.round_grid.is_finite()) {
        return Err(CliError::Usage(format!(
            "round grid must be finite and >= 0, got {}",
            opts.round_grid
        )));
    }
    let schema = |msg: String| CliError::Schema {
        source_name: source_name.to_string(),
        msg,
    };
    let parse_err = |line: u64, msg: String| CliError::Parse {
        source_name: source_name.to_string(),
        line,
        msg,
    };

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| schema(format!("cannot read header row: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let time_col = col(TIME).ok_or_else(|| schema("missing `time` column".into()))?;
    let state_col = col(STATE);
    let excluded_col = col(EXCLUDED);
    let coord_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !RESERVED.iter().any(|r| h.eq_ignore_ascii_case(r)))
        .map(|(k, _)| k)
        .collect();
    if coord_cols.is_empty() {
        return Err(schema("no coordinate columns".into()));
    }
    if let Some(d) = opts.dim {
        if coord_cols.len() != d {
            return Err(schema(format!(
                "expected {d} coordinate columns, found {}",
                coord_cols.len()
            )));
        }
    }

    let mut times = Vec::new();
    let mut positions = Vec::new();
    let mut info = Vec::new();
    let mut kind: Option<TimeKind> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(k).unwrap_or("");

        let raw_t = field(time_col);
        let t = match (&kind, raw_t.parse::<f64>()) {
            (None | Some(TimeKind::Numeric), Ok(v)) if v.is_finite() => {
                kind = Some(TimeKind::Numeric);
                v * opts.time_unit.hours()
            }
            (None, _) => {
                let stamp = parse_timestamp(raw_t).ok_or_else(|| parse_err(line, format!("invalid time `{raw_t}`")))?;
                kind = Some(TimeKind::Stamp(stamp));
                0.0
            }
            (Some(TimeKind::Stamp(first)), _) => {
                let stamp =
                    parse_timestamp(raw_t).ok_or_else(|| parse_err(line, format!("invalid timestamp `{raw_t}`")))?;
                let micros = (stamp - *first)
                    .num_microseconds()
                    .ok_or_else(|| parse_err(line, "timestamp out of range".into()))?;
                micros as f64 / 3.6e9
            }
            (Some(TimeKind::Numeric), _) => return Err(parse_err(line, format!("invalid time `{raw_t}`"))),
        };
        if let Some(&prev) = times.last() {
            if t == prev {
                return Err(parse_err(line, format!("duplicate time `{raw_t}`")));
            }
            if t < prev {
                return Err(parse_err(
                    line,
                    format!("time `{raw_t}` is earlier than the previous row"),
                ));
            }
        }

        let mut pos = Vec::with_capacity(coord_cols.len());
        for &k in &coord_cols {
            let v: f64 = field(k).parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                parse_err(
                    line,
                    format!("invalid coordinate `{}` in column `{}`", field(k), &headers[k]),
                )
            })?;
            pos.push(round_to_grid(v, opts.round_grid));
        }

        let state = state_col.map(field).unwrap_or("");
        let excluded = excluded_col.map(field).unwrap_or("");
        let si = match (state.is_empty(), excluded.is_empty()) {
            (true, true) => StateInfo::Unknown,
            (false, true) => StateInfo::Known(state.parse().map_err(|e| parse_err(line, e))?),
            (true, false) => StateInfo::excluding(&parse_state_list(excluded).map_err(|e| parse_err(line, e))?),
            (false, false) => return Err(parse_err(line, "both `state` and `excluded` are set".into())),
        };

        times.push(t);
        positions.push(pos);
        info.push(si);
    }
    if times.len() < 2 {
        return Err(schema(format!("need at least two observations, found {}", times.len())));
    }
    Ok(Track::new(times, positions, info)?)
}

/// Write a simulated track: `time`, `x1..xd`, `true_state`, `occupation`.
/// Numbers use the shortest representation that parses back to the same value.
pub fn write_simulated<W: Write>(out: W, sim: &SimulatedTrack) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::io("cannot write track", e.into());
    let mut header = vec![TIME.to_string()];
    header.extend((1..=sim.dim()).map(|k| format!("x{k}")));
    header.extend([TRUE_STATE.to_string(), OCCUPATION.to_string()]);
    w.write_record(&header).map_err(io)?;
    for k in 0..sim.times.len() {
        let mut row = vec![sim.times[k].to_string()];
        row.extend(sim.positions[k].iter().map(f64::to_string));
        row.push(sim.states[k].index().to_string());
        row.push(sim.occupations[k].to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io("cannot write track", e))
}
