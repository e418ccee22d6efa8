use std::path::Path;
use std::process::{Command, Output};

use mrh_cli::density::{density_records, RecordKind};
use mrh_cli::report::FitReport;
use mrh_cli::track_io::{parse_track, read_track, round_to_grid, ParseOptions, TimeUnit};
use mrh_cli::CliError;
use mrh_core::{ModelParams, StateId, StateInfo};

fn mrh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrh")).args(args).output().unwrap()
}

fn read(text: &str) -> Result<mrh_core::Track, CliError> {
    read_track(text.as_bytes(), "track.csv", &ParseOptions::default())
}

fn params_flags<'a>() -> Vec<&'a str> {
    vec!["--lambda0", "4", "--lambda1", "0.5", "--lambda2", "0.1", "--p1", "0.8"]
}

#[test]
fn rounding_to_the_nearest_hundred_metres() {
    let opts = ParseOptions {
        round_grid: 0.1,
        ..ParseOptions::default()
    };
    let t = read_track("time,x,y\n0,12.349,7.951\n1,12.34,7.96\n".as_bytes(), "t", &opts).unwrap();
    let p = &t.positions()[0];
    assert!((p[0] - 12.3).abs() < 1e-12 && (p[1] - 8.0).abs() < 1e-12, "{p:?}");
    assert!(t.increments()[0].1.is_exact_zero());
    assert_eq!(round_to_grid(12.349, 0.0), 12.349);
}

#[test]
fn parse_errors_name_the_line() {
    let e = read("time,x\n0,1\n2,1\n1,3\n").unwrap_err();
    assert!(matches!(e, CliError::Parse { line: 4, .. }), "{e}");
    assert_eq!(e.exit_code(), 2);

    let e = read("time,x\n0,1\n0,2\n").unwrap_err();
    assert!(
        matches!(e, CliError::Parse { line: 3, ref msg, .. } if msg.contains("duplicate")),
        "{e}"
    );

    let e = read("t,x\n0,1\n1,2\n").unwrap_err();
    assert!(matches!(e, CliError::Schema { .. }), "{e}");

    let e = read("time,x\n0,1\n1,abc\n").unwrap_err();
    assert!(matches!(e, CliError::Parse { line: 3, .. }), "{e}");

    let opts = ParseOptions {
        dim: Some(2),
        ..ParseOptions::default()
    };
    assert!(matches!(
        read_track("time,x\n0,1\n1,2\n".as_bytes(), "t", &opts),
        Err(CliError::Schema { .. })
    ));
}

#[test]
fn timestamps_become_hours_since_first_fix() {
    let t = read("time,x,y\n2012-06-01T00:00:00Z,0,0\n2012-06-01T08:30:00Z,1,1\n2012-06-02 00:00:00,2,2\n").unwrap();
    assert_eq!(t.times(), &[0.0, 8.5, 24.0]);

    let opts = ParseOptions {
        time_unit: TimeUnit::Minutes,
        ..ParseOptions::default()
    };
    let t = read_track("time,x\n0,0\n90,1\n".as_bytes(), "t", &opts).unwrap();
    assert_eq!(t.times(), &[0.0, 1.5]);
}

#[test]
fn state_columns() {
    let t = read("time,x,state,excluded\n0,0,,\n1,1,handling,\n2,1,,resting;2\n3,2,0,\n").unwrap();
    assert_eq!(
        t.state_info(),
        &[
            StateInfo::Unknown,
            StateInfo::Known(StateId::Handling),
            StateInfo::Excluded([false, true, true]),
            StateInfo::Known(StateId::Moving),
        ]
    );
    assert!(read("time,x,state\n0,0,sleeping\n1,1,\n").is_err());
    assert!(read("time,x,state,excluded\n0,0,1,2\n1,1,,\n").is_err());
}

#[test]
fn simulate_writes_the_grid_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for path in [&a, &b] {
        let mut args = vec![
            "--seed", "7", "simulate", "--t-end", "4000", "--step", "20", "--sigma", "25",
        ];
        args.extend(params_flags());
        args.extend(["--out", path.to_str().unwrap()]);
        let out = mrh(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 202);
    assert_eq!(text.lines().next().unwrap(), "time,x1,x2,true_state,occupation");
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let track = parse_track(&a, &ParseOptions::default()).unwrap();
    assert_eq!(track.n_increments(), 200);
    let sim = mrh_core::simulate_mrh(
        &ModelParams::new(4.0, 0.5, 0.1, 0.8, 25.0).unwrap(),
        &(0..=200).map(|k| 20.0 * k as f64).collect::<Vec<_>>(),
        2,
        mrh_core::StartSpec::Stationary,
        7,
    )
    .unwrap();
    assert_eq!(track.times(), &sim.times[..]);
    assert_eq!(track.positions(), &sim.positions[..]);
    assert!(track.state_info().iter().all(|s| *s == StateInfo::Unknown));
}

#[test]
fn simulate_without_handling() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mr.csv");
    let out = mrh(&[
        "--seed",
        "3",
        "simulate",
        "--lambda0",
        "1",
        "--lambda1",
        "0.5",
        "--lambda2",
        "0.1",
        "--p1",
        "1",
        "--sigma",
        "1",
        "--t-end",
        "500",
        "--step",
        "1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let states: Vec<String> = rdr.records().skip(1).map(|r| r.unwrap()[3].to_string()).collect();
    assert!(states.iter().all(|s| s != "2"));
    assert!(states.iter().any(|s| s == "1"));
}

#[test]
fn simulate_requires_seed() {
    let mut args = vec!["simulate", "--t-end", "10", "--step", "1", "--sigma", "1"];
    args.extend(params_flags());
    assert_eq!(mrh(&args).status.code(), Some(2));
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[1].1 + w[0].1))
        .sum()
}

#[test]
fn density_curves_carry_all_mass() {
    let p = ModelParams::new(4.0, 0.5, 0.1, 0.8, 1.0).unwrap();
    for start in StateId::ALL {
        let recs = density_records(&p, 10.0, Some(start), 4001).unwrap();
        assert!(recs.iter().all(|r| r.value >= 0.0 && r.value.is_finite()));
        let atom: f64 = recs
            .iter()
            .filter(|r| r.record == RecordKind::Atom)
            .map(|r| r.value)
            .sum();
        let mut total = atom;
        for j in 0..3 {
            let pts: Vec<(f64, f64)> = recs
                .iter()
                .filter(|r| r.record == RecordKind::Density && r.end == j)
                .map(|r| (r.s, r.value))
                .collect();
            assert!(pts.windows(2).all(|w| w[1].0 > w[0].0));
            total += trapezoid(&pts);
        }
        assert!((total - 1.0).abs() < 1e-4, "start {start}: {total}");
    }
}

#[test]
fn density_grid_and_atoms() {
    let p = ModelParams::new(4.0, 0.5, 0.1, 0.8, 1.0).unwrap();
    let recs = density_records(&p, 10.0, None, 2).unwrap();
    assert_eq!(recs.len(), 3 * (3 * 2 + 1));
    let atom = recs
        .iter()
        .find(|r| r.record == RecordKind::Atom && r.start == 1)
        .unwrap();
    assert_eq!((atom.end, atom.s, atom.value), (1, 0.0, (-5.0f64).exp()));
    assert!(matches!(density_records(&p, 10.0, None, 1), Err(CliError::Usage(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut args = vec!["density", "--t", "10", "--start", "1", "--grid-size", "2"];
    args.extend(params_flags());
    args.extend(["--out", path.to_str().unwrap()]);
    assert!(mrh(&args).status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "record,start,end,s,value");
    assert_eq!(text.lines().count(), 1 + 3 * 2 + 1);
    assert!(text.lines().any(|l| l.starts_with("atom,1,1,0.0,")), "{text}");
}

fn fit(track: &Path, model: &str, report: &Path) -> FitReport {
    let out = mrh(&[
        "--seed",
        "1",
        "--threads",
        "2",
        "fit",
        track.to_str().unwrap(),
        "--model",
        model,
        "--restarts",
        "1",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap()
}

fn loglik_of(track: &Path, report: &Path) -> f64 {
    let out = mrh(&["loglik", track.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    v["loglik"].as_f64().unwrap()
}

#[test]
fn fit_reports_and_nesting() {
    let dir = tempfile::tempdir().unwrap();
    let track = dir.path().join("track.csv");
    let out = mrh(&[
        "--seed",
        "11",
        "simulate",
        "--lambda0",
        "1",
        "--lambda1",
        "2",
        "--lambda2",
        "0.3",
        "--p1",
        "0.6",
        "--sigma",
        "1",
        "--t-end",
        "100",
        "--step",
        "1",
        "--out",
        track.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let bm = fit(&track, "bm", &dir.path().join("bm.json"));
    let e = serde_json::to_value(bm.estimates).unwrap();
    assert_eq!(e.as_object().unwrap().keys().collect::<Vec<_>>(), ["sigma"]);

    let mr_path = dir.path().join("mr.json");
    let mrh_path = dir.path().join("mrh.json");
    let mr = fit(&track, "mr", &mr_path);
    let full = fit(&track, "mrh", &mrh_path);
    assert!(mr.estimates.lambda2.is_none() && mr.estimates.p1 == Some(1.0));
    assert_eq!(mr.settings.fixed, ["lambda2", "p1"]);
    assert!(mr.loglik.unwrap() <= full.loglik.unwrap() + 1e-4);
    assert!(bm.estimates.sigma.unwrap() < full.estimates.sigma.unwrap());

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mrh_path).unwrap()).unwrap();
    for key in [
        "model",
        "estimates",
        "loglik",
        "converged",
        "iterations",
        "seed",
        "settings",
    ] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["seed"], 1);

    for (report, path) in [(&full, &mrh_path), (&mr, &mr_path)] {
        let again = loglik_of(&track, path);
        let reported = report.loglik.unwrap();
        assert!(
            (again - reported).abs() <= 1e-9 * reported.abs(),
            "{again} vs {reported}"
        );
    }
}

#[test]
fn domain_errors_exit_with_two() {
    let mut args = vec!["density", "--t", "10", "--sigma", "1"];
    args.extend(["--lambda0", "-4", "--lambda1", "0.5", "--lambda2", "0.1", "--p1", "0.8"]);
    let out = mrh(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda0"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "time,x\n0,0\n0,1\n").unwrap();
    assert_eq!(mrh(&["fit", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(mrh(&["fit", "/nonexistent/track.csv"]).status.code(), Some(1));
}

#[test]
fn starved_optimizer_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let track = dir.path().join("track.csv");
    std::fs::write(&track, "time,x\n0,0\n1,0.5\n2,0.5\n3,1.7\n4,1.1\n").unwrap();
    let report = dir.path().join("r.json");
    let out = mrh(&[
        "fit",
        track.to_str().unwrap(),
        "--restarts",
        "0",
        "--max-evals",
        "5",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let r: FitReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(!r.converged);
}
