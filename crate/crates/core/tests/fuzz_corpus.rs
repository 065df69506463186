//! Replays the checked-in fuzz seeds through the parser entry points.

use std::fs;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use multicbf::simulator::{read_trajectory_csv, write_trajectory_csv};
use multicbf::{Polytope, RunReport, Scenario};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn scenario_seeds_parse() {
    for (name, data) in seeds("scenario_json") {
        let text = std::str::from_utf8(&data).unwrap();
        Scenario::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn trajectory_seeds_round_trip() {
    for (name, data) in seeds("trajectory_csv") {
        let traj = read_trajectory_csv(data.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let m = traj.controls.first().map_or(1, |u| u.len());
        let mut out = Vec::new();
        write_trajectory_csv(&traj, m, &mut out).unwrap();
        assert_eq!(out, data, "{name}");
    }
}

#[test]
fn report_seeds_round_trip() {
    for (name, data) in seeds("run_report_json") {
        let text = std::str::from_utf8(&data).unwrap();
        let report = RunReport::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(report.to_json(true), text, "{name}");
    }
}

#[test]
fn polytope_seeds_decode() {
    for (name, data) in seeds("polytope_rows") {
        let n = 1 + usize::from(data[0] % 3);
        let vals: Vec<f64> = data[1..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let rows = vals.len() / (n + 1);
        let a = DMatrix::from_fn(rows, n, |r, c| vals[r * (n + 1) + c]);
        let b = DVector::from_fn(rows, |r, _| vals[r * (n + 1) + n]);
        let p = Polytope::new(a, b).unwrap_or_else(|e| panic!("{name}: {e}"));
        let cheb = p.chebyshev().unwrap();
        match name.as_str() {
            "empty" => assert!(!cheb.feasible),
            "unit_box" => assert!((cheb.radius - 1.0).abs() < 1e-12),
            "interval" => assert!((cheb.radius - 1.25).abs() < 1e-12),
            "huge_magnitudes" => {
                let center = cheb.center.unwrap();
                // must return rather than spin
                let _ = p.project_point(&center);
            }
            _ => assert!(cheb.feasible && cheb.radius > 0.0, "{name}"),
        }
    }
}
