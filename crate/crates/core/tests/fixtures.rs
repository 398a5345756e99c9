use std::fs;

use approx::assert_relative_eq;
use tempfile::TempDir;
use wifidop::io::{environment_to_json, load_environment, load_scans, load_trajectory, write_scans};
use wifidop::propagation::PropagationModel;
use wifidop::radio::{ApId, Dimension};
use wifidop::sim::{sample_trajectory, synthesize_scan, NoiseModel};
use wifidop::Error;

fn example(name: &str) -> String {
    format!("{}/examples/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn lab_environment_loads() {
    let env = load_environment(example("lab.json")).unwrap();
    assert_eq!(env.aps().len(), 8);
    assert_eq!(env.dimension, Dimension::Three);
    assert_relative_eq!(env.ss_threshold, 10f64.powf(-8.5), max_relative = 1e-12);
    let ap = env.ap(&ApId::new("ap-2b")).unwrap();
    assert_relative_eq!(ap.tx_power, 100.0, max_relative = 1e-12);
    assert_eq!(ap.position.z, 3.3);
}

#[test]
fn lab_trajectory_loads() {
    let traj = load_trajectory(example("lab_trajectory.json")).unwrap();
    let samples = sample_trajectory(&traj).unwrap();
    assert!(samples.len() > 1000);
    let last = samples.last().unwrap().1;
    assert_eq!(last.as_slice(), traj.waypoints.last().unwrap());
}

#[test]
fn environment_survives_json_round_trip() {
    let env = load_environment(example("lab.json")).unwrap();
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("env.json");
    fs::write(&path, environment_to_json(&env).unwrap()).unwrap();
    let back = load_environment(&path).unwrap();
    assert_eq!(back.aps().len(), env.aps().len());
    for (a, b) in env.aps().iter().zip(back.aps()) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.position, b.position);
        assert_relative_eq!(a.tx_power, b.tx_power, max_relative = 1e-12);
    }
}

#[test]
fn field_errors_name_the_field() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"aps": [{"id": "a", "x": 0, "y": 0, "z": 0, "wavelength_m": 0.125}]}"#,
    )
    .unwrap();
    match load_environment(&path) {
        Err(Error::ValidationError { field, .. }) => assert_eq!(field, "tx_power_dbm"),
        other => panic!("unexpected {other:?}"),
    }
    fs::write(&path, "{\n  \"aps\": [\n    {\"id\": }\n  ]\n}").unwrap();
    match load_environment(&path) {
        Err(Error::ParseError { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn scans_round_trip_through_a_file() {
    let env = load_environment(example("lab.json")).unwrap();
    let traj = load_trajectory(example("lab_trajectory.json")).unwrap();
    let noise = NoiseModel::new(2.0, 3).unwrap().with_dropout(10f64.powf(-9.0));
    let model = PropagationModel::interlink();
    let scans: Vec<_> = sample_trajectory(&traj)
        .unwrap()
        .iter()
        .take(50)
        .enumerate()
        .map(|(k, (t, p))| synthesize_scan(&env, p, *t, &noise, &model, k as u64).unwrap())
        .collect();
    assert!(scans.iter().any(|s| s.readings.values().any(|p| *p == 0.0)));

    let dir = TempDir::new().unwrap();
    let path = dir.path().join("scans.csv");
    write_scans(fs::File::create(&path).unwrap(), &scans).unwrap();
    let back = load_scans(&path).unwrap();
    // readings pass through dBm, so compare within rounding
    assert_eq!(back.len(), scans.len());
    for (a, b) in scans.iter().zip(&back) {
        assert_eq!(a.timestamp, b.timestamp);
        assert_eq!(a.truth, b.truth);
        assert!(a.readings.keys().eq(b.readings.keys()));
        for (pa, pb) in a.readings.values().zip(b.readings.values()) {
            assert_relative_eq!(*pa, *pb, max_relative = 1e-12);
        }
    }
}
