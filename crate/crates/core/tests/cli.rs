use std::process::{Command, Output};

use entlab::distmodel::JointTable;
use entlab::harness::{read_csv, CSV_COLUMNS};
use entlab::metricopt::Distinguisher;

fn entlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entlab")).args(args).output().expect("binary runs")
}

#[test]
fn gprops_passes_and_prints_the_report() {
    let out = entlab(&["gprops"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(read_csv(stdout.as_bytes()).unwrap().len(), 4);
}

#[test]
fn randomized_suites_need_a_seed() {
    for sub in ["predict", "condense", "decode", "threshold", "optimize"] {
        let out = entlab(&[sub]);
        assert_eq!(out.status.code(), Some(2), "{sub}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("seed"), "{sub}");
    }
    assert_eq!(entlab(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn failing_rows_give_a_nonzero_exit() {
    let out = entlab(&["decode", "--seed", "4", "--n", "12", "--e", "0.45", "--c", "0.55", "--l", "1", "--trials", "20"]);
    assert_eq!(out.status.code(), Some(1));
    let rows = read_csv(out.stdout.as_slice()).unwrap();
    assert!(!rows[0].pass);
}

#[test]
fn experiment_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("decoder.toml");
    let csv = dir.path().join("decoder.csv");
    let svg = dir.path().join("decoder.svg");
    std::fs::write(
        &config,
        format!(
            "kind = \"decoder\"\nid = \"sweep\"\nseed = 1\nn = 12\nmargins = [0.2, 0.5, 1.0]\ntrials = 10\noutput = {:?}\nplot = {:?}\n",
            csv, svg
        ),
    )
    .unwrap();
    let path = config.to_str().unwrap();
    assert_eq!(entlab(&["experiment", "run", path]).status.code(), Some(0));
    let first = std::fs::read(&csv).unwrap();
    let rows = read_csv(first.as_slice()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.experiment_id == "sweep" && r.n == Some(12)));
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("decoder.csv.meta.json")).unwrap()).unwrap();
    assert!(meta["created_unix"].as_u64().unwrap() > 0);

    assert_eq!(entlab(&["experiment", "run", path]).status.code(), Some(0));
    assert_eq!(std::fs::read(&csv).unwrap(), first);

    assert_eq!(entlab(&["experiment", "run", path, "--seed", "2", "--trials", "12"]).status.code(), Some(0));
    let reseeded = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_ne!(reseeded[0].seed, rows[0].seed);

    std::fs::write(&config, "kind = \"decoder\"\nunknown_field = 3\n").unwrap();
    assert_eq!(entlab(&["experiment", "run", path]).status.code(), Some(2));
}

#[test]
fn file_instances_for_predict_and_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let (table, dist) = (dir.path().join("t.json"), dir.path().join("d.json"));
    JointTable::new(2, 0, vec![1.0, 0.0, 0.0, 0.0]).unwrap().store(&table).unwrap();
    Distinguisher::new(2, 0, vec![1.0, 0.6, 0.3, 0.1]).unwrap().store(&dist).unwrap();
    let (t, d) = (table.to_str().unwrap(), dist.to_str().unwrap());

    let out = entlab(&["optimize", "--table", t, "--dist", d, "--k", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(out.stdout.as_slice()).unwrap();
    let objective = rows.iter().find(|r| r.metric == "objective").unwrap();
    assert!((objective.measured - 0.8).abs() < 1e-12);

    let out = entlab(&["predict", "--table", t, "--dist", d, "--k", "1"]);
    let rows = read_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].metric, "success_exact");
    assert_eq!(out.status.code(), Some(if rows[0].pass { 0 } else { 1 }));

    assert_eq!(entlab(&["predict", "--table", t, "--k", "1"]).status.code(), Some(2));
}

#[test]
fn sample_experiments_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = entlab::harness::ExperimentConfig::load(&path).unwrap();
            cfg.validate().unwrap();
            count += 1;
        }
    }
    assert_eq!(count, 7);
}
