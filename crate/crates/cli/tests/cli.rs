use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_gwaug");

const SUBCOMMANDS: [&str; 7] = [
    "estimate", "sample", "augment", "distance", "evaluate", "heatmap", "benchmark",
];

fn gwaug(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_fixture(dir: &Path) {
    fs::write(
        dir.join("spec.json"),
        r#"{"classes":[{"graphon":{"sbm":{"blocks":2,"p_in":0.9,"p_out":0.1}},"count":8},{"graphon":{"constant":0.3},"count":8}],"min_nodes":8,"max_nodes":14}"#,
    )
    .unwrap();
    let out = gwaug(dir, &["benchmark", "--spec", "spec.json", "--seed", "3", "--out-dir", "bench"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn help_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let snapshots = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots");
    let top = gwaug(dir.path(), &["--help"]);
    assert!(top.status.success());
    assert_eq!(
        String::from_utf8(top.stdout).unwrap(),
        fs::read_to_string(snapshots.join("gwaug.txt")).unwrap()
    );
    for sub in SUBCOMMANDS {
        let out = gwaug(dir.path(), &[sub, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text, fs::read_to_string(snapshots.join(format!("{sub}.txt"))).unwrap(), "{sub}");
    }
}

#[test]
fn help_shows_defaults_of_optional_flags() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(gwaug(dir.path(), &["estimate", "--help"]).stdout).unwrap();
    for default in ["[default: auto]", "[default: 3]", "[default: 0.2]", "[default: 2.02]", "[default: degree]", "[default: 0.05]", "[default: 50]", "[default: 300]"] {
        assert!(text.contains(default), "missing {default}");
    }
}

#[test]
fn self_distance_prints_zero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("w.gmx"), "GMX1 2\n0.8 0.1\n0.1 0.6\n").unwrap();
    let out = gwaug(dir.path(), &["distance", "--a", "w.gmx", "--b", "w.gmx", "--order", "2"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0.000000\n");
}

#[test]
fn distance_between_scalars() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.gmx"), "GMX1 1\n0.8\n").unwrap();
    fs::write(dir.path().join("b.gmx"), "GMX1 1\n0.3\n").unwrap();
    let two = gwaug(dir.path(), &["distance", "--a", "a.gmx", "--b", "b.gmx"]);
    assert_eq!(String::from_utf8(two.stdout).unwrap(), "0.250000\n");
    let one = gwaug(dir.path(), &["distance", "--a", "a.gmx", "--b", "b.gmx", "--order", "1"]);
    assert_eq!(String::from_utf8(one.stdout).unwrap(), "0.500000\n");
}

#[test]
fn zero_rate_augmentation_copies_the_training_set() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out = gwaug(
        dir.path(),
        &["augment", "--train", "bench/dataset.jsonl", "--rate", "0", "--method", "SAS", "--seed", "1", "--out-dir", "aug"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read(dir.path().join("aug/augmented.jsonl")).unwrap(),
        fs::read(dir.path().join("bench/dataset.jsonl")).unwrap()
    );
    assert!(dir.path().join("aug/class-0.gmx").exists());
    assert!(dir.path().join("aug/class-1.gmx").exists());
}

#[test]
fn unknown_method_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out = gwaug(
        dir.path(),
        &["estimate", "--dataset", "bench/dataset.jsonl", "--label", "0", "--method", "xyz", "--out", "w.gmx"],
    );
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert_eq!(msg.lines().count(), 1);
    assert!(msg.contains("GB, SGB, SAS, SBA, LG, MC"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = gwaug(dir.path(), &["heatmap", "--graphon", "nope.gmx", "--out", "x.pgm"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(stderr(&missing).lines().count(), 1);
    let unknown = gwaug(dir.path(), &["heatmap", "--graphon", "a", "--out", "b", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(1));
    let bad_value = gwaug(dir.path(), &["distance", "--a", "a", "--b", "b", "--order", "3"]);
    assert_eq!(bad_value.status.code(), Some(1));
    let required = gwaug(dir.path(), &["sample", "--graphon", "a", "--count", "1", "--seed", "1", "--out", "o"]);
    assert_eq!(required.status.code(), Some(1));
    assert_eq!(stderr(&required).lines().count(), 1);
    fs::write(dir.path().join("bad.gmx"), "GMX1 1\n1.2\n").unwrap();
    let format = gwaug(dir.path(), &["heatmap", "--graphon", "bad.gmx", "--out", "x.pgm"]);
    assert_eq!(format.status.code(), Some(1));
}

#[test]
fn heatmap_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("w.gmx"), "GMX1 2\n1 0.5\n0.5 0\n").unwrap();
    let out = gwaug(dir.path(), &["heatmap", "--graphon", "w.gmx", "--out", "w.pgm"]);
    assert!(out.status.success());
    assert_eq!(
        fs::read_to_string(dir.path().join("w.pgm")).unwrap(),
        "P2\n2 2\n255\n255 128\n128 0\n"
    );
}

#[test]
fn evaluate_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    fs::write(
        dir.path().join("exp.json"),
        r#"{"datasets":[{"name":"toy","path":"bench/dataset.jsonl"}],"methods":["SAS","LG"],"rates":[0.0,0.25],"seeds":[1],"split_fraction":0.25,"classifier":{"epochs":20}}"#,
    )
    .unwrap();
    let out = gwaug(dir.path(), &["evaluate", "--config", "exp.json", "--out", "report.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "dataset,method,rate,seed,base_accuracy,aug_accuracy,delta");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("toy,SAS,0,1,"));
    assert!(lines[1].ends_with(",0.00"));
}
