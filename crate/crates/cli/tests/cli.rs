//! End-to-end tests of the `edgedrnn` binary: exit codes, determinism and
//! cross-command consistency.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edgedrnn"))
}

fn run_ok(args: &[&str], cwd: &Path) -> Output {
    let out = bin().args(args).current_dir(cwd).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str], cwd: &Path) -> i32 {
    bin()
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// gen-model + convert + gen-features in a fresh temp dir, returning paths.
fn setup_model(dir: &Path, layers: &str, n: &str, m: &str) -> (PathBuf, PathBuf) {
    run_ok(
        &[
            "gen-model", "--layers", layers, "--input", n, "--hidden", m, "--seed", "11",
            "--out", "fm",
        ],
        dir,
    );
    run_ok(
        &[
            "convert", "--model-dir", "fm", "--out", "m.edrn", "--theta", "0x40",
        ],
        dir,
    );
    run_ok(
        &[
            "gen-features", "--steps", "60", "--dim", n, "--seed", "5", "--profile",
            "bandlimited", "--out", "f.feat",
        ],
        dir,
    );
    (dir.join("m.edrn"), dir.join("f.feat"))
}

#[test]
fn convert_reports_weight_count() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "gen-model", "--layers", "1", "--input", "40", "--hidden", "256", "--seed", "3",
            "--out", "fm",
        ],
        dir.path(),
    );
    let out = run_ok(
        &["convert", "--model-dir", "fm", "--out", "m.edrn", "--theta", "0x40"],
        dir.path(),
    );
    let text = stdout(&out);
    assert!(text.contains("weights: 227328"), "stdout: {text}");
    assert!(text.contains("theta=0x40"), "stdout: {text}");
}

#[test]
fn convert_missing_tensor_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "gen-model", "--layers", "1", "--input", "4", "--hidden", "4", "--seed", "3",
            "--out", "fm",
        ],
        dir.path(),
    );
    std::fs::remove_file(dir.path().join("fm/layer0_W_ic.bin")).unwrap();
    let out = bin()
        .args(["convert", "--model-dir", "fm", "--out", "m.edrn"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code().unwrap(), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("W_ic"), "stderr: {err}");
}

#[test]
fn run_is_deterministic_and_honors_step_cap() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _) = setup_model(dir.path(), "2", "8", "16");
    let args = [
        "run", "--model", "m.edrn", "--features", "f.feat", "--steps", "25", "--logits",
        "h.feat", "--trace", "tr.csv", "--summary", "s.json",
    ];
    let out1 = run_ok(&args, dir.path());
    let logits1 = std::fs::read(dir.path().join("h.feat")).unwrap();
    let trace1 = std::fs::read(dir.path().join("tr.csv")).unwrap();
    let summary1 = std::fs::read(dir.path().join("s.json")).unwrap();
    let out2 = run_ok(&args, dir.path());
    assert_eq!(std::fs::read(dir.path().join("h.feat")).unwrap(), logits1);
    assert_eq!(std::fs::read(dir.path().join("tr.csv")).unwrap(), trace1);
    assert_eq!(std::fs::read(dir.path().join("s.json")).unwrap(), summary1);
    assert_eq!(stdout(&out1), stdout(&out2));

    // step cap: trace has header + 25 rows
    let text = String::from_utf8(trace1).unwrap();
    assert_eq!(text.lines().count(), 26);

    // summary sparsities live in [0, 1]
    let json: serde_json::Value = serde_json::from_slice(&summary1).unwrap();
    for key in ["gamma_dx", "gamma_dh"] {
        let v = json[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert_eq!(json["timesteps"].as_u64().unwrap(), 25);
}

#[test]
fn run_dimension_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    setup_model(dir.path(), "1", "8", "16");
    run_ok(
        &[
            "gen-features", "--steps", "5", "--dim", "9", "--seed", "1", "--profile", "iid",
            "--out", "bad.feat",
        ],
        dir.path(),
    );
    assert_eq!(
        exit_code(
            &["run", "--model", "m.edrn", "--features", "bad.feat"],
            dir.path()
        ),
        3
    );
}

#[test]
fn run_on_corrupt_model_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    setup_model(dir.path(), "1", "8", "16");
    let path = dir.path().join("m.edrn");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(
        exit_code(
            &["run", "--model", "m.edrn", "--features", "f.feat"],
            dir.path()
        ),
        2
    );
}

fn csv_row<'a>(csv: &'a str, theta: &str) -> Vec<&'a str> {
    csv.lines()
        .find(|l| l.starts_with(theta))
        .unwrap_or_else(|| panic!("no row {theta} in {csv}"))
        .split(',')
        .collect()
}

#[test]
fn bench_sweep_shows_threshold_speedup_and_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    setup_model(dir.path(), "2", "8", "16");
    run_ok(
        &[
            "bench", "--model", "m.edrn", "--features", "f.feat", "--steps", "40", "--sweep",
            "0x00,0x40", "--out", "b.csv",
        ],
        dir.path(),
    );
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let row0 = csv_row(&csv, "0x00");
    let row40 = csv_row(&csv, "0x40");
    let tput0: f64 = row0[4].parse().unwrap();
    let tput40: f64 = row40[4].parse().unwrap();
    assert!(
        tput40 > tput0,
        "throughput at 0x40 ({tput40}) must beat 0x00 ({tput0})"
    );

    // a single-theta bench row agrees with the run summary
    run_ok(
        &[
            "run", "--model", "m.edrn", "--features", "f.feat", "--steps", "40", "--summary",
            "s.json",
        ],
        dir.path(),
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap())
            .unwrap();
    let mean_lat: f64 = row40[1].parse().unwrap();
    let gamma_dh: f64 = row40[8].parse().unwrap();
    assert!((mean_lat - json["mean_latency_us"].as_f64().unwrap()).abs() < 1e-4);
    assert!((gamma_dh - json["gamma_dh"].as_f64().unwrap()).abs() < 1e-6);

    // explicit defaults reproduce the default row
    run_ok(
        &[
            "bench", "--model", "m.edrn", "--features", "f.feat", "--steps", "40", "--sweep",
            "0x40", "--freq", "125e6", "--pes", "8", "--out", "b2.csv",
        ],
        dir.path(),
    );
    let csv2 = std::fs::read_to_string(dir.path().join("b2.csv")).unwrap();
    assert_eq!(csv_row(&csv2, "0x40"), row40);
}

#[test]
fn decode_identical_corpus_and_aggregate_weighting() {
    let dir = tempfile::tempdir().unwrap();
    // three single-row utterances with argmax 1, 1, 2 (blank = 0)
    std::fs::write(
        dir.path().join("l.csv"),
        "0.0,1.0,0.0,0.0\n\n0.0,1.0,0.0,0.0\n\n0.0,0.0,1.0,0.0\n",
    )
    .unwrap();

    // identical hypotheses and references: zero error
    std::fs::write(dir.path().join("refs.txt"), "1\n1\n2\n").unwrap();
    let out = run_ok(
        &["decode", "--logits", "l.csv", "--refs", "refs.txt"],
        dir.path(),
    );
    assert!(stdout(&out).contains("aggregate: wer 0.000"));

    // aggregate is edit-weighted, not the mean of per-line rates:
    // edits 0/1 + 2/3 + 1/1 -> 3 edits over 5 tokens = 0.600 (mean would be 0.556)
    std::fs::write(dir.path().join("refs.txt"), "1\n1 2 3\n3\n").unwrap();
    let out = run_ok(
        &["decode", "--logits", "l.csv", "--refs", "refs.txt"],
        dir.path(),
    );
    let text = stdout(&out);
    assert!(text.contains("aggregate: wer 0.600"), "stdout: {text}");

    // an empty reference line is a data error
    std::fs::write(dir.path().join("refs.txt"), "1\n\n2\n").unwrap();
    assert_eq!(
        exit_code(
            &["decode", "--logits", "l.csv", "--refs", "refs.txt"],
            dir.path()
        ),
        4
    );

    // utterance/reference count mismatch is a data error
    std::fs::write(dir.path().join("refs.txt"), "1\n2\n").unwrap();
    assert_eq!(
        exit_code(
            &["decode", "--logits", "l.csv", "--refs", "refs.txt"],
            dir.path()
        ),
        4
    );
}

#[test]
fn csv_feature_path_works_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    setup_model(dir.path(), "1", "3", "8");
    std::fs::write(dir.path().join("f.csv"), "0.5,0.25,-1.0\n0.5,0.3,-1.0\n").unwrap();
    let out = run_ok(
        &[
            "run", "--model", "m.edrn", "--features", "f.csv", "--logits", "h.csv",
        ],
        dir.path(),
    );
    assert!(stdout(&out).contains("steps: 2"));
    let written = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    assert_eq!(written.lines().count(), 2);
}
