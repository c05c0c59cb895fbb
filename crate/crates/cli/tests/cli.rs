use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ara(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ara"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("ara runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn generate(dir: &Path, n: &str, seed: &str, name: &str) {
    let out = ara(dir, &["generate", "--n", n, "--seed", seed, "--out", name]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "2500", "7", "a.csv");
    generate(dir.path(), "2500", "7", "b.csv");
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 2501);
    assert!(!a.contains(&b'\r'));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&ara(
            dir.path(),
            &["generate", "--n", "0", "--out", "x.csv"]
        )),
        2
    );
    assert_eq!(
        code(&ara(
            dir.path(),
            &["--f", "1.5", "generate", "--n", "5", "--out", "x.csv"]
        )),
        2
    );
    assert_eq!(
        code(&ara(
            dir.path(),
            &["generate", "--n", "5", "--out", "x.csv", "--lambda", "0"]
        )),
        2
    );
    assert_eq!(code(&ara(dir.path(), &["frobnicate"])), 2);
}

#[test]
fn build_db_conserves_reports() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "3000", "1", "train.csv");
    let out = ara(
        dir.path(),
        &["build-db", "--corpus", "train.csv", "--out", "store.ara"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let store = fs::read_to_string(dir.path().join("store.ara")).unwrap();
    let header = store.lines().next().unwrap();
    assert!(header.starts_with("ARA-STORE v1 k=32 params="), "{header}");
    assert!(header.ends_with(" total=3000"), "{header}");
}

#[test]
fn build_db_rejects_unlabeled_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let row = format!("c1,3,{},{}", "0".repeat(32), "1".repeat(32));
    fs::write(
        dir.path().join("u.csv"),
        format!("client,cohort,prr,irr\n{row}\n"),
    )
    .unwrap();
    let out = ara(
        dir.path(),
        &["build-db", "--corpus", "u.csv", "--out", "s.ara"],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn build_db_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("e.csv"),
        "client,cohort,prr,irr,true_value\n",
    )
    .unwrap();
    let out = ara(
        dir.path(),
        &["build-db", "--corpus", "e.csv", "--out", "s.ara"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let store = fs::read_to_string(dir.path().join("s.ara")).unwrap();
    assert_eq!(store.lines().count(), 1);
    assert!(store.trim_end().ends_with("total=0"));
}

fn strip_label_column(text: &str) -> String {
    text.lines()
        .map(|line| line.rsplit_once(',').unwrap().0.to_owned() + "\n")
        .collect()
}

#[test]
fn analyze_self_match_and_label_stripping() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "5000", "3", "train.csv");
    assert_eq!(
        code(&ara(
            dir.path(),
            &["build-db", "--corpus", "train.csv", "--out", "store.ara"]
        )),
        0
    );
    let labeled = fs::read_to_string(dir.path().join("train.csv")).unwrap();
    fs::write(dir.path().join("bare.csv"), strip_label_column(&labeled)).unwrap();

    let stripped = ara(
        dir.path(),
        &[
            "analyze",
            "--batch",
            "train.csv",
            "--store",
            "store.ara",
            "--strip-labels",
            "--out",
            "credits.csv",
        ],
    );
    assert_eq!(code(&stripped), 0, "{}", stderr(&stripped));
    let bare = ara(
        dir.path(),
        &["analyze", "--batch", "bare.csv", "--store", "store.ara"],
    );
    assert_eq!(stripped.stdout, bare.stdout);

    let text = String::from_utf8(bare.stdout).unwrap();
    let pct: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("achievement pct:"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(pct > 0.0, "{text}");
    // Every training key is present, so every report matches.
    assert!(text.contains("matched:         5000"), "{text}");

    let labeled_run = ara(
        dir.path(),
        &["analyze", "--batch", "train.csv", "--store", "store.ara"],
    );
    assert!(String::from_utf8(labeled_run.stdout)
        .unwrap()
        .contains("ground truth:"));

    let credits = fs::read_to_string(dir.path().join("credits.csv")).unwrap();
    assert!(credits.starts_with("label,credits,share_pct\n"));
}

#[test]
fn analyze_empty_batch_and_foreign_store() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "200", "3", "train.csv");
    ara(
        dir.path(),
        &["build-db", "--corpus", "train.csv", "--out", "store.ara"],
    );
    fs::write(dir.path().join("empty.csv"), "client,cohort,prr,irr\n").unwrap();
    let out = ara(
        dir.path(),
        &["analyze", "--batch", "empty.csv", "--store", "store.ara"],
    );
    assert_eq!(code(&out), 2);

    let out = ara(
        dir.path(),
        &[
            "--q",
            "0.8",
            "analyze",
            "--batch",
            "train.csv",
            "--store",
            "store.ara",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("fingerprint"), "{}", stderr(&out));
}

#[test]
fn eval_table_dimensions_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "eval", "--tests", "40", "--batch", "1000", "--seed", "7", "--out",
    ];
    let first = ara(dir.path(), &[&args[..], &["r1.csv"]].concat());
    let second = ara(dir.path(), &[&args[..], &["r2.csv"]].concat());
    let r1 = fs::read_to_string(dir.path().join("r1.csv")).unwrap();
    assert_eq!(r1, fs::read_to_string(dir.path().join("r2.csv")).unwrap());
    assert_eq!(r1.lines().count(), 41);
    assert_eq!(
        r1.lines().next().unwrap(),
        "test,major_value,sample_size,achievement_pct,ground_truth,correct"
    );
    let all_correct = r1.lines().skip(1).all(|l| l.ends_with(",true"));
    assert_eq!(code(&first), if all_correct { 0 } else { 1 });
    assert_eq!(code(&first), code(&second));
    let series = fs::read_to_string(dir.path().join("achievement_vs_size.csv")).unwrap();
    assert_eq!(series.lines().count(), 41);
}

#[test]
fn eval_exit_code_tracks_detection() {
    // Uniform values over a tiny store make detection unreliable; the exit
    // code must agree with the results file either way.
    let dir = tempfile::tempdir().unwrap();
    let out = ara(
        dir.path(),
        &[
            "eval",
            "--tests",
            "12",
            "--batch",
            "50,60",
            "--seed",
            "3",
            "--n-train",
            "300",
            "--n-test",
            "400",
            "--lambda",
            "0.01",
            "--out",
            "r.csv",
        ],
    );
    let text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(text.lines().count(), 25);
    let all_correct = text.lines().skip(1).all(|l| l.ends_with(",true"));
    assert_eq!(code(&out), if all_correct { 0 } else { 1 }, "{text}");

    let too_big = ara(
        dir.path(),
        &[
            "eval", "--batch", "500", "--n-test", "400", "--out", "x.csv",
        ],
    );
    assert_eq!(code(&too_big), 2);
}

#[test]
fn verify_constants_audit() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "25000", "11", "corpus.csv");
    let out = ara(dir.path(), &["verify-constants", "--corpus", "corpus.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("max |delta| = "), "{text}");
    assert!(text.contains("0.60206000"), "{text}");

    let out = ara(
        dir.path(),
        &[
            "verify-constants",
            "--corpus",
            "corpus.csv",
            "--sizes",
            "100,30000",
        ],
    );
    assert_eq!(code(&out), 2);
}
