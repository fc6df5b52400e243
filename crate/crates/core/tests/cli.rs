use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motion-saliency"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = "[synth]\npatient_count = 2\ntrials_per_patient_per_side = 3\n\n[grid.train]\nbatch_size = 4\n";

/// Synthesizes a tiny dataset, trains a small model without grid search and scores it.
fn tiny_pipeline(dir: &Path) {
    fs::write(dir.join("c.toml"), format!("hidden = [4]\n{TINY}")).unwrap();
    assert!(cli(dir, &["synth", "--config", "c.toml", "--out", "d.jsonl"])
        .status
        .success());
    let t = cli(
        dir,
        &[
            "train",
            "--config",
            "c.toml",
            "--data",
            "d.jsonl",
            "--no-grid",
            "--epochs",
            "2",
            "--out",
            "m.json",
        ],
    );
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let e = cli(
        dir,
        &[
            "explain",
            "--model",
            "m.json",
            "--data",
            "d.jsonl",
            "--out",
            "s.csv",
            "--heatmap",
            "p00_affected_00",
        ],
    );
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 4] = [
        (
            "synth",
            &[
                "--config",
                "--out",
                "--seed",
                "--patients",
                "--trials-per-side",
                "--t-max",
                "--features-cache",
            ],
        ),
        (
            "train",
            &[
                "--data",
                "--grid",
                "--no-grid",
                "--split",
                "--out",
                "--seed",
                "--epochs",
            ],
        ),
        ("explain", &["--model", "--data", "--out", "--heatmap"]),
        (
            "sweep",
            &[
                "--scores",
                "--data",
                "--modes",
                "--windows",
                "--beta",
                "--step",
                "--out",
            ],
        ),
    ];
    for (cmd, flags) in cases {
        let o = cli(dir.path(), &[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(cli(dir.path(), &["sweep", "--step"]).status.code(), Some(1));
}

#[test]
fn synth_defaults_report_300_trials_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["synth", "--out", "a.jsonl", "--seed", "7"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("300 trials"));
    assert!(cli(dir.path(), &["synth", "--out", "b.jsonl", "--seed", "7"])
        .status
        .success());
    assert_eq!(
        fs::read(dir.path().join("a.jsonl")).unwrap(),
        fs::read(dir.path().join("b.jsonl")).unwrap()
    );
}

#[test]
fn invalid_config_exits_2_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["synth", "--trials-per-side", "0", "--out", "x.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x.jsonl").exists());

    fs::write(dir.path().join("bad.toml"), "[synth]\nno_such_field = 1\n").unwrap();
    assert_eq!(
        cli(dir.path(), &["synth", "--config", "bad.toml", "--out", "y.jsonl"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_data_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["train", "--data", "nowhere.jsonl", "--out", "m.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn default_split_is_240_to_60() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cli(dir.path(), &["synth", "--out", "d.jsonl"]).status.success());
    fs::write(dir.path().join("c.toml"), "hidden = [2]\n").unwrap();
    let o = cli(
        dir.path(),
        &[
            "train",
            "--config",
            "c.toml",
            "--data",
            "d.jsonl",
            "--no-grid",
            "--epochs",
            "1",
            "--out",
            "m.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("240 train / 60 test"));
}

#[test]
fn default_grid_report_has_eight_cells() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), TINY).unwrap();
    assert!(cli(
        dir.path(),
        &["synth", "--config", "c.toml", "--out", "d.jsonl", "--t-max", "210"]
    )
    .status
    .success());
    let o = cli(
        dir.path(),
        &[
            "train", "--config", "c.toml", "--data", "d.jsonl", "--epochs", "1", "--out", "m.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(dir.path().join("m.json.grid.csv")).unwrap();
    assert_eq!(report.lines().filter(|l| !l.starts_with('#')).count(), 1 + 8);
}

#[test]
fn explain_writes_scores_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    tiny_pipeline(dir.path());
    let scores = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 12 * 394);
    let heat = fs::read_to_string(dir.path().join("heatmap_p00_affected_00.csv")).unwrap();
    let lines: Vec<&str> = heat.lines().collect();
    assert_eq!(lines.len(), 395);
    assert!(lines.iter().all(|l| l.split(',').count() == 17));
}

#[test]
fn explain_rejects_an_incompatible_model() {
    let dir = tempfile::tempdir().unwrap();
    tiny_pipeline(dir.path());
    assert!(cli(
        dir.path(),
        &["synth", "--config", "c.toml", "--out", "short.jsonl", "--t-max", "300"]
    )
    .status
    .success());
    let o = cli(
        dir.path(),
        &[
            "explain",
            "--model",
            "m.json",
            "--data",
            "short.jsonl",
            "--out",
            "s2.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("s2.csv").exists());
}

#[test]
fn sweep_writes_the_full_report_matrix() {
    let dir = tempfile::tempdir().unwrap();
    tiny_pipeline(dir.path());
    let o = cli(
        dir.path(),
        &["sweep", "--scores", "s.csv", "--data", "d.jsonl", "--out", "r"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let reports: Vec<_> = fs::read_dir(dir.path().join("r"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("sweep_"))
        .collect();
    assert_eq!(reports.len(), 15);
    for name in &reports {
        let text = fs::read_to_string(dir.path().join("r").join(name)).unwrap();
        assert!(text.lines().next().unwrap().contains("beta=2"), "{name}");
    }
    assert!(dir.path().join("r/summary.txt").exists());
    assert!(stdout(&o).contains("Compensatory trials without padded frames"));
}

#[test]
fn coarse_step_gives_three_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    tiny_pipeline(dir.path());
    let o = cli(
        dir.path(),
        &[
            "sweep",
            "--scores",
            "s.csv",
            "--data",
            "d.jsonl",
            "--step",
            "0.5",
            "--windows",
            "1",
            "--modes",
            "all",
            "--out",
            "r",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("r/sweep_all_w1.csv")).unwrap();
    let thresholds: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(thresholds, ["0", "0.5", "1"]);
}

#[test]
fn sweep_rejects_scores_from_another_dataset() {
    let dir = tempfile::tempdir().unwrap();
    tiny_pipeline(dir.path());
    assert!(cli(
        dir.path(),
        &["synth", "--config", "c.toml", "--seed", "99", "--out", "other.jsonl"]
    )
    .status
    .success());
    let o = cli(
        dir.path(),
        &["sweep", "--scores", "s.csv", "--data", "other.jsonl", "--out", "r"],
    );
    assert_eq!(o.status.code(), Some(2));
}
