//! End-to-end checks of the command-line interface: exit codes, output
//! files, and byte-identical reruns.

mod common;

use std::fs;

use common::{run_cli, synthetic_csv};

fn write_log(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("log.csv");
    fs::write(&path, synthetic_csv(24, &["a", "b", "c", "d"], 3_600)).unwrap();
    path
}

fn train_args(log: &std::path::Path, out: &std::path::Path) -> Vec<String> {
    [
        "train",
        "--log",
        log.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--layers",
        "2",
        "--shared",
        "1",
        "--neurons",
        "8",
        "--max-epochs",
        "3",
        "--seed",
        "7",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn train_writes_checkpoint_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path());
    let out = dir.path().join("run");
    let result = run_cli(train_args(&log, &out));
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(out.join("model.json").exists());
    let report = fs::read_to_string(out.join("train_report.csv")).unwrap();
    assert!(report.starts_with("epoch,train_loss,val_loss\n"));
    assert_eq!(report.lines().count(), 4); // header + 3 epochs
}

#[test]
fn train_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path());
    let (out1, out2) = (dir.path().join("r1"), dir.path().join("r2"));
    assert!(run_cli(train_args(&log, &out1)).status.success());
    assert!(run_cli(train_args(&log, &out2)).status.success());
    assert_eq!(
        fs::read(out1.join("train_report.csv")).unwrap(),
        fs::read(out2.join("train_report.csv")).unwrap()
    );
    assert_eq!(
        fs::read(out1.join("model.json")).unwrap(),
        fs::read(out2.join("model.json")).unwrap()
    );
}

#[test]
fn missing_log_file_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let result = run_cli([
        "train",
        "--log",
        "/definitely/not/here.csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("/definitely/not/here.csv"),
        "stderr: {stderr}"
    );
}

#[test]
fn malformed_csv_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.csv");
    fs::write(
        &log,
        "case_id,activity,timestamp\nc1,a,2012-03-01 09:00:00\nc1,b,yesterday\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let result = run_cli([
        "train",
        "--log",
        log.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_2() {
    let result = run_cli(["train", "--no-such-flag"]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn eval_commands_run_and_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path());
    let out = dir.path().join("run");
    assert!(run_cli(train_args(&log, &out)).status.success());
    let model = out.join("model.json");

    // eval-next with explicit prefix sizes
    let next = run_cli([
        "eval-next",
        "--log",
        log.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--prefixes",
        "2,3",
    ]);
    assert!(
        next.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&next.stderr)
    );
    let table = fs::read_to_string(out.join("eval_next.csv")).unwrap();
    assert!(table.starts_with("prefix,accuracy,mae_days,dls\n"));
    assert_eq!(table.lines().count(), 4); // two prefix rows + All + header
    assert!(table.lines().last().unwrap().starts_with("All,"));

    // rerun must produce the same bytes
    let first = fs::read(out.join("eval_next.csv")).unwrap();
    assert!(run_cli([
        "eval-next",
        "--log",
        log.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--prefixes",
        "2,3",
    ])
    .status
    .success());
    assert_eq!(first, fs::read(out.join("eval_next.csv")).unwrap());

    // suffix and remaining-time evaluation
    let suffix = run_cli([
        "eval-suffix",
        "--log",
        log.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(suffix.status.success());
    assert!(out.join("eval_suffix.csv").exists());
    let stdout = String::from_utf8_lossy(&suffix.stdout);
    assert!(stdout.contains("mean DLS"), "stdout: {stdout}");
    assert!(stdout.contains("truncated"), "stdout: {stdout}");

    let remaining = run_cli([
        "eval-remaining",
        "--log",
        log.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(remaining.status.success());
    assert!(out.join("eval_remaining.csv").exists());
}

#[test]
fn baseline_command_and_ts_remaining() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path());
    let out = dir.path().join("run");

    let baseline = run_cli([
        "baseline",
        "--log",
        log.to_str().unwrap(),
        "--abstraction",
        "sequence",
        "--out",
        out.to_str().unwrap(),
        "--prefixes",
        "2,3",
    ]);
    assert!(
        baseline.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&baseline.stderr)
    );
    let path = out.join("baseline_sequence_next_delta.csv");
    let first = fs::read(&path).unwrap();
    // the synthetic process is deterministic, so the baseline is exact
    let text = String::from_utf8(first.clone()).unwrap();
    let all = text.lines().last().unwrap();
    assert!(all.starts_with("All,,0,"), "all row: {all}");

    assert!(run_cli([
        "baseline",
        "--log",
        log.to_str().unwrap(),
        "--abstraction",
        "sequence",
        "--out",
        out.to_str().unwrap(),
        "--prefixes",
        "2,3",
    ])
    .status
    .success());
    assert_eq!(first, fs::read(&path).unwrap());

    // remaining-time flavor via the transition system
    let remaining = run_cli([
        "eval-remaining",
        "--log",
        log.to_str().unwrap(),
        "--abstraction",
        "bag",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(remaining.status.success());
    let text = fs::read_to_string(out.join("eval_remaining.csv")).unwrap();
    let all = text.lines().last().unwrap();
    assert!(all.starts_with("All,,0,"), "all row: {all}");
}

#[test]
fn training_on_a_deterministic_log_reaches_perfect_next_event_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path());
    for cell in ["lstm", "rnn"] {
        let out = dir.path().join(cell);
        let result = run_cli([
            "train",
            "--log",
            log.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--layers",
            "2",
            "--shared",
            "1",
            "--neurons",
            "8",
            "--cell",
            cell,
            "--max-epochs",
            "60",
            "--batch-size",
            "8",
            "--seed",
            "7",
        ]);
        assert!(
            result.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&result.stderr)
        );
        assert!(run_cli([
            "eval-next",
            "--log",
            log.to_str().unwrap(),
            "--model",
            out.join("model.json").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--prefixes",
            "2,3",
        ])
        .status
        .success());
        let table = fs::read_to_string(out.join("eval_next.csv")).unwrap();
        let all = table.lines().last().unwrap();
        let accuracy = all.split(',').nth(1).unwrap();
        assert_eq!(accuracy, "1", "{cell} All row was {all}");
    }
}

#[test]
fn normalizer_and_alphabet_come_from_the_training_split_only() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    // the chronologically later third uses doubled gaps, so a normalizer
    // fitted on the whole log would land at 4800 s instead of 3600 s
    let mut csv = String::from("case_id,activity,timestamp\n");
    for i in 0..24 {
        let gap_minutes = if i < 16 { 60 } else { 120 };
        for (j, act) in ["a", "b", "c", "d"].iter().enumerate() {
            let minutes = j * gap_minutes;
            csv.push_str(&format!(
                "case{i},{act},2012-03-{:02} {:02}:{:02}:00\n",
                1 + i,
                9 + minutes / 60,
                minutes % 60
            ));
        }
    }
    fs::write(&log, csv).unwrap();

    let out = dir.path().join("run");
    assert!(run_cli(train_args(&log, &out)).status.success());
    let checkpoint = flowcast::checkpoint::load(&out.join("model.json")).unwrap();
    assert_eq!(checkpoint.norm.mean_delta, 3_600.0);
    assert_eq!(checkpoint.alphabet, ["a", "b", "c", "d"]);
}

#[test]
fn model_and_baseline_remaining_tables_cover_identical_prefixes() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path());
    let out = dir.path().join("run");
    assert!(run_cli(train_args(&log, &out)).status.success());
    let model = out.join("model.json");

    let (model_out, ts_out) = (dir.path().join("m"), dir.path().join("ts"));
    assert!(run_cli([
        "eval-remaining",
        "--log",
        log.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--out",
        model_out.to_str().unwrap(),
    ])
    .status
    .success());
    assert!(run_cli([
        "eval-remaining",
        "--log",
        log.to_str().unwrap(),
        "--abstraction",
        "sequence",
        "--out",
        ts_out.to_str().unwrap(),
    ])
    .status
    .success());

    let model_rows: Vec<String> = fs::read_to_string(model_out.join("eval_remaining.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    let ts_rows: Vec<String> = fs::read_to_string(ts_out.join("eval_remaining.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(model_rows, ts_rows);
}

#[test]
fn dedup_flag_shortens_traces_before_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    // every case is ⟨x,x,y,z⟩ with one-hour gaps; collapsing the leading run
    // drops the length-3 evaluation prefix entirely
    let mut csv = String::from("case_id,activity,timestamp\n");
    for i in 0..3 {
        for (j, act) in ["x", "x", "y", "z"].iter().enumerate() {
            csv.push_str(&format!(
                "case{i},{act},2012-03-{:02} {:02}:00:00\n",
                1 + i,
                9 + j
            ));
        }
    }
    fs::write(&log, csv).unwrap();

    let run_baseline = |dedup: &str, out: &std::path::Path| {
        let result = run_cli([
            "baseline",
            "--log",
            log.to_str().unwrap(),
            "--abstraction",
            "sequence",
            "--out",
            out.to_str().unwrap(),
            "--prefixes",
            "2,3",
            "--dedup",
            dedup,
        ]);
        assert!(
            result.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&result.stderr)
        );
        fs::read_to_string(out.join("baseline_sequence_next_delta.csv")).unwrap()
    };

    let kept = run_baseline("off", &dir.path().join("off"));
    let collapsed = run_baseline("first", &dir.path().join("first"));
    // with duplicates kept, prefix length 3 has records (gaps are exact, so
    // zero error); after collapsing, the row is empty
    assert!(kept.contains("3,,0,"), "kept: {kept}");
    assert!(collapsed.contains("3,,,"), "collapsed: {collapsed}");
    assert!(collapsed.contains("2,,0,"), "collapsed: {collapsed}");
}

#[test]
fn config_file_supplies_defaults_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path());
    let out = dir.path().join("run");
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        format!(
            "log = {}\nout = {}\nmax-epochs = 2\nneurons = 8\nlayers = 2\nshared = 1\nseed = 7\n",
            log.display(),
            out.display()
        ),
    )
    .unwrap();
    let result = run_cli(["train", "--config", conf.to_str().unwrap()]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let report = fs::read_to_string(out.join("train_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3); // header + 2 epochs from the file

    // a flag overrides the file value
    let out2 = dir.path().join("run2");
    let result = run_cli([
        "train",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
        "--max-epochs",
        "1",
    ]);
    assert!(result.status.success());
    let report = fs::read_to_string(out2.join("train_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
}
