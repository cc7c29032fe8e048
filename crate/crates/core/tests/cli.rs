//! End-to-end checks of the `posfree` binary: subcommand wiring, seed
//! precedence, determinism of artifacts, printed summaries, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_posfree"))
}

fn tmp_dir(label: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("cli_{label}"));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.txt");
    std::fs::write(&path, body).unwrap();
    path
}

fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

const SMALL_SYNTH: &str = "[synth]\nsample_count = 200\nseed = 7\n";

#[test]
fn gen_is_deterministic_and_honors_train_fraction() {
    let dir = tmp_dir("gen_det");
    let cfg = write_config(&dir, SMALL_SYNTH);
    for sub in ["a", "b"] {
        let out = bin()
            .args(["gen", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(sub))
            .output()
            .unwrap();
        let text = stdout_of(&out);
        assert!(
            text.contains("wrote 140 train and 60 test samples"),
            "unexpected gen summary: {text}"
        );
    }
    for name in ["train.tsv", "test.tsv"] {
        assert_eq!(
            read(&dir.join("a").join(name)),
            read(&dir.join("b").join(name)),
            "{name} differs between identical gen runs"
        );
    }
}

#[test]
fn seed_flag_and_env_override_config_seed() {
    let dir = tmp_dir("gen_seed");
    let cfg = write_config(&dir, SMALL_SYNTH);
    let run = |out_sub: &str, args: &[&str], env_seed: Option<&str>| {
        let mut c = bin();
        c.args(["gen", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(out_sub))
            .args(args);
        match env_seed {
            Some(s) => c.env("POSFREE_SEED", s),
            None => c.env_remove("POSFREE_SEED"),
        };
        stdout_of(&c.output().unwrap());
    };
    run("flag1", &["--seed", "11"], None);
    run("flag2", &["--seed", "12"], None);
    run("env1", &[], Some("11"));
    run("flag_wins", &["--seed", "11"], Some("99"));
    let flag1 = read(&dir.join("flag1/train.tsv"));
    assert_ne!(flag1, read(&dir.join("flag2/train.tsv")), "seed had no effect");
    assert_eq!(flag1, read(&dir.join("env1/train.tsv")), "env seed differs from equal flag seed");
    assert_eq!(flag1, read(&dir.join("flag_wins/train.tsv")), "--seed should beat POSFREE_SEED");
}

#[test]
fn train_attention_on_default_data_reaches_low_loss() {
    let dir = tmp_dir("train_default");
    let out = bin()
        .args(["train", "--arch", "attention", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    let text = stdout_of(&out);
    let loss = parse_best_loss(&text);
    assert!(loss <= 0.05, "best test loss {loss} above 0.05\n{text}");
    assert!(dir.join("report.csv").exists());
    assert!(dir.join("checkpoint.bin").exists());
}

fn parse_best_loss(stdout: &str) -> f64 {
    let line = stdout
        .lines()
        .find(|l| l.starts_with("best test loss"))
        .unwrap_or_else(|| panic!("no best-loss line in: {stdout}"));
    line.split_whitespace()
        .nth(3)
        .and_then(|f| f.parse().ok())
        .unwrap_or_else(|| panic!("unparsable loss line: {line}"))
}

const SMALL_TRAIN: &str = "\
[synth]
sample_count = 300
seed = 3
[train]
epochs = 3
batch_size = 64
";

#[test]
fn train_zero_epochs_writes_initialization_checkpoint() {
    let dir = tmp_dir("train_zero");
    let cfg = write_config(&dir, SMALL_TRAIN);
    let out = bin()
        .args(["train", "--epochs", "0", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    let text = stdout_of(&out);
    assert!(
        text.contains("no epochs run; wrote initialization checkpoint"),
        "unexpected zero-epoch summary: {text}"
    );
    assert!(dir.join("checkpoint.bin").exists());
}

#[test]
fn train_is_deterministic_and_reads_generated_data() {
    let dir = tmp_dir("train_det");
    let cfg = write_config(&dir, SMALL_TRAIN);
    let data = dir.join("data");
    let out = bin()
        .args(["gen", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap();
    stdout_of(&out);
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let out = bin()
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(dir.join(sub))
            .output()
            .unwrap();
        outputs.push(stdout_of(&out));
    }
    assert_eq!(outputs[0], outputs[1], "train summaries differ between identical runs");
    assert_eq!(
        read(&dir.join("a/report.csv")),
        read(&dir.join("b/report.csv")),
        "report.csv differs between identical train runs"
    );
}

const TINY_SWEEP: &str = "\
[sweep]
e_p_values = 0.0
sigma_values = 0.2
trials = 1
epochs = 2
sample_count = 200
";

#[test]
fn sweep_outputs_are_identical_across_worker_counts() {
    let dir = tmp_dir("sweep_workers");
    let cfg = write_config(&dir, TINY_SWEEP);
    for (sub, workers) in [("w1", "1"), ("w2", "2")] {
        let out = bin()
            .args(["sweep", "--workers", workers, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(sub))
            .output()
            .unwrap();
        let text = stdout_of(&out);
        assert!(
            text.contains("avg loss ratio per e_p:"),
            "missing sweep summary line: {text}"
        );
    }
    for name in ["table1.csv", "table1.txt", "curves.csv"] {
        assert_eq!(
            read(&dir.join("w1").join(name)),
            read(&dir.join("w2").join(name)),
            "{name} differs between worker counts"
        );
    }
}

#[test]
fn report_summarizes_sweep_table() {
    let dir = tmp_dir("report");
    std::fs::write(
        dir.join("table1.csv"),
        "e_p,sigma,tf_loss,gnn_loss,ratio\n\
         0,0.1,0.02,0.022,1.1\n\
         0,0.2,0.08,0.096,1.2\n\
         0.5,0.1,0.9,7.2,8.0\n",
    )
    .unwrap();
    let out = bin().args(["report", "--out"]).arg(&dir).output().unwrap();
    let text = stdout_of(&out);
    assert!(text.contains("e_p = 0"), "missing e_p grouping: {text}");
    assert!(text.contains("avg ratio: 1.150"), "wrong averaged ratio: {text}");
    assert!(text.contains("avg ratio: 8.000"), "wrong averaged ratio: {text}");
}

#[test]
fn cost_writes_one_row_per_setting() {
    let dir = tmp_dir("cost");
    let out = bin().args(["cost", "--out"]).arg(&dir).output().unwrap();
    let text = stdout_of(&out);
    assert!(text.contains("wrote 10 cost rows"), "unexpected cost summary: {text}");
    let csv = String::from_utf8(read(&dir.join("cost_report.csv"))).unwrap();
    // Header plus one attention and one adjacency row per setting.
    assert_eq!(csv.lines().count(), 11, "unexpected cost_report.csv shape:\n{csv}");
    assert!(dir.join("scaling.csv").exists());
}

#[test]
fn exit_codes_distinguish_config_and_data_errors() {
    let dir = tmp_dir("exit_codes");
    let bad_cfg = write_config(&dir, "[synth]\nno_such_key = 1\n");
    let out = bin()
        .args(["gen", "--config"])
        .arg(&bad_cfg)
        .arg("--out")
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "bad config key should exit 1");
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = bin()
        .args(["train", "--data"])
        .arg(dir.join("missing"))
        .arg("--out")
        .arg(dir.join("y"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "missing data dir should exit 2");

    let out = bin().args(["report", "--out"]).arg(dir.join("empty")).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "missing table1.csv should exit 2");
}
