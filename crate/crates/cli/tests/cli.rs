//! End-to-end runs of the `latentaug` binary: a full tiny pipeline,
//! byte-identical report reruns, and the exit-code contract.

use latentaug::data::TimeSeriesDataset;
use latentaug::report::{Cell, Report};
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latentaug"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn run_err(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().expect("binary runs");
    assert!(!out.status.success(), "command unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(
        stderr.contains("error:"),
        "stderr should carry an error line, got: {stderr}"
    );
    (out.status.code().expect("exit code"), stderr)
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

const CONFIG: &str = r#"
[data]
path = "data.csv"

[model]
window_length = 12
latent_dim = 2
hidden_units = 4
num_heads = 2
seed = 5

[train]
epochs = 3
batch_size = 3

[augment]
seed = 11

[[direct_chain]]
kind = "jitter"
sigma = 0.05

[[latent_chain]]
kind = "jitter"
sigma = 0.2

[forecaster]
input_length = 4
hidden_units = 4
epochs = 10
batch_size = 16
test_fraction = 0.25
seed = 1
"#;

// ── The full pipeline ───────────────────────────────────────────────

#[test]
fn pipeline_runs_end_to_end_and_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data_path = root.join("data.csv");

    run_ok(
        bin()
            .arg("synth")
            .arg("--out")
            .arg(&data_path)
            .args(["--series", "6", "--length", "12", "--noise", "0.05", "--seed", "3"]),
    );
    assert!(root.join("data.csv.groups").exists(), "groups sidecar");

    // the corpus is a pure function of its arguments
    let again = root.join("again.csv");
    run_ok(
        bin()
            .arg("synth")
            .arg("--out")
            .arg(&again)
            .args(["--series", "6", "--length", "12", "--noise", "0.05", "--seed", "3"]),
    );
    assert_eq!(read(&data_path), read(&again));
    assert_eq!(
        read(&root.join("data.csv.groups")),
        read(&root.join("again.csv.groups"))
    );

    let config_path = root.join("run.toml");
    std::fs::write(&config_path, CONFIG).unwrap();

    let model_path = root.join("model.json");
    let log_path = root.join("train_log.tsv");
    run_ok(
        bin()
            .arg("train")
            .arg("--config")
            .arg(&config_path)
            .arg("--out")
            .arg(&model_path)
            .arg("--log")
            .arg(&log_path),
    );
    let log = Report::load(&log_path).unwrap();
    assert_eq!(log.kind, "train-log");
    assert_eq!(log.rows.len(), 3, "one row per epoch");

    let original = TimeSeriesDataset::load_csv(&data_path).unwrap();
    for mode in ["direct", "latent"] {
        let out_csv = root.join(format!("aug_{mode}.csv"));
        run_ok(
            bin()
                .arg("augment")
                .arg("--config")
                .arg(&config_path)
                .arg("--model")
                .arg(&model_path)
                .args(["--mode", mode])
                .arg("--out")
                .arg(&out_csv),
        );
        let augmented = TimeSeriesDataset::load_csv(&out_csv).unwrap();
        assert_eq!(augmented.names(), original.names());
        assert_eq!(augmented.series_len(), original.series_len());
        assert_ne!(augmented.values(), original.values(), "{mode} changed the panel");
    }

    let eval_dirs = [root.join("eval1"), root.join("eval2")];
    for outdir in &eval_dirs {
        run_ok(
            bin()
                .arg("evaluate")
                .arg("--config")
                .arg(&config_path)
                .arg("--model")
                .arg(&model_path)
                .arg("--outdir")
                .arg(outdir),
        );
    }
    let tables = [
        "distance_direct.tsv",
        "distance_latent.tsv",
        "residuals_direct.tsv",
        "residuals_latent.tsv",
        "kde_direct.tsv",
        "kde_latent.tsv",
        "recon_ratio.tsv",
    ];
    for name in tables {
        let bytes = read(&eval_dirs[0].join(name));
        Report::parse(std::str::from_utf8(&bytes).unwrap())
            .unwrap_or_else(|e| panic!("{name} does not parse: {e}"));
        assert_eq!(
            bytes,
            read(&eval_dirs[1].join(name)),
            "{name} differs between identical reruns"
        );
    }

    let tstr_path = root.join("tstr.tsv");
    run_ok(
        bin()
            .arg("tstr")
            .arg("--config")
            .arg(&config_path)
            .arg("--model")
            .arg(&model_path)
            .arg("--out")
            .arg(&tstr_path),
    );
    let table = Report::load(&tstr_path).unwrap();
    assert_eq!(table.kind, "tstr");
    let regimes: Vec<&str> = table
        .rows
        .iter()
        .map(|row| match &row[0] {
            Cell::Text(s) => s.as_str(),
            Cell::Number(_) => panic!("regime column should be text"),
        })
        .collect();
    assert_eq!(regimes, ["original", "direct", "latent"]);
}

// ── Exit codes ──────────────────────────────────────────────────────

#[test]
fn error_paths_use_the_documented_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let dummy_model = root.join("model.json");

    // missing config file: an I/O problem
    let (code, _) = run_err(
        bin()
            .arg("train")
            .arg("--config")
            .arg(root.join("nope.toml"))
            .arg("--out")
            .arg(root.join("m.json")),
    );
    assert_eq!(code, 2);

    // unknown key: a configuration problem
    let bad = root.join("bad.toml");
    std::fs::write(
        &bad,
        "[data]\npath = \"d.csv\"\ntypo = 1\n\n[model]\nwindow_length = 8\nlatent_dim = 2\n",
    )
    .unwrap();
    let (code, stderr) = run_err(
        bin()
            .arg("train")
            .arg("--config")
            .arg(&bad)
            .arg("--out")
            .arg(root.join("m.json")),
    );
    assert_eq!(code, 1, "stderr: {stderr}");

    // config is fine but the data file is absent
    let no_data = root.join("no_data.toml");
    std::fs::write(
        &no_data,
        "[data]\npath = \"missing.csv\"\n\n[model]\nwindow_length = 8\nlatent_dim = 2\n",
    )
    .unwrap();
    let (code, _) = run_err(
        bin()
            .arg("train")
            .arg("--config")
            .arg(&no_data)
            .arg("--out")
            .arg(root.join("m.json")),
    );
    assert_eq!(code, 2);

    // calibrate insists on exactly one latent transformation; the
    // check fires before the checkpoint is touched
    let multi = root.join("multi.toml");
    std::fs::write(
        &multi,
        concat!(
            "[data]\npath = \"d.csv\"\n\n[model]\nwindow_length = 8\nlatent_dim = 2\n\n",
            "[[direct_chain]]\nkind = \"jitter\"\nsigma = 0.1\n\n",
            "[[latent_chain]]\nkind = \"jitter\"\nsigma = 0.1\n\n",
            "[[latent_chain]]\nkind = \"jitter\"\nsigma = 0.2\n",
        ),
    )
    .unwrap();
    let (code, stderr) = run_err(
        bin()
            .arg("calibrate")
            .arg("--config")
            .arg(&multi)
            .arg("--model")
            .arg(&dummy_model)
            .arg("--out")
            .arg(root.join("c.toml")),
    );
    assert_eq!(code, 1);
    assert!(stderr.contains("exactly one"), "stderr: {stderr}");

    // window length must match the prepared panel
    let data_path = root.join("short.csv");
    run_ok(
        bin()
            .arg("synth")
            .arg("--out")
            .arg(&data_path)
            .args(["--series", "3", "--length", "10", "--seed", "1"]),
    );
    let mismatch = root.join("mismatch.toml");
    std::fs::write(
        &mismatch,
        "[data]\npath = \"short.csv\"\n\n[model]\nwindow_length = 8\nlatent_dim = 2\nhidden_units = 4\nnum_heads = 2\n",
    )
    .unwrap();
    let (code, stderr) = run_err(
        bin()
            .arg("train")
            .arg("--config")
            .arg(&mismatch)
            .arg("--out")
            .arg(root.join("m.json")),
    );
    assert_eq!(code, 1);
    assert!(stderr.contains("does not match"), "stderr: {stderr}");
}

// ── Gradient check command ──────────────────────────────────────────

#[test]
fn gradcheck_command_passes_on_a_small_model() {
    let out = run_ok(bin().args(["gradcheck", "--window", "5", "--hidden", "4", "--seed", "2"]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("gradient check passed"), "stdout: {stdout}");
}
