use ddonet::neuralop::load_checkpoint;
use ddonet::pipeline::Dataset;
use ddonet_cli::commands::{self, architecture, initial_net};
use ddonet_cli::vtk::validate_vtk;
use ddonet_cli::{CliError, MetricsReport, Run, RunConfig};
use std::path::Path;
use std::process::Command;

/// `u = x` on `[0,2]x[0,1]`: Dirichlet ends, insulated top and bottom.
const STRIP: &str = r#"
[geometry]
lo = [0.0, 0.0]
hi = [2.0, 1.0]
spacing = 0.125
cuts = [1.0]

[[geometry.boundary]]
face = "x-lo"
kind = "dirichlet"
value = 0.0

[[geometry.boundary]]
face = "x-hi"
kind = "dirichlet"
value = 2.0

[solver]
scheme = "framework2"
tolerance = 1e-12
max_iterations = 2000

[output]
seed = 7
"#;

const DATA: &str = r#"
[data]
count = 10
gp_faces = ["x-lo"]

[network]
hidden = [24, 24]
latent_dim = 24

[network.train]
iterations = 50
batch_size = 4
log_every = 10
"#;

fn run_in(dir: &Path, text: &str) -> Run {
    Run::new(
        RunConfig::parse(text).unwrap(),
        None,
        Some(dir.to_path_buf()),
    )
}

fn without_timing(r: &MetricsReport) -> serde_json::Value {
    let mut v = serde_json::to_value(r).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn unknown_key_suggests_the_real_one() {
    let text = format!("{STRIP}{DATA}").replace("batch_size = 4", "learningrate = 0.1");
    let err = RunConfig::parse(&text).unwrap_err();
    assert_eq!(err.code(), "ConfigError");
    let msg = err.to_string();
    assert!(
        msg.contains("learningrate") && msg.contains("lr_init"),
        "{msg}"
    );
    let line = text
        .lines()
        .position(|l| l.contains("learningrate"))
        .unwrap()
        + 1;
    assert!(msg.contains(&format!("line {line}")), "{msg}");
}

#[test]
fn unknown_variant_and_preset_are_config_errors() {
    let e = RunConfig::parse(&STRIP.replace("framework2", "framework3")).unwrap_err();
    assert!(e.to_string().contains("framework2"), "{e}");
    let text = format!("{STRIP}\n[network]\npreset = \"S1-D-R-[0,1]\"\n");
    let e = RunConfig::parse(&text).unwrap_err();
    assert!(e.to_string().contains("S1-D-R-[0,1]-desk"), "{e}");
    assert!(matches!(
        RunConfig::parse(&STRIP.replace("x-lo", "w-lo")),
        Err(CliError::Config { .. })
    ));
}

#[test]
fn classical_solve_matches_the_oracle_and_exports_vtk() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(
        dir.path(),
        &STRIP.replace("seed = 7", "seed = 7\nvtk = true"),
    );
    let report = commands::solve(&run).unwrap();
    let e = &report.runs[0];
    assert!(e.converged);
    assert!(e.ml2re.unwrap() < 1e-8, "{e:?}");

    let text = std::fs::read_to_string(dir.path().join("vtk/sub1.vtk")).unwrap();
    assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
    let info = validate_vtk(&text).unwrap();
    assert_eq!(info.dims, [9, 9, 1]);
    assert!((info.extent_hi()[0] - 1.0).abs() < 1e-12);
    // x varies fastest in VTK order and u = x
    assert!((info.values[1] - 0.125).abs() < 1e-9);

    let paths = commands::export_vtk(&run).unwrap();
    assert_eq!(paths.len(), 2);
    assert_eq!(std::fs::read_to_string(&paths[0]).unwrap(), text);
}

#[test]
fn zero_iterations_return_the_initial_guess() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(
        dir.path(),
        &STRIP.replace("max_iterations = 2000", "max_iterations = 0"),
    );
    let report = commands::solve(&run).unwrap();
    assert!(!report.runs[0].converged);
    assert_eq!(report.runs[0].iterations, 0);
}

#[test]
fn vtk_validator_rejects_inconsistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(
        dir.path(),
        &STRIP.replace("seed = 7", "seed = 7\nvtk = true"),
    );
    commands::solve(&run).unwrap();
    let text = std::fs::read_to_string(dir.path().join("vtk/sub2.vtk")).unwrap();
    assert!(validate_vtk(&text.replace("POINT_DATA 81", "POINT_DATA 80")).is_err());
    assert!(validate_vtk(&text.replace("DIMENSIONS 9 9 1", "DIMENSIONS 9 8 1")).is_err());
    assert!(validate_vtk(&text.replace("SPACING 0.125", "SPACING -0.125")).is_err());
    let truncated: String = text
        .lines()
        .take(text.lines().count() - 1)
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(validate_vtk(&truncated).is_err());
}

#[test]
fn neural_solve_without_checkpoints_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(
        dir.path(),
        &STRIP.replace(
            "scheme = \"framework2\"",
            "scheme = \"framework2\"\nbinding = \"neural\"",
        ),
    );
    let e = commands::solve(&run).unwrap_err();
    assert_eq!(e.code(), "CheckpointNotFoundError");
}

#[test]
fn gen_data_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let text = format!("{STRIP}{DATA}");
    let ra = commands::gen_data(&run_in(a.path(), &text)).unwrap();
    let rb = commands::gen_data(&run_in(b.path(), &text)).unwrap();
    assert_eq!(ra.datasets.len(), 2);
    assert_eq!(ra.datasets, rb.datasets);
    let ds = Dataset::load(&a.path().join("data/sub1")).unwrap();
    assert_eq!(ds.len(), 10);
    // GP data on the outer face, Robin data on the interface
    assert_eq!(ds.manifest.branch_widths, vec![9, 9]);
    for f in ["manifest.json", "branch_0.ddat", "targets_0.ddat"] {
        assert_eq!(
            std::fs::read(a.path().join("data/sub2").join(f)).unwrap(),
            std::fs::read(b.path().join("data/sub2").join(f)).unwrap()
        );
    }
    let other = Run::new(
        RunConfig::parse(&text).unwrap(),
        Some(8),
        Some(b.path().to_path_buf()),
    );
    assert_ne!(commands::gen_data(&other).unwrap().datasets, ra.datasets);
}

#[test]
fn interpolation_and_gp_data_share_a_layout() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        format!("{STRIP}{DATA}").replace("count = 10", "count = 3\nmethod = \"interpolation\"");
    let r = commands::gen_data(&run_in(dir.path(), &text)).unwrap();
    let ds = Dataset::load(&dir.path().join("data/sub2")).unwrap();
    assert_eq!(r.datasets[1].count, 3);
    assert_eq!(ds.manifest.branch_widths, vec![9]);
}

#[test]
fn training_writes_checkpoints_history_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{STRIP}{DATA}");
    let run = run_in(dir.path(), &text);
    commands::gen_data(&run).unwrap();
    let r = commands::train_cmd(&run).unwrap();
    assert_eq!(r.training.len(), 2);
    assert!(r.training.iter().all(|t| t.final_test.is_some()));
    let hist = std::fs::read_to_string(dir.path().join("train/sub1.json")).unwrap();
    let records: Vec<serde_json::Value> = serde_json::from_str(&hist).unwrap();
    assert_eq!(records.len(), 5);
    assert!(records[0].get("test").is_some());

    let back = MetricsReport::from_json(
        &std::fs::read_to_string(dir.path().join("report-train.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(back, r);

    // trained nets plug into the coupled solve
    let neural = text
        .replace(
            "scheme = \"framework2\"",
            "scheme = \"framework2\"\nbinding = \"neural\"",
        )
        .replace("max_iterations = 2000", "max_iterations = 5");
    let s = commands::solve(&run_in(dir.path(), &neural)).unwrap();
    assert_eq!(s.runs[0].params.len(), 2);
    assert!(s.runs[0].ml2re.unwrap().is_finite());
}

#[test]
fn zero_steps_keep_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{STRIP}{DATA}").replace("iterations = 50", "iterations = 0");
    let run = run_in(dir.path(), &text);
    commands::gen_data(&run).unwrap();
    commands::train_cmd(&run).unwrap();
    let ckpt = load_checkpoint(&dir.path().join("checkpoints/sub2.ddon")).unwrap();
    let ds = Dataset::load(&dir.path().join("data/sub2")).unwrap();
    let arch = architecture(run.config.network.as_ref().unwrap(), &ds.manifest).unwrap();
    assert_eq!(ckpt.net, initial_net(&run, 1, &arch).unwrap());
}

#[test]
fn one_sample_is_memorized() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{STRIP}{DATA}")
        .replace("spacing = 0.125", "spacing = 0.25")
        .replace("count = 10", "count = 1\nsplit = [1.0]")
        .replace(
            "hidden = [24, 24]\nlatent_dim = 24",
            "hidden = [64, 64, 64]\nlatent_dim = 64",
        )
        .replace(
            "iterations = 50",
            "iterations = 2000\nlr_init = 2e-3\nlr_decay_per_step = 0.998",
        )
        .replace("log_every = 10", "log_every = 500");
    let run = run_in(dir.path(), &text);
    commands::gen_data(&run).unwrap();
    let r = commands::train_cmd(&run).unwrap();
    for t in &r.training {
        assert!(t.final_train < 1e-3, "{t:?}");
        assert!(t.final_test.is_none());
    }
}

#[test]
fn full_runs_are_reproducible() {
    let text = format!("{STRIP}{DATA}");
    let go = |dir: &Path| {
        let run = run_in(dir, &text);
        let a = commands::gen_data(&run).unwrap();
        let b = commands::train_cmd(&run).unwrap();
        let c = commands::solve(&run).unwrap();
        [a, b, c].map(|r| without_timing(&r))
    };
    let (x, y) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(go(x.path()), go(y.path()));
    for label in ["sub1", "sub2"] {
        let p = format!("checkpoints/{label}.ddon");
        assert_eq!(
            std::fs::read(x.path().join(&p)).unwrap(),
            std::fs::read(y.path().join(&p)).unwrap()
        );
    }
    for f in [
        "report-gen-data.json",
        "report-train.json",
        "report-solve.json",
    ] {
        let r = |d: &Path| {
            MetricsReport::from_json(&std::fs::read_to_string(d.join(f)).unwrap()).unwrap()
        };
        assert_eq!(without_timing(&r(x.path())), without_timing(&r(y.path())));
    }
}

#[test]
fn bench_compares_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{}{}",
        STRIP.replace("cuts = [1.0]\n", ""),
        r#"
[[bench.variants]]
name = "D-D"
scheme = "framework1"
transmission = "dirichlet-dirichlet"
overlap = [0.75, 1.25]
theta = 0.5

[[bench.variants]]
name = "D-R"
scheme = "framework1"
transmission = "dirichlet-robin"
cuts = [1.0]
theta = 0.5

[[bench.variants]]
name = "schwarz"
scheme = "schwarz"
overlap = [0.75, 1.25]

[[bench.variants]]
name = "broken"
scheme = "schwarz"
cuts = [1.0]
"#
    );
    let r = commands::bench(&run_in(dir.path(), &text)).unwrap();
    let names: Vec<&str> = r.runs.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["single", "D-D", "D-R", "schwarz", "broken"]);
    for e in &r.runs[1..4] {
        assert!(e.converged, "{e:?}");
        assert!(e.ml2re.unwrap() < 1e-8, "{e:?}");
        assert!(!e.residual_history.is_empty());
    }
    assert!(r.runs[4]
        .failure
        .as_deref()
        .unwrap()
        .starts_with("NotOverlappingError"));
    assert!(r.timing.phases.contains_key("solve:D-R"));
}

#[test]
fn classical_l_shape_resistance() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[geometry]
spacing = 0.5

[geometry.shapes]
kind = "l"
params = [[1.0, 1.0, 1.0, 4.0, 5.0, 2.0]]
reference_spacing = 0.5

[solver]
tolerance = 1e-10
max_iterations = 3000
"#;
    let r = commands::solve(&run_in(dir.path(), text)).unwrap();
    assert!(r.runs[0].mre.unwrap() < 1e-6, "{:?}", r.runs[0]);
}

#[test]
fn binary_reports_errors_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        format!("{STRIP}{DATA}").replace("batch_size", "learningrate"),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ddonet"))
        .args(["gen-data", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: ConfigError: "), "{err}");

    let good = dir.path().join("good.toml");
    std::fs::write(&good, STRIP).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ddonet"))
        .args(["solve", "--threads", "1", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("run/report-solve.json").exists());
}
