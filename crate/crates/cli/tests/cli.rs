//! End-to-end tests of the `eyefield` binary: exit codes, artifact
//! emission, determinism of re-runs, and figure derivation.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eyefield"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should launch")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// A deliberately tiny experiment: one sampled eye, one density, one rendered
/// depth, a single wavelength, and a coarse 64-sample grid, so a full run
/// completes in well under a second.
fn tiny_config(output_dir: &Path) -> String {
    format!(
        r#"{{
  "display": {{
    "z_cdp_D": 2.0,
    "pupil_diameter_mm": 3.0,
    "densities": [1],
    "rendered_depths_rel_D": [0.0]
  }},
  "eyes": {{
    "source": "population",
    "count": 1,
    "seed": 7,
    "include_average": false
  }},
  "spectrum": {{ "min_nm": 550.0, "max_nm": 550.0, "step_nm": 10.0, "reference_nm": 550.0 }},
  "grid": {{ "samples": 64, "pitch_um": 2.0 }},
  "metrics": ["vsotf"],
  "sweep": {{ "range_rel_D": [-1.0, 1.0], "step_D": 0.5 }},
  "images": [
    {{ "eye_id": "eye-01", "density": 1, "rendered_rel_depth_D": 0.0, "accommodation_D": 2.0 }}
  ],
  "output_dir": "{}",
  "jobs": 1
}}"#,
        output_dir.display()
    )
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).expect("config should write");
    path
}

#[test]
fn validate_accepts_a_wellformed_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny_config(&dir.path().join("results")));
    let output = run(&["validate", "--config", config.to_str().unwrap()]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("valid"), "stdout: {text}");
    assert!(text.contains('1'), "should state the condition count: {text}");
}

#[test]
fn invalid_config_exits_with_code_two_and_names_the_fields() {
    let dir = tempfile::tempdir().unwrap();
    let body = tiny_config(&dir.path().join("results"))
        .replace("\"pupil_diameter_mm\": 3.0", "\"pupil_diameter_mm\": -3.0")
        .replace("\"samples\": 64", "\"samples\": 63");
    let config = write_config(dir.path(), &body);
    let output = run(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let text = stderr(&output);
    assert!(text.contains("pupil_diameter_mm"), "stderr: {text}");
    assert!(text.contains("samples") || text.contains("grid"), "stderr: {text}");
}

#[test]
fn malformed_json_exits_with_code_two_and_points_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "{\n  \"display\": {\n");
    let output = run(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr(&output).contains("line"),
        "parse errors should carry a line number: {}",
        stderr(&output)
    );
}

#[test]
fn missing_config_flag_exits_with_code_two() {
    let output = run(&["validate"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("--config"));
}

#[test]
fn dry_run_reports_conditions_without_writing_anything() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    let config = write_config(dir.path(), &tiny_config(&results));
    let output = run(&["run", "--dry-run", "--config", config.to_str().unwrap()]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("1 condition"), "stdout: {}", stdout(&output));
    assert!(!results.exists(), "dry run must not create the output directory");
}

#[test]
fn run_emits_artifacts_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    let config = write_config(dir.path(), &tiny_config(&results));
    let args = ["run", "--config", config.to_str().unwrap()];

    let first = run(&args);
    assert!(first.status.success(), "stderr: {}", stderr(&first));
    for name in [
        "results.csv",
        "through_focus_curves.csv",
        "radial_mtf.csv",
        "cutoff.csv",
        "depth_means.csv",
        "eyes.csv",
        "run_manifest.json",
    ] {
        assert!(results.join(name).is_file(), "missing artifact {name}");
    }
    let pngs: Vec<_> = std::fs::read_dir(&results)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    assert!(
        pngs.iter().any(|n| n.starts_with("psf_")) && pngs.iter().any(|n| n.starts_with("image_")),
        "expected PSF and retinal-image PNGs, found {pngs:?}"
    );

    let results_csv = std::fs::read(results.join("results.csv")).unwrap();
    let manifest = std::fs::read(results.join("run_manifest.json")).unwrap();

    let second = run(&args);
    assert!(second.status.success(), "stderr: {}", stderr(&second));
    assert_eq!(
        std::fs::read(results.join("results.csv")).unwrap(),
        results_csv,
        "re-running the same config must reproduce results.csv byte for byte"
    );
    assert_eq!(
        std::fs::read(results.join("run_manifest.json")).unwrap(),
        manifest,
        "the manifest must be reproducible too"
    );

    // A different seed samples different eyes, so the results must change.
    let reseeded_out = dir.path().join("reseeded");
    let reseeded = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        reseeded_out.to_str().unwrap(),
    ]);
    assert!(reseeded.status.success(), "stderr: {}", stderr(&reseeded));
    assert_ne!(
        std::fs::read(reseeded_out.join("eyes.csv")).unwrap(),
        std::fs::read(results.join("eyes.csv")).unwrap(),
        "a new seed must draw a different eye"
    );
}

#[test]
fn render_figures_builds_tidy_tables_from_a_finished_run() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    let config = write_config(dir.path(), &tiny_config(&results));
    let output = run(&["run", "--config", config.to_str().unwrap()]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));

    let figures = run(&["render-figures", results.to_str().unwrap()]);
    assert!(figures.status.success(), "stderr: {}", stderr(&figures));
    for name in [
        "figure_through_focus.csv",
        "figure_error_vs_depth.csv",
        "figure_radial_mtf.csv",
        "figure_cutoff_vs_depth.csv",
    ] {
        assert!(results.join(name).is_file(), "missing figure table {name}");
    }
}

#[test]
fn render_figures_on_an_empty_directory_lists_whats_missing() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&["render-figures", dir.path().to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(3));
    let text = stderr(&output);
    assert!(text.contains("results.csv"), "stderr should list the absent inputs: {text}");
}

#[test]
fn sample_eyes_prints_a_parseable_coefficient_table() {
    let dir = tempfile::tempdir().unwrap();
    let body = tiny_config(&dir.path().join("results")).replace(
        "\"include_average\": false",
        "\"include_average\": true",
    );
    let config = write_config(dir.path(), &body);
    let output = run(&["sample-eyes", "--config", config.to_str().unwrap()]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    let mut lines = text.lines();
    let header = lines.next().expect("header row");
    assert!(header.starts_with("eye_id,pupil_diameter_mm,"), "header: {header}");
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 2, "one sampled eye plus the average: {text}");
    assert!(rows[0].starts_with("eye-01,"));
    assert!(rows[1].starts_with("average,"));
}
