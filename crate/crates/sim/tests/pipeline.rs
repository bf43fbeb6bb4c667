use std::fs;

use bosetracer::checks::run_checks;
use bosetracer::output::{read_csv, write_artifact};
use bosetracer::runner::MicroUsed;
use bosetracer::{parse_config, run_scenario, Overrides, SimError};
use bosetracer_core::diagnostics::DiagnosticsRecord;
use bosetracer_core::model::MicroMode;
use bosetracer_core::ModelConfig;

const SMALL: &str = r#"{
    "d": 1, "n_gas": 2, "lambda_vol": 1.0, "delta": 0.5,
    "tracer": {"x0": [0.3], "v0": [0.0]},
    "potentials": {"v": {"amplitude": -2.0, "radius": 1.5}, "w": {"amplitude": 1.0, "radius": 0.7}},
    "grid": {"n": 32, "box_len": 4.0},
    "dt": 0.001, "t_end": 0.05
}"#;

fn small() -> ModelConfig {
    parse_config(SMALL).unwrap()
}

#[test]
fn repeated_runs_write_identical_series() {
    let dir = tempfile::tempdir().unwrap();
    for k in 0..2 {
        let art = run_scenario(&small()).unwrap();
        write_artifact(&dir.path().join(k.to_string()), &art, true).unwrap();
    }
    for f in ["micro.csv", "macro.csv", "intermediate.csv", "diagnostics.csv", "diagnostics.jsonl"] {
        let a = fs::read(dir.path().join("0").join(f)).unwrap();
        let b = fs::read(dir.path().join("1").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn written_artifact_has_expected_layout() {
    let dir = tempfile::tempdir().unwrap();
    let art = run_scenario(&small()).unwrap();
    assert_eq!(art.summary.status, "ok", "{:?}", art.summary.reasons);
    assert_eq!(art.summary.micro_mode, MicroUsed::Full);
    write_artifact(dir.path(), &art, false).unwrap();

    let diag = read_csv(&dir.path().join("diagnostics.csv")).unwrap();
    assert_eq!(diag.header, DiagnosticsRecord::COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    assert_eq!(diag.header[0], "t");
    assert_eq!(diag.header[16], "lemA2_ii_margin");
    // a row at t = 0 and one per stride of 10 steps
    assert_eq!(diag.rows.len(), 6);
    assert_eq!(read_csv(&dir.path().join("micro.csv")).unwrap().rows.len(), 6);

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in ["status", "reasons", "final", "max", "margins_min", "wall_time_s", "norm_drift", "config"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
    assert!(summary["wall_time_s"]["micro"].as_f64().unwrap() >= 0.0);
}

#[test]
fn small_interacting_run_passes_the_check_suite() {
    let art = run_scenario(&small()).unwrap();
    let checks = run_checks(&art);
    assert!(checks.iter().all(|c| c.passed), "{checks:#?}");
}

#[test]
fn several_tracers_disable_the_microscopic_system() {
    let mut cfg = small();
    Overrides { tracers: Some(2), ..Default::default() }.apply(&mut cfg).unwrap();
    cfg.variant.tracer_spacing = 0.2;
    let art = run_scenario(&cfg).unwrap();
    assert_eq!(art.summary.micro_mode, MicroUsed::Off);
    assert!(art.summary.reasons.iter().any(|r| r == "micro_single_tracer_only"));
    assert!(art.micro.is_empty());
    assert_eq!(art.macro_rows[0].positions.len(), 2);
    assert!(art.diagnostics.iter().all(|r| r.beta_total.is_nan()));
}

#[test]
fn memory_cap_aborts_full_and_skips_auto() {
    let mut cfg = small();
    cfg.run.memory_cap_samples = Some(1000);
    cfg.run.micro_mode = MicroMode::Full;
    let art = run_scenario(&cfg).unwrap();
    assert!(art.is_aborted());
    assert!(art.summary.reasons.iter().any(|r| r == "memory_cap"));

    cfg.run.micro_mode = MicroMode::Auto;
    let art = run_scenario(&cfg).unwrap();
    assert!(!art.is_aborted());
    assert_eq!(art.summary.micro_mode, MicroUsed::Skipped);
    assert!(art.summary.reasons.iter().any(|r| r == "micro_skipped_memory_cap"));

    cfg.potentials.w.amplitude = 0.0;
    let art = run_scenario(&cfg).unwrap();
    assert_eq!(art.summary.micro_mode, MicroUsed::Factorized);
}

#[test]
fn inhomogeneity_variant_changes_only_the_effective_field() {
    let base = run_scenario(&small()).unwrap();
    let mut cfg = small();
    Overrides { inhomogeneity_at_x: true, ..Default::default() }.apply(&mut cfg).unwrap();
    let variant = run_scenario(&cfg).unwrap();
    assert_eq!(base.micro, variant.micro);
    let (a, b) = (base.macro_rows.last().unwrap(), variant.macro_rows.last().unwrap());
    assert!((a.eps_l2 - b.eps_l2).abs() > 1e-8);
}

#[test]
fn invalid_configs_are_rejected_with_a_code() {
    let dilute = SMALL.replace("\"n_gas\": 2", "\"n_gas\": 1");
    let err = parse_config(&dilute).unwrap_err();
    assert_eq!(err.code(), "invalid_config");
    let unknown = SMALL.replace("\"delta\": 0.5", "\"delta\": 0.5, \"colour\": 1");
    assert!(matches!(parse_config(&unknown), Err(SimError::Config(_))));
}
