use std::fs;
use std::path::Path;

use capgrowth::dataset::synthetic::reference_study;
use capgrowth::fitting::Specification;
use capgrowth::pipeline::{ingest, run_pipeline, PipelineError, RunManifest};

fn write_study(dir: &Path, seed: u64) -> std::path::PathBuf {
    let path = dir.join("runs.csv");
    reference_study(seed).runs.write_csv(fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn single_specification_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let runs = write_study(dir.path(), 4);
    let mut m = RunManifest::new(&runs, dir.path().join("out"));
    m.specs = vec![Specification::SigmoidLink];
    m.plots = false;
    let out = run_pipeline(&m).unwrap();
    assert_eq!(out.report.comparison.len(), 1);
    assert_eq!(out.report.comparison[0].inflections.len(), 2);
    assert!(out.report.divergence.is_none());
    assert!(out.report.doubling_time_months.is_none());
    for f in ["horizons.csv", "fits.json", "forecast.csv", "report.json"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
    assert!(!dir.path().join("out/horizons_log.svg").exists());
}

#[test]
fn curve_fits_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let runs = write_study(dir.path(), 5);
    let mut m = RunManifest::new(&runs, dir.path().join("out"));
    m.specs = vec![Specification::MetrExp, Specification::SigmoidCurve];
    m.seed = 5;
    let out = run_pipeline(&m).unwrap();
    let report = &out.report;
    assert_eq!(report.comparison.len(), 2);
    assert!(report.comparison[0].mse <= report.comparison[1].mse);
    let dt = report.doubling_time_months.unwrap();
    assert!(dt > 3.0 && dt < 15.0, "{dt}");
    assert_eq!(report.inputs.len(), 2);
    assert!(report.inputs.iter().all(|d| d.sha256.len() == 64));

    let fits: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/fits.json")).unwrap()).unwrap();
    assert_eq!(fits["seed"], 5);
    let entries = fits["fits"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for e in entries {
        for key in ["kind", "link", "curve", "objective", "mse", "seed", "converged"] {
            assert!(e.get(key).is_some(), "fits.json entry lacks {key}");
        }
    }

    let forecast = fs::read_to_string(dir.path().join("out/forecast.csv")).unwrap();
    assert!(forecast.starts_with("label,date,horizon_minutes\n"));
    assert!(forecast.contains("\nmetr-exp,2019-01-01,"));
    let svg = fs::read_to_string(dir.path().join("out/horizons_log.svg")).unwrap();
    assert!(svg.starts_with("<svg") && !svg.contains("NaN"));
}

#[test]
fn published_horizons_replace_refit_ones() {
    let dir = tempfile::tempdir().unwrap();
    let runs = write_study(dir.path(), 6);
    let study = reference_study(6);
    let mut table = String::from("model_id,h_minutes\n");
    for (m, h) in study.models.iter().zip(&study.true_horizons) {
        table.push_str(&format!("{},{h}\n", m.model_id));
    }
    fs::write(dir.path().join("published.csv"), table).unwrap();
    let mut m = RunManifest::new(&runs, dir.path().join("out"));
    m.specs = vec![Specification::MetrExp];
    m.plots = false;
    m.published_horizons = Some(dir.path().join("published.csv"));
    let out = run_pipeline(&m).unwrap();
    assert_eq!(out.horizons.len(), 15);
    assert_eq!(out.horizons[3].h_minutes, study.true_horizons[3]);
    assert_eq!(out.report.inputs.len(), 3);
    assert_eq!(serde_json::to_value(out.report.horizon_source).unwrap(), "published");
}

#[test]
fn input_errors_map_to_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "model_id,task_id,task_family,human_minutes,success\n").unwrap();
    let err = run_pipeline(&RunManifest::new(&empty, dir.path().join("out"))).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("no runs"), "{err}");

    let missing = dir.path().join("missing.csv");
    fs::write(&missing, "model_id,task_id,task_family,success\nGPT-4,t,hcast,1\n").unwrap();
    let err = run_pipeline(&RunManifest::new(&missing, dir.path().join("out"))).unwrap_err();
    assert!(matches!(err, PipelineError::Input(_)));
    assert!(err.to_string().contains("human_minutes"), "{err}");

    let absent = RunManifest::new(dir.path().join("nope.csv"), dir.path().join("out"));
    assert_eq!(run_pipeline(&absent).unwrap_err().exit_code(), 2);
}

#[test]
fn ingest_writes_canonical_tables_without_touching_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let runs = write_study(dir.path(), 7);
    let mut text = fs::read_to_string(&runs).unwrap();
    text.push_str("GPT-4,bad,hcast,-1,1,0,1\n");
    fs::write(&runs, &text).unwrap();
    let report = ingest(&RunManifest::new(&runs, dir.path().join("out"))).unwrap();
    assert_eq!(report.rejects.len(), 1);
    assert_eq!(report.retained_runs, 15 * 170 * 2);
    assert_eq!(fs::read_to_string(&runs).unwrap(), text);
    let canonical = fs::read_to_string(dir.path().join("out/runs.csv")).unwrap();
    assert_eq!(canonical.lines().count(), 1 + 15 * 170 * 2);
    assert!(dir.path().join("out/ingest_report.json").is_file());
}
