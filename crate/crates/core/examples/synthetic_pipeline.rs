//! Runs the full pipeline on the bundled synthetic study and prints the report.
use capgrowth::dataset::synthetic::reference_study;
use capgrowth::pipeline::{run_pipeline, RunManifest};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let dir = std::env::temp_dir().join(format!("capgrowth-synthetic-{seed}"));
    std::fs::create_dir_all(&dir).unwrap();
    let study = reference_study(seed);
    let runs = dir.join("runs.csv");
    study.runs.write_csv(std::fs::File::create(&runs).unwrap()).unwrap();
    let mut manifest = RunManifest::new(&runs, dir.join("out"));
    manifest.seed = seed;
    let t = std::time::Instant::now();
    match run_pipeline(&manifest) {
        Ok(out) => println!("{}\n({:.1?})", serde_json::to_string_pretty(&out.report).unwrap(), t.elapsed()),
        Err(e) => println!("error after {:.1?}: {e}", t.elapsed()),
    }
}
