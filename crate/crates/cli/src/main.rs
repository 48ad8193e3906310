//! `capgrowth`: horizon estimation, growth-curve fits, projections and
//! bound certification from the command line.
//!
//! Exit codes: 0 success, 2 input error, 3 fit failure, 4 theorem violation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use capgrowth::fitting::Specification;
use capgrowth::forecast::{project, project_components, write_forecast_csv};
use capgrowth::horizon::write_horizons_csv;
use capgrowth::pipeline::{self, PipelineError, Report, RunManifest};
use capgrowth::theory::{certify_bounds, default_spec_grid, CertificationReport, SigmoidProductSpec, XRange};
use capgrowth::TimeScale;
use chrono::NaiveDate;
use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "capgrowth", version, about = "Capability-horizon growth analysis")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Seed for every randomized stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory receiving all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Run table (CSV or JSONL; canonical or eval-analysis layout).
    #[arg(long, global = true)]
    runs: Option<PathBuf>,
    /// Model metadata table; defaults to the bundled frontier-model list.
    #[arg(long, global = true)]
    models: Option<PathBuf>,
    /// Horizons table (`model_id,h_minutes`) used instead of refitting.
    #[arg(long, global = true, value_name = "PATH")]
    use_published_horizons: Option<PathBuf>,
    /// Keep SOTA-flagged models only (`--sota-only false` keeps all).
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    sota_only: bool,
    /// Skip SVG emission.
    #[arg(long, global = true)]
    no_plots: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate inputs and write canonical tables plus an ingestion report.
    Ingest,
    /// Fit per-model 50% horizons and write horizons.csv.
    FitHorizons,
    /// Fit one growth specification and write fits.json.
    FitTrend {
        #[arg(long, value_parser = parse_spec)]
        spec: Specification,
    },
    /// Fit the selected specifications and write dated projections.
    Forecast {
        #[arg(long, default_value = "2019-01-01", value_parser = parse_date)]
        start: NaiveDate,
        #[arg(long, default_value = "2029-01-01", value_parser = parse_date)]
        end: NaiveDate,
        #[arg(long, default_value_t = pipeline::DEFAULT_STEP_DAYS)]
        step_days: u32,
        #[arg(long = "spec", value_parser = parse_spec)]
        specs: Vec<Specification>,
    },
    /// Certify the three-regime bounds of the sigmoid product.
    VerifyTheorem {
        /// Number of factors; all of 1..=6 when omitted.
        #[arg(long)]
        k: Option<u32>,
        /// Stagger between factors; all of 2, 2.5, 3, 4 when omitted.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
    },
    /// Run every stage and write the full artifact set.
    Pipeline {
        /// Restrict to these specifications (repeatable); all five by default.
        #[arg(long = "spec", value_parser = parse_spec)]
        specs: Vec<Specification>,
        #[arg(long, default_value = "2019-01-01", value_parser = parse_date)]
        start: NaiveDate,
        #[arg(long, default_value = "2029-01-01", value_parser = parse_date)]
        end: NaiveDate,
        #[arg(long, default_value_t = pipeline::DEFAULT_STEP_DAYS)]
        step_days: u32,
        #[arg(long, default_value_t = pipeline::DEFAULT_DIVERGENCE_THRESHOLD)]
        divergence_threshold: f64,
    },
    /// Print a summary of <out-dir>/report.json.
    Report,
}

fn parse_spec(s: &str) -> Result<Specification, String> {
    Specification::parse(s).ok_or_else(|| {
        let ids: Vec<&str> = Specification::ALL.iter().map(|s| s.id()).collect();
        format!("unknown specification `{s}` (expected one of {})", ids.join(", "))
    })
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("`{s}`: {e} (expected YYYY-MM-DD)"))
}

/// A failure carrying its exit code.
#[derive(Debug)]
struct Exit(i32, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

impl From<PipelineError> for Exit {
    fn from(e: PipelineError) -> Self {
        Exit(e.exit_code(), e.to_string())
    }
}

fn input(msg: impl Into<String>) -> anyhow::Error {
    Exit(2, msg.into()).into()
}

impl Global {
    fn manifest(&self) -> Result<RunManifest> {
        let runs = self.runs.clone().ok_or_else(|| input("--runs is required for this command"))?;
        let mut m = RunManifest::new(runs, &self.out_dir);
        m.models_path = self.models.clone();
        m.published_horizons = self.use_published_horizons.clone();
        m.seed = self.seed;
        m.sota_only = self.sota_only;
        m.plots = !self.no_plots;
        Ok(m)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(g: &Global) -> Result<&Path> {
    fs::create_dir_all(&g.out_dir).with_context(|| format!("creating {}", g.out_dir.display()))?;
    Ok(&g.out_dir)
}

fn fit_all(g: &Global, specs: &[Specification]) -> Result<(pipeline::Inputs, Vec<capgrowth::GrowthFit>)> {
    let scale = TimeScale::default();
    let mut inputs = pipeline::load_inputs(&g.manifest()?).map_err(Exit::from)?;
    let (horizons, _, digest) = pipeline::horizons(&inputs, g.use_published_horizons.as_deref(), g.seed).map_err(Exit::from)?;
    inputs.digests.extend(digest);
    let mut fits = Vec::new();
    for &spec in specs {
        let fit = pipeline::fit_specification(spec, &inputs, &horizons, g.seed, &scale).map_err(|e| Exit(3, format!("{spec}: {e}")))?;
        if !fit.converged {
            return Err(Exit(3, format!("{spec}: no restart reached the gradient tolerance")).into());
        }
        fits.push(fit);
    }
    Ok((inputs, fits))
}

fn cmd_ingest(g: &Global) -> Result<()> {
    let report = pipeline::ingest(&g.manifest()?).map_err(Exit::from)?;
    println!(
        "ingested {} of {} rows ({} rejected); kept {} runs on {} models, {} tasks -> {}",
        report.accepted_runs,
        report.input_rows,
        report.rejects.len(),
        report.retained_runs,
        report.models,
        report.distinct_tasks,
        g.out_dir.display()
    );
    Ok(())
}

fn cmd_fit_horizons(g: &Global) -> Result<()> {
    let inputs = pipeline::load_inputs(&g.manifest()?).map_err(Exit::from)?;
    let (horizons, source, _) = pipeline::horizons(&inputs, g.use_published_horizons.as_deref(), g.seed).map_err(Exit::from)?;
    let path = out_dir(g)?.join("horizons.csv");
    let mut buf = Vec::new();
    write_horizons_csv(&horizons, &mut buf)?;
    fs::write(&path, buf)?;
    for h in &horizons {
        println!("{:<32} {:>12.4} min  beta {:.3}{}", h.model_id, h.h_minutes, h.beta, if h.degenerate { "  (degenerate)" } else { "" });
    }
    println!("{} horizons ({source:?}) -> {}", horizons.len(), path.display());
    Ok(())
}

fn cmd_fit_trend(g: &Global, spec: Specification) -> Result<()> {
    let (inputs, fits) = fit_all(g, &[spec])?;
    let path = out_dir(g)?.join("fits.json");
    write_json(&path, &pipeline::fits_document(g.seed, &inputs.digests, &fits))?;
    let fit = &fits[0];
    println!("{}: objective {:.6}, MSE {:.4} -> {}", spec.display_name(), fit.objective, fit.mse.unwrap_or(f64::NAN), path.display());
    Ok(())
}

fn cmd_forecast(g: &Global, start: NaiveDate, end: NaiveDate, step: u32, specs: &[Specification]) -> Result<()> {
    let specs = if specs.is_empty() { Specification::ALL.to_vec() } else { specs.to_vec() };
    let (inputs, fits) = fit_all(g, &specs)?;
    let scale = TimeScale::default();
    let latest = inputs.models.iter().map(|m| m.release_date).max().ok_or_else(|| input("no models"))?;
    let mut series = Vec::new();
    for fit in &fits {
        series.push(project(fit, start, end, step, true, &scale).map_err(|e| input(e.to_string()))?);
        if fit.specification == Specification::SigmoidLink {
            let (b, r) = project_components(fit, start, end, step, latest, &scale).map_err(|e| input(e.to_string()))?;
            series.extend([b, r]);
        }
    }
    let path = out_dir(g)?.join("forecast.csv");
    let mut buf = Vec::new();
    write_forecast_csv(&series, &mut buf)?;
    fs::write(&path, buf)?;
    println!("{} series x {} dates -> {}", series.len(), series[0].points.len(), path.display());
    Ok(())
}

fn cmd_verify_theorem(g: &Global, k: Option<u32>, alpha: Option<f64>, resolution: f64) -> Result<()> {
    let grid = default_spec_grid();
    let ks: Vec<u32> = match k {
        Some(k) => vec![k],
        None => grid.iter().map(|s| s.k()).collect(),
    };
    let alphas: Vec<f64> = match alpha {
        Some(a) => vec![a],
        None => grid.iter().map(|s| s.alpha()).collect(),
    };
    let mut specs = Vec::new();
    for &k in &ks {
        for &a in &alphas {
            let spec = SigmoidProductSpec::new(k, a).map_err(|e| input(e.to_string()))?;
            if !specs.contains(&spec) {
                specs.push(spec);
            }
        }
    }
    let range = XRange::default();
    let certs = certify_bounds(&specs, resolution, range).map_err(|e| input(e.to_string()))?;
    let report = CertificationReport::new(&certs, resolution, range);
    let path = out_dir(g)?.join("certification.json");
    write_json(&path, &report)?;
    for s in &report.specs {
        println!(
            "k={} alpha={}: {} points, {} violations, worst margin {:.3e} at x={}",
            s.k, s.alpha, s.points, s.violations, s.worst_margin, s.worst_x
        );
    }
    if !report.passed {
        let worst = report
            .specs
            .iter()
            .filter_map(|s| s.worst_offender.map(|v| (s.k, s.alpha, v)))
            .max_by(|a, b| a.2.f.total_cmp(&b.2.f))
            .map(|(k, a, v)| format!("k={k} alpha={a} x={} regime {}: f={:e} outside [{:e}, {:e}]", v.x, v.regime, v.f, v.lower, v.upper))
            .unwrap_or_default();
        return Err(Exit(4, format!("bound violated; worst offender {worst}")).into());
    }
    println!("all {} specs certified -> {}", report.specs.len(), path.display());
    Ok(())
}

fn cmd_pipeline(
    g: &Global,
    specs: Vec<Specification>,
    start: NaiveDate,
    end: NaiveDate,
    step_days: u32,
    divergence_threshold: f64,
) -> Result<()> {
    let mut m = g.manifest()?;
    if !specs.is_empty() {
        m.specs = specs;
    }
    m.forecast_start = start;
    m.forecast_end = end;
    m.step_days = step_days;
    m.divergence_threshold = divergence_threshold;
    let out = pipeline::run_pipeline(&m).map_err(Exit::from)?;
    print_report(&out.report);
    for p in &out.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn print_report(r: &Report) {
    println!("{} | seed {} | {} models, {} runs, horizons {:?}", r.tool_version, r.seed, r.n_models, r.n_runs, r.horizon_source);
    if let Some(dt) = r.doubling_time_months {
        println!("doubling time: {dt:.2} months");
    }
    println!("{:<24} {:>14}  inflections", "specification", "MSE");
    for row in &r.comparison {
        let infl: Vec<String> = row.inflections.iter().map(|i| format!("{:?} {}", i.component, i.date)).collect();
        println!("{:<24} {:>14.4}  {}", row.name, row.mse, infl.join(", "));
    }
    if let Some(d) = &r.divergence {
        let show = |x: Option<NaiveDate>| x.map_or("never".to_string(), |d| d.to_string());
        println!(
            "divergence ({} vs {}, ratio {}): first {}, sustained from {}",
            d.between[0],
            d.between[1],
            d.threshold,
            show(d.first_exceedance),
            show(d.sustained_from)
        );
    }
    for c in &r.reference_checks {
        let actual = c.actual.map_or("none".to_string(), |d| d.to_string());
        let flag = if c.within_tolerance { "ok" } else { "DEVIATION" };
        println!("check {:<40} expected {} +/- {}d, got {actual}: {flag}", c.quantity, c.expected, c.tolerance_days);
    }
}

fn cmd_report(g: &Global) -> Result<()> {
    let path = g.out_dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest => cmd_ingest(g),
        Command::FitHorizons => cmd_fit_horizons(g),
        Command::FitTrend { spec } => cmd_fit_trend(g, spec),
        Command::Forecast { start, end, step_days, specs } => cmd_forecast(g, start, end, step_days, &specs),
        Command::VerifyTheorem { k, alpha, resolution } => cmd_verify_theorem(g, k, alpha, resolution),
        Command::Pipeline { specs, start, end, step_days, divergence_threshold } => {
            cmd_pipeline(g, specs, start, end, step_days, divergence_threshold)
        }
        Command::Report => cmd_report(g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Exit>().map_or(1, |x| x.0);
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}
