//! Command-line driver: config parsing, pipeline runs, sweeps, held-out
//! evaluation and report rendering.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use pacgen::pipeline::{
    evaluate_run, read_sweep_cells, run_pipeline, sweep, with_workers, ExperimentConfig, RunDir,
    SweepAxis, REPORT_FILE, SWEEP_FILE,
};
use serde::Serialize;
use serde_json::Value;

/// Environment variable overriding the number of worker threads.
pub const WORKERS_ENV: &str = "PACGEN_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "pacgen",
    version,
    about = "PAC-Bayes certificates for policies trained on generated environments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline for one config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path override, e.g. `--set es.iterations=50`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the pipeline over a grid of axis values and seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// `n_obstacles_gen` or `n_real`.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
    /// Estimate the true cost of a finished run on held-out environments.
    Eval {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        n_eval: usize,
        /// Defaults to a seed derived from the run's master seed.
        #[arg(long)]
        eval_seed: Option<u64>,
    },
    /// Summarize a run or sweep directory and write plot data.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Read a TOML or JSON config (by extension; TOML otherwise), apply
/// `key=value` overrides and validate.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut doc: Value = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text)
            .with_context(|| format!("cannot parse {} as JSON", path.display()))?,
        _ => toml::from_str(&text)
            .with_context(|| format!("cannot parse {} as TOML", path.display()))?,
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    config_from_value(doc)
}

/// Deserialize a config document, naming the offending field on failure.
pub fn config_from_value(doc: Value) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("invalid config at `{path}`: {}", e.into_inner())
    })?;
    config.validate()?;
    Ok(config)
}

/// Set `key` (dotted path) to `value`, parsed as JSON when possible and as
/// a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            bail!("override key `{key}` has an empty segment");
        }
        let map = match node {
            Value::Object(map) => map,
            _ => bail!(
                "override `{key}`: `{}` is not a table",
                parts[..i].join(".")
            ),
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one segment")
}

/// One row of plot data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    #[serde(rename = "N")]
    pub n_real: Option<usize>,
    pub n_obstacles_gen: Option<usize>,
    pub seed: Option<u64>,
    pub bound: Option<f64>,
    pub empirical: Option<f64>,
    pub kl: Option<f64>,
    pub true_cost_estimate: Option<f64>,
    pub stderr: Option<f64>,
}

struct Rendered {
    summary: String,
    rows: Vec<ReportRow>,
    missing: usize,
}

fn render_run(dir: &RunDir, summary: &mut String) -> Result<ReportRow> {
    let report = dir
        .read_report()
        .with_context(|| format!("run directory {}", dir.root().display()))?;
    let eval = dir.read_eval()?;
    writeln!(summary, "run {}", dir.root().display())?;
    writeln!(
        summary,
        "  N = {}, m = {}, l = {}, delta = {}, seed = {}, generative obstacles = {}",
        report.n_real,
        report.m,
        report.l,
        report.delta,
        report.provenance.master_seed,
        report.provenance.n_obstacles_gen
    )?;
    writeln!(summary, "  PAC-Bayes bound     {:.6}", report.pac_bound)?;
    writeln!(
        summary,
        "  empirical cost      {:.6}",
        report.empirical_cost
    )?;
    writeln!(summary, "  KL(q || q0)         {:.6}", report.kl)?;
    writeln!(summary, "  regularizer         {:.6}", report.regularizer)?;
    match &eval {
        Some(e) if e.standard_error_defined => writeln!(
            summary,
            "  true cost estimate  {:.6} +/- {:.6} (n_eval = {})",
            e.estimate, e.standard_error, e.n_eval
        )?,
        Some(e) => writeln!(
            summary,
            "  true cost estimate  {:.6} (n_eval = {}, no standard error)",
            e.estimate, e.n_eval
        )?,
        None => writeln!(summary, "  true cost estimate  not evaluated")?,
    }
    Ok(ReportRow {
        n_real: Some(report.n_real),
        n_obstacles_gen: Some(report.provenance.n_obstacles_gen),
        seed: Some(report.provenance.master_seed),
        bound: Some(report.pac_bound),
        empirical: Some(report.empirical_cost),
        kl: Some(report.kl),
        true_cost_estimate: eval.as_ref().map(|e| e.estimate),
        stderr: eval
            .as_ref()
            .filter(|e| e.standard_error_defined)
            .map(|e| e.standard_error),
    })
}

fn render(dir: &Path) -> Result<Rendered> {
    let mut summary = String::new();
    if dir.join(REPORT_FILE).exists() {
        let row = render_run(&RunDir::new(dir), &mut summary)?;
        return Ok(Rendered {
            summary,
            rows: vec![row],
            missing: 0,
        });
    }
    if !dir.join(SWEEP_FILE).exists() {
        bail!(
            "{} holds neither {REPORT_FILE} nor {SWEEP_FILE}",
            dir.display()
        );
    }
    let mut rows = Vec::new();
    let mut missing = 0;
    for (cell, ok) in read_sweep_cells(dir)? {
        if ok {
            rows.push(render_run(&cell, &mut summary)?);
        } else {
            writeln!(
                summary,
                "run {}\n  failed; no report",
                cell.root().display()
            )?;
            missing += 1;
            rows.push(ReportRow {
                n_real: None,
                n_obstacles_gen: None,
                seed: None,
                bound: None,
                empirical: None,
                kl: None,
                true_cost_estimate: None,
                stderr: None,
            });
        }
    }
    Ok(Rendered {
        summary,
        rows,
        missing,
    })
}

/// Summarize the run or sweep directory `dir` and write its plot data to
/// `out`. Reads persisted artifacts only. Returns the summary text; fails
/// (after writing the CSV) if any sweep cell has no report.
pub fn render_report(dir: &Path, out: &Path) -> Result<String> {
    let rendered = render(dir)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w =
        csv::Writer::from_path(out).with_context(|| format!("cannot write {}", out.display()))?;
    for row in &rendered.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    if rendered.missing > 0 {
        bail!(
            "{}\n{} sweep cell(s) have no report",
            rendered.summary.trim_end(),
            rendered.missing
        );
    }
    Ok(rendered.summary)
}

/// Worker count from [`WORKERS_ENV`], if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{WORKERS_ENV}=`{v}` is not a positive integer"))?;
            if n == 0 {
                bail!("{WORKERS_ENV} must be at least 1");
            }
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("{WORKERS_ENV}: {e}")),
    }
}

fn dispatch(command: Command) -> Result<String> {
    match command {
        Command::Run { config, overrides } => {
            let config = parse_config(&config, &overrides)?;
            let report = run_pipeline(&config)?;
            Ok(format!(
                "bound {:.6} (empirical {:.6}, KL {:.6}) written to {}\n",
                report.pac_bound,
                report.empirical_cost,
                report.kl,
                config.output_dir.display()
            ))
        }
        Command::Sweep {
            config,
            overrides,
            axis,
            values,
            seeds,
        } => {
            let config = parse_config(&config, &overrides)?;
            let axis: SweepAxis = axis.parse()?;
            let rows = sweep(&config, axis, &values, &seeds)?;
            let mut out = String::new();
            let mut failed = 0;
            for r in &rows {
                match &r.outcome {
                    Ok(rep) => writeln!(
                        out,
                        "{axis}={} seed={} bound={:.6} empirical={:.6}",
                        r.value, r.seed, rep.pac_bound, rep.empirical_cost
                    )?,
                    Err(e) => {
                        failed += 1;
                        writeln!(out, "{axis}={} seed={} failed: {e}", r.value, r.seed)?
                    }
                }
            }
            writeln!(
                out,
                "table written to {}",
                config.output_dir.join(SWEEP_FILE).display()
            )?;
            if failed > 0 {
                bail!(
                    "{}\n{failed} of {} cells failed",
                    out.trim_end(),
                    rows.len()
                );
            }
            Ok(out)
        }
        Command::Eval {
            run_dir,
            n_eval,
            eval_seed,
        } => {
            let rec = evaluate_run(&RunDir::new(run_dir), n_eval, eval_seed)?;
            Ok(if rec.standard_error_defined {
                format!(
                    "true cost estimate {:.6} +/- {:.6} (n_eval = {}, seed = {})\n",
                    rec.estimate, rec.standard_error, rec.n_eval, rec.eval_seed
                )
            } else {
                format!(
                    "true cost estimate {:.6} (n_eval = {}, seed = {})\n",
                    rec.estimate, rec.n_eval, rec.eval_seed
                )
            })
        }
        Command::Report { run_dir, out } => render_report(&run_dir, &out),
    }
}

/// Execute a parsed command line and return the text to print.
pub fn run(cli: Cli) -> Result<String> {
    match workers_from_env()? {
        Some(n) => with_workers(n, || dispatch(cli.command))?,
        None => dispatch(cli.command),
    }
}
