//! Batch front-end for `pdc-core`: run configuration, pipeline stages and
//! the check report.

pub mod config;
pub mod pipeline;
pub mod report;

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

use config::{Resolved, RunConfig};
use pipeline::Output;
use report::{Metrics, Report};

/// Loads and resolves a run configuration.
///
/// `seed` replaces the seed of experiment `k` with `seed + k`; `out`
/// replaces the configured output directory.
pub fn open(
    path: &Path,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<PathBuf>,
    quiet: bool,
) -> Result<(Resolved, Output)> {
    let (mut cfg, base) = RunConfig::load(path, overrides)?;
    if let Some(s) = seed {
        for (k, e) in cfg.experiments.iter_mut().enumerate() {
            e.seed = s.wrapping_add(k as u64);
        }
    }
    let dir = out.unwrap_or_else(|| cfg.output_directory.clone());
    let resolved = cfg.resolve(&base)?;
    Ok((resolved, Output { dir, quiet }))
}

/// Runs every stage and writes `report.json`.
pub fn full_report(r: &Resolved, out: &Output) -> Result<Report> {
    let shg = pipeline::shg(r, out)?;
    let design = pipeline::design(r, out)?;
    let budget = if r.chains.is_empty() {
        None
    } else {
        Some(pipeline::budget(r, out)?)
    };
    let spectra = pipeline::jsa(r, out)?;
    let experiments = pipeline::simulate(r, Some(&spectra), out)?;
    let metrics = Metrics::collect(&shg, &design, budget.as_ref(), Some(&spectra.summary), &experiments);
    let report = Report::new(metrics, &r.config.checks);
    out.write_json("report.json", &report)?;
    for line in report.lines() {
        out.say(line);
    }
    Ok(report)
}

/// Runs the Monte-Carlo experiments, building the spectrum only when needed.
pub fn simulate(r: &Resolved, out: &Output) -> Result<Vec<pipeline::ExperimentSummary>> {
    if r.config.experiments.is_empty() {
        bail!("no [[experiments]] configured");
    }
    let spectra = if pipeline::needs_spectrum(r) {
        Some(pipeline::jsa(r, out)?)
    } else {
        None
    };
    pipeline::simulate(r, spectra.as_ref(), out)
}
