//! Per-chain CSV files and the JSON diagnostics report.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hmc_core::diagnose::Report;
use hmc_core::Draw;
use serde::Serialize;

use crate::config::RunConfig;
use crate::run::RunOutput;

pub const FIXED_COLUMNS: [&str; 7] = [
    "lp__",
    "accept_stat__",
    "stepsize__",
    "treedepth__",
    "n_leapfrog__",
    "divergent__",
    "energy__",
];

pub fn header(dim: usize) -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|c| c.to_string())
        .chain((1..=dim).map(|k| format!("q.{k}")))
        .collect()
}

fn record(draw: &Draw) -> Vec<String> {
    [
        draw.log_density.to_string(),
        draw.accept_stat.to_string(),
        draw.step_size.to_string(),
        draw.depth.to_string(),
        draw.n_leapfrog.to_string(),
        u8::from(draw.divergent).to_string(),
        draw.energy.to_string(),
    ]
    .into_iter()
    .chain(draw.q.iter().map(|x| x.to_string()))
    .collect()
}

/// Writes one chain as CSV: a `#` comment block echoing the configuration and
/// the adapted tuning, then a header row and one row per draw.
pub fn write_chain_csv<W: Write>(
    mut out: W,
    config: &RunConfig,
    chain: usize,
    step_size: f64,
    inverse_metric: &[Vec<f64>],
    draws: &[Draw],
) -> io::Result<()> {
    let echo = serde_json::to_string_pretty(config).map_err(io::Error::other)?;
    for line in echo.lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "# chain: {}", chain + 1)?;
    writeln!(out, "# step_size: {step_size}")?;
    let metric = serde_json::to_string(inverse_metric).map_err(io::Error::other)?;
    writeln!(out, "# inverse_metric: {metric}")?;

    let dim = draws.first().map_or(0, |d| d.q.len());
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(header(dim))?;
    for d in draws {
        csv.write_record(record(d))?;
    }
    csv.flush()
}

#[derive(Serialize)]
struct ChainTuning {
    chain: usize,
    step_size: f64,
    inverse_metric: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    config: &'a RunConfig,
    adaptation: Vec<ChainTuning>,
    report: &'a Report,
}

fn inverse_metric_rows(output: &hmc_core::sampler::ChainOutput) -> Vec<Vec<f64>> {
    let m = output.metric.inverse_mass_matrix();
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// File name of chain `chain` (zero-based) in the output directory.
pub fn chain_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("chain_{}.csv", chain + 1))
}

pub fn diagnostics_path(dir: &Path) -> PathBuf {
    dir.join("diagnostics.json")
}

/// Writes `chain_<k>.csv` for every chain plus `diagnostics.json`.
pub fn write_output(run: &RunOutput, config: &RunConfig, dir: &Path) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(run.chains.len() + 1);
    let mut adaptation = Vec::with_capacity(run.chains.len());
    for (c, chain) in run.chains.iter().enumerate() {
        let path = chain_path(dir, c);
        let inverse_metric = inverse_metric_rows(chain);
        let file = BufWriter::new(File::create(&path)?);
        write_chain_csv(file, config, c, chain.step_size, &inverse_metric, &chain.draws)?;
        adaptation.push(ChainTuning {
            chain: c + 1,
            step_size: chain.step_size,
            inverse_metric,
        });
        written.push(path);
    }

    let path = diagnostics_path(dir);
    let diagnostics = Diagnostics {
        config,
        adaptation,
        report: &run.report,
    };
    let mut file = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut file, &diagnostics).map_err(io::Error::other)?;
    writeln!(file)?;
    file.flush()?;
    written.push(path);
    Ok(written)
}
