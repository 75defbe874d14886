//! Subcommand implementations and shared plumbing.

pub mod bench;
pub mod eval;
pub mod filter;
pub mod generate;
pub mod gridsearch;
pub mod repro;
pub mod train;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use duet_core::alarm::{AlarmDirection, ThresholdRule};
use duet_core::data::{format_f64, CsvOptions, TimeSeriesDataset};
use duet_core::model::ModelParams;
use duet_core::training::load_checkpoint;

use crate::{CliError, CliResult};

pub fn load_dataset(path: &Path, options: &CsvOptions) -> CliResult<TimeSeriesDataset> {
    duet_core::data::load_csv(path, options)
        .map_err(|e| CliError::usage(format!("--data {}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> CliResult<ModelParams> {
    load_checkpoint(path).map_err(|e| CliError::usage(format!("--checkpoint {}: {e}", path.display())))
}

pub fn load_scaler(path: &Path) -> CliResult<duet_core::data::Scaler> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("--scaler {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("--scaler {}: {e}", path.display())))
}

/// Builds a per-dimension rule from a broadcast threshold or a comma list.
pub fn parse_rule(thresholds: &str, direction: AlarmDirection, dim: usize) -> CliResult<ThresholdRule> {
    let parts: Vec<&str> = thresholds.split(',').map(str::trim).collect();
    let values: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| CliError::usage(format!("--thresholds: `{p}` is not a number")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let thresholds = match values.len() {
        1 => vec![values[0]; dim],
        n if n == dim => values,
        n => {
            return Err(CliError::usage(format!(
                "--thresholds: expected 1 or {dim} values, got {n}"
            )))
        }
    };
    if thresholds.iter().any(|t| !t.is_finite()) {
        return Err(CliError::usage("--thresholds: values must be finite"));
    }
    Ok(ThresholdRule {
        thresholds,
        directions: vec![direction; dim],
    })
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.into()))?;
    fs::write(path, text + "\n")
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Runtime)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Runtime)
}

/// Per-dimension histogram counts of the pre- and post-onset segments,
/// emitted as plot-ready CSV rows.
pub fn histogram_csv(signal: &TimeSeriesDataset, label: &str, bins: usize, out: &mut String) {
    let onset = signal.fault_onset().unwrap_or(signal.len());
    for j in 0..signal.dim() {
        let column: Vec<f64> = (0..signal.len()).map(|t| signal.values().get(t, j)).collect();
        let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut pre = vec![0usize; bins];
        let mut post = vec![0usize; bins];
        for (t, v) in column.iter().enumerate() {
            let mut b = ((v - lo) / width) as usize;
            if b >= bins {
                b = bins - 1;
            }
            if t < onset {
                pre[b] += 1;
            } else {
                post[b] += 1;
            }
        }
        for b in 0..bins {
            let _ = writeln!(
                out,
                "{label},{dim},{lo_edge},{hi_edge},{p},{q}",
                dim = j + 1,
                lo_edge = format_f64(lo + b as f64 * width),
                hi_edge = format_f64(lo + (b + 1) as f64 * width),
                p = pre[b],
                q = post[b]
            );
        }
    }
}
