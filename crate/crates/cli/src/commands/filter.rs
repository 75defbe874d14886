use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use duet_core::alarm::filter_signal;
use duet_core::data::{export_csv, format_f64, CsvOptions, Scaler, TimeSeriesDataset};
use duet_core::model::ModelParams;
use serde_json::json;

use crate::manifest::{ensure_out_dir, ManifestBuilder};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Fault onset carried into the filtered output.
    #[arg(long)]
    pub onset: Option<usize>,
    /// Scaler written by `train --standardize`; inputs are standardized and
    /// the filtered signal is mapped back to raw units.
    #[arg(long)]
    pub scaler: Option<PathBuf>,
    #[arg(long, default_value = "out/filter")]
    pub out_dir: PathBuf,
}

/// Filters through the deterministic encoder, standardizing in and
/// de-standardizing out when a scaler is supplied.
pub fn filter_with_scaler(
    params: &ModelParams,
    dataset: &TimeSeriesDataset,
    scaler: Option<&Scaler>,
) -> CliResult<TimeSeriesDataset> {
    let run = |data: &TimeSeriesDataset| {
        filter_signal(params, data).map_err(|e| CliError::usage(format!("filter: {e}")))
    };
    match scaler {
        None => run(dataset),
        Some(s) => {
            let standardized = s.apply(dataset).map_err(|e| CliError::usage(format!("scaler: {e}")))?;
            let filtered = run(&standardized)?;
            s.invert(&filtered).map_err(|e| CliError::Runtime(e.into()))
        }
    }
}

/// Original and filtered columns side by side for plotting.
pub fn comparison_csv(original: &TimeSeriesDataset, filtered: &TimeSeriesDataset) -> String {
    let names: Vec<String> = match original.variable_names() {
        Some(names) => names.to_vec(),
        None => (1..=original.dim()).map(|i| format!("x{i}")).collect(),
    };
    let mut header: Vec<String> = names.clone();
    header.extend(names.iter().map(|n| format!("{n}_filtered")));
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..original.len() {
        let mut cells: Vec<String> = original.values().row(r).iter().map(|v| format_f64(*v)).collect();
        cells.extend(filtered.values().row(r).iter().map(|v| format_f64(*v)));
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn write_filter_outputs(
    original: &TimeSeriesDataset,
    filtered: &TimeSeriesDataset,
    out_dir: &Path,
) -> CliResult<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let filtered_path = out_dir.join("filtered.csv");
    export_csv(filtered, &filtered_path).map_err(|e| CliError::Runtime(e.into()))?;
    let compare_path = out_dir.join("filter_compare.csv");
    super::write_text(&compare_path, &comparison_csv(original, filtered))?;
    Ok(vec![filtered_path, compare_path])
}

pub fn run(args: &FilterArgs) -> CliResult<()> {
    let params = super::load_model(&args.checkpoint)?;
    let options = CsvOptions {
        fault_onset: args.onset,
        ..CsvOptions::default()
    };
    let dataset = super::load_dataset(&args.data, &options)?;
    let scaler = args.scaler.as_deref().map(super::load_scaler).transpose()?;

    let filtered = filter_with_scaler(&params, &dataset, scaler.as_ref())?;
    let outputs = write_filter_outputs(&dataset, &filtered, &args.out_dir)?;

    let config = json!({
        "checkpoint": args.checkpoint.display().to_string(),
        "onset": args.onset,
        "scaler": args.scaler.as_ref().map(|p| p.display().to_string()),
    });
    let mut manifest = ManifestBuilder::new("filter", config, json!({}));
    manifest.input(&args.data)?;
    manifest.input(&args.checkpoint)?;
    for path in &outputs {
        manifest.output(path)?;
    }
    manifest.write(&args.out_dir)?;
    println!("filtered {} rows; wrote {}", filtered.len(), args.out_dir.display());
    Ok(())
}
