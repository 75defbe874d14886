use std::path::{Path, PathBuf};

use clap::Args;
use duet_core::alarm::{evaluate, write_alarm_csv, AlarmDirection, AlarmReport, ThresholdRule};
use duet_core::data::{CsvOptions, TimeSeriesDataset};
use serde_json::json;

use crate::manifest::{ensure_out_dir, ManifestBuilder};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint used to filter the signal before the filtered-side evaluation.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Raw signal CSV (normal segment followed by the faulty one).
    #[arg(long)]
    pub data: PathBuf,
    /// Fault onset index; required to split FAR from MAR.
    #[arg(long)]
    pub onset: usize,
    /// One broadcast threshold or a comma list with one value per dimension.
    #[arg(long, allow_hyphen_values = true)]
    pub thresholds: String,
    #[arg(long, default_value = "high")]
    pub direction: AlarmDirection,
    #[arg(long)]
    pub scaler: Option<PathBuf>,
    #[arg(long, default_value = "out/eval")]
    pub out_dir: PathBuf,
}

pub struct EvalOutputs {
    pub raw: AlarmReport,
    pub filtered: AlarmReport,
    pub files: Vec<PathBuf>,
}

/// Evaluates the rule on the raw signal and on its filtered counterpart,
/// emitting reports, per-sample alarm states, and histogram data.
pub fn evaluate_both(
    raw: &TimeSeriesDataset,
    filtered: &TimeSeriesDataset,
    rule: &ThresholdRule,
    out_dir: &Path,
) -> CliResult<EvalOutputs> {
    ensure_out_dir(out_dir)?;
    let raw_report = evaluate(raw, rule).map_err(|e| CliError::usage(format!("eval raw: {e}")))?;
    let filtered_report =
        evaluate(filtered, rule).map_err(|e| CliError::usage(format!("eval filtered: {e}")))?;

    let mut files = Vec::new();
    let raw_path = out_dir.join("report_raw.json");
    super::write_json(&raw_report, &raw_path)?;
    files.push(raw_path);
    let filtered_path = out_dir.join("report_filtered.json");
    super::write_json(&filtered_report, &filtered_path)?;
    files.push(filtered_path);

    for (name, signal) in [("alarms_raw.csv", raw), ("alarms_filtered.csv", filtered)] {
        let path = out_dir.join(name);
        let mut buf = Vec::new();
        write_alarm_csv(signal, rule, &mut buf).map_err(|e| CliError::Runtime(e.into()))?;
        super::write_text(&path, &String::from_utf8(buf).expect("ascii csv"))?;
        files.push(path);
    }

    let mut hist = String::from("signal,dimension,bin_lo,bin_hi,pre_onset_count,post_onset_count\n");
    super::histogram_csv(raw, "raw", 40, &mut hist);
    super::histogram_csv(filtered, "filtered", 40, &mut hist);
    let hist_path = out_dir.join("histograms.csv");
    super::write_text(&hist_path, &hist)?;
    files.push(hist_path);

    Ok(EvalOutputs {
        raw: raw_report,
        filtered: filtered_report,
        files,
    })
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let params = super::load_model(&args.checkpoint)?;
    let options = CsvOptions {
        fault_onset: Some(args.onset),
        ..CsvOptions::default()
    };
    let dataset = super::load_dataset(&args.data, &options)?;
    let rule = super::parse_rule(&args.thresholds, args.direction, dataset.dim())?;
    let scaler = args.scaler.as_deref().map(super::load_scaler).transpose()?;

    let filtered = super::filter::filter_with_scaler(&params, &dataset, scaler.as_ref())?;
    let outputs = evaluate_both(&dataset, &filtered, &rule, &args.out_dir)?;

    let config = json!({
        "checkpoint": args.checkpoint.display().to_string(),
        "onset": args.onset,
        "thresholds": rule.thresholds,
        "direction": args.direction,
        "scaler": args.scaler.as_ref().map(|p| p.display().to_string()),
    });
    let mut manifest = ManifestBuilder::new("eval", config, json!({}));
    manifest.input(&args.data)?;
    manifest.input(&args.checkpoint)?;
    for path in &outputs.files {
        manifest.output(path)?;
    }
    manifest.write(&args.out_dir)?;
    println!(
        "raw FAR {:.4} MAR {:.4} | filtered FAR {:.4} MAR {:.4}",
        outputs.raw.far, outputs.raw.mar, outputs.filtered.far, outputs.filtered.mar
    );
    Ok(())
}
