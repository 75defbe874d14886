use std::path::PathBuf;

use clap::Args;
use duet_core::alarm::{latency_bench, AlarmDirection};
use duet_core::data::CsvOptions;
use serde_json::json;

use crate::manifest::{ensure_out_dir, ManifestBuilder};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Timed passes over the dataset (after one warm-up pass).
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub thresholds: String,
    #[arg(long, default_value = "high")]
    pub direction: AlarmDirection,
    #[arg(long, default_value = "out/bench")]
    pub out_dir: PathBuf,
}

pub fn run(args: &BenchArgs) -> CliResult<()> {
    if args.repetitions == 0 {
        return Err(CliError::usage("--repetitions must be >= 1"));
    }
    let params = super::load_model(&args.checkpoint)?;
    let dataset = super::load_dataset(&args.data, &CsvOptions::default())?;
    let rule = super::parse_rule(&args.thresholds, args.direction, dataset.dim())?;

    let stats = latency_bench(&params, &dataset, &rule, args.repetitions)
        .map_err(|e| CliError::usage(format!("bench: {e}")))?;

    ensure_out_dir(&args.out_dir)?;
    let latency_path = args.out_dir.join("latency.json");
    super::write_json(&stats, &latency_path)?;

    let config = json!({
        "checkpoint": args.checkpoint.display().to_string(),
        "repetitions": args.repetitions,
        "thresholds": rule.thresholds,
    });
    let mut manifest = ManifestBuilder::new("bench", config, json!({}));
    manifest.input(&args.data)?;
    manifest.input(&args.checkpoint)?;
    manifest.output(&latency_path)?;
    manifest.write(&args.out_dir)?;
    println!(
        "latency per sample: mean {:.1} us, p50 {:.1} us, p99 {:.1} us over {} samples",
        stats.mean_seconds * 1e6,
        stats.p50_seconds * 1e6,
        stats.p99_seconds * 1e6,
        stats.samples
    );
    Ok(())
}
