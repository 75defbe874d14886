use std::path::PathBuf;

use clap::Args;
use duet_core::data::{export_csv, generate_gaussian, inject_fault, FaultPreset, GaussianSpec};
use serde_json::json;

use crate::manifest::{ensure_out_dir, ManifestBuilder};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct GenerateArgs {
    /// Number of dimensions.
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Number of samples (normal samples when a fault is injected).
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Per-dimension mean of the normal condition.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub mean: f64,
    /// Per-dimension standard deviation (must be > 0).
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Named fault preset (f1/f2/f3: +0.5, +1, +2 mean shift).
    #[arg(long, conflicts_with = "fault_mean")]
    pub fault_preset: Option<FaultPreset>,
    /// Explicit fault mean (all dimensions).
    #[arg(long, allow_negative_numbers = true)]
    pub fault_mean: Option<f64>,
    /// Fault onset: samples before it come from the normal condition.
    #[arg(long)]
    pub onset: Option<usize>,
    /// Number of faulty samples appended at the onset.
    #[arg(long)]
    pub fault_n: Option<usize>,
    #[arg(long, default_value = "out/generate")]
    pub out_dir: PathBuf,
}

pub fn run(args: &GenerateArgs) -> CliResult<()> {
    if args.dim == 0 {
        return Err(CliError::usage("--dim must be positive"));
    }
    if !(args.std > 0.0) || !args.std.is_finite() {
        return Err(CliError::usage(format!("--std must be > 0, got {}", args.std)));
    }
    if args.n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }

    let fault_shift = match (args.fault_preset, args.fault_mean) {
        (Some(preset), None) => Some(preset.shift() * args.std),
        (None, Some(mean)) => Some(mean - args.mean),
        (None, None) => None,
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    if fault_shift.is_some() && args.onset.is_none() {
        return Err(CliError::usage("--onset is required when injecting a fault"));
    }
    if args.onset.is_some() && fault_shift.is_none() {
        return Err(CliError::usage("--onset requires --fault-preset or --fault-mean"));
    }

    let spec = GaussianSpec::isotropic(args.mean, args.std, args.dim, args.n, args.seed);
    let normal = generate_gaussian(&spec)
        .map_err(|e| CliError::usage(format!("invalid generation flags: {e}")))?;

    let dataset = if let Some(shift) = fault_shift {
        let onset = args.onset.expect("checked above");
        if onset == 0 || onset > args.n {
            return Err(CliError::usage(format!(
                "--onset must be in [1, {}], got {onset}",
                args.n
            )));
        }
        let fault_n = args.fault_n.unwrap_or(args.n.saturating_sub(onset).max(1));
        let fault_spec = spec.shifted(shift, fault_n, args.seed.wrapping_add(1));
        inject_fault(&normal, &fault_spec, onset)
            .map_err(|e| CliError::usage(format!("fault injection: {e}")))?
    } else {
        normal
    };

    ensure_out_dir(&args.out_dir)?;
    let data_path = args.out_dir.join("data.csv");
    export_csv(&dataset, &data_path).map_err(|e| CliError::Runtime(e.into()))?;

    let config = json!({
        "dim": args.dim,
        "n": args.n,
        "mean": args.mean,
        "std": args.std,
        "fault_preset": args.fault_preset.map(|p| p.to_string()),
        "fault_mean": args.fault_mean,
        "onset": args.onset,
        "fault_n": args.fault_n,
        "rows_written": dataset.len(),
    });
    let mut manifest = ManifestBuilder::new("generate", config, json!({ "seed": args.seed }));
    manifest.output(&data_path)?;
    manifest.write(&args.out_dir)?;
    println!("wrote {} ({} rows x {} dims)", data_path.display(), dataset.len(), dataset.dim());
    Ok(())
}
