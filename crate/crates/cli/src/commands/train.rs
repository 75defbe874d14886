use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use duet_core::data::{fit_scaler, format_f64, CsvOptions, TimeSeriesDataset};
use duet_core::training::{save_checkpoint, train, LearningCurve};
use serde_json::json;

use crate::manifest::{ensure_out_dir, ManifestBuilder};
use crate::spec::{load_config_file, TrainSpec};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct TrainArgs {
    /// CSV of normal-condition samples.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON file overriding any field of the training spec.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub window_length: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Training seed (shuffling and reparameterization noise).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight initialization seed.
    #[arg(long)]
    pub model_seed: Option<u64>,
    #[arg(long)]
    pub lambda_orthogonality: Option<f64>,
    #[arg(long)]
    pub lambda_nll: Option<f64>,
    #[arg(long)]
    pub lambda_smoothness: Option<f64>,
    #[arg(long)]
    pub lambda_kl: Option<f64>,
    /// Comma-separated widths, e.g. 16,100,50.
    #[arg(long, value_delimiter = ',')]
    pub shared_widths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub deterministic_widths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub stochastic_widths: Option<Vec<usize>>,
    /// Standardize inputs with a scaler fitted on the data.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value = "out/train")]
    pub out_dir: PathBuf,
}

pub fn resolve_spec(args: &TrainArgs) -> CliResult<TrainSpec> {
    let mut spec = match &args.config {
        Some(path) => load_config_file::<TrainSpec>(path)?,
        None => TrainSpec::default(),
    };
    if let Some(v) = args.epochs {
        spec.train.epochs = v;
    }
    if let Some(v) = args.window_length {
        spec.train.window_length = v;
    }
    if let Some(v) = args.learning_rate {
        spec.train.learning_rate = v;
    }
    if let Some(v) = args.validation_fraction {
        spec.train.validation_fraction = v;
    }
    if let Some(v) = args.mc_samples {
        spec.train.mc_samples = v;
    }
    if let Some(v) = args.seed {
        spec.train.seed = v;
    }
    if let Some(v) = args.model_seed {
        spec.model.seed = v;
    }
    if let Some(v) = args.lambda_orthogonality {
        spec.train.weights.orthogonality = v;
    }
    if let Some(v) = args.lambda_nll {
        spec.train.weights.nll = v;
    }
    if let Some(v) = args.lambda_smoothness {
        spec.train.weights.smoothness = v;
    }
    if let Some(v) = args.lambda_kl {
        spec.train.weights.kl = v;
    }
    if let Some(v) = &args.shared_widths {
        spec.model.shared_widths = v.clone();
    }
    if let Some(v) = &args.deterministic_widths {
        spec.model.deterministic_widths = v.clone();
    }
    if let Some(v) = &args.stochastic_widths {
        spec.model.stochastic_widths = v.clone();
    }
    if args.standardize {
        spec.standardize = true;
    }
    Ok(spec)
}

pub fn curve_csv(curve: &LearningCurve) -> String {
    let mut out = String::from(
        "epoch,train_orthogonality,train_nll,train_smoothness,train_kl,train_total,\
         val_orthogonality,val_nll,val_smoothness,val_kl,val_total\n",
    );
    for (i, e) in curve.epochs.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{},{}",
            format_f64(e.train.orthogonality),
            format_f64(e.train.nll),
            format_f64(e.train.smoothness),
            format_f64(e.train.kl),
            format_f64(e.train.total),
            format_f64(e.validation.orthogonality),
            format_f64(e.validation.nll),
            format_f64(e.validation.smoothness),
            format_f64(e.validation.kl),
            format_f64(e.validation.total),
        );
    }
    out
}

/// Trains per the resolved spec and writes checkpoint + curve (+ scaler)
/// into `out_dir`. Shared by the train and repro commands.
pub fn train_to_dir(spec: &TrainSpec, dataset: &TimeSeriesDataset, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut model_config = spec.model.clone();
    if model_config.input_dim != dataset.dim() && model_config == duet_core::model::ModelConfig::default() {
        // Convenience: default layout adapts to the data dimension.
        model_config = duet_core::model::ModelConfig::for_input_dim(dataset.dim(), spec.model.seed);
    }
    if model_config.input_dim != dataset.dim() {
        return Err(CliError::usage(format!(
            "model input_dim {} does not match data dimension {}",
            model_config.input_dim,
            dataset.dim()
        )));
    }

    let mut outputs = Vec::new();
    ensure_out_dir(out_dir)?;

    let (train_data, scaler) = if spec.standardize {
        let scaler = fit_scaler(dataset).map_err(|e| CliError::usage(format!("standardize: {e}")))?;
        let scaled = scaler.apply(dataset).map_err(|e| CliError::Runtime(e.into()))?;
        (scaled, Some(scaler))
    } else {
        (dataset.clone(), None)
    };

    let (params, curve) = train(&model_config, &spec.train, &train_data).map_err(|e| match e {
        duet_core::training::TrainError::InvalidConfig(_)
        | duet_core::training::TrainError::WindowTooLong { .. } => CliError::usage(e.to_string()),
        other => CliError::Runtime(other.into()),
    })?;

    let checkpoint_path = out_dir.join("checkpoint.json");
    save_checkpoint(&params, &checkpoint_path).map_err(|e| CliError::Runtime(e.into()))?;
    outputs.push(checkpoint_path);

    let curve_path = out_dir.join("curve.csv");
    super::write_text(&curve_path, &curve_csv(&curve))?;
    outputs.push(curve_path);

    if let Some(scaler) = &scaler {
        let scaler_path = out_dir.join("scaler.json");
        super::write_json(scaler, &scaler_path)?;
        outputs.push(scaler_path);
    }
    Ok(outputs)
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let spec = resolve_spec(args)?;
    let dataset = super::load_dataset(&args.data, &CsvOptions::default())?;

    let outputs = train_to_dir(&spec, &dataset, &args.out_dir)?;

    let seeds = json!({ "train": spec.train.seed, "model": spec.model.seed });
    let config = serde_json::to_value(&spec).map_err(|e| CliError::Runtime(e.into()))?;
    let mut manifest = ManifestBuilder::new("train", config, seeds);
    manifest.input(&args.data)?;
    for path in &outputs {
        manifest.output(path)?;
    }
    manifest.write(&args.out_dir)?;
    println!("trained; wrote {}", args.out_dir.join("checkpoint.json").display());
    Ok(())
}
