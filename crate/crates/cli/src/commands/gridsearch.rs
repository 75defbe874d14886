use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use duet_core::data::{format_f64, CsvOptions};
use duet_core::training::{grid_search, GridSpec, TrainConfig};
use serde_json::json;

use crate::manifest::{ensure_out_dir, ManifestBuilder};
use crate::spec::load_config_file;
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct GridsearchArgs {
    /// CSV of normal-condition samples.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON grid file: candidate architectures, smoothness weights,
    /// learning rates, and window lengths.
    #[arg(long)]
    pub grid: PathBuf,
    /// Reduced epoch budget per candidate.
    #[arg(long, default_value_t = 50)]
    pub budget_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out/gridsearch")]
    pub out_dir: PathBuf,
}

pub fn run(args: &GridsearchArgs) -> CliResult<()> {
    let grid: GridSpec = load_config_file(&args.grid)?;
    let dataset = super::load_dataset(&args.data, &CsvOptions::default())?;
    let base_model = duet_core::model::ModelConfig::for_input_dim(dataset.dim(), args.seed);
    let base_train = TrainConfig {
        seed: args.seed,
        ..TrainConfig::default()
    };

    let ranked = grid_search(&grid, &base_model, &base_train, args.budget_epochs, &dataset)
        .map_err(|e| CliError::usage(format!("gridsearch: {e}")))?;

    ensure_out_dir(&args.out_dir)?;
    let mut csv = String::from(
        "rank,candidate_index,shared,deterministic,stochastic,lambda_smoothness,learning_rate,window_length,param_count,final_validation_total,error\n",
    );
    let widths = |w: &[usize]| {
        w.iter().map(ToString::to_string).collect::<Vec<_>>().join("|")
    };
    for (rank, outcome) in ranked.iter().enumerate() {
        let c = &outcome.candidate;
        let _ = writeln!(
            csv,
            "{rank},{},{},{},{},{},{},{},{},{},{}",
            c.index,
            widths(&c.architecture.shared),
            widths(&c.architecture.deterministic),
            widths(&c.architecture.stochastic),
            format_f64(c.smoothness_weight),
            format_f64(c.learning_rate),
            c.window_length,
            outcome.param_count,
            outcome
                .final_validation_total
                .map(format_f64)
                .unwrap_or_default(),
            outcome.error.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    let ranking_path = args.out_dir.join("ranking.csv");
    super::write_text(&ranking_path, &csv)?;

    let config = json!({
        "grid": args.grid.display().to_string(),
        "budget_epochs": args.budget_epochs,
        "candidates": ranked.len(),
    });
    let mut manifest = ManifestBuilder::new("gridsearch", config, json!({ "seed": args.seed }));
    manifest.input(&args.data)?;
    manifest.input(&args.grid)?;
    manifest.output(&ranking_path)?;
    manifest.write(&args.out_dir)?;
    println!("ranked {} candidates; wrote {}", ranked.len(), ranking_path.display());
    Ok(())
}
