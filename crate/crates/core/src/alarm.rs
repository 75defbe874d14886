//! The decision layer: residual filtering through the deterministic encoder,
//! threshold design, sample-wise limit checking with FAR/MAR and detection
//! delay, and inference-latency measurement.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TimeSeriesDataset;
use crate::model::{ModelError, ModelParams};
use crate::parallel;

#[derive(Debug, Error)]
pub enum AlarmError {
    #[error("signal has no fault onset; FAR/MAR need both segments")]
    MissingOnset,
    #[error("rule covers {rule} dimensions, signal has {signal}")]
    DimensionMismatch { rule: usize, signal: usize },
    #[error("empty sample passed to threshold selection")]
    EmptySample,
    #[error("latency benchmark needs at least one repetition and one sample")]
    EmptyBenchmark,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Alarm when the value crosses the threshold in this direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlarmDirection {
    High,
    Low,
}

impl FromStr for AlarmDirection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "high" => Ok(AlarmDirection::High),
            "low" => Ok(AlarmDirection::Low),
            other => Err(format!("unknown direction `{other}` (expected high or low)")),
        }
    }
}

/// One threshold and direction per monitored dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub thresholds: Vec<f64>,
    pub directions: Vec<AlarmDirection>,
}

impl ThresholdRule {
    /// The same threshold and direction for every dimension.
    pub fn uniform(threshold: f64, direction: AlarmDirection, dim: usize) -> Self {
        Self {
            thresholds: vec![threshold; dim],
            directions: vec![direction; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.thresholds.len()
    }

    #[inline]
    pub fn is_alarm(&self, dim: usize, value: f64) -> bool {
        match self.directions[dim] {
            AlarmDirection::High => value > self.thresholds[dim],
            AlarmDirection::Low => value < self.thresholds[dim],
        }
    }
}

/// Wall-clock statistics for one filtered-sample decision, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_seconds: f64,
    pub p50_seconds: f64,
    pub p99_seconds: f64,
    pub samples: usize,
}

/// Per-dimension false/missed alarm rates, their means, detection delay in
/// samples, and optional latency statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmReport {
    pub far_per_dim: Vec<f64>,
    pub mar_per_dim: Vec<f64>,
    /// Mean of `far_per_dim`.
    pub far: f64,
    /// Mean of `mar_per_dim`.
    pub mar: f64,
    /// Samples from onset to the first post-onset alarm; `None` when a
    /// dimension never alarms after the onset.
    pub detection_delay: Vec<Option<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencyStats>,
}

/// Runs every sample through the deterministic encoder. The stochastic path
/// is not evaluated; onset and variable names carry through.
pub fn filter_signal(
    params: &ModelParams,
    dataset: &TimeSeriesDataset,
) -> Result<TimeSeriesDataset, AlarmError> {
    if dataset.dim() != params.config().input_dim {
        return Err(ModelError::DimensionMismatch {
            expected: params.config().input_dim,
            got: dataset.dim(),
        }
        .into());
    }
    let rows: Vec<Result<Vec<f64>, ModelError>> =
        parallel::map_indexed(dataset.len(), |r| params.encode_deterministic(dataset.values().row(r)));
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let values = crate::numerics::Matrix::from_rows(&rows).expect("encoder output widths agree");
    Ok(TimeSeriesDataset::new(
        values,
        dataset.fault_onset(),
        dataset.variable_names().map(<[String]>::to_vec),
    )?)
}

/// Equal-variance Bayes boundary between two Gaussian means: the midpoint.
pub fn optimal_threshold(normal_mean: f64, fault_mean: f64) -> f64 {
    0.5 * (normal_mean + fault_mean)
}

/// Data-driven threshold: minimizes empirical FAR + MAR for a high-direction
/// alarm over all candidate cut points (midpoints of consecutive sorted
/// pooled values). Ties break toward the smaller threshold.
pub fn empirical_threshold(normal: &[f64], fault: &[f64]) -> Result<f64, AlarmError> {
    if normal.is_empty() || fault.is_empty() {
        return Err(AlarmError::EmptySample);
    }
    let mut pooled: Vec<f64> = normal.iter().chain(fault).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = pooled.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    candidates.dedup();

    let mut sorted_normal = normal.to_vec();
    sorted_normal.sort_by(f64::total_cmp);
    let mut sorted_fault = fault.to_vec();
    sorted_fault.sort_by(f64::total_cmp);

    // Count of values strictly greater than `cut`.
    let above = |sorted: &[f64], cut: f64| -> usize {
        sorted.partition_point(|v| *v <= cut)
    };

    let mut best_cut = candidates[0];
    let mut best_score = f64::INFINITY;
    for &cut in &candidates {
        let far = (normal.len() - above(&sorted_normal, cut)) as f64 / normal.len() as f64;
        let mar = above(&sorted_fault, cut) as f64 / fault.len() as f64;
        let score = far + mar;
        if score < best_score {
            best_score = score;
            best_cut = cut;
        }
    }
    Ok(best_cut)
}

/// Sample-wise limit check. FAR is the per-dimension fraction of pre-onset
/// samples that alarm; MAR the fraction of at-and-after-onset samples that do
/// not. Aggregates are means over dimensions.
pub fn evaluate(signal: &TimeSeriesDataset, rule: &ThresholdRule) -> Result<AlarmReport, AlarmError> {
    let onset = signal.fault_onset().ok_or(AlarmError::MissingOnset)?;
    if rule.dim() != signal.dim() {
        return Err(AlarmError::DimensionMismatch {
            rule: rule.dim(),
            signal: signal.dim(),
        });
    }
    let dim = signal.dim();
    let total = signal.len();
    let values = signal.values();

    let mut far_per_dim = Vec::with_capacity(dim);
    let mut mar_per_dim = Vec::with_capacity(dim);
    let mut detection_delay = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut false_alarms = 0usize;
        for t in 0..onset {
            if rule.is_alarm(j, values.get(t, j)) {
                false_alarms += 1;
            }
        }
        let mut missed = 0usize;
        let mut first_alarm: Option<usize> = None;
        for t in onset..total {
            if rule.is_alarm(j, values.get(t, j)) {
                if first_alarm.is_none() {
                    first_alarm = Some(t - onset);
                }
            } else {
                missed += 1;
            }
        }
        far_per_dim.push(false_alarms as f64 / onset as f64);
        mar_per_dim.push(missed as f64 / (total - onset) as f64);
        detection_delay.push(first_alarm);
    }

    let far = far_per_dim.iter().sum::<f64>() / dim as f64;
    let mar = mar_per_dim.iter().sum::<f64>() / dim as f64;
    Ok(AlarmReport {
        far_per_dim,
        mar_per_dim,
        far,
        mar,
        detection_delay,
        latency: None,
    })
}

/// Writes the per-sample alarm states as CSV rows of
/// `(time index, dimension, value, threshold, alarm flag)`.
pub fn write_alarm_csv<W: std::io::Write>(
    signal: &TimeSeriesDataset,
    rule: &ThresholdRule,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "time,dimension,value,threshold,alarm")?;
    for t in 0..signal.len() {
        for j in 0..signal.dim() {
            let v = signal.values().get(t, j);
            writeln!(
                out,
                "{t},{},{},{},{}",
                j + 1,
                crate::data::format_f64(v),
                crate::data::format_f64(rule.thresholds[j]),
                u8::from(rule.is_alarm(j, v))
            )?;
        }
    }
    Ok(())
}

/// Wall-clock time per sample for the inference path an alarm system runs:
/// deterministic encoding plus the limit check. One warm-up pass precedes
/// measurement; the benchmark itself is single-threaded.
pub fn latency_bench(
    params: &ModelParams,
    dataset: &TimeSeriesDataset,
    rule: &ThresholdRule,
    repetitions: usize,
) -> Result<LatencyStats, AlarmError> {
    if repetitions == 0 || dataset.is_empty() {
        return Err(AlarmError::EmptyBenchmark);
    }
    if dataset.dim() != params.config().input_dim {
        return Err(ModelError::DimensionMismatch {
            expected: params.config().input_dim,
            got: dataset.dim(),
        }
        .into());
    }
    if rule.dim() != dataset.dim() {
        return Err(AlarmError::DimensionMismatch {
            rule: rule.dim(),
            signal: dataset.dim(),
        });
    }

    // Warm-up pass over the whole dataset.
    for r in 0..dataset.len() {
        let phi_d = params.encode_deterministic(dataset.values().row(r))?;
        std::hint::black_box(&phi_d);
    }

    let mut times = Vec::with_capacity(repetitions * dataset.len());
    for _ in 0..repetitions {
        for r in 0..dataset.len() {
            let row = dataset.values().row(r);
            let start = Instant::now();
            let phi_d = params.encode_deterministic(row)?;
            let mut any_alarm = false;
            for (j, v) in phi_d.iter().enumerate() {
                any_alarm |= rule.is_alarm(j, *v);
            }
            let elapsed = start.elapsed();
            std::hint::black_box((&phi_d, any_alarm));
            times.push(elapsed.as_secs_f64());
        }
    }

    times.sort_by(f64::total_cmp);
    let n = times.len();
    let mean = times.iter().sum::<f64>() / n as f64;
    let percentile = |p: f64| -> f64 {
        let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        times[idx]
    };
    Ok(LatencyStats {
        mean_seconds: mean,
        p50_seconds: percentile(0.50),
        p99_seconds: percentile(0.99),
        samples: n,
    })
}
