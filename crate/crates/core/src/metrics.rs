//! Outcome measures over a panel of agent actions: mean normalized action,
//! squared distance to the benchmark, probability and size of excess effort,
//! and normal-approximation confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("benchmark action must be positive, got {0}")]
    NonPositiveBenchmark(f64),
    #[error("panel has no runs")]
    EmptyPanel,
    #[error("period {t} outside 1..={periods}")]
    PeriodOutOfRange { t: usize, periods: usize },
    #[error("runs have unequal lengths")]
    Ragged,
    #[error("need at least two values, got {0}")]
    TooFewValues(usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

/// Actions `a_{t,r}` taken by the agent, one row per run, rejected periods as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPanel {
    runs: Vec<Vec<f64>>,
    periods: usize,
}

impl ActionPanel {
    pub fn new(runs: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        let periods = runs.first().ok_or(MetricsError::EmptyPanel)?.len();
        if runs.iter().any(|r| r.len() != periods) {
            return Err(MetricsError::Ragged);
        }
        Ok(Self { runs, periods })
    }

    pub fn runs(&self) -> usize {
        self.runs.len()
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn run(&self, r: usize) -> &[f64] {
        &self.runs[r]
    }

    /// Actions of all runs in period `t` (1-based).
    pub fn period(&self, t: usize) -> Result<impl Iterator<Item = f64> + '_, MetricsError> {
        if t == 0 || t > self.periods {
            return Err(MetricsError::PeriodOutOfRange {
                t,
                periods: self.periods,
            });
        }
        Ok(self.runs.iter().map(move |r| r[t - 1]))
    }
}

fn check_benchmark(a_star: f64) -> Result<(), MetricsError> {
    if a_star > 0.0 && a_star.is_finite() {
        Ok(())
    } else {
        Err(MetricsError::NonPositiveBenchmark(a_star))
    }
}

/// ã_t = (1/R)·Σ_r a_{t,r}/a*.
pub fn mean_normalized_action(panel: &ActionPanel, t: usize, a_star: f64) -> Result<f64, MetricsError> {
    check_benchmark(a_star)?;
    let sum: f64 = panel.period(t)?.map(|a| a / a_star).sum();
    Ok(sum / panel.runs() as f64)
}

/// d_t = Σ_r (1 − a_{t,r}/a*)².
pub fn squared_distance(panel: &ActionPanel, t: usize, a_star: f64) -> Result<f64, MetricsError> {
    check_benchmark(a_star)?;
    Ok(panel.period(t)?.map(|a| (1.0 - a / a_star).powi(2)).sum())
}

fn excess_observations<'a>(panel: &'a ActionPanel, a_star: f64) -> impl Iterator<Item = f64> + 'a {
    panel
        .runs
        .iter()
        .flat_map(|r| r.iter().skip(1).copied())
        .filter(move |&a| a > a_star)
}

/// Share of observations in periods 2..=T with a_{t,r} > a*.
pub fn excess_probability(panel: &ActionPanel, a_star: f64) -> Result<f64, MetricsError> {
    check_benchmark(a_star)?;
    if panel.periods() < 2 {
        return Err(MetricsError::PeriodOutOfRange {
            t: 2,
            periods: panel.periods(),
        });
    }
    let n = excess_observations(panel, a_star).count();
    Ok(n as f64 / (panel.runs() * (panel.periods() - 1)) as f64)
}

/// Mean of a/a* − 1 over the excess observations; `None` when there are none.
pub fn average_excess(panel: &ActionPanel, a_star: f64) -> Result<Option<f64>, MetricsError> {
    check_benchmark(a_star)?;
    if panel.periods() < 2 {
        return Err(MetricsError::PeriodOutOfRange {
            t: 2,
            periods: panel.periods(),
        });
    }
    let (n, sum) = excess_observations(panel, a_star).fold((0usize, 0.0), |(n, s), a| (n + 1, s + (a / a_star - 1.0)));
    Ok((n > 0).then(|| sum / n as f64))
}

/// Half-width `z_{1−α/2}·s/√n` of the normal-approximation confidence interval.
pub fn confidence_interval(values: &[f64], alpha: f64) -> Result<f64, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewValues(values.len()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::InvalidAlpha(alpha));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    Ok(z * var.sqrt() / n.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario_id: String,
    pub runs: usize,
    pub periods: usize,
    /// ã at the final period.
    pub mean_normalized_action: f64,
    pub ci99_halfwidth: f64,
    pub distance_series: Vec<f64>,
    pub mean_normalized_series: Vec<f64>,
    pub excess_probability: f64,
    pub average_excess: Option<f64>,
}

pub fn summarize(scenario_id: &str, panel: &ActionPanel, a_star: f64) -> Result<ScenarioSummary, MetricsError> {
    check_benchmark(a_star)?;
    let periods = panel.periods();
    let last: Vec<f64> = panel.period(periods)?.map(|a| a / a_star).collect();
    let ci = if last.len() >= 2 {
        confidence_interval(&last, 0.01)?
    } else {
        f64::NAN
    };
    let distance_series = (1..=periods)
        .map(|t| squared_distance(panel, t, a_star))
        .collect::<Result<Vec<_>, _>>()?;
    let mean_normalized_series = (1..=periods)
        .map(|t| mean_normalized_action(panel, t, a_star))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScenarioSummary {
        scenario_id: scenario_id.to_string(),
        runs: panel.runs(),
        periods,
        mean_normalized_action: mean_normalized_series[periods - 1],
        ci99_halfwidth: ci,
        distance_series,
        mean_normalized_series,
        excess_probability: excess_probability(panel, a_star)?,
        average_excess: average_excess(panel, a_star)?,
    })
}
