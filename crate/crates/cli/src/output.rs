//! CSV and JSON artifacts.
//!
//! Every number is written at six significant digits. Summaries and distance
//! series are computed from the values as written, so recomputing them from a
//! re-read `panel.csv` reproduces the files exactly.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use hidden_action_core::engine::{format_local_fraction, ScenarioConfig, ScenarioResult};
use hidden_action_core::metrics::{summarize, ActionPanel, MetricsError, ScenarioSummary};
use serde::Serialize;
use thiserror::Error;

pub const PANEL_FILE: &str = "panel.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SERIES_FILE: &str = "distance_series.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FIXTURE_FILE: &str = "benchmark.json";

pub const PANEL_HEADER: [&str; 17] = [
    "scenario_id",
    "delta",
    "m",
    "lambda_frac",
    "sigma_frac",
    "r",
    "t",
    "phi",
    "target_action",
    "accepted",
    "action",
    "theta",
    "outcome",
    "estimate",
    "mode",
    "u_p",
    "u_a",
];

pub const SUMMARY_HEADER: [&str; 12] = [
    "scenario_id",
    "delta",
    "m",
    "lambda_frac",
    "sigma_frac",
    "runs",
    "periods",
    "a_star",
    "a_tilde",
    "ci99",
    "p_excess",
    "avg_excess",
];

pub const SERIES_HEADER: [&str; 3] = ["scenario_id", "t", "d_t"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

/// Rounds to six significant digits.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let q: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

/// Shortest text for `quantize(x)`.
pub fn format_number(x: f64) -> String {
    let q = quantize(x);
    if q != 0.0 && q.is_finite() && (q.abs() < 1e-4 || q.abs() >= 1e15) {
        format!("{q:e}")
    } else {
        format!("{q}")
    }
}

/// Which files `emit` produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EmitFlags {
    pub panel: bool,
    pub summary: bool,
    pub series: bool,
    pub fixtures: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            panel: true,
            summary: true,
            series: true,
            fixtures: false,
        }
    }
}

impl EmitFlags {
    pub fn parse(list: &str) -> Result<Self, String> {
        let mut flags = EmitFlags {
            panel: false,
            summary: false,
            series: false,
            fixtures: false,
        };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "panel" => flags.panel = true,
                "summary" => flags.summary = true,
                "series" => flags.series = true,
                "fixtures" => flags.fixtures = true,
                "all" => {
                    flags = EmitFlags {
                        panel: true,
                        summary: true,
                        series: true,
                        fixtures: true,
                    }
                }
                other => {
                    return Err(format!(
                        "unknown emit target `{other}` (panel, summary, series, fixtures, all)"
                    ))
                }
            }
        }
        Ok(flags)
    }

    pub fn names(&self) -> Vec<&'static str> {
        [
            (self.panel, "panel"),
            (self.summary, "summary"),
            (self.series, "series"),
            (self.fixtures, "fixtures"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect()
    }
}

/// Provenance record written next to the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub config_path: Option<String>,
    pub output_dir: String,
    pub master_seed: u64,
    pub runs: usize,
    pub periods: usize,
    pub emit: Vec<&'static str>,
    pub filters: Vec<String>,
    pub partial: bool,
    pub scenarios: Vec<String>,
    pub failed: Vec<FailedScenario>,
    /// Shared settings; its grid coordinates are replaced per scenario.
    pub base: ScenarioConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedScenario {
    pub scenario_id: String,
    pub error: String,
}

fn scenario_columns(cfg: &ScenarioConfig) -> [String; 4] {
    [
        format_number(cfg.delta),
        cfg.memory.to_string(),
        format_local_fraction(cfg.local_fraction),
        format_number(cfg.sigma_fraction),
    ]
}

struct Sink {
    tmp: PathBuf,
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl Sink {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self, OutputError> {
        let path = dir.join(name);
        let tmp = dir.join(format!(".{name}.partial"));
        let file = File::create(&tmp).map_err(|source| OutputError::Io {
            path: tmp.clone(),
            source,
        })?;
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        writer.write_record(header).map_err(|source| OutputError::Csv {
            path: path.clone(),
            source,
        })?;
        Ok(Self { tmp, path, writer })
    }

    fn row<I, T>(&mut self, record: I) -> Result<(), OutputError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer.write_record(record).map_err(|source| OutputError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    fn discard(self) {
        drop(self.writer);
        let _ = fs::remove_file(&self.tmp);
    }

    fn commit(mut self) -> Result<(), OutputError> {
        self.writer.flush().map_err(|source| OutputError::Io {
            path: self.path.clone(),
            source,
        })?;
        drop(self.writer);
        fs::rename(&self.tmp, &self.path).map_err(|source| OutputError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

/// Streams scenario results into the output files. Files appear under their
/// final names only on [`Emitter::finish`].
pub struct Emitter {
    panel: Option<Sink>,
    summary: Option<Sink>,
    series: Option<Sink>,
    summaries: Vec<ScenarioSummary>,
}

impl Emitter {
    pub fn create(dir: &Path, flags: &EmitFlags) -> Result<Self, OutputError> {
        fs::create_dir_all(dir).map_err(|source| OutputError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            panel: flags
                .panel
                .then(|| Sink::create(dir, PANEL_FILE, &PANEL_HEADER))
                .transpose()?,
            summary: flags
                .summary
                .then(|| Sink::create(dir, SUMMARY_FILE, &SUMMARY_HEADER))
                .transpose()?,
            series: flags
                .series
                .then(|| Sink::create(dir, SERIES_FILE, &SERIES_HEADER))
                .transpose()?,
            summaries: Vec::new(),
        })
    }

    pub fn write(&mut self, result: &ScenarioResult) -> Result<&ScenarioSummary, OutputError> {
        let cfg = &result.scenario.config;
        let id = result.scenario.id.to_string();
        let cols = scenario_columns(cfg);
        if let Some(sink) = &mut self.panel {
            for run in &result.runs {
                for p in &run.periods {
                    let r = run.r.to_string();
                    let t = p.t.to_string();
                    let mode = p.search_mode.map_or("", |m| m.as_str());
                    let accepted = if p.accepted { "1" } else { "0" };
                    let nums = [p.premium, p.target_action];
                    let rest = [p.action, p.theta, p.outcome, p.estimate];
                    let tail = [p.u_p, p.u_a];
                    let mut rec: Vec<String> = Vec::with_capacity(PANEL_HEADER.len());
                    rec.push(id.clone());
                    rec.extend(cols.iter().cloned());
                    rec.push(r);
                    rec.push(t);
                    rec.extend(nums.iter().map(|&v| format_number(v)));
                    rec.push(accepted.into());
                    rec.extend(rest.iter().map(|&v| format_number(v)));
                    rec.push(mode.into());
                    rec.extend(tail.iter().map(|&v| format_number(v)));
                    sink.row(&rec)?;
                }
            }
        }
        let actions: Vec<Vec<f64>> = result
            .runs
            .iter()
            .map(|run| run.periods.iter().map(|p| quantize(p.action)).collect())
            .collect();
        let a_star = quantize(result.scenario.benchmark.a_star);
        let summary = summarize(&id, &ActionPanel::new(actions)?, a_star)?;
        if let Some(sink) = &mut self.summary {
            sink.row(summary_record(&summary, &cols, a_star))?;
        }
        if let Some(sink) = &mut self.series {
            for (t, d) in summary.distance_series.iter().enumerate() {
                sink.row([id.clone(), (t + 1).to_string(), format_number(*d)])?;
            }
        }
        self.summaries.push(summary);
        Ok(self.summaries.last().expect("just pushed"))
    }

    pub fn summaries(&self) -> &[ScenarioSummary] {
        &self.summaries
    }

    /// Removes the unfinished files.
    pub fn abort(self) {
        for sink in [self.panel, self.summary, self.series].into_iter().flatten() {
            sink.discard();
        }
    }

    pub fn finish(self) -> Result<Vec<ScenarioSummary>, OutputError> {
        for sink in [self.panel, self.summary, self.series].into_iter().flatten() {
            sink.commit()?;
        }
        Ok(self.summaries)
    }
}

pub fn summary_record(s: &ScenarioSummary, cols: &[String; 4], a_star: f64) -> Vec<String> {
    let mut rec = vec![s.scenario_id.clone()];
    rec.extend(cols.iter().cloned());
    rec.push(s.runs.to_string());
    rec.push(s.periods.to_string());
    rec.push(format_number(a_star));
    rec.push(format_number(s.mean_normalized_action));
    rec.push(format_number(s.ci99_halfwidth));
    rec.push(format_number(s.excess_probability));
    rec.push(s.average_excess.map(format_number).unwrap_or_default());
    rec
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Actions per scenario from a panel file, runs in file order.
pub fn read_panel_actions(path: &Path) -> Result<BTreeMap<String, Vec<Vec<f64>>>, OutputError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let headers = reader
        .headers()
        .map_err(|source| OutputError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| OutputError::Malformed {
                path: path.to_path_buf(),
                message: format!("missing column {name}"),
            })
    };
    let (c_id, c_r, c_action) = (col("scenario_id")?, col("r")?, col("action")?);
    let mut out: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut last: Option<(String, String)> = None;
    for rec in reader.records() {
        let rec = rec.map_err(|source| OutputError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let id = rec[c_id].to_string();
        let r = rec[c_r].to_string();
        let action: f64 = rec[c_action].parse().map_err(|_| OutputError::Malformed {
            path: path.to_path_buf(),
            message: format!("bad action `{}`", &rec[c_action]),
        })?;
        let runs = out.entry(id.clone()).or_default();
        if last.as_ref() != Some(&(id.clone(), r.clone())) {
            runs.push(Vec::new());
            last = Some((id, r));
        }
        runs.last_mut().expect("run started").push(action);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_number(95.8586356728703), "95.8586");
        assert_eq!(format_number(1.917172713457406), "1.91717");
        assert_eq!(format_number(0.02), "0.02");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1234567.0), "1234570");
        assert_eq!(format_number(0.000012345678), "1.23457e-5");
        assert_eq!(format_number(f64::NAN), "NaN");
        assert_eq!(format_number(-2.5), "-2.5");
    }

    #[test]
    fn quantize_is_idempotent() {
        for x in [0.1, 1.0 / 3.0, 95.8586356728703, -1e-7, 123456789.0] {
            let q = quantize(x);
            assert_eq!(quantize(q), q);
            assert_eq!(format_number(x).parse::<f64>().unwrap(), q);
        }
    }

    #[test]
    fn emit_flags() {
        assert_eq!(
            EmitFlags::parse("panel,series").unwrap().names(),
            vec!["panel", "series"]
        );
        assert_eq!(EmitFlags::parse("all").unwrap().names().len(), 4);
        assert!(EmitFlags::parse("plots").is_err());
    }
}
