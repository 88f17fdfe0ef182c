//! TOML experiment configuration.
//!
//! Keys follow the model's parameter names. The four grid axes accept a single
//! value or an array; anything outside the experiment grid is rejected unless
//! `allow_offgrid = true`.

use std::fs;
use std::ops::Range;
use std::path::Path;

use hidden_action_core::beliefs::MemoryCapacity;
use hidden_action_core::benchmark::PremiumGrid;
use hidden_action_core::decision::{CandidatePremium, DegenerateMemory, PremiumResolution};
use hidden_action_core::engine::{
    parse_fraction, scenario_grid, GridFilter, ScenarioConfig, SearchInformation, DELTA_GRID, LOCAL_FRACTION_GRID,
    MEMORY_GRID, SIGMA_FRACTION_GRID,
};
use hidden_action_core::model::ActorParams;
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{origin}:{line}: {message}")]
    AtLine {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("{origin}: {message}")]
    General { origin: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NumOrText {
    Num(f64),
    Text(String),
}

impl NumOrText {
    fn describe(&self) -> String {
        match self {
            NumOrText::Num(v) => v.to_string(),
            NumOrText::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    delta: Option<Spanned<OneOrMany<f64>>>,
    m: Option<Spanned<OneOrMany<NumOrText>>>,
    lambda_frac: Option<Spanned<OneOrMany<NumOrText>>>,
    sigma_frac: Option<Spanned<OneOrMany<f64>>>,
    rho: Option<Spanned<f64>>,
    eta: Option<Spanned<f64>>,
    reservation_utility: Option<Spanned<f64>>,
    mu: Option<Spanned<f64>>,
    #[serde(rename = "T")]
    periods: Option<Spanned<i64>>,
    #[serde(rename = "R")]
    runs: Option<Spanned<i64>>,
    master_seed: Option<Spanned<i64>>,
    eq14_literal: Option<bool>,
    candidate_premium: Option<Spanned<String>>,
    candidate_count: Option<Spanned<i64>>,
    premium_resolution: Option<Spanned<String>>,
    premium_step: Option<Spanned<f64>>,
    degenerate_memory: Option<Spanned<String>>,
    search_information: Option<Spanned<String>>,
    search_at_final: Option<bool>,
    allow_offgrid: Option<bool>,
}

/// Shared settings plus the axes of the scenario grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub base: ScenarioConfig,
    pub delta: Vec<f64>,
    pub memory: Vec<MemoryCapacity>,
    pub local_fraction: Vec<f64>,
    pub sigma_fraction: Vec<f64>,
    pub allow_offgrid: bool,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            base: ScenarioConfig::default(),
            delta: DELTA_GRID.to_vec(),
            memory: MEMORY_GRID.to_vec(),
            local_fraction: LOCAL_FRACTION_GRID.to_vec(),
            sigma_fraction: SIGMA_FRACTION_GRID.to_vec(),
            allow_offgrid: false,
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= GRID_TOL
}

impl Experiment {
    /// Scenarios in canonical order, narrowed by `filter`. Filter values must
    /// lie on the configured axes.
    pub fn scenarios(&self, filter: &GridFilter) -> Result<Vec<ScenarioConfig>, ConfigError> {
        fn narrow<T: Copy>(
            axis: &[T],
            keep: &Option<Vec<T>>,
            same: impl Fn(T, T) -> bool,
            key: &str,
        ) -> Result<Vec<T>, ConfigError> {
            let Some(keep) = keep else {
                return Ok(axis.to_vec());
            };
            if let Some(_missing) = keep.iter().find(|k| !axis.iter().any(|a| same(**k, *a))) {
                return Err(ConfigError::General {
                    origin: "--filter".into(),
                    message: format!("`{key}` value is not among the configured values"),
                });
            }
            Ok(axis
                .iter()
                .copied()
                .filter(|a| keep.iter().any(|k| same(*k, *a)))
                .collect())
        }
        let axes = GridFilter {
            delta: Some(narrow(&self.delta, &filter.delta, close, "delta")?),
            memory: Some(narrow(&self.memory, &filter.memory, |a, b| a == b, "m")?),
            local_fraction: Some(narrow(
                &self.local_fraction,
                &filter.local_fraction,
                close,
                "lambda_frac",
            )?),
            sigma_fraction: Some(narrow(
                &self.sigma_fraction,
                &filter.sigma_fraction,
                close,
                "sigma_frac",
            )?),
        };
        Ok(scenario_grid(&self.base, &axes))
    }
}

pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| ConfigError::General {
        origin: origin.clone(),
        message: e.to_string(),
    })?;
    parse(&text, &origin)
}

struct Ctx<'a> {
    text: &'a str,
    origin: &'a str,
}

impl Ctx<'_> {
    fn line(&self, span: &Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err(&self, span: Option<Range<usize>>, message: impl Into<String>) -> ConfigError {
        match span {
            Some(span) => ConfigError::AtLine {
                origin: self.origin.into(),
                line: self.line(&span),
                message: message.into(),
            },
            None => ConfigError::General {
                origin: self.origin.into(),
                message: message.into(),
            },
        }
    }
}

fn on_grid(values: &[f64], grid: &[f64]) -> bool {
    values.iter().all(|v| grid.iter().any(|g| close(*v, *g)))
}

fn distinct<T: PartialEq + Copy>(values: &[T]) -> bool {
    values.iter().enumerate().all(|(i, v)| !values[..i].contains(v))
}

/// Parses configuration text; `origin` names it in error messages.
pub fn parse(text: &str, origin: &str) -> Result<Experiment, ConfigError> {
    let cx = Ctx { text, origin };
    let raw: RawConfig = toml::from_str(text).map_err(|e| cx.err(e.span(), e.message().to_string()))?;
    let allow_offgrid = raw.allow_offgrid.unwrap_or(false);
    let mut exp = Experiment {
        allow_offgrid,
        ..Experiment::default()
    };

    if let Some(v) = raw.delta {
        let span = v.span();
        let values = v.into_inner().into_vec();
        if values.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(cx.err(Some(span), "delta must lie in [0, 1]"));
        }
        if !allow_offgrid && !on_grid(&values, &DELTA_GRID) {
            return Err(cx.err(
                Some(span),
                "delta outside the experiment grid {.25, .50, .75} (set allow_offgrid = true to override)",
            ));
        }
        exp.delta = values;
    }

    if let Some(v) = raw.m {
        let span = v.span();
        let mut values = Vec::new();
        for item in v.into_inner().into_vec() {
            let text = match &item {
                NumOrText::Num(n) if n.fract() == 0.0 && *n >= 1.0 => format!("{}", *n as u64),
                other => other.describe(),
            };
            let m: MemoryCapacity = text.parse().map_err(|_| {
                cx.err(
                    Some(span.clone()),
                    format!("m = {text}: expected a positive integer or \"inf\""),
                )
            })?;
            values.push(m);
        }
        if !allow_offgrid && !values.iter().all(|m| MEMORY_GRID.contains(m)) {
            return Err(cx.err(
                Some(span),
                "m outside the experiment grid {1, 3, inf} (set allow_offgrid = true to override)",
            ));
        }
        exp.memory = values;
    }

    if let Some(v) = raw.lambda_frac {
        let span = v.span();
        let mut values = Vec::new();
        for item in v.into_inner().into_vec() {
            let f = match &item {
                NumOrText::Num(n) => Some(*n),
                NumOrText::Text(s) => parse_fraction(s),
            }
            .filter(|f| *f > 0.0 && *f <= 1.0)
            .ok_or_else(|| {
                cx.err(
                    Some(span.clone()),
                    format!("lambda_frac = {}: expected a fraction in (0, 1]", item.describe()),
                )
            })?;
            values.push(f);
        }
        if !allow_offgrid && !on_grid(&values, &LOCAL_FRACTION_GRID) {
            return Err(cx.err(
                Some(span),
                "lambda_frac outside the experiment grid {1/3, 1/5, 1/10} (set allow_offgrid = true to override)",
            ));
        }
        exp.local_fraction = values;
    }

    if let Some(v) = raw.sigma_frac {
        let span = v.span();
        let values = v.into_inner().into_vec();
        if values.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(cx.err(Some(span), "sigma_frac must be positive"));
        }
        if !allow_offgrid && !on_grid(&values, &SIGMA_FRACTION_GRID) {
            return Err(cx.err(
                Some(span),
                "sigma_frac outside the experiment grid {.05, .25, .45, .65} (set allow_offgrid = true to override)",
            ));
        }
        exp.sigma_fraction = values;
    }

    for (name, len, distinct) in [
        ("delta", exp.delta.len(), distinct(&exp.delta)),
        ("m", exp.memory.len(), distinct(&exp.memory)),
        ("lambda_frac", exp.local_fraction.len(), distinct(&exp.local_fraction)),
        ("sigma_frac", exp.sigma_fraction.len(), distinct(&exp.sigma_fraction)),
    ] {
        if len == 0 {
            return Err(cx.err(None, format!("{name} is empty")));
        }
        if !distinct {
            return Err(cx.err(None, format!("{name} lists a value twice")));
        }
    }

    let base = &mut exp.base;
    let defaults = ActorParams::standard();
    let pick = |v: &Option<Spanned<f64>>, d: f64| v.as_ref().map_or(d, |s| *s.get_ref());
    let rho = pick(&raw.rho, defaults.rho());
    let eta = pick(&raw.eta, defaults.eta());
    let u_bar = pick(&raw.reservation_utility, defaults.reservation_utility());
    base.actor = ActorParams::new(rho, eta, u_bar).map_err(|e| {
        let span = [&raw.rho, &raw.eta, &raw.reservation_utility]
            .into_iter()
            .flatten()
            .next()
            .map(|s| s.span());
        cx.err(span, e.to_string())
    })?;
    if let Some(mu) = &raw.mu {
        if !mu.get_ref().is_finite() {
            return Err(cx.err(Some(mu.span()), "mu must be finite"));
        }
        base.mu = *mu.get_ref();
    }

    let positive = |v: &Option<Spanned<i64>>, name: &str| -> Result<Option<usize>, ConfigError> {
        match v {
            None => Ok(None),
            Some(s) if *s.get_ref() >= 1 => Ok(Some(*s.get_ref() as usize)),
            Some(s) => Err(cx.err(Some(s.span()), format!("{name} must be at least 1"))),
        }
    };
    if let Some(t) = positive(&raw.periods, "T")? {
        base.periods = t;
    }
    if let Some(r) = positive(&raw.runs, "R")? {
        base.runs = r;
    }
    if let Some(c) = positive(&raw.candidate_count, "candidate_count")? {
        base.options.candidate_count = c;
    }
    if let Some(seed) = &raw.master_seed {
        if *seed.get_ref() < 0 {
            return Err(cx.err(Some(seed.span()), "master_seed must be non-negative"));
        }
        base.master_seed = *seed.get_ref() as u64;
    }
    if let Some(b) = raw.eq14_literal {
        base.options.eq14_literal = b;
    }
    if let Some(b) = raw.search_at_final {
        base.search_at_final = b;
    }

    let choice = |v: &Spanned<String>, options: &[&str]| -> Result<usize, ConfigError> {
        options.iter().position(|o| *o == v.get_ref().as_str()).ok_or_else(|| {
            cx.err(
                Some(v.span()),
                format!(
                    "unknown value `{}` (expected one of: {})",
                    v.get_ref(),
                    options.join(", ")
                ),
            )
        })
    };
    if let Some(v) = &raw.candidate_premium {
        base.options.candidate_premium =
            [CandidatePremium::Reoptimize, CandidatePremium::Fixed][choice(v, &["reoptimize", "fixed"])?];
    }
    if let Some(v) = &raw.degenerate_memory {
        base.options.degenerate_memory = [
            DegenerateMemory::Local,
            DegenerateMemory::Bernoulli,
            DegenerateMemory::PointMass,
        ][choice(v, &["local", "bernoulli", "point_mass"])?];
    }
    if let Some(v) = &raw.search_information {
        base.search_information = [
            SearchInformation::Current,
            SearchInformation::Lagged,
            SearchInformation::Mixed,
        ][choice(v, &["current", "lagged", "mixed"])?];
    }
    let grid = match &raw.premium_step {
        Some(step) => PremiumGrid::new(*step.get_ref()).map_err(|e| cx.err(Some(step.span()), e.to_string()))?,
        None => PremiumGrid::default(),
    };
    base.options.space_grid = grid;
    base.options.premium_resolution = match &raw.premium_resolution {
        Some(v) if choice(v, &["grid", "continuous"])? == 1 => PremiumResolution::Continuous,
        _ => PremiumResolution::Grid(grid),
    };
    Ok(exp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_line(text: &str) -> (Option<usize>, String) {
        match parse(text, "c.toml").unwrap_err() {
            ConfigError::AtLine { line, message, .. } => (Some(line), message),
            ConfigError::General { message, .. } => (None, message),
        }
    }

    #[test]
    fn empty_file_gives_full_grid() {
        let exp = parse("", "c.toml").unwrap();
        assert_eq!(exp.scenarios(&GridFilter::default()).unwrap().len(), 108);
        assert_eq!(exp.base, ScenarioConfig::default());
    }

    #[test]
    fn offgrid_delta_needs_override() {
        let (line, msg) = err_line("R = 5\ndelta = 0.9\n");
        assert_eq!(line, Some(2));
        assert!(msg.contains("{.25, .50, .75}"), "{msg}");
        let exp = parse("delta = 0.9\nallow_offgrid = true\n", "c.toml").unwrap();
        assert_eq!(exp.delta, vec![0.9]);
        assert!(parse("delta = 1.5\nallow_offgrid = true\n", "c.toml").is_err());
    }

    #[test]
    fn desk_scale_runs_accepted() {
        assert_eq!(parse("R = 50", "c.toml").unwrap().base.runs, 50);
        assert_eq!(err_line("R = 0").0, Some(1));
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let (line, msg) = err_line("delta = 0.25\n\nfoo = 1\n");
        assert_eq!(line, Some(3));
        assert!(msg.contains("foo"), "{msg}");
    }

    #[test]
    fn syntax_error_has_line() {
        assert_eq!(err_line("T = 20\nR = = 3\n").0, Some(2));
    }

    #[test]
    fn axis_forms() {
        let exp = parse(
            "delta = [0.25, 0.75]\nm = [1, \"inf\"]\nlambda_frac = [\"1/5\", 0.1]\nsigma_frac = 0.65\n",
            "c.toml",
        )
        .unwrap();
        assert_eq!(exp.delta, vec![0.25, 0.75]);
        assert_eq!(exp.memory, vec![MemoryCapacity::Finite(1), MemoryCapacity::Unbounded]);
        assert_eq!(exp.local_fraction, vec![0.2, 0.1]);
        assert_eq!(exp.scenarios(&GridFilter::default()).unwrap().len(), 8);
        assert!(err_line("m = 2").1.contains("{1, 3, inf}"));
        assert!(err_line("m = \"many\"").1.contains("positive integer"));
        assert!(err_line("lambda_frac = \"1/0\"").1.contains("fraction"));
        assert!(err_line("delta = [0.25, 0.25]").1.contains("twice"));
    }

    #[test]
    fn switches() {
        let exp = parse(
            "eq14_literal = true\ncandidate_premium = \"fixed\"\ndegenerate_memory = \"bernoulli\"\n\
             premium_resolution = \"continuous\"\nsearch_information = \"lagged\"\nmaster_seed = 9\nT = 5\n",
            "c.toml",
        )
        .unwrap();
        let o = exp.base.options;
        assert!(o.eq14_literal);
        assert_eq!(o.candidate_premium, CandidatePremium::Fixed);
        assert_eq!(o.degenerate_memory, DegenerateMemory::Bernoulli);
        assert_eq!(o.premium_resolution, PremiumResolution::Continuous);
        assert_eq!(exp.base.search_information, SearchInformation::Lagged);
        assert_eq!((exp.base.master_seed, exp.base.periods), (9, 5));
        let (line, msg) = err_line("T = 2\ncandidate_premium = \"best\"");
        assert_eq!(line, Some(2));
        assert!(msg.contains("reoptimize"));
    }

    #[test]
    fn actor_range_errors() {
        assert_eq!(err_line("\neta = -1").0, Some(2));
        assert!(parse("rho = 10\neta = 1.0\nreservation_utility = -2\n", "c.toml").is_ok());
    }

    #[test]
    fn filter_narrows_configured_axes() {
        let exp = parse("sigma_frac = [0.05, 0.25]", "c.toml").unwrap();
        let mut f = GridFilter::default();
        f.restrict("delta", "0.5").unwrap();
        f.restrict("m", "inf").unwrap();
        assert_eq!(exp.scenarios(&f).unwrap().len(), 6);
        let mut f = GridFilter::default();
        f.restrict("sigma_frac", "0.65").unwrap();
        assert!(exp.scenarios(&f).is_err());
    }
}
