//! Period loop, run and scenario orchestration, and the per-run random streams.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::beliefs::{estimate_theta, predicted_action_space, BeliefState, MemoryCapacity, Role};
use crate::benchmark::{second_best_oracle_on, BenchmarkError, BenchmarkSolution};
use crate::decision::{
    agent_respond, design_contract, principal_action_space, search_step, select_mode, ContractStatus, DecisionError,
    DecisionOptions, SearchContext, SearchMode, SearchParams,
};
use crate::metrics::ActionPanel;
use crate::model::{agent_utility, principal_utility, ActorParams, ModelError};

pub const DELTA_GRID: [f64; 3] = [0.25, 0.5, 0.75];
pub const MEMORY_GRID: [MemoryCapacity; 3] = [
    MemoryCapacity::Finite(1),
    MemoryCapacity::Finite(3),
    MemoryCapacity::Unbounded,
];
pub const LOCAL_FRACTION_GRID: [f64; 3] = [1.0 / 3.0, 1.0 / 5.0, 1.0 / 10.0];
pub const SIGMA_FRACTION_GRID: [f64; 4] = [0.05, 0.25, 0.45, 0.65];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error("unknown scenario key `{0}` (expected delta, m, lambda_frac or sigma_frac)")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("periods and runs must be positive")]
    EmptyExperiment,
}

/// One cell of the experiment grid plus the constants shared by all cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub delta: f64,
    pub memory: MemoryCapacity,
    /// 1/λ, the share of the action space covered by local search.
    pub local_fraction: f64,
    /// σ as a multiple of x*.
    pub sigma_fraction: f64,
    pub actor: ActorParams,
    /// Mean of the environment.
    pub mu: f64,
    pub periods: usize,
    pub runs: usize,
    pub master_seed: u64,
    pub options: DecisionOptions,
    /// Run the search after the final period too; its result is discarded.
    pub search_at_final: bool,
    pub search_information: SearchInformation,
}

/// Which memory the principal searches with after a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SearchInformation {
    /// Memory including the estimate just made.
    #[default]
    Current,
    /// Memory as it stood when the period began; the mode compares the
    /// previous period's estimate.
    Lagged,
    /// Threshold from the memory as it stood when the period began, compared
    /// with the estimate just made; the space uses the updated memory.
    Mixed,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            delta: 0.5,
            memory: MemoryCapacity::Unbounded,
            local_fraction: 0.2,
            sigma_fraction: 0.05,
            actor: ActorParams::standard(),
            mu: 0.0,
            periods: 20,
            runs: 700,
            master_seed: 0,
            options: DecisionOptions::default(),
            search_at_final: true,
            search_information: SearchInformation::Current,
        }
    }
}

/// `1/k` when the fraction is the reciprocal of a whole number, else the decimal.
pub fn format_local_fraction(f: f64) -> String {
    let k = (1.0 / f).round();
    if k >= 1.0 && (1.0 / k - f).abs() < 1e-12 {
        format!("1/{k}")
    } else {
        format!("{f}")
    }
}

/// Parses `1/5`, `0.2` and similar.
pub fn parse_fraction(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().ok()?;
            let d: f64 = d.trim().parse().ok()?;
            (d != 0.0).then(|| n / d)
        }
        None => s.parse().ok(),
    }
}

/// Identifies a cell by its four grid coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScenarioId(String);

impl ScenarioId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl ScenarioConfig {
    pub fn id(&self) -> ScenarioId {
        ScenarioId(format!(
            "d{}-m{}-l{}-s{}",
            self.delta,
            self.memory,
            format_local_fraction(self.local_fraction),
            self.sigma_fraction
        ))
    }

    pub fn search_params(&self) -> Result<SearchParams, EngineError> {
        Ok(SearchParams::new(self.delta, self.local_fraction)?)
    }

    pub fn benchmark(&self) -> Result<BenchmarkSolution, EngineError> {
        Ok(second_best_oracle_on(&self.actor, self.mu, &self.options.space_grid)?)
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.periods == 0 || self.runs == 0 {
            return Err(EngineError::EmptyExperiment);
        }
        if !(self.sigma_fraction > 0.0 && self.sigma_fraction.is_finite()) {
            return Err(EngineError::InvalidValue {
                key: "sigma_frac".into(),
                value: self.sigma_fraction.to_string(),
                reason: "must be positive".into(),
            });
        }
        if self.options.candidate_count == 0 {
            return Err(DecisionError::NoCandidates.into());
        }
        self.search_params()?;
        Ok(())
    }
}

/// 32-byte key of a scenario's random streams.
pub fn scenario_seed(master_seed: u64, id: &ScenarioId) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(id.as_str().as_bytes());
    h.finalize().into()
}

/// Independent generator for run `r` of a scenario.
pub fn run_rng(master_seed: u64, id: &ScenarioId, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(scenario_seed(master_seed, id));
    rng.set_stream(r as u64);
    rng
}

/// Everything realized in one period of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub t: usize,
    pub target_action: f64,
    pub premium: f64,
    pub contract_status: ContractStatus,
    pub accepted: bool,
    pub action: f64,
    pub theta: f64,
    pub outcome: f64,
    pub share: f64,
    pub estimate: f64,
    /// Search performed after the period; `None` when skipped.
    pub search_mode: Option<SearchMode>,
    pub u_p: f64,
    pub u_a: f64,
    pub principal_prediction: f64,
    pub agent_prediction: f64,
    /// Upper bound of the agent's predicted space under this period's premium.
    pub agent_space_upper: f64,
    /// Principal's space used for the search after the period.
    pub search_lower: f64,
    pub search_upper: f64,
    pub principal_memory_len: usize,
    pub agent_memory_len: usize,
    /// Resets so far in this run, including this period's search.
    pub resets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub r: usize,
    pub periods: Vec<PeriodRecord>,
}

/// Mutable state carried from one period to the next.
#[derive(Debug, Clone)]
pub struct RunState {
    pub principal: BeliefState,
    pub agent: BeliefState,
    pub target: f64,
    pub resets: usize,
    pub t: usize,
}

/// Settings resolved once per scenario.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub config: ScenarioConfig,
    pub id: ScenarioId,
    pub search: SearchParams,
    pub benchmark: BenchmarkSolution,
    pub sigma: f64,
    normal: Normal<f64>,
}

impl ResolvedScenario {
    pub fn new(config: ScenarioConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let benchmark = config.benchmark()?;
        let sigma = config.sigma_fraction * benchmark.x_star;
        let normal = Normal::new(config.mu, sigma).map_err(|_| ModelError::InvalidSigma(sigma))?;
        Ok(Self {
            search: config.search_params()?,
            id: config.id(),
            benchmark,
            sigma,
            normal,
            config,
        })
    }
}

/// Fresh beliefs with the initial target drawn uniformly from the principal's
/// space under the prior prediction.
pub fn initial_state<R: Rng + ?Sized>(scenario: &ResolvedScenario, rng: &mut R) -> RunState {
    let cfg = &scenario.config;
    let principal = BeliefState::new(Role::Principal, cfg.memory);
    let agent = BeliefState::new(Role::Agent, cfg.memory);
    let u = rng.random::<f64>();
    let target = match principal_action_space(principal.predict(), &cfg.actor, &cfg.options.space_grid) {
        Ok((space, _)) => (space.lower + u * space.width()).clamp(space.lower, space.upper),
        Err(_) => 0.0,
    };
    RunState {
        principal,
        agent,
        target,
        resets: 0,
        t: 1,
    }
}

/// One period: contract, acceptance and action, environment, outcome and
/// learning, then the principal's search for the next target.
pub fn run_period<R: Rng + ?Sized>(state: &mut RunState, scenario: &ResolvedScenario, rng: &mut R) -> PeriodRecord {
    let cfg = &scenario.config;
    let params = &cfg.actor;
    let rho = params.rho();
    let t = state.t;

    let e_p = state.principal.predict();
    let e_a = state.agent.predict();
    let target = state.target;
    let designed = design_contract(target, e_p, params, &cfg.options.premium_resolution);
    let phi = designed.contract.premium();
    let response = agent_respond(&designed.contract, e_a, params);
    let agent_space_upper = predicted_action_space(e_a, phi, params, Role::Agent)
        .map(|s| s.upper)
        .unwrap_or(response.action);

    let theta = scenario.normal.sample(rng);
    let (action, share) = if response.accepted {
        let a = response.action;
        (a, phi * (a * rho + theta))
    } else {
        (0.0, 0.0)
    };
    let x = action * rho + theta;
    let u_p = principal_utility(x, share);
    let u_a = if response.accepted {
        agent_utility(share, action, params)
    } else {
        params.reservation_utility()
    };
    let estimate = estimate_theta(x, target, rho);
    let before = match cfg.search_information {
        SearchInformation::Current => None,
        _ => Some(state.principal.clone()),
    };
    state.principal.record(estimate);
    state.agent.record(theta);

    let mut search_mode = None;
    let (mut search_lower, mut search_upper) = (f64::NAN, f64::NAN);
    if t < cfg.periods || cfg.search_at_final {
        let (memory, prediction, last) = match (&before, cfg.search_information) {
            (Some(b), SearchInformation::Lagged) => (b, b.predict(), b.latest().unwrap_or(0.0)),
            (Some(b), _) => (b, state.principal.predict(), estimate),
            _ => (&state.principal, state.principal.predict(), estimate),
        };
        let mode = select_mode(last, memory, scenario.search.delta(), &cfg.options, rng);
        if let Ok((space, _)) = principal_action_space(prediction, params, &cfg.options.space_grid) {
            let ctx = SearchContext {
                params,
                search: &scenario.search,
                options: &cfg.options,
                prediction,
                incumbent_premium: phi,
            };
            let out = search_step(&space, target, mode, &ctx, rng);
            if out.mode == SearchMode::Reset {
                state.resets += 1;
            }
            search_mode = Some(out.mode);
            search_lower = space.lower;
            search_upper = space.upper;
            state.target = out.next_target;
        }
    }
    state.t += 1;

    PeriodRecord {
        t,
        target_action: target,
        premium: phi,
        contract_status: designed.status,
        accepted: response.accepted,
        action,
        theta,
        outcome: x,
        share,
        estimate,
        search_mode,
        u_p,
        u_a,
        principal_prediction: e_p,
        agent_prediction: e_a,
        agent_space_upper,
        search_lower,
        search_upper,
        principal_memory_len: state.principal.len(),
        agent_memory_len: state.agent.len(),
        resets: state.resets,
    }
}

pub fn run_run(scenario: &ResolvedScenario, r: usize) -> RunRecord {
    let mut rng = run_rng(scenario.config.master_seed, &scenario.id, r);
    let mut state = initial_state(scenario, &mut rng);
    let periods = (0..scenario.config.periods)
        .map(|_| run_period(&mut state, scenario, &mut rng))
        .collect();
    RunRecord { r, periods }
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario: ResolvedScenario,
    pub runs: Vec<RunRecord>,
}

impl ScenarioResult {
    pub fn action_panel(&self) -> ActionPanel {
        ActionPanel::new(
            self.runs
                .iter()
                .map(|run| run.periods.iter().map(|p| p.action).collect())
                .collect(),
        )
        .expect("runs share the same length")
    }
}

/// All runs of a scenario, in parallel on the current rayon pool, ordered by run index.
pub fn run_scenario(config: ScenarioConfig) -> Result<ScenarioResult, EngineError> {
    let scenario = ResolvedScenario::new(config)?;
    let runs = (0..scenario.config.runs)
        .into_par_iter()
        .map(|r| run_run(&scenario, r))
        .collect();
    Ok(ScenarioResult { scenario, runs })
}

fn invalid(key: &str, value: &str, reason: &str) -> EngineError {
    EngineError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

/// Restrictions of the grid axes; `None` keeps the full axis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridFilter {
    pub delta: Option<Vec<f64>>,
    pub memory: Option<Vec<MemoryCapacity>>,
    pub local_fraction: Option<Vec<f64>>,
    pub sigma_fraction: Option<Vec<f64>>,
}

impl GridFilter {
    /// Restrict one axis by a `key=value` pair.
    pub fn restrict(&mut self, key: &str, value: &str) -> Result<(), EngineError> {
        let float = |reason: &str| value.trim().parse::<f64>().map_err(|_| invalid(key, value, reason));
        match key.trim() {
            "delta" => self.delta.get_or_insert_with(Vec::new).push(float("not a number")?),
            "m" => self.memory.get_or_insert_with(Vec::new).push(
                value
                    .parse()
                    .map_err(|e: crate::beliefs::ParseMemoryError| invalid(key, value, &e.0))?,
            ),
            "lambda_frac" => self
                .local_fraction
                .get_or_insert_with(Vec::new)
                .push(parse_fraction(value).ok_or_else(|| invalid(key, value, "not a fraction"))?),
            "sigma_frac" => self
                .sigma_fraction
                .get_or_insert_with(Vec::new)
                .push(float("not a number")?),
            other => return Err(EngineError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

/// The Cartesian product of the four axes (δ, m, 1/λ, σ-fraction), in that
/// nesting order, with the shared settings of `base`.
pub fn scenario_grid(base: &ScenarioConfig, filter: &GridFilter) -> Vec<ScenarioConfig> {
    let deltas = filter.delta.clone().unwrap_or_else(|| DELTA_GRID.to_vec());
    let memories = filter.memory.clone().unwrap_or_else(|| MEMORY_GRID.to_vec());
    let locals = filter
        .local_fraction
        .clone()
        .unwrap_or_else(|| LOCAL_FRACTION_GRID.to_vec());
    let sigmas = filter
        .sigma_fraction
        .clone()
        .unwrap_or_else(|| SIGMA_FRACTION_GRID.to_vec());
    let mut out = Vec::with_capacity(deltas.len() * memories.len() * locals.len() * sigmas.len());
    for &delta in &deltas {
        for &memory in &memories {
            for &local_fraction in &locals {
                for &sigma_fraction in &sigmas {
                    out.push(ScenarioConfig {
                        delta,
                        memory,
                        local_fraction,
                        sigma_fraction,
                        ..base.clone()
                    });
                }
            }
        }
    }
    out
}
