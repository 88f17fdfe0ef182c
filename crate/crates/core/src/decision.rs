//! The actors' decision rules: contract design by the principal, the agent's
//! acceptance and best response, and the principal's hill-climbing search
//! with an exploration threshold and forced resets.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::beliefs::{
    best_response, max_inducing_premium, predicted_action_space, predicted_agent_utility, predicted_marginal_utility,
    BeliefState, EmptyActionSpace, PredictedActionSpace, Role,
};
use crate::benchmark::{optimal_premium, OptimalContract, PremiumGrid};
use crate::model::{ActorParams, Contract};
use crate::numeric::{bisect_predicate, lambert_w0};

/// Tolerance on the premium when solving for the smallest incentive-adequate one.
pub const PREMIUM_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecisionError {
    #[error("search tendency must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("local search fraction must lie in (0, 1), got {0}")]
    InvalidLocalFraction(f64),
    #[error("candidate count must be at least 1")]
    NoCandidates,
}

/// δ and 1/λ of the principal's search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    delta: f64,
    local_fraction: f64,
}

impl SearchParams {
    pub fn new(delta: f64, local_fraction: f64) -> Result<Self, DecisionError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(DecisionError::InvalidDelta(delta));
        }
        if !(local_fraction > 0.0 && local_fraction < 1.0) {
            return Err(DecisionError::InvalidLocalFraction(local_fraction));
        }
        Ok(Self { delta, local_fraction })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn local_fraction(&self) -> f64 {
        self.local_fraction
    }
}

/// How candidate actions are priced when the principal compares them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CandidatePremium {
    /// Each candidate gets the premium the contract design would assign to it.
    #[default]
    Reoptimize,
    /// All candidates are valued at the incumbent's premium.
    Fixed,
}

/// How the contract design picks the premium for a target action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PremiumResolution {
    /// Exact smallest premium whose best response reaches the target.
    Continuous,
    /// Smallest premium on a grid whose best response reaches the target.
    Grid(PremiumGrid),
}

impl Default for PremiumResolution {
    fn default() -> Self {
        PremiumResolution::Grid(PremiumGrid::default())
    }
}

/// Switches for the interpretation choices in the decision rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionOptions {
    /// Put the exploration threshold at the δ-quantile instead of the (1 − δ)-quantile.
    pub eq14_literal: bool,
    pub candidate_premium: CandidatePremium,
    pub candidate_count: usize,
    pub premium_resolution: PremiumResolution,
    /// Grid for the premium under which the principal bounds her action space.
    pub space_grid: PremiumGrid,
    pub degenerate_memory: DegenerateMemory,
}

/// Mode choice when the principal's memory has no spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DegenerateMemory {
    /// Global search with probability δ.
    Bernoulli,
    /// Treat the memory as a point mass: the threshold is its mean.
    PointMass,
    /// An undefined threshold is never reached: always search locally.
    #[default]
    Local,
}

impl Default for DecisionOptions {
    fn default() -> Self {
        Self {
            eq14_literal: false,
            candidate_premium: CandidatePremium::Reoptimize,
            candidate_count: 2,
            premium_resolution: PremiumResolution::default(),
            space_grid: PremiumGrid::default(),
            degenerate_memory: DegenerateMemory::Local,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractStatus {
    /// The agent's predicted best response reaches the target and he participates.
    Exact,
    /// The target cannot be induced; the premium induces the largest action possible.
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignedContract {
    pub contract: Contract,
    pub status: ContractStatus,
    /// Best response predicted under the principal's belief.
    pub induced_action: f64,
}

fn capped(target: f64, premium: f64, prediction: f64, params: &ActorParams) -> DesignedContract {
    DesignedContract {
        contract: Contract::new(target, premium).expect("premium within [0, 1]"),
        status: ContractStatus::Capped,
        induced_action: best_response(premium, prediction, params),
    }
}

fn exact(target: f64, premium: f64, prediction: f64, params: &ActorParams) -> DesignedContract {
    DesignedContract {
        contract: Contract::new(target, premium).expect("premium within [0, 1]"),
        status: ContractStatus::Exact,
        induced_action: best_response(premium, prediction, params),
    }
}

/// Participation utility of the agent when he best-responds to `premium`.
fn participation_value(premium: f64, prediction: f64, params: &ActorParams) -> f64 {
    let a = best_response(premium, prediction, params);
    predicted_agent_utility(a, premium, prediction, params)
}

/// Smallest premium whose predicted best response reaches `target` and under
/// which the agent participates. The principal's residual is strictly
/// decreasing in the premium, so this is also her preferred premium.
pub fn design_contract(
    target: f64,
    prediction: f64,
    params: &ActorParams,
    resolution: &PremiumResolution,
) -> DesignedContract {
    assert!(target >= 0.0, "target action must be non-negative");
    match resolution {
        PremiumResolution::Continuous => design_continuous(target, prediction, params),
        PremiumResolution::Grid(grid) => design_on_grid(target, prediction, params, grid),
    }
}

fn design_continuous(target: f64, prediction: f64, params: &ActorParams) -> DesignedContract {
    let (rho, eta) = (params.rho(), params.eta());
    let reservation = params.reservation_utility();
    let cost = 2.0 * params.disutility_coeff();
    let x = target * rho + prediction;

    // smallest φ with φ·e^(−ηφx) ≥ cost·target/ρ, i.e. marginal utility at the
    // target is non-negative
    let lo = if target == 0.0 {
        0.0
    } else {
        let q = cost * target / rho;
        if x == 0.0 {
            q
        } else {
            match lambert_w0(-eta * x * q) {
                Some(w) => -w / (eta * x),
                None => return capped(target, max_inducing_premium(prediction, params), prediction, params),
            }
        }
    };
    if !(0.0..=1.0).contains(&lo) {
        return capped(target, max_inducing_premium(prediction, params), prediction, params);
    }
    if predicted_agent_utility(target, lo, prediction, params) >= reservation {
        return exact(target, lo, prediction, params);
    }
    // participation binds: raise φ while the best response still reaches the target
    let hi = if x > 0.0 { (1.0 / (eta * x)).min(1.0) } else { 1.0 };
    if hi <= lo || participation_value(hi, prediction, params) < reservation {
        return capped(target, max_inducing_premium(prediction, params), prediction, params);
    }
    let phi = bisect_predicate(lo, hi, PREMIUM_TOL, |p| {
        participation_value(p, prediction, params) >= reservation
    });
    exact(target, phi, prediction, params)
}

fn design_on_grid(target: f64, prediction: f64, params: &ActorParams, grid: &PremiumGrid) -> DesignedContract {
    let reservation = params.reservation_utility();
    for phi in grid.iter() {
        let reaches = target == 0.0 || predicted_marginal_utility(target, phi, prediction, params) >= -1e-12;
        if reaches && participation_value(phi, prediction, params) >= reservation {
            return exact(target, phi, prediction, params);
        }
    }
    let mut best = (f64::NEG_INFINITY, 1.0);
    for phi in grid.iter() {
        let a = best_response(phi, prediction, params);
        if a > best.0 {
            best = (a, phi);
        }
    }
    capped(target, best.1, prediction, params)
}

/// What the principal expects to earn from targeting `target`.
pub fn principal_value(designed: &DesignedContract, prediction: f64, params: &ActorParams) -> f64 {
    let phi = designed.contract.premium();
    match designed.status {
        ContractStatus::Exact => (designed.contract.target_action() * params.rho() + prediction) * (1.0 - phi),
        ContractStatus::Capped => {
            let a = designed.induced_action;
            if predicted_agent_utility(a, phi, prediction, params) >= params.reservation_utility() {
                (a * params.rho() + prediction) * (1.0 - phi)
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// The principal's predicted action space: the agent's participation and best
/// response under the premium that would be optimal for her if the
/// environment turned out as predicted.
pub fn principal_action_space(
    prediction: f64,
    params: &ActorParams,
    grid: &PremiumGrid,
) -> Result<(PredictedActionSpace, OptimalContract), EmptyActionSpace> {
    let Some(opt) = optimal_premium(prediction, params, grid) else {
        return Err(EmptyActionSpace {
            best_response: 0.0,
            utility: predicted_agent_utility(0.0, 0.0, prediction, params),
        });
    };
    let space = predicted_action_space(prediction, opt.premium, params, Role::Principal)?;
    Ok((space, opt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub accepted: bool,
    /// Best response under the agent's own prediction; only taken if accepted.
    pub action: f64,
    pub predicted_utility: f64,
}

/// The agent best-responds to the premium under his own prediction and accepts
/// when that promises at least his reservation utility.
pub fn agent_respond(contract: &Contract, agent_prediction: f64, params: &ActorParams) -> AgentResponse {
    let action = best_response(contract.premium(), agent_prediction, params);
    let u = predicted_agent_utility(action, contract.premium(), agent_prediction, params);
    AgentResponse {
        accepted: u >= params.reservation_utility(),
        action,
        predicted_utility: u,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Value(f64),
    /// The memory has no spread, so no quantile exists.
    Degenerate,
}

/// Exploration threshold κ: a quantile of the normal distribution fitted to the
/// principal's memory. By default the (1 − δ)-quantile, so a larger δ lowers
/// the bar for a global search.
pub fn exploration_threshold(memory: &BeliefState, delta: f64, literal: bool) -> Threshold {
    let sd = memory.memory_std();
    if !(sd > 0.0) {
        return Threshold::Degenerate;
    }
    let q = if literal { delta } else { 1.0 - delta };
    let normal = Normal::new(memory.predict(), sd).expect("positive sd");
    Threshold::Value(normal.inverse_cdf(q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Local,
    Global,
    Reset,
}

impl SearchMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SearchMode::Local => "local",
            SearchMode::Global => "global",
            SearchMode::Reset => "reset",
        }
    }
}

/// Global search iff the latest estimate reaches the threshold; with a
/// degenerate threshold, global with probability δ (one uniform draw).
pub fn choose_mode<R: Rng + ?Sized>(last_estimate: f64, threshold: Threshold, delta: f64, rng: &mut R) -> SearchMode {
    match threshold {
        Threshold::Value(kappa) => {
            if last_estimate >= kappa {
                SearchMode::Global
            } else {
                SearchMode::Local
            }
        }
        Threshold::Degenerate => {
            if rng.random::<f64>() < delta {
                SearchMode::Global
            } else {
                SearchMode::Local
            }
        }
    }
}

/// Threshold and mode rule combined, with the configured handling of a
/// memory without spread.
pub fn select_mode<R: Rng + ?Sized>(
    last_estimate: f64,
    memory: &BeliefState,
    delta: f64,
    options: &DecisionOptions,
    rng: &mut R,
) -> SearchMode {
    let threshold = match exploration_threshold(memory, delta, options.eq14_literal) {
        Threshold::Degenerate => match options.degenerate_memory {
            DegenerateMemory::Bernoulli => Threshold::Degenerate,
            DegenerateMemory::PointMass => Threshold::Value(memory.predict()),
            DegenerateMemory::Local => return SearchMode::Local,
        },
        th => th,
    };
    choose_mode(last_estimate, threshold, delta, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo)
    }
}

/// Local interval around the incumbent and the global remainder (up to two pieces).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRegions {
    pub local: Vec<Interval>,
    pub global: Vec<Interval>,
}

impl SearchRegions {
    pub fn region(&self, mode: SearchMode) -> &[Interval] {
        match mode {
            SearchMode::Global => &self.global,
            _ => &self.local,
        }
    }
}

fn measure(region: &[Interval]) -> f64 {
    region.iter().map(Interval::len).sum()
}

/// Split the space into the local interval of width `local_fraction·width`
/// centred on the incumbent (clipped to the space) and the global rest, which
/// excludes the unclipped local interval.
pub fn search_spaces(space: &PredictedActionSpace, incumbent: f64, local_fraction: f64) -> SearchRegions {
    let width = space.width();
    if !(width > 0.0) {
        return SearchRegions {
            local: Vec::new(),
            global: Vec::new(),
        };
    }
    let half = 0.5 * local_fraction * width;
    let (l_lo, l_hi) = (incumbent - half, incumbent + half);
    let local = Interval {
        lo: l_lo.max(space.lower),
        hi: l_hi.min(space.upper),
    };
    let mut global = Vec::with_capacity(2);
    let left = Interval {
        lo: space.lower,
        hi: l_lo.min(space.upper),
    };
    let right = Interval {
        lo: l_hi.max(space.lower),
        hi: space.upper,
    };
    for piece in [left, right] {
        if !piece.is_empty() {
            global.push(piece);
        }
    }
    SearchRegions {
        local: if local.is_empty() { Vec::new() } else { vec![local] },
        global,
    }
}

fn sample_region<R: Rng + ?Sized>(region: &[Interval], rng: &mut R) -> f64 {
    let total = measure(region);
    let mut u = rng.random::<f64>() * total;
    for piece in region {
        let len = piece.len();
        if u < len {
            return piece.lo + u;
        }
        u -= len;
    }
    region.last().map(|p| p.hi).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub next_target: f64,
    pub mode: SearchMode,
    /// Incumbent first, then the drawn candidates; empty after a reset.
    pub candidates_evaluated: Vec<f64>,
}

/// Inputs the principal carries into one search step.
#[derive(Debug, Clone, Copy)]
pub struct SearchContext<'a> {
    pub params: &'a ActorParams,
    pub search: &'a SearchParams,
    pub options: &'a DecisionOptions,
    /// Prediction under which candidates are valued.
    pub prediction: f64,
    /// Premium of the incumbent's contract, used with [`CandidatePremium::Fixed`].
    pub incumbent_premium: f64,
}

fn reset<R: Rng + ?Sized>(space: &PredictedActionSpace, rng: &mut R) -> SearchOutcome {
    let u = rng.random::<f64>();
    let next = (space.lower + u * space.width()).clamp(space.lower, space.upper);
    SearchOutcome {
        next_target: next,
        mode: SearchMode::Reset,
        candidates_evaluated: Vec::new(),
    }
}

/// One hill-climbing step: draw candidates from the chosen region and keep the
/// action with the highest predicted value for the principal (ties to the
/// smaller action). An incumbent outside the space forces a reset to a
/// uniformly drawn position.
pub fn search_step<R: Rng + ?Sized>(
    space: &PredictedActionSpace,
    incumbent: f64,
    mode: SearchMode,
    ctx: &SearchContext<'_>,
    rng: &mut R,
) -> SearchOutcome {
    if !space.contains(incumbent) || mode == SearchMode::Reset {
        return reset(space, rng);
    }
    let regions = search_spaces(space, incumbent, ctx.search.local_fraction());
    let (mode, region) = {
        let preferred = regions.region(mode);
        if measure(preferred) > 0.0 {
            (mode, preferred)
        } else {
            let other = if mode == SearchMode::Global {
                SearchMode::Local
            } else {
                SearchMode::Global
            };
            (other, regions.region(other))
        }
    };
    if !(measure(region) > 0.0) {
        return reset(space, rng);
    }

    let count = ctx.options.candidate_count.max(1);
    let mut candidates = Vec::with_capacity(count + 1);
    candidates.push(incumbent);
    for _ in 0..count {
        candidates.push(sample_region(region, rng));
    }

    let mut best = (f64::NEG_INFINITY, incumbent);
    for &c in &candidates {
        let value = candidate_value(c, ctx);
        if value > best.0 || (value == best.0 && c < best.1) {
            best = (value, c);
        }
    }
    SearchOutcome {
        next_target: best.1,
        mode,
        candidates_evaluated: candidates,
    }
}

fn candidate_value(candidate: f64, ctx: &SearchContext<'_>) -> f64 {
    match ctx.options.candidate_premium {
        CandidatePremium::Reoptimize => {
            let designed = design_contract(candidate, ctx.prediction, ctx.params, &ctx.options.premium_resolution);
            principal_value(&designed, ctx.prediction, ctx.params)
        }
        CandidatePremium::Fixed => (candidate * ctx.params.rho() + ctx.prediction) * (1.0 - ctx.incumbent_premium),
    }
}
