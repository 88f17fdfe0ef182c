//! Full-information benchmark that normalizes every performance metric.
//!
//! The second-best solution restricted to the linear sharing rule is found by
//! exhaustive search over a premium grid: for each premium the agent's best
//! response is computed in closed form, premiums violating participation are
//! discarded and the premium maximizing the principal's expected residual is
//! kept. The environment enters only through its mean, so σ never influences
//! (a*, φ*, x*).
//!
//! The module also carries a numerical check that a flat wage is optimal when
//! the action is contractible, with expectations taken by Gauss–Hermite
//! quadrature.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beliefs::{best_response, max_inducing_premium, predicted_agent_utility};
use crate::model::ActorParams;
use crate::numeric::bisect_predicate;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchmarkError {
    #[error("no premium satisfies the participation constraint")]
    Infeasible,
    #[error("invalid premium grid step {0}")]
    InvalidGrid(f64),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

/// Evenly spaced premiums `{0, step, 2·step, …, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiumGrid {
    step: f64,
    points: usize,
}

impl PremiumGrid {
    pub const DEFAULT_STEP: f64 = 0.001;

    pub fn new(step: f64) -> Result<Self, BenchmarkError> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(BenchmarkError::InvalidGrid(step));
        }
        let n = (1.0 / step).round();
        if ((n * step) - 1.0).abs() > 1e-9 {
            return Err(BenchmarkError::InvalidGrid(step));
        }
        Ok(Self {
            step,
            points: n as usize + 1,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `k`-th premium, computed as `k / n` so grid points are exact decimals.
    pub fn at(&self, k: usize) -> f64 {
        k as f64 / (self.points - 1) as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |k| self.at(k))
    }
}

impl Default for PremiumGrid {
    fn default() -> Self {
        Self::new(Self::DEFAULT_STEP).expect("default grid is valid")
    }
}

/// A linear contract that is optimal for the principal under some prediction
/// of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalContract {
    pub premium: f64,
    /// Agent's best response under `premium`.
    pub action: f64,
    /// Expected outcome `action·ρ + prediction`.
    pub expected_outcome: f64,
    /// Principal's expected residual `expected_outcome·(1 − premium)`.
    pub principal_value: f64,
}

/// Grid search for the principal's optimal premium when the environment is
/// expected at `prediction`. Ties go to the smaller premium.
///
/// The scan stops once no later premium can win: the value is bounded by the
/// largest inducible outcome times `1 − φ`, which falls with `φ`.
pub fn optimal_premium(prediction: f64, params: &ActorParams, grid: &PremiumGrid) -> Option<OptimalContract> {
    let peak = best_response(max_inducing_premium(prediction, params), prediction, params);
    let bound = peak * params.rho() * (1.0 + 1e-9) + prediction;
    scan_premiums(prediction, params, grid, (bound > 0.0).then_some(bound))
}

/// [`optimal_premium`] evaluated at every grid point.
pub fn optimal_premium_exhaustive(
    prediction: f64,
    params: &ActorParams,
    grid: &PremiumGrid,
) -> Option<OptimalContract> {
    scan_premiums(prediction, params, grid, None)
}

fn scan_premiums(
    prediction: f64,
    params: &ActorParams,
    grid: &PremiumGrid,
    bound: Option<f64>,
) -> Option<OptimalContract> {
    let reservation = params.reservation_utility();
    let mut best: Option<OptimalContract> = None;
    for phi in grid.iter() {
        if let (Some(bound), Some(b)) = (bound, best) {
            if bound * (1.0 - phi) < b.principal_value {
                break;
            }
        }
        let action = best_response(phi, prediction, params);
        if predicted_agent_utility(action, phi, prediction, params) < reservation {
            continue;
        }
        let expected_outcome = action * params.rho() + prediction;
        let value = expected_outcome * (1.0 - phi);
        if best.is_none_or(|b| value > b.principal_value) {
            best = Some(OptimalContract {
                premium: phi,
                action,
                expected_outcome,
                principal_value: value,
            });
        }
    }
    best
}

/// Second-best benchmark (a*, φ*, x*).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSolution {
    pub a_star: f64,
    pub phi_star: f64,
    pub x_star: f64,
}

/// Benchmark on the default premium grid.
pub fn second_best_oracle(params: &ActorParams, mean: f64) -> Result<BenchmarkSolution, BenchmarkError> {
    second_best_oracle_on(params, mean, &PremiumGrid::default())
}

pub fn second_best_oracle_on(
    params: &ActorParams,
    mean: f64,
    grid: &PremiumGrid,
) -> Result<BenchmarkSolution, BenchmarkError> {
    let best = optimal_premium(mean, params, grid).ok_or(BenchmarkError::Infeasible)?;
    Ok(BenchmarkSolution {
        a_star: best.action,
        phi_star: best.premium,
        x_star: best.action * params.rho() + mean,
    })
}

/// Gauss–Hermite rule for expectations over a normal distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes and weights for `∫ e^(−x²) f(x) dx`, via Newton iteration on the
    /// orthonormal Hermite recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest node in units of the standard deviation.
    pub fn reach_in_sigmas(&self) -> f64 {
        self.nodes.iter().fold(0.0f64, |acc, x| acc.max(x.abs())) * std::f64::consts::SQRT_2
    }

    /// `E[f(X)]` for `X ~ N(mean, sd)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, mean: f64, sd: f64, f: F) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        let total: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mean + scale * x))
            .sum();
        total / std::f64::consts::PI.sqrt()
    }
}

/// Setting for the contractible-action check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkProblem {
    pub actor: ActorParams,
    pub mean: f64,
    pub sigma: f64,
    /// Actions checked: `{step, 2·step, …, max_action}`.
    pub action_step: f64,
    pub max_action: f64,
    pub premium_step: f64,
    pub quadrature_nodes: usize,
}

impl BenchmarkProblem {
    /// Default resolutions around an actor and environment.
    pub fn new(actor: ActorParams, mean: f64, sigma: f64, max_action: f64) -> Self {
        Self {
            actor,
            mean,
            sigma,
            action_step: max_action / 40.0,
            max_action,
            premium_step: 0.001,
            quadrature_nodes: 64,
        }
    }
}

/// Tolerance in principal expected utility for the flat-wage check.
pub const FIRST_BEST_TOL: f64 = 1e-4;

/// Comparison of contracts that all implement the same contractible action and
/// leave the agent exactly at his reservation utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstBestComparison {
    pub action: f64,
    /// Principal's expected utility under the flat wage.
    pub flat_value: f64,
    /// Best principal value over `w + φ·x` with φ > 0 on the premium grid.
    pub best_incentive_value: f64,
    pub best_incentive_premium: f64,
    /// Principal value under the pure linear contract `φ·x`, if one meets participation.
    pub linear_value: Option<f64>,
}

fn validate_problem(problem: &BenchmarkProblem) -> Result<GaussHermite, BenchmarkError> {
    let inconclusive = |msg: String| Err(BenchmarkError::Inconclusive(msg));
    if !(problem.sigma >= 0.0 && problem.sigma.is_finite()) {
        return inconclusive(format!("invalid sigma {}", problem.sigma));
    }
    if !(problem.action_step > 0.0 && problem.max_action >= problem.action_step) {
        return inconclusive("action grid is empty".into());
    }
    if !(problem.premium_step > 0.0 && problem.premium_step <= 0.01) {
        return inconclusive(format!("premium step {} coarser than 0.01", problem.premium_step));
    }
    let gh = GaussHermite::new(problem.quadrature_nodes);
    if gh.reach_in_sigmas() < 6.0 {
        return inconclusive(format!(
            "{} quadrature nodes reach only {:.2} standard deviations",
            gh.len(),
            gh.reach_in_sigmas()
        ));
    }
    let second = gh.expect(0.0, 1.0, |z| z * z);
    let fourth = gh.expect(0.0, 1.0, |z| z.powi(4));
    if (second - 1.0).abs() > 1e-10 || (fourth - 3.0).abs() > 1e-9 {
        return inconclusive("quadrature fails to reproduce normal moments".into());
    }
    Ok(gh)
}

/// Wage that gives the agent exactly his reservation utility at `action`
/// when paid `wage + premium·x` and `E[e^(−η·premium·x)] = mgf`.
fn binding_wage(action: f64, mgf: f64, actor: &ActorParams) -> Option<f64> {
    let eta = actor.eta();
    let headroom = 1.0 - eta * (actor.reservation_utility() + actor.disutility(action));
    if headroom <= 0.0 {
        return None;
    }
    Some(-(headroom / mgf).ln() / eta)
}

/// Compare flat, affine and linear contracts at one contractible action.
pub fn compare_first_best_contracts(
    problem: &BenchmarkProblem,
    action: f64,
) -> Result<Option<FirstBestComparison>, BenchmarkError> {
    let gh = validate_problem(problem)?;
    Ok(compare_at(problem, &gh, action))
}

fn compare_at(problem: &BenchmarkProblem, gh: &GaussHermite, action: f64) -> Option<FirstBestComparison> {
    let actor = &problem.actor;
    let eta = actor.eta();
    let mean_x = action * actor.rho() + problem.mean;
    let expected_x = gh.expect(mean_x, problem.sigma, |x| x);
    let flat_wage = binding_wage(action, 1.0, actor)?;
    let flat_value = expected_x - flat_wage;

    let steps = (1.0 / problem.premium_step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 1..=steps {
        let phi = k as f64 / steps as f64;
        let mgf = gh.expect(mean_x, problem.sigma, |x| (-eta * phi * x).exp());
        if let Some(w) = binding_wage(action, mgf, actor) {
            let value = (1.0 - phi) * expected_x - w;
            if value > best.0 {
                best = (value, phi);
            }
        }
    }

    // pure linear contract: premium solving participation with equality
    let participation = |phi: f64| {
        gh.expect(mean_x, problem.sigma, |x| -(-eta * phi * x).exp_m1() / eta)
            - actor.disutility(action)
            - actor.reservation_utility()
    };
    let linear_value = if participation(1.0) >= 0.0 {
        let phi = if participation(0.0) >= 0.0 {
            0.0
        } else {
            bisect_predicate(0.0, 1.0, 1e-14, |p| participation(p) >= 0.0)
        };
        Some((1.0 - phi) * expected_x)
    } else {
        None
    };

    Some(FirstBestComparison {
        action,
        flat_value,
        best_incentive_value: best.0,
        best_incentive_premium: best.1,
        linear_value,
    })
}

/// Check that, with a contractible action, paying a flat wage that meets
/// participation with equality is at least as good for the principal (within
/// [`FIRST_BEST_TOL`]) as any contract that loads risk on the agent, for every
/// action on the problem's grid.
pub fn verify_first_best_flat_wage(problem: &BenchmarkProblem) -> Result<bool, BenchmarkError> {
    let gh = validate_problem(problem)?;
    let count = (problem.max_action / problem.action_step).floor() as usize;
    let mut checked = 0usize;
    for i in 1..=count {
        let action = i as f64 * problem.action_step;
        let Some(cmp) = compare_at(problem, &gh, action) else {
            continue;
        };
        checked += 1;
        if cmp.best_incentive_value > cmp.flat_value + FIRST_BEST_TOL {
            return Ok(false);
        }
        if let Some(lin) = cmp.linear_value {
            if lin > cmp.flat_value + FIRST_BEST_TOL {
                return Ok(false);
            }
        }
    }
    if checked == 0 {
        return Err(BenchmarkError::Inconclusive(
            "no action on the grid admits a participating contract".into(),
        ));
    }
    Ok(true)
}

/// Frozen benchmark values together with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFixture {
    pub rho: f64,
    pub eta: f64,
    pub reservation_utility: f64,
    pub mean: f64,
    pub premium_step: f64,
    pub a_star: f64,
    pub phi_star: f64,
    pub x_star: f64,
}

impl BenchmarkFixture {
    pub fn compute(params: &ActorParams, mean: f64, grid: &PremiumGrid) -> Result<Self, BenchmarkError> {
        let sol = second_best_oracle_on(params, mean, grid)?;
        Ok(Self {
            rho: params.rho(),
            eta: params.eta(),
            reservation_utility: params.reservation_utility(),
            mean,
            premium_step: grid.step(),
            a_star: sol.a_star,
            phi_star: sol.phi_star,
            x_star: sol.x_star,
        })
    }

    /// Largest absolute difference between the frozen and another set of values.
    pub fn max_drift(&self, other: &Self) -> f64 {
        [
            self.a_star - other.a_star,
            self.phi_star - other.phi_star,
            self.x_star - other.x_star,
        ]
        .iter()
        .fold(0.0f64, |acc, d| acc.max(d.abs()))
    }
}

/// Fixture for the default actor shipped with the crate.
pub const DEFAULT_FIXTURE_JSON: &str = include_str!("../fixtures/benchmark.json");

pub fn default_fixture() -> BenchmarkFixture {
    serde_json::from_str(DEFAULT_FIXTURE_JSON).expect("bundled fixture parses")
}
