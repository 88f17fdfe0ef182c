//! Bounded-memory beliefs about the environment and the action spaces the
//! actors derive from them.
//!
//! The principal stores estimates `ϑ_t = x_t − ã_t·ρ`, the agent stores the
//! realized `θ_t`. Both predict the next state as the mean of what they can
//! still remember and plug that prediction into the production function to
//! bound the set of actions they regard as feasible.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{agent_utility, ActorParams};
use crate::numeric::{bisect_predicate, lambert_w0_of_exp};

/// Absolute tolerance of the boundary solves, in action units.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// How many past values an actor can access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MemoryCapacity {
    Finite(usize),
    Unbounded,
}

impl MemoryCapacity {
    pub fn admits(&self, len: usize) -> bool {
        match *self {
            MemoryCapacity::Finite(m) => len <= m,
            MemoryCapacity::Unbounded => true,
        }
    }
}

impl fmt::Display for MemoryCapacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryCapacity::Finite(m) => write!(f, "{m}"),
            MemoryCapacity::Unbounded => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid memory capacity {0:?}: expected a positive integer or \"inf\"")]
pub struct ParseMemoryError(pub String);

impl FromStr for MemoryCapacity {
    type Err = ParseMemoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" | "unbounded" => Ok(MemoryCapacity::Unbounded),
            other => match other.parse::<usize>() {
                Ok(m) if m > 0 => Ok(MemoryCapacity::Finite(m)),
                _ => Err(ParseMemoryError(s.to_string())),
            },
        }
    }
}

impl From<MemoryCapacity> for String {
    fn from(m: MemoryCapacity) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for MemoryCapacity {
    type Error = ParseMemoryError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Principal,
    Agent,
}

/// An actor's memory of environment values, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    memory: VecDeque<f64>,
    capacity: MemoryCapacity,
    role: Role,
    prior: f64,
}

impl BeliefState {
    /// Empty memory whose prediction falls back to a prior of 0.
    pub fn new(role: Role, capacity: MemoryCapacity) -> Self {
        Self::with_prior(role, capacity, 0.0)
    }

    pub fn with_prior(role: Role, capacity: MemoryCapacity, prior: f64) -> Self {
        let reserve = match capacity {
            MemoryCapacity::Finite(m) => m,
            MemoryCapacity::Unbounded => 32,
        };
        Self {
            memory: VecDeque::with_capacity(reserve + 1),
            capacity,
            role,
            prior,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn capacity(&self) -> MemoryCapacity {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.memory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memory.is_empty()
    }

    /// Most recent value, if any.
    pub fn latest(&self) -> Option<f64> {
        self.memory.front().copied()
    }

    /// Remembered values, most recent first.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.memory.iter().copied()
    }

    /// Push a new value to the front and forget the oldest one when full.
    pub fn record(&mut self, value: f64) {
        self.memory.push_front(value);
        if let MemoryCapacity::Finite(m) = self.capacity {
            self.memory.truncate(m);
        }
    }

    /// Mean of the accessible values, or the prior when nothing is remembered.
    pub fn predict(&self) -> f64 {
        if self.memory.is_empty() {
            return self.prior;
        }
        self.memory.iter().sum::<f64>() / self.memory.len() as f64
    }

    /// Sample standard deviation (n − 1 denominator); 0 with fewer than two values.
    pub fn memory_std(&self) -> f64 {
        let n = self.memory.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.memory.iter().sum::<f64>() / n as f64;
        let ss: f64 = self.memory.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

/// The principal's estimate of the environment: `ϑ = x − ã·ρ`.
pub fn estimate_theta(x: f64, target_action: f64, rho: f64) -> f64 {
    x - target_action * rho
}

/// Feasible actions as seen by one actor: bounded below by participation and
/// above by the agent's best response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedActionSpace {
    pub lower: f64,
    pub upper: f64,
    pub owner: Role,
    /// Premium under which the space was built.
    pub premium: f64,
}

impl PredictedActionSpace {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, action: f64) -> bool {
        action >= self.lower && action <= self.upper
    }
}

/// Marker for a prediction under which no action meets participation.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("no feasible action: best response {best_response} yields utility {utility} below reservation")]
pub struct EmptyActionSpace {
    pub best_response: f64,
    pub utility: f64,
}

/// Predicted utility of the agent for action `a` when the environment is
/// expected at `prediction`.
pub fn predicted_agent_utility(action: f64, premium: f64, prediction: f64, params: &ActorParams) -> f64 {
    let expected_outcome = action * params.rho() + prediction;
    agent_utility(premium * expected_outcome, action, params)
}

/// Derivative of [`predicted_agent_utility`] with respect to the action.
pub fn predicted_marginal_utility(action: f64, premium: f64, prediction: f64, params: &ActorParams) -> f64 {
    let (rho, eta) = (params.rho(), params.eta());
    premium * rho * (-eta * premium * (action * rho + prediction)).exp() - 2.0 * params.disutility_coeff() * action
}

/// The action maximizing the agent's predicted utility over `a ≥ 0`.
///
/// The objective is strictly concave, so the maximizer solves the first-order
/// condition `φρ·e^(−ηφ(aρ+E)) = 0.2a`, which has the closed form
/// `a = W0(k·C)/k` with `k = ηφρ` and `C = φρ·e^(−ηφE)/0.2`.
pub fn best_response(premium: f64, prediction: f64, params: &ActorParams) -> f64 {
    if premium <= 0.0 {
        return 0.0;
    }
    let (rho, eta) = (params.rho(), params.eta());
    let cost = 2.0 * params.disutility_coeff();
    let k = eta * premium * rho;
    let log_arg = k.ln() + (premium * rho / cost).ln() - eta * premium * prediction;
    lambert_w0_of_exp(log_arg) / k
}

/// Premium that maximizes the agent's best response over `[0, 1]`.
///
/// At the peak the agent's predicted share equals `1/η`; combined with the
/// first-order condition this gives a quadratic in the action.
pub fn max_inducing_premium(prediction: f64, params: &ActorParams) -> f64 {
    let (rho, eta) = (params.rho(), params.eta());
    let c = 2.0 * params.disutility_coeff();
    let disc = c * c * prediction * prediction + 4.0 * c * rho * rho / (std::f64::consts::E * eta);
    let a = (-c * prediction + disc.sqrt()) / (2.0 * c * rho);
    let phi = std::f64::consts::E * c * a / rho;
    if phi > 0.0 && phi <= 1.0 {
        phi
    } else {
        1.0
    }
}

/// Build an actor's predicted action space for a given premium.
pub fn predicted_action_space(
    prediction: f64,
    premium: f64,
    params: &ActorParams,
    owner: Role,
) -> Result<PredictedActionSpace, EmptyActionSpace> {
    let upper = best_response(premium, prediction, params);
    let reservation = params.reservation_utility();
    let u_upper = predicted_agent_utility(upper, premium, prediction, params);
    if u_upper < reservation {
        return Err(EmptyActionSpace {
            best_response: upper,
            utility: u_upper,
        });
    }
    let lower = if predicted_agent_utility(0.0, premium, prediction, params) >= reservation {
        0.0
    } else {
        // utility is increasing on [0, upper]
        bisect_predicate(0.0, upper, BOUNDARY_TOL, |a| {
            predicted_agent_utility(a, premium, prediction, params) >= reservation
        })
    };
    Ok(PredictedActionSpace {
        lower: lower.min(upper),
        upper,
        owner,
        premium,
    })
}
