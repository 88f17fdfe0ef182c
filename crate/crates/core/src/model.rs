//! Economic primitives of the hidden-action setting.
//!
//! Production is additive-normal (`x = a·ρ + θ`), the agent's share follows a
//! linear sharing rule (`s(x) = φ·x`), the principal is risk neutral and the
//! agent has CARA utility over his share minus a quadratic effort cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficient of the agent's effort cost `G(a) = 0.1·a²`.
pub const DISUTILITY_COEFF: f64 = 0.1;
/// Exponent of the agent's effort cost.
pub const DISUTILITY_EXPONENT: i32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("action must be non-negative, got {0}")]
    NegativeAction(f64),
    #[error("premium must lie in [0, 1], got {0}")]
    PremiumOutOfRange(f64),
    #[error("productivity must be positive and finite, got {0}")]
    InvalidProductivity(f64),
    #[error("risk aversion must be positive and finite, got {0}")]
    InvalidRiskAversion(f64),
    #[error("reservation utility must not be NaN or +inf")]
    InvalidReservationUtility,
    #[error("environment standard deviation must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("environment mean must be finite, got {0}")]
    InvalidMean(f64),
}

/// Characteristics of the agent that both actors know.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorParams {
    rho: f64,
    eta: f64,
    reservation_utility: f64,
}

impl ActorParams {
    pub fn new(rho: f64, eta: f64, reservation_utility: f64) -> Result<Self, ModelError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(ModelError::InvalidProductivity(rho));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ModelError::InvalidRiskAversion(eta));
        }
        // -inf is allowed: it switches participation off.
        if reservation_utility.is_nan() || reservation_utility == f64::INFINITY {
            return Err(ModelError::InvalidReservationUtility);
        }
        Ok(Self {
            rho,
            eta,
            reservation_utility,
        })
    }

    /// ρ = 50, η = 0.5, Ū = 0.
    pub fn standard() -> Self {
        Self {
            rho: 50.0,
            eta: 0.5,
            reservation_utility: 0.0,
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn reservation_utility(&self) -> f64 {
        self.reservation_utility
    }

    pub fn disutility_coeff(&self) -> f64 {
        DISUTILITY_COEFF
    }

    pub fn disutility_exponent(&self) -> i32 {
        DISUTILITY_EXPONENT
    }

    /// Effort cost `G(a)`.
    pub fn disutility(&self, action: f64) -> f64 {
        DISUTILITY_COEFF * action * action
    }
}

impl Default for ActorParams {
    fn default() -> Self {
        Self::standard()
    }
}

/// Distribution of the exogenous variable θ ~ N(μ, σ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParams {
    mu: f64,
    sigma: f64,
}

impl EnvironmentParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, ModelError> {
        if !mu.is_finite() {
            return Err(ModelError::InvalidMean(mu));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ModelError::InvalidSigma(sigma));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// The per-period offer: the action the principal wants and the premium
/// parameter of the linear sharing rule that should induce it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    target_action: f64,
    premium: f64,
}

impl Contract {
    pub fn new(target_action: f64, premium: f64) -> Result<Self, ModelError> {
        if target_action.is_nan() || target_action < 0.0 {
            return Err(ModelError::NegativeAction(target_action));
        }
        check_premium(premium)?;
        Ok(Self { target_action, premium })
    }

    pub fn target_action(&self) -> f64 {
        self.target_action
    }

    pub fn premium(&self) -> f64 {
        self.premium
    }

    /// Agent's share of outcome `x` under this contract.
    pub fn share(&self, x: f64) -> f64 {
        x * self.premium
    }
}

fn check_premium(premium: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&premium) {
        Ok(())
    } else {
        Err(ModelError::PremiumOutOfRange(premium))
    }
}

/// Production function `x = a·ρ + θ`.
pub fn outcome(action: f64, rho: f64, theta: f64) -> Result<f64, ModelError> {
    if action.is_nan() || action < 0.0 {
        return Err(ModelError::NegativeAction(action));
    }
    Ok(action * rho + theta)
}

/// Linear sharing rule `s(x) = x·φ`.
pub fn sharing(x: f64, premium: f64) -> Result<f64, ModelError> {
    check_premium(premium)?;
    Ok(x * premium)
}

/// Risk-neutral principal: utility equals her residual `x − s(x)`.
pub fn principal_utility(x: f64, share: f64) -> f64 {
    x - share
}

/// CARA utility of the agent's share minus the quadratic effort cost:
/// `(1 − e^(−η·s))/η − 0.1·a²`.
pub fn agent_utility(share: f64, action: f64, params: &ActorParams) -> f64 {
    let eta = params.eta();
    -(-eta * share).exp_m1() / eta - params.disutility(action)
}
