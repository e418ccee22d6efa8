//! Model parameters and hidden-state labels.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Hidden behavioural state of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateId {
    Moving = 0,
    Resting = 1,
    Handling = 2,
}

impl StateId {
    pub const ALL: [StateId; 3] = [StateId::Moving, StateId::Resting, StateId::Handling];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<StateId> {
        match i {
            0 => Some(StateId::Moving),
            1 => Some(StateId::Resting),
            2 => Some(StateId::Handling),
            _ => None,
        }
    }

    /// The other motionless state; `Moving` maps to itself.
    pub fn swapped(self) -> StateId {
        match self {
            StateId::Moving => StateId::Moving,
            StateId::Resting => StateId::Handling,
            StateId::Handling => StateId::Resting,
        }
    }

    pub fn is_motionless(self) -> bool {
        self != StateId::Moving
    }

    pub fn name(self) -> &'static str {
        match self {
            StateId::Moving => "moving",
            StateId::Resting => "resting",
            StateId::Handling => "handling",
        }
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

impl std::str::FromStr for StateId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "moving" | "m" => Ok(StateId::Moving),
            "1" | "resting" | "r" => Ok(StateId::Resting),
            "2" | "handling" | "h" => Ok(StateId::Handling),
            other => Err(format!("unknown state `{other}`")),
        }
    }
}

/// Parameter vector `(lambda0, lambda1, lambda2, p1, sigma)`.
///
/// `lambda_k` is the exit rate of state `k`, `p1` the probability of entering
/// the resting state when movement stops and `sigma` the mobility (per-coordinate
/// standard deviation per square-root time unit while moving).
///
/// The endpoints `p1 = 0` and `p1 = 1` are accepted; they collapse the model to
/// a two-state moving/resting process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub p1: f64,
    pub sigma: f64,
}

impl ModelParams {
    pub fn new(lambda0: f64, lambda1: f64, lambda2: f64, p1: f64, sigma: f64) -> Result<Self> {
        let p = ModelParams {
            lambda0,
            lambda1,
            lambda2,
            p1,
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("sigma", self.sigma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return domain(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.p1) {
            return domain(format!("p1 must lie in [0, 1], got {}", self.p1));
        }
        Ok(())
    }

    /// `true` when `0 < p1 < 1`, i.e. the full three-state model.
    pub fn is_interior(&self) -> bool {
        self.p1 > 0.0 && self.p1 < 1.0
    }

    pub fn p2(&self) -> f64 {
        1.0 - self.p1
    }

    pub fn rate(&self, state: StateId) -> f64 {
        match state {
            StateId::Moving => self.lambda0,
            StateId::Resting => self.lambda1,
            StateId::Handling => self.lambda2,
        }
    }

    /// Probability of entering `state` when movement stops (0 for `Moving`).
    pub fn entry_prob(&self, state: StateId) -> f64 {
        match state {
            StateId::Moving => 0.0,
            StateId::Resting => self.p1,
            StateId::Handling => self.p2(),
        }
    }

    /// Relabel resting and handling: `lambda1 <-> lambda2`, `p1 <-> p2`.
    pub fn swapped(&self) -> ModelParams {
        ModelParams {
            lambda0: self.lambda0,
            lambda1: self.lambda2,
            lambda2: self.lambda1,
            p1: self.p2(),
            sigma: self.sigma,
        }
    }

    /// Generator matrix of the chain, rows indexed by the current state.
    pub fn rate_matrix(&self) -> [[f64; 3]; 3] {
        let (l0, l1, l2) = (self.lambda0, self.lambda1, self.lambda2);
        [[-l0, l0 * self.p1, l0 * self.p2()], [l1, -l1, 0.0], [l2, 0.0, -l2]]
    }

    /// Stationary law, proportional to `(1/lambda0, p1/lambda1, p2/lambda2)`.
    pub fn stationary(&self) -> [f64; 3] {
        let w = [1.0 / self.lambda0, self.p1 / self.lambda1, self.p2() / self.lambda2];
        let total: f64 = w.iter().sum();
        [w[0] / total, w[1] / total, w[2] / total]
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(lambda0={}, lambda1={}, lambda2={}, p1={}, sigma={})",
            self.lambda0, self.lambda1, self.lambda2, self.p1, self.sigma
        )
    }
}

/// Initial-state specification for simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartSpec {
    State(StateId),
    Stationary,
}
