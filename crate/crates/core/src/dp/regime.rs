use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegimeName {
    Low,
    Medium,
    High,
    Custom,
}

impl fmt::Display for RegimeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeName::Low => "low",
            RegimeName::Medium => "medium",
            RegimeName::High => "high",
            RegimeName::Custom => "custom",
        })
    }
}

impl FromStr for RegimeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "low" => RegimeName::Low,
            "medium" => RegimeName::Medium,
            "high" => RegimeName::High,
            "custom" => RegimeName::Custom,
            other => return Err(Error::InvalidConfig(format!("unknown privacy regime `{other}`"))),
        })
    }
}

/// Noise multiplier, clipping norm, δ and the ε at which training stops.
/// Presets carry separate budgets for local and federated training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyRegime {
    pub name: RegimeName,
    pub noise_multiplier: f64,
    pub clip_norm: f64,
    pub delta: f64,
    pub budget_local: f64,
    pub budget_federated: f64,
}

impl PrivacyRegime {
    pub const LOW: PrivacyRegime = PrivacyRegime {
        name: RegimeName::Low,
        noise_multiplier: 0.8,
        clip_norm: 1.0,
        delta: 1e-5,
        budget_local: 5.98,
        budget_federated: 11.5,
    };
    pub const MEDIUM: PrivacyRegime = PrivacyRegime {
        name: RegimeName::Medium,
        noise_multiplier: 1.0,
        clip_norm: 0.5,
        delta: 1e-5,
        budget_local: 3.58,
        budget_federated: 7.08,
    };
    pub const HIGH: PrivacyRegime = PrivacyRegime {
        name: RegimeName::High,
        noise_multiplier: 1.5,
        clip_norm: 0.1,
        delta: 1e-5,
        budget_local: 1.82,
        budget_federated: 3.54,
    };
    pub const PRESETS: [PrivacyRegime; 3] = [Self::LOW, Self::MEDIUM, Self::HIGH];

    pub fn preset(name: RegimeName) -> Option<PrivacyRegime> {
        match name {
            RegimeName::Low => Some(Self::LOW),
            RegimeName::Medium => Some(Self::MEDIUM),
            RegimeName::High => Some(Self::HIGH),
            RegimeName::Custom => None,
        }
    }

    /// Same budget for both topologies. `noise_multiplier = 0` together with
    /// `clip_norm = ∞` disables the mechanism (useful as a reference).
    pub fn custom(noise_multiplier: f64, clip_norm: f64, delta: f64, budget: f64) -> Result<PrivacyRegime> {
        let r = PrivacyRegime {
            name: RegimeName::Custom,
            noise_multiplier,
            clip_norm,
            delta,
            budget_local: budget,
            budget_federated: budget,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.noise_multiplier >= 0.0
            && !self.noise_multiplier.is_nan()
            && self.clip_norm > 0.0
            && self.delta > 0.0
            && self.delta < 1.0
            && self.budget_local > 0.0
            && self.budget_federated > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid privacy regime {self:?}")))
        }
    }

    pub fn budget(&self, federated: bool) -> f64 {
        if federated {
            self.budget_federated
        } else {
            self.budget_local
        }
    }
}
