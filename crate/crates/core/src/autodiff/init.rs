use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// How a parameter segment is drawn at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// N(0, 1/400), used for mechanistic parameter offsets.
    Mechanistic,
    StandardNormal,
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    FanInUniform {
        fan_in: usize,
    },
    Zeros,
}

impl InitScheme {
    pub fn from_name(name: &str, fan_in: usize) -> Result<Self> {
        match name {
            "mechanistic" => Ok(Self::Mechanistic),
            "standard_normal" => Ok(Self::StandardNormal),
            "fan_in_uniform" => Ok(Self::FanInUniform { fan_in }),
            "zeros" => Ok(Self::Zeros),
            other => Err(Error::Config(format!("unknown init scheme '{other}'"))),
        }
    }

    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        match *self {
            Self::Mechanistic => rng.normal(0.0, 1.0 / 20.0),
            Self::StandardNormal => rng.normal(0.0, 1.0),
            Self::FanInUniform { fan_in } => {
                let k = 1.0 / (fan_in.max(1) as f64).sqrt();
                rng.uniform(-k, k)
            }
            Self::Zeros => 0.0,
        }
    }

    pub fn fill(&self, out: &mut [f64], rng: &mut SeededRng) {
        for v in out {
            *v = self.sample(rng);
        }
    }
}

/// Fills the named segment in place.
pub fn init_segment(params: &mut ParamVector, name: &str, scheme: InitScheme, rng: &mut SeededRng) -> Result<()> {
    scheme.fill(params.slice_mut(name)?, rng);
    Ok(())
}
