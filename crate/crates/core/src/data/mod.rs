//! Episodes, intervention sets, standardization, synthetic generation and
//! the JSON Lines file formats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

mod interventions;
mod io;
mod standardize;
mod synthetic;

pub use interventions::{build_interventions, glucose_rule_label, Category, InterventionSet, Schema};
pub use io::{
    read_episodes, read_interventions, write_episodes, write_interventions, DataDir, Manifest, EPISODES_SCHEMA,
    INTERVENTIONS_SCHEMA,
};
pub use standardize::Standardizer;
pub use synthetic::{gen_synthetic, label_set, SyntheticConfig, SyntheticData, SyntheticDraw, SyntheticEpisode};

/// One sequence: a context window, the current observation and the
/// controls and observations of the prediction window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub dt_minutes: f64,
    /// Rows of `[y, x_1, .., x_n]`.
    pub context: Vec<Vec<f64>>,
    pub y0: f64,
    /// Rows of `[x_1, .., x_n]`, one per prediction step.
    pub future_x: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Episode {
    pub fn n_inputs(&self) -> usize {
        self.future_x.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schema(format!("episode {}: {m}", self.id)));
        if self.context.is_empty() {
            return bad("empty context".into());
        }
        if self.targets.is_empty() || self.future_x.len() != self.targets.len() {
            return bad(format!("{} future input rows for {} targets", self.future_x.len(), self.targets.len()));
        }
        let n = self.n_inputs();
        if self.future_x.iter().any(|r| r.len() != n) {
            return bad("ragged future inputs".into());
        }
        if self.context.iter().any(|r| r.len() != n + 1) {
            return bad(format!("context rows must have {} columns", n + 1));
        }
        let all = self.context.iter().flatten().chain(self.future_x.iter().flatten()).chain(&self.targets);
        if all.chain(std::iter::once(&self.y0)).any(|v| !v.is_finite()) {
            return bad("missing or non-finite value".into());
        }
        Ok(())
    }
}

/// Episodes that share input names.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub input_names: Vec<String>,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            input_names: self.input_names.clone(),
            episodes: idx.iter().map(|&i| self.episodes[i].clone()).collect(),
        }
    }
}

/// Label corruption: each label moves to `(label + 1) mod k` with
/// probability `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub rate: f64,
    pub seed: u64,
}

pub fn corrupt(labels: &[usize], k: usize, cfg: &CorruptionConfig) -> Vec<usize> {
    let mut rng = SeededRng::derived(cfg.seed, &[0xC0]);
    labels.iter().map(|&l| if rng.bernoulli(cfg.rate) { (l + 1) % k } else { l }).collect()
}

/// Applies [`corrupt`] to the labels of a list of intervention sets.
pub fn corrupt_sets(sets: &[InterventionSet], cfg: &CorruptionConfig) -> Vec<InterventionSet> {
    let mut rng = SeededRng::derived(cfg.seed, &[0xC0]);
    sets.iter()
        .map(|s| {
            let mut s = s.clone();
            if rng.bernoulli(cfg.rate) {
                s.true_label = (s.true_label + 1) % s.k();
            }
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corruption_rates() {
        let labels: Vec<usize> = (0..10_000).map(|i| i % 3).collect();
        let same = corrupt(&labels, 3, &CorruptionConfig { rate: 0.0, seed: 1 });
        assert_eq!(same, labels);
        assert_eq!(corrupt(&[2], 3, &CorruptionConfig { rate: 1.0, seed: 1 }), vec![0]);
        let c = corrupt(&labels, 3, &CorruptionConfig { rate: 0.2, seed: 9 });
        let frac = c.iter().zip(&labels).filter(|(a, b)| a != b).count() as f64 / labels.len() as f64;
        assert!((frac - 0.2).abs() < 0.01, "{frac}");
    }

    #[test]
    fn validate_catches_ragged_rows() {
        let mut e = Episode {
            id: "e".into(),
            dt_minutes: 5.0,
            context: vec![vec![0.0, 1.0]],
            y0: 0.0,
            future_x: vec![vec![1.0]],
            targets: vec![0.5],
        };
        assert!(e.validate().is_ok());
        e.context[0].pop();
        assert!(matches!(e.validate(), Err(Error::Schema(_))));
    }
}
