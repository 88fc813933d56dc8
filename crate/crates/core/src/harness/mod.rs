//! Training loops, grid search, repeated nested cross-validation and
//! reporting.

use std::collections::HashMap;

use crate::data::{Episode, InterventionSet};
use crate::error::{Error, Result};

mod cv;
mod grid;
mod metrics;
pub(crate) mod train;

pub use cv::{
    evaluate_test, grid_search, nested_cv, nested_cv_with, outer_folds, write_run_dir, CachedFitter, CvConfig, Fitter,
    FoldEval, FoldRecord, HybridFitter, RunReport,
};
pub use grid::{default_grid, GridSpec};
pub use metrics::{mean_stderr, percentile, Aggregates};
pub use train::{train, train_lpsc, EpochRecord, History, TrainConfig};

/// Episodes with their intervention sets, aligned by position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub episodes: Vec<Episode>,
    pub sets: Vec<Option<InterventionSet>>,
}

impl Split {
    /// Pairs each episode with the set carrying its id, if any.
    pub fn new(episodes: Vec<Episode>, sets: Vec<InterventionSet>) -> Result<Self> {
        let mut by_id: HashMap<String, InterventionSet> = HashMap::new();
        for s in sets {
            if by_id.insert(s.episode_id.clone(), s).is_some() {
                return Err(Error::Schema("two intervention sets for one episode".into()));
            }
        }
        let sets = episodes.iter().map(|e| by_id.remove(&e.id)).collect();
        if let Some(id) = by_id.keys().next() {
            return Err(Error::Schema(format!("intervention set for unknown episode {id}")));
        }
        Ok(Self { episodes, sets })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            episodes: idx.iter().map(|&i| self.episodes[i].clone()).collect(),
            sets: idx.iter().map(|&i| self.sets[i].clone()).collect(),
        }
    }

    pub fn concat(parts: &[&Split]) -> Self {
        let mut out = Split::default();
        for p in parts {
            out.episodes.extend(p.episodes.iter().cloned());
            out.sets.extend(p.sets.iter().cloned());
        }
        out
    }

    pub fn ids(&self) -> Vec<&str> {
        self.episodes.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn n_sets(&self) -> usize {
        self.sets.iter().flatten().count()
    }
}

#[cfg(test)]
mod tests;
