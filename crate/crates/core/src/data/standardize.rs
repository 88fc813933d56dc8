use serde::{Deserialize, Serialize};

use super::{Episode, InterventionSet};
use crate::error::{Error, Result};

/// Per-feature z-scoring; feature 0 is the observation, the rest are
/// inputs. Statistics cover every observation and input value of the
/// episodes they were fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(episodes: &[Episode]) -> Result<Self> {
        let first = episodes.first().ok_or_else(|| Error::Input("cannot standardize an empty split".into()))?;
        let nf = first.n_inputs() + 1;
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); nf];
        for e in episodes {
            for row in &e.context {
                for (c, v) in row.iter().enumerate() {
                    cols[c].push(*v);
                }
            }
            for row in &e.future_x {
                for (c, v) in row.iter().enumerate() {
                    cols[c + 1].push(*v);
                }
            }
            cols[0].extend(&e.targets);
        }
        let mut mean = Vec::with_capacity(nf);
        let mut std = Vec::with_capacity(nf);
        for (c, v) in cols.iter().enumerate() {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            if !(s > 1e-12 * m.abs().max(1.0)) {
                return Err(Error::Input(format!("feature {c} has zero variance on the training split")));
            }
            mean.push(m);
            std.push(s);
        }
        Ok(Self { mean, std })
    }

    pub fn identity(n_features: usize) -> Self {
        Self { mean: vec![0.0; n_features], std: vec![1.0; n_features] }
    }

    pub fn y(&self, v: f64) -> f64 {
        (v - self.mean[0]) / self.std[0]
    }

    pub fn y_inv(&self, v: f64) -> f64 {
        v * self.std[0] + self.mean[0]
    }

    pub fn x(&self, k: usize, v: f64) -> f64 {
        (v - self.mean[k + 1]) / self.std[k + 1]
    }

    pub fn x_inv(&self, k: usize, v: f64) -> f64 {
        v * self.std[k + 1] + self.mean[k + 1]
    }

    pub fn x_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(k, v)| self.x(k, *v)).collect()
    }

    pub fn apply(&self, e: &Episode) -> Episode {
        let mut out = e.clone();
        for row in &mut out.context {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        for row in &mut out.future_x {
            *row = self.x_row(row);
        }
        out.y0 = self.y(e.y0);
        out.targets = e.targets.iter().map(|v| self.y(*v)).collect();
        out
    }

    pub fn invert(&self, e: &Episode) -> Episode {
        let mut out = e.clone();
        for row in &mut out.context {
            for (c, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[c] + self.mean[c];
            }
        }
        for row in &mut out.future_x {
            for (k, v) in row.iter_mut().enumerate() {
                *v = self.x_inv(k, *v);
            }
        }
        out.y0 = self.y_inv(e.y0);
        out.targets = e.targets.iter().map(|v| self.y_inv(*v)).collect();
        out
    }

    pub fn apply_set(&self, s: &InterventionSet) -> InterventionSet {
        let mut out = s.clone();
        for v in &mut out.variants {
            for row in v.iter_mut() {
                *row = self.x_row(row);
            }
        }
        out
    }
}
