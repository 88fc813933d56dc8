use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HybridConfig, HyperParams, Variant};

/// Hyperparameter points per variant, in search order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridSpec {
    pub grids: IndexMap<Variant, Vec<HyperParams>>,
}

fn product(ns: &[usize], ms: &[usize], ds: &[usize], as_: &[f64]) -> Vec<HyperParams> {
    let mut out = Vec::new();
    for &d in ds {
        for &n in ns {
            for &m in ms {
                for &a in as_ {
                    out.push(HyperParams { n, m, d, a });
                }
            }
        }
    }
    out
}

/// The search grids used for each variant. `synthetic` selects the smaller
/// grids for the one-state synthetic system.
pub fn default_grid(synthetic: bool) -> GridSpec {
    let mut g = IndexMap::new();
    g.insert(Variant::Mechanistic, vec![HyperParams { n: 0, m: 0, d: 0, a: 0.0 }]);
    if synthetic {
        g.insert(Variant::Lp, product(&[2, 3], &[16, 32], &[2, 4], &[0.0]));
        g.insert(Variant::Lpsc, product(&[2, 3], &[16, 32], &[8, 16], &[0.0]));
        g.insert(Variant::Mnode, product(&[2, 3], &[16, 32], &[0], &[0.0]));
        g.insert(Variant::Bnode, product(&[2, 3], &[64], &[2, 3], &[0.0, 0.2]));
        g.insert(Variant::Lstm, product(&[2, 3], &[8, 16], &[0], &[0.0, 0.2]));
    } else {
        g.insert(Variant::Lp, product(&[2, 3, 4], &[16, 32, 48], &[8, 12, 16], &[0.0]));
        g.insert(Variant::Lpsc, product(&[2, 3], &[16, 32], &[8, 16], &[0.0]));
        g.insert(Variant::Mnode, product(&[2, 3], &[16, 24, 32], &[0], &[0.0]));
        g.insert(Variant::Bnode, product(&[2, 3], &[32, 48, 60], &[4, 5, 6], &[0.0, 0.1, 0.2]));
        g.insert(Variant::Lstm, product(&[2, 3, 4], &[8, 12, 16], &[0], &[0.0, 0.1, 0.2]));
    }
    GridSpec { grids: g }
}

impl GridSpec {
    pub fn points(&self, v: Variant) -> Result<&[HyperParams]> {
        match self.grids.get(&v) {
            Some(p) if !p.is_empty() => Ok(p),
            _ => Err(Error::Config(format!("grid has no points for {}", v.name()))),
        }
    }

    /// Rejects any point whose model reaches the parameter cap.
    pub fn check(&self, base: impl Fn(Variant) -> HybridConfig) -> Result<()> {
        for (v, pts) in &self.grids {
            let cfg = base(*v);
            for h in pts {
                cfg.with_hyper(h)
                    .check_cap()
                    .map_err(|e| Error::Config(format!("{} grid point {h:?}: {e}", v.name())))?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path, base: impl Fn(Variant) -> HybridConfig) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let g: GridSpec = serde_json::from_str(&s)?;
        g.check(base)?;
        Ok(g)
    }
}
