use serde::{Deserialize, Serialize};

use super::Episode;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Which input layout a data set uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// Inputs `[x1, x2]`.
    Synthetic,
    /// Inputs `[insulin, carbs, hr, steps]`.
    Glucose,
}

impl Schema {
    pub fn input_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            Schema::Synthetic => &["x1", "x2"],
            Schema::Glucose => &["insulin", "carbs", "hr", "steps"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    pub fn categories(self) -> &'static [Category] {
        match self {
            Schema::Synthetic => &[Category::RaiseX1, Category::RaiseX2, Category::MixedSynthetic],
            Schema::Glucose => &[Category::Carbs, Category::Insulin, Category::MixedCarbInsulin, Category::HrProfiles],
        }
    }

    pub fn detect(input_names: &[String]) -> Option<Self> {
        [Schema::Synthetic, Schema::Glucose].into_iter().find(|s| s.input_names() == input_names)
    }
}

/// A family of three counterfactual control modifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    /// x1 raised by 0, +1, +2 at every prediction step.
    #[serde(rename = "raise_x1_0_1_2")]
    RaiseX1,
    #[serde(rename = "raise_x2_0_1_2")]
    RaiseX2,
    /// No change, +1 on x1, +1 on x2.
    #[serde(rename = "mixed_none_x1_x2")]
    MixedSynthetic,
    /// 0, 50, 100 g carbohydrate at the first prediction step.
    #[serde(rename = "carbs_0_50_100")]
    Carbs,
    /// 0, 2.5, 5 units of insulin spread evenly over the window.
    #[serde(rename = "insulin_0_2p5_5")]
    Insulin,
    /// No change, 50 g carbohydrate, 10 units of insulin.
    #[serde(rename = "mixed_carb_insulin")]
    MixedCarbInsulin,
    /// Aerobic, interval and resistance heart-rate profiles.
    #[serde(rename = "hr_profiles")]
    HrProfiles,
}

/// Heart-rate traces (beats/min) used by [`Category::HrProfiles`].
fn hr_profile(kind: usize, step: usize) -> f64 {
    match kind {
        0 => 140.0,
        1 => {
            if step % 2 == 0 {
                165.0
            } else {
                110.0
            }
        }
        _ => 115.0,
    }
}

impl Category {
    pub fn k(self) -> usize {
        3
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::RaiseX1 => "raise_x1_0_1_2",
            Category::RaiseX2 => "raise_x2_0_1_2",
            Category::MixedSynthetic => "mixed_none_x1_x2",
            Category::Carbs => "carbs_0_50_100",
            Category::Insulin => "insulin_0_2p5_5",
            Category::MixedCarbInsulin => "mixed_carb_insulin",
            Category::HrProfiles => "hr_profiles",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::Config(format!("unknown intervention category '{s}'")))
    }
}

/// Glucose-schema labels follow the direction of each control's effect on
/// glucose: more carbohydrate raises it, more insulin lowers it, and the
/// lowest-intensity activity profile lowers it least.
pub fn glucose_rule_label(category: Category) -> Option<usize> {
    match category {
        Category::Carbs => Some(2),
        Category::Insulin => Some(0),
        Category::MixedCarbInsulin => Some(1),
        Category::HrProfiles => Some(2),
        _ => None,
    }
}

/// K counterfactual versions of an episode's future controls and the index
/// of the one with the highest score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSet {
    pub episode_id: String,
    pub category: Category,
    /// `variants[i][step][input]`.
    pub variants: Vec<Vec<Vec<f64>>>,
    pub true_label: usize,
}

impl InterventionSet {
    pub fn k(&self) -> usize {
        self.variants.len()
    }

    pub fn validate(&self, q: usize, n_inputs: usize) -> Result<()> {
        if self.k() < 2 || self.true_label >= self.k() {
            return Err(Error::Schema(format!(
                "intervention set for {} has {} variants and label {}",
                self.episode_id,
                self.k(),
                self.true_label
            )));
        }
        if self.variants.iter().any(|v| v.len() != q || v.iter().any(|r| r.len() != n_inputs)) {
            return Err(Error::Schema(format!("intervention set for {} has wrong variant shape", self.episode_id)));
        }
        Ok(())
    }
}

fn column(input_names: &[String], name: &str, category: Category) -> Result<usize> {
    input_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Input(format!("category {} needs an input named '{name}'", category.name())))
}

/// Builds the three variants of `category` (drawn uniformly from the
/// schema's categories when `None`). The label is the category's rule
/// label; synthetic data overrides it with the integration oracle.
pub fn build_interventions(
    episode: &Episode,
    input_names: &[String],
    category: Option<Category>,
    rng: &mut SeededRng,
) -> Result<InterventionSet> {
    let category = match category {
        Some(c) => c,
        None => {
            let schema = Schema::detect(input_names)
                .ok_or_else(|| Error::Input("cannot infer intervention categories for these inputs".into()))?;
            let cats = schema.categories();
            cats[rng.below(cats.len())]
        }
    };
    let q = episode.future_x.len();
    let base = &episode.future_x;
    let with = |edits: &dyn Fn(&mut Vec<Vec<f64>>)| {
        let mut v = base.clone();
        edits(&mut v);
        v
    };
    let add_all = |c: usize, amount: f64| move |v: &mut Vec<Vec<f64>>| v.iter_mut().for_each(|r| r[c] += amount);
    let variants = match category {
        Category::RaiseX1 | Category::RaiseX2 => {
            let c = column(input_names, if category == Category::RaiseX1 { "x1" } else { "x2" }, category)?;
            (0..3).map(|i| with(&add_all(c, i as f64))).collect()
        }
        Category::MixedSynthetic => {
            let c1 = column(input_names, "x1", category)?;
            let c2 = column(input_names, "x2", category)?;
            vec![base.clone(), with(&add_all(c1, 1.0)), with(&add_all(c2, 1.0))]
        }
        Category::Carbs => {
            let c = column(input_names, "carbs", category)?;
            [0.0, 50.0, 100.0].iter().map(|g| with(&|v: &mut Vec<Vec<f64>>| v[0][c] += g)).collect()
        }
        Category::Insulin => {
            let c = column(input_names, "insulin", category)?;
            [0.0, 2.5, 5.0].iter().map(|u| with(&add_all(c, u / q as f64))).collect()
        }
        Category::MixedCarbInsulin => {
            let cc = column(input_names, "carbs", category)?;
            let ci = column(input_names, "insulin", category)?;
            vec![base.clone(), with(&|v: &mut Vec<Vec<f64>>| v[0][cc] += 50.0), with(&add_all(ci, 10.0 / q as f64))]
        }
        Category::HrProfiles => {
            let c = column(input_names, "hr", category)?;
            (0..3)
                .map(|kind| {
                    with(&|v: &mut Vec<Vec<f64>>| {
                        v.iter_mut().enumerate().for_each(|(t, r)| r[c] = hr_profile(kind, t))
                    })
                })
                .collect()
        }
    };
    let true_label = match category {
        Category::RaiseX1 => 2,
        Category::RaiseX2 => 0,
        Category::MixedSynthetic => 1,
        c => glucose_rule_label(c).expect("glucose category"),
    };
    Ok(InterventionSet { episode_id: episode.id.clone(), category, variants, true_label })
}
