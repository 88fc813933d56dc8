//! Mechanistic vector fields: the UVA/Padova S2013 glucose-insulin model,
//! its reduced nine-state form, and the one-state synthetic system.
//!
//! Fields are generic over [`Scalar`] so the same code runs on plain `f64`
//! for simulation and on tape variables (one row per sequence) for
//! training. Parameters are raw values with no positivity transform.
//!
//! Symbols that collide with the hybrid-model notation are renamed:
//! meal shape `alpha`/`beta` become `kappa_a`/`kappa_b`, `b`/`c` become
//! `shape_b`/`shape_c`, `f` is `f_frac`, the glucagon action rate `k_H` is
//! `k_H_act`, glucagon clearance `n` is `n_clr`, and the glucagon secretion
//! constants `rho`, `sigma`, `sigma_2`, `SR_H^b`, `eta` carry a `_g` suffix.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

mod full;
mod graphs;
mod reduced;
mod synthetic;

pub use full::{uva_full_field, Diagnostics, UvaFullParams, FULL_STATES};
pub use graphs::{activity_start_graph, uva_graphs, UvaGraphs, UVA_INPUTS};
pub use reduced::{uva_reduced_field, UvaReducedParams, REDUCED_STATES};
pub use synthetic::{synthetic_field, SyntheticParams};

macro_rules! param_set {
    ($(#[$meta:meta])* $name:ident { $($field:ident => $key:literal),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name<T = f64> {
            $(pub $field: T,)*
        }

        impl<T: Clone> $name<T> {
            pub const NAMES: &'static [&'static str] = &[$($key),*];

            pub fn from_slice(v: &[T]) -> $crate::error::Result<Self> {
                if v.len() != Self::NAMES.len() {
                    return Err($crate::error::Error::Shape(format!(
                        "{} expects {} values, got {}",
                        stringify!($name),
                        Self::NAMES.len(),
                        v.len()
                    )));
                }
                let mut it = v.iter().cloned();
                Ok(Self { $($field: it.next().unwrap(),)* })
            }

            pub fn to_vec(&self) -> Vec<T> {
                vec![$(self.$field.clone()),*]
            }

            pub fn map<U>(&self, f: impl Fn(&T) -> U) -> $name<U> {
                $name { $($field: f(&self.$field),)* }
            }
        }

        impl serde::Serialize for $name<f64> {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                use serde::ser::SerializeMap;
                let mut m = s.serialize_map(Some(Self::NAMES.len()))?;
                $(m.serialize_entry($key, &self.$field)?;)*
                m.end()
            }
        }

        impl<'de> serde::Deserialize<'de> for $name<f64> {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                use serde::de::Error as _;
                let mut m = indexmap::IndexMap::<String, f64>::deserialize(d)?;
                let out = Self {
                    $($field: m.shift_remove($key).ok_or_else(|| D::Error::missing_field($key))?,)*
                };
                if let Some(k) = m.keys().next() {
                    return Err(D::Error::unknown_field(k, Self::NAMES));
                }
                Ok(out)
            }
        }
    };
}
pub(crate) use param_set;

/// Gastric emptying rate.
#[allow(clippy::too_many_arguments)]
pub fn k_empt<T: Scalar>(
    q_sto: &T,
    d: &T,
    k_min: &T,
    k_max: &T,
    kappa_a: &T,
    kappa_b: &T,
    shape_b: &T,
    shape_c: &T,
) -> T {
    let a = (kappa_a.clone() * q_sto.clone() - kappa_a.clone() * shape_b.clone() * d.clone()).tanh();
    let b = (kappa_b.clone() * q_sto.clone() - kappa_b.clone() * shape_c.clone() * d.clone()).tanh();
    k_min.clone() + (k_max.clone() - k_min.clone()) * ((a - b + 2.0) / 2.0)
}

/// Hypoglycemia risk with the magnitude of the log ratio raised to `2 r2`
/// (the printed power of a negative base is not real for fractional `r2`).
/// Below `g_th` the value plateaus.
pub fn risk<T: Scalar>(g: &T, g_b: &T, g_th: &T, r2: &T) -> T {
    let u = (g.max(g_th).ln() - g_b.ln()).min(&g.lift(0.0));
    u.pow_abs(&(r2.clone() * 2.0)) * 10.0
}

/// Plain-number hypoglycemia risk; rejects non-positive glucose.
pub fn risk_factor(g: f64, g_b: f64, g_th: f64, r2: f64) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::Domain(format!("risk factor needs positive glucose, got {g}")));
    }
    Ok(risk(&g, &g_b, &g_th, &r2))
}

/// Size `D` of the current carbohydrate event, fed by the carbohydrate
/// input one step at a time. Values at or below `zero_level` count as no
/// intake; `D` resets to 0 between events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealTracker {
    pub d_active: f64,
    pub in_meal: bool,
    pub zero_level: f64,
}

impl Default for MealTracker {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl MealTracker {
    pub fn new(zero_level: f64) -> Self {
        Self { d_active: 0.0, in_meal: false, zero_level }
    }

    /// Registers the carbohydrate rate for a step of length `dt` and
    /// returns the resulting `D`.
    pub fn update(&mut self, carbs: f64, dt: f64) -> f64 {
        let excess = carbs - self.zero_level;
        if excess > 1e-12 {
            if !self.in_meal {
                self.d_active = 0.0;
                self.in_meal = true;
            }
            self.d_active += excess * dt;
        } else {
            self.in_meal = false;
            self.d_active = 0.0;
        }
        self.d_active
    }

    pub fn d(&self) -> f64 {
        self.d_active
    }
}

/// Exogenous rates seen by the UVA fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldInputs {
    /// Carbohydrate ingestion rate.
    pub carbs: f64,
    /// Insulin infusion rate.
    pub insulin: f64,
    /// Subcutaneous glucagon infusion rate; full model only.
    #[serde(default)]
    pub glucagon: f64,
}

/// Which mechanistic model a hybrid uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechKind {
    Synthetic,
    Reduced,
    Full,
}

impl MechKind {
    pub fn n_states(self) -> usize {
        match self {
            Self::Synthetic => 1,
            Self::Reduced => REDUCED_STATES.len(),
            Self::Full => FULL_STATES.len(),
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Self::Synthetic => SyntheticParams::<f64>::NAMES,
            Self::Reduced => UvaReducedParams::<f64>::NAMES,
            Self::Full => UvaFullParams::<f64>::NAMES,
        }
    }

    pub fn n_params(self) -> usize {
        self.param_names().len()
    }

    pub fn state_names(self) -> Vec<String> {
        match self {
            Self::Synthetic => vec!["y".into()],
            Self::Reduced => REDUCED_STATES.iter().map(|s| s.to_string()).collect(),
            Self::Full => FULL_STATES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Evaluates the field. `x` holds the model's inputs: `[x1, x2]` for the
    /// synthetic system, `[carbs, insulin]` for the UVA models. `d` is the
    /// meal size (ignored by the synthetic system).
    pub fn field<T: Scalar>(self, s: &[T], x: &[T], d: &T, beta: &[T]) -> Result<Vec<T>> {
        if s.len() != self.n_states() {
            return Err(Error::Shape(format!("{self:?} field expects {} states, got {}", self.n_states(), s.len())));
        }
        if x.len() != 2 {
            return Err(Error::Shape(format!("{self:?} field expects 2 inputs, got {}", x.len())));
        }
        match self {
            Self::Synthetic => Ok(vec![synthetic::field(&s[0], &x[0], &x[1], &SyntheticParams::from_slice(beta)?)]),
            Self::Reduced => Ok(reduced::field(s, &x[0], &x[1], d, &UvaReducedParams::from_slice(beta)?)),
            Self::Full => {
                let zero = s[0].lift(0.0);
                Ok(full::field(s, &x[0], &x[1], &zero, d, &UvaFullParams::from_slice(beta)?).0)
            }
        }
    }

    /// Whether the model consumes a meal size.
    pub fn uses_meal(self) -> bool {
        !matches!(self, Self::Synthetic)
    }
}

pub(crate) fn check_state(s: &[f64]) -> Result<()> {
    if let Some(i) = s.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite state entry {i}")));
    }
    Ok(())
}

/// Euler simulation of a plain-number field with an optional clamp at zero
/// for the listed state indices.
pub fn simulate(
    mut f: impl FnMut(&[f64], usize) -> Result<Vec<f64>>,
    s0: &[f64],
    steps: usize,
    dt: f64,
    clamp: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let mut s = s0.to_vec();
    let mut out = vec![s.clone()];
    for k in 0..steps {
        let ds = f(&s, k)?;
        for (v, d) in s.iter_mut().zip(&ds) {
            *v += dt * d;
        }
        for &i in clamp {
            s[i] = s[i].max(0.0);
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k + 1 });
        }
        out.push(s.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn k_empt_degenerate_and_empty_stomach() {
        let v = |x: f64| x;
        let k = k_empt(&500.0, &30.0, &v(0.02), &v(0.02), &0.001, &0.002, &0.8, &0.1);
        assert_eq!(k, 0.02);
        let k = k_empt(&0.0, &0.0, &0.01, &0.05, &0.001, &0.002, &0.8, &0.1);
        assert_eq!(k, 0.05);
    }

    proptest! {
        #[test]
        fn k_empt_in_range(q in 0.0..1e5f64, d in 0.0..200.0f64, kmin in 0.0..0.05f64, span in 0.0..0.05f64,
                           ka in 1e-5..1e-2f64, kb in 1e-5..1e-2f64, b in 0.0..1.0f64, c in 0.0..1.0f64) {
            let kmax = kmin + span;
            let k = k_empt(&q, &d, &kmin, &kmax, &ka, &kb, &b, &c);
            prop_assert!(k >= kmin - 1e-15 && k <= kmin + 2.0 * span + 1e-15);
        }
    }

    #[test]
    fn risk_pieces() {
        let (gb, gth, r2) = (120.0, 60.0, 0.81);
        assert_eq!(risk_factor(gb, gb, gth, r2).unwrap(), 0.0);
        assert_eq!(risk_factor(200.0, gb, gth, r2).unwrap(), 0.0);
        assert_eq!(risk_factor(gth / 2.0, gb, gth, r2).unwrap(), risk_factor(gth / 4.0, gb, gth, r2).unwrap());
        let expect = 10.0 * (90f64.ln() - gb.ln()).abs().powf(2.0 * r2);
        assert!((risk_factor(90.0, gb, gth, r2).unwrap() - expect).abs() < 1e-12);
        assert!(matches!(risk_factor(0.0, gb, gth, r2), Err(Error::Domain(_))));
    }

    #[test]
    fn risk_is_continuous_at_breakpoints() {
        let (gb, gth, r2) = (120.0, 60.0, 0.81);
        let r = |g| risk_factor(g, gb, gth, r2).unwrap();
        assert!((r(gb - 1e-9) - r(gb + 1e-9)).abs() < 1e-9);
        assert!((r(gth - 1e-9) - r(gth + 1e-9)).abs() < 1e-9);
    }

    #[test]
    fn meal_tracker_accumulates_contiguous_events() {
        let mut m = MealTracker::default();
        assert_eq!(m.update(0.0, 1.0), 0.0);
        assert_eq!(m.update(10.0, 1.0), 10.0);
        assert_eq!(m.update(5.0, 1.0), 15.0);
        assert_eq!(m.update(0.0, 1.0), 0.0);
        assert_eq!(m.update(7.0, 1.0), 7.0);
    }
}
