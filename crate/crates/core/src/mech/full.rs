//! Twenty-state UVA/Padova S2013 model.
//!
//! Renal excretion `E` is algebraic and consumed as a rate by `G_p`; the
//! `E_acc` state integrates it for bookkeeping only. The liver insulin
//! compartment is `I_l` throughout.

use serde::{Deserialize, Serialize};

use super::{check_state, k_empt, param_set, risk, FieldInputs, MealTracker};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

pub const FULL_STATES: [&str; 20] = [
    "G_p", "G_t", "I_p", "I_l", "Q_sto1", "Q_sto2", "Q_gut", "X_L", "I_r", "X_H", "X", "E_acc", "I_sc1", "I_sc2",
    "G_s", "Hg", "SR_s", "SR_d", "H_sc1", "H_sc2",
];

pub(crate) mod idx {
    pub const G_P: usize = 0;
    pub const G_T: usize = 1;
    pub const I_P: usize = 2;
    pub const I_L: usize = 3;
    pub const Q_STO1: usize = 4;
    pub const Q_STO2: usize = 5;
    pub const Q_GUT: usize = 6;
    pub const X_L: usize = 7;
    pub const I_R: usize = 8;
    pub const X_H: usize = 9;
    pub const X: usize = 10;
    pub const E_ACC: usize = 11;
    pub const I_SC1: usize = 12;
    pub const I_SC2: usize = 13;
    pub const G_S: usize = 14;
    pub const HG: usize = 15;
    pub const SR_S: usize = 16;
    pub const SR_D: usize = 17;
    pub const H_SC1: usize = 18;
    pub const H_SC2: usize = 19;
}

param_set! {
    UvaFullParams {
        k1 => "k1", k2 => "k2", v_g => "V_G",
        m1 => "m1", m2 => "m2", m3 => "m3", m4 => "m4", v_i => "V_I",
        k_gri => "k_gri", k_abs => "k_abs", k_min => "k_min", k_max => "k_max",
        kappa_a => "kappa_a", kappa_b => "kappa_b", shape_b => "shape_b", shape_c => "shape_c",
        f_frac => "f_frac", bw => "BW",
        k_p1 => "k_p1", k_p2 => "k_p2", k_p3 => "k_p3", xi => "xi", k_i => "k_i", k_h_act => "k_H_act", h_b => "H_b",
        f_cns => "F_cns", v_m0 => "V_m0", v_mx => "V_mx", k_m0 => "K_m0", p_2u => "p_2U", i_b => "I_b",
        r1 => "r1", r2 => "r2", g_b => "G_b", g_th => "G_th",
        k_e1 => "k_e1", k_e2 => "k_e2",
        k_a1 => "k_a1", k_a2 => "k_a2", k_d => "k_d",
        t_s => "T_s",
        n_clr => "n_clr", rho_g => "rho_g", sigma_g => "sigma_g", sigma2_g => "sigma2_g", sr_b => "SR_b",
        eta_g => "eta_g", k_h1 => "k_h1", k_h2 => "k_h2", k_h3 => "k_h3",
    }
}

const REST_GP: f64 = 250.0;
const REST_GT: f64 = 190.0;

impl UvaFullParams<f64> {
    /// Illustrative constants, not fitted or published values. `k_p1`,
    /// `V_m0`, `G_b` and `SR_b` are solved so that
    /// [`Self::resting_state`] is a fixed point under
    /// [`Self::basal_insulin`].
    pub fn resting_default() -> Self {
        let mut p = Self {
            k1: 0.065,
            k2: 0.079,
            v_g: 1.88,
            m1: 0.19,
            m2: 0.484,
            m3: 0.285,
            m4: 0.194,
            v_i: 0.05,
            k_gri: 0.0558,
            k_abs: 0.057,
            k_min: 0.008,
            k_max: 0.0558,
            kappa_a: 0.00013,
            kappa_b: 0.00236,
            shape_b: 0.82,
            shape_c: 0.01,
            f_frac: 0.9,
            bw: 78.0,
            k_p1: 0.0,
            k_p2: 0.0021,
            k_p3: 0.009,
            xi: 0.0046,
            k_i: 0.0079,
            k_h_act: 0.093,
            h_b: 100.0,
            f_cns: 1.0,
            v_m0: 0.0,
            v_mx: 0.047,
            k_m0: 225.59,
            p_2u: 0.0331,
            i_b: 25.0,
            r1: 1.44,
            r2: 0.81,
            g_b: 0.0,
            g_th: 60.0,
            k_e1: 0.0005,
            k_e2: 339.0,
            k_a1: 0.0018,
            k_a2: 0.0182,
            k_d: 0.0164,
            t_s: 0.1,
            n_clr: 0.22,
            rho_g: 0.57,
            sigma_g: 0.41,
            sigma2_g: 0.1,
            sr_b: 0.0,
            eta_g: 0.05,
            k_h1: 0.0164,
            k_h2: 0.0018,
            k_h3: 0.0182,
        };
        p.g_b = REST_GP / p.v_g;
        let u_id = p.k1 * REST_GP - p.k2 * REST_GT;
        p.v_m0 = u_id * (p.k_m0 + REST_GT) / REST_GT;
        p.k_p1 = p.k_p2 * REST_GP + p.k_p3 * p.i_b + p.f_cns + u_id;
        p.sr_b = p.n_clr * p.h_b - p.sigma2_g * (p.g_th - p.g_b);
        p
    }

    pub fn resting_state(&self) -> Vec<f64> {
        let ip = self.i_b * self.v_i;
        let il = self.m2 * ip / (self.m1 + self.m3);
        let iir = self.basal_insulin();
        let isc1 = iir / (self.k_d + self.k_a1);
        let isc2 = self.k_d * isc1 / self.k_a2;
        let mut s = vec![0.0; 20];
        s[idx::G_P] = REST_GP;
        s[idx::G_T] = REST_GT;
        s[idx::I_P] = ip;
        s[idx::I_L] = il;
        s[idx::X_L] = self.i_b;
        s[idx::I_R] = self.i_b;
        s[idx::I_SC1] = isc1;
        s[idx::I_SC2] = isc2;
        s[idx::G_S] = REST_GP / self.v_g;
        s[idx::HG] = self.h_b;
        s[idx::SR_S] = self.n_clr * self.h_b;
        s
    }

    pub fn basal_insulin(&self) -> f64 {
        let ip = self.i_b * self.v_i;
        ip * (self.m2 + self.m4 - self.m1 * self.m2 / (self.m1 + self.m3))
    }
}

/// Algebraic quantities reported alongside the derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<T = f64> {
    pub egp: T,
    pub ra: T,
    pub u_id: T,
    pub e: T,
    pub g: T,
    pub i: T,
    pub ra_h: T,
}

pub(crate) fn field<T: Scalar>(
    s: &[T],
    carbs: &T,
    insulin: &T,
    glucagon: &T,
    d: &T,
    p: &UvaFullParams<T>,
) -> (Vec<T>, Diagnostics<T>) {
    use idx::*;
    let c = |v: &T| v.clone();
    let zero = s[0].lift(0.0);
    let g = c(&s[G_P]) / c(&p.v_g);
    let i = c(&s[I_P]) / c(&p.v_i);
    let h = c(&s[HG]);

    let q_sto = c(&s[Q_STO1]) + c(&s[Q_STO2]);
    let ke = k_empt(&q_sto, d, &p.k_min, &p.k_max, &p.kappa_a, &p.kappa_b, &p.shape_b, &p.shape_c);
    let emptying = ke * c(&s[Q_STO2]);
    let ra = c(&p.f_frac) * c(&p.k_abs) * c(&s[Q_GUT]) / c(&p.bw);
    let egp = c(&p.k_p1) - c(&p.k_p2) * c(&s[G_P]) - c(&p.k_p3) * c(&s[X_L]) + c(&p.xi) * c(&s[X_H]);
    let rsk = risk(&g, &p.g_b, &p.g_th, &p.r2);
    let u_id = (c(&p.v_m0) + c(&p.v_mx) * c(&s[X]) * (c(&p.r1) * rsk + 1.0)) * c(&s[G_T]) / (c(&p.k_m0) + c(&s[G_T]));
    let e = c(&p.k_e1) * (c(&s[G_P]) - c(&p.k_e2)).relu();
    let rai = c(&p.k_a1) * c(&s[I_SC1]) + c(&p.k_a2) * c(&s[I_SC2]);
    let ra_h = c(&p.k_h3) * c(&s[H_SC2]);

    let dgp = c(&egp) + c(&ra) - c(&p.f_cns) - c(&e) - c(&p.k1) * c(&s[G_P]) + c(&p.k2) * c(&s[G_T]);
    let dg = c(&dgp) / c(&p.v_g);
    let above = c(&p.sigma2_g) * (c(&p.g_th) - c(&g)) + c(&p.sr_b);
    let below = c(&p.sigma_g) * (c(&p.g_th) - c(&g)) / (c(&i) + 1.0) + c(&p.sr_b);
    let target = g.select_ge(&p.g_b, &above.relu(), &below.relu());

    let mut ds = vec![zero.clone(); 20];
    ds[G_P] = dgp;
    ds[G_T] = -c(&u_id) + c(&p.k1) * c(&s[G_P]) - c(&p.k2) * c(&s[G_T]);
    ds[I_P] = -(c(&p.m2) + c(&p.m4)) * c(&s[I_P]) + c(&p.m1) * c(&s[I_L]) + rai;
    ds[I_L] = -(c(&p.m1) + c(&p.m3)) * c(&s[I_L]) + c(&p.m2) * c(&s[I_P]);
    ds[Q_STO1] = -c(&p.k_gri) * c(&s[Q_STO1]) + c(d) * c(carbs);
    ds[Q_STO2] = -c(&emptying) + c(&p.k_gri) * c(&s[Q_STO1]);
    ds[Q_GUT] = -c(&p.k_abs) * c(&s[Q_GUT]) + emptying;
    ds[X_L] = -c(&p.k_i) * (c(&s[X_L]) - c(&s[I_R]));
    ds[I_R] = -c(&p.k_i) * (c(&s[I_R]) - c(&i));
    ds[X_H] = -c(&p.k_h_act) * c(&s[X_H]) + c(&p.k_h_act) * (c(&h) - c(&p.h_b)).relu();
    ds[X] = -c(&p.p_2u) * c(&s[X]) + c(&p.p_2u) * (c(&i) - c(&p.i_b));
    ds[E_ACC] = c(&e);
    ds[I_SC1] = -(c(&p.k_d) + c(&p.k_a1)) * c(&s[I_SC1]) + c(insulin);
    ds[I_SC2] = c(&p.k_d) * c(&s[I_SC1]) - c(&p.k_a2) * c(&s[I_SC2]);
    ds[G_S] = -c(&p.t_s) * c(&s[G_S]) + c(&p.t_s) * c(&g);
    ds[HG] = -c(&p.n_clr) * c(&h) + c(&s[SR_S]) + c(&s[SR_D]) + c(&ra_h);
    ds[SR_S] = -c(&p.rho_g) * (c(&s[SR_S]) - target);
    ds[SR_D] = c(&p.eta_g) * (-dg).relu();
    ds[H_SC1] = -(c(&p.k_h1) + c(&p.k_h2)) * c(&s[H_SC1]) + c(glucagon);
    ds[H_SC2] = c(&p.k_h1) * c(&s[H_SC1]) - c(&p.k_h3) * c(&s[H_SC2]);
    (ds, Diagnostics { egp, ra, u_id, e, g, i, ra_h })
}

/// Full-model derivative and diagnostics at `state`.
pub fn uva_full_field(
    state: &[f64],
    inputs: FieldInputs,
    meal: &MealTracker,
    params: &UvaFullParams,
) -> Result<(Vec<f64>, Diagnostics)> {
    check_state(state)?;
    if state.len() != FULL_STATES.len() {
        return Err(Error::Shape(format!("full model has 20 states, got {}", state.len())));
    }
    Ok(field(state, &inputs.carbs, &inputs.insulin, &inputs.glucagon, &meal.d(), params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_state_glucose_derivative_is_exact() {
        let p = UvaFullParams::resting_default();
        let (ds, diag) = uva_full_field(&[0.0; 20], FieldInputs::default(), &MealTracker::default(), &p).unwrap();
        assert_eq!(ds[idx::G_P], p.k_p1 - p.f_cns);
        assert_eq!(diag.egp, p.k_p1);
        assert_eq!(diag.ra, 0.0);
        assert_eq!(diag.e, 0.0);
    }

    #[test]
    fn resting_state_is_fixed_point() {
        let p = UvaFullParams::resting_default();
        let s = p.resting_state();
        let inputs = FieldInputs { insulin: p.basal_insulin(), ..Default::default() };
        let (ds, _) = uva_full_field(&s, inputs, &MealTracker::default(), &p).unwrap();
        for (i, v) in ds.iter().enumerate() {
            assert!(v.abs() < 1e-12, "state {} drifts at {v}", FULL_STATES[i]);
        }
    }

    #[test]
    fn carbs_enter_only_the_stomach() {
        let p = UvaFullParams::resting_default();
        let s = p.resting_state();
        let mut meal = MealTracker::default();
        meal.update(40.0, 1.0);
        let a = uva_full_field(&s, FieldInputs::default(), &meal, &p).unwrap().0;
        let b = uva_full_field(&s, FieldInputs { carbs: 40.0, ..Default::default() }, &meal, &p).unwrap().0;
        for i in 0..20 {
            assert_eq!(a[i] != b[i], i == idx::Q_STO1, "state {}", FULL_STATES[i]);
        }
    }

    #[test]
    fn no_excretion_below_threshold() {
        let p = UvaFullParams::resting_default();
        let mut s = p.resting_state();
        for gp in [0.0, 100.0, p.k_e2] {
            s[idx::G_P] = gp;
            let (_, d) = uva_full_field(&s, FieldInputs::default(), &MealTracker::default(), &p).unwrap();
            assert_eq!(d.e, 0.0);
        }
        s[idx::G_P] = p.k_e2 + 10.0;
        let (_, d) = uva_full_field(&s, FieldInputs::default(), &MealTracker::default(), &p).unwrap();
        assert!(d.e > 0.0);
    }

    #[test]
    fn non_finite_state_is_rejected() {
        let p = UvaFullParams::resting_default();
        let mut s = p.resting_state();
        s[3] = f64::NAN;
        assert!(matches!(
            uva_full_field(&s, FieldInputs::default(), &MealTracker::default(), &p),
            Err(Error::Numeric(_))
        ));
    }
}
