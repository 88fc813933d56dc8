//! Nine-state reduced UVA/Padova model: no glucagon, renal, subcutaneous
//! or risk terms; insulin action is driven by plasma insulin directly.

use super::{check_state, k_empt, param_set, FieldInputs, MealTracker};
use crate::autodiff::Scalar;
use crate::error::Result;

pub const REDUCED_STATES: [&str; 9] = ["G_p", "G_t", "I_p", "I_l", "Q_sto1", "Q_sto2", "Q_gut", "X_L", "X"];

pub(crate) mod idx {
    pub const G_P: usize = 0;
    pub const G_T: usize = 1;
    pub const I_P: usize = 2;
    pub const I_L: usize = 3;
    pub const Q_STO1: usize = 4;
    pub const Q_STO2: usize = 5;
    pub const Q_GUT: usize = 6;
    pub const X_L: usize = 7;
    pub const X: usize = 8;
}

param_set! {
    UvaReducedParams {
        k1 => "k1", k2 => "k2",
        m1 => "m1", m2 => "m2", m3 => "m3", m4 => "m4",
        k_gri => "k_gri", k_abs => "k_abs", k_min => "k_min", k_max => "k_max",
        kappa_a => "kappa_a", kappa_b => "kappa_b", shape_b => "shape_b", shape_c => "shape_c",
        f_frac => "f_frac", bw => "BW",
        k_p1 => "k_p1", k_p2 => "k_p2", k_p3 => "k_p3", k_i => "k_i",
        f_cns => "F_cns", v_m0 => "V_m0", v_mx => "V_mx", k_m0 => "K_m0", p_2u => "p_2U",
    }
}

impl UvaReducedParams<f64> {
    /// Illustrative constants, not fitted or published values. `k_p1` and
    /// `V_m0` are solved so that [`Self::resting_state`] is a fixed point
    /// under the basal insulin rate from [`Self::basal_insulin`].
    pub fn resting_default() -> Self {
        let (gp, gt, ip) = (250.0, 190.0, 1.25);
        let mut p = Self {
            k1: 0.065,
            k2: 0.079,
            m1: 0.19,
            m2: 0.484,
            m3: 0.285,
            m4: 0.194,
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
            k_i: 0.0079,
            f_cns: 1.0,
            v_m0: 0.0,
            v_mx: 0.047,
            k_m0: 225.59,
            p_2u: 0.0331,
        };
        let u_id = p.k1 * gp - p.k2 * gt;
        p.v_m0 = u_id * (p.k_m0 + gt) / gt - p.v_mx * ip;
        p.k_p1 = p.k_p2 * gp + p.k_p3 * ip + p.f_cns + u_id;
        p
    }

    /// Fixed point of [`Self::resting_default`] with an empty gut.
    pub fn resting_state(&self) -> Vec<f64> {
        let (gp, gt, ip) = (250.0, 190.0, 1.25);
        let il = self.m2 * ip / (self.m1 + self.m3);
        vec![gp, gt, ip, il, 0.0, 0.0, 0.0, ip, ip]
    }

    /// Insulin rate that holds plasma insulin at its resting level.
    pub fn basal_insulin(&self) -> f64 {
        let ip = 1.25;
        ip * (self.m2 + self.m4 - self.m1 * self.m2 / (self.m1 + self.m3))
    }
}

pub(crate) fn field<T: Scalar>(s: &[T], carbs: &T, insulin: &T, d: &T, p: &UvaReducedParams<T>) -> Vec<T> {
    use idx::*;
    let c = |v: &T| v.clone();
    let q_sto = c(&s[Q_STO1]) + c(&s[Q_STO2]);
    let ke = k_empt(&q_sto, d, &p.k_min, &p.k_max, &p.kappa_a, &p.kappa_b, &p.shape_b, &p.shape_c);
    let ra = c(&p.f_frac) * c(&p.k_abs) * c(&s[Q_GUT]) / c(&p.bw);
    let egp = c(&p.k_p1) - c(&p.k_p2) * c(&s[G_P]) - c(&p.k_p3) * c(&s[X_L]);
    let u_id = (c(&p.v_m0) + c(&p.v_mx) * c(&s[X])) * c(&s[G_T]) / (c(&p.k_m0) + c(&s[G_T]));
    let emptying = ke * c(&s[Q_STO2]);
    vec![
        egp + ra - c(&p.f_cns) - c(&p.k1) * c(&s[G_P]) + c(&p.k2) * c(&s[G_T]),
        -u_id + c(&p.k1) * c(&s[G_P]) - c(&p.k2) * c(&s[G_T]),
        -(c(&p.m2) + c(&p.m4)) * c(&s[I_P]) + c(&p.m1) * c(&s[I_L]) + c(insulin),
        -(c(&p.m1) + c(&p.m3)) * c(&s[I_L]) + c(&p.m2) * c(&s[I_P]),
        -c(&p.k_gri) * c(&s[Q_STO1]) + c(d) * c(carbs),
        -emptying.clone() + c(&p.k_gri) * c(&s[Q_STO1]),
        -c(&p.k_abs) * c(&s[Q_GUT]) + emptying,
        -c(&p.k_i) * (c(&s[X_L]) - c(&s[I_P])),
        -c(&p.p_2u) * c(&s[X]) + c(&p.p_2u) * c(&s[I_P]),
    ]
}

/// Reduced-model derivative at `state`.
pub fn uva_reduced_field(
    state: &[f64],
    inputs: FieldInputs,
    meal: &MealTracker,
    params: &UvaReducedParams,
) -> Result<Vec<f64>> {
    check_state(state)?;
    if state.len() != REDUCED_STATES.len() {
        return Err(crate::Error::Shape(format!("reduced model has 9 states, got {}", state.len())));
    }
    Ok(field(state, &inputs.carbs, &inputs.insulin, &meal.d(), params))
}
