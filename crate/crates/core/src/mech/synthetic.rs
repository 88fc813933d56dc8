//! One-state linear system `dy/dt = -k_y y + k_1 x1 - k_2 x2 + offset`
//! with rates stored as logarithms, so every parameter setting keeps the
//! signs of the ground truth `dy/dt = -y + x1 - x2`.

use super::param_set;
use crate::autodiff::Scalar;

param_set! {
    SyntheticParams {
        log_k_y => "log_k_y",
        log_k_x1 => "log_k_x1",
        log_k_x2 => "log_k_x2",
        offset => "offset",
    }
}

impl SyntheticParams<f64> {
    /// The data-generating system in its own time units.
    pub fn truth() -> Self {
        Self { log_k_y: 0.0, log_k_x1: 0.0, log_k_x2: 0.0, offset: 0.0 }
    }
}

pub(crate) fn field<T: Scalar>(y: &T, x1: &T, x2: &T, p: &SyntheticParams<T>) -> T {
    -p.log_k_y.exp() * y.clone() + p.log_k_x1.exp() * x1.clone() - p.log_k_x2.exp() * x2.clone() + p.offset.clone()
}

pub fn synthetic_field(y: f64, x1: f64, x2: f64, params: &SyntheticParams) -> f64 {
    field(&y, &x1, &x2, params)
}
