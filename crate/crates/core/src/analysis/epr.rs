use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const REID_BOUND: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EprResult {
    pub v_beta_re_minus: f64,
    pub v_beta_im_plus: f64,
    /// `V_x− · V_p+ = 1/(4 V_β̄Re− V_β̄Im+)`.
    pub reid_value: f64,
    pub entangled: bool,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Reid product from the χ variances along `Re β₁ − Re β₂` and `Im β₁ + Im β₂`.
pub fn reid_criterion(v_re_minus: f64, v_im_plus: f64) -> Result<EprResult> {
    positive("v_re_minus", v_re_minus)?;
    positive("v_im_plus", v_im_plus)?;
    let reid_value = 1.0 / (4.0 * v_re_minus * v_im_plus);
    Ok(EprResult { v_beta_re_minus: v_re_minus, v_beta_im_plus: v_im_plus, reid_value, entangled: reid_value < REID_BOUND })
}

/// Quadrature variance `1/(2 V_χ)` from a χ variance.
pub fn variance_reciprocity(v_chi: f64) -> Result<f64> {
    positive("v_chi", v_chi)?;
    Ok(1.0 / (2.0 * v_chi))
}

/// `10·log₁₀(V)` relative to the vacuum variance 1.
pub fn squeezing_db(v: f64) -> Result<f64> {
    positive("variance", v)?;
    Ok(10.0 * v.log10())
}
