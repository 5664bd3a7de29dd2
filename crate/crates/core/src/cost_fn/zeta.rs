//! Exact worst-case price of anarchy for `|x|^alpha`.

use std::f64::consts::{E, LN_2};

use crate::error::{Error, Result};

/// `2 / (e ln 2)`, the infimum of [`zeta`] as `alpha -> inf`.
pub fn zeta_limit() -> f64 {
    2.0 / (E * LN_2)
}

/// `((a-1)^(a-1) / a^a) (T-1)^a / (T-2)` with `T = 2^(a/(a-1))`. Near
/// `a = 1` and for large `a` it is evaluated in log space so that `T` never
/// materializes.
pub fn zeta(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("zeta needs alpha > 1, got {alpha}")));
    }
    if (1.05..=10.0).contains(&alpha) {
        // T stays below 2^22 and T - 2 above 0.16: no overflow, no
        // cancellation, and exact results at small integers.
        let t = 2f64.powf(alpha / (alpha - 1.0));
        let head = ((alpha - 1.0) / alpha).powf(alpha - 1.0) / alpha;
        return Ok(head * (t - 1.0).powf(alpha) / (t - 2.0));
    }
    // T = 2 e^u with u = ln 2 / (alpha - 1).
    let u = LN_2 / (alpha - 1.0);
    let (ln_t1, ln_t2) = if u <= 1.0 {
        let em = u.exp_m1();
        ((2.0 * em).ln_1p(), (2.0 * em).ln())
    } else {
        let base = LN_2 + u;
        (base + (-0.5 * (-u).exp()).ln_1p(), base + (-(-u).exp()).ln_1p())
    };
    // (a-1)^(a-1) / a^a = ((a-1)/a)^(a-1) / a
    let head = (alpha - 1.0) * (-1.0 / alpha).ln_1p() - alpha.ln();
    Ok(neumaier(&[head, alpha * ln_t1, -ln_t2]).exp())
}

fn neumaier(xs: &[f64]) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
