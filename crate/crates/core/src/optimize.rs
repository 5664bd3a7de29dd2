//! Gradient descent with Armijo backtracking.

use nalgebra::DVector;

use crate::error::Result;
use crate::linalg::max_abs;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOptions {
    /// Stop once `||grad||_inf <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo slope factor.
    pub slope: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        GdOptions {
            tol: 1e-10,
            max_iter: 100_000,
            initial_step: 1.0,
            shrink: 0.5,
            slope: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_BACKTRACKS: usize = 80;

/// Minimizes `f` from `x0`. Once the required Armijo decrease drops below the
/// rounding level of `f`, a trial step is accepted instead when it does not
/// raise `f` beyond rounding and strictly reduces the gradient norm.
pub fn minimize<F, G>(mut f: F, mut grad: G, x0: DVector<f64>, opts: &GdOptions) -> Result<GdResult>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
    G: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut x = x0;
    let mut fx = f(&x)?;
    let mut g = grad(&x)?;
    let mut iterations = 0;
    loop {
        let g_inf = max_abs(&g);
        if g_inf <= opts.tol {
            return Ok(GdResult {
                x,
                value: fx,
                grad_inf: g_inf,
                iterations,
                converged: true,
            });
        }
        if iterations >= opts.max_iter {
            return Ok(GdResult {
                x,
                value: fx,
                grad_inf: g_inf,
                iterations,
                converged: false,
            });
        }
        let g2 = g.norm_squared();
        let rounding = 1e-12 * (1.0 + fx.abs());
        let mut t = opts.initial_step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x - &g * t;
            if let Ok(ft) = f(&trial) {
                if ft.is_finite() {
                    let decrease = opts.slope * t * g2;
                    if decrease > rounding {
                        if ft <= fx - decrease {
                            accepted = Some((trial, ft, None));
                            break;
                        }
                    } else if ft <= fx + rounding {
                        if let Ok(gt) = grad(&trial) {
                            if gt.norm_squared() < g2 {
                                accepted = Some((trial, ft, Some(gt)));
                                break;
                            }
                        }
                    }
                }
            }
            t *= opts.shrink;
        }
        let Some((xn, fxn, gn)) = accepted else {
            return Ok(GdResult {
                x,
                value: fx,
                grad_inf: g_inf,
                iterations,
                converged: false,
            });
        };
        x = xn;
        fx = fxn;
        g = match gn {
            Some(gn) => gn,
            None => grad(&x)?,
        };
        iterations += 1;
    }
}
