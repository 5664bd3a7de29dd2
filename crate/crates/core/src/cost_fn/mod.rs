//! Differentiable cost functions as expression trees.
//!
//! Every node maps `R^d_in -> R`. Leaves are quadratic forms, p-norm powers,
//! plain p-norms, scalar affine maps and (non-convex) polynomials; inner nodes
//! compose them. Convexity is never detected numerically: a tree counts as
//! convex only when it is built from catalogued convex constructions
//! (see [`CostFunction::is_convex`]).

mod suitability;
mod zeta;

pub use suitability::{
    certify_base, cosh_certified, derive_certificate, min_ratio_search, propagate_certificate, relax_certificate,
    verify_suitability, BaseFunction, Certified, Composition, Counterexample, PSet, Provenance, RatioSearch,
    SampleSpec, SuitabilityCertificate, VerificationReport,
};
pub use zeta::{zeta, zeta_limit};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{flat, rowmajor};

/// One monomial `coeff * prod_k v_k^powers[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostFunction {
    /// `v -> ||M v||_2^2`.
    QuadraticForm {
        #[serde(with = "rowmajor")]
        matrix: DMatrix<f64>,
    },
    /// `v -> ||v||_p^alpha` with `alpha > 1`, `p in (1, inf)`.
    PowerNorm {
        alpha: f64,
        p_norm: f64,
        dim: usize,
    },
    /// `v -> ||v||_p`, differentiable away from the origin.
    Norm {
        p_norm: f64,
        dim: usize,
    },
    /// `v -> c^T v + offset`. Only meaningful as an inner argument.
    Linear {
        #[serde(with = "flat")]
        coeffs: DVector<f64>,
        offset: f64,
    },
    /// `v -> exp(inner(v))`.
    Exp {
        inner: Box<CostFunction>,
    },
    /// `v -> cosh(inner(v))`.
    Cosh {
        inner: Box<CostFunction>,
    },
    /// `v -> weight * inner(v)`, `weight >= 0`.
    Scale {
        weight: f64,
        inner: Box<CostFunction>,
    },
    Sum {
        terms: Vec<CostFunction>,
    },
    /// `z -> inner(A z + offset)`.
    AffinePre {
        #[serde(with = "rowmajor")]
        matrix: DMatrix<f64>,
        #[serde(with = "flat")]
        offset: DVector<f64>,
        inner: Box<CostFunction>,
    },
    /// `v -> outer(inner(v))` where `outer` takes a single scalar.
    Compose {
        outer: Box<CostFunction>,
        inner: Box<CostFunction>,
    },
    /// Explicit polynomial. Never treated as convex.
    Polynomial {
        dim: usize,
        terms: Vec<Monomial>,
    },
}

impl CostFunction {
    pub fn quadratic_form(matrix: DMatrix<f64>) -> Self {
        CostFunction::QuadraticForm { matrix }
    }

    /// `x -> x^2` on the real line.
    pub fn square() -> Self {
        Self::quadratic_form(DMatrix::identity(1, 1))
    }

    pub fn power_norm(alpha: f64, p_norm: f64, dim: usize) -> Result<Self> {
        let f = CostFunction::PowerNorm { alpha, p_norm, dim };
        f.validate()?;
        Ok(f)
    }

    /// `x -> |x|^alpha` on the real line.
    pub fn abs_power(alpha: f64) -> Result<Self> {
        Self::power_norm(alpha, 2.0, 1)
    }

    pub fn norm(p_norm: f64, dim: usize) -> Result<Self> {
        let f = CostFunction::Norm { p_norm, dim };
        f.validate()?;
        Ok(f)
    }

    pub fn linear(coeffs: DVector<f64>, offset: f64) -> Self {
        CostFunction::Linear { coeffs, offset }
    }

    /// The scalar identity `x -> x`.
    pub fn identity() -> Self {
        Self::linear(DVector::from_element(1, 1.0), 0.0)
    }

    pub fn exp(inner: CostFunction) -> Self {
        CostFunction::Exp { inner: Box::new(inner) }
    }

    pub fn cosh(inner: CostFunction) -> Self {
        CostFunction::Cosh { inner: Box::new(inner) }
    }

    pub fn scale(weight: f64, inner: CostFunction) -> Result<Self> {
        let f = CostFunction::Scale {
            weight,
            inner: Box::new(inner),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn sum(terms: Vec<CostFunction>) -> Result<Self> {
        let f = CostFunction::Sum { terms };
        f.validate()?;
        Ok(f)
    }

    pub fn affine(matrix: DMatrix<f64>, offset: DVector<f64>, inner: CostFunction) -> Result<Self> {
        let f = CostFunction::AffinePre {
            matrix,
            offset,
            inner: Box::new(inner),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn compose(outer: CostFunction, inner: CostFunction) -> Result<Self> {
        let f = CostFunction::Compose {
            outer: Box::new(outer),
            inner: Box::new(inner),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn polynomial(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        let f = CostFunction::Polynomial { dim, terms };
        f.validate()?;
        Ok(f)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CostFunction::QuadraticForm { .. } => "quadratic_form",
            CostFunction::PowerNorm { .. } => "power_norm",
            CostFunction::Norm { .. } => "norm",
            CostFunction::Linear { .. } => "linear",
            CostFunction::Exp { .. } => "exp",
            CostFunction::Cosh { .. } => "cosh",
            CostFunction::Scale { .. } => "scale",
            CostFunction::Sum { .. } => "sum",
            CostFunction::AffinePre { .. } => "affine_pre",
            CostFunction::Compose { .. } => "compose",
            CostFunction::Polynomial { .. } => "polynomial",
        }
    }

    /// Input dimension. Assumes the tree is valid; see [`Self::validate`].
    pub fn input_dim(&self) -> usize {
        match self {
            CostFunction::QuadraticForm { matrix } => matrix.ncols(),
            CostFunction::PowerNorm { dim, .. } | CostFunction::Norm { dim, .. } => *dim,
            CostFunction::Linear { coeffs, .. } => coeffs.len(),
            CostFunction::Exp { inner }
            | CostFunction::Cosh { inner }
            | CostFunction::Scale { inner, .. }
            | CostFunction::Compose { inner, .. } => inner.input_dim(),
            CostFunction::Sum { terms } => terms.first().map_or(0, CostFunction::input_dim),
            CostFunction::AffinePre { matrix, .. } => matrix.ncols(),
            CostFunction::Polynomial { dim, .. } => *dim,
        }
    }

    /// Checks parameter ranges and dimensional consistency of the whole tree.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCost(msg));
        match self {
            CostFunction::QuadraticForm { matrix } => {
                if matrix.iter().any(|x| !x.is_finite()) {
                    return bad("quadratic_form matrix has non-finite entries".into());
                }
            }
            CostFunction::PowerNorm { alpha, p_norm, dim } => {
                if !(alpha.is_finite() && *alpha > 1.0) {
                    return bad(format!("power_norm needs alpha > 1, got {alpha}"));
                }
                if !(p_norm.is_finite() && *p_norm > 1.0) {
                    return bad(format!("power_norm needs p_norm in (1, inf), got {p_norm}"));
                }
                if *dim == 0 {
                    return bad("power_norm dimension must be positive".into());
                }
            }
            CostFunction::Norm { p_norm, dim } => {
                if !(p_norm.is_finite() && *p_norm > 1.0) {
                    return bad(format!("norm needs p_norm in (1, inf), got {p_norm}"));
                }
                if *dim == 0 {
                    return bad("norm dimension must be positive".into());
                }
            }
            CostFunction::Linear { coeffs, offset } => {
                if coeffs.is_empty() || !offset.is_finite() {
                    return bad("linear map needs at least one coefficient".into());
                }
            }
            CostFunction::Exp { inner } | CostFunction::Cosh { inner } => inner.validate()?,
            CostFunction::Scale { weight, inner } => {
                if !(weight.is_finite() && *weight >= 0.0) {
                    return bad(format!("scale weight must be >= 0, got {weight}"));
                }
                inner.validate()?;
            }
            CostFunction::Sum { terms } => {
                let Some(first) = terms.first() else {
                    return bad("sum needs at least one term".into());
                };
                let d = first.input_dim();
                for t in terms {
                    t.validate()?;
                    if t.input_dim() != d {
                        return Err(Error::DimensionMismatch {
                            context: "sum term".into(),
                            expected: d,
                            got: t.input_dim(),
                        });
                    }
                }
            }
            CostFunction::AffinePre { matrix, offset, inner } => {
                inner.validate()?;
                if matrix.nrows() != inner.input_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "affine_pre matrix rows".into(),
                        expected: inner.input_dim(),
                        got: matrix.nrows(),
                    });
                }
                if offset.len() != matrix.nrows() {
                    return Err(Error::DimensionMismatch {
                        context: "affine_pre offset".into(),
                        expected: matrix.nrows(),
                        got: offset.len(),
                    });
                }
            }
            CostFunction::Compose { outer, inner } => {
                outer.validate()?;
                inner.validate()?;
                if outer.input_dim() != 1 {
                    return Err(Error::DimensionMismatch {
                        context: "compose outer input".into(),
                        expected: 1,
                        got: outer.input_dim(),
                    });
                }
            }
            CostFunction::Polynomial { dim, terms } => {
                for t in terms {
                    if t.powers.len() != *dim {
                        return Err(Error::DimensionMismatch {
                            context: "polynomial monomial".into(),
                            expected: *dim,
                            got: t.powers.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        let d = self.input_dim();
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                context: format!("{} input", self.kind_name()),
                expected: d,
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(v)?;
        Ok(self.eval_unchecked(v))
    }

    pub fn grad(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v)?;
        self.grad_unchecked(v)
    }

    pub(crate) fn eval_unchecked(&self, v: &DVector<f64>) -> f64 {
        match self {
            CostFunction::QuadraticForm { matrix } => (matrix * v).norm_squared(),
            CostFunction::PowerNorm { alpha, p_norm, .. } => p_norm_of(v, *p_norm).powf(*alpha),
            CostFunction::Norm { p_norm, .. } => p_norm_of(v, *p_norm),
            CostFunction::Linear { coeffs, offset } => coeffs.dot(v) + offset,
            CostFunction::Exp { inner } => inner.eval_unchecked(v).exp(),
            CostFunction::Cosh { inner } => inner.eval_unchecked(v).cosh(),
            CostFunction::Scale { weight, inner } => weight * inner.eval_unchecked(v),
            CostFunction::Sum { terms } => terms.iter().map(|t| t.eval_unchecked(v)).sum(),
            CostFunction::AffinePre { matrix, offset, inner } => inner.eval_unchecked(&(matrix * v + offset)),
            CostFunction::Compose { outer, inner } => {
                let s = inner.eval_unchecked(v);
                outer.eval_unchecked(&DVector::from_element(1, s))
            }
            CostFunction::Polynomial { terms, .. } => terms
                .iter()
                .map(|t| {
                    t.powers
                        .iter()
                        .zip(v.iter())
                        .fold(t.coeff, |acc, (&e, &x)| acc * x.powi(e as i32))
                })
                .sum(),
        }
    }

    pub(crate) fn grad_unchecked(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            CostFunction::QuadraticForm { matrix } => Ok(matrix.tr_mul(&(matrix * v)) * 2.0),
            CostFunction::PowerNorm { alpha, p_norm, .. } => {
                let r = p_norm_of(v, *p_norm);
                if r == 0.0 {
                    if *alpha >= 2.0 {
                        return Ok(DVector::zeros(v.len()));
                    }
                    return Err(Error::GradientUndefined(format!(
                        "power_norm with alpha = {alpha} < 2 at the origin"
                    )));
                }
                let scale = alpha * r.powf(alpha - p_norm);
                Ok(v.map(|x| scale * x.signum() * x.abs().powf(p_norm - 1.0)))
            }
            CostFunction::Norm { p_norm, .. } => {
                let r = p_norm_of(v, *p_norm);
                if r == 0.0 {
                    return Err(Error::GradientUndefined("norm at the origin".into()));
                }
                Ok(v.map(|x| x.signum() * (x.abs() / r).powf(p_norm - 1.0)))
            }
            CostFunction::Linear { coeffs, .. } => Ok(coeffs.clone()),
            CostFunction::Exp { inner } => {
                let outer = inner.eval_unchecked(v).exp();
                chain(outer, inner.grad_unchecked(v), v.len())
            }
            CostFunction::Cosh { inner } => {
                let outer = inner.eval_unchecked(v).sinh();
                chain(outer, inner.grad_unchecked(v), v.len())
            }
            CostFunction::Scale { weight, inner } => chain(*weight, inner.grad_unchecked(v), v.len()),
            CostFunction::Sum { terms } => {
                let mut g = DVector::zeros(v.len());
                for t in terms {
                    g += t.grad_unchecked(v)?;
                }
                Ok(g)
            }
            CostFunction::AffinePre { matrix, offset, inner } => {
                let g = inner.grad_unchecked(&(matrix * v + offset))?;
                Ok(matrix.tr_mul(&g))
            }
            CostFunction::Compose { outer, inner } => {
                let s = DVector::from_element(1, inner.eval_unchecked(v));
                let d = outer.grad_unchecked(&s)?[0];
                chain(d, inner.grad_unchecked(v), v.len())
            }
            CostFunction::Polynomial { terms, dim } => {
                let mut g = DVector::zeros(*dim);
                for t in terms {
                    for k in 0..*dim {
                        let e = t.powers[k];
                        if e == 0 {
                            continue;
                        }
                        let mut term = t.coeff * e as f64;
                        for (j, (&ej, &x)) in t.powers.iter().zip(v.iter()).enumerate() {
                            let pow = if j == k { ej - 1 } else { ej };
                            term *= x.powi(pow as i32);
                        }
                        g[k] += term;
                    }
                }
                Ok(g)
            }
        }
    }

    /// Convex by construction: built only from catalogued convex pieces with
    /// monotonicity conditions that make each composition convex.
    pub fn is_convex(&self) -> bool {
        match self {
            CostFunction::QuadraticForm { .. }
            | CostFunction::PowerNorm { .. }
            | CostFunction::Norm { .. }
            | CostFunction::Linear { .. } => true,
            CostFunction::Exp { inner } => inner.is_convex(),
            CostFunction::Cosh { inner } => inner.is_affine() || (inner.is_convex() && inner.is_nonnegative()),
            CostFunction::Scale { inner, .. } | CostFunction::AffinePre { inner, .. } => inner.is_convex(),
            CostFunction::Sum { terms } => terms.iter().all(CostFunction::is_convex),
            CostFunction::Compose { outer, inner } => {
                outer.is_convex()
                    && (inner.is_affine()
                        || (inner.is_convex()
                            && (outer.nondecreasing_everywhere()
                                || (inner.is_nonnegative() && outer.nondecreasing_on_nonneg()))))
            }
            CostFunction::Polynomial { .. } => false,
        }
    }

    pub fn is_affine(&self) -> bool {
        match self {
            CostFunction::Linear { .. } => true,
            CostFunction::Scale { inner, .. } | CostFunction::AffinePre { inner, .. } => inner.is_affine(),
            CostFunction::Sum { terms } => terms.iter().all(CostFunction::is_affine),
            _ => false,
        }
    }

    /// Nonnegative by construction (conservative).
    pub fn is_nonnegative(&self) -> bool {
        match self {
            CostFunction::QuadraticForm { .. }
            | CostFunction::PowerNorm { .. }
            | CostFunction::Norm { .. }
            | CostFunction::Exp { .. }
            | CostFunction::Cosh { .. } => true,
            CostFunction::Linear { coeffs, offset } => coeffs.iter().all(|&c| c == 0.0) && *offset >= 0.0,
            CostFunction::Scale { inner, .. } | CostFunction::AffinePre { inner, .. } => inner.is_nonnegative(),
            CostFunction::Sum { terms } => terms.iter().all(CostFunction::is_nonnegative),
            CostFunction::Compose { outer, .. } => outer.is_nonnegative(),
            CostFunction::Polynomial { .. } => false,
        }
    }

    /// Scalar-input function known to be nondecreasing on all of R.
    pub fn nondecreasing_everywhere(&self) -> bool {
        if self.input_dim() != 1 {
            return false;
        }
        match self {
            CostFunction::Linear { coeffs, .. } => coeffs[0] >= 0.0,
            CostFunction::Exp { inner } => inner.nondecreasing_everywhere(),
            CostFunction::Scale { inner, .. } => inner.nondecreasing_everywhere(),
            CostFunction::Sum { terms } => terms.iter().all(CostFunction::nondecreasing_everywhere),
            CostFunction::AffinePre { matrix, inner, .. } => {
                matrix.nrows() == 1 && matrix[(0, 0)] >= 0.0 && inner.nondecreasing_everywhere()
            }
            _ => false,
        }
    }

    /// Scalar-input function known to be nondecreasing on `[0, inf)`.
    pub fn nondecreasing_on_nonneg(&self) -> bool {
        if self.input_dim() != 1 {
            return false;
        }
        if self.nondecreasing_everywhere() {
            return true;
        }
        match self {
            CostFunction::QuadraticForm { matrix } => matrix.ncols() == 1,
            CostFunction::PowerNorm { .. } | CostFunction::Norm { .. } => true,
            CostFunction::Exp { inner } => inner.nondecreasing_on_nonneg(),
            CostFunction::Cosh { inner } => inner.nondecreasing_on_nonneg() && inner.maps_nonneg_to_nonneg(),
            CostFunction::Scale { inner, .. } => inner.nondecreasing_on_nonneg(),
            CostFunction::Sum { terms } => terms.iter().all(CostFunction::nondecreasing_on_nonneg),
            CostFunction::AffinePre { matrix, offset, inner } => {
                matrix.nrows() == 1 && matrix[(0, 0)] >= 0.0 && offset[0] >= 0.0 && inner.nondecreasing_on_nonneg()
            }
            _ => false,
        }
    }

    fn maps_nonneg_to_nonneg(&self) -> bool {
        match self {
            CostFunction::Linear { coeffs, offset } => coeffs[0] >= 0.0 && *offset >= 0.0,
            _ => self.is_nonnegative(),
        }
    }
}

/// Outer-derivative chain step. An undefined inner gradient is tolerated when
/// the outer derivative vanishes there (the norm-composition case at 0).
fn chain(outer: f64, inner: Result<DVector<f64>>, dim: usize) -> Result<DVector<f64>> {
    match inner {
        Ok(g) => Ok(g * outer),
        Err(Error::GradientUndefined(_)) if outer == 0.0 => Ok(DVector::zeros(dim)),
        Err(e) => Err(e),
    }
}

fn p_norm_of(v: &DVector<f64>, p: f64) -> f64 {
    let m = v.amax();
    if m == 0.0 {
        return 0.0;
    }
    if p == 2.0 {
        return v.norm();
    }
    m * v.iter().map(|x| (x.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}
