//! Worst-case and pathological instances: the three-person tight game, its
//! exponential instantiation, a non-convex game with unbounded price of
//! anarchy and an indefinite game without Nash equilibrium.

use std::f64::consts::{E, LN_2};

use nalgebra::{DMatrix, DVector};

use crate::cost_fn::{CostFunction, Monomial};
use crate::error::{Error, Result};
use crate::game::{HeterogeneousGame, InternalCost, OpinionGame, OpinionProfile, PairCost, Person, QuadraticGame};

/// A scalar cost `h` with a binding pair `(x1, y1)` for `p = 2` and
/// `(x2, y2)` for `p = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TightInstanceSpec {
    pub h: CostFunction,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    /// When present, both pairs must satisfy the suitability inequality with
    /// equality.
    pub lambda_kappa: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightInstance {
    pub game: HeterogeneousGame,
    pub a: f64,
    pub b: f64,
    pub w: f64,
    /// Nash profile `(-x1/a, 0, x1/a)`.
    pub x: OpinionProfile,
    /// Comparison profile `(-y1/a, 0, y1/a)`.
    pub y: OpinionProfile,
}

impl TightInstance {
    pub fn ratio(&self) -> Result<f64> {
        Ok(self.game.social_cost(&self.x)? / self.game.social_cost(&self.y)?)
    }
}

/// Person order in the tight game.
pub const NEG: usize = 0;
pub const ZERO: usize = 1;
pub const POS: usize = 2;

fn scalar_derivative(h: &CostFunction, x: f64) -> Result<f64> {
    Ok(h.grad(&DVector::from_element(1, x))?[0])
}

fn scalar_value(h: &CostFunction, x: f64) -> Result<f64> {
    h.eval(&DVector::from_element(1, x))
}

pub fn exp_tight_spec() -> TightInstanceSpec {
    TightInstanceSpec {
        h: CostFunction::exp(CostFunction::identity()),
        x1: 0.0,
        y1: 1.0 - 2.0 * LN_2,
        x2: 1.0,
        y2: 2.0 - LN_2,
        lambda_kappa: Some((2.0 / E, LN_2)),
    }
}

/// Equality residual `h'(x)(y - x)/p - (lambda h(y) - kappa h(x))`.
pub fn equality_residual(h: &CostFunction, x: f64, y: f64, p: f64, lambda: f64, kappa: f64) -> Result<f64> {
    Ok(scalar_derivative(h, x)? * (y - x) / p - (lambda * scalar_value(h, y)? - kappa * scalar_value(h, x)?))
}

pub fn build_three_person(spec: &TightInstanceSpec) -> Result<TightInstance> {
    let h = &spec.h;
    if h.input_dim() != 1 {
        return Err(Error::InvalidArgument("h must be a scalar function".into()));
    }
    let (x1, y1, x2, y2) = (spec.x1, spec.y1, spec.x2, spec.y2);
    if x1 == y1 || x2 == y2 {
        return Err(Error::InvalidArgument(
            "x1 = y1 or x2 = y2 makes a or b undefined".into(),
        ));
    }
    let (d1, d2) = (scalar_derivative(h, x1)?, scalar_derivative(h, x2)?);
    if d1 * (x1 - y1) * d2 * (x2 - y2) >= 0.0 {
        return Err(Error::InvalidArgument(
            "h'(x1)(x1 - y1) and h'(x2)(x2 - y2) must have opposite signs".into(),
        ));
    }
    if let Some((lambda, kappa)) = spec.lambda_kappa {
        for (x, y, p) in [(x1, y1, 2.0), (x2, y2, 1.0)] {
            let r = equality_residual(h, x, y, p, lambda, kappa)?;
            let scale = 1.0 + scalar_value(h, x)?.abs() + scalar_value(h, y)?.abs();
            if r.abs() > 1e-8 * scale {
                return Err(Error::InvalidArgument(format!(
                    "pair ({x}, {y}) with p = {p} is not binding: residual {r:e}"
                )));
            }
        }
    }
    let num = y1 * x2 - x1 * y2;
    let a = num / (x2 - y2);
    let b = num / (x1 - y1);
    if !(a * b < 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "a = {a} and b = {b} must be finite with opposite signs"
        )));
    }
    let mut w = -b * d2 / (a * d1);
    if w < -1e-12 || !w.is_finite() {
        return Err(Error::InvalidArgument(format!("edge weight w = {w} is negative")));
    }
    w = w.max(0.0);

    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let g = CostFunction::affine(one(b), DVector::zeros(1), h.clone())?;
    let internal = |r: f64| {
        Some(InternalCost {
            g: g.clone(),
            r: one(r),
            s: DVector::from_element(1, 1.0),
        })
    };
    let persons = vec![
        Person {
            dim: 1,
            internal: internal(-1.0),
        },
        Person { dim: 1, internal: None },
        Person {
            dim: 1,
            internal: internal(1.0),
        },
    ];
    let f = CostFunction::scale(w, h.clone())?;
    let edge = |i, j, sa: f64| {
        (
            i,
            j,
            PairCost {
                f: f.clone(),
                a: one(sa * a),
                b: one(-sa * a),
            },
        )
    };
    let pairs = vec![
        edge(NEG, ZERO, -1.0),
        edge(ZERO, NEG, 1.0),
        edge(ZERO, POS, -1.0),
        edge(POS, ZERO, 1.0),
    ];
    let game = HeterogeneousGame::new(persons, pairs)?;
    Ok(TightInstance {
        game,
        a,
        b,
        w,
        x: OpinionProfile::scalars(&[-x1 / a, 0.0, x1 / a]),
        y: OpinionProfile::scalars(&[-y1 / a, 0.0, y1 / a]),
    })
}

/// Two scalar persons with internal costs `eps z_k^2` and the shared
/// non-convex pair cost `(1 - z1)^2 z2^2 + z1^2 (1 - z2)^2`.
pub fn nonconvex_example(epsilon: f64) -> Result<HeterogeneousGame> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    let mono = |coeff, p, q| Monomial {
        coeff,
        powers: vec![p, q],
    };
    // x^2 + y^2 - 2 x y^2 - 2 x^2 y + 2 x^2 y^2
    let f = CostFunction::polynomial(
        2,
        vec![
            mono(1.0, 2, 0),
            mono(1.0, 0, 2),
            mono(-2.0, 1, 2),
            mono(-2.0, 2, 1),
            mono(2.0, 2, 2),
        ],
    )?;
    let person = || Person {
        dim: 1,
        internal: Some(InternalCost {
            g: CostFunction::scale(epsilon, CostFunction::square()).expect("epsilon > 0"),
            r: DMatrix::identity(1, 1),
            s: DVector::zeros(1),
        }),
    };
    let first = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
    let second = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    HeterogeneousGame::new(
        vec![person(), person()],
        vec![
            (
                0,
                1,
                PairCost {
                    f: f.clone(),
                    a: first.clone(),
                    b: second.clone(),
                },
            ),
            (1, 0, PairCost { f, a: second, b: first }),
        ],
    )
}

/// Global best response of scalar person `i` by exhaustive search over the
/// grid `lo, lo + step, ..., hi`. Returns `(argmin, min cost)`.
pub fn grid_best_response(
    game: &impl OpinionGame,
    i: usize,
    z: &OpinionProfile,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<(f64, f64)> {
    if z.block(i).len() != 1 {
        return Err(Error::Unsupported("grid oracle needs a scalar person".into()));
    }
    if !(step > 0.0 && lo <= hi) {
        return Err(Error::InvalidArgument("grid needs lo <= hi and step > 0".into()));
    }
    let count = ((hi - lo) / step).round() as usize;
    let mut probe = z.clone();
    let mut best = (lo, f64::INFINITY);
    for k in 0..=count {
        let t = lo + step * k as f64;
        probe.block_mut(i)[0] = t;
        let c = game.person_cost(i, &probe)?;
        if c < best.1 {
            best = (t, c);
        }
    }
    Ok(best)
}

/// Two scalar persons with `r = s = 0` joined by weight `-1`.
pub fn no_nash_example() -> QuadraticGame {
    no_nash_variant(0.0)
}

/// Same game with internal weights `r_1 = r_2 = r`.
pub fn no_nash_variant(r: f64) -> QuadraticGame {
    let one = |x| DMatrix::from_element(1, 1, x);
    QuadraticGame::new_unsafe_indefinite(
        vec![one(r), one(r)],
        vec![DVector::zeros(1), DVector::zeros(1)],
        vec![(0, 1, one(-1.0)), (1, 0, one(-1.0))],
    )
    .expect("scalar matrices are symmetric")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_spec_is_binding() {
        let s = exp_tight_spec();
        let (l, k) = s.lambda_kappa.unwrap();
        assert!(equality_residual(&s.h, s.x1, s.y1, 2.0, l, k).unwrap().abs() < 1e-12);
        assert!(equality_residual(&s.h, s.x2, s.y2, 1.0, l, k).unwrap().abs() < 1e-12);
    }

    #[test]
    fn exp_instance_constants() {
        let t = build_three_person(&exp_tight_spec()).unwrap();
        // a = (1 - 2 ln 2) / (ln 2 - 1), b = -1, w = e / a.
        assert!((t.a - 1.2588913532709295).abs() < 1e-14);
        assert_eq!(t.b, -1.0);
        assert!((t.w - 2.1592664223137581).abs() < 1e-13);
        assert!(t.game.check_symmetric().is_symmetric());
        assert!((t.ratio().unwrap() - 2.0 / (E * LN_2)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_same_sign_specs_fail() {
        let mut s = exp_tight_spec();
        s.y2 = s.x2;
        assert!(build_three_person(&s).is_err());
        let s = TightInstanceSpec {
            h: CostFunction::exp(CostFunction::identity()),
            x1: 0.0,
            y1: 1.0,
            x2: 1.0,
            y2: 2.0,
            lambda_kappa: None,
        };
        assert!(build_three_person(&s).is_err());
    }

    #[test]
    fn nonconvex_costs_by_hand() {
        let g = nonconvex_example(0.125).unwrap();
        let z = OpinionProfile::scalars(&[0.75, 0.75]);
        assert!((g.person_cost(0, &z).unwrap() - 9.0 / 64.0).abs() < 1e-15);
        assert!((g.social_cost(&z).unwrap() - 9.0 / 32.0).abs() < 1e-15);
        assert_eq!(g.social_cost(&OpinionProfile::scalars(&[0.0, 0.0])).unwrap(), 0.0);
        assert!(g.person_gradient(0, &z).unwrap()[0].abs() < 1e-15);
        assert!(g.check_symmetric().is_symmetric());
        assert!(!g.is_convex());
    }

    #[test]
    fn no_nash_game_is_flagged() {
        let g = no_nash_example();
        assert!(g.is_unsafe_indefinite());
        assert_eq!(g.w(0, 1).unwrap()[(0, 0)], -1.0);
    }
}
