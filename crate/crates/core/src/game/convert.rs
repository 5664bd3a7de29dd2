use nalgebra::{DMatrix, DVector};

use super::{HeterogeneousGame, InternalCost, OpinionGame, PairCost, Person, QuadraticGame};
use crate::cost_fn::CostFunction;
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, require_pd, require_psd};

/// Quadratic game as a heterogeneous one: `g_i = ||R_i^(1/2) x||^2` on
/// `z_i - s_i`, `f_ij = ||W_ij^(1/2) x||^2` on `z_i - z_j`. The pair with
/// `i < j` uses `A = I, B = -I` and its reverse `A = -I, B = I`, so both
/// directions are structurally mirror images.
pub fn quadratic_to_heterogeneous(q: &QuadraticGame) -> Result<HeterogeneousGame> {
    let m = q.m();
    let eye = DMatrix::<f64>::identity(m, m);
    let persons = (0..q.n())
        .map(|i| {
            Ok(Person {
                dim: m,
                internal: Some(InternalCost {
                    g: CostFunction::quadratic_form(psd_sqrt(q.r(i), &format!("R_{i}"))?),
                    r: eye.clone(),
                    s: q.s(i).clone(),
                }),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = q
        .edges()
        .map(|(i, j, w)| {
            let sign = if i < j { 1.0 } else { -1.0 };
            Ok((
                i,
                j,
                PairCost {
                    f: CostFunction::quadratic_form(psd_sqrt(w, &format!("W_({i},{j})"))?),
                    a: &eye * sign,
                    b: &eye * -sign,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    HeterogeneousGame::new(persons, pairs)
}

/// Multidimensional Friedkin-Johnsen instance as a quadratic game:
/// `W_ij = w_ij C`, `R_i = (r_i + sum_j w_ij) I - (sum_j w_ij) C`, internal
/// opinion `R_i^(-1) r_i s_i`. Edges are undirected.
pub fn fj_to_quadratic(
    r: &[f64],
    s: &[DVector<f64>],
    w: &[(usize, usize, f64)],
    c: &DMatrix<f64>,
) -> Result<QuadraticGame> {
    let n = r.len();
    if s.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{n} weights r but {} opinions s",
            s.len()
        )));
    }
    let m = c.nrows();
    require_psd(c, "C")?;
    for (k, row) in c.row_iter().enumerate() {
        if (row.sum() - 1.0).abs() > 1e-12 || row.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidArgument(format!("C is not row-stochastic at row {k}")));
        }
    }
    if let Some(i) = r.iter().position(|&ri| !(ri.is_finite() && ri > 0.0)) {
        return Err(Error::InvalidArgument(format!("r_{i} = {} must be positive", r[i])));
    }
    let mut total = vec![0.0; n];
    for &(i, j, wij) in w {
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidArgument(format!("invalid edge ({i}, {j})")));
        }
        if !(wij.is_finite() && wij >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "w_({i},{j}) = {wij} must be nonnegative"
            )));
        }
        total[i] += wij;
        total[j] += wij;
    }
    let eye = DMatrix::<f64>::identity(m, m);
    let mut rs = Vec::with_capacity(n);
    let mut ss = Vec::with_capacity(n);
    for i in 0..n {
        if s[i].len() != m {
            return Err(Error::DimensionMismatch {
                context: format!("s_{i}"),
                expected: m,
                got: s[i].len(),
            });
        }
        let ri = &eye * (r[i] + total[i]) - c * total[i];
        require_pd(&ri, &format!("R_{i}"))?;
        let chol = ri.clone().cholesky().ok_or_else(|| Error::NotPd {
            context: format!("R_{i}"),
            min_eigenvalue: crate::linalg::min_eigenvalue(&ri),
        })?;
        ss.push(chol.solve(&(&s[i] * r[i])));
        rs.push(ri);
    }
    let edges = w.iter().map(|&(i, j, wij)| (i, j, c * wij)).collect();
    QuadraticGame::undirected(rs, ss, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::OpinionProfile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conversion_preserves_costs_and_symmetry() {
        let q = QuadraticGame::scalar(&[1.0, 1.0], &[0.0, 1.0], &[(0, 1, 1.0)]).unwrap();
        let h = quadratic_to_heterogeneous(&q).unwrap();
        assert!(h.check_symmetric().is_symmetric());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let z = OpinionProfile::scalars(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            for i in 0..2 {
                let a = q.person_cost(i, &z).unwrap();
                let b = h.person_cost(i, &z).unwrap();
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn identity_weight_gives_difference_norm() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let q = QuadraticGame::undirected(
            vec![eye.clone(), eye.clone()],
            vec![DVector::zeros(2), DVector::zeros(2)],
            vec![(0, 1, eye.clone())],
        )
        .unwrap();
        let h = quadratic_to_heterogeneous(&q).unwrap();
        let pc = h.pair(0, 1).unwrap();
        assert_eq!(pc.f, CostFunction::quadratic_form(eye.clone()));
        assert_eq!(pc.a, eye);
        assert_eq!(pc.b, -eye);
    }

    #[test]
    fn non_psd_weight_is_rejected() {
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        let eye = DMatrix::<f64>::identity(2, 2);
        assert!(QuadraticGame::undirected(
            vec![eye.clone(), eye],
            vec![DVector::zeros(2), DVector::zeros(2)],
            vec![(0, 1, bad)],
        )
        .is_err());
    }

    #[test]
    fn fj_with_identity_coupling() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let s = vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![-1.0, 0.0])];
        let q = fj_to_quadratic(&[1.0, 1.0], &s, &[(0, 1, 1.0)], &eye).unwrap();
        assert_eq!(q.w(0, 1), Some(&eye));
        assert!((q.r(0) - &eye).amax() < 1e-15);
        assert!((q.s(0) - &s[0]).amax() < 1e-15);
    }

    #[test]
    fn fj_with_averaging_coupling() {
        let c = DMatrix::from_element(2, 2, 0.5);
        let s = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
        let q = fj_to_quadratic(&[1.0, 1.0], &s, &[(0, 1, 1.0)], &c).unwrap();
        let expected = DMatrix::<f64>::identity(2, 2) * 2.0 - &c;
        assert!((q.r(0) - expected).amax() < 1e-15);
        assert!(q.is_r_pd(0));
    }

    #[test]
    fn fj_rejects_indefinite_coupling() {
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = vec![DVector::zeros(2), DVector::zeros(2)];
        assert!(matches!(
            fj_to_quadratic(&[1.0, 1.0], &s, &[(0, 1, 1.0)], &c),
            Err(Error::NotPsd { .. })
        ));
        assert!(fj_to_quadratic(&[0.0, 1.0], &s, &[], &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn scalar_fj_reproduces_classic_cost() {
        let s = vec![
            DVector::from_element(1, 0.3),
            DVector::from_element(1, -0.7),
            DVector::from_element(1, 1.1),
        ];
        let r = [0.5, 2.0, 1.5];
        let w = [(0, 1, 0.8), (1, 2, 0.25)];
        let q = fj_to_quadratic(&r, &s, &w, &DMatrix::identity(1, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let zs: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let z = OpinionProfile::scalars(&zs);
            for i in 0..3 {
                let mut classic = r[i] * (zs[i] - s[i][0]).powi(2);
                for &(a, b, wab) in &w {
                    if a == i {
                        classic += wab * (zs[a] - zs[b]).powi(2);
                    } else if b == i {
                        classic += wab * (zs[b] - zs[a]).powi(2);
                    }
                }
                let got = q.person_cost(i, &z).unwrap();
                assert!((got - classic).abs() <= 1e-12 * (1.0 + classic));
            }
        }
    }
}
