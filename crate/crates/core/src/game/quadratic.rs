use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{OpinionGame, OpinionProfile, SymmetryReport};
use crate::error::{Error, Result};
use crate::linalg::{is_pd, require_psd, require_symmetric};

/// Matrix-weighted quadratic game:
/// `c_i(z) = (z_i - s_i)^T R_i (z_i - s_i) + sum_j (z_i - z_j)^T W_ij (z_i - z_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    m: usize,
    r: Vec<DMatrix<f64>>,
    s: Vec<DVector<f64>>,
    w: Vec<BTreeMap<usize, DMatrix<f64>>>,
    r_pd: Vec<bool>,
    unsafe_indefinite: bool,
}

impl QuadraticGame {
    /// Ordered-pair edges; `W_ij` and `W_ji` are independent entries.
    pub fn new(r: Vec<DMatrix<f64>>, s: Vec<DVector<f64>>, edges: Vec<(usize, usize, DMatrix<f64>)>) -> Result<Self> {
        Self::build(r, s, edges, false)
    }

    /// Each edge is inserted in both directions.
    pub fn undirected(
        r: Vec<DMatrix<f64>>,
        s: Vec<DVector<f64>>,
        edges: Vec<(usize, usize, DMatrix<f64>)>,
    ) -> Result<Self> {
        Self::build(r, s, mirror(edges), false)
    }

    /// Skips every PSD check on `R_i` and `W_ij`. Such games may have no Nash
    /// equilibrium; only dynamics accept them.
    pub fn new_unsafe_indefinite(
        r: Vec<DMatrix<f64>>,
        s: Vec<DVector<f64>>,
        edges: Vec<(usize, usize, DMatrix<f64>)>,
    ) -> Result<Self> {
        Self::build(r, s, edges, true)
    }

    /// Scalar undirected game from `r_i`, `s_i` and weights `w_ij`.
    pub fn scalar(r: &[f64], s: &[f64], edges: &[(usize, usize, f64)]) -> Result<Self> {
        let one = |x: f64| DMatrix::from_element(1, 1, x);
        Self::undirected(
            r.iter().map(|&x| one(x)).collect(),
            s.iter().map(|&x| DVector::from_element(1, x)).collect(),
            edges.iter().map(|&(i, j, w)| (i, j, one(w))).collect(),
        )
    }

    fn build(
        r: Vec<DMatrix<f64>>,
        s: Vec<DVector<f64>>,
        edges: Vec<(usize, usize, DMatrix<f64>)>,
        unsafe_indefinite: bool,
    ) -> Result<Self> {
        let n = r.len();
        if s.len() != n {
            return Err(Error::InvalidGame(format!("{n} matrices R but {} vectors s", s.len())));
        }
        let m = r.first().map_or(0, DMatrix::nrows);
        for (i, (ri, si)) in r.iter().zip(&s).enumerate() {
            if ri.shape() != (m, m) || si.len() != m {
                return Err(Error::InvalidGame(format!("person {i}: R or s not of dimension {m}")));
            }
            let ctx = format!("R_{i}");
            if unsafe_indefinite {
                require_symmetric(ri, &ctx)?;
            } else {
                require_psd(ri, &ctx)?;
            }
        }
        let mut w: Vec<BTreeMap<usize, DMatrix<f64>>> = vec![BTreeMap::new(); n];
        for (i, j, wij) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidGame(format!("invalid edge ({i}, {j}) for {n} persons")));
            }
            if wij.shape() != (m, m) {
                return Err(Error::InvalidGame(format!("W_({i},{j}) is not {m}x{m}")));
            }
            let ctx = format!("W_({i},{j})");
            if unsafe_indefinite {
                require_symmetric(&wij, &ctx)?;
            } else {
                require_psd(&wij, &ctx)?;
            }
            if w[i].insert(j, wij).is_some() {
                return Err(Error::InvalidGame(format!("duplicate edge ({i}, {j})")));
            }
        }
        let r_pd = r.iter().map(is_pd).collect();
        Ok(QuadraticGame {
            m,
            r,
            s,
            w,
            r_pd,
            unsafe_indefinite,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self, i: usize) -> &DMatrix<f64> {
        &self.r[i]
    }

    pub fn s(&self, i: usize) -> &DVector<f64> {
        &self.s[i]
    }

    pub fn w(&self, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        self.w[i].get(&j)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.w[i].iter().map(|(&j, w)| (j, w))
    }

    /// All ordered edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &DMatrix<f64>)> {
        self.w
            .iter()
            .enumerate()
            .flat_map(|(i, m)| m.iter().map(move |(&j, w)| (i, j, w)))
    }

    pub fn is_r_pd(&self, i: usize) -> bool {
        self.r_pd[i]
    }

    pub fn is_unsafe_indefinite(&self) -> bool {
        self.unsafe_indefinite
    }

    /// `sum_j W_ij`.
    pub fn weight_sum(&self, i: usize) -> DMatrix<f64> {
        self.w[i]
            .values()
            .fold(DMatrix::zeros(self.m, self.m), |acc, w| acc + w)
    }

    /// Errors on the first person whose `R_i` is not positive definite.
    pub fn require_pd_internal(&self) -> Result<()> {
        match self.r_pd.iter().position(|&pd| !pd) {
            None => Ok(()),
            Some(i) => Err(Error::NotPd {
                context: format!("R_{i}"),
                min_eigenvalue: crate::linalg::min_eigenvalue(&self.r[i]),
            }),
        }
    }

    pub fn internal_opinions(&self) -> OpinionProfile {
        OpinionProfile::new(self.s.clone())
    }
}

fn mirror(edges: Vec<(usize, usize, DMatrix<f64>)>) -> Vec<(usize, usize, DMatrix<f64>)> {
    edges
        .into_iter()
        .flat_map(|(i, j, w)| [(i, j, w.clone()), (j, i, w)])
        .collect()
}

impl OpinionGame for QuadraticGame {
    fn dims(&self) -> Vec<usize> {
        vec![self.m; self.r.len()]
    }

    fn n(&self) -> usize {
        self.r.len()
    }

    fn person_cost(&self, i: usize, z: &OpinionProfile) -> Result<f64> {
        z.check_dims(&self.dims())?;
        let zi = z.block(i);
        let d = zi - &self.s[i];
        let mut c = d.dot(&(&self.r[i] * &d));
        for (j, w) in self.neighbors(i) {
            let e = zi - z.block(j);
            c += e.dot(&(w * &e));
        }
        Ok(c)
    }

    fn person_gradient(&self, i: usize, z: &OpinionProfile) -> Result<DVector<f64>> {
        z.check_dims(&self.dims())?;
        let zi = z.block(i);
        let mut g = &self.r[i] * (zi - &self.s[i]);
        for (j, w) in self.neighbors(i) {
            g += w * (zi - z.block(j));
        }
        Ok(g * 2.0)
    }

    fn check_symmetric(&self) -> SymmetryReport {
        for (i, j, w) in self.edges() {
            if self.w(j, i) != Some(w) {
                return SymmetryReport::Violation(i, j);
            }
        }
        SymmetryReport::Symmetric
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_person_costs() {
        let g = QuadraticGame::scalar(&[1.0, 1.0], &[0.0, 1.0], &[(0, 1, 1.0)]).unwrap();
        let x = OpinionProfile::scalars(&[1.0 / 3.0, 2.0 / 3.0]);
        assert!((g.person_cost(0, &x).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        assert!((g.social_cost(&x).unwrap() - 4.0 / 9.0).abs() < 1e-15);
        let y = OpinionProfile::scalars(&[0.4, 0.6]);
        assert!((g.social_cost(&y).unwrap() - 0.4).abs() < 1e-15);
        assert!(g.person_gradient(0, &x).unwrap()[0].abs() < 1e-15);
        assert!(g.person_gradient(1, &x).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn symmetry_check() {
        let g = QuadraticGame::scalar(&[1.0, 1.0], &[0.0, 1.0], &[(0, 1, 1.0)]).unwrap();
        assert!(g.check_symmetric().is_symmetric());
        let one = |x| DMatrix::from_element(1, 1, x);
        let d = QuadraticGame::new(
            vec![one(1.0), one(1.0)],
            vec![DVector::zeros(1), DVector::zeros(1)],
            vec![(0, 1, one(1.0)), (1, 0, one(2.0))],
        )
        .unwrap();
        assert_eq!(d.check_symmetric(), SymmetryReport::Violation(0, 1));
    }

    #[test]
    fn indefinite_weights_need_unsafe_flag() {
        let one = |x| DMatrix::from_element(1, 1, x);
        let r = vec![one(0.0), one(0.0)];
        let s = vec![DVector::zeros(1), DVector::zeros(1)];
        let e = vec![(0, 1, one(-1.0)), (1, 0, one(-1.0))];
        assert!(matches!(
            QuadraticGame::new(r.clone(), s.clone(), e.clone()),
            Err(Error::NotPsd { .. })
        ));
        let g = QuadraticGame::new_unsafe_indefinite(r, s, e).unwrap();
        assert!(g.is_unsafe_indefinite());
        assert!(!g.is_r_pd(0));
    }
}
