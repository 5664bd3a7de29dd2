use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{OpinionGame, OpinionProfile, SymmetryReport};
use crate::cost_fn::CostFunction;
use crate::error::{Error, Result};

/// `g(R z_i - s)`, with `R` of shape `e x m_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalCost {
    pub g: CostFunction,
    pub r: DMatrix<f64>,
    pub s: DVector<f64>,
}

impl InternalCost {
    pub fn argument(&self, zi: &DVector<f64>) -> DVector<f64> {
        &self.r * zi - &self.s
    }
}

/// `f(A z_i + B z_j)`, with `A` of shape `d x m_i` and `B` of shape `d x m_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCost {
    pub f: CostFunction,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl PairCost {
    pub fn argument(&self, zi: &DVector<f64>, zj: &DVector<f64>) -> DVector<f64> {
        &self.a * zi + &self.b * zj
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Person {
    pub dim: usize,
    /// `None` means no internal cost.
    pub internal: Option<InternalCost>,
}

/// Persons with individual dimensions, internal costs and ordered pairwise
/// costs. Absent pairs carry zero cost.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousGame {
    persons: Vec<Person>,
    /// `out[i][j]` is the cost `(i, j)` that person `i` pays.
    out: Vec<BTreeMap<usize, PairCost>>,
    /// `incoming[j]` lists every `i` with a pair `(i, j)`.
    incoming: Vec<Vec<usize>>,
}

impl HeterogeneousGame {
    pub fn new(persons: Vec<Person>, pairs: Vec<(usize, usize, PairCost)>) -> Result<Self> {
        let n = persons.len();
        for (i, p) in persons.iter().enumerate() {
            if let Some(ic) = &p.internal {
                ic.g.validate()?;
                let e = ic.g.input_dim();
                if ic.r.nrows() != e || ic.r.ncols() != p.dim {
                    return Err(Error::InvalidGame(format!(
                        "person {i}: R is {}x{}, expected {e}x{}",
                        ic.r.nrows(),
                        ic.r.ncols(),
                        p.dim
                    )));
                }
                if ic.s.len() != e {
                    return Err(Error::InvalidGame(format!(
                        "person {i}: s has length {}, expected {e}",
                        ic.s.len()
                    )));
                }
            }
        }
        let mut out: Vec<BTreeMap<usize, PairCost>> = vec![BTreeMap::new(); n];
        let mut incoming = vec![Vec::new(); n];
        for (i, j, pc) in pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidGame(format!("invalid pair ({i}, {j}) for {n} persons")));
            }
            pc.f.validate()?;
            let d = pc.f.input_dim();
            let (mi, mj) = (persons[i].dim, persons[j].dim);
            if pc.a.shape() != (d, mi) || pc.b.shape() != (d, mj) {
                return Err(Error::InvalidGame(format!(
                    "pair ({i}, {j}): A is {:?}, B is {:?}, expected ({d}, {mi}) and ({d}, {mj})",
                    pc.a.shape(),
                    pc.b.shape()
                )));
            }
            if out[i].insert(j, pc).is_some() {
                return Err(Error::InvalidGame(format!("duplicate pair ({i}, {j})")));
            }
            incoming[j].push(i);
        }
        Ok(HeterogeneousGame { persons, out, incoming })
    }

    pub fn persons(&self) -> &[Person] {
        &self.persons
    }

    pub fn internal(&self, i: usize) -> Option<&InternalCost> {
        self.persons[i].internal.as_ref()
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<&PairCost> {
        self.out[i].get(&j)
    }

    pub fn out_pairs(&self, i: usize) -> impl Iterator<Item = (usize, &PairCost)> {
        self.out[i].iter().map(|(&j, pc)| (j, pc))
    }

    pub fn in_neighbors(&self, j: usize) -> &[usize] {
        &self.incoming[j]
    }

    /// All ordered pairs in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), &PairCost)> {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, m)| m.iter().map(move |(&j, pc)| ((i, j), pc)))
    }

    pub fn pair_count(&self) -> usize {
        self.out.iter().map(BTreeMap::len).sum()
    }

    /// Every cost function is convex by construction.
    pub fn is_convex(&self) -> bool {
        self.persons
            .iter()
            .filter_map(|p| p.internal.as_ref())
            .all(|ic| ic.g.is_convex())
            && self.pairs().all(|(_, pc)| pc.f.is_convex())
    }

    /// Name of the first cost function not certified convex, if any.
    pub fn first_nonconvex(&self) -> Option<String> {
        for (i, p) in self.persons.iter().enumerate() {
            if let Some(ic) = &p.internal {
                if !ic.g.is_convex() {
                    return Some(format!("internal cost of person {i} ({})", ic.g.kind_name()));
                }
            }
        }
        self.pairs()
            .find(|(_, pc)| !pc.f.is_convex())
            .map(|((i, j), pc)| format!("pair cost ({i}, {j}) ({})", pc.f.kind_name()))
    }

    /// Gradient of the social cost with respect to every block.
    pub fn social_gradient(&self, z: &OpinionProfile) -> Result<OpinionProfile> {
        z.check_dims(&self.dims())?;
        let mut blocks: Vec<DVector<f64>> = self.persons.iter().map(|p| DVector::zeros(p.dim)).collect();
        for (i, p) in self.persons.iter().enumerate() {
            if let Some(ic) = &p.internal {
                let g = ic.g.grad_unchecked(&ic.argument(z.block(i)))?;
                blocks[i] += ic.r.tr_mul(&g);
            }
        }
        for ((i, j), pc) in self.pairs() {
            let g = pc.f.grad_unchecked(&pc.argument(z.block(i), z.block(j)))?;
            blocks[i] += pc.a.tr_mul(&g);
            blocks[j] += pc.b.tr_mul(&g);
        }
        Ok(OpinionProfile::new(blocks))
    }
}

impl OpinionGame for HeterogeneousGame {
    fn dims(&self) -> Vec<usize> {
        self.persons.iter().map(|p| p.dim).collect()
    }

    fn n(&self) -> usize {
        self.persons.len()
    }

    fn person_cost(&self, i: usize, z: &OpinionProfile) -> Result<f64> {
        z.check_dims(&self.dims())?;
        let mut c = 0.0;
        if let Some(ic) = self.internal(i) {
            c += ic.g.eval_unchecked(&ic.argument(z.block(i)));
        }
        for (j, pc) in self.out_pairs(i) {
            c += pc.f.eval_unchecked(&pc.argument(z.block(i), z.block(j)));
        }
        Ok(c)
    }

    fn person_gradient(&self, i: usize, z: &OpinionProfile) -> Result<DVector<f64>> {
        z.check_dims(&self.dims())?;
        let mut g = DVector::zeros(self.persons[i].dim);
        if let Some(ic) = self.internal(i) {
            g += ic.r.tr_mul(&ic.g.grad_unchecked(&ic.argument(z.block(i)))?);
        }
        for (j, pc) in self.out_pairs(i) {
            g += pc.a.tr_mul(&pc.f.grad_unchecked(&pc.argument(z.block(i), z.block(j)))?);
        }
        Ok(g)
    }

    fn check_symmetric(&self) -> SymmetryReport {
        for ((i, j), pc) in self.pairs() {
            let Some(back) = self.pair(j, i) else {
                return SymmetryReport::Violation(i, j);
            };
            if pc.f != back.f || pc.a != back.b || pc.b != back.a {
                return SymmetryReport::Violation(i, j);
            }
        }
        SymmetryReport::Symmetric
    }
}
