//! Clique games, where each clique of persons minimizes the summed cost of
//! its members, and their reduction to an ordinary heterogeneous game whose
//! persons are the cliques.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::cost_fn::CostFunction;
use crate::cost_fn::SampleSpec;
use crate::equilibrium::{optimum_general, poa_upper_bound, BoundReport, NashOptions, PoaReport, PoaValue, Solve};
use crate::error::{Error, Result};
use crate::game::{
    quadratic_to_heterogeneous, random::random_undirected_quadratic, HeterogeneousGame, InternalCost, OpinionGame,
    OpinionProfile, PairCost, Person,
};
use crate::optimize::{minimize, GdOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct CliqueGame {
    base: HeterogeneousGame,
    /// Members of each clique, ascending.
    cliques: Vec<Vec<usize>>,
    clique_of: Vec<usize>,
}

impl CliqueGame {
    pub fn new(base: HeterogeneousGame, partition: Vec<Vec<usize>>) -> Result<Self> {
        let n = base.n();
        let mut clique_of = vec![usize::MAX; n];
        let mut cliques = partition;
        for (c, members) in cliques.iter_mut().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidGame(format!("clique {c} is empty")));
            }
            members.sort_unstable();
            for &j in members.iter() {
                if j >= n {
                    return Err(Error::InvalidGame(format!("clique {c} names person {j} of {n}")));
                }
                if clique_of[j] != usize::MAX {
                    return Err(Error::InvalidGame(format!("person {j} is in two cliques")));
                }
                clique_of[j] = c;
            }
        }
        if let Some(j) = clique_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidGame(format!("person {j} is in no clique")));
        }
        Ok(CliqueGame {
            base,
            cliques,
            clique_of,
        })
    }

    pub fn base(&self) -> &HeterogeneousGame {
        &self.base
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.cliques
    }

    pub fn clique_of(&self, person: usize) -> usize {
        self.clique_of[person]
    }

    /// `q_i(z) = sum_{j in C_i} c_j(z)`.
    pub fn clique_cost(&self, i: usize, z: &OpinionProfile) -> Result<f64> {
        let members = self
            .cliques
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("no clique {i}")))?;
        let mut q = 0.0;
        for &j in members {
            q += self.base.person_cost(j, z)?;
        }
        Ok(q)
    }

    /// Reduced-game dimension of clique `i`.
    fn stack_dim(&self, i: usize) -> usize {
        self.cliques[i].iter().map(|&j| self.base.persons()[j].dim).sum()
    }

    /// Offset of each member's block inside its clique's stacked vector.
    fn offset_in_stack(&self, person: usize) -> usize {
        let c = self.clique_of[person];
        self.cliques[c]
            .iter()
            .take_while(|&&j| j != person)
            .map(|&j| self.base.persons()[j].dim)
            .sum()
    }

    /// Base profile as a reduced-game profile.
    pub fn stack(&self, z: &OpinionProfile) -> Result<OpinionProfile> {
        z.check_dims(&self.base.dims())?;
        let blocks = self
            .cliques
            .iter()
            .map(|members| {
                let parts: Vec<f64> = members.iter().flat_map(|&j| z.block(j).iter().copied()).collect();
                DVector::from_vec(parts)
            })
            .collect();
        Ok(OpinionProfile::new(blocks))
    }

    /// Reduced-game profile as a base profile.
    pub fn unstack(&self, zr: &OpinionProfile) -> Result<OpinionProfile> {
        let dims: Vec<usize> = (0..self.cliques.len()).map(|i| self.stack_dim(i)).collect();
        zr.check_dims(&dims)?;
        let mut z = OpinionProfile::zeros(&self.base.dims());
        for (c, members) in self.cliques.iter().enumerate() {
            for &j in members {
                let off = self.offset_in_stack(j);
                let m = self.base.persons()[j].dim;
                z.block_mut(j).copy_from(&zr.block(c).rows(off, m));
            }
        }
        Ok(z)
    }

    /// `L_j`: picks member `j`'s block out of its clique's stacked vector.
    fn selector(&self, person: usize) -> DMatrix<f64> {
        let c = self.clique_of[person];
        let m = self.base.persons()[person].dim;
        let off = self.offset_in_stack(person);
        DMatrix::from_fn(m, self.stack_dim(c), |r, col| if col == off + r { 1.0 } else { 0.0 })
    }

    /// Flat game with one person per clique. Its internal cost gathers the
    /// members' internal costs and all intra-clique pair costs; its pair costs
    /// gather the pair costs between two cliques.
    pub fn reduce(&self) -> Result<HeterogeneousGame> {
        self.base.check_symmetric().into_result()?;
        let t = self.cliques.len();
        let selectors: Vec<DMatrix<f64>> = (0..self.base.n()).map(|j| self.selector(j)).collect();
        let mut persons = Vec::with_capacity(t);
        for (c, members) in self.cliques.iter().enumerate() {
            let dim = self.stack_dim(c);
            let mut terms = Vec::new();
            for &j in members {
                if let Some(ic) = self.base.internal(j) {
                    terms.push(CostFunction::affine(&ic.r * &selectors[j], -&ic.s, ic.g.clone())?);
                }
            }
            for &j in members {
                for (k, pc) in self.base.out_pairs(j) {
                    if self.clique_of[k] == c {
                        let map = &pc.a * &selectors[j] + &pc.b * &selectors[k];
                        terms.push(CostFunction::affine(map, DVector::zeros(pc.a.nrows()), pc.f.clone())?);
                    }
                }
            }
            let internal = if terms.is_empty() {
                None
            } else {
                Some(InternalCost {
                    g: CostFunction::sum(terms)?,
                    r: DMatrix::identity(dim, dim),
                    s: DVector::zeros(dim),
                })
            };
            persons.push(Person { dim, internal });
        }
        let mut pairs = Vec::new();
        for ci in 0..t {
            for cl in (ci + 1)..t {
                // Canonical order: members of the lower clique outside,
                // members of the higher clique inside.
                let links: Vec<(usize, usize)> = self.cliques[ci]
                    .iter()
                    .flat_map(|&j| self.cliques[cl].iter().map(move |&k| (j, k)))
                    .filter(|&(j, k)| self.base.pair(j, k).is_some())
                    .collect();
                if links.is_empty() {
                    continue;
                }
                let total: usize = links
                    .iter()
                    .map(|&(j, k)| self.base.pair(j, k).unwrap().f.input_dim())
                    .sum();
                let mut fwd = Vec::with_capacity(links.len());
                let mut bwd = Vec::with_capacity(links.len());
                let (mut a_fwd, mut b_fwd) = (Vec::new(), Vec::new());
                let (mut a_bwd, mut b_bwd) = (Vec::new(), Vec::new());
                let mut off = 0;
                for &(j, k) in &links {
                    let p_jk = self.base.pair(j, k).unwrap();
                    let p_kj = self.base.pair(k, j).unwrap();
                    let d = p_jk.f.input_dim();
                    let pick = DMatrix::from_fn(d, total, |r, col| if col == off + r { 1.0 } else { 0.0 });
                    fwd.push(CostFunction::affine(pick.clone(), DVector::zeros(d), p_jk.f.clone())?);
                    bwd.push(CostFunction::affine(pick, DVector::zeros(d), p_kj.f.clone())?);
                    a_fwd.push(&p_jk.a * &selectors[j]);
                    b_fwd.push(&p_jk.b * &selectors[k]);
                    a_bwd.push(&p_kj.a * &selectors[k]);
                    b_bwd.push(&p_kj.b * &selectors[j]);
                    off += d;
                }
                pairs.push((
                    ci,
                    cl,
                    PairCost {
                        f: CostFunction::sum(fwd)?,
                        a: vstack(&a_fwd),
                        b: vstack(&b_fwd),
                    },
                ));
                pairs.push((
                    cl,
                    ci,
                    PairCost {
                        f: CostFunction::sum(bwd)?,
                        a: vstack(&a_bwd),
                        b: vstack(&b_bwd),
                    },
                ));
            }
        }
        HeterogeneousGame::new(persons, pairs)
    }

    /// Gradient of `q_c` with respect to each member's block.
    fn member_gradients(&self, c: usize, z: &OpinionProfile) -> Result<Vec<DVector<f64>>> {
        let members = &self.cliques[c];
        let mut grads: Vec<DVector<f64>> = members
            .iter()
            .map(|&j| DVector::zeros(self.base.persons()[j].dim))
            .collect();
        let slot = |p: usize| members.binary_search(&p).ok();
        for (idx, &j) in members.iter().enumerate() {
            if let Some(ic) = self.base.internal(j) {
                grads[idx] += ic.r.tr_mul(&ic.g.grad_unchecked(&ic.argument(z.block(j)))?);
            }
            for (k, pc) in self.base.out_pairs(j) {
                let g = pc.f.grad_unchecked(&pc.argument(z.block(j), z.block(k)))?;
                grads[idx] += pc.a.tr_mul(&g);
                if let Some(kk) = slot(k) {
                    grads[kk] += pc.b.tr_mul(&g);
                }
            }
        }
        Ok(grads)
    }

    /// `max_c max_{j in C_c} ||grad_j q_c(z)||_inf`.
    pub fn nash_residual(&self, z: &OpinionProfile) -> Result<f64> {
        let mut worst = 0.0_f64;
        for c in 0..self.cliques.len() {
            for g in self.member_gradients(c, z)? {
                worst = worst.max(g.amax());
            }
        }
        Ok(worst)
    }

    fn write_stack(&self, c: usize, x: &DVector<f64>, z: &mut OpinionProfile) {
        let mut off = 0;
        for &j in &self.cliques[c] {
            let m = self.base.persons()[j].dim;
            z.block_mut(j).copy_from(&x.rows(off, m));
            off += m;
        }
    }

    fn read_stack(&self, c: usize, z: &OpinionProfile) -> DVector<f64> {
        let parts: Vec<f64> = self.cliques[c]
            .iter()
            .flat_map(|&j| z.block(j).iter().copied())
            .collect();
        DVector::from_vec(parts)
    }

    /// Round-robin over cliques; each clique jointly minimizes `q_c` over its
    /// members' blocks by gradient descent.
    pub fn nash(&self, z0: &OpinionProfile, opts: &NashOptions) -> Result<Solve> {
        z0.check_dims(&self.base.dims())?;
        self.base.check_symmetric().into_result()?;
        if let Some(what) = self.base.first_nonconvex() {
            return Err(Error::Unsupported(format!("{what} is not convex by construction")));
        }
        let gd = GdOptions {
            tol: opts.inner_tol,
            max_iter: opts.inner_max_iter,
            ..GdOptions::default()
        };
        let mut z = z0.clone();
        for round in 1..=opts.max_rounds {
            let mut moved = 0.0_f64;
            for c in 0..self.cliques.len() {
                let start = self.read_stack(c, &z);
                let work = std::cell::RefCell::new(z.clone());
                let value = |x: &DVector<f64>| {
                    let mut w = work.borrow_mut();
                    self.write_stack(c, x, &mut w);
                    self.clique_cost(c, &w)
                };
                let grad = |x: &DVector<f64>| {
                    let mut w = work.borrow_mut();
                    self.write_stack(c, x, &mut w);
                    let parts = self.member_gradients(c, &w)?;
                    Ok(DVector::from_vec(
                        parts.iter().flat_map(|g| g.iter().copied()).collect(),
                    ))
                };
                let r = minimize(value, grad, start.clone(), &gd)?;
                moved = moved.max((&r.x - &start).amax());
                self.write_stack(c, &r.x, &mut z);
            }
            if moved <= opts.outer_tol {
                let residual = self.nash_residual(&z)?;
                return Ok(Solve {
                    z,
                    iterations: round,
                    residual,
                });
            }
        }
        Err(Error::NotConverged {
            solver: "clique round-robin best response",
            iterations: opts.max_rounds,
            residual: self.nash_residual(&z).unwrap_or(f64::NAN),
            best: z.flat().as_slice().to_vec(),
        })
    }

    /// Price of anarchy computed on the clique game itself.
    pub fn price_of_anarchy(&self, nash: &NashOptions, optimum_tol: f64, optimum_max_iter: usize) -> Result<PoaReport> {
        let z0 = OpinionProfile::zeros(&self.base.dims());
        let x = self.nash(&z0, nash)?;
        let y = optimum_general(&self.base, &z0, optimum_tol, optimum_max_iter)?;
        let sc_nash = self.base.social_cost(&x.z)?;
        let sc_optimum = self.base.social_cost(&y.z)?;
        Ok(PoaReport {
            value: PoaValue::classify(sc_nash, sc_optimum),
            sc_nash,
            sc_optimum,
            nash_residual: x.residual,
            optimum_residual: y.residual,
            nash_iterations: x.iterations,
            optimum_iterations: y.iterations,
            nash: x.z,
            optimum: y.z,
        })
    }

    /// Certificate bound; pair costs need both `p = 1` and `p = 2`.
    pub fn poa_upper_bound(&self, lambda: f64, kappa: f64, verify: Option<(&SampleSpec, u64)>) -> Result<BoundReport> {
        poa_upper_bound(&self.base, lambda, kappa, verify, true)
    }
}

fn vstack(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = parts.iter().map(DMatrix::nrows).sum();
    let cols = parts.first().map_or(0, DMatrix::ncols);
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.view_mut((at, 0), p.shape()).copy_from(p);
        at += p.nrows();
    }
    out
}

/// Quadratic-derived clique game with `2 <= n <= 8`, `1 <= m <= 3` and a
/// random partition into between 1 and `n` cliques.
pub fn random_clique_game(rng: &mut impl Rng) -> Result<CliqueGame> {
    let n = rng.gen_range(2..=8);
    let m = rng.gen_range(1..=3);
    let density = rng.gen_range(0.3..=0.9);
    let q = random_undirected_quadratic(n, m, density, rng)?;
    let base = quadratic_to_heterogeneous(&q)?;
    let t = rng.gen_range(1..=n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut partition = vec![Vec::new(); t];
    for (k, &p) in order.iter().enumerate() {
        let c = if k < t { k } else { rng.gen_range(0..t) };
        partition[c].push(p);
    }
    CliqueGame::new(base, partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::nash_general;
    use crate::game::QuadraticGame;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base() -> HeterogeneousGame {
        let q = QuadraticGame::scalar(
            &[1.0, 2.0, 0.5, 1.5],
            &[0.0, 1.0, -1.0, 0.5],
            &[(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (0, 3, 0.25)],
        )
        .unwrap();
        quadratic_to_heterogeneous(&q).unwrap()
    }

    #[test]
    fn partition_is_validated() {
        assert!(CliqueGame::new(base(), vec![vec![0, 1], vec![2]]).is_err());
        assert!(CliqueGame::new(base(), vec![vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(CliqueGame::new(base(), vec![vec![0, 1], vec![], vec![2, 3]]).is_err());
        assert!(CliqueGame::new(base(), vec![vec![3, 1], vec![2, 0]]).is_ok());
    }

    #[test]
    fn singleton_cliques_reduce_to_an_equivalent_game() {
        let g = CliqueGame::new(base(), (0..4).map(|j| vec![j]).collect()).unwrap();
        let r = g.reduce().unwrap();
        let z = OpinionProfile::scalars(&[0.3, -0.2, 1.1, 0.7]);
        for i in 0..4 {
            let a = g.clique_cost(i, &z).unwrap();
            let b = r.person_cost(i, &z).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn reduction_matches_clique_costs() {
        let g = CliqueGame::new(base(), vec![vec![0, 2], vec![1, 3]]).unwrap();
        let r = g.reduce().unwrap();
        assert!(r.check_symmetric().is_symmetric());
        let z = OpinionProfile::scalars(&[0.3, -0.2, 1.1, 0.7]);
        let zr = g.stack(&z).unwrap();
        assert_eq!(g.unstack(&zr).unwrap(), z);
        for i in 0..2 {
            let a = g.clique_cost(i, &z).unwrap();
            let b = r.person_cost(i, &zr).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn one_clique_is_social_cost() {
        let g = CliqueGame::new(base(), vec![vec![0, 1, 2, 3]]).unwrap();
        let r = g.reduce().unwrap();
        let z = OpinionProfile::scalars(&[0.3, -0.2, 1.1, 0.7]);
        let sc = g.base().social_cost(&z).unwrap();
        assert!((r.person_cost(0, &g.stack(&z).unwrap()).unwrap() - sc).abs() < 1e-12);
    }

    #[test]
    fn native_nash_matches_reduced_nash() {
        let g = CliqueGame::new(base(), vec![vec![0, 2], vec![1], vec![3]]).unwrap();
        let opts = NashOptions::default();
        let native = g.nash(&OpinionProfile::zeros(&[1, 1, 1, 1]), &opts).unwrap();
        let r = g.reduce().unwrap();
        let zr0 = g.stack(&OpinionProfile::zeros(&[1, 1, 1, 1])).unwrap();
        let reduced = nash_general(&r, &zr0, &opts).unwrap();
        let back = g.unstack(&reduced.z).unwrap();
        assert!(native.z.max_abs_diff(&back) < 1e-8);
    }

    #[test]
    fn two_person_singleton_clique_cost() {
        let q = QuadraticGame::scalar(&[1.0, 1.0], &[0.0, 1.0], &[(0, 1, 1.0)]).unwrap();
        let g = CliqueGame::new(quadratic_to_heterogeneous(&q).unwrap(), vec![vec![0], vec![1]]).unwrap();
        let z = OpinionProfile::scalars(&[1.0 / 3.0, 2.0 / 3.0]);
        assert!((g.clique_cost(0, &z).unwrap() - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_clique_nash_is_ordinary_nash() {
        let g = CliqueGame::new(base(), (0..4).map(|j| vec![j]).collect()).unwrap();
        let z0 = OpinionProfile::zeros(&[1, 1, 1, 1]);
        let opts = NashOptions::default();
        let a = g.nash(&z0, &opts).unwrap();
        let b = nash_general(g.base(), &z0, &opts).unwrap();
        assert!(a.z.max_abs_diff(&b.z) < 1e-6);
    }

    #[test]
    fn grand_clique_nash_is_social_optimum() {
        let g = CliqueGame::new(base(), vec![vec![0, 1, 2, 3]]).unwrap();
        let z0 = OpinionProfile::zeros(&[1, 1, 1, 1]);
        let opts = NashOptions::default();
        let a = g.nash(&z0, &opts).unwrap();
        let y = optimum_general(g.base(), &z0, 1e-10, 1_000_000).unwrap();
        assert!(a.z.max_abs_diff(&y.z) < 1e-6);
        let poa = g.price_of_anarchy(&opts, 1e-10, 1_000_000).unwrap();
        assert!((poa.value.as_f64() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn three_person_clique_matches_reduced_nash() {
        let q = QuadraticGame::scalar(
            &[1.0, 0.5, 2.0],
            &[1.0, -1.0, 0.5],
            &[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 0.5)],
        )
        .unwrap();
        let g = CliqueGame::new(quadratic_to_heterogeneous(&q).unwrap(), vec![vec![0, 1], vec![2]]).unwrap();
        let opts = NashOptions::default();
        let native = g.nash(&OpinionProfile::zeros(&[1, 1, 1]), &opts).unwrap();
        let r = g.reduce().unwrap();
        let reduced = nash_general(&r, &OpinionProfile::zeros(&[2, 1]), &opts).unwrap();
        assert!(native.z.max_abs_diff(&g.unstack(&reduced.z).unwrap()) < 1e-6);
    }

    #[test]
    fn random_clique_games_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let g = random_clique_game(&mut rng).unwrap();
            assert!(g.reduce().unwrap().check_symmetric().is_symmetric());
        }
    }
}
