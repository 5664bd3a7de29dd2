//! Simultaneous best-response dynamics for quadratic games, weight
//! normalization, the clone transformation and spectral convergence checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{OpinionGame, OpinionProfile, QuadraticGame};
use crate::linalg::{min_eigenvalue, pd_inv_sqrt, require_pd, sym_spectral_radius};

/// Stacked matrices of the update `z <- Lambda W z + Lambda R s`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    /// Block diagonal, `Lambda_ii = (R_i + sum_j W_ij)^(-1)`.
    pub lambda: DMatrix<f64>,
    /// `W_ij` off the diagonal, zero blocks on it.
    pub w: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// `L_ii = sum_j W_ij`, `L_ij = -W_ij`.
    pub l: DMatrix<f64>,
    pub s: DVector<f64>,
}

impl BlockSystem {
    pub fn from_game(q: &QuadraticGame) -> Result<Self> {
        let (n, m) = (q.n(), q.m());
        let map = UpdateMap::new(q)?;
        let dim = n * m;
        let mut lambda = DMatrix::zeros(dim, dim);
        let mut w = DMatrix::zeros(dim, dim);
        let mut r = DMatrix::zeros(dim, dim);
        let mut l = DMatrix::zeros(dim, dim);
        let mut s = DVector::zeros(dim);
        for i in 0..n {
            lambda.view_mut((i * m, i * m), (m, m)).copy_from(&map.h_inv[i]);
            r.view_mut((i * m, i * m), (m, m)).copy_from(q.r(i));
            l.view_mut((i * m, i * m), (m, m)).copy_from(&q.weight_sum(i));
            s.rows_mut(i * m, m).copy_from(q.s(i));
            for (j, wij) in q.neighbors(i) {
                w.view_mut((i * m, j * m), (m, m)).copy_from(wij);
                l.view_mut((i * m, j * m), (m, m)).copy_from(&(-wij));
            }
        }
        Ok(BlockSystem { lambda, w, r, l, s })
    }

    /// `||z - (Lambda W z + Lambda R s)||_inf` on a flattened profile.
    pub fn fixed_point_residual(&self, z: &DVector<f64>) -> f64 {
        let next = &self.lambda * (&self.w * z + &self.r * &self.s);
        (z - next).amax()
    }
}

/// Per-person inverses `(R_i + sum_j W_ij)^(-1)` and offsets `R_i s_i`.
struct UpdateMap {
    h_inv: Vec<DMatrix<f64>>,
    rs: Vec<DVector<f64>>,
}

impl UpdateMap {
    fn new(q: &QuadraticGame) -> Result<Self> {
        if !q.is_unsafe_indefinite() {
            q.require_pd_internal()?;
        }
        let mut h_inv = Vec::with_capacity(q.n());
        for i in 0..q.n() {
            let h = q.r(i) + q.weight_sum(i);
            let inv = h.clone().try_inverse().ok_or_else(|| Error::NotPd {
                context: format!("R_{i} + sum_j W_{i}j is singular"),
                min_eigenvalue: min_eigenvalue(&h),
            })?;
            h_inv.push(inv);
        }
        let rs = (0..q.n()).map(|i| q.r(i) * q.s(i)).collect();
        Ok(UpdateMap { h_inv, rs })
    }

    fn apply(&self, q: &QuadraticGame, z: &OpinionProfile) -> OpinionProfile {
        let blocks = (0..q.n())
            .map(|i| {
                let mut rhs = self.rs[i].clone();
                for (j, wij) in q.neighbors(i) {
                    rhs += wij * z.block(j);
                }
                &self.h_inv[i] * rhs
            })
            .collect();
        OpinionProfile::new(blocks)
    }
}

/// One simultaneous update
/// `z_i <- (R_i + sum_j W_ij)^(-1) (R_i s_i + sum_j W_ij z_j)`.
pub fn best_response_step(q: &QuadraticGame, z: &OpinionProfile) -> Result<OpinionProfile> {
    z.check_dims(&q.dims())?;
    Ok(UpdateMap::new(q)?.apply(q, z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateOptions {
    /// Converged once `||z(t+1) - z(t)||_inf <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Record every `stride`-th iterate; `None` records nothing.
    pub trace_stride: Option<usize>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            tol: 1e-10,
            max_iter: 10_000,
            trace_stride: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceReason {
    /// `||z(t)||_inf` exceeded `1e6 (1 + ||z0||_inf + ||s||_inf)`.
    BlowUp,
    /// `c_i` is unbounded below in `z_i`: `R_i + sum_j W_ij` has a negative
    /// eigenvalue, so no best response exists.
    UnboundedBestResponse { person: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationStatus {
    Converged,
    Diverged(DivergenceReason),
    MaxIterReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub status: SimulationStatus,
    /// Final iterate.
    pub z: OpinionProfile,
    pub iterations: usize,
    /// `||z(t) - z(t-1)||_inf` at the last step.
    pub last_step: f64,
    /// `(iteration, profile)` pairs, including iteration 0 and the final one.
    pub trace: Vec<(usize, OpinionProfile)>,
}

pub const BLOW_UP_FACTOR: f64 = 1e6;

/// Iterates [`best_response_step`] from `z0`. Games whose personal cost is
/// unbounded below (possible only for unsafe-flagged games) are reported as
/// diverged before any step.
pub fn simulate(q: &QuadraticGame, z0: &OpinionProfile, opts: &SimulateOptions) -> Result<Simulation> {
    z0.check_dims(&q.dims())?;
    if !q.is_unsafe_indefinite() {
        q.require_pd_internal()?;
    }
    for i in 0..q.n() {
        let h = q.r(i) + q.weight_sum(i);
        if min_eigenvalue(&h) < 0.0 {
            return Ok(Simulation {
                status: SimulationStatus::Diverged(DivergenceReason::UnboundedBestResponse { person: i }),
                z: z0.clone(),
                iterations: 0,
                last_step: 0.0,
                trace: opts.trace_stride.map(|_| vec![(0, z0.clone())]).unwrap_or_default(),
            });
        }
    }
    simulate_update_map(q, z0, opts)
}

/// Iterates the update map literally, without checking that it computes
/// actual best responses. Requires only that each `R_i + sum_j W_ij` is
/// invertible.
pub fn simulate_update_map(q: &QuadraticGame, z0: &OpinionProfile, opts: &SimulateOptions) -> Result<Simulation> {
    z0.check_dims(&q.dims())?;
    let map = UpdateMap::new(q)?;
    let s_inf = (0..q.n()).map(|i| q.s(i).amax()).fold(0.0, f64::max);
    let threshold = BLOW_UP_FACTOR * (1.0 + z0.max_abs() + s_inf);
    let stride = opts.trace_stride.map(|s| s.max(1));
    let mut trace = Vec::new();
    if stride.is_some() {
        trace.push((0, z0.clone()));
    }
    let mut z = z0.clone();
    let mut last_step = f64::INFINITY;
    let mut status = SimulationStatus::MaxIterReached;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let next = map.apply(q, &z);
        iterations += 1;
        last_step = next.max_abs_diff(&z);
        z = next;
        if stride.is_some_and(|s| iterations % s == 0) {
            trace.push((iterations, z.clone()));
        }
        if !z.is_finite() || z.max_abs() > threshold {
            status = SimulationStatus::Diverged(DivergenceReason::BlowUp);
            break;
        }
        if last_step <= opts.tol {
            status = SimulationStatus::Converged;
            break;
        }
    }
    if stride.is_some() && trace.last().map(|t| t.0) != Some(iterations) {
        trace.push((iterations, z.clone()));
    }
    Ok(Simulation {
        status,
        z,
        iterations,
        last_step,
        trace,
    })
}

/// First person whose weights do not sum to the identity, with the deviation
/// `||sum_j W_ij - I||_inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizationReport {
    Normalized,
    Violation { person: usize, deviation: f64 },
}

pub const NORMALIZATION_TOL: f64 = 1e-10;

pub fn is_weight_normalized(q: &QuadraticGame) -> NormalizationReport {
    let eye = DMatrix::<f64>::identity(q.m(), q.m());
    for i in 0..q.n() {
        let deviation = (q.weight_sum(i) - &eye).amax();
        if deviation > NORMALIZATION_TOL {
            return NormalizationReport::Violation { person: i, deviation };
        }
    }
    NormalizationReport::Normalized
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CloneScale {
    /// `max_i lambda_max(sum_j W_ij) + 1`.
    Auto,
    Fixed(f64),
}

/// Two copies of the game joined by cross edges `(i, i + n)` with weight
/// `d I - sum_j W_ij`, after which every `W` and `R` is divided by `d`. The
/// result is weight-normalized.
pub fn clone_transform(q: &QuadraticGame, scale: CloneScale) -> Result<QuadraticGame> {
    q.check_symmetric().into_result()?;
    q.require_pd_internal()?;
    let (n, m) = (q.n(), q.m());
    let sums: Vec<DMatrix<f64>> = (0..n).map(|i| q.weight_sum(i)).collect();
    let d = match scale {
        CloneScale::Auto => sums.iter().map(crate::linalg::max_eigenvalue).fold(0.0, f64::max) + 1.0,
        CloneScale::Fixed(d) => d,
    };
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidArgument(format!("clone scale d = {d} must be positive")));
    }
    let eye = DMatrix::<f64>::identity(m, m);
    let mut edges = Vec::with_capacity(2 * q.edges().count() + 2 * n);
    for (i, j, w) in q.edges() {
        edges.push((i, j, w / d));
        edges.push((i + n, j + n, w / d));
    }
    for (i, sum) in sums.iter().enumerate() {
        let cross = &eye * d - sum;
        require_pd(&cross, &format!("d I - sum_j W_{i}j with d = {d}")).map_err(|_| {
            Error::InvalidArgument(format!(
                "clone scale d = {d} too small: d I - sum_j W_{i}j is not positive definite"
            ))
        })?;
        edges.push((i, i + n, &cross / d));
        edges.push((i + n, i, cross / d));
    }
    let r: Vec<_> = (0..2 * n).map(|k| q.r(k % n) / d).collect();
    let s: Vec<_> = (0..2 * n).map(|k| q.s(k % n).clone()).collect();
    QuadraticGame::new(r, s, edges)
}

/// `blockdiag(H_i^(-1/2))` with `H_i = R_i + sum_j W_ij`.
fn lambda_half(q: &QuadraticGame) -> Result<DMatrix<f64>> {
    let (n, m) = (q.n(), q.m());
    let mut out = DMatrix::zeros(n * m, n * m);
    for i in 0..n {
        let h = q.r(i) + q.weight_sum(i);
        out.view_mut((i * m, i * m), (m, m))
            .copy_from(&pd_inv_sqrt(&h, &format!("R_{i} + sum_j W_{i}j"))?);
    }
    Ok(out)
}

/// `rho(Lambda W)` via the similar symmetric matrix
/// `Lambda^(1/2) W Lambda^(1/2)`.
pub fn spectral_radius(q: &QuadraticGame) -> Result<f64> {
    q.check_symmetric().into_result()?;
    q.require_pd_internal()?;
    let half = lambda_half(q)?;
    let sys = BlockSystem::from_game(q)?;
    let m = &half * &sys.w * &half;
    Ok(sym_spectral_radius(&((&m + m.transpose()) * 0.5)))
}

/// `(||Lambda||_2, ||W||_2)` for an undirected game.
pub fn block_norms(q: &QuadraticGame) -> Result<(f64, f64)> {
    q.check_symmetric().into_result()?;
    q.require_pd_internal()?;
    let lambda_norm = (0..q.n())
        .map(|i| 1.0 / min_eigenvalue(&(q.r(i) + q.weight_sum(i))))
        .fold(0.0, f64::max);
    let sys = BlockSystem::from_game(q)?;
    Ok((lambda_norm, sym_spectral_radius(&sys.w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::random::quadratic_corpus;

    fn two_person(w: f64) -> QuadraticGame {
        QuadraticGame::scalar(&[1.0, 1.0], &[0.0, 1.0], &[(0, 1, w)]).unwrap()
    }

    #[test]
    fn one_step_from_origin() {
        let z = best_response_step(&two_person(1.0), &OpinionProfile::scalars(&[0.0, 0.0])).unwrap();
        assert_eq!(z, OpinionProfile::scalars(&[0.0, 0.5]));
    }

    #[test]
    fn nash_is_a_fixed_point() {
        let x = OpinionProfile::scalars(&[1.0 / 3.0, 2.0 / 3.0]);
        let z = best_response_step(&two_person(1.0), &x).unwrap();
        assert!(z.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn no_edges_jump_to_internal_opinions() {
        let g = QuadraticGame::scalar(&[2.0, 0.5], &[0.3, -0.4], &[]).unwrap();
        let sim = simulate(&g, &OpinionProfile::scalars(&[5.0, 5.0]), &SimulateOptions::default()).unwrap();
        assert_eq!(sim.status, SimulationStatus::Converged);
        assert!(sim.z.max_abs_diff(&OpinionProfile::scalars(&[0.3, -0.4])) < 1e-15);
        assert_eq!(sim.iterations, 2);
        assert!(spectral_radius(&g).unwrap() == 0.0);
    }

    #[test]
    fn simulate_converges_to_nash() {
        let sim = simulate(
            &two_person(1.0),
            &OpinionProfile::scalars(&[0.0, 0.0]),
            &SimulateOptions {
                trace_stride: Some(5),
                ..SimulateOptions::default()
            },
        )
        .unwrap();
        assert_eq!(sim.status, SimulationStatus::Converged);
        assert!(sim.z.max_abs_diff(&OpinionProfile::scalars(&[1.0 / 3.0, 2.0 / 3.0])) < 1e-9);
        assert_eq!(sim.trace.first().unwrap().0, 0);
        assert_eq!(sim.trace.last().unwrap().0, sim.iterations);
    }

    #[test]
    fn two_person_spectral_radius() {
        assert!((spectral_radius(&two_person(1.0)).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn normalization_check() {
        assert_eq!(is_weight_normalized(&two_person(1.0)), NormalizationReport::Normalized);
        assert!(matches!(
            is_weight_normalized(&two_person(0.5)),
            NormalizationReport::Violation { person: 0, .. }
        ));
    }

    #[test]
    fn clone_of_two_person_game() {
        let c = clone_transform(&two_person(1.0), CloneScale::Fixed(2.0)).unwrap();
        assert_eq!(c.n(), 4);
        assert_eq!(c.w(0, 2).unwrap()[(0, 0)], 0.5);
        assert_eq!(c.w(0, 1).unwrap()[(0, 0)], 0.5);
        assert_eq!(c.r(3)[(0, 0)], 0.5);
        assert_eq!(is_weight_normalized(&c), NormalizationReport::Normalized);
        assert!(clone_transform(&two_person(1.0), CloneScale::Fixed(0.5)).is_err());
    }

    #[test]
    fn clone_of_normalized_game_stays_normalized() {
        let c = clone_transform(&two_person(1.0), CloneScale::Fixed(2.0)).unwrap();
        let cc = clone_transform(&c, CloneScale::Fixed(2.0)).unwrap();
        assert_eq!(cc.w(0, 4).unwrap()[(0, 0)], 0.5);
        assert_eq!(is_weight_normalized(&cc), NormalizationReport::Normalized);
    }

    #[test]
    fn normalized_corpus_norm_bounds() {
        for g in quadratic_corpus(10, 5) {
            let c = clone_transform(&g, CloneScale::Auto).unwrap();
            let (ln, wn) = block_norms(&c).unwrap();
            assert!(ln < 1.0 && wn <= 1.0 + 1e-12, "{ln} {wn}");
            let rho = spectral_radius(&c).unwrap();
            assert!(rho < 1.0);
        }
    }

    #[test]
    fn block_system_fixed_point() {
        let g = two_person(1.0);
        let sys = BlockSystem::from_game(&g).unwrap();
        let x = DVector::from_vec(vec![1.0 / 3.0, 2.0 / 3.0]);
        assert!(sys.fixed_point_residual(&x) < 1e-15);
        assert_eq!(sys.l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn indefinite_game_has_no_best_response() {
        let one = |x| DMatrix::from_element(1, 1, x);
        let g = QuadraticGame::new_unsafe_indefinite(
            vec![one(0.0), one(0.0)],
            vec![DVector::zeros(1), DVector::zeros(1)],
            vec![(0, 1, one(-1.0)), (1, 0, one(-1.0))],
        )
        .unwrap();
        let sim = simulate(&g, &OpinionProfile::scalars(&[0.0, 1.0]), &SimulateOptions::default()).unwrap();
        assert!(matches!(
            sim.status,
            SimulationStatus::Diverged(DivergenceReason::UnboundedBestResponse { person: 0 })
        ));
    }
}
