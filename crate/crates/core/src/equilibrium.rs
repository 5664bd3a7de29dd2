//! Nash and social-optimum solvers, price of anarchy, Nash verification and
//! the certificate-based upper bound.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost_fn::{
    derive_certificate, verify_suitability, PSet, SampleSpec, SuitabilityCertificate, VerificationReport,
};
use crate::dynamics::BlockSystem;
use crate::error::{Error, Result};
use crate::game::{quadratic_to_heterogeneous, HeterogeneousGame, OpinionGame, OpinionProfile, QuadraticGame};
use crate::linalg::max_abs;
use crate::optimize::{minimize, GdOptions};

/// Absolute floor below which a social cost counts as zero.
pub const SC_FLOOR: f64 = 1e-12;

fn solve_pd(m: DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let min = crate::linalg::min_eigenvalue(&m);
    let chol = m.cholesky().ok_or_else(|| Error::NotPd {
        context: what.to_string(),
        min_eigenvalue: min,
    })?;
    Ok(chol.solve(rhs))
}

fn closed_form(q: &QuadraticGame, l_factor: f64, what: &str) -> Result<OpinionProfile> {
    q.check_symmetric().into_result()?;
    q.require_pd_internal()?;
    let sys = BlockSystem::from_game(q)?;
    let rhs = &sys.r * &sys.s;
    let lhs = &sys.r + &sys.l * l_factor;
    let x = solve_pd(lhs.clone(), &rhs, what)?;
    let residual = (&lhs * &x - &rhs).amax();
    let scale = rhs.amax();
    if residual > 1e-9 * scale.max(f64::MIN_POSITIVE) && residual > 1e-12 {
        return Err(Error::NotConverged {
            solver: "closed-form solve",
            iterations: 1,
            residual,
            best: x.as_slice().to_vec(),
        });
    }
    OpinionProfile::from_flat(x.as_slice(), &q.dims())
}

/// Unique Nash equilibrium `x = (R + L)^(-1) R s`.
pub fn nash_quadratic(q: &QuadraticGame) -> Result<OpinionProfile> {
    closed_form(q, 1.0, "R + L")
}

/// Social optimum `y = (R + 2L)^(-1) R s`.
pub fn optimum_quadratic(q: &QuadraticGame) -> Result<OpinionProfile> {
    closed_form(q, 2.0, "R + 2L")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashOptions {
    /// Per-person stop on `||grad_i c_i||_inf`.
    pub inner_tol: f64,
    /// Stop once every block moved by at most this in a round.
    pub outer_tol: f64,
    pub max_rounds: usize,
    pub inner_max_iter: usize,
}

impl Default for NashOptions {
    fn default() -> Self {
        NashOptions {
            inner_tol: 1e-11,
            outer_tol: 1e-10,
            max_rounds: 100_000,
            inner_max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solve {
    pub z: OpinionProfile,
    /// Rounds for best-response solvers, iterations for descent.
    pub iterations: usize,
    /// Largest per-person gradient norm (Nash) or `||grad SC||_inf` (optimum).
    pub residual: f64,
}

fn require_convex(game: &HeterogeneousGame) -> Result<()> {
    match game.first_nonconvex() {
        None => Ok(()),
        Some(what) => Err(Error::Unsupported(format!(
            "{what} is not convex by construction; gradient-based solvers do not apply"
        ))),
    }
}

/// Minimizes `c_i` over `z_i` with every other block fixed.
pub(crate) fn best_response(
    game: &HeterogeneousGame,
    i: usize,
    z: &OpinionProfile,
    opts: &GdOptions,
) -> Result<crate::optimize::GdResult> {
    let internal = game.internal(i);
    let pairs: Vec<_> = game.out_pairs(i).map(|(j, pc)| (pc, &pc.b * z.block(j))).collect();
    let value = |zi: &DVector<f64>| -> Result<f64> {
        let mut c = 0.0;
        if let Some(ic) = internal {
            c += ic.g.eval_unchecked(&ic.argument(zi));
        }
        for (pc, off) in &pairs {
            c += pc.f.eval_unchecked(&(&pc.a * zi + off));
        }
        Ok(c)
    };
    let grad = |zi: &DVector<f64>| -> Result<DVector<f64>> {
        let mut g = DVector::zeros(zi.len());
        if let Some(ic) = internal {
            g += ic.r.tr_mul(&ic.g.grad_unchecked(&ic.argument(zi))?);
        }
        for (pc, off) in &pairs {
            g += pc.a.tr_mul(&pc.f.grad_unchecked(&(&pc.a * zi + off))?);
        }
        Ok(g)
    };
    minimize(value, grad, z.block(i).clone(), opts)
}

/// Round-robin best response: each person in turn minimizes its own cost,
/// until no block moves by more than `outer_tol` in a full round.
pub fn nash_general(game: &HeterogeneousGame, z0: &OpinionProfile, opts: &NashOptions) -> Result<Solve> {
    z0.check_dims(&game.dims())?;
    game.check_symmetric().into_result()?;
    require_convex(game)?;
    let gd = GdOptions {
        tol: opts.inner_tol,
        max_iter: opts.inner_max_iter,
        ..GdOptions::default()
    };
    let mut z = z0.clone();
    for round in 1..=opts.max_rounds {
        let mut moved = 0.0_f64;
        for i in 0..game.n() {
            let r = best_response(game, i, &z, &gd)?;
            moved = moved.max((&r.x - z.block(i)).amax());
            *z.block_mut(i) = r.x;
        }
        if moved <= opts.outer_tol {
            let residual = verify_nash(game, &z, 0.0)?.residual;
            return Ok(Solve {
                z,
                iterations: round,
                residual,
            });
        }
    }
    let residual = verify_nash(game, &z, 0.0).map(|r| r.residual).unwrap_or(f64::NAN);
    Err(Error::NotConverged {
        solver: "round-robin best response",
        iterations: opts.max_rounds,
        residual,
        best: z.flat().as_slice().to_vec(),
    })
}

/// Gradient descent on the social cost until `||grad SC||_inf <= tol`.
pub fn optimum_general(game: &HeterogeneousGame, z0: &OpinionProfile, tol: f64, max_iter: usize) -> Result<Solve> {
    z0.check_dims(&game.dims())?;
    game.check_symmetric().into_result()?;
    require_convex(game)?;
    let dims = game.dims();
    let value = |x: &DVector<f64>| game.social_cost(&OpinionProfile::from_flat(x.as_slice(), &dims)?);
    let grad = |x: &DVector<f64>| {
        Ok(game
            .social_gradient(&OpinionProfile::from_flat(x.as_slice(), &dims)?)?
            .flat())
    };
    let opts = GdOptions {
        tol,
        max_iter,
        ..GdOptions::default()
    };
    let r = minimize(value, grad, z0.flat(), &opts)?;
    if !r.converged {
        return Err(Error::NotConverged {
            solver: "social-cost gradient descent",
            iterations: r.iterations,
            residual: r.grad_inf,
            best: r.x.as_slice().to_vec(),
        });
    }
    Ok(Solve {
        z: OpinionProfile::from_flat(r.x.as_slice(), &dims)?,
        iterations: r.iterations,
        residual: r.grad_inf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub passed: bool,
    pub worst_person: usize,
    /// `max_i ||grad_i c_i(x)||_inf`.
    pub residual: f64,
}

/// First-order Nash check. Meaningful only for convex costs.
pub fn verify_nash(game: &impl OpinionGame, x: &OpinionProfile, tol: f64) -> Result<NashReport> {
    x.check_dims(&game.dims())?;
    let mut worst_person = 0;
    let mut residual = 0.0_f64;
    for i in 0..game.n() {
        let r = max_abs(&game.person_gradient(i, x)?);
        if r > residual {
            residual = r;
            worst_person = i;
        }
    }
    Ok(NashReport {
        passed: residual <= tol,
        worst_person,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum PoaValue {
    Ratio(f64),
    Unbounded,
    /// Both social costs vanish; the ratio is taken to be 1.
    DegenerateOne,
}

impl PoaValue {
    pub fn classify(sc_nash: f64, sc_opt: f64) -> PoaValue {
        if sc_opt <= SC_FLOOR {
            if sc_nash <= SC_FLOOR {
                PoaValue::DegenerateOne
            } else {
                PoaValue::Unbounded
            }
        } else {
            PoaValue::Ratio(sc_nash / sc_opt)
        }
    }

    /// Numeric value; `inf` when unbounded.
    pub fn as_f64(self) -> f64 {
        match self {
            PoaValue::Ratio(r) => r,
            PoaValue::Unbounded => f64::INFINITY,
            PoaValue::DegenerateOne => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Linear solves; quadratic games only.
    Closed,
    /// Round-robin best response and gradient descent.
    Iterative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoaReport {
    pub nash: OpinionProfile,
    pub optimum: OpinionProfile,
    pub sc_nash: f64,
    pub sc_optimum: f64,
    pub value: PoaValue,
    pub nash_residual: f64,
    pub optimum_residual: f64,
    pub nash_iterations: usize,
    pub optimum_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoaOptions {
    pub nash: NashOptions,
    pub optimum_tol: f64,
    pub optimum_max_iter: usize,
}

impl Default for PoaOptions {
    fn default() -> Self {
        PoaOptions {
            nash: NashOptions::default(),
            optimum_tol: 1e-9,
            optimum_max_iter: 1_000_000,
        }
    }
}

fn report(game: &impl OpinionGame, nash: Solve, optimum: Solve) -> Result<PoaReport> {
    let sc_nash = game.social_cost(&nash.z)?;
    let sc_optimum = game.social_cost(&optimum.z)?;
    Ok(PoaReport {
        value: PoaValue::classify(sc_nash, sc_optimum),
        sc_nash,
        sc_optimum,
        nash_residual: nash.residual,
        optimum_residual: optimum.residual,
        nash_iterations: nash.iterations,
        optimum_iterations: optimum.iterations,
        nash: nash.z,
        optimum: optimum.z,
    })
}

/// `SC(x) / SC(y)` for a quadratic game.
pub fn price_of_anarchy_quadratic(q: &QuadraticGame, solver: Solver, opts: &PoaOptions) -> Result<PoaReport> {
    q.check_symmetric().into_result()?;
    match solver {
        Solver::Closed => {
            let x = nash_quadratic(q)?;
            let y = optimum_quadratic(q)?;
            let nash_residual = verify_nash(q, &x, 0.0)?.residual;
            let opt_residual = quadratic_sc_gradient(q, &y);
            report(
                q,
                Solve {
                    z: x,
                    iterations: 1,
                    residual: nash_residual,
                },
                Solve {
                    z: y,
                    iterations: 1,
                    residual: opt_residual,
                },
            )
        }
        Solver::Iterative => price_of_anarchy(&quadratic_to_heterogeneous(q)?, opts),
    }
}

/// `||grad SC(y)||_inf = ||2 (R (y - s) + 2 L y)||_inf`.
fn quadratic_sc_gradient(q: &QuadraticGame, y: &OpinionProfile) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..q.n() {
        let yi = y.block(i);
        let mut g = q.r(i) * (yi - q.s(i));
        for (j, w) in q.neighbors(i) {
            g += w * (yi - y.block(j)) * 2.0;
        }
        worst = worst.max(2.0 * g.amax());
    }
    worst
}

/// `SC(x) / SC(y)` for a heterogeneous game via the iterative solvers,
/// both started from the zero profile.
pub fn price_of_anarchy(game: &HeterogeneousGame, opts: &PoaOptions) -> Result<PoaReport> {
    let z0 = OpinionProfile::zeros(&game.dims());
    let nash = nash_general(game, &z0, &opts.nash)?;
    let optimum = optimum_general(game, &z0, opts.optimum_tol, opts.optimum_max_iter)?;
    report(game, nash, optimum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Justification {
    /// Built from catalogued certificates; covers the requested pair.
    Certified { certificate: SuitabilityCertificate },
    /// No structural certificate; sampling found no violation.
    Sampled { reports: Vec<VerificationReport> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// `internal i` or `pair i j`.
    pub cost: String,
    pub required: PSet,
    pub justification: Justification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound: f64,
    pub ledger: Vec<LedgerEntry>,
}

/// `cert` implies `(lambda, kappa, p)`-suitability for every `p` in `required`:
/// a nonnegative function suitable for `(l0, k0)` is suitable for any
/// `lambda >= l0`, `kappa <= k0`.
fn covers(cert: &SuitabilityCertificate, lambda: f64, kappa: f64, required: PSet) -> bool {
    cert.lambda <= lambda && cert.kappa >= kappa && cert.p_set.intersect(required) == Some(required)
}

fn justify(
    f: &crate::cost_fn::CostFunction,
    name: String,
    lambda: f64,
    kappa: f64,
    required: PSet,
    verify: Option<(&SampleSpec, u64)>,
) -> Result<LedgerEntry> {
    if let Ok(cert) = derive_certificate(f) {
        if covers(&cert, lambda, kappa, required) {
            return Ok(LedgerEntry {
                cost: name,
                required,
                justification: Justification::Certified { certificate: cert },
            });
        }
    }
    let Some((spec, seed)) = verify else {
        return Err(Error::CertificateMissing(format!(
            "{name}: no catalogued certificate covers ({lambda}, {kappa}) for p in {required:?}"
        )));
    };
    let mut reports = Vec::new();
    for p in [1u8, 2] {
        if required.contains(p) {
            let r = verify_suitability(f, lambda, kappa, p as f64, spec, seed)?;
            if !r.passed {
                return Err(Error::CertificateMissing(format!(
                    "{name}: sampling found a violation for p = {p}: {:?}",
                    r.counterexample
                )));
            }
            reports.push(r);
        }
    }
    Ok(LedgerEntry {
        cost: name,
        required,
        justification: Justification::Sampled { reports },
    })
}

/// Upper bound `lambda / kappa` on the price of anarchy: internal costs must
/// be `(lambda, kappa, 1)`-suitable and pair costs `(lambda, kappa, 2)`-
/// suitable (both `p` for clique games). Each cost is justified by a
/// derived certificate, or by sampling when `verify` is given.
pub fn poa_upper_bound(
    game: &HeterogeneousGame,
    lambda: f64,
    kappa: f64,
    verify: Option<(&SampleSpec, u64)>,
    clique: bool,
) -> Result<BoundReport> {
    if !(lambda > 0.0 && kappa > 0.0) {
        return Err(Error::InvalidArgument("lambda and kappa must be positive".into()));
    }
    game.check_symmetric().into_result()?;
    let mut ledger = Vec::new();
    for i in 0..game.n() {
        if let Some(ic) = game.internal(i) {
            ledger.push(justify(
                &ic.g,
                format!("internal {i}"),
                lambda,
                kappa,
                PSet::One,
                verify,
            )?);
        }
    }
    let pair_p = if clique { PSet::Both } else { PSet::Two };
    for ((i, j), pc) in game.pairs() {
        ledger.push(justify(&pc.f, format!("pair {i} {j}"), lambda, kappa, pair_p, verify)?);
    }
    Ok(BoundReport {
        bound: lambda / kappa,
        ledger,
    })
}
