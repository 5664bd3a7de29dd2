//! The (lambda, kappa, p)-suitability calculus.
//!
//! A nonnegative differentiable `f` is suitable when
//! `grad f(a)^T (b - a) / p <= lambda f(b) - kappa f(a)` for all `a, b`.
//! Base functions carry analytic (or searched) certificates; composition
//! rules carry them to larger trees without changing `(lambda, kappa, p)`.

use std::f64::consts::LN_2;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{zeta, CostFunction};
use crate::error::{Error, Result};

/// Nonempty subset of `{1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PSet {
    One,
    Two,
    Both,
}

impl PSet {
    pub fn contains(self, p: u8) -> bool {
        matches!((self, p), (PSet::Both, 1 | 2) | (PSet::One, 1) | (PSet::Two, 2))
    }

    pub fn intersect(self, other: PSet) -> Option<PSet> {
        match (
            self.contains(1) && other.contains(1),
            self.contains(2) && other.contains(2),
        ) {
            (true, true) => Some(PSet::Both),
            (true, false) => Some(PSet::One),
            (false, true) => Some(PSet::Two),
            (false, false) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Searched {
        samples: String,
        tolerance: f64,
    },
    Propagated {
        rule: String,
        parents: Vec<SuitabilityCertificate>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuitabilityCertificate {
    pub lambda: f64,
    pub kappa: f64,
    pub p_set: PSet,
    pub provenance: Provenance,
}

impl SuitabilityCertificate {
    pub fn ratio(&self) -> f64 {
        self.lambda / self.kappa
    }

    fn same_constants(&self, other: &Self) -> bool {
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs());
        close(self.lambda, other.lambda) && close(self.kappa, other.kappa) && self.p_set == other.p_set
    }

    fn propagated(&self, rule: &str, parents: Vec<SuitabilityCertificate>) -> Self {
        SuitabilityCertificate {
            lambda: self.lambda,
            kappa: self.kappa,
            p_set: self.p_set,
            provenance: Provenance::Propagated {
                rule: rule.to_string(),
                parents,
            },
        }
    }
}

/// A certificate together with the function it speaks about.
#[derive(Debug, Clone, PartialEq)]
pub struct Certified {
    pub function: CostFunction,
    pub certificate: SuitabilityCertificate,
}

impl Certified {
    /// Replaces the function by an equivalent expression tree. Equivalence is
    /// checked pointwise on a deterministic grid plus seeded samples.
    pub fn restate(self, equivalent: CostFunction) -> Result<Certified> {
        equivalent.validate()?;
        let d = self.function.input_dim();
        if equivalent.input_dim() != d {
            return Err(Error::DimensionMismatch {
                context: "restated function".into(),
                expected: d,
                got: equivalent.input_dim(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for k in 0..400 {
            let v = if k <= 200 && d == 1 {
                DVector::from_element(1, -5.0 + 0.05 * k as f64)
            } else {
                DVector::from_fn(d, |_, _| rng.gen_range(-5.0..5.0))
            };
            let x = self.function.eval_unchecked(&v);
            let y = equivalent.eval_unchecked(&v);
            if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                return Err(Error::RuleViolated {
                    rule: "restate".into(),
                    reason: format!("expressions differ at {:?}: {x} vs {y}", v.as_slice()),
                });
            }
        }
        Ok(Certified {
            function: equivalent,
            certificate: self.certificate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseFunction {
    Exp,
    Square,
    /// `|x|^alpha`, `alpha > 1`.
    Power(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Composition {
    /// `w f`, `w >= 0`.
    Scale { weight: f64 },
    /// `w_0 f + sum_k w_k f_k` where the `f_k` are the `others`.
    Sum { weights: Vec<f64>, others: Vec<Certified> },
    /// `z -> f(A z + v)`.
    AffinePre { matrix: DMatrix<f64>, offset: DVector<f64> },
    /// `z -> f(g(z))`, `g` convex, `f` nondecreasing on the range of `g`.
    ConvexCompose { inner: CostFunction },
    /// `z -> f(||z||)`, `f'(0) = 0`, `f' >= 0` on `[0, inf)`.
    NormCompose { norm: CostFunction },
}

impl Composition {
    pub fn name(&self) -> &'static str {
        match self {
            Composition::Scale { .. } => "scale",
            Composition::Sum { .. } => "sum",
            Composition::AffinePre { .. } => "affine_pre",
            Composition::ConvexCompose { .. } => "convex_compose",
            Composition::NormCompose { .. } => "norm_compose",
        }
    }
}

pub fn certify_base(kind: BaseFunction) -> Result<Certified> {
    match kind {
        BaseFunction::Exp => Ok(Certified {
            function: CostFunction::exp(CostFunction::identity()),
            certificate: SuitabilityCertificate {
                lambda: 2.0 / std::f64::consts::E,
                kappa: LN_2,
                p_set: PSet::Both,
                provenance: Provenance::Analytic,
            },
        }),
        // Binding constraints 4 lambda (1 - kappa) = 1 and lambda (2 - kappa) = 1.
        BaseFunction::Square => Ok(Certified {
            function: CostFunction::square(),
            certificate: SuitabilityCertificate {
                lambda: 0.75,
                kappa: 2.0 / 3.0,
                p_set: PSet::Both,
                provenance: Provenance::Analytic,
            },
        }),
        BaseFunction::Power(alpha) => {
            let function = CostFunction::abs_power(alpha)?;
            let (lambda, kappa, tolerance) = power_witness(alpha)?;
            Ok(Certified {
                function,
                certificate: SuitabilityCertificate {
                    lambda,
                    kappa,
                    p_set: PSet::Both,
                    provenance: Provenance::Searched {
                        samples: "ray grid t = b/a on [-10, 10] step 1e-4 plus |t| up to 1e8".into(),
                        tolerance,
                    },
                },
            })
        }
    }
}

/// `|x|^alpha` is even and homogeneous, so its constraints depend only on
/// `t = b / a`. A dense ray grid pins the feasible interval; the witness sits
/// slightly above the minimum ratio so that interval has positive width.
fn power_witness(alpha: f64) -> Result<(f64, f64, f64)> {
    let mut cons = Vec::new();
    let mut push_t = |t: f64| {
        let fb = t.abs().powf(alpha);
        for p in [1.0, 2.0] {
            cons.push(Constraint {
                dir: alpha * (t - 1.0) / p,
                fa: 1.0,
                fb,
            });
        }
    };
    for k in 0..=200_000 {
        push_t(-10.0 + 1e-4 * k as f64);
    }
    for k in 0..=2000 {
        let t = 10f64.powf(1.0 + 7.0 * k as f64 / 2000.0);
        push_t(t);
        push_t(-t);
    }
    let tol = 1e-6;
    let (lo, _) = bisect_ratio(&cons, 1.0, 4.0, tol)?;
    let gamma = lo + 5e-4 * (zeta(alpha)? - 1.0).max(1e-3);
    let (klo, khi) = kappa_interval(&cons, gamma).ok_or(Error::NoFeasibleRatio { lo: 1.0, hi: 4.0 })?;
    let kappa = 0.5 * (klo + khi);
    Ok((gamma * kappa, kappa, gamma - lo + tol))
}

/// Applies one composition rule. Preconditions are checked structurally; the
/// certificate constants are never changed.
pub fn propagate_certificate(parent: &Certified, rule: Composition) -> Result<Certified> {
    let refuse = |reason: String| Error::RuleViolated {
        rule: rule.name().to_string(),
        reason,
    };
    let cert = &parent.certificate;
    let f = &parent.function;
    let function = match &rule {
        Composition::Scale { weight } => {
            if !(weight.is_finite() && *weight >= 0.0) {
                return Err(refuse(format!("weight {weight} is negative")));
            }
            CostFunction::scale(*weight, f.clone())?
        }
        Composition::Sum { weights, others } => {
            if weights.len() != others.len() + 1 {
                return Err(refuse(format!(
                    "{} weights for {} functions",
                    weights.len(),
                    others.len() + 1
                )));
            }
            if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
                return Err(refuse(format!("weight {w} is negative")));
            }
            if let Some(o) = others.iter().find(|o| !o.certificate.same_constants(cert)) {
                return Err(refuse(format!(
                    "parents disagree: ({}, {}) vs ({}, {})",
                    cert.lambda, cert.kappa, o.certificate.lambda, o.certificate.kappa
                )));
            }
            let terms = std::iter::once(f)
                .chain(others.iter().map(|o| &o.function))
                .zip(weights)
                .map(|(g, &w)| CostFunction::scale(w, g.clone()))
                .collect::<Result<Vec<_>>>()?;
            CostFunction::sum(terms)?
        }
        Composition::AffinePre { matrix, offset } => CostFunction::affine(matrix.clone(), offset.clone(), f.clone())?,
        Composition::ConvexCompose { inner } => {
            if f.input_dim() != 1 {
                return Err(refuse("outer function is not scalar".into()));
            }
            if !inner.is_convex() {
                return Err(refuse("inner function is not convex by construction".into()));
            }
            let monotone = f.nondecreasing_everywhere() || (inner.is_nonnegative() && f.nondecreasing_on_nonneg());
            if !monotone {
                return Err(refuse("outer function not nondecreasing on the inner range".into()));
            }
            CostFunction::compose(f.clone(), inner.clone())?
        }
        Composition::NormCompose { norm } => {
            if !matches!(norm, CostFunction::Norm { .. }) {
                return Err(refuse(format!("inner is a {} node, not a norm", norm.kind_name())));
            }
            norm.validate()?;
            if f.input_dim() != 1 {
                return Err(refuse("outer function is not scalar".into()));
            }
            if !f.nondecreasing_on_nonneg() {
                return Err(refuse("outer derivative not known nonnegative on [0, inf)".into()));
            }
            if !flat_at_origin(f) {
                return Err(refuse("outer derivative at 0 is not 0".into()));
            }
            CostFunction::compose(f.clone(), norm.clone())?
        }
    };
    let mut parents = vec![cert.clone()];
    if let Composition::Sum { others, .. } = &rule {
        parents.extend(others.iter().map(|o| o.certificate.clone()));
    }
    Ok(Certified {
        function,
        certificate: cert.propagated(rule.name(), parents),
    })
}

fn flat_at_origin(f: &CostFunction) -> bool {
    // |x|^alpha with alpha > 1 has derivative 0 at 0 even where the vector
    // gradient is reported undefined.
    if let CostFunction::PowerNorm { .. } = f {
        return true;
    }
    match f.grad_unchecked(&DVector::zeros(1)) {
        Ok(g) => g[0].abs() <= 1e-15,
        Err(_) => false,
    }
}

/// Weakens a certificate to `(lambda', kappa')` with `lambda' >= lambda`,
/// `kappa' <= kappa`. Valid because suitable functions are nonnegative.
pub fn relax_certificate(parent: &Certified, lambda: f64, kappa: f64, p_set: PSet) -> Result<Certified> {
    let c = &parent.certificate;
    let refuse = |reason: String| Error::RuleViolated {
        rule: "relax".into(),
        reason,
    };
    if !parent.function.is_nonnegative() {
        return Err(refuse("function not nonnegative by construction".into()));
    }
    if lambda < c.lambda || kappa > c.kappa || kappa <= 0.0 {
        return Err(refuse(format!(
            "({lambda}, {kappa}) is not weaker than ({}, {})",
            c.lambda, c.kappa
        )));
    }
    if c.p_set.intersect(p_set) != Some(p_set) {
        return Err(refuse("requested p values not covered".into()));
    }
    Ok(Certified {
        function: parent.function.clone(),
        certificate: SuitabilityCertificate {
            lambda,
            kappa,
            p_set,
            provenance: Provenance::Propagated {
                rule: "relax".into(),
                parents: vec![c.clone()],
            },
        },
    })
}

/// `cosh x = (e^x + e^(-x)) / 2` certified through the affine and sum rules
/// from the exponential certificate.
pub fn cosh_certified() -> Result<Certified> {
    let e = certify_base(BaseFunction::Exp)?;
    let e_neg = propagate_certificate(
        &e,
        Composition::AffinePre {
            matrix: DMatrix::from_element(1, 1, -1.0),
            offset: DVector::zeros(1),
        },
    )?;
    let sum = propagate_certificate(
        &e,
        Composition::Sum {
            weights: vec![0.5, 0.5],
            others: vec![e_neg],
        },
    )?;
    sum.restate(CostFunction::cosh(CostFunction::identity()))
}

/// Affine scalar map as `(c, b)` with `g(v) = c^T v + b`.
fn affine_parts(g: &CostFunction) -> (DVector<f64>, f64) {
    let zero = DVector::zeros(g.input_dim());
    let c = g.grad_unchecked(&zero).expect("affine maps have gradients everywhere");
    (c, g.eval_unchecked(&zero))
}

fn compose_with(outer: Certified, inner: &CostFunction) -> Result<Certified> {
    if inner.is_affine() {
        let (c, b) = affine_parts(inner);
        let matrix = DMatrix::from_row_slice(1, c.len(), c.as_slice());
        return propagate_certificate(
            &outer,
            Composition::AffinePre {
                matrix,
                offset: DVector::from_element(1, b),
            },
        );
    }
    if matches!(inner, CostFunction::Norm { .. }) {
        if let Ok(c) = propagate_certificate(&outer, Composition::NormCompose { norm: inner.clone() }) {
            return Ok(c);
        }
    }
    propagate_certificate(&outer, Composition::ConvexCompose { inner: inner.clone() })
}

fn derive_certified(f: &CostFunction) -> Result<Certified> {
    let missing = || Error::CertificateMissing(f.kind_name().to_string());
    match f {
        CostFunction::QuadraticForm { matrix } => {
            let sq = certify_base(BaseFunction::Square)?;
            let base = if matrix.nrows() == 1 {
                sq
            } else {
                propagate_certificate(
                    &sq,
                    Composition::NormCompose {
                        norm: CostFunction::norm(2.0, matrix.nrows())?,
                    },
                )?
            };
            propagate_certificate(
                &base,
                Composition::AffinePre {
                    matrix: matrix.clone(),
                    offset: DVector::zeros(matrix.nrows()),
                },
            )
        }
        CostFunction::PowerNorm { alpha, p_norm, dim } => {
            let base = if *alpha == 2.0 {
                certify_base(BaseFunction::Square)?
            } else {
                certify_base(BaseFunction::Power(*alpha))?
            };
            if *dim == 1 {
                base.restate(f.clone())
            } else {
                propagate_certificate(
                    &base,
                    Composition::NormCompose {
                        norm: CostFunction::norm(*p_norm, *dim)?,
                    },
                )
            }
        }
        CostFunction::Exp { inner } => compose_with(certify_base(BaseFunction::Exp)?, inner),
        CostFunction::Cosh { inner } => compose_with(cosh_certified()?, inner),
        CostFunction::Scale { weight, inner } => {
            propagate_certificate(&derive_certified(inner)?, Composition::Scale { weight: *weight })
        }
        CostFunction::Sum { terms } => {
            let mut parts = terms.iter().map(derive_certified).collect::<Result<Vec<_>>>()?;
            let lambda = parts.iter().map(|c| c.certificate.lambda).fold(0.0, f64::max);
            let kappa = parts.iter().map(|c| c.certificate.kappa).fold(f64::INFINITY, f64::min);
            let p_set = parts
                .iter()
                .try_fold(PSet::Both, |acc, c| acc.intersect(c.certificate.p_set))
                .ok_or_else(missing)?;
            for c in parts.iter_mut() {
                if !(c.certificate.lambda == lambda && c.certificate.kappa == kappa && c.certificate.p_set == p_set) {
                    *c = relax_certificate(c, lambda, kappa, p_set)?;
                }
            }
            let first = parts.remove(0);
            let weights = vec![1.0; parts.len() + 1];
            propagate_certificate(&first, Composition::Sum { weights, others: parts })
        }
        CostFunction::AffinePre { matrix, offset, inner } => propagate_certificate(
            &derive_certified(inner)?,
            Composition::AffinePre {
                matrix: matrix.clone(),
                offset: offset.clone(),
            },
        ),
        CostFunction::Compose { outer, inner } => compose_with(derive_certified(outer)?, inner),
        CostFunction::Norm { .. } | CostFunction::Linear { .. } | CostFunction::Polynomial { .. } => Err(missing()),
    }
}

/// Builds a certificate for `f` from base certificates and composition rules
/// following the tree structure. Sums of differently certified terms are
/// relaxed to the weakest common `(lambda, kappa)`.
pub fn derive_certificate(f: &CostFunction) -> Result<SuitabilityCertificate> {
    f.validate()?;
    derive_certified(f).map(|c| c.certificate)
}

/// Sampling box, pair count and relative violation tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub lo: f64,
    pub hi: f64,
    pub pairs: usize,
    pub rel_tol: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            lo: -10.0,
            hi: 10.0,
            pairs: 10_000,
            rel_tol: 1e-9,
        }
    }
}

impl SampleSpec {
    fn describe(&self) -> String {
        format!(
            "{} uniform pairs on [{}, {}]^d plus unit-vector pairs",
            self.pairs, self.lo, self.hi
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `grad f(a)^T (b - a) / p`.
    pub lhs: f64,
    /// `lambda f(b) - kappa f(a)`.
    pub rhs: f64,
    /// `(lhs - rhs) / scale`.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub pairs_checked: usize,
    pub resampled: usize,
    /// Smallest normalized slack `(rhs - lhs) / scale` over all pairs.
    pub min_slack: f64,
    pub counterexample: Option<Counterexample>,
}

struct Sample {
    a: DVector<f64>,
    b: DVector<f64>,
    fa: f64,
    fb: f64,
    /// `grad f(a)^T (b - a)`.
    dir: f64,
}

fn draw(rng: &mut ChaCha8Rng, d: usize, spec: &SampleSpec) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.gen_range(spec.lo..=spec.hi))
}

fn sample_pairs(f: &CostFunction, spec: &SampleSpec, seed: u64) -> Result<(Vec<Sample>, usize)> {
    if !(spec.lo < spec.hi) || spec.pairs == 0 {
        return Err(Error::InvalidArgument(
            "sampling box must be nonempty with pairs > 0".into(),
        ));
    }
    let d = f.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(3 * d + spec.pairs);
    for k in 0..d {
        let e = DVector::from_fn(d, |i, _| if i == k { 1.0 } else { 0.0 });
        let z = DVector::zeros(d);
        pairs.push((z.clone(), e.clone()));
        pairs.push((e.clone(), z));
        pairs.push((e.clone(), -e));
    }
    for _ in 0..spec.pairs {
        let a = draw(&mut rng, d, spec);
        let b = draw(&mut rng, d, spec);
        pairs.push((a, b));
    }
    let mut resampled = 0;
    let mut out = Vec::with_capacity(pairs.len());
    for (mut a, b) in pairs {
        let mut tries = 0;
        let g = loop {
            match f.grad(&a) {
                Ok(g) => break g,
                Err(Error::GradientUndefined(msg)) if tries < 100 => {
                    debug!("resampling point with undefined gradient: {msg}");
                    resampled += 1;
                    tries += 1;
                    a = draw(&mut rng, d, spec);
                }
                Err(e) => return Err(e),
            }
        };
        let dir = g.dot(&(&b - &a));
        out.push(Sample {
            fa: f.eval_unchecked(&a),
            fb: f.eval_unchecked(&b),
            dir,
            a,
            b,
        });
    }
    Ok((out, resampled))
}

/// Falsification check of the suitability inequality on sampled pairs. A pass
/// is evidence, not proof.
pub fn verify_suitability(
    f: &CostFunction,
    lambda: f64,
    kappa: f64,
    p: f64,
    spec: &SampleSpec,
    seed: u64,
) -> Result<VerificationReport> {
    if !(lambda > 0.0 && kappa > 0.0 && p > 0.0) {
        return Err(Error::InvalidArgument("lambda, kappa and p must be positive".into()));
    }
    f.validate()?;
    let (samples, resampled) = sample_pairs(f, spec, seed)?;
    let mut min_slack = f64::INFINITY;
    let mut worst: Option<Counterexample> = None;
    for s in &samples {
        let lhs = s.dir / p;
        let rhs = lambda * s.fb - kappa * s.fa;
        let scale = 1.0 + (lambda * s.fb).abs() + (kappa * s.fa).abs() + lhs.abs();
        let slack = (rhs - lhs) / scale;
        if slack < min_slack {
            min_slack = slack;
            if -slack > spec.rel_tol {
                worst = Some(Counterexample {
                    a: s.a.as_slice().to_vec(),
                    b: s.b.as_slice().to_vec(),
                    lhs,
                    rhs,
                    violation: -slack,
                });
            }
        }
    }
    Ok(VerificationReport {
        passed: worst.is_none(),
        pairs_checked: samples.len(),
        resampled,
        min_slack,
        counterexample: worst,
    })
}

#[derive(Debug, Clone, Copy)]
struct Constraint {
    /// `grad f(a)^T (b - a) / p`.
    dir: f64,
    fa: f64,
    fb: f64,
}

/// With `lambda = gamma kappa` each constraint reads `kappa D >= G`,
/// `D = gamma f(b) - f(a)`. Returns the feasible open interval on kappa > 0.
fn kappa_interval(cons: &[Constraint], gamma: f64) -> Option<(f64, f64)> {
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    for c in cons {
        let d = gamma * c.fb - c.fa;
        if d > 0.0 {
            lo = lo.max(c.dir / d);
        } else if d < 0.0 {
            hi = hi.min(c.dir / d);
        } else if c.dir > 0.0 {
            return None;
        }
    }
    (lo <= hi && hi > 0.0).then_some((lo, hi))
}

/// Smallest feasible gamma in `[lo, hi]` up to `tol`. Feasibility is upward
/// closed in gamma because every `f(b) >= 0`.
fn bisect_ratio(cons: &[Constraint], mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)> {
    let bracket = (lo, hi);
    if kappa_interval(cons, hi).is_none() {
        return Err(Error::NoFeasibleRatio {
            lo: bracket.0,
            hi: bracket.1,
        });
    }
    if kappa_interval(cons, lo).is_some() {
        return Ok((lo, lo));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if kappa_interval(cons, mid).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSearch {
    pub lambda: f64,
    pub kappa: f64,
    pub ratio: f64,
    pub constraints: usize,
}

/// Smallest sampled-feasible `lambda / kappa` over `p in {1, 2}`. Since the
/// constraints are sampled, the result estimates the true minimum from below.
pub fn min_ratio_search(f: &CostFunction, spec: &SampleSpec, tol: f64, seed: u64) -> Result<RatioSearch> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    f.validate()?;
    let (samples, _) = sample_pairs(f, spec, seed)?;
    let cons: Vec<Constraint> = samples
        .iter()
        .flat_map(|s| {
            [1.0, 2.0].map(|p| Constraint {
                dir: s.dir / p,
                fa: s.fa,
                fb: s.fb,
            })
        })
        .collect();
    let (_, gamma) = bisect_ratio(&cons, 1.0, 4.0, tol * 1e-2)?;
    let (klo, khi) = kappa_interval(&cons, gamma).expect("upper bisection end is feasible");
    let kappa = if khi.is_finite() {
        0.5 * (klo + khi)
    } else if klo > 0.0 {
        2.0 * klo
    } else {
        1.0
    };
    Ok(RatioSearch {
        lambda: gamma * kappa,
        kappa,
        ratio: gamma,
        constraints: cons.len(),
    })
}

impl RatioSearch {
    /// Searched certificate carrying the witness pair.
    pub fn into_certificate(self, spec: &SampleSpec, tol: f64) -> SuitabilityCertificate {
        SuitabilityCertificate {
            lambda: self.lambda,
            kappa: self.kappa,
            p_set: PSet::Both,
            provenance: Provenance::Searched {
                samples: spec.describe(),
                tolerance: tol,
            },
        }
    }
}

#[cfg(test)]
// Reference values keep all the digits they were computed with.
#[allow(clippy::excessive_precision, clippy::approx_constant)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quick() -> SampleSpec {
        SampleSpec {
            pairs: 2000,
            ..SampleSpec::default()
        }
    }

    #[test]
    fn exp_certificate_constants() {
        let c = certify_base(BaseFunction::Exp).unwrap().certificate;
        assert_abs_diff_eq!(c.lambda, 0.7357588823428847, epsilon = 1e-15);
        assert_abs_diff_eq!(c.kappa, 0.6931471805599453, epsilon = 1e-15);
        assert_abs_diff_eq!(c.ratio(), 1.0614756908460860, epsilon = 1e-14);
    }

    #[test]
    fn square_certificate_solves_binding_constraints() {
        let c = certify_base(BaseFunction::Square).unwrap().certificate;
        assert_abs_diff_eq!(4.0 * c.lambda * (1.0 - c.kappa), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.lambda * (2.0 - c.kappa), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.ratio(), zeta(2.0).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn power_certificate_is_near_zeta() {
        let c = certify_base(BaseFunction::Power(3.0)).unwrap();
        assert!((c.certificate.ratio() - 1.0931377268800530).abs() < 5e-3);
        assert!(c.certificate.ratio() >= 1.0931377268800530 - 1e-6);
        for p in [1.0, 2.0] {
            let r = verify_suitability(&c.function, c.certificate.lambda, c.certificate.kappa, p, &quick(), 3).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn weak_square_pair_fails_with_counterexample() {
        let r = verify_suitability(&CostFunction::square(), 0.5, 0.6, 2.0, &quick(), 0).unwrap();
        assert!(!r.passed);
        let ce = r.counterexample.unwrap();
        assert!(ce.lhs > ce.rhs);
    }

    #[test]
    fn propagation_keeps_constants() {
        let e = certify_base(BaseFunction::Exp).unwrap();
        let c = propagate_certificate(
            &e,
            Composition::ConvexCompose {
                inner: CostFunction::square(),
            },
        )
        .unwrap();
        assert_eq!(c.certificate.lambda, e.certificate.lambda);
        assert_eq!(c.certificate.kappa, e.certificate.kappa);
        assert_eq!(c.certificate.p_set, e.certificate.p_set);
        assert!(
            matches!(c.certificate.provenance, Provenance::Propagated { ref rule, .. } if rule == "convex_compose")
        );
    }

    #[test]
    fn rule_preconditions_are_enforced() {
        let e = certify_base(BaseFunction::Exp).unwrap();
        let sq = certify_base(BaseFunction::Square).unwrap();
        assert!(matches!(
            propagate_certificate(&sq, Composition::Scale { weight: -1.0 }),
            Err(Error::RuleViolated { .. })
        ));
        assert!(propagate_certificate(
            &e,
            Composition::Sum {
                weights: vec![1.0, 1.0],
                others: vec![sq.clone()]
            }
        )
        .is_err());
        // exp has nonzero slope at 0
        assert!(propagate_certificate(
            &e,
            Composition::NormCompose {
                norm: CostFunction::norm(2.0, 2).unwrap()
            }
        )
        .is_err());
        // x^2 is not monotone on the range of a sign-changing inner
        assert!(propagate_certificate(
            &sq,
            Composition::ConvexCompose {
                inner: CostFunction::identity()
            }
        )
        .is_err());
        let poly = CostFunction::polynomial(
            1,
            vec![super::super::Monomial {
                coeff: 1.0,
                powers: vec![4],
            }],
        )
        .unwrap();
        assert!(propagate_certificate(&e, Composition::ConvexCompose { inner: poly }).is_err());
    }

    #[test]
    fn cosh_chain_restates_to_cosh() {
        let c = cosh_certified().unwrap();
        assert_eq!(c.function, CostFunction::cosh(CostFunction::identity()));
        assert!(c.clone().restate(CostFunction::square()).is_err());
    }

    #[test]
    fn derived_certificates_follow_structure() {
        let q = CostFunction::quadratic_form(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]));
        let c = derive_certificate(&q).unwrap();
        assert_eq!((c.lambda, c.kappa), (0.75, 2.0 / 3.0));
        let mixed = CostFunction::sum(vec![
            CostFunction::square(),
            CostFunction::exp(CostFunction::identity()),
        ])
        .unwrap();
        let c = derive_certificate(&mixed).unwrap();
        assert_eq!(c.lambda, 0.75);
        assert_eq!(c.kappa, 2.0 / 3.0);
        assert!(derive_certificate(&CostFunction::identity()).is_err());
    }

    #[test]
    fn ratio_search_on_square() {
        let r = min_ratio_search(&CostFunction::square(), &SampleSpec::default(), 1e-4, 0).unwrap();
        assert!((r.ratio - 1.125).abs() < 5e-3, "{r:?}");
        assert!(r.ratio <= 1.125 + 1e-4);
    }

    #[test]
    fn empty_bracket_is_reported() {
        let cons = [Constraint {
            dir: 1.0,
            fa: 1.0,
            fb: 0.0,
        }];
        assert!(matches!(
            bisect_ratio(&cons, 1.0, 4.0, 1e-6),
            Err(Error::NoFeasibleRatio { .. })
        ));
    }
}
