//! Randomized numerical checks of the auxiliary lemmas behind the
//! convergence bound.
//!
//! Every check reports signed slack (`RHS − LHS` for inequalities, minus
//! the absolute discrepancy for identities) so that negative values beyond
//! tolerance are violations. Randomized instances are keyed by a seed that
//! [`replay`] turns back into the same instance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::{a_constant, contraction_factor, r_norm, r_norm_sq};
use crate::dimix::StepSchedule;
use crate::error::{invalid, Result};
use crate::objective::partition;
use crate::objective::{
    global_optimum, smoothness_constants, weighted_gradient, LocalObjective, RegressionProblem,
};
use crate::rng::{stream, Purpose};
use crate::topology::{MixingMatrix, MixingSchedule, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LemmaId {
    Contraction,
    Submultiplicative,
    Young,
    ProductBound,
    Telescope,
    SumBound,
    StrongConvexity,
}

impl LemmaId {
    pub const ALL: [LemmaId; 7] = [
        LemmaId::Contraction,
        LemmaId::Submultiplicative,
        LemmaId::Young,
        LemmaId::ProductBound,
        LemmaId::Telescope,
        LemmaId::SumBound,
        LemmaId::StrongConvexity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LemmaId::Contraction => "lemma1_contraction",
            LemmaId::Submultiplicative => "lemma2_submultiplicative",
            LemmaId::Young => "lemma3_young",
            LemmaId::ProductBound => "lemma4_product_bound",
            LemmaId::Telescope => "lemma5_telescope",
            LemmaId::SumBound => "lemma6_sum_bound",
            LemmaId::StrongConvexity => "lemma7_strong_convexity",
        }
    }

    pub fn kind(self) -> CheckKind {
        match self {
            LemmaId::Telescope => CheckKind::Identity,
            _ => CheckKind::Inequality,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Inequality,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub lemma: LemmaId,
    pub instances: usize,
    pub skipped: usize,
    pub violations: usize,
    /// Smallest signed slack seen; `+∞` before any instance.
    pub worst_slack: f64,
    /// Tolerance that applied to the worst instance.
    pub worst_tolerance: f64,
    pub worst_seed: u64,
    /// Instances outside every branch of the statement.
    pub flagged: Vec<String>,
}

impl CheckReport {
    pub fn new(lemma: LemmaId) -> Self {
        Self {
            lemma,
            instances: 0,
            skipped: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
            worst_tolerance: 0.0,
            worst_seed: 0,
            flagged: Vec::new(),
        }
    }

    pub fn kind(&self) -> CheckKind {
        self.lemma.kind()
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Records one instance; it violates when `slack < −tol`.
    pub fn record(&mut self, seed: u64, slack: f64, tol: f64) {
        self.instances += 1;
        if !(slack >= -tol) {
            self.violations += 1;
        }
        if slack.is_nan() || slack < self.worst_slack || self.instances == 1 {
            self.worst_slack = slack;
            self.worst_tolerance = tol;
            self.worst_seed = seed;
        }
    }

    pub fn skip(&mut self) {
        self.skipped += 1;
    }

    pub fn merge(mut self, other: CheckReport) -> CheckReport {
        debug_assert_eq!(self.lemma, other.lemma);
        if other.instances > 0 && (other.worst_slack < self.worst_slack || self.instances == 0) {
            self.worst_slack = other.worst_slack;
            self.worst_tolerance = other.worst_tolerance;
            self.worst_seed = other.worst_seed;
        }
        self.instances += other.instances;
        self.skipped += other.skipped;
        self.violations += other.violations;
        self.flagged.extend(other.flagged);
        self
    }
}

fn oracle_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, Purpose::Oracle)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
}

// Lemma 1 ---------------------------------------------------------------

/// `‖(A(t−1)⋯A(s+1) − 1rᵀ)U‖ᵣ² ≤ κ∏_{k=s+1}^{t−1}(1−λβ(k))‖U‖ᵣ²` with
/// `A(k) = (1−β(k))I + β(k)W(k)`.
pub fn check_contraction(
    schedule: &MixingSchedule,
    steps: &StepSchedule,
    u: &DMatrix<f64>,
    s: u64,
    t: u64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new(LemmaId::Contraction);
    let Ok((lambda, kappa)) = contraction_factor(schedule, steps) else {
        report.skip();
        return Ok(report);
    };
    let (slack, tol) = contraction_slack(schedule, |k| steps.beta(k), lambda, kappa, u, s, t)?;
    report.record(0, slack, tol);
    Ok(report)
}

fn contraction_slack(
    schedule: &MixingSchedule,
    beta: impl Fn(u64) -> f64,
    lambda: f64,
    kappa: f64,
    u: &DMatrix<f64>,
    s: u64,
    t: u64,
) -> Result<(f64, f64)> {
    let n = schedule.n();
    if u.nrows() != n || s < 1 || t <= s {
        return Err(invalid(format!(
            "contraction check needs n-row U and 1 <= s < t (s={s}, t={t})"
        )));
    }
    let r = schedule.weights();
    let mut phi = DMatrix::<f64>::identity(n, n);
    let mut prod = 1.0;
    for k in s + 1..t {
        let b = beta(k);
        let a = DMatrix::identity(n, n) * (1.0 - b) + schedule.matrix(k).to_dmatrix() * b;
        phi = a * phi;
        prod *= 1.0 - lambda * b;
    }
    let one_r = DMatrix::from_fn(n, n, |_, j| r[j]);
    let lhs = r_norm_sq(&((phi - one_r) * u), r)?;
    let u_sq = r_norm_sq(u, r)?;
    let rhs = kappa * prod * u_sq;
    Ok((rhs - lhs, 1e-10 * (1.0 + u_sq)))
}

fn contraction_instance(seed: u64) -> CheckReport {
    let mut report = CheckReport::new(LemmaId::Contraction);
    let mut rng = oracle_rng(seed);
    let n = rng.random_range(3..=8usize);
    let d = rng.random_range(1..=4usize);
    let r = if rng.random_bool(0.3) {
        WeightVector::uniform(n).expect("n >= 1")
    } else {
        WeightVector::random(n, 0.01, 0.09, &mut rng).expect("positive range")
    };
    let schedule = if rng.random_bool(0.5) {
        MixingSchedule::gossip(r)
    } else {
        MixingSchedule::fixed_cycle(r)
    }
    .expect("valid weights");
    let steps = StepSchedule::new(
        0.1,
        0.25,
        rng.random_range(0.05..=1.0),
        rng.random_range(0.01..0.99),
    )
    .expect("valid ranges");
    let s = rng.random_range(1..=40u64);
    let t = s + rng.random_range(1..=300u64);
    let u = if rng.random_bool(0.1) {
        // Consensus rows lie in the kernel of Φ − 1rᵀ.
        let c = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        DMatrix::from_fn(n, d, |_, k| c[k])
    } else {
        gaussian_matrix(&mut rng, n, d)
    };
    match contraction_factor(&schedule, &steps) {
        Ok((lambda, kappa)) => {
            let (slack, tol) =
                contraction_slack(&schedule, |k| steps.beta(k), lambda, kappa, &u, s, t)
                    .expect("shapes agree");
            report.record(seed, slack, tol);
        }
        Err(_) => report.skip(),
    }
    report
}

// Lemma 2 ---------------------------------------------------------------

/// `‖AB‖ᵣ ≤ ‖A‖ᵣ‖B‖_F`.
pub fn check_submultiplicative(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &WeightVector,
) -> Result<CheckReport> {
    let mut report = CheckReport::new(LemmaId::Submultiplicative);
    let (slack, tol) = submultiplicative_slack(a, b, r)?;
    report.record(0, slack, tol);
    Ok(report)
}

fn submultiplicative_slack(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &WeightVector,
) -> Result<(f64, f64)> {
    if a.ncols() != b.nrows() {
        return Err(invalid(format!(
            "A is {}x{} but B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let lhs = r_norm(&(a * b), r)?;
    let rhs = r_norm(a, r)? * b.norm();
    Ok((rhs - lhs, 1e-12 * (1.0 + rhs)))
}

fn submultiplicative_instance(seed: u64) -> CheckReport {
    let mut report = CheckReport::new(LemmaId::Submultiplicative);
    let mut rng = oracle_rng(seed);
    let n = rng.random_range(1..=8usize);
    let m = rng.random_range(1..=8usize);
    let q = rng.random_range(1..=8usize);
    let r = WeightVector::random(n, 0.01, 1.0, &mut rng).expect("positive range");
    let (a, b) = match seed % 10 {
        // One nonzero row and B = a cᵀ attain equality.
        0 => {
            let row = rng.random_range(0..n);
            let av = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let c = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut a = DMatrix::zeros(n, m);
            a.set_row(row, &av.transpose());
            (a, &av * c.transpose())
        }
        1 => (DMatrix::zeros(n, m), gaussian_matrix(&mut rng, m, q)),
        _ => (
            gaussian_matrix(&mut rng, n, m),
            gaussian_matrix(&mut rng, m, q),
        ),
    };
    let (slack, tol) = submultiplicative_slack(&a, &b, &r).expect("shapes agree");
    report.record(seed, slack, tol);
    report
}

// Lemma 3 ---------------------------------------------------------------

/// `‖u+v‖² ≤ (1+θ)‖u‖² + (1+1/θ)‖v‖²`.
pub fn check_young(u: &DVector<f64>, v: &DVector<f64>, theta: f64) -> Result<CheckReport> {
    let mut report = CheckReport::new(LemmaId::Young);
    let (slack, tol) = young_vector_slack(u, v, theta)?;
    report.record(0, slack, tol);
    Ok(report)
}

/// Matrix form `‖U+V‖ᵣ² ≤ (1+θ)‖U‖ᵣ² + (1+1/θ)‖V‖ᵣ²`.
pub fn check_young_matrix(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    r: &WeightVector,
    theta: f64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new(LemmaId::Young);
    let (slack, tol) = young_matrix_slack(u, v, r, theta)?;
    report.record(0, slack, tol);
    Ok(report)
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid(format!("theta must be positive, got {theta}")));
    }
    Ok(())
}

fn young_vector_slack(u: &DVector<f64>, v: &DVector<f64>, theta: f64) -> Result<(f64, f64)> {
    check_theta(theta)?;
    if u.len() != v.len() {
        return Err(invalid("u and v differ in length"));
    }
    let lhs = (u + v).norm_squared();
    let rhs = (1.0 + theta) * u.norm_squared() + (1.0 + 1.0 / theta) * v.norm_squared();
    Ok((rhs - lhs, 1e-12 * (1.0 + rhs)))
}

fn young_matrix_slack(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    r: &WeightVector,
    theta: f64,
) -> Result<(f64, f64)> {
    check_theta(theta)?;
    if u.shape() != v.shape() {
        return Err(invalid("U and V differ in shape"));
    }
    let lhs = r_norm_sq(&(u + v), r)?;
    let rhs = (1.0 + theta) * r_norm_sq(u, r)? + (1.0 + 1.0 / theta) * r_norm_sq(v, r)?;
    Ok((rhs - lhs, 1e-12 * (1.0 + rhs)))
}

const YOUNG_THETAS: [f64; 3] = [0.01, 1.0, 100.0];

fn young_instance(seed: u64) -> CheckReport {
    let mut report = CheckReport::new(LemmaId::Young);
    let mut rng = oracle_rng(seed);
    let theta = YOUNG_THETAS[(seed % 3) as usize];
    let n = rng.random_range(1..=8usize);
    let d = rng.random_range(1..=8usize);
    let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    // v = θu is the equality configuration.
    let v = match seed % 7 {
        0 => &u * theta,
        1 => DVector::zeros(d),
        2 => -&u,
        _ => DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)),
    };
    let (slack, tol) = young_vector_slack(&u, &v, theta).expect("valid theta");
    report.record(seed, slack, tol);

    let r = WeightVector::random(n, 0.01, 1.0, &mut rng).expect("positive range");
    let um = gaussian_matrix(&mut rng, n, d);
    let vm = if seed % 5 == 0 {
        &um * theta
    } else {
        gaussian_matrix(&mut rng, n, d)
    };
    let (slack, tol) = young_matrix_slack(&um, &vm, &r, theta).expect("valid theta");
    report.record(seed, slack, tol);
    report
}

// Lemma 4 ---------------------------------------------------------------

/// `∏_{k=s}^{t−1}(1 − a/k^δ) ≤ exp(−a/(1−δ)(t^{1−δ} − s^{1−δ}))`, and
/// `≤ (t/s)^{−a}` when `δ = 1`.
pub fn check_product_bound(a: f64, delta: f64, s: u64, t: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new(LemmaId::ProductBound);
    match product_bound_slack(a, delta, s, t)? {
        Some(slack) => report.record(0, slack, 1e-12),
        None => report.skip(),
    }
    Ok(report)
}

fn product_bound_slack(a: f64, delta: f64, s: u64, t: u64) -> Result<Option<f64>> {
    let in_range = if delta == 1.0 {
        (0.0..1.0).contains(&a)
    } else {
        (0.0..1.0).contains(&delta) && a > 0.0 && a < 1.0
    };
    if !in_range || s < 1 || t < s {
        return Err(invalid(format!(
            "product bound outside its hypotheses: a={a}, delta={delta}, s={s}, t={t}"
        )));
    }
    if a / (s as f64).powf(delta) >= 1.0 {
        return Ok(None);
    }
    let mut log_lhs = 0.0;
    for k in s..t {
        log_lhs += (-a / (k as f64).powf(delta)).ln_1p();
    }
    let (tf, sf) = (t as f64, s as f64);
    let log_rhs = if delta == 1.0 {
        -a * (tf / sf).ln()
    } else {
        -a / (1.0 - delta) * (tf.powf(1.0 - delta) - sf.powf(1.0 - delta))
    };
    Ok(Some(log_rhs.exp() - log_lhs.exp()))
}

const PRODUCT_A: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const PRODUCT_DELTA: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const PRODUCT_S: [u64; 5] = [1, 2, 5, 10, 100];

fn product_grid() -> Vec<(f64, f64, u64, u64)> {
    let mut grid = Vec::new();
    for &a in &PRODUCT_A {
        for &delta in &PRODUCT_DELTA {
            for &s in &PRODUCT_S {
                for t in [s, s + 1, s + 10, 1_000, 10_000] {
                    grid.push((a, delta, s, t.max(s)));
                }
            }
        }
    }
    grid
}

fn product_instance(index: u64) -> CheckReport {
    let grid = product_grid();
    let (a, delta, s, t) = grid[index as usize % grid.len()];
    let mut report = CheckReport::new(LemmaId::ProductBound);
    match product_bound_slack(a, delta, s, t).expect("grid inside hypotheses") {
        Some(slack) => report.record(index, slack, 1e-12),
        None => report.skip(),
    }
    report
}

// Lemma 5 ---------------------------------------------------------------

/// `Σ_{s=1}^{t−1} β(s)∏_{k=s+1}^{t−1}(1−λβ(k)) = (1 − ∏_{k=1}^{t−1}(1−λβ(k)))/λ`
/// with `beta_seq[k−1] = β(k)`.
///
/// The tolerance is `1e-10·max(1, |1/λ|)` times the largest partial
/// product magnitude when that exceeds one, which is the scale of the
/// rounding error in both sides.
pub fn check_telescope(beta_seq: &[f64], lambda: f64, t: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new(LemmaId::Telescope);
    let (slack, tol) = telescope_slack(beta_seq, lambda, t)?;
    report.record(0, slack, tol);
    Ok(report)
}

fn telescope_slack(beta_seq: &[f64], lambda: f64, t: u64) -> Result<(f64, f64)> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(invalid("lambda must be nonzero"));
    }
    if t < 1 || (t as usize - 1) > beta_seq.len() {
        return Err(invalid(format!(
            "need beta(1..t-1) for t={t}, have {}",
            beta_seq.len()
        )));
    }
    let beta = |k: u64| beta_seq[k as usize - 1];
    let mut lhs = 0.0;
    let mut scale: f64 = 1.0;
    for s in 1..t {
        let mut prod = 1.0;
        for k in s + 1..t {
            prod *= 1.0 - lambda * beta(k);
            scale = scale.max(prod.abs());
        }
        lhs += beta(s) * prod;
    }
    let mut full = 1.0;
    for k in 1..t {
        full *= 1.0 - lambda * beta(k);
        scale = scale.max(full.abs());
    }
    let rhs = 1.0 / lambda - full / lambda;
    Ok((
        -(lhs - rhs).abs(),
        1e-10 * 1f64.max(1.0 / lambda.abs()) * scale,
    ))
}

const TELESCOPE_LAMBDAS: [f64; 3] = [-3.0, 0.1, 7.0];

fn telescope_instance(seed: u64) -> CheckReport {
    let mut report = CheckReport::new(LemmaId::Telescope);
    let mut rng = oracle_rng(seed);
    let lambda = TELESCOPE_LAMBDAS[(seed % 3) as usize];
    let t = rng.random_range(1..=50u64);
    let beta: Vec<f64> = (1..t).map(|_| rng.random_range(-2.0..2.0)).collect();
    let (slack, tol) = telescope_slack(&beta, lambda, t).expect("valid instance");
    report.record(seed, slack, tol);
    report
}

// Lemma 6 ---------------------------------------------------------------

/// `τ = (2(σ−δ)/a)^{1/(1−δ)}`; the δ < 1 bound holds for `t > τ`.
pub fn sum_bound_tau(a: f64, sigma: f64, delta: f64) -> f64 {
    (2.0 * (sigma - delta) / a).powf(1.0 / (1.0 - delta))
}

/// `S(t) = Σ_{s=1}^{t−1} s^{−σ}∏_{k=s+1}^{t−1}(1 − a/k^δ)` for `t = 1..=t_max`
/// (`out[t−1]`), by `S(t+1) = S(t)(1 − a/t^δ) + t^{−σ}`.
pub fn weighted_tail_sums(a: f64, sigma: f64, delta: f64, t_max: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(t_max as usize);
    let mut s = 0.0;
    for t in 1..=t_max {
        out.push(s);
        let tf = t as f64;
        s = s * (1.0 - a / tf.powf(delta)) + tf.powf(-sigma);
    }
    out
}

/// Right side of the sum bound at `t`.
pub fn sum_bound_rhs(a: f64, sigma: f64, delta: f64, t: u64) -> Result<f64> {
    let big_a = a_constant(a, sigma, delta)?;
    let exponent = if delta == 1.0 {
        (sigma - 1.0).min(a)
    } else {
        sigma - delta
    };
    Ok(big_a * (t as f64).powf(-exponent))
}

pub fn check_sum_bound(a: f64, sigma: f64, delta: f64, t: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new(LemmaId::SumBound);
    if delta == 1.0 && a - sigma + 1.0 == 0.0 {
        report.skip();
        report
            .flagged
            .push(format!("a - sigma + 1 = 0 at a={a}, sigma={sigma}"));
        return Ok(report);
    }
    if delta < 1.0 && (t as f64) <= sum_bound_tau(a, sigma, delta) {
        report.skip();
        return Ok(report);
    }
    let rhs = sum_bound_rhs(a, sigma, delta, t)?;
    let lhs = weighted_tail_sums(a, sigma, delta, t)[t as usize - 1];
    report.record(0, rhs - lhs, 1e-10 * (1.0 + rhs));
    Ok(report)
}

/// One parameter triple of the sum-bound grid.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SumCase {
    a: f64,
    sigma: f64,
    delta: f64,
}

const SUM_SIGMAS: [f64; 9] = [0.3, 0.6, 0.99, 1.0, 1.01, 1.5, 2.0, 2.5, 3.0];
const SUM_DELTAS: [f64; 4] = [0.0, 0.25, 0.5, 0.75];
const SUM_A: [f64; 5] = [0.05, 0.2, 0.5, 0.8, 1.0];
const SUM_A_DELTA_ONE: [f64; 6] = [0.1, 0.3, 0.5, 1.0, 1.5, 2.0];
const SUM_T_MAX: u64 = 10_000;
/// Search horizon for cases whose `τ` lies beyond [`SUM_T_MAX`].
const SUM_T_CAP: u64 = 1_000_000;

fn sum_cases() -> Vec<SumCase> {
    let mut cases = Vec::new();
    for &sigma in &SUM_SIGMAS {
        for &delta in &SUM_DELTAS {
            if delta >= sigma {
                continue;
            }
            for &a in &SUM_A {
                cases.push(SumCase { a, sigma, delta });
            }
        }
        for &a in &SUM_A_DELTA_ONE {
            cases.push(SumCase {
                a,
                sigma,
                delta: 1.0,
            });
        }
    }
    // The deviation-recursion instance: σ = 2μ, δ = μ at μ = 3/4, with a
    // contraction rate of a two-agent network.
    cases.push(SumCase {
        a: 0.0625,
        sigma: 1.5,
        delta: 0.75,
    });
    cases
}

fn log_spaced(from: u64, to: u64, count: usize) -> Vec<u64> {
    let (lf, lt) = ((from as f64).ln(), (to as f64).ln());
    let mut out: Vec<u64> = (0..count)
        .map(|i| {
            (lf + (lt - lf) * i as f64 / (count - 1).max(1) as f64)
                .exp()
                .round() as u64
        })
        .map(|t| t.clamp(from, to))
        .collect();
    out.dedup();
    out
}

fn sum_case_report(index: u64) -> CheckReport {
    let cases = sum_cases();
    let case = cases[index as usize % cases.len()];
    let mut report = CheckReport::new(LemmaId::SumBound);
    let SumCase { a, sigma, delta } = case;
    if delta == 1.0 && a - sigma + 1.0 == 0.0 {
        report.skip();
        report
            .flagged
            .push(format!("a - sigma + 1 = 0 at a={a}, sigma={sigma}"));
        return report;
    }
    let t_min = if delta < 1.0 {
        sum_bound_tau(a, sigma, delta).floor() as u64 + 1
    } else {
        2
    };
    if t_min > SUM_T_CAP {
        report.skip();
        return report;
    }
    let t_max = SUM_T_MAX
        .max(t_min.saturating_add(SUM_T_MAX))
        .min(SUM_T_CAP);
    let sums = weighted_tail_sums(a, sigma, delta, t_max);
    let mut ts: Vec<u64> = (t_min.max(2)..t_min.max(2) + 20)
        .filter(|t| *t <= t_max)
        .collect();
    ts.extend(log_spaced(t_min.max(2), t_max, 30));
    ts.sort_unstable();
    ts.dedup();
    for t in ts {
        let rhs = sum_bound_rhs(a, sigma, delta, t).expect("case inside hypotheses");
        report.record(index, rhs - sums[t as usize - 1], 1e-10 * (1.0 + rhs));
    }
    report
}

// Lemma 7 ---------------------------------------------------------------

/// `⟨x−x*, ∇f(x)⟩ ≥ c1‖∇f(x)‖² + c2‖x−x*‖²`.
pub fn check_strong_convexity_bound(
    objs: &[LocalObjective],
    r: &WeightVector,
    x: &DVector<f64>,
) -> Result<CheckReport> {
    let mut report = CheckReport::new(LemmaId::StrongConvexity);
    match strong_convexity_slack(objs, r, std::slice::from_ref(x))? {
        Some(slacks) => {
            for (slack, tol) in slacks {
                report.record(0, slack, tol);
            }
        }
        None => report.skip(),
    }
    Ok(report)
}

fn strong_convexity_slack(
    objs: &[LocalObjective],
    r: &WeightVector,
    xs: &[DVector<f64>],
) -> Result<Option<Vec<(f64, f64)>>> {
    let sm = smoothness_constants(objs, r)?;
    if !sm.strongly_convex() {
        return Ok(None);
    }
    let x_star = global_optimum(objs, r)?;
    let c1 = 1.0 / (sm.mu_f + sm.l_f);
    let c2 = sm.mu_f * sm.l_f / (sm.mu_f + sm.l_f);
    Ok(Some(
        xs.iter()
            .map(|x| {
                let g = weighted_gradient(objs, r, x);
                let e = x - &x_star;
                let slack = e.dot(&g) - c1 * g.norm_squared() - c2 * e.norm_squared();
                (slack, 1e-9 * (1.0 + x.norm_squared()))
            })
            .collect(),
    ))
}

/// Ten random points on a random small regression instance.
fn strong_convexity_instance(seed: u64) -> CheckReport {
    let mut report = CheckReport::new(LemmaId::StrongConvexity);
    let mut rng = oracle_rng(seed);
    let d = rng.random_range(1..=6usize);
    let n = rng.random_range(1..=4usize);
    let samples = rng.random_range((d + n).max(2 * d)..=4 * d + n);
    let problem = RegressionProblem::synthesize(samples, d, seed).expect("positive sizes");
    let r = WeightVector::random(n, 0.01, 0.09, &mut rng).expect("positive range");
    let part = partition(&problem, &r, seed).expect("enough samples");
    let xs: Vec<DVector<f64>> = (0..10)
        .map(|_| {
            let scale = 10f64.powf(rng.random_range(-2.0..2.0));
            DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    match strong_convexity_slack(&part.objectives, &r, &xs) {
        Ok(Some(slacks)) => {
            for (slack, tol) in slacks {
                report.record(seed, slack, tol);
            }
        }
        _ => report.skip(),
    }
    report
}

// Suite -----------------------------------------------------------------

/// Instances per randomized check in the default suite.
pub const DEFAULT_INSTANCES: u64 = 1_200;

/// Re-runs the instance behind a report's `worst_seed`.
pub fn replay(lemma: LemmaId, seed: u64) -> CheckReport {
    match lemma {
        LemmaId::Contraction => contraction_instance(seed),
        LemmaId::Submultiplicative => submultiplicative_instance(seed),
        LemmaId::Young => young_instance(seed),
        LemmaId::ProductBound => product_instance(seed),
        LemmaId::Telescope => telescope_instance(seed),
        LemmaId::SumBound => sum_case_report(seed),
        LemmaId::StrongConvexity => strong_convexity_instance(seed),
    }
}

fn instance_seeds(lemma: LemmaId, base_seed: u64, instances: u64) -> Vec<u64> {
    match lemma {
        LemmaId::ProductBound => (0..product_grid().len() as u64).collect(),
        LemmaId::SumBound => (0..sum_cases().len() as u64).collect(),
        // Each instance tests ten points.
        LemmaId::StrongConvexity => (0..instances.div_ceil(10))
            .map(|k| base_seed.wrapping_add(k))
            .collect(),
        _ => (0..instances).map(|k| base_seed.wrapping_add(k)).collect(),
    }
}

pub fn run_check(lemma: LemmaId, base_seed: u64, instances: u64) -> CheckReport {
    instance_seeds(lemma, base_seed, instances)
        .into_par_iter()
        .map(|seed| replay(lemma, seed))
        .reduce(|| CheckReport::new(lemma), CheckReport::merge)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub reports: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(CheckReport::passed)
    }

    pub fn violations(&self) -> usize {
        self.reports.iter().map(|r| r.violations).sum()
    }
}

pub fn run_suite(base_seed: u64, instances: u64) -> SuiteReport {
    SuiteReport {
        reports: LemmaId::ALL
            .par_iter()
            .map(|&lemma| run_check(lemma, base_seed, instances))
            .collect(),
    }
}

/// Matrix `W(t) = 1rᵀ` for every `t`.
pub fn averaging_schedule(r: WeightVector) -> Result<MixingSchedule> {
    let w = MixingMatrix::averaging(&r);
    MixingSchedule::from_sequence(vec![w], r, 1)
}
