//! r-norm calculus, run diagnostics and the constants of the convergence
//! bound.

use nalgebra::{DMatrix, DVector};

use crate::dimix::{RunTrace, StepSchedule};
use crate::error::{invalid, Error, Result};
use crate::topology::{MixingSchedule, WeightVector};

/// Past this many factors, products `∏(1 − λβ(k))` are summed in log space.
pub const LOG_PRODUCT_THRESHOLD: u64 = 10_000;

fn check_rows(a: &DMatrix<f64>, r: &WeightVector) -> Result<()> {
    if a.nrows() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows but r has {} entries",
            a.nrows(),
            r.len()
        )));
    }
    Ok(())
}

/// `‖A‖ᵣ² = Σ_i r_i‖A_i‖²`.
pub fn r_norm_sq(a: &DMatrix<f64>, r: &WeightVector) -> Result<f64> {
    check_rows(a, r)?;
    Ok(a.row_iter()
        .zip(r.as_slice())
        .map(|(row, w)| w * row.norm_squared())
        .sum())
}

pub fn r_norm(a: &DMatrix<f64>, r: &WeightVector) -> Result<f64> {
    r_norm_sq(a, r).map(f64::sqrt)
}

/// `x̄ = rᵀX`.
pub fn weighted_average(x: &DMatrix<f64>, r: &WeightVector) -> DVector<f64> {
    x.tr_mul(&DVector::from_column_slice(r.as_slice()))
}

/// `‖X − 1x̄‖ᵣ²`.
pub fn deviation_sq(x: &DMatrix<f64>, r: &WeightVector) -> Result<f64> {
    check_rows(x, r)?;
    let xbar = weighted_average(x, r);
    Ok(x.row_iter()
        .zip(r.as_slice())
        .map(|(row, w)| w * (row.transpose() - &xbar).norm_squared())
        .sum())
}

/// `‖X − 1x*‖ᵣ²`.
pub fn dist_opt_sq(x: &DMatrix<f64>, r: &WeightVector, x_star: &DVector<f64>) -> Result<f64> {
    check_rows(x, r)?;
    if x.ncols() != x_star.len() {
        return Err(Error::DimensionMismatch(format!(
            "states have dimension {} but x* has {}",
            x.ncols(),
            x_star.len()
        )));
    }
    Ok(x.row_iter()
        .zip(r.as_slice())
        .map(|(row, w)| w * (row.transpose() - x_star).norm_squared())
        .sum())
}

/// `λ = η·r_min/(2Bn²)` and `κ = 1/(1 − Bλβ0)`.
pub fn contraction_constants(
    eta: f64,
    r_min: f64,
    window: usize,
    n: usize,
    beta0: f64,
) -> Result<(f64, f64)> {
    if !(eta > 0.0 && r_min > 0.0 && window >= 1 && n >= 1) {
        return Err(invalid(format!(
            "contraction needs eta > 0, r_min > 0, B >= 1, n >= 1 (got {eta}, {r_min}, {window}, {n})"
        )));
    }
    let b = window as f64;
    let lambda = eta * r_min / (2.0 * b * (n * n) as f64);
    let blb = b * lambda * beta0;
    if blb >= 1.0 {
        return Err(invalid(format!(
            "B*lambda*beta0 = {blb} >= 1, kappa undefined"
        )));
    }
    Ok((lambda, 1.0 / (1.0 - blb)))
}

pub fn contraction_factor(schedule: &MixingSchedule, steps: &StepSchedule) -> Result<(f64, f64)> {
    contraction_constants(
        schedule.eta(),
        schedule.weights().min(),
        schedule.window(),
        schedule.n(),
        steps.beta0(),
    )
}

/// `∏_{k=from}^{to}(1 − λβ(k))`, `1` for an empty range.
pub fn contraction_product(
    lambda: f64,
    beta: impl Fn(u64) -> f64,
    from: u64,
    to: u64,
) -> Result<f64> {
    if to < from {
        return Ok(1.0);
    }
    let factor = |k: u64| {
        let lb = lambda * beta(k);
        if lb >= 1.0 {
            Err(invalid(format!("lambda*beta({k}) = {lb} >= 1")))
        } else {
            Ok(lb)
        }
    };
    if to - from + 1 > LOG_PRODUCT_THRESHOLD {
        let mut log = 0.0;
        for k in from..=to {
            log += (-factor(k)?).ln_1p();
        }
        Ok(log.exp())
    } else {
        let mut prod = 1.0;
        for k in from..=to {
            prod *= 1.0 - factor(k)?;
        }
        Ok(prod)
    }
}

/// `π(t:s) = β(s)κ^{1/2}∏_{k=s+1}^{t−1}(1 − λβ(k))^{1/2}`.
pub fn pi_factor(
    t: u64,
    s: u64,
    beta: impl Fn(u64) -> f64,
    lambda: f64,
    kappa: f64,
) -> Result<f64> {
    if !(1 <= s && s < t) {
        return Err(invalid(format!(
            "pi(t:s) needs 1 <= s < t, got t={t}, s={s}"
        )));
    }
    let prod = contraction_product(lambda, &beta, s + 1, t - 1)?;
    Ok(beta(s) * kappa.sqrt() * prod.sqrt())
}

/// `A(a, σ, δ)` from the sum bound.
pub fn a_constant(a: f64, sigma: f64, delta: f64) -> Result<f64> {
    if !(a.is_finite() && sigma.is_finite() && delta.is_finite()) {
        return Err(invalid("A(a, sigma, delta) needs finite arguments"));
    }
    let lead = 2f64.powf(sigma);
    if delta == 1.0 {
        let gap = a - sigma + 1.0;
        if !(a > 0.0) || gap == 0.0 {
            return Err(invalid(format!(
                "A(a, sigma, 1) undefined for a={a}, sigma={sigma}"
            )));
        }
        return Ok(lead * (1.0 + 1.0 / gap.abs()));
    }
    if !(0.0 <= delta && delta < sigma.min(1.0)) {
        return Err(invalid(format!(
            "A needs 0 <= delta < min(1, sigma), got delta={delta}, sigma={sigma}"
        )));
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(invalid(format!("A needs 0 < a <= 1, got a={a}")));
    }
    let base = 1.0 + 2.0 / a;
    let other = if sigma > 1.0 {
        1.0 + (2.0 * (sigma - delta) / a).powf((sigma - delta) / (1.0 - delta)) / (sigma - 1.0)
    } else if sigma == 1.0 {
        1.0 + (2.0 / a) * (2.0 * (1.0 - delta) / a).ln()
    } else {
        1.0 + 2.0 * (sigma - delta) / (a * (1.0 - sigma))
    };
    Ok(lead * base.max(other))
}

/// Which form of the bound applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `μ + ν < 1`.
    Subcritical,
    /// `μ + ν = 1`.
    Critical,
}

pub const REGIME_TOL: f64 = 1e-12;

pub fn regime(steps: &StepSchedule) -> Result<Regime> {
    let sum = steps.mu() + steps.nu();
    if (sum - 1.0).abs() <= REGIME_TOL {
        Ok(Regime::Critical)
    } else if sum < 1.0 {
        Ok(Regime::Subcritical)
    } else {
        Err(invalid(format!(
            "mu + nu = {sum} > 1 is outside the convergence theorem"
        )))
    }
}

/// Iteration thresholds, stored as reals because they are routinely
/// far beyond any integer horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// Only defined when `μ + ν < 1`.
    pub t4: Option<f64>,
}

impl Thresholds {
    /// `T0 = max(T1, T2, T3)`.
    pub fn t0(&self) -> f64 {
        self.t1.max(self.t2).max(self.t3)
    }

    /// The largest applicable threshold.
    pub fn applicable(&self) -> f64 {
        self.t0().max(self.t4.unwrap_or(0.0))
    }

    /// The name and value of the first threshold exceeding `t`.
    pub fn violated_by(&self, t: u64) -> Option<(&'static str, f64)> {
        let t = t as f64;
        [
            ("T1", Some(self.t1)),
            ("T2", Some(self.t2)),
            ("T3", Some(self.t3)),
            ("T4", self.t4),
        ]
        .into_iter()
        .find_map(|(name, v)| v.filter(|v| t < *v).map(|v| (name, v)))
    }
}

pub fn thresholds(steps: &StepSchedule, lambda: f64, mu_f: f64, l_f: f64) -> Result<Thresholds> {
    let regime = regime(steps)?;
    let (mu, nu) = (steps.mu(), steps.nu());
    let (a0, b0) = (steps.alpha0(), steps.beta0());
    let lb = lambda * b0;
    let c2 = mu_f * l_f / (mu_f + l_f);
    let ceil1 = |v: f64| v.ceil().max(1.0);
    let t1 = ceil1((2.0 * mu / lb).powf(1.0 / (1.0 - mu)));
    let t2 = ceil1((8.0 * nu / lb).powf(1.0 / (1.0 - mu)));
    let t3 = ceil1((a0 * b0 * (mu_f + l_f) / 2.0).powf(1.0 / (mu + nu)));
    let t4 = match regime {
        Regime::Subcritical => {
            let rate = (mu - nu).min(2.0 * nu);
            Some(ceil1(
                (2.0 * rate / (c2 * a0 * b0)).powf(1.0 / (1.0 - mu - nu)),
            ))
        }
        Regime::Critical => None,
    };
    Ok(Thresholds { t1, t2, t3, t4 })
}

/// The problem- and network-level quantities the bound is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    pub steps: StepSchedule,
    pub n: usize,
    pub window: usize,
    pub eta: f64,
    pub r_min: f64,
    pub mu_f: f64,
    pub l_f: f64,
    /// Noise variance bound.
    pub gamma: f64,
    /// Gradient norm bound `K`.
    pub k_grad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub inputs: TheoryInputs,
    pub regime: Regime,
    pub lambda: f64,
    pub kappa: f64,
    pub c1: f64,
    pub c2: f64,
    pub thresholds: Thresholds,
}

impl TheoryParams {
    pub fn new(inputs: TheoryInputs) -> Result<Self> {
        if !(inputs.mu_f > 0.0 && inputs.l_f >= inputs.mu_f) {
            return Err(invalid(format!(
                "need 0 < mu_f <= L_f, got mu_f={}, L_f={}",
                inputs.mu_f, inputs.l_f
            )));
        }
        if !(inputs.gamma >= 0.0 && inputs.k_grad >= 0.0) {
            return Err(invalid("gamma and K must be nonnegative"));
        }
        let regime = regime(&inputs.steps)?;
        let (lambda, kappa) = contraction_constants(
            inputs.eta,
            inputs.r_min,
            inputs.window,
            inputs.n,
            inputs.steps.beta0(),
        )?;
        let c1 = 1.0 / (inputs.mu_f + inputs.l_f);
        let c2 = inputs.mu_f * inputs.l_f / (inputs.mu_f + inputs.l_f);
        let thresholds = thresholds(&inputs.steps, lambda, inputs.mu_f, inputs.l_f)?;
        Ok(Self {
            inputs,
            regime,
            lambda,
            kappa,
            c1,
            c2,
            thresholds,
        })
    }

    /// `c2·α0·β0`, the contraction rate of the averaged iterate.
    pub fn averaged_rate(&self) -> f64 {
        self.c2 * self.inputs.steps.alpha0() * self.inputs.steps.beta0()
    }

    /// In the critical regime: `α0β0 ≥ (μ_f+L_f)/(μ_f L_f)·min(2μ−1, 2ν)`.
    pub fn critical_condition(&self) -> bool {
        let s = &self.inputs.steps;
        self.averaged_rate() >= (2.0 * s.mu() - 1.0).min(2.0 * s.nu())
    }

    /// `min(μ, 2ν)`.
    pub fn deviation_exponent(&self) -> f64 {
        let s = &self.inputs.steps;
        s.mu().min(2.0 * s.nu())
    }

    /// `min(μ − ν, 2ν)`.
    pub fn optimality_exponent(&self) -> f64 {
        let s = &self.inputs.steps;
        (s.mu() - s.nu()).min(2.0 * s.nu())
    }
}

/// Intermediate `ε` constants and bound coefficients `ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiConstants {
    pub eps: [f64; 5],
    pub xi1: f64,
    /// `ln ξ2`; `ξ2` itself overflows for realistic `T0`.
    pub ln_xi2: Option<f64>,
    pub xi3: Option<f64>,
    pub xi4: f64,
    pub xi5: Option<f64>,
    pub t0: f64,
    pub q_t0: f64,
}

impl XiConstants {
    pub fn xi2(&self) -> Option<f64> {
        self.ln_xi2.map(f64::exp)
    }
}

pub fn xi_constants(theory: &TheoryParams, q_t0: f64) -> Result<XiConstants> {
    if !(q_t0 >= 0.0 && q_t0.is_finite()) {
        return Err(invalid(format!(
            "Q(T0) must be finite and >= 0, got {q_t0}"
        )));
    }
    let inp = &theory.inputs;
    let s = &inp.steps;
    let (a0, b0, mu, nu) = (s.alpha0(), s.beta0(), s.mu(), s.nu());
    let (lambda, kappa, gamma, k) = (theory.lambda, theory.kappa, inp.gamma, inp.k_grad);
    let (mu_f, l_f, c2) = (inp.mu_f, inp.l_f, theory.c2);

    let a1 = a_constant(lambda * b0, 2.0 * mu, mu)?;
    let a2 = a_constant(lambda * b0 / 2.0, 2.0 * nu + mu, mu)?;
    let eps1 = gamma * kappa * b0 * b0 * a1;
    let eps2 = k * a0 * a0 * b0 * kappa.sqrt() * a2;
    let eps3 = 2.0 * eps1 + 4.0 * kappa.sqrt() * eps2 / lambda;
    let eps4 = a0 * b0 * (1.0 + 1.0 / c2) * l_f * eps3 + gamma * b0 * b0;
    let sigma5 = (2.0 * mu).min(3.0 * nu + mu);
    let delta5 = match theory.regime {
        Regime::Subcritical => mu + nu,
        Regime::Critical => 1.0,
    };
    let a5 = a_constant(c2 * a0 * b0, sigma5, delta5)?;
    let eps5 = a5;

    let xi1 = 4.0 * gamma * kappa * b0 * b0 * a1 + 8.0 * k * kappa * a0 * a0 * b0 / lambda * a2;
    let xi4 = (a0 * b0 * (mu_f * l_f + mu_f + l_f) * xi1 / mu_f + 2.0 * gamma * b0 * b0) * a5;
    let t0 = theory.thresholds.t0();
    let (ln_xi2, xi3, xi5) = match theory.regime {
        Regime::Subcritical => {
            let xi3 = a0 * b0 * mu_f * l_f / ((1.0 - mu - nu) * (mu_f + l_f));
            let ln_xi2 = 2f64.ln() + xi3 * t0.powf(1.0 - mu - nu) + q_t0.ln();
            (Some(ln_xi2), Some(xi3), None)
        }
        Regime::Critical => {
            let xi5 = 2.0 * t0.powf(a0 * b0 * mu_f * l_f / (mu_f + l_f)) * q_t0 + xi4;
            (None, None, Some(xi5))
        }
    };
    Ok(XiConstants {
        eps: [eps1, eps2, eps3, eps4, eps5],
        xi1,
        ln_xi2,
        xi3,
        xi4,
        xi5,
        t0,
        q_t0,
    })
}

/// Right side of the bound at `T`, without threshold checks.
pub fn evaluate_bound(t: f64, xi: &XiConstants, regime: Regime, mu: f64, nu: f64) -> f64 {
    let dev = xi.xi1 * t.powf(-mu.min(2.0 * nu));
    let opt = t.powf(-(mu - nu).min(2.0 * nu));
    match regime {
        Regime::Subcritical => {
            let transient = match (xi.ln_xi2, xi.xi3) {
                (Some(l2), Some(x3)) => (l2 - x3 * t.powf(1.0 - mu - nu)).exp(),
                _ => 0.0,
            };
            dev + transient + xi.xi4 * opt
        }
        Regime::Critical => dev + xi.xi5.unwrap_or(0.0) * opt,
    }
}

/// The bound at `T`, rejecting horizons before the thresholds.
pub fn theorem_bound(t: u64, theory: &TheoryParams, xi: &XiConstants) -> Result<f64> {
    if let Some((name, value)) = theory.thresholds.violated_by(t) {
        return Err(Error::BelowThreshold { name, value, t });
    }
    if theory.regime == Regime::Critical && !theory.critical_condition() {
        return Err(invalid(format!(
            "c2*alpha0*beta0 = {} is below min(2mu-1, 2nu)",
            theory.averaged_rate()
        )));
    }
    let s = &theory.inputs.steps;
    Ok(evaluate_bound(t as f64, xi, theory.regime, s.mu(), s.nu()))
}

/// Least-squares line through `(ln t, ln value)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

pub fn fit_power_law(ts: &[f64], values: &[f64]) -> Result<RateFit> {
    if ts.len() != values.len() || ts.len() < 2 {
        return Err(invalid("a rate fit needs at least two (t, value) pairs"));
    }
    if let Some(i) = values.iter().position(|v| !(*v > 0.0)) {
        return Err(invalid(format!(
            "value at t={} is not positive ({})",
            ts[i], values[i]
        )));
    }
    if ts.iter().any(|t| !(*t > 0.0)) {
        return Err(invalid("t must be positive"));
    }
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("all t values coincide"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if xs.len() > 2 {
        let sse: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (sse / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        slope,
        intercept,
        slope_stderr,
        points: xs.len(),
    })
}

/// Fits a per-iteration curve (`curve[t−1]` is the value at `t`) over
/// `t_min..=t_max`.
pub fn fit_rate(curve: &[f64], t_min: u64, t_max: u64) -> Result<RateFit> {
    if t_min < 1 || t_max < t_min || t_max as usize > curve.len() {
        return Err(invalid(format!(
            "window [{t_min}, {t_max}] outside a curve of length {}",
            curve.len()
        )));
    }
    let ts: Vec<f64> = (t_min..=t_max).map(|t| t as f64).collect();
    fit_power_law(&ts, &curve[t_min as usize - 1..t_max as usize])
}

/// Monte Carlo estimate of `Q(t) = E‖x̄(t) − x*‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
}

pub fn estimate_q(traces: &[RunTrace], t: u64) -> Result<QEstimate> {
    let vals: Vec<f64> = traces
        .iter()
        .filter(|tr| tr.completed())
        .filter_map(|tr| tr.at(t).map(|r| r.avg_dist_sq))
        .collect();
    if vals.is_empty() {
        return Err(invalid(format!("no completed trace reaches t = {t}")));
    }
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let stderr = if vals.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
    } else {
        0.0
    };
    Ok(QEstimate {
        mean,
        stderr,
        runs: vals.len(),
    })
}
