//! The two-time-scale update
//! `x_i(t+1) = (1−β(t))x_i(t) + β(t)x̂_i(t) − α(t)β(t)∇f_i(x_i(t))`
//! in per-agent and stacked matrix form, plus run drivers.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::analysis;
use crate::error::{invalid, Error, Result};
use crate::noise::{neighbor_estimate, NoiseModel};
use crate::objective::{global_optimum, weighted_loss, LocalObjective};
use crate::rng::NoiseStreams;
use crate::topology::{MixingMatrix, MixingSchedule, WeightVector};

/// States with any entry above this magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// `α(t) = α0/t^ν`, `β(t) = β0/t^μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    alpha0: f64,
    nu: f64,
    beta0: f64,
    mu: f64,
}

impl StepSchedule {
    pub fn new(alpha0: f64, nu: f64, beta0: f64, mu: f64) -> Result<Self> {
        if !(alpha0.is_finite() && alpha0 > 0.0) {
            return Err(invalid(format!("alpha0 must be positive, got {alpha0}")));
        }
        if !(nu > 0.0 && nu < 1.0) {
            return Err(invalid(format!("nu must lie in (0,1), got {nu}")));
        }
        if !(beta0 > 0.0 && beta0 <= 1.0) {
            return Err(invalid(format!("beta0 must lie in (0,1], got {beta0}")));
        }
        if !(mu > 0.0 && mu < 1.0) {
            return Err(invalid(format!("mu must lie in (0,1), got {mu}")));
        }
        Ok(Self {
            alpha0,
            nu,
            beta0,
            mu,
        })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self, t: u64) -> f64 {
        self.alpha0 / (t as f64).powf(self.nu)
    }

    pub fn beta(&self, t: u64) -> f64 {
        self.beta0 / (t as f64).powf(self.mu)
    }

    /// The effective gradient step `α(t)β(t)`.
    pub fn gradient_step(&self, t: u64) -> f64 {
        self.alpha(t) * self.beta(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub t: u64,
    /// Agents × dimension.
    pub x: DMatrix<f64>,
}

impl RunState {
    /// `X(1) = 0`.
    pub fn initial(n: usize, d: usize) -> Self {
        Self {
            t: 1,
            x: DMatrix::zeros(n, d),
        }
    }
}

/// Stacked gradients `∇f(X)`, one row per agent.
pub fn stacked_gradient(objs: &[LocalObjective], x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for (i, obj) in objs.iter().enumerate() {
        let gi = obj.gradient(&x.row(i).transpose());
        g.set_row(i, &gi.transpose());
    }
    g
}

fn check_shapes(state: &RunState, w: &MixingMatrix, objs: &[LocalObjective]) -> Result<()> {
    let (n, d) = state.x.shape();
    if w.n() != n || objs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "state has {n} agents, W is {}x{}, {} objectives",
            w.n(),
            w.n(),
            objs.len()
        )));
    }
    if let Some(bad) = objs.iter().position(|o| o.dim() != d) {
        return Err(Error::DimensionMismatch(format!(
            "objective {bad} has dimension {} but states have {d}",
            objs[bad].dim()
        )));
    }
    Ok(())
}

fn guard(t: u64, x: &DMatrix<f64>) -> Result<()> {
    let mut magnitude: f64 = 0.0;
    for v in x.iter() {
        if !v.is_finite() {
            return Err(Error::Diverged {
                t,
                magnitude: f64::INFINITY,
            });
        }
        magnitude = magnitude.max(v.abs());
    }
    if magnitude > DIVERGENCE_LIMIT {
        return Err(Error::Diverged { t, magnitude });
    }
    Ok(())
}

/// One synchronous round; also returns the realized noise matrix `E(t)`
/// with rows `x̂_i(t) − Σ_j W_ij x_j(t)`.
pub fn step_recording(
    state: &RunState,
    w: &MixingMatrix,
    noise: &NoiseModel,
    objs: &[LocalObjective],
    sched: &StepSchedule,
    streams: &NoiseStreams,
) -> Result<(RunState, DMatrix<f64>)> {
    check_shapes(state, w, objs)?;
    let t = state.t;
    let (n, d) = state.x.shape();
    let alpha = sched.alpha(t);
    let beta = sched.beta(t);
    let mut next = DMatrix::zeros(n, d);
    let mut e = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut rng = streams.agent(i, t);
        let xhat = neighbor_estimate(noise, w.row(i), &state.x, &mut rng)?;
        let xi = state.x.row(i).transpose();
        let gi = objs[i].gradient(&xi);
        let row = &xi * (1.0 - beta) + &xhat * beta - gi * (alpha * beta);
        next.set_row(i, &row.transpose());

        let mut mixed = DVector::zeros(d);
        for (j, &wij) in w.row(i).iter().enumerate() {
            if wij != 0.0 {
                mixed.axpy(wij, &state.x.row(j).transpose(), 1.0);
            }
        }
        e.set_row(i, &(xhat - mixed).transpose());
    }
    guard(t + 1, &next)?;
    Ok((RunState { t: t + 1, x: next }, e))
}

/// One synchronous round of the per-agent rule.
pub fn step(
    state: &RunState,
    w: &MixingMatrix,
    noise: &NoiseModel,
    objs: &[LocalObjective],
    sched: &StepSchedule,
    streams: &NoiseStreams,
) -> Result<RunState> {
    check_shapes(state, w, objs)?;
    let t = state.t;
    let (n, d) = state.x.shape();
    let alpha = sched.alpha(t);
    let beta = sched.beta(t);
    let mut next = DMatrix::zeros(n, d);
    for i in 0..n {
        let xi = state.x.row(i).transpose();
        let xhat = if noise.is_noiseless() {
            let mut acc = DVector::zeros(d);
            for (j, &wij) in w.row(i).iter().enumerate() {
                if wij > 0.0 {
                    acc.axpy(wij, &state.x.row(j).transpose(), 1.0);
                }
            }
            acc
        } else {
            neighbor_estimate(noise, w.row(i), &state.x, &mut streams.agent(i, t))?
        };
        let gi = objs[i].gradient(&xi);
        let row = xi * (1.0 - beta) + xhat * beta - gi * (alpha * beta);
        next.set_row(i, &row.transpose());
    }
    guard(t + 1, &next)?;
    Ok(RunState { t: t + 1, x: next })
}

/// `X(t+1) = ((1−β)I + βW)X + βE − αβ∇f(X)`.
pub fn step_matrix(
    state: &RunState,
    w: &MixingMatrix,
    e: &DMatrix<f64>,
    objs: &[LocalObjective],
    sched: &StepSchedule,
) -> Result<RunState> {
    check_shapes(state, w, objs)?;
    if e.shape() != state.x.shape() {
        return Err(Error::DimensionMismatch(format!(
            "noise matrix is {:?} but state is {:?}",
            e.shape(),
            state.x.shape()
        )));
    }
    let t = state.t;
    let n = state.x.nrows();
    let alpha = sched.alpha(t);
    let beta = sched.beta(t);
    let a = DMatrix::identity(n, n) * (1.0 - beta) + w.to_dmatrix() * beta;
    let next = a * &state.x + e * beta - stacked_gradient(objs, &state.x) * (alpha * beta);
    guard(t + 1, &next)?;
    Ok(RunState { t: t + 1, x: next })
}

/// Metrics recorded at each iteration `t`, evaluated at `X(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub t: u64,
    /// Pooled loss at the weighted average `x̄(t)`.
    pub loss_pooled: f64,
    /// `f(x̄(t)) = Σ r_i f_i(x̄(t))`.
    pub loss_weighted: f64,
    /// `‖X − 1x̄‖ᵣ²`.
    pub deviation_sq: f64,
    /// `‖X − 1x*‖ᵣ²`.
    pub dist_opt_sq: f64,
    /// `‖x̄ − x*‖²`.
    pub avg_dist_sq: f64,
    /// `max_i ‖∇f_i(x_i)‖²`.
    pub grad_sq_max: f64,
    /// `max_i ‖x_i‖`.
    pub state_norm_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    LossPooled,
    LossWeighted,
    DeviationSq,
    DistOptSq,
}

impl Metric {
    pub const CSV: [Metric; 4] = [
        Metric::LossPooled,
        Metric::LossWeighted,
        Metric::DeviationSq,
        Metric::DistOptSq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::LossPooled => "loss_pooled",
            Metric::LossWeighted => "loss_weighted",
            Metric::DeviationSq => "deviation_sq",
            Metric::DistOptSq => "dist_opt_sq",
        }
    }

    pub fn of(self, r: &Record) -> f64 {
        match self {
            Metric::LossPooled => r.loss_pooled,
            Metric::LossWeighted => r.loss_weighted,
            Metric::DeviationSq => r.deviation_sq,
            Metric::DistOptSq => r.dist_opt_sq,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub seed: u64,
    /// Requested `T`.
    pub horizon: u64,
    /// One record per completed iteration, starting at `t = 1`.
    pub records: Vec<Record>,
    pub checkpoints: Vec<RunState>,
    /// Divergence diagnostic if the run stopped early.
    pub aborted: Option<String>,
}

impl RunTrace {
    pub fn completed(&self) -> bool {
        self.aborted.is_none()
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("a trace always holds X(1)")
    }

    /// The record at iteration `t`, if it was reached.
    pub fn at(&self, t: u64) -> Option<&Record> {
        t.checked_sub(1).and_then(|k| self.records.get(k as usize))
    }

    pub fn series(&self, metric: Metric) -> Vec<f64> {
        self.records.iter().map(|r| metric.of(r)).collect()
    }
}

/// Everything a run needs besides `T` and the seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub schedule: MixingSchedule,
    pub noise: NoiseModel,
    pub objectives: Vec<LocalObjective>,
    pub steps: StepSchedule,
    /// All data in one objective; its value at `x̄` is the pooled loss.
    pub pooled: LocalObjective,
    pub x_star: DVector<f64>,
}

impl Experiment {
    pub fn new(
        schedule: MixingSchedule,
        noise: NoiseModel,
        objectives: Vec<LocalObjective>,
        steps: StepSchedule,
        pooled: LocalObjective,
    ) -> Result<Self> {
        let x_star = global_optimum(&objectives, schedule.weights())?;
        if pooled.dim() != x_star.len() {
            return Err(Error::DimensionMismatch(
                "pooled objective dimension".into(),
            ));
        }
        Ok(Self {
            schedule,
            noise,
            objectives,
            steps,
            pooled,
            x_star,
        })
    }

    pub fn n(&self) -> usize {
        self.schedule.n()
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn weights(&self) -> &WeightVector {
        self.schedule.weights()
    }

    pub fn record(&self, state: &RunState) -> Record {
        let r = self.weights();
        let x = &state.x;
        let xbar = analysis::weighted_average(x, r);
        let deviation_sq = analysis::deviation_sq(x, r).expect("shapes checked");
        let avg_dist_sq = (&xbar - &self.x_star).norm_squared();
        let mut grad_sq_max: f64 = 0.0;
        let mut state_norm_max: f64 = 0.0;
        for (i, obj) in self.objectives.iter().enumerate() {
            let xi = x.row(i).transpose();
            grad_sq_max = grad_sq_max.max(obj.gradient(&xi).norm_squared());
            state_norm_max = state_norm_max.max(xi.norm());
        }
        Record {
            t: state.t,
            loss_pooled: self.pooled.value(&xbar),
            loss_weighted: weighted_loss(&self.objectives, r, &xbar),
            deviation_sq,
            dist_opt_sq: deviation_sq + avg_dist_sq,
            avg_dist_sq,
            grad_sq_max,
            state_norm_max,
        }
    }

    /// Executes `T − 1` rounds from `X(1) = 0`.
    pub fn run(&self, horizon: u64, seed: u64) -> Result<RunTrace> {
        self.run_with_checkpoints(horizon, seed, &[])
    }

    /// As [`Experiment::run`], also keeping the full state at each listed `t`.
    pub fn run_with_checkpoints(
        &self,
        horizon: u64,
        seed: u64,
        checkpoints: &[u64],
    ) -> Result<RunTrace> {
        if horizon == 0 {
            return Err(invalid("T must be >= 1"));
        }
        let streams = NoiseStreams::new(seed);
        let mut state = RunState::initial(self.n(), self.dim());
        let mut trace = RunTrace {
            seed,
            horizon,
            records: Vec::with_capacity(horizon as usize),
            checkpoints: Vec::new(),
            aborted: None,
        };
        loop {
            trace.records.push(self.record(&state));
            if checkpoints.contains(&state.t) {
                trace.checkpoints.push(state.clone());
            }
            if state.t >= horizon {
                break;
            }
            let w = self.schedule.matrix(state.t);
            match step(
                &state,
                w,
                &self.noise,
                &self.objectives,
                &self.steps,
                &streams,
            ) {
                Ok(next) => state = next,
                Err(e @ Error::Diverged { .. }) => {
                    trace.aborted = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(trace)
    }
}

/// Per-`t` mean and standard error of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricStats {
    pub metric: Metric,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MonteCarlo {
    pub traces: Vec<RunTrace>,
    /// Seeds of runs that diverged and were left out of the aggregate.
    pub aborted: Vec<u64>,
    pub stats: Vec<MetricStats>,
}

impl MonteCarlo {
    pub fn stats(&self, metric: Metric) -> &MetricStats {
        self.stats
            .iter()
            .find(|s| s.metric == metric)
            .expect("all metrics aggregated")
    }

    pub fn completed(&self) -> usize {
        self.traces.len() - self.aborted.len()
    }
}

/// Aggregates completed traces; the sample standard deviation is divided
/// by `√runs`.
pub fn aggregate(traces: &[RunTrace], horizon: u64) -> Vec<MetricStats> {
    let done: Vec<&RunTrace> = traces.iter().filter(|t| t.completed()).collect();
    let k = done.len() as f64;
    Metric::CSV
        .iter()
        .map(|&metric| {
            let mut mean = Vec::with_capacity(horizon as usize);
            let mut stderr = Vec::with_capacity(horizon as usize);
            for idx in 0..horizon as usize {
                let vals: Vec<f64> = done.iter().map(|tr| metric.of(&tr.records[idx])).collect();
                let all_equal = vals.windows(2).all(|w| w[0] == w[1]);
                let m = match (all_equal, vals.first()) {
                    (true, Some(&v)) => v,
                    _ => vals.iter().sum::<f64>() / k,
                };
                let se = if vals.len() > 1 && !all_equal {
                    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0);
                    (var / k).sqrt()
                } else {
                    0.0
                };
                mean.push(m);
                stderr.push(se);
            }
            MetricStats {
                metric,
                mean,
                stderr,
            }
        })
        .collect()
}

/// Independent runs with seeds `base_seed + k`, at most `jobs` at a time
/// (`0` lets the thread pool decide).
pub fn monte_carlo(
    exp: &Experiment,
    horizon: u64,
    num_runs: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<MonteCarlo> {
    if num_runs == 0 {
        return Err(invalid("num_runs must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let traces = pool.install(|| {
        (0..num_runs as u64)
            .into_par_iter()
            .map(|k| exp.run(horizon, base_seed.wrapping_add(k)))
            .collect::<Result<Vec<_>>>()
    })?;
    let aborted = traces
        .iter()
        .filter(|t| !t.completed())
        .map(|t| t.seed)
        .collect();
    let stats = aggregate(&traces, horizon);
    Ok(MonteCarlo {
        traces,
        aborted,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{partition, RegressionProblem};
    use crate::rng::{stream, Purpose};
    use rand::Rng;

    fn zero_objectives(n: usize, d: usize) -> Vec<LocalObjective> {
        (0..n)
            .map(|_| LocalObjective::new(vec![0], DMatrix::zeros(1, d), DVector::zeros(1)).unwrap())
            .collect()
    }

    fn random_state(n: usize, d: usize, seed: u64) -> RunState {
        let mut rng = stream(seed, Purpose::Oracle);
        RunState {
            t: 1,
            x: DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn step_schedule_validation() {
        assert!(StepSchedule::new(0.1, 0.25, 1.0, 0.75).is_ok());
        assert!(StepSchedule::new(0.1, 0.25, 1.2, 0.75).is_err());
        assert!(StepSchedule::new(0.1, 0.0, 0.5, 0.75).is_err());
        assert!(StepSchedule::new(0.1, 0.25, 0.5, 1.0).is_err());
        assert!(StepSchedule::new(-1.0, 0.25, 0.5, 0.5).is_err());
        let s = StepSchedule::new(0.1, 0.25, 0.7, 0.75).unwrap();
        assert_eq!(s.alpha(1), 0.1);
        assert!((s.beta(16) - 0.7 / 8.0).abs() < 1e-15);
        for t in 1..500 {
            assert!(s.beta(t + 1) <= s.beta(t) && s.beta(t) <= 1.0);
        }
    }

    #[test]
    fn identity_mixing_without_gradients_is_fixed() {
        let objs = zero_objectives(3, 2);
        let s = random_state(3, 2, 1);
        let sched = StepSchedule::new(0.3, 0.5, 0.9, 0.5).unwrap();
        let next = step(
            &s,
            &MixingMatrix::identity(3),
            &NoiseModel::noiseless(),
            &objs,
            &sched,
            &NoiseStreams::new(0),
        )
        .unwrap();
        assert_eq!(next.x, s.x);
        assert_eq!(next.t, 2);
    }

    #[test]
    fn single_agent_is_gradient_descent() {
        let p = RegressionProblem::synthesize(10, 3, 2).unwrap();
        let obj = LocalObjective::pooled(&p).unwrap();
        let sched = StepSchedule::new(0.5, 0.25, 0.8, 0.75).unwrap();
        let mut s = RunState::initial(1, 3);
        s.x[(0, 1)] = 0.4;
        let next = step(
            &s,
            &MixingMatrix::identity(1),
            &NoiseModel::noiseless(),
            std::slice::from_ref(&obj),
            &sched,
            &NoiseStreams::new(0),
        )
        .unwrap();
        let x = s.x.row(0).transpose();
        let expected = &x - obj.gradient(&x) * sched.gradient_step(1);
        assert!((next.x.row(0).transpose() - expected).amax() < 1e-15);
    }

    #[test]
    fn full_averaging_moves_consensus_by_gradient() {
        let p = RegressionProblem::synthesize(12, 3, 4).unwrap();
        let obj = LocalObjective::pooled(&p).unwrap();
        let r = WeightVector::from_positive(&[1.0, 2.0, 3.0]).unwrap();
        let objs = vec![obj.clone(), obj.clone(), obj.clone()];
        let c = DVector::from_vec(vec![0.3, -0.1, 0.7]);
        let s = RunState {
            t: 5,
            x: DMatrix::from_fn(3, 3, |_, k| c[k]),
        };
        let sched = StepSchedule::new(0.4, 0.25, 0.9, 0.75).unwrap();
        let next = step(
            &s,
            &MixingMatrix::averaging(&r),
            &NoiseModel::noiseless(),
            &objs,
            &sched,
            &NoiseStreams::new(0),
        )
        .unwrap();
        let xbar = analysis::weighted_average(&next.x, &r);
        let expected = &c - obj.gradient(&c) * sched.gradient_step(5);
        assert!((xbar - expected).amax() < 1e-14);
    }

    fn dual_path(n: usize, noise: NoiseModel, seed: u64) {
        let p = RegressionProblem::synthesize(5 * n.max(2), 6, seed).unwrap();
        let r = WeightVector::random(n, 0.01, 0.09, &mut stream(seed, Purpose::Weights)).unwrap();
        let part = partition(&p, &r, seed).unwrap();
        let sched = StepSchedule::new(0.1, 0.25, 0.7, 0.75).unwrap();
        let streams = NoiseStreams::new(seed);
        let schedules = if n >= 3 {
            vec![
                MixingSchedule::fixed_cycle(r.clone()).unwrap(),
                MixingSchedule::gossip(r.clone()).unwrap(),
            ]
        } else {
            vec![
                MixingSchedule::from_sequence(vec![MixingMatrix::identity(n)], r.clone(), 1)
                    .unwrap(),
            ]
        };
        for schedule in schedules {
            let mut state = random_state(n, 6, seed);
            for _ in 0..60 {
                let w = schedule.matrix(state.t);
                let (a, e) =
                    step_recording(&state, w, &noise, &part.objectives, &sched, &streams).unwrap();
                let b = step_matrix(&state, w, &e, &part.objectives, &sched).unwrap();
                let plain = step(&state, w, &noise, &part.objectives, &sched, &streams).unwrap();
                assert!(
                    (&a.x - &b.x).amax() <= 1e-13,
                    "n={n}: {}",
                    (&a.x - &b.x).amax()
                );
                assert_eq!(a.x, plain.x);
                state = a;
            }
        }
    }

    #[test]
    fn per_agent_and_matrix_paths_agree() {
        for n in [1, 3, 20] {
            dual_path(n, NoiseModel::quantizer(4).unwrap(), n as u64);
            dual_path(n, NoiseModel::gaussian(0.3).unwrap(), 100 + n as u64);
            dual_path(n, NoiseModel::noiseless(), 200 + n as u64);
        }
    }

    #[test]
    fn pure_beta_one_limit() {
        let n = 4;
        let r = WeightVector::uniform(n).unwrap();
        let w = crate::topology::fixed_cycle_matrix(&r).unwrap();
        let objs = zero_objectives(n, 3);
        let s = random_state(n, 3, 9);
        let sched = StepSchedule::new(0.1, 0.5, 1.0, 0.5).unwrap();
        let e = DMatrix::from_element(n, 3, 0.01);
        let next = step_matrix(&s, &w, &e, &objs, &sched).unwrap();
        assert!((next.x - (w.to_dmatrix() * &s.x + e)).amax() < 1e-15);
    }

    #[test]
    fn weighted_average_invariant_under_mixing() {
        let n = 7;
        let r = WeightVector::random(n, 0.01, 0.09, &mut stream(3, Purpose::Weights)).unwrap();
        let objs = zero_objectives(n, 4);
        let sched = StepSchedule::new(0.1, 0.25, 0.7, 0.75).unwrap();
        for schedule in [
            MixingSchedule::fixed_cycle(r.clone()).unwrap(),
            MixingSchedule::gossip(r.clone()).unwrap(),
        ] {
            let mut s = random_state(n, 4, 3);
            let start = analysis::weighted_average(&s.x, &r);
            for _ in 0..200 {
                s = step(
                    &s,
                    schedule.matrix(s.t),
                    &NoiseModel::noiseless(),
                    &objs,
                    &sched,
                    &NoiseStreams::new(0),
                )
                .unwrap();
                assert!((analysis::weighted_average(&s.x, &r) - &start).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn gossip_reaches_consensus() {
        for n in [3, 5, 8] {
            let r = WeightVector::random(n, 0.01, 0.09, &mut stream(n as u64, Purpose::Weights))
                .unwrap();
            let schedule = MixingSchedule::gossip(r.clone()).unwrap();
            let objs = zero_objectives(n, 3);
            // β ≡ 1 up to rounding keeps the pure mixing limit.
            let sched = StepSchedule::new(0.1, 0.5, 1.0, 1e-12).unwrap();
            let mut s = random_state(n, 3, n as u64);
            let xbar = analysis::weighted_average(&s.x, &r);
            let dist = |x: &DMatrix<f64>| {
                let c = DMatrix::from_fn(n, 3, |_, k| xbar[k]);
                analysis::r_norm_sq(&(x - c), &r).unwrap()
            };
            let initial = dist(&s.x);
            let mut prev = initial;
            for _ in 0..200 * n {
                s = step(
                    &s,
                    schedule.matrix(s.t),
                    &NoiseModel::noiseless(),
                    &objs,
                    &sched,
                    &NoiseStreams::new(0),
                )
                .unwrap();
                let cur = dist(&s.x);
                // Rounding dominates once the spread reaches machine precision.
                assert!(
                    cur <= prev * (1.0 + 1e-12) + 1e-24 * initial,
                    "n={n}: {cur} > {prev}"
                );
                prev = cur;
            }
            assert!(prev <= 1e-8 * initial, "n={n}: {prev} vs {initial}");
        }
    }

    #[test]
    fn divergence_is_flagged() {
        let p = RegressionProblem::synthesize(20, 3, 1).unwrap();
        let obj = LocalObjective::pooled(&p).unwrap();
        let r = WeightVector::uniform(1).unwrap();
        let schedule =
            MixingSchedule::from_sequence(vec![MixingMatrix::identity(1)], r, 1).unwrap();
        let steps = StepSchedule::new(1e4, 0.01, 1.0, 0.01).unwrap();
        let exp = Experiment::new(
            schedule,
            NoiseModel::noiseless(),
            vec![obj.clone()],
            steps,
            obj,
        )
        .unwrap();
        let trace = exp.run(500, 0).unwrap();
        assert!(!trace.completed());
        assert!(trace.records.len() < 500);
        assert!(trace.records.iter().all(|r| r.dist_opt_sq.is_finite()));
    }

    fn small_experiment(noise: NoiseModel) -> Experiment {
        let p = RegressionProblem::synthesize(30, 4, 11).unwrap();
        let r = WeightVector::random(5, 0.01, 0.09, &mut stream(11, Purpose::Weights)).unwrap();
        let part = partition(&p, &r, 11).unwrap();
        Experiment::new(
            MixingSchedule::gossip(r).unwrap(),
            noise,
            part.objectives,
            StepSchedule::new(0.1, 0.25, 0.7, 0.75).unwrap(),
            LocalObjective::pooled(&p).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn run_conventions() {
        let exp = small_experiment(NoiseModel::quantizer(4).unwrap());
        let one = exp.run(1, 3).unwrap();
        assert_eq!(one.records.len(), 1);
        assert_eq!(one.records[0].deviation_sq, 0.0);
        assert!((one.records[0].dist_opt_sq - exp.x_star.norm_squared()).abs() < 1e-12);

        let long = exp.run(300, 3).unwrap();
        let short = exp.run(120, 3).unwrap();
        assert_eq!(long.records.len(), 300);
        assert_eq!(&long.records[..120], &short.records[..]);
        assert_eq!(long.at(300).unwrap().t, 300);
        for rec in &long.records {
            assert!(rec.dist_opt_sq.is_finite() && rec.loss_pooled.is_finite());
            assert!((rec.dist_opt_sq - rec.deviation_sq - rec.avg_dist_sq).abs() < 1e-12);
        }
        let cp = exp.run_with_checkpoints(50, 3, &[1, 50]).unwrap();
        assert_eq!(cp.checkpoints.len(), 2);
        assert_eq!(cp.checkpoints[1].t, 50);
    }

    #[test]
    fn monte_carlo_aggregates() {
        let exp = small_experiment(NoiseModel::quantizer(4).unwrap());
        let mc = monte_carlo(&exp, 80, 1, 5, 2).unwrap();
        assert_eq!(
            mc.stats(Metric::DistOptSq).mean,
            mc.traces[0].series(Metric::DistOptSq)
        );
        assert!(mc.stats(Metric::DistOptSq).stderr.iter().all(|v| *v == 0.0));

        let mc = monte_carlo(&exp, 80, 6, 5, 3).unwrap();
        let again = monte_carlo(&exp, 80, 6, 5, 1).unwrap();
        assert_eq!(mc.stats, again.stats);
        assert_eq!(mc.traces[2].seed, 7);
        let manual: f64 = mc.traces.iter().map(|t| t.last().loss_pooled).sum::<f64>() / 6.0;
        assert!((mc.stats(Metric::LossPooled).mean[79] - manual).abs() < 1e-15);

        let quiet = small_experiment(NoiseModel::noiseless());
        let mc = monte_carlo(&quiet, 50, 4, 0, 0).unwrap();
        for s in &mc.stats {
            assert!(s.stderr.iter().all(|v| *v == 0.0), "{:?}", s.metric);
        }
    }
}
