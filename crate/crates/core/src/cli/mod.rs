//! The experiment runner behind the `dimix` binary.
//!
//! Every command writes a human-readable report to the supplied sink and
//! returns the structured result.

pub mod config;
pub mod matrix_file;
pub mod output;
pub mod plot;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::analysis::{
    contraction_constants, evaluate_bound, fit_power_law, regime, xi_constants, RateFit, Regime,
    TheoryInputs, TheoryParams, XiConstants,
};
use crate::dimix::{monte_carlo, Metric, MonteCarlo};
use crate::error::{invalid, Result};
use crate::lemma_oracle::{run_suite, SuiteReport};
use crate::noise::noise_variance_bound;
use crate::objective::{gradient_bound_estimate, smoothness_constants};
use crate::topology::{validate_schedule, ValidationReport};

pub use config::{ExperimentConfig, NoiseKindConfig, Setup, TopologyKind, WeightsKind};
pub use output::{Derived, Manifest, RunsSection, TraceRow, MANIFEST_FILE};

pub const DEFAULT_T_GRID: [u64; 5] = [500, 1000, 2000, 4000, 5000];

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub plots: bool,
    /// Concurrent runs; `0` uses every core.
    pub jobs: usize,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            plots: false,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub monte_carlo: MonteCarlo,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Constants of the built experiment; `γ`, `K` and `D` come from the traces.
pub fn derive(setup: &Setup, config: &ExperimentConfig, mc: &MonteCarlo) -> Result<Derived> {
    let exp = &setup.experiment;
    let sched = &exp.schedule;
    let r_min = sched.weights().min();
    let (lambda, kappa) =
        contraction_constants(sched.eta(), r_min, sched.window(), exp.n(), config.beta0)?;
    let smooth = smoothness_constants(&exp.objectives, exp.weights())?;
    let (mu_f, l_f) = (smooth.mu_f, smooth.l_f);
    let done = || mc.traces.iter().filter(|t| t.completed());
    let state_norm_bound = done()
        .flat_map(|t| t.records.iter().map(|r| r.state_norm_max))
        .fold(0.0, f64::max);
    let k_grad = done().map(gradient_bound_estimate).fold(0.0, f64::max);
    let gamma = noise_variance_bound(&exp.noise, exp.dim(), state_norm_bound);
    let mut derived = Derived {
        lambda,
        kappa,
        eta: sched.eta(),
        window: sched.window(),
        r_min,
        mu_f,
        l_f,
        c1: 1.0 / (mu_f + l_f),
        c2: mu_f * l_f / (mu_f + l_f),
        gamma,
        k_grad,
        state_norm_bound,
        regime: None,
        t1: None,
        t2: None,
        t3: None,
        t4: None,
    };
    if let (true, Ok(reg)) = (smooth.strongly_convex(), regime(&exp.steps)) {
        let th = crate::analysis::thresholds(&exp.steps, lambda, mu_f, l_f)?;
        derived.regime = Some(regime_name(reg).into());
        derived.t1 = Some(th.t1);
        derived.t2 = Some(th.t2);
        derived.t3 = Some(th.t3);
        derived.t4 = th.t4;
    }
    Ok(derived)
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Subcritical => "subcritical",
        Regime::Critical => "critical",
    }
}

pub fn cmd_run(
    config: &ExperimentConfig,
    opts: &RunOptions,
    log: &mut dyn Write,
) -> Result<RunOutcome> {
    let setup = config.build()?;
    std::fs::create_dir_all(&opts.out)?;
    let mc = monte_carlo(
        &setup.experiment,
        config.horizon,
        config.num_runs,
        config.seed,
        opts.jobs,
    )?;
    for (k, trace) in mc.traces.iter().enumerate() {
        let mut w = create(&opts.out.join(output::run_file_name(k)))?;
        output::write_run_csv(&mut w, trace)?;
        w.flush()?;
    }
    if mc.completed() > 0 {
        let mut w = create(&opts.out.join("mean.csv"))?;
        output::write_mean_csv(&mut w, &mc.stats)?;
        w.flush()?;
    }
    let manifest = Manifest {
        version: crate::VERSION.into(),
        config: config.clone(),
        derived: derive(&setup, config, &mc)?,
        runs: RunsSection {
            seeds: mc.traces.iter().map(|t| t.seed).collect(),
            completed: mc.completed(),
            aborted: mc.aborted.clone(),
            abort_reasons: mc.traces.iter().filter_map(|t| t.aborted.clone()).collect(),
            adjusted_agents: setup.adjusted_agents.clone(),
        },
    };
    std::fs::write(opts.out.join(MANIFEST_FILE), manifest.to_toml()?)?;
    if opts.plots && mc.completed() > 0 {
        write_plots(&opts.out, &mc)?;
    }

    writeln!(
        log,
        "runs: {} completed, {} aborted",
        mc.completed(),
        mc.aborted.len()
    )?;
    for seed in &mc.aborted {
        writeln!(log, "  aborted: seed {seed}")?;
    }
    if mc.completed() > 0 {
        let last = config.horizon as usize - 1;
        for m in Metric::CSV {
            let s = mc.stats(m);
            writeln!(
                log,
                "{:<14} at T={}: {:.6e} ± {:.2e}",
                m.name(),
                config.horizon,
                s.mean[last],
                s.stderr[last]
            )?;
        }
    }
    writeln!(log, "wrote {}", opts.out.display())?;
    Ok(RunOutcome {
        manifest,
        monte_carlo: mc,
    })
}

fn write_plots(out: &Path, mc: &MonteCarlo) -> Result<()> {
    let series = |m: Metric| plot::Series {
        label: m.name(),
        points: mc
            .stats(m)
            .mean
            .iter()
            .enumerate()
            .map(|(i, &v)| ((i + 1) as f64, v))
            .collect(),
    };
    let loss = plot::loglog_svg(
        "Training loss vs. iterations",
        "loss",
        &[series(Metric::LossPooled), series(Metric::LossWeighted)],
    );
    std::fs::write(out.join("loss.svg"), loss)?;
    let dev = plot::loglog_svg(
        "Consensus deviation and distance to optimum",
        "squared r-norm",
        &[series(Metric::DeviationSq), series(Metric::DistOptSq)],
    );
    std::fs::write(out.join("deviation.svg"), dev)?;
    Ok(())
}

pub fn cmd_validate(
    config: &ExperimentConfig,
    horizon: u64,
    log: &mut dyn Write,
) -> Result<ValidationReport> {
    config.validate()?;
    let schedule = config.schedule()?;
    let rep = validate_schedule(&schedule, horizon);
    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    writeln!(
        log,
        "schedule {:?}, n = {}, horizon = {horizon}, B = {}",
        schedule.kind(),
        schedule.n(),
        rep.window
    )?;
    let (t, row, sum) = rep.worst_row;
    writeln!(
        log,
        "{} row-stochastic: max |row sum - 1| = {:.3e} (t = {t}, row {row}, sum = {sum:.17})",
        mark(rep.stochastic_ok()),
        rep.max_row_sum_deviation
    )?;
    writeln!(
        log,
        "     r-stationarity: max |r^T W - r^T|_inf = {:.3e}",
        rep.max_stationarity_deviation
    )?;
    match rep.min_positive_entry {
        Some(m) => writeln!(
            log,
            "{} positive entries >= eta = {:.6e}: min = {m:.6e}",
            mark(rep.eta_ok()),
            rep.eta
        )?,
        None => writeln!(log, "{} positive entries: none", mark(rep.eta_ok()))?,
    }
    writeln!(
        log,
        "{} B-window strong connectivity: {} of {} windows failed",
        mark(rep.connectivity_ok()),
        rep.failed_windows.len(),
        rep.windows_checked
    )?;
    if let Some(first) = rep.failed_windows.first() {
        writeln!(log, "     first failing window starts at t = {first}")?;
    }
    writeln!(log, "{}", if rep.passed() { "PASS" } else { "FAIL" })?;
    Ok(rep)
}

#[derive(Debug, Clone, Default)]
pub struct TheoryOptions {
    pub traces: Option<PathBuf>,
    pub assume_q0: Option<f64>,
    pub gamma: Option<f64>,
    pub k_grad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub t: f64,
    /// `None` below the thresholds or when the critical condition fails.
    pub bound: Option<f64>,
    pub empirical: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TheoryReport {
    pub params: TheoryParams,
    pub xi: XiConstants,
    pub rows: Vec<BoundRow>,
}

/// `1, 2, 5, 10, 20, …` up to `upper`.
pub fn log_grid(upper: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut decade = 1.0f64;
    'outer: while decade.is_finite() {
        for m in [1.0, 2.0, 5.0] {
            let t = m * decade;
            if t > upper {
                break 'outer;
            }
            out.push(t);
        }
        decade *= 10.0;
    }
    out
}

pub fn cmd_theory(
    config: &ExperimentConfig,
    opts: &TheoryOptions,
    log: &mut dyn Write,
) -> Result<TheoryReport> {
    config.validate()?;
    let steps = config.steps()?;
    regime(&steps)?;
    let setup = config.build()?;
    let exp = &setup.experiment;
    let smooth = smoothness_constants(&exp.objectives, exp.weights())?;
    if !smooth.strongly_convex() {
        return Err(invalid(
            "mu_f = 0: the global objective is not strongly convex, no bound available",
        ));
    }

    let traces = match &opts.traces {
        Some(dir) => output::read_trace_dir(dir)?,
        None => Vec::new(),
    };
    let manifest = match &opts.traces {
        Some(dir) if dir.join(MANIFEST_FILE).exists() => {
            Some(Manifest::load(&dir.join(MANIFEST_FILE))?)
        }
        _ => None,
    };
    let gamma = opts
        .gamma
        .or(manifest.as_ref().map(|m| m.derived.gamma))
        .ok_or_else(|| {
            invalid("gamma unknown: pass --gamma or point --traces at a run directory")
        })?;
    let k_grad = opts
        .k_grad
        .or(manifest.as_ref().map(|m| m.derived.k_grad))
        .ok_or_else(|| invalid("K unknown: pass --k-grad or point --traces at a run directory"))?;

    let sched = &exp.schedule;
    let params = TheoryParams::new(TheoryInputs {
        steps,
        n: exp.n(),
        window: sched.window(),
        eta: sched.eta(),
        r_min: sched.weights().min(),
        mu_f: smooth.mu_f,
        l_f: smooth.l_f,
        gamma,
        k_grad,
    })?;
    let t0 = params.thresholds.t0();
    let q_t0 = match opts.assume_q0 {
        Some(q) => q,
        None => {
            if traces.is_empty() {
                return Err(invalid(
                    "no traces for Q(T0): pass --traces DIR or --assume-q0",
                ));
            }
            let idx = t0 as usize - 1;
            let len = traces.iter().map(Vec::len).min().unwrap_or(0);
            if t0 > len as f64 {
                return Err(invalid(format!(
                    "T0 = {t0:.6e} exceeds the trace length {len}; pass --assume-q0"
                )));
            }
            traces.iter().map(|tr| tr[idx].avg_dist_sq()).sum::<f64>() / traces.len() as f64
        }
    };
    let xi = xi_constants(&params, q_t0)?;

    let trace_len = traces.iter().map(Vec::len).min().unwrap_or(0);
    let empirical = |t: f64| -> Option<f64> {
        let idx = t as usize;
        (t.fract() == 0.0 && idx >= 1 && idx <= trace_len).then(|| {
            traces.iter().map(|tr| tr[idx - 1].dist_opt_sq).sum::<f64>() / traces.len() as f64
        })
    };
    let th = &params.thresholds;
    let applicable = th.applicable();
    let usable = params.regime == Regime::Subcritical || params.critical_condition();
    let upper = (config.horizon as f64)
        .max(trace_len as f64)
        .max(10.0 * applicable)
        .min(1e300);
    let rows: Vec<BoundRow> = log_grid(upper)
        .into_iter()
        .map(|t| BoundRow {
            t,
            bound: (usable && t >= applicable)
                .then(|| evaluate_bound(t, &xi, params.regime, steps.mu(), steps.nu())),
            empirical: empirical(t),
        })
        .collect();

    writeln!(log, "regime: {}", regime_name(params.regime))?;
    writeln!(log, "deviation exponent: -{}", params.deviation_exponent())?;
    writeln!(
        log,
        "optimality exponent: -{}",
        params.optimality_exponent()
    )?;
    writeln!(
        log,
        "lambda = {:.6e}, kappa = {:.12}, c1 = {:.6e}, c2 = {:.6e}, c2*alpha0*beta0 = {:.6e}",
        params.lambda,
        params.kappa,
        params.c1,
        params.c2,
        params.averaged_rate()
    )?;
    writeln!(
        log,
        "mu_f = {:.6e}, L_f = {:.6e}, gamma = {gamma:.6e}, K = {k_grad:.6e}, Q(T0) = {q_t0:.6e}",
        smooth.mu_f, smooth.l_f
    )?;
    writeln!(log, "T1 = {:.6e}", th.t1)?;
    writeln!(log, "T2 = {:.6e}", th.t2)?;
    writeln!(log, "T3 = {:.6e}", th.t3)?;
    match th.t4 {
        Some(t4) => writeln!(log, "T4 = {t4:.6e}")?,
        None => writeln!(log, "T4 = n/a")?,
    }
    for (k, e) in xi.eps.iter().enumerate() {
        writeln!(log, "eps{} = {e:.6e}", k + 1)?;
    }
    writeln!(log, "xi1 = {:.6e}", xi.xi1)?;
    match xi.ln_xi2 {
        Some(l) => writeln!(log, "xi2 = exp({l:.6e})")?,
        None => writeln!(log, "xi2 = n/a")?,
    }
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
    writeln!(log, "xi3 = {}", opt(xi.xi3))?;
    writeln!(log, "xi4 = {:.6e}", xi.xi4)?;
    writeln!(log, "xi5 = {}", opt(xi.xi5))?;
    if !usable {
        writeln!(
            log,
            "critical condition c2*alpha0*beta0 >= min(2mu-1, 2nu) fails: bound not available"
        )?;
    }
    writeln!(log, "{:>12} {:>14} {:>14}", "T", "bound", "empirical")?;
    for row in &rows {
        let bound = match row.bound {
            Some(b) => format!("{b:.6e}"),
            None if usable => match th.violated_by(row.t.min(u64::MAX as f64) as u64) {
                Some((name, _)) => format!("< {name}"),
                None => "< T4".into(),
            },
            None => "n/a".into(),
        };
        writeln!(
            log,
            "{:>12.0} {:>14} {:>14}",
            row.t,
            bound,
            opt(row.empirical)
        )?;
    }
    Ok(TheoryReport { params, xi, rows })
}

pub fn cmd_lemmas(seed: u64, instances: u64, log: &mut dyn Write) -> Result<SuiteReport> {
    let suite = run_suite(seed, instances);
    for rep in &suite.reports {
        writeln!(
            log,
            "{} {:<26} {:?} instances={} skipped={} violations={} worst_slack={:.3e} tol={:.1e} worst_seed={}",
            if rep.passed() { "PASS" } else { "FAIL" },
            rep.lemma.name(),
            rep.kind(),
            rep.instances,
            rep.skipped,
            rep.violations,
            rep.worst_slack,
            rep.worst_tolerance,
            rep.worst_seed
        )?;
        for f in &rep.flagged {
            writeln!(log, "     flagged: {f}")?;
        }
    }
    writeln!(log, "total violations: {}", suite.violations())?;
    Ok(suite)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub t: u64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub fit: RateFit,
}

pub fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(invalid("T grid needs at least two points"));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!(
            "T grid must be positive and strictly increasing: {grid:?}"
        )));
    }
    Ok(())
}

/// Fits `value(T)` on the grid; `value` returns `(mean, stderr)`.
pub fn sweep_with(
    grid: &[u64],
    mut value: impl FnMut(u64) -> Result<(f64, f64)>,
) -> Result<SweepReport> {
    check_grid(grid)?;
    let points = grid
        .iter()
        .map(|&t| value(t).map(|(mean, stderr)| SweepPoint { t, mean, stderr }))
        .collect::<Result<Vec<_>>>()?;
    let ts: Vec<f64> = points.iter().map(|p| p.t as f64).collect();
    let vals: Vec<f64> = points.iter().map(|p| p.mean).collect();
    let fit = fit_power_law(&ts, &vals)?;
    Ok(SweepReport { points, fit })
}

/// A run of length `T` is an exact prefix of a longer run with the same
/// seed, so one Monte Carlo batch to `max(grid)` serves every grid point.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    grid: &[u64],
    opts: &RunOptions,
    log: &mut dyn Write,
) -> Result<SweepReport> {
    check_grid(grid)?;
    let setup = config.build()?;
    let horizon = *grid.last().expect("checked");
    let mc = monte_carlo(
        &setup.experiment,
        horizon,
        config.num_runs,
        config.seed,
        opts.jobs,
    )?;
    if mc.completed() == 0 {
        return Err(invalid("every run diverged"));
    }
    let stats = mc.stats(Metric::DistOptSq);
    let report = sweep_with(grid, |t| {
        Ok((stats.mean[t as usize - 1], stats.stderr[t as usize - 1]))
    })?;

    std::fs::create_dir_all(&opts.out)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(&opts.out.join("sweep.csv"))?);
    w.write_record(["T", "dist_opt_sq_mean", "dist_opt_sq_stderr"])?;
    for p in &report.points {
        w.write_record([
            p.t.to_string(),
            format!("{:.16e}", p.mean),
            format!("{:.16e}", p.stderr),
        ])?;
    }
    w.flush()?;

    if !mc.aborted.is_empty() {
        writeln!(log, "aborted runs (excluded): {:?}", mc.aborted)?;
    }
    write_sweep(&report, log)?;
    Ok(report)
}

pub fn write_sweep(report: &SweepReport, log: &mut dyn Write) -> Result<()> {
    writeln!(log, "{:>8} {:>14} {:>12}", "T", "dist_opt_sq", "stderr")?;
    for p in &report.points {
        writeln!(log, "{:>8} {:>14.6e} {:>12.3e}", p.t, p.mean, p.stderr)?;
    }
    writeln!(
        log,
        "slope = {:.6} ± {:.6} ({} points)",
        report.fit.slope, report.fit.slope_stderr, report.fit.points
    )?;
    Ok(())
}
