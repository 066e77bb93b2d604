//! Mixing schedules: stationary weights, the two cycle-based matrix
//! families, user-supplied sequences, and the connectivity validator.
//!
//! Agents are stored 0-based. Formulas written for 1-based agents with the
//! cyclic successor map `<k> = (k mod n) + 1` are evaluated through
//! [`wrap`], which returns the 0-based position of `<k>`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Tolerance for row sums and stationarity.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// 0-based position of the cyclic index `<k> = (k mod n) + 1`.
pub fn wrap(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Strictly positive stochastic vector `r`, the common stationary
/// distribution of every mixing matrix and the weights of the global
/// objective.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
    min: f64,
}

impl WeightVector {
    /// Normalizes strictly positive `p` to sum to one.
    pub fn from_positive(p: &[f64]) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::EmptyWeights);
        }
        if let Some((index, &value)) = p
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::NonPositiveWeight { index, value });
        }
        let total: f64 = p.iter().sum();
        let weights: Vec<f64> = p.iter().map(|v| v / total).collect();
        let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { weights, min })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_positive(&vec![1.0; n])
    }

    /// Draws `p_i ~ U(low, high)` and normalizes.
    pub fn random<R: Rng + ?Sized>(n: usize, low: f64, high: f64, rng: &mut R) -> Result<Self> {
        if !(low > 0.0 && high > low) {
            return Err(invalid(format!("need 0 < low < high, got ({low}, {high})")));
        }
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(low..high)).collect();
        Self::from_positive(&p)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// `r_min`.
    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

/// Square non-negative matrix stored row-major.
///
/// Construction only checks shape, finiteness and sign; stochasticity is a
/// property the validator measures, so malformed user input can still be
/// loaded and reported on.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl MixingMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(invalid("mixing matrix must have at least one row"));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            entries.extend(row);
        }
        Self::from_entries(n, entries)
    }

    pub fn from_dmatrix(w: &DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "mixing matrix is {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let n = w.nrows();
        let entries = (0..n)
            .flat_map(|i| (0..n).map(move |j| w[(i, j)]))
            .collect();
        Self::from_entries(n, entries)
    }

    fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        if let Some(pos) = entries.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid(format!(
                "entry ({}, {}) = {} is not a finite non-negative weight",
                pos / n,
                pos % n,
                entries[pos]
            )));
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    /// The rank-one averaging matrix `1 rᵀ`.
    pub fn averaging(r: &WeightVector) -> Self {
        let n = r.len();
        let entries = (0..n).flat_map(|_| r.as_slice().iter().copied()).collect();
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    /// Edge set `{(j, i) : W_ij > 0}` in the direction information flows.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n).filter_map(move |j| (self.get(i, j) > 0.0).then_some((j, i)))
        })
    }

    pub fn min_positive(&self) -> Option<f64> {
        self.entries
            .iter()
            .copied()
            .filter(|v| *v > 0.0)
            .min_by(f64::total_cmp)
    }

    /// Largest `|Σ_j W_ij − 1|` with the offending row.
    pub fn row_sum_deviation(&self) -> (f64, usize, f64) {
        (0..self.n)
            .map(|i| {
                let sum: f64 = self.row(i).iter().sum();
                ((sum - 1.0).abs(), i, sum)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((0.0, 0, 1.0))
    }

    /// Largest `|(rᵀW)_j − r_j|`.
    pub fn stationarity_deviation(&self, r: &WeightVector) -> f64 {
        (0..self.n)
            .map(|j| {
                let col: f64 = (0..self.n).map(|i| r[i] * self.get(i, j)).sum();
                (col - r[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// The fixed undirected cycle: each agent averages with both cycle
/// neighbors using weights that keep `r` stationary.
pub fn fixed_cycle_matrix(r: &WeightVector) -> Result<MixingMatrix> {
    let n = r.len();
    if n < 3 {
        return Err(invalid(format!("fixed cycle needs n >= 3 agents, got {n}")));
    }
    let mut entries = vec![0.0; n * n];
    for k in 1..=n as i64 {
        let i = wrap(k, n);
        let prev = wrap(k - 1, n);
        let next = wrap(k + 1, n);
        for j in [prev, next] {
            entries[i * n + j] = r[j] / (2.0 * (r[i] + r[j]));
        }
        entries[i * n + i] = r[i] / (2.0 * (r[i] + r[next])) + r[i] / (2.0 * (r[i] + r[prev]));
    }
    MixingMatrix::from_entries(n, entries)
}

/// Cyclic gossip: at iteration `t` only the pair `<t>, <t+1>` averages.
pub fn gossip_matrix(t: u64, r: &WeightVector) -> Result<MixingMatrix> {
    let n = r.len();
    if t < 1 {
        return Err(invalid("gossip iteration index must be >= 1"));
    }
    if n < 3 {
        return Err(invalid(format!(
            "gossip cycle needs n >= 3 agents, got {n}"
        )));
    }
    let a = wrap(t as i64, n);
    let b = wrap(t as i64 + 1, n);
    let mut w = MixingMatrix::identity(n);
    let total = r[a] + r[b];
    for i in [a, b] {
        for j in [a, b] {
            w.entries[i * n + j] = r[j] / total;
        }
    }
    Ok(w)
}

#[derive(Debug, Clone)]
enum Generator {
    Fixed(MixingMatrix),
    /// One period of matrices; `W(t) = period[(t - 1) mod len]`.
    Periodic(Vec<MixingMatrix>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    FixedCycle,
    Gossip,
    Sequence,
}

/// A deterministic rule `t ↦ W(t)` together with the constants the
/// analysis needs: the stationary weights, the minimum positive entry `η`
/// and the declared connectivity window `B`.
#[derive(Debug, Clone)]
pub struct MixingSchedule {
    kind: ScheduleKind,
    generator: Generator,
    r: WeightVector,
    eta: f64,
    window: usize,
}

impl MixingSchedule {
    /// Fixed cycle with `B = 1`.
    pub fn fixed_cycle(r: WeightVector) -> Result<Self> {
        let w = fixed_cycle_matrix(&r)?;
        let eta = w.min_positive().unwrap_or(0.0);
        Ok(Self {
            kind: ScheduleKind::FixedCycle,
            generator: Generator::Fixed(w),
            r,
            eta,
            window: 1,
        })
    }

    /// Cyclic gossip with `B = n`.
    pub fn gossip(r: WeightVector) -> Result<Self> {
        let n = r.len();
        let period = (1..=n as u64)
            .map(|t| gossip_matrix(t, &r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::periodic(ScheduleKind::Gossip, period, r, n))
    }

    /// A user-supplied list, cycled when shorter than the horizon.
    pub fn from_sequence(
        matrices: Vec<MixingMatrix>,
        r: WeightVector,
        window: usize,
    ) -> Result<Self> {
        if matrices.is_empty() {
            return Err(invalid("matrix sequence is empty"));
        }
        if let Some(bad) = matrices.iter().position(|m| m.n() != r.len()) {
            return Err(Error::DimensionMismatch(format!(
                "matrix {} is {}x{} but r has {} entries",
                bad + 1,
                matrices[bad].n(),
                matrices[bad].n(),
                r.len()
            )));
        }
        if window == 0 {
            return Err(invalid("connectivity window must be >= 1"));
        }
        Ok(Self::periodic(ScheduleKind::Sequence, matrices, r, window))
    }

    fn periodic(
        kind: ScheduleKind,
        period: Vec<MixingMatrix>,
        r: WeightVector,
        window: usize,
    ) -> Self {
        let eta = period
            .iter()
            .filter_map(MixingMatrix::min_positive)
            .min_by(f64::total_cmp)
            .unwrap_or(0.0);
        Self {
            kind,
            generator: Generator::Periodic(period),
            r,
            eta,
            window,
        }
    }

    /// Re-declares the connectivity window `B`.
    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window.max(1);
        self
    }

    /// `W(t)` for `t >= 1`.
    pub fn matrix(&self, t: u64) -> &MixingMatrix {
        debug_assert!(t >= 1, "iterations are 1-based");
        match &self.generator {
            Generator::Fixed(w) => w,
            Generator::Periodic(period) => &period[((t.max(1) - 1) % period.len() as u64) as usize],
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.r.len()
    }

    pub fn weights(&self) -> &WeightVector {
        &self.r
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Declared `B`.
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn period(&self) -> usize {
        match &self.generator {
            Generator::Fixed(_) => 1,
            Generator::Periodic(p) => p.len(),
        }
    }
}

/// Per-check outcome of [`validate_schedule`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub horizon: u64,
    pub window: usize,
    pub eta: f64,
    /// Largest `|Σ_j W_ij(t) − 1|` and where it occurred `(t, row, sum)`.
    pub max_row_sum_deviation: f64,
    pub worst_row: (u64, usize, f64),
    /// Largest `|(rᵀW(t))_j − r_j|`.
    pub max_stationarity_deviation: f64,
    /// Smallest strictly positive entry observed.
    pub min_positive_entry: Option<f64>,
    pub windows_checked: u64,
    /// Window starts `t` for which `(t, t+B]` is not strongly connected.
    pub failed_windows: Vec<u64>,
}

impl ValidationReport {
    pub fn stochastic_ok(&self) -> bool {
        self.max_row_sum_deviation <= STOCHASTIC_TOL
            && self.max_stationarity_deviation <= STOCHASTIC_TOL
    }

    pub fn eta_ok(&self) -> bool {
        self.eta > 0.0 && self.min_positive_entry.is_some_and(|m| m >= self.eta)
    }

    pub fn connectivity_ok(&self) -> bool {
        self.failed_windows.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.stochastic_ok() && self.eta_ok() && self.connectivity_ok()
    }
}

/// True when the digraph on `n` vertices is strongly connected.
pub fn is_strongly_connected(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> bool {
    if n <= 1 {
        return true;
    }
    let mut graph = DiGraph::<(), ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for (a, b) in edges {
        graph.add_edge(nodes[a], nodes[b], ());
    }
    tarjan_scc(&graph).len() == 1
}

/// Checks stochasticity, the positive-entry floor `η`, and `B`-connectivity
/// over `t ∈ [1, horizon]`. Failures are reported, never raised.
pub fn validate_schedule(schedule: &MixingSchedule, horizon: u64) -> ValidationReport {
    let n = schedule.n();
    let window = schedule.window() as u64;
    let r = schedule.weights();

    let mut max_row = 0.0;
    let mut worst_row = (1, 0, 1.0);
    let mut max_stat = 0.0f64;
    let mut min_pos: Option<f64> = None;

    // Edge multiplicities over the sliding window (t, t+B].
    let mut live: HashMap<(usize, usize), u32> = HashMap::new();
    let mut failed = Vec::new();
    let mut checked = 0;

    for t in 1..=horizon {
        let w = schedule.matrix(t);
        let (dev, row, sum) = w.row_sum_deviation();
        if dev > max_row {
            max_row = dev;
            worst_row = (t, row, sum);
        }
        max_stat = max_stat.max(w.stationarity_deviation(r));
        if let Some(m) = w.min_positive() {
            min_pos = Some(min_pos.map_or(m, |p: f64| p.min(m)));
        }

        for e in w.edges() {
            *live.entry(e).or_default() += 1;
        }
        if t > window {
            for e in schedule.matrix(t - window).edges() {
                if let Some(c) = live.get_mut(&e) {
                    *c -= 1;
                    if *c == 0 {
                        live.remove(&e);
                    }
                }
            }
        }
        if t >= window {
            let start = t - window;
            if start >= 1 {
                checked += 1;
                if !is_strongly_connected(n, live.keys().copied()) {
                    failed.push(start);
                }
            }
        }
    }

    ValidationReport {
        horizon,
        window: schedule.window(),
        eta: schedule.eta(),
        max_row_sum_deviation: max_row,
        worst_row,
        max_stationarity_deviation: max_stat,
        min_positive_entry: min_pos,
        windows_checked: checked,
        failed_windows: failed,
    }
}
