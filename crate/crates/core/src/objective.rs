//! The synthetic linear-regression benchmark, its partition across agents,
//! and the constants (`μ`, `L`, `K`) the analysis consumes.
//!
//! Each agent's objective is the mean squared residual over its shard,
//! `f_i(x) = (1/(2|S_i|)) Σ_{j∈S_i} (v_j − u_jᵀx)²`, and the global
//! objective is `f = Σ_i r_i f_i`.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dimix::RunTrace;
use crate::error::{invalid, Error, Result};
use crate::rng::{stream, Purpose};
use crate::topology::WeightVector;

/// Feature entries are drawn from `U(0, 1)`, the truth from
/// `U(0, TRUTH_HIGH)` and the target noise from `U(0, noise_width)`.
pub const TRUTH_HIGH: f64 = 0.8;
pub const DEFAULT_NOISE_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    features: DMatrix<f64>,
    targets: DVector<f64>,
    truth: DVector<f64>,
    noise: DVector<f64>,
    seed: u64,
    noise_width: f64,
}

impl RegressionProblem {
    /// `v_i = u_iᵀ x̃ + θ_i` with `θ_i ~ U(0, 0.1)`.
    pub fn synthesize(samples: usize, dim: usize, seed: u64) -> Result<Self> {
        Self::synthesize_with_noise(samples, dim, seed, DEFAULT_NOISE_WIDTH)
    }

    pub fn synthesize_with_noise(
        samples: usize,
        dim: usize,
        seed: u64,
        noise_width: f64,
    ) -> Result<Self> {
        if samples == 0 || dim == 0 {
            return Err(invalid(format!(
                "need N >= 1 and d >= 1, got N={samples}, d={dim}"
            )));
        }
        if !(noise_width.is_finite() && noise_width >= 0.0) {
            return Err(invalid(format!(
                "noise width must be >= 0, got {noise_width}"
            )));
        }
        let mut rng = stream(seed, Purpose::Data);
        // Row-major draw order: features, then noise, then truth.
        let mut features = DMatrix::zeros(samples, dim);
        for i in 0..samples {
            for k in 0..dim {
                features[(i, k)] = rng.random::<f64>();
            }
        }
        let noise = DVector::from_fn(samples, |_, _| rng.random::<f64>() * noise_width);
        let truth = DVector::from_fn(dim, |_, _| rng.random::<f64>() * TRUTH_HIGH);
        Self::from_parts(features, truth, noise, seed, noise_width)
    }

    /// Assembles a problem from explicit data; targets are recomputed.
    pub fn from_parts(
        features: DMatrix<f64>,
        truth: DVector<f64>,
        noise: DVector<f64>,
        seed: u64,
        noise_width: f64,
    ) -> Result<Self> {
        if features.ncols() != truth.len() || features.nrows() != noise.len() {
            return Err(Error::DimensionMismatch(format!(
                "features {}x{}, truth {}, noise {}",
                features.nrows(),
                features.ncols(),
                truth.len(),
                noise.len()
            )));
        }
        let targets = &features * &truth + &noise;
        Ok(Self {
            features,
            targets,
            truth,
            noise,
            seed,
            noise_width,
        })
    }

    pub fn samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// `x̃`.
    pub fn truth(&self) -> &DVector<f64> {
        &self.truth
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Whether `N >= d`; otherwise the pooled optimum is not unique.
    pub fn overdetermined(&self) -> bool {
        self.samples() >= self.dim()
    }

    /// The pooled loss `(1/(2N)) Σ_i (v_i − u_iᵀx)²`.
    pub fn pooled_loss(&self, x: &DVector<f64>) -> f64 {
        (&self.features * x - &self.targets).norm_squared() / (2.0 * self.samples() as f64)
    }

    pub fn to_file(&self, embed: bool) -> ProblemFile {
        let rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        ProblemFile {
            samples: self.samples(),
            dim: self.dim(),
            seed: self.seed,
            noise_width: self.noise_width,
            features: embed.then(|| rows(&self.features)),
            truth: embed.then(|| self.truth.as_slice().to_vec()),
            noise: embed.then(|| self.noise.as_slice().to_vec()),
        }
    }

    pub fn save(&self, path: &Path, embed: bool) -> Result<()> {
        std::fs::write(path, toml::to_string(&self.to_file(embed))?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ProblemFile = toml::from_str(&std::fs::read_to_string(path)?)?;
        file.into_problem()
    }
}

/// Structured-text form of a problem. Seed and dimensions reproduce it
/// exactly; the data may optionally be embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub samples: usize,
    pub dim: usize,
    pub seed: u64,
    pub noise_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<f64>>,
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<RegressionProblem> {
        match (self.features, self.truth, self.noise) {
            (Some(rows), Some(truth), Some(noise)) => {
                if rows.len() != self.samples || rows.iter().any(|r| r.len() != self.dim) {
                    return Err(Error::DimensionMismatch(
                        "embedded features disagree with header".into(),
                    ));
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                RegressionProblem::from_parts(
                    DMatrix::from_row_slice(self.samples, self.dim, &flat),
                    DVector::from_vec(truth),
                    DVector::from_vec(noise),
                    self.seed,
                    self.noise_width,
                )
            }
            _ => RegressionProblem::synthesize_with_noise(
                self.samples,
                self.dim,
                self.seed,
                self.noise_width,
            ),
        }
    }
}

/// One agent's shard-mean quadratic.
#[derive(Debug, Clone)]
pub struct LocalObjective {
    shard: Vec<usize>,
    features: DMatrix<f64>,
    targets: DVector<f64>,
    hessian: DMatrix<f64>,
    mu: f64,
    smoothness: f64,
}

impl LocalObjective {
    pub fn new(shard: Vec<usize>, features: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if features.nrows() == 0
            || features.nrows() != targets.len()
            || shard.len() != targets.len()
        {
            return Err(Error::DimensionMismatch(format!(
                "shard of {} indices with {} feature rows and {} targets",
                shard.len(),
                features.nrows(),
                targets.len()
            )));
        }
        let hessian = features.tr_mul(&features) / features.nrows() as f64;
        let (mu, smoothness) = extreme_eigenvalues(&hessian);
        Ok(Self {
            shard,
            features,
            targets,
            hessian,
            mu: mu.max(0.0),
            smoothness,
        })
    }

    /// A single-agent objective over all data of `problem`.
    pub fn pooled(problem: &RegressionProblem) -> Result<Self> {
        Self::new(
            (0..problem.samples()).collect(),
            problem.features().clone(),
            problem.targets().clone(),
        )
    }

    pub fn shard(&self) -> &[usize] {
        &self.shard
    }

    pub fn len(&self) -> usize {
        self.shard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shard.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (&self.features * x - &self.targets).norm_squared() / (2.0 * self.len() as f64)
    }

    /// `(1/|S_i|) U_iᵀ(U_i x − v_i)`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let residual = &self.features * x - &self.targets;
        self.features.tr_mul(&residual) / self.len() as f64
    }

    /// `(1/|S_i|) U_iᵀ v_i`, the linear term of the gradient.
    pub fn linear_term(&self) -> DVector<f64> {
        self.features.tr_mul(&self.targets) / self.len() as f64
    }
}

fn extreme_eigenvalues(h: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(h.clone());
    let lo = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub objectives: Vec<LocalObjective>,
    /// Agents whose apportioned size was zero and received a point taken
    /// from the largest shard.
    pub adjusted: Vec<usize>,
}

/// Largest-remainder apportionment of `total` by `r`, ties to the lower
/// index, followed by topping up empty shards from the largest one.
pub fn apportion(total: usize, r: &WeightVector) -> (Vec<usize>, Vec<usize>) {
    let raw: Vec<f64> = r.as_slice().iter().map(|w| w * total as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    let mut adjusted = Vec::new();
    for i in 0..sizes.len() {
        if sizes[i] == 0 {
            let donor = (0..sizes.len())
                .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
                .expect("non-empty");
            sizes[donor] -= 1;
            sizes[i] = 1;
            adjusted.push(i);
        }
    }
    (sizes, adjusted)
}

/// Distributes the data across agents in proportion to `r`.
pub fn partition(problem: &RegressionProblem, r: &WeightVector, seed: u64) -> Result<Partition> {
    let n = r.len();
    let total = problem.samples();
    if n > total {
        return Err(invalid(format!(
            "cannot split {total} samples across {n} agents"
        )));
    }
    let (sizes, adjusted) = apportion(total, r);
    let mut indices: Vec<usize> = (0..total).collect();
    indices.shuffle(&mut stream(seed, Purpose::Partition));

    let mut objectives = Vec::with_capacity(n);
    let mut offset = 0;
    for size in sizes {
        let shard: Vec<usize> = indices[offset..offset + size].to_vec();
        offset += size;
        let features = problem.features().select_rows(&shard);
        let targets = DVector::from_iterator(size, shard.iter().map(|&j| problem.targets()[j]));
        objectives.push(LocalObjective::new(shard, features, targets)?);
    }
    Ok(Partition {
        objectives,
        adjusted,
    })
}

fn check_agents(objs: &[LocalObjective], r: &WeightVector) -> Result<usize> {
    if objs.is_empty() || objs.len() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} objectives for {} weights",
            objs.len(),
            r.len()
        )));
    }
    let d = objs[0].dim();
    if objs.iter().any(|o| o.dim() != d) {
        return Err(Error::DimensionMismatch(
            "objectives disagree on dimension".into(),
        ));
    }
    Ok(d)
}

/// `Σ_i r_i H_i`.
pub fn weighted_hessian(objs: &[LocalObjective], r: &WeightVector) -> Result<DMatrix<f64>> {
    let d = check_agents(objs, r)?;
    Ok(objs
        .iter()
        .zip(r.as_slice())
        .fold(DMatrix::zeros(d, d), |acc, (o, w)| acc + o.hessian() * *w))
}

/// `∇f(x) = Σ_i r_i ∇f_i(x)`.
pub fn weighted_gradient(
    objs: &[LocalObjective],
    r: &WeightVector,
    x: &DVector<f64>,
) -> DVector<f64> {
    objs.iter()
        .zip(r.as_slice())
        .fold(DVector::zeros(x.len()), |acc, (o, w)| {
            acc + o.gradient(x) * *w
        })
}

/// `f(x) = Σ_i r_i f_i(x)`.
pub fn weighted_loss(objs: &[LocalObjective], r: &WeightVector, x: &DVector<f64>) -> f64 {
    objs.iter()
        .zip(r.as_slice())
        .map(|(o, w)| w * o.value(x))
        .sum()
}

/// Minimizer of `f = Σ r_i f_i` from the weighted normal equations.
pub fn global_optimum(objs: &[LocalObjective], r: &WeightVector) -> Result<DVector<f64>> {
    let h = weighted_hessian(objs, r)?;
    let b = objs
        .iter()
        .zip(r.as_slice())
        .fold(DVector::zeros(h.nrows()), |acc, (o, w)| {
            acc + o.linear_term() * *w
        });
    let (lo, hi) = extreme_eigenvalues(&h);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(lo > hi * 1e-13) {
        return Err(Error::Singular { condition });
    }
    let chol = h.clone().cholesky().ok_or(Error::Singular { condition })?;
    let mut x = chol.solve(&b);
    // One round of refinement.
    let residual = &b - &h * &x;
    x += chol.solve(&residual);
    let rel = (&h * &x - &b).norm() / b.norm().max(f64::MIN_POSITIVE);
    if rel > 1e-10 && b.norm() > 0.0 {
        return Err(Error::Singular { condition });
    }
    Ok(x)
}

/// Strong-convexity and smoothness moduli.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothness {
    pub mu_f: f64,
    pub l_f: f64,
    /// `(μ_i, L_i)` per agent.
    pub per_agent: Vec<(f64, f64)>,
}

impl Smoothness {
    pub fn strongly_convex(&self) -> bool {
        self.mu_f > 0.0
    }

    pub fn max_local_smoothness(&self) -> f64 {
        self.per_agent.iter().map(|p| p.1).fold(0.0, f64::max)
    }
}

pub fn smoothness_constants(objs: &[LocalObjective], r: &WeightVector) -> Result<Smoothness> {
    let h = weighted_hessian(objs, r)?;
    let (lo, hi) = extreme_eigenvalues(&h);
    // Eigenvalues below the solver's resolution count as zero.
    let mu_f = if lo > hi * 1e-13 { lo } else { 0.0 };
    Ok(Smoothness {
        mu_f,
        l_f: hi,
        per_agent: objs.iter().map(|o| (o.mu(), o.smoothness())).collect(),
    })
}

/// Empirical `K`: the largest `‖∇f_i(x_i(t))‖²` seen along the trace.
pub fn gradient_bound_estimate(trace: &RunTrace) -> f64 {
    trace
        .records
        .iter()
        .map(|r| r.grad_sq_max)
        .fold(0.0, f64::max)
}
