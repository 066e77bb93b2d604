//! Lossy neighbor estimates.
//!
//! Agent `i` never sees `Σ_j W_ij x_j` exactly; it receives
//! `x̂_i = Σ_j W_ij x_j + e_i` where the noise is conditionally zero-mean
//! with bounded second moment. Two channels are provided besides the
//! noiseless one: additive Gaussian noise on every link and the unbiased
//! stochastic quantizer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::topology::STOCHASTIC_TOL;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Noiseless,
    /// Each link adds `z_ij` with `E‖z_ij‖² = σ²`, i.e. per-coordinate
    /// variance `σ²/d`.
    GaussianChannel {
        sigma: f64,
    },
    /// Every sender's state is quantized to `s` levels independently for
    /// every receiver.
    StochasticQuantizer {
        levels: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            kind: NoiseKind::Noiseless,
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid(format!(
                "gaussian sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self {
            kind: NoiseKind::GaussianChannel { sigma },
        })
    }

    pub fn quantizer(levels: u32) -> Result<Self> {
        if levels == 0 {
            return Err(invalid("quantizer needs at least one level"));
        }
        Ok(Self {
            kind: NoiseKind::StochasticQuantizer { levels },
        })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn is_noiseless(&self) -> bool {
        match self.kind {
            NoiseKind::Noiseless => true,
            NoiseKind::GaussianChannel { sigma } => sigma == 0.0,
            NoiseKind::StochasticQuantizer { .. } => false,
        }
    }
}

/// `ζ(t, s) = ⌊st⌋ + 1[u < st − ⌊st⌋]` for a uniform draw `u`.
pub fn zeta(t: f64, s: u32, u: f64) -> Result<u32> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!(
            "zeta argument must lie in [0, 1], got {t}"
        )));
    }
    Ok(zeta_unchecked(t, s, u))
}

#[inline]
fn zeta_unchecked(t: f64, s: u32, u: f64) -> u32 {
    let scaled = s as f64 * t;
    let floor = scaled.floor();
    floor as u32 + (u < scaled - floor) as u32
}

/// Unbiased stochastic quantization of `x` onto the grid
/// `{k‖x‖/s : k = −s..s}`, one fresh uniform per coordinate.
pub fn stochastic_quantize<R: Rng + ?Sized>(x: &[f64], s: u32, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    quantize_into(x, s, rng, &mut out);
    out
}

fn quantize_into<R: Rng + ?Sized>(x: &[f64], s: u32, rng: &mut R, out: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        out.fill(0.0);
        return;
    }
    let step = norm / s as f64;
    for (o, &xj) in out.iter_mut().zip(x) {
        let u: f64 = rng.random();
        // |x_j| / ‖x‖ can exceed 1 by an ulp.
        let ratio = (xj.abs() / norm).min(1.0);
        let level = zeta_unchecked(ratio, s, u) as f64;
        *o = if xj == 0.0 {
            0.0
        } else {
            xj.signum() * step * level
        };
    }
}

/// `x̂_i` for a receiver whose mixing row is `w_row`, given the stacked
/// states `x` (agents × dimension).
pub fn neighbor_estimate<R: Rng + ?Sized>(
    model: &NoiseModel,
    w_row: &[f64],
    x: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = x.nrows();
    let d = x.ncols();
    if w_row.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "mixing row has {} entries but there are {n} agents",
            w_row.len()
        )));
    }
    let sum: f64 = w_row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL || w_row.iter().any(|w| *w < 0.0) {
        return Err(Error::NotStochastic { sum });
    }

    let mut est = DVector::zeros(d);
    let mut buf = vec![0.0; d];
    match model.kind {
        NoiseKind::Noiseless => {
            for (j, &w) in w_row.iter().enumerate() {
                if w > 0.0 {
                    est.axpy(w, &x.row(j).transpose(), 1.0);
                }
            }
        }
        NoiseKind::GaussianChannel { sigma } => {
            let normal = Normal::new(0.0, sigma / (d as f64).sqrt())
                .map_err(|e| invalid(format!("gaussian channel: {e}")))?;
            for (j, &w) in w_row.iter().enumerate() {
                if w > 0.0 {
                    for (k, e) in est.iter_mut().enumerate() {
                        let z = if sigma > 0.0 { normal.sample(rng) } else { 0.0 };
                        *e += w * (x[(j, k)] + z);
                    }
                }
            }
        }
        NoiseKind::StochasticQuantizer { levels } => {
            let mut row = vec![0.0; d];
            for (j, &w) in w_row.iter().enumerate() {
                if w > 0.0 {
                    for (k, v) in row.iter_mut().enumerate() {
                        *v = x[(j, k)];
                    }
                    quantize_into(&row, levels, rng, &mut buf);
                    for (e, q) in est.iter_mut().zip(&buf) {
                        *e += w * q;
                    }
                }
            }
        }
    }
    Ok(est)
}

/// Bound `γ` on `E[‖e_i‖² | F_t]`.
///
/// For the quantizer the bound is `min(√d/s, d/s²)·D²` where `D` bounds
/// every transmitted state norm.
pub fn noise_variance_bound(model: &NoiseModel, d: usize, state_norm_bound: f64) -> f64 {
    match model.kind {
        NoiseKind::Noiseless => 0.0,
        NoiseKind::GaussianChannel { sigma } => sigma * sigma,
        NoiseKind::StochasticQuantizer { levels } => {
            quantizer_variance_factor(d, levels) * state_norm_bound * state_norm_bound
        }
    }
}

/// `min(√d/s, d/s²)`.
pub fn quantizer_variance_factor(d: usize, levels: u32) -> f64 {
    let d = d as f64;
    let s = levels as f64;
    (d.sqrt() / s).min(d / (s * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zeta_values() {
        for u in [0.0, 0.3, 0.99] {
            assert_eq!(zeta(0.0, 7, u).unwrap(), 0);
            assert_eq!(zeta(0.5, 4, u).unwrap(), 2);
            assert_eq!(zeta(1.0, 5, u).unwrap(), 5);
        }
        assert_eq!(zeta(0.6, 4, 0.3).unwrap(), 3);
        assert_eq!(zeta(0.6, 4, 0.5).unwrap(), 2);
        // Strict inequality at the tie.
        assert_eq!(zeta(0.625, 4, 0.5).unwrap(), 2);
        assert!(zeta(1.2, 4, 0.1).is_err());
        assert!(zeta(-0.1, 4, 0.1).is_err());
    }

    #[test]
    fn quantize_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(stochastic_quantize(&[0.0; 5], 4, &mut rng), vec![0.0; 5]);
        for s in [1, 3, 16] {
            let mut x = vec![0.0; 6];
            x[0] = 1.0;
            assert_eq!(stochastic_quantize(&x, s, &mut rng), x);
            x[0] = -2.5;
            assert_eq!(stochastic_quantize(&x, s, &mut rng), x);
        }
    }

    #[test]
    fn noiseless_selects_row() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est =
            neighbor_estimate(&NoiseModel::noiseless(), &[1.0, 0.0, 0.0], &x, &mut rng).unwrap();
        assert_eq!(est.as_slice(), &[1.0, 2.0]);
        let zero = NoiseModel::gaussian(0.0).unwrap();
        let w = [0.2, 0.3, 0.5];
        let a = neighbor_estimate(&zero, &w, &x, &mut rng).unwrap();
        let b = neighbor_estimate(&NoiseModel::noiseless(), &w, &x, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantizer_exact_on_grid() {
        // All senders equal with every |x_j|/‖x‖ on the s-grid: ζ is deterministic.
        let row = [0.6, 0.8, 0.0];
        let x = DMatrix::from_fn(4, 3, |_, k| row[k]);
        let w = [0.1, 0.2, 0.3, 0.4];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let est = neighbor_estimate(&NoiseModel::quantizer(5).unwrap(), &w, &x, &mut rng).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(est[k], row[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_non_stochastic_row() {
        let x = DMatrix::zeros(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err =
            neighbor_estimate(&NoiseModel::noiseless(), &[0.7, 0.7], &x, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NotStochastic { .. }));
        assert!(neighbor_estimate(&NoiseModel::noiseless(), &[1.0], &x, &mut rng).is_err());
    }

    #[test]
    fn variance_bounds() {
        assert_eq!(noise_variance_bound(&NoiseModel::noiseless(), 25, 3.0), 0.0);
        assert_abs_diff_eq!(
            noise_variance_bound(&NoiseModel::quantizer(4).unwrap(), 25, 1.0),
            1.25,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            noise_variance_bound(&NoiseModel::gaussian(0.1).unwrap(), 25, 9.0),
            0.01,
            epsilon = 1e-15
        );
    }

    /// Monte Carlo mean and standard error of each coordinate of `sample()`.
    fn moments(
        draws: usize,
        d: usize,
        mut sample: impl FnMut() -> Vec<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for _ in 0..draws {
            for (k, v) in sample().into_iter().enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
        }
        let m = draws as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
        let se = sq
            .iter()
            .zip(&mean)
            .map(|(q, mu)| ((q / m - mu * mu).max(0.0) * m / (m - 1.0) / m).sqrt())
            .collect();
        (mean, se)
    }

    #[test]
    fn estimates_are_conditionally_unbiased() {
        let n = 4;
        let d = 3;
        let mut rng = stream(17, Purpose::Oracle);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let w = [0.1, 0.4, 0.0, 0.5];
        let exact = neighbor_estimate(&NoiseModel::noiseless(), &w, &x, &mut rng).unwrap();
        for model in [
            NoiseModel::gaussian(0.7).unwrap(),
            NoiseModel::quantizer(2).unwrap(),
        ] {
            let mut draw_rng = stream(18, Purpose::Oracle);
            let (mean, se) = moments(100_000, d, || {
                let e = neighbor_estimate(&model, &w, &x, &mut draw_rng).unwrap() - &exact;
                e.as_slice().to_vec()
            });
            for k in 0..d {
                assert!(
                    mean[k].abs() <= 4.0 * se[k],
                    "{model:?} coord {k}: {} vs {}",
                    mean[k],
                    se[k]
                );
            }
        }
    }

    #[test]
    fn gaussian_link_variance() {
        // E‖e_i‖² = σ² Σ_j W_ij².
        let x = DMatrix::zeros(3, 5);
        let w = [0.5, 0.5, 0.0];
        let model = NoiseModel::gaussian(0.3).unwrap();
        let mut rng = stream(2, Purpose::Oracle);
        let draws = 50_000;
        let total: f64 = (0..draws)
            .map(|_| {
                neighbor_estimate(&model, &w, &x, &mut rng)
                    .unwrap()
                    .norm_squared()
            })
            .sum();
        let expect = 0.09 * 0.5;
        assert!((total / draws as f64 - expect).abs() < 0.02 * expect);
    }

    #[test]
    fn quantizer_second_moment_within_bound() {
        let mut xr = stream(23, Purpose::Oracle);
        for d in [2usize, 25] {
            for s in [1u32, 4, 16] {
                let x: Vec<f64> = (0..d).map(|_| xr.random_range(-1.0..1.0)).collect();
                let norm_sq: f64 = x.iter().map(|v| v * v).sum();
                let bound = quantizer_variance_factor(d, s) * norm_sq;
                let mut rng = stream(24 + d as u64 * 100 + s as u64, Purpose::Oracle);
                let draws = 100_000;
                let errs: Vec<f64> = (0..draws)
                    .map(|_| {
                        let q = stochastic_quantize(&x, s, &mut rng);
                        q.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum()
                    })
                    .collect();
                let mean = errs.iter().sum::<f64>() / draws as f64;
                let var =
                    errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
                let se = (var / draws as f64).sqrt();
                assert!(mean <= bound + 3.0 * se, "d={d} s={s}: {mean} > {bound}");
            }
        }
    }

    proptest! {
        #[test]
        fn quantizer_output_on_grid(
            x in proptest::collection::vec(-10.0f64..10.0, 1..30),
            s in 1u32..20,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = stochastic_quantize(&x, s, &mut rng);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in q {
                if norm == 0.0 {
                    prop_assert_eq!(v, 0.0);
                    continue;
                }
                let k = v * s as f64 / norm;
                prop_assert!((k - k.round()).abs() < 1e-9);
                prop_assert!(k.round().abs() <= s as f64);
            }
        }

        #[test]
        fn seeded_quantization_is_deterministic(
            x in proptest::collection::vec(-5.0f64..5.0, 1..10),
            seed in any::<u64>(),
        ) {
            let a = stochastic_quantize(&x, 4, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = stochastic_quantize(&x, 4, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, b);
        }
    }
}
