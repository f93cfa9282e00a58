//! Central finite-difference gradients and the analytic-vs-numeric check.

use crate::embedding::EmbeddingMatrix;
use crate::error::Result;
use crate::loss::gs_info_nce;
use crate::noise::{sample_noise, NoiseConfig};
use crate::rng::{split_seed, PortableRng};
use crate::scalar::Scalar;

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Floor for the denominator of the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-8;

const GRADCHECK_STREAM: u64 = 0x4752_4144;

/// Central differences `(f(x+h) − f(x−h)) / 2h` for every entry of both
/// views, holding `noise` fixed. `loss_fn` returns the mean loss.
pub fn finite_difference_grad<T, F>(
    loss_fn: F,
    view1: &EmbeddingMatrix<T>,
    view2: &EmbeddingMatrix<T>,
    noise: &EmbeddingMatrix<T>,
    step: T,
) -> Result<(EmbeddingMatrix<T>, EmbeddingMatrix<T>)>
where
    T: Scalar,
    F: Fn(&EmbeddingMatrix<T>, &EmbeddingMatrix<T>, &EmbeddingMatrix<T>) -> Result<T>,
{
    let two_h = step + step;
    let mut g1 = Vec::with_capacity(view1.as_slice().len());
    for i in 0..view1.rows() {
        for j in 0..view1.dim() {
            let x = view1.get(i, j);
            let plus = loss_fn(&view1.with_entry(i, j, x + step)?, view2, noise)?;
            let minus = loss_fn(&view1.with_entry(i, j, x - step)?, view2, noise)?;
            g1.push((plus - minus) / two_h);
        }
    }
    let mut g2 = Vec::with_capacity(view2.as_slice().len());
    for i in 0..view2.rows() {
        for j in 0..view2.dim() {
            let x = view2.get(i, j);
            let plus = loss_fn(view1, &view2.with_entry(i, j, x + step)?, noise)?;
            let minus = loss_fn(view1, &view2.with_entry(i, j, x - step)?, noise)?;
            g2.push((plus - minus) / two_h);
        }
    }
    Ok((
        EmbeddingMatrix::new(view1.rows(), view1.dim(), g1)?,
        EmbeddingMatrix::new(view2.rows(), view2.dim(), g2)?,
    ))
}

/// `max_e |a_e − n_e| / max(‖a‖∞, 1e-8)`: the worst entry error relative to
/// the gradient's scale.
pub fn max_relative_error<T: Scalar>(analytic: &[T], numeric: &[T]) -> f64 {
    let scale = analytic
        .iter()
        .map(|a| a.as_f64().abs())
        .fold(0.0, f64::max)
        .max(RELATIVE_FLOOR);
    max_abs_error(analytic, numeric) / scale
}

/// `max_e |a_e − n_e| / max(|a_e|, 1e-8)`. Dominated by near-zero entries,
/// where the `O(h²)` truncation error does not shrink with the entry.
pub fn max_entrywise_relative_error<T: Scalar>(analytic: &[T], numeric: &[T]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let (a, n) = (a.as_f64(), n.as_f64());
            (a - n).abs() / a.abs().max(RELATIVE_FLOOR)
        })
        .fold(0.0, f64::max)
}

pub fn max_abs_error<T: Scalar>(analytic: &[T], numeric: &[T]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a.as_f64() - n.as_f64()).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub batch: usize,
    pub dim: usize,
    pub noise_count: usize,
    pub temperature: f64,
    pub lambda: f64,
    pub seed: u64,
    pub trials: usize,
    pub step: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            batch: 8,
            dim: 16,
            noise_count: 24,
            temperature: 0.05,
            lambda: 1.0,
            seed: 7,
            trials: 100,
            step: DEFAULT_STEP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub trials: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    pub max_entrywise_relative_error: f64,
    /// Seed of the instance with the largest relative error.
    pub worst_seed: u64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

/// Random instance for one trial: view 2 is a perturbed copy of view 1 so the
/// positives are realistically close.
pub fn gradcheck_instance(
    cfg: &GradCheckConfig,
    trial_seed: u64,
) -> Result<(EmbeddingMatrix<f64>, EmbeddingMatrix<f64>, EmbeddingMatrix<f64>)> {
    let mut rng = PortableRng::new(trial_seed);
    let len = cfg.batch * cfg.dim;
    let v1: Vec<f64> = (0..len).map(|_| rng.standard_normal()).collect();
    let v2: Vec<f64> = v1.iter().map(|&x| x + 0.5 * rng.standard_normal()).collect();
    let noise = sample_noise(&NoiseConfig::standard(
        cfg.noise_count,
        cfg.dim,
        split_seed(trial_seed, GRADCHECK_STREAM, 1),
    ))?;
    Ok((
        EmbeddingMatrix::new(cfg.batch, cfg.dim, v1)?,
        EmbeddingMatrix::new(cfg.batch, cfg.dim, v2)?,
        noise,
    ))
}

/// Compares analytic GS-InfoNCE gradients with central differences on
/// `cfg.trials` random instances.
pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        trials: cfg.trials,
        max_relative_error: 0.0,
        max_abs_error: 0.0,
        max_entrywise_relative_error: 0.0,
        worst_seed: cfg.seed,
    };
    let (tau, lambda) = (cfg.temperature, cfg.lambda);
    for t in 0..cfg.trials {
        let trial_seed = split_seed(cfg.seed, GRADCHECK_STREAM, t as u64);
        let (v1, v2, noise) = gradcheck_instance(cfg, trial_seed)?;
        let analytic = gs_info_nce(&v1, &v2, &noise, tau, lambda)?;
        let (n1, n2) = finite_difference_grad(
            |a, b, g| gs_info_nce(a, b, g, tau, lambda).map(|r| r.mean_loss),
            &v1,
            &v2,
            &noise,
            cfg.step,
        )?;
        let rel = max_relative_error(analytic.grad_view1.as_slice(), n1.as_slice())
            .max(max_relative_error(analytic.grad_view2.as_slice(), n2.as_slice()));
        let abs = max_abs_error(analytic.grad_view1.as_slice(), n1.as_slice())
            .max(max_abs_error(analytic.grad_view2.as_slice(), n2.as_slice()));
        if rel > report.max_relative_error || t == 0 {
            report.max_relative_error = rel;
            report.worst_seed = trial_seed;
        }
        report.max_abs_error = report.max_abs_error.max(abs);
        let entrywise = max_entrywise_relative_error(analytic.grad_view1.as_slice(), n1.as_slice())
            .max(max_entrywise_relative_error(analytic.grad_view2.as_slice(), n2.as_slice()));
        report.max_entrywise_relative_error = report.max_entrywise_relative_error.max(entrywise);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::info_nce;

    #[test]
    fn constant_loss_has_zero_gradient() {
        let cfg = GradCheckConfig {
            batch: 1,
            noise_count: 0,
            trials: 5,
            ..Default::default()
        };
        let report = run_gradcheck(&cfg).unwrap();
        assert!(report.max_abs_error <= 1e-8, "{report:?}");
        assert!(report.passes(DEFAULT_TOLERANCE));
    }

    #[test]
    fn quadratic_oracle_sanity() {
        // f = Σ x² over view1 only; derivative 2x.
        let v1 = EmbeddingMatrix::<f64>::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let v2 = v1.clone();
        let noise = EmbeddingMatrix::zeros(0, 2).unwrap();
        let (g1, g2) = finite_difference_grad(
            |a, _, _| Ok(a.as_slice().iter().map(|x| x * x).sum()),
            &v1,
            &v2,
            &noise,
            1e-4,
        )
        .unwrap();
        for (g, x) in g1.as_slice().iter().zip(v1.as_slice()) {
            assert!((g - 2.0 * x).abs() < 1e-8);
        }
        assert!(g2.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn info_nce_gradients_small_instance() {
        let cfg = GradCheckConfig {
            batch: 4,
            dim: 5,
            noise_count: 0,
            temperature: 1.0,
            trials: 1,
            ..Default::default()
        };
        let (v1, v2, _) = gradcheck_instance(&cfg, 3).unwrap();
        let empty = EmbeddingMatrix::zeros(0, 5).unwrap();
        let analytic = info_nce(&v1, &v2, 1.0).unwrap();
        let (n1, n2) = finite_difference_grad(
            |a, b, _| info_nce(a, b, 1.0).map(|r| r.mean_loss),
            &v1,
            &v2,
            &empty,
            1e-5,
        )
        .unwrap();
        assert!(max_abs_error(analytic.grad_view1.as_slice(), n1.as_slice()) < 1e-8);
        assert!(max_abs_error(analytic.grad_view2.as_slice(), n2.as_slice()) < 1e-8);
    }

    #[test]
    fn default_configuration_passes() {
        let report = run_gradcheck(&GradCheckConfig {
            trials: 10,
            ..Default::default()
        })
        .unwrap();
        assert!(report.passes(DEFAULT_TOLERANCE), "{report:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(max_relative_error(&[0.0], &[1e-10]), 1e-2);
        assert_eq!(max_relative_error(&[2.0, 0.0], &[2.0, 1e-6]), 5e-7);
        assert_eq!(max_entrywise_relative_error(&[2.0, 1e-6], &[2.0, 2e-6]), 1.0);
    }
}
