//! Reconstruction algorithms: proximal gradient descent with the learned
//! proximal operator, the plain data-consistency iteration it reduces to at
//! lambda = 0, a FISTA l1-wavelet baseline, the zero-filled baseline, and
//! the lambda/iteration sweep.
//!
//! The proposed iteration is
//!
//! ```text
//! m = x + alpha * A^H (y - A x)          (data-consistency step)
//! x <- (1 - lambda) * m + lambda * r(m)  (learned-prox mixing)
//! ```
//!
//! so lambda = 0 is exactly gradient descent on the data term (the network
//! is never evaluated) and lambda = 1 applies the proximator fully.

use crate::denoiser::{proximator_forward, DenoiserWeights};
use crate::error::{Error, Result};
use crate::forward::{apply_a, apply_ah, ForwardModel, KSpaceData};
use crate::metrics::{psnr, ssim};
use crate::numerics::{haar2_forward, haar2_inverse, soft_threshold, ComplexImage};

/// Wavelet decomposition depth of the FISTA baseline (capped by the
/// image size).
pub const FISTA_WAVELET_LEVELS: usize = 4;

/// Settings of the proximal-gradient reconstruction.
#[derive(Clone, Debug)]
pub struct ReconConfig {
    /// Mixing weight of the learned proximal step, in [0, 1].
    pub lambda: f64,
    /// Data-consistency step size; safe at 1.0 because the operator norm
    /// of A is at most 1 (unit-SoS maps, unitary FFT, binary mask).
    pub step_size: f64,
    /// Fixed iteration count (the stopping rule).
    pub iterations: usize,
    /// Record per-iteration PSNR/SSIM against a reference image.
    pub trace: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig { lambda: 0.1, step_size: 1.0, iterations: 100, trace: false }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) || !self.lambda.is_finite() {
            return Err(Error::Parameter(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.step_size > 0.0 && self.step_size < 2.0) {
            return Err(Error::Parameter(format!(
                "step size must be in (0, 2), got {}",
                self.step_size
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Parameter("iteration count must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of a quality-over-iterations trace.
#[derive(Clone, Debug)]
pub struct TracePoint {
    pub iter: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Zero-filled baseline: `A^H y`.
pub fn recon_zero_filled(model: &ForwardModel, y: &KSpaceData) -> Result<ComplexImage> {
    apply_ah(model, y)
}

fn check_finite(x: &ComplexImage, iter: usize) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "reconstruction diverged (non-finite iterate) at iteration {iter}"
        )))
    }
}

/// Proximal gradient descent with the learned proximal operator.
///
/// Weights may be omitted only for `lambda = 0`, where the iteration is
/// network-free. With `cfg.trace` set, per-iteration PSNR/SSIM against
/// `reference` are returned alongside the image.
pub fn recon_pgd(
    model: &ForwardModel,
    y: &KSpaceData,
    weights: Option<&DenoiserWeights>,
    cfg: &ReconConfig,
    reference: Option<&ComplexImage>,
) -> Result<(ComplexImage, Vec<TracePoint>)> {
    cfg.validate()?;
    if cfg.lambda > 0.0 && weights.is_none() {
        return Err(Error::Parameter(
            "lambda > 0 requires denoiser weights".into(),
        ));
    }
    if cfg.trace && reference.is_none() {
        return Err(Error::Parameter("trace mode requires a reference image".into()));
    }

    let mut x = apply_ah(model, y)?;
    let mut trace = Vec::new();
    for iter in 1..=cfg.iterations {
        let residual = apply_ah(model, &apply_a(model, &x)?.sub(y))?;
        let m = x.add_scaled(&residual, -cfg.step_size);
        x = if cfg.lambda == 0.0 {
            m
        } else {
            let weights = weights.expect("checked above");
            let prox = proximator_forward(weights, &m)?;
            // (1 - lambda) * m + lambda * r(m)
            m.scale(1.0 - cfg.lambda).add_scaled(&prox, cfg.lambda)
        };
        check_finite(&x, iter)?;
        if cfg.trace {
            let reference = reference.expect("checked above");
            trace.push(TracePoint {
                iter,
                psnr_db: psnr(&x, reference)?,
                ssim: ssim(&x, reference)?,
            });
        }
    }
    Ok((x, trace))
}

/// Iterative parallel-imaging reconstruction: gradient descent on the data
/// term alone, i.e. [`recon_pgd`] with `lambda = 0`.
pub fn recon_sense(model: &ForwardModel, y: &KSpaceData, cfg: &ReconConfig) -> Result<ComplexImage> {
    let cfg = ReconConfig { lambda: 0.0, trace: false, ..cfg.clone() };
    let (x, _) = recon_pgd(model, y, None, &cfg, None)?;
    Ok(x)
}

/// FISTA with an orthonormal-Haar l1 prox: gradient step on
/// `0.5 ||A x - y||^2` with unit step, soft thresholding in the wavelet
/// domain, and the standard momentum sequence.
pub fn recon_fista_l1wavelet(
    model: &ForwardModel,
    y: &KSpaceData,
    l1_lambda: f64,
    iterations: usize,
) -> Result<ComplexImage> {
    if l1_lambda < 0.0 || !l1_lambda.is_finite() {
        return Err(Error::Parameter(format!(
            "l1 weight must be nonnegative, got {l1_lambda}"
        )));
    }
    if iterations == 0 {
        return Err(Error::Parameter("iteration count must be at least 1".into()));
    }
    let levels = FISTA_WAVELET_LEVELS
        .min(model.height().trailing_zeros() as usize)
        .min(model.width().trailing_zeros() as usize)
        .max(1);

    let step = 1.0;
    let x0 = apply_ah(model, y)?;
    let mut x_prev = x0.clone();
    let mut z = x0;
    let mut t = 1.0f64;
    for iter in 1..=iterations {
        let grad = apply_ah(model, &apply_a(model, &z)?.sub(y))?;
        let g = z.add_scaled(&grad, -step);
        let coeffs = haar2_forward(&g, levels)?;
        let x = haar2_inverse(&soft_threshold(&coeffs, l1_lambda * step)?);
        check_finite(&x, iter)?;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        z = x.add_scaled(&x.sub(&x_prev), momentum);
        t = t_next;
        x_prev = x;
    }
    Ok(x_prev)
}

/// Objective of the FISTA baseline, `0.5 ||A x - y||^2 + l1 * ||W x||_1`,
/// exposed for convergence checks.
pub fn fista_objective(
    model: &ForwardModel,
    y: &KSpaceData,
    x: &ComplexImage,
    l1_lambda: f64,
) -> Result<f64> {
    let levels = FISTA_WAVELET_LEVELS
        .min(model.height().trailing_zeros() as usize)
        .min(model.width().trailing_zeros() as usize)
        .max(1);
    let r = apply_a(model, x)?.sub(y);
    let coeffs = haar2_forward(x, levels)?;
    Ok(0.5 * r.norm().powi(2) + l1_lambda * coeffs.l1_norm())
}

/// FISTA variant that records the objective after every iterate, for the
/// monotonicity checks.
pub fn recon_fista_with_objective(
    model: &ForwardModel,
    y: &KSpaceData,
    l1_lambda: f64,
    iterations: usize,
) -> Result<(ComplexImage, Vec<f64>)> {
    if l1_lambda < 0.0 || !l1_lambda.is_finite() {
        return Err(Error::Parameter(format!(
            "l1 weight must be nonnegative, got {l1_lambda}"
        )));
    }
    if iterations == 0 {
        return Err(Error::Parameter("iteration count must be at least 1".into()));
    }
    let levels = FISTA_WAVELET_LEVELS
        .min(model.height().trailing_zeros() as usize)
        .min(model.width().trailing_zeros() as usize)
        .max(1);

    let step = 1.0;
    let x0 = apply_ah(model, y)?;
    let mut x_prev = x0.clone();
    let mut z = x0;
    let mut t = 1.0f64;
    let mut objectives = Vec::with_capacity(iterations);
    for iter in 1..=iterations {
        let grad = apply_ah(model, &apply_a(model, &z)?.sub(y))?;
        let g = z.add_scaled(&grad, -step);
        let coeffs = haar2_forward(&g, levels)?;
        let x = haar2_inverse(&soft_threshold(&coeffs, l1_lambda * step)?);
        check_finite(&x, iter)?;
        objectives.push(fista_objective(model, y, &x, l1_lambda)?);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        z = x.add_scaled(&x.sub(&x_prev), momentum);
        t = t_next;
        x_prev = x;
    }
    Ok((x_prev, objectives))
}

/// One row of the lambda sweep table.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub lambda: f64,
    pub iter: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Runs [`recon_pgd`] with tracing for every lambda and flattens the traces
/// into `(lambda, iter, psnr, ssim)` rows.
pub fn lambda_sweep(
    model: &ForwardModel,
    y: &KSpaceData,
    weights: &DenoiserWeights,
    lambdas: &[f64],
    iterations: usize,
    reference: &ComplexImage,
) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() {
        return Err(Error::Parameter("lambda list is empty".into()));
    }
    let mut rows = Vec::with_capacity(lambdas.len() * iterations);
    for &lambda in lambdas {
        let cfg = ReconConfig { lambda, iterations, trace: true, ..ReconConfig::default() };
        let (_, trace) = recon_pgd(model, y, Some(weights), &cfg, Some(reference))?;
        for point in trace {
            rows.push(SweepRow {
                lambda,
                iter: point.iter,
                psnr_db: point.psnr_db,
                ssim: point.ssim,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{DenoiserWeights, NetConfig};
    use crate::forward::simulate_acquisition;
    use crate::phantom::{generate_coil_maps, generate_phantom, CoilMaps};
    use crate::sampling::{radial_mask, SamplingMask};
    use num_complex::Complex64;

    fn single_coil(h: usize, w: usize) -> CoilMaps {
        CoilMaps::new(1, h, w, vec![Complex64::new(1.0, 0.0); h * w]).unwrap()
    }

    fn radial_problem(size: usize, spokes: usize) -> (ForwardModel, KSpaceData, ComplexImage) {
        let truth = generate_phantom(11, size).unwrap();
        let maps = generate_coil_maps(5, 4, size).unwrap();
        let mask = radial_mask(size, size, spokes).unwrap();
        let y = simulate_acquisition(&truth, &maps, &mask, 0.0, 0).unwrap();
        let model = ForwardModel::new(mask, maps).unwrap();
        (model, y, truth)
    }

    #[test]
    fn zero_filled_full_mask_single_coil_is_exact() {
        let truth = generate_phantom(3, 32).unwrap();
        let maps = single_coil(32, 32);
        let mask = SamplingMask::full(32, 32);
        let y = simulate_acquisition(&truth, &maps, &mask, 0.0, 0).unwrap();
        let model = ForwardModel::new(mask, maps).unwrap();
        let x = recon_zero_filled(&model, &y).unwrap();
        assert!(x.sub(&truth).norm() / truth.norm() < 1e-12);
    }

    #[test]
    fn zero_filled_zero_data_is_zero() {
        let model = ForwardModel::new(SamplingMask::full(16, 16), single_coil(16, 16)).unwrap();
        let y = KSpaceData::zeros(1, 16, 16).unwrap();
        let x = recon_zero_filled(&model, &y).unwrap();
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn undersampling_lowers_zero_filled_psnr() {
        let truth = generate_phantom(7, 64).unwrap();
        let maps = generate_coil_maps(2, 4, 64).unwrap();
        let full_y =
            simulate_acquisition(&truth, &maps, &SamplingMask::full(64, 64), 0.0, 0).unwrap();
        let full_model = ForwardModel::new(SamplingMask::full(64, 64), maps.clone()).unwrap();
        let part_mask = crate::sampling::cartesian1d_mask(64, 64, 0.3, 12, 3).unwrap();
        let part_y = simulate_acquisition(&truth, &maps, &part_mask, 0.0, 0).unwrap();
        let part_model = ForwardModel::new(part_mask, maps).unwrap();

        let full = psnr(&recon_zero_filled(&full_model, &full_y).unwrap(), &truth).unwrap();
        let part = psnr(&recon_zero_filled(&part_model, &part_y).unwrap(), &truth).unwrap();
        assert!(part < full, "partial {part} dB >= full {full} dB");
    }

    #[test]
    fn lambda_zero_matches_plain_gradient_iteration() {
        let (model, y, _) = radial_problem(32, 12);
        let cfg = ReconConfig { lambda: 0.0, iterations: 25, ..ReconConfig::default() };
        let (x, _) = recon_pgd(&model, &y, None, &cfg, None).unwrap();

        // Scripted network-free iteration.
        let mut z = apply_ah(&model, &y).unwrap();
        for _ in 0..25 {
            let residual = apply_ah(&model, &apply_a(&model, &z).unwrap().sub(&y)).unwrap();
            z = z.add_scaled(&residual, -1.0);
        }
        assert_eq!(x, z);

        // And the named SENSE entry point is the same bitwise.
        let s = recon_sense(&model, &y, &cfg).unwrap();
        assert_eq!(x, s);
    }

    #[test]
    fn full_mask_single_coil_converges_in_one_step() {
        let truth = generate_phantom(9, 32).unwrap();
        let maps = single_coil(32, 32);
        let mask = SamplingMask::full(32, 32);
        let y = simulate_acquisition(&truth, &maps, &mask, 0.0, 0).unwrap();
        let model = ForwardModel::new(mask, maps).unwrap();
        let cfg = ReconConfig { lambda: 0.0, iterations: 1, ..ReconConfig::default() };
        let (x, _) = recon_pgd(&model, &y, None, &cfg, None).unwrap();
        assert!(x.sub(&truth).norm() / truth.norm() < 1e-10);
    }

    #[test]
    fn sense_residual_is_nonincreasing() {
        let (model, y, _) = radial_problem(32, 10);
        let mut x = apply_ah(&model, &y).unwrap();
        let mut last = f64::INFINITY;
        for iter in 0..30 {
            let residual = apply_a(&model, &x).unwrap().sub(&y).norm();
            if iter >= 3 {
                assert!(
                    residual <= last + 1e-12,
                    "residual rose at iteration {iter}: {residual} > {last}"
                );
            }
            last = residual;
            let g = apply_ah(&model, &apply_a(&model, &x).unwrap().sub(&y)).unwrap();
            x = x.add_scaled(&g, -1.0);
        }
    }

    #[test]
    fn pgd_with_prox_stays_finite_and_traces() {
        let (model, y, truth) = radial_problem(32, 12);
        let weights = DenoiserWeights::init(
            NetConfig { filters: 4, depth: 2, unroll_steps: 2, inner_alpha: 0.5 },
            3,
        )
        .unwrap();
        let cfg = ReconConfig { lambda: 0.1, iterations: 10, trace: true, ..ReconConfig::default() };
        let (x, trace) = recon_pgd(&model, &y, Some(&weights), &cfg, Some(&truth)).unwrap();
        assert!(x.is_finite());
        assert_eq!(trace.len(), 10);
        assert!(trace.iter().all(|p| p.psnr_db.is_finite() && p.ssim <= 1.0));
    }

    #[test]
    fn pgd_rejects_missing_weights_for_positive_lambda() {
        let (model, y, _) = radial_problem(32, 12);
        let cfg = ReconConfig { lambda: 0.2, iterations: 3, ..ReconConfig::default() };
        assert!(matches!(
            recon_pgd(&model, &y, None, &cfg, None),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn fista_exact_recovery_with_zero_weight_full_mask() {
        let truth = generate_phantom(13, 32).unwrap();
        let maps = single_coil(32, 32);
        let mask = SamplingMask::full(32, 32);
        let y = simulate_acquisition(&truth, &maps, &mask, 0.0, 0).unwrap();
        let model = ForwardModel::new(mask, maps).unwrap();
        let x = recon_fista_l1wavelet(&model, &y, 0.0, 30).unwrap();
        assert!(x.sub(&truth).norm() / truth.norm() < 1e-8);
    }

    #[test]
    fn fista_objective_nonincreasing_after_burn_in() {
        let (model, y, _) = radial_problem(32, 10);
        let (_, objectives) = recon_fista_with_objective(&model, &y, 0.005, 60).unwrap();
        for i in 5..objectives.len() {
            assert!(
                objectives[i] <= objectives[i - 1] + 1e-9,
                "objective rose at iteration {}: {} > {}",
                i + 1,
                objectives[i],
                objectives[i - 1]
            );
        }
    }

    #[test]
    fn fista_huge_threshold_returns_zero_image() {
        let (model, y, _) = radial_problem(32, 10);
        let x = recon_fista_l1wavelet(&model, &y, 1e3, 20).unwrap();
        assert!(x.norm() < 1e-6, "norm {}", x.norm());
    }

    #[test]
    fn sweep_row_counts_and_lambda_zero_column() {
        let (model, y, truth) = radial_problem(32, 12);
        let weights = DenoiserWeights::init(
            NetConfig { filters: 4, depth: 2, unroll_steps: 1, inner_alpha: 0.5 },
            3,
        )
        .unwrap();
        let lambdas = [0.0, 0.1];
        let rows = lambda_sweep(&model, &y, &weights, &lambdas, 8, &truth).unwrap();
        assert_eq!(rows.len(), 2 * 8);

        // The lambda = 0 block equals the SENSE trace.
        let cfg = ReconConfig { lambda: 0.0, iterations: 8, trace: true, ..ReconConfig::default() };
        let (_, sense_trace) = recon_pgd(&model, &y, None, &cfg, Some(&truth)).unwrap();
        for (row, point) in rows[..8].iter().zip(sense_trace.iter()) {
            assert_eq!(row.iter, point.iter);
            assert_eq!(row.psnr_db, point.psnr_db);
            assert_eq!(row.ssim, point.ssim);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ReconConfig { lambda: 1.5, ..ReconConfig::default() }.validate().is_err());
        assert!(ReconConfig { step_size: 2.0, ..ReconConfig::default() }.validate().is_err());
        assert!(ReconConfig { iterations: 0, ..ReconConfig::default() }.validate().is_err());
    }
}
