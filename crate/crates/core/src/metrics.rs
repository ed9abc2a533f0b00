//! PSNR and SSIM on magnitude images, and the batch evaluation table.
//!
//! Conventions: the peak (PSNR) and dynamic range (SSIM) come from the
//! reference image, so values are comparable across runs; both metrics see
//! magnitudes only.

use rayon::prelude::*;

use crate::denoiser::DenoiserWeights;
use crate::error::{Error, Result};
use crate::forward::{ForwardModel, KSpaceData};
use crate::numerics::ComplexImage;
use crate::recon::{recon_fista_l1wavelet, recon_pgd, recon_zero_filled, ReconConfig};
use crate::sampling::mask_fraction;

/// Peak signal-to-noise ratio in dB between magnitude images; the peak is
/// the maximum magnitude of `reference`. Identical images yield the
/// infinity sentinel.
pub fn psnr(x: &ComplexImage, reference: &ComplexImage) -> Result<f64> {
    x.check_same_shape(reference, "psnr")?;
    let peak = reference.max_abs();
    if peak == 0.0 {
        return Err(Error::Parameter("psnr reference is all zero".into()));
    }
    let n = x.len() as f64;
    let mse = x
        .data()
        .iter()
        .zip(reference.data().iter())
        .map(|(a, b)| {
            let d = a.norm() - b.norm();
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut total = 0.0;
    for r in 0..SSIM_WINDOW {
        for col in 0..SSIM_WINDOW {
            let dr = r as f64 - c;
            let dc = col as f64 - c;
            let v = (-(dr * dr + dc * dc) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[r * SSIM_WINDOW + col] = v;
            total += v;
        }
    }
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

/// Single-scale SSIM on magnitudes: 11x11 Gaussian window (sigma 1.5),
/// standard constants, dynamic range from the reference peak, averaged
/// over window positions fully inside the image (no padding).
pub fn ssim(x: &ComplexImage, reference: &ComplexImage) -> Result<f64> {
    x.check_same_shape(reference, "ssim")?;
    let (h, w) = (x.height(), x.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let peak = reference.max_abs();
    if peak == 0.0 {
        return Err(Error::Parameter("ssim reference is all zero".into()));
    }
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);
    let window = gaussian_window();

    let mag_x: Vec<f64> = x.data().iter().map(|z| z.norm()).collect();
    let mag_y: Vec<f64> = reference.data().iter().map(|z| z.norm()).collect();

    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(h - SSIM_WINDOW) {
        for c0 in 0..=(w - SSIM_WINDOW) {
            let mut mu_x = 0.0;
            let mut mu_y = 0.0;
            let mut xx = 0.0;
            let mut yy = 0.0;
            let mut xy = 0.0;
            for r in 0..SSIM_WINDOW {
                let row = (r0 + r) * w + c0;
                for col in 0..SSIM_WINDOW {
                    let wt = window[r * SSIM_WINDOW + col];
                    let a = mag_x[row + col];
                    let b = mag_y[row + col];
                    mu_x += wt * a;
                    mu_y += wt * b;
                    xx += wt * a * a;
                    yy += wt * b * b;
                    xy += wt * a * b;
                }
            }
            let var_x = xx - mu_x * mu_x;
            let var_y = yy - mu_y * mu_y;
            let cov = xy - mu_x * mu_y;
            let num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
            let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// One reconstruction problem for the evaluation table.
pub struct EvalCase {
    pub id: String,
    pub model: ForwardModel,
    pub y: KSpaceData,
    pub reference: ComplexImage,
}

/// A reconstruction method under evaluation.
#[derive(Clone)]
pub enum Method<'a> {
    ZeroFilled,
    Sense { cfg: ReconConfig },
    Pgd { weights: &'a DenoiserWeights, cfg: ReconConfig },
    Fista { l1_lambda: f64, iterations: usize },
}

impl Method<'_> {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::ZeroFilled => "zerofill",
            Method::Sense { .. } => "sense",
            Method::Pgd { .. } => "pgd",
            Method::Fista { .. } => "fista",
        }
    }

    pub fn reconstruct(&self, model: &ForwardModel, y: &KSpaceData) -> Result<ComplexImage> {
        match self {
            Method::ZeroFilled => recon_zero_filled(model, y),
            Method::Sense { cfg } => {
                let cfg = ReconConfig { lambda: 0.0, trace: false, ..cfg.clone() };
                Ok(recon_pgd(model, y, None, &cfg, None)?.0)
            }
            Method::Pgd { weights, cfg } => {
                let cfg = ReconConfig { trace: false, ..cfg.clone() };
                Ok(recon_pgd(model, y, Some(weights), &cfg, None)?.0)
            }
            Method::Fista { l1_lambda, iterations } => {
                recon_fista_l1wavelet(model, y, *l1_lambda, *iterations)
            }
        }
    }
}

/// One metrics row; aggregate rows use the sentinel case ids
/// `AGGREGATE_MEAN` / `AGGREGATE_STD`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub case_id: String,
    pub method: String,
    pub mask_type: String,
    pub fraction: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

pub const AGGREGATE_MEAN: &str = "AGGREGATE_MEAN";
pub const AGGREGATE_STD: &str = "AGGREGATE_STD";

/// Runs every method on every case (cases in parallel, output in input
/// order) and appends per-(method, mask) mean and population standard
/// deviation rows.
pub fn evaluate_suite(cases: &[EvalCase], methods: &[Method<'_>]) -> Result<Vec<MetricReport>> {
    if cases.is_empty() || methods.is_empty() {
        return Err(Error::Parameter("evaluation needs at least one case and one method".into()));
    }
    let per_case: Vec<Result<Vec<MetricReport>>> = cases
        .par_iter()
        .map(|case| {
            let mask_type = case.model.mask().kind().tag().to_string();
            let fraction = mask_fraction(case.model.mask());
            let mut rows = Vec::with_capacity(methods.len());
            for method in methods {
                let x = method.reconstruct(&case.model, &case.y)?;
                rows.push(MetricReport {
                    case_id: case.id.clone(),
                    method: method.tag().to_string(),
                    mask_type: mask_type.clone(),
                    fraction,
                    psnr_db: psnr(&x, &case.reference)?,
                    ssim: ssim(&x, &case.reference)?,
                });
            }
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::with_capacity(cases.len() * methods.len() + 2 * methods.len());
    for case_rows in per_case {
        rows.extend(case_rows?);
    }

    // Aggregates per (method, mask) group, in method order then mask order
    // of first appearance.
    let mut groups: Vec<(String, String, f64)> = Vec::new();
    for row in &rows {
        if !groups
            .iter()
            .any(|(m, k, _)| m == &row.method && k == &row.mask_type)
        {
            groups.push((row.method.clone(), row.mask_type.clone(), row.fraction));
        }
    }
    let mut aggregates = Vec::new();
    for (method, mask_type, fraction) in groups {
        let group: Vec<&MetricReport> = rows
            .iter()
            .filter(|r| r.method == method && r.mask_type == mask_type)
            .collect();
        let n = group.len() as f64;
        let mean_psnr = group.iter().map(|r| r.psnr_db).sum::<f64>() / n;
        let mean_ssim = group.iter().map(|r| r.ssim).sum::<f64>() / n;
        let std_psnr = (group.iter().map(|r| (r.psnr_db - mean_psnr).powi(2)).sum::<f64>() / n).sqrt();
        let std_ssim = (group.iter().map(|r| (r.ssim - mean_ssim).powi(2)).sum::<f64>() / n).sqrt();
        aggregates.push(MetricReport {
            case_id: AGGREGATE_MEAN.into(),
            method: method.clone(),
            mask_type: mask_type.clone(),
            fraction,
            psnr_db: mean_psnr,
            ssim: mean_ssim,
        });
        aggregates.push(MetricReport {
            case_id: AGGREGATE_STD.into(),
            method,
            mask_type,
            fraction,
            psnr_db: std_psnr,
            ssim: std_ssim,
        });
    }
    rows.extend(aggregates);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::simulate_acquisition;
    use crate::phantom::{add_gaussian_noise, generate_coil_maps, generate_phantom};
    use crate::sampling::SamplingMask;
    use num_complex::Complex64;

    #[test]
    fn psnr_identical_images_is_infinite() {
        let x = generate_phantom(1, 32).unwrap();
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_closed_form() {
        // Magnitude MSE 0.01 with peak 1 -> exactly 20 dB.
        let h = 16;
        let reference = ComplexImage::from_fn(h, h, |r, c| {
            if (r, c) == (0, 0) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.5, 0.0)
            }
        })
        .unwrap();
        let x = ComplexImage::from_fn(h, h, |r, c| reference.at(r, c) + Complex64::new(0.1, 0.0)).unwrap();
        let got = psnr(&x, &reference).unwrap();
        assert!((got - 20.0).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn psnr_matches_direct_formula_oracle() {
        let a = generate_phantom(2, 32).unwrap();
        let b = add_gaussian_noise(&a, 0.1, 5).unwrap();
        let got = psnr(&b, &a).unwrap();

        // Independent re-implementation straight from the definition.
        let peak = a.data().iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        let mse: f64 = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| (x.norm() - y.norm()).powi(2))
            .sum::<f64>()
            / a.len() as f64;
        let expected = 10.0 * (peak * peak / mse).log10();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn psnr_rejects_zero_reference() {
        let z = ComplexImage::zeros(16, 16).unwrap();
        let x = generate_phantom(1, 16).unwrap();
        assert!(matches!(psnr(&x, &z), Err(Error::Parameter(_))));
    }

    #[test]
    fn psnr_decreases_with_noise_level() {
        let reference = generate_phantom(3, 64).unwrap();
        let mut last = f64::INFINITY;
        for (i, sigma) in [0.01, 0.03, 0.1, 0.3].iter().enumerate() {
            let noisy = add_gaussian_noise(&reference, *sigma, 7).unwrap();
            let value = psnr(&noisy, &reference).unwrap();
            assert!(value < last, "sigma step {i}: {value} >= {last}");
            last = value;
        }
    }

    #[test]
    fn ssim_identical_images_is_exactly_one() {
        let x = generate_phantom(4, 32).unwrap();
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constant_offset_regression() {
        // Constant +0.1 on a peak-1 image: only the luminance term suffers.
        let reference = generate_phantom(5, 64).unwrap();
        let x = ComplexImage::from_fn(64, 64, |r, c| {
            let z = reference.at(r, c);
            let m = z.norm() + 0.1;
            if z.norm() > 0.0 {
                z * (m / z.norm())
            } else {
                Complex64::new(m, 0.0)
            }
        })
        .unwrap();
        let value = ssim(&x, &reference).unwrap();
        assert!(value < 1.0 && value > 0.5, "ssim {value}");
    }

    #[test]
    fn ssim_inverted_image_is_dissimilar() {
        let reference = generate_phantom(6, 64).unwrap();
        let peak = reference.max_abs();
        let x = ComplexImage::from_fn(64, 64, |r, c| {
            Complex64::new(peak - reference.at(r, c).norm(), 0.0)
        })
        .unwrap();
        let value = ssim(&x, &reference).unwrap();
        assert!(value < 0.2, "ssim {value}");
    }

    #[test]
    fn ssim_symmetric_for_equal_peaks() {
        let a = generate_phantom(7, 32).unwrap();
        let mut b = add_gaussian_noise(&a, 0.05, 9).unwrap();
        // Force equal peaks so the dynamic-range convention is symmetric.
        let scale = a.max_abs() / b.max_abs();
        b = b.scale(scale);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let x = ComplexImage::zeros(8, 8).unwrap();
        assert!(matches!(ssim(&x, &x), Err(Error::Dimension(_))));
    }

    #[test]
    fn evaluate_suite_counts_and_aggregates() {
        let truth = generate_phantom(8, 32).unwrap();
        let maps = generate_coil_maps(1, 2, 32).unwrap();
        let mask = SamplingMask::full(32, 32);
        let y = simulate_acquisition(&truth, &maps, &mask, 0.0, 0).unwrap();
        let model = ForwardModel::new(mask, maps).unwrap();
        let case = EvalCase { id: "case0".into(), model, y, reference: truth };

        let rows = evaluate_suite(&[case], &[Method::ZeroFilled]).unwrap();
        assert_eq!(rows.len(), 3); // one data row + mean + std
        assert_eq!(rows[0].case_id, "case0");
        assert_eq!(rows[1].case_id, AGGREGATE_MEAN);
        assert_eq!(rows[2].case_id, AGGREGATE_STD);
        assert_eq!(rows[1].psnr_db, rows[0].psnr_db);
        assert_eq!(rows[2].psnr_db, 0.0);
    }

    #[test]
    fn evaluate_suite_aggregate_mean_matches_hand_average() {
        let maps = generate_coil_maps(1, 2, 32).unwrap();
        let mask = SamplingMask::full(32, 32);
        let mut cases = Vec::new();
        for seed in 0..3u64 {
            let truth = generate_phantom(seed + 20, 32).unwrap();
            let y = simulate_acquisition(&truth, &maps, &mask, 0.001, seed).unwrap();
            let model = ForwardModel::new(mask.clone(), maps.clone()).unwrap();
            cases.push(EvalCase { id: format!("c{seed}"), model, y, reference: truth });
        }
        let rows = evaluate_suite(&cases, &[Method::ZeroFilled]).unwrap();
        let data: Vec<&MetricReport> = rows.iter().filter(|r| r.case_id.starts_with('c')).collect();
        let mean = data.iter().map(|r| r.psnr_db).sum::<f64>() / data.len() as f64;
        let agg = rows.iter().find(|r| r.case_id == AGGREGATE_MEAN).unwrap();
        assert!((agg.psnr_db - mean).abs() < 1e-12);
    }
}
