//! Synthetic ground-truth images, smooth coil sensitivity maps, and
//! train/test datasets.
//!
//! Phantoms are random overlapping ellipses with a smooth polynomial phase,
//! blurred and normalized so the peak magnitude is exactly 1. Everything is
//! a pure function of `(seed, params)` through derived substreams, so
//! datasets are bit-reproducible.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexImage;
use crate::rng::{derive_seed, purpose, Rng};

/// Per-coil complex sensitivities with unit root-sum-of-squares.
#[derive(Clone, Debug)]
pub struct CoilMaps {
    coils: usize,
    height: usize,
    width: usize,
    /// Coil-major: `data[c * H * W + r * W + col]`.
    data: Vec<Complex64>,
}

impl CoilMaps {
    pub fn new(coils: usize, height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if coils == 0 {
            return Err(Error::Parameter("coil count must be at least 1".into()));
        }
        if data.len() != coils * height * width {
            return Err(Error::Dimension(format!(
                "coil map buffer length {} does not match {coils}x{height}x{width}",
                data.len()
            )));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Numeric("coil maps contain non-finite samples".into()));
        }
        Ok(CoilMaps { coils, height, width, data })
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Samples of coil `c` as an H*W slice.
    pub fn coil(&self, c: usize) -> &[Complex64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Root-sum-of-squares magnitude over coils at pixel `(r, c)`.
    pub fn sos_at(&self, r: usize, c: usize) -> f64 {
        let n = self.height * self.width;
        let idx = r * self.width + c;
        (0..self.coils)
            .map(|k| self.data[k * n + idx].norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest deviation of the pixelwise root-sum-of-squares from 1.
    pub fn max_sos_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.height {
            for c in 0..self.width {
                worst = worst.max((self.sos_at(r, c) - 1.0).abs());
            }
        }
        worst
    }
}

/// Which half of a dataset split an image set belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A deterministic set of normalized phantom images.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Vec<ComplexImage>,
    pub split: Split,
    pub seed: u64,
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
    intensity: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let dy = y - self.cy;
        let dx = x - self.cx;
        let (s, c) = self.angle.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.rx).powi(2) + (v / self.ry).powi(2) <= 1.0
    }
}

/// Separable 5-tap binomial blur with zero padding.
fn blur(grid: &mut Vec<f64>, h: usize, w: usize) {
    const TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (t, tap) in TAPS.iter().enumerate() {
                let cc = c as isize + t as isize - 2;
                if cc >= 0 && (cc as usize) < w {
                    acc += tap * grid[r * w + cc as usize];
                }
            }
            tmp[r * w + c] = acc;
        }
    }
    for c in 0..w {
        for r in 0..h {
            let mut acc = 0.0;
            for (t, tap) in TAPS.iter().enumerate() {
                let rr = r as isize + t as isize - 2;
                if rr >= 0 && (rr as usize) < h {
                    acc += tap * tmp[rr as usize * w + c];
                }
            }
            grid[r * w + c] = acc;
        }
    }
}

/// Random ellipse phantom with smooth polynomial phase, peak magnitude
/// exactly 1. Pure function of `(seed, size)`.
pub fn generate_phantom(seed: u64, size: usize) -> Result<ComplexImage> {
    if size < 16 {
        return Err(Error::Parameter(format!("phantom size must be at least 16, got {size}")));
    }
    let mut rng = Rng::from_stream(seed, purpose::PHANTOM, 0);
    let s = size as f64;

    // First ellipse is large and central so the image is never empty.
    let mut ellipses = vec![Ellipse {
        cy: rng.uniform_in(0.42, 0.58) * s,
        cx: rng.uniform_in(0.42, 0.58) * s,
        ry: rng.uniform_in(0.20, 0.34) * s,
        rx: rng.uniform_in(0.20, 0.34) * s,
        angle: rng.uniform_in(0.0, std::f64::consts::PI),
        intensity: rng.uniform_in(0.4, 1.0),
    }];
    let extra = 4 + rng.below(8) as usize; // total 5..=12
    for _ in 0..extra {
        ellipses.push(Ellipse {
            cy: rng.uniform_in(0.15, 0.85) * s,
            cx: rng.uniform_in(0.15, 0.85) * s,
            ry: rng.uniform_in(0.04, 0.22) * s,
            rx: rng.uniform_in(0.04, 0.22) * s,
            angle: rng.uniform_in(0.0, std::f64::consts::PI),
            intensity: rng.uniform_in(0.15, 0.9),
        });
    }

    let mut mag = vec![0.0f64; size * size];
    for r in 0..size {
        for c in 0..size {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let mut v = 0.0;
            for e in &ellipses {
                if e.contains(y, x) {
                    v += e.intensity;
                }
            }
            mag[r * size + c] = v;
        }
    }
    blur(&mut mag, size, size);

    // Low-order polynomial phase over normalized coordinates in [-1/2, 1/2].
    let coef: Vec<f64> = (0..5).map(|_| rng.uniform_in(-0.4, 0.4)).collect();
    let phase_at = |r: usize, c: usize| {
        let v = r as f64 / s - 0.5;
        let u = c as f64 / s - 0.5;
        2.0 * std::f64::consts::PI
            * (coef[0] * u + coef[1] * v + coef[2] * u * u + coef[3] * u * v + coef[4] * v * v)
    };

    let (mut max_val, mut argmax) = (0.0f64, 0usize);
    for (i, &m) in mag.iter().enumerate() {
        if m > max_val {
            max_val = m;
            argmax = i;
        }
    }
    debug_assert!(max_val > 0.0);

    // Phase is referenced to the peak pixel so the peak is exactly 1 + 0i
    // after normalization (keeps the "max magnitude exactly 1" contract
    // free of hypot rounding).
    let phase_ref = phase_at(argmax / size, argmax % size);
    ComplexImage::from_fn(size, size, |r, c| {
        // Direct division so the peak sample is exactly 1.
        let m = mag[r * size + c] / max_val;
        let p = phase_at(r, c) - phase_ref;
        Complex64::new(m * p.cos(), m * p.sin())
    })
}

/// Smooth synthetic coil sensitivities: Gaussian profiles centered around
/// the image border with gentle linear phases, normalized to unit
/// root-sum-of-squares at every pixel.
pub fn generate_coil_maps(seed: u64, coils: usize, size: usize) -> Result<CoilMaps> {
    if coils == 0 {
        return Err(Error::Parameter("coil count must be at least 1".into()));
    }
    let mut rng = Rng::from_stream(seed, purpose::COIL_MAPS, 0);
    let s = size as f64;
    let angle0 = rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
    let sigma = 0.6 * s;

    let n = size * size;
    let mut data = vec![Complex64::new(0.0, 0.0); coils * n];
    for k in 0..coils {
        let theta = angle0 + 2.0 * std::f64::consts::PI * k as f64 / coils as f64;
        let cy = 0.5 * s + 0.55 * s * theta.sin();
        let cx = 0.5 * s + 0.55 * s * theta.cos();
        let (b1, b2, b0) = (
            rng.uniform_in(-2.0, 2.0),
            rng.uniform_in(-2.0, 2.0),
            rng.uniform_in(-std::f64::consts::PI, std::f64::consts::PI),
        );
        for r in 0..size {
            for c in 0..size {
                let dy = (r as f64 - cy) / sigma;
                let dx = (c as f64 - cx) / sigma;
                let m = (-0.5 * (dy * dy + dx * dx)).exp();
                let p = b0 + b1 * (c as f64 / s - 0.5) + b2 * (r as f64 / s - 0.5);
                data[k * n + r * size + c] = Complex64::new(m * p.cos(), m * p.sin());
            }
        }
    }
    // Pixelwise unit root-sum-of-squares (Gaussians are strictly positive,
    // so the denominator never vanishes).
    for idx in 0..n {
        let sos = (0..coils).map(|k| data[k * n + idx].norm_sqr()).sum::<f64>().sqrt();
        for k in 0..coils {
            data[k * n + idx] /= sos;
        }
    }
    CoilMaps::new(coils, size, size, data)
}

/// Adds independent `N(0, sigma^2)` perturbations to the real and imaginary
/// parts of every sample.
pub fn add_gaussian_noise(img: &ComplexImage, sigma: f64, seed: u64) -> Result<ComplexImage> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::Parameter(format!("noise sigma must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = Rng::from_stream(seed, purpose::IMAGE_NOISE, 0);
    let mut out = img.clone();
    for z in out.data_mut() {
        *z += Complex64::new(sigma * rng.normal(), sigma * rng.normal());
    }
    Ok(out)
}

/// Deterministic train/test phantom sets from disjoint seed streams.
pub fn build_dataset(seed: u64, n_train: usize, n_test: usize, size: usize) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::Parameter("dataset sizes must be at least 1".into()));
    }
    let make = |split_purpose: u64, count: usize, split: Split| -> Result<Dataset> {
        let mut images = Vec::with_capacity(count);
        for i in 0..count {
            images.push(generate_phantom(derive_seed(seed, split_purpose, i as u64), size)?);
        }
        Ok(Dataset { images, split, seed })
    };
    Ok((
        make(purpose::PHANTOM_TRAIN, n_train, Split::Train)?,
        make(purpose::PHANTOM_TEST, n_test, Split::Test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_peak_magnitude_is_exactly_one() {
        for seed in [0u64, 1, 2, 42] {
            let img = generate_phantom(seed, 64).unwrap();
            assert_eq!(img.max_abs(), 1.0, "seed {seed}");
        }
    }

    #[test]
    fn phantom_is_deterministic() {
        let a = generate_phantom(7, 64).unwrap();
        let b = generate_phantom(7, 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn phantom_nonzero_fraction_in_range() {
        let img = generate_phantom(1, 64).unwrap();
        let nonzero = img.data().iter().filter(|z| z.norm() > 1e-9).count();
        let fraction = nonzero as f64 / img.len() as f64;
        assert!(
            (0.1..=0.9).contains(&fraction),
            "nonzero fraction {fraction} outside [0.1, 0.9]"
        );
    }

    #[test]
    fn phantom_rejects_small_size() {
        assert!(matches!(generate_phantom(0, 8), Err(Error::Parameter(_))));
    }

    #[test]
    fn single_coil_map_has_unit_magnitude() {
        let maps = generate_coil_maps(3, 1, 32).unwrap();
        for z in maps.data() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coil_maps_unit_sos() {
        let maps = generate_coil_maps(5, 4, 64).unwrap();
        assert!(maps.max_sos_deviation() < 1e-9);
    }

    #[test]
    fn coil_maps_are_smooth() {
        // Regression bound on the sharpest magnitude step of any coil.
        let maps = generate_coil_maps(7, 4, 64).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..4 {
            let plane = maps.coil(k);
            for r in 0..64 {
                for c in 0..64 {
                    let m = plane[r * 64 + c].norm();
                    if c + 1 < 64 {
                        worst = worst.max((plane[r * 64 + c + 1].norm() - m).abs());
                    }
                    if r + 1 < 64 {
                        worst = worst.max((plane[(r + 1) * 64 + c].norm() - m).abs());
                    }
                }
            }
        }
        assert!(worst < 0.08, "max |S| finite difference {worst}");
    }

    #[test]
    fn coil_maps_reject_zero_coils() {
        assert!(matches!(generate_coil_maps(0, 0, 32), Err(Error::Parameter(_))));
    }

    #[test]
    fn noise_sigma_zero_is_identity() {
        let img = generate_phantom(3, 32).unwrap();
        let out = add_gaussian_noise(&img, 0.0, 11).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn noise_is_deterministic() {
        let img = generate_phantom(3, 32).unwrap();
        let a = add_gaussian_noise(&img, 0.03, 11).unwrap();
        let b = add_gaussian_noise(&img, 0.03, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_empirical_std_matches_sigma() {
        let img = generate_phantom(5, 64).unwrap();
        let noisy = add_gaussian_noise(&img, 0.03, 13).unwrap();
        let diffs: Vec<f64> = noisy
            .data()
            .iter()
            .zip(img.data().iter())
            .map(|(a, b)| (a - b).re)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!(
            (std - 0.03).abs() < 0.003,
            "empirical std {std} not within 10% of 0.03"
        );
    }

    #[test]
    fn dataset_counts_and_normalization() {
        let (train, test) = build_dataset(0, 20, 5, 32).unwrap();
        assert_eq!(train.images.len(), 20);
        assert_eq!(test.images.len(), 5);
        for img in train.images.iter().chain(test.images.iter()) {
            assert_eq!(img.max_abs(), 1.0);
        }
    }

    #[test]
    fn dataset_is_deterministic_and_disjoint() {
        let (train_a, test_a) = build_dataset(9, 12, 6, 32).unwrap();
        let (train_b, test_b) = build_dataset(9, 12, 6, 32).unwrap();
        assert_eq!(train_a.images, train_b.images);
        assert_eq!(test_a.images, test_b.images);
        for tr in &train_a.images {
            for te in &test_a.images {
                assert_ne!(tr, te, "train/test share a bit-identical image");
            }
        }
    }
}
