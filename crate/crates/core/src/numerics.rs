//! Complex-grid arithmetic, the centered orthonormal 2-D FFT, the orthonormal
//! Haar wavelet, elementwise proximal maps, and a power-iteration norm
//! estimator.
//!
//! Conventions fixed here and used everywhere else:
//! - grids are row-major, dimensions are powers of two;
//! - the FFT is unitary (scaling 1/sqrt(H*W)) with the DC sample at the grid
//!   center `(H/2, W/2)` on both axes, i.e. `fftshift(FFT(ifftshift(x)))`;
//! - the Haar transform is orthonormal, so both transforms preserve the
//!   l2 norm exactly (up to rounding).

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rng::{purpose, Rng};

/// H×W complex-valued grid; the unknown image and every intermediate.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

fn is_pow2(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

impl ComplexImage {
    /// Builds an image, enforcing the grid invariants: power-of-two
    /// dimensions, matching buffer length, finite samples.
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if !is_pow2(height) || !is_pow2(width) {
            return Err(Error::Dimension(format!(
                "image dimensions must be powers of two, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "buffer length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Numeric("image contains non-finite samples".into()));
        }
        Ok(ComplexImage { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![Complex64::new(0.0, 0.0); height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Mutable sample access. Callers are responsible for keeping samples
    /// finite; boundary operations re-validate where the contract demands.
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &ComplexImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn check_same_shape(&self, other: &ComplexImage, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: shape {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    /// l2 norm over all samples.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Inner product `sum_i self_i * conj(other_i)`.
    pub fn inner(&self, other: &ComplexImage) -> Complex64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, factor: f64) -> ComplexImage {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn add(&self, other: &ComplexImage) -> ComplexImage {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexImage) -> ComplexImage {
        self.zip(other, |a, b| a - b)
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &ComplexImage) -> ComplexImage {
        self.zip(other, |a, b| a * b)
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &ComplexImage, factor: f64) -> ComplexImage {
        self.zip(other, |a, b| a + factor * b)
    }

    fn zip(&self, other: &ComplexImage, f: impl Fn(Complex64, Complex64) -> Complex64) -> ComplexImage {
        debug_assert!(self.same_shape(other));
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Rotate a grid by (H/2, W/2); for power-of-two sizes fftshift and
/// ifftshift coincide.
fn shift_half(data: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    let (dr, dc) = (height / 2, width / 2);
    for r in 0..height {
        let rr = (r + dr) % height;
        for c in 0..width {
            let cc = (c + dc) % width;
            out[rr * width + cc] = data[r * width + c];
        }
    }
    out
}

fn fft2_inner(img: &ComplexImage, inverse: bool) -> ComplexImage {
    let (h, w) = (img.height, img.width);
    let mut buf = shift_half(&img.data, h, w);

    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = if inverse {
            planner.plan_fft_inverse(w)
        } else {
            planner.plan_fft_forward(w)
        };
        let col_fft = if inverse {
            planner.plan_fft_inverse(h)
        } else {
            planner.plan_fft_forward(h)
        };
        for row in buf.chunks_exact_mut(w) {
            row_fft.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                col[r] = buf[r * w + c];
            }
            col_fft.process(&mut col);
            for r in 0..h {
                buf[r * w + c] = col[r];
            }
        }
    });

    let scale = 1.0 / ((h * w) as f64).sqrt();
    for z in buf.iter_mut() {
        *z *= scale;
    }
    let data = shift_half(&buf, h, w);
    ComplexImage { height: h, width: w, data }
}

/// Unitary 2-D FFT with the DC sample at the grid center.
///
/// Power-of-two dimensions are guaranteed by the [`ComplexImage`] invariant;
/// violations are rejected at construction with a dimension error.
pub fn fft2_centered(img: &ComplexImage) -> ComplexImage {
    fft2_inner(img, false)
}

/// Exact inverse (and adjoint) of [`fft2_centered`].
pub fn ifft2_centered(img: &ComplexImage) -> ComplexImage {
    fft2_inner(img, true)
}

/// Multi-level orthonormal Haar decomposition: per-level detail bands plus
/// one coarsest approximation band.
#[derive(Clone, Debug)]
pub struct WaveletCoeffs {
    levels: usize,
    height: usize,
    width: usize,
    /// `bands[l] = [horizontal, vertical, diagonal]` details at level `l`
    /// (level 0 is the finest, size H/2 x W/2).
    bands: Vec<[Vec<Complex64>; 3]>,
    /// Coarsest approximation, size (H >> levels) x (W >> levels).
    approx: Vec<Complex64>,
}

impl WaveletCoeffs {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Detail bands `[horizontal, vertical, diagonal]` at `level`.
    pub fn detail(&self, level: usize) -> &[Vec<Complex64>; 3] {
        &self.bands[level]
    }

    pub fn approx(&self) -> &[Complex64] {
        &self.approx
    }

    /// Total coefficient count; equals the source pixel count.
    pub fn len(&self) -> usize {
        self.approx.len() + self.bands.iter().map(|b| b[0].len() * 3).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self) -> f64 {
        let mut sum: f64 = self.approx.iter().map(|z| z.norm_sqr()).sum();
        for band in &self.bands {
            for sub in band {
                sum += sub.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        sum.sqrt()
    }

    /// Sum of coefficient magnitudes (the l1 term of the wavelet objective).
    pub fn l1_norm(&self) -> f64 {
        let mut sum: f64 = self.approx.iter().map(|z| z.norm()).sum();
        for band in &self.bands {
            for sub in band {
                sum += sub.iter().map(|z| z.norm()).sum::<f64>();
            }
        }
        sum
    }
}

/// One orthonormal Haar analysis step along rows then columns of an
/// `h x w` buffer; returns (approx, horiz, vert, diag), each `h/2 x w/2`.
fn haar_step(buf: &[Complex64], h: usize, w: usize) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (hh, hw) = (h / 2, w / 2);
    // rows: lo | hi halves
    let mut lo = vec![Complex64::new(0.0, 0.0); h * hw];
    let mut hi = vec![Complex64::new(0.0, 0.0); h * hw];
    for r in 0..h {
        for c in 0..hw {
            let a = buf[r * w + 2 * c];
            let b = buf[r * w + 2 * c + 1];
            lo[r * hw + c] = (a + b) * s;
            hi[r * hw + c] = (a - b) * s;
        }
    }
    // columns of each half
    let mut approx = vec![Complex64::new(0.0, 0.0); hh * hw];
    let mut vert = vec![Complex64::new(0.0, 0.0); hh * hw];
    let mut horiz = vec![Complex64::new(0.0, 0.0); hh * hw];
    let mut diag = vec![Complex64::new(0.0, 0.0); hh * hw];
    for r in 0..hh {
        for c in 0..hw {
            let la = lo[2 * r * hw + c];
            let lb = lo[(2 * r + 1) * hw + c];
            approx[r * hw + c] = (la + lb) * s;
            vert[r * hw + c] = (la - lb) * s;
            let ha = hi[2 * r * hw + c];
            let hb = hi[(2 * r + 1) * hw + c];
            horiz[r * hw + c] = (ha + hb) * s;
            diag[r * hw + c] = (ha - hb) * s;
        }
    }
    (approx, horiz, vert, diag)
}

fn haar_unstep(approx: &[Complex64], horiz: &[Complex64], vert: &[Complex64], diag: &[Complex64], hh: usize, hw: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (h, w) = (hh * 2, hw * 2);
    let mut lo = vec![Complex64::new(0.0, 0.0); h * hw];
    let mut hi = vec![Complex64::new(0.0, 0.0); h * hw];
    for r in 0..hh {
        for c in 0..hw {
            let a = approx[r * hw + c];
            let v = vert[r * hw + c];
            lo[2 * r * hw + c] = (a + v) * s;
            lo[(2 * r + 1) * hw + c] = (a - v) * s;
            let ho = horiz[r * hw + c];
            let d = diag[r * hw + c];
            hi[2 * r * hw + c] = (ho + d) * s;
            hi[(2 * r + 1) * hw + c] = (ho - d) * s;
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        for c in 0..hw {
            let l = lo[r * hw + c];
            let g = hi[r * hw + c];
            out[r * w + 2 * c] = (l + g) * s;
            out[r * w + 2 * c + 1] = (l - g) * s;
        }
    }
    out
}

/// Orthonormal multi-level 2-D Haar analysis.
pub fn haar2_forward(img: &ComplexImage, levels: usize) -> Result<WaveletCoeffs> {
    let (h, w) = (img.height(), img.width());
    let max_levels = h.min(w).trailing_zeros() as usize;
    if levels == 0 || levels > max_levels {
        return Err(Error::Dimension(format!(
            "levels {levels} out of range 1..={max_levels} for {h}x{w}"
        )));
    }
    let mut bands = Vec::with_capacity(levels);
    let mut cur = img.data().to_vec();
    let (mut ch, mut cw) = (h, w);
    for _ in 0..levels {
        let (approx, horiz, vert, diag) = haar_step(&cur, ch, cw);
        bands.push([horiz, vert, diag]);
        cur = approx;
        ch /= 2;
        cw /= 2;
    }
    Ok(WaveletCoeffs { levels, height: h, width: w, bands, approx: cur })
}

/// Perfect reconstruction from [`haar2_forward`] output.
pub fn haar2_inverse(coeffs: &WaveletCoeffs) -> ComplexImage {
    let mut cur = coeffs.approx.clone();
    let (mut ch, mut cw) = (
        coeffs.height >> coeffs.levels,
        coeffs.width >> coeffs.levels,
    );
    for level in (0..coeffs.levels).rev() {
        let [horiz, vert, diag] = &coeffs.bands[level];
        cur = haar_unstep(&cur, horiz, vert, diag, ch, cw);
        ch *= 2;
        cw *= 2;
    }
    ComplexImage { height: coeffs.height, width: coeffs.width, data: cur }
}

fn soft_threshold_value(v: Complex64, tau: f64) -> Complex64 {
    let mag = v.norm();
    if mag <= tau {
        Complex64::new(0.0, 0.0)
    } else {
        v * ((mag - tau) / mag)
    }
}

/// Complex soft thresholding: `v * max(|v| - tau, 0) / |v|` per coefficient,
/// the proximal map of `tau * ||.||_1`.
pub fn soft_threshold(coeffs: &WaveletCoeffs, tau: f64) -> Result<WaveletCoeffs> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::Parameter(format!("threshold must be nonnegative, got {tau}")));
    }
    let mut out = coeffs.clone();
    for z in out.approx.iter_mut() {
        *z = soft_threshold_value(*z, tau);
    }
    for band in out.bands.iter_mut() {
        for sub in band.iter_mut() {
            for z in sub.iter_mut() {
                *z = soft_threshold_value(*z, tau);
            }
        }
    }
    Ok(out)
}

/// Largest-eigenvalue estimate of a self-adjoint PSD linear map on
/// `height x width` grids, by power iteration with the Rayleigh quotient.
///
/// Returns 0 when the iterate is annihilated by the map.
pub fn spectral_norm_estimate(
    apply: impl Fn(&ComplexImage) -> ComplexImage,
    height: usize,
    width: usize,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = Rng::from_stream(seed, purpose::POWER_ITER, 0);
    let mut v = ComplexImage::from_fn(height, width, |_, _| {
        Complex64::new(rng.normal(), rng.normal())
    })?;
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    v = v.scale(1.0 / norm);

    let mut estimate = 0.0;
    for _ in 0..iters {
        let av = apply(&v);
        // v has unit norm, so the Rayleigh quotient is just <Av, v>.
        estimate = av.inner(&v).re;
        let n = av.norm();
        if n == 0.0 {
            return Ok(0.0);
        }
        v = av.scale(1.0 / n);
    }
    Ok(estimate)
}
