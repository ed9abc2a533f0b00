//! The MRI encoding operator `A = P F S`: coil-weighted centered FFT with
//! binary k-space sampling, its adjoint, acquisition simulation, and a
//! low-resolution calibration surrogate for coil-map estimation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{fft2_centered, ifft2_centered, ComplexImage};
use crate::phantom::CoilMaps;
use crate::rng::{purpose, Rng};
use crate::sampling::SamplingMask;

/// C×H×W complex k-space samples; entries outside the mask are exactly 0.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceData {
    coils: usize,
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl KSpaceData {
    pub fn new(coils: usize, height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if coils == 0 {
            return Err(Error::Parameter("coil count must be at least 1".into()));
        }
        if data.len() != coils * height * width {
            return Err(Error::Dimension(format!(
                "k-space buffer length {} does not match {coils}x{height}x{width}",
                data.len()
            )));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Numeric("k-space contains non-finite samples".into()));
        }
        Ok(KSpaceData { coils, height, width, data })
    }

    pub fn zeros(coils: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(coils, height, width, vec![Complex64::new(0.0, 0.0); coils * height * width])
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

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn coil(&self, c: usize) -> &[Complex64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Inner product `sum_i self_i * conj(other_i)` over all coils.
    pub fn inner(&self, other: &KSpaceData) -> Complex64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    pub fn sub(&self, other: &KSpaceData) -> KSpaceData {
        KSpaceData {
            coils: self.coils,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Immutable encoding model: a sampling mask and unit-SoS coil maps of the
/// same grid size.
#[derive(Clone, Debug)]
pub struct ForwardModel {
    mask: SamplingMask,
    maps: CoilMaps,
}

impl ForwardModel {
    pub fn new(mask: SamplingMask, maps: CoilMaps) -> Result<Self> {
        if mask.height() != maps.height() || mask.width() != maps.width() {
            return Err(Error::Dimension(format!(
                "mask {}x{} does not match coil maps {}x{}",
                mask.height(),
                mask.width(),
                maps.height(),
                maps.width()
            )));
        }
        if maps.max_sos_deviation() > 1e-6 {
            return Err(Error::Parameter(
                "coil maps must have unit root-sum-of-squares".into(),
            ));
        }
        Ok(ForwardModel { mask, maps })
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn maps(&self) -> &CoilMaps {
        &self.maps
    }

    pub fn coils(&self) -> usize {
        self.maps.coils()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    fn check_image(&self, x: &ComplexImage) -> Result<()> {
        if x.height() != self.height() || x.width() != self.width() {
            return Err(Error::Dimension(format!(
                "image {}x{} does not match model {}x{}",
                x.height(),
                x.width(),
                self.height(),
                self.width()
            )));
        }
        Ok(())
    }

    fn check_kspace(&self, y: &KSpaceData) -> Result<()> {
        if y.coils() != self.coils() || y.height() != self.height() || y.width() != self.width() {
            return Err(Error::Dimension(format!(
                "k-space {}x{}x{} does not match model {}x{}x{}",
                y.coils(),
                y.height(),
                y.width(),
                self.coils(),
                self.height(),
                self.width()
            )));
        }
        Ok(())
    }
}

/// Forward encoding: per coil `y_c = mask .* F(S_c .* x)`.
pub fn apply_a(model: &ForwardModel, x: &ComplexImage) -> Result<KSpaceData> {
    model.check_image(x)?;
    let (h, w) = (model.height(), model.width());
    let n = h * w;
    let mut data = Vec::with_capacity(model.coils() * n);
    for c in 0..model.coils() {
        let coil = model.maps().coil(c);
        let weighted = ComplexImage::from_fn(h, w, |r, col| coil[r * w + col] * x.at(r, col))?;
        let k = fft2_centered(&weighted);
        let mask = model.mask().data();
        data.extend(
            k.data()
                .iter()
                .zip(mask.iter())
                .map(|(&z, &m)| if m == 1 { z } else { Complex64::new(0.0, 0.0) }),
        );
    }
    KSpaceData::new(model.coils(), h, w, data)
}

/// Adjoint encoding: `x = sum_c conj(S_c) .* F^-1(mask .* y_c)`.
pub fn apply_ah(model: &ForwardModel, y: &KSpaceData) -> Result<ComplexImage> {
    model.check_kspace(y)?;
    let (h, w) = (model.height(), model.width());
    let mask = model.mask().data();
    let mut acc = ComplexImage::zeros(h, w)?;
    for c in 0..model.coils() {
        let yc = y.coil(c);
        let masked = ComplexImage::from_fn(h, w, |r, col| {
            let idx = r * w + col;
            if mask[idx] == 1 {
                yc[idx]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })?;
        let img = ifft2_centered(&masked);
        let coil = model.maps().coil(c);
        let acc_data = acc.data_mut();
        for (idx, z) in img.data().iter().enumerate() {
            acc_data[idx] += coil[idx].conj() * z;
        }
    }
    Ok(acc)
}

/// Gradient of `0.5 * ||A x - y||^2` at `x`, i.e. `A^H (A x - y)`.
pub fn dc_gradient(model: &ForwardModel, x: &ComplexImage, y: &KSpaceData) -> Result<ComplexImage> {
    let residual = apply_a(model, x)?.sub(y);
    apply_ah(model, &residual)
}

/// Applies the forward model and optionally adds complex Gaussian noise on
/// sampled locations only; off-mask entries stay exactly zero.
pub fn simulate_acquisition(
    image: &ComplexImage,
    maps: &CoilMaps,
    mask: &SamplingMask,
    kspace_sigma: f64,
    seed: u64,
) -> Result<KSpaceData> {
    if kspace_sigma < 0.0 || !kspace_sigma.is_finite() {
        return Err(Error::Parameter(format!(
            "k-space noise sigma must be nonnegative, got {kspace_sigma}"
        )));
    }
    let model = ForwardModel::new(mask.clone(), maps.clone())?;
    let mut y = apply_a(&model, image)?;
    if kspace_sigma > 0.0 {
        let mut rng = Rng::from_stream(seed, purpose::KSPACE_NOISE, 0);
        let n = mask.height() * mask.width();
        let mask_data = mask.data();
        let data = y.data_mut();
        for c in 0..maps.coils() {
            for idx in 0..n {
                if mask_data[idx] == 1 {
                    data[c * n + idx] +=
                        Complex64::new(kspace_sigma * rng.normal(), kspace_sigma * rng.normal());
                }
            }
        }
    }
    Ok(y)
}

/// Raised-cosine taper: 1 in the block interior, rolling off to ~0 at the
/// block border over a quarter of the block on each side.
fn taper_weight(i: usize, n: usize) -> f64 {
    let ramp = (n as f64 / 4.0).max(1.0);
    let x = i as f64 + 0.5;
    let from_lo = x / ramp;
    let from_hi = (n as f64 - x) / ramp;
    let edge = from_lo.min(from_hi).min(1.0);
    0.5 * (1.0 - (std::f64::consts::PI * edge).cos())
}

/// Low-resolution coil-map estimation from a fully sampled central
/// calibration block: keep the tapered ACS, inverse transform per coil,
/// normalize pixelwise to unit root-sum-of-squares, and reference the
/// per-pixel global phase to coil 1.
///
/// A calibration location is treated as un-sampled when it is exactly zero
/// in every coil; synthetic acquisitions never produce exact zeros on
/// sampled locations.
pub fn estimate_coil_maps(calib: &KSpaceData, acs_size: usize) -> Result<CoilMaps> {
    let (coils, h, w) = (calib.coils(), calib.height(), calib.width());
    if acs_size == 0 || acs_size > h.min(w) {
        return Err(Error::Parameter(format!(
            "acs_size {acs_size} out of range for {h}x{w}"
        )));
    }
    let row_lo = h / 2 - acs_size / 2;
    let col_lo = w / 2 - acs_size / 2;

    // Precondition: the ACS block must be fully sampled.
    for r in row_lo..row_lo + acs_size {
        for c in col_lo..col_lo + acs_size {
            let idx = r * w + c;
            let all_zero = (0..coils).all(|k| {
                let z = calib.coil(k)[idx];
                z.re == 0.0 && z.im == 0.0
            });
            if all_zero {
                return Err(Error::Parameter(format!(
                    "calibration error: ACS location ({r},{c}) is not sampled"
                )));
            }
        }
    }

    let n = h * w;
    let mut low_res: Vec<ComplexImage> = Vec::with_capacity(coils);
    for k in 0..coils {
        let coil = calib.coil(k);
        let tapered = ComplexImage::from_fn(h, w, |r, c| {
            if r >= row_lo && r < row_lo + acs_size && c >= col_lo && c < col_lo + acs_size {
                let wy = taper_weight(r - row_lo, acs_size);
                let wx = taper_weight(c - col_lo, acs_size);
                coil[r * w + c] * (wy * wx)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })?;
        low_res.push(ifft2_centered(&tapered));
    }

    let sqrt_c = (coils as f64).sqrt();
    let mut data = vec![Complex64::new(0.0, 0.0); coils * n];
    for idx in 0..n {
        let sos = low_res.iter().map(|s| s.data()[idx].norm_sqr()).sum::<f64>().sqrt();
        if sos < 1e-8 {
            // Background convention: equal real weights with unit SoS.
            for k in 0..coils {
                data[k * n + idx] = Complex64::new(1.0 / sqrt_c, 0.0);
            }
            continue;
        }
        // Phase reference: rotate so coil 1 is real nonnegative.
        let ref_phase = {
            let z = low_res[0].data()[idx];
            if z.norm() > 0.0 {
                z / z.norm()
            } else {
                Complex64::new(1.0, 0.0)
            }
        };
        for k in 0..coils {
            data[k * n + idx] = low_res[k].data()[idx] / sos * ref_phase.conj();
        }
    }
    CoilMaps::new(coils, h, w, data)
}
