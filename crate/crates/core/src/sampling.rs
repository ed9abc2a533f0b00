//! Binary k-space sampling masks for the three acquisition regimes:
//! 1-D Cartesian row undersampling, 2-D pointwise random undersampling, and
//! pseudo-radial spokes rasterized onto the Cartesian grid.
//!
//! Masks live in the centered k-space frame (DC at `(H/2, W/2)`), matching
//! the FFT convention in [`crate::numerics`]. Random masks draw without
//! replacement under a variable-density law `p ∝ (1 - k/k_max)^3`; the
//! exponent is a documented choice, configurable through [`DENSITY_EXPONENT`].

use crate::error::{Error, Result};
use crate::rng::{purpose, Rng};

/// Exponent of the variable-density selection law.
pub const DENSITY_EXPONENT: i32 = 3;

/// How a mask was generated; carried for reporting.
#[derive(Clone, Debug, PartialEq)]
pub enum MaskKind {
    Cartesian1d { fraction: f64, acs_lines: usize, seed: u64 },
    Random2d { fraction: f64, acs_size: usize, seed: u64 },
    Radial { spokes: usize },
    Full,
    Unknown,
}

impl MaskKind {
    /// Short tag used in CSV reports.
    pub fn tag(&self) -> &'static str {
        match self {
            MaskKind::Cartesian1d { .. } => "cartesian1d",
            MaskKind::Random2d { .. } => "random2d",
            MaskKind::Radial { .. } => "radial",
            MaskKind::Full => "full",
            MaskKind::Unknown => "unknown",
        }
    }
}

/// H×W binary grid in the centered k-space frame; the sampling operator P.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
    kind: MaskKind,
}

impl SamplingMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>, kind: MaskKind) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask buffer length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if !data.iter().all(|&v| v == 0 || v == 1) {
            return Err(Error::Format("mask values must be 0 or 1".into()));
        }
        Ok(SamplingMask { height, width, data, kind })
    }

    pub fn full(height: usize, width: usize) -> Self {
        SamplingMask {
            height,
            width,
            data: vec![1; height * width],
            kind: MaskKind::Full,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn kind(&self) -> &MaskKind {
        &self.kind
    }

    pub fn is_sampled(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] == 1
    }

    pub fn ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }
}

/// Sampled fraction: ones count over grid size.
pub fn mask_fraction(mask: &SamplingMask) -> f64 {
    mask.ones() as f64 / (mask.height() * mask.width()) as f64
}

/// Weighted sampling without replacement (Efraimidis-Spirakis): the `count`
/// items with the smallest `-ln(u)/w` keys. Zero-weight items sort last
/// (infinite key, index tiebreak), so they are taken only once every
/// positive-weight item is exhausted.
fn weighted_sample(weights: &[f64], count: usize, rng: &mut Rng) -> Vec<usize> {
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u = rng.uniform().max(f64::MIN_POSITIVE);
            let key = if w > 0.0 { -u.ln() / w } else { f64::INFINITY };
            (key, i)
        })
        .collect();
    keys.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    keys.truncate(count.min(keys.len()));
    keys.into_iter().map(|(_, i)| i).collect()
}

/// Full phase-encode rows drawn under the cubic variable-density law, with
/// the central `acs_lines` rows always on.
pub fn cartesian1d_mask(
    h: usize,
    w: usize,
    fraction: f64,
    acs_lines: usize,
    seed: u64,
) -> Result<SamplingMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!("fraction must be in (0, 1], got {fraction}")));
    }
    if acs_lines % 2 != 0 || acs_lines > h {
        return Err(Error::Parameter(format!(
            "acs_lines must be even and at most {h}, got {acs_lines}"
        )));
    }
    let target = (fraction * h as f64).round() as usize;
    if target < acs_lines {
        return Err(Error::Parameter(format!(
            "requested fraction {fraction} yields {target} rows, fewer than {acs_lines} ACS lines"
        )));
    }

    let acs_lo = h / 2 - acs_lines / 2;
    let acs_hi = acs_lo + acs_lines;
    let k_max = (h / 2) as f64;
    let mut rng = Rng::from_stream(seed, purpose::MASK, 0);

    // Weights for non-ACS rows; ACS rows are excluded from the draw.
    let weights: Vec<f64> = (0..h)
        .map(|r| {
            if r >= acs_lo && r < acs_hi {
                0.0
            } else {
                let k = (r as f64 - (h / 2) as f64).abs();
                (1.0 - k / k_max).max(0.0).powi(DENSITY_EXPONENT)
            }
        })
        .collect();
    let picked = weighted_sample(&weights, target - acs_lines, &mut rng);

    let mut rows = vec![false; h];
    for r in acs_lo..acs_hi {
        rows[r] = true;
    }
    for r in picked {
        rows[r] = true;
    }
    // DC row is inside the ACS block whenever acs_lines > 0; force it
    // otherwise.
    rows[h / 2] = true;

    let mut data = vec![0u8; h * w];
    for (r, &on) in rows.iter().enumerate() {
        if on {
            data[r * w..(r + 1) * w].fill(1);
        }
    }
    SamplingMask::new(h, w, data, MaskKind::Cartesian1d { fraction, acs_lines, seed })
}

/// Pointwise 2-D variable-density mask with a fully sampled central
/// `acs_size` x `acs_size` block.
pub fn random2d_mask(
    h: usize,
    w: usize,
    fraction: f64,
    acs_size: usize,
    seed: u64,
) -> Result<SamplingMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!("fraction must be in (0, 1], got {fraction}")));
    }
    if acs_size > h.min(w) {
        return Err(Error::Parameter(format!(
            "acs_size {acs_size} exceeds grid {h}x{w}"
        )));
    }
    let target = (fraction * (h * w) as f64).round() as usize;
    if target < acs_size * acs_size {
        return Err(Error::Parameter(format!(
            "requested fraction {fraction} yields {target} samples, fewer than the {acs_size}x{acs_size} ACS block"
        )));
    }

    let row_lo = h / 2 - acs_size / 2;
    let col_lo = w / 2 - acs_size / 2;
    let in_acs =
        |r: usize, c: usize| r >= row_lo && r < row_lo + acs_size && c >= col_lo && c < col_lo + acs_size;

    let rho_max = (((h / 2) * (h / 2) + (w / 2) * (w / 2)) as f64).sqrt();
    let mut rng = Rng::from_stream(seed, purpose::MASK, 1);
    let weights: Vec<f64> = (0..h * w)
        .map(|idx| {
            let (r, c) = (idx / w, idx % w);
            if in_acs(r, c) {
                0.0
            } else {
                let kr = r as f64 - (h / 2) as f64;
                let kc = c as f64 - (w / 2) as f64;
                let rho = (kr * kr + kc * kc).sqrt();
                (1.0 - rho / rho_max).max(0.0).powi(DENSITY_EXPONENT)
            }
        })
        .collect();
    let picked = weighted_sample(&weights, target - acs_size * acs_size, &mut rng);

    let mut data = vec![0u8; h * w];
    for r in row_lo..row_lo + acs_size {
        for c in col_lo..col_lo + acs_size {
            data[r * w + c] = 1;
        }
    }
    for idx in picked {
        data[idx] = 1;
    }
    data[(h / 2) * w + w / 2] = 1; // DC always sampled
    SamplingMask::new(h, w, data, MaskKind::Random2d { fraction, acs_size, seed })
}

/// Pseudo-radial mask: `n_spokes` straight readout lines through the grid
/// center at angles `i*pi/n_spokes`, each rasterized in unit steps along the
/// spoke over the inscribed-circle diameter (a radial readout of
/// `min(H, W)` samples), snapped to the nearest grid cell.
/// Deterministic; no seed.
pub fn radial_mask(h: usize, w: usize, n_spokes: usize) -> Result<SamplingMask> {
    if n_spokes == 0 {
        return Err(Error::Parameter("spoke count must be at least 1".into()));
    }
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let radius = (h.min(w) / 2) as i64;
    let mut data = vec![0u8; h * w];
    for i in 0..n_spokes {
        let theta = i as f64 * std::f64::consts::PI / n_spokes as f64;
        let (s, c) = theta.sin_cos();
        for t in -radius..=radius {
            let r = (cy + t as f64 * s).round();
            let col = (cx + t as f64 * c).round();
            if r >= 0.0 && (r as usize) < h && col >= 0.0 && (col as usize) < w {
                data[(r as usize) * w + col as usize] = 1;
            }
        }
    }
    data[(h / 2) * w + w / 2] = 1;
    SamplingMask::new(h, w, data, MaskKind::Radial { spokes: n_spokes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_full_fraction_is_all_ones() {
        let m = cartesian1d_mask(32, 32, 1.0, 8, 0).unwrap();
        assert_eq!(m.ones(), 32 * 32);
    }

    #[test]
    fn cartesian_row_counts_and_acs() {
        let m = cartesian1d_mask(64, 64, 0.3, 12, 3).unwrap();
        // 0.3 * 64 rounds to 19 selected rows
        let sampled_rows: Vec<usize> = (0..64).filter(|&r| m.is_sampled(r, 0)).collect();
        assert_eq!(sampled_rows.len(), 19);
        for r in 26..38 {
            assert!(m.is_sampled(r, 0), "ACS row {r} not sampled");
        }
        // rows are rank-1: all-0 or all-1
        for r in 0..64 {
            let first = m.is_sampled(r, 0);
            for c in 0..64 {
                assert_eq!(m.is_sampled(r, c), first);
            }
        }
    }

    #[test]
    fn cartesian_rejects_fraction_below_acs() {
        assert!(matches!(
            cartesian1d_mask(64, 64, 0.1, 12, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            cartesian1d_mask(64, 64, 0.3, 11, 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn cartesian_density_favors_center() {
        // Monte-Carlo frequency: central-third rows must be picked more
        // often than outer-third rows under the cubic law.
        let h = 64;
        let mut freq = vec![0usize; h];
        for seed in 0..1000u64 {
            let m = cartesian1d_mask(h, 8, 0.3, 0, seed).unwrap();
            for (r, f) in freq.iter_mut().enumerate() {
                if m.is_sampled(r, 0) {
                    *f += 1;
                }
            }
        }
        let mut order: Vec<usize> = (0..h).collect();
        order.sort_by_key(|&r| ((r as f64 - (h / 2) as f64).abs() * 1000.0) as i64);
        let central: usize = order[..h / 3].iter().map(|&r| freq[r]).sum();
        let outer: usize = order[h - h / 3..].iter().map(|&r| freq[r]).sum();
        assert!(
            central > outer,
            "central rows picked {central} times vs outer {outer}"
        );
    }

    #[test]
    fn random2d_counts_and_acs_block() {
        let m = random2d_mask(64, 64, 0.2, 12, 5).unwrap();
        let ones = m.ones();
        assert!(
            (ones as f64 - 0.2 * 4096.0).abs() <= 0.01 * 4096.0,
            "ones {ones} not within 1% of 819"
        );
        for r in 26..38 {
            for c in 26..38 {
                assert!(m.is_sampled(r, c));
            }
        }
        assert_eq!(m, random2d_mask(64, 64, 0.2, 12, 5).unwrap());
    }

    #[test]
    fn random2d_full_fraction_is_all_ones() {
        let m = random2d_mask(16, 16, 1.0, 4, 1).unwrap();
        assert_eq!(m.ones(), 256);
    }

    #[test]
    fn radial_single_spoke_is_center_row() {
        let m = radial_mask(8, 8, 1).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(m.is_sampled(r, c), r == 4, "({r},{c})");
            }
        }
    }

    #[test]
    fn radial_two_spokes_are_center_row_and_column() {
        let m = radial_mask(8, 8, 2).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(m.is_sampled(r, c), r == 4 || c == 4, "({r},{c})");
            }
        }
    }

    #[test]
    fn radial_forty_spokes_fraction_regression() {
        let m = radial_mask(64, 64, 40).unwrap();
        let f = mask_fraction(&m);
        assert!(f > 0.2 && f < 0.5, "40-spoke fraction {f}");
    }

    #[test]
    fn mask_fraction_trivial_cases() {
        let full = SamplingMask::full(8, 8);
        assert_eq!(mask_fraction(&full), 1.0);

        let mut data = vec![0u8; 64];
        data[4 * 8 + 4] = 1;
        let dc_only = SamplingMask::new(8, 8, data, MaskKind::Unknown).unwrap();
        assert_eq!(mask_fraction(&dc_only), 1.0 / 64.0);
    }

    #[test]
    fn radial_four_spokes_hand_count() {
        // 8x8, radius 4, steps t = -4..=4, spokes at 0, pi/4, pi/2, 3pi/4.
        //   theta=0:    cells (4, 4+t) -> row 4, cols 0..7 (t=4 lands out)  8 cells
        //   theta=pi/2: cells (4+t, 4) -> col 4, rows 0..7               7 new
        //   theta=pi/4: (4+round(.707t), 4+round(.707t)), round(.707t) for
        //               t=-4..4 is -3,-2,-1,-1,0,1,1,2,3 -> diagonal cells
        //               (1,1),(2,2),(3,3),(5,5),(6,6),(7,7) plus (4,4)     6 new
        //   theta=3pi/4: mirrored anti-diagonal (r, 8-r), r in {1,2,3,5,6,7} 6 new
        // union: 8 + 7 + 6 + 6 = 27 cells
        let m = radial_mask(8, 8, 4).unwrap();
        assert_eq!(m.ones(), 27);
        assert!((mask_fraction(&m) - 27.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn every_mask_contains_dc() {
        let masks = [
            cartesian1d_mask(32, 32, 0.25, 4, 9).unwrap(),
            random2d_mask(32, 32, 0.15, 4, 9).unwrap(),
            radial_mask(32, 32, 7).unwrap(),
        ];
        for m in &masks {
            assert!(m.is_sampled(16, 16), "{:?} misses DC", m.kind());
        }
    }

    #[test]
    fn masks_are_idempotent_projections() {
        let m = random2d_mask(32, 32, 0.3, 8, 2).unwrap();
        for &v in m.data() {
            assert_eq!(v * v, v);
        }
    }
}
