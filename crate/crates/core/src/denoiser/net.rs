//! The residual denoising network and its unrolled proximal form, with
//! exact reverse-mode gradients.
//!
//! Activations are channel-major planes (`[ch][H*W]` in one buffer).
//! Convolutions run directly on zero-padded copies of the input planes
//! with register-blocked accumulator loops; no patch matrices are
//! materialized. The backward pass recomputes the padded input from the
//! recorded activations, accumulates kernel gradients as shifted-row dot
//! products, and obtains the input gradient as a convolution with
//! spatially flipped kernels.
//!
//! Buffers only ever grow and are addressed through explicit prefix
//! lengths, so the training hot loop performs no allocation after warmup.
//! All accumulation orders are fixed, making every result bit-reproducible
//! regardless of scheduling.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexImage;
use crate::rng::Rng;

use super::{DenoiserWeights, NetConfig};

pub(crate) const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Channel counts of every conv layer for a config.
pub(crate) fn layer_dims(config: &NetConfig) -> Vec<(usize, usize)> {
    let f = config.filters;
    let mut dims = Vec::with_capacity(config.depth);
    for l in 0..config.depth {
        let in_ch = if l == 0 { 2 } else { f };
        let out_ch = if l == config.depth - 1 { 2 } else { f };
        dims.push((in_ch, out_ch));
    }
    dims
}

/// Flat parameter length: per layer, kernels `[out][in][3][3]` then biases.
pub(crate) fn param_len(config: &NetConfig) -> usize {
    layer_dims(config)
        .iter()
        .map(|&(i, o)| o * i * TAPS + o)
        .sum()
}

/// Offset of layer `l`'s kernel block and bias block in the flat buffer.
pub(crate) fn layer_offsets(config: &NetConfig) -> Vec<(usize, usize)> {
    let mut offsets = Vec::with_capacity(config.depth);
    let mut pos = 0;
    for (i, o) in layer_dims(config) {
        let kernels = pos;
        let bias = pos + o * i * TAPS;
        offsets.push((kernels, bias));
        pos = bias + o;
    }
    offsets
}

/// Grow-only sizing; callers address the prefix they need.
fn reserve(buf: &mut Vec<f64>, len: usize) {
    if buf.len() < len {
        buf.resize(len, 0.0);
    }
}

/// Copies `ch` planes of `h x w` into planes of `(h+2) x (w+2)` with a zero
/// ring, the layout every conv kernel below reads from.
fn pad_planes(src: &[f64], ch: usize, h: usize, w: usize, out: &mut Vec<f64>) {
    let hw = h * w;
    let pw = w + 2;
    let ph = h + 2;
    reserve(out, ch * ph * pw);
    for ci in 0..ch {
        let plane = &src[ci * hw..(ci + 1) * hw];
        let dst = &mut out[ci * ph * pw..(ci + 1) * ph * pw];
        dst[0..pw].fill(0.0);
        dst[(ph - 1) * pw..ph * pw].fill(0.0);
        for r in 0..h {
            let d = &mut dst[(r + 1) * pw..(r + 2) * pw];
            d[0] = 0.0;
            d[w + 1] = 0.0;
            d[1..=w].copy_from_slice(&plane[r * w..(r + 1) * w]);
        }
    }
}

const LANES: usize = 8;

/// AVX2+FMA microkernels, compiled in when the build enables the features
/// statically (the workspace builds with `target-cpu=native`). The
/// accumulators are named vector registers, so the reduction over
/// `in_ch * 9` taps never touches memory.
#[cfg(all(target_arch = "x86_64", target_feature = "avx2", target_feature = "fma"))]
mod x86 {
    use super::TAPS;
    use std::arch::x86_64::*;

    /// One output-row chunk: 4 output channels x 8 columns.
    ///
    /// Safety: `padded` must hold `in_ch` planes of `(h+2) x (w+2)` with
    /// `r + 2` a valid padded row and `c + 10 <= w + 2`; `kernels` must
    /// hold `4 * in_ch * 9` values laid out `[co][ci][tap]`.
    #[cfg(not(target_feature = "avx512f"))]
    #[inline]
    pub(super) unsafe fn conv_chunk_4x8(
        padded: *const f64,
        kernels: *const f64,
        in_ch: usize,
        r: usize,
        c: usize,
        pw: usize,
        pplane: usize,
        out: &mut [[f64; 8]; 4],
    ) {
        let mut a00 = _mm256_setzero_pd();
        let mut a01 = _mm256_setzero_pd();
        let mut a10 = _mm256_setzero_pd();
        let mut a11 = _mm256_setzero_pd();
        let mut a20 = _mm256_setzero_pd();
        let mut a21 = _mm256_setzero_pd();
        let mut a30 = _mm256_setzero_pd();
        let mut a31 = _mm256_setzero_pd();
        for ci in 0..in_ch {
            let base = padded.add(ci * pplane + r * pw + c);
            let k = kernels.add(ci * TAPS);
            for dy in 0..3 {
                let rp = base.add(dy * pw);
                for dx in 0..3 {
                    let lo = _mm256_loadu_pd(rp.add(dx));
                    let hi = _mm256_loadu_pd(rp.add(dx + 4));
                    let t = dy * 3 + dx;
                    let w0 = _mm256_set1_pd(*k.add(t));
                    a00 = _mm256_fmadd_pd(w0, lo, a00);
                    a01 = _mm256_fmadd_pd(w0, hi, a01);
                    let w1 = _mm256_set1_pd(*k.add(in_ch * TAPS + t));
                    a10 = _mm256_fmadd_pd(w1, lo, a10);
                    a11 = _mm256_fmadd_pd(w1, hi, a11);
                    let w2 = _mm256_set1_pd(*k.add(2 * in_ch * TAPS + t));
                    a20 = _mm256_fmadd_pd(w2, lo, a20);
                    a21 = _mm256_fmadd_pd(w2, hi, a21);
                    let w3 = _mm256_set1_pd(*k.add(3 * in_ch * TAPS + t));
                    a30 = _mm256_fmadd_pd(w3, lo, a30);
                    a31 = _mm256_fmadd_pd(w3, hi, a31);
                }
            }
        }
        _mm256_storeu_pd(out[0].as_mut_ptr(), a00);
        _mm256_storeu_pd(out[0].as_mut_ptr().add(4), a01);
        _mm256_storeu_pd(out[1].as_mut_ptr(), a10);
        _mm256_storeu_pd(out[1].as_mut_ptr().add(4), a11);
        _mm256_storeu_pd(out[2].as_mut_ptr(), a20);
        _mm256_storeu_pd(out[2].as_mut_ptr().add(4), a21);
        _mm256_storeu_pd(out[3].as_mut_ptr(), a30);
        _mm256_storeu_pd(out[3].as_mut_ptr().add(4), a31);
    }

    /// One output-row chunk with AVX-512: `CO` output channels x 8
    /// columns. The accumulators and row vector live in zmm registers
    /// (constant indices after unrolling); kernel values enter as
    /// broadcasts.
    ///
    /// Safety: as [`conv_chunk_4x8`], with `kernels` holding
    /// `CO * in_ch * 9` values.
    #[cfg(target_feature = "avx512f")]
    #[inline]
    pub(super) unsafe fn conv_chunk_n<const CO: usize>(
        padded: *const f64,
        kernels: *const f64,
        in_ch: usize,
        r: usize,
        c: usize,
        pw: usize,
        pplane: usize,
        out: &mut [[f64; 8]],
    ) {
        let mut acc = [_mm512_setzero_pd(); CO];
        let kstride = in_ch * TAPS;
        for ci in 0..in_ch {
            let base = padded.add(ci * pplane + r * pw + c);
            let k = kernels.add(ci * TAPS);
            for dy in 0..3 {
                let rp = base.add(dy * pw);
                for dx in 0..3 {
                    let x = _mm512_loadu_pd(rp.add(dx));
                    let t = dy * 3 + dx;
                    for co in 0..CO {
                        acc[co] =
                            _mm512_fmadd_pd(_mm512_set1_pd(*k.add(co * kstride + t)), x, acc[co]);
                    }
                }
            }
        }
        for co in 0..CO {
            _mm512_storeu_pd(out[co].as_mut_ptr(), acc[co]);
        }
    }

    /// AVX-512 kernel-gradient block: two upstream planes against one
    /// padded input plane at once (18 tap accumulators in zmm registers),
    /// so the input plane is streamed half as often.
    ///
    /// Safety: both `d` planes are `h x w` unpadded, `x_plane` is
    /// `(h+2) x (w+2)`.
    #[cfg(target_feature = "avx512f")]
    #[inline]
    pub(super) unsafe fn taps_dot_9_x2(
        d_plane_a: *const f64,
        d_plane_b: *const f64,
        x_plane: *const f64,
        h: usize,
        w: usize,
        pw: usize,
        taps_a: &mut [f64; TAPS],
        taps_b: &mut [f64; TAPS],
    ) {
        let mut acc_a = [_mm512_setzero_pd(); TAPS];
        let mut acc_b = [_mm512_setzero_pd(); TAPS];
        let mut tail_a = [0.0f64; TAPS];
        let mut tail_b = [0.0f64; TAPS];
        for r in 0..h {
            let da = d_plane_a.add(r * w);
            let db = d_plane_b.add(r * w);
            let x0 = x_plane.add(r * pw);
            let x1 = x_plane.add((r + 1) * pw);
            let x2 = x_plane.add((r + 2) * pw);
            let mut c = 0;
            while c + 8 <= w {
                let va = _mm512_loadu_pd(da.add(c));
                let vb = _mm512_loadu_pd(db.add(c));
                macro_rules! tap {
                    ($xrow:ident, $t:expr, $off:expr) => {
                        let x = _mm512_loadu_pd($xrow.add(c + $off));
                        acc_a[$t] = _mm512_fmadd_pd(va, x, acc_a[$t]);
                        acc_b[$t] = _mm512_fmadd_pd(vb, x, acc_b[$t]);
                    };
                }
                tap!(x0, 0, 0);
                tap!(x0, 1, 1);
                tap!(x0, 2, 2);
                tap!(x1, 3, 0);
                tap!(x1, 4, 1);
                tap!(x1, 5, 2);
                tap!(x2, 6, 0);
                tap!(x2, 7, 1);
                tap!(x2, 8, 2);
                c += 8;
            }
            while c < w {
                let a = *da.add(c);
                let b = *db.add(c);
                for t in 0..3 {
                    tail_a[t] += a * *x0.add(c + t);
                    tail_a[3 + t] += a * *x1.add(c + t);
                    tail_a[6 + t] += a * *x2.add(c + t);
                    tail_b[t] += b * *x0.add(c + t);
                    tail_b[3 + t] += b * *x1.add(c + t);
                    tail_b[6 + t] += b * *x2.add(c + t);
                }
                c += 1;
            }
        }
        for t in 0..TAPS {
            taps_a[t] = _mm512_reduce_add_pd(acc_a[t]) + tail_a[t];
            taps_b[t] = _mm512_reduce_add_pd(acc_b[t]) + tail_b[t];
        }
    }

    /// Nine shifted dot products of one upstream plane against one padded
    /// input plane: the 3x3 kernel-gradient block for a `(co, ci)` pair.
    ///
    /// Safety: `d_plane` is `h x w` unpadded, `x_plane` is `(h+2) x (w+2)`.
    #[inline]
    pub(super) unsafe fn taps_dot_9(
        d_plane: *const f64,
        x_plane: *const f64,
        h: usize,
        w: usize,
        pw: usize,
        taps: &mut [f64; TAPS],
    ) {
        let mut a0 = _mm256_setzero_pd();
        let mut a1 = _mm256_setzero_pd();
        let mut a2 = _mm256_setzero_pd();
        let mut a3 = _mm256_setzero_pd();
        let mut a4 = _mm256_setzero_pd();
        let mut a5 = _mm256_setzero_pd();
        let mut a6 = _mm256_setzero_pd();
        let mut a7 = _mm256_setzero_pd();
        let mut a8 = _mm256_setzero_pd();
        let mut tail = [0.0f64; TAPS];
        for r in 0..h {
            let drow = d_plane.add(r * w);
            let x0 = x_plane.add(r * pw);
            let x1 = x_plane.add((r + 1) * pw);
            let x2 = x_plane.add((r + 2) * pw);
            let mut c = 0;
            while c + 4 <= w {
                let d = _mm256_loadu_pd(drow.add(c));
                a0 = _mm256_fmadd_pd(d, _mm256_loadu_pd(x0.add(c)), a0);
                a1 = _mm256_fmadd_pd(d, _mm256_loadu_pd(x0.add(c + 1)), a1);
                a2 = _mm256_fmadd_pd(d, _mm256_loadu_pd(x0.add(c + 2)), a2);
                a3 = _mm256_fmadd_pd(d, _mm256_loadu_pd(x1.add(c)), a3);
                a4 = _mm256_fmadd_pd(d, _mm256_loadu_pd(x1.add(c + 1)), a4);
                a5 = _mm256_fmadd_pd(d, _mm256_loadu_pd(x1.add(c + 2)), a5);
                a6 = _mm256_fmadd_pd(d, _mm256_loadu_pd(x2.add(c)), a6);
                a7 = _mm256_fmadd_pd(d, _mm256_loadu_pd(x2.add(c + 1)), a7);
                a8 = _mm256_fmadd_pd(d, _mm256_loadu_pd(x2.add(c + 2)), a8);
                c += 4;
            }
            while c < w {
                let d = *drow.add(c);
                for t in 0..3 {
                    tail[t] += d * *x0.add(c + t);
                    tail[3 + t] += d * *x1.add(c + t);
                    tail[6 + t] += d * *x2.add(c + t);
                }
                c += 1;
            }
        }
        let mut lanes = [0.0f64; 4];
        let mut fold = |acc: __m256d, t: usize| {
            _mm256_storeu_pd(lanes.as_mut_ptr(), acc);
            taps[t] = lanes[0] + lanes[1] + lanes[2] + lanes[3] + tail[t];
        };
        fold(a0, 0);
        fold(a1, 1);
        fold(a2, 2);
        fold(a3, 3);
        fold(a4, 4);
        fold(a5, 5);
        fold(a6, 6);
        fold(a7, 7);
        fold(a8, 8);
    }
}

/// Portable microkernel for a block of `CO` output channels and `LANES`
/// columns; used for remainder blocks and non-AVX builds.
#[inline(always)]
fn conv_microkernel<const CO: usize>(
    padded: &[f64],
    kernels: &[f64],
    in_ch: usize,
    r: usize,
    c: usize,
    pw: usize,
    pplane: usize,
) -> [[f64; LANES]; CO] {
    let mut acc = [[0.0f64; LANES]; CO];
    for ci in 0..in_ch {
        let plane = &padded[ci * pplane + r * pw + c..];
        let row0 = &plane[0..LANES + 2];
        let row1 = &plane[pw..pw + LANES + 2];
        let row2 = &plane[2 * pw..2 * pw + LANES + 2];
        let kbase = ci * TAPS;
        macro_rules! tap {
            ($row:ident, $t:expr, $off:expr) => {
                for co in 0..CO {
                    let wk = kernels[co * in_ch * TAPS + kbase + $t];
                    for j in 0..LANES {
                        acc[co][j] = wk.mul_add($row[j + $off], acc[co][j]);
                    }
                }
            };
        }
        tap!(row0, 0, 0);
        tap!(row0, 1, 1);
        tap!(row0, 2, 2);
        tap!(row1, 3, 0);
        tap!(row1, 4, 1);
        tap!(row1, 5, 2);
        tap!(row2, 6, 0);
        tap!(row2, 7, 1);
        tap!(row2, 8, 2);
    }
    acc
}

/// One block of `CO` output channels over a full row range (portable).
fn conv_block<const CO: usize>(
    padded: &[f64],
    kernels: &[f64],
    bias: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    relu: bool,
    out: &mut [f64],
) {
    let hw = h * w;
    let pw = w + 2;
    let pplane = (h + 2) * pw;
    for r in 0..h {
        let mut c = 0;
        while c + LANES <= w {
            let acc = conv_microkernel::<CO>(padded, kernels, in_ch, r, c, pw, pplane);
            for co in 0..CO {
                let b = bias[co];
                let dst = &mut out[co * hw + r * w + c..co * hw + r * w + c + LANES];
                for j in 0..LANES {
                    let v = acc[co][j] + b;
                    dst[j] = if relu { v.max(0.0) } else { v };
                }
            }
            c += LANES;
        }
        while c < w {
            for co in 0..CO {
                let mut acc = 0.0;
                for ci in 0..in_ch {
                    let k = &kernels[co * in_ch * TAPS + ci * TAPS..][..TAPS];
                    let plane = &padded[ci * pplane + r * pw + c..];
                    for dy in 0..KERNEL {
                        acc += k[dy * 3] * plane[dy * pw]
                            + k[dy * 3 + 1] * plane[dy * pw + 1]
                            + k[dy * 3 + 2] * plane[dy * pw + 2];
                    }
                }
                let v = acc + bias[co];
                out[co * hw + r * w + c] = if relu { v.max(0.0) } else { v };
            }
            c += 1;
        }
    }
}

/// `CO` output channels over a full row range via the AVX-512 microkernel.
#[cfg(all(target_arch = "x86_64", target_feature = "avx512f", target_feature = "fma"))]
fn conv_block_n_fast<const CO: usize>(
    padded: &[f64],
    kernels: &[f64],
    bias: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    relu: bool,
    out: &mut [f64],
) {
    let hw = h * w;
    let pw = w + 2;
    let pplane = (h + 2) * pw;
    debug_assert!(padded.len() >= in_ch * pplane);
    debug_assert!(kernels.len() >= CO * in_ch * TAPS);
    let mut chunk = [[0.0f64; 8]; CO];
    for r in 0..h {
        let mut c = 0;
        while c + 8 <= w {
            // Bounds guaranteed by the padded layout checked above.
            unsafe {
                x86::conv_chunk_n::<CO>(
                    padded.as_ptr(),
                    kernels.as_ptr(),
                    in_ch,
                    r,
                    c,
                    pw,
                    pplane,
                    &mut chunk,
                );
            }
            for co in 0..CO {
                let b = bias[co];
                let dst = &mut out[co * hw + r * w + c..co * hw + r * w + c + 8];
                for j in 0..8 {
                    let v = chunk[co][j] + b;
                    dst[j] = if relu { v.max(0.0) } else { v };
                }
            }
            c += 8;
        }
        while c < w {
            for co in 0..CO {
                let mut acc = 0.0;
                for ci in 0..in_ch {
                    let k = &kernels[co * in_ch * TAPS + ci * TAPS..][..TAPS];
                    let plane = &padded[ci * pplane + r * pw + c..];
                    for dy in 0..KERNEL {
                        acc += k[dy * 3] * plane[dy * pw]
                            + k[dy * 3 + 1] * plane[dy * pw + 1]
                            + k[dy * 3 + 2] * plane[dy * pw + 2];
                    }
                }
                let v = acc + bias[co];
                out[co * hw + r * w + c] = if relu { v.max(0.0) } else { v };
            }
            c += 1;
        }
    }
}

/// Four output channels over a full row range via the AVX2 microkernel.
#[cfg(all(
    target_arch = "x86_64",
    target_feature = "avx2",
    target_feature = "fma",
    not(target_feature = "avx512f")
))]
fn conv_block_4_fast(
    padded: &[f64],
    kernels: &[f64],
    bias: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    relu: bool,
    out: &mut [f64],
) {
    let hw = h * w;
    let pw = w + 2;
    let pplane = (h + 2) * pw;
    debug_assert!(padded.len() >= in_ch * pplane);
    debug_assert!(kernels.len() >= 4 * in_ch * TAPS);
    let mut chunk = [[0.0f64; 8]; 4];
    for r in 0..h {
        let mut c = 0;
        while c + 8 <= w {
            // Bounds guaranteed by the padded layout checked above.
            unsafe {
                x86::conv_chunk_4x8(
                    padded.as_ptr(),
                    kernels.as_ptr(),
                    in_ch,
                    r,
                    c,
                    pw,
                    pplane,
                    &mut chunk,
                );
            }
            for co in 0..4 {
                let b = bias[co];
                let dst = &mut out[co * hw + r * w + c..co * hw + r * w + c + 8];
                for j in 0..8 {
                    let v = chunk[co][j] + b;
                    dst[j] = if relu { v.max(0.0) } else { v };
                }
            }
            c += 8;
        }
        while c < w {
            for co in 0..4 {
                let mut acc = 0.0;
                for ci in 0..in_ch {
                    let k = &kernels[co * in_ch * TAPS + ci * TAPS..][..TAPS];
                    let plane = &padded[ci * pplane + r * pw + c..];
                    for dy in 0..KERNEL {
                        acc += k[dy * 3] * plane[dy * pw]
                            + k[dy * 3 + 1] * plane[dy * pw + 1]
                            + k[dy * 3 + 2] * plane[dy * pw + 2];
                    }
                }
                let v = acc + bias[co];
                out[co * hw + r * w + c] = if relu { v.max(0.0) } else { v };
            }
            c += 1;
        }
    }
}

/// Direct 3x3 convolution over padded planes:
/// `out[co](r,c) = bias[co] + sum_{ci,dy,dx} k[co,ci,dy,dx] * in[ci](r+dy-1, c+dx-1)`
/// with zero padding, written unpadded, optional fused ReLU.
/// Output channels are processed in register-blocked groups.
#[allow(unreachable_code)]
fn conv_direct(
    padded: &[f64],
    kernels: &[f64],
    bias: &[f64],
    in_ch: usize,
    out_ch: usize,
    h: usize,
    w: usize,
    relu: bool,
    out: &mut Vec<f64>,
) {
    let hw = h * w;
    reserve(out, out_ch * hw);
    let mut co = 0;
    while co < out_ch {
        let left = out_ch - co;
        let ks = &kernels[co * in_ch * TAPS..];
        let bs = &bias[co..];
        let os = &mut out[co * hw..];
        #[cfg(all(target_arch = "x86_64", target_feature = "avx512f", target_feature = "fma"))]
        {
            if left >= 8 {
                conv_block_n_fast::<8>(padded, ks, bs, in_ch, h, w, relu, os);
                co += 8;
            } else if left >= 4 {
                conv_block_n_fast::<4>(padded, ks, bs, in_ch, h, w, relu, os);
                co += 4;
            } else if left >= 2 {
                conv_block_n_fast::<2>(padded, ks, bs, in_ch, h, w, relu, os);
                co += 2;
            } else {
                conv_block_n_fast::<1>(padded, ks, bs, in_ch, h, w, relu, os);
                co += 1;
            }
            continue;
        }
        #[cfg(all(
            target_arch = "x86_64",
            target_feature = "avx2",
            target_feature = "fma",
            not(target_feature = "avx512f")
        ))]
        if left >= 4 {
            conv_block_4_fast(padded, ks, bs, in_ch, h, w, relu, os);
            co += 4;
            continue;
        }
        if left >= 8 {
            conv_block::<8>(padded, ks, bs, in_ch, h, w, relu, os);
            co += 8;
        } else if left >= 4 {
            conv_block::<4>(padded, ks, bs, in_ch, h, w, relu, os);
            co += 4;
        } else if left >= 2 {
            conv_block::<2>(padded, ks, bs, in_ch, h, w, relu, os);
            co += 2;
        } else {
            conv_block::<1>(padded, ks, bs, in_ch, h, w, relu, os);
            co += 1;
        }
    }
}

/// Accumulates kernel and bias gradients:
/// `dK[co,ci,dy,dx] += sum_{r,c} dY[co](r,c) * X[ci](r+dy-1, c+dx-1)`,
/// nine register-resident vector dot products per `(co, ci)` pair over the
/// padded input (constant accumulator indices via the tap macro).
fn conv_grad_weights(
    padded_x: &[f64],
    d_out: &[f64],
    in_ch: usize,
    out_ch: usize,
    h: usize,
    w: usize,
    d_kernels: &mut [f64],
    d_bias: &mut [f64],
) {
    let hw = h * w;
    let pw = w + 2;
    let pplane = (h + 2) * pw;

    // Output channels in pairs sharing one pass over each input plane.
    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f", target_feature = "fma"))]
    {
        let mut co = 0;
        while co + 2 <= out_ch {
            let d_a = &d_out[co * hw..(co + 1) * hw];
            let d_b = &d_out[(co + 1) * hw..(co + 2) * hw];
            for ci in 0..in_ch {
                let x_plane = &padded_x[ci * pplane..(ci + 1) * pplane];
                let mut taps_a = [0.0f64; TAPS];
                let mut taps_b = [0.0f64; TAPS];
                // Plane extents guaranteed by the slicing above.
                unsafe {
                    x86::taps_dot_9_x2(
                        d_a.as_ptr(),
                        d_b.as_ptr(),
                        x_plane.as_ptr(),
                        h,
                        w,
                        pw,
                        &mut taps_a,
                        &mut taps_b,
                    );
                }
                let dka = &mut d_kernels[(co * in_ch + ci) * TAPS..(co * in_ch + ci + 1) * TAPS];
                for t in 0..TAPS {
                    dka[t] += taps_a[t];
                }
                let dkb = &mut d_kernels
                    [((co + 1) * in_ch + ci) * TAPS..((co + 1) * in_ch + ci + 1) * TAPS];
                for t in 0..TAPS {
                    dkb[t] += taps_b[t];
                }
            }
            d_bias[co] += d_a.iter().sum::<f64>();
            d_bias[co + 1] += d_b.iter().sum::<f64>();
            co += 2;
        }
        if co < out_ch {
            let dy_plane = &d_out[co * hw..(co + 1) * hw];
            for ci in 0..in_ch {
                let x_plane = &padded_x[ci * pplane..(ci + 1) * pplane];
                let mut taps = [0.0f64; TAPS];
                unsafe {
                    x86::taps_dot_9(dy_plane.as_ptr(), x_plane.as_ptr(), h, w, pw, &mut taps);
                }
                let dk = &mut d_kernels[(co * in_ch + ci) * TAPS..(co * in_ch + ci + 1) * TAPS];
                for t in 0..TAPS {
                    dk[t] += taps[t];
                }
            }
            d_bias[co] += dy_plane.iter().sum::<f64>();
        }
        return;
    }

    #[allow(unreachable_code)]
    for co in 0..out_ch {
        let dy_plane = &d_out[co * hw..(co + 1) * hw];
        for ci in 0..in_ch {
            let x_plane = &padded_x[ci * pplane..(ci + 1) * pplane];
            let dk = &mut d_kernels[(co * in_ch + ci) * TAPS..(co * in_ch + ci + 1) * TAPS];

            #[cfg(all(
                target_arch = "x86_64",
                target_feature = "avx2",
                target_feature = "fma",
                not(target_feature = "avx512f")
            ))]
            {
                let mut taps = [0.0f64; TAPS];
                // Plane extents checked by the slicing above.
                unsafe {
                    x86::taps_dot_9(dy_plane.as_ptr(), x_plane.as_ptr(), h, w, pw, &mut taps);
                }
                for t in 0..TAPS {
                    dk[t] += taps[t];
                }
            }

            #[cfg(not(all(target_arch = "x86_64", target_feature = "avx2", target_feature = "fma")))]
            {
                let mut acc = [[0.0f64; LANES]; TAPS];
                let mut tail = [0.0f64; TAPS];
                for r in 0..h {
                    let drow = &dy_plane[r * w..(r + 1) * w];
                    let base = r * pw;
                    let row0 = &x_plane[base..base + w + 2];
                    let row1 = &x_plane[base + pw..base + pw + w + 2];
                    let row2 = &x_plane[base + 2 * pw..base + 2 * pw + w + 2];
                    let mut c = 0;
                    while c + LANES <= w {
                        let d = &drow[c..c + LANES];
                        macro_rules! tap {
                            ($row:ident, $t:expr, $off:expr) => {
                                for j in 0..LANES {
                                    acc[$t][j] = d[j].mul_add($row[c + j + $off], acc[$t][j]);
                                }
                            };
                        }
                        tap!(row0, 0, 0);
                        tap!(row0, 1, 1);
                        tap!(row0, 2, 2);
                        tap!(row1, 3, 0);
                        tap!(row1, 4, 1);
                        tap!(row1, 5, 2);
                        tap!(row2, 6, 0);
                        tap!(row2, 7, 1);
                        tap!(row2, 8, 2);
                        c += LANES;
                    }
                    while c < w {
                        let d = drow[c];
                        for t in 0..KERNEL {
                            tail[t] += d * row0[c + t];
                            tail[3 + t] += d * row1[c + t];
                            tail[6 + t] += d * row2[c + t];
                        }
                        c += 1;
                    }
                }
                for t in 0..TAPS {
                    dk[t] += acc[t].iter().sum::<f64>() + tail[t];
                }
            }
        }
        d_bias[co] += dy_plane.iter().sum::<f64>();
    }
}

/// Rearranges kernels for the transposed convolution: channel roles swap
/// and the 3x3 taps flip spatially.
fn flip_kernels(kernels: &[f64], in_ch: usize, out_ch: usize, flipped: &mut Vec<f64>) {
    reserve(flipped, in_ch * out_ch * TAPS);
    for ci in 0..in_ch {
        for co in 0..out_ch {
            for t in 0..TAPS {
                flipped[(ci * out_ch + co) * TAPS + t] =
                    kernels[(co * in_ch + ci) * TAPS + (TAPS - 1 - t)];
            }
        }
    }
}

/// Recorded state of one network evaluation: the network input and the
/// per-layer post-activation outputs. Buffers persist across evaluations.
#[derive(Default)]
pub(crate) struct NetTape {
    input: Vec<f64>,
    acts: Vec<Vec<f64>>,
}

impl NetTape {
    fn ensure_layers(&mut self, depth: usize) {
        self.acts.resize_with(depth, Vec::new);
    }
}

/// Scratch buffers reused across evaluations.
#[derive(Default)]
pub(crate) struct Workspace {
    pad_buf: Vec<f64>,
    act_a: Vec<f64>,
    act_b: Vec<f64>,
    flip_buf: Vec<f64>,
    d_cur: Vec<f64>,
    d_next: Vec<f64>,
    zero_bias: Vec<f64>,
}

/// Forward pass on channel planes, writing the output planes into the
/// `2 * hw` prefix of `out`. With a tape, the input and activations are
/// recorded for [`net_backward_planes`].
pub(crate) fn net_forward_planes(
    weights: &DenoiserWeights,
    input: &[f64],
    h: usize,
    w: usize,
    ws: &mut Workspace,
    tape: Option<&mut NetTape>,
    out: &mut Vec<f64>,
) {
    let dims = layer_dims(&weights.config);
    let offsets = layer_offsets(&weights.config);
    let params = &weights.params;
    let depth = dims.len();
    let hw = h * w;
    let pplane = (h + 2) * (w + 2);

    let last: &[f64] = match tape {
        Some(tape) => {
            tape.ensure_layers(depth);
            tape.input.clear();
            tape.input.extend_from_slice(&input[..2 * hw]);
            for (l, &(in_ch, out_ch)) in dims.iter().enumerate() {
                let (koff, boff) = offsets[l];
                let kernels = &params[koff..koff + out_ch * in_ch * TAPS];
                let bias = &params[boff..boff + out_ch];
                let relu = l + 1 < depth;
                let (before, rest) = tape.acts.split_at_mut(l);
                let src: &[f64] = if l == 0 { input } else { &before[l - 1] };
                pad_planes(src, in_ch, h, w, &mut ws.pad_buf);
                conv_direct(
                    &ws.pad_buf[..in_ch * pplane],
                    kernels,
                    bias,
                    in_ch,
                    out_ch,
                    h,
                    w,
                    relu,
                    &mut rest[0],
                );
            }
            &tape.acts[depth - 1]
        }
        None => {
            for (l, &(in_ch, out_ch)) in dims.iter().enumerate() {
                let (koff, boff) = offsets[l];
                let kernels = &params[koff..koff + out_ch * in_ch * TAPS];
                let bias = &params[boff..boff + out_ch];
                let relu = l + 1 < depth;
                let src: &[f64] = if l == 0 {
                    input
                } else if l % 2 == 1 {
                    &ws.act_a
                } else {
                    &ws.act_b
                };
                pad_planes(src, in_ch, h, w, &mut ws.pad_buf);
                let dst = if l % 2 == 0 { &mut ws.act_a } else { &mut ws.act_b };
                conv_direct(
                    &ws.pad_buf[..in_ch * pplane],
                    kernels,
                    bias,
                    in_ch,
                    out_ch,
                    h,
                    w,
                    relu,
                    dst,
                );
            }
            if (depth - 1) % 2 == 0 {
                &ws.act_a
            } else {
                &ws.act_b
            }
        }
    };
    reserve(out, 2 * hw);
    for (o, (&x, &a)) in out[..2 * hw].iter_mut().zip(input.iter().zip(last.iter())) {
        *o = x + a;
    }
}

/// Exact reverse-mode pass. Accumulates parameter gradients into
/// `d_params` (caller zeroes) and writes the input gradient into the
/// `2 * hw` prefix of `d_input`.
pub(crate) fn net_backward_planes(
    weights: &DenoiserWeights,
    tape: &NetTape,
    upstream: &[f64],
    h: usize,
    w: usize,
    ws: &mut Workspace,
    d_params: &mut [f64],
    d_input: &mut Vec<f64>,
) {
    let config = &weights.config;
    let dims = layer_dims(config);
    let offsets = layer_offsets(config);
    let hw = h * w;
    let params = &weights.params;
    let depth = dims.len();
    let n = 2 * hw;

    reserve(&mut ws.d_cur, n);
    ws.d_cur[..n].copy_from_slice(&upstream[..n]);
    for l in (0..depth).rev() {
        let (in_ch, out_ch) = dims[l];
        let (koff, boff) = offsets[l];
        let kernels = &params[koff..koff + out_ch * in_ch * TAPS];

        // Kernel/bias gradients from the padded layer input.
        let src: &[f64] = if l == 0 { &tape.input } else { &tape.acts[l - 1] };
        pad_planes(src, in_ch, h, w, &mut ws.pad_buf);
        {
            let (dk, rest) = d_params[koff..].split_at_mut(out_ch * in_ch * TAPS);
            let db = &mut rest[..out_ch];
            debug_assert_eq!(boff, koff + out_ch * in_ch * TAPS);
            conv_grad_weights(
                &ws.pad_buf[..in_ch * (h + 2) * (w + 2)],
                &ws.d_cur[..out_ch * hw],
                in_ch,
                out_ch,
                h,
                w,
                dk,
                db,
            );
        }

        // Input gradient: transposed convolution = convolution of the
        // upstream with flipped kernels.
        flip_kernels(kernels, in_ch, out_ch, &mut ws.flip_buf);
        pad_planes(&ws.d_cur, out_ch, h, w, &mut ws.pad_buf);
        reserve(&mut ws.zero_bias, in_ch);
        ws.zero_bias[..in_ch].fill(0.0);
        conv_direct(
            &ws.pad_buf[..out_ch * (h + 2) * (w + 2)],
            &ws.flip_buf[..in_ch * out_ch * TAPS],
            &ws.zero_bias[..in_ch],
            out_ch,
            in_ch,
            h,
            w,
            false,
            &mut ws.d_next,
        );
        if l > 0 {
            // ReLU mask from the recorded post-activation of layer l-1.
            for (d, &a) in ws.d_next[..in_ch * hw]
                .iter_mut()
                .zip(tape.acts[l - 1][..in_ch * hw].iter())
            {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        std::mem::swap(&mut ws.d_cur, &mut ws.d_next);
    }

    // Residual path: identity Jacobian adds the upstream gradient.
    reserve(d_input, n);
    for (d, (&g, &u)) in d_input[..n]
        .iter_mut()
        .zip(ws.d_cur.iter().zip(upstream.iter()))
    {
        *d = g + u;
    }
}

/// Tapes of the K unrolled steps of one proximator evaluation.
#[derive(Default)]
pub(crate) struct ProxTape {
    steps: Vec<NetTape>,
}

/// K unrolled steps `g = x + alpha (v - x); x = net(g)` on planes, writing
/// the final iterate into the `2 * hw` prefix of `out`.
pub(crate) fn prox_forward_planes(
    weights: &DenoiserWeights,
    v: &[f64],
    h: usize,
    w: usize,
    ws: &mut Workspace,
    tape: Option<&mut ProxTape>,
    out: &mut Vec<f64>,
) {
    let alpha = weights.config.inner_alpha;
    let steps = weights.config.unroll_steps;
    let n = v.len();
    reserve(out, n);
    out[..n].copy_from_slice(v); // x_0 = v
    let mut g = vec![0.0; n];
    match tape {
        Some(tape) => {
            tape.steps.resize_with(steps, NetTape::default);
            for t in 0..steps {
                for ((gi, &xi), &vi) in g.iter_mut().zip(out.iter()).zip(v.iter()) {
                    *gi = xi + alpha * (vi - xi);
                }
                net_forward_planes(weights, &g, h, w, ws, Some(&mut tape.steps[t]), out);
            }
        }
        None => {
            for _ in 0..steps {
                for ((gi, &xi), &vi) in g.iter_mut().zip(out.iter()).zip(v.iter()) {
                    *gi = xi + alpha * (vi - xi);
                }
                net_forward_planes(weights, &g, h, w, ws, None, out);
            }
        }
    }
}

/// Backward through the unrolled steps; accumulates parameter gradients and
/// writes the gradient with respect to `v` into `d_v`.
pub(crate) fn prox_backward_planes(
    weights: &DenoiserWeights,
    tape: &ProxTape,
    upstream: &[f64],
    h: usize,
    w: usize,
    ws: &mut Workspace,
    d_params: &mut [f64],
    d_v: &mut Vec<f64>,
) {
    let alpha = weights.config.inner_alpha;
    let n = upstream.len();
    let mut d_x: Vec<f64> = upstream.to_vec();
    let mut d_g = Vec::new();
    reserve(d_v, n);
    d_v[..n].fill(0.0);
    for t in (0..tape.steps.len()).rev() {
        net_backward_planes(weights, &tape.steps[t], &d_x, h, w, ws, d_params, &mut d_g);
        for (dv, &dg) in d_v[..n].iter_mut().zip(d_g.iter()) {
            *dv += alpha * dg;
        }
        for (dx, &dg) in d_x.iter_mut().zip(d_g.iter()) {
            *dx = (1.0 - alpha) * dg;
        }
    }
    // x_0 = v closes the chain.
    for (dv, &dx) in d_v[..n].iter_mut().zip(d_x.iter()) {
        *dv += dx;
    }
}

pub(crate) fn image_to_planes(img: &ComplexImage) -> Vec<f64> {
    let hw = img.len();
    let mut planes = vec![0.0; 2 * hw];
    for (i, z) in img.data().iter().enumerate() {
        planes[i] = z.re;
        planes[hw + i] = z.im;
    }
    planes
}

pub(crate) fn planes_to_image(planes: &[f64], h: usize, w: usize) -> Result<ComplexImage> {
    let hw = h * w;
    ComplexImage::new(
        h,
        w,
        (0..hw)
            .map(|i| Complex64::new(planes[i], planes[hw + i]))
            .collect(),
    )
}

/// Two-channel residual CNN applied to a complex image.
pub fn net_forward(weights: &DenoiserWeights, img: &ComplexImage) -> Result<ComplexImage> {
    weights.validate()?;
    let mut ws = Workspace::default();
    let planes = image_to_planes(img);
    let mut out = Vec::new();
    net_forward_planes(weights, &planes, img.height(), img.width(), &mut ws, None, &mut out);
    planes_to_image(&out, img.height(), img.width())
        .map_err(|_| Error::Numeric("network produced non-finite output".into()))
}

/// K unrolled proximal steps sharing the network weights: the learned
/// proximal operator.
pub fn proximator_forward(weights: &DenoiserWeights, v: &ComplexImage) -> Result<ComplexImage> {
    weights.validate()?;
    let mut ws = Workspace::default();
    let planes = image_to_planes(v);
    let mut out = Vec::new();
    prox_forward_planes(weights, &planes, v.height(), v.width(), &mut ws, None, &mut out);
    planes_to_image(&out, v.height(), v.width())
        .map_err(|_| Error::Numeric("proximator produced non-finite output".into()))
}

/// Parameter and input gradients of [`net_forward`] for a given upstream
/// gradient image (reverse mode, exact).
pub fn net_backward(
    weights: &DenoiserWeights,
    img: &ComplexImage,
    upstream: &ComplexImage,
) -> Result<(Vec<f64>, ComplexImage)> {
    weights.validate()?;
    img.check_same_shape(upstream, "net_backward upstream")?;
    let mut ws = Workspace::default();
    let planes = image_to_planes(img);
    let up = image_to_planes(upstream);
    let mut tape = NetTape::default();
    let mut out = Vec::new();
    net_forward_planes(weights, &planes, img.height(), img.width(), &mut ws, Some(&mut tape), &mut out);
    let mut d_params = vec![0.0; weights.params.len()];
    let mut d_input = Vec::new();
    net_backward_planes(
        weights,
        &tape,
        &up,
        img.height(),
        img.width(),
        &mut ws,
        &mut d_params,
        &mut d_input,
    );
    Ok((d_params, planes_to_image(&d_input, img.height(), img.width())?))
}

/// Hutchinson estimate of the squared Frobenius norm of the Jacobian of an
/// arbitrary map, `mean_i ||(f(x + eps d_i) - f(x)) / eps||^2` with standard
/// normal probe directions.
pub(crate) fn hutchinson_estimate(
    mut f: impl FnMut(&[f64]) -> Vec<f64>,
    x: &[f64],
    eps: f64,
    probes: usize,
    rng: &mut Rng,
) -> f64 {
    let fx = f(x);
    let mut total = 0.0;
    let mut xp = vec![0.0; x.len()];
    for _ in 0..probes {
        let d: Vec<f64> = (0..x.len()).map(|_| rng.normal()).collect();
        for ((p, &xi), &di) in xp.iter_mut().zip(x.iter()).zip(d.iter()) {
            *p = xi + eps * di;
        }
        let fp = f(&xp);
        let mut acc = 0.0;
        for (a, b) in fp.iter().zip(fx.iter()) {
            let diff = (a - b) / eps;
            acc += diff * diff;
        }
        total += acc;
    }
    total / probes as f64
}

/// Stochastic estimate of `||d r(x) / d x||_F^2` for the proximator at `x`.
pub fn jacobian_penalty_estimate(
    weights: &DenoiserWeights,
    x: &ComplexImage,
    eps: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    weights.validate()?;
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Parameter(format!("probe eps must be positive, got {eps}")));
    }
    if probes == 0 {
        return Err(Error::Parameter("probe count must be at least 1".into()));
    }
    let (h, w) = (x.height(), x.width());
    let planes = image_to_planes(x);
    let mut rng = Rng::from_stream(seed, crate::rng::purpose::PENALTY_PROBE, 0);
    let mut ws = Workspace::default();
    let mut out = Vec::new();
    Ok(hutchinson_estimate(
        |p| {
            prox_forward_planes(weights, p, h, w, &mut ws, None, &mut out);
            out[..p.len()].to_vec()
        },
        &planes,
        eps,
        probes,
        &mut rng,
    ))
}

