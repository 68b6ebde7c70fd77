//! Word-level XNOR/popcount reduction and the packed binary convolution.

use super::pack::{gather_receptive_row, BitWriter};
use super::{BitPlaneTensor, ConvGeometry, DenseTensor, ScaleVector, Shape4};
use crate::error::{Error, Result};

/// Portable popcount (SWAR), kept as the reference for the hardware
/// `count_ones` path; the two must agree bit-exactly.
#[inline]
pub fn popcount_portable(mut v: u64) -> u32 {
    v -= (v >> 1) & 0x5555_5555_5555_5555;
    v = (v & 0x3333_3333_3333_3333) + ((v >> 2) & 0x3333_3333_3333_3333);
    v = (v + (v >> 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    ((v.wrapping_mul(0x0101_0101_0101_0101)) >> 56) as u32
}

/// Integer dot product of two ±1 vectors stored as packed sign rows:
/// `2·m − n_valid`, where `m` counts matching bits among the first
/// `n_valid`. Padding bits must be zero in both rows.
pub fn xnor_popcount_dot(a: &[u64], b: &[u64], n_valid: usize) -> Result<i64> {
    let cap = a.len().min(b.len()) * 64;
    if n_valid > cap {
        return Err(Error::Range(format!(
            "n_valid {n_valid} exceeds packed capacity {cap}"
        )));
    }
    let words = n_valid.div_ceil(64);
    let mut diff = 0u32;
    for i in 0..words {
        diff += (a[i] ^ b[i]).count_ones();
    }
    // Matching bits m = n − diff, so 2m − n = n − 2·diff.
    Ok(n_valid as i64 - 2 * diff as i64)
}

/// Grouped binary convolution over packed operands.
///
/// `x` must be packed along the width axis (one row per (n, c, h)); `w` along
/// the reduction axis (one row per output channel, layout (c, kh, kw)).
/// Spatial padding is treated as −1. The integer XNOR/popcount accumulation
/// per output position is scaled by the output channel's `alpha`.
pub fn bconv2d_packed(
    x: &BitPlaneTensor,
    w: &BitPlaneTensor,
    geom: &ConvGeometry,
    alpha: &ScaleVector,
) -> Result<DenseTensor> {
    geom.validate()?;
    alpha.validate(geom.out_channels)?;
    if x.packed_axis != 3 {
        return Err(Error::Geometry(
            "activations must be packed along the width axis".into(),
        ));
    }
    if x.shape.c != geom.in_channels {
        return Err(Error::Geometry(format!(
            "input has {} channels, geometry expects {}",
            x.shape.c, geom.in_channels
        )));
    }
    let wshape = geom.weight_shape();
    if w.shape != wshape || w.packed_axis != 1 {
        return Err(Error::Geometry(format!(
            "weights must be {} packed along the reduction axis, got {} axis {}",
            wshape, w.shape, w.packed_axis
        )));
    }
    let (oh, ow) = geom.out_size(x.shape.h, x.shape.w)?;
    let cpg = geom.channels_per_group();
    let opg = geom.out_channels / geom.groups;
    let n_valid = cpg * geom.kernel_h * geom.kernel_w;
    let words_per_row = n_valid.div_ceil(64);
    debug_assert_eq!(words_per_row, w.words_per_row);

    let out_shape = Shape4::new(x.shape.n, geom.out_channels, oh, ow);
    let mut out = DenseTensor::zeros(out_shape);

    // One im2col bit matrix per (sample, group); each output channel of the
    // group then reduces every position with word XNOR + popcount.
    let mut patch = BitWriter::with_capacity(n_valid);
    let mut col = vec![0u64; oh * ow * words_per_row];
    for n in 0..x.shape.n {
        for g in 0..geom.groups {
            for oy in 0..oh {
                for ox in 0..ow {
                    patch.clear();
                    gather_receptive_row(
                        x,
                        &mut patch,
                        n,
                        g * cpg,
                        cpg,
                        oy,
                        ox,
                        geom.kernel_h,
                        geom.kernel_w,
                        geom.stride,
                        geom.padding,
                    );
                    debug_assert_eq!(patch.len_bits(), n_valid);
                    let dst = (oy * ow + ox) * words_per_row;
                    col[dst..dst + patch.words().len()].copy_from_slice(patch.words());
                    for w_i in &mut col[dst + patch.words().len()..dst + words_per_row] {
                        *w_i = 0;
                    }
                }
            }
            for o_in_g in 0..opg {
                let o = g * opg + o_in_g;
                let wrow = w.row(o);
                let a = alpha.alpha[o];
                let base = out.index(n, o, 0, 0);
                for p in 0..oh * ow {
                    let xrow = &col[p * words_per_row..(p + 1) * words_per_row];
                    let mut diff = 0u32;
                    for i in 0..words_per_row {
                        diff += (xrow[i] ^ wrow[i]).count_ones();
                    }
                    out.values[base + p] = a * (n_valid as i64 - 2 * diff as i64) as f64;
                }
            }
        }
    }
    Ok(out)
}
