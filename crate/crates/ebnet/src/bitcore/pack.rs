//! Sign packing and unpacking between dense and bit-plane tensors.

use super::{sign_plus, BitPlaneTensor, DenseTensor, Shape4};
use crate::error::{Error, Result};

/// Incremental little-endian bit writer used to assemble packed rows.
#[derive(Debug, Default)]
pub struct BitWriter {
    words: Vec<u64>,
    bits: usize,
}

impl BitWriter {
    pub fn with_capacity(bits: usize) -> Self {
        BitWriter {
            words: Vec::with_capacity(bits.div_ceil(64)),
            bits: 0,
        }
    }

    /// Appends the low `n` bits of `v` (n <= 64). Bits beyond `n` are ignored.
    #[inline]
    pub fn push(&mut self, v: u64, n: usize) {
        debug_assert!(n <= 64);
        if n == 0 {
            return;
        }
        let v = if n == 64 { v } else { v & ((1u64 << n) - 1) };
        let off = self.bits % 64;
        if off == 0 {
            self.words.push(v);
        } else {
            *self.words.last_mut().unwrap() |= v << off;
            let spill = 64 - off;
            if n > spill {
                self.words.push(v >> spill);
            }
        }
        self.bits += n;
    }

    pub fn len_bits(&self) -> usize {
        self.bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn into_words(self) -> Vec<u64> {
        self.words
    }

    pub fn clear(&mut self) {
        self.words.clear();
        self.bits = 0;
    }
}

/// Reads `len` bits (len <= 64) starting at signed position `start` from a
/// packed row holding `valid_len` bits. Positions outside [0, valid_len)
/// yield zero bits, which under the sign convention stand for −1.
#[inline]
pub fn extract_bits(row: &[u64], start: i64, len: usize, valid_len: usize) -> u64 {
    debug_assert!(len <= 64);
    if len == 0 || start >= valid_len as i64 || start + len as i64 <= 0 {
        return 0;
    }
    // Clip to the valid range, remembering where clipped bits land in the output.
    let lo = start.max(0) as usize;
    let hi = ((start + len as i64) as usize).min(valid_len);
    let out_shift = (lo as i64 - start) as usize;
    let take = hi - lo;

    let word = lo / 64;
    let off = lo % 64;
    let mut v = row[word] >> off;
    if off != 0 && word + 1 < row.len() {
        v |= row[word + 1] << (64 - off);
    }
    if take < 64 {
        v &= (1u64 << take) - 1;
    }
    v << out_shift
}

/// Packs `sign(x)` into a bit-plane tensor, flattening dimensions from
/// `packed_axis` onward into rows. Zero maps to +1; padding bits are zero.
pub fn binarize_pack(x: &DenseTensor, packed_axis: usize) -> Result<BitPlaneTensor> {
    x.shape.validate()?;
    if packed_axis > 3 {
        return Err(Error::InvalidShape(format!(
            "packed_axis {packed_axis} out of range"
        )));
    }
    if !x.is_finite() {
        return Err(Error::Numeric("cannot pack non-finite tensor".into()));
    }
    let dims = x.shape.dims();
    let rows: usize = dims[..packed_axis].iter().product();
    let row_len: usize = dims[packed_axis..].iter().product();
    let words_per_row = row_len.div_ceil(64);
    let mut words = vec![0u64; rows * words_per_row];
    for r in 0..rows {
        let base = r * row_len;
        let out = &mut words[r * words_per_row..(r + 1) * words_per_row];
        for i in 0..row_len {
            if x.values[base + i] >= 0.0 {
                out[i / 64] |= 1u64 << (i % 64);
            }
        }
    }
    Ok(BitPlaneTensor {
        shape: x.shape,
        packed_axis,
        row_len,
        words_per_row,
        words,
    })
}

/// Expands a bit-plane tensor back to dense ±1 values.
pub fn unpack(b: &BitPlaneTensor) -> Result<DenseTensor> {
    b.validate()?;
    let mut values = vec![0.0f64; b.shape.len()];
    let rows = b.rows();
    for r in 0..rows {
        let row = b.row(r);
        let base = r * b.row_len;
        for i in 0..b.row_len {
            values[base + i] = if (row[i / 64] >> (i % 64)) & 1 == 1 {
                1.0
            } else {
                -1.0
            };
        }
    }
    DenseTensor::from_values(b.shape, values)
}

/// Packs an im2col row for one (group, output position) receptive field of a
/// W-axis-packed activation tensor. The row layout is (channel, kernel row,
/// kernel col), matching reduction-axis-packed weights. Spatial padding
/// contributes zero bits (−1).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gather_receptive_row(
    x: &BitPlaneTensor,
    out: &mut BitWriter,
    sample: usize,
    ch_start: usize,
    ch_count: usize,
    oy: usize,
    ox: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    padding: usize,
) {
    let (h, w) = (x.shape.h, x.shape.w);
    let y0 = (oy * stride) as i64 - padding as i64;
    let x0 = (ox * stride) as i64 - padding as i64;
    for c in 0..ch_count {
        let row_base = (sample * x.shape.c + ch_start + c) * h;
        for ky in 0..kernel_h {
            let iy = y0 + ky as i64;
            if iy < 0 || iy >= h as i64 {
                out.push(0, kernel_w);
            } else {
                let row = x.row(row_base + iy as usize);
                out.push(extract_bits(row, x0, kernel_w, w), kernel_w);
            }
        }
    }
}

#[inline]
pub(crate) fn dense_sign_eq(x: &DenseTensor, u: &DenseTensor) -> bool {
    x.values
        .iter()
        .zip(&u.values)
        .all(|(a, b)| sign_plus(*a) == *b)
}
