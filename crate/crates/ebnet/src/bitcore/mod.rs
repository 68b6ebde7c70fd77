//! Bit-plane tensors and word-level XNOR/popcount convolution kernels.
//!
//! Sign tensors are packed one bit per element into 64-bit words
//! (bit 1 ↔ +1, bit 0 ↔ −1). The packed convolution kernel reduces each
//! receptive field with pure word XNOR + popcount and is bit-exact against
//! [`conv2d_reference`], the deterministic float convolution that doubles as
//! the real-valued layer implementation oracle.

mod kernel;
mod pack;
mod reference;

pub use kernel::{bconv2d_packed, popcount_portable, xnor_popcount_dot};
pub use pack::{binarize_pack, extract_bits, unpack, BitWriter};
pub use reference::{conv2d_reference, conv2d_reference_with_pad};

use crate::error::{Error, Result};

/// Dimensions of a rank-4 tensor in NCHW order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape4 { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    /// All dimensions ≥ 1.
    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidShape(format!(
                "live tensors need all dims >= 1, got {}x{}x{}x{}",
                self.n, self.c, self.h, self.w
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Real-valued rank-4 tensor in row-major NCHW layout, with an optional
/// gradient buffer of the same length.
#[derive(Clone, Debug)]
pub struct DenseTensor {
    pub shape: Shape4,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl DenseTensor {
    pub fn zeros(shape: Shape4) -> Self {
        DenseTensor {
            shape,
            values: vec![0.0; shape.len()],
            grad: None,
        }
    }

    pub fn from_values(shape: Shape4, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::InvalidShape(format!(
                "value buffer of {} does not match shape {} ({} elements)",
                values.len(),
                shape,
                shape.len()
            )));
        }
        Ok(DenseTensor {
            shape,
            values,
            grad: None,
        })
    }

    /// Flat index of (n, c, h, w).
    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.values[self.index(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut f64 {
        let i = self.index(n, c, h, w);
        &mut self.values[i]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Sign tensor packed one bit per element (bit 1 ↔ +1, bit 0 ↔ −1).
///
/// The dimensions from `packed_axis` onward are flattened into rows of
/// `row_len` bits; each row occupies `words_per_row` little-endian 64-bit
/// words with all padding bits beyond `row_len` held at zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitPlaneTensor {
    pub shape: Shape4,
    pub packed_axis: usize,
    pub row_len: usize,
    pub words_per_row: usize,
    pub words: Vec<u64>,
}

impl BitPlaneTensor {
    pub fn rows(&self) -> usize {
        self.shape.dims()[..self.packed_axis].iter().product()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    #[inline]
    pub fn bit(&self, r: usize, i: usize) -> bool {
        let row = self.row(r);
        (row[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Checks the structural invariants: word count, row geometry, and zeroed
    /// padding bits.
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if self.packed_axis > 3 {
            return Err(Error::InvalidShape(format!(
                "packed_axis {} out of range",
                self.packed_axis
            )));
        }
        let row_len: usize = self.shape.dims()[self.packed_axis..].iter().product();
        if row_len != self.row_len {
            return Err(Error::InvalidShape(format!(
                "row_len {} does not match shape {} at axis {}",
                self.row_len, self.shape, self.packed_axis
            )));
        }
        if self.words_per_row != row_len.div_ceil(64) {
            return Err(Error::InvalidShape(format!(
                "words_per_row {} != ceil({row_len}/64)",
                self.words_per_row
            )));
        }
        if self.words.len() != self.rows() * self.words_per_row {
            return Err(Error::InvalidShape(format!(
                "word buffer of {} does not match {} rows x {} words",
                self.words.len(),
                self.rows(),
                self.words_per_row
            )));
        }
        let tail = self.row_len % 64;
        if tail != 0 {
            let mask = !((1u64 << tail) - 1);
            for r in 0..self.rows() {
                if self.row(r)[self.words_per_row - 1] & mask != 0 {
                    return Err(Error::InvalidShape(format!(
                        "padding bits set in row {r}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Geometry of a (possibly grouped) 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::Geometry("groups must be >= 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Geometry("channel counts must be >= 1".into()));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(Error::Geometry(format!(
                "channels ({} in, {} out) not divisible by {} groups",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 {
            return Err(Error::Geometry("kernel dims and stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Input channels seen by each output channel.
    pub fn channels_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    /// Expected weight tensor shape (out, in/G, kh, kw).
    pub fn weight_shape(&self) -> Shape4 {
        Shape4::new(
            self.out_channels,
            self.channels_per_group(),
            self.kernel_h,
            self.kernel_w,
        )
    }

    /// Output spatial size for an input of (h, w).
    pub fn out_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = (h + 2 * self.padding).checked_sub(self.kernel_h).map(|v| v / self.stride + 1);
        let ow = (w + 2 * self.padding).checked_sub(self.kernel_w).map(|v| v / self.stride + 1);
        match (oh, ow) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((oh, ow)),
            _ => Err(Error::Geometry(format!(
                "kernel {}x{} does not fit {}x{} input with padding {}",
                self.kernel_h, self.kernel_w, h, w, self.padding
            ))),
        }
    }

    /// Multiply-accumulate count for one sample at the given input size.
    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let (oh, ow) = self.out_size(h, w)?;
        Ok((oh * ow * self.out_channels) as u64
            * (self.channels_per_group() * self.kernel_h * self.kernel_w) as u64)
    }
}

/// Learned per-output-channel scales applied after a binary convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleVector {
    pub alpha: Vec<f64>,
}

impl ScaleVector {
    pub fn ones(out_channels: usize) -> Self {
        ScaleVector {
            alpha: vec![1.0; out_channels],
        }
    }

    pub fn validate(&self, out_channels: usize) -> Result<()> {
        if self.alpha.len() != out_channels {
            return Err(Error::InvalidShape(format!(
                "scale vector of {} does not match {} output channels",
                self.alpha.len(),
                out_channels
            )));
        }
        if !self.alpha.iter().all(|a| a.is_finite()) {
            return Err(Error::Numeric("non-finite channel scale".into()));
        }
        Ok(())
    }
}

/// Sign with the fixed zero convention: sign(0) = +1.
#[inline]
pub fn sign_plus(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}
