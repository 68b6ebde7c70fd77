//! GEMM-backed 2-D convolution: im2col/col2im helpers shared by the real and
//! binary conv layers, plus the real-valued [`Conv2d`] node (stem,
//! downsampling paths, group-mix-free plumbing).

use rayon::prelude::*;

use super::gemm::{gemm, gemm_a_bt, gemm_at_b};
use super::{expect_shape, grad_tensor, Context, Layer, LayerKind, Param, ParamKind, Precision};
use crate::bitcore::{ConvGeometry, DenseTensor, Shape4};
use crate::error::{Error, Result};

/// Samples per work unit when fanning a batch out over threads. Fixed so the
/// floating-point reduction order never depends on the thread count.
pub(crate) const BATCH_CHUNK: usize = 8;

/// Writes the im2col matrix (K×P row-major, K = C_in/G·kh·kw, P = oh·ow) for
/// one (sample, group) into `col`. Out-of-bounds positions take `pad_value`.
pub fn im2col_sample(
    x: &DenseTensor,
    sample: usize,
    group: usize,
    geom: &ConvGeometry,
    pad_value: f64,
    col: &mut [f64],
) {
    let cpg = geom.channels_per_group();
    let (h, w) = (x.shape.h, x.shape.w);
    let (oh, ow) = geom.out_size(h, w).expect("validated geometry");
    let p_total = oh * ow;
    debug_assert_eq!(col.len(), cpg * geom.kernel_h * geom.kernel_w * p_total);

    let mut k_row = 0usize;
    for c in 0..cpg {
        let ch = group * cpg + c;
        for ky in 0..geom.kernel_h {
            for kx in 0..geom.kernel_w {
                let dst = &mut col[k_row * p_total..(k_row + 1) * p_total];
                let mut p = 0usize;
                for oy in 0..oh {
                    let iy = (oy * geom.stride + ky) as i64 - geom.padding as i64;
                    if iy < 0 || iy >= h as i64 {
                        dst[p..p + ow].iter_mut().for_each(|v| *v = pad_value);
                        p += ow;
                        continue;
                    }
                    let row_base = x.index(sample, ch, iy as usize, 0);
                    for ox in 0..ow {
                        let ix = (ox * geom.stride + kx) as i64 - geom.padding as i64;
                        dst[p] = if ix < 0 || ix >= w as i64 {
                            pad_value
                        } else {
                            x.values[row_base + ix as usize]
                        };
                        p += 1;
                    }
                }
                k_row += 1;
            }
        }
    }
}

/// Scatter-adds an im2col-layout gradient back onto `dx` for one
/// (sample, group); padding cells are dropped.
pub fn col2im_add(
    dcol: &[f64],
    sample: usize,
    group: usize,
    geom: &ConvGeometry,
    dx: &mut DenseTensor,
) {
    let cpg = geom.channels_per_group();
    let (h, w) = (dx.shape.h, dx.shape.w);
    let (oh, ow) = geom.out_size(h, w).expect("validated geometry");
    let p_total = oh * ow;

    let mut k_row = 0usize;
    for c in 0..cpg {
        let ch = group * cpg + c;
        for ky in 0..geom.kernel_h {
            for kx in 0..geom.kernel_w {
                let src = &dcol[k_row * p_total..(k_row + 1) * p_total];
                let mut p = 0usize;
                for oy in 0..oh {
                    let iy = (oy * geom.stride + ky) as i64 - geom.padding as i64;
                    if iy < 0 || iy >= h as i64 {
                        p += ow;
                        continue;
                    }
                    let row_base = dx.index(sample, ch, iy as usize, 0);
                    for ox in 0..ow {
                        let ix = (ox * geom.stride + kx) as i64 - geom.padding as i64;
                        if ix >= 0 && ix < w as i64 {
                            dx.values[row_base + ix as usize] += src[p];
                        }
                        p += 1;
                    }
                }
                k_row += 1;
            }
        }
    }
}

/// Per-(sample, group) forward: y_g = W_g · col. `weights` is the full
/// (O × K) row-major weight matrix.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward_sample(
    x: &DenseTensor,
    weights: &[f64],
    geom: &ConvGeometry,
    pad_value: f64,
    sample: usize,
    y_sample: &mut [f64],
    col: &mut [f64],
    precision: Precision,
) {
    let cpg = geom.channels_per_group();
    let k_len = cpg * geom.kernel_h * geom.kernel_w;
    let opg = geom.out_channels / geom.groups;
    let (oh, ow) = geom.out_size(x.shape.h, x.shape.w).expect("validated geometry");
    let p_total = oh * ow;
    for g in 0..geom.groups {
        im2col_sample(x, sample, g, geom, pad_value, col);
        let w_g = &weights[g * opg * k_len..(g + 1) * opg * k_len];
        let y_g = &mut y_sample[g * opg * p_total..(g + 1) * opg * p_total];
        gemm(opg, k_len, p_total, w_g, col, 0.0, y_g, precision);
    }
}

/// Per-(sample, group) input gradient: dcol = W_gᵀ · dy_g, then col2im.
pub(crate) fn conv_backward_dx_sample(
    dy: &DenseTensor,
    weights: &[f64],
    geom: &ConvGeometry,
    sample: usize,
    dx: &mut DenseTensor,
    dcol: &mut [f64],
    precision: Precision,
) {
    let cpg = geom.channels_per_group();
    let k_len = cpg * geom.kernel_h * geom.kernel_w;
    let opg = geom.out_channels / geom.groups;
    let (oh, ow) = geom.out_size(dx.shape.h, dx.shape.w).expect("validated geometry");
    let p_total = oh * ow;
    for g in 0..geom.groups {
        let w_g = &weights[g * opg * k_len..(g + 1) * opg * k_len];
        let dy_g = &dy.values[dy.index(sample, g * opg, 0, 0)..dy.index(sample, g * opg, 0, 0) + opg * p_total];
        gemm_at_b(k_len, opg, p_total, w_g, dy_g, 0.0, dcol, precision);
        col2im_add(dcol, sample, g, geom, dx);
    }
}

/// Per-(sample) weight gradient accumulated into `dw` (full O × K layout):
/// dW_g += dy_g · colᵀ.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward_dw_sample(
    x: &DenseTensor,
    dy: &DenseTensor,
    geom: &ConvGeometry,
    pad_value: f64,
    sample: usize,
    dw: &mut [f64],
    col: &mut [f64],
    precision: Precision,
) {
    let cpg = geom.channels_per_group();
    let k_len = cpg * geom.kernel_h * geom.kernel_w;
    let opg = geom.out_channels / geom.groups;
    let (oh, ow) = geom.out_size(x.shape.h, x.shape.w).expect("validated geometry");
    let p_total = oh * ow;
    for g in 0..geom.groups {
        im2col_sample(x, sample, g, geom, pad_value, col);
        let dy_base = dy.index(sample, g * opg, 0, 0);
        let dy_g = &dy.values[dy_base..dy_base + opg * p_total];
        let dw_g = &mut dw[g * opg * k_len..(g + 1) * opg * k_len];
        gemm_a_bt(opg, p_total, k_len, dy_g, col, 1.0, dw_g, precision);
    }
}

/// Batched grouped convolution forward, parallel over fixed sample chunks.
pub(crate) fn conv_forward_batch(
    x: &DenseTensor,
    weights: &[f64],
    geom: &ConvGeometry,
    pad_value: f64,
    precision: Precision,
) -> Result<DenseTensor> {
    geom.validate()?;
    if x.shape.c != geom.in_channels {
        return Err(Error::Geometry(format!(
            "input has {} channels, geometry expects {}",
            x.shape.c, geom.in_channels
        )));
    }
    let (oh, ow) = geom.out_size(x.shape.h, x.shape.w)?;
    let out_shape = Shape4::new(x.shape.n, geom.out_channels, oh, ow);
    let mut y = DenseTensor::zeros(out_shape);
    let per_sample = geom.out_channels * oh * ow;
    let k_len = geom.channels_per_group() * geom.kernel_h * geom.kernel_w;
    let col_len = k_len * oh * ow;

    y.values
        .par_chunks_mut(per_sample * BATCH_CHUNK)
        .enumerate()
        .for_each(|(chunk_idx, out_chunk)| {
            let mut col = vec![0.0f64; col_len];
            for (i, y_sample) in out_chunk.chunks_mut(per_sample).enumerate() {
                let n = chunk_idx * BATCH_CHUNK + i;
                conv_forward_sample(x, weights, geom, pad_value, n, y_sample, &mut col, precision);
            }
        });
    Ok(y)
}

/// Batched input gradient, parallel over fixed sample chunks.
pub(crate) fn conv_backward_dx_batch(
    dy: &DenseTensor,
    weights: &[f64],
    geom: &ConvGeometry,
    in_shape: Shape4,
    precision: Precision,
) -> DenseTensor {
    let mut dx = DenseTensor::zeros(in_shape);
    let per_sample = in_shape.c * in_shape.h * in_shape.w;
    let k_len = geom.channels_per_group() * geom.kernel_h * geom.kernel_w;
    let (oh, ow) = geom.out_size(in_shape.h, in_shape.w).expect("validated geometry");
    let dcol_len = k_len * oh * ow;

    let dx_shape = dx.shape;
    dx.values
        .par_chunks_mut(per_sample * BATCH_CHUNK)
        .enumerate()
        .for_each(|(chunk_idx, dx_chunk)| {
            let mut dcol = vec![0.0f64; dcol_len];
            let mut local = DenseTensor::zeros(Shape4::new(1, dx_shape.c, dx_shape.h, dx_shape.w));
            for (i, dx_sample) in dx_chunk.chunks_mut(per_sample).enumerate() {
                let n = chunk_idx * BATCH_CHUNK + i;
                local.values.iter_mut().for_each(|v| *v = 0.0);
                // Reuse the per-sample path with a single-sample view.
                for g in 0..geom.groups {
                    let opg = geom.out_channels / geom.groups;
                    let w_g = &weights[g * opg * k_len..(g + 1) * opg * k_len];
                    let dy_base = dy.index(n, g * opg, 0, 0);
                    let dy_g = &dy.values[dy_base..dy_base + opg * oh * ow];
                    gemm_at_b(k_len, opg, oh * ow, w_g, dy_g, 0.0, &mut dcol, precision);
                    col2im_add(&dcol, 0, g, geom, &mut local);
                }
                dx_sample.copy_from_slice(&local.values);
            }
        });
    dx
}

/// Batched weight gradient: per-chunk partials reduced in fixed chunk order.
pub(crate) fn conv_backward_dw_batch(
    x: &DenseTensor,
    dy: &DenseTensor,
    geom: &ConvGeometry,
    pad_value: f64,
    dw: &mut [f64],
    precision: Precision,
) {
    let k_len = geom.channels_per_group() * geom.kernel_h * geom.kernel_w;
    let col_len = k_len * {
        let (oh, ow) = geom.out_size(x.shape.h, x.shape.w).expect("validated geometry");
        oh * ow
    };
    let n_samples = x.shape.n;
    let chunks: Vec<Vec<f64>> = (0..n_samples.div_ceil(BATCH_CHUNK))
        .into_par_iter()
        .map(|chunk_idx| {
            let mut partial = vec![0.0f64; dw.len()];
            let mut col = vec![0.0f64; col_len];
            let lo = chunk_idx * BATCH_CHUNK;
            let hi = (lo + BATCH_CHUNK).min(n_samples);
            for n in lo..hi {
                conv_backward_dw_sample(x, dy, geom, pad_value, n, &mut partial, &mut col, precision);
            }
            partial
        })
        .collect();
    for partial in chunks {
        for (acc, v) in dw.iter_mut().zip(&partial) {
            *acc += v;
        }
    }
}

/// Real-valued grouped convolution layer (no bias; a norm layer follows it
/// everywhere this net uses one).
pub struct Conv2d {
    pub geom: ConvGeometry,
    pub weight: Param,
    cache_x: Option<DenseTensor>,
    precision: Precision,
}

impl Conv2d {
    pub fn new(name: &str, geom: ConvGeometry, init: Vec<f64>) -> Self {
        let ws = geom.weight_shape();
        Conv2d {
            geom,
            weight: Param::new(
                format!("{name}.weight"),
                vec![ws.n, ws.c, ws.h, ws.w],
                init,
                ParamKind::Real,
            ),
            cache_x: None,
            precision: Precision::Exact,
        }
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &DenseTensor, ctx: &Context) -> Result<DenseTensor> {
        self.precision = ctx.precision;
        let y = conv_forward_batch(x, &self.weight.data, &self.geom, 0.0, ctx.precision)?;
        self.cache_x = if ctx.training { Some(x.clone()) } else { None };
        Ok(y)
    }

    fn backward(&mut self, dy: &DenseTensor) -> Result<DenseTensor> {
        let x = self
            .cache_x
            .take()
            .ok_or_else(|| Error::Contract("Conv2d backward without cached forward".into()))?;
        conv_backward_dw_batch(&x, dy, &self.geom, 0.0, &mut self.weight.grad, self.precision);
        Ok(conv_backward_dx_batch(dy, &self.weight.data, &self.geom, x.shape, self.precision))
    }

    fn out_shape(&self, input: Shape4) -> Result<Shape4> {
        expect_shape(
            Shape4::new(input.n, self.geom.in_channels, input.h, input.w),
            input,
            "Conv2d",
        )?;
        let (oh, ow) = self.geom.out_size(input.h, input.w)?;
        Ok(Shape4::new(input.n, self.geom.out_channels, oh, ow))
    }

    fn kind(&self) -> LayerKind {
        LayerKind::RealConv
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
    }

    fn clear_cache(&mut self) {
        self.cache_x = None;
    }
}
