//! Deterministic float convolution: correctness oracle for the packed kernel
//! and the compute path for real-valued stem/classifier layers.

use super::{ConvGeometry, DenseTensor, Shape4};
use crate::error::{Error, Result};

/// Grouped 2-D cross-correlation with zero padding. Accumulates in f64 in
/// row-major receptive-field order (channel, kernel row, kernel col), fixing
/// a deterministic accumulation order.
pub fn conv2d_reference(x: &DenseTensor, w: &DenseTensor, geom: &ConvGeometry) -> Result<DenseTensor> {
    conv2d_reference_with_pad(x, w, geom, 0.0)
}

/// Same as [`conv2d_reference`] with an explicit padding value; binary paths
/// pad with −1.0, real paths with 0.0.
pub fn conv2d_reference_with_pad(
    x: &DenseTensor,
    w: &DenseTensor,
    geom: &ConvGeometry,
    pad_value: f64,
) -> Result<DenseTensor> {
    geom.validate()?;
    x.shape.validate()?;
    if x.shape.c != geom.in_channels {
        return Err(Error::Geometry(format!(
            "input has {} channels, geometry expects {}",
            x.shape.c, geom.in_channels
        )));
    }
    if w.shape != geom.weight_shape() {
        return Err(Error::Geometry(format!(
            "weights must be {}, got {}",
            geom.weight_shape(),
            w.shape
        )));
    }
    let (oh, ow) = geom.out_size(x.shape.h, x.shape.w)?;
    let cpg = geom.channels_per_group();
    let opg = geom.out_channels / geom.groups;
    let (h, wd) = (x.shape.h as i64, x.shape.w as i64);

    let mut out = DenseTensor::zeros(Shape4::new(x.shape.n, geom.out_channels, oh, ow));
    for n in 0..x.shape.n {
        for o in 0..geom.out_channels {
            let g = o / opg;
            for oy in 0..oh {
                for ox in 0..ow {
                    let y0 = (oy * geom.stride) as i64 - geom.padding as i64;
                    let x0 = (ox * geom.stride) as i64 - geom.padding as i64;
                    let mut acc = 0.0f64;
                    for c in 0..cpg {
                        for ky in 0..geom.kernel_h {
                            let iy = y0 + ky as i64;
                            for kx in 0..geom.kernel_w {
                                let ix = x0 + kx as i64;
                                let xv = if iy < 0 || iy >= h || ix < 0 || ix >= wd {
                                    pad_value
                                } else {
                                    x.at(n, g * cpg + c, iy as usize, ix as usize)
                                };
                                acc += xv * w.at(o, c, ky, kx);
                            }
                        }
                    }
                    *out.at_mut(n, o, oy, ox) = acc;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Independent oracle: same convolution written as six nested loops over
    // the output tensor with inline bounds checks, no shared helpers.
    fn naive_six_loop(x: &DenseTensor, w: &DenseTensor, geom: &ConvGeometry) -> Vec<f64> {
        let (oh, ow) = geom.out_size(x.shape.h, x.shape.w).unwrap();
        let cpg = geom.in_channels / geom.groups;
        let opg = geom.out_channels / geom.groups;
        let mut out = vec![0.0f64; x.shape.n * geom.out_channels * oh * ow];
        for n in 0..x.shape.n {
            for o in 0..geom.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for c in 0..cpg {
                            let ci = (o / opg) * cpg + c;
                            for ky in 0..geom.kernel_h {
                                for kx in 0..geom.kernel_w {
                                    let iy = (oy * geom.stride + ky) as i64 - geom.padding as i64;
                                    let ix = (ox * geom.stride + kx) as i64 - geom.padding as i64;
                                    if iy >= 0
                                        && (iy as usize) < x.shape.h
                                        && ix >= 0
                                        && (ix as usize) < x.shape.w
                                    {
                                        acc += x.at(n, ci, iy as usize, ix as usize)
                                            * w.at(o, c, ky, kx);
                                    }
                                }
                            }
                        }
                        out[((n * geom.out_channels + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_1x1_kernel_passes_input_through() {
        let x = DenseTensor::from_values(
            Shape4::new(1, 1, 2, 3),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        let w = DenseTensor::from_values(Shape4::new(1, 1, 1, 1), vec![1.0]).unwrap();
        let geom = ConvGeometry {
            in_channels: 1,
            out_channels: 1,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
            groups: 1,
        };
        let y = conv2d_reference(&x, &w, &geom).unwrap();
        assert_eq!(y.values, x.values);
    }

    #[test]
    fn delta_kernel_shifts_input() {
        // 2x2 kernel with a 1 at the top-left selects x[oy][ox].
        let x = DenseTensor::from_values(
            Shape4::new(1, 1, 3, 3),
            (1..=9).map(f64::from).collect(),
        )
        .unwrap();
        let w = DenseTensor::from_values(Shape4::new(1, 1, 2, 2), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let geom = ConvGeometry {
            in_channels: 1,
            out_channels: 1,
            kernel_h: 2,
            kernel_w: 2,
            stride: 1,
            padding: 0,
            groups: 1,
        };
        let y = conv2d_reference(&x, &w, &geom).unwrap();
        assert_eq!(y.values, vec![1.0, 2.0, 4.0, 5.0]);
    }

    #[test]
    fn matches_naive_six_loop_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..50 {
            let groups = [1usize, 2][rng.random_range(0..2)];
            let geom = ConvGeometry {
                in_channels: groups * rng.random_range(1..=4usize),
                out_channels: groups * rng.random_range(1..=4usize),
                kernel_h: rng.random_range(1..=3usize),
                kernel_w: rng.random_range(1..=3usize),
                stride: rng.random_range(1..=2usize),
                padding: rng.random_range(0..=1usize),
                groups,
            };
            let h = rng.random_range(geom.kernel_h..=geom.kernel_h + 5);
            let wd = rng.random_range(geom.kernel_w..=geom.kernel_w + 5);
            if geom.out_size(h, wd).is_err() {
                continue;
            }
            let xs = Shape4::new(rng.random_range(1..=2usize), geom.in_channels, h, wd);
            let x = DenseTensor::from_values(
                xs,
                (0..xs.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let ws = geom.weight_shape();
            let w = DenseTensor::from_values(
                ws,
                (0..ws.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let got = conv2d_reference(&x, &w, &geom).unwrap();
            let want = naive_six_loop(&x, &w, &geom);
            for (i, (a, b)) in got.values.iter().zip(&want).enumerate() {
                let tol = 1e-5 * b.abs().max(1.0);
                assert!((a - b).abs() <= tol, "case {case} idx {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bad_geometry_is_rejected() {
        let x = DenseTensor::zeros(Shape4::new(1, 3, 4, 4));
        let w = DenseTensor::zeros(Shape4::new(2, 3, 3, 3));
        let geom = ConvGeometry {
            in_channels: 3,
            out_channels: 2,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding: 0,
            groups: 2, // 3 % 2 != 0
        };
        assert!(conv2d_reference(&x, &w, &geom).is_err());
    }
}
