//! Straight-through estimators for the sign non-linearity.

use crate::bitcore::{binarize_pack, sign_plus, BitPlaneTensor, DenseTensor};
use crate::error::Result;

/// Forward sign with the zero→+1 convention. Returns the ±1 tensor and the
/// hard-tanh gradient mask 1_{|x| ≤ 1} consumed by [`sign_ste_backward`].
pub fn sign_ste_forward(x: &DenseTensor) -> (DenseTensor, Vec<f64>) {
    let values: Vec<f64> = x.values.iter().map(|&v| sign_plus(v)).collect();
    let mask: Vec<f64> = x
        .values
        .iter()
        .map(|&v| if v.abs() <= 1.0 { 1.0 } else { 0.0 })
        .collect();
    (
        DenseTensor {
            shape: x.shape,
            values,
            grad: None,
        },
        mask,
    )
}

/// Upstream gradient clipped by the saturation mask.
pub fn sign_ste_backward(dy: &DenseTensor, mask: &[f64]) -> DenseTensor {
    DenseTensor {
        shape: dy.shape,
        values: dy.values.iter().zip(mask).map(|(g, m)| g * m).collect(),
        grad: None,
    }
}

/// Weight quantizer: packs sign(θ) for the forward pass; the backward pass is
/// the identity (the latent clamp to [−1, 1] handles saturation).
pub fn weight_binarize_ste(latent: &DenseTensor, packed_axis: usize) -> Result<BitPlaneTensor> {
    binarize_pack(latent, packed_axis)
}
