//! Expert gating: channel-mean aggregation, winner-take-all forward and the
//! tempered-softmax backward.

use crate::bitcore::DenseTensor;
use crate::error::{Error, Result};

/// Gate decision for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GateState {
    /// Pre-gate expert logits.
    pub logits: Vec<f64>,
    /// Winning expert (lowest index on ties).
    pub selected: usize,
    /// Indicator vector of the winner.
    pub onehot: Vec<f64>,
}

/// Per-sample spatial channel means:
/// `out[b][c] = mean over (h, w) of x[b][c]`. Returned row-major (B × C).
pub fn channel_means(x: &DenseTensor) -> Vec<f64> {
    let (b, c, hw) = (x.shape.n, x.shape.c, x.shape.h * x.shape.w);
    let inv = 1.0 / hw as f64;
    let mut out = vec![0.0f64; b * c];
    for n in 0..b {
        for ch in 0..c {
            let base = x.index(n, ch, 0, 0);
            out[n * c + ch] = x.values[base..base + hw].iter().sum::<f64>() * inv;
        }
    }
    out
}

/// Aggregation: channel means projected by the learnable matrix
/// `proj` (C × N) to expert logits, one row per sample. No non-linearity.
pub fn aggregate_channel_means(x: &DenseTensor, proj: &[f64], n_experts: usize) -> Result<Vec<f64>> {
    let c = x.shape.c;
    if proj.len() != c * n_experts {
        return Err(Error::InvalidShape(format!(
            "gate projection is {} entries, expected {}x{}",
            proj.len(),
            c,
            n_experts
        )));
    }
    let means = channel_means(x);
    let mut z = vec![0.0f64; x.shape.n * n_experts];
    for b in 0..x.shape.n {
        for j in 0..n_experts {
            let mut acc = 0.0;
            for i in 0..c {
                acc += means[b * c + i] * proj[i * n_experts + j];
            }
            z[b * n_experts + j] = acc;
        }
    }
    Ok(z)
}

/// Winner-take-all over the logits; lowest index wins ties.
pub fn gate_forward(logits: &[f64]) -> Result<GateState> {
    if logits.is_empty() {
        return Err(Error::InvalidShape("gate over zero experts".into()));
    }
    let mut best = 0usize;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    let mut onehot = vec![0.0; logits.len()];
    onehot[best] = 1.0;
    Ok(GateState {
        logits: logits.to_vec(),
        selected: best,
        onehot,
    })
}

/// Numerically stable softmax of `z / tau`.
pub fn softmax_tempered(z: &[f64], tau: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| ((v - m) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Backward of the gate under the softmax surrogate: with
/// s = Softmax(z/τ), the Jacobian is J[i][j] = s_i(δ_ij − s_j)/τ and the
/// returned vector is Jᵀ·upstream.
pub fn gate_backward(z: &[f64], upstream: &[f64], tau: f64) -> Vec<f64> {
    debug_assert_eq!(z.len(), upstream.len());
    debug_assert!(tau > 0.0);
    let s = softmax_tempered(z, tau);
    let dot: f64 = s.iter().zip(upstream).map(|(si, u)| si * u).sum();
    s.iter()
        .zip(upstream)
        .map(|(si, u)| si * (u - dot) / tau)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcore::Shape4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn aggregation_with_identity_projection_returns_means() {
        let x = DenseTensor::from_values(
            Shape4::new(1, 2, 1, 2),
            vec![1.0, 1.0, -1.0, -1.0],
        )
        .unwrap();
        let proj = vec![1.0, 0.0, 0.0, 1.0]; // 2x2 identity
        assert_eq!(aggregate_channel_means(&x, &proj, 2).unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn aggregation_of_constant_input_is_column_sums() {
        let c_val = 0.75;
        let x = DenseTensor::from_values(Shape4::new(1, 3, 2, 2), vec![c_val; 12]).unwrap();
        let proj: Vec<f64> = (0..3 * 2).map(|i| i as f64).collect(); // columns sum to 6, 9
        let z = aggregate_channel_means(&x, &proj, 2).unwrap();
        assert!((z[0] - c_val * 6.0).abs() < 1e-12);
        assert!((z[1] - c_val * 9.0).abs() < 1e-12);
    }

    // Oracle: naive per-channel mean then matrix product.
    #[test]
    fn aggregation_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let shape = Shape4::new(3, 5, 4, 6);
        let x = DenseTensor::from_values(
            shape,
            (0..shape.len()).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let n_exp = 4;
        let proj: Vec<f64> = (0..5 * n_exp).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = aggregate_channel_means(&x, &proj, n_exp).unwrap();
        for b in 0..3 {
            for j in 0..n_exp {
                let mut want = 0.0;
                for c in 0..5 {
                    let mut mean = 0.0;
                    for h in 0..4 {
                        for w in 0..6 {
                            mean += x.at(b, c, h, w);
                        }
                    }
                    want += mean / 24.0 * proj[c * n_exp + j];
                }
                assert!((z[b * n_exp + j] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn winner_take_all_selects_argmax() {
        let g = gate_forward(&[0.1, -2.0, 3.5, 0.0]).unwrap();
        assert_eq!(g.selected, 2);
        assert_eq!(g.onehot, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let g = gate_forward(&[5.0, 5.0]).unwrap();
        assert_eq!(g.selected, 0);
    }

    #[test]
    fn empty_logits_error() {
        assert!(gate_forward(&[]).is_err());
    }

    proptest::proptest! {
        // Argmax invariance under positive affine maps of the logits.
        #[test]
        fn prop_gate_invariant_to_scale_and_shift(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..8usize);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s = rng.random_range(0.01..10.0f64);
            let c = rng.random_range(-3.0..3.0f64);
            let z2: Vec<f64> = z.iter().map(|v| s * v + c).collect();
            proptest::prop_assert_eq!(
                gate_forward(&z).unwrap().selected,
                gate_forward(&z2).unwrap().selected
            );
        }
    }

    #[test]
    fn symmetric_two_way_jacobian() {
        // z=[0,0], τ=1: s=[1/2,1/2]; J = [[1/4,-1/4],[-1/4,1/4]];
        // upstream [1,0] → [1/4, -1/4].
        let dz = gate_backward(&[0.0, 0.0], &[1.0, 0.0], 1.0);
        assert!((dz[0] - 0.25).abs() < 1e-12);
        assert!((dz[1] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_upstream_is_annihilated() {
        let dz = gate_backward(&[0.3, -1.0, 2.0], &[3.7, 3.7, 3.7], 0.5);
        for v in dz {
            assert!(v.abs() < 1e-12);
        }
    }

    // Oracle: central finite differences of Softmax(z/τ).
    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for &tau in &[0.02f64, 1.0, 5.0, 25.0] {
            for _ in 0..20 {
                let n = rng.random_range(2..6usize);
                // Keep logits modest relative to τ so exp() stays well-scaled
                // at τ=0.02.
                let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * tau.min(2.0)).collect();
                let upstream: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let got = gate_backward(&z, &upstream, tau);
                let h = 1e-6 * tau.max(1e-3);
                for j in 0..n {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[j] += h;
                    zm[j] -= h;
                    let sp = softmax_tempered(&zp, tau);
                    let sm = softmax_tempered(&zm, tau);
                    let mut fd = 0.0;
                    for i in 0..n {
                        fd += upstream[i] * (sp[i] - sm[i]) / (2.0 * h);
                    }
                    let tol = 1e-5 * fd.abs().max(1.0);
                    assert!(
                        (got[j] - fd).abs() <= tol,
                        "tau {tau} dim {j}: analytic {} vs fd {fd}",
                        got[j]
                    );
                }
            }
        }
    }
}
