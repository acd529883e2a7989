use alloc::vec::Vec;

use super::tensor::{gemm, MatRef, Tensor};
use crate::error::{invalid, Result};
use crate::math;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-12;

/// `y = W x + b`. `x` is either a vector of length `in` or an `m x in`
/// matrix whose rows are transformed independently; `W` is `out x in`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if w.rank() != 2 || b.rank() != 1 {
        return Err(invalid!("linear expects a matrix weight and a vector bias"));
    }
    let (out, inp) = (w.dims[0], w.dims[1]);
    if b.dims[0] != out || x.cols() != inp {
        return Err(invalid!(
            "linear shape mismatch: x {:?}, W {:?}, b {:?}",
            x.dims,
            w.dims,
            b.dims
        ));
    }
    let rows = x.rows();
    let mut y: Vec<f64> = (0..rows).flat_map(|_| b.data.iter().copied()).collect();
    gemm(1.0, MatRef::new(&x.data, rows, inp), MatRef::new(&w.data, out, inp).t(), 1.0, &mut y);
    let dims = if x.rank() == 1 { alloc::vec![out] } else { alloc::vec![rows, out] };
    Tensor::new(dims, y)
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor { dims: x.dims.clone(), data: x.data.iter().map(|&v| math::relu(v)).collect() }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    Tensor { dims: x.dims.clone(), data: x.data.iter().map(|&v| math::sigmoid(v)).collect() }
}

fn check_lengths(probs: &[f64], labels: &[f64]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(invalid!("{} predictions but {} labels", probs.len(), labels.len()));
    }
    if probs.is_empty() {
        return Err(invalid!("loss over zero edges"));
    }
    Ok(())
}

/// Mean weighted binary cross-entropy; `pos_weight` scales the positive term.
pub fn bce_loss(probs: &[f64], labels: &[f64], pos_weight: f64) -> Result<f64> {
    check_lengths(probs, labels)?;
    // compensated sum keeps the mean accurate to a few ulps of the result
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (&p, &y) in probs.iter().zip(labels) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let term = -(pos_weight * y * math::ln(p) + (1.0 - y) * math::ln_1p(-p));
        let t = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
        sum = t;
    }
    Ok((sum + comp) / probs.len() as f64)
}

/// Derivative of [`bce_loss`] with respect to each probability. Clamped
/// entries get a zero derivative, matching the clamp's flat region.
pub fn bce_loss_grad(probs: &[f64], labels: &[f64], pos_weight: f64) -> Result<Vec<f64>> {
    check_lengths(probs, labels)?;
    let scale = 1.0 / probs.len() as f64;
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if p < PROB_CLAMP || p > 1.0 - PROB_CLAMP {
                0.0
            } else {
                -(pos_weight * y / p - (1.0 - y) / (1.0 - p)) * scale
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn linear_identity_and_bias() {
        let x = Tensor::vector(vec![0.3, -1.2]);
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zero = Tensor::vector(vec![0.0, 0.0]);
        assert_eq!(linear(&x, &eye, &zero).unwrap(), x);
        let b = Tensor::vector(vec![0.5, 2.0]);
        assert_eq!(linear(&Tensor::vector(vec![0.0, 0.0]), &eye, &b).unwrap(), b);
    }

    #[test]
    fn linear_hand_computed() {
        let w = Tensor::matrix(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
        let b = Tensor::vector(vec![0.1, 0.2, 0.3]);
        let y = linear(&Tensor::vector(vec![2.0, -1.0]), &w, &b).unwrap();
        let expect = [1.0 * 2.0 - 2.0 + 0.1, -2.0 - 0.5 + 0.2, -3.0 + 0.3];
        for (a, e) in y.data.iter().zip(expect) {
            assert!((a - e).abs() < 1e-15);
        }
        // batched rows give the same answer row by row
        let xs = Tensor::matrix(2, 2, vec![2.0, -1.0, 2.0, -1.0]).unwrap();
        let ys = linear(&xs, &w, &b).unwrap();
        assert_eq!(&ys.data[..3], &y.data[..]);
        assert_eq!(&ys.data[3..], &y.data[..]);
    }

    #[test]
    fn linear_shape_errors() {
        let w = Tensor::matrix(3, 2, vec![0.0; 6]).unwrap();
        assert!(linear(&Tensor::vector(vec![1.0; 3]), &w, &Tensor::vector(vec![0.0; 3])).is_err());
        assert!(linear(&Tensor::vector(vec![1.0; 2]), &w, &Tensor::vector(vec![0.0; 2])).is_err());
    }

    #[test]
    fn activations() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0, -800.0]);
        assert_eq!(relu(&x).data, vec![0.0, 0.0, 2.0, 0.0]);
        let s = sigmoid(&x);
        assert_eq!(s.data[1], 0.5);
        assert!(s.data[3].is_finite() && s.data[3] >= 0.0);
    }

    #[test]
    fn bce_values() {
        let l = bce_loss(&[0.5, 0.5, 0.5], &[1.0, 0.0, 1.0], 1.0).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-15);
        let l = bce_loss(&[0.9], &[1.0], 1.0).unwrap();
        assert!((l - 0.105_360_515_657_826_3).abs() < 1e-12);
        let perfect = bce_loss(&[1.0, 0.0], &[1.0, 0.0], 1.0).unwrap();
        assert!(perfect < 1e-11);
        assert!(bce_loss(&[0.5], &[1.0, 0.0], 1.0).is_err());
        let weighted = bce_loss(&[0.9], &[1.0], 3.0).unwrap();
        assert!((weighted - 3.0 * 0.105_360_515_657_826_3).abs() < 1e-12);
    }

    #[test]
    fn bce_grad_matches_difference_quotient() {
        let probs = [0.2, 0.7, 0.55];
        let labels = [1.0, 0.0, 1.0];
        let g = bce_loss_grad(&probs, &labels, 2.0).unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut up = probs;
            up[i] += h;
            let mut dn = probs;
            dn[i] -= h;
            let num = (bce_loss(&up, &labels, 2.0).unwrap() - bce_loss(&dn, &labels, 2.0).unwrap()) / (2.0 * h);
            assert!((num - g[i]).abs() < 1e-7);
        }
    }
}
