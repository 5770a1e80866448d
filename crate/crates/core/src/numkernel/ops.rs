use crate::error::{Error, Result};

/// Floor applied to probabilities before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidShape("softmax of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("softmax input not finite".into()));
    }
    Ok(softmax_unchecked(v))
}

pub(crate) fn softmax_unchecked(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    out
}

/// Backward pass of softmax: given `p = softmax(z)` and `dL/dp`, returns `dL/dz`.
pub fn softmax_backward(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter()
        .zip(grad_p)
        .map(|(pi, gi)| pi * (gi - inner))
        .collect()
}

/// `-log p[label]` with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy(p: &[f64], label: usize) -> Result<f64> {
    if label >= p.len() {
        return Err(Error::InvalidLabel {
            label,
            classes: p.len(),
        });
    }
    Ok(-p[label].max(PROB_FLOOR).ln())
}

/// Gradient of [`cross_entropy`] with respect to `p`.
pub fn cross_entropy_grad(p: &[f64], label: usize) -> Vec<f64> {
    let mut g = vec![0.0; p.len()];
    if p[label] > PROB_FLOOR {
        g[label] = -1.0 / p[label];
    }
    g
}

/// Cross-entropy taken directly on logits; returns (loss, dL/dlogits).
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let p = softmax(logits)?;
    let loss = cross_entropy(&p, label)?;
    let grad_p = cross_entropy_grad(&p, label);
    Ok((loss, softmax_backward(&p, &grad_p)))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Argmax with ties broken by the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_analytic() {
        let p = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_large_logits_stay_finite() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert_eq!(p[0], 1.0);
        assert!(p[1] < 1e-300);
    }

    #[test]
    fn softmax_empty_is_invalid_shape() {
        assert!(matches!(softmax(&[]), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn cross_entropy_cases() {
        assert!(cross_entropy(&[1.0, 0.0, 0.0], 0).unwrap() <= 1e-11);
        let u = [1.0 / 3.0; 3];
        assert!((cross_entropy(&u, 1).unwrap() - 3f64.ln()).abs() < 1e-12);
        let l = cross_entropy(&[0.7685, 0.2315], 0).unwrap();
        assert!((l - 0.7685f64.ln().abs()).abs() < 1e-15);
        assert!((l - 0.2634).abs() < 1e-4, "{l}");
        assert!(matches!(
            cross_entropy(&u, 3),
            Err(Error::InvalidLabel {
                label: 3,
                classes: 3
            })
        ));
    }

    #[test]
    fn cross_entropy_floor_keeps_loss_finite() {
        let l = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!((l - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.25; 4]), 0);
    }
}
