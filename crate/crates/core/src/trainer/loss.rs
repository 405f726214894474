/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Cross-entropy of `softmax(logits)` against `label`, and its gradient with
/// respect to the logits (`softmax - onehot`).
///
/// The loss is computed as `logsumexp(z - max) - (z[label] - max)`, which stays
/// finite for arbitrarily large logit gaps.
pub fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; logits.len()];
    let loss = softmax_xent_into(logits, label, &mut grad);
    (loss, grad)
}

pub(crate) fn softmax_xent_into(logits: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    debug_assert!(label < logits.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (g, &z) in grad.iter_mut().zip(logits) {
        *g = (z - max).exp();
        sum += *g;
    }
    for g in grad.iter_mut() {
        *g /= sum;
    }
    grad[label] -= 1.0;
    sum.ln() - (logits[label] - max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits() {
        let (loss, grad) = softmax_xent(&[0.0, 0.0], 0);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(grad, vec![-0.5, 0.5]);
    }

    #[test]
    fn closed_form_two_class() {
        // softmax(1, 0) = (e/(1+e), 1/(1+e))
        let p1 = 1.0 / (1.0 + (-1.0f64).exp());
        let (loss, grad) = softmax_xent(&[1.0, 0.0], 0);
        assert!((grad[0] - (p1 - 1.0)).abs() < 1e-15);
        assert!((grad[1] - (1.0 - p1)).abs() < 1e-15);
        assert!((grad[1] - 0.268941).abs() < 1e-6);
        assert!((loss + p1.ln()).abs() < 1e-15);

        // Central finite differences on the loss.
        let h = 1e-6;
        for j in 0..2 {
            let mut up = [1.0, 0.0];
            let mut dn = [1.0, 0.0];
            up[j] += h;
            dn[j] -= h;
            let fd = (softmax_xent(&up, 0).0 - softmax_xent(&dn, 0).0) / (2.0 * h);
            assert!((fd - grad[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn large_gap_does_not_overflow() {
        let (loss, grad) = softmax_xent(&[1000.0, 0.0], 1);
        assert!(loss.is_finite());
        assert!((loss - 1000.0).abs() < 1e-9);
        assert!(grad.iter().all(|g| g.is_finite()));
        assert!((grad[0] - 1.0).abs() < 1e-12 && (grad[1] + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn shift_invariance(
            logits in prop::collection::vec(-20.0f64..20.0, 2..6),
            label_seed in 0usize..100,
            c in -50.0f64..50.0,
        ) {
            let label = label_seed % logits.len();
            let shifted: Vec<f64> = logits.iter().map(|z| z + c).collect();
            let (l0, g0) = softmax_xent(&logits, label);
            let (l1, g1) = softmax_xent(&shifted, label);
            prop_assert!((l0 - l1).abs() <= 1e-12 * l0.abs().max(1.0));
            for (a, b) in g0.iter().zip(&g1) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn softmax_is_a_distribution(logits in prop::collection::vec(-700.0f64..700.0, 1..8)) {
            let p = softmax(&logits);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
