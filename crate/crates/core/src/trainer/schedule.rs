use std::f64::consts::PI;

/// Cosine-decayed learning rate at step `t` of `total`: `lr0 * (1 + cos(pi t / T)) / 2`.
///
/// `t` is clamped to `total`, so the rate never goes below zero.
pub fn cosine_lr(t: usize, total: usize, lr0: f64) -> f64 {
    let total = total.max(1);
    let progress = t.min(total) as f64 / total as f64;
    lr0 * 0.5 * (1.0 + (PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-3), 1e-3);
        assert!(cosine_lr(100, 100, 1e-3).abs() < 1e-12);
        assert!((cosine_lr(50, 100, 1e-3) - 5e-4).abs() < 1e-12);
        assert!((cosine_lr(1, 2, 2.0) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded(total in 1usize..100_000, frac in 0.0f64..=1.0, lr0 in 1e-6f64..10.0) {
            let t = (frac * total as f64) as usize;
            let lr = cosine_lr(t, total, lr0);
            prop_assert!(lr >= 0.0 && lr <= lr0);
        }

        #[test]
        fn non_increasing(total in 2usize..10_000, t in 0usize..9_999) {
            let t = t % total;
            prop_assert!(cosine_lr(t + 1, total, 1.0) <= cosine_lr(t, total, 1.0));
        }
    }
}
