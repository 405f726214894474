//! Test-only oracles, written independently of the library's code paths.
#![allow(dead_code, clippy::needless_range_loop)]

use finedesign::trainer::MlpParams;

/// Naive forward pass plus softmax cross-entropy, averaged over the batch.
/// Uses plain `exp`/`ln` of a max-shifted softmax, nothing from the library.
pub fn naive_mean_loss(params: &MlpParams, batch: &[(Vec<f64>, usize)]) -> f64 {
    let mut total = 0.0;
    for (x, label) in batch {
        let mut a = x.clone();
        for (li, layer) in params.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs];
            for o in 0..layer.outputs {
                let mut acc = layer.bias[o];
                for i in 0..layer.inputs {
                    acc += layer.weights[o * layer.inputs + i] * a[i];
                }
                z[o] = acc;
            }
            if li + 1 < params.layers.len() {
                for v in &mut z {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            a = z;
        }
        let max = a.iter().cloned().fold(f64::MIN, f64::max);
        let denom: f64 = a.iter().map(|v| (v - max).exp()).sum();
        total += -((a[*label] - max) - denom.ln());
    }
    total / batch.len() as f64
}

/// Every parameter of `params`, flattened layer by layer (weights then bias).
pub fn flatten(params: &MlpParams) -> Vec<f64> {
    params
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
        .collect()
}

pub fn set_flat(params: &mut MlpParams, idx: usize, value: f64) {
    let mut i = idx;
    for l in &mut params.layers {
        if i < l.weights.len() {
            l.weights[i] = value;
            return;
        }
        i -= l.weights.len();
        if i < l.bias.len() {
            l.bias[i] = value;
            return;
        }
        i -= l.bias.len();
    }
    panic!("index out of range");
}

/// Central finite-difference gradient of the naive loss.
pub fn finite_difference_grad(params: &MlpParams, batch: &[(Vec<f64>, usize)], h: f64) -> Vec<f64> {
    let base = flatten(params);
    let mut work = params.clone();
    (0..base.len())
        .map(|i| {
            set_flat(&mut work, i, base[i] + h);
            let up = naive_mean_loss(&work, batch);
            set_flat(&mut work, i, base[i] - h);
            let down = naive_mean_loss(&work, batch);
            set_flat(&mut work, i, base[i]);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero entries from
/// turning rounding noise into huge relative errors.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
