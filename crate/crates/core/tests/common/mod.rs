//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use lsg_core::autodiff::{Tape, Tensor, Var};
use lsg_core::eval::Confusion;
use lsg_core::{Mask, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Mask {
    let p: f64 = rng.random_range(0.1..0.9);
    Mask::from_fn(w, h, |_, _| rng.random_bool(p))
}

/// Worst norm-wise relative error between the tape gradient and central
/// differences (step `h`) over every input of `op`. The op output is
/// contracted with fixed random weights so any output shape yields a
/// scalar loss.
pub fn gradient_error<F>(inputs: &[Tensor<f64>], seed: u64, h: f64, op: F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let loss_of = |vals: &[Tensor<f64>], want_grads: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.input(t.clone(), true)).collect();
        let out = op(&mut tape, &vars)?;
        let shape = tape.value(out).shape().to_vec();
        let mut r = rng(seed);
        let weights = random_tensor(&mut r, &shape, -1.0, 1.0);
        let wv = tape.input(weights, false);
        let prod = tape.mul(out, wv)?;
        let loss = tape.sum(prod);
        let value = tape.value(loss).data()[0];
        if !want_grads {
            return Ok((value, vec![]));
        }
        tape.backward(loss)?;
        let grads = vars
            .iter()
            .zip(vals)
            .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.numel()], |g| g.to_vec()))
            .collect();
        Ok((value, grads))
    };
    let (_, analytic) = loss_of(inputs, true)?;
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; t.numel()];
        for j in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            numeric[j] = (loss_of(&plus, false)?.0 - loss_of(&minus, false)?.0) / (2.0 * h);
        }
        worst = worst.max(relative_error(&analytic[i], &numeric));
    }
    Ok(worst)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Exhaustive k-NN: sort every other node by (squared distance, index).
pub fn knn_oracle(rows: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = rows.len();
    let mut out = Vec::with_capacity(n * k);
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, j)
            })
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(cand.iter().take(k).map(|c| c.1));
    }
    out
}

/// Scalar evaluation of `h_i = relu(Σ_j W·h_j + b)` over the listed
/// neighbours, `w` row-major `[out, in]`.
pub fn graph_conv_reference(h: &[Vec<f64>], neighbors: &[Vec<usize>], w: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    let c = b.len();
    neighbors
        .iter()
        .map(|nbrs| {
            (0..c)
                .map(|o| {
                    let mut acc = b[o];
                    for &j in nbrs {
                        for (i, hv) in h[j].iter().enumerate() {
                            acc += w[o][i] * hv;
                        }
                    }
                    acc.max(0.0)
                })
                .collect()
        })
        .collect()
}

pub fn confusion_oracle(pred: &Mask, truth: &Mask) -> Confusion {
    let mut c = Confusion::default();
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            match (pred.get(x, y), truth.get(x, y)) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
    }
    c
}

/// Mean-removed, biased autocorrelation `r(l) = Σ x_t x_{t+l} / Σ x_t²`.
pub fn autocorrelation(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let m = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - m).collect();
    let var: f64 = x.iter().map(|v| v * v).sum();
    (0..n)
        .map(|l| {
            if var == 0.0 {
                0.0
            } else {
                x[..n - l].iter().zip(&x[l..]).map(|(a, b)| a * b).sum::<f64>() / var
            }
        })
        .collect()
}
