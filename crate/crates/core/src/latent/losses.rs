//! Loss terms as functions of network outputs, each returning the value and
//! the gradient with respect to its inputs.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Sigmoid outputs are clamped to `[SIGMOID_EPS, 1 - SIGMOID_EPS]` before
/// taking logs.
pub const SIGMOID_EPS: f64 = 1e-7;

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `(log σ̂(a), d/da)` with σ̂ the clamped sigmoid.
fn log_sigmoid(a: f64) -> (f64, f64) {
    let s = sigmoid(a);
    if s < SIGMOID_EPS {
        (SIGMOID_EPS.ln(), 0.0)
    } else if s > 1.0 - SIGMOID_EPS {
        ((1.0 - SIGMOID_EPS).ln(), 0.0)
    } else {
        (s.ln(), 1.0 - s)
    }
}

/// `(log(1 - σ̂(a)), d/da)`.
fn log_one_minus_sigmoid(a: f64) -> (f64, f64) {
    let s = sigmoid(a);
    if s < SIGMOID_EPS {
        ((1.0 - SIGMOID_EPS).ln(), 0.0)
    } else if s > 1.0 - SIGMOID_EPS {
        (SIGMOID_EPS.ln(), 0.0)
    } else {
        ((1.0 - s).ln(), -s)
    }
}

/// Mean squared Euclidean distance between rows.
pub fn reconstruction(target: &Array2<f64>, output: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = target.nrows() as f64;
    let diff = output - target;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (value, diff * (2.0 / n))
}

/// Discriminator half of the adversarial objective:
/// `-(β/2)·mean[log σ(D(z_prior)) + log(1 - σ(D(z_encoded)))]`.
///
/// Inputs are the discriminator logits, one column.
pub fn discriminator(
    logits_prior: &Array2<f64>,
    logits_encoded: &Array2<f64>,
    beta: f64,
) -> (f64, Array2<f64>, Array2<f64>) {
    let n = logits_prior.nrows() as f64;
    let scale = -beta / (2.0 * n);
    let mut value = 0.0;
    let d_prior = logits_prior.mapv(|a| {
        let (v, g) = log_sigmoid(a);
        value += v;
        scale * g
    });
    let d_enc = logits_encoded.mapv(|a| {
        let (v, g) = log_one_minus_sigmoid(a);
        value += v;
        scale * g
    });
    (scale * value, d_prior, d_enc)
}

/// Encoder half of the adversarial objective: `-β·mean[log σ(D(z_encoded))]`.
pub fn encoder_adversarial(logits_encoded: &Array2<f64>, beta: f64) -> (f64, Array2<f64>) {
    let n = logits_encoded.nrows() as f64;
    let scale = -beta / n;
    let mut value = 0.0;
    let d = logits_encoded.mapv(|a| {
        let (v, g) = log_sigmoid(a);
        value += v;
        scale * g
    });
    (scale * value, d)
}

/// Latent consensus: mean over rows of `‖z_x - z_q‖²`.
pub fn consensus(z_x: &Array2<f64>, z_q: &Array2<f64>) -> (f64, Array2<f64>, Array2<f64>) {
    let n = z_x.nrows() as f64;
    let diff = z_x - z_q;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let d_x = &diff * (2.0 / n);
    let d_q = -&d_x;
    (value, d_x, d_q)
}

/// NT-Xent over `2N` latents where rows `2m` and `2m + 1` are positives
/// (0-based). The softmax denominator runs over every other row, the
/// positive included.
pub fn ntxent(z: &Array2<f64>, tau: f64) -> Result<(f64, Array2<f64>)> {
    let rows = z.nrows();
    if rows < 4 || rows % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "NT-Xent needs an even number of at least 4 latents, got {rows}"
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {tau}")));
    }
    let norms: Vec<f64> = z
        .axis_iter(Axis(0))
        .map(|r| r.dot(&r).sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&n| !(n > 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "latent {i} has zero norm; cosine similarity undefined"
        )));
    }
    let mut u = z.clone();
    for (mut row, &n) in u.axis_iter_mut(Axis(0)).zip(&norms) {
        row /= n;
    }
    let sim = u.dot(&u.t());

    let scale = 1.0 / rows as f64;
    let mut value = 0.0;
    let mut g = Array2::<f64>::zeros((rows, rows));
    let mut e = vec![0.0; rows];
    for i in 0..rows {
        let pos = i ^ 1;
        let s = sim.row(i);
        let max = s
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != i)
            .fold(f64::NEG_INFINITY, |acc, (_, &v)| acc.max(v));
        // ℓ = log Σ_{m≠i} exp((s_im - s_pos)/τ), evaluated relative to the max
        let mut sum = 0.0;
        for (m, (e_m, &s_m)) in e.iter_mut().zip(s.iter()).enumerate() {
            *e_m = if m == i { 0.0 } else { ((s_m - max) / tau).exp() };
            sum += *e_m;
        }
        value += (max - s[pos]) / tau + sum.ln();
        let mut g_row = g.row_mut(i);
        for (m, (g_m, e_m)) in g_row.iter_mut().zip(&e).enumerate() {
            if m != i {
                let indicator = if m == pos { 1.0 } else { 0.0 };
                *g_m = scale * (e_m / sum - indicator) / tau;
            }
        }
    }
    value *= scale;

    // s_im = u_i·u_m: dL/du = (G + Gᵀ)·u, then project out the radial part.
    let sym = &g + &g.t();
    let d_u = sym.dot(&u);
    let mut d_z = d_u;
    for ((mut row, u_row), &n) in d_z
        .axis_iter_mut(Axis(0))
        .zip(u.axis_iter(Axis(0)))
        .zip(&norms)
    {
        let radial = row.dot(&u_row);
        row.scaled_add(-radial, &u_row);
        row /= n;
    }
    Ok((value, d_z))
}
