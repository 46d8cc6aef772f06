//! Reference implementations written independently of the library code,
//! shared by the integration tests.

#![allow(dead_code)]

use ndarray::Array2;
use retarget_core::latent::{Architecture, Domain, Mlp, NetId, NetworkSet};
use retarget_core::rng;
use retarget_core::robot::{JointConfig, Landmark, RobotModel};

pub type Mat4 = [[f64; 4]; 4];

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn translation(t: [f64; 3]) -> Mat4 {
    let mut m = identity();
    for i in 0..3 {
        m[i][3] = t[i];
    }
    m
}

/// Rodrigues: `R = I + sin θ K + (1 - cos θ) K²`.
fn rotation(axis: [f64; 3], angle: f64) -> Mat4 {
    let [x, y, z] = axis;
    let k = [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]];
    let mut k2 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for l in 0..3 {
                k2[i][j] += k[i][l] * k[l][j];
            }
        }
    }
    let (s, c) = angle.sin_cos();
    let mut m = identity();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] += s * k[i][j] + (1.0 - c) * k2[i][j];
        }
    }
    m
}

/// World transform of a named link by recursive 4×4 products.
pub fn link_transform(model: &RobotModel, q: &JointConfig, name: &str) -> Mat4 {
    let d = model.description();
    if let Some((j, spec)) = d.joints.iter().enumerate().find(|(_, s)| s.name == name) {
        let parent = link_transform(model, q, &spec.parent);
        let local = mat_mul(&rotation(spec.axis, q.0[j]), &translation(spec.origin));
        return mat_mul(&parent, &local);
    }
    if let Some(f) = d.frames.iter().find(|f| f.name == name) {
        return mat_mul(&link_transform(model, q, &f.parent), &translation(f.origin));
    }
    identity()
}

pub fn oracle_landmarks(model: &RobotModel, q: &JointConfig) -> [[f64; 3]; 8] {
    Landmark::ALL.map(|lm| {
        let m = link_transform(model, q, &model.description().landmarks[&lm]);
        [m[0][3], m[1][3], m[2][3]]
    })
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] + t * (b[i] - a[i]))
}

/// Minimum distance over an `n × n` grid of segment parameters.
pub fn grid_segment_distance(p: [[f64; 3]; 2], q: [[f64; 3]; 2], n: usize) -> f64 {
    let mut best = f64::INFINITY;
    let qs: Vec<[f64; 3]> = (0..n).map(|j| lerp(q[0], q[1], j as f64 / (n - 1) as f64)).collect();
    for i in 0..n {
        let a = lerp(p[0], p[1], i as f64 / (n - 1) as f64);
        for b in &qs {
            let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
            best = best.min(d2);
        }
    }
    best.sqrt()
}

/// Scalar re-implementation of the forward pass.
pub fn mlp_oracle(net: &Mlp, input: &[f64]) -> Vec<f64> {
    let mut h = input.to_vec();
    let last = net.layers.len() - 1;
    for (k, layer) in net.layers.iter().enumerate() {
        let (n_in, n_out) = layer.weight.dim();
        let mut next = vec![0.0; n_out];
        for (o, out) in next.iter_mut().enumerate() {
            let mut acc = layer.bias[o];
            for i in 0..n_in {
                acc += h[i] * layer.weight[[i, o]];
            }
            *out = if k < last { acc.tanh() } else { acc };
        }
        h = next;
    }
    h
}

pub fn mlp_oracle_rows(net: &Mlp, batch: &Array2<f64>) -> Vec<Vec<f64>> {
    batch
        .outer_iter()
        .map(|r| mlp_oracle(net, &r.to_vec()))
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn clamped_sigmoid(a: f64) -> f64 {
    (1.0 / (1.0 + (-a).exp())).clamp(1e-7, 1.0 - 1e-7)
}

/// `(reconstruction, discriminator term, encoder adversarial term)`.
pub fn wae_oracle(
    enc: &Mlp,
    dec: &Mlp,
    disc: &Mlp,
    batch: &Array2<f64>,
    prior: &Array2<f64>,
    beta: f64,
) -> (f64, f64, f64) {
    let n = batch.nrows() as f64;
    let mut recon = 0.0;
    let mut d_term = 0.0;
    let mut e_term = 0.0;
    for (x, zp) in batch.outer_iter().zip(prior.outer_iter()) {
        let x = x.to_vec();
        let z = mlp_oracle(enc, &x);
        recon += sq_dist(&x, &mlp_oracle(dec, &z));
        let s_enc = clamped_sigmoid(mlp_oracle(disc, &z)[0]);
        let s_prior = clamped_sigmoid(mlp_oracle(disc, &zp.to_vec())[0]);
        d_term += s_prior.ln() + (1.0 - s_enc).ln();
        e_term += s_enc.ln();
    }
    (recon / n, -beta / 2.0 * d_term / n, -beta * e_term / n)
}

pub fn consensus_oracle(enc_x: &Mlp, enc_q: &Mlp, xs: &Array2<f64>, qs: &Array2<f64>) -> f64 {
    let total: f64 = xs
        .outer_iter()
        .zip(qs.outer_iter())
        .map(|(x, q)| sq_dist(&mlp_oracle(enc_x, &x.to_vec()), &mlp_oracle(enc_q, &q.to_vec())))
        .sum();
    total / xs.nrows() as f64
}

/// NT-Xent exactly as written: pairs are `(2m, 2m+1)` in 0-based rows and
/// the denominator runs over every `k ≠ i`.
pub fn ntxent_oracle(z: &[Vec<f64>], tau: f64) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let n = z.len();
    let mut total = 0.0;
    for i in 0..n {
        let j = if i % 2 == 0 { i + 1 } else { i - 1 };
        let num = (cos(&z[i], &z[j]) / tau).exp();
        let den: f64 = (0..n)
            .filter(|&k| k != i)
            .map(|k| (cos(&z[i], &z[k]) / tau).exp())
            .sum();
        total += -(num / den).ln();
    }
    total / n as f64
}

/// Worst relative error between an analytic gradient and central finite
/// differences of `loss` over every parameter of `net`. Differences whose
/// magnitudes are both below `floor` count as agreeing.
pub fn finite_difference_check<F>(net: &Mlp, analytic: &Mlp, h: f64, floor: f64, loss: F) -> f64
where
    F: Fn(&Mlp) -> f64,
{
    let mut probe = net.clone();
    let count = net.param_count();
    let grads: Vec<f64> = analytic.params().copied().collect();
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let original = *probe.params().nth(k).unwrap();
        *probe.params_mut().nth(k).unwrap() = original + h;
        let up = loss(&probe);
        *probe.params_mut().nth(k).unwrap() = original - h;
        let down = loss(&probe);
        *probe.params_mut().nth(k).unwrap() = original;
        let numeric = (up - down) / (2.0 * h);
        let a = grads[k];
        let scale = a.abs().max(numeric.abs());
        if scale < floor {
            continue;
        }
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}


/// Small networks for gradient checks: latent size 3, 16 hidden units.
pub fn small_nets(seed: u64) -> NetworkSet {
    NetworkSet::new(
        Architecture {
            x_dim: 6,
            q_dim: 4,
            d_z: 3,
            hidden: vec![16, 16],
        },
        &mut rng::stream(seed, 0),
    )
}

pub fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    use rand::Rng as _;
    let mut r = rng::stream(seed, 7);
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.5..1.5))
}

fn with_net(nets: &NetworkSet, id: NetId, m: &Mlp) -> NetworkSet {
    let mut n = nets.clone();
    *n.get_mut(id) = m.clone();
    n
}

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this on both sides are below what a central
/// difference at `FD_STEP` can resolve and are skipped.
pub const FD_FLOOR: f64 = 1e-7;

/// Worst relative error of every (loss term, network) combination on a
/// 10-sample batch.
pub fn gradient_checks(seed: u64) -> Vec<(String, f64)> {
    let nets = small_nets(seed);
    let beta = 1.0;
    let tau = 0.7;
    let xb = random_batch(10, 6, seed + 1);
    let qb = random_batch(10, 4, seed + 2);
    let prior = random_batch(10, 3, seed + 3);
    let mut out = Vec::new();
    let mut check = |name: &str, id: NetId, grad: &Mlp, loss: &dyn Fn(&NetworkSet) -> f64| {
        let worst = finite_difference_check(nets.get(id), grad, FD_STEP, FD_FLOOR, |m| {
            loss(&with_net(&nets, id, m))
        });
        out.push((format!("{name} wrt {id:?}"), worst));
    };

    for (domain, batch, enc, dec, disc) in [
        (Domain::X, &xb, NetId::EncX, NetId::DecX, NetId::DiscX),
        (Domain::Q, &qb, NetId::EncQ, NetId::DecQ, NetId::DiscQ),
    ] {
        let terms = |n: &NetworkSet| n.wae_loss(domain, batch, &prior, beta).unwrap();
        let (_, _, ge, gd) = nets.wae_generator_grad(domain, batch, beta, 1.0, 0.0).unwrap();
        check(&format!("reconstruction {domain:?}"), enc, &ge, &|n| terms(n).reconstruction);
        check(&format!("reconstruction {domain:?}"), dec, &gd, &|n| terms(n).reconstruction);
        let (_, _, ge, _) = nets.wae_generator_grad(domain, batch, beta, 0.0, 1.0).unwrap();
        check(&format!("encoder adversarial {domain:?}"), enc, &ge, &|n| {
            terms(n).encoder_adversarial
        });
        let (_, gd) = nets.wae_discriminator_grad(domain, batch, &prior, beta).unwrap();
        check(&format!("discriminator {domain:?}"), disc, &gd, &|n| terms(n).discriminator);
    }

    let (_, gx, gq) = nets.consensus_grad(&xb, &qb).unwrap();
    check("consensus", NetId::EncX, &gx, &|n| n.consensus_loss(&xb, &qb).unwrap());
    check("consensus", NetId::EncQ, &gq, &|n| n.consensus_loss(&xb, &qb).unwrap());

    let (_, g) = nets.ntxent_grad(&xb, tau).unwrap();
    check("ntxent", NetId::EncX, &g, &|n| n.ntxent_loss(&xb, tau).unwrap());
    out
}

use rand::Rng as _;
use retarget_core::latent::losses;
use retarget_core::projection::{clamp_to_limits, project_feasible, project_feasible_with_t, ProjectionConfig};
use retarget_core::robot::{forward_kinematics, landmark_positions, segment_distance};
use retarget_core::sampling::sample_relaxed_config;

/// Largest landmark deviation between production FK and the matrix oracle.
pub fn fk_oracle_worst(samples: usize, seed: u64) -> f64 {
    let model = RobotModel::bundled_humanoid();
    let mut r = rng::stream(seed, 11);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let q = sample_relaxed_config(&model, 1.0, &mut r).unwrap();
        let fast = landmark_positions(&model, &forward_kinematics(&model, &q).unwrap());
        let slow = oracle_landmarks(&model, &q);
        for (a, b) in fast.iter().zip(&slow) {
            for k in 0..3 {
                worst = worst.max((a[k] - b[k]).abs());
            }
        }
    }
    worst
}

/// Largest gap between the closed-form segment distance and a
/// `grid × grid` parameter search, over random segments in `[-1, 1]³`.
pub fn segment_oracle_worst(samples: usize, grid: usize, seed: u64) -> f64 {
    let mut r = rng::stream(seed, 12);
    let mut point = || [0; 3].map(|_| r.random_range(-1.0..1.0));
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let p = [point(), point()];
        let q = [point(), point()];
        let v = |a: [f64; 3]| nalgebra::Vector3::from(a);
        let fast = segment_distance(&v(p[0]), &v(p[1]), &v(q[0]), &v(q[1]));
        worst = worst.max((fast - grid_segment_distance(p, q, grid)).abs());
    }
    worst
}

/// Largest disagreement between the library's loss values and the scalar
/// oracles on random small networks.
pub fn loss_oracle_worst(seed: u64) -> f64 {
    let nets = small_nets(seed);
    let xb = random_batch(10, 6, seed + 20);
    let qb = random_batch(10, 4, seed + 21);
    let prior = random_batch(10, 3, seed + 22);
    let beta = 1.3;
    let mut worst: f64 = 0.0;
    for (domain, batch) in [(Domain::X, &xb), (Domain::Q, &qb)] {
        let t = nets.wae_loss(domain, batch, &prior, beta).unwrap();
        let (r, d, e) = wae_oracle(
            nets.encoder(domain),
            nets.decoder(domain),
            nets.discriminator(domain),
            batch,
            &prior,
            beta,
        );
        worst = worst
            .max((t.reconstruction - r).abs())
            .max((t.discriminator - d).abs())
            .max((t.encoder_adversarial - e).abs());
    }
    let c = nets.consensus_loss(&xb, &qb).unwrap();
    worst = worst.max((c - consensus_oracle(&nets.enc_x, &nets.enc_q, &xb, &qb)).abs());
    for tau in [0.3, 1.0] {
        let l = nets.ntxent_loss(&xb, tau).unwrap();
        let z = mlp_oracle_rows(&nets.enc_x, &xb);
        worst = worst.max((l - ntxent_oracle(&z, tau)).abs());
    }
    worst
}

/// NT-Xent on `2n` identical latents, expected to be `ln(2n - 1)` exactly.
pub fn ntxent_identical(n: usize) -> f64 {
    let z = Array2::from_elem((2 * n, 5), 0.37);
    losses::ntxent(&z, 1.0).unwrap().0
}

#[derive(Debug, Default)]
pub struct ProjectionStats {
    pub colliding: usize,
    pub not_idempotent: usize,
    pub infeasible: usize,
    /// Worst excess of the production distance from the clamped input over
    /// the best distance found on the oracle grid.
    pub worst_excess: f64,
}

/// Draws relaxed configurations until `wanted` collide after clamping, and
/// checks each projection against a `grid`-point search on the segment.
pub fn projection_check(wanted: usize, grid: usize, seed: u64) -> ProjectionStats {
    let model = RobotModel::bundled_humanoid();
    let cfg = ProjectionConfig::default();
    let mut r = rng::stream(seed, 13);
    let mut stats = ProjectionStats::default();
    let neutral = model.neutral_pose().clone();
    let dist = |a: &JointConfig, b: &JointConfig| sq_dist(a.as_slice(), b.as_slice()).sqrt();
    while stats.colliding < wanted {
        let q = sample_relaxed_config(&model, 0.5, &mut r).unwrap();
        let clamped = clamp_to_limits(&model, &q).unwrap();
        if model.first_collision(&clamped).unwrap().is_none() {
            continue;
        }
        stats.colliding += 1;
        let p = project_feasible_with_t(&model, &q, &cfg).unwrap();
        if project_feasible(&model, &p.config, &cfg).unwrap() != p.config {
            stats.not_idempotent += 1;
        }
        if !retarget_core::robot::is_feasible(&model, &p.config).unwrap() {
            stats.infeasible += 1;
        }
        let mut oracle_best = dist(&neutral, &clamped);
        for k in (0..=grid).rev() {
            let t = k as f64 / grid as f64;
            let c = JointConfig(
                neutral
                    .as_slice()
                    .iter()
                    .zip(clamped.as_slice())
                    .map(|(n, c)| n + t * (c - n))
                    .collect(),
            );
            if model.first_collision(&c).unwrap().is_none() {
                oracle_best = dist(&c, &clamped);
                break;
            }
        }
        let excess = dist(&p.config, &clamped) - oracle_best;
        stats.worst_excess = stats.worst_excess.max(excess);
    }
    stats
}
