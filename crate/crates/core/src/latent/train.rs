use ndarray::{Array2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::network::{Architecture, Domain, NetId, NetworkGrads, NetworkSet};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::robot::{RobotModel, FEATURE_DIM};
use crate::sampling::{mixup_with_beta, Dataset};
use crate::robot::SkeletonFeature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub wae_x: f64,
    pub wae_q: f64,
    pub consensus: f64,
    pub ntxent: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            wae_x: 1.0,
            wae_q: 1.0,
            consensus: 1.0,
            ntxent: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub d_z: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub beta_wae: f64,
    pub tau: f64,
    pub loss_weights: LossWeights,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Probability that a contrastive pair uses a mixup skeleton instead of
    /// the relaxed one.
    pub mixup_prob: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d_z: 8,
            hidden: vec![512, 512, 512],
            lr: 1e-3,
            beta_wae: 1.0,
            tau: 1.0,
            loss_weights: LossWeights::default(),
            batch_size: 256,
            steps: 2000,
            seed: 0,
            mixup_prob: 0.5,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.loss_weights;
        let ok = self.d_z > 0
            && !self.hidden.is_empty()
            && self.hidden.iter().all(|&h| h > 0)
            && self.lr > 0.0
            && self.beta_wae > 0.0
            && self.tau > 0.0
            && self.batch_size >= 4
            && self.batch_size % 2 == 0
            && [w.wae_x, w.wae_q, w.consensus, w.ntxent]
                .iter()
                .all(|v| *v >= 0.0 && v.is_finite())
            && (0.0..=1.0).contains(&self.mixup_prob);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "invalid training configuration: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixupMode {
    Off,
    /// Per-block renormalized interpolation of 21-dim skeleton features.
    SkeletonBlocks,
}

/// Training data laid out by role. Paired arrays share row indices.
#[derive(Debug, Clone)]
pub struct TrainingData {
    /// Unpaired inputs for the skeleton autoencoder.
    pub x_domain: Array2<f64>,
    /// Unpaired inputs for the configuration autoencoder.
    pub q_domain: Array2<f64>,
    /// Glue pairs for the consensus loss.
    pub glue_x: Array2<f64>,
    pub glue_q: Array2<f64>,
    /// Contrastive pairs: relaxed skeleton and its projection.
    pub relaxed_x: Array2<f64>,
    pub feasible_x: Array2<f64>,
    pub mixup: MixupMode,
}

fn stack(rows: impl Iterator<Item = impl AsRef<[f64]>>, width: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.flat_map(|r| r.as_ref().to_vec()).collect();
    Array2::from_shape_vec((flat.len() / width, width), flat).expect("rows have equal width")
}

impl TrainingData {
    /// Skeleton autoencoder sees unpaired skeletons plus both skeletons of
    /// every tuple; the configuration autoencoder sees unpaired feasible
    /// configurations plus every tuple's feasible configuration.
    pub fn from_dataset(data: &Dataset, model: &RobotModel) -> Self {
        let n = model.dof();
        let x_rows = data
            .skeleton_only
            .iter()
            .map(|x| x.0.to_vec())
            .chain(data.tuples.iter().map(|t| t.x_relaxed.0.to_vec()))
            .chain(data.tuples.iter().map(|t| t.x_feasible.0.to_vec()));
        let q_rows = data
            .robot_only
            .iter()
            .map(|q| q.0.clone())
            .chain(data.tuples.iter().map(|t| t.q_feasible.0.clone()));
        TrainingData {
            x_domain: stack(x_rows, FEATURE_DIM),
            q_domain: stack(q_rows, n),
            glue_x: stack(data.tuples.iter().map(|t| t.x_feasible.0), FEATURE_DIM),
            glue_q: stack(data.tuples.iter().map(|t| t.q_feasible.0.clone()), n),
            relaxed_x: stack(data.tuples.iter().map(|t| t.x_relaxed.0), FEATURE_DIM),
            feasible_x: stack(data.tuples.iter().map(|t| t.x_feasible.0), FEATURE_DIM),
            mixup: MixupMode::SkeletonBlocks,
        }
    }

    pub fn x_dim(&self) -> usize {
        self.x_domain.ncols()
    }

    pub fn q_dim(&self) -> usize {
        self.q_domain.ncols()
    }

    fn check(&self, cfg: &TrainConfig) -> Result<()> {
        let w = &cfg.loss_weights;
        let roles = [
            ("skeleton-domain data", self.x_domain.nrows(), w.wae_x),
            ("configuration-domain data", self.q_domain.nrows(), w.wae_q),
            ("glue pairs", self.glue_x.nrows(), w.consensus),
            ("contrastive pairs", self.relaxed_x.nrows(), w.ntxent),
        ];
        for (name, count, weight) in roles {
            if count == 0 && weight > 0.0 {
                return Err(Error::Empty(format!("{name} is empty but weighted {weight}")));
            }
        }
        if self.glue_x.nrows() != self.glue_q.nrows()
            || self.relaxed_x.nrows() != self.feasible_x.nrows()
        {
            return Err(Error::InvalidArgument("paired arrays differ in length".into()));
        }
        if self.x_dim() == 0 || self.q_dim() == 0 {
            return Err(Error::Empty("training data has zero-width inputs".into()));
        }
        Ok(())
    }
}

/// Losses observed at one training step (before that step's update).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepLosses {
    pub step: usize,
    pub recon_x: f64,
    pub adv_x: f64,
    pub disc_x: f64,
    pub recon_q: f64,
    pub adv_q: f64,
    pub disc_q: f64,
    pub consensus: f64,
    pub ntxent: f64,
    /// Weighted encoder/decoder objective.
    pub total: f64,
}

impl StepLosses {
    pub const CSV_HEADER: &'static str =
        "step,recon_x,adv_x,disc_x,recon_q,adv_q,disc_q,consensus,ntxent,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.recon_x,
            self.adv_x,
            self.disc_x,
            self.recon_q,
            self.adv_q,
            self.disc_q,
            self.consensus,
            self.ntxent,
            self.total
        )
    }

    fn all_finite(&self) -> bool {
        [
            self.recon_x,
            self.adv_x,
            self.disc_x,
            self.recon_q,
            self.adv_q,
            self.disc_q,
            self.consensus,
            self.ntxent,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

struct Adam {
    m: NetworkGrads,
    v: NetworkGrads,
    t: [i32; 6],
}

enum OptState {
    Sgd,
    Adam(Box<Adam>),
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptState {
    fn new(kind: Optimizer, nets: &NetworkSet) -> Self {
        match kind {
            Optimizer::Sgd => OptState::Sgd,
            Optimizer::Adam => OptState::Adam(Box::new(Adam {
                m: nets.zero_grads(),
                v: nets.zero_grads(),
                t: [0; 6],
            })),
        }
    }

    fn apply(&mut self, nets: &mut NetworkSet, id: NetId, grad: &Mlp, lr: f64) {
        let params = nets.get_mut(id);
        match self {
            OptState::Sgd => params.add_scaled(grad, -lr),
            OptState::Adam(state) => {
                let slot = NetId::ALL.iter().position(|&n| n == id).expect("known net");
                state.t[slot] += 1;
                let t = state.t[slot];
                let c1 = 1.0 - ADAM_B1.powi(t);
                let c2 = 1.0 - ADAM_B2.powi(t);
                let m = state.m.get_mut(id);
                for (m, g) in m.params_mut().zip(grad.params()) {
                    *m = ADAM_B1 * *m + (1.0 - ADAM_B1) * g;
                }
                let v = state.v.get_mut(id);
                for (v, g) in v.params_mut().zip(grad.params()) {
                    *v = ADAM_B2 * *v + (1.0 - ADAM_B2) * g * g;
                }
                let m = state.m.get(id);
                let v = state.v.get(id);
                for ((p, m), v) in params.params_mut().zip(m.params()).zip(v.params()) {
                    *p -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

fn sample_rows(data: &Array2<f64>, n: usize, rng: &mut Rng) -> (Vec<usize>, Array2<f64>) {
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..data.nrows())).collect();
    let batch = data.select(Axis(0), &idx);
    (idx, batch)
}

fn prior_samples(n: usize, d: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal))
}

/// Interleaves contrastive pairs as rows `(a_0, b_0, a_1, b_1, ...)`,
/// replacing `a_i` by a mixup sample with probability `mixup_prob`.
fn contrastive_batch(
    data: &TrainingData,
    n: usize,
    mixup_prob: f64,
    rng: &mut Rng,
) -> Array2<f64> {
    let d = data.x_dim();
    let mut out = Array2::zeros((2 * n, d));
    for k in 0..n {
        let i = rng.random_range(0..data.relaxed_x.nrows());
        let relaxed = data.relaxed_x.row(i);
        let feasible = data.feasible_x.row(i);
        let use_mixup = data.mixup == MixupMode::SkeletonBlocks
            && d == FEATURE_DIM
            && rng.random::<f64>() < mixup_prob;
        if use_mixup {
            let a = SkeletonFeature::from_slice(relaxed.as_slice().expect("standard layout"))
                .expect("skeleton width");
            let b = SkeletonFeature::from_slice(feasible.as_slice().expect("standard layout"))
                .expect("skeleton width");
            let mixed = loop {
                let beta: f64 = rng.random();
                if let Some(x) = mixup_with_beta(&a, &b, beta) {
                    break x;
                }
            };
            out.row_mut(2 * k).assign(&ndarray::ArrayView1::from(&mixed.0[..]));
        } else {
            out.row_mut(2 * k).assign(&relaxed);
        }
        out.row_mut(2 * k + 1).assign(&feasible);
    }
    out
}

pub fn initial_networks(cfg: &TrainConfig, x_dim: usize, q_dim: usize) -> NetworkSet {
    NetworkSet::new(
        Architecture {
            x_dim,
            q_dim,
            d_z: cfg.d_z,
            hidden: cfg.hidden.clone(),
        },
        &mut rng::stream(cfg.seed, 0),
    )
}

/// Trains all networks for `cfg.steps` steps. `observe` is called once per
/// step with that step's losses.
///
/// Each step first updates both discriminators on their adversarial terms,
/// then takes one step on the weighted encoder/decoder objective:
/// reconstruction and encoder-adversarial terms of both domains, latent
/// consensus on glue pairs, and NT-Xent on contrastive skeleton pairs.
pub fn train<F>(data: &TrainingData, cfg: &TrainConfig, mut observe: F) -> Result<NetworkSet>
where
    F: FnMut(&StepLosses),
{
    cfg.validate()?;
    data.check(cfg)?;
    let mut nets = initial_networks(cfg, data.x_dim(), data.q_dim());
    let mut opt = OptState::new(cfg.optimizer, &nets);
    let mut rng = rng::stream(cfg.seed, 1);
    let w = cfg.loss_weights;
    let b = cfg.batch_size;
    let beta = cfg.beta_wae;

    for step in 0..cfg.steps {
        let mut s = StepLosses {
            step,
            ..Default::default()
        };
        let x_batch = (w.wae_x > 0.0).then(|| sample_rows(&data.x_domain, b, &mut rng).1);
        let q_batch = (w.wae_q > 0.0).then(|| sample_rows(&data.q_domain, b, &mut rng).1);

        // (a) discriminators
        if let Some(xb) = &x_batch {
            let prior = prior_samples(b, cfg.d_z, &mut rng);
            let (v, g) = nets.wae_discriminator_grad(Domain::X, xb, &prior, beta)?;
            s.disc_x = v;
            opt.apply(&mut nets, NetId::DiscX, &scaled(g, w.wae_x), cfg.lr);
        }
        if let Some(qb) = &q_batch {
            let prior = prior_samples(b, cfg.d_z, &mut rng);
            let (v, g) = nets.wae_discriminator_grad(Domain::Q, qb, &prior, beta)?;
            s.disc_q = v;
            opt.apply(&mut nets, NetId::DiscQ, &scaled(g, w.wae_q), cfg.lr);
        }

        // (b) encoders and decoders
        let mut grads = nets.zero_grads();
        if let Some(xb) = &x_batch {
            let (r, a, ge, gd) = nets.wae_generator_grad(Domain::X, xb, beta, w.wae_x, w.wae_x)?;
            s.recon_x = r;
            s.adv_x = a;
            grads.enc_x.add_scaled(&ge, 1.0);
            grads.dec_x.add_scaled(&gd, 1.0);
        }
        if let Some(qb) = &q_batch {
            let (r, a, ge, gd) = nets.wae_generator_grad(Domain::Q, qb, beta, w.wae_q, w.wae_q)?;
            s.recon_q = r;
            s.adv_q = a;
            grads.enc_q.add_scaled(&ge, 1.0);
            grads.dec_q.add_scaled(&gd, 1.0);
        }
        if w.consensus > 0.0 {
            let idx: Vec<usize> = (0..b)
                .map(|_| rng.random_range(0..data.glue_x.nrows()))
                .collect();
            let gx = data.glue_x.select(Axis(0), &idx);
            let gq = data.glue_q.select(Axis(0), &idx);
            let (v, ge_x, ge_q) = nets.consensus_grad(&gx, &gq)?;
            s.consensus = v;
            grads.enc_x.add_scaled(&ge_x, w.consensus);
            grads.enc_q.add_scaled(&ge_q, w.consensus);
        }
        if w.ntxent > 0.0 {
            let batch = contrastive_batch(data, b / 2, cfg.mixup_prob, &mut rng);
            let (v, g) = nets.ntxent_grad(&batch, cfg.tau)?;
            s.ntxent = v;
            grads.enc_x.add_scaled(&g, w.ntxent);
        }
        s.total = w.wae_x * (s.recon_x + s.adv_x)
            + w.wae_q * (s.recon_q + s.adv_q)
            + w.consensus * s.consensus
            + w.ntxent * s.ntxent;

        if !s.all_finite() {
            observe(&s);
            return Err(Error::Divergence {
                step,
                what: "loss".into(),
            });
        }
        for id in [NetId::EncX, NetId::DecX, NetId::EncQ, NetId::DecQ] {
            opt.apply(&mut nets, id, grads.get(id), cfg.lr);
        }
        if !NetId::ALL.iter().all(|&id| nets.get(id).is_finite()) {
            observe(&s);
            return Err(Error::Divergence {
                step,
                what: "parameters".into(),
            });
        }
        observe(&s);
    }
    Ok(nets)
}

fn scaled(mut g: Mlp, w: f64) -> Mlp {
    if w != 1.0 {
        for p in g.params_mut() {
            *p *= w;
        }
    }
    g
}

/// Convenience wrapper: trains on a sampled dataset for `model`.
pub fn train_dataset(
    data: &Dataset,
    cfg: &TrainConfig,
    model: &RobotModel,
) -> Result<(NetworkSet, Vec<StepLosses>)> {
    let td = TrainingData::from_dataset(data, model);
    let mut log = Vec::with_capacity(cfg.steps);
    let nets = train(&td, cfg, |s| log.push(*s))?;
    Ok((nets, log))
}
