use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::losses;
use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::robot::{JointConfig, SkeletonFeature};

/// Which side of the shared latent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Skeleton features.
    X,
    /// Robot joint configurations.
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetId {
    EncX,
    DecX,
    EncQ,
    DecQ,
    DiscX,
    DiscQ,
}

impl NetId {
    pub const ALL: [NetId; 6] = [
        NetId::EncX,
        NetId::DecX,
        NetId::EncQ,
        NetId::DecQ,
        NetId::DiscX,
        NetId::DiscQ,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub x_dim: usize,
    pub q_dim: usize,
    pub d_z: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(&self.hidden);
        s.push(output);
        s
    }
}

/// Latent code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Encoders, decoders and latent discriminators for both domains.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSet {
    pub arch: Architecture,
    pub enc_x: Mlp,
    pub dec_x: Mlp,
    pub enc_q: Mlp,
    pub dec_q: Mlp,
    pub disc_x: Mlp,
    pub disc_q: Mlp,
}

/// Gradient (or optimizer state) for every network in a [`NetworkSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub enc_x: Mlp,
    pub dec_x: Mlp,
    pub enc_q: Mlp,
    pub dec_q: Mlp,
    pub disc_x: Mlp,
    pub disc_q: Mlp,
}

impl NetworkGrads {
    pub fn get(&self, id: NetId) -> &Mlp {
        match id {
            NetId::EncX => &self.enc_x,
            NetId::DecX => &self.dec_x,
            NetId::EncQ => &self.enc_q,
            NetId::DecQ => &self.dec_q,
            NetId::DiscX => &self.disc_x,
            NetId::DiscQ => &self.disc_q,
        }
    }

    pub fn get_mut(&mut self, id: NetId) -> &mut Mlp {
        match id {
            NetId::EncX => &mut self.enc_x,
            NetId::DecX => &mut self.dec_x,
            NetId::EncQ => &mut self.enc_q,
            NetId::DecQ => &mut self.dec_q,
            NetId::DiscX => &mut self.disc_x,
            NetId::DiscQ => &mut self.disc_q,
        }
    }
}

/// The three parts of the per-domain adversarial autoencoder objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaeTerms {
    /// `mean c(x, P(Q(x)))` with squared Euclidean cost.
    pub reconstruction: f64,
    /// Trains the discriminator only.
    pub discriminator: f64,
    /// Trains the encoder only.
    pub encoder_adversarial: f64,
}

pub(crate) fn rows(values: &[f64], width: usize) -> Result<Array2<f64>> {
    if width == 0 || values.len() % width != 0 {
        return Err(Error::DimensionMismatch {
            expected: width,
            got: values.len(),
        });
    }
    Ok(Array2::from_shape_vec((values.len() / width, width), values.to_vec())
        .expect("length checked"))
}

impl NetworkSet {
    pub fn new(arch: Architecture, rng: &mut Rng) -> Self {
        let enc_x = Mlp::new(&arch.sizes(arch.x_dim, arch.d_z), rng);
        let dec_x = Mlp::new(&arch.sizes(arch.d_z, arch.x_dim), rng);
        let enc_q = Mlp::new(&arch.sizes(arch.q_dim, arch.d_z), rng);
        let dec_q = Mlp::new(&arch.sizes(arch.d_z, arch.q_dim), rng);
        let disc_x = Mlp::new(&arch.sizes(arch.d_z, 1), rng);
        let disc_q = Mlp::new(&arch.sizes(arch.d_z, 1), rng);
        NetworkSet {
            arch,
            enc_x,
            dec_x,
            enc_q,
            dec_q,
            disc_x,
            disc_q,
        }
    }

    pub fn d_z(&self) -> usize {
        self.arch.d_z
    }

    pub fn get(&self, id: NetId) -> &Mlp {
        match id {
            NetId::EncX => &self.enc_x,
            NetId::DecX => &self.dec_x,
            NetId::EncQ => &self.enc_q,
            NetId::DecQ => &self.dec_q,
            NetId::DiscX => &self.disc_x,
            NetId::DiscQ => &self.disc_q,
        }
    }

    pub fn get_mut(&mut self, id: NetId) -> &mut Mlp {
        match id {
            NetId::EncX => &mut self.enc_x,
            NetId::DecX => &mut self.dec_x,
            NetId::EncQ => &mut self.enc_q,
            NetId::DecQ => &mut self.dec_q,
            NetId::DiscX => &mut self.disc_x,
            NetId::DiscQ => &mut self.disc_q,
        }
    }

    pub fn zero_grads(&self) -> NetworkGrads {
        NetworkGrads {
            enc_x: self.enc_x.zeros_like(),
            dec_x: self.dec_x.zeros_like(),
            enc_q: self.enc_q.zeros_like(),
            dec_q: self.dec_q.zeros_like(),
            disc_x: self.disc_x.zeros_like(),
            disc_q: self.disc_q.zeros_like(),
        }
    }

    /// Checks that every network agrees on the latent size and the domain
    /// dimensions.
    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        let checks = [
            ("enc_x", self.enc_x.input_dim(), a.x_dim),
            ("enc_x", self.enc_x.output_dim(), a.d_z),
            ("dec_x", self.dec_x.input_dim(), a.d_z),
            ("dec_x", self.dec_x.output_dim(), a.x_dim),
            ("enc_q", self.enc_q.input_dim(), a.q_dim),
            ("enc_q", self.enc_q.output_dim(), a.d_z),
            ("dec_q", self.dec_q.input_dim(), a.d_z),
            ("dec_q", self.dec_q.output_dim(), a.q_dim),
            ("disc_x", self.disc_x.input_dim(), a.d_z),
            ("disc_x", self.disc_x.output_dim(), 1),
            ("disc_q", self.disc_q.input_dim(), a.d_z),
            ("disc_q", self.disc_q.output_dim(), 1),
        ];
        for (name, got, expected) in checks {
            if got != expected {
                return Err(Error::Checkpoint(format!(
                    "{name} has dimension {got}, expected {expected}"
                )));
            }
        }
        Ok(())
    }

    pub fn encoder(&self, domain: Domain) -> &Mlp {
        match domain {
            Domain::X => &self.enc_x,
            Domain::Q => &self.enc_q,
        }
    }

    pub fn decoder(&self, domain: Domain) -> &Mlp {
        match domain {
            Domain::X => &self.dec_x,
            Domain::Q => &self.dec_q,
        }
    }

    pub fn discriminator(&self, domain: Domain) -> &Mlp {
        match domain {
            Domain::X => &self.disc_x,
            Domain::Q => &self.disc_q,
        }
    }

    pub fn encode(&self, domain: Domain, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.encoder(domain).forward(batch)
    }

    pub fn encode_skeleton(&self, x: &SkeletonFeature) -> Result<LatentVector> {
        Ok(LatentVector(self.enc_x.forward_one(x.as_slice())?))
    }

    pub fn encode_config(&self, q: &JointConfig) -> Result<LatentVector> {
        Ok(LatentVector(self.enc_q.forward_one(q.as_slice())?))
    }

    pub fn decode_config(&self, z: &LatentVector) -> Result<Vec<f64>> {
        self.dec_q.forward_one(z.as_slice())
    }

    pub fn decode_skeleton(&self, z: &LatentVector) -> Result<Vec<f64>> {
        self.dec_x.forward_one(z.as_slice())
    }

    /// Encodes many skeletons at once; rows follow the input order.
    pub fn encode_skeletons(&self, xs: &[SkeletonFeature]) -> Result<Array2<f64>> {
        let flat: Vec<f64> = xs.iter().flat_map(|x| x.0).collect();
        self.enc_x.forward(&rows(&flat, self.arch.x_dim)?)
    }

    pub fn encode_configs(&self, qs: &[JointConfig]) -> Result<Array2<f64>> {
        let flat: Vec<f64> = qs.iter().flat_map(|q| q.0.iter().copied()).collect();
        self.enc_q.forward(&rows(&flat, self.arch.q_dim)?)
    }

    /// Value of the adversarial autoencoder objective on `batch`, with
    /// `prior` latent samples (same row count).
    pub fn wae_loss(
        &self,
        domain: Domain,
        batch: &Array2<f64>,
        prior: &Array2<f64>,
        beta: f64,
    ) -> Result<WaeTerms> {
        if batch.nrows() == 0 || batch.nrows() != prior.nrows() {
            return Err(Error::InvalidArgument(format!(
                "WAE loss needs a nonempty batch and as many prior samples ({} vs {})",
                batch.nrows(),
                prior.nrows()
            )));
        }
        let z = self.encode(domain, batch)?;
        let recon = self.decoder(domain).forward(&z)?;
        let disc = self.discriminator(domain);
        let logits_enc = disc.forward(&z)?;
        let logits_prior = disc.forward(prior)?;
        let (reconstruction, _) = losses::reconstruction(batch, &recon);
        let (discriminator, _, _) = losses::discriminator(&logits_prior, &logits_enc, beta);
        let (encoder_adversarial, _) = losses::encoder_adversarial(&logits_enc, beta);
        Ok(WaeTerms {
            reconstruction,
            discriminator,
            encoder_adversarial,
        })
    }

    /// Gradient of the discriminator term with respect to the
    /// discriminator's parameters only.
    pub fn wae_discriminator_grad(
        &self,
        domain: Domain,
        batch: &Array2<f64>,
        prior: &Array2<f64>,
        beta: f64,
    ) -> Result<(f64, Mlp)> {
        let z = self.encode(domain, batch)?;
        let disc = self.discriminator(domain);
        let t_enc = disc.forward_trace(&z)?;
        let t_prior = disc.forward_trace(prior)?;
        let (value, d_prior, d_enc) =
            losses::discriminator(t_prior.output(), t_enc.output(), beta);
        let (mut g, _) = disc.backward(&t_prior, &d_prior);
        let (g_enc, _) = disc.backward(&t_enc, &d_enc);
        g.add_scaled(&g_enc, 1.0);
        Ok((value, g))
    }

    /// Reconstruction plus encoder-adversarial terms, differentiated with
    /// respect to the encoder and decoder (the discriminator is held fixed).
    /// Returns `(reconstruction, encoder_adversarial, ∂enc, ∂dec)`.
    pub fn wae_generator_grad(
        &self,
        domain: Domain,
        batch: &Array2<f64>,
        beta: f64,
        recon_weight: f64,
        adv_weight: f64,
    ) -> Result<(f64, f64, Mlp, Mlp)> {
        let enc = self.encoder(domain);
        let dec = self.decoder(domain);
        let disc = self.discriminator(domain);
        let t_enc = enc.forward_trace(batch)?;
        let z = t_enc.output();
        let t_dec = dec.forward_trace(z)?;
        let t_disc = disc.forward_trace(z)?;

        let (recon, d_recon) = losses::reconstruction(batch, t_dec.output());
        let (adv, d_logits) = losses::encoder_adversarial(t_disc.output(), beta);
        let (g_dec, dz_recon) = dec.backward(&t_dec, &(d_recon * recon_weight));
        let (_, dz_adv) = disc.backward(&t_disc, &(d_logits * adv_weight));
        let (g_enc, _) = enc.backward(&t_enc, &(dz_recon + dz_adv));
        Ok((recon, adv, g_enc, g_dec))
    }

    /// Latent consensus `mean ‖Q_X(x) - Q_Q(q)‖²` over paired rows.
    pub fn consensus_loss(&self, xs: &Array2<f64>, qs: &Array2<f64>) -> Result<f64> {
        if xs.nrows() != qs.nrows() {
            return Err(Error::InvalidArgument("consensus batch rows differ".into()));
        }
        let zx = self.enc_x.forward(xs)?;
        let zq = self.enc_q.forward(qs)?;
        Ok(losses::consensus(&zx, &zq).0)
    }

    pub fn consensus_grad(&self, xs: &Array2<f64>, qs: &Array2<f64>) -> Result<(f64, Mlp, Mlp)> {
        if xs.nrows() != qs.nrows() {
            return Err(Error::InvalidArgument("consensus batch rows differ".into()));
        }
        let tx = self.enc_x.forward_trace(xs)?;
        let tq = self.enc_q.forward_trace(qs)?;
        let (v, dx, dq) = losses::consensus(tx.output(), tq.output());
        let (gx, _) = self.enc_x.backward(&tx, &dx);
        let (gq, _) = self.enc_q.backward(&tq, &dq);
        Ok((v, gx, gq))
    }

    /// NT-Xent over skeleton encodings; rows `2m` and `2m + 1` of
    /// `interleaved` are positives.
    pub fn ntxent_loss(&self, interleaved: &Array2<f64>, tau: f64) -> Result<f64> {
        let z = self.enc_x.forward(interleaved)?;
        Ok(losses::ntxent(&z, tau)?.0)
    }

    pub fn ntxent_grad(&self, interleaved: &Array2<f64>, tau: f64) -> Result<(f64, Mlp)> {
        let t = self.enc_x.forward_trace(interleaved)?;
        let (v, dz) = losses::ntxent(t.output(), tau)?;
        let (g, _) = self.enc_x.backward(&t, &dz);
        Ok((v, g))
    }
}
