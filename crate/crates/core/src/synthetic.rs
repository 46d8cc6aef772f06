//! Two-dimensional toy problem with a many-to-one projection.
//!
//! Relaxed X is `[0, 2]²`, feasible X is `[0, 1]²`, and the projection clips
//! each coordinate at 1. Feasible X maps one-to-one onto feasible Y through
//! a fixed affine map, so every relaxed point has a known target
//! `truth(proj(p))`. Two latent models are trained that differ only in the
//! NT-Xent weight, and both are scored by nearest-neighbour lookup on a
//! held-out grid.

use nalgebra::{Matrix2, Vector2};
use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{train, Domain, LossWeights, MixupMode, NetworkSet, StepLosses, TrainConfig, TrainingData};
use crate::retarget::{nearest, Metric};
use crate::rng;

pub type Point = [f64; 2];

const ROTATION_DEG: f64 = 30.0;
const SCALE: f64 = 0.8;
const OFFSET: Point = [2.0, 0.5];

fn in_box(p: Point, hi: f64) -> bool {
    p.iter().all(|v| (0.0..=hi).contains(v))
}

/// `(min(x₁, 1), min(x₂, 1))` on `[0, 2]²`.
pub fn synth_project(p: Point) -> Result<Point> {
    if !in_box(p, 2.0) {
        return Err(Error::InvalidArgument(format!("{p:?} is outside [0, 2]²")));
    }
    Ok([p[0].min(1.0), p[1].min(1.0)])
}

fn linear_part() -> Matrix2<f64> {
    let (s, c) = ROTATION_DEG.to_radians().sin_cos();
    Matrix2::new(c, -s, s, c) * SCALE
}

/// Rotation by 30°, scaling by 0.8, translation by (2, 0.5), on `[0, 1]²`.
pub fn synth_ground_truth(p: Point) -> Result<Point> {
    if !in_box(p, 1.0) {
        return Err(Error::InvalidArgument(format!("{p:?} is outside [0, 1]²")));
    }
    let y = linear_part() * Vector2::new(p[0], p[1]) + Vector2::new(OFFSET[0], OFFSET[1]);
    Ok([y[0], y[1]])
}

/// Inverse of [`synth_ground_truth`] on all of the plane.
pub fn synth_ground_truth_inverse(y: Point) -> Point {
    let inv = linear_part().try_inverse().expect("rotation times scale is invertible");
    let p = inv * (Vector2::new(y[0], y[1]) - Vector2::new(OFFSET[0], OFFSET[1]));
    [p[0], p[1]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_relaxed: usize,
    pub n_glue: usize,
    /// Unpaired feasible-Y samples; they also form the lookup database.
    pub n_y: usize,
    /// Held-out grid is `grid × grid` cell centres over `[0, 2]²`.
    pub grid: usize,
    pub metric: Metric,
    pub train: TrainConfig,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_relaxed: 10_000,
            n_glue: 20,
            n_y: 10_000,
            grid: 50,
            metric: Metric::Euclidean,
            // Chosen on seeds 100..105. With consensus weight 1 the two
            // latent spaces often settle in mismatched orientations, which
            // swamps any difference between the variants.
            train: TrainConfig {
                d_z: 2,
                hidden: vec![64, 64, 64],
                batch_size: 256,
                steps: 3000,
                mixup_prob: 0.0,
                loss_weights: LossWeights {
                    consensus: 5.0,
                    ..LossWeights::default()
                },
                ..TrainConfig::default()
            },
        }
    }
}

impl SyntheticConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = SyntheticConfig::default();
        cfg.train.seed = seed;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_glue < 2 || self.n_relaxed < 2 || self.n_y == 0 || self.grid == 0 {
            return Err(Error::InvalidArgument(format!(
                "synthetic experiment needs n_glue >= 2, n_relaxed >= 2, n_y > 0 and a grid; got {} / {} / {} / {}",
                self.n_glue, self.n_relaxed, self.n_y, self.grid
            )));
        }
        self.train.validate()
    }
}

/// Sampled training sets.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub relaxed: Vec<Point>,
    pub glue: Vec<(Point, Point)>,
    pub y_samples: Vec<Point>,
}

fn uniform(rng: &mut rng::Rng, hi: f64) -> Point {
    [hi * rng.random::<f64>(), hi * rng.random::<f64>()]
}

pub fn sample_data(cfg: &SyntheticConfig) -> SyntheticData {
    let mut rng = rng::stream(cfg.train.seed, 100);
    let relaxed = (0..cfg.n_relaxed).map(|_| uniform(&mut rng, 2.0)).collect();
    let glue = (0..cfg.n_glue)
        .map(|_| {
            let x = uniform(&mut rng, 1.0);
            (x, synth_ground_truth(x).expect("inside the unit box"))
        })
        .collect();
    let y_samples = (0..cfg.n_y)
        .map(|_| synth_ground_truth(uniform(&mut rng, 1.0)).expect("inside the unit box"))
        .collect();
    SyntheticData {
        relaxed,
        glue,
        y_samples,
    }
}

fn table(points: impl Iterator<Item = Point>) -> Array2<f64> {
    let flat: Vec<f64> = points.flat_map(|p| p.into_iter()).collect();
    Array2::from_shape_vec((flat.len() / 2, 2), flat).expect("pairs of coordinates")
}

/// Per-axis standardization fitted on a training sample. Network inputs
/// are centred so the tanh layers start outside saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: Point,
    pub std: Point,
}

impl Standardizer {
    pub fn fit(points: &[Point]) -> Self {
        let n = points.len().max(1) as f64;
        let mut mean = [0.0; 2];
        let mut std = [0.0; 2];
        for k in 0..2 {
            mean[k] = points.iter().map(|p| p[k]).sum::<f64>() / n;
            let var = points.iter().map(|p| (p[k] - mean[k]).powi(2)).sum::<f64>() / n;
            std[k] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardizer { mean, std }
    }

    pub fn apply(&self, p: Point) -> Point {
        [
            (p[0] - self.mean[0]) / self.std[0],
            (p[1] - self.mean[1]) / self.std[1],
        ]
    }

    fn table(&self, points: impl Iterator<Item = Point>) -> Array2<f64> {
        table(points.map(|p| self.apply(p)))
    }
}

impl SyntheticData {
    /// X autoencoder sees relaxed points and their projections; NT-Xent
    /// pairs each relaxed point with its projection.
    pub fn training_data(&self) -> TrainingData {
        let (sx, sy) = self.scalers();
        let projected: Vec<Point> = self
            .relaxed
            .iter()
            .map(|&p| synth_project(p).expect("sampled in the relaxed box"))
            .collect();
        TrainingData {
            x_domain: sx.table(self.relaxed.iter().copied().chain(projected.iter().copied())),
            q_domain: sy.table(self.y_samples.iter().copied()),
            glue_x: sx.table(self.glue.iter().map(|g| g.0)),
            glue_q: sy.table(self.glue.iter().map(|g| g.1)),
            relaxed_x: sx.table(self.relaxed.iter().copied()),
            feasible_x: sx.table(projected.into_iter()),
            mixup: MixupMode::Off,
        }
    }

    /// Input scalings for X (fitted on the relaxed sample) and Y.
    pub fn scalers(&self) -> (Standardizer, Standardizer) {
        (Standardizer::fit(&self.relaxed), Standardizer::fit(&self.y_samples))
    }
}

pub fn grid_points(n: usize) -> Vec<Point> {
    let step = 2.0 / n as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| [(i as f64 + 0.5) * step, (j as f64 + 0.5) * step]))
        .collect()
}

/// Points outside feasible X, where the projection is many-to-one.
pub fn is_projection_invariant(p: Point) -> bool {
    p[0] > 1.0 || p[1] > 1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub variant: String,
    pub input: Point,
    pub projected: Point,
    pub retargeted: Point,
    pub truth: Point,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub ntxent_weight: f64,
    pub mean_error: f64,
    /// Grid points inside feasible X.
    pub feasible_error: f64,
    /// Grid points with x₁ > 1 or x₂ > 1.
    pub invariant_error: f64,
    pub initial_total_loss: f64,
    pub final_total_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub seed: u64,
    pub config: SyntheticConfig,
    pub variants: Vec<VariantReport>,
    #[serde(skip)]
    pub samples: Vec<SyntheticSample>,
    #[serde(skip)]
    pub telemetry: Vec<(String, Vec<StepLosses>)>,
}

impl SyntheticReport {
    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.name == name)
    }

    /// Relative error reduction of the NT-Xent variant over the baseline in
    /// the projection-invariant region.
    pub fn invariant_reduction(&self) -> Option<f64> {
        let (s, b) = (self.variant(WITH_NTXENT)?, self.variant(WITHOUT_NTXENT)?);
        Some(1.0 - s.invariant_error / b.invariant_error)
    }

    pub const CSV_HEADER: &'static str =
        "variant,x1,x2,proj_x1,proj_x2,y1,y2,truth_y1,truth_y2,error";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.samples.iter().map(|s| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                s.variant,
                s.input[0],
                s.input[1],
                s.projected[0],
                s.projected[1],
                s.retargeted[0],
                s.retargeted[1],
                s.truth[0],
                s.truth[1],
                s.error
            )
        })
    }
}

/// Minimum relative reduction of the projection-invariant error, pooled over
/// seeds 0..5 of the default configuration. The first measured run (seed 0)
/// gave 28%.
pub const INVARIANT_REDUCTION_THRESHOLD: f64 = 0.20;

pub const WITH_NTXENT: &str = "s3le";
pub const WITHOUT_NTXENT: &str = "no-ntxent";

/// Nearest-neighbour output in Y for every point of `inputs`.
pub fn map_points(
    nets: &NetworkSet,
    data: &SyntheticData,
    metric: Metric,
    inputs: &[Point],
) -> Result<Vec<Point>> {
    let (sx, sy) = data.scalers();
    let db = nets.encode(Domain::Q, &sy.table(data.y_samples.iter().copied()))?;
    let zs = nets.encode(Domain::X, &sx.table(inputs.iter().copied()))?;
    Ok(zs
        .outer_iter()
        .map(|z| {
            let (i, _) = nearest(db.view(), z, metric).expect("y samples are nonempty");
            data.y_samples[i]
        })
        .collect())
}

fn evaluate(
    name: &str,
    cfg: &TrainConfig,
    nets: &NetworkSet,
    data: &SyntheticData,
    metric: Metric,
    grid: &[Point],
    log: &[StepLosses],
) -> Result<(VariantReport, Vec<SyntheticSample>)> {
    let outputs = map_points(nets, data, metric, grid)?;
    let samples: Vec<SyntheticSample> = grid
        .iter()
        .zip(outputs)
        .map(|(&p, y)| {
            let projected = synth_project(p).expect("grid lies in the relaxed box");
            let truth = synth_ground_truth(projected).expect("projection lies in the unit box");
            let error = ((y[0] - truth[0]).powi(2) + (y[1] - truth[1]).powi(2)).sqrt();
            SyntheticSample {
                variant: name.to_string(),
                input: p,
                projected,
                retargeted: y,
                truth,
                error,
            }
        })
        .collect();
    let mean = |pred: &dyn Fn(&SyntheticSample) -> bool| {
        let errs: Vec<f64> = samples.iter().filter(|s| pred(s)).map(|s| s.error).collect();
        errs.iter().sum::<f64>() / errs.len().max(1) as f64
    };
    let report = VariantReport {
        name: name.to_string(),
        ntxent_weight: cfg.loss_weights.ntxent,
        mean_error: mean(&|_| true),
        feasible_error: mean(&|s| !is_projection_invariant(s.input)),
        invariant_error: mean(&|s| is_projection_invariant(s.input)),
        initial_total_loss: log.first().map_or(f64::NAN, |s| s.total),
        final_total_loss: log.last().map_or(f64::NAN, |s| s.total),
    };
    Ok((report, samples))
}

/// Trains one variant and scores it on the held-out grid.
pub fn run_variant(
    cfg: &SyntheticConfig,
    data: &SyntheticData,
    name: &str,
    ntxent_weight: f64,
) -> Result<(VariantReport, Vec<SyntheticSample>, Vec<StepLosses>, NetworkSet)> {
    let mut tc = cfg.train.clone();
    tc.loss_weights.ntxent = ntxent_weight;
    let mut log = Vec::with_capacity(tc.steps);
    let nets = train(&data.training_data(), &tc, |s| log.push(*s))?;
    let (report, samples) = evaluate(name, &tc, &nets, data, cfg.metric, &grid_points(cfg.grid), &log)?;
    Ok((report, samples, log, nets))
}

/// Trains the NT-Xent variant and the baseline on identical data and seeds
/// (the two runs execute concurrently) and compares them.
pub fn run_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticReport> {
    cfg.validate()?;
    let data = sample_data(cfg);
    let w = cfg.train.loss_weights.ntxent;
    let weight = if w > 0.0 { w } else { 1.0 };
    let (with, without) = rayon::join(
        || run_variant(cfg, &data, WITH_NTXENT, weight),
        || run_variant(cfg, &data, WITHOUT_NTXENT, 0.0),
    );
    let (with, without) = (with?, without?);
    let mut samples = with.1;
    samples.extend(without.1);
    Ok(SyntheticReport {
        seed: cfg.train.seed,
        config: cfg.clone(),
        variants: vec![with.0, without.0],
        samples,
        telemetry: vec![
            (WITH_NTXENT.to_string(), with.2),
            (WITHOUT_NTXENT.to_string(), without.2),
        ],
    })
}
