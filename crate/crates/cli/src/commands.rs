use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use retarget_core::formats::{self, ConfigRecord, SkeletonRecord, TimedConfig, TrajectoryRecord};
use retarget_core::latent::{self, Checkpoint, LossWeights, Optimizer, StepLosses, TrainConfig};
use retarget_core::projection::ProjectionConfig;
use retarget_core::retarget::{
    build_database, collision_rate, cosine_distance_metric, retarget_sequence, Metric, PoseDatabase,
    RetargetReport, Smoothing,
};
use retarget_core::robot::{skeleton_of, RobotModel};
use retarget_core::sampling::{self, Counts, Dataset, MotionSetSpec, SamplingConfig, Source};
use retarget_core::synthetic::{self, SyntheticConfig, SyntheticReport};

use crate::io::{require_file, write_bytes, write_jsonl, write_lines, ManifestBuilder};

pub const TUPLES_FILE: &str = "tuples.jsonl";
pub const ROBOT_FILE: &str = "robot_only.jsonl";
pub const SKELETON_FILE: &str = "skeleton_only.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Args, Debug, Serialize)]
pub struct ModelArg {
    /// Robot description (JSON). Defaults to the bundled upper-body humanoid.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

impl ModelArg {
    fn load(&self) -> Result<RobotModel> {
        match &self.model {
            Some(p) => Ok(RobotModel::load(p)?),
            None => Ok(RobotModel::bundled_humanoid()),
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct GenDataArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    /// Relaxation of every joint range, as a fraction of its width.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 100_000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 30_000)]
    pub robot_only: usize,
    #[arg(long, default_value_t = 100_000)]
    pub skel_only: usize,
    /// Externally retargeted tuples to ingest and append to the sampled ones.
    #[arg(long)]
    pub mocap: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let model = a.model.load()?;
    let mut m = ManifestBuilder::new("gen-data", &a, vec![a.seed]);
    if let Some(p) = &a.model.model {
        m.input(p);
    }
    let cfg = SamplingConfig {
        alpha: a.alpha,
        seed: a.seed,
        counts: Counts {
            paired_tuples: a.pairs,
            robot_specific: a.robot_only,
            skeleton_specific: a.skel_only,
        },
        projection: ProjectionConfig::default(),
    };
    let mut data = sampling::generate_dataset(&model, &cfg)?;
    m.stage("sample");
    if a.pairs == 0 {
        m.warn("--pairs 0: the tuple file will be empty".into());
    }
    if let Some(p) = &a.mocap {
        m.input(p);
        let report = sampling::ingest_mocap_pairs(p, &model)?;
        for w in &report.warnings {
            m.warn(w.clone());
        }
        for r in &report.rejected {
            m.warn(format!("{}:{}: rejected: {}", p.display(), r.line, r.reason));
        }
        data.extend(report.dataset);
        m.stage("ingest");
    }
    data.validate(&model)?;

    let tuples = a.out.join(TUPLES_FILE);
    let robot = a.out.join(ROBOT_FILE);
    let skel = a.out.join(SKELETON_FILE);
    write_jsonl(&tuples, &data.tuples)?;
    write_jsonl(&robot, data.robot_only.iter().map(|q| ConfigRecord { q: q.clone() }))?;
    write_jsonl(&skel, data.skeleton_only.iter().map(|x| SkeletonRecord { x: *x }))?;
    m.stage("write");
    for p in [&tuples, &robot, &skel] {
        m.output(p);
    }
    m.finish(&a.out.join(MANIFEST_FILE))?;
    println!(
        "wrote {} tuples, {} robot-only, {} skeleton-only to {}",
        data.tuples.len(),
        data.robot_only.len(),
        data.skeleton_only.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct GenMotionsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Motions turned into paired training tuples.
    #[arg(long, default_value_t = 10)]
    pub train_motions: usize,
    /// Motions written as skeleton sequences with reference trajectories.
    #[arg(long, default_value_t = 5)]
    pub heldout_motions: usize,
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub const MOCAP_FILE: &str = "mocap_pairs.jsonl";
pub const HELDOUT_DIR: &str = "heldout";
pub const TRUTH_SUFFIX: &str = ".truth.jsonl";

pub fn gen_motions(a: GenMotionsArgs) -> Result<()> {
    let model = a.model.load()?;
    let mut m = ManifestBuilder::new("gen-motions", &a, vec![a.seed]);
    let proj = ProjectionConfig::default();
    let spec = |prefix: &str, first, count| MotionSetSpec {
        prefix: prefix.into(),
        first,
        count,
        frames: a.frames,
        fps: a.fps,
    };
    let train = sampling::motion_set(&model, a.alpha, a.seed, &spec("train", 0, a.train_motions))?;
    let mut tuples = Vec::new();
    for motion in &train {
        tuples.extend(sampling::motion_tuples(&model, motion, &proj, Source::MocapIngested)?);
    }
    let mocap = a.out.join(MOCAP_FILE);
    write_jsonl(&mocap, &tuples)?;
    m.output(&mocap);

    let heldout = sampling::motion_set(
        &model,
        a.alpha,
        a.seed,
        &spec("heldout", a.train_motions, a.heldout_motions),
    )?;
    let dir = a.out.join(HELDOUT_DIR);
    for motion in &heldout {
        let seq = dir.join(format!("{}.jsonl", motion.name));
        write_jsonl(&seq, sampling::motion_skeleton_frames(&model, motion)?)?;
        let truth: Vec<TimedConfig> = motion
            .times
            .iter()
            .zip(&motion.relaxed)
            .map(|(&t, q)| {
                Ok(TimedConfig {
                    t,
                    q: retarget_core::projection::project_feasible(&model, q, &proj)?,
                })
            })
            .collect::<Result<_>>()?;
        let truth_path = dir.join(format!("{}{TRUTH_SUFFIX}", motion.name));
        write_jsonl(&truth_path, truth)?;
        m.output(&seq);
        m.output(&truth_path);
    }
    m.stage("generate");
    m.finish(&a.out.join(MANIFEST_FILE))?;
    println!(
        "wrote {} mocap tuples and {} held-out motions to {}",
        tuples.len(),
        heldout.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Euclidean,
    Cosine,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Cosine => Metric::Cosine,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    /// Directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// NT-Xent temperature.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Coefficient of the adversarial prior-matching terms.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 8)]
    pub d_z: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "512,512,512")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub mixup_prob: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1.0)]
    pub wae_x_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub wae_q_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub consensus_weight: f64,
    /// 0 trains the ablation baseline without the contrastive term.
    #[arg(long, default_value_t = 1.0)]
    pub ntxent_weight: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            d_z: self.d_z,
            hidden: self.hidden.clone(),
            lr: self.lr,
            beta_wae: self.beta,
            tau: self.tau,
            loss_weights: LossWeights {
                wae_x: self.wae_x_weight,
                wae_q: self.wae_q_weight,
                consensus: self.consensus_weight,
                ntxent: self.ntxent_weight,
            },
            batch_size: self.batch_size,
            steps: self.steps,
            seed: self.seed,
            mixup_prob: self.mixup_prob,
            optimizer: match self.optimizer {
                OptimizerArg::Sgd => Optimizer::Sgd,
                OptimizerArg::Adam => Optimizer::Adam,
            },
        }
    }
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TELEMETRY_FILE: &str = "telemetry.csv";

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let tuples = dir.join(TUPLES_FILE);
    let robot = dir.join(ROBOT_FILE);
    let skel = dir.join(SKELETON_FILE);
    for p in [&tuples, &robot, &skel] {
        require_file(p)?;
    }
    Ok(Dataset {
        tuples: formats::read_tuples(&tuples)?.into_iter().map(|(_, t)| t).collect(),
        robot_only: formats::read_configs(&robot)?,
        skeleton_only: formats::read_skeletons(&skel)?,
    })
}

pub fn train(a: TrainArgs) -> Result<()> {
    let model = a.model.load()?;
    let cfg = a.config();
    cfg.validate()?;
    let mut m = ManifestBuilder::new("train", &a, vec![a.seed]);
    let data = load_dataset(&a.data)?;
    for f in [TUPLES_FILE, ROBOT_FILE, SKELETON_FILE] {
        m.input(&a.data.join(f));
    }
    data.validate(&model)?;
    m.stage("load");

    let td = latent::TrainingData::from_dataset(&data, &model);
    let mut log: Vec<StepLosses> = Vec::with_capacity(cfg.steps);
    let result = latent::train(&td, &cfg, |s| {
        if s.step % 100 == 0 {
            log::info!("step {} total {:.5}", s.step, s.total);
        }
        log.push(*s);
    });
    let telemetry = a.out.join(TELEMETRY_FILE);
    write_lines(
        &telemetry,
        Some(StepLosses::CSV_HEADER),
        log.iter().map(StepLosses::csv_row),
    )?;
    let nets = result?;
    m.stage("train");

    let ck = Checkpoint { nets, config: cfg };
    let path = a.out.join(CHECKPOINT_FILE);
    write_bytes(&path, &ck.to_bytes())?;
    m.output(&path);
    m.output(&telemetry);
    m.finish(&a.out.join(MANIFEST_FILE))?;
    let (first, last) = (log.first().map_or(0.0, |s| s.total), log.last().map_or(0.0, |s| s.total));
    println!(
        "trained {} steps (total loss {first:.4} -> {last:.4}); checkpoint {}",
        log.len(),
        ck.id()
    );
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct BuildDbArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Feasible configurations, JSON-lines `{q: [...]}` (e.g. robot_only.jsonl).
    #[arg(long)]
    pub configs: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    pub metric: MetricArg,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn build_db(a: BuildDbArgs) -> Result<()> {
    let model = a.model.load()?;
    require_file(&a.checkpoint)?;
    require_file(&a.configs)?;
    let mut m = ManifestBuilder::new("build-db", &a, vec![]);
    m.input(&a.checkpoint);
    m.input(&a.configs);
    let ck = Checkpoint::load_for(&a.checkpoint, &model)?;
    let configs = formats::read_configs(&a.configs)?;
    let (db, report) = build_database(&ck.nets, &model, &configs, a.metric.into(), &ck.id())?;
    if !report.rejected.is_empty() {
        m.warn(format!(
            "rejected {} infeasible configurations (first at record {})",
            report.rejected.len(),
            report.rejected[0] + 1
        ));
    }
    write_bytes(&a.out, &db.to_bytes())?;
    m.output(&a.out);
    let manifest = a.out.with_extension("manifest.json");
    m.finish(&manifest)?;
    println!("database of {} entries written to {}", db.len(), a.out.display());
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct RetargetArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
    /// Skeleton-sequence files (JSON-lines of `{t, joints}`).
    #[arg(long, num_args = 1.., required = true)]
    pub sequence: Vec<PathBuf>,
    /// Exponential smoothing weight of the current frame, in (0, 1]. Off by default.
    #[arg(long)]
    pub smoothing: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.strip_suffix(".jsonl").unwrap_or(&name).to_string()
}

pub fn retarget(a: RetargetArgs) -> Result<()> {
    let model = a.model.load()?;
    for p in [&a.checkpoint, &a.db] {
        require_file(p)?;
    }
    let mut m = ManifestBuilder::new("retarget", &a, vec![]);
    let ck = Checkpoint::load_for(&a.checkpoint, &model)?;
    let db = PoseDatabase::load(&a.db, &model)?;
    if db.checkpoint_id != ck.id() {
        bail!(retarget_core::Error::Checkpoint(format!(
            "database was built with checkpoint {}, not {}",
            db.checkpoint_id,
            ck.id()
        )));
    }
    m.input(&a.checkpoint);
    m.input(&a.db);
    let smoothing = a.smoothing.map(|alpha| Smoothing { alpha });
    let mut total_frames = 0;
    let started = std::time::Instant::now();
    for path in &a.sequence {
        require_file(path)?;
        m.input(path);
        let seq = formats::read_skeleton_sequence(path)?;
        let report = retarget_sequence(&ck.nets, &db, &model, &seq.features, smoothing)?;
        total_frames += seq.features.len();
        let repaired = report.repaired_frames();
        if repaired > 0 {
            m.warn(format!(
                "{}: {repaired} frames had non-unit or degenerate bones and were normalized",
                path.display()
            ));
        }
        let name = stem(path);
        let traj = a.out.join(format!("{name}.jsonl"));
        write_jsonl(&traj, trajectory_records(&seq.times, &report))?;
        let metrics = a.out.join(format!("{name}.metrics.csv"));
        write_lines(&metrics, Some(&RetargetReport::csv_header()), report.csv_rows())?;
        m.output(&traj);
        m.output(&metrics);
        println!(
            "{name}: {} frames, mean cosine distance {:.5}, collision rate {}",
            seq.features.len(),
            report.mean_cosine_distance,
            report.collision_rate
        );
    }
    let secs = started.elapsed().as_secs_f64();
    m.stage("retarget");
    m.finish(&a.out.join(MANIFEST_FILE))?;
    println!("{total_frames} frames in {secs:.3} s ({:.0} frames/s)", total_frames as f64 / secs.max(1e-9));
    Ok(())
}

fn trajectory_records(times: &[f64], report: &RetargetReport) -> Vec<TrajectoryRecord> {
    times
        .iter()
        .zip(&report.frames)
        .map(|(&t, f)| TrajectoryRecord {
            t,
            q: f.q.clone(),
            latent_distance: f.latent_distance,
            cosine_distance: Some(f.bone_cosine_distance.iter().sum::<f64>() / 7.0),
        })
        .collect()
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    /// Directory of reference trajectories named `<motion>.truth.jsonl`.
    #[arg(long)]
    pub truth: PathBuf,
    /// `label=dir` holding `<motion>.jsonl` trajectories; repeatable.
    #[arg(long = "run", required = true, value_parser = parse_run)]
    pub runs: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_run(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (label, dir) = s
        .split_once('=')
        .ok_or_else(|| format!("expected label=dir, got {s:?}"))?;
    if label.is_empty() || label == "ALL" {
        return Err(format!("invalid run label {label:?}"));
    }
    Ok((label.to_string(), PathBuf::from(dir)))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub motion: String,
    pub variant: String,
    pub frames: usize,
    pub mean_cosine_distance: f64,
    pub collision_rate: f64,
}

pub const EVAL_HEADER: &str = "motion,variant,frames,mean_cosine_distance,collision_rate";

/// Per-motion rows for every run, then one `ALL` row per run averaging the
/// per-motion means.
pub fn evaluate_runs(model: &RobotModel, truth_dir: &Path, runs: &[(String, PathBuf)]) -> Result<Vec<EvalRow>> {
    let mut motions: Vec<String> = fs::read_dir(truth_dir)
        .with_context(|| format!("reading {}", truth_dir.display()))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let n = e.file_name().to_string_lossy().into_owned();
            n.strip_suffix(TRUTH_SUFFIX).map(str::to_string)
        })
        .collect();
    motions.sort();
    if motions.is_empty() {
        bail!(retarget_core::Error::Empty(format!(
            "no *{TRUTH_SUFFIX} files in {}",
            truth_dir.display()
        )));
    }
    let mut rows = Vec::new();
    let mut per_run: BTreeMap<usize, Vec<(f64, f64, usize)>> = BTreeMap::new();
    for motion in &motions {
        let truth = formats::read_trajectory(&truth_dir.join(format!("{motion}{TRUTH_SUFFIX}")))?;
        let truth_x = truth
            .iter()
            .map(|r| skeleton_of(model, &r.q))
            .collect::<retarget_core::Result<Vec<_>>>()?;
        for (k, (label, dir)) in runs.iter().enumerate() {
            let path = dir.join(format!("{motion}.jsonl"));
            require_file(&path)?;
            let pred = formats::read_trajectory(&path)?;
            if pred.len() != truth.len() {
                return Err(anyhow::Error::new(retarget_core::Error::DimensionMismatch {
                    expected: truth.len(),
                    got: pred.len(),
                })
                .context(format!("frame count of {} vs reference", path.display())));
            }
            let mut dist = 0.0;
            for (p, tx) in pred.iter().zip(&truth_x) {
                dist += cosine_distance_metric(&skeleton_of(model, &p.q)?, tx);
            }
            let configs: Vec<_> = pred.iter().map(|r| r.q.clone()).collect();
            let row = EvalRow {
                motion: motion.clone(),
                variant: label.clone(),
                frames: pred.len(),
                mean_cosine_distance: dist / pred.len().max(1) as f64,
                collision_rate: collision_rate(model, &configs),
            };
            per_run.entry(k).or_default().push((
                row.mean_cosine_distance,
                row.collision_rate,
                row.frames,
            ));
            rows.push(row);
        }
    }
    for (k, (label, _)) in runs.iter().enumerate() {
        let v = &per_run[&k];
        let n = v.len() as f64;
        rows.push(EvalRow {
            motion: "ALL".into(),
            variant: label.clone(),
            frames: v.iter().map(|r| r.2).sum(),
            mean_cosine_distance: v.iter().map(|r| r.0).sum::<f64>() / n,
            collision_rate: v.iter().map(|r| r.1).sum::<f64>() / n,
        });
    }
    Ok(rows)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let model = a.model.load()?;
    let mut m = ManifestBuilder::new("eval", &a, vec![]);
    m.input(&a.truth);
    for (_, d) in &a.runs {
        m.input(d);
    }
    let rows = evaluate_runs(&model, &a.truth, &a.runs)?;
    write_lines(
        &a.out,
        Some(EVAL_HEADER),
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                r.motion, r.variant, r.frames, r.mean_cosine_distance, r.collision_rate
            )
        }),
    )?;
    m.output(&a.out);
    m.finish(&a.out.with_extension("manifest.json"))?;
    for r in rows.iter().filter(|r| r.motion == "ALL") {
        println!(
            "{}: mean cosine distance {:.5}, collision rate {}",
            r.variant, r.mean_cosine_distance, r.collision_rate
        );
    }
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SyntheticConfig::with_seed(a.seed);
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    let mut m = ManifestBuilder::new("synth", &cfg, vec![a.seed]);
    let report: SyntheticReport = synthetic::run_synthetic(&cfg)?;
    m.stage("train and evaluate");
    let csv = a.out.join("synthetic.csv");
    write_lines(&csv, Some(SyntheticReport::CSV_HEADER), report.csv_rows())?;
    let mut summary = serde_json::to_value(&report)?;
    summary["invariant_error_reduction"] = serde_json::json!(report.invariant_reduction());
    let summary_path = a.out.join("summary.json");
    write_bytes(&summary_path, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    for (name, log) in &report.telemetry {
        let p = a.out.join(format!("telemetry_{name}.csv"));
        write_lines(&p, Some(StepLosses::CSV_HEADER), log.iter().map(StepLosses::csv_row))?;
        m.output(&p);
    }
    m.output(&csv);
    m.output(&summary_path);
    m.finish(&a.out.join(MANIFEST_FILE))?;
    for v in &report.variants {
        println!(
            "{}: mean error {:.4} (feasible region {:.4}, projection-invariant region {:.4})",
            v.name, v.mean_error, v.feasible_error, v.invariant_error
        );
    }
    if let Some(r) = report.invariant_reduction() {
        println!("projection-invariant error reduction: {:.1}%", 100.0 * r);
    }
    Ok(())
}
