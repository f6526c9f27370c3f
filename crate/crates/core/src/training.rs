//! REINFORCE with a shared multi-start baseline.
//!
//! Every step draws `batch` fresh instances. Each instance is rolled out from
//! `pomo_starts` distinct first nodes with sampled decoding; the baseline of
//! an instance is the mean cost of its rollouts and the loss is the
//! advantage-weighted sum of log-probabilities. Instances are processed
//! independently (in parallel with the `parallel` feature) and their
//! gradients summed in index order, so results do not depend on scheduling.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cvrptw::{CvrptwEnv, EnvError, TwMode};
use crate::derive_seed;
use crate::env::RoutingEnv;
use crate::exec::Execution;
use crate::instances::{
    generate_cvrptw, generate_pdptw, travel_matrix, GenProfile, Instance, InstanceError, PdpInstance,
};
use crate::numeric::{Adam, Gradients, Graph, NumericError, Tensor, Var};
use crate::pdptw::PdptwEnv;
use crate::policy::{
    featurize, greedy_heuristic, AttentionModel, Chooser, DecodeMode, HeuristicRule, PolicyConfig, PolicyError, Variant,
};
use crate::solution::{Objective, DEFAULT_SOFT_BETA};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<TrainError> for PolicyError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Policy(p) => p,
            other => PolicyError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Customers per generated instance (requests for pickup-delivery).
    pub problem_size: usize,
    pub batch: usize,
    pub pomo_starts: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Penalize lateness instead of masking late customers.
    pub soft_windows: bool,
    pub policy: PolicyConfig,
}

impl TrainConfig {
    /// Full-scale settings: 80 instances of 50 customers per batch, 16
    /// starts, 200 epochs of 250 steps, learning rate 1e-4.
    pub fn new(variant: Variant) -> Self {
        TrainConfig {
            problem_size: 50,
            batch: 80,
            pomo_starts: 16,
            epochs: 200,
            steps_per_epoch: 250,
            lr: 1e-4,
            seed: 0,
            soft_windows: false,
            policy: PolicyConfig::new(variant),
        }
    }

    pub fn variant(&self) -> Variant {
        self.policy.variant
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.policy.validate()?;
        if self.pomo_starts < 2 {
            return Err(TrainError::Config("pomo_starts must be at least 2 for a baseline".into()));
        }
        if self.batch == 0 || self.epochs == 0 || self.steps_per_epoch == 0 || self.problem_size == 0 {
            return Err(TrainError::Config("batch, epochs, steps_per_epoch and problem_size must be positive".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(TrainError::Config("lr must be positive".into()));
        }
        if self.soft_windows && self.variant() == Variant::Cpdptw {
            return Err(TrainError::Config("soft windows are only supported for cvrptw".into()));
        }
        Ok(())
    }

    /// Training cost: distance, plus weighted lateness under soft windows.
    pub fn objective(&self) -> Objective {
        if self.soft_windows {
            Objective::SoftPenalized { beta: DEFAULT_SOFT_BETA }
        } else {
            Objective::Distance
        }
    }

    fn tw_mode(&self) -> TwMode {
        if self.soft_windows {
            TwMode::Soft
        } else {
            TwMode::Hard
        }
    }
}

/// A generated training or evaluation instance.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratedInstance {
    Vrp(Instance),
    Pdp(PdpInstance),
}

impl GeneratedInstance {
    pub fn name(&self) -> &str {
        match self {
            GeneratedInstance::Vrp(i) => &i.name,
            GeneratedInstance::Pdp(i) => &i.name,
        }
    }
}

pub fn generate_instance(variant: Variant, size: usize, seed: u64) -> Result<GeneratedInstance, InstanceError> {
    Ok(match variant {
        Variant::Cvrp => {
            let mut profile = GenProfile::cvrptw();
            profile.p_tw = 0.0;
            GeneratedInstance::Vrp(generate_cvrptw(seed, size, &profile)?)
        }
        Variant::Cvrptw => GeneratedInstance::Vrp(generate_cvrptw(seed, size, &GenProfile::cvrptw())?),
        Variant::Cpdptw => GeneratedInstance::Pdp(generate_pdptw(seed, size, &GenProfile::pdptw())?),
    })
}

/// Calls `$body` with `$env` bound to the environment of `$inst`.
macro_rules! with_env {
    ($inst:expr, $mode:expr, |$env:ident| $body:expr) => {
        match $inst {
            GeneratedInstance::Vrp(inst) => {
                let dist = travel_matrix(inst);
                let $env = CvrptwEnv::new(inst, &dist, $mode);
                $body
            }
            GeneratedInstance::Pdp(inst) => {
                let dist = travel_matrix(inst);
                let $env = PdptwEnv::new(inst, &dist);
                $body
            }
        }
    };
}

/// `n` distinct feasible first actions drawn without replacement; when
/// fewer exist, all of them repeated cyclically.
pub fn sample_start_nodes<E: RoutingEnv>(env: &E, n: usize, seed: u64) -> Result<Vec<usize>, EnvError> {
    let end = env.instance().end_depot();
    let mask = env.mask(&env.initial_state());
    let mut feasible: Vec<usize> = (0..end).filter(|&a| mask[a]).collect();
    if feasible.is_empty() {
        return Err(EnvError::Guard("no feasible first action".into()));
    }
    feasible.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if feasible.len() >= n {
        feasible.truncate(n);
        Ok(feasible)
    } else {
        Ok((0..n).map(|k| feasible[k % feasible.len()]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean_cost: f64,
    pub best_cost: f64,
    /// Per-instance baselines.
    pub baselines: Vec<f64>,
    /// Largest `|Σ_j advantage|` over instances.
    pub max_advantage_sum: f64,
    pub grad_norm: f64,
    pub seconds: f64,
}

/// `loss = Σ_j adv_j · log p_j · scale` for one instance's rollouts.
fn weighted_loss(g: &mut Graph, log_probs: Var, costs: &[f64], scale: f64) -> Result<(Var, f64, f64), NumericError> {
    let baseline = costs.iter().sum::<f64>() / costs.len() as f64;
    let adv: Vec<f64> = costs.iter().map(|c| c - baseline).collect();
    let adv_sum = adv.iter().sum::<f64>();
    let a = g.input(Tensor::new(adv.len(), 1, adv)?);
    let w = g.mul(log_probs, a)?;
    let s = g.sum(w);
    Ok((g.scale(s, scale), baseline, adv_sum))
}

struct InstanceOutcome {
    grads: Gradients,
    costs: Vec<f64>,
    baseline: f64,
    adv_sum: f64,
}

fn rollout_gradient<E: RoutingEnv>(
    model: &AttentionModel,
    env: &E,
    cfg: &TrainConfig,
    seed: u64,
    scale: f64,
) -> Result<InstanceOutcome, TrainError> {
    let starts: Vec<Option<usize>> =
        sample_start_nodes(env, cfg.pomo_starts, derive_seed(seed, &[1]))?.into_iter().map(Some).collect();
    let mut g = Graph::new(&model.params);
    let enc = model.encode(&mut g, &featurize(env, &model.config))?;
    let out = model.rollout_batch(
        &mut g,
        &enc,
        env,
        &starts,
        Chooser::Decode(DecodeMode::Sample(derive_seed(seed, &[2]))),
    )?;
    let costs: Vec<f64> = out.states.iter().map(|s| env.cost(s, cfg.objective())).collect();
    let (loss, baseline, adv_sum) = weighted_loss(&mut g, out.log_probs, &costs, scale)?;
    let grads = g.backward(loss)?;
    Ok(InstanceOutcome { grads, costs, baseline, adv_sum })
}

fn instance_seed(cfg: &TrainConfig, step: u64, i: usize) -> u64 {
    derive_seed(cfg.seed, &[step, i as u64])
}

/// Computes the batch gradient for global step `step` without updating.
fn batch_gradient(
    model: &AttentionModel,
    cfg: &TrainConfig,
    step: u64,
    exec: Execution,
) -> Result<(Gradients, Vec<InstanceOutcome>), TrainError> {
    let scale = 1.0 / (cfg.batch * cfg.pomo_starts) as f64;
    let outcomes = exec.map(cfg.batch, |i| -> Result<InstanceOutcome, TrainError> {
        let seed = instance_seed(cfg, step, i);
        let inst = generate_instance(cfg.variant(), cfg.problem_size, seed)?;
        with_env!(&inst, cfg.tw_mode(), |env| rollout_gradient(model, &env, cfg, seed, scale))
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut total = Gradients::zeros(&model.params);
    for o in &outcomes {
        total.add_assign(&o.grads);
    }
    Ok((total, outcomes))
}

/// One optimizer step on a freshly generated batch.
pub fn train_step(
    model: &mut AttentionModel,
    cfg: &TrainConfig,
    step: u64,
    exec: Execution,
) -> Result<BatchStats, TrainError> {
    let t0 = Instant::now();
    let (grads, outcomes) = batch_gradient(model, cfg, step, exec)?;
    model.params.adam_step(&grads, &Adam::with_lr(cfg.lr));
    let all: Vec<f64> = outcomes.iter().flat_map(|o| o.costs.iter().copied()).collect();
    Ok(BatchStats {
        mean_cost: all.iter().sum::<f64>() / all.len() as f64,
        best_cost: all.iter().copied().fold(f64::INFINITY, f64::min),
        baselines: outcomes.iter().map(|o| o.baseline).collect(),
        max_advantage_sum: outcomes.iter().map(|o| o.adv_sum.abs()).fold(0.0, f64::max),
        grad_norm: grads.norm(),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub out_dir: PathBuf,
    pub execution: Execution,
    /// Continue from this checkpoint; its step counter fixes the next step.
    pub resume: Option<PathBuf>,
}

pub const LOG_FILE: &str = "train_log.csv";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch}.ckpt")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub checkpoints: Vec<PathBuf>,
    pub log: PathBuf,
    pub steps: u64,
    pub last: Option<BatchStats>,
}

/// Runs the epoch loop, writing `epoch_{k}.ckpt` after every epoch and one
/// CSV row per step. With `resume`, the log is appended to.
pub fn train(cfg: &TrainConfig, opts: &TrainOptions) -> Result<(AttentionModel, TrainSummary), TrainError> {
    cfg.validate()?;
    fs::create_dir_all(&opts.out_dir)?;
    let mut model = match &opts.resume {
        Some(p) => {
            let m = AttentionModel::load(p)?;
            if m.config != cfg.policy {
                return Err(TrainError::Config(format!(
                    "checkpoint {} has a different policy configuration",
                    p.display()
                )));
            }
            m
        }
        None => AttentionModel::new(cfg.policy, derive_seed(cfg.seed, &[u64::MAX]))?,
    };
    let per_epoch = cfg.steps_per_epoch as u64;
    let done = model.params.step();
    if done % per_epoch != 0 {
        return Err(TrainError::Config(format!("checkpoint step {done} is not at an epoch boundary")));
    }
    let log = opts.out_dir.join(LOG_FILE);
    let fresh = opts.resume.is_none() || !log.exists();
    let mut file = fs::OpenOptions::new().create(true).append(!fresh).write(true).truncate(fresh).open(&log)?;
    if fresh {
        writeln!(file, "# seed = {}, variant = {}", cfg.seed, cfg.variant())?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(["epoch", "step", "mean_cost", "best_cost", "grad_norm", "seconds"])?;
    }
    let mut summary = TrainSummary { checkpoints: Vec::new(), log: log.clone(), steps: 0, last: None };
    for epoch in (done / per_epoch) as usize + 1..=cfg.epochs {
        for t in 0..per_epoch {
            let step = (epoch as u64 - 1) * per_epoch + t;
            let stats = train_step(&mut model, cfg, step, opts.execution)?;
            w.write_record(&[
                epoch.to_string(),
                step.to_string(),
                stats.mean_cost.to_string(),
                stats.best_cost.to_string(),
                stats.grad_norm.to_string(),
                format!("{:.6}", stats.seconds),
            ])?;
            summary.steps += 1;
            summary.last = Some(stats);
        }
        w.flush()?;
        let path = opts.out_dir.join(checkpoint_name(epoch));
        model.save(&path)?;
        summary.checkpoints.push(path);
    }
    Ok((model, summary))
}

/// One instance of a frozen batch: the sampled actions and their costs.
#[derive(Debug, Clone)]
pub struct FrozenItem {
    pub instance: GeneratedInstance,
    pub starts: Vec<Option<usize>>,
    pub actions: Vec<Vec<usize>>,
    pub costs: Vec<f64>,
}

/// A batch whose sampled actions are fixed, so the surrogate objective is a
/// smooth function of the parameters.
#[derive(Debug, Clone)]
pub struct FrozenBatch {
    pub items: Vec<FrozenItem>,
    pub soft_windows: bool,
    pub pomo_starts: usize,
}

fn freeze_item<E: RoutingEnv>(
    model: &AttentionModel,
    env: &E,
    cfg: &TrainConfig,
    seed: u64,
    instance: &GeneratedInstance,
) -> Result<FrozenItem, TrainError> {
    let starts: Vec<Option<usize>> =
        sample_start_nodes(env, cfg.pomo_starts, derive_seed(seed, &[1]))?.into_iter().map(Some).collect();
    let mut g = Graph::new(&model.params);
    let enc = model.encode(&mut g, &featurize(env, &model.config))?;
    let mode = DecodeMode::Sample(derive_seed(seed, &[2]));
    let out = model.rollout_batch(&mut g, &enc, env, &starts, Chooser::Decode(mode))?;
    Ok(FrozenItem {
        instance: instance.clone(),
        starts,
        actions: out.traces.into_iter().map(|t| t.actions).collect(),
        costs: out.states.iter().map(|s| env.cost(s, cfg.objective())).collect(),
    })
}

fn replay_log_probs<E: RoutingEnv>(
    model: &AttentionModel,
    g: &mut Graph,
    env: &E,
    item: &FrozenItem,
) -> Result<Var, PolicyError> {
    let enc = model.encode(g, &featurize(env, &model.config))?;
    Ok(model.rollout_batch(g, &enc, env, &item.starts, Chooser::Replay(&item.actions))?.log_probs)
}

pub fn freeze_batch(model: &AttentionModel, cfg: &TrainConfig, step: u64) -> Result<FrozenBatch, TrainError> {
    let mut items = Vec::with_capacity(cfg.batch);
    for i in 0..cfg.batch {
        let seed = instance_seed(cfg, step, i);
        let instance = generate_instance(cfg.variant(), cfg.problem_size, seed)?;
        let item = with_env!(&instance, cfg.tw_mode(), |env| freeze_item(model, &env, cfg, seed, &instance))?;
        items.push(item);
    }
    Ok(FrozenBatch { items, soft_windows: cfg.soft_windows, pomo_starts: cfg.pomo_starts })
}

/// Surrogate loss of a frozen batch on the parameters of `g`, with every
/// cost shifted by `shift`.
pub fn frozen_loss(model: &AttentionModel, g: &mut Graph, batch: &FrozenBatch, shift: f64) -> Result<Var, PolicyError> {
    let mode = if batch.soft_windows { TwMode::Soft } else { TwMode::Hard };
    let scale = 1.0 / (batch.items.len() * batch.pomo_starts) as f64;
    let mut total: Option<Var> = None;
    for item in &batch.items {
        let lp = with_env!(&item.instance, mode, |env| replay_log_probs(model, g, &env, item))?;
        let costs: Vec<f64> = item.costs.iter().map(|c| c + shift).collect();
        let (loss, _, _) = weighted_loss(g, lp, &costs, scale)?;
        total = Some(match total {
            Some(t) => g.add(t, loss)?,
            None => loss,
        });
    }
    total.ok_or_else(|| PolicyError::Config("empty frozen batch".into()))
}

pub fn frozen_gradient(model: &AttentionModel, batch: &FrozenBatch, shift: f64) -> Result<Gradients, PolicyError> {
    let mut g = Graph::new(&model.params);
    let loss = frozen_loss(model, &mut g, batch, shift)?;
    Ok(g.backward(loss)?)
}

/// Held-out evaluation instances, disjoint from the training stream.
pub fn held_out(
    variant: Variant,
    size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<GeneratedInstance>, InstanceError> {
    (0..count).map(|k| generate_instance(variant, size, derive_seed(seed ^ 0xE7A1, &[k as u64]))).collect()
}

/// Mean greedy-rollout cost of the policy and of the nearest-feasible
/// heuristic over `instances`.
pub fn evaluate_greedy(
    model: &AttentionModel,
    instances: &[GeneratedInstance],
    objective: Objective,
    mode: TwMode,
    exec: Execution,
) -> Result<(f64, f64), TrainError> {
    let rows = exec.map(instances.len(), |k| -> Result<(f64, f64), TrainError> {
        with_env!(&instances[k], mode, |env| {
            let r = model.rollout(&env, DecodeMode::Greedy, None)?;
            let h = greedy_heuristic(&env, HeuristicRule::NearestFeasible)?;
            Ok((env.solution_cost(&r.solution, objective), env.solution_cost(&h, objective)))
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let n = rows.len().max(1) as f64;
    Ok((rows.iter().map(|r| r.0).sum::<f64>() / n, rows.iter().map(|r| r.1).sum::<f64>() / n))
}

/// Reads a training log, skipping the comment line.
pub fn read_log(path: &Path) -> Result<Vec<csv::StringRecord>, TrainError> {
    let text = fs::read_to_string(path)?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    Ok(r.records().collect::<Result<Vec<_>, _>>()?)
}
