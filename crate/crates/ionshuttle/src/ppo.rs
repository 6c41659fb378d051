//! Clipped-surrogate policy optimization with duration-aware advantage
//! estimation.
//!
//! The advantage recursion generalizes GAE to variable epoch durations:
//!
//! ```text
//! δ_t = R_t + e^{-β·F_t} · V(s_{t+1}) - V(s_t)
//! Â_t = δ_t + (λ·e^{-β})^{F_t} · Â_{t+1}
//! ```
//!
//! With `F ≡ 1` this reduces to the standard estimator with coefficient
//! `γλ`. Episodes that terminate cut the recursion and zero the bootstrap;
//! episodes truncated by the step cap cut the recursion but bootstrap from
//! the value of the final state.

use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chip::ChipSpec;
use crate::env::{RewardConfig, VecEnv};
use crate::error::{Error, Result};
use crate::nn::{
    clip_grad_norm, entropy, masked_log_softmax, sample_actions, Adam, NetGrads, ResidualNet,
};
use crate::repr::{ObsConfig, Observer, Representation};

/// Policy/value network shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: usize,
    pub blocks: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden: 512, blocks: 3 }
    }
}

/// Full training configuration. Defaults follow the reference
/// hyperparameter table; desk-scale runs shrink the rollout and network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Clipping ratio ε.
    pub clip: f64,
    /// GAE λ.
    pub gae_lambda: f64,
    /// Initial learning rate, decayed linearly to zero.
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Optimization epochs per learning step.
    pub epochs: usize,
    pub minibatch: usize,
    pub n_envs: usize,
    /// Rollout steps per env per learning step.
    pub n_steps: usize,
    /// Total learning steps (rollout + update cycles).
    pub total_iters: usize,
    /// Normalize advantages per update batch.
    pub normalize_advantages: bool,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    /// Episode step cap; truncation bootstraps the value function.
    pub episode_cap: usize,
    /// Gate budget of the training problem generator.
    pub n_gates_budget: usize,
    pub seed: u64,
    pub reward: RewardConfig,
    pub representation: Representation,
    pub obs: ObsConfig,
    pub net: NetConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.1,
            gae_lambda: 0.96,
            learning_rate: 2.5e-4,
            value_coef: 0.5,
            entropy_coef: 1.0e-4,
            epochs: 4,
            minibatch: 1024,
            n_envs: 250,
            n_steps: 40,
            total_iters: 1_000_000,
            normalize_advantages: true,
            grad_clip: 0.5,
            episode_cap: 512,
            n_gates_budget: 1275,
            seed: 0,
            reward: RewardConfig::default(),
            representation: Representation::Proposed,
            obs: ObsConfig::default(),
            net: NetConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn observer(&self) -> Observer {
        Observer { representation: self.representation, cfg: self.obs }
    }

    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::InvalidSpec("clip ratio must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::InvalidSpec("gae lambda must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Linearly decayed learning rate; exactly zero at `total`.
pub fn lr_schedule(lr0: f64, iter: usize, total: usize) -> f64 {
    lr0 * (1.0 - iter as f64 / total as f64)
}

/// Duration-aware advantage estimation over one env's trajectory slice.
///
/// `final_values[t]` is read only when `truncated[t]`; `bootstrap` is the
/// value of the state after the last buffered step. Returns advantages and
/// value targets (`Â + V`).
#[allow(clippy::too_many_arguments)]
pub fn smdp_gae(
    rewards: &[f64],
    durations: &[f64],
    values: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    final_values: &[f64],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_len = rewards.len();
    for xs in [rewards, durations, values, final_values] {
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite input to advantage estimation".into()));
        }
    }
    let mut advantages = vec![0.0; t_len];
    let mut targets = vec![0.0; t_len];
    let mut carry = 0.0;
    for t in (0..t_len).rev() {
        let (next_value, continues) = if terminated[t] {
            (0.0, false)
        } else if truncated[t] {
            (final_values[t], false)
        } else if t + 1 == t_len {
            (bootstrap, true)
        } else {
            (values[t + 1], true)
        };
        let discount = gamma.powf(durations[t]);
        let delta = rewards[t] + discount * next_value - values[t];
        carry = delta
            + if continues {
                (lambda * gamma).powf(durations[t]) * carry
            } else {
                0.0
            };
        advantages[t] = carry;
        targets[t] = carry + values[t];
    }
    Ok((advantages, targets))
}

/// One learning step's worth of transitions, time-major
/// (`row = t * n_envs + env`).
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub n_steps: usize,
    pub obs: Array2<f32>,
    pub masks: Array2<bool>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub base_rewards: Vec<f64>,
    pub rewards: Vec<f64>,
    pub durations: Vec<f64>,
    pub values: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub final_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

impl RolloutBuffer {
    fn new(n_envs: usize, n_steps: usize, obs_dim: usize, n_act: usize) -> Self {
        let rows = n_envs * n_steps;
        RolloutBuffer {
            n_envs,
            n_steps,
            obs: Array2::zeros((rows, obs_dim)),
            masks: Array2::from_elem((rows, n_act), false),
            actions: vec![0; rows],
            log_probs: vec![0.0; rows],
            base_rewards: vec![0.0; rows],
            rewards: vec![0.0; rows],
            durations: vec![0.0; rows],
            values: vec![0.0; rows],
            terminated: vec![false; rows],
            truncated: vec![false; rows],
            final_values: vec![0.0; rows],
            advantages: vec![0.0; rows],
            targets: vec![0.0; rows],
        }
    }

    /// Runs the advantage recursion for every env column.
    pub fn compute_advantages(&mut self, bootstrap: &[f64], gamma: f64, lambda: f64) -> Result<()> {
        let (n, t_len) = (self.n_envs, self.n_steps);
        for e in 0..n {
            let col = |v: &Vec<f64>| (0..t_len).map(|t| v[t * n + e]).collect::<Vec<_>>();
            let colb = |v: &Vec<bool>| (0..t_len).map(|t| v[t * n + e]).collect::<Vec<_>>();
            let (adv, tgt) = smdp_gae(
                &col(&self.rewards),
                &col(&self.durations),
                &col(&self.values),
                &colb(&self.terminated),
                &colb(&self.truncated),
                &col(&self.final_values),
                bootstrap[e],
                gamma,
                lambda,
            )?;
            for t in 0..t_len {
                self.advantages[t * n + e] = adv[t];
                self.targets[t * n + e] = tgt[t];
            }
        }
        Ok(())
    }
}

/// Scalar diagnostics of one minibatch update.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// A gathered minibatch used by the loss.
pub struct Minibatch {
    pub obs: Array2<f32>,
    pub masks: Array2<bool>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Computes the clipped-surrogate loss and exact parameter gradients.
///
/// `loss = -surrogate + value_coef·MSE(v, targets) - entropy_coef·H`.
/// Generic over the element type: training runs in `f32`, the
/// finite-difference verification harness in `f64`.
pub fn ppo_loss_and_grads<F: crate::nn::Scalar>(
    policy: &ResidualNet<F>,
    value: &ResidualNet<F>,
    batch: &Minibatch,
    cfg: &PpoConfig,
) -> Result<(LossStats, NetGrads<F>, NetGrads<F>)> {
    let b = batch.actions.len();
    let bf = b as f64;
    let obs = batch.obs.mapv(|v| F::from(v).unwrap());
    let (logits, policy_cache) = policy.forward_cached(obs.clone());
    let log_probs = masked_log_softmax(&logits, &batch.masks)?;
    let (values_out, value_cache) = value.forward_cached(obs);

    let mut adv = batch.advantages.clone();
    if cfg.normalize_advantages {
        let mean = adv.iter().sum::<f64>() / bf;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / bf;
        let std = var.sqrt().max(1e-8);
        for a in adv.iter_mut() {
            *a = (*a - mean) / std;
        }
    }

    let ent = entropy(&log_probs);
    let mut g_logits = Array2::<F>::zeros(logits.raw_dim());
    let mut g_values = Array2::<F>::zeros(values_out.raw_dim());
    let mut surrogate = 0.0;
    let mut value_loss = 0.0;
    let mut entropy_mean = 0.0;
    let mut clipped = 0usize;
    let (lo, hi) = (1.0 - cfg.clip, 1.0 + cfg.clip);

    for i in 0..b {
        let a = batch.actions[i];
        let logp = log_probs[(i, a)].to_f64().unwrap();
        let ratio = (logp - batch.old_log_probs[i]).exp();
        let s1 = ratio * adv[i];
        let s2 = ratio.clamp(lo, hi) * adv[i];
        let use_unclipped = s1 <= s2;
        surrogate += s1.min(s2);
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        // d(-surr/B)/d logp_a; the clipped branch has zero gradient
        let g_lp = if use_unclipped { -adv[i] * ratio / bf } else { 0.0 };
        let h = ent[i].to_f64().unwrap();
        entropy_mean += h / bf;
        for j in 0..log_probs.ncols() {
            let lp_j = log_probs[(i, j)].to_f64().unwrap();
            let p = lp_j.exp();
            let onehot = if j == a { 1.0 } else { 0.0 };
            let mut g = g_lp * (onehot - p);
            // entropy bonus: d(-c_e·H/B)/dz_j = c_e/B · p_j (log p_j + H)
            if p > 0.0 {
                g += cfg.entropy_coef / bf * p * (lp_j + h);
            }
            g_logits[(i, j)] = F::from(g).unwrap();
        }
        let v = values_out[(i, 0)].to_f64().unwrap();
        let err = v - batch.targets[i];
        value_loss += err * err / bf;
        g_values[(i, 0)] = F::from(cfg.value_coef * 2.0 * err / bf).unwrap();
    }
    surrogate /= bf;

    let stats = LossStats {
        total: -surrogate + cfg.value_coef * value_loss - cfg.entropy_coef * entropy_mean,
        policy_loss: -surrogate,
        value_loss,
        entropy: entropy_mean,
        clip_fraction: clipped as f64 / bf,
    };
    if !stats.total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss (policy {}, value {}, entropy {})",
            stats.policy_loss, stats.value_loss, stats.entropy
        )));
    }

    let mut policy_grads = policy.zero_grads();
    policy.backward(&policy_cache, &g_logits, &mut policy_grads);
    let mut value_grads = value.zero_grads();
    value.backward(&value_cache, &g_values, &mut value_grads);
    Ok((stats, policy_grads, value_grads))
}

/// One line of training telemetry, emitted per learning step.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub iter: usize,
    pub env_steps: usize,
    pub learning_rate: f64,
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub episodes: usize,
    pub solve_rate: f64,
    pub mean_episode_duration: f64,
    pub mean_episode_steps: f64,
    pub elapsed_seconds: f64,
}

/// Trained networks plus per-iteration telemetry.
pub struct TrainOutput {
    pub policy: ResidualNet<f32>,
    pub value: ResidualNet<f32>,
    pub metrics: Vec<Metrics>,
}

/// Versioned checkpoint container; round-trips bit-exactly through JSON.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub train_step: usize,
    pub config: PpoConfig,
    pub obs_dim: usize,
    pub n_act: usize,
    pub policy: ResidualNet<f32>,
    pub value: ResidualNet<f32>,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ckpt.version != Self::VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        if ckpt.policy.in_dim() != ckpt.obs_dim || ckpt.value.in_dim() != ckpt.obs_dim {
            return Err(Error::Checkpoint("parameter shapes disagree with header".into()));
        }
        Ok(ckpt)
    }

    /// A checkpoint only drives chips whose observation layout matches.
    pub fn check_compatible(&self, spec: &ChipSpec) -> Result<()> {
        let dim = self.config.observer().dim(spec);
        if dim != self.obs_dim || spec.num_actions() != self.n_act {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects obs {} / {} actions, chip has {} / {}",
                self.obs_dim,
                self.n_act,
                dim,
                spec.num_actions()
            )));
        }
        Ok(())
    }
}

/// Runs the training loop. `on_iter` sees the nets after every learning
/// step (for checkpointing); a non-finite loss aborts with an error so the
/// caller's last checkpoint stays the latest good state.
pub fn train(
    spec: &Arc<ChipSpec>,
    cfg: &PpoConfig,
    mut on_iter: impl FnMut(&Metrics, &ResidualNet<f32>, &ResidualNet<f32>) -> Result<()>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let observer = cfg.observer();
    let obs_dim = observer.dim(spec);
    let n_act = spec.num_actions();

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(u64::MAX);
    let mut sampler_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sampler_rng.set_stream(u64::MAX - 1);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(u64::MAX - 2);

    let mut policy =
        ResidualNet::<f32>::init(obs_dim, cfg.net.hidden, cfg.net.blocks, n_act, 0.01, &mut init_rng);
    let mut value =
        ResidualNet::<f32>::init(obs_dim, cfg.net.hidden, cfg.net.blocks, 1, 1.0, &mut init_rng);
    let mut policy_adam = Adam::new(&policy);
    let mut value_adam = Adam::new(&value);

    let mut venv = VecEnv::new(
        spec.clone(),
        cfg.reward,
        cfg.n_gates_budget,
        cfg.episode_cap,
        cfg.n_envs,
        cfg.seed,
    )?;

    let start = std::time::Instant::now();
    let mut metrics_log = Vec::new();
    let mut scratch = Vec::with_capacity(obs_dim);
    let observe_all = |venv: &VecEnv, scratch: &mut Vec<f32>| -> (Array2<f32>, Array2<bool>) {
        let n = venv.len();
        let mut obs = Array2::zeros((n, obs_dim));
        let mut masks = Array2::from_elem((n, n_act), false);
        for (e, env) in venv.envs().iter().enumerate() {
            observer.write(env.spec(), env.state(), env.dag(), scratch);
            for (j, v) in scratch.iter().enumerate() {
                obs[(e, j)] = *v;
            }
            for (j, m) in env.legal_mask().iter().enumerate() {
                masks[(e, j)] = *m;
            }
        }
        (obs, masks)
    };

    let (mut obs, mut masks) = observe_all(&venv, &mut scratch);
    for iter in 0..cfg.total_iters {
        let lr = lr_schedule(cfg.learning_rate, iter, cfg.total_iters) as f32;
        let mut buffer = RolloutBuffer::new(cfg.n_envs, cfg.n_steps, obs_dim, n_act);
        let mut pending_final: Vec<(usize, Vec<f32>)> = Vec::new();
        let mut episodes = Vec::new();

        for t in 0..cfg.n_steps {
            let logits = policy.forward(&obs);
            let log_probs = masked_log_softmax(&logits, &masks)?;
            let actions = sample_actions(&log_probs, &mut sampler_rng);
            let values_out = value.forward(&obs);
            let steps = venv.batch_step(&actions)?;

            for e in 0..cfg.n_envs {
                let row = t * cfg.n_envs + e;
                buffer.actions[row] = actions[e];
                buffer.log_probs[row] = f64::from(log_probs[(e, actions[e])]);
                buffer.base_rewards[row] = steps[e].result.base_reward;
                buffer.rewards[row] = steps[e].result.shaped_reward;
                buffer.durations[row] = steps[e].result.duration;
                buffer.values[row] = f64::from(values_out[(e, 0)]);
                buffer.terminated[row] = steps[e].result.done;
                buffer.truncated[row] = steps[e].truncated;
                if steps[e].truncated {
                    let (final_chip, final_dag) = &**steps[e].final_state.as_ref().unwrap();
                    observer.write(spec, final_chip, final_dag, &mut scratch);
                    pending_final.push((row, scratch.clone()));
                }
                if let Some(ep) = steps[e].episode {
                    episodes.push(ep);
                }
            }
            let rows = t * cfg.n_envs..(t + 1) * cfg.n_envs;
            buffer.obs.slice_mut(ndarray::s![rows.clone(), ..]).assign(&obs);
            buffer
                .masks
                .slice_mut(ndarray::s![rows, ..])
                .assign(&masks);

            (obs, masks) = observe_all(&venv, &mut scratch);
        }

        // value of truncated final states, then of the bootstrap states
        if !pending_final.is_empty() {
            let mut fin = Array2::zeros((pending_final.len(), obs_dim));
            for (i, (_, v)) in pending_final.iter().enumerate() {
                for (j, x) in v.iter().enumerate() {
                    fin[(i, j)] = *x;
                }
            }
            let fv = value.forward(&fin);
            for (i, (row, _)) in pending_final.iter().enumerate() {
                buffer.final_values[*row] = f64::from(fv[(i, 0)]);
            }
        }
        let boot = value.forward(&obs);
        let bootstrap: Vec<f64> = (0..cfg.n_envs).map(|e| f64::from(boot[(e, 0)])).collect();
        buffer.compute_advantages(&bootstrap, cfg.reward.gamma(), cfg.gae_lambda)?;

        // optimization epochs over shuffled minibatches
        let rows = cfg.n_envs * cfg.n_steps;
        let mut order: Vec<usize> = (0..rows).collect();
        let mut stats_acc = LossStats::default();
        let mut updates = 0usize;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(cfg.minibatch) {
                let mb = gather_minibatch(&buffer, chunk);
                let (stats, mut pg, mut vg) = ppo_loss_and_grads(&policy, &value, &mb, cfg)?;
                clip_grad_norm(&mut [&mut pg, &mut vg], cfg.grad_clip as f32);
                policy_adam.step(&mut policy, &pg, lr);
                value_adam.step(&mut value, &vg, lr);
                stats_acc.total += stats.total;
                stats_acc.policy_loss += stats.policy_loss;
                stats_acc.value_loss += stats.value_loss;
                stats_acc.entropy += stats.entropy;
                stats_acc.clip_fraction += stats.clip_fraction;
                updates += 1;
            }
        }
        let scale = 1.0 / updates.max(1) as f64;

        let solved = episodes.iter().filter(|e| e.solved).count();
        let metrics = Metrics {
            iter,
            env_steps: (iter + 1) * rows,
            learning_rate: f64::from(lr),
            loss: stats_acc.total * scale,
            policy_loss: stats_acc.policy_loss * scale,
            value_loss: stats_acc.value_loss * scale,
            entropy: stats_acc.entropy * scale,
            clip_fraction: stats_acc.clip_fraction * scale,
            episodes: episodes.len(),
            solve_rate: if episodes.is_empty() {
                0.0
            } else {
                solved as f64 / episodes.len() as f64
            },
            mean_episode_duration: mean(episodes.iter().map(|e| e.duration)),
            mean_episode_steps: mean(episodes.iter().map(|e| e.steps as f64)),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        };
        on_iter(&metrics, &policy, &value)?;
        metrics_log.push(metrics);
    }

    Ok(TrainOutput { policy, value, metrics: metrics_log })
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in it {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Copies the selected buffer rows into a dense minibatch.
pub fn gather_minibatch(buffer: &RolloutBuffer, rows: &[usize]) -> Minibatch {
    let obs_dim = buffer.obs.ncols();
    let n_act = buffer.masks.ncols();
    let mut obs = Array2::zeros((rows.len(), obs_dim));
    let mut masks = Array2::from_elem((rows.len(), n_act), false);
    let mut actions = Vec::with_capacity(rows.len());
    let mut old_log_probs = Vec::with_capacity(rows.len());
    let mut advantages = Vec::with_capacity(rows.len());
    let mut targets = Vec::with_capacity(rows.len());
    for (i, &r) in rows.iter().enumerate() {
        obs.row_mut(i).assign(&buffer.obs.row(r));
        for j in 0..n_act {
            masks[(i, j)] = buffer.masks[(r, j)];
        }
        actions.push(buffer.actions[r]);
        old_log_probs.push(buffer.log_probs[r]);
        advantages.push(buffer.advantages[r]);
        targets.push(buffer.targets[r]);
    }
    Minibatch { obs, masks, actions, old_log_probs, advantages, targets }
}
