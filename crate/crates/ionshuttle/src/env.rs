//! The shuttling decision process: states, rewards, transitions, batching.
//!
//! Each decision epoch applies one shuttling action, which takes a positive
//! action-dependent duration `F`. The base reward integrates a constant
//! penalty rate over the epoch, `R = c_r · (e^{-βF} - 1) / β`, so shorter
//! total schedules earn strictly higher return under the continuous
//! discount rate `β` (`γ = e^{-β}`). A potential-based shaped reward
//! `R' = R + γ_s^F · φ(s') - φ(s)` with `φ(s) = -(remaining gates)`
//! densifies the signal. After every action, all front-layer gates whose
//! operands meet in the compute zone execute automatically at zero cost.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chip::{ChipSpec, ChipState};
use crate::circuit::{generate_random_problem, Circuit, GateDag};
use crate::error::{Error, Result};

/// Discounting and shaping parameters.
///
/// Serialized with both `beta` (authoritative, bit-exact) and the derived
/// `gamma`; config files may specify either.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RewardConfigRepr", into = "RewardConfigRepr")]
pub struct RewardConfig {
    /// Continuous discount rate `β > 0`; the per-step factor is `γ = e^{-β}`.
    pub beta: f64,
    /// Constant penalty rate `c_r > 0`.
    pub penalty_rate: f64,
    /// Shaping discount factor `γ_s ∈ (0, 1]`.
    pub gamma_shaping: f64,
    pub shaping_enabled: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct RewardConfigRepr {
    beta: Option<f64>,
    gamma: Option<f64>,
    penalty_rate: f64,
    gamma_shaping: f64,
    shaping_enabled: bool,
}

impl Default for RewardConfigRepr {
    fn default() -> Self {
        RewardConfigRepr::from(RewardConfig::default())
    }
}

impl From<RewardConfig> for RewardConfigRepr {
    fn from(cfg: RewardConfig) -> Self {
        RewardConfigRepr {
            beta: Some(cfg.beta),
            gamma: Some(cfg.gamma()),
            penalty_rate: cfg.penalty_rate,
            gamma_shaping: cfg.gamma_shaping,
            shaping_enabled: cfg.shaping_enabled,
        }
    }
}

impl From<RewardConfigRepr> for RewardConfig {
    fn from(repr: RewardConfigRepr) -> Self {
        let beta = repr
            .beta
            .or(repr.gamma.map(|g| -g.ln()))
            .unwrap_or_else(|| RewardConfig::default().beta);
        RewardConfig {
            beta,
            penalty_rate: repr.penalty_rate,
            gamma_shaping: repr.gamma_shaping,
            shaping_enabled: repr.shaping_enabled,
        }
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            beta: -(0.9995f64.ln()),
            penalty_rate: 0.1,
            gamma_shaping: 1.0,
            shaping_enabled: true,
        }
    }
}

impl RewardConfig {
    /// Builds the config from the per-unit-duration discount factor `γ`.
    pub fn from_gamma(gamma: f64, penalty_rate: f64) -> Self {
        RewardConfig {
            beta: -gamma.ln(),
            penalty_rate,
            ..Default::default()
        }
    }

    /// The equivalent MDP discount factor `γ = e^{-β}`.
    pub fn gamma(&self) -> f64 {
        (-self.beta).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidSpec("discount rate beta must be positive".into()));
        }
        if !(self.penalty_rate > 0.0) {
            return Err(Error::InvalidSpec("penalty rate must be positive".into()));
        }
        if !(self.gamma_shaping > 0.0 && self.gamma_shaping <= 1.0) {
            return Err(Error::InvalidSpec("shaping factor must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Base reward of an epoch of duration `f`: the integral of the
    /// discounted penalty rate, `c_r · (e^{-βf} - 1) / β`. Always negative.
    pub fn base_reward(&self, f: f64) -> f64 {
        debug_assert!(f > 0.0);
        self.penalty_rate * (-self.beta * f).exp_m1() / self.beta
    }

    /// The additive shaping term `γ_s^F · φ(s') - φ(s)`, 0 when disabled.
    ///
    /// With `γ_s = 1` this is an exact integer (the gates executed during
    /// the epoch), so shaped-minus-base telescopes exactly over episodes.
    pub fn shaping_term(&self, f: f64, phi_state: f64, phi_next: f64) -> f64 {
        if !self.shaping_enabled {
            return 0.0;
        }
        self.gamma_shaping.powf(f) * phi_next - phi_state
    }

    /// Shaped reward `R + γ_s^F · φ(s') - φ(s)`; identity when disabled.
    pub fn shaped_reward(&self, base: f64, f: f64, phi_state: f64, phi_next: f64) -> f64 {
        base + self.shaping_term(f, phi_state, phi_next)
    }
}

/// Shaping potential: minus the number of gates still to execute
/// (0 on terminal states).
pub fn potential(dag: &GateDag) -> f64 {
    -(dag.remaining() as f64)
}

/// Outcome of one decision epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    /// Epoch duration `F > 0` in steps.
    pub duration: f64,
    pub base_reward: f64,
    pub shaped_reward: f64,
    /// `shaped_reward - base_reward` as computed, kept separately so the
    /// telescoping identity can be checked without float cancellation.
    pub shaping_term: f64,
    /// True when the last gate executed this epoch.
    pub done: bool,
    pub gates_executed: u32,
}

/// A single shuttling episode: chip state, gate DAG and elapsed duration.
#[derive(Debug, Clone)]
pub struct ShuttleEnv {
    spec: Arc<ChipSpec>,
    reward: RewardConfig,
    state: ChipState,
    dag: GateDag,
    elapsed: f64,
    steps: usize,
    initial_gates: usize,
}

impl ShuttleEnv {
    /// Starts an episode on `circuit` from an explicit initial placement.
    pub fn new(
        spec: Arc<ChipSpec>,
        reward: RewardConfig,
        circuit: &Circuit,
        placement: ChipState,
    ) -> Result<Self> {
        reward.validate()?;
        spec.validate_state(&placement)?;
        if usize::from(circuit.num_qubits()) > spec.n_max() {
            return Err(Error::Capacity(format!(
                "circuit uses {} qubits, chip supports {}",
                circuit.num_qubits(),
                spec.n_max()
            )));
        }
        for g in circuit.gates() {
            for q in [g.x, g.y] {
                if placement.cell_of(q).is_none() {
                    return Err(Error::InvalidState(format!(
                        "qubit {q} referenced by the circuit is not on the chip"
                    )));
                }
            }
        }
        let mut env = ShuttleEnv {
            spec,
            reward,
            state: placement,
            dag: circuit.dag(),
            elapsed: 0.0,
            steps: 0,
            initial_gates: circuit.len(),
        };
        // Gates whose operands already sit in compute execute for free
        // before the first decision epoch.
        env.execute_ready_gates()?;
        env.initial_gates = env.dag.remaining();
        Ok(env)
    }

    pub fn spec(&self) -> &ChipSpec {
        &self.spec
    }

    pub fn state(&self) -> &ChipState {
        &self.state
    }

    pub fn dag(&self) -> &GateDag {
        &self.dag
    }

    /// Cumulative duration of all epochs so far.
    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    /// Decision epochs taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn initial_gates(&self) -> usize {
        self.initial_gates
    }

    pub fn is_terminal(&self) -> bool {
        self.dag.is_done()
    }

    pub fn legal_mask(&self) -> Vec<bool> {
        self.spec.legal_mask(&self.state)
    }

    pub fn legal_actions(&self) -> Vec<usize> {
        self.spec.legal_actions(&self.state)
    }

    fn execute_ready_gates(&mut self) -> Result<u32> {
        let mut executed = 0;
        loop {
            let executable = self.dag.executable_gates(&self.spec, &self.state);
            if executable.is_empty() {
                return Ok(executed);
            }
            for id in executable {
                self.dag.execute_gate(id)?;
                executed += 1;
            }
        }
    }

    /// Applies one shuttling action, then executes every executable
    /// front-layer gate to a fixpoint.
    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.is_terminal() {
            return Err(Error::InvalidState("step on a terminal episode".into()));
        }
        let phi_state = potential(&self.dag);
        let duration = self.spec.apply_in_place(&mut self.state, action)?;
        let gates_executed = self.execute_ready_gates()?;
        let phi_next = potential(&self.dag);
        let base_reward = self.reward.base_reward(duration);
        let shaping_term = self.reward.shaping_term(duration, phi_state, phi_next);
        self.elapsed += duration;
        self.steps += 1;
        Ok(StepResult {
            duration,
            base_reward,
            shaped_reward: base_reward + shaping_term,
            shaping_term,
            done: self.dag.is_done(),
            gates_executed,
        })
    }
}

/// Per-env outcome of [`VecEnv::batch_step`], including auto-reset
/// bookkeeping.
#[derive(Debug, Clone)]
pub struct BatchStep {
    pub result: StepResult,
    /// Episode hit the step cap without terminating.
    pub truncated: bool,
    /// Chip state and DAG of the final state, kept when the episode ended
    /// (the env itself already holds the freshly reset problem).
    pub final_state: Option<Box<(ChipState, GateDag)>>,
    /// Episode statistics, present when the episode ended.
    pub episode: Option<EpisodeEnd>,
}

/// Statistics of a finished (or truncated) episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeEnd {
    pub duration: f64,
    pub steps: usize,
    pub solved: bool,
    pub initial_gates: usize,
}

/// A fixed-size batch of independent training environments.
///
/// Each env owns a counter-mode RNG stream, so results depend only on
/// `(seed, action sequences)` regardless of stepping order. Episodes that
/// terminate or hit the step cap are reset to a fresh random problem.
pub struct VecEnv {
    spec: Arc<ChipSpec>,
    reward: RewardConfig,
    n_gates_budget: usize,
    episode_cap: usize,
    envs: Vec<ShuttleEnv>,
    rngs: Vec<ChaCha8Rng>,
}

impl VecEnv {
    pub fn new(
        spec: Arc<ChipSpec>,
        reward: RewardConfig,
        n_gates_budget: usize,
        episode_cap: usize,
        n_envs: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rngs = Vec::with_capacity(n_envs);
        for i in 0..n_envs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rngs.push(rng);
        }
        let mut vec_env = VecEnv {
            spec,
            reward,
            n_gates_budget,
            episode_cap,
            envs: Vec::with_capacity(n_envs),
            rngs,
        };
        for i in 0..n_envs {
            let env = vec_env.fresh_episode(i)?;
            vec_env.envs.push(env);
        }
        Ok(vec_env)
    }

    fn fresh_episode(&mut self, i: usize) -> Result<ShuttleEnv> {
        // Zero-gate draws are legal samples but trivial episodes; redraw.
        loop {
            let (circuit, placement) =
                generate_random_problem(&self.spec, self.n_gates_budget, &mut self.rngs[i])?;
            if !circuit.is_empty() {
                return ShuttleEnv::new(self.spec.clone(), self.reward, &circuit, placement);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[ShuttleEnv] {
        &self.envs
    }

    pub fn spec(&self) -> &Arc<ChipSpec> {
        &self.spec
    }

    /// Steps every env with its action; equivalent to independent
    /// [`ShuttleEnv::step`] calls plus auto-reset on episode end.
    pub fn batch_step(&mut self, actions: &[usize]) -> Result<Vec<BatchStep>> {
        if actions.len() != self.envs.len() {
            return Err(Error::InvalidState(format!(
                "{} actions for {} envs",
                actions.len(),
                self.envs.len()
            )));
        }
        let mut out = Vec::with_capacity(self.envs.len());
        for i in 0..self.envs.len() {
            let result = self.envs[i].step(actions[i])?;
            let truncated = !result.done && self.envs[i].steps() >= self.episode_cap;
            let mut final_state = None;
            let mut episode = None;
            if result.done || truncated {
                let env = &self.envs[i];
                episode = Some(EpisodeEnd {
                    duration: env.elapsed(),
                    steps: env.steps(),
                    solved: result.done,
                    initial_gates: env.initial_gates(),
                });
                final_state = Some(Box::new((env.state().clone(), env.dag().clone())));
                self.envs[i] = self.fresh_episode(i)?;
            }
            out.push(BatchStep {
                result,
                truncated,
                final_state,
                episode,
            });
        }
        Ok(out)
    }
}
