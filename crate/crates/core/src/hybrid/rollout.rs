//! Environment interface, rollout collection and advantage estimation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Activation, Mlp};
use super::normalize::RunningNormalizer;
use super::policy::{gated_act, ActMode, GatedPolicy};
use crate::error::{Error, Result};
use crate::scheduler::stream_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// One local observation per agent.
    pub obs: Vec<Vec<f64>>,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: Observation,
    pub rewards: Vec<f64>,
    pub done: bool,
}

pub trait MultiAgentEnv {
    fn n_agents(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Observation>;
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Transition>;
}

/// State-value network over the global state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub net: Mlp<f64>,
    pub normalizer: RunningNormalizer,
}

impl Critic {
    pub fn new(normalizer: RunningNormalizer, hidden: &[usize], rng: &mut impl rand::Rng) -> Result<Self> {
        let mut widths = vec![normalizer.dim()];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Ok(Critic { net: Mlp::new(&widths, Activation::Tanh, rng)?, normalizer })
    }

    pub fn value_normalized(&self, state_n: &[f64]) -> Result<f64> {
        Ok(self.net.forward(state_n)?[0])
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        self.value_normalized(&self.normalizer.normalize(state))
    }
}

/// One agent's trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentTrace {
    pub obs: Vec<Vec<f64>>,
    pub obs_n: Vec<Vec<f64>>,
    pub state: Vec<Vec<f64>>,
    pub state_n: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub gates: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// True where the step ended an episode.
    pub dones: Vec<bool>,
    /// Recurrent states; empty vectors for feed-forward policies.
    pub hidden: Vec<Vec<f64>>,
    /// Value of the state after the last step, used when it did not end an episode.
    pub last_value: f64,
}

impl AgentTrace {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.obs.len(),
            self.obs_n.len(),
            self.state.len(),
            self.state_n.len(),
            self.actions.len(),
            self.gates.len(),
            self.log_probs.len(),
            self.values.len(),
            self.dones.len(),
            self.hidden.len(),
        ];
        if lens.iter().any(|l| *l != n) {
            return Err(Error::Contract(format!("misaligned trace: {lens:?} vs {n} rewards")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub agents: Vec<AgentTrace>,
    /// Sum of rewards of each finished episode, per agent.
    pub episode_returns: Vec<Vec<f64>>,
}

impl RolloutBuffer {
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.agents.first() else { return Err(Error::Contract("empty buffer".into())) };
        for a in &self.agents {
            a.check()?;
            if a.len() != first.len() || a.dones != first.dones {
                return Err(Error::Contract("agents' traces are not aligned".into()));
            }
        }
        Ok(())
    }

    /// Mean over finished episodes of the agent-averaged return.
    pub fn mean_episode_return(&self) -> Option<f64> {
        let n = self.episode_returns.first()?.len();
        if n == 0 {
            return None;
        }
        let per_ep: f64 = (0..n).map(|e| self.episode_returns.iter().map(|r| r[e]).sum::<f64>() / self.agents.len() as f64).sum();
        Some(per_ep / n as f64)
    }
}

/// Rolls the gated policies for `steps` environment steps. Episodes restart
/// as they finish; policies and critics are read-only throughout.
pub fn collect_rollout(
    env: &mut dyn MultiAgentEnv,
    policies: &[&GatedPolicy],
    critics: &[&Critic],
    steps: usize,
    seed: u64,
    mode: ActMode,
) -> Result<RolloutBuffer> {
    let n = env.n_agents();
    if policies.len() != n || critics.len() != n {
        return Err(Error::Contract(format!("{n} agents but {} policies and {} critics", policies.len(), critics.len())));
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| ChaCha8Rng::seed_from_u64(stream_seed(&[seed, i as u64, 0xac7]))).collect();
    let mut buf = RolloutBuffer { agents: vec![AgentTrace::default(); n], episode_returns: vec![Vec::new(); n] };
    let mut episode = 0u64;
    let mut current = env.reset(stream_seed(&[seed, episode, 0xe9]))?;
    let mut running = vec![0.0; n];
    for _ in 0..steps {
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let act = gated_act(policies[i], &current.obs[i], mode, &mut rngs[i])?;
            let t = &mut buf.agents[i];
            let state_n = critics[i].normalizer.normalize(&current.state);
            t.values.push(critics[i].value_normalized(&state_n)?);
            t.obs.push(current.obs[i].clone());
            t.obs_n.push(act.obs_n.clone());
            t.state.push(current.state.clone());
            t.state_n.push(state_n);
            t.actions.push(act.a.clone());
            t.gates.push(act.g);
            t.log_probs.push(act.log_prob);
            t.hidden.push(Vec::new());
            actions.push(act.u);
        }
        let tr = env.step(&actions)?;
        if tr.rewards.len() != n || tr.next.obs.len() != n {
            return Err(Error::Env(format!("environment returned {} rewards for {n} agents", tr.rewards.len())));
        }
        for i in 0..n {
            buf.agents[i].rewards.push(tr.rewards[i]);
            buf.agents[i].dones.push(tr.done);
            running[i] += tr.rewards[i];
        }
        if tr.done {
            for i in 0..n {
                buf.episode_returns[i].push(std::mem::take(&mut running[i]));
            }
            episode += 1;
            current = env.reset(stream_seed(&[seed, episode, 0xe9]))?;
        } else {
            current = tr.next;
        }
    }
    for i in 0..n {
        let last_done = buf.agents[i].dones.last().copied().unwrap_or(true);
        buf.agents[i].last_value = if last_done { 0.0 } else { critics[i].value(&current.state)? };
    }
    Ok(buf)
}

/// Generalised advantage estimates and discounted reward-to-go.
///
/// Episodes end where `dones` is set; the value after the final step is
/// `last_value` unless that step ended an episode. With `gae_lambda = 1` the
/// advantage is returned as reward-to-go minus value.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Contract(format!("misaligned buffer: {n} rewards, {} values, {} flags", values.len(), dones.len())));
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&gae_lambda) {
        return Err(Error::Contract("gamma and lambda must lie in [0, 1]".into()));
    }
    let mut adv = vec![0.0; n];
    let mut rtg = vec![0.0; n];
    let mut next_value = last_value;
    let mut next_adv = 0.0;
    let mut next_rtg = last_value;
    for t in (0..n).rev() {
        if dones[t] {
            next_value = 0.0;
            next_adv = 0.0;
            next_rtg = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        adv[t] = delta + gamma * gae_lambda * next_adv;
        rtg[t] = rewards[t] + gamma * next_rtg;
        next_value = values[t];
        next_adv = adv[t];
        next_rtg = rtg[t];
    }
    if gae_lambda == 1.0 {
        for t in 0..n {
            adv[t] = rtg[t] - values[t];
        }
    }
    Ok((adv, rtg))
}
