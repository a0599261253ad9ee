//! Clipped policy-gradient updates: the single-agent form and the sequential
//! multi-agent form where each agent sees the advantage rescaled by the
//! probability ratios of the agents updated before it.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{ActMode, GatedPolicy};
use super::rollout::{collect_rollout, compute_gae, AgentTrace, Critic, MultiAgentEnv, RolloutBuffer};
use crate::error::{Error, Result};
use crate::scheduler::stream_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    /// Passes over the buffer per update.
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub critic_lr: f64,
    pub momentum: f64,
    /// Gradient norm cap; `0` disables clipping.
    pub max_grad_norm: f64,
    /// Environment steps per rollout.
    pub horizon: usize,
    pub agents: usize,
    pub normalize_advantages: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 64,
            lr: 0.01,
            critic_lr: 0.01,
            momentum: 0.9,
            max_grad_norm: 1.0,
            horizon: 256,
            agents: 1,
            normalize_advantages: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.gamma) || !unit(self.gae_lambda) {
            return Err(Error::Contract("gamma and gae_lambda must lie in [0, 1]".into()));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.horizon == 0 || self.agents == 0 {
            return Err(Error::Contract("epochs, minibatch, horizon and agent count must be at least 1".into()));
        }
        if !(self.clip > 0.0) || !(self.lr >= 0.0) || !(self.critic_lr >= 0.0) || !unit(self.momentum) || !(self.max_grad_norm >= 0.0) {
            return Err(Error::Contract("invalid clip, learning rate, momentum or gradient cap".into()));
        }
        Ok(())
    }
}

/// Stochastic gradient descent with momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, n: usize) -> Self {
        Sgd { lr, momentum, velocity: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= self.lr * *v;
        }
    }
}

/// A gated policy with its critic and optimiser state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub policy: GatedPolicy,
    pub critic: Critic,
    pub actor_opt: Sgd,
    pub critic_opt: Sgd,
}

impl Learner {
    pub fn new(policy: GatedPolicy, critic: Critic, cfg: &TrainConfig) -> Self {
        let actor_opt = Sgd::new(cfg.lr, cfg.momentum, policy.net.actor.n_params());
        let critic_opt = Sgd::new(cfg.critic_lr, cfg.momentum, critic.net.n_params());
        Learner { policy, critic, actor_opt, critic_opt }
    }

    pub fn param_counts(&self) -> (usize, usize) {
        (self.policy.net.actor.n_params(), self.critic.net.n_params())
    }
}

/// Samples of one agent as seen by the surrogate.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub obs_n: &'a [f64],
    pub action: &'a [f64],
    pub gate: f64,
    pub old_log_prob: f64,
    /// Advantage factor the ratio multiplies.
    pub weight: f64,
}

pub fn samples<'a>(trace: &'a AgentTrace, weights: &[f64]) -> Vec<Sample<'a>> {
    (0..trace.len())
        .map(|t| Sample {
            obs_n: &trace.obs_n[t],
            action: &trace.actions[t],
            gate: trace.gates[t],
            old_log_prob: trace.log_probs[t],
            weight: weights[t],
        })
        .collect()
}

/// Negated mean clipped surrogate `-mean min(r M, clip(r) M)`.
pub fn surrogate_loss(policy: &GatedPolicy, batch: &[Sample], clip: f64) -> Result<f64> {
    let mut total = 0.0;
    for s in batch {
        let r = (policy.log_prob(s.obs_n, s.action, s.gate)? - s.old_log_prob).exp();
        total += (r * s.weight).min(r.clamp(1.0 - clip, 1.0 + clip) * s.weight);
    }
    Ok(-total / batch.len() as f64)
}

/// Loss and its gradient with respect to the actor parameters.
pub fn surrogate_grad(policy: &GatedPolicy, batch: &[Sample], clip: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; policy.net.actor.n_params()];
    let mut total = 0.0;
    let n = batch.len() as f64;
    for s in batch {
        let r = (policy.log_prob(s.obs_n, s.action, s.gate)? - s.old_log_prob).exp();
        let plain = r * s.weight;
        let clipped = r.clamp(1.0 - clip, 1.0 + clip) * s.weight;
        if plain <= clipped {
            total += plain;
            // d(-r M / n) = -(M r / n) d log pi
            policy.log_prob_grad(s.obs_n, s.action, s.gate, -plain / n, &mut grad)?;
        } else {
            total += clipped;
        }
    }
    Ok((-total / n, grad))
}

fn clip_norm(grad: &mut [f64], cap: f64) {
    if cap <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > cap {
        for g in grad.iter_mut() {
            *g *= cap / norm;
        }
    }
}

fn minibatches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size).map(<[usize]>::to_vec).collect()
}

/// K epochs of minibatch clipped updates on one agent; returns the mean loss.
fn clipped_update(
    learner: &mut Learner,
    trace: &AgentTrace,
    weights: &[f64],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    agent: usize,
) -> Result<f64> {
    let all = samples(trace, weights);
    let mut losses = Vec::new();
    for _ in 0..cfg.epochs {
        for mb in minibatches(all.len(), cfg.minibatch, rng) {
            let batch: Vec<Sample> = mb.iter().map(|i| all[*i]).collect();
            let (loss, mut grad) = surrogate_grad(&learner.policy, &batch, cfg.clip)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training { agent, reason: format!("non-finite policy loss {loss}") });
            }
            clip_norm(&mut grad, cfg.max_grad_norm);
            let mut p = learner.policy.net.actor.params();
            learner.actor_opt.step(&mut p, &grad);
            learner.policy.net.actor.set_params(&p)?;
            losses.push(loss);
        }
    }
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Regresses the critic onto the reward-to-go; returns the mean squared error.
fn critic_update(
    learner: &mut Learner,
    trace: &AgentTrace,
    targets: &[f64],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    agent: usize,
) -> Result<f64> {
    let mut losses = Vec::new();
    for _ in 0..cfg.epochs {
        for mb in minibatches(trace.len(), cfg.minibatch, rng) {
            let net = &learner.critic.net;
            let mut grad = vec![0.0; net.n_params()];
            let mut loss = 0.0;
            let n = mb.len() as f64;
            for t in mb {
                let tr = net.trace(&trace.state_n[t])?;
                let err = tr.output()[0] - targets[t];
                loss += 0.5 * err * err / n;
                net.backward(&tr, &[err / n], &mut grad);
            }
            if !loss.is_finite() {
                return Err(Error::Training { agent, reason: format!("non-finite value loss {loss}") });
            }
            clip_norm(&mut grad, cfg.max_grad_norm);
            let mut p = learner.critic.net.params();
            learner.critic_opt.step(&mut p, &grad);
            learner.critic.net.set_params(&p)?;
            losses.push(loss);
        }
    }
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub policy_loss: Vec<f64>,
    pub value_loss: Vec<f64>,
    /// Mean of the advantage factor each agent was updated on.
    pub factor_mean: Vec<f64>,
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    for v in x.iter_mut() {
        *v = (*v - m) / (sd + 1e-8);
    }
}

fn update_rng(cfg: &TrainConfig, round: u64, agent: usize, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(&[cfg.seed, round, agent as u64, tag]))
}

/// Joint advantage: mean over agents of each agent's estimate, optionally
/// standardised. Also returns each agent's reward-to-go.
pub fn joint_advantage(buffer: &RolloutBuffer, cfg: &TrainConfig) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    buffer.validate()?;
    let mut joint = vec![0.0; buffer.agents[0].len()];
    let mut rtgs = Vec::new();
    let k = buffer.agents.len() as f64;
    for a in &buffer.agents {
        let (adv, rtg) = compute_gae(&a.rewards, &a.values, &a.dones, a.last_value, cfg.gamma, cfg.gae_lambda)?;
        for (j, x) in joint.iter_mut().zip(adv) {
            *j += x / k;
        }
        rtgs.push(rtg);
    }
    if cfg.normalize_advantages && joint.len() > 1 {
        standardize(&mut joint);
    }
    Ok((joint, rtgs))
}

/// Single-agent clipped update with the advantage as the factor.
pub fn ppo_update(learner: &mut Learner, buffer: &RolloutBuffer, cfg: &TrainConfig, round: u64) -> Result<UpdateReport> {
    if buffer.agents.len() != 1 {
        return Err(Error::Contract("single-agent update needs a one-agent buffer".into()));
    }
    let (adv, rtgs) = joint_advantage(buffer, cfg)?;
    let trace = &buffer.agents[0];
    let pl = clipped_update(learner, trace, &adv, cfg, &mut update_rng(cfg, round, 0, 1), 0)?;
    let vl = critic_update(learner, trace, &rtgs[0], cfg, &mut update_rng(cfg, round, 0, 2), 0)?;
    Ok(UpdateReport { policy_loss: vec![pl], value_loss: vec![vl], factor_mean: vec![mean(&adv)] })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len().max(1) as f64
}

/// Sequential multi-agent update. Agent `i` is updated on the factor `M`,
/// which starts as the joint advantage and is multiplied by each updated
/// agent's new-over-old probability ratio.
pub fn happo_update(learners: &mut [Learner], buffer: &RolloutBuffer, cfg: &TrainConfig, round: u64) -> Result<UpdateReport> {
    if learners.len() != buffer.agents.len() {
        return Err(Error::Contract(format!("{} learners for {} traces", learners.len(), buffer.agents.len())));
    }
    let (mut factor, rtgs) = joint_advantage(buffer, cfg)?;
    let mut report = UpdateReport { policy_loss: Vec::new(), value_loss: Vec::new(), factor_mean: Vec::new() };
    for (i, learner) in learners.iter_mut().enumerate() {
        let trace = &buffer.agents[i];
        report.factor_mean.push(mean(&factor));
        let pl = clipped_update(learner, trace, &factor, cfg, &mut update_rng(cfg, round, i, 1), i)?;
        for t in 0..trace.len() {
            let new = learner.policy.log_prob(&trace.obs_n[t], &trace.actions[t], trace.gates[t])?;
            factor[t] *= (new - trace.log_probs[t]).exp();
        }
        let vl = critic_update(learner, trace, &rtgs[i], cfg, &mut update_rng(cfg, round, i, 2), i)?;
        report.policy_loss.push(pl);
        report.value_loss.push(vl);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

pub fn write_curve<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["update", "mean_reward", "policy_loss", "value_loss"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve<R: std::io::Read>(input: R) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

/// Collect / update loop. Observation statistics are refreshed after each
/// update so policies stay fixed while a rollout runs.
pub fn train(env: &mut dyn MultiAgentEnv, learners: &mut [Learner], cfg: &TrainConfig, updates: usize) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    if learners.len() != env.n_agents() {
        return Err(Error::Contract(format!("{} learners for {} agents", learners.len(), env.n_agents())));
    }
    let mut curve = Vec::with_capacity(updates);
    for u in 0..updates {
        let buffer = {
            let policies: Vec<&GatedPolicy> = learners.iter().map(|l| &l.policy).collect();
            let critics: Vec<&Critic> = learners.iter().map(|l| &l.critic).collect();
            collect_rollout(env, &policies, &critics, cfg.horizon, stream_seed(&[cfg.seed, u as u64, 0x70]), ActMode::Sample)?
        };
        let report = happo_update(learners, &buffer, cfg, u as u64)?;
        for (l, t) in learners.iter_mut().zip(&buffer.agents) {
            l.policy.net.normalizer.update(&t.obs)?;
            l.critic.normalizer.update(&t.state)?;
        }
        let mean_reward = buffer.mean_episode_return().unwrap_or_else(|| mean(&buffer.agents[0].rewards));
        curve.push(CurveRow { update: u, mean_reward, policy_loss: mean(&report.policy_loss), value_loss: mean(&report.value_loss) });
    }
    Ok(curve)
}

/// Mean agent-averaged episode return over `episodes` greedy episodes.
pub fn evaluate(
    env: &mut dyn MultiAgentEnv,
    policies: &[&GatedPolicy],
    critics: &[&Critic],
    episodes: usize,
    episode_len: usize,
    seed: u64,
) -> Result<f64> {
    let buffer = collect_rollout(env, policies, critics, episodes * episode_len, seed, ActMode::Greedy)?;
    if buffer.episode_returns[0].len() != episodes {
        return Err(Error::Env(format!("expected {episodes} finished episodes, got {}", buffer.episode_returns[0].len())));
    }
    Ok(buffer.mean_episode_return().unwrap_or(0.0))
}
