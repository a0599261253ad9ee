//! Small environments for training and testing gated policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normalize::RunningNormalizer;
use super::policy::{Expert, GateMode, GatedPolicy, NeuralPolicy};
use super::rollout::{Critic, MultiAgentEnv, Observation, Transition};
use super::train::{Learner, TrainConfig};
use crate::error::{Error, Result};
use crate::registry::{FnEntry, FunctionRegistry};
use crate::scheduler::stream_seed;
use crate::value::Value;

/// Name of the toy market's expert rule in [`toy_registry`].
pub const TOY_EXPERT: &str = "toy_supply_rule";

/// Cooperative supply game. Each step a demand signal `z ~ U(0, 1)` is drawn;
/// agent `i` with unit cost `c_i` supplies `q_i ∈ [0, 1]`, the price is
/// `1 + z - Σq / N` and every agent receives the mean profit
/// `mean_i q_i (price - c_i)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyMarket {
    pub costs: Vec<f64>,
    pub episode_len: usize,
    /// Every reward vector the environment emitted.
    pub log: Vec<Vec<f64>>,
    #[serde(skip)]
    state: Option<(ChaCha8Rng, f64, usize)>,
}

impl ToyMarket {
    pub fn new(agents: usize, episode_len: usize) -> Result<Self> {
        if agents == 0 || episode_len == 0 {
            return Err(Error::Contract("toy market needs agents and a positive episode length".into()));
        }
        let costs = (0..agents).map(|i| 0.2 + 0.1 * i as f64 / agents as f64).collect();
        Ok(ToyMarket { costs, episode_len, log: Vec::new(), state: None })
    }

    fn observe(&self, z: f64) -> Observation {
        let obs = self.costs.iter().map(|c| vec![z, *c]).collect();
        let mut state = vec![z];
        state.extend(&self.costs);
        Observation { obs, state }
    }

    pub fn obs_bounds() -> (Vec<f64>, Vec<f64>) {
        (vec![0.0, 0.0], vec![1.0, 1.0])
    }

    pub fn state_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; 1 + self.costs.len()], vec![1.0; 1 + self.costs.len()])
    }

    /// Best joint supply for a signal: every agent's share of
    /// `N (1 + z - mean c) / 2`, capped to [0, 1].
    pub fn optimal_supply(&self, z: f64) -> f64 {
        let c = self.costs.iter().sum::<f64>() / self.costs.len() as f64;
        ((1.0 + z - c) / 2.0).clamp(0.0, 1.0)
    }
}

/// The hand-written supply rule: half the signal on top of a fixed base.
pub fn toy_expert_rule(obs: &[f64]) -> Vec<f64> {
    vec![0.25 + 0.25 * obs[0]]
}

pub fn toy_registry() -> Result<FunctionRegistry> {
    let mut r = FunctionRegistry::default();
    r.register(
        FnEntry::rule(TOY_EXPERT, 2, 1, |v, _| {
            let obs: Vec<f64> = v.iter().map(Value::as_f64).collect();
            Ok(toy_expert_rule(&obs).into_iter().map(Value::Real).collect())
        })
        .deterministic(),
    )?;
    Ok(r)
}

impl MultiAgentEnv for ToyMarket {
    fn n_agents(&self) -> usize {
        self.costs.len()
    }

    fn reset(&mut self, seed: u64) -> Result<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[seed, 0x70c]));
        let z = rng.random::<f64>();
        self.state = Some((rng, z, 0));
        Ok(self.observe(z))
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Transition> {
        let n = self.costs.len();
        let Some((rng, z, t)) = self.state.as_mut() else { return Err(Error::Env("step before reset".into())) };
        if actions.len() != n || actions.iter().any(|a| a.len() != 1 || !a[0].is_finite()) {
            return Err(Error::Env("toy market takes one finite supply per agent".into()));
        }
        let q: Vec<f64> = actions.iter().map(|a| a[0].clamp(0.0, 1.0)).collect();
        let price = 1.0 + *z - q.iter().sum::<f64>() / n as f64;
        let profit = q.iter().zip(&self.costs).map(|(q, c)| q * (price - c)).sum::<f64>() / n as f64;
        *t += 1;
        let done = *t >= self.episode_len;
        *z = rng.random::<f64>();
        let z = *z;
        let rewards = vec![profit; n];
        self.log.push(rewards.clone());
        Ok(Transition { next: self.observe(z), rewards, done })
    }
}

/// Two-agent one-shot coordination game. An action at or above 1/2 picks
/// option B. Both B pays 1, both A pays 0.5, a mismatch pays 0.
#[derive(Debug, Clone, Default)]
pub struct MatrixGame {
    pub log: Vec<Vec<f64>>,
}

impl MultiAgentEnv for MatrixGame {
    fn n_agents(&self) -> usize {
        2
    }

    fn reset(&mut self, _seed: u64) -> Result<Observation> {
        Ok(Observation { obs: vec![vec![1.0], vec![1.0]], state: vec![1.0] })
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Transition> {
        if actions.len() != 2 || actions.iter().any(|a| a.is_empty()) {
            return Err(Error::Env("matrix game takes one action per agent".into()));
        }
        let b: Vec<bool> = actions.iter().map(|a| a[0] >= 0.5).collect();
        let r = match (b[0], b[1]) {
            (true, true) => 1.0,
            (false, false) => 0.5,
            _ => 0.0,
        };
        self.log.push(vec![r, r]);
        Ok(Transition { next: self.reset(0)?, rewards: vec![r, r], done: true })
    }
}

/// A learner for the toy market, seeded per agent.
pub fn toy_learner(env: &ToyMarket, expert: Expert, gate: GateMode, hidden: &[usize], cfg: &TrainConfig, agent: usize) -> Result<Learner> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[cfg.seed, agent as u64, 0x1417]));
    let (lo, hi) = ToyMarket::obs_bounds();
    let net = NeuralPolicy::new(RunningNormalizer::new(lo, hi, 5.0)?, hidden, vec![0.0], vec![1.0], 0.0, &mut rng)?;
    let (slo, shi) = env.state_bounds();
    let critic = Critic::new(RunningNormalizer::new(slo, shi, 5.0)?, hidden, &mut rng)?;
    Ok(Learner::new(GatedPolicy::new(expert, net, gate), critic, cfg))
}

/// A pure-network learner for the matrix game.
pub fn matrix_learner(hidden: &[usize], cfg: &TrainConfig, agent: usize) -> Result<Learner> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[cfg.seed, agent as u64, 0x3a7]));
    let net = NeuralPolicy::new(RunningNormalizer::new(vec![0.0], vec![2.0], 5.0)?, hidden, vec![0.0], vec![1.0], 0.0, &mut rng)?;
    let critic = Critic::new(RunningNormalizer::new(vec![0.0], vec![2.0], 5.0)?, hidden, &mut rng)?;
    let expert = Expert::new("option_a", |_, _| Ok(vec![0.25]));
    Ok(Learner::new(GatedPolicy::new(expert, net, GateMode::Fixed(1.0)), critic, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_supply_beats_expert() {
        let env = ToyMarket::new(2, 10).unwrap();
        let c = env.costs.iter().sum::<f64>() / 2.0;
        let profit = |q: f64, z: f64| q * (1.0 + z - q - c);
        for z in [0.0, 0.3, 0.9] {
            assert!(profit(env.optimal_supply(z), z) >= profit(toy_expert_rule(&[z, c])[0], z));
        }
    }

    #[test]
    fn episodes_end_on_time() {
        let mut env = ToyMarket::new(1, 3).unwrap();
        env.reset(1).unwrap();
        let dones: Vec<bool> = (0..3).map(|_| env.step(&[vec![0.5]]).unwrap().done).collect();
        assert_eq!(dones, vec![false, false, true]);
        assert!(env.step(&[vec![f64::NAN]]).is_err());
    }
}
