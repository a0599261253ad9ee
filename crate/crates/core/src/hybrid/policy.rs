//! Expert rule, neural Beta policy and the switch gate that blends them.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dist::{bernoulli_log_prob, beta_log_density, beta_log_density_grad, beta_mean, sample_beta_action, sigmoid, softplus};
use super::nn::{Activation, Mlp};
use super::normalize::RunningNormalizer;
use crate::error::{Error, Result};
use crate::hypergraph::InstanceId;
use crate::registry::{FnBody, FnEntry, FunctionRegistry, RuleCtx};
use crate::value::Value;

pub type ExpertFn = Arc<dyn Fn(&[f64], &mut ChaCha8Rng) -> Result<Vec<f64>> + Send + Sync>;

/// A rule-based controller.
#[derive(Clone)]
pub struct Expert {
    pub name: String,
    pub f: ExpertFn,
}

impl fmt::Debug for Expert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expert({})", self.name)
    }
}

impl Expert {
    pub fn new<F>(name: &str, f: F) -> Self
    where
        F: Fn(&[f64], &mut ChaCha8Rng) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Expert { name: name.to_string(), f: Arc::new(f) }
    }

    /// Wraps a registered native rule. The rule sees real-valued inputs and
    /// draws from the caller's stream.
    pub fn from_registry(registry: &FunctionRegistry, name: &str) -> Result<Self> {
        let entry = registry.get(registry.lookup(name)?)?;
        let FnBody::Rule(rule) = &entry.body else {
            return Err(Error::Contract(format!("`{name}` is not a native rule")));
        };
        let rule = rule.clone();
        let inputs = entry.inputs;
        Ok(Expert::new(name, move |obs, rng| {
            if obs.len() != inputs {
                return Err(Error::Contract(format!("rule takes {inputs} inputs, got {}", obs.len())));
            }
            let args: Vec<Value> = obs.iter().map(|x| Value::Real(*x)).collect();
            let mut ctx = RuleCtx { rng: rng.clone(), pass: 0, instance: InstanceId(0) };
            let out = rule(&args, &mut ctx)?;
            *rng = ctx.rng;
            Ok(out.iter().map(Value::as_f64).collect())
        }))
    }

    pub fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        (self.f)(obs, rng).map_err(|e| Error::Policy(format!("expert `{}` failed: {e}", self.name)))
    }
}

/// Actor network with Beta action heads and a Bernoulli gate head.
///
/// Output layout: `act_dim` alpha pre-activations, `act_dim` beta
/// pre-activations, one gate logit. Shapes are `1 + softplus(h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralPolicy {
    pub actor: Mlp<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub normalizer: RunningNormalizer,
    /// Recurrent state width; feed-forward policies keep it at 0.
    pub hidden_size: usize,
}

/// Outputs of the actor for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Heads {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gate_logit: f64,
}

impl NeuralPolicy {
    pub fn new(
        normalizer: RunningNormalizer,
        hidden: &[usize],
        low: Vec<f64>,
        high: Vec<f64>,
        gate_bias: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if low.is_empty() || low.len() != high.len() || low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::Contract("action bounds must pair up with low < high".into()));
        }
        let mut widths = vec![normalizer.dim()];
        widths.extend_from_slice(hidden);
        widths.push(2 * low.len() + 1);
        let mut actor = Mlp::new(&widths, Activation::Tanh, rng)?;
        let last = actor.layers.last_mut().expect("at least one layer");
        // Small output weights keep the initial Beta near its centre.
        for w in &mut last.weights {
            *w *= 0.1;
        }
        last.bias[2 * low.len()] = gate_bias;
        Ok(NeuralPolicy { actor, low, high, normalizer, hidden_size: 0 })
    }

    pub fn obs_dim(&self) -> usize {
        self.normalizer.dim()
    }

    pub fn act_dim(&self) -> usize {
        self.low.len()
    }

    pub fn heads_from(&self, out: &[f64]) -> Heads {
        let n = self.act_dim();
        Heads {
            alpha: out[..n].iter().map(|h| 1.0 + softplus(*h)).collect(),
            beta: out[n..2 * n].iter().map(|h| 1.0 + softplus(*h)).collect(),
            gate_logit: out[2 * n],
        }
    }

    pub fn heads(&self, obs_n: &[f64]) -> Result<Heads> {
        Ok(self.heads_from(&self.actor.forward(obs_n)?))
    }
}

/// How the switch gate is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateMode {
    /// Bernoulli gate from the network's gate head.
    Learned,
    /// A constant in [0, 1]; fractional values blend the two actions.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActMode {
    /// Draw the gate and the action.
    Sample,
    /// Gate on when its probability is at least 1/2; Beta mean as action.
    Greedy,
}

#[derive(Debug, Clone)]
pub struct GatedPolicy {
    pub expert: Expert,
    pub net: NeuralPolicy,
    pub gate: GateMode,
}

/// One decision of a gated policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Act {
    /// The executed action.
    pub u: Vec<f64>,
    /// The network's action.
    pub a: Vec<f64>,
    pub g: f64,
    pub expert: Vec<f64>,
    /// Normalised observation seen by the network.
    pub obs_n: Vec<f64>,
    /// Log-probability of (g, a) under the current parameters.
    pub log_prob: f64,
}

/// `g * net + (1 - g) * expert`.
pub fn blend(g: f64, net: &[f64], expert: &[f64]) -> Vec<f64> {
    net.iter().zip(expert).map(|(a, e)| g * a + (1.0 - g) * e).collect()
}

impl GatedPolicy {
    pub fn new(expert: Expert, net: NeuralPolicy, gate: GateMode) -> Self {
        GatedPolicy { expert, net, gate }
    }

    /// Log-probability of the network's part of a decision. With a learned
    /// gate the action density only counts when the network was selected.
    pub fn log_prob(&self, obs_n: &[f64], a: &[f64], g: f64) -> Result<f64> {
        let h = self.net.heads(obs_n)?;
        self.log_prob_from(&h, a, g)
    }

    fn log_prob_from(&self, h: &Heads, a: &[f64], g: f64) -> Result<f64> {
        let mut lp = 0.0;
        let action_counts = match self.gate {
            GateMode::Learned => {
                lp += bernoulli_log_prob(g == 1.0, h.gate_logit);
                g == 1.0
            }
            GateMode::Fixed(_) => true,
        };
        if action_counts {
            for i in 0..a.len() {
                lp += beta_log_density(a[i], h.alpha[i], h.beta[i], self.net.low[i], self.net.high[i])?;
            }
        }
        Ok(lp)
    }

    /// Adds `scale * d log_prob / d params` to `grad`.
    pub fn log_prob_grad(&self, obs_n: &[f64], a: &[f64], g: f64, scale: f64, grad: &mut [f64]) -> Result<()> {
        let trace = self.net.actor.trace(obs_n)?;
        let out = trace.output();
        let n = self.net.act_dim();
        let h = self.net.heads_from(out);
        let mut d = vec![0.0; out.len()];
        let action_counts = match self.gate {
            GateMode::Learned => {
                d[2 * n] = (if g == 1.0 { 1.0 } else { 0.0 }) - sigmoid(h.gate_logit);
                g == 1.0
            }
            GateMode::Fixed(_) => true,
        };
        if action_counts {
            for i in 0..n {
                let (ga, gb) = beta_log_density_grad(a[i], h.alpha[i], h.beta[i], self.net.low[i], self.net.high[i]);
                d[i] = ga * sigmoid(out[i]);
                d[n + i] = gb * sigmoid(out[n + i]);
            }
        }
        for x in &mut d {
            *x *= scale;
        }
        self.net.actor.backward(&trace, &d, grad);
        Ok(())
    }
}

/// Evaluates the gated policy on a raw observation.
///
/// The expert draws from `rng` first, so a gate fixed at 0 leaves the
/// expert's output and its random stream untouched.
pub fn gated_act(policy: &GatedPolicy, obs: &[f64], mode: ActMode, rng: &mut ChaCha8Rng) -> Result<Act> {
    if obs.len() != policy.net.obs_dim() {
        return Err(Error::Contract(format!("policy expects {} observations, got {}", policy.net.obs_dim(), obs.len())));
    }
    let expert = policy.expert.act(obs, rng)?;
    if expert.len() != policy.net.act_dim() {
        return Err(Error::Policy(format!(
            "expert `{}` returned {} actions, expected {}",
            policy.expert.name,
            expert.len(),
            policy.net.act_dim()
        )));
    }
    let obs_n = policy.net.normalizer.normalize(obs);
    let h = policy.net.heads(&obs_n)?;
    let (low, high) = (&policy.net.low, &policy.net.high);
    let a: Vec<f64> = match mode {
        ActMode::Sample => {
            (0..expert.len()).map(|i| sample_beta_action(h.alpha[i], h.beta[i], low[i], high[i], rng)).collect::<Result<_>>()?
        }
        ActMode::Greedy => (0..expert.len()).map(|i| beta_mean(h.alpha[i], h.beta[i], low[i], high[i])).collect(),
    };
    let g = match (policy.gate, mode) {
        (GateMode::Fixed(v), _) => v,
        (GateMode::Learned, ActMode::Sample) => f64::from(u8::from(rng.random_bool(sigmoid(h.gate_logit)))),
        (GateMode::Learned, ActMode::Greedy) => f64::from(u8::from(sigmoid(h.gate_logit) >= 0.5)),
    };
    let u = if g == 0.0 {
        expert.clone()
    } else if g == 1.0 {
        a.clone()
    } else {
        blend(g, &a, &expert)
    };
    let log_prob = policy.log_prob_from(&h, &a, g)?;
    Ok(Act { u, a, g, expert, obs_n, log_prob })
}

/// Registers a gated policy as a native rule. A failing decision is counted
/// in `faults` and replaced by `fallback`.
pub fn policy_rule(name: &str, policy: Arc<GatedPolicy>, mode: ActMode, fallback: Vec<f64>, faults: Arc<AtomicUsize>) -> FnEntry {
    let inputs = policy.net.obs_dim();
    let outputs = fallback.len();
    let expert = policy.expert.name.clone();
    FnEntry::rule(name, inputs, outputs, move |args, ctx| {
        let obs: Vec<f64> = args.iter().map(Value::as_f64).collect();
        let out = match gated_act(&policy, &obs, mode, &mut ctx.rng) {
            Ok(act) if act.u.len() == outputs && act.u.iter().all(|x| x.is_finite()) => act.u,
            _ => {
                faults.fetch_add(1, Ordering::Relaxed);
                fallback.clone()
            }
        };
        Ok(out.into_iter().map(Value::Real).collect())
    })
    .calling(&[expert.as_str()])
}
