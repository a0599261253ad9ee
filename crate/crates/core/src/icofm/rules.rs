//! Agent rules: the expert order decision, supply/demand adjustment and the
//! reward functions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RewardWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Producer,
    Consumer,
    Speculator,
}

impl Role {
    pub fn code(self) -> u32 {
        match self {
            Role::Producer => 0,
            Role::Consumer => 1,
            Role::Speculator => 2,
        }
    }

    pub fn from_code(c: f64) -> Role {
        match c.round() as i64 {
            0 => Role::Producer,
            1 => Role::Consumer,
            _ => Role::Speculator,
        }
    }
}

/// Inputs of the order decision, in mechanism source order.
pub const ORDER_INPUTS: [&str; 13] = [
    "role",
    "cash",
    "inventory",
    "position",
    "task_target",
    "task_done",
    "expectation",
    "fundamental",
    "last_price",
    "best_bid",
    "best_ask",
    "sentiment",
    "phase",
];

/// Outputs of the order decision, in mechanism target order.
pub const ORDER_OUTPUTS: [&str; 6] = ["expectation", "order_flag", "order_side", "order_type", "order_price", "order_qty"];

/// What an enterprise wants to submit this round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderIntent {
    pub expectation: f64,
    pub active: bool,
    /// 0 bid, 1 ask.
    pub side: f64,
    /// 0 limit, 1 market.
    pub order_type: f64,
    pub price: f64,
    pub quantity: f64,
}

impl OrderIntent {
    pub fn idle(expectation: f64) -> Self {
        OrderIntent { expectation, active: false, side: 0.0, order_type: 0.0, price: 0.0, quantity: 0.0 }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.expectation, f64::from(u8::from(self.active)), self.side, self.order_type, self.price, self.quantity]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        OrderIntent { expectation: x[0], active: x[1] != 0.0, side: x[2], order_type: x[3], price: x[4], quantity: x[5] }
    }
}

/// Rule-based order decision.
///
/// Producers sell their outstanding task, consumers buy theirs (as far as
/// cash allows) and speculators trade towards their price expectation.
/// Expectations track the fundamental price.
pub fn expert_order(x: &[f64], position_limit: i64, rng: &mut impl Rng) -> OrderIntent {
    let [role, cash, _inventory, position, target, done, expectation, fundamental, last, best_bid, best_ask, sentiment, phase]: [f64; 13] =
        x[..13].try_into().expect("thirteen inputs");
    let role = Role::from_code(role);
    let reference = if last > 0.0 { last } else { fundamental };
    let mut e = if expectation > 0.0 { 0.8 * expectation + 0.2 * fundamental * (1.0 + 0.01 * sentiment) } else { fundamental };
    if role == Role::Speculator {
        e *= 1.0 + rng.random_range(-0.004..0.004);
    }
    let phase = phase.round() as i64;
    if phase == 2 || reference <= 0.0 {
        return OrderIntent::idle(e);
    }
    let continuous = phase == 1;
    let remaining = (target - done).max(0.0);
    let tick = |p: f64| p.round().max(1.0);
    let (side, price, qty) = match role {
        Role::Producer => {
            if remaining < 1.0 {
                return OrderIntent::idle(e);
            }
            let q = remaining.min(f64::from(rng.random_range(1..=3u8)));
            (1.0, tick(reference.max(e) * (1.0 + rng.random_range(-0.004..0.002))), q)
        }
        Role::Consumer => {
            if remaining < 1.0 {
                return OrderIntent::idle(e);
            }
            let p = tick(reference.min(e) * (1.0 + rng.random_range(-0.002..0.004)));
            let affordable = (cash / p).floor();
            let q = remaining.min(f64::from(rng.random_range(1..=3u8))).min(affordable);
            if q < 1.0 {
                return OrderIntent::idle(e);
            }
            (0.0, p, q)
        }
        Role::Speculator => {
            let gap = (e - reference) / reference;
            let buy = if gap > 0.001 {
                true
            } else if gap < -0.001 {
                false
            } else if rng.random_bool(0.3) {
                rng.random_bool(0.5)
            } else {
                return OrderIntent::idle(e);
            };
            let limit = position_limit as f64;
            if (buy && position >= limit) || (!buy && position <= -limit) {
                return OrderIntent::idle(e);
            }
            let q = f64::from(rng.random_range(1..=3u8));
            let edge = rng.random_range(0.0..0.003);
            if buy {
                (0.0, tick(reference * (1.0 + edge)), q)
            } else {
                (1.0, tick(reference * (1.0 - edge)), q)
            }
        }
    };
    let opposite_exists = if side == 0.0 { best_ask > 0.0 } else { best_bid > 0.0 };
    let market = continuous && opposite_exists && rng.random_bool(if role == Role::Speculator { 0.2 } else { 0.1 });
    OrderIntent {
        expectation: e,
        active: true,
        side,
        order_type: if market { 1.0 } else { 0.0 },
        price: if market { 0.0 } else { price },
        quantity: qty,
    }
}

/// Weighted reward terms and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// (name, weight, raw value).
    pub terms: Vec<(String, f64, f64)>,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.terms.iter().map(|(_, w, v)| w * v).sum()
    }
}

/// Enterprise reward: profit in units of the reference price plus task progress.
pub fn enterprise_reward(profit: f64, done: f64, target: f64, price_scale: f64, w: &RewardWeights) -> RewardBreakdown {
    let progress = if target > 0.0 { (done / target).clamp(0.0, 1.0) } else { 0.0 };
    RewardBreakdown { terms: vec![("profit".into(), w.profit, profit / price_scale), ("task".into(), w.task, progress)] }
}

/// Region reward: market share and economy, minus the relative price move.
pub fn region_reward(share: f64, economy: f64, close: f64, previous_close: f64, w: &RewardWeights) -> RewardBreakdown {
    let move_ = if previous_close > 0.0 { ((close - previous_close) / previous_close).abs() } else { 0.0 };
    RewardBreakdown {
        terms: vec![
            ("share".into(), w.share, share),
            ("economy".into(), w.economy, economy),
            ("fluctuation".into(), -w.fluctuation, move_),
        ],
    }
}

/// Region share of total supply and the updated economy index.
pub fn region_outcome(production: f64, consumption: f64, economy: f64, total_supply: f64) -> (f64, f64) {
    let share = if total_supply > 0.0 { production / total_supply } else { 0.0 };
    let balance = (production - consumption) / consumption.max(1.0);
    (share, 0.95 * economy + 0.05 * balance.clamp(-1.0, 1.0))
}

/// Next fundamental price from the supply/demand imbalance and sentiment.
pub fn fundamental_price(fundamental: f64, previous_close: f64, imbalance: f64, sentiment: f64) -> f64 {
    let base = if fundamental > 0.0 { 0.8 * fundamental + 0.2 * previous_close } else { previous_close };
    base * (1.0 + 0.02 * imbalance + 0.01 * sentiment.clamp(-1.0, 1.0))
}

/// Stance of a region towards the market, smoothed.
pub fn relation_update(stance: f64, fundamental: f64, previous_close: f64) -> f64 {
    let gap = if previous_close > 0.0 { (fundamental - previous_close) / previous_close } else { 0.0 };
    0.9 * stance + 0.1 * (10.0 * gap).tanh()
}

/// Weight of the `k`-th factor of a category.
pub fn factor_weight(scale: f64, k: usize) -> f64 {
    let sign = if k % 2 == 0 { 1.0 } else { -0.5 };
    scale * sign / (1.0 + 0.1 * k as f64)
}
