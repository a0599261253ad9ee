//! Crude-oil futures market scenario: order book, clearing, delivery, the
//! producer / consumer / speculator / region agents, factor ingestion and the
//! market stabilizers.

pub mod accounts;
pub mod book;
pub mod build;
pub mod factors;
pub mod host;
pub mod interventionist;
pub mod rules;
pub mod sim;
pub mod solutions;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use accounts::{Account, Accounts, DeliveryReport};
pub use book::{AgentId, AuctionResult, Fill, MatchOutcome, Order, OrderBook, OrderType, Phase, Price, Rejection, Side, Trade};
pub use build::{
    build, close_market_ops, function_registry, install_interventionist_ops, restrict_order_type_ops, Layout, CLOSE_MARKET_FN,
    INTERVENTIONIST_FN, RESTRICT_FN,
};
pub use factors::{load_factors, load_prices, FactorFrame, CATEGORIES};
pub use host::{Audit, DayRecord, IcofmHost, TradeRecord};
pub use interventionist::{guard_orders, liquidation_orders, unwind_orders, Bounds, InterventionistState, Lot};
pub use rules::{enterprise_reward, expert_order, region_reward, OrderIntent, RewardBreakdown, Role};
pub use sim::{RunSummary, Simulation};
pub use solutions::{paired_runs, shock_fixture, MarketSetup, PairedReport, RunReport, SHOCK_HORIZON};

/// Reward weights shared by enterprises and regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub profit: f64,
    pub task: f64,
    pub share: f64,
    pub economy: f64,
    pub fluctuation: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { profit: 1.0, task: 1.0, share: 1.0, economy: 1.0, fluctuation: 10.0 }
    }
}

/// An order submitted by the shock agent on a given day and round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shock {
    pub day: u64,
    /// Continuous-trading round, from 0.
    pub round: usize,
    pub side: Side,
    /// Limit price relative to the day's opening price; `None` sends a
    /// market order.
    pub price_ratio: Option<f64>,
    pub quantity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcofmConfig {
    pub producers: usize,
    pub consumers: usize,
    pub speculators: usize,
    pub regions: usize,
    pub factors_per_category: usize,
    /// Opening reference in ticks.
    pub initial_price: Price,
    pub lower_ratio: f64,
    pub upper_ratio: f64,
    /// Failed-delivery penalty per contract as a fraction of the settle price.
    pub penalty_ratio: f64,
    pub days_per_quarter: usize,
    /// Trading days per futures cycle; the last day of a cycle settles.
    pub settle_cycle: usize,
    /// Continuous-trading rounds per day.
    pub rounds_per_day: usize,
    pub units_per_contract: f64,
    pub base_production: f64,
    pub base_consumption: f64,
    pub initial_cash: i64,
    /// Scale of factor contributions to supply, demand and sentiment.
    pub factor_scale: f64,
    pub speculator_position_limit: i64,
    pub rewards: RewardWeights,
    pub shocks: Vec<Shock>,
}

impl Default for IcofmConfig {
    fn default() -> Self {
        IcofmConfig {
            producers: 4,
            consumers: 4,
            speculators: 8,
            regions: 3,
            factors_per_category: 12,
            initial_price: 5000,
            lower_ratio: 0.9,
            upper_ratio: 1.1,
            penalty_ratio: 0.1,
            days_per_quarter: 20,
            settle_cycle: 20,
            rounds_per_day: 5,
            units_per_contract: 50.0,
            base_production: 100.0,
            base_consumption: 100.0,
            initial_cash: 10_000_000,
            factor_scale: 0.02,
            speculator_position_limit: 10,
            rewards: RewardWeights::default(),
            shocks: Vec::new(),
        }
    }
}

impl IcofmConfig {
    pub fn enterprises(&self) -> usize {
        self.producers + self.consumers + self.speculators
    }

    /// Account id of the scripted shock trader.
    pub fn shock_agent(&self) -> AgentId {
        self.enterprises()
    }

    /// Account id of the interventionist.
    pub fn interventionist_agent(&self) -> AgentId {
        self.enterprises() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Contract(m.to_string()));
        if !(0.0 < self.lower_ratio && self.lower_ratio < 1.0 && 1.0 < self.upper_ratio && self.upper_ratio.is_finite()) {
            return bad("bounds must satisfy 0 < lower < 1 < upper");
        }
        if self.initial_price <= 0 {
            return bad("initial price must be positive");
        }
        if self.regions == 0 || self.enterprises() == 0 {
            return bad("need at least one region and one enterprise");
        }
        if self.days_per_quarter == 0 || self.settle_cycle == 0 || self.rounds_per_day == 0 {
            return bad("quarter length, settle cycle and rounds per day must be positive");
        }
        if !(self.units_per_contract > 0.0) || !(self.penalty_ratio >= 0.0) {
            return bad("units per contract must be positive and the penalty non-negative");
        }
        if let Some(s) = self.shocks.iter().find(|s| s.quantity == 0 || s.price_ratio.is_some_and(|r| !(r > 0.0))) {
            return Err(Error::Contract(format!("invalid shock {s:?}")));
        }
        Ok(())
    }

    pub fn bounds(&self, p0: Price) -> Bounds {
        Bounds { p0, lower_ratio: self.lower_ratio, upper_ratio: self.upper_ratio }
    }
}
