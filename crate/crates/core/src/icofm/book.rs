//! Limit order book with price-time priority and a call auction.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prices are integer ticks.
pub type Price = i64;
pub type AgentId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }

    /// +1 for the buyer, -1 for the seller.
    pub fn sign(self) -> i64 {
        match self {
            Side::Bid => 1,
            Side::Ask => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderType {
    Lmt,
    Mkt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    CallAuction,
    Continuous,
    Closed,
}

impl Phase {
    pub fn code(self) -> u32 {
        match self {
            Phase::CallAuction => 0,
            Phase::Continuous => 1,
            Phase::Closed => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub contract_month: u32,
    /// `None` for market orders.
    pub price: Option<Price>,
    pub quantity: u64,
    pub side: Side,
    pub order_type: OrderType,
    /// Assigned by the book on submission.
    pub timestamp: u64,
    pub owner: AgentId,
}

impl Order {
    pub fn limit(side: Side, price: Price, quantity: u64, owner: AgentId) -> Self {
        Order { contract_month: 0, price: Some(price), quantity, side, order_type: OrderType::Lmt, timestamp: 0, owner }
    }

    pub fn market(side: Side, quantity: u64, owner: AgentId) -> Self {
        Order { contract_month: 0, price: None, quantity, side, order_type: OrderType::Mkt, timestamp: 0, owner }
    }

    pub fn validate(&self) -> Result<()> {
        if self.quantity == 0 {
            return Err(Error::Contract("order quantity must be positive".into()));
        }
        match (self.order_type, self.price) {
            (OrderType::Lmt, Some(p)) if p > 0 => Ok(()),
            (OrderType::Lmt, _) => Err(Error::Contract("limit order needs a positive price".into())),
            (OrderType::Mkt, None) => Ok(()),
            (OrderType::Mkt, Some(_)) => Err(Error::Contract("market order carries no price".into())),
        }
    }

    /// Whether this order accepts a counterparty resting at `price`.
    pub fn accepts(&self, price: Price) -> bool {
        match (self.side, self.price) {
            (_, None) => true,
            (Side::Bid, Some(limit)) => price <= limit,
            (Side::Ask, Some(limit)) => price >= limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub price: Price,
    pub quantity: u64,
    pub buyer: AgentId,
    pub seller: AgentId,
    pub timestamp: u64,
}

/// One fill an incoming order would get, without touching the book.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fill {
    pub price: Price,
    pub quantity: u64,
    pub resting_owner: AgentId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    MarketOrderInAuction,
    LimitOrderRestricted,
    MarketClosed,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchOutcome {
    pub trades: Vec<Trade>,
    /// Unfilled quantity left resting (limit orders only).
    pub rested: u64,
    /// Unfilled market-order quantity that was dropped.
    pub cancelled: u64,
    /// Matching stopped because the trade guard refused a price.
    pub halted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuctionResult {
    pub price: Price,
    pub volume: u64,
    pub trades: Vec<Trade>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrderBook {
    bids: BTreeMap<Price, VecDeque<Order>>,
    asks: BTreeMap<Price, VecDeque<Order>>,
    clock: u64,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    fn side_mut(&mut self, side: Side) -> &mut BTreeMap<Price, VecDeque<Order>> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    fn stamp(&mut self, order: &mut Order) {
        self.clock += 1;
        order.timestamp = self.clock;
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    /// Drops all resting orders; the clock keeps running.
    pub fn clear(&mut self) {
        self.bids.clear();
        self.asks.clear();
    }

    /// Resting orders of one side in priority order.
    pub fn resting(&self, side: Side) -> Vec<&Order> {
        match side {
            Side::Bid => self.bids.values().rev().flat_map(|q| q.iter()).collect(),
            Side::Ask => self.asks.values().flat_map(|q| q.iter()).collect(),
        }
    }

    /// Outstanding quantity per price, with bid quantities negative.
    pub fn chart(&self) -> Vec<(Price, i64)> {
        let mut out: BTreeMap<Price, i64> = BTreeMap::new();
        for (p, q) in &self.bids {
            *out.entry(*p).or_default() -= q.iter().map(|o| o.quantity as i64).sum::<i64>();
        }
        for (p, q) in &self.asks {
            *out.entry(*p).or_default() += q.iter().map(|o| o.quantity as i64).sum::<i64>();
        }
        out.into_iter().collect()
    }

    /// Adds a limit order to the back of its price level without matching.
    pub fn rest(&mut self, mut order: Order) -> Result<u64> {
        order.validate()?;
        let price = order.price.ok_or_else(|| Error::Contract("only limit orders can rest".into()))?;
        self.stamp(&mut order);
        let ts = order.timestamp;
        self.side_mut(order.side).entry(price).or_default().push_back(order);
        Ok(ts)
    }

    /// Adds a limit order ahead of everything at its price level.
    pub fn rest_priority(&mut self, mut order: Order) -> Result<u64> {
        order.validate()?;
        let price = order.price.ok_or_else(|| Error::Contract("only limit orders can rest".into()))?;
        self.stamp(&mut order);
        let ts = order.timestamp;
        self.side_mut(order.side).entry(price).or_default().push_front(order);
        Ok(ts)
    }

    /// Fills the incoming order would receive, in execution order.
    pub fn simulate(&self, order: &Order) -> Vec<Fill> {
        let mut left = order.quantity;
        let mut fills = Vec::new();
        let levels: Box<dyn Iterator<Item = (&Price, &VecDeque<Order>)>> = match order.side {
            Side::Bid => Box::new(self.asks.iter()),
            Side::Ask => Box::new(self.bids.iter().rev()),
        };
        'outer: for (price, queue) in levels {
            if !order.accepts(*price) {
                break;
            }
            for resting in queue {
                if left == 0 {
                    break 'outer;
                }
                let q = left.min(resting.quantity);
                fills.push(Fill { price: *price, quantity: q, resting_owner: resting.owner });
                left -= q;
            }
        }
        fills
    }

    /// Continuous matching at resting prices. `guard` sees each would-be
    /// trade price first; returning `false` stops matching and drops the rest
    /// of the order.
    pub fn match_order(&mut self, mut order: Order, guard: &mut dyn FnMut(Price) -> bool) -> Result<MatchOutcome> {
        order.validate()?;
        self.stamp(&mut order);
        let mut out = MatchOutcome::default();
        let opposite = order.side.opposite();
        while order.quantity > 0 {
            let best = match opposite {
                Side::Ask => self.best_ask(),
                Side::Bid => self.best_bid(),
            };
            let Some(price) = best.filter(|p| order.accepts(*p)) else { break };
            if !guard(price) {
                out.halted = true;
                return Ok(out);
            }
            let book = self.side_mut(opposite);
            let queue = book.get_mut(&price).expect("level exists");
            let resting = queue.front_mut().expect("levels are never empty");
            let q = order.quantity.min(resting.quantity);
            let (buyer, seller) = match order.side {
                Side::Bid => (order.owner, resting.owner),
                Side::Ask => (resting.owner, order.owner),
            };
            out.trades.push(Trade { price, quantity: q, buyer, seller, timestamp: order.timestamp });
            order.quantity -= q;
            resting.quantity -= q;
            if resting.quantity == 0 {
                queue.pop_front();
                if queue.is_empty() {
                    book.remove(&price);
                }
            }
        }
        if order.quantity > 0 {
            match order.order_type {
                OrderType::Lmt => {
                    out.rested = order.quantity;
                    let price = order.price.expect("validated");
                    self.side_mut(order.side).entry(price).or_default().push_back(order);
                }
                OrderType::Mkt => out.cancelled = order.quantity,
            }
        }
        Ok(out)
    }

    /// Phase-aware submission: limit orders accumulate during the call
    /// auction and market orders are refused there.
    pub fn submit(
        &mut self,
        order: Order,
        phase: Phase,
        restrict_limit: bool,
        guard: &mut dyn FnMut(Price) -> bool,
    ) -> Result<std::result::Result<MatchOutcome, Rejection>> {
        order.validate()?;
        match phase {
            Phase::Closed => Ok(Err(Rejection::MarketClosed)),
            Phase::CallAuction if order.order_type == OrderType::Mkt => Ok(Err(Rejection::MarketOrderInAuction)),
            Phase::CallAuction => {
                let q = order.quantity;
                self.rest(order)?;
                Ok(Ok(MatchOutcome { rested: q, ..Default::default() }))
            }
            Phase::Continuous if restrict_limit && order.order_type == OrderType::Lmt => Ok(Err(Rejection::LimitOrderRestricted)),
            Phase::Continuous => self.match_order(order, guard).map(Ok),
        }
    }

    /// Executable volume if the book were cleared at `price`.
    pub fn volume_at(&self, price: Price) -> u64 {
        let demand: u64 = self.bids.range(price..).flat_map(|(_, q)| q).map(|o| o.quantity).sum();
        let supply: u64 = self.asks.range(..=price).flat_map(|(_, q)| q).map(|o| o.quantity).sum();
        demand.min(supply)
    }

    /// Candidate clearing prices: every resting price plus the previous close.
    pub fn auction_candidates(&self, previous_close: Price) -> Vec<Price> {
        let mut c: Vec<Price> = self.bids.keys().chain(self.asks.keys()).copied().collect();
        c.push(previous_close);
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Uniform-price clearing at the volume-maximizing candidate. Ties go to
    /// the price nearest the previous close, then to the lower price. With no
    /// executable volume the price is the previous close and nothing trades.
    pub fn call_auction(&mut self, previous_close: Price) -> AuctionResult {
        let mut best = (0u64, previous_close);
        for p in self.auction_candidates(previous_close) {
            let v = self.volume_at(p);
            let better =
                v > best.0 || (v == best.0 && v > 0 && ((p - previous_close).abs(), p) < ((best.1 - previous_close).abs(), best.1));
            if better {
                best = (v, p);
            }
        }
        let (volume, price) = best;
        if volume == 0 {
            return AuctionResult { price: previous_close, volume: 0, trades: Vec::new() };
        }
        self.clock += 1;
        let ts = self.clock;
        let mut trades = Vec::new();
        let mut left = volume;
        while left > 0 {
            let bid_p = self.best_bid().expect("volume implies bids");
            let ask_p = self.best_ask().expect("volume implies asks");
            let bid = self.bids.get_mut(&bid_p).unwrap().front_mut().unwrap();
            let ask = self.asks.get_mut(&ask_p).unwrap().front_mut().unwrap();
            let q = left.min(bid.quantity).min(ask.quantity);
            trades.push(Trade { price, quantity: q, buyer: bid.owner, seller: ask.owner, timestamp: ts });
            bid.quantity -= q;
            ask.quantity -= q;
            left -= q;
            for (book, p) in [(&mut self.bids, bid_p), (&mut self.asks, ask_p)] {
                let queue = book.get_mut(&p).unwrap();
                if queue.front().is_some_and(|o| o.quantity == 0) {
                    queue.pop_front();
                }
                if queue.is_empty() {
                    book.remove(&p);
                }
            }
        }
        AuctionResult { price, volume, trades }
    }
}
