//! Fluctuation bounds and the front-running interventionist.
//!
//! Before an incoming order is matched, the interventionist simulates it
//! against the book. If some fills would happen at or beyond a bound, it rests
//! a priority order just inside that bound sized to absorb exactly those
//! fills (plus the remainder of a limit order that would otherwise rest
//! beyond the bound). Later, while prices are calm, it unwinds the positions
//! it took at their original contract prices.

use serde::{Deserialize, Serialize};

use super::book::{AgentId, Fill, Order, OrderBook, OrderType, Price, Side};
use crate::scalar::{at_or_above, at_or_below};
use crate::symbolic::{eval_operator, Datum, Operator, OperatorContext};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub p0: Price,
    pub lower_ratio: f64,
    pub upper_ratio: f64,
}

impl Bounds {
    pub fn lower(&self) -> f64 {
        self.p0 as f64 * self.lower_ratio
    }

    pub fn upper(&self) -> f64 {
        self.p0 as f64 * self.upper_ratio
    }

    pub fn below(&self, price: Price) -> bool {
        at_or_below(price as f64, self.lower())
    }

    pub fn above(&self, price: Price) -> bool {
        at_or_above(price as f64, self.upper())
    }

    /// At or beyond either threshold.
    pub fn breaches(&self, price: Price) -> bool {
        self.below(price) || self.above(price)
    }

    /// Lowest tick strictly inside the lower threshold.
    pub fn safe_low(&self) -> Price {
        let mut p = self.lower().floor() as Price;
        while self.below(p) {
            p += 1;
        }
        p
    }

    /// Highest tick strictly inside the upper threshold.
    pub fn safe_high(&self) -> Price {
        let mut p = self.upper().ceil() as Price;
        while self.above(p) {
            p -= 1;
        }
        p
    }
}

/// A position taken by the interventionist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lot {
    pub side: Side,
    pub quantity: u64,
    pub price: Price,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionistState {
    pub agent: AgentId,
    pub lots: Vec<Lot>,
}

impl InterventionistState {
    pub fn new(agent: AgentId) -> Self {
        InterventionistState { agent, lots: Vec::new() }
    }

    pub fn net_position(&self) -> i64 {
        self.lots.iter().map(|l| l.side.sign() * l.quantity as i64).sum()
    }

    /// Books a fill of the interventionist: it first offsets opposite lots
    /// (oldest first) and opens a new lot with the rest.
    pub fn record_fill(&mut self, side: Side, mut quantity: u64, price: Price) {
        for lot in self.lots.iter_mut().filter(|l| l.side != side) {
            let q = lot.quantity.min(quantity);
            lot.quantity -= q;
            quantity -= q;
            if quantity == 0 {
                break;
            }
        }
        self.lots.retain(|l| l.quantity > 0);
        if quantity > 0 {
            match self.lots.last_mut() {
                Some(l) if l.side == side && l.price == price => l.quantity += quantity,
                _ => self.lots.push(Lot { side, quantity, price }),
            }
        }
    }
}

/// Quantity of `fills` flagged as breaching, selected with `Sum3`.
fn breaching_quantity(fills: &[Fill], breaching: impl Fn(Price) -> bool) -> u64 {
    if fills.is_empty() {
        return 0;
    }
    let flags = Datum::Vector(fills.iter().map(|f| if breaching(f.price) { 1.0 } else { 0.0 }).collect());
    let qty = Datum::Vector(fills.iter().map(|f| f.quantity as f64).collect());
    let sel =
        eval_operator(Operator::Sum3, &[flags, qty, Datum::Scalar(1.0)], &OperatorContext::default()).expect("Sum3 takes three arguments");
    sel.value.to_scalar().round() as u64
}

/// Priority orders that keep `incoming` from trading at or beyond the bounds.
pub fn guard_orders(state: &InterventionistState, incoming: &Order, book: &OrderBook, bounds: &Bounds) -> Vec<Order> {
    let fills = book.simulate(incoming);
    let filled: u64 = fills.iter().map(|f| f.quantity).sum();
    let (breach, safe, side): (Box<dyn Fn(Price) -> bool>, Price, Side) = match incoming.side {
        // a sell walks bids downwards: buy just above the lower bound
        Side::Ask => (Box::new(|p| bounds.below(p)), bounds.safe_low(), Side::Bid),
        Side::Bid => (Box::new(|p| bounds.above(p)), bounds.safe_high(), Side::Ask),
    };
    if bounds.safe_low() > bounds.safe_high() || !incoming.accepts(safe) {
        return Vec::new();
    }
    let breaching = breaching_quantity(&fills, &breach);
    let rests_beyond = incoming.order_type == OrderType::Lmt && incoming.price.is_some_and(&breach);
    if breaching == 0 && !rests_beyond {
        return Vec::new();
    }
    // The priority order adds liquidity, so it must cover everything the
    // incoming order would trade after its in-bounds fills. On a book deep
    // enough to fill the order this is exactly the breaching quantity.
    let quantity = incoming.quantity - (filled - breaching);
    if quantity == 0 {
        return Vec::new();
    }
    vec![Order::limit(side, safe, quantity, state.agent)]
}

/// Closing orders for held lots at their contract prices, sized to what the
/// book absorbs without any fill at or beyond the bounds.
pub fn liquidation_orders(state: &InterventionistState, book: &OrderBook, bounds: &Bounds) -> Vec<Order> {
    closing_orders(state, book, bounds, |lot| lot.price)
}

/// Closing orders for held lots at any price inside the bounds. Used on the
/// last day of a settle cycle so the position is flat before delivery.
pub fn unwind_orders(state: &InterventionistState, book: &OrderBook, bounds: &Bounds) -> Vec<Order> {
    closing_orders(state, book, bounds, |lot| match lot.side {
        Side::Bid => bounds.safe_low(),
        Side::Ask => bounds.safe_high(),
    })
}

fn closing_orders(state: &InterventionistState, book: &OrderBook, bounds: &Bounds, limit: impl Fn(&Lot) -> Price) -> Vec<Order> {
    let mut out = Vec::new();
    for lot in &state.lots {
        let probe = Order::limit(lot.side.opposite(), limit(lot), lot.quantity, state.agent);
        let safe: u64 = book
            .simulate(&probe)
            .iter()
            .take_while(|f| !bounds.breaches(f.price) && f.resting_owner != state.agent)
            .map(|f| f.quantity)
            .sum();
        if safe > 0 {
            out.push(Order { quantity: safe, ..probe });
        }
    }
    out
}
