//! Positions, margin postings and physical delivery. All amounts are exact
//! integers: cash in ticks x contracts, inventory in contracts.

use serde::{Deserialize, Serialize};

use super::book::{AgentId, Price, Trade};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub cash: i64,
    pub inventory: i64,
    /// Net contracts, long positive.
    pub position: i64,
    /// Position carried in from the previous close.
    pub carried: i64,
    /// Signed quantities traded today with their prices.
    pub day_trades: Vec<(Price, i64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeliveryReport {
    pub price: Price,
    /// (agent, contracts received or handed over, signed like the position).
    pub delivered: Vec<(AgentId, i64)>,
    /// (agent, undelivered contracts) for shorts without enough inventory.
    pub shortfalls: Vec<(AgentId, i64)>,
    pub penalty_per_contract: i64,
}

impl DeliveryReport {
    pub fn is_empty(&self) -> bool {
        self.delivered.is_empty() && self.shortfalls.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounts {
    pub agents: Vec<Account>,
}

impl Accounts {
    pub fn new(n: usize) -> Self {
        Accounts { agents: vec![Account::default(); n] }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn get(&self, id: AgentId) -> Result<&Account> {
        self.agents.get(id).ok_or_else(|| Error::Reference(format!("agent {id}")))
    }

    pub fn get_mut(&mut self, id: AgentId) -> Result<&mut Account> {
        self.agents.get_mut(id).ok_or_else(|| Error::Reference(format!("agent {id}")))
    }

    pub fn record(&mut self, trade: &Trade) -> Result<()> {
        let q = trade.quantity as i64;
        self.get(trade.buyer)?;
        self.get(trade.seller)?;
        let b = &mut self.agents[trade.buyer];
        b.position += q;
        b.day_trades.push((trade.price, q));
        let s = &mut self.agents[trade.seller];
        s.position -= q;
        s.day_trades.push((trade.price, -q));
        Ok(())
    }

    pub fn net_position(&self) -> i64 {
        self.agents.iter().map(|a| a.position).sum()
    }

    /// Posts each agent's variation margin for the day and rolls positions
    /// over: `(close - previous_close) * carried + Σ (close - p) * q`.
    pub fn mark_to_market(&mut self, close: Price, previous_close: Price) -> Vec<i64> {
        self.agents
            .iter_mut()
            .map(|a| {
                let posting = (close - previous_close) * a.carried + a.day_trades.iter().map(|(p, q)| (close - p) * q).sum::<i64>();
                a.cash += posting;
                a.carried = a.position;
                a.day_trades.clear();
                posting
            })
            .collect()
    }

    /// Settles every open position physically at `price`. Shorts deliver what
    /// inventory they hold and pay `penalty` per missing contract; longs are
    /// served in agent order and receive the penalty for what they miss.
    /// Positions must already be marked to `price`.
    pub fn deliver(&mut self, price: Price, penalty: i64) -> Result<DeliveryReport> {
        if self.agents.iter().any(|a| !a.day_trades.is_empty()) {
            return Err(Error::Contract("deliver after marking to market".into()));
        }
        if self.net_position() != 0 {
            return Err(Error::Contract("open positions do not net to zero".into()));
        }
        let mut report = DeliveryReport { price, penalty_per_contract: penalty, ..Default::default() };
        let mut pool = 0i64;
        for (id, a) in self.agents.iter_mut().enumerate() {
            if a.position < 0 {
                let owed = -a.position;
                let handed = owed.min(a.inventory.max(0));
                a.inventory -= handed;
                a.cash += handed * price - (owed - handed) * penalty;
                pool += handed;
                report.delivered.push((id, -handed));
                if handed < owed {
                    report.shortfalls.push((id, owed - handed));
                }
            }
        }
        for (id, a) in self.agents.iter_mut().enumerate() {
            if a.position > 0 {
                let got = a.position.min(pool);
                pool -= got;
                a.inventory += got;
                a.cash += -got * price + (a.position - got) * penalty;
                report.delivered.push((id, got));
            }
        }
        report.delivered.sort_unstable();
        for a in self.agents.iter_mut() {
            a.position = 0;
            a.carried = 0;
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trade(price: Price, q: u64, buyer: AgentId, seller: AgentId) -> Trade {
        Trade { price, quantity: q, buyer, seller, timestamp: 0 }
    }

    #[test]
    fn long_gains_on_rise() {
        let mut acc = Accounts::new(2);
        acc.record(&trade(50, 1, 0, 1)).unwrap();
        let posts = acc.mark_to_market(52, 48);
        assert_eq!(posts, vec![2, -2]);
        assert_eq!(acc.agents[0].carried, 1);
        // next day only the price move counts
        assert_eq!(acc.mark_to_market(55, 52), vec![3, -3]);
    }

    #[test]
    fn no_positions_no_postings() {
        let mut acc = Accounts::new(3);
        assert_eq!(acc.mark_to_market(60, 50), vec![0, 0, 0]);
    }

    #[test]
    fn physical_delivery() {
        let mut acc = Accounts::new(2);
        acc.agents[1].inventory = 5;
        acc.record(&trade(60, 5, 0, 1)).unwrap();
        acc.mark_to_market(60, 60);
        let r = acc.deliver(60, 6).unwrap();
        assert!(r.shortfalls.is_empty());
        assert_eq!((acc.agents[0].inventory, acc.agents[0].cash), (5, -300));
        assert_eq!((acc.agents[1].inventory, acc.agents[1].cash), (0, 300));
        assert!(Accounts::new(2).deliver(60, 6).unwrap().is_empty());
    }

    #[test]
    fn shortfall_pays_penalty() {
        let mut acc = Accounts::new(2);
        acc.agents[1].inventory = 2;
        acc.record(&trade(60, 5, 0, 1)).unwrap();
        acc.mark_to_market(60, 60);
        let r = acc.deliver(60, 6).unwrap();
        assert_eq!(r.shortfalls, vec![(1, 3)]);
        assert_eq!(acc.agents[0].inventory, 2);
        assert_eq!(acc.agents[0].cash + acc.agents[1].cash, 0);
        assert_eq!(acc.agents[1].cash, 120 - 18);
    }
}
