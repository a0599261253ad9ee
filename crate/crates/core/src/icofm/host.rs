//! Host routines of the market scenario: everything that needs the order
//! book or the accounts rather than a single instance's state.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::accounts::Accounts;
use super::book::{AgentId, Order, OrderBook, Phase, Price, Side, Trade};
use super::build::{Layout, INTERVENTIONIST_FN, RESTRICT_FN};
use super::factors::FactorFrame;
use super::interventionist::{guard_orders, liquidation_orders, unwind_orders, Bounds, InterventionistState};
use super::rules::Role;
use super::IcofmConfig;
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, InstanceId, MechanismId, PropertyId};
use crate::metrics::breach_count;
use crate::scheduler::{run_mechanism, stream_seed, Host, HostCtx};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: u64,
    pub open: Price,
    pub close: Price,
    /// Contracts traded in the auction and continuous session.
    pub volume: u64,
    /// Continuous-session trades at or beyond the day's bounds.
    pub breaches: usize,
    /// The market was closed early by a stabilizer.
    pub halted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub day: u64,
    pub timestamp: u64,
    pub price: Price,
    pub quantity: u64,
    pub buyer: AgentId,
    pub seller: AgentId,
}

/// Bookkeeping checked by the conservation tests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    /// Number of times the signed position sum was inspected.
    pub position_checks: usize,
    /// Inspections where it was not zero.
    pub position_violations: usize,
    /// Sum of each day's margin postings.
    pub posting_sums: Vec<i64>,
    /// Total inventory before and after each delivery.
    pub delivery_inventory: Vec<(i64, i64)>,
    /// Orders dropped because the decision produced an invalid order.
    pub invalid_orders: usize,
    /// Interventionist position right before each delivery.
    pub interventionist_before_delivery: Vec<i64>,
}

pub struct IcofmHost {
    pub cfg: IcofmConfig,
    pub frame: FactorFrame,
    layout: Layout,
    factor_columns: Vec<(PropertyId, usize)>,
    market: InstanceId,
    enterprises: Vec<InstanceId>,
    pub book: OrderBook,
    pub accounts: Accounts,
    pub interventionist: InterventionistState,
    armed: bool,
    round: usize,
    day: u64,
    open: Price,
    day_volume: u64,
    day_last: Option<Price>,
    day_prices: Vec<Price>,
    halted: bool,
    cycle_targets: Vec<f64>,
    pub days: Vec<DayRecord>,
    pub trades: Vec<TradeRecord>,
    pub audit: Audit,
}

fn value_f64(graph: &Hypergraph, inst: InstanceId, p: PropertyId) -> Result<f64> {
    Ok(graph.value(inst, p)?.as_f64())
}

impl IcofmHost {
    pub fn new(graph: &Hypergraph, cfg: IcofmConfig, frame: FactorFrame) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::resolve(graph)?;
        let mut factor_columns = Vec::new();
        for p in &layout.factor_props {
            let name = &graph.property(*p)?.name;
            let col = frame.column(name).ok_or_else(|| Error::Contract(format!("factor frame has no column `{name}`")))?;
            factor_columns.push((*p, col));
        }
        let market = graph.singleton(layout.market).ok_or_else(|| Error::Contract("market must be a singleton".into()))?;
        let enterprises = graph.instances_of(layout.enterprise);
        if enterprises.len() != cfg.enterprises() {
            return Err(Error::Contract(format!("{} enterprises in graph, config declares {}", enterprises.len(), cfg.enterprises())));
        }
        let mut accounts = Accounts::new(cfg.enterprises() + 2);
        for a in accounts.agents.iter_mut().take(cfg.enterprises()) {
            a.cash = cfg.initial_cash;
        }
        Ok(IcofmHost {
            interventionist: InterventionistState::new(cfg.interventionist_agent()),
            open: cfg.initial_price,
            cycle_targets: vec![0.0; cfg.enterprises()],
            cfg,
            frame,
            layout,
            factor_columns,
            market,
            enterprises,
            book: OrderBook::new(),
            accounts,
            armed: false,
            round: 0,
            day: 0,
            day_volume: 0,
            day_last: None,
            day_prices: Vec::new(),
            halted: false,
            days: Vec::new(),
            trades: Vec::new(),
            audit: Audit::default(),
        })
    }

    fn mp(&self, graph: &Hypergraph, name: &str) -> Result<PropertyId> {
        self.layout.market(graph, name)
    }

    fn ep(&self, graph: &Hypergraph, name: &str) -> Result<PropertyId> {
        self.layout.enterprise(graph, name)
    }

    fn get_market(&self, graph: &Hypergraph, name: &str) -> Result<f64> {
        value_f64(graph, self.market, self.mp(graph, name)?)
    }

    fn set_market(&self, graph: &mut Hypergraph, name: &str, v: Value) -> Result<()> {
        let p = self.mp(graph, name)?;
        graph.set_value(self.market, p, v)
    }

    fn price_of(&self, graph: &Hypergraph, name: &str) -> Result<Price> {
        Ok(self.get_market(graph, name)?.round() as Price)
    }

    fn role(&self, graph: &Hypergraph, agent: usize) -> Result<Role> {
        Ok(Role::from_code(value_f64(graph, self.enterprises[agent], self.ep(graph, "role")?)?))
    }

    fn bounds(&self) -> Bounds {
        self.cfg.bounds(self.open)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn day_trades_prices(&self) -> &[Price] {
        &self.day_prices
    }

    fn check_positions(&mut self) {
        self.audit.position_checks += 1;
        if self.accounts.net_position() != 0 {
            self.audit.position_violations += 1;
        }
    }

    fn record(&mut self, trades: &[Trade], continuous: bool) -> Result<()> {
        let iv = self.interventionist.agent;
        for t in trades {
            self.accounts.record(t)?;
            if t.buyer == iv {
                self.interventionist.record_fill(Side::Bid, t.quantity, t.price);
            }
            if t.seller == iv {
                self.interventionist.record_fill(Side::Ask, t.quantity, t.price);
            }
            self.trades.push(TradeRecord {
                day: self.day,
                timestamp: t.timestamp,
                price: t.price,
                quantity: t.quantity,
                buyer: t.buyer,
                seller: t.seller,
            });
            self.day_volume += t.quantity;
            self.day_last = Some(t.price);
            if continuous {
                self.day_prices.push(t.price);
            }
        }
        self.check_positions();
        Ok(())
    }

    fn publish_book(&self, graph: &mut Hypergraph) -> Result<()> {
        let bid = self.book.best_bid().unwrap_or(0) as f64;
        let ask = self.book.best_ask().unwrap_or(0) as f64;
        self.set_market(graph, "best_bid", Value::Real(bid))?;
        self.set_market(graph, "best_ask", Value::Real(ask))?;
        self.set_market(graph, "volume", Value::Integer(self.day_volume as i64))?;
        if let Some(p) = self.day_last {
            self.set_market(graph, "last_price", Value::Real(p as f64))?;
        }
        Ok(())
    }

    fn sync_enterprises(&self, graph: &mut Hypergraph) -> Result<()> {
        let (cash, inv, pos) = (self.ep(graph, "cash")?, self.ep(graph, "inventory")?, self.ep(graph, "position")?);
        for (agent, inst) in self.enterprises.iter().enumerate() {
            let a = &self.accounts.agents[agent];
            graph.set_value(*inst, cash, Value::Real(a.cash as f64))?;
            graph.set_value(*inst, inv, Value::Real(a.inventory as f64 * self.cfg.units_per_contract))?;
            graph.set_value(*inst, pos, Value::Integer(a.position))?;
        }
        Ok(())
    }

    /// Orders the enterprises decided on, in a seeded random submission order.
    fn collect_orders(&mut self, graph: &Hypergraph, rng: &mut ChaCha8Rng) -> Result<Vec<Order>> {
        let names = ["order_flag", "order_side", "order_type", "order_price", "order_qty"];
        let ids: Vec<PropertyId> = names.iter().map(|n| self.ep(graph, n)).collect::<Result<_>>()?;
        let mut out = Vec::new();
        for (agent, inst) in self.enterprises.iter().enumerate() {
            let v: Vec<f64> = ids.iter().map(|p| value_f64(graph, *inst, *p)).collect::<Result<_>>()?;
            if v[0] == 0.0 {
                continue;
            }
            let side = if v[1].round() as i64 == 1 { Side::Ask } else { Side::Bid };
            let qty = v[4].round();
            let order = if v[2].round() as i64 == 1 {
                Order::market(side, qty.max(0.0) as u64, agent)
            } else {
                Order::limit(side, v[3].round() as Price, qty.max(0.0) as u64, agent)
            };
            if order.validate().is_err() {
                self.audit.invalid_orders += 1;
                continue;
            }
            out.push(order);
        }
        out.shuffle(rng);
        Ok(out)
    }

    fn ingest(&mut self, graph: &mut Hypergraph, day: u64) -> Result<usize> {
        self.day = day;
        self.round = 0;
        self.armed = false;
        self.halted = false;
        self.day_volume = 0;
        self.day_last = None;
        self.day_prices.clear();
        let quarter = (day / self.cfg.days_per_quarter as u64) as usize;
        let row = self.frame.values.get(quarter).ok_or_else(|| {
            Error::Contract(format!("factor frame covers {} quarters; day {day} needs quarter {quarter}", self.frame.quarters()))
        })?;
        let mut written = 0;
        for (p, col) in &self.factor_columns {
            if graph.property(*p)?.active {
                let f = graph.singleton(self.layout.factors).ok_or_else(|| Error::Contract("factors must be a singleton".into()))?;
                graph.set_value(f, *p, Value::Real(row[*col]))?;
                written += 1;
            }
        }
        let close = self.get_market(graph, "closing_price")?;
        self.set_market(graph, "day", Value::Integer(day as i64))?;
        self.set_market(graph, "phase", Value::Categorical(Phase::CallAuction.code()))?;
        self.set_market(graph, "previous_close", Value::Real(close))?;
        self.book.clear();
        Ok(written)
    }

    fn aggregate(&mut self, graph: &mut Hypergraph) -> Result<usize> {
        let regions = graph.instances_of(self.layout.region);
        let (pp, cp) = (self.layout.region(graph, "production")?, self.layout.region(graph, "consumption")?);
        let mut s = 0.0;
        let mut d = 0.0;
        for r in &regions {
            s += value_f64(graph, *r, pp)?;
            d += value_f64(graph, *r, cp)?;
        }
        let imbalance = if s + d > 0.0 { (d - s) / (s + d) } else { 0.0 };
        self.set_market(graph, "total_supply", Value::Real(s))?;
        self.set_market(graph, "imbalance", Value::Real(imbalance))?;
        Ok(regions.len())
    }

    fn total_consumption(&self, graph: &Hypergraph) -> Result<f64> {
        let cp = self.layout.region(graph, "consumption")?;
        graph.instances_of(self.layout.region).iter().map(|r| value_f64(graph, *r, cp)).sum()
    }

    /// Cycle start: production arrives, consumption drains inventories and
    /// task targets are set. Every day: account state is mirrored.
    fn sync(&mut self, graph: &mut Hypergraph) -> Result<usize> {
        let cycle = self.cfg.settle_cycle as f64;
        let per_contract = self.cfg.units_per_contract;
        if self.day % self.cfg.settle_cycle as u64 == 0 {
            let supply = self.get_market(graph, "total_supply")?;
            let demand = self.total_consumption(graph)?;
            let made = (supply * cycle / per_contract / self.cfg.producers.max(1) as f64).round() as i64;
            let wanted = (demand * cycle / per_contract / self.cfg.consumers.max(1) as f64).round() as f64;
            for agent in 0..self.enterprises.len() {
                let target = match self.role(graph, agent)? {
                    Role::Producer => {
                        self.accounts.agents[agent].inventory += made;
                        self.accounts.agents[agent].inventory as f64
                    }
                    Role::Consumer => {
                        self.accounts.agents[agent].inventory = 0;
                        wanted
                    }
                    Role::Speculator => 0.0,
                };
                self.cycle_targets[agent] = target;
            }
        }
        self.sync_enterprises(graph)?;
        let (tt, td) = (self.ep(graph, "task_target")?, self.ep(graph, "task_done")?);
        for (agent, inst) in self.enterprises.clone().iter().enumerate() {
            let pos = self.accounts.agents[agent].position as f64;
            let done = match self.role(graph, agent)? {
                Role::Producer => (-pos).max(0.0),
                Role::Consumer => pos.max(0.0),
                Role::Speculator => 0.0,
            };
            graph.set_value(*inst, tt, Value::Real(self.cycle_targets[agent]))?;
            graph.set_value(*inst, td, Value::Real(done))?;
        }
        Ok(self.enterprises.len())
    }

    /// Submission-order stream for the current session step. Keyed by the
    /// round, not the plan position, so inserting mechanisms keeps runs paired.
    fn round_rng(&self, ctx: &HostCtx, auction: bool) -> ChaCha8Rng {
        let step = if auction { u64::MAX } else { self.round as u64 };
        ChaCha8Rng::seed_from_u64(stream_seed(&[ctx.seed, ctx.pass, step, 0x5eed]))
    }

    fn auction(&mut self, graph: &mut Hypergraph, ctx: &HostCtx) -> Result<usize> {
        let mut rng = self.round_rng(ctx, true);
        let orders = self.collect_orders(graph, &mut rng)?;
        let n = orders.len();
        for o in orders {
            let _ = self.book.submit(o, Phase::CallAuction, false, &mut |_| true)?;
        }
        let prev = self.price_of(graph, "previous_close")?;
        let result = self.book.call_auction(prev);
        self.open = result.price;
        self.record(&result.trades, false)?;
        self.set_market(graph, "opening_price", Value::Real(result.price as f64))?;
        self.set_market(graph, "last_price", Value::Real(result.price as f64))?;
        self.set_market(graph, "phase", Value::Categorical(Phase::Continuous.code()))?;
        self.publish_book(graph)?;
        Ok(n)
    }

    /// Active non-host mechanisms reading the live price; evaluated before
    /// each would-be trade.
    fn guard_mechanisms(&self, graph: &Hypergraph) -> Result<Vec<MechanismId>> {
        let live = self.mp(graph, "live_price")?;
        let mut out = Vec::new();
        for m in graph.mechanisms() {
            if m.active && m.sources.contains(&live) && !graph.functions().get(m.fn_ref)?.is_host() {
                out.push(m.id);
            }
        }
        Ok(out)
    }

    fn restricted(&self, graph: &Hypergraph) -> Result<bool> {
        let Ok(f) = graph.functions().lookup(RESTRICT_FN) else { return Ok(false) };
        Ok(graph.mechanisms().iter().any(|m| m.active && m.fn_ref == f))
    }

    fn place_priority(&mut self, order: Order) -> Result<()> {
        if self.book.simulate(&order).is_empty() {
            self.book.rest_priority(order)?;
        } else {
            let bounds = self.bounds();
            let out = self.book.match_order(order, &mut |p| !bounds.breaches(p))?;
            self.record(&out.trades, true)?;
        }
        Ok(())
    }

    fn shock_orders(&self) -> Vec<Order> {
        let agent = self.cfg.shock_agent();
        self.cfg
            .shocks
            .iter()
            .filter(|s| s.day == self.day && s.round == self.round)
            .map(|s| match s.price_ratio {
                Some(r) => Order::limit(s.side, ((self.open as f64 * r).round() as Price).max(1), s.quantity, agent),
                None => Order::market(s.side, s.quantity, agent),
            })
            .collect()
    }

    fn trading(&mut self, graph: &mut Hypergraph, ctx: &HostCtx) -> Result<usize> {
        let armed = std::mem::take(&mut self.armed);
        let mut rng = self.round_rng(ctx, false);
        let mut orders = self.collect_orders(graph, &mut rng)?;
        orders.extend(self.shock_orders());
        self.round += 1;
        if self.halted {
            return Ok(0);
        }
        let restrict = self.restricted(graph)?;
        let guards = self.guard_mechanisms(graph)?;
        let live = self.mp(graph, "live_price")?;
        let market = self.market;
        let mut processed = 0;
        for order in orders {
            if self.halted {
                break;
            }
            if armed {
                for p in guard_orders(&self.interventionist, &order, &self.book, &self.bounds()) {
                    self.place_priority(p)?;
                }
            }
            let mut failure = None;
            let mut guard = |price: Price| -> bool {
                if guards.is_empty() {
                    return true;
                }
                let verdict = (|| -> Result<bool> {
                    graph.set_value(market, live, Value::Real(price as f64))?;
                    for m in &guards {
                        run_mechanism(graph, *m, ctx.seed, ctx.pass)?;
                        for t in &graph.mechanism(*m)?.targets {
                            if graph.value(market, *t)?.as_bool() {
                                return Ok(false);
                            }
                        }
                    }
                    Ok(true)
                })();
                verdict.unwrap_or_else(|e| {
                    failure = Some(e);
                    false
                })
            };
            let outcome = self.book.submit(order, Phase::Continuous, restrict, &mut guard)?;
            if let Some(e) = failure {
                return Err(e);
            }
            processed += 1;
            if let Ok(out) = outcome {
                self.record(&out.trades, true)?;
                if out.halted {
                    self.halted = true;
                    self.set_market(graph, "phase", Value::Categorical(Phase::Closed.code()))?;
                }
            }
        }
        self.publish_book(graph)?;
        Ok(processed)
    }

    /// Arms the pre-match guard for the next trading step and unwinds held
    /// lots that the book can absorb inside the bounds.
    fn intervene(&mut self, graph: &mut Hypergraph, mechanism: MechanismId) -> Result<usize> {
        self.armed = true;
        let last = self.price_of(graph, "last_price")?;
        let bounds = self.bounds();
        if !self.halted && self.get_market(graph, "phase")?.round() as u32 == Phase::Continuous.code() && !bounds.breaches(last) {
            let settling = (self.day + 1) % self.cfg.settle_cycle as u64 == 0;
            let orders = if settling {
                unwind_orders(&self.interventionist, &self.book, &bounds)
            } else {
                liquidation_orders(&self.interventionist, &self.book, &bounds)
            };
            for o in orders {
                let out = self.book.match_order(o, &mut |p| !bounds.breaches(p))?;
                self.record(&out.trades, true)?;
            }
            self.publish_book(graph)?;
        }
        let targets = graph.mechanism(mechanism)?.targets.clone();
        let state = [self.interventionist.net_position(), self.interventionist.lots.len() as i64, 1];
        for (t, v) in targets.iter().zip(state) {
            graph.set_value(self.market, *t, Value::Integer(v))?;
        }
        Ok(1)
    }

    fn mark(&mut self, graph: &mut Hypergraph) -> Result<usize> {
        let prev = self.price_of(graph, "previous_close")?;
        let close = self.day_last.unwrap_or(prev);
        let postings = self.accounts.mark_to_market(close, prev);
        self.audit.posting_sums.push(postings.iter().sum());
        self.book.clear();
        self.set_market(graph, "closing_price", Value::Real(close as f64))?;
        self.set_market(graph, "last_price", Value::Real(close as f64))?;
        self.set_market(graph, "phase", Value::Categorical(Phase::Closed.code()))?;
        self.publish_book(graph)?;
        self.sync_enterprises(graph)?;
        let profit = self.ep(graph, "profit")?;
        for (agent, inst) in self.enterprises.iter().enumerate() {
            graph.set_value(*inst, profit, Value::Real(postings[agent] as f64))?;
        }
        let b = self.bounds();
        let prices: Vec<f64> = self.day_prices.iter().map(|p| *p as f64).collect();
        let breaches = breach_count(&prices, self.open as f64, b.lower_ratio, b.upper_ratio)?;
        self.days.push(DayRecord { day: self.day, open: self.open, close, volume: self.day_volume, breaches, halted: self.halted });
        Ok(self.accounts.len())
    }

    fn deliver(&mut self, graph: &mut Hypergraph) -> Result<usize> {
        if (self.day + 1) % self.cfg.settle_cycle as u64 != 0 {
            return Ok(0);
        }
        let price = self.price_of(graph, "closing_price")?;
        let penalty = (self.cfg.penalty_ratio * price as f64).round() as i64;
        let before: i64 = self.accounts.agents.iter().map(|a| a.inventory).sum();
        self.audit.interventionist_before_delivery.push(self.accounts.agents[self.interventionist.agent].position);
        let report = self.accounts.deliver(price, penalty)?;
        let after: i64 = self.accounts.agents.iter().map(|a| a.inventory).sum();
        self.audit.delivery_inventory.push((before, after));
        self.interventionist.lots.clear();
        self.check_positions();
        self.sync_enterprises(graph)?;
        Ok(report.delivered.len())
    }
}

impl Host for IcofmHost {
    fn call(&mut self, name: &str, mechanism: MechanismId, graph: &mut Hypergraph, ctx: &HostCtx) -> Result<usize> {
        match name {
            "ingest_factors" => self.ingest(graph, ctx.pass),
            "aggregate_regions" => self.aggregate(graph),
            "sync_accounts" => self.sync(graph),
            "call_auction" => self.auction(graph, ctx),
            "continuous_trading" => self.trading(graph, ctx),
            "mark_to_market" => self.mark(graph),
            "delivery" => self.deliver(graph),
            INTERVENTIONIST_FN => self.intervene(graph, mechanism),
            other => Err(Error::Step { mechanism: mechanism.0, reason: format!("no host routine `{other}`") }),
        }
    }
}
