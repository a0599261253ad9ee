//! Day-by-day simulation driver and CSV exports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::factors::{quarterly_means, FactorFrame};
use super::host::{DayRecord, IcofmHost, TradeRecord};
use super::IcofmConfig;
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::metrics::{stabilization_fitness, BollingerConfig, StabilizationConfig};
use crate::protocol::{apply_operation, ChangeReport, OperationVector};
use crate::scheduler::{execute_step, Event, Scheduler};

pub struct Simulation {
    pub graph: Hypergraph,
    pub scheduler: Scheduler,
    pub host: IcofmHost,
    pub seed: u64,
    pub day: u64,
    pub events: Vec<Event>,
}

/// Aggregates of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub days: usize,
    pub trades: usize,
    pub volume: u64,
    pub breaches: usize,
    pub halted_days: usize,
    pub closes: Vec<f64>,
    pub volumes: Vec<f64>,
}

impl RunSummary {
    fn from_days(days: &[DayRecord], trades: usize) -> Self {
        RunSummary {
            days: days.len(),
            trades,
            volume: days.iter().map(|d| d.volume).sum(),
            breaches: days.iter().map(|d| d.breaches).sum(),
            halted_days: days.iter().filter(|d| d.halted).count(),
            closes: days.iter().map(|d| d.close as f64).collect(),
            volumes: days.iter().map(|d| d.volume as f64).collect(),
        }
    }

    /// Stabilization fitness over daily closes and volumes; `None` when the
    /// run is shorter than the window.
    pub fn stabilization(&self, bollinger: &BollingerConfig<f64>, cfg: &StabilizationConfig<f64>) -> Option<f64> {
        stabilization_fitness(&self.closes, &self.volumes, bollinger, cfg).ok()
    }
}

impl Simulation {
    pub fn new(cfg: &IcofmConfig, frame: FactorFrame, seed: u64) -> Result<Self> {
        let (graph, scheduler) = super::build::build(cfg)?;
        Self::from_parts(graph, scheduler, cfg.clone(), frame, seed)
    }

    pub fn from_parts(graph: Hypergraph, scheduler: Scheduler, cfg: IcofmConfig, frame: FactorFrame, seed: u64) -> Result<Self> {
        let host = IcofmHost::new(&graph, cfg, frame)?;
        Ok(Simulation { graph, scheduler, host, seed, day: 0, events: Vec::new() })
    }

    pub fn apply(&mut self, op: &OperationVector) -> Result<ChangeReport> {
        apply_operation(&mut self.graph, &mut self.scheduler, op)
    }

    pub fn apply_all(&mut self, ops: &[OperationVector]) -> Result<()> {
        for op in ops {
            self.apply(op)?;
        }
        Ok(())
    }

    /// Runs one trading day (one full plan pass).
    pub fn step(&mut self) -> Result<()> {
        self.scheduler.begin_pass();
        let plan = self.scheduler.plan.clone();
        let events = execute_step(&mut self.graph, &plan, &mut self.host, self.seed, self.day)?;
        self.events.extend(events);
        self.day += 1;
        Ok(())
    }

    pub fn run(&mut self, days: u64) -> Result<RunSummary> {
        for _ in 0..days {
            self.step()?;
        }
        Ok(self.summary())
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary::from_days(&self.host.days, self.host.trades.len())
    }

    /// Mean daily close per quarter.
    pub fn quarterly_prices(&self) -> Vec<f64> {
        let closes: Vec<f64> = self.host.days.iter().map(|d| d.close as f64).collect();
        quarterly_means(&closes, self.host.cfg.days_per_quarter)
    }
}

pub fn write_days<W: Write>(days: &[DayRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for d in days {
        w.serialize(d)?;
    }
    if days.is_empty() {
        w.write_record(["day", "open", "close", "volume", "breaches", "halted"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_days<R: std::io::Read>(input: R) -> Result<Vec<DayRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

pub fn write_trades<W: Write>(trades: &[TradeRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in trades {
        w.serialize(t)?;
    }
    if trades.is_empty() {
        w.write_record(["day", "timestamp", "price", "quantity", "buyer", "seller"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trades<R: std::io::Read>(input: R) -> Result<Vec<TradeRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}
