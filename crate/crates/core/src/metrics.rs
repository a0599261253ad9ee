//! Scalar objectives: price reproduction error, Bollinger width,
//! stabilization fitness, threshold breaches and solution ranking.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{at_or_above, at_or_below, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproductionFitConfig<T> {
    pub w1: T,
    pub w2: T,
}

impl<T: Scalar> Default for ReproductionFitConfig<T> {
    fn default() -> Self {
        ReproductionFitConfig { w1: T::one(), w2: T::one() }
    }
}

/// Mean absolute price error weighted by `w1`, plus `w2` times the summed
/// absolute difference of per-period relative increments.
pub fn reproduction_fitness<T: Scalar>(real: &[T], sim: &[T], cfg: &ReproductionFitConfig<T>) -> Result<T> {
    if real.len() != sim.len() {
        return Err(Error::Contract(format!("series lengths differ: {} vs {}", real.len(), sim.len())));
    }
    if real.len() < 2 {
        return Err(Error::Contract("need at least two periods".into()));
    }
    if let Some(i) = real.iter().position(|x| *x == T::zero()) {
        return Err(Error::Domain(format!("real price at period {i} is zero")));
    }
    if let Some(i) = sim[..sim.len() - 1].iter().position(|x| *x == T::zero()) {
        return Err(Error::Domain(format!("simulated price at period {i} is zero")));
    }
    let n = T::from_usize(real.len()).expect("length fits");
    let mae = real.iter().zip(sim).map(|(r, s)| (*r - *s).abs()).sum::<T>() / n;
    let inc = |s: &[T], i: usize| (s[i + 1] - s[i]) / s[i];
    let drift = (0..real.len() - 1).map(|i| (inc(real, i) - inc(sim, i)).abs()).sum::<T>();
    Ok(cfg.w1 * mae + cfg.w2 * drift)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BollingerConfig<T> {
    pub window: usize,
    pub k: T,
}

impl<T: Scalar> Default for BollingerConfig<T> {
    fn default() -> Self {
        BollingerConfig { window: 5, k: T::lit(2.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bollinger<T> {
    pub ma: Vec<T>,
    pub sigma: Vec<T>,
    pub upper: Vec<T>,
    pub lower: Vec<T>,
    /// Mean band width over all windows.
    pub b_avg: T,
}

/// Bands over every N-term window `i..i+N`, with population deviation.
pub fn bollinger<T: Scalar>(series: &[T], cfg: &BollingerConfig<T>) -> Result<Bollinger<T>> {
    let n = cfg.window;
    if n < 2 {
        return Err(Error::Contract("window must be at least 2".into()));
    }
    if cfg.k < T::zero() || !cfg.k.is_finite() {
        return Err(Error::Contract("band multiple must be a finite non-negative number".into()));
    }
    if series.len() < n {
        return Err(Error::Contract(format!("series of {} is shorter than window {n}", series.len())));
    }
    let nf = T::from_usize(n).expect("window fits");
    let (ma, sigma): (Vec<T>, Vec<T>) = series
        .windows(n)
        .map(|w| {
            // shifted by the first element so a flat window has zero spread
            let d = w.iter().map(|x| *x - w[0]).sum::<T>() / nf;
            let v = w.iter().map(|x| (*x - w[0] - d) * (*x - w[0] - d)).sum::<T>() / nf;
            (w[0] + d, v.sqrt())
        })
        .unzip();
    let upper: Vec<T> = ma.iter().zip(&sigma).map(|(m, s)| *m + cfg.k * *s).collect();
    let lower: Vec<T> = ma.iter().zip(&sigma).map(|(m, s)| *m - cfg.k * *s).collect();
    let count = T::from_usize(ma.len()).expect("count fits");
    let b_avg = upper.iter().zip(&lower).map(|(u, l)| *u - *l).sum::<T>() / count;
    Ok(Bollinger { ma, sigma, upper, lower, b_avg })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizationConfig<T> {
    pub lambda1: T,
    pub lambda2: T,
}

impl<T: Scalar> Default for StabilizationConfig<T> {
    /// Rewards volume and penalizes band width; the result is maximized.
    fn default() -> Self {
        StabilizationConfig { lambda1: -T::one(), lambda2: T::one() }
    }
}

/// `lambda1 * B_avg + lambda2 * mean(volumes)`; larger is better.
pub fn stabilization_fitness<T: Scalar>(
    series: &[T],
    volumes: &[T],
    bollinger_cfg: &BollingerConfig<T>,
    cfg: &StabilizationConfig<T>,
) -> Result<T> {
    if series.len() != volumes.len() {
        return Err(Error::Contract(format!("{} prices vs {} volumes", series.len(), volumes.len())));
    }
    let b = bollinger(series, bollinger_cfg)?;
    let mean_volume = volumes.iter().copied().sum::<T>() / T::from_usize(volumes.len()).expect("length fits");
    Ok(cfg.lambda1 * b.b_avg + cfg.lambda2 * mean_volume)
}

/// Trades at or beyond `p0 * lower_ratio` / `p0 * upper_ratio`.
pub fn breach_count<T: Scalar>(prices: &[T], p0: T, lower_ratio: T, upper_ratio: T) -> Result<usize> {
    if p0 <= T::zero() {
        return Err(Error::Domain("reference price must be positive".into()));
    }
    let (lo, hi) = (p0 * lower_ratio, p0 * upper_ratio);
    Ok(prices.iter().filter(|p| at_or_below(**p, lo) || at_or_above(**p, hi)).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Stabilization fitness; larger is better.
    pub fitness: f64,
    pub complexity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    /// Index into the input list.
    pub index: usize,
    pub candidate: Candidate,
    /// Tied with a neighbour on both criteria.
    pub needs_expert_review: bool,
}

/// Orders by fitness (descending) then complexity (ascending); candidates
/// tied on both keep input order and are flagged for review.
pub fn rank_solutions(candidates: &[Candidate]) -> Vec<Ranked> {
    let cmp = |a: &Candidate, b: &Candidate| b.fitness.total_cmp(&a.fitness).then_with(|| a.complexity.total_cmp(&b.complexity));
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|a, b| cmp(&candidates[*a], &candidates[*b]).then(a.cmp(b)));
    let mut out: Vec<Ranked> = order.iter().map(|i| Ranked { index: *i, candidate: candidates[*i], needs_expert_review: false }).collect();
    for w in 0..out.len().saturating_sub(1) {
        let (a, b) = (out[w].candidate, out[w + 1].candidate);
        if cmp(&a, &b) == Ordering::Equal {
            out[w].needs_expert_review = true;
            out[w + 1].needs_expert_review = true;
        }
    }
    out
}

/// One row of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub config: String,
}

pub fn write_metric_rows<W: std::io::Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "value", "config"])?;
    for r in rows {
        w.write_record([r.metric.as_str(), &format!("{:?}", r.value), r.config.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metric_rows<R: std::io::Read>(input: R) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
