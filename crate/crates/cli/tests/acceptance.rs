//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use hyperabm::hybrid::toy::{toy_expert_rule, toy_learner, toy_registry, TOY_EXPERT};
use hyperabm::hybrid::train::Sample;
use hyperabm::hybrid::{
    collect_rollout, gated_act, happo_update, ppo_update, surrogate_grad, surrogate_loss, ActMode, Expert, GateMode, GatedPolicy,
    NeuralPolicy, RunningNormalizer, ToyMarket, TrainConfig,
};
use hyperabm::icofm::{
    install_interventionist_ops, paired_runs, shock_fixture, IcofmConfig, MarketSetup, Order, OrderBook, Shock, Side, Simulation,
    SHOCK_HORIZON,
};
use hyperabm::metrics::{
    bollinger, breach_count, reproduction_fitness, stabilization_fitness, BollingerConfig, ReproductionFitConfig, StabilizationConfig,
};
use hyperabm::protocol::{apply_operation, decode, encode, ComponentType, OperationVector, SolutionFile};
use hyperabm::registry::{FnEntry, FnId};
use hyperabm::scheduler::{build_plan, ScheduleDag, Scheduler};
use hyperabm::symbolic::{
    decode_genome, evolve, run_program, threshold_recovery_fitness, threshold_recovery_shape, Datum, EvolutionConfig, OperatorContext,
    DEFAULT_LOOP_CAP, RECOVERY_GRID,
};
use hyperabm::{ComponentRef, Error, Hypergraph, KindId, MechanismDef, MechanismId, PropertyId, ValueKind};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: hyperabm::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---- 1. continuous matching against a naive matcher ----

#[derive(Clone)]
struct Naive {
    side: Side,
    price: Option<i64>,
    qty: u64,
    owner: usize,
    seq: u64,
}

/// Scans every resting order for the best acceptable one on each step.
fn naive_match(book: &mut Vec<Naive>, mut inc: Naive) -> (Vec<(i64, u64, usize, usize, u64)>, u64, u64) {
    let mut trades = Vec::new();
    while inc.qty > 0 {
        let acceptable = |r: &Naive| {
            r.side != inc.side
                && match (inc.side, inc.price) {
                    (_, None) => true,
                    (Side::Bid, Some(p)) => r.price.unwrap() <= p,
                    (Side::Ask, Some(p)) => r.price.unwrap() >= p,
                }
        };
        let mut best: Option<usize> = None;
        for (i, r) in book.iter().enumerate() {
            if !acceptable(r) {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let (rp, bp) = (r.price.unwrap(), book[b].price.unwrap());
                    let price_better = if inc.side == Side::Bid { rp < bp } else { rp > bp };
                    price_better || (rp == bp && r.seq < book[b].seq)
                }
            };
            if better {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        let q = inc.qty.min(book[b].qty);
        let (buyer, seller) = if inc.side == Side::Bid { (inc.owner, book[b].owner) } else { (book[b].owner, inc.owner) };
        trades.push((book[b].price.unwrap(), q, buyer, seller, inc.seq));
        inc.qty -= q;
        book[b].qty -= q;
        if book[b].qty == 0 {
            book.remove(b);
        }
    }
    let (mut rested, mut cancelled) = (0, 0);
    if inc.qty > 0 {
        if inc.price.is_some() {
            rested = inc.qty;
            book.push(inc);
        } else {
            cancelled = inc.qty;
        }
    }
    (trades, rested, cancelled)
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut total_trades, mut total_orders) = (0usize, 0usize);
    for stream in 0..10_000 {
        let mut book = OrderBook::new();
        let mut naive: Vec<Naive> = Vec::new();
        let n = rng.random_range(1..=200);
        total_orders += n;
        for i in 0..n {
            let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
            let qty = rng.random_range(1..=10);
            let owner = rng.random_range(0..6);
            let price = rng.random_bool(0.75).then(|| rng.random_range(95..=105));
            let order = match price {
                Some(p) => Order::limit(side, p, qty, owner),
                None => Order::market(side, qty, owner),
            };
            let out = lib(book.match_order(order, &mut |_| true))?;
            let got: Vec<_> = out.trades.iter().map(|t| (t.price, t.quantity, t.buyer, t.seller, t.timestamp)).collect();
            let want = naive_match(&mut naive, Naive { side, price, qty, owner, seq: i as u64 + 1 });
            ensure(got == want.0 && out.rested == want.1 && out.cancelled == want.2, || {
                format!("stream {stream} order {i}: got {got:?} want {:?}", want.0)
            })?;
            total_trades += got.len();
            if let (Some(b), Some(a)) = (book.best_bid(), book.best_ask()) {
                ensure(b < a, || format!("stream {stream}: crossed book {b} >= {a}"))?;
            }
        }
        for side in [Side::Bid, Side::Ask] {
            let got: Vec<_> = book.resting(side).iter().map(|o| (o.price.unwrap(), o.quantity, o.owner, o.timestamp)).collect();
            let mut want: Vec<&Naive> = naive.iter().filter(|o| o.side == side).collect();
            want.sort_by_key(|o| (if side == Side::Bid { -o.price.unwrap() } else { o.price.unwrap() }, o.seq));
            let want: Vec<_> = want.iter().map(|o| (o.price.unwrap(), o.qty, o.owner, o.seq)).collect();
            ensure(got == want, || format!("stream {stream}: resting {side:?} orders differ"))?;
        }
    }
    Ok(format!("10000 streams, {total_orders} orders, {total_trades} trades identical"))
}

// ---- 2. call auction ----

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut cleared = 0;
    for case in 0..1000 {
        let mut book = OrderBook::new();
        let mut limits = Vec::new();
        for owner in 0..rng.random_range(0..=40) {
            let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
            let (p, q) = (rng.random_range(90..=110), rng.random_range(1..=20));
            lib(book.rest(Order::limit(side, p, q, owner)))?;
            limits.push((side, p, q));
        }
        let prev = rng.random_range(85..=115);
        let volume = |price: i64| {
            let demand: u64 = limits.iter().filter(|(s, p, _)| *s == Side::Bid && *p >= price).map(|o| o.2).sum();
            let supply: u64 = limits.iter().filter(|(s, p, _)| *s == Side::Ask && *p <= price).map(|o| o.2).sum();
            demand.min(supply)
        };
        let best = (80..=120).map(volume).max().unwrap();
        let expected =
            if best == 0 { prev } else { (80..=120).filter(|p| volume(*p) == best).min_by_key(|p| ((p - prev).abs(), *p)).unwrap() };
        let r = book.call_auction(prev);
        ensure(r.volume == best && r.price == expected, || {
            format!("case {case}: auction ({}, {}) vs brute force ({expected}, {best})", r.price, r.volume)
        })?;
        ensure(r.trades.iter().map(|t| t.quantity).sum::<u64>() == best, || format!("case {case}: trades do not sum to volume"))?;
        for t in &r.trades {
            let (_, bid, _) = limits[t.buyer];
            let (_, ask, _) = limits[t.seller];
            ensure(t.price == r.price && bid >= r.price && ask <= r.price, || format!("case {case}: trade {t:?} violates a limit"))?;
        }
        cleared += usize::from(best > 0);
    }
    // the clearing price becomes the opening price in market state
    let mut days = 0;
    for seed in 0..5 {
        let setup = lib(MarketSetup::new(&IcofmConfig::default(), seed, 20))?;
        let mut sim = lib(Simulation::from_parts(setup.graph, setup.scheduler, setup.cfg, setup.frame, seed))?;
        let layout = sim.host.layout().clone();
        let open_p = lib(layout.market(&sim.graph, "opening_price"))?;
        let market = sim.graph.singleton(layout.market).ok_or("no market instance")?;
        for _ in 0..20 {
            lib(sim.step())?;
            let state = lib(sim.graph.value(market, open_p))?.as_f64();
            let day = sim.host.days.last().unwrap();
            ensure(state == day.open as f64, || format!("seed {seed} day {}: market opening {state} vs {}", day.day, day.open))?;
            days += 1;
        }
    }
    Ok(format!("1000 books ({cleared} with volume) match brute force; opening price set on {days} simulated days"))
}

// ---- 3. conservation ----

fn random_market(rng: &mut ChaCha8Rng) -> IcofmConfig {
    let mut cfg = IcofmConfig {
        producers: rng.random_range(1..=3),
        consumers: rng.random_range(1..=3),
        speculators: rng.random_range(0..=3),
        regions: rng.random_range(1..=3),
        factors_per_category: rng.random_range(1..=3),
        settle_cycle: rng.random_range(5..=25),
        rounds_per_day: rng.random_range(1..=5),
        ..IcofmConfig::default()
    };
    if rng.random_bool(0.5) {
        let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
        let ratio = if side == Side::Ask { 0.8 } else { 1.2 };
        cfg.shocks.push(Shock {
            day: rng.random_range(0..50),
            round: rng.random_range(0..cfg.rounds_per_day),
            side,
            price_ratio: rng.random_bool(0.7).then_some(ratio),
            quantity: rng.random_range(10..=80),
        });
    }
    cfg
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut trades, mut deliveries) = (0usize, 0usize);
    for scenario in 0..100 {
        let cfg = random_market(&mut rng);
        let seed = rng.random::<u64>();
        let mut setup = lib(MarketSetup::new(&cfg, seed, 50))?;
        if rng.random_bool(0.5) {
            let ops = lib(install_interventionist_ops(&setup.graph, &setup.scheduler))?;
            let mut s = Scheduler::from_steps(&setup.scheduler.plan.steps);
            for op in &ops {
                lib(apply_operation(&mut setup.graph, &mut s, op))?;
            }
            setup.scheduler = s;
        }
        let fresh = lib(Simulation::from_parts(setup.graph.clone(), setup.scheduler.clone(), cfg.clone(), setup.frame.clone(), seed))?;
        let cash0: i64 = fresh.host.accounts.agents.iter().map(|a| a.cash).sum();
        let sim = lib(setup.run(None, 50))?;
        let h = &sim.host;
        let n = h.accounts.len();
        let tag = |what: &str| format!("scenario {scenario}: {what}");

        // positions and margin postings replayed from the trade tape
        let mut position = vec![0i64; n];
        let mut prev_close = cfg.initial_price;
        for d in &h.days {
            let carried = position.clone();
            let mut postings: Vec<i64> = carried.iter().map(|c| (d.close - prev_close) * c).collect();
            for t in h.trades.iter().filter(|t| t.day == d.day) {
                let q = t.quantity as i64;
                position[t.buyer] += q;
                position[t.seller] -= q;
                postings[t.buyer] += (d.close - t.price) * q;
                postings[t.seller] -= (d.close - t.price) * q;
            }
            ensure(position.iter().sum::<i64>() == 0, || tag(&format!("positions do not net out on day {}", d.day)))?;
            ensure(postings.iter().sum::<i64>() == 0, || tag(&format!("replayed postings do not net out on day {}", d.day)))?;
            if (d.day + 1) % cfg.settle_cycle as u64 == 0 {
                position.iter_mut().for_each(|p| *p = 0);
            }
            prev_close = d.close;
        }
        let held: Vec<i64> = h.accounts.agents.iter().map(|a| a.position).collect();
        ensure(held == position, || tag("account positions differ from the replayed tape"))?;
        ensure(h.audit.position_violations == 0 && h.audit.position_checks >= 50, || tag("position audit failed"))?;
        ensure(h.audit.posting_sums.len() == 50 && h.audit.posting_sums.iter().all(|s| *s == 0), || tag("posting sums"))?;
        let expected_deliveries = 50 / cfg.settle_cycle;
        ensure(h.audit.delivery_inventory.len() == expected_deliveries, || tag("delivery count"))?;
        ensure(h.audit.delivery_inventory.iter().all(|(b, a)| b == a), || tag("inventory changed across delivery"))?;
        let cash: i64 = h.accounts.agents.iter().map(|a| a.cash).sum();
        ensure(cash == cash0, || tag(&format!("total cash {cash} vs {cash0}")))?;
        trades += h.trades.len();
        deliveries += expected_deliveries;
    }
    Ok(format!("100 scenarios x 50 days, {trades} trades, {deliveries} deliveries conserved"))
}

// ---- 4. metrics ----

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let len = rng.random_range(5..=60);
        let real: Vec<f64> = (0..len).map(|_| rng.random_range(50.0..150.0)).collect();
        let sim: Vec<f64> = (0..len).map(|_| rng.random_range(50.0..150.0)).collect();
        let (w1, w2) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let rcfg = ReproductionFitConfig { w1, w2 };

        let mut mae = 0.0;
        for i in 0..len {
            mae += (real[i] - sim[i]).abs();
        }
        mae /= len as f64;
        let mut drift = 0.0;
        for i in 0..len - 1 {
            drift += ((real[i + 1] - real[i]) / real[i] - (sim[i + 1] - sim[i]) / sim[i]).abs();
        }
        let want = w1 * mae + w2 * drift;
        let got = lib(reproduction_fitness(&real, &sim, &rcfg))?;
        worst = worst.max((got - want).abs());
        ensure(close(got, want), || format!("case {case}: reproduction {got} vs {want}"))?;
        ensure(lib(reproduction_fitness(&real, &real, &rcfg))? == 0.0, || format!("case {case}: self fit is not 0"))?;

        let window = rng.random_range(2..=len.min(10));
        let k = rng.random_range(0.5..3.0);
        let bcfg = BollingerConfig { window, k };
        let b = lib(bollinger(&real, &bcfg))?;
        let mut widths = Vec::new();
        for (i, start) in (0..=len - window).enumerate() {
            let w = &real[start..start + window];
            let m = w.iter().sum::<f64>() / window as f64;
            let sd = (w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / window as f64).sqrt();
            for (g, e) in [(b.ma[i], m), (b.sigma[i], sd), (b.upper[i], m + k * sd), (b.lower[i], m - k * sd)] {
                worst = worst.max((g - e).abs());
                ensure(close(g, e), || format!("case {case}: band {i} value {g} vs {e}"))?;
            }
            widths.push(2.0 * k * sd);
        }
        let b_avg = widths.iter().sum::<f64>() / widths.len() as f64;
        ensure(b.ma.len() == widths.len() && close(b.b_avg, b_avg), || format!("case {case}: B_avg {} vs {b_avg}", b.b_avg))?;

        let volumes: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..100.0)).collect();
        let (l1, l2) = (rng.random_range(-2.0..0.0), rng.random_range(0.0..2.0));
        let got = lib(stabilization_fitness(&real, &volumes, &bcfg, &StabilizationConfig { lambda1: l1, lambda2: l2 }))?;
        let want = l1 * b_avg + l2 * volumes.iter().sum::<f64>() / len as f64;
        ensure(close(got, want), || format!("case {case}: stabilization {got} vs {want}"))?;

        let constant = vec![real[0]; len];
        ensure(lib(bollinger(&constant, &bcfg))?.b_avg == 0.0, || format!("case {case}: constant series has B_avg > 0"))?;

        let p0: i64 = rng.random_range(50..=150);
        let (lo, hi): (i64, i64) = (rng.random_range(80..=95), rng.random_range(105..=120));
        let prices: Vec<i64> = (0..len).map(|_| rng.random_range(30..=200)).collect();
        let want = prices.iter().filter(|p| 100 * **p <= lo * p0 || 100 * **p >= hi * p0).count();
        let as_f: Vec<f64> = prices.iter().map(|p| *p as f64).collect();
        let got = lib(breach_count(&as_f, p0 as f64, lo as f64 / 100.0, hi as f64 / 100.0))?;
        ensure(got == want, || format!("case {case}: {got} breaches vs {want}"))?;
    }
    Ok(format!("1000 series, max deviation {worst:.1e}"))
}

// ---- 5. CGP elitism and recovery ----

/// Frozen from the pilot: mu 4, lambda 16, 40 columns, rate 0.15, 5000 generations.
fn recovery_config(seed: u64) -> EvolutionConfig {
    EvolutionConfig {
        mu: 4,
        lambda: 16,
        mutation_rate: 0.15,
        max_generations: 5000,
        seed,
        target_fitness: Some(0.0),
        ..EvolutionConfig::default()
    }
}

fn criterion_5() -> Check {
    let shape = threshold_recovery_shape(40);
    let mut hits = 0;
    let mut generations = Vec::new();
    for seed in 0..20 {
        let r = lib(evolve(&recovery_config(seed), &shape, |g| threshold_recovery_fitness(g, 0.1), None))?;
        ensure(r.history.windows(2).all(|w| w[1] <= w[0]), || format!("seed {seed}: history increases"))?;
        ensure(r.history.last() == Some(&r.best_fitness), || format!("seed {seed}: history does not end at the best"))?;
        if r.best_fitness == 0.0 {
            // re-check the winner on the grid with integer arithmetic
            let program = lib(decode_genome(&r.best))?;
            let ctx = OperatorContext::default();
            for x in RECOVERY_GRID {
                for y in RECOVERY_GRID {
                    let out =
                        lib(run_program(&program, &[Datum::Scalar(f64::from(x)), Datum::Scalar(f64::from(y))], &ctx, DEFAULT_LOOP_CAP))?;
                    let fires = out.outputs[0].to_scalar() > 0.0;
                    ensure(fires == (10 * x >= 11 * y), || format!("seed {seed}: winner misclassifies ({x}, {y})"))?;
                }
            }
            hits += 1;
            generations.push(r.generations);
        }
    }
    ensure(hits >= 16, || format!("recovered in {hits}/20 seeds, need 16"))?;
    generations.sort_unstable();
    Ok(format!("recovered in {hits}/20 seeds (median {} generations), every history non-increasing", generations[generations.len() / 2]))
}

// ---- 6. gate identities ----

fn toy_policy(gate: GateMode, seed: u64) -> Result<GatedPolicy, String> {
    let env = lib(ToyMarket::new(1, 25))?;
    let expert = lib(Expert::from_registry(&lib(toy_registry())?, TOY_EXPERT))?;
    let cfg = TrainConfig { agents: 1, seed, ..TrainConfig::default() };
    let mut learner = lib(toy_learner(&env, expert, gate, &[32, 32], &cfg, 0))?;
    // move away from the near-uniform initialization
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = learner.policy.net.actor.params().iter().map(|w| w + rng.random_range(-0.5..0.5)).collect();
    lib(learner.policy.net.actor.set_params(&p))?;
    Ok(learner.policy)
}

fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let expert_only = toy_policy(GateMode::Fixed(0.0), 1)?;
    let net_only = toy_policy(GateMode::Fixed(1.0), 1)?;
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let obs = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let mode = if i % 2 == 0 { ActMode::Sample } else { ActMode::Greedy };
        let mut act_rng = ChaCha8Rng::seed_from_u64(i);

        let act = lib(gated_act(&expert_only, &obs, mode, &mut act_rng.clone()))?;
        ensure(act.u == toy_expert_rule(&obs), || format!("obs {obs:?}: gate 0 gave {:?}", act.u))?;

        let act = lib(gated_act(&net_only, &obs, mode, &mut act_rng.clone()))?;
        ensure(act.u == act.a, || format!("obs {obs:?}: gate 1 output differs from the net"))?;
        let out = lib(net_only.net.actor.forward(&act.obs_n))?;
        let (alpha, beta) = (1.0 + softplus(out[0]), 1.0 + softplus(out[1]));
        let (low, high) = (net_only.net.low[0], net_only.net.high[0]);
        let want = match mode {
            ActMode::Greedy => low + (high - low) * alpha / (alpha + beta),
            ActMode::Sample => {
                // the toy expert draws nothing, so the Beta draw comes first
                let x: f64 = Beta::new(alpha, beta).unwrap().sample(&mut act_rng);
                low + (high - low) * x
            }
        };
        worst = worst.max((act.u[0] - want).abs());
        ensure((act.u[0] - want).abs() <= 1e-12, || format!("obs {obs:?}: net action {} vs {want}", act.u[0]))?;

        let g = rng.random_range(0.0..1.0);
        let blended = GatedPolicy { gate: GateMode::Fixed(g), ..net_only.clone() };
        let act = lib(gated_act(&blended, &obs, mode, &mut ChaCha8Rng::seed_from_u64(i)))?;
        let e = toy_expert_rule(&obs)[0];
        let want = g * act.a[0] + (1.0 - g) * e;
        worst = worst.max((act.u[0] - want).abs());
        ensure((act.u[0] - want).abs() <= 1e-12, || format!("gate {g}: {} vs {want}", act.u[0]))?;
    }
    Ok(format!("10000 observations; gate 0 bit-exact, gate 1 and blends within {worst:.1e}"))
}

// ---- 7. gradient check ----

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let clip = 0.2;
    let mut worst = 0.0f64;
    for point in 0..100 {
        let norm = lib(RunningNormalizer::new(vec![-1.0; 3], vec![1.0; 3], 5.0))?;
        let net = lib(NeuralPolicy::new(norm, &[8], vec![-1.0, 0.0], vec![1.0, 2.0], 0.0, &mut rng))?;
        let expert = Expert::new("fixed", |_, _| Ok(vec![0.0, 1.0]));
        let mut policy = GatedPolicy::new(expert, net, GateMode::Learned);
        let theta: Vec<f64> = (0..policy.net.actor.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        lib(policy.net.actor.set_params(&theta))?;

        let mut rows = Vec::new();
        for _ in 0..16 {
            let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let action = vec![rng.random_range(-0.9..0.9), rng.random_range(0.1..1.9)];
            let gate = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            let lp = lib(policy.log_prob(&obs, &action, gate))?;
            let old = lp + rng.random_range(-0.4..0.4);
            let weight = rng.random_range(-2.0..2.0);
            rows.push((obs, action, gate, old, weight));
        }
        let batch: Vec<Sample> =
            rows.iter().map(|(o, a, g, old, w)| Sample { obs_n: o, action: a, gate: *g, old_log_prob: *old, weight: *w }).collect();
        let (loss, grad) = lib(surrogate_grad(&policy, &batch, clip))?;
        ensure((loss - lib(surrogate_loss(&policy, &batch, clip))?).abs() <= 1e-12, || format!("point {point}: loss mismatch"))?;
        let h = 1e-6;
        let mut fd = vec![0.0; theta.len()];
        for j in 0..theta.len() {
            let mut t = theta.clone();
            t[j] = theta[j] + h;
            lib(policy.net.actor.set_params(&t))?;
            let up = lib(surrogate_loss(&policy, &batch, clip))?;
            t[j] = theta[j] - h;
            lib(policy.net.actor.set_params(&t))?;
            let down = lib(surrogate_loss(&policy, &batch, clip))?;
            fd[j] = (up - down) / (2.0 * h);
        }
        lib(policy.net.actor.set_params(&theta))?;
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|b| b * b).sum::<f64>().sqrt());
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        worst = worst.max(rel);
        ensure(rel <= 1e-4, || format!("point {point}: relative gradient error {rel:.2e}"))?;
    }
    Ok(format!("100 points, max relative error {worst:.1e}"))
}

// ---- 8. hybrid beats expert; N = 1 reduction ----

fn criterion_8(train_report: &Path) -> Check {
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(train_report).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (expert, trained) = (report["expert_baseline"].as_f64().unwrap(), report["trained"].as_f64().unwrap());
    let episodes = report["evaluation_episodes"].as_u64().unwrap();
    ensure(episodes == 50, || format!("{episodes} evaluation episodes"))?;
    ensure(trained >= expert, || format!("trained {trained:.4} < expert {expert:.4}"))?;

    let mut rounds = 0;
    for seed in 0..3u64 {
        let mut env = lib(ToyMarket::new(1, 25))?;
        let cfg = TrainConfig { agents: 1, minibatch: 50, horizon: 200, seed, ..TrainConfig::default() };
        let expert_fn = lib(Expert::from_registry(&lib(toy_registry())?, TOY_EXPERT))?;
        let mut single = lib(toy_learner(&env, expert_fn, GateMode::Learned, &[16], &cfg, 0))?;
        let mut multi = vec![single.clone()];
        for round in 0..3u64 {
            let buffer =
                lib(collect_rollout(&mut env, &[&single.policy], &[&single.critic], cfg.horizon, seed * 100 + round, ActMode::Sample))?;
            let a = lib(ppo_update(&mut single, &buffer, &cfg, round))?;
            let b = lib(happo_update(&mut multi, &buffer, &cfg, round))?;
            let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
            ensure(a == b, || format!("seed {seed} round {round}: update reports differ"))?;
            ensure(bits(single.policy.net.actor.params()) == bits(multi[0].policy.net.actor.params()), || {
                format!("seed {seed} round {round}: actor parameters differ")
            })?;
            ensure(bits(single.critic.net.params()) == bits(multi[0].critic.net.params()), || {
                format!("seed {seed} round {round}: critic parameters differ")
            })?;
            rounds += 1;
        }
    }
    Ok(format!("trained {trained:.4} >= expert {expert:.4} over {episodes} episodes; N=1 update bit-exact over {rounds} rounds"))
}

// ---- 9. interventionist ----

fn criterion_9() -> Check {
    let (mut base_total, mut treated_total, mut absorbed) = (0, 0, 0u64);
    for seed in 0..20 {
        let setup = lib(MarketSetup::new(&shock_fixture(), seed, SHOCK_HORIZON))?;
        let ops = lib(install_interventionist_ops(&setup.graph, &setup.scheduler))?;
        let solution = SolutionFile { operations: ops, ..SolutionFile::default() };
        let (base, treated, _) = lib(paired_runs(&setup, &solution, SHOCK_HORIZON))?;
        let count = |sim: &Simulation| {
            sim.host
                .trades
                .iter()
                .filter(|t| {
                    let open = sim.host.days[t.day as usize].open;
                    10 * t.price <= 9 * open || 10 * t.price >= 11 * open
                })
                .count()
        };
        let (b, t) = (count(&base), count(&treated));
        ensure(t < b, || format!("seed {seed}: {t} breaches intervened vs {b} baseline"))?;
        ensure(t == 0, || format!("seed {seed}: {t} intervened trades outside the bounds"))?;
        let iv = treated.host.cfg.interventionist_agent();
        let before = &treated.host.audit.interventionist_before_delivery;
        ensure(!before.is_empty() && before.iter().all(|p| *p == 0), || format!("seed {seed}: position before delivery {before:?}"))?;
        ensure(treated.host.accounts.agents[iv].position == 0 && treated.host.interventionist.lots.is_empty(), || {
            format!("seed {seed}: interventionist not flat at the horizon")
        })?;
        absorbed += treated.host.trades.iter().filter(|t| t.buyer == iv).map(|t| t.quantity).sum::<u64>();
        base_total += b;
        treated_total += t;
    }
    Ok(format!("20 paired seeds: breaches {base_total} -> {treated_total}, {absorbed} contracts absorbed and unwound"))
}

// ---- 10. protocol and plumbing ----

fn random_ids(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<PropertyId> {
    let mut ids: Vec<usize> = (0..rng.random_range(0..=max_len)).map(|_| rng.random_range(0..1000)).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(rng);
    ids.into_iter().map(PropertyId).collect()
}

fn random_op(rng: &mut ChaCha8Rng) -> OperationVector {
    const KINDS: [ValueKind; 5] = [ValueKind::Real, ValueKind::Integer, ValueKind::Boolean, ValueKind::RealSeq, ValueKind::Categorical];
    match rng.random_range(0..6) {
        0 => OperationVector::AlterNode {
            property: PropertyId(rng.random_range(0..1000)),
            new_kind: rng.random_bool(0.5).then(|| KindId(rng.random_range(0..50))),
            new_value_kind: rng.random_bool(0.5).then(|| KINDS[rng.random_range(0..5)]),
        },
        1 => OperationVector::AlterEdge { mechanism: MechanismId(rng.random_range(0..500)), fn_ref: FnId(rng.random_range(0..100)) },
        2 => OperationVector::AddNode { kind: KindId(rng.random_range(0..50)), value_kind: KINDS[rng.random_range(0..5)] },
        3 => {
            let sources = random_ids(rng, 6);
            let grouping_keys = sources.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
            OperationVector::AddEdge(MechanismDef {
                sources,
                targets: random_ids(rng, 4),
                fn_ref: FnId(rng.random_range(0..100)),
                grouping_keys,
            })
        }
        4 => OperationVector::Eliminate {
            component: if rng.random_bool(0.5) { ComponentType::Node } else { ComponentType::Hyperedge },
            mask: (0..rng.random_range(0..120)).map(|_| rng.random_bool(0.5)).collect(),
        },
        _ => OperationVector::Reschedule((0..rng.random_range(0..40)).map(|_| MechanismId(rng.random_range(0..500))).collect()),
    }
}

fn closure_holds(g: &Hypergraph) -> bool {
    g.mechanisms().iter().all(|m| !m.active || m.sources.iter().all(|p| g.properties()[p.0].active))
}

fn has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    fn visit(v: usize, adj: &[Vec<usize>], state: &mut [u8]) -> bool {
        state[v] = 1;
        for &w in &adj[v] {
            if state[w] == 1 || (state[w] == 0 && visit(w, adj, state)) {
                return true;
            }
        }
        state[v] = 2;
        false
    }
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[*a].push(*b);
    }
    let mut state = vec![0u8; n];
    (0..n).any(|v| state[v] == 0 && visit(v, &adj, &mut state))
}

fn protocol_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for i in 0..100_000 {
        let op = random_op(&mut rng);
        let ints = encode(&op);
        ensure(ints.len() == 3 + ints[2] as usize, || format!("op {i}: length field {} for {} integers", ints[2], ints.len()))?;
        ensure(lib(decode(&ints))? == op, || format!("op {i}: {op:?} does not round-trip"))?;
    }

    let mut toggles = 0;
    for case in 0..200 {
        let mut g = Hypergraph::new();
        let mut fns = BTreeMap::new();
        for i in 1..=3 {
            for o in 1..=2 {
                fns.insert((i, o), lib(g.register_fn(FnEntry::host(&format!("h{i}{o}"), i, o)))?);
            }
        }
        let k = g.add_kind("thing");
        let n_props = rng.random_range(5..=20);
        for p in 0..n_props {
            lib(g.add_property(k, &format!("p{p}"), ValueKind::Real))?;
        }
        let mut sched = Scheduler::from_steps(&[]);
        for _ in 0..rng.random_range(1..=20) {
            let mut ids: Vec<PropertyId> = (0..n_props).map(PropertyId).collect();
            ids.shuffle(&mut rng);
            let (i, o) = (rng.random_range(1..=3), rng.random_range(1..=2));
            let def =
                MechanismDef { sources: ids[..i].to_vec(), targets: ids[i..i + o].to_vec(), fn_ref: fns[&(i, o)], grouping_keys: vec![] };
            lib(g.add_mechanism(def))?;
        }
        for step in 0..50 {
            if rng.random_bool(0.2) {
                let component = if rng.random_bool(0.5) { ComponentType::Node } else { ComponentType::Hyperedge };
                let len = if component == ComponentType::Node { g.properties().len() } else { g.mechanisms().len() };
                let mask = (0..len).map(|_| rng.random_bool(0.7)).collect();
                lib(apply_operation(&mut g, &mut sched, &OperationVector::Eliminate { component, mask }))?;
            } else {
                let c = if rng.random_bool(0.5) {
                    ComponentRef::Node(PropertyId(rng.random_range(0..g.properties().len())))
                } else {
                    ComponentRef::Edge(MechanismId(rng.random_range(0..g.mechanisms().len())))
                };
                lib(g.set_activation(c, rng.random_bool(0.5)))?;
            }
            toggles += 1;
            ensure(closure_holds(&g), || format!("graph {case} step {step}: active mechanism with an inactive source"))?;
        }
    }

    let (mut cyclic, mut acyclic) = (0, 0);
    for case in 0..2000 {
        let n = rng.random_range(1..=12);
        let nodes: Vec<MechanismId> = (0..n).map(MechanismId).collect();
        let edges: Vec<(usize, usize)> =
            (0..rng.random_range(0..=n * 2)).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let as_ids: Vec<(MechanismId, MechanismId)> = edges.iter().map(|(a, b)| (MechanismId(*a), MechanismId(*b))).collect();
        let dag = lib(ScheduleDag::from_edges(&nodes, &as_ids))?;
        let edge_set: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
        match build_plan(&dag) {
            Ok(plan) => {
                ensure(!has_cycle(n, &edges), || format!("case {case}: cycle missed"))?;
                let pos: BTreeMap<MechanismId, usize> = plan.steps.iter().enumerate().map(|(i, m)| (*m, i)).collect();
                ensure(plan.steps.len() == n && edges.iter().all(|(a, b)| pos[&MechanismId(*a)] < pos[&MechanismId(*b)]), || {
                    format!("case {case}: plan breaks an ordering constraint")
                })?;
                acyclic += 1;
            }
            Err(Error::Cycle(c)) => {
                ensure(has_cycle(n, &edges), || format!("case {case}: cycle reported on a DAG"))?;
                let forward = (0..c.len()).all(|i| edge_set.contains(&(c[i], c[(i + 1) % c.len()])));
                let backward = (0..c.len()).all(|i| edge_set.contains(&(c[(i + 1) % c.len()], c[i])));
                ensure(!c.is_empty() && (forward || backward), || format!("case {case}: reported cycle {c:?} is not a cycle"))?;
                cyclic += 1;
            }
            Err(e) => return Err(format!("case {case}: {e}")),
        }
    }
    Ok(format!("100000 ops round-trip, closure kept over {toggles} toggles, {cyclic}/{} schedules cyclic", cyclic + acyclic))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs a command twice into fresh directories and compares every byte.
fn twice(root: &Path, name: &str, args: &[&str]) -> Result<PathBuf, String> {
    let (a, b) = (root.join(format!("{name}_a")), root.join(format!("{name}_b")));
    for dir in [&a, &b] {
        let out = Command::new(env!("CARGO_BIN_EXE_hyperabm"))
            .args(args)
            .args(["--out", dir.to_str().unwrap()])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("{name}: {}", String::from_utf8_lossy(&out.stderr)))?;
    }
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    ensure(!sa.is_empty() && sa == sb, || format!("{name}: outputs differ between runs"))?;
    Ok(a)
}

fn cli_checks(root: &Path) -> Check {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let built = twice(root, "build", &["build-scenario", "--seed", "5"])?;
    let (scenario, factors) = (s(&built.join("scenario.json")), s(&built.join("factors.csv")));
    let sim = twice(root, "simulate", &["simulate", "--scenario", &scenario, "--factors", &factors, "--seed", "5"])?;
    let prices = s(&sim.join("prices.csv"));
    twice(
        root,
        "calibrate",
        &["calibrate", "--scenario", &scenario, "--factors", &factors, "--reference", &prices, "--seed", "5", "--budget", "5"],
    )?;
    let evo = twice(root, "evolve", &["evolve-mechanism", "--seed", "5"])?;
    let solution = s(&evo.join("solution.txt"));
    twice(root, "evaluate", &["evaluate-solution", "--solution", &solution, "--seed", "5"])?;
    twice(root, "train", &["train-hybrid", "--seed", "3"])?;
    let files: usize = ["build", "simulate", "calibrate", "evolve", "evaluate", "train"]
        .iter()
        .map(|n| snapshot(&root.join(format!("{n}_a"))).len())
        .sum();
    let _ = File::open(root.join("train_a/report.json")).map_err(|e| e.to_string())?;
    Ok(format!("6 commands, {files} output files byte-identical across runs"))
}

fn criterion_10(root: &Path) -> Check {
    let a = protocol_checks()?;
    let b = cli_checks(root)?;
    Ok(format!("{a}; {b}"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path().to_path_buf();
    let train_report = root.join("train_a/report.json");
    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Check>)> = vec![
        ("matching engine equals a naive matcher", Duration::from_secs(60), Box::new(criterion_1)),
        ("call auction maximizes volume and sets the open", Duration::from_secs(10), Box::new(criterion_2)),
        ("positions, postings and inventory are conserved", Duration::from_secs(30), Box::new(criterion_3)),
        ("metrics match direct definitions", Duration::from_secs(5), Box::new(criterion_4)),
        ("CGP elitism and threshold recovery", Duration::from_secs(120), Box::new(criterion_5)),
        ("gate identities", Duration::from_secs(5), Box::new(criterion_6)),
        ("surrogate gradient check", Duration::from_secs(30), Box::new(criterion_7)),
        // needs the training report written by the reproducibility run
        ("protocol, cascade, cycles and CLI reproducibility", Duration::from_secs(60), Box::new(move || criterion_10(&root))),
        ("hybrid policy beats the expert; N=1 reduction", Duration::from_secs(600), Box::new(move || criterion_8(&train_report))),
        ("interventionist stabilizes the shock", Duration::from_secs(60), Box::new(criterion_9)),
    ];
    let numbers = [1, 2, 3, 4, 5, 6, 7, 10, 8, 9];
    let mut results = BTreeMap::new();
    for ((name, limit, check), n) in criteria.into_iter().zip(numbers) {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let line = match &outcome {
            Ok(detail) if took <= limit => format!("PASS {n:>2} {name}: {detail} [{:.1}s]", took.as_secs_f64()),
            Ok(detail) => format!("FAIL {n:>2} {name}: {detail} but took {:.1}s > {}s", took.as_secs_f64(), limit.as_secs()),
            Err(why) => format!("FAIL {n:>2} {name}: {why} [{:.1}s]", took.as_secs_f64()),
        };
        results.insert(n, line);
    }
    let mut failed = 0;
    for line in results.values() {
        println!("{line}");
        failed += usize::from(line.starts_with("FAIL"));
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
