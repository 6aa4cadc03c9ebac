//! Clairvoyant benchmark, dynamic regret ledger and measured variation.

use crate::error::{Error, Result};
use crate::market::{golden_max, kolmogorov_distance, Cdf, MarketParams, StepCdf};

/// Slack allowed when the benchmark falls below the realized profit.
pub const BENCHMARK_SLACK: f64 = 1e-9;

const COARSE_GRID: usize = 512;

/// Which prices the clairvoyant may choose from.
#[derive(Debug, Clone, PartialEq)]
pub enum Benchmark {
    /// `sup` over `w ∈ [c, s]`.
    Continuous,
    /// `max` over a finite admissible price set.
    Finite(Vec<f64>),
}

/// Per-round clairvoyant profit `sup_w (w − c)·q(w; F)` and the (possibly
/// unattained) maximising price.
pub fn clairvoyant_profit(f: &Cdf, mp: &MarketParams) -> (f64, f64) {
    let upper = f.upper_bound().unwrap_or(mp.xi_bar).max(mp.xi_bar);
    match f.to_step(upper) {
        Some(step) => discrete_clairvoyant(&step, mp),
        None => continuous_clairvoyant(f, mp),
    }
}

pub fn benchmark_profit(benchmark: &Benchmark, f: &Cdf, mp: &MarketParams) -> (f64, f64) {
    match benchmark {
        Benchmark::Continuous => clairvoyant_profit(f, mp),
        Benchmark::Finite(prices) => finite_clairvoyant(f, prices, mp),
    }
}

/// Breakpoint enumeration: on `[s(1 − F(y_{m+1})), s(1 − F(y_m)))` the order is
/// `y_{m+1}`, so the supremum on that piece is `(s(1 − F(y_m)) − c)·y_{m+1}`,
/// with `F(y_0) = 0` standing for `F` just below the first atom.
fn discrete_clairvoyant(f: &StepCdf, mp: &MarketParams) -> (f64, f64) {
    // w = c always earns zero
    let mut best = (0.0, mp.c);
    let mut prev_cum = 0.0;
    for (&y, &cum) in f.support().iter().zip(f.cum()) {
        let w = mp.s * (1.0 - prev_cum);
        let value = (w - mp.c) * y;
        if value > best.0 {
            best = (value, w);
        }
        prev_cum = cum;
    }
    best
}

fn continuous_clairvoyant(f: &Cdf, mp: &MarketParams) -> (f64, f64) {
    let profit = |w: f64| (w - mp.c) * f.quantile(1.0 - w / mp.s);
    let mut best = (0.0, mp.c);
    let h = (mp.s - mp.c) / COARSE_GRID as f64;
    let values: Vec<f64> = (0..=COARSE_GRID).map(|i| profit(mp.c + i as f64 * h)).collect();
    for (i, &v) in values.iter().enumerate() {
        if v > best.0 {
            best = (v, mp.c + i as f64 * h);
        }
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let tol = 1e-12 * mp.s;
    for &i in order.iter().take(3) {
        let lo = mp.c + (i as f64 - 1.0).max(0.0) * h;
        let hi = (mp.c + (i + 1) as f64 * h).min(mp.s);
        let (w, v) = golden_max(&profit, lo, hi, tol);
        if v > best.0 {
            best = (v, w);
        }
    }
    // the cap kink: at w = s(1 − F(q̄⁻)) the uncapped quantile meets the cap
    if let Cdf::Parametric(p) = f {
        if let Some(cap) = p.cap() {
            let w = mp.s * (1.0 - f.left_limit(cap));
            if w >= mp.c && w <= mp.s {
                let v = profit(w);
                if v > best.0 {
                    best = (v, w);
                }
            }
        }
    }
    best
}

fn finite_clairvoyant(f: &Cdf, prices: &[f64], mp: &MarketParams) -> (f64, f64) {
    let profit = |w: f64| ((w - mp.c) * f.quantile(1.0 - w / mp.s), w);
    let pick = |best: (f64, f64), cur: (f64, f64)| if cur.0 > best.0 { cur } else { best };
    match f.as_step() {
        // the order is non-increasing in w, so for each atom only the largest
        // price still ordering at least that atom can be optimal
        Some(step) if prices.is_sorted() && step.len() < prices.len() => step
            .support()
            .iter()
            .filter_map(|&y| {
                let k = prices.partition_point(|&w| f.quantile(1.0 - w / mp.s) >= y);
                k.checked_sub(1).map(|i| profit(prices[i]))
            })
            .chain(prices.last().map(|&w| profit(w)))
            .fold((f64::NEG_INFINITY, mp.c), pick),
        _ => prices.iter().map(|&w| profit(w)).fold((f64::NEG_INFINITY, mp.c), pick),
    }
}

/// Per-round benchmark and realized profit with running regret.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLedger {
    pub benchmark: Vec<f64>,
    pub realized: Vec<f64>,
    pub instantaneous: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl RegretLedger {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            benchmark: Vec::with_capacity(n),
            realized: Vec::with_capacity(n),
            instantaneous: Vec::with_capacity(n),
            cumulative: Vec::with_capacity(n),
            epochs: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Appends one round; the benchmark must dominate the realized profit.
    pub fn update(&mut self, benchmark: f64, realized: f64, epoch: usize) -> Result<f64> {
        let t = self.len() + 1;
        if benchmark < realized - BENCHMARK_SLACK {
            return Err(Error::BenchmarkViolation {
                t,
                benchmark,
                realized,
            });
        }
        let inst = benchmark - realized;
        let cum = self.total() + inst;
        self.benchmark.push(benchmark);
        self.realized.push(realized);
        self.instantaneous.push(inst);
        self.cumulative.push(cum);
        self.epochs.push(epoch);
        Ok(inst)
    }
}

pub fn regret_update(ledger: &mut RegretLedger, benchmark: f64, realized: f64) -> Result<f64> {
    let epoch = ledger.epochs.last().copied().unwrap_or(1);
    ledger.update(benchmark, realized, epoch)
}

/// Consecutive Kolmogorov distances `d_K(F̂_t, F̂_{t+1})` with prefix sums and
/// per-epoch partial sums.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariationTrace {
    /// `steps[j]` is `d_K(F̂_{j+1}, F̂_{j+2})` (0-based storage of 1-based rounds).
    pub steps: Vec<f64>,
    prefix: Vec<f64>,
    /// `(epoch id, partial sum)` in order of first appearance.
    pub epoch_sums: Vec<(usize, f64)>,
}

impl VariationTrace {
    pub fn new() -> Self {
        Self {
            steps: Vec::new(),
            prefix: vec![0.0],
            epoch_sums: Vec::new(),
        }
    }

    pub fn push(&mut self, distance: f64, epoch: usize) {
        debug_assert!(distance >= 0.0);
        self.steps.push(distance);
        let total = self.total() + distance;
        self.prefix.push(total);
        match self.epoch_sums.last_mut() {
            Some((e, sum)) if *e == epoch => *sum += distance,
            _ => self.epoch_sums.push((epoch, distance)),
        }
    }

    pub fn total(&self) -> f64 {
        *self.prefix.last().unwrap_or(&0.0)
    }

    /// Running total after each step.
    pub fn running(&self) -> &[f64] {
        &self.prefix[1..]
    }

    /// `Σ_{j=from}^{to} d_K(F̂_j, F̂_{j+1})` for 1-based rounds; empty ranges give 0.
    pub fn window_sum(&self, from: usize, to: usize) -> f64 {
        if from == 0 || to < from {
            return 0.0;
        }
        let to = to.min(self.steps.len());
        if to < from {
            return 0.0;
        }
        self.prefix[to] - self.prefix[from - 1]
    }
}

pub fn variation_update(trace: &mut VariationTrace, prev: &Cdf, next: &Cdf, mp: &MarketParams, epoch: usize) -> f64 {
    let d = kolmogorov_distance(prev, next, mp);
    trace.push(d, epoch);
    d
}
