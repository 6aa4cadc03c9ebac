//! Finite-price baselines and the stationary explore-then-commit policy.

use rand::{Rng, RngCore};

use super::{Phase, PolicyStatus, PriceDecision, PricingPolicy, Probe, RestartEvent};
use crate::error::{Error, Result};
use crate::market::MarketParams;

/// `d` equally spaced prices `{(j−1)s/(d−1)}` from `0` to `s`; `{s}` when `d = 1`.
pub fn equally_spaced_prices(d: usize, s: f64) -> Vec<f64> {
    if d <= 1 {
        return vec![s];
    }
    (0..d).map(|j| j as f64 * s / (d - 1) as f64).collect()
}

/// `{k·s/n : k = 1..n}` with `n = ⌈√T⌉`.
pub fn stat_grid(t_horizon: usize, s: f64) -> Vec<f64> {
    let n = (t_horizon as f64).sqrt().ceil() as usize;
    (1..=n).map(|k| k as f64 * s / n as f64).collect()
}

fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Plays each grid price once, then commits to the most profitable.
#[derive(Debug, Clone)]
pub struct StatPolicy {
    mp: MarketParams,
    grid: Vec<f64>,
    profits: Vec<f64>,
    best: Option<usize>,
}

impl StatPolicy {
    pub fn new(mp: &MarketParams, t_horizon: usize) -> Self {
        Self {
            mp: mp.clone(),
            grid: stat_grid(t_horizon, mp.s),
            profits: Vec::new(),
            best: None,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
}

impl PricingPolicy for StatPolicy {
    fn name(&self) -> String {
        "stat".into()
    }

    fn price(&mut self, _t: usize, _rng: &mut dyn RngCore) -> Result<PriceDecision> {
        let k = self.best.unwrap_or(self.profits.len());
        Ok(PriceDecision {
            w: self.grid[k],
            probe: Probe::Arm(k),
        })
    }

    fn feedback(&mut self, _t: usize, w: f64, q: f64) -> Result<()> {
        if self.best.is_none() {
            self.profits.push((w - self.mp.c) * q);
            if self.profits.len() == self.grid.len() {
                self.best = Some(first_argmax(&self.profits));
            }
        }
        Ok(())
    }

    fn status(&self) -> PolicyStatus {
        PolicyStatus {
            epoch: 1,
            phase: if self.best.is_some() {
                Phase::Exploitation
            } else {
                Phase::Exploration
            },
        }
    }
}

/// Exp3.S parameters `(α, γ)` for `K` arms, horizon `T` and `S` switches.
pub fn exp3s_parameters(arms: usize, t_horizon: usize, budget: f64) -> (f64, f64) {
    let k = arms as f64;
    let t = t_horizon as f64;
    let switches = budget.ceil().max(1.0);
    let e = std::f64::consts::E;
    let gamma = (k * (switches * (k * t).ln() + e) / ((e - 1.0) * t)).sqrt().min(1.0);
    (1.0 / t, gamma)
}

/// Exponential weights with uniform mixing and weight sharing over a finite price set.
#[derive(Debug, Clone)]
pub struct Exp3S {
    mp: MarketParams,
    prices: Vec<f64>,
    weights: Vec<f64>,
    alpha: f64,
    gamma: f64,
    pending: Option<(usize, f64)>,
}

impl Exp3S {
    pub fn new(mp: &MarketParams, prices: Vec<f64>, t_horizon: usize, budget: f64) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::InvalidParameter("price set is empty".into()));
        }
        let (alpha, gamma) = exp3s_parameters(prices.len(), t_horizon, budget);
        Ok(Self {
            mp: mp.clone(),
            weights: vec![1.0; prices.len()],
            prices,
            alpha,
            gamma,
            pending: None,
        })
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        let k = self.weights.len() as f64;
        self.weights
            .iter()
            .map(|w| (1.0 - self.gamma) * w / total + self.gamma / k)
            .collect()
    }

    pub fn parameters(&self) -> (f64, f64) {
        (self.alpha, self.gamma)
    }

    /// Profit scaled by `(s − c)ξ̄` and clipped to `[0, 1]`.
    pub fn reward(&self, w: f64, q: f64) -> f64 {
        ((w - self.mp.c) * q / self.mp.margin_range()).clamp(0.0, 1.0)
    }
}

impl PricingPolicy for Exp3S {
    fn name(&self) -> String {
        "exp3s".into()
    }

    fn price(&mut self, _t: usize, rng: &mut dyn RngCore) -> Result<PriceDecision> {
        let probs = self.probabilities();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut arm = probs.len() - 1;
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                arm = j;
                break;
            }
        }
        self.pending = Some((arm, probs[arm]));
        Ok(PriceDecision {
            w: self.prices[arm],
            probe: Probe::Arm(arm),
        })
    }

    fn feedback(&mut self, t: usize, w: f64, q: f64) -> Result<()> {
        let (arm, p) = self
            .pending
            .take()
            .ok_or_else(|| Error::Accounting(format!("feedback at round {t} without a posted price")))?;
        let k = self.weights.len() as f64;
        let x_hat = self.reward(w, q) / p;
        let total: f64 = self.weights.iter().sum();
        let share = std::f64::consts::E * self.alpha / k * total;
        for (j, wj) in self.weights.iter_mut().enumerate() {
            let gain = if j == arm { self.gamma * x_hat / k } else { 0.0 };
            *wj = *wj * gain.exp() + share;
        }
        let max = self.weights.iter().copied().fold(0.0, f64::max);
        self.weights.iter_mut().for_each(|w| *w /= max);
        Ok(())
    }

    fn status(&self) -> PolicyStatus {
        PolicyStatus {
            epoch: 1,
            phase: Phase::Adaptive,
        }
    }
}

/// Deterministic-feedback bandit with epochs: pull every arm once, exploit the
/// best, probe at rate `√(d/(t−τ))`, restart when a probe disagrees with its record.
#[derive(Debug, Clone)]
pub struct RestartBandit {
    mp: MarketParams,
    prices: Vec<f64>,
    recorded: Vec<f64>,
    best: usize,
    epoch: usize,
    tau: usize,
    pending: Option<(usize, bool)>,
    restarts: Vec<RestartEvent>,
}

impl RestartBandit {
    pub fn new(mp: &MarketParams, prices: Vec<f64>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::InvalidParameter("price set is empty".into()));
        }
        Ok(Self {
            mp: mp.clone(),
            recorded: Vec::with_capacity(prices.len()),
            prices,
            best: 0,
            epoch: 1,
            tau: 0,
            pending: None,
            restarts: Vec::new(),
        })
    }

    pub fn probe_probability(&self, t: usize) -> f64 {
        (self.prices.len() as f64 / (t - self.tau) as f64).sqrt().min(1.0)
    }

    fn exploring(&self) -> bool {
        self.recorded.len() < self.prices.len()
    }

    fn reward(&self, w: f64, q: f64) -> f64 {
        (w - self.mp.c) * q / self.mp.margin_range()
    }
}

impl PricingPolicy for RestartBandit {
    fn name(&self) -> String {
        "restart-bandit".into()
    }

    fn price(&mut self, t: usize, rng: &mut dyn RngCore) -> Result<PriceDecision> {
        let (arm, probe) = if self.exploring() {
            (self.recorded.len(), false)
        } else if rng.random::<f64>() < self.probe_probability(t) {
            (rng.random_range(0..self.prices.len()), true)
        } else {
            (self.best, false)
        };
        self.pending = Some((arm, probe));
        Ok(PriceDecision {
            w: self.prices[arm],
            probe: Probe::Arm(arm),
        })
    }

    fn feedback(&mut self, t: usize, w: f64, q: f64) -> Result<()> {
        let (arm, probe) = self
            .pending
            .take()
            .ok_or_else(|| Error::Accounting(format!("feedback at round {t} without a posted price")))?;
        let r = self.reward(w, q);
        if self.exploring() {
            self.recorded.push(r);
            if !self.exploring() {
                self.best = first_argmax(&self.recorded);
            }
        } else if probe {
            let threshold = self.probe_probability(t);
            if (r - self.recorded[arm]).abs() > threshold {
                self.restarts.push(RestartEvent {
                    t,
                    tau: self.tau,
                    delta: threshold,
                    probe: arm + 1,
                    epoch: self.epoch,
                });
                self.epoch += 1;
                self.tau = t;
                self.recorded.clear();
            }
        }
        Ok(())
    }

    fn status(&self) -> PolicyStatus {
        PolicyStatus {
            epoch: self.epoch,
            phase: if self.exploring() {
                Phase::Exploration
            } else {
                Phase::Exploitation
            },
        }
    }

    fn restarts(&self) -> &[RestartEvent] {
        &self.restarts
    }
}
