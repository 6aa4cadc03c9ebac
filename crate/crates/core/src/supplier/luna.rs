//! Epoch-based pricing that infers distribution shifts from order feedback
//! alone, with its discretized and finite-price variants.

use rand::{Rng, RngCore};

use super::{Phase, PolicyStatus, PriceDecision, PricingPolicy, Probe, RestartEvent};
use crate::error::{Error, Result};
use crate::market::MarketParams;

pub fn luna_exploration_price(k: usize, big_k: usize, mp: &MarketParams) -> f64 {
    (k - 1) as f64 * (mp.s - mp.c) / big_k as f64 + mp.c
}

pub fn luna_delta(t: usize, tau: usize, m: usize) -> f64 {
    (m as f64 / (t - tau) as f64).sqrt()
}

/// `K* = ⌈T^{1/3} V^{−1/3} ξ̄^{−1/3}⌉`; pass `V = 1` for the variation-free choice.
pub fn optimal_k(t_horizon: usize, v: f64, xi_bar: f64) -> usize {
    ((t_horizon as f64).cbrt() / v.cbrt() / xi_bar.cbrt()).ceil().max(1.0) as usize
}

/// `N* = ⌈ξ̄^{−1/4} V^{−1/4} T^{1/4}⌉`; pass `V = 1` when the budget is unknown.
pub fn optimal_n(t_horizon: usize, v: f64, xi_bar: f64) -> usize {
    ((t_horizon as f64).powf(0.25) / v.powf(0.25) / xi_bar.powf(0.25)).ceil().max(1.0) as usize
}

/// Smallest element of `grid` at or above `x` (the top element if none).
pub fn ceil_project(x: f64, grid: &[f64]) -> f64 {
    let i = grid.partition_point(|&g| g < x);
    grid[i.min(grid.len() - 1)]
}

/// Largest element of `grid` at or below `x` (the bottom element if none).
pub fn floor_project(x: f64, grid: &[f64]) -> f64 {
    let i = grid.partition_point(|&g| g <= x);
    grid[i.saturating_sub(1)]
}

#[derive(Debug, Clone, PartialEq)]
enum Mode {
    /// Exploration grid `w̄_k = (k−1)(s−c)/K + c`.
    Continuous { k: usize },
    /// Exploration over every price of a finite admissible set.
    Finite,
}

/// What the exploration phase of the current epoch found.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochState {
    pub epoch: usize,
    /// Last period of the previous epoch.
    pub tau: usize,
    pub phase: Phase,
    pub profits: Vec<f64>,
    pub orders: Vec<f64>,
    pub k_star: usize,
    pub y_star: f64,
    pub phi_star: f64,
    /// The surrogate test is off after an exploration without positive profit.
    pub degenerate: bool,
}

/// Shared machinery of the LUNA family.
#[derive(Debug, Clone)]
pub struct LunaCore {
    mp: MarketParams,
    support: Vec<f64>,
    /// `(1-based index, y_m)` for every `y_m > 0`.
    probes: Vec<(usize, f64)>,
    prices: Vec<f64>,
    mode: Mode,
    state: EpochState,
    last: Option<PriceDecision>,
    restarts: Vec<RestartEvent>,
}

impl LunaCore {
    fn build(mp: &MarketParams, support: Vec<f64>, prices: Vec<f64>, mode: Mode, tau: usize) -> Result<Self> {
        let probes: Vec<(usize, f64)> = support
            .iter()
            .enumerate()
            .filter(|(_, y)| **y > 0.0)
            .map(|(i, y)| (i + 1, *y))
            .collect();
        if probes.is_empty() {
            return Err(Error::InvalidParameter("support needs a positive point to probe".into()));
        }
        if prices.is_empty() {
            return Err(Error::InvalidParameter("exploration needs at least one price".into()));
        }
        let n = prices.len();
        Ok(Self {
            mp: mp.clone(),
            support,
            probes,
            prices,
            mode,
            state: EpochState {
                epoch: 1,
                tau,
                phase: Phase::Exploration,
                profits: Vec::with_capacity(n),
                orders: Vec::with_capacity(n),
                k_star: 0,
                y_star: 0.0,
                phi_star: 0.0,
                degenerate: false,
            },
            last: None,
            restarts: Vec::new(),
        })
    }

    /// LUNA on support `Y_M` with `K` exploration prices; the epoch clock starts after `tau`.
    pub fn continuous(mp: &MarketParams, support: Vec<f64>, k: usize, tau: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("exploration grid size K must be at least 1".into()));
        }
        let prices = (1..=k).map(|i| luna_exploration_price(i, k, mp)).collect();
        Self::build(mp, support, prices, Mode::Continuous { k }, tau)
    }

    /// LUNA restricted to the sorted price set `w`.
    pub fn finite(mp: &MarketParams, support: Vec<f64>, w: Vec<f64>, tau: usize) -> Result<Self> {
        if w.windows(2).any(|p| p[0] >= p[1]) || w.iter().any(|&x| !(0.0..=mp.s).contains(&x)) {
            return Err(Error::InvalidParameter("price set must be strictly increasing within [0, s]".into()));
        }
        Self::build(mp, support, w, Mode::Finite, tau)
    }

    pub fn state(&self) -> &EpochState {
        &self.state
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn exploration_prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn restarts(&self) -> &[RestartEvent] {
        &self.restarts
    }

    fn big_m(&self) -> usize {
        self.support.len()
    }

    /// Probe prices `w_m` for every probe-able `m`, and the surrogate `w₀`.
    pub fn exploit_prices(&self, delta: f64) -> (f64, Vec<(usize, f64)>) {
        let st = &self.state;
        let mp = &self.mp;
        let w_star = self.prices[st.k_star];
        match self.mode {
            Mode::Continuous { k } => {
                let probes = self
                    .probes
                    .iter()
                    .map(|&(m, y)| {
                        let w = (st.phi_star + delta + y * mp.s / k as f64) / y + mp.c;
                        (m, w.clamp(0.0, mp.s))
                    })
                    .collect();
                let w0 = if st.degenerate {
                    w_star
                } else {
                    (w_star - delta / st.y_star).max(0.0)
                };
                (w0, probes)
            }
            Mode::Finite => {
                let gap = self.prices.get(st.k_star + 1).map_or(0.0, |next| next - w_star);
                let probes = self
                    .probes
                    .iter()
                    .map(|&(m, y)| {
                        let w = (st.phi_star + gap * st.y_star + delta) / y + mp.c;
                        (m, ceil_project(w.min(mp.s), &self.prices))
                    })
                    .collect();
                let w0 = if st.degenerate {
                    w_star
                } else {
                    floor_project((w_star - delta / st.y_star).max(0.0), &self.prices)
                };
                (w0, probes)
            }
        }
    }

    pub fn price(&mut self, t: usize, rng: &mut dyn RngCore) -> PriceDecision {
        let st = &self.state;
        let decision = match st.phase {
            Phase::Exploration => {
                let k = st.profits.len();
                PriceDecision {
                    w: self.prices[k],
                    probe: Probe::Explore(k + 1),
                }
            }
            _ => {
                let delta = luna_delta(t, st.tau, self.big_m());
                let (w0, probes) = self.exploit_prices(delta);
                if rng.random::<f64>() < delta.min(1.0) {
                    let (m, w) = probes[rng.random_range(0..probes.len())];
                    PriceDecision { w, probe: Probe::Luna(m) }
                } else {
                    PriceDecision {
                        w: w0,
                        probe: Probe::Luna(0),
                    }
                }
            }
        };
        self.last = Some(decision);
        decision
    }

    pub fn feedback(&mut self, t: usize, w: f64, q: f64) -> Result<()> {
        let decision = self
            .last
            .take()
            .ok_or_else(|| Error::Accounting(format!("feedback at round {t} without a posted price")))?;
        if decision.w != w {
            return Err(Error::Accounting(format!("round {t}: feedback price {w} differs from posted {}", decision.w)));
        }
        match decision.probe {
            Probe::Explore(_) => {
                let st = &mut self.state;
                st.profits.push((w - self.mp.c) * q);
                st.orders.push(q);
                if st.profits.len() == self.prices.len() {
                    // first maximiser
                    let mut k_star = 0;
                    for (k, &p) in st.profits.iter().enumerate() {
                        if p > st.profits[k_star] {
                            k_star = k;
                        }
                    }
                    st.k_star = k_star;
                    st.y_star = st.orders[k_star];
                    st.phi_star = st.profits[k_star];
                    st.degenerate = st.phi_star <= 0.0 || st.y_star <= 0.0;
                    st.phase = Phase::Exploitation;
                }
            }
            Probe::Luna(m) => {
                let restart = if m >= 1 {
                    q >= self.support[m - 1]
                } else {
                    !self.state.degenerate && q < self.state.y_star
                };
                if restart {
                    let delta = luna_delta(t, self.state.tau, self.big_m());
                    self.restarts.push(RestartEvent {
                        t,
                        tau: self.state.tau,
                        delta,
                        probe: m,
                        epoch: self.state.epoch,
                    });
                    let st = &mut self.state;
                    st.epoch += 1;
                    st.tau = t;
                    st.phase = Phase::Exploration;
                    st.profits.clear();
                    st.orders.clear();
                }
            }
            Probe::None | Probe::Arm(_) => unreachable!("LUNA never posts these"),
        }
        Ok(())
    }

    fn status(&self) -> PolicyStatus {
        PolicyStatus {
            epoch: self.state.epoch,
            phase: self.state.phase,
        }
    }
}

/// LUNA with a `K`-point exploration grid on a known discrete support.
#[derive(Debug, Clone)]
pub struct Luna {
    core: LunaCore,
}

impl Luna {
    pub fn new(mp: &MarketParams, k: usize) -> Result<Self> {
        let support = mp
            .support
            .clone()
            .ok_or_else(|| Error::InvalidParameter("this policy needs a discrete support".into()))?;
        Ok(Self {
            core: LunaCore::continuous(mp, support, k, 0)?,
        })
    }

    pub fn core(&self) -> &LunaCore {
        &self.core
    }
}

impl PricingPolicy for Luna {
    fn name(&self) -> String {
        "luna".into()
    }

    fn price(&mut self, t: usize, rng: &mut dyn RngCore) -> Result<PriceDecision> {
        Ok(self.core.price(t, rng))
    }

    fn feedback(&mut self, t: usize, w: f64, q: f64) -> Result<()> {
        self.core.feedback(t, w, q)
    }

    fn status(&self) -> PolicyStatus {
        self.core.status()
    }

    fn restarts(&self) -> &[RestartEvent] {
        self.core.restarts()
    }
}

/// LUNA restricted to a finite price set `W`.
#[derive(Debug, Clone)]
pub struct Lunaf {
    core: LunaCore,
}

impl Lunaf {
    pub fn new(mp: &MarketParams, w: Vec<f64>) -> Result<Self> {
        let support = mp
            .support
            .clone()
            .ok_or_else(|| Error::InvalidParameter("this policy needs a discrete support".into()))?;
        Ok(Self {
            core: LunaCore::finite(mp, support, w, 0)?,
        })
    }
}

impl PricingPolicy for Lunaf {
    fn name(&self) -> String {
        "lunaf".into()
    }

    fn price(&mut self, t: usize, rng: &mut dyn RngCore) -> Result<PriceDecision> {
        Ok(self.core.price(t, rng))
    }

    fn feedback(&mut self, t: usize, w: f64, q: f64) -> Result<()> {
        self.core.feedback(t, w, q)
    }

    fn status(&self) -> PolicyStatus {
        self.core.status()
    }

    fn restarts(&self) -> &[RestartEvent] {
        self.core.restarts()
    }
}

/// `Z_N = {(n−1)ξ̄/(N−1)}`; a single point `{ξ̄}` when `N = 1`.
pub fn lunac_grid(n: usize, xi_bar: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![xi_bar];
    }
    (0..n).map(|i| i as f64 * xi_bar / (n - 1) as f64).collect()
}

/// The grid point `z_n` with `q ∈ (z_{n−1}, z_n]`, and `0` for `q = 0`.
pub fn lunac_feedback_map(q: f64, grid: &[f64]) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    ceil_project(q, grid)
}

/// LUNA run on the grid `Z_N`, with orders rounded up to the grid.
#[derive(Debug, Clone)]
pub struct Lunac {
    core: LunaCore,
    grid: Vec<f64>,
}

impl Lunac {
    pub fn new(mp: &MarketParams, n: usize, k: usize) -> Result<Self> {
        Self::starting_after(mp, n, k, 0)
    }

    fn starting_after(mp: &MarketParams, n: usize, k: usize, tau: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("approximation size N must be at least 1".into()));
        }
        let grid = lunac_grid(n, mp.xi_bar);
        Ok(Self {
            core: LunaCore::continuous(mp, grid.clone(), k, tau)?,
            grid,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
}

impl PricingPolicy for Lunac {
    fn name(&self) -> String {
        "lunac".into()
    }

    fn price(&mut self, t: usize, rng: &mut dyn RngCore) -> Result<PriceDecision> {
        Ok(self.core.price(t, rng))
    }

    fn feedback(&mut self, t: usize, w: f64, q: f64) -> Result<()> {
        self.core.feedback(t, w, lunac_feedback_map(q, &self.grid))
    }

    fn status(&self) -> PolicyStatus {
        self.core.status()
    }

    fn restarts(&self) -> &[RestartEvent] {
        self.core.restarts()
    }

    fn feedback_grid(&self) -> Option<&[f64]> {
        Some(&self.grid)
    }
}

/// Exponential-weights meta learner over a small arm set (no weight sharing).
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3State {
    pub weights: Vec<f64>,
    pub gamma: f64,
}

impl Exp3State {
    pub fn new(arms: usize, gamma: f64) -> Self {
        Self {
            weights: vec![1.0; arms],
            gamma,
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        let k = self.weights.len() as f64;
        self.weights
            .iter()
            .map(|w| (1.0 - self.gamma) * w / total + self.gamma / k)
            .collect()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> (usize, f64) {
        let probs = self.probabilities();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return (j, p);
            }
        }
        let last = probs.len() - 1;
        (last, probs[last])
    }

    /// Multiplies the chosen weight by `exp(γ/(K·p) · reward)` and rescales.
    pub fn update(&mut self, arm: usize, prob: f64, reward: f64) {
        let k = self.weights.len() as f64;
        self.weights[arm] *= (self.gamma / (k * prob) * reward).exp();
        let max = self.weights.iter().copied().fold(0.0, f64::max);
        self.weights.iter_mut().for_each(|w| *w /= max);
    }
}

/// Meta parameters: block length `H`, `z = ⌈ln H⌉` and the arm set `J`.
#[derive(Debug, Clone, PartialEq)]
pub struct BobSetup {
    pub h: usize,
    pub z: usize,
    pub sizes: Vec<usize>,
    pub gamma: f64,
}

pub fn bob_setup(t_horizon: usize, xi_bar: f64) -> BobSetup {
    let h = ((t_horizon as f64).powf(0.25) / xi_bar.powf(0.25)).floor().max(1.0) as usize;
    let z = (h as f64).ln().ceil().max(1.0) as usize;
    let sizes = (0..=z)
        .map(|j| (h as f64).powf(j as f64 / z as f64).floor() as usize)
        .map(|n| n.max(1))
        .collect();
    let gamma = bob_gamma(z, t_horizon.div_ceil(h));
    BobSetup { h, z, sizes, gamma }
}

/// `γ = min{1, √((z+1) ln(z+1) / ((e−1)·blocks))}`.
pub fn bob_gamma(z: usize, blocks: usize) -> f64 {
    let zp1 = (z + 1) as f64;
    (zp1 * zp1.ln() / ((std::f64::consts::E - 1.0) * blocks as f64)).sqrt().min(1.0)
}

/// Bandit-over-bandit choice of the approximation size, one LUNAC run per block.
#[derive(Debug, Clone)]
pub struct LunacN {
    mp: MarketParams,
    k: usize,
    setup: BobSetup,
    meta: Exp3State,
    inner: Option<Lunac>,
    block_start: usize,
    arm: (usize, f64),
    block_profit: f64,
    epochs_before: usize,
    restarts: Vec<RestartEvent>,
    /// `N_i` chosen for each block.
    pub chosen: Vec<usize>,
}

impl LunacN {
    pub fn new(mp: &MarketParams, t_horizon: usize, k: usize) -> Self {
        let setup = bob_setup(t_horizon, mp.xi_bar);
        let meta = Exp3State::new(setup.sizes.len(), setup.gamma);
        Self {
            mp: mp.clone(),
            k,
            setup,
            meta,
            inner: None,
            block_start: 1,
            arm: (0, 1.0),
            block_profit: 0.0,
            epochs_before: 0,
            restarts: Vec::new(),
            chosen: Vec::new(),
        }
    }

    pub fn setup(&self) -> &BobSetup {
        &self.setup
    }

    pub fn meta(&self) -> &Exp3State {
        &self.meta
    }

    fn close_block(&mut self, len: usize) -> Result<()> {
        let bound = len as f64 * (self.mp.s - self.mp.c).max(self.mp.c) * self.mp.xi_bar;
        if self.block_profit.abs() > bound * (1.0 + 1e-12) {
            return Err(Error::Accounting(format!(
                "block profit {} outside ±{bound}",
                self.block_profit
            )));
        }
        let scale = len as f64 * (self.mp.s - self.mp.c) * self.mp.xi_bar;
        let reward = (0.5 + 0.5 * self.block_profit / scale).clamp(0.0, 1.0);
        self.meta.update(self.arm.0, self.arm.1, reward);
        if let Some(inner) = &self.inner {
            self.epochs_before += inner.status().epoch;
            self.restarts.extend_from_slice(inner.restarts());
        }
        self.inner = None;
        self.block_profit = 0.0;
        Ok(())
    }
}

impl PricingPolicy for LunacN {
    fn name(&self) -> String {
        "lunac-n".into()
    }

    fn price(&mut self, t: usize, rng: &mut dyn RngCore) -> Result<PriceDecision> {
        if self.inner.is_none() {
            self.block_start = t;
            self.arm = self.meta.sample(rng);
            let n = self.setup.sizes[self.arm.0];
            self.chosen.push(n);
            self.inner = Some(Lunac::starting_after(&self.mp, n, self.k, t - 1)?);
        }
        self.inner.as_mut().expect("block is open").price(t, rng)
    }

    fn feedback(&mut self, t: usize, w: f64, q: f64) -> Result<()> {
        let inner = self
            .inner
            .as_mut()
            .ok_or_else(|| Error::Accounting(format!("feedback at round {t} outside a block")))?;
        inner.feedback(t, w, q)?;
        self.block_profit += (w - self.mp.c) * q;
        let len = t + 1 - self.block_start;
        if len == self.setup.h {
            self.close_block(len)?;
        }
        Ok(())
    }

    fn status(&self) -> PolicyStatus {
        match &self.inner {
            Some(inner) => {
                let s = inner.status();
                PolicyStatus {
                    epoch: self.epochs_before + s.epoch,
                    phase: s.phase,
                }
            }
            None => PolicyStatus {
                epoch: self.epochs_before.max(1),
                phase: Phase::Exploration,
            },
        }
    }

    fn restarts(&self) -> &[RestartEvent] {
        &self.restarts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exploration_grid() {
        let mp = MarketParams::new(1.0, 0.0, 1.0, None).unwrap();
        let g: Vec<f64> = (1..=4).map(|k| luna_exploration_price(k, 4, &mp)).collect();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75]);
        assert_eq!(luna_exploration_price(1, 1, &mp), 0.0);
        let mp = MarketParams::new(2.0, 0.4, 1.0, None).unwrap();
        let g: Vec<f64> = (1..=4).map(|k| luna_exploration_price(k, 4, &mp)).collect();
        for (a, b) in g.iter().zip([0.4, 0.8, 1.2, 1.6]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_values() {
        assert_eq!(luna_delta(8, 0, 2), 0.5);
        assert_eq!(luna_delta(12, 10, 2), 1.0);
        assert_eq!(luna_delta(4, 0, 4), 1.0);
    }

    fn exploited(profits: &[f64], orders: &[f64]) -> LunaCore {
        let mp = MarketParams::new(1.0, 0.0, 1.0, Some(vec![0.5, 1.0])).unwrap();
        let mut core = LunaCore::continuous(&mp, vec![0.5, 1.0], 4, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (t, (&p, &q)) in profits.iter().zip(orders).enumerate() {
            let d = core.price(t + 1, &mut rng);
            assert!(((d.w - 0.0) * q - p).abs() < 1e-15);
            core.feedback(t + 1, d.w, q).unwrap();
        }
        core
    }

    #[test]
    fn exploit_prices_worked_example() {
        // exploration at {0, .25, .5, .75} finds φ = 0.5 at w̄ = 0.5 with order 1
        let core = exploited(&[0.0, 0.25, 0.5, 0.375], &[1.0, 1.0, 1.0, 0.5]);
        let st = core.state();
        assert_eq!((st.k_star, st.y_star, st.phi_star), (2, 1.0, 0.5));
        let (w0, probes) = core.exploit_prices(0.25);
        assert_eq!(probes, vec![(1, 1.0), (2, 1.0)]);
        assert_eq!(w0, 0.25);
        assert_eq!(core.exploit_prices(1.0).0, 0.0);
    }

    #[test]
    fn restart_rules() {
        let mut core = exploited(&[0.0, 0.25, 0.5, 0.375], &[1.0, 1.0, 1.0, 0.5]);
        // force each probe through the feedback path
        core.last = Some(PriceDecision {
            w: 1.0,
            probe: Probe::Luna(2),
        });
        core.feedback(5, 1.0, 1.0).unwrap();
        assert_eq!(core.state().epoch, 2);
        assert_eq!(core.restarts()[0].t, 5);

        let mut core = exploited(&[0.0, 0.25, 0.5, 0.375], &[1.0, 1.0, 1.0, 0.5]);
        core.last = Some(PriceDecision {
            w: 0.25,
            probe: Probe::Luna(0),
        });
        core.feedback(5, 0.25, 1.0).unwrap();
        assert_eq!(core.state().epoch, 1);
        core.last = Some(PriceDecision {
            w: 0.25,
            probe: Probe::Luna(0),
        });
        core.feedback(6, 0.25, 0.5).unwrap();
        assert_eq!(core.state().epoch, 2);
        assert_eq!(core.state().tau, 6);
        assert_eq!(core.state().phase, Phase::Exploration);
    }

    #[test]
    fn probe_distribution() {
        let mp = MarketParams::unit_bernoulli();
        let mut core = LunaCore::continuous(&mp, vec![0.0, 1.0], 2, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 1..=2 {
            let d = core.price(t, &mut rng);
            core.feedback(t, d.w, 1.0).unwrap();
        }
        // t − τ = 8 with M = 2: probe w.p. 1/2, always at the only positive point
        let n = 40_000;
        let mut probes = 0;
        for _ in 0..n {
            let d = core.price(8, &mut rng);
            core.last = None;
            match d.probe {
                Probe::Luna(0) => {}
                Probe::Luna(m) => {
                    assert_eq!(m, 2);
                    probes += 1;
                }
                _ => panic!(),
            }
        }
        let frac = probes as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
        // t − τ = 2: always probe
        assert!(matches!(core.price(2, &mut rng).probe, Probe::Luna(2)));
    }

    #[test]
    fn degenerate_exploration_keeps_price() {
        let mp = MarketParams::unit_bernoulli();
        let mut core = LunaCore::continuous(&mp, vec![0.0, 1.0], 2, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in 1..=2 {
            let d = core.price(t, &mut rng);
            core.feedback(t, d.w, 0.0).unwrap();
        }
        assert!(core.state().degenerate);
        assert_eq!(core.exploit_prices(0.3).0, 0.0);
        core.last = Some(PriceDecision {
            w: 0.0,
            probe: Probe::Luna(0),
        });
        core.feedback(3, 0.0, 0.0).unwrap();
        assert_eq!(core.state().epoch, 1);
    }

    #[test]
    fn projections() {
        let w = [0.2, 0.4, 0.6, 0.8];
        assert_eq!(ceil_project(0.55, &w), 0.6);
        assert_eq!(floor_project(0.55, &w), 0.4);
        assert_eq!((ceil_project(0.4, &w), floor_project(0.4, &w)), (0.4, 0.4));
        assert_eq!((ceil_project(0.9, &w), floor_project(0.1, &w)), (0.8, 0.2));
    }

    #[test]
    fn feedback_map() {
        let grid = lunac_grid(5, 1.0);
        assert_eq!(grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(lunac_feedback_map(0.3, &grid), 0.5);
        assert_eq!(lunac_feedback_map(0.25, &grid), 0.25);
        assert_eq!(lunac_feedback_map(0.0, &grid), 0.0);
        assert_eq!(lunac_grid(1, 2.0), vec![2.0]);
        assert_eq!(lunac_feedback_map(0.7, &[2.0]), 2.0);
    }

    #[test]
    fn size_choices() {
        assert_eq!(optimal_n(10_000, 1.0, 1.0), 10);
        assert_eq!(optimal_k(100_000, 1.0, 1.0), 47);
    }

    #[test]
    fn bob_initialisation() {
        let b = bob_setup(10_000, 1.0);
        assert_eq!((b.h, b.z, b.sizes.clone()), (10, 3, vec![1, 2, 4, 10]));
        // independent evaluation of √(4 ln 4 / ((e − 1)·blocks))
        let oracle = |blocks: f64| (4.0 * 4.0f64.ln() / ((1.0f64.exp() - 1.0) * blocks)).sqrt();
        assert!((bob_gamma(3, 100) - oracle(100.0)).abs() < 1e-12);
        assert!((bob_gamma(3, 100) - 0.17965).abs() < 1e-5);
        // ten-round blocks over 10⁴ rounds make 1000 blocks
        assert!((b.gamma - oracle(1000.0)).abs() < 1e-12);
        let e = Exp3State::new(2, 0.2);
        assert_eq!(e.probabilities(), vec![0.5, 0.5]);
    }

    #[test]
    fn meta_probabilities_stay_mixed() {
        let mut e = Exp3State::new(4, 0.17965);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (j, p) = e.sample(&mut rng);
            e.update(j, p, if j == 2 { 1.0 } else { 0.1 });
            let probs = e.probabilities();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(probs.iter().all(|&p| p >= 0.17965 / 4.0 - 1e-15));
        }
    }

    #[test]
    fn lunacn_blocks_and_accounting() {
        let mp = MarketParams::new(1.0, 0.0, 1.0, None).unwrap();
        let mut p = LunacN::new(&mp, 10_000, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for t in 1..=35 {
            let d = p.price(t, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&d.w));
            p.feedback(t, d.w, 0.6).unwrap();
        }
        assert_eq!(p.chosen.len(), 4);
        assert!(p.chosen.iter().all(|n| [1, 2, 4, 10].contains(n)));
        let mut p = LunacN::new(&mp, 10_000, 3);
        let d = p.price(1, &mut rng).unwrap();
        p.block_profit = 100.0;
        assert!(p.feedback(1, d.w, 0.5).is_ok());
        p.block_profit = 100.0;
        assert!(matches!(p.close_block(10), Err(Error::Accounting(_))));
    }
}
