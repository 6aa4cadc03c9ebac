//! Retailer inventory policies. Each round a policy turns its history and the
//! posted price into a perceived distribution and the matching order.

mod dro;

pub use dro::{
    chi_square_1_quantile, consistent_projection, divergence, dro_epsilon, dro_worst_case, inner_worst_case,
    Divergence, DroDecision, InnerSolution,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::market::{best_response_order, Cdf, Family, MarketParams, ParametricCdf, StepCdf};

/// Grid size of the uniform first-round guess when no discrete support is known.
pub const FALLBACK_POINTS: usize = 64;

/// A perceived distribution together with the order it induces at the posted price.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceivedState {
    pub cdf: Cdf,
    pub order: f64,
}

/// One round of retailer history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub w: f64,
    pub q: f64,
    pub xi: f64,
}

pub trait RetailerPolicy: Send {
    fn name(&self) -> String;
    /// Perceived distribution and order for round `t` at price `w`.
    fn decide(&mut self, t: usize, w: f64) -> Result<PerceivedState>;
    /// Appends the round's outcome to the history.
    fn observe(&mut self, entry: HistoryEntry);
}

/// Uniform over the known support, else over `{jξ̄/64 : j = 1..64}`.
pub fn fallback_cdf(mp: &MarketParams) -> StepCdf {
    match &mp.support {
        Some(y) => StepCdf::uniform(y).expect("market support is validated"),
        None => {
            let pts: Vec<f64> = (1..=FALLBACK_POINTS)
                .map(|j| j as f64 * mp.xi_bar / FALLBACK_POINTS as f64)
                .collect();
            StepCdf::uniform(&pts).expect("grid is increasing")
        }
    }
}

fn respond(cdf: Cdf, w: f64, mp: &MarketParams) -> Result<PerceivedState> {
    let order = best_response_order(&cdf, w, mp)?;
    Ok(PerceivedState { cdf, order })
}

/// Demand samples kept sorted with multiplicities.
#[derive(Debug, Clone, Default)]
pub struct SampleBook {
    counts: BTreeMap<u64, usize>,
    samples: Vec<f64>,
    sum: f64,
}

impl SampleBook {
    pub fn push(&mut self, x: f64) {
        // non-negative floats order like their bit patterns
        let x = if x == 0.0 { 0.0 } else { x };
        *self.counts.entry(x.to_bits()).or_default() += 1;
        self.samples.push(x);
        self.sum += x;
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.len() as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Empirical CDF `(1/n) Σ 1{ξᵢ ≤ x}`.
    pub fn empirical(&self) -> Option<StepCdf> {
        if self.is_empty() {
            return None;
        }
        let n = self.len() as f64;
        let mut acc = 0usize;
        let (support, cum): (Vec<f64>, Vec<f64>) = self
            .counts
            .iter()
            .map(|(&bits, &k)| {
                acc += k;
                (f64::from_bits(bits), acc as f64 / n)
            })
            .unzip();
        Some(StepCdf::new(support, cum).expect("sorted counts form a CDF"))
    }
}

pub fn saa_perceive(samples: &[f64]) -> Option<StepCdf> {
    StepCdf::empirical(samples)
}

/// Sample-average approximation: best response to the empirical CDF.
#[derive(Debug, Clone)]
pub struct Saa {
    mp: MarketParams,
    book: SampleBook,
}

impl Saa {
    pub fn new(mp: MarketParams) -> Self {
        Self {
            mp,
            book: SampleBook::default(),
        }
    }
}

impl RetailerPolicy for Saa {
    fn name(&self) -> String {
        "saa".into()
    }

    fn decide(&mut self, _t: usize, w: f64) -> Result<PerceivedState> {
        let f = self.book.empirical().unwrap_or_else(|| fallback_cdf(&self.mp));
        respond(Cdf::Step(f), w, &self.mp)
    }

    fn observe(&mut self, entry: HistoryEntry) {
        self.book.push(entry.xi);
    }
}

/// Distributionally robust retailer over a φ-divergence ball with radius `ε_t`.
#[derive(Debug, Clone)]
pub struct Dro {
    mp: MarketParams,
    divergence: Divergence,
    alpha: f64,
    cap: Option<f64>,
    book: SampleBook,
    /// Rounds whose worst-case CDF needed the consistency projection.
    pub projections: usize,
    pub max_duality_gap: f64,
}

impl Dro {
    pub fn new(mp: MarketParams, divergence: Divergence, alpha: f64, cap: Option<f64>) -> Result<Self> {
        dro_epsilon(alpha, 2)?;
        Ok(Self {
            mp,
            divergence,
            alpha,
            cap,
            book: SampleBook::default(),
            projections: 0,
            max_duality_gap: 0.0,
        })
    }
}

impl RetailerPolicy for Dro {
    fn name(&self) -> String {
        format!("dro-{}", self.divergence.name())
    }

    fn decide(&mut self, t: usize, w: f64) -> Result<PerceivedState> {
        let Some(empirical) = self.book.empirical() else {
            return respond(Cdf::Step(fallback_cdf(&self.mp)), w, &self.mp);
        };
        let eps = dro_epsilon(self.alpha, t)?;
        let d = dro_worst_case(&empirical, self.divergence, eps, w, &self.mp, self.cap)?;
        self.projections += d.projected as usize;
        self.max_duality_gap = self.max_duality_gap.max(d.duality_gap.abs());
        Ok(PerceivedState {
            cdf: Cdf::Step(d.worst),
            order: d.order,
        })
    }

    fn observe(&mut self, entry: HistoryEntry) {
        self.book.push(entry.xi);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MleFamily {
    Poisson,
    Categorical,
    Exponential,
    /// Normal with known standard deviation.
    Normal { sd: f64 },
}

/// Maximum-likelihood fit of `family` to `samples`, capped at `cap`.
/// Returns `None` when the fit is undefined (no samples, or a zero exponential sum).
pub fn mle_perceive(
    family: MleFamily,
    samples: &[f64],
    cap: Option<f64>,
    mp: &MarketParams,
) -> Result<Option<Cdf>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let n = samples.len() as f64;
    let sum: f64 = samples.iter().sum();
    let mean = sum / n;
    let fam = match family {
        MleFamily::Poisson if mean == 0.0 => return Ok(Some(Cdf::Step(StepCdf::point_mass(0.0)))),
        MleFamily::Poisson => Family::Poisson { rate: mean },
        MleFamily::Exponential if sum == 0.0 => return Ok(None),
        MleFamily::Exponential => Family::Exponential { rate: n / sum },
        MleFamily::Normal { sd } => Family::Normal { mean, sd },
        MleFamily::Categorical => {
            let support = mp
                .support
                .clone()
                .ok_or_else(|| Error::InvalidParameter("categorical fit needs a discrete support".into()))?;
            let mut probs = vec![0.0; support.len()];
            for x in samples {
                let i = support
                    .iter()
                    .position(|y| y == x)
                    .ok_or_else(|| Error::InvalidDistribution(format!("sample {x} is outside the support")))?;
                probs[i] += 1.0 / n;
            }
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            Family::Categorical { support, probs }
        }
    };
    Ok(Some(Cdf::Parametric(ParametricCdf::new(fam, cap)?)))
}

/// Plug-in retailer that best-responds to a fitted parametric family.
#[derive(Debug, Clone)]
pub struct Mle {
    mp: MarketParams,
    family: MleFamily,
    cap: Option<f64>,
    samples: Vec<f64>,
    last_fit: Option<Cdf>,
}

impl Mle {
    pub fn new(mp: MarketParams, family: MleFamily, cap: Option<f64>) -> Self {
        Self {
            mp,
            family,
            cap,
            samples: Vec::new(),
            last_fit: None,
        }
    }
}

impl RetailerPolicy for Mle {
    fn name(&self) -> String {
        let fam = match self.family {
            MleFamily::Poisson => "poisson",
            MleFamily::Categorical => "categorical",
            MleFamily::Exponential => "exponential",
            MleFamily::Normal { .. } => "normal",
        };
        format!("mle-{fam}")
    }

    fn decide(&mut self, _t: usize, w: f64) -> Result<PerceivedState> {
        if let Some(fit) = mle_perceive(self.family, &self.samples, self.cap, &self.mp)? {
            self.last_fit = Some(fit);
        }
        let cdf = self
            .last_fit
            .clone()
            .unwrap_or_else(|| Cdf::Step(fallback_cdf(&self.mp)));
        respond(cdf, w, &self.mp)
    }

    fn observe(&mut self, entry: HistoryEntry) {
        self.samples.push(entry.xi);
    }
}

/// `f_t(w) = (t−1)((s/w)^{1/t} − 1)/ln(s/w)`.
pub fn opstats_factor(w: f64, s: f64, t: usize) -> f64 {
    let r = s / w;
    (t - 1) as f64 * (r.powf(1.0 / t as f64) - 1.0) / r.ln()
}

fn check_open_price(w: f64, s: f64) -> Result<()> {
    if w > 0.0 && w < s {
        Ok(())
    } else {
        Err(Error::InvalidPrice(w))
    }
}

/// Operational-statistics order `min((t−1)((s/w)^{1/t} − 1)·mean, q̄)` and the
/// exponential rate that reproduces it.
pub fn opstats_order(samples: &[f64], w: f64, s: f64, t: usize, cap: Option<f64>) -> Result<(f64, f64)> {
    check_open_price(w, s)?;
    if t < 2 || samples.is_empty() {
        return Err(Error::InvalidParameter("operational statistics needs at least one sample".into()));
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::InvalidParameter("operational statistics needs a positive sample sum".into()));
    }
    let raw = (t - 1) as f64 * ((s / w).powf(1.0 / t as f64) - 1.0) * mean;
    let rate = 1.0 / (opstats_factor(w, s, t) * mean);
    Ok((cap.map_or(raw, |c| raw.min(c)), rate))
}

/// Gamma-prior Bayesian order `min((β + Σξ)((s/w)^{1/(α+t−1)} − 1), q̄)` and
/// the matching exponential rate.
pub fn bayes_order(
    samples: &[f64],
    w: f64,
    s: f64,
    alpha: f64,
    beta: f64,
    cap: Option<f64>,
) -> Result<(f64, f64)> {
    check_open_price(w, s)?;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("prior parameters must be positive, got ({alpha}, {beta})")));
    }
    let shape = alpha + samples.len() as f64;
    let scale = beta + samples.iter().sum::<f64>();
    let raw = scale * ((s / w).powf(1.0 / shape) - 1.0);
    let rate = (s / w).ln() / raw;
    Ok((cap.map_or(raw, |c| raw.min(c)), rate))
}

/// Exponential perceived distribution with the given rate, capped.
fn exponential_state(rate: f64, order: f64, cap: Option<f64>) -> Result<PerceivedState> {
    Ok(PerceivedState {
        cdf: Cdf::Parametric(ParametricCdf::new(Family::Exponential { rate }, cap)?),
        order,
    })
}

/// Order at a boundary price: everything up to the cap at `w ≤ 0`, nothing at `w ≥ s`.
fn boundary_state(w: f64, mp: &MarketParams, rate: f64, cap: Option<f64>) -> Result<PerceivedState> {
    let cdf = Cdf::Parametric(ParametricCdf::new(Family::Exponential { rate }, cap)?);
    respond(cdf, w, mp)
}

/// Operational-statistics retailer for exponential demand.
#[derive(Debug, Clone)]
pub struct OpStats {
    mp: MarketParams,
    cap: Option<f64>,
    samples: Vec<f64>,
}

impl OpStats {
    pub fn new(mp: MarketParams, cap: Option<f64>) -> Self {
        Self {
            mp,
            cap,
            samples: Vec::new(),
        }
    }
}

impl RetailerPolicy for OpStats {
    fn name(&self) -> String {
        "opstats".into()
    }

    fn decide(&mut self, t: usize, w: f64) -> Result<PerceivedState> {
        if self.samples.is_empty() {
            return respond(Cdf::Step(fallback_cdf(&self.mp)), w, &self.mp);
        }
        let n = self.samples.len();
        let mean = self.samples.iter().sum::<f64>() / n as f64;
        if mean == 0.0 {
            return respond(Cdf::Step(StepCdf::point_mass(0.0)), w, &self.mp);
        }
        if w <= 0.0 || w >= self.mp.s {
            // limit of the implied rate as w → s
            let t = n + 1;
            let rate = t as f64 / ((t - 1) as f64 * mean);
            return boundary_state(w, &self.mp, rate, self.cap);
        }
        let (order, rate) = opstats_order(&self.samples, w, self.mp.s, t.max(n + 1), self.cap)?;
        exponential_state(rate, order, self.cap)
    }

    fn observe(&mut self, entry: HistoryEntry) {
        self.samples.push(entry.xi);
    }
}

/// Bayesian retailer with a gamma prior on the exponential rate.
#[derive(Debug, Clone)]
pub struct Bayes {
    mp: MarketParams,
    alpha: f64,
    beta: f64,
    cap: Option<f64>,
    samples: Vec<f64>,
}

impl Bayes {
    pub fn new(mp: MarketParams, alpha: f64, beta: f64, cap: Option<f64>) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::InvalidParameter(format!("prior parameters must be positive, got ({alpha}, {beta})")));
        }
        Ok(Self {
            mp,
            alpha,
            beta,
            cap,
            samples: Vec::new(),
        })
    }
}

impl RetailerPolicy for Bayes {
    fn name(&self) -> String {
        "bayes".into()
    }

    fn decide(&mut self, _t: usize, w: f64) -> Result<PerceivedState> {
        if w <= 0.0 || w >= self.mp.s {
            let rate = (self.alpha + self.samples.len() as f64) / (self.beta + self.samples.iter().sum::<f64>());
            return boundary_state(w, &self.mp, rate, self.cap);
        }
        let (order, rate) = bayes_order(&self.samples, w, self.mp.s, self.alpha, self.beta, self.cap)?;
        exponential_state(rate, order, self.cap)
    }

    fn observe(&mut self, entry: HistoryEntry) {
        self.samples.push(entry.xi);
    }
}

/// Perceived distributions given exogenously per round; the retailer only best-responds.
pub type Script = Arc<dyn Fn(usize) -> Cdf + Send + Sync>;

#[derive(Clone)]
pub struct Scripted {
    mp: MarketParams,
    script: Script,
}

impl Scripted {
    pub fn new(mp: MarketParams, script: Script) -> Self {
        Self { mp, script }
    }
}

impl std::fmt::Debug for Scripted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scripted").finish_non_exhaustive()
    }
}

impl RetailerPolicy for Scripted {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn decide(&mut self, t: usize, w: f64) -> Result<PerceivedState> {
        respond((self.script)(t), w, &self.mp)
    }

    fn observe(&mut self, _entry: HistoryEntry) {}
}

/// Which retailer to build.
#[derive(Debug, Clone, PartialEq)]
pub enum RetailerKind {
    Saa,
    Dro { divergence: Divergence, alpha: f64 },
    Mle { family: MleFamily },
    OpStats,
    Bayes { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetailerConfig {
    pub kind: RetailerKind,
    pub cap: Option<f64>,
}

impl RetailerConfig {
    pub fn build(&self, mp: &MarketParams) -> Result<Box<dyn RetailerPolicy>> {
        let mp = mp.clone();
        Ok(match self.kind {
            RetailerKind::Saa => Box::new(Saa::new(mp)),
            RetailerKind::Dro { divergence, alpha } => Box::new(Dro::new(mp, divergence, alpha, self.cap)?),
            RetailerKind::Mle { family } => Box::new(Mle::new(mp, family, self.cap)),
            RetailerKind::OpStats => Box::new(OpStats::new(mp, self.cap)),
            RetailerKind::Bayes { alpha, beta } => Box::new(Bayes::new(mp, alpha, beta, self.cap)?),
        })
    }
}
