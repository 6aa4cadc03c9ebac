//! The repeated pricing/ordering protocol, demand generation, seeded random
//! streams and replication.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{best_response_order, kolmogorov_distance, Cdf, Family, MarketParams, ParametricCdf, StepCdf};
use crate::regret::{benchmark_profit, Benchmark, RegretLedger, VariationTrace};
use crate::retailer::{HistoryEntry, PerceivedState, RetailerConfig, RetailerPolicy, Scripted};
use crate::supplier::{PricingPolicy, RestartEvent, SupplierKind};

/// Relative tolerance when checking an order against its perceived distribution.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Supplier = 1,
    Demand = 2,
}

/// Independent stream for `(seed, rep, role, t)`.
pub fn stream(seed: u64, rep: usize, role: Role, t: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(rep as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(role as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(t as u64);
    rng
}

/// `p_{t,0} = 1/2 + (3/10) sin(5Vπt/(3T))`.
pub fn sinusoidal_p(t: usize, t_horizon: usize, v: f64) -> f64 {
    0.5 + 0.3 * (5.0 * v * std::f64::consts::PI * t as f64 / (3.0 * t_horizon as f64)).sin()
}

/// Twelve pools of daily demand, indexed by calendar month (January = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyPools {
    pub pools: Vec<Vec<f64>>,
}

impl MonthlyPools {
    /// Calendar month of simulated day `t`, counting from 1 January 2021.
    pub fn month_of_day(t: usize) -> usize {
        use chrono::{Datelike, Days, NaiveDate};
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date");
        let day = start
            .checked_add_days(Days::new(t.saturating_sub(1) as u64))
            .expect("date in range");
        day.month0() as usize
    }

    pub fn max_value(&self) -> f64 {
        self.pools.iter().flatten().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemandModel {
    /// I.i.d. draws from a fixed step distribution.
    Stationary(StepCdf),
    /// Two points `{0, ξ̄}` with `P(ξ = 0) = p_{t,0}`.
    SinusoidalBernoulli { v: f64 },
    /// I.i.d. draws from a parametric family; normal draws are clamped to `[0, clamp]`.
    Parametric { family: Family, clamp: f64 },
    /// Bootstrap from the pool of the day's calendar month.
    Monthly(MonthlyPools),
}

impl DemandModel {
    /// The true distribution of round `t`.
    pub fn cdf(&self, t: usize, t_horizon: usize, mp: &MarketParams) -> Result<Cdf> {
        Ok(match self {
            DemandModel::Stationary(f) => Cdf::Step(f.clone()),
            DemandModel::SinusoidalBernoulli { v } => Cdf::Step(StepCdf::new(
                vec![0.0, mp.xi_bar],
                vec![sinusoidal_p(t, t_horizon, *v), 1.0],
            )?),
            DemandModel::Parametric { family, .. } => Cdf::Parametric(ParametricCdf::new(family.clone(), None)?),
            DemandModel::Monthly(p) => {
                let pool = &p.pools[MonthlyPools::month_of_day(t)];
                Cdf::Step(
                    StepCdf::empirical(pool).ok_or_else(|| Error::Dataset("empty monthly pool".into()))?,
                )
            }
        })
    }

    pub fn sample(&self, t: usize, t_horizon: usize, mp: &MarketParams, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(match self {
            DemandModel::Stationary(f) => f.quantile(rng.random::<f64>().max(f64::MIN_POSITIVE)),
            DemandModel::SinusoidalBernoulli { v } => {
                if rng.random::<f64>() < sinusoidal_p(t, t_horizon, *v) {
                    0.0
                } else {
                    mp.xi_bar
                }
            }
            DemandModel::Parametric { family, clamp } => match family {
                Family::Poisson { rate } => Poisson::new(*rate)
                    .map_err(|e| Error::InvalidDistribution(e.to_string()))?
                    .sample(rng),
                Family::Exponential { rate } => Exp::new(*rate)
                    .map_err(|e| Error::InvalidDistribution(e.to_string()))?
                    .sample(rng),
                Family::Normal { mean, sd } => Normal::new(*mean, *sd)
                    .map_err(|e| Error::InvalidDistribution(e.to_string()))?
                    .sample(rng)
                    .clamp(0.0, *clamp),
                Family::Categorical { support, probs } => {
                    let f = StepCdf::from_weights(support.clone(), probs)?;
                    f.quantile(rng.random::<f64>().max(f64::MIN_POSITIVE))
                }
            },
            DemandModel::Monthly(p) => {
                let pool = &p.pools[MonthlyPools::month_of_day(t)];
                if pool.is_empty() {
                    return Err(Error::Dataset("empty monthly pool".into()));
                }
                pool[rng.random_range(0..pool.len())]
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RetailerMode {
    Learning(RetailerConfig),
    /// The perceived distribution is the true demand distribution of the round.
    Scripted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub t_horizon: usize,
    pub market: MarketParams,
    pub supplier: SupplierKind,
    pub retailer: RetailerMode,
    pub demand: DemandModel,
    pub seed: u64,
    pub replications: usize,
    /// Keep per-round records for these replications.
    pub detail_reps: Vec<usize>,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_horizon == 0 {
            return Err(Error::InvalidParameter("T must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replication count must be at least 1".into()));
        }
        if let DemandModel::Monthly(p) = &self.demand {
            if p.pools.len() != 12 || p.pools.iter().any(Vec::is_empty) {
                return Err(Error::Dataset("need twelve non-empty monthly pools".into()));
            }
        }
        Ok(())
    }

    /// Finite price set of the supplier, else the full interval.
    pub fn benchmark(&self) -> Benchmark {
        match self.supplier.price_set(&self.market) {
            Some(w) => Benchmark::Finite(w),
            None => Benchmark::Continuous,
        }
    }

    pub fn build_retailer(&self) -> Result<Box<dyn RetailerPolicy>> {
        match &self.retailer {
            RetailerMode::Learning(cfg) => cfg.build(&self.market),
            RetailerMode::Scripted => {
                let demand = self.demand.clone();
                let mp = self.market.clone();
                let horizon = self.t_horizon;
                self.validate()?;
                demand.cdf(1, horizon, &mp)?;
                Ok(Box::new(Scripted::new(
                    self.market.clone(),
                    std::sync::Arc::new(move |t| demand.cdf(t, horizon, &mp).expect("validated demand model")),
                )))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub w: f64,
    pub q: f64,
    pub xi: f64,
    pub profit: f64,
    pub benchmark: f64,
    pub regret_cum: f64,
    pub epoch: usize,
    pub phase: &'static str,
}

/// Outcome of checking one restart against the measured variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartCheck {
    pub event: RestartEvent,
    pub variation: f64,
    pub threshold: f64,
}

impl RestartCheck {
    pub fn sound(&self) -> bool {
        self.variation >= self.threshold
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub restart_checks: Vec<RestartCheck>,
    /// Rounds where the discretized perceived sequence moved more than the original.
    pub contraction_violations: usize,
    /// Largest per-step distance of the discretized sequence minus the original's.
    pub max_contraction_excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub ledger: RegretLedger,
    pub trace: VariationTrace,
    pub restarts: Vec<RestartEvent>,
    pub diagnostics: Diagnostics,
    pub records: Option<Vec<RoundRecord>>,
    /// Prices posted by the supplier, in order.
    pub prices: Vec<f64>,
    pub epochs: usize,
}

pub fn run_episode(cfg: &EpisodeConfig, rep: usize) -> Result<Trajectory> {
    cfg.validate()?;
    let mut supplier = cfg.supplier.build(&cfg.market, cfg.t_horizon)?;
    let mut retailer = cfg.build_retailer()?;
    run_with(cfg, rep, supplier.as_mut(), retailer.as_mut())
}

/// The protocol loop with caller-supplied policies.
pub fn run_with(
    cfg: &EpisodeConfig,
    rep: usize,
    supplier: &mut dyn PricingPolicy,
    retailer: &mut dyn RetailerPolicy,
) -> Result<Trajectory> {
    let mp = &cfg.market;
    let horizon = cfg.t_horizon;
    let benchmark = cfg.benchmark();
    let keep = cfg.detail_reps.contains(&rep);
    let mut ledger = RegretLedger::with_capacity(horizon);
    let mut trace = VariationTrace::new();
    let mut diagnostics = Diagnostics::default();
    let mut records = keep.then(|| Vec::with_capacity(horizon));
    let mut prices = Vec::with_capacity(horizon);
    let mut prev: Option<Cdf> = None;
    let mut prev_grid: Option<StepCdf> = None;

    for t in 1..=horizon {
        let mut srng = stream(cfg.seed, rep, Role::Supplier, t);
        let decision = supplier.price(t, &mut srng)?;
        let w = decision.w;
        if !(0.0..=mp.s).contains(&w) {
            return Err(Error::InvalidPrice(w));
        }
        let status = supplier.status();

        let PerceivedState { cdf, order } = retailer.decide(t, w)?;
        let implied = best_response_order(&cdf, w, mp)?;
        if (implied - order).abs() > CONSISTENCY_TOL * order.abs().max(1.0) {
            return Err(Error::ConsistencyViolation { t, order, implied });
        }

        let realized = (w - mp.c) * order;
        let (sup, _) = benchmark_profit(&benchmark, &cdf, mp);
        // the supremum also dominates the played price under the same distribution
        let bench = match benchmark {
            Benchmark::Continuous => sup.max((w - mp.c) * implied),
            Benchmark::Finite(_) => sup,
        };
        ledger.update(bench, realized, status.epoch)?;

        let mut drng = stream(cfg.seed, rep, Role::Demand, t);
        let xi = cfg.demand.sample(t, horizon, mp, &mut drng)?;
        supplier.feedback(t, w, order)?;
        retailer.observe(HistoryEntry { w, q: order, xi });

        if let Some(p) = &prev {
            let d = kolmogorov_distance(p, &cdf, mp);
            let epoch = ledger.epochs[t - 2];
            trace.push(d, epoch);
            if let Some(grid) = supplier.feedback_grid() {
                let cur_grid = cdf.restrict_to_grid(grid).ok();
                if let (Some(a), Some(b)) = (&prev_grid, &cur_grid) {
                    let dg = kolmogorov_distance(&Cdf::Step(a.clone()), &Cdf::Step(b.clone()), mp);
                    let excess = dg - d;
                    diagnostics.max_contraction_excess = diagnostics.max_contraction_excess.max(excess);
                    if excess > 1e-12 {
                        diagnostics.contraction_violations += 1;
                    }
                }
                prev_grid = cur_grid;
            }
        } else if let Some(grid) = supplier.feedback_grid() {
            prev_grid = cdf.restrict_to_grid(grid).ok();
        }

        if let Some(r) = records.as_mut() {
            r.push(RoundRecord {
                t,
                w,
                q: order,
                xi,
                profit: realized,
                benchmark: bench,
                regret_cum: ledger.total(),
                epoch: status.epoch,
                phase: status.phase.tag(),
            });
        }
        prices.push(w);
        prev = Some(cdf);
    }

    let restarts = supplier.restarts().to_vec();
    let scale = mp.s * mp.xi_bar;
    diagnostics.restart_checks = restarts
        .iter()
        .map(|&event| RestartCheck {
            event,
            variation: trace.window_sum(event.tau + 1, event.t - 1),
            threshold: event.delta / scale,
        })
        .collect();
    Ok(Trajectory {
        ledger,
        trace,
        epochs: supplier.status().epoch,
        restarts,
        diagnostics,
        records,
        prices,
    })
}

/// Per-replication summary kept after a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rep: usize,
    pub cumulative: Vec<f64>,
    pub variation: Vec<f64>,
    pub epoch_path: Vec<usize>,
    pub epochs: usize,
    pub total_variation: f64,
    pub restart_checks: Vec<RestartCheck>,
    pub contraction_violations: usize,
    pub records: Option<Vec<RoundRecord>>,
}

impl RunSummary {
    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

impl From<(usize, Trajectory)> for RunSummary {
    fn from((rep, tr): (usize, Trajectory)) -> Self {
        let mut variation = Vec::with_capacity(tr.ledger.len());
        variation.push(0.0);
        variation.extend_from_slice(tr.trace.running());
        Self {
            rep,
            cumulative: tr.ledger.cumulative,
            variation,
            epoch_path: tr.ledger.epochs,
            epochs: tr.epochs,
            total_variation: tr.trace.total(),
            restart_checks: tr.diagnostics.restart_checks,
            contraction_violations: tr.diagnostics.contraction_violations,
            records: tr.records,
        }
    }
}

/// Pointwise statistics over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean_cum_regret: Vec<f64>,
    pub std_cum_regret: Vec<f64>,
    pub mean_variation: Vec<f64>,
    pub mean_epochs: Vec<f64>,
    pub runs: Vec<RunSummary>,
}

impl Aggregate {
    pub fn finals(&self) -> Vec<f64> {
        self.runs.iter().map(RunSummary::final_regret).collect()
    }
}

/// Runs every replication in parallel and reduces in replication order.
pub fn run_replications(cfg: &EpisodeConfig) -> Result<Aggregate> {
    cfg.validate()?;
    let runs: Vec<RunSummary> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_episode(cfg, rep).map(|tr| RunSummary::from((rep, tr))))
        .collect::<Result<_>>()?;
    Ok(aggregate(runs))
}

/// Serial counterpart of [`run_replications`].
pub fn run_replications_serial(cfg: &EpisodeConfig) -> Result<Aggregate> {
    cfg.validate()?;
    let runs = (0..cfg.replications)
        .map(|rep| run_episode(cfg, rep).map(|tr| RunSummary::from((rep, tr))))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(runs))
}

pub fn aggregate(runs: Vec<RunSummary>) -> Aggregate {
    let n = runs.len() as f64;
    let len = runs.iter().map(|r| r.cumulative.len()).min().unwrap_or(0);
    let mean_of = |f: &dyn Fn(&RunSummary, usize) -> f64| -> Vec<f64> {
        (0..len).map(|t| runs.iter().map(|r| f(r, t)).sum::<f64>() / n).collect()
    };
    let mean_cum_regret = mean_of(&|r, t| r.cumulative[t]);
    let mean_variation = mean_of(&|r, t| r.variation[t]);
    let mean_epochs = mean_of(&|r, t| r.epoch_path[t] as f64);
    let std_cum_regret = (0..len)
        .map(|t| {
            let m = mean_cum_regret[t];
            (runs.iter().map(|r| (r.cumulative[t] - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    Aggregate {
        mean_cum_regret,
        std_cum_regret,
        mean_variation,
        mean_epochs,
        runs,
    }
}
