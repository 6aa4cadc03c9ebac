use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use toml::Value;

use super::analysis::DEFAULT_WINDOW;
use super::catalog::{scenario, scenario_names, sinusoid_variation};
use super::dataset::ingest_weekly_sales_file;
use crate::error::Result;
use crate::market::{Family, MarketParams, StepCdf};
use crate::retailer::{Divergence, MleFamily, RetailerConfig, RetailerKind};
use crate::sim::{DemandModel, EpisodeConfig, MonthlyPools, RetailerMode};
use crate::supplier::{optimal_k, optimal_n, SupplierKind};

/// A configuration problem, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemandSpec {
    Sinusoidal { v: f64 },
    Bernoulli { p0: f64 },
    Exponential { rate: f64 },
    Poisson { rate: f64 },
    Normal { mean: f64, sd: f64 },
    Monthly { dataset: PathBuf, pools: MonthlyPools },
}

impl DemandSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            DemandSpec::Sinusoidal { .. } => "sinusoidal",
            DemandSpec::Bernoulli { .. } => "bernoulli",
            DemandSpec::Exponential { .. } => "exponential",
            DemandSpec::Poisson { .. } => "poisson",
            DemandSpec::Normal { .. } => "normal",
            DemandSpec::Monthly { .. } => "monthly",
        }
    }

    fn budget(&self) -> Option<f64> {
        match self {
            DemandSpec::Sinusoidal { v } => Some(*v),
            _ => None,
        }
    }

    /// Known discrete support of demand, if any.
    fn support(&self, xi_bar: f64) -> Option<Vec<f64>> {
        match self {
            DemandSpec::Sinusoidal { .. } | DemandSpec::Bernoulli { .. } => Some(vec![0.0, xi_bar]),
            DemandSpec::Monthly { pools, .. } => {
                let top = pools.max_value() as usize;
                Some((0..=top).map(|y| y as f64).collect())
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupplierSpec {
    pub policies: Vec<String>,
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub csv: bool,
    pub svg: bool,
    /// Slope window as fractions of `T`.
    pub window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: String,
    pub t_horizon: usize,
    pub seed: u64,
    pub replications: usize,
    pub s: f64,
    pub c: f64,
    pub xi_bar: f64,
    pub demand: DemandSpec,
    pub retailer: RetailerMode,
    pub supplier: SupplierSpec,
    pub output: OutputSpec,
}

pub const POLICY_NAMES: [&str; 7] = ["stat", "luna", "lunac", "lunac-n", "lunaf", "exp3s", "restart-bandit"];

const TOP_KEYS: [&str; 4] = ["scenario", "T", "seed", "replications"];
const SECTION_KEYS: [&str; 24] = [
    "market.s",
    "market.c",
    "market.xi_bar",
    "demand.kind",
    "demand.V",
    "demand.p0",
    "demand.rate",
    "demand.mean",
    "demand.sd",
    "demand.dataset",
    "retailer.kind",
    "retailer.divergence",
    "retailer.alpha",
    "retailer.family",
    "retailer.sd",
    "retailer.prior_alpha",
    "retailer.prior_beta",
    "retailer.cap",
    "supplier.policies",
    "supplier.K",
    "supplier.N",
    "supplier.d",
    "supplier.budget",
    "output.dir",
];
const OUTPUT_KEYS: [&str; 4] = ["output.csv", "output.svg", "output.window_lo", "output.window_hi"];

/// Line of the first assignment to `key`, tracking `[section]` headers.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            section = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs: String = lhs.split('.').map(|p| p.trim().trim_matches('"')).collect::<Vec<_>>().join(".");
        let full = if section.is_empty() { lhs } else { format!("{section}.{lhs}") };
        if full == key {
            return Some(i + 1);
        }
    }
    None
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

struct Fields<'a> {
    text: &'a str,
    map: BTreeMap<String, Value>,
}

impl Fields<'_> {
    fn err(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::new(line_of(self.text, key), format!("{key}: {}", msg.into()))
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(x)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(_) => Err(self.err(key, "expected a number")),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(Value::Integer(_)) => Err(self.err(key, "must be non-negative")),
            Some(_) => Err(self.err(key, "expected an integer")),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.err(key, "expected a string")),
        }
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(b)),
            Some(_) => Err(self.err(key, "expected true or false")),
        }
    }

    fn strings(&mut self, key: &str) -> Result<Option<Vec<String>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(vec![s])),
            Some(Value::Array(a)) => a
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s),
                    _ => Err(self.err(key, "expected a list of strings")),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(self.err(key, "expected a list of strings")),
        }
    }

    fn require<T>(&self, key: &str, v: Option<T>) -> Result<T, ConfigError> {
        v.ok_or_else(|| ConfigError::new(None, format!("missing required key `{key}`")))
    }

    fn check(&self, key: &str, ok: bool, msg: &str) -> Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            Err(self.err(key, msg))
        }
    }
}

/// Parses `text`, resolving relative dataset paths against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentSpec, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|r| text[..r.start].matches('\n').count() + 1);
        ConfigError::new(line, e.message().trim().to_string())
    })?;
    let mut map = BTreeMap::new();
    flatten("", &table, &mut map);
    let mut f = Fields { text, map };

    for key in f.map.keys() {
        let known =
            TOP_KEYS.contains(&key.as_str()) || SECTION_KEYS.contains(&key.as_str()) || OUTPUT_KEYS.contains(&key.as_str());
        if !known {
            return Err(f.err(key, "unknown key"));
        }
    }

    let name = f.string("scenario")?;
    let name = f.require("scenario", name)?;
    let preset = scenario(&name).ok_or_else(|| {
        f.err(
            "scenario",
            format!("unknown scenario `{name}`; available: {}", scenario_names().join(", ")),
        )
    })?;
    let t_horizon = f.usize("T")?;
    let t_horizon = f.require("T", t_horizon)?;
    f.check("T", t_horizon >= 1, "T ≥ 1 required")?;
    let seed = f.usize("seed")?;
    let seed = f.require("seed", seed)? as u64;
    let replications = f.usize("replications")?.unwrap_or(20);
    f.check("replications", replications >= 1, "replication count ≥ 1 required")?;

    let s = f.f64("market.s")?.unwrap_or(1.0);
    let c = f.f64("market.c")?.unwrap_or(0.0);
    f.check("market.c", 0.0 <= c && c < s && s.is_finite(), "need 0 ≤ c < s")?;
    let xi_bar_given = f.f64("market.xi_bar")?;

    let demand_kind = f.string("demand.kind")?.unwrap_or_else(|| preset.demand.to_string());
    let positive = |f: &Fields, key: &str, x: f64| f.check(key, x > 0.0 && x.is_finite(), "must be positive");
    let demand = match demand_kind.as_str() {
        "sinusoidal" => {
            let v = f.f64("demand.V")?.unwrap_or(1.0);
            positive(&f, "demand.V", v)?;
            DemandSpec::Sinusoidal { v }
        }
        "bernoulli" => {
            let p0 = f.f64("demand.p0")?.unwrap_or(0.5);
            f.check("demand.p0", (0.0..=1.0).contains(&p0), "must lie in [0, 1]")?;
            DemandSpec::Bernoulli { p0 }
        }
        "exponential" | "poisson" => {
            let rate = f.f64("demand.rate")?.unwrap_or(1.0);
            positive(&f, "demand.rate", rate)?;
            if demand_kind == "poisson" {
                DemandSpec::Poisson { rate }
            } else {
                DemandSpec::Exponential { rate }
            }
        }
        "normal" => {
            let mean = f.f64("demand.mean")?.unwrap_or(1.0);
            let sd = f.f64("demand.sd")?.unwrap_or(1.0);
            positive(&f, "demand.sd", sd)?;
            DemandSpec::Normal { mean, sd }
        }
        "monthly" => {
            let raw = f.string("demand.dataset")?;
            let raw = raw.ok_or_else(|| ConfigError::new(None, "monthly demand needs `demand.dataset`"))?;
            let path = base.join(&raw);
            let data = ingest_weekly_sales_file(&path).map_err(|e| f.err("demand.dataset", e.to_string()))?;
            DemandSpec::Monthly {
                dataset: path,
                pools: data.pools,
            }
        }
        other => {
            return Err(f.err(
                "demand.kind",
                format!("unknown demand `{other}`; available: sinusoidal, bernoulli, exponential, poisson, normal, monthly"),
            ))
        }
    };
    let xi_bar = match (&demand, xi_bar_given) {
        (DemandSpec::Monthly { pools, .. }, None) => pools.max_value(),
        (_, Some(x)) => x,
        (_, None) => 1.0,
    };
    f.check("market.xi_bar", xi_bar > 0.0 && xi_bar.is_finite(), "demand bound must be positive")?;
    if let DemandSpec::Monthly { pools, .. } = &demand {
        f.check("market.xi_bar", xi_bar == pools.max_value(), "must equal the largest dataset sample")?;
    }

    let retailer_kind = f.string("retailer.kind")?.unwrap_or_else(|| preset.retailer.to_string());
    let cap = f.f64("retailer.cap")?;
    if let Some(q) = cap {
        positive(&f, "retailer.cap", q)?;
    }
    let kind = match retailer_kind.as_str() {
        "scripted" => None,
        "saa" => Some(RetailerKind::Saa),
        "dro" => {
            let div = f.string("retailer.divergence")?.unwrap_or_else(|| "kl".into());
            let divergence = match div.as_str() {
                "kl" => Divergence::Kl,
                "chi2" => Divergence::ChiSq,
                "hellinger" => Divergence::Hellinger,
                other => {
                    return Err(f.err(
                        "retailer.divergence",
                        format!("unknown divergence `{other}`; available: kl, chi2, hellinger"),
                    ))
                }
            };
            let alpha = f.f64("retailer.alpha")?.unwrap_or(0.05);
            f.check("retailer.alpha", alpha > 0.0 && alpha < 0.5, "must lie in (0, 0.5)")?;
            Some(RetailerKind::Dro { divergence, alpha })
        }
        "mle" => {
            let fam = f.string("retailer.family")?.unwrap_or_else(|| "exponential".into());
            let family = match fam.as_str() {
                "poisson" => MleFamily::Poisson,
                "categorical" => MleFamily::Categorical,
                "exponential" => MleFamily::Exponential,
                "normal" => {
                    let sd = f.f64("retailer.sd")?.unwrap_or(1.0);
                    positive(&f, "retailer.sd", sd)?;
                    MleFamily::Normal { sd }
                }
                other => {
                    return Err(f.err(
                        "retailer.family",
                        format!("unknown family `{other}`; available: poisson, categorical, exponential, normal"),
                    ))
                }
            };
            Some(RetailerKind::Mle { family })
        }
        "opstats" => Some(RetailerKind::OpStats),
        "bayes" => {
            let alpha = f.f64("retailer.prior_alpha")?.unwrap_or(1.0);
            let beta = f.f64("retailer.prior_beta")?.unwrap_or(1.0);
            positive(&f, "retailer.prior_alpha", alpha)?;
            positive(&f, "retailer.prior_beta", beta)?;
            Some(RetailerKind::Bayes { alpha, beta })
        }
        other => {
            return Err(f.err(
                "retailer.kind",
                format!("unknown retailer `{other}`; available: scripted, saa, dro, mle, opstats, bayes"),
            ))
        }
    };
    let retailer = match kind {
        None => {
            if !matches!(
                demand,
                DemandSpec::Sinusoidal { .. } | DemandSpec::Bernoulli { .. } | DemandSpec::Monthly { .. }
            ) {
                return Err(f.err("retailer.kind", "the scripted retailer needs a discrete demand model"));
            }
            RetailerMode::Scripted
        }
        Some(kind) => RetailerMode::Learning(RetailerConfig { kind, cap }),
    };

    let policies = f
        .strings("supplier.policies")?
        .unwrap_or_else(|| preset.policies.iter().map(|p| p.to_string()).collect());
    f.check("supplier.policies", !policies.is_empty(), "at least one policy required")?;
    for p in &policies {
        if !POLICY_NAMES.contains(&p.as_str()) {
            return Err(f.err(
                "supplier.policies",
                format!("unknown policy `{p}`; available: {}", POLICY_NAMES.join(", ")),
            ));
        }
        let needs_support = matches!(p.as_str(), "luna" | "lunaf");
        if needs_support && demand.support(xi_bar).is_none() {
            return Err(f.err("supplier.policies", format!("policy `{p}` needs a discrete demand support")));
        }
    }
    let v = demand.budget().unwrap_or(1.0);
    let k = f.usize("supplier.K")?.unwrap_or_else(|| optimal_k(t_horizon, v, xi_bar));
    let n = f.usize("supplier.N")?.unwrap_or_else(|| optimal_n(t_horizon, v, xi_bar));
    let d = f
        .usize("supplier.d")?
        .unwrap_or_else(|| (t_horizon as f64).sqrt().ceil() as usize);
    f.check("supplier.K", k >= 1, "K ≥ 1 required")?;
    f.check("supplier.N", n >= 1, "N ≥ 1 required")?;
    f.check("supplier.d", d >= 1, "d ≥ 1 required")?;
    let budget = match f.f64("supplier.budget")? {
        Some(b) => b,
        None => match (&retailer, &demand) {
            (RetailerMode::Scripted, DemandSpec::Sinusoidal { v }) => sinusoid_variation(t_horizon, *v),
            _ => (t_horizon as f64).ln() + 1.0,
        },
    };
    f.check("supplier.budget", budget >= 0.0 && budget.is_finite(), "must be non-negative")?;

    let dir = f
        .string("output.dir")?
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results").join(&name));
    let csv = f.bool("output.csv")?.unwrap_or(true);
    let svg = f.bool("output.svg")?.unwrap_or(true);
    let lo = f.f64("output.window_lo")?.unwrap_or(DEFAULT_WINDOW.0);
    let hi = f.f64("output.window_hi")?.unwrap_or(DEFAULT_WINDOW.1);
    f.check("output.window_lo", 0.0 <= lo && lo < hi && hi <= 1.0, "need 0 ≤ window_lo < window_hi ≤ 1")?;

    Ok(ExperimentSpec {
        scenario: name,
        t_horizon,
        seed,
        replications,
        s,
        c,
        xi_bar,
        demand,
        retailer,
        supplier: SupplierSpec {
            policies,
            k,
            n,
            d,
            budget,
        },
        output: OutputSpec {
            dir,
            csv,
            svg,
            window: (lo, hi),
        },
    })
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(None, format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(parse_config(&text, base)?)
}

fn num(x: f64) -> String {
    Value::Float(x).to_string()
}

fn quoted(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

impl ExperimentSpec {
    pub fn market(&self) -> Result<MarketParams> {
        MarketParams::new(self.s, self.c, self.xi_bar, self.demand.support(self.xi_bar))
    }

    pub fn demand_model(&self) -> Result<DemandModel> {
        Ok(match &self.demand {
            DemandSpec::Sinusoidal { v } => DemandModel::SinusoidalBernoulli { v: *v },
            DemandSpec::Bernoulli { p0 } => DemandModel::Stationary(StepCdf::new(vec![0.0, self.xi_bar], vec![*p0, 1.0])?),
            DemandSpec::Exponential { rate } => DemandModel::Parametric {
                family: Family::Exponential { rate: *rate },
                clamp: f64::INFINITY,
            },
            DemandSpec::Poisson { rate } => DemandModel::Parametric {
                family: Family::Poisson { rate: *rate },
                clamp: f64::INFINITY,
            },
            DemandSpec::Normal { mean, sd } => {
                let cap = match &self.retailer {
                    RetailerMode::Learning(r) => r.cap,
                    RetailerMode::Scripted => None,
                };
                DemandModel::Parametric {
                    family: Family::Normal { mean: *mean, sd: *sd },
                    clamp: 4.0 * cap.unwrap_or(self.xi_bar),
                }
            }
            DemandSpec::Monthly { pools, .. } => DemandModel::Monthly(pools.clone()),
        })
    }

    pub fn supplier_kind(&self, name: &str) -> Option<SupplierKind> {
        let SupplierSpec { k, n, d, budget, .. } = self.supplier;
        Some(match name {
            "stat" => SupplierKind::Stat,
            "luna" => SupplierKind::Luna { k },
            "lunac" => SupplierKind::Lunac { n, k },
            "lunac-n" => SupplierKind::LunacN { k },
            "lunaf" => SupplierKind::Lunaf { d },
            "exp3s" => SupplierKind::Exp3S { d, budget },
            "restart-bandit" => SupplierKind::RestartBandit { d },
            _ => return None,
        })
    }

    /// One episode configuration per listed policy.
    pub fn episodes(&self) -> Result<Vec<(String, EpisodeConfig)>> {
        let market = self.market()?;
        let demand = self.demand_model()?;
        self.supplier
            .policies
            .iter()
            .map(|p| {
                let supplier = self
                    .supplier_kind(p)
                    .ok_or_else(|| ConfigError::new(None, format!("unknown policy `{p}`")))?;
                Ok((
                    p.clone(),
                    EpisodeConfig {
                        t_horizon: self.t_horizon,
                        market: market.clone(),
                        supplier,
                        retailer: self.retailer.clone(),
                        demand: demand.clone(),
                        seed: self.seed,
                        replications: self.replications,
                        detail_reps: vec![0],
                    },
                ))
            })
            .collect()
    }

    /// Fully explicit configuration text; parsing it yields `self` again.
    pub fn to_config_text(&self) -> String {
        let mut o = String::new();
        let mut line = |k: &str, v: String| {
            o.push_str(k);
            o.push_str(" = ");
            o.push_str(&v);
            o.push('\n');
        };
        line("scenario", quoted(&self.scenario));
        line("T", self.t_horizon.to_string());
        line("seed", self.seed.to_string());
        line("replications", self.replications.to_string());
        line("market.s", num(self.s));
        line("market.c", num(self.c));
        line("market.xi_bar", num(self.xi_bar));
        line("demand.kind", quoted(self.demand.kind()));
        match &self.demand {
            DemandSpec::Sinusoidal { v } => line("demand.V", num(*v)),
            DemandSpec::Bernoulli { p0 } => line("demand.p0", num(*p0)),
            DemandSpec::Exponential { rate } | DemandSpec::Poisson { rate } => line("demand.rate", num(*rate)),
            DemandSpec::Normal { mean, sd } => {
                line("demand.mean", num(*mean));
                line("demand.sd", num(*sd));
            }
            DemandSpec::Monthly { dataset, .. } => line("demand.dataset", quoted(&dataset.to_string_lossy())),
        }
        match &self.retailer {
            RetailerMode::Scripted => line("retailer.kind", quoted("scripted")),
            RetailerMode::Learning(r) => {
                match r.kind {
                    RetailerKind::Saa => line("retailer.kind", quoted("saa")),
                    RetailerKind::Dro { divergence, alpha } => {
                        line("retailer.kind", quoted("dro"));
                        line("retailer.divergence", quoted(divergence.name()));
                        line("retailer.alpha", num(alpha));
                    }
                    RetailerKind::Mle { family } => {
                        line("retailer.kind", quoted("mle"));
                        let name = match family {
                            MleFamily::Poisson => "poisson",
                            MleFamily::Categorical => "categorical",
                            MleFamily::Exponential => "exponential",
                            MleFamily::Normal { .. } => "normal",
                        };
                        line("retailer.family", quoted(name));
                        if let MleFamily::Normal { sd } = family {
                            line("retailer.sd", num(sd));
                        }
                    }
                    RetailerKind::OpStats => line("retailer.kind", quoted("opstats")),
                    RetailerKind::Bayes { alpha, beta } => {
                        line("retailer.kind", quoted("bayes"));
                        line("retailer.prior_alpha", num(alpha));
                        line("retailer.prior_beta", num(beta));
                    }
                }
                if let Some(q) = r.cap {
                    line("retailer.cap", num(q));
                }
            }
        }
        let list: Vec<String> = self.supplier.policies.iter().map(|p| quoted(p)).collect();
        line("supplier.policies", format!("[{}]", list.join(", ")));
        line("supplier.K", self.supplier.k.to_string());
        line("supplier.N", self.supplier.n.to_string());
        line("supplier.d", self.supplier.d.to_string());
        line("supplier.budget", num(self.supplier.budget));
        line("output.dir", quoted(&self.output.dir.to_string_lossy()));
        line("output.csv", self.output.csv.to_string());
        line("output.svg", self.output.svg.to_string());
        line("output.window_lo", num(self.output.window.0));
        line("output.window_hi", num(self.output.window.1));
        o
    }
}
