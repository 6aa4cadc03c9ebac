use crate::sim::sinusoidal_p;

/// A named preset. Keys not set in a config fall back to these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub demand: &'static str,
    pub retailer: &'static str,
    pub policies: &'static [&'static str],
}

pub const SCENARIOS: [Scenario; 4] = [
    Scenario {
        name: "luna-discrete",
        description: "LUNA against a scripted sinusoidal Bernoulli perceived sequence",
        demand: "sinusoidal",
        retailer: "scripted",
        policies: &["luna"],
    },
    Scenario {
        name: "compare-scripted",
        description: "LUNAF and bandit baselines against the scripted sinusoidal sequence",
        demand: "sinusoidal",
        retailer: "scripted",
        policies: &["lunaf", "exp3s", "restart-bandit"],
    },
    Scenario {
        name: "compare-saa",
        description: "LUNAF and bandit baselines against an SAA retailer facing sinusoidal Bernoulli demand",
        demand: "sinusoidal",
        retailer: "saa",
        policies: &["lunaf", "exp3s", "restart-bandit"],
    },
    Scenario {
        name: "avocado",
        description: "LUNAF and bandit baselines against an SAA retailer bootstrapping monthly sales data",
        demand: "monthly",
        retailer: "saa",
        policies: &["lunaf", "exp3s", "restart-bandit"],
    },
];

pub fn scenario(name: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.name == name)
}

pub fn scenario_names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|s| s.name).collect()
}

/// Exact Kolmogorov variation `Σ |p_{t+1,0} − p_{t,0}|` of the scripted sinusoid.
pub fn sinusoid_variation(t_horizon: usize, v: f64) -> f64 {
    (1..t_horizon)
        .map(|t| (sinusoidal_p(t + 1, t_horizon, v) - sinusoidal_p(t, t_horizon, v)).abs())
        .sum()
}
