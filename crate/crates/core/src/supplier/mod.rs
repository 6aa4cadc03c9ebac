//! Supplier pricing policies. A policy sees the round index, its own random
//! stream and the `(price, order)` feedback, nothing else.

mod bandit;
mod luna;

pub use bandit::{equally_spaced_prices, exp3s_parameters, stat_grid, Exp3S, RestartBandit, StatPolicy};
pub use luna::{
    bob_gamma, bob_setup, ceil_project, floor_project, luna_delta, luna_exploration_price, lunac_feedback_map, lunac_grid,
    optimal_k, optimal_n, BobSetup, EpochState, Exp3State, Luna, LunaCore, Lunac, LunacN, Lunaf,
};

use rand::RngCore;

use crate::error::Result;
use crate::market::MarketParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Exploration,
    Exploitation,
    /// No phase structure (weight-based learners).
    Adaptive,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Exploration => "explore",
            Phase::Exploitation => "exploit",
            Phase::Adaptive => "adaptive",
        }
    }
}

/// Why a price was posted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    None,
    /// 1-based exploration index.
    Explore(usize),
    /// `0` for the surrogate price, `m ≥ 1` for the probe of `y_m`.
    Luna(usize),
    /// 0-based arm of a finite price set.
    Arm(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceDecision {
    pub w: f64,
    pub probe: Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyStatus {
    pub epoch: usize,
    pub phase: Phase,
}

/// A restart fired at round `t` of an epoch that began after round `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartEvent {
    pub t: usize,
    pub tau: usize,
    pub delta: f64,
    pub probe: usize,
    pub epoch: usize,
}

pub trait PricingPolicy: Send {
    fn name(&self) -> String;
    fn price(&mut self, t: usize, rng: &mut dyn RngCore) -> Result<PriceDecision>;
    fn feedback(&mut self, t: usize, w: f64, q: f64) -> Result<()>;
    fn status(&self) -> PolicyStatus;
    fn restarts(&self) -> &[RestartEvent] {
        &[]
    }
    /// Grid onto which orders are rounded before learning, if any.
    fn feedback_grid(&self) -> Option<&[f64]> {
        None
    }
}

/// Which supplier to build.
#[derive(Debug, Clone, PartialEq)]
pub enum SupplierKind {
    Stat,
    Luna { k: usize },
    Lunac { n: usize, k: usize },
    LunacN { k: usize },
    Lunaf { d: usize },
    Exp3S { d: usize, budget: f64 },
    RestartBandit { d: usize },
}

impl SupplierKind {
    pub fn name(&self) -> &'static str {
        match self {
            SupplierKind::Stat => "stat",
            SupplierKind::Luna { .. } => "luna",
            SupplierKind::Lunac { .. } => "lunac",
            SupplierKind::LunacN { .. } => "lunac-n",
            SupplierKind::Lunaf { .. } => "lunaf",
            SupplierKind::Exp3S { .. } => "exp3s",
            SupplierKind::RestartBandit { .. } => "restart-bandit",
        }
    }

    /// The finite price set when the policy is restricted to one.
    pub fn price_set(&self, mp: &MarketParams) -> Option<Vec<f64>> {
        match *self {
            SupplierKind::Lunaf { d } | SupplierKind::Exp3S { d, .. } | SupplierKind::RestartBandit { d } => {
                Some(equally_spaced_prices(d, mp.s))
            }
            _ => None,
        }
    }

    pub fn build(&self, mp: &MarketParams, t_horizon: usize) -> Result<Box<dyn PricingPolicy>> {
        Ok(match *self {
            SupplierKind::Stat => Box::new(StatPolicy::new(mp, t_horizon)),
            SupplierKind::Luna { k } => Box::new(Luna::new(mp, k)?),
            SupplierKind::Lunac { n, k } => Box::new(Lunac::new(mp, n, k)?),
            SupplierKind::LunacN { k } => Box::new(LunacN::new(mp, t_horizon, k)),
            SupplierKind::Lunaf { d } => Box::new(Lunaf::new(mp, equally_spaced_prices(d, mp.s))?),
            SupplierKind::Exp3S { d, budget } => {
                Box::new(Exp3S::new(mp, equally_spaced_prices(d, mp.s), t_horizon, budget)?)
            }
            SupplierKind::RestartBandit { d } => Box::new(RestartBandit::new(mp, equally_spaced_prices(d, mp.s))?),
        })
    }
}
