//! φ-divergence ball around the empirical distribution and the worst-case
//! newsvendor order.

use crate::error::{Error, Result};
use crate::market::{best_response_order, Cdf, MarketParams, StepCdf};
use statrs::function::gamma::gamma_lr;

const MAX_ITER: usize = 10_000;
const OUTER_STEPS: usize = 200;
const INNER_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Divergence {
    Kl,
    ChiSq,
    Hellinger,
}

impl Divergence {
    pub fn name(self) -> &'static str {
        match self {
            Divergence::Kl => "kl",
            Divergence::ChiSq => "chi2",
            Divergence::Hellinger => "hellinger",
        }
    }

    /// Generator `φ` with `φ(1) = 0`.
    pub fn phi(self, x: f64) -> f64 {
        match self {
            Divergence::Kl => {
                if x == 0.0 {
                    1.0
                } else {
                    x * x.ln() - x + 1.0
                }
            }
            Divergence::ChiSq => (x - 1.0) * (x - 1.0),
            Divergence::Hellinger => {
                let r = x.sqrt() - 1.0;
                r * r
            }
        }
    }

    /// Convex conjugate `φ*`.
    pub fn conjugate(self, y: f64) -> f64 {
        match self {
            Divergence::Kl => y.exp() - 1.0,
            Divergence::ChiSq => {
                if y >= -2.0 {
                    y + y * y / 4.0
                } else {
                    -1.0
                }
            }
            Divergence::Hellinger => {
                if y < 1.0 {
                    y / (1.0 - y)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// `Σ p̂ᵢ φ(pᵢ/p̂ᵢ)` over atoms with `p̂ᵢ > 0`.
pub fn divergence(div: Divergence, p: &[f64], nominal: &[f64]) -> f64 {
    p.iter().zip(nominal).map(|(&pi, &qi)| qi * div.phi(pi / qi)).sum()
}

/// Upper `1 − level` quantile of the chi-square distribution with one degree
/// of freedom, by bisection on the regularized lower incomplete gamma.
pub fn chi_square_1_quantile(level: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while gamma_lr(0.5, hi / 2.0) < level {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_lr(0.5, mid / 2.0) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Ball radius `ε_t = χ²_{1,1−2α}/(t − 1)`, with `ε₁ = 1`.
pub fn dro_epsilon(alpha: f64, t: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParameter(format!("confidence level must lie in (0, 0.5), got {alpha}")));
    }
    if t <= 1 {
        return Ok(1.0);
    }
    Ok(chi_square_1_quantile(1.0 - 2.0 * alpha) / (t - 1) as f64)
}

/// Solution of `min Σ pᵢ rᵢ` over the divergence ball.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub value: f64,
    pub weights: Vec<f64>,
    /// Primal minus dual objective at the returned multipliers.
    pub duality_gap: f64,
}

/// Worst-case expected reward `min_{p : D_φ(p‖p̂) ≤ ε} Σ pᵢ rᵢ`, with `p`
/// supported on the atoms of `p̂`.
pub fn inner_worst_case(div: Divergence, rewards: &[f64], nominal: &[f64], eps: f64) -> Result<InnerSolution> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius must be non-negative, got {eps}")));
    }
    if rewards.len() != nominal.len() || rewards.is_empty() {
        return Err(Error::InvalidParameter("rewards and weights must have equal non-zero length".into()));
    }
    let r_min = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let r_max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nominal_value: f64 = rewards.iter().zip(nominal).map(|(r, p)| r * p).sum();
    if eps == 0.0 || r_max == r_min {
        return Ok(InnerSolution {
            value: nominal_value.min(r_max).max(r_min),
            weights: nominal.to_vec(),
            duality_gap: 0.0,
        });
    }

    // all mass on the minimisers, if the ball reaches that far
    let at_min: Vec<bool> = rewards.iter().map(|&r| r == r_min).collect();
    let p_min: f64 = nominal.iter().zip(&at_min).filter(|(_, m)| **m).map(|(p, _)| p).sum();
    let corner: Vec<f64> = nominal
        .iter()
        .zip(&at_min)
        .map(|(&p, &m)| if m { p / p_min } else { 0.0 })
        .collect();
    if divergence(div, &corner, nominal) <= eps {
        return Ok(InnerSolution {
            value: r_min,
            weights: corner,
            duality_gap: 0.0,
        });
    }

    let gaps: Vec<f64> = rewards.iter().map(|r| r - r_min).collect();
    let scale = r_max - r_min;
    let div_at = |lambda: f64| -> Result<(f64, Vec<f64>, f64)> {
        let (p, eta) = tilt(div, &gaps, nominal, lambda)?;
        Ok((divergence(div, &p, nominal), p, eta))
    };

    // D(p(λ)) falls from the corner divergence (λ → 0) to 0 (λ → ∞)
    let mut lo = (scale * 1e-12).ln();
    let mut hi = (scale * 1e12).ln();
    let mut iters = 0;
    while div_at(lo.exp())?.0 <= eps {
        lo -= 10.0;
        iters += 1;
        if iters > MAX_ITER {
            return Err(Error::SolverFailure("could not bracket the multiplier from below".into()));
        }
    }
    while div_at(hi.exp())?.0 > eps {
        hi += 10.0;
        iters += 1;
        if iters > MAX_ITER {
            return Err(Error::SolverFailure("could not bracket the multiplier from above".into()));
        }
    }
    for _ in 0..OUTER_STEPS {
        let mid = 0.5 * (lo + hi);
        if div_at(mid.exp())?.0 > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // the upper end stays feasible, so its value bounds the true minimum from above
    let lambda = hi.exp();
    let (_, weights, eta) = div_at(lambda)?;
    let value: f64 = weights.iter().zip(rewards).map(|(p, r)| p * r).sum();
    let dual = r_min + eta
        - lambda * eps
        - lambda
            * nominal
                .iter()
                .zip(&gaps)
                .map(|(&p, &g)| p * div.conjugate((eta - g) / lambda))
                .sum::<f64>();
    Ok(InnerSolution {
        value,
        weights,
        duality_gap: value - dual,
    })
}

/// Primal weights `pᵢ = p̂ᵢ (φ*)'((η − gᵢ)/λ)` with `η` chosen so they sum to
/// one. Returns the weights and `η` (relative to the minimum reward).
fn tilt(div: Divergence, gaps: &[f64], nominal: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    match div {
        Divergence::Kl => {
            let z: Vec<f64> = nominal.iter().zip(gaps).map(|(p, g)| p * (-g / lambda).exp()).collect();
            let total: f64 = z.iter().sum();
            if !(total > 0.0) {
                return Err(Error::SolverFailure("tilted weights vanished".into()));
            }
            Ok((z.iter().map(|v| v / total).collect(), -lambda * total.ln()))
        }
        Divergence::ChiSq => {
            let mass = |eta: f64| -> f64 {
                nominal
                    .iter()
                    .zip(gaps)
                    .map(|(p, g)| p * (1.0 + (eta - g) / (2.0 * lambda)).max(0.0))
                    .sum()
            };
            let (mut lo, mut hi) = (-2.0 * lambda, gaps.iter().copied().fold(0.0, f64::max));
            for _ in 0..INNER_STEPS {
                let mid = 0.5 * (lo + hi);
                if mass(mid) < 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let eta = hi;
            let w: Vec<f64> = nominal
                .iter()
                .zip(gaps)
                .map(|(p, g)| p * (1.0 + (eta - g) / (2.0 * lambda)).max(0.0))
                .collect();
            let total: f64 = w.iter().sum();
            Ok((w.iter().map(|v| v / total).collect(), eta))
        }
        Divergence::Hellinger => {
            // with θ = λ − η: pᵢ = p̂ᵢ λ² / (θ + gᵢ)², decreasing in θ > 0
            let mass = |theta: f64| -> f64 {
                nominal
                    .iter()
                    .zip(gaps)
                    .map(|(p, g)| p * lambda * lambda / ((theta + g) * (theta + g)))
                    .sum()
            };
            let (mut lo, mut hi) = ((lambda * 1e-30).ln(), (lambda * 1e30).ln());
            for _ in 0..INNER_STEPS {
                let mid = 0.5 * (lo + hi);
                if mass(mid.exp()) > 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let theta = (0.5 * (lo + hi)).exp();
            let w: Vec<f64> = nominal
                .iter()
                .zip(gaps)
                .map(|(p, g)| p * lambda * lambda / ((theta + g) * (theta + g)))
                .collect();
            let total: f64 = w.iter().sum();
            Ok((w.iter().map(|v| v / total).collect(), lambda - theta))
        }
    }
}

/// Worst-case order and the perceived distribution at that order.
#[derive(Debug, Clone, PartialEq)]
pub struct DroDecision {
    pub order: f64,
    pub worst: StepCdf,
    pub value: f64,
    pub duality_gap: f64,
    /// Whether the worst-case CDF had to be adjusted to reproduce the order.
    pub projected: bool,
}

/// `max_q min_{F ∈ ball} E_F[s·min(q, ξ) − wq]` over `q ∈ {0} ∪ atoms ∪ {q̄}`.
pub fn dro_worst_case(
    empirical: &StepCdf,
    div: Divergence,
    eps: f64,
    w: f64,
    mp: &MarketParams,
    cap: Option<f64>,
) -> Result<DroDecision> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius must be non-negative, got {eps}")));
    }
    if !(w >= 0.0) {
        return Err(Error::InvalidPrice(w));
    }
    let atoms = empirical.support();
    let nominal = empirical.masses();
    if eps == 0.0 {
        let f = Cdf::Step(empirical.clone());
        let mut order = best_response_order(&f, w, mp)?;
        if let Some(cap) = cap {
            order = order.min(cap);
        }
        let worst = if order == best_response_order(&f, w, mp)? {
            empirical.clone()
        } else {
            consistent_projection(empirical, order, w, mp)?
        };
        let value = atoms.iter().zip(&nominal).map(|(x, p)| p * (mp.s * order.min(*x) - w * order)).sum();
        return Ok(DroDecision {
            order,
            projected: &worst != empirical,
            worst,
            value,
            duality_gap: 0.0,
        });
    }

    let mut candidates: Vec<f64> = std::iter::once(0.0).chain(atoms.iter().copied()).collect();
    if let Some(cap) = cap {
        candidates.retain(|&q| q <= cap);
        if cap < empirical.max_support() {
            candidates.push(cap);
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let scale = mp.s * empirical.max_support().max(1e-300);
    let mut best: Option<(f64, InnerSolution)> = None;
    for &q in &candidates {
        let rewards: Vec<f64> = atoms.iter().map(|&x| mp.s * q.min(x) - w * q).collect();
        let sol = inner_worst_case(div, &rewards, &nominal, eps)?;
        // smallest maximiser, ties judged relative to the profit scale
        let better = match &best {
            None => true,
            Some((_, b)) => sol.value > b.value + 1e-12 * scale,
        };
        if better {
            best = Some((q, sol));
        }
    }
    let (order, sol) = best.expect("candidate set contains zero");
    let positive: Vec<(f64, f64)> = atoms
        .iter()
        .zip(&sol.weights)
        .filter(|(_, p)| **p > 0.0)
        .map(|(x, p)| (*x, *p))
        .collect();
    let (support, weights): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
    let raw = StepCdf::from_weights(support, &weights)?;
    let implied = best_response_order(&Cdf::Step(raw.clone()), w, mp)?;
    let (worst, projected) = if implied == order {
        (raw, false)
    } else {
        (consistent_projection(&raw, order, w, mp)?, true)
    };
    Ok(DroDecision {
        order,
        worst,
        value: sol.value,
        duality_gap: sol.duality_gap,
        projected,
    })
}

/// Nearest CDF (in Kolmogorov distance) to `f` whose best response at `w` is
/// exactly `order`: clip below `θ = 1 − w/s` left of the order and lift to `θ`
/// from the order on.
pub fn consistent_projection(f: &StepCdf, order: f64, w: f64, mp: &MarketParams) -> Result<StepCdf> {
    let theta = 1.0 - w / mp.s;
    let mut support: Vec<f64> = f.support().to_vec();
    if !support.contains(&order) {
        support.push(order);
        support.sort_by(f64::total_cmp);
    }
    let below = theta.next_down();
    let cum: Vec<f64> = support
        .iter()
        .map(|&x| {
            let v = f.eval(x);
            if x < order {
                v.min(below).max(0.0)
            } else {
                v.max(theta).min(1.0)
            }
        })
        .collect();
    let mut cum = cum;
    // mass above the order is all that remains when the order is the top point
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    StepCdf::new(support, cum)
}
