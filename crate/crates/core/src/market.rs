//! Demand distributions, the newsvendor best-response rule and the
//! Kolmogorov distance.
//!
//! Every distribution in the crate is a CDF on `[0, ∞)`. Two representations
//! exist: [`StepCdf`] (finitely many atoms) and [`ParametricCdf`] (a fitted
//! family with an optional order cap `q̄` at which the CDF jumps to one).
//! [`Cdf`] unifies them for the rest of the crate.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const CUM_TOLERANCE: f64 = 1e-12;
const KOLMOGOROV_GRID: usize = 10_000;

/// Right-continuous step CDF with finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    support: Vec<f64>,
    cum: Vec<f64>,
}

impl StepCdf {
    pub fn new(support: Vec<f64>, mut cum: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != cum.len() {
            return Err(Error::InvalidDistribution(format!(
                "support has {} points, cum has {}",
                support.len(),
                cum.len()
            )));
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite support point".into()));
        }
        if support.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidDistribution(
                "support must be strictly increasing".into(),
            ));
        }
        if cum.iter().any(|p| !(0.0..=1.0 + CUM_TOLERANCE).contains(p)) {
            return Err(Error::InvalidDistribution(
                "cumulative probabilities must lie in [0, 1]".into(),
            ));
        }
        if cum.windows(2).any(|p| p[0] > p[1]) {
            return Err(Error::InvalidDistribution(
                "cumulative probabilities must be non-decreasing".into(),
            ));
        }
        let last = cum.len() - 1;
        if (cum[last] - 1.0).abs() > CUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "final cumulative probability is {}, expected 1",
                cum[last]
            )));
        }
        // Pin the top exactly so that quantile level 1 is always reachable.
        cum[last] = 1.0;
        for p in cum.iter_mut() {
            *p = p.min(1.0);
        }
        Ok(Self { support, cum })
    }

    pub fn point_mass(x: f64) -> Self {
        Self {
            support: vec![x],
            cum: vec![1.0],
        }
    }

    /// Equal mass on each of `points` (which must be strictly increasing).
    pub fn uniform(points: &[f64]) -> Result<Self> {
        let n = points.len() as f64;
        let cum = (1..=points.len()).map(|i| i as f64 / n).collect();
        Self::new(points.to_vec(), cum)
    }

    /// Two-point distribution on `{0, 1}` with `P(ξ = 0) = p0`.
    pub fn bernoulli(p0: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![p0, 1.0])
    }

    /// Empirical CDF of `samples`; `None` when there are no samples.
    pub fn empirical(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut support = Vec::new();
        let mut cum = Vec::new();
        for (i, &x) in sorted.iter().enumerate() {
            if support.last() == Some(&x) {
                *cum.last_mut().unwrap() = (i + 1) as f64 / n;
            } else {
                support.push(x);
                cum.push((i + 1) as f64 / n);
            }
        }
        *cum.last_mut().unwrap() = 1.0;
        Some(Self { support, cum })
    }

    /// Builds the CDF from atom weights (need not be normalised exactly).
    pub fn from_weights(support: Vec<f64>, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution("weights must be non-negative with positive sum".into()));
        }
        let mut acc = 0.0;
        let cum = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc.min(1.0)
            })
            .collect::<Vec<_>>();
        let mut cum = cum;
        *cum.last_mut().unwrap() = 1.0;
        Self::new(support, cum)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum(&self) -> &[f64] {
        &self.cum
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Probability mass of each atom.
    pub fn masses(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cum
            .iter()
            .map(|&c| {
                let m = c - prev;
                prev = c;
                m
            })
            .collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.support.partition_point(|&s| s <= x);
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1]
        }
    }

    /// `F(x⁻)`.
    pub fn left_limit(&self, x: f64) -> f64 {
        let idx = self.support.partition_point(|&s| s < x);
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1]
        }
    }

    /// Generalised inverse `min{q ≥ 0 : F(q) ≥ level}`.
    pub fn quantile(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return 0.0;
        }
        let idx = self.cum.partition_point(|&c| c < level);
        if idx >= self.support.len() {
            // level above one cannot be met; the top atom is the closest answer
            return *self.support.last().unwrap();
        }
        self.support[idx].max(0.0)
    }

    pub fn max_support(&self) -> f64 {
        *self.support.last().unwrap()
    }

    /// The distribution on `grid` that agrees with `self` at every grid point.
    /// Requires `self(grid.last()) == 1`.
    pub fn restrict_to_grid(&self, grid: &[f64]) -> Result<Self> {
        Cdf::Step(self.clone()).restrict_to_grid(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Poisson { rate: f64 },
    Categorical { support: Vec<f64>, probs: Vec<f64> },
    Exponential { rate: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Poisson { .. } => "poisson",
            Family::Categorical { .. } => "categorical",
            Family::Exponential { .. } => "exponential",
            Family::Normal { .. } => "normal",
        }
    }
}

/// A fitted parametric CDF; jumps to one at the cap when one is set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricCdf {
    family: Family,
    cap: Option<f64>,
    // cached step form of the categorical family
    categorical: Option<StepCdf>,
}

impl ParametricCdf {
    pub fn new(family: Family, cap: Option<f64>) -> Result<Self> {
        if let Some(q) = cap {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::InvalidParameter(format!("order cap must be positive, got {q}")));
            }
        }
        let mut categorical = None;
        match &family {
            Family::Poisson { rate } | Family::Exponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidParameter(format!("rate must be positive, got {rate}")));
                }
            }
            Family::Normal { mean, sd } => {
                if !(*sd > 0.0 && sd.is_finite() && mean.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "normal needs finite mean and positive sd, got ({mean}, {sd})"
                    )));
                }
            }
            Family::Categorical { support, probs } => {
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > CUM_TOLERANCE || probs.iter().any(|p| *p < 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "categorical probabilities must be non-negative and sum to 1, got sum {total}"
                    )));
                }
                let mut acc = 0.0;
                let cum = probs
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                categorical = Some(StepCdf::new(support.clone(), cum)?);
            }
        }
        Ok(Self {
            family,
            cap,
            categorical,
        })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    fn family_cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Poisson { rate } => poisson_cdf(*rate, x.floor() as u64),
            Family::Categorical { .. } => self.categorical.as_ref().unwrap().eval(x),
            Family::Exponential { rate } => -(-rate * x).exp_m1(),
            Family::Normal { mean, sd } => 0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2)),
        }
    }

    fn family_left_limit(&self, x: f64) -> f64 {
        match &self.family {
            Family::Poisson { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let k = x.ceil() as u64 - 1;
                    poisson_cdf(*rate, k)
                }
            }
            Family::Categorical { .. } => self.categorical.as_ref().unwrap().left_limit(x),
            _ => self.family_cdf(x),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.cap {
            Some(q) if x >= q => 1.0,
            _ => self.family_cdf(x),
        }
    }

    pub fn left_limit(&self, x: f64) -> f64 {
        match self.cap {
            Some(q) if x > q => 1.0,
            _ => self.family_left_limit(x),
        }
    }

    fn family_quantile(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Poisson { rate } => poisson_quantile(*rate, level, self.cap),
            Family::Categorical { .. } => self.categorical.as_ref().unwrap().quantile(level),
            Family::Exponential { rate } => {
                if level >= 1.0 {
                    f64::INFINITY
                } else {
                    -(-level).ln_1p() / rate
                }
            }
            Family::Normal { mean, sd } => {
                if level >= 1.0 {
                    f64::INFINITY
                } else {
                    (mean + sd * standard_normal_quantile(level)).max(0.0)
                }
            }
        }
    }

    /// `min(Q(level), q̄)` with `Q` the generalised inverse of the family.
    pub fn quantile(&self, level: f64) -> f64 {
        let q = self.family_quantile(level);
        match self.cap {
            Some(cap) => q.min(cap),
            None => q,
        }
    }

    /// Points in `[0, upper]` where the CDF may jump.
    fn jump_points(&self, upper: f64, out: &mut Vec<f64>) {
        match &self.family {
            Family::Poisson { .. } => {
                let top = upper.floor() as u64;
                out.extend((0..=top).map(|k| k as f64));
            }
            Family::Categorical { support, .. } => out.extend(support.iter().copied().filter(|x| *x <= upper)),
            _ => {}
        }
        if let Some(q) = self.cap {
            if q <= upper {
                out.push(q);
            }
        }
    }

    fn has_continuous_part(&self) -> bool {
        matches!(self.family, Family::Exponential { .. } | Family::Normal { .. })
    }
}

fn poisson_cdf(rate: f64, k: u64) -> f64 {
    let mut pmf = (-rate).exp();
    let mut acc = pmf;
    for i in 1..=k {
        pmf *= rate / i as f64;
        acc += pmf;
        if pmf < 1e-300 && i as f64 > rate {
            break;
        }
    }
    acc.min(1.0)
}

fn poisson_quantile(rate: f64, level: f64, cap: Option<f64>) -> f64 {
    let mut pmf = (-rate).exp();
    let mut acc = pmf;
    let mut k = 0u64;
    loop {
        if acc >= level {
            return k as f64;
        }
        if let Some(c) = cap {
            if k as f64 >= c {
                return c;
            }
        }
        k += 1;
        pmf *= rate / k as f64;
        let next = acc + pmf;
        if next == acc && k as f64 > rate {
            // cumulative sum has saturated below `level`
            return k as f64;
        }
        acc = next;
    }
}

/// Inverse of the standard normal CDF.
pub fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Either representation of a perceived or true demand distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Cdf {
    Step(StepCdf),
    Parametric(ParametricCdf),
}

impl From<StepCdf> for Cdf {
    fn from(f: StepCdf) -> Self {
        Cdf::Step(f)
    }
}

impl From<ParametricCdf> for Cdf {
    fn from(f: ParametricCdf) -> Self {
        Cdf::Parametric(f)
    }
}

impl Cdf {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Cdf::Step(f) => f.eval(x),
            Cdf::Parametric(f) => f.eval(x),
        }
    }

    pub fn left_limit(&self, x: f64) -> f64 {
        match self {
            Cdf::Step(f) => f.left_limit(x),
            Cdf::Parametric(f) => f.left_limit(x),
        }
    }

    pub fn quantile(&self, level: f64) -> f64 {
        match self {
            Cdf::Step(f) => f.quantile(level),
            Cdf::Parametric(f) => f.quantile(level),
        }
    }

    pub fn as_step(&self) -> Option<&StepCdf> {
        match self {
            Cdf::Step(f) => Some(f),
            Cdf::Parametric(_) => None,
        }
    }

    /// Step form when the distribution has finitely many atoms up to `upper`.
    pub fn to_step(&self, upper: f64) -> Option<StepCdf> {
        match self {
            Cdf::Step(f) => Some(f.clone()),
            Cdf::Parametric(p) => match p.family() {
                Family::Categorical { .. } => {
                    let mut pts = Vec::new();
                    p.jump_points(f64::INFINITY, &mut pts);
                    step_from_points(self, pts)
                }
                Family::Poisson { rate } => {
                    let top = p.cap().unwrap_or_else(|| upper.max(rate + 40.0 * rate.sqrt() + 40.0));
                    let mut pts = Vec::new();
                    p.jump_points(top, &mut pts);
                    step_from_points(self, pts)
                }
                _ => None,
            },
        }
    }

    /// Largest support point, or the cap, or `None` for unbounded families.
    pub fn upper_bound(&self) -> Option<f64> {
        match self {
            Cdf::Step(f) => Some(f.max_support()),
            Cdf::Parametric(p) => match (p.cap(), p.family()) {
                (Some(q), _) => Some(q),
                (None, Family::Categorical { support, .. }) => support.last().copied(),
                _ => None,
            },
        }
    }

    /// The distribution on `grid` matching `self` at each grid point. The last
    /// grid point must carry cumulative probability one.
    pub fn restrict_to_grid(&self, grid: &[f64]) -> Result<StepCdf> {
        let cum: Vec<f64> = grid.iter().map(|&z| self.eval(z)).collect();
        StepCdf::new(grid.to_vec(), cum)
    }

    fn jump_points(&self, upper: f64, out: &mut Vec<f64>) {
        match self {
            Cdf::Step(f) => out.extend(f.support().iter().copied().filter(|x| *x <= upper)),
            Cdf::Parametric(p) => p.jump_points(upper, out),
        }
    }

    fn has_continuous_part(&self) -> bool {
        match self {
            Cdf::Step(_) => false,
            Cdf::Parametric(p) => p.has_continuous_part(),
        }
    }
}

fn step_from_points(f: &Cdf, mut pts: Vec<f64>) -> Option<StepCdf> {
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut cum: Vec<f64> = pts.iter().map(|&x| f.eval(x)).collect();
    let last = cum.len().checked_sub(1)?;
    cum[last] = 1.0;
    StepCdf::new(pts, cum).ok()
}

/// Selling price `s`, production cost `c`, demand bound `ξ̄` and an optional
/// known discrete support `Y_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    pub s: f64,
    pub c: f64,
    pub xi_bar: f64,
    pub support: Option<Vec<f64>>,
}

impl MarketParams {
    pub fn new(s: f64, c: f64, xi_bar: f64, support: Option<Vec<f64>>) -> Result<Self> {
        if !(0.0 <= c && c < s && s.is_finite()) {
            return Err(Error::InvalidParameter(format!("need 0 <= c < s, got c={c}, s={s}")));
        }
        if !(xi_bar > 0.0 && xi_bar.is_finite()) {
            return Err(Error::InvalidParameter(format!("demand bound must be positive, got {xi_bar}")));
        }
        if let Some(y) = &support {
            if y.is_empty() || y.windows(2).any(|p| p[0] >= p[1]) || y[0] < 0.0 {
                return Err(Error::InvalidParameter(
                    "support must be non-empty, non-negative and strictly increasing".into(),
                ));
            }
            if (y[y.len() - 1] - xi_bar).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "largest support point {} must equal the demand bound {xi_bar}",
                    y[y.len() - 1]
                )));
            }
        }
        Ok(Self { s, c, xi_bar, support })
    }

    /// Market with `s = 1`, `c = 0` and Bernoulli support `{0, 1}`.
    pub fn unit_bernoulli() -> Self {
        Self::new(1.0, 0.0, 1.0, Some(vec![0.0, 1.0])).unwrap()
    }

    pub fn margin_range(&self) -> f64 {
        (self.s - self.c) * self.xi_bar
    }
}

pub fn cdf_eval(f: &Cdf, x: f64) -> f64 {
    f.eval(x)
}

/// Newsvendor order `min{q ≥ 0 : F(q) ≥ 1 − w/s}` (capped by the CDF's own cap).
pub fn best_response_order(f: &Cdf, w: f64, mp: &MarketParams) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::InvalidPrice(w));
    }
    Ok(f.quantile(1.0 - w / mp.s))
}

pub fn supplier_profit(w: f64, q: f64, mp: &MarketParams) -> f64 {
    (w - mp.c) * q
}

/// `sup_x |F(x) − G(x)|` over `[0, max(ξ̄, caps)]`.
pub fn kolmogorov_distance(f: &Cdf, g: &Cdf, mp: &MarketParams) -> f64 {
    if let (Cdf::Step(a), Cdf::Step(b)) = (f, g) {
        return step_kolmogorov(a, b);
    }
    let upper = [Some(mp.xi_bar), f.upper_bound(), g.upper_bound()]
        .into_iter()
        .flatten()
        .filter(|x| x.is_finite())
        .fold(0.0f64, f64::max);
    let gap = |x: f64| (f.eval(x) - g.eval(x)).abs();
    let left_gap = |x: f64| (f.left_limit(x) - g.left_limit(x)).abs();

    let mut best = 0.0f64;
    let mut jumps = Vec::new();
    f.jump_points(upper, &mut jumps);
    g.jump_points(upper, &mut jumps);
    for &x in &jumps {
        best = best.max(gap(x)).max(left_gap(x));
    }
    if !(f.has_continuous_part() || g.has_continuous_part()) {
        return best.max(gap(0.0));
    }

    let h = upper / KOLMOGOROV_GRID as f64;
    let values: Vec<f64> = (0..=KOLMOGOROV_GRID).map(|i| gap(i as f64 * h)).collect();
    for &v in &values {
        best = best.max(v);
    }
    // refine around the largest grid values
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    for &i in order.iter().take(4) {
        let lo = (i as f64 - 1.0).max(0.0) * h;
        let hi = ((i + 1) as f64 * h).min(upper);
        let (_, v) = golden_max(&gap, lo, hi, 1e-12 * upper.max(1.0));
        best = best.max(v);
    }
    best
}

fn step_kolmogorov(a: &StepCdf, b: &StepCdf) -> f64 {
    // merge walk over the union of support points
    let (sa, ca) = (a.support(), a.cum());
    let (sb, cb) = (b.support(), b.cum());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut best = 0.0f64;
    while i < sa.len() || j < sb.len() {
        let x = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < sa.len() && sa[i] <= x {
            fa = ca[i];
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            fb = cb[j];
            j += 1;
        }
        best = best.max((fa - fb).abs());
    }
    best
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
pub(crate) fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = (lo, f(lo));
    let fh = f(hi);
    if fh > best.1 {
        best = (hi, fh);
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bern(p0: f64) -> Cdf {
        Cdf::Step(StepCdf::bernoulli(p0).unwrap())
    }

    fn exp_market() -> MarketParams {
        MarketParams::new(2.0, 0.0, 1.0, None).unwrap()
    }

    #[test]
    fn step_eval_is_right_continuous() {
        let f = bern(0.5);
        assert_eq!(cdf_eval(&f, 0.0), 0.5);
        assert_eq!(cdf_eval(&f, 0.7), 0.5);
        assert_eq!(cdf_eval(&f, 1.0), 1.0);
        let g = Cdf::Step(StepCdf::new(vec![2.0, 5.0], vec![0.5, 1.0]).unwrap());
        assert_eq!(g.eval(1.99), 0.0);
        assert_eq!(g.left_limit(2.0), 0.0);
        assert_eq!(g.left_limit(2.5), 0.5);
    }

    #[test]
    fn capped_exponential_jumps_to_one() {
        let f = Cdf::Parametric(ParametricCdf::new(Family::Exponential { rate: 0.5 }, Some(1.0)).unwrap());
        assert_eq!(cdf_eval(&f, 1.0), 1.0);
        assert!((f.left_limit(1.0) - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed_step_cdfs() {
        assert!(StepCdf::new(vec![1.0, 0.0], vec![0.5, 1.0]).is_err());
        assert!(StepCdf::new(vec![0.0, 1.0], vec![0.6, 0.5]).is_err());
        assert!(StepCdf::new(vec![0.0, 1.0], vec![0.5, 0.9]).is_err());
        assert!(StepCdf::new(vec![0.0], vec![1.0 - 1e-13]).is_ok());
    }

    #[test]
    fn bernoulli_best_response() {
        let mp = MarketParams::unit_bernoulli();
        assert_eq!(best_response_order(&bern(0.5), 0.6, &mp).unwrap(), 0.0);
        assert_eq!(best_response_order(&bern(0.5), 0.4, &mp).unwrap(), 1.0);
        assert!(matches!(best_response_order(&bern(0.5), -0.1, &mp), Err(Error::InvalidPrice(_))));
    }

    #[test]
    fn literal_rule_orders_zero_at_selling_price() {
        // support starts above zero; at w = s the order is 0, not y₁
        let mp = MarketParams::new(1.0, 0.0, 2.0, Some(vec![1.0, 2.0])).unwrap();
        let f = Cdf::Step(StepCdf::new(vec![1.0, 2.0], vec![0.3, 1.0]).unwrap());
        assert_eq!(best_response_order(&f, 1.0, &mp).unwrap(), 0.0);
        assert_eq!(best_response_order(&f, 0.99, &mp).unwrap(), 1.0);
    }

    #[test]
    fn exponential_best_response() {
        let mp = exp_market();
        let free = Cdf::Parametric(ParametricCdf::new(Family::Exponential { rate: 0.5 }, None).unwrap());
        let q = best_response_order(&free, 1.0, &mp).unwrap();
        // e^{-λq} = w/s  =>  q = ln(s/w)/λ
        assert!((q - 2f64.ln() / 0.5).abs() < 1e-12);
        assert!((q - 1.386_294_361_119_890_6).abs() < 1e-9);
        let capped = Cdf::Parametric(ParametricCdf::new(Family::Exponential { rate: 0.5 }, Some(1.0)).unwrap());
        assert_eq!(best_response_order(&capped, 1.0, &mp).unwrap(), 1.0);
    }

    #[test]
    fn normal_and_poisson_quantiles() {
        let mp = MarketParams::new(1.0, 0.0, 10.0, None).unwrap();
        let n = Cdf::Parametric(ParametricCdf::new(Family::Normal { mean: 5.0, sd: 1.0 }, Some(10.0)).unwrap());
        // level 0.975 -> 5 + 1.959963984540054
        let q = best_response_order(&n, 0.025, &mp).unwrap();
        assert!((q - 6.959_963_984_540_054).abs() < 1e-9);
        // far left tail clamps at zero
        let low = Cdf::Parametric(ParametricCdf::new(Family::Normal { mean: -3.0, sd: 1.0 }, None).unwrap());
        assert_eq!(best_response_order(&low, 0.9, &mp).unwrap(), 0.0);

        let p = Cdf::Parametric(ParametricCdf::new(Family::Poisson { rate: 3.0 }, Some(8.0)).unwrap());
        // P(X <= 2) = 0.4232, P(X <= 3) = 0.6472
        assert_eq!(p.quantile(0.5), 3.0);
        assert_eq!(p.quantile(0.4), 2.0);
        assert_eq!(p.quantile(1.0), 8.0);
        assert!((p.eval(2.5) - 0.423_190_081_126_843_4).abs() < 1e-12);
        assert!((p.left_limit(3.0) - 0.423_190_081_126_843_4).abs() < 1e-12);
    }

    #[test]
    fn profit_arithmetic() {
        let mut mp = MarketParams::unit_bernoulli();
        assert_eq!(supplier_profit(0.75, 0.5, &mp), 0.375);
        assert_eq!(supplier_profit(mp.c, 3.0, &mp), 0.0);
        mp.c = 0.3;
        assert!((supplier_profit(0.1, 1.0, &mp) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_examples() {
        let mp = MarketParams::new(1.0, 0.0, 5.0, None).unwrap();
        assert!((kolmogorov_distance(&bern(0.5), &bern(0.4), &mp) - 0.1).abs() < 1e-15);
        assert_eq!(kolmogorov_distance(&bern(0.5), &bern(0.5), &mp), 0.0);
        let a = Cdf::Step(StepCdf::empirical(&[2.0, 5.0]).unwrap());
        let b = Cdf::Step(StepCdf::empirical(&[2.0, 5.0, 3.0]).unwrap());
        // |1/2 − 1/3| at x = 2 and |1/2 − 2/3| at x = 3
        assert!((kolmogorov_distance(&a, &b, &mp) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_parametric_matches_closed_form() {
        let mp = MarketParams::new(1.0, 0.0, 10.0, None).unwrap();
        let f = Cdf::Parametric(ParametricCdf::new(Family::Exponential { rate: 1.0 }, None).unwrap());
        let g = Cdf::Parametric(ParametricCdf::new(Family::Exponential { rate: 2.0 }, None).unwrap());
        // e^{-x} − e^{-2x} peaks at x = ln 2 with value 1/4
        assert!((kolmogorov_distance(&f, &g, &mp) - 0.25).abs() < 1e-6);
        // cap jump: left limit of the capped CDF is the relevant gap
        let capped = Cdf::Parametric(ParametricCdf::new(Family::Exponential { rate: 0.1 }, Some(2.0)).unwrap());
        let point = Cdf::Step(StepCdf::point_mass(10.0));
        let expected = 1.0;
        assert!((kolmogorov_distance(&capped, &point, &mp) - expected).abs() < 1e-12);
        let uncapped = Cdf::Parametric(ParametricCdf::new(Family::Exponential { rate: 0.1 }, None).unwrap());
        // capped vs uncapped: largest gap is at the cap, 1 − (1 − e^{-0.2})
        let gap = (-0.2f64).exp();
        assert!((kolmogorov_distance(&capped, &uncapped, &mp) - gap).abs() < 1e-9);
    }

    #[test]
    fn grid_restriction_matches_on_grid() {
        let f = StepCdf::empirical(&[0.1, 0.3, 0.31, 0.9]).unwrap();
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let g = f.restrict_to_grid(&grid).unwrap();
        assert_eq!(g.cum(), &[0.0, 0.25, 0.75, 0.75, 1.0]);
    }

    fn arb_step(max_len: usize) -> impl Strategy<Value = StepCdf> {
        prop::collection::vec((0.0f64..10.0, 0.01f64..1.0), 1..=max_len).prop_map(|pts| {
            let mut pts = pts;
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            pts.dedup_by(|a, b| a.0 == b.0);
            let support: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let weights: Vec<f64> = pts.iter().map(|p| p.1).collect();
            StepCdf::from_weights(support, &weights).unwrap()
        })
    }

    fn brute_force_order(f: &StepCdf, w: f64, s: f64) -> f64 {
        let level = 1.0 - w / s;
        std::iter::once(0.0)
            .chain(f.support().iter().copied())
            .find(|&q| f.eval(q) >= level)
            .unwrap()
    }

    proptest! {
        #[test]
        fn order_matches_linear_scan(f in arb_step(10), w in 0.0f64..1.2) {
            let mp = MarketParams::new(1.0, 0.0, 10.0, None).unwrap();
            let q = best_response_order(&Cdf::Step(f.clone()), w, &mp).unwrap();
            prop_assert_eq!(q, brute_force_order(&f, w, 1.0));
        }

        #[test]
        fn order_non_increasing_in_price(f in arb_step(10), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let mp = MarketParams::new(1.0, 0.0, 10.0, None).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let cdf = Cdf::Step(f);
            prop_assert!(best_response_order(&cdf, hi, &mp).unwrap() <= best_response_order(&cdf, lo, &mp).unwrap());
        }

        #[test]
        fn one_sided_profit_lipschitz(f in arb_step(10), a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..0.5) {
            let mp = MarketParams::new(1.0, c, 10.0, None).unwrap();
            // the bound needs the lower price at or above cost
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (lo, hi) = (c + lo * (1.0 - c), c + hi * (1.0 - c));
            let cdf = Cdf::Step(f);
            let p_hi = supplier_profit(hi, best_response_order(&cdf, hi, &mp).unwrap(), &mp);
            let p_lo = supplier_profit(lo, best_response_order(&cdf, lo, &mp).unwrap(), &mp);
            prop_assert!(p_hi - p_lo <= (hi - lo) * mp.xi_bar + 1e-12);
        }

        #[test]
        fn kolmogorov_is_a_metric(a in arb_step(6), b in arb_step(6), c in arb_step(6)) {
            let mp = MarketParams::new(1.0, 0.0, 10.0, None).unwrap();
            let (a, b, c) = (Cdf::Step(a), Cdf::Step(b), Cdf::Step(c));
            let ab = kolmogorov_distance(&a, &b, &mp);
            prop_assert_eq!(ab, kolmogorov_distance(&b, &a, &mp));
            prop_assert!(ab <= kolmogorov_distance(&a, &c, &mp) + kolmogorov_distance(&c, &b, &mp) + 1e-12);
            prop_assert_eq!(kolmogorov_distance(&a, &a, &mp), 0.0);
        }
    }
}
