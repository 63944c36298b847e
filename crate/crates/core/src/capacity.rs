//! Feedback-capacity lower bounds for parallel colored Gaussian channels.
//!
//! A design picks per-eigenchannel powers `P_l ≥ 0`. The plant is
//! `A = U diag(±a_l) U'` with `a_l = sqrt(1 + P_l / V_l)`, where `V = U diag(V_l) U'`
//! is the innovation covariance, and `C` is chosen so that the whitened
//! output matrix is the identity. The Riccati solution is then
//! `P = U diag(P_l) U'` and the scheme achieves `sum_l log2 a_l` bits per
//! channel use at transmit power `tr(C P C')`.
//!
//! Because column `l` of `C U` is the shaping-filter gain at `±a_l` applied
//! to `u_l`, the power splits into per-channel costs
//! `cost_l(a) = ‖M(±a) u_l‖² (a² - 1) V_l`. All optimizers below work on
//! these one-dimensional cost curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{self, Modal};
use crate::linalg::{self, Mat, Vector};
use crate::noise::ArmaNoise;
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// Which branch(es) of `Λ = ±diag(a_l)` an optimizer may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SignPolicy {
    #[default]
    #[serde(rename = "auto")]
    Auto,
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl SignPolicy {
    pub fn candidates(self) -> &'static [Sign] {
        match self {
            SignPolicy::Auto => &[Sign::Plus, Sign::Minus],
            SignPolicy::Plus => &[Sign::Plus],
            SignPolicy::Minus => &[Sign::Minus],
        }
    }
}

impl std::str::FromStr for SignPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SignPolicy::Auto),
            "+" | "plus" => Ok(SignPolicy::Plus),
            "-" | "minus" => Ok(SignPolicy::Minus),
            other => Err(Error::Config(format!(
                "sign policy must be auto, + or -, got {other:?}"
            ))),
        }
    }
}

/// Orthogonal eigenbasis of the innovation covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenbasis {
    pub vectors: Mat,
    pub variances: Vec<f64>,
}

impl Eigenbasis {
    /// Coordinate axes in their given order for a diagonal covariance,
    /// otherwise the symmetric eigendecomposition (descending variances).
    pub fn of(noise: &ArmaNoise) -> Result<Self> {
        let cov = noise.innovation_cov();
        if linalg::is_diagonal(cov) {
            let n = cov.nrows();
            return Ok(Self {
                vectors: Mat::identity(n, n),
                variances: cov.diagonal().iter().copied().collect(),
            });
        }
        let eig = linalg::sym_eig(cov)?;
        Ok(Self {
            vectors: eig.vectors,
            variances: eig.values.iter().copied().collect(),
        })
    }

    /// A caller-supplied basis; it must diagonalize `noise`'s covariance.
    pub fn custom(noise: &ArmaNoise, vectors: Mat) -> Result<Self> {
        let n = noise.dim();
        if vectors.shape() != (n, n) {
            return Err(Error::Dimension(format!("basis must be {n}x{n}")));
        }
        let orth = linalg::inf_norm(&(&vectors.transpose() * &vectors - Mat::identity(n, n)));
        if orth > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "basis is not orthogonal (‖U'U - I‖ = {orth:.3e})"
            )));
        }
        let projected = vectors.transpose() * noise.innovation_cov() * &vectors;
        let off = linalg::inf_norm(&(&projected - Mat::from_diagonal(&projected.diagonal())));
        if off > 1e-9 * (1.0 + linalg::inf_norm(&projected)) {
            return Err(Error::InvalidArgument(
                "basis does not diagonalize the innovation covariance".into(),
            ));
        }
        Ok(Self {
            variances: projected.diagonal().iter().copied().collect(),
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }
}

/// Per-eigenchannel power allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub powers: Vec<f64>,
    pub variances: Vec<f64>,
    /// `a_l = sqrt(1 + P_l / V_l)`.
    pub gains: Vec<f64>,
    pub signs: Vec<Sign>,
    pub rate_bits: f64,
}

impl Allocation {
    pub fn new(powers: Vec<f64>, variances: Vec<f64>, signs: Vec<Sign>) -> Result<Self> {
        if powers.len() != variances.len() || signs.len() != powers.len() {
            return Err(Error::Dimension(format!(
                "{} powers, {} variances, {} signs",
                powers.len(),
                variances.len(),
                signs.len()
            )));
        }
        if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "channel powers must be finite and nonnegative, got {p}"
            )));
        }
        if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "innovation variances must be positive, got {v}"
            )));
        }
        let gains: Vec<f64> = powers
            .iter()
            .zip(&variances)
            .map(|(p, v)| (1.0 + p / v).sqrt())
            .collect();
        let mut out = Self {
            powers,
            variances,
            gains,
            signs,
            rate_bits: 0.0,
        };
        out.rate_bits = out.rate_from_powers();
        Ok(out)
    }

    /// From gains `a_l ≥ 1`; powers follow as `(a_l² - 1) V_l`.
    pub fn from_gains(gains: &[f64], variances: Vec<f64>, signs: Vec<Sign>) -> Result<Self> {
        let powers = gains
            .iter()
            .zip(&variances)
            .map(|(a, v)| ((a * a - 1.0) * v).max(0.0))
            .collect();
        Self::new(powers, variances, signs)
    }

    pub fn rate_from_powers(&self) -> f64 {
        self.powers
            .iter()
            .zip(&self.variances)
            .map(|(p, v)| 0.5 * (1.0 + p / v).log2())
            .sum()
    }

    pub fn rate_from_gains(&self) -> f64 {
        self.gains.iter().map(|a| a.log2()).sum()
    }

    /// Signed plant eigenvalues `±a_l`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.gains
            .iter()
            .zip(&self.signs)
            .map(|(a, s)| s.factor() * a)
            .collect()
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// A synthesized plant/observer pair realizing an allocation.
#[derive(Debug, Clone)]
pub struct ChannelDesign {
    pub a: Mat,
    pub c: Mat,
    /// Steady-state error covariance `U diag(P_l) U'`.
    pub p: Mat,
    /// Observer gain `A P (P + V)^-1`.
    pub gain: Mat,
    /// Whitened output matrix; the identity up to rounding.
    pub chat: Mat,
    pub basis: Eigenbasis,
    pub allocation: Allocation,
    /// `tr(C P C')`.
    pub transmit_power: f64,
    /// Relative residual of `P = A P A' - A P (P + V)^-1 P A'`.
    pub are_residual: f64,
}

/// Relative residual of the identity-output Riccati equation
/// `P = A P A' - A P (P + V)^-1 P A'`.
pub fn identity_are_residual(a: &Mat, p: &Mat, v: &Mat) -> Result<f64> {
    let n = a.nrows();
    let ap = a * p;
    let correction = &ap * linalg::solve(&(p + v), &ap.transpose())?;
    let residual = p - &ap * a.transpose() + correction;
    let _ = n;
    Ok(linalg::inf_norm(&residual) / (1.0 + linalg::inf_norm(p)))
}

pub fn build_design(noise: &ArmaNoise, powers: &[f64], signs: &[Sign]) -> Result<ChannelDesign> {
    build_design_in_basis(noise, Eigenbasis::of(noise)?, powers, signs)
}

pub fn build_design_in_basis(
    noise: &ArmaNoise,
    basis: Eigenbasis,
    powers: &[f64],
    signs: &[Sign],
) -> Result<ChannelDesign> {
    noise.ensure_valid()?;
    if basis.dim() != noise.dim() {
        return Err(Error::Dimension("basis and noise dimensions differ".into()));
    }
    if powers.iter().all(|&p| p == 0.0) {
        return Err(Error::InvalidArgument(
            "allocation is identically zero; the Riccati solution would be P = 0".into(),
        ));
    }
    let allocation = Allocation::new(powers.to_vec(), basis.variances.clone(), signs.to_vec())?;
    let u = &basis.vectors;
    let lambda = allocation.eigenvalues();
    let modal = Modal::new(u.clone(), lambda.clone())?;
    let a = u * Mat::from_diagonal(&Vector::from_column_slice(&lambda)) * u.transpose();
    let c = kalman::design_c_for_identity(&modal, noise)?;
    let chat = kalman::compute_chat(&modal, &c, noise)?;
    let p = linalg::symmetrize(
        &(u * Mat::from_diagonal(&Vector::from_column_slice(&allocation.powers)) * u.transpose()),
    );
    let v = noise.innovation_cov();
    let are_residual = identity_are_residual(&a, &p, v)?;
    if are_residual > tol::ARE_CHECK_TOL {
        return Err(Error::Internal(format!(
            "closed-form Riccati solution has relative residual {are_residual:.3e}"
        )));
    }
    let ap = &a * &p;
    let gain = linalg::solve(&(&p + v).transpose(), &ap.transpose())?.transpose();
    let transmit_power = (&c * &p * c.transpose()).trace();
    Ok(ChannelDesign {
        a,
        c,
        p,
        gain,
        chat,
        basis,
        allocation,
        transmit_power,
        are_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Waterfill,
    Independent1d,
    GeneralSearch,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Waterfill => "waterfill",
            Method::Independent1d => "independent_1d",
            Method::GeneralSearch => "general_search",
        })
    }
}

/// Summary of how an optimizer reached its answer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    /// Rate reached from every start, in start order.
    pub start_rates: Vec<f64>,
    pub best_start: usize,
    /// `|tr(C P C') - budget| / budget` of the returned design.
    pub budget_residual: f64,
    /// Water level, when water-filling was used.
    pub water_level: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub lower_bound_bits: f64,
    pub design: ChannelDesign,
    pub budget: f64,
    pub method: Method,
    pub trace: SearchTrace,
}

fn check_budget(budget: f64) -> Result<()> {
    if budget.is_finite() && budget > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument("budget must be positive".into()))
    }
}

fn finish(
    noise: &ArmaNoise,
    basis: Eigenbasis,
    allocation: &Allocation,
    budget: f64,
    method: Method,
    mut trace: SearchTrace,
) -> Result<CapacityResult> {
    let design = build_design_in_basis(noise, basis, &allocation.powers, &allocation.signs)?;
    trace.budget_residual = (design.transmit_power - budget).abs() / budget;
    if trace.budget_residual > tol::POW_TOL {
        trace.notes.push(format!(
            "transmit power {} misses the budget by {:.3e} (relative)",
            design.transmit_power, trace.budget_residual
        ));
    }
    Ok(CapacityResult {
        lower_bound_bits: design.allocation.rate_bits,
        design,
        budget,
        method,
        trace,
    })
}

/// Water-filling solution.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    pub level: f64,
    pub allocation: Allocation,
}

/// Classical water-filling `P_l = max(0, ζ - V_l)` with `sum P_l = budget`.
///
/// The active set is located by bisection on the water level; `ζ` is then
/// computed exactly from the active channels.
pub fn waterfill(variances: &[f64], budget: f64) -> Result<WaterFill> {
    check_budget(budget)?;
    if variances.is_empty() {
        return Err(Error::InvalidArgument("no channels to fill".into()));
    }
    if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "noise variances must be positive, got {v}"
        )));
    }
    let poured = |level: f64| variances.iter().map(|v| (level - v).max(0.0)).sum::<f64>();
    let floor = variances.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (floor, floor + budget);
    while hi - lo > tol::BISECT_TOL * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if poured(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let guess = 0.5 * (lo + hi);
    let active: Vec<f64> = variances.iter().copied().filter(|&v| v < guess).collect();
    let level = (budget + active.iter().sum::<f64>()) / active.len() as f64;
    let powers = variances.iter().map(|v| (level - v).max(0.0)).collect();
    Ok(WaterFill {
        level,
        allocation: Allocation::new(powers, variances.to_vec(), vec![Sign::Plus; variances.len()])?,
    })
}

/// White noise: water-filling over the eigenvalues of the innovation covariance.
pub fn solve_waterfill(noise: &ArmaNoise, budget: f64, policy: SignPolicy) -> Result<CapacityResult> {
    check_budget(budget)?;
    noise.ensure_valid()?;
    if !noise.is_white() {
        return Err(Error::InvalidArgument(
            "water-filling applies to white noise only".into(),
        ));
    }
    let basis = Eigenbasis::of(noise)?;
    let wf = waterfill(&basis.variances, budget)?;
    let sign = policy.candidates()[0];
    let allocation = Allocation::new(
        wf.allocation.powers.clone(),
        basis.variances.clone(),
        vec![sign; basis.dim()],
    )?;
    let trace = SearchTrace {
        start_rates: vec![allocation.rate_bits],
        water_level: Some(wf.level),
        ..SearchTrace::default()
    };
    finish(noise, basis, &allocation, budget, Method::Waterfill, trace)
}

#[derive(Debug, Clone)]
enum Weight {
    Scalar { ar: Vec<f64>, ma: Vec<f64> },
    Matrix { noise: ArmaNoise, direction: Vector },
}

impl Weight {
    /// Squared shaping gain at the real point `x`, `|x| ≥ 1`.
    fn at(&self, x: f64) -> f64 {
        match self {
            Weight::Scalar { ar, ma } => {
                let inv = 1.0 / x;
                let mut power = inv;
                let (mut den, mut num) = (1.0, 1.0);
                for i in 0..ar.len().max(ma.len()) {
                    den -= ar.get(i).copied().unwrap_or(0.0) * power;
                    num += ma.get(i).copied().unwrap_or(0.0) * power;
                    power *= inv;
                }
                (num / den).powi(2)
            }
            Weight::Matrix { noise, direction } => match noise.shaping_gain(x) {
                Ok(m) => (m * direction).norm_squared(),
                Err(_) => f64::INFINITY,
            },
        }
    }

    /// Lower bound `1/9` on the weight holds for `|x| ≥ this radius`.
    fn safe_radius(&self) -> f64 {
        let spread = match self {
            Weight::Scalar { ar, ma } => ar.iter().chain(ma).map(|c| c.abs()).sum::<f64>(),
            Weight::Matrix { noise, .. } => noise.ar().iter().chain(noise.ma()).map(|m| m.norm()).sum(),
        };
        2.0 * (1.0 + spread)
    }
}

/// Power cost of one eigenchannel as a function of its gain `a ≥ 1`.
#[derive(Debug, Clone)]
struct ChannelCost {
    variance: f64,
    weight: Weight,
    signs: Vec<Sign>,
}

impl ChannelCost {
    fn cost(&self, a: f64, sign: Sign) -> f64 {
        self.weight.at(sign.factor() * a) * (a * a - 1.0) * self.variance
    }

    /// Cheapest allowed sign at gain `a`; ties go to the first candidate.
    fn min_cost(&self, a: f64) -> (f64, Sign) {
        let mut best = (f64::INFINITY, self.signs[0]);
        for &s in &self.signs {
            let c = self.cost(a, s);
            if c < best.0 {
                best = (c, s);
            }
        }
        best
    }
}

const CURVE_POINTS: usize = 512;

/// Tabulated cost curve on `[1, a_max]`, where `a_max` is past the last
/// point at which the cost can equal the budget it was built for.
#[derive(Debug, Clone)]
struct CostCurve {
    channel: ChannelCost,
    grid: Vec<f64>,
    costs: Vec<f64>,
    /// `suffix_min[k] = min(costs[k..])`.
    suffix_min: Vec<f64>,
}

impl CostCurve {
    fn new(channel: ChannelCost, budget: f64) -> Self {
        let a_max = 1.01
            * channel
                .weight
                .safe_radius()
                .max((1.0 + 9.0 * budget / channel.variance).sqrt());
        let grid: Vec<f64> = (0..=CURVE_POINTS)
            .map(|k| {
                let t = k as f64 / CURVE_POINTS as f64;
                1.0 + (a_max - 1.0) * t * t
            })
            .collect();
        let costs: Vec<f64> = grid.iter().map(|&a| channel.min_cost(a).0).collect();
        let mut suffix_min = costs.clone();
        for k in (0..suffix_min.len() - 1).rev() {
            suffix_min[k] = suffix_min[k].min(suffix_min[k + 1]);
        }
        Self {
            channel,
            grid,
            costs,
            suffix_min,
        }
    }

    /// Largest gain whose (cheapest-sign) cost equals `budget`.
    fn max_gain(&self, budget: f64) -> (f64, Sign) {
        if budget <= 0.0 {
            return (1.0, self.channel.signs[0]);
        }
        // Largest grid index with cost ≤ budget; suffix_min is nondecreasing.
        let k = self.suffix_min.partition_point(|&m| m <= budget).saturating_sub(1);
        if k + 1 >= self.grid.len() {
            let a = *self.grid.last().unwrap();
            return (a, self.channel.min_cost(a).1);
        }
        let (mut lo, mut hi) = (self.grid[k], self.grid[k + 1]);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.channel.min_cost(mid).0 <= budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, self.channel.min_cost(lo).1)
    }

    /// Maximizer of `ln a - mu cost(a)` over the tabulated range.
    fn best_response(&self, mu: f64) -> f64 {
        let score = |a: f64, c: f64| a.ln() - mu * c;
        let k = (0..self.grid.len())
            .max_by(|&i, &j| {
                score(self.grid[i], self.costs[i]).total_cmp(&score(self.grid[j], self.costs[j]))
            })
            .unwrap_or(0);
        let lo = self.grid[k.saturating_sub(1)];
        let hi = self.grid[(k + 1).min(self.grid.len() - 1)];
        let f = |a: f64| score(a, self.channel.min_cost(a).0);
        let a = golden_max(f, lo, hi);
        if f(a) >= score(self.grid[k], self.costs[k]) {
            a
        } else {
            self.grid[k]
        }
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..tol::GOLDEN_MAX_ITER {
        if hi - lo <= tol::BISECT_TOL {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Budget split across channels with the gains it buys.
#[derive(Debug, Clone)]
struct Split {
    budgets: Vec<f64>,
    gains: Vec<f64>,
    signs: Vec<Sign>,
}

impl Split {
    fn from_budgets(curves: &[CostCurve], budgets: Vec<f64>) -> Self {
        let (gains, signs) = curves
            .iter()
            .zip(&budgets)
            .map(|(c, &b)| c.max_gain(b))
            .unzip();
        Self {
            budgets,
            gains,
            signs,
        }
    }

    fn log_rate(&self) -> f64 {
        self.gains.iter().map(|a| a.ln()).sum()
    }

    fn rate_bits(&self) -> f64 {
        self.log_rate() / std::f64::consts::LN_2
    }
}

/// Pairwise budget transfers between channels, keeping the total fixed,
/// accepted whenever they raise `sum ln a_l`. Step sizes halve down to
/// a relative `1e-13` of the budget.
fn coordinate_ascent(curves: &[CostCurve], start: Split, budget: f64) -> Split {
    let n = curves.len();
    let mut best = start;
    if n < 2 {
        return best;
    }
    let mut step = 0.25 * budget;
    while step > 1e-13 * budget {
        let mut improved = true;
        while improved {
            improved = false;
            for i in 0..n {
                for j in 0..n {
                    if i == j || best.budgets[j] <= 0.0 {
                        continue;
                    }
                    let delta = step.min(best.budgets[j]);
                    let bi = best.budgets[i] + delta;
                    let bj = if delta >= best.budgets[j] { 0.0 } else { best.budgets[j] - delta };
                    let (ai, si) = curves[i].max_gain(bi);
                    let (aj, sj) = curves[j].max_gain(bj);
                    let gain = ai.ln() + aj.ln() - best.gains[i].ln() - best.gains[j].ln();
                    if gain > 1e-15 {
                        best.budgets[i] = bi;
                        best.budgets[j] = bj;
                        best.gains[i] = ai;
                        best.gains[j] = aj;
                        best.signs[i] = si;
                        best.signs[j] = sj;
                        improved = true;
                    }
                }
            }
        }
        step *= 0.5;
    }
    best
}

fn split_to_allocation(split: &Split, variances: &[f64]) -> Result<Allocation> {
    Allocation::from_gains(&split.gains, variances.to_vec(), split.signs.clone())
}

fn check_less_power_never_wins(curves: &[CostCurve], split: &Split, trace: &mut SearchTrace) {
    for fraction in [0.5, 0.9, 0.99] {
        let lower = Split::from_budgets(
            curves,
            split.budgets.iter().map(|b| b * fraction).collect(),
        );
        if lower.log_rate() > split.log_rate() + 1e-12 {
            trace.notes.push(format!(
                "spending {fraction} of the budget scored higher ({} vs {} bits)",
                lower.rate_bits(),
                split.rate_bits()
            ));
        }
    }
}

/// Independent channels (all coefficient matrices and the innovation
/// covariance diagonal), each with its own sign branch.
///
/// Lagrangian relaxation: for a multiplier `mu` every channel maximizes
/// `ln a - mu cost(a)`; `mu` is bisected until the total cost meets the
/// budget, leftover budget from a cost jump goes to the channel that gains
/// most, and pairwise transfers polish the split.
pub fn solve_independent(noise: &ArmaNoise, budget: f64, policy: SignPolicy) -> Result<CapacityResult> {
    check_budget(budget)?;
    noise.ensure_valid()?;
    if !noise.is_diagonal() {
        return Err(Error::InvalidArgument(
            "independent-channel solver needs diagonal coefficient matrices".into(),
        ));
    }
    let basis = Eigenbasis::of(noise)?;
    let curves: Vec<CostCurve> = (0..noise.dim())
        .map(|l| {
            let (ar, ma, variance) = noise.channel_coefficients(l);
            CostCurve::new(
                ChannelCost {
                    variance,
                    weight: Weight::Scalar { ar, ma },
                    signs: policy.candidates().to_vec(),
                },
                budget,
            )
        })
        .collect();

    let total_at = |mu: f64| -> (f64, Vec<f64>) {
        let gains: Vec<f64> = curves.iter().map(|c| c.best_response(mu)).collect();
        let total = curves
            .iter()
            .zip(&gains)
            .map(|(c, &a)| c.channel.min_cost(a).0)
            .sum();
        (total, gains)
    };
    // total cost is nonincreasing in mu
    let (mut lo, mut hi) = (1e-12_f64, 1.0_f64);
    while total_at(hi).0 > budget {
        hi *= 10.0;
    }
    while total_at(lo).0 < budget && lo > 1e-300 {
        lo *= 1e-3;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if total_at(mid).0 > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let (_, gains) = total_at(hi);
    let budgets: Vec<f64> = curves
        .iter()
        .zip(&gains)
        .map(|(c, &a)| c.channel.min_cost(a).0)
        .collect();
    let mut split = Split::from_budgets(&curves, budgets);
    let leftover = budget - split.budgets.iter().sum::<f64>();
    if leftover > 0.0 {
        let mut best: Option<Split> = None;
        for l in 0..curves.len() {
            let mut trial = split.budgets.clone();
            trial[l] += leftover;
            let cand = Split::from_budgets(&curves, trial);
            if best.as_ref().is_none_or(|b| cand.log_rate() > b.log_rate()) {
                best = Some(cand);
            }
        }
        split = best.unwrap_or(split);
    }
    let lagrangian_rate = split.rate_bits();
    let split = coordinate_ascent(&curves, split, budget);

    let mut trace = SearchTrace {
        start_rates: vec![lagrangian_rate],
        ..SearchTrace::default()
    };
    check_less_power_never_wins(&curves, &split, &mut trace);
    let allocation = split_to_allocation(&split, &basis.variances)?;
    finish(noise, basis, &allocation, budget, Method::Independent1d, trace)
}

/// Single-channel bound: the largest `a` whose cost meets the budget on
/// either allowed sign branch.
pub fn scalar_bound(
    ar: &[f64],
    ma: &[f64],
    variance: f64,
    budget: f64,
    policy: SignPolicy,
) -> Result<CapacityResult> {
    check_budget(budget)?;
    let noise = ArmaNoise::scalar(ar, ma, variance)?;
    noise.ensure_valid()?;
    let mut best: Option<(f64, Sign)> = None;
    let mut start_rates = Vec::new();
    for &sign in policy.candidates() {
        let curve = CostCurve::new(
            ChannelCost {
                variance,
                weight: Weight::Scalar {
                    ar: ar.to_vec(),
                    ma: ma.to_vec(),
                },
                signs: vec![sign],
            },
            budget,
        );
        let (a, _) = curve.max_gain(budget);
        start_rates.push(a.log2());
        if best.is_none_or(|(b, _)| a > b) {
            best = Some((a, sign));
        }
    }
    let (a, sign) = best.expect("at least one sign candidate");
    let allocation = Allocation::from_gains(&[a], vec![variance], vec![sign])?;
    let trace = SearchTrace {
        best_start: start_rates
            .iter()
            .position(|&r| r == a.log2())
            .unwrap_or(0),
        start_rates,
        ..SearchTrace::default()
    };
    finish(&noise, Eigenbasis::of(&noise)?, &allocation, budget, Method::Independent1d, trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchOptions {
    pub sign: SignPolicy,
    /// Extra random starting splits on top of the deterministic ones.
    pub restarts: usize,
    pub seed: u64,
}

/// General (jointly colored) noise with one global sign branch.
///
/// Multi-start projected coordinate ascent on the split of the budget
/// across eigenchannels. Each channel turns its share into the largest
/// gain its cost curve allows, so every iterate meets the budget exactly.
/// Starts: water-filling, uniform, one spike per channel, then
/// `restarts` random splits; every start runs under each allowed sign.
pub fn solve_general(noise: &ArmaNoise, budget: f64, opts: SearchOptions) -> Result<CapacityResult> {
    let basis = Eigenbasis::of(noise)?;
    solve_general_in_basis(noise, basis, budget, opts)
}

pub fn solve_general_in_basis(
    noise: &ArmaNoise,
    basis: Eigenbasis,
    budget: f64,
    opts: SearchOptions,
) -> Result<CapacityResult> {
    check_budget(budget)?;
    noise.ensure_valid()?;
    let n = noise.dim();
    if basis.dim() != n {
        return Err(Error::Dimension("basis and noise dimensions differ".into()));
    }

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let wf = waterfill(&basis.variances, budget)?;
    starts.push(wf.allocation.powers.clone());
    starts.push(vec![budget / n as f64; n]);
    for l in 0..n {
        let mut spike = vec![0.0; n];
        spike[l] = budget;
        starts.push(spike);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = raw.iter().sum();
        starts.push(raw.iter().map(|x| budget * x / total).collect());
    }

    let mut trace = SearchTrace::default();
    let mut best: Option<(Split, Vec<CostCurve>)> = None;
    for &sign in opts.sign.candidates() {
        let curves: Vec<CostCurve> = (0..n)
            .map(|l| {
                CostCurve::new(
                    ChannelCost {
                        variance: basis.variances[l],
                        weight: Weight::Matrix {
                            noise: noise.clone(),
                            direction: basis.vectors.column(l).into_owned(),
                        },
                        signs: vec![sign],
                    },
                    budget,
                )
            })
            .collect();
        for start in &starts {
            // Convert a power split into the cost shares it implies, then
            // rescale the shares onto the budget.
            let shares: Vec<f64> = start
                .iter()
                .zip(&curves)
                .zip(&basis.variances)
                .map(|((p, c), v)| c.channel.cost((1.0 + p / v).sqrt(), sign))
                .collect();
            let total: f64 = shares.iter().sum();
            let budgets = shares.iter().map(|s| budget * s / total).collect();
            let split = coordinate_ascent(&curves, Split::from_budgets(&curves, budgets), budget);
            let rate = split.rate_bits();
            trace.start_rates.push(rate);
            let better = match &best {
                None => true,
                Some((b, _)) => {
                    let (r, rb) = (split.log_rate(), b.log_rate());
                    r > rb + 1e-14
                        || ((r - rb).abs() <= 1e-14 && lexicographic_less(&split.gains, &b.gains))
                }
            };
            if better {
                trace.best_start = trace.start_rates.len() - 1;
                best = Some((split, curves.clone()));
            }
        }
    }
    let (split, curves) = best.expect("at least one start");
    if trace.start_rates.iter().any(|&r| r > split.rate_bits() + 1e-12) {
        trace.notes.push("best start was not retained".into());
    }
    check_less_power_never_wins(&curves, &split, &mut trace);
    let allocation = split_to_allocation(&split, &basis.variances)?;
    finish(noise, basis, &allocation, budget, Method::GeneralSearch, trace)
}

fn lexicographic_less(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .find(|(x, y)| x != y)
        .is_some_and(|(x, y)| x < y)
}

/// Pick the solver by noise structure: water-filling for white noise,
/// per-channel search for independent channels, general search otherwise.
pub fn solve(noise: &ArmaNoise, budget: f64, opts: SearchOptions) -> Result<CapacityResult> {
    check_budget(budget)?;
    noise.ensure_valid()?;
    let result = if noise.is_white() {
        solve_waterfill(noise, budget, opts.sign)
    } else if noise.is_diagonal() {
        solve_independent(noise, budget, opts.sign)
    } else {
        solve_general(noise, budget, opts)
    }?;
    log::debug!(
        "{}: {:.9} bits at power {:.9}, budget residual {:.2e}",
        result.method,
        result.lower_bound_bits,
        result.design.transmit_power,
        result.trace.budget_residual
    );
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diag(v: &[f64]) -> Mat {
        Mat::from_diagonal(&Vector::from_column_slice(v))
    }

    #[test]
    fn waterfill_examples() {
        let wf = waterfill(&[1.0, 2.0], 3.0).unwrap();
        assert_abs_diff_eq!(wf.level, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wf.allocation.powers[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wf.allocation.powers[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wf.allocation.rate_bits, 0.5 * 4.5f64.log2(), epsilon = 1e-12);

        let wf = waterfill(&[1.0, 10.0], 1.0).unwrap();
        assert_abs_diff_eq!(wf.level, 2.0, epsilon = 1e-12);
        assert_eq!(wf.allocation.powers[1], 0.0);
        assert_abs_diff_eq!(wf.allocation.rate_bits, 0.5, epsilon = 1e-12);

        let wf = waterfill(&[5.0], 1e-4).unwrap();
        assert_abs_diff_eq!(wf.allocation.powers[0], 1e-4, epsilon = 1e-12);
    }

    #[test]
    fn waterfill_rejects_bad_budget() {
        assert!(waterfill(&[1.0], 0.0).is_err());
        assert!(waterfill(&[1.0], -1.0).is_err());
    }

    #[test]
    fn allocation_rate_identity() {
        let a = Allocation::new(vec![2.0, 0.0, 7.5], vec![1.0, 3.0, 0.5], vec![Sign::Plus; 3]).unwrap();
        assert_abs_diff_eq!(a.rate_from_powers(), a.rate_from_gains(), epsilon = 1e-12);
        assert!(Allocation::new(vec![-1.0], vec![1.0], vec![Sign::Plus]).is_err());
    }

    #[test]
    fn design_white_two_channel() {
        let noise = ArmaNoise::white(diag(&[1.0, 2.0])).unwrap();
        let d = build_design(&noise, &[2.0, 1.0], &[Sign::Plus; 2]).unwrap();
        assert!((&d.a - diag(&[3f64.sqrt(), 1.5f64.sqrt()])).abs().max() < 1e-14);
        assert!((&d.c - Mat::identity(2, 2)).abs().max() < 1e-14);
        assert_abs_diff_eq!(d.transmit_power, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.allocation.rate_bits, 0.5 * 4.5f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn design_scalar_ar1_both_signs() {
        let noise = ArmaNoise::scalar(&[0.5], &[], 1.0).unwrap();
        let plus = build_design(&noise, &[3.0], &[Sign::Plus]).unwrap();
        assert_abs_diff_eq!(plus.a[(0, 0)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(plus.c[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(plus.transmit_power, 16.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(plus.allocation.rate_bits, 1.0, epsilon = 1e-14);

        let minus = build_design(&noise, &[3.0], &[Sign::Minus]).unwrap();
        assert_abs_diff_eq!(minus.c[(0, 0)], 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(minus.transmit_power, 1.92, epsilon = 1e-12);
        assert_abs_diff_eq!(minus.allocation.rate_bits, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn design_rejects_zero_allocation() {
        let noise = ArmaNoise::white(Mat::identity(2, 2)).unwrap();
        assert!(build_design(&noise, &[0.0, 0.0], &[Sign::Plus; 2]).is_err());
    }

    #[test]
    fn scalar_bound_examples() {
        let r = scalar_bound(&[], &[], 1.0, 3.0, SignPolicy::Auto).unwrap();
        assert_abs_diff_eq!(r.lower_bound_bits, 1.0, epsilon = 1e-9);

        let r = scalar_bound(&[0.5], &[], 1.0, 1.92, SignPolicy::Auto).unwrap();
        assert_abs_diff_eq!(r.lower_bound_bits, 1.0, epsilon = 1e-9);
        assert_eq!(r.design.allocation.signs, vec![Sign::Minus]);

        let r = scalar_bound(&[], &[0.5], 1.0, 4.6875, SignPolicy::Plus).unwrap();
        assert_abs_diff_eq!(r.lower_bound_bits, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn independent_white_matches_waterfill() {
        let noise = ArmaNoise::white(diag(&[1.0, 2.0, 0.7])).unwrap();
        let r = solve_independent(&noise, 4.0, SignPolicy::Auto).unwrap();
        let wf = waterfill(&[1.0, 2.0, 0.7], 4.0).unwrap();
        assert_abs_diff_eq!(r.lower_bound_bits, wf.allocation.rate_bits, epsilon = 1e-9);
        for (p, q) in r.design.allocation.powers.iter().zip(&wf.allocation.powers) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-6);
        }
    }

    #[test]
    fn independent_picks_minus_for_ar1() {
        let noise = ArmaNoise::scalar(&[0.5], &[], 1.0).unwrap();
        let r = solve_independent(&noise, 1.92, SignPolicy::Auto).unwrap();
        assert_abs_diff_eq!(r.lower_bound_bits, 1.0, epsilon = 1e-9);
        assert_eq!(r.design.allocation.signs, vec![Sign::Minus]);
        assert!(r.trace.budget_residual < tol::POW_TOL);
    }

    #[test]
    fn general_rotated_white_equals_waterfill() {
        let noise = ArmaNoise::white(Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let r = solve_general(&noise, 2.0, SearchOptions::default()).unwrap();
        assert_abs_diff_eq!(r.lower_bound_bits, 0.5 * 3f64.log2(), epsilon = 1e-9);
        assert!(r.trace.budget_residual < tol::POW_TOL);
    }

    #[test]
    fn budget_must_be_positive() {
        let noise = ArmaNoise::scalar(&[0.5], &[], 1.0).unwrap();
        let err = solve(&noise, -1.0, SearchOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "invalid argument: budget must be positive");
    }

    #[test]
    fn nonmonotone_cost_uses_largest_root() {
        // f = 0.95 makes the cost dip between a = 1.1 and a = 1.2
        let noise = ArmaNoise::scalar(&[0.95], &[], 1.0).unwrap();
        let r = solve_independent(&noise, 10.5, SignPolicy::Plus).unwrap();
        let a = r.design.allocation.gains[0];
        assert!(a > 1.2, "a = {a}");
        assert!(r.trace.budget_residual < tol::POW_TOL);
    }
}
