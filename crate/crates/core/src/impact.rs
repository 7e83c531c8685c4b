//! Price-impact measurement for a single liquidation path: estimation of the
//! liquidator's transition matrix, the direct/indirect impact intensities,
//! exact piecewise integration of the impact profile, price-symmetry checks
//! and the Monte Carlo profile harness.
//!
//! States with a downward (upward) last mid move are the deflationary
//! (inflationary) states. The direct intensity collects the liquidator's own
//! probability mass over deflationary states; the indirect intensity collects
//! the market's kernel-mediated response to the liquidator's fills, weighted
//! by the deflationary-minus-inflationary transition mass of each market event
//! type. The impact profile is the primitive of their sum pinned at zero at
//! the liquidation start.

use crate::error::ImpactError;
use crate::hawkes::{
    derive_seed, intensity_at, simulate_with_liquidator, History,
    HawkesParams, LiquidationOutcome, LiquidatorFill, TransitionMatrices,
};
use crate::lob::StateVariable;
use crate::model::{normalise_row, MarketModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Parameters of a liquidation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidationConfig {
    /// Metaorder size, normalised to the n-level book depth.
    pub inventory: f64,
    /// Exogenous arrival rate of child orders.
    pub base_rate: f64,
    /// Clustering rate: the liquidator's incoming kernels are this multiple of
    /// the kernels toward anonymous sell market orders.
    pub clustering_rate: f64,
    /// Child order size as a fraction of the bid depth at submission.
    pub order_size_fraction: f64,
    /// Time at which the liquidator becomes active.
    pub start_time: f64,
    /// Rejection budget for conditional volume draws.
    pub max_sampling_attempts: usize,
}

impl LiquidationConfig {
    pub fn new(
        inventory: f64,
        base_rate: f64,
        clustering_rate: f64,
        order_size_fraction: f64,
        start_time: f64,
    ) -> Result<Self, ImpactError> {
        let cfg = Self {
            inventory,
            base_rate,
            clustering_rate,
            order_size_fraction,
            start_time,
            max_sampling_attempts: 10_000,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ImpactError> {
        if !(self.inventory > 0.0) {
            return Err(ImpactError::InvalidArgument(format!(
                "inventory must be positive, got {}",
                self.inventory
            )));
        }
        if !(self.order_size_fraction > 0.0 && self.order_size_fraction <= 1.0) {
            return Err(ImpactError::InvalidArgument(format!(
                "order size fraction must lie in (0, 1], got {}",
                self.order_size_fraction
            )));
        }
        if self.base_rate < 0.0 || self.clustering_rate < 0.0 {
            return Err(ImpactError::InvalidArgument("rates must be >= 0".into()));
        }
        if self.start_time < 0.0 {
            return Err(ImpactError::InvalidArgument("start time must be >= 0".into()));
        }
        Ok(())
    }
}

/// Deflationary / inflationary split of the flat state space.
#[derive(Debug, Clone)]
pub struct StatePartition {
    pub k: u32,
    pub deflationary: Vec<usize>,
    pub inflationary: Vec<usize>,
}

impl StatePartition {
    pub fn new(k: u32) -> Self {
        let mut deflationary = Vec::new();
        let mut inflationary = Vec::new();
        for idx in 0..StateVariable::state_count(k) {
            let s = StateVariable::from_flat(idx, k).expect("valid index");
            match s.x1 {
                -1 => deflationary.push(idx),
                1 => inflationary.push(idx),
                _ => {}
            }
        }
        Self { k, deflationary, inflationary }
    }

    /// `Σ_{S-} row[x] - Σ_{S+} row[x]` for a transition row.
    pub fn signed_mass(&self, row: &[f64]) -> f64 {
        let minus: f64 = self.deflationary.iter().map(|&x| row[x]).sum();
        let plus: f64 = self.inflationary.iter().map(|&x| row[x]).sum();
        minus - plus
    }

    pub fn deflationary_mass(&self, row: &[f64]) -> f64 {
        self.deflationary.iter().map(|&x| row[x]).sum()
    }
}

/// Counts of events landing in deflationary / inflationary states by time `t`.
pub fn signed_midprice_counts(history: &History, k: u32, t: f64) -> (usize, usize) {
    let mut minus = 0usize;
    let mut plus = 0usize;
    for ev in &history.events {
        if ev.time > t {
            break;
        }
        match StateVariable::from_flat(ev.state_after, k).expect("valid state").x1 {
            -1 => minus += 1,
            1 => plus += 1,
            _ => {}
        }
    }
    (minus, plus)
}

/// Empirical liquidator transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Phi0Estimate {
    pub d_s: usize,
    /// Row-major `d_s x d_s`, rows exactly stochastic.
    pub matrix: Vec<f64>,
    /// Source rows that never appeared at a fill time; these default to the
    /// no-walk row (unit mass on the neutral mid move, same imbalance
    /// bucket), which keeps the liquidator structurally unable to lift the
    /// mid and coincides with the identity on neutral states.
    pub flagged_rows: Vec<usize>,
}

impl Phi0Estimate {
    pub fn row(&self, from: usize) -> &[f64] {
        &self.matrix[from * self.d_s..(from + 1) * self.d_s]
    }
}

/// Estimates the state transitions caused by the liquidator from its fill
/// times alone.
pub fn estimate_phi0(fills: &[LiquidatorFill], d_s: usize) -> Result<Phi0Estimate, ImpactError> {
    if fills.is_empty() {
        return Err(ImpactError::NoLiquidatorActivity);
    }
    let k = (d_s / 3) as u32;
    let mut counts = vec![0u64; d_s * d_s];
    for f in fills {
        counts[f.state_before * d_s + f.state_after] += 1;
    }
    let mut matrix = vec![0.0f64; d_s * d_s];
    let mut flagged_rows = Vec::new();
    for from in 0..d_s {
        let row_counts = &counts[from * d_s..(from + 1) * d_s];
        let total: u64 = row_counts.iter().sum();
        if total == 0 {
            // No-walk fallback: a sell fill that leaves the mid and the
            // bucket alone. An identity row here would grant the liquidator
            // inflationary mass from x1 = +1 states, which no sell execution
            // can produce.
            let from_state = StateVariable::from_flat(from, k)
                .map_err(|e| ImpactError::InvalidArgument(e.to_string()))?;
            let to = StateVariable::new(0, from_state.x2, k)
                .expect("neutral state exists")
                .flat_index();
            matrix[from * d_s + to] = 1.0;
            flagged_rows.push(from);
        } else {
            let row = &mut matrix[from * d_s..(from + 1) * d_s];
            for (slot, &c) in row.iter_mut().zip(row_counts) {
                *slot = c as f64;
            }
            normalise_row(row);
        }
    }
    Ok(Phi0Estimate { d_s, matrix, flagged_rows })
}

/// Everything needed to evaluate impact quantities on one liquidation path:
/// five-type parameters, transitions with the estimated liquidator matrix in
/// slot 0, the realised history and fills, and the liquidation window.
#[derive(Debug, Clone)]
pub struct ImpactEvaluator {
    pub params: HawkesParams,
    pub transitions: TransitionMatrices,
    pub history: History,
    pub fills: Vec<LiquidatorFill>,
    pub partition: StatePartition,
    pub start: f64,
    pub termination: Option<f64>,
    pub phi0_flagged_rows: Vec<usize>,
}

impl ImpactEvaluator {
    /// Builds the evaluator for a simulated liquidation: extends the model to
    /// five types, estimates the liquidator transition matrix from the fills
    /// and splices it into slot 0.
    pub fn new(
        model: &MarketModel,
        config: &LiquidationConfig,
        outcome: &LiquidationOutcome,
    ) -> Result<Self, ImpactError> {
        let (params, mut transitions) = model
            .with_liquidator(config)
            .map_err(|e| ImpactError::InvalidArgument(e.to_string()))?;
        let phi0 = estimate_phi0(&outcome.fills, model.d_s())?;
        for from in 0..model.d_s() {
            transitions.set_row(0, from, phi0.row(from));
        }
        Ok(Self {
            params,
            transitions,
            history: outcome.history.clone(),
            fills: outcome.fills.clone(),
            partition: StatePartition::new(model.k),
            start: config.start_time,
            termination: outcome.termination,
            phi0_flagged_rows: phi0.flagged_rows,
        })
    }

    /// Constructs an evaluator from explicit parts (used by tests and by the
    /// identity checks on hand-built paths).
    pub fn from_parts(
        params: HawkesParams,
        transitions: TransitionMatrices,
        history: History,
        fills: Vec<LiquidatorFill>,
        k: u32,
        start: f64,
        termination: Option<f64>,
    ) -> Self {
        Self {
            params,
            transitions,
            history,
            fills,
            partition: StatePartition::new(k),
            start,
            termination,
            phi0_flagged_rows: Vec::new(),
        }
    }

    fn liquidator_active(&self, t: f64) -> bool {
        t >= self.start && self.termination.map_or(true, |tau| t < tau)
    }

    /// Liquidator intensity: the slot-0 intensity gated to the active window.
    pub fn lambda0(&self, t: f64) -> f64 {
        if !self.liquidator_active(t) {
            return 0.0;
        }
        intensity_at(&self.params, &self.history, t, 0)
    }

    /// Direct impact intensity: deflationary transition mass of the liquidator
    /// times its intensity. Non-negative, and zero once the liquidation ends.
    pub fn dir_intensity(&self, t: f64) -> f64 {
        if !self.liquidator_active(t) {
            return 0.0;
        }
        let from = self.history.state_before(t);
        let weight = self.partition.deflationary_mass(self.transitions.row(0, from));
        weight * intensity_at(&self.params, &self.history, t, 0)
    }

    /// Indirect impact intensity: the market's kernel response to the
    /// liquidator's fills, weighted by the deflationary-minus-inflationary
    /// transition mass of each market event type. Either sign; persists after
    /// the termination time (the transient impact).
    pub fn indir_intensity(&self, t: f64) -> f64 {
        let from = self.history.state_before(t);
        let mut acc = 0.0;
        for target in 1..self.params.d_e {
            let mut kernel_sum = 0.0;
            for f in &self.fills {
                if f.time >= t {
                    break;
                }
                // Kernels toward the market coincide with the sell-MO row.
                let i = self.params.idx(1, f.state_after, target);
                kernel_sum +=
                    self.params.alpha[i] * (t - f.time + 1.0).powf(-self.params.beta[i]);
            }
            acc += kernel_sum * self.partition.signed_mass(self.transitions.row(target, from));
        }
        acc
    }

    /// Difference of hybrid intensities summed over deflationary and
    /// inflationary states, the left side of the impact identity.
    pub fn signed_hybrid_difference(&self, t: f64) -> f64 {
        let from = self.history.state_before(t);
        let mut acc = 0.0;
        for e in 0..self.params.d_e {
            let lambda = if e == 0 {
                self.lambda0(t)
            } else {
                intensity_at(&self.params, &self.history, t, e)
            };
            acc += self.partition.signed_mass(self.transitions.row(e, from)) * lambda;
        }
        acc
    }

    /// Integrates `Dir + Indir` exactly from the liquidation start to
    /// `horizon`, pinned at zero at the start.
    ///
    /// Between consecutive events every transition weight is constant and each
    /// power-law term integrates in closed form, so the profile values carry
    /// no quadrature error. `extra_times` are merged into the breakpoint grid
    /// (useful for aligning Monte Carlo paths); the score maximises over the
    /// breakpoint grid.
    pub fn impact_profile(&self, horizon: f64, extra_times: &[f64]) -> ImpactProfile {
        let t0 = self.start;
        let mut breaks: Vec<f64> = Vec::new();
        breaks.push(t0);
        for ev in &self.history.events {
            if ev.time > t0 && ev.time <= horizon {
                breaks.push(ev.time);
            }
        }
        if let Some(tau) = self.termination {
            if tau > t0 && tau <= horizon {
                breaks.push(tau);
            }
        }
        for &t in extra_times {
            if t > t0 && t <= horizon {
                breaks.push(t);
            }
        }
        breaks.push(horizon);
        breaks.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

        let truncated = self.termination.map_or(true, |tau| horizon < tau);

        let mut values = Vec::with_capacity(breaks.len());
        let mut dir_series = Vec::with_capacity(breaks.len());
        let mut indir_series = Vec::with_capacity(breaks.len());
        let mut acc = 0.0f64;
        values.push(0.0);
        dir_series.push(self.dir_intensity(t0 + 0.0)); // left edge, gate just opened
        indir_series.push(self.indir_intensity(t0));
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            acc += self.segment_integral(a, b);
            values.push(acc);
            dir_series.push(self.dir_intensity(b));
            indir_series.push(self.indir_intensity(b));
        }

        let peak = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let duration = match self.termination {
            Some(tau) => tau - t0,
            None => horizon - t0,
        };
        let score = if duration > 0.0 { peak / duration } else { 0.0 };

        ImpactProfile {
            breakpoints: breaks,
            values,
            dir_series,
            indir_series,
            termination: self.termination,
            start: t0,
            score,
            truncated,
        }
    }

    /// Exact integral of `Dir + Indir` over `[a, b]`, a segment with no events
    /// inside.
    fn segment_integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        let from = self.history.state_before(0.5 * (a + b));

        // Direct part, restricted to the active window.
        let lo = a.max(self.start);
        let hi = match self.termination {
            Some(tau) => b.min(tau),
            None => b,
        };
        if hi > lo {
            let weight = self.partition.deflationary_mass(self.transitions.row(0, from));
            if weight > 0.0 {
                total += weight * integrated_intensity(&self.params, &self.history, lo, hi, 0);
            }
        }

        // Indirect part: closed-form integral of each fill's kernel.
        for target in 1..self.params.d_e {
            let w = self.partition.signed_mass(self.transitions.row(target, from));
            if w == 0.0 {
                continue;
            }
            let mut kernel_int = 0.0;
            for f in &self.fills {
                if f.time >= b {
                    break;
                }
                let i = self.params.idx(1, f.state_after, target);
                let alpha = self.params.alpha[i];
                if alpha == 0.0 {
                    continue;
                }
                let one_minus_b = 1.0 - self.params.beta[i];
                let lo_u = a.max(f.time) - f.time + 1.0;
                let hi_u = b - f.time + 1.0;
                kernel_int +=
                    alpha / (-one_minus_b) * (lo_u.powf(one_minus_b) - hi_u.powf(one_minus_b));
            }
            total += w * kernel_int;
        }
        total
    }
}

/// `∫_a^b λ_target(s) ds` in closed form for one target type.
fn integrated_intensity(
    params: &HawkesParams,
    history: &History,
    a: f64,
    b: f64,
    target: usize,
) -> f64 {
    let mut acc = params.nu[target] * (b - a);
    for ev in &history.events {
        if ev.time >= b {
            break;
        }
        let i = params.idx(ev.event_type, ev.state_after, target);
        let alpha = params.alpha[i];
        if alpha == 0.0 {
            continue;
        }
        let one_minus_b = 1.0 - params.beta[i];
        let lo = a.max(ev.time) - ev.time + 1.0;
        let hi = b - ev.time + 1.0;
        acc += alpha / (-one_minus_b) * (lo.powf(one_minus_b) - hi.powf(one_minus_b));
    }
    acc
}

/// Integrated impact trajectory of one liquidation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactProfile {
    pub breakpoints: Vec<f64>,
    /// Profile values at the breakpoints; starts at exactly zero.
    pub values: Vec<f64>,
    pub dir_series: Vec<f64>,
    pub indir_series: Vec<f64>,
    pub termination: Option<f64>,
    pub start: f64,
    /// Peak of the profile divided by the liquidation duration.
    pub score: f64,
    /// True when the horizon cut the profile before the liquidation completed.
    pub truncated: bool,
}

impl ImpactProfile {
    /// Profile value at the largest breakpoint `<= t` (exact at breakpoints).
    pub fn value_before(&self, t: f64) -> f64 {
        match self.breakpoints.partition_point(|&b| b <= t) {
            0 => 0.0,
            i => self.values[i - 1],
        }
    }
}

/// Outcome of the price-symmetry verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub max_violation: f64,
    pub pass: bool,
    pub tolerance: f64,
}

/// The canonical event pairing: sells with buys, deflationary with
/// inflationary limit events (market slots 0..4: `[1, 0, 3, 2]`).
pub fn canonical_sigma_e() -> [usize; 4] {
    [1, 0, 3, 2]
}

/// The canonical state bijection `(x1, x2) -> (-x1, -x2)` from inflationary to
/// deflationary states, as flat index pairs.
pub fn canonical_sigma_s(k: u32) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for idx in 0..StateVariable::state_count(k) {
        let s = StateVariable::from_flat(idx, k).expect("valid flat index");
        if s.x1 == 1 {
            let img = StateVariable::new(-1, -s.x2, k).unwrap().flat_index();
            pairs.push((idx, img));
        }
    }
    pairs
}

/// Verifies the three sufficient conditions for price symmetry and reports
/// the largest absolute violation:
/// matched transition mass `φ_e(y, x) = φ_{σE(e)}(y, σS(x))`, matched base
/// rates, and matched kernel parameters between paired target types.
pub fn check_price_symmetry(
    params: &HawkesParams,
    transitions: &TransitionMatrices,
    sigma_e: &[usize; 4],
    sigma_s: &[(usize, usize)],
    tolerance: f64,
) -> Result<SymmetryReport, ImpactError> {
    if params.d_e != 4 || transitions.d_e != 4 {
        return Err(ImpactError::InvalidArgument(
            "price symmetry is defined for the four market event types".into(),
        ));
    }
    let d_s = params.d_s;
    let mut seen = vec![false; 4];
    for &e in sigma_e {
        if e >= 4 || seen[e] {
            return Err(ImpactError::InvalidBijection("sigma_E must permute the event types".into()));
        }
        seen[e] = true;
    }
    let k = (d_s / 3) as u32;
    let plus: Vec<usize> = StatePartition::new(k).inflationary;
    let mut mapped = vec![false; d_s];
    for &(from, to) in sigma_s {
        if from >= d_s || to >= d_s {
            return Err(ImpactError::InvalidBijection("state index out of range".into()));
        }
        let from_state = StateVariable::from_flat(from, k).unwrap();
        let to_state = StateVariable::from_flat(to, k).unwrap();
        if from_state.x1 != 1 || to_state.x1 != -1 {
            return Err(ImpactError::InvalidBijection(
                "sigma_S must map inflationary states onto deflationary states".into(),
            ));
        }
        if mapped[to] {
            return Err(ImpactError::InvalidBijection("sigma_S image repeats a state".into()));
        }
        mapped[to] = true;
    }
    if sigma_s.len() != plus.len() {
        return Err(ImpactError::InvalidBijection(format!(
            "sigma_S must cover all {} inflationary states, got {}",
            plus.len(),
            sigma_s.len()
        )));
    }

    let mut violation = 0.0f64;
    // (ii) base rates agree along the pairing.
    for e in 0..4 {
        violation = violation.max((params.nu[e] - params.nu[sigma_e[e]]).abs());
    }
    // (iii) kernels toward paired targets agree parameter-wise.
    for src in 0..4 {
        for x in 0..d_s {
            for e in 0..4 {
                violation = violation
                    .max((params.alpha(src, x, e) - params.alpha(src, x, sigma_e[e])).abs());
                violation =
                    violation.max((params.beta(src, x, e) - params.beta(src, x, sigma_e[e])).abs());
            }
        }
    }
    // (i) transition mass toward x matches mass toward its mirror.
    for e in 0..4 {
        for y in 0..d_s {
            for &(x, img) in sigma_s {
                violation = violation
                    .max((transitions.prob(e, y, x) - transitions.prob(sigma_e[e], y, img)).abs());
            }
        }
    }
    Ok(SymmetryReport { max_violation: violation, pass: violation <= tolerance, tolerance })
}

/// Produces an exactly price-symmetric model by averaging the parameters with
/// their image under the canonical maps.
pub fn symmetrise_model(model: &MarketModel) -> MarketModel {
    let mut out = model.clone();
    let sigma_e = canonical_sigma_e();
    let k = model.k;
    let d_s = model.d_s();

    // Base rates.
    for e in 0..4 {
        let avg = 0.5 * (model.params.nu[e] + model.params.nu[sigma_e[e]]);
        out.params.nu[e] = avg;
        out.params.nu[sigma_e[e]] = avg;
    }
    // Kernels: equalise each target with its partner at the same source.
    for src in 0..4 {
        for x in 0..d_s {
            for e in 0..4 {
                let partner = sigma_e[e];
                if partner < e {
                    continue;
                }
                let i = model.params.idx(src, x, e);
                let j = model.params.idx(src, x, partner);
                let alpha = 0.5 * (model.params.alpha[i] + model.params.alpha[j]);
                let beta = 0.5 * (model.params.beta[i] + model.params.beta[j]);
                out.params.alpha[i] = alpha;
                out.params.alpha[j] = alpha;
                out.params.beta[i] = beta;
                out.params.beta[j] = beta;
            }
        }
    }
    // Transitions: pair (e, x) with (sigma_E(e), mirror(x)); neutral columns
    // pair with themselves across the event map.
    let mirror = |idx: usize| -> usize {
        let s = StateVariable::from_flat(idx, k).unwrap();
        StateVariable::new(-s.x1, -s.x2, k).unwrap().flat_index()
    };
    for e in 0..4 {
        let partner = sigma_e[e];
        if partner < e {
            continue;
        }
        for y in 0..d_s {
            let mut row_e: Vec<f64> = model.transitions.row(e, y).to_vec();
            let row_p: Vec<f64> = model.transitions.row(partner, y).to_vec();
            for x in 0..d_s {
                let avg = 0.5 * (model.transitions.prob(e, y, x) + row_p[mirror(x)]);
                row_e[x] = avg;
            }
            let mut row_partner = vec![0.0; d_s];
            for x in 0..d_s {
                row_partner[mirror(x)] = row_e[x];
            }
            normalise_row(&mut row_e);
            normalise_row(&mut row_partner);
            out.transitions.set_row(e, y, &row_e);
            out.transitions.set_row(partner, y, &row_partner);
        }
    }
    out.validate().expect("symmetrised model must validate");
    out
}

/// Evaluates both sides of the impact identity
/// `(λ⁻ - λ⁺)(t) = Dir(t) + Indir(t)` at the sample times and returns the
/// largest absolute discrepancy. Exact (to rounding) under price-symmetric
/// parameters.
pub fn impact_identity_check(evaluator: &ImpactEvaluator, sample_times: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for &t in sample_times {
        let lhs = evaluator.signed_hybrid_difference(t);
        let rhs = evaluator.dir_intensity(t) + evaluator.indir_intensity(t);
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

/// Median and quartile trajectories of the impact profile across paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloProfiles {
    pub grid: Vec<f64>,
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    /// Per-path impact scores, in path order.
    pub scores: Vec<f64>,
    pub mean_score: f64,
    pub sd_score: f64,
    /// Profile value at each path's own termination time.
    pub values_at_termination: Vec<f64>,
    pub completed_paths: usize,
    pub n_paths: usize,
}

/// Runs `n_paths` independent liquidations and aggregates their profiles on a
/// common time grid. Paths are seeded deterministically from `base_seed` and
/// reduced in path order, so outputs are reproducible bit for bit.
pub fn monte_carlo_profiles(
    model: &MarketModel,
    config: &LiquidationConfig,
    initial_state: usize,
    horizon: f64,
    n_paths: usize,
    base_seed: u64,
    grid_points: usize,
) -> Result<MonteCarloProfiles, ImpactError> {
    assert!(n_paths >= 1 && grid_points >= 2);
    let (params, transitions) = model
        .with_liquidator(config)
        .map_err(|e| ImpactError::InvalidArgument(e.to_string()))?;
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| {
            config.start_time
                + (horizon - config.start_time) * i as f64 / (grid_points - 1) as f64
        })
        .collect();

    let results: Vec<Result<(Vec<f64>, f64, f64, bool), ImpactError>> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let seed = derive_seed(base_seed, path as u64);
            let outcome = simulate_with_liquidator(
                &params,
                &transitions,
                config,
                &model.gamma,
                initial_state,
                horizon,
                seed,
            )
            .map_err(|e| ImpactError::InvalidArgument(e.to_string()))?;
            if outcome.fills.is_empty() {
                // A path where the liquidator never traded has an identically
                // zero profile.
                return Ok((vec![0.0; grid.len()], 0.0, 0.0, false));
            }
            let evaluator = ImpactEvaluator::new(model, config, &outcome)?;
            let profile = evaluator.impact_profile(horizon, &grid);
            let sampled: Vec<f64> = grid.iter().map(|&t| profile.value_before(t)).collect();
            let at_tau = match outcome.termination {
                Some(tau) => profile.value_before(tau),
                None => *sampled.last().unwrap(),
            };
            Ok((sampled, profile.score, at_tau, outcome.completed))
        })
        .collect();

    let mut curves = Vec::with_capacity(n_paths);
    let mut scores = Vec::with_capacity(n_paths);
    let mut values_at_termination = Vec::with_capacity(n_paths);
    let mut completed_paths = 0usize;
    for r in results {
        let (curve, score, at_tau, completed) = r?;
        curves.push(curve);
        scores.push(score);
        values_at_termination.push(at_tau);
        if completed {
            completed_paths += 1;
        }
    }

    let quantile_at = |col: usize, q: f64| -> f64 {
        let mut column: Vec<f64> = curves.iter().map(|c| c[col]).collect();
        column.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = q * (column.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        if lo == hi {
            column[lo]
        } else {
            column[lo] + (pos - lo as f64) * (column[hi] - column[lo])
        }
    };
    let median: Vec<f64> = (0..grid.len()).map(|i| quantile_at(i, 0.5)).collect();
    let q25: Vec<f64> = (0..grid.len()).map(|i| quantile_at(i, 0.25)).collect();
    let q75: Vec<f64> = (0..grid.len()).map(|i| quantile_at(i, 0.75)).collect();

    let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
    let var = scores.iter().map(|s| (s - mean_score) * (s - mean_score)).sum::<f64>()
        / (scores.len().max(2) - 1) as f64;

    Ok(MonteCarloProfiles {
        grid,
        median,
        q25,
        q75,
        scores,
        mean_score,
        sd_score: var.sqrt(),
        values_at_termination,
        completed_paths,
        n_paths,
    })
}

/// Mean and standard deviation of `N⁻(T) - N⁺(T)` over independent paths of
/// the market-only model (no liquidator).
pub fn signed_count_statistics(
    model: &MarketModel,
    initial_state: usize,
    horizon: f64,
    n_paths: usize,
    base_seed: u64,
) -> (f64, f64) {
    let diffs: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let h = crate::hawkes::simulate(
                &model.params,
                &model.transitions,
                initial_state,
                horizon,
                derive_seed(base_seed, path as u64),
            )
            .expect("simulation of a validated model");
            let (minus, plus) = signed_midprice_counts(&h, model.k, horizon);
            minus as f64 - plus as f64
        })
        .collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
        / (diffs.len().max(2) - 1) as f64;
    (mean, (var / diffs.len() as f64).sqrt())
}
