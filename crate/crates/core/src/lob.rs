//! Limit-order-book mechanics: snapshots, queue imbalance, the discrete state
//! variable, limit-order decomposition, the Dirichlet volume model and the
//! book-update rule applied when a market order consumes liquidity.
//!
//! Prices are integers in units of 1e-4 currency and live on the tick grid;
//! mid-prices live on the half-tick grid. Volumes are non-negative reals so the
//! same code handles raw share counts and depth-normalised books.

use crate::error::LobError;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

/// Buy/sell direction of an order, mapping to the signs +1/-1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn sign(self) -> i32 {
        match self {
            Side::Buy => 1,
            Side::Sell => -1,
        }
    }
}

/// Price sentinel carried by the market-order component of a buy limit order.
///
/// A buy market order executes against the ask side regardless of price; the
/// sell counterpart carries price 0.
pub const BUY_MARKET_PRICE: i64 = i64::MAX;

/// Book configuration at an instant: best quotes and per-level volumes.
///
/// Level i sits at `best_ask_price + (i-1) * tick_size` on the ask side and
/// `best_bid_price - (i-1) * tick_size` on the bid side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookSnapshot {
    pub best_ask_price: i64,
    pub best_bid_price: i64,
    pub ask_volumes: Vec<f64>,
    pub bid_volumes: Vec<f64>,
    pub tick_size: i64,
}

impl BookSnapshot {
    pub fn new(
        best_ask_price: i64,
        best_bid_price: i64,
        ask_volumes: Vec<f64>,
        bid_volumes: Vec<f64>,
        tick_size: i64,
    ) -> Result<Self, LobError> {
        let snap = Self { best_ask_price, best_bid_price, ask_volumes, bid_volumes, tick_size };
        snap.validate()?;
        Ok(snap)
    }

    pub fn validate(&self) -> Result<(), LobError> {
        if self.tick_size <= 0 {
            return Err(LobError::InvalidSnapshot("tick size must be positive".into()));
        }
        if self.best_ask_price <= self.best_bid_price {
            return Err(LobError::InvalidSnapshot(format!(
                "spread must be positive: ask {} <= bid {}",
                self.best_ask_price, self.best_bid_price
            )));
        }
        if self.best_ask_price % self.tick_size != 0 || self.best_bid_price % self.tick_size != 0 {
            return Err(LobError::InvalidSnapshot("prices must sit on the tick grid".into()));
        }
        if self.ask_volumes.len() != self.bid_volumes.len() {
            return Err(LobError::InvalidSnapshot("ask/bid depth mismatch".into()));
        }
        if self.ask_volumes.iter().chain(&self.bid_volumes).any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(LobError::InvalidSnapshot("volumes must be finite and >= 0".into()));
        }
        match (self.ask_volumes.first(), self.bid_volumes.first()) {
            (Some(&a1), Some(&b1)) if a1 > 0.0 && b1 > 0.0 => Ok(()),
            _ => Err(LobError::InvalidSnapshot("level-1 volumes must be positive".into())),
        }
    }

    pub fn depth(&self) -> usize {
        self.ask_volumes.len()
    }

    /// Spread between best quotes, always positive in a valid snapshot.
    pub fn spread(&self) -> i64 {
        self.best_ask_price - self.best_bid_price
    }

    /// Mid-price; lives on the half-tick grid, hence returned as a real.
    pub fn mid_price(&self) -> f64 {
        0.5 * (self.best_ask_price + self.best_bid_price) as f64
    }

    /// Price of bid level `i` (1-based).
    pub fn bid_price(&self, level: usize) -> i64 {
        self.best_bid_price - (level as i64 - 1) * self.tick_size
    }

    /// Price of ask level `i` (1-based).
    pub fn ask_price(&self, level: usize) -> i64 {
        self.best_ask_price + (level as i64 - 1) * self.tick_size
    }

    /// Queue imbalance over the first `n` levels.
    pub fn imbalance(&self, n: usize) -> Result<f64, LobError> {
        queue_imbalance(&self.bid_volumes, &self.ask_volumes, n)
    }
}

/// Discrete market state: last mid-price move direction and imbalance bucket.
///
/// `x1` is -1/0/+1; `x2` ranges over -(K-1)/2 ..= (K-1)/2 for odd `K`. The flat
/// index `(x1+1)*K + (x2 + (K-1)/2)` is a bijection onto 0..3K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateVariable {
    pub x1: i32,
    pub x2: i32,
    pub k: u32,
}

impl StateVariable {
    pub fn new(x1: i32, x2: i32, k: u32) -> Result<Self, LobError> {
        if k == 0 || k % 2 == 0 {
            return Err(LobError::InvalidState(format!("K must be odd and positive, got {k}")));
        }
        if !(-1..=1).contains(&x1) {
            return Err(LobError::InvalidState(format!("x1 must be in {{-1,0,1}}, got {x1}")));
        }
        let half = (k as i32 - 1) / 2;
        if x2 < -half || x2 > half {
            return Err(LobError::InvalidState(format!(
                "x2 must be in [-{half}, {half}] for K = {k}, got {x2}"
            )));
        }
        Ok(Self { x1, x2, k })
    }

    /// Canonical flat index in 0..3K.
    pub fn flat_index(&self) -> usize {
        let half = (self.k as i32 - 1) / 2;
        ((self.x1 + 1) * self.k as i32 + self.x2 + half) as usize
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn from_flat(index: usize, k: u32) -> Result<Self, LobError> {
        if index >= 3 * k as usize {
            return Err(LobError::InvalidState(format!(
                "flat index {index} out of range for K = {k}"
            )));
        }
        let half = (k as i32 - 1) / 2;
        let x1 = (index / k as usize) as i32 - 1;
        let x2 = (index % k as usize) as i32 - half;
        Self::new(x1, x2, k)
    }

    /// Number of states for a given bucket count: d_S = 3K.
    pub fn state_count(k: u32) -> usize {
        3 * k as usize
    }
}

/// A limit order `(t, q, p, d)`: commitment to trade `size` at a price no worse
/// than `price` in the given direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOrder {
    pub time: f64,
    pub size: f64,
    pub price: i64,
    pub direction: Side,
}

impl LimitOrder {
    pub fn new(time: f64, size: f64, price: i64, direction: Side) -> Result<Self, LobError> {
        if !(size > 0.0) || !size.is_finite() {
            return Err(LobError::InvalidOrder(format!("size must be positive, got {size}")));
        }
        if time < 0.0 || !time.is_finite() {
            return Err(LobError::InvalidOrder(format!("time must be >= 0, got {time}")));
        }
        Ok(Self { time, size, price, direction })
    }
}

/// Per-state Dirichlet concentration parameters for the normalised volume
/// vector `(ask_1, bid_1, ..., ask_n, bid_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    /// Book depth n used for normalisation; vectors have length 2n.
    pub n_levels: usize,
    /// Imbalance bucket count K; gamma has 3K rows indexed by flat state.
    pub k: u32,
    /// gamma[flat_state] = 2n strictly positive concentrations.
    pub gamma: Vec<Vec<f64>>,
}

impl DirichletParams {
    pub fn new(n_levels: usize, k: u32, gamma: Vec<Vec<f64>>) -> Result<Self, LobError> {
        let p = Self { n_levels, k, gamma };
        p.validate()?;
        Ok(p)
    }

    /// Uniform simplex model: all concentrations equal to one.
    pub fn all_ones(n_levels: usize, k: u32) -> Self {
        Self { n_levels, k, gamma: vec![vec![1.0; 2 * n_levels]; StateVariable::state_count(k)] }
    }

    pub fn validate(&self) -> Result<(), LobError> {
        if self.gamma.len() != StateVariable::state_count(self.k) {
            return Err(LobError::InvalidState(format!(
                "gamma must have {} rows, got {}",
                StateVariable::state_count(self.k),
                self.gamma.len()
            )));
        }
        for (state, row) in self.gamma.iter().enumerate() {
            if row.len() != 2 * self.n_levels {
                return Err(LobError::MissingGamma { state });
            }
            for (component, &g) in row.iter().enumerate() {
                if !(g > 0.0) || !g.is_finite() {
                    return Err(LobError::NonPositiveGamma { state, component });
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, state: &StateVariable) -> Result<&[f64], LobError> {
        self.gamma
            .get(state.flat_index())
            .map(|r| r.as_slice())
            .ok_or(LobError::MissingGamma { state: state.flat_index() })
    }
}

/// Sum of the bid components of an interleaved `(ask_1, bid_1, ...)` vector.
pub fn interleaved_bid_sum(volumes: &[f64]) -> f64 {
    volumes.iter().skip(1).step_by(2).sum()
}

/// Sum of the ask components of an interleaved `(ask_1, bid_1, ...)` vector.
pub fn interleaved_ask_sum(volumes: &[f64]) -> f64 {
    volumes.iter().step_by(2).sum()
}

/// Imbalance of an interleaved volume vector.
pub fn interleaved_imbalance(volumes: &[f64]) -> Result<f64, LobError> {
    let b = interleaved_bid_sum(volumes);
    let a = interleaved_ask_sum(volumes);
    if b + a <= 0.0 {
        return Err(LobError::EmptyBook);
    }
    Ok((b - a) / (b + a))
}

/// Normalised excess of bid depth over ask depth on the first `n` levels:
/// `(Σ bid - Σ ask) / (Σ bid + Σ ask)`, always in [-1, 1].
pub fn queue_imbalance(bid_volumes: &[f64], ask_volumes: &[f64], n: usize) -> Result<f64, LobError> {
    let b: f64 = bid_volumes.iter().take(n).sum();
    let a: f64 = ask_volumes.iter().take(n).sum();
    if b + a <= 0.0 {
        return Err(LobError::EmptyBook);
    }
    Ok((b - a) / (b + a))
}

/// Maps an imbalance in [-1, 1] to its bucket label in -(K-1)/2 ..= (K-1)/2.
///
/// [-1, 1] is split into K equal half-open buckets `[-1 + 2k/K, -1 + 2(k+1)/K)`
/// with the last bucket closed at 1.
pub fn discretise_imbalance(imbalance: f64, k: u32) -> Result<i32, LobError> {
    assert!(k % 2 == 1 && k > 0, "K must be odd and positive");
    if !(-1.0..=1.0).contains(&imbalance) {
        return Err(LobError::ImbalanceOutOfRange(imbalance));
    }
    let bucket = (((imbalance + 1.0) * k as f64) / 2.0).floor() as i64;
    let bucket = bucket.clamp(0, k as i64 - 1) as i32;
    Ok(bucket - (k as i32 - 1) / 2)
}

/// Splits a limit order into its immediately-executed market component and the
/// queued remainder.
///
/// For a sell order the market size is
/// `q_M = min(q, Σ_i V^{b,i} · 1{P^{b,i} >= p})`; buys mirror against the ask
/// side. Applying the two components in sequence reproduces the effect of the
/// original order on the book.
pub fn decompose_limit_order(
    order: &LimitOrder,
    snapshot: &BookSnapshot,
) -> Result<(LimitOrder, LimitOrder), LobError> {
    snapshot.validate()?;
    let q_m = match order.direction {
        Side::Sell => {
            let mut avail = 0.0;
            for (i, &v) in snapshot.bid_volumes.iter().enumerate() {
                if snapshot.bid_price(i + 1) >= order.price {
                    avail += v;
                }
            }
            order.size.min(avail)
        }
        Side::Buy => {
            let mut avail = 0.0;
            for (i, &v) in snapshot.ask_volumes.iter().enumerate() {
                if snapshot.ask_price(i + 1) <= order.price {
                    avail += v;
                }
            }
            order.size.min(avail)
        }
    };
    let market_price = match order.direction {
        Side::Sell => 0,
        Side::Buy => BUY_MARKET_PRICE,
    };
    let market = LimitOrder { time: order.time, size: q_m, price: market_price, direction: order.direction };
    let queued =
        LimitOrder { time: order.time, size: order.size - q_m, price: order.price, direction: order.direction };
    Ok((market, queued))
}

/// Outcome of replaying a market order through the volume model.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketOrderEffect {
    /// State after the order has been absorbed by the book.
    pub state_after: StateVariable,
    /// Executed size `q_M` in the same (normalised) units as the volumes.
    pub executed_size: f64,
    /// Volumes sampled for the instant before the order, interleaved.
    pub pre_volumes: Vec<f64>,
    /// Consumed-side volumes after execution (bids for a sell, asks for a buy).
    pub post_same_side: Vec<f64>,
}

/// Draws a normalised volume vector from the Dirichlet model conditioned on
/// the imbalance bucket of `state`.
///
/// Rejection sampling from the unconditional Dirichlet; `max_attempts` bounds
/// the budget (10_000 is a practical default).
pub fn sample_volumes_conditional<R: Rng + ?Sized>(
    gamma: &DirichletParams,
    state: &StateVariable,
    max_attempts: usize,
    rng: &mut R,
) -> Result<Vec<f64>, LobError> {
    let row = gamma.row(state)?;
    let dists: Vec<Gamma<f64>> = row
        .iter()
        .map(|&g| Gamma::new(g, 1.0).expect("validated gamma row"))
        .collect();
    for attempt in 1..=max_attempts {
        let mut draw: Vec<f64> = dists.iter().map(|d| d.sample(rng)).collect();
        let total: f64 = draw.iter().sum();
        if total <= 0.0 {
            continue;
        }
        for v in &mut draw {
            *v /= total;
        }
        let imb = interleaved_imbalance(&draw)?;
        if discretise_imbalance(imb, state.k)? == state.x2 {
            return Ok(draw);
        }
        if attempt == max_attempts {
            break;
        }
    }
    Err(LobError::RejectionBudgetExhausted {
        attempts: max_attempts,
        acceptance_rate: 1.0 / max_attempts as f64,
    })
}

/// Replays a market order of size `order_size_fraction` times the same-side
/// depth through the book-update rule.
///
/// Volumes for the instant before the order are drawn from the conditional
/// Dirichlet model. For a sell of size `q_M`: the mid-price drops (`x1 = -1`)
/// iff `q_M` is at least the level-1 bid volume; bids are consumed level by
/// level with `min_plus(a, b) = max(0, min(a, b))`; the new imbalance is taken
/// over surviving bids against the pre-order asks and re-bucketed. Buys mirror.
pub fn apply_market_order<R: Rng + ?Sized>(
    state: &StateVariable,
    gamma: &DirichletParams,
    order_size_fraction: f64,
    side: Side,
    max_attempts: usize,
    rng: &mut R,
) -> Result<MarketOrderEffect, LobError> {
    if !(order_size_fraction >= 0.0) || !order_size_fraction.is_finite() {
        return Err(LobError::InvalidOrder(format!(
            "order size fraction must be >= 0, got {order_size_fraction}"
        )));
    }
    let pre = sample_volumes_conditional(gamma, state, max_attempts, rng)?;
    let n = gamma.n_levels;
    let (mut same_side, other_side): (Vec<f64>, Vec<f64>) = match side {
        Side::Sell => (
            pre.iter().skip(1).step_by(2).copied().collect(),
            pre.iter().step_by(2).copied().collect(),
        ),
        Side::Buy => (
            pre.iter().step_by(2).copied().collect(),
            pre.iter().skip(1).step_by(2).copied().collect(),
        ),
    };
    debug_assert_eq!(same_side.len(), n);

    let depth: f64 = same_side.iter().sum();
    let q_m = order_size_fraction * depth;

    // Level-1 depletion decides the mid-price move direction: a sell walking
    // the book drops the mid, a buy lifts it.
    let walks = q_m >= same_side[0] && q_m > 0.0;
    let x1 = if walks { side.sign() } else { 0 };

    let mut consumed = 0.0;
    for v in same_side.iter_mut() {
        let take = (q_m - consumed).min(*v).max(0.0);
        *v -= take;
        consumed += take;
    }

    let (bids, asks): (&[f64], &[f64]) = match side {
        Side::Sell => (&same_side, &other_side),
        Side::Buy => (&other_side, &same_side),
    };
    let b: f64 = bids.iter().sum();
    let a: f64 = asks.iter().sum();
    let imb = if b + a > 0.0 { (b - a) / (b + a) } else { 0.0 };
    let x2 = discretise_imbalance(imb, state.k)?;

    Ok(MarketOrderEffect {
        state_after: StateVariable::new(x1, x2, state.k)?,
        executed_size: consumed,
        pre_volumes: pre,
        post_same_side: same_side,
    })
}

/// Piecewise-constant mid-price proxy driven by the signed move indicators:
/// value after the j-th event is `p0 + (tick/2) * Σ_{i<=j} x1_i`.
///
/// Returns the path sampled at the event times; the path value is `p0` before
/// the first event.
pub fn mid_price_proxy(p0: f64, tick_size: i64, moves: &[(f64, i32)]) -> Vec<(f64, f64)> {
    let half_tick = tick_size as f64 / 2.0;
    let mut level = p0;
    moves
        .iter()
        .map(|&(t, x1)| {
            level += half_tick * x1 as f64;
            (t, level)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn snap(ask: i64, bid: i64, asks: Vec<f64>, bids: Vec<f64>) -> BookSnapshot {
        BookSnapshot::new(ask, bid, asks, bids, 100).unwrap()
    }

    #[test]
    fn imbalance_level_one() {
        // Level-1 volumes of the first golden book row: bids 900 vs asks 200.
        let i = queue_imbalance(&[900.0], &[200.0], 1).unwrap();
        assert!((i - 700.0 / 1100.0).abs() < 1e-12);
    }

    #[test]
    fn imbalance_symmetric_is_zero() {
        let i = queue_imbalance(&[123.0], &[123.0], 1).unwrap();
        assert_eq!(i, 0.0);
    }

    #[test]
    fn imbalance_two_levels() {
        let i = queue_imbalance(&[100.0, 1029.0], &[1600.0, 2552.0], 2).unwrap();
        let expected = (1129.0 - 4152.0) / 5281.0;
        assert!((i - expected).abs() < 1e-12);
        assert!((i - (-0.572_429_464)).abs() < 1e-6);
    }

    #[test]
    fn imbalance_empty_book_errors() {
        assert!(matches!(queue_imbalance(&[0.0], &[0.0], 1), Err(LobError::EmptyBook)));
    }

    #[test]
    fn discretise_known_buckets() {
        assert_eq!(discretise_imbalance(0.636, 3).unwrap(), 1);
        assert_eq!(discretise_imbalance(0.0, 3).unwrap(), 0);
        assert_eq!(discretise_imbalance(-1.0, 5).unwrap(), -2);
        assert_eq!(discretise_imbalance(1.0, 3).unwrap(), 1);
        assert_eq!(discretise_imbalance(-1.0 / 3.0, 3).unwrap(), 0);
        assert!(discretise_imbalance(1.5, 3).is_err());
    }

    #[test]
    fn flat_index_is_bijection() {
        for k in [1u32, 3, 5, 7] {
            let mut seen = vec![false; 3 * k as usize];
            for x1 in -1..=1 {
                let half = (k as i32 - 1) / 2;
                for x2 in -half..=half {
                    let s = StateVariable::new(x1, x2, k).unwrap();
                    let idx = s.flat_index();
                    assert!(!seen[idx]);
                    seen[idx] = true;
                    assert_eq!(StateVariable::from_flat(idx, k).unwrap(), s);
                }
            }
            assert!(seen.iter().all(|&b| b));
        }
    }

    #[test]
    fn decompose_sell_partial_fill() {
        // Bid level 1 holds 50; deeper level is below the limit price.
        let book = snap(460700, 460600, vec![200.0, 100.0], vec![50.0, 70.0]);
        let order = LimitOrder::new(1.0, 80.0, 460600, Side::Sell).unwrap();
        let (market, queued) = decompose_limit_order(&order, &book).unwrap();
        assert_eq!(market.size, 50.0);
        assert_eq!(market.price, 0);
        assert_eq!(queued.size, 30.0);
        assert_eq!(queued.price, 460600);
    }

    #[test]
    fn decompose_sell_above_best_bid_is_fully_queued() {
        let book = snap(460700, 460600, vec![200.0], vec![50.0]);
        let order = LimitOrder::new(1.0, 80.0, 460700, Side::Sell).unwrap();
        let (market, queued) = decompose_limit_order(&order, &book).unwrap();
        assert_eq!(market.size, 0.0);
        assert_eq!(queued.size, 80.0);
    }

    #[test]
    fn decompose_buy_walks_two_levels() {
        let book = snap(460700, 460600, vec![300.0, 400.0], vec![50.0, 70.0]);
        let order = LimitOrder::new(1.0, 500.0, 460800, Side::Buy).unwrap();
        let (market, queued) = decompose_limit_order(&order, &book).unwrap();
        assert_eq!(market.size, 500.0);
        assert_eq!(market.price, BUY_MARKET_PRICE);
        assert_eq!(queued.size, 0.0);
    }

    #[test]
    fn conditional_sampling_k1_always_accepts() {
        let gamma = DirichletParams::all_ones(2, 1);
        let state = StateVariable::new(0, 0, 1).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let v = sample_volumes_conditional(&gamma, &state, 1, &mut rng).unwrap();
        assert_eq!(v.len(), 4);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_sampling_is_deterministic_per_seed() {
        let gamma = DirichletParams::all_ones(2, 3);
        let state = StateVariable::new(0, 1, 3).unwrap();
        let a = sample_volumes_conditional(&gamma, &state, 10_000, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        let b = sample_volumes_conditional(&gamma, &state, 10_000, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_sampling_respects_bucket() {
        let gamma = DirichletParams::all_ones(2, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for x2 in -1..=1 {
            let state = StateVariable::new(0, x2, 3).unwrap();
            for _ in 0..50 {
                let v = sample_volumes_conditional(&gamma, &state, 10_000, &mut rng).unwrap();
                let imb = interleaved_imbalance(&v).unwrap();
                assert_eq!(discretise_imbalance(imb, 3).unwrap(), x2);
            }
        }
    }

    #[test]
    fn zero_size_market_order_keeps_state() {
        let gamma = DirichletParams::all_ones(2, 3);
        let state = StateVariable::new(1, -1, 3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let eff = apply_market_order(&state, &gamma, 0.0, Side::Sell, 10_000, &mut rng).unwrap();
        assert_eq!(eff.state_after.x1, 0);
        assert_eq!(eff.state_after.x2, -1);
        assert_eq!(eff.executed_size, 0.0);
    }

    #[test]
    fn full_depletion_floors_the_state() {
        let gamma = DirichletParams::all_ones(2, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for x2 in -1..=1 {
            let state = StateVariable::new(0, x2, 3).unwrap();
            let eff = apply_market_order(&state, &gamma, 1.0, Side::Sell, 10_000, &mut rng).unwrap();
            assert_eq!(eff.state_after.x1, -1);
            assert_eq!(eff.state_after.x2, -1);
            assert!(eff.post_same_side.iter().all(|&v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn buy_side_mirrors_sell_side() {
        let gamma = DirichletParams::all_ones(2, 3);
        let state = StateVariable::new(0, 0, 3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let eff = apply_market_order(&state, &gamma, 1.0, Side::Buy, 10_000, &mut rng).unwrap();
        assert_eq!(eff.state_after.x1, 1);
        assert_eq!(eff.state_after.x2, 1);
    }

    #[test]
    fn market_order_never_touches_other_side() {
        let gamma = DirichletParams::all_ones(3, 3);
        let state = StateVariable::new(0, 0, 3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let eff = apply_market_order(&state, &gamma, 0.4, Side::Sell, 10_000, &mut rng).unwrap();
        let pre_asks: Vec<f64> = eff.pre_volumes.iter().step_by(2).copied().collect();
        let pre_bids: Vec<f64> = eff.pre_volumes.iter().skip(1).step_by(2).copied().collect();
        for (post, pre) in eff.post_same_side.iter().zip(&pre_bids) {
            assert!(post <= pre);
        }
        // Ask volumes enter the post-order imbalance unchanged.
        let b: f64 = eff.post_same_side.iter().sum();
        let a: f64 = pre_asks.iter().sum();
        let expected_x2 = discretise_imbalance((b - a) / (b + a), 3).unwrap();
        assert_eq!(eff.state_after.x2, expected_x2);
    }

    #[test]
    fn proxy_cancellation_and_linearity() {
        let path = mid_price_proxy(460650.0, 100, &[(1.0, 1), (2.0, -1)]);
        assert_eq!(path.last().unwrap().1, 460650.0);
        let path = mid_price_proxy(460650.0, 100, &[]);
        assert!(path.is_empty());
        let path = mid_price_proxy(0.0, 100, &[(1.0, 1), (2.0, 1), (3.0, 1)]);
        assert_eq!(path.last().unwrap().1, 150.0);
    }
}
