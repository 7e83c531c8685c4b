//! Shared test oracles: a brute-force matching engine independent of the
//! decomposition formula, adaptive quadrature for compensator checks, and
//! random model generators.
#![allow(dead_code)]

use rand::Rng;
use sdhawkes::hawkes::{intensity_at, History, HawkesParams, TransitionMatrices};
use sdhawkes::lob::{BookSnapshot, LimitOrder, Side, BUY_MARKET_PRICE};

/// A price-level book that processes limit orders by the exchange matching
/// rules, level by level. Serves as the oracle for the order decomposition:
/// it never looks at `q_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineBook {
    /// Bid levels, price descending.
    pub bids: Vec<(i64, f64)>,
    /// Ask levels, price ascending.
    pub asks: Vec<(i64, f64)>,
}

impl EngineBook {
    pub fn from_snapshot(snap: &BookSnapshot) -> Self {
        let bids = snap
            .bid_volumes
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, &v)| (snap.bid_price(i + 1), v))
            .collect();
        let asks = snap
            .ask_volumes
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, &v)| (snap.ask_price(i + 1), v))
            .collect();
        Self { bids, asks }
    }

    /// Processes a limit order exactly as the matching algorithm would:
    /// match against the opposite side at prices no worse than the limit,
    /// then queue any remainder at the limit price.
    pub fn apply(&mut self, order: &LimitOrder) {
        let mut remaining = order.size;
        match order.direction {
            Side::Sell => {
                while remaining > 0.0 {
                    match self.bids.first_mut() {
                        Some((price, vol)) if *price >= order.price => {
                            let take = remaining.min(*vol);
                            *vol -= take;
                            remaining -= take;
                            if *vol <= 0.0 {
                                self.bids.remove(0);
                            }
                        }
                        _ => break,
                    }
                }
                if remaining > 0.0 && order.price > 0 {
                    insert_level(&mut self.asks, order.price, remaining, true);
                }
            }
            Side::Buy => {
                while remaining > 0.0 {
                    match self.asks.first_mut() {
                        Some((price, vol)) if *price <= order.price => {
                            let take = remaining.min(*vol);
                            *vol -= take;
                            remaining -= take;
                            if *vol <= 0.0 {
                                self.asks.remove(0);
                            }
                        }
                        _ => break,
                    }
                }
                if remaining > 0.0 && order.price < BUY_MARKET_PRICE {
                    insert_level(&mut self.bids, order.price, remaining, false);
                }
            }
        }
    }
}

fn insert_level(levels: &mut Vec<(i64, f64)>, price: i64, size: f64, ascending: bool) {
    for (i, (p, v)) in levels.iter_mut().enumerate() {
        if *p == price {
            *v += size;
            return;
        }
        let passed = if ascending { *p > price } else { *p < price };
        if passed {
            levels.insert(i, (price, size));
            return;
        }
    }
    levels.push((price, size));
}

/// Random book with at most `max_levels` levels and integer volumes (so the
/// bit-identity comparison is exact).
pub fn random_book<R: Rng>(rng: &mut R, max_levels: usize) -> BookSnapshot {
    let tick = 100i64;
    let levels = rng.random_range(1..=max_levels);
    let best_bid = tick * rng.random_range(4000..5000);
    let spread_ticks = rng.random_range(1..=3);
    let best_ask = best_bid + spread_ticks * tick;
    let mut bid_volumes = Vec::with_capacity(levels);
    let mut ask_volumes = Vec::with_capacity(levels);
    for i in 0..levels {
        let lo = if i == 0 { 1 } else { 0 };
        bid_volumes.push(rng.random_range(lo..=1000) as f64);
        ask_volumes.push(rng.random_range(lo..=1000) as f64);
    }
    BookSnapshot::new(best_ask, best_bid, ask_volumes, bid_volumes, tick).unwrap()
}

/// Random order priced on the grid near the touch, integer size.
pub fn random_order<R: Rng>(rng: &mut R, book: &BookSnapshot, time: f64) -> LimitOrder {
    let side = if rng.random::<bool>() { Side::Buy } else { Side::Sell };
    let offset_ticks = rng.random_range(-6..=6);
    let anchor = match side {
        Side::Sell => book.best_bid_price,
        Side::Buy => book.best_ask_price,
    };
    let price = (anchor + offset_ticks * book.tick_size).max(book.tick_size);
    let size = rng.random_range(1..=3000) as f64;
    LimitOrder::new(time, size, price, side).unwrap()
}

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 40)
}

/// Numerical compensator increment: quadrature of the intensity, integrated
/// piecewise between event times so every segment is smooth.
pub fn quad_compensator(
    params: &HawkesParams,
    history: &History,
    t0: f64,
    t1: f64,
    target: usize,
    tol: f64,
) -> f64 {
    let mut cuts = vec![t0];
    for ev in &history.events {
        if ev.time > t0 && ev.time < t1 {
            cuts.push(ev.time);
        }
    }
    cuts.push(t1);
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let f = |t: f64| intensity_at(params, history, t, target);
        acc += adaptive_simpson(&f, w[0], w[1], tol);
    }
    acc
}

/// Random state-dependent parameters rescaled to the requested spectral-radius
/// heuristic.
pub fn random_params<R: Rng>(
    rng: &mut R,
    d_e: usize,
    d_s: usize,
    radius_target: f64,
) -> HawkesParams {
    let mut params = HawkesParams {
        d_e,
        d_s,
        nu: (0..d_e).map(|_| 0.02 + 0.1 * rng.random::<f64>()).collect(),
        alpha: vec![0.0; d_e * d_s * d_e],
        beta: vec![2.0; d_e * d_s * d_e],
    };
    for i in 0..params.alpha.len() {
        params.alpha[i] = 0.02 + rng.random::<f64>();
        params.beta[i] = 1.55 + rng.random::<f64>();
    }
    let radius = params.spectral_radius_heuristic();
    let scale = radius_target / radius;
    for i in 0..params.alpha.len() {
        params.alpha[i] *= scale;
    }
    params
}

/// Random row-stochastic transitions.
pub fn random_transitions<R: Rng>(rng: &mut R, d_e: usize, d_s: usize) -> TransitionMatrices {
    let mut transitions = TransitionMatrices::identity(d_e, d_s);
    for e in 0..d_e {
        for x in 0..d_s {
            let mut row: Vec<f64> = (0..d_s).map(|_| rng.random::<f64>().max(1e-3)).collect();
            let sum: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= sum;
            }
            // Exact unit sum, largest entry absorbs the residual.
            let total: f64 = row.iter().sum();
            let residual = 1.0 - total;
            if residual != 0.0 {
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                row[argmax] += residual;
            }
            transitions.set_row(e, x, &row);
        }
    }
    transitions
}

/// Sample mean and standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
