//! Rule-based background traders: value agents, a market maker, momentum
//! agents and noise agents. This module holds their configuration and the
//! pure decision rules; the simulation kernel owns their state and timing.

use crate::types::{Price, Side};
use rand::Rng;
use rand_distr::{Distribution, Exp, Pareto};
use serde::{Deserialize, Serialize};

/// What an agent wants to do at a wakeup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Intent {
    Hold,
    Place { side: Side, price: Price, size: u64 },
}

/// Where a value agent puts its limit price.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuePricing {
    /// At the mid, rounded toward the passive side.
    Mid,
    /// At the mid, rounded toward the opposite touch so a one-unit spread
    /// trades immediately.
    MidMarketable,
    /// At the observed fundamental, trading through the book up to it.
    Observed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueAgentConfig {
    /// Poisson arrival rate per nanosecond.
    pub arrival_rate: f64,
    /// Stddev of the fundamental observation noise, in price units.
    pub obs_stddev: f64,
    pub order_size: u64,
    pub pricing: ValuePricing,
}

impl Default for ValueAgentConfig {
    fn default() -> Self {
        ValueAgentConfig {
            arrival_rate: 5.7e-12,
            obs_stddev: 100.0,
            order_size: 100,
            pricing: ValuePricing::Observed,
        }
    }
}

/// Which mid the market maker centres its ladder on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuoteReference {
    /// The whole book, own quotes included, before requoting.
    Book,
    /// The book left after withdrawing its own quotes.
    Others,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketMakerConfig {
    pub wake_interval_minutes: u64,
    pub level_size: u64,
    /// Distances from the mid, in price units, quoted on each side.
    pub offsets: Vec<i64>,
    pub reference: QuoteReference,
}

impl Default for MarketMakerConfig {
    fn default() -> Self {
        MarketMakerConfig {
            wake_interval_minutes: 1,
            level_size: 10,
            offsets: (1..=10).collect(),
            reference: QuoteReference::Others,
        }
    }
}

impl MarketMakerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.offsets.is_empty() {
            return Err("market maker needs at least one quote offset".into());
        }
        if self.offsets[0] <= 0 || self.offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err("market maker offsets must be positive and strictly increasing".into());
        }
        if self.level_size == 0 || self.wake_interval_minutes == 0 {
            return Err("market maker size and wake interval must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentumConfig {
    pub wake_interval_minutes: u64,
    pub short_window: usize,
    pub long_window: usize,
    pub order_size: u64,
}

impl Default for MomentumConfig {
    fn default() -> Self {
        MomentumConfig { wake_interval_minutes: 5, short_window: 20, long_window: 50, order_size: 100 }
    }
}

impl MomentumConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.short_window == 0 || self.short_window >= self.long_window {
            return Err("momentum windows need 0 < short < long".into());
        }
        if self.wake_interval_minutes == 0 || self.order_size == 0 {
            return Err("momentum wake interval and size must be positive".into());
        }
        Ok(())
    }
}

/// Pareto order sizes: mean is `shape * scale / (shape - 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub size_shape: f64,
    pub size_scale: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { size_shape: 2.0, size_scale: 50.0 }
    }
}

impl NoiseConfig {
    pub fn mean_size(&self) -> f64 {
        self.size_shape * self.size_scale / (self.size_shape - 1.0)
    }
}

/// Trade toward the observed fundamental: sell when the mid is rich, buy
/// when it is cheap.
pub fn value_agent_decide(observed: Price, mid: f64, size: u64, pricing: ValuePricing) -> Intent {
    let obs = observed.0 as f64;
    let side = if mid > obs {
        Side::Sell
    } else if mid < obs {
        Side::Buy
    } else {
        return Intent::Hold;
    };
    let price = match (pricing, side) {
        (ValuePricing::Observed, _) => observed,
        (ValuePricing::Mid, Side::Sell) => Price(mid.ceil() as i64),
        (ValuePricing::Mid, Side::Buy) => Price((mid.floor() as i64).max(1)),
        (ValuePricing::MidMarketable, Side::Sell) => Price((mid.floor() as i64).max(1)),
        (ValuePricing::MidMarketable, Side::Buy) => Price(mid.ceil() as i64),
    };
    Intent::Place { side, price, size }
}

/// Symmetric quote ladder around `mid`. Half-unit mids round outward.
pub fn market_maker_decide(mid: f64, cfg: &MarketMakerConfig) -> Vec<Intent> {
    let mut out = Vec::with_capacity(cfg.offsets.len() * 2);
    for &off in &cfg.offsets {
        let bid = (mid - off as f64).floor() as i64;
        if bid > 0 {
            out.push(Intent::Place { side: Side::Buy, price: Price(bid), size: cfg.level_size });
        }
    }
    for &off in &cfg.offsets {
        let ask = (mid + off as f64).ceil() as i64;
        out.push(Intent::Place { side: Side::Sell, price: Price(ask), size: cfg.level_size });
    }
    out
}

/// Compare short- and long-window means of the mid series. Returns the
/// direction to trade, or `None` to hold.
pub fn momentum_agent_decide(mids: &[f64], cfg: &MomentumConfig) -> Option<Side> {
    if mids.len() < cfg.long_window {
        return None;
    }
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    let short = mean(&mids[mids.len() - cfg.short_window..]);
    let long = mean(&mids[mids.len() - cfg.long_window..]);
    if short > long {
        Some(Side::Buy)
    } else if short < long {
        Some(Side::Sell)
    } else {
        None
    }
}

/// Random side and heavy-tailed size for a noise trader.
pub fn sample_noise_order<R: Rng + ?Sized>(cfg: &NoiseConfig, rng: &mut R) -> (Side, u64) {
    let side = if rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
    let pareto = Pareto::new(cfg.size_scale, cfg.size_shape).expect("valid pareto parameters");
    let size = pareto.sample(rng).round().max(1.0) as u64;
    (side, size)
}

/// Exponential inter-arrival time in nanoseconds for a Poisson process
/// with `rate` arrivals per nanosecond. Always at least 1ns.
pub fn sample_poisson_gap<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    assert!(rate > 0.0, "arrival rate must be positive");
    let exp = Exp::new(rate).expect("positive rate");
    let gap: f64 = exp.sample(rng);
    (gap.round() as u64).max(1)
}
