//! Order-book metrics, the investor's observation vector, and the daily
//! market-quality report.

use crate::fundamental::FundamentalPath;
use crate::lob::LobSnapshot;
use crate::sim::DayLog;
use crate::types::{Account, Price, Side, Timestamp, NANOS_PER_MINUTE};
use serde::{Deserialize, Serialize};

/// Mid, spread, depth and volume imbalance of one snapshot. Components
/// needing an empty side are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LobMetrics {
    pub mid: Option<f64>,
    pub spread: Option<f64>,
    pub depth: Option<f64>,
    pub imbalance: Option<f64>,
}

pub fn lob_metrics(snap: &LobSnapshot) -> LobMetrics {
    let (bb, ba) = (snap.bids.first(), snap.asks.first());
    let (wb, wa) = (snap.bids.last(), snap.asks.last());
    let both = |f: &dyn Fn(f64, f64) -> f64, b: Option<Price>, a: Option<Price>| match (b, a) {
        (Some(b), Some(a)) => Some(f(b.0 as f64, a.0 as f64)),
        _ => None,
    };
    let bid_vol: u64 = snap.bids.iter().map(|l| l.volume).sum();
    let ask_vol: u64 = snap.asks.iter().map(|l| l.volume).sum();
    LobMetrics {
        mid: both(&|b, a| (a + b) / 2.0, bb.map(|l| l.price), ba.map(|l| l.price)),
        spread: both(&|b, a| a - b, bb.map(|l| l.price), ba.map(|l| l.price)),
        depth: both(&|b, a| a - b, wb.map(|l| l.price), wa.map(|l| l.price)),
        imbalance: (bid_vol + ask_vol > 0).then(|| bid_vol as f64 / (bid_vol + ask_vol) as f64),
    }
}

/// Momentum `p(t)/p(t-delta)` and population stddev of `p(t-delta..=t)`.
/// With less than `delta` minutes of history returns the warm-up values
/// (1.0, 0.0).
pub fn series_metrics(prices: &[f64], t: usize, delta: usize) -> (f64, f64) {
    if t < delta || t >= prices.len() || delta == 0 {
        return (1.0, 0.0);
    }
    let window = &prices[t - delta..=t];
    let momentum = prices[t] / prices[t - delta];
    (momentum, population_std(window))
}

pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Signed `(p - m) / m`. `None` when the mid is missing or not positive.
pub fn relative_effective_spread(traded: f64, mid: Option<f64>) -> Option<f64> {
    let m = mid?;
    (m > 0.0).then(|| (traded - m) / m)
}

/// Names of the observation features, in vector order.
pub const FEATURE_NAMES: [&str; 14] = [
    "cash",
    "holdings",
    "momentum_1",
    "momentum_10",
    "momentum_30",
    "spread",
    "depth",
    "volatility_30",
    "quote_open_orders",
    "quote_mean_distance",
    "quote_volume",
    "trade_volume",
    "trade_mean_distance",
    "trade_net_volume",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

/// The investor's observation at a wakeup.
///
/// `last_price` (the mark used for portfolio value) and `mid` ride along
/// for accounting and order placement; they are not policy features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub cash: i64,
    pub holdings: i64,
    pub last_price: i64,
    pub mid: f64,
    pub momentum_1: f64,
    pub momentum_10: f64,
    pub momentum_30: f64,
    pub spread: f64,
    pub depth: f64,
    pub volatility_30: f64,
    pub quote_open_orders: f64,
    pub quote_mean_distance: f64,
    pub quote_volume: f64,
    pub trade_volume: f64,
    pub trade_mean_distance: f64,
    pub trade_net_volume: f64,
}

impl StateVector {
    pub fn portfolio_value(&self) -> i64 {
        self.cash + self.holdings * self.last_price
    }

    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.cash as f64,
            self.holdings as f64,
            self.momentum_1,
            self.momentum_10,
            self.momentum_30,
            self.spread,
            self.depth,
            self.volatility_30,
            self.quote_open_orders,
            self.quote_mean_distance,
            self.quote_volume,
            self.trade_volume,
            self.trade_mean_distance,
            self.trade_net_volume,
        ]
    }

    /// Copy with the policy features replaced by `x`.
    pub fn with_features(&self, x: &[f64]) -> StateVector {
        assert_eq!(x.len(), N_FEATURES, "feature vector length");
        StateVector {
            cash: x[0].round() as i64,
            holdings: x[1].round() as i64,
            last_price: self.last_price,
            mid: self.mid,
            momentum_1: x[2],
            momentum_10: x[3],
            momentum_30: x[4],
            spread: x[5],
            depth: x[6],
            volatility_30: x[7],
            quote_open_orders: x[8],
            quote_mean_distance: x[9],
            quote_volume: x[10],
            trade_volume: x[11],
            trade_mean_distance: x[12],
            trade_net_volume: x[13],
        }
    }
}

/// One trade as seen by market-data consumers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TradePrint {
    pub time: Timestamp,
    pub price: Price,
    pub size: u64,
    pub aggressor: Side,
    pub mid_before: Option<f64>,
}

/// Minute-sampled market series built up during a day. Index `k` of the
/// boundary vectors is the market as of minute boundary `k`.
#[derive(Clone, Debug, Default)]
pub struct MarketHistory {
    pub boundary_prices: Vec<f64>,
    pub boundary_mids: Vec<Option<f64>>,
    pub boundary_spreads: Vec<Option<f64>>,
    pub boundary_depths: Vec<Option<f64>>,
    pub trades: Vec<TradePrint>,
}

impl MarketHistory {
    pub fn new(opening_mark: Price) -> Self {
        MarketHistory {
            boundary_prices: vec![opening_mark.0 as f64],
            boundary_mids: vec![None],
            boundary_spreads: vec![None],
            boundary_depths: vec![None],
            trades: Vec::new(),
        }
    }

    /// Trades printed in `(now - window, now]`.
    pub fn trades_since(&self, now: Timestamp, window_ns: u64) -> &[TradePrint] {
        let from = now.0.saturating_sub(window_ns);
        let start = self.trades.partition_point(|t| t.time.0 <= from && now.0 >= window_ns);
        let end = self.trades.partition_point(|t| t.time.0 <= now.0);
        &self.trades[start.min(end)..end]
    }

    fn carry<T: Copy>(xs: &[Option<T>]) -> Option<T> {
        xs.iter().rev().find_map(|x| *x)
    }
}

/// An order the investor placed, with its distance from the mid at the time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuotePrint {
    pub time: Timestamp,
    pub size: u64,
    pub distance: f64,
}

/// The investor's own order activity, used for the quote-history summary.
#[derive(Clone, Debug, Default)]
pub struct QuoteActivity {
    pub quotes: Vec<QuotePrint>,
    pub open_orders: usize,
}

pub const HISTORY_WINDOW_NS: u64 = 5 * NANOS_PER_MINUTE;

/// Assemble the observation at minute `minute`. `live` is the book at the
/// decision instant; missing spread or depth fall back to the last defined
/// boundary value, then to zero.
pub fn build_state_vector(
    account: &Account,
    history: &MarketHistory,
    activity: &QuoteActivity,
    minute: usize,
    now: Timestamp,
    live: &LobSnapshot,
) -> StateVector {
    let prices = &history.boundary_prices;
    let t = minute.min(prices.len().saturating_sub(1));
    let (m1, _) = series_metrics(prices, t, 1);
    let (m10, _) = series_metrics(prices, t, 10);
    let (m30, vol30) = series_metrics(prices, t, 30);
    let live_metrics = lob_metrics(live);
    let spread = live_metrics
        .spread
        .or_else(|| MarketHistory::carry(&history.boundary_spreads))
        .unwrap_or(0.0);
    let depth = live_metrics
        .depth
        .or_else(|| MarketHistory::carry(&history.boundary_depths))
        .unwrap_or(0.0);
    let last_price = prices[t];
    let mid = live_metrics
        .mid
        .or_else(|| MarketHistory::carry(&history.boundary_mids))
        .unwrap_or(last_price);

    let from = now.0.saturating_sub(HISTORY_WINDOW_NS);
    let recent_quotes: Vec<&QuotePrint> =
        activity.quotes.iter().rev().take_while(|q| q.time.0 > from || now.0 < HISTORY_WINDOW_NS).collect();
    let quote_volume: u64 = recent_quotes.iter().map(|q| q.size).sum();
    let quote_mean_distance = if recent_quotes.is_empty() {
        0.0
    } else {
        recent_quotes.iter().map(|q| q.distance).sum::<f64>() / recent_quotes.len() as f64
    };

    let recent_trades = history.trades_since(now, HISTORY_WINDOW_NS);
    let trade_volume: u64 = recent_trades.iter().map(|t| t.size).sum();
    let net: i64 = recent_trades.iter().map(|t| t.aggressor.sign() * t.size as i64).sum();
    let dists: Vec<f64> = recent_trades
        .iter()
        .filter_map(|t| t.mid_before.map(|m| (t.price.0 as f64 - m).abs()))
        .collect();
    let trade_mean_distance =
        if dists.is_empty() { 0.0 } else { dists.iter().sum::<f64>() / dists.len() as f64 };

    StateVector {
        cash: account.cash,
        holdings: account.holdings,
        last_price: last_price.round() as i64,
        mid,
        momentum_1: m1,
        momentum_10: m10,
        momentum_30: m30,
        spread,
        depth,
        volatility_30: vol30,
        quote_open_orders: activity.open_orders as f64,
        quote_mean_distance,
        quote_volume: quote_volume as f64,
        trade_volume: trade_volume as f64,
        trade_mean_distance,
        trade_net_volume: net as f64,
    }
}

/// Liquidity, volatility and efficiency measures of one simulated day.
/// Fields that need trades are `None` on days with fewer than two trades.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketQualityReport {
    pub mean_spread: Option<f64>,
    pub mean_abs_res: Option<f64>,
    pub volume: u64,
    pub std_30min_ret: Option<f64>,
    pub price_range: Option<f64>,
    pub abs_ret: Option<f64>,
    pub mid_return_ar1: Option<f64>,
    pub mean_abs_tp_fp_rel: Option<f64>,
    /// Unnormalized `|TP - FP|`, kept alongside the relative form.
    pub mean_abs_tp_fp: Option<f64>,
}

impl MarketQualityReport {
    pub const METRIC_NAMES: [&'static str; 9] = [
        "mean_spread",
        "mean_abs_res",
        "volume",
        "std_30min_ret",
        "price_range",
        "abs_ret",
        "mid_return_ar1",
        "mean_abs_tp_fp_rel",
        "mean_abs_tp_fp",
    ];

    pub fn values(&self) -> [Option<f64>; 9] {
        [
            self.mean_spread,
            self.mean_abs_res,
            Some(self.volume as f64),
            self.std_30min_ret,
            self.price_range,
            self.abs_ret,
            self.mid_return_ar1,
            self.mean_abs_tp_fp_rel,
            self.mean_abs_tp_fp,
        ]
    }
}

fn mean_of(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Lag-1 sample autocorrelation. `None` for fewer than three points or a
/// constant series.
pub fn lag1_autocorrelation(xs: &[f64]) -> Option<f64> {
    if xs.len() < 3 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let denom: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    if denom <= f64::EPSILON * n * mean.abs().max(1.0) {
        return None;
    }
    let num: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    Some((num / denom).clamp(-1.0, 1.0))
}

pub fn daily_quality_report(log: &DayLog, fundamental: &FundamentalPath) -> MarketQualityReport {
    let snaps = &log.snapshots;
    let mean_spread = mean_of(snaps.iter().filter_map(|s| match (s.best_bid, s.best_ask) {
        (Some(b), Some(a)) => Some((a.0 - b.0) as f64),
        _ => None,
    }));
    let mean_abs_res = mean_of(
        snaps
            .iter()
            .filter_map(|s| relative_effective_spread(s.last_trade?.0 as f64, s.mid).map(f64::abs)),
    );
    let volume = log.trades.iter().map(|t| t.size).sum();

    let enough_trades = log.trades.len() >= 2;
    let traded: Vec<Option<f64>> = snaps.iter().map(|s| s.last_trade.map(|p| p.0 as f64)).collect();
    let std_30min_ret = enough_trades
        .then(|| {
            let rets: Vec<f64> = (30..traded.len())
                .filter_map(|t| Some(traded[t]? / traded[t - 30]?))
                .collect();
            (!rets.is_empty()).then(|| population_std(&rets))
        })
        .flatten();
    let price_range = enough_trades.then(|| {
        let hi = log.trades.iter().map(|t| t.price.0).max().unwrap_or(0);
        let lo = log.trades.iter().map(|t| t.price.0).min().unwrap_or(0);
        (hi - lo) as f64
    });
    let abs_ret = enough_trades.then(|| {
        let open = log.trades.first().map(|t| t.price.0 as f64).unwrap_or(1.0);
        let close = log.trades.last().map(|t| t.price.0 as f64).unwrap_or(1.0);
        (close / open - 1.0).abs()
    });

    let mut mids = Vec::with_capacity(snaps.len());
    let mut last_mid = None;
    for s in snaps {
        if s.mid.is_some() {
            last_mid = s.mid;
        }
        if let Some(m) = last_mid {
            mids.push(m);
        }
    }
    let mid_rets: Vec<f64> = mids.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let mid_return_ar1 = lag1_autocorrelation(&mid_rets);

    let gaps: Vec<(f64, f64)> = snaps
        .iter()
        .filter_map(|s| {
            let tp = s.last_trade?.0 as f64;
            let fp = fundamental.at(s.minute + 1);
            Some(((tp - fp).abs(), fp))
        })
        .collect();
    MarketQualityReport {
        mean_spread,
        mean_abs_res,
        volume,
        std_30min_ret,
        price_range,
        abs_ret,
        mid_return_ar1,
        mean_abs_tp_fp_rel: mean_of(gaps.iter().map(|(d, fp)| d / fp)),
        mean_abs_tp_fp: mean_of(gaps.iter().map(|(d, _)| *d)),
    }
}
