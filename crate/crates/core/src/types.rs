//! Shared primitive types: prices, timestamps, sides and identifiers.

use serde::{Deserialize, Serialize};
use std::fmt;

pub type AgentId = u32;
pub type OrderId = u64;

/// Nanoseconds in one simulated minute.
pub const NANOS_PER_MINUTE: u64 = 60_000_000_000;

/// Minutes between the 9:30 open and the 16:00 close.
pub const TRADING_MINUTES: usize = 390;

/// Price units per cent. One unit is half a cent, so the investor's
/// 0.5-cent offsets land on whole units.
pub const UNITS_PER_CENT: i64 = 2;

/// Integer price in half-cent units.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(pub i64);

impl Price {
    pub fn units(self) -> i64 {
        self.0
    }

    pub fn cents(self) -> f64 {
        self.0 as f64 / UNITS_PER_CENT as f64
    }

    pub fn from_cents(cents: f64) -> Price {
        Price((cents * UNITS_PER_CENT as f64).round() as i64)
    }

    /// Nearest positive price to a fractional unit value.
    pub fn round_positive(units: f64) -> Price {
        Price((units.round() as i64).max(1))
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Nanoseconds since the market open.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const OPEN: Timestamp = Timestamp(0);

    pub fn from_minutes(minutes: u64) -> Timestamp {
        Timestamp(minutes * NANOS_PER_MINUTE)
    }

    pub fn nanos(self) -> u64 {
        self.0
    }

    /// Index of the minute containing this instant.
    pub fn minute(self) -> usize {
        (self.0 / NANOS_PER_MINUTE) as usize
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    /// +1 for buys, -1 for sells.
    pub fn sign(self) -> i64 {
        match self {
            Side::Buy => 1,
            Side::Sell => -1,
        }
    }
}

/// Cash and share position of a single agent. Cash is kept in price units
/// so that all accounting stays in integers.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub cash: i64,
    pub holdings: i64,
}

impl Account {
    pub fn with_cash_cents(cents: i64) -> Account {
        Account { cash: cents * UNITS_PER_CENT, holdings: 0 }
    }

    pub fn cash_cents(&self) -> f64 {
        self.cash as f64 / UNITS_PER_CENT as f64
    }

    /// Marked-to-market value at `mark`.
    pub fn value_at(&self, mark: Price) -> i64 {
        self.cash + self.holdings * mark.0
    }

    pub fn apply_fill(&mut self, side: Side, price: Price, size: u64) {
        let qty = size as i64;
        self.holdings += side.sign() * qty;
        self.cash -= side.sign() * qty * price.0;
    }
}

/// Stable 64-bit mixing (splitmix64 finalizer). Used to derive independent
/// RNG seeds from a master seed without depending on insertion order.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_cent_units() {
        assert_eq!(Price::from_cents(0.5), Price(1));
        assert_eq!(Price(200_000).cents(), 100_000.0);
        assert_eq!(Price::round_positive(-4.0), Price(1));
    }

    #[test]
    fn fills_move_cash_and_shares() {
        let mut acct = Account::with_cash_cents(1_000_000);
        acct.apply_fill(Side::Buy, Price(1000), 2);
        assert_eq!(acct.holdings, 2);
        assert_eq!(acct.cash, 2_000_000 - 2000);
        acct.apply_fill(Side::Sell, Price(1010), 2);
        assert_eq!(acct.value_at(Price(5)), 2_000_020);
    }

    #[test]
    fn seed_mixing_separates_streams() {
        assert_ne!(mix_seed(7, 1), mix_seed(7, 2));
        assert_eq!(mix_seed(7, 1), mix_seed(7, 1));
    }
}
