use crate::types::{Price, Side};
use serde::{Deserialize, Serialize};

pub const N_ACTIONS: usize = 9;

/// Shares per investor order.
pub const ORDER_SIZE: u64 = 2;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Buy,
    Hold,
    Sell,
}

/// One of the nine investor actions. Index 0 is hold, 1..=4 buy at
/// 1..=4 units below the mid, 5..=8 sell at 1..=4 units above it.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSpec {
    pub direction: Direction,
    /// Offset index 0..=3; zero for hold.
    pub offset: u8,
}

impl ActionSpec {
    pub const HOLD: ActionSpec = ActionSpec { direction: Direction::Hold, offset: 0 };

    pub fn from_index(i: usize) -> Option<ActionSpec> {
        match i {
            0 => Some(Self::HOLD),
            1..=4 => Some(ActionSpec { direction: Direction::Buy, offset: (i - 1) as u8 }),
            5..=8 => Some(ActionSpec { direction: Direction::Sell, offset: (i - 5) as u8 }),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self.direction {
            Direction::Hold => 0,
            Direction::Buy => 1 + self.offset as usize,
            Direction::Sell => 5 + self.offset as usize,
        }
    }

    /// Distance from the mid in price units (half-cents).
    pub fn offset_units(self) -> i64 {
        self.offset as i64 + 1
    }

    /// +1 buy, 0 hold, -1 sell.
    pub fn direction_value(self) -> f64 {
        match self.direction {
            Direction::Buy => 1.0,
            Direction::Hold => 0.0,
            Direction::Sell => -1.0,
        }
    }

    /// Side and limit price for this action around `mid`, or `None` for hold.
    pub fn limit_order(self, mid: f64) -> Option<(Side, Price)> {
        let off = self.offset_units() as f64;
        match self.direction {
            Direction::Hold => None,
            Direction::Buy => Some((Side::Buy, Price(((mid - off).ceil() as i64).max(1)))),
            Direction::Sell => Some((Side::Sell, Price((mid + off).floor() as i64))),
        }
    }
}
