//! Price-time priority limit order book.
//!
//! Each side is a price-ordered map of FIFO queues. Incoming limit orders
//! match against the opposite side while marketable, walking levels in price
//! priority and queue order within a level. Trades print at the resting
//! order's limit price. Any residue rests at its own limit.

use crate::types::{AgentId, OrderId, Price, Side, Timestamp};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub agent: AgentId,
    pub side: Side,
    pub price: Price,
    pub size: u64,
    pub time: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub time: Timestamp,
    pub price: Price,
    pub size: u64,
    pub buyer: AgentId,
    pub seller: AgentId,
    pub buy_order: OrderId,
    pub sell_order: OrderId,
    pub aggressor: Side,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Submission {
    pub trades: Vec<Trade>,
    /// The unfilled remainder, now resting in the book.
    pub resting: Option<Order>,
}

impl Submission {
    pub fn filled(&self) -> u64 {
        self.trades.iter().map(|t| t.size).sum()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LobError {
    #[error("order id {0} was already used today")]
    DuplicateOrderId(OrderId),
    #[error("order {0} has zero size")]
    EmptyOrder(OrderId),
    #[error("order {id} has non-positive price {price}")]
    NonPositivePrice { id: OrderId, price: Price },
}

/// Aggregated volume at one price.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub price: Price,
    pub volume: u64,
}

/// Top-of-book copy: bids descending, asks ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LobSnapshot {
    pub bids: Vec<Level>,
    pub asks: Vec<Level>,
}

impl LobSnapshot {
    pub fn best_bid(&self) -> Option<Price> {
        self.bids.first().map(|l| l.price)
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.first().map(|l| l.price)
    }

    pub fn mid(&self) -> Option<f64> {
        Some((self.best_bid()?.0 + self.best_ask()?.0) as f64 / 2.0)
    }
}

#[derive(Clone, Debug, Default)]
pub struct OrderBook {
    bids: BTreeMap<Price, VecDeque<Order>>,
    asks: BTreeMap<Price, VecDeque<Order>>,
    index: HashMap<OrderId, (Side, Price)>,
    seen: HashSet<OrderId>,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn submit(&mut self, mut order: Order) -> Result<Submission, LobError> {
        if order.size == 0 {
            return Err(LobError::EmptyOrder(order.id));
        }
        if order.price.0 <= 0 {
            return Err(LobError::NonPositivePrice { id: order.id, price: order.price });
        }
        if !self.seen.insert(order.id) {
            return Err(LobError::DuplicateOrderId(order.id));
        }

        let mut trades = Vec::new();
        let opposite = match order.side {
            Side::Buy => &mut self.asks,
            Side::Sell => &mut self.bids,
        };
        while order.size > 0 {
            let best = match order.side {
                Side::Buy => opposite.first_key_value().map(|(p, _)| *p),
                Side::Sell => opposite.last_key_value().map(|(p, _)| *p),
            };
            let Some(level_price) = best else { break };
            let marketable = match order.side {
                Side::Buy => level_price <= order.price,
                Side::Sell => level_price >= order.price,
            };
            if !marketable {
                break;
            }
            let queue = opposite.get_mut(&level_price).expect("level exists");
            while order.size > 0 {
                let Some(resting) = queue.front_mut() else { break };
                let qty = order.size.min(resting.size);
                let (buyer, seller, buy_order, sell_order) = match order.side {
                    Side::Buy => (order.agent, resting.agent, order.id, resting.id),
                    Side::Sell => (resting.agent, order.agent, resting.id, order.id),
                };
                trades.push(Trade {
                    time: order.time,
                    price: level_price,
                    size: qty,
                    buyer,
                    seller,
                    buy_order,
                    sell_order,
                    aggressor: order.side,
                });
                order.size -= qty;
                resting.size -= qty;
                if resting.size == 0 {
                    let done = queue.pop_front().expect("front exists");
                    self.index.remove(&done.id);
                }
            }
            if queue.is_empty() {
                opposite.remove(&level_price);
            }
        }

        let resting = if order.size > 0 {
            self.index.insert(order.id, (order.side, order.price));
            let own = match order.side {
                Side::Buy => &mut self.bids,
                Side::Sell => &mut self.asks,
            };
            own.entry(order.price).or_default().push_back(order.clone());
            Some(order)
        } else {
            None
        };
        Ok(Submission { trades, resting })
    }

    /// Removes a resting order and returns its remaining size. Unknown,
    /// filled or already-cancelled ids return 0.
    pub fn cancel(&mut self, id: OrderId) -> u64 {
        let Some((side, price)) = self.index.remove(&id) else { return 0 };
        let book = match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        let queue = book.get_mut(&price).expect("indexed level exists");
        let pos = queue.iter().position(|o| o.id == id).expect("indexed order exists");
        let removed = queue.remove(pos).expect("position valid");
        if queue.is_empty() {
            book.remove(&price);
        }
        removed.size
    }

    pub fn snapshot(&self, n_levels: usize) -> LobSnapshot {
        let agg = |(p, q): (&Price, &VecDeque<Order>)| Level {
            price: *p,
            volume: q.iter().map(|o| o.size).sum(),
        };
        LobSnapshot {
            bids: self.bids.iter().rev().take(n_levels).map(agg).collect(),
            asks: self.asks.iter().take(n_levels).map(agg).collect(),
        }
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.last_key_value().map(|(p, _)| *p)
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.first_key_value().map(|(p, _)| *p)
    }

    pub fn mid(&self) -> Option<f64> {
        Some((self.best_bid()?.0 + self.best_ask()?.0) as f64 / 2.0)
    }

    pub fn order(&self, id: OrderId) -> Option<&Order> {
        let (side, price) = self.index.get(&id)?;
        let book = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        book.get(price)?.iter().find(|o| o.id == id)
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.index.contains_key(&id)
    }

    /// Resting orders of one side in matching priority.
    pub fn side_orders(&self, side: Side) -> Vec<Order> {
        match side {
            Side::Buy => self.bids.values().rev().flatten().cloned().collect(),
            Side::Sell => self.asks.values().flatten().cloned().collect(),
        }
    }

    pub fn resting_volume(&self, side: Side) -> u64 {
        let book = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        book.values().flatten().map(|o| o.size).sum()
    }

    pub fn is_crossed(&self) -> bool {
        matches!((self.best_bid(), self.best_ask()), (Some(b), Some(a)) if b >= a)
    }

    pub fn resting_count(&self) -> usize {
        self.index.len()
    }
}
