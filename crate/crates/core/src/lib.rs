//! Limit-order-book market simulator with reinforcement-learning investors
//! whose decisions can be bent by behavioural biases.

pub mod agents;
pub mod explain;
pub mod fundamental;
pub mod harness;
pub mod lob;
pub mod metrics;
pub mod model;
pub mod rl;
pub mod sim;
pub mod types;

pub use lob::{Order, OrderBook, Trade};
pub use types::{Account, AgentId, OrderId, Price, Side, Timestamp};
