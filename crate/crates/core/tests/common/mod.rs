//! Reference implementations shared by the integration tests. Each one is
//! written from the textbook definition, independently of the library.
#![allow(dead_code)]

pub mod criteria;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use sublob::lob::{LobError, Submission};
use sublob::{Order, OrderBook, OrderId, Price, Side, Timestamp, Trade};

/// Linear-scan price-time matcher.
#[derive(Default)]
pub struct NaiveBook {
    resting: Vec<(u64, Order)>,
    seen: HashSet<OrderId>,
    seq: u64,
}

impl NaiveBook {
    fn better(side: Side, a: (Price, u64), b: (Price, u64)) -> bool {
        match side {
            Side::Buy => a.0 > b.0 || (a.0 == b.0 && a.1 < b.1),
            Side::Sell => a.0 < b.0 || (a.0 == b.0 && a.1 < b.1),
        }
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
        let counter = match order.side {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        };
        while order.size > 0 {
            let mut best: Option<usize> = None;
            for (i, (seq, o)) in self.resting.iter().enumerate() {
                let crosses = match order.side {
                    Side::Buy => o.price <= order.price,
                    Side::Sell => o.price >= order.price,
                };
                if o.side != counter || !crosses {
                    continue;
                }
                let take = match best {
                    None => true,
                    Some(j) => {
                        let (bs, bo) = &self.resting[j];
                        Self::better(counter, (o.price, *seq), (bo.price, *bs))
                    }
                };
                if take {
                    best = Some(i);
                }
            }
            let Some(i) = best else { break };
            let r = &mut self.resting[i].1;
            let qty = order.size.min(r.size);
            let (buyer, seller, buy_order, sell_order) = if order.side == Side::Buy {
                (order.agent, r.agent, order.id, r.id)
            } else {
                (r.agent, order.agent, r.id, order.id)
            };
            trades.push(Trade {
                time: order.time,
                price: r.price,
                size: qty,
                buyer,
                seller,
                buy_order,
                sell_order,
                aggressor: order.side,
            });
            order.size -= qty;
            r.size -= qty;
            if r.size == 0 {
                self.resting.remove(i);
            }
        }
        let resting = (order.size > 0).then(|| {
            self.seq += 1;
            self.resting.push((self.seq, order.clone()));
            order
        });
        Ok(Submission { trades, resting })
    }

    pub fn cancel(&mut self, id: OrderId) -> u64 {
        match self.resting.iter().position(|(_, o)| o.id == id) {
            Some(i) => self.resting.remove(i).1.size,
            None => 0,
        }
    }

    pub fn side_orders(&self, side: Side) -> Vec<Order> {
        let mut v: Vec<&(u64, Order)> = self.resting.iter().filter(|(_, o)| o.side == side).collect();
        v.sort_by(|a, b| {
            if Self::better(side, (a.1.price, a.0), (b.1.price, b.0)) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        });
        v.into_iter().map(|(_, o)| o.clone()).collect()
    }
}

#[derive(Clone, Debug)]
pub enum Event {
    Submit(Order),
    Cancel(OrderId),
}

/// A random event stream around a slowly drifting centre, with occasional
/// malformed orders, duplicate ids and cancels of unknown ids.
pub fn random_stream(seed: u64, len: usize) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(len);
    let mut next_id: OrderId = 1;
    let mut centre: i64 = 1000;
    let mut t = 0u64;
    for _ in 0..len {
        t += rng.random_range(0..3);
        centre = (centre + rng.random_range(-1..=1)).max(20);
        let roll: f64 = rng.random();
        if roll < 0.3 && next_id > 1 {
            events.push(Event::Cancel(rng.random_range(1..next_id + 3)));
            continue;
        }
        let id = if roll < 0.31 && next_id > 1 { rng.random_range(1..next_id) } else { next_id };
        next_id = next_id.max(id + 1);
        let side = if rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
        let skew = if side == Side::Buy { -2 } else { 2 };
        let mut price = centre + skew + rng.random_range(-6..=6);
        let mut size = rng.random_range(1..=10);
        if rng.random_bool(0.005) {
            size = 0;
        }
        if rng.random_bool(0.005) {
            price = -rng.random_range(0..3);
        }
        events.push(Event::Submit(Order {
            id,
            agent: rng.random_range(0..8),
            side,
            price: Price(price),
            size,
            time: Timestamp(t),
        }));
    }
    events
}

/// Replays a stream through both books; `Err` names the first divergence.
pub fn compare_stream(events: &[Event]) -> Result<usize, String> {
    let mut book = OrderBook::new();
    let mut naive = NaiveBook::default();
    let mut trades = 0;
    for (k, e) in events.iter().enumerate() {
        match e {
            Event::Submit(o) => {
                let a = book.submit(o.clone());
                let b = naive.submit(o.clone());
                if a != b {
                    return Err(format!("event {k}: book {a:?} vs reference {b:?}"));
                }
                trades += a.map_or(0, |s| s.trades.len());
            }
            Event::Cancel(id) => {
                let (a, b) = (book.cancel(*id), naive.cancel(*id));
                if a != b {
                    return Err(format!("event {k}: cancel {id} returned {a} vs {b}"));
                }
            }
        }
        if book.is_crossed() {
            return Err(format!("event {k}: book crossed"));
        }
    }
    for side in [Side::Buy, Side::Sell] {
        if book.side_orders(side) != naive.side_orders(side) {
            return Err(format!("final {side:?} side differs"));
        }
    }
    Ok(trades)
}

/// Plain value iteration on an explicit MDP: `p[s][a]` lists
/// `(probability, reward, next)`, `None` meaning terminal.
pub type Mdp = Vec<Vec<Vec<(f64, f64, Option<usize>)>>>;

pub fn value_iteration(mdp: &Mdp, gamma: f64, sweeps: usize) -> Vec<Vec<f64>> {
    let n = mdp.len();
    let mut v = vec![0.0; n];
    let mut q = vec![vec![0.0; 0]; n];
    for _ in 0..sweeps {
        q = mdp
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|succ| succ.iter().map(|&(p, r, nx)| p * (r + gamma * nx.map_or(0.0, |j| v[j]))).sum())
                    .collect()
            })
            .collect();
        v = q.iter().map(|row: &Vec<f64>| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    }
    q
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300) || a == b
}

/// Chi-square upper tail for integer degrees of freedom (series for the
/// regularised incomplete gamma function).
pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    let a = dof as f64 / 2.0;
    let z = x / 2.0;
    // lower regularised gamma via series
    let mut sum = 1.0 / a;
    let mut term = sum;
    for n in 1..10_000 {
        term *= z / (a + n as f64);
        sum += term;
        if term < sum * 1e-16 {
            break;
        }
    }
    let ln_gamma_a = ln_gamma(a);
    let lower = (a * z.ln() - z - ln_gamma_a).exp() * sum;
    (1.0 - lower).max(0.0)
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut s = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        s += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random()
}
