//! Discrete-event simulation of one trading day.
//!
//! Events are ordered by `(time, insertion sequence)`. Minute-close events
//! are queued at construction so they fire before any agent wakeup at the
//! same instant; background agents and investors reschedule themselves as
//! they wake, which keeps the market maker ahead of investors each minute.

use crate::agents::{
    market_maker_decide, momentum_agent_decide, sample_noise_order, sample_poisson_gap,
    value_agent_decide, Intent, QuoteReference, MarketMakerConfig, MomentumConfig, NoiseConfig, ValueAgentConfig,
};
use crate::fundamental::{observe_noisy, FundamentalPath};
use crate::lob::{LobError, Order, OrderBook, Trade};
use crate::metrics::{
    build_state_vector, lob_metrics, MarketHistory, QuoteActivity, QuotePrint, StateVector,
    TradePrint,
};
use crate::rl::action::{ActionSpec, ORDER_SIZE};
use crate::types::{mix_seed, Account, AgentId, OrderId, Price, Side, Timestamp, NANOS_PER_MINUTE, TRADING_MINUTES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

pub const SNAPSHOT_LEVELS: usize = 10;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("agent roster is empty")]
    EmptyRoster,
    #[error("fundamental path has {got} minutes, day needs {need}")]
    FundamentalTooShort { need: usize, got: usize },
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("wakeup for agent {agent} at {at}ns is before the current time {now}ns")]
    ScheduleInPast { agent: AgentId, at: u64, now: u64 },
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("an investor decision is pending; call act() first")]
    DecisionPending,
    #[error("no investor decision is pending")]
    NoPendingDecision,
    #[error("action index {0} is out of range")]
    InvalidAction(usize),
    #[error("investor {agent} has no policy and the day was run without a driver")]
    Undriven { agent: AgentId },
    #[error("agent {agent} at {time}ns: {source}")]
    Exchange {
        agent: AgentId,
        time: u64,
        #[source]
        source: LobError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Background roster and market parameters for one day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketConfig {
    pub value_agents: usize,
    pub market_makers: usize,
    pub momentum_agents: usize,
    pub noise_agents: usize,
    pub value: ValueAgentConfig,
    pub market_maker: MarketMakerConfig,
    pub momentum: MomentumConfig,
    pub noise: NoiseConfig,
    pub day_minutes: usize,
    pub investor_cash_cents: i64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            value_agents: 2,
            market_makers: 1,
            momentum_agents: 2,
            noise_agents: 20,
            value: ValueAgentConfig::default(),
            market_maker: MarketMakerConfig::default(),
            momentum: MomentumConfig::default(),
            noise: NoiseConfig::default(),
            day_minutes: TRADING_MINUTES,
            investor_cash_cents: 1_000_000,
        }
    }
}

impl MarketConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.market_maker.validate()?;
        self.momentum.validate()?;
        if !(self.value.arrival_rate > 0.0) || !(self.value.obs_stddev >= 0.0) {
            return Err("value agents need a positive arrival rate and non-negative noise".into());
        }
        if self.value.order_size == 0 {
            return Err("value agent order size must be positive".into());
        }
        if !(self.noise.size_shape > 1.0) || !(self.noise.size_scale > 0.0) {
            return Err("noise size law needs shape > 1 and positive scale".into());
        }
        if self.day_minutes > TRADING_MINUTES {
            return Err(format!("day length {} exceeds {TRADING_MINUTES} minutes", self.day_minutes));
        }
        Ok(())
    }
}

/// Decision rule for an investor run inside the simulator.
pub trait InvestorPolicy: Send + Sync {
    /// Action index in `0..N_ACTIONS`.
    fn act(&self, state: &StateVector, rng: &mut ChaCha8Rng) -> usize;
}

/// Uniformly random investor.
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomPolicy;

impl InvestorPolicy for RandomPolicy {
    fn act(&self, _state: &StateVector, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(0..crate::rl::action::N_ACTIONS)
    }
}

/// How an investor chooses its actions.
#[derive(Clone)]
pub enum Controller {
    /// Decisions are supplied by the caller through [`Simulation::advance`].
    External,
    Policy(Arc<dyn InvestorPolicy>),
}

impl std::fmt::Debug for Controller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Controller::External => f.write_str("External"),
            Controller::Policy(_) => f.write_str("Policy"),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Value,
    MarketMaker,
    Momentum,
    Noise,
    Investor,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    MinuteClose(u32),
    Wakeup(AgentId),
    EndOfDay,
}

struct AgentState {
    kind: AgentKind,
    rng: ChaCha8Rng,
    account: Account,
    open: Vec<OrderId>,
    investor: Option<usize>,
}

struct InvestorState {
    agent: AgentId,
    controller: Controller,
    activity: QuoteActivity,
    last_value: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinuteSnapshot {
    pub minute: usize,
    pub best_bid: Option<Price>,
    pub best_ask: Option<Price>,
    pub mid: Option<f64>,
    pub depth: Option<f64>,
    pub bid_vol: u64,
    pub ask_vol: u64,
    pub fundamental: f64,
    pub last_trade: Option<Price>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub time: Timestamp,
    pub id: OrderId,
    pub agent: AgentId,
    pub side: Side,
    pub price: Price,
    pub size: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CancelRecord {
    pub time: Timestamp,
    pub id: OrderId,
    pub agent: AgentId,
    pub remaining: u64,
}

/// One investor decision and the reward that followed it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvestorStep {
    pub minute: usize,
    pub state: StateVector,
    pub action: usize,
    /// Portfolio-value change until the next decision (or the close).
    pub reward: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvestorLog {
    pub agent: AgentId,
    pub steps: Vec<InvestorStep>,
    /// Portfolio value at each decision, then at the close.
    pub portfolio: Vec<i64>,
    pub initial_value: i64,
    pub final_account: Account,
    pub final_mark: Price,
    /// Observation at the close, after the last step.
    pub final_state: Option<StateVector>,
}

impl InvestorLog {
    pub fn pnl(&self) -> i64 {
        self.final_account.value_at(self.final_mark) - self.initial_value
    }

    pub fn total_reward(&self) -> i64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DayLog {
    pub trades: Vec<Trade>,
    pub snapshots: Vec<MinuteSnapshot>,
    pub orders: Vec<OrderRecord>,
    pub cancels: Vec<CancelRecord>,
    pub investors: Vec<InvestorLog>,
    pub agents: Vec<AgentKind>,
    pub accounts: Vec<Account>,
}

impl DayLog {
    pub fn write_trades_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time_ns", "price", "size", "buyer", "seller"])?;
        for t in &self.trades {
            out.write_record([
                t.time.0.to_string(),
                t.price.0.to_string(),
                t.size.to_string(),
                t.buyer.to_string(),
                t.seller.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_snapshots_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let opt = |x: Option<String>| x.unwrap_or_default();
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "minute", "best_bid", "best_ask", "mid", "depth", "bid_vol", "ask_vol", "fundamental",
        ])?;
        for s in &self.snapshots {
            out.write_record([
                s.minute.to_string(),
                opt(s.best_bid.map(|p| p.0.to_string())),
                opt(s.best_ask.map(|p| p.0.to_string())),
                opt(s.mid.map(|m| m.to_string())),
                opt(s.depth.map(|d| d.to_string())),
                s.bid_vol.to_string(),
                s.ask_vol.to_string(),
                s.fundamental.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// What [`Simulation::advance`] stopped on.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    /// An externally driven investor must choose an action. `reward` is
    /// the outcome of its previous action, absent at the first decision.
    Decision { investor: usize, minute: usize, state: StateVector, reward: Option<i64> },
    /// Final reward of an externally driven investor at the close.
    Terminal { investor: usize, reward: i64 },
    Finished,
}

pub struct Simulation {
    config: MarketConfig,
    fundamental: FundamentalPath,
    book: OrderBook,
    queue: BinaryHeap<Reverse<(u64, u64, EventKind)>>,
    seq: u64,
    now: u64,
    end: u64,
    next_order: OrderId,
    agents: Vec<AgentState>,
    investors: Vec<InvestorState>,
    history: MarketHistory,
    last_trade: Option<Price>,
    opening_mark: Price,
    log: DayLog,
    pending: Option<usize>,
    terminals: VecDeque<(usize, i64)>,
    finished: bool,
}

impl Simulation {
    /// Builds the day: background roster in the order value, market maker,
    /// momentum, noise, followed by one investor per controller.
    pub fn new(
        config: MarketConfig,
        fundamental: FundamentalPath,
        investors: Vec<Controller>,
        seed: u64,
    ) -> Result<Self, SimError> {
        config.validate().map_err(SimError::InvalidConfig)?;
        let background =
            config.value_agents + config.market_makers + config.momentum_agents + config.noise_agents;
        if background + investors.len() == 0 {
            return Err(SimError::EmptyRoster);
        }
        if fundamental.len() < config.day_minutes {
            return Err(SimError::FundamentalTooShort {
                need: config.day_minutes,
                got: fundamental.len(),
            });
        }

        let kinds = std::iter::repeat_n(AgentKind::Value, config.value_agents)
            .chain(std::iter::repeat_n(AgentKind::MarketMaker, config.market_makers))
            .chain(std::iter::repeat_n(AgentKind::Momentum, config.momentum_agents))
            .chain(std::iter::repeat_n(AgentKind::Noise, config.noise_agents))
            .chain(std::iter::repeat_n(AgentKind::Investor, investors.len()));
        let mut agents = Vec::new();
        let mut inv_states = Vec::new();
        let mut controllers = investors.into_iter();
        for (id, kind) in kinds.enumerate() {
            let id = id as AgentId;
            let mut account = Account::default();
            let mut investor = None;
            if kind == AgentKind::Investor {
                account = Account::with_cash_cents(config.investor_cash_cents);
                investor = Some(inv_states.len());
                inv_states.push(InvestorState {
                    agent: id,
                    controller: controllers.next().expect("one controller per investor"),
                    activity: QuoteActivity::default(),
                    last_value: None,
                });
            }
            agents.push(AgentState {
                kind,
                rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, id as u64)),
                account,
                open: Vec::new(),
                investor,
            });
        }

        let opening_mark = fundamental.opening_price();
        let end = config.day_minutes as u64 * NANOS_PER_MINUTE;
        let mut sim = Simulation {
            log: DayLog { agents: agents.iter().map(|a| a.kind).collect(), ..Default::default() },
            config,
            fundamental,
            book: OrderBook::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            end,
            next_order: 1,
            agents,
            investors: inv_states,
            history: MarketHistory::new(opening_mark),
            last_trade: None,
            opening_mark,
            pending: None,
            terminals: VecDeque::new(),
            finished: false,
        };
        for k in 0..sim.config.day_minutes {
            sim.push((k as u64 + 1) * NANOS_PER_MINUTE, EventKind::MinuteClose(k as u32));
        }
        sim.push(end, EventKind::EndOfDay);
        for id in 0..sim.agents.len() {
            let first = sim.first_wakeup(id);
            if let Some(t) = first {
                sim.push(t, EventKind::Wakeup(id as AgentId));
            }
        }
        Ok(sim)
    }

    fn first_wakeup(&mut self, id: usize) -> Option<u64> {
        let end = self.end;
        let agent = &mut self.agents[id];
        let t = match agent.kind {
            AgentKind::Value => sample_poisson_gap(self.config.value.arrival_rate, &mut agent.rng),
            AgentKind::Noise => {
                if end == 0 {
                    return None;
                }
                agent.rng.random_range(0..end)
            }
            AgentKind::MarketMaker | AgentKind::Momentum | AgentKind::Investor => 0,
        };
        (t < end).then_some(t)
    }

    fn push(&mut self, t: u64, kind: EventKind) {
        self.queue.push(Reverse((t, self.seq, kind)));
        self.seq += 1;
    }

    pub fn now(&self) -> Timestamp {
        Timestamp(self.now)
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn history(&self) -> &MarketHistory {
        &self.history
    }

    pub fn account(&self, agent: AgentId) -> Option<Account> {
        self.agents.get(agent as usize).map(|a| a.account)
    }

    /// Agent id of the `i`-th investor.
    pub fn investor_agent(&self, i: usize) -> Option<AgentId> {
        self.investors.get(i).map(|s| s.agent)
    }

    /// Queue an extra wakeup. Times at or after the close are ignored.
    pub fn schedule_wakeup(&mut self, agent: AgentId, t: Timestamp) -> Result<(), SimError> {
        if agent as usize >= self.agents.len() {
            return Err(SimError::UnknownAgent(agent));
        }
        if t.0 < self.now {
            return Err(SimError::ScheduleInPast { agent, at: t.0, now: self.now });
        }
        if t.0 < self.end {
            self.push(t.0, EventKind::Wakeup(agent));
        }
        Ok(())
    }

    /// Runs the whole day. Every investor must have a policy controller.
    pub fn run_day(mut self) -> Result<DayLog, SimError> {
        loop {
            match self.advance()? {
                Step::Finished => return Ok(self.log),
                Step::Decision { investor, .. } => {
                    return Err(SimError::Undriven { agent: self.investors[investor].agent })
                }
                Step::Terminal { .. } => {}
            }
        }
    }

    /// Processes events until an externally driven investor needs a
    /// decision, reports a terminal reward, or the day ends.
    pub fn advance(&mut self) -> Result<Step, SimError> {
        if self.pending.is_some() {
            return Err(SimError::DecisionPending);
        }
        loop {
            if let Some((investor, reward)) = self.terminals.pop_front() {
                return Ok(Step::Terminal { investor, reward });
            }
            if self.finished {
                return Ok(Step::Finished);
            }
            let Some(Reverse((t, _, kind))) = self.queue.pop() else {
                self.finished = true;
                continue;
            };
            debug_assert!(t >= self.now);
            self.now = t;
            match kind {
                EventKind::MinuteClose(k) => self.close_minute(k as usize),
                EventKind::EndOfDay => self.end_of_day(),
                EventKind::Wakeup(id) => {
                    if let Some(step) = self.wake(id)? {
                        return Ok(step);
                    }
                }
            }
        }
    }

    /// Supplies the pending investor's action and resumes nothing; the
    /// next call to [`advance`](Self::advance) continues the day.
    pub fn act(&mut self, action: usize) -> Result<(), SimError> {
        let investor = self.pending.ok_or(SimError::NoPendingDecision)?;
        let spec = ActionSpec::from_index(action).ok_or(SimError::InvalidAction(action))?;
        self.pending = None;
        self.execute_investor(investor, spec)
    }

    /// Convenience for a fully external day: `choose` is called for every
    /// decision. Returns the day log.
    pub fn run_with<F>(mut self, mut choose: F) -> Result<DayLog, SimError>
    where
        F: FnMut(&mut Self, usize, &StateVector, Option<i64>) -> usize,
    {
        loop {
            match self.advance()? {
                Step::Finished => return Ok(self.log),
                Step::Terminal { .. } => {}
                Step::Decision { investor, state, reward, .. } => {
                    let a = choose(&mut self, investor, &state, reward);
                    self.act(a)?;
                }
            }
        }
    }

    pub fn into_log(self) -> DayLog {
        self.log
    }

    fn mark(&self) -> Price {
        self.last_trade.unwrap_or(self.opening_mark)
    }

    fn reference_mid(&self) -> f64 {
        self.book.mid().unwrap_or(self.mark().0 as f64)
    }

    fn close_minute(&mut self, k: usize) {
        let snap = self.book.snapshot(SNAPSHOT_LEVELS);
        let m = lob_metrics(&snap);
        self.history.boundary_prices.push(self.mark().0 as f64);
        self.history.boundary_mids.push(m.mid);
        self.history.boundary_spreads.push(m.spread);
        self.history.boundary_depths.push(m.depth);
        self.log.snapshots.push(MinuteSnapshot {
            minute: k,
            best_bid: snap.best_bid(),
            best_ask: snap.best_ask(),
            mid: m.mid,
            depth: m.depth,
            bid_vol: snap.bids.iter().map(|l| l.volume).sum(),
            ask_vol: snap.asks.iter().map(|l| l.volume).sum(),
            fundamental: self.fundamental.at(k + 1),
            last_trade: self.last_trade,
        });
    }

    fn end_of_day(&mut self) {
        let mark = self.mark();
        for i in 0..self.investors.len() {
            let agent = self.investors[i].agent as usize;
            let account = self.agents[agent].account;
            let value = account.value_at(mark);
            let external = matches!(self.investors[i].controller, Controller::External);
            let close_state = self.investor_state(i, self.config.day_minutes);
            if let Some(log) = self.log.investors.iter_mut().find(|l| l.agent == agent as AgentId) {
                if let (Some(prev), Some(step)) = (self.investors[i].last_value, log.steps.last_mut()) {
                    step.reward = value - prev;
                    if external {
                        self.terminals.push_back((i, value - prev));
                    }
                }
                log.portfolio.push(value);
                log.final_account = account;
                log.final_mark = mark;
                log.final_state = Some(close_state);
            }
        }
        for id in 0..self.agents.len() {
            self.cancel_all(id);
        }
        self.log.accounts = self.agents.iter().map(|a| a.account).collect();
        self.finished = true;
    }

    fn wake(&mut self, id: AgentId) -> Result<Option<Step>, SimError> {
        let idx = id as usize;
        match self.agents[idx].kind {
            AgentKind::Value => {
                self.cancel_all(idx);
                let minute = Timestamp(self.now).minute();
                let obs_sd = self.config.value.obs_stddev;
                let observed = observe_noisy(&self.fundamental, minute, obs_sd, &mut self.agents[idx].rng);
                if let Some(mid) = self.book.mid() {
                    if let Intent::Place { side, price, size } =
                        value_agent_decide(observed, mid, self.config.value.order_size, self.config.value.pricing)
                    {
                        self.place(idx, side, price, size)?;
                    }
                }
                let gap = sample_poisson_gap(self.config.value.arrival_rate, &mut self.agents[idx].rng);
                self.reschedule(id, self.now.saturating_add(gap));
            }
            AgentKind::MarketMaker => {
                let before = self.reference_mid();
                self.cancel_all(idx);
                let mid = match self.config.market_maker.reference {
                    QuoteReference::Book => before,
                    QuoteReference::Others => self.reference_mid(),
                };
                for intent in market_maker_decide(mid, &self.config.market_maker) {
                    if let Intent::Place { side, price, size } = intent {
                        self.place(idx, side, price, size)?;
                    }
                }
                let next = self.now + self.config.market_maker.wake_interval_minutes * NANOS_PER_MINUTE;
                self.reschedule(id, next);
            }
            AgentKind::Momentum => {
                self.cancel_all(idx);
                let mids: Vec<f64> = self.history.boundary_mids.iter().flatten().copied().collect();
                if let Some(side) = momentum_agent_decide(&mids, &self.config.momentum) {
                    let price = self.touch(side);
                    self.place(idx, side, price, self.config.momentum.order_size)?;
                }
                let next = self.now + self.config.momentum.wake_interval_minutes * NANOS_PER_MINUTE;
                self.reschedule(id, next);
            }
            AgentKind::Noise => {
                let (side, size) = sample_noise_order(&self.config.noise, &mut self.agents[idx].rng);
                let price = self.touch(side);
                self.place(idx, side, price, size)?;
            }
            AgentKind::Investor => {
                let investor = self.agents[idx].investor.expect("investor slot");
                self.reschedule(id, self.now + NANOS_PER_MINUTE);
                return self.investor_wake(investor);
            }
        }
        Ok(None)
    }

    fn reschedule(&mut self, id: AgentId, t: u64) {
        if t < self.end {
            self.push(t, EventKind::Wakeup(id));
        }
    }

    /// Price that takes liquidity at the opposite touch, falling back to
    /// the last trade.
    fn touch(&self, side: Side) -> Price {
        let touch = match side {
            Side::Buy => self.book.best_ask(),
            Side::Sell => self.book.best_bid(),
        };
        touch.unwrap_or(self.mark())
    }

    fn investor_state(&mut self, i: usize, minute: usize) -> StateVector {
        let idx = self.investors[i].agent as usize;
        let book = &self.book;
        self.agents[idx].open.retain(|id| book.contains(*id));
        self.investors[i].activity.open_orders = self.agents[idx].open.len();
        let snap = self.book.snapshot(SNAPSHOT_LEVELS);
        let mut state = build_state_vector(
            &self.agents[idx].account,
            &self.history,
            &self.investors[i].activity,
            minute,
            Timestamp(self.now),
            &snap,
        );
        state.last_price = self.mark().0;
        state.mid = self.reference_mid();
        state
    }

    fn investor_wake(&mut self, i: usize) -> Result<Option<Step>, SimError> {
        let agent = self.investors[i].agent;
        let idx = agent as usize;
        let minute = Timestamp(self.now).minute();
        let mark = self.mark();
        let state = self.investor_state(i, minute);

        let value = self.agents[idx].account.value_at(mark);
        let reward = self.investors[i].last_value.map(|prev| value - prev);
        self.investors[i].last_value = Some(value);

        if self.log.investors.iter().all(|l| l.agent != agent) {
            self.log.investors.push(InvestorLog {
                agent,
                steps: Vec::new(),
                portfolio: Vec::new(),
                initial_value: value,
                final_account: self.agents[idx].account,
                final_mark: mark,
                final_state: None,
            });
        }
        let log = self.log.investors.iter_mut().find(|l| l.agent == agent).expect("log exists");
        if let (Some(r), Some(step)) = (reward, log.steps.last_mut()) {
            step.reward = r;
        }
        log.portfolio.push(value);
        log.steps.push(InvestorStep { minute, state: state.clone(), action: 0, reward: 0 });

        match self.investors[i].controller.clone() {
            Controller::External => {
                self.pending = Some(i);
                Ok(Some(Step::Decision { investor: i, minute, state, reward }))
            }
            Controller::Policy(policy) => {
                let action = policy.act(&state, &mut self.agents[idx].rng);
                let spec = ActionSpec::from_index(action).ok_or(SimError::InvalidAction(action))?;
                self.execute_investor(i, spec)?;
                Ok(None)
            }
        }
    }

    fn execute_investor(&mut self, i: usize, spec: ActionSpec) -> Result<(), SimError> {
        let agent = self.investors[i].agent;
        let idx = agent as usize;
        if let Some(step) = self
            .log
            .investors
            .iter_mut()
            .find(|l| l.agent == agent)
            .and_then(|l| l.steps.last_mut())
        {
            step.action = spec.index();
        }
        self.cancel_all(idx);
        let mid = self.reference_mid();
        if let Some((side, price)) = spec.limit_order(mid) {
            self.investors[i].activity.quotes.push(QuotePrint {
                time: Timestamp(self.now),
                size: ORDER_SIZE,
                distance: (price.0 as f64 - mid).abs(),
            });
            self.place(idx, side, price, ORDER_SIZE)?;
        }
        Ok(())
    }

    fn cancel_all(&mut self, idx: usize) {
        let open = std::mem::take(&mut self.agents[idx].open);
        for id in open {
            let remaining = self.book.cancel(id);
            if remaining > 0 {
                self.log.cancels.push(CancelRecord {
                    time: Timestamp(self.now),
                    id,
                    agent: idx as AgentId,
                    remaining,
                });
            }
        }
    }

    fn place(&mut self, idx: usize, side: Side, price: Price, size: u64) -> Result<(), SimError> {
        let id = self.next_order;
        self.next_order += 1;
        let time = Timestamp(self.now);
        let order = Order { id, agent: idx as AgentId, side, price, size, time };
        self.log.orders.push(OrderRecord { time, id, agent: idx as AgentId, side, price, size });
        let mid_before = self.book.mid();
        let sub = self
            .book
            .submit(order)
            .map_err(|source| SimError::Exchange { agent: idx as AgentId, time: self.now, source })?;
        for t in &sub.trades {
            self.agents[t.buyer as usize].account.apply_fill(Side::Buy, t.price, t.size);
            self.agents[t.seller as usize].account.apply_fill(Side::Sell, t.price, t.size);
            self.last_trade = Some(t.price);
            self.history.trades.push(TradePrint {
                time: t.time,
                price: t.price,
                size: t.size,
                aggressor: t.aggressor,
                mid_before,
            });
        }
        self.log.trades.extend(sub.trades);
        if sub.resting.is_some() {
            self.agents[idx].open.push(id);
        }
        Ok(())
    }
}
