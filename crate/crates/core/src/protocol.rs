//! The round protocol binding a principal to a population of agents.
//!
//! Each round the principal commits a [`RoundOffer`] (signal and payment
//! function per agent), the agents choose actions simultaneously, and the
//! principal observes the joint action. [`Session`] enforces that order: agent
//! code only ever sees the committed offer when choosing, and learns the other
//! agents' actions through `observe` after every action is fixed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::game::{ActionProfile, GameShape, NormalFormGame};
use crate::steering::ObjectiveLedger;

/// A private signal sent to one agent.
///
/// `Bottom` marks "your utility is being learned". `Pin` is the learning-stage
/// signal sent to an agent held at an action, and `Recommend` is a steering
/// recommendation, so the two stages never share a regret ledger.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signal {
    Bottom,
    Pin(usize),
    Recommend(usize),
}

impl Signal {
    /// Dense code used to key random streams.
    pub fn code(self) -> u64 {
        match self {
            Signal::Bottom => 0,
            Signal::Pin(a) => 1 + 2 * a as u64,
            Signal::Recommend(a) => 2 + 2 * a as u64,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Bottom => write!(f, "bot"),
            Signal::Pin(a) => write!(f, "pin:{a}"),
            Signal::Recommend(a) => write!(f, "rec:{a}"),
        }
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::shape(format!("unrecognized signal {s:?}"));
        if s == "bot" {
            return Ok(Signal::Bottom);
        }
        let (tag, num) = s.split_once(':').ok_or_else(bad)?;
        let a: usize = num.parse().map_err(|_| bad())?;
        match tag {
            "pin" => Ok(Signal::Pin(a)),
            "rec" => Ok(Signal::Recommend(a)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Signal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Signal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Payment function offered to one agent for the current round.
#[derive(Clone, Debug, PartialEq)]
pub enum PaymentOffer {
    None,
    /// `P_i(a_i)`: a payment per own action.
    Action(Vec<f64>),
    /// Steering payments for joint recommendation `recommendation`:
    /// `on_path` if every agent obeys, `off_path` if this agent obeys but
    /// someone else does not, nothing if this agent disobeys.
    Steering {
        recommendation: Vec<usize>,
        on_path: f64,
        off_path: f64,
    },
}

impl PaymentOffer {
    /// `2·1[a_i = action]`, holding an agent at `action`.
    pub fn pin(num_actions: usize, action: usize, amount: f64) -> Self {
        let mut v = vec![0.0; num_actions];
        v[action] = amount;
        PaymentOffer::Action(v)
    }

    pub fn amount(&self, agent: usize, profile: &[usize]) -> f64 {
        match self {
            PaymentOffer::None => 0.0,
            PaymentOffer::Action(v) => v[profile[agent]],
            PaymentOffer::Steering {
                recommendation,
                on_path,
                off_path,
            } => {
                if profile == recommendation.as_slice() {
                    *on_path
                } else if profile[agent] == recommendation[agent] {
                    *off_path
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self, agent: usize, shape: &GameShape) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            PaymentOffer::None => Ok(()),
            PaymentOffer::Action(v) => {
                if v.len() != shape.num_actions(agent) {
                    return Err(Error::shape(format!(
                        "agent {agent} payment vector has {} entries",
                        v.len()
                    )));
                }
                if !v.iter().all(|&x| ok(x)) {
                    return Err(Error::Numeric(format!(
                        "agent {agent} payments must be finite and nonnegative"
                    )));
                }
                Ok(())
            }
            PaymentOffer::Steering {
                recommendation,
                on_path,
                off_path,
            } => {
                shape.check_profile(recommendation)?;
                if !ok(*on_path) || !ok(*off_path) {
                    return Err(Error::Numeric(format!(
                        "agent {agent} steering payments must be finite and nonnegative"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentOffer {
    pub signal: Signal,
    pub payment: PaymentOffer,
}

/// Everything the principal commits to before agents act.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundOffer {
    pub agents: Vec<AgentOffer>,
}

/// Agents as seen by the protocol engine.
pub trait Population {
    fn shape(&self) -> &GameShape;

    /// Chooses every agent's action from the committed offer alone.
    fn act(&mut self, round: u64, offer: &RoundOffer) -> Result<Vec<usize>>;

    /// Reveals the joint action; `payment_rows[i][b]` is what agent `i` would
    /// have been paid for playing `b` against the others' realized actions.
    fn observe(
        &mut self,
        offer: &RoundOffer,
        actions: &[usize],
        payment_rows: &[Vec<f64>],
    ) -> Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Learning,
    Steering,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRound {
    pub signal: Signal,
    pub action: usize,
    /// Counterfactual payments over own actions, others' actions fixed.
    pub payments: Vec<f64>,
    /// `U_i(a) + P_i(s, a)`.
    pub utility: f64,
}

impl AgentRound {
    pub fn paid(&self) -> f64 {
        self.payments[self.action]
    }
}

/// One transcript row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<u32>,
    pub agents: Vec<AgentRound>,
    pub principal_utility: f64,
    pub total_payment: f64,
}

impl RoundRecord {
    pub fn actions(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.action).collect()
    }
}

/// Destination for transcript rows.
pub trait RecordSink {
    fn push(&mut self, record: &RoundRecord) -> Result<()>;
}

impl RecordSink for Vec<RoundRecord> {
    fn push(&mut self, record: &RoundRecord) -> Result<()> {
        Vec::push(self, record.clone());
        Ok(())
    }
}

/// Fans each row out to several sinks.
pub struct TeeSink<'a>(pub Vec<&'a mut dyn RecordSink>);

impl RecordSink for TeeSink<'_> {
    fn push(&mut self, record: &RoundRecord) -> Result<()> {
        for s in self.0.iter_mut() {
            s.push(record)?;
        }
        Ok(())
    }
}

/// The protocol engine. Holds the true game for bookkeeping (realized
/// utilities in the transcript); principal algorithms only see the joint
/// actions returned by [`Session::round`].
pub struct Session<'a, P> {
    game: &'a NormalFormGame,
    principal_utility: Option<&'a [f64]>,
    population: P,
    sink: Option<&'a mut dyn RecordSink>,
    ledger: ObjectiveLedger,
    t: u64,
    stage: Stage,
    phase: Option<u32>,
}

impl<'a, P: Population> Session<'a, P> {
    pub fn new(game: &'a NormalFormGame, population: P) -> Result<Self> {
        if population.shape() != game.shape() {
            return Err(Error::shape("population and game shapes differ"));
        }
        Ok(Session {
            game,
            principal_utility: None,
            population,
            sink: None,
            ledger: ObjectiveLedger::default(),
            t: 0,
            stage: Stage::Learning,
            phase: None,
        })
    }

    pub fn with_principal_utility(mut self, u0: &'a [f64]) -> Result<Self> {
        if u0.len() != self.game.num_profiles() {
            return Err(Error::shape("principal utility has the wrong length"));
        }
        self.principal_utility = Some(u0);
        Ok(self)
    }

    pub fn with_sink(mut self, sink: &'a mut dyn RecordSink) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn shape(&self) -> &GameShape {
        self.game.shape()
    }

    /// The true game. Reserved for harness-side measurement.
    pub fn game(&self) -> &NormalFormGame {
        self.game
    }

    pub fn principal_utility(&self) -> Option<&'a [f64]> {
        self.principal_utility
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn ledger(&self) -> &ObjectiveLedger {
        &self.ledger
    }

    pub fn population(&self) -> &P {
        &self.population
    }

    pub fn into_population(self) -> P {
        self.population
    }

    pub fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
    }

    pub fn set_phase(&mut self, phase: Option<u32>) {
        self.phase = phase;
    }

    /// Plays one round and returns the joint action.
    pub fn round(&mut self, offer: &RoundOffer) -> Result<ActionProfile> {
        let shape = self.game.shape();
        let n = shape.num_agents();
        if offer.agents.len() != n {
            return Err(Error::protocol(
                self.t,
                format!("offer covers {} of {n} agents", offer.agents.len()),
            ));
        }
        for (i, o) in offer.agents.iter().enumerate() {
            o.payment
                .validate(i, shape)
                .map_err(|e| Error::protocol(self.t, e.to_string()))?;
        }

        let actions = self.population.act(self.t, offer)?;
        if let Err(e) = shape.check_profile(&actions) {
            return Err(Error::protocol(self.t, e.to_string()));
        }

        let mut profile = actions.clone();
        let mut payment_rows = Vec::with_capacity(n);
        for (i, o) in offer.agents.iter().enumerate() {
            let row: Vec<f64> = (0..shape.num_actions(i))
                .map(|b| {
                    profile[i] = b;
                    o.payment.amount(i, &profile)
                })
                .collect();
            profile[i] = actions[i];
            payment_rows.push(row);
        }
        self.population.observe(offer, &actions, &payment_rows)?;

        let index = shape.index_of(&actions);
        let u0 = self.principal_utility.map_or(0.0, |u| u[index]);
        let mut total_payment = 0.0;
        let mut agents = Vec::with_capacity(n);
        for (i, (o, row)) in offer.agents.iter().zip(payment_rows).enumerate() {
            let paid = row[actions[i]];
            total_payment += paid;
            agents.push(AgentRound {
                signal: o.signal,
                action: actions[i],
                utility: self.game.utility(i, index) + paid,
                payments: row,
            });
        }
        self.ledger.record(self.stage, u0, total_payment);
        if let Some(sink) = self.sink.as_mut() {
            sink.push(&RoundRecord {
                t: self.t,
                stage: self.stage,
                phase: self.phase,
                agents,
                principal_utility: u0,
                total_payment,
            })?;
        }
        self.t += 1;
        Ok(ActionProfile::new(actions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_text_roundtrip() {
        for s in [Signal::Bottom, Signal::Pin(3), Signal::Recommend(0)] {
            assert_eq!(s.to_string().parse::<Signal>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<Signal>(&json).unwrap(), s);
        }
        assert!("nope".parse::<Signal>().is_err());
        let codes: std::collections::BTreeSet<u64> = [
            Signal::Bottom,
            Signal::Pin(0),
            Signal::Pin(1),
            Signal::Recommend(0),
            Signal::Recommend(1),
        ]
        .iter()
        .map(|s| s.code())
        .collect();
        assert_eq!(codes.len(), 5);
    }

    #[test]
    fn steering_case_table_partitions_profiles() {
        let offer = PaymentOffer::Steering {
            recommendation: vec![1, 0],
            on_path: 0.7,
            off_path: 2.0,
        };
        // agent 0: obeys with everyone -> on_path; obeys alone -> off_path;
        // disobeys -> 0 regardless of the other agent.
        assert_eq!(offer.amount(0, &[1, 0]), 0.7);
        assert_eq!(offer.amount(0, &[1, 1]), 2.0);
        assert_eq!(offer.amount(0, &[0, 0]), 0.0);
        assert_eq!(offer.amount(0, &[0, 1]), 0.0);
    }
}
