//! Learning utilities from agents that play rationalizable actions: the
//! binary-search learner (single and multi-agent) and the payment-minimizing
//! escalation sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::LearnedUtilities;
use crate::protocol::{PaymentOffer, Population, Session};

use super::{pinned_offer, require_single_agent};

/// Bisection on the smallest payment that makes the agent play `target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySearchState {
    pub target: usize,
    pub lo: f64,
    pub hi: f64,
    pub remaining: u32,
}

impl BinarySearchState {
    pub fn new(target: usize, iterations: u32) -> Self {
        BinarySearchState {
            target,
            lo: 0.0,
            hi: 1.0,
            remaining: iterations,
        }
    }

    pub fn done(&self) -> bool {
        self.remaining == 0
    }

    pub fn probe(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Narrows the bracket after the agent answered the current probe.
    pub fn update(&mut self, played: usize) {
        let mid = self.probe();
        if played == self.target {
            self.hi = mid;
        } else {
            self.lo = mid;
        }
        self.remaining = self.remaining.saturating_sub(1);
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningOutcome {
    pub learned: LearnedUtilities,
    pub rounds_used: u64,
    pub total_payment: f64,
}

/// Bisection steps per action for accuracy `epsilon`.
pub fn bisection_steps(epsilon: f64) -> u32 {
    (1.0 / epsilon).log2().ceil().max(0.0) as u32
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::config(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    Ok(())
}

/// Learns a single agent by bisecting, for every action, the payment that
/// makes it optimal.
pub fn learn_single_agent_optimal<P: Population>(
    session: &mut Session<'_, P>,
    epsilon: f64,
) -> Result<LearningOutcome> {
    require_single_agent(session.shape())?;
    learn_multi_agent_rationalizable(session, epsilon)
}

/// Learns every agent slice by slice: the learned agent gets bisection
/// payments while every other agent is pinned to the slice's profile.
pub fn learn_multi_agent_rationalizable<P: Population>(
    session: &mut Session<'_, P>,
    epsilon: f64,
) -> Result<LearningOutcome> {
    check_epsilon(epsilon)?;
    let shape = session.shape().clone();
    let steps = bisection_steps(epsilon);
    let start_rounds = session.rounds();
    let start_paid = session.ledger().total_payment();
    let mut learned = LearnedUtilities::zeros(&shape, epsilon);

    for i in 0..shape.num_agents() {
        let m = shape.num_actions(i);
        for base in shape.opponent_bases(i) {
            let profile = shape.profile_of(base);
            let play = |session: &mut Session<'_, P>, payment: Vec<f64>| -> Result<usize> {
                let t = session.rounds();
                let offer = pinned_offer(&shape, i, &profile, PaymentOffer::Action(payment));
                let actions = session.round(&offer)?;
                for j in (0..shape.num_agents()).filter(|&j| j != i) {
                    if actions[j] != profile[j] {
                        return Err(Error::protocol(
                            t,
                            format!(
                                "pinned agent {j} played {} instead of {}",
                                actions[j], profile[j]
                            ),
                        ));
                    }
                }
                Ok(actions[i])
            };

            let best = play(session, vec![0.0; m])?;
            for (a, k) in shape.slice(i, base).enumerate() {
                if a == best {
                    learned.estimates[i][k] = 0.0;
                    continue;
                }
                let mut search = BinarySearchState::new(a, steps);
                while !search.done() {
                    let mut payment = vec![0.0; m];
                    payment[a] = search.probe();
                    let played = play(session, payment)?;
                    search.update(played);
                }
                learned.estimates[i][k] = -search.hi;
            }
        }
    }

    Ok(LearningOutcome {
        learned,
        rounds_used: session.rounds() - start_rounds,
        total_payment: session.ledger().total_payment() - start_paid,
    })
}

/// Escalates the payment on each non-optimal action in steps of `epsilon`
/// until the agent switches to it.
pub fn learn_single_agent_min_payment<P: Population>(
    session: &mut Session<'_, P>,
    epsilon: f64,
) -> Result<LearningOutcome> {
    check_epsilon(epsilon)?;
    let shape = session.shape().clone();
    require_single_agent(&shape)?;
    let m = shape.num_actions(0);
    let cap = (2.0 / epsilon).ceil() as u64 + 2;
    let start_rounds = session.rounds();
    let start_paid = session.ledger().total_payment();
    let mut learned = LearnedUtilities::zeros(&shape, epsilon);
    let mut total_payment = 0.0;

    let zero = pinned_offer(&shape, 0, &[0], PaymentOffer::Action(vec![0.0; m]));
    let best = session.round(&zero)?[0];
    for a in (0..m).filter(|&a| a != best) {
        let mut k = 0u64;
        loop {
            let amount = k as f64 * epsilon;
            let offer = pinned_offer(&shape, 0, &[0], PaymentOffer::pin(m, a, amount));
            if session.round(&offer)?[0] == a {
                learned.estimates[0][a] = -amount;
                total_payment += amount;
                break;
            }
            k += 1;
            if k > cap {
                return Err(Error::protocol(
                    session.rounds(),
                    format!("agent never switched to action {a} within {cap} escalation steps"),
                ));
            }
        }
    }

    let paid = session.ledger().total_payment() - start_paid;
    debug_assert!((paid - total_payment).abs() <= 1e-9);
    Ok(LearningOutcome {
        learned,
        rounds_used: session.rounds() - start_rounds,
        total_payment,
    })
}
