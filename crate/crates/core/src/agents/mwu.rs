//! Per-signal multiplicative-weights learners with realized-regret ledgers.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::Signal;
use crate::rng::{agent_stream, stream_rng};

/// `x ∝ exp(η · cumulative)`, evaluated with max-subtraction.
pub fn mwu_strategy(cumulative: &[f64], eta: f64) -> Result<Vec<f64>> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Numeric(format!(
            "MWU step size must be positive, got {eta}"
        )));
    }
    if cumulative.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite cumulative utility".into()));
    }
    let top = cumulative.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = cumulative.iter().map(|c| (eta * (c - top)).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Inverse-CDF draw from `dist` with a uniform `u ∈ [0, 1)`.
pub fn sample_index(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the final partial sum
    dist.iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(dist.len() - 1)
}

/// Realized regret bookkeeping for one `(agent, signal)` pair.
///
/// `regret()` is `R̂(t, s) = max_a Σ_τ u^τ[a] - Σ_τ u^τ[a^τ]` over the rounds
/// this signal was received; `peak` is its maximum over all prefixes
/// (including the empty one).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub cumulative: Vec<f64>,
    pub realized: f64,
    pub rounds: u64,
    pub peak: f64,
}

impl RegretLedger {
    pub fn new(num_actions: usize) -> Self {
        RegretLedger {
            cumulative: vec![0.0; num_actions],
            ..Default::default()
        }
    }

    pub fn record(&mut self, action: usize, utilities: &[f64]) {
        for (c, u) in self.cumulative.iter_mut().zip(utilities) {
            *c += u;
        }
        self.realized += utilities[action];
        self.rounds += 1;
        self.peak = self.peak.max(self.regret());
    }

    pub fn regret(&self) -> f64 {
        self.regret_per_action().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Regret against each fixed alternative action.
    pub fn regret_per_action(&self) -> impl Iterator<Item = f64> + '_ {
        self.cumulative.iter().map(move |c| c - self.realized)
    }
}

#[derive(Clone, Debug)]
struct SignalLearner {
    ledger: RegretLedger,
    rng: ChaCha8Rng,
}

/// One agent running an independent MWU instance per received signal.
///
/// The step size `η = sqrt(ln m / T)` is fixed from the horizon at creation.
/// Learners are created lazily, starting uniform, the first time a signal
/// arrives; each draws from its own random stream.
#[derive(Clone, Debug)]
pub struct AgentState {
    agent_id: usize,
    num_actions: usize,
    eta: f64,
    seed: u64,
    learners: BTreeMap<Signal, SignalLearner>,
}

impl AgentState {
    pub fn new(agent_id: usize, num_actions: usize, horizon: u64, seed: u64) -> Result<Self> {
        if num_actions < 2 || horizon == 0 {
            return Err(Error::config(
                "MWU agent needs m ≥ 2 and a positive horizon",
            ));
        }
        let eta = ((num_actions as f64).ln() / horizon as f64).sqrt();
        Ok(AgentState {
            agent_id,
            num_actions,
            eta,
            seed,
            learners: BTreeMap::new(),
        })
    }

    pub fn agent_id(&self) -> usize {
        self.agent_id
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn learner(&mut self, signal: Signal) -> &mut SignalLearner {
        let (seed, id, m) = (self.seed, self.agent_id, self.num_actions);
        self.learners
            .entry(signal)
            .or_insert_with(|| SignalLearner {
                ledger: RegretLedger::new(m),
                rng: stream_rng(seed, agent_stream(id, signal.code())),
            })
    }

    /// Current mixed strategy for `signal` (uniform if never seen).
    pub fn strategy(&self, signal: Signal) -> Result<Vec<f64>> {
        match self.learners.get(&signal) {
            Some(l) => mwu_strategy(&l.ledger.cumulative, self.eta),
            None => Ok(vec![1.0 / self.num_actions as f64; self.num_actions]),
        }
    }

    /// Samples an action from the learner bound to `signal`.
    pub fn act(&mut self, signal: Signal) -> Result<usize> {
        let eta = self.eta;
        let learner = self.learner(signal);
        let dist = mwu_strategy(&learner.ledger.cumulative, eta)?;
        let u: f64 = learner.rng.random();
        Ok(sample_index(&dist, u))
    }

    /// Feeds the round's utility vector over own actions to `signal`'s learner.
    pub fn update(&mut self, signal: Signal, action: usize, utilities: &[f64]) -> Result<()> {
        if utilities.len() != self.num_actions || action >= self.num_actions {
            return Err(Error::shape(format!(
                "agent {} update with {} utilities and action {action}",
                self.agent_id,
                utilities.len()
            )));
        }
        self.learner(signal).ledger.record(action, utilities);
        Ok(())
    }

    pub fn ledger(&self, signal: Signal) -> Option<&RegretLedger> {
        self.learners.get(&signal).map(|l| &l.ledger)
    }

    pub fn ledgers(&self) -> impl Iterator<Item = (Signal, &RegretLedger)> {
        self.learners.iter().map(|(s, l)| (*s, &l.ledger))
    }

    /// Largest anytime realized regret over all signals.
    pub fn peak_regret(&self) -> f64 {
        self.ledgers().map(|(_, l)| l.peak).fold(0.0, f64::max)
    }
}
