//! Steering no-regret agents to an optimal CEP learned on the fly, and the
//! principal-objective bookkeeping shared with the audit.

use serde::{Deserialize, Serialize};

use crate::agents::mwu::sample_index;
use crate::equilibrium::{solve_optimal_cep, CepSolution};
use crate::error::{Error, Result};
use crate::game::{max_strategic_distance, GameShape, LearnedUtilities, NormalFormGame};
use crate::principal::{learn_multi_agent_noregret, NoRegretOutcome};
use crate::protocol::{
    AgentOffer, PaymentOffer, Population, RoundOffer, RoundRecord, Session, Signal, Stage,
};
use crate::rng::{stream_rng, PRINCIPAL_STREAM};
use rand::Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTotals {
    pub rounds: u64,
    pub principal_utility: f64,
    pub payment: f64,
}

impl StageTotals {
    fn add(&mut self, u0: f64, payment: f64) {
        self.rounds += 1;
        self.principal_utility += u0;
        self.payment += payment;
    }

    /// `(Σ U_0 - Σ payments) / rounds`, 0 for an empty stage.
    pub fn objective(&self) -> f64 {
        if self.rounds == 0 {
            0.0
        } else {
            (self.principal_utility - self.payment) / self.rounds as f64
        }
    }
}

/// Running sums behind `F(T)`, overall and per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveLedger {
    pub total: StageTotals,
    pub learning: StageTotals,
    pub steering: StageTotals,
}

impl ObjectiveLedger {
    pub fn record(&mut self, stage: Stage, principal_utility: f64, payment: f64) {
        self.total.add(principal_utility, payment);
        match stage {
            Stage::Learning => self.learning.add(principal_utility, payment),
            Stage::Steering => self.steering.add(principal_utility, payment),
        }
    }

    pub fn rounds(&self) -> u64 {
        self.total.rounds
    }

    pub fn total_payment(&self) -> f64 {
        self.total.payment
    }

    /// `F(T)`.
    pub fn f(&self) -> f64 {
        self.total.objective()
    }
}

/// Rebuilds the ledger from transcript rows, summing payments from the
/// per-agent entries rather than trusting the row totals.
pub fn evaluate_objective(records: &[RoundRecord]) -> Result<ObjectiveLedger> {
    let mut ledger = ObjectiveLedger::default();
    for (k, r) in records.iter().enumerate() {
        let mut payment = 0.0;
        for (i, a) in r.agents.iter().enumerate() {
            if a.action >= a.payments.len() {
                return Err(Error::shape(format!(
                    "row {k}: agent {i} action {} outside its payment row",
                    a.action
                )));
            }
            payment += a.paid();
        }
        ledger.record(r.stage, r.principal_utility, payment);
    }
    Ok(ledger)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringConfig {
    pub horizon: u64,
    /// Rounds per learning phase.
    pub phase_length: u64,
    /// Strictness bonus added to on-path payments.
    pub rho: f64,
    /// Upper limit on the measured learning error fed to the CEP program.
    pub epsilon_cap: f64,
    /// Paid to an obedient agent when someone else disobeys.
    pub penalty: f64,
    /// Seed of the principal's recommendation stream.
    pub seed: u64,
}

impl SteeringConfig {
    pub const DEFAULT_EPSILON_CAP: f64 = 0.1;
    pub const DEFAULT_PENALTY: f64 = 2.0;

    /// `L = T^{3/4}`, `ρ = T^{-1/4}`.
    pub fn with_defaults(horizon: u64, seed: u64) -> Self {
        let t = horizon as f64;
        SteeringConfig {
            horizon,
            phase_length: t.powf(0.75).floor() as u64,
            rho: t.powf(-0.25),
            epsilon_cap: Self::DEFAULT_EPSILON_CAP,
            penalty: Self::DEFAULT_PENALTY,
            seed,
        }
    }

    pub fn validate(&self, shape: &GameShape) -> Result<()> {
        let phases: u64 = (0..shape.num_agents())
            .map(|i| shape.num_opponent_profiles(i) as u64)
            .sum();
        let learning = self.phase_length.saturating_mul(phases);
        if self.phase_length == 0 || learning >= self.horizon {
            return Err(Error::config(format!(
                "learning needs L·ΣM_i = {} rounds, which leaves no steering rounds in T = {}",
                learning, self.horizon
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::config(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.epsilon_cap >= 0.0 && self.epsilon_cap.is_finite()) {
            return Err(Error::config("epsilon cap must be finite and nonnegative"));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(Error::config("penalty must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringOutcome {
    pub learning: NoRegretOutcome,
    /// Learning error fed to the program (its slack is twice this).
    pub epsilon: f64,
    pub cep: CepSolution,
    pub ledger: ObjectiveLedger,
    pub steering_rounds: u64,
    /// Steering rounds with at least one disobedient agent.
    pub disobedient_rounds: u64,
    pub disobedience_per_agent: Vec<u64>,
    /// `(round, agent)` pairs where the payments failed to make obedience
    /// dominant in the true game.
    pub dominance_violations: u64,
}

impl SteeringOutcome {
    pub fn learned(&self) -> &LearnedUtilities {
        &self.learning.learned
    }
}

/// Audit bound on disobedient steering rounds: `n · m · C√T / ρ`, with `C√T`
/// the largest anytime regret the agents reported.
pub fn disobedience_bound(shape: &GameShape, peak_regret: f64, rho: f64) -> f64 {
    let m = shape.action_counts().iter().copied().max().unwrap_or(0);
    shape.num_agents() as f64 * m as f64 * peak_regret / rho
}

/// True when agent `i` strictly prefers obeying `s` against every profile of
/// the others, given the steering payments.
fn obedience_dominant(
    game: &NormalFormGame,
    agent: usize,
    s: usize,
    on_path: f64,
    off_path: f64,
) -> bool {
    let shape = game.shape();
    let u = game.utilities(agent);
    let si = shape.action_in(s, agent);
    for base in shape.opponent_bases(agent) {
        let obey = shape.with_action(base, agent, si);
        let reward = if obey == s { on_path } else { off_path };
        for b in (0..shape.num_actions(agent)).filter(|&b| b != si) {
            let dev = shape.with_action(base, agent, b);
            if u[dev] - u[obey] >= reward {
                return false;
            }
        }
    }
    true
}

/// Learns the game, solves for the optimal CEP of the estimate, and spends
/// the remaining rounds recommending profiles drawn from it.
pub fn steer<P: Population>(
    session: &mut Session<'_, P>,
    config: &SteeringConfig,
) -> Result<SteeringOutcome> {
    let shape = session.shape().clone();
    config.validate(&shape)?;
    let u0 = session
        .principal_utility()
        .ok_or_else(|| Error::config("steering needs a principal utility"))?;
    let start = session.rounds();

    session.set_stage(Stage::Learning);
    let learning = learn_multi_agent_noregret(session, config.phase_length)?;
    let epsilon =
        max_strategic_distance(session.game(), &learning.learned)?.min(config.epsilon_cap);
    let estimated = learning.learned.as_game(&shape)?;
    let cep = solve_optimal_cep(&estimated, u0, 2.0 * epsilon)?;

    session.set_stage(Stage::Steering);
    let n = shape.num_agents();
    let m = shape.num_profiles();
    let mut rng = stream_rng(config.seed, PRINCIPAL_STREAM);
    let mut disobedient_rounds = 0;
    let mut per_agent = vec![0; n];
    let mut dominance_violations = 0;
    let mut steering_rounds = 0;
    while session.rounds() - start < config.horizon {
        let s = sample_index(&cep.mu, rng.random());
        let profile = shape.profile_of(s);
        let offer = RoundOffer {
            agents: (0..n)
                .map(|i| AgentOffer {
                    signal: Signal::Recommend(profile[i]),
                    payment: PaymentOffer::Steering {
                        recommendation: profile.clone(),
                        on_path: cep.payments[i].on_path(s, m) + 2.0 * epsilon + config.rho,
                        off_path: config.penalty,
                    },
                })
                .collect(),
        };
        for i in 0..n {
            let on_path = cep.payments[i].on_path(s, m) + 2.0 * epsilon;
            if !obedience_dominant(session.game(), i, s, on_path, config.penalty) {
                dominance_violations += 1;
            }
        }
        let actions = session.round(&offer)?;
        let mut any = false;
        for i in 0..n {
            if actions[i] != profile[i] {
                per_agent[i] += 1;
                any = true;
            }
        }
        disobedient_rounds += any as u64;
        steering_rounds += 1;
    }

    Ok(SteeringOutcome {
        learning,
        epsilon,
        cep,
        ledger: session.ledger().clone(),
        steering_rounds,
        disobedient_rounds,
        disobedience_per_agent: per_agent,
        dominance_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::NoRegretPopulation;
    use crate::protocol::AgentRound;

    fn row(stage: Stage, u0: f64, paid: f64) -> RoundRecord {
        RoundRecord {
            t: 0,
            stage,
            phase: None,
            agents: vec![AgentRound {
                signal: Signal::Bottom,
                action: 0,
                payments: vec![paid, 0.0],
                utility: 0.0,
            }],
            principal_utility: u0,
            total_payment: paid,
        }
    }

    #[test]
    fn objective_examples() {
        let l = evaluate_objective(&[
            row(Stage::Learning, 1.0, 0.5),
            row(Stage::Learning, 0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(l.f(), 0.25);
        let l = evaluate_objective(&[
            row(Stage::Learning, 0.2, 0.0),
            row(Stage::Steering, 0.6, 0.0),
        ])
        .unwrap();
        assert_eq!(l.f(), 0.4);
        assert_eq!(l.learning.rounds + l.steering.rounds, l.total.rounds);
        assert_eq!(
            l.learning.principal_utility + l.steering.principal_utility,
            l.total.principal_utility
        );
        assert_eq!(evaluate_objective(&[]).unwrap().f(), 0.0);
    }

    #[test]
    fn defaults_and_validation() {
        let c = SteeringConfig::with_defaults(10_000, 0);
        assert_eq!(c.phase_length, 1000);
        assert!((c.rho - 0.1).abs() < 1e-12);
        let shape = GameShape::new(vec![2, 2]).unwrap();
        assert!(c.validate(&shape).is_ok());
        let tight = SteeringConfig {
            phase_length: 2500,
            ..c.clone()
        };
        assert!(tight.validate(&shape).is_err());
        let bad_rho = SteeringConfig { rho: 0.0, ..c };
        assert!(bad_rho.validate(&shape).is_err());
    }

    #[test]
    fn indifferent_agents_follow_the_principal() {
        let game = NormalFormGame::new(vec![2, 2], vec![vec![0.5; 4], vec![0.5; 4]]).unwrap();
        let u0 = vec![0.0, 0.0, 0.0, 1.0];
        let horizon = 20_000;
        let pop = NoRegretPopulation::new(game.clone(), horizon, 1).unwrap();
        let mut records: Vec<RoundRecord> = Vec::new();
        let config = SteeringConfig::with_defaults(horizon, 1);
        let out = {
            let mut session = Session::new(&game, pop)
                .unwrap()
                .with_principal_utility(&u0)
                .unwrap()
                .with_sink(&mut records);
            steer(&mut session, &config).unwrap()
        };
        assert!((out.cep.mu[3] - 1.0).abs() < 1e-9);
        assert_eq!(out.ledger.rounds(), horizon);
        assert_eq!(out.dominance_violations, 0);
        let rebuilt = evaluate_objective(&records).unwrap();
        assert_eq!(rebuilt, out.ledger);
        // obedient rounds earn 1 - 2(2ε + ρ); learning rounds earn 0 minus pins
        let ideal = 1.0 - 2.0 * (2.0 * out.epsilon + config.rho);
        assert!(out.ledger.steering.objective() > ideal - 0.1);
    }
}
