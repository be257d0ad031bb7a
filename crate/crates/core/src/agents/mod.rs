//! Behavioral models for the agent population.

pub mod mwu;
pub mod rationalizable;

pub use mwu::{mwu_strategy, AgentState, RegretLedger};
pub use rationalizable::{
    choose_action, rationalizable_agent_act, rationalizable_set, rationalizable_set_random_order,
    Policy,
};

use crate::error::{Error, Result};
use crate::game::{GameShape, NormalFormGame};
use crate::protocol::{Population, RoundOffer};

/// The game each agent faces under `offer`: `U_i(a) + P_i(s_i, a)`.
pub fn payment_augmented_game(game: &NormalFormGame, offer: &RoundOffer) -> Result<NormalFormGame> {
    let shape = game.shape();
    let mut utilities = game.all_utilities().to_vec();
    for k in 0..shape.num_profiles() {
        let profile = shape.profile_of(k);
        for (i, o) in offer.agents.iter().enumerate() {
            utilities[i][k] += o.payment.amount(i, &profile);
        }
    }
    NormalFormGame::new(shape.action_counts().to_vec(), utilities)
}

/// Agents that each play some action surviving iterated strict dominance in
/// the payment-augmented game, chosen by a fixed policy.
#[derive(Clone, Debug)]
pub struct RationalPopulation {
    game: NormalFormGame,
    policies: Vec<Policy>,
}

impl RationalPopulation {
    pub fn new(game: NormalFormGame, policies: Vec<Policy>) -> Result<Self> {
        if policies.len() != game.num_agents() {
            return Err(Error::config(format!(
                "{} policies for {} agents",
                policies.len(),
                game.num_agents()
            )));
        }
        Ok(RationalPopulation { game, policies })
    }

    pub fn uniform(game: NormalFormGame, policy: Policy) -> Self {
        let policies = vec![policy; game.num_agents()];
        RationalPopulation { game, policies }
    }
}

impl Population for RationalPopulation {
    fn shape(&self) -> &GameShape {
        self.game.shape()
    }

    fn act(&mut self, _round: u64, offer: &RoundOffer) -> Result<Vec<usize>> {
        let augmented = payment_augmented_game(&self.game, offer)?;
        let surviving = rationalizable_set(&augmented);
        Ok(self
            .policies
            .iter()
            .enumerate()
            .map(|(i, &p)| choose_action(&augmented, &surviving, i, p))
            .collect())
    }

    fn observe(&mut self, _: &RoundOffer, _: &[usize], _: &[Vec<f64>]) -> Result<()> {
        Ok(())
    }
}

/// Agents running per-signal MWU on their realized utility vectors.
#[derive(Clone, Debug)]
pub struct NoRegretPopulation {
    game: NormalFormGame,
    agents: Vec<AgentState>,
}

impl NoRegretPopulation {
    /// Every agent's learners share `seed` and are told the horizon `T`.
    pub fn new(game: NormalFormGame, horizon: u64, seed: u64) -> Result<Self> {
        let agents = game
            .action_counts()
            .iter()
            .enumerate()
            .map(|(i, &m)| AgentState::new(i, m, horizon, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(NoRegretPopulation { game, agents })
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    /// `max_i max_s` anytime realized regret.
    pub fn peak_regret(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| a.peak_regret())
            .fold(0.0, f64::max)
    }
}

impl Population for NoRegretPopulation {
    fn shape(&self) -> &GameShape {
        self.game.shape()
    }

    fn act(&mut self, _round: u64, offer: &RoundOffer) -> Result<Vec<usize>> {
        self.agents
            .iter_mut()
            .zip(&offer.agents)
            .map(|(a, o)| a.act(o.signal))
            .collect()
    }

    fn observe(
        &mut self,
        offer: &RoundOffer,
        actions: &[usize],
        payment_rows: &[Vec<f64>],
    ) -> Result<()> {
        let index = self.game.shape().index_of(actions);
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let row = self.game.utility_row(i, index, &payment_rows[i]);
            agent.update(offer.agents[i].signal, actions[i], &row)?;
        }
        Ok(())
    }
}
