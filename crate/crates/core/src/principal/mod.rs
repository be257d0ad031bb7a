//! Principal algorithms that learn agents' utilities through payments.

pub mod noregret;
pub mod rationalizable;

pub use noregret::{
    default_phase_length, learn_multi_agent_noregret, learn_single_agent_noregret,
    min_linear_over_polytope, polytope_diameter, project_payment, NoRegretOutcome,
    PaymentPolytopePoint, PhaseDiagnostics, PhasePlan,
};
pub use rationalizable::{
    learn_multi_agent_rationalizable, learn_single_agent_min_payment, learn_single_agent_optimal,
    BinarySearchState, LearningOutcome,
};

use crate::error::{Error, Result};
use crate::game::GameShape;
use crate::protocol::{AgentOffer, PaymentOffer, RoundOffer, Signal};

/// Offer that learns `agent` with `payment` and pins every other agent `j`
/// at `profile[j]` with a payment of 2.
pub(crate) fn pinned_offer(
    shape: &GameShape,
    agent: usize,
    profile: &[usize],
    payment: PaymentOffer,
) -> RoundOffer {
    let mut payment = Some(payment);
    RoundOffer {
        agents: (0..shape.num_agents())
            .map(|j| {
                if j == agent {
                    AgentOffer {
                        signal: Signal::Bottom,
                        payment: payment.take().unwrap_or(PaymentOffer::None),
                    }
                } else {
                    AgentOffer {
                        signal: Signal::Pin(profile[j]),
                        payment: PaymentOffer::pin(shape.num_actions(j), profile[j], 2.0),
                    }
                }
            })
            .collect(),
    }
}

pub(crate) fn require_single_agent(shape: &GameShape) -> Result<()> {
    if shape.num_agents() != 1 {
        return Err(Error::shape(format!(
            "single-agent algorithm run on a {}-agent game",
            shape.num_agents()
        )));
    }
    Ok(())
}
