//! Iterated elimination of strictly dominated actions and conforming
//! selection rules for the rationalizable behavioral model.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameShape, NormalFormGame};
use crate::lp::{solve_lp, LpProblem, Relation};

/// An action counts as strictly dominated only when some mixture beats it by
/// more than this against every surviving opponent profile.
pub const DOMINATION_MARGIN: f64 = 1e-9;

/// How a rationalizable agent picks among its surviving actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Best response to the uniform distribution over the opponents'
    /// surviving profiles, lowest index on ties.
    GreedyUniform,
    /// Highest-index surviving action.
    AdversarialMax,
    /// Lowest-index surviving action.
    AdversarialMin,
}

impl Policy {
    pub const ALL: [Policy; 3] = [
        Policy::GreedyUniform,
        Policy::AdversarialMax,
        Policy::AdversarialMin,
    ];
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::GreedyUniform => "greedy-uniform",
            Policy::AdversarialMax => "adversarial-max",
            Policy::AdversarialMin => "adversarial-min",
        })
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy-uniform" => Ok(Policy::GreedyUniform),
            "adversarial-max" => Ok(Policy::AdversarialMax),
            "adversarial-min" => Ok(Policy::AdversarialMin),
            _ => Err(Error::config(format!("unknown agent policy {s:?}"))),
        }
    }
}

/// Surviving actions of every agent after iterated elimination.
pub fn rationalizable_set(game: &NormalFormGame) -> Vec<Vec<usize>> {
    let mut surviving: Vec<Vec<usize>> = game
        .action_counts()
        .iter()
        .map(|&m| (0..m).collect())
        .collect();
    loop {
        let mut changed = false;
        for i in 0..game.num_agents() {
            let mut k = 0;
            while k < surviving[i].len() {
                let a = surviving[i][k];
                if surviving[i].len() > 1 && is_dominated(game, i, a, &surviving) {
                    surviving[i].remove(k);
                    changed = true;
                } else {
                    k += 1;
                }
            }
        }
        if !changed {
            return surviving;
        }
    }
}

/// Same fixed point, reached by removing one dominated action at a time in
/// a random order.
pub fn rationalizable_set_random_order<R: Rng>(
    game: &NormalFormGame,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut surviving: Vec<Vec<usize>> = game
        .action_counts()
        .iter()
        .map(|&m| (0..m).collect())
        .collect();
    loop {
        let mut candidates: Vec<(usize, usize)> = surviving
            .iter()
            .enumerate()
            .filter(|(_, s)| s.len() > 1)
            .flat_map(|(i, s)| s.iter().map(move |&a| (i, a)))
            .collect();
        candidates.shuffle(rng);
        let hit = candidates
            .into_iter()
            .find(|&(i, a)| is_dominated(game, i, a, &surviving));
        match hit {
            Some((i, a)) => surviving[i].retain(|&b| b != a),
            None => return surviving,
        }
    }
}

/// Flat indices with `agent` at action 0 and every opponent at a surviving
/// action.
fn surviving_bases(shape: &GameShape, agent: usize, surviving: &[Vec<usize>]) -> Vec<usize> {
    let mut bases = vec![0usize];
    for (j, acts) in surviving.iter().enumerate() {
        if j == agent {
            continue;
        }
        let stride = shape.stride(j);
        bases = bases
            .iter()
            .flat_map(|&b| acts.iter().map(move |&a| b + a * stride))
            .collect();
    }
    bases
}

fn is_dominated(
    game: &NormalFormGame,
    agent: usize,
    action: usize,
    surviving: &[Vec<usize>],
) -> bool {
    let shape = game.shape();
    let u = game.utilities(agent);
    let stride = shape.stride(agent);
    let bases = surviving_bases(shape, agent, surviving);
    let others: Vec<usize> = surviving[agent]
        .iter()
        .copied()
        .filter(|&b| b != action)
        .collect();

    let margin = |b: usize, base: usize| u[base + b * stride] - u[base + action * stride];
    if others.iter().any(|&b| {
        bases
            .iter()
            .all(|&base| margin(b, base) > DOMINATION_MARGIN)
    }) {
        return true;
    }
    if others.len() < 2 {
        return false;
    }

    // max t  s.t.  Σ_b x_b (U(b, a_-i) - U(a, a_-i)) ≥ t  for surviving a_-i,  x ∈ Δ
    let mut lp = LpProblem::new();
    let xs: Vec<usize> = others
        .iter()
        .map(|_| lp.add_var(0.0, f64::INFINITY, 0.0))
        .collect();
    let t = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
    lp.add_constraint(xs.iter().map(|&x| (x, 1.0)).collect(), Relation::Eq, 1.0);
    for &base in &bases {
        let mut row: Vec<(usize, f64)> = others
            .iter()
            .zip(&xs)
            .map(|(&b, &x)| (x, -margin(b, base)))
            .collect();
        row.push((t, 1.0));
        lp.add_constraint(row, Relation::Le, 0.0);
    }
    match solve_lp(&lp) {
        Ok(sol) => sol.objective > DOMINATION_MARGIN,
        Err(_) => false,
    }
}

/// Picks `agent`'s action among `surviving[agent]` under `policy`.
pub fn choose_action(
    game: &NormalFormGame,
    surviving: &[Vec<usize>],
    agent: usize,
    policy: Policy,
) -> usize {
    let own = &surviving[agent];
    match policy {
        Policy::AdversarialMin => own[0],
        Policy::AdversarialMax => own[own.len() - 1],
        Policy::GreedyUniform => {
            let shape = game.shape();
            let u = game.utilities(agent);
            let stride = shape.stride(agent);
            let bases = surviving_bases(shape, agent, surviving);
            let value = |a: usize| {
                bases.iter().map(|&b| u[b + a * stride]).sum::<f64>() / bases.len() as f64
            };
            let mut best = own[0];
            let mut best_value = value(best);
            for &a in &own[1..] {
                let v = value(a);
                if v > best_value + 1e-12 {
                    best = a;
                    best_value = v;
                }
            }
            best
        }
    }
}

/// An action for `agent` in the payment-augmented game `game`.
pub fn rationalizable_agent_act(game: &NormalFormGame, agent: usize, policy: Policy) -> usize {
    let surviving = rationalizable_set(game);
    choose_action(game, &surviving, agent, policy)
}
