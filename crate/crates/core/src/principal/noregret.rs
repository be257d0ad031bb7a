//! Learning utilities from no-regret agents by running projected gradient
//! descent over the payment polytope `{p ∈ [0,2]^m : Σp = m}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameShape, LearnedUtilities};
use crate::protocol::{PaymentOffer, Population, Session};

use super::{pinned_offer, require_single_agent};

const UPPER: f64 = 2.0;
const BISECTION_TOL: f64 = 1e-12;
const BISECTION_ITERS: usize = 100;

/// A payment vector inside the polytope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaymentPolytopePoint {
    pub p: Vec<f64>,
}

impl PaymentPolytopePoint {
    pub fn ones(m: usize) -> Self {
        PaymentPolytopePoint { p: vec![1.0; m] }
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        let m = self.p.len() as f64;
        self.p.iter().all(|&x| (-tol..=UPPER + tol).contains(&x))
            && (self.p.iter().sum::<f64>() - m).abs() <= tol
    }
}

fn clipped_sum(v: &[f64], lambda: f64) -> f64 {
    v.iter().map(|x| (x - lambda).clamp(0.0, UPPER)).sum()
}

/// Euclidean projection onto the payment polytope.
///
/// Bisects the multiplier `λ` in `p_i = clip(v_i - λ, 0, 2)`, then solves for
/// `λ` exactly on the free coordinates so the sum lands on `m` to rounding.
pub fn project_payment(v: &[f64]) -> Result<PaymentPolytopePoint> {
    if v.len() < 2 {
        return Err(Error::shape("payment polytope needs m ≥ 2"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("cannot project a non-finite vector".into()));
    }
    let m = v.len() as f64;
    let mut lo = v.iter().copied().fold(f64::INFINITY, f64::min) - UPPER;
    let mut hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..BISECTION_ITERS {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if clipped_sum(v, mid) > m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = 0.5 * (lo + hi);

    let (mut free_sum, mut free, mut capped) = (0.0, 0usize, 0usize);
    for &x in v {
        let y = x - lambda;
        if y >= UPPER {
            capped += 1;
        } else if y > 0.0 {
            free_sum += x;
            free += 1;
        }
    }
    if free > 0 {
        let exact = (free_sum + UPPER * capped as f64 - m) / free as f64;
        if (exact - lambda).abs() <= 1e-9 {
            lambda = exact;
        }
    }
    Ok(PaymentPolytopePoint {
        p: v.iter().map(|x| (x - lambda).clamp(0.0, UPPER)).collect(),
    })
}

/// Largest distance between two points of the polytope.
pub fn polytope_diameter(m: usize) -> f64 {
    UPPER * (2.0 * (m / 2) as f64).sqrt()
}

/// `min_{p ∈ P} ⟨p, c⟩`: 2 on the smallest `⌊m/2⌋` coordinates, 1 on the
/// median one when `m` is odd.
pub fn min_linear_over_polytope(c: &[f64]) -> f64 {
    let mut sorted = c.to_vec();
    sorted.sort_by(f64::total_cmp);
    let half = sorted.len() / 2;
    let mut value: f64 = sorted[..half].iter().map(|x| UPPER * x).sum();
    if sorted.len() % 2 == 1 {
        value += sorted[half];
    }
    value
}

/// Online projected gradient descent for one learning phase.
#[derive(Clone, Debug)]
struct GradientPhase {
    point: PaymentPolytopePoint,
    eta: f64,
    sum: Vec<f64>,
    counts: Vec<f64>,
    loss: f64,
    rounds: u64,
}

impl GradientPhase {
    fn new(m: usize, horizon: u64) -> Self {
        GradientPhase {
            point: PaymentPolytopePoint::ones(m),
            eta: (m as f64 / horizon as f64).sqrt(),
            sum: vec![0.0; m],
            counts: vec![0.0; m],
            loss: 0.0,
            rounds: 0,
        }
    }

    fn observe(&mut self, action: usize) -> Result<()> {
        for (s, p) in self.sum.iter_mut().zip(&self.point.p) {
            *s += p;
        }
        self.loss += self.point.p[action];
        self.counts[action] += 1.0;
        self.rounds += 1;
        let mut v = self.point.p.clone();
        v[action] -= self.eta;
        self.point = project_payment(&v)?;
        Ok(())
    }

    /// `-p̄`, centered to sum to zero.
    fn estimate(&self) -> Vec<f64> {
        let n = self.rounds.max(1) as f64;
        let raw: Vec<f64> = self.sum.iter().map(|s| -s / n).collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        raw.into_iter().map(|x| x - mean).collect()
    }

    fn regret(&self) -> f64 {
        self.loss - min_linear_over_polytope(&self.counts)
    }
}

/// Phase schedule: agents in index order, opponent profiles in lexicographic
/// order, `phase_length` rounds each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub agent_order: Vec<usize>,
    /// Per agent, the flat base index of each opponent profile.
    pub opponent_profiles: Vec<Vec<usize>>,
    pub phase_length: u64,
}

impl PhasePlan {
    pub fn new(shape: &GameShape, phase_length: u64) -> Self {
        let agent_order: Vec<usize> = (0..shape.num_agents()).collect();
        PhasePlan {
            opponent_profiles: agent_order
                .iter()
                .map(|&i| shape.opponent_bases(i))
                .collect(),
            agent_order,
            phase_length,
        }
    }

    /// `(agent, base)` pairs in execution order.
    pub fn phases(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.agent_order
            .iter()
            .flat_map(move |&i| self.opponent_profiles[i].iter().map(move |&b| (i, b)))
    }

    pub fn num_phases(&self) -> usize {
        self.opponent_profiles.iter().map(Vec::len).sum()
    }

    pub fn total_rounds(&self) -> u64 {
        self.phase_length * self.num_phases() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagnostics {
    pub phase: u32,
    pub agent: usize,
    pub opponent_profile: Vec<usize>,
    pub rounds: u64,
    pub pin_violations: u64,
    /// Principal's regret in the zero-sum learning game over this phase.
    pub principal_regret: f64,
    pub regret_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoRegretOutcome {
    pub learned: LearnedUtilities,
    pub rounds_used: u64,
    pub total_payment: f64,
    pub phases: Vec<PhaseDiagnostics>,
}

/// Empirical constant in `L = ⌈K/ε²⌉`: median `ε²L` measured over 2×2, 3×3
/// and 2×2×2 random games lies between 1.8 and 5.6.
pub const PHASE_LENGTH_CONSTANT: f64 = 4.0;

/// Phase length expected to reach strategic distance `epsilon`.
pub fn default_phase_length(epsilon: f64) -> u64 {
    (PHASE_LENGTH_CONSTANT / (epsilon * epsilon)).ceil() as u64
}

/// Learns a single no-regret agent over `horizon` rounds.
pub fn learn_single_agent_noregret<P: Population>(
    session: &mut Session<'_, P>,
    horizon: u64,
) -> Result<NoRegretOutcome> {
    require_single_agent(session.shape())?;
    learn_multi_agent_noregret(session, horizon)
}

/// Runs one projected-gradient phase of `phase_length` rounds per
/// `(agent, opponent profile)` pair, pinning the opponents.
pub fn learn_multi_agent_noregret<P: Population>(
    session: &mut Session<'_, P>,
    phase_length: u64,
) -> Result<NoRegretOutcome> {
    if phase_length == 0 {
        return Err(Error::config("phase length must be positive"));
    }
    let shape = session.shape().clone();
    let plan = PhasePlan::new(&shape, phase_length);
    let start_rounds = session.rounds();
    let start_paid = session.ledger().total_payment();
    let mut learned = LearnedUtilities::zeros(&shape, 0.0);
    let mut phases = Vec::with_capacity(plan.num_phases());

    for (phase, (i, base)) in plan.phases().enumerate() {
        let phase = phase as u32;
        session.set_phase(Some(phase));
        let profile = shape.profile_of(base);
        let m = shape.num_actions(i);
        let mut gd = GradientPhase::new(m, phase_length);
        let mut violations = 0;
        for _ in 0..phase_length {
            let offer = pinned_offer(
                &shape,
                i,
                &profile,
                PaymentOffer::Action(gd.point.p.clone()),
            );
            let actions = session.round(&offer)?;
            if (0..shape.num_agents()).any(|j| j != i && actions[j] != profile[j]) {
                violations += 1;
            }
            gd.observe(actions[i])?;
        }
        for (k, x) in shape.slice(i, base).zip(gd.estimate()) {
            learned.estimates[i][k] = x;
        }
        phases.push(PhaseDiagnostics {
            phase,
            agent: i,
            opponent_profile: profile,
            rounds: phase_length,
            pin_violations: violations,
            principal_regret: gd.regret(),
            regret_bound: polytope_diameter(m) * (phase_length as f64).sqrt(),
        });
    }
    session.set_phase(None);

    Ok(NoRegretOutcome {
        learned,
        rounds_used: session.rounds() - start_rounds,
        total_payment: session.ledger().total_payment() - start_paid,
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::NoRegretPopulation;
    use crate::game::{max_strategic_distance, NormalFormGame};
    use approx::assert_abs_diff_eq;

    #[test]
    fn projection_examples() {
        assert_eq!(
            project_payment(&[1.0, 1.0, 1.0]).unwrap().p,
            vec![1.0, 1.0, 1.0]
        );
        let p = project_payment(&[3.0, 3.0, 0.0]).unwrap().p;
        assert_abs_diff_eq!(p[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[2], 0.0, epsilon = 1e-12);
        assert_eq!(project_payment(&[5.0, 0.0]).unwrap().p, vec![2.0, 0.0]);
        assert!(project_payment(&[1.0]).is_err());
        assert!(project_payment(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn polytope_helpers() {
        assert_abs_diff_eq!(polytope_diameter(2), 8f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(polytope_diameter(3), 8f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(polytope_diameter(4), 4.0, epsilon = 1e-15);
        assert_eq!(min_linear_over_polytope(&[3.0, 1.0, 2.0]), 2.0 + 2.0);
        assert_eq!(min_linear_over_polytope(&[5.0, 0.0, 1.0, 4.0]), 2.0);
    }

    #[test]
    fn plan_covers_every_slice_once() {
        let shape = GameShape::new(vec![2, 3, 2]).unwrap();
        let plan = PhasePlan::new(&shape, 7);
        assert_eq!(plan.num_phases(), 6 + 4 + 6);
        assert_eq!(plan.total_rounds(), 7 * 16);
        let first: Vec<_> = plan
            .phases()
            .take(3)
            .map(|(_, b)| shape.profile_of(b))
            .collect();
        assert_eq!(first, vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 1, 0]]);
    }

    #[test]
    fn indifferent_agent_learns_zero() {
        let game = NormalFormGame::new(vec![3], vec![vec![0.5; 3]]).unwrap();
        let pop = NoRegretPopulation::new(game.clone(), 20_000, 3).unwrap();
        let mut s = Session::new(&game, pop).unwrap();
        let out = learn_single_agent_noregret(&mut s, 20_000).unwrap();
        assert!(max_strategic_distance(&game, &out.learned).unwrap() < 0.1);
        let sum: f64 = out.learned.estimates[0].iter().sum();
        assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_action_agent() {
        let horizon = 100_000;
        let mut errors: Vec<f64> = (0..10)
            .map(|seed| {
                let game = NormalFormGame::new(vec![2], vec![vec![0.8, 0.2]]).unwrap();
                let pop = NoRegretPopulation::new(game.clone(), horizon, seed).unwrap();
                let mut s = Session::new(&game, pop).unwrap();
                let out = learn_single_agent_noregret(&mut s, horizon).unwrap();
                for d in &out.phases {
                    assert!(d.principal_regret <= d.regret_bound);
                }
                max_strategic_distance(&game, &out.learned).unwrap()
            })
            .collect();
        errors.sort_by(f64::total_cmp);
        assert!(errors[5] <= 0.1, "median {}", errors[5]);
    }
}
