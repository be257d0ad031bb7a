//! Normal-form games, test-game generators and the strategic-equivalence
//! metric used to score learned utilities.
//!
//! Utility tensors are dense and flat. Profiles are laid out with agent 0's
//! action varying fastest, so the flat index of `(a_0, .., a_{n-1})` is
//! `a_0 + m_0 * (a_1 + m_1 * (a_2 + ..))`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A joint action, one index per agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionProfile(pub Vec<usize>);

impl ActionProfile {
    pub fn new(actions: Vec<usize>) -> Self {
        ActionProfile(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for ActionProfile {
    type Output = usize;

    fn index(&self, agent: usize) -> &usize {
        &self.0[agent]
    }
}

/// Shape of a game: the number of actions of every agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GameShape {
    action_counts: Vec<usize>,
}

impl GameShape {
    pub fn new(action_counts: Vec<usize>) -> Result<Self> {
        if action_counts.is_empty() {
            return Err(Error::shape("a game needs at least one agent"));
        }
        if let Some(i) = action_counts.iter().position(|&m| m < 2) {
            return Err(Error::shape(format!(
                "agent {i} has {} actions, at least 2 are required",
                action_counts[i]
            )));
        }
        Ok(GameShape { action_counts })
    }

    pub fn num_agents(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn num_actions(&self, agent: usize) -> usize {
        self.action_counts[agent]
    }

    /// `M`, the number of joint action profiles.
    pub fn num_profiles(&self) -> usize {
        self.action_counts.iter().product()
    }

    /// Number of opponent profiles `a_{-i}` for `agent`.
    pub fn num_opponent_profiles(&self, agent: usize) -> usize {
        self.num_profiles() / self.action_counts[agent]
    }

    pub fn stride(&self, agent: usize) -> usize {
        self.action_counts[..agent].iter().product()
    }

    pub fn index_of(&self, profile: &[usize]) -> usize {
        debug_assert_eq!(profile.len(), self.num_agents());
        let mut idx = 0;
        for (a, m) in profile.iter().zip(&self.action_counts).rev() {
            idx = idx * m + a;
        }
        idx
    }

    pub fn profile_of(&self, mut index: usize) -> Vec<usize> {
        self.action_counts
            .iter()
            .map(|&m| {
                let a = index % m;
                index /= m;
                a
            })
            .collect()
    }

    pub fn action_in(&self, index: usize, agent: usize) -> usize {
        (index / self.stride(agent)) % self.action_counts[agent]
    }

    /// Flat index of the profile obtained by switching `agent` to `action`.
    pub fn with_action(&self, index: usize, agent: usize, action: usize) -> usize {
        let stride = self.stride(agent);
        let current = (index / stride) % self.action_counts[agent];
        index - current * stride + action * stride
    }

    pub fn check_profile(&self, profile: &[usize]) -> Result<()> {
        if profile.len() != self.num_agents() {
            return Err(Error::shape(format!(
                "profile has {} entries for a {}-agent game",
                profile.len(),
                self.num_agents()
            )));
        }
        for (i, (&a, &m)) in profile.iter().zip(&self.action_counts).enumerate() {
            if a >= m {
                return Err(Error::shape(format!(
                    "agent {i} action {a} out of range 0..{m}"
                )));
            }
        }
        Ok(())
    }

    /// Flat indices of the profiles with `agent` playing action 0, one per
    /// opponent profile, in lexicographic order of the opponents' actions
    /// (lowest-numbered opponent most significant).
    pub fn opponent_bases(&self, agent: usize) -> Vec<usize> {
        let n = self.num_agents();
        let others: Vec<usize> = (0..n).filter(|&j| j != agent).collect();
        let mut current = vec![0usize; n];
        let mut out = Vec::with_capacity(self.num_opponent_profiles(agent));
        loop {
            out.push(self.index_of(&current));
            // odometer with the last opponent fastest
            let mut k = others.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                let j = others[k];
                current[j] += 1;
                if current[j] < self.action_counts[j] {
                    break;
                }
                current[j] = 0;
            }
        }
    }

    /// Flat indices of the slice `{(a_i, a_{-i}) : a_i}` through `base`.
    pub fn slice(&self, agent: usize, base: usize) -> impl Iterator<Item = usize> {
        let stride = self.stride(agent);
        let start = self.with_action(base, agent, 0);
        (0..self.action_counts[agent]).map(move |a| start + a * stride)
    }
}

/// A normal-form game `(n, A, U)` with dense per-agent utility tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalFormGame {
    shape: GameShape,
    utilities: Vec<Vec<f64>>,
    extended_range: bool,
}

impl NormalFormGame {
    /// Builds a game, marking it `extended_range` when any value leaves `[0, 1]`.
    pub fn new(action_counts: Vec<usize>, utilities: Vec<Vec<f64>>) -> Result<Self> {
        let shape = GameShape::new(action_counts)?;
        if utilities.len() != shape.num_agents() {
            return Err(Error::shape(format!(
                "{} utility tensors for {} agents",
                utilities.len(),
                shape.num_agents()
            )));
        }
        let size = shape.num_profiles();
        for (i, u) in utilities.iter().enumerate() {
            if u.len() != size {
                return Err(Error::shape(format!(
                    "agent {i} tensor has {} entries, expected {size}",
                    u.len()
                )));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "agent {i} has non-finite utilities"
                )));
            }
        }
        let extended_range = utilities
            .iter()
            .flatten()
            .any(|&v| !(0.0..=1.0).contains(&v));
        Ok(NormalFormGame {
            shape,
            utilities,
            extended_range,
        })
    }

    pub fn shape(&self) -> &GameShape {
        &self.shape
    }

    pub fn num_agents(&self) -> usize {
        self.shape.num_agents()
    }

    pub fn action_counts(&self) -> &[usize] {
        self.shape.action_counts()
    }

    pub fn num_profiles(&self) -> usize {
        self.shape.num_profiles()
    }

    pub fn utilities(&self, agent: usize) -> &[f64] {
        &self.utilities[agent]
    }

    pub fn all_utilities(&self) -> &[Vec<f64>] {
        &self.utilities
    }

    pub fn utility(&self, agent: usize, index: usize) -> f64 {
        self.utilities[agent][index]
    }

    pub fn extended_range(&self) -> bool {
        self.extended_range
    }

    /// Smallest and largest utility over all agents and profiles.
    pub fn utility_range(&self) -> (f64, f64) {
        self.utilities
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// `U_i(·, a_{-i}) + payment_row`, the utility vector agent `i` faces over
    /// its own actions given the others' realized profile.
    pub fn utility_row(&self, agent: usize, index: usize, payments: &[f64]) -> Vec<f64> {
        self.shape
            .slice(agent, index)
            .zip(payments)
            .map(|(k, p)| self.utilities[agent][k] + p)
            .collect()
    }
}

/// The principal's estimates `Ũ_i`, one flat tensor per agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedUtilities {
    pub estimates: Vec<Vec<f64>>,
    pub target_epsilon: f64,
}

impl LearnedUtilities {
    pub fn zeros(shape: &GameShape, target_epsilon: f64) -> Self {
        LearnedUtilities {
            estimates: vec![vec![0.0; shape.num_profiles()]; shape.num_agents()],
            target_epsilon,
        }
    }

    /// The estimated game, for solving equilibria on `Ũ`.
    pub fn as_game(&self, shape: &GameShape) -> Result<NormalFormGame> {
        NormalFormGame::new(shape.action_counts().to_vec(), self.estimates.clone())
    }
}

/// `min_W max_a |U_i(a) + W(a_{-i}) - Ũ_i(a)|` for one agent.
///
/// For every opponent profile the best offset is the midpoint of the range of
/// `Ũ_i - U_i` over the agent's own actions, leaving half that range as error.
pub fn strategic_distance(
    game: &NormalFormGame,
    est: &LearnedUtilities,
    agent: usize,
) -> Result<f64> {
    check_estimate_shape(game, est)?;
    if agent >= game.num_agents() {
        return Err(Error::shape(format!("no agent {agent}")));
    }
    let shape = game.shape();
    let truth = game.utilities(agent);
    let guess = &est.estimates[agent];
    let mut worst = 0.0f64;
    for base in shape.opponent_bases(agent) {
        let (lo, hi) = shape
            .slice(agent, base)
            .map(|k| guess[k] - truth[k])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                (lo.min(d), hi.max(d))
            });
        worst = worst.max(0.5 * (hi - lo));
    }
    Ok(worst)
}

/// Per-agent distances; the headline figure is their maximum.
pub fn strategic_distances(game: &NormalFormGame, est: &LearnedUtilities) -> Result<Vec<f64>> {
    (0..game.num_agents())
        .map(|i| strategic_distance(game, est, i))
        .collect()
}

pub fn max_strategic_distance(game: &NormalFormGame, est: &LearnedUtilities) -> Result<f64> {
    Ok(strategic_distances(game, est)?
        .into_iter()
        .fold(0.0, f64::max))
}

fn check_estimate_shape(game: &NormalFormGame, est: &LearnedUtilities) -> Result<()> {
    if est.estimates.len() != game.num_agents()
        || est.estimates.iter().any(|e| e.len() != game.num_profiles())
    {
        return Err(Error::shape(
            "learned utilities do not match the game's shape",
        ));
    }
    Ok(())
}

/// I.i.d. uniform `[0, 1)` utilities.
pub fn generate_random_game(action_counts: &[usize], seed: u64) -> Result<NormalFormGame> {
    let shape = GameShape::new(action_counts.to_vec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utilities = (0..shape.num_agents())
        .map(|_| {
            (0..shape.num_profiles())
                .map(|_| rng.random::<f64>())
                .collect()
        })
        .collect();
    NormalFormGame::new(action_counts.to_vec(), utilities)
}

/// The hard instance family for round lower bounds: every agent's first
/// action is worth 0 everywhere, all other entries are drawn uniformly from
/// the grid `{0, 2ε, 4ε, ..}` capped at 1.
pub fn generate_lowerbound_game(
    action_counts: &[usize],
    epsilon: f64,
    seed: u64,
) -> Result<NormalFormGame> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::config(format!(
            "lower-bound grid needs epsilon in (0, 1/2], got {epsilon}"
        )));
    }
    let shape = GameShape::new(action_counts.to_vec())?;
    let points = lowerbound_grid(epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut utilities = Vec::with_capacity(shape.num_agents());
    for i in 0..shape.num_agents() {
        let u = (0..shape.num_profiles())
            .map(|k| {
                if shape.action_in(k, i) == 0 {
                    0.0
                } else {
                    points[rng.random_range(0..points.len())]
                }
            })
            .collect();
        utilities.push(u);
    }
    NormalFormGame::new(action_counts.to_vec(), utilities)
}

/// Grid points `k·2ε` in `[0, 1]`.
pub fn lowerbound_grid(epsilon: f64) -> Vec<f64> {
    let steps = (1.0 / (2.0 * epsilon) + 1e-9).floor() as usize;
    (0..=steps)
        .map(|k| (k as f64 * 2.0 * epsilon).min(1.0))
        .collect()
}

/// Two agents play matching pennies while the principal pays to avoid
/// `(X, X)`: principal utility is `-penalty` there and 0 elsewhere.
///
/// Action 0 is `X`, action 1 is `Y`; agent 0 picks the row.
pub fn generate_signal_dependence_game(penalty: f64) -> Result<(NormalFormGame, Vec<f64>)> {
    if !(penalty >= 10.0) || !penalty.is_finite() {
        return Err(Error::config(format!(
            "signal-dependence penalty must be finite and at least 10, got {penalty}"
        )));
    }
    let shape = GameShape::new(vec![2, 2])?;
    let mut row = vec![0.0; 4];
    let mut col = vec![0.0; 4];
    let mut principal = vec![0.0; 4];
    // (row, col) -> (principal, P1, P2)
    let table = [
        ((0, 0), (-penalty, 0.0, 1.0)),
        ((0, 1), (0.0, 1.0, 0.0)),
        ((1, 0), (0.0, 1.0, 0.0)),
        ((1, 1), (0.0, 0.0, 1.0)),
    ];
    for ((r, c), (u0, u1, u2)) in table {
        let k = shape.index_of(&[r, c]);
        principal[k] = u0;
        row[k] = u1;
        col[k] = u2;
    }
    Ok((NormalFormGame::new(vec![2, 2], vec![row, col])?, principal))
}

/// On-disk game: `{n, action_counts, utilities, extended_range}` plus an
/// optional principal utility tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub n: usize,
    pub action_counts: Vec<usize>,
    pub utilities: Vec<Vec<f64>>,
    pub extended_range: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal_utility: Option<Vec<f64>>,
}

impl GameFile {
    pub fn from_game(game: &NormalFormGame, principal_utility: Option<&[f64]>) -> Self {
        GameFile {
            n: game.num_agents(),
            action_counts: game.action_counts().to_vec(),
            utilities: game.all_utilities().to_vec(),
            extended_range: game.extended_range(),
            principal_utility: principal_utility.map(<[f64]>::to_vec),
        }
    }

    pub fn into_game(self) -> Result<(NormalFormGame, Option<Vec<f64>>)> {
        if self.n != self.action_counts.len() {
            return Err(Error::shape(format!(
                "n = {} but {} action counts given",
                self.n,
                self.action_counts.len()
            )));
        }
        let game = NormalFormGame::new(self.action_counts, self.utilities)?;
        if let Some(u0) = &self.principal_utility {
            if u0.len() != game.num_profiles() {
                return Err(Error::shape("principal utility has the wrong length"));
            }
        }
        Ok((game, self.principal_utility))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single(u: &[f64]) -> NormalFormGame {
        NormalFormGame::new(vec![u.len()], vec![u.to_vec()]).unwrap()
    }

    fn est(u: &[f64]) -> LearnedUtilities {
        LearnedUtilities {
            estimates: vec![u.to_vec()],
            target_epsilon: 0.1,
        }
    }

    #[test]
    fn distance_zero_for_constant_offset() {
        let g = single(&[0.5, 0.2, 0.9]);
        let d = strategic_distance(&g, &est(&[-0.4, -0.7, 0.0]), 0).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn distance_half_range() {
        let g = single(&[0.5, 0.2, 0.9]);
        let d = strategic_distance(&g, &est(&[0.0, 0.0, 0.0]), 0).unwrap();
        assert_abs_diff_eq!(d, 0.35, epsilon = 1e-12);
        let same = strategic_distance(&g, &est(&[0.5, 0.2, 0.9]), 0).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn distance_rejects_shape_mismatch() {
        let g = single(&[0.5, 0.2, 0.9]);
        assert!(matches!(
            strategic_distance(&g, &est(&[0.0, 0.0]), 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn index_roundtrip_and_strides() {
        let s = GameShape::new(vec![2, 3, 4]).unwrap();
        for k in 0..s.num_profiles() {
            assert_eq!(s.index_of(&s.profile_of(k)), k);
        }
        assert_eq!(s.index_of(&[1, 0, 0]), 1);
        assert_eq!(s.index_of(&[0, 1, 0]), 2);
        assert_eq!(s.index_of(&[0, 0, 1]), 6);
        assert_eq!(
            s.with_action(s.index_of(&[1, 2, 3]), 1, 0),
            s.index_of(&[1, 0, 3])
        );
    }

    #[test]
    fn opponent_bases_are_lexicographic() {
        let s = GameShape::new(vec![2, 3, 2]).unwrap();
        let bases: Vec<Vec<usize>> = s
            .opponent_bases(1)
            .into_iter()
            .map(|b| s.profile_of(b))
            .collect();
        assert_eq!(
            bases,
            vec![vec![0, 0, 0], vec![0, 0, 1], vec![1, 0, 0], vec![1, 0, 1]]
        );
    }

    #[test]
    fn random_game_is_seeded() {
        let a = generate_random_game(&[2, 3], 11).unwrap();
        let b = generate_random_game(&[2, 3], 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.utilities(0).len(), 6);
        assert_eq!(a.utilities(1).len(), 6);
        let one = generate_random_game(&[2], 0).unwrap();
        assert!(one.utilities(0).iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(!one.extended_range());
    }

    #[test]
    fn lowerbound_game_structure() {
        let g = generate_lowerbound_game(&[3, 2], 0.5, 4).unwrap();
        for i in 0..2 {
            for k in 0..g.num_profiles() {
                let v = g.utility(i, k);
                if g.shape().action_in(k, i) == 0 {
                    assert_eq!(v, 0.0);
                } else {
                    assert!(v == 0.0 || v == 1.0);
                }
            }
        }
        assert_eq!(g, generate_lowerbound_game(&[3, 2], 0.5, 4).unwrap());
        assert!(generate_lowerbound_game(&[2, 2], 0.6, 0).is_err());
    }

    #[test]
    fn signal_dependence_table() {
        let (g, u0) = generate_signal_dependence_game(100.0).unwrap();
        let s = g.shape();
        let at = |i: usize, r: usize, c: usize| g.utility(i, s.index_of(&[r, c]));
        assert_eq!(
            [at(0, 0, 0), at(0, 0, 1), at(0, 1, 0), at(0, 1, 1)],
            [0.0, 1.0, 1.0, 0.0]
        );
        assert_eq!(
            [at(1, 0, 0), at(1, 0, 1), at(1, 1, 0), at(1, 1, 1)],
            [1.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(u0[s.index_of(&[0, 0])], -100.0);
        assert_eq!(u0.iter().filter(|&&v| v == 0.0).count(), 3);
        assert!(generate_signal_dependence_game(5.0).is_err());
    }

    #[test]
    fn extended_range_flag() {
        let g = NormalFormGame::new(vec![2], vec![vec![-0.5, 1.5]]).unwrap();
        assert!(g.extended_range());
        assert_eq!(g.utility_range(), (-0.5, 1.5));
    }

    #[test]
    fn game_file_roundtrip_is_bit_exact() {
        let g = generate_random_game(&[3, 2, 2], 99).unwrap();
        let text = GameFile::from_game(&g, None).to_json().unwrap();
        let back: GameFile = serde_json::from_str(&text).unwrap();
        let (g2, u0) = back.into_game().unwrap();
        assert!(u0.is_none());
        for i in 0..3 {
            for (a, b) in g.utilities(i).iter().zip(g2.utilities(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
