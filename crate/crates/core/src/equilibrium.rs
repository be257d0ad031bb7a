//! Correlated equilibria with payments: the optimal-CEP linear program, its
//! signal-independent restriction, verification and canonicalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameShape, NormalFormGame};
use crate::lp::{solve_lp, LpProblem, Relation};
use crate::rng::stream_rng;

/// Marginals at or below this are treated as unreachable when dividing.
const SUPPORT_TOL: f64 = 1e-12;
/// Slack added to `epsilon` when checking incentive compatibility.
pub const IC_TOL: f64 = 1e-6;

/// `P_i(s, a)` for one agent, indexed by flat profiles of the game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PaymentTable {
    /// Paid only on obedience: `P(s, a) = v[s]` if `a == s`, else 0.
    Diagonal(Vec<f64>),
    /// `P(s, a) = v[a]` regardless of the signal.
    SignalIndependent { signal_independent: Vec<f64> },
    /// Row-major `M × M` table.
    Dense { dense: Vec<f64> },
}

impl PaymentTable {
    pub fn get(&self, s: usize, a: usize, num_profiles: usize) -> f64 {
        match self {
            PaymentTable::Diagonal(v) => {
                if s == a {
                    v[s]
                } else {
                    0.0
                }
            }
            PaymentTable::SignalIndependent { signal_independent } => signal_independent[a],
            PaymentTable::Dense { dense } => dense[s * num_profiles + a],
        }
    }

    /// Obedience payment `P(a, a)`.
    pub fn on_path(&self, a: usize, num_profiles: usize) -> f64 {
        self.get(a, a, num_profiles)
    }

    fn len_ok(&self, num_profiles: usize) -> bool {
        match self {
            PaymentTable::Diagonal(v) => v.len() == num_profiles,
            PaymentTable::SignalIndependent { signal_independent } => {
                signal_independent.len() == num_profiles
            }
            PaymentTable::Dense { dense } => dense.len() == num_profiles * num_profiles,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CepSolution {
    pub mu: Vec<f64>,
    pub payments: Vec<PaymentTable>,
    pub epsilon: f64,
    pub objective: f64,
}

impl CepSolution {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `Σ_a μ(a) Σ_i P_i(a, a)`.
    pub fn expected_payment(&self) -> f64 {
        let m = self.mu.len();
        (0..m)
            .map(|a| self.mu[a] * self.payments.iter().map(|p| p.on_path(a, m)).sum::<f64>())
            .sum()
    }
}

/// `F(μ) = Σ_s μ(s) [U_0(s) - Σ_i P_i(s, s)]`.
pub fn cep_objective(principal_utility: &[f64], mu: &[f64], payments: &[PaymentTable]) -> f64 {
    let m = mu.len();
    (0..m)
        .map(|s| {
            let paid: f64 = payments.iter().map(|p| p.on_path(s, m)).sum();
            mu[s] * (principal_utility[s] - paid)
        })
        .sum()
}

fn check_inputs(game: &NormalFormGame, principal_utility: &[f64], epsilon: f64) -> Result<()> {
    if principal_utility.len() != game.num_profiles() {
        return Err(Error::shape("principal utility does not match the game"));
    }
    if principal_utility.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite principal utility".into()));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::config(format!(
            "epsilon must be finite and nonnegative, got {epsilon}"
        )));
    }
    Ok(())
}

/// Largest gain any single deviation can bring agent `i`, used to cap `Q`.
fn payment_cap(game: &NormalFormGame, agent: usize) -> f64 {
    let u = game.utilities(agent);
    let (lo, hi) = u
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    (hi - lo).max(1.0)
}

/// Adds the per-agent slack variables `e_i(a_i)` with their budget rows.
fn add_slack(lp: &mut LpProblem, shape: &GameShape, epsilon: f64) -> Vec<Vec<usize>> {
    (0..shape.num_agents())
        .map(|i| {
            let vars: Vec<usize> = (0..shape.num_actions(i))
                .map(|_| lp.add_var(0.0, f64::INFINITY, 0.0))
                .collect();
            lp.add_constraint(
                vars.iter().map(|&v| (v, 1.0)).collect(),
                Relation::Le,
                epsilon,
            );
            vars
        })
        .collect()
}

/// Clamps solver noise out of `μ` and renormalizes.
fn clean_distribution(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    clipped.into_iter().map(|x| x / total).collect()
}

fn marginal(shape: &GameShape, mu: &[f64], agent: usize) -> Vec<f64> {
    let mut out = vec![0.0; shape.num_actions(agent)];
    for (k, &p) in mu.iter().enumerate() {
        out[shape.action_in(k, agent)] += p;
    }
    out
}

/// Optimal ε-CEP via the linear program over `μ`, `Q_i(a_i)` and `e_i(a_i)`.
pub fn solve_optimal_cep(
    game: &NormalFormGame,
    principal_utility: &[f64],
    epsilon: f64,
) -> Result<CepSolution> {
    solve_cep_lp(game, principal_utility, epsilon, false)
}

/// The same program with every payment forced to zero: the best ε-correlated
/// equilibrium of the base game.
pub fn solve_optimal_cep_zero_payment(
    game: &NormalFormGame,
    principal_utility: &[f64],
    epsilon: f64,
) -> Result<CepSolution> {
    solve_cep_lp(game, principal_utility, epsilon, true)
}

fn solve_cep_lp(
    game: &NormalFormGame,
    principal_utility: &[f64],
    epsilon: f64,
    zero_payment: bool,
) -> Result<CepSolution> {
    check_inputs(game, principal_utility, epsilon)?;
    let shape = game.shape();
    let n = shape.num_agents();
    let mut lp = LpProblem::new();

    let mu: Vec<usize> = principal_utility
        .iter()
        .map(|&u0| lp.add_var(0.0, f64::INFINITY, u0))
        .collect();
    lp.add_constraint(mu.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0);
    let q_upper = if zero_payment { 0.0 } else { f64::INFINITY };
    let q: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..shape.num_actions(i))
                .map(|_| lp.add_var(0.0, q_upper, -1.0))
                .collect()
        })
        .collect();
    let e = add_slack(&mut lp, shape, epsilon);

    for i in 0..n {
        let u = game.utilities(i);
        let cap = payment_cap(game, i);
        let bases = shape.opponent_bases(i);
        for ai in 0..shape.num_actions(i) {
            // Q_i(a_i) ≤ cap · Σ_{a_-i} μ(a_i, a_-i)
            let mut row = vec![(q[i][ai], 1.0)];
            row.extend(
                bases
                    .iter()
                    .map(|&b| (mu[shape.with_action(b, i, ai)], -cap)),
            );
            lp.add_constraint(row, Relation::Le, 0.0);

            for dev in (0..shape.num_actions(i)).filter(|&d| d != ai) {
                let mut row: Vec<(usize, f64)> = bases
                    .iter()
                    .map(|&b| {
                        let k = shape.with_action(b, i, ai);
                        let kd = shape.with_action(b, i, dev);
                        (mu[k], u[kd] - u[k])
                    })
                    .collect();
                row.push((q[i][ai], -1.0));
                row.push((e[i][ai], -1.0));
                lp.add_constraint(row, Relation::Le, 0.0);
            }
        }
    }

    let sol = solve_lp(&lp)?;
    let mu_val = clean_distribution(&mu.iter().map(|&v| sol.x[v]).collect::<Vec<_>>());
    let payments: Vec<PaymentTable> = (0..n)
        .map(|i| {
            let marg = marginal(shape, &mu_val, i);
            let per_action: Vec<f64> = (0..shape.num_actions(i))
                .map(|ai| {
                    if marg[ai] > SUPPORT_TOL {
                        sol.x[q[i][ai]].max(0.0) / marg[ai]
                    } else {
                        0.0
                    }
                })
                .collect();
            PaymentTable::Diagonal(
                (0..shape.num_profiles())
                    .map(|k| per_action[shape.action_in(k, i)])
                    .collect(),
            )
        })
        .collect();
    let objective = cep_objective(principal_utility, &mu_val, &payments);
    Ok(CepSolution {
        mu: mu_val,
        payments,
        epsilon,
        objective,
    })
}

/// Best μ for fixed signal-independent payments `p` (a CE of `U + p`).
fn best_mu_for_payments(
    game: &NormalFormGame,
    principal_utility: &[f64],
    p: &[Vec<f64>],
    epsilon: f64,
) -> Result<Vec<f64>> {
    let shape = game.shape();
    let mut lp = LpProblem::new();
    let mu: Vec<usize> = (0..shape.num_profiles())
        .map(|k| {
            let paid: f64 = p.iter().map(|pi| pi[k]).sum();
            lp.add_var(0.0, f64::INFINITY, principal_utility[k] - paid)
        })
        .collect();
    lp.add_constraint(mu.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0);
    let e = add_slack(&mut lp, shape, epsilon);
    for i in 0..shape.num_agents() {
        let u = game.utilities(i);
        let bases = shape.opponent_bases(i);
        for ai in 0..shape.num_actions(i) {
            for dev in (0..shape.num_actions(i)).filter(|&d| d != ai) {
                let mut row: Vec<(usize, f64)> = bases
                    .iter()
                    .map(|&b| {
                        let k = shape.with_action(b, i, ai);
                        let kd = shape.with_action(b, i, dev);
                        (mu[k], u[kd] + p[i][kd] - u[k] - p[i][k])
                    })
                    .collect();
                row.push((e[i][ai], -1.0));
                lp.add_constraint(row, Relation::Le, 0.0);
            }
        }
    }
    let sol = solve_lp(&lp)?;
    Ok(clean_distribution(
        &mu.iter().map(|&v| sol.x[v]).collect::<Vec<_>>(),
    ))
}

/// Cheapest signal-independent payments making `mu` an ε-CE, if any.
fn cheapest_payments_for_mu(
    game: &NormalFormGame,
    mu: &[f64],
    epsilon: f64,
) -> Option<Vec<Vec<f64>>> {
    let shape = game.shape();
    let n = shape.num_agents();
    let mut lp = LpProblem::new();
    let p: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            mu.iter()
                .map(|&w| lp.add_var(0.0, f64::INFINITY, -w))
                .collect()
        })
        .collect();
    let e = add_slack(&mut lp, shape, epsilon);
    for i in 0..n {
        let u = game.utilities(i);
        let bases = shape.opponent_bases(i);
        for ai in 0..shape.num_actions(i) {
            for dev in (0..shape.num_actions(i)).filter(|&d| d != ai) {
                let mut row = Vec::new();
                let mut constant = 0.0;
                for &b in &bases {
                    let k = shape.with_action(b, i, ai);
                    let kd = shape.with_action(b, i, dev);
                    if mu[k] == 0.0 {
                        continue;
                    }
                    constant += mu[k] * (u[kd] - u[k]);
                    row.push((p[i][kd], mu[k]));
                    row.push((p[i][k], -mu[k]));
                }
                row.push((e[i][ai], -1.0));
                lp.add_constraint(row, Relation::Le, -constant);
            }
        }
    }
    let sol = solve_lp(&lp).ok()?;
    Some(
        p.iter()
            .map(|pi| pi.iter().map(|&v| sol.x[v].max(0.0)).collect())
            .collect(),
    )
}

fn signal_independent_value(principal_utility: &[f64], mu: &[f64], p: &[Vec<f64>]) -> f64 {
    mu.iter()
        .enumerate()
        .map(|(k, &w)| w * (principal_utility[k] - p.iter().map(|pi| pi[k]).sum::<f64>()))
        .sum()
}

/// Optimal ε-CEP whose payments depend only on the played profile.
///
/// The restricted problem is bilinear in `(μ, p)`. It is solved by alternating
/// the two linear programs from a fixed set of starting points (zero
/// payments, the unrestricted optimum, every pure profile, uniform and a few
/// seeded random distributions) and keeping the best feasible point, so the
/// returned objective is a lower bound on the restricted optimum.
pub fn solve_optimal_cep_signal_independent(
    game: &NormalFormGame,
    principal_utility: &[f64],
    epsilon: f64,
) -> Result<CepSolution> {
    check_inputs(game, principal_utility, epsilon)?;
    let shape = game.shape();
    let n = shape.num_agents();
    let num = shape.num_profiles();
    let unrestricted = solve_optimal_cep(game, principal_utility, epsilon)?;

    let mut starts_p: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; num]; n]];
    starts_p.push(
        unrestricted
            .payments
            .iter()
            .map(|t| (0..num).map(|k| t.on_path(k, num)).collect())
            .collect(),
    );
    let mut starts_mu: Vec<Vec<f64>> = vec![unrestricted.mu.clone(), vec![1.0 / num as f64; num]];
    for k in 0..num {
        let mut point = vec![0.0; num];
        point[k] = 1.0;
        starts_mu.push(point);
    }
    let mut rng = stream_rng(0x5167_4e41_4c00, 0);
    for _ in 0..8 {
        let raw: Vec<f64> = (0..num)
            .map(|_| -rng.random::<f64>().max(1e-300).ln())
            .collect();
        starts_mu.push(clean_distribution(&raw));
    }

    let mut best: Option<(f64, Vec<f64>, Vec<Vec<f64>>)> = None;
    let mut consider = |value: f64, mu: &[f64], p: &[Vec<f64>]| {
        if best.as_ref().is_none_or(|(v, _, _)| value > *v) {
            best = Some((value, mu.to_vec(), p.to_vec()));
        }
    };

    let mut starts: Vec<(Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
    for p in starts_p {
        let mu = best_mu_for_payments(game, principal_utility, &p, epsilon)?;
        starts.push((mu, p));
    }
    for mu in starts_mu {
        if let Some(p) = cheapest_payments_for_mu(game, &mu, epsilon) {
            starts.push((mu, p));
        }
    }

    for (mut mu, mut p) in starts {
        let mut value = signal_independent_value(principal_utility, &mu, &p);
        for _ in 0..100 {
            let next_mu = best_mu_for_payments(game, principal_utility, &p, epsilon)?;
            let Some(next_p) = cheapest_payments_for_mu(game, &next_mu, epsilon) else {
                break;
            };
            let next_value = signal_independent_value(principal_utility, &next_mu, &next_p);
            if next_value <= value + 1e-12 {
                if next_value > value {
                    (mu, p, value) = (next_mu, next_p, next_value);
                }
                break;
            }
            (mu, p, value) = (next_mu, next_p, next_value);
        }
        consider(value, &mu, &p);
    }

    let (_, mu, p) = best.ok_or(Error::Lp(crate::lp::LpStatus::Infeasible))?;
    let payments: Vec<PaymentTable> = p
        .into_iter()
        .map(|v| PaymentTable::SignalIndependent {
            signal_independent: v,
        })
        .collect();
    let objective = cep_objective(principal_utility, &mu, &payments);
    Ok(CepSolution {
        mu,
        payments,
        epsilon,
        objective,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CepReport {
    /// Per agent, the gain of the best deviation map `φ_i`.
    pub violations: Vec<f64>,
    pub max_violation: f64,
    pub objective: f64,
    pub passed: bool,
}

/// Gain of agent `i` from deviating to `dev` whenever recommended `own`.
fn deviation_gain(
    game: &NormalFormGame,
    mu: &[f64],
    table: &PaymentTable,
    agent: usize,
    own: usize,
    dev: usize,
) -> f64 {
    let shape = game.shape();
    let m = shape.num_profiles();
    let u = game.utilities(agent);
    shape
        .opponent_bases(agent)
        .into_iter()
        .map(|b| {
            let s = shape.with_action(b, agent, own);
            let d = shape.with_action(b, agent, dev);
            mu[s] * (u[d] + table.get(s, d, m) - u[s] - table.get(s, s, m))
        })
        .sum()
}

/// Checks every single-action deviation row and recomputes the objective.
pub fn verify_cep(
    game: &NormalFormGame,
    principal_utility: &[f64],
    sol: &CepSolution,
) -> Result<CepReport> {
    let shape = game.shape();
    let m = shape.num_profiles();
    if sol.mu.len() != m
        || sol.payments.len() != shape.num_agents()
        || sol.payments.iter().any(|t| !t.len_ok(m))
    {
        return Err(Error::shape("CEP solution does not match the game"));
    }
    if principal_utility.len() != m {
        return Err(Error::shape("principal utility does not match the game"));
    }
    let violations: Vec<f64> = (0..shape.num_agents())
        .map(|i| {
            (0..shape.num_actions(i))
                .map(|own| {
                    (0..shape.num_actions(i))
                        .map(|dev| deviation_gain(game, &sol.mu, &sol.payments[i], i, own, dev))
                        .fold(0.0, f64::max)
                })
                .sum()
        })
        .collect();
    let max_violation = violations.iter().copied().fold(0.0, f64::max);
    Ok(CepReport {
        passed: max_violation <= sol.epsilon + IC_TOL,
        objective: cep_objective(principal_utility, &sol.mu, &sol.payments),
        violations,
        max_violation,
    })
}

/// A CEP over arbitrary signal sets, with each agent mapping its signal to a
/// mixed action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonCanonicalCep {
    /// `|S_i|` per agent.
    pub signal_counts: Vec<usize>,
    /// Distribution over joint signals, flat with agent 0 fastest.
    pub mu: Vec<f64>,
    /// Per agent, row-major `|S| × M` table `P_i(s, a)`.
    pub payments: Vec<Vec<f64>>,
    /// Per agent, `π_i(a_i | s_i)` as `[s_i][a_i]`.
    pub strategies: Vec<Vec<Vec<f64>>>,
    pub epsilon: f64,
}

impl NonCanonicalCep {
    fn validate(&self, shape: &GameShape) -> Result<GameShape> {
        let signals = GameShape::new(self.signal_counts.clone())?;
        let n = shape.num_agents();
        if signals.num_agents() != n
            || self.mu.len() != signals.num_profiles()
            || self.payments.len() != n
            || self.strategies.len() != n
        {
            return Err(Error::shape("non-canonical CEP does not match the game"));
        }
        for i in 0..n {
            if self.payments[i].len() != signals.num_profiles() * shape.num_profiles() {
                return Err(Error::shape(format!(
                    "agent {i} payment table has the wrong size"
                )));
            }
            if self.strategies[i].len() != signals.num_actions(i) {
                return Err(Error::shape(format!(
                    "agent {i} has the wrong number of strategies"
                )));
            }
            for row in &self.strategies[i] {
                let total: f64 = row.iter().sum();
                if row.len() != shape.num_actions(i)
                    || row.iter().any(|&x| x < 0.0)
                    || (total - 1.0).abs() > 1e-9
                {
                    return Err(Error::shape(format!(
                        "agent {i} strategy is not a distribution"
                    )));
                }
            }
        }
        Ok(signals)
    }

    /// `π(a | s) = Π_i π_i(a_i | s_i)`.
    fn play_prob(&self, shape: &GameShape, signals: &GameShape, s: usize, a: usize) -> f64 {
        (0..shape.num_agents())
            .map(|i| self.strategies[i][signals.action_in(s, i)][shape.action_in(a, i)])
            .product()
    }

    /// `E[U_0(a) - Σ_i P_i(s, a)]` with `s ~ μ` and `a ~ π(·|s)`.
    pub fn objective(&self, game: &NormalFormGame, principal_utility: &[f64]) -> Result<f64> {
        let shape = game.shape();
        let signals = self.validate(shape)?;
        let m = shape.num_profiles();
        let mut total = 0.0;
        for s in 0..signals.num_profiles() {
            for a in 0..m {
                let w = self.mu[s] * self.play_prob(shape, &signals, s, a);
                let paid: f64 = self.payments.iter().map(|p| p[s * m + a]).sum();
                total += w * (principal_utility[a] - paid);
            }
        }
        Ok(total)
    }

    /// Per agent, `Σ_{s_i} [max_b V(s_i, b) - Σ_{a_i} π_i(a_i|s_i) V(s_i, a_i)]`
    /// where `V(s_i, b)` is the agent's expected utility plus payment from
    /// playing `b` on signal `s_i`.
    pub fn ic_violations(&self, game: &NormalFormGame) -> Result<Vec<f64>> {
        let shape = game.shape();
        let signals = self.validate(shape)?;
        let m = shape.num_profiles();
        let mut out = Vec::with_capacity(shape.num_agents());
        for i in 0..shape.num_agents() {
            let u = game.utilities(i);
            let mi = shape.num_actions(i);
            let mut value = vec![vec![0.0; mi]; signals.num_actions(i)];
            for s in 0..signals.num_profiles() {
                if self.mu[s] == 0.0 {
                    continue;
                }
                let si = signals.action_in(s, i);
                for base in shape.opponent_bases(i) {
                    let others: f64 = (0..shape.num_agents())
                        .filter(|&j| j != i)
                        .map(|j| {
                            self.strategies[j][signals.action_in(s, j)][shape.action_in(base, j)]
                        })
                        .product();
                    let w = self.mu[s] * others;
                    if w == 0.0 {
                        continue;
                    }
                    for (b, v) in value[si].iter_mut().enumerate() {
                        let a = shape.with_action(base, i, b);
                        *v += w * (u[a] + self.payments[i][s * m + a]);
                    }
                }
            }
            let total: f64 = value
                .iter()
                .enumerate()
                .map(|(si, v)| {
                    let best = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let played: f64 = v
                        .iter()
                        .zip(&self.strategies[i][si])
                        .map(|(x, p)| x * p)
                        .sum();
                    (best - played).max(0.0)
                })
                .sum();
            out.push(total);
        }
        Ok(out)
    }
}

/// Pushes a CEP over arbitrary signals forward to recommendations:
/// `μ'(a) = Σ_s μ(s) π(a|s)` and `P'_i(a, a') = E[P_i(s, a') | a]`.
pub fn canonicalize_cep(
    game: &NormalFormGame,
    principal_utility: &[f64],
    cep: &NonCanonicalCep,
) -> Result<CepSolution> {
    let shape = game.shape();
    let signals = cep.validate(shape)?;
    let m = shape.num_profiles();
    let n = shape.num_agents();
    let mut mu = vec![0.0; m];
    let mut weighted = vec![vec![0.0; m * m]; n];
    for s in 0..signals.num_profiles() {
        if cep.mu[s] == 0.0 {
            continue;
        }
        for a in 0..m {
            let w = cep.mu[s] * cep.play_prob(shape, &signals, s, a);
            if w == 0.0 {
                continue;
            }
            mu[a] += w;
            for i in 0..n {
                let src = &cep.payments[i][s * m..(s + 1) * m];
                for (dst, p) in weighted[i][a * m..(a + 1) * m].iter_mut().zip(src) {
                    *dst += w * p;
                }
            }
        }
    }
    let payments: Vec<PaymentTable> = weighted
        .into_iter()
        .map(|mut table| {
            for a in 0..m {
                let row = &mut table[a * m..(a + 1) * m];
                if mu[a] > 0.0 {
                    row.iter_mut().for_each(|x| *x /= mu[a]);
                } else {
                    row.fill(0.0);
                }
            }
            PaymentTable::Dense { dense: table }
        })
        .collect();
    let objective = cep_objective(principal_utility, &mu, &payments);
    Ok(CepSolution {
        mu,
        payments,
        epsilon: cep.epsilon,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{generate_random_game, generate_signal_dependence_game};
    use approx::assert_abs_diff_eq;

    fn matching_pennies() -> NormalFormGame {
        // agent 0 wants to match, agent 1 to mismatch
        NormalFormGame::new(
            vec![2, 2],
            vec![vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn signal_dependence_game_value() {
        let (game, u0) = generate_signal_dependence_game(100.0).unwrap();
        let sol = solve_optimal_cep(&game, &u0, 0.0).unwrap();
        assert_abs_diff_eq!(sol.objective, -1.0 / 3.0, epsilon = 1e-6);
        assert!(verify_cep(&game, &u0, &sol).unwrap().passed);
        let zero = solve_optimal_cep_zero_payment(&game, &u0, 0.0).unwrap();
        assert_abs_diff_eq!(zero.objective, -25.0, epsilon = 1e-6);
        let restricted = solve_optimal_cep_signal_independent(&game, &u0, 0.0).unwrap();
        assert!(verify_cep(&game, &u0, &restricted).unwrap().passed);
        assert!(restricted.objective < sol.objective - 0.05);
    }

    #[test]
    fn strict_nash_at_principal_optimum() {
        // (0, 0) is a strict equilibrium and the principal's favorite
        let game = NormalFormGame::new(
            vec![2, 2],
            vec![vec![1.0, 0.0, 0.2, 0.1], vec![1.0, 0.3, 0.0, 0.1]],
        )
        .unwrap();
        let u0 = vec![1.0, 0.0, 0.0, 0.0];
        let sol = solve_optimal_cep(&game, &u0, 0.0).unwrap();
        assert_abs_diff_eq!(sol.mu[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.expected_payment(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_principal_utility_pays_nothing() {
        let game = generate_random_game(&[2, 3], 4).unwrap();
        let u0 = vec![0.0; 6];
        for sol in [
            solve_optimal_cep(&game, &u0, 0.0).unwrap(),
            solve_optimal_cep_signal_independent(&game, &u0, 0.0).unwrap(),
        ] {
            assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn verify_examples() {
        let game = matching_pennies();
        let uniform = CepSolution {
            mu: vec![0.25; 4],
            payments: vec![PaymentTable::Diagonal(vec![0.0; 4]); 2],
            epsilon: 0.0,
            objective: 0.0,
        };
        let report = verify_cep(&game, &[0.0; 4], &uniform).unwrap();
        assert_eq!(report.violations, vec![0.0, 0.0]);
        assert!(report.passed);

        // agent 0's action 1 is dominated by 0.3 everywhere
        let dominated =
            NormalFormGame::new(vec![2, 2], vec![vec![0.5, 0.2, 0.6, 0.3], vec![0.5; 4]]).unwrap();
        let point = CepSolution {
            mu: vec![0.0, 1.0, 0.0, 0.0],
            ..uniform
        };
        let report = verify_cep(&dominated, &[0.0; 4], &point).unwrap();
        assert_abs_diff_eq!(report.violations[0], 0.3, epsilon = 1e-15);
        assert_eq!(report.violations[1], 0.0);
        assert!(!report.passed);
    }

    #[test]
    fn objective_grows_with_epsilon() {
        for seed in 0..5 {
            let game = generate_random_game(&[2, 2], seed).unwrap();
            let u0 = generate_random_game(&[4], seed + 100)
                .unwrap()
                .utilities(0)
                .to_vec();
            let values: Vec<f64> = [0.0, 0.01, 0.1]
                .iter()
                .map(|&e| solve_optimal_cep(&game, &u0, e).unwrap().objective)
                .collect();
            assert!(values[0] <= values[1] + 1e-9 && values[1] <= values[2] + 1e-9);
            let sol = solve_optimal_cep(&game, &u0, 0.1).unwrap();
            assert!(verify_cep(&game, &u0, &sol).unwrap().passed);
        }
    }

    #[test]
    fn canonical_input_is_fixed() {
        let game = generate_random_game(&[2, 2], 9).unwrap();
        let u0 = vec![0.3, 0.1, 0.9, 0.4];
        let sol = solve_optimal_cep(&game, &u0, 0.0).unwrap();
        let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let nc = NonCanonicalCep {
            signal_counts: vec![2, 2],
            mu: sol.mu.clone(),
            payments: sol
                .payments
                .iter()
                .map(|t| (0..16).map(|k| t.get(k / 4, k % 4, 4)).collect())
                .collect(),
            strategies: vec![identity.clone(), identity],
            epsilon: 0.0,
        };
        let canon = canonicalize_cep(&game, &u0, &nc).unwrap();
        assert_eq!(canon.mu, sol.mu);
        for (a, b) in canon.payments.iter().zip(&sol.payments) {
            for s in (0..4).filter(|&s| sol.mu[s] > 0.0) {
                for a2 in 0..4 {
                    assert_abs_diff_eq!(a.get(s, a2, 4), b.get(s, a2, 4), epsilon = 1e-12);
                }
            }
        }
        assert_abs_diff_eq!(canon.objective, sol.objective, epsilon = 1e-12);
    }

    #[test]
    fn relabeling_signals_permutes_the_table() {
        let game = generate_random_game(&[2, 2], 2).unwrap();
        let u0 = vec![0.0; 4];
        let swap = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let payments0: Vec<f64> = (0..16).map(|k| k as f64 / 16.0).collect();
        let nc = NonCanonicalCep {
            signal_counts: vec![2, 2],
            mu: vec![0.1, 0.2, 0.3, 0.4],
            payments: vec![payments0.clone(), vec![0.0; 16]],
            strategies: vec![swap, identity],
            epsilon: 0.0,
        };
        let canon = canonicalize_cep(&game, &u0, &nc).unwrap();
        // signal (s0, s1) becomes action (1 - s0, s1)
        let relabel = |s: usize| (1 - s % 2) + 2 * (s / 2);
        for s in 0..4 {
            assert_abs_diff_eq!(canon.mu[relabel(s)], nc.mu[s], epsilon = 1e-15);
            for a in 0..4 {
                assert_abs_diff_eq!(
                    canon.payments[0].get(relabel(s), a, 4),
                    payments0[s * 4 + a],
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let (game, u0) = generate_signal_dependence_game(100.0).unwrap();
        let sol = solve_optimal_cep(&game, &u0, 0.0).unwrap();
        let text = sol.to_json().unwrap();
        assert!(text.contains("\"mu\""));
        assert_eq!(CepSolution::from_json(&text).unwrap(), sol);
        let si = CepSolution {
            payments: vec![
                PaymentTable::SignalIndependent {
                    signal_independent: vec![0.5; 4]
                };
                2
            ],
            ..sol
        };
        assert_eq!(CepSolution::from_json(&si.to_json().unwrap()).unwrap(), si);
    }
}
