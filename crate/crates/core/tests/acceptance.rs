//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

use std::time::{Duration, Instant};

use paysteer::agents::{AgentState, NoRegretPopulation, Policy, RationalPopulation};
use paysteer::equilibrium::{
    canonicalize_cep, solve_optimal_cep, solve_optimal_cep_signal_independent,
    solve_optimal_cep_zero_payment, verify_cep, NonCanonicalCep,
};
use paysteer::experiment::random_principal_utility;
use paysteer::game::{
    generate_random_game, generate_signal_dependence_game, max_strategic_distance,
};
use paysteer::principal::{
    learn_multi_agent_noregret, learn_multi_agent_rationalizable, learn_single_agent_min_payment,
    learn_single_agent_noregret, project_payment,
};
use paysteer::protocol::{Session, Signal};
use paysteer::rng::stream_rng;
use paysteer::steering::{disobedience_bound, steer, SteeringConfig};
use paysteer::NormalFormGame;
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn rationalizable_round_bound() -> Outcome {
    let eps = 2f64.powi(-7);
    let start = Instant::now();
    let mut worst_rounds = 0;
    let mut worst_dist = 0.0f64;
    for seed in 0..20 {
        let game = generate_random_game(&[3, 3], seed).unwrap();
        for policy in Policy::ALL {
            let pop = RationalPopulation::uniform(game.clone(), policy);
            let mut s = Session::new(&game, pop).unwrap();
            let out = learn_multi_agent_rationalizable(&mut s, eps).unwrap();
            worst_rounds = worst_rounds.max(out.rounds_used);
            worst_dist = worst_dist.max(max_strategic_distance(&game, &out.learned).unwrap());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_rounds <= 144 && worst_dist <= eps && elapsed < Duration::from_secs(1),
        format!(
            "max rounds {worst_rounds} (≤ 144), max distance {worst_dist:.2e} (≤ {eps:.2e}), {}",
            secs(elapsed)
        ),
    )
}

fn payment_bound() -> Outcome {
    let (m, eps) = (10, 0.01);
    let mut failures = 0;
    let mut worst_dist = 0.0f64;
    for seed in 0..50 {
        let game = generate_random_game(&[m], 1000 + seed).unwrap();
        let u = game.utilities(0);
        let best = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let delta: f64 = u.iter().map(|x| best - x).sum();
        let pop = RationalPopulation::uniform(game.clone(), Policy::GreedyUniform);
        let mut s = Session::new(&game, pop).unwrap();
        let out = learn_single_agent_min_payment(&mut s, eps).unwrap();
        let dist = max_strategic_distance(&game, &out.learned).unwrap();
        worst_dist = worst_dist.max(dist);
        if !(out.total_payment <= delta + m as f64 * eps) || dist > eps {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{failures}/50 games over Δ + mε or distance; max distance {worst_dist:.2e}"),
    )
}

fn single_agent_rate() -> Outcome {
    let start = Instant::now();
    let err_at = |horizon: u64| {
        median(
            (0..10)
                .map(|seed| {
                    let game = generate_random_game(&[5], 77).unwrap();
                    let pop = NoRegretPopulation::new(game.clone(), horizon, seed).unwrap();
                    let mut s = Session::new(&game, pop).unwrap();
                    let out = learn_single_agent_noregret(&mut s, horizon).unwrap();
                    max_strategic_distance(&game, &out.learned).unwrap()
                })
                .collect(),
        )
    };
    let (short, long) = (err_at(25_000), err_at(100_000));
    let ratio = short / long;
    let elapsed = start.elapsed();
    outcome(
        long < short && (1.2..=3.5).contains(&ratio) && elapsed < Duration::from_secs(30),
        format!("median error {short:.4} at 25k, {long:.4} at 100k, ratio {ratio:.2} (in [1.2, 3.5]), {}", secs(elapsed)),
    )
}

fn multi_agent_noregret() -> Outcome {
    let phase = 50_000;
    let mut errors = Vec::new();
    let mut worst_pin = 0.0f64;
    for seed in 0..10 {
        let game = generate_random_game(&[2, 2], 500 + seed).unwrap();
        let pop = NoRegretPopulation::new(game.clone(), 4 * phase, seed).unwrap();
        let mut s = Session::new(&game, pop).unwrap();
        let out = learn_multi_agent_noregret(&mut s, phase).unwrap();
        errors.push(max_strategic_distance(&game, &out.learned).unwrap());
        for d in &out.phases {
            worst_pin = worst_pin.max(d.pin_violations as f64 / d.rounds as f64);
        }
    }
    let med = median(errors);
    outcome(
        med <= 0.15 && worst_pin <= 0.01,
        format!(
            "median distance {med:.4} (≤ 0.15), worst pin-violation fraction {:.3}% (≤ 1%), implied K = ε²L {:.2}",
            100.0 * worst_pin,
            med * med * phase as f64
        ),
    )
}

/// Best correlated equilibrium of a 2×2 game by enumerating the vertices of
/// the CE polytope.
fn ce_oracle_2x2(game: &NormalFormGame, u0: &[f64]) -> f64 {
    // profile index k = a0 + 2·a1
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for i in 0..2 {
        let u = game.utilities(i);
        for own in 0..2 {
            let dev = 1 - own;
            let mut row = [0.0; 4];
            for other in 0..2 {
                let (s, d) = if i == 0 {
                    (own + 2 * other, dev + 2 * other)
                } else {
                    (other + 2 * own, other + 2 * dev)
                };
                // gain from deviating must be ≤ 0
                row[s] = u[d] - u[s];
            }
            rows.push(row);
        }
    }
    for k in 0..4 {
        let mut row = [0.0; 4];
        row[k] = -1.0;
        rows.push(row);
    }
    let mut best = f64::NEG_INFINITY;
    let n = rows.len();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let mut m = [rows[a], rows[b], rows[c], [1.0; 4]];
                let mut rhs = [0.0, 0.0, 0.0, 1.0];
                let Some(x) = solve4(&mut m, &mut rhs) else {
                    continue;
                };
                let feasible = rows
                    .iter()
                    .all(|r| r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= 1e-9);
                if feasible {
                    best = best.max(x.iter().zip(u0).map(|(p, q)| p * q).sum());
                }
            }
        }
    }
    best
}

fn solve4(m: &mut [[f64; 4]; 4], rhs: &mut [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..4 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] -= f * m[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    Some([
        rhs[0] / m[0][0],
        rhs[1] / m[1][1],
        rhs[2] / m[2][2],
        rhs[3] / m[3][3],
    ])
}

fn cep_lp() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let game = generate_random_game(&[2, 2], 2000 + seed).unwrap();
        let u0 = random_principal_utility(4, 2000 + seed);
        let sol = solve_optimal_cep_zero_payment(&game, &u0, 0.0).unwrap();
        worst = worst.max((sol.objective - ce_oracle_2x2(&game, &u0)).abs());
    }
    let (game, u0) = generate_signal_dependence_game(100.0).unwrap();
    let full = solve_optimal_cep(&game, &u0, 0.0).unwrap().objective;
    let restricted = solve_optimal_cep_signal_independent(&game, &u0, 0.0)
        .unwrap()
        .objective;
    outcome(
        worst <= 1e-6 && (full + 1.0 / 3.0).abs() <= 1e-6 && restricted < full,
        format!("max |CE gap| {worst:.1e} over 100 games; penalty game {full:.9} vs signal-independent {restricted:.6}"),
    )
}

fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k)
        .map(|_| -rng.random::<f64>().max(1e-300).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// `E[U_0(a) - Σ_i P_i(s, a)]` summed over every (signal, action) pair.
fn direct_objective(game: &NormalFormGame, u0: &[f64], nc: &NonCanonicalCep) -> f64 {
    let shape = game.shape();
    let m = shape.num_profiles();
    let n = shape.num_agents();
    let s_count: usize = nc.signal_counts.iter().product();
    let mut total = 0.0;
    for s in 0..s_count {
        let mut rest = s;
        let sig: Vec<usize> = nc
            .signal_counts
            .iter()
            .map(|&c| {
                let x = rest % c;
                rest /= c;
                x
            })
            .collect();
        for a in 0..m {
            let prof = shape.profile_of(a);
            let p: f64 = (0..n).map(|i| nc.strategies[i][sig[i]][prof[i]]).product();
            let paid: f64 = (0..n).map(|i| nc.payments[i][s * m + a]).sum();
            total += nc.mu[s] * p * (u0[a] - paid);
        }
    }
    total
}

fn revelation_principle() -> Outcome {
    let mut rng = stream_rng(6, 0);
    let mut worst_f = 0.0f64;
    let mut increases = 0;
    for k in 0..50u64 {
        let counts = if k % 2 == 0 { vec![2, 2] } else { vec![3, 2] };
        let game = generate_random_game(&counts, 3000 + k).unwrap();
        let m = game.num_profiles();
        let u0 = random_principal_utility(m, 3000 + k);
        let signal_counts: Vec<usize> = (0..2).map(|_| rng.random_range(2..=3)).collect();
        let s_count: usize = signal_counts.iter().product();
        let nc = NonCanonicalCep {
            mu: random_simplex(&mut rng, s_count),
            payments: (0..2)
                .map(|_| (0..s_count * m).map(|_| rng.random::<f64>()).collect())
                .collect(),
            strategies: (0..2)
                .map(|i| {
                    (0..signal_counts[i])
                        .map(|_| random_simplex(&mut rng, counts[i]))
                        .collect()
                })
                .collect(),
            signal_counts,
            epsilon: 0.0,
        };
        let canon = canonicalize_cep(&game, &u0, &nc).unwrap();
        worst_f = worst_f.max((canon.objective - direct_objective(&game, &u0, &nc)).abs());
        let before = nc.ic_violations(&game).unwrap();
        let after = verify_cep(&game, &u0, &canon).unwrap().violations;
        if before.iter().zip(&after).any(|(b, a)| *a > b + 1e-9) {
            increases += 1;
        }
    }
    outcome(
        worst_f <= 1e-9 && increases == 0,
        format!("max |ΔF| {worst_f:.1e} (≤ 1e-9), {increases}/50 IC-violation increases"),
    )
}

fn steering_trend() -> Outcome {
    let start = Instant::now();
    let run = |horizon: u64| {
        let mut gaps = Vec::new();
        let mut over = 0;
        // one fixed game, ten agent and principal seeds
        let game = generate_random_game(&[2, 2], 0).unwrap();
        let u0 = random_principal_utility(4, 0);
        let optimal = solve_optimal_cep(&game, &u0, 0.0).unwrap().objective;
        for seed in 0..10 {
            let pop = NoRegretPopulation::new(game.clone(), horizon, seed).unwrap();
            let mut s = Session::new(&game, pop)
                .unwrap()
                .with_principal_utility(&u0)
                .unwrap();
            let cfg = SteeringConfig::with_defaults(horizon, seed);
            let out = steer(&mut s, &cfg).unwrap();
            gaps.push(optimal - out.ledger.f());
            let bound = disobedience_bound(game.shape(), s.population().peak_regret(), cfg.rho);
            if out.disobedient_rounds as f64 > bound {
                over += 1;
            }
        }
        (median(gaps), over)
    };
    let (small, over_small) = run(10_000);
    let (large, over_large) = run(100_000);
    let elapsed = start.elapsed();
    outcome(
        large < small && over_small + over_large == 0 && elapsed < Duration::from_secs(300),
        format!(
            "median gap {small:.4} at 1e4, {large:.4} at 1e5; {} runs over the disobedience bound, {}",
            over_small + over_large,
            secs(elapsed)
        ),
    )
}

fn agent_conformance() -> Outcome {
    let (m, horizon) = (4usize, 10_000u64);
    let envelope =
        (horizon as f64 * (m as f64).ln()).sqrt() + (2.0 * horizon as f64 * 20f64.ln()).sqrt();
    let signals = [Signal::Bottom, Signal::Pin(0), Signal::Recommend(1)];
    let mut within = 0;
    let mut mismatched = 0;
    for seed in 0..100 {
        let mut agent = AgentState::new(0, m, horizon, seed).unwrap();
        let mut env = stream_rng(seed, 1 << 40);
        // independent regret bookkeeping per signal
        let mut cum = vec![vec![0.0f64; m]; 3];
        let mut got = vec![0.0f64; 3];
        let mut peak = 0.0f64;
        for t in 0..horizon {
            let k = (t % 3) as usize;
            let a = agent.act(signals[k]).unwrap();
            let u: Vec<f64> = (0..m).map(|_| env.random::<f64>()).collect();
            agent.update(signals[k], a, &u).unwrap();
            for (c, x) in cum[k].iter_mut().zip(&u) {
                *c += x;
            }
            got[k] += u[a];
            let best = cum[k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            peak = peak.max(best - got[k]);
        }
        if (agent.peak_regret() - peak).abs() > 1e-9 {
            mismatched += 1;
        }
        if peak <= envelope {
            within += 1;
        }
    }
    outcome(
        within >= 95 && mismatched == 0,
        format!("{within}/100 runs within {envelope:.1} (need 95); {mismatched} ledger mismatches"),
    )
}

/// Exact projection: `p_i = clip(v_i - λ, 0, 2)` with `Σp = m`, solving for
/// `λ` on the linear piece between sorted breakpoints.
fn projection_oracle(v: &[f64]) -> Vec<f64> {
    let m = v.len() as f64;
    let sum_at = |lam: f64| v.iter().map(|x| (x - lam).clamp(0.0, 2.0)).sum::<f64>();
    let mut bps: Vec<f64> = v.iter().flat_map(|&x| [x, x - 2.0]).collect();
    bps.sort_by(f64::total_cmp);
    for w in bps.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (s_lo, s_hi) = (sum_at(lo), sum_at(hi));
        if s_lo >= m && m >= s_hi {
            let lam = if s_lo == s_hi {
                lo
            } else {
                lo + (s_lo - m) * (hi - lo) / (s_lo - s_hi)
            };
            return v.iter().map(|x| (x - lam).clamp(0.0, 2.0)).collect();
        }
    }
    unreachable!("sum is continuous and spans [0, 2m]")
}

fn kkt_residual(v: &[f64], p: &[f64]) -> f64 {
    let m = v.len() as f64;
    let tol = 1e-12;
    let free: Vec<usize> = (0..p.len())
        .filter(|&i| p[i] > tol && p[i] < 2.0 - tol)
        .collect();
    let mut res = (p.iter().sum::<f64>() - m).abs();
    for &x in p {
        res = res.max(-x).max(x - 2.0);
    }
    let at_zero = || (0..p.len()).filter(|&i| p[i] <= tol).map(|i| v[i] - p[i]);
    let at_two = || {
        (0..p.len())
            .filter(|&i| p[i] >= 2.0 - tol)
            .map(|i| v[i] - p[i])
    };
    // with no free coordinate λ may be anything in [max at_zero, min at_two]
    let lam = if free.is_empty() {
        let lo = at_zero().fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() {
            lo
        } else {
            at_two().fold(f64::INFINITY, f64::min)
        }
    } else {
        free.iter().map(|&i| v[i] - p[i]).sum::<f64>() / free.len() as f64
    };
    for &i in &free {
        res = res.max((v[i] - p[i] - lam).abs());
    }
    // lower-bound multipliers need v_i - p_i ≤ λ, upper ones v_i - p_i ≥ λ
    res = at_zero().map(|g| g - lam).fold(res, f64::max);
    res = at_two().map(|g| lam - g).fold(res, f64::max);
    res
}

fn projection() -> Outcome {
    let mut rng = stream_rng(9, 0);
    let mut worst_diff = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for _ in 0..1000 {
        let m = rng.random_range(2..=10);
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..5.0)).collect();
        let p = project_payment(&v).unwrap().p;
        let q = projection_oracle(&v);
        worst_diff = p
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b).abs())
            .fold(worst_diff, f64::max);
        worst_kkt = worst_kkt.max(kkt_residual(&v, &p));
    }
    outcome(
        worst_diff <= 1e-6 && worst_kkt <= 1e-8,
        format!(
            "max |p - oracle| {worst_diff:.1e} (≤ 1e-6), max KKT residual {worst_kkt:.1e} (≤ 1e-8)"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("rationalizable round bound", rationalizable_round_bound),
        ("minimum-payment bound", payment_bound),
        ("single-agent no-regret rate", single_agent_rate),
        ("multi-agent no-regret learning", multi_agent_noregret),
        ("CEP program correctness", cep_lp),
        ("canonicalization", revelation_principle),
        ("steering trend", steering_trend),
        ("agent conformance", agent_conformance),
        ("projection oracle", projection),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {name}: {}", k + 1, o.detail);
        failed += !o.passed as usize;
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
