//! Runs configured experiments: builds games, agents and principal per
//! replication and writes metrics CSVs plus transcripts.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;

use crate::agents::{NoRegretPopulation, RationalPopulation};
use crate::config::{Algorithm, ExperimentConfig, Generator};
use crate::equilibrium::solve_optimal_cep;
use crate::error::{Error, Result};
use crate::game::{
    generate_lowerbound_game, generate_random_game, generate_signal_dependence_game,
    max_strategic_distance, GameFile, NormalFormGame,
};
use crate::parallel::map_replications;
use crate::principal::{
    default_phase_length, learn_multi_agent_noregret, learn_multi_agent_rationalizable,
    learn_single_agent_min_payment, PhaseDiagnostics,
};
use crate::protocol::{Population, RecordSink, RoundRecord, Session, Signal, TeeSink};
use crate::rng::{replication_seed, splitmix64, stream_rng, GAME_STREAM};
use crate::steering::{disobedience_bound, steer};
use crate::transcript::{transcript_path, AgentModel, TranscriptHeader, TranscriptWriter};

/// Keys the game seed away from the agent streams sharing a replication seed.
const GAME_SEED_KEY: u64 = 0x6761_6d65;

pub fn game_seed(config: &ExperimentConfig, replication_seed: u64) -> u64 {
    config
        .game
        .seed
        .unwrap_or_else(|| splitmix64(replication_seed ^ GAME_SEED_KEY))
}

/// Uniform `[0, 1)` principal utilities drawn from the game stream.
pub fn random_principal_utility(num_profiles: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, GAME_STREAM);
    (0..num_profiles).map(|_| rng.random::<f64>()).collect()
}

/// The game and principal utility for one game seed.
pub fn build_game(config: &ExperimentConfig, seed: u64) -> Result<(NormalFormGame, Vec<f64>)> {
    let g = &config.game;
    let (game, u0) = match g.generator {
        Generator::Random => (generate_random_game(&g.action_counts, seed)?, None),
        Generator::Lowerbound => {
            let eps = g
                .epsilon
                .ok_or_else(|| Error::config("game.epsilon is required"))?;
            (generate_lowerbound_game(&g.action_counts, eps, seed)?, None)
        }
        Generator::SignalDependence => {
            let (game, u0) = generate_signal_dependence_game(g.penalty.unwrap_or(100.0))?;
            (game, Some(u0))
        }
        Generator::File => {
            let path = g
                .path
                .as_ref()
                .ok_or_else(|| Error::config("game.path is required"))?;
            GameFile::read(path)?.into_game()?
        }
    };
    let u0 = u0.unwrap_or_else(|| random_principal_utility(game.num_profiles(), seed));
    Ok((game, u0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LearningRow {
    pub replication: u64,
    pub seed: u64,
    pub game_seed: u64,
    pub rounds: u64,
    pub strategic_distance: f64,
    pub total_payment: f64,
    /// `Δ + mε` for the payment-minimizing learner.
    pub payment_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoRegretRow {
    pub replication: u64,
    pub seed: u64,
    pub game_seed: u64,
    pub rounds: u64,
    pub phase_length: u64,
    pub strategic_distance: f64,
    pub total_payment: f64,
    pub max_pin_violation_fraction: f64,
    pub max_principal_regret: f64,
    pub max_regret_bound_ratio: f64,
    pub max_peak_regret: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteeringRow {
    pub replication: u64,
    pub seed: u64,
    pub game_seed: u64,
    pub rounds: u64,
    pub learning_rounds: u64,
    pub epsilon: f64,
    pub objective: f64,
    pub optimal_objective: f64,
    pub gap: f64,
    pub learning_objective: f64,
    pub steering_objective: f64,
    pub disobedient_rounds: u64,
    pub disobedience_bound: f64,
    pub dominance_violations: u64,
    pub max_peak_regret: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MetricsRow {
    Learning(LearningRow),
    NoRegret(NoRegretRow),
    Steering(SteeringRow),
}

#[derive(Clone, Debug)]
pub struct ReplicationOutput {
    pub metrics: MetricsRow,
    pub transcript: Option<PathBuf>,
    pub phases: Vec<PhaseDiagnostics>,
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub metrics_path: PathBuf,
    pub transcripts: Vec<PathBuf>,
    pub rows: Vec<MetricsRow>,
}

/// Per-round steering metrics: `t, stage, U_0, payment, cumulative F` and
/// one disobedience flag per agent.
struct RoundCsvSink {
    out: csv::Writer<fs::File>,
    utility: f64,
    payment: f64,
    rounds: u64,
}

impl RoundCsvSink {
    fn create(path: &Path, num_agents: usize) -> Result<Self> {
        let mut out = csv::Writer::from_path(path)?;
        let mut header = vec![
            "t".to_string(),
            "stage".into(),
            "principal_utility".into(),
            "total_payment".into(),
            "cumulative_f".into(),
        ];
        header.extend((0..num_agents).map(|i| format!("disobey_{i}")));
        out.write_record(&header)?;
        Ok(RoundCsvSink {
            out,
            utility: 0.0,
            payment: 0.0,
            rounds: 0,
        })
    }
}

impl RecordSink for RoundCsvSink {
    fn push(&mut self, r: &RoundRecord) -> Result<()> {
        self.utility += r.principal_utility;
        self.payment += r.total_payment;
        self.rounds += 1;
        let f = (self.utility - self.payment) / self.rounds as f64;
        let stage = serde_json::to_value(r.stage)?;
        let mut row = vec![
            r.t.to_string(),
            stage.as_str().unwrap_or_default().to_string(),
            r.principal_utility.to_string(),
            r.total_payment.to_string(),
            f.to_string(),
        ];
        row.extend(r.agents.iter().map(|a| match a.signal {
            Signal::Recommend(s) if s != a.action => "1".to_string(),
            _ => "0".to_string(),
        }));
        self.out.write_record(&row)?;
        Ok(())
    }
}

fn learning_rounds(config: &ExperimentConfig, game: &NormalFormGame) -> (u64, u64) {
    let shape = game.shape();
    let phases: u64 = (0..shape.num_agents())
        .map(|i| shape.num_opponent_profiles(i) as u64)
        .sum();
    let p = &config.principal;
    let phase_length = match (p.phase_length, p.horizon, p.epsilon) {
        (Some(l), _, _) => l,
        (None, Some(t), _) => (t / phases).max(1),
        (None, None, Some(eps)) => default_phase_length(eps),
        (None, None, None) => 1,
    };
    (phase_length, phase_length * phases)
}

/// Runs one replication, writing its transcript (and per-round CSV for
/// steering) under `out`.
pub fn run_replication(
    config: &ExperimentConfig,
    out: &Path,
    replication: u64,
) -> Result<ReplicationOutput> {
    let seed = replication_seed(config.seed, replication);
    let gseed = game_seed(config, seed);
    let (game, u0) = build_game(config, gseed)?;
    let shape = game.shape().clone();
    let p = &config.principal;
    let algorithm = p.algorithm;
    let stem = format!("rep-{replication:04}");

    let expected_rounds = match algorithm {
        Algorithm::Steer => p.horizon.unwrap_or(0),
        Algorithm::LearnNoregret => learning_rounds(config, &game).1,
        _ => 0,
    };
    let agent_horizon = expected_rounds.max(1);
    let header = TranscriptHeader {
        model: config.agents.model,
        algorithm: algorithm.name().to_string(),
        action_counts: shape.action_counts().to_vec(),
        agent_seed: seed,
        principal_seed: seed,
        horizon: agent_horizon,
        policies: (config.agents.model == AgentModel::Rationalizable)
            .then(|| config.policies(shape.num_agents())),
        replication,
    };
    let transcript_dir = out.join("transcripts");
    let mut writer = if config.output.transcripts {
        fs::create_dir_all(&transcript_dir)?;
        let path = transcript_path(&transcript_dir, &stem, expected_rounds);
        Some(TranscriptWriter::create(&path, &header)?)
    } else {
        None
    };
    let transcript = writer.as_ref().map(|w| w.path().to_path_buf());

    let output = match algorithm {
        Algorithm::LearnRationalizable | Algorithm::MinPayment => {
            let pop = RationalPopulation::new(game.clone(), config.policies(shape.num_agents()))?;
            let eps = p
                .epsilon
                .ok_or_else(|| Error::config("principal.epsilon is required"))?;
            let mut session = open_session(
                &game,
                &u0,
                pop,
                writer.as_mut().map(|w| w as &mut dyn RecordSink),
            )?;
            let outcome = if algorithm == Algorithm::MinPayment {
                learn_single_agent_min_payment(&mut session, eps)?
            } else {
                learn_multi_agent_rationalizable(&mut session, eps)?
            };
            let payment_bound = (algorithm == Algorithm::MinPayment).then(|| {
                let u = game.utilities(0);
                let best = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                u.iter().map(|x| best - x).sum::<f64>() + u.len() as f64 * eps
            });
            ReplicationOutput {
                metrics: MetricsRow::Learning(LearningRow {
                    replication,
                    seed,
                    game_seed: gseed,
                    rounds: outcome.rounds_used,
                    strategic_distance: max_strategic_distance(&game, &outcome.learned)?,
                    total_payment: outcome.total_payment,
                    payment_bound,
                }),
                transcript: None,
                phases: Vec::new(),
            }
        }
        Algorithm::LearnNoregret => {
            let (phase_length, _) = learning_rounds(config, &game);
            let pop = NoRegretPopulation::new(game.clone(), agent_horizon, seed)?;
            let mut session = open_session(
                &game,
                &u0,
                pop,
                writer.as_mut().map(|w| w as &mut dyn RecordSink),
            )?;
            let outcome = learn_multi_agent_noregret(&mut session, phase_length)?;
            let peak = session.population().peak_regret();
            ReplicationOutput {
                metrics: MetricsRow::NoRegret(NoRegretRow {
                    replication,
                    seed,
                    game_seed: gseed,
                    rounds: outcome.rounds_used,
                    phase_length,
                    strategic_distance: max_strategic_distance(&game, &outcome.learned)?,
                    total_payment: outcome.total_payment,
                    max_pin_violation_fraction: outcome
                        .phases
                        .iter()
                        .map(|d| d.pin_violations as f64 / d.rounds as f64)
                        .fold(0.0, f64::max),
                    max_principal_regret: outcome
                        .phases
                        .iter()
                        .map(|d| d.principal_regret)
                        .fold(f64::NEG_INFINITY, f64::max),
                    max_regret_bound_ratio: outcome
                        .phases
                        .iter()
                        .map(|d| d.principal_regret / d.regret_bound)
                        .fold(f64::NEG_INFINITY, f64::max),
                    max_peak_regret: peak,
                }),
                transcript: None,
                phases: outcome.phases,
            }
        }
        Algorithm::Steer => {
            let horizon = p
                .horizon
                .ok_or_else(|| Error::config("principal.horizon is required"))?;
            let steering = config.steering_config(horizon, seed);
            let pop = NoRegretPopulation::new(game.clone(), horizon, seed)?;
            let mut rounds_csv =
                RoundCsvSink::create(&out.join(format!("{stem}-rounds.csv")), shape.num_agents())?;
            let mut sinks: Vec<&mut dyn RecordSink> = vec![&mut rounds_csv];
            if let Some(w) = writer.as_mut() {
                sinks.push(w);
            }
            let mut tee = TeeSink(sinks);
            let mut session = open_session(&game, &u0, pop, Some(&mut tee))?;
            let outcome = steer(&mut session, &steering)?;
            let peak = session.population().peak_regret();
            drop(session);
            drop(tee);
            rounds_csv.out.flush()?;
            let optimal = solve_optimal_cep(&game, &u0, 0.0)?.objective;
            let f = outcome.ledger.f();
            ReplicationOutput {
                metrics: MetricsRow::Steering(SteeringRow {
                    replication,
                    seed,
                    game_seed: gseed,
                    rounds: outcome.ledger.rounds(),
                    learning_rounds: outcome.learning.rounds_used,
                    epsilon: outcome.epsilon,
                    objective: f,
                    optimal_objective: optimal,
                    gap: optimal - f,
                    learning_objective: outcome.ledger.learning.objective(),
                    steering_objective: outcome.ledger.steering.objective(),
                    disobedient_rounds: outcome.disobedient_rounds,
                    disobedience_bound: disobedience_bound(&shape, peak, steering.rho),
                    dominance_violations: outcome.dominance_violations,
                    max_peak_regret: peak,
                }),
                transcript: None,
                phases: outcome.learning.phases,
            }
        }
    };
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(ReplicationOutput {
        transcript,
        ..output
    })
}

fn open_session<'a, P: Population>(
    game: &'a NormalFormGame,
    u0: &'a [f64],
    pop: P,
    sink: Option<&'a mut dyn RecordSink>,
) -> Result<Session<'a, P>> {
    let s = Session::new(game, pop)?.with_principal_utility(u0)?;
    Ok(match sink {
        Some(sink) => s.with_sink(sink),
        None => s,
    })
}

fn write_rows<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every replication (in parallel when enabled) and writes
/// `metrics.csv`, plus `phases.csv` for the no-regret learners.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let results = map_replications(config.replications, |r| run_replication(config, out, r));
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let metrics_path = out.join("metrics.csv");
    let rows: Vec<MetricsRow> = results.iter().map(|r| r.metrics.clone()).collect();
    match rows.first() {
        Some(MetricsRow::Learning(_)) => write_rows(
            &metrics_path,
            rows.iter().filter_map(|r| match r {
                MetricsRow::Learning(x) => Some(x),
                _ => None,
            }),
        )?,
        Some(MetricsRow::NoRegret(_)) => write_rows(
            &metrics_path,
            rows.iter().filter_map(|r| match r {
                MetricsRow::NoRegret(x) => Some(x),
                _ => None,
            }),
        )?,
        Some(MetricsRow::Steering(_)) => write_rows(
            &metrics_path,
            rows.iter().filter_map(|r| match r {
                MetricsRow::Steering(x) => Some(x),
                _ => None,
            }),
        )?,
        None => {}
    }

    if results.iter().any(|r| !r.phases.is_empty()) {
        #[derive(Serialize)]
        struct PhaseRow {
            replication: u64,
            phase: u32,
            agent: usize,
            opponent_profile: String,
            rounds: u64,
            pin_violations: u64,
            principal_regret: f64,
            regret_bound: f64,
        }
        let rows = results.iter().enumerate().flat_map(|(r, out)| {
            out.phases.iter().map(move |d| PhaseRow {
                replication: r as u64,
                phase: d.phase,
                agent: d.agent,
                opponent_profile: d
                    .opponent_profile
                    .iter()
                    .map(|a| a.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                rounds: d.rounds,
                pin_violations: d.pin_violations,
                principal_regret: d.principal_regret,
                regret_bound: d.regret_bound,
            })
        });
        write_rows(&out.join("phases.csv"), rows)?;
    }

    Ok(ExperimentSummary {
        metrics_path,
        transcripts: results
            .iter()
            .filter_map(|r| r.transcript.clone())
            .collect(),
        rows,
    })
}
