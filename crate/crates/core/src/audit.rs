//! Recomputes every online metric from a transcript and the game alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentState, RegretLedger};
use crate::error::{Error, Result};
use crate::game::NormalFormGame;
use crate::principal::min_linear_over_polytope;
use crate::protocol::{RoundRecord, Signal, Stage};
use crate::steering::{evaluate_objective, ObjectiveLedger};
use crate::transcript::{AgentModel, Transcript};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalRegret {
    pub agent: usize,
    pub signal: Signal,
    pub rounds: u64,
    pub regret: f64,
    /// Anytime maximum over prefixes.
    pub peak: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseAudit {
    pub phase: u32,
    pub agent: Option<usize>,
    pub rounds: u64,
    pub pin_violations: u64,
    pub principal_regret: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowIssue {
    pub row: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rounds: u64,
    pub objective: ObjectiveLedger,
    pub regrets: Vec<SignalRegret>,
    pub max_peak_regret: f64,
    /// `max peak / √T`, the measured no-regret constant.
    pub envelope_c: f64,
    pub phases: Vec<PhaseAudit>,
    /// Steering rounds where each agent ignored its recommendation.
    pub disobedience_per_agent: Vec<u64>,
    pub disobedient_rounds: u64,
    pub replay_checked: bool,
    /// `(row, agent)` pairs whose recorded action differs from the replay.
    pub replay_mismatches: Vec<(usize, usize)>,
    pub corrupt_rows: Vec<RowIssue>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.replay_mismatches.is_empty() && self.corrupt_rows.is_empty()
    }
}

fn check_row(
    game: &NormalFormGame,
    principal_utility: Option<&[f64]>,
    r: &RoundRecord,
) -> Option<String> {
    let shape = game.shape();
    if r.agents.len() != shape.num_agents() {
        return Some(format!(
            "{} agent entries for {} agents",
            r.agents.len(),
            shape.num_agents()
        ));
    }
    for (i, a) in r.agents.iter().enumerate() {
        let m = shape.num_actions(i);
        if a.action >= m || a.payments.len() != m {
            return Some(format!("agent {i} action or payment row out of shape"));
        }
        if a.payments.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Some(format!("agent {i} has a negative or non-finite payment"));
        }
    }
    let index = shape.index_of(&r.actions());
    for (i, a) in r.agents.iter().enumerate() {
        if a.utility != game.utility(i, index) + a.paid() {
            return Some(format!("agent {i} utility does not match the game"));
        }
    }
    let total = r.agents.iter().fold(0.0, |acc, a| acc + a.paid());
    if total != r.total_payment {
        return Some("total payment does not match the agent rows".into());
    }
    if let Some(u0) = principal_utility {
        if u0[index] != r.principal_utility {
            return Some("principal utility does not match the game".into());
        }
    }
    None
}

/// Audits `transcript` against `game`, optionally checking the recorded
/// principal utilities too.
pub fn audit_transcript(
    transcript: &Transcript,
    game: &NormalFormGame,
    principal_utility: Option<&[f64]>,
) -> Result<AuditReport> {
    let shape = game.shape();
    if transcript.header.action_counts != shape.action_counts() {
        return Err(Error::shape(
            "transcript header does not match the game's shape",
        ));
    }
    let n = shape.num_agents();
    let mut report = AuditReport {
        disobedience_per_agent: vec![0; n],
        ..Default::default()
    };

    let mut valid: Vec<&RoundRecord> = Vec::with_capacity(transcript.records.len());
    for (row, r) in transcript.records.iter().enumerate() {
        match check_row(game, principal_utility, r) {
            Some(message) => report.corrupt_rows.push(RowIssue { row, message }),
            None => valid.push(r),
        }
    }

    let mut ledgers: BTreeMap<(usize, Signal), RegretLedger> = BTreeMap::new();
    let mut phases: BTreeMap<u32, (PhaseAudit, Vec<f64>, f64)> = BTreeMap::new();
    for r in &valid {
        let actions = r.actions();
        let index = shape.index_of(&actions);
        for (i, a) in r.agents.iter().enumerate() {
            let row = game.utility_row(i, index, &a.payments);
            ledgers
                .entry((i, a.signal))
                .or_insert_with(|| RegretLedger::new(shape.num_actions(i)))
                .record(a.action, &row);
        }
        if let Some(p) = r.phase {
            let (audit, counts, loss) = phases.entry(p).or_insert_with(|| {
                (
                    PhaseAudit {
                        phase: p,
                        ..Default::default()
                    },
                    Vec::new(),
                    0.0,
                )
            });
            audit.rounds += 1;
            let mut violated = false;
            for (i, a) in r.agents.iter().enumerate() {
                match a.signal {
                    Signal::Bottom => {
                        audit.agent = Some(i);
                        if counts.is_empty() {
                            counts.resize(a.payments.len(), 0.0);
                        }
                        *loss += a.payments[a.action];
                        counts[a.action] += 1.0;
                    }
                    Signal::Pin(target) => violated |= a.action != target,
                    Signal::Recommend(_) => {}
                }
            }
            audit.pin_violations += violated as u64;
        }
        if r.stage == Stage::Steering {
            let mut any = false;
            for (i, a) in r.agents.iter().enumerate() {
                if let Signal::Recommend(s) = a.signal {
                    if a.action != s {
                        report.disobedience_per_agent[i] += 1;
                        any = true;
                    }
                }
            }
            report.disobedient_rounds += any as u64;
        }
    }

    report.rounds = transcript.records.len() as u64;
    let owned: Vec<RoundRecord> = valid.iter().map(|r| (*r).clone()).collect();
    report.objective = evaluate_objective(&owned)?;
    report.regrets = ledgers
        .into_iter()
        .map(|((agent, signal), l)| SignalRegret {
            agent,
            signal,
            rounds: l.rounds,
            regret: l.regret(),
            peak: l.peak,
        })
        .collect();
    report.max_peak_regret = report.regrets.iter().map(|r| r.peak).fold(0.0, f64::max);
    if report.rounds > 0 {
        report.envelope_c = report.max_peak_regret / (report.rounds as f64).sqrt();
    }
    report.phases = phases
        .into_values()
        .map(|(mut audit, counts, loss)| {
            if !counts.is_empty() {
                audit.principal_regret = loss - min_linear_over_polytope(&counts);
            }
            audit
        })
        .collect();

    if transcript.header.model == AgentModel::NoRegret {
        report.replay_checked = true;
        report.replay_mismatches = replay_mwu(transcript, game)?;
    }
    Ok(report)
}

/// Re-runs every agent's learners from the header seed, feeding the recorded
/// signals and utilities, and lists rows where the sampled action differs.
fn replay_mwu(transcript: &Transcript, game: &NormalFormGame) -> Result<Vec<(usize, usize)>> {
    let shape = game.shape();
    let header = &transcript.header;
    let mut agents = (0..shape.num_agents())
        .map(|i| AgentState::new(i, shape.num_actions(i), header.horizon, header.agent_seed))
        .collect::<Result<Vec<_>>>()?;
    let mut mismatches = Vec::new();
    for (row, r) in transcript.records.iter().enumerate() {
        if r.agents.len() != agents.len() {
            continue;
        }
        let actions = r.actions();
        if shape.check_profile(&actions).is_err() {
            continue;
        }
        let index = shape.index_of(&actions);
        for (i, (agent, a)) in agents.iter_mut().zip(&r.agents).enumerate() {
            if agent.act(a.signal)? != a.action {
                mismatches.push((row, i));
            }
        }
        for (i, (agent, a)) in agents.iter_mut().zip(&r.agents).enumerate() {
            if a.payments.len() == shape.num_actions(i) {
                agent.update(a.signal, a.action, &game.utility_row(i, index, &a.payments))?;
            }
        }
    }
    Ok(mismatches)
}
