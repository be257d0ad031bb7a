use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paysteer::audit::audit_transcript;
use paysteer::config::{Algorithm, ExperimentConfig, GameConfig, Generator};
use paysteer::equilibrium::{solve_optimal_cep, solve_optimal_cep_signal_independent, verify_cep};
use paysteer::experiment::{build_game, game_seed, run_experiment, MetricsRow};
use paysteer::game::GameFile;
use paysteer::rng::replication_seed;
use paysteer::transcript::Transcript;
use paysteer::Error;

/// Learn agent utilities through payments and steer no-regret agents.
#[derive(Parser, Debug)]
#[command(name = "paysteer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long, env = "PAYSTEER_CONFIG")]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long, env = "PAYSTEER_SEED")]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, env = "PAYSTEER_OUT")]
    out: Option<PathBuf>,
    /// Replication count, overriding the config.
    #[arg(long, env = "PAYSTEER_REPLICATIONS")]
    replications: Option<u64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Take the game section from this config instead of the flags below.
    #[arg(long, env = "PAYSTEER_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, default_value = "random")]
    generator: String,
    /// Comma-separated action counts, e.g. `3,3`.
    #[arg(long, value_delimiter = ',', default_value = "2,2")]
    actions: Vec<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long, env = "PAYSTEER_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory; the game is written to `game.json` inside it.
    #[arg(long, env = "PAYSTEER_OUT", default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CepArgs {
    /// Config whose game section is solved (replication 0).
    #[arg(long, env = "PAYSTEER_CONFIG", conflicts_with = "game")]
    config: Option<PathBuf>,
    /// Game file with a principal utility.
    #[arg(long)]
    game: Option<PathBuf>,
    #[arg(long, env = "PAYSTEER_SEED")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Restrict payments to depend on the played profile only.
    #[arg(long)]
    signal_independent: bool,
    #[arg(long, env = "PAYSTEER_OUT", default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    game: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long, env = "PAYSTEER_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated game to `game.json`.
    GenerateGame(GenerateArgs),
    /// Bisection learner against rationalizable agents.
    LearnRationalizable(RunArgs),
    /// Projected-gradient learner against no-regret agents.
    LearnNoregret(RunArgs),
    /// Payment-minimizing learner for one rationalizable agent.
    MinPayment(RunArgs),
    /// Optimal correlated equilibrium with payments.
    ComputeCep(CepArgs),
    /// Learn, then steer no-regret agents to the optimal equilibrium.
    Steer(RunArgs),
    /// Recompute metrics from a transcript and check it by replay.
    Audit(AuditArgs),
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Protocol { .. } => 2,
        _ => 1,
    }
}

fn run_algorithm(args: &RunArgs, algorithm: Algorithm) -> paysteer::Result<()> {
    let mut cfg = ExperimentConfig::read(&args.config)?;
    cfg.principal.algorithm = algorithm;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.validate()?;
    let summary = run_experiment(&cfg, &out)?;
    for row in &summary.rows {
        let line = match row {
            MetricsRow::Learning(r) => serde_json::to_string(r)?,
            MetricsRow::NoRegret(r) => serde_json::to_string(r)?,
            MetricsRow::Steering(r) => serde_json::to_string(r)?,
        };
        println!("{line}");
    }
    eprintln!("metrics written to {}", summary.metrics_path.display());
    Ok(())
}

fn generate(args: &GenerateArgs) -> paysteer::Result<()> {
    let game_cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?.game,
        None => {
            let generator: Generator = serde_json::from_value(serde_json::Value::String(
                args.generator.clone(),
            ))
            .map_err(|_| Error::Config(format!("unknown generator {:?}", args.generator)))?;
            GameConfig {
                generator,
                action_counts: args.actions.clone(),
                seed: Some(args.seed),
                epsilon: args.epsilon,
                penalty: args.penalty,
                path: None,
            }
        }
    };
    let seed = game_cfg.seed.unwrap_or(args.seed);
    let cfg = standalone(game_cfg);
    let (game, u0) = build_game(&cfg, seed)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("game.json");
    GameFile::from_game(&game, Some(&u0)).write(&path)?;
    println!("{}", path.display());
    Ok(())
}

/// Wraps a game section into a config usable by the game builder.
fn standalone(game: GameConfig) -> ExperimentConfig {
    let text = r#"
[game]
generator = "random"
[agents]
model = "no-regret"
[principal]
algorithm = "learn-noregret"
phase_length = 1
"#;
    let mut cfg = ExperimentConfig::from_toml(text).expect("built-in config parses");
    cfg.game = game;
    cfg
}

fn compute_cep(args: &CepArgs) -> paysteer::Result<()> {
    let (game, u0) = match (&args.game, &args.config) {
        (Some(path), _) => {
            let (game, u0) = GameFile::read(path)?.into_game()?;
            let u0 =
                u0.ok_or_else(|| Error::Config("game file has no principal_utility".into()))?;
            (game, u0)
        }
        (None, Some(path)) => {
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            build_game(&cfg, game_seed(&cfg, replication_seed(cfg.seed, 0)))?
        }
        (None, None) => return Err(Error::Config("pass --game or --config".into())),
    };
    let sol = if args.signal_independent {
        solve_optimal_cep_signal_independent(&game, &u0, args.epsilon)?
    } else {
        solve_optimal_cep(&game, &u0, args.epsilon)?
    };
    let report = verify_cep(&game, &u0, &sol)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("cep.json");
    fs::write(&path, sol.to_json()?)?;
    println!(
        "{}",
        serde_json::json!({
            "objective": sol.objective,
            "max_ic_violation": report.max_violation,
            "passed": report.passed,
            "path": path,
        })
    );
    Ok(())
}

fn audit(args: &AuditArgs) -> paysteer::Result<()> {
    let (game, u0) = GameFile::read(&args.game)?.into_game()?;
    let transcript = Transcript::read(&args.transcript)?;
    let report = audit_transcript(&transcript, &game, u0.as_deref())?;
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(p) => write_report(p, &text)?,
        None => println!("{text}"),
    }
    if let Some(issue) = report.corrupt_rows.first() {
        return Err(Error::Protocol {
            round: issue.row as u64,
            message: format!("corrupt transcript row: {}", issue.message),
        });
    }
    if let Some(&(row, agent)) = report.replay_mismatches.first() {
        return Err(Error::Protocol {
            round: row as u64,
            message: format!("agent {agent}'s recorded action differs from the replay"),
        });
    }
    Ok(())
}

fn write_report(path: &Path, text: &str) -> paysteer::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::GenerateGame(a) => generate(a),
        Command::LearnRationalizable(a) => run_algorithm(a, Algorithm::LearnRationalizable),
        Command::LearnNoregret(a) => run_algorithm(a, Algorithm::LearnNoregret),
        Command::MinPayment(a) => run_algorithm(a, Algorithm::MinPayment),
        Command::ComputeCep(a) => compute_cep(a),
        Command::Steer(a) => run_algorithm(a, Algorithm::Steer),
        Command::Audit(a) => audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
