//! Command-line front end for the mgid toolkit: validate game files, solve
//! values, verify equilibria, synthesize signaling rules, pick designer
//! goals, directify profiles, and run seeded simulations.
//!
//! Reports are deterministic: identical inputs and seeds produce
//! byte-identical `report.json` files. Run timestamps go to a separate
//! `run_meta.json` sidecar so golden comparisons stay clean.
//!
//! Exit codes: 0 success or verified; 2 the checked profile or designed
//! goal is not an equilibrium; 3 infeasible or insufficient data; 1 input
//! or runtime error.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use mgid_core::design::{
    design_oil_with, directify, select_goal, DesignParams, DesignResult, DesignStatus,
};
use mgid_core::dynamics::{compute_values, update_beliefs};
use mgid_core::equilibrium::{check_bmce, check_o_pbme, check_pbme, DEFAULT_TOL, DEFAULT_T_DEV};
use mgid_core::game::{
    load_game, load_goal, load_profile, load_rule, save_goal, save_profile, save_rule, GameSpec,
    Goal, Profile, SelectionRule, SignalingRule,
};
use mgid_core::report::{self, envelope, to_canonical_string, validate_report};
use mgid_core::sim::{default_horizon, empirical_payoffs, estimate_occupancy, rollout_batch};
use mgid_core::{Error, Result};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Parser)]
#[command(
    name = "mgid",
    version,
    about = "Finite Markov-game information design: verify equilibria, synthesize signaling rules, simulate play"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a game file against the schema and model invariants.
    Validate(ValidateArgs),
    /// Solve a profile's value functions and dump the tables.
    Values(ValuesArgs),
    /// Verify an equilibrium property of a profile or goal.
    Verify(VerifyArgs),
    /// Synthesize a signaling rule implementing a goal distribution.
    Design(DesignArgs),
    /// Search for the designer-optimal implementable goal.
    SelectGoal(SelectGoalArgs),
    /// Collapse a profile's source selection into a direct signaling rule.
    Directify(DirectifyArgs),
    /// Roll out seeded episodes and report empirical estimates.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Directory for report files; omitted, the report prints to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `json` writes the report only; `csv` also writes plot-ready tables.
    #[arg(long, default_value = "json", value_parser = ["json", "csv"])]
    format: String,
}

impl OutputArgs {
    fn csv(&self) -> bool {
        self.format == "csv"
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    game: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ValuesArgs {
    #[arg(long)]
    game: PathBuf,
    /// Signaling rule file for the controlled source.
    #[arg(long)]
    rule: PathBuf,
    /// Profile file holding the selection rule and the policy.
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    rule: Option<PathBuf>,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    goal: Option<PathBuf>,
    /// One-shot equilibrium sweep of the profile (the default).
    #[arg(long, group = "mode")]
    pbme: bool,
    /// Full designed-profile verification against a goal.
    #[arg(long = "o-pbme", group = "mode")]
    o_pbme: bool,
    /// Recommendation-obedience check of a goal alone.
    #[arg(long, group = "mode")]
    bmce: bool,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Extra periods covered by the windowed deviation sweep.
    #[arg(long, default_value_t = DEFAULT_T_DEV)]
    tdev: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    goal: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_T_DEV)]
    tdev: usize,
    /// Restarts for the max-min refinement search.
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SelectGoalArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct DirectifyArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    rule: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    rule: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    rollouts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the first N trajectories to trajectories.jsonl.
    #[arg(long, default_value_t = 0)]
    trajectories: usize,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() -> ExitCode {
    if let Ok(workers) = std::env::var("MGID_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            match &e {
                Error::Validation { location, message } if location == "cli" => {
                    eprintln!("error: {message}")
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(match e {
                Error::Precondition(_) => 2,
                Error::InsufficientData(_) => 3,
                _ => 1,
            })
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Validate(a) => cmd_validate(a),
        Command::Values(a) => cmd_values(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Design(a) => cmd_design(a),
        Command::SelectGoal(a) => cmd_select_goal(a),
        Command::Directify(a) => cmd_directify(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

// ---------------------------------------------------------------------------
// File plumbing
// ---------------------------------------------------------------------------

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| io_error(path, e))
}

fn read_game(path: &Path) -> Result<GameSpec> {
    load_game(&read_file(path)?)
}

fn read_rule(game: &GameSpec, path: &Path) -> Result<SignalingRule> {
    load_rule(game, &read_file(path)?)
}

fn read_goal(game: &GameSpec, path: &Path) -> Result<Goal> {
    load_goal(game, &read_file(path)?)
}

fn read_profile(game: &GameSpec, path: &Path) -> Result<Profile> {
    load_profile(game, &read_file(path)?)
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Assemble the envelope, check it against the shipped schema, and either
/// print it or write `report.json` plus a timestamp sidecar and any extra
/// files into the output directory.
fn emit(
    command: &str,
    config: Value,
    body: Value,
    output: &OutputArgs,
    extras: Vec<(String, String)>,
) -> Result<()> {
    let report = envelope(command, config, body);
    validate_report(&report)?;
    let text = to_canonical_string(&report);
    match &output.out {
        None => {
            print!("{text}");
        }
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            write_file(&dir.join("report.json"), &text)?;
            let stamp = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let meta = json!({ "timestamp_unix_seconds": stamp });
            write_file(&dir.join("run_meta.json"), &to_canonical_string(&meta))?;
            for (name, content) in extras {
                write_file(&dir.join(name), &content)?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_validate(a: ValidateArgs) -> Result<u8> {
    let game = read_game(&a.game)?;
    let body = json!({
        "valid": true,
        "agents": game.n_agents(),
        "states": game.n_states(),
        "actions": game.n_actions(),
        "types": game.n_types(),
        "signals": game.n_signals(),
        "sources": game.n_sources(),
        "gamma": game.gamma,
        "gamma_hat": game.gamma_hat,
    });
    emit(
        "validate",
        json!({"game": path_str(&a.game)}),
        body,
        &a.output,
        Vec::new(),
    )?;
    Ok(0)
}

fn cmd_values(a: ValuesArgs) -> Result<u8> {
    require_positive_tol(a.tol)?;
    let game = read_game(&a.game)?;
    let alpha = read_rule(&game, &a.rule)?;
    let profile = read_profile(&game, &a.profile)?;
    let mu = update_beliefs(&game, &alpha);
    let vb = compute_values(&game, &alpha, &profile.selection, &profile.policy, &mu, a.tol)?;
    let mut extras = Vec::new();
    if a.output.csv() {
        extras.push(("values.csv".to_string(), report::values_csv(&game, &vb)));
    }
    let config = json!({
        "game": path_str(&a.game),
        "rule": path_str(&a.rule),
        "profile": path_str(&a.profile),
        "tol": a.tol,
    });
    emit(
        "values",
        config,
        report::value_bundle_json(&game, &vb),
        &a.output,
        extras,
    )?;
    Ok(0)
}

fn cmd_verify(a: VerifyArgs) -> Result<u8> {
    require_positive_tol(a.tol)?;
    let game = read_game(&a.game)?;
    let mode = if a.o_pbme {
        "o-pbme"
    } else if a.bmce {
        "bmce"
    } else {
        "pbme"
    };
    let need = |opt: &Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        opt.clone().ok_or_else(|| {
            Error::validation("cli", format!("verify --{mode} requires --{flag}"))
        })
    };
    let config = json!({
        "game": path_str(&a.game),
        "rule": a.rule.as_deref().map(path_str),
        "profile": a.profile.as_deref().map(path_str),
        "goal": a.goal.as_deref().map(path_str),
        "mode": mode,
        "tol": a.tol,
        "tdev": a.tdev,
    });
    let (body, passed) = match mode {
        "bmce" => {
            let kappa = read_goal(&game, &need(&a.goal, "goal")?)?;
            let rep = check_bmce(&game, &kappa, a.tol)?;
            let ok = rep.is_equilibrium;
            (serde_json::to_value(&rep)?, ok)
        }
        "o-pbme" => {
            let alpha = read_rule(&game, &need(&a.rule, "rule")?)?;
            let profile = read_profile(&game, &need(&a.profile, "profile")?)?;
            let kappa = read_goal(&game, &need(&a.goal, "goal")?)?;
            let mu = update_beliefs(&game, &alpha);
            let rep = check_o_pbme(
                &game,
                &alpha,
                &profile.selection,
                &profile.policy,
                &mu,
                &kappa,
                a.tol,
                a.tdev,
            )?;
            let ok = rep.verified();
            (serde_json::to_value(&rep)?, ok)
        }
        _ => {
            let alpha = read_rule(&game, &need(&a.rule, "rule")?)?;
            let profile = read_profile(&game, &need(&a.profile, "profile")?)?;
            let mu = update_beliefs(&game, &alpha);
            let rep = check_pbme(
                &game,
                &alpha,
                &profile.selection,
                &profile.policy,
                &mu,
                a.tol,
            )?;
            let ok = rep.is_equilibrium;
            (serde_json::to_value(&rep)?, ok)
        }
    };
    emit("verify", config, body, &a.output, Vec::new())?;
    Ok(if passed { 0 } else { 2 })
}

fn design_extras(game: &GameSpec, result: &DesignResult, output: &OutputArgs) -> Vec<(String, String)> {
    let mut extras = Vec::new();
    if let Some(rule) = &result.rule {
        extras.push(("rule.json".to_string(), save_rule(game, rule)));
    }
    if let Some(policy) = &result.policy {
        let profile = Profile {
            selection: SelectionRule::obedient(game),
            policy: policy.clone(),
        };
        extras.push(("profile.json".to_string(), save_profile(game, &profile)));
    }
    if output.csv() {
        if let Some(rho) = &result.occupancy {
            extras.push(("occupancy.csv".to_string(), report::occupancy_csv(game, rho)));
        }
        if let Some(slacks) = &result.slacks {
            extras.push(("slacks.csv".to_string(), report::slacks_csv(slacks)));
        }
    }
    extras
}

fn status_exit(status: &DesignStatus) -> u8 {
    match status {
        DesignStatus::VerifiedOil => 0,
        DesignStatus::EpsilonOil { .. } => 2,
        DesignStatus::Infeasible { .. } => 3,
    }
}

fn cmd_design(a: DesignArgs) -> Result<u8> {
    require_positive_tol(a.tol)?;
    let game = read_game(&a.game)?;
    let kappa = read_goal(&game, &a.goal)?;
    let params = DesignParams {
        restarts: a.restarts,
        t_dev: a.tdev,
        ..DesignParams::default()
    };
    let result = design_oil_with(&game, &kappa, a.tol, &params)?;
    let extras = design_extras(&game, &result, &a.output);
    let config = json!({
        "game": path_str(&a.game),
        "goal": path_str(&a.goal),
        "tol": a.tol,
        "tdev": a.tdev,
        "restarts": a.restarts,
    });
    emit(
        "design",
        config,
        report::design_result_json(&game, &result),
        &a.output,
        extras,
    )?;
    Ok(status_exit(&result.status))
}

fn cmd_select_goal(a: SelectGoalArgs) -> Result<u8> {
    require_positive_tol(a.tol)?;
    let game = read_game(&a.game)?;
    let (kappa, payoff, result) = select_goal(&game, a.tol)?;
    let mut extras = design_extras(&game, &result, &a.output);
    extras.push(("goal.json".to_string(), save_goal(&game, &kappa)));
    let body = json!({
        "goal": report::goal_json(&game, &kappa),
        "designer_payoff": payoff,
        "design": report::design_result_json(&game, &result),
    });
    let config = json!({"game": path_str(&a.game), "tol": a.tol});
    emit("select-goal", config, body, &a.output, extras)?;
    Ok(status_exit(&result.status))
}

fn cmd_directify(a: DirectifyArgs) -> Result<u8> {
    let game = read_game(&a.game)?;
    let alpha = read_rule(&game, &a.rule)?;
    let profile = read_profile(&game, &a.profile)?;
    let direct = directify(&game, &alpha, &profile.selection, &profile.policy)?;
    let body = json!({"rule": report::rule_json(&game, &direct)});
    let extras = vec![("direct_rule.json".to_string(), save_rule(&game, &direct))];
    let config = json!({
        "game": path_str(&a.game),
        "rule": path_str(&a.rule),
        "profile": path_str(&a.profile),
    });
    emit("directify", config, body, &a.output, extras)?;
    Ok(0)
}

fn cmd_simulate(a: SimulateArgs) -> Result<u8> {
    if a.rollouts == 0 {
        return Err(Error::validation("cli", "--rollouts must be at least 1"));
    }
    let game = read_game(&a.game)?;
    let alpha = read_rule(&game, &a.rule)?;
    let profile = read_profile(&game, &a.profile)?;
    let horizon = default_horizon(&game);
    let runs = rollout_batch(
        &game,
        &alpha,
        &profile.selection,
        &profile.policy,
        a.rollouts,
        horizon,
        a.seed,
    );
    let payoffs = empirical_payoffs(&game, &runs, game.gamma)?;
    let rho = estimate_occupancy(&game, &runs, game.gamma)?;
    let mut extras = Vec::new();
    if a.output.csv() {
        extras.push(("occupancy.csv".to_string(), report::occupancy_csv(&game, &rho)));
    }
    if a.trajectories > 0 {
        let mut jsonl = String::new();
        for t in runs.iter().take(a.trajectories) {
            jsonl.push_str(&t.to_jsonl());
        }
        extras.push(("trajectories.jsonl".to_string(), jsonl));
    }
    let body = json!({
        "horizon": horizon,
        "rollouts": a.rollouts,
        "seed": a.seed,
        "payoffs": serde_json::to_value(&payoffs)?,
        "occupancy": report::occupancy_json(&game, &rho),
    });
    let config = json!({
        "game": path_str(&a.game),
        "rule": path_str(&a.rule),
        "profile": path_str(&a.profile),
        "rollouts": a.rollouts,
        "seed": a.seed,
        "trajectories": a.trajectories,
    });
    emit("simulate", config, body, &a.output, extras)?;
    Ok(0)
}

fn require_positive_tol(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(Error::validation("cli", "--tol must be positive"))
    }
}
