//! JSON document formats for games, signaling rules, goals, and behavior
//! profiles. Tables are keyed by `|`-joined labels; omitted probability
//! entries default to zero and are caught by row-sum validation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameSpec, Goal, Policy, Profile, SelectionRule, SignalingRule};
use crate::space::ProductSpace;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameDoc {
    agents: Vec<String>,
    states: Vec<String>,
    actions: Vec<String>,
    types: Vec<String>,
    signals: Vec<String>,
    sources: SourcesDoc,
    transition: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    state_init: Vec<f64>,
    type_prior: Vec<f64>,
    #[serde(default)]
    nonprincipal_dist: BTreeMap<String, f64>,
    rewards: BTreeMap<String, BTreeMap<String, f64>>,
    principal_reward: BTreeMap<String, f64>,
    gamma: f64,
    gamma_hat: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourcesDoc {
    names: Vec<String>,
    principal: usize,
}

fn index_of(list: &[String], label: &str, what: &str, loc: &str) -> Result<usize> {
    list.iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::validation(loc, format!("unknown {what} {label:?}")))
}

/// Parse a `|`-joined key into label indices with a fixed arity.
fn split_key<'a>(key: &'a str, arity: usize, loc: &str) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = key.split('|').collect();
    if parts.len() != arity {
        return Err(Error::validation(
            loc,
            format!("key {key:?} has {} parts, expected {arity}", parts.len()),
        ));
    }
    Ok(parts)
}

fn rank_joint(parts: &[&str], list: &[String], what: &str, loc: &str) -> Result<usize> {
    let space = ProductSpace::uniform(list.len(), parts.len());
    let mut digits = Vec::with_capacity(parts.len());
    for p in parts {
        digits.push(index_of(list, p, what, loc)?);
    }
    Ok(space.rank(&digits))
}

/// Parse a game document. The text must be a single JSON object; unknown
/// top-level keys and unknown labels inside table keys are rejected, and the
/// resulting game is fully validated.
pub fn load_game(text: &str) -> Result<GameSpec> {
    let doc: GameDoc = serde_json::from_str(text)?;
    let n = doc.agents.len();
    let mut game = GameSpec {
        agents: doc.agents,
        states: doc.states,
        actions: doc.actions,
        types: doc.types,
        signals: doc.signals,
        sources: doc.sources.names,
        principal: doc.sources.principal,
        transition: Vec::new(),
        state_init: doc.state_init,
        type_prior: doc.type_prior,
        nonprincipal_dist: Vec::new(),
        rewards: Vec::new(),
        principal_reward: Vec::new(),
        gamma: doc.gamma,
        gamma_hat: doc.gamma_hat,
    };
    if game.agents.is_empty() {
        return Err(Error::validation("agents", "at least one agent required"));
    }
    if game.sources.is_empty() {
        return Err(Error::validation("sources", "must be non-empty"));
    }

    let g_n = game.n_states();
    let av_n = game.joint_actions().count();
    game.transition = vec![0.0; g_n * av_n * g_n];
    for (state_key, row) in &doc.transition {
        let g = index_of(&game.states, state_key, "state", "transition")?;
        for (act_key, probs) in row {
            let loc = format!("transition[{state_key}][{act_key}]");
            let parts = split_key(act_key, n, &loc)?;
            let av = rank_joint(&parts, &game.actions, "action", &loc)?;
            if probs.len() != g_n {
                return Err(Error::validation(
                    &loc,
                    format!("{} probabilities, expected {g_n}", probs.len()),
                ));
            }
            let base = game.trans_idx(g, av, 0);
            game.transition[base..base + g_n].copy_from_slice(probs);
        }
    }

    let ob_n = game.others_batches().count();
    if doc.nonprincipal_dist.is_empty() && game.n_sources() == 1 {
        game.nonprincipal_dist = vec![1.0];
    } else {
        game.nonprincipal_dist = vec![0.0; ob_n];
        let arity = (game.n_sources() - 1) * n;
        for (key, p) in &doc.nonprincipal_dist {
            let loc = format!("nonprincipal_dist[{key}]");
            let rank = if arity == 0 && key.is_empty() {
                0
            } else {
                let parts = split_key(key, arity, &loc)?;
                rank_joint(&parts, &game.signals, "signal", &loc)?
            };
            game.nonprincipal_dist[rank] = *p;
        }
    }

    game.rewards =
        vec![0.0; n * av_n * g_n * game.n_signals() * game.n_types()];
    for (agent_key, table) in &doc.rewards {
        let i = index_of(&game.agents, agent_key, "agent", "rewards")?;
        for (key, r) in table {
            let loc = format!("rewards[{agent_key}][{key}]");
            let parts = split_key(key, n + 3, &loc)?;
            let av = rank_joint(&parts[..n], &game.actions, "action", &loc)?;
            let g = index_of(&game.states, parts[n], "state", &loc)?;
            let w = index_of(&game.signals, parts[n + 1], "signal", &loc)?;
            let th = index_of(&game.types, parts[n + 2], "type", &loc)?;
            let idx = game.reward_idx(i, av, g, w, th);
            game.rewards[idx] = *r;
        }
    }

    game.principal_reward = vec![0.0; av_n * g_n * game.joint_types().count()];
    for (key, r) in &doc.principal_reward {
        let loc = format!("principal_reward[{key}]");
        let parts = split_key(key, 2 * n + 1, &loc)?;
        let av = rank_joint(&parts[..n], &game.actions, "action", &loc)?;
        let g = index_of(&game.states, parts[n], "state", &loc)?;
        let tv = rank_joint(&parts[n + 1..], &game.types, "type", &loc)?;
        let idx = game.principal_reward_idx(av, g, tv);
        game.principal_reward[idx] = *r;
    }

    game.validate()?;
    Ok(game)
}

/// Serialize a game as a pretty-printed JSON document; zero reward entries
/// are omitted. `load_game` inverts this exactly.
pub fn save_game(game: &GameSpec) -> String {
    let n = game.n_agents();
    let g_n = game.n_states();
    let av_n = game.joint_actions().count();

    let mut transition = BTreeMap::new();
    for g in 0..g_n {
        let mut row = BTreeMap::new();
        for av in 0..av_n {
            let base = game.trans_idx(g, av, 0);
            row.insert(game.action_key(av), game.transition[base..base + g_n].to_vec());
        }
        transition.insert(game.states[g].clone(), row);
    }

    let mut nonprincipal_dist = BTreeMap::new();
    if game.n_sources() > 1 {
        let ob = game.others_batches();
        for rank in 0..ob.count() {
            let p = game.nonprincipal_dist[rank];
            if p != 0.0 {
                let key = ob
                    .digits(rank)
                    .iter()
                    .map(|&d| game.signals[d].as_str())
                    .collect::<Vec<_>>()
                    .join("|");
                nonprincipal_dist.insert(key, p);
            }
        }
    }

    let mut rewards = BTreeMap::new();
    for i in 0..n {
        let mut table = BTreeMap::new();
        for av in 0..av_n {
            for g in 0..g_n {
                for w in 0..game.n_signals() {
                    for th in 0..game.n_types() {
                        let r = game.reward(i, av, g, w, th);
                        if r != 0.0 {
                            let key = format!(
                                "{}|{}|{}|{}",
                                game.action_key(av),
                                game.states[g],
                                game.signals[w],
                                game.types[th]
                            );
                            table.insert(key, r);
                        }
                    }
                }
            }
        }
        rewards.insert(game.agents[i].clone(), table);
    }

    let mut principal_reward = BTreeMap::new();
    for av in 0..av_n {
        for g in 0..g_n {
            for tv in 0..game.joint_types().count() {
                let r = game.principal_reward_at(av, g, tv);
                if r != 0.0 {
                    let key =
                        format!("{}|{}|{}", game.action_key(av), game.states[g], game.type_key(tv));
                    principal_reward.insert(key, r);
                }
            }
        }
    }

    let doc = GameDoc {
        agents: game.agents.clone(),
        states: game.states.clone(),
        actions: game.actions.clone(),
        types: game.types.clone(),
        signals: game.signals.clone(),
        sources: SourcesDoc {
            names: game.sources.clone(),
            principal: game.principal,
        },
        transition,
        state_init: game.state_init.clone(),
        type_prior: game.type_prior.clone(),
        nonprincipal_dist,
        rewards,
        principal_reward,
        gamma: game.gamma,
        gamma_hat: game.gamma_hat,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("game serialization");
    text.push('\n');
    text
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    /// Keys `ω_1|…|ω_n|g|θ_1|…|θ_n`.
    rule: BTreeMap<String, f64>,
}

pub fn load_rule(game: &GameSpec, text: &str) -> Result<SignalingRule> {
    let doc: RuleDoc = serde_json::from_str(text)?;
    let n = game.n_agents();
    let wv_n = game.principal_batches().count();
    let mut rule = SignalingRule {
        probs: vec![vec![0.0; game.n_states() * wv_n]; game.joint_types().count()],
    };
    for (key, p) in &doc.rule {
        let loc = format!("rule[{key}]");
        let parts = split_key(key, 2 * n + 1, &loc)?;
        let wv = rank_joint(&parts[..n], &game.signals, "signal", &loc)?;
        let g = index_of(&game.states, parts[n], "state", &loc)?;
        let tv = rank_joint(&parts[n + 1..], &game.types, "type", &loc)?;
        rule.probs[tv][g * wv_n + wv] = *p;
    }
    rule.validate(game)?;
    Ok(rule)
}

pub fn save_rule(game: &GameSpec, rule: &SignalingRule) -> String {
    let mut map = BTreeMap::new();
    for tv in 0..game.joint_types().count() {
        for g in 0..game.n_states() {
            for wv in 0..game.principal_batches().count() {
                let p = rule.prob(game, tv, g, wv);
                if p != 0.0 {
                    let key = format!(
                        "{}|{}|{}",
                        game.signal_key(wv),
                        game.states[g],
                        game.type_key(tv)
                    );
                    map.insert(key, p);
                }
            }
        }
    }
    let mut text =
        serde_json::to_string_pretty(&RuleDoc { rule: map }).expect("rule serialization");
    text.push('\n');
    text
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalDoc {
    /// Keys `a_1|…|a_n|g|θ_1|…|θ_n`.
    goal: BTreeMap<String, f64>,
}

pub fn load_goal(game: &GameSpec, text: &str) -> Result<Goal> {
    let doc: GoalDoc = serde_json::from_str(text)?;
    let n = game.n_agents();
    let av_n = game.joint_actions().count();
    let mut goal = Goal {
        probs: vec![vec![0.0; game.n_states() * av_n]; game.joint_types().count()],
    };
    for (key, p) in &doc.goal {
        let loc = format!("goal[{key}]");
        let parts = split_key(key, 2 * n + 1, &loc)?;
        let av = rank_joint(&parts[..n], &game.actions, "action", &loc)?;
        let g = index_of(&game.states, parts[n], "state", &loc)?;
        let tv = rank_joint(&parts[n + 1..], &game.types, "type", &loc)?;
        goal.probs[tv][g * av_n + av] = *p;
    }
    goal.validate(game)?;
    Ok(goal)
}

pub fn save_goal(game: &GameSpec, goal: &Goal) -> String {
    let mut map = BTreeMap::new();
    for tv in 0..game.joint_types().count() {
        for g in 0..game.n_states() {
            for av in 0..game.joint_actions().count() {
                let p = goal.prob(game, tv, g, av);
                if p != 0.0 {
                    let key = format!(
                        "{}|{}|{}",
                        game.action_key(av),
                        game.states[g],
                        game.type_key(tv)
                    );
                    map.insert(key, p);
                }
            }
        }
    }
    let mut text =
        serde_json::to_string_pretty(&GoalDoc { goal: map }).expect("goal serialization");
    text.push('\n');
    text
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileDoc {
    policy: PolicyDoc,
    selection: SelectionDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum PolicyDoc {
    /// Per-agent tables keyed `a|g|ω|θ`.
    Independent { tables: Vec<BTreeMap<String, f64>> },
    /// One table keyed `a_1|…|a_n|g|ω_1|…|ω_n|θ_1|…|θ_n`.
    Correlated { table: BTreeMap<String, f64> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum SelectionDoc {
    /// The literal string `"obedient"`.
    Mode(String),
    /// Per-agent tables keyed `g|ω_1|…|ω_m|θ` mapping to a source name.
    Tables(Vec<BTreeMap<String, String>>),
}

pub fn load_profile(game: &GameSpec, text: &str) -> Result<Profile> {
    let doc: ProfileDoc = serde_json::from_str(text)?;
    let n = game.n_agents();

    let policy = match doc.policy {
        PolicyDoc::Independent { tables } => {
            if tables.len() != n {
                return Err(Error::validation(
                    "policy",
                    format!("{} agent tables, expected {n}", tables.len()),
                ));
            }
            let cells = game.n_states() * game.n_signals() * game.n_types() * game.n_actions();
            let mut out = vec![vec![0.0; cells]; n];
            for (i, table) in tables.iter().enumerate() {
                for (key, p) in table {
                    let loc = format!("policy[{}][{key}]", game.agents[i]);
                    let parts = split_key(key, 4, &loc)?;
                    let a = index_of(&game.actions, parts[0], "action", &loc)?;
                    let g = index_of(&game.states, parts[1], "state", &loc)?;
                    let w = index_of(&game.signals, parts[2], "signal", &loc)?;
                    let th = index_of(&game.types, parts[3], "type", &loc)?;
                    out[i][((g * game.n_signals() + w) * game.n_types() + th)
                        * game.n_actions()
                        + a] = *p;
                }
            }
            Policy::Independent(out)
        }
        PolicyDoc::Correlated { table } => {
            let wv_n = game.principal_batches().count();
            let av_n = game.joint_actions().count();
            let mut out = vec![vec![0.0; game.n_states() * wv_n * av_n]; game.joint_types().count()];
            for (key, p) in &table {
                let loc = format!("policy[{key}]");
                let parts = split_key(key, 3 * n + 1, &loc)?;
                let av = rank_joint(&parts[..n], &game.actions, "action", &loc)?;
                let g = index_of(&game.states, parts[n], "state", &loc)?;
                let wv = rank_joint(&parts[n + 1..2 * n + 1], &game.signals, "signal", &loc)?;
                let tv = rank_joint(&parts[2 * n + 1..], &game.types, "type", &loc)?;
                out[tv][(g * wv_n + wv) * av_n + av] = *p;
            }
            Policy::Correlated(out)
        }
    };
    policy.validate(game)?;

    let selection = match doc.selection {
        SelectionDoc::Mode(mode) => {
            if mode != "obedient" {
                return Err(Error::validation(
                    "selection",
                    format!("unknown mode {mode:?}, expected \"obedient\" or tables"),
                ));
            }
            SelectionRule::obedient(game)
        }
        SelectionDoc::Tables(tables) => {
            if tables.len() != n {
                return Err(Error::validation(
                    "selection",
                    format!("{} agent tables, expected {n}", tables.len()),
                ));
            }
            let batches = game.agent_batches();
            let cells = game.n_states() * batches.count() * game.n_types();
            let mut out = vec![vec![usize::MAX; cells]; n];
            for (i, table) in tables.iter().enumerate() {
                for (key, source) in table {
                    let loc = format!("selection[{}][{key}]", game.agents[i]);
                    let parts = split_key(key, game.n_sources() + 2, &loc)?;
                    let g = index_of(&game.states, parts[0], "state", &loc)?;
                    let batch = rank_joint(
                        &parts[1..=game.n_sources()],
                        &game.signals,
                        "signal",
                        &loc,
                    )?;
                    let th =
                        index_of(&game.types, parts[game.n_sources() + 1], "type", &loc)?;
                    let pos = index_of(&game.sources, source, "source", &loc)?;
                    out[i][(g * batches.count() + batch) * game.n_types() + th] = pos;
                }
            }
            for (i, t) in out.iter().enumerate() {
                if let Some(cell) = t.iter().position(|&p| p == usize::MAX) {
                    return Err(Error::validation(
                        "selection",
                        format!("agent {} is missing cell {cell}", game.agents[i]),
                    ));
                }
            }
            SelectionRule { tables: out }
        }
    };
    selection.validate(game)?;

    Ok(Profile { selection, policy })
}

pub fn save_profile(game: &GameSpec, profile: &Profile) -> String {
    let n = game.n_agents();
    let policy = match &profile.policy {
        Policy::Independent(tables) => {
            let mut out = Vec::new();
            for t in tables {
                let mut map = BTreeMap::new();
                for g in 0..game.n_states() {
                    for w in 0..game.n_signals() {
                        for th in 0..game.n_types() {
                            for a in 0..game.n_actions() {
                                let p = t[((g * game.n_signals() + w) * game.n_types() + th)
                                    * game.n_actions()
                                    + a];
                                if p != 0.0 {
                                    let key = format!(
                                        "{}|{}|{}|{}",
                                        game.actions[a],
                                        game.states[g],
                                        game.signals[w],
                                        game.types[th]
                                    );
                                    map.insert(key, p);
                                }
                            }
                        }
                    }
                }
                out.push(map);
            }
            PolicyDoc::Independent { tables: out }
        }
        Policy::Correlated(tables) => {
            let wv_n = game.principal_batches().count();
            let av_n = game.joint_actions().count();
            let mut map = BTreeMap::new();
            for (tv, t) in tables.iter().enumerate() {
                for g in 0..game.n_states() {
                    for wv in 0..wv_n {
                        for av in 0..av_n {
                            let p = t[(g * wv_n + wv) * av_n + av];
                            if p != 0.0 {
                                let key = format!(
                                    "{}|{}|{}|{}",
                                    game.action_key(av),
                                    game.states[g],
                                    game.signal_key(wv),
                                    game.type_key(tv)
                                );
                                map.insert(key, p);
                            }
                        }
                    }
                }
            }
            PolicyDoc::Correlated { table: map }
        }
    };

    let selection = if profile.selection.is_obedient(game) {
        SelectionDoc::Mode("obedient".into())
    } else {
        let batches = game.agent_batches();
        let mut out = Vec::new();
        for i in 0..n {
            let mut map = BTreeMap::new();
            for g in 0..game.n_states() {
                for b in 0..batches.count() {
                    for th in 0..game.n_types() {
                        let pos = profile.selection.position(game, i, g, b, th);
                        let batch_key = batches
                            .digits(b)
                            .iter()
                            .map(|&d| game.signals[d].as_str())
                            .collect::<Vec<_>>()
                            .join("|");
                        let key =
                            format!("{}|{}|{}", game.states[g], batch_key, game.types[th]);
                        map.insert(key, game.sources[pos].clone());
                    }
                }
            }
            out.push(map);
        }
        SelectionDoc::Tables(out)
    };

    let doc = ProfileDoc { policy, selection };
    let mut text = serde_json::to_string_pretty(&doc).expect("profile serialization");
    text.push('\n');
    text
}
