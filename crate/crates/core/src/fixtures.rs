//! Small example games used by tests, demos, and the shipped fixture files,
//! plus a few policy builders the test suites share.

use crate::game::{GameSpec, Policy};
use crate::space::ProductSpace;

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Independent policy where each agent always plays one fixed action.
pub fn constant_policy(game: &GameSpec, actions: &[usize]) -> Policy {
    let cells = game.n_states() * game.n_signals() * game.n_types();
    let a_n = game.n_actions();
    Policy::Independent(
        actions
            .iter()
            .map(|&a| {
                let mut t = vec![0.0; cells * a_n];
                for c in 0..cells {
                    t[c * a_n + a] = 1.0;
                }
                t
            })
            .collect(),
    )
}

/// Independent policy where every agent plays the action with the index of
/// their kept signal (clamped to the action range).
pub fn signal_matching_policy(game: &GameSpec) -> Policy {
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    Policy::Independent(
        (0..game.n_agents())
            .map(|_| {
                let mut t = vec![0.0; game.n_states() * om * th_n * a_n];
                for g in 0..game.n_states() {
                    for w in 0..om {
                        for th in 0..th_n {
                            t[((g * om + w) * th_n + th) * a_n + w.min(a_n - 1)] = 1.0;
                        }
                    }
                }
                t
            })
            .collect(),
    )
}

/// One agent, one of everything; the smallest valid game.
pub fn minimal() -> GameSpec {
    GameSpec {
        agents: vec!["p1".into()],
        states: labels("g", 1),
        actions: labels("a", 1),
        types: labels("t", 1),
        signals: labels("s", 1),
        sources: vec!["k".into()],
        principal: 0,
        transition: vec![1.0],
        state_init: vec![1.0],
        type_prior: vec![1.0],
        nonprincipal_dist: vec![1.0],
        rewards: vec![1.0],
        principal_reward: vec![1.0],
        gamma: 0.5,
        gamma_hat: 0.5,
    }
}

/// Two-agent social dilemma on a single state: defect dominates, mutual
/// cooperation is better for both. Payoffs (c,c)=(2,2), (c,d)=(0,3),
/// (d,c)=(3,0), (d,d)=(1,1); the outside observer prefers total welfare.
pub fn pd() -> GameSpec {
    let row0 = [2.0, 0.0, 3.0, 1.0];
    let row1 = [2.0, 3.0, 0.0, 1.0];
    let mut rewards = Vec::new();
    for i in 0..2 {
        for a in 0..4 {
            rewards.push(if i == 0 { row0[a] } else { row1[a] });
        }
    }
    GameSpec {
        agents: vec!["p1".into(), "p2".into()],
        states: labels("g", 1),
        actions: vec!["c".into(), "d".into()],
        types: labels("t", 1),
        signals: labels("s", 1),
        sources: vec!["k".into()],
        principal: 0,
        transition: vec![1.0; 4],
        state_init: vec![1.0],
        type_prior: vec![1.0],
        nonprincipal_dist: vec![1.0],
        rewards,
        principal_reward: vec![4.0, 3.0, 3.0, 2.0],
        gamma: 0.9,
        gamma_hat: 0.9,
    }
}

/// One agent walking a two-state chain: `move` switches state, `stay` keeps
/// it, and reward 1 accrues in state `g1` only. Closed-form values are easy.
pub fn chain2() -> GameSpec {
    GameSpec {
        agents: vec!["p1".into()],
        states: labels("g", 2),
        actions: vec!["stay".into(), "move".into()],
        types: labels("t", 1),
        signals: labels("s", 1),
        sources: vec!["k".into()],
        principal: 0,
        // [g][a][g']: stay keeps g, move flips it.
        transition: vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
        state_init: vec![1.0, 0.0],
        type_prior: vec![1.0],
        nonprincipal_dist: vec![1.0],
        // [a][g] with reward 1 in g1.
        rewards: vec![0.0, 1.0, 0.0, 1.0],
        principal_reward: vec![0.0, 1.0, 0.0, 1.0],
        gamma: 0.9,
        gamma_hat: 0.9,
    }
}

/// Two agents, two sources (the second uncontrolled and uniform), binary
/// signals. Each agent is paid for matching their selected signal, so source
/// choice matters.
pub fn two_source() -> GameSpec {
    let acts = ProductSpace::uniform(2, 2);
    let mut rewards = Vec::new();
    for i in 0..2 {
        for a in 0..acts.count() {
            let digits = acts.digits(a);
            for w in 0..2 {
                rewards.push(if digits[i] == w { 1.0 } else { 0.0 });
            }
        }
    }
    let mut principal_reward = Vec::new();
    for a in 0..acts.count() {
        let digits = acts.digits(a);
        principal_reward.push(digits.iter().filter(|&&d| d == 1).count() as f64);
    }
    GameSpec {
        agents: vec!["p1".into(), "p2".into()],
        states: labels("g", 1),
        actions: labels("a", 2),
        types: labels("t", 1),
        signals: labels("s", 2),
        sources: vec!["k".into(), "x".into()],
        principal: 0,
        transition: vec![1.0; 4],
        state_init: vec![1.0],
        type_prior: vec![1.0],
        nonprincipal_dist: vec![0.25; 4],
        rewards,
        principal_reward,
        gamma: 0.5,
        gamma_hat: 0.5,
    }
}

/// One-shot anti-coordination game (γ = 0) with binary recommendations:
/// (d,d)=(0,0), (d,c)=(3,1), (c,d)=(1,3), (c,c)=(2,2). Correlated play can
/// beat every static equilibrium on total welfare.
pub fn chicken() -> GameSpec {
    let row0 = [0.0, 3.0, 1.0, 2.0];
    let row1 = [0.0, 1.0, 3.0, 2.0];
    let mut rewards = Vec::new();
    for i in 0..2 {
        for a in 0..4 {
            for _w in 0..2 {
                rewards.push(if i == 0 { row0[a] } else { row1[a] });
            }
        }
    }
    GameSpec {
        agents: vec!["p1".into(), "p2".into()],
        states: labels("g", 1),
        actions: vec!["d".into(), "c".into()],
        types: labels("t", 1),
        signals: vec!["r0".into(), "r1".into()],
        sources: vec!["k".into()],
        principal: 0,
        transition: vec![1.0; 4],
        state_init: vec![1.0],
        type_prior: vec![1.0],
        nonprincipal_dist: vec![1.0],
        rewards,
        principal_reward: vec![0.0, 4.0, 4.0, 4.0],
        gamma: 0.0,
        gamma_hat: 0.0,
    }
}

/// One-shot persuasion (γ = γ̂ = 0): a judge wants to match a suspect whose
/// dominant action reveals their own type (guilty with prior 0.3), while the
/// designer is paid whenever the judge convicts. The best achievable
/// conviction frequency pools all guilty types with just enough innocent
/// ones, giving 2 × 0.3 = 0.6.
pub fn persuasion() -> GameSpec {
    let acts = ProductSpace::uniform(2, 2);
    let mut rewards = Vec::new();
    for i in 0..2 {
        for a in 0..acts.count() {
            let digits = acts.digits(a);
            for _w in 0..2 {
                for th in 0..2 {
                    let r = if i == 0 {
                        // Judge: paid for matching the suspect's action.
                        if digits[0] == digits[1] {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        // Suspect: strictly dominant to act out their type.
                        if digits[1] == th {
                            1.0
                        } else {
                            0.0
                        }
                    };
                    rewards.push(r);
                }
            }
        }
    }
    let types = ProductSpace::uniform(2, 2);
    let mut principal_reward = Vec::new();
    for a in 0..acts.count() {
        let digits = acts.digits(a);
        for _tv in 0..types.count() {
            principal_reward.push(if digits[0] == 1 { 1.0 } else { 0.0 });
        }
    }
    GameSpec {
        agents: vec!["judge".into(), "suspect".into()],
        states: labels("g", 1),
        actions: vec!["acquit".into(), "convict".into()],
        types: vec!["innocent".into(), "guilty".into()],
        signals: vec!["ar".into(), "cr".into()],
        sources: vec!["k".into()],
        principal: 0,
        transition: vec![1.0; 4],
        state_init: vec![1.0],
        type_prior: vec![0.7, 0.3],
        nonprincipal_dist: vec![1.0],
        rewards,
        principal_reward,
        gamma: 0.0,
        gamma_hat: 0.0,
    }
}
