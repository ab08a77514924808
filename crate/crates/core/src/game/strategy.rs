use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::space::ProductSpace;

const ROW_SUM_TOL: f64 = 1e-9;

/// Signaling rule for the principal-controlled source:
/// `α(ω⃗ | g, θ⃗)` over joint signal vectors, one component per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalingRule {
    /// `probs[θ⃗ rank][g * Ω^n + ω⃗ rank]`.
    pub probs: Vec<Vec<f64>>,
}

impl SignalingRule {
    pub fn uniform(game: &GameSpec) -> Self {
        let wv = game.principal_batches().count();
        let inner = game.n_states() * wv;
        let p = 1.0 / wv as f64;
        SignalingRule {
            probs: vec![vec![p; inner]; game.joint_types().count()],
        }
    }

    pub fn prob(&self, game: &GameSpec, tv: usize, g: usize, wv: usize) -> f64 {
        self.probs[tv][g * game.principal_batches().count() + wv]
    }

    pub fn row(&self, game: &GameSpec, tv: usize, g: usize) -> &[f64] {
        let wv = game.principal_batches().count();
        &self.probs[tv][g * wv..(g + 1) * wv]
    }

    pub fn validate(&self, game: &GameSpec) -> Result<()> {
        let tvs = game.joint_types().count();
        let wv = game.principal_batches().count();
        if self.probs.len() != tvs {
            return Err(Error::validation(
                "rule",
                format!("{} joint-type blocks, expected {tvs}", self.probs.len()),
            ));
        }
        for (tv, block) in self.probs.iter().enumerate() {
            if block.len() != game.n_states() * wv {
                return Err(Error::validation(
                    "rule",
                    format!("block {tv} has {} entries, expected {}", block.len(), game.n_states() * wv),
                ));
            }
            for g in 0..game.n_states() {
                check_row(
                    &block[g * wv..(g + 1) * wv],
                    &format!("rule[{}][{}]", game.type_key(tv), game.states[g]),
                )?;
            }
        }
        Ok(())
    }
}

/// Deterministic batch-selection rules, one table per agent:
/// `β_i(g, W_i, θ_i)` → index of the source whose signal the agent keeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionRule {
    /// `tables[agent][(g * Ω^m + batch rank) * Θ + θ]` → source position.
    pub tables: Vec<Vec<usize>>,
}

impl SelectionRule {
    /// Every agent always keeps the principal source's signal.
    pub fn obedient(game: &GameSpec) -> Self {
        let cells = game.n_states() * game.agent_batches().count() * game.n_types();
        SelectionRule {
            tables: vec![vec![game.principal; cells]; game.n_agents()],
        }
    }

    pub fn position(&self, game: &GameSpec, agent: usize, g: usize, batch: usize, th: usize) -> usize {
        self.tables[agent][(g * game.agent_batches().count() + batch) * game.n_types() + th]
    }

    pub fn is_obedient(&self, game: &GameSpec) -> bool {
        self.tables.iter().all(|t| t.iter().all(|&p| p == game.principal))
    }

    /// Each agent's kept signal value, given the principal draw (one signal
    /// per agent) and the joint non-principal draw.
    pub fn selected(
        &self,
        game: &GameSpec,
        tv_digits: &[usize],
        g: usize,
        wk_digits: &[usize],
        others_digits: &[usize],
    ) -> Vec<usize> {
        let batches = game.agent_batches();
        (0..game.n_agents())
            .map(|i| {
                let batch = game.agent_batch_digits(i, wk_digits[i], others_digits);
                let pos = self.position(game, i, g, batches.rank(&batch), tv_digits[i]);
                batch[pos]
            })
            .collect()
    }

    pub fn validate(&self, game: &GameSpec) -> Result<()> {
        let cells = game.n_states() * game.agent_batches().count() * game.n_types();
        if self.tables.len() != game.n_agents() {
            return Err(Error::validation(
                "selection",
                format!("{} agent tables, expected {}", self.tables.len(), game.n_agents()),
            ));
        }
        for (i, t) in self.tables.iter().enumerate() {
            if t.len() != cells {
                return Err(Error::validation(
                    "selection",
                    format!("agent {i} table has {} cells, expected {cells}", t.len()),
                ));
            }
            if let Some(&bad) = t.iter().find(|&&p| p >= game.n_sources()) {
                return Err(Error::validation(
                    "selection",
                    format!("agent {i} selects source {bad}, only {} sources", game.n_sources()),
                ));
            }
        }
        Ok(())
    }
}

/// Action policies over kept signals. Independent policies factor across
/// agents; correlated ones give a joint distribution per joint context and
/// cover recommendation-style coordination.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// `tables[agent][((g * Ω + ω) * Θ + θ) * A + a]`.
    Independent(Vec<Vec<f64>>),
    /// `tables[θ⃗ rank][(g * Ω^n + ω⃗ rank) * A^n + a⃗ rank]` over kept-signal
    /// vectors.
    Correlated(Vec<Vec<f64>>),
}

impl Policy {
    pub fn uniform(game: &GameSpec) -> Self {
        let cells = game.n_states() * game.n_signals() * game.n_types() * game.n_actions();
        Policy::Independent(vec![
            vec![1.0 / game.n_actions() as f64; cells];
            game.n_agents()
        ])
    }

    /// Probability of joint action `av_digits` given joint types, state, and
    /// each agent's kept signal value.
    pub fn joint_prob_digits(
        &self,
        game: &GameSpec,
        tv_digits: &[usize],
        g: usize,
        sel: &[usize],
        av_digits: &[usize],
    ) -> f64 {
        match self {
            Policy::Independent(tables) => {
                let mut p = 1.0;
                for i in 0..game.n_agents() {
                    let idx = ((g * game.n_signals() + sel[i]) * game.n_types() + tv_digits[i])
                        * game.n_actions()
                        + av_digits[i];
                    p *= tables[i][idx];
                }
                p
            }
            Policy::Correlated(tables) => {
                let tv = game.joint_types().rank(tv_digits);
                let wv = game.principal_batches().rank(sel);
                let av = game.joint_actions().rank(av_digits);
                tables[tv][(g * game.principal_batches().count() + wv) * game.joint_actions().count() + av]
            }
        }
    }

    pub fn joint_prob(&self, game: &GameSpec, tv: usize, g: usize, sel: &[usize], av: usize) -> f64 {
        let tv_digits = game.joint_types().digits(tv);
        let av_digits = game.joint_actions().digits(av);
        self.joint_prob_digits(game, &tv_digits, g, sel, &av_digits)
    }

    pub fn validate(&self, game: &GameSpec) -> Result<()> {
        match self {
            Policy::Independent(tables) => {
                if tables.len() != game.n_agents() {
                    return Err(Error::validation(
                        "policy",
                        format!("{} agent tables, expected {}", tables.len(), game.n_agents()),
                    ));
                }
                let rows = game.n_states() * game.n_signals() * game.n_types();
                for (i, t) in tables.iter().enumerate() {
                    if t.len() != rows * game.n_actions() {
                        return Err(Error::validation(
                            "policy",
                            format!(
                                "agent {i} table has {} entries, expected {}",
                                t.len(),
                                rows * game.n_actions()
                            ),
                        ));
                    }
                    for r in 0..rows {
                        check_row(
                            &t[r * game.n_actions()..(r + 1) * game.n_actions()],
                            &format!("policy[agent {i}][row {r}]"),
                        )?;
                    }
                }
            }
            Policy::Correlated(tables) => {
                let tvs = game.joint_types().count();
                if tables.len() != tvs {
                    return Err(Error::validation(
                        "policy",
                        format!("{} joint-type blocks, expected {tvs}", tables.len()),
                    ));
                }
                let rows = game.n_states() * game.principal_batches().count();
                let av = game.joint_actions().count();
                for (tv, t) in tables.iter().enumerate() {
                    if t.len() != rows * av {
                        return Err(Error::validation(
                            "policy",
                            format!("block {tv} has {} entries, expected {}", t.len(), rows * av),
                        ));
                    }
                    for r in 0..rows {
                        check_row(&t[r * av..(r + 1) * av], &format!("policy[{tv}][row {r}]"))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// A selection rule and policy bundled as one behavior profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub selection: SelectionRule,
    pub policy: Policy,
}

/// Interim beliefs over the other agents' principal-source signals and types,
/// conditional on own state, kept principal signal, and own type.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSystem {
    /// `beliefs[agent][(g * Ω + ω) * Θ + θ]` = distribution over
    /// `(others' signal vector rank) * Θ^{n-1} + (others' type vector rank)`.
    pub beliefs: Vec<Vec<Vec<f64>>>,
    /// Conditioning cells that had zero prior probability and fell back to
    /// the uniform distribution, as `(agent, g, ω, θ)`.
    pub fallback_cells: Vec<(usize, usize, usize, usize)>,
}

impl BeliefSystem {
    pub fn others_signals(game: &GameSpec) -> ProductSpace {
        ProductSpace::uniform(game.n_signals(), game.n_agents() - 1)
    }
    pub fn others_types(game: &GameSpec) -> ProductSpace {
        ProductSpace::uniform(game.n_types(), game.n_agents() - 1)
    }

    pub fn belief(&self, game: &GameSpec, agent: usize, g: usize, w: usize, th: usize) -> &[f64] {
        &self.beliefs[agent][(g * game.n_signals() + w) * game.n_types() + th]
    }
}

/// Goal occupancy target `κ(a⃗ | g, θ⃗)`: the action distribution the designer
/// wants realized at each state for each joint type.
#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    /// `probs[θ⃗ rank][g * A^n + a⃗ rank]`.
    pub probs: Vec<Vec<f64>>,
}

impl Goal {
    /// Uniform action distribution at every state and joint type.
    pub fn uniform(game: &GameSpec) -> Self {
        let av = game.joint_actions().count();
        let row = vec![1.0 / av as f64; game.n_states() * av];
        Goal {
            probs: vec![row; game.joint_types().count()],
        }
    }

    pub fn prob(&self, game: &GameSpec, tv: usize, g: usize, av: usize) -> f64 {
        self.probs[tv][g * game.joint_actions().count() + av]
    }

    pub fn row(&self, game: &GameSpec, tv: usize, g: usize) -> &[f64] {
        let av = game.joint_actions().count();
        &self.probs[tv][g * av..(g + 1) * av]
    }

    pub fn validate(&self, game: &GameSpec) -> Result<()> {
        let tvs = game.joint_types().count();
        let av = game.joint_actions().count();
        if self.probs.len() != tvs {
            return Err(Error::validation(
                "goal",
                format!("{} joint-type blocks, expected {tvs}", self.probs.len()),
            ));
        }
        for (tv, block) in self.probs.iter().enumerate() {
            if block.len() != game.n_states() * av {
                return Err(Error::validation(
                    "goal",
                    format!("block {tv} has {} entries, expected {}", block.len(), game.n_states() * av),
                ));
            }
            for g in 0..game.n_states() {
                check_row(
                    &block[g * av..(g + 1) * av],
                    &format!("goal[{}][{}]", game.type_key(tv), game.states[g]),
                )?;
            }
        }
        Ok(())
    }
}

fn check_row(row: &[f64], location: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < -1e-12 {
            return Err(Error::validation(location, format!("invalid probability {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::validation(location, format!("row sums to {sum}, expected 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn uniform_rule_validates() {
        let game = fixtures::two_source();
        SignalingRule::uniform(&game).validate(&game).unwrap();
    }

    #[test]
    fn obedient_selection_always_keeps_principal() {
        let game = fixtures::two_source();
        let beta = SelectionRule::obedient(&game);
        assert!(beta.is_obedient(&game));
        let sel = beta.selected(&game, &[0, 0], 0, &[1, 0], &[0, 1]);
        assert_eq!(sel, vec![1, 0]);
    }

    #[test]
    fn nonobedient_selection_keeps_other_source() {
        let game = fixtures::two_source();
        let mut beta = SelectionRule::obedient(&game);
        for cell in beta.tables[0].iter_mut() {
            *cell = 1;
        }
        assert!(!beta.is_obedient(&game));
        // Agent 0 keeps source x (their entry in the joint non-principal draw).
        let sel = beta.selected(&game, &[0, 0], 0, &[1, 0], &[0, 1]);
        assert_eq!(sel, vec![0, 0]);
    }

    #[test]
    fn independent_policy_factors() {
        let game = fixtures::pd();
        let mut tables = vec![vec![0.0; 2]; 2];
        tables[0][0] = 0.25; // p1 plays c with 0.25
        tables[0][1] = 0.75;
        tables[1][0] = 0.5;
        tables[1][1] = 0.5;
        let pi = Policy::Independent(tables);
        pi.validate(&game).unwrap();
        let p = pi.joint_prob(&game, 0, 0, &[0, 0], 0);
        assert!((p - 0.125).abs() < 1e-12);
    }

    #[test]
    fn correlated_policy_looks_up_joint_cell() {
        let game = fixtures::chicken();
        let wv = game.principal_batches().count();
        let av = game.joint_actions().count();
        let mut table = vec![vec![0.0; wv * av]];
        for w in 0..wv {
            // Mass on (d,c) after rank-1 joint signal, else (c,d).
            table[0][w * av + if w == 1 { 1 } else { 2 }] = 1.0;
        }
        let pi = Policy::Correlated(table);
        pi.validate(&game).unwrap();
        assert_eq!(pi.joint_prob(&game, 0, 0, &[0, 1], 1), 1.0);
        assert_eq!(pi.joint_prob(&game, 0, 0, &[0, 0], 2), 1.0);
    }

    #[test]
    fn policy_row_sum_enforced() {
        let game = fixtures::pd();
        let tables = vec![vec![0.6, 0.3]; 2];
        assert!(Policy::Independent(tables).validate(&game).is_err());
    }
}
