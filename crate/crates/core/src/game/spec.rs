use crate::error::{Error, Result};
use crate::space::ProductSpace;

const PROB_SUM_TOL: f64 = 1e-9;
const PROB_NEG_TOL: f64 = -1e-12;

/// A finite augmented Bayesian Markov game.
///
/// All tables are stored flat over ranked joint indices; the `*_idx` helpers
/// and the `ProductSpace` accessors define the layout. Joint batches over the
/// non-principal sources are ranked agent-major, then source-ascending with
/// the principal source skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub agents: Vec<String>,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub types: Vec<String>,
    pub signals: Vec<String>,
    pub sources: Vec<String>,
    /// Index into `sources` of the source the principal controls.
    pub principal: usize,
    /// `transition[(g * A^n + a) * G + g2]` = probability of `g2` from `(g, a)`.
    pub transition: Vec<f64>,
    /// Initial state distribution, length `G`.
    pub state_init: Vec<f64>,
    /// Per-agent type prior, length `Θ`; the joint prior is the iid product.
    pub type_prior: Vec<f64>,
    /// Joint per-period distribution of every agent's signals from the
    /// non-principal sources, length `Ω^{(m-1)·n}`.
    pub nonprincipal_dist: Vec<f64>,
    /// `rewards[(((i * A^n + a) * G + g) * Ω + w) * Θ + th]`.
    pub rewards: Vec<f64>,
    /// `principal_reward[(a * G + g) * Θ^n + tv]`.
    pub principal_reward: Vec<f64>,
    pub gamma: f64,
    pub gamma_hat: f64,
}

impl GameSpec {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }
    pub fn n_states(&self) -> usize {
        self.states.len()
    }
    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }
    pub fn n_types(&self) -> usize {
        self.types.len()
    }
    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }
    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    /// Joint action profiles `a⃗ ∈ A^n`.
    pub fn joint_actions(&self) -> ProductSpace {
        ProductSpace::uniform(self.n_actions(), self.n_agents())
    }
    /// Joint type vectors `θ⃗ ∈ Θ^n`.
    pub fn joint_types(&self) -> ProductSpace {
        ProductSpace::uniform(self.n_types(), self.n_agents())
    }
    /// Principal-source signal vectors `ω⃗ ∈ Ω^n` (one component per agent).
    pub fn principal_batches(&self) -> ProductSpace {
        ProductSpace::uniform(self.n_signals(), self.n_agents())
    }
    /// Joint non-principal signal draws, `Ω^{(m-1)·n}`, agent-major.
    pub fn others_batches(&self) -> ProductSpace {
        ProductSpace::uniform(self.n_signals(), (self.n_sources() - 1) * self.n_agents())
    }
    /// One agent's full batch `W_i ∈ Ω^m`, source-ascending.
    pub fn agent_batches(&self) -> ProductSpace {
        ProductSpace::uniform(self.n_signals(), self.n_sources())
    }
    /// Joint full batches `(W_1, …, W_n) ∈ Ω^{m·n}`, agent-major.
    pub fn joint_batches(&self) -> ProductSpace {
        ProductSpace::uniform(self.n_signals(), self.n_sources() * self.n_agents())
    }

    pub fn trans_idx(&self, g: usize, a: usize, g2: usize) -> usize {
        (g * self.joint_actions().count() + a) * self.n_states() + g2
    }
    pub fn transition_prob(&self, g: usize, a: usize, g2: usize) -> f64 {
        self.transition[self.trans_idx(g, a, g2)]
    }
    pub fn reward_idx(&self, agent: usize, a: usize, g: usize, w: usize, th: usize) -> usize {
        (((agent * self.joint_actions().count() + a) * self.n_states() + g) * self.n_signals()
            + w)
            * self.n_types()
            + th
    }
    pub fn reward(&self, agent: usize, a: usize, g: usize, w: usize, th: usize) -> f64 {
        self.rewards[self.reward_idx(agent, a, g, w, th)]
    }
    pub fn principal_reward_idx(&self, a: usize, g: usize, tv: usize) -> usize {
        (a * self.n_states() + g) * self.joint_types().count() + tv
    }
    pub fn principal_reward_at(&self, a: usize, g: usize, tv: usize) -> f64 {
        self.principal_reward[self.principal_reward_idx(a, g, tv)]
    }

    /// Largest absolute per-period agent reward; bounds all value magnitudes.
    pub fn r_max(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Assemble agent `i`'s full batch digits from their principal-source
    /// signal and the joint non-principal draw.
    pub fn agent_batch_digits(&self, agent: usize, principal_sig: usize, others: &[usize]) -> Vec<usize> {
        let m = self.n_sources();
        let base = agent * (m - 1);
        (0..m)
            .map(|s| {
                if s == self.principal {
                    principal_sig
                } else if s < self.principal {
                    others[base + s]
                } else {
                    others[base + s - 1]
                }
            })
            .collect()
    }

    /// Join action labels for a ranked profile, e.g. `"a0|a1"`.
    pub fn action_key(&self, a_rank: usize) -> String {
        join_labels(&self.actions, &self.joint_actions().digits(a_rank))
    }
    /// Join type labels for a ranked joint type vector.
    pub fn type_key(&self, tv_rank: usize) -> String {
        join_labels(&self.types, &self.joint_types().digits(tv_rank))
    }
    /// Join signal labels for a ranked principal batch.
    pub fn signal_key(&self, wv_rank: usize) -> String {
        join_labels(&self.signals, &self.principal_batches().digits(wv_rank))
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::validation("agents", "at least one agent required"));
        }
        for (name, list) in [
            ("agents", &self.agents),
            ("states", &self.states),
            ("actions", &self.actions),
            ("types", &self.types),
            ("signals", &self.signals),
            ("sources", &self.sources),
        ] {
            if list.is_empty() {
                return Err(Error::validation(name, "must be non-empty"));
            }
            let mut seen = std::collections::BTreeSet::new();
            for label in list {
                if !seen.insert(label) {
                    return Err(Error::validation(name, format!("duplicate label {label:?}")));
                }
            }
        }
        if self.principal >= self.n_sources() {
            return Err(Error::validation(
                "sources.principal",
                format!("index {} out of range for {} sources", self.principal, self.n_sources()),
            ));
        }
        for (name, v) in [("gamma", self.gamma), ("gamma_hat", self.gamma_hat)] {
            if !v.is_finite() || !(0.0..1.0).contains(&v) {
                return Err(Error::validation(name, format!("{v} outside [0, 1)")));
            }
        }

        let na = self.joint_actions().count();
        let g = self.n_states();
        let expect = [
            ("transition", self.transition.len(), g * na * g),
            ("state_init", self.state_init.len(), g),
            ("type_prior", self.type_prior.len(), self.n_types()),
            (
                "nonprincipal_dist",
                self.nonprincipal_dist.len(),
                self.others_batches().count(),
            ),
            (
                "rewards",
                self.rewards.len(),
                self.n_agents() * na * g * self.n_signals() * self.n_types(),
            ),
            (
                "principal_reward",
                self.principal_reward.len(),
                na * g * self.joint_types().count(),
            ),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::validation(
                    name,
                    format!("has {got} entries, expected {want}"),
                ));
            }
        }
        for (name, table) in [
            ("rewards", &self.rewards),
            ("principal_reward", &self.principal_reward),
        ] {
            if let Some(bad) = table.iter().find(|x| !x.is_finite()) {
                return Err(Error::validation(name, format!("non-finite entry {bad}")));
            }
        }

        for gi in 0..g {
            for a in 0..na {
                let row = &self.transition[self.trans_idx(gi, a, 0)..=self.trans_idx(gi, a, g - 1)];
                check_dist(
                    row,
                    &format!("transition[{}][{}]", self.states[gi], self.action_key(a)),
                )?;
            }
        }
        check_dist(&self.state_init, "state_init")?;
        check_dist(&self.type_prior, "type_prior")?;
        check_dist(&self.nonprincipal_dist, "nonprincipal_dist")?;
        Ok(())
    }
}

fn join_labels(labels: &[String], digits: &[usize]) -> String {
    digits
        .iter()
        .map(|&d| labels[d].as_str())
        .collect::<Vec<_>>()
        .join("|")
}

fn check_dist(row: &[f64], location: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < PROB_NEG_TOL {
            return Err(Error::validation(location, format!("invalid probability {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::validation(location, format!("probabilities sum to {sum}, expected 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::fixtures;

    #[test]
    fn minimal_game_validates() {
        fixtures::minimal().validate().unwrap();
    }

    #[test]
    fn bad_transition_row_names_state_and_action() {
        let mut game = fixtures::minimal();
        game.transition[0] = 0.9;
        let err = game.validate().unwrap_err().to_string();
        assert!(err.contains("transition[g0][a0]"), "{err}");
        assert!(err.contains("0.9"), "{err}");
    }

    #[test]
    fn gamma_bounds() {
        let mut game = fixtures::minimal();
        game.gamma = 1.0;
        assert!(game.validate().is_err());
        game.gamma = 0.0;
        game.validate().unwrap();
        game.gamma = -0.1;
        assert!(game.validate().is_err());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let mut game = fixtures::pd();
        game.actions[1] = "c".into();
        let err = game.validate().unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn batch_assembly_skips_principal_source() {
        let game = fixtures::two_source();
        // Agent 1, principal source index 0: batch = [principal, other].
        let digits = game.agent_batch_digits(1, 1, &[0, 1]);
        assert_eq!(digits, vec![1, 1]);
    }

    #[test]
    fn r_max_is_largest_magnitude() {
        let game = fixtures::pd();
        assert_eq!(game.r_max(), 3.0);
    }
}
