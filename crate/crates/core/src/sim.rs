//! Seeded Monte-Carlo rollouts that cross-validate the analytic machinery:
//! empirical occupancy measures, empirical payoffs, and paired-seed
//! deviation-gain estimates.
//!
//! Each period consumes randomness in a fixed order — signal draw for the
//! controlled source, joint draw for the others, one action draw per agent
//! (or one joint draw for a correlated policy), then the state transition —
//! so a rollout and its deviated twin share every random number. Deviations
//! only override what the deviator keeps or plays; they never shift the
//! stream, which is what makes the paired gain of an identical deviation
//! exactly zero and cuts the variance of every other estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::OccupancyMeasure;
use crate::error::{Error, Result};
use crate::game::{Deviation, GameSpec, Policy, SelectionRule, SignalingRule};

/// Everything that happened in one period of a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    /// State at the start of the period.
    pub state: usize,
    /// Controlled source's draw, one signal per agent.
    pub principal_draw: Vec<usize>,
    /// Non-principal sources' joint draw, agent-major digits.
    pub others_draw: Vec<usize>,
    /// Signal each agent kept after selection.
    pub kept: Vec<usize>,
    /// Action each agent played.
    pub actions: Vec<usize>,
    /// Realized per-agent rewards.
    pub rewards: Vec<f64>,
}

/// One simulated episode: the joint type is drawn once up front, then
/// `horizon` periods follow the play protocol. Identical inputs and seed
/// reproduce the trajectory bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    /// Per-agent types drawn at the start of the episode.
    pub joint_type: Vec<usize>,
    pub horizon: usize,
    pub periods: Vec<PeriodRecord>,
}

impl Trajectory {
    /// Discounted reward total for one agent.
    pub fn discounted_reward(&self, agent: usize, gamma: f64) -> f64 {
        let mut total = 0.0;
        let mut weight = 1.0;
        for p in &self.periods {
            total += weight * p.rewards[agent];
            weight *= gamma;
        }
        total
    }

    /// JSON-lines rendering: a header object with the episode fields, then
    /// one period object per line.
    pub fn to_jsonl(&self) -> String {
        let header = serde_json::json!({
            "seed": self.seed,
            "joint_type": self.joint_type,
            "horizon": self.horizon,
        });
        let mut out = serde_json::to_string(&header).expect("serializable header");
        for p in &self.periods {
            out.push('\n');
            out.push_str(&serde_json::to_string(p).expect("serializable period"));
        }
        out.push('\n');
        out
    }
}

/// A Monte-Carlo estimate with its standard error (zero when fewer than two
/// samples back it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

fn summarize(samples: &[f64]) -> Estimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return Estimate {
            mean,
            std_error: 0.0,
        };
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Estimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// Smallest horizon whose truncated tail `γ^T·R_max/(1−γ)` is below 1e−6;
/// 1 for undiscounted or rewardless games.
pub fn default_horizon(game: &GameSpec) -> usize {
    let r_max = game.r_max();
    if game.gamma <= 0.0 || r_max == 0.0 {
        return 1;
    }
    let bound = 1e-6 * (1.0 - game.gamma) / r_max;
    (bound.ln() / game.gamma.ln()).ceil().max(1.0) as usize
}

/// Inverse-CDF draw from an unnormalized-tolerant probability row; exactly
/// one uniform is consumed per call, which keeps paired streams aligned.
fn pick(u: f64, probs: &[f64]) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

fn simulate(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    horizon: usize,
    seed: u64,
    deviation: Option<&Deviation>,
) -> Trajectory {
    assert!(horizon >= 1, "rollout horizon must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = game.n_agents();
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let wk_space = game.principal_batches();
    let wv = wk_space.count();
    let ob = game.others_batches();
    let batches = game.agent_batches();
    let tv_space = game.joint_types();

    let joint_type: Vec<usize> = (0..n)
        .map(|_| pick(rng.gen::<f64>(), &game.type_prior))
        .collect();
    let tv = tv_space.rank(&joint_type);
    let mut g = pick(rng.gen::<f64>(), &game.state_init);

    let mut periods = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let wk = pick(rng.gen::<f64>(), &alpha.probs[tv][g * wv..(g + 1) * wv]);
        let wkd = wk_space.digits(wk);
        let d = pick(rng.gen::<f64>(), &game.nonprincipal_dist);
        let draw = ob.digits(d);
        let kept: Vec<usize> = (0..n)
            .map(|i| {
                let batch = game.agent_batch_digits(i, wkd[i], &draw);
                let rank = batches.rank(&batch);
                let mut pos = beta.position(game, i, g, rank, joint_type[i]);
                if let Some(Deviation::Selection { agent, table }) = deviation {
                    if *agent == i {
                        pos = table[(g * batches.count() + rank) * th_n + joint_type[i]];
                    }
                }
                batch[pos]
            })
            .collect();
        let mut actions = match pi {
            Policy::Independent(tables) => (0..n)
                .map(|i| {
                    let cell = (g * om + kept[i]) * th_n + joint_type[i];
                    pick(rng.gen::<f64>(), &tables[i][cell * a_n..(cell + 1) * a_n])
                })
                .collect::<Vec<usize>>(),
            Policy::Correlated(tables) => {
                let ws = wk_space.rank(&kept);
                let row = &tables[tv][(g * wv + ws) * av_n..(g * wv + ws + 1) * av_n];
                av_space.digits(pick(rng.gen::<f64>(), row))
            }
        };
        if let Some(Deviation::Policy { agent, table }) = deviation {
            actions[*agent] = table[(g * om + kept[*agent]) * th_n + joint_type[*agent]];
        }
        let av = av_space.rank(&actions);
        let rewards: Vec<f64> = (0..n)
            .map(|i| game.reward(i, av, g, kept[i], joint_type[i]))
            .collect();
        let row = &game.transition[(g * av_n + av) * g_n..(g * av_n + av + 1) * g_n];
        let g_next = pick(rng.gen::<f64>(), row);
        periods.push(PeriodRecord {
            state: g,
            principal_draw: wkd,
            others_draw: draw,
            kept,
            actions,
            rewards,
        });
        g = g_next;
    }
    Trajectory {
        seed,
        joint_type,
        horizon,
        periods,
    }
}

/// Simulate one episode of the profile. Deterministic given the seed.
pub fn rollout(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    horizon: usize,
    seed: u64,
) -> Trajectory {
    simulate(game, alpha, beta, pi, horizon, seed, None)
}

/// Simulate `n_rollouts` episodes under seeds `base_seed, base_seed+1, …`.
/// Episodes run concurrently; the output order is by seed, so results do
/// not depend on the worker count.
pub fn rollout_batch(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    n_rollouts: usize,
    horizon: usize,
    base_seed: u64,
) -> Vec<Trajectory> {
    (0..n_rollouts)
        .into_par_iter()
        .map(|s| rollout(game, alpha, beta, pi, horizon, base_seed.wrapping_add(s as u64)))
        .collect()
}

/// Empirical visitation measure: `γ^t`-weighted counts over
/// `(g, a⃗, ω⃗, ω⃗^k)`, one table per joint type, each normalized by the
/// number of trajectories that drew that type (matching the analytic
/// measure's per-type conditioning). Types never sampled leave zero
/// tables.
pub fn estimate_occupancy(
    game: &GameSpec,
    trajectories: &[Trajectory],
    gamma: f64,
) -> Result<OccupancyMeasure> {
    if trajectories.is_empty() {
        return Err(Error::InsufficientData(
            "cannot estimate an occupancy measure from zero trajectories".into(),
        ));
    }
    let g_n = game.n_states();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let wk_space = game.principal_batches();
    let wv = wk_space.count();
    let tv_space = game.joint_types();
    let mut tables = vec![vec![0.0; g_n * av_n * wv * wv]; tv_space.count()];
    let mut counts = vec![0usize; tv_space.count()];
    for t in trajectories {
        let tv = tv_space.rank(&t.joint_type);
        counts[tv] += 1;
        let mut weight = 1.0;
        for p in &t.periods {
            let av = av_space.rank(&p.actions);
            let ws = wk_space.rank(&p.kept);
            let wk = wk_space.rank(&p.principal_draw);
            tables[tv][OccupancyMeasure::idx(game, p.state, av, ws, wk)] += weight;
            weight *= gamma;
        }
    }
    for (table, &c) in tables.iter_mut().zip(&counts) {
        if c > 0 {
            let inv = 1.0 / c as f64;
            for v in table.iter_mut() {
                *v *= inv;
            }
        }
    }
    Ok(OccupancyMeasure { tables, gamma })
}

/// Per-agent empirical discounted payoff with standard errors.
pub fn empirical_payoffs(
    game: &GameSpec,
    trajectories: &[Trajectory],
    gamma: f64,
) -> Result<Vec<Estimate>> {
    if trajectories.is_empty() {
        return Err(Error::InsufficientData(
            "cannot estimate payoffs from zero trajectories".into(),
        ));
    }
    Ok((0..game.n_agents())
        .map(|i| {
            let samples: Vec<f64> = trajectories
                .iter()
                .map(|t| t.discounted_reward(i, gamma))
                .collect();
            summarize(&samples)
        })
        .collect())
}

/// Paired-seed estimate of the deviator's discounted payoff change: each
/// seed is rolled out twice, once under the profile and once with the
/// deviation overriding the deviator's selection or play, and the gains
/// are averaged. Identical play gives exactly zero.
#[allow(clippy::too_many_arguments)]
pub fn empirical_deviation_gain(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    deviation: &Deviation,
    n_rollouts: usize,
    horizon: usize,
    base_seed: u64,
) -> Estimate {
    assert!(n_rollouts >= 1, "need at least one rollout");
    let agent = deviation.agent();
    let gains: Vec<f64> = (0..n_rollouts)
        .into_par_iter()
        .map(|s| {
            let seed = base_seed.wrapping_add(s as u64);
            let eq = simulate(game, alpha, beta, pi, horizon, seed, None);
            let dev = simulate(game, alpha, beta, pi, horizon, seed, Some(deviation));
            dev.discounted_reward(agent, game.gamma) - eq.discounted_reward(agent, game.gamma)
        })
        .collect();
    summarize(&gains)
}
