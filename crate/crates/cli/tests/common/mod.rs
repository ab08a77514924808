//! Shared helpers for the acceptance suite: seeded random game and profile
//! generators at desk scale, plus a tiny dense linear solver used by the
//! hand-rolled oracles.

use mgid_core::game::{GameSpec, Goal, Policy, SelectionRule, SignalingRule};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Probability floor for generated distributions; keeps every cell robustly
/// on-support so tolerance-gated support checks agree between library and
/// oracle code.
pub const PROB_FLOOR: f64 = 0.02;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability row with all entries at least `PROB_FLOOR / len`.
pub fn random_simplex(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len)
        .map(|_| PROB_FLOOR + rng.gen::<f64>())
        .collect();
    let total: f64 = row.iter().sum();
    for x in row.iter_mut() {
        *x /= total;
    }
    row
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Size caps for the random game generator.
#[derive(Clone, Copy)]
pub struct Caps {
    pub agents: usize,
    pub states: usize,
    pub actions: usize,
    pub signals: usize,
    pub types: usize,
    pub sources: usize,
}

pub const DESK_CAPS: Caps = Caps {
    agents: 2,
    states: 4,
    actions: 3,
    signals: 3,
    types: 2,
    sources: 2,
};

/// Random game within `caps`: dimensions drawn uniformly, all distributions
/// strictly positive, rewards uniform in [-1, 1], `gamma` from {0.5, 0.9}
/// (also used for `gamma_hat`).
pub fn random_game(rng: &mut ChaCha8Rng, caps: &Caps) -> GameSpec {
    let n = rng.gen_range(1..=caps.agents);
    let g_n = rng.gen_range(1..=caps.states);
    let a_n = rng.gen_range(1..=caps.actions);
    let om = rng.gen_range(1..=caps.signals);
    let th_n = rng.gen_range(1..=caps.types);
    let m = rng.gen_range(1..=caps.sources);
    let gamma = if rng.gen::<bool>() { 0.9 } else { 0.5 };
    random_game_dims(rng, n, g_n, a_n, om, th_n, m, gamma)
}

/// Random game with every dimension pinned by the caller.
#[allow(clippy::too_many_arguments)]
pub fn random_game_dims(
    rng: &mut ChaCha8Rng,
    n: usize,
    g_n: usize,
    a_n: usize,
    om: usize,
    th_n: usize,
    m: usize,
    gamma: f64,
) -> GameSpec {
    let av_n = a_n.pow(n as u32);
    let mut transition = Vec::with_capacity(g_n * av_n * g_n);
    for _ in 0..g_n * av_n {
        transition.extend(random_simplex(rng, g_n));
    }
    let others = om.pow(((m - 1) * n) as u32);
    let reward_cells = n * av_n * g_n * om * th_n;
    let rewards: Vec<f64> = (0..reward_cells)
        .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
        .collect();
    let tvs = th_n.pow(n as u32);
    let principal_reward: Vec<f64> = (0..av_n * g_n * tvs)
        .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
        .collect();
    GameSpec {
        agents: labels("p", n),
        states: labels("g", g_n),
        actions: labels("a", a_n),
        types: labels("t", th_n),
        signals: labels("s", om),
        sources: labels("k", m),
        principal: 0,
        transition,
        state_init: random_simplex(rng, g_n),
        type_prior: random_simplex(rng, th_n),
        nonprincipal_dist: random_simplex(rng, others),
        rewards,
        principal_reward,
        gamma,
        gamma_hat: gamma,
    }
}

/// Random strictly positive signaling rule.
pub fn random_rule(rng: &mut ChaCha8Rng, game: &GameSpec) -> SignalingRule {
    let wv = game.principal_batches().count();
    let probs = (0..game.joint_types().count())
        .map(|_| {
            let mut block = Vec::with_capacity(game.n_states() * wv);
            for _ in 0..game.n_states() {
                block.extend(random_simplex(rng, wv));
            }
            block
        })
        .collect();
    SignalingRule { probs }
}

/// Random deterministic batch-selection rule.
pub fn random_selection(rng: &mut ChaCha8Rng, game: &GameSpec) -> SelectionRule {
    let cells = game.n_states() * game.agent_batches().count() * game.n_types();
    let tables = (0..game.n_agents())
        .map(|_| (0..cells).map(|_| rng.gen_range(0..game.n_sources())).collect())
        .collect();
    SelectionRule { tables }
}

/// Random strictly positive independent policy.
pub fn random_policy(rng: &mut ChaCha8Rng, game: &GameSpec) -> Policy {
    let cells = game.n_states() * game.n_signals() * game.n_types();
    let tables = (0..game.n_agents())
        .map(|_| {
            let mut t = Vec::with_capacity(cells * game.n_actions());
            for _ in 0..cells {
                t.extend(random_simplex(rng, game.n_actions()));
            }
            t
        })
        .collect();
    Policy::Independent(tables)
}

/// Random strictly positive goal distribution.
pub fn random_goal(rng: &mut ChaCha8Rng, game: &GameSpec) -> Goal {
    let av_n = game.joint_actions().count();
    let probs = (0..game.joint_types().count())
        .map(|_| {
            let mut block = Vec::with_capacity(game.n_states() * av_n);
            for _ in 0..game.n_states() {
                block.extend(random_simplex(rng, av_n));
            }
            block
        })
        .collect();
    Goal { probs }
}

/// Joint type prior `Π_i d_θ(θ_i)` over ranked type vectors.
pub fn joint_type_prior(game: &GameSpec) -> Vec<f64> {
    game.joint_types()
        .iter()
        .map(|tvd| tvd.iter().map(|&th| game.type_prior[th]).product())
        .collect()
}

/// Solve the dense system `A x = b` by Gaussian elimination with partial
/// pivoting. Panics on a (numerically) singular matrix; the acceptance
/// oracles only build strictly diagonally dominant systems.
pub fn solve_dense(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| {
                m[r1 * n + col]
                    .abs()
                    .partial_cmp(&m[r2 * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        assert!(m[pivot * n + col].abs() > 1e-12, "singular system");
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            rhs.swap(col, pivot);
        }
        let diag = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[row * n + k] * x[k];
        }
        x[row] = acc / m[row * n + row];
    }
    x
}

/// Expected one-period behavior of a profile at `(θ⃗, g)`, enumerated from
/// first principles: joint probability of (principal draw, non-principal
/// draw, kept vector, joint action), yielded to the visitor.
pub fn enumerate_period<F: FnMut(f64, &[usize], &[usize], usize)>(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    tv: usize,
    g: usize,
    mut visit: F,
) {
    let tvd = game.joint_types().digits(tv);
    let wk_space = game.principal_batches();
    let ob = game.others_batches();
    let av_space = game.joint_actions();
    let batches = game.agent_batches();
    for wkv in 0..wk_space.count() {
        let pa = alpha.prob(game, tv, g, wkv);
        if pa == 0.0 {
            continue;
        }
        let wk_digits = wk_space.digits(wkv);
        for d in 0..ob.count() {
            let pd = game.nonprincipal_dist[d];
            if pd == 0.0 {
                continue;
            }
            let draw = ob.digits(d);
            let kept: Vec<usize> = (0..game.n_agents())
                .map(|i| {
                    let batch = game.agent_batch_digits(i, wk_digits[i], &draw);
                    let pos = beta.position(game, i, g, batches.rank(&batch), tvd[i]);
                    batch[pos]
                })
                .collect();
            for av in 0..av_space.count() {
                let pp = pi.joint_prob_digits(game, &tvd, g, &kept, &av_space.digits(av));
                if pp == 0.0 {
                    continue;
                }
                visit(pa * pd * pp, &wk_digits, &kept, av);
            }
        }
    }
}
