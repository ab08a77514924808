//! Equilibrium verification: one-shot and windowed deviation sweeps for
//! dynamic profiles, obedience and admissibility checks, static-game
//! reductions, and slack certificates comparing occupancy-measure and
//! value-function accounts of each deviation.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    self, compute_values, occupancy_from_profile, OccupancyMeasure, ValueBundle,
};
use crate::error::{Error, Result};
use crate::game::{
    BeliefSystem, Deviation, GameSpec, Goal, Policy, SelectionRule, SignalingRule, DEVIATION_CAP,
};
use crate::linalg;
use crate::space::{insert_at, normalize_or_uniform, ProductSpace};

/// Probability mass below which an information set is treated as unreached
/// and excluded from incentive sweeps.
pub const ON_SUPPORT_TOL: f64 = 1e-9;

/// Default incentive tolerance for all verification entry points.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Default number of extra periods checked by windowed deviation sweeps
/// (a window of length `t + 1` is checked for every `t` up to this bound).
pub const DEFAULT_T_DEV: usize = 2;

/// Internal accuracy requested from the value solver. Far below the
/// verification tolerances so solver residue cannot flip a verdict.
const VALUE_SOLVE_TOL: f64 = 1e-9;

/// The single most profitable deviation found by a sweep, described in the
/// coordinates of the information set where it applies.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviationWitness {
    /// Keep signal `to_kept` (instead of `kept`) and/or play `to_action`
    /// (instead of `recommended`) for one period at the information set
    /// `(state, delivered, own_type)`.
    OneShot {
        agent: usize,
        state: usize,
        delivered: usize,
        kept: usize,
        own_type: usize,
        recommended: usize,
        to_kept: usize,
        to_action: usize,
    },
    /// Replace the batch-selection map at `(state, own_type)`: for each
    /// realized batch (indexed by batch rank), keep the source at
    /// `positions[batch]`, and if `actions[batch]` is set, also play that
    /// action instead of following the policy.
    SelectionMap {
        agent: usize,
        state: usize,
        own_type: usize,
        positions: Vec<usize>,
        actions: Vec<Option<usize>>,
    },
    /// Play the open-loop action sequence `actions` for the window starting
    /// at the information set `(state, delivered, own_type)`, keeping
    /// signals obediently throughout.
    ActionWindow {
        agent: usize,
        state: usize,
        delivered: usize,
        own_type: usize,
        actions: Vec<usize>,
    },
    /// Keep the source at open-loop batch position `positions[s]` in period
    /// `s` of the window starting from `state`, following the policy at
    /// whatever signal that yields.
    PositionWindow {
        agent: usize,
        state: usize,
        own_type: usize,
        positions: Vec<usize>,
    },
    /// Replace the whole stationary action table of a static profile with
    /// `table` (indexed by `state * n_types + type`).
    PolicyTable { agent: usize, table: Vec<usize> },
    /// In the goal-directed static check: when recommended `recommended`
    /// at `(state, own_type)`, play `to_action` instead.
    Recommendation {
        agent: usize,
        state: usize,
        own_type: usize,
        recommended: usize,
        to_action: usize,
    },
}

/// Outcome of an incentive sweep. `is_equilibrium` holds exactly when the
/// worst gain over every deviation tested (and the belief consistency gap,
/// when one is reported) is within `tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub is_equilibrium: bool,
    /// Largest improvement available from action deviations (signal kept
    /// unchanged); 0 when no deviation improves.
    pub worst_policy_gain: f64,
    /// Largest improvement available from deviations that change which
    /// signal is kept; 0 when no deviation improves.
    pub worst_selection_gain: f64,
    /// The best deviation found, if any strictly improves.
    pub witness: Option<DeviationWitness>,
    pub tolerance: f64,
    /// Worst distance between supplied and recomputed static beliefs;
    /// only reported by the static profile check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency_gap: Option<f64>,
}

/// Full verification verdict for a profile under a designed rule: the
/// incentive report plus the obedience and goal-admissibility side
/// conditions that the incentive sweep takes as given.
#[derive(Debug, Clone, Serialize)]
pub struct OPbmeReport {
    pub report: EquilibriumReport,
    /// Whether the selection rule keeps the principal's source everywhere.
    pub obedient: bool,
    /// Whether the profile induces the target action distribution.
    pub admissible: bool,
    /// Worst deviation between induced and target action probabilities.
    pub admissibility_gap: f64,
}

impl OPbmeReport {
    /// True when the profile passes the incentive sweep and both side
    /// conditions.
    pub fn verified(&self) -> bool {
        self.report.is_equilibrium && self.obedient && self.admissible
    }
}

/// Beliefs for the static reduction: `tables[agent][s * A^(n-1) + am]` is a
/// distribution over opponents' joint types given own state `s` and
/// observed opponent actions `am` (rank in the opponents' action space).
#[derive(Debug, Clone, Serialize)]
pub struct StaticBeliefs {
    pub tables: Vec<Vec<Vec<f64>>>,
}

/// One row of a slack certificate: the ex-ante value a deviation forgoes
/// (positive when the equilibrium profile is better) and the total
/// discounted mass of the deviating occupancy measure used as its dual
/// weight.
#[derive(Debug, Clone, Serialize)]
pub struct SlackEntry {
    pub deviation: Deviation,
    pub slack: f64,
    pub dual_weight: f64,
}

/// Slack certificate over an explicit deviation family. `delta` covers
/// action-table deviations, `zeta` selection-table deviations.
/// `lagrangian_value` aggregates, with the dual weights, the discrepancy
/// between the occupancy-measure and value-function accounts of each
/// slack; the two accounts agree identically, so it vanishes up to
/// numerical error and serves as a cross-route consistency check.
#[derive(Debug, Clone, Serialize)]
pub struct SlackCertificate {
    pub delta: Vec<SlackEntry>,
    pub zeta: Vec<SlackEntry>,
    pub lagrangian_value: f64,
}

// ---------------------------------------------------------------------------
// Gain tracking
// ---------------------------------------------------------------------------

/// Running worst gains for one sweep. Gains start at 0 (the null deviation
/// never loses); a witness is recorded only for strictly positive gains, and
/// only replaced by a strictly larger one, so the earliest maximizer in
/// sweep order is kept.
struct Tracker {
    policy: f64,
    selection: f64,
    best: Option<(f64, DeviationWitness)>,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            policy: 0.0,
            selection: 0.0,
            best: None,
        }
    }

    fn consider(&mut self, gain: f64, make: impl FnOnce() -> DeviationWitness) {
        if gain <= 0.0 {
            return;
        }
        let replace = match &self.best {
            Some((g, _)) => gain > *g,
            None => true,
        };
        if replace {
            self.best = Some((gain, make()));
        }
    }

    fn policy_gain(&mut self, gain: f64, make: impl FnOnce() -> DeviationWitness) {
        if gain > self.policy {
            self.policy = gain;
        }
        self.consider(gain, make);
    }

    fn selection_gain(&mut self, gain: f64, make: impl FnOnce() -> DeviationWitness) {
        if gain > self.selection {
            self.selection = gain;
        }
        self.consider(gain, make);
    }

    fn merge(&mut self, other: Tracker) {
        if other.policy > self.policy {
            self.policy = other.policy;
        }
        if other.selection > self.selection {
            self.selection = other.selection;
        }
        if let Some((g, w)) = other.best {
            let replace = match &self.best {
                Some((g0, _)) => g > *g0,
                None => true,
            };
            if replace {
                self.best = Some((g, w));
            }
        }
    }

    fn into_report(self, tol: f64) -> EquilibriumReport {
        EquilibriumReport {
            is_equilibrium: self.policy.max(self.selection) <= tol,
            worst_policy_gain: self.policy,
            worst_selection_gain: self.selection,
            witness: self.best.map(|(_, w)| w),
            tolerance: tol,
            consistency_gap: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Shared interim constructions
// ---------------------------------------------------------------------------

/// Prior-predictive probability that `agent` is delivered each principal
/// signal, per `(state * n_signals + delivered) * n_types + own_type` cell:
/// own-type prior times the type-prior-mixed marginal of the signaling rule
/// on the agent's coordinate, per state. Used only as an on-support filter,
/// so the state is not weighted.
pub(crate) fn own_signal_marginal(game: &GameSpec, alpha: &SignalingRule, agent: usize) -> Vec<f64> {
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let tv_space = game.joint_types();
    let d_tv = dynamics::joint_type_prior(game);
    let wk_space = game.principal_batches();
    let mut out = vec![0.0; g_n * om * th_n];
    let mut wd = vec![0; game.n_agents()];
    for (tv, d) in d_tv.iter().enumerate() {
        if *d <= 0.0 {
            continue;
        }
        let th = tv_space.digits(tv)[agent];
        for g in 0..g_n {
            for wkv in 0..wk_space.count() {
                let pa = alpha.prob(game, tv, g, wkv);
                if pa == 0.0 {
                    continue;
                }
                wk_space.digits_into(wkv, &mut wd);
                out[(g * om + wd[agent]) * th_n + th] += d * pa;
            }
        }
    }
    out
}

/// Perceived joint distribution over (own kept signal, joint action) for
/// one agent at the information set `(g, wk, th)`: the agent's belief over
/// opponents' delivered signals and types, pushed through the non-principal
/// draw, everyone's selection rule, and the policy. Layout
/// `[kept * A^n + av]`; total mass 1 when the belief row is proper.
pub(crate) fn interim_joint(
    game: &GameSpec,
    beta: &SelectionRule,
    pi: &Policy,
    mu: &BeliefSystem,
    agent: usize,
    g: usize,
    wk: usize,
    th: usize,
) -> Vec<f64> {
    let n = game.n_agents();
    let om = game.n_signals();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let others_sig = BeliefSystem::others_signals(game);
    let others_ty = BeliefSystem::others_types(game);
    let tm_n = others_ty.count();
    let ob = game.others_batches();
    let batches = game.agent_batches();
    let belief = mu.belief(game, agent, g, wk, th);
    let mut out = vec![0.0; om * av_n];
    let mut av_digits = vec![0; n];
    for (sm, sig_minus) in others_sig.iter().enumerate() {
        for (tm, ty_minus) in others_ty.iter().enumerate() {
            let wb = belief[sm * tm_n + tm];
            if wb <= 0.0 {
                continue;
            }
            let tvd = insert_at(&ty_minus, agent, th);
            let wd = insert_at(&sig_minus, agent, wk);
            for d in 0..ob.count() {
                let pd = game.nonprincipal_dist[d];
                if pd == 0.0 {
                    continue;
                }
                let draw = ob.digits(d);
                let mut kept_vec = vec![0usize; n];
                for j in 0..n {
                    let bj = game.agent_batch_digits(j, wd[j], &draw);
                    let pos = beta.position(game, j, g, batches.rank(&bj), tvd[j]);
                    kept_vec[j] = bj[pos];
                }
                let kept = kept_vec[agent];
                let w = wb * pd;
                for av in 0..av_n {
                    av_space.digits_into(av, &mut av_digits);
                    let pp = pi.joint_prob_digits(game, &tvd, g, &kept_vec, &av_digits);
                    if pp != 0.0 {
                        out[kept * av_n + av] += w * pp;
                    }
                }
            }
        }
    }
    out
}

/// Expected interim action value when the conditional over opponents'
/// actions is `cond` and the agent keeps `kept` (while `wk` was delivered)
/// and plays `own_action`.
fn expected_q(
    game: &GameSpec,
    vb: &ValueBundle,
    am_space: &ProductSpace,
    agent: usize,
    g: usize,
    kept: usize,
    wk: usize,
    th: usize,
    own_action: usize,
    cond: &[f64],
) -> f64 {
    let av_space = game.joint_actions();
    let mut v = 0.0;
    for (am, amd) in am_space.iter().enumerate() {
        if cond[am] == 0.0 {
            continue;
        }
        let av = av_space.rank(&insert_at(&amd, agent, own_action));
        v += cond[am] * vb.q_at(game, agent, g, kept, wk, th, av);
    }
    v
}

// ---------------------------------------------------------------------------
// One-shot sweep
// ---------------------------------------------------------------------------

/// Single-period deviation sweep for one agent over every on-support
/// information set `(state, delivered, own_type, kept, recommended)`. The
/// candidate kept signal either ranges over the whole signal alphabet
/// (`pointwise_signals`) or is pinned to the realized kept signal, leaving
/// only action deviations. The conditional over opponents' actions given
/// the own recommendation is read off the perceived joint distribution, so
/// it is exact for both independent and correlated policies.
fn one_shot_sweep(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    mu: &BeliefSystem,
    vb: &ValueBundle,
    agent: usize,
    pointwise_signals: bool,
) -> Tracker {
    let mut tr = Tracker::new();
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let am_space = ProductSpace::uniform(a_n, game.n_agents() - 1);
    let am_n = am_space.count();
    let marg = own_signal_marginal(game, alpha, agent);
    for g in 0..g_n {
        for th in 0..th_n {
            if game.type_prior[th] <= ON_SUPPORT_TOL {
                continue;
            }
            for wk in 0..om {
                if marg[(g * om + wk) * th_n + th] <= ON_SUPPORT_TOL {
                    continue;
                }
                let joint = interim_joint(game, beta, pi, mu, agent, g, wk, th);
                for kept in 0..om {
                    let row = &joint[kept * av_n..(kept + 1) * av_n];
                    let row_mass: f64 = row.iter().sum();
                    if row_mass <= ON_SUPPORT_TOL {
                        continue;
                    }
                    for a_i in 0..a_n {
                        let mut cond = vec![0.0; am_n];
                        for (am, amd) in am_space.iter().enumerate() {
                            let av = av_space.rank(&insert_at(&amd, agent, a_i));
                            cond[am] = row[av];
                        }
                        let cmass: f64 = cond.iter().sum();
                        if cmass <= ON_SUPPORT_TOL * row_mass {
                            continue;
                        }
                        for c in cond.iter_mut() {
                            *c /= cmass;
                        }
                        let lhs = expected_q(
                            game, vb, &am_space, agent, g, kept, wk, th, a_i, &cond,
                        );
                        let (lo, hi) = if pointwise_signals {
                            (0, om)
                        } else {
                            (kept, kept + 1)
                        };
                        for kp in lo..hi {
                            for ap in 0..a_n {
                                let gain = expected_q(
                                    game, vb, &am_space, agent, g, kp, wk, th, ap, &cond,
                                ) - lhs;
                                let make = || DeviationWitness::OneShot {
                                    agent,
                                    state: g,
                                    delivered: wk,
                                    kept,
                                    own_type: th,
                                    recommended: a_i,
                                    to_kept: kp,
                                    to_action: ap,
                                };
                                if kp == kept {
                                    tr.policy_gain(gain, make);
                                } else {
                                    tr.selection_gain(gain, make);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    tr
}

// ---------------------------------------------------------------------------
// Selection-map sweep
// ---------------------------------------------------------------------------

/// Ex-ante best response over deterministic batch-selection maps for one
/// agent at each `(state, own_type)`: for every realized batch, the best
/// source position (optionally also overriding the recommended action for
/// that period), with play returning to the profile afterwards. The map
/// value decomposes batch-by-batch, so cell-wise argmax over
/// `(position, optional action)` is exact and equivalent to enumerating
/// every map.
fn selection_map_sweep(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    vb: &ValueBundle,
    agent: usize,
) -> Tracker {
    let mut tr = Tracker::new();
    let m = game.n_sources();
    if m < 2 {
        return tr;
    }
    let n = game.n_agents();
    let g_n = game.n_states();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let tv_space = game.joint_types();
    let others_ty = BeliefSystem::others_types(game);
    let prior_minus = dynamics::others_type_prior(game);
    let wk_space = game.principal_batches();
    let ob = game.others_batches();
    let batches = game.agent_batches();
    let b_n = batches.count();
    let mut av_digits = vec![0; n];
    for g in 0..g_n {
        for th in 0..th_n {
            if game.type_prior[th] <= ON_SUPPORT_TOL {
                continue;
            }
            // follow[b][p]: keep position p in batch b and follow the
            // policy; forced[b][p * A + a]: keep position p and play a.
            let mut follow = vec![vec![0.0; m]; b_n];
            let mut forced = vec![vec![0.0; m * a_n]; b_n];
            let mut eq_value = 0.0;
            for (tm, ty_minus) in others_ty.iter().enumerate() {
                let pm = prior_minus[tm];
                if pm <= 0.0 {
                    continue;
                }
                let tvd = insert_at(&ty_minus, agent, th);
                let tv = tv_space.rank(&tvd);
                for wkv in 0..wk_space.count() {
                    let pa = alpha.prob(game, tv, g, wkv);
                    if pa == 0.0 {
                        continue;
                    }
                    let wd = wk_space.digits(wkv);
                    for d in 0..ob.count() {
                        let pd = game.nonprincipal_dist[d];
                        if pd == 0.0 {
                            continue;
                        }
                        let draw = ob.digits(d);
                        let w = pm * pa * pd;
                        let mut kept_vec = vec![0usize; n];
                        for j in 0..n {
                            if j == agent {
                                continue;
                            }
                            let bj = game.agent_batch_digits(j, wd[j], &draw);
                            let pos = beta.position(game, j, g, batches.rank(&bj), tvd[j]);
                            kept_vec[j] = bj[pos];
                        }
                        let own = game.agent_batch_digits(agent, wd[agent], &draw);
                        let b = batches.rank(&own);
                        let eq_pos = beta.position(game, agent, g, b, th);
                        for p in 0..m {
                            let kept = own[p];
                            kept_vec[agent] = kept;
                            let mut val_follow = 0.0;
                            let mut val_forced = vec![0.0; a_n];
                            for av in 0..av_n {
                                av_space.digits_into(av, &mut av_digits);
                                let pp =
                                    pi.joint_prob_digits(game, &tvd, g, &kept_vec, &av_digits);
                                if pp == 0.0 {
                                    continue;
                                }
                                let mut cont = 0.0;
                                for g2 in 0..g_n {
                                    cont += game.transition_prob(g, av, g2)
                                        * vb.j_fix[agent][tv][g2];
                                }
                                val_follow += pp
                                    * (game.reward(agent, av, g, kept, th) + game.gamma * cont);
                                for a in 0..a_n {
                                    let av2 = av_space.rank_with(&av_digits, agent, a);
                                    let mut cont2 = 0.0;
                                    for g2 in 0..g_n {
                                        cont2 += game.transition_prob(g, av2, g2)
                                            * vb.j_fix[agent][tv][g2];
                                    }
                                    val_forced[a] += pp
                                        * (game.reward(agent, av2, g, kept, th)
                                            + game.gamma * cont2);
                                }
                            }
                            follow[b][p] += w * val_follow;
                            for a in 0..a_n {
                                forced[b][p * a_n + a] += w * val_forced[a];
                            }
                            if p == eq_pos {
                                eq_value += w * val_follow;
                            }
                        }
                    }
                }
            }
            let mut best_total = 0.0;
            let mut positions = vec![0usize; b_n];
            let mut actions: Vec<Option<usize>> = vec![None; b_n];
            for b in 0..b_n {
                let mut best = f64::NEG_INFINITY;
                let mut bp = 0usize;
                let mut ba: Option<usize> = None;
                for p in 0..m {
                    if follow[b][p] > best {
                        best = follow[b][p];
                        bp = p;
                        ba = None;
                    }
                    for a in 0..a_n {
                        if forced[b][p * a_n + a] > best {
                            best = forced[b][p * a_n + a];
                            bp = p;
                            ba = Some(a);
                        }
                    }
                }
                best_total += best;
                positions[b] = bp;
                actions[b] = ba;
            }
            let gain = best_total - eq_value;
            tr.selection_gain(gain, move || DeviationWitness::SelectionMap {
                agent,
                state: g,
                own_type: th,
                positions,
                actions,
            });
        }
    }
    tr
}

// ---------------------------------------------------------------------------
// Windowed sweeps
// ---------------------------------------------------------------------------

/// Per joint type: the stationary state kernel and expected one-period
/// reward for the swept agent under the profile, plus one-sided variants
/// where that agent pins either its action (opponents still react to the
/// profile's kept signals) or its batch position (opponents unchanged, own
/// kept signal replaced before the policy acts).
struct WindowTables {
    eq_kernel: Vec<Vec<f64>>,
    eq_reward: Vec<Vec<f64>>,
    act_kernel: Vec<Vec<Vec<f64>>>,
    act_reward: Vec<Vec<Vec<f64>>>,
    pos_kernel: Vec<Vec<Vec<f64>>>,
    pos_reward: Vec<Vec<Vec<f64>>>,
}

fn window_tables(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    agent: usize,
) -> WindowTables {
    let n = game.n_agents();
    let g_n = game.n_states();
    let a_n = game.n_actions();
    let m = game.n_sources();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let tv_space = game.joint_types();
    let tvs = tv_space.count();
    let wk_space = game.principal_batches();
    let ob = game.others_batches();
    let mut out = WindowTables {
        eq_kernel: Vec::with_capacity(tvs),
        eq_reward: Vec::with_capacity(tvs),
        act_kernel: Vec::with_capacity(tvs),
        act_reward: Vec::with_capacity(tvs),
        pos_kernel: Vec::with_capacity(tvs),
        pos_reward: Vec::with_capacity(tvs),
    };
    let mut av_digits = vec![0; n];
    for tv in 0..tvs {
        let tvd = tv_space.digits(tv);
        let th = tvd[agent];
        let (kernel, rewards) = dynamics::kernel_and_rewards(game, alpha, beta, pi, tv);
        out.eq_reward.push(rewards[agent].clone());
        out.eq_kernel.push(kernel);
        let mut ak = vec![vec![0.0; g_n * g_n]; a_n];
        let mut ar = vec![vec![0.0; g_n]; a_n];
        let mut pk = vec![vec![0.0; g_n * g_n]; m];
        let mut pr = vec![vec![0.0; g_n]; m];
        for g in 0..g_n {
            for wkv in 0..wk_space.count() {
                let pa = alpha.prob(game, tv, g, wkv);
                if pa == 0.0 {
                    continue;
                }
                let wd = wk_space.digits(wkv);
                for d in 0..ob.count() {
                    let pd = game.nonprincipal_dist[d];
                    if pd == 0.0 {
                        continue;
                    }
                    let draw = ob.digits(d);
                    let w = pa * pd;
                    let kept = beta.selected(game, &tvd, g, &wd, &draw);
                    let own = game.agent_batch_digits(agent, wd[agent], &draw);
                    for av in 0..av_n {
                        av_space.digits_into(av, &mut av_digits);
                        let pp = pi.joint_prob_digits(game, &tvd, g, &kept, &av_digits);
                        if pp == 0.0 {
                            continue;
                        }
                        for a in 0..a_n {
                            let av2 = av_space.rank_with(&av_digits, agent, a);
                            ar[a][g] += w * pp * game.reward(agent, av2, g, kept[agent], th);
                            for g2 in 0..g_n {
                                ak[a][g * g_n + g2] += w * pp * game.transition_prob(g, av2, g2);
                            }
                        }
                    }
                    for p in 0..m {
                        let kw = own[p];
                        let mut vec2 = kept.clone();
                        vec2[agent] = kw;
                        for av in 0..av_n {
                            av_space.digits_into(av, &mut av_digits);
                            let pp = pi.joint_prob_digits(game, &tvd, g, &vec2, &av_digits);
                            if pp == 0.0 {
                                continue;
                            }
                            pr[p][g] += w * pp * game.reward(agent, av, g, kw, th);
                            for g2 in 0..g_n {
                                pk[p][g * g_n + g2] += w * pp * game.transition_prob(g, av, g2);
                            }
                        }
                    }
                }
            }
        }
        out.act_kernel.push(ak);
        out.act_reward.push(ar);
        out.pos_kernel.push(pk);
        out.pos_reward.push(pr);
    }
    out
}

/// Discounted value of a `(t + 1)`-period window given the realized
/// period-0 reward mass `r0` and next-state mass `p1`, per-period
/// `(reward, kernel)` tables for periods `1..=t`, and the continuation
/// values `tail` applied from period `t + 1` on.
fn window_value<'a>(
    r0: f64,
    p1: &[f64],
    t: usize,
    tables: impl Fn(usize) -> (&'a [f64], &'a [f64]),
    tail: &[f64],
    gamma: f64,
) -> f64 {
    let g_n = p1.len();
    let mut total = r0;
    let mut p = p1.to_vec();
    let mut disc = gamma;
    for s in 1..=t {
        let (r, k) = tables(s);
        let mut step = 0.0;
        for g in 0..g_n {
            step += p[g] * r[g];
        }
        total += disc * step;
        let mut p2 = vec![0.0; g_n];
        for g in 0..g_n {
            if p[g] == 0.0 {
                continue;
            }
            for g2 in 0..g_n {
                p2[g2] += p[g] * k[g * g_n + g2];
            }
        }
        p = p2;
        disc *= gamma;
    }
    let mut tail_v = 0.0;
    for g in 0..g_n {
        tail_v += p[g] * tail[g];
    }
    total + disc * tail_v
}

/// Like `window_value` but starting from a point state, with period 0 also
/// drawn from the per-period tables.
fn window_value_from_state<'a>(
    g0: usize,
    t: usize,
    tables: impl Fn(usize) -> (&'a [f64], &'a [f64]),
    tail: &[f64],
    gamma: f64,
) -> f64 {
    let g_n = tail.len();
    let (r0, k0) = tables(0);
    window_value(r0[g0], &k0[g0 * g_n..(g0 + 1) * g_n], t, tables, tail, gamma)
}

/// Multi-period open-loop deviation sweep for one agent: action sequences
/// of length `t + 1` (signals kept per the profile) conditioned on each
/// on-support starting information set, and batch-position sequences
/// evaluated ex ante from each starting state, for every window bound `t`
/// in `1..=t_dev`. Both sides of each comparison run through the same
/// forward recursion, so solver residue cancels.
fn windowed_sweep(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    mu: &BeliefSystem,
    vb: &ValueBundle,
    agent: usize,
    t_dev: usize,
) -> Tracker {
    let mut tr = Tracker::new();
    if t_dev == 0 {
        return tr;
    }
    let n = game.n_agents();
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let m = game.n_sources();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let tv_space = game.joint_types();
    let others_sig = BeliefSystem::others_signals(game);
    let others_ty = BeliefSystem::others_types(game);
    let tm_n = others_ty.count();
    let prior_minus = dynamics::others_type_prior(game);
    let ob = game.others_batches();
    let batches = game.agent_batches();
    let wt = window_tables(game, alpha, beta, pi, agent);
    let marg = own_signal_marginal(game, alpha, agent);
    let gamma = game.gamma;
    let mut av_digits = vec![0; n];

    // Open-loop action windows, conditioned on the starting information set.
    for g0 in 0..g_n {
        for th in 0..th_n {
            if game.type_prior[th] <= ON_SUPPORT_TOL {
                continue;
            }
            let tv_of_tm: Vec<usize> = (0..tm_n)
                .map(|tm| tv_space.rank(&insert_at(&others_ty.digits(tm), agent, th)))
                .collect();
            for wk in 0..om {
                if marg[(g0 * om + wk) * th_n + th] <= ON_SUPPORT_TOL {
                    continue;
                }
                // Period-0 summaries per opponents'-type cell: realized
                // reward mass and next-state mass under the profile, and
                // under each first deviating action.
                let mut eq0_r = vec![0.0; tm_n];
                let mut eq0_p = vec![vec![0.0; g_n]; tm_n];
                let mut act0_r = vec![vec![0.0; a_n]; tm_n];
                let mut act0_p = vec![vec![vec![0.0; g_n]; a_n]; tm_n];
                let belief = mu.belief(game, agent, g0, wk, th);
                for (sm, sig_minus) in others_sig.iter().enumerate() {
                    for (tm, ty_minus) in others_ty.iter().enumerate() {
                        let wb = belief[sm * tm_n + tm];
                        if wb <= 0.0 {
                            continue;
                        }
                        let tvd = insert_at(&ty_minus, agent, th);
                        let wd = insert_at(&sig_minus, agent, wk);
                        for d in 0..ob.count() {
                            let pd = game.nonprincipal_dist[d];
                            if pd == 0.0 {
                                continue;
                            }
                            let draw = ob.digits(d);
                            let mut kept_vec = vec![0usize; n];
                            for j in 0..n {
                                let bj = game.agent_batch_digits(j, wd[j], &draw);
                                let pos =
                                    beta.position(game, j, g0, batches.rank(&bj), tvd[j]);
                                kept_vec[j] = bj[pos];
                            }
                            let k0 = kept_vec[agent];
                            for av in 0..av_n {
                                av_space.digits_into(av, &mut av_digits);
                                let pp =
                                    pi.joint_prob_digits(game, &tvd, g0, &kept_vec, &av_digits);
                                if pp == 0.0 {
                                    continue;
                                }
                                let w = wb * pd * pp;
                                eq0_r[tm] += w * game.reward(agent, av, g0, k0, th);
                                for g2 in 0..g_n {
                                    eq0_p[tm][g2] += w * game.transition_prob(g0, av, g2);
                                }
                                for a in 0..a_n {
                                    let av2 = av_space.rank_with(&av_digits, agent, a);
                                    act0_r[tm][a] += w * game.reward(agent, av2, g0, k0, th);
                                    for g2 in 0..g_n {
                                        act0_p[tm][a][g2] +=
                                            w * game.transition_prob(g0, av2, g2);
                                    }
                                }
                            }
                        }
                    }
                }
                for t in 1..=t_dev {
                    let mut total_eq = 0.0;
                    for tm in 0..tm_n {
                        let tv = tv_of_tm[tm];
                        total_eq += window_value(
                            eq0_r[tm],
                            &eq0_p[tm],
                            t,
                            |_s| (&wt.eq_reward[tv][..], &wt.eq_kernel[tv][..]),
                            &vb.j_fix[agent][tv],
                            gamma,
                        );
                    }
                    let seq_space = ProductSpace::uniform(a_n, t + 1);
                    for seq in seq_space.iter() {
                        let mut total_dev = 0.0;
                        for tm in 0..tm_n {
                            let tv = tv_of_tm[tm];
                            total_dev += window_value(
                                act0_r[tm][seq[0]],
                                &act0_p[tm][seq[0]],
                                t,
                                |s| {
                                    (
                                        &wt.act_reward[tv][seq[s]][..],
                                        &wt.act_kernel[tv][seq[s]][..],
                                    )
                                },
                                &vb.j_fix[agent][tv],
                                gamma,
                            );
                        }
                        let gain = total_dev - total_eq;
                        tr.policy_gain(gain, || DeviationWitness::ActionWindow {
                            agent,
                            state: g0,
                            delivered: wk,
                            own_type: th,
                            actions: seq.clone(),
                        });
                    }
                }
            }
        }
    }

    // Open-loop batch-position windows, ex ante from each starting state.
    if m >= 2 {
        for g0 in 0..g_n {
            for th in 0..th_n {
                if game.type_prior[th] <= ON_SUPPORT_TOL {
                    continue;
                }
                let tv_of_tm: Vec<usize> = (0..tm_n)
                    .map(|tm| tv_space.rank(&insert_at(&others_ty.digits(tm), agent, th)))
                    .collect();
                for t in 1..=t_dev {
                    let mut total_eq = 0.0;
                    for tm in 0..tm_n {
                        let pm = prior_minus[tm];
                        if pm <= 0.0 {
                            continue;
                        }
                        let tv = tv_of_tm[tm];
                        total_eq += pm
                            * window_value_from_state(
                                g0,
                                t,
                                |_s| (&wt.eq_reward[tv][..], &wt.eq_kernel[tv][..]),
                                &vb.j_fix[agent][tv],
                                gamma,
                            );
                    }
                    let seq_space = ProductSpace::uniform(m, t + 1);
                    for seq in seq_space.iter() {
                        let mut total_dev = 0.0;
                        for tm in 0..tm_n {
                            let pm = prior_minus[tm];
                            if pm <= 0.0 {
                                continue;
                            }
                            let tv = tv_of_tm[tm];
                            total_dev += pm
                                * window_value_from_state(
                                    g0,
                                    t,
                                    |s| {
                                        (
                                            &wt.pos_reward[tv][seq[s]][..],
                                            &wt.pos_kernel[tv][seq[s]][..],
                                        )
                                    },
                                    &vb.j_fix[agent][tv],
                                    gamma,
                                );
                        }
                        let gain = total_dev - total_eq;
                        tr.selection_gain(gain, || DeviationWitness::PositionWindow {
                            agent,
                            state: g0,
                            own_type: th,
                            positions: seq.clone(),
                        });
                    }
                }
            }
        }
    }
    tr
}

// ---------------------------------------------------------------------------
// Public checks: dynamic profiles
// ---------------------------------------------------------------------------

/// Whether the selection rule keeps the principal's source at every cell.
pub fn check_obedient(game: &GameSpec, beta: &SelectionRule) -> bool {
    beta.is_obedient(game)
}

/// Distance between the action distribution the profile induces and the
/// target `kappa`, maximized over `(joint action, state, joint type)`.
/// Returns `(within tolerance, worst gap)`.
pub fn check_admissibility(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    kappa: &Goal,
    tol: f64,
) -> (bool, f64) {
    let g_n = game.n_states();
    let n = game.n_agents();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let tv_space = game.joint_types();
    let wk_space = game.principal_batches();
    let ws_n = wk_space.count();
    let mut worst = 0.0f64;
    let mut av_digits = vec![0; n];
    let mut ws_digits = vec![0; n];
    for tv in 0..tv_space.count() {
        let tvd = tv_space.digits(tv);
        let mix = dynamics::kept_signal_mix(game, beta, tv);
        for g in 0..g_n {
            let mut induced = vec![0.0; av_n];
            for wkv in 0..ws_n {
                let pa = alpha.prob(game, tv, g, wkv);
                if pa == 0.0 {
                    continue;
                }
                for ws in 0..ws_n {
                    let pm = mix[(g * ws_n + wkv) * ws_n + ws];
                    if pm == 0.0 {
                        continue;
                    }
                    wk_space.digits_into(ws, &mut ws_digits);
                    for av in 0..av_n {
                        av_space.digits_into(av, &mut av_digits);
                        let pp = pi.joint_prob_digits(game, &tvd, g, &ws_digits, &av_digits);
                        if pp != 0.0 {
                            induced[av] += pa * pm * pp;
                        }
                    }
                }
            }
            for av in 0..av_n {
                let gap = (induced[av] - kappa.prob(game, tv, g, av)).abs();
                if gap > worst {
                    worst = gap;
                }
            }
        }
    }
    (worst <= tol, worst)
}

/// One-shot incentive check for a dynamic profile: at every on-support
/// information set, no single-period joint deviation of the kept signal
/// (over the whole signal alphabet) and the action may improve the interim
/// action value against the perceived opponent play.
pub fn check_pbme(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    mu: &BeliefSystem,
    tol: f64,
) -> Result<EquilibriumReport> {
    let vb = compute_values(game, alpha, beta, pi, mu, VALUE_SOLVE_TOL)?;
    let trackers: Vec<Tracker> = (0..game.n_agents())
        .into_par_iter()
        .map(|i| one_shot_sweep(game, alpha, beta, pi, mu, &vb, i, true))
        .collect();
    let mut all = Tracker::new();
    for t in trackers {
        all.merge(t);
    }
    Ok(all.into_report(tol))
}

/// Full verification for a designed profile: obedience of the selection
/// rule, admissibility against the target action distribution `kappa`, and
/// an incentive sweep whose selection deviations range over what a deviator
/// can actually reach — alternative batch positions, one-shot
/// (position, action) overrides per realized batch, and open-loop position
/// and action windows up to `t_dev` extra periods.
#[allow(clippy::too_many_arguments)]
pub fn check_o_pbme(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    mu: &BeliefSystem,
    kappa: &Goal,
    tol: f64,
    t_dev: usize,
) -> Result<OPbmeReport> {
    let vb = compute_values(game, alpha, beta, pi, mu, VALUE_SOLVE_TOL)?;
    let obedient = check_obedient(game, beta);
    let (admissible, admissibility_gap) = check_admissibility(game, alpha, beta, pi, kappa, tol);
    let trackers: Vec<Tracker> = (0..game.n_agents())
        .into_par_iter()
        .map(|i| {
            let mut t = one_shot_sweep(game, alpha, beta, pi, mu, &vb, i, false);
            t.merge(selection_map_sweep(game, alpha, beta, pi, &vb, i));
            t.merge(windowed_sweep(game, alpha, beta, pi, mu, &vb, i, t_dev));
            t
        })
        .collect();
    let mut all = Tracker::new();
    for t in trackers {
        all.merge(t);
    }
    Ok(OPbmeReport {
        report: all.into_report(tol),
        obedient,
        admissible,
        admissibility_gap,
    })
}

// ---------------------------------------------------------------------------
// Static reduction: independent profiles
// ---------------------------------------------------------------------------

/// Per-type state kernel and the swept agent's expected reward under an
/// independent static profile read at signal slot 0.
fn static_kernel_reward(
    game: &GameSpec,
    tables: &[Vec<f64>],
    tvd: &[usize],
    agent: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = game.n_agents();
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let av_space = game.joint_actions();
    let mut kernel = vec![0.0; g_n * g_n];
    let mut reward = vec![0.0; g_n];
    let mut av_digits = vec![0; n];
    for g in 0..g_n {
        for av in 0..av_space.count() {
            av_space.digits_into(av, &mut av_digits);
            let mut pp = 1.0;
            for j in 0..n {
                pp *= tables[j][((g * om) * th_n + tvd[j]) * a_n + av_digits[j]];
                if pp == 0.0 {
                    break;
                }
            }
            if pp == 0.0 {
                continue;
            }
            reward[g] += pp * game.reward(agent, av, g, 0, tvd[agent]);
            for g2 in 0..g_n {
                kernel[g * g_n + g2] += pp * game.transition_prob(g, av, g2);
            }
        }
    }
    (kernel, reward)
}

/// Interim chain value per own type for one agent under an independent
/// static profile: opponents' types mixed by the prior, start state by the
/// initial distribution.
fn static_values_agent(game: &GameSpec, tables: &[Vec<f64>], agent: usize) -> Result<Vec<f64>> {
    let th_n = game.n_types();
    let others_ty = BeliefSystem::others_types(game);
    let prior_minus = dynamics::others_type_prior(game);
    let mut out = vec![0.0; th_n];
    for th in 0..th_n {
        let mut total = 0.0;
        for (tm, ty_minus) in others_ty.iter().enumerate() {
            let pm = prior_minus[tm];
            if pm <= 0.0 {
                continue;
            }
            let tvd = insert_at(&ty_minus, agent, th);
            let (kernel, reward) = static_kernel_reward(game, tables, &tvd, agent);
            let j = linalg::discounted_value(&kernel, &reward, game.gamma)?;
            for g in 0..game.n_states() {
                total += pm * game.state_init[g] * j[g];
            }
        }
        out[th] = total;
    }
    Ok(out)
}

/// One-hot independent table (over every signal slot) realizing a
/// deterministic `(state, type) -> action` map.
fn one_hot_table(game: &GameSpec, table: &[usize]) -> Vec<f64> {
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let mut t = vec![0.0; g_n * om * th_n * a_n];
    for g in 0..g_n {
        for w in 0..om {
            for th in 0..th_n {
                let a = table[g * th_n + th];
                t[((g * om + w) * th_n + th) * a_n + a] = 1.0;
            }
        }
    }
    t
}

/// Recomputed static beliefs and, per cell, whether the conditioning event
/// has positive probability (unreached cells fall back to uniform).
fn static_beliefs_tables(
    game: &GameSpec,
    tables: &[Vec<f64>],
) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<bool>>) {
    let n = game.n_agents();
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let am_space = ProductSpace::uniform(a_n, n - 1);
    let others_ty = BeliefSystem::others_types(game);
    let mut out = Vec::with_capacity(n);
    let mut reached = Vec::with_capacity(n);
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut rows = Vec::with_capacity(g_n * am_space.count());
        let mut flags = Vec::with_capacity(g_n * am_space.count());
        for s in 0..g_n {
            for amd in am_space.iter() {
                let mut row: Vec<f64> = others_ty
                    .iter()
                    .map(|tmd| {
                        let mut w = 1.0;
                        for (pos, &j) in others.iter().enumerate() {
                            w *= game.type_prior[tmd[pos]]
                                * tables[j][((s * om) * th_n + tmd[pos]) * a_n + amd[pos]];
                        }
                        w
                    })
                    .collect();
                flags.push(normalize_or_uniform(&mut row));
                rows.push(row);
            }
        }
        out.push(rows);
        reached.push(flags);
    }
    (out, reached)
}

/// Bayes-consistent beliefs for an independent static profile. Unreached
/// cells fall back to the uniform distribution over opponents' types.
pub fn static_beliefs_from_policy(game: &GameSpec, pi: &Policy) -> Result<StaticBeliefs> {
    let tables = independent_tables(pi)?;
    let (tables, _) = static_beliefs_tables(game, tables);
    Ok(StaticBeliefs { tables })
}

fn independent_tables(pi: &Policy) -> Result<&Vec<Vec<f64>>> {
    match pi {
        Policy::Independent(t) => Ok(t),
        Policy::Correlated(_) => Err(Error::Precondition(
            "the static profile check needs an independent policy".into(),
        )),
    }
}

/// Static-profile check for an independent policy: optimality of each
/// agent's whole stationary `(state, type) -> action` table against the
/// profile (interim, per own type), plus Bayes consistency of the supplied
/// beliefs on every reached cell. The belief gap folds into the verdict
/// and is reported in `consistency_gap`.
pub fn check_bme(
    game: &GameSpec,
    pi: &Policy,
    mu: &StaticBeliefs,
    tol: f64,
) -> Result<EquilibriumReport> {
    let tables = independent_tables(pi)?;
    let n = game.n_agents();
    let th_n = game.n_types();
    let cells = game.n_states() * th_n;
    let mut count: u128 = 1;
    for _ in 0..cells {
        count = count
            .checked_mul(game.n_actions() as u128)
            .filter(|&c| c <= DEVIATION_CAP)
            .ok_or(Error::SizeGuard {
                what: "static action-table deviations".into(),
                size: u128::MAX,
                cap: DEVIATION_CAP,
            })?;
        if count > DEVIATION_CAP {
            return Err(Error::SizeGuard {
                what: "static action-table deviations".into(),
                size: count,
                cap: DEVIATION_CAP,
            });
        }
    }

    // Belief consistency on reached cells.
    let (recomputed, reached) = static_beliefs_tables(game, tables);
    if mu.tables.len() != recomputed.len()
        || mu
            .tables
            .iter()
            .zip(&recomputed)
            .any(|(a, b)| a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()))
    {
        return Err(Error::Precondition(
            "static belief table dimensions do not match the game".into(),
        ));
    }
    let mut gap = 0.0f64;
    for i in 0..n {
        for (cell, row) in recomputed[i].iter().enumerate() {
            if !reached[i][cell] {
                continue;
            }
            for (tm, &p) in row.iter().enumerate() {
                let d = (mu.tables[i][cell][tm] - p).abs();
                if d > gap {
                    gap = d;
                }
            }
        }
    }

    // Table-deviation sweep.
    let j_eq: Vec<Vec<f64>> = (0..n)
        .map(|i| static_values_agent(game, tables, i))
        .collect::<Result<_>>()?;
    let dev_space = ProductSpace::uniform(game.n_actions(), cells);
    let trackers: Vec<Result<Tracker>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut tr = Tracker::new();
            let mut work = tables.clone();
            for table in dev_space.iter() {
                work[i] = one_hot_table(game, &table);
                let j_dev = static_values_agent(game, &work, i)?;
                for th in 0..th_n {
                    if game.type_prior[th] <= ON_SUPPORT_TOL {
                        continue;
                    }
                    let gain = j_dev[th] - j_eq[i][th];
                    tr.policy_gain(gain, || DeviationWitness::PolicyTable {
                        agent: i,
                        table: table.clone(),
                    });
                }
            }
            Ok(tr)
        })
        .collect();
    let mut all = Tracker::new();
    for t in trackers {
        all.merge(t?);
    }
    let mut report = all.into_report(tol);
    if gap > tol {
        report.is_equilibrium = false;
    }
    report.consistency_gap = Some(gap);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Static reduction: goal-directed recommendations
// ---------------------------------------------------------------------------

/// Obedience check for a target action distribution read as a
/// recommendation device: an agent told to play `a` at `(state, own type)`
/// updates jointly over opponents' types and recommended actions and must
/// not gain from any substitute action, with play reverting to the target
/// distribution afterwards.
pub fn check_bmce(game: &GameSpec, kappa: &Goal, tol: f64) -> Result<EquilibriumReport> {
    let n = game.n_agents();
    let g_n = game.n_states();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let av_space = game.joint_actions();
    let am_space = ProductSpace::uniform(a_n, n - 1);
    let tv_space = game.joint_types();
    let tvs = tv_space.count();
    let others_ty = BeliefSystem::others_types(game);
    let prior_minus = dynamics::others_type_prior(game);

    // Continuation values per (agent, joint type) under the target play.
    let mut jk = vec![vec![Vec::new(); tvs]; n];
    for tv in 0..tvs {
        let kernel = dynamics::goal_kernel(game, kappa, tv);
        let tvd = tv_space.digits(tv);
        for i in 0..n {
            let mut reward = vec![0.0; g_n];
            for g in 0..g_n {
                for av in 0..av_space.count() {
                    let pk = kappa.prob(game, tv, g, av);
                    if pk != 0.0 {
                        reward[g] += pk * game.reward(i, av, g, 0, tvd[i]);
                    }
                }
            }
            jk[i][tv] = linalg::discounted_value(&kernel, &reward, game.gamma)?;
        }
    }

    let mut all = Tracker::new();
    for i in 0..n {
        let mut tr = Tracker::new();
        for g in 0..g_n {
            for th in 0..th_n {
                if game.type_prior[th] <= ON_SUPPORT_TOL {
                    continue;
                }
                let tv_of_tm: Vec<usize> = (0..others_ty.count())
                    .map(|tm| tv_space.rank(&insert_at(&others_ty.digits(tm), i, th)))
                    .collect();
                for a_i in 0..a_n {
                    // Joint posterior over opponents' (types, actions)
                    // given the own recommendation.
                    let mut weights: Vec<(usize, Vec<usize>, f64)> = Vec::new();
                    let mut mass = 0.0;
                    for (tm, _) in others_ty.iter().enumerate() {
                        let pm = prior_minus[tm];
                        if pm <= 0.0 {
                            continue;
                        }
                        let tv = tv_of_tm[tm];
                        for amd in am_space.iter() {
                            let av = av_space.rank(&insert_at(&amd, i, a_i));
                            let w = pm * kappa.prob(game, tv, g, av);
                            if w > 0.0 {
                                mass += w;
                                weights.push((tv, amd, w));
                            }
                        }
                    }
                    if mass <= ON_SUPPORT_TOL {
                        continue;
                    }
                    let value = |own: usize| -> f64 {
                        let mut v = 0.0;
                        for (tv, amd, w) in &weights {
                            let av2 = av_space.rank(&insert_at(amd, i, own));
                            let mut cont = 0.0;
                            for g2 in 0..g_n {
                                cont += game.transition_prob(g, av2, g2) * jk[i][*tv][g2];
                            }
                            v += w * (game.reward(i, av2, g, 0, th) + game.gamma * cont);
                        }
                        v / mass
                    };
                    let eq_value = value(a_i);
                    for ap in 0..a_n {
                        let gain = value(ap) - eq_value;
                        tr.policy_gain(gain, || DeviationWitness::Recommendation {
                            agent: i,
                            state: g,
                            own_type: th,
                            recommended: a_i,
                            to_action: ap,
                        });
                    }
                }
            }
        }
        all.merge(tr);
    }
    Ok(all.into_report(tol))
}

// ---------------------------------------------------------------------------
// Deviation application and slack certificates
// ---------------------------------------------------------------------------

/// The policy obtained when one agent unilaterally follows a deterministic
/// `(state, signal, type) -> action` table while everyone else plays `pi`.
/// For a correlated policy the deviator still receives its recommendation
/// (which the table may ignore), so mass moves within each joint cell.
pub fn deviated_policy(game: &GameSpec, pi: &Policy, agent: usize, table: &[usize]) -> Policy {
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    match pi {
        Policy::Independent(tables) => {
            let mut out = tables.clone();
            let rows = game.n_states() * om * th_n;
            let mut t = vec![0.0; rows * a_n];
            for g in 0..game.n_states() {
                for w in 0..om {
                    for th in 0..th_n {
                        let a = table[(g * om + w) * th_n + th];
                        t[((g * om + w) * th_n + th) * a_n + a] = 1.0;
                    }
                }
            }
            out[agent] = t;
            Policy::Independent(out)
        }
        Policy::Correlated(tables) => {
            let n = game.n_agents();
            let wv_space = game.joint_batches();
            let wv_n = wv_space.count();
            let av_space = game.joint_actions();
            let av_n = av_space.count();
            let tv_space = game.joint_types();
            let mut out = vec![vec![0.0; tables[0].len()]; tables.len()];
            let mut wv_digits = vec![0; n];
            let mut av_digits = vec![0; n];
            for (tv, rows) in tables.iter().enumerate() {
                let tvd = tv_space.digits(tv);
                for g in 0..game.n_states() {
                    for wv in 0..wv_n {
                        wv_space.digits_into(wv, &mut wv_digits);
                        let forced = table[(g * om + wv_digits[agent]) * th_n + tvd[agent]];
                        for av in 0..av_n {
                            let p = rows[(g * wv_n + wv) * av_n + av];
                            if p == 0.0 {
                                continue;
                            }
                            av_space.digits_into(av, &mut av_digits);
                            let av2 = av_space.rank_with(&av_digits, agent, forced);
                            out[tv][(g * wv_n + wv) * av_n + av2] += p;
                        }
                    }
                }
            }
            Policy::Correlated(out)
        }
    }
}

/// The selection rule obtained when one agent unilaterally follows an
/// alternative `(state, batch, type) -> position` table.
pub fn deviated_selection(
    game: &GameSpec,
    beta: &SelectionRule,
    agent: usize,
    table: &[usize],
) -> SelectionRule {
    let _ = game;
    let mut out = beta.clone();
    out.tables[agent] = table.to_vec();
    out
}

/// The deviating agent's ex-ante discounted reward read off an occupancy
/// measure (own reward evaluated at the own kept signal), prior-averaged
/// over joint types.
fn occupancy_reward(game: &GameSpec, rho: &OccupancyMeasure, agent: usize, d_tv: &[f64]) -> f64 {
    let g_n = game.n_states();
    let av_n = game.joint_actions().count();
    let wk_space = game.principal_batches();
    let ws_n = wk_space.count();
    let tv_space = game.joint_types();
    let own_sig: Vec<usize> = (0..ws_n).map(|ws| wk_space.digits(ws)[agent]).collect();
    let mut total = 0.0;
    for (tv, d) in d_tv.iter().enumerate() {
        if *d <= 0.0 {
            continue;
        }
        let th = tv_space.digits(tv)[agent];
        let table = &rho.tables[tv];
        for g in 0..g_n {
            for av in 0..av_n {
                for ws in 0..ws_n {
                    let base = ((g * av_n + av) * ws_n + ws) * ws_n;
                    let mut mass = 0.0;
                    for wk in 0..ws_n {
                        mass += table[base + wk];
                    }
                    if mass != 0.0 {
                        total += d * mass * game.reward(agent, av, g, own_sig[ws], th);
                    }
                }
            }
        }
    }
    total
}

/// The same ex-ante value through the stationary chain: per joint type,
/// solve the discounted chain for the agent's reward under the profile and
/// average over the prior and the initial state distribution.
fn profile_value(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    agent: usize,
    d_tv: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for (tv, d) in d_tv.iter().enumerate() {
        if *d <= 0.0 {
            continue;
        }
        let (kernel, rewards) = dynamics::kernel_and_rewards(game, alpha, beta, pi, tv);
        let j = linalg::discounted_value(&kernel, &rewards[agent], game.gamma)?;
        let mut avg = 0.0;
        for g in 0..game.n_states() {
            avg += game.state_init[g] * j[g];
        }
        total += d * avg;
    }
    Ok(total)
}

/// Slack certificate for a profile under an obedient selection rule: for
/// each supplied deviation, the ex-ante value the deviator forgoes,
/// computed on occupancy measures, with the deviating measure's total mass
/// as the dual weight. `lagrangian_value` re-derives every slack through
/// the stationary-chain route and aggregates the (identically zero)
/// discrepancies, so a nonzero value flags numerical disagreement between
/// the two accounts rather than an incentive fact.
pub fn compute_slacks(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    _mu: &BeliefSystem,
    deviations: &[Deviation],
) -> Result<SlackCertificate> {
    if !beta.is_obedient(game) {
        return Err(Error::Precondition(
            "slack certificates need an obedient selection rule".into(),
        ));
    }
    let n = game.n_agents();
    let d_tv = dynamics::joint_type_prior(game);
    let rho_eq = occupancy_from_profile(game, alpha, beta, pi)?;
    let occ_eq: Vec<f64> = (0..n)
        .map(|i| occupancy_reward(game, &rho_eq, i, &d_tv))
        .collect();
    let mut val_eq = Vec::with_capacity(n);
    for i in 0..n {
        val_eq.push(profile_value(game, alpha, beta, pi, i, &d_tv)?);
    }
    let rows: Result<Vec<(Deviation, f64, f64, f64)>> = deviations
        .par_iter()
        .map(|dev| {
            let agent = dev.agent();
            let (beta_dev, pi_dev) = match dev {
                Deviation::Policy { agent, table } => {
                    (beta.clone(), deviated_policy(game, pi, *agent, table))
                }
                Deviation::Selection { agent, table } => {
                    (deviated_selection(game, beta, *agent, table), pi.clone())
                }
            };
            let rho_dev = occupancy_from_profile(game, alpha, &beta_dev, &pi_dev)?;
            let occ_dev = occupancy_reward(game, &rho_dev, agent, &d_tv);
            let val_dev = profile_value(game, alpha, &beta_dev, &pi_dev, agent, &d_tv)?;
            let slack = occ_eq[agent] - occ_dev;
            let slack_chain = val_eq[agent] - val_dev;
            let dual_weight: f64 = d_tv
                .iter()
                .enumerate()
                .map(|(tv, d)| d * rho_dev.mass(tv))
                .sum();
            Ok((
                dev.clone(),
                slack,
                dual_weight,
                dual_weight * (slack - slack_chain),
            ))
        })
        .collect();
    let mut delta = Vec::new();
    let mut zeta = Vec::new();
    let mut lagrangian_value = 0.0;
    for (deviation, slack, dual_weight, contrib) in rows? {
        lagrangian_value += contrib;
        let entry = SlackEntry {
            deviation,
            slack,
            dual_weight,
        };
        match entry.deviation {
            Deviation::Policy { .. } => delta.push(entry),
            Deviation::Selection { .. } => zeta.push(entry),
        }
    }
    Ok(SlackCertificate {
        delta,
        zeta,
        lagrangian_value,
    })
}

/// Signed total discrepancy between each stored interim signal value and
/// its reassembly from the perceived action distribution and the interim
/// action values, summed over agents, states, on-support own types, and
/// on-support delivered signals (weighted by the delivery probability).
/// Vanishes, up to numerical error, for profiles whose values are
/// internally consistent under an obedient selection rule; the design
/// layer's zero-gap certificate is this quantity.
pub fn oil_objective_gap(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    mu: &BeliefSystem,
    vb: &ValueBundle,
) -> f64 {
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let av_n = game.joint_actions().count();
    let mut z = 0.0;
    for i in 0..game.n_agents() {
        let marg = own_signal_marginal(game, alpha, i);
        for g in 0..g_n {
            for th in 0..th_n {
                if game.type_prior[th] <= ON_SUPPORT_TOL {
                    continue;
                }
                for wk in 0..om {
                    let weight = marg[(g * om + wk) * th_n + th];
                    if weight <= ON_SUPPORT_TOL {
                        continue;
                    }
                    let joint = interim_joint(game, beta, pi, mu, i, g, wk, th);
                    let mut mix = 0.0;
                    for av in 0..av_n {
                        let p = joint[wk * av_n + av];
                        if p != 0.0 {
                            mix += p * vb.q_at(game, i, g, wk, wk, th, av);
                        }
                    }
                    z += weight * (vb.v_at(game, i, g, wk, wk, th) - mix);
                }
            }
        }
    }
    z
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
