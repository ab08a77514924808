//! Beliefs, values, occupancy measures, and windowed sequence distributions
//! induced by a signaling rule and a behavior profile.
//!
//! Values are computed per joint type: conditional on the full type vector
//! the play is a finite Markov chain, and interim tables mix the per-type
//! chain values under the agent's posterior. This keeps the reward totals
//! computed from values and from occupancy measures in exact agreement
//! (types persist across periods and are never redrawn).

use crate::error::{Error, Result};
use crate::game::{BeliefSystem, GameSpec, Goal, Policy, SelectionRule, SignalingRule};
use crate::linalg;
use crate::space::{insert_at, normalize_or_uniform, ProductSpace};

/// Hard limit on materialized sequence spaces.
pub const SEQUENCE_CAP: u128 = 1_000_000;

fn guard_sequence_size(node: u128, periods: usize, what: &str) -> Result<()> {
    let mut total: u128 = 1;
    for _ in 0..periods {
        total = total.checked_mul(node).ok_or(Error::SizeGuard {
            what: what.into(),
            size: u128::MAX,
            cap: SEQUENCE_CAP,
        })?;
    }
    if total > SEQUENCE_CAP {
        return Err(Error::SizeGuard {
            what: what.into(),
            size: total,
            cap: SEQUENCE_CAP,
        });
    }
    Ok(())
}

/// Chain values and interim tables for one behavior profile.
#[derive(Debug, Clone)]
pub struct ValueBundle {
    /// `j_fix[agent][θ⃗ rank][g]`: value of the fixed-joint-type chain.
    pub j_fix: Vec<Vec<Vec<f64>>>,
    /// `v[agent][((g·Ω + kept)·Ω + ω^k)·Θ + θ]`: interim value after keeping
    /// signal `kept`, having received principal signal `ω^k`.
    pub v: Vec<Vec<f64>>,
    /// `j[agent][g·Θ + θ]`: pre-signal value.
    pub j: Vec<Vec<f64>>,
    /// `q[agent][(((g·Ω + kept)·Ω + ω^k)·Θ + θ)·A^n + a⃗]`: interim value of a
    /// joint action.
    pub q: Vec<Vec<f64>>,
    /// Sup-norm Bellman residual of the returned chain values.
    pub residual: f64,
    /// Largest number of backups used by any chain.
    pub iterations: usize,
}

impl ValueBundle {
    pub fn v_at(&self, game: &GameSpec, agent: usize, g: usize, kept: usize, wk: usize, th: usize) -> f64 {
        self.v[agent][((g * game.n_signals() + kept) * game.n_signals() + wk) * game.n_types() + th]
    }
    pub fn j_at(&self, game: &GameSpec, agent: usize, g: usize, th: usize) -> f64 {
        self.j[agent][g * game.n_types() + th]
    }
    pub fn q_at(
        &self,
        game: &GameSpec,
        agent: usize,
        g: usize,
        kept: usize,
        wk: usize,
        th: usize,
        av: usize,
    ) -> f64 {
        self.q[agent][(((g * game.n_signals() + kept) * game.n_signals() + wk) * game.n_types()
            + th)
            * game.joint_actions().count()
            + av]
    }
}

/// Discounted visitation measure over `(g, a⃗, ω⃗, ω⃗^k)`, one table per joint
/// type; each table has total mass `1/(1−γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    /// `tables[θ⃗ rank][((g·A^n + a⃗)·Ω^n + ω⃗)·Ω^n + ω⃗^k]`.
    pub tables: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl OccupancyMeasure {
    pub fn idx(game: &GameSpec, g: usize, av: usize, ws: usize, wk: usize) -> usize {
        let wv = game.principal_batches().count();
        ((g * game.joint_actions().count() + av) * wv + ws) * wv + wk
    }
    pub fn at(&self, game: &GameSpec, tv: usize, g: usize, av: usize, ws: usize, wk: usize) -> f64 {
        self.tables[tv][Self::idx(game, g, av, ws, wk)]
    }
    pub fn mass(&self, tv: usize) -> f64 {
        self.tables[tv].iter().sum()
    }
    /// Marginal over kept-signal vectors: `[(g·A^n + a⃗)·Ω^n + ω⃗^k]`.
    pub fn marginal_gak(&self, game: &GameSpec, tv: usize) -> Vec<f64> {
        let wv = game.principal_batches().count();
        let av_n = game.joint_actions().count();
        let mut out = vec![0.0; game.n_states() * av_n * wv];
        for g in 0..game.n_states() {
            for av in 0..av_n {
                for ws in 0..wv {
                    for wk in 0..wv {
                        out[(g * av_n + av) * wv + wk] += self.at(game, tv, g, av, ws, wk);
                    }
                }
            }
        }
        out
    }
}

/// Discounted visitation of `(g, a⃗)` under a goal `κ`, one table per joint
/// type.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalOccupancy {
    /// `tables[θ⃗ rank][g·A^n + a⃗]`.
    pub tables: Vec<Vec<f64>>,
}

impl GoalOccupancy {
    pub fn at(&self, game: &GameSpec, tv: usize, g: usize, av: usize) -> f64 {
        self.tables[tv][g * game.joint_actions().count() + av]
    }
    pub fn mass(&self, tv: usize) -> f64 {
        self.tables[tv].iter().sum()
    }
}

/// Joint distribution of kept-signal vectors given state and principal draw:
/// `S[(g·Ω^n + ω⃗^k)·Ω^n + ω⃗]`, marginalizing the non-principal sources.
pub(crate) fn kept_signal_mix(game: &GameSpec, beta: &SelectionRule, tv: usize) -> Vec<f64> {
    let wv = game.principal_batches().count();
    let tvd = game.joint_types().digits(tv);
    let wk_space = game.principal_batches();
    let ob = game.others_batches();
    let mut out = vec![0.0; game.n_states() * wv * wv];
    let mut wk_digits = vec![0; game.n_agents()];
    let mut draw = vec![0; ob.arity()];
    for g in 0..game.n_states() {
        for wk in 0..wv {
            wk_space.digits_into(wk, &mut wk_digits);
            for d in 0..ob.count() {
                let p = game.nonprincipal_dist[d];
                if p == 0.0 {
                    continue;
                }
                ob.digits_into(d, &mut draw);
                let sel = beta.selected(game, &tvd, g, &wk_digits, &draw);
                let ws = wk_space.rank(&sel);
                out[(g * wv + wk) * wv + ws] += p;
            }
        }
    }
    out
}

/// State-to-state transition matrix (row-major `G×G`) induced by a profile
/// at one joint type, marginalizing signals and actions.
pub fn induced_kernel(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    tv: usize,
) -> Vec<f64> {
    let (kernel, _) = kernel_and_rewards(game, alpha, beta, pi, tv);
    kernel
}

/// Induced kernel together with each agent's expected one-period reward per
/// state, for one joint type.
pub(crate) fn kernel_and_rewards(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    tv: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let g_n = game.n_states();
    let n = game.n_agents();
    let wv = game.principal_batches().count();
    let av_n = game.joint_actions().count();
    let tvd = game.joint_types().digits(tv);
    let mix = kept_signal_mix(game, beta, tv);
    let mut kernel = vec![0.0; g_n * g_n];
    let mut rbar = vec![vec![0.0; g_n]; n];
    let wk_space = game.principal_batches();
    let av_space = game.joint_actions();
    let mut ws_digits = vec![0; n];
    let mut av_digits = vec![0; n];
    for g in 0..g_n {
        for wk in 0..wv {
            let pa = alpha.prob(game, tv, g, wk);
            if pa == 0.0 {
                continue;
            }
            for ws in 0..wv {
                let ps = mix[(g * wv + wk) * wv + ws];
                if ps == 0.0 {
                    continue;
                }
                wk_space.digits_into(ws, &mut ws_digits);
                for av in 0..av_n {
                    av_space.digits_into(av, &mut av_digits);
                    let pp = pi.joint_prob_digits(game, &tvd, g, &ws_digits, &av_digits);
                    if pp == 0.0 {
                        continue;
                    }
                    let p = pa * ps * pp;
                    for g2 in 0..g_n {
                        kernel[g * g_n + g2] += p * game.transition_prob(g, av, g2);
                    }
                    for i in 0..n {
                        rbar[i][g] += p * game.reward(i, av, g, ws_digits[i], tvd[i]);
                    }
                }
            }
        }
    }
    (kernel, rbar)
}

/// Interim beliefs over the other agents' principal signals and types by
/// Bayes' rule from the signaling rule and the type prior; zero-probability
/// conditioning cells fall back to the uniform distribution and are flagged.
pub fn update_beliefs(game: &GameSpec, alpha: &SignalingRule) -> BeliefSystem {
    let n = game.n_agents();
    let others_sig = BeliefSystem::others_signals(game);
    let others_ty = BeliefSystem::others_types(game);
    let inner = others_sig.count() * others_ty.count();
    let mut beliefs = vec![Vec::new(); n];
    let mut fallback_cells = Vec::new();
    let wk_space = game.principal_batches();
    let tv_space = game.joint_types();
    for i in 0..n {
        let mut table = vec![0.0; game.n_states() * game.n_signals() * game.n_types() * inner];
        for g in 0..game.n_states() {
            for w in 0..game.n_signals() {
                for th in 0..game.n_types() {
                    let cell = (g * game.n_signals() + w) * game.n_types() + th;
                    let row = &mut table[cell * inner..(cell + 1) * inner];
                    for (sm, sig_minus) in others_sig.iter().enumerate() {
                        let wkv = wk_space.rank(&insert_at(&sig_minus, i, w));
                        for (tm, ty_minus) in others_ty.iter().enumerate() {
                            let tv = tv_space.rank(&insert_at(&ty_minus, i, th));
                            let prior: f64 =
                                ty_minus.iter().map(|&t| game.type_prior[t]).product();
                            row[sm * others_ty.count() + tm] =
                                alpha.prob(game, tv, g, wkv) * prior;
                        }
                    }
                    if !normalize_or_uniform(row) {
                        fallback_cells.push((i, g, w, th));
                    }
                }
            }
        }
        beliefs[i] = (0..game.n_states() * game.n_signals() * game.n_types())
            .map(|cell| table[cell * inner..(cell + 1) * inner].to_vec())
            .collect();
    }
    BeliefSystem {
        beliefs,
        fallback_cells,
    }
}

/// Marginal of a belief system over the other agents' types:
/// `[(g·Ω + ω^k)·Θ + θ][θ⃗_{-i} rank]`.
pub(crate) fn belief_type_marginal(game: &GameSpec, mu: &BeliefSystem, agent: usize) -> Vec<Vec<f64>> {
    let others_sig = BeliefSystem::others_signals(game);
    let others_ty = BeliefSystem::others_types(game);
    mu.beliefs[agent]
        .iter()
        .map(|row| {
            let mut out = vec![0.0; others_ty.count()];
            for sm in 0..others_sig.count() {
                for tm in 0..others_ty.count() {
                    out[tm] += row[sm * others_ty.count() + tm];
                }
            }
            out
        })
        .collect()
}

/// Product prior over the other agents' type vectors.
pub(crate) fn others_type_prior(game: &GameSpec) -> Vec<f64> {
    BeliefSystem::others_types(game)
        .iter()
        .map(|d| d.iter().map(|&t| game.type_prior[t]).product())
        .collect()
}

/// Product prior over full joint type vectors.
pub(crate) fn joint_type_prior(game: &GameSpec) -> Vec<f64> {
    game.joint_types()
        .iter()
        .map(|d| d.iter().map(|&t| game.type_prior[t]).product())
        .collect()
}

fn value_iteration_budget(game: &GameSpec, tol: f64) -> usize {
    let r_max = game.r_max();
    if game.gamma == 0.0 || r_max == 0.0 {
        return 2;
    }
    let arg = tol * (1.0 - game.gamma) / r_max;
    if arg >= 1.0 {
        return 2;
    }
    (arg.ln() / game.gamma.ln()).ceil() as usize + 16
}

/// Solve the chain values by successive approximation from zero and assemble
/// the interim tables by mixing over beliefs (for `v`, `q`) and the type
/// prior (for `j`).
pub fn compute_values(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    mu: &BeliefSystem,
    tol: f64,
) -> Result<ValueBundle> {
    if !(tol > 0.0) {
        return Err(Error::Precondition("tol must be positive".into()));
    }
    let n = game.n_agents();
    let g_n = game.n_states();
    let tvs = game.joint_types().count();
    let budget = value_iteration_budget(game, tol);

    let mut kernels = Vec::with_capacity(tvs);
    let mut rbars = Vec::with_capacity(tvs);
    for tv in 0..tvs {
        let (k, r) = kernel_and_rewards(game, alpha, beta, pi, tv);
        kernels.push(k);
        rbars.push(r);
    }

    let mut j_fix = vec![vec![vec![0.0; g_n]; tvs]; n];
    let mut iterations = 0usize;
    let mut residual = 0.0f64;
    for i in 0..n {
        for tv in 0..tvs {
            let kernel = &kernels[tv];
            let rbar = &rbars[tv][i];
            let mut cur = vec![0.0; g_n];
            let mut used = 0;
            loop {
                let next = backup(kernel, rbar, &cur, game.gamma);
                used += 1;
                let change = crate::space::sup_diff(&next, &cur);
                cur = next;
                if change <= tol {
                    break;
                }
                if used >= budget {
                    return Err(Error::NonConvergence {
                        what: "value iteration".into(),
                        iterations: used,
                        residual: change,
                    });
                }
            }
            let check = backup(kernel, rbar, &cur, game.gamma);
            residual = residual.max(crate::space::sup_diff(&check, &cur));
            iterations = iterations.max(used);
            j_fix[i][tv] = cur;
        }
    }

    let om = game.n_signals();
    let th_n = game.n_types();
    let av_n = game.joint_actions().count();
    let av_space = game.joint_actions();
    let others_ty = BeliefSystem::others_types(game);
    let others_sig = BeliefSystem::others_signals(game);
    let ob = game.others_batches();
    let tv_space = game.joint_types();

    let mut v = vec![vec![0.0; g_n * om * om * th_n]; n];
    let mut q = vec![vec![0.0; g_n * om * om * th_n * av_n]; n];
    let mut j = vec![vec![0.0; g_n * th_n]; n];

    for i in 0..n {
        let btm = belief_type_marginal(game, mu, i);
        for g in 0..g_n {
            for kept in 0..om {
                for wk in 0..om {
                    for th in 0..th_n {
                        let cell = ((g * om + kept) * om + wk) * th_n + th;
                        // Interim action values: reward plus discounted
                        // continuation of the per-type chain, mixed over the
                        // posterior on the others' types.
                        for av in 0..av_n {
                            let mut cont = 0.0;
                            for (tm, w_tm) in btm[(g * om + wk) * th_n + th].iter().enumerate() {
                                if *w_tm == 0.0 {
                                    continue;
                                }
                                let tv = tv_space.rank(&insert_at(&others_ty.digits(tm), i, th));
                                let mut acc = 0.0;
                                for g2 in 0..g_n {
                                    acc += game.transition_prob(g, av, g2) * j_fix[i][tv][g2];
                                }
                                cont += w_tm * acc;
                            }
                            q[i][cell * av_n + av] = game.reward(i, av, g, kept, th)
                                + game.gamma * cont;
                        }
                        // Interim state-signal values: expectation of the
                        // joint action under the posterior over the others'
                        // signals, types, and kept signals.
                        let belief = mu.belief(game, i, g, wk, th);
                        let mut val = 0.0;
                        for (sm, sig_minus) in others_sig.iter().enumerate() {
                            for (tm, ty_minus) in others_ty.iter().enumerate() {
                                let w_b = belief[sm * others_ty.count() + tm];
                                if w_b == 0.0 {
                                    continue;
                                }
                                let tvd = insert_at(&ty_minus, i, th);
                                for d in 0..ob.count() {
                                    let pd = game.nonprincipal_dist[d];
                                    if pd == 0.0 {
                                        continue;
                                    }
                                    let draw = ob.digits(d);
                                    let mut kept_vec = vec![0; n];
                                    kept_vec[i] = kept;
                                    for jj in 0..n {
                                        if jj == i {
                                            continue;
                                        }
                                        let wj = sig_minus[if jj < i { jj } else { jj - 1 }];
                                        let batch = game.agent_batch_digits(jj, wj, &draw);
                                        let pos = beta.position(
                                            game,
                                            jj,
                                            g,
                                            game.agent_batches().rank(&batch),
                                            tvd[jj],
                                        );
                                        kept_vec[jj] = batch[pos];
                                    }
                                    for av in 0..av_n {
                                        let pp = pi.joint_prob_digits(
                                            game,
                                            &tvd,
                                            g,
                                            &kept_vec,
                                            &av_space.digits(av),
                                        );
                                        if pp > 0.0 {
                                            val += w_b * pd * pp * q[i][cell * av_n + av];
                                        }
                                    }
                                }
                            }
                        }
                        v[i][cell] = val;
                    }
                }
            }
        }
        // Pre-signal values: prior expectation over the others' types, the
        // principal draw, and the own batch selection.
        let prior_minus = others_type_prior(game);
        let wk_space = game.principal_batches();
        for g in 0..g_n {
            for th in 0..th_n {
                let mut val = 0.0;
                for (tm, pm) in prior_minus.iter().enumerate() {
                    if *pm == 0.0 {
                        continue;
                    }
                    let tvd = insert_at(&others_ty.digits(tm), i, th);
                    let tv = tv_space.rank(&tvd);
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
                            let batch = game.agent_batch_digits(i, wk_digits[i], &draw);
                            let pos = beta.position(
                                game,
                                i,
                                g,
                                game.agent_batches().rank(&batch),
                                th,
                            );
                            let kept = batch[pos];
                            val += pm
                                * pa
                                * pd
                                * v[i][((g * om + kept) * om + wk_digits[i]) * th_n + th];
                        }
                    }
                }
                j[i][g * th_n + th] = val;
            }
        }
    }

    Ok(ValueBundle {
        j_fix,
        v,
        j,
        q,
        residual,
        iterations,
    })
}

fn backup(kernel: &[f64], rbar: &[f64], cur: &[f64], gamma: f64) -> Vec<f64> {
    let g_n = cur.len();
    (0..g_n)
        .map(|g| {
            let mut acc = rbar[g];
            for g2 in 0..g_n {
                acc += gamma * kernel[g * g_n + g2] * cur[g2];
            }
            acc
        })
        .collect()
}

/// Exact discounted occupancy measure of a profile, one table per joint
/// type, from a direct Bellman-flow linear solve.
pub fn occupancy_from_profile(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
) -> Result<OccupancyMeasure> {
    let g_n = game.n_states();
    let wv = game.principal_batches().count();
    let av_n = game.joint_actions().count();
    let tvs = game.joint_types().count();
    let av_space = game.joint_actions();
    let wk_space = game.principal_batches();
    let mut tables = Vec::with_capacity(tvs);
    for tv in 0..tvs {
        let tvd = game.joint_types().digits(tv);
        let kernel = induced_kernel(game, alpha, beta, pi, tv);
        let nu = linalg::discounted_flow(&kernel, &game.state_init, game.gamma)?;
        let mix = kept_signal_mix(game, beta, tv);
        let mut table = vec![0.0; g_n * av_n * wv * wv];
        let mut ws_digits = vec![0; game.n_agents()];
        let mut av_digits = vec![0; game.n_agents()];
        for g in 0..g_n {
            if nu[g] == 0.0 {
                continue;
            }
            for wk in 0..wv {
                let pa = alpha.prob(game, tv, g, wk);
                if pa == 0.0 {
                    continue;
                }
                for ws in 0..wv {
                    let ps = mix[(g * wv + wk) * wv + ws];
                    if ps == 0.0 {
                        continue;
                    }
                    wk_space.digits_into(ws, &mut ws_digits);
                    for av in 0..av_n {
                        av_space.digits_into(av, &mut av_digits);
                        let pp = pi.joint_prob_digits(game, &tvd, g, &ws_digits, &av_digits);
                        if pp == 0.0 {
                            continue;
                        }
                        table[OccupancyMeasure::idx(game, g, av, ws, wk)] =
                            nu[g] * pa * ps * pp;
                    }
                }
            }
        }
        tables.push(table);
    }
    Ok(OccupancyMeasure {
        tables,
        gamma: game.gamma,
    })
}

/// Worst violation of the signaling-consistent flow identity: mass at
/// `(g, ω⃗^k)` must equal `α(ω⃗^k|g,θ⃗)` times initial mass plus discounted
/// inflow. Zero (up to solver precision) for measures of actual profiles.
pub fn occupancy_flow_residual(game: &GameSpec, rho: &OccupancyMeasure, alpha: &SignalingRule) -> f64 {
    let g_n = game.n_states();
    let wv = game.principal_batches().count();
    let av_n = game.joint_actions().count();
    let mut worst = 0.0f64;
    for (tv, table) in rho.tables.iter().enumerate() {
        // State-action marginal drives the inflow.
        let mut ga = vec![0.0; g_n * av_n];
        for g in 0..g_n {
            for av in 0..av_n {
                for ws in 0..wv {
                    for wk in 0..wv {
                        ga[g * av_n + av] += table[OccupancyMeasure::idx(game, g, av, ws, wk)];
                    }
                }
            }
        }
        for g in 0..g_n {
            let mut inflow = 0.0;
            for gp in 0..g_n {
                for av in 0..av_n {
                    inflow += ga[gp * av_n + av] * game.transition_prob(gp, av, g);
                }
            }
            let state_mass = game.state_init[g] + rho.gamma * inflow;
            for wk in 0..wv {
                let mut lhs = 0.0;
                for av in 0..av_n {
                    for ws in 0..wv {
                        lhs += table[OccupancyMeasure::idx(game, g, av, ws, wk)];
                    }
                }
                let rhs = alpha.prob(game, tv, g, wk) * state_mass;
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    worst
}

/// Normalized action kernel of an occupancy measure:
/// `π(a⃗ | g, ω⃗^k, θ⃗) = ρ(g, a⃗, ω⃗^k)/Σ_{a⃗′} ρ`, as a correlated policy over
/// kept signals (the measure's principal draw doubles as the kept vector).
/// Unvisited `(θ⃗, g, ω⃗^k)` cells get the uniform row and are returned as
/// flags.
pub fn policy_from_occupancy(
    game: &GameSpec,
    rho: &OccupancyMeasure,
) -> (Policy, Vec<(usize, usize, usize)>) {
    let g_n = game.n_states();
    let wv = game.principal_batches().count();
    let av_n = game.joint_actions().count();
    let mut tables = Vec::with_capacity(rho.tables.len());
    let mut flagged = Vec::new();
    for (tv, table) in rho.tables.iter().enumerate() {
        let mut out = vec![0.0; g_n * wv * av_n];
        for g in 0..g_n {
            for wk in 0..wv {
                let row = &mut out[(g * wv + wk) * av_n..(g * wv + wk + 1) * av_n];
                for av in 0..av_n {
                    let mut acc = 0.0;
                    for ws in 0..wv {
                        acc += table[OccupancyMeasure::idx(game, g, av, ws, wk)];
                    }
                    row[av] = acc;
                }
                if !normalize_or_uniform(row) {
                    flagged.push((tv, g, wk));
                }
            }
        }
        tables.push(out);
    }
    (Policy::Correlated(tables), flagged)
}

/// Per-joint-type kernel `T^κ(g′|g) = Σ_{a⃗} κ(a⃗|g,θ⃗)·T(g′|g,a⃗)`.
pub(crate) fn goal_kernel(game: &GameSpec, kappa: &Goal, tv: usize) -> Vec<f64> {
    let g_n = game.n_states();
    let av_n = game.joint_actions().count();
    let mut kernel = vec![0.0; g_n * g_n];
    for g in 0..g_n {
        for av in 0..av_n {
            let p = kappa.prob(game, tv, g, av);
            if p == 0.0 {
                continue;
            }
            for g2 in 0..g_n {
                kernel[g * g_n + g2] += p * game.transition_prob(g, av, g2);
            }
        }
    }
    kernel
}

/// Occupancy of `(g, a⃗)` if play followed the goal `κ` exactly, per joint
/// type, discounted by γ.
pub fn goal_occupancy(game: &GameSpec, kappa: &Goal) -> Result<GoalOccupancy> {
    let g_n = game.n_states();
    let av_n = game.joint_actions().count();
    let tvs = game.joint_types().count();
    let mut tables = Vec::with_capacity(tvs);
    for tv in 0..tvs {
        let kernel = goal_kernel(game, kappa, tv);
        let nu = linalg::discounted_flow(&kernel, &game.state_init, game.gamma)?;
        let mut table = vec![0.0; g_n * av_n];
        for g in 0..g_n {
            for av in 0..av_n {
                table[g * av_n + av] = nu[g] * kappa.prob(game, tv, g, av);
            }
        }
        tables.push(table);
    }
    Ok(GoalOccupancy { tables })
}

/// Discounted distribution over fixed-length play windows.
///
/// A window of length `t` records `t + 1` complete period tuples
/// `(g, ω⃗^k, ω⃗, a⃗)`. Weights sum start times `τ ∈ {0, t+1, 2(t+1), …}` up
/// to `t_max` with discount `γ^τ`, so windows tile the timeline and
/// window-reward totals reproduce occupancy-reward totals up to truncation.
#[derive(Debug, Clone)]
pub struct TruncatedSequenceDistribution {
    pub t: usize,
    pub t_max: usize,
    /// `weights[θ⃗ rank][sequence rank]`.
    pub weights: Vec<Vec<f64>>,
    /// Digits per period: `[g, ω⃗^k rank, ω⃗ rank, a⃗ rank]`, period-major.
    pub seq_space: ProductSpace,
    beliefs: BeliefSystem,
    /// `node_probs[agent][θ⃗][((g·Ω + ω^k)·Ω + ω)·A^n + a⃗]`: per-period
    /// probability of one agent's observation given the state.
    node_probs: Vec<Vec<Vec<f64>>>,
    /// `rbar[agent][θ⃗][g]`: expected one-period reward per state.
    rbar: Vec<Vec<Vec<f64>>>,
    /// `kernels[θ⃗]`: induced state kernel.
    kernels: Vec<Vec<f64>>,
}

/// Build the window distribution for windows of `t + 1` periods, truncated
/// at start time `t_max`.
pub fn truncated_sequential_occupancy(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    mu: &BeliefSystem,
    t: usize,
    t_max: usize,
) -> Result<TruncatedSequenceDistribution> {
    if t_max < t {
        return Err(Error::Precondition(format!(
            "t_max {t_max} smaller than window length {t}"
        )));
    }
    let g_n = game.n_states();
    let wv = game.principal_batches().count();
    let av_n = game.joint_actions().count();
    let node = (g_n * wv * wv * av_n) as u128;
    guard_sequence_size(node, t + 1, "sequence space")?;
    let mut dims = Vec::with_capacity(4 * (t + 1));
    for _ in 0..=t {
        dims.extend_from_slice(&[g_n, wv, wv, av_n]);
    }
    let seq_space = ProductSpace::new(dims);

    let tvs = game.joint_types().count();
    let n = game.n_agents();
    let mut kernels = Vec::with_capacity(tvs);
    let mut rbar = vec![Vec::with_capacity(tvs); n];
    let mut mixes = Vec::with_capacity(tvs);
    let mut pi_dense = Vec::with_capacity(tvs);
    for tv in 0..tvs {
        let (k, r) = kernel_and_rewards(game, alpha, beta, pi, tv);
        kernels.push(k);
        for (i, ri) in r.into_iter().enumerate() {
            rbar[i].push(ri);
        }
        mixes.push(kept_signal_mix(game, beta, tv));
        let tvd = game.joint_types().digits(tv);
        let mut dense = vec![0.0; g_n * wv * av_n];
        for g in 0..g_n {
            for ws in 0..wv {
                let ws_digits = game.principal_batches().digits(ws);
                for av in 0..av_n {
                    dense[(g * wv + ws) * av_n + av] = pi.joint_prob_digits(
                        game,
                        &tvd,
                        g,
                        &ws_digits,
                        &game.joint_actions().digits(av),
                    );
                }
            }
        }
        pi_dense.push(dense);
    }

    let stride = t + 1;
    let mut weights = Vec::with_capacity(tvs);
    for tv in 0..tvs {
        // Discounted mass over window-start states.
        let mut starts = vec![0.0; g_n];
        let mut p = game.state_init.clone();
        for tau in 0..=t_max {
            if tau % stride == 0 {
                let disc = game.gamma.powi(tau as i32);
                for g in 0..g_n {
                    starts[g] += disc * p[g];
                }
            }
            if tau < t_max {
                if game.gamma == 0.0 && tau >= 1 {
                    break;
                }
                let mut next = vec![0.0; g_n];
                for g in 0..g_n {
                    if p[g] == 0.0 {
                        continue;
                    }
                    for g2 in 0..g_n {
                        next[g2] += p[g] * kernels[tv][g * g_n + g2];
                    }
                }
                p = next;
            }
        }
        let mut table = vec![0.0; seq_space.count()];
        let mut digits = vec![0; seq_space.arity()];
        for h in 0..seq_space.count() {
            seq_space.digits_into(h, &mut digits);
            let mut w = starts[digits[0]];
            for s in 0..=t {
                if w == 0.0 {
                    break;
                }
                let (g, wk, ws, av) = (
                    digits[4 * s],
                    digits[4 * s + 1],
                    digits[4 * s + 2],
                    digits[4 * s + 3],
                );
                w *= alpha.prob(game, tv, g, wk)
                    * mixes[tv][(g * wv + wk) * wv + ws]
                    * pi_dense[tv][(g * wv + ws) * av_n + av];
                if s < t {
                    w *= game.transition_prob(g, av, digits[4 * (s + 1)]);
                }
            }
            table[h] = w;
        }
        weights.push(table);
    }

    // Per-agent per-period observation probabilities, for the windowed
    // evaluators.
    let ob = game.others_batches();
    let mut node_probs = vec![Vec::with_capacity(tvs); n];
    for tv in 0..tvs {
        let tvd = game.joint_types().digits(tv);
        for i in 0..n {
            let mut dense = vec![0.0; g_n * game.n_signals() * game.n_signals() * av_n];
            for g in 0..g_n {
                for wkv in 0..wv {
                    let pa = alpha.prob(game, tv, g, wkv);
                    if pa == 0.0 {
                        continue;
                    }
                    let wk_digits = game.principal_batches().digits(wkv);
                    for d in 0..ob.count() {
                        let pd = game.nonprincipal_dist[d];
                        if pd == 0.0 {
                            continue;
                        }
                        let draw = ob.digits(d);
                        let sel = beta.selected(game, &tvd, g, &wk_digits, &draw);
                        let ws = game.principal_batches().rank(&sel);
                        for av in 0..av_n {
                            let pp = pi_dense[tv][(g * wv + ws) * av_n + av];
                            if pp == 0.0 {
                                continue;
                            }
                            dense[((g * game.n_signals() + wk_digits[i]) * game.n_signals()
                                + sel[i])
                                * av_n
                                + av] += pa * pd * pp;
                        }
                    }
                }
            }
            node_probs[i].push(dense);
        }
    }

    Ok(TruncatedSequenceDistribution {
        t,
        t_max,
        weights,
        seq_space,
        beliefs: mu.clone(),
        node_probs,
        rbar,
        kernels,
    })
}

impl TruncatedSequenceDistribution {
    /// Marginal of the window distribution over the first period's
    /// `(g, ω⃗^k)`, as a `[g·Ω^n + ω⃗^k]` table.
    pub fn start_marginal(&self, game: &GameSpec, tv: usize) -> Vec<f64> {
        let wv = game.principal_batches().count();
        let mut out = vec![0.0; game.n_states() * wv];
        let mut digits = vec![0; self.seq_space.arity()];
        for (h, &w) in self.weights[tv].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            self.seq_space.digits_into(h, &mut digits);
            out[digits[0] * wv + digits[1]] += w;
        }
        out
    }

    /// Discounted window reward of one agent:
    /// `Σ_h λ_t(h|θ⃗) Σ_{s=0}^{t} γ^s R_i(a⃗_s, g_s, ω_{i,s}|θ_i)`.
    pub fn windowed_reward_total(&self, game: &GameSpec, agent: usize, tv: usize) -> f64 {
        let th = game.joint_types().digits(tv)[agent];
        let mut digits = vec![0; self.seq_space.arity()];
        let mut total = 0.0;
        for (h, &w) in self.weights[tv].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            self.seq_space.digits_into(h, &mut digits);
            let mut r = 0.0;
            for s in 0..=self.t {
                let ws = game.principal_batches().digits(digits[4 * s + 2]);
                r += game.gamma.powi(s as i32)
                    * game.reward(agent, digits[4 * s + 3], digits[4 * s], ws[agent], th);
            }
            total += w * r;
        }
        total
    }

    /// One agent's perceived window distribution: the joint weights projected
    /// to `(g, ω^k_i, ω_i, a⃗)` coordinates and mixed over the posterior on
    /// the others' types at the window's first cell.
    pub fn perceived(&self, game: &GameSpec, agent: usize, th: usize) -> Result<Vec<f64>> {
        let om = game.n_signals() as u128;
        let g_n = game.n_states() as u128;
        let av_n = game.joint_actions().count() as u128;
        let node = g_n * om * om * av_n;
        guard_sequence_size(node, self.t + 1, "perceived sequence space")?;
        let mut dims = Vec::new();
        for _ in 0..=self.t {
            dims.extend_from_slice(&[
                game.n_states(),
                game.n_signals(),
                game.n_signals(),
                game.joint_actions().count(),
            ]);
        }
        let proj_space = ProductSpace::new(dims);
        let btm = belief_type_marginal(game, &self.beliefs, agent);
        let others_ty = BeliefSystem::others_types(game);
        let tv_space = game.joint_types();
        let mut out = vec![0.0; proj_space.count()];
        let mut digits = vec![0; self.seq_space.arity()];
        let mut proj = vec![0; proj_space.arity()];
        for (tm, ty_minus) in others_ty.iter().enumerate() {
            let tv = tv_space.rank(&insert_at(&ty_minus, agent, th));
            for (h, &w) in self.weights[tv].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                self.seq_space.digits_into(h, &mut digits);
                for s in 0..=self.t {
                    let wk = game.principal_batches().digits(digits[4 * s + 1]);
                    let ws = game.principal_batches().digits(digits[4 * s + 2]);
                    proj[4 * s] = digits[4 * s];
                    proj[4 * s + 1] = wk[agent];
                    proj[4 * s + 2] = ws[agent];
                    proj[4 * s + 3] = digits[4 * s + 3];
                }
                let cell = (digits[0] * game.n_signals() + proj[1]) * game.n_types() + th;
                out[proj_space.rank(&proj)] += btm[cell][tm] * w;
            }
        }
        Ok(out)
    }

    /// Windowed action value: the realized discounted reward of the observed
    /// window plus `γ^{t+1}` times the expected reward of the next
    /// `t′+1`-period window, under the posterior over the others' types given
    /// the whole observed window. Off-support windows return only the
    /// realized part.
    pub fn windowed_q(
        &self,
        game: &GameSpec,
        agent: usize,
        th: usize,
        h: &[usize],
        t_prime: usize,
    ) -> f64 {
        let om = game.n_signals();
        let av_n = game.joint_actions().count();
        let g_n = game.n_states();
        let mut realized = 0.0;
        for s in 0..=self.t {
            realized += game.gamma.powi(s as i32)
                * game.reward(agent, h[4 * s + 3], h[4 * s], h[4 * s + 2], th);
        }
        let btm = belief_type_marginal(game, &self.beliefs, agent);
        let cell = (h[0] * om + h[1]) * game.n_types() + th;
        let others_ty = BeliefSystem::others_types(game);
        let tv_space = game.joint_types();
        let mut post = Vec::with_capacity(others_ty.count());
        let mut denom = 0.0;
        for (tm, ty_minus) in others_ty.iter().enumerate() {
            let tv = tv_space.rank(&insert_at(&ty_minus, agent, th));
            let mut like = btm[cell][tm];
            for s in 0..=self.t {
                if like == 0.0 {
                    break;
                }
                like *= self.node_probs[agent][tv]
                    [((h[4 * s] * om + h[4 * s + 1]) * om + h[4 * s + 2]) * av_n + h[4 * s + 3]];
                if s < self.t {
                    like *= game.transition_prob(h[4 * s], h[4 * s + 3], h[4 * (s + 1)]);
                }
            }
            denom += like;
            post.push((tv, like));
        }
        if denom == 0.0 {
            return realized;
        }
        let mut cont = 0.0;
        for (tv, like) in post {
            if like == 0.0 {
                continue;
            }
            // Next window starts from the successor of the window's last cell.
            let mut p: Vec<f64> = (0..g_n)
                .map(|g2| game.transition_prob(h[4 * self.t], h[4 * self.t + 3], g2))
                .collect();
            let mut acc = 0.0;
            for s in 0..=t_prime {
                let disc = game.gamma.powi(s as i32);
                for g in 0..g_n {
                    acc += disc * p[g] * self.rbar[agent][tv][g];
                }
                if s < t_prime {
                    let mut next = vec![0.0; g_n];
                    for g in 0..g_n {
                        if p[g] == 0.0 {
                            continue;
                        }
                        for g2 in 0..g_n {
                            next[g2] += p[g] * self.kernels[tv][g * g_n + g2];
                        }
                    }
                    p = next;
                }
            }
            cont += (like / denom) * acc;
        }
        realized + game.gamma.powi((self.t + 1) as i32) * cont
    }

    /// Windowed state value: the perceived-measure average of [`Self::windowed_q`]
    /// over action completions of an action-free window (`[g, ω^k_i, ω_i]`
    /// digits per period). Off-support windows return 0.
    pub fn windowed_v(
        &self,
        game: &GameSpec,
        agent: usize,
        th: usize,
        ell: &[usize],
        t_prime: usize,
    ) -> Result<f64> {
        let perceived = self.perceived(game, agent, th)?;
        let av_n = game.joint_actions().count();
        let av_space = ProductSpace::uniform(av_n, self.t + 1);
        let om = game.n_signals();
        let g_n = game.n_states();
        let mut dims = Vec::new();
        for _ in 0..=self.t {
            dims.extend_from_slice(&[g_n, om, om, av_n]);
        }
        let proj_space = ProductSpace::new(dims);
        let mut num = 0.0;
        let mut den = 0.0;
        let mut h = vec![0; 4 * (self.t + 1)];
        for a_traj in av_space.iter() {
            for s in 0..=self.t {
                h[4 * s] = ell[3 * s];
                h[4 * s + 1] = ell[3 * s + 1];
                h[4 * s + 2] = ell[3 * s + 2];
                h[4 * s + 3] = a_traj[s];
            }
            let w = perceived[proj_space.rank(&h)];
            if w == 0.0 {
                continue;
            }
            num += w * self.windowed_q(game, agent, th, &h, t_prime);
            den += w;
        }
        if den == 0.0 {
            Ok(0.0)
        } else {
            Ok(num / den)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::game::{Goal, Policy, SelectionRule, SignalingRule};
    use crate::linalg;

    fn uniform_profile(
        game: &GameSpec,
    ) -> (SignalingRule, SelectionRule, Policy, BeliefSystem) {
        let alpha = SignalingRule::uniform(game);
        let beta = SelectionRule::obedient(game);
        let pi = Policy::uniform(game);
        let mu = update_beliefs(game, &alpha);
        (alpha, beta, pi, mu)
    }

    #[test]
    fn single_state_kernel_is_identity() {
        let game = fixtures::minimal();
        let (alpha, beta, pi, _) = uniform_profile(&game);
        assert_eq!(induced_kernel(&game, &alpha, &beta, &pi, 0), vec![1.0]);
    }

    #[test]
    fn deterministic_policy_kernel_is_permutation() {
        let game = fixtures::chain2();
        let (alpha, beta, _, _) = uniform_profile(&game);
        // Always play `move`: flips the state deterministically.
        let pi = Policy::Independent(vec![vec![0.0, 1.0, 0.0, 1.0]]);
        let kernel = induced_kernel(&game, &alpha, &beta, &pi, 0);
        assert_eq!(kernel, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn uniform_policy_kernel_averages_action_rows() {
        let game = fixtures::chain2();
        let (alpha, beta, pi, _) = uniform_profile(&game);
        let kernel = induced_kernel(&game, &alpha, &beta, &pi, 0);
        for entry in kernel {
            assert!((entry - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn uninformative_rule_beliefs_factor_into_prior() {
        let game = fixtures::persuasion();
        let alpha = SignalingRule::uniform(&game);
        let mu = update_beliefs(&game, &alpha);
        assert!(mu.fallback_cells.is_empty());
        // Other agent's signal uniform, type at the prior, independently.
        let expect = [0.35, 0.15, 0.35, 0.15];
        for agent in 0..2 {
            for w in 0..2 {
                for th in 0..2 {
                    let row = mu.belief(&game, agent, 0, w, th);
                    for (have, want) in row.iter().zip(expect) {
                        assert!((have - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn revealing_rule_yields_point_beliefs_and_flags_dead_cells() {
        let game = fixtures::persuasion();
        // Suspect guilty -> both get `cr`; innocent -> both get `ar`.
        let wv = game.principal_batches().count();
        let mut probs = vec![vec![0.0; wv]; game.joint_types().count()];
        for tv in 0..game.joint_types().count() {
            let tvd = game.joint_types().digits(tv);
            let wkv = if tvd[1] == 1 { 3 } else { 0 };
            probs[tv][wkv] = 1.0;
        }
        let alpha = SignalingRule { probs };
        let mu = update_beliefs(&game, &alpha);
        // Judge kept `ar`: suspect surely innocent and also holding `ar`.
        let row = mu.belief(&game, 0, 0, 0, 0);
        assert_eq!(row, &[1.0, 0.0, 0.0, 0.0]);
        // Judge kept `cr`: suspect surely guilty, holding `cr`.
        let row = mu.belief(&game, 0, 0, 1, 0);
        assert_eq!(row, &[0.0, 0.0, 0.0, 1.0]);
        // A guilty suspect can never see `ar`; that cell falls back to
        // uniform and is flagged.
        assert!(mu.fallback_cells.contains(&(1, 0, 0, 1)));
        let row = mu.belief(&game, 1, 0, 0, 1);
        assert_eq!(row, &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn minimal_values_are_geometric_sums() {
        let game = fixtures::minimal();
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        let vb = compute_values(&game, &alpha, &beta, &pi, &mu, 1e-10).unwrap();
        assert!((vb.j_fix[0][0][0] - 2.0).abs() < 1e-8);
        assert!((vb.j_at(&game, 0, 0, 0) - 2.0).abs() < 1e-8);
        assert!((vb.v_at(&game, 0, 0, 0, 0, 0) - 2.0).abs() < 1e-8);
        assert!((vb.q_at(&game, 0, 0, 0, 0, 0, 0) - 2.0).abs() < 1e-8);
        assert!(vb.residual <= 1e-10);
    }

    #[test]
    fn zero_rewards_give_zero_values_quickly() {
        let mut game = fixtures::minimal();
        game.rewards = vec![0.0];
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        let vb = compute_values(&game, &alpha, &beta, &pi, &mu, 1e-10).unwrap();
        assert_eq!(vb.j_fix[0][0][0], 0.0);
        assert_eq!(vb.j[0][0], 0.0);
        assert!(vb.iterations <= 2);
    }

    #[test]
    fn chain_values_match_direct_linear_solve() {
        let game = fixtures::chain2();
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        let vb = compute_values(&game, &alpha, &beta, &pi, &mu, 1e-10).unwrap();
        let (kernel, rbar) = kernel_and_rewards(&game, &alpha, &beta, &pi, 0);
        let direct = linalg::discounted_value(&kernel, &rbar[0], game.gamma).unwrap();
        for g in 0..2 {
            assert!((vb.j_fix[0][0][g] - direct[g]).abs() < 1e-8);
            assert!((vb.j_at(&game, 0, g, 0) - direct[g]).abs() < 1e-7);
        }
    }

    #[test]
    fn static_game_values_are_one_period_rewards() {
        let game = fixtures::chicken();
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        let vb = compute_values(&game, &alpha, &beta, &pi, &mu, 1e-10).unwrap();
        assert!(vb.iterations <= 2);
        assert_eq!(vb.residual, 0.0);
        // q equals the stage reward at γ = 0.
        for (av, want) in [(0, 0.0), (1, 3.0), (2, 1.0), (3, 2.0)] {
            assert_eq!(vb.q_at(&game, 0, 0, 0, 0, 0, av), want);
        }
        // v mixes q over the uniform joint action.
        assert!((vb.v_at(&game, 0, 0, 0, 0, 0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn occupancy_minimal_single_cell_mass() {
        let game = fixtures::minimal();
        let (alpha, beta, pi, _) = uniform_profile(&game);
        let rho = occupancy_from_profile(&game, &alpha, &beta, &pi).unwrap();
        assert!((rho.mass(0) - 2.0).abs() < 1e-12);
        assert!((rho.at(&game, 0, 0, 0, 0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn occupancy_matches_static_formula_at_gamma_zero() {
        let game = fixtures::chicken();
        let (alpha, beta, pi, _) = uniform_profile(&game);
        let rho = occupancy_from_profile(&game, &alpha, &beta, &pi).unwrap();
        let wv = game.principal_batches().count();
        for wk in 0..wv {
            for ws in 0..wv {
                for av in 0..4 {
                    let want = if ws == wk { 0.25 * 0.25 } else { 0.0 };
                    assert!((rho.at(&game, 0, 0, av, ws, wk) - want).abs() < 1e-12);
                }
            }
        }
        assert!((rho.mass(0) - 1.0).abs() < 1e-12);
        assert!(occupancy_flow_residual(&game, &rho, &alpha) < 1e-12);
    }

    #[test]
    fn occupancy_mass_and_flow_identity() {
        let game = fixtures::pd();
        let (alpha, beta, pi, _) = uniform_profile(&game);
        let rho = occupancy_from_profile(&game, &alpha, &beta, &pi).unwrap();
        assert!((rho.mass(0) - 10.0).abs() < 1e-9);
        assert!(occupancy_flow_residual(&game, &rho, &alpha) < 1e-9);
    }

    #[test]
    fn occupancy_reward_totals_match_values() {
        let game = fixtures::pd();
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        let rho = occupancy_from_profile(&game, &alpha, &beta, &pi).unwrap();
        let vb = compute_values(&game, &alpha, &beta, &pi, &mu, 1e-10).unwrap();
        let av_space = game.joint_actions();
        for agent in 0..2 {
            let mut total = 0.0;
            for av in 0..av_space.count() {
                total += rho.at(&game, 0, 0, av, 0, 0) * game.reward(agent, av, 0, 0, 0);
            }
            let start: f64 = (0..game.n_states())
                .map(|g| game.state_init[g] * vb.j_at(&game, agent, g, 0))
                .sum();
            assert!((total - start).abs() < 1e-6);
        }
    }

    #[test]
    fn policy_from_occupancy_reproduces_policy_on_support() {
        let game = fixtures::two_source();
        let alpha = SignalingRule::uniform(&game);
        let beta = SelectionRule::obedient(&game);
        let pi = Policy::Independent(vec![
            vec![0.7, 0.3, 0.2, 0.8],
            vec![0.6, 0.4, 0.9, 0.1],
        ]);
        let rho = occupancy_from_profile(&game, &alpha, &beta, &pi).unwrap();
        let (recovered, flags) = policy_from_occupancy(&game, &rho);
        assert!(flags.is_empty());
        let wk_space = game.principal_batches();
        let av_space = game.joint_actions();
        for wkv in 0..wk_space.count() {
            let sel = wk_space.digits(wkv);
            for av in 0..av_space.count() {
                let avd = av_space.digits(av);
                let want = pi.joint_prob_digits(&game, &[0, 0], 0, &sel, &avd);
                let have = recovered.joint_prob_digits(&game, &[0, 0], 0, &sel, &avd);
                assert!((want - have).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn policy_from_occupancy_flags_unvisited_cells() {
        let game = fixtures::two_source();
        let wv = game.principal_batches().count();
        let mut probs = vec![vec![0.0; wv]];
        probs[0][0] = 1.0;
        let alpha = SignalingRule { probs };
        let beta = SelectionRule::obedient(&game);
        let pi = Policy::uniform(&game);
        let rho = occupancy_from_profile(&game, &alpha, &beta, &pi).unwrap();
        let (recovered, flags) = policy_from_occupancy(&game, &rho);
        for wkv in 1..wv {
            assert!(flags.contains(&(0, 0, wkv)));
            let sel = game.principal_batches().digits(wkv);
            for av in 0..4 {
                let avd = game.joint_actions().digits(av);
                assert!(
                    (recovered.joint_prob_digits(&game, &[0, 0], 0, &sel, &avd) - 0.25).abs()
                        < 1e-12
                );
            }
        }
    }

    #[test]
    fn goal_occupancy_single_state() {
        let game = fixtures::minimal();
        let kappa = Goal {
            probs: vec![vec![1.0]],
        };
        let go = goal_occupancy(&game, &kappa).unwrap();
        assert!((go.at(&game, 0, 0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn goal_occupancy_alternating_chain() {
        let game = fixtures::chain2();
        // Always `move`: the state alternates g0, g1, g0, ...
        let kappa = Goal {
            probs: vec![vec![0.0, 1.0, 0.0, 1.0]],
        };
        let go = goal_occupancy(&game, &kappa).unwrap();
        let denom = 1.0 - game.gamma * game.gamma;
        assert!((go.at(&game, 0, 0, 1) - 1.0 / denom).abs() < 1e-9);
        assert!((go.at(&game, 0, 1, 1) - game.gamma / denom).abs() < 1e-9);
        assert!(go.at(&game, 0, 0, 0).abs() < 1e-12);
        assert!((go.mass(0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn sequence_weights_single_node_games() {
        let game = fixtures::minimal();
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        let lam = truncated_sequential_occupancy(&game, &alpha, &beta, &pi, &mu, 1, 3).unwrap();
        assert_eq!(lam.seq_space.count(), 1);
        // Starts at τ = 0 and τ = 2: 1 + γ².
        assert!((lam.weights[0][0] - 1.25).abs() < 1e-12);
        let lam = truncated_sequential_occupancy(&game, &alpha, &beta, &pi, &mu, 0, 3).unwrap();
        assert!((lam.weights[0][0] - 1.875).abs() < 1e-12);
    }

    #[test]
    fn sequence_t0_matches_occupancy_cells() {
        let game = fixtures::two_source();
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        let rho = occupancy_from_profile(&game, &alpha, &beta, &pi).unwrap();
        let lam = truncated_sequential_occupancy(&game, &alpha, &beta, &pi, &mu, 0, 60).unwrap();
        let wv = game.principal_batches().count();
        for wk in 0..wv {
            for ws in 0..wv {
                for av in 0..4 {
                    let have = lam.weights[0][lam.seq_space.rank(&[0, wk, ws, av])];
                    let want = rho.at(&game, 0, 0, av, ws, wk);
                    assert!((have - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn windowed_reward_totals_match_occupancy_totals() {
        let game = fixtures::pd();
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        let rho = occupancy_from_profile(&game, &alpha, &beta, &pi).unwrap();
        let mut occ_total = [0.0; 2];
        for agent in 0..2 {
            for av in 0..4 {
                occ_total[agent] +=
                    rho.at(&game, 0, 0, av, 0, 0) * game.reward(agent, av, 0, 0, 0);
            }
        }
        for t in [1usize, 2] {
            let t_max = 240 - 240 % (t + 1);
            let lam =
                truncated_sequential_occupancy(&game, &alpha, &beta, &pi, &mu, t, t_max).unwrap();
            for agent in 0..2 {
                let have = lam.windowed_reward_total(&game, agent, 0);
                assert!(
                    (have - occ_total[agent]).abs() < 1e-6,
                    "t={t} agent={agent}: {have} vs {}",
                    occ_total[agent]
                );
            }
        }
    }

    #[test]
    fn perceived_preserves_mass_for_known_types() {
        let game = fixtures::two_source();
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        let lam = truncated_sequential_occupancy(&game, &alpha, &beta, &pi, &mu, 1, 9).unwrap();
        let perceived = lam.perceived(&game, 0, 0).unwrap();
        let total: f64 = perceived.iter().sum();
        let want: f64 = lam.weights[0].iter().sum();
        assert!((total - want).abs() < 1e-9);
        assert!(perceived.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn windowed_evaluators_on_single_node_game() {
        let game = fixtures::minimal();
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        let lam = truncated_sequential_occupancy(&game, &alpha, &beta, &pi, &mu, 0, 0).unwrap();
        // Reward 1 now plus γ times a one-period continuation window.
        let q = lam.windowed_q(&game, 0, 0, &[0, 0, 0, 0], 0);
        assert!((q - 1.5).abs() < 1e-12);
        let v = lam.windowed_v(&game, 0, 0, &[0, 0, 0], 0).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
        // Two-period continuation adds γ² more.
        let q = lam.windowed_q(&game, 0, 0, &[0, 0, 0, 0], 1);
        assert!((q - 1.75).abs() < 1e-12);
    }

    #[test]
    fn sequence_space_cap_is_enforced() {
        let game = fixtures::two_source();
        let (alpha, beta, pi, mu) = uniform_profile(&game);
        // Node count 64 per period: 64^4 > 1e6.
        let err = truncated_sequential_occupancy(&game, &alpha, &beta, &pi, &mu, 3, 7)
            .unwrap_err();
        assert!(matches!(err, Error::SizeGuard { .. }));
    }
}
