//! The designer's side of the game: synthesizing a signaling rule for the
//! controlled source so that self-interested play lands on a target action
//! distribution.
//!
//! The direct route works on occupancy measures. [`build_oil_lp_joint`]
//! assembles a linear program over per-joint-type visitation variables whose
//! equality rows force Bellman flow and the target action marginal; in the
//! one-shot case it also carries the interim incentive rows, which are linear
//! there. [`design_oil`] solves it, factors the solution back into a rule
//! ([`recover_rule`]) and a correlated policy, and verifies the profile with
//! the equilibrium sweeps. When verification fails, a projected coordinate
//! ascent over rules ([`DesignParams`] controls restarts and steps) maximizes
//! the worst deviation slack under greedy best-response play, and the result
//! is graded by an [`EpsilonCertificate`] instead of being silently accepted.
//!
//! The remaining operations round out the toolkit: [`directify`] collapses a
//! profile with non-trivial source selection into an equivalent rule that
//! delivers the kept signal directly, [`principal_payoff`] and
//! [`principal_payoff_profile`] evaluate the designer's discounted objective,
//! and [`select_goal`] searches the recommendation-compatible goal set for
//! the designer-optimal target before handing it to [`design_oil`].

mod lp;

pub use lp::{solve_lp, LinearProgram, LpOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{
    self, compute_values, goal_occupancy, occupancy_flow_residual, occupancy_from_profile,
    policy_from_occupancy, update_beliefs, GoalOccupancy, OccupancyMeasure,
};
use crate::equilibrium::{
    check_bme, check_bmce, check_o_pbme, check_pbme, compute_slacks, interim_joint,
    static_beliefs_from_policy, OPbmeReport, SlackCertificate, DEFAULT_TOL, DEFAULT_T_DEV,
    ON_SUPPORT_TOL,
};
use crate::error::{Error, Result};
use crate::game::{
    enumerate_deviations, BeliefSystem, Deviation, GameSpec, Goal, Policy, SelectionRule,
    SignalingRule, DEVIATION_CAP,
};
use crate::linalg;
use crate::space::{insert_at, normalize_or_uniform, remove_at, sup_diff, ProductSpace};

/// Feasibility and pivoting tolerance for every linear program in this
/// module.
const LP_TOL: f64 = 1e-9;
/// Tolerance for the internal value solves backing verification sweeps.
const VALUE_TOL: f64 = 1e-9;
/// Hard cap on linear-program variables.
const LP_VAR_CAP: u128 = 1_000_000;
/// Rounds of greedy best-response iteration when deriving induced play.
const BR_ROUNDS: usize = 30;
/// Row-rebuild rounds when alternating the goal program with its
/// continuation values.
const GOAL_ROUNDS: usize = 4;

// ---------------------------------------------------------------------------
// Result types
// ---------------------------------------------------------------------------

/// Grade of a synthesis run.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignStatus {
    /// The returned profile passed the full verification sweep and induces
    /// the target distribution within tolerance.
    VerifiedOil,
    /// The returned profile is the best candidate found; `epsilon` bounds
    /// the remaining one-shot deviation gain (discounted to the designer's
    /// horizon). The verification report carries the admissibility gap.
    EpsilonOil { epsilon: f64 },
    /// The occupancy program is infeasible and the no-information fallback
    /// failed verification; `residual` is the infeasibility mass.
    Infeasible { residual: f64 },
}

/// Everything a synthesis run produces. All payload fields are present
/// unless the status is [`DesignStatus::Infeasible`]; `slacks` additionally
/// requires the deviation families to fit under the enumeration cap.
#[derive(Debug, Clone)]
pub struct DesignResult {
    pub status: DesignStatus,
    pub rule: Option<SignalingRule>,
    pub policy: Option<Policy>,
    pub occupancy: Option<OccupancyMeasure>,
    pub verification: Option<OPbmeReport>,
    pub slacks: Option<SlackCertificate>,
}

/// A signaling rule factored out of an occupancy measure, with the
/// `(joint type, state)` cells that carried no mass and fell back to the
/// uniform row.
#[derive(Debug, Clone)]
pub struct RecoveredRule {
    pub rule: SignalingRule,
    pub fallback_cells: Vec<(usize, usize)>,
}

/// Quantified equilibrium quality of a profile: `psi[θ⃗][g]` is the largest
/// per-agent expected one-shot improvement available at that state,
/// `phi[θ⃗]` the worst of these over states, and `epsilon` the discounted
/// total `Σ_θ⃗ d(θ⃗)·φ(θ⃗) / (1 − γ̂)`. Taking the worst state is what makes
/// the total a bound: a persistent unilateral deviation collects at most
/// `φ(θ⃗)` of one-shot advantage per period regardless of where its own play
/// steers the chain, so summing the discounted series caps every deviation's
/// total gain. Because the agents' own gains accrue at their discount, the
/// alternative normalization `/(1 − γ)` is reported as `epsilon_agent_side`.
/// `feasibility_slack` is the worst violation of the signaling-consistent
/// flow identity by the profile's occupancy.
#[derive(Debug, Clone)]
pub struct EpsilonCertificate {
    pub psi: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub epsilon: f64,
    pub epsilon_agent_side: f64,
    pub feasibility_slack: f64,
}

/// Knobs for the refinement search inside [`design_oil_with`].
#[derive(Debug, Clone)]
pub struct DesignParams {
    /// Independent ascent restarts (the first starts from the program's
    /// recovered rule, the rest from seeded random rules).
    pub restarts: usize,
    /// Coordinate-ascent steps per restart.
    pub steps: usize,
    /// Extra periods covered by the windowed deviation sweep during
    /// verification.
    pub t_dev: usize,
}

impl Default for DesignParams {
    fn default() -> Self {
        DesignParams {
            restarts: 16,
            steps: 200,
            t_dev: DEFAULT_T_DEV,
        }
    }
}

fn guard_vars(dims: &[usize], what: &str) -> Result<usize> {
    let mut count: u128 = 1;
    for &d in dims {
        count = count.checked_mul(d as u128).ok_or_else(|| Error::SizeGuard {
            what: what.to_string(),
            size: u128::MAX,
            cap: LP_VAR_CAP,
        })?;
    }
    if count > LP_VAR_CAP {
        return Err(Error::SizeGuard {
            what: what.to_string(),
            size: count,
            cap: LP_VAR_CAP,
        });
    }
    Ok(count as usize)
}

// ---------------------------------------------------------------------------
// Occupancy program assembly
// ---------------------------------------------------------------------------

/// One joint type's slice of the occupancy program: variables
/// `x[(g·A^n + a⃗)·Ω^n + ω⃗^k] ≥ 0` restricted to the obedient support
/// (every agent keeps their coordinate of `ω⃗^k`, so the kept vector is not
/// a separate axis), welfare objective, Bellman-flow rows, and
/// target-marginal rows.
struct OilBlock {
    objective: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

fn oil_block(game: &GameSpec, target: &GoalOccupancy, tv: usize) -> OilBlock {
    let g_n = game.n_states();
    let n = game.n_agents();
    let av_n = game.joint_actions().count();
    let wk_space = game.principal_batches();
    let wv = wk_space.count();
    let n_x = g_n * av_n * wv;
    let tvd = game.joint_types().digits(tv);
    let idx = |g: usize, av: usize, wk: usize| (g * av_n + av) * wv + wk;

    let mut objective = vec![0.0; n_x];
    let mut wkd = vec![0; n];
    for g in 0..g_n {
        for av in 0..av_n {
            for wk in 0..wv {
                wk_space.digits_into(wk, &mut wkd);
                let mut r = 0.0;
                for i in 0..n {
                    r += game.reward(i, av, g, wkd[i], tvd[i]);
                }
                objective[idx(g, av, wk)] = r;
            }
        }
    }

    let mut rows = Vec::with_capacity(g_n + g_n * av_n);
    let mut rhs = Vec::with_capacity(g_n + g_n * av_n);
    // Mass entering each state equals initial mass plus discounted inflow.
    for g2 in 0..g_n {
        let mut row = vec![0.0; n_x];
        for g in 0..g_n {
            for av in 0..av_n {
                let c = if g == g2 { 1.0 } else { 0.0 };
                let c = c - game.gamma * game.transition_prob(g, av, g2);
                if c != 0.0 {
                    for wk in 0..wv {
                        row[idx(g, av, wk)] = c;
                    }
                }
            }
        }
        rows.push(row);
        rhs.push(game.state_init[g2]);
    }
    // Marginal over the signal draw must reproduce the target visitation.
    for g in 0..g_n {
        for av in 0..av_n {
            let mut row = vec![0.0; n_x];
            for wk in 0..wv {
                row[idx(g, av, wk)] = 1.0;
            }
            rows.push(row);
            rhs.push(target.tables[tv][g * av_n + av]);
        }
    }
    OilBlock {
        objective,
        rows,
        rhs,
    }
}

/// Occupancy program for a single joint type: maximize total agent welfare
/// over the obedient-support visitation variables subject to Bellman flow
/// and the target action marginal. Incentive feasibility is not encoded
/// here; it is certified afterwards.
pub fn build_oil_lp(game: &GameSpec, kappa: &Goal, tv: usize) -> Result<LinearProgram> {
    kappa.validate(game)?;
    let tvs = game.joint_types().count();
    if tv >= tvs {
        return Err(Error::validation(
            "joint type",
            format!("index {tv} out of range for {tvs} joint types"),
        ));
    }
    guard_vars(
        &[
            game.n_states(),
            game.joint_actions().count(),
            game.principal_batches().count(),
        ],
        "occupancy program variables",
    )?;
    let target = goal_occupancy(game, kappa)?;
    let block = oil_block(game, &target, tv);
    Ok(LinearProgram {
        objective: block.objective,
        eq: block.rows,
        eq_rhs: block.rhs,
        ge: Vec::new(),
        ge_rhs: Vec::new(),
    })
}

/// One-shot interim incentive rows over the joint occupancy variables: at
/// every `(agent, state, delivered signal, own type, recommended action)`
/// cell, switching to any candidate `(kept signal, action)` pair must not
/// raise the expected reward. Exact when there is no continuation
/// (`γ = 0`), which is the only case the caller includes them.
fn oil_obedience_rows(game: &GameSpec, n_x: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = game.n_agents();
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let am_space = ProductSpace::uniform(a_n, n - 1);
    let wk_space = game.principal_batches();
    let wv = wk_space.count();
    let tv_space = game.joint_types();
    let others_ty = BeliefSystem::others_types(game);
    let prior_minus = dynamics::others_type_prior(game);
    let total = tv_space.count() * n_x;
    let idx = |tv: usize, g: usize, av: usize, wk: usize| tv * n_x + (g * av_n + av) * wv + wk;

    // Draws that deliver signal w to agent i.
    let mut own_wk = vec![vec![Vec::new(); om]; n];
    for wk in 0..wv {
        let wkd = wk_space.digits(wk);
        for i in 0..n {
            own_wk[i][wkd[i]].push(wk);
        }
    }

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for th in 0..th_n {
            if game.type_prior[th] <= ON_SUPPORT_TOL {
                continue;
            }
            let tv_of: Vec<usize> = (0..others_ty.count())
                .map(|tm| tv_space.rank(&insert_at(&others_ty.digits(tm), i, th)))
                .collect();
            for g in 0..g_n {
                for w in 0..om {
                    for a_i in 0..a_n {
                        for wp in 0..om {
                            for ap in 0..a_n {
                                if wp == w && ap == a_i {
                                    continue;
                                }
                                let mut row = vec![0.0; total];
                                for amd in am_space.iter() {
                                    let av = av_space.rank(&insert_at(&amd, i, a_i));
                                    let avp = av_space.rank(&insert_at(&amd, i, ap));
                                    let dr = game.reward(i, av, g, w, th)
                                        - game.reward(i, avp, g, wp, th);
                                    if dr == 0.0 {
                                        continue;
                                    }
                                    for (tm, &tv) in tv_of.iter().enumerate() {
                                        let pm = prior_minus[tm];
                                        if pm <= 0.0 {
                                            continue;
                                        }
                                        for &wk in &own_wk[i][w] {
                                            row[idx(tv, g, av, wk)] += pm * dr;
                                        }
                                    }
                                }
                                if row.iter().any(|v| v.abs() > 1e-15) {
                                    rows.push(row);
                                    rhs.push(0.0);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (rows, rhs)
}

/// Occupancy program across all joint types at once: per-type flow and
/// target-marginal equality blocks, a prior-weighted welfare objective, and
/// — in the one-shot case, where they are linear — the interim incentive
/// inequality rows.
pub fn build_oil_lp_joint(game: &GameSpec, kappa: &Goal) -> Result<LinearProgram> {
    kappa.validate(game)?;
    let tvs = game.joint_types().count();
    let n_x = guard_vars(
        &[
            game.n_states(),
            game.joint_actions().count(),
            game.principal_batches().count(),
        ],
        "occupancy program variables",
    )?;
    let total = guard_vars(&[tvs, n_x], "occupancy program variables")?;
    let target = goal_occupancy(game, kappa)?;
    let d_tv = dynamics::joint_type_prior(game);

    let mut objective = vec![0.0; total];
    let mut eq = Vec::new();
    let mut eq_rhs = Vec::new();
    for tv in 0..tvs {
        let block = oil_block(game, &target, tv);
        for (j, c) in block.objective.iter().enumerate() {
            objective[tv * n_x + j] = d_tv[tv] * c;
        }
        for (row, r) in block.rows.into_iter().zip(block.rhs) {
            let mut wide = vec![0.0; total];
            wide[tv * n_x..(tv + 1) * n_x].copy_from_slice(&row);
            eq.push(wide);
            eq_rhs.push(r);
        }
    }
    let (ge, ge_rhs) = if game.gamma == 0.0 {
        oil_obedience_rows(game, n_x)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(LinearProgram {
        objective,
        eq,
        eq_rhs,
        ge,
        ge_rhs,
    })
}

/// Expand a program solution back into a full occupancy measure; the
/// obedient support puts all mass on kept vector = principal draw.
fn occupancy_from_solution(game: &GameSpec, x: &[f64]) -> OccupancyMeasure {
    let g_n = game.n_states();
    let av_n = game.joint_actions().count();
    let wv = game.principal_batches().count();
    let tvs = game.joint_types().count();
    let n_x = g_n * av_n * wv;
    let tables = (0..tvs)
        .map(|tv| {
            let mut t = vec![0.0; g_n * av_n * wv * wv];
            for g in 0..g_n {
                for av in 0..av_n {
                    for wk in 0..wv {
                        let v = x[tv * n_x + (g * av_n + av) * wv + wk];
                        if v > 0.0 {
                            t[OccupancyMeasure::idx(game, g, av, wk, wk)] = v;
                        }
                    }
                }
            }
            t
        })
        .collect();
    OccupancyMeasure {
        tables,
        gamma: game.gamma,
    }
}

/// Factor the signal draw out of an occupancy measure:
/// `α(ω⃗^k | g, θ⃗)` is the measure's draw share at that cell. Zero-mass
/// `(joint type, state)` cells get the uniform row and are flagged.
pub fn recover_rule(game: &GameSpec, rho: &OccupancyMeasure) -> RecoveredRule {
    let g_n = game.n_states();
    let av_n = game.joint_actions().count();
    let wv = game.principal_batches().count();
    let mut probs = Vec::with_capacity(rho.tables.len());
    let mut fallback_cells = Vec::new();
    for tv in 0..rho.tables.len() {
        let mut t = vec![0.0; g_n * wv];
        for g in 0..g_n {
            let row = &mut t[g * wv..(g + 1) * wv];
            for (wk, slot) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for av in 0..av_n {
                    for ws in 0..wv {
                        acc += rho.at(game, tv, g, av, ws, wk);
                    }
                }
                *slot = acc;
            }
            if !normalize_or_uniform(row) {
                fallback_cells.push((tv, g));
            }
        }
        probs.push(t);
    }
    RecoveredRule {
        rule: SignalingRule { probs },
        fallback_cells,
    }
}

// ---------------------------------------------------------------------------
// Rule synthesis
// ---------------------------------------------------------------------------

/// Every deterministic policy-table and selection-table deviation of every
/// agent.
fn all_deviations(game: &GameSpec) -> Result<Vec<Deviation>> {
    let mut devs = Vec::new();
    for i in 0..game.n_agents() {
        let (policy, selection) = enumerate_deviations(game, i)?;
        devs.extend(policy);
        devs.extend(selection);
    }
    Ok(devs)
}

/// Correlated policy that plays the goal distribution at every kept-signal
/// vector, ignoring the signals entirely.
fn policy_from_goal(game: &GameSpec, kappa: &Goal) -> Policy {
    let g_n = game.n_states();
    let wv = game.principal_batches().count();
    let av_n = game.joint_actions().count();
    let tables = kappa
        .probs
        .iter()
        .map(|t| {
            let mut out = vec![0.0; g_n * wv * av_n];
            for g in 0..g_n {
                for w in 0..wv {
                    out[(g * wv + w) * av_n..(g * wv + w + 1) * av_n]
                        .copy_from_slice(&t[g * av_n..(g + 1) * av_n]);
                }
            }
            out
        })
        .collect();
    Policy::Correlated(tables)
}

/// Independent one-hot policy from per-agent action choices laid out as
/// `choices[agent][(g·Ω + ω)·Θ + θ]`.
fn one_hot_policy(game: &GameSpec, choices: &[Vec<usize>]) -> Policy {
    let a_n = game.n_actions();
    Policy::Independent(
        choices
            .iter()
            .map(|ch| {
                let mut t = vec![0.0; ch.len() * a_n];
                for (cell, &a) in ch.iter().enumerate() {
                    t[cell * a_n + a] = 1.0;
                }
                t
            })
            .collect(),
    )
}

/// Greedy mutual best response to a rule under obedient selection: starting
/// from uniform play, every agent simultaneously switches each information
/// cell to the action with the highest interim value against the current
/// profile, until the choices stop changing or the round budget runs out.
/// Ties keep the lowest action index, so the result is deterministic.
fn best_response_policy(game: &GameSpec, alpha: &SignalingRule) -> Result<Policy> {
    let beta = SelectionRule::obedient(game);
    let mu = update_beliefs(game, alpha);
    let n = game.n_agents();
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let am_space = ProductSpace::uniform(a_n, n - 1);
    let cells = g_n * om * th_n;

    let mut pi = Policy::uniform(game);
    let mut choices: Vec<Vec<usize>> = vec![vec![0; cells]; n];
    for round in 0..BR_ROUNDS {
        let vb = compute_values(game, alpha, &beta, &pi, &mu, VALUE_TOL)?;
        let mut next = vec![vec![0usize; cells]; n];
        for i in 0..n {
            for g in 0..g_n {
                for w in 0..om {
                    for th in 0..th_n {
                        let joint = interim_joint(game, &beta, &pi, &mu, i, g, w, th);
                        // Marginal over the opponents' actions; own play and
                        // the kept-signal axis integrate out.
                        let mut opp = vec![0.0; am_space.count()];
                        for kept in 0..om {
                            for (am, amd) in am_space.iter().enumerate() {
                                for a in 0..a_n {
                                    let av = av_space.rank(&insert_at(&amd, i, a));
                                    opp[am] += joint[kept * av_n + av];
                                }
                            }
                        }
                        let mut best_a = 0;
                        let mut best_v = f64::NEG_INFINITY;
                        for a in 0..a_n {
                            let mut v = 0.0;
                            for (am, amd) in am_space.iter().enumerate() {
                                if opp[am] == 0.0 {
                                    continue;
                                }
                                let av = av_space.rank(&insert_at(&amd, i, a));
                                v += opp[am] * vb.q_at(game, i, g, w, w, th, av);
                            }
                            if v > best_v {
                                best_v = v;
                                best_a = a;
                            }
                        }
                        next[i][(g * om + w) * th_n + th] = best_a;
                    }
                }
            }
        }
        let stable = round > 0 && next == choices;
        choices = next;
        pi = one_hot_policy(game, &choices);
        if stable {
            break;
        }
    }
    Ok(pi)
}

/// Worst forgone value across all enumerated deviations when play is the
/// greedy best response to `alpha`; the refinement's objective.
fn min_slack(game: &GameSpec, alpha: &SignalingRule, devs: &[Deviation]) -> Result<f64> {
    let beta = SelectionRule::obedient(game);
    let pi = best_response_policy(game, alpha)?;
    let mu = update_beliefs(game, alpha);
    let cert = compute_slacks(game, alpha, &beta, &pi, &mu, devs)?;
    Ok(cert
        .delta
        .iter()
        .chain(cert.zeta.iter())
        .fold(f64::INFINITY, |m, e| m.min(e.slack)))
}

/// Euclidean projection onto the probability simplex.
fn project_to_simplex(row: &mut [f64]) {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite probabilities"));
    let mut acc = 0.0;
    let mut theta = sorted[0] - 1.0;
    for (k, &v) in sorted.iter().enumerate() {
        acc += v;
        let t = (acc - 1.0) / (k as f64 + 1.0);
        if v - t > 0.0 {
            theta = t;
        }
    }
    for v in row.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

/// Rule with independently sampled simplex rows (uniform on each simplex).
fn random_rule(game: &GameSpec, rng: &mut ChaCha8Rng) -> SignalingRule {
    let wv = game.principal_batches().count();
    let g_n = game.n_states();
    let probs = (0..game.joint_types().count())
        .map(|_| {
            let mut t = vec![0.0; g_n * wv];
            for g in 0..g_n {
                let row = &mut t[g * wv..(g + 1) * wv];
                let mut total = 0.0;
                for v in row.iter_mut() {
                    let e = -(1.0 - rng.gen::<f64>()).ln();
                    *v = e;
                    total += e;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            t
        })
        .collect();
    SignalingRule { probs }
}

/// Maximize the minimum deviation slack over signaling rules by projected
/// coordinate ascent with seeded restarts. Restart branches run
/// concurrently but the winner is chosen by (slack, then lexicographically
/// smallest rule), so the output is deterministic.
fn maxmin_rule(
    game: &GameSpec,
    params: &DesignParams,
    seed_rule: &SignalingRule,
    devs: &[Deviation],
) -> SignalingRule {
    let tvs = game.joint_types().count();
    let g_n = game.n_states();
    let wv = game.principal_batches().count();
    let score = |alpha: &SignalingRule| min_slack(game, alpha, devs).unwrap_or(f64::NEG_INFINITY);

    let runs: Vec<(f64, SignalingRule)> = (0..params.restarts.max(1))
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(restart as u64);
            let mut alpha = if restart == 0 {
                seed_rule.clone()
            } else {
                random_rule(game, &mut rng)
            };
            let mut best = score(&alpha);
            let mut step = 0.1_f64;
            for _ in 0..params.steps {
                let tv = rng.gen_range(0..tvs);
                let g = rng.gen_range(0..g_n);
                let w = rng.gen_range(0..wv);
                let mut cand = alpha.clone();
                {
                    let row = &mut cand.probs[tv][g * wv..(g + 1) * wv];
                    row[w] += step;
                    project_to_simplex(row);
                }
                let s = score(&cand);
                if s > best {
                    best = s;
                    alpha = cand;
                } else {
                    step = (step * 0.5).max(1e-6);
                }
            }
            (best, alpha)
        })
        .collect();

    let lex_before = |a: &SignalingRule, b: &SignalingRule| {
        for (ra, rb) in a.probs.iter().zip(&b.probs) {
            for (x, y) in ra.iter().zip(rb) {
                if x < y {
                    return true;
                }
                if x > y {
                    return false;
                }
            }
        }
        false
    };
    let mut winner: Option<(f64, SignalingRule)> = None;
    for (s, alpha) in runs {
        let take = match &winner {
            None => true,
            Some((bs, ba)) => s > *bs || (s == *bs && lex_before(&alpha, ba)),
        };
        if take {
            winner = Some((s, alpha));
        }
    }
    winner.expect("at least one restart").1
}

/// Refinement fallback when the program's profile fails verification:
/// search rules for the best worst-case deviation slack under induced play,
/// re-verify, and grade the outcome.
fn refine_design(
    game: &GameSpec,
    kappa: &Goal,
    tol: f64,
    params: &DesignParams,
    seed_rule: SignalingRule,
) -> Result<DesignResult> {
    let beta = SelectionRule::obedient(game);
    let alpha = match all_deviations(game) {
        Ok(devs) => maxmin_rule(game, params, &seed_rule, &devs),
        Err(_) => seed_rule,
    };
    let pi = best_response_policy(game, &alpha)?;
    let mu = update_beliefs(game, &alpha);
    let report = check_o_pbme(game, &alpha, &beta, &pi, &mu, kappa, tol, params.t_dev)?;
    let rho = occupancy_from_profile(game, &alpha, &beta, &pi)?;
    let slacks = all_deviations(game)
        .and_then(|d| compute_slacks(game, &alpha, &beta, &pi, &mu, &d))
        .ok();
    if report.verified() {
        Ok(DesignResult {
            status: DesignStatus::VerifiedOil,
            rule: Some(alpha),
            policy: Some(pi),
            occupancy: Some(rho),
            verification: Some(report),
            slacks,
        })
    } else {
        let cert = epsilon_certificate(game, &alpha, &beta, &pi, &mu)?;
        Ok(DesignResult {
            status: DesignStatus::EpsilonOil {
                epsilon: cert.epsilon,
            },
            rule: Some(alpha),
            policy: Some(pi),
            occupancy: Some(rho),
            verification: Some(report),
            slacks,
        })
    }
}

/// Synthesize a signaling rule that steers play onto the goal `kappa` with
/// default search parameters.
pub fn design_oil(game: &GameSpec, kappa: &Goal, tol: f64) -> Result<DesignResult> {
    design_oil_with(game, kappa, tol, &DesignParams::default())
}

/// Full synthesis pipeline: solve the joint occupancy program, factor the
/// solution into a rule and a correlated policy under obedient selection,
/// verify, and certify slacks. If verification fails, refine the rule by
/// max-min slack search; if the program is infeasible, try the
/// no-information rule that simply recommends the goal, and otherwise
/// report infeasibility with the phase-1 residual.
pub fn design_oil_with(
    game: &GameSpec,
    kappa: &Goal,
    tol: f64,
    params: &DesignParams,
) -> Result<DesignResult> {
    if !(tol > 0.0) {
        return Err(Error::Precondition("tol must be positive".into()));
    }
    kappa.validate(game)?;
    let lp = build_oil_lp_joint(game, kappa)?;
    let beta = SelectionRule::obedient(game);
    match solve_lp(&lp, LP_TOL)? {
        LpOutcome::Optimal { x, .. } => {
            let rho = occupancy_from_solution(game, &x);
            let alpha = recover_rule(game, &rho).rule;
            let (pi, _) = policy_from_occupancy(game, &rho);
            let mu = update_beliefs(game, &alpha);
            let report = check_o_pbme(game, &alpha, &beta, &pi, &mu, kappa, tol, params.t_dev)?;
            if report.verified() {
                let slacks = all_deviations(game)
                    .and_then(|d| compute_slacks(game, &alpha, &beta, &pi, &mu, &d))
                    .ok();
                return Ok(DesignResult {
                    status: DesignStatus::VerifiedOil,
                    rule: Some(alpha),
                    policy: Some(pi),
                    occupancy: Some(rho),
                    verification: Some(report),
                    slacks,
                });
            }
            refine_design(game, kappa, tol, params, alpha)
        }
        LpOutcome::Infeasible { residual } => {
            let alpha = SignalingRule::uniform(game);
            let pi = policy_from_goal(game, kappa);
            let mu = update_beliefs(game, &alpha);
            let report = check_o_pbme(game, &alpha, &beta, &pi, &mu, kappa, tol, params.t_dev)?;
            if report.verified() {
                let rho = occupancy_from_profile(game, &alpha, &beta, &pi)?;
                let slacks = all_deviations(game)
                    .and_then(|d| compute_slacks(game, &alpha, &beta, &pi, &mu, &d))
                    .ok();
                return Ok(DesignResult {
                    status: DesignStatus::VerifiedOil,
                    rule: Some(alpha),
                    policy: Some(pi),
                    occupancy: Some(rho),
                    verification: Some(report),
                    slacks,
                });
            }
            Ok(DesignResult {
                status: DesignStatus::Infeasible { residual },
                rule: None,
                policy: None,
                occupancy: None,
                verification: Some(report),
                slacks: None,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Directification
// ---------------------------------------------------------------------------

/// Collapse a profile's source selection into the rule itself: the direct
/// rule delivers, with the original probability, whatever signal vector the
/// agents would have ended up keeping after the non-principal draws. The
/// input profile must already be a verified one-shot equilibrium; the
/// original policy, read on the delivered signal, then plays unchanged
/// against the direct rule.
pub fn directify(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
) -> Result<SignalingRule> {
    let mu = update_beliefs(game, alpha);
    let report = check_pbme(game, alpha, beta, pi, &mu, DEFAULT_TOL)?;
    if !report.is_equilibrium {
        return Err(Error::Precondition(format!(
            "the supplied profile is not an equilibrium (worst one-shot gain {:.3e})",
            report.worst_policy_gain.max(report.worst_selection_gain)
        )));
    }
    let g_n = game.n_states();
    let wk_space = game.principal_batches();
    let wv = wk_space.count();
    let ob = game.others_batches();
    let tv_space = game.joint_types();
    let mut probs = vec![vec![0.0; g_n * wv]; tv_space.count()];
    let mut wd = vec![0; game.n_agents()];
    let mut draw = vec![0; ob.arity()];
    for (tv, table) in probs.iter_mut().enumerate() {
        let tvd = tv_space.digits(tv);
        for g in 0..g_n {
            for wkv in 0..wv {
                let pa = alpha.prob(game, tv, g, wkv);
                if pa == 0.0 {
                    continue;
                }
                wk_space.digits_into(wkv, &mut wd);
                for d in 0..ob.count() {
                    let pd = game.nonprincipal_dist[d];
                    if pd == 0.0 {
                        continue;
                    }
                    ob.digits_into(d, &mut draw);
                    let sel = beta.selected(game, &tvd, g, &wd, &draw);
                    table[g * wv + wk_space.rank(&sel)] += pa * pd;
                }
            }
        }
    }
    Ok(SignalingRule { probs })
}

// ---------------------------------------------------------------------------
// Designer payoff
// ---------------------------------------------------------------------------

/// Designer's expected discounted payoff if play followed the goal exactly:
/// a linear solve under the goal-induced kernel at the designer's discount,
/// averaged over the type prior and the initial state distribution.
pub fn principal_payoff(game: &GameSpec, kappa: &Goal) -> Result<f64> {
    kappa.validate(game)?;
    let g_n = game.n_states();
    let av_n = game.joint_actions().count();
    let d_tv = dynamics::joint_type_prior(game);
    let mut total = 0.0;
    for (tv, weight) in d_tv.iter().enumerate() {
        if *weight == 0.0 {
            continue;
        }
        let kernel = dynamics::goal_kernel(game, kappa, tv);
        let mut reward = vec![0.0; g_n];
        for g in 0..g_n {
            for av in 0..av_n {
                let p = kappa.prob(game, tv, g, av);
                if p != 0.0 {
                    reward[g] += p * game.principal_reward_at(av, g, tv);
                }
            }
        }
        let v = linalg::discounted_value(&kernel, &reward, game.gamma_hat)?;
        let start: f64 = game.state_init.iter().zip(&v).map(|(d, x)| d * x).sum();
        total += weight * start;
    }
    Ok(total)
}

/// Designer's expected discounted payoff under an actual profile, with the
/// one-period designer reward swept over the profile's draw, selection, and
/// play.
pub fn principal_payoff_profile(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
) -> Result<f64> {
    let g_n = game.n_states();
    let n = game.n_agents();
    let wk_space = game.principal_batches();
    let wv = wk_space.count();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let tv_space = game.joint_types();
    let d_tv = dynamics::joint_type_prior(game);
    let mut total = 0.0;
    let mut ws_digits = vec![0; n];
    let mut av_digits = vec![0; n];
    for (tv, weight) in d_tv.iter().enumerate() {
        if *weight == 0.0 {
            continue;
        }
        let tvd = tv_space.digits(tv);
        let (kernel, _) = dynamics::kernel_and_rewards(game, alpha, beta, pi, tv);
        let mix = dynamics::kept_signal_mix(game, beta, tv);
        let mut reward = vec![0.0; g_n];
        for g in 0..g_n {
            for wk in 0..wv {
                let pa = alpha.prob(game, tv, g, wk);
                if pa == 0.0 {
                    continue;
                }
                for ws in 0..wv {
                    let pm = mix[(g * wv + wk) * wv + ws];
                    if pm == 0.0 {
                        continue;
                    }
                    wk_space.digits_into(ws, &mut ws_digits);
                    for av in 0..av_n {
                        av_space.digits_into(av, &mut av_digits);
                        let pp = pi.joint_prob_digits(game, &tvd, g, &ws_digits, &av_digits);
                        if pp != 0.0 {
                            reward[g] += pa * pm * pp * game.principal_reward_at(av, g, tv);
                        }
                    }
                }
            }
        }
        let v = linalg::discounted_value(&kernel, &reward, game.gamma_hat)?;
        let start: f64 = game.state_init.iter().zip(&v).map(|(d, x)| d * x).sum();
        total += weight * start;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Goal selection
// ---------------------------------------------------------------------------

/// Value of following a goal for every agent and joint type, with rewards
/// read at the first signal slot (recommendation play carries no signal
/// content of its own): `[agent][joint type][state]`.
fn goal_values(game: &GameSpec, kappa: &Goal) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = game.n_agents();
    let g_n = game.n_states();
    let av_n = game.joint_actions().count();
    let tv_space = game.joint_types();
    let mut out = vec![vec![Vec::new(); tv_space.count()]; n];
    for tv in 0..tv_space.count() {
        let tvd = tv_space.digits(tv);
        let kernel = dynamics::goal_kernel(game, kappa, tv);
        for i in 0..n {
            let mut reward = vec![0.0; g_n];
            for g in 0..g_n {
                for av in 0..av_n {
                    let p = kappa.prob(game, tv, g, av);
                    if p != 0.0 {
                        reward[g] += p * game.reward(i, av, g, 0, tvd[i]);
                    }
                }
            }
            out[i][tv] = linalg::discounted_value(&kernel, &reward, game.gamma)?;
        }
    }
    Ok(out)
}

/// Recommendation-obedience inequality rows over goal-level visitation
/// variables, generic in the column layout: `idx(tv, g, av) -> column`
/// returns `None` for cells outside the program. When continuation values
/// `jk` are supplied, deviations are priced by the one-shot action value
/// against them; otherwise by the immediate reward alone.
fn goal_obedience_rows(
    game: &GameSpec,
    jk: Option<&[Vec<Vec<f64>>]>,
    width: usize,
    idx: impl Fn(usize, usize, usize) -> Option<usize>,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = game.n_agents();
    let g_n = game.n_states();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let av_space = game.joint_actions();
    let am_space = ProductSpace::uniform(a_n, n - 1);
    let tv_space = game.joint_types();
    let others_ty = BeliefSystem::others_types(game);
    let prior_minus = dynamics::others_type_prior(game);

    let q = |i: usize, tv: usize, g: usize, av: usize, th: usize| -> f64 {
        let mut v = game.reward(i, av, g, 0, th);
        if let Some(jk) = jk {
            if game.gamma != 0.0 {
                let mut cont = 0.0;
                for g2 in 0..g_n {
                    cont += game.transition_prob(g, av, g2) * jk[i][tv][g2];
                }
                v += game.gamma * cont;
            }
        }
        v
    };

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for th in 0..th_n {
            if game.type_prior[th] <= ON_SUPPORT_TOL {
                continue;
            }
            let tv_of: Vec<usize> = (0..others_ty.count())
                .map(|tm| tv_space.rank(&insert_at(&others_ty.digits(tm), i, th)))
                .collect();
            for g in 0..g_n {
                for a_i in 0..a_n {
                    for ap in 0..a_n {
                        if ap == a_i {
                            continue;
                        }
                        let mut row = vec![0.0; width];
                        for amd in am_space.iter() {
                            let av = av_space.rank(&insert_at(&amd, i, a_i));
                            let avp = av_space.rank(&insert_at(&amd, i, ap));
                            for (tm, &tv) in tv_of.iter().enumerate() {
                                let pm = prior_minus[tm];
                                if pm <= 0.0 {
                                    continue;
                                }
                                let Some(col) = idx(tv, g, av) else { continue };
                                let dq = q(i, tv, g, av, th) - q(i, tv, g, avp, th);
                                if dq != 0.0 {
                                    row[col] += pm * dq;
                                }
                            }
                        }
                        if row.iter().any(|v| v.abs() > 1e-15) {
                            rows.push(row);
                            rhs.push(0.0);
                        }
                    }
                }
            }
        }
    }
    (rows, rhs)
}

/// Patch `(joint type, state)` goal cells that carried no visitation mass:
/// re-optimize the action rows at each affected state under per-type
/// normalization, pins on the already-determined rows, and the static
/// obedience rows, keeping the uniform fallback when even that program is
/// infeasible.
fn patch_unreached(game: &GameSpec, kappa: &mut Goal, missing: &[(usize, usize)]) -> Result<()> {
    use std::collections::BTreeMap;
    let mut by_state: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(tv, g) in missing {
        by_state.entry(g).or_default().push(tv);
    }
    let av_n = game.joint_actions().count();
    let tvs = game.joint_types().count();
    let d_tv = dynamics::joint_type_prior(game);
    for (&g, unreached) in &by_state {
        let n_z = tvs * av_n;
        let mut objective = vec![0.0; n_z];
        for tv in 0..tvs {
            for av in 0..av_n {
                objective[tv * av_n + av] = d_tv[tv] * game.principal_reward_at(av, g, tv);
            }
        }
        let mut eq = Vec::new();
        let mut eq_rhs = Vec::new();
        for tv in 0..tvs {
            let mut row = vec![0.0; n_z];
            for av in 0..av_n {
                row[tv * av_n + av] = 1.0;
            }
            eq.push(row);
            eq_rhs.push(1.0);
            if !unreached.contains(&tv) {
                for av in 0..av_n {
                    let mut pin = vec![0.0; n_z];
                    pin[tv * av_n + av] = 1.0;
                    eq.push(pin);
                    eq_rhs.push(kappa.prob(game, tv, g, av));
                }
            }
        }
        let (ge, ge_rhs) = goal_obedience_rows(game, None, n_z, |tv, gg, av| {
            (gg == g).then_some(tv * av_n + av)
        });
        let lp = LinearProgram {
            objective,
            eq,
            eq_rhs,
            ge,
            ge_rhs,
        };
        if let LpOutcome::Optimal { x, .. } = solve_lp(&lp, LP_TOL)? {
            for &tv in unreached {
                let row = &mut kappa.probs[tv][g * av_n..(g + 1) * av_n];
                for (av, slot) in row.iter_mut().enumerate() {
                    *slot = x[tv * av_n + av].max(0.0);
                }
                normalize_or_uniform(row);
            }
        }
    }
    Ok(())
}

/// Normalize goal-level visitation variables into a goal, patching
/// zero-mass cells.
fn kappa_from_y(game: &GameSpec, y: &[f64]) -> Result<Goal> {
    let g_n = game.n_states();
    let av_n = game.joint_actions().count();
    let tvs = game.joint_types().count();
    let mut probs = vec![vec![0.0; g_n * av_n]; tvs];
    let mut missing = Vec::new();
    for (tv, table) in probs.iter_mut().enumerate() {
        for g in 0..g_n {
            let row = &mut table[g * av_n..(g + 1) * av_n];
            row.copy_from_slice(&y[(tv * g_n + g) * av_n..(tv * g_n + g + 1) * av_n]);
            for v in row.iter_mut() {
                *v = v.max(0.0);
            }
            if !normalize_or_uniform(row) {
                missing.push((tv, g));
            }
        }
    }
    let mut kappa = Goal { probs };
    if !missing.is_empty() {
        patch_unreached(game, &mut kappa, &missing)?;
    }
    Ok(kappa)
}

fn goal_gap(a: &Goal, b: &Goal) -> f64 {
    a.probs
        .iter()
        .zip(&b.probs)
        .map(|(x, y)| sup_diff(x, y))
        .fold(0.0, f64::max)
}

/// Designer-optimal goal from the visitation program: per-type flow rows at
/// the designer's discount and recommendation-obedience rows — exact in the
/// one-shot case, otherwise re-linearized around the current iterate's
/// continuation values for a few rounds.
fn optimal_goal(game: &GameSpec) -> Result<Goal> {
    let g_n = game.n_states();
    let av_n = game.joint_actions().count();
    let tvs = game.joint_types().count();
    let n_y = guard_vars(&[tvs, g_n, av_n], "goal program variables")?;
    let d_tv = dynamics::joint_type_prior(game);

    let mut objective = vec![0.0; n_y];
    for tv in 0..tvs {
        for g in 0..g_n {
            for av in 0..av_n {
                objective[(tv * g_n + g) * av_n + av] = d_tv[tv] * game.principal_reward_at(av, g, tv);
            }
        }
    }
    let mut eq = Vec::with_capacity(tvs * g_n);
    let mut eq_rhs = Vec::with_capacity(tvs * g_n);
    for tv in 0..tvs {
        for g2 in 0..g_n {
            let mut row = vec![0.0; n_y];
            for g in 0..g_n {
                for av in 0..av_n {
                    let c = if g == g2 { 1.0 } else { 0.0 };
                    row[(tv * g_n + g) * av_n + av] =
                        c - game.gamma_hat * game.transition_prob(g, av, g2);
                }
            }
            eq.push(row);
            eq_rhs.push(game.state_init[g2]);
        }
    }
    let full_idx = |tv: usize, g: usize, av: usize| Some((tv * g_n + g) * av_n + av);
    let solve = |ge: Vec<Vec<f64>>, ge_rhs: Vec<f64>| -> Result<Option<Vec<f64>>> {
        let lp = LinearProgram {
            objective: objective.clone(),
            eq: eq.clone(),
            eq_rhs: eq_rhs.clone(),
            ge,
            ge_rhs,
        };
        Ok(match solve_lp(&lp, LP_TOL)? {
            LpOutcome::Optimal { x, .. } => Some(x),
            LpOutcome::Infeasible { .. } => None,
        })
    };

    if game.gamma == 0.0 {
        let (ge, ge_rhs) = goal_obedience_rows(game, None, n_y, full_idx);
        let x = solve(ge, ge_rhs)?.ok_or_else(|| {
            Error::InsufficientData("the one-shot goal program is infeasible".into())
        })?;
        return kappa_from_y(game, &x);
    }

    let mut kappa: Option<Goal> = None;
    let mut ge: Vec<Vec<f64>> = Vec::new();
    let mut ge_rhs: Vec<f64> = Vec::new();
    for _ in 0..=GOAL_ROUNDS {
        let Some(x) = solve(ge.clone(), ge_rhs.clone())? else {
            break;
        };
        let next = kappa_from_y(game, &x)?;
        let stable = kappa.as_ref().is_some_and(|p| goal_gap(p, &next) <= 1e-9);
        kappa = Some(next);
        if stable {
            break;
        }
        let jk = goal_values(game, kappa.as_ref().expect("just set"))?;
        let built = goal_obedience_rows(game, Some(&jk), n_y, full_idx);
        ge = built.0;
        ge_rhs = built.1;
    }
    kappa.ok_or_else(|| Error::InsufficientData("the goal flow program is infeasible".into()))
}

/// Exhaustive fallback over deterministic signal-free play: every joint
/// `(state, own type) → action` assignment is checked as a static
/// equilibrium; the designer-best verified one is returned as a point-mass
/// goal. `None` when no assignment passes.
fn bme_fallback(game: &GameSpec, tol: f64) -> Result<Option<Goal>> {
    let n = game.n_agents();
    let g_n = game.n_states();
    let om = game.n_signals();
    let th_n = game.n_types();
    let a_n = game.n_actions();
    let av_space = game.joint_actions();
    let tv_space = game.joint_types();
    let cells = n * g_n * th_n;
    let mut count: u128 = 1;
    for _ in 0..cells {
        count = count.checked_mul(a_n as u128).ok_or(Error::SizeGuard {
            what: "deterministic play enumeration".into(),
            size: u128::MAX,
            cap: DEVIATION_CAP,
        })?;
    }
    if count > DEVIATION_CAP {
        return Err(Error::SizeGuard {
            what: "deterministic play enumeration".into(),
            size: count,
            cap: DEVIATION_CAP,
        });
    }
    let space = ProductSpace::uniform(a_n, cells);
    let mut best: Option<(f64, Goal)> = None;
    for table in space.iter() {
        let mut choices = vec![vec![0usize; g_n * om * th_n]; n];
        for i in 0..n {
            for g in 0..g_n {
                for th in 0..th_n {
                    let a = table[(i * g_n + g) * th_n + th];
                    for w in 0..om {
                        choices[i][(g * om + w) * th_n + th] = a;
                    }
                }
            }
        }
        let pi = one_hot_policy(game, &choices);
        let mus = static_beliefs_from_policy(game, &pi)?;
        let rep = check_bme(game, &pi, &mus, tol)?;
        if !rep.is_equilibrium {
            continue;
        }
        let mut probs = vec![vec![0.0; g_n * av_space.count()]; tv_space.count()];
        for (tv, row) in probs.iter_mut().enumerate() {
            let tvd = tv_space.digits(tv);
            for g in 0..g_n {
                let avd: Vec<usize> = (0..n).map(|i| table[(i * g_n + g) * th_n + tvd[i]]).collect();
                row[g * av_space.count() + av_space.rank(&avd)] = 1.0;
            }
        }
        let kappa = Goal { probs };
        let z = principal_payoff(game, &kappa)?;
        if best.as_ref().map_or(true, |(bz, _)| z > *bz) {
            best = Some((z, kappa));
        }
    }
    Ok(best.map(|(_, k)| k))
}

/// Pick the designer-optimal goal among recommendation-compatible action
/// distributions, then synthesize its implementing rule. Returns the goal,
/// its designer payoff, and the synthesis result. When the visitation
/// program's candidate fails the recommendation check, falls back to
/// enumerating deterministic static equilibria; if that also finds nothing,
/// the search reports failure with diagnostics.
pub fn select_goal(game: &GameSpec, tol: f64) -> Result<(Goal, f64, DesignResult)> {
    if !(tol > 0.0) {
        return Err(Error::Precondition("tol must be positive".into()));
    }
    let candidate = optimal_goal(game)?;
    let report = check_bmce(game, &candidate, tol)?;
    let kappa = if report.is_equilibrium {
        candidate
    } else {
        match bme_fallback(game, tol) {
            Ok(Some(k)) => k,
            Ok(None) => {
                return Err(Error::InsufficientData(
                    "no recommendation-compatible goal found: the visitation optimum failed \
                     the obedience check and no deterministic static equilibrium exists"
                        .into(),
                ))
            }
            Err(e) => {
                return Err(Error::InsufficientData(format!(
                    "no recommendation-compatible goal found: the visitation optimum failed \
                     the obedience check and enumeration was unavailable ({e})"
                )))
            }
        }
    };
    let z = principal_payoff(game, &kappa)?;
    let result = design_oil(game, &kappa, tol)?;
    Ok((kappa, z, result))
}

// ---------------------------------------------------------------------------
// Epsilon certificates
// ---------------------------------------------------------------------------

/// Grade a profile by its worst one-shot improvement mass. For each state
/// and joint type, the realized `(delivered, kept, action)` cells are swept
/// against every candidate `(kept signal, action)` override (including
/// staying put, so the residual is never negative), valued at that joint
/// type's own continuation; the state table is the per-agent maximum, the
/// per-type grade is the worst state's entry, and the total is discounted
/// to the designer's horizon.
pub fn epsilon_certificate(
    game: &GameSpec,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    mu: &BeliefSystem,
) -> Result<EpsilonCertificate> {
    let vb = compute_values(game, alpha, beta, pi, mu, VALUE_TOL)?;
    let rho = occupancy_from_profile(game, alpha, beta, pi)?;
    let feasibility_slack = occupancy_flow_residual(game, &rho, alpha);

    let n = game.n_agents();
    let g_n = game.n_states();
    let om = game.n_signals();
    let a_n = game.n_actions();
    let av_space = game.joint_actions();
    let av_n = av_space.count();
    let am_space = ProductSpace::uniform(a_n, n - 1);
    let am_n = am_space.count();
    let wk_space = game.principal_batches();
    let wv = wk_space.count();
    let ob = game.others_batches();
    let batches = game.agent_batches();
    let tv_space = game.joint_types();
    let tvs = tv_space.count();
    let d_tv = dynamics::joint_type_prior(game);

    let mut psi = vec![vec![0.0; g_n]; tvs];
    let mut wd = vec![0; n];
    let mut draw = vec![0; ob.arity()];
    let mut kept_vec = vec![0; n];
    let mut avd = vec![0; n];
    for tv in 0..tvs {
        let tvd = tv_space.digits(tv);
        for g in 0..g_n {
            // cells[i][(delivered·Ω + kept)·A + own action][opponents' action]
            let mut cells = vec![vec![vec![0.0; am_n]; om * om * a_n]; n];
            for wkv in 0..wv {
                let pa = alpha.prob(game, tv, g, wkv);
                if pa == 0.0 {
                    continue;
                }
                wk_space.digits_into(wkv, &mut wd);
                for d in 0..ob.count() {
                    let pd = game.nonprincipal_dist[d];
                    if pd == 0.0 {
                        continue;
                    }
                    ob.digits_into(d, &mut draw);
                    for j in 0..n {
                        let bj = game.agent_batch_digits(j, wd[j], &draw);
                        let pos = beta.position(game, j, g, batches.rank(&bj), tvd[j]);
                        kept_vec[j] = bj[pos];
                    }
                    for av in 0..av_n {
                        av_space.digits_into(av, &mut avd);
                        let pp = pi.joint_prob_digits(game, &tvd, g, &kept_vec, &avd);
                        if pp == 0.0 {
                            continue;
                        }
                        let mass = pa * pd * pp;
                        for i in 0..n {
                            let am = am_space.rank(&remove_at(&avd, i));
                            cells[i][(wd[i] * om + kept_vec[i]) * a_n + avd[i]][am] += mass;
                        }
                    }
                }
            }
            let mut worst = 0.0f64;
            for (i, agent_cells) in cells.iter().enumerate() {
                let th = tvd[i];
                let q = |kept: usize, av: usize| -> f64 {
                    let mut v = game.reward(i, av, g, kept, th);
                    if game.gamma != 0.0 {
                        let mut cont = 0.0;
                        for g2 in 0..g_n {
                            cont += game.transition_prob(g, av, g2) * vb.j_fix[i][tv][g2];
                        }
                        v += game.gamma * cont;
                    }
                    v
                };
                let mut psi_i = 0.0;
                for (cell_idx, cell) in agent_cells.iter().enumerate() {
                    let mass: f64 = cell.iter().sum();
                    if mass <= 0.0 {
                        continue;
                    }
                    let kept = (cell_idx / a_n) % om;
                    let a_i = cell_idx % a_n;
                    let value = |wp: usize, ap: usize| -> f64 {
                        let mut v = 0.0;
                        for (am, amd) in am_space.iter().enumerate() {
                            if cell[am] == 0.0 {
                                continue;
                            }
                            v += cell[am] * q(wp, av_space.rank(&insert_at(&amd, i, ap)));
                        }
                        v
                    };
                    let stay = value(kept, a_i);
                    let mut best = stay;
                    for wp in 0..om {
                        for ap in 0..a_n {
                            let v = value(wp, ap);
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    psi_i += best - stay;
                }
                if psi_i > worst {
                    worst = psi_i;
                }
            }
            psi[tv][g] = worst;
        }
    }
    let phi: Vec<f64> = psi
        .iter()
        .map(|row| row.iter().fold(0.0f64, |acc, &p| acc.max(p)))
        .collect();
    let expected: f64 = d_tv.iter().zip(&phi).map(|(d, p)| d * p).sum();
    Ok(EpsilonCertificate {
        psi,
        phi,
        epsilon: expected / (1.0 - game.gamma_hat),
        epsilon_agent_side: expected / (1.0 - game.gamma),
        feasibility_slack,
    })
}
