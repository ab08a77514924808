//! Deterministic report rendering: a versioned JSON envelope shared by every
//! command, hand-rolled validation against the schema shipped in
//! `schemas/report.schema.json`, JSON renderings of the solver tables with
//! explicit dimension metadata, and plot-ready CSV writers.
//!
//! Everything here is reproducible byte for byte: maps serialize with sorted
//! keys, floats print shortest-roundtrip, and nothing records wall-clock
//! time (run timestamps belong in a sidecar file, outside the envelope).

use serde_json::{json, Map, Value};

use crate::design::{DesignResult, DesignStatus};
use crate::dynamics::{OccupancyMeasure, ValueBundle};
use crate::equilibrium::SlackCertificate;
use crate::error::{Error, Result};
use crate::game::{GameSpec, Goal, Policy, SignalingRule};

pub const TOOL_NAME: &str = "mgid";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA_VERSION: &str = "1";
/// Identity of the pseudo-random generator behind every seeded estimate.
pub const GENERATOR_ID: &str = "chacha8";
/// The JSON schema every report envelope validates against, embedded from
/// the copy shipped in the repository.
pub const REPORT_SCHEMA: &str = include_str!("../../../schemas/report.schema.json");

/// Wrap a command's body in the common report envelope.
pub fn envelope(command: &str, config: Value, body: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": TOOL_NAME, "version": TOOL_VERSION},
        "command": command,
        "config": config,
        "generator": GENERATOR_ID,
        "body": body,
    })
}

/// Canonical textual form of a report: pretty-printed with sorted keys and
/// a trailing newline. Identical values render to identical bytes.
pub fn to_canonical_string(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------------
// Schema validation
// ---------------------------------------------------------------------------

/// Validate a report against the shipped envelope schema.
pub fn validate_report(report: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA)?;
    let mut errors = Vec::new();
    check_schema(&schema, report, "$", &mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::validation("report", errors.join("; ")))
    }
}

/// Minimal JSON-schema checker covering the subset the shipped schema uses:
/// `type`, `required`, `properties`, `additionalProperties: false`, `enum`,
/// `items`, `minimum`.
fn check_schema(schema: &Value, instance: &Value, path: &str, errors: &mut Vec<String>) {
    let Some(schema) = schema.as_object() else {
        return;
    };
    if let Some(ty) = schema.get("type").and_then(Value::as_str) {
        let ok = match ty {
            "object" => instance.is_object(),
            "array" => instance.is_array(),
            "string" => instance.is_string(),
            "number" => instance.is_number(),
            "integer" => instance.is_i64() || instance.is_u64(),
            "boolean" => instance.is_boolean(),
            "null" => instance.is_null(),
            _ => true,
        };
        if !ok {
            errors.push(format!("{path}: expected {ty}"));
            return;
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(instance) {
            errors.push(format!("{path}: value not in the allowed set"));
        }
    }
    if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
        if let Some(x) = instance.as_f64() {
            if x < min {
                errors.push(format!("{path}: {x} is below the minimum {min}"));
            }
        }
    }
    if let Some(obj) = instance.as_object() {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(key) {
                    errors.push(format!("{path}: missing required key \"{key}\""));
                }
            }
        }
        let props = schema
            .get("properties")
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_else(Map::new);
        if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
            for key in obj.keys() {
                if !props.contains_key(key) {
                    errors.push(format!("{path}: unexpected key \"{key}\""));
                }
            }
        }
        for (key, sub) in &props {
            if let Some(child) = obj.get(key) {
                check_schema(sub, child, &format!("{path}.{key}"), errors);
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), instance.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            check_schema(items, child, &format!("{path}[{i}]"), errors);
        }
    }
}

// ---------------------------------------------------------------------------
// JSON table renderings
// ---------------------------------------------------------------------------

fn table_value(dims: &[&str], tables: &[Vec<f64>]) -> Value {
    json!({"dims": dims, "tables": tables})
}

/// Signaling rule as per-joint-type flattened `(state, draw)` tables.
pub fn rule_json(_game: &GameSpec, alpha: &SignalingRule) -> Value {
    table_value(&["joint_type", "state", "draw"], &alpha.probs)
}

/// Goal as per-joint-type flattened `(state, joint_action)` tables.
pub fn goal_json(_game: &GameSpec, kappa: &Goal) -> Value {
    table_value(&["joint_type", "state", "joint_action"], &kappa.probs)
}

/// Policy tables with their kind and axis layout.
pub fn policy_json(_game: &GameSpec, pi: &Policy) -> Value {
    match pi {
        Policy::Independent(tables) => {
            let mut v = table_value(&["agent", "state", "signal", "type", "action"], tables);
            v["kind"] = json!("independent");
            v
        }
        Policy::Correlated(tables) => {
            let mut v = table_value(
                &["joint_type", "state", "kept_vector", "joint_action"],
                tables,
            );
            v["kind"] = json!("correlated");
            v
        }
    }
}

/// Occupancy measure with its discount and axis layout.
pub fn occupancy_json(_game: &GameSpec, rho: &OccupancyMeasure) -> Value {
    let mut v = table_value(
        &["joint_type", "state", "joint_action", "kept", "draw"],
        &rho.tables,
    );
    v["gamma"] = json!(rho.gamma);
    v
}

/// Full value-bundle dump: residual, backup count, and every table with its
/// axis layout.
pub fn value_bundle_json(_game: &GameSpec, vb: &ValueBundle) -> Value {
    json!({
        "residual": vb.residual,
        "iterations": vb.iterations,
        "j": table_value(&["agent", "state", "type"], &vb.j),
        "v": table_value(&["agent", "state", "kept", "delivered", "type"], &vb.v),
        "q": table_value(
            &["agent", "state", "kept", "delivered", "type", "joint_action"],
            &vb.q,
        ),
        "j_fix": json!({
            "dims": ["agent", "joint_type", "state"],
            "tables": vb.j_fix,
        }),
    })
}

fn status_json(status: &DesignStatus) -> Value {
    match status {
        DesignStatus::VerifiedOil => json!({"kind": "verified_oil"}),
        DesignStatus::EpsilonOil { epsilon } => {
            json!({"kind": "epsilon_oil", "epsilon": epsilon})
        }
        DesignStatus::Infeasible { residual } => {
            json!({"kind": "infeasible", "residual": residual})
        }
    }
}

fn opt_json<T, F: FnOnce(&T) -> Value>(value: &Option<T>, f: F) -> Value {
    value.as_ref().map(f).unwrap_or(Value::Null)
}

/// Synthesis outcome: status, the designed rule/policy/occupancy tables,
/// the verification report, and the slack certificate, each `null` when
/// absent.
pub fn design_result_json(game: &GameSpec, result: &DesignResult) -> Value {
    json!({
        "status": status_json(&result.status),
        "rule": opt_json(&result.rule, |a| rule_json(game, a)),
        "policy": opt_json(&result.policy, |p| policy_json(game, p)),
        "occupancy": opt_json(&result.occupancy, |r| occupancy_json(game, r)),
        "verification": opt_json(&result.verification, |v| {
            serde_json::to_value(v).expect("serializable report")
        }),
        "slacks": opt_json(&result.slacks, |s| {
            serde_json::to_value(s).expect("serializable certificate")
        }),
    })
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

/// Quote a CSV field per RFC 4180: fields containing commas, quotes, or
/// newlines are wrapped in quotes with inner quotes doubled.
pub fn csv_field(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') || field.contains('\r') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn csv_line(fields: &[String]) -> String {
    fields
        .iter()
        .map(|f| csv_field(f))
        .collect::<Vec<_>>()
        .join(",")
}

fn joined_label(labels: &[String], digits: &[usize]) -> String {
    digits
        .iter()
        .map(|&d| labels[d].as_str())
        .collect::<Vec<_>>()
        .join("|")
}

/// Occupancy table as CSV, one row per non-trivial index tuple: columns
/// `joint_type, state, joint_action, kept, draw, value`.
pub fn occupancy_csv(game: &GameSpec, rho: &OccupancyMeasure) -> String {
    let tv_space = game.joint_types();
    let av_space = game.joint_actions();
    let wk_space = game.principal_batches();
    let wv = wk_space.count();
    let mut out = String::from("joint_type,state,joint_action,kept,draw,value\n");
    for tv in 0..rho.tables.len() {
        let tv_label = joined_label(&game.types, &tv_space.digits(tv));
        for g in 0..game.n_states() {
            for av in 0..av_space.count() {
                let av_label = joined_label(&game.actions, &av_space.digits(av));
                for ws in 0..wv {
                    let ws_label = joined_label(&game.signals, &wk_space.digits(ws));
                    for wk in 0..wv {
                        out.push_str(&csv_line(&[
                            tv_label.clone(),
                            game.states[g].clone(),
                            av_label.clone(),
                            ws_label.clone(),
                            joined_label(&game.signals, &wk_space.digits(wk)),
                            format!("{}", rho.at(game, tv, g, av, ws, wk)),
                        ]));
                        out.push('\n');
                    }
                }
            }
        }
    }
    out
}

/// Pre-signal value table as CSV: columns `agent, state, type, value`.
pub fn values_csv(game: &GameSpec, vb: &ValueBundle) -> String {
    let th_n = game.n_types();
    let mut out = String::from("agent,state,type,value\n");
    for (i, table) in vb.j.iter().enumerate() {
        for g in 0..game.n_states() {
            for th in 0..th_n {
                out.push_str(&csv_line(&[
                    game.agents[i].clone(),
                    game.states[g].clone(),
                    game.types[th].clone(),
                    format!("{}", table[g * th_n + th]),
                ]));
                out.push('\n');
            }
        }
    }
    out
}

/// Slack certificate as CSV: columns `family, agent, slack, dual_weight`,
/// in certificate order.
pub fn slacks_csv(cert: &SlackCertificate) -> String {
    let mut out = String::from("family,agent,slack,dual_weight\n");
    for (family, entries) in [("delta", &cert.delta), ("zeta", &cert.zeta)] {
        for e in entries {
            out.push_str(&csv_line(&[
                family.to_string(),
                format!("{}", e.deviation.agent()),
                format!("{}", e.slack),
                format!("{}", e.dual_weight),
            ]));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::design_oil;
    use crate::dynamics::{compute_values, occupancy_from_profile, update_beliefs};
    use crate::fixtures;
    use crate::game::{SelectionRule, SignalingRule};

    fn sample_envelope() -> Value {
        envelope(
            "verify",
            json!({"game": "fixtures/pd.game", "tol": 1e-6}),
            json!({"is_equilibrium": true}),
        )
    }

    #[test]
    fn envelopes_pass_the_shipped_schema() {
        validate_report(&sample_envelope()).unwrap();
    }

    #[test]
    fn schema_rejects_malformed_envelopes() {
        let mut missing = sample_envelope();
        missing.as_object_mut().unwrap().remove("config");
        assert!(validate_report(&missing).is_err());

        let mut extra = sample_envelope();
        extra["debug"] = json!(true);
        assert!(validate_report(&extra).is_err());

        let mut bad_command = sample_envelope();
        bad_command["command"] = json!("explode");
        assert!(validate_report(&bad_command).is_err());

        let mut bad_generator = sample_envelope();
        bad_generator["generator"] = json!("mt19937");
        assert!(validate_report(&bad_generator).is_err());
    }

    #[test]
    fn canonical_rendering_is_stable_and_newline_terminated() {
        let a = to_canonical_string(&sample_envelope());
        let b = to_canonical_string(&sample_envelope());
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
        assert!(a.contains("\"generator\": \"chacha8\""));
    }

    #[test]
    fn csv_fields_follow_rfc_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
        assert_eq!(csv_field("two\nlines"), "\"two\nlines\"");
    }

    #[test]
    fn occupancy_csv_lists_every_cell() {
        let game = fixtures::minimal();
        let rho = occupancy_from_profile(
            &game,
            &SignalingRule::uniform(&game),
            &SelectionRule::obedient(&game),
            &crate::game::Policy::uniform(&game),
        )
        .unwrap();
        let csv = occupancy_csv(&game, &rho);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "joint_type,state,joint_action,kept,draw,value");
        assert_eq!(lines[1], "t0,g0,a0,s0,s0,2");
    }

    #[test]
    fn values_csv_has_one_row_per_interim_cell() {
        let game = fixtures::chain2();
        let alpha = SignalingRule::uniform(&game);
        let beta = SelectionRule::obedient(&game);
        let pi = crate::game::Policy::uniform(&game);
        let mu = update_beliefs(&game, &alpha);
        let vb = compute_values(&game, &alpha, &beta, &pi, &mu, 1e-9).unwrap();
        let csv = values_csv(&game, &vb);
        assert_eq!(csv.lines().count(), 3); // header + agent x 2 states
        assert!(csv.starts_with("agent,state,type,value\n"));
    }

    #[test]
    fn design_results_render_and_validate() {
        let game = fixtures::pd();
        let av_n = game.joint_actions().count();
        let mut probs = vec![0.0; av_n];
        probs[3] = 1.0;
        let kappa = crate::game::Goal {
            probs: vec![probs],
        };
        let result = design_oil(&game, &kappa, 1e-6).unwrap();
        let body = design_result_json(&game, &result);
        assert_eq!(body["status"]["kind"], json!("verified_oil"));
        assert!(body["rule"].is_object());
        assert!(body["slacks"]["lagrangian_value"].is_number());
        let report = envelope("design", json!({"tol": 1e-6}), body);
        validate_report(&report).unwrap();
        let text = to_canonical_string(&report);
        assert_eq!(text, to_canonical_string(&serde_json::from_str(&text).unwrap()));
    }
}
