//! Machine-readable reports (`qpr-report/1`).
//!
//! Objects serialize with sorted keys, rationals as `"p/q"` strings, and
//! symbolic coefficients in their canonical text form. No timestamps or
//! host data, so identical inputs give byte-identical reports.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::coeff::Coefficient;
use crate::linalg::{rat_to_pq, RatMatrix, Rational};
use crate::parse::{render, render_exp};
use crate::reduce::{ConditionSet, NotReducibleWitness, ReducedSystem, ReductionResult};
use crate::system::{ExpQPSystem, QPSystem};
use crate::transform::TransformStep;
use crate::verify::VerifyReport;

pub const SCHEMA: &str = "qpr-report/1";

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn rational(r: &Rational) -> Value {
    Value::String(rat_to_pq(r))
}

pub fn coefficient(c: &Coefficient) -> Value {
    match c.as_rational() {
        Some(r) => rational(&r),
        None => Value::String(c.to_string()),
    }
}

pub fn rat_vec(v: &[Rational]) -> Value {
    Value::Array(v.iter().map(rational).collect())
}

pub fn rat_matrix(m: &RatMatrix) -> Value {
    Value::Array((0..m.rows()).map(|r| rat_vec(m.row(r))).collect())
}

pub fn coeff_vec(v: &[Coefficient]) -> Value {
    Value::Array(v.iter().map(coefficient).collect())
}

pub fn coeff_matrix(rows: &[Vec<Coefficient>]) -> Value {
    Value::Array(rows.iter().map(|r| coeff_vec(r)).collect())
}

fn names(v: &[String]) -> Value {
    Value::Array(v.iter().cloned().map(Value::String).collect())
}

pub fn system(sys: &QPSystem) -> Value {
    json!({
        "variables": names(&sys.var_names),
        "parameters": names(&sys.params),
        "A": coeff_matrix(&sys.a),
        "B": rat_matrix(&sys.b),
        "lambda": coeff_vec(&sys.lambda),
        "text": render(sys),
    })
}

pub fn exp_system(sys: &ExpQPSystem) -> Value {
    json!({
        "variables": names(&sys.var_names),
        "parameters": names(&sys.params),
        "A": coeff_matrix(&sys.a),
        "B": rat_matrix(&sys.b),
        "gamma": coeff_vec(&sys.gamma),
        "text": render_exp(sys),
    })
}

pub fn reduced_system(r: &ReducedSystem) -> Value {
    match r {
        ReducedSystem::Autonomous(s) => system(s),
        ReducedSystem::Exponential(s) => exp_system(s),
    }
}

pub fn reduced_text(r: &ReducedSystem) -> String {
    match r {
        ReducedSystem::Autonomous(s) => render(s),
        ReducedSystem::Exponential(s) => render_exp(s),
    }
}

pub fn conditions(gamma: &[Coefficient], set: &ConditionSet) -> Value {
    let solved = match set.solved_form() {
        Some(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), coefficient(v)))
                .collect(),
        ),
        None => Value::Null,
    };
    json!({
        "gamma": coeff_vec(gamma),
        "equations": Value::Array(set.equations.iter().map(|e| Value::String(format!("{e} = 0"))).collect()),
        "verdict": set.satisfiable.to_string(),
        "solved": solved,
    })
}

pub fn witness(w: &NotReducibleWitness) -> Value {
    json!({
        "n": w.n,
        "augmented_rank": w.augmented_rank,
        "coefficient_rank": w.coefficient_rank,
        "conditions": w.conditions.as_ref().map(|c| json!({
            "equations": Value::Array(c.equations.iter().map(|e| Value::String(format!("{e} = 0"))).collect()),
            "verdict": c.satisfiable.to_string(),
        })),
        "summary": w.to_string(),
    })
}

fn step(s: &TransformStep) -> Value {
    let mut obj = Map::new();
    obj.insert("kind".into(), Value::String(s.kind().into()));
    match s {
        TransformStep::Qmt { c } => {
            obj.insert("C".into(), rat_matrix(c));
        }
        TransformStep::MonomialNtt { prefactor, beta } => {
            obj.insert("prefactor".into(), coefficient(prefactor));
            obj.insert("beta".into(), rat_vec(beta));
        }
        TransformStep::ExpScaling { lambda } => {
            obj.insert("lambda".into(), coeff_vec(lambda));
        }
        TransformStep::ExpNtt { gamma } => {
            obj.insert("gamma".into(), coefficient(gamma));
        }
    }
    Value::Object(obj)
}

pub fn reduction(r: &ReductionResult) -> Value {
    let constants: Vec<Value> = r
        .constants
        .iter()
        .map(|c| {
            json!({
                "variable": r.reduced.var_names()[c.variable],
                "exponents": rat_vec(&c.exponents),
                "time_rate": coefficient(&c.time_rate),
            })
        })
        .collect();
    let transformed = r.transformed.as_ref().map(|t| {
        json!({
            "B_prime": rat_matrix(&t.b),
            "A_prime": coeff_matrix(&t.a),
            "lambda_prime": coeff_vec(&t.lambda),
        })
    });
    json!({
        "case": r.case.to_string(),
        "C": r.qmt.as_ref().map(rat_matrix),
        "C_inverse": r.qmt.as_ref().and_then(|c| c.inverse().ok()).as_ref().map(rat_matrix),
        "transformed": transformed,
        "chain": Value::Array(r.chain.steps.iter().map(step).collect()),
        "reduced": reduced_system(&r.reduced),
        "decoupled_variable": r.reduced.var_names().get(r.decoupled_index),
        "replaced_index": r.replaced_index,
        "quadrature_note": r.quadrature_note,
        "constants_of_motion": constants,
    })
}

pub fn verification(v: &VerifyReport) -> Value {
    json!({
        "max_rel_error": v.max_rel_error,
        "per_variable": v.per_variable,
        "quadrature_error": v.quadrature_error,
        "constants_drift": v.constants_drift,
        "residual": v.residual,
        "fd_residual": v.fd_residual,
        "steps_taken": v.steps_taken,
        "tol": v.tol,
        "threshold": v.threshold(),
        "samples": v.samples,
        "t_end": v.t_end,
        "tau_end": v.tau_end,
        "passed": v.passed(),
    })
}

/// One command's report. `text` is the human-readable output.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub file: String,
    pub digest: String,
    pub exit_code: i32,
    pub sections: Map<String, Value>,
    pub text: String,
}

impl Report {
    pub fn new(command: &str, file: &str, input: &[u8]) -> Self {
        Report {
            command: command.into(),
            file: file.into(),
            digest: digest(input),
            exit_code: 0,
            sections: Map::new(),
            text: String::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.sections.insert(key.into(), value);
    }

    pub fn line(&mut self, line: impl AsRef<str>) {
        self.text.push_str(line.as_ref());
        self.text.push('\n');
    }

    pub fn to_value(&self) -> Value {
        let mut obj = self.sections.clone();
        obj.insert("schema".into(), Value::String(SCHEMA.into()));
        obj.insert("command".into(), Value::String(self.command.clone()));
        obj.insert(
            "input".into(),
            json!({ "file": self.file, "sha256": self.digest }),
        );
        obj.insert("exit_code".into(), json!(self.exit_code));
        Value::Object(obj)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("serializable");
        s.push('\n');
        s
    }

    /// Generic indented dump of every section.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        dump(&mut out, 0, &self.to_value());
        out
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) if !s.contains('\n') => Some(s.clone()),
        Value::Array(items) if items.iter().all(|i| !i.is_array() && !i.is_object()) => {
            Some(format!(
                "[{}]",
                items
                    .iter()
                    .map(|i| scalar(i).unwrap_or_default())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        }
        _ => None,
    }
}

fn dump(out: &mut String, indent: usize, v: &Value) {
    let pad = "  ".repeat(indent);
    match v {
        Value::Object(map) => {
            for (k, item) in map {
                match scalar(item) {
                    Some(s) => out.push_str(&format!("{pad}{k}: {s}\n")),
                    None => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        dump(out, indent + 1, item);
                    }
                }
            }
        }
        Value::Array(items) => {
            for item in items {
                match scalar(item) {
                    Some(s) => out.push_str(&format!("{pad}{s}\n")),
                    None => {
                        out.push_str(&format!("{pad}-\n"));
                        dump(out, indent + 1, item);
                    }
                }
            }
        }
        Value::String(s) => {
            for l in s.lines() {
                out.push_str(&format!("{pad}{l}\n"));
            }
        }
        other => out.push_str(&format!("{pad}{}\n", scalar(other).unwrap_or_default())),
    }
}
