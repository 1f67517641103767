//! Wire format of pipeline messages and queries.
//!
//! Agents exchange whitespace-separated `key=value` pairs, for example
//! `ref=T1 value=36 unit=kg task=mul:3 out=T2 requires=arith`. Values never
//! contain whitespace, so every pair is exactly one token.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::types::EdgeState;

/// Fields every clean handoff carries, in emission order.
pub const SCHEMA_FIELDS: [&str; 6] = ["ref", "value", "unit", "task", "out", "requires"];

/// Fields a data-gap fault may drop.
pub const DROPPABLE_FIELDS: [&str; 3] = ["value", "unit", "task"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Fields(Vec<(String, String)>);

impl Fields {
    pub fn parse(text: &str) -> Self {
        Fields(
            text.split_whitespace()
                .filter_map(|tok| tok.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.0.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.0.push((key.to_string(), value)),
        }
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        let pos = self.0.iter().position(|(k, _)| k == key)?;
        Some(self.0.remove(pos).1)
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.0.push((key.to_string(), value.into()));
    }

    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Arithmetic step an agent applies to its operand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Add(i64),
    Mul(i64),
}

impl Op {
    pub fn apply(self, x: i64) -> i64 {
        match self {
            Op::Add(c) => x + c,
            Op::Mul(k) => x * k,
        }
    }

    pub fn render(self) -> String {
        match self {
            Op::Add(c) => format!("add:{c}"),
            Op::Mul(k) => format!("mul:{k}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (name, arg) = s.split_once(':')?;
        let arg: i64 = arg.parse().ok()?;
        match name {
            "add" => Some(Op::Add(arg)),
            "mul" => Some(Op::Mul(arg)),
            _ => None,
        }
    }
}

/// Parsed roster entry `agent:cap+cap`.
pub fn parse_roster(text: &str) -> Vec<(String, BTreeSet<String>)> {
    text.split(',')
        .filter_map(|entry| entry.split_once(':'))
        .map(|(agent, caps)| {
            (
                agent.to_string(),
                caps.split('+').filter(|c| !c.is_empty()).map(str::to_string).collect(),
            )
        })
        .collect()
}

pub fn parse_range(text: &str) -> Option<(i64, i64)> {
    let (lo, hi) = text.split_once("..")?;
    Some((lo.parse().ok()?, hi.parse().ok()?))
}

/// Structured view of an edge state, shared by featurization and question slot filling.
#[derive(Clone, Debug)]
pub struct EdgeView {
    pub message: Fields,
    pub query: Fields,
    /// Symbol the message should reference: the previous handoff's output or the query's start.
    pub expected_ref: Option<String>,
    pub receiver_caps: Option<BTreeSet<String>>,
    pub roster_len: usize,
}

impl EdgeView {
    pub fn new(state: &EdgeState) -> Self {
        let message = Fields::parse(&state.message);
        let query = Fields::parse(&state.query);
        let expected_ref = match state.history.last() {
            Some(h) => Fields::parse(&h.message).get("out").map(str::to_string),
            None => query.get("start").map(str::to_string),
        };
        let roster = query.get("roster").map(parse_roster).unwrap_or_default();
        let receiver_caps = roster
            .iter()
            .find(|(a, _)| a == state.receiver.as_str())
            .map(|(_, caps)| caps.clone());
        EdgeView {
            message,
            query,
            expected_ref,
            receiver_caps,
            roster_len: roster.len(),
        }
    }

    pub fn missing(&self, field: &str) -> bool {
        self.message.get(field).is_none()
    }

    pub fn first_missing(&self) -> Option<&'static str> {
        SCHEMA_FIELDS.into_iter().find(|f| self.missing(f))
    }

    pub fn ref_consistent(&self) -> bool {
        match (self.message.get("ref"), &self.expected_ref) {
            (Some(r), Some(e)) => r == e,
            _ => false,
        }
    }

    pub fn value(&self) -> Option<i64> {
        self.message.get("value").and_then(|v| v.parse().ok())
    }

    pub fn range(&self) -> Option<(i64, i64)> {
        self.query.get("range").and_then(parse_range)
    }

    /// `false` only when a value is present and outside the declared range.
    pub fn value_plausible(&self) -> bool {
        match (self.value(), self.range()) {
            (Some(v), Some((lo, hi))) => lo <= v && v <= hi,
            _ => true,
        }
    }

    pub fn capability_match(&self) -> bool {
        match (self.message.get("requires"), &self.receiver_caps) {
            (Some(req), Some(caps)) => caps.contains(req),
            (None, _) => true,
            (Some(_), None) => false,
        }
    }

    pub fn unit_match(&self) -> bool {
        match (self.message.get("unit"), self.query.get("unit")) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }
}
