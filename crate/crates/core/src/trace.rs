//! Line-delimited JSON trace files.
//!
//! ```text
//! {"version":1,"kind":"agentask-trace"}
//! {"kind":"edge", ...edge record...}        one per handoff
//! {"kind":"terminal", ...episode outcome...} closes an episode
//! ```
//! A file holds one header followed by any number of episodes. Decoding is
//! strict: unknown fields, missing fields and version mismatches are errors.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::exact::Exact;
use crate::types::{EdgeRecord, Trajectory};

pub const TRACE_VERSION: u32 = 1;
pub const TRACE_KIND: &str = "agentask-trace";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: Value,
    kind: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Terminal {
    terminal_score: bool,
    terminal_reward: Exact,
    episode_seed: u64,
    base_tokens: u64,
    env_hash: String,
}

pub fn header_line() -> String {
    format!("{{\"version\":{TRACE_VERSION},\"kind\":\"{TRACE_KIND}\"}}")
}

fn tagged<T: Serialize>(kind: &str, body: &T) -> String {
    let mut obj = Map::new();
    obj.insert("kind".into(), Value::String(kind.into()));
    match serde_json::to_value(body).expect("trace types serialize") {
        Value::Object(fields) => obj.extend(fields),
        _ => unreachable!("trace bodies are objects"),
    }
    Value::Object(obj).to_string()
}

fn body_lines(t: &Trajectory, out: &mut Vec<String>) {
    for r in &t.records {
        out.push(tagged("edge", r));
    }
    out.push(tagged(
        "terminal",
        &Terminal {
            terminal_score: t.terminal_score,
            terminal_reward: t.terminal_reward,
            episode_seed: t.episode_seed,
            base_tokens: t.base_tokens,
            env_hash: t.env_hash.clone(),
        },
    ));
}

/// Encodes one trajectory as a self-contained trace (header included).
pub fn encode_trace(t: &Trajectory) -> Vec<String> {
    encode_traces(std::slice::from_ref(t))
}

pub fn encode_traces(ts: &[Trajectory]) -> Vec<String> {
    let mut out = vec![header_line()];
    for t in ts {
        body_lines(t, &mut out);
    }
    out
}

pub fn write_traces<W: Write>(mut w: W, ts: &[Trajectory]) -> Result<()> {
    for line in encode_traces(ts) {
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Decodes every episode in a trace. Blank lines are ignored.
pub fn decode_traces<'a, I>(lines: I) -> Result<Vec<Trajectory>>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = Vec::new();
    let mut pending: Vec<EdgeRecord> = Vec::new();
    let mut saw_header = false;
    let mut last_line = 0;
    for (i, raw) in lines.into_iter().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(raw).map_err(|e| parse_err(line_no, e.to_string()))?;
        let Value::Object(mut obj) = value else {
            return Err(parse_err(line_no, "expected a JSON object"));
        };
        if !saw_header {
            let header: Header = serde_json::from_value(Value::Object(obj))
                .map_err(|e| parse_err(line_no, format!("bad header: {e}")))?;
            if header.kind != TRACE_KIND {
                return Err(parse_err(line_no, format!("unexpected trace kind {:?}", header.kind)));
            }
            if header.version != TRACE_VERSION {
                return Err(Error::Version { expected: TRACE_VERSION, found: header.version.to_string() });
            }
            saw_header = true;
            continue;
        }
        let kind = match obj.remove("kind") {
            Some(Value::String(k)) => k,
            _ => return Err(parse_err(line_no, "missing string field `kind`")),
        };
        match kind.as_str() {
            "edge" => {
                let rec: EdgeRecord = serde_json::from_value(Value::Object(obj))
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
                pending.push(rec);
            }
            "terminal" => {
                let t: Terminal = serde_json::from_value(Value::Object(obj))
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
                out.push(Trajectory {
                    records: std::mem::take(&mut pending),
                    terminal_score: t.terminal_score,
                    terminal_reward: t.terminal_reward,
                    episode_seed: t.episode_seed,
                    base_tokens: t.base_tokens,
                    env_hash: t.env_hash,
                });
            }
            other => return Err(parse_err(line_no, format!("unknown line kind {other:?}"))),
        }
    }
    if !saw_header {
        return Err(parse_err(last_line.max(1), "missing trace header"));
    }
    if !pending.is_empty() {
        return Err(parse_err(last_line, "episode without terminal record"));
    }
    Ok(out)
}

/// Decodes a trace that must contain exactly one episode.
pub fn decode_trace<'a, I>(lines: I) -> Result<Trajectory>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut all = decode_traces(lines)?;
    if all.len() != 1 {
        return Err(Error::Data(format!("expected one episode, found {}", all.len())));
    }
    Ok(all.remove(0))
}

pub fn read_traces<R: BufRead>(r: R) -> Result<Vec<Trajectory>> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    decode_traces(lines.iter().map(String::as_str))
}
