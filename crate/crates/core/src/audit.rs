//! Trace analytics: fault-type distribution, one-shot resolution and overhead.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{ErrorType, Trajectory};

/// Share of each fault type among labeled faulted edges.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Distribution {
    pub fractions: BTreeMap<ErrorType, f64>,
    pub faulted_edges: usize,
    pub clean_edges: usize,
    /// Edges whose trace carries no gold label.
    pub unlabeled: usize,
}

#[derive(Default)]
struct Counts {
    per_type: [usize; 5],
    unlabeled: usize,
}

pub fn annotate_distribution(traces: &[Trajectory]) -> Distribution {
    let counts = traces
        .par_iter()
        .map(|t| {
            let mut c = Counts::default();
            for r in &t.records {
                match r.gold_type {
                    Some(k) => c.per_type[k.index()] += 1,
                    None => c.unlabeled += 1,
                }
            }
            c
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Counts::default(), |mut acc, c| {
            for (a, b) in acc.per_type.iter_mut().zip(c.per_type) {
                *a += b;
            }
            acc.unlabeled += c.unlabeled;
            acc
        });
    let faulted: usize = ErrorType::FAULTS.iter().map(|k| counts.per_type[k.index()]).sum();
    let fractions = if faulted == 0 {
        BTreeMap::new()
    } else {
        ErrorType::FAULTS
            .iter()
            .filter(|k| counts.per_type[k.index()] > 0)
            .map(|k| (*k, counts.per_type[k.index()] as f64 / faulted as f64))
            .collect()
    };
    Distribution {
        fractions,
        faulted_edges: faulted,
        clean_edges: counts.per_type[ErrorType::NONE_INDEX],
        unlabeled: counts.unlabeled,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OneShot {
    /// First asks on faulted edges of this type.
    pub first_asks: usize,
    pub resolved: usize,
    /// Absent when no ask was made on this type.
    pub rate: Option<f64>,
}

/// Per gold type, the share of first asks on a faulted edge that left nothing unresolved.
pub fn one_shot_resolution(traces: &[Trajectory]) -> BTreeMap<ErrorType, OneShot> {
    let mut asks = [0usize; 5];
    let mut resolved = [0usize; 5];
    for t in traces {
        for r in &t.records {
            match r.gold_type {
                Some(k) if k.is_fault() && r.action.gate => {
                    asks[k.index()] += 1;
                    resolved[k.index()] += usize::from(!r.residual_flag);
                }
                _ => {}
            }
        }
    }
    ErrorType::FAULTS
        .iter()
        .map(|k| {
            let i = k.index();
            let rate = (asks[i] > 0).then(|| resolved[i] as f64 / asks[i] as f64);
            (*k, OneShot { first_asks: asks[i], resolved: resolved[i], rate })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Overhead {
    pub accuracy: f64,
    pub latency_pct: f64,
    pub extra_cost_pct: f64,
    pub asks_per_episode: f64,
}

fn env_hash(traces: &[Trajectory], what: &str) -> Result<Option<String>> {
    let mut hash: Option<&str> = None;
    for t in traces {
        match hash {
            None => hash = Some(&t.env_hash),
            Some(h) if h != t.env_hash => {
                return Err(Error::Data(format!(
                    "{what} traces mix environment configs {h} and {}",
                    t.env_hash
                )))
            }
            _ => {}
        }
    }
    Ok(hash.map(str::to_string))
}

/// Accuracy and overhead of `traces` normalized against a never-ask baseline.
pub fn overhead_metrics(traces: &[Trajectory], baseline: &[Trajectory]) -> Result<Overhead> {
    if traces.is_empty() || baseline.is_empty() {
        return Err(Error::Data("overhead metrics need non-empty traces and baseline".into()));
    }
    let (a, b) = (env_hash(traces, "evaluated")?, env_hash(baseline, "baseline")?);
    if a != b {
        return Err(Error::Data(format!(
            "environment config mismatch: traces {} vs baseline {}",
            a.unwrap_or_default(),
            b.unwrap_or_default()
        )));
    }
    let n = traces.len() as f64;
    let mean = |ts: &[Trajectory], f: &dyn Fn(&Trajectory) -> f64| ts.iter().map(f).sum::<f64>() / ts.len() as f64;
    let latency = mean(traces, &|t| t.latency_units() as f64);
    let base_latency = mean(baseline, &|t| t.latency_units() as f64);
    let cost = mean(traces, &|t| t.cost_tokens() as f64);
    let base_total = mean(baseline, &|t| (t.base_tokens + t.cost_tokens()) as f64);
    Ok(Overhead {
        accuracy: traces.iter().filter(|t| t.terminal_score).count() as f64 / n,
        latency_pct: 100.0 * latency / base_latency,
        extra_cost_pct: 100.0 * cost / base_total,
        asks_per_episode: traces.iter().map(|t| t.asks()).sum::<usize>() as f64 / n,
    })
}

pub fn distribution_csv(d: &Distribution) -> String {
    let mut out = String::from("type,fraction\n");
    for (k, f) in &d.fractions {
        let _ = writeln!(out, "{k},{f}");
    }
    let _ = writeln!(out, "unlabeled,{}", d.unlabeled);
    out
}

pub fn one_shot_csv(m: &BTreeMap<ErrorType, OneShot>) -> String {
    let mut out = String::from("type,first_asks,resolved,rate\n");
    for (k, o) in m {
        let rate = o.rate.map_or_else(|| "absent".to_string(), |r| r.to_string());
        let _ = writeln!(out, "{k},{},{},{rate}", o.first_asks, o.resolved);
    }
    out
}

pub fn overhead_csv(o: &Overhead) -> String {
    format!(
        "accuracy,latency_pct,extra_cost_pct,asks_per_episode\n{},{},{},{}\n",
        o.accuracy, o.latency_pct, o.extra_cost_pct, o.asks_per_episode
    )
}

/// Human-readable summary of all three reports.
pub fn text_report(d: &Distribution, one_shot: &BTreeMap<ErrorType, OneShot>, overhead: Option<&Overhead>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "fault distribution over {} faulted edges ({} clean, {} unlabeled):", d.faulted_edges, d.clean_edges, d.unlabeled);
    for (k, f) in &d.fractions {
        let _ = writeln!(out, "  {k:<4} {:6.2}%", 100.0 * f);
    }
    let _ = writeln!(out, "one-shot resolution:");
    for (k, o) in one_shot {
        match o.rate {
            Some(r) => {
                let _ = writeln!(out, "  {k:<4} {:6.2}% of {} asks", 100.0 * r, o.first_asks);
            }
            None => {
                let _ = writeln!(out, "  {k:<4} absent (no asks)");
            }
        }
    }
    if let Some(o) = overhead {
        let _ = writeln!(
            out,
            "accuracy {:.2}%  latency {:.1}  extra cost {:.2}%  asks/episode {:.3}",
            100.0 * o.accuracy,
            o.latency_pct,
            o.extra_cost_pct,
            o.asks_per_episode
        );
    }
    out
}

#[cfg(test)]
mod tests;
