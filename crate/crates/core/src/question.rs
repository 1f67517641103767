//! Question-template library.
//!
//! Each fault type owns a fixed list of templates with typed slots. Slots are
//! filled deterministically from the edge state, so choosing a question is a
//! categorical choice over the type's templates.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::message::EdgeView;
use crate::types::{whitespace_tokens, EdgeState, ErrorType, QuestionSpec};

/// Slot kinds a template may reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Field,
    Symbol,
    Alias,
    Expected,
    Value,
    Range,
    Unit,
    Receiver,
    Capability,
}

impl Slot {
    fn placeholder(self) -> &'static str {
        match self {
            Slot::Field => "{field}",
            Slot::Symbol => "{symbol}",
            Slot::Alias => "{alias}",
            Slot::Expected => "{expected}",
            Slot::Value => "{value}",
            Slot::Range => "{range}",
            Slot::Unit => "{unit}",
            Slot::Receiver => "{receiver}",
            Slot::Capability => "{capability}",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Template {
    pub id: &'static str,
    pub error_type: ErrorType,
    pub text: &'static str,
    pub slots: &'static [Slot],
}

use Slot::*;

const DG: [Template; 4] = [
    Template { id: "dg.field", error_type: ErrorType::DataGap, text: "What is the missing {field} for {symbol}?", slots: &[Field, Symbol] },
    Template { id: "dg.unit", error_type: ErrorType::DataGap, text: "Which unit applies to {symbol}?", slots: &[Symbol] },
    Template { id: "dg.task", error_type: ErrorType::DataGap, text: "Which operation should be applied to {symbol}?", slots: &[Symbol] },
    Template { id: "dg.list", error_type: ErrorType::DataGap, text: "Please resend {symbol} with every required field, including {field}.", slots: &[Symbol, Field] },
];

const RD: [Template; 4] = [
    Template { id: "rd.bind", error_type: ErrorType::ReferentialDrift, text: "Does {alias} refer to {expected}?", slots: &[Alias, Expected] },
    Template { id: "rd.which", error_type: ErrorType::ReferentialDrift, text: "Which value is {alias} bound to?", slots: &[Alias] },
    Template { id: "rd.swap", error_type: ErrorType::ReferentialDrift, text: "Should the step use {expected} instead of {alias}?", slots: &[Expected, Alias] },
    Template { id: "rd.confirm", error_type: ErrorType::ReferentialDrift, text: "Confirm the symbol carried forward: {alias} or {expected}?", slots: &[Alias, Expected] },
];

const SC: [Template; 4] = [
    Template { id: "sc.range", error_type: ErrorType::SignalCorruption, text: "Is {value} correct for {symbol} given the expected range {range}?", slots: &[Value, Symbol, Range] },
    Template { id: "sc.scale", error_type: ErrorType::SignalCorruption, text: "Was {value} {unit} converted to the right scale?", slots: &[Value, Unit] },
    Template { id: "sc.recheck", error_type: ErrorType::SignalCorruption, text: "Please recheck the value of {symbol}.", slots: &[Symbol] },
    Template { id: "sc.magnitude", error_type: ErrorType::SignalCorruption, text: "Confirm the magnitude of {symbol}: is it really {value}?", slots: &[Symbol, Value] },
];

const CG: [Template; 4] = [
    Template { id: "cg.reroute", error_type: ErrorType::CapabilityGap, text: "Can {receiver} perform {capability}, or should this step be rerouted?", slots: &[Receiver, Capability] },
    Template { id: "cg.forward", error_type: ErrorType::CapabilityGap, text: "Please reroute the {capability} step to an agent that has {capability}.", slots: &[Capability, Capability] },
    Template { id: "cg.who", error_type: ErrorType::CapabilityGap, text: "Who can handle {capability} for {symbol}?", slots: &[Capability, Symbol] },
    Template { id: "cg.handoff", error_type: ErrorType::CapabilityGap, text: "Should {receiver} hand the {capability} request to another agent?", slots: &[Receiver, Capability] },
];

pub const TEMPLATES_PER_TYPE: usize = 4;

/// Templates for a fault type; empty for `NONE`.
pub fn templates(error_type: ErrorType) -> &'static [Template] {
    match error_type {
        ErrorType::DataGap => &DG,
        ErrorType::ReferentialDrift => &RD,
        ErrorType::SignalCorruption => &SC,
        ErrorType::CapabilityGap => &CG,
        ErrorType::None => &[],
    }
}

pub fn template_index(error_type: ErrorType, template_id: &str) -> Option<usize> {
    templates(error_type).iter().position(|t| t.id == template_id)
}

/// Content hash of the whole library; checkpoints pin it.
pub fn library_hash() -> String {
    let mut h = Sha256::new();
    for t in ErrorType::FAULTS {
        for tpl in templates(t) {
            h.update(tpl.id.as_bytes());
            h.update([0u8]);
            h.update(tpl.text.as_bytes());
            h.update([0u8]);
        }
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Longest question any template can render; every slot filler is one token.
pub fn max_question_tokens() -> u32 {
    ErrorType::FAULTS
        .iter()
        .flat_map(|t| templates(*t))
        .map(|t| whitespace_tokens(t.text))
        .max()
        .unwrap_or(0)
}

fn single_token(s: &str) -> String {
    let s: String = s.split_whitespace().collect::<Vec<_>>().join("_");
    if s.is_empty() {
        "?".to_string()
    } else {
        s
    }
}

/// Fills a slot from the observable edge state.
pub fn slot_value(slot: Slot, state: &EdgeState, view: &EdgeView) -> String {
    let msg = |k: &str| view.message.get(k).map(str::to_string);
    let raw = match slot {
        Field => view.first_missing().map(str::to_string).or_else(|| Some("value".into())),
        Symbol => msg("out").or_else(|| msg("ref")),
        Alias => msg("ref"),
        Expected => view.expected_ref.clone(),
        Value => msg("value"),
        Range => view.query.get("range").map(str::to_string),
        Unit => msg("unit").or_else(|| view.query.get("unit").map(str::to_string)),
        Receiver => Some(state.receiver.0.clone()),
        Capability => msg("requires"),
    };
    single_token(raw.as_deref().unwrap_or("?"))
}

pub fn render(template: &Template, slots: &[String]) -> String {
    let mut out = template.text.to_string();
    for (slot, value) in template.slots.iter().zip(slots) {
        out = out.replacen(slot.placeholder(), value, 1);
    }
    out
}

/// Builds the question for template `index` of `error_type` at `state`.
pub fn build(error_type: ErrorType, index: usize, state: &EdgeState, view: &EdgeView) -> Result<QuestionSpec> {
    let tpl = templates(error_type).get(index).ok_or_else(|| {
        Error::Contract(format!("template {index} outside the {error_type} library"))
    })?;
    let slots: Vec<String> = tpl.slots.iter().map(|s| slot_value(*s, state, view)).collect();
    let rendered = render(tpl, &slots);
    Ok(QuestionSpec {
        template_id: tpl.id.to_string(),
        token_count: whitespace_tokens(&rendered),
        slots,
        rendered,
    })
}

/// Checks that `q` is exactly what its template renders with its slots.
pub fn is_canonical(error_type: ErrorType, q: &QuestionSpec) -> bool {
    let Some(i) = template_index(error_type, &q.template_id) else {
        return false;
    };
    let tpl = &templates(error_type)[i];
    q.slots.len() == tpl.slots.len()
        && render(tpl, &q.slots) == q.rendered
        && whitespace_tokens(&q.rendered) == q.token_count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::DEFAULT_TOKEN_CAP;

    #[test]
    fn library_shape() {
        for t in ErrorType::FAULTS {
            let lib = templates(t);
            assert!(lib.len() >= 4);
            for tpl in lib {
                assert_eq!(tpl.error_type, t);
                let placeholders = tpl.text.matches('{').count();
                assert_eq!(placeholders, tpl.slots.len(), "{}", tpl.id);
            }
        }
        assert!(templates(ErrorType::None).is_empty());
        assert!(max_question_tokens() <= DEFAULT_TOKEN_CAP);
        assert_eq!(library_hash().len(), 64);
    }

    #[test]
    fn rendering_is_deterministic_and_canonical() {
        let tpl = &RD[0];
        let slots = vec!["T2".to_string(), "T1".to_string()];
        assert_eq!(render(tpl, &slots), "Does T2 refer to T1?");
        let q = QuestionSpec {
            template_id: tpl.id.into(),
            slots: slots.clone(),
            rendered: render(tpl, &slots),
            token_count: 5,
        };
        assert!(is_canonical(ErrorType::ReferentialDrift, &q));
        assert!(!is_canonical(ErrorType::DataGap, &q));
    }
}
