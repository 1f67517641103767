use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use agentask_core::env::{EnvConfig, Environment};
use agentask_core::types::{Action, EdgeState, ErrorType, Side};
use agentask_core::question;
use agentask_core::message::EdgeView;
use agentask_gateway::*;

fn state(kind: Option<ErrorType>, steps: usize) -> EdgeState {
    let cfg = kind.map_or_else(EnvConfig::fault_free, EnvConfig::forced);
    let env = Environment::new(EnvConfig { chain_length_range: (6, 6), ..cfg }).unwrap();
    let mut ep = env.reset(3);
    for _ in 0..steps {
        ep.apply_action(&Action::none()).unwrap();
    }
    ep.emit_edge().unwrap()
}

/// Serves the canned `(status, body)` responses in order, one per connection,
/// and reports each request body it saw.
fn stub(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            tx.send(String::from_utf8(buf).unwrap()).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1/chat/completions"), rx)
}

fn completion(content: &str, usage: bool) -> String {
    let mut v = serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    });
    if usage {
        v["usage"] = serde_json::json!({"prompt_tokens": 321, "completion_tokens": 12, "total_tokens": 333});
    }
    v.to_string()
}

fn config(endpoint: String) -> GatewayConfig {
    GatewayConfig { endpoint, timeout_secs: 5, ..GatewayConfig::default() }
}

#[test]
fn prompt_starts_with_the_instruction_and_is_stable() {
    let s = state(Some(ErrorType::DataGap), 0);
    let p = render_clarifier_prompt(&s);
    assert!(p.starts_with("You are AgentAsk, an edge-level clarifier between two agents."));
    assert!(p.contains("Output only the required JSON."));
    assert_eq!(p, render_clarifier_prompt(&s.clone()));
    assert!(p.contains("\nhistory: none\n"));
    let later = render_clarifier_prompt(&state(None, 2));
    assert!(!later.contains("history: none"));
    assert!(later.contains("- a0 -> a1: "));
}

#[test]
fn parses_the_documented_replies() {
    let s = state(None, 1);
    let none = parse_clarifier_reply(r#"{"type":"NONE","to_agent":null,"question":""}"#, &s);
    assert!(none.format_flag);
    assert_eq!(none.parsed, Some(Action::none()));

    let sc = parse_clarifier_reply(
        r#"{"type":"SC","to_agent":"sender","question":"Should teaspoons be converted to cups before calculating the total?"}"#,
        &s,
    );
    let a = sc.parsed.unwrap();
    assert_eq!(a.error_type, ErrorType::SignalCorruption);
    assert_eq!(a.addressee.as_ref(), Some(s.addressee(Side::Sender)));
    assert_eq!(a.question.unwrap().template_id, "freeform");

    let prose = parse_clarifier_reply("I think the sender should double-check.", &s);
    assert!(!prose.format_flag && prose.parsed.is_none());
    let stranger = parse_clarifier_reply(r#"{"type":"DG","to_agent":"a77","question":"which?"}"#, &s);
    assert!(!stranger.format_flag && stranger.parsed.is_none());
}

#[test]
fn render_then_parse_is_lossless_for_every_type() {
    let s = state(Some(ErrorType::ReferentialDrift), 2);
    let view = EdgeView::new(&s);
    for kind in ErrorType::ALL {
        for side in Side::ALL {
            let action = if kind == ErrorType::None {
                Action::none()
            } else {
                Action::ask(kind, s.addressee(side).clone(), question::build(kind, 1, &s, &view).unwrap())
            };
            let back = parse_clarifier_reply(&render_reply(&action, &s), &s).parsed.unwrap();
            assert_eq!(back.gate, action.gate);
            assert_eq!(back.error_type, action.error_type);
            assert_eq!(back.addressee, action.addressee);
            assert_eq!(back.question.map(|q| q.rendered), action.question.map(|q| q.rendered));
        }
    }
}

#[test]
fn stub_round_trip_yields_an_action() {
    let s = state(Some(ErrorType::CapabilityGap), 0);
    let canned = r#"{"type":"CG","to_agent":"receiver","question":"Can a1 run this step?"}"#;
    let (url, seen) = stub(vec![(200, completion(canned, true))]);
    let clarifier = LlmClarifier::new(config(url));
    let (reply, usage) = clarifier.decide::<Vec<u8>>(&s, None).unwrap();
    let a = reply.parsed.unwrap();
    assert_eq!(a.error_type, ErrorType::CapabilityGap);
    assert_eq!(a.addressee.as_ref(), Some(&s.receiver));
    assert_eq!(usage, Usage { prompt_tokens: 321, completion_tokens: 12, estimated: false });

    let body: serde_json::Value = serde_json::from_str(&seen.recv().unwrap()).unwrap();
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], SYSTEM_PROMPT);
}

#[test]
fn server_error_is_retried_once() {
    let (url, _seen) = stub(vec![(500, "{}".into()), (200, completion("{}", true))]);
    let req = config(url).request(vec![ChatMessage::new("user", "hi")]);
    let mut log = WireLog::new(Vec::new());
    let resp = chat_roundtrip(&req, 2, Some(&mut log)).unwrap();
    assert_eq!(resp.retry_count, 1);
    let lines: Vec<serde_json::Value> = String::from_utf8(log.into_inner())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["status"], 500);
    assert_eq!(lines[1]["ok"], true);
}

#[test]
fn missing_usage_is_estimated() {
    let (url, _seen) = stub(vec![(200, completion("one two three", false))]);
    let req = config(url).request(vec![ChatMessage::new("user", "a b c d")]);
    let resp = chat_roundtrip::<Vec<u8>>(&req, 0, None).unwrap();
    assert_eq!(resp.usage, Usage { prompt_tokens: 4, completion_tokens: 3, estimated: true });
}

#[test]
fn exhausted_retries_carry_the_status() {
    let (url, _seen) = stub(vec![(503, "busy".into()), (503, "busy".into())]);
    let req = config(url).request(vec![ChatMessage::new("user", "x")]);
    match chat_roundtrip::<Vec<u8>>(&req, 1, None) {
        Err(GatewayError::Http { status: 503, attempts: 2, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = stub(vec![(400, "bad".into())]);
    let req = config(url).request(vec![ChatMessage::new("user", "x")]);
    assert!(matches!(chat_roundtrip::<Vec<u8>>(&req, 3, None), Err(GatewayError::Http { status: 400, attempts: 1, .. })));
    assert!(seen.recv().is_ok());
}

#[test]
fn judge_labels_map_onto_the_template_library() {
    let s = state(Some(ErrorType::DataGap), 0);
    let canned = r#"{"type":"DG","to_agent":"sender","question":"What value should be used?"}"#;
    let (url, _seen) = stub(vec![(200, completion(canned, true))]);
    let label = LlmClarifier::new(config(url)).label::<Vec<u8>>(&s, None).unwrap();
    assert_eq!(label.error_type, ErrorType::DataGap);
    assert!(question::is_canonical(ErrorType::DataGap, label.question.as_ref().unwrap()));
}
