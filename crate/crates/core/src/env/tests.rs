use super::*;
use crate::message::EdgeView;
use crate::question;

fn env(cfg: EnvConfig) -> Environment {
    Environment::new(cfg).unwrap()
}

fn ask(state: &EdgeState, kind: ErrorType, side: Side, template: usize) -> Action {
    let view = EdgeView::new(state);
    let q = question::build(kind, template, state, &view).unwrap();
    Action::ask(kind, state.addressee(side).clone(), q)
}

/// Executes delivered handoffs the way receivers read them and returns the final value.
fn execute_delivered(episode: &EpisodeState) -> i64 {
    let query = Fields::parse(&episode.task.query_for(0));
    let mut bindings = std::collections::HashMap::new();
    let mut carried: i64 = query.get("value").unwrap().parse().unwrap();
    bindings.insert("T0".to_string(), carried);
    let mut expected_ref = "T0".to_string();
    for (t, h) in episode.history().iter().enumerate() {
        let m = Fields::parse(&h.message);
        let receiver_caps = &episode.task.capabilities[t + 1];
        let value = m.get("value").and_then(|v| v.parse::<i64>().ok());
        let sender_factor = match (value, m.get("value")) {
            // delivered value relative to the clean one carries any corruption
            (Some(v), _) => v as f64 / episode.task.clean_values()[t] as f64,
            _ => 1.0,
        };
        let operand = if m.get("value").is_none() || m.get("unit").is_none() {
            0
        } else if m.get("ref") != Some(expected_ref.as_str()) {
            *bindings.get(m.get("ref").unwrap()).unwrap_or(&0)
        } else {
            (carried as f64 * sender_factor).round() as i64
        };
        let result = match (m.get("task").and_then(Op::parse), m.get("requires")) {
            (Some(op), Some(req)) if receiver_caps.iter().any(|c| c == req) => op.apply(operand),
            _ => operand,
        };
        let out = m.get("out").unwrap().to_string();
        bindings.insert(out.clone(), result);
        expected_ref = out;
        carried = result;
    }
    carried
}

#[test]
fn reset_is_deterministic() {
    let e = env(EnvConfig::default());
    let a = e.reset(7);
    let b = e.reset(7);
    assert_eq!(a.task, b.task);
    assert_eq!(a.plan, b.plan);
    assert_eq!(a.emit_edge().unwrap(), b.emit_edge().unwrap());
    assert_eq!(a.cursor, 0);
    assert_eq!(a.tokens_spent, 0);
}

#[test]
fn invalid_configs_are_rejected() {
    let c = EnvConfig { chain_length_range: (1, 4), ..Default::default() };
    assert!(matches!(Environment::new(c), Err(Error::Config(_))));
    let c = EnvConfig { injection_probabilities: InjectionMix::only(ErrorType::DataGap, 0.7), ..Default::default() };
    let mut c2 = c.clone();
    c2.injection_probabilities.signal_corruption = 0.5;
    assert!(Environment::new(c).is_ok());
    assert!(matches!(Environment::new(c2), Err(Error::Config(_))));
}

#[test]
fn zero_probabilities_inject_nothing() {
    let e = env(EnvConfig { fault_rate: 1.0, ..EnvConfig::fault_free() });
    for seed in 0..50 {
        let mut ep = e.reset(seed);
        assert!(ep.plan.faults.iter().all(Option::is_none));
        while !ep.is_terminal() {
            let out = ep.apply_action(&Action::none()).unwrap();
            assert!(!out.residual_flag);
        }
        assert!(ep.terminal_score().unwrap());
    }
}

#[test]
fn forced_data_gap_on_every_edge() {
    let cfg = EnvConfig { chain_length_range: (4, 4), ..EnvConfig::forced(ErrorType::DataGap) };
    let faulty = env(cfg.clone());
    let clean = env(EnvConfig { injection_probabilities: InjectionMix::zero(), ..cfg });
    let ep = faulty.reset(3);
    assert_eq!(ep.edges(), 3);
    let reference = clean.reset(3);
    for t in 0..3 {
        let got = Fields::parse(&ep.candidate_message(t));
        let want = Fields::parse(&reference.candidate_message(t));
        let absent: Vec<_> = SCHEMA_FIELDS.iter().filter(|f| want.get(f).is_some() && got.get(f).is_none()).collect();
        assert_eq!(absent.len(), 1, "edge {t}");
        for f in SCHEMA_FIELDS {
            if got.get(f).is_some() {
                assert_eq!(got.get(f), want.get(f));
            }
        }
    }
}

#[test]
fn clean_edge_carries_full_schema() {
    let e = env(EnvConfig::fault_free());
    let ep = e.reset(11);
    let state = ep.emit_edge().unwrap();
    let f = Fields::parse(&state.message);
    assert!(SCHEMA_FIELDS.iter().all(|k| f.get(k).is_some()));
}

#[test]
fn signal_corruption_scales_one_value() {
    let cfg = EnvConfig::forced(ErrorType::SignalCorruption);
    let faulty = env(cfg.clone());
    let clean = env(EnvConfig { injection_probabilities: InjectionMix::zero(), ..cfg.clone() });
    for seed in 0..20 {
        let ep = faulty.reset(seed);
        let reference = clean.reset(seed);
        for t in 0..ep.edges() {
            let got = Fields::parse(&ep.candidate_message(t));
            let want = Fields::parse(&reference.candidate_message(t));
            let g: i64 = got.get("value").unwrap().parse().unwrap();
            let w: i64 = want.get("value").unwrap().parse().unwrap();
            assert_eq!(g % w, 0);
            assert!(cfg.corruption_rule.factors.contains(&(g / w)));
            for f in ["ref", "unit", "task", "out", "requires"] {
                assert_eq!(got.get(f), want.get(f));
            }
        }
    }
}

#[test]
fn matching_ask_resolves_data_gap() {
    let e = env(EnvConfig::forced(ErrorType::DataGap));
    let mut ep = e.reset(5);
    let state = ep.emit_edge().unwrap();
    let Some(Fault::DataGap { field }) = ep.current_fault().cloned() else { panic!() };
    let tpl = teacher_template(&Fault::DataGap { field: field.clone() });
    let out = ep.apply_action(&ask(&state, ErrorType::DataGap, Side::Sender, tpl)).unwrap();
    assert!(!out.residual_flag);
    let reply = out.reply.unwrap();
    assert!(reply.contains(&format!("{field}=")), "{reply}");
    let delivered = Fields::parse(&ep.history()[0].message);
    assert!(delivered.get(&field).is_some());
}

#[test]
fn no_intervention_leaves_fault() {
    let e = env(EnvConfig::forced(ErrorType::DataGap));
    let mut ep = e.reset(5);
    let out = ep.apply_action(&Action::none()).unwrap();
    assert!(out.residual_flag && out.fault_residual);
    assert!(out.reply.is_none());
}

#[test]
fn clean_edge_ask_is_residual_by_default_and_free_when_literal() {
    for literal in [false, true] {
        let e = env(EnvConfig { clean_ask_residual: !literal, ..EnvConfig::fault_free() });
        let mut ep = e.reset(2);
        let state = ep.emit_edge().unwrap();
        let out = ep.apply_action(&ask(&state, ErrorType::DataGap, Side::Sender, 0)).unwrap();
        assert_eq!(out.residual_flag, !literal);
        assert!(!out.fault_residual);
        assert!(out.cost_tokens > 0);
        assert_eq!(out.latency_units, 2);
    }
}

#[test]
fn addressee_outside_edge_is_a_contract_error() {
    let e = env(EnvConfig::default());
    let mut ep = e.reset(1);
    let state = ep.emit_edge().unwrap();
    let mut a = ask(&state, ErrorType::DataGap, Side::Sender, 0);
    a.addressee = Some(AgentId::new("stranger"));
    assert!(matches!(ep.apply_action(&a), Err(Error::Contract(_))));
}

#[test]
fn lifecycle_errors() {
    let e = env(EnvConfig::default());
    let mut ep = e.reset(1);
    assert!(matches!(ep.terminal_score(), Err(Error::Lifecycle(_))));
    while !ep.is_terminal() {
        ep.apply_action(&Action::none()).unwrap();
    }
    assert!(matches!(ep.emit_edge(), Err(Error::Lifecycle(_))));
    assert!(matches!(ep.apply_action(&Action::none()), Err(Error::Lifecycle(_))));
}

#[test]
fn exactly_one_resolving_pair_per_fault() {
    let e = env(EnvConfig { fault_rate: 1.0, ..Default::default() });
    for seed in 0..40 {
        let base = e.reset(seed);
        for t in 0..base.edges() {
            let mut ep = base.clone();
            for _ in 0..t {
                ep.apply_action(&Action::none()).unwrap();
            }
            let state = ep.emit_edge().unwrap();
            let mut resolving = std::collections::BTreeSet::new();
            for kind in ErrorType::FAULTS {
                for side in Side::ALL {
                    for tpl in 0..question::TEMPLATES_PER_TYPE {
                        let mut branch = ep.clone();
                        let out = branch.apply_action(&ask(&state, kind, side, tpl)).unwrap();
                        if !out.residual_flag {
                            resolving.insert((kind, side.index()));
                        }
                    }
                }
            }
            let mut branch = ep.clone();
            assert!(branch.apply_action(&Action::none()).unwrap().residual_flag);
            assert_eq!(resolving.len(), 1, "seed {seed} edge {t}");
        }
    }
}

#[test]
fn terminal_score_examples() {
    let clean = env(EnvConfig::fault_free());
    let mut ep = clean.reset(9);
    while !ep.is_terminal() {
        ep.apply_action(&Action::none()).unwrap();
    }
    assert!(ep.terminal_score().unwrap());

    let sc = env(EnvConfig { chain_length_range: (2, 2), ..EnvConfig::forced(ErrorType::SignalCorruption) });
    let mut ep = sc.reset(9);
    ep.apply_action(&Action::none()).unwrap();
    assert!(!ep.terminal_score().unwrap());
}

#[test]
fn terminal_score_agrees_with_pipeline_execution() {
    let e = env(EnvConfig { fault_rate: 0.5, ..Default::default() });
    for seed in 0..300 {
        let mut ep = e.reset(seed);
        // resolve faults on even edges, leave odd ones, varying by seed
        while !ep.is_terminal() {
            let state = ep.emit_edge().unwrap();
            let action = match ep.current_fault().cloned() {
                Some(f) if (seed + ep.cursor as u64).is_multiple_of(2) => {
                    ask(&state, f.kind(), gold_side(f.kind()).unwrap(), teacher_template(&f))
                }
                _ => Action::none(),
            };
            ep.apply_action(&action).unwrap();
        }
        let s = ep.terminal_score().unwrap();
        let executed = execute_delivered(&ep);
        assert_eq!(s, executed == ep.task.ground_truth, "seed {seed}");
    }
}

#[test]
fn all_faults_resolved_scores_one() {
    let e = env(EnvConfig { fault_rate: 1.0, ..Default::default() });
    for seed in 0..100 {
        let mut ep = e.reset(seed);
        while !ep.is_terminal() {
            let state = ep.emit_edge().unwrap();
            let label = e.teacher_label(&state).unwrap();
            let action = Action::ask(label.error_type, label.addressee.unwrap(), label.question.unwrap());
            assert!(!ep.apply_action(&action).unwrap().residual_flag);
        }
        assert!(ep.terminal_score().unwrap());
        assert_eq!(execute_delivered(&ep), ep.task.ground_truth);
    }
}

#[test]
fn never_asking_scores_one_iff_plan_is_empty() {
    let e = env(EnvConfig::default());
    for seed in 0..500 {
        let mut ep = e.reset(seed);
        while !ep.is_terminal() {
            ep.apply_action(&Action::none()).unwrap();
        }
        let empty = ep.plan.faults.iter().all(Option::is_none);
        assert_eq!(ep.terminal_score().unwrap(), empty);
    }
}

#[test]
fn teacher_labels() {
    let clean = env(EnvConfig::fault_free());
    let state = clean.reset(4).emit_edge().unwrap();
    assert_eq!(clean.teacher_label(&state).unwrap(), GoldLabel::none());

    let rd = env(EnvConfig::forced(ErrorType::ReferentialDrift));
    for seed in 0..30 {
        let ep = rd.reset(seed);
        let state = ep.emit_edge().unwrap();
        let Some(Fault::ReferentialDrift { alias }) = ep.current_fault() else { panic!() };
        let label = rd.teacher_label(&state).unwrap();
        assert_eq!(label.error_type, ErrorType::ReferentialDrift);
        assert_eq!(label.addressee.as_ref(), Some(&state.sender));
        let q = label.question.unwrap();
        assert_eq!(q.template_id, "rd.bind");
        assert!(q.rendered.contains(alias.as_str()), "{}", q.rendered);
    }

    let cg = env(EnvConfig::forced(ErrorType::CapabilityGap));
    let state = cg.reset(8).emit_edge().unwrap();
    let label = cg.teacher_label(&state).unwrap();
    assert_eq!(label.error_type, ErrorType::CapabilityGap);
    assert_eq!(label.addressee.as_ref(), Some(&state.receiver));
    assert_eq!(label.question.unwrap().template_id, "cg.reroute");
}

#[test]
fn teacher_rejects_foreign_edges() {
    let a = env(EnvConfig::default());
    let b = env(EnvConfig { seed: 99, ..Default::default() });
    let state = a.reset(1).emit_edge().unwrap();
    assert!(matches!(b.teacher_label(&state), Err(Error::UnknownEdge(_))));
    let mut tampered = state.clone();
    tampered.message.push_str(" extra=1");
    assert!(matches!(a.teacher_label(&tampered), Err(Error::UnknownEdge(_))));
}

#[test]
fn injection_frequencies_match_mix() {
    let e = env(EnvConfig { fault_rate: 1.0, ..Default::default() });
    let mut counts = [0usize; 4];
    let mut total = 0usize;
    let mut seed = 0;
    while total < 10_000 {
        let ep = e.reset(seed);
        for kind in ep.plan.labels() {
            if total < 10_000 {
                counts[kind.index()] += 1;
                total += 1;
            }
        }
        seed += 1;
    }
    let mix = InjectionMix::taxonomy();
    for kind in ErrorType::FAULTS {
        let freq = counts[kind.index()] as f64 / total as f64;
        assert!((freq - mix.get(kind)).abs() <= 0.015, "{kind}: {freq}");
    }
}

#[test]
fn history_is_bounded() {
    let e = env(EnvConfig { chain_length_range: (8, 8), history_bound: 4, ..Default::default() });
    let mut ep = e.reset(0);
    while !ep.is_terminal() {
        let s = ep.emit_edge().unwrap();
        s.check(4).unwrap();
        assert_eq!(s.history.len(), (s.step_index as usize).min(4));
        ep.apply_action(&Action::none()).unwrap();
    }
}
