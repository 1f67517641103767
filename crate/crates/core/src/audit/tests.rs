use super::*;
use crate::config::RewardConfig;
use crate::env::{EnvConfig, Environment};
use crate::message::EdgeView;
use crate::question;
use crate::rollout::{rollout_many, run_episode_with, Controller};
use crate::types::{Action, Side};

fn roll(cfg: EnvConfig, c: &Controller, n: u64) -> Vec<Trajectory> {
    let env = Environment::new(cfg).unwrap();
    rollout_many(&env, &(0..n).collect::<Vec<_>>(), c, &RewardConfig::default(), 0).unwrap()
}

#[test]
fn clean_corpus_has_empty_distribution() {
    let d = annotate_distribution(&roll(EnvConfig::fault_free(), &Controller::NeverAsk, 20));
    assert!(d.fractions.is_empty());
    assert_eq!(d.unlabeled, 0);
    assert!(d.clean_edges > 0);
}

#[test]
fn single_dg_edge() {
    let mut cfg = EnvConfig::forced(ErrorType::DataGap);
    cfg.chain_length_range = (2, 2);
    let d = annotate_distribution(&roll(cfg, &Controller::NeverAsk, 1));
    assert_eq!(d.fractions, BTreeMap::from([(ErrorType::DataGap, 1.0)]));
}

#[test]
fn missing_labels_go_to_the_unlabeled_bucket() {
    let mut ts = roll(EnvConfig::default(), &Controller::NeverAsk, 10);
    let edges: usize = ts.iter().map(|t| t.records.len()).sum();
    for t in &mut ts {
        for r in &mut t.records {
            r.gold_type = None;
        }
    }
    let d = annotate_distribution(&ts);
    assert_eq!(d.unlabeled, edges);
    assert!(d.fractions.is_empty());
}

#[test]
fn distribution_is_order_invariant_and_sums_to_one() {
    let mut ts = roll(EnvConfig { fault_rate: 1.0, ..EnvConfig::default() }, &Controller::NeverAsk, 200);
    let a = annotate_distribution(&ts);
    ts.reverse();
    ts.swap(3, 77);
    assert_eq!(annotate_distribution(&ts), a);
    assert!((a.fractions.values().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn one_shot_rates() {
    let cfg = EnvConfig { fault_rate: 1.0, ..EnvConfig::default() };
    let oracle = one_shot_resolution(&roll(cfg.clone(), &Controller::Oracle, 200));
    for k in ErrorType::FAULTS {
        assert_eq!(oracle[&k].rate, Some(1.0), "{k}");
    }
    let never = one_shot_resolution(&roll(cfg, &Controller::NeverAsk, 50));
    assert!(never.values().all(|o| o.rate.is_none()));

    // data-gap questions on corruption faults never resolve them
    let env = Environment::new(EnvConfig::forced(ErrorType::SignalCorruption)).unwrap();
    let ts: Vec<_> = (0..30)
        .map(|s| {
            run_episode_with(&env, s, &RewardConfig::default(), |st| {
                let q = question::build(ErrorType::DataGap, 0, st, &EdgeView::new(st))?;
                Ok(Action::ask(ErrorType::DataGap, st.addressee(Side::Sender).clone(), q))
            })
            .unwrap()
        })
        .collect();
    let m = one_shot_resolution(&ts);
    assert_eq!(m[&ErrorType::SignalCorruption].rate, Some(0.0));
    assert!(m[&ErrorType::SignalCorruption].first_asks > 0);
}

#[test]
fn overhead_identity_and_always_ask() {
    let never = roll(EnvConfig::default(), &Controller::NeverAsk, 100);
    let o = overhead_metrics(&never, &never).unwrap();
    let acc = never.iter().filter(|t| t.terminal_score).count() as f64 / 100.0;
    assert_eq!(o.accuracy, acc);
    assert_eq!(o.latency_pct, 100.0);
    assert_eq!(o.extra_cost_pct, 0.0);
    let always = roll(EnvConfig::default(), &Controller::AlwaysAsk, 100);
    assert!(overhead_metrics(&always, &never).unwrap().latency_pct > 100.0);
}

#[test]
fn extra_cost_arithmetic() {
    // one 10+10 token clarification per 20-edge episode on a 400-token baseline
    let mut base = roll(EnvConfig::fault_free(), &Controller::NeverAsk, 1);
    let proto = base[0].records[0].clone();
    base[0].records = vec![proto; 20];
    base[0].base_tokens = 400;
    let mut asked = base.clone();
    asked[0].records[5].cost_tokens = 20;
    let o = overhead_metrics(&asked, &base).unwrap();
    assert!((o.extra_cost_pct - 5.0).abs() < 1e-12);
}

#[test]
fn mismatched_configs_are_refused() {
    let a = roll(EnvConfig::default(), &Controller::NeverAsk, 5);
    let b = roll(EnvConfig { seed: 9, ..EnvConfig::default() }, &Controller::NeverAsk, 5);
    assert!(matches!(overhead_metrics(&a, &b), Err(Error::Data(_))));
}

#[test]
fn reports_render() {
    let ts = roll(EnvConfig::default(), &Controller::Oracle, 50);
    let d = annotate_distribution(&ts);
    let o = one_shot_resolution(&ts);
    let ov = overhead_metrics(&ts, &roll(EnvConfig::default(), &Controller::NeverAsk, 50)).unwrap();
    assert!(distribution_csv(&d).starts_with("type,fraction\n"));
    assert!(one_shot_csv(&o).lines().count() == 5);
    assert!(overhead_csv(&ov).starts_with("accuracy,latency_pct"));
    assert!(text_report(&d, &o, Some(&ov)).contains("one-shot resolution"));
}
