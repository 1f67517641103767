use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::{EnvConfig, Environment};

fn state(kind: Option<ErrorType>, seed: u64) -> EdgeState {
    let cfg = match kind {
        Some(k) => EnvConfig::forced(k),
        None => EnvConfig::fault_free(),
    };
    Environment::new(cfg).unwrap().reset(seed).emit_edge().unwrap()
}

fn random_params(seed: u64) -> PolicyParams {
    PolicyParams::random(FeatureConfig::default(), 0.5, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn action_space_has_33_entries() {
    let all = Choice::all();
    assert_eq!(all.len(), 1 + 4 * 2 * 4);
    let unique: std::collections::HashSet<_> = all.iter().collect();
    assert_eq!(unique.len(), all.len());
}

#[test]
fn zero_params_give_uniform_heads() {
    let p = PolicyParams::zeros(FeatureConfig::default());
    let s = state(Some(ErrorType::DataGap), 1);
    let h = forward(&p, &featurize(&s, &p.features)).unwrap();
    for q in h.type_probs {
        assert!((q - 0.2).abs() < 1e-12);
    }
    let none = Action::none();
    assert!((action_logprob(&p, &s, &none).unwrap() - 0.2f64.ln()).abs() < 1e-12);
    let ask = Choice::Ask { kind: ErrorType::SignalCorruption, side: Side::Receiver, template: 2 }.to_action(&s);
    // 0.2 type * 0.5 side * 0.25 template
    assert!((action_logprob(&p, &s, &ask).unwrap() - 0.025f64.ln()).abs() < 1e-12);
}

#[test]
fn single_type_logit_matches_softmax() {
    let p = PolicyParams::zeros(FeatureConfig::default()).with_type_bias(ErrorType::DataGap, 1.0);
    let s = state(None, 3);
    let h = forward(&p, &featurize(&s, &p.features)).unwrap();
    let e = std::f64::consts::E;
    let z = e + 4.0;
    assert!((h.type_probs[0] - e / z).abs() < 1e-12);
    assert!((h.type_probs[0] - 0.4046).abs() < 1e-4);
    for k in 1..5 {
        assert!((h.type_probs[k] - 1.0 / z).abs() < 1e-12);
        assert!((h.type_probs[k] - 0.1488).abs() < 1e-4);
    }
}

#[test]
fn factorization_sums_to_one() {
    for seed in 0..5 {
        let p = random_params(seed);
        let s = state(Some(ErrorType::ALL[seed as usize % 4]), seed);
        let h = forward(&p, &featurize(&s, &p.features)).unwrap();
        let total: f64 = Choice::all().into_iter().map(|c| h.prob(c)).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        let ask_mass = 1.0 - h.type_probs[ErrorType::NONE_INDEX];
        let asked: f64 = Choice::all().into_iter().filter(|c| *c != Choice::NoAsk).map(|c| h.prob(c)).sum();
        assert!((ask_mass - asked).abs() < 1e-12);
    }
}

fn finite_diff(p: &PolicyParams, f: impl Fn(&PolicyParams) -> f64, i: usize) -> f64 {
    let h = 1e-6;
    let mut a = p.clone();
    a.theta[i] += h;
    let mut b = p.clone();
    b.theta[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

#[test]
fn logprob_gradient_matches_finite_differences() {
    let p = random_params(11);
    let s = state(Some(ErrorType::ReferentialDrift), 5);
    for c in [
        Choice::NoAsk,
        Choice::Ask { kind: ErrorType::ReferentialDrift, side: Side::Sender, template: 1 },
        Choice::Ask { kind: ErrorType::CapabilityGap, side: Side::Receiver, template: 3 },
    ] {
        let a = c.to_action(&s);
        let g = grad_logprob(&p, &s, &a).unwrap();
        for i in 0..param_count() {
            let fd = finite_diff(&p, |q| action_logprob(q, &s, &a).unwrap(), i);
            assert!((fd - g.theta[i]).abs() < 1e-6, "param {i}: fd {fd} vs analytic {}", g.theta[i]);
        }
        if c == Choice::NoAsk {
            assert!(g.theta[PolicyParams::ask_heads_range()].iter().all(|v| *v == 0.0));
        }
    }
}

#[test]
fn kl_gradient_matches_finite_differences() {
    let p = random_params(21);
    let r = random_params(22);
    let s = state(Some(ErrorType::SignalCorruption), 9);
    let x = featurize(&s, &p.features);
    let rh = forward(&r, &x).unwrap();
    let kl = |q: &PolicyParams| kl_divergence(&forward(q, &x).unwrap(), &rh);
    assert!(kl(&p) > 0.0);
    assert!(kl(&r).abs() < 1e-12);
    let mut g = p.zeros_like();
    accumulate_grad_kl(&forward(&p, &x).unwrap(), &rh, &x, 1.0, &mut g);
    for i in (0..param_count()).step_by(3) {
        let fd = finite_diff(&p, kl, i);
        assert!((fd - g.theta[i]).abs() < 1e-6, "param {i}: fd {fd} vs analytic {}", g.theta[i]);
    }
}

#[test]
fn action_round_trip_and_rejections() {
    let s = state(Some(ErrorType::CapabilityGap), 2);
    for c in Choice::all() {
        assert_eq!(Choice::from_action(&s, &c.to_action(&s)).unwrap(), c);
    }
    let mut foreign = Choice::Ask { kind: ErrorType::DataGap, side: Side::Sender, template: 0 }.to_action(&s);
    foreign.addressee = Some(crate::types::AgentId::new("a99"));
    assert!(matches!(Choice::from_action(&s, &foreign), Err(Error::Contract(_))));
    let free = Action::ask(ErrorType::DataGap, s.sender.clone(), crate::types::QuestionSpec::freeform("what is it?"));
    assert!(matches!(Choice::from_action(&s, &free), Err(Error::Contract(_))));
}

#[test]
fn budget_rule_forces_no_ask() {
    let p = PolicyParams::zeros(FeatureConfig::default()).with_type_bias(ErrorType::DataGap, 50.0);
    let s = state(Some(ErrorType::DataGap), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let free = sample_action(&p, &s, &mut rng, 120).unwrap();
    assert!(!free.forced);
    assert_eq!(free.choice.kind(), ErrorType::DataGap);
    let tight = sample_action(&p, &s, &mut rng, ask_cost_bound() - 1).unwrap();
    assert!(tight.forced);
    assert_eq!(tight.choice, Choice::NoAsk);
    assert!(greedy_action(&p, &s, ask_cost_bound() - 1).unwrap().forced);
}

#[test]
fn sampling_frequencies_follow_probabilities() {
    let p = random_params(5);
    let s = state(Some(ErrorType::DataGap), 8);
    let h = forward(&p, &featurize(&s, &p.features)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 40_000;
    let none = (0..n).filter(|_| h.sample(&mut rng) == Choice::NoAsk).count() as f64 / n as f64;
    let want = h.type_probs[ErrorType::NONE_INDEX];
    // five standard errors
    assert!((none - want).abs() < 5.0 * (want * (1.0 - want) / n as f64).sqrt());
}

#[test]
fn dimension_mismatch_is_rejected() {
    let mut p = PolicyParams::zeros(FeatureConfig::default());
    p.theta.pop();
    let s = state(None, 0);
    assert!(forward(&p, &featurize(&s, &p.features)).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let p = random_params(3);
    let ck = Checkpoint::new(&p, "abc");
    let back = Checkpoint::from_json(&ck.to_json()).unwrap().into_params().unwrap();
    assert_eq!(back, p);
    let mut bad = Checkpoint::new(&p, "abc");
    bad.library_hash = "00".into();
    assert!(bad.into_params().is_err());
}
