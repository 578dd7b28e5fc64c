use std::collections::HashSet;
use std::sync::OnceLock;

use proptest::prelude::*;

use seekqa::belief::FeatureEncoder;
use seekqa::corpus::Split;
use seekqa::env::{Environment, Func};
use seekqa::harness::{
    exact_match, run_episode, run_strategy, Agent, AgentConfig, EpisodeTrace, StrategySpec,
};
use seekqa::model::Model;
use seekqa::retrieval::Retriever;
use seekqa::synth::{synthesize_corpus, SynthSpec, SynthSuite};
use seekqa::Question;

struct Fixture {
    suite: SynthSuite,
    retriever: Retriever,
    model: Model,
    encoder: FeatureEncoder,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let spec = SynthSpec {
            questions: 4,
            dev_questions: 16,
            ..SynthSpec::default()
        };
        let suite = synthesize_corpus(&spec, 13).unwrap();
        let retriever = suite.retriever(200).unwrap();
        Fixture {
            suite,
            retriever,
            model: Model::init(64, 5),
            encoder: FeatureEncoder::new(64).unwrap(),
        }
    })
}

fn dev() -> Vec<Question> {
    fixture().suite.split(Split::Dev)
}

fn episode(config: AgentConfig, q: &Question, strategy: &StrategySpec) -> EpisodeTrace {
    let f = fixture();
    let agent = Agent::new(&f.model, &f.encoder, config);
    run_episode(&agent, &Environment::new(&f.retriever), q, strategy).unwrap()
}

fn check_accounting(t: &EpisodeTrace) {
    let retrievals = t.invocations + t.cache_hits;
    assert_eq!(t.read + t.exhausted, retrievals, "{}", t.qid);
    assert_eq!(
        t.steps.len(),
        retrievals + usize::from(!t.forced),
        "{}",
        t.qid
    );
    let answers = t
        .steps
        .iter()
        .filter(|s| s.action.func == Func::Answer)
        .count();
    assert_eq!(answers, usize::from(!t.forced));
}

#[test]
fn a_budget_of_one_takes_exactly_one_action() {
    for q in dev() {
        let t = episode(
            AgentConfig {
                step_limit: 1,
                ..AgentConfig::default()
            },
            &q,
            &StrategySpec::parse("f_s^5").unwrap(),
        );
        assert_eq!(t.steps.len(), 1);
        assert!(t.forced);
        assert_eq!(t.steps[0].action.func, Func::Sparse);
        check_accounting(&t);
    }
}

#[test]
fn zero_budget_still_answers() {
    let q = &dev()[0];
    let t = episode(
        AgentConfig {
            step_limit: 0,
            ..AgentConfig::default()
        },
        q,
        &StrategySpec::adaptive(),
    );
    assert!(t.steps.is_empty());
    assert!(t.forced);
    assert_eq!(t.read, 0);
}

#[test]
fn restricted_strategies_never_call_masked_functions() {
    for text in [
        "f_s^t",
        "f_d^t",
        "(f_s|f_l)",
        "(f_d|f_l)",
        "(f_s|f_d)",
        "f_s^2 > (f_d|f_l)",
        "f_d^3 > f_l^2",
    ] {
        let strategy = StrategySpec::parse(text).unwrap();
        let allowed: HashSet<Func> = strategy.funcs().into_iter().chain([Func::Answer]).collect();
        for q in dev().iter().take(6) {
            let t = episode(
                AgentConfig {
                    step_limit: 40,
                    ..AgentConfig::default()
                },
                q,
                &strategy,
            );
            for s in &t.steps {
                assert!(allowed.contains(&s.action.func), "{text}: {:?}", s.action);
            }
            check_accounting(&t);
        }
    }
}

#[test]
fn metrics_are_deterministic() {
    let f = fixture();
    let agent = Agent::new(
        &f.model,
        &f.encoder,
        AgentConfig {
            step_limit: 30,
            ..AgentConfig::default()
        },
    );
    let env = Environment::new(&f.retriever);
    let questions = dev();
    let a = run_strategy(&agent, &env, &questions, &StrategySpec::adaptive()).unwrap();
    let b = run_strategy(&agent, &env, &questions, &StrategySpec::adaptive()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.questions, questions.len());
    let mean = a.traces.iter().map(|t| t.read as f64).sum::<f64>() / questions.len() as f64;
    assert!((a.read_mean - mean).abs() < 1e-12);
}

#[test]
fn the_oracle_agent_collects_the_gold_evidence_and_answers() {
    for q in dev() {
        let t = episode(AgentConfig::oracle(), &q, &StrategySpec::adaptive());
        assert!(!t.forced, "{}", q.id);
        let found: HashSet<&String> = t.final_evidence.iter().collect();
        for g in &q.gold_evidence {
            assert!(found.contains(g), "{}: {g} missing", q.id);
        }
        assert!(
            exact_match(&t.answer, q.gold_answer.as_text()),
            "{}: {}",
            q.id,
            t.answer
        );
        check_accounting(&t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn step_budget_bounds_every_episode(qi in 0usize..16, limit in 0usize..25, oracle in any::<bool>()) {
        let config = AgentConfig {
            step_limit: limit,
            ..if oracle { AgentConfig::oracle() } else { AgentConfig::default() }
        };
        let t = episode(config, &dev()[qi], &StrategySpec::adaptive());
        prop_assert!(t.steps.len() <= limit);
        prop_assert_eq!(t.forced, t.steps.len() == limit && t.steps.last().is_none_or(|s| s.action.func != Func::Answer));
        check_accounting(&t);
    }
}
