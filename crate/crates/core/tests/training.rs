use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use seekqa::belief::{EncodeContext, FeatureEncoder};
use seekqa::corpus::Split;
use seekqa::model::Model;
use seekqa::oracle::ListMemo;
use seekqa::synth::{synthesize_corpus, SynthSpec};
use seekqa::training::{
    sample_belief_state, state_loss, train, LossWeights, StateContext, TrainConfig, TrainingData,
    Validation,
};

/// Upper-tail probability of Pearson's statistic for counts against a
/// uniform expectation.
fn uniform_p_value(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64)
        .unwrap()
        .cdf(stat)
}

/// Subset and negative-count tallies over `draws` samples.
fn tally(seed: u64, draws: usize) -> (Vec<usize>, [usize; 3]) {
    let gold = [3, 9, 14];
    let pool = [20, 21, 22, 23, 24];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subsets = vec![0usize; 8];
    let mut negatives = [0usize; 3];
    for _ in 0..draws {
        let s = sample_belief_state(0, &gold, &pool, 2, &mut rng);
        let mask: usize = (0..3)
            .filter(|&i| s.candidates.contains(&gold[i]))
            .map(|i| 1 << i)
            .sum();
        subsets[mask] += 1;
        negatives[s.candidates.iter().filter(|p| pool.contains(p)).count()] += 1;
    }
    (subsets, negatives)
}

#[test]
fn gold_subsets_and_negative_counts_are_uniform() {
    // each seed is one 10^4-draw test at level 0.01; a fair sampler fails
    // about one in a hundred, so 20 seeds may see at most a couple
    let (mut pooled_s, mut pooled_n) = (vec![0usize; 8], [0usize; 3]);
    let mut rejected = Vec::new();
    for seed in 40..60 {
        let (s, n) = tally(seed, 10_000);
        let (ps, pn) = (uniform_p_value(&s), uniform_p_value(&n));
        if ps <= 0.01 || pn <= 0.01 {
            rejected.push((seed, ps, pn));
        }
        pooled_s.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        pooled_n.iter_mut().zip(&n).for_each(|(a, b)| *a += b);
    }
    assert!(rejected.len() <= 2, "{rejected:?}");
    assert!(uniform_p_value(&pooled_s) > 0.01, "{pooled_s:?}");
    assert!(uniform_p_value(&pooled_n) > 0.01, "{pooled_n:?}");
}

#[test]
fn first_candidate_is_each_sampled_passage_equally_often() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut first = HashMap::<usize, usize>::new();
    for _ in 0..10_000 {
        let s = sample_belief_state(0, &[1, 2], &[5, 6], 2, &mut rng);
        if s.candidates.len() == 4 {
            *first.entry(s.candidates[0]).or_default() += 1;
        }
    }
    let counts: Vec<usize> = first.values().copied().collect();
    assert_eq!(counts.len(), 4);
    assert!(uniform_p_value(&counts) > 0.01, "{counts:?}");
}

#[test]
fn loss_does_not_rise_on_a_frozen_batch() {
    let spec = SynthSpec {
        questions: 30,
        dev_questions: 0,
        ..SynthSpec::default()
    };
    let suite = synthesize_corpus(&spec, 4).unwrap();
    let retriever = suite.retriever(200).unwrap();
    let encoder = FeatureEncoder::new(64).unwrap();
    let ctx = EncodeContext::new(&retriever, 3, true);
    let memo = ListMemo::new();
    let questions = suite.split(Split::Train);
    let data = TrainingData::new(&retriever, &encoder, &questions, 20, &memo).unwrap();
    let states = data.sample_states(64, 2, 11);
    let sc = StateContext {
        retriever: &retriever,
        encoder: &encoder,
        ctx: &ctx,
        memo: &memo,
    };
    let weights = LossWeights::default();
    let full_batch = |m: &Model| {
        let mut grad = Model::zeros(64);
        let mut total = 0.0;
        for s in &states {
            let o = state_loss(
                m,
                &sc,
                &questions[s.question],
                &s.candidates,
                &weights,
                &mut grad,
            )
            .unwrap();
            total += o.total(&weights);
        }
        (total / states.len() as f64, grad)
    };
    let mut model = Model::init(64, 0);
    let (mut prev, _) = full_batch(&model);
    let first = prev;
    for step in 0..100 {
        let (_, mut grad) = full_batch(&model);
        grad.params_mut().for_each(|g| *g /= states.len() as f64);
        model.add_scaled(&grad, -2e-3);
        let (loss, _) = full_batch(&model);
        assert!(loss <= prev + 1e-12, "step {step}: {prev} -> {loss}");
        prev = loss;
    }
    assert!(prev < first, "{first} -> {prev}");
}

fn tiny_setup() -> (seekqa::synth::SynthSuite, TrainConfig) {
    let spec = SynthSpec {
        questions: 16,
        dev_questions: 8,
        ..SynthSpec::default()
    };
    let config = TrainConfig {
        epochs: 3,
        samples_per_question: 2,
        eval_states: 20,
        ..TrainConfig::default()
    };
    (synthesize_corpus(&spec, 9).unwrap(), config)
}

#[test]
fn zero_learning_rate_keeps_the_initial_parameters() {
    let (suite, mut config) = tiny_setup();
    config.lr = 0.0;
    let retriever = suite.retriever(200).unwrap();
    let encoder = FeatureEncoder::new(config.dim).unwrap();
    let train_q = suite.split(Split::Train);
    let dev = suite.split(Split::Dev);
    let validation = Validation {
        states_from: &dev,
        episodes_on: &dev,
    };
    let out = train(&retriever, &encoder, &train_q, &validation, &config).unwrap();
    assert_eq!(out.model, Model::init(config.dim, config.seed));
    assert_eq!(out.log.len(), config.epochs);
}

#[test]
fn training_is_reproducible_and_seed_sensitive() {
    let (suite, config) = tiny_setup();
    let retriever = suite.retriever(200).unwrap();
    let encoder = FeatureEncoder::new(config.dim).unwrap();
    let train_q = suite.split(Split::Train);
    let dev = suite.split(Split::Dev);
    let validation = Validation {
        states_from: &dev,
        episodes_on: &dev,
    };
    let a = train(&retriever, &encoder, &train_q, &validation, &config).unwrap();
    let b = train(&retriever, &encoder, &train_q, &validation, &config).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.log, b.log);
    assert_eq!(a.selected_epoch, b.selected_epoch);
    let c = train(
        &retriever,
        &encoder,
        &train_q,
        &validation,
        &TrainConfig {
            seed: 1,
            ..config.clone()
        },
    )
    .unwrap();
    assert_ne!(a.model, c.model);
    let mut bytes = Vec::new();
    a.model.write(&mut bytes).unwrap();
    assert_eq!(Model::parse(bytes.as_slice()).unwrap(), a.model);
}

#[test]
fn invalid_configs_are_rejected() {
    let (suite, config) = tiny_setup();
    let retriever = suite.retriever(200).unwrap();
    let encoder = FeatureEncoder::new(config.dim).unwrap();
    let train_q = suite.split(Split::Train);
    let validation = Validation {
        states_from: &[],
        episodes_on: &[],
    };
    for bad in [
        TrainConfig {
            epochs: 0,
            ..config.clone()
        },
        TrainConfig {
            lr: f64::NAN,
            ..config.clone()
        },
        TrainConfig {
            lr: -1.0,
            ..config.clone()
        },
        TrainConfig {
            dim: 96,
            ..config.clone()
        },
    ] {
        assert!(train(&retriever, &encoder, &train_q, &validation, &bad).is_err());
    }
}
