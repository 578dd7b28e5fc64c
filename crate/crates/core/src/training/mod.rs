//! Imitation learning from oracle-labelled belief states.

pub mod losses;
pub mod sampling;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use losses::{
    evidence_loss, listmle_loss, state_loss, LossWeights, StateContext, StateOutcome,
};
pub use sampling::{
    negative_pool, sample_belief_state, SampledState, DEFAULT_POOL_DEPTH, MAX_NEGATIVES,
};

use crate::belief::{BeliefEncoder, EncodeContext, DEFAULT_CAPACITY};
use crate::corpus::Question;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::harness::{run_strategy, Agent, AgentConfig, StrategySpec};
use crate::model::{Adam, Model};
use crate::oracle::{gold_indices, ListMemo};
use crate::retrieval::Retriever;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub dim: usize,
    pub capacity: usize,
    pub multi_hop: bool,
    /// States drawn per training question per epoch.
    pub samples_per_question: usize,
    pub max_negatives: usize,
    pub pool_depth: usize,
    pub weights: LossWeights,
    /// Held-out states scored after every epoch.
    pub eval_states: usize,
    /// Checkpoints kept on single-step metrics for the episode-level pick.
    pub keep_checkpoints: usize,
    /// Step budget for the episode-level checkpoint pick.
    pub selection_step_limit: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr: 5e-3,
            seed: 0,
            dim: crate::belief::DEFAULT_DIM,
            capacity: DEFAULT_CAPACITY,
            multi_hop: true,
            samples_per_question: 8,
            max_negatives: MAX_NEGATIVES,
            pool_depth: DEFAULT_POOL_DEPTH,
            weights: LossWeights::default(),
            eval_states: 100,
            keep_checkpoints: 3,
            selection_step_limit: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.samples_per_question == 0 {
            return bad("epochs, batch size and samples per question must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if self.capacity == 0 {
            return bad("capacity must be positive");
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub evidence: f64,
    pub policy: f64,
    pub link: f64,
    pub answer: f64,
    pub action_acc: f64,
    pub rank_acc: f64,
    pub span_em: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,L,L_phi,L_pi,L_l,L_o,action_acc,rank_acc,span_em";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4}",
            self.epoch,
            self.loss,
            self.evidence,
            self.policy,
            self.link,
            self.answer,
            self.action_acc,
            self.rank_acc,
            self.span_em
        )
    }

    fn single_step_score(&self) -> f64 {
        self.action_acc + self.rank_acc + self.span_em
    }
}

pub fn write_log<W: Write>(mut w: W, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "{}", EpochLog::CSV_HEADER)?;
    for row in log {
        writeln!(w, "{}", row.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub log: Vec<EpochLog>,
    /// Epoch of the returned parameters.
    pub selected_epoch: usize,
}

/// Single-step diagnostics averaged over states.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeldOutMetrics {
    pub action_acc: f64,
    /// States with an oracle action label.
    pub labelled: usize,
    pub rank_acc: f64,
    pub span_em: f64,
    pub loss: [f64; 4],
}

/// Data and indexes shared by training and held-out evaluation.
pub struct TrainingData<'a> {
    pub retriever: &'a Retriever,
    pub encoder: &'a dyn BeliefEncoder,
    pub questions: &'a [Question],
    pub pools: Vec<Vec<usize>>,
    pub golds: Vec<Vec<usize>>,
}

impl<'a> TrainingData<'a> {
    pub fn new(
        retriever: &'a Retriever,
        encoder: &'a dyn BeliefEncoder,
        questions: &'a [Question],
        pool_depth: usize,
        memo: &ListMemo,
    ) -> Result<Self> {
        let pools = questions
            .par_iter()
            .map(|q| negative_pool(q, retriever, pool_depth, memo))
            .collect::<Result<Vec<_>>>()?;
        let golds = questions
            .iter()
            .map(|q| gold_indices(q, retriever.corpus()))
            .collect();
        Ok(TrainingData {
            retriever,
            encoder,
            questions,
            pools,
            golds,
        })
    }

    /// `per_question` states for every question, in question order.
    pub fn sample(
        &self,
        per_question: usize,
        max_negatives: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<SampledState> {
        let mut out = Vec::with_capacity(self.questions.len() * per_question);
        for i in 0..self.questions.len() {
            for _ in 0..per_question {
                out.push(sample_belief_state(
                    i,
                    &self.golds[i],
                    &self.pools[i],
                    max_negatives,
                    rng,
                ));
            }
        }
        out
    }

    /// `n` states cycling over the questions, for held-out scoring.
    pub fn sample_states(&self, n: usize, max_negatives: usize, seed: u64) -> Vec<SampledState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.questions.len();
        (0..n.min(m.max(1) * 1000))
            .filter(|_| m > 0)
            .map(|k| {
                let i = k % m;
                sample_belief_state(i, &self.golds[i], &self.pools[i], max_negatives, &mut rng)
            })
            .collect()
    }
}

/// Losses and gradient summed over `states`, in order.
fn batch_gradient(
    model: &Model,
    data: &TrainingData,
    ctx: &EncodeContext,
    memo: &ListMemo,
    states: &[SampledState],
    weights: &LossWeights,
) -> Result<(Model, Vec<StateOutcome>)> {
    let sc = StateContext {
        retriever: data.retriever,
        encoder: data.encoder,
        ctx,
        memo,
    };
    let per: Vec<(Model, StateOutcome)> = states
        .par_iter()
        .map(|s| {
            let mut g = Model::zeros(model.dim);
            let o = state_loss(
                model,
                &sc,
                &data.questions[s.question],
                &s.candidates,
                weights,
                &mut g,
            )?;
            Ok((g, o))
        })
        .collect::<Result<_>>()?;
    let mut grad = Model::zeros(model.dim);
    let mut outcomes = Vec::with_capacity(per.len());
    for (g, o) in per {
        grad.add_scaled(&g, 1.0);
        outcomes.push(o);
    }
    Ok((grad, outcomes))
}

/// Score `states` without updating anything.
pub fn evaluate_states(
    model: &Model,
    data: &TrainingData,
    ctx: &EncodeContext,
    memo: &ListMemo,
    states: &[SampledState],
) -> Result<HeldOutMetrics> {
    let (_, outcomes) = batch_gradient(model, data, ctx, memo, states, &LossWeights::default())?;
    Ok(summarize(&outcomes))
}

fn summarize(outcomes: &[StateOutcome]) -> HeldOutMetrics {
    let n = outcomes.len().max(1) as f64;
    let labelled: Vec<bool> = outcomes.iter().filter_map(|o| o.action_agrees).collect();
    let mut loss = [0.0; 4];
    for o in outcomes {
        loss[0] += o.evidence / n;
        loss[1] += o.policy.unwrap_or(0.0) / labelled.len().max(1) as f64;
        loss[2] += o.link / n;
        loss[3] += o.answer / n;
    }
    HeldOutMetrics {
        action_acc: labelled.iter().filter(|&&a| a).count() as f64 / labelled.len().max(1) as f64,
        labelled: labelled.len(),
        rank_acc: outcomes.iter().filter(|o| o.ranking_exact).count() as f64 / n,
        span_em: outcomes.iter().filter(|o| o.span_exact).count() as f64 / n,
        loss,
    }
}

/// Held-out inputs for per-epoch metrics and checkpoint selection.
pub struct Validation<'a> {
    /// Questions whose sampled states give the single-step metrics.
    pub states_from: &'a [Question],
    /// Questions for full-episode checkpoint selection; empty skips it.
    pub episodes_on: &'a [Question],
}

/// Train all heads. Each epoch draws fresh states, labels them with the
/// oracle and takes one Adam step per minibatch of the joint loss. Among
/// the `keep_checkpoints` epochs with the best single-step metrics, the
/// one with the best episode-level P EM (then answer F1, then fewer reads)
/// on `validation.episodes_on` is returned.
pub fn train(
    retriever: &Retriever,
    encoder: &dyn BeliefEncoder,
    questions: &[Question],
    validation: &Validation,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    if encoder.dim() != config.dim {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            got: encoder.dim(),
        });
    }
    let memo = ListMemo::new();
    let data = TrainingData::new(retriever, encoder, questions, config.pool_depth, &memo)?;
    let held = TrainingData::new(
        retriever,
        encoder,
        validation.states_from,
        config.pool_depth,
        &memo,
    )?;
    let held_states = held.sample_states(
        config.eval_states,
        config.max_negatives,
        config.seed ^ 0x5eed,
    );
    let ctx = EncodeContext::new(retriever, config.capacity, config.multi_hop);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::init(config.dim, config.seed);
    let mut adam = Adam::new(&model, config.lr);
    let mut log = Vec::with_capacity(config.epochs);
    let mut checkpoints: Vec<(EpochLog, Model)> = Vec::new();

    for epoch in 1..=config.epochs {
        let mut states = data.sample(config.samples_per_question, config.max_negatives, &mut rng);
        states.shuffle(&mut rng);
        let mut outcomes = Vec::with_capacity(states.len());
        for batch in states.chunks(config.batch_size) {
            let (mut grad, out) =
                batch_gradient(&model, &data, &ctx, &memo, batch, &config.weights)?;
            let total: f64 = out.iter().map(|o| o.total(&config.weights)).sum();
            if !total.is_finite() || !grad.is_finite() {
                return Err(Error::Diverged(format!(
                    "epoch {epoch}: non-finite loss {total} over a batch of {}",
                    batch.len()
                )));
            }
            let scale = 1.0 / batch.len() as f64;
            grad.params_mut().for_each(|g| *g *= scale);
            adam.step(&mut model, &grad);
            outcomes.extend(out);
        }
        let train = summarize(&outcomes);
        let eval = if held_states.is_empty() {
            train
        } else {
            evaluate_states(&model, &held, &ctx, &memo, &held_states)?
        };
        let row = EpochLog {
            epoch,
            loss: train.loss.iter().sum(),
            evidence: train.loss[0],
            policy: train.loss[1],
            link: train.loss[2],
            answer: train.loss[3],
            action_acc: eval.action_acc,
            rank_acc: eval.rank_acc,
            span_em: eval.span_em,
        };
        log::info!(
            "epoch {epoch}: L {:.4}  action {:.3}  rank {:.3}  span {:.3}",
            row.loss,
            row.action_acc,
            row.rank_acc,
            row.span_em
        );
        log.push(row);
        checkpoints.push((row, model.clone()));
        checkpoints.sort_by(|a, b| {
            b.0.single_step_score()
                .partial_cmp(&a.0.single_step_score())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.0.epoch.cmp(&a.0.epoch))
        });
        checkpoints.truncate(config.keep_checkpoints.max(1));
    }

    let (selected_epoch, model) = select_checkpoint(
        retriever,
        encoder,
        checkpoints,
        validation.episodes_on,
        config,
    )?;
    Ok(TrainOutput {
        model,
        log,
        selected_epoch,
    })
}

fn select_checkpoint(
    retriever: &Retriever,
    encoder: &dyn BeliefEncoder,
    checkpoints: Vec<(EpochLog, Model)>,
    questions: &[Question],
    config: &TrainConfig,
) -> Result<(usize, Model)> {
    if questions.is_empty() || checkpoints.len() == 1 {
        let (row, m) = checkpoints.into_iter().next().expect("at least one epoch");
        return Ok((row.epoch, m));
    }
    let env = Environment::new(retriever);
    let spec = StrategySpec::adaptive();
    let mut best: Option<((f64, f64, f64), usize, Model)> = None;
    for (row, m) in checkpoints {
        let agent = Agent::new(
            &m,
            encoder,
            AgentConfig {
                capacity: config.capacity,
                multi_hop: config.multi_hop,
                step_limit: config.selection_step_limit,
                ..AgentConfig::default()
            },
        );
        let r = run_strategy(&agent, &env, questions, &spec)?;
        let key = (r.p_em, r.ans_f1, -r.read_mean);
        log::info!(
            "checkpoint epoch {}: P EM {:.2}  F1 {:.2}  read {:.2}",
            row.epoch,
            r.p_em,
            r.ans_f1,
            r.read_mean
        );
        if best.as_ref().is_none_or(|(k, _, _)| key > *k) {
            best = Some((key, row.epoch, m));
        }
    }
    let (_, epoch, m) = best.expect("non-empty");
    Ok((epoch, m))
}
