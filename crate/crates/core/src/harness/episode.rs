//! Running one question through the observe → believe → act loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::strategy::{Directive, StrategyCursor, StrategySpec};
use crate::belief::{
    form_belief, score_candidates, update_evidence, BeliefEncoder, BeliefEncoding, BeliefState,
    EncodeContext, EvidenceScorer, EvidenceSet, DEFAULT_CAPACITY,
};
use crate::corpus::{Corpus, Question};
use crate::env::{Action, EnvState, Environment, Func, Observation};
use crate::error::Result;
use crate::model::Model;
use crate::oracle::{oracle_action, oracle_arguments, oracle_scores, OracleContext};
use crate::policy::{
    argmax_unmasked, generate_arguments, narrow_actions, select_action, Arguments, NarrowedActions,
};

/// Default step budget `T`.
pub const DEFAULT_STEP_LIMIT: usize = 1000;

/// Whether a component is the learned head or the gold-aware oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    Learned,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub capacity: usize,
    pub multi_hop: bool,
    pub step_limit: usize,
    /// Evidence scorer `φ` or `φ★`.
    pub evidence: Control,
    /// Action scorer `π` or `π★`.
    pub policy: Control,
    /// Link and answer generators `g_l`, `g_o` or their oracle versions.
    pub arguments: Control,
    /// Store the oracle's cost table in every trace step.
    pub record_oracle: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            capacity: DEFAULT_CAPACITY,
            multi_hop: true,
            step_limit: DEFAULT_STEP_LIMIT,
            evidence: Control::Learned,
            policy: Control::Learned,
            arguments: Control::Learned,
            record_oracle: false,
        }
    }
}

impl AgentConfig {
    /// Fully gold-aware agent.
    pub fn oracle() -> Self {
        AgentConfig {
            evidence: Control::Oracle,
            policy: Control::Oracle,
            arguments: Control::Oracle,
            ..AgentConfig::default()
        }
    }
}

/// Steps-to-missing per function, `None` for infinite or masked.
type OracleCosts = Vec<Option<usize>>;

#[derive(Debug, Clone, Copy)]
pub struct Agent<'a> {
    pub model: &'a Model,
    pub encoder: &'a dyn BeliefEncoder,
    pub config: AgentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub action: Action,
    /// Passage id, `QUESTION` or `EXHAUSTED`.
    pub obs: String,
    /// Evidence after scoring this step's belief, by descending score.
    pub evidence_after: Vec<String>,
    pub scores: BTreeMap<String, f64>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evicted: Option<String>,
    /// Steps-to-missing per function (SPARSE, DENSE, LINK, ANSWER); `null`
    /// is infinite or masked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_costs: Option<Vec<Option<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub qid: String,
    pub steps: Vec<TraceStep>,
    /// Evidence when the episode ended, by descending score.
    pub final_evidence: Vec<String>,
    pub answer: String,
    pub forced: bool,
    /// Passage observations.
    pub read: usize,
    pub exhausted: usize,
    pub invocations: usize,
    pub cache_hits: usize,
}

impl EpisodeTrace {
    /// Evidence sets in order, ending with the final one, each paired with
    /// the passage observed at that point (if any).
    pub fn evidence_timeline(&self) -> Vec<(Option<&str>, &[String])> {
        let mut out: Vec<(Option<&str>, &[String])> = Vec::new();
        let mut prev_obs: Option<&str> = None;
        for s in &self.steps {
            out.push((prev_obs, &s.evidence_after));
            prev_obs = passage_obs(&s.obs);
        }
        if self.forced {
            out.push((prev_obs, &self.final_evidence));
        }
        out
    }
}

fn passage_obs(obs: &str) -> Option<&str> {
    match obs {
        OBS_QUESTION | OBS_EXHAUSTED => None,
        id => Some(id),
    }
}

pub const OBS_QUESTION: &str = "QUESTION";
pub const OBS_EXHAUSTED: &str = "EXHAUSTED";

fn obs_label(obs: Observation, corpus: &Corpus) -> String {
    match obs {
        Observation::Question => OBS_QUESTION.into(),
        Observation::Exhausted => OBS_EXHAUSTED.into(),
        Observation::Passage(p) => corpus.passage(p).id.clone(),
    }
}

impl<'a> Agent<'a> {
    pub fn new(model: &'a Model, encoder: &'a dyn BeliefEncoder, config: AgentConfig) -> Self {
        Agent {
            model,
            encoder,
            config,
        }
    }

    fn arguments(
        &self,
        belief: &BeliefState,
        evidence: &EvidenceSet,
        enc: &BeliefEncoding,
        ctx: &EncodeContext,
        octx: &OracleContext,
    ) -> Arguments {
        let args = generate_arguments(self.model, belief, evidence, enc, ctx);
        match self.config.arguments {
            Control::Learned => args,
            Control::Oracle => oracle_arguments(args, belief, enc, octx),
        }
    }

    fn score(
        &self,
        belief: &BeliefState,
        enc: &BeliefEncoding,
        corpus: &Corpus,
    ) -> Result<(Vec<f64>, f64)> {
        match self.config.evidence {
            Control::Learned => score_candidates(enc, &EvidenceScorer::from_model(self.model)),
            Control::Oracle => Ok(oracle_scores(&belief.passages(), belief.question, corpus)),
        }
    }

    /// Pick an action among `allowed` retrieval functions (plus ANSWER if
    /// `may_answer`). Returns `None` when nothing is available.
    #[allow(clippy::too_many_arguments)]
    fn choose(
        &self,
        args: &Arguments,
        belief: &BeliefState,
        enc: &BeliefEncoding,
        ctx: &EncodeContext,
        octx: &OracleContext,
        state: &EnvState,
        funcs: &[Func],
        may_answer: bool,
    ) -> Result<Option<(Action, Option<OracleCosts>)>> {
        let mut allowed = [false; 4];
        for f in funcs {
            allowed[f.index()] = true;
        }
        let mut narrowed: NarrowedActions =
            narrow_actions(args, belief, enc, self.encoder, ctx, Some(state), allowed);
        let answer = Func::Answer.index();
        if !may_answer {
            narrowed.candidates[answer].masked = true;
            if narrowed.unmasked().next().is_none() {
                return Ok(None);
            }
        }
        let need_oracle = self.config.policy == Control::Oracle || self.config.record_oracle;
        let decision = if need_oracle {
            Some(oracle_action(octx, &narrowed, &args.answer_text)?)
        } else {
            None
        };
        let costs = decision
            .as_ref()
            .filter(|_| self.config.record_oracle)
            .map(|d| d.costs.clone());
        let live: Vec<usize> = (0..4).filter(|&i| !narrowed.candidates[i].masked).collect();
        let action = match self.config.policy {
            Control::Oracle => {
                let d = decision.expect("computed above");
                match d.index {
                    Some(i) if live.contains(&i) => narrowed.candidates[i].action.clone(),
                    _ if allowed[d.action.func.index()] && d.action.func.is_retrieval() => d.action,
                    // nothing sensible is allowed: cheapest live option by priority
                    _ => {
                        let zeros = vec![0.0; 4];
                        let i = argmax_unmasked(&zeros, &narrowed.masks())?;
                        narrowed.candidates[i].action.clone()
                    }
                }
            }
            Control::Learned => {
                if live.len() == 1 {
                    narrowed.candidates[live[0]].action.clone()
                } else {
                    let sel = select_action(&narrowed, enc, self.model)?;
                    narrowed.candidates[sel.index].action.clone()
                }
            }
        };
        Ok(Some((action, costs)))
    }
}

/// Run one episode under `strategy` with step budget
/// `agent.config.step_limit`. When the budget runs out the latest answer
/// prediction is submitted.
pub fn run_episode(
    agent: &Agent,
    env: &Environment,
    question: &Question,
    strategy: &StrategySpec,
) -> Result<EpisodeTrace> {
    let cfg = agent.config;
    let retriever = env.retriever();
    let corpus = retriever.corpus();
    let ctx = EncodeContext::new(retriever, cfg.capacity, cfg.multi_hop);
    let (mut state, mut obs) = env.reset(question);
    let mut evidence = EvidenceSet::default();
    let mut cursor = StrategyCursor::new(strategy);
    let mut steps: Vec<TraceStep> = Vec::new();
    let (mut read, mut exhausted) = (0, 0);

    let (answer, forced) = loop {
        let belief = form_belief(&evidence, obs, question, cfg.capacity);
        let enc = agent.encoder.encode(&belief, &ctx);
        let passages = belief.passages();
        let (scores, threshold) = agent.score(&belief, &enc, corpus)?;
        evidence = update_evidence(&passages, &scores, threshold)?;
        let octx = OracleContext {
            question,
            retriever,
            state: Some(&state),
            evidence: &evidence,
            memo: None,
        };
        let args = agent.arguments(&belief, &evidence, &enc, &ctx, &octx);
        if state.t >= cfg.step_limit {
            break (args.answer_text, true);
        }

        let (action, costs) = loop {
            let picked = match cursor.directive() {
                Directive::Answer => None,
                Directive::Retrieve(funcs) => {
                    let c =
                        agent.choose(&args, &belief, &enc, &ctx, &octx, &state, &funcs, false)?;
                    if c.is_none() {
                        cursor.skip_stage();
                        continue;
                    }
                    c
                }
                Directive::Decide(funcs) => {
                    agent.choose(&args, &belief, &enc, &ctx, &octx, &state, &funcs, true)?
                }
            };
            break picked
                .unwrap_or_else(|| (Action::new(Func::Answer, args.answer_text.clone()), None));
        };

        let next = env.step(&mut state, &action)?;
        match next {
            Observation::Passage(_) => read += 1,
            Observation::Exhausted => exhausted += 1,
            Observation::Question => {}
        }
        steps.push(TraceStep {
            t: state.t - 1,
            obs: obs_label(next, corpus),
            evidence_after: evidence
                .passages()
                .iter()
                .map(|&p| corpus.passage(p).id.clone())
                .collect(),
            scores: passages
                .iter()
                .zip(&scores)
                .map(|(&p, &s)| (corpus.passage(p).id.clone(), s))
                .collect(),
            threshold,
            evicted: belief.evicted.map(|p| corpus.passage(p).id.clone()),
            oracle_costs: costs,
            action: action.clone(),
        });
        if action.func == Func::Answer {
            break (action.arg, false);
        }
        cursor.advance();
        obs = next;
    };

    Ok(EpisodeTrace {
        qid: question.id.clone(),
        steps,
        final_evidence: evidence
            .passages()
            .iter()
            .map(|&p| corpus.passage(p).id.clone())
            .collect(),
        answer,
        forced,
        read,
        exhausted,
        invocations: state.invocations,
        cache_hits: state.cache_hits,
    })
}
