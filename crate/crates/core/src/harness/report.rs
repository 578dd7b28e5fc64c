//! Aggregate metrics, mistake-recovery counts and strategy comparisons.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode, Agent, EpisodeTrace};
use super::metrics::{exact_match, f1_score, passage_em};
use super::strategy::StrategySpec;
use crate::corpus::Question;
use crate::env::Environment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCount {
    pub occurred: usize,
    pub recovered: usize,
}

impl EventCount {
    pub fn rate(&self) -> Option<f64> {
        (self.occurred > 0).then(|| self.recovered as f64 / self.occurred as f64)
    }

    fn add(&mut self, recovered: bool) {
        self.occurred += 1;
        self.recovered += recovered as usize;
    }

    fn merge(&mut self, other: EventCount) {
        self.occurred += other.occurred;
        self.recovered += other.recovered;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryStats {
    pub false_added: EventCount,
    pub true_missed: EventCount,
    pub true_deleted: EventCount,
}

impl RecoveryStats {
    pub fn total(&self) -> usize {
        self.false_added.occurred + self.true_missed.occurred + self.true_deleted.occurred
    }

    fn merge(&mut self, other: RecoveryStats) {
        self.false_added.merge(other.false_added);
        self.true_missed.merge(other.true_missed);
        self.true_deleted.merge(other.true_deleted);
    }
}

/// Mistake events of one episode. Every event is judged recovered against
/// the final evidence set.
pub fn episode_recovery(trace: &EpisodeTrace, question: &Question) -> RecoveryStats {
    let mut stats = RecoveryStats::default();
    let timeline = trace.evidence_timeline();
    let Some((_, last)) = timeline.last() else {
        return stats;
    };
    let last: HashSet<&str> = last.iter().map(String::as_str).collect();
    let mut prev: HashSet<&str> = HashSet::new();
    for (obs, ev) in &timeline {
        let cur: HashSet<&str> = ev.iter().map(String::as_str).collect();
        for &p in &cur {
            if !prev.contains(p) && !question.is_gold(p) {
                stats.false_added.add(!last.contains(p));
            }
        }
        for &p in &prev {
            if !cur.contains(p) && question.is_gold(p) {
                stats.true_deleted.add(last.contains(p));
            }
        }
        if let Some(o) = obs {
            if question.is_gold(o) && !cur.contains(o) && !prev.contains(o) {
                stats.true_missed.add(last.contains(o));
            }
        }
        prev = cur;
    }
    stats
}

pub fn recovery_stats(traces: &[EpisodeTrace], questions: &[Question]) -> Result<RecoveryStats> {
    let by_id = index_traces(traces);
    let mut total = RecoveryStats::default();
    for q in questions {
        let t = by_id
            .get(q.id.as_str())
            .ok_or_else(|| Error::MissingTrace(q.id.clone()))?;
        total.merge(episode_recovery(t, q));
    }
    Ok(total)
}

fn index_traces(traces: &[EpisodeTrace]) -> HashMap<&str, &EpisodeTrace> {
    traces.iter().map(|t| (t.qid.as_str(), t)).collect()
}

/// Scores are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub p_em: f64,
    pub ans_em: f64,
    pub ans_f1: f64,
    pub read_mean: f64,
    pub recovery: RecoveryStats,
    pub questions: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<EpisodeTrace>,
}

/// Metrics over one trace per question.
pub fn evaluate(traces: &[EpisodeTrace], questions: &[Question]) -> Result<MetricsReport> {
    let by_id = index_traces(traces);
    let (mut p_em, mut em, mut f1, mut read) = (0.0, 0.0, 0.0, 0.0);
    let mut recovery = RecoveryStats::default();
    for q in questions {
        let t = by_id
            .get(q.id.as_str())
            .ok_or_else(|| Error::MissingTrace(q.id.clone()))?;
        let gold = q.gold_answer.as_text();
        p_em += passage_em(&t.final_evidence, &q.gold_evidence) as u8 as f64;
        em += exact_match(&t.answer, gold) as u8 as f64;
        f1 += f1_score(&t.answer, gold);
        read += t.read as f64;
        recovery.merge(episode_recovery(t, q));
    }
    let n = questions.len().max(1) as f64;
    Ok(MetricsReport {
        p_em: 100.0 * p_em / n,
        ans_em: 100.0 * em / n,
        ans_f1: 100.0 * f1 / n,
        read_mean: read / n,
        recovery,
        questions: questions.len(),
        traces: Vec::new(),
    })
}

/// Run every question in parallel; traces come back in question order.
pub fn run_traces(
    agent: &Agent,
    env: &Environment,
    questions: &[Question],
    strategy: &StrategySpec,
) -> Result<Vec<EpisodeTrace>> {
    questions
        .par_iter()
        .map(|q| run_episode(agent, env, q, strategy))
        .collect()
}

pub fn run_strategy(
    agent: &Agent,
    env: &Environment,
    questions: &[Question],
    strategy: &StrategySpec,
) -> Result<MetricsReport> {
    let traces = run_traces(agent, env, questions, strategy)?;
    let mut report = evaluate(&traces, questions)?;
    report.traces = traces;
    Ok(report)
}

/// Metrics at each step budget.
pub fn step_limit_sweep(
    agent: &Agent,
    env: &Environment,
    questions: &[Question],
    strategy: &StrategySpec,
    limits: &[usize],
) -> Result<Vec<(usize, MetricsReport)>> {
    limits
        .iter()
        .map(|&t| {
            if t == 0 {
                return Err(Error::InvalidArgument(
                    "step limit must be at least 1".into(),
                ));
            }
            let mut a = *agent;
            a.config.step_limit = t;
            let traces = run_traces(&a, env, questions, strategy)?;
            Ok((t, evaluate(&traces, questions)?))
        })
        .collect()
}

/// Plain-text table with one row per labelled report.
pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let name_w = rows
        .iter()
        .map(|(n, _)| n.chars().count())
        .max()
        .unwrap_or(0)
        .max(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_w$}  {:>6}  {:>6}  {:>6}  {:>8}",
        "strategy", "P EM", "Ans EM", "Ans F1", "# read"
    );
    for (name, r) in rows {
        let pad = name_w - name.chars().count();
        let _ = writeln!(
            out,
            "{name}{:pad$}  {:>6.2}  {:>6.2}  {:>6.2}  {:>8.2}",
            "", r.p_em, r.ans_em, r.ans_f1, r.read_mean
        );
    }
    out
}
