//! The joint imitation loss `L = L_φ + L_π + L_l + L_o` for one sampled
//! belief state, with analytic gradients.

use crate::belief::{
    score_candidates, BeliefEncoder, BeliefEncoding, BeliefState, EncodeContext, EvidenceScorer,
};
use crate::corpus::Question;
use crate::error::{Error, Result};
use crate::model::{Model, PHI_B, PHI_W};
use crate::oracle::{
    gold_indices, oracle_action, oracle_answer_label, oracle_arguments, oracle_evidence_filter,
    oracle_link_slot, ListMemo, OracleContext,
};
use crate::policy::{
    action_backward, answer_loss, argmax_unmasked, extract_answer, generate_arguments, link_inputs,
    link_loss, narrow_actions, policy_loss, select_action,
};
use crate::retrieval::Retriever;

/// ListMLE: negative log-likelihood under Plackett–Luce of the permutation
/// sorting `labels` descending (stable, so equal labels keep input order).
/// Returns the loss and `∂L/∂scores`.
pub fn listmle_loss(scores: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let n = scores.len();
    if n == 0 {
        return Err(Error::EmptyScores);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        labels[b]
            .partial_cmp(&labels[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let s: Vec<f64> = order.iter().map(|&i| scores[i]).collect();

    // suffix log-sum-exp: lse[i] = log Σ_{j ≥ i} exp(s_j)
    let mut lse = vec![0.0; n];
    lse[n - 1] = s[n - 1];
    for i in (0..n - 1).rev() {
        let (a, b) = (s[i], lse[i + 1]);
        let m = a.max(b);
        lse[i] = m + ((a - m).exp() + (b - m).exp()).ln();
    }
    let loss: f64 = (0..n).map(|i| lse[i] - s[i]).sum();

    // ∂L/∂s_j = Σ_{i ≤ j} softmax over suffix i at j, minus 1
    let grad_sorted: Vec<f64> = (0..n)
        .map(|j| lse[..=j].iter().map(|l| (s[j] - l).exp()).sum::<f64>() - 1.0)
        .collect();
    let mut grad = vec![0.0; n];
    for (k, &i) in order.iter().enumerate() {
        grad[i] = grad_sorted[k];
    }
    Ok((loss, grad))
}

/// `L_φ` on an encoded state: candidates labelled 1 (gold) or 0, the
/// pseudo passage 0.5. Adds the gradient of `weight * L_φ` into `grad`.
pub fn evidence_loss(
    model: &Model,
    enc: &BeliefEncoding,
    gold: &[bool],
    weight: f64,
    grad: &mut Model,
) -> Result<f64> {
    let (mut scores, threshold) = score_candidates(enc, &EvidenceScorer::from_model(model))?;
    scores.push(threshold);
    let mut labels: Vec<f64> = gold.iter().map(|&g| g as u8 as f64).collect();
    labels.push(0.5);
    let (loss, ds) = listmle_loss(&scores, &labels)?;
    let d = enc.global.len();
    let inputs = enc.candidates.iter().chain(std::iter::once(&enc.none_slot));
    let mut db = 0.0;
    {
        let gw = grad.block_mut(PHI_W);
        for (x, &g) in inputs.zip(&ds) {
            let g = weight * g;
            for k in 0..d {
                gw[k] += g * x[k];
                gw[d + k] += g * enc.global[k];
            }
            db += g;
        }
    }
    grad.block_mut(PHI_B)[0] += db;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub evidence: f64,
    pub policy: f64,
    pub link: f64,
    pub answer: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            evidence: 1.0,
            policy: 1.0,
            link: 1.0,
            answer: 1.0,
        }
    }
}

/// Losses and single-step diagnostics of one state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StateOutcome {
    pub evidence: f64,
    /// `None` when the oracle hit a dead end and the state carries no
    /// action label.
    pub policy: Option<f64>,
    pub link: f64,
    pub answer: f64,
    /// Learned policy picks the oracle's action (teacher-forced arguments).
    pub action_agrees: Option<bool>,
    /// Learned `φ` keeps exactly the gold candidates.
    pub ranking_exact: bool,
    /// Answer head reproduces the oracle span label.
    pub span_exact: bool,
    pub oracle_action: Option<usize>,
}

impl StateOutcome {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.evidence * self.evidence
            + w.policy * self.policy.unwrap_or(0.0)
            + w.link * self.link
            + w.answer * self.answer
    }
}

/// Everything needed to label and score sampled states.
#[derive(Clone, Copy)]
pub struct StateContext<'a> {
    pub retriever: &'a Retriever,
    pub encoder: &'a dyn BeliefEncoder,
    pub ctx: &'a EncodeContext<'a>,
    pub memo: &'a ListMemo,
}

/// Evaluate the joint loss on the state `⟨question, candidates⟩` (first
/// candidate is the observation) and add the weighted gradient into
/// `grad`. Oracle labels are computed with every list unread.
pub fn state_loss(
    model: &Model,
    sc: &StateContext,
    question: &Question,
    candidates: &[usize],
    weights: &LossWeights,
    grad: &mut Model,
) -> Result<StateOutcome> {
    let corpus = sc.retriever.corpus();
    let belief = BeliefState::from_sample(question, candidates);
    let enc = sc.encoder.encode(&belief, sc.ctx);
    let passages = belief.passages();
    let gold = gold_indices(question, corpus);
    let is_gold: Vec<bool> = passages.iter().map(|p| gold.contains(p)).collect();

    let mut scratch = Model::zeros(model.dim);
    let evidence = evidence_loss(model, &enc, &is_gold, 1.0, &mut scratch)?;
    grad.add_scaled(&scratch, weights.evidence);
    let (scores, threshold) = score_candidates(&enc, &EvidenceScorer::from_model(model))?;
    let ranking_exact = scores
        .iter()
        .zip(&is_gold)
        .all(|(&s, &g)| (s > threshold) == g);

    let oracle_evidence = oracle_evidence_filter(&passages, question, corpus);
    let octx = OracleContext {
        question,
        retriever: sc.retriever,
        state: None,
        evidence: &oracle_evidence,
        memo: Some(sc.memo),
    };

    // link head
    let inputs = link_inputs(&enc);
    let link_label = oracle_link_slot(&belief, &enc, &octx).unwrap_or(inputs.len() - 1);
    scratch.fill(0.0);
    let link = link_loss(model, &inputs, link_label, &mut scratch)?;
    grad.add_scaled(&scratch, weights.link);

    // answer head
    let span_label = oracle_answer_label(&belief, &enc, question, corpus);
    scratch.fill(0.0);
    let answer = answer_loss(model, &enc, span_label, &mut scratch)?;
    grad.add_scaled(&scratch, weights.answer);
    let pred = extract_answer(model, &enc);
    let span_exact = pred.token_range(&enc) == span_label;

    // policy with teacher-forced arguments
    let args = oracle_arguments(
        generate_arguments(model, &belief, &oracle_evidence, &enc, sc.ctx),
        &belief,
        &enc,
        &octx,
    );
    let narrowed = narrow_actions(&args, &belief, &enc, sc.encoder, sc.ctx, None, [true; 4]);
    let decision = oracle_action(&octx, &narrowed, &args.answer_text)?;
    let (policy, action_agrees, oracle_idx) = match decision.index {
        Some(label) if !decision.dead_end && !narrowed.candidates[label].masked => {
            let sel = select_action(&narrowed, &enc, model)?;
            let (loss, dscores) = policy_loss(&sel.scores, &narrowed.masks(), label)?;
            for (fwd, &g) in sel.forwards.iter().zip(&dscores) {
                if g != 0.0 {
                    action_backward(model, fwd, weights.policy * g, grad);
                }
            }
            let pick = argmax_unmasked(&sel.scores, &narrowed.masks())?;
            (Some(loss), Some(pick == label), Some(label))
        }
        _ => (None, None, None),
    };

    Ok(StateOutcome {
        evidence,
        policy,
        link,
        answer,
        action_agrees,
        ranking_exact,
        span_exact,
        oracle_action: oracle_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln_factorial(n: usize) -> f64 {
        (1..=n).map(|k| (k as f64).ln()).sum()
    }

    #[test]
    fn uniform_scores_give_ln_factorial() {
        for n in 1..8 {
            let labels: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
            let (l, _) = listmle_loss(&vec![0.0; n], &labels).unwrap();
            assert!((l - ln_factorial(n)).abs() < 1e-9, "n={n}");
        }
        assert_eq!(listmle_loss(&[2.5], &[1.0]).unwrap().0, 0.0);
        assert!(matches!(listmle_loss(&[], &[]), Err(Error::EmptyScores)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let scores = [0.3, -1.2, 2.0, 0.7, -0.1];
        let labels = [1.0, 0.0, 0.5, 1.0, 0.0];
        let (_, g) = listmle_loss(&scores, &labels).unwrap();
        let h = 1e-5;
        for i in 0..scores.len() {
            let mut up = scores;
            let mut dn = scores;
            up[i] += h;
            dn[i] -= h;
            let fd = (listmle_loss(&up, &labels).unwrap().0
                - listmle_loss(&dn, &labels).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn perfectly_ordered_scores_approach_zero() {
        let (l, _) = listmle_loss(&[40.0, 20.0, 0.0], &[1.0, 0.5, 0.0]).unwrap();
        assert!(l < 1e-8);
    }
}
