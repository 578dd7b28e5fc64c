//! Episode dynamics: executing actions against the hidden corpus.
//!
//! Every distinct retrieval action `⟨func, arg⟩` is searched once and its
//! ranked list cached. Each time the same action is received the next
//! unrevealed passage of that list is revealed and returned; once the list
//! is used up the observation is [`Observation::Exhausted`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Question;
use crate::error::{Error, Result};
use crate::retrieval::{AnchorRef, RankedList, Retriever};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Func {
    Sparse,
    Dense,
    Link,
    Answer,
}

impl Func {
    pub const ALL: [Func; 4] = [Func::Sparse, Func::Dense, Func::Link, Func::Answer];
    pub const RETRIEVAL: [Func; 3] = [Func::Sparse, Func::Dense, Func::Link];

    pub fn index(self) -> usize {
        match self {
            Func::Sparse => 0,
            Func::Dense => 1,
            Func::Link => 2,
            Func::Answer => 3,
        }
    }

    /// Tie-break priority, higher wins: ANSWER > LINK > SPARSE > DENSE.
    pub fn priority(self) -> u8 {
        match self {
            Func::Answer => 3,
            Func::Link => 2,
            Func::Sparse => 1,
            Func::Dense => 0,
        }
    }

    pub fn is_retrieval(self) -> bool {
        self != Func::Answer
    }
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Func::Sparse => "SPARSE",
            Func::Dense => "DENSE",
            Func::Link => "LINK",
            Func::Answer => "ANSWER",
        })
    }
}

/// `⟨f, u⟩`: a function and its textual argument. Link arguments are
/// anchor references (`source#start-end`); answer arguments are answer
/// text or one of `YES`, `NO`, `NONE`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub func: Func,
    pub arg: String,
}

impl Action {
    pub fn new(func: Func, arg: impl Into<String>) -> Self {
        Action {
            func,
            arg: arg.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    Question,
    /// Passage index in the corpus.
    Passage(usize),
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct CachedList {
    pub list: Arc<RankedList>,
    pub revealed: usize,
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub question_id: String,
    cache: HashMap<Action, CachedList>,
    pub t: usize,
    pub terminated: bool,
    pub answer: Option<String>,
    observed: HashSet<usize>,
    /// Number of times a retrieval function was actually executed.
    pub invocations: usize,
    pub cache_hits: usize,
}

impl EnvState {
    pub fn cached(&self, action: &Action) -> Option<&CachedList> {
        self.cache.get(action)
    }

    pub fn has_observed(&self, passage: usize) -> bool {
        self.observed.contains(&passage)
    }

    /// True once `action` has been cached and every entry revealed.
    pub fn is_exhausted(&self, action: &Action) -> bool {
        self.cache
            .get(action)
            .is_some_and(|c| c.revealed >= c.list.len())
    }

    pub fn distinct_keys(&self) -> usize {
        self.cache.len()
    }
}

/// Stateless executor over shared indexes; all episode state lives in
/// [`EnvState`].
#[derive(Debug, Clone, Copy)]
pub struct Environment<'r> {
    retriever: &'r Retriever,
}

impl<'r> Environment<'r> {
    pub fn new(retriever: &'r Retriever) -> Self {
        Environment { retriever }
    }

    pub fn retriever(&self) -> &'r Retriever {
        self.retriever
    }

    pub fn reset(&self, question: &Question) -> (EnvState, Observation) {
        (
            EnvState {
                question_id: question.id.clone(),
                cache: HashMap::new(),
                t: 0,
                terminated: false,
                answer: None,
                observed: HashSet::new(),
                invocations: 0,
                cache_hits: 0,
            },
            Observation::Question,
        )
    }

    pub fn step(&self, state: &mut EnvState, action: &Action) -> Result<Observation> {
        if state.terminated {
            return Err(Error::Terminated);
        }
        if action.func == Func::Answer {
            state.terminated = true;
            state.answer = Some(action.arg.clone());
            state.t += 1;
            return Ok(Observation::Question);
        }
        if !state.cache.contains_key(action) {
            if action.func == Func::Link {
                self.check_link_source(state, &action.arg)?;
            }
            let list = self.retriever.retrieve(action.func, &action.arg)?;
            state.invocations += 1;
            state.cache.insert(
                action.clone(),
                CachedList {
                    list: Arc::new(list),
                    revealed: 0,
                },
            );
        } else {
            state.cache_hits += 1;
        }
        let entry = state.cache.get_mut(action).expect("cached above");
        state.t += 1;
        if entry.revealed >= entry.list.len() {
            return Ok(Observation::Exhausted);
        }
        let passage = entry.list.hits[entry.revealed].passage;
        entry.revealed += 1;
        state.observed.insert(passage);
        Ok(Observation::Passage(passage))
    }

    fn check_link_source(&self, state: &EnvState, arg: &str) -> Result<()> {
        let r = AnchorRef::parse(arg)?;
        let src = self
            .retriever
            .corpus()
            .index_of(&r.source)
            .ok_or_else(|| Error::UnresolvedAnchor(arg.to_string()))?;
        if !state.observed.contains(&src) {
            return Err(Error::UnresolvedAnchor(format!(
                "{arg}: source passage has not been observed"
            )));
        }
        Ok(())
    }
}
