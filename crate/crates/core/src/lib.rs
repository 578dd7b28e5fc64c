pub mod belief;
pub mod corpus;
pub mod env;
pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod retrieval;
pub mod synth;
pub mod text;
pub mod training;

pub use belief::{BeliefState, EvidenceSet};
pub use corpus::{Answer, Corpus, Passage, Question};
pub use env::{Action, Environment, Func, Observation};
pub use error::{Error, Result};
pub use retrieval::{RankedList, Retriever};
