//! Episode runner, metrics and strategy baselines.

pub mod episode;
pub mod metrics;
pub mod report;
pub mod strategy;

pub use episode::{
    run_episode, Agent, AgentConfig, Control, EpisodeTrace, TraceStep, DEFAULT_STEP_LIMIT,
};
pub use metrics::{exact_match, f1_score, normalize_answer, passage_em};
pub use report::{
    evaluate, format_table, recovery_stats, run_strategy, run_traces, step_limit_sweep,
    MetricsReport, RecoveryStats,
};
pub use strategy::{Count, Directive, Stage, StrategyCursor, StrategySpec};
