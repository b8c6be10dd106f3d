use std::path::PathBuf;

use thiserror::Error;

use crate::automaton::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state {state} out of range for automaton with {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },

    #[error("symbol {symbol} out of range for alphabet of size {alphabet_size}")]
    SymbolOutOfRange { symbol: usize, alphabet_size: usize },

    #[error("EOS (id {0}) is not a transition label")]
    EosTransition(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid automaton: {}", format_violations(.0))]
    InvalidAutomaton(Vec<Violation>),

    #[error("logit rank undefined: explicit-probability automaton has non-finite log-probabilities")]
    NonFiniteLogits,

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("automaton does not terminate almost surely: state {state} is reachable but cannot reach a final state")]
    NonTerminating { state: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error(
        "infeasible train/test split: test strings leave mass {escape_mass:e} for training \
         ({collected} collected after {drawn} draws); most frequent test string {group:?} occurs {count} times in {min_test}"
    )]
    InfeasibleSplit {
        group: Vec<u32>,
        count: usize,
        min_test: usize,
        escape_mass: f64,
        collected: usize,
        drawn: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite activation at step {step}")]
    NonFiniteActivation { step: usize },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("score file {path}: line {line}: {message}")]
    ScoreSchema {
        path: String,
        line: usize,
        message: String,
    },

    #[error("score coverage: {0}")]
    ScoreCoverage(String),

    #[error("token count mismatch for string {string_index}: expected {expected}, found {found}")]
    TokenCount {
        string_index: usize,
        expected: usize,
        found: usize,
    },

    #[error("cannot standardize constant column {0}")]
    ConstantColumn(String),

    #[error("design matrix is rank deficient; dependent columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("not enough records: need at least {needed}, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("unknown column {0}")]
    UnknownColumn(String),

    #[error("malformed table: {0}")]
    Table(String),

    #[error("all {0} experiment cells failed")]
    AllCellsFailed(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the command-line error reporter.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::StateOutOfRange { .. } => "state_out_of_range",
            Error::SymbolOutOfRange { .. } => "symbol_out_of_range",
            Error::EosTransition(_) => "eos_transition",
            Error::Shape(_) => "shape",
            Error::InvalidAutomaton(_) => "invalid_automaton",
            Error::NonFiniteLogits => "non_finite_logits",
            Error::RankOutOfRange { .. } => "rank_out_of_range",
            Error::NonTerminating { .. } => "non_terminating",
            Error::Singular(_) => "singular",
            Error::InfeasibleSplit { .. } => "infeasible_split",
            Error::Config(_) => "config",
            Error::NonFiniteActivation { .. } => "non_finite_activation",
            Error::Diverged { .. } => "diverged",
            Error::ScoreSchema { .. } => "score_schema",
            Error::ScoreCoverage(_) => "score_coverage",
            Error::TokenCount { .. } => "token_count",
            Error::ConstantColumn(_) => "constant_column",
            Error::RankDeficient(_) => "rank_deficient",
            Error::TooFewRecords { .. } => "too_few_records",
            Error::UnknownColumn(_) => "unknown_column",
            Error::Table(_) => "table",
            Error::AllCellsFailed(_) => "all_cells_failed",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
