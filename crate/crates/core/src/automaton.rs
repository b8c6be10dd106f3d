//! Deterministic probabilistic finite-state automata (DPFSAs).
//!
//! An automaton over an alphabet of `n` symbols keeps a total transition table
//! `topology[q * n + y]` and a logit matrix of shape `(n + 1) x |Q|` whose
//! column `q` parameterizes the next-symbol distribution of state `q`. Row `n`
//! is the EOS outcome, i.e. the final weight of the state.
//!
//! Two parameterizations are supported:
//!
//! * [`ParamMode::SoftmaxLogits`]: `p(. | q) = softmax(logits[:, q])`. Every
//!   event has positive probability.
//! * [`ParamMode::ExplicitProbs`]: `logits[:, q]` already holds natural-log
//!   probabilities and may contain `-inf` for impossible events. Used for
//!   hand-written automata.
//!
//! All log-probabilities are in nats.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const SOFTMAX_NORM_TOL: f64 = 1e-12;
pub const EXPLICIT_NORM_TOL: f64 = 1e-9;
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Shape("alphabet must contain at least one symbol".into()));
        }
        Ok(Alphabet { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Reserved id of the end-of-sequence outcome; not a member of the alphabet.
    pub fn eos(&self) -> usize {
        self.size
    }

    /// Size of the alphabet extended with EOS.
    pub fn extended_size(&self) -> usize {
        self.size + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamMode {
    SoftmaxLogits,
    ExplicitProbs,
}

/// A sampled (or hand-written) string of symbol ids, EOS excluded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StringRecord {
    pub symbols: Vec<u32>,
    pub truncated: bool,
}

impl StringRecord {
    pub fn new(symbols: Vec<u32>) -> Self {
        StringRecord {
            symbols,
            truncated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    InitialStateOutOfRange { initial_state: usize },
    TransitionOutOfRange { symbol: usize, target: usize },
    /// Softmax mode: some outcome has zero probability (or the column is undefined).
    MissingSupport { outcome: usize },
    /// Softmax mode logit that is NaN or `+inf`.
    NonFiniteLogit { outcome: usize },
    /// Explicit mode entry that is NaN or positive.
    InvalidLogProb { outcome: usize, value: f64 },
    Normalization { sum: f64, tol: f64 },
    DeclaredRank { declared: usize, max: usize },
}

/// One violated invariant, located at a state (column) when applicable.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub state: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(q) = self.state {
            write!(f, "state {q}: ")?;
        }
        match &self.kind {
            ViolationKind::InitialStateOutOfRange { initial_state } => {
                write!(f, "initial state {initial_state} out of range")
            }
            ViolationKind::TransitionOutOfRange { symbol, target } => {
                write!(f, "transition on symbol {symbol} targets missing state {target}")
            }
            ViolationKind::MissingSupport { outcome } => {
                write!(f, "outcome {outcome} has zero probability (full support required)")
            }
            ViolationKind::NonFiniteLogit { outcome } => {
                write!(f, "logit for outcome {outcome} is not finite")
            }
            ViolationKind::InvalidLogProb { outcome, value } => {
                write!(f, "log-probability {value} for outcome {outcome} is invalid")
            }
            ViolationKind::Normalization { sum, tol } => {
                write!(f, "probabilities sum to {sum}, not 1 within {tol:e}")
            }
            ViolationKind::DeclaredRank { declared, max } => {
                write!(f, "declared rank {declared} outside 1..={max}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dpfsa {
    num_states: usize,
    alphabet: Alphabet,
    initial_state: usize,
    topology: Vec<usize>,
    logits: DMatrix<f64>,
    declared_rank: usize,
    param_mode: ParamMode,
    // Column q holds log p(. | q); derived from `logits`.
    log_probs: DMatrix<f64>,
}

impl Dpfsa {
    /// Builds an automaton after checking shapes. Numeric invariants are
    /// reported by [`Dpfsa::validate`]; use [`Dpfsa::new_checked`] to require them.
    pub fn new(
        num_states: usize,
        alphabet: Alphabet,
        initial_state: usize,
        topology: Vec<usize>,
        logits: DMatrix<f64>,
        declared_rank: usize,
        param_mode: ParamMode,
    ) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::Shape("automaton needs at least one state".into()));
        }
        if topology.len() != num_states * alphabet.size() {
            return Err(Error::Shape(format!(
                "topology has {} cells, expected {}x{}",
                topology.len(),
                num_states,
                alphabet.size()
            )));
        }
        if logits.nrows() != alphabet.extended_size() || logits.ncols() != num_states {
            return Err(Error::Shape(format!(
                "logits are {}x{}, expected {}x{}",
                logits.nrows(),
                logits.ncols(),
                alphabet.extended_size(),
                num_states
            )));
        }
        let log_probs = match param_mode {
            ParamMode::SoftmaxLogits => {
                let mut lp = logits.clone();
                for q in 0..num_states {
                    let col: Vec<f64> = logits.column(q).iter().copied().collect();
                    for (i, v) in linalg::log_softmax(&col).into_iter().enumerate() {
                        lp[(i, q)] = v;
                    }
                }
                lp
            }
            ParamMode::ExplicitProbs => logits.clone(),
        };
        Ok(Dpfsa {
            num_states,
            alphabet,
            initial_state,
            topology,
            logits,
            declared_rank,
            param_mode,
            log_probs,
        })
    }

    pub fn new_checked(
        num_states: usize,
        alphabet: Alphabet,
        initial_state: usize,
        topology: Vec<usize>,
        logits: DMatrix<f64>,
        declared_rank: usize,
        param_mode: ParamMode,
    ) -> Result<Self> {
        let a = Self::new(
            num_states,
            alphabet,
            initial_state,
            topology,
            logits,
            declared_rank,
            param_mode,
        )?;
        a.ensure_valid()?;
        Ok(a)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn topology(&self) -> &[usize] {
        &self.topology
    }

    pub fn logits(&self) -> &DMatrix<f64> {
        &self.logits
    }

    pub fn declared_rank(&self) -> usize {
        self.declared_rank
    }

    pub fn param_mode(&self) -> ParamMode {
        self.param_mode
    }

    /// `min(|Q|, |Σ| + 1)`, the largest rank the logit matrix can have.
    pub fn rank_bound(&self) -> usize {
        self.num_states.min(self.alphabet.extended_size())
    }

    /// Matrix of log next-outcome probabilities, shape `(|Σ|+1) x |Q|`.
    pub fn log_prob_matrix(&self) -> &DMatrix<f64> {
        &self.log_probs
    }

    /// `log p(outcome | state)` without range checks beyond the matrix's own.
    #[inline]
    pub fn log_prob(&self, state: usize, outcome: usize) -> f64 {
        self.log_probs[(outcome, state)]
    }

    /// Final weight of `state`: the probability of EOS.
    pub fn final_weight(&self, state: usize) -> f64 {
        self.log_prob(state, self.alphabet.eos()).exp()
    }

    /// Every violated invariant; empty when the automaton is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.alphabet.size();
        if self.initial_state >= self.num_states {
            out.push(Violation {
                state: None,
                kind: ViolationKind::InitialStateOutOfRange {
                    initial_state: self.initial_state,
                },
            });
        }
        let max_rank = self.rank_bound();
        if self.declared_rank == 0 || self.declared_rank > max_rank {
            out.push(Violation {
                state: None,
                kind: ViolationKind::DeclaredRank {
                    declared: self.declared_rank,
                    max: max_rank,
                },
            });
        }
        for q in 0..self.num_states {
            for y in 0..n {
                let target = self.topology[q * n + y];
                if target >= self.num_states {
                    out.push(Violation {
                        state: Some(q),
                        kind: ViolationKind::TransitionOutOfRange { symbol: y, target },
                    });
                }
            }
            match self.param_mode {
                ParamMode::SoftmaxLogits => self.check_softmax_column(q, &mut out),
                ParamMode::ExplicitProbs => self.check_explicit_column(q, &mut out),
            }
        }
        out
    }

    fn check_softmax_column(&self, q: usize, out: &mut Vec<Violation>) {
        let mut bad_logit = false;
        for (i, &v) in self.logits.column(q).iter().enumerate() {
            if v.is_nan() || v == f64::INFINITY {
                bad_logit = true;
                out.push(Violation {
                    state: Some(q),
                    kind: ViolationKind::NonFiniteLogit { outcome: i },
                });
            }
        }
        if bad_logit {
            return;
        }
        let mut sum = 0.0;
        let mut support_ok = true;
        for (i, &lp) in self.log_probs.column(q).iter().enumerate() {
            let p = lp.exp();
            if !(p > 0.0) {
                support_ok = false;
                out.push(Violation {
                    state: Some(q),
                    kind: ViolationKind::MissingSupport { outcome: i },
                });
            }
            sum += p;
        }
        if support_ok && !((sum - 1.0).abs() <= SOFTMAX_NORM_TOL) {
            out.push(Violation {
                state: Some(q),
                kind: ViolationKind::Normalization {
                    sum,
                    tol: SOFTMAX_NORM_TOL,
                },
            });
        }
    }

    fn check_explicit_column(&self, q: usize, out: &mut Vec<Violation>) {
        let mut sum = 0.0;
        for (i, &lp) in self.logits.column(q).iter().enumerate() {
            if lp.is_nan() || lp > 0.0 {
                out.push(Violation {
                    state: Some(q),
                    kind: ViolationKind::InvalidLogProb {
                        outcome: i,
                        value: lp,
                    },
                });
                return;
            }
            sum += lp.exp();
        }
        if !((sum - 1.0).abs() <= EXPLICIT_NORM_TOL) {
            out.push(Violation {
                state: Some(q),
                kind: ViolationKind::Normalization {
                    sum,
                    tol: EXPLICIT_NORM_TOL,
                },
            });
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidAutomaton(v))
        }
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.num_states {
            return Err(Error::StateOutOfRange {
                state,
                num_states: self.num_states,
            });
        }
        Ok(())
    }

    /// Probability vector over Σ ∪ {EOS} at `state` (EOS last).
    pub fn next_distribution(&self, state: usize) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let col: Vec<f64> = self.logits.column(state).iter().copied().collect();
        Ok(match self.param_mode {
            ParamMode::SoftmaxLogits => linalg::softmax(&col),
            ParamMode::ExplicitProbs => col.into_iter().map(f64::exp).collect(),
        })
    }

    pub fn step(&self, state: usize, symbol: usize) -> Result<usize> {
        self.check_state(state)?;
        if symbol == self.alphabet.eos() {
            return Err(Error::EosTransition(symbol));
        }
        if symbol > self.alphabet.size() {
            return Err(Error::SymbolOutOfRange {
                symbol,
                alphabet_size: self.alphabet.size(),
            });
        }
        let target = self.topology[state * self.alphabet.size() + symbol];
        self.check_state(target)?;
        Ok(target)
    }

    /// States `q_0 .. q_n` occupied while reading `symbols`, starting at the
    /// initial state.
    pub fn state_sequence(&self, symbols: &[u32]) -> Result<Vec<usize>> {
        let mut states = Vec::with_capacity(symbols.len() + 1);
        let mut q = self.initial_state;
        self.check_state(q)?;
        states.push(q);
        for &y in symbols {
            q = self.step(q, y as usize)?;
            states.push(q);
        }
        Ok(states)
    }

    /// `Σ_t log p(y_t | q_t) + log p(EOS | q_n)` in nats.
    pub fn string_logprob(&self, symbols: &[u32]) -> Result<f64> {
        let states = self.state_sequence(symbols)?;
        let mut total = 0.0;
        for (&y, &q) in symbols.iter().zip(&states) {
            total += self.log_prob(q, y as usize);
        }
        total += self.log_prob(*states.last().unwrap(), self.alphabet.eos());
        Ok(total)
    }

    /// Per-token log-probabilities (`|y|` symbol terms followed by the EOS term).
    pub fn token_logprobs(&self, symbols: &[u32]) -> Result<Vec<f64>> {
        let states = self.state_sequence(symbols)?;
        let mut out: Vec<f64> = symbols
            .iter()
            .zip(&states)
            .map(|(&y, &q)| self.log_prob(q, y as usize))
            .collect();
        out.push(self.log_prob(*states.last().unwrap(), self.alphabet.eos()));
        Ok(out)
    }

    /// Numeric rank of the logit matrix: singular values above `tol * sigma_max`.
    pub fn logit_rank(&self, tol: f64) -> Result<usize> {
        if self.logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLogits);
        }
        Ok(linalg::numeric_rank(&self.logits, tol))
    }

    pub fn to_file_repr(&self) -> Result<AutomatonFile> {
        // Row-major over (|Σ|+1) x |Q|.
        let mut logits = Vec::with_capacity(self.logits.len());
        for i in 0..self.logits.nrows() {
            for q in 0..self.logits.ncols() {
                logits.push(LogitEntry::from_f64(self.logits[(i, q)])?);
            }
        }
        Ok(AutomatonFile {
            num_states: self.num_states,
            alphabet_size: self.alphabet.size(),
            initial_state: self.initial_state,
            topology: self.topology.clone(),
            logits,
            declared_rank: self.declared_rank,
            param_mode: self.param_mode,
        })
    }

    pub fn from_file_repr(file: AutomatonFile) -> Result<Self> {
        let alphabet = Alphabet::new(file.alphabet_size)?;
        let rows = alphabet.extended_size();
        if file.logits.len() != rows * file.num_states {
            return Err(Error::Shape(format!(
                "logits array has {} entries, expected {}",
                file.logits.len(),
                rows * file.num_states
            )));
        }
        let values = file
            .logits
            .into_iter()
            .map(LogitEntry::into_f64)
            .collect::<Result<Vec<_>>>()?;
        let logits = DMatrix::from_row_slice(rows, file.num_states, &values);
        Dpfsa::new(
            file.num_states,
            alphabet,
            file.initial_state,
            file.topology,
            logits,
            file.declared_rank,
            file.param_mode,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_file_repr()?)
            .map_err(|e| Error::json("serializing automaton", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: AutomatonFile =
            serde_json::from_str(text).map_err(|e| Error::json("parsing automaton", e))?;
        Self::from_file_repr(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::json(path.display().to_string(), source),
            other => other,
        })
    }
}

/// On-disk automaton schema. Logits are row-major `(|Σ|+1) x |Q|`; `-inf` is
/// written as the string `"-inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomatonFile {
    pub num_states: usize,
    pub alphabet_size: usize,
    pub initial_state: usize,
    pub topology: Vec<usize>,
    pub logits: Vec<LogitEntry>,
    pub declared_rank: usize,
    pub param_mode: ParamMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogitEntry {
    Finite(f64),
    Special(String),
}

impl LogitEntry {
    fn from_f64(v: f64) -> Result<Self> {
        if v.is_finite() {
            Ok(LogitEntry::Finite(v))
        } else if v == f64::NEG_INFINITY {
            Ok(LogitEntry::Special("-inf".into()))
        } else {
            Err(Error::Shape(format!("cannot serialize logit {v}")))
        }
    }

    fn into_f64(self) -> Result<f64> {
        match self {
            LogitEntry::Finite(v) => Ok(v),
            LogitEntry::Special(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            LogitEntry::Special(s) => Err(Error::Shape(format!("unsupported logit value {s:?}"))),
        }
    }
}

/// Small hand-built automata used by tests, examples and the CLI.
pub mod fixtures {
    use super::*;

    /// One state over a one-symbol alphabet: emit the symbol with probability
    /// `p_symbol`, stop otherwise. Softmax-parameterized.
    pub fn geometric(p_symbol: f64) -> Dpfsa {
        let logits = DMatrix::from_row_slice(2, 1, &[p_symbol.ln(), (1.0 - p_symbol).ln()]);
        Dpfsa::new(1, Alphabet { size: 1 }, 0, vec![0], logits, 1, ParamMode::SoftmaxLogits)
            .expect("well-formed")
    }

    /// Explicit-probability chain that emits exactly `symbols` and stops.
    pub fn point_mass(symbols: &[u32], alphabet_size: usize) -> Dpfsa {
        let n = symbols.len() + 1;
        let rows = alphabet_size + 1;
        let mut logits = DMatrix::from_element(rows, n, f64::NEG_INFINITY);
        let mut topology = vec![0; n * alphabet_size];
        for (q, &y) in symbols.iter().enumerate() {
            logits[(y as usize, q)] = 0.0;
            for s in 0..alphabet_size {
                topology[q * alphabet_size + s] = if s == y as usize { q + 1 } else { q };
            }
        }
        logits[(alphabet_size, n - 1)] = 0.0;
        for s in 0..alphabet_size {
            topology[(n - 1) * alphabet_size + s] = n - 1;
        }
        let rank = 1;
        Dpfsa::new(
            n,
            Alphabet { size: alphabet_size },
            0,
            topology,
            logits,
            rank,
            ParamMode::ExplicitProbs,
        )
        .expect("well-formed")
    }

    /// Three-state explicit automaton over {a=0, b=1}:
    /// `p(a b^n a b^m) = 0.6 * 0.1^n * 0.9 * 0.7^m * 0.3` and
    /// `p(b b^m) = 0.4 * 0.7^m * 0.3`.
    pub fn ab_chain() -> Dpfsa {
        let ninf = f64::NEG_INFINITY;
        // rows: a, b, EOS; columns: q0, q1, q2
        let probs = [
            [0.6, 0.9, 0.0],
            [0.4, 0.1, 0.7],
            [0.0, 0.0, 0.3],
        ];
        let mut logits = DMatrix::zeros(3, 3);
        for i in 0..3 {
            for q in 0..3 {
                let p: f64 = probs[i][q];
                logits[(i, q)] = if p > 0.0 { p.ln() } else { ninf };
            }
        }
        // q0 -a-> q1, q0 -b-> q2, q1 -a-> q2, q1 -b-> q1, q2 -a-> q2 (weight 0), q2 -b-> q2
        let topology = vec![1, 2, 2, 1, 2, 2];
        Dpfsa::new(3, Alphabet { size: 2 }, 0, topology, logits, 3, ParamMode::ExplicitProbs)
            .expect("well-formed")
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_state_softmax() -> Dpfsa {
        let logits = DMatrix::from_row_slice(3, 2, &[0.1, -0.3, 0.7, 0.2, -1.0, 0.4]);
        Dpfsa::new(2, Alphabet::new(2).unwrap(), 0, vec![1, 0, 1, 1], logits, 2, ParamMode::SoftmaxLogits)
            .unwrap()
    }

    #[test]
    fn well_formed_automaton_has_no_violations() {
        assert!(two_state_softmax().validate().is_empty());
        assert!(ab_chain().validate().is_empty());
        assert!(geometric(0.5).validate().is_empty());
        assert!(point_mass(&[0, 1], 2).validate().is_empty());
    }

    #[test]
    fn all_neg_inf_column_violates_support() {
        let mut logits = DMatrix::from_row_slice(3, 2, &[0.1, -0.3, 0.7, 0.2, -1.0, 0.4]);
        for i in 0..3 {
            logits[(i, 1)] = f64::NEG_INFINITY;
        }
        let a = Dpfsa::new(2, Alphabet::new(2).unwrap(), 0, vec![1, 0, 1, 1], logits, 2, ParamMode::SoftmaxLogits)
            .unwrap();
        let v = a.validate();
        assert!(!v.is_empty());
        assert!(v.iter().all(|v| v.state == Some(1)));
        assert!(v.iter().any(|v| matches!(v.kind, ViolationKind::MissingSupport { .. })));
    }

    #[test]
    fn explicit_column_summing_to_point_nine_is_flagged() {
        let logits = DMatrix::from_row_slice(2, 1, &[0.5f64.ln(), 0.4f64.ln()]);
        let a = Dpfsa::new(1, Alphabet::new(1).unwrap(), 0, vec![0], logits, 1, ParamMode::ExplicitProbs).unwrap();
        let v = a.validate();
        assert_eq!(v.len(), 1);
        match v[0].kind {
            ViolationKind::Normalization { sum, .. } => assert_abs_diff_eq!(sum, 0.9, epsilon = 1e-12),
            ref k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn structural_violations_are_reported() {
        let logits = DMatrix::zeros(3, 2);
        let a = Dpfsa::new(2, Alphabet::new(2).unwrap(), 5, vec![0, 7, 1, 1], logits, 3, ParamMode::SoftmaxLogits)
            .unwrap();
        let v = a.validate();
        assert!(v.iter().any(|v| matches!(v.kind, ViolationKind::InitialStateOutOfRange { .. })));
        assert!(v.iter().any(|v| matches!(v.kind, ViolationKind::TransitionOutOfRange { target: 7, .. })));
        assert!(v.iter().any(|v| matches!(v.kind, ViolationKind::DeclaredRank { declared: 3, max: 2 })));
    }

    #[test]
    fn shape_errors_on_construction() {
        let logits = DMatrix::zeros(2, 2);
        assert!(matches!(
            Dpfsa::new(2, Alphabet::new(2).unwrap(), 0, vec![0; 4], logits, 1, ParamMode::SoftmaxLogits),
            Err(Error::Shape(_))
        ));
        assert!(Alphabet::new(0).is_err());
    }

    #[test]
    fn next_distribution_examples() {
        let uniform = Dpfsa::new(1, Alphabet::new(2).unwrap(), 0, vec![0, 0], DMatrix::zeros(3, 1), 1, ParamMode::SoftmaxLogits)
            .unwrap();
        for p in uniform.next_distribution(0).unwrap() {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
        let exact = DMatrix::from_row_slice(3, 1, &[0.5f64.ln(), 0.3f64.ln(), 0.2f64.ln()]);
        let a = Dpfsa::new(1, Alphabet::new(2).unwrap(), 0, vec![0, 0], exact, 1, ParamMode::SoftmaxLogits).unwrap();
        let p = a.next_distribution(0).unwrap();
        for (x, e) in p.iter().zip([0.5, 0.3, 0.2]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-15);
        }
        let shifted = DMatrix::from_element(3, 1, 7.25);
        let b = Dpfsa::new(1, Alphabet::new(2).unwrap(), 0, vec![0, 0], shifted, 1, ParamMode::SoftmaxLogits).unwrap();
        assert_eq!(b.next_distribution(0).unwrap(), uniform.next_distribution(0).unwrap());
        assert!(matches!(a.next_distribution(1), Err(Error::StateOutOfRange { .. })));
    }

    #[test]
    fn step_examples() {
        let g = geometric(0.5);
        assert_eq!(g.step(0, 0).unwrap(), 0);
        let a = two_state_softmax();
        assert_eq!(a.step(0, 0).unwrap(), 1);
        assert!(matches!(a.step(0, 2), Err(Error::EosTransition(2))));
        assert!(matches!(a.step(0, 9), Err(Error::SymbolOutOfRange { .. })));
        assert!(matches!(a.step(4, 0), Err(Error::StateOutOfRange { .. })));
    }

    #[test]
    fn string_logprob_examples() {
        let a = ab_chain();
        assert_abs_diff_eq!(a.string_logprob(&[1]).unwrap(), 0.12f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.string_logprob(&[0, 0]).unwrap(), 0.162f64.ln(), epsilon = 1e-12);
        // a b b a b: 0.6 * 0.1^2 * 0.9 * 0.7 * 0.3
        assert_abs_diff_eq!(
            a.string_logprob(&[0, 1, 1, 0, 1]).unwrap(),
            (0.6 * 0.01 * 0.9 * 0.7 * 0.3f64).ln(),
            epsilon = 1e-12
        );
        // "ba" has zero probability.
        assert_eq!(a.string_logprob(&[1, 0]).unwrap(), f64::NEG_INFINITY);
        let g = geometric(0.5);
        assert_abs_diff_eq!(g.string_logprob(&[0, 0]).unwrap(), 0.125f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.string_logprob(&[]).unwrap(), g.final_weight(0).ln(), epsilon = 0.0);
    }

    #[test]
    fn logit_rank_examples() {
        let mut t = DMatrix::zeros(3, 4);
        t[(0, 2)] = 1.0;
        t[(2, 2)] = -2.0;
        let a = Dpfsa::new(4, Alphabet::new(2).unwrap(), 0, vec![0; 8], t, 1, ParamMode::SoftmaxLogits).unwrap();
        assert_eq!(a.logit_rank(DEFAULT_RANK_TOL).unwrap(), 1);
        assert!(matches!(ab_chain().logit_rank(DEFAULT_RANK_TOL), Err(Error::NonFiniteLogits)));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        for a in [two_state_softmax(), ab_chain(), point_mass(&[1, 0, 1], 3)] {
            let text = a.to_json().unwrap();
            let b = Dpfsa::from_json(&text).unwrap();
            assert_eq!(a.logits().as_slice().len(), b.logits().as_slice().len());
            for (x, y) in a.logits().iter().zip(b.logits().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a, b);
        }
        assert!(ab_chain().to_json().unwrap().contains("\"-inf\""));
        let bad = ab_chain().to_json().unwrap().replacen("\"-inf\"", "\"inf\"", 1);
        assert!(Dpfsa::from_json(&bad).is_err());
    }

    fn arb_softmax_automaton() -> impl Strategy<Value = Dpfsa> {
        (1usize..5, 1usize..4).prop_flat_map(|(q, s)| {
            (
                Just(q),
                Just(s),
                proptest::collection::vec(0..q, q * s),
                proptest::collection::vec(-4.0f64..4.0, (s + 1) * q),
                0..q,
            )
                .prop_map(|(q, s, topo, logits, init)| {
                    let t = DMatrix::from_row_slice(s + 1, q, &logits);
                    Dpfsa::new(q, Alphabet::new(s).unwrap(), init, topo, t, 1, ParamMode::SoftmaxLogits).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn distributions_normalize(a in arb_softmax_automaton()) {
            for q in 0..a.num_states() {
                let s: f64 = a.next_distribution(q).unwrap().iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
            prop_assert!(a.validate().is_empty());
        }

        #[test]
        fn shift_invariance(a in arb_softmax_automaton(), c in -50.0f64..50.0, col_seed in 0usize..100,
                            ys in proptest::collection::vec(0u32..8, 0..10)) {
            let q = col_seed % a.num_states();
            let mut t = a.logits().clone();
            for i in 0..t.nrows() { t[(i, q)] += c; }
            let b = Dpfsa::new(a.num_states(), a.alphabet(), a.initial_state(), a.topology().to_vec(), t, 1,
                               ParamMode::SoftmaxLogits).unwrap();
            let pa = a.next_distribution(q).unwrap();
            let pb = b.next_distribution(q).unwrap();
            for (x, y) in pa.iter().zip(&pb) { prop_assert!((x - y).abs() <= 1e-12); }
            let ys: Vec<u32> = ys.into_iter().map(|y| y % a.alphabet().size() as u32).collect();
            let la = a.string_logprob(&ys).unwrap();
            let lb = b.string_logprob(&ys).unwrap();
            prop_assert!((la - lb).abs() <= 1e-12 * (1.0 + la.abs()));
        }

        #[test]
        fn state_sequence_matches_repeated_step(a in arb_softmax_automaton(),
                                                ys in proptest::collection::vec(0u32..8, 0..12)) {
            let ys: Vec<u32> = ys.into_iter().map(|y| y % a.alphabet().size() as u32).collect();
            let seq = a.state_sequence(&ys).unwrap();
            let mut q = a.initial_state();
            prop_assert_eq!(seq[0], q);
            let mut manual = 0.0;
            for (t, &y) in ys.iter().enumerate() {
                manual += a.log_prob(q, y as usize);
                q = a.step(q, y as usize).unwrap();
                prop_assert_eq!(seq[t + 1], q);
            }
            manual += a.log_prob(q, a.alphabet().eos());
            prop_assert_eq!(manual, a.string_logprob(&ys).unwrap());
        }
    }
}
