//! Closed-form quantities of a DPFSA.
//!
//! With `M[i][j] = Σ_y 1{τ(q_i, y) = q_j} p(y | q_i)`, `α` the one-hot initial
//! vector and `ξ_i` the next-outcome entropy of state `i`, the row vector
//! `v = αᵀ(I − M)⁻¹` holds expected state occupancies. Then
//! `H(A) = v · ξ` and `E[|y|] = Σ_q v_q − 1`.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::automaton::{Dpfsa, ParamMode};
use crate::error::{Error, Result};
use crate::linalg;

/// Residual bound checked after every occupancy solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub entropy_bits: f64,
    pub expected_length: f64,
    pub visit_expectations: Vec<f64>,
    pub spectral_margin: f64,
    pub logprob_matrix_rank: Option<usize>,
}

pub fn transition_matrix(a: &Dpfsa) -> DMatrix<f64> {
    let n = a.num_states();
    let s = a.alphabet().size();
    let mut m = DMatrix::zeros(n, n);
    for q in 0..n {
        for y in 0..s {
            let target = a.topology()[q * s + y];
            m[(q, target)] += a.log_prob(q, y).exp();
        }
    }
    m
}

/// Per-state next-outcome entropy in nats (`0 log 0 = 0`).
pub fn state_entropies(a: &Dpfsa) -> DVector<f64> {
    DVector::from_iterator(
        a.num_states(),
        (0..a.num_states()).map(|q| {
            a.log_prob_matrix()
                .column(q)
                .iter()
                .filter(|lp| lp.is_finite())
                .map(|&lp| -lp.exp() * lp)
                .sum::<f64>()
        }),
    )
}

/// Rejects explicit automata with a reachable state that cannot reach any
/// state with positive final weight.
fn check_termination(a: &Dpfsa) -> Result<()> {
    if a.param_mode() == ParamMode::SoftmaxLogits {
        return Ok(());
    }
    let n = a.num_states();
    let s = a.alphabet().size();
    let edges = |q: usize| {
        (0..s)
            .filter(move |&y| a.log_prob(q, y) > f64::NEG_INFINITY)
            .map(move |y| a.topology()[q * s + y])
    };

    let mut reachable = vec![false; n];
    let mut stack = vec![a.initial_state()];
    reachable[a.initial_state()] = true;
    while let Some(q) = stack.pop() {
        for t in edges(q) {
            if !reachable[t] {
                reachable[t] = true;
                stack.push(t);
            }
        }
    }

    // Backward closure from terminating states.
    let mut can_stop: Vec<bool> = (0..n).map(|q| a.final_weight(q) > 0.0).collect();
    loop {
        let mut changed = false;
        for q in 0..n {
            if !can_stop[q] && edges(q).any(|t| can_stop[t]) {
                can_stop[q] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    match (0..n).find(|&q| reachable[q] && !can_stop[q]) {
        Some(state) => Err(Error::NonTerminating { state }),
        None => Ok(()),
    }
}

/// `x` solving `(I − M)ᵀ x = α`, together with `‖(I − M)ᵀ x − α‖∞`.
pub fn solve_occupancy(a: &Dpfsa) -> Result<(DVector<f64>, f64)> {
    check_termination(a)?;
    let n = a.num_states();
    let m = transition_matrix(a);
    let system = (DMatrix::identity(n, n) - m).transpose();
    let mut alpha = DVector::zeros(n);
    alpha[a.initial_state()] = 1.0;
    let x = system
        .clone()
        .lu()
        .solve(&alpha)
        .ok_or_else(|| Error::Singular("I - M is not invertible".into()))?;
    let residual = (&system * &x - &alpha).amax();
    if !(residual < SOLVE_RESIDUAL_TOL) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("occupancy solve residual {residual:e}")));
    }
    Ok((x, residual))
}

/// Expected number of times each state is occupied, counting the initial occupancy.
pub fn visit_expectations(a: &Dpfsa) -> Result<DVector<f64>> {
    Ok(solve_occupancy(a)?.0)
}

pub fn entropy_nats(a: &Dpfsa) -> Result<f64> {
    let v = visit_expectations(a)?;
    Ok(v.dot(&state_entropies(a)))
}

/// Entropy of the string distribution in bits.
pub fn entropy(a: &Dpfsa) -> Result<f64> {
    Ok(entropy_nats(a)? / LN_2)
}

pub fn expected_length(a: &Dpfsa) -> Result<f64> {
    Ok(visit_expectations(a)?.sum() - 1.0)
}

/// Numeric rank of the matrix of columnwise log next-outcome probabilities.
pub fn logprob_matrix_rank(a: &Dpfsa, tol: f64) -> Result<usize> {
    let lp = a.log_prob_matrix();
    if lp.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLogits);
    }
    Ok(linalg::numeric_rank(lp, tol))
}

pub fn analyze(a: &Dpfsa) -> Result<AnalysisReport> {
    let v = visit_expectations(a)?;
    let m = transition_matrix(a);
    let max_row = m.row_iter().map(|r| r.sum()).fold(f64::NEG_INFINITY, f64::max);
    let entropy_nats = v.dot(&state_entropies(a));
    Ok(AnalysisReport {
        entropy_bits: entropy_nats / LN_2,
        expected_length: v.sum() - 1.0,
        visit_expectations: v.iter().copied().collect(),
        spectral_margin: 1.0 - max_row,
        logprob_matrix_rank: logprob_matrix_rank(a, crate::automaton::DEFAULT_RANK_TOL).ok(),
    })
}
