//! Random rank-controlled DPFSA families.
//!
//! A family shares one topology and one Gaussian logit matrix `T`; member `R`
//! uses the best rank-`R` approximation of `T` (truncated SVD) as its logits.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::automaton::{Alphabet, Dpfsa, ParamMode};
use crate::error::{Error, Result};
use crate::linalg::Svd;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub state_sizes: BTreeSet<usize>,
    pub alphabet_sizes: BTreeSet<usize>,
    pub rank_grid: BTreeSet<usize>,
    pub logit_std: f64,
    pub length_filter_threshold: f64,
    pub master_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let sizes: BTreeSet<usize> = [2, 4, 6, 8, 10, 12, 16].into_iter().collect();
        GenerationConfig {
            state_sizes: sizes.clone(),
            alphabet_sizes: sizes,
            rank_grid: [1, 2, 4, 6, 8, 10, 12, 16].into_iter().collect(),
            logit_std: 2.0,
            length_filter_threshold: 46.0,
            master_seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.state_sizes.is_empty() || self.state_sizes.contains(&0) {
            return bad("state_sizes must be non-empty and positive");
        }
        if self.alphabet_sizes.is_empty() || self.alphabet_sizes.contains(&0) {
            return bad("alphabet_sizes must be non-empty and positive");
        }
        if self.rank_grid.is_empty() || self.rank_grid.contains(&0) {
            return bad("rank_grid must be non-empty and positive");
        }
        if !(self.logit_std > 0.0) {
            return bad("logit_std must be positive");
        }
        if !(self.length_filter_threshold > 0.0) {
            return bad("length_filter_threshold must be positive");
        }
        Ok(())
    }

    /// Ranks `r` in the grid with `r <= min(|Q|, |Σ|+1)`, ascending and unique.
    pub fn ranks_for(&self, num_states: usize, alphabet_size: usize) -> Vec<usize> {
        let bound = num_states.min(alphabet_size + 1);
        self.rank_grid.iter().copied().filter(|&r| r <= bound).collect()
    }
}

/// Uniform destination for every `(state, symbol)` cell, row-major.
pub fn sample_topology<R: Rng + ?Sized>(rng: &mut R, num_states: usize, alphabet_size: usize) -> Vec<usize> {
    (0..num_states * alphabet_size)
        .map(|_| rng.random_range(0..num_states))
        .collect()
}

/// `(|Σ|+1) x |Q|` matrix of i.i.d. `Normal(0, std²)` entries, filled row-major.
pub fn sample_logits<R: Rng + ?Sized>(
    rng: &mut R,
    alphabet_size: usize,
    num_states: usize,
    std: f64,
) -> DMatrix<f64> {
    let normal = Normal::new(0.0, std).expect("positive std");
    let rows = alphabet_size + 1;
    let values: Vec<f64> = (0..rows * num_states).map(|_| normal.sample(rng)).collect();
    DMatrix::from_row_slice(rows, num_states, &values)
}

/// Best rank-`rank` approximation of `t` in Frobenius norm.
pub fn rank_truncate(t: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    let max = t.nrows().min(t.ncols());
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    Ok(Svd::new(t).reconstruct(rank))
}

/// One softmax automaton per admissible rank, all sharing `topology`.
pub fn build_family(
    topology: &[usize],
    logits: &DMatrix<f64>,
    initial_state: usize,
    config: &GenerationConfig,
) -> Result<Vec<Dpfsa>> {
    let num_states = logits.ncols();
    let alphabet_size = logits
        .nrows()
        .checked_sub(1)
        .ok_or_else(|| Error::Shape("logit matrix has no rows".into()))?;
    let alphabet = Alphabet::new(alphabet_size)?;
    let svd = Svd::new(logits);
    config
        .ranks_for(num_states, alphabet_size)
        .into_iter()
        .map(|r| {
            Dpfsa::new_checked(
                num_states,
                alphabet,
                initial_state,
                topology.to_vec(),
                svd.reconstruct(r),
                r,
                ParamMode::SoftmaxLogits,
            )
        })
        .collect()
}

/// Samples the family for one `(|Q|, |Σ|, replicate)` grid cell from the
/// config's master seed. The initial state is state 0.
pub fn generate_family(
    config: &GenerationConfig,
    num_states: usize,
    alphabet_size: usize,
    replicate: u64,
) -> Result<Vec<Dpfsa>> {
    config.validate()?;
    if num_states == 0 || alphabet_size == 0 {
        return Err(Error::Config(format!(
            "family needs at least one state and one symbol, got |Q| = {num_states}, |Σ| = {alphabet_size}"
        )));
    }
    let seed = rng::derive_seed_multi(
        config.master_seed,
        "family",
        &[num_states as u64, alphabet_size as u64, replicate],
    );
    let mut r = rng::stream_from_seed(seed);
    let topology = sample_topology(&mut r, num_states, alphabet_size);
    let logits = sample_logits(&mut r, alphabet_size, num_states, config.logit_std);
    build_family(&topology, &logits, 0, config)
}

/// Keeps automata whose expected string length is at most `threshold`.
pub fn filter_by_expected_length(automata: Vec<Dpfsa>, threshold: f64) -> Result<Vec<Dpfsa>> {
    let mut kept = Vec::with_capacity(automata.len());
    for a in automata {
        if analysis::expected_length(&a)? <= threshold {
            kept.push(a);
        }
    }
    Ok(kept)
}
