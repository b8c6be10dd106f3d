//! Corpora sampled from an automaton, split into disjoint train/test sets.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::automaton::{Dpfsa, StringRecord};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_SIZE: usize = 20_000;
pub const DEFAULT_MAX_LEN: usize = 256;
pub const DEFAULT_MIN_TEST: usize = 2_000;
pub const HISTOGRAM_BIN_WIDTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub size: usize,
    pub max_len: usize,
    pub min_test: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            size: DEFAULT_SIZE,
            max_len: DEFAULT_MAX_LEN,
            min_test: DEFAULT_MIN_TEST,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub mean_length: f64,
    pub num_truncated: usize,
    /// `histogram[i]` counts strings with length in `[8i, 8i + 8)`.
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<StringRecord>,
    pub test: Vec<StringRecord>,
    pub source_automaton_id: String,
    pub seed: u64,
    pub max_len: usize,
    pub stats: DatasetStats,
}

/// Cumulative next-outcome tables for fast ancestral sampling.
struct Sampler<'a> {
    automaton: &'a Dpfsa,
    cumulative: Vec<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    fn new(automaton: &'a Dpfsa) -> Self {
        let cumulative = (0..automaton.num_states())
            .map(|q| {
                let mut acc = 0.0;
                automaton
                    .next_distribution(q)
                    .expect("state in range")
                    .into_iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Sampler {
            automaton,
            cumulative,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, state: usize) -> usize {
        let cum = &self.cumulative[state];
        let u = rng.random::<f64>() * cum[cum.len() - 1];
        // First outcome whose cumulative mass exceeds u; skips zero-mass outcomes.
        cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_len: usize) -> StringRecord {
        let a = self.automaton;
        let eos = a.alphabet().eos();
        let s = a.alphabet().size();
        let mut q = a.initial_state();
        let mut symbols = Vec::new();
        loop {
            let y = self.draw(rng, q);
            if y == eos {
                return StringRecord {
                    symbols,
                    truncated: false,
                };
            }
            if symbols.len() == max_len {
                return StringRecord {
                    symbols,
                    truncated: true,
                };
            }
            symbols.push(y as u32);
            q = a.topology()[q * s + y];
        }
    }
}

/// Draws one string by ancestral sampling. Generation stops at EOS; once
/// `max_len` symbols have been emitted one more outcome is drawn, and the
/// string is marked truncated unless that outcome is EOS.
pub fn sample_string<R: Rng + ?Sized>(a: &Dpfsa, rng: &mut R, max_len: usize) -> StringRecord {
    Sampler::new(a).sample(rng, max_len)
}

/// `n` strings, string `i` drawn from its own substream of `seed`.
pub fn sample_strings(a: &Dpfsa, seed: u64, n: usize, max_len: usize) -> Vec<StringRecord> {
    sample_range(&Sampler::new(a), seed, 0..n as u64, max_len)
}

fn sample_range(
    sampler: &Sampler,
    seed: u64,
    indices: std::ops::Range<u64>,
    max_len: usize,
) -> Vec<StringRecord> {
    indices
        .into_par_iter()
        .map(|i| sampler.sample(&mut rng::stream(seed, "string", i), max_len))
        .collect()
}

/// Cap on training draws, as a multiple of the number of training strings.
pub const MAX_DRAW_FACTOR: usize = 10_000;

/// The first `min_test` draws form the test set, duplicates included, so
/// test strings are i.i.d. from the automaton. Later draws go to train unless
/// their sequence already occurs in test, in which case they are discarded,
/// until `size - min_test` training strings are collected.
pub fn build_dataset(
    a: &Dpfsa,
    automaton_id: &str,
    seed: u64,
    config: &DatasetConfig,
) -> Result<Dataset> {
    if config.size <= config.min_test {
        return Err(Error::Config(format!(
            "dataset size {} must exceed min_test {}",
            config.size, config.min_test
        )));
    }
    a.ensure_valid()?;
    let sampler = Sampler::new(a);
    let test = sample_range(&sampler, seed, 0..config.min_test as u64, config.max_len);
    let mut counts: HashMap<&[u32], usize> = HashMap::new();
    for s in &test {
        *counts.entry(s.symbols.as_slice()).or_default() += 1;
    }

    // Exact probability that a fresh draw avoids every test string.
    let escape_mass = 1.0
        - counts
            .keys()
            .filter_map(|y| a.string_logprob(y).ok())
            .map(f64::exp)
            .sum::<f64>();

    let need = config.size - config.min_test;
    let cap = need.saturating_mul(MAX_DRAW_FACTOR);
    let mut train = Vec::with_capacity(need);
    let mut drawn = 0usize;
    let hopeless = escape_mass * (cap as f64) < need as f64;
    while !hopeless && train.len() < need && drawn < cap {
        let batch = (need - train.len()).max(256).min(cap - drawn);
        let start = (config.min_test + drawn) as u64;
        for s in sample_range(&sampler, seed, start..start + batch as u64, config.max_len) {
            if train.len() < need && !counts.contains_key(s.symbols.as_slice()) {
                train.push(s);
            }
        }
        drawn += batch;
    }
    if train.len() < need {
        let (group, count) = counts
            .iter()
            .max_by(|x, y| x.1.cmp(y.1).then_with(|| y.0.cmp(x.0)))
            .map(|(k, &c)| (k.to_vec(), c))
            .unwrap_or_default();
        return Err(Error::InfeasibleSplit {
            group,
            count,
            min_test: config.min_test,
            escape_mass,
            collected: train.len(),
            drawn,
        });
    }

    let stats = compute_stats(train.iter().chain(test.iter()));
    Ok(Dataset {
        train,
        test,
        source_automaton_id: automaton_id.to_string(),
        seed,
        max_len: config.max_len,
        stats,
    })
}

fn compute_stats<'a>(strings: impl Iterator<Item = &'a StringRecord>) -> DatasetStats {
    let mut n = 0usize;
    let mut total = 0usize;
    let mut num_truncated = 0;
    let mut histogram: Vec<usize> = Vec::new();
    for s in strings {
        n += 1;
        total += s.len();
        if s.truncated {
            num_truncated += 1;
        }
        let bin = s.len() / HISTOGRAM_BIN_WIDTH;
        if histogram.len() <= bin {
            histogram.resize(bin + 1, 0);
        }
        histogram[bin] += 1;
    }
    DatasetStats {
        mean_length: if n == 0 { f64::NAN } else { total as f64 / n as f64 },
        num_truncated,
        histogram,
    }
}

pub fn dataset_stats(d: &Dataset) -> DatasetStats {
    compute_stats(d.train.iter().chain(d.test.iter()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusLine {
    split: Split,
    ids: Vec<u32>,
    truncated: bool,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[StringRecord] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// JSONL, one `{split, ids, truncated}` object per string; train first.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (split, strings) in [(Split::Train, &self.train), (Split::Test, &self.test)] {
            for s in strings {
                let line = CorpusLine {
                    split,
                    ids: s.symbols.clone(),
                    truncated: s.truncated,
                };
                serde_json::to_writer(&mut w, &line)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(
        reader: R,
        source_automaton_id: &str,
        seed: u64,
        max_len: usize,
    ) -> Result<Self> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<corpus>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CorpusLine = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("corpus line {}", lineno + 1), e))?;
            let s = StringRecord {
                symbols: rec.ids,
                truncated: rec.truncated,
            };
            match rec.split {
                Split::Train => train.push(s),
                Split::Test => test.push(s),
            }
        }
        let stats = compute_stats(train.iter().chain(test.iter()));
        Ok(Dataset {
            train,
            test,
            source_automaton_id: source_automaton_id.to_string(),
            seed,
            max_len,
            stats,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, source_automaton_id: &str, seed: u64, max_len: usize) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(f), source_automaton_id, seed, max_len)
    }
}
