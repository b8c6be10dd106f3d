//! KL divergence between an automaton and a scored language model.
//!
//! `KL(p ‖ q) = H(p, q) − H(p)`; the cross-entropy is a Monte-Carlo average of
//! `−log₂ q(y)` over the untruncated test strings, the entropy is exact.
//!
//! # Score files
//!
//! JSONL. The first line is a header, every following line one string:
//!
//! ```text
//! {"model_id": "...", "automaton_id": "...", "units": "nats"}
//! {"string_index": 0, "total_logprob_nats": -3.1, "per_token_logprobs_nats": [-1.0, -2.1]}
//! ```
//!
//! With `"units": "bits"` the record keys end in `_bits` instead. A record may
//! also carry `full_logprobs_<units>`: one log-probability vector over Σ ∪ {EOS}
//! per step, used to spot-check normalization. `string_index` refers to the
//! position in the test split. Untruncated strings carry `len + 1` tokens (EOS
//! last); truncated strings carry `len` tokens and are excluded from the
//! estimate.

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analysis;
use crate::automaton::Dpfsa;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rnn::{RnnLm, ScoredString};

pub const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Nats,
    Bits,
}

impl Units {
    fn suffix(self) -> &'static str {
        match self {
            Units::Nats => "nats",
            Units::Bits => "bits",
        }
    }

    fn to_nats(self, v: f64) -> f64 {
        match self {
            Units::Nats => v,
            Units::Bits => v * LN_2,
        }
    }

    fn from_nats(self, v: f64) -> f64 {
        match self {
            Units::Nats => v,
            Units::Bits => v / LN_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub string_index: usize,
    pub total_logprob_nats: f64,
    pub per_token_logprobs_nats: Vec<f64>,
    pub full_logprobs_nats: Option<Vec<Vec<f64>>>,
}

impl From<ScoredString> for ScoreRecord {
    fn from(s: ScoredString) -> Self {
        ScoreRecord {
            string_index: s.string_index,
            total_logprob_nats: s.total_logprob_nats,
            per_token_logprobs_nats: s.per_token_logprobs_nats,
            full_logprobs_nats: None,
        }
    }
}

/// Validated scores; values are held in nats regardless of the file's units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFile {
    pub model_id: String,
    pub automaton_id: String,
    pub records: Vec<ScoreRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model_id: String,
    automaton_id: String,
    units: Option<Units>,
}

impl ScoreFile {
    pub fn write_jsonl<W: Write>(&self, mut w: W, units: Units) -> std::io::Result<()> {
        let header = Header {
            model_id: self.model_id.clone(),
            automaton_id: self.automaton_id.clone(),
            units: Some(units),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let sfx = units.suffix();
        for r in &self.records {
            let mut obj = Map::new();
            obj.insert("string_index".into(), r.string_index.into());
            obj.insert(
                format!("total_logprob_{sfx}"),
                units.from_nats(r.total_logprob_nats).into(),
            );
            obj.insert(
                format!("per_token_logprobs_{sfx}"),
                r.per_token_logprobs_nats.iter().map(|&v| units.from_nats(v)).collect::<Vec<_>>().into(),
            );
            if let Some(full) = &r.full_logprobs_nats {
                let conv: Vec<Vec<f64>> = full
                    .iter()
                    .map(|step| step.iter().map(|&v| units.from_nats(v)).collect())
                    .collect();
                obj.insert(format!("full_logprobs_{sfx}"), serde_json::to_value(conv)?);
            }
            serde_json::to_writer(&mut w, &Value::Object(obj))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self, units: Units) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf, units).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w, Units::Nats).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Parses and validates a score file. `source` names the input in errors.
    pub fn read_jsonl<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let schema = |line: usize, message: String| Error::ScoreSchema {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let (hline, htext) = lines
            .next()
            .ok_or_else(|| schema(1, "empty file: missing header".into()))?;
        let htext = htext.map_err(|e| Error::io(source, e))?;
        let header: Header =
            serde_json::from_str(&htext).map_err(|e| schema(hline, format!("bad header: {e}")))?;
        let units = header
            .units
            .ok_or_else(|| schema(hline, "header lacks the units field (\"nats\" or \"bits\")".into()))?;
        let sfx = units.suffix();

        let mut records = Vec::new();
        for (lineno, text) in lines {
            let text = text.map_err(|e| Error::io(source, e))?;
            let value: Value =
                serde_json::from_str(&text).map_err(|e| schema(lineno, format!("invalid JSON: {e}")))?;
            let obj = value
                .as_object()
                .ok_or_else(|| schema(lineno, "record is not an object".into()))?;
            let string_index = obj
                .get("string_index")
                .and_then(Value::as_u64)
                .ok_or_else(|| schema(lineno, "missing or invalid string_index".into()))?
                as usize;
            let total = obj
                .get(&format!("total_logprob_{sfx}"))
                .and_then(Value::as_f64)
                .ok_or_else(|| schema(lineno, format!("missing total_logprob_{sfx}")))?;
            let per_token: Vec<f64> = obj
                .get(&format!("per_token_logprobs_{sfx}"))
                .and_then(Value::as_array)
                .ok_or_else(|| schema(lineno, format!("missing per_token_logprobs_{sfx}")))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| schema(lineno, "non-numeric token log-probability".into())))
                .collect::<Result<_>>()?;
            let full = match obj.get(&format!("full_logprobs_{sfx}")) {
                None | Some(Value::Null) => None,
                Some(v) => Some(
                    serde_json::from_value::<Vec<Vec<f64>>>(v.clone())
                        .map_err(|e| schema(lineno, format!("bad full_logprobs_{sfx}: {e}")))?,
                ),
            };
            let other_sfx = if units == Units::Nats { "bits" } else { "nats" };
            if obj.contains_key(&format!("total_logprob_{other_sfx}")) {
                return Err(schema(lineno, format!("record uses _{other_sfx} keys but header declares {sfx}")));
            }

            let per_token: Vec<f64> = per_token.into_iter().map(|v| units.to_nats(v)).collect();
            let total = units.to_nats(total);
            if per_token.iter().any(|&v| !(v <= 0.0)) {
                return Err(schema(lineno, "token log-probabilities must be <= 0".into()));
            }
            let sum: f64 = per_token.iter().sum();
            if !((sum - total).abs() <= 1e-6 * (1.0 + total.abs())) {
                return Err(schema(lineno, format!("total {total} does not match token sum {sum}")));
            }
            let full = full.map(|steps| {
                steps
                    .into_iter()
                    .map(|s| s.into_iter().map(|v| units.to_nats(v)).collect::<Vec<f64>>())
                    .collect::<Vec<_>>()
            });
            if let Some(steps) = &full {
                if steps.len() != per_token.len() {
                    return Err(schema(lineno, "full_logprobs step count differs from per-token count".into()));
                }
                for (t, step) in steps.iter().enumerate() {
                    let lse = linalg::log_sum_exp(step);
                    if !(lse.abs() <= NORMALIZATION_TOL) {
                        return Err(schema(lineno, format!("step {t} is not normalized (log-sum {lse})")));
                    }
                }
            }
            records.push(ScoreRecord {
                string_index,
                total_logprob_nats: total,
                per_token_logprobs_nats: per_token,
                full_logprobs_nats: full,
            });
        }

        let mut seen = vec![false; records.len()];
        for r in &records {
            if r.string_index >= records.len() {
                return Err(schema(0, format!("string indices have gaps (index {} with {} records)", r.string_index, records.len())));
            }
            if seen[r.string_index] {
                return Err(schema(0, format!("duplicate string_index {}", r.string_index)));
            }
            seen[r.string_index] = true;
        }
        Ok(ScoreFile {
            model_id: header.model_id,
            automaton_id: header.automaton_id,
            records,
        })
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read_jsonl(text.as_bytes(), "<memory>")
    }
}

/// Reads and validates an external (or in-repo) score file.
pub fn ingest_external_scores(path: &Path) -> Result<ScoreFile> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ScoreFile::read_jsonl(std::io::BufReader::new(f), &path.display().to_string())
}

/// Scores of the automaton itself on the test split.
pub fn automaton_scores(a: &Dpfsa, automaton_id: &str, dataset: &Dataset) -> Result<ScoreFile> {
    let records = dataset
        .test
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut tokens = a.token_logprobs(&s.symbols)?;
            if s.truncated {
                tokens.pop();
            }
            Ok(ScoreRecord {
                string_index: i,
                total_logprob_nats: tokens.iter().sum(),
                per_token_logprobs_nats: tokens,
                full_logprobs_nats: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ScoreFile {
        model_id: format!("automaton:{automaton_id}"),
        automaton_id: automaton_id.to_string(),
        records,
    })
}

/// Scores of a trained RNN on the test split.
pub fn rnn_scores(lm: &RnnLm, model_id: &str, automaton_id: &str, dataset: &Dataset) -> Result<ScoreFile> {
    Ok(ScoreFile {
        model_id: model_id.to_string(),
        automaton_id: automaton_id.to_string(),
        records: lm.score(&dataset.test)?.into_iter().map(Into::into).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropy {
    pub mean_bits: f64,
    pub stderr_bits: f64,
    pub n_strings: usize,
    pub n_excluded_truncated: usize,
    /// Set when fewer than two strings were available.
    pub low_confidence: bool,
}

/// Per-string empirical cross-entropy over the untruncated test strings.
pub fn empirical_cross_entropy(scores: &ScoreFile, dataset: &Dataset) -> Result<CrossEntropy> {
    let test = &dataset.test;
    let mut by_index: HashMap<usize, &ScoreRecord> = HashMap::with_capacity(scores.records.len());
    for r in &scores.records {
        if r.string_index >= test.len() {
            return Err(Error::ScoreCoverage(format!(
                "string_index {} outside test split of {} strings",
                r.string_index,
                test.len()
            )));
        }
        if by_index.insert(r.string_index, r).is_some() {
            return Err(Error::ScoreCoverage(format!("duplicate string_index {}", r.string_index)));
        }
    }
    let mut values = Vec::with_capacity(test.len());
    let mut excluded = 0;
    for (i, s) in test.iter().enumerate() {
        let rec = by_index.get(&i);
        if s.truncated {
            excluded += 1;
            if let Some(r) = rec {
                check_tokens(i, s.len(), r)?;
            }
            continue;
        }
        let r = rec.ok_or_else(|| Error::ScoreCoverage(format!("missing score for test string {i}")))?;
        check_tokens(i, s.len() + 1, r)?;
        values.push(-r.total_logprob_nats / LN_2);
    }
    let n = values.len();
    if n == 0 {
        return Err(Error::ScoreCoverage("no untruncated test strings".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Ok(CrossEntropy {
        mean_bits: mean,
        stderr_bits: stderr,
        n_strings: n,
        n_excluded_truncated: excluded,
        low_confidence: n < 2,
    })
}

fn check_tokens(string_index: usize, expected: usize, r: &ScoreRecord) -> Result<()> {
    let found = r.per_token_logprobs_nats.len();
    if found != expected {
        return Err(Error::TokenCount {
            string_index,
            expected,
            found,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub kl_bits: f64,
    pub cross_entropy_bits: f64,
    pub entropy_bits: f64,
    pub stderr_bits: f64,
    pub n_strings: usize,
    pub n_excluded_truncated: usize,
    pub low_confidence: bool,
}

/// Combines two constituents so that `kl_bits + entropy_bits == cross_entropy_bits`
/// holds exactly in floating point.
pub fn combine(ce: CrossEntropy, entropy_bits: f64) -> KlEstimate {
    let kl = ce.mean_bits - entropy_bits;
    KlEstimate {
        kl_bits: kl,
        cross_entropy_bits: kl + entropy_bits,
        entropy_bits,
        stderr_bits: ce.stderr_bits,
        n_strings: ce.n_strings,
        n_excluded_truncated: ce.n_excluded_truncated,
        low_confidence: ce.low_confidence,
    }
}

pub fn kl_estimate(a: &Dpfsa, scores: &ScoreFile, dataset: &Dataset) -> Result<KlEstimate> {
    let ce = empirical_cross_entropy(scores, dataset)?;
    let h = analysis::entropy(a)?;
    Ok(combine(ce, h))
}
