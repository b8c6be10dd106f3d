//! Cross-checks of the library against independent oracles: power series,
//! exhaustive enumeration, product-chain KL and sampling.

use std::collections::HashMap;

use rlmlab::analysis;
use rlmlab::automaton::{fixtures, Alphabet, Dpfsa, ParamMode, StringRecord};
use rlmlab::dataset::{dataset_stats, sample_strings, Dataset, DatasetStats};
use rlmlab::eval::{automaton_scores, kl_estimate, rnn_scores, ScoreFile};
use rlmlab::experiment::ExperimentConfig;
use rlmlab::generation::{filter_by_expected_length, generate_family, sample_logits, sample_topology};
use rlmlab::rng;
use rlmlab::rnn::{train, RnnLm, TrainConfig};

const LN2: f64 = std::f64::consts::LN_2;

/// Random automaton whose EOS logit is shifted up by `eos_boost`.
fn random_automaton(seed: u64, q: usize, s: usize, eos_boost: f64) -> Dpfsa {
    let mut r = rng::stream(seed, "oracle-automaton", 0);
    let topology = sample_topology(&mut r, q, s);
    let mut logits = sample_logits(&mut r, s, q, 1.0);
    logits.row_mut(s).add_scalar_mut(eos_boost);
    let rank = logits.rank(1e-10);
    Dpfsa::new(q, Alphabet::new(s).unwrap(), 0, topology, logits, rank, ParamMode::SoftmaxLogits).unwrap()
}

fn iid_dataset(a: &Dpfsa, seed: u64, n: usize) -> Dataset {
    Dataset {
        train: Vec::new(),
        test: sample_strings(a, seed, n, 256),
        source_automaton_id: "oracle".into(),
        seed,
        max_len: 256,
        stats: DatasetStats {
            mean_length: 0.0,
            num_truncated: 0,
            histogram: Vec::new(),
        },
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Entropy (bits) and expected length by propagating the state distribution
/// step by step until the surviving mass is negligible.
fn power_series(a: &Dpfsa) -> (f64, f64) {
    let q = a.num_states();
    let s = a.alphabet().size();
    let mut v = vec![0.0; q];
    v[a.initial_state()] = 1.0;
    let (mut h, mut len) = (0.0, 0.0);
    for _ in 0..100_000 {
        let mut next = vec![0.0; q];
        for (state, &mass) in v.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let dist = a.next_distribution(state).unwrap();
            h -= mass * dist.iter().filter(|&&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>();
            len += mass * (1.0 - dist[s]);
            for (sym, p) in dist.iter().take(s).enumerate() {
                next[a.step(state, sym).unwrap()] += mass * p;
            }
        }
        v = next;
        if v.iter().sum::<f64>() < 1e-16 {
            break;
        }
    }
    (h, len)
}

/// Walks every string up to `max_len` symbols and accumulates
/// `(mass, entropy bits, expected length)`.
fn enumerate(a: &Dpfsa, max_len: usize) -> (f64, f64, f64) {
    fn walk(a: &Dpfsa, prefix: &mut Vec<u32>, max_len: usize, acc: &mut (f64, f64, f64)) {
        let p = a.string_logprob(prefix).unwrap().exp();
        acc.0 += p;
        if p > 0.0 {
            acc.1 -= p * p.log2();
        }
        acc.2 += p * prefix.len() as f64;
        if prefix.len() == max_len {
            return;
        }
        for sym in 0..a.alphabet().size() as u32 {
            prefix.push(sym);
            walk(a, prefix, max_len, acc);
            prefix.pop();
        }
    }
    let mut acc = (0.0, 0.0, 0.0);
    walk(a, &mut Vec::new(), max_len, &mut acc);
    acc
}

/// Exact KL(p || q) in bits for automata over the same alphabet, summing the
/// per-step local KL over the product chain for `steps` steps. Returns the KL
/// and the mass of strings longer than `steps`.
fn product_chain_kl(p: &Dpfsa, q: &Dpfsa, steps: usize) -> (f64, f64) {
    let s = p.alphabet().size();
    let mut occ: HashMap<(usize, usize), f64> = HashMap::new();
    occ.insert((p.initial_state(), q.initial_state()), 1.0);
    let mut kl = 0.0;
    for _ in 0..=steps {
        let mut next = HashMap::new();
        for (&(sp, sq), &mass) in &occ {
            let dp = p.next_distribution(sp).unwrap();
            let dq = q.next_distribution(sq).unwrap();
            kl += mass * dp.iter().zip(&dq).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).log2()).sum::<f64>();
            for sym in 0..s {
                *next.entry((p.step(sp, sym).unwrap(), q.step(sq, sym).unwrap())).or_insert(0.0) += mass * dp[sym];
            }
        }
        occ = next;
    }
    (kl, occ.values().sum())
}

#[test]
fn closed_forms_match_power_series() {
    for seed in 0..30 {
        let q = 1 + (seed % 6) as usize;
        let s = 1 + (seed / 6 % 4) as usize;
        let a = random_automaton(seed, q, s, 0.5);
        let (h, len) = power_series(&a);
        let h_closed = analysis::entropy(&a).unwrap();
        let len_closed = analysis::expected_length(&a).unwrap();
        assert!((h - h_closed).abs() <= 1e-9 * h.max(1.0), "seed {seed}: {h} vs {h_closed}");
        assert!((len - len_closed).abs() <= 1e-9 * len.max(1.0), "seed {seed}: {len} vs {len_closed}");
    }
}

#[test]
fn closed_forms_match_exhaustive_enumeration() {
    for seed in 0..6 {
        let a = random_automaton(100 + seed, 3, 2, 6.0);
        let (mass, h, len) = enumerate(&a, 18);
        assert!(1.0 - mass < 1e-12, "tail mass {}", 1.0 - mass);
        assert!((h - analysis::entropy(&a).unwrap()).abs() < 1e-9);
        assert!((len - analysis::expected_length(&a).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn geometric_closed_form_matches_series() {
    for p in [0.1, 0.5, 0.9] {
        let g = fixtures::geometric(p);
        let h_series: f64 = (0..2000)
            .map(|n| {
                let prob = p.powi(n) * (1.0 - p);
                if prob > 0.0 { -prob * prob.log2() } else { 0.0 }
            })
            .sum();
        let h = analysis::entropy(&g).unwrap();
        assert!((h - h_series).abs() < 1e-10, "p = {p}: {h} vs {h_series}");
        assert!((analysis::expected_length(&g).unwrap() - p / (1.0 - p)).abs() < 1e-10);
    }
}

#[test]
fn kl_estimate_is_positive_when_models_differ() {
    let (mut checked, mut powered) = (0, 0);
    for seed in 0..12 {
        let p = random_automaton(200 + seed, 3, 2, 3.0);
        let q = random_automaton(300 + seed, 2, 2, 3.0);
        let (exact, tail) = product_chain_kl(&p, &q, 40);
        assert!(tail < 1e-6, "tail mass {tail}");
        if exact < 0.05 {
            continue;
        }
        checked += 1;
        let d = iid_dataset(&p, 400 + seed, 2000);
        let est = kl_estimate(&p, &automaton_scores(&q, "q", &d).unwrap(), &d).unwrap();
        if exact >= 6.0 * est.stderr_bits {
            powered += 1;
            assert!(est.kl_bits > 3.0 * est.stderr_bits, "seed {seed}: {} ± {}", est.kl_bits, est.stderr_bits);
        }
        assert!(
            (est.kl_bits - exact).abs() <= 4.0 * est.stderr_bits,
            "seed {seed}: estimate {} ± {} vs exact {exact}",
            est.kl_bits,
            est.stderr_bits
        );
    }
    assert!(checked >= 6, "only {checked} pairs with KL >= 0.05");
    assert!(powered >= 4, "only {powered} pairs with KL >= 6 stderr");
}

#[test]
fn doubling_the_sample_shrinks_stderr_by_sqrt2() {
    let p = random_automaton(500, 3, 2, 1.0);
    let q = random_automaton(501, 3, 2, 1.0);
    let stderr = |seed: u64, n: usize| {
        let d = iid_dataset(&p, seed, n);
        kl_estimate(&p, &automaton_scores(&q, "q", &d).unwrap(), &d).unwrap().stderr_bits
    };
    let reps = 20u64;
    let small: f64 = (0..reps).map(|i| stderr(600 + i, 2000)).sum::<f64>() / reps as f64;
    let large: f64 = (0..reps).map(|i| stderr(700 + i, 4000)).sum::<f64>() / reps as f64;
    let ratio = small / large;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.1, "ratio {ratio}");
}

fn desk_filtered() -> Vec<Dpfsa> {
    let cfg = ExperimentConfig::desk();
    let mut out = Vec::new();
    for &q in &cfg.generation.state_sizes {
        for &s in &cfg.generation.alphabet_sizes {
            let fam = generate_family(&cfg.generation, q, s, 0).unwrap();
            out.extend(filter_by_expected_length(fam, cfg.generation.length_filter_threshold).unwrap());
        }
    }
    out
}

#[test]
fn corpus_log_probability_matches_entropy() {
    for seed in 0..3 {
        let a = random_automaton(800 + seed, 3, 2, 0.0);
        let samples = sample_strings(&a, seed, 200_000, usize::MAX >> 1);
        let lp: Vec<f64> = samples.iter().map(|s| a.string_logprob(&s.symbols).unwrap()).collect();
        let (mean, se) = mean_se(&lp);
        let target = -analysis::entropy(&a).unwrap() * LN2;
        assert!((mean - target).abs() <= 4.0 * se, "{mean} vs {target} (se {se})");
    }
}

#[test]
fn filtered_automata_rarely_truncate() {
    for (i, a) in desk_filtered().iter().enumerate() {
        let samples = sample_strings(a, 900 + i as u64, 10_000, 256);
        let truncated = samples.iter().filter(|s| s.truncated).count();
        assert!(truncated < 200, "automaton {i}: {truncated} truncated of 10000");
    }
}

#[test]
fn corpus_mean_length_matches_expected_length() {
    for (i, a) in desk_filtered().iter().enumerate().step_by(3) {
        let mut d = iid_dataset(a, 1000 + i as u64, 20_000);
        d.max_len = usize::MAX >> 1;
        d.test = sample_strings(a, 1000 + i as u64, 20_000, d.max_len);
        let stats = dataset_stats(&d);
        let lengths: Vec<f64> = d.test.iter().map(|s| s.len() as f64).collect();
        let (mean, se) = mean_se(&lengths);
        assert!((stats.mean_length - mean).abs() < 1e-9);
        let target = analysis::expected_length(a).unwrap();
        assert!((mean - target).abs() <= 4.0 * se, "automaton {i}: {mean} vs {target} (se {se})");
    }
}

fn geometric_model() -> (RnnLm, Vec<StringRecord>, Vec<StringRecord>) {
    let g = fixtures::geometric(0.5);
    let corpus = sample_strings(&g, 31, 18_000, 256);
    let test = sample_strings(&g, 32, 2_000, 256);
    let cfg = TrainConfig {
        seed: 33,
        ..TrainConfig::default()
    };
    let (lm, _) = train(&corpus, 1, 4, &cfg).unwrap();
    (lm, corpus, test)
}

fn string_bits(lm: &RnnLm, strings: &[StringRecord]) -> Vec<f64> {
    lm.score(strings).unwrap().iter().map(|s| -s.total_logprob_nats / LN2).collect()
}

#[test]
fn rnn_learns_the_geometric_distribution() {
    let (lm, corpus, test) = geometric_model();
    let test_bits = string_bits(&lm, &test);
    let (test_mean, test_se) = mean_se(&test_bits);
    assert!((test_mean - 2.0).abs() < 0.1, "test NLL {test_mean} bits");
    let (train_mean, train_se) = mean_se(&string_bits(&lm, &corpus));
    let se = (test_se.powi(2) + train_se.powi(2)).sqrt();
    assert!((train_mean - test_mean).abs() <= 3.0 * se, "train {train_mean} vs test {test_mean} (se {se})");
}

#[test]
fn initial_loss_is_near_uniform() {
    for s in 1..=4usize {
        let a = random_automaton(1100 + s as u64, 3, s, 0.0);
        let corpus = sample_strings(&a, 1200, 2_000, 256);
        let batch: Vec<&[u32]> = corpus.iter().map(|r| r.symbols.as_slice()).collect();
        let lm = RnnLm::init(s, 8, &mut rng::stream(1300, "init", s as u64));
        let loss = lm.nll(&batch).unwrap();
        let uniform = ((s + 1) as f64).ln();
        assert!((loss / uniform - 1.0).abs() < 0.1, "|Σ| = {s}: {loss} vs {uniform}");
    }
}

#[test]
fn scored_steps_are_normalized() {
    let (lm, _, test) = geometric_model();
    let a = random_automaton(1400, 4, 3, 0.0);
    let other = RnnLm::init(3, 6, &mut rng::stream(1401, "init", 0));
    let strings = sample_strings(&a, 1402, 500, 256);
    for (model, data) in [(&lm, &test), (&other, &strings)] {
        for s in data {
            for step in model.forward(&s.symbols).unwrap() {
                let total: f64 = step.iter().map(|lp| lp.exp()).sum();
                assert!((total - 1.0).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn rnn_score_file_matches_direct_scoring() {
    let (lm, corpus, test) = geometric_model();
    let d = Dataset {
        train: corpus,
        test,
        ..iid_dataset(&fixtures::geometric(0.5), 0, 0)
    };
    let file: ScoreFile = rnn_scores(&lm, "rnn-D4", "geometric", &d).unwrap();
    let direct = lm.score(&d.test).unwrap();
    for (rec, s) in file.records.iter().zip(&direct) {
        assert_eq!(rec.total_logprob_nats, s.total_logprob_nats);
    }
}
