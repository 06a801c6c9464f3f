//! Multi-query associative recall data: generation, binary storage, and a
//! JSON-lines debug dump.
//!
//! Layout of one sample (pad token is 0, keys live in 1..vocab/2, values in
//! vocab/2..vocab, so the two alphabets are disjoint and values never appear
//! after the prefix):
//!
//!   K1 V1 K2 V2 ... Kp Vp  [queries scattered in the suffix, pad elsewhere]
//!
//! Each bound key is queried exactly once; query positions are a uniform
//! random subset of the suffix and the key order is uniformly shuffled, so
//! recall distance stretches up to the full sequence length. The target at a
//! query position is the value bound to that key and every other target is
//! the ignore sentinel -1. Loss and accuracy are evaluated at query positions
//! only.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const IGNORE_TARGET: i32 = -1;
pub const PAD_TOKEN: u16 = 0;
const MAGIC: &[u8; 4] = b"MQAR";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MqarError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad dataset file: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MqarConfig {
    pub seq_len: usize,
    pub vocab_size: usize,
    pub num_kv_pairs: usize,
    pub num_examples: usize,
    pub seed: u64,
}

impl MqarConfig {
    /// Desk-scale defaults: seq 64, 8 pairs, vocab 128.
    pub fn desk(num_examples: usize, seed: u64) -> Self {
        MqarConfig { seq_len: 64, vocab_size: 128, num_kv_pairs: 8, num_examples, seed }
    }

    fn validate(&self) -> Result<(), MqarError> {
        if self.vocab_size < 4 {
            return Err(MqarError::Infeasible(format!(
                "vocab_size {} too small, need at least 4",
                self.vocab_size
            )));
        }
        if self.vocab_size > u16::MAX as usize + 1 {
            return Err(MqarError::Infeasible(format!(
                "vocab_size {} exceeds token width",
                self.vocab_size
            )));
        }
        let keys_available = self.vocab_size / 2 - 1; // token 0 is pad
        if self.num_kv_pairs == 0 {
            return Err(MqarError::Infeasible("num_kv_pairs must be >= 1".into()));
        }
        if self.num_kv_pairs > keys_available {
            return Err(MqarError::Infeasible(format!(
                "{} kv pairs need {} distinct keys but the key alphabet has {}",
                self.num_kv_pairs, self.num_kv_pairs, keys_available
            )));
        }
        if self.seq_len < 3 * self.num_kv_pairs {
            return Err(MqarError::Infeasible(format!(
                "seq_len {} < 3 * num_kv_pairs = {} (prefix pairs plus one query per key)",
                self.seq_len,
                3 * self.num_kv_pairs
            )));
        }
        Ok(())
    }
}

/// Flat dataset: row-major tokens and targets, one row per example.
#[derive(Clone, Debug, PartialEq)]
pub struct MqarDataset {
    pub seq_len: usize,
    pub vocab_size: usize,
    pub num_examples: usize,
    pub tokens: Vec<u16>,
    pub targets: Vec<i32>,
}

impl MqarDataset {
    pub fn tokens_of(&self, idx: usize) -> &[u16] {
        &self.tokens[idx * self.seq_len..(idx + 1) * self.seq_len]
    }

    pub fn targets_of(&self, idx: usize) -> &[i32] {
        &self.targets[idx * self.seq_len..(idx + 1) * self.seq_len]
    }

    /// Take examples [start, start+count) as a view-copy.
    pub fn slice(&self, start: usize, count: usize) -> MqarDataset {
        assert!(start + count <= self.num_examples);
        MqarDataset {
            seq_len: self.seq_len,
            vocab_size: self.vocab_size,
            num_examples: count,
            tokens: self.tokens[start * self.seq_len..(start + count) * self.seq_len].to_vec(),
            targets: self.targets[start * self.seq_len..(start + count) * self.seq_len].to_vec(),
        }
    }
}

/// Generate a dataset; deterministic in the seed, per-sample streams derived
/// by counter so parallel regeneration of any sub-range agrees.
pub fn generate(config: &MqarConfig) -> Result<MqarDataset, MqarError> {
    config.validate()?;
    let seq = config.seq_len;
    let pairs = config.num_kv_pairs;
    let key_alphabet: Vec<u16> = (1..(config.vocab_size / 2) as u16).collect();
    let value_lo = (config.vocab_size / 2) as u16;
    let value_hi = config.vocab_size as u16; // exclusive

    let mut tokens = vec![PAD_TOKEN; config.num_examples * seq];
    let mut targets = vec![IGNORE_TARGET; config.num_examples * seq];

    for idx in 0..config.num_examples {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(1 + idx as u64);
        let row_tokens = &mut tokens[idx * seq..(idx + 1) * seq];
        let row_targets = &mut targets[idx * seq..(idx + 1) * seq];

        // distinct keys via partial shuffle, iid uniform values
        let mut keys = key_alphabet.clone();
        let (chosen, _) = keys.partial_shuffle(&mut rng, pairs);
        let chosen: Vec<u16> = chosen.to_vec();
        let values: Vec<u16> =
            (0..pairs).map(|_| rng.random_range(value_lo..value_hi)).collect();

        for (j, (&k, &v)) in chosen.iter().zip(&values).enumerate() {
            row_tokens[2 * j] = k;
            row_tokens[2 * j + 1] = v;
        }
        // scatter one query per pair uniformly over the suffix, shuffled order
        let suffix = 2 * pairs..seq;
        let mut slots: Vec<usize> = suffix.collect();
        let (spots, _) = slots.partial_shuffle(&mut rng, pairs);
        let mut spots: Vec<usize> = spots.to_vec();
        spots.sort_unstable();
        let mut order: Vec<usize> = (0..pairs).collect();
        order.shuffle(&mut rng);
        for (&pos, &j) in spots.iter().zip(&order) {
            row_tokens[pos] = chosen[j];
            row_targets[pos] = values[j] as i32;
        }
        // remaining positions stay pad / ignore
    }

    Ok(MqarDataset {
        seq_len: seq,
        vocab_size: config.vocab_size,
        num_examples: config.num_examples,
        tokens,
        targets,
    })
}

/// Binary layout: magic "MQAR", then version/seq_len/vocab/num_examples as
/// little-endian u32, then all token rows as u16, then all target rows as i32.
pub fn write_binary(dataset: &MqarDataset, path: &Path) -> Result<(), MqarError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [VERSION, dataset.seq_len as u32, dataset.vocab_size as u32, dataset.num_examples as u32]
    {
        w.write_all(&v.to_le_bytes())?;
    }
    for &t in &dataset.tokens {
        w.write_all(&t.to_le_bytes())?;
    }
    for &t in &dataset.targets {
        w.write_all(&t.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<MqarDataset, MqarError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(MqarError::Format(format!("bad magic {magic:?}")));
    }
    let mut buf4 = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32, MqarError> {
        r.read_exact(&mut buf4)?;
        Ok(u32::from_le_bytes(buf4))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(MqarError::Format(format!("unsupported version {version}")));
    }
    let seq_len = read_u32(&mut r)? as usize;
    let vocab_size = read_u32(&mut r)? as usize;
    let num_examples = read_u32(&mut r)? as usize;
    let count = seq_len * num_examples;
    let mut tokens = vec![0u16; count];
    let mut buf2 = [0u8; 2];
    for t in tokens.iter_mut() {
        r.read_exact(&mut buf2)?;
        *t = u16::from_le_bytes(buf2);
    }
    let mut targets = vec![0i32; count];
    let mut buf4 = [0u8; 4];
    for t in targets.iter_mut() {
        r.read_exact(&mut buf4)?;
        *t = i32::from_le_bytes(buf4);
    }
    Ok(MqarDataset { seq_len, vocab_size, num_examples, tokens, targets })
}

#[derive(Serialize)]
struct JsonlRow<'a> {
    tokens: &'a [u16],
    targets: &'a [i32],
}

/// Human-inspectable dump, one JSON object per example.
pub fn write_jsonl(dataset: &MqarDataset, path: &Path) -> Result<(), MqarError> {
    let mut w = BufWriter::new(File::create(path)?);
    for idx in 0..dataset.num_examples {
        let row = JsonlRow { tokens: dataset.tokens_of(idx), targets: dataset.targets_of(idx) };
        serde_json::to_writer(&mut w, &row).map_err(|e| MqarError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl_lengths(path: &Path) -> Result<usize, MqarError> {
    let r = BufReader::new(File::open(path)?);
    Ok(r.lines().count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_layout() {
        let cfg = MqarConfig { seq_len: 4, vocab_size: 8, num_kv_pairs: 1, num_examples: 40, seed: 3 };
        let data = generate(&cfg).unwrap();
        let mut seen_early = false;
        let mut seen_late = false;
        for idx in 0..data.num_examples {
            let toks = data.tokens_of(idx);
            let tgts = data.targets_of(idx);
            // K V then the query at one of the two suffix slots, pad at the other
            assert!(toks[0] >= 1 && toks[0] < 4);
            assert!(toks[1] >= 4 && toks[1] < 8);
            let query_pos = if toks[2] == toks[0] { 2 } else { 3 };
            let pad_pos = 5 - query_pos;
            assert_eq!(toks[query_pos], toks[0]);
            assert_eq!(toks[pad_pos], PAD_TOKEN);
            assert_eq!(tgts[query_pos], toks[1] as i32);
            assert_eq!(tgts[pad_pos], IGNORE_TARGET);
            assert_eq!(tgts[0], IGNORE_TARGET);
            seen_early |= query_pos == 2;
            seen_late |= query_pos == 3;
        }
        // placement really is spread over the suffix
        assert!(seen_early && seen_late);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = MqarConfig { seq_len: 32, vocab_size: 64, num_kv_pairs: 4, num_examples: 50, seed: 9 };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = MqarConfig { seed: 10, ..cfg };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn infeasible_configs_rejected() {
        let too_many = MqarConfig { seq_len: 64, vocab_size: 8, num_kv_pairs: 4, num_examples: 1, seed: 0 };
        assert!(matches!(generate(&too_many), Err(MqarError::Infeasible(_))));
        let too_short = MqarConfig { seq_len: 8, vocab_size: 64, num_kv_pairs: 4, num_examples: 1, seed: 0 };
        assert!(matches!(generate(&too_short), Err(MqarError::Infeasible(_))));
    }

    #[test]
    fn queries_are_bound_and_values_never_leak_into_suffix() {
        let cfg = MqarConfig { seq_len: 32, vocab_size: 64, num_kv_pairs: 4, num_examples: 200, seed: 7 };
        let data = generate(&cfg).unwrap();
        let value_lo = 32u16;
        for idx in 0..data.num_examples {
            let toks = data.tokens_of(idx);
            let tgts = data.targets_of(idx);
            let prefix = 2 * cfg.num_kv_pairs;
            // suffix holds only keys and pads — never value tokens
            for &t in &toks[prefix..] {
                assert!(t < value_lo, "value token leaked into suffix");
            }
            let mut queried = 0;
            for (pos, &tg) in tgts.iter().enumerate() {
                if tg == IGNORE_TARGET {
                    continue;
                }
                queried += 1;
                assert!(pos >= prefix);
                let key = toks[pos];
                // the queried key is bound to exactly this value in the prefix
                let mut bound = None;
                for j in 0..cfg.num_kv_pairs {
                    if toks[2 * j] == key {
                        assert!(bound.is_none(), "key bound twice");
                        bound = Some(toks[2 * j + 1]);
                    }
                }
                assert_eq!(bound.unwrap() as i32, tg);
            }
            assert_eq!(queried, cfg.num_kv_pairs);
        }
    }

    #[test]
    fn value_distribution_uniform_and_chance_level() {
        let cfg = MqarConfig { seq_len: 32, vocab_size: 64, num_kv_pairs: 4, num_examples: 1000, seed: 12 };
        let data = generate(&cfg).unwrap();
        let num_values = 32usize;
        let mut counts = vec![0usize; num_values];
        let mut total = 0usize;
        for &t in &data.targets {
            if t != IGNORE_TARGET {
                counts[t as usize - 32] += 1;
                total += 1;
            }
        }
        assert_eq!(total, 4000);
        let p = 1.0 / num_values as f64;
        let sigma = (total as f64 * p * (1.0 - p)).sqrt();
        let expected = total as f64 * p;
        for (v, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() <= 4.0 * sigma,
                "value {v} count {c} deviates from uniform (expect {expected:.1} +- {sigma:.1})"
            );
        }
        // majority-class baseline accuracy is about 1/num_values
        let majority = *counts.iter().max().unwrap() as f64 / total as f64;
        assert!(majority > p - 4.0 * sigma / total as f64);
        assert!(majority < p + 5.0 * sigma / total as f64);
    }

    #[test]
    fn binary_round_trip() {
        let cfg = MqarConfig { seq_len: 16, vocab_size: 32, num_kv_pairs: 3, num_examples: 20, seed: 5 };
        let data = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_binary(&data, &path).unwrap();
        let back = read_binary(&path).unwrap();
        assert_eq!(data, back);

        let jl = dir.path().join("d.jsonl");
        write_jsonl(&data, &jl).unwrap();
        assert_eq!(read_jsonl_lengths(&jl).unwrap(), 20);
    }
}
