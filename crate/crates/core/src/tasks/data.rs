//! Key-value recall sequences: a leading section of independently sampled
//! key/value pairs, followed by queried keys placed by a power-law draw over
//! the query region, zero-padded elsewhere. Supervision covers exactly the
//! query positions; the target there is the value bound to the queried key.

use crate::error::Error;
use crate::rng::Rng64;
use crate::Result;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ARConfig {
    /// Even; keys draw from the upper half [vocab/2, vocab), values from
    /// the lower half [1, vocab/2); token 0 is the pad. Keys get the full
    /// half so vocab 64 supports 32 distinct pairs.
    pub vocab_size: usize,
    pub train_lengths: Vec<usize>,
    pub kv_fractions: Vec<f64>,
    pub examples_per_cell: usize,
    /// Zipf exponent for query placement within the query region, measured
    /// from the region start: positive values concentrate queries right
    /// after the kv section (short lags), negative values push them toward
    /// the sequence end (long lags).
    pub power_law_exponent: f64,
    pub eval_len: usize,
    pub eval_kv_counts: Vec<usize>,
    pub eval_examples_per_cell: usize,
    pub seed: u64,
}

impl ARConfig {
    /// Desk-scale defaults: runnable on a laptop CPU in minutes.
    pub fn desk_default() -> Self {
        ARConfig {
            vocab_size: 64,
            train_lengths: vec![64, 128],
            kv_fractions: vec![0.125, 0.25, 0.5],
            examples_per_cell: 3334,
            power_law_exponent: 1.0,
            eval_len: 128,
            eval_kv_counts: vec![8, 16, 32],
            eval_examples_per_cell: 640,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 4 || self.vocab_size % 2 != 0 {
            return Err(Error::Config(format!(
                "vocab_size must be even and at least 4, got {}",
                self.vocab_size
            )));
        }
        if !self.power_law_exponent.is_finite() {
            return Err(Error::Config("power_law_exponent must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ARExample {
    pub input: Vec<u32>,
    pub target: Vec<u32>,
    pub mask: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct ARDataset {
    pub config: ARConfig,
    pub train: Vec<ARExample>,
    /// Eval splits keyed by key-value pair count.
    pub eval: Vec<(usize, Vec<ARExample>)>,
}

/// Inverse-CDF sampler over offsets 0..n with weight (j+1)^{-alpha}.
struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    fn new(n: usize, alpha: f64) -> Self {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for j in 0..n {
            acc += ((j + 1) as f64).powf(-alpha);
            cdf.push(acc);
        }
        let total = *cdf.last().unwrap();
        for v in cdf.iter_mut() {
            *v /= total;
        }
        ZipfSampler { cdf }
    }

    fn sample(&self, rng: &mut Rng64) -> usize {
        let u = rng.next_f64();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

/// One sequence with `pairs` bindings in a length-`len` window.
pub fn generate_example(
    vocab: usize,
    len: usize,
    pairs: usize,
    alpha: f64,
    rng: &mut Rng64,
) -> Result<ARExample> {
    let half = vocab / 2;
    let key_count = half; // ids half..vocab
    let value_count = half - 1; // ids 1..half, 0 is the pad
    if pairs == 0 || 2 * pairs > len {
        return Err(Error::Config(format!(
            "kv section needs 2·{pairs} tokens but the sequence has {len}"
        )));
    }
    if pairs > key_count {
        return Err(Error::Config(format!(
            "vocab {vocab} supports at most {key_count} distinct keys, requested {pairs}"
        )));
    }
    let region = len - 2 * pairs;
    if region == 0 {
        return Err(Error::Config(
            "no room left for queries after the kv section".into(),
        ));
    }

    // Distinct keys; values drawn independently (repeats allowed).
    let keys: Vec<u32> = rng
        .sample_distinct(key_count, pairs)
        .into_iter()
        .map(|i| (half + i) as u32)
        .collect();
    let values: Vec<u32> = (0..pairs)
        .map(|_| (1 + rng.below(value_count)) as u32)
        .collect();

    let mut input = vec![0u32; len];
    let mut target = vec![0u32; len];
    let mut mask = vec![false; len];
    for p in 0..pairs {
        input[2 * p] = keys[p];
        input[2 * p + 1] = values[p];
    }

    // Queried keys are distinct; positions are distinct power-law draws
    // over the query region.
    let n_queries = pairs.min((region / 2).max(1));
    let query_keys = rng.sample_distinct(pairs, n_queries);
    let zipf = ZipfSampler::new(region, alpha);
    let mut positions = Vec::with_capacity(n_queries);
    let mut guard = 0usize;
    while positions.len() < n_queries {
        let off = zipf.sample(rng);
        if !positions.contains(&off) {
            positions.push(off);
        }
        guard += 1;
        if guard > 100 * region.max(16) {
            // Dense regions with a steep law can dawdle; fall back to the
            // first free slots.
            for off in 0..region {
                if positions.len() == n_queries {
                    break;
                }
                if !positions.contains(&off) {
                    positions.push(off);
                }
            }
        }
    }
    for (qi, &off) in positions.iter().enumerate() {
        let p = query_keys[qi];
        let pos = 2 * pairs + off;
        input[pos] = keys[p];
        target[pos] = values[p];
        mask[pos] = true;
    }
    Ok(ARExample { input, target, mask })
}

/// Independent re-parse of an example: scan the leading key/value pattern to
/// rebuild the binding map, then check every masked target against it.
pub fn verify_example(vocab: usize, ex: &ARExample) -> bool {
    let half = (vocab / 2) as u32;
    let is_key = |t: u32| t >= half && (t as usize) < vocab;
    let is_val = |t: u32| t >= 1 && t < half;
    let mut bindings = std::collections::HashMap::new();
    let mut pos = 0;
    while pos + 1 < ex.input.len() && is_key(ex.input[pos]) && is_val(ex.input[pos + 1]) {
        bindings.insert(ex.input[pos], ex.input[pos + 1]);
        pos += 2;
    }
    let kv_end = pos;
    let mut any = false;
    for (i, &m) in ex.mask.iter().enumerate() {
        if !m {
            continue;
        }
        any = true;
        if i < kv_end {
            return false;
        }
        match bindings.get(&ex.input[i]) {
            Some(&v) if v == ex.target[i] => {}
            _ => return false,
        }
    }
    any
}

/// Number of leading key/value tokens (2 × pairs) of an example.
pub fn kv_section_len(vocab: usize, ex: &ARExample) -> usize {
    let half = (vocab / 2) as u32;
    let is_key = |t: u32| t >= half && (t as usize) < vocab;
    let is_val = |t: u32| t >= 1 && t < half;
    let mut pos = 0;
    while pos + 1 < ex.input.len() && is_key(ex.input[pos]) && is_val(ex.input[pos + 1]) {
        pos += 2;
    }
    pos
}

pub fn generate_ar_dataset(cfg: &ARConfig) -> Result<ARDataset> {
    cfg.validate()?;
    let mut rng = Rng64::new(cfg.seed);
    let mut train = Vec::new();
    for &len in &cfg.train_lengths {
        for &frac in &cfg.kv_fractions {
            let pairs = ((frac * len as f64) as usize / 2).max(1);
            let mut cell_rng = rng.fork((len * 131 + (frac * 1000.0) as usize) as u64);
            for _ in 0..cfg.examples_per_cell {
                train.push(generate_example(
                    cfg.vocab_size,
                    len,
                    pairs,
                    cfg.power_law_exponent,
                    &mut cell_rng,
                )?);
            }
        }
    }
    let mut eval = Vec::new();
    for &pairs in &cfg.eval_kv_counts {
        let mut cell_rng = rng.fork(0xe7a1 + pairs as u64);
        let mut split = Vec::with_capacity(cfg.eval_examples_per_cell);
        for _ in 0..cfg.eval_examples_per_cell {
            split.push(generate_example(
                cfg.vocab_size,
                cfg.eval_len,
                pairs,
                cfg.power_law_exponent,
                &mut cell_rng,
            )?);
        }
        eval.push((pairs, split));
    }
    Ok(ARDataset {
        config: cfg.clone(),
        train,
        eval,
    })
}
