//! Region-corruption probe: replace the leading or trailing tokens of the
//! key-value section with random vocabulary tokens and measure the accuracy
//! drop. A recency-biased model leans on recently written bindings, so
//! trailing corruption is expected to hurt more than leading corruption.

use crate::error::Error;
use crate::rng::Rng64;
use crate::tasks::data::{kv_section_len, ARExample};
use crate::tasks::eval::example_hits;
use crate::tasks::model::TinyModel;
use crate::Result;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Leading,
    Trailing,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationReport {
    pub region: Region,
    pub k: usize,
    pub clean_accuracy: f64,
    pub corrupted_accuracy: f64,
    pub drop: f64,
}

/// Corrupt `k` tokens of each example's kv section (leading or trailing),
/// leaving the query/answer structure untouched, and compare masked accuracy
/// against the clean run. Deterministic given the seed.
pub fn perturbation_probe(
    model: &TinyModel,
    examples: &[ARExample],
    region: Region,
    k: usize,
    seed: u64,
) -> Result<PerturbationReport> {
    let vocab = model.config.vocab;
    // The usable region is the shortest kv section in the set.
    let usable = examples
        .iter()
        .map(|ex| kv_section_len(vocab, ex))
        .min()
        .unwrap_or(0);
    if k >= usable && k != 0 {
        return Err(Error::InvalidParameter(format!(
            "corruption length {k} must be below the kv section length {usable}"
        )));
    }

    let corrupted: Vec<ARExample> = examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut out = ex.clone();
            if k > 0 {
                let mut rng = Rng64::new(seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
                let kv_len = kv_section_len(vocab, ex);
                let range = match region {
                    Region::Leading => 0..k,
                    Region::Trailing => kv_len - k..kv_len,
                };
                for pos in range {
                    out.input[pos] = (1 + rng.below(vocab - 1)) as u32;
                }
            }
            out
        })
        .collect();

    let count_hits = |set: &[ARExample]| -> Result<(usize, usize)> {
        let hits: Result<Vec<(usize, usize)>> =
            set.par_iter().map(|ex| example_hits(model, ex)).collect();
        let mut c = 0;
        let mut m = 0;
        for (ci, mi) in hits? {
            c += ci;
            m += mi;
        }
        Ok((c, m))
    };
    let (cc, cm) = count_hits(examples)?;
    let (xc, xm) = count_hits(&corrupted)?;
    let clean = cc as f64 / cm.max(1) as f64;
    let corrupt = xc as f64 / xm.max(1) as f64;
    Ok(PerturbationReport {
        region,
        k,
        clean_accuracy: clean,
        corrupted_accuracy: corrupt,
        drop: clean - corrupt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{PolarizationConfig, Variant};
    use crate::tasks::data::{generate_ar_dataset, ARConfig};
    use crate::tasks::model::{ModelConfig, TinyModel};

    fn setup() -> (TinyModel, Vec<ARExample>) {
        let model = TinyModel::init(ModelConfig {
            vocab: 32,
            dim: 8,
            state_dim: 4,
            layers: 1,
            variant: Variant::Mamba,
            polarization: PolarizationConfig::none(),
            conv: true,
            seed: 2,
        })
        .unwrap();
        let cfg = ARConfig {
            vocab_size: 32,
            train_lengths: vec![24],
            kv_fractions: vec![0.5],
            examples_per_cell: 1,
            power_law_exponent: 1.0,
            eval_len: 24,
            eval_kv_counts: vec![6],
            eval_examples_per_cell: 40,
            seed: 5,
        };
        let ds = generate_ar_dataset(&cfg).unwrap();
        (model, ds.eval[0].1.clone())
    }

    #[test]
    fn zero_corruption_means_zero_drop() {
        let (model, examples) = setup();
        let rep = perturbation_probe(&model, &examples, Region::Trailing, 0, 7).unwrap();
        assert_eq!(rep.drop, 0.0);
        assert_eq!(rep.clean_accuracy, rep.corrupted_accuracy);
    }

    #[test]
    fn same_seed_same_corruption() {
        let (model, examples) = setup();
        let a = perturbation_probe(&model, &examples, Region::Leading, 4, 99).unwrap();
        let b = perturbation_probe(&model, &examples, Region::Leading, 4, 99).unwrap();
        assert_eq!(a.corrupted_accuracy, b.corrupted_accuracy);
    }

    #[test]
    fn oversized_k_is_rejected() {
        let (model, examples) = setup();
        assert!(perturbation_probe(&model, &examples, Region::Trailing, 12, 1).is_err());
    }
}
