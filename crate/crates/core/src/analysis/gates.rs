//! Per-channel gate range statistics: how far each (input channel, state
//! channel) pair can move its gate across timesteps and inputs. A small gap
//! means the channel cannot be both slow (gate near 1) and selective (gate
//! near 0) within the data it saw.

use crate::coeffs::SequenceInput;
use crate::params::AnyParams;
use crate::Result;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct GateGapHistogram {
    /// One gap per (input channel d, state channel n): max − min of |a_t|
    /// over all timesteps and all inputs.
    pub gaps: Vec<f64>,
    pub bin_edges: Vec<f64>,
    /// Proportion of channels with gap ≤ edge, per edge.
    pub cumulative: Vec<f64>,
    /// Proportion of channels with gap < 0.5 (headline statistic).
    pub fraction_below_half: f64,
}

/// Standard bin edges {0.0, 0.1, …, 1.0}.
pub fn default_bin_edges() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Stream per-channel gate extrema over a dataset of inputs and bin the
/// gaps into a cumulative histogram.
pub fn gate_gap_histogram(
    params: &AnyParams,
    inputs: &[SequenceInput],
    bin_edges: &[f64],
) -> Result<GateGapHistogram> {
    assert!(!inputs.is_empty(), "need at least one input");
    let mut mins: Vec<f64> = Vec::new();
    let mut maxs: Vec<f64> = Vec::new();
    for x in inputs {
        let coeffs = params.build(x)?;
        let n = coeffs[0].state_dim();
        let want = coeffs.len() * n;
        if mins.is_empty() {
            mins = vec![f64::INFINITY; want];
            maxs = vec![f64::NEG_INFINITY; want];
        }
        for (d, ch) in coeffs.iter().enumerate() {
            for t in 0..ch.t_len() {
                for j in 0..n {
                    let g = ch.a_at(t, j).abs();
                    let idx = d * n + j;
                    if g < mins[idx] {
                        mins[idx] = g;
                    }
                    if g > maxs[idx] {
                        maxs[idx] = g;
                    }
                }
            }
        }
    }
    let gaps: Vec<f64> = maxs.iter().zip(&mins).map(|(mx, mn)| mx - mn).collect();
    let total = gaps.len() as f64;
    let cumulative: Vec<f64> = bin_edges
        .iter()
        .map(|&e| gaps.iter().filter(|&&g| g <= e).count() as f64 / total)
        .collect();
    let fraction_below_half = gaps.iter().filter(|&&g| g < 0.5).count() as f64 / total;
    Ok(GateGapHistogram {
        gaps,
        bin_edges: bin_edges.to_vec(),
        cumulative,
        fraction_below_half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{PolarizationConfig, Variant};
    use crate::rng::Rng64;

    fn inputs(n: usize, t: usize, d: usize, seed: u64) -> Vec<SequenceInput> {
        let mut rng = Rng64::new(seed);
        (0..n).map(|_| SequenceInput::random(t, d, &mut rng)).collect()
    }

    #[test]
    fn time_invariant_gates_have_zero_gap() {
        let params = AnyParams::init(Variant::S4, 4, 2, PolarizationConfig::none(), 17).unwrap();
        let h = gate_gap_histogram(&params, &inputs(5, 12, 2, 3), &default_bin_edges()).unwrap();
        assert!(h.gaps.iter().all(|&g| g.abs() < 1e-15));
        assert_eq!(h.cumulative[0], 1.0, "all mass at gap 0");
    }

    #[test]
    fn identity_gates_have_zero_gap_at_one() {
        let params = AnyParams::init(Variant::La, 3, 2, PolarizationConfig::none(), 21).unwrap();
        let h = gate_gap_histogram(&params, &inputs(4, 10, 2, 5), &default_bin_edges()).unwrap();
        assert!(h.gaps.iter().all(|&g| g == 0.0));
    }

    /// Brute force over a materialized gate tensor must agree exactly.
    #[test]
    fn matches_materialized_oracle() {
        let params = AnyParams::init(Variant::Mamba, 4, 3, PolarizationConfig::none(), 9).unwrap();
        let xs = inputs(6, 8, 3, 11);
        let h = gate_gap_histogram(&params, &xs, &default_bin_edges()).unwrap();
        // Oracle: collect every gate into memory, then take max/min.
        let n = params.state_dim();
        let mut all: Vec<Vec<f64>> = vec![Vec::new(); 3 * n];
        for x in &xs {
            for (d, ch) in params.build(x).unwrap().iter().enumerate() {
                for t in 0..ch.t_len() {
                    for j in 0..n {
                        all[d * n + j].push(ch.a_at(t, j));
                    }
                }
            }
        }
        for (idx, gates) in all.iter().enumerate() {
            let mx = gates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mn = gates.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(h.gaps[idx], mx - mn, "channel {idx}");
        }
    }
}
