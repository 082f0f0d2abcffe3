//! Token-sharpness metric: normalized mean pairwise squared distance,
//! ε(x) = (1/(2(T−1))) · (Σ_{i≠j} ‖x_i − x_j‖²) / (Σ_i ‖x_i‖²).
//! Smaller means the tokens are closer to uniform.

use crate::error::Error;
use crate::Result;

/// ε over T tokens of dimension D (flat row-major). Errors when every token
/// is zero (the normalizer vanishes).
pub fn smoothness(tokens: &[f64], t_len: usize, dim: usize) -> Result<f64> {
    assert_eq!(tokens.len(), t_len * dim);
    if t_len < 2 {
        return Err(Error::Undefined(
            "smoothness needs at least two tokens".into(),
        ));
    }
    let mut norm_sq = 0.0;
    let mut sum = vec![0.0; dim];
    for t in 0..t_len {
        for d in 0..dim {
            let v = tokens[t * dim + d];
            norm_sq += v * v;
            sum[d] += v;
        }
    }
    if norm_sq == 0.0 {
        return Err(Error::Undefined(
            "smoothness undefined for all-zero tokens".into(),
        ));
    }
    // Σ_{i≠j} ‖x_i − x_j‖² = 2T Σ_i ‖x_i‖² − 2‖Σ_i x_i‖² over ordered pairs.
    let sum_sq: f64 = sum.iter().map(|v| v * v).sum();
    let pairwise = 2.0 * t_len as f64 * norm_sq - 2.0 * sum_sq;
    Ok(pairwise / (2.0 * (t_len as f64 - 1.0) * norm_sq))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_tokens_have_zero_sharpness() {
        let tokens = vec![0.7; 5 * 3];
        assert!(smoothness(&tokens, 5, 3).unwrap().abs() < 1e-15);
    }

    #[test]
    fn two_opposite_scalars_give_two() {
        // T=2, D=1, tokens (1, −1): (1/2)·(8/2) = 2.
        assert!((smoothness(&[1.0, -1.0], 2, 1).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn permutation_invariant() {
        let tokens = vec![0.2, -0.5, 1.3, 0.0, -0.9, 0.4];
        let a = smoothness(&tokens, 3, 2).unwrap();
        let permuted = vec![-0.9, 0.4, 0.2, -0.5, 1.3, 0.0];
        let b = smoothness(&permuted, 3, 2).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn all_zero_is_undefined() {
        assert!(smoothness(&[0.0; 6], 3, 2).is_err());
    }

    /// Brute-force double sum agrees with the closed form.
    #[test]
    fn matches_double_sum_oracle() {
        let mut rng = crate::rng::Rng64::new(64);
        for _ in 0..20 {
            let t_len = 2 + rng.below(10);
            let dim = 1 + rng.below(5);
            let mut tokens = vec![0.0; t_len * dim];
            rng.fill_uniform(&mut tokens, 1.0);
            let fast = smoothness(&tokens, t_len, dim).unwrap();
            let mut pairwise = 0.0;
            let mut norm = 0.0;
            for i in 0..t_len {
                for d in 0..dim {
                    let v = tokens[i * dim + d];
                    norm += v * v;
                }
                for j in 0..t_len {
                    if i == j {
                        continue;
                    }
                    for d in 0..dim {
                        let diff = tokens[i * dim + d] - tokens[j * dim + d];
                        pairwise += diff * diff;
                    }
                }
            }
            let brute = pairwise / (2.0 * (t_len as f64 - 1.0) * norm);
            assert!((fast - brute).abs() < 1e-12);
        }
    }
}
