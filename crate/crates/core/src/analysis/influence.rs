//! Influence scores |∂y_t/∂x_s| and the log-linear decay fit of their
//! per-lag upper envelope.

use crate::coeffs::SequenceInput;
use crate::error::Error;
use crate::grad::{backward, forward_with_tape};
use crate::params::AnyParams;
use crate::Result;
use rayon::prelude::*;
use serde::Serialize;

/// How to collapse the input-channel axis of ∂y_t/∂x_s into one score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelAggregation {
    /// Worst case: max |∂y_t/∂x_{s,d}| over d (default).
    MaxAbs,
    /// Euclidean norm over input channels.
    L2,
}

/// Lower-triangular matrix of sensitivity scores; entry (t, s) defined for
/// s ≤ t only.
#[derive(Clone, Debug)]
pub struct InfluenceMatrix {
    pub t_len: usize,
    /// T×T row-major; entries above the diagonal are zero.
    pub scores: Vec<f64>,
    pub variant: String,
    /// max_{t,n} |a_t[n]| of the coefficients the model built on this input.
    pub a_max: f64,
}

impl InfluenceMatrix {
    pub fn score(&self, t: usize, s: usize) -> f64 {
        self.scores[t * self.t_len + s]
    }

    /// Upper envelope over rows at each lag: env[ℓ] = max_t score(t, t-ℓ).
    pub fn lag_envelope(&self) -> Vec<f64> {
        let t_len = self.t_len;
        let mut env = vec![0.0; t_len];
        for lag in 0..t_len {
            let mut m = 0.0f64;
            for t in lag..t_len {
                m = m.max(self.score(t, t - lag));
            }
            env[lag] = m;
        }
        env
    }
}

/// One backward sweep per output row: row t holds |∂y_t/∂x_s| for s ≤ t,
/// reading the gradient of output channel `out_channel` and aggregating
/// over input channels. Rows are independent and evaluated in parallel.
pub fn influence_matrix(
    params: &AnyParams,
    x: &SequenceInput,
    out_channel: usize,
    agg: ChannelAggregation,
) -> Result<InfluenceMatrix> {
    let t_len = x.t_len();
    let d_dim = x.channels();
    if out_channel >= d_dim {
        return Err(Error::ShapeMismatch(format!(
            "output channel {out_channel} out of range for D={d_dim}"
        )));
    }
    let run = forward_with_tape(params, x)?;
    let a_max = params
        .build(x)?
        .iter()
        .map(|c| c.diagnostics().a_max)
        .fold(0.0f64, f64::max);

    let rows: Result<Vec<Vec<f64>>> = (0..t_len)
        .into_par_iter()
        .map(|t| {
            let mut cot = vec![0.0; t_len * d_dim];
            cot[t * d_dim + out_channel] = 1.0;
            let g = backward(&run, &cot)?;
            let mut row = vec![0.0; t_len];
            for (s, slot) in row.iter_mut().enumerate().take(t + 1) {
                let mut acc = 0.0f64;
                for d in 0..d_dim {
                    let v = g.input[s * d_dim + d];
                    match agg {
                        ChannelAggregation::MaxAbs => acc = acc.max(v.abs()),
                        ChannelAggregation::L2 => acc += v * v,
                    }
                }
                *slot = match agg {
                    ChannelAggregation::MaxAbs => acc,
                    ChannelAggregation::L2 => acc.sqrt(),
                };
            }
            Ok(row)
        })
        .collect();

    let mut scores = vec![0.0; t_len * t_len];
    for (t, row) in rows?.into_iter().enumerate() {
        scores[t * t_len..(t + 1) * t_len].copy_from_slice(&row);
    }
    Ok(InfluenceMatrix {
        t_len,
        scores,
        variant: params.variant().name().to_string(),
        a_max,
    })
}

/// Least-squares fit of log envelope scores against lag.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    /// Fitted per-token log decay rate (positive = decaying).
    pub kappa_hat: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// log(A_max^{-1}), the rate the gate extrema imply.
    pub kappa_theoretical: f64,
    pub lag_start: usize,
    pub lag_end: usize,
    /// Lags whose envelope underflowed to exactly zero, excluded from the
    /// log fit.
    pub excluded_zero_lags: usize,
}

/// Fit log upper-envelope scores over `lag_window` (half-open). Zero scores
/// are excluded with a count; fewer than 4 usable lags is an error.
pub fn fit_decay_rate(
    m: &InfluenceMatrix,
    lag_window: std::ops::Range<usize>,
) -> Result<DecayFit> {
    let env = m.lag_envelope();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = 0usize;
    for lag in lag_window.clone() {
        if lag >= env.len() {
            break;
        }
        if env[lag] > 0.0 {
            xs.push(lag as f64);
            ys.push(env[lag].ln());
        } else {
            excluded += 1;
        }
    }
    if xs.len() < 4 {
        return Err(Error::Undefined(format!(
            "decay fit needs at least 4 positive-score lags, found {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let fit = intercept + slope * x;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - my) * (y - my);
    }
    let r_squared = if ss_tot < 1e-30 {
        // A constant envelope is fit perfectly by a flat line.
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(DecayFit {
        kappa_hat: -slope,
        intercept,
        r_squared,
        kappa_theoretical: (1.0 / m.a_max).ln(),
        lag_start: lag_window.start,
        lag_end: lag_window.end,
        excluded_zero_lags: excluded,
    })
}
