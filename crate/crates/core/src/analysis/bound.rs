//! State-gap contraction check: under non-expansive updates the pairwise
//! ∞-norm spread of the memory states is bounded by (1 − A_min^{T-1}) times
//! the spread of the encoded tokens.

use crate::coeffs::StepCoefficients;
use crate::scan::scan_recurrent;
use crate::Result;
use serde::Serialize;

/// Slack granted to the bound comparison, absorbing scan round-off.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    /// max_{t,s} ||h_t − h_s||∞ over t, s in [1, T].
    pub lhs: f64,
    /// (1 − A_min^{T−1}) · max_{t,s} ||b_t − b_s||∞.
    pub rhs: f64,
    pub a_min: f64,
    /// a_t[n] + Δ_t = 1 everywhere.
    pub condition_equals_one: bool,
    /// a_t[n] + Δ_t ≤ 1 everywhere AND each state channel's drive takes both
    /// signs (min ≤ 0 ≤ max).
    pub condition_at_most_one: bool,
    /// Some(lhs ≤ rhs + slack) when a condition holds; None otherwise (the
    /// bound is not claimed).
    pub satisfied: Option<bool>,
}

/// Evaluate both sides of the contraction bound on one coefficient stream.
/// Never fails on condition violations: the report carries the flags and
/// leaves `satisfied` empty when neither condition holds.
pub fn oversmoothing_check(coeffs: &StepCoefficients<f64>) -> Result<BoundReport> {
    let diag = coeffs.diagnostics();
    let (t_len, n) = (coeffs.t_len(), coeffs.state_dim());

    // Sign condition on the encoded tokens, per state channel.
    let mut b_sign_ok = true;
    for j in 0..n {
        let mut bmin = f64::INFINITY;
        let mut bmax = f64::NEG_INFINITY;
        for t in 0..t_len {
            let b = coeffs.b_at(t, j);
            bmin = bmin.min(b);
            bmax = bmax.max(b);
        }
        if !(bmin <= 0.0 && bmax >= 0.0) {
            b_sign_ok = false;
            break;
        }
    }
    let cond_eq = diag.condition_sum_equals_one;
    let cond_le = diag.condition_sum_at_most_one && b_sign_ok;

    // The pairwise ∞-norm maximum decomposes per state channel into the
    // channel's own max-minus-min spread.
    let traj = scan_recurrent(coeffs)?;
    let mut lhs = 0.0f64;
    let mut bgap = 0.0f64;
    for j in 0..n {
        let mut hmin = f64::INFINITY;
        let mut hmax = f64::NEG_INFINITY;
        let mut bmin = f64::INFINITY;
        let mut bmax = f64::NEG_INFINITY;
        for t in 1..=t_len {
            let h = traj.state(t)[j];
            hmin = hmin.min(h);
            hmax = hmax.max(h);
        }
        for t in 0..t_len {
            let b = coeffs.b_at(t, j);
            bmin = bmin.min(b);
            bmax = bmax.max(b);
        }
        lhs = lhs.max(hmax - hmin);
        bgap = bgap.max(bmax - bmin);
    }
    let a_min = diag.a_min;
    let rhs = (1.0 - a_min.powi(t_len as i32 - 1)) * bgap;
    let satisfied = if cond_eq || cond_le {
        Some(lhs <= rhs + BOUND_SLACK)
    } else {
        None
    };
    Ok(BoundReport {
        lhs,
        rhs,
        a_min,
        condition_equals_one: cond_eq,
        condition_at_most_one: cond_le,
        satisfied,
    })
}

/// Joint bound over a multi-channel layer: channels are independent, so the
/// ∞-norm over all (channel, state) pairs obeys the same contraction with
/// the global A_min and the worst per-channel token gap.
pub fn oversmoothing_check_multi(channels: &[StepCoefficients<f64>]) -> Result<BoundReport> {
    assert!(!channels.is_empty());
    let mut joint = BoundReport {
        lhs: 0.0,
        rhs: 0.0,
        a_min: f64::INFINITY,
        condition_equals_one: true,
        condition_at_most_one: true,
        satisfied: None,
    };
    let mut bgap = 0.0f64;
    let t_len = channels[0].t_len();
    for ch in channels {
        let rep = oversmoothing_check(ch)?;
        joint.lhs = joint.lhs.max(rep.lhs);
        joint.a_min = joint.a_min.min(rep.a_min);
        joint.condition_equals_one &= rep.condition_equals_one;
        joint.condition_at_most_one &= rep.condition_at_most_one;
        // Recover the channel's token gap from its own rhs.
        let denom = 1.0 - rep.a_min.powi(t_len as i32 - 1);
        if denom > 0.0 {
            bgap = bgap.max(rep.rhs / denom);
        }
    }
    joint.rhs = (1.0 - joint.a_min.powi(t_len as i32 - 1)) * bgap;
    if joint.condition_equals_one || joint.condition_at_most_one {
        joint.satisfied = Some(joint.lhs <= joint.rhs + BOUND_SLACK);
    }
    Ok(joint)
}
