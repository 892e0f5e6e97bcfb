//! Closed forms for a two-level system with temperature nodes `(b - β, b + β)`.
//!
//! `Z = e^{-b} sinh(β)/β`, and the occupations are `1/2 ± δ(β)` with
//! `δ(β) = (coth β - 1/β)/2`, half the Langevin function.

use crate::error::{Error, Result};

const SERIES_CUTOFF: f64 = 1e-4;

/// `sinh(β)/β` with the removable singularity filled in.
pub fn qubit_partition(beta: f64) -> f64 {
    if beta.abs() < SERIES_CUTOFF {
        let b2 = beta * beta;
        1.0 + b2 / 6.0 + b2 * b2 / 120.0
    } else {
        beta.sinh() / beta
    }
}

/// `ln(sinh(β)/β)`, finite for large |β|.
pub fn qubit_log_partition(beta: f64) -> f64 {
    let a = beta.abs();
    if a < 20.0 {
        qubit_partition(a).ln()
    } else {
        // sinh a = e^a (1 - e^{-2a}) / 2
        a + (-(-2.0 * a).exp()).ln_1p() - std::f64::consts::LN_2 - a.ln()
    }
}

/// `δ(β) = (coth β - 1/β)/2`. Odd, increasing, with range (-1/2, 1/2).
pub fn qubit_delta(beta: f64) -> f64 {
    let a = beta.abs();
    let d = if a < SERIES_CUTOFF {
        a / 6.0 - a * a * a / 90.0
    } else {
        0.5 * (1.0 / a.tanh() - 1.0 / a)
    };
    d.copysign(beta)
}

/// `dδ/dβ = (1/β² - 1/sinh²β)/2`.
fn qubit_delta_slope(beta: f64) -> f64 {
    let a = beta.abs();
    if a < 1e-2 {
        let a2 = a * a;
        1.0 / 6.0 - a2 / 30.0 + a2 * a2 / 189.0
    } else {
        let s = a.sinh();
        0.5 * (1.0 / (a * a) - 1.0 / (s * s))
    }
}

/// The inverse `f` of [`qubit_delta`].
pub fn qubit_inverse_delta(delta: f64) -> Result<f64> {
    if delta.is_nan() || delta.abs() >= 0.5 {
        return Err(Error::OutOfRange { delta });
    }
    let target = delta.abs();
    if target == 0.0 {
        return Ok(0.0 * delta.signum());
    }
    // inverse-Langevin rational seed, L(β) = 2δ
    let y = 2.0 * target;
    let mut beta = y * (3.0 - y * y) / (1.0 - y * y);
    // δ(β) > 1/2 - 1/(2β), so the root lies below 1/(1 - 2δ)
    let mut lo = 0.0;
    let mut hi = 1.0 / (1.0 - y) + 1.0;
    beta = beta.clamp(lo, hi);
    for _ in 0..200 {
        let r = qubit_delta(beta) - target;
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            hi = beta;
        } else {
            lo = beta;
        }
        let mut next = beta - r / qubit_delta_slope(beta);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - beta).abs() <= 4.0 * f64::EPSILON * beta {
            beta = next;
            break;
        }
        beta = next;
    }
    Ok(beta.copysign(delta))
}
