//! Divided differences of the exponential.
//!
//! For nodes `x_0..x_{m-1}` the matrix `A = diag(x) + N` (ones on the
//! superdiagonal) satisfies `exp(A)[i][j] = exp[x_i, ..., x_j]`, including the
//! confluent limits. The table is built by scaling and squaring: a Taylor
//! series on `diag(x / 2^s) + N`, then `s` squarings. Entries are kept in
//! divided-difference form, so the squaring step reads
//! `G'[i][j] = 2^{-(j-i)} (G·G)[i][j]`. All entries are positive, so the
//! squarings never cancel.

use crate::error::{Error, Result};

/// Public node limit for [`divided_difference_exp`].
pub const MAX_NODES: usize = 32;

/// Internal tables may hold a spectrum repeated up to three times.
const INTERNAL_MAX_NODES: usize = 3 * 16 + 2;

/// Largest |node| after scaling, fed to the Taylor series.
const SCALED_RADIUS: f64 = 0.5;

/// Extra Taylor terms past the table width. `0.5^r / r!` drops below 1e-19 at r = 20.
const TAYLOR_TAIL: usize = 22;

/// Spreads beyond this are shifted to put the largest node at zero instead of
/// centring them, keeping every entry below 1.
const CENTRED_SPREAD_LIMIT: f64 = 1000.0;

/// Upper-triangular table of divided differences of `exp` over contiguous
/// node windows, scaled by `e^shift`.
#[derive(Debug, Clone)]
pub(crate) struct DividedTable {
    size: usize,
    shift: f64,
    entries: Vec<f64>,
}

impl DividedTable {
    pub(crate) fn build(nodes: &[f64]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyNodes);
        }
        if nodes.len() > INTERNAL_MAX_NODES {
            return Err(Error::TooManyNodes {
                count: nodes.len(),
                limit: INTERNAL_MAX_NODES,
            });
        }
        if let Some(index) = nodes.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteNode { index });
        }
        let lo = nodes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shift = if hi - lo <= CENTRED_SPREAD_LIMIT {
            0.5 * (lo + hi)
        } else {
            hi
        };
        let shifted: Vec<f64> = nodes.iter().map(|x| x - shift).collect();
        Ok(Self {
            size: nodes.len(),
            shift,
            entries: exp_bidiagonal(&shifted),
        })
    }

    /// `exp[x_i..x_j] · e^{-shift}`.
    #[inline]
    pub(crate) fn scaled(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i <= j && j < self.size);
        self.entries[i * self.size + j]
    }

    /// `ln exp[x_i..x_j]`.
    pub(crate) fn ln(&self, i: usize, j: usize) -> f64 {
        self.shift + self.scaled(i, j).ln()
    }

    pub(crate) fn value(&self, i: usize, j: usize) -> f64 {
        self.scaled(i, j) * self.shift.exp()
    }
}

/// Divided difference of `exp` over `nodes` (repeats allowed).
pub fn divided_difference_exp(nodes: &[f64]) -> Result<f64> {
    if nodes.len() > MAX_NODES {
        return Err(Error::TooManyNodes {
            count: nodes.len(),
            limit: MAX_NODES,
        });
    }
    let table = DividedTable::build(nodes)?;
    Ok(table.value(0, nodes.len() - 1))
}

/// Natural log of [`divided_difference_exp`]; finite where the value itself
/// would overflow or underflow.
pub fn log_divided_difference_exp(nodes: &[f64]) -> Result<f64> {
    if nodes.len() > MAX_NODES {
        return Err(Error::TooManyNodes {
            count: nodes.len(),
            limit: MAX_NODES,
        });
    }
    let table = DividedTable::build(nodes)?;
    Ok(table.ln(0, nodes.len() - 1))
}

/// Row-major `m × m` table `exp(diag(x) + N)`.
fn exp_bidiagonal(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let radius = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let squarings = if radius > SCALED_RADIUS {
        (radius / SCALED_RADIUS).log2().ceil() as i32
    } else {
        0
    };
    let scale = 2f64.powi(-squarings);
    let d: Vec<f64> = x.iter().map(|v| v * scale).collect();

    // Taylor series: term_k = (diag(d) + N)^k / k!
    let mut sum = vec![0.0; m * m];
    let mut term = vec![0.0; m * m];
    for i in 0..m {
        term[i * m + i] = 1.0;
        sum[i * m + i] = 1.0;
    }
    let mut next = vec![0.0; m * m];
    for k in 1..(m + TAYLOR_TAIL) {
        let inv_k = 1.0 / k as f64;
        for i in 0..m {
            for j in i..m {
                let mut v = d[i] * term[i * m + j];
                if i < j {
                    v += term[(i + 1) * m + j];
                }
                next[i * m + j] = v * inv_k;
            }
        }
        std::mem::swap(&mut term, &mut next);
        for idx in 0..m * m {
            sum[idx] += term[idx];
        }
    }

    let mut g = sum;
    let mut sq = vec![0.0; m * m];
    for _ in 0..squarings {
        for i in 0..m {
            let mut factor = 1.0;
            for j in i..m {
                let mut acc = 0.0;
                for k in i..=j {
                    acc += g[i * m + k] * g[k * m + j];
                }
                sq[i * m + j] = acc * factor;
                factor *= 0.5;
            }
        }
        std::mem::swap(&mut g, &mut sq);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Explicit sum over distinct nodes.
    fn explicit(nodes: &[f64]) -> f64 {
        nodes
            .iter()
            .enumerate()
            .map(|(k, &xk)| {
                let denom: f64 = nodes
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &xj)| xk - xj)
                    .product();
                xk.exp() / denom
            })
            .sum()
    }

    #[test]
    fn single_node_is_exp() {
        assert_eq!(divided_difference_exp(&[0.0]).unwrap(), 1.0);
        assert!((divided_difference_exp(&[1.3]).unwrap() - 1.3f64.exp()).abs() < 1e-15 * 1.3f64.exp());
        assert!((divided_difference_exp(&[-40.0]).unwrap() / (-40f64).exp() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn confluent_zero_nodes() {
        let v = divided_difference_exp(&[0.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.5).abs() < 1e-16);
        // exp[0 x k] = 1/(k-1)!
        let v = divided_difference_exp(&[0.0; 6]).unwrap();
        assert!((v * 120.0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn three_distinct_nodes() {
        let v = divided_difference_exp(&[0.0, -1.0, -2.0]).unwrap();
        let expected = 0.5 - (-1f64).exp() + 0.5 * (-2f64).exp();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.1997882).abs() < 5e-8);
    }

    #[test]
    fn matches_explicit_sum_on_separated_nodes() {
        let nodes = [-3.1, 0.4, 2.2, 5.0, -7.5];
        let v = divided_difference_exp(&nodes).unwrap();
        let e = explicit(&nodes);
        assert!((v / e - 1.0).abs() < 1e-12, "{v} vs {e}");
    }

    #[test]
    fn clustered_nodes_approach_confluent_limit() {
        // exp[t, t, t] = e^t / 2
        let eps = 1e-7;
        let v = divided_difference_exp(&[1.0, 1.0 + eps, 1.0 - eps]).unwrap();
        assert!((v / (1f64.exp() / 2.0) - 1.0).abs() < 1e-12);
        let v = divided_difference_exp(&[1.0, 1.0, 1.0]).unwrap();
        assert!((v / (1f64.exp() / 2.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn order_does_not_matter() {
        let a = divided_difference_exp(&[3.0, -2.0, 0.5, 0.5, 9.0]).unwrap();
        let b = divided_difference_exp(&[0.5, 9.0, -2.0, 3.0, 0.5]).unwrap();
        assert!((a / b - 1.0).abs() < 1e-13);
    }

    #[test]
    fn wide_spread_in_log_space() {
        // exp[0, -L] = (1 - e^{-L}) / L
        for &l in &[10.0, 60.0, 700.0, 5000.0] {
            let ln = log_divided_difference_exp(&[0.0, -l]).unwrap();
            let expected = (-(-l).exp()).ln_1p() - l.ln();
            assert!((ln - expected).abs() < 1e-11 * expected.abs().max(1.0), "L={l}: {ln} vs {expected}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(divided_difference_exp(&[]), Err(Error::EmptyNodes)));
        assert!(matches!(
            divided_difference_exp(&[0.0, f64::NAN]),
            Err(Error::NonFiniteNode { index: 1 })
        ));
        assert!(matches!(
            divided_difference_exp(&[0.0; 33]),
            Err(Error::TooManyNodes { count: 33, .. })
        ));
    }
}
