//! Partition function of the lazy ensemble and its derivatives.
//!
//! For a temperature matrix with eigenvalues `b_1..b_n` the normalization over
//! Haar-random pure states is
//!
//! ```text
//! Z(b) = (n-1)! · exp[-b_1, ..., -b_n]
//! ```
//!
//! a divided difference of the exponential. This form is positive for every
//! `n`. Mean occupations `λ_s = -∂ ln Z / ∂b_s` come from the same divided
//! difference with node `-b_s` doubled, and second derivatives from two extra
//! nodes. Everything is carried in log space; the raw `Z` is only formed when
//! asked for.

mod contour;
mod divided;
pub mod qubit;

pub use contour::{partition_contour, MIN_CONTOUR_POINTS};
pub use divided::{divided_difference_exp, log_divided_difference_exp, MAX_NODES};

use crate::error::{Error, Result};
use divided::DividedTable;

/// Largest supported dimension for spectra.
pub const MAX_DIM: usize = 16;

/// Eigenvalues of a temperature matrix, in caller order.
///
/// Order is preserved so that occupations line up with whatever eigenbasis
/// the caller paired the nodes with.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSpectrum(Vec<f64>);

impl TemperatureSpectrum {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyNodes);
        }
        if nodes.len() > MAX_DIM {
            return Err(Error::TooManyNodes {
                count: nodes.len(),
                limit: MAX_DIM,
            });
        }
        if let Some(index) = nodes.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteNode { index });
        }
        Ok(Self(nodes))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spread(&self) -> f64 {
        self.max() - self.min()
    }

    /// Adds `c` to every node.
    pub fn shifted(&self, c: f64) -> Self {
        Self(self.0.iter().map(|b| b + c).collect())
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0.iter().map(|b| b * a).collect())
    }

    /// Nodes sorted ascending.
    pub fn sorted(&self) -> Self {
        let mut v = self.0.clone();
        v.sort_by(f64::total_cmp);
        Self(v)
    }
}

/// `ln Z`, mean occupations and differential entropy of one spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    pub log_z: f64,
    /// Aligned with the input nodes; sums to 1.
    pub occupations: Vec<f64>,
    pub entropy: f64,
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn negated(b: &TemperatureSpectrum) -> Vec<f64> {
    b.nodes().iter().map(|v| -v).collect()
}

/// `ln Z(b)`.
pub fn log_partition(b: &TemperatureSpectrum) -> Result<f64> {
    let n = b.dim();
    let table = DividedTable::build(&negated(b))?;
    Ok(ln_factorial(n - 1) + table.ln(0, n - 1))
}

/// Table over `(-b, -b)`: window `[s, s+n]` is every node plus `-b_s` again,
/// window `[0, n-1]` is the plain node set.
fn doubled_table(b: &TemperatureSpectrum) -> Result<DividedTable> {
    let mut x = negated(b);
    x.extend_from_within(..);
    DividedTable::build(&x)
}

fn occupations_from(table: &DividedTable, n: usize) -> Vec<f64> {
    let base = table.scaled(0, n - 1);
    let mut lambda: Vec<f64> = (0..n).map(|s| table.scaled(s, s + n) / base).collect();
    // each ratio is accurate to a few ulps; fold the residual drift back in
    let total: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|l| *l /= total);
    lambda
}

/// `λ_s = -∂ ln Z / ∂b_s`, aligned with the input nodes.
pub fn mean_occupations(b: &TemperatureSpectrum) -> Result<Vec<f64>> {
    let n = b.dim();
    let table = doubled_table(b)?;
    Ok(occupations_from(&table, n))
}

/// `S = -Σ b_s λ_s - ln Z`, clamped at zero.
pub fn differential_entropy(b: &TemperatureSpectrum) -> Result<f64> {
    Ok(evaluate(b)?.entropy)
}

/// All first-order quantities from a single divided-difference table.
pub fn evaluate(b: &TemperatureSpectrum) -> Result<PartitionResult> {
    let n = b.dim();
    let table = doubled_table(b)?;
    let log_z = ln_factorial(n - 1) + table.ln(0, n - 1);
    let occupations = occupations_from(&table, n);
    let entropy = entropy_from(b.nodes(), &occupations, log_z);
    Ok(PartitionResult {
        log_z,
        occupations,
        entropy,
    })
}

pub(crate) fn entropy_from(nodes: &[f64], occupations: &[f64], log_z: f64) -> f64 {
    // gauge-fix to the midpoint first so the two terms stay small
    let mid = 0.5
        * (nodes.iter().copied().fold(f64::INFINITY, f64::min)
            + nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let mean_energy: f64 = nodes
        .iter()
        .zip(occupations)
        .map(|(b, l)| (b - mid) * l)
        .sum();
    (-mean_energy - (log_z + mid)).max(0.0)
}

/// `J[s][t] = ∂λ_s / ∂b_t = -Cov(p_s, p_t)` under the ensemble, where `p_s`
/// is the weight of the state on eigenvector `s`.
///
/// Symmetric negative semidefinite; rows sum to zero.
pub fn occupation_jacobian(b: &TemperatureSpectrum) -> Result<Vec<Vec<f64>>> {
    let n = b.dim();
    let x = negated(b);
    let lambda = mean_occupations(b)?;

    // For each s the node sequence (x, x_s, x) has window [t, t+n+1] equal to
    // every node plus x_s and x_t.
    let mut second = vec![vec![0.0; n]; n];
    for s in 0..n {
        let mut seq = Vec::with_capacity(2 * n + 1);
        seq.extend_from_slice(&x);
        seq.push(x[s]);
        seq.extend_from_slice(&x);
        let table = DividedTable::build(&seq)?;
        // base window [n+1, 2n] holds the plain node set
        let base = table.scaled(n + 1, 2 * n);
        for (t, cell) in second[s].iter_mut().enumerate().skip(s) {
            let weight = if s == t { 2.0 } else { 1.0 };
            *cell = weight * table.scaled(t, t + n + 1) / base;
        }
    }
    let mut jac = vec![vec![0.0; n]; n];
    for s in 0..n {
        for t in s..n {
            let cov = second[s][t] - lambda[s] * lambda[t];
            jac[s][t] = -cov;
            jac[t][s] = -cov;
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: &[f64]) -> TemperatureSpectrum {
        TemperatureSpectrum::new(v.to_vec()).unwrap()
    }

    /// Oracle: explicit residue sum `Σ_k e^{-b_k} / Π_{j≠k}(b_j - b_k)` times `(n-1)!`.
    fn z_explicit(b: &[f64]) -> f64 {
        let n = b.len();
        let fact: f64 = (1..n).map(|i| i as f64).product();
        fact * b
            .iter()
            .enumerate()
            .map(|(k, &bk)| {
                let d: f64 = b
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &bj)| bj - bk)
                    .product();
                (-bk).exp() / d
            })
            .sum::<f64>()
    }

    fn central_gradient(b: &[f64], h: f64) -> Vec<f64> {
        (0..b.len())
            .map(|s| {
                let mut up = b.to_vec();
                let mut dn = b.to_vec();
                up[s] += h;
                dn[s] -= h;
                (log_partition(&spec(&up)).unwrap() - log_partition(&spec(&dn)).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn uniform_spectrum() {
        for n in 1..=6 {
            for &c in &[-2.5, 0.0, 3.0] {
                let b = spec(&vec![c; n]);
                assert!((log_partition(&b).unwrap() + c).abs() < 1e-14);
                let lam = mean_occupations(&b).unwrap();
                assert!(lam.iter().all(|l| (l - 1.0 / n as f64).abs() < 1e-15));
                assert!(differential_entropy(&b).unwrap() <= 1e-14);
            }
        }
    }

    #[test]
    fn qubit_values() {
        let b = spec(&[-1.0, 1.0]);
        let lz = log_partition(&b).unwrap();
        assert!((lz - 1f64.sinh().ln()).abs() < 1e-15);
        assert!((lz - 0.1614394).abs() < 5e-8);
        let lam = mean_occupations(&b).unwrap();
        assert!((lam[0] - 0.6565176).abs() < 5e-8);
        assert!((lam[1] - 0.3434824).abs() < 5e-8);
        let s = differential_entropy(&b).unwrap();
        assert!((s - 0.1515959).abs() < 5e-8);
    }

    #[test]
    fn three_level_partition() {
        let b = [0.0, 1.0, 2.0];
        let z = log_partition(&spec(&b)).unwrap().exp();
        assert!((z - z_explicit(&b)).abs() < 1e-14);
        assert!((z - 0.3995764).abs() < 5e-8);
    }

    #[test]
    fn occupations_match_finite_differences() {
        let b = [0.0, 1.0, 2.0];
        let lam = mean_occupations(&spec(&b)).unwrap();
        let grad = central_gradient(&b, 1e-5);
        for s in 0..3 {
            assert!((lam[s] + grad[s]).abs() < 1e-6);
        }
        assert!(lam[0] > lam[1] && lam[1] > lam[2]);
        assert!((lam.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobian_structure() {
        let j = occupation_jacobian(&spec(&[0.7, 0.7])).unwrap();
        let sigma = j[0][1];
        assert!(sigma > 0.0);
        assert!((j[0][0] + sigma).abs() < 1e-15 && (j[1][1] + sigma).abs() < 1e-15);
        // Dirichlet(1,1): Var(p) = 1/12
        assert!((sigma - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let b = [0.0, 1.0, 2.0];
        let j = occupation_jacobian(&spec(&b)).unwrap();
        let h = 1e-5;
        for t in 0..3 {
            let mut up = b.to_vec();
            let mut dn = b.to_vec();
            up[t] += h;
            dn[t] -= h;
            let lu = mean_occupations(&spec(&up)).unwrap();
            let ld = mean_occupations(&spec(&dn)).unwrap();
            for s in 0..3 {
                let fd = (lu[s] - ld[s]) / (2.0 * h);
                assert!((j[s][t] - fd).abs() < 1e-5, "J[{s}][{t}]={} fd={fd}", j[s][t]);
            }
        }
    }

    #[test]
    fn gauge_shift_is_exact_in_log_space() {
        let b = spec(&[-0.3, 1.2, 4.0, 2.2]);
        let base = log_partition(&b).unwrap();
        let lam = mean_occupations(&b).unwrap();
        let s0 = differential_entropy(&b).unwrap();
        for &c in &[-20.0, -3.3, 0.5, 20.0] {
            let shifted = b.shifted(c);
            assert!((log_partition(&shifted).unwrap() - (base - c)).abs() < 1e-12);
            let lc = mean_occupations(&shifted).unwrap();
            assert!(lam.iter().zip(&lc).all(|(a, b)| (a - b).abs() < 1e-13));
            assert!((differential_entropy(&shifted).unwrap() - s0).abs() < 1e-12);
        }
    }

    #[test]
    fn confluent_pair_tends_to_zero() {
        let vals: Vec<f64> = [1e-3, 1e-6, 0.0]
            .iter()
            .map(|&t| log_partition(&spec(&[t, -t])).unwrap())
            .collect();
        assert!(vals[0] > vals[1] && vals[1] >= vals[2]);
        for (&t, v) in [1e-3f64, 1e-6, 0.0].iter().zip(&vals) {
            // ln(sinh t / t) = t²/6 - t⁴/180 + ...
            let taylor = t * t / 6.0 - t.powi(4) / 180.0;
            assert!((v - taylor).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(matches!(TemperatureSpectrum::new(vec![]), Err(Error::EmptyNodes)));
        assert!(matches!(
            TemperatureSpectrum::new(vec![0.0, f64::INFINITY]),
            Err(Error::NonFiniteNode { index: 1 })
        ));
        assert!(matches!(
            TemperatureSpectrum::new(vec![0.0; 17]),
            Err(Error::TooManyNodes { .. })
        ));
    }
}
