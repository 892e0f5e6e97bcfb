//! Fitting the temperature matrix of a lazy ensemble to a density matrix.
//!
//! The constraint `∫ P_ψ μ(ψ) dψ = ρ` is diagonal in the eigenbasis of `ρ`
//! because the Haar measure is unitarily invariant, so `B` shares that
//! eigenbasis and only its eigenvalues are solved for. The solve is a damped
//! Newton iteration on `mean_occupations(b) = spec(ρ)`, restricted to the
//! distinct eigenvalues of `ρ` and to the trace-zero slice of `b`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::partition::{self, TemperatureSpectrum, MAX_DIM};
use crate::spectra::{
    expectation_unchecked, validate_density, ComplexMatrix, DensityMatrix, HermitianMatrix,
    PureState, RANK_TOL,
};

/// Additive normalization of `B`; `B + c·I` describes the same ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    /// `Tr B = 0`.
    TraceZero,
    /// `ln Z(B) = 0`; then `S = -Tr Bρ`.
    LogZZero,
}

pub const MAX_NEWTON_ITERATIONS: usize = 60;
const MAX_HALVINGS: usize = 50;
/// Eigenvalues of `ρ` closer than this are treated as one degenerate level.
pub const CLUSTER_GAP: f64 = 1e-9;
pub const MIN_TOLERANCE: f64 = 1e-12;

/// A fitted lazy ensemble `μ(ψ) = exp(-⟨ψ|B|ψ⟩) / Z(B)`.
#[derive(Debug, Clone)]
pub struct LazyEnsemble {
    temperature: HermitianMatrix,
    /// Eigenvalues of `B`, paired with the columns of `basis`.
    nodes: TemperatureSpectrum,
    basis: ComplexMatrix,
    gauge: Gauge,
    log_z: f64,
    entropy: f64,
    occupations: Vec<f64>,
    target: DensityMatrix,
    iterations: usize,
    residual: f64,
}

impl LazyEnsemble {
    /// Ensemble of a given temperature matrix; its average state becomes the target.
    pub fn from_temperature(b: &HermitianMatrix, gauge: Gauge) -> Result<Self> {
        if b.dim() > MAX_DIM {
            return Err(Error::TooManyNodes {
                count: b.dim(),
                limit: MAX_DIM,
            });
        }
        let eig = crate::spectra::eigh(b);
        let nodes = TemperatureSpectrum::new(eig.spectrum.values().to_vec())?;
        let occupations = partition::mean_occupations(&nodes)?;
        let rho = HermitianMatrix::from_spectral(&eig.basis, &occupations);
        let target = validate_density(rho.into_matrix())?;
        Self::assemble(nodes, eig.basis, gauge, target, 0, 0.0)
    }

    fn assemble(
        nodes: TemperatureSpectrum,
        basis: ComplexMatrix,
        gauge: Gauge,
        target: DensityMatrix,
        iterations: usize,
        residual: f64,
    ) -> Result<Self> {
        let shift = match gauge {
            Gauge::TraceZero => -nodes.nodes().iter().sum::<f64>() / nodes.dim() as f64,
            Gauge::LogZZero => partition::log_partition(&nodes)?,
        };
        let nodes = nodes.shifted(shift);
        let eval = partition::evaluate(&nodes)?;
        let log_z = match gauge {
            Gauge::LogZZero => 0.0,
            Gauge::TraceZero => eval.log_z,
        };
        let temperature = HermitianMatrix::from_spectral(&basis, nodes.nodes());
        Ok(Self {
            temperature,
            nodes,
            basis,
            gauge,
            log_z,
            entropy: eval.entropy,
            occupations: eval.occupations,
            target,
            iterations,
            residual,
        })
    }

    pub fn temperature(&self) -> &HermitianMatrix {
        &self.temperature
    }

    /// Eigenvalues of `B` in the order of [`Self::basis`] columns.
    pub fn nodes(&self) -> &TemperatureSpectrum {
        &self.nodes
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// Differential entropy `∫ μ ln μ dψ`.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    /// Mean occupations aligned with [`Self::nodes`].
    pub fn occupations(&self) -> &[f64] {
        &self.occupations
    }

    pub fn target(&self) -> &DensityMatrix {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.nodes.dim()
    }

    /// Newton iterations used by the fit (0 when built from `B`).
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Final max-norm occupation residual of the fit.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// The ensemble's average state `U diag(λ) U†`.
    pub fn average_state(&self) -> HermitianMatrix {
        HermitianMatrix::from_spectral(&self.basis, &self.occupations)
    }

    /// `Tr Bρ` against the fitted occupations.
    pub fn mean_energy(&self) -> f64 {
        self.nodes
            .nodes()
            .iter()
            .zip(&self.occupations)
            .map(|(b, l)| b * l)
            .sum()
    }
}

struct Cluster {
    members: Vec<usize>,
    target: f64,
}

fn cluster_spectrum(values: &[f64]) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if v - last <= CLUSTER_GAP => c.members.push(i),
            _ => clusters.push(Cluster {
                members: vec![i],
                target: 0.0,
            }),
        }
        last = v;
    }
    for c in &mut clusters {
        c.target = c.members.iter().map(|&i| values[i]).sum::<f64>() / c.members.len() as f64;
    }
    clusters
}

fn broadcast(clusters: &[Cluster], levels: &[f64], n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n];
    for (c, &y) in clusters.iter().zip(levels) {
        for &i in &c.members {
            b[i] = y;
        }
    }
    b
}

/// Largest deviation `|λ_s(b) - target_s|` over all eigenvalues.
fn cluster_residual(clusters: &[Cluster], occupations: &[f64]) -> (Vec<f64>, f64) {
    let mut per_cluster = Vec::with_capacity(clusters.len());
    let mut worst = 0.0f64;
    for c in clusters {
        let mean = c.members.iter().map(|&i| occupations[i]).sum::<f64>() / c.members.len() as f64;
        for &i in &c.members {
            worst = worst.max((occupations[i] - c.target).abs());
        }
        per_cluster.push(mean - c.target);
    }
    (per_cluster, worst)
}

/// Newton step on the cluster levels: solves `K δ = -F` with `K` the
/// cluster-summed Jacobian and `F_c = m_c r_c`. `K` is negative semidefinite
/// with the all-ones vector as its null direction and `F ⊥ 1`, so the
/// minimal-norm step solves the definite system `(11ᵀ - K) δ = F`.
fn newton_step(clusters: &[Cluster], b: &[f64], residual: &[f64]) -> Result<Vec<f64>> {
    let k = clusters.len();
    let jac = partition::occupation_jacobian(&TemperatureSpectrum::new(b.to_vec())?)?;
    let mut m = DMatrix::<f64>::from_element(k, k, 1.0);
    for (ci, c) in clusters.iter().enumerate() {
        for (di, d) in clusters.iter().enumerate() {
            let sum: f64 = c
                .members
                .iter()
                .flat_map(|&s| d.members.iter().map(move |&t| (s, t)))
                .map(|(s, t)| jac[s][t])
                .sum();
            m[(ci, di)] -= sum;
        }
    }
    let rhs = nalgebra::DVector::from_iterator(
        k,
        clusters
            .iter()
            .zip(residual)
            .map(|(c, r)| c.members.len() as f64 * r),
    );
    let step = match m.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => m
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|_| Error::NonFinite("newton system"))?,
    };
    Ok(step.iter().copied().collect())
}

/// Finds the temperature matrix whose lazy ensemble averages to `rho`.
pub fn fit_temperature(rho: &DensityMatrix, gauge: Gauge, tol: f64) -> Result<LazyEnsemble> {
    if tol.is_nan() || tol < MIN_TOLERANCE {
        return Err(Error::ToleranceTooSmall(tol));
    }
    let n = rho.dim();
    if n > MAX_DIM {
        return Err(Error::TooManyNodes {
            count: n,
            limit: MAX_DIM,
        });
    }
    let spectrum = rho.spectrum().values();
    if !rho.is_full_range() || spectrum[0] <= RANK_TOL {
        return Err(Error::NotFullRange {
            min_eigenvalue: spectrum[0],
        });
    }

    let clusters = cluster_spectrum(spectrum);
    let recentre = |levels: &mut Vec<f64>| {
        let mean = clusters
            .iter()
            .zip(levels.iter())
            .map(|(c, y)| c.members.len() as f64 * y)
            .sum::<f64>()
            / n as f64;
        levels.iter_mut().for_each(|y| *y -= mean);
    };

    let mut levels: Vec<f64> = clusters.iter().map(|c| -c.target.ln()).collect();
    recentre(&mut levels);

    let mut b = broadcast(&clusters, &levels, n);
    let mut occ = partition::mean_occupations(&TemperatureSpectrum::new(b.clone())?)?;
    let (mut per_cluster, mut residual) = cluster_residual(&clusters, &occ);
    let mut iterations = 0;

    while residual > tol {
        if iterations == MAX_NEWTON_ITERATIONS {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
        iterations += 1;
        let step = newton_step(&clusters, &b, &per_cluster)?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut trial: Vec<f64> = levels.iter().zip(&step).map(|(y, d)| y + scale * d).collect();
            recentre(&mut trial);
            let trial_b = broadcast(&clusters, &trial, n);
            let trial_occ = partition::mean_occupations(&TemperatureSpectrum::new(trial_b.clone())?)?;
            let (trial_pc, trial_res) = cluster_residual(&clusters, &trial_occ);
            if trial_res < residual {
                levels = trial;
                b = trial_b;
                occ = trial_occ;
                per_cluster = trial_pc;
                residual = trial_res;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
    }
    debug_assert_eq!(occ.len(), n);

    let nodes = TemperatureSpectrum::new(b)?;
    LazyEnsemble::assemble(
        nodes,
        rho.eigen().basis.clone(),
        gauge,
        rho.clone(),
        iterations,
        residual,
    )
}

/// `μ(ψ) = exp(-⟨ψ|B|ψ⟩ - ln Z)`, a density against the normalized Haar measure.
pub fn ensemble_density(ens: &LazyEnsemble, psi: &PureState) -> Result<f64> {
    Ok(log_ensemble_density(ens, psi)?.exp())
}

/// `ln μ(ψ)`.
pub fn log_ensemble_density(ens: &LazyEnsemble, psi: &PureState) -> Result<f64> {
    if psi.dim() != ens.dim() {
        return Err(Error::DimensionMismatch {
            expected: ens.dim(),
            found: psi.dim(),
        });
    }
    let energy = expectation_unchecked(ens.temperature.as_matrix(), psi.amplitudes());
    Ok(-energy - ens.log_z)
}

/// Re-expresses `ens` in another gauge by shifting `B` by a multiple of `I`.
pub fn regauge(ens: &LazyEnsemble, gauge: Gauge) -> LazyEnsemble {
    let shift = match gauge {
        Gauge::TraceZero => -ens.nodes.nodes().iter().sum::<f64>() / ens.dim() as f64,
        // Z(b + c) = e^{-c} Z(b)
        Gauge::LogZZero => ens.log_z,
    };
    let nodes = ens.nodes.shifted(shift);
    let log_z = match gauge {
        Gauge::LogZZero => 0.0,
        Gauge::TraceZero => ens.log_z - shift,
    };
    LazyEnsemble {
        temperature: ens.temperature.shifted(shift),
        nodes,
        basis: ens.basis.clone(),
        gauge,
        log_z,
        entropy: ens.entropy,
        occupations: ens.occupations.clone(),
        target: ens.target.clone(),
        iterations: ens.iterations,
        residual: ens.residual,
    }
}
