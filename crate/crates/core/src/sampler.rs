//! Monte Carlo over pure states.
//!
//! Haar-random states come from normalized standard complex Gaussian vectors.
//! Lazy-ensemble states are drawn by rejection against the Haar proposal:
//! since `⟨ψ|B|ψ⟩ ∈ [b_min, b_max]`, accepting with probability
//! `exp(-(⟨ψ|B|ψ⟩ - b_min))` gives exact draws, at an acceptance rate of
//! `Z(b - b_min)`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inverse::{log_ensemble_density, LazyEnsemble};
use crate::partition;
use crate::spectra::{expectation_unchecked, validate_density, ComplexMatrix, DensityMatrix, HermitianMatrix, PureState};

/// Largest temperature spread the rejection sampler accepts.
pub const MAX_SAMPLER_SPREAD: f64 = 50.0;

/// Accepted states per work unit in [`sample_lazy_parallel`].
pub const CHUNK_SIZE: usize = 4096;

/// Seeded ChaCha20 stream. Splitting selects a distinct ChaCha stream id, so
/// children never overlap with each other or with the parent.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Independent child stream number `index`.
    pub fn split(&self, index: u64) -> Self {
        let child = splitmix64(self.stream ^ splitmix64(index.wrapping_add(1)));
        Self::with_stream(self.seed, child)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// What generated a batch, up to the gauge of `B`.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleSource {
    Haar { dim: usize },
    /// Trace-free part of the temperature matrix.
    Lazy { temperature: HermitianMatrix },
}

impl SampleSource {
    fn for_ensemble(ens: &LazyEnsemble) -> Self {
        let b = ens.temperature();
        SampleSource::Lazy {
            temperature: b.shifted(-b.trace() / b.dim() as f64),
        }
    }

    /// Whether draws from this source follow `ens`.
    fn matches(&self, ens: &LazyEnsemble) -> bool {
        let b = ens.temperature();
        let free = b.shifted(-b.trace() / b.dim() as f64);
        match self {
            SampleSource::Haar { dim } => *dim == ens.dim() && free.max_abs() <= 1e-12,
            SampleSource::Lazy { temperature } => {
                temperature.dim() == free.dim()
                    && (temperature.as_matrix() - free.as_matrix())
                        .iter()
                        .all(|z| z.norm() <= 1e-12 * free.max_abs().max(1.0))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleBatch {
    dim: usize,
    states: Vec<PureState>,
    proposed: u64,
    source: SampleSource,
}

impl SampleBatch {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[PureState] {
        &self.states
    }

    pub fn proposed(&self) -> u64 {
        self.proposed
    }

    pub fn accepted(&self) -> u64 {
        self.states.len() as u64
    }

    pub fn source(&self) -> &SampleSource {
        &self.source
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted() as f64 / self.proposed as f64
    }

    /// Concatenates two batches drawn from the same source.
    pub fn merge(mut self, other: SampleBatch) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if self.source != other.source {
            return Err(Error::SourceMismatch);
        }
        self.states.extend(other.states);
        self.proposed += other.proposed;
        Ok(self)
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        // Welford
        let mut count = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for v in values {
            count += 1;
            let delta = v - mean;
            mean += delta / count as f64;
            m2 += delta * (v - mean);
        }
        if count == 0 {
            return Err(Error::EmptyBatch);
        }
        let std_error = if count > 1 {
            (m2 / (count - 1) as f64 / count as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Ok(Self {
            mean,
            std_error,
            samples: count,
        })
    }

    /// `|mean - expected| ≤ k · std_error`, with exact agreement accepted.
    pub fn agrees_with(&self, expected: f64, k: f64) -> bool {
        let dev = (self.mean - expected).abs();
        dev <= k * self.std_error || dev <= 1e-12 * expected.abs().max(1.0)
    }
}

pub(crate) fn haar_amplitudes<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<Complex64> {
    loop {
        let v = DVector::from_fn(n, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let norm = v.norm();
        if norm > 0.0 {
            return v.unscale(norm);
        }
    }
}

/// One Haar-random pure state in `C^n`.
pub fn sample_haar(n: usize, stream: &mut RandomStream) -> Result<PureState> {
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    PureState::new(haar_amplitudes(n, stream))
}

/// `count` Haar-random states.
pub fn sample_haar_batch(n: usize, count: usize, stream: &mut RandomStream) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::ZeroCount);
    }
    let states = (0..count)
        .map(|_| sample_haar(n, stream))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleBatch {
        dim: n,
        states,
        proposed: count as u64,
        source: SampleSource::Haar { dim: n },
    })
}

fn check_spread(ens: &LazyEnsemble) -> Result<()> {
    let spread = ens.nodes().spread();
    if spread > MAX_SAMPLER_SPREAD {
        return Err(Error::SpreadTooLarge {
            spread,
            limit: MAX_SAMPLER_SPREAD,
        });
    }
    Ok(())
}

fn rejection_loop(
    b: &ComplexMatrix,
    b_min: f64,
    n: usize,
    count: usize,
    stream: &mut RandomStream,
) -> (Vec<PureState>, u64) {
    let mut states = Vec::with_capacity(count);
    let mut proposed = 0u64;
    while states.len() < count {
        proposed += 1;
        let v = haar_amplitudes(n, stream);
        let excess = expectation_unchecked(b, &v) - b_min;
        let u: f64 = stream.random();
        if u < (-excess).exp() {
            states.push(PureState::new(v).expect("normalized by construction"));
        }
    }
    (states, proposed)
}

/// `count` exact draws from the lazy ensemble by rejection sampling.
pub fn sample_lazy(ens: &LazyEnsemble, count: usize, stream: &mut RandomStream) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::ZeroCount);
    }
    check_spread(ens)?;
    let (states, proposed) = rejection_loop(
        ens.temperature().as_matrix(),
        ens.nodes().min(),
        ens.dim(),
        count,
        stream,
    );
    Ok(SampleBatch {
        dim: ens.dim(),
        states,
        proposed,
        source: SampleSource::for_ensemble(ens),
    })
}

/// Like [`sample_lazy`], fanned out over worker threads. Chunk `i` always
/// uses `stream.split(i)`, so the result does not depend on the thread count.
pub fn sample_lazy_parallel(ens: &LazyEnsemble, count: usize, stream: &RandomStream) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::ZeroCount);
    }
    check_spread(ens)?;
    let chunks = count.div_ceil(CHUNK_SIZE);
    let b = ens.temperature().as_matrix();
    let b_min = ens.nodes().min();
    let n = ens.dim();
    let parts: Vec<(Vec<PureState>, u64)> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let size = CHUNK_SIZE.min(count - i * CHUNK_SIZE);
            let mut child = stream.split(i as u64);
            rejection_loop(b, b_min, n, size, &mut child)
        })
        .collect();
    let mut states = Vec::with_capacity(count);
    let mut proposed = 0;
    for (s, p) in parts {
        states.extend(s);
        proposed += p;
    }
    Ok(SampleBatch {
        dim: n,
        states,
        proposed,
        source: SampleSource::for_ensemble(ens),
    })
}

/// Expected acceptance rate of [`sample_lazy`]: `Z(b - b_min) ∈ (0, 1]`.
pub fn predicted_acceptance(ens: &LazyEnsemble) -> Result<f64> {
    let nodes = ens.nodes();
    Ok(partition::log_partition(&nodes.shifted(-nodes.min()))?.exp().min(1.0))
}

/// Average projector over the batch, renormalized to unit trace.
pub fn empirical_density_matrix(batch: &SampleBatch) -> Result<DensityMatrix> {
    if batch.states.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.dim;
    let mut acc = ComplexMatrix::zeros(n, n);
    for psi in &batch.states {
        let v = psi.amplitudes();
        for i in 0..n {
            acc[(i, i)].re += v[i].norm_sqr();
            for j in (i + 1)..n {
                let z = v[i] * v[j].conj();
                acc[(i, j)] += z;
                acc[(j, i)] += z.conj();
            }
        }
    }
    let trace: f64 = (0..n).map(|i| acc[(i, i)].re).sum();
    validate_density(acc.unscale(trace))
}

/// Monte Carlo estimate of the differential entropy `∫ μ ln μ dψ` as the
/// batch mean of `ln μ(ψ)`.
pub fn estimate_entropy(batch: &SampleBatch, ens: &LazyEnsemble) -> Result<Estimate> {
    if batch.states.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if batch.dim != ens.dim() || !batch.source.matches(ens) {
        return Err(Error::SourceMismatch);
    }
    let values = batch
        .states
        .iter()
        .map(|psi| log_ensemble_density(ens, psi))
        .collect::<Result<Vec<_>>>()?;
    Estimate::from_values(values)
}

/// Haar average of `f(ψ)` over `samples` draws.
pub fn haar_average<F>(n: usize, samples: usize, stream: &mut RandomStream, mut f: F) -> Result<Estimate>
where
    F: FnMut(&DVector<Complex64>) -> f64,
{
    if samples == 0 {
        return Err(Error::ZeroCount);
    }
    Estimate::from_values((0..samples).map(|_| f(&haar_amplitudes(n, stream))))
}

/// Monte Carlo estimate of `Z(B) = E_Haar[exp(-⟨ψ|B|ψ⟩)]`.
pub fn estimate_partition(b: &HermitianMatrix, samples: usize, stream: &mut RandomStream) -> Result<Estimate> {
    let m = b.as_matrix();
    haar_average(b.dim(), samples, stream, |v| (-expectation_unchecked(m, v)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::Gauge;

    fn qubit_ensemble(beta: f64) -> LazyEnsemble {
        LazyEnsemble::from_temperature(&HermitianMatrix::from_diagonal(&[-beta, beta]), Gauge::TraceZero).unwrap()
    }

    #[test]
    fn identical_seeds_reproduce() {
        let ens = qubit_ensemble(1.0);
        let a = sample_lazy(&ens, 200, &mut RandomStream::new(7)).unwrap();
        let b = sample_lazy(&ens, 200, &mut RandomStream::new(7)).unwrap();
        assert_eq!(a.states(), b.states());
        assert_eq!(a.proposed(), b.proposed());
        let c = sample_lazy(&ens, 200, &mut RandomStream::new(8)).unwrap();
        assert_ne!(a.states(), c.states());
    }

    #[test]
    fn split_streams_differ() {
        let root = RandomStream::new(1);
        let mut a = root.split(0);
        let mut b = root.split(1);
        let mut r = root.clone();
        let xs: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..4).map(|_| r.next_u64()).collect();
        assert_ne!(xs, ys);
        assert_ne!(xs, zs);
        let mut a2 = root.split(0);
        assert_eq!(xs, (0..4).map(|_| a2.next_u64()).collect::<Vec<_>>());
    }

    #[test]
    fn one_dimensional_states_are_phases() {
        let mut s = RandomStream::new(3);
        for _ in 0..10 {
            let psi = sample_haar(1, &mut s).unwrap();
            assert!((psi.amplitudes()[0].norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_temperature_accepts_everything() {
        let ens = LazyEnsemble::from_temperature(&HermitianMatrix::zeros(3), Gauge::TraceZero).unwrap();
        let batch = sample_lazy(&ens, 500, &mut RandomStream::new(11)).unwrap();
        assert_eq!(batch.proposed(), 500);
        assert_eq!(predicted_acceptance(&ens).unwrap(), 1.0);
        let est = estimate_entropy(&batch, &ens).unwrap();
        assert!(est.mean.abs() < 1e-15 && est.std_error < 1e-15);
    }

    #[test]
    fn predicted_acceptance_values() {
        let p = predicted_acceptance(&qubit_ensemble(1.0)).unwrap();
        assert!((p - 1f64.sinh() / 1f64.exp()).abs() < 1e-15);
        assert!((p - 0.4323324).abs() < 5e-8);
        let ens = LazyEnsemble::from_temperature(&HermitianMatrix::from_diagonal(&[0.0, 1.0, 2.0]), Gauge::TraceZero)
            .unwrap();
        assert!((predicted_acceptance(&ens).unwrap() - 0.3995764).abs() < 5e-8);
    }

    #[test]
    fn empirical_density_examples() {
        let one = SampleBatch {
            dim: 2,
            states: vec![PureState::basis(2, 0)],
            proposed: 1,
            source: SampleSource::Haar { dim: 2 },
        };
        let rho = empirical_density_matrix(&one).unwrap();
        assert_eq!(rho.matrix(), &HermitianMatrix::from_diagonal(&[1.0, 0.0]));
        let two = SampleBatch {
            dim: 2,
            states: vec![PureState::basis(2, 0), PureState::basis(2, 1)],
            proposed: 2,
            source: SampleSource::Haar { dim: 2 },
        };
        let rho = empirical_density_matrix(&two).unwrap();
        assert_eq!(rho.matrix(), &HermitianMatrix::from_diagonal(&[0.5, 0.5]));
        let empty = SampleBatch {
            dim: 2,
            states: vec![],
            proposed: 0,
            source: SampleSource::Haar { dim: 2 },
        };
        assert!(matches!(empirical_density_matrix(&empty), Err(Error::EmptyBatch)));
    }

    #[test]
    fn spread_guard() {
        let ens = qubit_ensemble(30.0);
        assert!(matches!(
            sample_lazy(&ens, 1, &mut RandomStream::new(0)),
            Err(Error::SpreadTooLarge { .. })
        ));
    }

    #[test]
    fn entropy_rejects_foreign_batch() {
        let a = qubit_ensemble(1.0);
        let b = qubit_ensemble(2.0);
        let batch = sample_lazy(&a, 10, &mut RandomStream::new(5)).unwrap();
        assert!(matches!(estimate_entropy(&batch, &b), Err(Error::SourceMismatch)));
        // same distribution in another gauge is fine
        let g = crate::inverse::regauge(&a, Gauge::LogZZero);
        assert!(estimate_entropy(&batch, &g).is_ok());
    }

    #[test]
    fn parallel_sampling_is_deterministic() {
        let ens = qubit_ensemble(1.0);
        let stream = RandomStream::new(42);
        let a = sample_lazy_parallel(&ens, CHUNK_SIZE + 100, &stream).unwrap();
        let b = sample_lazy_parallel(&ens, CHUNK_SIZE + 100, &stream).unwrap();
        assert_eq!(a.states(), b.states());
        assert_eq!(a.accepted() as usize, CHUNK_SIZE + 100);
    }

    #[test]
    fn merge_checks_source() {
        let a = sample_lazy(&qubit_ensemble(1.0), 5, &mut RandomStream::new(1)).unwrap();
        let b = sample_lazy(&qubit_ensemble(1.0), 7, &mut RandomStream::new(2)).unwrap();
        let c = sample_lazy(&qubit_ensemble(0.5), 7, &mut RandomStream::new(2)).unwrap();
        let proposed = a.proposed() + b.proposed();
        let m = a.clone().merge(b).unwrap();
        assert_eq!(m.accepted(), 12);
        assert_eq!(m.proposed(), proposed);
        assert!(matches!(a.merge(c), Err(Error::SourceMismatch)));
    }

    #[test]
    fn estimate_statistics() {
        let e = Estimate::from_values([1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, over 4 samples
        assert!((e.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(Estimate::from_values(std::iter::empty()).is_err());
    }
}
