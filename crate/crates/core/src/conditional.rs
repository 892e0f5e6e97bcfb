//! Conditional lazy ensembles `μ_H(ψ) ∝ exp(-β ⟨ψ|H|ψ⟩)` constrained only by
//! the scalar mean of an observable, and their composition over product
//! states of non-interacting systems.
//!
//! The conditional partition function is the matrix one evaluated on the
//! spectrum `β·h`, so everything here reduces to [`crate::partition`].

use crate::error::{Error, Result};
use crate::partition::{self, TemperatureSpectrum};
use crate::sampler::{haar_amplitudes, Estimate, RandomStream};
use crate::spectra::{eigh, expectation_unchecked, ComplexMatrix, HermitianMatrix, Spectrum};

/// Observables with a smaller spectral spread carry no constraint.
pub const SCALAR_SPREAD: f64 = 1e-12;

/// Initial bracket half-width is `BRACKET_EXPONENT / spread`.
const BRACKET_EXPONENT: f64 = 700.0;
const MAX_BRACKET_DOUBLINGS: usize = 20;
const MAX_ROOT_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: HermitianMatrix,
    spectrum: Spectrum,
}

impl Observable {
    pub fn new(matrix: HermitianMatrix) -> Self {
        let spectrum = eigh(&matrix).spectrum;
        Self { matrix, spectrum }
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn spread(&self) -> f64 {
        self.spectrum.max() - self.spectrum.min()
    }

    pub fn is_scalar(&self) -> bool {
        self.spread() <= SCALAR_SPREAD
    }

    fn centre(&self) -> f64 {
        0.5 * (self.spectrum.min() + self.spectrum.max())
    }

    /// Spectrum of `β (H - c)`, with `c` the spectral midpoint.
    fn scaled_nodes(&self, beta: f64) -> Result<TemperatureSpectrum> {
        let c = self.centre();
        TemperatureSpectrum::new(self.spectrum.values().iter().map(|h| beta * (h - c)).collect())
    }
}

/// `ln Z_H(β)`.
pub fn conditional_log_partition(h: &Observable, beta: f64) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::NonFinite("beta"));
    }
    // Z over β(H - c) is e^{βc} Z_H(β)
    Ok(partition::log_partition(&h.scaled_nodes(beta)?)? - beta * h.centre())
}

/// Mean of `⟨ψ|H|ψ⟩` under `μ_H` at inverse temperature `β`.
pub fn conditional_mean(h: &Observable, beta: f64) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::NonFinite("beta"));
    }
    let c = h.centre();
    let lambda = partition::mean_occupations(&h.scaled_nodes(beta)?)?;
    let shifted: f64 = h.spectrum.values().iter().zip(&lambda).map(|(v, l)| (v - c) * l).sum();
    Ok(c + shifted)
}

/// `d mean / dβ = -Var(⟨ψ|H|ψ⟩)`.
fn conditional_slope(h: &Observable, beta: f64) -> Result<f64> {
    let c = h.centre();
    let jac = partition::occupation_jacobian(&h.scaled_nodes(beta)?)?;
    let v: Vec<f64> = h.spectrum.values().iter().map(|x| x - c).collect();
    let mut acc = 0.0;
    for (s, row) in jac.iter().enumerate() {
        for (t, j) in row.iter().enumerate() {
            acc += v[s] * j * v[t];
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalEnsemble {
    observable: Observable,
    beta: f64,
    log_z: f64,
    mean: f64,
}

impl ConditionalEnsemble {
    /// The conditional ensemble of `h` at a given `β`.
    pub fn at(observable: Observable, beta: f64) -> Result<Self> {
        let log_z = conditional_log_partition(&observable, beta)?;
        let mean = conditional_mean(&observable, beta)?;
        Ok(Self {
            observable,
            beta,
            log_z,
            mean,
        })
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }
}

/// Root of the strictly decreasing `f` with `f(β) = 0`, bracketed by expanding
/// `[-start, start]`, then refined by Newton steps that fall back to bisection
/// whenever they leave the bracket.
fn solve_decreasing<F, D>(start: f64, tol: f64, mut f: F, mut slope: D) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<f64>,
    D: FnMut(f64) -> Result<f64>,
{
    let mut half = start;
    let mut bracketed = false;
    for _ in 0..=MAX_BRACKET_DOUBLINGS {
        if f(-half)? > 0.0 && f(half)? < 0.0 {
            bracketed = true;
            break;
        }
        half *= 2.0;
    }
    if !bracketed {
        return Ok(None);
    }
    let (mut lo, mut hi) = (-half, half);
    let mut beta = 0.0;
    let mut value = f(beta)?;
    for _ in 0..MAX_ROOT_ITERATIONS {
        if value == 0.0 {
            return Ok(Some(beta));
        }
        if value > 0.0 {
            lo = beta;
        } else {
            hi = beta;
        }
        let d = slope(beta)?;
        let mut next = if d < 0.0 { beta - value / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - beta).abs();
        beta = next;
        value = f(beta)?;
        if value.abs() <= tol && step <= 1e-13 * beta.abs().max(1.0) {
            return Ok(Some(beta));
        }
        if hi - lo <= 4.0 * f64::EPSILON * beta.abs().max(1.0) {
            break;
        }
    }
    if value.abs() <= tol {
        Ok(Some(beta))
    } else {
        Err(Error::NoConvergence {
            iterations: MAX_ROOT_ITERATIONS,
            residual: value.abs(),
        })
    }
}

/// Finds `β` with `conditional_mean(h, β) = target_mean`.
pub fn fit_conditional(h: &Observable, target_mean: f64, tol: f64) -> Result<ConditionalEnsemble> {
    if h.is_scalar() {
        return Err(Error::ScalarObservable);
    }
    let (min, max) = (h.spectrum.min(), h.spectrum.max());
    if !(target_mean > min && target_mean < max) {
        return Err(Error::TargetUnattainable {
            target: target_mean,
            min,
            max,
        });
    }
    let start = BRACKET_EXPONENT / h.spread();
    let beta = solve_decreasing(
        start,
        tol,
        |b| Ok(conditional_mean(h, b)? - target_mean),
        |b| conditional_slope(h, b),
    )?
    .ok_or(Error::TargetUnattainable {
        target: target_mean,
        min,
        max,
    })?;
    ConditionalEnsemble::at(h.clone(), beta)
}

/// Kronecker sum `H ⊗ I + I ⊗ G`.
pub fn compose(h: &Observable, g: &Observable) -> Observable {
    let (n, m) = (h.dim(), g.dim());
    let ih = ComplexMatrix::identity(n, n);
    let ig = ComplexMatrix::identity(m, m);
    let sum = h.matrix.as_matrix().kronecker(&ig) + ih.kronecker(g.matrix.as_matrix());
    let matrix = HermitianMatrix::new(sum).expect("Kronecker sum of Hermitian matrices is Hermitian");
    Observable::new(matrix)
}

/// Conditional ensemble of `H ⊗ I + I ⊗ H'` over product states `ψ ⊗ ψ'`.
#[derive(Debug, Clone)]
pub struct JointEnsemble {
    pub composite: Observable,
    pub beta: f64,
    /// `ln Z_H(β) + ln Z_H'(β)`.
    pub log_z: f64,
    pub mean: f64,
    /// `β` values of the two marginal ensembles.
    pub marginal_betas: (f64, f64),
}

impl JointEnsemble {
    /// Whether `β` lies between the marginal values, up to `slack`.
    pub fn is_between(&self, slack: f64) -> bool {
        let (a, b) = self.marginal_betas;
        self.beta >= a.min(b) - slack && self.beta <= a.max(b) + slack
    }
}

/// Joint inverse temperature of two non-interacting systems whose combined
/// mean is the sum of the marginal means. Over product states the joint mean
/// splits as `mean_H(τ) + mean_H'(τ)`, so the solve runs on the two marginal
/// maps; the bracket is not restricted to the marginal `β`s.
pub fn joint_fit(a: &ConditionalEnsemble, b: &ConditionalEnsemble, tol: f64) -> Result<JointEnsemble> {
    let (ha, hb) = (&a.observable, &b.observable);
    if ha.is_scalar() && hb.is_scalar() {
        return Err(Error::ScalarObservable);
    }
    let target = a.mean + b.mean;
    let spread = ha.spread() + hb.spread();
    let tau = solve_decreasing(
        BRACKET_EXPONENT / spread,
        tol,
        |t| Ok(conditional_mean(ha, t)? + conditional_mean(hb, t)? - target),
        |t| Ok(conditional_slope(ha, t)? + conditional_slope(hb, t)?),
    )?
    .ok_or(Error::TargetUnattainable {
        target,
        min: ha.spectrum.min() + hb.spectrum.min(),
        max: ha.spectrum.max() + hb.spectrum.max(),
    })?;
    Ok(JointEnsemble {
        composite: compose(ha, hb),
        beta: tau,
        log_z: conditional_log_partition(ha, tau)? + conditional_log_partition(hb, tau)?,
        mean: target,
        marginal_betas: (a.beta, b.beta),
    })
}

/// `|ln Z_prod(τ) - (ln Z_H(τ) + ln Z_G(τ))|` with the product-state partition
/// function formed from its factors; a regression guard that stays at zero.
pub fn factorization_check(h: &Observable, g: &Observable, tau: f64) -> Result<f64> {
    let lh = conditional_log_partition(h, tau)?;
    let lg = conditional_log_partition(g, tau)?;
    let product = (lh.exp() * lg.exp()).ln();
    let reference = lh + lg;
    if product.is_finite() {
        Ok((product - reference).abs())
    } else {
        Ok(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FactorizationReport {
    /// `Z_H(τ) Z_G(τ)`.
    pub expected: f64,
    /// Haar average of `exp(-τ ⟨ψ⊗ψ'|H⊗I + I⊗G|ψ⊗ψ'⟩)`.
    pub estimate: Estimate,
    pub passed: bool,
}

/// Monte Carlo check that the product-state normalization of the composite
/// observable equals `Z_H(τ) Z_G(τ)`, at `sigmas` standard errors.
pub fn factorization_monte_carlo(
    h: &Observable,
    g: &Observable,
    tau: f64,
    samples: usize,
    sigmas: f64,
    stream: &mut RandomStream,
) -> Result<FactorizationReport> {
    let expected = (conditional_log_partition(h, tau)? + conditional_log_partition(g, tau)?).exp();
    let composite = compose(h, g);
    let (n, m) = (h.dim(), g.dim());
    let mut left = stream.split(0);
    let mut right = stream.split(1);
    if samples == 0 {
        return Err(Error::ZeroCount);
    }
    let estimate = Estimate::from_values((0..samples).map(|_| {
        let joint = haar_amplitudes(n, &mut left).kronecker(&haar_amplitudes(m, &mut right));
        (-tau * expectation_unchecked(composite.matrix.as_matrix(), &joint)).exp()
    }))?;
    Ok(FactorizationReport {
        expected,
        estimate,
        passed: estimate.agrees_with(expected, sigmas),
    })
}
