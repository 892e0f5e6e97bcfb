use num_complex::Complex64;
use std::f64::consts::TAU;

use super::TemperatureSpectrum;
use crate::error::{Error, Result};

pub const MIN_CONTOUR_POINTS: usize = 64;

/// Distance added to the spectral radius about the centre of the spectrum.
const RADIUS_MARGIN: f64 = 1.0;

/// `Z = -(n-1)!/(2πi) ∮ e^{-z} dz / det(B - zI)` by the trapezoidal rule on a
/// circle around the spectrum.
///
/// Independent of the divided-difference path; returns the raw `Z`, so keep
/// spreads moderate.
pub fn partition_contour(b: &TemperatureSpectrum, points: usize) -> Result<f64> {
    if points < MIN_CONTOUR_POINTS {
        return Err(Error::TooFewContourPoints {
            got: points,
            min: MIN_CONTOUR_POINTS,
        });
    }
    let nodes = b.nodes();
    let n = nodes.len();
    let center = nodes.iter().sum::<f64>() / n as f64;
    let reach = nodes.iter().fold(0.0f64, |acc, v| acc.max((v - center).abs()));
    let radius = reach + RADIUS_MARGIN;
    if radius <= reach {
        return Err(Error::ContourTooTight);
    }

    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..points {
        let offset = Complex64::from_polar(radius, TAU * k as f64 / points as f64);
        let z = center + offset;
        let det: Complex64 = nodes.iter().map(|&bk| Complex64::new(bk, 0.0) - z).product();
        // dz = i·offset·dθ cancels the 1/(2πi) up to 1/points
        acc += (-z).exp() / det * offset;
    }
    let factorial: f64 = (1..n).map(|i| i as f64).product();
    let z = -factorial * acc / points as f64;
    debug_assert!(z.im.abs() <= 1e-8 * z.re.abs().max(f64::MIN_POSITIVE));
    Ok(z.re)
}
