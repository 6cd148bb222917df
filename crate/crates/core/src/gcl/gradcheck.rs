//! Finite-difference validation of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates: usize,
    /// Coordinates skipped because the probe straddled a ReLU kink.
    pub kinks_skipped: usize,
}

/// Compares `analytic` with central differences of `loss` at `theta` on `samples` coordinates.
///
/// Relative error per coordinate is `|a − n| / max(|a|, |n|, 1e-8)`. A coordinate whose
/// one-sided differences disagree sharply sits next to a non-differentiable point, so it
/// is replaced by another draw.
pub fn grad_check(
    mut loss: impl FnMut(&[f64]) -> f64,
    theta: &[f64],
    analytic: &[f64],
    eps: f64,
    samples: usize,
    seed: u64,
) -> GradCheckReport {
    assert_eq!(theta.len(), analytic.len(), "gradient length");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = theta.len();
    let candidates = sample(&mut rng, n, n.min(samples * 4).max(samples.min(n)));
    let mut point = theta.to_vec();
    let f0 = loss(&point);
    let mut report = GradCheckReport { max_relative_error: 0.0, coordinates: 0, kinks_skipped: 0 };
    for k in candidates {
        if report.coordinates == samples {
            break;
        }
        let orig = point[k];
        point[k] = orig + eps;
        let up = loss(&point);
        point[k] = orig - eps;
        let down = loss(&point);
        point[k] = orig;
        let (fwd, bwd) = ((up - f0) / eps, (f0 - down) / eps);
        let scale = fwd.abs().max(bwd.abs()).max(1e-6);
        if (fwd - bwd).abs() > 1e-2 * scale {
            report.kinks_skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.coordinates += 1;
    }
    report
}
