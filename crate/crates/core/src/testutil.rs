//! Shared helpers for unit tests: finite-difference probes and random nets.

use crate::linalg::Rng;
use crate::model::{PolicyParams, ValueParams};

pub(crate) const TEST_PMIN: f64 = 1e-6;

/// Central finite differences with per-parameter step h = 1e-5·max(1,|p|).
pub(crate) fn central_diff<F: FnMut(&[f64]) -> f64>(flat: &mut Vec<f64>, mut f: F) -> Vec<f64> {
    let mut grad = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let orig = flat[i];
        let h = 1e-5 * orig.abs().max(1.0);
        flat[i] = orig + h;
        let up = f(flat);
        flat[i] = orig - h;
        let down = f(flat);
        flat[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

pub(crate) fn relative_error(numerical: f64, analytical: f64) -> f64 {
    (numerical - analytical).abs() / (numerical.abs() + analytical.abs()).max(1e-8)
}

pub(crate) fn max_relative_error(numerical: &[f64], analytical: &[f64]) -> f64 {
    numerical
        .iter()
        .zip(analytical)
        .map(|(n, a)| relative_error(*n, *a))
        .fold(0.0f64, f64::max)
}

pub(crate) fn random_policy(rng: &mut Rng, d: usize, hidden: &[usize]) -> PolicyParams {
    PolicyParams::new(d, hidden, TEST_PMIN, rng).unwrap()
}

pub(crate) fn random_value(rng: &mut Rng, d: usize, hidden: &[usize]) -> ValueParams {
    ValueParams::new(d, hidden, rng).unwrap()
}
