//! Shared fixtures for the benchmarks.

use kgdecay_core::{Interpolation, ModelSpec, PeriodicCoefficient};

pub const PERIOD: f64 = 1.0;

/// `b = 1 + 0.5 sin(2πt)`, `m = 1`.
pub fn sin_model() -> ModelSpec {
    let b = PeriodicCoefficient::sin_offset(1.0, 0.5, 0.0, PERIOD).expect("valid coefficient");
    ModelSpec::constant_mass(b, 1.0).expect("valid model")
}

/// Triangle between 0.2 and 1.0 given as 1024 linear samples, `m = 1`.
pub fn sampled_triangle_model() -> ModelSpec {
    let n = 1024;
    let values = (0..n)
        .map(|j| {
            let x = j as f64 / n as f64;
            let r = if x < 0.5 { 2.0 * x } else { 2.0 - 2.0 * x };
            0.2 + 0.8 * r
        })
        .collect();
    let b = PeriodicCoefficient::sampled(values, Interpolation::Linear, PERIOD)
        .expect("valid coefficient");
    ModelSpec::constant_mass(b, 1.0).expect("valid model")
}
