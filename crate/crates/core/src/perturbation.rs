//! Mass perturbations `m² = m₀² + ε·m₁(t)`: the admissible ε from the
//! contraction certificate, the Gronwall bound on `E_ε − E₀`, and a direct
//! scan of `‖M_εᵏ‖`.
//!
//! The contraction survives the perturbation at frequency ξ when
//!
//! ```text
//! (C_ε/δ₁)·e^{C_ε kT}·e^{(⟨ξ⟩_{m₀} + 2β)kT}·(1/c₁ − 1) < 1 − c₁,   C_ε = ε/⟨ξ⟩_{m₀},
//! ```
//!
//! which is equivalent to `C_ε kT < W(c₁ ln(1/c₁) e^{−(⟨ξ⟩_{m₀}+2β)kT})`.

use serde::Serialize;

use crate::coefficients::ModelSpec;
use crate::error::{Error, Result};
use crate::monodromy::{max_power_norm, ContractionCertificate};
use crate::parallel::Workers;

/// Strict margin for [`verify_perturbed_contraction`].
pub const PERTURBED_MARGIN: f64 = 1e-6;

/// Principal branch of the Lambert W function on `[0, ∞)`.
///
/// Halley iteration from `ln(1 + x)`; the result satisfies
/// `|W·e^W − x| ≤ 10⁻¹⁴·max(1, x)`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!(
            "Lambert W0 is evaluated on [0, inf), got {x}"
        )));
    }
    if x == 0.0 || x.is_infinite() {
        return Ok(x);
    }
    let mut w = x.ln_1p();
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let fp = ew * (w + 1.0);
        let step = f / (fp - (w + 2.0) * f / (2.0 * w + 2.0));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    Ok(w)
}

/// Everything the ε bound depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonInputs {
    pub m0: f64,
    pub k: usize,
    pub period: f64,
    pub c1: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub beta: f64,
}

/// The inequality evaluated at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonAudit {
    pub xi: f64,
    pub epsilon: f64,
    /// Left side over right side; the inequality holds iff `ratio < 1`.
    pub ratio: f64,
    pub holds: bool,
}

/// ε formula with a different β multiplier in the exponent, kept for
/// comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonVariant {
    pub beta_factor: f64,
    pub epsilon: f64,
    pub w_argument: f64,
    pub audit: Vec<EpsilonAudit>,
    pub sound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonBound {
    pub epsilon_max: f64,
    pub w_argument: f64,
    /// The W argument underflowed, so the bound says nothing.
    pub vacuous: bool,
    pub inputs: EpsilonInputs,
    /// Audit at ξ = 0 and ξ = N.
    pub audit: Vec<EpsilonAudit>,
    /// Same formula with `β` instead of `2β` in the exponent.
    pub single_beta_variant: EpsilonVariant,
}

fn inputs_of(cert: &ContractionCertificate, m0: f64) -> Result<EpsilonInputs> {
    if !(m0 > 0.0 && m0.is_finite()) {
        return Err(Error::Precondition(format!(
            "m0 must be positive, got {m0}"
        )));
    }
    if !(cert.c1 > 0.0 && cert.c1 < 1.0) || cert.k == 0 {
        return Err(Error::Precondition(
            "certificate needs 0 < c1 < 1 and k >= 1".into(),
        ));
    }
    Ok(EpsilonInputs {
        m0,
        k: cert.k,
        period: cert.period,
        c1: cert.c1,
        n: cert.n,
        beta: cert.beta,
    })
}

/// `ln` of `c₁ ln(1/c₁) e^{−(⟨ξ⟩_{m₀} + f·β)kT}`.
fn log_w_argument(inp: &EpsilonInputs, bracket: f64, beta_factor: f64) -> f64 {
    let kt = inp.k as f64 * inp.period;
    inp.c1.ln() + (1.0 / inp.c1).ln().ln() - (bracket + beta_factor * inp.beta) * kt
}

/// `(ln lhs − ln rhs)` of the inequality at frequency ξ.
fn log_ratio(inp: &EpsilonInputs, xi: f64, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        return f64::NEG_INFINITY;
    }
    let kt = inp.k as f64 * inp.period;
    let bracket = xi.hypot(inp.m0);
    let c_eps = epsilon / bracket;
    let delta1 = (1.0 / inp.c1).ln() / kt;
    let lhs = c_eps.ln() - delta1.ln()
        + c_eps * kt
        + (bracket + 2.0 * inp.beta) * kt
        + (1.0 / inp.c1 - 1.0).ln();
    lhs - (1.0 - inp.c1).ln()
}

fn audit(inp: &EpsilonInputs, xi: f64, epsilon: f64) -> EpsilonAudit {
    let lr = log_ratio(inp, xi, epsilon);
    EpsilonAudit {
        xi,
        epsilon,
        ratio: lr.exp(),
        holds: lr < 0.0,
    }
}

/// Evaluates the left side over the right side of the inequality at `xi`.
pub fn inequality_ratio(
    cert: &ContractionCertificate,
    m0: f64,
    xi: f64,
    epsilon: f64,
) -> Result<f64> {
    Ok(log_ratio(&inputs_of(cert, m0)?, xi, epsilon).exp())
}

/// The largest ε satisfying the inequality at this one frequency:
/// `⟨ξ⟩_{m₀}/(kT)·W(c₁ ln(1/c₁) e^{−(⟨ξ⟩_{m₀}+2β)kT})`.
pub fn epsilon_at_frequency(cert: &ContractionCertificate, m0: f64, xi: f64) -> Result<f64> {
    let inp = inputs_of(cert, m0)?;
    let bracket = xi.hypot(m0);
    let arg = log_w_argument(&inp, bracket, 2.0).exp();
    Ok(bracket / (inp.k as f64 * inp.period) * lambert_w0(arg)?)
}

fn variant(inp: &EpsilonInputs, beta_factor: f64) -> Result<EpsilonVariant> {
    let bracket_n = inp.n.hypot(inp.m0);
    let w_argument = log_w_argument(inp, bracket_n, beta_factor).exp();
    let epsilon = inp.m0 / (inp.k as f64 * inp.period) * lambert_w0(w_argument)?;
    let audit: Vec<EpsilonAudit> = [0.0, inp.n]
        .iter()
        .map(|&xi| audit(inp, xi, epsilon))
        .collect();
    let sound = audit.iter().all(|a| a.holds);
    Ok(EpsilonVariant {
        beta_factor,
        epsilon,
        w_argument,
        audit,
        sound,
    })
}

/// `ε_max = m₀/(kT)·W(c₁ ln(1/c₁) e^{−(⟨N⟩_{m₀}+2β)kT})`.
///
/// `m₀` is the smallest bracket and ⟨N⟩ the largest on `[0, N]`, so this
/// value satisfies the inequality at every `|ξ| ≤ N`.
pub fn epsilon_bound(cert: &ContractionCertificate, m0: f64) -> Result<EpsilonBound> {
    let inputs = inputs_of(cert, m0)?;
    let main = variant(&inputs, 2.0)?;
    let single_beta_variant = variant(&inputs, 1.0)?;
    Ok(EpsilonBound {
        epsilon_max: main.epsilon,
        w_argument: main.w_argument,
        vacuous: main.w_argument == 0.0 || main.epsilon == 0.0,
        inputs,
        audit: main.audit,
        single_beta_variant,
    })
}

/// Upper bound for `‖E_ε(t,s,ξ) − E₀(t,s,ξ)‖` from Duhamel and Gronwall:
///
/// ```text
/// C_ε · ∫_s^t ‖E₀(τ,s)‖ dτ · exp((C_ε + ⟨ξ⟩_{m₀})(t−s) + 2∫_s^t b)
/// ```
///
/// with `‖A_ε − A₀‖ ≤ C_ε = ε/⟨ξ⟩_{m₀}`, `‖A_ε‖ ≤ ⟨ξ⟩_{m₀} + C_ε + 2b` and
/// `‖E₀(τ,s)‖ ≤ min(1, e^{−δ(τ−s−L)})` from the certificate:
/// `(δ, L) = (δ₁, kT)` for `|ξ| ≤ N`, `(δ₀, T)` beyond.
pub fn gronwall_difference_bound(
    spec_eps: &ModelSpec,
    spec_0: &ModelSpec,
    cert: &ContractionCertificate,
    s: f64,
    t: f64,
    xi: f64,
) -> Result<f64> {
    if t < s || t.is_nan() || s.is_nan() {
        return Err(Error::Precondition(format!(
            "need t >= s, got s = {s}, t = {t}"
        )));
    }
    if spec_eps.b() != spec_0.b() || spec_eps.m0() != spec_0.m0() || !spec_0.is_constant_mass() {
        return Err(Error::Precondition(
            "the reference model must share b and m0 and have constant mass".into(),
        ));
    }
    let eps = spec_eps.epsilon();
    if eps == 0.0 {
        return Ok(0.0);
    }
    let w0 = spec_0.symbol_m0(xi);
    let c_eps = eps / w0;
    let (delta, lag) = if xi <= cert.n {
        (cert.delta1, cert.contraction_time())
    } else {
        (cert.delta0, cert.period)
    };
    let tau = t - s;
    let envelope = if tau <= lag {
        tau
    } else {
        lag + (1.0 - (-delta * (tau - lag)).exp()) / delta
    };
    let growth = (c_eps + w0) * tau + 2.0 * spec_0.b().integral(s, t);
    Ok(c_eps * envelope * growth.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbedContraction {
    pub ok: bool,
    pub worst: f64,
    pub worst_t: f64,
    pub worst_xi: f64,
}

/// Scans `‖M_ε(t,ξ)ᵏ‖` on the certificate grid; `ok` iff the maximum stays
/// below `1 − 10⁻⁶`. Large ε are reported, not rejected.
pub fn verify_perturbed_contraction(
    spec_eps: &ModelSpec,
    cert: &ContractionCertificate,
    tol: f64,
    workers: &Workers,
) -> Result<PerturbedContraction> {
    let worst = max_power_norm(
        spec_eps,
        cert.n,
        cert.k,
        &cert.contraction_grid(),
        tol,
        workers,
    )?;
    Ok(PerturbedContraction {
        ok: worst.value < 1.0 - PERTURBED_MARGIN,
        worst: worst.value,
        worst_t: worst.t,
        worst_xi: worst.xi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Mass, PeriodicCoefficient};
    use crate::monodromy::{
        assemble_certificate, CertificateTolerances, ContractionGrid, ContractionOptions,
    };
    use crate::propagator::propagate_difference;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Bisection on `w·e^w = x` over `[0, max(1, ln(1+x)+1)]`.
    fn w_by_bisection(x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, x.ln_1p().max(1.0) + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn cert_with(c1: f64, k: usize, n: f64, beta: f64) -> ContractionCertificate {
        let b = PeriodicCoefficient::constant(beta, 1.0).unwrap();
        let spec = ModelSpec::constant_mass(b, 1.0).unwrap();
        let opts = ContractionOptions::default();
        assemble_certificate(
            &spec,
            n,
            k,
            c1,
            opts.grid.into(),
            CertificateTolerances::from_options(&opts),
        )
        .unwrap()
    }

    #[test]
    fn lambert_examples() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        let w1 = lambert_w0(1.0).unwrap();
        assert!((w1 - w_by_bisection(1.0)).abs() < 1e-12);
        assert!((w1 - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!(matches!(lambert_w0(-1e-3), Err(Error::Domain(_))));
        assert!(lambert_w0(f64::NAN).is_err());
    }

    #[test]
    fn lambert_identity_on_log_grid() {
        let mut prev = -1.0;
        for i in 0..=100 {
            let x = 10f64.powf(-30.0 + 36.0 * i as f64 / 100.0);
            let w = lambert_w0(x).unwrap();
            let r = (w * w.exp() - x).abs();
            assert!(r <= 1e-14 * x.max(1.0), "x = {x:e}: residual {r:e}");
            assert!(w > prev);
            prev = w;
        }
    }

    #[test]
    fn degenerate_contraction_gives_zero() {
        let b = epsilon_bound(&cert_with(1.0 - 1e-15, 1, 2.0, 1.0), 1.0).unwrap();
        assert!(b.w_argument < 1e-14 && b.epsilon_max < 1e-14);
    }

    #[test]
    fn vacuous_when_argument_underflows() {
        let b = epsilon_bound(&cert_with(0.5, 64, 20.0, 1.0), 1.0).unwrap();
        assert!(b.vacuous);
        assert_eq!(b.epsilon_max, 0.0);
    }

    #[test]
    fn audit_passes_strictly() {
        let cert = cert_with(0.9, 1, 4.7, 1.0);
        let b = epsilon_bound(&cert, 1.0).unwrap();
        assert!(b.epsilon_max > 0.0);
        assert_eq!(b.audit.len(), 2);
        assert!(b.audit.iter().all(|a| a.holds && a.ratio < 1.0));
        // closed form
        let kt = 1.0;
        let w = lambert_w0(0.9 * (1.0f64 / 0.9).ln() * (-(4.7f64.hypot(1.0) + 2.0) * kt).exp())
            .unwrap();
        let rel = (b.epsilon_max - w / kt).abs() / b.epsilon_max;
        assert!(rel <= 1e-12, "relative gap {rel:e}");
    }

    #[test]
    fn single_beta_variant_is_larger() {
        let b = epsilon_bound(&cert_with(0.9, 2, 4.7, 1.0), 1.0).unwrap();
        assert!(b.single_beta_variant.epsilon > b.epsilon_max);
        assert!(!b.single_beta_variant.sound);
    }

    #[test]
    fn epsilon_decreases_with_beta() {
        let values: Vec<f64> = [0.5, 0.75, 1.0, 1.25]
            .iter()
            .map(|&beta| {
                epsilon_bound(&cert_with(0.9, 1, 4.7, beta), 1.0)
                    .unwrap()
                    .epsilon_max
            })
            .collect();
        for w in values.windows(2) {
            assert!(w[1] < w[0], "{values:?}");
        }
    }

    #[test]
    fn gronwall_zero_for_zero_epsilon() {
        let b = PeriodicCoefficient::sin_offset(1.0, 0.5, 0.0, 1.0).unwrap();
        let m1 = PeriodicCoefficient::sin_offset(0.0, 1.0, 0.0, 1.0).unwrap();
        let spec_eps = ModelSpec::new(
            b.clone(),
            Mass::Perturbed {
                m0: 1.0,
                epsilon: 0.0,
                m1,
            },
        )
        .unwrap();
        let spec_0 = ModelSpec::constant_mass(b, 1.0).unwrap();
        let cert = cert_with(0.92, 1, 6.97, 1.0);
        assert_eq!(
            gronwall_difference_bound(&spec_eps, &spec_0, &cert, 0.0, 3.0, 1.0).unwrap(),
            0.0
        );
        let (_, d) = propagate_difference(&spec_eps, &spec_0, 0.0, 3.0, 1.0, 1e-10).unwrap();
        assert_eq!(d.spectral_norm(), 0.0);
    }

    #[test]
    fn gronwall_dominates_measured_difference() {
        let b = PeriodicCoefficient::sin_offset(1.0, 0.5, 0.0, 1.0).unwrap();
        let m1 = PeriodicCoefficient::sin_offset(0.0, 1.0, 0.0, 1.0).unwrap();
        let spec_0 = ModelSpec::constant_mass(b.clone(), 1.0).unwrap();
        let cert = cert_with(0.92, 1, 6.97, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..12 {
            let eps = rng.gen_range(0.0..0.5);
            let spec_eps = ModelSpec::new(
                b.clone(),
                Mass::Perturbed {
                    m0: 1.0,
                    epsilon: eps,
                    m1: m1.clone(),
                },
            )
            .unwrap();
            let s = rng.gen_range(0.0..1.0);
            let t = s + rng.gen_range(0.0..3.0);
            let xi = rng.gen_range(0.0..10.0);
            let (_, d) = propagate_difference(&spec_eps, &spec_0, s, t, xi, 1e-11).unwrap();
            let bound = gronwall_difference_bound(&spec_eps, &spec_0, &cert, s, t, xi).unwrap();
            assert!(
                d.spectral_norm() <= bound,
                "{} > {bound}",
                d.spectral_norm()
            );
        }
    }

    #[test]
    fn gronwall_monotone_in_time_and_epsilon() {
        let b = PeriodicCoefficient::sin_offset(1.0, 0.5, 0.0, 1.0).unwrap();
        let m1 = PeriodicCoefficient::sin_offset(0.0, 1.0, 0.0, 1.0).unwrap();
        let spec_0 = ModelSpec::constant_mass(b.clone(), 1.0).unwrap();
        let cert = cert_with(0.92, 1, 6.97, 1.0);
        let spec_at = |eps: f64| {
            ModelSpec::new(
                b.clone(),
                Mass::Perturbed {
                    m0: 1.0,
                    epsilon: eps,
                    m1: m1.clone(),
                },
            )
            .unwrap()
        };
        for &xi in &[0.5, 8.0] {
            let mut prev = 0.0;
            for i in 1..20 {
                let v = gronwall_difference_bound(
                    &spec_at(0.1),
                    &spec_0,
                    &cert,
                    0.2,
                    0.2 + 0.25 * i as f64,
                    xi,
                )
                .unwrap();
                assert!(v > prev);
                prev = v;
            }
            let mut prev = 0.0;
            for i in 1..10 {
                let v = gronwall_difference_bound(
                    &spec_at(0.05 * i as f64),
                    &spec_0,
                    &cert,
                    0.0,
                    2.0,
                    xi,
                )
                .unwrap();
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn perturbed_scan_reduces_to_constant_mass() {
        let b = PeriodicCoefficient::sin_offset(1.0, 0.5, 0.0, 1.0).unwrap();
        let m1 = PeriodicCoefficient::sin_offset(0.0, 1.0, 0.0, 1.0).unwrap();
        let spec_0 = ModelSpec::constant_mass(b.clone(), 1.0).unwrap();
        let opts = ContractionOptions {
            grid: ContractionGrid {
                t_points: 8,
                xi_points: 16,
            },
            ..Default::default()
        };
        let w = Workers::serial();
        let r = crate::monodromy::find_contraction_k(&spec_0, 3.0, &opts, &w).unwrap();
        let cert = assemble_certificate(
            &spec_0,
            3.0,
            r.k,
            r.c1,
            opts.grid.into(),
            CertificateTolerances::from_options(&opts),
        )
        .unwrap();
        let spec_eps = ModelSpec::new(
            b.clone(),
            Mass::Perturbed {
                m0: 1.0,
                epsilon: 0.0,
                m1: m1.clone(),
            },
        )
        .unwrap();
        let v = verify_perturbed_contraction(&spec_eps, &cert, opts.tol, &w).unwrap();
        assert!((v.worst - r.c1).abs() < 1e-10);
        assert!(v.ok);
        let bound = epsilon_bound(&cert, 1.0).unwrap();
        let half = spec_eps.with_epsilon(bound.epsilon_max / 2.0).unwrap();
        assert!(
            verify_perturbed_contraction(&half, &cert, opts.tol, &w)
                .unwrap()
                .ok
        );
        // a large perturbation is reported, not rejected
        let big = spec_eps.with_epsilon(0.99).unwrap();
        assert!(verify_perturbed_contraction(&big, &cert, opts.tol, &w).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn per_frequency_bound_is_sharp(c1 in 0.5f64..0.99, k in 1usize..4, n in 1.0f64..8.0, beta in 0.2f64..1.5) {
            let cert = cert_with(c1, k, n, beta);
            let m0 = 1.0;
            let eps_n = epsilon_at_frequency(&cert, m0, n).unwrap();
            prop_assume!(eps_n > 0.0);
            let ratio = inequality_ratio(&cert, m0, n, eps_n).unwrap();
            prop_assert!((ratio - 1.0).abs() <= 1e-8, "ratio {ratio}");
            let b = epsilon_bound(&cert, m0).unwrap();
            prop_assert!(b.epsilon_max <= eps_n);
            for a in &b.audit {
                prop_assert!(a.holds);
            }
        }
    }
}
