//! End-to-end use of the public API on reduced grids.

use kgdecay_core::monodromy::{assemble_certificate, CertificateTolerances};
use kgdecay_core::{
    decay_constants, epsilon_bound, find_contraction_k, find_threshold_n, sup_norm_curve,
    verify_perturbed_contraction, window_bound_check, ContractionGrid, ContractionOptions,
    DecayGrid, DecayKind, Mass, ModelSpec, PeriodicCoefficient, ThresholdOptions, Verdict, Workers,
    DEFAULT_TOL,
};

#[test]
fn square_wave_certificate_end_to_end() {
    let b = PeriodicCoefficient::square(0.4, 1.2, 0.3, 2.0).unwrap();
    let spec = ModelSpec::constant_mass(b.clone(), 0.8).unwrap();
    let workers = Workers::serial();
    let topts = ThresholdOptions {
        t_points: 16,
        xi_points: 24,
        ..Default::default()
    };
    let th = find_threshold_n(&spec, &topts, &workers).unwrap();
    assert!(th.n > 0.0 && th.sup_value < th.target);
    assert!(
        window_bound_check(&spec, th.n, &topts, DEFAULT_TOL, &workers)
            .unwrap()
            .passed
    );

    let copts = ContractionOptions {
        grid: ContractionGrid {
            t_points: 8,
            xi_points: 32,
        },
        ..Default::default()
    };
    let r = find_contraction_k(&spec, th.n, &copts, &workers).unwrap();
    let cert = assemble_certificate(
        &spec,
        th.n,
        r.k,
        r.c1,
        copts.grid.into(),
        CertificateTolerances::from_options(&copts),
    )
    .unwrap();
    assert!((cert.delta0 - 0.5 * spec.beta()).abs() < 1e-14);
    assert!(cert.c1 < 1.0);

    let bound = epsilon_bound(&cert, 0.8).unwrap();
    assert!(bound.epsilon_max > 0.0 && bound.audit.iter().all(|a| a.holds));
    let m1 = PeriodicCoefficient::triangle(-1.0, 1.0, 2.0).unwrap();
    let spec_eps = ModelSpec::new(
        b,
        Mass::Perturbed {
            m0: 0.8,
            epsilon: bound.epsilon_max,
            m1,
        },
    )
    .unwrap();
    assert!(
        verify_perturbed_contraction(&spec_eps, &cert, DEFAULT_TOL, &workers)
            .unwrap()
            .ok
    );

    let grid = DecayGrid {
        inner_xi_points: 24,
        outer_xi_points: 8,
        ..Default::default()
    };
    let t_end = (20.0 * spec.period()).max(10.0 * cert.contraction_time());
    let report = sup_norm_curve(&spec, &cert, t_end, &grid, DEFAULT_TOL, &workers).unwrap();
    assert_eq!(report.verdict, Verdict::Pass);
    assert!(report.uniform_form_holds);
    let tc = decay_constants(&cert, DecayKind::ConstantMass, &report);
    assert!(tc.observed_consistent);
    assert!((tc.rate - cert.rate()).abs() < 1e-15);
}

#[test]
fn certificate_serializes_with_stable_names() {
    let spec =
        ModelSpec::constant_mass(PeriodicCoefficient::constant(1.0, 1.0).unwrap(), 1.0).unwrap();
    let opts = ContractionOptions::default();
    let cert = assemble_certificate(
        &spec,
        4.69,
        1,
        0.9,
        opts.grid.into(),
        CertificateTolerances::from_options(&opts),
    )
    .unwrap();
    assert!((cert.delta0 - 0.5).abs() < 1e-15);
    assert!((cert.c - 1.0 / 0.9).abs() < 1e-12);
    assert_eq!(cert.contraction_grid(), opts.grid);
}
