//! Stage orchestration and the certificate file.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use kgdecay_core::certify::certified_prefactor;
use kgdecay_core::export::{write_decay, write_monodromy_scan, write_threshold_trace};
use kgdecay_core::monodromy::{CertificateTolerances, RefinementCheck};
use kgdecay_core::{
    assemble_certificate, decay_constants, epsilon_bound, find_contraction_k, find_threshold_n,
    gronwall_difference_bound, monodromy_at, propagate_difference, refinement_check,
    sup_norm_curve, verify_perturbed_contraction, window_bound_check, AssumptionReport,
    CoefficientDecl, ContractionCertificate, DecayConstants, DecayKind, EpsilonBound, ModelSpec,
    PerturbedContraction, RateFit, ThresholdResult, Verdict, WindowBoundCheck, Workers,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Epsilon, RunConfig, Stage};
use crate::error::{exit, CliError};
use crate::report::summary;

pub const SCHEMA_VERSION: u32 = 1;
/// Relative tolerance of the Liouville spot check.
pub const LIOUVILLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct ModelRecord {
    pub period: f64,
    pub beta: f64,
    pub m0: f64,
    pub b: CoefficientDecl,
    pub m1: Option<CoefficientDecl>,
    /// `null` until the epsilon stage fixes it when configured as `half_max`.
    pub epsilon: Option<f64>,
    pub epsilon_setting: String,
    pub assumptions: AssumptionReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSection {
    pub result: ThresholdResult,
    pub window_bound: WindowBoundCheck,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionSection {
    /// Where N came from: `threshold` or `config`.
    pub n_source: String,
    pub certificate: ContractionCertificate,
    pub rho_max: f64,
    pub worst_t: f64,
    pub worst_xi: f64,
    pub max_norm_by_power: Vec<f64>,
    pub refinement: RefinementCheck,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GronwallSample {
    pub s: f64,
    pub t: f64,
    pub xi: f64,
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbedSection {
    pub epsilon: f64,
    pub within_bound: bool,
    pub contraction: PerturbedContraction,
    pub window_bound: WindowBoundCheck,
    /// Certificate rebuilt from the perturbed `‖M_εᵏ‖`; its rate is σ.
    pub certificate: Option<ContractionCertificate>,
    pub sigma: Option<f64>,
    pub gronwall: Vec<GronwallSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonSection {
    pub bound: EpsilonBound,
    pub perturbed: Option<PerturbedSection>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecaySection {
    pub kind: DecayKind,
    pub t_end: f64,
    pub time_points: usize,
    pub certified_rate: f64,
    pub certified_prefactor: f64,
    pub max_sup_over_bound: f64,
    pub final_sup_norm: f64,
    pub fit: Option<RateFit>,
    pub rate_consistent: Option<bool>,
    pub verdict: Verdict,
    pub uniform_form_holds: bool,
    pub inner_envelope_holds: Option<bool>,
    pub outer_envelope_holds: Option<bool>,
    pub final_gamma: Option<f64>,
    pub failed_frequencies: Vec<f64>,
    pub constants: DecayConstants,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiouvilleSample {
    pub t: f64,
    pub xi: f64,
    pub det_re: f64,
    pub det_im: f64,
    pub expected: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiouvilleCheck {
    pub samples: Vec<LiouvilleSample>,
    pub max_relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateFile {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub model: ModelRecord,
    pub liouville: LiouvilleCheck,
    pub threshold: Option<ThresholdSection>,
    pub contraction: Option<ContractionSection>,
    pub epsilon: Option<EpsilonSection>,
    pub decay: Option<DecaySection>,
    pub all_passed: bool,
    pub exit_code: i32,
}

fn liouville_check(
    spec: &ModelSpec,
    xi_max: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
    tol: f64,
) -> Result<LiouvilleCheck, CliError> {
    let period = spec.period();
    let expected = (-2.0 * spec.beta() * period).exp();
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t = rng.gen_range(0.0..period);
        let xi = rng.gen_range(0.0..xi_max);
        let det = monodromy_at(spec, t, xi, tol)?.matrix.det();
        out.push(LiouvilleSample {
            t,
            xi,
            det_re: det.re,
            det_im: det.im,
            expected,
            relative_error: (det - expected).norm() / expected,
        });
    }
    let max_relative_error = out.iter().map(|s| s.relative_error).fold(0.0, f64::max);
    Ok(LiouvilleCheck {
        samples: out,
        max_relative_error,
        passed: max_relative_error <= LIOUVILLE_TOL,
    })
}

fn gronwall_samples(
    spec_eps: &ModelSpec,
    spec_0: &ModelSpec,
    cert: &ContractionCertificate,
    samples: usize,
    rng: &mut ChaCha8Rng,
    tol: f64,
) -> Result<Vec<GronwallSample>, CliError> {
    let period = spec_0.period();
    (0..samples)
        .map(|_| {
            let s = rng.gen_range(0.0..period);
            let t = s + rng.gen_range(0.0..3.0 * period);
            let xi = rng.gen_range(0.0..2.0 * cert.n);
            let (_, diff) = propagate_difference(spec_eps, spec_0, s, t, xi, tol)?;
            let measured = diff.spectral_norm();
            let bound = gronwall_difference_bound(spec_eps, spec_0, cert, s, t, xi)?;
            Ok(GronwallSample {
                s,
                t,
                xi,
                measured,
                bound,
                holds: measured <= bound,
            })
        })
        .collect()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// Runs the requested stages and writes every artefact into
/// `config.output_dir`. Returns the certificate; its `exit_code` is the
/// process status for a run that did not error.
pub fn run(config: &RunConfig, workers: &Workers) -> Result<CertificateFile, CliError> {
    let spec = config.build_model()?;
    let base = spec.unperturbed()?;
    let tol = config.contraction.tol;
    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Output(format!("{}: {e}", out_dir.display())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut threshold = None;
    let mut n = config.threshold_n;
    if config.has(Stage::Threshold) {
        let result = find_threshold_n(&spec, &config.threshold, workers)?;
        write_threshold_trace(create(out_dir, "threshold_trace.csv")?, &result.trace)?;
        let window_bound = window_bound_check(&spec, result.n, &config.threshold, tol, workers)?;
        n = Some(result.n);
        threshold = Some(ThresholdSection {
            passed: window_bound.passed,
            result,
            window_bound,
        });
    }

    let liouville = liouville_check(
        &spec,
        2.0 * n.unwrap_or(10.0),
        config.spot_checks,
        &mut rng,
        tol,
    )?;

    let mut contraction = None;
    let mut cert = None;
    if config.has(Stage::Contraction) {
        let n = n.expect("dependencies are checked at load");
        let r = find_contraction_k(&base, n, &config.contraction, workers)?;
        write_monodromy_scan(create(out_dir, "monodromy_scan.csv")?, &r.samples)?;
        let refinement = refinement_check(&base, n, r.k, r.c1, &config.contraction, workers)?;
        let c = assemble_certificate(
            &base,
            n,
            r.k,
            r.c1,
            config.contraction.grid.into(),
            CertificateTolerances::from_options(&config.contraction),
        )?;
        contraction = Some(ContractionSection {
            n_source: if config.has(Stage::Threshold) {
                "threshold"
            } else {
                "config"
            }
            .into(),
            certificate: c.clone(),
            rho_max: r.rho_max,
            worst_t: r.worst_t,
            worst_xi: r.worst_xi,
            max_norm_by_power: r.max_norm_by_power,
            passed: refinement.passed,
            refinement,
        });
        cert = Some(c);
    }

    let mut epsilon = None;
    let mut applied_epsilon = match config.epsilon {
        Some(Epsilon::Value(v)) => Some(v),
        _ => None,
    };
    let mut decay_model = None;
    if config.has(Stage::Epsilon) {
        let c = cert.as_ref().expect("dependencies are checked at load");
        let bound = epsilon_bound(c, config.model.m0)?;
        let eps = match config.epsilon {
            Some(Epsilon::Value(v)) => Some(v),
            Some(Epsilon::HalfMax) => Some(0.5 * bound.epsilon_max),
            None => None,
        };
        applied_epsilon = eps;
        let perturbed = match eps {
            Some(eps) => {
                let spec_eps = config.perturbed_model(eps)?.expect("m1 is present");
                let contraction = verify_perturbed_contraction(&spec_eps, c, tol, workers)?;
                let window_bound =
                    window_bound_check(&spec_eps, c.n, &config.threshold, tol, workers)?;
                let gronwall =
                    gronwall_samples(&spec_eps, &base, c, config.spot_checks, &mut rng, tol)?;
                let perturbed_cert = if contraction.worst > 0.0 && contraction.worst < 1.0 {
                    Some(assemble_certificate(
                        &spec_eps,
                        c.n,
                        c.k,
                        contraction.worst,
                        c.grids,
                        c.tolerances,
                    )?)
                } else {
                    None
                };
                if contraction.ok && window_bound.passed {
                    decay_model = perturbed_cert.clone().map(|pc| (spec_eps, pc));
                }
                Some(PerturbedSection {
                    epsilon: eps,
                    within_bound: eps <= bound.epsilon_max,
                    sigma: perturbed_cert.as_ref().map(|pc| pc.rate()),
                    certificate: perturbed_cert,
                    contraction,
                    window_bound,
                    gronwall,
                })
            }
            None => None,
        };
        let audit_ok = bound.audit.iter().all(|a| a.holds);
        let perturbed_ok = perturbed.as_ref().is_none_or(|p| {
            p.contraction.ok && p.window_bound.passed && p.gronwall.iter().all(|g| g.holds)
        });
        epsilon = Some(EpsilonSection {
            passed: audit_ok && perturbed_ok,
            bound,
            perturbed,
        });
    }

    let mut decay = None;
    if config.has(Stage::Decay) {
        let c = cert.as_ref().expect("dependencies are checked at load");
        let (model, used, kind) = match &decay_model {
            Some((m, pc)) => (m, pc, DecayKind::PerturbedMass),
            None => (&base, c, DecayKind::ConstantMass),
        };
        let t_end = (config.decay_periods * model.period()).max(10.0 * used.contraction_time());
        let report = sup_norm_curve(model, used, t_end, &config.decay, tol, workers)?;
        write_decay(create(out_dir, "decay.csv")?, &report)?;
        let constants = decay_constants(used, kind, &report);
        let max_sup_over_bound = report
            .sup_norm_curve
            .iter()
            .zip(&report.bound_curve)
            .map(|(s, b)| s / b)
            .fold(0.0, f64::max);
        let passed = report.verdict == Verdict::Pass && report.rate_consistent != Some(false);
        decay = Some(DecaySection {
            kind,
            t_end,
            time_points: report.time_grid.len(),
            certified_rate: report.certified_rate,
            certified_prefactor: certified_prefactor(used),
            max_sup_over_bound,
            final_sup_norm: *report.sup_norm_curve.last().unwrap_or(&f64::NAN),
            fit: report.fit,
            rate_consistent: report.rate_consistent,
            verdict: report.verdict,
            uniform_form_holds: report.uniform_form_holds,
            inner_envelope_holds: report.inner_envelope_holds,
            outer_envelope_holds: report.outer_envelope_holds,
            final_gamma: report.gamma_curve.as_ref().and_then(|g| g.last().copied()),
            failed_frequencies: report.failures.iter().map(|f| f.xi).collect(),
            constants,
            passed,
        });
    }

    let flags = [
        Some(liouville.passed),
        threshold.as_ref().map(|s| s.passed),
        contraction.as_ref().map(|s| s.passed),
        epsilon.as_ref().map(|s| s.passed),
        decay.as_ref().map(|s| s.passed),
    ];
    let all_passed = flags.iter().flatten().all(|p| *p);
    let exit_code = if all_passed {
        exit::OK
    } else if decay
        .as_ref()
        .is_some_and(|d| d.verdict == Verdict::Inconclusive)
    {
        exit::NUMERICAL
    } else {
        exit::CERTIFICATE
    };

    let model = ModelRecord {
        period: spec.period(),
        beta: spec.beta(),
        m0: config.model.m0,
        b: config.model.b.clone(),
        m1: config.model.m1.clone(),
        epsilon: applied_epsilon,
        epsilon_setting: match config.epsilon {
            None => "none".into(),
            Some(Epsilon::Value(_)) => "value".into(),
            Some(Epsilon::HalfMax) => "half_max".into(),
        },
        assumptions: spec.assumptions().clone(),
    };
    let file = CertificateFile {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        stages: config.stages.iter().copied().collect(),
        model,
        liouville,
        threshold,
        contraction,
        epsilon,
        decay,
        all_passed,
        exit_code,
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Output(format!("certificate serialization: {e}")))?;
    write_text(out_dir, "certificate.json", &(json + "\n"))?;
    write_text(out_dir, "summary.txt", &summary(&file))?;
    Ok(file)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}
