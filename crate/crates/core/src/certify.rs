//! Uniform decay curves, rate fits and the stated decay constants.
//!
//! For each ξ the energy propagator is rebuilt from one period:
//! `E(ℓT + s, 0) = E(s, 0)·M(0)ˡ`, so the whole curve costs one sweep over
//! `[0, T]` per frequency.

use serde::Serialize;

use crate::coefficients::ModelSpec;
use crate::error::{Error, Result};
use crate::monodromy::{linspace, ContractionCertificate};
use crate::parallel::Workers;
use crate::propagator::{propagate_through, Mat2C};
use crate::quadrature::integrate_piecewise;

/// Relative slack on the bound comparisons.
pub const BOUND_SLACK: f64 = 1e-3;
/// A fitted rate below this fraction of the certified one is flagged.
pub const RATE_FRACTION: f64 = 0.9;
/// Fewest points a rate fit accepts.
pub const MIN_FIT_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayGrid {
    /// Time samples per period; the curve is sampled at `qT/steps`.
    pub steps_per_period: usize,
    /// Points on `[0, N]`.
    pub inner_xi_points: usize,
    /// Points on `[N, outer_factor·N]`.
    pub outer_xi_points: usize,
    pub outer_factor: f64,
}

impl Default for DecayGrid {
    fn default() -> Self {
        Self {
            steps_per_period: 4,
            inner_xi_points: 256,
            outer_xi_points: 64,
            outer_factor: 4.0,
        }
    }
}

impl DecayGrid {
    pub fn xi_grids(&self, n: f64) -> (Vec<f64>, Vec<f64>) {
        (
            linspace(0.0, n, self.inner_xi_points),
            linspace(n, self.outer_factor * n, self.outer_xi_points),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyFailure {
    pub xi: f64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    /// RMS residual of `ln v` about the fitted line.
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub grid: DecayGrid,
    pub time_grid: Vec<f64>,
    pub sup_norm_curve: Vec<f64>,
    pub inner_curve: Vec<f64>,
    pub outer_curve: Vec<f64>,
    /// `C·e^{−δ(t−kT)}`.
    pub bound_curve: Vec<f64>,
    pub certified_rate: f64,
    /// `C = max(e^{δ₀T}, e^{δ₁kT})`.
    pub certified_prefactor: f64,
    pub fit: Option<RateFit>,
    /// Fitted rate at least `0.9·δ`; `None` when no fit was possible.
    pub rate_consistent: Option<bool>,
    pub verdict: Verdict,
    /// `sup ≤ C·e^{−δt}` everywhere.
    pub uniform_form_holds: bool,
    /// Regime envelopes, meaningful only for constant mass:
    /// `min(1, e^{−δ₁(t−kT)})` on `[0, N]` and `min(1, e^{−δ₀(t−T)})` beyond.
    pub inner_envelope_holds: Option<bool>,
    pub outer_envelope_holds: Option<bool>,
    /// `exp(−∫₀ᵗ m²/b)` when `b > 0`.
    pub gamma_curve: Option<Vec<f64>>,
    pub failures: Vec<FrequencyFailure>,
}

/// `max(e^{δ₀T}, e^{δ₁kT})`.
pub fn certified_prefactor(cert: &ContractionCertificate) -> f64 {
    (cert.delta0 * cert.period)
        .max(cert.delta1 * cert.contraction_time())
        .exp()
}

/// `‖E(t_q, 0, ξ)‖` for `t_q = qT/steps`, `q = 0..=q_max`.
fn frequency_curve(
    spec: &ModelSpec,
    xi: f64,
    steps: usize,
    q_max: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let period = spec.period();
    let stops: Vec<f64> = (0..=steps)
        .map(|j| j as f64 * period / steps as f64)
        .collect();
    let within = propagate_through(spec, 0.0, &stops, xi, tol)?;
    let monodromy = within[steps];
    let mut out = Vec::with_capacity(q_max + 1);
    let mut power = Mat2C::IDENTITY;
    let mut q = 0;
    'periods: loop {
        for e in &within[..steps] {
            if q > q_max {
                break 'periods;
            }
            out.push((*e * power).spectral_norm());
            q += 1;
        }
        power = monodromy * power;
    }
    Ok(out)
}

fn fold_max(curves: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; len];
    for c in curves {
        for (o, v) in out.iter_mut().zip(c) {
            *o = o.max(*v);
        }
    }
    out
}

fn within(values: &[f64], bound: impl Fn(usize) -> f64) -> bool {
    values
        .iter()
        .enumerate()
        .all(|(i, v)| *v <= bound(i) * (1.0 + BOUND_SLACK))
}

/// Sup-in-ξ energy norm on `[0, t_end]` against the certified envelope.
///
/// `t_end` must cover at least `10kT`. Frequencies whose integration fails are
/// listed and make the verdict inconclusive.
pub fn sup_norm_curve(
    spec: &ModelSpec,
    cert: &ContractionCertificate,
    t_end: f64,
    grid: &DecayGrid,
    tol: f64,
    workers: &Workers,
) -> Result<DecayReport> {
    let kt = cert.contraction_time();
    if !(t_end.is_finite() && t_end >= 10.0 * kt) {
        return Err(Error::Precondition(format!(
            "decay horizon {t_end} is shorter than 10kT = {}",
            10.0 * kt
        )));
    }
    if grid.steps_per_period == 0 || grid.inner_xi_points < 2 || grid.outer_xi_points < 2 {
        return Err(Error::Precondition("decay grid is too coarse".into()));
    }
    let period = spec.period();
    let dt = period / grid.steps_per_period as f64;
    let q_max = (t_end / dt + 1e-9).floor() as usize;
    let time_grid: Vec<f64> = (0..=q_max).map(|q| q as f64 * dt).collect();

    let (inner_xi, outer_xi) = grid.xi_grids(cert.n);
    let run = |xis: &[f64]| {
        workers.map(xis, |&xi| {
            frequency_curve(spec, xi, grid.steps_per_period, q_max, tol)
        })
    };
    let mut failures = Vec::new();
    let mut collect = |xis: &[f64], results: Vec<Result<Vec<f64>>>| {
        let mut ok = Vec::new();
        for (xi, r) in xis.iter().zip(results) {
            match r {
                Ok(c) => ok.push(c),
                Err(e) => failures.push(FrequencyFailure {
                    xi: *xi,
                    message: e.to_string(),
                }),
            }
        }
        ok
    };
    let inner = collect(&inner_xi, run(&inner_xi));
    let outer = collect(&outer_xi, run(&outer_xi));
    let len = time_grid.len();
    let inner_curve = fold_max(&inner, len);
    let outer_curve = fold_max(&outer, len);
    let sup: Vec<f64> = inner_curve
        .iter()
        .zip(&outer_curve)
        .map(|(a, b)| a.max(*b))
        .collect();

    let rate = cert.rate();
    let prefactor = certified_prefactor(cert);
    let bound_curve: Vec<f64> = time_grid
        .iter()
        .map(|t| prefactor * (-rate * (t - kt)).exp())
        .collect();
    let uniform_form_holds = within(&sup, |i| prefactor * (-rate * time_grid[i]).exp());
    let verdict = if !failures.is_empty() {
        Verdict::Inconclusive
    } else if within(&sup, |i| bound_curve[i]) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let (inner_envelope_holds, outer_envelope_holds) = if spec.is_constant_mass() {
        (
            Some(within(&inner_curve, |i| {
                (-cert.delta1 * (time_grid[i] - kt)).exp().min(1.0)
            })),
            Some(within(&outer_curve, |i| {
                (-cert.delta0 * (time_grid[i] - period)).exp().min(1.0)
            })),
        )
    } else {
        (None, None)
    };

    let fit = fit_rate(&time_grid, &sup, 2.0 * kt).ok();
    let rate_consistent = fit.map(|f| f.rate >= RATE_FRACTION * rate);
    let gamma_curve = if spec.assumptions().b_strictly_positive {
        Some(gamma_curve(spec, &time_grid)?)
    } else {
        None
    };
    Ok(DecayReport {
        grid: *grid,
        time_grid,
        sup_norm_curve: sup,
        inner_curve,
        outer_curve,
        bound_curve,
        certified_rate: rate,
        certified_prefactor: prefactor,
        fit,
        rate_consistent,
        verdict,
        uniform_form_holds,
        inner_envelope_holds,
        outer_envelope_holds,
        gamma_curve,
        failures,
    })
}

/// Least-squares fit of `ln v = a − r·t` over `t ≥ burn_in`.
pub fn fit_rate(times: &[f64], values: &[f64], burn_in: f64) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::Fit("times and values differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= burn_in)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} points after burn-in {burn_in}, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Fit(format!("value {v} at t = {t} is not positive")));
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (t, v) in &pts {
        let dt = t - t_mean;
        stt += dt * dt;
        sty += dt * (v.ln() - y_mean);
    }
    if stt == 0.0 {
        return Err(Error::Fit("all fit times coincide".into()));
    }
    let slope = sty / stt;
    let intercept = y_mean - slope * t_mean;
    let residual = (pts
        .iter()
        .map(|(t, v)| (v.ln() - intercept - slope * t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit {
        rate: -slope,
        intercept,
        residual,
        points: pts.len(),
    })
}

fn check_positive_b(spec: &ModelSpec) -> Result<()> {
    if spec.assumptions().b_strictly_positive {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "gamma needs b > 0; minimum is {}",
            spec.assumptions().b_min
        )))
    }
}

fn mass_over_b(spec: &ModelSpec, a: f64, b: f64) -> f64 {
    integrate_piecewise(
        |t, anchor| spec.mass_squared_anchored(t, anchor) / spec.b().eval_anchored(t, anchor),
        a,
        b,
        &spec.breakpoints(),
        1e-13,
    )
}

/// `γ(t) = exp(−∫₀ᵗ m²/b)`, the effective-mass decay factor.
pub fn gamma_of(spec: &ModelSpec, t: f64) -> Result<f64> {
    Ok(gamma_curve(spec, &[t])?[0])
}

/// [`gamma_of`] on a list of times, reusing the one-period integral.
pub fn gamma_curve(spec: &ModelSpec, times: &[f64]) -> Result<Vec<f64>> {
    check_positive_b(spec)?;
    let period = spec.period();
    let per_period = mass_over_b(spec, 0.0, period);
    times
        .iter()
        .map(|&t| {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Domain(format!("gamma needs finite t >= 0, got {t}")));
            }
            let whole = (t / period).floor();
            let rest = t - whole * period;
            Ok((-(whole * per_period + mass_over_b(spec, 0.0, rest))).exp())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    /// Constant mass; the rate is δ.
    ConstantMass,
    /// Perturbed mass; the rate σ comes from the perturbed contraction.
    PerturbedMass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayConstants {
    pub kind: DecayKind,
    pub rate_symbol: String,
    pub rate: f64,
    pub prefactor: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub inequalities: Vec<String>,
    /// The decay curve stayed under `C·e^{−rate·t}`.
    pub observed_consistent: bool,
}

/// The three energy-space decay estimates with numbers substituted.
pub fn decay_constants(
    cert: &ContractionCertificate,
    kind: DecayKind,
    report: &DecayReport,
) -> DecayConstants {
    let rate = cert.rate();
    let prefactor = certified_prefactor(cert);
    let symbol = match kind {
        DecayKind::ConstantMass => "δ",
        DecayKind::PerturbedMass => "σ",
    };
    let lead = format!("{prefactor:.6e}·e^(-{rate:.6e}·t)");
    let inequalities = vec![
        format!("‖u(t)‖_L2 ≤ {lead}·(‖u0‖_L2 + ‖u1‖_H-1)"),
        format!("‖∇u(t)‖_L2 ≤ {lead}·(‖u0‖_H1 + ‖u1‖_L2)"),
        format!("‖u_t(t)‖_L2 ≤ {lead}·(‖u0‖_H1 + ‖u1‖_L2)"),
    ];
    DecayConstants {
        kind,
        rate_symbol: symbol.into(),
        rate,
        prefactor,
        delta0: cert.delta0,
        delta1: cert.delta1,
        inequalities,
        observed_consistent: report.uniform_form_holds,
    }
}
