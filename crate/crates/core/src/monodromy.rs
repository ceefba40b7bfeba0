//! Monodromy matrices `M(t, ξ) = E(t + T, t, ξ)`: spectra, spectral radius
//! scans and the search for a uniform contraction power on `|ξ| ≤ N`.

use serde::{Deserialize, Serialize};

use crate::coefficients::ModelSpec;
use crate::error::{Error, Result};
use crate::parallel::Workers;
use crate::propagator::{propagate, propagate_through, Mat2C, C64};

/// Discriminants below this magnitude are treated as a double root.
pub const DEGENERATE_DISCRIMINANT: f64 = 1e-10;
/// A spectral radius at or above `1 − RADIUS_GAP` blocks certification.
pub const RADIUS_GAP: f64 = 1e-9;
/// Required gap below 1 for `max ‖Mᵏ‖`.
pub const CONTRACTION_MARGIN: f64 = 1e-3;
pub const DEFAULT_K_MAX: usize = 64;
/// Largest accepted change of `c1` when the grid is doubled.
pub const REFINEMENT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenClass {
    ComplexConjugatePair,
    RealPair,
}

impl EigenClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            EigenClass::ComplexConjugatePair => "complex_conjugate_pair",
            EigenClass::RealPair => "real_pair",
        }
    }
}

/// Classifies by the discriminant `tr² − 4 det` of the characteristic
/// polynomial. The monodromy is similar to a real matrix, so the
/// discriminant is real up to rounding.
pub fn classify(m: &Mat2C) -> EigenClass {
    let tr = m.trace();
    let disc = tr * tr - m.det() * 4.0;
    if disc.norm() <= DEGENERATE_DISCRIMINANT || disc.re >= 0.0 {
        EigenClass::RealPair
    } else {
        EigenClass::ComplexConjugatePair
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonodromySample {
    pub t: f64,
    pub xi: f64,
    pub matrix: Mat2C,
    pub eigenvalues: (C64, C64),
    pub spectral_radius: f64,
    pub norm: f64,
    pub class: EigenClass,
}

impl MonodromySample {
    pub fn new(t: f64, xi: f64, matrix: Mat2C) -> Self {
        let eigenvalues = matrix.eigenvalues();
        Self {
            t,
            xi,
            matrix,
            eigenvalues,
            spectral_radius: eigenvalues.0.norm().max(eigenvalues.1.norm()),
            norm: matrix.spectral_norm(),
            class: classify(&matrix),
        }
    }
}

/// `M(t, ξ)` by direct propagation over `[t, t + T]`.
pub fn monodromy_direct(spec: &ModelSpec, t: f64, xi: f64, tol: f64) -> Result<Mat2C> {
    Ok(propagate(spec, t, t + spec.period(), xi, tol)?.matrix)
}

/// The monodromy family at one frequency on a time grid in `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyFamily {
    pub xi: f64,
    /// `M(0, ξ)`.
    pub base: Mat2C,
    pub times: Vec<f64>,
    /// `E(tᵢ, 0, ξ)`.
    pub propagators: Vec<Mat2C>,
    /// `M(tᵢ, ξ) = E(tᵢ,0)·M(0)·E(tᵢ,0)⁻¹`.
    pub matrices: Vec<Mat2C>,
}

/// One forward sweep over `[0, T]` with checkpoints at `times` (ascending,
/// inside `[0, T]`); every `M(tᵢ)` then follows by similarity.
pub fn monodromy_family(
    spec: &ModelSpec,
    xi: f64,
    times: &[f64],
    tol: f64,
) -> Result<MonodromyFamily> {
    let period = spec.period();
    if times.iter().any(|&t| !(0.0..=period).contains(&t)) {
        return Err(Error::Precondition(format!(
            "monodromy times must lie in [0, {period}]"
        )));
    }
    let mut stops = times.to_vec();
    stops.push(period);
    let sweep = propagate_through(spec, 0.0, &stops, xi, tol)?;
    let base = sweep[times.len()];
    let propagators = sweep[..times.len()].to_vec();
    let matrices = propagators
        .iter()
        .zip(times)
        .map(|(e, &t)| {
            let inv = e.inverse().ok_or(Error::Integration {
                time: t,
                reason: "singular fundamental matrix".into(),
            })?;
            Ok(*e * base * inv)
        })
        .collect::<Result<_>>()?;
    Ok(MonodromyFamily {
        xi,
        base,
        times: times.to_vec(),
        propagators,
        matrices,
    })
}

/// `M(t, ξ)` and its spectral data for `t ∈ [0, T]`.
pub fn monodromy_at(spec: &ModelSpec, t: f64, xi: f64, tol: f64) -> Result<MonodromySample> {
    let family = monodromy_family(spec, xi, &[t], tol)?;
    Ok(MonodromySample::new(t, xi, family.matrices[0]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusScan {
    pub xi: Vec<f64>,
    pub rho: Vec<f64>,
    pub class: Vec<EigenClass>,
    /// Frequencies with `ρ ≥ 1 − RADIUS_GAP`.
    pub blockers: Vec<f64>,
}

impl RadiusScan {
    pub fn max_rho(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }
}

fn require_constant_positive_mass(spec: &ModelSpec) -> Result<()> {
    if !spec.is_constant_mass() {
        return Err(Error::Precondition(
            "a constant-mass model is required".into(),
        ));
    }
    if spec.m0() <= 0.0 {
        return Err(Error::Precondition(
            "m0 > 0 is required: with m0 = 0 the zero frequency has no decay".into(),
        ));
    }
    Ok(())
}

/// `ρ(M(0, ξ))` over `xi_grid` for a constant-mass model with `m0 > 0`.
pub fn spectral_radius_scan(
    spec: &ModelSpec,
    xi_grid: &[f64],
    tol: f64,
    workers: &Workers,
) -> Result<RadiusScan> {
    require_constant_positive_mass(spec)?;
    let samples = workers.map(xi_grid, |&xi| {
        monodromy_direct(spec, 0.0, xi, tol).map(|m| MonodromySample::new(0.0, xi, m))
    });
    let samples: Vec<MonodromySample> = samples.into_iter().collect::<Result<_>>()?;
    Ok(RadiusScan {
        xi: xi_grid.to_vec(),
        rho: samples.iter().map(|s| s.spectral_radius).collect(),
        class: samples.iter().map(|s| s.class).collect(),
        blockers: samples
            .iter()
            .filter(|s| s.spectral_radius >= 1.0 - RADIUS_GAP)
            .map(|s| s.xi)
            .collect(),
    })
}

/// Uniform `(t, ξ)` grid on `[0, T) × [0, N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractionGrid {
    pub t_points: usize,
    pub xi_points: usize,
}

impl Default for ContractionGrid {
    fn default() -> Self {
        Self {
            t_points: 64,
            xi_points: 256,
        }
    }
}

impl ContractionGrid {
    /// `tᵢ = i·T/t_points`; the endpoint T is omitted since M(T) = M(0).
    pub fn t_grid(&self, period: f64) -> Vec<f64> {
        (0..self.t_points)
            .map(|i| i as f64 * period / self.t_points as f64)
            .collect()
    }

    pub fn xi_grid(&self, n: f64) -> Vec<f64> {
        linspace(0.0, n, self.xi_points)
    }

    /// The nested refinement: every old node is kept.
    pub fn doubled(&self) -> Self {
        Self {
            t_points: 2 * self.t_points,
            xi_points: 2 * self.xi_points - 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t_points < 1 || self.xi_points < 2 {
            return Err(Error::Precondition(
                "contraction grid needs at least 1 time and 2 frequency points".into(),
            ));
        }
        Ok(())
    }
}

/// `n` evenly spaced points from `a` to `b` inclusive (`n = 1` gives `[a]`).
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { b } else { a + i as f64 * h })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionOptions {
    pub grid: ContractionGrid,
    pub k_max: usize,
    pub margin: f64,
    pub tol: f64,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        Self {
            grid: ContractionGrid::default(),
            k_max: DEFAULT_K_MAX,
            margin: CONTRACTION_MARGIN,
            tol: crate::propagator::DEFAULT_TOL,
        }
    }
}

/// Location of the largest power norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerMax {
    pub value: f64,
    pub t: f64,
    pub xi: f64,
}

impl PowerMax {
    const NONE: PowerMax = PowerMax {
        value: f64::NEG_INFINITY,
        t: f64::NAN,
        xi: f64::NAN,
    };

    fn merge(self, other: PowerMax) -> PowerMax {
        // ties keep the earlier grid point, so the result is order-stable
        if other.value > self.value {
            other
        } else {
            self
        }
    }
}

struct XiScan {
    samples: Vec<MonodromySample>,
    /// `max_t ‖M(t)ᵏ‖` for k = 1..=k_max.
    by_power: Vec<PowerMax>,
}

fn scan_frequency(
    spec: &ModelSpec,
    xi: f64,
    t_grid: &[f64],
    k_max: usize,
    tol: f64,
) -> Result<XiScan> {
    let family = monodromy_family(spec, xi, t_grid, tol)?;
    let mut by_power = vec![PowerMax::NONE; k_max];
    for (&t, m) in t_grid.iter().zip(&family.matrices) {
        let mut power = *m;
        for slot in by_power.iter_mut() {
            *slot = slot.merge(PowerMax {
                value: power.spectral_norm(),
                t,
                xi,
            });
            power = power * *m;
        }
    }
    let samples = t_grid
        .iter()
        .zip(&family.matrices)
        .map(|(&t, m)| MonodromySample::new(t, xi, *m))
        .collect();
    Ok(XiScan { samples, by_power })
}

fn scan_grid(
    spec: &ModelSpec,
    n: f64,
    grid: &ContractionGrid,
    k_max: usize,
    tol: f64,
    workers: &Workers,
) -> Result<Vec<XiScan>> {
    if !(n.is_finite() && n >= 0.0) {
        return Err(Error::Precondition(format!(
            "N must be finite and >= 0, got {n}"
        )));
    }
    grid.validate()?;
    let t_grid = grid.t_grid(spec.period());
    let xi_grid = grid.xi_grid(n);
    workers
        .map(&xi_grid, |&xi| {
            scan_frequency(spec, xi, &t_grid, k_max, tol)
        })
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionResult {
    pub k: usize,
    pub c1: f64,
    /// Where `‖Mᵏ‖` attains `c1`.
    pub worst_t: f64,
    pub worst_xi: f64,
    pub rho_max: f64,
    /// `max ‖Mʲ‖` over the grid for j = 1..=k.
    pub max_norm_by_power: Vec<f64>,
    pub grid: ContractionGrid,
    pub samples: Vec<MonodromySample>,
}

/// Smallest `k ≤ k_max` with `max_{t,ξ} ‖M(t,ξ)ᵏ‖ ≤ 1 − margin` on the grid
/// over `[0, T) × [0, N]`; `c1` is that maximum.
pub fn find_contraction_k(
    spec: &ModelSpec,
    n: f64,
    opts: &ContractionOptions,
    workers: &Workers,
) -> Result<ContractionResult> {
    require_constant_positive_mass(spec)?;
    if opts.k_max == 0 {
        return Err(Error::Precondition("k_max must be at least 1".into()));
    }
    let scans = scan_grid(spec, n, &opts.grid, opts.k_max, opts.tol, workers)?;
    let by_power: Vec<PowerMax> = (0..opts.k_max)
        .map(|j| {
            scans
                .iter()
                .fold(PowerMax::NONE, |acc, s| acc.merge(s.by_power[j]))
        })
        .collect();
    let rho_max = scans
        .iter()
        .flat_map(|s| s.samples.iter().map(|x| x.spectral_radius))
        .fold(0.0, f64::max);
    let Some(j) = by_power.iter().position(|p| p.value <= 1.0 - opts.margin) else {
        let worst = by_power[opts.k_max - 1];
        return Err(Error::NoCertificate {
            k_max: opts.k_max,
            worst: worst.value,
            t: worst.t,
            xi: worst.xi,
        });
    };
    Ok(ContractionResult {
        k: j + 1,
        c1: by_power[j].value,
        worst_t: by_power[j].t,
        worst_xi: by_power[j].xi,
        rho_max,
        max_norm_by_power: by_power[..=j].iter().map(|p| p.value).collect(),
        grid: opts.grid,
        samples: scans.into_iter().flat_map(|s| s.samples).collect(),
    })
}

/// `max ‖M(t,ξ)ᵏ‖` over the grid on `[0, T) × [0, N]` for a fixed `k`.
/// Works for any mass model.
pub fn max_power_norm(
    spec: &ModelSpec,
    n: f64,
    k: usize,
    grid: &ContractionGrid,
    tol: f64,
    workers: &Workers,
) -> Result<PowerMax> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let scans = scan_grid(spec, n, grid, k, tol, workers)?;
    Ok(scans
        .iter()
        .fold(PowerMax::NONE, |acc, s| acc.merge(s.by_power[k - 1])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementCheck {
    pub c1: f64,
    pub c1_refined: f64,
    pub change: f64,
    pub passed: bool,
}

/// Recomputes `c1` on the doubled grid and compares.
pub fn refinement_check(
    spec: &ModelSpec,
    n: f64,
    k: usize,
    c1: f64,
    opts: &ContractionOptions,
    workers: &Workers,
) -> Result<RefinementCheck> {
    let refined = max_power_norm(spec, n, k, &opts.grid.doubled(), opts.tol, workers)?.value;
    let change = (refined - c1).abs();
    Ok(RefinementCheck {
        c1,
        c1_refined: refined,
        change,
        passed: change < REFINEMENT_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateGrids {
    pub contraction_t_points: usize,
    pub contraction_xi_points: usize,
    pub refinement_t_points: usize,
    pub refinement_xi_points: usize,
}

impl From<ContractionGrid> for CertificateGrids {
    fn from(g: ContractionGrid) -> Self {
        let d = g.doubled();
        Self {
            contraction_t_points: g.t_points,
            contraction_xi_points: g.xi_points,
            refinement_t_points: d.t_points,
            refinement_xi_points: d.xi_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateTolerances {
    pub integration: f64,
    pub contraction_margin: f64,
    pub degenerate_discriminant: f64,
    pub refinement: f64,
}

impl CertificateTolerances {
    pub fn from_options(opts: &ContractionOptions) -> Self {
        Self {
            integration: opts.tol,
            contraction_margin: opts.margin,
            degenerate_discriminant: DEGENERATE_DISCRIMINANT,
            refinement: REFINEMENT_TOL,
        }
    }
}

/// The certified constants `(N, k, c1, δ₀, δ₁, C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    #[serde(rename = "N")]
    pub n: f64,
    pub k: usize,
    pub c1: f64,
    pub delta0: f64,
    pub delta1: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub period: f64,
    pub beta: f64,
    pub grids: CertificateGrids,
    pub tolerances: CertificateTolerances,
}

impl ContractionCertificate {
    /// `δ = min(δ₀, δ₁)`.
    pub fn rate(&self) -> f64 {
        self.delta0.min(self.delta1)
    }

    /// `kT`.
    pub fn contraction_time(&self) -> f64 {
        self.k as f64 * self.period
    }

    pub fn contraction_grid(&self) -> ContractionGrid {
        ContractionGrid {
            t_points: self.grids.contraction_t_points,
            xi_points: self.grids.contraction_xi_points,
        }
    }
}

/// Fills `δ₀ = β/2`, `δ₁ = ln(1/c1)/(kT)` and `C = e^{δ₁kT}`.
pub fn assemble_certificate(
    spec: &ModelSpec,
    n: f64,
    k: usize,
    c1: f64,
    grids: CertificateGrids,
    tolerances: CertificateTolerances,
) -> Result<ContractionCertificate> {
    if !(c1 > 0.0 && c1 < 1.0) {
        return Err(Error::Precondition(format!(
            "c1 must lie in (0, 1), got {c1}"
        )));
    }
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let beta = spec.beta();
    if beta <= 0.0 {
        return Err(Error::ModelAssumption(format!(
            "mean dissipation must be positive, got {beta}"
        )));
    }
    let period = spec.period();
    let kt = k as f64 * period;
    let delta1 = (1.0 / c1).ln() / kt;
    Ok(ContractionCertificate {
        n,
        k,
        c1,
        delta0: beta / 2.0,
        delta1,
        c: (delta1 * kt).exp(),
        period,
        beta,
        grids,
        tolerances,
    })
}
