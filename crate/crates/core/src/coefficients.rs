//! Periodic coefficients b(t), m₁(t) and the model they assemble into.
//!
//! Every coefficient is evaluated by reducing `t` modulo the period first,
//! so `eval(t + T)` and `eval(t)` agree whenever the reductions agree. The
//! closed forms are registered by name and integrate analytically; sampled
//! coefficients are uniform samples over `[0, T)` with step or linear
//! interpolation and are integrated exactly.

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform points per period on which model assumptions are checked.
pub const VALIDATION_GRID: usize = 4096;

/// Tolerance on `sup |m₁| = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Step,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    Constant {
        value: f64,
    },
    /// `offset + amplitude * sin(2πt/T + phase)`
    SinOffset {
        offset: f64,
        amplitude: f64,
        phase: f64,
    },
    /// Rises linearly from `min` at t = 0 to `max` at T/2, then back.
    Triangle {
        min: f64,
        max: f64,
    },
    /// `high` on `[0, duty·T)`, `low` on `[duty·T, T)`.
    Square {
        low: f64,
        high: f64,
        duty: f64,
    },
    Sampled {
        values: Arc<[f64]>,
        order: Interpolation,
        /// `cumulative[j] = ∫₀^{jh}` for j = 0..=n.
        cumulative: Arc<[f64]>,
    },
}

/// A T-periodic scalar coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCoefficient {
    period: f64,
    profile: Profile,
    mean: f64,
}

/// Declarative description of a coefficient, as it appears in config files
/// and certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientDecl {
    Constant {
        value: f64,
    },
    SinOffset {
        offset: f64,
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    Triangle {
        min: f64,
        max: f64,
    },
    Square {
        low: f64,
        high: f64,
        #[serde(default = "half")]
        duty: f64,
    },
    CustomCsv {
        path: String,
        #[serde(default = "linear")]
        interpolation: Interpolation,
    },
}

fn half() -> f64 {
    0.5
}

fn linear() -> Interpolation {
    Interpolation::Linear
}

impl CoefficientDecl {
    /// Builds the coefficient; relative CSV paths resolve against `base_dir`.
    pub fn build(&self, period: f64, base_dir: Option<&Path>) -> Result<PeriodicCoefficient> {
        match *self {
            Self::Constant { value } => PeriodicCoefficient::constant(value, period),
            Self::SinOffset {
                offset,
                amplitude,
                phase,
            } => PeriodicCoefficient::sin_offset(offset, amplitude, phase, period),
            Self::Triangle { min, max } => PeriodicCoefficient::triangle(min, max, period),
            Self::Square { low, high, duty } => {
                PeriodicCoefficient::square(low, high, duty, period)
            }
            Self::CustomCsv {
                ref path,
                interpolation,
            } => {
                let p = Path::new(path);
                let resolved = match base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.to_path_buf(),
                };
                PeriodicCoefficient::from_csv(&resolved, period, interpolation)
            }
        }
    }
}

fn check_period(period: f64) -> Result<()> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidCoefficient(format!(
            "period must be positive and finite, got {period}"
        )));
    }
    Ok(())
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidCoefficient(format!(
            "{name} is not finite ({v})"
        )));
    }
    Ok(())
}

impl PeriodicCoefficient {
    pub fn constant(value: f64, period: f64) -> Result<Self> {
        check_period(period)?;
        check_finite("value", value)?;
        Ok(Self {
            period,
            profile: Profile::Constant { value },
            mean: value,
        })
    }

    pub fn sin_offset(offset: f64, amplitude: f64, phase: f64, period: f64) -> Result<Self> {
        check_period(period)?;
        check_finite("offset", offset)?;
        check_finite("amplitude", amplitude)?;
        check_finite("phase", phase)?;
        Ok(Self {
            period,
            profile: Profile::SinOffset {
                offset,
                amplitude,
                phase,
            },
            mean: offset,
        })
    }

    pub fn triangle(min: f64, max: f64, period: f64) -> Result<Self> {
        check_period(period)?;
        check_finite("min", min)?;
        check_finite("max", max)?;
        Ok(Self {
            period,
            profile: Profile::Triangle { min, max },
            mean: 0.5 * (min + max),
        })
    }

    pub fn square(low: f64, high: f64, duty: f64, period: f64) -> Result<Self> {
        check_period(period)?;
        check_finite("low", low)?;
        check_finite("high", high)?;
        if !(duty > 0.0 && duty < 1.0) {
            return Err(Error::InvalidCoefficient(format!(
                "square duty must lie in (0, 1), got {duty}"
            )));
        }
        Ok(Self {
            period,
            profile: Profile::Square { low, high, duty },
            mean: duty * high + (1.0 - duty) * low,
        })
    }

    /// Uniform samples `values[j] = c(j·T/n)` over one period.
    pub fn sampled(values: Vec<f64>, order: Interpolation, period: f64) -> Result<Self> {
        check_period(period)?;
        if values.len() < 2 {
            return Err(Error::InvalidCoefficient(
                "a sampled coefficient needs at least two samples".into(),
            ));
        }
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidCoefficient(format!(
                "sample {j} is not finite ({v})"
            )));
        }
        let n = values.len();
        let h = period / n as f64;
        let mut cumulative = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for j in 0..n {
            acc += match order {
                Interpolation::Step => values[j] * h,
                Interpolation::Linear => 0.5 * (values[j] + values[(j + 1) % n]) * h,
            };
            cumulative.push(acc);
        }
        Ok(Self {
            period,
            mean: acc / period,
            profile: Profile::Sampled {
                values: values.into(),
                order,
                cumulative: cumulative.into(),
            },
        })
    }

    /// Reads a two-column `t,value` CSV holding uniform samples over `[0, T)`.
    /// A non-numeric first row is treated as a header.
    pub fn from_csv(path: &Path, period: f64, order: Interpolation) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::InvalidCoefficient(format!(
                    "{}: row {} has {} columns, expected 2",
                    path.display(),
                    row + 1,
                    record.len()
                )));
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(t), Ok(v)) => {
                    times.push(t);
                    values.push(v);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::InvalidCoefficient(format!(
                        "{}: row {} is not numeric",
                        path.display(),
                        row + 1
                    )))
                }
            }
        }
        Self::from_samples(&times, values, order, period)
            .map_err(|e| Error::InvalidCoefficient(format!("{}: {e}", path.display())))
    }

    /// Checks that `times` is the uniform grid `j·T/n` and builds the coefficient.
    pub fn from_samples(
        times: &[f64],
        values: Vec<f64>,
        order: Interpolation,
        period: f64,
    ) -> Result<Self> {
        check_period(period)?;
        let n = values.len();
        if times.len() != n || n < 2 {
            return Err(Error::InvalidCoefficient(format!(
                "need at least two (t, value) samples, got {n}"
            )));
        }
        let h = period / n as f64;
        for (j, &t) in times.iter().enumerate() {
            if (t - j as f64 * h).abs() > 1e-9 * period {
                return Err(Error::InvalidCoefficient(format!(
                    "sample {j} at t = {t} is off the uniform grid j·T/n (expected {})",
                    j as f64 * h
                )));
            }
        }
        Self::sampled(values, order, period)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Mean over one period (computed at construction).
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Number of samples for sampled coefficients.
    pub fn sample_count(&self) -> Option<usize> {
        match &self.profile {
            Profile::Sampled { values, .. } => Some(values.len()),
            _ => None,
        }
    }

    #[inline]
    fn reduce(&self, t: f64) -> f64 {
        let r = t.rem_euclid(self.period);
        // rem_euclid can round up to the period itself for tiny negative t.
        if r >= self.period {
            0.0
        } else {
            r
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.eval_anchored(t, t)
    }

    /// Evaluates the piece containing `anchor`, extended smoothly to `t`.
    ///
    /// Integrators pass the midpoint of the current smooth segment as the
    /// anchor so that stages landing exactly on a jump or kink still see the
    /// segment's own branch.
    #[inline]
    pub fn eval_anchored(&self, t: f64, anchor: f64) -> f64 {
        match &self.profile {
            Profile::Constant { value } => *value,
            Profile::SinOffset {
                offset,
                amplitude,
                phase,
            } => offset + amplitude * (TAU * self.reduce(t) / self.period + phase).sin(),
            Profile::Triangle { min, max } => {
                let ta = self.reduce(anchor);
                let tau = ta + (t - anchor);
                let u = tau / self.period;
                if ta < 0.5 * self.period {
                    min + (max - min) * 2.0 * u
                } else {
                    min + (max - min) * 2.0 * (1.0 - u)
                }
            }
            Profile::Square { low, high, duty } => {
                if self.reduce(anchor) < duty * self.period {
                    *high
                } else {
                    *low
                }
            }
            Profile::Sampled { values, order, .. } => {
                let n = values.len();
                let h = self.period / n as f64;
                let ta = self.reduce(anchor);
                let j = ((ta / h) as usize).min(n - 1);
                match order {
                    Interpolation::Step => values[j],
                    Interpolation::Linear => {
                        let tau = ta + (t - anchor);
                        let x = (tau - j as f64 * h) / h;
                        values[j] + (values[(j + 1) % n] - values[j]) * x
                    }
                }
            }
        }
    }

    /// `∫₀^r c` for `r ∈ [0, T]`.
    fn primitive_in_period(&self, r: f64) -> f64 {
        let t_per = self.period;
        match &self.profile {
            Profile::Constant { value } => value * r,
            Profile::SinOffset {
                offset,
                amplitude,
                phase,
            } => {
                offset * r
                    + amplitude * t_per / TAU * (phase.cos() - (TAU * r / t_per + phase).cos())
            }
            Profile::Triangle { min, max } => {
                let span = max - min;
                let half = 0.5 * t_per;
                if r <= half {
                    min * r + span * r * r / t_per
                } else {
                    min * r
                        + span * (0.25 * t_per + 2.0 * (r - half) - (r * r - half * half) / t_per)
                }
            }
            Profile::Square { low, high, duty } => {
                let edge = duty * t_per;
                high * r.min(edge) + low * (r - edge).max(0.0)
            }
            Profile::Sampled {
                values,
                order,
                cumulative,
            } => {
                let n = values.len();
                let h = t_per / n as f64;
                let j = ((r / h) as usize).min(n - 1);
                let dx = r - j as f64 * h;
                match order {
                    Interpolation::Step => cumulative[j] + values[j] * dx,
                    Interpolation::Linear => {
                        let slope = (values[(j + 1) % n] - values[j]) / h;
                        cumulative[j] + values[j] * dx + 0.5 * slope * dx * dx
                    }
                }
            }
        }
    }

    /// `∫₀ᵗ c` for any real `t`.
    pub fn primitive(&self, t: f64) -> f64 {
        let cycles = (t / self.period).floor();
        let r = (t - cycles * self.period).clamp(0.0, self.period);
        cycles * self.period * self.mean + self.primitive_in_period(r)
    }

    /// `∫_a^b c`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.primitive(b) - self.primitive(a)
    }

    /// `λ(t) = exp(∫₀ᵗ c)`.
    pub fn lambda(&self, t: f64) -> f64 {
        self.primitive(t).exp()
    }

    /// Jump/kink locations in `[0, T)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.profile {
            Profile::Constant { .. } | Profile::SinOffset { .. } => Vec::new(),
            Profile::Triangle { .. } => vec![0.0, 0.5 * self.period],
            Profile::Square { duty, .. } => vec![0.0, duty * self.period],
            Profile::Sampled { values, .. } => {
                let h = self.period / values.len() as f64;
                (0..values.len()).map(|j| j as f64 * h).collect()
            }
        }
    }

    /// Total variation over one period.
    pub fn total_variation(&self) -> f64 {
        match &self.profile {
            Profile::Constant { .. } => 0.0,
            Profile::SinOffset { amplitude, .. } => 4.0 * amplitude.abs(),
            Profile::Triangle { min, max } => 2.0 * (max - min).abs(),
            Profile::Square { low, high, .. } => 2.0 * (high - low).abs(),
            Profile::Sampled { values, .. } => {
                let n = values.len();
                (0..n)
                    .map(|j| (values[(j + 1) % n] - values[j]).abs())
                    .sum()
            }
        }
    }

    /// Values on the uniform validation grid `j·T/VALIDATION_GRID`.
    pub fn validation_values(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.period / VALIDATION_GRID as f64;
        (0..VALIDATION_GRID).map(move |j| self.eval(j as f64 * h))
    }

    /// Exact extrema of the closed forms, if this is one.
    fn closed_form_range(&self) -> Option<(f64, f64)> {
        match self.profile {
            Profile::Constant { value } => Some((value, value)),
            Profile::SinOffset {
                offset, amplitude, ..
            } => Some((offset - amplitude.abs(), offset + amplitude.abs())),
            Profile::Triangle { min, max } => Some((min.min(max), min.max(max))),
            Profile::Square { low, high, .. } => Some((low.min(high), low.max(high))),
            Profile::Sampled { .. } => None,
        }
    }

    /// Minimum on the validation grid, widened to the exact minimum for
    /// closed forms and sampled data.
    pub fn grid_min(&self) -> f64 {
        let grid = self.validation_values().fold(f64::INFINITY, f64::min);
        match &self.profile {
            Profile::Sampled { values, .. } => values.iter().copied().fold(grid, f64::min),
            _ => self
                .closed_form_range()
                .map_or(grid, |(lo, _)| lo.min(grid)),
        }
    }

    pub fn grid_max(&self) -> f64 {
        let grid = self.validation_values().fold(f64::NEG_INFINITY, f64::max);
        match &self.profile {
            Profile::Sampled { values, .. } => values.iter().copied().fold(grid, f64::max),
            _ => self
                .closed_form_range()
                .map_or(grid, |(_, hi)| hi.max(grid)),
        }
    }

    pub fn grid_sup_abs(&self) -> f64 {
        self.grid_max().abs().max(self.grid_min().abs())
    }

    /// Returns a copy whose argument is shifted: `c'(t) = c(t + shift)`.
    /// Closed forms stay closed; sampled data is resampled only when the
    /// shift is a whole number of samples.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        let t_per = self.period;
        match &self.profile {
            Profile::Constant { value } => Self::constant(*value, t_per),
            Profile::SinOffset {
                offset,
                amplitude,
                phase,
            } => Self::sin_offset(*offset, *amplitude, phase + TAU * shift / t_per, t_per),
            Profile::Sampled { values, order, .. } => {
                let n = values.len();
                let h = t_per / n as f64;
                let steps = shift / h;
                if (steps - steps.round()).abs() > 1e-9 {
                    return Err(Error::Precondition(
                        "sampled coefficients can only be shifted by whole samples".into(),
                    ));
                }
                let k = (steps.round() as i64).rem_euclid(n as i64) as usize;
                let rotated = (0..n).map(|j| values[(j + k) % n]).collect();
                Self::sampled(rotated, *order, t_per)
            }
            Profile::Triangle { .. } | Profile::Square { .. } => {
                let n = VALIDATION_GRID;
                let h = t_per / n as f64;
                let steps = shift / h;
                if (steps - steps.round()).abs() > 1e-9 {
                    return Err(Error::Precondition(
                        "piecewise profiles can only be shifted by validation-grid steps".into(),
                    ));
                }
                let order = if matches!(self.profile, Profile::Square { .. }) {
                    Interpolation::Step
                } else {
                    Interpolation::Linear
                };
                let values = (0..n).map(|j| self.eval(shift + j as f64 * h)).collect();
                Self::sampled(values, order, t_per)
            }
        }
    }

    /// The declaration that rebuilds this coefficient, when it has one.
    pub fn decl(&self) -> Option<CoefficientDecl> {
        match self.profile {
            Profile::Constant { value } => Some(CoefficientDecl::Constant { value }),
            Profile::SinOffset {
                offset,
                amplitude,
                phase,
            } => Some(CoefficientDecl::SinOffset {
                offset,
                amplitude,
                phase,
            }),
            Profile::Triangle { min, max } => Some(CoefficientDecl::Triangle { min, max }),
            Profile::Square { low, high, duty } => {
                Some(CoefficientDecl::Square { low, high, duty })
            }
            Profile::Sampled { .. } => None,
        }
    }
}

/// Mass specification: `m² ≡ m₀²` or `m² = m₀² + ε·m₁(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Mass {
    Constant {
        m0: f64,
    },
    Perturbed {
        m0: f64,
        epsilon: f64,
        m1: PeriodicCoefficient,
    },
}

impl Mass {
    pub fn m0(&self) -> f64 {
        match *self {
            Mass::Constant { m0 } | Mass::Perturbed { m0, .. } => m0,
        }
    }
}

/// Outcome of the assumption checks run at model construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub b_min: f64,
    pub b_max: f64,
    pub b_strictly_positive: bool,
    pub b_total_variation: f64,
    pub min_mass_squared: f64,
    pub m1_sup_abs: Option<f64>,
    /// Hypotheses of the decay theory this crate cannot check from samples.
    pub unchecked: Vec<String>,
}

/// A full problem instance: dissipation `b`, mass and shared period.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    b: PeriodicCoefficient,
    mass: Mass,
    assumptions: AssumptionReport,
}

impl ModelSpec {
    pub fn new(b: PeriodicCoefficient, mass: Mass) -> Result<Self> {
        let period = b.period();
        let b_min = b.grid_min();
        if b_min < 0.0 {
            return Err(Error::ModelAssumption(format!(
                "dissipation must be non-negative; grid minimum is {b_min}"
            )));
        }
        let mut m1_sup = None;
        let min_mass_squared = match &mass {
            Mass::Constant { m0 } => {
                if !(m0.is_finite() && *m0 >= 0.0) {
                    return Err(Error::ModelAssumption(format!("m0 must be >= 0, got {m0}")));
                }
                m0 * m0
            }
            Mass::Perturbed { m0, epsilon, m1 } => {
                if !(m0.is_finite() && *m0 > 0.0) {
                    return Err(Error::ModelAssumption(format!(
                        "perturbed mass needs m0 > 0, got {m0}"
                    )));
                }
                if !(epsilon.is_finite() && *epsilon >= 0.0) {
                    return Err(Error::ModelAssumption(format!(
                        "epsilon must be >= 0, got {epsilon}"
                    )));
                }
                if (m1.period() - period).abs() > 1e-12 * period {
                    return Err(Error::ModelAssumption(format!(
                        "m1 has period {} but b has period {period}",
                        m1.period()
                    )));
                }
                let sup = m1.grid_sup_abs();
                if (sup - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::ModelAssumption(format!(
                        "m1 must satisfy sup|m1| = 1, got {sup}"
                    )));
                }
                m1_sup = Some(sup);
                let min_m1 = m1.grid_min();
                let msq = m0 * m0 + epsilon * min_m1;
                if msq <= 0.0 {
                    return Err(Error::ModelAssumption(format!(
                        "m0^2 + eps*m1(t) must stay positive; grid minimum is {msq}"
                    )));
                }
                msq
            }
        };
        let assumptions = AssumptionReport {
            b_min,
            b_max: b.grid_max(),
            b_strictly_positive: b_min > 0.0,
            b_total_variation: b.total_variation(),
            min_mass_squared,
            m1_sup_abs: m1_sup,
            unchecked: vec![
                "essential boundedness of b' (only total variation is computed)".into(),
            ],
        };
        Ok(Self {
            b,
            mass,
            assumptions,
        })
    }

    pub fn constant_mass(b: PeriodicCoefficient, m0: f64) -> Result<Self> {
        Self::new(b, Mass::Constant { m0 })
    }

    pub fn b(&self) -> &PeriodicCoefficient {
        &self.b
    }

    pub fn mass(&self) -> &Mass {
        &self.mass
    }

    pub fn period(&self) -> f64 {
        self.b.period()
    }

    /// Mean dissipation β.
    pub fn beta(&self) -> f64 {
        self.b.mean()
    }

    pub fn m0(&self) -> f64 {
        self.mass.m0()
    }

    pub fn epsilon(&self) -> f64 {
        match self.mass {
            Mass::Constant { .. } => 0.0,
            Mass::Perturbed { epsilon, .. } => epsilon,
        }
    }

    pub fn is_constant_mass(&self) -> bool {
        matches!(self.mass, Mass::Constant { .. })
    }

    pub fn assumptions(&self) -> &AssumptionReport {
        &self.assumptions
    }

    /// The same dissipation with constant mass `m0`.
    pub fn with_constant_mass(&self, m0: f64) -> Result<Self> {
        Self::new(self.b.clone(), Mass::Constant { m0 })
    }

    /// The constant-mass problem underlying this one (`ε = 0`).
    pub fn unperturbed(&self) -> Result<Self> {
        self.with_constant_mass(self.m0())
    }

    /// Replaces ε; only meaningful for perturbed models.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        match &self.mass {
            Mass::Perturbed { m0, m1, .. } => Self::new(
                self.b.clone(),
                Mass::Perturbed {
                    m0: *m0,
                    epsilon,
                    m1: m1.clone(),
                },
            ),
            Mass::Constant { .. } => Err(Error::Precondition(
                "epsilon can only be set on a perturbed-mass model".into(),
            )),
        }
    }

    /// m²(t), anchored like [`PeriodicCoefficient::eval_anchored`].
    #[inline]
    pub fn mass_squared_anchored(&self, t: f64, anchor: f64) -> f64 {
        match &self.mass {
            Mass::Constant { m0 } => m0 * m0,
            Mass::Perturbed { m0, epsilon, m1 } => m0 * m0 + epsilon * m1.eval_anchored(t, anchor),
        }
    }

    #[inline]
    pub fn mass_squared(&self, t: f64) -> f64 {
        self.mass_squared_anchored(t, t)
    }

    /// ⟨ξ⟩_{m(t)} = √(ξ² + m²(t)).
    pub fn symbol(&self, t: f64, xi: f64) -> Result<f64> {
        let radicand = xi * xi + self.mass_squared(t);
        if radicand < 0.0 {
            return Err(Error::ModelAssumption(format!(
                "negative radicand xi^2 + m^2(t) = {radicand} at t = {t}"
            )));
        }
        Ok(radicand.sqrt())
    }

    /// Unchecked symbol for inner loops; the radicand is validated at
    /// construction on the assumption grid.
    #[inline]
    pub(crate) fn symbol_anchored(&self, t: f64, anchor: f64, xi: f64) -> f64 {
        (xi * xi + self.mass_squared_anchored(t, anchor))
            .max(0.0)
            .sqrt()
    }

    /// ⟨ξ⟩_{m₀}.
    pub fn symbol_m0(&self, xi: f64) -> f64 {
        xi.hypot(self.m0())
    }

    /// Breakpoints of all coefficients in `[0, T)`, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = self.b.breakpoints();
        if let Mass::Perturbed { m1, epsilon, .. } = &self.mass {
            if *epsilon != 0.0 {
                pts.extend(m1.breakpoints());
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * self.period());
        pts
    }

    /// Sample counts of the sampled coefficients in play (for grid alignment).
    pub fn sample_counts(&self) -> Vec<usize> {
        let mut counts: Vec<usize> = self.b.sample_count().into_iter().collect();
        if let Mass::Perturbed { m1, .. } = &self.mass {
            counts.extend(m1.sample_count());
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;
    use proptest::prelude::*;

    fn triangle_samples(n: usize, lo: f64, hi: f64, period: f64) -> PeriodicCoefficient {
        let tri = PeriodicCoefficient::triangle(lo, hi, period).unwrap();
        let h = period / n as f64;
        let v = (0..n).map(|j| tri.eval(j as f64 * h)).collect();
        PeriodicCoefficient::sampled(v, Interpolation::Linear, period).unwrap()
    }

    #[test]
    fn mean_of_constant_and_sinusoid() {
        let c = PeriodicCoefficient::constant(1.0, 2.0).unwrap();
        assert_eq!(c.mean(), 1.0);
        let s = PeriodicCoefficient::sin_offset(1.0, 1.0, 0.0, 2.0).unwrap();
        assert_eq!(s.mean(), 1.0);
        // primitive over one period agrees with the mean
        assert!((s.primitive(2.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sampled_triangle_mean_matches_refined_trapezoid() {
        let period = 1.0;
        let b = triangle_samples(1024, 0.2, 1.0, period);
        // Trapezoid on 2048 points of the linear interpolant.
        let m = 2048;
        let h = period / m as f64;
        let trap: f64 = (0..m)
            .map(|j| 0.5 * (b.eval(j as f64 * h) + b.eval((j + 1) as f64 * h)) * h)
            .sum::<f64>()
            / period;
        assert!((b.mean() - trap).abs() < 1e-8, "{} vs {trap}", b.mean());
        assert!((b.mean() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn lambda_examples() {
        let c = PeriodicCoefficient::constant(1.0, 1.0).unwrap();
        assert!((c.lambda(3.0) - 3f64.exp()).abs() < 1e-12 * 3f64.exp());
        let s = PeriodicCoefficient::sin_offset(1.0, 0.5, 0.3, 1.0).unwrap();
        assert_eq!(s.lambda(0.0), 1.0);
    }

    #[test]
    fn sampled_lambda_matches_direct_quadrature() {
        let b = triangle_samples(64, 0.2, 1.0, 1.0);
        let t = 2.5;
        let direct = quadrature::integrate_piecewise(
            |s, a| b.eval_anchored(s, a),
            0.0,
            t,
            &(0..=160).map(|j| j as f64 / 64.0).collect::<Vec<_>>(),
            1e-13,
        );
        let rel = (b.lambda(t) - direct.exp()).abs() / direct.exp();
        assert!(rel < 1e-8, "rel error {rel}");
        let shifted = b.lambda(0.5) * (2.0 * b.mean()).exp();
        assert!((b.lambda(t) - shifted).abs() / shifted < 1e-12);
    }

    #[test]
    fn closed_form_primitives_match_quadrature() {
        let cases = [
            PeriodicCoefficient::sin_offset(1.0, 0.5, 0.7, 1.3).unwrap(),
            PeriodicCoefficient::triangle(0.2, 1.0, 1.3).unwrap(),
            PeriodicCoefficient::square(0.3, 1.1, 0.3, 1.3).unwrap(),
        ];
        for c in &cases {
            let mut breaks: Vec<f64> = Vec::new();
            for k in 0..4 {
                breaks.extend(c.breakpoints().iter().map(|b| b + k as f64 * 1.3));
            }
            for &t in &[0.1, 0.6, 1.0, 2.9, 3.7] {
                let q = quadrature::integrate_piecewise(
                    |s, a| c.eval_anchored(s, a),
                    0.0,
                    t,
                    &breaks,
                    1e-13,
                );
                assert!((c.primitive(t) - q).abs() < 1e-11, "{c:?} t={t}");
            }
        }
    }

    #[test]
    fn symbol_examples() {
        let b = PeriodicCoefficient::constant(1.0, 1.0).unwrap();
        let spec = ModelSpec::constant_mass(b.clone(), 0.0).unwrap();
        assert_eq!(spec.symbol(0.3, 2.0).unwrap(), 2.0);
        let spec = ModelSpec::constant_mass(b.clone(), 1.0).unwrap();
        assert_eq!(spec.symbol(0.3, 0.0).unwrap(), 1.0);
        let m1 =
            PeriodicCoefficient::sin_offset(0.0, 1.0, std::f64::consts::FRAC_PI_2, 1.0).unwrap();
        let spec = ModelSpec::new(
            b,
            Mass::Perturbed {
                m0: 1.0,
                epsilon: 0.5,
                m1,
            },
        )
        .unwrap();
        assert!((spec.symbol(0.0, 1.0).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn model_assumption_errors() {
        let neg = PeriodicCoefficient::sin_offset(0.2, 1.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            ModelSpec::constant_mass(neg, 1.0),
            Err(Error::ModelAssumption(_))
        ));
        let b = PeriodicCoefficient::constant(1.0, 1.0).unwrap();
        let unnormalized = PeriodicCoefficient::sin_offset(0.0, 0.5, 0.0, 1.0).unwrap();
        assert!(ModelSpec::new(
            b.clone(),
            Mass::Perturbed {
                m0: 1.0,
                epsilon: 0.1,
                m1: unnormalized
            }
        )
        .is_err());
        let m1 = PeriodicCoefficient::sin_offset(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(ModelSpec::new(
            b.clone(),
            Mass::Perturbed {
                m0: 1.0,
                epsilon: 2.0,
                m1
            }
        )
        .is_err());
        let other_period = PeriodicCoefficient::sin_offset(0.0, 1.0, 0.0, 2.0).unwrap();
        assert!(ModelSpec::new(
            b,
            Mass::Perturbed {
                m0: 1.0,
                epsilon: 0.1,
                m1: other_period
            }
        )
        .is_err());
    }

    #[test]
    fn zeros_in_b_are_flagged_not_rejected() {
        let b = PeriodicCoefficient::sin_offset(1.0, 1.0, 0.0, 1.0).unwrap();
        let spec = ModelSpec::constant_mass(b, 1.0).unwrap();
        assert!(!spec.assumptions().b_strictly_positive);
    }

    #[test]
    fn non_finite_samples_rejected() {
        let r = PeriodicCoefficient::sampled(vec![1.0, f64::NAN, 2.0], Interpolation::Linear, 1.0);
        assert!(matches!(r, Err(Error::InvalidCoefficient(_))));
    }

    #[test]
    fn off_grid_times_rejected() {
        let r = PeriodicCoefficient::from_samples(
            &[0.0, 0.3, 0.5, 0.75],
            vec![1.0; 4],
            Interpolation::Linear,
            1.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn total_variation_of_samples() {
        let c = PeriodicCoefficient::sampled(vec![1.0, 3.0, 2.0, 2.0], Interpolation::Step, 1.0)
            .unwrap();
        assert_eq!(c.total_variation(), 2.0 + 1.0 + 0.0 + 1.0);
    }

    #[test]
    fn step_interpolation_anchoring() {
        let c = PeriodicCoefficient::sampled(vec![1.0, 2.0], Interpolation::Step, 1.0).unwrap();
        assert_eq!(c.eval(0.5), 2.0);
        assert_eq!(c.eval_anchored(0.5, 0.25), 1.0);
        assert_eq!(c.eval(-0.25), 2.0);
    }

    proptest! {
        #[test]
        fn periodic_bit_exact_on_dyadic_times(k in 0u64..(1 << 24), cycles in 0u32..8) {
            let period = 2.0;
            let t = k as f64 / (1u64 << 20) as f64; // in [0, 16)
            let coeffs = [
                PeriodicCoefficient::sin_offset(1.0, 0.5, 0.0, period).unwrap(),
                PeriodicCoefficient::triangle(0.2, 1.0, period).unwrap(),
                triangle_samples(1024, 0.2, 1.0, period),
            ];
            for c in &coeffs {
                let shifted = t + cycles as f64 * period;
                prop_assert_eq!(c.eval(shifted).to_bits(), c.eval(t).to_bits());
            }
        }

        #[test]
        fn periodic_within_rounding(t in -50.0f64..50.0) {
            let c = PeriodicCoefficient::sin_offset(1.0, 0.5, 0.0, 1.7).unwrap();
            prop_assert!((c.eval(t + 1.7) - c.eval(t)).abs() < 1e-12);
        }

        #[test]
        fn mean_invariant_under_shift(j in 0usize..4096) {
            let period = 1.0;
            let shift = j as f64 * period / VALIDATION_GRID as f64;
            let tri = triangle_samples(1024, 0.2, 1.0, period);
            let sampled_shift = (j / 4) as f64 * period / 1024.0;
            prop_assert!((tri.shifted(sampled_shift).unwrap().mean() - tri.mean()).abs() < 1e-10);
            let sq = PeriodicCoefficient::square(0.3, 1.1, 0.25, period).unwrap();
            prop_assert!((sq.shifted(shift).unwrap().mean() - sq.mean()).abs() < 1e-10);
            let s = PeriodicCoefficient::sin_offset(1.0, 0.5, 0.0, period).unwrap();
            prop_assert!((s.shifted(0.123 * j as f64).unwrap().mean() - s.mean()).abs() < 1e-10);
        }

        #[test]
        fn lambda_cocycle(t in 0.0f64..30.0) {
            let b = PeriodicCoefficient::sin_offset(1.0, 0.5, 0.2, 1.3).unwrap();
            let ratio = b.lambda(t + 1.3) / b.lambda(t);
            let expected = (b.mean() * 1.3).exp();
            prop_assert!((ratio - expected).abs() / expected < 1e-8);
        }
    }
}
