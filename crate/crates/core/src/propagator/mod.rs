//! Fundamental solution E(t, s, ξ) of `D_t E = A(t, ξ) E`, `E(s, s, ξ) = I`,
//! with `D_t = −i∂_t` and
//!
//! ```text
//! A(t, ξ) = [ 0        ⟨ξ⟩_m(t) ]
//!           [ ⟨ξ⟩_m(t)  2i b(t)  ]
//! ```
//!
//! The production route is an adaptive Dormand–Prince 5(4) integrator that
//! splits the time axis at every coefficient breakpoint. A truncated
//! Peano–Baker series is kept as an independent oracle for short windows.

mod mat2;
pub(crate) mod rk;

pub use mat2::{eigenvalues_2x2, spectral_norm_2x2, Mat2C, C64};

use crate::coefficients::ModelSpec;
use crate::error::{Error, Result};

/// Default integration tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Admissible tolerance range for [`propagate`].
pub const TOL_RANGE: (f64, f64) = (1e-14, 1e-4);

/// Largest `|t − s| · sup‖A‖` accepted by [`peano_baker_truncated`].
pub const PEANO_BAKER_WINDOW: f64 = 5.0;
pub const PEANO_BAKER_MAX_TERMS: usize = 30;
const PEANO_BAKER_NODES: usize = 4000;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationResult {
    pub matrix: Mat2C,
    /// Largest accepted local error estimate (absolute, at most `tol`).
    pub local_error_estimate: f64,
    pub steps_taken: u64,
    pub rhs_evaluations: u64,
}

/// A(t, ξ) for the given model.
pub fn system_matrix(spec: &ModelSpec, t: f64, xi: f64) -> Result<Mat2C> {
    let w = C64::from(spec.symbol(t, xi)?);
    let b = spec.b().eval(t);
    Ok(Mat2C::new(C64::new(0.0, 0.0), w, w, I * (2.0 * b)))
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol >= TOL_RANGE.0 && tol <= TOL_RANGE.1) {
        return Err(Error::Precondition(format!(
            "tolerance {tol:e} outside [{:e}, {:e}]",
            TOL_RANGE.0, TOL_RANGE.1
        )));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::Precondition(format!("non-finite time {t}")));
    }
    Ok(())
}

/// Breakpoint images `bp + kT` strictly inside `(lo, hi)`.
pub(crate) fn breakpoints_between(spec: &ModelSpec, lo: f64, hi: f64) -> Vec<f64> {
    let period = spec.period();
    let guard = 1e-13 * period.max(hi.abs()).max(lo.abs());
    let mut out = Vec::new();
    for bp in spec.breakpoints() {
        let k_lo = ((lo - bp) / period).floor() as i64;
        let k_hi = ((hi - bp) / period).ceil() as i64;
        for k in k_lo..=k_hi {
            let x = bp + k as f64 * period;
            if x > lo + guard && x < hi - guard {
                out.push(x);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Integrates a linear system through the ordered `stops`, returning the
/// state at each stop. The right-hand side gets `(t, anchor, y, dy)` where
/// `anchor` is the midpoint of the current smooth segment.
pub(crate) fn drive<const N: usize, F>(
    spec: &ModelSpec,
    s: f64,
    y0: [C64; N],
    stops: &[f64],
    tol: f64,
    rhs: F,
    stats: &mut rk::Stats,
) -> Result<Vec<[C64; N]>>
where
    F: Fn(f64, f64, &[C64; N], &mut [C64; N]),
{
    let Some(&last) = stops.last() else {
        return Ok(Vec::new());
    };
    let forward = last >= s;
    let ordered = stops
        .windows(2)
        .all(|w| if forward { w[0] <= w[1] } else { w[0] >= w[1] })
        && stops
            .first()
            .is_some_and(|&t0| if forward { t0 >= s } else { t0 <= s });
    if !ordered {
        return Err(Error::Precondition(
            "checkpoint times must be monotone away from the start time".into(),
        ));
    }
    let (lo, hi) = if forward { (s, last) } else { (last, s) };
    let mut nodes = breakpoints_between(spec, lo, hi);
    if !forward {
        nodes.reverse();
    }

    let mut out = Vec::with_capacity(stops.len());
    let mut y = y0;
    let mut t = s;
    let mut h = 0.0;
    let mut bp = nodes.into_iter().peekable();
    for &stop in stops {
        loop {
            let next_bp = bp
                .peek()
                .copied()
                .filter(|&x| if forward { x < stop } else { x > stop });
            let target = next_bp.unwrap_or(stop);
            if target != t {
                let anchor = 0.5 * (t + target);
                y = rk::integrate(
                    |tt, yy: &[C64; N], dy: &mut [C64; N]| rhs(tt, anchor, yy, dy),
                    t,
                    y,
                    target,
                    tol,
                    &mut h,
                    stats,
                )?;
                t = target;
            }
            if next_bp.is_some() {
                bp.next();
            } else {
                break;
            }
        }
        out.push(y);
    }
    Ok(out)
}

#[inline]
fn matrix_rhs(spec: &ModelSpec, xi: f64) -> impl Fn(f64, f64, &[C64; 4], &mut [C64; 4]) + '_ {
    move |t, anchor, y, dy| {
        let w = spec.symbol_anchored(t, anchor, xi);
        let b2 = 2.0 * spec.b().eval_anchored(t, anchor);
        let iw = C64::new(0.0, w);
        // ∂_t E = i A E
        dy[0] = iw * y[2];
        dy[1] = iw * y[3];
        dy[2] = iw * y[0] - y[2] * b2;
        dy[3] = iw * y[1] - y[3] * b2;
    }
}

/// E(t, s, ξ) by adaptive integration.
pub fn propagate(spec: &ModelSpec, s: f64, t: f64, xi: f64, tol: f64) -> Result<PropagationResult> {
    check_tol(tol)?;
    check_times(&[s, t, xi])?;
    let mut stats = rk::Stats::default();
    let y = drive(
        spec,
        s,
        Mat2C::IDENTITY.0,
        &[t],
        tol,
        matrix_rhs(spec, xi),
        &mut stats,
    )?;
    Ok(PropagationResult {
        matrix: Mat2C(y[0]),
        local_error_estimate: stats.max_scaled_error * tol,
        steps_taken: stats.steps,
        rhs_evaluations: stats.rhs_evals,
    })
}

/// E(τ, s, ξ) for every τ in `times` (monotone away from `s`) in one sweep.
pub fn propagate_through(
    spec: &ModelSpec,
    s: f64,
    times: &[f64],
    xi: f64,
    tol: f64,
) -> Result<Vec<Mat2C>> {
    check_tol(tol)?;
    check_times(times)?;
    let mut stats = rk::Stats::default();
    let ys = drive(
        spec,
        s,
        Mat2C::IDENTITY.0,
        times,
        tol,
        matrix_rhs(spec, xi),
        &mut stats,
    )?;
    Ok(ys.into_iter().map(Mat2C).collect())
}

/// Propagates the constant-mass solution E₀ together with the difference
/// `E_ε − E₀` to the perturbed-mass solution, returning `(E₀, E_ε − E₀)`.
///
/// The difference is integrated directly (scaled by 1/ε), so it is resolved
/// to relative accuracy even when ε is far below the tolerance.
pub fn propagate_difference(
    spec_eps: &ModelSpec,
    spec_0: &ModelSpec,
    s: f64,
    t: f64,
    xi: f64,
    tol: f64,
) -> Result<(Mat2C, Mat2C)> {
    check_tol(tol)?;
    check_times(&[s, t, xi])?;
    if spec_eps.b() != spec_0.b() || spec_eps.m0() != spec_0.m0() || !spec_0.is_constant_mass() {
        return Err(Error::Precondition(
            "difference propagation needs a constant-mass reference sharing b and m0".into(),
        ));
    }
    let eps = spec_eps.epsilon();
    let crate::coefficients::Mass::Perturbed { m1, .. } = spec_eps.mass() else {
        return Ok((propagate(spec_0, s, t, xi, tol)?.matrix, Mat2C::ZERO));
    };
    let w0 = spec_0.symbol_m0(xi);
    let rhs = |tt: f64, anchor: f64, y: &[C64; 8], dy: &mut [C64; 8]| {
        let b2 = 2.0 * spec_0.b().eval_anchored(tt, anchor);
        let we = spec_eps.symbol_anchored(tt, anchor, xi);
        // (w_ε − w₀)/ε without cancellation
        let dw = m1.eval_anchored(tt, anchor) / (we + w0);
        let i0 = C64::new(0.0, w0);
        let ie = C64::new(0.0, we);
        let idw = C64::new(0.0, dw);
        dy[0] = i0 * y[2];
        dy[1] = i0 * y[3];
        dy[2] = i0 * y[0] - y[2] * b2;
        dy[3] = i0 * y[1] - y[3] * b2;
        dy[4] = ie * y[6] + idw * y[2];
        dy[5] = ie * y[7] + idw * y[3];
        dy[6] = ie * y[4] - y[6] * b2 + idw * y[0];
        dy[7] = ie * y[5] - y[7] * b2 + idw * y[1];
    };
    let mut y0 = [C64::new(0.0, 0.0); 8];
    y0[0] = C64::new(1.0, 0.0);
    y0[3] = C64::new(1.0, 0.0);
    let mut stats = rk::Stats::default();
    let y = drive(spec_eps, s, y0, &[t], tol, rhs, &mut stats)?[0];
    let e0 = Mat2C([y[0], y[1], y[2], y[3]]);
    let diff = Mat2C([y[4], y[5], y[6], y[7]]) * eps;
    Ok((e0, diff))
}

/// Cumulative integral on a uniform grid with a fourth-order local rule.
fn cumulative_integral(values: &[Mat2C], h: f64) -> Vec<Mat2C> {
    let m = values.len() - 1;
    let mut out = Vec::with_capacity(m + 1);
    out.push(Mat2C::ZERO);
    let mut acc = Mat2C::ZERO;
    let w = h / 24.0;
    for j in 0..m {
        let piece = if j == 0 {
            values[0] * 9.0 + values[1] * 19.0 - values[2] * 5.0 + values[3]
        } else if j == m - 1 {
            values[m - 3] - values[m - 2] * 5.0 + values[m - 1] * 19.0 + values[m] * 9.0
        } else {
            (values[j] + values[j + 1]) * 13.0 - values[j - 1] - values[j + 2]
        };
        acc = acc + piece * w;
        out.push(acc);
    }
    out
}

/// Truncated Peano–Baker series
/// `I + Σ_{ℓ=1}^{terms} iˡ ∫_s^t A(t₁) ∫_s^{t₁} A(t₂) ⋯ ∫_s^{t_{ℓ−1}} A(t_ℓ) dt_ℓ ⋯ dt₁`.
///
/// Oracle only: every iterated integral is a cumulative fourth-order
/// quadrature on a fixed grid of 4000 intervals, and the truncation error is
/// about `(‖A‖|t−s|)^{terms+1} / (terms+1)!`.
pub fn peano_baker_truncated(
    spec: &ModelSpec,
    s: f64,
    t: f64,
    xi: f64,
    terms: usize,
) -> Result<Mat2C> {
    check_times(&[s, t, xi])?;
    if terms > PEANO_BAKER_MAX_TERMS {
        return Err(Error::Precondition(format!(
            "at most {PEANO_BAKER_MAX_TERMS} Peano-Baker terms are supported, got {terms}"
        )));
    }
    if terms == 0 || s == t {
        return Ok(Mat2C::IDENTITY);
    }
    let m = PEANO_BAKER_NODES;
    let h = (t - s) / m as f64;
    let a: Vec<Mat2C> = (0..=m)
        .map(|j| system_matrix(spec, s + j as f64 * h, xi))
        .collect::<Result<_>>()?;
    let sup_norm = a.iter().map(Mat2C::spectral_norm).fold(0.0, f64::max);
    if sup_norm * (t - s).abs() > PEANO_BAKER_WINDOW {
        return Err(Error::Precondition(format!(
            "|t - s| * sup|A| = {} exceeds the Peano-Baker window {PEANO_BAKER_WINDOW}",
            sup_norm * (t - s).abs()
        )));
    }
    // term_ℓ(τ) = i ∫_s^τ A(σ) term_{ℓ-1}(σ) dσ
    let mut term = vec![Mat2C::IDENTITY; m + 1];
    let mut sum = Mat2C::IDENTITY;
    for _ in 0..terms {
        let integrand: Vec<Mat2C> = a.iter().zip(&term).map(|(ai, pi)| *ai * *pi).collect();
        term = cumulative_integral(&integrand, h)
            .into_iter()
            .map(|x| x * I)
            .collect();
        sum = sum + term[m];
    }
    Ok(sum)
}
