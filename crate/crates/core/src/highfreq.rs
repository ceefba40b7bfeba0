//! Large frequencies: diagonalization of the system by a constant unitary
//! change of variables and the corrector
//!
//! ```text
//! N₁(t, ξ) = [ 1   n⁻ ]      D_t n± = ∓2⟨ξ⟩ n± + i b,   n±(0) = 0,
//!            [ n⁺  1  ]
//! ```
//!
//! so that `D_t N₁ = [D₁, N₁] + R₁` with `D₁ = diag(⟨ξ⟩ + ib, −⟨ξ⟩ + ib)` and
//! `R₁ = ib·[[0,1],[1,0]]`. The remaining coupling is `R₂ = −N₁⁻¹R₁(I − N₁)`
//! and
//!
//! ```text
//! ‖M(t, ξ)‖ ≤ e^{−βT} · ‖N₁(t+T)‖ · e^{∫_t^{t+T} ‖R₂‖} · ‖N₁⁻¹(t)‖.
//! ```
//!
//! The threshold N is the smallest frequency beyond which the last three
//! factors stay below `e^{βT/2}`, which gives `‖M‖ ≤ e^{−βT/2}`.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::Serialize;

use crate::coefficients::{Mass, ModelSpec};
use crate::error::{Error, Result};
use crate::monodromy::{linspace, monodromy_family, PowerMax};
use crate::parallel::Workers;
use crate::propagator::{self, Mat2C, C64};

/// Frames with `|det N₁|` below this are rejected.
pub const FRAME_DET_MIN: f64 = 0.1;
pub const MIN_NODES_PER_PERIOD: usize = 4096;
/// Nodes per radian of `⟨ξ⟩T` for the corrector tables.
pub const NODES_PER_OSCILLATION: usize = 64;
/// Slack on the direct norm check `‖M‖ ≤ e^{−βT/2}`.
pub const WINDOW_BOUND_SLACK: f64 = 1e-6;

const I: C64 = C64::new(0.0, 1.0);
const GL3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// The constant unitary `U` with `U⁻¹ A U = D₁ + R₁`.
pub fn diagonalizer() -> Mat2C {
    Mat2C::real(FRAC_1_SQRT_2, -FRAC_1_SQRT_2, FRAC_1_SQRT_2, FRAC_1_SQRT_2)
}

/// `D₁ = diag(w + ib, −w + ib)`.
pub fn d1(w: f64, b: f64) -> Mat2C {
    Mat2C::diag(C64::new(w, b), C64::new(-w, b))
}

/// `R₁ = ib·[[0,1],[1,0]]`.
pub fn r1(b: f64) -> Mat2C {
    let ib = C64::new(0.0, b);
    Mat2C::new(C64::new(0.0, 0.0), ib, ib, C64::new(0.0, 0.0))
}

/// Corrector and remainder at one `(t, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagonalizationFrame {
    pub t: f64,
    pub xi: f64,
    pub n_plus: C64,
    pub n_minus: C64,
    pub n1: Mat2C,
    pub n1_inv: Mat2C,
    pub r2: Mat2C,
}

impl DiagonalizationFrame {
    pub fn from_correctors(t: f64, xi: f64, b: f64, n_plus: C64, n_minus: C64) -> Result<Self> {
        let one = C64::new(1.0, 0.0);
        let det = one - n_plus * n_minus;
        if det.norm() < FRAME_DET_MIN || !det.is_finite() {
            return Err(Error::Frame {
                t,
                xi,
                det_abs: det.norm(),
            });
        }
        let n1 = Mat2C::new(one, n_minus, n_plus, one);
        let inv = det.inv();
        let n1_inv = Mat2C::new(inv, -n_minus * inv, -n_plus * inv, inv);
        // R₁(I − N₁) = −ib·diag(n⁺, n⁻)
        let r2 = n1_inv * Mat2C::diag(n_plus, n_minus) * C64::new(0.0, b);
        Ok(Self {
            t,
            xi,
            n_plus,
            n_minus,
            n1,
            n1_inv,
            r2,
        })
    }
}

/// `∫₀¹ e^{iΔu} du` and `∫₀¹ u e^{iΔu} du`.
fn filon_moments(delta: f64) -> (C64, C64) {
    if delta.abs() < 0.1 {
        let z = I * delta;
        let mut term = C64::new(1.0, 0.0); // zⁿ/n!
        let mut i0 = C64::new(0.0, 0.0);
        let mut i1 = C64::new(0.0, 0.0);
        for n in 0..14 {
            i0 += term / (n + 1) as f64;
            i1 += term / (n + 2) as f64;
            term = term * z / (n + 1) as f64;
        }
        (i0, i1)
    } else {
        let e = C64::new(0.0, delta).exp();
        let i0 = (e - 1.0) / (I * delta);
        let i1 = e / (I * delta) + (e - 1.0) / (delta * delta);
        (i0, i1)
    }
}

/// `∫ e^{iθ(s)} b(s) ds` over one piece with θ and b linear in s.
#[inline]
fn filon_piece(len: f64, theta_a: f64, theta_b: f64, b_a: f64, b_b: f64) -> C64 {
    let (i0, i1) = filon_moments(theta_b - theta_a);
    C64::new(0.0, theta_a).exp() * (i0 * b_a + (i1 * (b_b - b_a))) * len
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Upper bound of `⟨ξ⟩_{m(t)}` from the mass model.
fn symbol_sup(spec: &ModelSpec, xi: f64) -> f64 {
    let extra = match spec.mass() {
        Mass::Constant { .. } => 0.0,
        Mass::Perturbed { epsilon, .. } => *epsilon,
    };
    (xi * xi + spec.m0() * spec.m0() + extra).sqrt()
}

/// Nodes per period: at least `max(4096, per_oscillation·⌈⟨ξ⟩T⌉)` and a
/// multiple of every entry of `align` and of the coefficient sample counts.
pub fn nodes_per_period(
    spec: &ModelSpec,
    xi: f64,
    per_oscillation: usize,
    align: &[usize],
) -> usize {
    let osc = (symbol_sup(spec, xi) * spec.period()).ceil().max(1.0) as usize;
    let base = MIN_NODES_PER_PERIOD.max(per_oscillation * osc);
    let step = align
        .iter()
        .chain(spec.sample_counts().iter())
        .filter(|&&a| a > 0)
        .fold(1, |acc, &a| lcm(acc, a));
    base.div_ceil(step) * step
}

/// `n±` on the uniform grid `tⱼ = j·T/P`, j = 0..=J.
#[derive(Debug, Clone)]
pub struct CorrectorTable {
    pub xi: f64,
    pub h: f64,
    pub nodes_per_period: usize,
    /// `Φ(tⱼ) = ∫₀^{tⱼ} ⟨ξ⟩_{m(r)} dr`.
    pub phase: Vec<f64>,
    pub n_plus: Vec<C64>,
    pub n_minus: Vec<C64>,
    /// `b(tⱼ)` (right limit at jumps).
    pub b: Vec<f64>,
    /// `∫₀^{tⱼ} ‖R₂‖`, trapezoid rule.
    pub r2_integral: Vec<f64>,
    /// Smallest `|det N₁|` on the grid and where it occurs.
    pub min_det: (f64, f64),
}

/// Phase increment and the `b` values at the ends of a smooth piece.
struct Piece {
    len: f64,
    dphi: f64,
    b_a: f64,
    b_b: f64,
}

struct PieceBuilder<'a> {
    spec: &'a ModelSpec,
    xi: f64,
    constant_w: Option<f64>,
    breaks: Vec<f64>,
}

impl<'a> PieceBuilder<'a> {
    fn new(spec: &'a ModelSpec, xi: f64) -> Self {
        let constant_w = spec.is_constant_mass().then(|| spec.symbol_m0(xi));
        Self {
            spec,
            xi,
            constant_w,
            breaks: spec.breakpoints(),
        }
    }

    fn piece(&self, a: f64, b: f64) -> Piece {
        let anchor = 0.5 * (a + b);
        let len = b - a;
        let dphi = match self.constant_w {
            Some(w) => w * len,
            None => {
                GL3_NODES
                    .iter()
                    .zip(GL3_WEIGHTS)
                    .map(|(&x, wgt)| {
                        wgt * self
                            .spec
                            .symbol_anchored(anchor + 0.5 * len * x, anchor, self.xi)
                    })
                    .sum::<f64>()
                    * 0.5
                    * len
            }
        };
        let coef = self.spec.b();
        Piece {
            len,
            dphi,
            b_a: coef.eval_anchored(a, anchor),
            b_b: coef.eval_anchored(b, anchor),
        }
    }

    /// Pieces of `[a, b]` (shorter than a period) split at coefficient
    /// breakpoints.
    fn pieces(&self, a: f64, b: f64, out: &mut Vec<Piece>) {
        out.clear();
        let period = self.spec.period();
        let guard = 1e-12 * period;
        let origin = (a / period).floor() * period;
        let (ra, rb) = (a - origin, b - origin);
        let mut prev = a;
        // breaks are sorted in [0, T); the interval may wrap into the next period
        for shift in [0.0, period] {
            let lo = self.breaks.partition_point(|&x| x + shift <= ra + guard);
            let hi = self.breaks.partition_point(|&x| x + shift < rb - guard);
            for &bp in &self.breaks[lo..hi.max(lo)] {
                let x = origin + shift + bp;
                out.push(self.piece(prev, x));
                prev = x;
            }
        }
        out.push(self.piece(prev, b));
    }
}

/// Adds the pieces to the running `(Φ, G⁺)`. Since `b` and `Φ` are real,
/// `G⁻ = conj(G⁺)` and `n⁻ = conj(n⁺)`.
fn accumulate(pieces: &[Piece], phi: &mut f64, g_plus: &mut C64) {
    for p in pieces {
        let phi_b = *phi + p.dphi;
        *g_plus += filon_piece(p.len, 2.0 * *phi, 2.0 * phi_b, p.b_a, p.b_b);
        *phi = phi_b;
    }
}

/// `n± = −e^{∓2iΦ}·G±` with `G± = ∫₀ᵗ e^{±2iΦ(s)} b(s) ds`.
#[inline]
fn correctors(phi: f64, g_plus: C64) -> (C64, C64) {
    let n_plus = -g_plus * C64::new(0.0, -2.0 * phi).exp();
    (n_plus, n_plus.conj())
}

impl CorrectorTable {
    /// Table over `[0, periods·T]` with `nodes_per_period` nodes per period.
    pub fn new(spec: &ModelSpec, xi: f64, periods: usize, nodes_per_period: usize) -> Result<Self> {
        if !(xi.is_finite() && xi >= 0.0) {
            return Err(Error::Precondition(format!(
                "xi must be finite and >= 0, got {xi}"
            )));
        }
        let p = nodes_per_period.max(1);
        let total = periods * p;
        let h = spec.period() / p as f64;
        let builder = PieceBuilder::new(spec, xi);

        let mut phase = Vec::with_capacity(total + 1);
        let mut n_plus = Vec::with_capacity(total + 1);
        let mut n_minus = Vec::with_capacity(total + 1);
        let mut b = Vec::with_capacity(total + 1);
        let mut r2_integral = Vec::with_capacity(total + 1);
        let mut min_det = (f64::INFINITY, 0.0);

        let (mut phi, mut gp) = (0.0, C64::new(0.0, 0.0));
        let mut buf = Vec::new();
        let mut prev_r2 = 0.0;
        let mut acc_r2 = 0.0;
        for j in 0..=total {
            let t = j as f64 * h;
            if j > 0 {
                builder.pieces((j - 1) as f64 * h, t, &mut buf);
                accumulate(&buf, &mut phi, &mut gp);
            }
            let (np, nm) = correctors(phi, gp);
            let bj = spec.b().eval(t);
            let det = (C64::new(1.0, 0.0) - np * nm).norm();
            if det < min_det.0 {
                min_det = (det, t);
            }
            let r2 = if det >= FRAME_DET_MIN {
                DiagonalizationFrame::from_correctors(t, xi, bj, np, nm)?
                    .r2
                    .spectral_norm()
            } else {
                f64::INFINITY
            };
            if j > 0 {
                acc_r2 += 0.5 * h * (prev_r2 + r2);
            }
            prev_r2 = r2;
            phase.push(phi);
            n_plus.push(np);
            n_minus.push(nm);
            b.push(bj);
            r2_integral.push(acc_r2);
        }
        Ok(Self {
            xi,
            h,
            nodes_per_period: p,
            phase,
            n_plus,
            n_minus,
            b,
            r2_integral,
            min_det,
        })
    }

    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    /// Fails with a frame error when some node has `|det N₁| < 0.1`.
    pub fn check_frames(&self) -> Result<()> {
        if self.min_det.0 < FRAME_DET_MIN {
            return Err(Error::Frame {
                t: self.min_det.1,
                xi: self.xi,
                det_abs: self.min_det.0,
            });
        }
        Ok(())
    }

    pub fn frame(&self, j: usize) -> Result<DiagonalizationFrame> {
        DiagonalizationFrame::from_correctors(
            self.time(j),
            self.xi,
            self.b[j],
            self.n_plus[j],
            self.n_minus[j],
        )
    }
}

/// `n±(t, ξ)` for `t ∈ [0, 2T]` by phase-resolved product quadrature.
pub fn n_pm(spec: &ModelSpec, t: f64, xi: f64) -> Result<(C64, C64)> {
    let period = spec.period();
    if !(0.0..=2.0 * period * (1.0 + 1e-12)).contains(&t) {
        return Err(Error::Precondition(format!(
            "n± is evaluated on [0, 2T]; got t = {t}"
        )));
    }
    if !(xi.is_finite() && xi >= 0.0) {
        return Err(Error::Precondition(format!(
            "xi must be finite and >= 0, got {xi}"
        )));
    }
    let p = nodes_per_period(spec, xi, NODES_PER_OSCILLATION, &[]);
    let h = period / p as f64;
    let whole = ((t / h).floor() as usize).min(2 * p);
    let builder = PieceBuilder::new(spec, xi);
    let (mut phi, mut gp) = (0.0, C64::new(0.0, 0.0));
    let mut buf = Vec::new();
    for j in 0..whole {
        builder.pieces(j as f64 * h, (j + 1) as f64 * h, &mut buf);
        accumulate(&buf, &mut phi, &mut gp);
    }
    let last = whole as f64 * h;
    if t > last {
        builder.pieces(last, t, &mut buf);
        accumulate(&buf, &mut phi, &mut gp);
    }
    Ok(correctors(phi, gp))
}

/// Oracle for [`n_pm`]: integrates `∂_t n± = ∓2i⟨ξ⟩n± − b` directly.
pub fn n_pm_by_ode(spec: &ModelSpec, t: f64, xi: f64, tol: f64) -> Result<(C64, C64)> {
    let mut stats = propagator::rk::Stats::default();
    let rhs = |tt: f64, anchor: f64, y: &[C64; 2], dy: &mut [C64; 2]| {
        let w = spec.symbol_anchored(tt, anchor, xi);
        let b = spec.b().eval_anchored(tt, anchor);
        dy[0] = C64::new(0.0, -2.0 * w) * y[0] - b;
        dy[1] = C64::new(0.0, 2.0 * w) * y[1] - b;
    };
    let zero = C64::new(0.0, 0.0);
    let y = propagator::drive(spec, 0.0, [zero, zero], &[t], tol, rhs, &mut stats)?;
    Ok((y[0][0], y[0][1]))
}

/// The frame at `(t, ξ)`, `t ∈ [0, 2T]`.
pub fn frame_at(spec: &ModelSpec, t: f64, xi: f64) -> Result<DiagonalizationFrame> {
    let (np, nm) = n_pm(spec, t, xi)?;
    DiagonalizationFrame::from_correctors(t, xi, spec.b().eval(t), np, nm)
}

/// `max_t ‖N₁(t+T)‖·e^{∫_t^{t+T}‖R₂‖}·‖N₁⁻¹(t)‖` over `tᵢ = i·T/t_points`.
pub fn suplarge_quantity(spec: &ModelSpec, xi: f64, t_points: usize) -> Result<f64> {
    if t_points == 0 {
        return Err(Error::Precondition("t_points must be positive".into()));
    }
    let p = nodes_per_period(spec, xi, NODES_PER_OSCILLATION, &[t_points]);
    let table = CorrectorTable::new(spec, xi, 2, p)?;
    table.check_frames()?;
    let stride = p / t_points;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..t_points {
        let j = i * stride;
        let start = table.frame(j)?;
        let end = table.frame(j + p)?;
        let integral = table.r2_integral[j + p] - table.r2_integral[j];
        let q = end.n1.spectral_norm() * integral.exp() * start.n1_inv.spectral_norm();
        worst = worst.max(q);
    }
    Ok(worst)
}

/// Central-difference residual `‖D_tN₁ − [D₁, N₁] − R₁‖` at the grid node
/// nearest to `t ∈ (0, 2T)`.
pub fn operator_identity_residual(spec: &ModelSpec, t: f64, xi: f64) -> Result<f64> {
    // finer than the production tables so the difference quotient resolves
    // the oscillation to ~1e-6 relative
    let p = nodes_per_period(spec, xi, 8 * NODES_PER_OSCILLATION, &[]);
    let table = CorrectorTable::new(spec, xi, 2, p)?;
    let j = ((t / table.h).round() as usize).clamp(1, table.len() - 2);
    let tj = table.time(j);
    let n1 = |k: usize| {
        let one = C64::new(1.0, 0.0);
        Mat2C::new(one, table.n_minus[k], table.n_plus[k], one)
    };
    let dt_n1 = (n1(j + 1) - n1(j - 1)) * (-I / (2.0 * table.h));
    let w = spec.symbol(tj, xi)?;
    let b = table.b[j];
    let residual = dt_n1 - d1(w, b).commutator(&n1(j)) - r1(b);
    Ok(residual.spectral_norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    pub t_points: usize,
    pub xi_points: usize,
    /// The window is `[N, window·N]`.
    pub window: f64,
    pub n_start: f64,
    pub n_max: f64,
    pub significant_digits: u32,
    /// Extra doublings allowed when the verification under the model's
    /// actual mass fails.
    pub max_verification_doublings: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            t_points: 64,
            xi_points: 128,
            window: 10.0,
            n_start: 1.0,
            n_max: 1e6,
            significant_digits: 3,
            max_verification_doublings: 8,
        }
    }
}

impl ThresholdOptions {
    pub fn xi_grid(&self, n: f64) -> Vec<f64> {
        linspace(n, self.window * n, self.xi_points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdStep {
    pub n_candidate: f64,
    /// `+∞` when some frame on the window was near-singular.
    pub sup_value: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    #[serde(rename = "N")]
    pub n: f64,
    /// Search value at N (massless symbol).
    pub sup_value: f64,
    /// `e^{βT/2}`.
    pub target: f64,
    pub xi_max_checked: f64,
    pub t_points: usize,
    pub xi_points: usize,
    /// Value at N under the model's own mass on the doubled grid.
    pub verification_sup: f64,
    pub verification_t_points: usize,
    pub verification_xi_points: usize,
    pub trace: Vec<ThresholdStep>,
}

fn window_sup(
    spec: &ModelSpec,
    n: f64,
    t_points: usize,
    xi_points: usize,
    window: f64,
    workers: &Workers,
) -> Result<f64> {
    let grid = linspace(n, window * n, xi_points);
    let values = workers.map(&grid, |&xi| match suplarge_quantity(spec, xi, t_points) {
        Err(Error::Frame { .. }) => Ok(f64::INFINITY),
        other => other,
    });
    values
        .into_iter()
        .try_fold(f64::NEG_INFINITY, |acc, v| v.map(|v| acc.max(v)))
}

/// Rounds up to `digits` significant digits.
fn ceil_significant(x: f64, digits: u32) -> f64 {
    if x <= 0.0 {
        return x;
    }
    let scale = 10f64.powi(digits as i32 - 1 - x.log10().floor() as i32);
    let r = (x * scale).ceil() / scale;
    if r < x {
        x
    } else {
        r
    }
}

/// Smallest N (doubling from `n_start`, then bisection to the requested
/// significant digits) with the window supremum below `e^{βT/2}`.
///
/// The search runs with the massless symbol `⟨ξ⟩ = |ξ|`, so the value does
/// not depend on the mass at all. The result is then re-checked under the
/// model's own mass on a doubled grid and doubled again if needed.
pub fn find_threshold_n(
    spec: &ModelSpec,
    opts: &ThresholdOptions,
    workers: &Workers,
) -> Result<ThresholdResult> {
    if !(opts.n_start > 0.0 && opts.window > 1.0 && opts.xi_points >= 2 && opts.t_points >= 1) {
        return Err(Error::Precondition(
            "invalid threshold search options".into(),
        ));
    }
    let target = (0.5 * spec.beta() * spec.period()).exp();
    let search = spec.with_constant_mass(0.0)?;
    let mut trace = Vec::new();
    let probe = |n: f64, trace: &mut Vec<ThresholdStep>| -> Result<f64> {
        let v = window_sup(
            &search,
            n,
            opts.t_points,
            opts.xi_points,
            opts.window,
            workers,
        )?;
        trace.push(ThresholdStep {
            n_candidate: n,
            sup_value: v,
            accepted: v <= target,
        });
        Ok(v)
    };

    let mut hi = opts.n_start;
    let mut hi_value = probe(hi, &mut trace)?;
    while hi_value > target {
        hi *= 2.0;
        if hi > opts.n_max {
            return Err(Error::ThresholdSearch {
                candidate: hi / 2.0,
                sup_value: hi_value,
                target,
            });
        }
        hi_value = probe(hi, &mut trace)?;
    }
    if hi > opts.n_start {
        let mut lo = hi / 2.0;
        let rel = 0.5 * 10f64.powi(-(opts.significant_digits as i32 - 1));
        while hi - lo > rel * 0.1 * hi {
            let mid = 0.5 * (lo + hi);
            let v = probe(mid, &mut trace)?;
            if v <= target {
                hi = mid;
                hi_value = v;
            } else {
                lo = mid;
            }
        }
        let rounded = ceil_significant(hi, opts.significant_digits);
        if rounded != hi {
            let v = probe(rounded, &mut trace)?;
            if v <= target {
                hi = rounded;
                hi_value = v;
            }
        }
    }

    let vt = 2 * opts.t_points;
    let vx = 2 * opts.xi_points;
    let mut n = hi;
    let mut verification = window_sup(spec, n, vt, vx, opts.window, workers)?;
    let mut doublings = 0;
    while verification > target {
        if doublings == opts.max_verification_doublings || 2.0 * n > opts.n_max {
            return Err(Error::ThresholdSearch {
                candidate: n,
                sup_value: verification,
                target,
            });
        }
        n *= 2.0;
        doublings += 1;
        hi_value = probe(n, &mut trace)?;
        verification = window_sup(spec, n, vt, vx, opts.window, workers)?;
    }
    Ok(ThresholdResult {
        n,
        sup_value: hi_value,
        target,
        xi_max_checked: opts.window * n,
        t_points: opts.t_points,
        xi_points: opts.xi_points,
        verification_sup: verification,
        verification_t_points: vt,
        verification_xi_points: vx,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowBoundCheck {
    pub max_norm: f64,
    /// `e^{−βT/2}`.
    pub bound: f64,
    pub worst_t: f64,
    pub worst_xi: f64,
    pub passed: bool,
}

/// Direct check of `max ‖M(t, ξ)‖ ≤ e^{−βT/2} + 10⁻⁶` over `tᵢ = i·T/t_points`
/// and the frequency window `[N, window·N]`.
pub fn window_bound_check(
    spec: &ModelSpec,
    n: f64,
    opts: &ThresholdOptions,
    tol: f64,
    workers: &Workers,
) -> Result<WindowBoundCheck> {
    let period = spec.period();
    let times: Vec<f64> = (0..opts.t_points)
        .map(|i| i as f64 * period / opts.t_points as f64)
        .collect();
    let xi_grid = opts.xi_grid(n);
    let per_xi = workers.map(&xi_grid, |&xi| -> Result<PowerMax> {
        let family = monodromy_family(spec, xi, &times, tol)?;
        Ok(times
            .iter()
            .zip(&family.matrices)
            .map(|(&t, m)| PowerMax {
                value: m.spectral_norm(),
                t,
                xi,
            })
            .fold(
                PowerMax {
                    value: f64::NEG_INFINITY,
                    t: f64::NAN,
                    xi,
                },
                |a, b| if b.value > a.value { b } else { a },
            ))
    });
    let mut worst = PowerMax {
        value: f64::NEG_INFINITY,
        t: f64::NAN,
        xi: f64::NAN,
    };
    for r in per_xi {
        let r = r?;
        if r.value > worst.value {
            worst = r;
        }
    }
    let bound = (-0.5 * spec.beta() * period).exp();
    Ok(WindowBoundCheck {
        max_norm: worst.value,
        bound,
        worst_t: worst.t,
        worst_xi: worst.xi,
        passed: worst.value <= bound + WINDOW_BOUND_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Interpolation, PeriodicCoefficient};
    use crate::propagator::system_matrix;
    use proptest::prelude::*;

    fn sin_spec(m0: f64) -> ModelSpec {
        ModelSpec::constant_mass(
            PeriodicCoefficient::sin_offset(1.0, 0.5, 0.0, 1.0).unwrap(),
            m0,
        )
        .unwrap()
    }

    fn perturbed_sin(m0: f64, eps: f64) -> ModelSpec {
        ModelSpec::new(
            PeriodicCoefficient::sin_offset(1.0, 0.5, 0.0, 1.0).unwrap(),
            Mass::Perturbed {
                m0,
                epsilon: eps,
                m1: PeriodicCoefficient::sin_offset(0.0, 1.0, 0.3, 1.0).unwrap(),
            },
        )
        .unwrap()
    }

    #[test]
    fn unitary_change_of_variables() {
        let spec = sin_spec(1.0);
        let u = diagonalizer();
        let u_inv = u.inverse().unwrap();
        for &(t, xi) in &[(0.1, 0.0), (0.7, 3.0), (0.35, 20.0)] {
            let a = system_matrix(&spec, t, xi).unwrap();
            let w = spec.symbol(t, xi).unwrap();
            let b = spec.b().eval(t);
            let lhs = u_inv * a * u;
            assert!(lhs.max_abs_diff(&(d1(w, b) + r1(b))) < 1e-14);
        }
        assert!((u.adjoint() * u).max_abs_diff(&Mat2C::IDENTITY) < 1e-15);
    }

    #[test]
    fn correctors_vanish_at_zero() {
        let (p, m) = n_pm(&sin_spec(1.0), 0.0, 5.0).unwrap();
        assert_eq!((p, m), (C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
        let f = frame_at(&sin_spec(1.0), 0.0, 5.0).unwrap();
        assert_eq!(f.n1, Mat2C::IDENTITY);
        assert_eq!(f.r2, Mat2C::ZERO);
    }

    #[test]
    fn constant_coefficient_closed_form() {
        // n± = −b0 (1 − e^{∓2iwt}) / (±2iw), |n±| ≤ b0/w
        let b0 = 0.7;
        let spec =
            ModelSpec::constant_mass(PeriodicCoefficient::constant(b0, 1.0).unwrap(), 1.0).unwrap();
        for &(t, xi) in &[(0.3, 2.0), (1.0, 7.5), (1.9, 30.0)] {
            let w = (xi * xi + 1.0f64).sqrt();
            let (p, m) = n_pm(&spec, t, xi).unwrap();
            let ep = -b0 * (1.0 - C64::new(0.0, -2.0 * w * t).exp()) / C64::new(0.0, 2.0 * w);
            let em = -b0 * (1.0 - C64::new(0.0, 2.0 * w * t).exp()) / C64::new(0.0, -2.0 * w);
            assert!((p - ep).norm() < 1e-12, "{p} vs {ep}");
            assert!((m - em).norm() < 1e-12);
            assert!(p.norm() <= b0 / w + 1e-15 && m.norm() <= b0 / w + 1e-15);
        }
    }

    #[test]
    fn quadrature_matches_ode_oracle() {
        let specs = [
            sin_spec(1.0),
            perturbed_sin(1.5, 0.8),
            ModelSpec::constant_mass(
                PeriodicCoefficient::square(0.4, 1.2, 0.3, 1.0).unwrap(),
                1.0,
            )
            .unwrap(),
            ModelSpec::constant_mass(PeriodicCoefficient::triangle(0.2, 1.0, 1.0).unwrap(), 0.5)
                .unwrap(),
        ];
        let points = [
            (0.13, 1.0),
            (0.77, 4.0),
            (1.31, 9.0),
            (2.0, 25.0),
            (1.5, 0.0),
        ];
        for spec in &specs {
            for &(t, xi) in &points {
                let q = n_pm(spec, t, xi).unwrap();
                let o = n_pm_by_ode(spec, t, xi, 1e-12).unwrap();
                assert!((q.0 - o.0).norm() < 1e-7, "{t} {xi}: {} vs {}", q.0, o.0);
                assert!((q.1 - o.1).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn remainder_consistency_bound() {
        let spec = sin_spec(1.0);
        for &(t, xi) in &[(0.2, 3.0), (0.9, 6.0), (1.6, 12.0)] {
            let f = frame_at(&spec, t, xi).unwrap();
            let b = spec.b().eval(t);
            let bound = f.n1_inv.spectral_norm() * b * (Mat2C::IDENTITY - f.n1).spectral_norm();
            assert!(f.r2.spectral_norm() <= bound * (1.0 + 1e-12));
            assert!((f.n1 * f.n1_inv).max_abs_diff(&Mat2C::IDENTITY) < 1e-10);
            assert!((f.n1.det() - (1.0 - f.n_plus * f.n_minus)).norm() < 1e-15);
        }
    }

    #[test]
    fn remainder_decays_in_frequency() {
        let spec = sin_spec(1.0);
        let sup_r2 = |xi: f64| {
            let p = nodes_per_period(&spec, xi, NODES_PER_OSCILLATION, &[]);
            let table = CorrectorTable::new(&spec, xi, 2, p).unwrap();
            (0..table.len())
                .map(|j| table.frame(j).unwrap().r2.spectral_norm())
                .fold(0.0, f64::max)
        };
        let values: Vec<f64> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&x| sup_r2(x))
            .collect();
        for w in values.windows(2) {
            assert!(w[1] < w[0], "{values:?}");
        }
    }

    #[test]
    fn frame_guard_rejects_small_determinant() {
        let r = DiagonalizationFrame::from_correctors(
            0.0,
            0.1,
            1.0,
            C64::new(1.0, 0.0),
            C64::new(0.95, 0.0),
        );
        assert!(matches!(r, Err(Error::Frame { .. })));
    }

    #[test]
    fn corrector_decay_law() {
        // max_t |n±|·ξ stays bounded as ξ grows
        let spec = sin_spec(1.0);
        let scaled: Vec<f64> = [50.0, 100.0, 200.0, 400.0]
            .iter()
            .map(|&xi| {
                let p = nodes_per_period(&spec, xi, NODES_PER_OSCILLATION, &[]);
                let table = CorrectorTable::new(&spec, xi, 2, p).unwrap();
                let m = table
                    .n_plus
                    .iter()
                    .chain(&table.n_minus)
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                m * xi
            })
            .collect();
        let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scaled.iter().copied().fold(0.0, f64::max);
        assert!(hi / lo < 1.1, "{scaled:?}");
        // |b| ≤ 1.5, and |n±| ≤ (b(0) + b(t) + ∫|b'|)/(2ξ)
        assert!(
            hi <= 0.5 * (1.5 + 1.5 + 2.0 * std::f64::consts::PI),
            "{scaled:?}"
        );
    }

    #[test]
    fn operator_identity_holds() {
        let spec = sin_spec(1.0);
        for &(t, xi) in &[(0.31, 5.0), (1.2, 20.0), (1.77, 80.0)] {
            let r = operator_identity_residual(&spec, t, xi).unwrap();
            assert!(r <= 1e-4, "residual {r} at ({t}, {xi})");
        }
        let spec = perturbed_sin(1.5, 0.8);
        let r = operator_identity_residual(&spec, 0.6, 12.0).unwrap();
        assert!(r <= 1e-4, "perturbed residual {r}");
    }

    #[test]
    fn suplarge_tends_to_one() {
        let spec = sin_spec(1.0);
        let v = suplarge_quantity(&spec, 1e4, 64).unwrap();
        assert!(v >= 1.0 && v - 1.0 < 1e-3, "{v}");
        // O(1/ξ) approach: ten times the frequency, about a tenth of the excess
        let v3 = suplarge_quantity(&spec, 1e3, 64).unwrap();
        let ratio = (v3 - 1.0) / (v - 1.0);
        assert!(ratio > 5.0 && ratio < 20.0, "{v3} {v} {ratio}");
    }

    #[test]
    fn suplarge_trivial_frame_is_one() {
        // b ≡ 0 gives n± ≡ 0, N₁ ≡ I, R₂ ≡ 0
        let spec = ModelSpec::constant_mass(PeriodicCoefficient::constant(0.0, 1.0).unwrap(), 1.0)
            .unwrap();
        assert_eq!(suplarge_quantity(&spec, 3.0, 16).unwrap(), 1.0);
    }

    #[test]
    fn threshold_search_and_window_bound() {
        let spec = sin_spec(1.0);
        let opts = ThresholdOptions::default();
        let workers = Workers::new(4).unwrap();
        let r = find_threshold_n(&spec, &opts, &workers).unwrap();
        assert!(r.sup_value <= r.target && r.verification_sup <= r.target);
        assert!(r.trace.last().is_some());
        // decreasing over {N, 2N, 4N}
        let v: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&f| suplarge_quantity(&spec, f * r.n, 64).unwrap())
            .collect();
        assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
        // mass independence
        let r5 = find_threshold_n(&sin_spec(5.0), &opts, &workers).unwrap();
        assert_eq!(r.n, r5.n);
        let check = window_bound_check(&spec, r.n, &opts, 1e-10, &workers).unwrap();
        assert!(check.passed, "{check:?}");
    }

    #[test]
    fn threshold_for_constant_dissipation_scales_with_beta() {
        let opts = ThresholdOptions::default();
        let workers = Workers::new(4).unwrap();
        let n_of = |b0: f64| {
            let spec =
                ModelSpec::constant_mass(PeriodicCoefficient::constant(b0, 1.0).unwrap(), 1.0)
                    .unwrap();
            let r = find_threshold_n(&spec, &opts, &workers).unwrap();
            // doubled verification grid
            let v = window_sup(&spec, r.n, 128, 256, 10.0, &workers).unwrap();
            assert!(v <= r.target);
            r.n
        };
        let (n1, n2) = (n_of(0.5), n_of(1.0));
        assert!(n2 > n1);
    }

    #[test]
    fn step_coefficient_tables_align_with_samples() {
        let b =
            PeriodicCoefficient::sampled(vec![0.5, 1.5, 1.0], Interpolation::Step, 1.0).unwrap();
        let spec = ModelSpec::constant_mass(b, 1.0).unwrap();
        let p = nodes_per_period(&spec, 2.0, NODES_PER_OSCILLATION, &[64]);
        assert_eq!(p % 3, 0);
        assert_eq!(p % 64, 0);
        assert!(p >= MIN_NODES_PER_PERIOD);
    }

    #[test]
    fn significant_digit_rounding() {
        assert_eq!(ceil_significant(4.6812, 3), 4.69);
        assert_eq!(ceil_significant(2.5, 3), 2.5);
        assert_eq!(ceil_significant(1234.5, 3), 1240.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]

        #[test]
        fn filon_moments_continuous_across_switch(d in 0.09f64..0.11) {
            let (a0, a1) = filon_moments(d);
            // closed forms on both sides of the switch
            let e = C64::new(0.0, d).exp();
            let c0 = (e - 1.0) / (I * d);
            let c1 = e / (I * d) + (e - 1.0) / (d * d);
            prop_assert!((a0 - c0).norm() < 1e-13);
            prop_assert!((a1 - c1).norm() < 1e-12);
        }
    }
}
