//! Dormand–Prince 5(4) with local extrapolation on fixed-size complex states.

use super::mat2::C64;
use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b̂ (error weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MAX_STEPS: u64 = 50_000_000;

/// Counters accumulated across segments.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Stats {
    pub steps: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    /// Largest accepted local error estimate, in units of the tolerance.
    pub max_scaled_error: f64,
}

#[inline]
fn combine<const N: usize>(y: &[C64; N], h: f64, terms: &[(f64, &[C64; N])]) -> [C64; N] {
    let mut out = *y;
    for (w, k) in terms {
        if *w == 0.0 {
            continue;
        }
        let hw = h * w;
        for (o, ki) in out.iter_mut().zip(k.iter()) {
            *o += ki * hw;
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
///
/// `h_guess` carries the step size between consecutive segments and is
/// updated on return. Step acceptance uses the mixed entrywise test
/// `|err_i| ≤ tol · (1 + max(|y_i|, |y_new_i|))`.
pub(crate) fn integrate<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [C64; N],
    t1: f64,
    tol: f64,
    h_guess: &mut f64,
    stats: &mut Stats,
) -> Result<[C64; N]>
where
    F: FnMut(f64, &[C64; N], &mut [C64; N]),
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = [C64::new(0.0, 0.0); N];
    f(t, &y, &mut k1);
    stats.rhs_evals += 1;

    let mut h = if *h_guess > 0.0 {
        h_guess.min(span.abs())
    } else {
        // crude first guess from the derivative size
        let scale = k1.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-3);
        (0.01 / scale).min(span.abs())
    };

    let mut k2 = k1;
    let mut k3 = k1;
    let mut k4 = k1;
    let mut k5 = k1;
    let mut k6 = k1;
    let mut k7 = k1;

    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 0.0 {
            break;
        }
        let last = h >= remaining;
        let step = if last { remaining } else { h };
        let hs = step * dir;

        let y2 = combine(&y, hs, &[(A21, &k1)]);
        f(t + C2 * hs, &y2, &mut k2);
        let y3 = combine(&y, hs, &[(A31, &k1), (A32, &k2)]);
        f(t + C3 * hs, &y3, &mut k3);
        let y4 = combine(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f(t + C4 * hs, &y4, &mut k4);
        let y5 = combine(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        f(t + C5 * hs, &y5, &mut k5);
        let y6 = combine(
            &y,
            hs,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        let t_new = if last { t1 } else { t + hs };
        f(t_new, &y6, &mut k6);
        let y_new = combine(
            &y,
            hs,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        f(t_new, &y_new, &mut k7);
        stats.rhs_evals += 6;

        let mut err = 0.0f64;
        for i in 0..N {
            let e =
                (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
            let sc = tol * (1.0 + y[i].norm().max(y_new[i].norm()));
            err = err.max(e.norm() / sc);
        }
        if !err.is_finite() || y_new.iter().any(|z| !z.is_finite()) {
            return Err(Error::Integration {
                time: t,
                reason: "non-finite state".into(),
            });
        }

        if err <= 1.0 {
            t = t_new;
            y = y_new;
            k1 = k7;
            stats.steps += 1;
            stats.max_scaled_error = stats.max_scaled_error.max(err);
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if !last {
                h = step * factor;
            } else {
                // keep the proposal for the next segment but not the clipped one
                h = h.max(step * factor);
            }
            if last {
                break;
            }
        } else {
            stats.rejected += 1;
            h = step * (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
        }

        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration {
                time: t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
        if stats.steps + stats.rejected > MAX_STEPS {
            return Err(Error::Integration {
                time: t,
                reason: "step budget exhausted".into(),
            });
        }
    }
    *h_guess = h;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_exponential() {
        let mut h = 0.0;
        let mut stats = Stats::default();
        let lambda = C64::new(-0.3, 2.0);
        let y = integrate(
            |_, y: &[C64; 1], dy: &mut [C64; 1]| dy[0] = lambda * y[0],
            0.0,
            [C64::new(1.0, 0.0)],
            3.0,
            1e-12,
            &mut h,
            &mut stats,
        )
        .unwrap();
        let exact = (lambda * 3.0).exp();
        assert!((y[0] - exact).norm() < 1e-10);
        // backwards
        let mut h = 0.0;
        let back = integrate(
            |_, y: &[C64; 1], dy: &mut [C64; 1]| dy[0] = lambda * y[0],
            3.0,
            y,
            0.0,
            1e-12,
            &mut h,
            &mut stats,
        )
        .unwrap();
        assert!((back[0] - C64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn underflow_reports_time() {
        let mut h = 0.0;
        let mut stats = Stats::default();
        // blows up at t = 1
        let r = integrate(
            |t, _y: &[C64; 1], dy: &mut [C64; 1]| dy[0] = C64::new(1.0 / (1.0 - t).powi(3), 0.0),
            0.0,
            [C64::new(0.0, 0.0)],
            2.0,
            1e-10,
            &mut h,
            &mut stats,
        );
        match r {
            Err(Error::Integration { time, .. }) => assert!(time > 0.9 && time <= 1.0),
            other => panic!("expected integration failure, got {other:?}"),
        }
    }
}
