//! Closed-form 2×2 complex linear algebra.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;

/// 2×2 complex matrix, row-major `[a11, a12, a21, a22]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2C(pub [C64; 4]);

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

impl Mat2C {
    pub const IDENTITY: Mat2C = Mat2C([ONE, ZERO, ZERO, ONE]);
    pub const ZERO: Mat2C = Mat2C([ZERO, ZERO, ZERO, ZERO]);

    pub fn new(a11: C64, a12: C64, a21: C64, a22: C64) -> Self {
        Mat2C([a11, a12, a21, a22])
    }

    pub fn real(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2C([a11.into(), a12.into(), a21.into(), a22.into()])
    }

    pub fn diag(a: C64, b: C64) -> Self {
        Mat2C([a, ZERO, ZERO, b])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[2 * row + col]
    }

    #[inline]
    pub fn trace(&self) -> C64 {
        self.0[0] + self.0[3]
    }

    #[inline]
    pub fn det(&self) -> C64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let [a, b, c, d] = self.0;
        Mat2C([a.conj(), c.conj(), b.conj(), d.conj()])
    }

    /// Inverse via the adjugate; `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == ZERO || !det.is_finite() {
            return None;
        }
        let [a, b, c, d] = self.0;
        let inv = det.inv();
        Some(Mat2C([d * inv, -b * inv, -c * inv, a * inv]))
    }

    pub fn scale(&self, s: C64) -> Self {
        Mat2C(self.0.map(|x| x * s))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.is_finite())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Mat2C) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn commutator(&self, other: &Mat2C) -> Self {
        *self * *other - *other * *self
    }

    /// `self^k` by repeated squaring.
    pub fn pow(&self, mut k: u32) -> Self {
        let mut base = *self;
        let mut acc = Mat2C::IDENTITY;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }

    /// Roots of `λ² − tr·λ + det`, larger-magnitude root first.
    ///
    /// The larger root is formed without cancellation and the smaller one
    /// recovered as `det / root`.
    pub fn eigenvalues(&self) -> (C64, C64) {
        let tr = self.trace();
        let det = self.det();
        let sq = (tr * tr - det * 4.0).sqrt();
        // pick the sign that adds magnitudes
        let s = if (tr.conj() * sq).re >= 0.0 { sq } else { -sq };
        let big = (tr + s) * 0.5;
        if big == ZERO {
            return (ZERO, ZERO);
        }
        (big, det / big)
    }

    /// Operator 2-norm (largest singular value).
    ///
    /// Uses σ₁ ± σ₂ = √(‖M‖_F² ± 2|det M|), which avoids forming MᴴM.
    pub fn spectral_norm(&self) -> f64 {
        let f2 = self.frobenius_sq();
        let d = 2.0 * self.det().norm();
        0.5 * ((f2 + d).sqrt() + (f2 - d).max(0.0).sqrt())
    }

    /// Smallest singular value.
    pub fn min_singular_value(&self) -> f64 {
        let f2 = self.frobenius_sq();
        let d = 2.0 * self.det().norm();
        0.5 * ((f2 + d).sqrt() - (f2 - d).max(0.0).sqrt())
    }
}

impl Mul for Mat2C {
    type Output = Mat2C;
    #[inline]
    fn mul(self, rhs: Mat2C) -> Mat2C {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Mat2C([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }
}

impl Mul<C64> for Mat2C {
    type Output = Mat2C;
    fn mul(self, rhs: C64) -> Mat2C {
        self.scale(rhs)
    }
}

impl Mul<f64> for Mat2C {
    type Output = Mat2C;
    fn mul(self, rhs: f64) -> Mat2C {
        Mat2C(self.0.map(|x| x * rhs))
    }
}

impl Add for Mat2C {
    type Output = Mat2C;
    fn add(self, rhs: Mat2C) -> Mat2C {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        Mat2C(out)
    }
}

impl Sub for Mat2C {
    type Output = Mat2C;
    fn sub(self, rhs: Mat2C) -> Mat2C {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o -= r;
        }
        Mat2C(out)
    }
}

impl Neg for Mat2C {
    type Output = Mat2C;
    fn neg(self) -> Mat2C {
        Mat2C(self.0.map(|x| -x))
    }
}

/// Free-function form of [`Mat2C::eigenvalues`].
pub fn eigenvalues_2x2(m: &Mat2C) -> (C64, C64) {
    m.eigenvalues()
}

/// Free-function form of [`Mat2C::spectral_norm`].
pub fn spectral_norm_2x2(m: &Mat2C) -> f64 {
    m.spectral_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn arb_mat() -> impl Strategy<Value = Mat2C> {
        prop::array::uniform8(-3.0f64..3.0)
            .prop_map(|v| Mat2C([c(v[0], v[1]), c(v[2], v[3]), c(v[4], v[5]), c(v[6], v[7])]))
    }

    /// Largest eigenvalue of MᴴM by power iteration.
    fn power_iteration_norm(m: &Mat2C) -> f64 {
        let h = m.adjoint() * *m;
        let mut v = [c(1.0, 0.3), c(0.7, -0.2)];
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let w = [h.0[0] * v[0] + h.0[1] * v[1], h.0[2] * v[0] + h.0[3] * v[1]];
            let n = (w[0].norm_sqr() + w[1].norm_sqr()).sqrt();
            if n == 0.0 {
                return 0.0;
            }
            lambda = n / (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            v = [w[0] / n, w[1] / n];
        }
        lambda.sqrt()
    }

    #[test]
    fn eigenvalue_examples() {
        let (a, b) = Mat2C::diag(c(2.0, 0.0), c(-0.5, 1.0)).eigenvalues();
        let mut got = [a, b];
        got.sort_by(|x, y| x.re.total_cmp(&y.re));
        assert!((got[0] - c(-0.5, 1.0)).norm() < 1e-15);
        assert!((got[1] - c(2.0, 0.0)).norm() < 1e-15);
        // tr = 0, det = -1
        let (a, b) = Mat2C::real(0.0, 1.0, 1.0, 0.0).eigenvalues();
        assert!((a.re.abs() - 1.0).abs() < 1e-15 && (b.re.abs() - 1.0).abs() < 1e-15);
        assert!((a + b).norm() < 1e-15);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(Mat2C::IDENTITY.spectral_norm(), 1.0);
        assert!((Mat2C::real(0.0, 2.0, 0.0, 0.0).spectral_norm() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pow_matches_repeated_product() {
        let m = Mat2C::new(c(0.3, 0.1), c(-0.4, 0.2), c(0.9, 0.0), c(0.1, -0.7));
        let mut acc = Mat2C::IDENTITY;
        for _ in 0..13 {
            acc = acc * m;
        }
        assert!(m.pow(13).max_abs_diff(&acc) < 1e-14);
    }

    proptest! {
        #[test]
        fn eigenvalue_residual(m in arb_mat()) {
            let tr = m.trace();
            let det = m.det();
            let (a, b) = m.eigenvalues();
            for l in [a, b] {
                let r = (l * l - tr * l + det).norm();
                prop_assert!(r <= 1e-12 * (1.0 + l.norm_sqr()),
                    "residual {r}");
            }
            let prod = a * b;
            prop_assert!((prod - det).norm() <= 1e-12 * det.norm().max(1e-300) + 1e-14);
        }

        #[test]
        fn spectral_norm_matches_power_iteration(m in arb_mat()) {
            let closed = m.spectral_norm();
            let oracle = power_iteration_norm(&m);
            prop_assert!((closed - oracle).abs() <= 1e-10 * closed.max(1.0),
                "{closed} vs {oracle}");
            // σ_max² is the top eigenvalue of MᴴM
            let h = m.adjoint() * m;
            let (top, _) = h.eigenvalues();
            prop_assert!((closed * closed - top.re).abs() <= 1e-12 * top.re.max(1e-300) + 1e-13);
            let entry_max = m.0.iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(closed + 1e-12 >= entry_max);
        }

        #[test]
        fn inverse_roundtrip(m in arb_mat()) {
            prop_assume!(m.det().norm() > 1e-3);
            let inv = m.inverse().unwrap();
            prop_assert!((m * inv).max_abs_diff(&Mat2C::IDENTITY) < 1e-10);
        }
    }
}
