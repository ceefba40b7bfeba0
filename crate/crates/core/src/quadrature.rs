//! Adaptive Gauss–Kronrod (7/15) quadrature for smooth pieces.

#![allow(clippy::excessive_precision)]

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_DEPTH: u32 = 40;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol.max(f64::EPSILON * value.abs()) || depth >= MAX_DEPTH {
        return value;
    }
    let mid = 0.5 * (a + b);
    adapt(f, a, mid, 0.5 * tol, depth + 1) + adapt(f, mid, b, 0.5 * tol, depth + 1)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, tol);
    }
    adapt(&f, a, b, tol, 0)
}

/// Integrates over `[a, b]`, splitting at the interior `breaks` so each panel
/// sees a smooth integrand. `f` receives `(t, anchor)` where `anchor` is the
/// panel midpoint, used by piecewise coefficients to pick their branch.
pub fn integrate_piecewise<F>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate_piecewise(f, b, a, breaks, tol);
    }
    let mut nodes = Vec::with_capacity(breaks.len() + 2);
    nodes.push(a);
    nodes.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    nodes.push(b);
    nodes.sort_by(f64::total_cmp);
    let panel_tol = tol / (nodes.len() - 1) as f64;
    nodes
        .windows(2)
        .map(|w| {
            let anchor = 0.5 * (w[0] + w[1]);
            integrate(|t| f(t, anchor), w[0], w[1], panel_tol)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-14);
        assert!((v - 9.0).abs() < 1e-13);
        let v = integrate(f64::exp, 0.0, 1.0, 1e-14);
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-13);
        assert!((integrate(f64::exp, 1.0, 0.0, 1e-14) + v).abs() < 1e-15);
    }

    #[test]
    fn kink_split() {
        // |x - 0.3| on [0, 1]
        let v = integrate_piecewise(|x, _| (x - 0.3).abs(), 0.0, 1.0, &[0.3], 1e-14);
        assert!((v - (0.045 + 0.245)).abs() < 1e-14);
    }
}
