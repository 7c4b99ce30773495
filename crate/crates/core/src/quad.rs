//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (i, (&x, &w)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let pair = f(c - h * x) + f(c + h * x);
        kronrod += w * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut stack = vec![(a, b, tol, 0u32)];
    let mut total = 0.0;
    let mut evaluations = 0usize;
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        evaluations += 15;
        if !v.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{lo}, {hi}]"
            )));
        }
        if err <= t || depth >= 48 {
            if err > t {
                return Err(Error::Quadrature(format!(
                    "subdivision limit on [{lo}, {hi}] (error estimate {err:e})"
                )));
            }
            total += v;
        } else {
            if evaluations > 5_000_000 {
                return Err(Error::Quadrature("evaluation budget exhausted".into()));
            }
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * t, depth + 1));
            stack.push((mid, hi, 0.5 * t, depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-13).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = integrate(|x| (-2.0 * x).exp(), 0.0, 30.0, 1e-14).unwrap();
        assert!((v - 0.5 * (1.0 - (-60f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn peaked_integrand() {
        let v = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10).unwrap();
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() < 1e-8, "{v} vs {exact}");
    }
}
