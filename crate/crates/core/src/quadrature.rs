//! Adaptive Gauss–Kronrod (7/15) quadrature and a plain midpoint rule.

use crate::{Error, Result};

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub abs_error: f64,
}

fn checked(f: &impl Fn(f64) -> f64, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteDrift { at: x, value: v })
    }
}

/// One 15-point Kronrod panel; error is the Kronrod–Gauss difference.
pub fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Result<Quad> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = checked(f, c)?;
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = checked(f, c - dx)? + checked(f, c + dx)?;
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    Ok(Quad {
        value: kron * h,
        abs_error: ((kron - gauss) * h).abs(),
    })
}

/// Adaptive bisection until every panel meets its share of
/// `max(abs_tol, rel_tol·|I|)`.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quad> {
    if a == b {
        return Ok(Quad {
            value: 0.0,
            abs_error: 0.0,
        });
    }
    let whole = gk15(&f, a, b)?;
    let mut acc = Quad {
        value: 0.0,
        abs_error: 0.0,
    };
    let tol = abs_tol.max(rel_tol * whole.value.abs());
    refine(&f, a, b, whole, tol, 0, &mut acc)?;
    Ok(acc)
}

fn refine(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    est: Quad,
    tol: f64,
    depth: u32,
    acc: &mut Quad,
) -> Result<()> {
    let m = 0.5 * (a + b);
    if est.abs_error <= tol
        || est.abs_error <= 50.0 * f64::EPSILON * est.value.abs()
        || depth >= 48
        || m <= a
        || m >= b
    {
        acc.value += est.value;
        acc.abs_error += est.abs_error;
        return Ok(());
    }
    let left = gk15(f, a, m)?;
    let right = gk15(f, m, b)?;
    refine(f, a, m, left, 0.5 * tol, depth + 1, acc)?;
    refine(f, m, b, right, 0.5 * tol, depth + 1, acc)
}

/// Composite midpoint rule with `cells` equal cells.
pub fn midpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> f64 {
    let h = (b - a) / cells as f64;
    (0..cells).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| 3.0 * x * x, 1.0, 2.0, 1e-14, 1e-14).unwrap();
        assert!((q.value - 7.0).abs() < 1e-13);
    }

    #[test]
    fn sqrt_singularity_converges() {
        let q = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10, 1e-10).unwrap();
        assert!((q.value - 2.0).abs() < 1e-6, "{q:?}");
    }

    #[test]
    fn non_finite_is_reported() {
        let r = integrate(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, 1e-8, 1e-8);
        assert!(matches!(r, Err(Error::NonFiniteDrift { .. })));
    }

    #[test]
    fn midpoint_is_second_order() {
        let e1 = (midpoint(|x| x * x, 0.0, 1.0, 10) - 1.0 / 3.0).abs();
        let e2 = (midpoint(|x| x * x, 0.0, 1.0, 20) - 1.0 / 3.0).abs();
        assert!((e1 / e2 - 4.0).abs() < 1e-6);
    }
}
