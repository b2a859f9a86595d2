//! Green kernels of the one-dimensional wave equation.
//!
//! * `G₃(t, z) = ½·1{|z| < t}` on the line,
//! * `G₂(t, z) = Σₙ G₃(t, z + 2nπ)` on the circle of length 2π,
//! * `G₁(t, x, y)` on `[0,1]` with Dirichlet walls, either as the method-of-images sum
//!   (with a ½ prefactor so that `G₁ = G₃` before the first reflection) or as the
//!   sine series `Σ sin(nπt)/(nπ) φₙ(x) φₙ(y)`, `φₙ(x) = √2 sin(nπx)`.

use std::f64::consts::PI;

use crate::quadrature::midpoint;
use crate::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Default number of sine terms for [`g1_series`].
pub const DEFAULT_SERIES_TERMS: usize = 100_000;

/// Default midpoint cells for kernel integrals over `x`.
pub const DEFAULT_X_CELLS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainCase {
    Dirichlet01,
    Circle,
    /// Interest interval `[lo, hi]` plus a causal padding on each side.
    RealLine { lo: f64, hi: f64, padding: f64 },
}

impl DomainCase {
    pub fn real_line(lo: f64, hi: f64, padding: f64) -> Result<Self> {
        if !(hi >= lo) || !(padding >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bad real-line window [{lo}, {hi}] with padding {padding}"
            )));
        }
        Ok(DomainCase::RealLine { lo, hi, padding })
    }

    /// Finite propagation speed: the window is causally sufficient up to
    /// `t_max` only when the padding covers it.
    pub fn check_horizon(&self, t_max: f64) -> Result<()> {
        if let DomainCase::RealLine { lo, hi, padding } = *self {
            if padding < t_max {
                return Err(Error::WindowTooSmall {
                    lo: lo - padding,
                    hi: hi + padding,
                    need_lo: lo - t_max,
                    need_hi: hi + t_max,
                });
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainCase::Dirichlet01 => "dirichlet",
            DomainCase::Circle => "circle",
            DomainCase::RealLine { .. } => "line",
        }
    }
}

/// Dirichlet eigenfunction `φₙ(x) = √2 sin(nπx)`.
pub fn phi(n: usize, x: f64) -> f64 {
    std::f64::consts::SQRT_2 * (n as f64 * PI * x).sin()
}

pub fn g3(t: f64, z: f64) -> f64 {
    if z.abs() < t {
        0.5
    } else {
        0.0
    }
}

fn image_range(t: f64, z: f64, period: f64) -> i64 {
    ((t + z.abs()) / period).ceil() as i64 + 1
}

pub fn g2(t: f64, z: f64) -> f64 {
    let n_max = image_range(t, z, TWO_PI);
    (-n_max..=n_max)
        .filter(|&n| (z + n as f64 * TWO_PI).abs() < t)
        .count() as f64
        * 0.5
}

pub fn g1_images(t: f64, x: f64, y: f64) -> f64 {
    let n_max = image_range(t, x.abs() + y.abs(), 2.0);
    let mut count = 0i64;
    for n in -n_max..=n_max {
        let shift = 2.0 * n as f64;
        if (y - x - shift).abs() <= t {
            count += 1;
        }
        if (y + x - shift).abs() <= t {
            count -= 1;
        }
    }
    0.5 * count as f64
}

/// Truncated sine series; converges pointwise (slowly, `O(1/N)`) off the
/// light-cone lines `y ± x ∈ 2ℤ ± t`.
pub fn g1_series(t: f64, x: f64, y: f64, n_terms: usize) -> f64 {
    let mut sum = 0.0;
    for n in 1..=n_terms {
        let k = n as f64 * PI;
        sum += (k * t).sin() / k * 2.0 * (k * x).sin() * (k * y).sin();
    }
    sum
}

/// `∫ G(t, x, y) dx` over the whole domain by the midpoint rule.
pub fn kernel_x_integral(case: &DomainCase, t: f64, y: f64) -> f64 {
    kernel_x_integral_cells(case, t, y, DEFAULT_X_CELLS)
}

pub fn kernel_x_integral_cells(case: &DomainCase, t: f64, y: f64, cells: usize) -> f64 {
    match case {
        DomainCase::Dirichlet01 => midpoint(|x| g1_images(t, x, y), 0.0, 1.0, cells),
        DomainCase::Circle => midpoint(|x| g2(t, x - y), 0.0, TWO_PI, cells),
        DomainCase::RealLine { .. } => {
            midpoint(|x| g3(t, x - y), y - t - 1.0, y + t + 1.0, cells)
        }
    }
}

/// `∫₀¹ G₁(t, x, y)² dx` on a fine grid.
pub fn g1_l2_norm_sq(t: f64, y: f64) -> f64 {
    midpoint(
        |x| {
            let g = g1_images(t, x, y);
            g * g
        },
        0.0,
        1.0,
        DEFAULT_X_CELLS,
    )
}

/// Largest sampled value of [`g1_l2_norm_sq`] over a `(t, y)` grid on
/// `[0, t_max] × [0, 1]`.
pub fn sup_g1_l2_norm_sq(t_max: f64, n_t: usize, n_y: usize) -> f64 {
    let mut sup: f64 = 0.0;
    for i in 0..=n_t {
        let t = t_max * i as f64 / n_t as f64;
        for j in 0..=n_y {
            let y = j as f64 / n_y as f64;
            sup = sup.max(g1_l2_norm_sq(t, y));
        }
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g3_indicator() {
        assert_eq!(g3(0.5, 0.2), 0.5);
        assert_eq!(g3(0.5, 0.7), 0.0);
        assert_eq!(g3(0.0, 0.0), 0.0);
    }

    /// Brute-force count over a generous `n` range.
    fn g2_brute(t: f64, z: f64) -> f64 {
        (-50..=50)
            .filter(|&n| (z + 2.0 * PI * n as f64).abs() < t)
            .count() as f64
            * 0.5
    }

    #[test]
    fn g2_values() {
        assert_eq!(g2(1.0, 0.0), 0.5);
        assert_eq!(g2_brute(7.0, 0.0), 1.5);
        assert_eq!(g2(7.0, 0.0), 1.5);
        for &(t, z) in &[(20.0, 3.0), (13.0, -6.0), (0.3, 6.2)] {
            assert_eq!(g2(t, z), g2_brute(t, z));
        }
    }

    fn g1_brute(t: f64, x: f64, y: f64) -> f64 {
        let mut s = 0.0;
        for n in -40..=40 {
            let sh = 2.0 * n as f64;
            if (y - x - sh).abs() <= t {
                s += 0.5;
            }
            if (y + x - sh).abs() <= t {
                s -= 0.5;
            }
        }
        s
    }

    #[test]
    fn g1_images_values() {
        assert_eq!(g1_brute(0.3, 0.4, 0.6), 0.5);
        assert_eq!(g1_images(0.3, 0.4, 0.6), 0.5);
        assert_eq!(g1_brute(0.1, 0.02, 0.02), 0.0);
        assert_eq!(g1_images(0.1, 0.02, 0.02), 0.0);
        for &t in &[0.1, 0.7, 1.3, 4.2, 9.9] {
            for &y in &[0.0, 0.3, 0.77, 1.0] {
                assert_eq!(g1_images(t, 0.0, y), 0.0);
                assert_eq!(g1_images(t, 0.35, y), g1_brute(t, 0.35, y));
            }
        }
    }

    #[test]
    fn g1_series_matches_images_off_cone() {
        assert_eq!(g1_series(0.0, 0.3, 0.8, 100), 0.0);
        let s = g1_series(0.3, 0.4, 0.6, DEFAULT_SERIES_TERMS);
        assert!((s - 0.5).abs() < 0.01, "{s}");
        let s = g1_series(0.5, 0.25, 0.9, DEFAULT_SERIES_TERMS);
        assert!((s - g1_images(0.5, 0.25, 0.9)).abs() < 0.01, "{s}");
    }

    #[test]
    fn x_integrals() {
        let c = kernel_x_integral(&DomainCase::Circle, 0.7, 1.0);
        assert!((c - 0.7).abs() < 1e-3, "{c}");
        let l = kernel_x_integral(&DomainCase::real_line(0.0, 0.0, 2.0).unwrap(), 2.0, 0.0);
        assert!((l - 2.0).abs() < 1e-3, "{l}");
        let d = kernel_x_integral(&DomainCase::Dirichlet01, 0.3, 0.5);
        assert!(d <= 0.3 + 1e-3, "{d}");
    }

    #[test]
    fn l2_norms() {
        assert_eq!(g1_l2_norm_sq(0.0, 0.5), 0.0);
        assert!((g1_l2_norm_sq(0.2, 0.5) - 0.1).abs() < 1e-3);
        let sup = sup_g1_l2_norm_sq(1.0, 10, 10);
        assert!(sup.is_finite() && sup <= 0.5 + 1e-3, "{sup}");
    }

    #[test]
    fn real_line_padding_is_checked() {
        let d = DomainCase::real_line(0.0, 1.0, 1.0).unwrap();
        assert!(d.check_horizon(1.0).is_ok());
        assert!(matches!(d.check_horizon(2.0), Err(Error::WindowTooSmall { .. })));
    }
}
