//! Drift functions `b` given as expressions in `x`.
//!
//! Every primitive in the grammar is locally Lipschitz on `[0, ∞)`, so local
//! Lipschitz continuity holds by construction and is not sampled. The other
//! structural properties are *claims* carried in [`Flags`] and checked on a
//! sample grid by [`validate_drift`].

mod expr;
mod parse;

use std::fmt;

use rand::seq::IndexedRandom;

pub use expr::{BinOp, Expr, Func};
pub use parse::parse_expr;

use crate::rng;
use crate::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flags {
    pub nonnegative: bool,
    pub nondecreasing: bool,
    pub convex: bool,
}

impl Flags {
    pub const ALL: Flags = Flags {
        nonnegative: true,
        nondecreasing: true,
        convex: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftFunction {
    pub expr: Expr,
    pub flags: Flags,
}

impl DriftFunction {
    pub fn parse(source: &str) -> Result<Self> {
        Ok(Self {
            expr: parse_expr(source)?,
            flags: Flags::default(),
        })
    }

    pub fn with_flags(mut self, flags: Flags) -> Self {
        self.flags = flags;
        self
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.expr.eval(x)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            expr: Expr::Num(c),
            flags: Flags::default(),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0).with_flags(Flags::ALL)
    }

    /// `max0(x)·logp(x)^δ`: nonnegative, nondecreasing and convex on ℝ; the
    /// blow-up integral is finite iff `δ > 2`.
    pub fn logp_family(delta: f64) -> Self {
        let e = Expr::bin(
            BinOp::Mul,
            Expr::call(Func::Max0, Expr::X),
            Expr::bin(BinOp::Pow, Expr::call(Func::Logp, Expr::X), Expr::Num(delta)),
        );
        Self { expr: e, flags: Flags::ALL }
    }

    /// `c·max0(x)^p`, `p ≥ 1`.
    pub fn power(c: f64, p: f64) -> Self {
        let e = Expr::bin(
            BinOp::Mul,
            Expr::Num(c),
            Expr::bin(BinOp::Pow, Expr::call(Func::Max0, Expr::X), Expr::Num(p)),
        );
        Self { expr: e, flags: Flags::ALL }
    }

    /// Syntactic check that `x ↦ b(x)` is globally Lipschitz: constants, `x`,
    /// sums, products and quotients by constants, and `abs`, `max0`, `logp` of
    /// such expressions.
    pub fn is_globally_lipschitz(&self) -> bool {
        fn lip(e: &Expr) -> bool {
            match e {
                Expr::Num(_) | Expr::X => true,
                _ if !e.mentions_x() => true,
                Expr::Call(Func::Abs | Func::Max0 | Func::Logp, a) => lip(a),
                Expr::Call(_, _) => false,
                Expr::Bin(BinOp::Add | BinOp::Sub, l, r) => lip(l) && lip(r),
                Expr::Bin(BinOp::Mul, l, r) => {
                    (!l.mentions_x() && lip(r)) || (!r.mentions_x() && lip(l))
                }
                Expr::Bin(BinOp::Div, l, r) => !r.mentions_x() && r.eval(0.0) != 0.0 && lip(l),
                Expr::Bin(BinOp::Pow, _, _) => false,
            }
        }
        lip(&self.expr)
    }

    pub fn is_identically_zero(&self) -> bool {
        self.expr.constant_value() == Some(0.0)
    }
}

impl fmt::Display for DriftFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlagCheck {
    pub claimed: bool,
    pub passed: bool,
    /// Sample points of the first violation.
    pub counterexample: Option<Vec<f64>>,
}

impl FlagCheck {
    fn unclaimed() -> Self {
        Self {
            claimed: false,
            passed: true,
            counterexample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Evaluation never produced NaN/∞ on the grid.
    pub finite: FlagCheck,
    pub nonnegative: FlagCheck,
    pub nondecreasing: FlagCheck,
    pub convex: FlagCheck,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        [&self.finite, &self.nonnegative, &self.nondecreasing, &self.convex]
            .iter()
            .all(|c| c.passed)
    }
}

/// Sample grid: `0` followed by a geometric grid from `1e-6·x_max` to `x_max`.
pub fn sample_grid(x_max: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    let lo = x_max * 1e-6;
    let ratio = (x_max / lo).powf(1.0 / (n - 2) as f64);
    let mut xs = Vec::with_capacity(n);
    xs.push(0.0);
    for i in 0..n - 1 {
        xs.push(if i == n - 2 { x_max } else { lo * ratio.powi(i as i32) });
    }
    xs
}

/// Check the claimed flags of `b` on `[0, x_max]`.
pub fn validate_drift(b: &DriftFunction, x_max: f64, samples: usize, seed: u64) -> ValidationReport {
    let xs = sample_grid(x_max, samples);
    let ys: Vec<f64> = xs.iter().map(|&x| b.eval(x)).collect();

    let finite = match xs.iter().zip(&ys).find(|(_, y)| !y.is_finite()) {
        Some((&x, _)) => FlagCheck {
            claimed: true,
            passed: false,
            counterexample: Some(vec![x]),
        },
        None => FlagCheck {
            claimed: true,
            passed: true,
            counterexample: None,
        },
    };

    let nonnegative = if b.flags.nonnegative {
        let bad = xs.iter().zip(&ys).find(|(_, &y)| !(y >= -1e-12));
        FlagCheck {
            claimed: true,
            passed: bad.is_none(),
            counterexample: bad.map(|(&x, _)| vec![x]),
        }
    } else {
        FlagCheck::unclaimed()
    };

    let nondecreasing = if b.flags.nondecreasing {
        let bad = (0..xs.len() - 1).find(|&i| !(ys[i + 1] >= ys[i] - 1e-12));
        FlagCheck {
            claimed: true,
            passed: bad.is_none(),
            counterexample: bad.map(|i| vec![xs[i], xs[i + 1]]),
        }
    } else {
        FlagCheck::unclaimed()
    };

    let convex = if b.flags.convex {
        let mut rng = rng::stream(rng::derive_seed(seed, rng::tag::VALIDATION), 0);
        let idx: Vec<usize> = (0..xs.len()).collect();
        let mut counterexample = None;
        for _ in 0..4 * xs.len() {
            let i = *idx.choose(&mut rng).expect("nonempty grid");
            let j = *idx.choose(&mut rng).expect("nonempty grid");
            let (xi, xj) = (xs[i], xs[j]);
            let mid = b.eval(0.5 * (xi + xj));
            let chord = 0.5 * (ys[i] + ys[j]);
            if !(mid <= chord + 1e-9 * (1.0 + ys[j].abs().max(ys[i].abs()))) {
                counterexample = Some(vec![xi, xj]);
                break;
            }
        }
        FlagCheck {
            claimed: true,
            passed: counterexample.is_none(),
            counterexample,
        }
    } else {
        FlagCheck::unclaimed()
    };

    ValidationReport {
        finite,
        nonnegative,
        nondecreasing,
        convex,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_family_validates() {
        let b = DriftFunction::parse("x*logp(x)^3").unwrap().with_flags(Flags::ALL);
        let r = validate_drift(&b, 1e6, 400, 1);
        assert!(r.all_passed(), "{r:?}");
        assert!(validate_drift(&DriftFunction::logp_family(1.5), 1e8, 400, 2).all_passed());
        assert!(validate_drift(&DriftFunction::power(3.0, 2.0), 1e3, 200, 3).all_passed());
    }

    #[test]
    fn shifted_line_fails_nonnegativity_at_zero() {
        let b = DriftFunction::parse("x - 5").unwrap().with_flags(Flags {
            nonnegative: true,
            ..Flags::default()
        });
        let r = validate_drift(&b, 100.0, 100, 0);
        assert!(!r.nonnegative.passed);
        assert_eq!(r.nonnegative.counterexample.as_deref(), Some(&[0.0][..]));
    }

    #[test]
    fn zero_passes_everything() {
        let r = validate_drift(&DriftFunction::parse("0").unwrap().with_flags(Flags::ALL), 10.0, 100, 0);
        assert!(r.all_passed());
    }

    #[test]
    fn concave_and_decreasing_claims_fail() {
        let b = DriftFunction::parse("logp(x)").unwrap().with_flags(Flags::ALL);
        let r = validate_drift(&b, 1e4, 200, 5);
        assert!(r.nonnegative.passed && r.nondecreasing.passed);
        assert!(!r.convex.passed);
        let b = DriftFunction::parse("exp(0 - x)").unwrap().with_flags(Flags::ALL);
        assert!(!validate_drift(&b, 10.0, 100, 5).nondecreasing.passed);
    }

    #[test]
    fn plain_log_fails_nonnegativity() {
        let b = DriftFunction::parse("x*log(x+1) + log(x)").unwrap().with_flags(Flags {
            nonnegative: true,
            ..Flags::default()
        });
        let r = validate_drift(&b, 10.0, 100, 0);
        assert!(!r.nonnegative.passed);
    }

    #[test]
    fn logp_floor_gives_lower_bound() {
        let b = DriftFunction::logp_family(2.5);
        for x in sample_grid(1e9, 300) {
            assert!(b.expr.eval(x) >= x);
            assert!(Func::Logp.apply(x) >= 1.0);
        }
    }

    #[test]
    fn lipschitz_subset() {
        for ok in ["1", "x", "2*x + 1", "abs(x)/3", "max0(x - 1)", "logp(x)", "exp(1)*x"] {
            assert!(DriftFunction::parse(ok).unwrap().is_globally_lipschitz(), "{ok}");
        }
        for bad in ["x*x", "x^2", "exp(x)", "log(x)", "1/x", "x*logp(x)"] {
            assert!(!DriftFunction::parse(bad).unwrap().is_globally_lipschitz(), "{bad}");
        }
    }
}
