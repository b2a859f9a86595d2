//! Solvers for the integral equation
//!
//! ```text
//! y(t) = α + β(t - t0) + ∫_{t0}^t (t - s) b(y(s)) ds  [+ g(t)]
//! ```
//!
//! Without forcing this is `y'' = b(y)`, `y(t0) = α`, `y'(t0) = β`, solved by
//! [`solve_ode2`] with leapfrog steps that hand over to the first integral
//! `y' = [β² + 2∫_α^y b]^{1/2}` once the solution starts to run away. The
//! forced form (sampled `g`) is solved by direct trapezoid quadrature in
//! [`solve_volterra`].
//!
//! A blow-up is declared when `y` crosses a threshold. The reported blow-up
//! time is the crossing time plus the remaining time to infinity, which is the
//! blow-up integral started from the crossing state.

use crate::drift::DriftFunction;
use crate::osgood::{osgood_integral, OsgoodQuery, Verdict};
use crate::quadrature::gk15;
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 1e12;
/// Leapfrog hands over to the first integral once `y'·dt > SWITCH_REL·y`.
const SWITCH_REL: f64 = 0.02;
/// Adaptive first-integral step is `FI_EPS·y/y'`.
const FI_EPS: f64 = 2e-3;
/// Horizon used by [`blowup_time_estimate`] when the blow-up integral is not finite.
pub const ESTIMATE_HORIZON: f64 = 1e3;

/// A path sampled on a uniform grid, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SampledPath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || values.len() < 2 {
            return Err(Error::InvalidArgument(
                "a sampled path needs dt > 0 and at least two samples".into(),
            ));
        }
        Ok(Self { t0, dt, values })
    }

    pub fn from_fn(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(0.0, dt, (0..n).map(|i| f(i as f64 * dt)).collect())
    }

    pub fn end(&self) -> f64 {
        self.t0 + (self.values.len() - 1) as f64 * self.dt
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let x = (t - self.t0) / self.dt;
        let last = (self.values.len() - 1) as f64;
        if x < -1e-9 || x > last + 1e-9 {
            return Err(Error::ForcingTooShort {
                covered: self.end(),
                needed: t,
            });
        }
        let x = x.clamp(0.0, last);
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let w = x - i as f64;
        Ok(self.values[i] * (1.0 - w) + self.values[i + 1] * w)
    }
}

/// With forcing present, `alpha` and `beta` play the roles of `A` and `B` in
/// `X_t = A + Bt + ∫_0^t (t-s) b(X_s) ds + g(t)` and `t0` is 0.
#[derive(Debug, Clone)]
pub struct IntegralEquationProblem {
    pub alpha: f64,
    pub beta: f64,
    pub t0: f64,
    pub drift: DriftFunction,
    pub forcing: Option<SampledPath>,
}

impl IntegralEquationProblem {
    pub fn unforced(drift: DriftFunction, alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            t0: 0.0,
            drift,
            forcing: None,
        }
    }

    pub fn forced(drift: DriftFunction, a: f64, b: f64, forcing: SampledPath) -> Self {
        Self {
            alpha: a,
            beta: b,
            t0: 0.0,
            drift,
            forcing: Some(forcing),
        }
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }
}

#[derive(Debug, Clone)]
pub struct BlowUpReport {
    pub blew_up: bool,
    /// `t_cross + tail` when the tail is finite, else `t_cross`; `∞` without blow-up.
    pub t_blow: f64,
    /// First time `y` reaches `threshold`.
    pub t_cross: f64,
    /// Remaining time to infinity from the crossing state; NaN when not computed.
    pub tail: f64,
    pub tail_error: f64,
    pub tail_verdict: Option<Verdict>,
    pub threshold: f64,
    pub dt_used: f64,
    /// `t_blow` at `dt` and at `dt/2`.
    pub richardson_pair: Option<(f64, f64)>,
    /// First time `y` reaches `threshold/10`.
    pub t_cross_tenth: f64,
    /// Remaining time from `threshold/10` minus remaining time from `threshold`,
    /// which `t_cross - t_cross_tenth` should reproduce.
    pub predicted_gap: f64,
    pub step_underflow: bool,
    /// Last recorded grid index.
    pub blow_up_index: Option<usize>,
}

impl BlowUpReport {
    pub(crate) fn none(threshold: f64, dt: f64) -> Self {
        Self {
            blew_up: false,
            t_blow: f64::INFINITY,
            t_cross: f64::INFINITY,
            tail: f64::NAN,
            tail_error: f64::NAN,
            tail_verdict: None,
            threshold,
            dt_used: dt,
            richardson_pair: None,
            t_cross_tenth: f64::INFINITY,
            predicted_gap: f64::NAN,
            step_underflow: false,
            blow_up_index: None,
        }
    }

    pub fn richardson_difference(&self) -> Option<f64> {
        self.richardson_pair.map(|(a, b)| (a - b).abs())
    }

    /// Richardson disagreement plus the tail quadrature error.
    pub fn error_bar(&self) -> f64 {
        let tail = if self.tail_error.is_finite() { self.tail_error } else { 0.0 };
        self.richardson_difference().unwrap_or(0.0) + tail
    }

    /// `blew_up,t_blow,t_cross,tail,threshold,dt_used`
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.blew_up, self.t_blow, self.t_cross, self.tail, self.threshold, self.dt_used
        )
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub report: BlowUpReport,
}

impl Trajectory {
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct Crossing {
    t: f64,
    v: f64,
}

struct Run {
    values: Vec<f64>,
    /// Crossings of `threshold/10` and `threshold`.
    cross: [Option<Crossing>; 2],
    underflow_at: Option<f64>,
}

fn eval_b(drift: &DriftFunction, y: f64) -> Result<f64> {
    let v = drift.eval(y);
    if v.is_nan() {
        return Err(Error::NonFiniteDrift { at: y, value: v });
    }
    Ok(v)
}

/// Cubic Hermite interpolant on one step, `s ∈ [0, 1]`.
fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, s: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let y = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * d1;
    let dy = (6.0 * s2 - 6.0 * s) * y0
        + (3.0 * s2 - 4.0 * s + 1.0) * d0
        + (-6.0 * s2 + 6.0 * s) * y1
        + (3.0 * s2 - 2.0 * s) * d1;
    (y, dy)
}

/// Time and slope where the step `(t, y0, v0) -> (t + h, y1, v1)` reaches `level`.
fn locate(t: f64, h: f64, y0: f64, y1: f64, v0: f64, v1: f64, level: f64) -> Crossing {
    if !y1.is_finite() || !v1.is_finite() {
        return Crossing { t: t + h, v: f64::INFINITY };
    }
    let (d0, d1) = (v0 * h, v1 * h);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if hermite(y0, y1, d0, d1, mid).0 < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, dy) = hermite(y0, y1, d0, d1, hi);
    Crossing { t: t + hi * h, v: dy / h }
}

#[allow(clippy::too_many_arguments)]
fn record_crossings(
    cross: &mut [Option<Crossing>; 2],
    levels: [f64; 2],
    t: f64,
    h: f64,
    y0: f64,
    y1: f64,
    v0: f64,
    v1: f64,
    exact_v: Option<&dyn Fn(f64) -> Result<f64>>,
) -> Result<()> {
    for k in 0..2 {
        if cross[k].is_none() && !(y1 < levels[k]) {
            let mut c = locate(t, h, y0, y1, v0, v1, levels[k]);
            if let Some(f) = exact_v {
                c.v = f(levels[k])?;
            }
            cross[k] = Some(c);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_ode2(
    drift: &DriftFunction,
    alpha: f64,
    beta: f64,
    t0: f64,
    dt: f64,
    t_max: f64,
    threshold: f64,
    record: bool,
) -> Result<Run> {
    let n_steps = ((t_max - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let levels = [threshold / 10.0, threshold];
    let mut cross = [None, None];
    if alpha >= levels[0] {
        cross[0] = Some(Crossing { t: t0, v: beta });
    }
    let mut values = Vec::new();
    if record {
        values.reserve(n_steps + 1);
    }
    values.push(alpha);

    let (mut y, mut v) = (alpha, beta);
    let mut by = eval_b(drift, y)?;
    let mut n = 0usize;
    let mut switched = false;
    while n < n_steps {
        if v > 0.0 && y > 0.0 && by >= 0.0 && v * dt > SWITCH_REL * y {
            switched = true;
            break;
        }
        let t = t0 + n as f64 * dt;
        let vh = v + 0.5 * dt * by;
        let y1 = y + dt * vh;
        let b1 = eval_b(drift, y1)?;
        let v1 = vh + 0.5 * dt * b1;
        record_crossings(&mut cross, levels, t, dt, y, y1, v, v1, None)?;
        if cross[1].is_some() {
            return Ok(Run { values, cross, underflow_at: None });
        }
        n += 1;
        y = y1;
        v = v1;
        by = b1;
        if record {
            values.push(y);
        }
    }
    if !switched {
        return Ok(Run { values, cross, underflow_at: None });
    }

    // First-integral phase: y' = F(y), F² = v_s² + 2∫_{y_s}^y b.
    let vs2 = v * v;
    let b = |x: f64| drift.eval(x);
    let speed = |ycur: f64, bcur: f64, target: f64| -> Result<f64> {
        let inc = gk15(&b, ycur, target)?.value;
        Ok((vs2 + 2.0 * (bcur + inc)).max(0.0).sqrt())
    };
    let mut bacc = 0.0;
    let mut t = t0 + n as f64 * dt;
    while n < n_steps {
        let fy = (vs2 + 2.0 * bacc).max(0.0).sqrt();
        let t_next = t0 + (n + 1) as f64 * dt;
        let h_adapt = if fy > 0.0 { FI_EPS * y / fy } else { f64::INFINITY };
        if h_adapt < 1e-15 * t.abs() {
            return Ok(Run { values, cross, underflow_at: Some(t) });
        }
        let h = h_adapt.min(t_next - t);
        let k1 = fy;
        let k2 = speed(y, bacc, y + 0.5 * h * k1)?;
        let k3 = speed(y, bacc, y + 0.5 * h * k2)?;
        let k4 = speed(y, bacc, y + h * k3)?;
        let y1 = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let bacc1 = bacc + gk15(&b, y, y1)?.value;
        let f1 = (vs2 + 2.0 * bacc1).max(0.0).sqrt();
        let exact = |level: f64| speed(y, bacc, level);
        record_crossings(&mut cross, levels, t, h, y, y1, fy, f1, Some(&exact))?;
        if cross[1].is_some() {
            return Ok(Run { values, cross, underflow_at: None });
        }
        y = y1;
        bacc = bacc1;
        t += h;
        if t >= t_next - 1e-12 * dt {
            n += 1;
            t = t_next;
            if record {
                values.push(y);
            }
        }
    }
    Ok(Run { values, cross, underflow_at: None })
}

/// Remaining time to infinity from `y = level`, `y' = v`.
fn remaining_time(drift: &DriftFunction, level: f64, v: f64) -> (f64, f64, Option<Verdict>) {
    if !(level > 0.0) || !v.is_finite() {
        return (f64::NAN, f64::NAN, None);
    }
    let q = OsgoodQuery::new(drift.clone(), level, v.max(0.0));
    match osgood_integral(&q) {
        Ok(r) => (r.value, r.abs_error, Some(r.verdict)),
        Err(_) => (f64::NAN, f64::NAN, None),
    }
}

fn report_from_run(drift: Option<&DriftFunction>, run: &Run, threshold: f64, dt: f64) -> BlowUpReport {
    let mut rep = BlowUpReport::none(threshold, dt);
    rep.blow_up_index = Some(run.values.len().saturating_sub(1));
    if let Some(t) = run.underflow_at {
        rep.blew_up = true;
        rep.step_underflow = true;
        rep.t_blow = t;
        rep.t_cross = t;
        return rep;
    }
    if let Some(c) = run.cross[0] {
        rep.t_cross_tenth = c.t;
    }
    let Some(c) = run.cross[1] else {
        rep.blow_up_index = None;
        return rep;
    };
    rep.blew_up = true;
    rep.t_cross = c.t;
    rep.t_blow = c.t;
    if let Some(drift) = drift {
        let (tail, err, verdict) = remaining_time(drift, threshold, c.v);
        rep.tail = tail;
        rep.tail_error = err;
        rep.tail_verdict = verdict;
        if tail.is_finite() {
            rep.t_blow = c.t + tail;
        }
        if let Some(c0) = run.cross[0] {
            let (tail0, _, _) = remaining_time(drift, threshold / 10.0, c0.v);
            rep.predicted_gap = tail0 - tail;
        }
    }
    rep
}

fn check_step(dt: f64, t0: f64, t_max: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if !(t_max >= t0) {
        return Err(Error::InvalidArgument(format!("t_max {t_max} precedes t0 {t0}")));
    }
    Ok(())
}

/// Integrates `y'' = b(y)`, `y(0) = α`, `y'(0) = β` on `[0, t_max]`.
pub fn solve_ode2(
    alpha: f64,
    beta: f64,
    drift: &DriftFunction,
    dt: f64,
    t_max: f64,
    threshold: f64,
) -> Result<Trajectory> {
    check_step(dt, 0.0, t_max)?;
    if !(threshold > alpha) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} must exceed alpha {alpha}"
        )));
    }
    let run = run_ode2(drift, alpha, beta, 0.0, dt, t_max, threshold, true)?;
    let report = report_from_run(Some(drift), &run, threshold, dt);
    Ok(Trajectory {
        t0: 0.0,
        dt,
        values: run.values,
        report,
    })
}

/// Direct trapezoid discretisation on `[t0, t_max]`, `O(n)` via running sums.
///
/// The reported `t_blow` is the threshold crossing; no tail is added because
/// the forced equation has no first integral.
pub fn solve_volterra(
    problem: &IntegralEquationProblem,
    dt: f64,
    t_max: f64,
    threshold: f64,
) -> Result<Trajectory> {
    let t0 = problem.t0;
    check_step(dt, t0, t_max)?;
    let n_steps = ((t_max - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let g = |t: f64| -> Result<f64> {
        match &problem.forcing {
            Some(p) => p.eval(t),
            None => Ok(0.0),
        }
    };
    if let Some(p) = &problem.forcing {
        let needed = t0 + n_steps as f64 * dt;
        if p.end() < needed - 1e-9 * dt {
            return Err(Error::ForcingTooShort {
                covered: p.end(),
                needed,
            });
        }
    }
    let levels = [threshold / 10.0, threshold];
    let mut cross: [Option<Crossing>; 2] = [None, None];
    let y0 = problem.alpha + g(t0)?;
    let mut values = Vec::with_capacity(n_steps + 1);
    values.push(y0);
    for (k, level) in levels.iter().enumerate() {
        if y0 >= *level {
            cross[k] = Some(Crossing { t: t0, v: f64::NAN });
        }
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut y_prev = y0;
    let mut crossed = cross[1].is_some();
    for n in 1..=n_steps {
        if crossed {
            break;
        }
        let m = n - 1;
        let tau_m = m as f64 * dt;
        let c = if m == 0 { 0.5 } else { 1.0 };
        let bm = eval_b(&problem.drift, y_prev)?;
        s1 += c * bm;
        s2 += c * tau_m * bm;
        let tau = n as f64 * dt;
        let y = problem.alpha + problem.beta * tau + dt * (tau * s1 - s2) + g(t0 + tau)?;
        for k in 0..2 {
            if cross[k].is_none() && !(y < levels[k]) {
                let t = if y.is_finite() && y > y_prev {
                    t0 + tau_m + dt * (levels[k] - y_prev) / (y - y_prev)
                } else {
                    t0 + tau
                };
                cross[k] = Some(Crossing { t, v: f64::NAN });
            }
        }
        if cross[1].is_some() {
            crossed = true;
        } else {
            values.push(y);
            y_prev = y;
        }
    }
    let run = Run { values, cross, underflow_at: None };
    let report = report_from_run(None, &run, threshold, dt);
    Ok(Trajectory {
        t0,
        dt,
        values: run.values,
        report,
    })
}

/// `true` iff `y ≥ ỹ` at every common grid point up to the earlier blow-up,
/// with slack `1e-9·(1+|y|)`.
pub fn compare_paths(y: &Trajectory, ytilde: &Trajectory) -> Result<bool> {
    if (y.dt - ytilde.dt).abs() > 1e-12 * y.dt.abs() || (y.t0 - ytilde.t0).abs() > 1e-12 * (1.0 + y.t0.abs()) {
        return Err(Error::GridMismatch(format!(
            "(t0, dt) = ({}, {}) vs ({}, {})",
            y.t0, y.dt, ytilde.t0, ytilde.dt
        )));
    }
    let n = y.values.len().min(ytilde.values.len());
    Ok(y.values[..n]
        .iter()
        .zip(&ytilde.values[..n])
        .all(|(a, b)| *a >= *b - 1e-9 * (1.0 + a.abs())))
}

/// Blow-up time at `dt0` and `dt0/2`; the finer value is reported.
///
/// Unforced problems use [`solve_ode2`] on `[t0, t0 + 2T + 1]` when `T(α,β)`
/// is finite and on `[t0, t0 + ESTIMATE_HORIZON]` otherwise. Forced problems
/// use [`solve_volterra`] up to the end of the forcing path.
pub fn blowup_time_estimate(
    problem: &IntegralEquationProblem,
    threshold: f64,
    dt0: f64,
) -> Result<BlowUpReport> {
    let t0 = problem.t0;
    let solve = |dt: f64| -> Result<BlowUpReport> {
        match &problem.forcing {
            Some(p) => Ok(solve_volterra(problem, dt, p.end(), threshold)?.report),
            None => {
                let horizon = horizon_for(problem);
                check_step(dt, t0, t0 + horizon)?;
                let run = run_ode2(
                    &problem.drift,
                    problem.alpha,
                    problem.beta,
                    t0,
                    dt,
                    t0 + horizon,
                    threshold,
                    false,
                )?;
                Ok(report_from_run(Some(&problem.drift), &run, threshold, dt))
            }
        }
    };
    let coarse = solve(dt0)?;
    let mut fine = solve(0.5 * dt0)?;
    if coarse.blew_up || fine.blew_up {
        fine.richardson_pair = Some((coarse.t_blow, fine.t_blow));
    }
    fine.blow_up_index = None;
    Ok(fine)
}

fn horizon_for(problem: &IntegralEquationProblem) -> f64 {
    if problem.alpha > 0.0 && problem.beta >= 0.0 {
        let q = OsgoodQuery::new(problem.drift.clone(), problem.alpha, problem.beta);
        if let Ok(r) = osgood_integral(&q) {
            if r.verdict == Verdict::Finite {
                return 2.0 * r.value + 1.0;
            }
        }
    }
    ESTIMATE_HORIZON
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> DriftFunction {
        DriftFunction::power(3.0, 2.0)
    }

    fn exact_cubic(t: f64) -> f64 {
        (1.0 - t / 2f64.sqrt()).powi(-2)
    }

    #[test]
    fn ode2_tracks_closed_form() {
        let tr = solve_ode2(1.0, 2f64.sqrt(), &cubic(), 1e-4, 2.0, DEFAULT_THRESHOLD).unwrap();
        let y1 = tr.values[10_000];
        assert!((tr.time(10_000) - 1.0).abs() < 1e-12);
        assert!((y1 - exact_cubic(1.0)).abs() < 1e-3, "{y1}");
        assert!(tr.report.blew_up);
        assert!((tr.report.t_blow - 2f64.sqrt()).abs() < 5e-3, "{}", tr.report.t_blow);
        // The tail from 1e12 is √2·1e-6.
        assert!((tr.report.tail - 2f64.sqrt() * 1e-6).abs() < 1e-9);
        assert!((tr.report.t_cross - (2f64.sqrt() - 2f64.sqrt() * 1e-6)).abs() < 1e-4);
    }

    #[test]
    fn zero_drift_is_linear_motion() {
        let tr = solve_ode2(1.0, 2.0, &DriftFunction::zero(), 0.01, 50.0, DEFAULT_THRESHOLD).unwrap();
        assert!(!tr.report.blew_up);
        assert_eq!(tr.values.len(), 5001);
        for (i, y) in tr.values.iter().enumerate() {
            assert!((y - (1.0 + 2.0 * tr.time(i))).abs() < 1e-9);
        }
    }

    #[test]
    fn volterra_agrees_with_ode2_below_1e3() {
        let p = IntegralEquationProblem::unforced(cubic(), 1.0, 2f64.sqrt());
        let dt = 1e-5;
        let a = solve_volterra(&p, dt, 1.5, DEFAULT_THRESHOLD).unwrap();
        let b = solve_ode2(1.0, 2f64.sqrt(), &cubic(), dt, 1.5, DEFAULT_THRESHOLD).unwrap();
        let mut checked = 0;
        for (ya, yb) in a.values.iter().zip(&b.values) {
            if *yb > 1e3 {
                break;
            }
            assert!((ya - yb).abs() < 1e-3, "{ya} vs {yb}");
            checked += 1;
        }
        assert!(checked > 100_000);
        assert!(a.report.blew_up);
        assert!((a.report.t_blow - 2f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn zero_forcing_matches_unforced() {
        let dt = 1e-3;
        let g = SampledPath::from_fn(dt, 1001, |_| 0.0).unwrap();
        let forced = IntegralEquationProblem::forced(cubic(), 1.0, 0.5, g);
        let plain = IntegralEquationProblem::unforced(cubic(), 1.0, 0.5);
        let a = solve_volterra(&forced, dt, 1.0, 1e6).unwrap();
        let b = solve_volterra(&plain, dt, 1.0, 1e6).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn quadratic_forcing_is_reproduced() {
        let dt = 1e-2;
        let g = SampledPath::from_fn(dt, 301, |t| t * t).unwrap();
        let p = IntegralEquationProblem::forced(DriftFunction::zero(), 0.0, 0.0, g);
        let tr = solve_volterra(&p, dt, 3.0, DEFAULT_THRESHOLD).unwrap();
        for (i, x) in tr.values.iter().enumerate() {
            let t = tr.time(i);
            assert!((x - t * t).abs() < 1e-12);
        }
    }

    #[test]
    fn short_forcing_is_rejected() {
        let g = SampledPath::from_fn(0.1, 11, |t| t).unwrap();
        let p = IntegralEquationProblem::forced(DriftFunction::zero(), 0.0, 0.0, g);
        assert!(matches!(
            solve_volterra(&p, 0.1, 2.0, 1e12),
            Err(Error::ForcingTooShort { .. })
        ));
    }

    #[test]
    fn sampled_path_interpolates_linearly() {
        let p = SampledPath::new(1.0, 0.5, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(p.eval(1.25).unwrap(), 0.5);
        assert_eq!(p.eval(1.75).unwrap(), 2.0);
        assert_eq!(p.eval(2.0).unwrap(), 3.0);
        assert!(p.eval(2.1).is_err());
    }

    #[test]
    fn comparison_examples() {
        let d = cubic();
        let hi = solve_ode2(1.1, 1.5, &d, 1e-4, 2.0, 1e12).unwrap();
        let lo = solve_ode2(1.0, 1.4, &d, 1e-4, 2.0, 1e12).unwrap();
        assert!(compare_paths(&hi, &lo).unwrap());
        assert!(compare_paths(&hi, &hi).unwrap());
        assert!(!compare_paths(&lo, &hi).unwrap());
        let other = solve_ode2(1.0, 1.4, &d, 2e-4, 2.0, 1e12).unwrap();
        assert!(matches!(compare_paths(&hi, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn estimate_examples() {
        let p = IntegralEquationProblem::unforced(cubic(), 1.0, 2f64.sqrt());
        let r = blowup_time_estimate(&p, DEFAULT_THRESHOLD, 1e-4).unwrap();
        assert!(r.blew_up);
        assert!((r.t_blow - 1.41421).abs() < 5e-3);
        assert!(r.richardson_difference().unwrap() < 1e-3);

        let p = IntegralEquationProblem::unforced(DriftFunction::zero(), 1.0, 1.0);
        let r = blowup_time_estimate(&p, DEFAULT_THRESHOLD, 1e-2).unwrap();
        assert!(!r.blew_up);
    }

    #[test]
    fn estimate_matches_blowup_integral_for_log_drift() {
        let d = DriftFunction::parse("x*logp(x)^3").unwrap();
        let t = osgood_integral(&OsgoodQuery::new(d.clone(), 5.0, 1.0)).unwrap();
        assert_eq!(t.verdict, Verdict::Finite);
        let p = IntegralEquationProblem::unforced(d, 5.0, 1.0);
        let r = blowup_time_estimate(&p, DEFAULT_THRESHOLD, 1e-3).unwrap();
        assert!(r.blew_up);
        assert!((r.t_blow - t.value).abs() < 1e-2, "{} vs {}", r.t_blow, t.value);
        let gap = r.t_cross - r.t_cross_tenth;
        assert!((gap - r.predicted_gap).abs() < 1e-3, "{gap} vs {}", r.predicted_gap);
    }

    #[test]
    fn leapfrog_is_second_order() {
        // y'' = y, y = cosh t.
        let d = DriftFunction::parse("x").unwrap();
        let at = |dt: f64| {
            let tr = solve_ode2(1.0, 0.0, &d, dt, 1.0, 1e12).unwrap();
            *tr.values.last().unwrap()
        };
        let (a, b, c) = (at(0.01), at(0.005), at(0.0025));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!((3.0..=5.0).contains(&ratio), "{ratio}");
        assert!((c - 1f64.cosh()).abs() < 1e-5);
    }
}
