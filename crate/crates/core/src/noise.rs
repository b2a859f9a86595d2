//! Space-time white noise and the Gaussian processes built from it.
//!
//! Noise lives on a node grid `(t_m, x_k) = (m·dt, x0 + k·dx)`; the increment
//! attached to node `(m, k)` is `N(0, dt·dx)`. Row `m` is drawn from its own
//! counter-based stream, so rows can be generated on demand and in any order.
//!
//! Processes:
//!
//! * `B`: Brownian motion;
//! * `M(t) = (1/π) ∫_0^t sin(π(t-s)) dB_s = ∫_0^t cos(π(t-s)) B_s ds`;
//! * `G(t) = ∫_0^t B_s ds`;
//! * `g(t,x) = ∫_0^t ∫ ½·1{|x-y| < t-s} W(dy ds)`, the mild-form response of the
//!   line wave equation to unit-intensity noise.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::rng::{self, tag};
use crate::stats::{self, Z95};
use crate::{Error, Result};

/// Largest materialised grid, in cells (8 bytes each).
pub const DEFAULT_CELL_BUDGET: u128 = 1 << 27;

/// Seed of the `i`-th path of a Monte Carlo run.
pub fn path_seed(master: u64, i: usize) -> u64 {
    master.wrapping_add(i as u64)
}

/// Row-addressable source of noise increments.
pub trait NoiseSource: Sync {
    fn dt(&self) -> f64;
    fn dx(&self) -> f64;
    fn n_x(&self) -> usize;
    /// Increments of time row `m`; `out.len() == n_x()`.
    fn fill_row(&self, m: usize, out: &mut [f64]);
}

/// Noise generated row by row on demand; nothing is stored.
#[derive(Debug, Clone, Copy)]
pub struct StreamingNoise {
    pub dt: f64,
    pub dx: f64,
    pub n_x: usize,
    pub seed: u64,
}

impl StreamingNoise {
    pub fn new(dt: f64, dx: f64, n_x: usize, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && dx > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise steps must be positive, got dt = {dt}, dx = {dx}"
            )));
        }
        Ok(Self { dt, dx, n_x, seed })
    }
}

impl NoiseSource for StreamingNoise {
    fn dt(&self) -> f64 {
        self.dt
    }
    fn dx(&self) -> f64 {
        self.dx
    }
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn fill_row(&self, m: usize, out: &mut [f64]) {
        let key = rng::derive_seed(self.seed, tag::WHITE_NOISE);
        rng::fill_normals(key, m as u64, (self.dt * self.dx).sqrt(), out);
    }
}

/// A materialised noise grid, row-major `n_t × n_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteNoiseGrid {
    pub dt: f64,
    pub dx: f64,
    pub n_t: usize,
    pub n_x: usize,
    pub seed: u64,
    pub rng_id: &'static str,
    pub increments: Vec<f64>,
}

impl WhiteNoiseGrid {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.increments[m * self.n_x..(m + 1) * self.n_x]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.increments[m * self.n_x..(m + 1) * self.n_x]
    }
}

impl NoiseSource for WhiteNoiseGrid {
    fn dt(&self) -> f64 {
        self.dt
    }
    fn dx(&self) -> f64 {
        self.dx
    }
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn fill_row(&self, m: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(m));
    }
}

pub fn sample_white_noise(dt: f64, dx: f64, n_t: usize, n_x: usize, seed: u64) -> Result<WhiteNoiseGrid> {
    sample_white_noise_with_budget(dt, dx, n_t, n_x, seed, DEFAULT_CELL_BUDGET)
}

pub fn sample_white_noise_with_budget(
    dt: f64,
    dx: f64,
    n_t: usize,
    n_x: usize,
    seed: u64,
    budget: u128,
) -> Result<WhiteNoiseGrid> {
    let cells = n_t as u128 * n_x as u128;
    if cells > budget {
        return Err(Error::SizeOverflow { cells, budget });
    }
    let src = StreamingNoise::new(dt, dx, n_x, seed)?;
    let mut increments = vec![0.0; n_t * n_x];
    increments
        .par_chunks_mut(n_x.max(1))
        .enumerate()
        .for_each(|(m, row)| src.fill_row(m, row));
    Ok(WhiteNoiseGrid {
        dt,
        dx,
        n_t,
        n_x,
        seed,
        rng_id: rng::RNG_ID,
        increments,
    })
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    Ok(())
}

/// Brownian increments `ΔB_m = B_{m+1} - B_m`.
fn brownian_increments(dt: f64, n_t: usize, seed: u64) -> Vec<f64> {
    let mut inc = vec![0.0; n_t];
    rng::fill_normals(rng::derive_seed(seed, tag::BROWNIAN), 0, dt.sqrt(), &mut inc);
    inc
}

fn cumulative(inc: &[f64]) -> Vec<f64> {
    let mut path = Vec::with_capacity(inc.len() + 1);
    let mut b = 0.0;
    path.push(b);
    for d in inc {
        b += d;
        path.push(b);
    }
    path
}

/// `B(m·dt)` for `m = 0..=n_t`.
pub fn brownian_path(dt: f64, n_t: usize, seed: u64) -> Result<Vec<f64>> {
    check_dt(dt)?;
    Ok(cumulative(&brownian_increments(dt, n_t, seed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MRepresentation {
    /// Left-point Itô sum of `sin(π(t-s))/π` against `dB`.
    Spectral,
    /// Trapezoid quadrature of `cos(π(t-s)) B_s`.
    Parts,
}

/// `M(m·dt)` for `m = 0..=n_t`.
pub fn m_path(dt: f64, n_t: usize, seed: u64, rep: MRepresentation) -> Result<Vec<f64>> {
    check_dt(dt)?;
    let inc = brownian_increments(dt, n_t, seed);
    Ok(match rep {
        MRepresentation::Spectral => m_spectral(dt, &inc),
        MRepresentation::Parts => m_parts(dt, &cumulative(&inc)),
    })
}

/// `sin(π(t_n - t_m)) = sin(πt_n)cos(πt_m) - cos(πt_n)sin(πt_m)` turns the
/// convolution into two running sums.
pub fn m_spectral(dt: f64, inc: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(inc.len() + 1);
    out.push(0.0);
    let (mut c, mut s) = (0.0, 0.0);
    for (m, d) in inc.iter().enumerate() {
        let (sm, cm) = (PI * m as f64 * dt).sin_cos();
        c += cm * d;
        s += sm * d;
        let (sn, cn) = (PI * (m + 1) as f64 * dt).sin_cos();
        out.push((sn * c - cn * s) / PI);
    }
    out
}

pub fn m_parts(dt: f64, b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(b.len());
    let (mut c, mut s) = (0.0, 0.0);
    for (n, bn) in b.iter().enumerate() {
        let (sn, cn) = (PI * n as f64 * dt).sin_cos();
        let w = if n == 0 { 0.5 } else { 1.0 };
        c += w * cn * bn;
        s += w * sn * bn;
        // The newest node enters with trapezoid weight ½.
        let cc = c - 0.5 * cn * bn;
        let ss = s - 0.5 * sn * bn;
        out.push(dt * (cn * cc + sn * ss));
    }
    out
}

/// Sums consecutive groups of `factor` increments (coarsening a path).
pub fn aggregate_increments(inc: &[f64], factor: usize) -> Vec<f64> {
    inc.chunks_exact(factor).map(|c| c.iter().sum()).collect()
}

/// Sup-norm changes of the spectral `M` on `[0, t_max]` under two successive
/// halvings of `dt`, all levels driven by one Brownian path sampled at `dt/4`:
/// `(sup|M_dt - M_{dt/2}|, sup|M_{dt/2} - M_{dt/4}|)` on the coarser grid of each pair.
pub fn m_refinement_errors(dt: f64, t_max: f64, seed: u64) -> Result<(f64, f64)> {
    check_dt(dt)?;
    let n = (t_max / dt - 1e-9).ceil() as usize;
    let fine = brownian_increments(dt / 4.0, 4 * n, seed);
    let mid = aggregate_increments(&fine, 2);
    let coarse = aggregate_increments(&fine, 4);
    let (m4, m2, m1) = (
        m_spectral(dt / 4.0, &fine),
        m_spectral(dt / 2.0, &mid),
        m_spectral(dt, &coarse),
    );
    let e1 = (0..=n).map(|k| (m1[k] - m2[2 * k]).abs()).fold(0.0, f64::max);
    let e2 = (0..=2 * n).map(|k| (m2[k] - m4[2 * k]).abs()).fold(0.0, f64::max);
    Ok((e1, e2))
}

/// `G(m·dt)` for `m = 0..=n_t`, trapezoid in time.
pub fn g_path(dt: f64, n_t: usize, seed: u64) -> Result<Vec<f64>> {
    let b = brownian_path(dt, n_t, seed)?;
    Ok(integrate_path(dt, &b))
}

pub fn integrate_path(dt: f64, b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(b.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in b.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// `G(t) / √((2/3) t³ ln ln t)`, defined for `t > e`. A finite-time
/// diagnostic only; nothing is asserted about its size.
pub fn lil_statistic(g_t: f64, t: f64) -> Option<f64> {
    if t <= std::f64::consts::E {
        return None;
    }
    Some(g_t / ((2.0 / 3.0) * t.powi(3) * t.ln().ln()).sqrt())
}

/// Exact covariances of the Brownian functionals, `s, t ≥ 0`.
pub mod exact {
    use std::f64::consts::PI;

    pub fn brownian_cov(s: f64, t: f64) -> f64 {
        s.min(t)
    }

    pub fn g_cov(s: f64, t: f64) -> f64 {
        let (s, t) = (s.min(t), s.max(t));
        s * s * t / 2.0 - s.powi(3) / 6.0
    }

    pub fn m_cov(s: f64, t: f64) -> f64 {
        let (s, t) = (s.min(t), s.max(t));
        (s * (PI * (t - s)).cos() - ((PI * (s + t)).sin() - (PI * (t - s)).sin()) / (2.0 * PI))
            / (2.0 * PI * PI)
    }

    /// `Cov(g(s,x), g(t,x)) = (s∧t)²/4`.
    pub fn g_field_cov(s: f64, t: f64) -> f64 {
        s.min(t).powi(2) / 4.0
    }

    /// `E|g(t,x+z) - g(t,x)|² = ¼ ∫_0^t |symmetric difference of the two cones| ds`
    /// `= ¼ ∫_0^t min(4s, 2|z|) ds`.
    pub fn spatial_increment(t: f64, z: f64) -> f64 {
        let z = z.abs();
        let r = (z / 2.0).min(t);
        0.25 * (2.0 * r * r + 2.0 * z * (t - r))
    }

    /// `¼ ∫_0^t min(2s, 2|z|) ds`: the same quantity with the symmetric
    /// difference replaced by the one-sided shell `{s - |z| ≤ |y| < s}`.
    pub fn one_sided_shell_increment(t: f64, z: f64) -> f64 {
        let z = z.abs();
        let r = z.min(t);
        0.25 * (r * r + 2.0 * z * (t - r))
    }

    /// `E|g(t+h,x) - g(t,x)|² = ((t+h)² - t²)/4`.
    pub fn temporal_increment(t: f64, h: f64) -> f64 {
        ((t + h).powi(2) - t * t) / 4.0
    }
}

/// Values of `g(t_n, x_j)` at a few probe points.
#[derive(Debug, Clone, PartialEq)]
pub struct GField {
    pub dt: f64,
    pub dx: f64,
    /// Probe positions after snapping to the noise grid.
    pub x_probes: Vec<f64>,
    /// `paths[p][n] = g(n·dt, x_probes[p])`, `n = 0..=n_t`.
    pub paths: Vec<Vec<f64>>,
}

impl GField {
    pub fn at(&self, probe: usize, t: f64) -> f64 {
        self.paths[probe][(t / self.dt).round() as usize]
    }
}

/// Number of node offsets `d ≥ 0` with `d·dx < tau`.
fn cone_half_count(tau: f64, dx: f64) -> usize {
    if tau <= 0.0 {
        return 0;
    }
    (tau / dx * (1.0 - 1e-12)).ceil() as usize
}

/// `g` at grid probes `j` from an arbitrary noise source with nodes `x0 + k·dx`.
///
/// Only nodes strictly inside the backward light cone of `(t_n, x_j)` are read,
/// and they are read in a fixed order, so values outside the cone have no
/// influence at all on the result.
pub fn g_field_from_source(noise: &dyn NoiseSource, n_t: usize, probes: &[usize]) -> Result<Vec<Vec<f64>>> {
    let (dt, dx, n_x) = (noise.dt(), noise.dx(), noise.n_x());
    for &j in probes {
        let reach = cone_half_count(n_t as f64 * dt, dx);
        if reach > 0 && (j + 1 < reach || j + reach > n_x) {
            return Err(Error::WindowTooSmall {
                lo: 0.0,
                hi: (n_x.max(1) - 1) as f64 * dx,
                need_lo: j as f64 * dx - n_t as f64 * dt,
                need_hi: j as f64 * dx + n_t as f64 * dt,
            });
        }
    }
    let mut paths = vec![vec![0.0; n_t + 1]; probes.len()];
    let mut row = vec![0.0; n_x];
    for m in 0..n_t {
        noise.fill_row(m, &mut row);
        for (p, &j) in probes.iter().enumerate() {
            let g = &mut paths[p];
            let mut s = 0.0;
            let mut have = 0usize;
            for (n, gn) in g.iter_mut().enumerate().skip(m + 1) {
                let r = cone_half_count((n - m) as f64 * dt, dx);
                while have < r {
                    if have == 0 {
                        s += row[j];
                    } else {
                        s += row[j - have] + row[j + have];
                    }
                    have += 1;
                }
                *gn += 0.5 * s;
            }
        }
    }
    Ok(paths)
}

/// `g(t, x)` on `t ∈ {0, dt, …, t_max}` at `x_probes`, from seeded noise on
/// the node grid `window.0 + k·dx` covering `window`.
pub fn g_field(
    dt: f64,
    dx: f64,
    t_max: f64,
    x_probes: &[f64],
    window: (f64, f64),
    seed: u64,
) -> Result<GField> {
    let (lo, hi) = window;
    let n_x = ((hi - lo) / dx + 1e-9).floor() as usize + 1;
    let noise = StreamingNoise::new(dt, dx, n_x, seed)?;
    g_field_on(&noise, lo, t_max, x_probes)
}

/// As [`g_field`] but on a caller-supplied noise source with nodes `x0 + k·dx`.
pub fn g_field_on(noise: &dyn NoiseSource, x0: f64, t_max: f64, x_probes: &[f64]) -> Result<GField> {
    let (dt, dx, n_x) = (noise.dt(), noise.dx(), noise.n_x());
    let hi = x0 + (n_x.max(1) - 1) as f64 * dx;
    let pmin = x_probes.iter().copied().fold(f64::INFINITY, f64::min);
    let pmax = x_probes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (need_lo, need_hi) = (pmin - t_max, pmax + t_max);
    let slack = 1e-9 * dx;
    if !x_probes.is_empty() && (x0 > need_lo + slack || hi < need_hi - slack) {
        return Err(Error::WindowTooSmall {
            lo: x0,
            hi,
            need_lo,
            need_hi,
        });
    }
    let n_t = (t_max / dt - 1e-9).ceil().max(0.0) as usize;
    let idx: Vec<usize> = x_probes
        .iter()
        .map(|x| ((x - x0) / dx).round().max(0.0) as usize)
        .collect();
    let paths = g_field_from_source(noise, n_t, &idx)?;
    Ok(GField {
        dt,
        dx,
        x_probes: idx.iter().map(|&j| x0 + j as f64 * dx).collect(),
        paths,
    })
}

/// One Monte Carlo moment check.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub name: String,
    pub observed: f64,
    pub se: f64,
    /// Exact value of the continuum quantity.
    pub exact: f64,
    /// Upper bound the quantity must respect.
    pub bound: f64,
}

impl MomentCheck {
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.observed - target).abs() <= z * self.se
    }

    pub fn below_bound(&self, z: f64) -> bool {
        self.observed <= self.bound + z * self.se
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementReport {
    pub spatial: MomentCheck,
    /// `¼∫ min(2s, 2|z|) ds` at the spatial probe.
    pub one_sided_shell: f64,
    pub temporal: MomentCheck,
    pub zero_shift: MomentCheck,
    pub n_paths: usize,
}

fn mean_square_check(name: &str, diffs: &[f64], exact: f64, bound: f64) -> MomentCheck {
    let sq: Vec<f64> = diffs.iter().map(|d| d * d).collect();
    let (m, v) = stats::mean_var(&sq);
    MomentCheck {
        name: name.to_string(),
        observed: m,
        se: (v / sq.len() as f64).sqrt(),
        exact,
        bound,
    }
}

/// Spatial and temporal second moments of `g` increments at `(t, z)` and
/// `(t, h)`, one path per seed.
pub fn increment_moment_check(dt: f64, dx: f64, t: f64, z: f64, h: f64, seeds: &[u64]) -> Result<IncrementReport> {
    let t_max = t + h;
    let window = (-t_max - dx, z.abs() + t_max + dx);
    let probes = [0.0, z.abs()];
    let fields: Vec<GField> = seeds
        .par_iter()
        .map(|&s| g_field(dt, dx, t_max, &probes, window, s))
        .collect::<Result<_>>()?;
    let (mut sp, mut tm, mut zero) = (Vec::new(), Vec::new(), Vec::new());
    for f in &fields {
        sp.push(f.at(1, t) - f.at(0, t));
        tm.push(f.at(0, t + h) - f.at(0, t));
        zero.push(f.at(0, t) - f.at(0, t));
    }
    Ok(IncrementReport {
        spatial: mean_square_check("spatial", &sp, exact::spatial_increment(t, z), z.abs() * t),
        one_sided_shell: exact::one_sided_shell_increment(t, z),
        temporal: mean_square_check(
            "temporal",
            &tm,
            exact::temporal_increment(t, h),
            h * (t + h),
        ),
        zero_shift: mean_square_check("zero", &zero, 0.0, 0.0),
        n_paths: seeds.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Process {
    Brownian,
    IntegratedBrownian,
    M,
}

/// Empirical against exact covariance at probe times.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDiagnostics {
    pub probe_times: Vec<f64>,
    pub empirical_cov: Vec<Vec<f64>>,
    pub exact_cov: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub max_abs_dev: f64,
    /// Largest `|empirical - exact| / se`.
    pub max_z: f64,
    pub n_paths: usize,
}

impl GaussianDiagnostics {
    pub fn passes(&self, z: f64) -> bool {
        self.max_z <= z
    }
}

pub fn gaussian_diagnostics(
    process: Process,
    probe_times: &[f64],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<GaussianDiagnostics> {
    check_dt(dt)?;
    let t_end = probe_times.iter().copied().fold(0.0, f64::max);
    let n_t = (t_end / dt - 1e-9).ceil() as usize;
    let idx: Vec<usize> = probe_times.iter().map(|t| (t / dt).round() as usize).collect();
    let samples: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let s = path_seed(seed, i);
            let path = match process {
                Process::Brownian => brownian_path(dt, n_t, s),
                Process::IntegratedBrownian => g_path(dt, n_t, s),
                Process::M => m_path(dt, n_t, s, MRepresentation::Spectral),
            }
            .expect("dt checked");
            idx.iter().map(|&k| path[k]).collect()
        })
        .collect();
    let exact_fn = match process {
        Process::Brownian => exact::brownian_cov,
        Process::IntegratedBrownian => exact::g_cov,
        Process::M => exact::m_cov,
    };
    Ok(covariance_diagnostics(probe_times, &samples, exact_fn))
}

/// Covariance diagnostics for centred samples `samples[path][probe]`.
pub fn covariance_diagnostics(
    probe_times: &[f64],
    samples: &[Vec<f64>],
    exact_fn: impl Fn(f64, f64) -> f64,
) -> GaussianDiagnostics {
    let k = probe_times.len();
    let mut emp = vec![vec![0.0; k]; k];
    let mut ex = vec![vec![0.0; k]; k];
    let mut se = vec![vec![0.0; k]; k];
    let (mut max_dev, mut max_z) = (0.0f64, 0.0f64);
    for a in 0..k {
        let xa: Vec<f64> = samples.iter().map(|s| s[a]).collect();
        for b in 0..k {
            let xb: Vec<f64> = samples.iter().map(|s| s[b]).collect();
            let (m, e) = stats::second_moment(&xa, &xb);
            emp[a][b] = m;
            se[a][b] = e;
            ex[a][b] = exact_fn(probe_times[a], probe_times[b]);
            let dev = (m - ex[a][b]).abs();
            max_dev = max_dev.max(dev);
            if e > 0.0 {
                max_z = max_z.max(dev / e);
            } else if dev > 0.0 {
                max_z = f64::INFINITY;
            }
        }
    }
    GaussianDiagnostics {
        probe_times: probe_times.to_vec(),
        empirical_cov: emp,
        exact_cov: ex,
        se,
        max_abs_dev: max_dev,
        max_z,
        n_paths: samples.len(),
    }
}

/// Window on which `min M ≥ L` is required.
pub const DEVIATION_WINDOW: (f64, f64) = (1.0 / 16.0, 3.0 / 16.0);

/// Estimate of `P(min_{t ∈ [1/16, 3/16]} M(t) ≥ L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationEstimate {
    pub level: f64,
    /// Importance-sampling estimate.
    pub p_hat: f64,
    pub se: f64,
    /// Normal 95% interval around `p_hat`, clipped at 0.
    pub interval: (f64, f64),
    /// Paths meeting the event under the tilted measure.
    pub tilted_successes: usize,
    /// Plain Monte Carlo on the same number of untilted paths.
    pub naive_successes: usize,
    pub naive_wilson: (f64, f64),
    pub n_paths: usize,
    /// Mean of `M(1/16)` under the tilted measure.
    pub tilt_target: f64,
}

impl DeviationEstimate {
    /// `p_hat` is zero when no tilted path reaches the level or all such
    /// weights underflow, which says nothing about the true probability.
    pub fn below_resolution(&self) -> bool {
        self.p_hat == 0.0
    }
}

/// Drift `θ(s) = c·sin(π(t1-s))/π` on `[0, t1)`, `t1 = 1/16`, with `c` chosen so
/// that `M(t1)` has mean `target` under `dB = θ ds + dB̃`. Among drifts that
/// achieve this mean it has least energy `∫θ²`.
fn tilt(dt: f64, n_t: usize, target: f64) -> Vec<f64> {
    let t1 = DEVIATION_WINDOW.0;
    let energy = t1 / 2.0 - (2.0 * PI * t1).sin() / (4.0 * PI);
    let c = PI * PI * target / energy;
    (0..n_t)
        .map(|m| {
            let s = m as f64 * dt;
            if s < t1 {
                c * (PI * (t1 - s)).sin() / PI
            } else {
                0.0
            }
        })
        .collect()
}

fn window_min(path: &[f64], dt: f64) -> f64 {
    let (a, b) = DEVIATION_WINDOW;
    path.iter()
        .enumerate()
        .filter(|(n, _)| {
            let t = *n as f64 * dt;
            t >= a - 1e-12 && t <= b + 1e-12
        })
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min)
}

/// Importance-sampled estimates for every level in `levels`, sharing one set of
/// tilted paths whose tilt targets `max(levels) + epsilon`. Estimates are
/// therefore exactly nonincreasing in the level.
pub fn deviation_curve(
    levels: &[f64],
    epsilon: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<DeviationEstimate>> {
    check_dt(dt)?;
    if levels.iter().any(|l| !(*l > 0.0)) || levels.is_empty() {
        return Err(Error::InvalidArgument("levels must be positive".into()));
    }
    let l_max = levels.iter().copied().fold(0.0, f64::max);
    let target = l_max + epsilon;
    let n_t = (DEVIATION_WINDOW.1 / dt - 1e-9).ceil() as usize;
    let theta = tilt(dt, n_t, target);
    let log_w_const: f64 = -0.5 * dt * theta.iter().map(|x| x * x).sum::<f64>();

    // (min of tilted path, weight, min of plain path)
    let draws: Vec<(f64, f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let s = path_seed(seed, i);
            let plain = brownian_increments(dt, n_t, s);
            let plain_min = window_min(&m_spectral(dt, &plain), dt);
            let mut log_w = log_w_const;
            let tilted: Vec<f64> = plain
                .iter()
                .zip(&theta)
                .map(|(d, th)| {
                    log_w -= th * d;
                    d + th * dt
                })
                .collect();
            (window_min(&m_spectral(dt, &tilted), dt), log_w.exp(), plain_min)
        })
        .collect();

    let n = n_paths as f64;
    Ok(levels
        .iter()
        .map(|&level| {
            let vals: Vec<f64> = draws
                .iter()
                .map(|(mn, w, _)| if *mn >= level { *w } else { 0.0 })
                .collect();
            let (p, v) = stats::mean_var(&vals);
            let se = if n_paths > 1 { (v / n).sqrt() } else { f64::NAN };
            let naive = draws.iter().filter(|d| d.2 >= level).count();
            DeviationEstimate {
                level,
                p_hat: p,
                se,
                interval: ((p - Z95 * se).max(0.0), p + Z95 * se),
                tilted_successes: draws.iter().filter(|d| d.0 >= level).count(),
                naive_successes: naive,
                naive_wilson: stats::wilson_interval(naive, n_paths, Z95),
                n_paths,
                tilt_target: target,
            }
        })
        .collect())
}

pub fn deviation_experiment(level: f64, epsilon: f64, n_paths: usize, dt: f64, seed: u64) -> Result<DeviationEstimate> {
    Ok(deviation_curve(&[level], epsilon, n_paths, dt, seed)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::midpoint;

    #[test]
    fn grids_are_reproducible() {
        let a = sample_white_noise(0.01, 0.01, 100, 100, 1).unwrap();
        let b = sample_white_noise(0.01, 0.01, 100, 100, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rng_id, rng::RNG_ID);
        let c = sample_white_noise(0.01, 0.01, 100, 100, 2).unwrap();
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn streaming_rows_match_materialised_grid() {
        let g = sample_white_noise(0.1, 0.2, 7, 5, 3).unwrap();
        let s = StreamingNoise::new(0.1, 0.2, 5, 3).unwrap();
        let mut row = vec![0.0; 5];
        for m in 0..7 {
            s.fill_row(m, &mut row);
            assert_eq!(row, g.row(m));
        }
    }

    #[test]
    fn cell_moments() {
        let (dt, dx) = (0.01, 0.01);
        let g = sample_white_noise(dt, dx, 1000, 1000, 11).unwrap();
        let (m, v) = stats::mean_var(&g.increments);
        let cell = dt * dx;
        assert!(m.abs() < 4.0 * (cell / 1e6).sqrt(), "{m}");
        assert!((v - cell).abs() < 4.0 * 2f64.sqrt() * cell / 1e3, "{v}");
    }

    #[test]
    fn budget_is_enforced() {
        let e = sample_white_noise_with_budget(0.1, 0.1, 1000, 1000, 0, 999_999).unwrap_err();
        assert!(matches!(e, Error::SizeOverflow { cells: 1_000_000, .. }));
    }

    #[test]
    fn brownian_starts_at_zero_and_is_deterministic() {
        let a = brownian_path(0.01, 100, 5).unwrap();
        assert_eq!(a[0], 0.0);
        assert_eq!(a, brownian_path(0.01, 100, 5).unwrap());
        assert_eq!(m_path(0.01, 100, 5, MRepresentation::Spectral).unwrap()[0], 0.0);
        assert_eq!(m_path(0.01, 100, 5, MRepresentation::Parts).unwrap()[0], 0.0);
        assert_eq!(g_path(0.01, 100, 5).unwrap()[0], 0.0);
    }

    #[test]
    fn running_sums_match_direct_convolutions() {
        let dt = 0.01;
        let inc = brownian_increments(dt, 150, 9);
        let b = cumulative(&inc);
        let spec = m_spectral(dt, &inc);
        let parts = m_parts(dt, &b);
        for n in [1, 17, 150] {
            let tn = n as f64 * dt;
            let direct: f64 = (0..n).map(|m| (PI * (tn - m as f64 * dt)).sin() / PI * inc[m]).sum();
            assert!((spec[n] - direct).abs() < 1e-12);
            let trap: f64 = (0..=n)
                .map(|m| {
                    let w = if m == 0 || m == n { 0.5 } else { 1.0 };
                    w * (PI * (tn - m as f64 * dt)).cos() * b[m]
                })
                .sum::<f64>()
                * dt;
            assert!((parts[n] - trap).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_covariances_match_quadrature() {
        let (s, t) = (0.7, 1.3);
        let m = midpoint(|u| (PI * (s - u)).sin() * (PI * (t - u)).sin(), 0.0, s, 100_000) / (PI * PI);
        assert!((exact::m_cov(s, t) - m).abs() < 1e-9);
        assert!((exact::m_cov(1.0, 1.0) - 1.0 / (2.0 * PI * PI)).abs() < 1e-15);
        assert!((exact::g_cov(1.0, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((exact::g_cov(2.0, 2.0) - 8.0 / 3.0).abs() < 1e-14);
        let g = midpoint(|u| midpoint(|v| u.min(v), 0.0, t, 2000), 0.0, s, 2000);
        assert!((exact::g_cov(s, t) - g).abs() < 1e-6);
    }

    #[test]
    fn increment_formulas() {
        // Brute force over the symmetric difference of the two cones.
        let (t, z) = (1.0, 0.5);
        let sym = midpoint(
            |s| midpoint(|y| (((y + z).abs() < s) != (y.abs() < s)) as u8 as f64, -3.0, 3.0, 6000),
            0.0,
            t,
            2000,
        ) / 4.0;
        assert!((exact::spatial_increment(t, z) - sym).abs() < 2e-3, "{sym}");
        assert!((exact::spatial_increment(t, z) - 0.21875).abs() < 1e-15);
        assert!((exact::one_sided_shell_increment(t, z) - 0.1875).abs() < 1e-15);
        assert_eq!(exact::spatial_increment(t, 0.0), 0.0);
        assert!((exact::temporal_increment(1.0, 0.5) - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn g_field_discrete_variance_is_exact() {
        // With dt = dx the cone holds 2(n-m)-1 nodes per row, so the variance
        // of g(t_n) is ¼·h²·Σ(2r-1) = t_n²/4 for every noise realisation's law.
        let h = 0.05;
        let n = 20;
        let cells: usize = (1..=n).map(|r| 2 * r - 1).sum();
        assert!((0.25 * h * h * cells as f64 - (n as f64 * h).powi(2) / 4.0).abs() < 1e-15);
        let f = g_field(h, h, 1.0, &[0.0], (-1.0, 1.0), 4).unwrap();
        assert_eq!(f.paths[0].len(), 21);
        assert_eq!(f.paths[0][0], 0.0);
    }

    #[test]
    fn g_field_matches_direct_cone_sum() {
        let h = 0.1;
        let grid = sample_white_noise(h, h, 10, 31, 8).unwrap();
        let f = g_field_on(&grid, -1.5, 1.0, &[0.0]).unwrap();
        let j = 15usize;
        for n in [1usize, 4, 10] {
            let mut direct = 0.0;
            for m in 0..n {
                for k in 0..31usize {
                    if (k as i64 - j as i64).unsigned_abs() < (n - m) as u64 {
                        direct += 0.5 * grid.row(m)[k];
                    }
                }
            }
            assert!((f.paths[0][n] - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn g_field_rejects_small_window() {
        let e = g_field(0.1, 0.1, 1.0, &[0.0], (-0.5, 1.0), 1).unwrap_err();
        assert!(matches!(e, Error::WindowTooSmall { .. }));
    }

    #[test]
    fn g_field_ignores_noise_outside_the_cone() {
        let h = 0.1;
        let a = sample_white_noise(h, h, 10, 41, 1).unwrap();
        let mut b = sample_white_noise(h, h, 10, 41, 2).unwrap();
        let j = 20usize;
        let n = 10usize;
        for m in 0..10 {
            for k in 0..41usize {
                if (k as i64 - j as i64).unsigned_abs() < (n - m) as u64 {
                    b.row_mut(m)[k] = a.row(m)[k];
                }
            }
        }
        let fa = g_field_on(&a, -2.0, 1.0, &[0.0]).unwrap();
        let fb = g_field_on(&b, -2.0, 1.0, &[0.0]).unwrap();
        assert_eq!(fa.paths[0][n].to_bits(), fb.paths[0][n].to_bits());
    }

    #[test]
    fn deviation_estimates_are_monotone_and_resolve_rare_levels() {
        let levels = [0.01, 0.03, 0.05];
        let est = deviation_curve(&levels, 0.005, 4000, 1e-3, 3).unwrap();
        assert!(est[0].p_hat >= est[1].p_hat && est[1].p_hat >= est[2].p_hat);
        assert!(est[2].p_hat > 0.0);
        assert!(est[2].tilted_successes > 100);
        let huge = deviation_experiment(1e6, 0.0, 1000, 1e-3, 3).unwrap();
        assert_eq!(huge.p_hat, 0.0);
        assert!(huge.below_resolution());
    }
}
