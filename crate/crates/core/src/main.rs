use std::env;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use osgood_wave::config::RunConfig;
use osgood_wave::drift::DriftFunction;
use osgood_wave::kernels::DomainCase;
use osgood_wave::osgood::{osgood_integral, OsgoodQuery};
use osgood_wave::recipes::{self, CheckRow};
use osgood_wave::spde::{self, FieldInit, SpdeProblem};
use osgood_wave::table::{fmt_f64, Table};
use osgood_wave::volterra::{self, BlowUpReport, IntegralEquationProblem, SampledPath};
use osgood_wave::{rng, Error, Result};

/// Blow-up experiments for the stochastic wave equation.
///
/// Tables go to stdout unless an output directory is given with `--out` or
/// OSGOOD_WAVE_OUT. OSGOOD_WAVE_WORKERS sets the thread count.
#[derive(Parser)]
#[command(name = "osgood-wave", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate T(alpha, beta) and print verdict,value,abs_error,truncation_point.
    CheckOsgood(CheckOsgoodArgs),
    /// Integrate y'' = b(y), or the forced integral equation, and print t,y.
    Ode(OdeArgs),
    /// Run one SPDE realisation and print field snapshots t,x,u.
    Simulate(SimulateArgs),
    /// Monte Carlo blow-up frequency over consecutive seeds.
    Mc(McArgs),
    /// Covariance, increment and scheme-calibration battery.
    NoiseCheck(NoiseCheckArgs),
    /// Green kernel integral and series identities.
    KernelCheck(KernelCheckArgs),
    /// Run a named experiment and write its CSV artifacts.
    Recipe(RecipeArgs),
}

#[derive(Args)]
struct Common {
    /// key=value file supplying flags; command-line flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Write the effective configuration to FILE.
    #[arg(long, value_name = "FILE")]
    emit_config: Option<PathBuf>,
    /// Output directory for CSV files (default: OSGOOD_WAVE_OUT, else stdout).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct CheckOsgoodArgs {
    #[arg(long)]
    drift: String,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    /// Relative tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Truncation cap for the outer integral.
    #[arg(long, default_value_t = 1e12)]
    cap: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct OdeArgs {
    #[arg(long)]
    drift: String,
    /// y(0), or A for the forced equation.
    #[arg(long)]
    alpha: f64,
    /// y'(0), or B for the forced equation.
    #[arg(long)]
    beta: f64,
    /// CSV with columns t,g on a uniform grid starting at 0.
    #[arg(long, value_name = "FILE")]
    forcing: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    #[arg(long, default_value_t = 10.0)]
    tmax: f64,
    #[arg(long, default_value_t = volterra::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Print every k-th grid point.
    #[arg(long, default_value_t = 1)]
    every: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct SpdeFlags {
    /// dirichlet, circle or line.
    #[arg(long, default_value = "circle")]
    case: String,
    /// Interest interval for the line case.
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
    /// Causal padding for the line case (default: tmax).
    #[arg(long)]
    padding: Option<f64>,
    /// Initial position: const:V or an expression in x.
    #[arg(long, default_value = "const:0")]
    u0: String,
    /// Initial velocity: const:V or an expression in x.
    #[arg(long, default_value = "const:0")]
    v0: String,
    /// Noise coefficient: const:S or a Lipschitz expression in x.
    #[arg(long, default_value = "const:1")]
    sigma: String,
    #[arg(long)]
    drift: String,
    #[arg(long, default_value_t = 0.01)]
    h: f64,
    /// Time step; must equal h.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    tmax: f64,
    #[arg(long, default_value_t = spde::DEFAULT_SPDE_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct SimulateArgs {
    #[command(flatten)]
    spde: SpdeFlags,
    /// Keep every k-th time level (0: initial and final only).
    #[arg(long, default_value_t = 0)]
    dump_every: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct McArgs {
    #[command(flatten)]
    spde: SpdeFlags,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Worker threads (default: OSGOOD_WAVE_WORKERS, else all CPUs).
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct NoiseCheckArgs {
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 0.01)]
    field_h: f64,
    #[arg(long, default_value_t = 10_000)]
    calibration_trials: usize,
    #[arg(long, default_value_t = 0.05)]
    calibration_h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct KernelCheckArgs {
    /// Times, separated by `;`.
    #[arg(long, default_value = "0.3;0.7;1.5;3.2")]
    times: String,
    #[arg(long, default_value_t = 100_000)]
    cells: usize,
    #[arg(long, default_value_t = 100_000)]
    terms: usize,
    #[arg(long, default_value_t = 20)]
    series_points: usize,
    #[arg(long, default_value_t = 0.05)]
    cone_margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct RecipeArgs {
    /// One of lemma21-equivalence, osgood-threshold-delta,
    /// circle-blowup-frequency, noise-diagnostics, kernel-identities,
    /// deviation-probe.
    name: String,
    /// Master seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Parameter overrides, key=value, comma separated or repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", action = ArgAction::Append, value_delimiter = ',')]
    set: Vec<String>,
    #[command(flatten)]
    common: Common,
}

const NOT_CONFIGURABLE: [&str; 4] = ["config", "emit-config", "help", "version"];

fn config_keys(sub: &clap::Command) -> (Vec<String>, Vec<String>) {
    let mut keys = Vec::new();
    let mut switches = Vec::new();
    for a in sub.get_arguments() {
        let Some(long) = a.get_long() else { continue };
        if NOT_CONFIGURABLE.contains(&long) {
            continue;
        }
        keys.push(long.to_string());
        if !a.get_action().takes_values() {
            switches.push(long.to_string());
        }
    }
    (keys, switches)
}

/// Splices the entries of any `--config FILE` in before the explicit flags.
fn expand_config(raw: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = raw.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(raw);
    };
    let path = match raw[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => raw
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| Error::Config("--config needs a file".into()))?,
    };
    let Some(sub) = raw.get(1).and_then(|name| Cli::command().find_subcommand(name).cloned()) else {
        return Ok(raw);
    };
    let cfg = RunConfig::load(Path::new(&path))?;
    let (keys, switches) = config_keys(&sub);
    cfg.check_keys(&keys)?;
    let mut out = raw[..2].to_vec();
    out.extend(cfg.to_args(&switches)?);
    out.extend(raw[2..].iter().cloned());
    Ok(out)
}

/// Every configurable flag with the value in effect, defaults included.
fn effective_config(sub: &clap::Command, m: &ArgMatches) -> RunConfig {
    let mut cfg = RunConfig::default();
    for a in sub.get_arguments() {
        let Some(long) = a.get_long() else { continue };
        if NOT_CONFIGURABLE.contains(&long) {
            continue;
        }
        let id = a.get_id().as_str();
        if !a.get_action().takes_values() {
            cfg.set(long, m.get_flag(id));
        } else if let Some(vals) = m.get_raw(id) {
            let vals: Vec<String> = vals.map(|v| v.to_string_lossy().into_owned()).collect();
            cfg.set(long, vals.join(","));
        }
    }
    cfg
}

struct Ctx {
    command: &'static str,
    effective: RunConfig,
    out: Option<PathBuf>,
}

impl Ctx {
    fn table(&self, t: Table) -> Table {
        let mut meta = vec![
            ("command".to_string(), self.command.to_string()),
            ("rng_id".to_string(), rng::RNG_ID.to_string()),
        ];
        meta.extend(self.effective.entries.iter().cloned());
        meta.extend(t.meta);
        Table { meta, ..t }
    }

    /// Writes `<name>.csv` into the output directory, or prints it.
    fn emit(&self, name: &str, t: Table) -> Result<()> {
        let t = self.table(t);
        match &self.out {
            Some(dir) => t.write(&dir.join(format!("{name}.csv"))),
            None => say(t.render().trim_end()),
        }
    }
}

fn say(line: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{line}")?;
    Ok(())
}

fn report_line(r: &BlowUpReport) -> String {
    let values = r.csv_line();
    let pairs: Vec<String> = "blew_up,t_blow,t_cross,tail,threshold,dt_used"
        .split(',')
        .zip(values.split(','))
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    format!("# report {}", pairs.join(" "))
}

fn check_osgood(a: &CheckOsgoodArgs) -> Result<ExitCode> {
    let q = OsgoodQuery::new(DriftFunction::parse(&a.drift)?, a.alpha, a.beta)
        .rel_tol(a.tol)
        .s_max_cap(a.cap);
    say(&osgood_integral(&q)?.csv_line())?;
    Ok(ExitCode::SUCCESS)
}

fn read_forcing(path: &Path) -> Result<SampledPath> {
    let text = fs::read_to_string(path)?;
    let mut ts = Vec::new();
    let mut gs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('t') {
            continue;
        }
        let bad = || Error::InvalidArgument(format!("{}:{}: expected t,g", path.display(), i + 1));
        let (t, g) = line.split_once(',').ok_or_else(bad)?;
        ts.push(t.trim().parse::<f64>().map_err(|_| bad())?);
        gs.push(g.trim().parse::<f64>().map_err(|_| bad())?);
    }
    if ts.len() < 2 {
        return Err(Error::InvalidArgument("forcing needs at least two samples".into()));
    }
    let dt = ts[1] - ts[0];
    if ts.iter().enumerate().any(|(i, t)| (t - ts[0] - i as f64 * dt).abs() > 1e-9 * (1.0 + t.abs())) {
        return Err(Error::InvalidArgument("forcing times must be uniformly spaced".into()));
    }
    SampledPath::new(ts[0], dt, gs)
}

fn ode(a: &OdeArgs, ctx: &Ctx) -> Result<ExitCode> {
    let drift = DriftFunction::parse(&a.drift)?;
    let tr = match &a.forcing {
        Some(f) => {
            let g = read_forcing(f)?;
            let p = IntegralEquationProblem::forced(drift, a.alpha, a.beta, g);
            volterra::solve_volterra(&p, a.dt, a.tmax, a.threshold)?
        }
        None => volterra::solve_ode2(a.alpha, a.beta, &drift, a.dt, a.tmax, a.threshold)?,
    };
    let mut t = Table::new(&["t", "y"]);
    for (i, y) in tr.values.iter().enumerate().step_by(a.every.max(1)) {
        t.push_f64(&[tr.time(i), *y]);
    }
    ctx.emit("ode", t)?;
    say(&report_line(&tr.report))?;
    Ok(ExitCode::SUCCESS)
}

fn spde_problem(f: &SpdeFlags) -> Result<SpdeProblem> {
    let case = match f.case.as_str() {
        "dirichlet" => DomainCase::Dirichlet01,
        "circle" => DomainCase::Circle,
        "line" => DomainCase::real_line(f.lo, f.hi, f.padding.unwrap_or(f.tmax))?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown case `{other}`; expected dirichlet, circle or line"
            )))
        }
    };
    let sigma = match FieldInit::parse(&f.sigma)? {
        FieldInit::Const(s) => DriftFunction::constant(s),
        FieldInit::Expr(e) => e,
        FieldInit::Samples(_) => unreachable!("parse yields constants or expressions"),
    };
    let mut p = SpdeProblem::new(case, DriftFunction::parse(&f.drift)?, f.h, f.tmax)
        .initial(FieldInit::parse(&f.u0)?, FieldInit::parse(&f.v0)?)
        .sigma(sigma)
        .threshold(f.threshold)
        .seed(f.seed);
    p.dt = f.dt;
    Ok(p)
}

fn simulate(a: &SimulateArgs, ctx: &Ctx) -> Result<ExitCode> {
    let mut p = spde_problem(&a.spde)?;
    p.dump_every = a.dump_every;
    let run = spde::simulate(&p)?;
    let f = &run.field;
    let mut t = Table::new(&["t", "x", "u"]);
    for (level, u) in &f.snapshots {
        let tn = f.time(*level);
        for (x, v) in f.grid.x.iter().zip(u) {
            t.push_f64(&[tn, *x, *v]);
        }
    }
    ctx.emit("simulate", t)?;
    if ctx.out.is_some() {
        let o = &f.observables;
        let mut t = Table::new(&["t", "x_avg", "g_weighted", "y_sup"]);
        for i in 0..o.t.len() {
            t.push_f64(&[o.t[i], o.x_avg[i], o.g_weighted[i], o.y_sup[i]]);
        }
        ctx.emit("simulate-observables", t)?;
    }
    say(&report_line(&run.report))?;
    Ok(ExitCode::SUCCESS)
}

fn mc(a: &McArgs, ctx: &Ctx) -> Result<ExitCode> {
    let p = spde_problem(&a.spde)?;
    let r = spde::mc_blowup(&p, a.trials, a.spde.seed, 0)?;
    ctx.emit("mc", recipes::trial_table(&r))?;
    say(&format!(
        "# report n_trials={} n_blown={} frequency={} wilson_lo={} wilson_hi={}",
        r.n_trials,
        r.n_blown,
        fmt_f64(r.frequency),
        fmt_f64(r.wilson.0),
        fmt_f64(r.wilson.1)
    ))?;
    Ok(ExitCode::SUCCESS)
}

fn status(first_failure: Option<&str>) -> ExitCode {
    match first_failure {
        Some(name) => {
            eprintln!("first failing check: {name}");
            ExitCode::from(1)
        }
        None => ExitCode::SUCCESS,
    }
}

fn noise_check(a: &NoiseCheckArgs, ctx: &Ctx) -> Result<ExitCode> {
    let rows = recipes::noise_battery_with(
        a.paths,
        a.dt,
        a.field_h,
        a.calibration_trials,
        a.calibration_h,
        a.seed,
    )?;
    ctx.emit("noise-check", recipes::battery_table(&rows))?;
    Ok(status(rows.iter().find(|r| !r.pass).map(|r| r.name.as_str())))
}

fn check_table(rows: &[CheckRow]) -> Table {
    let mut t = Table::new(&["name", "expected", "observed", "tolerance", "pass"]);
    for r in rows {
        t.push(vec![
            r.name.clone(),
            r.expected.clone(),
            r.observed.clone(),
            r.tolerance.clone(),
            r.pass_str().into(),
        ]);
    }
    t
}

fn kernel_check(a: &KernelCheckArgs, ctx: &Ctx) -> Result<ExitCode> {
    let times: Vec<f64> = a
        .times
        .split(';')
        .map(|s| s.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad time `{s}`"))))
        .collect::<Result<_>>()?;
    let rows = recipes::kernel_checks_with(&times, a.cells, a.terms, a.series_points, a.cone_margin, a.seed)?;
    ctx.emit("kernel-check", check_table(&rows))?;
    Ok(status(rows.iter().find(|r| r.pass == Some(false)).map(|r| r.name.as_str())))
}

fn recipe(a: &RecipeArgs, ctx: &Ctx) -> Result<ExitCode> {
    let overrides: Vec<(String, String)> = a
        .set
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::InvalidArgument(format!("override `{kv}` is not key=value")))
        })
        .collect::<Result<_>>()?;
    let out = recipes::run_recipe(&a.name, &overrides, a.seed)?;
    let dir = ctx.out.clone().unwrap_or_else(|| PathBuf::from("."));
    out.write(&dir)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "name,expected,observed,tolerance,pass")?;
    for c in &out.checks {
        writeln!(stdout, "{}", c.csv_line())?;
    }
    Ok(status(out.first_failure().map(|c| c.name.as_str())))
}

fn workers_from_env() -> Result<Option<usize>> {
    match env::var("OSGOOD_WAVE_WORKERS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("OSGOOD_WAVE_WORKERS=`{v}` is not a count"))),
        _ => Ok(None),
    }
}

fn run() -> Result<ExitCode> {
    let raw = expand_config(env::args().collect())?;
    let matches = match Cli::command().try_get_matches_from(&raw) {
        Ok(m) => m,
        Err(e) => {
            e.print()?;
            return Ok(ExitCode::from(if e.use_stderr() { 2 } else { 0 }));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let (name, sub_m) = matches.subcommand().expect("subcommand required");
    let sub = Cli::command().find_subcommand(name).cloned().expect("known subcommand");
    let effective = effective_config(&sub, sub_m);

    let common = match &cli.cmd {
        Cmd::CheckOsgood(a) => &a.common,
        Cmd::Ode(a) => &a.common,
        Cmd::Simulate(a) => &a.common,
        Cmd::Mc(a) => &a.common,
        Cmd::NoiseCheck(a) => &a.common,
        Cmd::KernelCheck(a) => &a.common,
        Cmd::Recipe(a) => &a.common,
    };
    if let Some(path) = &common.emit_config {
        fs::write(path, effective.render())?;
    }
    let workers = match &cli.cmd {
        Cmd::Mc(a) if a.workers.is_some() => a.workers,
        _ => workers_from_env()?,
    };
    if let Some(n) = workers.filter(|n| *n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let out = common
        .out
        .clone()
        .or_else(|| env::var_os("OSGOOD_WAVE_OUT").filter(|v| !v.is_empty()).map(PathBuf::from));
    let command = match &cli.cmd {
        Cmd::CheckOsgood(_) => "check-osgood",
        Cmd::Ode(_) => "ode",
        Cmd::Simulate(_) => "simulate",
        Cmd::Mc(_) => "mc",
        Cmd::NoiseCheck(_) => "noise-check",
        Cmd::KernelCheck(_) => "kernel-check",
        Cmd::Recipe(_) => "recipe",
    };
    let ctx = Ctx { command, effective, out };
    match &cli.cmd {
        Cmd::CheckOsgood(a) => check_osgood(a),
        Cmd::Ode(a) => ode(a, &ctx),
        Cmd::Simulate(a) => simulate(a, &ctx),
        Cmd::Mc(a) => mc(a, &ctx),
        Cmd::NoiseCheck(a) => noise_check(a, &ctx),
        Cmd::KernelCheck(a) => kernel_check(a, &ctx),
        Cmd::Recipe(a) => recipe(a, &ctx),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
