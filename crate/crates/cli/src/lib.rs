//! Command-line front end for the thin-film simulator.

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};

use thinfilm_core::diagnostics::{beta_iteration, fit_decay_exponent};
use thinfilm_core::harness::{
    run_scenario, sweep, RunStatus, ScenarioConfig, SnapshotPolicy, TrajectoryReport,
};
use thinfilm_core::io::{apply_override, read_config, read_records_csv, write_run};
use thinfilm_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "thinfilm",
    version,
    about = "Thin-film flow on a rotating cylinder"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Scenario file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set alpha=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write records.csv, report.json and fields/.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several scenarios concurrently, one output directory each.
    Sweep {
        /// Base scenario files; the defaults are used when none is given.
        #[arg(long = "config")]
        configs: Vec<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Sweep a key over values, e.g. `--vary alpha=1.5,2,3`.
        #[arg(long = "vary", value_name = "KEY=V1,V2,...")]
        vary: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the decay exponent of E from a records table.
    Fit {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        alpha: f64,
        /// Fit window `lo,hi`; defaults to the last two decades.
        #[arg(long, value_name = "LO,HI")]
        window: Option<String>,
        /// Admissible relative deviation from -2/(alpha-1).
        #[arg(long, default_value_t = 0.2)]
        tolerance: f64,
    },
    /// Print the exponent iteration beta_0..beta_n.
    BetaTable {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Run a scenario with dyadic field snapshots and print the budgets.
    Budgets {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &ConfigArgs) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => read_config(path)?,
        None => ScenarioConfig::default(),
    };
    for o in &args.overrides {
        apply_override(&mut cfg, o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Touchdown { .. } | Error::Stiffness { .. } | Error::Io(_) => EXIT_RUNTIME,
        Error::Fit(_) | Error::Coverage(_) => EXIT_CHECK,
        _ => EXIT_CONFIG,
    }
}

fn status_code(status: RunStatus) -> i32 {
    match status {
        RunStatus::Completed => EXIT_OK,
        _ => EXIT_RUNTIME,
    }
}

fn describe(report: &TrajectoryReport, out: &mut dyn Write) -> std::io::Result<()> {
    let s = &report.summary;
    match report.status {
        RunStatus::Completed => writeln!(out, "status: completed at t = {}", report.config.t_end)?,
        RunStatus::Touchdown { t } => writeln!(out, "status: touchdown at t = {t}")?,
        RunStatus::Stiffness { t } => writeln!(out, "status: stiffness at t = {t}")?,
    }
    writeln!(
        out,
        "steps: {} accepted, {} rejected",
        s.accepted_steps, s.rejected_steps
    )?;
    writeln!(out, "mass drift: {:.3e}", s.max_mass_drift)?;
    writeln!(
        out,
        "energy identity residual: {:.3e}",
        s.max_identity_residual
    )?;
    writeln!(out, "energy guard exceedances: {}", s.guard_exceedances)?;
    writeln!(
        out,
        "phi inequality violations: {}",
        s.phi_inequality_violations
    )?;
    match s.positivity_violation {
        Some(t) => writeln!(out, "positivity band [h/2, 2h] left at t = {t}")?,
        None => writeln!(out, "positivity band [h/2, 2h] held")?,
    }
    if let Some(f) = &report.fits.energy {
        writeln!(
            out,
            "E decay slope on [{}, {}]: {:.4} (expected {:.4})",
            f.window.0, f.window.1, f.slope, report.fits.expected_energy_slope
        )?;
    }
    if let Some(env) = &report.envelope {
        writeln!(
            out,
            "envelope constant C: {:.4e} (early {:.4e})",
            env.c, env.c_early
        )?;
    }
    Ok(())
}

fn simulate(cfg: &ScenarioConfig, dir: &Path, out: &mut dyn Write) -> Result<i32, Error> {
    let report = run_scenario(cfg)?;
    write_run(&report, dir)?;
    describe(&report, out)?;
    Ok(status_code(report.status))
}

/// Cartesian product of the base configurations with every `--vary` list.
fn expand(mut configs: Vec<ScenarioConfig>, vary: &[String]) -> Result<Vec<ScenarioConfig>, Error> {
    for spec in vary {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=v1,v2, got {spec:?}")))?;
        let mut next = Vec::new();
        for cfg in &configs {
            for v in values.split(',') {
                let mut c = cfg.clone();
                apply_override(&mut c, &format!("{key}={v}"))?;
                next.push(c);
            }
        }
        configs = next;
    }
    Ok(configs)
}

fn run_sweep(
    paths: &[PathBuf],
    overrides: &[String],
    vary: &[String],
    dir: &Path,
    out: &mut dyn Write,
) -> Result<i32, Error> {
    let base = if paths.is_empty() {
        vec![ScenarioConfig::default()]
    } else {
        paths
            .iter()
            .map(|p| read_config(p))
            .collect::<Result<_, _>>()?
    };
    let mut base = base;
    for cfg in &mut base {
        for o in overrides {
            apply_override(cfg, o)?;
        }
    }
    let configs = expand(base, vary)?;
    let width = configs.len().to_string().len().max(3);
    let mut code = EXIT_OK;
    for (i, result) in sweep(&configs).into_iter().enumerate() {
        let name = format!("run_{i:0width$}");
        match result {
            Ok(report) => {
                write_run(&report, &dir.join(&name))?;
                writeln!(
                    out,
                    "{name}: alpha = {}, epsilon = {}",
                    report.config.alpha, report.config.epsilon
                )?;
                describe(&report, out)?;
                code = code.max(status_code(report.status));
            }
            Err(e) => {
                writeln!(out, "{name}: {e}")?;
                code = code.max(exit_code(&e));
            }
        }
    }
    Ok(code)
}

fn parse_window(text: &str) -> Result<(f64, f64), Error> {
    let bad = || Error::Usage(format!("window must be lo,hi, got {text:?}"));
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

fn fit(
    records: &Path,
    alpha: f64,
    window: Option<&str>,
    tolerance: f64,
    out: &mut dyn Write,
) -> Result<i32, Error> {
    if alpha.is_nan() || alpha <= 1.0 {
        return Err(Error::Config(format!("alpha must exceed 1, got {alpha}")));
    }
    let records = read_records_csv(records).map_err(|e| Error::Config(e.to_string()))?;
    let window = match window {
        Some(w) => parse_window(w)?,
        None => {
            let t_end = records.last().map_or(0.0, |r| r.t);
            (t_end / 100.0, t_end)
        }
    };
    let series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.energy)).collect();
    let f = fit_decay_exponent(&series, window)?;
    let expected = -2.0 / (alpha - 1.0);
    let deviation = (f.slope - expected).abs() / expected.abs();
    writeln!(
        out,
        "window: [{}, {}] ({} samples)",
        f.window.0, f.window.1, f.points
    )?;
    writeln!(out, "slope: {:.6}", f.slope)?;
    writeln!(out, "intercept: {:.6}", f.intercept)?;
    writeln!(out, "r_squared: {:.6}", f.r_squared)?;
    writeln!(out, "expected: {expected:.6}")?;
    writeln!(out, "relative deviation: {deviation:.4}")?;
    Ok(if deviation <= tolerance {
        EXIT_OK
    } else {
        EXIT_CHECK
    })
}

fn beta_table(alpha: f64, n: usize, out: &mut dyn Write) -> Result<i32, Error> {
    let t = beta_iteration(alpha, n)?;
    writeln!(out, "n beta_n linear_beta_n")?;
    for (i, (b, l)) in t.betas.iter().zip(&t.linear_betas).enumerate() {
        writeln!(out, "{i} {b:.17} {l:.17}")?;
    }
    writeln!(
        out,
        "fixed point 2a/(a+1) = {:.17} reached at n = {}",
        t.fixed_point, t.steps_to_fixed_point
    )?;
    writeln!(out, "linear limit a(a^2+1)/(a+1) = {:.17}", t.linear_limit)?;
    Ok(EXIT_OK)
}

fn budgets(mut cfg: ScenarioConfig, dir: Option<&Path>, out: &mut dyn Write) -> Result<i32, Error> {
    cfg.snapshots = SnapshotPolicy::Dyadic;
    let report = run_scenario(&cfg)?;
    if let Some(dir) = dir {
        write_run(&report, dir)?;
    }
    describe(&report, out)?;
    let b = &report.budgets;
    if let Some(f) = &b.fourier {
        writeln!(
            out,
            "fourier budget: total {:.6e}, ratio {:.6e}",
            f.total, f.ratio
        )?;
        for w in &f.windows {
            writeln!(
                out,
                "  [{:.6e}, {:.6e}) {:.6e}",
                w.t_lo, w.t_hi, w.variation
            )?;
        }
    }
    for e in &b.third_derivative {
        write!(
            out,
            "third-derivative budget t = {} p = {}: {:.6e}",
            e.t_bar, e.p, e.value
        )?;
        match e.ratio {
            Some(r) => writeln!(out, " (ratio to envelope {r:.6e})")?,
            None => writeln!(out)?,
        }
    }
    for note in &b.notes {
        writeln!(out, "note: {note}")?;
    }
    if let Some(xi) = &report.xi {
        writeln!(
            out,
            "xi_1 = {:.6e}{:+.6e}i (tail variation {:.3e}, ratio {:.4e})",
            xi.estimate.xi_1.re, xi.estimate.xi_1.im, xi.estimate.uncertainty, xi.ratio
        )?;
    }
    let s = &report.summary;
    let failed = s.phi_inequality_violations > 0
        || s.guard_exceedances > 0
        || s.non_finite_records > 0
        || b.fourier.is_none();
    Ok(if failed {
        EXIT_CHECK
    } else {
        status_code(report.status)
    })
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn parse_and_dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_CONFIG
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, out: dir } => {
            load(config).and_then(|cfg| simulate(&cfg, dir, out))
        }
        Command::Sweep {
            configs,
            overrides,
            vary,
            out: dir,
        } => run_sweep(configs, overrides, vary, dir, out),
        Command::Fit {
            records,
            alpha,
            window,
            tolerance,
        } => fit(records, *alpha, window.as_deref(), *tolerance, out),
        Command::BetaTable { alpha, n } => beta_table(*alpha, *n, out),
        Command::Budgets { config, out: dir } => {
            load(config).and_then(|cfg| budgets(cfg, dir.as_deref(), out))
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "thinfilm: {e}");
            exit_code(&e)
        }
    }
}
