//! The `nonreg` command line: scenario files in, CSV and JSON artifacts out.
//!
//! Exit codes: 0 on success, 2 for configuration errors (bad flags, unreadable
//! or invalid scenario files), 3 for runtime and estimation errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nonreg_core::analysis::{fisher_information, MisspecAsymptotics, QuadratureRule};
use nonreg_core::experiments::{linspace, region_scan, run_scenario, SampleSizes, Scenario};
use nonreg_core::limits::{limit_params, CuspParams, LimitParams, LimitSampler, Regime, RegimeLimit, Which};
use nonreg_core::simulate::simulate_sample;
use nonreg_core::windows::{level_threshold, optimal_window};
use nonreg_core::{CatalogId, Error, IntensityModel, RngStream};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nonreg", version, about = "Estimation experiments for inhomogeneous Poisson processes")]
pub struct Cli {
    /// Worker threads (output does not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one sample at the scenario's first n and write its events.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a Monte Carlo scenario; writes <prefix>.table.csv and <prefix>.summary.json.
    Experiment {
        scenario: PathBuf,
        #[arg(long)]
        out_prefix: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Draw from a regime's limit law as a single-column CSV.
    Limits {
        #[arg(long)]
        regime: String,
        /// Limit or model parameter as key=value; repeatable.
        #[arg(long = "param", value_parser = parse_key_value)]
        params: Vec<(String, f64)>,
        /// Compute the limit parameters from a catalog model instead.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value = "mle", value_parser = parse_which)]
        which: Which,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal observation window of a model at a parameter value, as JSON.
    Windows {
        #[arg(long)]
        model: String,
        #[arg(long = "param", value_parser = parse_key_value)]
        params: Vec<(String, f64)>,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        mu_star: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Change-point consistency map: KL minimization against the closed-form region.
    RegionMap {
        /// Ratios g2/g1, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        /// h1 grid as lo:hi:count.
        #[arg(long, default_value = "-0.9:2.1:21", value_parser = parse_range, allow_hyphen_values = true)]
        h1: (f64, f64, usize),
        /// h2 grid as lo:hi:count.
        #[arg(long, default_value = "-1.4:1.6:21", value_parser = parse_range, allow_hyphen_values = true)]
        h2: (f64, f64, usize),
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Scenario overrides allowed on the command line.
#[derive(Debug, Args)]
struct Overrides {
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::Config(_)) => EXIT_CONFIG,
            CliError::Core(_) | CliError::Io(..) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn parse_key_value(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected lo:hi:count, got '{s}'"));
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("{e}"))?;
    let count: usize = parts[2].parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi, count))
}

fn parse_which(s: &str) -> std::result::Result<Which, String> {
    match s.to_ascii_lowercase().as_str() {
        "mle" => Ok(Which::Mle),
        "bayes" | "be" => Ok(Which::Bayes),
        _ => Err(format!("expected mle or bayes, got '{s}'")),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = match cli.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(CliError::Core(Error::Config(format!("worker pool: {e}")))),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Simulate {
            scenario,
            out,
            overrides,
        } => cmd_simulate(&scenario, out.as_deref(), &overrides),
        Command::Experiment {
            scenario,
            out_prefix,
            overrides,
        } => cmd_experiment(&scenario, out_prefix.as_deref(), &overrides),
        Command::Limits {
            regime,
            params,
            model,
            theta0,
            samples,
            which,
            seed,
            out,
        } => cmd_limits(&regime, &params, model.as_deref(), theta0, samples, which, seed, out.as_deref()),
        Command::Windows {
            model,
            params,
            theta,
            mu_star,
            out,
        } => cmd_windows(&model, &params, theta, mu_star, out.as_deref()),
        Command::RegionMap { x, h1, h2, out } => cmd_region_map(&x, h1, h2, out.as_deref()),
    }
}

fn load_scenario(path: &Path, overrides: &Overrides) -> CliResult<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Core(Error::Config(format!("{}: {e}", path.display()))))?;
    let mut s = Scenario::from_toml(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(n) = &overrides.n {
        s.n = if n.len() == 1 {
            SampleSizes::One(n[0])
        } else {
            SampleSizes::Many(n.clone())
        };
    }
    if let Some(m) = overrides.replicates {
        s.replicates = m;
    }
    if let Some(seed) = overrides.seed {
        s.seed = seed;
    }
    s.validate()?;
    Ok(s)
}

/// Writes to `path`, or to stdout without one.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult<()> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::Io(p.to_path_buf(), e))?;
            let mut w = BufWriter::new(file);
            f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::Io(p.to_path_buf(), e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e))
        }
    }
}

fn cmd_simulate(scenario: &Path, out: Option<&Path>, overrides: &Overrides) -> CliResult<()> {
    let s = load_scenario(scenario, overrides)?;
    let model = s.build_model()?;
    let truth = s.build_truth(&model)?;
    let n = s.sizes()[0];
    let sample = simulate_sample(&truth, n, RngStream::new(s.seed, 0))?;
    let target = out.map(Path::to_path_buf).or_else(|| s.output.events.as_ref().map(PathBuf::from));
    with_output(target.as_deref(), |w| sample.write_csv(w))
}

fn cmd_experiment(scenario: &Path, prefix: Option<&Path>, overrides: &Overrides) -> CliResult<()> {
    let s = load_scenario(scenario, overrides)?;
    let (table, summary) = match prefix {
        Some(p) => {
            let base = p.as_os_str().to_owned();
            let mut t = base.clone();
            t.push(".table.csv");
            let mut j = base;
            j.push(".summary.json");
            (PathBuf::from(t), PathBuf::from(j))
        }
        None => match (&s.output.table, &s.output.summary) {
            (Some(t), Some(j)) => (PathBuf::from(t), PathBuf::from(j)),
            _ => {
                return Err(Error::Config(
                    "no output location: pass --out-prefix or set output.table and output.summary".into(),
                )
                .into())
            }
        },
    };
    let report = run_scenario(&s)?;
    with_output(Some(&table), |w| report.write_table(w))?;
    let doc = report.summary_json();
    with_output(Some(&summary), |w| {
        serde_json::to_writer_pretty(&mut *w, &doc).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

fn param(map: &BTreeMap<String, f64>, key: &str) -> CliResult<f64> {
    map.get(key)
        .copied()
        .ok_or_else(|| Error::Config(format!("missing --param {key}=...")).into())
}

/// Limit parameters given directly on the command line.
fn limit_from_params(regime: Regime, map: &BTreeMap<String, f64>) -> CliResult<RegimeLimit> {
    let get = |k: &str| param(map, k);
    let or = |k: &str, d: f64| map.get(k).copied().unwrap_or(d);
    let info = || get("fisher_information").or_else(|_| get("I"));
    let params = match regime {
        Regime::Regular => LimitParams::Regular {
            fisher_information: info()?,
        },
        Regime::Boundary => LimitParams::Boundary {
            fisher_information: info()?,
            lower: or("lower", 0.0),
        },
        Regime::NullFisher => LimitParams::NullFisher { i3: get("i3")? },
        Regime::DiscFisher => LimitParams::DiscFisher {
            i_minus: get("i_minus")?,
            i_plus: get("i_plus")?,
            correlation: get("correlation")?,
        },
        Regime::Misspecified => {
            let d_star_sq = get("d_star_sq")?;
            let i_star = get("i_star")?;
            LimitParams::Misspecified(MisspecAsymptotics {
                theta_star: or("theta_star", 0.0),
                d_star_sq,
                i_star,
                d_big_sq: d_star_sq / (i_star * i_star),
            })
        }
        Regime::Cusp => {
            let c = CuspParams::new(or("a", 1.0), get("kappa")?, or("lambda0", 1.0))?;
            let c = c.with_grid(or("halfwidth", c.grid_halfwidth), or("points", c.grid_points as f64) as usize)?;
            LimitParams::Cusp(c)
        }
        Regime::Jump => return Ok(RegimeLimit::jump(get("lambda_minus")?, get("lambda_plus")?)?),
        Regime::Nonidentifiable => {
            return Err(Error::Config("the nonidentifiable limit needs --model and --theta0".into()).into())
        }
    };
    for (k, v) in map {
        if !v.is_finite() {
            return Err(Error::Config(format!("--param {k} must be finite")).into());
        }
    }
    Ok(RegimeLimit::new(params))
}

fn build_model(id: &str, params: &[(String, f64)]) -> CliResult<IntensityModel> {
    let id: CatalogId = id.parse()?;
    let map: BTreeMap<String, f64> = params.iter().cloned().collect();
    Ok(IntensityModel::from_catalog(id, &map, None)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_limits(
    regime: &str,
    params: &[(String, f64)],
    model: Option<&str>,
    theta0: Option<f64>,
    samples: usize,
    which: Which,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<()> {
    let regime: Regime = regime.parse()?;
    let limit = match model {
        Some(id) => {
            let m = build_model(id, params)?;
            let theta0 = theta0.ok_or_else(|| Error::Config("--theta0 is required with --model".into()))?;
            limit_params(regime, &m, theta0, None, &QuadratureRule::default())?
        }
        None => {
            let map: BTreeMap<String, f64> = params.iter().cloned().collect();
            limit_from_params(regime, &map)?
        }
    };
    let draws = LimitSampler::new(&limit)?.sample_batch(samples, RngStream::new(seed, 0), which)?;
    with_output(out, |w| {
        writeln!(w, "draw")?;
        for d in &draws {
            writeln!(w, "{d:.16e}")?;
        }
        Ok(())
    })
}

fn cmd_windows(id: &str, params: &[(String, f64)], theta: f64, mu_star: f64, out: Option<&Path>) -> CliResult<()> {
    let model = build_model(id, params)?;
    let window = optimal_window(&model, theta, mu_star)?;
    let threshold = level_threshold(&model, theta, mu_star)?;
    let info = fisher_information(&model, theta, Some(&window), None, &QuadratureRule::default())?;
    let doc = serde_json::json!({
        "model": model.id().as_str(),
        "theta": theta,
        "mu_star": mu_star,
        "threshold": threshold,
        "intervals": window,
        "measure": window.measure(),
        "fisher_information": info,
    });
    with_output(out, |w| {
        serde_json::to_writer_pretty(&mut *w, &doc).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

fn cmd_region_map(x: &[f64], h1: (f64, f64, usize), h2: (f64, f64, usize), out: Option<&Path>) -> CliResult<()> {
    let h1 = linspace(h1.0, h1.1, h1.2);
    let h2 = linspace(h2.0, h2.1, h2.2);
    let scan = region_scan(x, &h1, &h2).map_err(|e| match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    })?;
    eprintln!("agreement {}", scan.agreement());
    with_output(out, |w| scan.write_csv(w))
}
