use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use qglauber_core::exact::{initial_density_matrix, ExactEvolver, Mode};
use qglauber_core::io::{fmt_f64, read_series_csv, write_grid_csv};
use qglauber_core::observables::{
    equilibrium_probability, half_time, hamming_classify, TimeSeries,
};
use qglauber_core::scaling::{
    crossover_from_params, crossover_time, default_window, fit_power_law, fit_regime,
    scaled_points, CrossoverParams, CrossoverPoint, CrossoverResult, PowerLawFit, Regime,
    ScalingFit, Window,
};
use qglauber_core::{ChainGeometry, LocalChannel, Variant};
use serde::{Deserialize, Serialize};

use crate::manifest::{file_digest, RunManifest};
use crate::Status;

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, default_value = "S0")]
    variant: String,
    /// Classify the classical baseline instead of a quantum variant
    #[arg(long)]
    classical: bool,
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Largest Hamming distance d_H(i, j) to classify
    #[arg(long, default_value_t = 3)]
    c_max: usize,
    /// Give up looking for the half time after this many MCS
    #[arg(long, default_value_t = 200)]
    mcs: u64,
    /// Additional snapshot times in MCS
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    #[arg(long, env = "QGLAUBER_OUT", default_value = "out")]
    out: PathBuf,
}

fn write_grid(
    out: &Path,
    name: &str,
    rho: &qglauber_core::DensityMatrix,
    c_max: usize,
) -> Result<()> {
    let path = out.join(name);
    write_grid_csv(fs::File::create(&path)?, &hamming_classify(rho, c_max))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_classify(a: ClassifyArgs) -> Result<Status> {
    let g = ChainGeometry::periodic(a.n)?;
    let (channel, mode, label) = if a.classical {
        (
            LocalChannel::classical(),
            Mode::ClassicalBaseline,
            "classical".to_string(),
        )
    } else {
        let v: Variant = a.variant.parse()?;
        (
            LocalChannel::from_variant(v),
            Mode::Quantum,
            v.name().to_string(),
        )
    };
    let n = a.n as u64;
    let mut extra = Vec::with_capacity(a.times.len());
    for &t in &a.times {
        let s = t * a.n as f64;
        if t < 0.0 || (s - s.round()).abs() > 1e-9 {
            bail!("time {t} MCS does not fall on an elemental step");
        }
        extra.push((t, s.round() as u64));
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let mut ev = ExactEvolver::new(initial_density_matrix(&g)?, channel, mode)?;
    let last_extra = extra.iter().map(|e| e.1).max().unwrap_or(0);
    let limit = (a.mcs * n).max(n).max(last_extra);
    let mut prev_peq = equilibrium_probability(ev.state());
    let mut t_half: Option<f64> = None;
    for &(t, s) in &extra {
        if s == 0 {
            write_grid(&a.out, &format!("grid_t{t}.csv"), ev.state(), a.c_max)?;
        }
    }
    while ev.steps_done() < limit {
        ev.advance_to(ev.steps_done() + 1);
        let step = ev.steps_done();
        if step == n {
            write_grid(&a.out, "grid_t1.csv", ev.state(), a.c_max)?;
        }
        for &(t, s) in &extra {
            if s == step {
                write_grid(&a.out, &format!("grid_t{t}.csv"), ev.state(), a.c_max)?;
            }
        }
        let peq = equilibrium_probability(ev.state());
        if t_half.is_none() && peq >= 0.5 {
            let frac = (0.5 - prev_peq) / (peq - prev_peq);
            let th = (step as f64 - 1.0 + frac) / a.n as f64;
            println!(
                "{label}: P_eq half time {th:.4} MCS; snapshot at {:.4} MCS",
                step as f64 / a.n as f64
            );
            write_grid(&a.out, "grid_thalf.csv", ev.state(), a.c_max)?;
            t_half = Some(th);
        }
        prev_peq = peq;
        if t_half.is_some() && step >= n && step >= last_extra {
            break;
        }
    }
    if t_half.is_none() {
        log::warn!(
            "P_eq did not reach 1/2 within {} MCS; no half-time grid written",
            a.mcs
        );
    }
    let mut m = RunManifest::new("classify");
    m.variant = label;
    m.n_sites = a.n;
    m.mode = if a.classical { "classical" } else { "exact" }.into();
    m.n_mcs = a.mcs;
    m.stride = 1;
    m.c_max = Some(a.c_max);
    m.site_update = "uniform-mixture".into();
    m.write(&a.out)?;
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_parser = parse_regime)]
    regime: Regime,
    /// Coherence series, one per chain length
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Equilibrium-probability series in the same order, for default windows
    #[arg(long = "peq", num_args = 1..)]
    peq: Vec<PathBuf>,
    /// Fit window `t_min:t_max` in MCS; one for all inputs or one per input
    #[arg(long = "window", num_args = 1..)]
    windows: Vec<String>,
    #[arg(long, env = "QGLAUBER_OUT", default_value = "out")]
    out: PathBuf,
}

fn parse_regime(s: &str) -> std::result::Result<Regime, String> {
    s.parse().map_err(|e: qglauber_core::Error| e.to_string())
}

fn parse_window(s: &str) -> Result<Window> {
    let (a, b) = s
        .split_once(':')
        .with_context(|| format!("window {s:?} is not of the form t_min:t_max"))?;
    let t_min = a
        .trim()
        .parse()
        .with_context(|| format!("bad t_min in {s:?}"))?;
    let t_max = b
        .trim()
        .parse()
        .with_context(|| format!("bad t_max in {s:?}"))?;
    Ok(Window::new(t_min, t_max)?)
}

fn read_series(path: &Path, observable: &str) -> Result<TimeSeries> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_series_csv(f, observable).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
    pub n_sites: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub fit: ScalingFit,
    pub inputs: Vec<InputRecord>,
}

pub fn cmd_fit(a: FitArgs) -> Result<Status> {
    let series: Vec<TimeSeries> = a
        .inputs
        .iter()
        .map(|p| read_series(p, "coherence"))
        .collect::<Result<_>>()?;
    let windows: Vec<Window> = match (a.windows.len(), a.peq.len()) {
        (0, 0) => bail!("give --window or --peq to set the fit windows"),
        (0, k) if k == series.len() => a
            .peq
            .iter()
            .zip(&series)
            .map(|(p, s)| {
                let peq = read_series(p, "peq")?;
                if peq.meta.n_sites != s.meta.n_sites {
                    bail!(
                        "{} is for N={}, expected N={}",
                        p.display(),
                        peq.meta.n_sites,
                        s.meta.n_sites
                    );
                }
                let t_end = *s.times.last().expect("non-empty series");
                Ok(default_window(a.regime, half_time(&peq)?, t_end)?)
            })
            .collect::<Result<_>>()?,
        (0, _) => bail!("--peq needs one file per --input"),
        (1, 0) => vec![parse_window(&a.windows[0])?; series.len()],
        (k, 0) if k == series.len() => a
            .windows
            .iter()
            .map(|w| parse_window(w))
            .collect::<Result<_>>()?,
        (_, 0) => bail!("--window needs one value for all inputs or one per input"),
        _ => bail!("--window and --peq are mutually exclusive"),
    };
    let fit = fit_regime(&series, a.regime, &windows)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let inputs = a
        .inputs
        .iter()
        .zip(&series)
        .map(|(p, s)| {
            Ok(InputRecord {
                path: p.display().to_string(),
                sha256: file_digest(p)?,
                n_sites: s.meta.n_sites,
            })
        })
        .collect::<Result<_>>()?;
    let report = FitReport { fit, inputs };
    fs::write(
        a.out.join("fit.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;

    let mut csv = String::from("n_sites,x,y\n");
    for (n, x, y) in scaled_points(&series, a.regime, &windows, report.fit.exponent) {
        writeln!(csv, "{n},{},{}", fmt_f64(x), fmt_f64(y))?;
    }
    fs::write(a.out.join("collapsed.csv"), csv)?;
    let mut m = RunManifest::new("fit");
    m.mode = format!("{:?}", report.fit.regime).to_lowercase();
    for p in a.inputs.iter().chain(&a.peq) {
        m.add_input(p)?;
    }
    m.write(&a.out)?;

    let f = &report.fit;
    let (e, r) = match f.regime {
        Regime::Short => ("lambda", "k"),
        Regime::Long => ("alpha", "k1"),
    };
    println!("{e} = {:.4} ± {:.4}", f.exponent, f.exponent_se);
    println!("{r} = {:.4} ± {:.4}", f.rate, f.rate_se);
    println!("collapse score = {:.4e}", f.collapse_score);
    println!("wrote {}", a.out.join("fit.json").display());
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct CrossoverArgs {
    /// Short-regime fit report
    #[arg(long, requires = "long", conflicts_with_all = ["lambda", "alpha", "k", "k1"])]
    short: Option<PathBuf>,
    /// Long-regime fit report
    #[arg(long, requires = "short")]
    long: Option<PathBuf>,
    #[arg(long, requires_all = ["alpha", "k", "k1"])]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    /// Chain lengths to tabulate
    #[arg(long, value_delimiter = ',', default_value = "12,14,16,18,20,100,1000")]
    n: Vec<usize>,
    /// Write the table as JSON here
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_fit(path: &Path) -> Result<ScalingFit> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: FitReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(report.fit)
}

pub fn cmd_crossover(a: CrossoverArgs) -> Result<Status> {
    let result = match (&a.short, &a.long) {
        (Some(s), Some(l)) => crossover_time(&read_fit(s)?, &read_fit(l)?, &a.n)?,
        _ => {
            let (Some(lambda), Some(alpha), Some(k), Some(k1)) = (a.lambda, a.alpha, a.k, a.k1)
            else {
                bail!("give --short and --long fit reports, or all of --lambda --alpha --k --k1");
            };
            let params = CrossoverParams {
                lambda,
                alpha,
                k,
                k1,
            };
            let points =
                a.n.iter()
                    .map(|&n| {
                        let (t_c, asymptotic) = crossover_from_params(&params, n as f64)?;
                        Ok(CrossoverPoint {
                            n_sites: n,
                            t_c,
                            asymptotic,
                        })
                    })
                    .collect::<Result<_>>()?;
            CrossoverResult { params, points }
        }
    };
    println!("{:>8} {:>16} {:>16}", "N", "t_c", "asymptotic");
    for p in &result.points {
        println!("{:>8} {:>16.6} {:>16.6}", p.n_sites, p.t_c, p.asymptotic);
    }
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&result)? + "\n")?;
    }
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct PowerLawArgs {
    /// Domain-wall series
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    t_min: f64,
    /// Defaults to the end of the series
    #[arg(long)]
    t_max: Option<f64>,
    /// Write the result as JSON here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PowerLawReport {
    fit: PowerLawFit,
    window: Window,
    input: InputRecord,
}

pub fn cmd_power_law(a: PowerLawArgs) -> Result<Status> {
    let s = read_series(&a.input, "domains")?;
    let t_max = a
        .t_max
        .unwrap_or(*s.times.last().expect("non-empty series"));
    let window = Window::new(a.t_min, t_max)?;
    let fit = fit_power_law(&s, &window)?;
    println!(
        "1/z = {:.4} ± {:.4} ({} points)",
        fit.inverse_z, fit.inverse_z_se, fit.n_points
    );
    if let Some(out) = &a.out {
        let report = PowerLawReport {
            fit,
            window,
            input: InputRecord {
                path: a.input.display().to_string(),
                sha256: file_digest(&a.input)?,
                n_sites: s.meta.n_sites,
            },
        };
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(Status::Ok)
}
