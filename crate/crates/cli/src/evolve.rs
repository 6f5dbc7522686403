use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use qglauber_core::exact::{evolve, initial_density_matrix, Mode, Schedule};
use qglauber_core::io::write_series_csv;
use qglauber_core::observables::{self, SeriesMeta, TimeSeries};
use qglauber_core::traj::{
    estimate_diagonal_observable, estimate_mixture_moments, jackknife_mixture_moments,
    run_ensemble_with, DiagonalObservable, EnsembleConfig, DEFAULT_MEMORY_BUDGET,
    DEFAULT_PRUNE_EPSILON,
};
use qglauber_core::{ChainGeometry, LocalChannel, Variant};

use crate::manifest::RunManifest;
use crate::{RunMode, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Observable {
    Coherence,
    Purity,
    Domains,
    Peq,
}

impl Observable {
    pub fn name(self) -> &'static str {
        match self {
            Observable::Coherence => "coherence",
            Observable::Purity => "purity",
            Observable::Domains => "domains",
            Observable::Peq => "peq",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long, value_enum, default_value = "exact")]
    mode: RunMode,
    /// Channel variant (ignored in classical mode)
    #[arg(long, default_value = "S0")]
    variant: String,
    /// Number of spins
    #[arg(long, required_unless_present = "manifest")]
    n: Option<usize>,
    /// Run length in Monte Carlo steps
    #[arg(long, default_value_t = 60)]
    mcs: u64,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "coherence,purity,domains,peq"
    )]
    obs: Vec<Observable>,
    #[arg(long, env = "QGLAUBER_OUT", default_value = "out")]
    out: PathBuf,
    /// Number of trajectories (traj mode)
    #[arg(long)]
    traj: Option<usize>,
    /// Master seed (traj mode)
    #[arg(long)]
    seed: Option<u64>,
    /// Squared-modulus pruning threshold (traj mode)
    #[arg(long, default_value_t = DEFAULT_PRUNE_EPSILON)]
    prune: f64,
    /// Elemental steps between snapshots (default: one MCS)
    #[arg(long)]
    stride: Option<u64>,
    /// Jackknife groups for coherence/purity errors in traj mode; 0 disables
    #[arg(long, default_value_t = 10)]
    jackknife: usize,
    /// Memory budget in bytes for the coherence estimator
    #[arg(long, default_value_t = DEFAULT_MEMORY_BUDGET)]
    memory_budget: u64,
    /// Re-run the settings recorded in a manifest
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Resolved settings of an evolve run.
#[derive(Debug, Clone)]
struct Settings {
    mode: RunMode,
    variant: String,
    n: usize,
    mcs: u64,
    obs: Vec<Observable>,
    traj: Option<usize>,
    seed: Option<u64>,
    prune: f64,
    stride: u64,
    jackknife: usize,
    memory_budget: u64,
}

impl Settings {
    fn from_args(a: &EvolveArgs) -> Result<Self> {
        let n = a.n.expect("required by clap");
        let s = Settings {
            mode: a.mode,
            variant: a.variant.clone(),
            n,
            mcs: a.mcs,
            obs: a.obs.clone(),
            traj: a.traj,
            seed: a.seed,
            prune: a.prune,
            stride: a.stride.unwrap_or(n as u64),
            jackknife: a.jackknife,
            memory_budget: a.memory_budget,
        };
        s.check()?;
        Ok(s)
    }

    fn from_manifest(m: &RunManifest) -> Result<Self> {
        if m.command != "evolve" {
            bail!("manifest was written by `{}`, not `evolve`", m.command);
        }
        let mode =
            RunMode::from_str(&m.mode, true).map_err(|e| anyhow::anyhow!("manifest mode: {e}"))?;
        let obs = m
            .observables
            .iter()
            .map(|o| {
                Observable::from_str(o, true)
                    .map_err(|e| anyhow::anyhow!("manifest observable: {e}"))
            })
            .collect::<Result<_>>()?;
        let s = Settings {
            mode,
            variant: m.variant.clone(),
            n: m.n_sites,
            mcs: m.n_mcs,
            obs,
            traj: m.n_traj,
            seed: m.seed,
            prune: m.prune_epsilon.unwrap_or(DEFAULT_PRUNE_EPSILON),
            stride: m.stride,
            jackknife: m.jackknife_groups.unwrap_or(0),
            memory_budget: m.memory_budget.unwrap_or(DEFAULT_MEMORY_BUDGET),
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.obs.is_empty() {
            bail!("no observables requested");
        }
        if self.mcs == 0 {
            bail!("--mcs must be at least 1");
        }
        match self.mode {
            RunMode::Traj => {
                if self.traj.is_none() || self.seed.is_none() {
                    bail!("traj mode requires --traj and --seed");
                }
                if self.jackknife == 1 {
                    bail!("--jackknife needs at least 2 groups (or 0 to disable)");
                }
            }
            RunMode::Exact | RunMode::Classical => {
                if self.traj.is_some() || self.seed.is_some() {
                    bail!("--traj and --seed apply to traj mode only");
                }
                if self.n > qglauber_core::config::MAX_EXACT_SITES {
                    bail!(
                        "{} mode is limited to N ≤ {}; use --mode traj",
                        self.mode.name(),
                        qglauber_core::config::MAX_EXACT_SITES
                    );
                }
            }
        }
        if self.mode != RunMode::Classical {
            self.variant.parse::<Variant>()?;
        }
        Ok(())
    }

    fn variant_label(&self) -> String {
        match self.mode {
            RunMode::Classical => "classical".into(),
            _ => self
                .variant
                .parse::<Variant>()
                .map(|v| v.name().to_string())
                .unwrap_or_default(),
        }
    }

    fn manifest(&self) -> RunManifest {
        let mut m = RunManifest::new("evolve");
        m.variant = self.variant_label();
        m.n_sites = self.n;
        m.mode = self.mode.name().into();
        m.n_mcs = self.mcs;
        m.stride = self.stride;
        m.observables = self.obs.iter().map(|o| o.name().to_string()).collect();
        if self.mode == RunMode::Traj {
            m.n_traj = self.traj;
            m.seed = self.seed;
            m.prune_epsilon = Some(self.prune);
            m.jackknife_groups = Some(self.jackknife);
            m.memory_budget = Some(self.memory_budget);
            m.site_update = "random-site".into();
        } else {
            m.site_update = "uniform-mixture".into();
        }
        m
    }
}

#[derive(Default)]
struct Columns {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    errors: Vec<Vec<Option<f64>>>,
}

impl Columns {
    fn new(n_obs: usize) -> Self {
        Columns {
            times: Vec::new(),
            values: vec![Vec::new(); n_obs],
            errors: vec![Vec::new(); n_obs],
        }
    }
}

fn run_exact(s: &Settings, g: &ChainGeometry, schedule: &Schedule) -> Result<Columns> {
    let (channel, mode) = match s.mode {
        RunMode::Classical => (LocalChannel::classical(), Mode::ClassicalBaseline),
        _ => (
            LocalChannel::from_variant(s.variant.parse()?),
            Mode::Quantum,
        ),
    };
    let mut cols = Columns::new(s.obs.len());
    evolve(
        initial_density_matrix(g)?,
        &channel,
        mode,
        s.mcs,
        schedule,
        |t, rho| {
            cols.times.push(t);
            for (k, o) in s.obs.iter().enumerate() {
                let v = match o {
                    Observable::Coherence => observables::coherence(rho),
                    Observable::Purity => observables::purity(rho),
                    Observable::Domains => observables::domain_wall_expectation(rho, g),
                    Observable::Peq => observables::equilibrium_probability(rho),
                };
                cols.values[k].push(v);
                cols.errors[k].push(None);
            }
        },
    )?;
    Ok(cols)
}

fn run_traj(s: &Settings, g: &ChainGeometry, schedule: Schedule) -> Result<Columns> {
    let channel = LocalChannel::from_variant(s.variant.parse()?);
    let cfg = EnsembleConfig {
        n_traj: s.traj.expect("checked"),
        seed: s.seed.expect("checked"),
        n_mcs: s.mcs,
        schedule,
        prune_epsilon: s.prune,
    };
    let needs_moments = s
        .obs
        .iter()
        .any(|o| matches!(o, Observable::Coherence | Observable::Purity));
    let mut cols = Columns::new(s.obs.len());
    let stats = run_ensemble_with(&cfg, &channel, g, |t, states| {
        cols.times.push(t);
        let moments = if needs_moments {
            let groups = s.jackknife.min(states.len());
            Some(if groups >= 2 {
                let (m, e) = jackknife_mixture_moments(states, groups, s.memory_budget)?;
                (m, Some(e))
            } else {
                (estimate_mixture_moments(states, s.memory_budget)?, None)
            })
        } else {
            None
        };
        for (k, o) in s.obs.iter().enumerate() {
            let (v, e) = match o {
                Observable::Coherence => {
                    let (m, e) = moments.as_ref().expect("computed");
                    (m.coherence, e.map(|e| e.coherence))
                }
                Observable::Purity => {
                    let (m, e) = moments.as_ref().expect("computed");
                    (m.purity, e.map(|e| e.purity))
                }
                Observable::Domains => {
                    let e = estimate_diagonal_observable(states, DiagonalObservable::DomainWalls)?;
                    (e.mean, Some(e.stderr))
                }
                Observable::Peq => {
                    let e = estimate_diagonal_observable(
                        states,
                        DiagonalObservable::EquilibriumProbability,
                    )?;
                    (e.mean, Some(e.stderr))
                }
            };
            cols.values[k].push(v);
            cols.errors[k].push(e);
        }
        Ok(())
    })?;
    log::info!(
        "{} amplitudes pruned, largest support {}",
        stats.pruned_amplitudes,
        stats.max_support
    );
    Ok(cols)
}

fn execute(s: &Settings, out: &Path, replayed_from: Option<&Path>) -> Result<()> {
    let g = ChainGeometry::periodic(s.n)?;
    let schedule = Schedule::every_steps(s.n, s.mcs, s.stride)?;
    let cols = match s.mode {
        RunMode::Traj => run_traj(s, &g, schedule)?,
        _ => run_exact(s, &g, &schedule)?,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let variant = s.variant_label();
    for (k, o) in s.obs.iter().enumerate() {
        let stderr = if cols.errors[k].iter().all(Option::is_some) {
            Some(cols.errors[k].iter().map(|e| e.unwrap()).collect())
        } else {
            None
        };
        let series = TimeSeries::new(
            cols.times.clone(),
            cols.values[k].clone(),
            stderr,
            SeriesMeta {
                observable: o.name().into(),
                variant: variant.clone(),
                n_sites: s.n,
                mode: s.mode.name().into(),
            },
        )?;
        let path = out.join(format!("{}.csv", o.name()));
        write_series_csv(fs::File::create(&path)?, &series)?;
        println!("wrote {}", path.display());
    }
    let mut manifest = s.manifest();
    if let Some(p) = replayed_from {
        manifest.add_input(p)?;
    }
    manifest.write(out)
}

pub fn cmd_evolve(a: EvolveArgs) -> Result<Status> {
    let s = match &a.manifest {
        Some(p) => Settings::from_manifest(&RunManifest::read(p)?)?,
        None => Settings::from_args(&a)?,
    };
    execute(&s, &a.out, a.manifest.as_deref())?;
    Ok(Status::Ok)
}
