//! Exact evolution of the chain density matrix.
//!
//! Every channel in this crate has real Kraus operators and the initial
//! ensemble is real and diagonal, so the density matrix stays real symmetric
//! and is stored as a dense row-major `f64` buffer.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::LocalChannel;
use crate::config::{
    rotate_bits, zero_magnetization_ensemble, ChainGeometry, MAX_EXACT_SITES, MIN_SITES,
};
use crate::error::{Error, Result};
use crate::site::SiteMap;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const NEGATIVE_DIAG_TOL: f64 = -1e-12;

#[derive(Clone, PartialEq)]
pub struct DensityMatrix {
    n_sites: usize,
    dim: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for DensityMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensityMatrix")
            .field("n_sites", &self.n_sites)
            .field("trace", &self.trace())
            .finish()
    }
}

impl DensityMatrix {
    pub fn zeros(n_sites: usize) -> Result<Self> {
        if !(1..=MAX_EXACT_SITES).contains(&n_sites) {
            return Err(Error::ChainLength {
                n: n_sites,
                min: 1,
                max: MAX_EXACT_SITES,
            });
        }
        let dim = 1usize << n_sites;
        Ok(DensityMatrix {
            n_sites,
            dim,
            data: vec![0.0; dim * dim],
        })
    }

    pub fn from_diagonal(n_sites: usize, diag: &[f64]) -> Result<Self> {
        let mut rho = DensityMatrix::zeros(n_sites)?;
        if diag.len() != rho.dim {
            return Err(Error::InvalidMatrix(format!(
                "diagonal has {} entries, expected {}",
                diag.len(),
                rho.dim
            )));
        }
        for (i, &p) in diag.iter().enumerate() {
            rho.set(i, i, p);
        }
        Ok(rho)
    }

    /// `|ψ⟩⟨ψ|` for a real amplitude vector (normalized on input).
    pub fn from_pure(n_sites: usize, amps: &[f64]) -> Result<Self> {
        let mut rho = DensityMatrix::zeros(n_sites)?;
        if amps.len() != rho.dim {
            return Err(Error::InvalidMatrix(
                "amplitude vector has wrong length".into(),
            ));
        }
        let norm2: f64 = amps.iter().map(|a| a * a).sum();
        if norm2 <= 0.0 {
            return Err(Error::InvalidMatrix("zero state vector".into()));
        }
        for i in 0..rho.dim {
            for j in 0..rho.dim {
                rho.data[i * rho.dim + j] = amps[i] * amps[j] / norm2;
            }
        }
        Ok(rho)
    }

    pub fn basis_state(n_sites: usize, index: usize) -> Result<Self> {
        let mut rho = DensityMatrix::zeros(n_sites)?;
        if index >= rho.dim {
            return Err(Error::InvalidMatrix(format!(
                "basis index {index} out of range"
            )));
        }
        rho.set(index, index, 1.0);
        Ok(rho)
    }

    /// Wraps a raw row-major buffer.
    pub fn from_raw(n_sites: usize, data: Vec<f64>) -> Result<Self> {
        if n_sites > MAX_EXACT_SITES {
            return Err(Error::ChainLength {
                n: n_sites,
                min: 1,
                max: MAX_EXACT_SITES,
            });
        }
        let dim = 1usize << n_sites;
        if data.len() != dim * dim {
            return Err(Error::InvalidMatrix("buffer size is not 4^N".into()));
        }
        Ok(DensityMatrix { n_sites, dim, data })
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `max |ρ_ij − ρ_ji|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..i {
                dev = dev.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        dev
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_deviation();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidMatrix(format!(
                "not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidMatrix(format!("trace is {tr}")));
        }
        if let Some(i) = (0..self.dim).find(|&i| self.get(i, i) < NEGATIVE_DIAG_TOL) {
            return Err(Error::InvalidMatrix(format!(
                "negative population {} at {i}",
                self.get(i, i)
            )));
        }
        Ok(())
    }

    /// Sets every off-diagonal entry to zero (complete measurement).
    pub fn dephase(&mut self) {
        let dim = self.dim;
        for (i, row) in self.data.chunks_mut(dim).enumerate() {
            let d = row[i];
            row.fill(0.0);
            row[i] = d;
        }
    }

    fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// True when `ρ_{Ti,Tj} = ρ_ij` holds exactly for the cyclic shift `T`.
    pub fn is_translation_invariant(&self) -> bool {
        let rot = rotation_table(self.n_sites);
        (0..self.dim).all(|i| {
            let ri = rot[i] as usize;
            (0..self.dim).all(|j| self.get(ri, rot[j] as usize) == self.get(i, j))
        })
    }
}

fn check_exact_size(n_sites: usize) -> Result<()> {
    if !(MIN_SITES..=MAX_EXACT_SITES).contains(&n_sites) {
        return Err(Error::ChainLength {
            n: n_sites,
            min: MIN_SITES,
            max: MAX_EXACT_SITES,
        });
    }
    Ok(())
}

fn check_n(rho: &DensityMatrix) -> Result<()> {
    if rho.n_sites < 3 {
        return Err(Error::ChainLength {
            n: rho.n_sites,
            min: 3,
            max: MAX_EXACT_SITES,
        });
    }
    Ok(())
}

fn rotation_table(n_sites: usize) -> Vec<u32> {
    (0..(1u64 << n_sites) as u32)
        .map(|c| rotate_bits(c, n_sites))
        .collect()
}

/// Uniform mixture over the zero-magnetization configurations.
pub fn initial_density_matrix(g: &ChainGeometry) -> Result<DensityMatrix> {
    let configs = zero_magnetization_ensemble(g)?;
    let mut rho = DensityMatrix::zeros(g.n_sites)?;
    let p = 1.0 / configs.len() as f64;
    for c in configs {
        rho.set(c.index(), c.index(), p);
    }
    Ok(rho)
}

/// Adds `weight · Σ_α K_α^{(q)} ρ K_α^{(q)†}` restricted to row `i` into `out`.
fn accumulate_row(
    rho: &DensityMatrix,
    site: &SiteMap,
    rests: &[u32],
    channel: &LocalChannel,
    i: usize,
    weight: f64,
    out: &mut [f64],
) {
    let li = site.local(i as u32);
    let base = site.rest(i as u32);
    for op in channel.ops() {
        for &(lp, a) in op.row(li) {
            let src = rho.row(site.compose(base, lp) as usize);
            let a = a * weight;
            for &r in rests {
                let mut v = [0.0f64; 8];
                for (m, vm) in v.iter_mut().enumerate() {
                    *vm = src[site.compose(r, m) as usize];
                }
                for l in 0..8 {
                    let entries = op.row(l);
                    if entries.is_empty() {
                        continue;
                    }
                    let t: f64 = entries.iter().map(|&(m, b)| b * v[m]).sum();
                    out[site.compose(r, l) as usize] += a * t;
                }
            }
        }
    }
}

struct SiteTables {
    maps: Vec<SiteMap>,
    rests: Vec<Vec<u32>>,
}

impl SiteTables {
    fn new(n_sites: usize) -> Self {
        let maps: Vec<SiteMap> = (0..n_sites).map(|q| SiteMap::new(q, n_sites)).collect();
        let rests = maps.iter().map(|m| m.rests(n_sites)).collect();
        SiteTables { maps, rests }
    }
}

/// `K1^{(q)} ρ K1^{(q)†} + K2^{(q)} ρ K2^{(q)†}` (or the analogous sum for any
/// local Kraus set) on sites `(q−1, q, q+1) mod N`.
pub fn apply_local_channel(
    rho: &DensityMatrix,
    site: usize,
    channel: &LocalChannel,
) -> Result<DensityMatrix> {
    check_n(rho)?;
    if site >= rho.n_sites {
        return Err(Error::SiteOutOfRange {
            site,
            n_sites: rho.n_sites,
        });
    }
    let map = SiteMap::new(site, rho.n_sites);
    let rests = map.rests(rho.n_sites);
    let mut out = vec![0.0; rho.data.len()];
    out.par_chunks_mut(rho.dim)
        .enumerate()
        .for_each(|(i, row)| accumulate_row(rho, &map, &rests, channel, i, 1.0, row));
    DensityMatrix::from_raw(rho.n_sites, out)
}

fn mixture_rows(
    rho: &DensityMatrix,
    tables: &SiteTables,
    channel: &LocalChannel,
    rows: &[u32],
) -> Vec<f64> {
    let mut out = vec![0.0; rows.len() * rho.dim];
    mixture_rows_into(rho, tables, channel, rows, &mut out);
    out
}

fn mixture_rows_into(
    rho: &DensityMatrix,
    tables: &SiteTables,
    channel: &LocalChannel,
    rows: &[u32],
    out: &mut [f64],
) {
    let weight = 1.0 / rho.n_sites as f64;
    out.par_chunks_mut(rho.dim)
        .zip(rows.par_iter())
        .for_each(|(row, &i)| {
            row.fill(0.0);
            for (map, rests) in tables.maps.iter().zip(&tables.rests) {
                accumulate_row(rho, map, rests, channel, i as usize, weight, row);
            }
        });
}

/// One elemental step `(1/N) Σ_q Λ^{(q)}(ρ)`.
pub fn apply_uniform_mixture_step(
    rho: &DensityMatrix,
    channel: &LocalChannel,
) -> Result<DensityMatrix> {
    check_n(rho)?;
    let tables = SiteTables::new(rho.n_sites);
    let rows: Vec<u32> = (0..rho.dim as u32).collect();
    DensityMatrix::from_raw(rho.n_sites, mixture_rows(rho, &tables, channel, &rows))
}

/// Diagonal of the uniform-mixture step, computed directly.
fn mixture_diagonal(rho: &DensityMatrix, tables: &SiteTables, channel: &LocalChannel) -> Vec<f64> {
    let weight = 1.0 / rho.n_sites as f64;
    (0..rho.dim)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for map in &tables.maps {
                let li = map.local(i as u32);
                let base = map.rest(i as u32);
                for op in channel.ops() {
                    for &(lp, a) in op.row(li) {
                        let r = map.compose(base, lp) as usize;
                        for &(mp, b) in op.row(li) {
                            acc += a * b * rho.get(r, map.compose(base, mp) as usize);
                        }
                    }
                }
            }
            acc * weight
        })
        .collect()
}

/// Uniform-mixture step followed by a complete measurement.
pub fn classical_baseline_step(
    rho: &DensityMatrix,
    channel: &LocalChannel,
) -> Result<DensityMatrix> {
    check_n(rho)?;
    let tables = SiteTables::new(rho.n_sites);
    DensityMatrix::from_diagonal_unchecked(rho.n_sites, &mixture_diagonal(rho, &tables, channel))
}

impl DensityMatrix {
    fn from_diagonal_unchecked(n_sites: usize, diag: &[f64]) -> Result<Self> {
        let dim = 1usize << n_sites;
        let mut data = vec![0.0; dim * dim];
        for (i, &p) in diag.iter().enumerate() {
            data[i * dim + i] = p;
        }
        DensityMatrix::from_raw(n_sites, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Quantum,
    ClassicalBaseline,
}

/// Snapshot times in elemental steps, sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    n_sites: usize,
    steps: Vec<u64>,
}

impl Schedule {
    /// Times `0, 1, …, n_mcs` in MCS.
    pub fn every_mcs(n_sites: usize, n_mcs: u64) -> Self {
        Schedule {
            n_sites,
            steps: (0..=n_mcs).map(|t| t * n_sites as u64).collect(),
        }
    }

    /// Every `stride` elemental steps up to `n_mcs`, end point included.
    pub fn every_steps(n_sites: usize, n_mcs: u64, stride: u64) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidSchedule("stride must be positive".into()));
        }
        let end = n_mcs * n_sites as u64;
        let mut steps: Vec<u64> = (0..=end).step_by(stride as usize).collect();
        if *steps.last().unwrap() != end {
            steps.push(end);
        }
        Ok(Schedule { n_sites, steps })
    }

    /// Times in MCS; each must land on an elemental step.
    pub fn from_mcs(n_sites: usize, n_mcs: u64, times: &[f64]) -> Result<Self> {
        let mut steps = Vec::with_capacity(times.len());
        for &t in times {
            let s = t * n_sites as f64;
            if !(0.0..=(n_mcs * n_sites as u64) as f64).contains(&s) || (s - s.round()).abs() > 1e-9
            {
                return Err(Error::InvalidSchedule(format!(
                    "time {t} MCS is not an elemental step within [0, {n_mcs}]"
                )));
            }
            steps.push(s.round() as u64);
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(
                "times must be strictly increasing".into(),
            ));
        }
        Ok(Schedule { n_sites, steps })
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn last_step(&self) -> u64 {
        self.steps.last().copied().unwrap_or(0)
    }

    pub fn to_mcs(&self, step: u64) -> f64 {
        step as f64 / self.n_sites as f64
    }

    pub fn times_mcs(&self) -> Vec<f64> {
        self.steps.iter().map(|&s| self.to_mcs(s)).collect()
    }
}

/// Stateful stepper holding precomputed site tables.
pub struct ExactEvolver {
    rho: DensityMatrix,
    channel: LocalChannel,
    mode: Mode,
    tables: SiteTables,
    /// Orbit representatives and the rotation table when the state is
    /// translation invariant.
    symmetric: Option<(Vec<u32>, Vec<u32>)>,
    steps_done: u64,
    spare: Vec<f64>,
    rows: Vec<f64>,
}

impl ExactEvolver {
    pub fn new(rho: DensityMatrix, channel: LocalChannel, mode: Mode) -> Result<Self> {
        check_exact_size(rho.n_sites)?;
        rho.validate()?;
        let n = rho.n_sites;
        let symmetric = if rho.is_translation_invariant() {
            let rot = rotation_table(n);
            let reps = orbit_representatives(&rot);
            Some((reps, rot))
        } else {
            None
        };
        Ok(ExactEvolver {
            tables: SiteTables::new(n),
            rho,
            channel,
            mode,
            symmetric,
            steps_done: 0,
            spare: Vec::new(),
            rows: Vec::new(),
        })
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    pub fn uses_translation_symmetry(&self) -> bool {
        self.symmetric.is_some()
    }

    pub fn step(&mut self) {
        let n = self.rho.n_sites;
        let dim = self.rho.dim;
        self.spare.resize(dim * dim, 0.0);
        match self.mode {
            Mode::ClassicalBaseline => {
                let diag = mixture_diagonal(&self.rho, &self.tables, &self.channel);
                self.spare.fill(0.0);
                for (i, p) in diag.into_iter().enumerate() {
                    self.spare[i * dim + i] = p;
                }
            }
            Mode::Quantum => match &self.symmetric {
                None => {
                    let rows: Vec<u32> = (0..dim as u32).collect();
                    mixture_rows_into(
                        &self.rho,
                        &self.tables,
                        &self.channel,
                        &rows,
                        &mut self.spare,
                    );
                }
                Some((reps, rot)) => {
                    self.rows.resize(reps.len() * dim, 0.0);
                    mixture_rows_into(&self.rho, &self.tables, &self.channel, reps, &mut self.rows);
                    expand_orbits_into(n, reps, rot, &self.rows, &mut self.spare);
                }
            },
        }
        std::mem::swap(&mut self.rho.data, &mut self.spare);
        self.steps_done += 1;
    }

    /// Advances to `target` elemental steps, renormalizing after every MCS
    /// if the trace drifted.
    pub fn advance_to(&mut self, target: u64) {
        let n = self.rho.n_sites as u64;
        while self.steps_done < target {
            self.step();
            if self.steps_done.is_multiple_of(n) {
                self.check_trace();
            }
        }
    }

    fn check_trace(&mut self) {
        let tr = self.rho.trace();
        let drift = (tr - 1.0).abs();
        if drift > TRACE_TOL {
            if drift > 1e-8 {
                warn!(
                    "trace drifted to {tr} after {} steps; renormalizing",
                    self.steps_done
                );
            } else {
                warn!("renormalizing trace {tr}");
            }
            self.rho.scale(1.0 / tr);
        }
    }
}

fn orbit_representatives(rot: &[u32]) -> Vec<u32> {
    let mut seen = vec![false; rot.len()];
    let mut reps = Vec::new();
    for c in 0..rot.len() {
        if seen[c] {
            continue;
        }
        reps.push(c as u32);
        let mut x = c;
        while !seen[x] {
            seen[x] = true;
            x = rot[x] as usize;
        }
    }
    reps
}

/// Rebuilds a translation-invariant matrix from its orbit-representative rows.
/// Every row lies in exactly one orbit, so `data` is fully overwritten.
fn expand_orbits_into(
    n_sites: usize,
    reps: &[u32],
    rot: &[u32],
    computed: &[f64],
    data: &mut [f64],
) {
    let dim = 1usize << n_sites;
    for (k, &rep) in reps.iter().enumerate() {
        let src = &computed[k * dim..(k + 1) * dim];
        // row T^s(rep), column T^s(j) = row rep, column j
        let mut perm: Vec<u32> = (0..dim as u32).collect();
        let mut row = rep as usize;
        loop {
            let dst = &mut data[row * dim..(row + 1) * dim];
            for (j, &v) in src.iter().enumerate() {
                dst[perm[j] as usize] = v;
            }
            row = rot[row] as usize;
            if row == rep as usize {
                break;
            }
            perm.iter_mut().for_each(|p| *p = rot[*p as usize]);
        }
    }
}

/// Runs `n_mcs` Monte Carlo steps (`N` elemental steps each) and returns deep
/// copies of the state at every scheduled time.
pub fn run_mcs(
    rho: DensityMatrix,
    channel: &LocalChannel,
    mode: Mode,
    n_mcs: u64,
    schedule: &Schedule,
) -> Result<Vec<(f64, DensityMatrix)>> {
    let mut snaps = Vec::new();
    evolve(rho, channel, mode, n_mcs, schedule, |t, r| {
        snaps.push((t, r.clone()))
    })?;
    Ok(snaps)
}

/// Streams snapshots to `observe` instead of storing them.
pub fn evolve<F>(
    rho: DensityMatrix,
    channel: &LocalChannel,
    mode: Mode,
    n_mcs: u64,
    schedule: &Schedule,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(f64, &DensityMatrix),
{
    if schedule.n_sites() != rho.n_sites() {
        return Err(Error::InvalidSchedule(
            "schedule built for another chain length".into(),
        ));
    }
    if schedule.last_step() > n_mcs * rho.n_sites() as u64 {
        return Err(Error::InvalidSchedule(
            "snapshot beyond the run length".into(),
        ));
    }
    let mut ev = ExactEvolver::new(rho, channel.clone(), mode)?;
    for &s in schedule.steps() {
        ev.advance_to(s);
        observe(schedule.to_mcs(s), ev.state());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub n_sites: usize,
    pub variant: String,
    pub mode: Mode,
    pub n_mcs: u64,
    pub schedule: Schedule,
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        check_exact_size(self.n_sites)?;
        if self.n_mcs < 1 {
            return Err(Error::InvalidSchedule("n_mcs must be at least 1".into()));
        }
        if self.schedule.n_sites() != self.n_sites
            || self.schedule.last_step() > self.n_mcs * self.n_sites as u64
        {
            return Err(Error::InvalidSchedule(
                "snapshots outside [0, n_mcs]".into(),
            ));
        }
        Ok(())
    }
}
