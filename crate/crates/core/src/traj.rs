//! Stochastic unraveling of the local channels into pure-state trajectories,
//! and ensemble estimators for the observables.
//!
//! A trajectory is a sparse real state vector. Each elemental step picks a
//! site uniformly, computes every branch `K_α^{(q)} ψ`, draws branch `α` with
//! probability `‖K_α^{(q)} ψ‖²` and renormalizes.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::LocalChannel;
use crate::config::{
    domain_walls_of_bits, full_mask, sample_zero_magnetization_with, ChainGeometry, SpinConfig,
    MAX_TRAJ_SITES, MIN_SITES,
};
use crate::error::{Error, Result};
use crate::exact::{DensityMatrix, Schedule};
use crate::site::SiteMap;

pub const DEFAULT_PRUNE_EPSILON: f64 = 1e-16;
pub const MAX_PRUNE_EPSILON: f64 = 1e-8;
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

const BRANCH_FLOOR: f64 = 1e-14;
const NORM_TOL: f64 = 1e-10;
/// Rows per work unit in the coherence pass; fixed so the reduction order
/// never depends on the thread count.
const ROW_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    n_sites: usize,
    /// Sorted by configuration index, no zero entries.
    amps: Vec<(u32, f64)>,
}

impl TrajectoryState {
    pub fn basis(c: SpinConfig) -> Self {
        TrajectoryState {
            n_sites: c.n_sites(),
            amps: vec![(c.bits(), 1.0)],
        }
    }

    /// Builds a normalized state from `(index, amplitude)` pairs.
    pub fn from_amplitudes(n_sites: usize, mut amps: Vec<(u32, f64)>) -> Result<Self> {
        amps.sort_by_key(|&(c, _)| c);
        if amps.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidMatrix("duplicate configuration".into()));
        }
        if amps.iter().any(|&(c, _)| c & !full_mask(n_sites) != 0) {
            return Err(Error::InvalidMatrix("configuration exceeds chain".into()));
        }
        amps.retain(|&(_, a)| a != 0.0);
        let norm2: f64 = amps.iter().map(|(_, a)| a * a).sum();
        if norm2 <= 0.0 {
            return Err(Error::InvalidMatrix("zero state vector".into()));
        }
        let s = norm2.sqrt().recip();
        amps.iter_mut().for_each(|(_, a)| *a *= s);
        Ok(TrajectoryState { n_sites, amps })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn amplitudes(&self) -> &[(u32, f64)] {
        &self.amps
    }

    pub fn support(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amps.iter().map(|(_, a)| a * a).sum()
    }

    pub fn amplitude(&self, c: u32) -> f64 {
        self.amps
            .binary_search_by_key(&c, |&(k, _)| k)
            .map(|k| self.amps[k].1)
            .unwrap_or(0.0)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &TrajectoryState) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.amps.len() && j < other.amps.len() {
            let (a, b) = (self.amps[i], other.amps[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// Outcome of one elemental step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub site: usize,
    pub branch: usize,
    pub probability: f64,
    pub pruned: usize,
}

/// Reusable buffers for branch construction.
#[derive(Debug, Default)]
pub struct StepScratch {
    branches: Vec<Vec<(u32, f64)>>,
}

fn apply_op(
    psi: &[(u32, f64)],
    map: &SiteMap,
    op: &crate::channels::SparseOp,
    out: &mut Vec<(u32, f64)>,
) -> f64 {
    out.clear();
    for &(c, v) in psi {
        let l = map.local(c);
        let rest = map.rest(c);
        for &(lo, k) in op.col(l) {
            out.push((map.compose(rest, lo), k * v));
        }
    }
    out.sort_by_key(|&(c, _)| c);
    // merge duplicates in place
    let mut w = 0;
    for r in 0..out.len() {
        if w > 0 && out[w - 1].0 == out[r].0 {
            out[w - 1].1 += out[r].1;
        } else {
            out[w] = out[r];
            w += 1;
        }
    }
    out.truncate(w);
    out.retain(|&(_, a)| a != 0.0);
    out.iter().map(|(_, a)| a * a).sum()
}

/// Applies the channel at `site`, selecting the branch with the uniform
/// variate `u ∈ [0, 1)`.
pub fn trajectory_step_at(
    psi: &mut TrajectoryState,
    channel: &LocalChannel,
    site: usize,
    u: f64,
    prune_epsilon: f64,
    scratch: &mut StepScratch,
) -> Result<StepOutcome> {
    let map = SiteMap::new(site, psi.n_sites);
    let n_ops = channel.ops().len();
    scratch.branches.resize_with(n_ops, Vec::new);
    let mut probs = Vec::with_capacity(n_ops);
    for (op, out) in channel.ops().iter().zip(scratch.branches.iter_mut()) {
        probs.push(apply_op(&psi.amps, &map, op, out));
    }
    let total: f64 = probs.iter().sum();
    if probs.iter().all(|&p| p < BRANCH_FLOOR) {
        return Err(Error::VanishingBranches {
            p1: probs[0],
            p2: probs.get(1).copied().unwrap_or(0.0),
        });
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut branch = n_ops - 1;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if target < acc && p > 0.0 {
            branch = k;
            break;
        }
    }
    while probs[branch] <= 0.0 {
        branch -= 1;
    }
    let p = probs[branch];
    std::mem::swap(&mut psi.amps, &mut scratch.branches[branch]);
    let scale = p.sqrt().recip();
    psi.amps.iter_mut().for_each(|(_, a)| *a *= scale);

    let before = psi.amps.len();
    if prune_epsilon > 0.0 {
        psi.amps.retain(|&(_, a)| a * a >= prune_epsilon);
    }
    let pruned = before - psi.amps.len();
    if pruned > 0 {
        let s = psi.norm_squared().sqrt().recip();
        psi.amps.iter_mut().for_each(|(_, a)| *a *= s);
    }
    debug_assert!((psi.norm_squared() - 1.0).abs() < NORM_TOL);
    Ok(StepOutcome {
        site,
        branch,
        probability: p / total,
        pruned,
    })
}

/// One elemental step with the site and branch drawn from `rng`.
pub fn trajectory_elemental_step<R: Rng + ?Sized>(
    psi: &mut TrajectoryState,
    channel: &LocalChannel,
    rng: &mut R,
    prune_epsilon: f64,
    scratch: &mut StepScratch,
) -> Result<StepOutcome> {
    let site = rng.gen_range(0..psi.n_sites);
    let u: f64 = rng.gen();
    trajectory_step_at(psi, channel, site, u, prune_epsilon, scratch)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub seed: u64,
    pub n_mcs: u64,
    pub schedule: Schedule,
    pub prune_epsilon: f64,
}

impl EnsembleConfig {
    pub fn validate(&self, g: &ChainGeometry) -> Result<()> {
        if self.n_traj < 1 {
            return Err(Error::InvalidEnsemble(
                "need at least one trajectory".into(),
            ));
        }
        if !(0.0..=MAX_PRUNE_EPSILON).contains(&self.prune_epsilon) {
            return Err(Error::InvalidEnsemble(format!(
                "prune epsilon {} outside [0, {MAX_PRUNE_EPSILON}]",
                self.prune_epsilon
            )));
        }
        if !(MIN_SITES..=MAX_TRAJ_SITES).contains(&g.n_sites) {
            return Err(Error::ChainLength {
                n: g.n_sites,
                min: MIN_SITES,
                max: MAX_TRAJ_SITES,
            });
        }
        if self.schedule.n_sites() != g.n_sites
            || self.schedule.last_step() > self.n_mcs * g.n_sites as u64
        {
            return Err(Error::InvalidSchedule(
                "snapshots outside [0, n_mcs]".into(),
            ));
        }
        Ok(())
    }
}

/// Independent generator for trajectory `index`: a ChaCha stream selected by
/// the index under the master seed.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct Walker {
    psi: TrajectoryState,
    rng: ChaCha8Rng,
    scratch: StepScratch,
    pruned: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub pruned_amplitudes: u64,
    pub max_support: usize,
}

/// States of every trajectory at one scheduled time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSnapshot {
    pub t_mcs: f64,
    pub states: Vec<TrajectoryState>,
}

/// Runs the ensemble and hands each scheduled snapshot to `observe`.
///
/// Trajectories advance in parallel between snapshots; each owns its RNG
/// stream, so results do not depend on scheduling.
pub fn run_ensemble_with<F>(
    cfg: &EnsembleConfig,
    channel: &LocalChannel,
    g: &ChainGeometry,
    mut observe: F,
) -> Result<EnsembleStats>
where
    F: FnMut(f64, &[TrajectoryState]) -> Result<()>,
{
    cfg.validate(g)?;
    let mut walkers: Vec<Walker> = (0..cfg.n_traj)
        .map(|m| {
            let mut rng = trajectory_rng(cfg.seed, m);
            let c = sample_zero_magnetization_with(g, &mut rng)?;
            Ok(Walker {
                psi: TrajectoryState::basis(c),
                rng,
                scratch: StepScratch::default(),
                pruned: 0,
            })
        })
        .collect::<Result<_>>()?;
    let mut done = 0u64;
    let mut states: Vec<TrajectoryState> = Vec::with_capacity(cfg.n_traj);
    let mut max_support = 1;
    for &target in cfg.schedule.steps() {
        let steps = target - done;
        walkers.par_iter_mut().try_for_each(|w| -> Result<()> {
            for _ in 0..steps {
                let out = trajectory_elemental_step(
                    &mut w.psi,
                    channel,
                    &mut w.rng,
                    cfg.prune_epsilon,
                    &mut w.scratch,
                )?;
                w.pruned += out.pruned as u64;
            }
            Ok(())
        })?;
        done = target;
        states.clear();
        states.extend(walkers.iter().map(|w| w.psi.clone()));
        max_support = max_support.max(states.iter().map(|s| s.support()).max().unwrap_or(1));
        observe(cfg.schedule.to_mcs(target), &states)?;
    }
    Ok(EnsembleStats {
        pruned_amplitudes: walkers.iter().map(|w| w.pruned).sum(),
        max_support,
    })
}

/// Collects every scheduled snapshot in memory.
pub fn run_ensemble(
    cfg: &EnsembleConfig,
    channel: &LocalChannel,
    g: &ChainGeometry,
) -> Result<Vec<EnsembleSnapshot>> {
    let mut snaps = Vec::new();
    run_ensemble_with(cfg, channel, g, |t, states| {
        snaps.push(EnsembleSnapshot {
            t_mcs: t,
            states: states.to_vec(),
        });
        Ok(())
    })?;
    Ok(snaps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagonalObservable {
    EquilibriumProbability,
    DomainWalls,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Ensemble mean of a diagonal observable with its sample standard error.
pub fn estimate_diagonal_observable(
    states: &[TrajectoryState],
    op: DiagonalObservable,
) -> Result<Estimate> {
    if states.is_empty() {
        return Err(Error::InvalidEnsemble("empty snapshot".into()));
    }
    let values: Vec<f64> = states
        .iter()
        .map(|psi| {
            let n = psi.n_sites;
            let all_down = full_mask(n);
            psi.amps
                .iter()
                .map(|&(c, a)| {
                    let o = match op {
                        DiagonalObservable::EquilibriumProbability => {
                            if c == 0 || c == all_down {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        DiagonalObservable::DomainWalls => domain_walls_of_bits(c, n) as f64,
                    };
                    o * a * a
                })
                .sum()
        })
        .collect();
    Ok(mean_and_stderr(&values))
}

pub fn mean_and_stderr(values: &[f64]) -> Estimate {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return Estimate { mean, stderr: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Estimate {
        mean,
        stderr: (var / m).sqrt(),
    }
}

/// Coherence and purity of the ensemble density matrix
/// `ρ = (1/M) Σ_m |ψ_m⟩⟨ψ_m|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureMoments {
    pub coherence: f64,
    pub purity: f64,
}

/// Bytes needed by [`estimate_mixture_moments`] for these states.
pub fn mixture_memory_required(states: &[TrajectoryState]) -> u64 {
    let n = states.first().map(|s| s.n_sites).unwrap_or(0);
    let dim = 1u64 << n;
    let entries: u64 = states.iter().map(|s| s.support() as u64).sum();
    let threads = rayon::current_num_threads() as u64;
    // row offsets + inverted index + one dense row buffer and stamp per worker
    8 * (dim + 1) + 16 * entries + threads * 12 * dim
}

/// Streams over rows `i` of the ensemble density matrix, accumulating
/// `ρ_i· = (1/M) Σ_{m ∋ i} ψ_i^{(m)} ψ^{(m)}` into a dense row buffer.
/// Work is `Σ_m |supp ψ_m|²`; memory is linear in the total support.
pub fn estimate_mixture_moments(
    states: &[TrajectoryState],
    memory_budget: u64,
) -> Result<MixtureMoments> {
    if states.is_empty() {
        return Err(Error::InvalidEnsemble("empty snapshot".into()));
    }
    let n = states[0].n_sites;
    if states.iter().any(|s| s.n_sites != n) {
        return Err(Error::InvalidEnsemble(
            "trajectories of different chain lengths".into(),
        ));
    }
    let required = mixture_memory_required(states);
    if required > memory_budget {
        return Err(Error::MemoryBudget {
            required,
            budget: memory_budget,
        });
    }
    let dim = 1usize << n;
    let mut offsets = vec![0usize; dim + 1];
    for s in states {
        for &(c, _) in &s.amps {
            offsets[c as usize + 1] += 1;
        }
    }
    for k in 0..dim {
        offsets[k + 1] += offsets[k];
    }
    let mut fill = offsets.clone();
    let mut index = vec![(0u32, 0.0f64); offsets[dim]];
    for (m, s) in states.iter().enumerate() {
        for &(c, a) in &s.amps {
            index[fill[c as usize]] = (m as u32, a);
            fill[c as usize] += 1;
        }
    }
    drop(fill);

    let n_chunks = dim.div_ceil(ROW_CHUNK);
    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; dim], vec![u32::MAX; dim], Vec::<u32>::new()),
            |(buf, stamp, touched), chunk| {
                let mut coh = 0.0;
                let mut pur = 0.0;
                let lo = chunk * ROW_CHUNK;
                let hi = (lo + ROW_CHUNK).min(dim);
                for i in lo..hi {
                    let members = &index[offsets[i]..offsets[i + 1]];
                    if members.is_empty() {
                        continue;
                    }
                    touched.clear();
                    for &(m, a) in members {
                        for &(j, b) in &states[m as usize].amps {
                            let j = j as usize;
                            if stamp[j] != i as u32 {
                                stamp[j] = i as u32;
                                buf[j] = 0.0;
                                touched.push(j as u32);
                            }
                            buf[j] += a * b;
                        }
                    }
                    touched.sort_unstable();
                    for &j in touched.iter() {
                        let v = buf[j as usize];
                        if j as usize != i {
                            coh += v.abs();
                        }
                        pur += v * v;
                    }
                }
                (coh, pur)
            },
        )
        .collect();
    let m = states.len() as f64;
    let (coh, pur) = partials
        .iter()
        .fold((0.0, 0.0), |(c, p), &(dc, dp)| (c + dc, p + dp));
    Ok(MixtureMoments {
        coherence: coh / m,
        purity: pur / (m * m),
    })
}

/// Delete-a-group jackknife over `groups` contiguous blocks of trajectories.
/// Returns the full-sample moments and their standard errors.
pub fn jackknife_mixture_moments(
    states: &[TrajectoryState],
    groups: usize,
    memory_budget: u64,
) -> Result<(MixtureMoments, MixtureMoments)> {
    let full = estimate_mixture_moments(states, memory_budget)?;
    let m = states.len();
    if groups < 2 || groups > m {
        return Err(Error::InvalidEnsemble(format!(
            "jackknife needs between 2 and {m} groups, got {groups}"
        )));
    }
    let bounds: Vec<usize> = (0..=groups).map(|g| g * m / groups).collect();
    let mut kept = Vec::with_capacity(m);
    let mut parts = Vec::with_capacity(groups);
    for g in 0..groups {
        kept.clear();
        kept.extend_from_slice(&states[..bounds[g]]);
        kept.extend_from_slice(&states[bounds[g + 1]..]);
        parts.push(estimate_mixture_moments(&kept, memory_budget)?);
    }
    let gf = groups as f64;
    let se = |f: fn(&MixtureMoments) -> f64| {
        let mean = parts.iter().map(f).sum::<f64>() / gf;
        ((gf - 1.0) / gf * parts.iter().map(|p| (f(p) - mean).powi(2)).sum::<f64>()).sqrt()
    };
    let err = MixtureMoments {
        coherence: se(|p| p.coherence),
        purity: se(|p| p.purity),
    };
    Ok((full, err))
}

pub fn estimate_coherence(states: &[TrajectoryState], memory_budget: u64) -> Result<f64> {
    Ok(estimate_mixture_moments(states, memory_budget)?.coherence)
}

pub fn estimate_purity(states: &[TrajectoryState], memory_budget: u64) -> Result<f64> {
    Ok(estimate_mixture_moments(states, memory_budget)?.purity)
}

/// `tr ρ² = (1/M²) Σ_{m,n} |⟨ψ_m|ψ_n⟩|²` by explicit overlaps; `O(M²)`.
pub fn estimate_purity_pairwise(states: &[TrajectoryState]) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InvalidEnsemble("empty snapshot".into()));
    }
    let m = states.len();
    let mut acc = 0.0;
    for a in 0..m {
        acc += states[a].norm_squared().powi(2);
        for b in 0..a {
            acc += 2.0 * states[a].inner(&states[b]).powi(2);
        }
    }
    Ok(acc / (m * m) as f64)
}

/// Dense ensemble density matrix, for chains small enough for exact mode.
pub fn ensemble_density_matrix(states: &[TrajectoryState]) -> Result<DensityMatrix> {
    if states.is_empty() {
        return Err(Error::InvalidEnsemble("empty snapshot".into()));
    }
    let n = states[0].n_sites;
    let dim = 1usize << n;
    let mut data = vec![0.0; dim * dim];
    let w = 1.0 / states.len() as f64;
    for s in states {
        for &(i, a) in &s.amps {
            for &(j, b) in &s.amps {
                data[i as usize * dim + j as usize] += w * a * b;
            }
        }
    }
    DensityMatrix::from_raw(n, data)
}
