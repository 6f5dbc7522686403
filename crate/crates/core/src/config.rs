//! Spin configurations of a periodic chain and the combinatorics on them.
//!
//! Site `q` is stored in bit `q`; a set bit means spin down. The configuration
//! index is the binary number `s_{N-1} ... s_1 s_0`.

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest chain the local three-spin rule makes sense on.
pub const MIN_SITES: usize = 4;
/// Largest chain the dense density-matrix engine accepts.
pub const MAX_EXACT_SITES: usize = 12;
/// Largest chain the trajectory engine accepts.
pub const MAX_TRAJ_SITES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinConfig {
    bits: u32,
    n_sites: u8,
}

impl SpinConfig {
    /// Panics if `n_sites > 32` or bits above `n_sites` are set.
    pub fn new(bits: u32, n_sites: usize) -> Self {
        assert!(n_sites <= 32, "at most 32 sites fit in a SpinConfig");
        assert!(
            n_sites == 32 || bits >> n_sites == 0,
            "bits {bits:#b} exceed a chain of {n_sites} sites"
        );
        SpinConfig {
            bits,
            n_sites: n_sites as u8,
        }
    }

    /// Parses a ket label such as `0101`, written `s_{N-1} ... s_0`.
    pub fn from_ket(label: &str) -> Result<Self> {
        let n = label.len();
        if n == 0 || n > 32 {
            return Err(Error::InvalidMatrix(format!("bad ket label `{label}`")));
        }
        let bits = u32::from_str_radix(label, 2)
            .map_err(|_| Error::InvalidMatrix(format!("bad ket label `{label}`")))?;
        Ok(SpinConfig::new(bits, n))
    }

    pub fn all_up(n_sites: usize) -> Self {
        SpinConfig::new(0, n_sites)
    }

    pub fn all_down(n_sites: usize) -> Self {
        SpinConfig::new(full_mask(n_sites), n_sites)
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn index(self) -> usize {
        self.bits as usize
    }

    #[inline]
    pub fn n_sites(self) -> usize {
        self.n_sites as usize
    }

    #[inline]
    pub fn spin(self, site: usize) -> u32 {
        (self.bits >> site) & 1
    }

    pub fn complement(self) -> Self {
        SpinConfig::new(!self.bits & full_mask(self.n_sites()), self.n_sites())
    }

    /// Cyclic shift by one site towards higher indices.
    pub fn rotate(self) -> Self {
        SpinConfig::new(rotate_bits(self.bits, self.n_sites()), self.n_sites())
    }

    pub fn ket(self) -> String {
        (0..self.n_sites())
            .rev()
            .map(|q| if self.spin(q) == 1 { '1' } else { '0' })
            .collect()
    }
}

impl std::fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "|{}⟩", self.ket())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainGeometry {
    pub n_sites: usize,
    pub boundary: Boundary,
}

impl ChainGeometry {
    /// A periodic chain; `n_sites` must be even and at least [`MIN_SITES`].
    pub fn periodic(n_sites: usize) -> Result<Self> {
        if !(MIN_SITES..=32).contains(&n_sites) {
            return Err(Error::ChainLength {
                n: n_sites,
                min: MIN_SITES,
                max: 32,
            });
        }
        if !n_sites.is_multiple_of(2) {
            return Err(Error::OddSites(n_sites));
        }
        Ok(Self::periodic_unchecked(n_sites))
    }

    /// No length or parity check; for combinatorics on small or odd chains.
    pub fn periodic_unchecked(n_sites: usize) -> Self {
        ChainGeometry {
            n_sites,
            boundary: Boundary::Periodic,
        }
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_sites
    }

    /// Left and right neighbours of `site`.
    #[inline]
    pub fn neighbours(&self, site: usize) -> (usize, usize) {
        let n = self.n_sites;
        ((site + n - 1) % n, (site + 1) % n)
    }
}

#[inline]
pub(crate) fn full_mask(n_sites: usize) -> u32 {
    if n_sites >= 32 {
        u32::MAX
    } else {
        (1u32 << n_sites) - 1
    }
}

#[inline]
pub(crate) fn rotate_bits(bits: u32, n_sites: usize) -> u32 {
    let top = (bits >> (n_sites - 1)) & 1;
    ((bits << 1) & full_mask(n_sites)) | top
}

pub fn hamming_distance(a: SpinConfig, b: SpinConfig) -> Result<usize> {
    if a.n_sites != b.n_sites {
        return Err(Error::MismatchedSites(a.n_sites(), b.n_sites()));
    }
    Ok((a.bits ^ b.bits).count_ones() as usize)
}

/// Number of anti-aligned neighbour pairs, wrap-around pair included.
pub fn domain_wall_count(c: SpinConfig, g: &ChainGeometry) -> usize {
    domain_walls_of_bits(c.bits, g.n_sites)
}

#[inline]
pub(crate) fn domain_walls_of_bits(bits: u32, n_sites: usize) -> usize {
    (bits ^ rotate_bits(bits, n_sites)).count_ones() as usize
}

/// `#up - #down`.
pub fn magnetization(c: SpinConfig) -> i64 {
    c.n_sites() as i64 - 2 * c.bits.count_ones() as i64
}

/// All configurations with `N/2` spins down, in increasing index order.
pub fn zero_magnetization_ensemble(g: &ChainGeometry) -> Result<Vec<SpinConfig>> {
    let n = g.n_sites;
    if !n.is_multiple_of(2) {
        return Err(Error::OddSites(n));
    }
    let half = (n / 2) as u32;
    Ok((0..(1u64 << n))
        .filter(|b| b.count_ones() == half)
        .map(|b| SpinConfig::new(b as u32, n))
        .collect())
}

/// Uniform draw from the zero-magnetization set using a caller-provided generator.
pub fn sample_zero_magnetization_with<R: Rng + ?Sized>(
    g: &ChainGeometry,
    rng: &mut R,
) -> Result<SpinConfig> {
    let n = g.n_sites;
    if !n.is_multiple_of(2) {
        return Err(Error::OddSites(n));
    }
    let bits = index::sample(rng, n, n / 2)
        .into_iter()
        .fold(0u32, |acc, q| acc | (1 << q));
    Ok(SpinConfig::new(bits, n))
}

/// Uniform draw from the zero-magnetization set, reproducible from `seed`.
pub fn sample_zero_magnetization(g: &ChainGeometry, seed: u64) -> Result<SpinConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_zero_magnetization_with(g, &mut rng)
}
