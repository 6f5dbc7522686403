//! Scalar and structured observables of exact density matrices.

use serde::{Deserialize, Serialize};

use crate::config::{domain_walls_of_bits, full_mask, ChainGeometry};
use crate::error::{Error, Result};
use crate::exact::DensityMatrix;

/// L1 coherence `Σ_{i≠j} |ρ_ij|`.
pub fn coherence(rho: &DensityMatrix) -> f64 {
    let dim = rho.dim();
    (0..dim)
        .map(|i| {
            let row = rho.row(i);
            row.iter().map(|v| v.abs()).sum::<f64>() - row[i].abs()
        })
        .sum()
}

/// `tr ρ²`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    // ρ is symmetric, so tr ρ² = Σ_ij ρ_ij²
    rho.as_slice().iter().map(|v| v * v).sum()
}

pub fn domain_wall_expectation(rho: &DensityMatrix, g: &ChainGeometry) -> f64 {
    (0..rho.dim())
        .map(|i| domain_walls_of_bits(i as u32, g.n_sites) as f64 * rho.get(i, i))
        .sum()
}

/// Population of the all-up and all-down configurations.
pub fn equilibrium_probability(rho: &DensityMatrix) -> f64 {
    let d = full_mask(rho.n_sites()) as usize;
    rho.get(0, 0) + rho.get(d, d)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCell {
    pub sum_abs: f64,
    pub sum_real: f64,
    pub count: u64,
}

impl ClassCell {
    pub fn mean_abs(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_abs / self.count as f64
        }
    }

    pub fn mean_real(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_real / self.count as f64
        }
    }
}

/// Matrix elements `ρ_ij` grouped by `(a, b, c) = (d_H(i, ↓…↓), d_H(j, ↓…↓), d_H(i, j))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HammingClassGrid {
    pub n_sites: usize,
    pub c_max: usize,
    cells: Vec<ClassCell>,
}

impl HammingClassGrid {
    fn new(n_sites: usize, c_max: usize) -> Self {
        let side = n_sites + 1;
        HammingClassGrid {
            n_sites,
            c_max,
            cells: vec![ClassCell::default(); (c_max + 1) * side * side],
        }
    }

    #[inline]
    fn idx(&self, c: usize, a: usize, b: usize) -> usize {
        let side = self.n_sites + 1;
        (c * side + a) * side + b
    }

    pub fn cell(&self, c: usize, a: usize, b: usize) -> &ClassCell {
        &self.cells[self.idx(c, a, b)]
    }

    pub fn total_count(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum()
    }

    /// `(c, a, b, cell)` for every grid position.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, &ClassCell)> + '_ {
        let side = self.n_sites + 1;
        self.cells
            .iter()
            .enumerate()
            .map(move |(k, cell)| (k / (side * side), (k / side) % side, k % side, cell))
    }

    /// `max |mean_abs(a,b) − mean_abs(N−b, N−a)|` over the grid at distance `c`.
    pub fn modulus_asymmetry(&self, c: usize) -> f64 {
        let n = self.n_sites;
        let mut dev: f64 = 0.0;
        for a in 0..=n {
            for b in 0..=n {
                let x = self.cell(c, a, b).mean_abs();
                let y = self.cell(c, n - b, n - a).mean_abs();
                dev = dev.max((x - y).abs());
            }
        }
        dev
    }

    /// Sum of `mean_abs` over the grid at distance `c`.
    pub fn mass(&self, c: usize) -> f64 {
        let n = self.n_sites;
        (0..=n)
            .flat_map(|a| (0..=n).map(move |b| (a, b)))
            .map(|(a, b)| self.cell(c, a, b).mean_abs())
            .sum()
    }
}

/// Classifies every matrix element with `d_H(i, j) ≤ c_max`. The reference
/// configuration is all spins down (every bit set).
pub fn hamming_classify(rho: &DensityMatrix, c_max: usize) -> HammingClassGrid {
    let n = rho.n_sites();
    let c_max = c_max.min(n);
    let mut grid = HammingClassGrid::new(n, c_max);
    let ones = |x: usize| x.count_ones() as usize;
    for i in 0..rho.dim() {
        let a = n - ones(i);
        let row = rho.row(i);
        for (j, &v) in row.iter().enumerate() {
            let c = ones(i ^ j);
            if c > c_max {
                continue;
            }
            let b = n - ones(j);
            let k = grid.idx(c, a, b);
            let cell = &mut grid.cells[k];
            cell.sum_abs += v.abs();
            cell.sum_real += v;
            cell.count += 1;
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub observable: String,
    pub variant: String,
    pub n_sites: usize,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub meta: SeriesMeta,
}

impl TimeSeries {
    pub fn new(
        times: Vec<f64>,
        values: Vec<f64>,
        stderr: Option<Vec<f64>>,
        meta: SeriesMeta,
    ) -> Result<Self> {
        if times.len() != values.len() || stderr.as_ref().is_some_and(|e| e.len() != times.len()) {
            return Err(Error::InvalidSchedule(
                "series columns differ in length".into(),
            ));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(
                "times must be strictly increasing".into(),
            ));
        }
        Ok(TimeSeries {
            times,
            values,
            stderr,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value at time `t`, if sampled.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .position(|&x| (x - t).abs() < 1e-9)
            .map(|k| self.values[k])
    }
}

/// First time the series reaches 1/2, interpolated linearly between samples.
pub fn half_time(series: &TimeSeries) -> Result<f64> {
    let (t, v) = (&series.times, &series.values);
    if v.is_empty() {
        return Err(Error::NotFound("empty series".into()));
    }
    if v[0] >= 0.5 {
        return Ok(t[0]);
    }
    for k in 1..v.len() {
        if v[k] >= 0.5 {
            let frac = (0.5 - v[k - 1]) / (v[k] - v[k - 1]);
            return Ok(t[k - 1] + frac * (t[k] - t[k - 1]));
        }
    }
    Err(Error::NotFound(format!(
        "series never reaches 1/2 (max {:.4})",
        v.iter().cloned().fold(f64::MIN, f64::max)
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SpinConfig;
    use crate::exact::initial_density_matrix;

    fn meta() -> SeriesMeta {
        SeriesMeta {
            observable: "peq".into(),
            variant: "S0".into(),
            n_sites: 4,
            mode: "exact".into(),
        }
    }

    #[test]
    fn coherence_examples() {
        let g = ChainGeometry::periodic(4).unwrap();
        assert_eq!(coherence(&initial_density_matrix(&g).unwrap()), 0.0);

        let plus = DensityMatrix::from_raw(1, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!((coherence(&plus) - 1.0).abs() < 1e-15);

        let mut amps = vec![0.0; 8];
        amps[1] = 1.0;
        amps[3] = 1.0;
        let rho = DensityMatrix::from_pure(3, &amps).unwrap();
        assert!((coherence(&rho) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn purity_examples() {
        let d = 16;
        let mixed = DensityMatrix::from_diagonal(4, &vec![1.0 / d as f64; d]).unwrap();
        assert!((purity(&mixed) - 1.0 / d as f64).abs() < 1e-15);

        let amps: Vec<f64> = (0..16).map(|k| (k as f64 * 0.37).sin()).collect();
        assert!((purity(&DensityMatrix::from_pure(4, &amps).unwrap()) - 1.0).abs() < 1e-14);

        let mut diag = vec![0.0; 16];
        diag[0] = 0.5;
        diag[15] = 0.5;
        assert_eq!(
            purity(&DensityMatrix::from_diagonal(4, &diag).unwrap()),
            0.5
        );

        let g = ChainGeometry::periodic(10).unwrap();
        let p = purity(&initial_density_matrix(&g).unwrap());
        assert!((p - 1.0 / 252.0).abs() < 1e-15);
    }

    #[test]
    fn domain_wall_examples() {
        let g = ChainGeometry::periodic(4).unwrap();
        assert_eq!(
            domain_wall_expectation(&DensityMatrix::basis_state(4, 0).unwrap(), &g),
            0.0
        );
        let i = SpinConfig::from_ket("0101").unwrap().index();
        assert_eq!(
            domain_wall_expectation(&DensityMatrix::basis_state(4, i).unwrap(), &g),
            4.0
        );
        // four configurations with 2 walls, two with 4
        let d = domain_wall_expectation(&initial_density_matrix(&g).unwrap(), &g);
        assert!((d - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_examples() {
        let g = ChainGeometry::periodic(6).unwrap();
        assert_eq!(
            equilibrium_probability(&initial_density_matrix(&g).unwrap()),
            0.0
        );
        assert_eq!(
            equilibrium_probability(&DensityMatrix::basis_state(6, 0).unwrap()),
            1.0
        );
        let mut diag = vec![0.0; 64];
        diag[0] = 0.5;
        diag[63] = 0.5;
        assert_eq!(
            equilibrium_probability(&DensityMatrix::from_diagonal(6, &diag).unwrap()),
            1.0
        );
    }

    #[test]
    fn grid_of_initial_state() {
        let g = ChainGeometry::periodic(10).unwrap();
        let rho = initial_density_matrix(&g).unwrap();
        let grid = hamming_classify(&rho, 10);
        assert_eq!(grid.total_count(), 1 << 20);
        for (c, a, b, cell) in grid.iter() {
            if cell.sum_abs != 0.0 {
                assert_eq!((c, a, b), (0, 5, 5));
            }
            // parity and triangle constraints
            if (a + b + c) % 2 == 1 || a.abs_diff(b) > c {
                assert_eq!(cell.count, 0);
            }
            if c == 0 && a != b {
                assert_eq!(cell.count, 0);
            }
        }
        assert!((grid.cell(0, 5, 5).sum_abs - 1.0).abs() < 1e-12);
        for c in 1..=3 {
            assert_eq!(grid.mass(c), 0.0);
        }
    }

    #[test]
    fn half_time_examples() {
        let s = TimeSeries::new(vec![0., 1., 2.], vec![0., 0.4, 0.6], None, meta()).unwrap();
        assert!((half_time(&s).unwrap() - 1.5).abs() < 1e-15);
        let s = TimeSeries::new(vec![0., 1.], vec![0.7, 0.9], None, meta()).unwrap();
        assert_eq!(half_time(&s).unwrap(), 0.0);
        let s = TimeSeries::new(vec![0., 1.], vec![0.1, 0.2], None, meta()).unwrap();
        assert!(matches!(half_time(&s), Err(Error::NotFound(_))));
        assert!(TimeSeries::new(vec![1., 1.], vec![0., 0.], None, meta()).is_err());
    }
}
