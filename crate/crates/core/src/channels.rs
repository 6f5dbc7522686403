//! Local three-spin channels: the classical Glauber transition matrix, its
//! incoherent Kraus embedding, and the two-operator quantum extensions built
//! from a real 4×4 matrix `X`.
//!
//! The three-spin basis states `|000⟩ … |111⟩` are numbered by binary
//! counting, so `|001⟩` has local index 1 and `|110⟩` local index 6. Outer
//! bits are the two neighbours of the updated (middle) spin.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];
pub type Mat4 = [[f64; 4]; 4];
pub type Mat8 = [[f64; 8]; 8];

/// Tolerance for every matrix identity checked in this module.
pub const TOLERANCE: f64 = 1e-12;

/// Three-spin index of X-block row/column `a` (`a = 0..4`).
///
/// Rows and columns 0,1 of `X` live on `{|001⟩, |011⟩}`; rows and columns 2,3
/// on `{|100⟩, |110⟩}`.
pub const BLOCK_INDEX: [usize; 4] = [1, 3, 4, 6];

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub const IDENTITY2: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
pub const SIGMA_X: Mat2 = [[0.0, 1.0], [1.0, 0.0]];
pub const HADAMARD: Mat2 = [
    [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
    [FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
];
/// `σx·H`: maps `|0⟩ → |+⟩` and `|1⟩ → -|-⟩`.
pub const S_GATE: Mat2 = [
    [FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
    [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
];

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Kronecker product `a ⊗ b`.
pub fn kron2(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[i / 2][j / 2] * b[i % 2][j % 2];
        }
    }
    out
}

fn identity8() -> Mat8 {
    let mut m = [[0.0; 8]; 8];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// The classical zero-temperature Glauber rule in the three-spin subspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix3S {
    pub entries: Mat8,
}

impl TransitionMatrix3S {
    /// Validates non-negativity and column stochasticity.
    pub fn new(entries: Mat8) -> Result<Self> {
        for j in 0..8 {
            let mut sum = 0.0;
            for (i, row) in entries.iter().enumerate() {
                let v = row[j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidTransition(format!(
                        "entry ({i},{j}) = {v} is not a probability"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > TOLERANCE {
                return Err(Error::InvalidTransition(format!(
                    "column {j} sums to {sum}"
                )));
            }
        }
        Ok(TransitionMatrix3S { entries })
    }

    /// Column `j`: the distribution reached from local state `j`.
    pub fn column(&self, j: usize) -> [f64; 8] {
        let mut col = [0.0; 8];
        for (i, c) in col.iter_mut().enumerate() {
            *c = self.entries[i][j];
        }
        col
    }

    /// Applies the stochastic matrix to a probability vector.
    pub fn apply(&self, p: &[f64; 8]) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..8).map(|j| self.entries[i][j] * p[j]).sum();
        }
        out
    }
}

pub fn build_classical_transition() -> TransitionMatrix3S {
    const H: f64 = 0.5;
    TransitionMatrix3S {
        entries: [
            [1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, H, 0.0, H, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, H, 0.0, H, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, H, 0.0, H, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, H, 0.0, H, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        ],
    }
}

/// The six symmetry-generated quantum extensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    H0,
    H1,
    H2,
    S2,
    S1,
    S0,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::H0,
        Variant::H1,
        Variant::H2,
        Variant::S2,
        Variant::S1,
        Variant::S0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::H0 => "H0",
            Variant::H1 => "H1",
            Variant::H2 => "H2",
            Variant::S2 => "S2",
            Variant::S1 => "S1",
            Variant::S0 => "S0",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// The real 4×4 matrix embedded in the Kraus pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XMatrix {
    pub entries: Mat4,
    /// `None` for user-supplied matrices.
    pub variant: Option<Variant>,
}

impl XMatrix {
    pub fn custom(entries: Mat4) -> Result<Self> {
        if entries.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("X has non-finite entries".into()));
        }
        Ok(XMatrix {
            entries,
            variant: None,
        })
    }

    pub fn label(&self) -> String {
        self.variant
            .map(|v| v.name().to_string())
            .unwrap_or_else(|| "custom".to_string())
    }

    /// Largest deviation of the column Gram matrix from the identity.
    pub fn orthonormality_deviation(&self) -> f64 {
        let x = &self.entries;
        let mut dev: f64 = 0.0;
        for j in 0..4 {
            for k in 0..4 {
                let dot: f64 = (0..4).map(|r| x[r][j] * x[r][k]).sum();
                let target = if j == k { 1.0 } else { 0.0 };
                dev = dev.max((dot - target).abs());
            }
        }
        dev
    }

    /// The eight sums that must equal 1/2 for the channel to extend the
    /// Glauber rule, in the order
    /// `|X11|²+|X31|², |X21|²+|X41|², |X12|²+|X32|², |X22|²+|X42|²,
    ///  |X13|²+|X33|², |X23|²+|X43|², |X14|²+|X34|², |X24|²+|X44|²`.
    pub fn extension_sums(&self) -> [f64; 8] {
        let x = &self.entries;
        let mut sums = [0.0; 8];
        for col in 0..4 {
            for row in 0..2 {
                sums[2 * col + row] = x[row][col].powi(2) + x[row + 2][col].powi(2);
            }
        }
        sums
    }

    pub fn extension_residual(&self) -> f64 {
        self.extension_sums()
            .iter()
            .map(|s| (s - 0.5).abs())
            .fold(0.0, f64::max)
    }
}

pub fn build_x_matrix(variant: Variant) -> XMatrix {
    let entries = match variant {
        Variant::H0 => kron2(&IDENTITY2, &HADAMARD),
        Variant::S0 => kron2(&IDENTITY2, &S_GATE),
        Variant::H1 => kron2(&SIGMA_X, &HADAMARD),
        Variant::H2 => kron2(&HADAMARD, &HADAMARD),
        Variant::S2 => kron2(&S_GATE, &S_GATE),
        Variant::S1 => kron2(&SIGMA_X, &S_GATE),
    };
    XMatrix {
        entries,
        variant: Some(variant),
    }
}

/// Outcome of a numerical identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub pass: bool,
    pub max_deviation: f64,
}

impl Check {
    fn from_deviation(dev: f64) -> Self {
        Check {
            pass: dev <= TOLERANCE,
            max_deviation: dev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrausPair {
    pub k1: Mat8,
    pub k2: Mat8,
}

impl KrausPair {
    pub fn ops(&self) -> [Mat8; 2] {
        [self.k1, self.k2]
    }
}

pub fn build_kraus(x: &XMatrix) -> KrausPair {
    let mut k1 = [[0.0; 8]; 8];
    let mut k2 = [[0.0; 8]; 8];
    k1[0][0] = 1.0;
    k1[7][7] = 1.0;
    k2[0][2] = 1.0;
    k2[7][5] = 1.0;
    for a in 0..4 {
        for b in 0..4 {
            // both indices in the same 2×2 block
            if a / 2 != b / 2 {
                continue;
            }
            let (r, c) = (BLOCK_INDEX[a], BLOCK_INDEX[b]);
            k1[r][c] = x.entries[a][b];
            // K2 takes the rows of the opposite block
            k2[r][c] = x.entries[a ^ 2][b];
        }
    }
    KrausPair { k1, k2 }
}

/// `‖Σ K†K − 1‖_max` for an arbitrary list of local operators.
pub fn completeness_deviation(ops: &[Mat8]) -> f64 {
    let id = identity8();
    let mut dev: f64 = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            let s: f64 = ops
                .iter()
                .map(|k| (0..8).map(|r| k[r][i] * k[r][j]).sum::<f64>())
                .sum();
            dev = dev.max((s - id[i][j]).abs());
        }
    }
    dev
}

pub fn verify_cptp(k: &KrausPair) -> Check {
    Check::from_deviation(completeness_deviation(&k.ops()))
}

/// Diagonal of `Σ_α K_α |j⟩⟨j| K_α†`: the classical distribution a complete
/// measurement sees after the channel acts on basis state `j`.
pub fn measured_column(ops: &[Mat8], j: usize) -> [f64; 8] {
    let mut col = [0.0; 8];
    for k in ops {
        for (i, c) in col.iter_mut().enumerate() {
            *c += k[i][j] * k[i][j];
        }
    }
    col
}

/// Checks `P∘Λ∘P = Λ_T` column by column on the three-spin space.
pub fn verify_extension_ops(ops: &[Mat8], t: &TransitionMatrix3S) -> Result<Check> {
    let cptp = completeness_deviation(ops);
    if cptp > TOLERANCE {
        return Err(Error::NotCptp(cptp));
    }
    let mut dev: f64 = 0.0;
    for j in 0..8 {
        let col = measured_column(ops, j);
        for (i, c) in col.iter().enumerate() {
            dev = dev.max((c - t.entries[i][j]).abs());
        }
    }
    Ok(Check::from_deviation(dev))
}

pub fn verify_extension(k: &KrausPair, t: &TransitionMatrix3S) -> Result<Check> {
    verify_extension_ops(&k.ops(), t)
}

/// Rank-one Kraus operators `√T_ij |i⟩⟨j|` for every nonzero `T_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalKrausSet {
    /// `(i, j, √T_ij)`
    pub operators: Vec<(usize, usize, f64)>,
}

impl ClassicalKrausSet {
    pub fn dense_ops(&self) -> Vec<Mat8> {
        self.operators
            .iter()
            .map(|&(i, j, v)| {
                let mut m = [[0.0; 8]; 8];
                m[i][j] = v;
                m
            })
            .collect()
    }
}

pub fn build_classical_kraus(t: &TransitionMatrix3S) -> Result<ClassicalKrausSet> {
    let t = TransitionMatrix3S::new(t.entries)?;
    let mut operators = Vec::new();
    for j in 0..8 {
        for i in 0..8 {
            let v = t.entries[i][j];
            if v > 0.0 {
                operators.push((i, j, v.sqrt()));
            }
        }
    }
    Ok(ClassicalKrausSet { operators })
}

/// `Σ_α K_α ρ K_α†` on the eight-dimensional local space.
pub fn apply_ops_8(ops: &[Mat8], rho: &Mat8) -> Mat8 {
    let mut out = [[0.0; 8]; 8];
    for k in ops {
        let mut kr = [[0.0; 8]; 8];
        for i in 0..8 {
            for j in 0..8 {
                kr[i][j] = (0..8).map(|m| k[i][m] * rho[m][j]).sum();
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                out[i][j] += (0..8).map(|m| kr[i][m] * k[j][m]).sum::<f64>();
            }
        }
    }
    out
}

/// One local Kraus operator in sparse row/column form.
#[derive(Debug, Clone)]
pub struct SparseOp {
    row_len: [usize; 8],
    rows: [[(usize, f64); 8]; 8],
    col_len: [usize; 8],
    cols: [[(usize, f64); 8]; 8],
}

impl SparseOp {
    pub fn from_dense(m: &Mat8) -> Self {
        let mut op = SparseOp {
            row_len: [0; 8],
            rows: [[(0, 0.0); 8]; 8],
            col_len: [0; 8],
            cols: [[(0, 0.0); 8]; 8],
        };
        for (i, row) in m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    op.rows[i][op.row_len[i]] = (j, v);
                    op.row_len[i] += 1;
                    op.cols[j][op.col_len[j]] = (i, v);
                    op.col_len[j] += 1;
                }
            }
        }
        op
    }

    /// Nonzeros `(col, value)` of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i][..self.row_len[i]]
    }

    /// Nonzeros `(row, value)` of column `j`.
    #[inline]
    pub fn col(&self, j: usize) -> &[(usize, f64)] {
        &self.cols[j][..self.col_len[j]]
    }

    pub fn to_dense(&self) -> Mat8 {
        let mut m = [[0.0; 8]; 8];
        for (i, row) in m.iter_mut().enumerate() {
            for &(j, v) in self.row(i) {
                row[j] = v;
            }
        }
        m
    }
}

/// Any local channel the dynamics engines can run: a list of sparse Kraus
/// operators on the three-spin neighbourhood.
#[derive(Debug, Clone)]
pub struct LocalChannel {
    ops: Vec<SparseOp>,
    label: String,
}

impl LocalChannel {
    pub fn new(ops: &[Mat8], label: impl Into<String>) -> Result<Self> {
        let dev = completeness_deviation(ops);
        if dev > TOLERANCE {
            return Err(Error::NotCptp(dev));
        }
        Ok(LocalChannel {
            ops: ops.iter().map(SparseOp::from_dense).collect(),
            label: label.into(),
        })
    }

    pub fn from_pair(k: &KrausPair, label: impl Into<String>) -> Result<Self> {
        LocalChannel::new(&k.ops(), label)
    }

    pub fn from_variant(v: Variant) -> Self {
        LocalChannel::from_pair(&build_kraus(&build_x_matrix(v)), v.name())
            .expect("built-in variants are CPTP")
    }

    /// The incoherent channel of the classical Glauber rule.
    pub fn classical() -> Self {
        let set = build_classical_kraus(&build_classical_transition())
            .expect("the Glauber matrix is column stochastic");
        LocalChannel::new(&set.dense_ops(), "classical").expect("classical set is CPTP")
    }

    #[inline]
    pub fn ops(&self) -> &[SparseOp] {
        &self.ops
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dense_ops(&self) -> Vec<Mat8> {
        self.ops.iter().map(SparseOp::to_dense).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const R: f64 = FRAC_1_SQRT_2;

    fn assert_close4(a: &Mat4, b: &Mat4) {
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (a[i][j] - b[i][j]).abs() < 1e-15,
                    "({i},{j}): {} vs {}",
                    a[i][j],
                    b[i][j]
                );
            }
        }
    }

    /// The printed matrices, entry by entry.
    fn printed(v: Variant) -> Mat4 {
        match v {
            Variant::H0 => [
                [R, R, 0., 0.],
                [R, -R, 0., 0.],
                [0., 0., R, R],
                [0., 0., R, -R],
            ],
            Variant::S0 => [
                [R, -R, 0., 0.],
                [R, R, 0., 0.],
                [0., 0., R, -R],
                [0., 0., R, R],
            ],
            Variant::H1 => [
                [0., 0., R, R],
                [0., 0., R, -R],
                [R, R, 0., 0.],
                [R, -R, 0., 0.],
            ],
            Variant::H2 => [
                [0.5, 0.5, 0.5, 0.5],
                [0.5, -0.5, 0.5, -0.5],
                [0.5, 0.5, -0.5, -0.5],
                [0.5, -0.5, -0.5, 0.5],
            ],
            Variant::S2 => [
                [0.5, -0.5, -0.5, 0.5],
                [0.5, 0.5, -0.5, -0.5],
                [0.5, -0.5, 0.5, -0.5],
                [0.5, 0.5, 0.5, 0.5],
            ],
            Variant::S1 => [
                [0., 0., R, -R],
                [0., 0., R, R],
                [R, -R, 0., 0.],
                [R, R, 0., 0.],
            ],
        }
    }

    /// Zero-temperature Glauber rule on `|l c r⟩`.
    fn glauber_rule(j: usize) -> [f64; 8] {
        let (l, c, r) = ((j >> 2) & 1, (j >> 1) & 1, j & 1);
        let mut col = [0.0; 8];
        if l == r {
            col[(l << 2) | (l << 1) | r] += 1.0;
        } else {
            col[(l << 2) | r] += 0.5;
            col[(l << 2) | 2 | r] += 0.5;
        }
        let _ = c;
        col
    }

    #[test]
    fn transition_matrix_matches_rule() {
        let t = build_classical_transition();
        for j in 0..8 {
            assert_eq!(t.column(j), glauber_rule(j), "column {j}");
        }
        assert_eq!(t.column(2), [1., 0., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(t.column(1), [0., 0.5, 0., 0.5, 0., 0., 0., 0.]);
        assert_eq!(t.column(7), [0., 0., 0., 0., 0., 0., 0., 1.]);
        assert!(TransitionMatrix3S::new(t.entries).is_ok());
    }

    #[test]
    fn x_matrices_match_printed_forms() {
        for v in Variant::ALL {
            assert_close4(&build_x_matrix(v).entries, &printed(v));
        }
        let s2 = build_x_matrix(Variant::S2);
        assert!(s2.entries[3].iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn variants_parse() {
        assert_eq!("s0".parse::<Variant>().unwrap(), Variant::S0);
        assert_eq!("H2".parse::<Variant>().unwrap(), Variant::H2);
        assert!(matches!(
            "Q7".parse::<Variant>(),
            Err(Error::UnknownVariant(_))
        ));
    }

    #[test]
    fn variants_orthonormal_and_extending() {
        for v in Variant::ALL {
            let x = build_x_matrix(v);
            assert!(x.orthonormality_deviation() <= TOLERANCE, "{v}");
            for s in x.extension_sums() {
                assert!((s - 0.5).abs() <= TOLERANCE, "{v}: {s}");
            }
        }
    }

    #[test]
    fn single_spin_gates() {
        let hh = mul2(&HADAMARD, &HADAMARD);
        let sx_h = mul2(&SIGMA_X, &HADAMARD);
        for i in 0..2 {
            for j in 0..2 {
                assert!((hh[i][j] - IDENTITY2[i][j]).abs() < 1e-15);
                assert!((sx_h[i][j] - S_GATE[i][j]).abs() < 1e-15);
            }
        }
        // S|0⟩ = |+⟩, S|1⟩ = -|-⟩
        assert_eq!([S_GATE[0][0], S_GATE[1][0]], [R, R]);
        assert_eq!([S_GATE[0][1], S_GATE[1][1]], [-R, R]);
    }

    #[test]
    fn kraus_positions_pinned() {
        let x = XMatrix::custom([
            [11., 12., 13., 14.],
            [21., 22., 23., 24.],
            [31., 32., 33., 34.],
            [41., 42., 43., 44.],
        ])
        .unwrap();
        let k = build_kraus(&x);
        let mut e1 = [[0.0; 8]; 8];
        let mut e2 = [[0.0; 8]; 8];
        e1[0][0] = 1.;
        e1[1][1] = 11.;
        e1[1][3] = 12.;
        e1[3][1] = 21.;
        e1[3][3] = 22.;
        e1[4][4] = 33.;
        e1[4][6] = 34.;
        e1[6][4] = 43.;
        e1[6][6] = 44.;
        e1[7][7] = 1.;
        e2[0][2] = 1.;
        e2[1][1] = 31.;
        e2[1][3] = 32.;
        e2[3][1] = 41.;
        e2[3][3] = 42.;
        e2[4][4] = 13.;
        e2[4][6] = 14.;
        e2[6][4] = 23.;
        e2[6][6] = 24.;
        e2[7][5] = 1.;
        assert_eq!(k.k1, e1);
        assert_eq!(k.k2, e2);
    }

    #[test]
    fn kraus_examples() {
        for v in Variant::ALL {
            let k = build_kraus(&build_x_matrix(v));
            assert_eq!(
                (k.k1[0][0], k.k2[0][2], k.k1[7][7], k.k2[7][5]),
                (1., 1., 1., 1.)
            );
            assert!(verify_cptp(&k).pass);
        }
        let h0 = build_kraus(&build_x_matrix(Variant::H0));
        assert!((h0.k1[1][1] - R).abs() < 1e-16);
        assert_eq!(h0.k2[1][1], 0.0);
    }

    #[test]
    fn cptp_counterexamples() {
        let zero = build_kraus(&XMatrix::custom([[0.0; 4]; 4]).unwrap());
        let c = verify_cptp(&zero);
        assert!(!c.pass);
        assert_eq!(c.max_deviation, 1.0);

        let mut scaled = [[0.0; 4]; 4];
        for (i, row) in scaled.iter_mut().enumerate() {
            row[i] = R;
        }
        let k = build_kraus(&XMatrix::custom(scaled).unwrap());
        let c = verify_cptp(&k);
        assert!(!c.pass);
        // K1 carries the diagonal (norm² 1/2), K2 only the off-block rows (zero)
        assert!((c.max_deviation - 0.5).abs() < 1e-15);
    }

    #[test]
    fn extension_examples() {
        let t = build_classical_transition();
        for v in Variant::ALL {
            let k = build_kraus(&build_x_matrix(v));
            let c = verify_extension(&k, &t).unwrap();
            assert!(c.pass, "{v}: {}", c.max_deviation);
        }

        let mut id = [[0.0; 4]; 4];
        for (i, row) in id.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let k = build_kraus(&XMatrix::custom(id).unwrap());
        assert!(verify_cptp(&k).pass);
        let c = verify_extension(&k, &t).unwrap();
        assert!(!c.pass);
        // |001⟩ stays put with probability 1 instead of 1/2
        assert_eq!(measured_column(&k.ops(), 1)[1], 1.0);
        assert!((c.max_deviation - 0.5).abs() < 1e-15);

        let classical = build_classical_kraus(&t).unwrap();
        assert!(
            verify_extension_ops(&classical.dense_ops(), &t)
                .unwrap()
                .pass
        );

        let zero = build_kraus(&XMatrix::custom([[0.0; 4]; 4]).unwrap());
        assert!(matches!(
            verify_extension(&zero, &t),
            Err(Error::NotCptp(_))
        ));
    }

    #[test]
    fn extension_implies_stochastic_columns() {
        for v in Variant::ALL {
            let ops = build_kraus(&build_x_matrix(v)).ops();
            for j in 0..8 {
                let s: f64 = measured_column(&ops, j).iter().sum();
                assert!((s - 1.0).abs() <= TOLERANCE);
            }
        }
    }

    #[test]
    fn classical_kraus_set() {
        let t = build_classical_transition();
        let set = build_classical_kraus(&t).unwrap();
        let nonzero = t.entries.iter().flatten().filter(|v| **v > 0.0).count();
        assert_eq!(set.operators.len(), nonzero);
        assert_eq!(set.operators.len(), 12);
        assert!(completeness_deviation(&set.dense_ops()) <= TOLERANCE);

        let mut rho = [[0.0; 8]; 8];
        rho[1][1] = 1.0;
        let out = apply_ops_8(&set.dense_ops(), &rho);
        let diag: Vec<f64> = (0..8).map(|i| out[i][i]).collect();
        let want = [0., 0.5, 0., 0.5, 0., 0., 0., 0.];
        assert!(diag.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        let coherence: f64 = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| out[i][j].abs())
            .sum();
        assert_eq!(coherence, 0.0);

        let mut bad = t.entries;
        bad[0][0] = -1.0;
        assert!(build_classical_kraus(&TransitionMatrix3S { entries: bad }).is_err());
    }

    #[test]
    fn classical_kraus_then_dephase_equals_transition() {
        // arbitrary symmetric input with coherences
        let t = build_classical_transition();
        let ops = build_classical_kraus(&t).unwrap().dense_ops();
        let mut rho = [[0.0; 8]; 8];
        for i in 0..8 {
            for j in 0..8 {
                rho[i][j] = ((i * 7 + j * 3) % 5) as f64 * 0.01 + if i == j { 0.1 } else { 0.0 };
            }
        }
        for i in 0..8 {
            for j in 0..i {
                rho[i][j] = rho[j][i];
            }
        }
        let out = apply_ops_8(&ops, &rho);
        let mut p = [0.0; 8];
        for i in 0..8 {
            p[i] = rho[i][i];
        }
        let expected = t.apply(&p);
        for i in 0..8 {
            assert!((out[i][i] - expected[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn local_channel_roundtrip() {
        for v in Variant::ALL {
            let ch = LocalChannel::from_variant(v);
            let k = build_kraus(&build_x_matrix(v));
            assert_eq!(ch.dense_ops(), k.ops().to_vec());
        }
        let zero = [[0.0; 8]; 8];
        assert!(LocalChannel::new(&[zero], "zero").is_err());
    }
}
