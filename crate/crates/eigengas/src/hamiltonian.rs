//! Hamiltonians of the adiabatic CNOT gate on an eight-dot electron register.
//!
//! Two electrons encode the control (qubit 0) and target (qubit 1) of the
//! gate. Electron `m` is confined to a private 2x2 patch of quantum dots
//! addressed by a circuit step `n` in {0, 1} (the column) and a logical value
//! `j` in {0, 1} (the row). A computational basis state places each electron
//! on exactly one of its four dots, giving the 16-dimensional two-electron
//! space everything here acts on.
//!
//! The history Hamiltonian rewards configurations whose step-1 amplitudes are
//! the CNOT image of their step-0 amplitudes, and penalises electrons sitting
//! in different columns. Its ground energy is zero, with one ground state per
//! two-bit input; a small diagonal penalty on the step-0 dots selects the
//! input of interest. The bias Hamiltonian that drives the adiabatic sweep is
//! configurable: a generic non-commuting diagonal ladder, or a bias built in
//! an eigenbasis of the problem Hamiltonian so that the two commute exactly.
//!
//! Sign convention: within the one-electron-per-register sector every term
//! below either acts inside a single register or is a product of number
//! operators, so with modes ordered register-major (qubit, then step, then
//! value) no fermionic exchange signs arise. The matrices are built directly
//! in that frozen convention.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle;

/// Number of two-electron basis states.
pub const DIM: usize = 16;

/// One quantum dot: register `qubit`, circuit step `step`, logical value `value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DotIndex {
    pub qubit: u8,
    pub step: u8,
    pub value: u8,
}

impl DotIndex {
    pub fn new(qubit: u8, step: u8, value: u8) -> Self {
        assert!(qubit < 2 && step < 2 && value < 2, "dot indices are binary");
        Self { qubit, step, value }
    }

    /// Position of this dot within its register: `2*step + value`.
    pub fn local(&self) -> usize {
        (2 * self.step + self.value) as usize
    }
}

/// The 16 two-electron occupation states.
///
/// State `i` places electron 0 on local dot `i % 4` and electron 1 on local
/// dot `i / 4`, i.e. `i = (2*n0 + j0) + 4*(2*n1 + j1)`. The ordering is fixed
/// so that matrices are identical across runs.
#[derive(Clone, Debug)]
pub struct FockBasis {
    states: Vec<(DotIndex, DotIndex)>,
}

impl FockBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The pair of occupied dots for basis state `index`.
    pub fn state(&self, index: usize) -> (DotIndex, DotIndex) {
        self.states[index]
    }

    /// Basis index of the configuration with electron 0 on local dot `d0`
    /// and electron 1 on local dot `d1`.
    pub fn index_of(&self, d0: usize, d1: usize) -> usize {
        debug_assert!(d0 < 4 && d1 < 4);
        d0 + 4 * d1
    }
}

/// Enumerate the 16 two-electron configurations in the documented order.
pub fn build_basis() -> FockBasis {
    let mut states = Vec::with_capacity(DIM);
    for d1 in 0..4u8 {
        for d0 in 0..4u8 {
            let dot0 = DotIndex::new(0, d0 / 2, d0 % 2);
            let dot1 = DotIndex::new(1, d1 / 2, d1 % 2);
            states.push((dot0, dot1));
        }
    }
    FockBasis { states }
}

/// The four gate operations, named by their input bits (control, target).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateOp {
    #[serde(rename = "00->00", alias = "00")]
    ZeroZero,
    #[serde(rename = "01->01", alias = "01")]
    ZeroOne,
    #[serde(rename = "10->11", alias = "10")]
    OneZero,
    #[serde(rename = "11->10", alias = "11")]
    OneOne,
}

impl GateOp {
    pub const ALL: [GateOp; 4] = [
        GateOp::ZeroZero,
        GateOp::ZeroOne,
        GateOp::OneZero,
        GateOp::OneOne,
    ];

    /// Input bits (control, target).
    pub fn input(&self) -> (u8, u8) {
        match self {
            GateOp::ZeroZero => (0, 0),
            GateOp::ZeroOne => (0, 1),
            GateOp::OneZero => (1, 0),
            GateOp::OneOne => (1, 1),
        }
    }

    /// Output bits: the control passes through, the target picks up the
    /// control (CNOT truth table).
    pub fn output(&self) -> (u8, u8) {
        let (a, b) = self.input();
        (a, b ^ a)
    }
}

impl std::fmt::Display for GateOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (a, b) = self.input();
        let (c, d) = self.output();
        write!(f, "{a}{b}->{c}{d}")
    }
}

/// Bias Hamiltonian presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiasPreset {
    /// Diagonal in the occupation basis with the uniformly spaced spectrum
    /// `{0, 1/15, ..., 1}`. Does not commute with the problem Hamiltonian.
    #[serde(rename = "diagonal-ladder")]
    DiagonalLadder,
    /// Diagonal in an eigenbasis of the problem Hamiltonian, with the bias
    /// spectrum assigned in reverse energy order and scaled to [0, 1].
    /// Commutes with the problem Hamiltonian by construction, so the sweep
    /// produces exact level crossings.
    #[serde(rename = "commuting")]
    Commuting,
}

/// Build the CNOT history Hamiltonian on `basis`.
///
/// The two propagation terms are sums of `A^T A` blocks (one per target row),
/// and the two synchronisation terms are products of column number operators;
/// all of them are assembled as outer products and diagonal entries in the
/// occupation basis. The result is symmetric positive semidefinite with a
/// four-fold degenerate ground space at energy zero.
pub fn build_cnot(basis: &FockBasis) -> DMatrix<f64> {
    let dim = basis.len();
    let mut h = DMatrix::<f64>::zeros(dim, dim);

    // Propagation terms: for each target row j, A_j annihilates the
    // synchronised step-1 pair and the matching step-0 pair with opposite
    // signs. When the control is 0 the target row is copied; when the
    // control is 1 the target row is flipped.
    for j in 0..2usize {
        let mut u = DVector::<f64>::zeros(dim);
        u[basis.index_of(2, 2 + j)] = 1.0; // control (1,0), target (1,j)
        u[basis.index_of(0, j)] = -1.0; // control (0,0), target (0,j)
        h += &u * u.transpose();

        let mut w = DVector::<f64>::zeros(dim);
        w[basis.index_of(3, 2 + j)] = 1.0; // control (1,1), target (1,j)
        w[basis.index_of(1, 1 - j)] = -1.0; // control (0,1), target (0,1-j)
        h += &w * w.transpose();
    }

    // Synchronisation penalties: one unit of energy whenever the electrons
    // sit in different columns.
    for idx in 0..dim {
        let (d0, d1) = basis.state(idx);
        if d0.step != d1.step {
            h[(idx, idx)] += 1.0;
        }
    }
    h
}

/// Diagonal penalty `mu * (n_{0,0,a} + n_{1,0,b})` selecting input `(a, b)`.
///
/// With `mu < 0` the history state of the requested input becomes the unique
/// ground state of the combined problem Hamiltonian.
pub fn build_input_penalty(basis: &FockBasis, input: (u8, u8), mu: f64) -> DMatrix<f64> {
    assert!(input.0 < 2 && input.1 < 2, "input bits are binary");
    assert!(mu.is_finite(), "penalty strength must be finite");
    let dim = basis.len();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for idx in 0..dim {
        let (d0, d1) = basis.state(idx);
        if d0.step == 0 && d0.value == input.0 {
            h[(idx, idx)] += mu;
        }
        if d1.step == 0 && d1.value == input.1 {
            h[(idx, idx)] += mu;
        }
    }
    h
}

/// Build the bias Hamiltonian for `preset`.
///
/// The commuting preset needs the problem Hamiltonian `h0`; degenerate `h0`
/// eigenspaces are re-spanned deterministically (projections of the standard
/// basis vectors, orthonormalised in index order), so the result is
/// independent of eigensolver vagaries and of any seed.
pub fn build_bias(
    preset: BiasPreset,
    basis: &FockBasis,
    h0: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let dim = basis.len();
    match preset {
        BiasPreset::DiagonalLadder => {
            let denom = (dim - 1) as f64;
            Ok(DMatrix::from_diagonal(&DVector::from_fn(dim, |i, _| {
                i as f64 / denom
            })))
        }
        BiasPreset::Commuting => {
            let h0 = h0.ok_or(Error::MissingBiasReference)?;
            let sol = oracle::diagonalize(h0)?;
            let basis_cols = deterministic_eigenbasis(&sol);
            // Reverse energy order: the h0 ground state carries the largest
            // bias, the top state carries zero, spacing 1/(dim-1).
            let denom = (dim - 1) as f64;
            let mut hb = DMatrix::<f64>::zeros(dim, dim);
            for (k, col) in basis_cols.iter().enumerate() {
                let b = (dim - 1 - k) as f64 / denom;
                hb += col * col.transpose() * b;
            }
            // Symmetrise away the last bits of rounding.
            let hb_t = hb.transpose();
            Ok((hb + hb_t) * 0.5)
        }
    }
}

/// Deterministic orthonormal eigenbasis: eigenvectors of non-degenerate
/// levels pass through (sign-fixed by the solver wrapper); each degenerate
/// block is re-spanned by Gram-Schmidt on projections of the standard basis
/// vectors, visited in index order.
fn deterministic_eigenbasis(sol: &oracle::EigenSolution) -> Vec<DVector<f64>> {
    let dim = sol.values.len();
    let scale = sol
        .values
        .iter()
        .fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-9 * scale;

    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(dim);
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && (sol.values[end] - sol.values[end - 1]).abs() <= tol {
            end += 1;
        }
        if end - start == 1 {
            cols.push(sol.vectors.column(start).into_owned());
        } else {
            // Projector onto the block is basis-independent.
            let mut proj = DMatrix::<f64>::zeros(dim, dim);
            for k in start..end {
                let v = sol.vectors.column(k);
                proj += &v * v.transpose();
            }
            let mut accepted: Vec<DVector<f64>> = Vec::with_capacity(end - start);
            for j in 0..dim {
                if accepted.len() == end - start {
                    break;
                }
                let mut w = proj.column(j).into_owned();
                for a in &accepted {
                    let c = a.dot(&w);
                    w -= a * c;
                }
                let norm = w.norm();
                if norm > 1e-6 {
                    cols.push(&w / norm);
                    accepted.push(&w / norm);
                }
            }
            assert_eq!(
                accepted.len(),
                end - start,
                "failed to span a degenerate block deterministically"
            );
        }
        start = end;
    }
    cols
}

/// The fixed inputs of one adiabatic sweep: problem Hamiltonian, bias, the
/// bias scale `z`, penalty strength and gate operation.
#[derive(Clone, Debug)]
pub struct HamiltonianSet {
    pub h0: DMatrix<f64>,
    pub hb: DMatrix<f64>,
    pub z: f64,
    pub mu: f64,
    pub operation: GateOp,
    pub preset: BiasPreset,
}

impl HamiltonianSet {
    /// Assemble the problem and bias Hamiltonians for `operation`.
    pub fn build(operation: GateOp, preset: BiasPreset, z: f64, mu: f64) -> Result<Self> {
        if !(z > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bias scale z must be positive, got {z}"
            )));
        }
        let basis = build_basis();
        let h0 = build_cnot(&basis) + build_input_penalty(&basis, operation.input(), mu);
        let hb = build_bias(preset, &basis, Some(&h0))?;
        Ok(Self {
            h0,
            hb,
            z,
            mu,
            operation,
            preset,
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    /// The bias term including its scale, `z * hb`.
    pub fn scaled_bias(&self) -> DMatrix<f64> {
        &self.hb * self.z
    }

    /// Total Hamiltonian `h0 + lambda * z * hb + dh`.
    pub fn assemble(&self, lambda: f64, dh: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        if dh.nrows() != dim || dh.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: dh.nrows(),
                got2: dh.ncols(),
            });
        }
        Ok(&self.h0 + &self.hb * (lambda * self.z) + dh)
    }
}

/// Frobenius norm of the commutator `AB - BA`.
pub fn commutator_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
            got2: b.ncols(),
        });
    }
    let comm = a * b - b * a;
    Ok(comm.norm())
}
