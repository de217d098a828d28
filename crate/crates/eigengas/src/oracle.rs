//! Independent spectral ground truth: dense symmetric diagonalization,
//! diagonalization sweeps over the control parameter, trace comparison,
//! final-state fidelity and gate readout.
//!
//! Everything here goes through the eigenproblem directly, never through the
//! level-gas equations, so these routines serve as the reference the
//! integrator is validated against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gas::{SpectrumTrace, TraceDiagnostics};
use crate::hamiltonian::{FockBasis, HamiltonianSet};

/// Full eigendecomposition of a real symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct EigenSolution {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<f64>,
}

/// Cap reported when two traces agree to roundoff.
pub const SIG_FIG_CAP: f64 = 16.0;

/// Relative floor used when converting absolute deviations into significant
/// figures, so levels near zero energy do not divide by zero.
pub const SIG_FIG_FLOOR: f64 = 1e-3;

/// Diagonalize a real symmetric matrix.
///
/// Eigenvalues are returned in ascending order. Eigenvector signs follow a
/// deterministic convention: the component of largest magnitude (first such
/// index on ties) is made positive.
pub fn diagonalize(h: &DMatrix<f64>) -> Result<EigenSolution> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: n,
            got2: h.ncols(),
        });
    }
    let mut max_abs = 0.0_f64;
    let mut max_asym = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            max_abs = max_abs.max(h[(i, j)].abs());
            max_asym = max_asym.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    if max_asym > 1e-9 * (1.0 + max_abs) {
        return Err(Error::NotSymmetric { max_asym });
    }

    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let mut values = DVector::<f64>::zeros(n);
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        values[k] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(k, &col);
    }
    Ok(EigenSolution { values, vectors })
}

/// Descending lambda grid from 1 to 0 with `points` samples.
pub fn lambda_grid(points: usize) -> Vec<f64> {
    assert!(points >= 2, "a grid needs at least two points");
    let denom = (points - 1) as f64;
    (0..points).map(|i| 1.0 - i as f64 / denom).collect()
}

/// Spectrum of `h0 + lambda*z*hb + dh` at every grid point, by direct
/// diagonalization. `dh` is held fixed across the sweep, so this is the
/// exact reference for frozen-noise (and noiseless) runs.
///
/// Level couplings `l_nm = (x_n - x_m) <n|z hb|m>` are evaluated from the
/// eigenvectors at each grid point and stored alongside the spectrum.
pub fn reference_trace(
    set: &HamiltonianSet,
    dh_frozen: &DMatrix<f64>,
    grid: &[f64],
) -> Result<SpectrumTrace> {
    let dim = set.dim();
    let zhb = set.scaled_bias();
    let mut lambdas = Vec::with_capacity(grid.len());
    let mut levels = Vec::with_capacity(grid.len());
    let mut couplings = Vec::with_capacity(grid.len());
    let mut dh_traces = Vec::with_capacity(grid.len());
    let mut velocity_sums = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let h = set.assemble(lambda, dh_frozen)?;
        let sol = diagonalize(&h)?;
        let m = sol.vectors.transpose() * &zhb * &sol.vectors;
        let mut l = DMatrix::<f64>::zeros(dim, dim);
        for n in 0..dim {
            for k in 0..dim {
                if n != k {
                    l[(n, k)] = (sol.values[n] - sol.values[k]) * m[(n, k)];
                }
            }
        }
        dh_traces.push(dh_frozen.trace());
        velocity_sums.push((0..dim).map(|n| m[(n, n)]).sum());
        lambdas.push(lambda);
        levels.push(sol.values);
        couplings.push(l);
    }
    Ok(SpectrumTrace {
        lambdas,
        levels,
        couplings,
        dh_traces,
        velocity_sums,
        diagnostics: TraceDiagnostics::default(),
    })
}

/// Worst-case significant-figure agreement between two traces on the same
/// grid: the minimum over grid points and levels of
/// `-log10(|a - b| / max(|a|, 1e-3))`, capped at 16.
///
/// Both spectra are put in ascending order at each grid point before
/// comparing, so the result measures agreement of the instantaneous
/// spectra and does not depend on how either trace labels its levels
/// through exact crossings.
pub fn compare_traces(a: &SpectrumTrace, b: &SpectrumTrace) -> Result<f64> {
    if a.lambdas.len() != b.lambdas.len() {
        return Err(Error::GridMismatch {
            a: a.lambdas.len(),
            b: b.lambdas.len(),
        });
    }
    for (la, lb) in a.lambdas.iter().zip(&b.lambdas) {
        if (la - lb).abs() > 1e-12 {
            return Err(Error::GridMismatch {
                a: a.lambdas.len(),
                b: b.lambdas.len(),
            });
        }
    }
    let sorted = |col: &DVector<f64>| -> Vec<f64> {
        let mut v: Vec<f64> = col.iter().copied().collect();
        v.sort_by(|p, q| p.partial_cmp(q).unwrap());
        v
    };
    let mut worst = SIG_FIG_CAP;
    for (xa, xb) in a.levels.iter().zip(&b.levels) {
        for (va, vb) in sorted(xa).iter().zip(sorted(xb).iter()) {
            let denom = va.abs().max(SIG_FIG_FLOOR);
            let err = (va - vb).abs() / denom;
            let figs = if err == 0.0 {
                SIG_FIG_CAP
            } else {
                (-err.log10()).min(SIG_FIG_CAP)
            };
            worst = worst.min(figs);
        }
    }
    Ok(worst)
}

/// Fidelity of the final state against the noise-perturbed final state.
#[derive(Clone, Copy, Debug)]
pub struct FidelityResult {
    /// `|<ideal ground | perturbed ground>|`, in [0, 1].
    pub f: f64,
    /// Frobenius norm of the realized noise snapshot that produced it.
    pub dh_final_norm: f64,
}

/// Overlap between the ground state of `h0` and of `h0 + dh_final`.
///
/// `dh_final` is the realized noise matrix at the end of the sweep, read in
/// the `h0` eigenbasis (the instantaneous eigenbasis coincides with it up to
/// first order in the noise amplitude). Both ground states must be unique.
pub fn compute_fidelity(h0: &DMatrix<f64>, dh_final: &DMatrix<f64>) -> Result<FidelityResult> {
    let n = h0.nrows();
    if dh_final.nrows() != n || dh_final.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: dh_final.nrows(),
            got2: dh_final.ncols(),
        });
    }
    let ideal = diagonalize(h0)?;
    let gap = ideal.values[1] - ideal.values[0];
    if gap <= 1e-10 * ideal.values.amax().max(1.0) {
        return Err(Error::DegenerateGroundState { gap });
    }
    // In the h0 eigenbasis the ideal ground state is the first basis vector,
    // so the overlap is the first component of the perturbed ground state.
    let perturbed = DMatrix::from_diagonal(&ideal.values) + dh_final;
    let sol = diagonalize(&perturbed)?;
    let pgap = sol.values[1] - sol.values[0];
    if pgap <= 1e-12 * sol.values.amax().max(1.0) {
        return Err(Error::DegenerateGroundState { gap: pgap });
    }
    let f = sol.vectors[(0, 0)].abs().min(1.0);
    Ok(FidelityResult {
        f,
        dh_final_norm: dh_final.norm(),
    })
}

/// Conditional distribution over the two output bits given that both
/// electrons are read out on their step-1 dots. `p[j0][j1]` is the
/// probability of control bit `j0` and target bit `j1`.
pub fn readout_output(state: &DVector<f64>, basis: &FockBasis) -> Result<[[f64; 2]; 2]> {
    assert_eq!(state.len(), basis.len());
    let mut p = [[0.0_f64; 2]; 2];
    let mut total = 0.0;
    for idx in 0..basis.len() {
        let (d0, d1) = basis.state(idx);
        if d0.step == 1 && d1.step == 1 {
            let w = state[idx] * state[idx];
            p[d0.value as usize][d1.value as usize] += w;
            total += w;
        }
    }
    if total <= 0.0 {
        return Err(Error::EmptyReadout);
    }
    for row in &mut p {
        for v in row {
            *v /= total;
        }
    }
    Ok(p)
}
