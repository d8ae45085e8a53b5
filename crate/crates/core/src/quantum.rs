//! Finite-dimensional quantum kernel: pure and mixed states, observables,
//! tensor products, unitary action, partial traces, entropy and Born-rule
//! sampling.
//!
//! Subsystems are ordered left to right: subsystem 0 is the leftmost tensor
//! factor and the most significant digit of a basis index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance for algebraic identities (norms, traces, hermiticity).
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Tolerance for spectral quantities (eigenvalues, projector sums).
pub const SPECTRAL_TOL: f64 = 1e-10;

pub const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Pauli X.
pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

/// Pauli Y.
pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

/// Pauli Z.
pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// CNOT with subsystem 0 as control.
pub fn cnot() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = c(1., 0.);
    m[(1, 1)] = c(1., 0.);
    m[(2, 3)] = c(1., 0.);
    m[(3, 2)] = c(1., 0.);
    m
}

/// Hadamard.
pub fn hadamard() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c(h, 0.), c(h, 0.), c(h, 0.), c(-h, 0.)])
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Largest entrywise deviation of `m` from its adjoint.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let sym = (m + m.adjoint()) * c(0.5, 0.0);
    let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::InvalidState(format!("bad subsystem dims {dims:?}")));
    }
    let prod: usize = dims.iter().product();
    if prod != len {
        return Err(Error::DimensionMismatch(format!(
            "dims {dims:?} multiply to {prod}, expected {len}"
        )));
    }
    Ok(())
}

/// Normalised pure state over an ordered list of subsystems.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
    dims: Vec<usize>,
}

impl StateVector {
    pub fn new(amplitudes: CVector, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims, amplitudes.len())?;
        let norm2 = amplitudes.norm_squared();
        if (norm2 - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(Error::InvalidState(format!("squared norm {norm2} != 1")));
        }
        Ok(Self { amplitudes, dims })
    }

    /// Builds a state from unnormalised amplitudes.
    pub fn normalized(amplitudes: CVector, dims: Vec<usize>) -> Result<Self> {
        let n = amplitudes.norm();
        if n == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        Self::new(amplitudes / c(n, 0.0), dims)
    }

    pub fn from_slice(amplitudes: &[C64], dims: Vec<usize>) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes), dims)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(dims: Vec<usize>, index: usize) -> Result<Self> {
        let dim: usize = dims.iter().product();
        if index >= dim {
            return Err(Error::OutOfRange(format!("basis index {index} >= {dim}")));
        }
        let mut v = CVector::zeros(dim);
        v[index] = c(1.0, 0.0);
        Self::new(v, dims)
    }

    /// Qubit `a|0⟩ + b|1⟩`.
    pub fn qubit(a: C64, b: C64) -> Result<Self> {
        Self::from_slice(&[a, b], vec![2])
    }

    /// `|+⟩`.
    pub fn plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(c(h, 0.), c(h, 0.)).expect("normalised")
    }

    /// Haar-like random state (normalised complex Gaussian vector).
    pub fn random<R: Rng + ?Sized>(dims: Vec<usize>, rng: &mut R) -> Self {
        let dim: usize = dims.iter().product();
        let v = CVector::from_fn(dim, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        Self::normalized(v, dims).expect("non-zero gaussian vector")
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator {
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
            dims: self.dims.clone(),
        }
    }
}

/// Mixed state: Hermitian, unit-trace, positive semi-definite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
    dims: Vec<usize>,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix, dims: Vec<usize>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidState("density matrix must be square".into()));
        }
        check_dims(&dims, matrix.nrows())?;
        let herm = hermitian_deviation(&matrix);
        if herm > ALGEBRAIC_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:.3e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > ALGEBRAIC_TOL || tr.im.abs() > ALGEBRAIC_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min = hermitian_eigenvalues(&matrix).first().copied().unwrap_or(0.0);
        if min < -ALGEBRAIC_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { matrix, dims })
    }

    /// Skips validation; for results of operations that preserve the invariants.
    pub(crate) fn from_parts(matrix: CMatrix, dims: Vec<usize>) -> Self {
        Self { matrix, dims }
    }

    pub fn maximally_mixed(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidState("dimension 0".into()));
        }
        Ok(Self {
            matrix: CMatrix::identity(n, n) * c(1.0 / n as f64, 0.0),
            dims: vec![n],
        })
    }

    /// Diagonal state in the computational basis.
    pub fn diagonal(probs: &[f64], dims: Vec<usize>) -> Result<Self> {
        let m = CMatrix::from_diagonal(&CVector::from_iterator(probs.len(), probs.iter().map(|&p| c(p, 0.0))));
        Self::new(m, dims)
    }

    /// Random state of the given rank: `A A† / Tr` with Gaussian `A`.
    pub fn random<R: Rng + ?Sized>(dims: Vec<usize>, rank: usize, rng: &mut R) -> Self {
        let dim: usize = dims.iter().product();
        let rank = rank.clamp(1, dim);
        let a = CMatrix::from_fn(dim, rank, |_, _| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let m = &a * a.adjoint();
        let tr = m.trace();
        let mut m = m / tr;
        // symmetrise away rounding
        m = (&m + m.adjoint()) * c(0.5, 0.0);
        Self { matrix: m, dims }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with_pure(&self, psi: &StateVector) -> f64 {
        let v = psi.amplitudes();
        (v.adjoint() * &self.matrix * v)[(0, 0)].re
    }
}

/// Composite-system construction.
///
/// Implemented separately for pure and mixed states, so mixing the two kinds
/// is rejected at compile time.
pub trait TensorProduct: Sized {
    fn tensor(&self, other: &Self) -> Self;
}

impl TensorProduct for StateVector {
    fn tensor(&self, other: &Self) -> Self {
        let amplitudes = self.amplitudes.kronecker(&other.amplitudes);
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        StateVector { amplitudes, dims }
    }
}

impl TensorProduct for DensityOperator {
    fn tensor(&self, other: &Self) -> Self {
        let matrix = self.matrix.kronecker(&other.matrix);
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        DensityOperator { matrix, dims }
    }
}

pub fn tensor_product<T: TensorProduct>(a: &T, b: &T) -> T {
    a.tensor(b)
}

/// Row-major strides for a list of subsystem dimensions.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Deviation of `u†u` from the identity (max entry).
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let prod = u.adjoint() * u;
    let id = CMatrix::identity(u.nrows(), u.ncols());
    (prod - id).iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Applies `u` to the listed subsystems (in the listed order) of `state`.
pub fn apply_unitary(state: &StateVector, u: &CMatrix, targets: &[usize]) -> Result<StateVector> {
    let dims = state.dims();
    if targets.is_empty() {
        return Err(Error::EmptySelection);
    }
    for (k, &t) in targets.iter().enumerate() {
        if t >= dims.len() {
            return Err(Error::SubsystemOutOfRange {
                index: t,
                count: dims.len(),
            });
        }
        if targets[..k].contains(&t) {
            return Err(Error::DimensionMismatch(format!("subsystem {t} targeted twice")));
        }
    }
    let sub_dim: usize = targets.iter().map(|&t| dims[t]).product();
    if u.nrows() != sub_dim || u.ncols() != sub_dim {
        return Err(Error::DimensionMismatch(format!(
            "unitary is {}x{}, targets span dimension {sub_dim}",
            u.nrows(),
            u.ncols()
        )));
    }
    let deviation = unitarity_deviation(u);
    if deviation > SPECTRAL_TOL {
        return Err(Error::NotUnitary { deviation });
    }

    let st = strides(dims);
    let sub_dims: Vec<usize> = targets.iter().map(|&t| dims[t]).collect();
    let sub_st = strides(&sub_dims);
    let amps = state.amplitudes();
    let mut out = CVector::zeros(amps.len());
    // offset of sub-index within the full index, relative to a base with
    // all targeted digits zero
    let sub_offset: Vec<usize> = (0..sub_dim)
        .map(|s| {
            targets
                .iter()
                .enumerate()
                .map(|(k, &t)| (s / sub_st[k]) % sub_dims[k] * st[t])
                .sum()
        })
        .collect();
    for base in 0..amps.len() {
        let is_base = targets.iter().all(|&t| (base / st[t]).is_multiple_of(dims[t]));
        if !is_base {
            continue;
        }
        for (row, &ro) in sub_offset.iter().enumerate() {
            let mut acc = c(0.0, 0.0);
            for (col, &co) in sub_offset.iter().enumerate() {
                acc += u[(row, col)] * amps[base + co];
            }
            out[base + ro] = acc;
        }
    }
    Ok(StateVector {
        amplitudes: out,
        dims: dims.to_vec(),
    })
}

/// Reduced state on the subsystems in `keep` (kept in ascending order).
pub fn partial_trace(rho: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    let dims = rho.dims();
    if keep.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::SubsystemOutOfRange {
            index: bad,
            count: dims.len(),
        });
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let st = strides(dims);
    let keep_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let tr_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let offsets = |sel: &[usize], sel_dims: &[usize]| -> Vec<usize> {
        let n: usize = sel_dims.iter().product();
        let ss = strides(sel_dims);
        (0..n)
            .map(|s| {
                sel.iter()
                    .enumerate()
                    .map(|(k, &t)| (s / ss[k]) % sel_dims[k] * st[t])
                    .sum()
            })
            .collect()
    };
    let keep_off = offsets(&keep, &keep_dims);
    let tr_off = offsets(&traced, &tr_dims);
    let m = rho.matrix();
    let n = keep_off.len();
    let out = CMatrix::from_fn(n, n, |i, j| {
        tr_off.iter().map(|&t| m[(keep_off[i] + t, keep_off[j] + t)]).sum()
    });
    Ok(DensityOperator::from_parts(out, keep_dims))
}

/// Reduced state of a pure state without forming the full density matrix.
pub fn partial_trace_pure(psi: &StateVector, keep: &[usize]) -> Result<DensityOperator> {
    let dims = psi.dims();
    if keep.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::SubsystemOutOfRange {
            index: bad,
            count: dims.len(),
        });
    }
    let st = strides(dims);
    let keep_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let n: usize = keep_dims.iter().product();
    let keep_st = strides(&keep_dims);
    // reshape amplitudes into (kept index, traced index) rows
    let mut rows: Vec<Vec<C64>> = vec![Vec::with_capacity(psi.dim() / n); n];
    for (idx, &a) in psi.amplitudes().iter().enumerate() {
        let k: usize = keep
            .iter()
            .enumerate()
            .map(|(q, &sub)| (idx / st[sub]) % dims[sub] * keep_st[q])
            .sum();
        rows[k].push(a);
    }
    let out = CMatrix::from_fn(n, n, |i, j| {
        rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b.conj()).sum()
    });
    Ok(DensityOperator::from_parts(out, keep_dims))
}

/// Von Neumann entropy in nats; eigenvalues ≤ 1e-12 contribute nothing.
pub fn von_neumann_entropy(rho: &DensityOperator) -> f64 {
    rho.eigenvalues()
        .into_iter()
        .filter(|&l| l > ALGEBRAIC_TOL)
        .map(|l| -l * l.ln())
        .sum::<f64>()
        .max(0.0)
}

/// Hermitian observable with its spectral decomposition. Degenerate
/// eigenvalues share one projector.
#[derive(Clone, Debug)]
pub struct Observable {
    matrix: CMatrix,
    eigenvalues: Vec<f64>,
    projectors: Vec<CMatrix>,
}

impl Observable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch("observable must be square".into()));
        }
        let herm = hermitian_deviation(&matrix);
        if herm > ALGEBRAIC_TOL {
            return Err(Error::InvalidState(format!(
                "observable not Hermitian (deviation {herm:.3e})"
            )));
        }
        let n = matrix.nrows();
        let (values, vectors) = hermitian_eigen(&matrix);
        let mut eigenvalues: Vec<f64> = Vec::new();
        let mut projectors: Vec<CMatrix> = Vec::new();
        for (k, &lambda) in values.iter().enumerate() {
            let v = vectors.column(k);
            let p = v * v.adjoint();
            match eigenvalues.last() {
                Some(&last) if (lambda - last).abs() <= SPECTRAL_TOL => {
                    let idx = projectors.len() - 1;
                    projectors[idx] += p;
                }
                _ => {
                    eigenvalues.push(lambda);
                    projectors.push(p);
                }
            }
        }
        // largest eigenvalue first, so index 0 is "+1" for Pauli-type observables
        eigenvalues.reverse();
        projectors.reverse();
        let sum = projectors.iter().fold(CMatrix::zeros(n, n), |acc, p| acc + p);
        let dev = (sum - CMatrix::identity(n, n))
            .iter()
            .fold(0.0_f64, |a, z| a.max(z.norm()));
        if dev > SPECTRAL_TOL {
            return Err(Error::InvalidState(format!(
                "projectors do not resolve the identity (deviation {dev:.3e})"
            )));
        }
        Ok(Self {
            matrix,
            eigenvalues,
            projectors,
        })
    }

    pub fn pauli_z() -> Self {
        Self::new(sigma_z()).expect("Hermitian")
    }

    pub fn pauli_x() -> Self {
        Self::new(sigma_x()).expect("Hermitian")
    }

    /// Spin along `cos θ σz + sin θ σx`.
    pub fn along_xz(theta: f64) -> Self {
        let m = sigma_z() * c(theta.cos(), 0.0) + sigma_x() * c(theta.sin(), 0.0);
        Self::new(m).expect("Hermitian")
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Distinct eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }
}

/// One indeterministic measurement outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeSample {
    pub eigenvalue: f64,
    pub index: usize,
    pub probability: f64,
}

/// Born weights `Tr[ρ P_k]` for each distinct eigenvalue of `obs`.
pub fn born_probabilities(rho: &DensityOperator, obs: &Observable) -> Result<Vec<(f64, f64)>> {
    if rho.dim() != obs.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {} vs observable dimension {}",
            rho.dim(),
            obs.dim()
        )));
    }
    let m = rho.matrix();
    Ok(obs
        .eigenvalues()
        .iter()
        .zip(obs.projectors())
        .map(|(&ev, p)| {
            // Tr[ρP] = Σ_ij ρ_ij P_ji
            let mut tr = 0.0;
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    tr += (m[(i, j)] * p[(j, i)]).re;
                }
            }
            (ev, tr.clamp(0.0, 1.0))
        })
        .collect())
}

/// Draws one outcome according to the Born weights.
pub fn sample_outcome<R: Rng + ?Sized>(rho: &DensityOperator, obs: &Observable, rng: &mut R) -> Result<OutcomeSample> {
    let probs = born_probabilities(rho, obs)?;
    let weights: Vec<f64> = probs.iter().map(|&(_, p)| p).collect();
    let index = sample_index(&weights, rng);
    Ok(OutcomeSample {
        eigenvalue: probs[index].0,
        index,
        probability: probs[index].1,
    })
}

/// Inverse-CDF draw over (possibly slightly unnormalised) weights. Zero-weight
/// entries are never returned.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last_positive = k;
        acc += w;
        if u < acc {
            return k;
        }
    }
    last_positive
}

/// Spectral norm of `[H, O]`; zero iff the interaction respects the
/// commutativity criterion for `obs`.
pub fn commutator_defect(h: &CMatrix, obs: &Observable) -> Result<f64> {
    let o = obs.matrix();
    if h.nrows() != o.nrows() || h.ncols() != o.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "H is {}x{}, observable is {}x{}",
            h.nrows(),
            h.ncols(),
            o.nrows(),
            o.ncols()
        )));
    }
    Ok(spectral_norm(&(h * o - o * h)))
}

/// Embeds a single-subsystem operator at position `site` of `dims`.
pub fn embed(op: &CMatrix, site: usize, dims: &[usize]) -> CMatrix {
    let mut acc = CMatrix::identity(1, 1);
    for (k, &d) in dims.iter().enumerate() {
        let f = if k == site { op.clone() } else { CMatrix::identity(d, d) };
        acc = acc.kronecker(&f);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

    fn assert_close(a: C64, b: C64, tol: f64) {
        assert!((a - b).norm() < tol, "{a} vs {b}");
    }

    #[test]
    fn tensor_of_basis_states() {
        let z = StateVector::basis(vec![2], 0).unwrap();
        let zz = tensor_product(&z, &z);
        assert_eq!(zz.dims(), &[2, 2]);
        let expect = [1.0, 0.0, 0.0, 0.0];
        for (a, e) in zz.amplitudes().iter().zip(expect) {
            assert_close(*a, c(e, 0.0), 1e-15);
        }
    }

    #[test]
    fn tensor_shapes_and_distributivity() {
        let mut r = rng::seeded(1);
        let a = StateVector::random(vec![2], &mut r);
        let b = StateVector::random(vec![3], &mut r);
        let ab = a.tensor(&b);
        assert_eq!(ab.dims(), &[2, 3]);
        assert_eq!(ab.dim(), 6);
        assert!((ab.amplitudes().norm_squared() - 1.0).abs() < 1e-12);

        let plus0 = StateVector::plus().tensor(&StateVector::basis(vec![2], 0).unwrap());
        let expect = [FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2, 0.0];
        for (a, e) in plus0.amplitudes().iter().zip(expect) {
            assert_close(*a, c(e, 0.0), 1e-15);
        }
    }

    #[test]
    fn unitary_examples() {
        let mut r = rng::seeded(2);
        let psi = StateVector::random(vec![2, 2], &mut r);
        let id = CMatrix::identity(2, 2);
        assert_eq!(apply_unitary(&psi, &id, &[1]).unwrap(), psi);

        let zero = StateVector::basis(vec![2], 0).unwrap();
        let one = apply_unitary(&zero, &sigma_x(), &[0]).unwrap();
        assert_close(one.amplitudes()[1], c(1.0, 0.0), 1e-15);

        let plus0 = StateVector::plus().tensor(&zero);
        let bell = apply_unitary(&plus0, &cnot(), &[0, 1]).unwrap();
        let expect = [FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2];
        for (a, e) in bell.amplitudes().iter().zip(expect) {
            assert_close(*a, c(e, 0.0), 1e-15);
        }
    }

    #[test]
    fn unitary_on_reversed_targets_matches_swapped_control() {
        // CNOT with targets [1, 0] uses subsystem 1 as control
        let s = StateVector::basis(vec![2, 2], 1).unwrap(); // |01>
        let out = apply_unitary(&s, &cnot(), &[1, 0]).unwrap();
        assert_close(out.amplitudes()[3], c(1.0, 0.0), 1e-15); // |11>
    }

    #[test]
    fn unitary_errors() {
        let s = StateVector::basis(vec![2, 2], 0).unwrap();
        let not_u = CMatrix::from_element(2, 2, c(1.0, 0.0));
        assert!(matches!(apply_unitary(&s, &not_u, &[0]), Err(Error::NotUnitary { .. })));
        assert!(matches!(
            apply_unitary(&s, &sigma_x(), &[2]),
            Err(Error::SubsystemOutOfRange { index: 2, count: 2 })
        ));
        assert!(matches!(
            apply_unitary(&s, &sigma_x(), &[0, 1]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn partial_trace_examples() {
        let mut r = rng::seeded(3);
        let ra = DensityOperator::random(vec![2], 2, &mut r);
        let rb = DensityOperator::random(vec![3], 2, &mut r);
        let red = partial_trace(&ra.tensor(&rb), &[0]).unwrap();
        assert!((red.matrix() - ra.matrix()).iter().all(|z| z.norm() < 1e-12));

        let bell = apply_unitary(
            &StateVector::plus().tensor(&StateVector::basis(vec![2], 0).unwrap()),
            &cnot(),
            &[0, 1],
        )
        .unwrap()
        .to_density();
        let half = partial_trace(&bell, &[0]).unwrap();
        let expect = DensityOperator::maximally_mixed(2).unwrap();
        assert!((half.matrix() - expect.matrix()).iter().all(|z| z.norm() < 1e-12));

        assert!(matches!(partial_trace(&bell, &[]), Err(Error::EmptySelection)));
    }

    #[test]
    fn partial_trace_two_env_spins_matches_hand_contraction() {
        // target ⊗ e1 ⊗ e2, generic pure state; oracle contracts the
        // environment indices by explicit loops over a 3-index array
        let mut r = rng::seeded(4);
        let psi = StateVector::random(vec![2, 2, 2], &mut r);
        let amp = |t: usize, e1: usize, e2: usize| psi.amplitudes()[t * 4 + e1 * 2 + e2];
        let mut oracle = [[c(0.0, 0.0); 2]; 2];
        for (t, row) in oracle.iter_mut().enumerate() {
            for (s, cell) in row.iter_mut().enumerate() {
                for e1 in 0..2 {
                    for e2 in 0..2 {
                        *cell += amp(t, e1, e2) * amp(s, e1, e2).conj();
                    }
                }
            }
        }
        let red = partial_trace(&psi.to_density(), &[0]).unwrap();
        for (t, row) in oracle.iter().enumerate() {
            for (s, &want) in row.iter().enumerate() {
                assert_close(red.matrix()[(t, s)], want, 1e-12);
            }
        }
        // keeping the middle subsystem only
        let mid = partial_trace(&psi.to_density(), &[1]).unwrap();
        assert!((mid.matrix().trace().re - 1.0).abs() < 1e-12);
        assert!(hermitian_deviation(mid.matrix()) < 1e-12);
        for keep in [&[0usize][..], &[1], &[2], &[0, 2], &[1, 2]] {
            let a = partial_trace(&psi.to_density(), keep).unwrap();
            let b = partial_trace_pure(&psi, keep).unwrap();
            assert!((a.matrix() - b.matrix()).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn entropy_anchors() {
        let mut r = rng::seeded(5);
        let pure = StateVector::random(vec![3], &mut r).to_density();
        assert!(von_neumann_entropy(&pure).abs() < 1e-10);
        for n in [2usize, 3, 5, 8] {
            let mm = DensityOperator::maximally_mixed(n).unwrap();
            assert!((von_neumann_entropy(&mm) - (n as f64).ln()).abs() < 1e-10);
        }
        let bell = apply_unitary(
            &StateVector::plus().tensor(&StateVector::basis(vec![2], 0).unwrap()),
            &cnot(),
            &[0, 1],
        )
        .unwrap()
        .to_density();
        let half = partial_trace(&bell, &[1]).unwrap();
        assert!((von_neumann_entropy(&half) - LN_2).abs() < 1e-10);
    }

    #[test]
    fn born_examples() {
        let z = Observable::pauli_z();
        let zero = StateVector::basis(vec![2], 0).unwrap().to_density();
        let p = born_probabilities(&zero, &z).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p[0].0 - 1.0).abs() < 1e-12 && (p[0].1 - 1.0).abs() < 1e-12);
        assert!((p[1].0 + 1.0).abs() < 1e-12 && p[1].1.abs() < 1e-12);

        let plus = StateVector::plus().to_density();
        let p = born_probabilities(&plus, &z).unwrap();
        assert!((p[0].1 - 0.5).abs() < 1e-12 && (p[1].1 - 0.5).abs() < 1e-12);

        let diag = DensityOperator::diagonal(&[0.3, 0.7], vec![2]).unwrap();
        let p = born_probabilities(&diag, &z).unwrap();
        assert!((p[0].1 - 0.3).abs() < 1e-12 && (p[1].1 - 0.7).abs() < 1e-12);

        let three = DensityOperator::maximally_mixed(3).unwrap();
        assert!(matches!(
            born_probabilities(&three, &z),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn degenerate_eigenvalues_aggregate() {
        // Z ⊗ I has two doubly-degenerate eigenspaces
        let obs = Observable::new(kron(&sigma_z(), &CMatrix::identity(2, 2))).unwrap();
        assert_eq!(obs.eigenvalues().len(), 2);
        let rho = DensityOperator::maximally_mixed(4).unwrap();
        let p = born_probabilities(&rho, &obs).unwrap();
        assert!((p[0].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sampling_examples() {
        let z = Observable::pauli_z();
        let zero = StateVector::basis(vec![2], 0).unwrap().to_density();
        for seed in 0..200 {
            let s = sample_outcome(&zero, &z, &mut rng::seeded(seed)).unwrap();
            assert_eq!(s.index, 0);
            assert_eq!(s.eigenvalue, 1.0);
        }

        let plus = StateVector::plus().to_density();
        let hits = (0..10_000u64)
            .filter(|&seed| sample_outcome(&plus, &z, &mut rng::seeded(seed)).unwrap().eigenvalue > 0.0)
            .count();
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.5).abs() < 0.02, "frequency {freq}");

        let a = sample_outcome(&plus, &z, &mut rng::seeded(99)).unwrap();
        let b = sample_outcome(&plus, &z, &mut rng::seeded(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn commutator_examples() {
        // σ_x-type interaction on target ⊗ one env spin commutes with σ_x on the target
        let h = kron(&sigma_x(), &sigma_x()) * c(0.37, 0.0);
        let obs = Observable::new(kron(&sigma_x(), &CMatrix::identity(2, 2))).unwrap();
        assert!(commutator_defect(&h, &obs).unwrap() < 1e-10);

        let d = commutator_defect(&sigma_z(), &Observable::pauli_x()).unwrap();
        assert!((d - 2.0).abs() < 1e-10);

        let mut r = rng::seeded(6);
        let m = DensityOperator::random(vec![3], 3, &mut r);
        let id = Observable::new(CMatrix::identity(3, 3)).unwrap();
        assert!(commutator_defect(m.matrix(), &id).unwrap() < 1e-10);
        assert!(commutator_defect(m.matrix(), &Observable::pauli_z()).is_err());
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(StateVector::from_slice(&[c(1.0, 0.0), c(1.0, 0.0)], vec![2]).is_err());
        assert!(StateVector::from_slice(&[c(1.0, 0.0), c(0.0, 0.0)], vec![3]).is_err());
        assert!(DensityOperator::diagonal(&[0.6, 0.6], vec![2]).is_err());
        assert!(DensityOperator::diagonal(&[1.2, -0.2], vec![2]).is_err());
        let non_herm = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.), c(0.1, 0.), c(0.0, 0.), c(0.5, 0.)]);
        assert!(DensityOperator::new(non_herm, vec![2]).is_err());
    }
}
