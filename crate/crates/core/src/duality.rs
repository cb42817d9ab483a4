//! Channel-state duality: vectorization, Kraus and Choi representations,
//! partial traces, Born probabilities and fidelity functionals.
//!
//! Basis convention: the Choi matrix acts on `input ⊗ output` and the row
//! index of `|ī j⟩` is `i*d + j` (zero based). With this ordering `vec(X)` is
//! the column stacking of `X`.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, ZERO};
use crate::tomo::{ProbTable, TomographyScheme};
use nalgebra::Matrix3;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const CP_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const TP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// The input factor (first tensor slot).
    First,
    /// The output factor (second tensor slot).
    Second,
}

#[derive(Clone, Debug)]
pub struct KrausSet {
    dim: usize,
    ops: Vec<CMat>,
}

impl KrausSet {
    pub fn new(ops: Vec<CMat>) -> Result<Self> {
        let first = ops.first().ok_or(Error::EmptyKraus)?;
        let dim = first.nrows();
        for op in &ops {
            if op.nrows() != op.ncols() {
                return Err(Error::NotSquare { rows: op.nrows(), cols: op.ncols() });
            }
            if op.nrows() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: op.nrows() });
            }
        }
        Ok(KrausSet { dim, ops })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn operators(&self) -> &[CMat] {
        &self.ops
    }

    /// Frobenius distance of `Σ E†E` from the identity.
    pub fn completeness_defect(&self) -> f64 {
        let mut sum = CMat::zeros(self.dim, self.dim);
        for e in &self.ops {
            sum += e.adjoint() * e;
        }
        linalg::frobenius(&(sum - linalg::identity(self.dim)))
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.completeness_defect() <= 1e-10
    }

    /// Direct action `Σ E X E†`.
    pub fn apply(&self, x: &CMat) -> Result<CMat> {
        if x.shape() != (self.dim, self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.nrows() });
        }
        let mut out = CMat::zeros(self.dim, self.dim);
        for e in &self.ops {
            out += e * x * e.adjoint();
        }
        Ok(out)
    }
}

/// Choi matrix of a completely positive map on a `d`-level system.
#[derive(Clone, Debug)]
pub struct ChoiState {
    dim: usize,
    matrix: CMat,
    tp: bool,
}

impl ChoiState {
    /// Validates Hermiticity, positivity and trace `d`.
    pub fn new(matrix: CMat) -> Result<Self> {
        let (r, cc) = matrix.shape();
        if r != cc {
            return Err(Error::NotSquare { rows: r, cols: cc });
        }
        let dim = perfect_sqrt(r)?;
        let asym = linalg::hermitian_defect(&matrix);
        if asym > HERMITIAN_TOL * (1.0 + linalg::frobenius(&matrix)) {
            return Err(Error::NotHermitian(asym));
        }
        let matrix = linalg::symmetrize(&matrix);
        let tr = linalg::trace(&matrix).re;
        if (tr - dim as f64).abs() > TRACE_TOL {
            return Err(Error::BadTrace { expected: dim as f64, got: tr });
        }
        let min = linalg::min_eigenvalue(&matrix);
        if min < -CP_TOL {
            return Err(Error::NotCompletelyPositive(min));
        }
        Ok(Self::assemble(dim, matrix))
    }

    /// Skips the eigenvalue check; for matrices that are positive by construction.
    pub fn from_trusted(dim: usize, matrix: CMat) -> Self {
        Self::assemble(dim, matrix)
    }

    fn assemble(dim: usize, matrix: CMat) -> Self {
        let tp = tp_defect_of(&matrix, dim) <= TP_TOL;
        ChoiState { dim, matrix, tp }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.tp
    }

    pub fn tp_defect(&self) -> f64 {
        tp_defect_of(&self.matrix, self.dim)
    }

    /// Frobenius distance of `tr₁ρ` from the identity.
    pub fn unital_defect(&self) -> f64 {
        let t = partial_trace(&self.matrix, Slot::First).expect("square by construction");
        linalg::frobenius(&(t - linalg::identity(self.dim)))
    }

    fn require_tp(&self) -> Result<()> {
        if self.tp {
            Ok(())
        } else {
            Err(Error::NotTracePreserving(self.tp_defect()))
        }
    }
}

fn tp_defect_of(m: &CMat, d: usize) -> f64 {
    let t = partial_trace(m, Slot::Second).expect("square by construction");
    linalg::frobenius(&(t - linalg::identity(d)))
}

fn perfect_sqrt(n: usize) -> Result<usize> {
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n || d == 0 {
        return Err(Error::DimensionMismatch { expected: d * d, got: n });
    }
    Ok(d)
}

pub fn vectorize(x: &CMat) -> Result<CVec> {
    let (r, cc) = x.shape();
    if r != cc {
        return Err(Error::NotSquare { rows: r, cols: cc });
    }
    Ok(CVec::from_iterator(r * r, x.iter().cloned()))
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &CVec) -> Result<CMat> {
    let d = perfect_sqrt(v.len())?;
    Ok(CMat::from_column_slice(d, d, v.as_slice()))
}

pub fn choi_from_kraus(k: &KrausSet) -> Result<ChoiState> {
    let n = k.dim * k.dim;
    let mut rho = CMat::zeros(n, n);
    for e in &k.ops {
        let v = vectorize(e)?;
        rho += &v * v.adjoint();
    }
    let tr = linalg::trace(&rho).re;
    if (tr - k.dim as f64).abs() > TRACE_TOL {
        return Err(Error::BadTrace { expected: k.dim as f64, got: tr });
    }
    Ok(ChoiState::from_trusted(k.dim, rho))
}

pub fn kraus_from_choi(rho: &ChoiState) -> Result<KrausSet> {
    let (vals, vecs) = linalg::hermitian_eigen(&rho.matrix);
    let mut ops = Vec::new();
    for (j, &lam) in vals.iter().enumerate().rev() {
        if lam < -CP_TOL {
            return Err(Error::NotCompletelyPositive(lam));
        }
        if lam < 1e-12 {
            continue;
        }
        let v = vecs.column(j).into_owned() * c(lam.sqrt(), 0.0);
        ops.push(unvectorize(&v)?);
    }
    KrausSet::new(ops)
}

pub fn partial_trace(m: &CMat, slot: Slot) -> Result<CMat> {
    let (r, cc) = m.shape();
    if r != cc {
        return Err(Error::NotSquare { rows: r, cols: cc });
    }
    let d = perfect_sqrt(r)?;
    let mut out = CMat::zeros(d, d);
    for x in 0..d {
        for y in 0..d {
            let mut acc = ZERO;
            for t in 0..d {
                acc += match slot {
                    Slot::First => m[(t * d + x, t * d + y)],
                    Slot::Second => m[(x * d + t, y * d + t)],
                };
            }
            out[(x, y)] = acc;
        }
    }
    Ok(out)
}

/// `E(X) = tr₁{ρ (Xᵀ ⊗ 1)}`.
pub fn apply_channel(rho: &ChoiState, x: &CMat) -> Result<CMat> {
    let d = rho.dim;
    if x.shape() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, got: x.nrows() });
    }
    let m = &rho.matrix;
    let mut out = CMat::zeros(d, d);
    for a in 0..d {
        for a2 in 0..d {
            let mut acc = ZERO;
            for b in 0..d {
                for b2 in 0..d {
                    acc += m[(b * d + a, b2 * d + a2)] * x[(b, b2)];
                }
            }
            out[(a, a2)] = acc;
        }
    }
    Ok(out)
}

/// `Λ = ρᵢᵀ ⊗ Π`.
pub fn pseudo_povm_element(input: &CMat, effect: &CMat) -> CMat {
    input.transpose().kronecker(effect)
}

/// `tr{ρ Λ}` for a Hermitian pair.
pub fn expectation(rho: &CMat, lambda: &CMat) -> f64 {
    let mut acc = 0.0;
    for i in 0..rho.nrows() {
        for j in 0..rho.ncols() {
            acc += (rho[(i, j)] * lambda[(j, i)]).re;
        }
    }
    acc
}

pub fn born_probabilities(rho: &ChoiState, scheme: &TomographyScheme) -> Result<ProbTable> {
    rho.require_tp()?;
    if scheme.dim() != rho.dim {
        return Err(Error::DimensionMismatch { expected: scheme.dim(), got: rho.dim });
    }
    Ok(scheme
        .pseudo_povm()
        .iter()
        .map(|row| row.iter().map(|l| expectation(&rho.matrix, l)).collect())
        .collect())
}

/// `⟨⟨1|ρ|1⟩⟩`, the overlap with the maximally entangled vector.
pub fn entanglement_overlap(m: &CMat, d: usize) -> f64 {
    let mut acc = ZERO;
    for i in 0..d {
        for j in 0..d {
            acc += m[(i * d + i, j * d + j)];
        }
    }
    acc.re
}

/// Haar-averaged fidelity `[1 + (d-1)q]/d`.
pub fn avg_fidelity(rho: &ChoiState) -> Result<f64> {
    rho.require_tp()?;
    Ok(avg_fidelity_of(&rho.matrix, rho.dim))
}

pub(crate) fn avg_fidelity_of(m: &CMat, d: usize) -> f64 {
    let df = d as f64;
    let q = (entanglement_overlap(m, d) - 1.0) / (df * df - 1.0);
    (1.0 + (df - 1.0) * q) / df
}

/// `½(1 + μ_min)` with `μ_min` the smallest eigenvalue of `½(M + Mᵀ)`.
pub fn min_fidelity_unital_qubit(rho: &ChoiState) -> Result<f64> {
    let m = crate::unital_qubit::bloch_map(rho)?;
    Ok(min_fidelity_of_bloch(&m.0))
}

pub fn min_fidelity_of_bloch(m: &Matrix3<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let mu = sym.symmetric_eigenvalues().min();
    0.5 * (1.0 + mu)
}

pub fn identity_channel(d: usize) -> ChoiState {
    let v = vectorize(&linalg::identity(d)).expect("square");
    ChoiState::from_trusted(d, &v * v.adjoint())
}

pub fn depolarizing_channel(d: usize) -> ChoiState {
    ChoiState::from_trusted(d, CMat::identity(d * d, d * d) * c(1.0 / d as f64, 0.0))
}

pub fn amplitude_damping(gamma: f64) -> Result<KrausSet> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidProbability(gamma));
    }
    let e0 = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), ZERO, ZERO, c((1.0 - gamma).sqrt(), 0.0)]);
    let e1 = CMat::from_row_slice(2, 2, &[ZERO, c(gamma.sqrt(), 0.0), ZERO, ZERO]);
    KrausSet::new(vec![e0, e1])
}

/// Qutrit amplitude damping with decay rates from levels 1 and 2 to level 0.
pub fn qutrit_amplitude_damping(g1: f64, g2: f64) -> Result<KrausSet> {
    for g in [g1, g2] {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::InvalidProbability(g));
        }
    }
    let mut e0 = CMat::zeros(3, 3);
    e0[(0, 0)] = c(1.0, 0.0);
    e0[(1, 1)] = c((1.0 - g1).sqrt(), 0.0);
    e0[(2, 2)] = c((1.0 - g2).sqrt(), 0.0);
    let mut e1 = CMat::zeros(3, 3);
    e1[(0, 1)] = c(g1.sqrt(), 0.0);
    let mut e2 = CMat::zeros(3, 3);
    e2[(0, 2)] = c(g2.sqrt(), 0.0);
    KrausSet::new(vec![e0, e1, e2])
}

/// Pauli channel `(1-px-py-pz)X + px σx X σx + py σy X σy + pz σz X σz`.
pub fn pauli_channel(px: f64, py: f64, pz: f64) -> Result<ChoiState> {
    let pi = 1.0 - px - py - pz;
    for p in [px, py, pz, pi] {
        if !(-1e-15..=1.0 + 1e-15).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
    }
    Ok(ChoiState::from_trusted(2, pauli_choi_matrix([pi, px, py, pz])))
}

/// Choi matrix of the Pauli channel with weights `(pI, px, py, pz)`.
pub(crate) fn pauli_choi_matrix(w: [f64; 4]) -> CMat {
    let [pi, px, py, pz] = w;
    let r = |x: f64| c(x, 0.0);
    CMat::from_row_slice(
        4,
        4,
        &[
            r(pi + pz), ZERO, ZERO, r(pi - pz),
            ZERO, r(px + py), r(px - py), ZERO,
            ZERO, r(px - py), r(px + py), ZERO,
            r(pi - pz), ZERO, ZERO, r(pi + pz),
        ],
    )
}

pub fn dephasing_channel(p: f64) -> Result<ChoiState> {
    pauli_channel(0.0, 0.0, p)
}

/// Unitary channel `X ↦ U X U†`.
pub fn unitary_channel(u: &CMat) -> Result<ChoiState> {
    choi_from_kraus(&KrausSet::new(vec![u.clone()])?)
}

/// Convex combination of two Choi matrices.
pub fn mix(a: &ChoiState, b: &ChoiState, weight_a: f64) -> Result<ChoiState> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, got: b.dim });
    }
    let m = &a.matrix * c(weight_a, 0.0) + &b.matrix * c(1.0 - weight_a, 0.0);
    Ok(ChoiState::from_trusted(a.dim, m))
}
