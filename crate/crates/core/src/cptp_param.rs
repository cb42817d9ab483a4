//! Constraint-free angle parameterization of trace-preserving Choi states.
//!
//! A TP Choi state is written as `ρ = A†A` with `A` upper triangular and a
//! real last column. The columns of `A` are regrouped into `d` orthonormal
//! vectors `φ_1..φ_d` of length `d³`; after a fixed permutation each `φ_i`
//! only occupies the leading `K_i` rows, which lets the orthonormality
//! constraint be solved level by level with hyperspherical coordinates.

use crate::duality::ChoiState;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, C64, ZERO};
use crate::tomo::TomographyScheme;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Finite-difference step on angles.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct ParamStructure {
    dim: usize,
    k: Vec<usize>,
    perm: Vec<usize>,
    pos: Vec<usize>,
    zero_phase: Vec<usize>,
    level_len: Vec<usize>,
    level_offset: Vec<usize>,
    mask0: Vec<bool>,
    n_angles: usize,
}

pub fn build_structure(d: usize) -> Result<ParamStructure> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let n = d * d;
    let mut keyed: Vec<((usize, usize, usize), usize)> = Vec::with_capacity(d * n);
    for k in 0..d {
        for m in 0..n {
            let (k1, m1) = (k + 1, m + 1);
            let group = if m1 <= k1 { 0 } else { (m1 - k1).div_ceil(d) };
            keyed.push(((group, k, m), k * n + m));
        }
    }
    keyed.sort();
    let perm: Vec<usize> = keyed.iter().map(|&(_, s)| s).collect();
    let mut pos = vec![0; d * n];
    for (t, &s) in perm.iter().enumerate() {
        pos[s] = t;
    }
    let k: Vec<usize> = (1..=d).map(|i| i * n - d * (d - 1) / 2).collect();
    let kd = k[d - 1];
    let zero_phase: Vec<usize> = (0..kd).filter(|&t| perm[t] / n == d - 1).collect();
    let mut mask0 = vec![false; kd];
    for &t in &zero_phase {
        mask0[t] = true;
    }
    let level_len: Vec<usize> = (0..d).map(|l| k[d - 1 - l] - l).collect();
    let mut level_offset = Vec::with_capacity(d);
    let mut total = 0;
    for (l, &m) in level_len.iter().enumerate() {
        level_offset.push(total);
        total += 2 * m - 1 - if l == 0 { zero_phase.len() } else { 0 };
    }
    Ok(ParamStructure { dim: d, k, perm, pos, zero_phase, level_len, level_offset, mask0, n_angles: total })
}

impl ParamStructure {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `K_1..K_d`, the number of generically nonzero entries of each `φ_i`.
    pub fn k(&self) -> &[usize] {
        &self.k
    }

    /// Zero-based stacked index placed at each permuted position.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// One-based permuted labels, i.e. `P (1 2 … d³)ᵀ`.
    pub fn permuted_labels(&self) -> Vec<usize> {
        self.perm.iter().map(|s| s + 1).collect()
    }

    /// Zero-based positions of `ψ_d` whose phases are fixed to zero.
    pub fn zero_phase_positions(&self) -> &[usize] {
        &self.zero_phase
    }

    /// Length of the spherical vector handled at each level.
    pub fn level_lengths(&self) -> &[usize] {
        &self.level_len
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    fn level_slices<'a>(&self, angles: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let m = self.level_len[l];
        let start = self.level_offset[l];
        let end = if l + 1 < self.dim { self.level_offset[l + 1] } else { self.n_angles };
        let block = &angles[start..end];
        block.split_at(m - 1)
    }

    fn expand_phases(&self, l: usize, phis: &[f64]) -> Vec<f64> {
        let m = self.level_len[l];
        if l > 0 {
            return phis.to_vec();
        }
        let mut out = vec![0.0; m];
        let mut it = phis.iter();
        for (t, o) in out.iter_mut().enumerate() {
            if !self.mask0[t] {
                *o = *it.next().expect("phase count checked");
            }
        }
        out
    }

    fn check(&self, angles: &[f64]) -> Result<()> {
        if angles.len() != self.n_angles {
            return Err(Error::WrongAngleCount { expected: self.n_angles, got: angles.len() });
        }
        Ok(())
    }

    /// The columns `ψ_1..ψ_d` in permuted order, each of length `d³`.
    pub fn stacked_columns(&self, angles: &[f64]) -> Result<Vec<Vec<C64>>> {
        self.check(angles)?;
        Ok(self.build(angles, None))
    }

    fn build(&self, angles: &[f64], mut logvol: Option<&mut f64>) -> Vec<Vec<C64>> {
        let d = self.dim;
        let len = d * d * d;
        let m0 = self.level_len[0];
        let mut psi = vec![vec![ZERO; len]; d];
        // B = V₀ V₁ … stored column-major, M₀ rows.
        let mut basis: Vec<Vec<C64>> = Vec::new();
        let mut acc = 0.0;
        for l in 0..d {
            let m = self.level_len[l];
            let (thetas, phis) = self.level_slices(angles, l);
            let phases = self.expand_phases(l, phis);
            let trig = Trig::new(thetas, &phases);
            let x = trig.sphere();
            let col = &mut psi[d - 1 - l];
            if l == 0 {
                col[..m].copy_from_slice(&x);
            } else {
                for (j, b) in basis.iter().enumerate() {
                    let xj = x[j];
                    for r in 0..m0 {
                        col[r] += b[r] * xj;
                    }
                }
            }
            if logvol.is_some() {
                acc += trig.sphere_log_measure(if l == 0 { Some(&self.mask0) } else { None });
                for j in 1..(d - l) {
                    acc -= 2.0 * trig.log_partial_norm(self.k[j - 1] - l);
                }
            }
            if l + 1 < d {
                let v = trig.complement(self.level_len[l + 1]);
                basis = if l == 0 {
                    v.into_iter()
                        .map(|mut col| {
                            col.resize(m0, ZERO);
                            col
                        })
                        .collect()
                } else {
                    v.iter()
                        .map(|vc| {
                            let mut out = vec![ZERO; m0];
                            for (j, &w) in vc.iter().enumerate() {
                                if w != ZERO {
                                    for r in 0..m0 {
                                        out[r] += basis[j][r] * w;
                                    }
                                }
                            }
                            out
                        })
                        .collect()
                };
            }
        }
        if let Some(lv) = logvol.as_deref_mut() {
            *lv = acc;
        }
        psi
    }

    fn factor_from_psi(&self, psi: &[Vec<C64>]) -> Vec<C64> {
        let d = self.dim;
        let n = d * d;
        let mut a = vec![ZERO; n * n];
        for m in 0..n {
            for i in 0..d {
                for k in 0..d {
                    a[m * n + i * d + k] = psi[i][self.pos[k * n + m]];
                }
            }
        }
        a
    }

    /// Upper-triangular factor `A` (row-major `d² × d²`) with `ρ = A†A`.
    pub fn upper_factor(&self, angles: &[f64]) -> Result<Vec<C64>> {
        self.check(angles)?;
        Ok(self.factor_from_psi(&self.build(angles, None)))
    }

    /// The unpermuted stacked matrix `Φ` (`d³ × d`), orthonormal columns.
    pub fn phi_matrix(&self, angles: &[f64]) -> Result<CMat> {
        let psi = self.stacked_columns(angles)?;
        let len = self.dim * self.dim * self.dim;
        Ok(CMat::from_fn(len, self.dim, |s, i| psi[i][self.pos[s]]))
    }

    /// Row-major Choi matrix; no validation of the angle count.
    pub(crate) fn choi_flat(&self, angles: &[f64], out: &mut [C64]) {
        let a = self.factor_from_psi(&self.build(angles, None));
        gram_flat(&a, self.dim * self.dim, out);
    }

    /// Row-major Choi matrix together with [`ParamStructure::log_volume`].
    pub(crate) fn choi_flat_with_volume(&self, angles: &[f64], out: &mut [C64]) -> f64 {
        let mut lv = 0.0;
        let psi = self.build(angles, Some(&mut lv));
        let a = self.factor_from_psi(&psi);
        gram_flat(&a, self.dim * self.dim, out);
        lv + factor_log_measure(&a, self.dim * self.dim)
    }

    /// Logarithm of the Lebesgue volume element of the TP set in angle
    /// coordinates, up to an additive constant.
    ///
    /// Equals [`log_jacobian`] minus a constant that depends only on the
    /// tomography scheme; `−∞` on the measure-zero set where the map degenerates.
    pub fn log_volume(&self, angles: &[f64]) -> Result<f64> {
        self.check(angles)?;
        let n = self.dim * self.dim;
        let mut scratch = vec![ZERO; n * n];
        Ok(self.choi_flat_with_volume(angles, &mut scratch))
    }
}

/// `ρ = A†A` into a row-major buffer.
fn gram_flat(a: &[C64], n: usize, out: &mut [C64]) {
    for x in 0..n {
        for y in x..n {
            let mut acc = ZERO;
            for m in 0..=x.min(y) {
                acc += a[m * n + x].conj() * a[m * n + y];
            }
            out[x * n + y] = acc;
            if y != x {
                out[y * n + x] = acc.conj();
            } else {
                out[x * n + x] = c(acc.re, 0.0);
            }
        }
    }
}

/// Volume factor from `ρ = A†A` to the entries of `A` in the real-last-column gauge.
fn factor_log_measure(a: &[C64], n: usize) -> f64 {
    let mut acc = 0.0;
    for r in 0..n {
        acc += 2.0 * (n - 1 - r) as f64 * a[r * n + r].norm().ln() + a[r * n + n - 1].norm().ln();
    }
    acc
}

/// Cached trigonometric data for one hyperspherical vector.
struct Trig {
    sin: Vec<f64>,
    cos: Vec<f64>,
    cis: Vec<C64>,
    /// `suffix[k] = Π_{t≥k} sin θ_t`, zero based, `suffix[M-1] = 1`.
    suffix: Vec<f64>,
    thetas_ln_sin: Vec<f64>,
}

impl Trig {
    fn new(thetas: &[f64], phases: &[f64]) -> Self {
        let m = phases.len();
        debug_assert_eq!(thetas.len() + 1, m);
        let (sin, cos): (Vec<f64>, Vec<f64>) = thetas.iter().map(|t| t.sin_cos()).unzip();
        let cis = phases.iter().map(|&p| if p == 0.0 { c(1.0, 0.0) } else { C64::from_polar(1.0, p) }).collect();
        let mut suffix = vec![1.0; m];
        for t in (0..m - 1).rev() {
            suffix[t] = suffix[t + 1] * sin[t];
        }
        let thetas_ln_sin = sin.iter().map(|s| s.abs().ln()).collect();
        Trig { sin, cos, cis, suffix, thetas_ln_sin }
    }

    fn len(&self) -> usize {
        self.cis.len()
    }

    fn radial(&self, k: usize) -> f64 {
        (if k == 0 { 1.0 } else { self.cos[k - 1] }) * self.suffix[k]
    }

    fn sphere(&self) -> Vec<C64> {
        (0..self.len()).map(|k| self.cis[k] * self.radial(k)).collect()
    }

    /// Columns `v_1..v_count`; column `n` (one based) is supported on rows `1..=n+1`.
    fn complement(&self, count: usize) -> Vec<Vec<C64>> {
        (0..count)
            .map(|col| {
                let mut v = vec![ZERO; col + 2];
                v[col + 1] = -self.cis[col + 1] * self.sin[col];
                let mut prod = self.cos[col];
                for r in (0..=col).rev() {
                    let head = if r == 0 { 1.0 } else { self.cos[r - 1] };
                    v[r] = self.cis[r] * (head * prod);
                    if r > 0 {
                        prod *= self.sin[r - 1];
                    }
                }
                v
            })
            .collect()
    }

    /// `log S_m` for one-based `m`, i.e. the log norm of the leading `m` entries.
    fn log_partial_norm(&self, m: usize) -> f64 {
        self.thetas_ln_sin[m - 1..].iter().sum()
    }

    /// Log density of the spherical coordinates relative to Lebesgue measure
    /// on the sphere, with masked entries real.
    fn sphere_log_measure(&self, mask: Option<&[bool]>) -> f64 {
        let mut acc = 0.0;
        for (t, ls) in self.thetas_ln_sin.iter().enumerate() {
            acc += t as f64 * ls;
        }
        for k in 0..self.len() {
            if mask.is_some_and(|mk| mk[k]) {
                continue;
            }
            acc += self.radial(k).abs().ln();
        }
        acc
    }
}

/// A unit vector in hyperspherical coordinates together with its angles.
#[derive(Clone, Debug)]
pub struct SphereVector {
    pub thetas: Vec<f64>,
    /// Phases for every entry; masked entries carry zero.
    pub phases: Vec<f64>,
    pub values: Vec<C64>,
}

pub fn unit_sphere_vector(thetas: &[f64], phis: &[f64], len: usize, mask: &[bool]) -> Result<SphereVector> {
    if len == 0 || thetas.len() + 1 != len {
        return Err(Error::WrongAngleCount { expected: len.saturating_sub(1), got: thetas.len() });
    }
    if mask.len() != len {
        return Err(Error::DimensionMismatch { expected: len, got: mask.len() });
    }
    let free = mask.iter().filter(|&&b| !b).count();
    if phis.len() != free {
        return Err(Error::WrongAngleCount { expected: free, got: phis.len() });
    }
    let mut phases = vec![0.0; len];
    let mut it = phis.iter();
    for (p, &masked) in phases.iter_mut().zip(mask) {
        if !masked {
            *p = *it.next().expect("counted");
        }
    }
    let values = Trig::new(thetas, &phases).sphere();
    Ok(SphereVector { thetas: thetas.to_vec(), phases, values })
}

pub fn complement_basis(psi: &SphereVector, n_max: usize) -> Result<Vec<CVec>> {
    let k = psi.values.len();
    if n_max + 1 > k {
        return Err(Error::DimensionMismatch { expected: k - 1, got: n_max });
    }
    Ok(Trig::new(&psi.thetas, &psi.phases)
        .complement(n_max)
        .into_iter()
        .map(|mut v| {
            v.resize(k, ZERO);
            CVec::from_vec(v)
        })
        .collect())
}

/// Ordered angles for one channel; level-major storage with polar angles
/// before phases inside each level.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleVector {
    dim: usize,
    values: Vec<f64>,
}

pub fn angle_count(d: usize) -> usize {
    d * d * (d * d - 1)
}

impl AngleVector {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim));
        }
        if values.len() != angle_count(dim) {
            return Err(Error::WrongAngleCount { expected: angle_count(dim), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite angle".into()));
        }
        Ok(AngleVector { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub fn params_to_choi(a: &AngleVector) -> Result<ChoiState> {
    let st = build_structure(a.dim)?;
    params_to_choi_with(&st, a.values())
}

pub fn params_to_choi_with(st: &ParamStructure, angles: &[f64]) -> Result<ChoiState> {
    st.check(angles)?;
    let n = st.dim * st.dim;
    let mut flat = vec![ZERO; n * n];
    st.choi_flat(angles, &mut flat);
    Ok(ChoiState::from_trusted(st.dim, linalg::from_flat(n, &flat)))
}

/// Inverse map for strictly positive definite TP Choi states.
pub fn choi_to_params(rho: &ChoiState) -> Result<AngleVector> {
    let d = rho.dim();
    let st = build_structure(d)?;
    if !rho.is_trace_preserving() {
        return Err(Error::NotTracePreserving(rho.tp_defect()));
    }
    let n = d * d;
    let chol = nalgebra::Cholesky::new(linalg::symmetrize(rho.matrix()))
        .ok_or(Error::RankDeficient(linalg::min_eigenvalue(rho.matrix())))?;
    let r = chol.l().adjoint();
    let mut a = vec![ZERO; n * n];
    for row in 0..n {
        let pivot = r[(row, row)].norm();
        let last = r[(row, n - 1)];
        if pivot < 1e-8 {
            return Err(Error::RankDeficient(pivot));
        }
        let phase = if last.norm() > 0.0 { last.conj() / last.norm() } else { c(1.0, 0.0) };
        for col in row..n {
            a[row * n + col] = phase * r[(row, col)];
        }
        a[row * n + n - 1] = c(last.norm(), 0.0);
    }
    let len = d * n;
    let mut psi = vec![vec![ZERO; len]; d];
    for (t, &s) in st.perm.iter().enumerate() {
        let (k, m) = (s / n, s % n);
        for (i, col) in psi.iter_mut().enumerate() {
            col[t] = a[m * n + i * d + k];
        }
    }
    let m0 = st.level_len[0];
    let mut angles = Vec::with_capacity(st.n_angles);
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for l in 0..d {
        let m = st.level_len[l];
        let col = &psi[d - 1 - l];
        let coords: Vec<C64> = if l == 0 {
            col[..m].to_vec()
        } else {
            basis.iter().map(|b| (0..m0).map(|r| b[r].conj() * col[r]).sum()).collect()
        };
        let mask = if l == 0 { Some(st.mask0.as_slice()) } else { None };
        let (thetas, phases) = extract_sphere_angles(&coords, mask);
        angles.extend_from_slice(&thetas);
        for (t, p) in phases.iter().enumerate() {
            if !mask.is_some_and(|mk| mk[t]) {
                angles.push(*p);
            }
        }
        if l + 1 < d {
            let v = Trig::new(&thetas, &phases).complement(st.level_len[l + 1]);
            basis = if l == 0 {
                v.into_iter()
                    .map(|mut b| {
                        b.resize(m0, ZERO);
                        b
                    })
                    .collect()
            } else {
                v.iter()
                    .map(|vc| {
                        let mut out = vec![ZERO; m0];
                        for (j, &w) in vc.iter().enumerate() {
                            for r in 0..m0 {
                                out[r] += basis[j][r] * w;
                            }
                        }
                        out
                    })
                    .collect()
            };
        }
    }
    AngleVector::new(d, angles)
}

/// Hyperspherical angles of a (numerically) unit vector.
fn extract_sphere_angles(x: &[C64], mask: Option<&[bool]>) -> (Vec<f64>, Vec<f64>) {
    let m = x.len();
    let norm: f64 = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut phases = vec![0.0; m];
    let mut radial = vec![0.0; m];
    for k in 0..m {
        let z = x[k] / norm;
        if mask.is_some_and(|mk| mk[k]) {
            radial[k] = z.re;
        } else {
            radial[k] = z.norm();
            phases[k] = z.arg();
        }
    }
    let mut thetas = Vec::with_capacity(m - 1);
    let mut s = radial[0];
    for &r in &radial[1..] {
        thetas.push(s.atan2(r));
        s = s.hypot(r);
    }
    (thetas, phases)
}

/// `log |det J|` of the free Born probabilities with respect to the angles,
/// by central differences and LU factorization.
pub fn log_jacobian(a: &AngleVector, scheme: &TomographyScheme) -> Result<f64> {
    let st = build_structure(a.dim)?;
    log_jacobian_with(&st, a.values(), scheme, FD_STEP)
}

pub fn log_jacobian_with(st: &ParamStructure, angles: &[f64], scheme: &TomographyScheme, h: f64) -> Result<f64> {
    st.check(angles)?;
    if scheme.dim() != st.dim {
        return Err(Error::DimensionMismatch { expected: st.dim, got: scheme.dim() });
    }
    let map = scheme.probability_map();
    let free = map.free_indices();
    let n = angles.len();
    if free.len() != n {
        return Err(Error::NonSquareJacobian { rows: free.len(), cols: n });
    }
    let jac = fd_jacobian(angles, h, free.len(), |x, out| {
        let probs = map.probabilities_of(|buf| st.choi_flat(x, buf));
        for (o, &f) in out.iter_mut().zip(free) {
            *o = probs[f];
        }
    });
    linalg::ln_abs_det(jac).ok_or(Error::SingularJacobian)
}

/// Central-difference Jacobian of `f: R^n → R^rows`.
pub(crate) fn fd_jacobian<F>(x: &[f64], h: f64, rows: usize, f: F) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut jac = DMatrix::zeros(rows, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; rows];
    let mut fm = vec![0.0; rows];
    for j in 0..n {
        xp[j] = x[j] + h;
        f(&xp, &mut fp);
        xp[j] = x[j] - h;
        f(&xp, &mut fm);
        xp[j] = x[j];
        for r in 0..rows {
            jac[(r, j)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    d: usize,
}

/// Writes a header line `{"d": …}` followed by one JSON array per vector.
pub fn write_angle_dump<W: Write>(mut w: W, d: usize, draws: &[Vec<f64>]) -> Result<()> {
    serde_json::to_writer(&mut w, &DumpHeader { d })?;
    writeln!(w)?;
    for v in draws {
        serde_json::to_writer(&mut w, v)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_angle_dump<R: BufRead>(r: R) -> Result<Vec<AngleVector>> {
    let mut lines = r.lines();
    let header: DumpHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::Config("empty angle dump".into())),
    };
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = serde_json::from_str(&line)?;
        out.push(AngleVector::new(header.d, values)?);
    }
    Ok(out)
}
