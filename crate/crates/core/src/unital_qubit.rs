//! Nine-angle parameterization of unital qubit channels.
//!
//! `ρ = ½(1 + Σ C_ij σ_i ⊗ σ_j)` with `C = R₁ diag(c) R₂ᵀ`, where `c` is a
//! convex combination of the four tetrahedron vertices and `R₁, R₂` are
//! Z-Y-Z Euler rotations. The Bloch map of the channel is `M = Cᵀ S` with
//! `S = diag(1, -1, 1)`; the sign comes from `σ_yᵀ = -σ_y` in the Choi
//! convention.

use crate::cptp_param::{fd_jacobian, FD_STEP};
use crate::duality::{ChoiState, Slot};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::tomo::TomographyScheme;
use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const UNITAL_TOL: f64 = 1e-8;

pub const VERTICES: [[f64; 3]; 4] = [[-1.0, -1.0, -1.0], [-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0]];

const SIGN: [f64; 3] = [1.0, -1.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitalAngles {
    pub tetra: [f64; 3],
    pub rot1: [f64; 3],
    pub rot2: [f64; 3],
}

impl UnitalAngles {
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::WrongAngleCount { expected: 9, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite angle".into()));
        }
        Ok(UnitalAngles { tetra: [v[0], v[1], v[2]], rot1: [v[3], v[4], v[5]], rot2: [v[6], v[7], v[8]] })
    }

    pub fn to_array(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        out[..3].copy_from_slice(&self.tetra);
        out[3..6].copy_from_slice(&self.rot1);
        out[6..].copy_from_slice(&self.rot2);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochDyadic(pub Matrix3<f64>);

/// Convex weights `α₁..α₄` from the three tetrahedron angles.
pub fn tetra_weights(t: &[f64; 3]) -> [f64; 4] {
    let (s1, c1) = t[0].sin_cos();
    let (s2, c2) = t[1].sin_cos();
    let (s3, c3) = t[2].sin_cos();
    let (s1, c1, s2, c2, s3, c3) = (s1 * s1, c1 * c1, s2 * s2, c2 * c2, s3 * s3, c3 * c3);
    [c1, s1 * c2, s1 * s2 * c3, s1 * s2 * s3]
}

/// Angles in `[0, π/2]` reproducing the given convex weights.
pub fn tetra_angles_from_weights(w: [f64; 4]) -> [f64; 3] {
    let clamp = |x: f64| x.clamp(0.0, 1.0);
    let t1 = clamp(w[0]).sqrt().acos();
    let rest1 = 1.0 - clamp(w[0]);
    let t2 = if rest1 > 0.0 { clamp(w[1] / rest1).sqrt().acos() } else { 0.0 };
    let rest2 = rest1 - w[1];
    let t3 = if rest2 > 0.0 { clamp(w[2] / rest2).sqrt().acos() } else { 0.0 };
    [t1, t2, t3]
}

pub fn tetra_point(w: &[f64; 4]) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for (a, v) in w.iter().zip(VERTICES.iter()) {
        out += Vector3::from(*v) * *a;
    }
    out
}

pub fn rotation_zyz(a: f64, b: f64, g: f64) -> Matrix3<f64> {
    let rz = |t: f64| {
        let (s, co) = t.sin_cos();
        Matrix3::new(co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0)
    };
    let (s, co) = b.sin_cos();
    let ry = Matrix3::new(co, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, co);
    rz(a) * ry * rz(g)
}

pub fn dyadic(u: &UnitalAngles) -> Matrix3<f64> {
    let cd = Matrix3::from_diagonal(&tetra_point(&tetra_weights(&u.tetra)));
    let r1 = rotation_zyz(u.rot1[0], u.rot1[1], u.rot1[2]);
    let r2 = rotation_zyz(u.rot2[0], u.rot2[1], u.rot2[2]);
    r1 * cd * r2.transpose()
}

/// `½(1 + Σ C_ij σ_i ⊗ σ_j)`.
pub fn dyadic_choi_matrix(cm: &Matrix3<f64>) -> CMat {
    let p = linalg::pauli();
    let mut rho = CMat::identity(4, 4);
    for i in 0..3 {
        for j in 0..3 {
            if cm[(i, j)] != 0.0 {
                rho += p[i].kronecker(&p[j]) * c(cm[(i, j)], 0.0);
            }
        }
    }
    rho * c(0.5, 0.0)
}

pub fn unital_params_to_choi(u: &UnitalAngles) -> ChoiState {
    ChoiState::from_trusted(2, dyadic_choi_matrix(&dyadic(u)))
}

/// `M_ij = ½ tr{σ_i E(σ_j)}` for a TP unital qubit channel.
pub fn bloch_map(rho: &ChoiState) -> Result<BlochDyadic> {
    if rho.dim() != 2 {
        return Err(Error::InvalidDimension(rho.dim()));
    }
    if !rho.is_trace_preserving() {
        return Err(Error::NotTracePreserving(rho.tp_defect()));
    }
    let defect = rho.unital_defect();
    if defect > UNITAL_TOL {
        return Err(Error::NotUnital(defect));
    }
    Ok(BlochDyadic(bloch_map_of(rho.matrix())))
}

pub(crate) fn bloch_map_of(m: &CMat) -> Matrix3<f64> {
    // ½ tr{ρ (σ_jᵀ ⊗ σ_i)} = C_ji s_j
    let cm = correlation_dyadic(m);
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            out[(i, j)] = cm[(j, i)] * SIGN[j];
        }
    }
    out
}

/// `C_ij = ½ tr{ρ σ_i ⊗ σ_j}`.
pub fn correlation_dyadic(m: &CMat) -> Matrix3<f64> {
    let p = linalg::pauli();
    Matrix3::from_fn(|i, j| 0.5 * crate::duality::expectation(m, &p[i].kronecker(&p[j])))
}

/// Inverse of the `C ↦ M` relation.
pub fn dyadic_from_bloch(mm: &Matrix3<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| mm[(j, i)] * SIGN[i])
}

/// `log √det(JᵀJ)` of the free Born probabilities with respect to the nine angles.
pub fn unital_log_jacobian(u: &UnitalAngles, scheme: &TomographyScheme) -> Result<f64> {
    unital_log_jacobian_with(u, scheme, FD_STEP)
}

pub fn unital_log_jacobian_with(u: &UnitalAngles, scheme: &TomographyScheme, h: f64) -> Result<f64> {
    if scheme.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: scheme.dim() });
    }
    let jac = unital_jacobian(u, scheme, h)?;
    let sv = jac.clone().singular_values();
    let max = sv.max();
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min < 1e-10 * max {
        return Err(Error::RankDeficient(min));
    }
    let gram = jac.transpose() * jac;
    linalg::ln_abs_det(gram).map(|v| 0.5 * v).ok_or(Error::SingularJacobian)
}

pub fn unital_jacobian(u: &UnitalAngles, scheme: &TomographyScheme, h: f64) -> Result<DMatrix<f64>> {
    let map = scheme.probability_map();
    let free = map.free_indices().to_vec();
    Ok(fd_jacobian(&u.to_array(), h, free.len(), |x, out| {
        let ua = UnitalAngles::from_slice(x).expect("nine angles");
        let probs = map.probabilities_of(|buf| {
            buf.copy_from_slice(&linalg::to_flat(&dyadic_choi_matrix(&dyadic(&ua))));
        });
        for (o, &f) in out.iter_mut().zip(&free) {
            *o = probs[f];
        }
    }))
}

/// Log density of the tetrahedron point `c` (uniform in the simplex) per unit angle volume.
pub fn tetra_log_volume(t: &[f64; 3]) -> f64 {
    let (s1, c1) = t[0].sin_cos();
    let (s2, c2) = t[1].sin_cos();
    let (s3, c3) = t[2].sin_cos();
    (8.0 * c1 * s1.powi(5) * c2 * s2.powi(3) * c3 * s3).abs().ln()
}

/// Log volume element of uniform measure on `C` for the nine-angle chart,
/// up to an additive constant.
pub fn log_volume_unital(u: &UnitalAngles) -> f64 {
    let cd = tetra_point(&tetra_weights(&u.tetra));
    let sq = |x: f64| x * x;
    let vander = ((sq(cd[0]) - sq(cd[1])) * (sq(cd[0]) - sq(cd[2])) * (sq(cd[1]) - sq(cd[2]))).abs().ln();
    vander + u.rot1[1].sin().abs().ln() + u.rot2[1].sin().abs().ln() + tetra_log_volume(&u.tetra)
}

/// Log volume element of uniform measure on symmetric `C = R diag(c) Rᵀ`
/// in the six-angle chart `(tetra, rot)`.
pub fn log_volume_symmetric(tetra: &[f64; 3], rot: &[f64; 3]) -> f64 {
    let cd = tetra_point(&tetra_weights(tetra));
    let vander = ((cd[0] - cd[1]) * (cd[0] - cd[2]) * (cd[1] - cd[2])).abs().ln();
    vander + rot[1].sin().abs().ln() + tetra_log_volume(tetra)
}

/// Checks both partial traces against the identity.
pub fn partial_trace_defects(rho: &ChoiState) -> (f64, f64) {
    let id = linalg::identity(2);
    let t1 = crate::duality::partial_trace(rho.matrix(), Slot::First).expect("square");
    let t2 = crate::duality::partial_trace(rho.matrix(), Slot::Second).expect("square");
    (linalg::frobenius(&(t1 - &id)), linalg::frobenius(&(t2 - &id)))
}

#[derive(Serialize, Deserialize)]
struct UnitalHeader {
    family: String,
}

pub fn write_unital_dump<W: Write>(mut w: W, draws: &[[f64; 9]]) -> Result<()> {
    serde_json::to_writer(&mut w, &UnitalHeader { family: "unital-qubit".into() })?;
    writeln!(w)?;
    for v in draws {
        serde_json::to_writer(&mut w, &v.to_vec())?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_unital_dump<R: BufRead>(r: R) -> Result<Vec<UnitalAngles>> {
    let mut lines = r.lines();
    let header: UnitalHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::Config("empty unital dump".into())),
    };
    if header.family != "unital-qubit" {
        return Err(Error::Config(format!("unexpected family {}", header.family)));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            let v: Vec<f64> = serde_json::from_str(&line)?;
            out.push(UnitalAngles::from_slice(&v)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::{self, pauli_channel};
    use crate::tomo;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_u(rng: &mut ChaCha8Rng) -> UnitalAngles {
        let v: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        UnitalAngles::from_slice(&v).unwrap()
    }

    #[test]
    fn vertex_and_center() {
        let u = UnitalAngles { tetra: [0.0, 0.3, 0.7], rot1: [0.0; 3], rot2: [0.0; 3] };
        let rho = unital_params_to_choi(&u);
        let cm = dyadic(&u);
        assert!((Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, -1.0)) - cm).norm() < 1e-15);
        let (vals, _) = linalg::hermitian_eigen(rho.matrix());
        let expect = [0.0, 0.0, 0.0, 2.0];
        for (v, e) in vals.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }
        let t = tetra_angles_from_weights([0.25; 4]);
        let w = tetra_weights(&t);
        for x in w {
            assert!((x - 0.25).abs() < 1e-15);
        }
        let u = UnitalAngles { tetra: t, rot1: [0.0; 3], rot2: [0.0; 3] };
        let rho = unital_params_to_choi(&u);
        assert!(linalg::approx_eq(rho.matrix(), duality::depolarizing_channel(2).matrix(), 1e-15));
    }

    #[test]
    fn random_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let u = random_u(&mut rng);
            let w = tetra_weights(&u.tetra);
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
            let rho = unital_params_to_choi(&u);
            assert!(linalg::min_eigenvalue(rho.matrix()) >= -1e-12);
            let (d1, d2) = partial_trace_defects(&rho);
            assert!(d1 <= 1e-12 && d2 <= 1e-12);
        }
    }

    #[test]
    fn bloch_maps() {
        let id = bloch_map(&duality::identity_channel(2)).unwrap();
        assert!((id.0 - Matrix3::identity()).norm() < 1e-15);
        let p = bloch_map(&pauli_channel(0.05, 0.15, 0.2).unwrap()).unwrap();
        assert!((p.0 - Matrix3::from_diagonal(&Vector3::new(0.3, 0.5, 0.6))).norm() < 1e-14);
        for q in [0.0, 0.1, 0.25, 0.8] {
            let m = bloch_map(&duality::dephasing_channel(q).unwrap()).unwrap();
            let expect = Matrix3::from_diagonal(&Vector3::new(1.0 - 2.0 * q, 1.0 - 2.0 * q, 1.0));
            assert!((m.0 - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn bloch_map_matches_channel_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = linalg::pauli();
        for _ in 0..50 {
            let rho = unital_params_to_choi(&random_u(&mut rng));
            let m = bloch_map(&rho).unwrap().0;
            for i in 0..3 {
                for j in 0..3 {
                    let out = duality::apply_channel(&rho, &p[j]).unwrap();
                    let direct = 0.5 * linalg::trace(&(&p[i] * out)).re;
                    assert!((direct - m[(i, j)]).abs() < 1e-12);
                }
            }
            let cm = correlation_dyadic(rho.matrix());
            assert!((dyadic_from_bloch(&m) - cm).norm() < 1e-12);
        }
    }

    #[test]
    fn pauli_weights_map_to_vertices() {
        // α = (p_y, p_z, p_I, p_x)
        let (px, py, pz) = (0.05, 0.15, 0.2);
        let t = tetra_angles_from_weights([py, pz, 1.0 - px - py - pz, px]);
        let u = UnitalAngles { tetra: t, rot1: [0.0; 3], rot2: [0.0; 3] };
        let rho = unital_params_to_choi(&u);
        assert!(linalg::approx_eq(rho.matrix(), pauli_channel(px, py, pz).unwrap().matrix(), 1e-14));
    }

    #[test]
    fn non_unital_rejected() {
        let ad = duality::choi_from_kraus(&duality::amplitude_damping(0.4).unwrap()).unwrap();
        assert!(matches!(bloch_map(&ad), Err(Error::NotUnital(_))));
    }

    #[test]
    fn simultaneous_rotation_keeps_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let s = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        for _ in 0..50 {
            let cm = dyadic(&random_u(&mut rng));
            let r = rotation_zyz(rng.random_range(0.0..6.3), rng.random_range(0.0..3.2), rng.random_range(0.0..6.3));
            // The Bloch map transforms as M ↦ R M Rᵀ.
            let cm2 = s * r * s * cm * r.transpose();
            let m1 = bloch_map_of(&dyadic_choi_matrix(&cm));
            let m2 = bloch_map_of(&dyadic_choi_matrix(&cm2));
            assert!((r * m1 * r.transpose() - m2).norm() < 1e-12);
            let mut e1: Vec<f64> = ((m1 + m1.transpose()) * 0.5).symmetric_eigenvalues().iter().cloned().collect();
            let mut e2: Vec<f64> = ((m2 + m2.transpose()) * 0.5).symmetric_eigenvalues().iter().cloned().collect();
            e1.sort_by(f64::total_cmp);
            e2.sort_by(f64::total_cmp);
            for (a, b) in e1.iter().zip(&e2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_jacobian_rank_and_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let tet = tomo::scheme_tetrahedron();
        let mut offsets = Vec::new();
        for _ in 0..20 {
            // generic points, away from the coordinate singularities
            let v: Vec<f64> = (0..9).map(|_| rng.random_range(0.2..1.4)).collect();
            let u = UnitalAngles::from_slice(&v).unwrap();
            let a = unital_log_jacobian(&u, &tet).unwrap();
            let b = unital_log_jacobian_with(&u, &tet, FD_STEP / 2.0).unwrap();
            assert!((a - b).abs() < 1e-4, "{a} {b}");
            offsets.push(a - log_volume_unital(&u));
        }
        for o in &offsets {
            assert!((o - offsets[0]).abs() < 1e-4, "{offsets:?}");
        }
        let degenerate = UnitalAngles { tetra: [0.0, 0.0, 0.0], rot1: [0.0; 3], rot2: [0.0; 3] };
        assert!(unital_log_jacobian(&degenerate, &tet).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let mut buf = Vec::new();
        write_unital_dump(&mut buf, &[[0.5; 9]]).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("{\"family\":\"unital-qubit\"}"));
        let back = read_unital_dump(buf.as_slice()).unwrap();
        assert_eq!(back[0].to_array(), [0.5; 9]);
    }
}
