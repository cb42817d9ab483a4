//! Channel families with their parameter charts and primitive-prior volume elements.
//!
//! Every family maps an unconstrained real vector to a TP Choi matrix. The
//! `log_volume` of a family is the log density of Lebesgue measure on the
//! family's (affine) image in Choi space, expressed in its own chart and
//! defined up to an additive constant.

use crate::cptp_param::{build_structure, choi_to_params, ParamStructure};
use crate::duality::{self, ChoiState};
use crate::error::{Error, Result};
use crate::linalg::{self, C64, ZERO};
use crate::unital_qubit::{self as uq, UnitalAngles};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Dephasing,
    Pauli,
    SymmetricUnital,
    Unital,
    General,
}

impl FamilyKind {
    /// The nested qubit families from smallest to largest.
    pub const NESTED: [FamilyKind; 5] =
        [FamilyKind::Dephasing, FamilyKind::Pauli, FamilyKind::SymmetricUnital, FamilyKind::Unital, FamilyKind::General];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Dephasing => "dephasing",
            FamilyKind::Pauli => "pauli",
            FamilyKind::SymmetricUnital => "symmetric-unital",
            FamilyKind::Unital => "unital",
            FamilyKind::General => "general",
        }
    }

    pub fn n_params(self, d: usize) -> usize {
        match self {
            FamilyKind::Dephasing => 1,
            FamilyKind::Pauli => 3,
            FamilyKind::SymmetricUnital => 6,
            FamilyKind::Unital => 9,
            FamilyKind::General => d * d * (d * d - 1),
        }
    }

    /// Dephasing and Pauli priors are sampled directly instead of by HMC.
    pub fn direct_sampling(self) -> bool {
        matches!(self, FamilyKind::Dephasing | FamilyKind::Pauli)
    }

    pub fn index(self) -> usize {
        FamilyKind::NESTED.iter().position(|&k| k == self).expect("listed")
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::NESTED
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown family '{s}'")))
    }
}

pub trait ChannelFamily: Send + Sync {
    fn kind(&self) -> FamilyKind;
    /// Hilbert-space dimension of the channel.
    fn dim(&self) -> usize;
    fn n_params(&self) -> usize;
    /// Row-major Choi matrix into `out` (length `d⁴`).
    fn choi_into(&self, params: &[f64], out: &mut [C64]);
    fn log_volume(&self, params: &[f64]) -> f64;

    /// [`ChannelFamily::choi_into`] and [`ChannelFamily::log_volume`] in one pass.
    fn choi_with_volume(&self, params: &[f64], out: &mut [C64]) -> f64 {
        self.choi_into(params, out);
        self.log_volume(params)
    }

    /// Uniformly random chart coordinates, used as optimizer and sampler starts.
    fn random_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.n_params()).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
    }

    /// An exact primitive-prior draw, for families that admit one.
    fn direct_sample(&self, _rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        None
    }

    fn choi(&self, params: &[f64]) -> Result<ChoiState> {
        if params.len() != self.n_params() {
            return Err(Error::WrongAngleCount { expected: self.n_params(), got: params.len() });
        }
        let n = self.dim() * self.dim();
        let mut buf = vec![ZERO; n * n];
        self.choi_into(params, &mut buf);
        Ok(ChoiState::from_trusted(self.dim(), linalg::from_flat(n, &buf)))
    }
}

pub fn family(kind: FamilyKind, d: usize) -> Result<Box<dyn ChannelFamily>> {
    if kind != FamilyKind::General && d != 2 {
        return Err(Error::Config(format!("family '{kind}' is only defined for qubits")));
    }
    Ok(match kind {
        FamilyKind::Dephasing => Box::new(Dephasing),
        FamilyKind::Pauli => Box::new(Pauli),
        FamilyKind::SymmetricUnital => Box::new(SymmetricUnital),
        FamilyKind::Unital => Box::new(Unital),
        FamilyKind::General => Box::new(General::new(d)?),
    })
}

fn write_matrix(m: &linalg::CMat, out: &mut [C64]) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = m[(i, j)];
        }
    }
}

fn write_pauli(w: [f64; 4], out: &mut [C64]) {
    write_matrix(&duality::pauli_choi_matrix(w), out);
}

/// `p = cos²θ`; `D_p(X) = (1-p)X + p σ_z X σ_z`.
pub struct Dephasing;

impl Dephasing {
    pub fn probability(theta: f64) -> f64 {
        theta.cos().powi(2)
    }

    pub fn angle(p: f64) -> f64 {
        p.clamp(0.0, 1.0).sqrt().acos()
    }
}

impl ChannelFamily for Dephasing {
    fn kind(&self) -> FamilyKind {
        FamilyKind::Dephasing
    }
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        1
    }
    fn choi_into(&self, params: &[f64], out: &mut [C64]) {
        let p = Self::probability(params[0]);
        write_pauli([1.0 - p, 0.0, 0.0, p], out);
    }
    fn log_volume(&self, params: &[f64]) -> f64 {
        (2.0 * params[0]).sin().abs().ln()
    }
    fn direct_sample(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        Some(vec![Self::angle(rng.random::<f64>())])
    }
}

/// Pauli weights from tetrahedron angles: `α = (p_y, p_z, p_I, p_x)`.
pub struct Pauli;

impl Pauli {
    /// `(p_I, p_x, p_y, p_z)` for the given chart point.
    pub fn weights(params: &[f64]) -> [f64; 4] {
        let a = uq::tetra_weights(&[params[0], params[1], params[2]]);
        [a[2], a[3], a[0], a[1]]
    }

    pub fn angles(pi: f64, px: f64, py: f64, pz: f64) -> [f64; 3] {
        uq::tetra_angles_from_weights([py, pz, pi, px])
    }
}

impl ChannelFamily for Pauli {
    fn kind(&self) -> FamilyKind {
        FamilyKind::Pauli
    }
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        3
    }
    fn choi_into(&self, params: &[f64], out: &mut [C64]) {
        write_pauli(Self::weights(params), out);
    }
    fn log_volume(&self, params: &[f64]) -> f64 {
        uq::tetra_log_volume(&[params[0], params[1], params[2]])
    }
    fn direct_sample(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let e: Vec<f64> = (0..4).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let s: f64 = e.iter().sum();
        let w: Vec<f64> = e.iter().map(|x| x / s).collect();
        Some(Self::angles(w[0], w[1], w[2], w[3]).to_vec())
    }
}

/// Unital channels with `R₁ = R₂`; chart `(tetra, rot)`.
pub struct SymmetricUnital;

impl SymmetricUnital {
    pub fn unital_angles(params: &[f64]) -> UnitalAngles {
        let rot = [params[3], params[4], params[5]];
        UnitalAngles { tetra: [params[0], params[1], params[2]], rot1: rot, rot2: rot }
    }
}

impl ChannelFamily for SymmetricUnital {
    fn kind(&self) -> FamilyKind {
        FamilyKind::SymmetricUnital
    }
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        6
    }
    fn choi_into(&self, params: &[f64], out: &mut [C64]) {
        write_matrix(&uq::dyadic_choi_matrix(&uq::dyadic(&Self::unital_angles(params))), out);
    }
    fn log_volume(&self, params: &[f64]) -> f64 {
        uq::log_volume_symmetric(&[params[0], params[1], params[2]], &[params[3], params[4], params[5]])
    }
}

/// All unital qubit channels; chart `(tetra, rot1, rot2)`.
pub struct Unital;

impl ChannelFamily for Unital {
    fn kind(&self) -> FamilyKind {
        FamilyKind::Unital
    }
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        9
    }
    fn choi_into(&self, params: &[f64], out: &mut [C64]) {
        let u = UnitalAngles::from_slice(params).expect("nine angles");
        write_matrix(&uq::dyadic_choi_matrix(&uq::dyadic(&u)), out);
    }
    fn log_volume(&self, params: &[f64]) -> f64 {
        uq::log_volume_unital(&UnitalAngles::from_slice(params).expect("nine angles"))
    }
}

/// All channels on a `d`-level system via the Cholesky-type angle chart.
pub struct General {
    structure: ParamStructure,
}

impl General {
    pub fn new(d: usize) -> Result<Self> {
        Ok(General { structure: build_structure(d)? })
    }

    pub fn structure(&self) -> &ParamStructure {
        &self.structure
    }
}

impl ChannelFamily for General {
    fn kind(&self) -> FamilyKind {
        FamilyKind::General
    }
    fn dim(&self) -> usize {
        self.structure.dim()
    }
    fn n_params(&self) -> usize {
        self.structure.n_angles()
    }
    fn choi_into(&self, params: &[f64], out: &mut [C64]) {
        self.structure.choi_flat(params, out);
    }
    fn log_volume(&self, params: &[f64]) -> f64 {
        self.structure.log_volume(params).unwrap_or(f64::NEG_INFINITY)
    }
    fn choi_with_volume(&self, params: &[f64], out: &mut [C64]) -> f64 {
        self.structure.choi_flat_with_volume(params, out)
    }
}

/// Weight of the depolarizing channel mixed in before inverting the general chart.
pub const EMBED_SMOOTHING: f64 = 1e-9;

/// Chart coordinates in `to` of the channel given by `params` in `from`.
///
/// Embeddings into the general family are approximate: the channel is first
/// mixed with [`EMBED_SMOOTHING`] of the depolarizing channel so that the
/// Cholesky-type inverse exists.
pub fn embed(from: FamilyKind, params: &[f64], to: FamilyKind) -> Result<Vec<f64>> {
    if from.index() > to.index() {
        return Err(Error::Config(format!("{from} is not contained in {to}")));
    }
    let mut cur = from;
    let mut x = params.to_vec();
    while cur != to {
        x = match cur {
            FamilyKind::Dephasing => vec![std::f64::consts::FRAC_PI_2, x[0], 0.0],
            FamilyKind::Pauli => vec![x[0], x[1], x[2], 0.0, 0.0, 0.0],
            FamilyKind::SymmetricUnital => vec![x[0], x[1], x[2], x[3], x[4], x[5], x[3], x[4], x[5]],
            FamilyKind::Unital => {
                let rho = Unital.choi(&x)?;
                let mixed = duality::mix(&rho, &duality::depolarizing_channel(2), 1.0 - EMBED_SMOOTHING)?;
                choi_to_params(&mixed)?.into_values()
            }
            FamilyKind::General => unreachable!(),
        };
        cur = FamilyKind::NESTED[cur.index() + 1];
    }
    Ok(x)
}
