//! Tomography schemes, counts, likelihoods, priors, data simulation and
//! maximum-likelihood estimation.

use crate::duality::{self, ChoiState};
use crate::error::{Error, Result};
use crate::family::ChannelFamily;
use crate::linalg::{self, c, CMat, CVec, C64, ZERO};
use crate::optim::{self, BfgsOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Born probabilities, one row per input state.
pub type ProbTable = Vec<Vec<f64>>;

#[derive(Clone, Debug)]
pub struct TomographyScheme {
    dim: usize,
    inputs: Vec<CMat>,
    povms: Vec<Vec<CMat>>,
}

impl TomographyScheme {
    pub fn new(inputs: Vec<CMat>, povms: Vec<Vec<CMat>>) -> Result<Self> {
        let first = inputs.first().ok_or_else(|| Error::InvalidScheme("no inputs".into()))?;
        let dim = first.nrows();
        if povms.len() != inputs.len() {
            return Err(Error::InvalidScheme(format!("{} inputs but {} POVMs", inputs.len(), povms.len())));
        }
        let tol = 1e-10;
        for (i, rho) in inputs.iter().enumerate() {
            if rho.shape() != (dim, dim) {
                return Err(Error::InvalidScheme(format!("input {i} has wrong shape")));
            }
            if linalg::hermitian_defect(rho) > tol || linalg::min_eigenvalue(rho) < -tol {
                return Err(Error::InvalidScheme(format!("input {i} is not a density matrix")));
            }
            if (linalg::trace(rho).re - 1.0).abs() > tol {
                return Err(Error::InvalidScheme(format!("input {i} does not have unit trace")));
            }
        }
        for (i, povm) in povms.iter().enumerate() {
            if povm.len() < 2 {
                return Err(Error::InvalidScheme(format!("POVM {i} has fewer than two outcomes")));
            }
            let mut sum = CMat::zeros(dim, dim);
            for (k, e) in povm.iter().enumerate() {
                if e.shape() != (dim, dim) {
                    return Err(Error::InvalidScheme(format!("POVM {i} element {k} has wrong shape")));
                }
                if linalg::hermitian_defect(e) > tol || linalg::min_eigenvalue(e) < -tol {
                    return Err(Error::InvalidScheme(format!("POVM {i} element {k} is not positive")));
                }
                sum += e;
            }
            if linalg::frobenius(&(sum - linalg::identity(dim))) > 1e-12 * (dim as f64) {
                return Err(Error::InvalidScheme(format!("POVM {i} does not sum to the identity")));
            }
        }
        Ok(TomographyScheme { dim, inputs, povms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inputs(&self) -> &[CMat] {
        &self.inputs
    }

    pub fn povms(&self) -> &[Vec<CMat>] {
        &self.povms
    }

    /// Outcomes per input.
    pub fn layout(&self) -> Vec<usize> {
        self.povms.iter().map(|p| p.len()).collect()
    }

    pub fn pseudo_povm(&self) -> Vec<Vec<CMat>> {
        self.inputs
            .iter()
            .zip(&self.povms)
            .map(|(rho, povm)| povm.iter().map(|e| duality::pseudo_povm_element(rho, e)).collect())
            .collect()
    }

    pub fn probability_map(&self) -> ProbabilityMap {
        ProbabilityMap::new(self)
    }

    pub fn to_json(&self) -> SchemeJson {
        let enc = |m: &CMat| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
        SchemeJson {
            d: self.dim,
            inputs: self.inputs.iter().map(enc).collect(),
            povms: self.povms.iter().map(|p| p.iter().map(enc).collect()).collect(),
        }
    }

    pub fn from_json(j: &SchemeJson) -> Result<Self> {
        let dec = |m: &Vec<Vec<[f64; 2]>>| -> Result<CMat> {
            if m.len() != j.d || m.iter().any(|r| r.len() != j.d) {
                return Err(Error::InvalidScheme(format!("matrix is not {}x{}", j.d, j.d)));
            }
            Ok(CMat::from_fn(j.d, j.d, |a, b| c(m[a][b][0], m[a][b][1])))
        };
        let inputs = j.inputs.iter().map(dec).collect::<Result<Vec<_>>>()?;
        let povms = j.povms.iter().map(|p| p.iter().map(dec).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
        let scheme = TomographyScheme::new(inputs, povms)?;
        if scheme.dim != j.d {
            return Err(Error::InvalidScheme("dimension field disagrees with matrices".into()));
        }
        Ok(scheme)
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let j: SchemeJson = serde_json::from_reader(r)?;
        Self::from_json(&j)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.to_json())?;
        Ok(())
    }
}

/// Serialized scheme; complex numbers are `[re, im]` pairs and matrices are lists of rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeJson {
    pub d: usize,
    pub inputs: Vec<Vec<Vec<[f64; 2]>>>,
    pub povms: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

fn bloch_operator(a: [f64; 3], scale: f64) -> CMat {
    let p = linalg::pauli();
    (linalg::identity(2) + &p[0] * c(a[0], 0.0) + &p[1] * c(a[1], 0.0) + &p[2] * c(a[2], 0.0)) * c(scale, 0.0)
}

/// Tetrahedron directions `v_i/√3`.
pub fn tetrahedron_directions() -> [[f64; 3]; 4] {
    let s = 1.0 / 3f64.sqrt();
    [[-s, -s, -s], [-s, s, s], [s, -s, s], [s, s, -s]]
}

pub fn scheme_tetrahedron() -> TomographyScheme {
    let dirs = tetrahedron_directions();
    let inputs: Vec<CMat> = dirs.iter().map(|a| bloch_operator(*a, 0.5)).collect();
    let povm: Vec<CMat> = dirs.iter().map(|a| bloch_operator(*a, 0.25)).collect();
    TomographyScheme::new(inputs, vec![povm; 4]).expect("tetrahedron scheme is valid")
}

/// The nine qutrit SIC vectors, one per column.
pub fn qutrit_sic_vectors() -> Vec<CVec> {
    let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let wc = w.conj();
    let one = c(1.0, 0.0);
    let rows = [
        [one, one, one, ZERO, ZERO, ZERO, w, wc, one],
        [w, wc, one, one, one, one, ZERO, ZERO, ZERO],
        [ZERO, ZERO, ZERO, w, wc, one, one, one, one],
    ];
    let s = c(0.5f64.sqrt(), 0.0);
    (0..9).map(|j| CVec::from_vec(vec![rows[0][j] * s, rows[1][j] * s, rows[2][j] * s])).collect()
}

pub fn scheme_qutrit_sic() -> TomographyScheme {
    let vecs = qutrit_sic_vectors();
    let inputs: Vec<CMat> = vecs.iter().map(|v| linalg::outer(v, v)).collect();
    let povm: Vec<CMat> = inputs.iter().map(|p| p * c(1.0 / 3.0, 0.0)).collect();
    TomographyScheme::new(inputs.clone(), vec![povm; 9]).expect("SIC scheme is valid")
}

/// Linear map from a row-major Choi matrix to the flat list of Born
/// probabilities (input-major).
#[derive(Clone, Debug)]
pub struct ProbabilityMap {
    n: usize,
    weights: Vec<f64>,
    layout: Vec<usize>,
    free: Vec<usize>,
}

impl ProbabilityMap {
    pub fn new(scheme: &TomographyScheme) -> Self {
        let n = scheme.dim * scheme.dim;
        let mut weights = Vec::new();
        for row in scheme.pseudo_povm() {
            for l in row {
                // Coordinates: diagonal, then Re and Im of each upper entry.
                for x in 0..n {
                    weights.push(l[(x, x)].re);
                }
                for x in 0..n {
                    for y in x + 1..n {
                        weights.push(2.0 * l[(y, x)].re);
                        weights.push(-2.0 * l[(y, x)].im);
                    }
                }
            }
        }
        let layout = scheme.layout();
        let mut free = Vec::new();
        let mut off = 0;
        for &k in &layout {
            free.extend(off..off + k - 1);
            off += k;
        }
        ProbabilityMap { n, weights, layout, free }
    }

    pub fn n_outcomes(&self) -> usize {
        self.layout.iter().sum()
    }

    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    /// Flat indices of all outcomes except the last of each input.
    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn probabilities(&self, rho: &[C64], out: &mut [f64]) {
        let n = self.n;
        let nn = n * n;
        let mut coords = Vec::with_capacity(nn);
        for x in 0..n {
            coords.push(rho[x * n + x].re);
        }
        for x in 0..n {
            for y in x + 1..n {
                let z = rho[x * n + y];
                coords.push(z.re);
                coords.push(z.im);
            }
        }
        for (o, w) in out.iter_mut().zip(self.weights.chunks_exact(nn)) {
            *o = w.iter().zip(&coords).map(|(a, b)| a * b).sum();
        }
    }

    /// Fills a scratch Choi buffer with `fill` and returns the probabilities.
    pub fn probabilities_of(&self, fill: impl FnOnce(&mut [C64])) -> Vec<f64> {
        let mut buf = vec![ZERO; self.n * self.n];
        fill(&mut buf);
        let mut out = vec![0.0; self.n_outcomes()];
        self.probabilities(&buf, &mut out);
        out
    }

    pub fn to_table(&self, flat: &[f64]) -> ProbTable {
        let mut out = Vec::with_capacity(self.layout.len());
        let mut off = 0;
        for &k in &self.layout {
            out.push(flat[off..off + k].to_vec());
            off += k;
        }
        out
    }
}

/// Click counts, one row per input state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountsData {
    rows: Vec<Vec<u64>>,
}

impl CountsData {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidCounts("no rows".into()));
        }
        Ok(CountsData { rows })
    }

    pub fn zeros(layout: &[usize]) -> Self {
        CountsData { rows: layout.iter().map(|&k| vec![0; k]).collect() }
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_totals().iter().sum()
    }

    pub fn layout(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.len()).collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().map(|&n| n as f64).collect()
    }

    pub fn check_scheme(&self, scheme: &TomographyScheme) -> Result<()> {
        if self.layout() != scheme.layout() {
            return Err(Error::InvalidCounts(format!(
                "counts layout {:?} does not match scheme layout {:?}",
                self.layout(),
                scheme.layout()
            )));
        }
        Ok(())
    }

    /// Reads a headerless CSV (rows = inputs, columns = outcomes).
    /// A first line that is not entirely numeric is treated as a header.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<u64>, _> = rec.iter().map(|f| f.parse::<u64>()).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if line == 0 => continue,
                Err(e) => return Err(Error::InvalidCounts(format!("line {}: {e}", line + 1))),
            }
        }
        CountsData::new(rows)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for row in &self.rows {
            wtr.write_record(row.iter().map(|n| n.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum PriorSpec {
    /// Uniform in the Born probabilities.
    Primitive,
    /// `Π (p_k⁽ⁱ⁾)^{β p̄_k⁽ⁱ⁾}`.
    Conjugate { strength: f64, reference: ProbTable },
}

impl PriorSpec {
    pub fn conjugate(strength: f64, reference: ProbTable) -> Result<Self> {
        if !(strength >= 0.0) || !strength.is_finite() {
            return Err(Error::InvalidPrior(format!("strength {strength} must be nonnegative")));
        }
        for row in &reference {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidPrior("reference probabilities must be row-normalized".into()));
            }
        }
        Ok(PriorSpec::Conjugate { strength, reference })
    }

    /// Exponents `β p̄` in flat layout, or zeros for the primitive prior.
    pub fn exponents(&self, layout: &[usize]) -> Result<Vec<f64>> {
        let total: usize = layout.iter().sum();
        match self {
            PriorSpec::Primitive => Ok(vec![0.0; total]),
            PriorSpec::Conjugate { strength, reference } => {
                let shape: Vec<usize> = reference.iter().map(|r| r.len()).collect();
                if shape != layout {
                    return Err(Error::InvalidPrior("reference layout does not match scheme".into()));
                }
                Ok(reference.iter().flatten().map(|p| strength * p).collect())
            }
        }
    }
}

/// `Σ w log p` with the convention `0·log p = 0`.
pub(crate) fn weighted_log(p: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &wi) in p.iter().zip(w) {
        if wi != 0.0 {
            if !(pi > 0.0) {
                return f64::NEG_INFINITY;
            }
            acc += wi * pi.ln();
        }
    }
    acc
}

fn check_shape(p: &ProbTable, layout: &[usize]) -> Result<()> {
    let shape: Vec<usize> = p.iter().map(|r| r.len()).collect();
    if shape != layout {
        return Err(Error::DimensionMismatch { expected: layout.iter().sum(), got: shape.iter().sum() });
    }
    Ok(())
}

pub fn log_likelihood(p: &ProbTable, counts: &CountsData) -> Result<f64> {
    check_shape(p, &counts.layout())?;
    let flat: Vec<f64> = p.iter().flatten().cloned().collect();
    Ok(weighted_log(&flat, &counts.flat()))
}

pub fn log_prior(p: &ProbTable, prior: &PriorSpec) -> Result<f64> {
    let layout: Vec<usize> = p.iter().map(|r| r.len()).collect();
    let e = prior.exponents(&layout)?;
    let flat: Vec<f64> = p.iter().flatten().cloned().collect();
    Ok(weighted_log(&flat, &e))
}

/// Independent multinomial draws per input.
pub fn simulate_counts(rho: &ChoiState, scheme: &TomographyScheme, copies: u64, seed: u64) -> Result<CountsData> {
    let probs = duality::born_probabilities(rho, scheme)?;
    simulate_from_probabilities(&probs, copies, seed)
}

pub fn simulate_from_probabilities(probs: &ProbTable, copies: u64, seed: u64) -> Result<CountsData> {
    simulate_with_copies(probs, &vec![copies; probs.len()], seed)
}

/// `total` copies spread as evenly as possible over `inputs`, earlier inputs first.
pub fn split_copies(total: u64, inputs: usize) -> Vec<u64> {
    let q = total / inputs as u64;
    let r = (total % inputs as u64) as usize;
    (0..inputs).map(|i| q + u64::from(i < r)).collect()
}

/// Multinomial draws with `copies[i]` uses of input `i`.
pub fn simulate_with_copies(probs: &ProbTable, copies: &[u64], seed: u64) -> Result<CountsData> {
    if copies.len() != probs.len() {
        return Err(Error::DimensionMismatch { expected: probs.len(), got: copies.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(probs.len());
    for (row, &copies) in probs.iter().zip(copies) {
        let mut left = copies;
        let mut mass = 1.0;
        let mut out = vec![0u64; row.len()];
        for (k, &p) in row.iter().enumerate() {
            if k + 1 == row.len() {
                out[k] = left;
                break;
            }
            let q = if mass > 0.0 { (p.max(0.0) / mass).clamp(0.0, 1.0) } else { 0.0 };
            let x = if left == 0 { 0 } else { Binomial::new(left, q).map_err(|e| Error::Numerical(e.to_string()))?.sample(&mut rng) };
            out[k] = x;
            left -= x;
            mass -= p.max(0.0);
        }
        rows.push(out);
    }
    CountsData::new(rows)
}

#[derive(Clone, Debug)]
pub struct MleOptions {
    pub starts: usize,
    pub seed: u64,
    /// Additional starting points tried before the random ones.
    pub initial: Vec<Vec<f64>>,
    pub bfgs: BfgsOptions,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { starts: 20, seed: 0, initial: Vec::new(), bfgs: BfgsOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct MleResult {
    pub params: Vec<f64>,
    pub log_lmax: f64,
    pub choi: ChoiState,
}

/// Negative log-likelihood as a function of family parameters.
pub(crate) fn neg_log_likelihood(family: &dyn ChannelFamily, map: &ProbabilityMap, counts: &[f64], x: &[f64]) -> f64 {
    let p = map.probabilities_of(|buf| family.choi_into(x, buf));
    let v = -weighted_log(&p, counts);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

pub fn max_log_likelihood(
    counts: &CountsData,
    scheme: &TomographyScheme,
    family: &dyn ChannelFamily,
    opts: &MleOptions,
) -> Result<MleResult> {
    counts.check_scheme(scheme)?;
    if family.dim() != scheme.dim() {
        return Err(Error::DimensionMismatch { expected: scheme.dim(), got: family.dim() });
    }
    let map = scheme.probability_map();
    let n = counts.flat();
    let mut starts = opts.initial.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.starts {
        starts.push(family.random_params(&mut rng));
    }
    let results: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .filter_map(|x0| {
            let f = |x: &[f64]| neg_log_likelihood(family, &map, &n, x);
            if !f(x0).is_finite() {
                return None;
            }
            let r = optim::bfgs(f, x0, &opts.bfgs);
            r.value.is_finite().then_some((r.x, r.value))
        })
        .collect();
    let (params, value) = results
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Numerical("all likelihood maximization starts failed".into()))?;
    let choi = family.choi(&params)?;
    Ok(MleResult { params, log_lmax: -value, choi })
}

/// Maximum of `Σ n log p` over unconstrained probability tables.
pub fn saturated_log_likelihood(counts: &CountsData) -> f64 {
    counts
        .rows()
        .iter()
        .map(|row| {
            let tot: u64 = row.iter().sum();
            row.iter().filter(|&&k| k > 0).map(|&k| k as f64 * (k as f64 / tot as f64).ln()).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::{amplitude_damping, choi_from_kraus, depolarizing_channel, identity_channel, pauli_channel};
    use crate::family::{family, FamilyKind};

    #[test]
    fn tetrahedron_scheme() {
        let s = scheme_tetrahedron();
        let sum: CMat = s.povms()[0].iter().sum();
        assert!(linalg::approx_eq(&sum, &linalg::identity(2), 1e-15));
        for rho in s.inputs() {
            assert!((linalg::trace(&(rho * rho)).re - 1.0).abs() < 1e-15);
        }
        let lam = s.pseudo_povm();
        assert_eq!(lam.iter().map(|r| r.len()).sum::<usize>(), 16);
        for (i, row) in lam.iter().enumerate() {
            let mut tot = CMat::zeros(4, 4);
            for l in row {
                assert!(linalg::min_eigenvalue(l) > -1e-15);
                tot += l;
            }
            let expect = s.inputs()[i].transpose().kronecker(&linalg::identity(2));
            assert!(linalg::approx_eq(&tot, &expect, 1e-10));
        }
    }

    #[test]
    fn sic_scheme() {
        let v = qutrit_sic_vectors();
        for (i, a) in v.iter().enumerate() {
            assert!((a.norm() - 1.0).abs() < 1e-15);
            for b in v.iter().skip(i + 1) {
                assert!((a.dotc(b).norm_sqr() - 0.25).abs() < 1e-12);
            }
        }
        let s = scheme_qutrit_sic();
        let sum: CMat = s.povms()[0].iter().sum();
        assert!(linalg::approx_eq(&sum, &linalg::identity(3), 1e-12));
    }

    #[test]
    fn born_examples() {
        let s = scheme_tetrahedron();
        let p = duality::born_probabilities(&identity_channel(2), &s).unwrap();
        for (i, row) in p.iter().enumerate() {
            for (k, &x) in row.iter().enumerate() {
                let expect = if i == k { 0.5 } else { 1.0 / 6.0 };
                assert!((x - expect).abs() < 1e-15);
            }
        }
        let p = duality::born_probabilities(&depolarizing_channel(2), &s).unwrap();
        assert!(p.iter().flatten().all(|&x| (x - 0.25).abs() < 1e-15));
        let k = amplitude_damping(0.4).unwrap();
        let rho = choi_from_kraus(&k).unwrap();
        let p = duality::born_probabilities(&rho, &s).unwrap();
        for (i, row) in p.iter().enumerate() {
            let out = k.apply(&s.inputs()[i]).unwrap();
            for (kk, &x) in row.iter().enumerate() {
                let direct = linalg::trace(&(&s.povms()[i][kk] * &out)).re;
                assert!((x - direct).abs() < 1e-12);
            }
        }
        let map = s.probability_map();
        let flat = map.probabilities_of(|b| b.copy_from_slice(&linalg::to_flat(rho.matrix())));
        assert_eq!(map.to_table(&flat).len(), 4);
        for (a, b) in flat.iter().zip(p.iter().flatten()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn likelihood_examples() {
        let t1 = crate::fixtures::table1();
        assert_eq!(t1.total(), 96);
        let uniform = vec![vec![0.25; 4]; 4];
        assert!((log_likelihood(&uniform, &t1).unwrap() - 96.0 * 0.25f64.ln()).abs() < 1e-12);
        let zeros = CountsData::zeros(&[4, 4, 4, 4]);
        assert_eq!(log_likelihood(&uniform, &zeros).unwrap(), 0.0);
        let mut bad = uniform.clone();
        bad[0][0] = 0.0;
        assert_eq!(log_likelihood(&bad, &t1).unwrap(), f64::NEG_INFINITY);
        assert!(log_likelihood(&vec![vec![0.5; 2]], &t1).is_err());
    }

    #[test]
    fn likelihood_high_precision_value() {
        // Reference value computed with 50-digit arithmetic.
        let rho = choi_from_kraus(&amplitude_damping(0.4).unwrap()).unwrap();
        let p = duality::born_probabilities(&rho, &scheme_tetrahedron()).unwrap();
        let v = log_likelihood(&p, &crate::fixtures::table1()).unwrap();
        assert!((v - -130.288_327_585_748_49).abs() < 1e-9, "{v}");
    }

    #[test]
    fn prior_examples() {
        let p = vec![vec![0.1, 0.2, 0.3, 0.4]; 4];
        assert_eq!(log_prior(&p, &PriorSpec::Primitive).unwrap(), 0.0);
        let reference = vec![vec![0.1, 0.2, 0.3, 0.4]; 4];
        let zero = PriorSpec::conjugate(0.0, reference.clone()).unwrap();
        assert_eq!(log_prior(&p, &zero).unwrap(), 0.0);
        let pr = PriorSpec::conjugate(48.0, reference.clone()).unwrap();
        let best = log_prior(&reference, &pr).unwrap();
        let other = vec![vec![0.15, 0.2, 0.25, 0.4]; 4];
        assert!(log_prior(&other, &pr).unwrap() < best);
        assert!(PriorSpec::conjugate(48.0, vec![vec![0.5, 0.6]]).is_err());
        assert!(PriorSpec::conjugate(-1.0, reference).is_err());
    }

    #[test]
    fn simulation_totals_and_determinism() {
        let rho = choi_from_kraus(&amplitude_damping(0.4).unwrap()).unwrap();
        let s = scheme_tetrahedron();
        let a = simulate_counts(&rho, &s, 24, 7).unwrap();
        assert_eq!(a.total(), 96);
        assert_eq!(a, simulate_counts(&rho, &s, 24, 7).unwrap());
        let q = choi_from_kraus(&duality::qutrit_amplitude_damping(0.1, 0.5).unwrap()).unwrap();
        assert_eq!(simulate_counts(&q, &scheme_qutrit_sic(), 27, 7).unwrap().total(), 243);
        let z = simulate_counts(&rho, &s, 0, 7).unwrap();
        assert_eq!(z.total(), 0);
    }

    #[test]
    fn simulation_large_n() {
        let rho = choi_from_kraus(&amplitude_damping(0.4).unwrap()).unwrap();
        let s = scheme_tetrahedron();
        let n = 1_000_000u64;
        let counts = simulate_counts(&rho, &s, n, 9).unwrap();
        let p = duality::born_probabilities(&rho, &s).unwrap();
        for (row, prow) in counts.rows().iter().zip(&p) {
            for (&k, &pk) in row.iter().zip(prow) {
                let sigma = (n as f64 * pk * (1.0 - pk)).sqrt();
                assert!((k as f64 - n as f64 * pk).abs() < 4.0 * sigma);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = crate::fixtures::table2();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(CountsData::read_csv(buf.as_slice()).unwrap(), t);
        let with_header = "a,b\n1,2\n3,4\n";
        assert_eq!(CountsData::read_csv(with_header.as_bytes()).unwrap().rows(), &[vec![1, 2], vec![3, 4]]);
        assert!(CountsData::read_csv("1,2\nx,4\n".as_bytes()).is_err());
    }

    #[test]
    fn scheme_json_round_trip() {
        let s = scheme_qutrit_sic();
        let mut buf = Vec::new();
        s.write_json(&mut buf).unwrap();
        let back = TomographyScheme::read_json(buf.as_slice()).unwrap();
        for (a, b) in s.inputs().iter().zip(back.inputs()) {
            assert!(linalg::approx_eq(a, b, 1e-15));
        }
        let bad = r#"{"d":2,"inputs":[],"povms":[],"extra":1}"#;
        assert!(TomographyScheme::read_json(bad.as_bytes()).is_err());
    }

    #[test]
    fn mle_proportional_counts() {
        // Pauli (0.05, 0.15, 0.2) has Born probabilities in multiples of 1/60.
        let s = scheme_tetrahedron();
        let p = duality::born_probabilities(&pauli_channel(0.05, 0.15, 0.2).unwrap(), &s).unwrap();
        let rows: Vec<Vec<u64>> = p.iter().map(|r| r.iter().map(|x| (x * 60.0).round() as u64).collect()).collect();
        let counts = CountsData::new(rows).unwrap();
        let fam = family(FamilyKind::General, 2).unwrap();
        let r = max_log_likelihood(&counts, &s, fam.as_ref(), &MleOptions { starts: 6, ..Default::default() }).unwrap();
        assert!((r.log_lmax - saturated_log_likelihood(&counts)).abs() < 1e-6, "{} vs {}", r.log_lmax, saturated_log_likelihood(&counts));
    }

    #[test]
    fn mle_nested_dephasing_below_general() {
        let s = scheme_tetrahedron();
        let counts = simulate_counts(&pauli_channel(0.1, 0.05, 0.2).unwrap(), &s, 50, 3).unwrap();
        let opts = MleOptions { starts: 5, ..Default::default() };
        let dep = max_log_likelihood(&counts, &s, family(FamilyKind::Dephasing, 2).unwrap().as_ref(), &opts).unwrap();
        let gen = max_log_likelihood(&counts, &s, family(FamilyKind::General, 2).unwrap().as_ref(), &opts).unwrap();
        assert!(dep.log_lmax <= gen.log_lmax + 1e-9);
        assert!(gen.log_lmax <= saturated_log_likelihood(&counts) + 1e-9);
    }
}
