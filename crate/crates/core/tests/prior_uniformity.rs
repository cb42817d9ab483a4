//! The HMC-sampled primitive prior on qubit channels against rejection
//! sampling of the uniform distribution on the physical probability set.

use cptp_hmc::family::{family, FamilyKind};
use cptp_hmc::hmc::{self, HmcConfig};
use cptp_hmc::linalg::{self, c, CMat, C64};
use cptp_hmc::target::{sample_channels, SamplerConfig};
use cptp_hmc::tomo::{self, PriorSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn choi_basis() -> Vec<CMat> {
    let s = linalg::pauli();
    let id = linalg::identity(2);
    let mut out = vec![id.kronecker(&id) * c(0.5, 0.0)];
    for j in 0..3 {
        out.push(id.kronecker(&s[j]) * c(0.5, 0.0));
    }
    for i in 0..3 {
        for j in 0..3 {
            out.push(s[i].kronecker(&s[j]) * c(0.5, 0.0));
        }
    }
    out
}

/// Hermitian Cholesky with real pivots.
fn positive_definite(m: &CMat) -> bool {
    let n = m.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 {
            return false;
        }
        let dj = d.sqrt();
        l[(j, j)] = C64::new(dj, 0.0);
        for i in j + 1..n {
            let mut z = m[(i, j)];
            for k in 0..j {
                z -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = z / dj;
        }
    }
    true
}

/// Uniform draws on the physical set: Dirichlet rows, linear inversion, PSD test.
fn rejection_sample(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let tet = tomo::scheme_tetrahedron();
    let map = tet.probability_map();
    let basis = choi_basis();
    let cols: Vec<Vec<f64>> = basis.iter().map(|b| map.probabilities_of(|buf| buf.copy_from_slice(&linalg::to_flat(b)))).collect();
    let m = DMatrix::from_fn(16, cols.len(), |r, j| cols[j][r]);
    let pinv = m.pseudo_inverse(1e-12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut p = DVector::zeros(16);
        for i in 0..4 {
            let e: Vec<f64> = (0..4).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let s: f64 = e.iter().sum();
            for k in 0..4 {
                p[4 * i + k] = e[k] / s;
            }
        }
        let x = &pinv * &p;
        let mut rho = CMat::zeros(4, 4);
        for (xi, b) in x.iter().zip(&basis) {
            rho += b * C64::new(*xi, 0.0);
        }
        if positive_definite(&rho) {
            out.push(p.as_slice().to_vec());
        }
    }
    out
}

fn two_sample_chi2_p(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let mut pooled: Vec<f64> = a.iter().chain(b).cloned().collect();
    pooled.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins).map(|k| pooled[k * pooled.len() / bins]).collect();
    let count = |xs: &[f64]| {
        let mut h = vec![0.0; bins];
        for &x in xs {
            h[edges.partition_point(|&e| e <= x)] += 1.0;
        }
        h
    };
    let (ha, hb) = (count(a), count(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut chi2 = 0.0;
    let mut df = -1.0;
    for (x, y) in ha.iter().zip(&hb) {
        if x + y > 0.0 {
            chi2 += ((nb / na).sqrt() * x - (na / nb).sqrt() * y).powi(2) / (x + y);
            df += 1.0;
        }
    }
    1.0 - ChiSquared::new(df).unwrap().cdf(chi2)
}

#[test]
fn hmc_prior_matches_rejection_oracle() {
    let oracle = rejection_sample(3000, 11);
    let fam = family(FamilyKind::General, 2).unwrap();
    let tet = tomo::scheme_tetrahedron();
    let cfg = SamplerConfig { hmc: HmcConfig { draws: 60_000, seed: 12, ..Default::default() }, ..Default::default() };
    let set = sample_channels(fam.as_ref(), &tet, &PriorSpec::Primitive, None, None, &cfg).unwrap();
    let free = tet.probability_map().free_indices().to_vec();
    let tau = free
        .iter()
        .map(|&f| hmc::integrated_autocorrelation_time(&set.probs.iter().map(|p| p[f]).collect::<Vec<_>>()))
        .fold(1.0, f64::max);
    let stride = tau.ceil() as usize;
    for &f in &free {
        let h: Vec<f64> = set.probs.iter().step_by(stride).map(|p| p[f]).collect();
        let o: Vec<f64> = oracle.iter().map(|p| p[f]).collect();
        let pv = two_sample_chi2_p(&h, &o, 50);
        assert!(pv > 0.01, "outcome {f}: p-value {pv} (stride {stride}, {} draws)", h.len());
    }
}
