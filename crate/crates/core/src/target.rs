//! Prior and posterior densities over channel-family charts, and sample sets
//! drawn from them.

use crate::error::{Error, Result};
use crate::family::ChannelFamily;
use crate::hmc::{self, HmcConfig, LogDensity};
use crate::linalg::{C64, ZERO};
use crate::tomo::{weighted_log, CountsData, PriorSpec, ProbabilityMap, TomographyScheme};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Extra log-density term as a function of the row-major Choi buffer.
pub type Tilt = Arc<dyn Fn(&[C64]) -> f64 + Send + Sync>;

/// `log w(x) = log vol(x) + Σ (β p̄ + n) log p(x) + tilt(ρ(x))`.
pub struct ChannelTarget<'a> {
    family: &'a dyn ChannelFamily,
    map: ProbabilityMap,
    exponents: Vec<f64>,
    tilt: Option<Tilt>,
}

impl<'a> ChannelTarget<'a> {
    /// Prior density when `counts` is `None`, posterior otherwise.
    pub fn new(
        family: &'a dyn ChannelFamily,
        scheme: &TomographyScheme,
        prior: &PriorSpec,
        counts: Option<&CountsData>,
    ) -> Result<Self> {
        if family.dim() != scheme.dim() {
            return Err(Error::DimensionMismatch { expected: scheme.dim(), got: family.dim() });
        }
        let map = scheme.probability_map();
        let mut exponents = prior.exponents(map.layout())?;
        if let Some(c) = counts {
            c.check_scheme(scheme)?;
            for (e, n) in exponents.iter_mut().zip(c.flat()) {
                *e += n;
            }
        }
        Ok(ChannelTarget { family, map, exponents, tilt: None })
    }

    pub fn with_tilt(mut self, tilt: Tilt) -> Self {
        self.tilt = Some(tilt);
        self
    }

    pub fn family(&self) -> &dyn ChannelFamily {
        self.family
    }

    pub fn map(&self) -> &ProbabilityMap {
        &self.map
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.map.probabilities_of(|b| self.family.choi_into(x, b))
    }

    fn evaluate(&self, x: &[f64], buf: &mut [C64], probs: &mut [f64]) -> f64 {
        let lv = self.family.choi_with_volume(x, buf);
        if !lv.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.map.probabilities(buf, probs);
        let mut v = lv + weighted_log(probs, &self.exponents);
        if let Some(t) = &self.tilt {
            v += t(buf);
        }
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

impl LogDensity for ChannelTarget<'_> {
    fn dim(&self) -> usize {
        self.family.n_params()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let n = self.family.dim() * self.family.dim();
        let mut buf = vec![ZERO; n * n];
        let mut probs = vec![0.0; self.map.n_outcomes()];
        self.evaluate(x, &mut buf, &mut probs)
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub hmc: HmcConfig,
    pub chains: usize,
    /// Use exact draws for families that support them when the target is the primitive prior.
    pub allow_direct: bool,
    /// Random candidates screened for each chain's starting point.
    pub start_candidates: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { hmc: HmcConfig::default(), chains: 1, allow_direct: true, start_candidates: 64 }
    }
}

/// Draws in chart coordinates with their cached Born probabilities.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub params: Vec<Vec<f64>>,
    /// Flat Born probabilities per draw.
    pub probs: Vec<Vec<f64>>,
    pub log_w: Vec<f64>,
    pub chain_lengths: Vec<usize>,
    /// Mean acceptance over chains, `1` for exact draws.
    pub acceptance_rate: f64,
    pub step_size: Option<f64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn log_likelihoods(&self, counts: &CountsData) -> Vec<f64> {
        let n = counts.flat();
        self.probs.iter().map(|p| weighted_log(p, &n)).collect()
    }

    /// Effective sample size of a per-draw series, summed over chains.
    pub fn ess_of(&self, series: &[f64]) -> f64 {
        let mut off = 0;
        let mut total = 0.0;
        for &len in &self.chain_lengths {
            let part = &series[off..off + len];
            total += if self.step_size.is_none() { len as f64 } else { hmc::effective_sample_size(part) };
            off += len;
        }
        total
    }
}

fn start_point(target: &ChannelTarget, rng: &mut ChaCha8Rng, candidates: usize) -> Result<Vec<f64>> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..candidates.max(1) {
        let x = target.family.random_params(rng);
        let v = target.log_density(&x);
        if v.is_finite() && best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, x));
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::Numerical("no starting point with finite density".into()))
}

/// Samples `target`; exact draws are used when the family supports them and
/// the target is a pure primitive prior.
pub fn sample_target(target: &ChannelTarget, cfg: &SamplerConfig, direct_ok: bool) -> Result<SampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.hmc.seed);
    let fam = target.family;
    if direct_ok && cfg.allow_direct && target.tilt.is_none() && target.exponents.iter().all(|&e| e == 0.0) {
        if let Some(first) = fam.direct_sample(&mut rng) {
            let mut params = vec![first];
            for _ in 1..cfg.hmc.draws {
                params.push(fam.direct_sample(&mut rng).expect("direct sampler"));
            }
            let probs: Vec<Vec<f64>> = params.iter().map(|x| target.probabilities(x)).collect();
            let log_w = vec![0.0; params.len()];
            let n = params.len();
            return Ok(SampleSet { params, probs, log_w, chain_lengths: vec![n], acceptance_rate: 1.0, step_size: None });
        }
    }
    let chains = cfg.chains.max(1);
    let per_chain = cfg.hmc.draws.div_ceil(chains);
    let mut starts = Vec::with_capacity(chains);
    for _ in 0..chains {
        starts.push(start_point(target, &mut rng, cfg.start_candidates)?);
    }
    let hc = HmcConfig { draws: per_chain, ..cfg.hmc.clone() };
    let results = hmc::sample_chains(target, &hc, &starts)?;
    let mut set = SampleSet {
        params: Vec::new(),
        probs: Vec::new(),
        log_w: Vec::new(),
        chain_lengths: Vec::new(),
        acceptance_rate: 0.0,
        step_size: Some(0.0),
    };
    for ch in results {
        set.chain_lengths.push(ch.draws.len());
        set.acceptance_rate += ch.acceptance_rate / chains as f64;
        set.step_size = Some(set.step_size.unwrap_or(0.0) + ch.step_size / chains as f64);
        for (x, lw) in ch.draws.into_iter().zip(ch.log_w) {
            set.probs.push(target.probabilities(&x));
            set.params.push(x);
            set.log_w.push(lw);
        }
    }
    Ok(set)
}

/// Convenience wrapper building the target first.
pub fn sample_channels(
    family: &dyn ChannelFamily,
    scheme: &TomographyScheme,
    prior: &PriorSpec,
    counts: Option<&CountsData>,
    tilt: Option<Tilt>,
    cfg: &SamplerConfig,
) -> Result<SampleSet> {
    let mut t = ChannelTarget::new(family, scheme, prior, counts)?;
    if let Some(tl) = tilt {
        t = t.with_tilt(tl);
    }
    sample_target(&t, cfg, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality;
    use crate::family::{family, FamilyKind};
    use crate::tomo;

    #[test]
    fn posterior_adds_counts() {
        let fam = family(FamilyKind::General, 2).unwrap();
        let tet = tomo::scheme_tetrahedron();
        let counts = crate::fixtures::table1();
        let prior = ChannelTarget::new(fam.as_ref(), &tet, &PriorSpec::Primitive, None).unwrap();
        let post = ChannelTarget::new(fam.as_ref(), &tet, &PriorSpec::Primitive, Some(&counts)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = fam.random_params(&mut rng);
            let p = prior.probabilities(&x);
            let ll = weighted_log(&p, &counts.flat());
            assert!((post.log_density(&x) - prior.log_density(&x) - ll).abs() < 1e-9);
        }
    }

    #[test]
    fn tilt_is_added() {
        let fam = family(FamilyKind::Pauli, 2).unwrap();
        let tet = tomo::scheme_tetrahedron();
        let base = ChannelTarget::new(fam.as_ref(), &tet, &PriorSpec::Primitive, None).unwrap();
        let tilted = ChannelTarget::new(fam.as_ref(), &tet, &PriorSpec::Primitive, None)
            .unwrap()
            .with_tilt(Arc::new(|b: &[C64]| b[0].re));
        let x = [0.4, 0.9, 1.3];
        let rho = fam.choi(&x).unwrap();
        assert!((tilted.log_density(&x) - base.log_density(&x) - rho.matrix()[(0, 0)].re).abs() < 1e-12);
    }

    #[test]
    fn every_draw_is_a_channel() {
        let tet = tomo::scheme_tetrahedron();
        let cfg = SamplerConfig { hmc: HmcConfig { draws: 300, seed: 2, ..Default::default() }, ..Default::default() };
        for kind in FamilyKind::NESTED {
            let fam = family(kind, 2).unwrap();
            let set = sample_channels(fam.as_ref(), &tet, &PriorSpec::Primitive, None, None, &cfg).unwrap();
            assert_eq!(set.len(), 300);
            for x in &set.params {
                let rho = fam.choi(x).unwrap();
                assert!(linalg_min_eig(&rho) >= -1e-10);
                assert!(rho.tp_defect() <= 1e-10);
                if kind != FamilyKind::General {
                    assert!(rho.unital_defect() <= 1e-10);
                }
            }
            for p in &set.probs {
                assert!(p.iter().all(|&v| v >= -1e-12));
            }
        }
    }

    fn linalg_min_eig(rho: &duality::ChoiState) -> f64 {
        crate::linalg::min_eigenvalue(rho.matrix())
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let fam = family(FamilyKind::Unital, 2).unwrap();
        let tet = tomo::scheme_tetrahedron();
        let cfg = SamplerConfig { hmc: HmcConfig { draws: 200, seed: 3, ..Default::default() }, ..Default::default() };
        let a = sample_channels(fam.as_ref(), &tet, &PriorSpec::Primitive, None, None, &cfg).unwrap();
        let b = sample_channels(fam.as_ref(), &tet, &PriorSpec::Primitive, None, None, &cfg).unwrap();
        assert_eq!(a.params, b.params);
    }
}
