//! Model selection over the nested qubit families (AIC, BIC, relative belief)
//! and the harness that scores the criteria on simulated data.

use crate::error::{Error, Result};
use crate::family::{embed, family, FamilyKind};
use crate::hmc::chain_seed;
use crate::linalg::{log_mean_exp, log_sum_exp};
use crate::target::{sample_channels, SampleSet, SamplerConfig};
use crate::tomo::{self, max_log_likelihood, split_copies, simulate_with_copies, CountsData, MleOptions, PriorSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const N_MODELS: usize = 5;
/// Relative tolerance for equal relative belief ratios.
pub const RBR_TIE: f64 = 1e-9;

pub fn aic(log_lmax: f64, k: usize) -> f64 {
    2.0 * k as f64 - 2.0 * log_lmax
}

pub fn bic(log_lmax: f64, k: usize, n: u64) -> f64 {
    k as f64 * (n as f64).ln() - 2.0 * log_lmax
}

/// Index of the smallest value; ties go to the earlier (smaller) family.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Primitive-prior draws for one family: direct for dephasing and Pauli, HMC otherwise.
pub fn sample_family(kind: FamilyKind, draws: usize, seed: u64, sampler: &SamplerConfig) -> Result<SampleSet> {
    if draws == 0 {
        return Err(Error::Config("need at least one draw".into()));
    }
    let fam = family(kind, 2)?;
    let mut cfg = sampler.clone();
    cfg.hmc.draws = draws;
    cfg.hmc.seed = seed;
    cfg.allow_direct = true;
    sample_channels(fam.as_ref(), &tomo::scheme_tetrahedron(), &PriorSpec::Primitive, None, None, &cfg)
}

/// Per-family prior samples stored as log-probabilities.
#[derive(Clone, Debug)]
pub struct PriorSamples {
    pub sets: Vec<SampleSet>,
    log_p: Vec<Vec<f64>>,
    width: usize,
}

impl PriorSamples {
    pub fn from_sets(sets: Vec<SampleSet>) -> Result<Self> {
        if sets.len() != N_MODELS || sets.iter().any(|s| s.is_empty()) {
            return Err(Error::Config("need a nonempty sample for each of the five families".into()));
        }
        let width = sets[0].probs[0].len();
        let log_p = sets.iter().map(|s| s.probs.iter().flat_map(|p| p.iter().map(|v| v.ln())).collect()).collect();
        Ok(PriorSamples { sets, log_p, width })
    }

    pub fn draw(draws: usize, seed: u64, sampler: &SamplerConfig) -> Result<Self> {
        let sets = FamilyKind::NESTED
            .iter()
            .enumerate()
            .map(|(i, &k)| sample_family(k, draws, chain_seed(seed, i), sampler))
            .collect::<Result<Vec<_>>>()?;
        Self::from_sets(sets)
    }

    /// `log L(D|ρ)` for every draw of family `m`.
    pub fn log_likelihoods(&self, m: usize, counts: &[f64]) -> Vec<f64> {
        let nz: Vec<(usize, f64)> = counts.iter().cloned().enumerate().filter(|&(_, c)| c != 0.0).collect();
        self.log_p[m]
            .chunks(self.width)
            .map(|lp| nz.iter().map(|&(k, c)| c * lp[k]).sum::<f64>())
            .map(|v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v })
            .collect()
    }
}

/// Posterior model probabilities, RBR and strength from per-model `log mean L`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelativeBelief {
    pub log_evidence: f64,
    pub posterior: Vec<f64>,
    pub rbr: Vec<f64>,
    pub strength: Vec<f64>,
    pub choice: Option<usize>,
}

pub fn relative_belief(log_mean_l: &[f64]) -> RelativeBelief {
    let m = log_mean_l.len() as f64;
    let log_evidence = log_sum_exp(log_mean_l) - m.ln();
    let posterior: Vec<f64> = if log_evidence.is_finite() {
        log_mean_l.iter().map(|v| (v - log_evidence).exp() / m).collect()
    } else {
        vec![1.0 / m; log_mean_l.len()]
    };
    let rbr: Vec<f64> = posterior.iter().map(|p| p * m).collect();
    let tie = |a: f64, b: f64| (a - b).abs() <= RBR_TIE * a.abs().max(b.abs());
    let strength = rbr
        .iter()
        .map(|&r0| rbr.iter().zip(&posterior).filter(|(&r, _)| tie(r, r0)).map(|(_, &p)| p).sum())
        .collect();
    let mut choice: Option<usize> = None;
    for (i, &r) in rbr.iter().enumerate() {
        if r > 1.0 && !tie(r, 1.0) && choice.is_none_or(|c| posterior[i] > posterior[c] && !tie(posterior[i], posterior[c])) {
            choice = Some(i);
        }
    }
    RelativeBelief { log_evidence, posterior, rbr, strength, choice }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyScore {
    pub family: FamilyKind,
    pub k: usize,
    pub log_lmax: f64,
    pub aic: f64,
    pub bic: f64,
    pub rbr: f64,
    pub posterior: f64,
    pub strength: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectionReport {
    pub copies: u64,
    pub families: Vec<FamilyScore>,
    pub log_evidence: f64,
    pub aic_choice: FamilyKind,
    pub bic_choice: FamilyKind,
    /// `None` when no family has RBR above one.
    pub rbr_choice: Option<FamilyKind>,
}

impl SelectionReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["family", "k", "log_lmax", "aic", "bic", "rbr", "posterior", "strength"])?;
        for f in &self.families {
            wr.write_record(&[
                f.family.to_string(),
                f.k.to_string(),
                f.log_lmax.to_string(),
                f.aic.to_string(),
                f.bic.to_string(),
                f.rbr.to_string(),
                f.posterior.to_string(),
                f.strength.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// MLE in every family, each warm-started from the previous family's optimum
/// and the best prior draw, and floored by it so the maxima are nested.
pub fn nested_mle(counts: &CountsData, samples: Option<&PriorSamples>, opts: &MleOptions) -> Result<Vec<f64>> {
    let scheme = tomo::scheme_tetrahedron();
    let flat = counts.flat();
    let mut out = Vec::with_capacity(N_MODELS);
    let mut prev: Option<(FamilyKind, Vec<f64>, f64)> = None;
    for (m, &kind) in FamilyKind::NESTED.iter().enumerate() {
        let fam = family(kind, 2)?;
        let mut o = opts.clone();
        if let Some(s) = samples {
            let ll = s.log_likelihoods(m, &flat);
            if let Some((i, _)) = ll.iter().enumerate().filter(|(_, v)| v.is_finite()).max_by(|a, b| a.1.total_cmp(b.1)) {
                o.initial.push(s.sets[m].params[i].clone());
            }
        }
        if let Some((pk, px, _)) = &prev {
            o.initial.push(embed(*pk, px, kind)?);
        }
        let r = max_log_likelihood(counts, &scheme, fam.as_ref(), &o);
        let (x, v) = match (r, &prev) {
            (Ok(r), Some((_, _, pv))) if r.log_lmax < *pv => (embed(prev.as_ref().unwrap().0, &prev.as_ref().unwrap().1, kind)?, *pv),
            (Ok(r), _) => (r.params, r.log_lmax),
            (Err(_), Some((pk, px, pv))) => (embed(*pk, px, kind)?, *pv),
            (Err(e), None) => return Err(e),
        };
        out.push(v);
        prev = Some((kind, x, v));
    }
    Ok(out)
}

/// Scores all five families on tetrahedron data with `N = counts.total()`.
pub fn select_models(counts: &CountsData, samples: &PriorSamples, opts: &MleOptions) -> Result<SelectionReport> {
    counts.check_scheme(&tomo::scheme_tetrahedron())?;
    let n = counts.total();
    let lmax = nested_mle(counts, Some(samples), opts)?;
    let flat = counts.flat();
    let lml: Vec<f64> = (0..N_MODELS).map(|m| log_mean_exp(&samples.log_likelihoods(m, &flat))).collect();
    let rb = relative_belief(&lml);
    let families: Vec<FamilyScore> = FamilyKind::NESTED
        .iter()
        .enumerate()
        .map(|(m, &kind)| {
            let k = kind.n_params(2);
            FamilyScore {
                family: kind,
                k,
                log_lmax: lmax[m],
                aic: aic(lmax[m], k),
                bic: bic(lmax[m], k, n.max(1)),
                rbr: rb.rbr[m],
                posterior: rb.posterior[m],
                strength: rb.strength[m],
            }
        })
        .collect();
    let aics: Vec<f64> = families.iter().map(|f| f.aic).collect();
    let bics: Vec<f64> = families.iter().map(|f| f.bic).collect();
    Ok(SelectionReport {
        copies: n,
        aic_choice: FamilyKind::NESTED[argmin(&aics)],
        bic_choice: FamilyKind::NESTED[argmin(&bics)],
        rbr_choice: rb.choice.map(|i| FamilyKind::NESTED[i]),
        log_evidence: rb.log_evidence,
        families,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentConfig {
    pub channels_per_family: usize,
    pub copies: Vec<u64>,
    pub prior_draws: usize,
    pub seed: u64,
    pub mle_starts: usize,
    /// Stride between HMC draws used as true channels.
    pub truth_stride: usize,
}

impl AssessmentConfig {
    pub fn desk(seed: u64) -> Self {
        AssessmentConfig { channels_per_family: 100, copies: vec![20, 1000], prior_draws: 50_000, seed, mle_starts: 4, truth_stride: 20 }
    }

    pub fn paper(seed: u64) -> Self {
        AssessmentConfig {
            channels_per_family: 1000,
            copies: vec![20, 50, 100, 1000, 10_000, 100_000],
            prior_draws: 500_000,
            seed,
            mle_starts: 4,
            truth_stride: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
    Rbr,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Aic, Criterion::Bic, Criterion::Rbr];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
            Criterion::Rbr => "RBR",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Trial {
    pub truth: FamilyKind,
    pub channel: usize,
    pub copies: u64,
    pub aic: FamilyKind,
    pub bic: FamilyKind,
    pub rbr: Option<FamilyKind>,
    pub rbr_values: Vec<f64>,
}

impl Trial {
    pub fn choice(&self, c: &Criterion) -> Option<FamilyKind> {
        match c {
            Criterion::Aic => Some(self.aic),
            Criterion::Bic => Some(self.bic),
            Criterion::Rbr => self.rbr,
        }
    }

    pub fn against(&self, m: FamilyKind) -> bool {
        self.rbr_values[m.index()] < 1.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Assessment {
    pub config: AssessmentConfig,
    pub trials: Vec<Trial>,
}

impl Assessment {
    fn cell(&self, truth: FamilyKind, copies: u64) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(move |t| t.truth == truth && t.copies == copies)
    }

    /// Counts of each selected family (last slot: no choice).
    pub fn selection_counts(&self, c: &Criterion, truth: FamilyKind, copies: u64) -> [usize; N_MODELS + 1] {
        let mut out = [0; N_MODELS + 1];
        for t in self.cell(truth, copies) {
            out[t.choice(c).map_or(N_MODELS, |k| k.index())] += 1;
        }
        out
    }

    pub fn correct_rate(&self, c: &Criterion, truth: FamilyKind, copies: u64) -> f64 {
        let (hit, tot) = self.cell(truth, copies).fold((0, 0), |(h, n), t| (h + usize::from(t.choice(c) == Some(truth)), n + 1));
        hit as f64 / tot.max(1) as f64
    }

    /// Correct rate pooled over all true families.
    pub fn pooled_correct_rate(&self, c: &Criterion, copies: u64) -> f64 {
        FamilyKind::NESTED.iter().map(|&k| self.correct_rate(c, k, copies)).sum::<f64>() / N_MODELS as f64
    }

    pub fn against_rate(&self, truth: FamilyKind, copies: u64, model: FamilyKind) -> f64 {
        let (hit, tot) = self.cell(truth, copies).fold((0, 0), |(h, n), t| (h + usize::from(t.against(model)), n + 1));
        hit as f64 / tot.max(1) as f64
    }

    /// Evidence against the true family, pooled over all true families.
    pub fn pooled_against_true(&self, copies: u64) -> f64 {
        FamilyKind::NESTED.iter().map(|&k| self.against_rate(k, copies, k)).sum::<f64>() / N_MODELS as f64
    }

    /// `criterion,true_family,copies,<family counts...>,none`.
    pub fn write_selection_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut head = vec!["criterion".to_string(), "true_family".into(), "copies".into()];
        head.extend(FamilyKind::NESTED.iter().map(|k| k.to_string()));
        head.push("none".into());
        wr.write_record(&head)?;
        for c in &Criterion::ALL {
            for &truth in &FamilyKind::NESTED {
                for &n in &self.config.copies {
                    let mut row = vec![c.name().to_string(), truth.to_string(), n.to_string()];
                    row.extend(self.selection_counts(c, truth, n).iter().map(|v| v.to_string()));
                    wr.write_record(&row)?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// `true_family,copies,<evidence-against counts per model...>`.
    pub fn write_bias_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut head = vec!["true_family".to_string(), "copies".into()];
        head.extend(FamilyKind::NESTED.iter().map(|k| k.to_string()));
        wr.write_record(&head)?;
        for &truth in &FamilyKind::NESTED {
            for &n in &self.config.copies {
                let mut row = vec![truth.to_string(), n.to_string()];
                for &m in &FamilyKind::NESTED {
                    row.push(self.cell(truth, n).filter(|t| t.against(m)).count().to_string());
                }
                wr.write_record(&row)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// True channels (as probability tables) for each family.
fn true_channels(cfg: &AssessmentConfig, sampler: &SamplerConfig) -> Result<Vec<Vec<Vec<f64>>>> {
    FamilyKind::NESTED
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let stride = if k.direct_sampling() { 1 } else { cfg.truth_stride.max(1) };
            let set = sample_family(k, cfg.channels_per_family * stride, chain_seed(cfg.seed ^ 0x7275_7468, i), sampler)?;
            Ok(set.probs.iter().step_by(stride).take(cfg.channels_per_family).cloned().collect())
        })
        .collect()
}

/// Runs every criterion on simulated data from random channels of every family.
pub fn assess_criteria(cfg: &AssessmentConfig, sampler: &SamplerConfig) -> Result<Assessment> {
    if cfg.channels_per_family == 0 || cfg.copies.is_empty() || cfg.copies.contains(&0) {
        return Err(Error::Config("assessment needs channels and positive copy numbers".into()));
    }
    let samples = PriorSamples::draw(cfg.prior_draws, cfg.seed, sampler)?;
    let truths = true_channels(cfg, sampler)?;
    let layout = tomo::scheme_tetrahedron().layout();
    let mut jobs = Vec::new();
    for (m, chans) in truths.iter().enumerate() {
        for (c, p) in chans.iter().enumerate() {
            for &n in &cfg.copies {
                jobs.push((m, c, n, p));
            }
        }
    }
    let opts = MleOptions { starts: cfg.mle_starts, ..Default::default() };
    let trials = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(m, c, n, p))| {
            let mut table = Vec::with_capacity(layout.len());
            let mut off = 0;
            for &w in &layout {
                table.push(p[off..off + w].to_vec());
                off += w;
            }
            let seed = chain_seed(cfg.seed ^ 0x6461_7461, j);
            let counts = simulate_with_copies(&table, &split_copies(n, layout.len()), seed)?;
            let o = MleOptions { seed, ..opts.clone() };
            let r = select_models(&counts, &samples, &o)?;
            Ok(Trial {
                truth: FamilyKind::NESTED[m],
                channel: c,
                copies: n,
                aic: r.aic_choice,
                bic: r.bic_choice,
                rbr: r.rbr_choice,
                rbr_values: r.families.iter().map(|f| f.rbr).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Assessment { config: cfg.clone(), trials })
}
