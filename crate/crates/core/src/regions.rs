//! Bounded-likelihood regions: size and credibility curves, plausible region.

use crate::error::{Error, Result};
use crate::family::ChannelFamily;
use crate::linalg::log_mean_exp;
use crate::target::{sample_channels, SampleSet, SamplerConfig};
use crate::tomo::{max_log_likelihood, CountsData, MleOptions, MleResult, PriorSpec, TomographyScheme};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Log-spaced grid points used by [`lambda_grid`].
pub const GRID_POINTS: usize = 200;

/// Slack allowed between the reported maximum and sampled log-likelihoods.
pub const MLE_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegionCurves {
    pub lambda: Vec<f64>,
    pub s: Vec<f64>,
    pub c: Vec<f64>,
    pub s_err: Vec<f64>,
    pub c_err: Vec<f64>,
    pub lambda_crit: f64,
    pub s_crit: f64,
    pub c_crit: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CritSummary {
    pub lambda_crit: f64,
    pub s_crit: f64,
    pub c_crit: f64,
}

impl RegionCurves {
    pub fn summary(&self) -> CritSummary {
        CritSummary { lambda_crit: self.lambda_crit, s_crit: self.s_crit, c_crit: self.c_crit }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lambda", "s", "c", "s_err", "c_err"])?;
        for i in 0..self.lambda.len() {
            wr.write_record(&[
                self.lambda[i].to_string(),
                self.s[i].to_string(),
                self.c[i].to_string(),
                self.s_err[i].to_string(),
                self.c_err[i].to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `0` followed by [`GRID_POINTS`] log-spaced values in `[max(λ_min, 1e-12), 1]`.
pub fn lambda_grid(lambda_min: f64) -> Vec<f64> {
    let lo = lambda_min.max(1e-12).min(1.0).ln();
    let mut g = vec![0.0];
    for k in 0..GRID_POINTS {
        let t = k as f64 / (GRID_POINTS - 1) as f64;
        g.push((lo * (1.0 - t)).exp());
    }
    g.dedup();
    g
}

/// True iff `log L ≥ log λ + log L_max`; every point belongs at `λ = 0`.
pub fn membership(log_l: f64, lambda: f64, log_lmax: f64) -> bool {
    lambda <= 0.0 || log_l >= lambda.ln() + log_lmax
}

fn fraction_inside(ll: &[f64], lambda: f64, log_lmax: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let thr = lambda.ln() + log_lmax;
    ll.iter().filter(|&&v| v >= thr).count() as f64 / ll.len() as f64
}

/// `log L(D)` as the prior-sample mean likelihood.
pub fn log_evidence(prior_ll: &[f64]) -> Result<f64> {
    if prior_ll.is_empty() {
        return Err(Error::Numerical("empty prior sample".into()));
    }
    Ok(log_mean_exp(prior_ll))
}

/// `λ_crit = L(D) / L_max`.
pub fn lambda_crit(prior_ll: &[f64], log_lmax: f64) -> Result<f64> {
    Ok((log_evidence(prior_ll)? - log_lmax).exp().min(1.0))
}

/// Credibility from prior draws reweighted by their likelihood.
pub fn reweighted_credibility(prior_ll: &[f64], lambda: f64, log_lmax: f64) -> f64 {
    let all = log_mean_exp(prior_ll);
    let inside: Vec<f64> = prior_ll.iter().map(|&v| if membership(v, lambda, log_lmax) { v } else { f64::NEG_INFINITY }).collect();
    (log_mean_exp(&inside) - all).exp()
}

fn check_samples(prior_ll: &[f64], post_ll: &[f64], log_lmax: f64) -> Result<()> {
    if prior_ll.is_empty() || post_ll.is_empty() {
        return Err(Error::Numerical("empty sample".into()));
    }
    let sampled = prior_ll.iter().chain(post_ll).cloned().fold(f64::NEG_INFINITY, f64::max);
    if sampled > log_lmax + MLE_SLACK {
        return Err(Error::BrokenMle { log_lmax, sampled });
    }
    Ok(())
}

/// Size and credibility over `grid` (default [`lambda_grid`] from the samples).
/// `prior_ess` and `post_ess` inflate the binomial error bars.
pub fn blr_curves(
    prior_ll: &[f64],
    post_ll: &[f64],
    log_lmax: f64,
    grid: Option<&[f64]>,
    prior_ess: f64,
    post_ess: f64,
) -> Result<RegionCurves> {
    check_samples(prior_ll, post_ll, log_lmax)?;
    let lambda: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => {
            let lo = prior_ll.iter().cloned().fold(f64::INFINITY, f64::min);
            lambda_grid((lo - log_lmax).exp())
        }
    };
    let (s, c): (Vec<f64>, Vec<f64>) =
        lambda.par_iter().map(|&l| (fraction_inside(prior_ll, l, log_lmax), fraction_inside(post_ll, l, log_lmax))).unzip();
    let err = |v: &[f64], ess: f64| v.iter().map(|&x| (x * (1.0 - x) / ess.max(1.0)).sqrt()).collect::<Vec<_>>();
    let lc = lambda_crit(prior_ll, log_lmax)?;
    Ok(RegionCurves {
        s_err: err(&s, prior_ess),
        c_err: err(&c, post_ess),
        lambda,
        s,
        c,
        lambda_crit: lc,
        s_crit: fraction_inside(prior_ll, lc, log_lmax),
        c_crit: fraction_inside(post_ll, lc, log_lmax),
    })
}

#[derive(Clone, Debug)]
pub struct RegionRun {
    pub curves: RegionCurves,
    pub mle: MleResult,
    pub prior: SampleSet,
    pub posterior: SampleSet,
    pub prior_ll: Vec<f64>,
    pub posterior_ll: Vec<f64>,
}

/// MLE, prior sample and posterior sample, then the region curves.
/// The posterior chain uses `sampler.hmc.seed + 1`.
pub fn run_regions(
    counts: &CountsData,
    scheme: &TomographyScheme,
    family: &dyn ChannelFamily,
    prior: &PriorSpec,
    sampler: &SamplerConfig,
    mle: &MleOptions,
) -> Result<RegionRun> {
    let prior_set = sample_channels(family, scheme, prior, None, None, sampler)?;
    let mut post_cfg = sampler.clone();
    post_cfg.hmc.seed = sampler.hmc.seed.wrapping_add(1);
    let post_set = sample_channels(family, scheme, prior, Some(counts), None, &post_cfg)?;
    let prior_ll = prior_set.log_likelihoods(counts);
    let post_ll = post_set.log_likelihoods(counts);
    let best = post_ll.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let mut opts = mle.clone();
    if !post_set.is_empty() {
        opts.initial.push(post_set.params[best].clone());
    }
    let fit = max_log_likelihood(counts, scheme, family, &opts)?;
    let curves = blr_curves(&prior_ll, &post_ll, fit.log_lmax, None, prior_set.ess_of(&prior_ll), post_set.ess_of(&post_ll))?;
    Ok(RegionRun { curves, mle: fit, prior: prior_set, posterior: post_set, prior_ll, posterior_ll: post_ll })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::log_sum_exp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_shape() {
        let g = lambda_grid(1e-5);
        assert_eq!(g.len(), GRID_POINTS + 1);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1e-5).abs() < 1e-15 && (g[GRID_POINTS] - 1.0).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!((lambda_grid(0.0)[1] - 1e-12).abs() < 1e-24);
    }

    #[test]
    fn membership_rules() {
        assert!(membership(-3.0, 1.0, -3.0));
        assert!(membership(-3.0, 0.5, -3.0));
        assert!(!membership(f64::NEG_INFINITY, 1e-300, -3.0));
        assert!(membership(f64::NEG_INFINITY, 0.0, -3.0));
    }

    fn synthetic(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
        // one-parameter toy: prior uniform p, likelihood p^7 (1-p)^3
        let ll = |p: f64| 7.0 * p.ln() + 3.0 * (1.0 - p).ln();
        let prior: Vec<f64> = (0..n).map(|_| ll(rng.random::<f64>())).collect();
        let beta = rand_distr::Beta::new(8.0, 4.0).unwrap();
        let post: Vec<f64> = (0..n).map(|_| ll(rng.sample(beta))).collect();
        (prior, post)
    }

    #[test]
    fn curves_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (prior, post) = synthetic(&mut rng, 20_000);
        let lmax = 7.0 * 0.7f64.ln() + 3.0 * 0.3f64.ln();
        let r = blr_curves(&prior, &post, lmax, None, 20_000.0, 20_000.0).unwrap();
        assert_eq!((r.s[0], r.c[0]), (1.0, 1.0));
        for i in 1..r.lambda.len() {
            assert!(r.s[i] <= r.s[i - 1] && r.c[i] <= r.c[i - 1]);
            let tol = 2.0 * (r.s_err[i].powi(2) + r.c_err[i].powi(2)).sqrt();
            assert!(r.c[i] >= r.s[i] - tol);
            assert!((0.0..=1.0).contains(&r.s[i]) && (0.0..=1.0).contains(&r.c[i]));
            let rw = reweighted_credibility(&prior, r.lambda[i], lmax);
            assert!((rw - r.c[i]).abs() <= 3.0 * r.c_err[i] + 0.01, "{} {} {}", r.lambda[i], rw, r.c[i]);
        }
        // exact evidence B(8,4) = 7!3!/11!
        let exact = (5040.0f64 * 6.0 / 39_916_800.0).ln();
        assert!((log_evidence(&prior).unwrap() - exact).abs() < 0.03);
        assert!(r.lambda_crit <= 1.0);
    }

    #[test]
    fn concentrated_prior_gives_lambda_near_one() {
        let ll = vec![-2.0; 100];
        assert!((lambda_crit(&ll, -2.0).unwrap() - 1.0).abs() < 1e-12);
        let r = blr_curves(&ll, &ll, -2.0, Some(&[0.0, 1.0]), 100.0, 100.0).unwrap();
        assert_eq!(r.s, vec![1.0, 1.0]);
    }

    #[test]
    fn errors() {
        assert!(blr_curves(&[], &[-1.0], 0.0, None, 1.0, 1.0).is_err());
        assert!(matches!(blr_curves(&[-1.0], &[0.5], 0.0, None, 1.0, 1.0), Err(Error::BrokenMle { .. })));
        assert!(lambda_crit(&[], 0.0).is_err());
    }

    #[test]
    fn log_space_is_stable() {
        let ll = vec![-2000.0, -2001.0];
        let v = log_evidence(&ll).unwrap();
        assert!((v - (log_sum_exp(&ll) - 2f64.ln())).abs() < 1e-12 && v.is_finite());
    }
}
