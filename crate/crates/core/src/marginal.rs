//! Marginal likelihood of a scalar channel property by iterative prior
//! reweighting, plus the interval analogues of the region curves.

use crate::error::{Error, Result};
use crate::family::{ChannelFamily, FamilyKind};
use crate::fit::{fit_beta_mixture, fit_fourier, fit_smoothing_spline_sigma, unit_grid, BetaMixture, CdfFit, Ecdf, FourierFit, SmoothingSpline};
use crate::linalg::{from_flat, log_mean_exp, C64, ZERO};
use crate::regions::lambda_grid;
use crate::target::{sample_channels, SampleSet, SamplerConfig, Tilt};
use crate::tomo::{CountsData, PriorSpec, TomographyScheme};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

pub type PropertyEval = Arc<dyn Fn(&[C64]) -> f64 + Send + Sync>;

/// Scalar channel property with a known range `[lo, hi]`, evaluated on the
/// row-major Choi buffer.
#[derive(Clone)]
pub struct Property {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// Endpoint power laws of the prior CDF in the rescaled variable.
    pub exponents: Option<(f64, f64)>,
    eval: PropertyEval,
}

impl std::fmt::Debug for Property {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Property").field("name", &self.name).field("lo", &self.lo).field("hi", &self.hi).finish()
    }
}

impl Property {
    pub fn custom(name: &str, lo: f64, hi: f64, exponents: Option<(f64, f64)>, eval: PropertyEval) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Config(format!("empty property range [{lo}, {hi}]")));
        }
        Ok(Property { name: name.to_string(), lo, hi, exponents, eval })
    }

    /// Haar-averaged fidelity on `[1/(d+1), 1]`.
    pub fn avg_fidelity(d: usize) -> Self {
        let df = d as f64;
        let n = d * d;
        let eval: PropertyEval = Arc::new(move |b: &[C64]| {
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    acc += b[(i * d + i) * n + j * d + j].re;
                }
            }
            (df + acc) / (df * (df + 1.0))
        });
        let exponents = (d == 2).then_some((3.0, 10.5));
        Property { name: "avg-fidelity".into(), lo: 1.0 / (df + 1.0), hi: 1.0, exponents, eval }
    }

    /// Worst-case fidelity of a unital qubit channel.
    pub fn min_fidelity() -> Self {
        let eval: PropertyEval = Arc::new(|b: &[C64]| {
            let m = crate::unital_qubit::bloch_map_of(&from_flat(4, b));
            crate::duality::min_fidelity_of_bloch(&m)
        });
        Property { name: "min-fidelity".into(), lo: 0.0, hi: 1.0, exponents: Some((4.0, 7.5)), eval }
    }

    /// Built-in property by name, with endpoint exponents for the family they
    /// are known for.
    pub fn builtin(name: &str, kind: FamilyKind, d: usize) -> Result<Self> {
        match name {
            "avg-fidelity" => {
                let mut p = Property::avg_fidelity(d);
                if kind != FamilyKind::General {
                    p.exponents = None;
                }
                Ok(p)
            }
            "min-fidelity" => {
                if d != 2 || kind == FamilyKind::General {
                    return Err(Error::Config("min-fidelity needs a unital qubit family".into()));
                }
                let mut p = Property::min_fidelity();
                if kind != FamilyKind::Unital {
                    p.exponents = None;
                }
                Ok(p)
            }
            other => Err(Error::Config(format!("unknown property '{other}'"))),
        }
    }

    pub fn value(&self, choi: &[C64]) -> f64 {
        (self.eval)(choi)
    }

    pub fn rescale(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    pub fn unscale(&self, x: f64) -> f64 {
        self.lo + x * (self.hi - self.lo)
    }

    /// Rescaled value, `None` outside `[0, 1]` beyond rounding.
    pub fn scaled(&self, choi: &[C64]) -> Option<f64> {
        let x = self.rescale(self.value(choi));
        (-1e-9..=1.0 + 1e-9).contains(&x).then(|| x.clamp(0.0, 1.0))
    }

    /// Rescaled values of every draw.
    pub fn sample_values(&self, family: &dyn ChannelFamily, set: &SampleSet) -> Result<Vec<f64>> {
        let n = family.dim() * family.dim();
        set.params
            .par_iter()
            .map_init(
                || vec![ZERO; n * n],
                |buf, x| {
                    family.choi_into(x, buf);
                    self.scaled(buf).ok_or_else(|| Error::Numerical(format!("{} outside its range", self.name)))
                },
            )
            .collect()
    }
}

pub type Reweight = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginalConfig {
    pub prior_draws: usize,
    pub reweighted_draws: usize,
    pub beta_terms: usize,
    pub grid_points: usize,
    pub spline_quantiles: usize,
    /// Maximum reweighting passes; later passes only run while the reweighted
    /// prior CDF deviates from the diagonal by more than `convergence`.
    pub iterations: usize,
    pub convergence: f64,
    pub max_residual: f64,
    pub sampler: SamplerConfig,
}

impl MarginalConfig {
    pub fn desk(seed: u64) -> Self {
        Self::with_sizes(75_000, 75_000, seed)
    }

    pub fn paper(seed: u64) -> Self {
        Self::with_sizes(1_000_000, 1_500_000, seed)
    }

    pub fn with_sizes(prior_draws: usize, reweighted_draws: usize, seed: u64) -> Self {
        let mut sampler = SamplerConfig::default();
        sampler.hmc.seed = seed;
        MarginalConfig {
            prior_draws,
            reweighted_draws,
            beta_terms: 3,
            grid_points: 201,
            spline_quantiles: 20,
            iterations: 1,
            convergence: 0.02,
            max_residual: 0.03,
            sampler,
        }
    }

    fn stage(&self, draws: usize, offset: u64) -> SamplerConfig {
        let mut s = self.sampler.clone();
        s.hmc.draws = draws;
        s.hmc.seed = self.sampler.hmc.seed.wrapping_add(offset);
        s
    }
}

/// Floor on fitted densities relative to their maximum.
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Smallest denominator used in the likelihood ratio.
pub const RATIO_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageReport {
    pub draws: usize,
    pub acceptance_rate: f64,
    pub ess: f64,
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
    pub fit: CdfFit,
}

/// Density the prior is divided by in the reweighted stages.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Weighting {
    pub beta: BetaMixture,
    pub corrections: Vec<FourierFit>,
    pub floor: f64,
}

impl Weighting {
    fn new(beta: BetaMixture) -> Self {
        let max = unit_grid(2001).iter().map(|&x| beta.density(x)).filter(|v| v.is_finite()).fold(0.0, f64::max);
        Weighting { beta, corrections: Vec::new(), floor: DENSITY_FLOOR * max }
    }

    pub fn raw(&self, x: f64) -> f64 {
        self.corrections.iter().fold(self.beta.density(x), |acc, f| acc * f.density(x).max(RATIO_FLOOR))
    }

    pub fn density(&self, x: f64) -> f64 {
        self.raw(x).max(self.floor)
    }

    pub fn floored(&self, x: f64) -> bool {
        !(self.raw(x) > self.floor)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntervalCurves {
    pub lambda: Vec<f64>,
    pub s: Vec<f64>,
    pub c: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub lambda_crit: f64,
    pub s_crit: f64,
    pub c_crit: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginalResult {
    pub property: String,
    pub range: (f64, f64),
    pub exponents: (f64, f64),
    /// Property values in original units.
    pub f: Vec<f64>,
    pub l: Vec<f64>,
    pub log_evidence: f64,
    pub log_reweighted_evidence: f64,
    /// `∫ L(D|F) W₀(F) dF / L(D)`.
    pub normalization: f64,
    pub tail_slopes: (f64, f64),
    pub floor_fraction: f64,
    pub weighting: Weighting,
    pub stages: Vec<StageReport>,
    pub spline: SmoothingSpline,
    pub fourier: FourierFit,
    pub curves: IntervalCurves,
    /// Maximal segments `[lo, hi]` (original units) with `L(D|F) ≥ L(D)`.
    pub plausible: Vec<(f64, f64)>,
    /// Posterior 5% and 95% quantiles in original units.
    pub posterior_central: (f64, f64),
}

impl MarginalResult {
    /// `L(D|F)` at an original-unit value.
    pub fn likelihood(&self, f: f64) -> f64 {
        let x = (f - self.range.0) / (self.range.1 - self.range.0);
        self.log_reweighted_evidence.exp() * self.spline.density(x) / self.fourier.density(x).max(RATIO_FLOOR)
    }

    pub fn plausible_contains(&self, f: f64) -> bool {
        self.plausible.iter().any(|&(a, b)| a <= f && f <= b)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["F", "L"])?;
        for (f, l) in self.f.iter().zip(&self.l) {
            wr.write_record(&[f.to_string(), l.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_curves_csv<W: Write>(&self, w: W) -> Result<()> {
        let c = &self.curves;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lambda", "s", "c", "F_lo", "F_hi"])?;
        for i in 0..c.lambda.len() {
            wr.write_record(&[c.lambda[i], c.s[i], c.c[i], c.lo[i], c.hi[i]].map(|v| v.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn stage_grid(n: usize) -> Vec<f64> {
    unit_grid(n.max(3))
}

fn trapezoid(ys: &[f64], h: f64) -> f64 {
    let n = ys.len();
    h * (ys.iter().sum::<f64>() - 0.5 * (ys[0] + ys[n - 1]))
}

/// Quantile levels used for endpoint power-law estimates.
pub const TAIL_QUANTILES: [f64; 4] = [0.005, 0.01, 0.02, 0.05];

const SPLINE_TAILS: [f64; 5] = [0.001, 0.0025, 0.005, 0.01, 0.02];

fn spline_points(ecdf: &Ecdf, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut levels: Vec<f64> = SPLINE_TAILS.to_vec();
    levels.extend((1..=m).map(|k| k as f64 / (m + 1) as f64));
    levels.extend(SPLINE_TAILS.iter().map(|q| 1.0 - q));
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut xs: Vec<f64> = Vec::with_capacity(levels.len());
    let mut ys = Vec::with_capacity(levels.len());
    for q in levels {
        let x = ecdf.quantile(q);
        if xs.last().is_none_or(|&l| x > l + 1e-12) {
            xs.push(x);
            ys.push(q);
        }
    }
    (xs, ys)
}

fn tilt_for(property: &Property, weighting: Option<&Weighting>, g: Option<&Reweight>) -> Option<Tilt> {
    if weighting.is_none() && g.is_none() {
        return None;
    }
    let p = property.clone();
    let w = weighting.cloned();
    let g = g.cloned();
    Some(Arc::new(move |b: &[C64]| {
        let Some(x) = p.scaled(b) else { return f64::NEG_INFINITY };
        let mut v = 0.0;
        if let Some(w) = &w {
            v -= w.density(x).ln();
        }
        if let Some(g) = &g {
            v += g(p.unscale(x)).ln();
        }
        v
    }))
}

fn interval_curves(f: &[f64], l: &[f64], w0: &[f64], h: f64) -> (IntervalCurves, f64) {
    let lmax = l.iter().cloned().fold(0.0, f64::max);
    let ld = trapezoid(&l.iter().zip(w0).map(|(a, b)| a * b).collect::<Vec<_>>(), h);
    let eval = |lam: f64| {
        let thr = lam * lmax;
        let inside: Vec<bool> = l.iter().map(|&v| v >= thr).collect();
        let s = trapezoid(&w0.iter().zip(&inside).map(|(&w, &i)| if i { w } else { 0.0 }).collect::<Vec<_>>(), h);
        let c = trapezoid(&w0.iter().zip(l).zip(&inside).map(|((&w, &v), &i)| if i { w * v } else { 0.0 }).collect::<Vec<_>>(), h) / ld;
        let lo = inside.iter().position(|&i| i).map_or(f64::NAN, |k| f[k]);
        let hi = inside.iter().rposition(|&i| i).map_or(f64::NAN, |k| f[k]);
        (s.clamp(0.0, 1.0), c.clamp(0.0, 1.0), lo, hi)
    };
    let lambda = lambda_grid(1e-12);
    let mut cv = IntervalCurves {
        lambda: lambda.clone(),
        s: vec![],
        c: vec![],
        lo: vec![],
        hi: vec![],
        lambda_crit: (ld / lmax).min(1.0),
        s_crit: 0.0,
        c_crit: 0.0,
    };
    for &lam in &lambda {
        let (s, c, lo, hi) = eval(lam);
        cv.s.push(s);
        cv.c.push(c);
        cv.lo.push(lo);
        cv.hi.push(hi);
    }
    let (s, c, _, _) = eval(cv.lambda_crit);
    cv.s_crit = s;
    cv.c_crit = c;
    (cv, ld)
}

fn segments(f: &[f64], mask: &[bool]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((f[s], f[k - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((f[s], f[f.len() - 1]));
    }
    out
}

/// Runs the four-step reweighting pipeline. `g` multiplies the prior by
/// `g(F)` (original units) in every stage.
pub fn marginal_likelihood(
    counts: &CountsData,
    scheme: &TomographyScheme,
    family: &dyn ChannelFamily,
    property: &Property,
    prior: &PriorSpec,
    cfg: &MarginalConfig,
    g: Option<Reweight>,
) -> Result<MarginalResult> {
    counts.check_scheme(scheme)?;
    if cfg.prior_draws < 10 || cfg.reweighted_draws < 10 {
        return Err(Error::Config("marginal stages need at least 10 draws".into()));
    }
    let grid = stage_grid(cfg.grid_points);
    let stage_report = |set: &SampleSet, ecdf: &Ecdf, ll: &[f64], fit: CdfFit| StageReport {
        draws: set.len(),
        acceptance_rate: set.acceptance_rate,
        ess: set.ess_of(ll),
        grid: grid.clone(),
        cdf: ecdf.table(&grid),
        fit,
    };

    // step 1: prior sample and beta-mixture fit
    let tilt1 = tilt_for(property, None, g.as_ref());
    let s1 = sample_channels(family, scheme, prior, None, tilt1, &cfg.stage(cfg.prior_draws, 0))?;
    let v1 = property.sample_values(family, &s1)?;
    let e1 = Ecdf::new(&v1)?;
    let ll1 = s1.log_likelihoods(counts);
    let log_evidence = log_mean_exp(&ll1);
    let tail_slopes = (e1.tail_slope(&TAIL_QUANTILES, false), e1.tail_slope(&TAIL_QUANTILES, true));
    let (a_min, b_min) = property.exponents.unwrap_or((tail_slopes.0.max(0.5), tail_slopes.1.max(0.5)));
    let beta = fit_beta_mixture(&grid, &e1.table(&grid), a_min, b_min, cfg.beta_terms)?;
    if beta.residual > cfg.max_residual {
        return Err(Error::Fit(format!("prior CDF fit residual {:.4} exceeds {}", beta.residual, cfg.max_residual)));
    }
    let mut stages = vec![stage_report(&s1, &e1, &ll1, CdfFit::BetaMixture(beta.clone()))];
    let mut weighting = Weighting::new(beta);

    // step 2: reweighted prior, sine-series fit; optionally repeated
    let mut pass = 0;
    let (fourier, log_rw, floor_fraction) = loop {
        let tilt = tilt_for(property, Some(&weighting), g.as_ref());
        let s2 = sample_channels(family, scheme, prior, None, tilt, &cfg.stage(cfg.reweighted_draws, 1 + 2 * pass as u64))?;
        let v2 = property.sample_values(family, &s2)?;
        let e2 = Ecdf::new(&v2)?;
        let ll2 = s2.log_likelihoods(counts);
        let table = e2.table(&grid);
        let four = fit_fourier(&grid, &table)?;
        if four.residual > cfg.max_residual {
            return Err(Error::Fit(format!("reweighted prior fit residual {:.4} exceeds {}", four.residual, cfg.max_residual)));
        }
        let dev = grid.iter().zip(&table).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let floored = v2.iter().filter(|&&x| weighting.floored(x)).count() as f64 / v2.len() as f64;
        stages.push(stage_report(&s2, &e2, &ll2, CdfFit::Fourier(four.clone())));
        pass += 1;
        if pass >= cfg.iterations.max(1) || dev < cfg.convergence {
            break (four, log_mean_exp(&ll2), floored);
        }
        weighting.corrections.push(four);
    };

    // step 3: reweighted posterior, smoothing spline on quantile points
    let tilt3 = tilt_for(property, Some(&weighting), g.as_ref());
    let s3 = sample_channels(family, scheme, prior, Some(counts), tilt3, &cfg.stage(cfg.reweighted_draws, 2 * pass as u64 + 2))?;
    let v3 = property.sample_values(family, &s3)?;
    let e3 = Ecdf::new(&v3)?;
    let (qx, qy) = spline_points(&e3, cfg.spline_quantiles);
    // ECDF standard error at each level, from the effective sample size of F
    let ess3 = s3.ess_of(&v3).max(1.0);
    let sigma: Vec<f64> = qy.iter().map(|q| (q * (1.0 - q) / ess3).sqrt()).collect();
    let spline = fit_smoothing_spline_sigma(&qx, &qy, &sigma)?;
    let ll3 = s3.log_likelihoods(counts);
    stages.push(stage_report(&s3, &e3, &ll3, CdfFit::Spline(spline.clone())));

    // step 4: ratio, prior density of F and interval curves
    let fine = unit_grid(4001);
    let h = fine[1] - fine[0];
    let scale = log_rw.exp();
    let l: Vec<f64> = fine.iter().map(|&x| scale * spline.density(x) / fourier.density(x).max(RATIO_FLOOR)).collect();
    let raw_w0: Vec<f64> = fine.iter().map(|&x| weighting.density(x) * fourier.density(x).max(0.0)).collect();
    let z = trapezoid(&raw_w0, h);
    let w0: Vec<f64> = raw_w0.iter().map(|v| v / z).collect();
    let f_orig: Vec<f64> = fine.iter().map(|&x| property.unscale(x)).collect();
    let (mut curves, ld_quad) = interval_curves(&f_orig, &l, &w0, h);
    // integrals above are in the rescaled variable; report F bounds unchanged
    let threshold = ld_quad;
    let mask: Vec<bool> = l.iter().map(|&v| v >= threshold).collect();
    let plausible = segments(&f_orig, &mask);
    curves.lambda_crit = curves.lambda_crit.min(1.0);
    let out_grid = stage_grid(cfg.grid_points);
    let result = MarginalResult {
        property: property.name.clone(),
        range: (property.lo, property.hi),
        exponents: (a_min, b_min),
        f: out_grid.iter().map(|&x| property.unscale(x)).collect(),
        l: out_grid.iter().map(|&x| scale * spline.density(x) / fourier.density(x).max(RATIO_FLOOR)).collect(),
        log_evidence,
        log_reweighted_evidence: log_rw,
        normalization: ld_quad / log_evidence.exp(),
        tail_slopes,
        floor_fraction,
        weighting,
        stages,
        posterior_central: (property.unscale(e3.quantile(0.05)), property.unscale(e3.quantile(0.95))),
        spline,
        fourier,
        curves,
        plausible,
    };
    if result.l.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Numerical("marginal likelihood is not finite".into()));
    }
    Ok(result)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub f: Vec<f64>,
    pub relative_change: Vec<f64>,
    pub max_relative_change: f64,
    pub window: (f64, f64),
}

/// Compares two marginal likelihoods on the posterior central 90% window of
/// the first.
pub fn compare_marginals(base: &MarginalResult, other: &MarginalResult, points: usize) -> InvarianceReport {
    let (a, b) = base.posterior_central;
    let f: Vec<f64> = (0..points).map(|i| a + (b - a) * i as f64 / (points - 1) as f64).collect();
    let relative_change: Vec<f64> = f
        .iter()
        .map(|&x| {
            let l0 = base.likelihood(x);
            (other.likelihood(x) - l0).abs() / l0
        })
        .collect();
    let max_relative_change = relative_change.iter().cloned().fold(0.0, f64::max);
    InvarianceReport { f, relative_change, max_relative_change, window: (a, b) }
}

/// Reruns the pipeline with the prior multiplied by `g(F)` and compares.
pub fn invariance_check(
    counts: &CountsData,
    scheme: &TomographyScheme,
    family: &dyn ChannelFamily,
    property: &Property,
    prior: &PriorSpec,
    cfg: &MarginalConfig,
    g: Reweight,
) -> Result<(MarginalResult, MarginalResult, InvarianceReport)> {
    let base = marginal_likelihood(counts, scheme, family, property, prior, cfg, None)?;
    let mut cfg2 = cfg.clone();
    cfg2.sampler.hmc.seed = cfg.sampler.hmc.seed.wrapping_add(1000);
    let other = marginal_likelihood(counts, scheme, family, property, prior, &cfg2, Some(g))?;
    let report = compare_marginals(&base, &other, 101);
    Ok((base, other, report))
}
