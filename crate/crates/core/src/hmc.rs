//! Hamiltonian Monte Carlo with identity mass matrix, leapfrog integration,
//! Metropolis correction and dual-averaging step-size tuning.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Default central-difference step for gradients.
pub const GRAD_STEP: f64 = 1e-5;

/// Smallest step size before adaptation is declared failed.
pub const MIN_STEP: f64 = 1e-10;

/// Unnormalized log density on `ℝⁿ`; may return `-∞`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        fd_gradient(self, x, GRAD_STEP, out);
    }
}

pub fn fd_gradient<T: LogDensity + ?Sized>(t: &T, x: &[f64], h: f64, out: &mut [f64]) {
    let mut y = x.to_vec();
    for j in 0..x.len() {
        y[j] = x[j] + h;
        let fp = t.log_density(&y);
        y[j] = x[j] - h;
        let fm = t.log_density(&y);
        y[j] = x[j];
        out[j] = (fp - fm) / (2.0 * h);
    }
}

/// A closure as a target density.
pub struct FnTarget<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogDensity for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Closure target with an explicit gradient.
pub struct GradTarget<F, G> {
    pub dim: usize,
    pub f: F,
    pub grad: G,
}

impl<F, G> LogDensity for GradTarget<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.grad)(x, out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    /// Kept draws per chain.
    pub draws: usize,
    /// `None` means 10% of `draws`, at least 500.
    pub burn_in: Option<usize>,
    pub thin: usize,
    /// Nominal leapfrog steps `L₀`; the actual count is drawn from `[0.8 L₀, 1.2 L₀]`.
    pub leapfrog_steps: usize,
    pub jitter: bool,
    /// Initial step size; refined during burn-in when `adapt` is set.
    pub step_size: f64,
    pub adapt: bool,
    pub target_accept: f64,
    /// Window length for the acceptance history reported by [`Chain::window_steps`].
    pub adapt_window: usize,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            draws: 1000,
            burn_in: None,
            thin: 1,
            leapfrog_steps: 20,
            jitter: true,
            step_size: 0.1,
            adapt: true,
            target_accept: 0.65,
            adapt_window: 100,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or((self.draws / 10).max(500))
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.leapfrog_steps == 0 || self.adapt_window == 0 {
            return Err(Error::Config("thin, leapfrog_steps and adapt_window must be positive".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.step_size)));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!("target acceptance must lie in (0,1), got {}", self.target_accept)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Chain {
    pub draws: Vec<Vec<f64>>,
    pub log_w: Vec<f64>,
    /// Mean Metropolis acceptance probability after burn-in.
    pub acceptance_rate: f64,
    pub step_size: f64,
    /// Step size at the end of each adaptation window during burn-in.
    pub window_steps: Vec<f64>,
    pub divergent: usize,
}

impl Chain {
    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, |d| d.len())
    }

    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    pub fn ess(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| effective_sample_size(&self.coordinate(j))).collect()
    }

    pub fn autocorrelation_times(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| integrated_autocorrelation_time(&self.coordinate(j))).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_draws_csv(w, &self.draws, &self.log_w)
    }
}

pub fn write_draws_csv<W: Write>(w: W, draws: &[Vec<f64>], log_w: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let n = draws.first().map_or(0, |d| d.len());
    let mut header: Vec<String> = (0..n).map(|j| format!("theta_{j}")).collect();
    header.push("log_w".into());
    wr.write_record(&header)?;
    for (d, lw) in draws.iter().zip(log_w) {
        let mut rec: Vec<String> = d.iter().map(|v| format!("{v:e}")).collect();
        rec.push(format!("{lw:e}"));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// `H = -log w(θ) + ½|ϑ|²`.
pub fn hamiltonian(log_w: f64, momentum: &[f64]) -> f64 {
    -log_w + 0.5 * momentum.iter().map(|p| p * p).sum::<f64>()
}

/// `min{1, e^{H - H*}}`, zero for non-finite proposals.
pub fn acceptance_probability(h: f64, h_star: f64) -> f64 {
    if !h_star.is_finite() || h_star.is_nan() {
        return 0.0;
    }
    (h - h_star).exp().min(1.0)
}

/// Leapfrog integration from `(θ, ϑ)`. Returns `None` if a gradient is not finite.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    theta: &[f64],
    momentum: &[f64],
    eps: f64,
    steps: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut x = theta.to_vec();
    let mut p = momentum.to_vec();
    let mut g = vec![0.0; x.len()];
    target.gradient(&x, &mut g);
    if integrate(target, &mut x, &mut p, &mut g, eps, steps) {
        Some((x, p))
    } else {
        None
    }
}

/// In-place leapfrog; `g` holds the gradient at `x` on entry and exit.
fn integrate<T: LogDensity + ?Sized>(target: &T, x: &mut [f64], p: &mut [f64], g: &mut [f64], eps: f64, steps: usize) -> bool {
    if !g.iter().all(|v| v.is_finite()) {
        return false;
    }
    for _ in 0..steps {
        for (pi, gi) in p.iter_mut().zip(g.iter()) {
            *pi += 0.5 * eps * gi;
        }
        for (xi, pi) in x.iter_mut().zip(p.iter()) {
            *xi += eps * pi;
        }
        target.gradient(x, g);
        if !g.iter().all(|v| v.is_finite()) {
            return false;
        }
        for (pi, gi) in p.iter_mut().zip(g.iter()) {
            *pi += 0.5 * eps * gi;
        }
    }
    true
}

/// Robbins–Monro update used between adaptation windows: `ε ← ε·exp(rate·(ā − target))`.
pub fn adapt_step_size(eps: f64, window_acceptance: f64, target: f64, rate: f64) -> f64 {
    eps * (rate * (window_acceptance - target)).exp()
}

/// Dual-averaging step-size adaptation.
#[derive(Clone, Debug)]
pub struct StepSizeAdapter {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    t: f64,
}

impl StepSizeAdapter {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(eps0: f64, target: f64) -> Self {
        StepSizeAdapter {
            mu: (10.0 * eps0).ln(),
            target,
            h_bar: 0.0,
            log_eps: eps0.ln(),
            log_eps_bar: eps0.ln(),
            t: 0.0,
        }
    }

    /// Feeds one acceptance probability and returns the next step size.
    pub fn update(&mut self, accept: f64) -> f64 {
        self.t += 1.0;
        let eta = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept);
        self.log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
        self.log_eps.exp()
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// The averaged step size used after burn-in.
    pub fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

struct State {
    x: Vec<f64>,
    lw: f64,
    g: Vec<f64>,
}

fn propose<T: LogDensity + ?Sized>(target: &T, s: &State, eps: f64, steps: usize, rng: &mut ChaCha8Rng) -> (f64, Option<State>) {
    let p0: Vec<f64> = (0..s.x.len()).map(|_| rng.sample(StandardNormal)).collect();
    let h0 = hamiltonian(s.lw, &p0);
    let mut x = s.x.clone();
    let mut p = p0;
    let mut g = s.g.clone();
    if !integrate(target, &mut x, &mut p, &mut g, eps, steps) {
        return (0.0, None);
    }
    let lw = target.log_density(&x);
    if !lw.is_finite() {
        return (0.0, None);
    }
    let a = acceptance_probability(h0, hamiltonian(lw, &p));
    (a, Some(State { x, lw, g }))
}

fn reasonable_step<T: LogDensity + ?Sized>(target: &T, s: &State, eps0: f64, rng: &mut ChaCha8Rng) -> f64 {
    let mut eps = eps0;
    let accept = |eps: f64, rng: &mut ChaCha8Rng| propose(target, s, eps, 1, rng).0;
    let up = accept(eps, rng) > 0.5;
    for _ in 0..60 {
        let a = accept(eps, rng);
        if up && a <= 0.5 {
            return eps / 2.0;
        }
        if !up && a > 0.5 {
            return eps;
        }
        eps = if up { eps * 2.0 } else { eps / 2.0 };
        if eps < MIN_STEP {
            break;
        }
    }
    eps
}

/// One chain from `theta0`.
pub fn sample<T: LogDensity + ?Sized>(target: &T, cfg: &HmcConfig, theta0: &[f64]) -> Result<Chain> {
    cfg.validate()?;
    if theta0.len() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: theta0.len() });
    }
    let lw0 = target.log_density(theta0);
    if !lw0.is_finite() {
        return Err(Error::Numerical(format!("initial point has log density {lw0}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g0 = vec![0.0; theta0.len()];
    target.gradient(theta0, &mut g0);
    let mut s = State { x: theta0.to_vec(), lw: lw0, g: g0 };
    let burn = cfg.burn_in();
    let mut eps = if cfg.adapt { reasonable_step(target, &s, cfg.step_size, &mut rng) } else { cfg.step_size };
    let mut adapter = StepSizeAdapter::new(eps, cfg.target_accept);
    let l0 = cfg.leapfrog_steps;
    let (lo, hi) = if cfg.jitter {
        (((0.8 * l0 as f64).floor() as usize).max(1), ((1.2 * l0 as f64).ceil() as usize).max(1))
    } else {
        (l0, l0)
    };
    let total = burn + cfg.draws * cfg.thin;
    let mut draws = Vec::with_capacity(cfg.draws);
    let mut log_w = Vec::with_capacity(cfg.draws);
    let mut acc_sum = 0.0;
    let mut window_steps = Vec::new();
    let mut divergent = 0;
    for it in 0..total {
        let steps = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let (a, prop) = propose(target, &s, eps, steps, &mut rng);
        if prop.is_none() {
            divergent += 1;
        }
        let u: f64 = rng.random();
        if let Some(p) = prop {
            if u < a {
                s = p;
            }
        }
        if it < burn {
            if cfg.adapt {
                eps = adapter.update(a);
                if eps < MIN_STEP || !eps.is_finite() {
                    return Err(Error::StepSizeCollapse(eps));
                }
                if it + 1 == burn {
                    eps = adapter.final_step();
                }
            }
            if (it + 1) % cfg.adapt_window == 0 {
                window_steps.push(eps);
            }
        } else {
            acc_sum += a;
            if (it - burn + 1) % cfg.thin == 0 {
                draws.push(s.x.clone());
                log_w.push(s.lw);
            }
        }
    }
    let kept = (total - burn) as f64;
    Ok(Chain {
        draws,
        log_w,
        acceptance_rate: if kept > 0.0 { acc_sum / kept } else { 0.0 },
        step_size: eps,
        window_steps,
        divergent,
    })
}

/// Seed used by chain `i` of a run seeded with `seed`.
pub fn chain_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Independent chains in parallel, one per starting point.
pub fn sample_chains<T: LogDensity + ?Sized>(target: &T, cfg: &HmcConfig, starts: &[Vec<f64>]) -> Result<Vec<Chain>> {
    starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let c = HmcConfig { seed: chain_seed(cfg.seed, i), ..cfg.clone() };
            sample(target, &c, x0)
        })
        .collect()
}

/// Normalized autocorrelation function by FFT, lags `0..n`.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![1.0; n];
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= 0.0 {
        let mut r = vec![0.0; n];
        r[0] = 1.0;
        return r;
    }
    buf[..n].iter().map(|z| z.re / c0).collect()
}

/// Integrated autocorrelation time with Geyer's initial positive sequence.
pub fn integrated_autocorrelation_time(x: &[f64]) -> f64 {
    let rho = autocorrelation(x);
    let n = rho.len();
    if n < 4 {
        return 1.0;
    }
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho[2 * k] + rho[2 * k + 1];
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        k += 1;
    }
    tau.max(1.0 / n as f64)
}

pub fn effective_sample_size(x: &[f64]) -> f64 {
    x.len() as f64 / integrated_autocorrelation_time(x)
}
