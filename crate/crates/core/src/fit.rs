//! One-dimensional CDF fits: incomplete-beta mixtures, sine series around the
//! diagonal, and cubic smoothing splines.

use crate::error::{Error, Result};
use crate::optim::{bfgs, golden_section, BfgsOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use std::f64::consts::PI;

/// Empirical CDF of a finite sample.
#[derive(Clone, Debug)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Fit("empty sample".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Fit("NaN in sample".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Ecdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of values `≤ x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn table(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.cdf(x)).collect()
    }

    /// Lower empirical quantile.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((q.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// Log-log slope of the CDF over the quantile levels `qs` (lower tail),
    /// or of `1 - CDF` against `1 - x` when `upper`.
    pub fn tail_slope(&self, qs: &[f64], upper: bool) -> f64 {
        let pts: Vec<(f64, f64)> = qs
            .iter()
            .filter_map(|&q| {
                let (x, p) = if upper { (1.0 - self.quantile(1.0 - q), q) } else { (self.quantile(q), q) };
                (x > 0.0).then(|| (x.ln(), p.ln()))
            })
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }
}

/// `n` equally spaced points on `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn sup_residual(fit: impl Fn(f64) -> f64, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| (fit(x) - y).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BetaTerm {
    pub weight: f64,
    pub a: f64,
    pub b: f64,
}

fn beta_density(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        let edge = if x <= 0.0 { a } else { b };
        return if edge < 1.0 { f64::INFINITY } else if edge == 1.0 { (-ln_beta(a, b)).exp() } else { 0.0 };
    }
    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)).exp()
}

/// `Σ w_i I_{a_i,b_i}(x)` with the first term pinned to `a_min` and the second to `b_min`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BetaMixture {
    pub a_min: f64,
    pub b_min: f64,
    pub terms: Vec<BetaTerm>,
    pub residual: f64,
}

impl BetaMixture {
    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        self.terms.iter().map(|t| t.weight * beta_reg(t.a, t.b, x)).sum()
    }

    pub fn density(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.weight * beta_density(t.a, t.b, x)).sum()
    }

    fn from_raw(a_min: f64, b_min: f64, n: usize, z: &[f64]) -> Vec<BetaTerm> {
        let mut shapes = vec![(a_min, b_min + z[0] * z[0])];
        if n > 1 {
            shapes.push((a_min + z[1] * z[1], b_min));
        }
        for k in 2..n {
            let i = 2 + 2 * (k - 2);
            shapes.push((a_min + z[i] * z[i], b_min + z[i + 1] * z[i + 1]));
        }
        let logits = &z[2 + 2 * n.saturating_sub(2)..];
        let mut l = vec![0.0];
        l.extend_from_slice(logits);
        let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        shapes.into_iter().zip(e).map(|((a, b), w)| BetaTerm { weight: w / s, a, b }).collect()
    }
}

/// Least-squares fit of an `n_terms` incomplete-beta mixture to `(xs, ys)`.
pub fn fit_beta_mixture(xs: &[f64], ys: &[f64], a_min: f64, b_min: f64, n_terms: usize) -> Result<BetaMixture> {
    if n_terms < 2 {
        return Err(Error::Config("beta mixture needs at least two terms".into()));
    }
    if !(a_min > 0.0 && b_min > 0.0) {
        return Err(Error::Config("a_min and b_min must be positive".into()));
    }
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::Fit("mismatched fit data".into()));
    }
    let n_shape = 2 + 2 * (n_terms - 2);
    let dim = n_shape + n_terms - 1;
    let sse = |z: &[f64]| {
        let terms = BetaMixture::from_raw(a_min, b_min, n_terms, z);
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let f: f64 = terms.iter().map(|t| t.weight * beta_reg(t.a, t.b, x.clamp(0.0, 1.0))).sum();
                (f - y).powi(2)
            })
            .sum::<f64>()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let opts = BfgsOptions { max_iter: 400, grad_tol: 1e-10, f_tol: 1e-16, ..Default::default() };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in 0..8 {
        let z0: Vec<f64> = (0..dim)
            .map(|j| {
                if j < n_shape {
                    let scale = if start == 0 { 0.5 } else { rng.random_range(0.0..2.0) };
                    scale * (a_min + b_min).sqrt()
                } else if start == 0 {
                    0.0
                } else {
                    rng.random_range(-2.0..2.0)
                }
            })
            .collect();
        let m = bfgs(sse, &z0, &opts);
        if m.value.is_finite() && best.as_ref().is_none_or(|b| m.value < b.0) {
            best = Some((m.value, m.x));
        }
    }
    let (_, z) = best.ok_or_else(|| Error::Fit("beta mixture optimizer failed".into()))?;
    let mut fit = BetaMixture { a_min, b_min, terms: BetaMixture::from_raw(a_min, b_min, n_terms, &z), residual: 0.0 };
    fit.residual = sup_residual(|x| fit.cdf(x), xs, ys);
    Ok(fit)
}

/// `x + Σ c_j sin(jπx)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FourierFit {
    pub coefficients: Vec<f64>,
    pub residual: f64,
}

pub const FOURIER_MAX_TERMS: usize = 8;
pub const FOURIER_MIN_COEFF: f64 = 1e-4;

impl FourierFit {
    pub fn cdf(&self, x: f64) -> f64 {
        x + self.coefficients.iter().enumerate().map(|(j, c)| c * ((j + 1) as f64 * PI * x).sin()).sum::<f64>()
    }

    pub fn density(&self, x: f64) -> f64 {
        1.0 + self
            .coefficients
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let k = (j + 1) as f64 * PI;
                c * k * (k * x).cos()
            })
            .sum::<f64>()
    }

    fn positive_on_interior(&self) -> bool {
        (0..=980).all(|i| self.density(0.01 + i as f64 * 0.001) > 0.0)
    }
}

fn fourier_lsq(xs: &[f64], ys: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let a = DMatrix::from_fn(xs.len(), n, |i, j| ((j + 1) as f64 * PI * xs[i]).sin());
    let r = DVector::from_iterator(xs.len(), xs.iter().zip(ys).map(|(x, y)| y - x));
    let c = a.svd(true, true).solve(&r, 1e-12).map_err(|e| Error::Fit(e.to_string()))?;
    Ok(c.iter().cloned().collect())
}

/// Sine-series fit of `ys - xs`, truncated from [`FOURIER_MAX_TERMS`] down
/// while the derivative is not positive on `[0.01, 0.99]` or the last
/// coefficient is below [`FOURIER_MIN_COEFF`].
pub fn fit_fourier(xs: &[f64], ys: &[f64]) -> Result<FourierFit> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::Fit("mismatched fit data".into()));
    }
    let mut n = FOURIER_MAX_TERMS.min(xs.len().saturating_sub(1));
    loop {
        let fit = FourierFit { coefficients: fourier_lsq(xs, ys, n)?, residual: 0.0 };
        let small = fit.coefficients.last().is_some_and(|c| c.abs() < FOURIER_MIN_COEFF);
        if n == 0 || (fit.positive_on_interior() && !small) {
            let residual = sup_residual(|x| fit.cdf(x), xs, ys);
            return Ok(FourierFit { residual, ..fit });
        }
        n -= 1;
    }
}

/// Natural cubic smoothing spline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothingSpline {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    pub curvature: Vec<f64>,
    pub lambda: f64,
    pub residual: f64,
}

impl SmoothingSpline {
    fn segment(&self, x: f64) -> Option<usize> {
        let n = self.knots.len();
        if x < self.knots[0] || x > self.knots[n - 1] {
            return None;
        }
        Some(self.knots.partition_point(|&k| k <= x).clamp(1, n - 1) - 1)
    }

    pub fn value(&self, x: f64) -> f64 {
        let n = self.knots.len();
        match self.segment(x) {
            Some(i) => {
                let h = self.knots[i + 1] - self.knots[i];
                let a = (self.knots[i + 1] - x) / h;
                let b = (x - self.knots[i]) / h;
                a * self.values[i]
                    + b * self.values[i + 1]
                    + ((a * a * a - a) * self.curvature[i] + (b * b * b - b) * self.curvature[i + 1]) * h * h / 6.0
            }
            None => {
                let (k, s) = if x < self.knots[0] { (0, self.slope_at(0)) } else { (n - 1, self.slope_at(n - 1)) };
                self.values[k] + s * (x - self.knots[k])
            }
        }
    }

    fn slope_at(&self, k: usize) -> f64 {
        let i = k.min(self.knots.len() - 2);
        self.segment_slope(i, self.knots[k])
    }

    fn segment_slope(&self, i: usize, x: f64) -> f64 {
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - x) / h;
        let b = (x - self.knots[i]) / h;
        (self.values[i + 1] - self.values[i]) / h - (3.0 * a * a - 1.0) * h * self.curvature[i] / 6.0
            + (3.0 * b * b - 1.0) * h * self.curvature[i + 1] / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self.segment(x) {
            Some(i) => self.segment_slope(i, x),
            None if x < self.knots[0] => self.slope_at(0),
            None => self.slope_at(self.knots.len() - 1),
        }
    }

    /// Fitted value clamped to `[0, 1]`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.value(x).clamp(0.0, 1.0)
    }

    /// Derivative clamped at zero, and zero wherever [`Self::cdf`] is clamped.
    pub fn density(&self, x: f64) -> f64 {
        let v = self.value(x);
        if v <= 0.0 || v >= 1.0 {
            return 0.0;
        }
        self.derivative(x).max(0.0)
    }
}

struct Reinsch {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl Reinsch {
    fn new(x: &[f64]) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut q = DMatrix::zeros(n, n - 2);
        let mut r = DMatrix::zeros(n - 2, n - 2);
        for k in 0..n - 2 {
            q[(k, k)] = 1.0 / h[k];
            q[(k + 1, k)] = -1.0 / h[k] - 1.0 / h[k + 1];
            q[(k + 2, k)] = 1.0 / h[k + 1];
            r[(k, k)] = (h[k] + h[k + 1]) / 3.0;
            if k + 1 < n - 2 {
                r[(k, k + 1)] = h[k + 1] / 6.0;
                r[(k + 1, k)] = h[k + 1] / 6.0;
            }
        }
        Reinsch { q, r }
    }

    /// `(fitted values, curvature at interior knots, trace of the smoother)`.
    fn solve(&self, y: &DVector<f64>, lambda: f64) -> Option<(DVector<f64>, DVector<f64>, f64)> {
        let qt = self.q.transpose();
        let m = &self.r + &qt * &self.q * lambda;
        let ch = m.cholesky()?;
        let gamma = ch.solve(&(&qt * y));
        let f = y - &self.q * &gamma * lambda;
        let inner = ch.solve(&qt);
        let tr_a = self.q.nrows() as f64 - lambda * (&self.q * inner).trace();
        Some((f, gamma, tr_a))
    }

    /// Weighted form: minimizes `Σ ((y - f)/σ)² + λ ∫ f''²`.
    fn solve_weighted(&self, y: &DVector<f64>, var: &DVector<f64>, lambda: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let dq = DMatrix::from_fn(self.q.nrows(), self.q.ncols(), |i, j| var[i] * self.q[(i, j)]);
        let m = &self.r + self.q.transpose() * &dq * lambda;
        let gamma = m.cholesky()?.solve(&(self.q.transpose() * y));
        let f = y - dq * &gamma * lambda;
        Some((f, gamma))
    }
}

fn spline_from(xs: &[f64], ys: &[f64], f: &DVector<f64>, gamma: &DVector<f64>, lambda: f64) -> SmoothingSpline {
    let mut curvature = vec![0.0];
    curvature.extend(gamma.iter());
    curvature.push(0.0);
    let mut s = SmoothingSpline { knots: xs.to_vec(), values: f.iter().cloned().collect(), curvature, lambda, residual: 0.0 };
    s.residual = sup_residual(|x| s.value(x), xs, ys);
    s
}

fn check_knots(xs: &[f64], n_y: usize) -> Result<()> {
    if xs.len() != n_y || xs.len() < 3 {
        return Err(Error::Fit("smoothing spline needs at least three points".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Fit("spline knots must be strictly increasing".into()));
    }
    Ok(())
}

/// Smoothest spline with `Σ ((y - f)/σ)² ≤ n` (Reinsch's criterion for
/// data with known standard errors `sigma`).
pub fn fit_smoothing_spline_sigma(xs: &[f64], ys: &[f64], sigma: &[f64]) -> Result<SmoothingSpline> {
    check_knots(xs, ys.len())?;
    if sigma.len() != xs.len() || sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Fit("spline standard errors must be positive, one per point".into()));
    }
    let n = xs.len();
    let rs = Reinsch::new(xs);
    let y = DVector::from_column_slice(ys);
    let var = DVector::from_iterator(n, sigma.iter().map(|s| s * s));
    let span = xs[n - 1] - xs[0];
    let chi2 = |log_l: f64| -> f64 {
        match rs.solve_weighted(&y, &var, log_l.exp() * span.powi(3)) {
            Some((f, _)) => (0..n).map(|i| (y[i] - f[i]).powi(2) / var[i]).sum(),
            None => f64::INFINITY,
        }
    };
    let target = n as f64;
    // χ² increases with λ; bisect in log λ
    let (mut lo, mut hi) = (-60.0, 40.0);
    let lam = if chi2(hi) <= target {
        hi
    } else if chi2(lo) >= target {
        lo
    } else {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if chi2(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let lambda = lam.exp() * span.powi(3);
    let (f, gamma) = rs.solve_weighted(&y, &var, lambda).ok_or_else(|| Error::Fit("spline system is singular".into()))?;
    Ok(spline_from(xs, ys, &f, &gamma, lambda))
}

/// Smoothing spline with `λ` chosen by generalized cross-validation
/// (`lambda = None`) or fixed. Knots must be strictly increasing.
pub fn fit_smoothing_spline(xs: &[f64], ys: &[f64], lambda: Option<f64>) -> Result<SmoothingSpline> {
    check_knots(xs, ys.len())?;
    let n = xs.len();
    let rs = Reinsch::new(xs);
    let y = DVector::from_column_slice(ys);
    let span = xs[n - 1] - xs[0];
    let gcv = |log_l: f64| -> f64 {
        match rs.solve(&y, log_l.exp() * span.powi(3)) {
            Some((f, _, tr)) => {
                let rss = (&y - f).norm_squared();
                n as f64 * rss / (n as f64 - tr).max(1e-9).powi(2)
            }
            None => f64::INFINITY,
        }
    };
    let lam = match lambda {
        Some(l) => l,
        None => {
            let mut best = (f64::INFINITY, -10.0);
            for i in 0..=30 {
                let t = -25.0 + i as f64;
                let g = gcv(t);
                if g < best.0 {
                    best = (g, t);
                }
            }
            let (t, _) = golden_section(gcv, best.1 - 1.0, best.1 + 1.0, 1e-4);
            t.exp() * span.powi(3)
        }
    };
    let (f, gamma, _) = rs.solve(&y, lam).ok_or_else(|| Error::Fit("spline system is singular".into()))?;
    Ok(spline_from(xs, ys, &f, &gamma, lam))
}

/// Fitted CDF of one of the supported kinds.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CdfFit {
    BetaMixture(BetaMixture),
    Fourier(FourierFit),
    Spline(SmoothingSpline),
}

impl CdfFit {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            CdfFit::BetaMixture(b) => b.cdf(x),
            CdfFit::Fourier(f) => f.cdf(x),
            CdfFit::Spline(s) => s.cdf(x),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            CdfFit::BetaMixture(b) => b.density(x),
            CdfFit::Fourier(f) => f.density(x),
            CdfFit::Spline(s) => s.density(x),
        }
    }

    pub fn residual(&self) -> f64 {
        match self {
            CdfFit::BetaMixture(b) => b.residual,
            CdfFit::Fourier(f) => f.residual,
            CdfFit::Spline(s) => s.residual,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn ecdf_steps() {
        let e = Ecdf::new(&[0.3; 10]).unwrap();
        assert_eq!(e.cdf(0.29), 0.0);
        assert_eq!(e.cdf(0.3), 1.0);
        let e = Ecdf::new(&[0.4, 0.1, 0.2, 0.3]).unwrap();
        assert_eq!(e.table(&[0.0, 0.1, 0.25, 1.0]), vec![0.0, 0.25, 0.5, 1.0]);
        assert_eq!(e.quantile(0.5), 0.2);
        assert!(Ecdf::new(&[]).is_err());
    }

    #[test]
    fn ecdf_dkw() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 5000;
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let e = Ecdf::new(&v).unwrap();
        let eps = ((2.0f64 / 0.01).ln() / (2.0 * n as f64)).sqrt();
        let sup = unit_grid(1001).iter().map(|&x| (e.cdf(x) - x).abs()).fold(0.0, f64::max);
        assert!(sup <= eps, "{sup} > {eps}");
    }

    #[test]
    fn tail_slope_of_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..200_000).map(|_| rng.random::<f64>().powf(1.0 / 3.0)).collect();
        let e = Ecdf::new(&v).unwrap();
        assert!((e.tail_slope(&[0.001, 0.003, 0.01, 0.03], false) - 3.0).abs() < 0.15);
        assert!((e.tail_slope(&[0.001, 0.003, 0.01], true) - 1.0).abs() < 0.1);
    }

    #[test]
    fn beta_mixture_recovers_single_term() {
        let xs = unit_grid(101);
        let ys: Vec<f64> = xs.iter().map(|&x| beta_reg(3.0, 10.5, x)).collect();
        let fit = fit_beta_mixture(&xs, &ys, 3.0, 10.5, 2).unwrap();
        assert!(fit.residual < 1e-4, "{}", fit.residual);
        assert!((fit.terms.iter().map(|t| t.weight).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(fit.cdf(0.0).abs() < 1e-12 && (fit.cdf(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_mixture_three_terms() {
        let truth = BetaMixture {
            a_min: 2.0,
            b_min: 3.0,
            terms: vec![
                BetaTerm { weight: 0.3, a: 2.0, b: 6.0 },
                BetaTerm { weight: 0.3, a: 7.0, b: 3.0 },
                BetaTerm { weight: 0.4, a: 4.0, b: 4.0 },
            ],
            residual: 0.0,
        };
        let xs = unit_grid(101);
        let ys: Vec<f64> = xs.iter().map(|&x| truth.cdf(x)).collect();
        let fit = fit_beta_mixture(&xs, &ys, 2.0, 3.0, 3).unwrap();
        assert!(fit.residual < 1e-3, "{}", fit.residual);
        for i in 0..1000 {
            let x = (i as f64 + 0.5) / 1000.0;
            assert!(fit.density(x) >= 0.0);
        }
    }

    #[test]
    fn beta_density_matches_derivative() {
        let m = BetaMixture {
            a_min: 3.0,
            b_min: 10.5,
            terms: vec![BetaTerm { weight: 0.6, a: 3.0, b: 12.0 }, BetaTerm { weight: 0.4, a: 5.0, b: 10.5 }],
            residual: 0.0,
        };
        for &x in &[0.05, 0.2, 0.5, 0.8] {
            let h = 1e-6;
            let fd = (m.cdf(x + h) - m.cdf(x - h)) / (2.0 * h);
            assert!((fd - m.density(x)).abs() < 1e-6 * fd.abs().max(1.0));
        }
        assert!(fit_beta_mixture(&[0.5], &[0.5], 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn fourier_exact_and_truncated() {
        let xs = unit_grid(201);
        let ys: Vec<f64> = xs.iter().map(|&x| x + 0.05 * (PI * x).sin() - 0.02 * (3.0 * PI * x).sin()).collect();
        let f = fit_fourier(&xs, &ys).unwrap();
        assert_eq!(f.coefficients.len(), 3);
        assert!((f.coefficients[0] - 0.05).abs() < 1e-10 && (f.coefficients[2] + 0.02).abs() < 1e-10);
        assert!(f.residual < 1e-10);
        let g = fit_fourier(&xs, &xs).unwrap();
        assert!(g.coefficients.is_empty());
    }

    #[test]
    fn fourier_drops_terms_for_positivity() {
        let xs = unit_grid(201);
        // a steep step forces negative slopes with many terms
        let ys: Vec<f64> = xs.iter().map(|&x| if x < 0.5 { 0.2 * x } else { 0.8 + 0.2 * x }).map(|v: f64| v.min(1.0)).collect();
        let f = fit_fourier(&xs, &ys).unwrap();
        assert!(f.positive_on_interior());
    }

    #[test]
    fn spline_limits() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 19.0 + 0.01 * (i as f64).sin()).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| (3.0 * x).sin() + x * x).collect();
        let interp = fit_smoothing_spline(&xs, &ys, Some(1e-14)).unwrap();
        assert!(interp.residual < 1e-8);
        // λ → ∞ gives the least-squares line
        let line = fit_smoothing_spline(&xs, &ys, Some(1e12)).unwrap();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let b = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        for &x in &[0.1, 0.5, 0.9] {
            assert!((line.value(x) - (my + b * (x - mx))).abs() < 1e-5);
            assert!((line.derivative(x) - b).abs() < 1e-5);
        }
    }

    #[test]
    fn spline_derivative_consistent() {
        let xs: Vec<f64> = (0..15).map(|i| (i as f64 / 14.0).powf(1.3)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| x.exp()).collect();
        let s = fit_smoothing_spline(&xs, &ys, Some(1e-4)).unwrap();
        for &x in &[-0.1, 0.13, 0.5, 0.77, 1.05] {
            let h = 1e-6;
            let fd = (s.value(x + h) - s.value(x - h)) / (2.0 * h);
            assert!((fd - s.derivative(x)).abs() < 1e-5, "{x}");
        }
    }

    #[test]
    fn spline_gcv_denoises() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let xs = unit_grid(80);
        let truth = |x: f64| (2.0 * PI * x).sin();
        let ys: Vec<f64> = xs.iter().map(|&x| truth(x) + noise.sample(&mut rng)).collect();
        let s = fit_smoothing_spline(&xs, &ys, None).unwrap();
        let rms_fit = (xs.iter().map(|&x| (s.value(x) - truth(x)).powi(2)).sum::<f64>() / 80.0).sqrt();
        assert!(rms_fit < 0.03, "{rms_fit}");
        assert!(fit_smoothing_spline(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0], None).is_err());
    }

    #[test]
    fn spline_with_known_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs = unit_grid(60);
        let truth = |x: f64| (2.0 * PI * x).sin();
        let sigma: Vec<f64> = xs.iter().map(|&x| 0.02 + 0.06 * x).collect();
        let ys: Vec<f64> = xs.iter().zip(&sigma).map(|(&x, &s)| truth(x) + s * Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        let s = fit_smoothing_spline_sigma(&xs, &ys, &sigma).unwrap();
        let chi2: f64 = xs.iter().zip(&ys).zip(&sigma).map(|((&x, &y), &e)| ((y - s.value(x)) / e).powi(2)).sum();
        assert!((chi2 - 60.0).abs() < 0.5, "{chi2}");
        let rms = (xs.iter().zip(&sigma).map(|(&x, &e)| ((s.value(x) - truth(x)) / e).powi(2)).sum::<f64>() / 60.0).sqrt();
        assert!(rms < 0.7, "{rms}");

        // noise-free line: the straight line already satisfies the bound
        let line: Vec<f64> = xs.iter().map(|&x| 0.3 + 0.5 * x).collect();
        let l = fit_smoothing_spline_sigma(&xs, &line, &vec![0.01; 60]).unwrap();
        assert!(xs.iter().all(|&x| (l.value(x) - (0.3 + 0.5 * x)).abs() < 1e-9));
        assert!(fit_smoothing_spline_sigma(&xs, &line, &vec![0.0; 60]).is_err());
    }
}
