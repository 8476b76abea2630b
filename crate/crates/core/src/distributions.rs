//! Beta-family densities, CDFs and sampling, plus an adaptive Gauss–Legendre
//! quadrature on the unit interval used as a numerical oracle.
//!
//! The log-gamma and regularized incomplete Beta special functions come from
//! `statrs`; Beta variates come from `rand_distr`.

use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::{beta::beta_reg, gamma::ln_gamma};

use crate::error::{Error, Result};

/// Shape parameters `(a, b)` of a Beta distribution on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    a: f64,
    b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(Error::Domain(format!(
                "Beta shapes must be positive and finite, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    /// The uniform density, Beta(1, 1).
    pub const fn uniform() -> Self {
        Self { a: 1.0, b: 1.0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn is_uniform(&self) -> bool {
        self.a == 1.0 && self.b == 1.0
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    /// Shapes of at least one on both sides keep the density bounded, which
    /// the quadrature oracle relies on.
    pub fn is_bounded(&self) -> bool {
        self.a >= 1.0 && self.b >= 1.0
    }
}

impl Default for BetaParams {
    fn default() -> Self {
        Self::uniform()
    }
}

impl fmt::Display for BetaParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Beta({}, {})", self.a, self.b)
    }
}

/// `ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b)`.
pub fn log_beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!(
            "log-Beta needs positive arguments, got ({a}, {b})"
        )));
    }
    Ok(ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{x} is outside [0, 1]")))
    }
}

// k * ln(x) with the 0 * ln(0) = 0 convention.
fn xlogy(k: f64, x: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * x.ln()
    }
}

/// Density `x^(a−1) (1−x)^(b−1) / B(a, b)`.
pub fn beta_pdf(x: f64, p: BetaParams) -> Result<f64> {
    check_unit(x)?;
    if p.is_uniform() {
        return Ok(1.0);
    }
    let log_norm = log_beta_fn(p.a, p.b)?;
    Ok((xlogy(p.a - 1.0, x) + xlogy(p.b - 1.0, 1.0 - x) - log_norm).exp())
}

/// Regularized incomplete Beta function `I_x(a, b)`.
pub fn beta_cdf(x: f64, p: BetaParams) -> Result<f64> {
    check_unit(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if p.is_uniform() {
        return Ok(x);
    }
    Ok(beta_reg(p.a, p.b, x).clamp(0.0, 1.0))
}

/// Draws `count` i.i.d. Beta variates from `rng`.
///
/// Uses the `rand_distr` Beta sampler (Cheng's BB/BC rejection algorithms).
/// Draws landing exactly on 0 or 1 are discarded and redrawn, so every value
/// lies in the open interval. The output is a deterministic function of the
/// stream state.
pub fn sample_beta<R: Rng + ?Sized>(p: BetaParams, rng: &mut R, count: usize) -> Vec<f64> {
    let mut sampler = BetaSampler::new(p);
    (0..count).map(|_| sampler.draw(rng)).collect()
}

/// Reusable sampler for one Beta law; see [`sample_beta`].
#[derive(Debug, Clone)]
pub struct BetaSampler {
    dist: Beta<f64>,
}

impl BetaSampler {
    pub fn new(p: BetaParams) -> Self {
        // Shapes were validated by BetaParams::new.
        let dist = Beta::new(p.a, p.b).expect("validated Beta shapes");
        Self { dist }
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        loop {
            let v = self.dist.sample(rng);
            if v > 0.0 && v < 1.0 {
                return v;
            }
        }
    }
}

const GL_ORDER: usize = 20;
const MAX_SUBINTERVALS: usize = 1 << 16;

/// Nodes and weights of the order-20 Gauss–Legendre rule on `[-1, 1]`,
/// found by Newton iteration on the Legendre three-term recurrence.
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut deriv = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                deriv = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / deriv;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
            rule.push((x, w));
        }
        rule
    })
}

fn gl_panel<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    half * gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
}

/// Integrates `f` over `[0, 1]` to absolute tolerance `tol`.
///
/// Composite order-20 Gauss–Legendre with interval bisection: a panel is
/// accepted when its two halves agree with the whole to within the panel's
/// share of the tolerance. Nodes never touch the endpoints, so integrands of
/// the form `0/0` at 0 or 1 are fine as long as they stay bounded inside.
pub fn quadrature_unit<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<f64> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let mut stack = vec![(0.0, 1.0, gl_panel(&f, 0.0, 1.0), tol)];
    let mut total = 0.0;
    let mut panels = 0usize;
    while let Some((lo, hi, whole, local_tol)) = stack.pop() {
        panels += 1;
        if panels > MAX_SUBINTERVALS {
            return Err(Error::Numeric(format!(
                "quadrature did not converge within {MAX_SUBINTERVALS} subintervals"
            )));
        }
        let mid = 0.5 * (lo + hi);
        let left = gl_panel(&f, lo, mid);
        let right = gl_panel(&f, mid, hi);
        let refined = left + right;
        if !refined.is_finite() {
            return Err(Error::Numeric(format!(
                "integrand is not finite on [{lo}, {hi}]"
            )));
        }
        if (refined - whole).abs() <= local_tol || hi - lo < 1e-12 {
            total += refined;
        } else {
            stack.push((lo, mid, left, 0.5 * local_tol));
            stack.push((mid, hi, right, 0.5 * local_tol));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bp(a: f64, b: f64) -> BetaParams {
        BetaParams::new(a, b).unwrap()
    }

    #[test]
    fn log_beta_examples() {
        assert!(log_beta_fn(1.0, 1.0).unwrap().abs() < 1e-12);
        let v = log_beta_fn(2.0, 2.0).unwrap();
        assert!((v - (1.0f64 / 6.0).ln()).abs() < 1e-12 * v.abs());
        let v = log_beta_fn(2.0, 4.0).unwrap();
        assert!((v - (1.0f64 / 20.0).ln()).abs() < 1e-12 * v.abs());
    }

    #[test]
    fn log_beta_rejects_non_positive() {
        assert!(matches!(log_beta_fn(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(log_beta_fn(1.0, -2.0), Err(Error::Domain(_))));
        assert!(BetaParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn log_beta_large_integer_shapes() {
        // B(a, b) = (a-1)!(b-1)!/(a+b-1)!, summed in log space exactly.
        let ln_fact = |k: u32| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
        for &(a, b) in &[(5u32, 7u32), (30, 2), (100, 100), (57, 91)] {
            let want = ln_fact(a - 1) + ln_fact(b - 1) - ln_fact(a + b - 1);
            let got = log_beta_fn(a as f64, b as f64).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs(), "({a},{b}): {got} vs {want}");
        }
    }

    #[test]
    fn pdf_examples() {
        assert_eq!(beta_pdf(0.3, BetaParams::uniform()).unwrap(), 1.0);
        assert!((beta_pdf(0.5, bp(2.0, 2.0)).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(beta_pdf(0.0, bp(2.0, 3.0)).unwrap(), 0.0);
        assert!(beta_pdf(1.5, bp(2.0, 3.0)).is_err());
        assert!(beta_pdf(-0.1, BetaParams::uniform()).is_err());
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(beta_cdf(0.4, BetaParams::uniform()).unwrap(), 0.4);
        assert!((beta_cdf(0.5, bp(2.0, 2.0)).unwrap() - 0.5).abs() < 1e-10);
        assert!((beta_cdf(0.5, bp(1.0, 2.0)).unwrap() - 0.75).abs() < 1e-10);
        assert_eq!(beta_cdf(0.0, bp(2.0, 3.0)).unwrap(), 0.0);
        assert_eq!(beta_cdf(1.0, bp(2.0, 3.0)).unwrap(), 1.0);
        assert!(beta_cdf(1.01, bp(2.0, 3.0)).is_err());
    }

    #[test]
    fn cdf_matches_polynomial_closed_form() {
        // Beta(2,3): I_x = 6x^2 - 8x^3 + 3x^4.
        for i in 1..100 {
            let x = i as f64 / 100.0;
            let want = 6.0 * x * x - 8.0 * x.powi(3) + 3.0 * x.powi(4);
            assert!((beta_cdf(x, bp(2.0, 3.0)).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_examples() {
        assert!((quadrature_unit(|_| 1.0, 1e-12).unwrap() - 1.0).abs() < 1e-12);
        assert!((quadrature_unit(|x| x * x, 1e-10).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        let p = bp(2.0, 3.0);
        let v = quadrature_unit(|x| beta_pdf(x, p).unwrap(), 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quadrature_handles_kinks() {
        let v = quadrature_unit(|x| (x - 0.3).abs(), 1e-10).unwrap();
        assert!((v - (0.09 + 0.49) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn quadrature_reports_non_finite_integrand() {
        assert!(matches!(
            quadrature_unit(|x| if x > 0.7 { f64::NAN } else { x }, 1e-8),
            Err(Error::Numeric(_))
        ));
        assert!(quadrature_unit(|x| x, 0.0).is_err());
    }

    #[test]
    fn pdf_integrates_to_one() {
        let shapes = [1.0, 1.5, 2.0, 3.0, 5.0];
        for &a in &shapes {
            for &b in &shapes {
                let p = bp(a, b);
                let v = quadrature_unit(|x| beta_pdf(x, p).unwrap(), 1e-10).unwrap();
                assert!((v - 1.0).abs() < 1e-8, "{p}: {v}");
            }
        }
    }

    #[test]
    fn sample_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs = sample_beta(BetaParams::uniform(), &mut rng, 100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.005);
        assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));

        let xs = sample_beta(bp(2.0, 3.0), &mut rng, 100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.4).abs() < 0.005);
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = bp(2.0, 3.0);
        let a = sample_beta(p, &mut ChaCha8Rng::seed_from_u64(5), 50);
        let b = sample_beta(p, &mut ChaCha8Rng::seed_from_u64(5), 50);
        assert_eq!(a, b);
    }

    #[test]
    fn log_beta_is_symmetric() {
        for &(a, b) in &[(0.5, 3.0), (2.0, 7.5), (1.0, 40.0), (13.0, 0.25)] {
            let x = log_beta_fn(a, b).unwrap().exp();
            let y = log_beta_fn(b, a).unwrap().exp();
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
