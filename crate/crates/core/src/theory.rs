//! Asymptotic predictors for the expected MSF and the bin-size moments, and
//! the quadratic divergence `∫ f_X² / f_Y` that scales them.

use num_rational::Ratio;

use crate::distributions::{beta_pdf, log_beta_fn, quadrature_unit, BetaParams};
use crate::error::{Error, Result};

/// Growth of the user count with the item count: `m ≈ r · n^γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSpec {
    r: f64,
    gamma: f64,
}

impl RegimeSpec {
    pub fn new(r: f64, gamma: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Domain(format!("rate r must be positive, got {r}")));
        }
        if !(gamma.is_finite() && gamma >= 1.0) {
            return Err(Error::Domain(format!("exponent gamma must be >= 1, got {gamma}")));
        }
        Ok(Self { r, gamma })
    }

    /// `m ≈ r · n`.
    pub fn linear(r: f64) -> Result<Self> {
        Self::new(r, 1.0)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_linear(&self) -> bool {
        self.gamma == 1.0
    }

    /// `round(r · n^γ)`, halves rounded up.
    pub fn users_for(&self, n: usize) -> u64 {
        (self.r * (n as f64).powf(self.gamma) + 0.5).floor() as u64
    }
}

fn check_divergence_domain(fx: BetaParams, fy: BetaParams) -> Result<()> {
    if 2.0 * fx.a() - fy.a() > 0.0 && 2.0 * fx.b() - fy.b() > 0.0 {
        Ok(())
    } else {
        Err(Error::DivergenceUndefined {
            score: fx.to_string(),
            threshold: fy.to_string(),
        })
    }
}

/// `E[(f_X(Y)/f_Y(Y))²] = B(a_Y, b_Y) · B(2a_X − a_Y, 2b_X − b_Y) / B(a_X, b_X)²`,
/// evaluated in log space.
///
/// The integral is finite exactly when `2a_X > a_Y` and `2b_X > b_Y`.
pub fn divergence_beta_closed_form(fx: BetaParams, fy: BetaParams) -> Result<f64> {
    check_divergence_domain(fx, fy)?;
    let log_value = log_beta_fn(fy.a(), fy.b())? - 2.0 * log_beta_fn(fx.a(), fx.b())?
        + log_beta_fn(2.0 * fx.a() - fy.a(), 2.0 * fx.b() - fy.b())?;
    Ok(log_value.exp())
}

/// Numerical `∫₀¹ f_X(y)² / f_Y(y) dy`, the independent check on
/// [`divergence_beta_closed_form`].
///
/// Both densities must have shapes ≥ 1 and the integrand must stay bounded
/// (`2a_X − a_Y ≥ 1`, `2b_X − b_Y ≥ 1`).
pub fn divergence_quadrature(fx: BetaParams, fy: BetaParams, tol: f64) -> Result<f64> {
    if !fx.is_bounded() || !fy.is_bounded() {
        return Err(Error::Domain(format!(
            "quadrature needs shapes >= 1, got {fx} and {fy}"
        )));
    }
    if 2.0 * fx.a() - fy.a() < 1.0 || 2.0 * fx.b() - fy.b() < 1.0 {
        return Err(Error::Domain(format!(
            "integrand f_X^2/f_Y is unbounded for {fx} and {fy}"
        )));
    }
    quadrature_unit(
        |y| {
            let px = beta_pdf(y, fx).expect("node inside [0, 1]");
            let py = beta_pdf(y, fy).expect("node inside [0, 1]");
            px * px / py
        },
        tol,
    )
}

/// Linear-regime prediction: `E[F]` lies within `slack` (plus `o(n)`) of
/// `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPrediction {
    pub center: f64,
    pub slack: f64,
}

impl LinearPrediction {
    pub fn lower(&self) -> f64 {
        self.center - self.slack
    }

    pub fn upper(&self) -> f64 {
        self.center + self.slack
    }
}

/// For `m ≈ r n`: center `n (1/2 + divergence / r)`, slack `r n / 2`.
pub fn predict_msf_linear(n: usize, r: f64, divergence: f64) -> LinearPrediction {
    let n = n as f64;
    LinearPrediction {
        center: n * (0.5 + divergence / r),
        slack: r * n / 2.0,
    }
}

/// For `m ≈ r n^γ` with `γ > 1`: `E[F] ~ (2/r) n^(2−γ) · divergence`.
pub fn predict_msf_power(n: usize, spec: RegimeSpec, divergence: f64) -> Result<f64> {
    if spec.gamma <= 1.0 {
        return Err(Error::Domain(format!(
            "power-regime prediction needs gamma > 1, got {}",
            spec.gamma
        )));
    }
    Ok(2.0 / spec.r * (n as f64).powf(2.0 - spec.gamma) * divergence)
}

/// The predicted MSF for a regime: the linear center when `γ = 1`, the
/// power-law asymptote otherwise.
pub fn predict_msf(n: usize, spec: RegimeSpec, divergence: f64) -> f64 {
    if spec.is_linear() {
        predict_msf_linear(n, spec.r, divergence).center
    } else {
        predict_msf_power(n, spec, divergence).expect("gamma > 1")
    }
}

/// Leading terms of `E[B²]`: `n/(m+1) + 2(n² − n)/(m+1)² · divergence`.
pub fn predict_eb2(n: usize, m: u64, divergence: f64) -> f64 {
    let n = n as f64;
    let k = m as f64 + 1.0;
    n / k + 2.0 * (n * n - n) / (k * k) * divergence
}

/// Leading terms of `P(B odd)`: `n/m − 2 (n/m)² · divergence`.
pub fn predict_p_odd(n: usize, m: u64, divergence: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("P(B odd) prediction needs m >= 1".into()));
    }
    let ratio = n as f64 / m as f64;
    Ok(ratio - 2.0 * ratio * ratio * divergence)
}

/// `E[F] = (m+1)/2 · (E[B²] − P(B odd))` for a uniformly chosen interval.
pub fn msf_from_bin_stats(m: u64, eb2: f64, p_odd: f64) -> f64 {
    (m as f64 + 1.0) / 2.0 * (eb2 - p_odd)
}

/// [`msf_from_bin_stats`] in exact rational arithmetic.
pub fn msf_from_bin_stats_exact(m: u64, eb2: Ratio<i128>, p_odd: Ratio<i128>) -> Ratio<i128> {
    Ratio::new(i128::from(m) + 1, 2) * (eb2 - p_odd)
}
