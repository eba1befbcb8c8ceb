//! PAC-Bayesian certificates on the posterior-averaged squared error of
//! value-function estimates, and bound-driven λ selection.
//!
//! With probability 1 − δ, simultaneously for every measure μ:
//!
//! ```text
//! μ ε²  ≤  ( μR_n + √((ln(c2·m/δ) + KL(μ‖μ₀)) / (m − 1)) − μΓ_π ) / (1 − γ)²,
//! m = n / (V_max²·c1)
//! ```
//!
//! c1 and c2 come from the Markov-chain Bernstein inequality applied to the
//! squared residual, whose range is B = (R_max + (1 + γ)V_max)²: bounding the
//! lower tail's variance proxy by B gives a deviation √(2τB² ln(1/δ)/n), i.e.
//! V_max²·c1 = 2τB² and c2 = 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::{expected_bellman_error, variance_term_expected, NoiseModel, ResidualDataset};
use crate::error::{check_dim, Error, Result};
use crate::measure::{kl_product_gaussians, posterior_lambda, GaussianProductMeasure, PosteriorFamilyConfig};

/// Everything the deviation term depends on besides the KL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub n: usize,
    pub delta: f64,
    pub gamma: f64,
    pub v_max: f64,
    pub r_max: f64,
    /// Forgetting time ‖Γₙ‖² (1 for i.i.d. samples).
    pub tau: f64,
    pub c1: f64,
    pub c2: f64,
}

impl BoundConstants {
    /// Constants with V_max = R_max / (1 − γ).
    pub fn derive(n: usize, delta: f64, gamma: f64, r_max: f64, tau: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::param("gamma", format!("{gamma} is outside [0, 1)")));
        }
        Self::with_v_max(n, delta, gamma, r_max, r_max / (1.0 - gamma), tau)
    }

    pub fn with_v_max(n: usize, delta: f64, gamma: f64, r_max: f64, v_max: f64, tau: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta", format!("{delta} is outside (0, 1)")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::param("gamma", format!("{gamma} is outside [0, 1)")));
        }
        if !(r_max >= 0.0 && r_max.is_finite()) {
            return Err(Error::param("r_max", "must be nonnegative"));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::param("v_max", "must be strictly positive"));
        }
        if !(tau >= 1.0 && tau.is_finite()) {
            return Err(Error::param("tau", format!("{tau} is below 1")));
        }
        let b = (r_max + (1.0 + gamma) * v_max).powi(2);
        Ok(Self {
            n,
            delta,
            gamma,
            v_max,
            r_max,
            tau,
            c1: 2.0 * tau * b * b / (v_max * v_max),
            c2: 1.0,
        })
    }

    /// Replaces the derived V_max²·c1 with an explicit value; c2 is kept.
    pub fn with_sample_size_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::param("sample_size_threshold", "must be strictly positive"));
        }
        self.c1 = threshold / (self.v_max * self.v_max);
        Ok(self)
    }

    /// Range B of the squared Bellman residual of any |V| ≤ V_max.
    pub fn squared_residual_range(&self) -> f64 {
        (self.r_max + (1.0 + self.gamma) * self.v_max).powi(2)
    }

    /// V_max²·c1; the bound is informative only when n exceeds it.
    pub fn sample_size_threshold(&self) -> f64 {
        self.v_max * self.v_max * self.c1
    }

    /// m = n / (V_max²·c1).
    pub fn effective_sample_size(&self) -> f64 {
        self.n as f64 / self.sample_size_threshold()
    }

    pub fn check_sample_size(&self) -> Result<()> {
        let threshold = self.sample_size_threshold();
        if (self.n as f64) <= threshold {
            Err(Error::SampleSizeTooSmall { n: self.n, threshold })
        } else {
            Ok(())
        }
    }
}

/// √((ln((1 + C(c − 1))/δ) + KL) / (c − 1)): the average-over-ρ bound that
/// follows when each member satisfies R(f) ≤ √(ln(C/δ)/c).
pub fn generic_bound_rhs(scale: f64, c: f64, delta: f64, kl: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::param("C", "must be strictly positive"));
    }
    if !(c > 1.0) {
        return Err(Error::param("c", "must exceed 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", format!("{delta} is outside (0, 1)")));
    }
    if !(kl >= 0.0) {
        return Err(Error::param("kl", "must be nonnegative"));
    }
    Ok(((((1.0 + scale * (c - 1.0)) / delta).ln() + kl) / (c - 1.0)).sqrt())
}

/// √((ln(c2·m/δ) + KL) / (m − 1)) with m the effective sample size.
///
/// Uses ln(c2·m/δ) ≥ ln((1 + c2(m − 1))/δ), so it never undercuts
/// [`generic_bound_rhs`] with C = c2, c = m.
pub fn deviation_term(constants: &BoundConstants, kl: f64) -> Result<f64> {
    constants.check_sample_size()?;
    if !(kl >= 0.0) {
        return Err(Error::param("kl", "must be nonnegative"));
    }
    let m = constants.effective_sample_size();
    let log_arg = constants.c2 * m / constants.delta;
    debug_assert!(log_arg >= 1.0);
    Ok(((log_arg.ln() + kl) / (m - 1.0)).sqrt())
}

/// Provenance recorded alongside a certificate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CertificateNotes {
    /// Ridge used for the LSTD estimate behind the posterior, if any.
    pub lstd_ridge: Option<f64>,
    /// h² forgetting-time bound for length-h trajectories.
    pub tau_crude: Option<f64>,
    /// Squared norm of one all-ones h×h block.
    pub tau_block: Option<f64>,
    /// Set when V_max²·c1 was supplied instead of derived.
    pub explicit_threshold: Option<f64>,
    /// The Gaussian posterior is not truncated to |V| ≤ V_max.
    pub untruncated_gaussian_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub constants: BoundConstants,
    pub kl: f64,
    pub mu_rn: f64,
    pub mu_gamma_pi: f64,
    pub deviation: f64,
    /// (μR_n + deviation − μΓ_π)/(1 − γ)² before flooring.
    pub raw_bound: f64,
    /// Upper bound on μ ε², floored at 0.
    pub bound_value: f64,
    pub lambda: Option<f64>,
    #[serde(default)]
    pub notes: CertificateNotes,
}

pub fn certify(
    mu: &GaussianProductMeasure,
    mu0: &GaussianProductMeasure,
    residuals: &ResidualDataset,
    noise: &NoiseModel,
    constants: &BoundConstants,
) -> Result<BoundCertificate> {
    check_dim(mu0.dim(), mu.dim())?;
    if residuals.len() != constants.n {
        return Err(Error::param(
            "constants.n",
            format!("{} does not match the {} residual samples", constants.n, residuals.len()),
        ));
    }
    let kl = kl_product_gaussians(mu, mu0)?;
    let mu_rn = expected_bellman_error(mu, residuals)?;
    let mu_gamma_pi = variance_term_expected(mu, noise, constants.gamma)?;
    let deviation = deviation_term(constants, kl)?;
    let raw_bound = (mu_rn + deviation - mu_gamma_pi) / (1.0 - constants.gamma).powi(2);
    Ok(BoundCertificate {
        constants: constants.clone(),
        kl,
        mu_rn,
        mu_gamma_pi,
        deviation,
        raw_bound,
        bound_value: raw_bound.max(0.0),
        lambda: None,
        notes: CertificateNotes {
            untruncated_gaussian_support: true,
            ..CertificateNotes::default()
        },
    })
}

/// λ ∈ {0, s, 2s, …, 1}; 1 is always included.
pub fn lambda_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::param("grid_step", format!("{step} is outside (0, 1]")));
    }
    let count = (1.0 / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| (i as f64 * step).min(1.0)).collect();
    let last = *grid.last().expect("grid has λ = 0");
    if (1.0 - last).abs() < 1e-9 {
        *grid.last_mut().expect("nonempty") = 1.0;
    } else {
        grid.push(1.0);
    }
    Ok(grid)
}

/// Index of the smallest value; exact ties go to the later index.
pub fn argmin_prefer_last(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if v > values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub raw_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub posterior: GaussianProductMeasure,
    pub certificate: BoundCertificate,
    pub grid: Vec<GridPoint>,
}

/// Minimizes the certified bound over the λ grid (raw values, so negative
/// bounds still rank).
pub fn select_lambda(
    cfg: &PosteriorFamilyConfig,
    mu0: &GaussianProductMeasure,
    residuals: &ResidualDataset,
    noise: &NoiseModel,
    constants: &BoundConstants,
    grid_step: f64,
) -> Result<LambdaSelection> {
    let grid = lambda_grid(grid_step)?;
    let evaluated: Vec<(GaussianProductMeasure, BoundCertificate)> = grid
        .par_iter()
        .map(|&lambda| {
            let mu = posterior_lambda(cfg, lambda)?;
            let mut cert = certify(&mu, mu0, residuals, noise, constants)?;
            cert.lambda = Some(lambda);
            Ok((mu, cert))
        })
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = evaluated.iter().map(|(_, c)| c.raw_bound).collect();
    let best = argmin_prefer_last(&raw).expect("grid is nonempty");
    let grid_points = grid
        .iter()
        .zip(&raw)
        .map(|(&lambda, &raw_bound)| GridPoint { lambda, raw_bound })
        .collect();
    let (posterior, certificate) = evaluated.into_iter().nth(best).expect("index in range");
    Ok(LambdaSelection {
        lambda: grid[best],
        posterior,
        certificate,
        grid: grid_points,
    })
}
