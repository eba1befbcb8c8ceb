//! Axis-aligned Gaussian measures over parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Product of independent Gaussians, one per parameter coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct GaussianProductMeasure {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMeasure {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl TryFrom<RawMeasure> for GaussianProductMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        GaussianProductMeasure::new(raw.mean, raw.variance)
    }
}

impl GaussianProductMeasure {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::param("mean", "measure must have dimension >= 1"));
        }
        check_dim(mean.len(), variance.len())?;
        if let Some((j, v)) = variance
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::param(
                "variance",
                format!("variance[{j}] = {v} is not strictly positive"),
            ));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("mean", "non-finite entry"));
        }
        Ok(Self { mean, variance })
    }

    /// Same variance on every coordinate.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, vec![variance; d])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }
}

/// KL(q ‖ p) in nats between two product Gaussians.
pub fn kl_product_gaussians(q: &GaussianProductMeasure, p: &GaussianProductMeasure) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    let kl = q
        .mean
        .iter()
        .zip(&q.variance)
        .zip(p.mean.iter().zip(&p.variance))
        .map(|((&qm, &qv), (&pm, &pv))| {
            let gap = qm - pm;
            0.5 * (pv / qv).ln() + (qv + gap * gap) / (2.0 * pv) - 0.5
        })
        .sum::<f64>();
    // Rounding can leave tiny negatives when q == p.
    Ok(kl.max(0.0))
}

/// Parameters of the λ-interpolated family between the empirical estimate
/// (λ = 0) and the conjugate Bayesian posterior (λ = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFamilyConfig {
    pub prior_mean: Vec<f64>,
    pub prior_variance: f64,
    pub empirical_mean: Vec<f64>,
    pub empirical_variance: f64,
}

impl PosteriorFamilyConfig {
    pub fn new(
        prior_mean: Vec<f64>,
        prior_variance: f64,
        empirical_mean: Vec<f64>,
        empirical_variance: f64,
    ) -> Result<Self> {
        let cfg = Self {
            prior_mean,
            prior_variance,
            empirical_mean,
            empirical_variance,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.prior_mean.len(), self.empirical_mean.len())?;
        if self.prior_mean.is_empty() {
            return Err(Error::param("prior_mean", "dimension must be >= 1"));
        }
        if !(self.prior_variance > 0.0 && self.prior_variance.is_finite()) {
            return Err(Error::param("prior_variance", "must be strictly positive"));
        }
        if !(self.empirical_variance > 0.0 && self.empirical_variance.is_finite()) {
            return Err(Error::param("empirical_variance", "must be strictly positive"));
        }
        Ok(())
    }

    /// The fixed prior μ₀ = N(θ₀, σ₀² I).
    pub fn prior(&self) -> Result<GaussianProductMeasure> {
        GaussianProductMeasure::isotropic(self.prior_mean.clone(), self.prior_variance)
    }
}

/// Member μ_λ of the posterior family.
///
/// Precision λ/σ₀² + 1/σ̂²; mean is the precision-weighted average of θ₀
/// (weight λ/σ₀²) and θ̂ (weight 1/σ̂²).
pub fn posterior_lambda(cfg: &PosteriorFamilyConfig, lambda: f64) -> Result<GaussianProductMeasure> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::param("lambda", format!("{lambda} is outside [0, 1]")));
    }
    cfg.validate()?;
    let prior_precision = lambda / cfg.prior_variance;
    let empirical_precision = 1.0 / cfg.empirical_variance;
    let precision = prior_precision + empirical_precision;
    let mean = cfg
        .prior_mean
        .iter()
        .zip(&cfg.empirical_mean)
        .map(|(&t0, &th)| (prior_precision * t0 + empirical_precision * th) / precision)
        .collect();
    GaussianProductMeasure::isotropic(mean, 1.0 / precision)
}
