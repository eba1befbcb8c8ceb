//! Bellman residuals, LSTD and variance corrections for linear value
//! functions V_θ(x) = θᵀφ(x).
//!
//! A sample (x, r, x′) contributes the residual r + γV(x′) − V(x) =
//! r + ψᵀθ with ψ = γφ(x′) − φ(x). Everything here works on the precomputed
//! pairs (r, ψ). Under a product Gaussian θ ~ N(m, diag(v)) the squared
//! residual has the closed-form mean (r + ψᵀm)² + Σⱼ vⱼψⱼ².

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::GenerativeModel;
use crate::error::{check_dim, Error, Result};
use crate::features::{FeatureMap, SparseVec};
use crate::measure::GaussianProductMeasure;
use crate::mixing::FiniteChain;
use crate::rng::stream_rng;

/// An observed step (x, r, x′).
pub trait Transition: Sync {
    fn state(&self) -> &[f64];
    fn reward(&self) -> f64;
    fn next_state(&self) -> &[f64];
}

/// A transition of a finite chain, with the state index stored as a real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainTransition {
    pub state: [f64; 1],
    pub reward: f64,
    pub next_state: [f64; 1],
}

impl ChainTransition {
    pub fn new(state: usize, reward: f64, next_state: usize) -> Self {
        Self {
            state: [state as f64],
            reward,
            next_state: [next_state as f64],
        }
    }
}

impl Transition for ChainTransition {
    fn state(&self) -> &[f64] {
        &self.state
    }

    fn reward(&self) -> f64 {
        self.reward
    }

    fn next_state(&self) -> &[f64] {
        &self.next_state
    }
}

#[derive(Debug, Clone)]
pub struct LinearValueFunction<F> {
    pub theta: Vec<f64>,
    pub features: F,
}

impl<F: FeatureMap> LinearValueFunction<F> {
    pub fn new(theta: Vec<f64>, features: F) -> Result<Self> {
        check_dim(features.dim(), theta.len())?;
        Ok(Self { theta, features })
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.features.features(state).dot(&self.theta)
    }

    /// ‖θ‖₂ · F_max, a bound on |V_θ| over the whole state space.
    pub fn value_bound(&self) -> f64 {
        self.theta.iter().map(|t| t * t).sum::<f64>().sqrt() * self.features.norm_bound()
    }
}

/// Per-sample (rᵢ, ψᵢ) pairs.
#[derive(Debug, Clone)]
pub struct ResidualDataset {
    pub rewards: Vec<f64>,
    pub psi: Vec<SparseVec>,
    pub dim: usize,
    pub gamma: f64,
}

impl ResidualDataset {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

pub fn build_residuals<T: Transition, F: FeatureMap>(samples: &[T], features: &F, gamma: f64) -> Result<ResidualDataset> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::param("gamma", format!("{gamma} is outside [0, 1)")));
    }
    let psi = samples
        .par_iter()
        .map(|s| features.features(s.next_state()).axpby(gamma, &features.features(s.state()), -1.0))
        .collect();
    Ok(ResidualDataset {
        rewards: samples.iter().map(|s| s.reward()).collect(),
        psi,
        dim: features.dim(),
        gamma,
    })
}

/// R_n(V_θ) = (1/n) Σ (rᵢ + ψᵢᵀθ)².
pub fn empirical_bellman_error(theta: &[f64], residuals: &ResidualDataset) -> Result<f64> {
    check_dim(residuals.dim, theta.len())?;
    if residuals.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = residuals
        .rewards
        .iter()
        .zip(&residuals.psi)
        .map(|(r, psi)| (r + psi.dot(theta)).powi(2))
        .sum();
    Ok(total / residuals.len() as f64)
}

/// E_{θ~μ}[R_n(V_θ)] in closed form.
pub fn expected_bellman_error(mu: &GaussianProductMeasure, residuals: &ResidualDataset) -> Result<f64> {
    check_dim(residuals.dim, mu.dim())?;
    if residuals.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = residuals
        .rewards
        .iter()
        .zip(&residuals.psi)
        .map(|(r, psi)| (r + psi.dot(mu.mean())).powi(2) + psi.weighted_norm_sq(mu.variance()))
        .sum();
    Ok(total / residuals.len() as f64)
}

/// Ridge added to the LSTD system.
#[derive(Debug, Clone, Default, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    /// 10⁻⁶ · trace(A) / d.
    #[default]
    Auto,
    Fixed(f64),
}


/// The LSTD normal equations Aθ = b.
#[derive(Debug, Clone, PartialEq)]
pub struct LstdSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstdSolution {
    pub theta: Vec<f64>,
    pub ridge: f64,
}

impl LstdSystem {
    /// A = Σ φ(xᵢ)(φ(xᵢ) − γφ(x′ᵢ))ᵀ, b = Σ φ(xᵢ)rᵢ.
    pub fn from_samples<T: Transition, F: FeatureMap>(samples: &[T], features: &F, gamma: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let d = features.dim();
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for s in samples {
            let phi = features.features(s.state());
            let diff = phi.axpby(1.0, &features.features(s.next_state()), -gamma);
            for (i, pi) in phi.iter() {
                b[i] += pi * s.reward();
                for (j, dj) in diff.iter() {
                    a[(i, j)] += pi * dj;
                }
            }
        }
        Ok(Self { a, b })
    }

    /// Kernel-exact system for a finite chain: states weighted by `weights`
    /// and next-state features averaged under P.
    pub fn from_finite_chain<F: FeatureMap>(chain: &FiniteChain, weights: &[f64], features: &F) -> Result<Self> {
        let s = chain.states();
        check_dim(s, weights.len())?;
        let d = features.dim();
        let mut phi = DMatrix::zeros(s, d);
        for i in 0..s {
            for (j, v) in features.features(&[i as f64]).iter() {
                phi[(i, j)] = v;
            }
        }
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(weights));
        let next = chain.transition() * &phi;
        let a = phi.transpose() * &w * (&phi - next.scale(chain.gamma()));
        let b = phi.transpose() * &w * DVector::from_column_slice(chain.rewards());
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn ridge_value(&self, ridge: Ridge) -> Result<f64> {
        match ridge {
            Ridge::Auto => Ok(1e-6 * self.a.trace() / self.dim() as f64),
            Ridge::Fixed(r) if r >= 0.0 && r.is_finite() => Ok(r),
            Ridge::Fixed(r) => Err(Error::param("ridge", format!("{r} must be nonnegative"))),
        }
    }

    /// Solves (A + ridge·I)θ = b by LU.
    pub fn solve(&self, ridge: Ridge) -> Result<LstdSolution> {
        let d = self.dim();
        let ridge = self.ridge_value(ridge)?;
        let mut a = self.a.clone();
        for i in 0..d {
            a[(i, i)] += ridge;
        }
        let rank = || {
            let svd = a.clone().svd(false, false);
            let max = svd.singular_values.max();
            svd.singular_values.iter().filter(|&&s| s > max * 1e-12 * d as f64).count()
        };
        if ridge == 0.0 {
            let r = rank();
            if r < d {
                return Err(Error::SingularSystem { size: d, rank: r });
            }
        }
        let theta = a.clone().lu().solve(&self.b);
        match theta {
            Some(t) if t.iter().all(|x| x.is_finite()) => Ok(LstdSolution {
                theta: t.iter().copied().collect(),
                ridge,
            }),
            _ => Err(Error::SingularSystem { size: d, rank: rank() }),
        }
    }
}

pub fn lstd_solve<T: Transition, F: FeatureMap>(samples: &[T], features: &F, gamma: f64, ridge: Ridge) -> Result<LstdSolution> {
    LstdSystem::from_samples(samples, features, gamma)?.solve(ridge)
}

/// Reward variance σ_R² and expected next-state feature covariance Σ_φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNoise", into = "RawNoise")]
pub struct NoiseModel {
    sigma_r_sq: f64,
    sigma_phi: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawNoise {
    sigma_r_sq: f64,
    sigma_phi: Vec<Vec<f64>>,
}

impl TryFrom<RawNoise> for NoiseModel {
    type Error = Error;

    fn try_from(raw: RawNoise) -> Result<Self> {
        let d = raw.sigma_phi.len();
        for row in &raw.sigma_phi {
            check_dim(d, row.len())?;
        }
        NoiseModel::new(raw.sigma_r_sq, DMatrix::from_fn(d, d, |i, j| raw.sigma_phi[i][j]))
    }
}

impl From<NoiseModel> for RawNoise {
    fn from(n: NoiseModel) -> Self {
        RawNoise {
            sigma_r_sq: n.sigma_r_sq,
            sigma_phi: n.sigma_phi.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

impl NoiseModel {
    pub fn new(sigma_r_sq: f64, sigma_phi: DMatrix<f64>) -> Result<Self> {
        if !(sigma_r_sq >= 0.0 && sigma_r_sq.is_finite()) {
            return Err(Error::param("sigma_r_sq", "must be nonnegative"));
        }
        check_dim(sigma_phi.nrows(), sigma_phi.ncols())?;
        let scale = sigma_phi.amax().max(1.0);
        let asym = (&sigma_phi - sigma_phi.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::param("sigma_phi", format!("not symmetric (max asymmetry {asym:e})")));
        }
        if sigma_phi.iter().any(|&x| x != 0.0) {
            let min_eigenvalue = SymmetricEigen::new(sigma_phi.clone()).eigenvalues.min();
            if min_eigenvalue < -1e-10 * scale {
                return Err(Error::NotPositiveSemidefinite { min_eigenvalue });
            }
        }
        Ok(Self { sigma_r_sq, sigma_phi })
    }

    /// Deterministic rewards and dynamics.
    pub fn zero(d: usize) -> Self {
        Self {
            sigma_r_sq: 0.0,
            sigma_phi: DMatrix::zeros(d, d),
        }
    }

    pub fn sigma_r_sq(&self) -> f64 {
        self.sigma_r_sq
    }

    pub fn sigma_phi(&self) -> &DMatrix<f64> {
        &self.sigma_phi
    }

    pub fn dim(&self) -> usize {
        self.sigma_phi.nrows()
    }

    fn quadratic_form(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        (v.transpose() * &self.sigma_phi * &v)[(0, 0)]
    }
}

/// Γ_π(V_θ) = σ_R² + γ²θᵀΣ_φθ.
pub fn variance_term_point(theta: &[f64], noise: &NoiseModel, gamma: f64) -> Result<f64> {
    check_dim(noise.dim(), theta.len())?;
    Ok(noise.sigma_r_sq + gamma * gamma * noise.quadratic_form(theta).max(0.0))
}

/// E_{θ~μ}[Γ_π(V_θ)] = σ_R² + γ²(mᵀΣ_φm + Σⱼ vⱼ Σ_φ[j,j]).
pub fn variance_term_expected(mu: &GaussianProductMeasure, noise: &NoiseModel, gamma: f64) -> Result<f64> {
    check_dim(noise.dim(), mu.dim())?;
    let trace_term: f64 = mu
        .variance()
        .iter()
        .enumerate()
        .map(|(j, v)| v * noise.sigma_phi[(j, j)])
        .sum();
    Ok(noise.sigma_r_sq + gamma * gamma * (noise.quadratic_form(mu.mean()).max(0.0) + trace_term))
}

/// Double-sampling estimate of σ_R² and Σ_φ.
///
/// Each probe state is resampled `pairs_per_state` times; the unbiased
/// sample covariance of φ(X′) and sample variance of R are averaged over
/// probe states.
pub fn estimate_sigma_phi<M: GenerativeModel + ?Sized, F: FeatureMap>(
    model: &M,
    features: &F,
    probe_states: &[Vec<f64>],
    pairs_per_state: usize,
    seed: u64,
) -> Result<NoiseModel> {
    if pairs_per_state < 2 {
        return Err(Error::param("pairs_per_state", "need at least 2 draws per state"));
    }
    if probe_states.is_empty() {
        return Err(Error::param("probe_states", "need at least one probe state"));
    }
    let d = features.dim();
    let k = pairs_per_state as f64;
    let per_state: Vec<Result<(DMatrix<f64>, f64)>> = probe_states
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = stream_rng(seed, i as u64);
            let rng: &mut dyn RngCore = &mut rng;
            let mut sum = DVector::<f64>::zeros(d);
            let mut outer = DMatrix::<f64>::zeros(d, d);
            let (mut r_sum, mut r_sq) = (0.0, 0.0);
            for _ in 0..pairs_per_state {
                let (next, r) = model
                    .draw(x, rng)
                    .ok_or_else(|| Error::GenerativeAccessUnavailable(x.clone()))?;
                let phi = features.features(&next);
                for (a, va) in phi.iter() {
                    sum[a] += va;
                    for (b, vb) in phi.iter() {
                        outer[(a, b)] += va * vb;
                    }
                }
                r_sum += r;
                r_sq += r * r;
            }
            let cov = (outer - (&sum * sum.transpose()) / k) / (k - 1.0);
            let r_var = ((r_sq - r_sum * r_sum / k) / (k - 1.0)).max(0.0);
            Ok((cov, r_var))
        })
        .collect();
    let mut sigma_phi = DMatrix::zeros(d, d);
    let mut sigma_r_sq = 0.0;
    for item in per_state {
        let (cov, r_var) = item?;
        sigma_phi += cov;
        sigma_r_sq += r_var;
    }
    let m = probe_states.len() as f64;
    sigma_phi /= m;
    let sigma_phi = (&sigma_phi + sigma_phi.transpose()) * 0.5;
    NoiseModel::new(sigma_r_sq / m, sigma_phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{collect_trajectories, MountainCarModel, MountainCarVariant, Policy, VariantTag};
    use crate::features::{TabularFeatures, TileCodingConfig};
    use crate::mixing::exact_value_finite_chain;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn small_dataset() -> ResidualDataset {
        let samples = vec![
            ChainTransition::new(0, 1.0, 1),
            ChainTransition::new(1, 0.5, 0),
            ChainTransition::new(1, 0.0, 1),
        ];
        build_residuals(&samples, &TabularFeatures { states: 2 }, 0.9).unwrap()
    }

    #[test]
    fn gamma_zero_gives_negative_features() {
        let samples = vec![ChainTransition::new(0, 1.0, 1), ChainTransition::new(2, 0.0, 0)];
        let res = build_residuals(&samples, &TabularFeatures { states: 3 }, 0.0).unwrap();
        assert_eq!(res.psi[0].to_dense(), vec![-1.0, 0.0, 0.0]);
        assert_eq!(res.psi[1].to_dense(), vec![0.0, 0.0, -1.0]);
    }

    #[test]
    fn self_loop_scales_features() {
        let res = build_residuals(&[ChainTransition::new(1, 0.0, 1)], &TabularFeatures { states: 2 }, 0.9).unwrap();
        let dense = res.psi[0].to_dense();
        assert_eq!(dense[0], 0.0);
        assert_abs_diff_eq!(dense[1], -0.1, epsilon = 1e-15);
    }

    #[test]
    fn empty_samples_rejected() {
        let none: Vec<ChainTransition> = vec![];
        assert!(matches!(
            build_residuals(&none, &TabularFeatures { states: 2 }, 0.9),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn mountain_car_residuals_are_sparse() {
        let v = MountainCarVariant::new(VariantTag::Original, 0.9).unwrap();
        let data = collect_trajectories(&v, &Policy::BangBang, 100, 5, 1).unwrap();
        let tiles = TileCodingConfig::mountain_car();
        let res = build_residuals(&data, &tiles, 0.9).unwrap();
        assert_eq!(res.len(), 500);
        for psi in &res.psi {
            assert!(psi.nnz() <= 8);
            assert!(psi.norm_sq().sqrt() <= 1.9 * 2.0 + 1e-12);
        }
    }

    #[test]
    fn empirical_error_by_brute_force() {
        let res = small_dataset();
        let theta = [0.3, -0.7];
        // (x, r, x′): (0, 1, 1), (1, 0.5, 0), (1, 0, 1); V = θ[x]
        let terms = [
            1.0 + 0.9 * theta[1] - theta[0],
            0.5 + 0.9 * theta[0] - theta[1],
            0.0 + 0.9 * theta[1] - theta[1],
        ];
        let oracle = terms.iter().map(|t| t * t).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(empirical_bellman_error(&theta, &res).unwrap(), oracle, epsilon = 1e-15);
        let zero = empirical_bellman_error(&[0.0, 0.0], &res).unwrap();
        assert_abs_diff_eq!(zero, (1.0 + 0.25) / 3.0, epsilon = 1e-15);
        assert!(empirical_bellman_error(&[0.0], &res).is_err());
    }

    #[test]
    fn zero_rewards_zero_theta() {
        let samples = vec![ChainTransition::new(0, 0.0, 1), ChainTransition::new(1, 0.0, 0)];
        let res = build_residuals(&samples, &TabularFeatures { states: 2 }, 0.9).unwrap();
        assert_eq!(empirical_bellman_error(&[0.0, 0.0], &res).unwrap(), 0.0);
        let sol = lstd_solve(&samples, &TabularFeatures { states: 2 }, 0.9, Ridge::Fixed(1e-3)).unwrap();
        assert_eq!(sol.theta, vec![0.0, 0.0]);
    }

    #[test]
    fn expected_error_hand_case() {
        let res = ResidualDataset {
            rewards: vec![1.0],
            psi: vec![SparseVec::ones(2, vec![0])],
            dim: 2,
            gamma: 0.9,
        };
        let mu = GaussianProductMeasure::isotropic(vec![0.0, 0.0], 0.01).unwrap();
        assert_abs_diff_eq!(expected_bellman_error(&mu, &res).unwrap(), 1.01, epsilon = 1e-15);
    }

    #[test]
    fn expected_error_degenerates_to_point() {
        let res = small_dataset();
        let mu = GaussianProductMeasure::isotropic(vec![0.4, 1.2], 1e-300).unwrap();
        assert_abs_diff_eq!(
            expected_bellman_error(&mu, &res).unwrap(),
            empirical_bellman_error(&[0.4, 1.2], &res).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn expected_error_matches_monte_carlo() {
        let res = small_dataset();
        let mu = GaussianProductMeasure::new(vec![0.4, -0.2], vec![0.3, 0.05]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            let theta: Vec<f64> = (0..2)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu.mean()[j] + mu.variance()[j].sqrt() * z
                })
                .collect();
            sum += empirical_bellman_error(&theta, &res).unwrap();
        }
        let mc = sum / draws as f64;
        let closed = expected_bellman_error(&mu, &res).unwrap();
        assert!((mc - closed).abs() / closed < 0.01, "mc {mc} closed {closed}");
    }

    #[test]
    fn empirical_error_is_convex() {
        let res = small_dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let a: Vec<f64> = (0..2).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..2).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let lhs = empirical_bellman_error(&mid, &res).unwrap();
            let rhs = 0.5 * (empirical_bellman_error(&a, &res).unwrap() + empirical_bellman_error(&b, &res).unwrap());
            assert!(lhs <= rhs + 1e-12);
        }
    }

    fn two_state_chain() -> FiniteChain {
        FiniteChain::two_state(0.3, 0.6, [1.0, 0.2], 0.9).unwrap()
    }

    #[test]
    fn exact_lstd_recovers_value() {
        let chain = two_state_chain();
        let w = chain.stationary_distribution().unwrap();
        let sys = LstdSystem::from_finite_chain(&chain, &w, &TabularFeatures { states: 2 }).unwrap();
        let sol = sys.solve(Ridge::Fixed(0.0)).unwrap();
        let v = exact_value_finite_chain(&chain).unwrap();
        for (a, b) in sol.theta.iter().zip(&v) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn duplicated_samples_leave_lstd_unchanged() {
        let chain = two_state_chain();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut samples = Vec::new();
        let mut s = 0;
        for _ in 0..200 {
            let next = chain.sample_next(s, &mut rng);
            samples.push(ChainTransition::new(s, chain.rewards()[s], next));
            s = next;
        }
        let f = TabularFeatures { states: 2 };
        let once = lstd_solve(&samples, &f, 0.9, Ridge::Fixed(0.0)).unwrap();
        let doubled: Vec<_> = samples.iter().chain(samples.iter()).copied().collect();
        let twice = lstd_solve(&doubled, &f, 0.9, Ridge::Fixed(0.0)).unwrap();
        for (a, b) in once.theta.iter().zip(&twice.theta) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn singular_system_reports_rank() {
        // state 2 never visited
        let samples = vec![ChainTransition::new(0, 1.0, 1), ChainTransition::new(1, 0.0, 0)];
        let err = lstd_solve(&samples, &TabularFeatures { states: 3 }, 0.9, Ridge::Fixed(0.0)).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { size: 3, rank: 2 }), "{err:?}");
        let sol = lstd_solve(&samples, &TabularFeatures { states: 3 }, 0.9, Ridge::Auto).unwrap();
        assert!(sol.ridge > 0.0);
        assert_eq!(sol.theta[2], 0.0);
    }

    #[test]
    fn variance_point_cases() {
        let zero = NoiseModel::zero(2);
        assert_eq!(variance_term_point(&[3.0, 4.0], &zero, 0.9).unwrap(), 0.0);
        let reward_only = NoiseModel::new(0.04, DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(variance_term_point(&[3.0, 4.0], &reward_only, 0.9).unwrap(), 0.04);
        let ident = NoiseModel::new(0.0, DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(variance_term_point(&[1.0, 1.0], &ident, 0.8).unwrap(), 1.28, epsilon = 1e-14);
    }

    #[test]
    fn non_psd_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(NoiseModel::new(0.0, m), Err(Error::NotPositiveSemidefinite { .. })));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(NoiseModel::new(0.0, asym).is_err());
        assert!(NoiseModel::new(-1.0, DMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn noise_json_round_trip() {
        let m = NoiseModel::new(0.5, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"sigma_r_sq":0.5,"sigma_phi":[[2.0,1.0],[1.0,2.0]]}"#);
        assert_eq!(serde_json::from_str::<NoiseModel>(&s).unwrap(), m);
    }

    #[test]
    fn variance_expected_cases() {
        let noise = NoiseModel::new(0.1, DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3])).unwrap();
        let tiny = GaussianProductMeasure::isotropic(vec![1.0, -2.0], 1e-300).unwrap();
        assert_abs_diff_eq!(
            variance_term_expected(&tiny, &noise, 0.9).unwrap(),
            variance_term_point(&[1.0, -2.0], &noise, 0.9).unwrap(),
            epsilon = 1e-12
        );
        let reward_only = NoiseModel::new(0.3, DMatrix::zeros(2, 2)).unwrap();
        let wide = GaussianProductMeasure::isotropic(vec![5.0, 5.0], 10.0).unwrap();
        assert_eq!(variance_term_expected(&wide, &reward_only, 0.9).unwrap(), 0.3);

        let mu = GaussianProductMeasure::new(vec![1.0, -2.0], vec![0.4, 0.2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 100_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            let theta: Vec<f64> = (0..2)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu.mean()[j] + mu.variance()[j].sqrt() * z
                })
                .collect();
            sum += variance_term_point(&theta, &noise, 0.9).unwrap();
        }
        let closed = variance_term_expected(&mu, &noise, 0.9).unwrap();
        assert!((sum / draws as f64 - closed).abs() / closed < 0.01);
    }

    #[test]
    fn deterministic_dynamics_give_zero_noise() {
        let model = MountainCarModel {
            variant: MountainCarVariant::new(VariantTag::Original, 0.9).unwrap(),
            policy: Policy::BangBang,
        };
        let tiles = TileCodingConfig::mountain_car();
        let probes = vec![vec![-0.5, 0.0], vec![0.2, 0.03], vec![-1.0, -0.05]];
        let noise = estimate_sigma_phi(&model, &tiles, &probes, 5, 1).unwrap();
        assert_eq!(noise.sigma_r_sq(), 0.0);
        assert!(noise.sigma_phi().iter().all(|&x| x == 0.0));
        assert!(estimate_sigma_phi(&model, &tiles, &probes, 1, 1).is_err());
    }

    #[test]
    fn stochastic_chain_covariance_estimate() {
        let chain = FiniteChain::two_state(0.7, 0.6, [0.0, 1.0], 0.9).unwrap();
        let f = TabularFeatures { states: 2 };
        let probes = vec![vec![0.0], vec![1.0]];
        let est = estimate_sigma_phi(&chain, &f, &probes, 10_000, 6).unwrap();
        // Cov[e_{X′}|x] = diag(p) − ppᵀ; rows (0.3, 0.7) and (0.6, 0.4).
        let exact = |p: [f64; 2]| DMatrix::from_fn(2, 2, |i, j| if i == j { p[i] * (1.0 - p[i]) } else { -p[i] * p[j] });
        let truth = (exact([0.3, 0.7]) + exact([0.6, 0.4])) * 0.5;
        let rel = (est.sigma_phi() - &truth).norm() / truth.norm();
        assert!(rel < 0.05, "relative error {rel}");
        assert_eq!(est.sigma_r_sq(), 0.0);
    }

    struct ReplayOnly;

    impl GenerativeModel for ReplayOnly {
        fn draw(&self, _state: &[f64], _rng: &mut dyn RngCore) -> Option<(Vec<f64>, f64)> {
            None
        }
    }

    #[test]
    fn missing_generative_access() {
        let err = estimate_sigma_phi(&ReplayOnly, &TabularFeatures { states: 2 }, &[vec![0.0]], 3, 0).unwrap_err();
        assert!(matches!(err, Error::GenerativeAccessUnavailable(_)));
    }

    #[test]
    fn residual_decomposition_on_stochastic_chain() {
        // R(V) − Γ_π(V) = ‖B^πV − V‖²_ρ with rewards a function of the state.
        let chain = FiniteChain::two_state(0.3, 0.6, [1.0, 0.2], 0.9).unwrap();
        let rho = chain.stationary_distribution().unwrap();
        let v = [2.0, -1.0];
        let g = chain.gamma();
        let p = chain.transition();
        let backup = |x: usize| chain.rewards()[x] + g * (p[(x, 0)] * v[0] + p[(x, 1)] * v[1]);
        let bellman_gap: f64 = (0..2).map(|x| rho[x] * (backup(x) - v[x]).powi(2)).sum();

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut samples = Vec::new();
        for _ in 0..400_000 {
            let x = if rng.random::<f64>() < rho[0] { 0 } else { 1 };
            samples.push(ChainTransition::new(x, chain.rewards()[x], chain.sample_next(x, &mut rng)));
        }
        let f = TabularFeatures { states: 2 };
        let res = build_residuals(&samples, &f, g).unwrap();
        let r_n = empirical_bellman_error(&v, &res).unwrap();
        let sigma_phi = {
            let cov = |x: usize| {
                let q = [p[(x, 0)], p[(x, 1)]];
                DMatrix::from_fn(2, 2, |i, j| if i == j { q[i] * (1.0 - q[i]) } else { -q[i] * q[j] })
            };
            cov(0) * rho[0] + cov(1) * rho[1]
        };
        let noise = NoiseModel::new(0.0, sigma_phi).unwrap();
        let gamma_pi = variance_term_point(&v, &noise, g).unwrap();
        assert!((r_n - gamma_pi - bellman_gap).abs() < 0.02 * r_n, "{r_n} {gamma_pi} {bellman_gap}");
    }
}
