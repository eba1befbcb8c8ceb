//! Dependence structure of Markov samples.
//!
//! For a chain X₁..Xₙ the upper-triangular matrix Γₙ has unit diagonal and
//! entries γᵢⱼ = √(sup_{x,y} TV(P^{j−i}(·|x), P^{j−i}(·|y))). Its squared
//! operator norm τ scales the effective sample size to n/τ in the
//! concentration inequality checked by [`verify_concentration`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::GenerativeModel;
use crate::error::{check_dim, Error, Result};
use crate::rng::stream_rng;

const STOCHASTIC_TOL: f64 = 1e-12;
const NORM_REL_TOL: f64 = 1e-9;

/// Row-stochastic chain with per-state rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChain", into = "RawChain")]
pub struct FiniteChain {
    transition: DMatrix<f64>,
    rewards: Vec<f64>,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawChain {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    r: Vec<f64>,
    gamma: f64,
}

impl TryFrom<RawChain> for FiniteChain {
    type Error = Error;

    fn try_from(raw: RawChain) -> Result<Self> {
        FiniteChain::new(raw.p, raw.r, raw.gamma)
    }
}

impl From<FiniteChain> for RawChain {
    fn from(c: FiniteChain) -> Self {
        RawChain {
            p: c.transition.row_iter().map(|r| r.iter().copied().collect()).collect(),
            r: c.rewards,
            gamma: c.gamma,
        }
    }
}

impl FiniteChain {
    pub fn new(p: Vec<Vec<f64>>, rewards: Vec<f64>, gamma: f64) -> Result<Self> {
        let s = p.len();
        if s == 0 {
            return Err(Error::InvalidChain("P: empty transition matrix".into()));
        }
        for (i, row) in p.iter().enumerate() {
            if row.len() != s {
                return Err(Error::InvalidChain(format!("P: row {i} has {} entries, expected {s}", row.len())));
            }
            if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidChain(format!("P: row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL * s as f64 {
                return Err(Error::InvalidChain(format!("P: row {i} sums to {sum}, expected 1")));
            }
        }
        if rewards.len() != s {
            return Err(Error::InvalidChain(format!("r: has {} entries, expected {s}", rewards.len())));
        }
        if rewards.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidChain("r: non-finite entry".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidChain(format!("gamma: {gamma} is outside [0, 1)")));
        }
        let transition = DMatrix::from_fn(s, s, |i, j| p[i][j]);
        Ok(Self {
            transition,
            rewards,
            gamma,
        })
    }

    /// P = [[1−p, p], [q, 1−q]]; second eigenvalue 1 − p − q.
    pub fn two_state(p: f64, q: f64, rewards: [f64; 2], gamma: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - p, p], vec![q, 1.0 - q]], rewards.to_vec(), gamma)
    }

    pub fn states(&self) -> usize {
        self.rewards.len()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward_max(&self) -> f64 {
        self.rewards.iter().cloned().fold(0.0, f64::max)
    }

    /// Draws the successor of `state` by inverse-CDF sampling of its row.
    pub fn sample_next<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let s = self.states();
        for j in 0..s {
            acc += self.transition[(state, j)];
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding slack of the row sum
        (0..s).rev().find(|&j| self.transition[(state, j)] > 0.0).unwrap_or(s - 1)
    }

    fn check_irreducible(&self) -> Result<()> {
        let s = self.states();
        for from in 0..s {
            let mut seen = vec![false; s];
            let mut stack = vec![from];
            seen[from] = true;
            while let Some(i) = stack.pop() {
                for (j, flag) in seen.iter_mut().enumerate() {
                    if !*flag && self.transition[(i, j)] > 0.0 {
                        *flag = true;
                        stack.push(j);
                    }
                }
            }
            if let Some(to) = seen.iter().position(|&v| !v) {
                return Err(Error::NotIrreducible { from, to });
            }
        }
        Ok(())
    }

    /// Unique stationary distribution (left eigenvector for eigenvalue 1).
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        self.check_irreducible()?;
        let s = self.states();
        // (Pᵀ − I)π = 0 with the last equation replaced by Σπ = 1.
        let mut a = self.transition.transpose() - DMatrix::identity(s, s);
        for j in 0..s {
            a[(s - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(s);
        b[s - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::InvalidChain("stationary system is singular".into()))?;
        Ok(pi.iter().map(|&x| x.max(0.0)).collect())
    }
}

impl GenerativeModel for FiniteChain {
    fn draw(&self, state: &[f64], rng: &mut dyn RngCore) -> Option<(Vec<f64>, f64)> {
        let s = state[0] as usize;
        let next = self.sample_next(s, rng);
        Some((vec![next as f64], self.rewards[s]))
    }
}

/// Γₙ for a time-homogeneous chain, stored by lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingProfile {
    pub n: usize,
    /// γ at lag k = j − i, for k = 0..n; lag 0 is the unit diagonal.
    pub lag_coefficients: Vec<f64>,
    pub operator_norm: f64,
    pub tau: f64,
}

impl MixingProfile {
    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        toeplitz_upper(&self.lag_coefficients)
    }
}

fn toeplitz_upper(lags: &[f64]) -> DMatrix<f64> {
    let n = lags.len();
    DMatrix::from_fn(n, n, |i, j| if j >= i { lags[j - i] } else { 0.0 })
}

/// Total variation distance, ½‖p − q‖₁.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn max_row_tv(m: &DMatrix<f64>) -> f64 {
    let s = m.nrows();
    let mut best: f64 = 0.0;
    for x in 0..s {
        for y in x + 1..s {
            let tv = 0.5 * (0..s).map(|k| (m[(x, k)] - m[(y, k)]).abs()).sum::<f64>();
            best = best.max(tv);
        }
    }
    best.min(1.0)
}

/// Largest singular value by power iteration on MᵀM from the all-ones vector.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    let cols = m.ncols();
    if cols == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(cols, 1.0 / (cols as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..100_000 {
        let w = m.tr_mul(&(m * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = w / norm;
        if (next - estimate).abs() <= NORM_REL_TOL * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

pub fn gamma_matrix(chain: &FiniteChain, n: usize) -> Result<MixingProfile> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let mut lags = Vec::with_capacity(n);
    lags.push(1.0);
    let mut power = chain.transition.clone();
    for k in 1..n {
        lags.push(max_row_tv(&power).sqrt());
        if k + 1 < n {
            power = &power * &chain.transition;
        }
    }
    let operator_norm = operator_norm(&toeplitz_upper(&lags)).max(1.0);
    Ok(MixingProfile {
        n,
        lag_coefficients: lags,
        operator_norm,
        tau: operator_norm * operator_norm,
    })
}

/// ‖Γₙ‖ ≤ √2 / (1 − ρ^{1/(2r)}) with ρ = 1 − `coupling_mass`, for chains whose
/// r-step kernel dominates a measure of mass `coupling_mass`.
pub fn uniform_ergodicity_norm_bound(coupling_mass: f64, r: usize) -> Result<f64> {
    if !(coupling_mass > 0.0 && coupling_mass <= 1.0) {
        return Err(Error::param("coupling_mass", format!("{coupling_mass} is outside (0, 1]")));
    }
    if r == 0 {
        return Err(Error::param("r", "must be at least 1"));
    }
    let rho = 1.0 - coupling_mass;
    Ok(std::f64::consts::SQRT_2 / (1.0 - rho.powf(1.0 / (2.0 * r as f64))))
}

/// Crude forgetting-time bound h² for independent trajectories of length h.
pub fn trajectory_tau_bound(h: usize) -> Result<f64> {
    if h == 0 {
        return Err(Error::param("trajectory_length", "must be at least 1"));
    }
    Ok((h * h) as f64)
}

/// ‖U_h‖² for the h×h all-ones upper-triangular block.
///
/// Γₙ of independent length-h trajectories is block diagonal with blocks
/// entrywise dominated by U_h, so this is a valid (and tighter) τ.
pub fn trajectory_block_tau(h: usize) -> Result<f64> {
    if h == 0 {
        return Err(Error::param("trajectory_length", "must be at least 1"));
    }
    let norm = operator_norm(&toeplitz_upper(&vec![1.0; h]));
    Ok(norm * norm)
}

/// Solves (I − γP)V = r.
pub fn exact_value_finite_chain(chain: &FiniteChain) -> Result<Vec<f64>> {
    let s = chain.states();
    let a = DMatrix::identity(s, s) - chain.transition.scale(chain.gamma);
    let b = DVector::from_column_slice(&chain.rewards);
    let v = a.lu().solve(&b).ok_or(Error::SingularSystem { size: s, rank: 0 })?;
    Ok(v.iter().copied().collect())
}

/// Outcome of simulating Z = (1/n)Σ f(Xᵢ) from stationarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub range_bound: f64,
    pub expected_z: f64,
    pub gamma_norm: f64,
    pub upper_tail_frequency: f64,
    pub lower_tail_frequency: f64,
    pub upper_tail_bound: f64,
    pub lower_tail_bound: f64,
}

impl ConcentrationReport {
    /// Both frequencies within their bounds plus 3·√(bound/trials).
    pub fn holds(&self) -> bool {
        let slack = |b: f64| 3.0 * (b / self.trials as f64).sqrt();
        self.upper_tail_frequency <= self.upper_tail_bound + slack(self.upper_tail_bound)
            && self.lower_tail_frequency <= self.lower_tail_bound + slack(self.lower_tail_bound)
    }
}

/// exp(−num/den) with the 0/0 and x/0 limits taken as 1 and 0.
fn exp_tail(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        1.0
    } else if den <= 0.0 {
        0.0
    } else {
        (-num / den).exp()
    }
}

/// Compares empirical tail frequencies of Z − E[Z] against the two
/// Bernstein-type bounds that use ‖Γₙ‖².
pub fn verify_concentration(
    chain: &FiniteChain,
    f: &[f64],
    range_bound: f64,
    n: usize,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    check_dim(chain.states(), f.len())?;
    if trials < 100 {
        return Err(Error::param("trials", "must be at least 100"));
    }
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::param("epsilon", "must be nonnegative"));
    }
    if f.iter().any(|&v| !(0.0..=range_bound).contains(&v)) {
        return Err(Error::param("f", format!("values must lie in [0, {range_bound}]")));
    }
    let pi = chain.stationary_distribution()?;
    let expected_z: f64 = pi.iter().zip(f).map(|(p, v)| p * v).sum();
    let profile = gamma_matrix(chain, n)?;

    let deviations: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let mut state = sample_from(&pi, &mut rng);
            let mut total = 0.0;
            for i in 0..n {
                total += f[state];
                if i + 1 < n {
                    state = chain.sample_next(state, &mut rng);
                }
            }
            total / n as f64 - expected_z
        })
        .collect();

    let upper = deviations.iter().filter(|&&d| d >= epsilon).count();
    let lower = deviations.iter().filter(|&&d| -d >= epsilon).count();
    let scale = 2.0 * range_bound * profile.tau;
    let numerator = epsilon * epsilon * n as f64;
    Ok(ConcentrationReport {
        n,
        epsilon,
        trials,
        range_bound,
        expected_z,
        gamma_norm: profile.operator_norm,
        upper_tail_frequency: upper as f64 / trials as f64,
        lower_tail_frequency: lower as f64 / trials as f64,
        upper_tail_bound: exp_tail(numerator, scale * (expected_z + epsilon)),
        lower_tail_bound: exp_tail(numerator, scale * expected_z),
    })
}

fn sample_from<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(p.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity_chain(s: usize) -> FiniteChain {
        let p = (0..s).map(|i| (0..s).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        FiniteChain::new(p, vec![0.0; s], 0.9).unwrap()
    }

    #[test]
    fn one_step_coupling_gives_identity() {
        let chain = FiniteChain::two_state(0.5, 0.5, [0.0, 1.0], 0.9).unwrap();
        let prof = gamma_matrix(&chain, 30).unwrap();
        assert!(prof.lag_coefficients[1..].iter().all(|&g| g == 0.0));
        assert_abs_diff_eq!(prof.operator_norm, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prof.tau, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_chain_norm_grows() {
        let chain = identity_chain(3);
        for n in [5usize, 20, 80] {
            let prof = gamma_matrix(&chain, n).unwrap();
            assert!(prof.lag_coefficients.iter().all(|&g| g == 1.0));
            assert!(prof.operator_norm >= n as f64 / 2.0, "n = {n}: {}", prof.operator_norm);
        }
    }

    #[test]
    fn two_state_lags_follow_second_eigenvalue() {
        for &(p, q) in &[(0.2, 0.3), (0.7, 0.6), (0.1, 0.05)] {
            let chain = FiniteChain::two_state(p, q, [0.0, 1.0], 0.9).unwrap();
            let prof = gamma_matrix(&chain, 12).unwrap();
            let lambda2: f64 = 1.0 - p - q;
            // Independent check by direct matrix powers.
            let mut power = chain.transition().clone();
            for k in 1..12 {
                let tv = total_variation(
                    &power.row(0).iter().copied().collect::<Vec<_>>(),
                    &power.row(1).iter().copied().collect::<Vec<_>>(),
                );
                assert_abs_diff_eq!(tv, lambda2.abs().powi(k as i32), epsilon = 1e-12);
                assert_abs_diff_eq!(prof.lag_coefficients[k].powi(2), tv, epsilon = 1e-12);
                power = &power * chain.transition();
            }
            // monotone in lag, constant along diagonals
            assert!(prof.lag_coefficients.windows(2).all(|w| w[1] <= w[0]));
            let g = prof.gamma_matrix();
            for i in 0..11 {
                assert_eq!(g[(i, i + 1)], g[(0, 1)]);
                assert_eq!(g[(i, i)], 1.0);
            }
        }
    }

    #[test]
    fn uniform_ergodicity_bound_values() {
        assert_abs_diff_eq!(uniform_ergodicity_norm_bound(1.0, 1).unwrap(), std::f64::consts::SQRT_2, epsilon = 1e-15);
        let hand = std::f64::consts::SQRT_2 / (1.0 - 0.7f64.sqrt());
        assert_abs_diff_eq!(uniform_ergodicity_norm_bound(0.3, 1).unwrap(), hand, epsilon = 1e-12);
        assert_abs_diff_eq!(hand, 8.658, epsilon = 1e-3);
        assert!(uniform_ergodicity_norm_bound(0.0, 1).is_err());
        assert!(uniform_ergodicity_norm_bound(1.1, 1).is_err());
        assert!(uniform_ergodicity_norm_bound(0.5, 0).is_err());
    }

    #[test]
    fn uniform_ergodicity_bound_dominates_minorized_chains() {
        // P = m·1νᵀ + (1 − m)·Q, so P(A|x) ≥ m·ν(A).
        let nu = [0.2, 0.5, 0.3];
        let q = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        for &m in &[0.1, 0.3, 0.6, 1.0] {
            let p = (0..3)
                .map(|i| (0..3).map(|j| m * nu[j] + (1.0 - m) * q[i][j]).collect())
                .collect();
            let chain = FiniteChain::new(p, vec![0.0; 3], 0.9).unwrap();
            let bound = uniform_ergodicity_norm_bound(m, 1).unwrap();
            for n in [1usize, 10, 50, 200] {
                let prof = gamma_matrix(&chain, n).unwrap();
                assert!(prof.operator_norm <= bound, "m={m} n={n}: {} > {bound}", prof.operator_norm);
            }
        }
    }

    #[test]
    fn trajectory_bounds() {
        assert_eq!(trajectory_tau_bound(1).unwrap(), 1.0);
        assert_eq!(trajectory_tau_bound(5).unwrap(), 25.0);
        assert_abs_diff_eq!(trajectory_block_tau(1).unwrap(), 1.0, epsilon = 1e-12);
        // σ_max of the 5×5 all-ones upper-triangular matrix is 1/(2 sin(π/22)).
        let exact = 1.0 / (2.0 * (std::f64::consts::PI / 22.0).sin());
        assert_abs_diff_eq!(exact, 3.5133, epsilon = 1e-4);
        assert_abs_diff_eq!(trajectory_block_tau(5).unwrap(), exact * exact, epsilon = 1e-7);
        assert!(trajectory_block_tau(5).unwrap() <= 25.0);
        assert!(trajectory_tau_bound(0).is_err());
    }

    #[test]
    fn block_arrangement_never_exceeds_single_block() {
        // Γ for three independent length-4 trajectories of an identity chain.
        let h = 4;
        let mut g = DMatrix::zeros(3 * h, 3 * h);
        for b in 0..3 {
            for i in 0..h {
                for j in i..h {
                    g[(b * h + i, b * h + j)] = 1.0;
                }
            }
        }
        let norm = operator_norm(&g);
        assert!(norm * norm <= trajectory_block_tau(h).unwrap() + 1e-9);
    }

    #[test]
    fn exact_values() {
        let zero = FiniteChain::two_state(0.3, 0.4, [0.0, 0.0], 0.9).unwrap();
        assert_eq!(exact_value_finite_chain(&zero).unwrap(), vec![0.0, 0.0]);
        let single = FiniteChain::new(vec![vec![1.0]], vec![1.0], 0.9).unwrap();
        assert_abs_diff_eq!(exact_value_finite_chain(&single).unwrap()[0], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_value_is_bellman_fixed_point() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p: Vec<Vec<f64>> = (0..5)
                .map(|_| {
                    let row: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
                    let s: f64 = row.iter().sum();
                    row.into_iter().map(|x| x / s).collect()
                })
                .collect();
            let r: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            let chain = FiniteChain::new(p.clone(), r.clone(), 0.95).unwrap();
            let v = exact_value_finite_chain(&chain).unwrap();
            for i in 0..5 {
                let backup = r[i] + 0.95 * (0..5).map(|j| p[i][j] * v[j]).sum::<f64>();
                assert!((backup - v[i]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn chain_validation_names_fields() {
        let err = FiniteChain::new(vec![vec![0.5, 0.6], vec![0.5, 0.5]], vec![0.0, 0.0], 0.9).unwrap_err();
        assert!(err.to_string().contains("row 0"));
        let err = FiniteChain::new(vec![vec![1.0]], vec![0.0, 1.0], 0.9).unwrap_err();
        assert!(err.to_string().contains("r:"));
        let err = FiniteChain::new(vec![vec![1.0]], vec![0.0], 1.0).unwrap_err();
        assert!(err.to_string().contains("gamma"));
        let json = r#"{"P": [[0.5, 0.5], [0.2, 0.8]], "r": [0.0, 1.0], "gamma": 0.9}"#;
        let chain: FiniteChain = serde_json::from_str(json).unwrap();
        assert_eq!(chain.states(), 2);
        assert!(serde_json::from_str::<FiniteChain>(r#"{"P": [[0.5, 0.5]], "r": [0.0], "gamma": 0.9}"#).is_err());
    }

    #[test]
    fn stationary_distribution_two_state() {
        let chain = FiniteChain::two_state(0.2, 0.3, [0.0, 1.0], 0.9).unwrap();
        let pi = chain.stationary_distribution().unwrap();
        assert_abs_diff_eq!(pi[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 0.4, epsilon = 1e-12);
        let reducible = identity_chain(2);
        assert!(matches!(reducible.stationary_distribution(), Err(Error::NotIrreducible { .. })));
    }

    #[test]
    fn concentration_edge_cases() {
        let chain = FiniteChain::two_state(0.2, 0.3, [0.0, 1.0], 0.9).unwrap();
        let constant = verify_concentration(&chain, &[0.5, 0.5], 1.0, 20, 0.1, 200, 1).unwrap();
        assert_eq!(constant.upper_tail_frequency, 0.0);
        assert_eq!(constant.lower_tail_frequency, 0.0);
        assert!(constant.upper_tail_bound >= 0.0);
        let zero_eps = verify_concentration(&chain, &[0.0, 1.0], 1.0, 20, 0.0, 200, 1).unwrap();
        assert_eq!(zero_eps.upper_tail_bound, 1.0);
        assert!(zero_eps.holds());
        assert!(verify_concentration(&chain, &[0.0, 1.0], 1.0, 20, 0.1, 99, 1).is_err());
        assert!(verify_concentration(&identity_chain(2), &[0.0, 1.0], 1.0, 20, 0.1, 100, 1).is_err());
        assert!(verify_concentration(&chain, &[0.0, 2.0], 1.0, 20, 0.1, 100, 1).is_err());
    }

    #[test]
    fn concentration_bounds_hold_on_mixing_chain() {
        let chain = FiniteChain::two_state(0.3, 0.2, [0.0, 1.0], 0.9).unwrap();
        for &(n, eps) in &[(20usize, 0.1), (50, 0.2), (100, 0.05)] {
            let rep = verify_concentration(&chain, &[0.0, 1.0], 1.0, n, eps, 1000, 42).unwrap();
            assert!(rep.holds(), "{rep:?}");
        }
    }

    fn random_chain(weights: &[f64], s: usize) -> FiniteChain {
        let p = weights
            .chunks(s)
            .map(|row| {
                let total: f64 = row.iter().sum();
                row.iter().map(|w| w / total).collect()
            })
            .collect();
        FiniteChain::new(p, vec![0.0; s], 0.9).unwrap()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn gamma_matrix_is_toeplitz_with_norm_at_least_one(
            weights in proptest::collection::vec(0.05f64..1.0, 9),
            n in 2usize..24,
        ) {
            let chain = random_chain(&weights, 3);
            let prof = gamma_matrix(&chain, n).unwrap();
            let g = prof.gamma_matrix();
            for i in 0..n {
                proptest::prop_assert_eq!(g[(i, i)], 1.0);
                for j in 0..i {
                    proptest::prop_assert_eq!(g[(i, j)], 0.0);
                }
                for j in i..n {
                    proptest::prop_assert_eq!(g[(i, j)], g[(0, j - i)]);
                }
            }
            proptest::prop_assert!(prof.operator_norm >= 1.0 - 1e-12);
            proptest::prop_assert!((prof.tau - prof.operator_norm.powi(2)).abs() < 1e-9 * prof.tau);
        }

        #[test]
        fn concentration_bounds_hold_on_random_chains(
            weights in proptest::collection::vec(0.05f64..1.0, 9),
            f in proptest::collection::vec(0.0f64..1.0, 3),
            n in 5usize..60,
            eps in 0.02f64..0.4,
            seed in 0u64..1000,
        ) {
            let chain = random_chain(&weights, 3);
            let rep = verify_concentration(&chain, &f, 1.0, n, eps, 1000, seed).unwrap();
            proptest::prop_assert!(rep.holds(), "{:?}", rep);
        }
    }
}
