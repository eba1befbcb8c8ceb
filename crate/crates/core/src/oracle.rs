//! Ground truth for scoring estimates: rollout values of the evaluation
//! policy and the closed-form posterior-averaged error.

use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{collect_trajectories, GenerativeModel, MountainCarModel, MountainCarVariant, Policy, State};
use crate::error::{check_dim, Error, Result};
use crate::features::FeatureMap;
use crate::measure::GaussianProductMeasure;
use crate::rng::stream_rng;

pub const GROUND_TRUTH_FORMAT: u32 = 1;

/// Smallest horizon H with γ^H · R_max / (1 − γ) ≤ `tolerance`.
pub fn horizon_for_tolerance(gamma: f64, r_max: f64, tolerance: f64) -> usize {
    if r_max <= 0.0 || gamma == 0.0 {
        return 1;
    }
    let h = (tolerance * (1.0 - gamma) / r_max).ln() / gamma.ln();
    (h.ceil() as usize).max(1)
}

/// Average truncated discounted return over `rollouts` runs from `state`.
pub fn estimate_value<M: GenerativeModel + ?Sized>(
    model: &M,
    gamma: f64,
    state: &[f64],
    horizon: usize,
    rollouts: usize,
    seed: u64,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::param("horizon", "must be at least 1"));
    }
    if rollouts == 0 {
        return Err(Error::param("rollouts", "must be at least 1"));
    }
    let mut total = 0.0;
    for k in 0..rollouts {
        let mut rng = stream_rng(seed, k as u64);
        let rng: &mut dyn RngCore = &mut rng;
        let mut x = state.to_vec();
        let mut discount = 1.0;
        for _ in 0..horizon {
            let (next, r) = model
                .draw(&x, rng)
                .ok_or_else(|| Error::GenerativeAccessUnavailable(x.clone()))?;
            total += discount * r;
            discount *= gamma;
            x = next;
        }
    }
    Ok(total / rollouts as f64)
}

/// V^π(state) for a Mountain Car variant by truncated rollouts.
pub fn estimate_v_pi(
    variant: &MountainCarVariant,
    policy: &Policy,
    state: State,
    horizon: usize,
    rollouts: usize,
    seed: u64,
) -> Result<f64> {
    let model = MountainCarModel {
        variant: *variant,
        policy: policy.clone(),
    };
    estimate_value(&model, variant.gamma, &state, horizon, rollouts, seed)
}

/// V^π on a held-out set of states standing in for ρ^π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format: u32,
    pub variant: MountainCarVariant,
    pub seed: u64,
    pub eval_states: Vec<State>,
    pub v_pi: Vec<f64>,
    pub rollout_horizon: usize,
    pub rollouts_per_state: usize,
}

impl GroundTruth {
    /// Evaluation states come from the same uniform-restart rollouts used for
    /// training data: `trajectories` × `length` visited states.
    pub fn build(
        variant: &MountainCarVariant,
        policy: &Policy,
        trajectories: usize,
        length: usize,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        let samples = collect_trajectories(variant, policy, trajectories, length, seed)?;
        let eval_states: Vec<State> = samples.iter().map(|s| s.state).collect();
        // Mountain Car is deterministic: one rollout per state is exact.
        let rollouts_per_state = 1;
        let v_pi = eval_states
            .par_iter()
            .map(|&x| estimate_v_pi(variant, policy, x, horizon, rollouts_per_state, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            format: GROUND_TRUTH_FORMAT,
            variant: *variant,
            seed,
            eval_states,
            v_pi,
            rollout_horizon: horizon,
            rollouts_per_state,
        })
    }

    /// Reuses a cached file keyed by (variant, policy, horizon, seed, size)
    /// under `cache_dir`, building and storing it on a miss.
    pub fn load_or_build(
        cache_dir: &Path,
        variant: &MountainCarVariant,
        policy: &Policy,
        trajectories: usize,
        length: usize,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        let path = cache_path(cache_dir, variant, policy, trajectories * length, horizon, seed)?;
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(gt) = serde_json::from_str::<GroundTruth>(&text) {
                if gt.format == GROUND_TRUTH_FORMAT && gt.variant == *variant && gt.seed == seed {
                    return Ok(gt);
                }
            }
        }
        let gt = Self::build(variant, policy, trajectories, length, horizon, seed)?;
        std::fs::create_dir_all(cache_dir)?;
        std::fs::write(&path, serde_json::to_string(&gt)?)?;
        Ok(gt)
    }

    pub fn len(&self) -> usize {
        self.eval_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eval_states.is_empty()
    }
}

fn cache_path(dir: &Path, variant: &MountainCarVariant, policy: &Policy, states: usize, horizon: usize, seed: u64) -> Result<PathBuf> {
    let policy_key = match policy {
        Policy::BangBang => "bang_bang".to_string(),
        Policy::Greedy(_) => format!("greedy-{}", &crate::experiment::sha256_hex(&serde_json::to_vec(policy)?)[..12]),
    };
    Ok(dir.join(format!(
        "ground_truth_v{GROUND_TRUTH_FORMAT}_{}_g{}_{policy_key}_h{horizon}_n{states}_s{seed}.json",
        variant.tag, variant.gamma
    )))
}

/// ∫ ‖V_θ − V^π‖² dμ(θ) over the evaluation states, in closed form:
/// mean of (φᵀm − V^π)² + Σⱼ vⱼφⱼ².
pub fn true_error_under_mu<F: FeatureMap>(mu: &GaussianProductMeasure, truth: &GroundTruth, features: &F) -> Result<f64> {
    check_dim(features.dim(), mu.dim())?;
    if truth.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = truth
        .eval_states
        .iter()
        .zip(&truth.v_pi)
        .map(|(x, v)| {
            let phi = features.features(x);
            (phi.dot(mu.mean()) - v).powi(2) + phi.weighted_norm_sq(mu.variance())
        })
        .sum();
    Ok(total / truth.len() as f64)
}

/// ‖V̄_μ − V^π‖² for the mean parameter alone.
pub fn mean_function_error<F: FeatureMap>(mean: &[f64], truth: &GroundTruth, features: &F) -> Result<f64> {
    check_dim(features.dim(), mean.len())?;
    if truth.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = truth
        .eval_states
        .iter()
        .zip(&truth.v_pi)
        .map(|(x, v)| (features.features(x).dot(mean) - v).powi(2))
        .sum();
    Ok(total / truth.len() as f64)
}
