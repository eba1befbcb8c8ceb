//! Sparse feature maps: tile coding over boxes and one-hot tabular features.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Sparse vector with sorted, distinct indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Binary vector with ones at `indices` (sorted, distinct).
    pub fn ones(dim: usize, indices: Vec<usize>) -> Self {
        let values = vec![1.0; indices.len()];
        Self { dim, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Σ_j w[j] · x[j]².
    pub fn weighted_norm_sq(&self, weights: &[f64]) -> f64 {
        self.iter().map(|(i, v)| weights[i] * v * v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// a·self + b·other, dropping exact zeros.
    pub fn axpby(&self, a: f64, other: &SparseVec, b: f64) -> SparseVec {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = SparseVec::new(self.dim);
        let (mut i, mut j) = (0, 0);
        let mut push = |idx: usize, v: f64| {
            if v != 0.0 {
                out.indices.push(idx);
                out.values.push(v);
            }
        };
        while i < self.nnz() || j < other.nnz() {
            let si = self.indices.get(i).copied().unwrap_or(usize::MAX);
            let oj = other.indices.get(j).copied().unwrap_or(usize::MAX);
            if si == oj {
                push(si, a * self.values[i] + b * other.values[j]);
                i += 1;
                j += 1;
            } else if si < oj {
                push(si, a * self.values[i]);
                i += 1;
            } else {
                push(oj, b * other.values[j]);
                j += 1;
            }
        }
        out
    }
}

/// A map from states (real vectors) to sparse feature vectors.
pub trait FeatureMap: Sync {
    fn dim(&self) -> usize;

    fn features(&self, state: &[f64]) -> SparseVec;

    /// sup over states of ‖φ(x)‖₂.
    fn norm_bound(&self) -> f64;
}

/// Tile coding over an axis-aligned box.
///
/// Feature index = tiling · m^D + row-major cell index, dimension 0 most
/// significant. Out-of-box states clamp to the box and the top edge falls in
/// the last cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileCodingConfig {
    pub state_lows: Vec<f64>,
    pub state_highs: Vec<f64>,
    pub tilings: usize,
    pub tiles_per_dim: usize,
    /// One displacement vector per tiling, in fractions of a tile width.
    pub offsets: Vec<Vec<f64>>,
}

impl TileCodingConfig {
    /// Tiling j displaced by j/k of a tile width along every dimension.
    pub fn staggered(state_lows: Vec<f64>, state_highs: Vec<f64>, tilings: usize, tiles_per_dim: usize) -> Result<Self> {
        let dims = state_lows.len();
        let offsets = (0..tilings)
            .map(|j| vec![j as f64 / tilings.max(1) as f64; dims])
            .collect();
        let cfg = Self {
            state_lows,
            state_highs,
            tilings,
            tiles_per_dim,
            offsets,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same grid for every tiling.
    pub fn aligned(state_lows: Vec<f64>, state_highs: Vec<f64>, tilings: usize, tiles_per_dim: usize) -> Result<Self> {
        let dims = state_lows.len();
        let cfg = Self {
            state_lows,
            state_highs,
            tilings,
            tiles_per_dim,
            offsets: vec![vec![0.0; dims]; tilings],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 4 tilings of an 8×8 grid over the Mountain Car state box.
    pub fn mountain_car() -> Self {
        Self::staggered(
            vec![crate::envs::POSITION_MIN, -crate::envs::VELOCITY_MAX],
            vec![crate::envs::POSITION_MAX, crate::envs::VELOCITY_MAX],
            4,
            8,
        )
        .expect("static config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.state_lows.len(), self.state_highs.len())?;
        if self.state_lows.is_empty() {
            return Err(Error::param("state_lows", "need at least one state dimension"));
        }
        if self
            .state_lows
            .iter()
            .zip(&self.state_highs)
            .any(|(lo, hi)| !(lo < hi))
        {
            return Err(Error::param("state_highs", "every low must be below its high"));
        }
        if self.tilings == 0 {
            return Err(Error::param("tilings", "must be positive"));
        }
        if self.tiles_per_dim == 0 {
            return Err(Error::param("tiles_per_dim", "must be positive"));
        }
        if self.offsets.len() != self.tilings {
            return Err(Error::param("offsets", "need one offset vector per tiling"));
        }
        for off in &self.offsets {
            check_dim(self.state_lows.len(), off.len())?;
            if off.iter().any(|o| !(0.0..1.0).contains(o)) {
                return Err(Error::param("offsets", "components must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    pub fn state_dims(&self) -> usize {
        self.state_lows.len()
    }

    fn cells_per_tiling(&self) -> usize {
        self.tiles_per_dim.pow(self.state_dims() as u32)
    }
}

/// Active tile index per tiling, in increasing order.
pub fn tile_code(x: &[f64], cfg: &TileCodingConfig) -> SparseVec {
    let m = cfg.tiles_per_dim;
    let per_tiling = cfg.cells_per_tiling();
    let mut active = Vec::with_capacity(cfg.tilings);
    for (tiling, offset) in cfg.offsets.iter().enumerate() {
        let mut cell = 0usize;
        for (dim, &xi) in x.iter().enumerate().take(cfg.state_dims()) {
            let (lo, hi) = (cfg.state_lows[dim], cfg.state_highs[dim]);
            let u = ((xi - lo) / (hi - lo)).clamp(0.0, 1.0);
            let idx = ((u * m as f64 + offset[dim]).floor() as usize).min(m - 1);
            cell = cell * m + idx;
        }
        active.push(tiling * per_tiling + cell);
    }
    SparseVec::ones(cfg.tilings * per_tiling, active)
}

/// sup ‖φ(x)‖₂ for binary tile coding: √(number of tilings).
pub fn feature_norm_bound(cfg: &TileCodingConfig) -> f64 {
    (cfg.tilings as f64).sqrt()
}

impl FeatureMap for TileCodingConfig {
    fn dim(&self) -> usize {
        self.tilings * self.cells_per_tiling()
    }

    fn features(&self, state: &[f64]) -> SparseVec {
        tile_code(state, self)
    }

    fn norm_bound(&self) -> f64 {
        feature_norm_bound(self)
    }
}

/// One-hot features over a finite state set; the state is `x[0]` as an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabularFeatures {
    pub states: usize,
}

impl FeatureMap for TabularFeatures {
    fn dim(&self) -> usize {
        self.states
    }

    fn features(&self, state: &[f64]) -> SparseVec {
        let s = state[0] as usize;
        assert!(s < self.states, "state index {s} out of range");
        SparseVec::ones(self.states, vec![s])
    }

    fn norm_bound(&self) -> f64 {
        1.0
    }
}
