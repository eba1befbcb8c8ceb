//! Mountain Car with two transfer variants, fixed evaluation policies and
//! seeded trajectory collection.

use std::io::{Read, Write};

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::Transition;
use crate::error::{Error, Result};
use crate::features::{FeatureMap, TileCodingConfig};
use crate::rng::stream_rng;

pub const POSITION_MIN: f64 = -1.2;
pub const POSITION_MAX: f64 = 0.6;
pub const VELOCITY_MAX: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.6;
const THRUST: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

/// Raw altitude sin(3p) attains −1 at p = −π/6 and +1 at p = π/6, both inside
/// the position range.
const ALTITUDE_MIN: f64 = -1.0;
const ALTITUDE_MAX: f64 = 1.0;

/// (position, velocity)
pub type State = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Action {
    Reverse,
    Coast,
    Forward,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Reverse, Action::Coast, Action::Forward];

    pub fn value(self) -> i64 {
        match self {
            Action::Reverse => -1,
            Action::Coast => 0,
            Action::Forward => 1,
        }
    }

    fn index(self) -> usize {
        (self.value() + 1) as usize
    }
}

impl TryFrom<i64> for Action {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(Action::Reverse),
            0 => Ok(Action::Coast),
            1 => Ok(Action::Forward),
            other => Err(Error::InvalidAction(other)),
        }
    }
}

impl From<Action> for i64 {
    fn from(a: Action) -> i64 {
        a.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantTag {
    Original,
    DoubledAcceleration,
    AltitudeReward,
}

impl std::fmt::Display for VariantTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VariantTag::Original => "original",
            VariantTag::DoubledAcceleration => "doubled_acceleration",
            VariantTag::AltitudeReward => "altitude_reward",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MountainCarVariant {
    pub tag: VariantTag,
    pub gamma: f64,
    pub reward_max: f64,
}

impl MountainCarVariant {
    pub fn new(tag: VariantTag, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::param("gamma", format!("{gamma} is outside [0, 1)")));
        }
        Ok(Self {
            tag,
            gamma,
            reward_max: 1.0,
        })
    }

    fn accel_scale(&self) -> f64 {
        match self.tag {
            VariantTag::DoubledAcceleration => 2.0,
            _ => 1.0,
        }
    }
}

/// Altitude sin(3p) rescaled to [0, 1] over the position range.
pub fn normalized_altitude(position: f64) -> f64 {
    ((3.0 * position).sin() - ALTITUDE_MIN) / (ALTITUDE_MAX - ALTITUDE_MIN)
}

/// Position of the valley floor (minimum altitude).
pub fn bottom_of_hill() -> f64 {
    -std::f64::consts::FRAC_PI_6
}

/// One deterministic step. Episodes never terminate: at the goal the car
/// pins against the right wall and each step there pays the goal reward.
pub fn mc_step(state: State, action: Action, variant: &MountainCarVariant) -> (State, f64) {
    let [pos, vel] = state;
    let accel = variant.accel_scale() * THRUST * action.value() as f64;
    let mut next_vel = (vel + accel - GRAVITY * (3.0 * pos).cos()).clamp(-VELOCITY_MAX, VELOCITY_MAX);
    let next_pos = (pos + next_vel).clamp(POSITION_MIN, POSITION_MAX);
    if next_pos <= POSITION_MIN {
        next_vel = 0.0;
    }
    let reward = match variant.tag {
        VariantTag::Original | VariantTag::DoubledAcceleration => {
            if next_pos >= GOAL_POSITION {
                1.0
            } else {
                0.0
            }
        }
        VariantTag::AltitudeReward => 1.0 - normalized_altitude(next_pos),
    };
    ([next_pos, next_vel], reward)
}

/// Integer-action form of [`mc_step`].
pub fn mc_step_raw(state: State, action: i64, variant: &MountainCarVariant) -> Result<(State, f64)> {
    Ok(mc_step(state, Action::try_from(action)?, variant))
}

/// Push in the direction of motion; push forward when at rest.
pub fn bang_bang_policy(state: &State) -> Action {
    if state[1] < 0.0 {
        Action::Reverse
    } else {
        Action::Forward
    }
}

/// Linear action values over tile-coded states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub tiles: TileCodingConfig,
    /// Row-major: weights[feature * 3 + action index].
    pub weights: Vec<f64>,
}

impl QTable {
    fn new(tiles: TileCodingConfig) -> Self {
        let d = tiles.dim();
        Self {
            tiles,
            weights: vec![0.0; d * 3],
        }
    }

    fn values(&self, state: &State) -> [f64; 3] {
        let f = self.tiles.features(state);
        let mut q = [0.0; 3];
        for i in f.indices {
            for (a, qa) in q.iter_mut().enumerate() {
                *qa += self.weights[i * 3 + a];
            }
        }
        q
    }

    /// Highest-valued action; ties go to the later action in [`Action::ALL`].
    pub fn greedy(&self, state: &State) -> Action {
        let q = self.values(state);
        let mut best = 0;
        for a in 1..3 {
            if q[a] >= q[best] {
                best = a;
            }
        }
        Action::ALL[best]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    BangBang,
    Greedy(QTable),
}

impl Policy {
    pub fn act(&self, state: &State) -> Action {
        match self {
            Policy::BangBang => bang_bang_policy(state),
            Policy::Greedy(q) => q.greedy(state),
        }
    }

    /// Steps needed to reach the goal from `start` under the Original
    /// dynamics, if it happens within `max_steps`.
    pub fn steps_to_goal(&self, start: State, variant: &MountainCarVariant, max_steps: usize) -> Option<usize> {
        let mut state = start;
        for t in 0..max_steps {
            state = mc_step(state, self.act(&state), variant).0;
            if state[0] >= GOAL_POSITION {
                return Some(t + 1);
            }
        }
        None
    }
}

/// Tile-coded Q-learning with exploring starts on the Original variant.
///
/// Episodes start uniformly in the state box and end at the goal or after
/// 1000 steps. The learning discount is 0.99 so the sparse goal signal
/// survives the ~100-step horizon from the valley.
pub fn learn_policy_q(variant: &MountainCarVariant, episodes: usize, seed: u64) -> Result<Policy> {
    if episodes == 0 {
        return Err(Error::param("episodes", "must be at least 1"));
    }
    let train_env = MountainCarVariant {
        tag: VariantTag::Original,
        ..*variant
    };
    const DISCOUNT: f64 = 0.99;
    const EPSILON: f64 = 0.1;
    const MAX_STEPS: usize = 1000;
    let tiles = TileCodingConfig::mountain_car();
    let alpha = 0.5 / tiles.tilings as f64;
    let mut table = QTable::new(tiles);
    let mut rng = stream_rng(seed, 0);

    for _ in 0..episodes {
        let mut state = uniform_state(&mut rng);
        for _ in 0..MAX_STEPS {
            let action = if rng.random::<f64>() < EPSILON {
                Action::ALL[rng.random_range(0..3)]
            } else {
                table.greedy(&state)
            };
            let (next, reward) = mc_step(state, action, &train_env);
            let done = next[0] >= GOAL_POSITION;
            let target = if done {
                reward
            } else {
                let q_next = table.values(&next);
                reward + DISCOUNT * q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            let q = table.values(&state)[action.index()];
            let step = alpha * (target - q);
            let features = table.tiles.features(&state);
            for i in features.indices {
                table.weights[i * 3 + action.index()] += step;
            }
            if done {
                break;
            }
            state = next;
        }
    }

    let policy = Policy::Greedy(table);
    match policy.steps_to_goal([-0.5, 0.0], &train_env, 500) {
        Some(_) => Ok(policy),
        None => Err(Error::TrainingFailed(format!(
            "greedy policy after {episodes} episodes does not reach the goal from (-0.5, 0) within 500 steps"
        ))),
    }
}

pub fn uniform_state<R: Rng + ?Sized>(rng: &mut R) -> State {
    [
        rng.random_range(POSITION_MIN..=POSITION_MAX),
        rng.random_range(-VELOCITY_MAX..=VELOCITY_MAX),
    ]
}

/// One on-policy transition, tagged with its place in the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub trajectory_id: usize,
    pub step_index: usize,
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub next_state: State,
}

impl Transition for TransitionSample {
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

/// `count` rollouts of exactly `length` steps, each from a uniform start.
///
/// Trajectory t uses stream t of `seed`, so output does not depend on how
/// the work is scheduled.
pub fn collect_trajectories(
    variant: &MountainCarVariant,
    policy: &Policy,
    count: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<TransitionSample>> {
    if count == 0 {
        return Err(Error::param("count", "must be at least 1"));
    }
    if length == 0 {
        return Err(Error::param("length", "must be at least 1"));
    }
    let per_trajectory: Vec<Vec<TransitionSample>> = (0..count)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let mut state = uniform_state(&mut rng);
            (0..length)
                .map(|step| {
                    let action = policy.act(&state);
                    let (next_state, reward) = mc_step(state, action, variant);
                    let sample = TransitionSample {
                        trajectory_id: t,
                        step_index: step,
                        state,
                        action,
                        reward,
                        next_state,
                    };
                    state = next_state;
                    sample
                })
                .collect()
        })
        .collect();
    Ok(per_trajectory.into_iter().flatten().collect())
}

/// Resampling access to the transition kernel under a fixed policy.
pub trait GenerativeModel: Sync {
    /// Draws (next state, reward) from `state`, or `None` when this model
    /// cannot restart from arbitrary states.
    fn draw(&self, state: &[f64], rng: &mut dyn RngCore) -> Option<(Vec<f64>, f64)>;
}

/// Mountain Car dynamics closed under a policy.
#[derive(Debug, Clone)]
pub struct MountainCarModel {
    pub variant: MountainCarVariant,
    pub policy: Policy,
}

impl GenerativeModel for MountainCarModel {
    fn draw(&self, state: &[f64], _rng: &mut dyn RngCore) -> Option<(Vec<f64>, f64)> {
        let s = [state[0], state[1]];
        let (next, reward) = mc_step(s, self.policy.act(&s), &self.variant);
        Some((next.to_vec(), reward))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    trajectory_id: usize,
    step_index: usize,
    pos: f64,
    vel: f64,
    action: i64,
    reward: f64,
    next_pos: f64,
    next_vel: f64,
}

pub fn write_dataset_csv<W: Write>(writer: W, samples: &[TransitionSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(DatasetRow {
            trajectory_id: s.trajectory_id,
            step_index: s.step_index,
            pos: s.state[0],
            vel: s.state[1],
            action: s.action.value(),
            reward: s.reward,
            next_pos: s.next_state[0],
            next_vel: s.next_state[1],
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(reader: R) -> Result<Vec<TransitionSample>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize::<DatasetRow>()
        .map(|row| {
            let row = row?;
            Ok(TransitionSample {
                trajectory_id: row.trajectory_id,
                step_index: row.step_index,
                state: [row.pos, row.vel],
                action: Action::try_from(row.action)?,
                reward: row.reward,
                next_state: [row.next_pos, row.next_vel],
            })
        })
        .collect()
}
