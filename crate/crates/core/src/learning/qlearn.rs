//! Tabular Q-learning over the 256 sign-pattern states.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax3, Action, LearnError, StateId};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Stop once the greedy policy is unchanged for this many epochs.
    pub patience: usize,
    pub seed: u64,
}

impl Default for QParams {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            gamma: 1.0,
            epsilon: 0.2,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl QParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        let ok = (0.0..=1.0).contains(&self.alpha)
            && (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.epsilon);
        if ok {
            Ok(())
        } else {
            Err(LearnError::Model("alpha, gamma and epsilon must lie in [0, 1]".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub version: u32,
    pub params: QParams,
    /// One row per state, one column per action.
    pub values: Vec<[f64; 3]>,
}

impl QTable {
    pub fn new(params: QParams) -> Self {
        Self {
            version: MODEL_VERSION,
            params,
            values: vec![[0.0; 3]; StateId::COUNT],
        }
    }

    pub fn get(&self, s: StateId, a: Action) -> f64 {
        self.values[s.index()][a.index()]
    }

    /// Highest-valued action; ties go to the lowest action index.
    pub fn greedy(&self, s: StateId) -> Action {
        Action::from_index(argmax3(&self.values[s.index()]))
    }

    pub fn greedy_policy(&self) -> Vec<Action> {
        (0..=255u8).map(|s| self.greedy(StateId(s))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("q-table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        let q: QTable = serde_json::from_str(s).map_err(|e| LearnError::Model(e.to_string()))?;
        if q.version != MODEL_VERSION {
            return Err(LearnError::Model(format!(
                "unsupported q-table version {} (expected {MODEL_VERSION})",
                q.version
            )));
        }
        if q.values.len() != StateId::COUNT {
            return Err(LearnError::Model(format!("q-table must have {} rows", StateId::COUNT)));
        }
        Ok(q)
    }
}

/// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`; with no
/// next state the target is `r` alone.
pub fn q_update(q: &mut QTable, s: StateId, a: Action, r: f64, next: Option<StateId>) {
    let future = next.map_or(0.0, |n| {
        let row = &q.values[n.index()];
        row[argmax3(row)]
    });
    let (alpha, gamma) = (q.params.alpha, q.params.gamma);
    let cell = &mut q.values[s.index()][a.index()];
    *cell += alpha * (r + gamma * future - *cell);
}

/// Random action with probability `epsilon`, greedy otherwise.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &QTable, s: StateId, epsilon: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < epsilon {
        Action::from_index(rng.random_range(0..3))
    } else {
        q.greedy(s)
    }
}

/// An episodic sequence of decision points.
pub trait QEnvironment {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn state(&self, step: usize) -> StateId;

    /// Returns to the start of an episode.
    fn reset(&mut self);

    /// Takes `action` at `step` and returns the reward.
    fn step(&mut self, step: usize, action: Action) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    /// Whether the greedy policy settled before `max_epochs`.
    pub converged: bool,
}

/// One episode per epoch over `env`.
pub fn q_train(env: &mut dyn QEnvironment, params: &QParams) -> Result<(QTable, TrainingSummary), LearnError> {
    params.validate()?;
    let n = env.len();
    if n < 2 {
        return Err(LearnError::TooFewDisclosures(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut q = QTable::new(*params);
    let mut policy = q.greedy_policy();
    let mut stable = 0;
    for epoch in 1..=params.max_epochs {
        env.reset();
        for i in 0..n {
            let s = env.state(i);
            let a = epsilon_greedy(&q, s, params.epsilon, &mut rng);
            let r = env.step(i, a);
            let next = (i + 1 < n).then(|| env.state(i + 1));
            q_update(&mut q, s, a, r, next);
        }
        let now = q.greedy_policy();
        if now == policy {
            stable += 1;
        } else {
            stable = 0;
            policy = now;
        }
        log::debug!("q-learning epoch {epoch}: policy stable for {stable}");
        if params.patience > 0 && stable >= params.patience {
            return Ok((
                q,
                TrainingSummary {
                    epochs: epoch,
                    converged: true,
                },
            ));
        }
    }
    Ok((
        q,
        TrainingSummary {
            epochs: params.max_epochs,
            converged: params.max_epochs == 0,
        },
    ))
}
