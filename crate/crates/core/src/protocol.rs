//! Batch interaction protocol. The learner names (state, action) pairs up
//! front; the environment reveals the exact reward and transition law at
//! each pair; answers are scored against the hidden instance afterwards.
//! Revealing laws rather than sampled successors only strengthens the
//! negative results downstream: a learner that fails with the laws in hand
//! fails with samples too.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{ActionMode, ClassSpec, Family, MdpInstance};
use crate::mdp::{policy_value, Action, Mdp, State, TransitionLaw};
use crate::util;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Estimate the action-value parameter of the target policy.
    Evaluate,
    /// Output a parameter whose greedy policy is near optimal.
    Identify,
}

/// A batch design: the pairs whose outcomes the learner asks to see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySet {
    pairs: Vec<(State, Action)>,
    /// When set, pairs at single-action states cost nothing. Off by
    /// default: every revealed outcome is charged.
    free_singletons: bool,
}

impl QuerySet {
    pub fn new(pairs: Vec<(State, Action)>) -> Self {
        Self {
            pairs,
            free_singletons: false,
        }
    }

    pub fn with_free_singletons(mut self, on: bool) -> Self {
        self.free_singletons = on;
        self
    }

    /// Wrap raw action vectors in the family's canonical query states.
    /// Everything maps to the start state, except that in small-action mode
    /// a non-axis vector can only be probed at its own satellite state.
    pub fn from_actions(class: &ClassSpec, actions: &[Vector]) -> Self {
        let start = match class.family {
            Family::OpeBall => class.start_state(),
            _ => State::Start,
        };
        let pairs = actions
            .iter()
            .map(|a| {
                let action = Action::point(a.clone());
                if class.family == Family::PolicyFree
                    && class.action_mode == ActionMode::SmallE
                    && !class.is_legal(&start, &action)
                {
                    (State::point(a.clone()), action)
                } else {
                    (start.clone(), action)
                }
            })
            .collect();
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[(State, Action)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self, class: &ClassSpec) -> Result<()> {
        for (s, a) in &self.pairs {
            if !class.is_legal(s, a) {
                return Err(Error::IllegalQuery(format!(
                    "pair not legal in this class: {s:?}, {a:?}"
                )));
            }
        }
        Ok(())
    }

    /// Queries charged against the budget.
    pub fn charged(&self, class: &ClassSpec) -> usize {
        if self.free_singletons {
            self.pairs
                .iter()
                .filter(|(s, _)| !class.is_singleton_state(s))
                .count()
        } else {
            self.pairs.len()
        }
    }

    pub fn check_budget(&self, class: &ClassSpec, budget: usize) -> Result<usize> {
        let total = self.charged(class);
        if total > budget {
            return Err(Error::BudgetExceeded { total, budget });
        }
        Ok(total)
    }

    pub fn with_pair(mut self, s: State, a: Action) -> Self {
        self.pairs.push((s, a));
        self
    }

    /// The action vectors the design touches, in order.
    pub fn action_points(&self) -> Vec<Vector> {
        self.pairs
            .iter()
            .filter_map(|(_, a)| a.as_point().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub law: TransitionLaw,
}

/// What the environment hands back for one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub class: ClassSpec,
    pub rows: Vec<DataRow>,
}

impl Dataset {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serializes")
    }

    /// Hex digest of the canonical serialization; equal digests mean the
    /// revealed information is identical byte for byte.
    pub fn digest(&self) -> String {
        util::sha256_hex(self.canonical_json().as_bytes())
    }
}

/// The environment's side of the protocol.
pub fn collect(inst: &MdpInstance, queries: &QuerySet) -> Result<Dataset> {
    queries.validate(inst.class())?;
    let rows = queries
        .pairs()
        .iter()
        .map(|(s, a)| DataRow {
            state: s.clone(),
            action: a.clone(),
            reward: inst.reward(s, a),
            law: inst.transition(s, a),
        })
        .collect();
    Ok(Dataset {
        class: inst.class().clone(),
        rows,
    })
}

/// Second-moment matrix of the design's feature vectors, (1/n) sum phi phi'.
pub fn design_covariance(class: &ClassSpec, queries: &QuerySet) -> Result<Matrix> {
    if queries.is_empty() {
        return Err(Error::Domain("empty design has no covariance".into()));
    }
    let m = class.feature_dim();
    let mut cov = Matrix::zeros(m, m);
    for (s, a) in queries.pairs() {
        let phi = class.features(s, a);
        cov += &phi * phi.transpose();
    }
    Ok(cov / queries.len() as f64)
}

/// Worst-case action-value estimation error of a parameter answer:
/// sup over legal pairs of |phi' theta_hat - Q|, which the linear feature
/// geometry collapses to a parameter-space distance.
pub fn evaluation_error(inst: &MdpInstance, theta_hat: &Vector) -> Result<f64> {
    let m = inst.feature_dim();
    if theta_hat.len() != m {
        return Err(Error::AnswerKind(format!(
            "answer has dimension {}, features have {m}",
            theta_hat.len()
        )));
    }
    Ok((theta_hat - inst.closed_form_theta().theta).norm())
}

/// Suboptimality at the start state of the greedy policy of a parameter
/// answer, measured exactly.
pub fn identification_gap(inst: &MdpInstance, theta_hat: &Vector) -> Result<f64> {
    let m = inst.feature_dim();
    if theta_hat.len() != m {
        return Err(Error::AnswerKind(format!(
            "answer has dimension {}, features have {m}",
            theta_hat.len()
        )));
    }
    let start = inst.start_state();
    let v_star = policy_value(inst, &inst.optimal_policy(), &start, 1e-13);
    let pi_hat = inst.class().greedy_policy(theta_hat.clone());
    let v_hat = policy_value(inst, &pi_hat, &start, 1e-13);
    Ok(v_star - v_hat)
}

/// Score an answer for a task against a concrete instance. Lower is better;
/// zero means exact.
pub fn score(inst: &MdpInstance, task: Task, theta_hat: &Vector) -> Result<f64> {
    match task {
        Task::Evaluate => {
            if inst.family() == Family::BpiOrthant {
                return Err(Error::AnswerKind(
                    "the identification family has no evaluation task".into(),
                ));
            }
            evaluation_error(inst, theta_hat)
        }
        Task::Identify => identification_gap(inst, theta_hat),
    }
}
