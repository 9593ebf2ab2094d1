//! Online interaction and the solvers that exploit it. The same families
//! that defeat every batch design fall in d + 1 adaptive queries: the
//! learner steers its probes by what earlier answers revealed, reading the
//! hidden direction out of transition laws or target-policy responses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{ClassSpec, Family, MdpInstance};
use crate::mdp::{Action, Mdp, State, TransitionLaw};
use crate::protocol::{DataRow, Dataset};
use crate::util;
use crate::Vector;

/// Gatekeeper around a hidden instance. Solvers see the class, the query
/// responses, and nothing else.
pub struct EnvHandle {
    inst: MdpInstance,
    transcript: Vec<DataRow>,
    policy_queries: usize,
    budget: Option<usize>,
}

impl EnvHandle {
    pub fn new(inst: MdpInstance) -> Self {
        Self {
            inst,
            transcript: Vec::new(),
            policy_queries: 0,
            budget: None,
        }
    }

    pub fn with_budget(inst: MdpInstance, budget: usize) -> Self {
        Self {
            budget: Some(budget),
            ..Self::new(inst)
        }
    }

    /// Public knowledge only.
    pub fn class(&self) -> &ClassSpec {
        self.inst.class()
    }

    pub fn queries_used(&self) -> usize {
        self.transcript.len() + self.policy_queries
    }

    fn charge(&self) -> Result<()> {
        if let Some(budget) = self.budget {
            let total = self.queries_used() + 1;
            if total > budget {
                return Err(Error::BudgetExceeded { total, budget });
            }
        }
        Ok(())
    }

    /// Reveal the reward and transition law at one legal pair.
    pub fn query(&mut self, s: &State, a: &Action) -> Result<(f64, TransitionLaw)> {
        if !self.inst.is_legal(s, a) {
            return Err(Error::IllegalQuery(format!("{s:?}, {a:?}")));
        }
        self.charge()?;
        let reward = self.inst.reward(s, a);
        let law = self.inst.transition(s, a);
        self.transcript.push(DataRow {
            state: s.clone(),
            action: a.clone(),
            reward,
            law: law.clone(),
        });
        Ok((reward, law))
    }

    /// Ask the hidden target policy for its action at a state. Only the
    /// evaluation families have one.
    pub fn query_policy(&mut self, s: &State) -> Result<Action> {
        let pi = self.inst.target_policy()?;
        self.charge()?;
        self.policy_queries += 1;
        Ok(pi.act(s))
    }

    pub fn transcript(&self) -> &[DataRow] {
        &self.transcript
    }

    pub fn into_dataset(self) -> Dataset {
        Dataset {
            class: self.inst.class().clone(),
            rows: self.transcript,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineSolution {
    #[serde(with = "util::serde_vector")]
    pub theta: Vector,
    pub queries: usize,
}

/// Normalize the responses (w_j / 2) w into the unit direction +-w.
fn direction_from_responses(responses: &[Vector], d: usize) -> Result<Vector> {
    let best = responses
        .iter()
        .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
        .ok_or_else(|| Error::MissingProbe("no probe responses".into()))?;
    // Some coordinate of a unit vector has magnitude >= 1/sqrt(d), so the
    // largest response cannot be much shorter than 1/(2 sqrt(d)).
    if best.norm() < 0.25 / (d as f64).sqrt() {
        return Err(Error::Numerical(format!(
            "all probe responses are degenerate; largest norm {}",
            best.norm()
        )));
    }
    Ok(best / best.norm())
}

/// Identification in d + 1 queries: the branch probability at the scaled
/// axis gamma e_i is exactly w_i, and one aligned probe reads the sign off
/// its reward.
pub fn solve_bpi_online(env: &mut EnvHandle) -> Result<OnlineSolution> {
    let class = env.class().clone();
    if class.family != Family::BpiOrthant {
        return Err(Error::ModeViolation(
            "this solver reads branch probabilities; only the identification family has them"
                .into(),
        ));
    }
    let (d, gamma) = (class.d, class.gamma);
    let mut w_hat = Vector::zeros(d);
    for i in 0..d {
        let a = Action::point(util::canonical_basis(d, i) * gamma);
        let (_, law) = env.query(&State::Start, &a)?;
        w_hat[i] = law.prob_of(&State::Intermediate);
    }
    let norm = w_hat.norm();
    if norm == 0.0 {
        return Err(Error::Numerical("recovered direction is zero".into()));
    }
    w_hat /= norm;
    // Aligned probe: the ramp reward is about 1 - gamma on one sign and
    // exactly zero on the other.
    let (r, _) = env.query(&State::Start, &Action::point(w_hat.clone()))?;
    let mut theta = Vector::zeros(d + 1);
    if r > (1.0 - gamma) / 2.0 {
        theta.rows_mut(0, d).copy_from(&w_hat);
    }
    theta[d] = 0.5;
    Ok(OnlineSolution {
        theta,
        queries: env.queries_used(),
    })
}

/// Evaluation in d + 1 queries: the target policy's action at the scaled
/// axis (gamma / 2) e_j is the vector (w_j / 2) w, which hands over the
/// whole direction up to sign; one in-cap reward fixes the sign.
pub fn solve_ope_online(env: &mut EnvHandle) -> Result<OnlineSolution> {
    let class = env.class().clone();
    if class.family != Family::OpeBall {
        return Err(Error::ModeViolation(
            "this solver asks the target policy; use the all-ball evaluation family".into(),
        ));
    }
    let (d, gamma) = (class.d, class.gamma);
    let mut responses = Vec::with_capacity(d);
    for j in 0..d {
        let s = State::point(util::canonical_basis(d, j) * (gamma / 2.0));
        let a = env.query_policy(&s)?;
        let v = a
            .as_point()
            .cloned()
            .ok_or_else(|| Error::AnswerKind("policy returned a non-ball action".into()))?;
        responses.push(v);
    }
    let u = direction_from_responses(&responses, d)?;
    let (r, _) = env.query(&class.start_state(), &Action::point(u.clone()))?;
    let theta = if r > 0.0 { u } else { -u };
    Ok(OnlineSolution {
        theta,
        queries: env.queries_used(),
    })
}

/// The policy-free analogue: forced satellite moves at the scaled axes
/// land on (w_j / 2) w, revealing the direction through the transition law
/// alone; works in both action modes because probes ride on states, not
/// start actions.
pub fn solve_pf_adaptive(env: &mut EnvHandle) -> Result<OnlineSolution> {
    let class = env.class().clone();
    if class.family != Family::PolicyFree {
        return Err(Error::ModeViolation(
            "this solver uses forced satellite moves; use the policy-free family".into(),
        ));
    }
    let (d, gamma) = (class.d, class.gamma);
    let mut responses = Vec::with_capacity(d);
    for j in 0..d {
        let v = util::canonical_basis(d, j) * (gamma / 2.0);
        let (_, law) = env.query(&State::point(v.clone()), &Action::point(v))?;
        let succ = law
            .deterministic_successor()
            .ok_or_else(|| Error::Numerical("satellite move should be deterministic".into()))?;
        match succ {
            State::Point(p) => responses.push(p.clone()),
            other => {
                return Err(Error::Numerical(format!(
                    "satellite move landed on {other:?}"
                )))
            }
        }
    }
    let u = direction_from_responses(&responses, d)?;
    let (r, _) = env.query(&State::point(u.clone()), &Action::point(u.clone()))?;
    let theta = if r > 0.0 { u } else { -u };
    Ok(OnlineSolution {
        theta,
        queries: env.queries_used(),
    })
}

/// Dispatch on the family.
pub fn solve_online(env: &mut EnvHandle) -> Result<OnlineSolution> {
    match env.class().family {
        Family::OpeBall => solve_ope_online(env),
        Family::BpiOrthant => solve_bpi_online(env),
        Family::PolicyFree => solve_pf_adaptive(env),
    }
}
