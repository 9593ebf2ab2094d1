//! Discounted MDP primitives shared by every instance family: states,
//! actions, exact transition laws, linear action-value functions, policies,
//! and the Bellman operators evaluated in closed form.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::serde_vector;
use crate::Vector;

/// States are either one of three symbolic tags or a point of the unit ball.
/// The symbolic tags are never encoded as ball points; families with a start
/// state outside the ball rely on that separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum State {
    Start,
    Intermediate,
    Terminal,
    Point(#[serde(with = "serde_vector")] Vector),
}

impl State {
    pub fn point(v: Vector) -> Self {
        State::Point(v)
    }
}

/// Actions are ball points, plus one distinguished non-ball action used by
/// the family whose feature map has an extra coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Special,
    Point(#[serde(with = "serde_vector")] Vector),
}

impl Action {
    pub fn point(v: Vector) -> Self {
        Action::Point(v)
    }

    pub fn zero(d: usize) -> Self {
        Action::Point(Vector::zeros(d))
    }

    pub fn as_point(&self) -> Option<&Vector> {
        match self {
            Action::Point(v) => Some(v),
            Action::Special => None,
        }
    }
}

/// Exact transition law: at most two outcomes, probabilities summing to one.
/// Zero-probability outcomes are dropped at construction so identical
/// parameters always produce bitwise-identical laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionLaw {
    outcomes: Vec<(State, f64)>,
}

impl TransitionLaw {
    pub fn deterministic(s: State) -> Self {
        Self {
            outcomes: vec![(s, 1.0)],
        }
    }

    pub fn two(s1: State, p1: f64, s2: State, p2: f64) -> Result<Self> {
        if !(0.0..=1.0 + 1e-12).contains(&p1) || !(0.0..=1.0 + 1e-12).contains(&p2) {
            return Err(Error::Domain(format!(
                "transition probabilities out of range: {p1}, {p2}"
            )));
        }
        if (p1 + p2 - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "transition probabilities must sum to 1, got {}",
                p1 + p2
            )));
        }
        let mut outcomes = Vec::with_capacity(2);
        if p1 > 0.0 {
            outcomes.push((s1, p1));
        }
        if p2 > 0.0 {
            outcomes.push((s2, p2));
        }
        Ok(Self { outcomes })
    }

    pub fn outcomes(&self) -> &[(State, f64)] {
        &self.outcomes
    }

    /// Probability assigned to a given state (zero if absent).
    pub fn prob_of(&self, s: &State) -> f64 {
        self.outcomes
            .iter()
            .find(|(t, _)| t == s)
            .map_or(0.0, |(_, p)| *p)
    }

    /// The unique successor, if the law is deterministic.
    pub fn deterministic_successor(&self) -> Option<&State> {
        match self.outcomes.as_slice() {
            [(s, p)] if (*p - 1.0).abs() <= 1e-12 => Some(s),
            _ => None,
        }
    }
}

/// Linear action-value function Q(s, a) = phi(s, a)' theta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQ {
    #[serde(with = "serde_vector")]
    pub theta: Vector,
}

impl LinearQ {
    /// Parameter constrained to the unit ball, as realizable values are.
    pub fn new(theta: Vector) -> Result<Self> {
        if theta.norm() > 1.0 + 1e-12 {
            return Err(Error::Domain(format!(
                "theta must lie in the unit ball, norm {}",
                theta.norm()
            )));
        }
        Ok(Self { theta })
    }

    /// Unconstrained parameter, for evaluating deliberately wrong values.
    pub fn new_unchecked(theta: Vector) -> Self {
        Self { theta }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Deterministic stationary policy.
#[derive(Clone)]
pub struct Policy(Arc<dyn Fn(&State) -> Action + Send + Sync>);

impl Policy {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&State) -> Action + Send + Sync + 'static,
    {
        Policy(Arc::new(f))
    }

    pub fn act(&self, s: &State) -> Action {
        (self.0)(s)
    }
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Policy(..)")
    }
}

/// The interface Bellman machinery needs from a concrete instance.
/// `sup_q` and `greedy_action` are exact closed forms over the legal action
/// set of a state, never discretized maximizations.
pub trait Mdp {
    fn gamma(&self) -> f64;
    fn feature_dim(&self) -> usize;
    fn start_state(&self) -> State;
    fn is_legal(&self, s: &State, a: &Action) -> bool;
    fn reward(&self, s: &State, a: &Action) -> f64;
    fn transition(&self, s: &State, a: &Action) -> TransitionLaw;
    fn features(&self, s: &State, a: &Action) -> Vector;
    fn sup_q(&self, s: &State, q: &LinearQ) -> f64;
    fn greedy_action(&self, s: &State, q: &LinearQ) -> Action;

    fn q_value(&self, q: &LinearQ, s: &State, a: &Action) -> f64 {
        self.features(s, a).dot(&q.theta)
    }
}

fn require_legal<M: Mdp + ?Sized>(m: &M, s: &State, a: &Action) -> Result<()> {
    if m.is_legal(s, a) {
        Ok(())
    } else {
        Err(Error::IllegalQuery(format!("state {s:?}, action {a:?}")))
    }
}

/// One application of the policy Bellman operator:
/// (T^pi Q)(s, a) = r(s, a) + gamma * E_{s'}[ Q(s', pi(s')) ].
pub fn bellman_eval<M: Mdp + ?Sized>(
    m: &M,
    pi: &Policy,
    q: &LinearQ,
    s: &State,
    a: &Action,
) -> Result<f64> {
    require_legal(m, s, a)?;
    let law = m.transition(s, a);
    let mut next = 0.0;
    for (s_next, p) in law.outcomes() {
        let a_next = pi.act(s_next);
        next += p * m.q_value(q, s_next, &a_next);
    }
    Ok(m.reward(s, a) + m.gamma() * next)
}

/// One application of the optimality Bellman operator:
/// (T Q)(s, a) = r(s, a) + gamma * E_{s'}[ sup_{a'} Q(s', a') ].
pub fn bellman_opt<M: Mdp + ?Sized>(m: &M, q: &LinearQ, s: &State, a: &Action) -> Result<f64> {
    require_legal(m, s, a)?;
    let law = m.transition(s, a);
    let mut next = 0.0;
    for (s_next, p) in law.outcomes() {
        next += p * m.sup_q(s_next, q);
    }
    Ok(m.reward(s, a) + m.gamma() * next)
}

/// Exact-expectation discounted return of a policy from a state, truncated
/// once the remaining tail gamma^t * r_max / (1 - gamma) drops below tol.
/// Rewards are bounded by 1 in every family here.
pub fn policy_value<M: Mdp + ?Sized>(m: &M, pi: &Policy, s0: &State, tol: f64) -> f64 {
    let gamma = m.gamma();
    let tol = tol.max(1e-15);
    let mut dist: Vec<(State, f64)> = vec![(s0.clone(), 1.0)];
    let mut value = 0.0;
    let mut disc = 1.0;
    while disc / (1.0 - gamma) >= tol {
        let mut next: Vec<(State, f64)> = Vec::with_capacity(dist.len() + 1);
        for (s, weight) in &dist {
            let a = pi.act(s);
            value += disc * weight * m.reward(s, &a);
            for (s_next, p) in m.transition(s, &a).outcomes() {
                let mass = weight * p;
                if mass == 0.0 {
                    continue;
                }
                match next.iter_mut().find(|(t, _)| t == s_next) {
                    Some((_, acc)) => *acc += mass,
                    None => next.push((s_next.clone(), mass)),
                }
            }
        }
        dist = next;
        disc *= gamma;
    }
    value
}

/// All state-action pairs visited with positive probability within the first
/// `len` steps (timesteps 0 .. len-1) of running the policy from `s0`.
pub fn reach_set<M: Mdp + ?Sized>(
    m: &M,
    s0: &State,
    pi: &Policy,
    len: usize,
) -> Vec<(State, Action)> {
    let mut out: Vec<(State, Action)> = Vec::new();
    let mut level: Vec<State> = vec![s0.clone()];
    for t in 0..len {
        let mut next_level: Vec<State> = Vec::new();
        for s in &level {
            let a = pi.act(s);
            let pair = (s.clone(), a.clone());
            if !out.contains(&pair) {
                out.push(pair);
            }
            if t + 1 < len {
                for (s_next, p) in m.transition(s, &a).outcomes() {
                    if *p > 0.0 && !next_level.contains(s_next) {
                        next_level.push(s_next.clone());
                    }
                }
            }
        }
        level = next_level;
    }
    out
}
