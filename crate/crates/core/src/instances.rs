//! The three hard instance families. Each is a class of MDP pairs indexed by
//! a hidden unit direction w and a sign; rewards and transitions of the +
//! and - member agree everywhere outside the caps around +-w, while their
//! closed-form linear action-value parameters differ maximally.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{bellman_eval, bellman_opt, Action, LinearQ, Mdp, Policy, State, TransitionLaw};
use crate::sampling;
use crate::util::{self, NORM_SLACK};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Policy-evaluation family: every state is a ball point, every ball
    /// point is an action, the target policy chases the hidden direction.
    OpeBall,
    /// Policy-identification family: three symbolic states, actions in the
    /// nonnegative part of the ball plus one distinguished safe action.
    BpiOrthant,
    /// Policy-free family: a start state outside the ball plus satellite
    /// states with a single forced action each; realizable for every policy.
    PolicyFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Start-state action set of the policy-free family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMode {
    /// The whole unit ball.
    Continuous,
    /// The 2d signed canonical directions.
    SmallE,
}

/// Everything a learner is allowed to know: the family, discount, dimension,
/// and action-set shape. Feature maps and action spaces live here; the hidden
/// direction and sign never do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub family: Family,
    pub gamma: f64,
    pub d: usize,
    pub action_mode: ActionMode,
}

impl ClassSpec {
    pub fn new(family: Family, gamma: f64, d: usize) -> Result<Self> {
        Self::with_mode(family, gamma, d, ActionMode::Continuous)
    }

    pub fn with_mode(family: Family, gamma: f64, d: usize, action_mode: ActionMode) -> Result<Self> {
        if !(0.0 < gamma && gamma < 1.0) {
            return Err(Error::Domain(format!(
                "discount must lie in (0, 1), got {gamma}"
            )));
        }
        if d < 2 {
            return Err(Error::Domain("dimension must be at least 2".into()));
        }
        if action_mode == ActionMode::SmallE && family != Family::PolicyFree {
            return Err(Error::Domain(
                "the small-action mode applies only to the policy-free family".into(),
            ));
        }
        Ok(Self {
            family,
            gamma,
            d,
            action_mode,
        })
    }

    pub fn feature_dim(&self) -> usize {
        match self.family {
            Family::BpiOrthant => self.d + 1,
            _ => self.d,
        }
    }

    pub fn start_state(&self) -> State {
        match self.family {
            Family::OpeBall => State::point(Vector::zeros(self.d)),
            _ => State::Start,
        }
    }

    /// The 2d signed canonical directions, in a fixed order.
    pub fn small_actions(d: usize) -> Vec<Vector> {
        (0..d)
            .map(|i| util::canonical_basis(d, i))
            .chain((0..d).map(|i| -util::canonical_basis(d, i)))
            .collect()
    }

    fn point_in_ball(v: &Vector, d: usize) -> bool {
        v.len() == d && util::in_unit_ball(v)
    }

    fn point_in_orthant_ball(v: &Vector, d: usize) -> bool {
        Self::point_in_ball(v, d) && v.iter().all(|&x| x >= -NORM_SLACK)
    }

    pub fn is_legal(&self, s: &State, a: &Action) -> bool {
        match self.family {
            Family::OpeBall => matches!(
                (s, a),
                (State::Point(v), Action::Point(av))
                    if Self::point_in_ball(v, self.d) && Self::point_in_ball(av, self.d)
            ),
            Family::BpiOrthant => match (s, a) {
                (State::Start, Action::Special) => true,
                (State::Start | State::Intermediate, Action::Point(av)) => {
                    Self::point_in_orthant_ball(av, self.d)
                }
                (State::Terminal, Action::Point(av)) => {
                    av.len() == self.d && av.norm() <= NORM_SLACK
                }
                _ => false,
            },
            Family::PolicyFree => match (s, a) {
                (State::Start, Action::Point(av)) => match self.action_mode {
                    ActionMode::Continuous => Self::point_in_ball(av, self.d),
                    ActionMode::SmallE => {
                        av.len() == self.d
                            && Self::small_actions(self.d)
                                .iter()
                                .any(|e| (av - e).norm() <= NORM_SLACK)
                    }
                },
                (State::Point(v), Action::Point(av)) => {
                    Self::point_in_ball(v, self.d) && (av - v).norm() <= NORM_SLACK
                }
                _ => false,
            },
        }
    }

    /// phi(s, a): the action itself, with one extra coordinate reserved for
    /// the distinguished action in the family that has one.
    pub fn features(&self, _s: &State, a: &Action) -> Vector {
        match self.family {
            Family::BpiOrthant => match a {
                Action::Special => {
                    let mut f = Vector::zeros(self.d + 1);
                    f[self.d] = 1.0;
                    f
                }
                Action::Point(v) => {
                    let mut f = Vector::zeros(self.d + 1);
                    f.rows_mut(0, self.d).copy_from(v);
                    f
                }
            },
            _ => match a {
                Action::Point(v) => v.clone(),
                Action::Special => Vector::zeros(self.d),
            },
        }
    }

    /// Exact sup_{a legal at s} phi(s, a)' theta.
    pub fn sup_linear(&self, s: &State, theta: &Vector) -> f64 {
        match self.family {
            Family::OpeBall => theta.norm(),
            Family::BpiOrthant => {
                let ball_best = util::positive_part(&theta.rows(0, self.d).into_owned()).norm();
                match s {
                    State::Start => ball_best.max(theta[self.d]),
                    State::Intermediate => ball_best,
                    State::Terminal => 0.0,
                    State::Point(_) => panic!("ball states are not part of this family"),
                }
            }
            Family::PolicyFree => match s {
                State::Start => match self.action_mode {
                    ActionMode::Continuous => theta.norm(),
                    ActionMode::SmallE => theta.iter().fold(0.0_f64, |m, &x| m.max(x.abs())),
                },
                State::Point(v) => v.dot(theta),
                _ => panic!("symbolic intermediate states are not part of this family"),
            },
        }
    }

    /// Exact argmax of phi(s, a)' theta over the legal actions at s. Ties at
    /// the start state of the distinguished-action family break toward the
    /// distinguished action when values agree within 1e-12.
    pub fn greedy_action(&self, s: &State, theta: &Vector) -> Action {
        let unit_or_zero = |v: Vector| {
            let n = v.norm();
            if n > 0.0 {
                Action::point(v / n)
            } else {
                Action::zero(self.d)
            }
        };
        match self.family {
            Family::OpeBall => unit_or_zero(theta.clone()),
            Family::BpiOrthant => {
                let pos = util::positive_part(&theta.rows(0, self.d).into_owned());
                match s {
                    State::Start => {
                        if theta[self.d] >= pos.norm() - 1e-12 {
                            Action::Special
                        } else {
                            unit_or_zero(pos)
                        }
                    }
                    State::Intermediate => unit_or_zero(pos),
                    State::Terminal => Action::zero(self.d),
                    State::Point(_) => panic!("ball states are not part of this family"),
                }
            }
            Family::PolicyFree => match s {
                State::Start => match self.action_mode {
                    ActionMode::Continuous => unit_or_zero(theta.clone()),
                    ActionMode::SmallE => {
                        let mut best = Action::point(util::canonical_basis(self.d, 0));
                        let mut best_val = f64::NEG_INFINITY;
                        for e in Self::small_actions(self.d) {
                            let v = e.dot(theta);
                            if v > best_val {
                                best_val = v;
                                best = Action::point(e);
                            }
                        }
                        best
                    }
                },
                State::Point(v) => Action::point(v.clone()),
                _ => panic!("symbolic intermediate states are not part of this family"),
            },
        }
    }

    /// States with exactly one legal action.
    pub fn is_singleton_state(&self, s: &State) -> bool {
        matches!(
            (self.family, s),
            (Family::PolicyFree, State::Point(_)) | (Family::BpiOrthant, State::Terminal)
        )
    }

    /// Greedy policy of a fixed parameter, at every state.
    pub fn greedy_policy(&self, theta: Vector) -> Policy {
        let class = self.clone();
        Policy::from_fn(move |s| class.greedy_action(s, &theta))
    }

    /// The class-level target policy of the policy-free family: the unique
    /// action in each satellite state; at the start state an arbitrary fixed
    /// legal action (no transition re-enters the start, so the choice never
    /// affects any value).
    pub fn fixed_target_policy(&self) -> Policy {
        let d = self.d;
        let start_action = match self.action_mode {
            ActionMode::Continuous => Action::zero(d),
            ActionMode::SmallE => Action::point(util::canonical_basis(d, 0)),
        };
        Policy::from_fn(move |s| match s {
            State::Point(v) => Action::point(v.clone()),
            _ => start_action.clone(),
        })
    }
}

/// One concrete MDP: a class plus the hidden direction and sign.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpInstance {
    class: ClassSpec,
    w: Vector,
    sign: Sign,
}

impl MdpInstance {
    pub fn new(
        family: Family,
        w: Vector,
        sign: Sign,
        gamma: f64,
        d: usize,
        action_mode: ActionMode,
    ) -> Result<Self> {
        let class = ClassSpec::with_mode(family, gamma, d, action_mode)?;
        Self::from_class(class, w, sign)
    }

    pub fn from_class(class: ClassSpec, w: Vector, sign: Sign) -> Result<Self> {
        if w.len() != class.d {
            return Err(Error::Domain(format!(
                "direction has dimension {}, class has {}",
                w.len(),
                class.d
            )));
        }
        util::require_unit(&w, "instance direction")?;
        if class.family == Family::BpiOrthant && w.iter().any(|&x| x <= 0.0) {
            return Err(Error::Domain(
                "this family needs a direction with strictly positive coordinates".into(),
            ));
        }
        Ok(Self { class, w, sign })
    }

    /// Sample a uniform hidden direction. The orthant family folds to
    /// positive coordinates with a 1e-6 floor before renormalizing.
    pub fn sample_random<R: Rng>(
        family: Family,
        gamma: f64,
        d: usize,
        action_mode: ActionMode,
        rng: &mut R,
    ) -> Result<Self> {
        let w = match family {
            Family::BpiOrthant => sampling::unit_sphere_positive(d, rng),
            _ => sampling::unit_sphere(d, rng),
        };
        let sign = if rng.gen::<bool>() { Sign::Plus } else { Sign::Minus };
        Self::new(family, w, sign, gamma, d, action_mode)
    }

    pub fn class(&self) -> &ClassSpec {
        &self.class
    }

    pub fn family(&self) -> Family {
        self.class.family
    }

    pub fn w(&self) -> &Vector {
        &self.w
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn gamma(&self) -> f64 {
        self.class.gamma
    }

    pub fn d(&self) -> usize {
        self.class.d
    }

    /// The paired instance with the opposite sign and the same direction.
    pub fn twin(&self) -> Self {
        Self {
            class: self.class.clone(),
            w: self.w.clone(),
            sign: self.sign.flip(),
        }
    }

    fn in_cap_union(&self, a: &Vector) -> bool {
        a.dot(&self.w).abs() >= self.class.gamma
    }

    /// Closed-form realizable parameter.
    pub fn closed_form_theta(&self) -> LinearQ {
        match self.class.family {
            Family::OpeBall | Family::PolicyFree => {
                LinearQ::new_unchecked(&self.w * self.sign.factor())
            }
            Family::BpiOrthant => {
                let mut theta = Vector::zeros(self.class.d + 1);
                if self.sign == Sign::Plus {
                    theta.rows_mut(0, self.class.d).copy_from(&self.w);
                }
                theta[self.class.d] = 0.5;
                LinearQ::new_unchecked(theta)
            }
        }
    }

    /// The evaluation family's target policy: chase the hidden direction
    /// until inside one of the caps, then stay put.
    pub fn target_policy(&self) -> Result<Policy> {
        match self.class.family {
            Family::OpeBall => {
                let w = self.w.clone();
                let gamma = self.class.gamma;
                let d = self.class.d;
                Ok(Policy::from_fn(move |s| match s {
                    State::Point(v) => {
                        let dot = v.dot(&w);
                        if dot.abs() >= gamma {
                            Action::point(v.clone())
                        } else {
                            Action::point(&w * (dot / gamma))
                        }
                    }
                    _ => Action::zero(d),
                }))
            }
            Family::PolicyFree => Ok(self.class.fixed_target_policy()),
            Family::BpiOrthant => Err(Error::Domain(
                "the identification family has no target policy".into(),
            )),
        }
    }

    /// Greedy policy of the closed-form parameter; optimal in every family.
    pub fn optimal_policy(&self) -> Policy {
        self.class.greedy_policy(self.closed_form_theta().theta)
    }
}

impl Mdp for MdpInstance {
    fn gamma(&self) -> f64 {
        self.class.gamma
    }

    fn feature_dim(&self) -> usize {
        self.class.feature_dim()
    }

    fn start_state(&self) -> State {
        self.class.start_state()
    }

    fn is_legal(&self, s: &State, a: &Action) -> bool {
        self.class.is_legal(s, a)
    }

    fn reward(&self, s: &State, a: &Action) -> f64 {
        match self.class.family {
            Family::OpeBall | Family::PolicyFree => match a {
                Action::Point(v) => {
                    if self.in_cap_union(v) {
                        (1.0 - self.class.gamma) * self.sign.factor() * v.dot(&self.w)
                    } else {
                        0.0
                    }
                }
                Action::Special => 0.0,
            },
            Family::BpiOrthant => match (s, a) {
                (State::Start, Action::Special) => 0.5,
                (_, Action::Point(v)) => match self.sign {
                    Sign::Plus => (v.dot(&self.w) - self.class.gamma).max(0.0),
                    Sign::Minus => 0.0,
                },
                _ => 0.0,
            },
        }
    }

    fn transition(&self, s: &State, a: &Action) -> TransitionLaw {
        match self.class.family {
            Family::OpeBall => match a {
                Action::Point(v) => TransitionLaw::deterministic(State::point(v.clone())),
                Action::Special => TransitionLaw::deterministic(s.clone()),
            },
            Family::PolicyFree => match a {
                Action::Point(v) => {
                    let dot = v.dot(&self.w);
                    let succ = if dot.abs() >= self.class.gamma {
                        v.clone()
                    } else {
                        &self.w * (dot / self.class.gamma)
                    };
                    TransitionLaw::deterministic(State::point(succ))
                }
                Action::Special => TransitionLaw::deterministic(s.clone()),
            },
            Family::BpiOrthant => match a {
                Action::Special => TransitionLaw::deterministic(State::Terminal),
                Action::Point(v) => {
                    let p = (v.dot(&self.w) / self.class.gamma).clamp(0.0, 1.0);
                    TransitionLaw::two(State::Intermediate, p, State::Terminal, 1.0 - p)
                        .expect("probabilities are clamped to [0, 1]")
                }
            },
        }
    }

    fn features(&self, s: &State, a: &Action) -> Vector {
        self.class.features(s, a)
    }

    fn sup_q(&self, s: &State, q: &LinearQ) -> f64 {
        self.class.sup_linear(s, &q.theta)
    }

    fn greedy_action(&self, s: &State, q: &LinearQ) -> Action {
        self.class.greedy_action(s, &q.theta)
    }
}

/// Serialization record for an instance; deserializing revalidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub family: Family,
    #[serde(with = "util::serde_vector")]
    pub w: Vector,
    pub sign: Sign,
    pub gamma: f64,
    pub d: usize,
    pub action_mode: ActionMode,
}

impl From<&MdpInstance> for InstanceRecord {
    fn from(inst: &MdpInstance) -> Self {
        Self {
            family: inst.class.family,
            w: inst.w.clone(),
            sign: inst.sign,
            gamma: inst.class.gamma,
            d: inst.class.d,
            action_mode: inst.class.action_mode,
        }
    }
}

impl TryFrom<InstanceRecord> for MdpInstance {
    type Error = Error;

    fn try_from(r: InstanceRecord) -> Result<Self> {
        MdpInstance::new(r.family, r.w, r.sign, r.gamma, r.d, r.action_mode)
    }
}

/// Stratified legal state-action pairs covering both caps, the outside
/// region, boundary scalings, the zero action, and the symbolic specials.
pub fn stratified_pairs<R: Rng>(
    inst: &MdpInstance,
    n: usize,
    rng: &mut R,
) -> Vec<(State, Action)> {
    let d = inst.class.d;
    let gamma = inst.class.gamma;
    let w = &inst.w;
    let mut out: Vec<(State, Action)> = Vec::with_capacity(n);

    let cap_point = |rng: &mut R, sign: f64| -> Vector {
        // c w + rho u with u orthogonal to w stays in the ball and in the cap.
        let c: f64 = gamma + rng.gen::<f64>() * (1.0 - gamma);
        let raw = sampling::unit_sphere(d, rng);
        let mut u = &raw - w * raw.dot(w);
        let n_u = u.norm();
        if n_u > 1e-9 {
            u /= n_u;
            let rho = rng.gen::<f64>() * (1.0 - c * c).sqrt() * 0.999;
            (w * c + u * rho) * sign
        } else {
            w * (c * sign)
        }
    };

    match inst.class.family {
        Family::OpeBall => {
            let random_state = |rng: &mut R| State::point(sampling::unit_ball(d, rng));
            for k in 0..n {
                let a = match k % 6 {
                    0 => cap_point(rng, 1.0),
                    1 => cap_point(rng, -1.0),
                    2 => sampling::unit_ball(d, rng),
                    3 => w * (gamma * (k % 3) as f64 / 2.0),
                    4 => Vector::zeros(d),
                    _ => sampling::unit_sphere(d, rng),
                };
                out.push((random_state(rng), Action::point(a)));
            }
        }
        Family::PolicyFree => {
            let small = ClassSpec::small_actions(d);
            for k in 0..n {
                match inst.class.action_mode {
                    ActionMode::SmallE => {
                        if k % 2 == 0 {
                            out.push((State::Start, Action::point(small[k % small.len()].clone())));
                        } else {
                            let v = match (k / 2) % 4 {
                                0 => cap_point(rng, 1.0),
                                1 => cap_point(rng, -1.0),
                                2 => sampling::unit_ball(d, rng),
                                _ => w * ((k % 5) as f64 / 5.0),
                            };
                            out.push((State::point(v.clone()), Action::point(v)));
                        }
                    }
                    ActionMode::Continuous => {
                        let a = match k % 5 {
                            0 => cap_point(rng, 1.0),
                            1 => cap_point(rng, -1.0),
                            2 => sampling::unit_ball(d, rng),
                            3 => w * ((k % 7) as f64 / 6.0),
                            _ => Vector::zeros(d),
                        };
                        if k % 3 == 0 {
                            out.push((State::Start, Action::point(a)));
                        } else {
                            out.push((State::point(a.clone()), Action::point(a)));
                        }
                    }
                }
            }
        }
        Family::BpiOrthant => {
            for k in 0..n {
                if k % 11 == 0 {
                    out.push((State::Start, Action::Special));
                    continue;
                }
                if k % 11 == 1 {
                    out.push((State::Terminal, Action::zero(d)));
                    continue;
                }
                let a = match k % 5 {
                    0 => {
                        // Points of the cap intersected with the orthant.
                        let c: f64 = gamma + rng.gen::<f64>() * (1.0 - gamma);
                        w * c
                    }
                    1 => sampling::unit_ball_orthant(d, rng),
                    2 => w * gamma,
                    3 => Vector::zeros(d),
                    _ => util::canonical_basis(d, k % d) * rng.gen::<f64>(),
                };
                let s = if k % 2 == 0 {
                    State::Start
                } else {
                    State::Intermediate
                };
                out.push((s, Action::point(a)));
            }
        }
    }
    out
}

/// Largest Bellman-consistency residual of a parameter over stratified
/// samples: |T^pi Q - Q| for the evaluation families, |T Q - Q| for the
/// identification family.
pub fn bellman_residual_max(inst: &MdpInstance, q: &LinearQ, n_samples: usize, seed: u64) -> f64 {
    let mut rng = sampling::rng_from_seed(seed);
    let pairs = stratified_pairs(inst, n_samples, &mut rng);
    let pi = match inst.class.family {
        Family::BpiOrthant => None,
        _ => Some(inst.target_policy().expect("evaluation families have one")),
    };
    let mut worst = 0.0_f64;
    for (s, a) in &pairs {
        let lhs = match &pi {
            Some(pi) => bellman_eval(inst, pi, q, s, a),
            None => bellman_opt(inst, q, s, a),
        }
        .expect("stratified pairs are legal");
        let residual = (lhs - inst.q_value(q, s, a)).abs();
        worst = worst.max(residual);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizabilityReport {
    pub family: Family,
    pub gamma: f64,
    pub d: usize,
    pub samples: usize,
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Check that the closed-form parameter satisfies its Bellman equation on
/// stratified samples to within tol.
pub fn verify_realizability(
    inst: &MdpInstance,
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> RealizabilityReport {
    let max_residual = bellman_residual_max(inst, &inst.closed_form_theta(), n_samples, seed);
    RealizabilityReport {
        family: inst.class.family,
        gamma: inst.class.gamma,
        d: inst.class.d,
        samples: n_samples,
        max_residual,
        tol,
        pass: max_residual <= tol,
    }
}
