//! The adversary. Given any batch design that touches few enough actions,
//! it finds a direction whose caps the design never enters, builds the two
//! instances hiding there, proves they answer every query identically, and
//! certifies the error any single answer must incur on one of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cap_count, find_lonely_cap_with, LonelyMode, LonelySearch};
use crate::instances::{ActionMode, ClassSpec, Family, MdpInstance};
use crate::mdp::{Action, State};
use crate::protocol::{collect, score, Dataset, QuerySet, Task};
use crate::sampling;
use crate::util;
use crate::Vector;

/// Two instances that are indistinguishable on a given design.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialPair {
    pub plus: MdpInstance,
    pub minus: MdpInstance,
    /// The lonely direction both instances hide behind.
    pub direction: Vector,
    /// Worst-case slack between the cap height and any query alignment;
    /// strictly positive whenever the pair exists.
    pub margin: f64,
}

fn lonely_mode(family: Family) -> LonelyMode {
    match family {
        Family::BpiOrthant => LonelyMode::PositiveOrthant,
        _ => LonelyMode::SymmetricPair,
    }
}

/// Designs strictly smaller than this are always defeated: the queried
/// actions cannot block every candidate cap, by cap-packing volume.
pub fn guaranteed_defeat_threshold(class: &ClassSpec) -> Result<f64> {
    let count = cap_count(class.gamma, class.d)?;
    Ok(match class.family {
        Family::BpiOrthant => count.threshold * (2.0_f64).powi(1 - class.d as i32),
        _ => count.threshold,
    })
}

pub fn adversarial_pair(class: &ClassSpec, queries: &QuerySet) -> Result<Option<AdversarialPair>> {
    adversarial_pair_with(class, queries, &LonelySearch::default())
}

/// Search for the hiding direction among the design's action points. The
/// distinguished action and forced satellite repeats contribute the same
/// point; only where an action vector lands matters.
pub fn adversarial_pair_with(
    class: &ClassSpec,
    queries: &QuerySet,
    search: &LonelySearch,
) -> Result<Option<AdversarialPair>> {
    queries.validate(class)?;
    let points = queries.action_points();
    let mode = lonely_mode(class.family);
    let Some(direction) = find_lonely_cap_with(&points, class.gamma, class.d, mode, search)?
    else {
        return Ok(None);
    };

    let worst_alignment = points
        .iter()
        .map(|y| match mode {
            LonelyMode::SymmetricPair => y.dot(&direction).abs(),
            _ => y.dot(&direction),
        })
        .fold(0.0_f64, f64::max);
    let margin = class.gamma - worst_alignment;

    let plus = MdpInstance::from_class(class.clone(), direction.clone(), crate::instances::Sign::Plus)?;
    let minus = plus.twin();
    Ok(Some(AdversarialPair {
        plus,
        minus,
        direction,
        margin,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndistinguishabilityReport {
    pub rows: usize,
    pub digest_plus: String,
    pub digest_minus: String,
    pub identical: bool,
}

/// Collect the design against both instances and compare the revealed
/// bytes. No tolerance: the pair is only valid if the two datasets are
/// the same string.
pub fn verify_indistinguishable(
    pair: &AdversarialPair,
    queries: &QuerySet,
) -> Result<(Dataset, IndistinguishabilityReport)> {
    let data_plus = collect(&pair.plus, queries)?;
    let data_minus = collect(&pair.minus, queries)?;
    let json_plus = data_plus.canonical_json();
    let json_minus = data_minus.canonical_json();
    let report = IndistinguishabilityReport {
        rows: data_plus.rows.len(),
        digest_plus: util::sha256_hex(json_plus.as_bytes()),
        digest_minus: util::sha256_hex(json_minus.as_bytes()),
        identical: json_plus == json_minus,
    };
    Ok((data_plus, report))
}

/// The floor any answer's worst-pair score must exceed, by task:
///
/// - evaluation: the two hidden parameters sit at distance 2, so one of
///   them is at least 1 away from any answer;
/// - identification, full action set: the optimal values are 1 and the
///   answer's start action scores nonpositively against one sign;
/// - identification, signed-axis actions: the best axis aligns at least
///   1/sqrt(d) with the direction, and the answer's axis scores
///   nonpositively against one sign;
/// - identification, distinguished-action family: the optimal values are
///   1 and 1/2, and any start action forfeits 1/2 against one of them.
pub fn forced_error_bound(class: &ClassSpec, task: Task) -> Result<f64> {
    match (class.family, task) {
        (Family::BpiOrthant, Task::Evaluate) => Err(Error::AnswerKind(
            "the identification family has no evaluation task".into(),
        )),
        (_, Task::Evaluate) => Ok(1.0),
        (Family::BpiOrthant, Task::Identify) => Ok(0.5),
        (Family::PolicyFree, Task::Identify) if class.action_mode == ActionMode::SmallE => {
            Ok(1.0 / (class.d as f64).sqrt())
        }
        (_, Task::Identify) => Ok(1.0),
    }
}

/// Worst score of one answer across the pair.
pub fn forced_error(pair: &AdversarialPair, task: Task, theta_hat: &Vector) -> Result<(f64, f64)> {
    let e_plus = score(&pair.plus, task, theta_hat)?;
    let e_minus = score(&pair.minus, task, theta_hat)?;
    Ok((e_plus, e_minus))
}

/// A pair (state, action) at which the two instances' correct answers are
/// far apart; where the forfeited value shows up.
pub fn witness_pair(pair: &AdversarialPair, task: Task) -> (State, Action) {
    let class = pair.plus.class();
    let w = &pair.direction;
    match (class.family, task, class.action_mode) {
        (Family::OpeBall, _, _) => (State::point(Vector::zeros(class.d)), Action::point(w.clone())),
        (Family::BpiOrthant, _, _) => (State::Start, Action::point(w.clone())),
        (Family::PolicyFree, Task::Identify, ActionMode::SmallE) => {
            let best = ClassSpec::small_actions(class.d)
                .into_iter()
                .max_by(|a, b| a.dot(w).partial_cmp(&b.dot(w)).unwrap())
                .expect("axis set is nonempty");
            (State::Start, Action::point(best))
        }
        (Family::PolicyFree, _, ActionMode::Continuous) => (State::Start, Action::point(w.clone())),
        (Family::PolicyFree, Task::Evaluate, ActionMode::SmallE) => {
            (State::point(w.clone()), Action::point(w.clone()))
        }
    }
}

/// Full record of one defeat: the design, the hiding direction, byte-equal
/// dataset digests, the answer produced from the shared dataset, and its
/// scores against both instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefeatCertificate {
    pub class: ClassSpec,
    pub task: Task,
    pub design_rows: usize,
    pub charged_queries: usize,
    #[serde(with = "util::serde_vector")]
    pub lonely_direction: Vector,
    pub margin: f64,
    pub digest_plus: String,
    pub digest_minus: String,
    pub datasets_identical: bool,
    pub witness_state: State,
    pub witness_action: Action,
    #[serde(with = "util::serde_vector")]
    pub answer: Vector,
    pub error_plus: f64,
    pub error_minus: f64,
    pub forced_error: f64,
    pub bound: f64,
    pub bound_met: bool,
}

/// Run the whole argument against one answering rule. `answer` sees the
/// shared dataset plus, on evaluation tasks, the target policy it is asked
/// to evaluate; that policy is task input and is the same function for
/// both hidden instances. Returns None when no hiding direction was found
/// (the design may be dense enough to cover every cap).
pub fn defeat<F>(
    class: &ClassSpec,
    task: Task,
    queries: &QuerySet,
    answer: F,
) -> Result<Option<DefeatCertificate>>
where
    F: FnOnce(&Dataset, Option<&crate::mdp::Policy>) -> Result<Vector>,
{
    let bound = forced_error_bound(class, task)?;
    let Some(pair) = adversarial_pair(class, queries)? else {
        return Ok(None);
    };
    let (shared, report) = verify_indistinguishable(&pair, queries)?;
    let pi = match task {
        Task::Evaluate => Some(pair.plus.target_policy()?),
        Task::Identify => None,
    };
    let theta_hat = answer(&shared, pi.as_ref())?;
    let (error_plus, error_minus) = forced_error(&pair, task, &theta_hat)?;
    let forced = error_plus.max(error_minus);
    let (witness_state, witness_action) = witness_pair(&pair, task);
    Ok(Some(DefeatCertificate {
        class: class.clone(),
        task,
        design_rows: queries.len(),
        charged_queries: queries.charged(class),
        lonely_direction: pair.direction.clone(),
        margin: pair.margin,
        digest_plus: report.digest_plus,
        digest_minus: report.digest_minus,
        datasets_identical: report.identical,
        witness_state,
        witness_action,
        answer: theta_hat,
        error_plus,
        error_minus,
        forced_error: forced,
        bound,
        bound_met: report.identical && forced >= bound - 1e-12,
    }))
}

/// Standard batch designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    /// The d coordinate axes.
    Canonical,
    /// Columns of a random rotation (folded to the orthant where needed).
    Orthonormal,
    /// Uniform ball points, capped below the guaranteed-defeat threshold.
    RandomBall,
}

/// Build a design of the given kind. `n` requests a size for the random
/// ball design and is capped so a hiding direction provably exists; the
/// other kinds always use d points. The distinguished-action family also
/// gets its distinguished arm queried.
pub fn doe_design(class: &ClassSpec, kind: DesignKind, n: usize, seed: u64) -> Result<QuerySet> {
    let d = class.d;
    let mut rng = sampling::rng_from_seed(seed);
    let points: Vec<Vector> = match kind {
        DesignKind::Canonical => (0..d).map(|i| util::canonical_basis(d, i)).collect(),
        DesignKind::Orthonormal => {
            let gauss = crate::Matrix::from_fn(d, d, |_, _| {
                rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
            });
            let q = gauss.qr().q();
            (0..d)
                .map(|j| {
                    let col = q.column(j).into_owned();
                    match class.family {
                        Family::BpiOrthant => col.abs(),
                        _ => col,
                    }
                })
                .collect()
        }
        DesignKind::RandomBall => {
            let threshold = guaranteed_defeat_threshold(class)?;
            let max_n = (threshold.ceil() as usize).saturating_sub(1);
            let n_eff = n.min(max_n);
            (0..n_eff)
                .map(|_| match class.family {
                    Family::BpiOrthant => sampling::unit_ball_orthant(d, &mut rng),
                    _ => sampling::unit_ball(d, &mut rng),
                })
                .collect()
        }
    };
    let mut qs = QuerySet::from_actions(class, &points);
    if class.family == Family::BpiOrthant {
        qs = qs.with_pair(State::Start, Action::Special);
    }
    Ok(qs)
}
