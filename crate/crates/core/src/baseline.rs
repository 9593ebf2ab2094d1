//! Least-squares baselines: the learners a batch dataset would actually be
//! fed to. They see the class and the revealed rows, never the instance.
//!
//! Both solvers reduce to the effective linear system
//! (Phi - gamma Phi_next) theta = r, where Phi_next collects expected
//! successor features under a successor rule. Rank analysis of that system
//! is how a dataset visibly fails to pin the parameter down: the hidden
//! direction sits in its nullspace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::ClassSpec;
use crate::mdp::{Policy, TransitionLaw};
use crate::protocol::DataRow;
use crate::{Matrix, Vector};

/// Relative singular-value cutoff for rank decisions and pseudoinverse
/// solves.
pub const RANK_CUTOFF: f64 = 1e-8;

const LSVI_MAX_ITERS: usize = 50;
const LSVI_FIXED_POINT_TOL: f64 = 1e-12;

/// How successor features are chosen when building the system.
pub enum SuccessorRule<'a> {
    /// Evaluate a fixed, known policy.
    Policy(&'a Policy),
    /// Follow the greedy action of the current parameter iterate.
    Greedy(&'a Vector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSystem {
    /// n x m matrix of rows phi(s, a)' - gamma E[phi(s', a')]'.
    pub a: Matrix,
    /// Revealed rewards.
    pub b: Vector,
}

fn expected_successor_features(
    class: &ClassSpec,
    law: &TransitionLaw,
    rule: &SuccessorRule,
) -> Vector {
    let m = class.feature_dim();
    let mut phi = Vector::zeros(m);
    for (s_next, p) in law.outcomes() {
        let a_next = match rule {
            SuccessorRule::Policy(pi) => pi.act(s_next),
            SuccessorRule::Greedy(theta) => class.greedy_action(s_next, theta),
        };
        phi += class.features(s_next, &a_next) * *p;
    }
    phi
}

pub fn build_effective_system(
    class: &ClassSpec,
    rows: &[DataRow],
    rule: &SuccessorRule,
) -> EffectiveSystem {
    let m = class.feature_dim();
    let n = rows.len();
    let mut a = Matrix::zeros(n, m);
    let mut b = Vector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let phi = class.features(&row.state, &row.action);
        let phi_next = expected_successor_features(class, &row.law, rule);
        a.row_mut(i).copy_from(&(phi - phi_next * class.gamma).transpose());
        b[i] = row.reward;
    }
    EffectiveSystem { a, b }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub nullity: usize,
    pub singular_values: Vec<f64>,
    /// Orthonormal nullspace basis, one column per deficient direction.
    #[serde(skip)]
    pub nullspace: Matrix,
}

/// Rows never span more than their count, so a short-and-wide system is
/// padded with zero rows; the padded SVD then carries a complete right
/// basis and every nullspace direction is recovered, not just the first
/// few.
fn padded(a: &Matrix) -> Matrix {
    let (n, m) = a.shape();
    if n >= m {
        return a.clone();
    }
    let mut out = Matrix::zeros(m, m);
    out.rows_mut(0, n).copy_from(a);
    out
}

pub fn analyze_rank(system: &EffectiveSystem, rel_cutoff: f64) -> RankReport {
    let (rows, cols) = system.a.shape();
    let svd = padded(&system.a).svd(true, true);
    let v_t = svd.v_t.as_ref().expect("svd requested v");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rel_cutoff * sigma_max;
    let kept: Vec<bool> = svd
        .singular_values
        .iter()
        .map(|&s| sigma_max > 0.0 && s > cutoff)
        .collect();
    let rank = kept.iter().filter(|&&k| k).count();
    let nullity = cols - rank;
    let mut nullspace = Matrix::zeros(cols, nullity);
    let mut j = 0;
    for (i, &keep) in kept.iter().enumerate() {
        if !keep {
            nullspace.column_mut(j).copy_from(&v_t.row(i).transpose());
            j += 1;
        }
    }
    // Rows of v_t beyond the singular-value list (none after padding, but
    // keep the invariant explicit).
    debug_assert_eq!(j, nullity);
    RankReport {
        rows,
        cols,
        rank,
        nullity,
        singular_values: svd.singular_values.iter().cloned().collect(),
        nullspace,
    }
}

/// Minimum-norm least-squares solution of the effective system.
pub fn min_norm_solve(system: &EffectiveSystem, rel_cutoff: f64) -> Vector {
    let a = padded(&system.a);
    let mut b = Vector::zeros(a.nrows());
    b.rows_mut(0, system.b.len()).copy_from(&system.b);
    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    if sigma_max == 0.0 {
        return Vector::zeros(system.a.ncols());
    }
    svd.solve(&b, rel_cutoff * sigma_max)
        .expect("svd solve with both factors")
}

/// Evaluate a known policy from batch rows: one shot of least squares on
/// the policy-successor system.
pub fn lstd_evaluate(class: &ClassSpec, rows: &[DataRow], pi: &Policy) -> Result<Vector> {
    if rows.is_empty() {
        return Err(Error::Domain("empty dataset".into()));
    }
    let system = build_effective_system(class, rows, &SuccessorRule::Policy(pi));
    Ok(min_norm_solve(&system, RANK_CUTOFF))
}

/// Identify from batch rows: iterate greedy-successor least squares to a
/// fixed point. The exact parameter is always a fixed point; on deficient
/// data the iteration settles on the minimum-norm survivor instead.
pub fn lsvi_identify(class: &ClassSpec, rows: &[DataRow]) -> Result<Vector> {
    if rows.is_empty() {
        return Err(Error::Domain("empty dataset".into()));
    }
    let mut theta = Vector::zeros(class.feature_dim());
    for _ in 0..LSVI_MAX_ITERS {
        let system = build_effective_system(class, rows, &SuccessorRule::Greedy(&theta));
        let next = min_norm_solve(&system, RANK_CUTOFF);
        let delta = (&next - &theta).norm();
        theta = next;
        if delta <= LSVI_FIXED_POINT_TOL {
            return Ok(theta);
        }
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{adversarial_pair, doe_design, DesignKind};
    use crate::instances::{ActionMode, Family, MdpInstance, Sign};
    use crate::mdp::Mdp;
    use crate::online::{solve_bpi_online, EnvHandle};
    use crate::protocol::{collect, identification_gap, QuerySet};
    use crate::sampling;
    use crate::util;
    use approx::assert_relative_eq;

    fn unit(v: Vec<f64>) -> Vector {
        let v = Vector::from_vec(v);
        let n = v.norm();
        v / n
    }

    #[test]
    fn planar_defeated_system_has_the_known_shape() {
        // Two symmetric probes against the hidden axis direction: the
        // policy-successor rows are (0, 0.6) and (0, -0.6), rank one, and
        // the hidden axis spans the nullspace.
        let w = util::canonical_basis(2, 0);
        let inst = MdpInstance::new(
            Family::OpeBall,
            w.clone(),
            Sign::Plus,
            0.9,
            2,
            ActionMode::Continuous,
        )
        .unwrap();
        let actions = vec![
            Vector::from_vec(vec![0.6, 0.6]),
            Vector::from_vec(vec![0.6, -0.6]),
        ];
        let qs = QuerySet::from_actions(inst.class(), &actions);
        let data = collect(&inst, &qs).unwrap();
        let pi = inst.target_policy().unwrap();
        let system = build_effective_system(inst.class(), &data.rows, &SuccessorRule::Policy(&pi));

        let expected = Matrix::from_row_slice(2, 2, &[0.0, 0.6, 0.0, -0.6]);
        assert_relative_eq!(system.a, expected, epsilon = 1e-12);
        assert_relative_eq!(system.b, Vector::zeros(2), epsilon = 1e-15);

        let report = analyze_rank(&system, RANK_CUTOFF);
        assert_eq!((report.rank, report.nullity), (1, 1));
        assert_relative_eq!(report.nullspace.column(0)[0].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.nullspace.column(0)[1].abs(), 0.0, epsilon = 1e-12);

        // Both hidden parameters solve the shared system exactly.
        for theta in [w.clone(), -w.clone()] {
            let residual = (&system.a * theta - &system.b).norm();
            assert!(residual <= 1e-9);
        }
        // And the minimum-norm answer is the useless zero vector.
        let theta_hat = min_norm_solve(&system, RANK_CUTOFF);
        assert_relative_eq!(theta_hat.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn short_wide_systems_report_every_deficient_direction() {
        // One row in five dimensions: nullity must be 4, which requires the
        // padded decomposition.
        let a = Matrix::from_row_slice(1, 5, &[1.0, 0.0, 0.0, 0.0, 0.0]);
        let system = EffectiveSystem {
            a,
            b: Vector::from_vec(vec![2.0]),
        };
        let report = analyze_rank(&system, RANK_CUTOFF);
        assert_eq!((report.rank, report.nullity), (1, 4));
        assert_eq!(report.nullspace.ncols(), 4);
        // Basis is orthonormal and orthogonal to the row.
        for j in 0..4 {
            assert_relative_eq!(report.nullspace.column(j).norm(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(report.nullspace.column(j)[0], 0.0, epsilon = 1e-12);
        }
        let theta = min_norm_solve(&system, RANK_CUTOFF);
        assert_relative_eq!(theta, Vector::from_vec(vec![2.0, 0.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn evaluation_baseline_recovers_from_informative_data() {
        // Probe the caps directly: with in-cap rows the system pins the
        // parameter exactly.
        let w = unit(vec![1.0, 2.0, -1.0]);
        let inst = MdpInstance::new(
            Family::OpeBall,
            w.clone(),
            Sign::Minus,
            0.9,
            3,
            ActionMode::Continuous,
        )
        .unwrap();
        let mut rng = sampling::rng_from_seed(41);
        let mut actions: Vec<Vector> = (0..6).map(|_| sampling::unit_ball(3, &mut rng)).collect();
        actions.push(w.clone());
        let qs = QuerySet::from_actions(inst.class(), &actions);
        let data = collect(&inst, &qs).unwrap();
        let pi = inst.target_policy().unwrap();
        let theta_hat = lstd_evaluate(inst.class(), &data.rows, &pi).unwrap();
        assert!((theta_hat - inst.closed_form_theta().theta).norm() <= 1e-9);
    }

    #[test]
    fn identification_baseline_recovers_from_online_transcripts() {
        let mut rng = sampling::rng_from_seed(42);
        for _ in 0..5 {
            let inst = MdpInstance::sample_random(
                Family::BpiOrthant,
                0.9,
                4,
                ActionMode::Continuous,
                &mut rng,
            )
            .unwrap();
            let mut env = EnvHandle::new(inst.clone());
            solve_bpi_online(&mut env).unwrap();
            // Feed the adaptive transcript, plus the distinguished arm the
            // batch learner would also query, to the batch solver.
            let mut rows = env.into_dataset().rows;
            rows.push(crate::protocol::DataRow {
                state: crate::mdp::State::Start,
                action: crate::mdp::Action::Special,
                reward: inst.reward(&crate::mdp::State::Start, &crate::mdp::Action::Special),
                law: inst.transition(&crate::mdp::State::Start, &crate::mdp::Action::Special),
            });
            let theta_hat = lsvi_identify(inst.class(), &rows).unwrap();
            let gap = identification_gap(&inst, &theta_hat).unwrap();
            assert!(gap.abs() <= 1e-9, "gap {gap}");
        }
    }

    #[test]
    fn baselines_fall_at_the_forced_error_on_defeated_designs() {
        // Evaluation family.
        let class = ClassSpec::new(Family::OpeBall, 0.9, 4).unwrap();
        let qs = doe_design(&class, DesignKind::Canonical, 0, 43).unwrap();
        let pair = adversarial_pair(&class, &qs).unwrap().unwrap();
        let data = collect(&pair.plus, &qs).unwrap();
        let pi = pair.plus.target_policy().unwrap();
        let theta_hat = lstd_evaluate(&class, &data.rows, &pi).unwrap();
        assert_relative_eq!(theta_hat.norm(), 0.0, epsilon = 1e-9);
        let e_plus = crate::protocol::evaluation_error(&pair.plus, &theta_hat).unwrap();
        let e_minus = crate::protocol::evaluation_error(&pair.minus, &theta_hat).unwrap();
        assert!(e_plus.max(e_minus) >= 1.0 - 1e-12);

        // Identification family: the safe arm looks best on shared data.
        let class = ClassSpec::new(Family::BpiOrthant, 0.9, 4).unwrap();
        let qs = doe_design(&class, DesignKind::Canonical, 0, 44).unwrap();
        let pair = adversarial_pair(&class, &qs).unwrap().unwrap();
        let data = collect(&pair.plus, &qs).unwrap();
        let theta_hat = lsvi_identify(&class, &data.rows).unwrap();
        let gap_plus = identification_gap(&pair.plus, &theta_hat).unwrap();
        let gap_minus = identification_gap(&pair.minus, &theta_hat).unwrap();
        assert!(gap_plus.max(gap_minus) >= 0.5 - 1e-12);
    }

    #[test]
    fn lsvi_tie_break_prefers_the_distinguished_arm() {
        // On a dataset whose rows say nothing about the ball arms, the
        // iteration must settle on the safe answer, not oscillate.
        let w = unit(vec![1.0, 1.0]);
        let inst = MdpInstance::new(
            Family::BpiOrthant,
            w,
            Sign::Minus,
            0.9,
            2,
            ActionMode::Continuous,
        )
        .unwrap();
        let qs = QuerySet::new(vec![(
            crate::mdp::State::Start,
            crate::mdp::Action::Special,
        )]);
        let data = collect(&inst, &qs).unwrap();
        let theta_hat = lsvi_identify(inst.class(), &data.rows).unwrap();
        assert_relative_eq!(
            theta_hat,
            Vector::from_vec(vec![0.0, 0.0, 0.5]),
            epsilon = 1e-12
        );
        let gap = identification_gap(&inst, &theta_hat).unwrap();
        assert!(gap.abs() <= 1e-9);
    }

    #[test]
    fn empty_rows_are_rejected() {
        let class = ClassSpec::new(Family::OpeBall, 0.9, 2).unwrap();
        let pi = class.fixed_target_policy();
        assert!(lstd_evaluate(&class, &[], &pi).is_err());
        assert!(lsvi_identify(&class, &[]).is_err());
    }
}
