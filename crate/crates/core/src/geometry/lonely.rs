//! Constructive search for a "lonely" cap: a direction whose height-gamma
//! cap contains none of a given set of points. Existence below the volume
//! thresholds is what forces errors on any batch learner; this module finds
//! an explicit witness direction and certifies it before returning.

use super::cap::{in_cap, SphericalCap};
use crate::error::{Error, Result};
use crate::sampling;
use crate::util::{self, NORM_SLACK};
use crate::Vector;

/// Which cap pattern must be empty of points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LonelyMode {
    /// C_gamma(w) contains no point.
    Single,
    /// Neither C_gamma(w) nor C_gamma(-w) contains a point.
    SymmetricPair,
    /// C_gamma(w) contains no point and w has strictly positive coordinates.
    PositiveOrthant,
}

/// Search configuration. The budget counts every candidate direction
/// examined, across restarts and ascent iterates.
#[derive(Debug, Clone, Copy)]
pub struct LonelySearch {
    pub budget: usize,
    pub seed: u64,
}

impl Default for LonelySearch {
    fn default() -> Self {
        Self {
            budget: 10_000,
            seed: 0x1085_CA95,
        }
    }
}

/// Coordinate floor applied in positive-orthant mode so returned directions
/// make valid all-positive instance parameters.
const ORTHANT_FLOOR: f64 = 1e-6;
const MAX_ASCENT_STEPS: usize = 60;

pub fn find_lonely_cap(
    points: &[Vector],
    gamma: f64,
    d: usize,
    mode: LonelyMode,
) -> Result<Option<Vector>> {
    find_lonely_cap_with(points, gamma, d, mode, &LonelySearch::default())
}

/// Multi-start projected subgradient ascent on the margin
/// gamma - max_i y_i'w, interleaved with rejection sampling. Returns a
/// direction only after explicit cap-membership certification.
pub fn find_lonely_cap_with(
    points: &[Vector],
    gamma: f64,
    d: usize,
    mode: LonelyMode,
    search: &LonelySearch,
) -> Result<Option<Vector>> {
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::Domain(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if d < 2 {
        return Err(Error::Domain("lonely-cap search needs d >= 2".into()));
    }
    for y in points {
        if y.len() != d {
            return Err(Error::Domain(format!(
                "point dimension {} does not match d = {d}",
                y.len()
            )));
        }
        if y.norm() > 1.0 + NORM_SLACK {
            return Err(Error::Domain(format!(
                "point outside the unit ball: norm {}",
                y.norm()
            )));
        }
        if mode == LonelyMode::PositiveOrthant && y.iter().any(|&x| x < -NORM_SLACK) {
            return Err(Error::Domain(
                "positive-orthant mode requires points in the nonnegative orthant".into(),
            ));
        }
    }

    // The symmetric-pair condition on points equals the single-cap condition
    // on the set augmented with its negations.
    let augmented: Vec<Vector>;
    let effective: &[Vector] = match mode {
        LonelyMode::SymmetricPair => {
            augmented = points
                .iter()
                .cloned()
                .chain(points.iter().map(|y| -y))
                .collect();
            &augmented
        }
        _ => points,
    };

    let mut rng = sampling::rng_from_seed(search.seed);
    let mut spent = 0usize;

    let mut starts: Vec<Vector> = Vec::new();
    match mode {
        LonelyMode::PositiveOrthant => {
            starts.push(project(&Vector::from_element(d, 1.0), mode));
        }
        _ => {
            starts.push(project(&Vector::from_element(d, 1.0), mode));
            for i in 0..d.min(6) {
                starts.push(util::canonical_basis(d, i));
            }
        }
    }

    let mut next_start = move |rng: &mut rand_chacha::ChaCha8Rng| -> Vector {
        if let Some(s) = starts.pop() {
            return s;
        }
        match mode {
            LonelyMode::PositiveOrthant => sampling::unit_sphere_positive(d, rng),
            _ => sampling::unit_sphere(d, rng),
        }
    };

    while spent < search.budget {
        let mut w = next_start(&mut rng);
        for _ in 0..MAX_ASCENT_STEPS {
            if spent >= search.budget {
                break;
            }
            spent += 1;
            let (worst, margin) = margin_of(effective, gamma, &w);
            if margin > 0.0 {
                if let Some(cert) = certify(points, gamma, &w, mode)? {
                    return Ok(Some(cert));
                }
                break;
            }
            let Some(worst) = worst else { break };
            // Step away from the deepest violating point.
            let step = (-margin + 0.05).min(1.0);
            let w_new = project(&(&w - worst * step), mode);
            if (&w_new - &w).norm() < 1e-14 {
                break;
            }
            w = w_new;
        }
    }
    Ok(None)
}

/// Margin gamma - max_i y_i'w and the maximizing point. Empty sets have
/// unbounded margin: any direction qualifies.
fn margin_of<'a>(points: &'a [Vector], gamma: f64, w: &Vector) -> (Option<&'a Vector>, f64) {
    let mut worst: Option<&Vector> = None;
    let mut max_dot = f64::NEG_INFINITY;
    for y in points {
        let dot = y.dot(w);
        if dot > max_dot {
            max_dot = dot;
            worst = Some(y);
        }
    }
    match worst {
        Some(y) => (Some(y), gamma - max_dot),
        None => (None, gamma + 1.0),
    }
}

fn project(w: &Vector, mode: LonelyMode) -> Vector {
    let v = match mode {
        LonelyMode::PositiveOrthant => w.map(|x| x.max(ORTHANT_FLOOR)),
        _ => w.clone(),
    };
    let n = v.norm();
    if n < 1e-12 {
        Vector::from_element(w.len(), 1.0 / (w.len() as f64).sqrt())
    } else {
        v / n
    }
}

/// Explicit membership re-check of the claimed direction against the
/// original points; returns the direction only if every check passes.
fn certify(points: &[Vector], gamma: f64, w: &Vector, mode: LonelyMode) -> Result<Option<Vector>> {
    let w = project(w, mode);
    if mode == LonelyMode::PositiveOrthant && w.iter().any(|&x| x <= 0.0) {
        return Ok(None);
    }
    let cap = SphericalCap::new(w.clone(), gamma)?;
    let neg_cap = SphericalCap::new(-w.clone(), gamma)?;
    for y in points {
        if in_cap(y, &cap)? {
            return Ok(None);
        }
        if mode == LonelyMode::SymmetricPair && in_cap(y, &neg_cap)? {
            return Ok(None);
        }
    }
    Ok(Some(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng_from_seed;

    fn assert_certified(points: &[Vector], gamma: f64, w: &Vector, mode: LonelyMode) {
        assert!((w.norm() - 1.0).abs() < 1e-12);
        let cap = SphericalCap::new(w.clone(), gamma).unwrap();
        for y in points {
            assert!(!in_cap(y, &cap).unwrap(), "point inside the returned cap");
            if mode == LonelyMode::SymmetricPair {
                let neg = SphericalCap::new(-w.clone(), gamma).unwrap();
                assert!(!in_cap(y, &neg).unwrap(), "point inside the mirror cap");
            }
        }
        if mode == LonelyMode::PositiveOrthant {
            assert!(w.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn empty_set_returns_any_unit_direction() {
        for mode in [
            LonelyMode::Single,
            LonelyMode::SymmetricPair,
            LonelyMode::PositiveOrthant,
        ] {
            let w = find_lonely_cap(&[], 0.9, 4, mode).unwrap().unwrap();
            assert_certified(&[], 0.9, &w, mode);
        }
    }

    #[test]
    fn single_point_in_plane() {
        let points = vec![util::canonical_basis(2, 0)];
        let w = find_lonely_cap(&points, 0.9, 2, LonelyMode::SymmetricPair)
            .unwrap()
            .unwrap();
        assert_certified(&points, 0.9, &w, LonelyMode::SymmetricPair);
    }

    #[test]
    fn random_points_in_three_dims() {
        let mut rng = rng_from_seed(11);
        let points: Vec<Vector> = (0..10).map(|_| sampling::unit_ball(3, &mut rng)).collect();
        let w = find_lonely_cap(&points, 0.95, 3, LonelyMode::SymmetricPair)
            .unwrap()
            .unwrap();
        assert_certified(&points, 0.95, &w, LonelyMode::SymmetricPair);
    }

    #[test]
    fn orthant_mode_handles_canonical_points() {
        let points: Vec<Vector> = (0..5).map(|i| util::canonical_basis(5, i)).collect();
        let w = find_lonely_cap(&points, 0.9, 5, LonelyMode::PositiveOrthant)
            .unwrap()
            .unwrap();
        assert_certified(&points, 0.9, &w, LonelyMode::PositiveOrthant);
    }

    #[test]
    fn dense_planar_cover_defeats_the_search() {
        // 24 unit directions every 15 degrees: every cap of height 0.5
        // (60-degree half-angle) contains one, and so does every mirror cap.
        let points: Vec<Vector> = (0..24)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 24.0;
                Vector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect();
        let got = find_lonely_cap_with(
            &points,
            0.5,
            2,
            LonelyMode::SymmetricPair,
            &LonelySearch {
                budget: 10_000,
                seed: 3,
            },
        )
        .unwrap();
        assert!(got.is_none());
    }

    #[test]
    fn symmetric_mode_equals_single_mode_on_augmented_set() {
        let mut rng = rng_from_seed(12);
        let points: Vec<Vector> = (0..8).map(|_| sampling::unit_ball(4, &mut rng)).collect();
        let w = find_lonely_cap(&points, 0.9, 4, LonelyMode::SymmetricPair)
            .unwrap()
            .unwrap();
        // The symmetric certificate is exactly the single-cap certificate on
        // the augmented set {y} U {-y}.
        let augmented: Vec<Vector> = points
            .iter()
            .cloned()
            .chain(points.iter().map(|y| -y))
            .collect();
        let cap = SphericalCap::new(w, 0.9).unwrap();
        for y in &augmented {
            assert!(!in_cap(y, &cap).unwrap());
        }
    }

    #[test]
    fn rejects_out_of_ball_points() {
        let points = vec![Vector::from_vec(vec![1.5, 0.0])];
        assert!(find_lonely_cap(&points, 0.9, 2, LonelyMode::Single).is_err());
    }

    #[test]
    fn rejects_negative_points_in_orthant_mode() {
        let points = vec![Vector::from_vec(vec![-0.5, 0.5])];
        assert!(find_lonely_cap(&points, 0.9, 2, LonelyMode::PositiveOrthant).is_err());
    }

    #[test]
    fn boundary_point_blocks_its_own_direction() {
        // A point exactly at height gamma sits in the closed cap, so its own
        // direction cannot be returned.
        let y = Vector::from_vec(vec![0.9, 0.0]);
        let points = vec![y];
        let w = find_lonely_cap(&points, 0.9, 2, LonelyMode::Single)
            .unwrap()
            .unwrap();
        assert!(points[0].dot(&w) < 0.9);
    }
}
