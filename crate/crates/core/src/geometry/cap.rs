//! Spherical caps and sectors of the unit ball, their volumes, and the
//! cap-count quantities that control how many exact queries a sampling
//! oracle needs before no direction is left uncovered.

use serde::{Deserialize, Serialize};

use super::special::{ln_gamma, reg_inc_beta_xab};
use crate::error::{Error, Result};
use crate::util::{self, NORM_SLACK};
use crate::Vector;

/// Cap C_b(w) = { x in B : x'w >= b } for a unit direction w and height b.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalCap {
    direction: Vector,
    height: f64,
}

impl SphericalCap {
    pub fn new(direction: Vector, height: f64) -> Result<Self> {
        util::require_unit(&direction, "cap direction")?;
        if !(0.0..=1.0).contains(&height) {
            return Err(Error::Domain(format!(
                "cap height must lie in [0, 1], got {height}"
            )));
        }
        Ok(Self { direction, height })
    }

    pub fn direction(&self) -> &Vector {
        &self.direction
    }

    pub fn height(&self) -> f64 {
        self.height
    }
}

/// Membership in the (closed) cap: x'w >= b. Errors if x lies outside the ball.
pub fn in_cap(x: &Vector, cap: &SphericalCap) -> Result<bool> {
    require_in_ball(x)?;
    Ok(x.dot(&cap.direction) >= cap.height)
}

/// Membership in the sector C^tri_b(w) = { x in B : x'w >= b ||x|| }.
/// The origin belongs to the sector only when b = 0.
pub fn in_sector(x: &Vector, cap: &SphericalCap) -> Result<bool> {
    require_in_ball(x)?;
    Ok(x.dot(&cap.direction) >= cap.height * x.norm() && (cap.height == 0.0 || x.norm() > 0.0))
}

fn require_in_ball(x: &Vector) -> Result<()> {
    if x.norm() > 1.0 + NORM_SLACK {
        return Err(Error::Domain(format!(
            "point lies outside the unit ball: norm {}",
            x.norm()
        )));
    }
    Ok(())
}

/// Volume of the d-dimensional unit ball: pi^(d/2) / Gamma(d/2 + 1).
pub fn ball_volume(d: usize) -> f64 {
    assert!(d >= 1, "dimension must be positive");
    let half_d = d as f64 / 2.0;
    (half_d * std::f64::consts::PI.ln() - ln_gamma(half_d + 1.0)).exp()
}

/// Volume of the sector at height b in dimension d:
/// (Vol(B)/2) * I_{1-b^2}((d-1)/2, 1/2).
pub fn sector_volume(b: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain("sector volume needs d >= 2".into()));
    }
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::Domain(format!(
            "sector height must lie in [0, 1], got {b}"
        )));
    }
    let i = reg_inc_beta_xab(1.0 - b * b, (d as f64 - 1.0) / 2.0, 0.5)?;
    Ok(ball_volume(d) / 2.0 * i)
}

/// How many height-gamma sectors fit into the unit ball by volume, and the
/// derived threshold the lonely-cap search compares sample sizes against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapCount {
    pub gamma: f64,
    pub d: usize,
    /// Vol(B) / Vol(sector) = 2 / I_{1-gamma^2}((d-1)/2, 1/2).
    pub sector_ratio: f64,
    /// Half the sector ratio: 1 / I_{1-gamma^2}((d-1)/2, 1/2). Query sets
    /// smaller than this leave some symmetric cap pair unvisited.
    pub threshold: f64,
}

pub fn cap_count(gamma: f64, d: usize) -> Result<CapCount> {
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::Domain(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if d < 2 {
        return Err(Error::Domain("cap count needs d >= 2".into()));
    }
    let i = reg_inc_beta_xab(1.0 - gamma * gamma, (d as f64 - 1.0) / 2.0, 0.5)?;
    if i == 0.0 {
        return Err(Error::Numerical(
            "sector fraction underflowed to zero".into(),
        ));
    }
    Ok(CapCount {
        gamma,
        d,
        sector_ratio: 2.0 / i,
        threshold: 1.0 / i,
    })
}

/// One bound with its numeric value and whether the checked inequality holds.
/// `None` in the report means the bound's validity range excludes this d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound: f64,
    pub holds: bool,
}

/// Closed-form envelope checks on the sector fraction and the cap count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub gamma: f64,
    pub d: usize,
    /// I_{1-gamma^2}((d-1)/2, 1/2).
    pub i_value: f64,
    /// Threshold 1 / i_value.
    pub threshold: f64,
    /// i_value <= (1/gamma) (2/(d-1)) (1-gamma^2)^((d-1)/2) sqrt(d/(2 pi)); d >= 3.
    pub upper: Option<BoundCheck>,
    /// threshold >= gamma sqrt(d) ((1/2) / (1-gamma))^((d-1)/2); d >= 5.
    pub lower_full: Option<BoundCheck>,
    /// 2^-d threshold >= gamma sqrt(d) ((1/2)^3.5 / (1-gamma))^((d-1)/2); d >= 5.
    pub lower_scaled: Option<BoundCheck>,
    /// Variant with exponent 2.5 instead of 3.5. Reported for comparison but
    /// never gates `all_hold`: it is numerically false at small d and gamma
    /// (e.g. gamma = 0.5, d = 5).
    pub lower_scaled_alt: Option<BoundCheck>,
    /// Conjunction of every applicable gating bound (upper, full, scaled).
    pub all_hold: bool,
}

pub fn bounds_check(gamma: f64, d: usize) -> Result<BoundsReport> {
    let count = cap_count(gamma, d)?;
    let i_value = 2.0 / count.sector_ratio;
    let threshold = count.threshold;
    let df = d as f64;
    let half_exp = (df - 1.0) / 2.0;

    let upper = (d >= 3).then(|| {
        let bound = (1.0 / gamma)
            * (2.0 / (df - 1.0))
            * (1.0 - gamma * gamma).powf(half_exp)
            * (df / (2.0 * std::f64::consts::PI)).sqrt();
        BoundCheck {
            bound,
            holds: i_value <= bound,
        }
    });

    let lower_full = (d >= 5).then(|| {
        let bound = gamma * df.sqrt() * (0.5 / (1.0 - gamma)).powf(half_exp);
        BoundCheck {
            bound,
            holds: threshold >= bound,
        }
    });

    let scaled_threshold = 0.5_f64.powi(d as i32) * threshold;
    let lower_scaled = (d >= 5).then(|| {
        let bound = gamma * df.sqrt() * (0.5_f64.powf(3.5) / (1.0 - gamma)).powf(half_exp);
        BoundCheck {
            bound,
            holds: scaled_threshold >= bound,
        }
    });
    let lower_scaled_alt = (d >= 5).then(|| {
        let bound = gamma * df.sqrt() * (0.5_f64.powf(2.5) / (1.0 - gamma)).powf(half_exp);
        BoundCheck {
            bound,
            holds: scaled_threshold >= bound,
        }
    });

    let all_hold = [upper, lower_full, lower_scaled]
        .iter()
        .all(|c| c.map_or(true, |c| c.holds));

    Ok(BoundsReport {
        gamma,
        d,
        i_value,
        threshold,
        upper,
        lower_full,
        lower_scaled,
        lower_scaled_alt,
        all_hold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::canonical_basis;
    use approx::assert_relative_eq;

    #[test]
    fn planar_cap_count_is_two() {
        // gamma = 1/sqrt(2) in the plane: I_{1/2}(1/2, 1/2) = 1/2.
        let c = cap_count(std::f64::consts::FRAC_1_SQRT_2, 2).unwrap();
        assert_relative_eq!(c.threshold, 2.0, max_relative = 1e-10);
        assert_relative_eq!(c.sector_ratio, 4.0, max_relative = 1e-10);
    }

    #[test]
    fn sector_ratio_is_twice_threshold() {
        for &(g, d) in &[(0.5, 3), (0.9, 5), (0.99, 9), (0.7, 17)] {
            let c = cap_count(g, d).unwrap();
            assert_relative_eq!(c.sector_ratio, 2.0 * c.threshold, max_relative = 1e-14);
        }
    }

    #[test]
    fn high_gamma_count_explodes() {
        let c = cap_count(0.99, 9).unwrap();
        assert!(c.threshold > 1.0e6);
    }

    #[test]
    fn ball_volumes_match_closed_forms() {
        assert_relative_eq!(ball_volume(1), 2.0, max_relative = 1e-12);
        assert_relative_eq!(ball_volume(2), std::f64::consts::PI, max_relative = 1e-12);
        assert_relative_eq!(
            ball_volume(3),
            4.0 / 3.0 * std::f64::consts::PI,
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_height_sector_is_half_ball() {
        for d in 2..=6 {
            assert_relative_eq!(
                sector_volume(0.0, d).unwrap(),
                ball_volume(d) / 2.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn planar_sector_is_an_angle_fraction() {
        // Height b in the plane spans a wedge of angle 2*acos(b), area acos(b).
        let b = 0.5_f64;
        assert_relative_eq!(sector_volume(b, 2).unwrap(), b.acos(), max_relative = 1e-10);
    }

    #[test]
    fn cap_membership_boundary_is_closed() {
        let w = canonical_basis(3, 0);
        let cap = SphericalCap::new(w.clone(), 0.9).unwrap();
        let boundary = Vector::from_vec(vec![0.9, 0.0, 0.0]);
        assert!(in_cap(&boundary, &cap).unwrap());
        assert!(in_cap(&w, &cap).unwrap());
        let orth = canonical_basis(3, 1);
        assert!(!in_cap(&orth, &cap).unwrap());
    }

    #[test]
    fn sector_scales_with_norm_cap_does_not() {
        let w = canonical_basis(2, 0);
        let cap = SphericalCap::new(w, 0.9).unwrap();
        // Small multiple of the direction: in the sector, not in the cap.
        let x = Vector::from_vec(vec![0.1, 0.0]);
        assert!(!in_cap(&x, &cap).unwrap());
        assert!(in_sector(&x, &cap).unwrap());
        // Origin is in neither (height > 0).
        let zero = Vector::zeros(2);
        assert!(!in_sector(&zero, &cap).unwrap());
    }

    #[test]
    fn out_of_ball_points_are_rejected() {
        let cap = SphericalCap::new(canonical_basis(2, 0), 0.5).unwrap();
        let far = Vector::from_vec(vec![2.0, 0.0]);
        assert!(in_cap(&far, &cap).is_err());
        assert!(in_sector(&far, &cap).is_err());
    }

    #[test]
    fn cap_constructor_validates() {
        assert!(SphericalCap::new(Vector::from_vec(vec![2.0, 0.0]), 0.5).is_err());
        assert!(SphericalCap::new(canonical_basis(2, 0), 1.5).is_err());
        assert!(SphericalCap::new(canonical_basis(2, 0), -0.1).is_err());
    }

    #[test]
    fn bounds_hold_inside_validity_range() {
        let rep = bounds_check(0.9, 5).unwrap();
        assert!(rep.upper.unwrap().holds);
        assert!(rep.lower_full.unwrap().holds);
        assert!(rep.lower_scaled.unwrap().holds);
        assert!(rep.all_hold);

        let rep = bounds_check(0.99, 15).unwrap();
        assert!(rep.all_hold);
    }

    #[test]
    fn small_d_marks_lower_bounds_inapplicable() {
        let rep = bounds_check(0.5, 3).unwrap();
        assert!(rep.upper.unwrap().holds);
        assert!(rep.lower_full.is_none());
        assert!(rep.lower_scaled.is_none());
        assert!(rep.all_hold);
    }

    #[test]
    fn alt_scaled_variant_fails_where_expected() {
        // The 2.5-exponent variant is strictly stronger and false here.
        let rep = bounds_check(0.5, 5).unwrap();
        assert!(rep.lower_scaled.unwrap().holds);
        assert!(!rep.lower_scaled_alt.unwrap().holds);
        assert!(rep.all_hold);
    }

    #[test]
    fn threshold_matches_quadrature_cross_check() {
        // Independent route for (gamma, d) = (0.9, 5): numerically integrate
        // the sector fraction I_{0.19}(2, 1/2) = 0.0145 (antiderivative value).
        let c = cap_count(0.9, 5).unwrap();
        assert_relative_eq!(1.0 / c.threshold, 0.0145, max_relative = 1e-10);
    }
}
