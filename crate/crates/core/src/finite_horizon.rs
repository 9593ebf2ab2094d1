//! Finite-horizon companion. Here realizability is time-indexed: each step
//! has its own parameter, rewards are built backward from the parameter
//! sequence, and a solver that sweeps the horizon with a full-rank design
//! recovers every parameter exactly from d queries per step. The contrast
//! with the stationary families is the point: adding a horizon index turns
//! the same linear structure from unlearnable to trivially learnable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling;
use crate::util::{self, NORM_SLACK};
use crate::{Matrix, Vector};

/// Parameter norms stay at or below this so every constructed reward lands
/// in [-1, 1].
pub const THETA_SCALE: f64 = 0.45;

/// Ball-action dynamics with per-step linear action values: the successor
/// of an action is the action itself, features are the action, and
/// Q_t(a) = a' theta_t with theta fixed per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteHorizonMdp {
    pub d: usize,
    pub horizon: usize,
    pub gamma: f64,
    thetas: Vec<Vec<f64>>,
}

impl FiniteHorizonMdp {
    pub fn new(d: usize, horizon: usize, gamma: f64, thetas: Vec<Vector>) -> Result<Self> {
        if d < 1 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if horizon < 1 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if !(0.0 < gamma && gamma <= 1.0) {
            return Err(Error::Domain(format!(
                "step discount must lie in (0, 1], got {gamma}"
            )));
        }
        if thetas.len() != horizon {
            return Err(Error::Domain(format!(
                "{} parameters for horizon {horizon}",
                thetas.len()
            )));
        }
        for (t, theta) in thetas.iter().enumerate() {
            if theta.len() != d {
                return Err(Error::Domain(format!(
                    "parameter at step {t} has dimension {}",
                    theta.len()
                )));
            }
            if theta.norm() > THETA_SCALE + NORM_SLACK {
                return Err(Error::Domain(format!(
                    "parameter at step {t} has norm {} > {THETA_SCALE}",
                    theta.norm()
                )));
            }
        }
        Ok(Self {
            d,
            horizon,
            gamma,
            thetas: thetas.into_iter().map(|v| v.as_slice().to_vec()).collect(),
        })
    }

    pub fn sample_random<R: Rng>(d: usize, horizon: usize, gamma: f64, rng: &mut R) -> Self {
        let thetas = (0..horizon)
            .map(|_| sampling::unit_ball(d, rng) * THETA_SCALE)
            .collect();
        Self::new(d, horizon, gamma, thetas).expect("sampled parameters are in range")
    }

    pub fn theta(&self, t: usize) -> Vector {
        Vector::from_vec(self.thetas[t].clone())
    }

    pub fn thetas(&self) -> Vec<Vector> {
        (0..self.horizon).map(|t| self.theta(t)).collect()
    }

    /// Optimal value over the ball at step t; zero past the horizon.
    pub fn optimal_value(&self, t: usize) -> f64 {
        if t < self.horizon {
            self.theta(t).norm()
        } else {
            0.0
        }
    }

    pub fn q_value(&self, t: usize, a: &Vector) -> Result<f64> {
        self.check_pair(t, a)?;
        Ok(a.dot(&self.theta(t)))
    }

    fn check_pair(&self, t: usize, a: &Vector) -> Result<()> {
        if t >= self.horizon {
            return Err(Error::IllegalQuery(format!(
                "step {t} is past the horizon {}",
                self.horizon
            )));
        }
        if a.len() != self.d || !util::in_unit_ball(a) {
            return Err(Error::IllegalQuery("action outside the unit ball".into()));
        }
        Ok(())
    }

    /// Rewards are defined backward from the parameter sequence so that
    /// each theta_t satisfies its one-step equation by construction:
    /// r_t(a) = a' theta_t - gamma * max_b b' theta_{t+1}.
    pub fn reward(&self, t: usize, a: &Vector) -> Result<f64> {
        self.check_pair(t, a)?;
        Ok(a.dot(&self.theta(t)) - self.gamma * self.optimal_value(t + 1))
    }
}

/// Query gate: reveals rewards only, counts every reveal.
pub struct FiniteHorizonEnv {
    mdp: FiniteHorizonMdp,
    queries: usize,
}

impl FiniteHorizonEnv {
    pub fn new(mdp: FiniteHorizonMdp) -> Self {
        Self { mdp, queries: 0 }
    }

    pub fn d(&self) -> usize {
        self.mdp.d
    }

    pub fn horizon(&self) -> usize {
        self.mdp.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.mdp.gamma
    }

    pub fn queries_used(&self) -> usize {
        self.queries
    }

    pub fn query(&mut self, t: usize, a: &Vector) -> Result<f64> {
        let r = self.mdp.reward(t, a)?;
        self.queries += 1;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonSolution {
    pub thetas: Vec<Vector>,
    pub queries: usize,
}

pub fn canonical_design(d: usize) -> Vec<Vector> {
    (0..d).map(|i| util::canonical_basis(d, i)).collect()
}

/// Backward least-squares sweep. At each step the design's rewards plus
/// the already-solved continuation value form the regression targets; a
/// design that does not span feature space fails loudly with the step it
/// failed at.
pub fn solve_backward(
    env: &mut FiniteHorizonEnv,
    design: &[Vector],
) -> Result<FiniteHorizonSolution> {
    let d = env.d();
    let h = env.horizon();
    let n = design.len();
    for a in design {
        if a.len() != d || !util::in_unit_ball(a) {
            return Err(Error::IllegalQuery(
                "design action outside the unit ball".into(),
            ));
        }
    }

    let mut phi = Matrix::zeros(n, d);
    for (i, a) in design.iter().enumerate() {
        phi.row_mut(i).copy_from(&a.transpose());
    }
    let svd = phi.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| sigma_max > 0.0 && s > 1e-10 * sigma_max)
        .count();

    let mut thetas = vec![Vector::zeros(d); h];
    let mut continuation = 0.0;
    for t in (0..h).rev() {
        if rank < d {
            return Err(Error::DeficientBasis { step: t });
        }
        let mut y = Vector::zeros(n);
        for (i, a) in design.iter().enumerate() {
            y[i] = env.query(t, a)? + env.gamma() * continuation;
        }
        let theta = svd
            .solve(&y, 1e-10 * sigma_max)
            .expect("svd solve with both factors");
        continuation = theta.norm();
        thetas[t] = theta;
    }
    Ok(FiniteHorizonSolution {
        thetas,
        queries: env.queries_used(),
    })
}
