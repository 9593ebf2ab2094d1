//! Seeded samplers for the unit sphere and ball. All randomness in this
//! crate flows through explicit RNGs; nothing reads ambient entropy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Vector;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform direction on the unit sphere S^(d-1).
pub fn unit_sphere<R: Rng>(d: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Uniform point in the closed unit ball: direction times radius u^(1/d).
pub fn unit_ball<R: Rng>(d: usize, rng: &mut R) -> Vector {
    let dir = unit_sphere(d, rng);
    let r: f64 = rng.gen::<f64>().powf(1.0 / d as f64);
    dir * r
}

/// Uniform point in the intersection of the ball with the nonnegative orthant,
/// obtained by folding a uniform ball point coordinatewise.
pub fn unit_ball_orthant<R: Rng>(d: usize, rng: &mut R) -> Vector {
    unit_ball(d, rng).map(f64::abs)
}

/// Uniform direction in the open positive orthant of the sphere, with a small
/// floor keeping every coordinate strictly positive.
pub fn unit_sphere_positive<R: Rng>(d: usize, rng: &mut R) -> Vector {
    let v = unit_sphere(d, rng).map(|x| x.abs().max(1e-6));
    let n = v.norm();
    v / n
}
