//! Regularized incomplete beta function I_x(a, b) and log-gamma.

use crate::error::{Error, Result};

const MAX_ITER: usize = 500;
const CF_EPS: f64 = 1e-14;
const TINY: f64 = 1e-30;

/// Lanczos approximation (g = 7, 9 coefficients), ~15 significant digits.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for z > 0.
pub fn ln_gamma(z: f64) -> f64 {
    if z < 0.5 {
        // Reflection; only hit for z in (0, 0.5).
        let pi = std::f64::consts::PI;
        (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z)
    } else {
        let z = z - 1.0;
        let mut acc = LANCZOS[0];
        for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
    }
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Parameters for I_x(a, b): 0 <= x <= 1, a > 0, b > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub x: f64,
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(x: f64, a: f64, b: f64) -> Result<Self> {
        if !x.is_finite() || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain("beta parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("x must lie in [0, 1], got {x}")));
        }
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::Domain(format!(
                "shape parameters must be positive, got a = {a}, b = {b}"
            )));
        }
        Ok(Self { x, a, b })
    }
}

/// Regularized incomplete beta function I_x(a, b).
///
/// Modified Lentz continued fraction with the usual symmetry switch; falls
/// back to adaptive quadrature on the rare non-convergent input. Relative
/// accuracy ~1e-14, monotone nondecreasing in x up to that resolution.
pub fn reg_inc_beta(p: BetaParams) -> Result<f64> {
    let BetaParams { x, a, b } = p;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    // Evaluate on the side where the continued fraction converges fastest.
    if x > (a + 1.0) / (a + b + 2.0) {
        Ok(1.0 - eval_lower(1.0 - x, b, a)?)
    } else {
        Ok(eval_lower(x, a, b)?)
    }
}

pub fn reg_inc_beta_xab(x: f64, a: f64, b: f64) -> Result<f64> {
    reg_inc_beta(BetaParams::new(x, a, b)?)
}

fn eval_lower(x: f64, a: f64, b: f64) -> Result<f64> {
    match lentz_cf(x, a, b) {
        Ok(v) => Ok(v.clamp(0.0, 1.0)),
        Err(_) => quad_reg_inc_beta(x, a, b),
    }
}

/// Continued-fraction evaluation of I_x(a, b) for x <= (a+1)/(a+b+2).
fn lentz_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    let ln_prefix = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    let prefix = ln_prefix.exp() / a;

    let mut c: f64 = 1.0;
    let mut d: f64 = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut f = d;

    for m in 1..=MAX_ITER {
        let mf = m as f64;

        // Even step.
        let num = mf * (b - mf) * x / ((a + 2.0 * mf - 1.0) * (a + 2.0 * mf));
        d = 1.0 + num * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        f *= c * d;

        // Odd step.
        let num = -(a + mf) * (a + b + mf) * x / ((a + 2.0 * mf) * (a + 2.0 * mf + 1.0));
        d = 1.0 + num * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;

        if (delta - 1.0).abs() < CF_EPS {
            return Ok(prefix * f);
        }
    }
    Err(Error::Numerical(
        "incomplete beta continued fraction did not converge".into(),
    ))
}

/// Quadrature fallback. The symmetry switch keeps 1 - x bounded away from 0,
/// so the only possible singularity is at t = 0 when a < 1; the substitution
/// v = t^a removes it: B(x; a, b) = (1/a) * Int_0^{x^a} (1 - v^(1/a))^(b-1) dv.
/// For a >= 1 the raw integrand is already smooth.
fn quad_reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    let integral = if a >= 1.0 {
        let f = |t: f64| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0);
        adaptive_simpson(&f, 0.0, x, 1e-14, 52)?
    } else {
        let inv_a = 1.0 / a;
        let f = |v: f64| (1.0 - v.powf(inv_a)).powf(b - 1.0);
        adaptive_simpson(&f, 0.0, x.powf(a), 1e-14, 52)? / a
    };
    Ok((integral * (-ln_beta(a, b)).exp()).clamp(0.0, 1.0))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64, depth: u32) -> Result<f64> {
    let mid = 0.5 * (lo + hi);
    let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
    let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    simpson_step(f, lo, hi, flo, fmid, fhi, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    flo: f64,
    fmid: f64,
    fhi: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let mid = 0.5 * (lo + hi);
    let lmid = 0.5 * (lo + mid);
    let rmid = 0.5 * (mid + hi);
    let (flmid, frmid) = (f(lmid), f(rmid));
    let left = (mid - lo) / 6.0 * (flo + 4.0 * flmid + fmid);
    let right = (hi - mid) / 6.0 * (fmid + 4.0 * frmid + fhi);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numerical("adaptive quadrature depth exhausted".into()));
    }
    let l = simpson_step(f, lo, mid, flo, flmid, fmid, left, tol / 2.0, depth - 1)?;
    let r = simpson_step(f, mid, hi, fmid, frmid, fhi, right, tol / 2.0, depth - 1)?;
    Ok(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent oracle: composite Simpson on the raw integrand
    /// t^(a-1) (1-t)^(b-1), refined until the increment falls below 1e-12.
    /// Only valid for a >= 1 (no endpoint singularity on the left).
    fn oracle_reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
        assert!(a >= 1.0, "oracle handles left-regular shapes only");
        let f = |t: f64| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0);
        let simpson = |n: usize| {
            let h = x / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                let lo = i as f64 * h;
                let hi = lo + h;
                let mid = 0.5 * (lo + hi);
                s += h / 6.0 * (f(lo) + 4.0 * f(mid) + f(hi));
            }
            s
        };
        let mut n = 64;
        let mut prev = simpson(n);
        loop {
            n *= 2;
            let next = simpson(n);
            if (next - prev).abs() < 1e-12 || n > 1 << 22 {
                return next / (ln_beta(a, b)).exp();
            }
            prev = next;
        }
    }

    #[test]
    fn endpoints_are_exact() {
        assert_eq!(reg_inc_beta_xab(0.0, 2.0, 3.0).unwrap(), 0.0);
        assert_eq!(reg_inc_beta_xab(1.0, 2.0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_midpoint_is_half() {
        let v = reg_inc_beta_xab(0.5, 3.0, 3.0).unwrap();
        assert_relative_eq!(v, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn matches_quadrature_oracle() {
        // Frozen oracle value for (x, a, b) = (0.19, 2, 0.5). The antiderivative
        // gives B(0.19; 2, 0.5) = 4/3 - 2*sqrt(0.81) + (2/3)*0.81^(3/2) and
        // B(2, 0.5) = 4/3, so I = 0.0145 exactly.
        let frozen = 0.0145;
        let oracle = oracle_reg_inc_beta(0.19, 2.0, 0.5);
        assert_relative_eq!(oracle, frozen, max_relative = 1e-9);
        let cf = reg_inc_beta_xab(0.19, 2.0, 0.5).unwrap();
        assert_relative_eq!(cf, oracle, max_relative = 1e-10);
        assert_relative_eq!(cf, frozen, max_relative = 1e-10);
    }

    #[test]
    fn matches_oracle_on_mixed_shapes() {
        for &(x, a, b) in &[
            (0.3, 1.5, 0.5),
            (0.75, 2.0, 0.5),
            (0.19, 4.5, 0.5),
            (0.4, 1.0, 0.5),
            (0.5, 7.0, 3.0),
            (0.02, 19.5, 0.5),
        ] {
            let oracle = oracle_reg_inc_beta(x, a, b);
            let cf = reg_inc_beta_xab(x, a, b).unwrap();
            assert_relative_eq!(cf, oracle, max_relative = 1e-9, epsilon = 1e-13);
        }
    }

    #[test]
    fn arcsine_closed_form() {
        // I_x(1/2, 1/2) = (2/pi) asin(sqrt(x)).
        for &x in &[0.1_f64, 0.25, 0.5, 0.75, 0.9] {
            let expect = 2.0 / std::f64::consts::PI * x.sqrt().asin();
            let got = reg_inc_beta_xab(x, 0.5, 0.5).unwrap();
            assert_relative_eq!(got, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(BetaParams::new(-0.1, 1.0, 1.0).is_err());
        assert!(BetaParams::new(1.1, 1.0, 1.0).is_err());
        assert!(BetaParams::new(0.5, 0.0, 1.0).is_err());
        assert!(BetaParams::new(0.5, 1.0, -2.0).is_err());
        assert!(BetaParams::new(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(2.0), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(5.0), 24.0_f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn quadrature_fallback_agrees_with_cf() {
        // Exercise the fallback path directly on a case the CF handles fine.
        let direct = lentz_cf(0.2, 3.0, 0.5).unwrap();
        let quad = quad_reg_inc_beta(0.2, 3.0, 0.5).unwrap();
        assert_relative_eq!(direct, quad, max_relative = 1e-10);
    }
}
