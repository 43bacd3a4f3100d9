use super::finite;
use super::gamma::ln_gamma_unchecked;
use crate::{Error, Result};

pub fn ln_beta(a: f64, b: f64) -> Result<f64> {
    check_shape(a, b)?;
    Ok(ln_beta_unchecked(a, b))
}

pub(crate) fn ln_beta_unchecked(a: f64, b: f64) -> f64 {
    ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)
}

/// Euler beta function `B(a, b)`.
pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    Ok(ln_beta(a, b)?.exp())
}

fn check_shape(a: f64, b: f64) -> Result<()> {
    let (a, b) = (finite("a", a)?, finite("b", b)?);
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::domain(format!(
            "beta shape parameters must be positive, got a = {a}, b = {b}"
        )));
    }
    Ok(())
}

/// Regularised incomplete beta function `I_x(a, b)`.
///
/// Evaluated with the modified Lentz continued fraction; for
/// `x > (a + 1) / (a + b + 2)` the symmetry `I_x(a,b) = 1 - I_{1-x}(b,a)` is
/// used so that the fraction always converges quickly.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    check_shape(a, b)?;
    let x = finite("x", x)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("reg_inc_beta requires 0 <= x <= 1, got {x}")));
    }
    reg_inc_beta_unchecked(x, a, b)
}

pub(crate) fn reg_inc_beta_unchecked(x: f64, a: f64, b: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        let y = 1.0 - x;
        return Ok(1.0 - front(y, b, a) * continued_fraction(y, b, a)? / b);
    }
    Ok(front(x, a, b) * continued_fraction(x, a, b)? / a)
}

// x^a (1-x)^b / B(a,b)
fn front(x: f64, a: f64, b: f64) -> f64 {
    (a * x.ln() + b * (-x).ln_1p() - ln_beta_unchecked(a, b)).exp()
}

fn continued_fraction(x: f64, a: f64, b: f64) -> Result<f64> {
    const MAX_ITER: usize = 100_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::Convergence(format!(
        "incomplete beta continued fraction at x = {x}, a = {a}, b = {b}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn beta_exact_values() {
        assert!((beta_fn(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((beta_fn(0.5, 0.5).unwrap() - PI).abs() < 1e-13);
        assert!((beta_fn(2.0, 3.0).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!(beta_fn(0.0, 1.0).is_err());
        assert!(beta_fn(1.0, -2.0).is_err());
    }

    #[test]
    fn endpoints_and_uniform() {
        assert_eq!(reg_inc_beta(0.0, 2.5, 0.7).unwrap(), 0.0);
        assert_eq!(reg_inc_beta(1.0, 2.5, 0.7).unwrap(), 1.0);
        assert!((reg_inc_beta(0.5, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        // I_x(1/2, 1) = sqrt(x)
        assert!((reg_inc_beta(0.75, 0.5, 1.0).unwrap() - 0.75f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn polynomial_closed_form() {
        // I_x(2,3) = 6x^2 - 8x^3 + 3x^4
        for i in 1..20 {
            let x = f64::from(i) / 20.0;
            let exact = 6.0 * x * x - 8.0 * x.powi(3) + 3.0 * x.powi(4);
            assert!((reg_inc_beta(x, 2.0, 3.0).unwrap() - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(reg_inc_beta(-0.1, 1.0, 1.0).is_err());
        assert!(reg_inc_beta(1.1, 1.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 0.0, 1.0).is_err());
        assert!(reg_inc_beta(f64::NAN, 1.0, 1.0).is_err());
    }
}
