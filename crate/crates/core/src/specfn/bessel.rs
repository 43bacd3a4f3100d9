use super::finite;
use super::gamma::ln_gamma_unchecked;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Below `max(ν + 10, 100)` the ascending series is summed; above it the
/// uniform (Debye) expansion with four correction terms is used. The
/// truncation error of the expansion at κ = 100 is about 2e-11 relative.
fn series_crossover(nu: f64) -> f64 {
    (nu + 10.0).max(100.0)
}

fn check(nu: f64, kappa: f64) -> Result<()> {
    let (nu, kappa) = (finite("nu", nu)?, finite("kappa", kappa)?);
    if nu < 0.0 {
        return Err(Error::domain(format!("Bessel order must be >= 0, got {nu}")));
    }
    if kappa < 0.0 {
        return Err(Error::domain(format!("Bessel argument must be >= 0, got {kappa}")));
    }
    Ok(())
}

/// `ln I_ν(κ)`, the logarithm of the modified Bessel function of the first
/// kind. Stays finite for arguments far beyond the overflow point of `I_ν`.
pub fn log_bessel_i(nu: f64, kappa: f64) -> Result<f64> {
    check(nu, kappa)?;
    Ok(log_bessel_i_unchecked(nu, kappa))
}

pub(crate) fn log_bessel_i_unchecked(nu: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if kappa < series_crossover(nu) {
        nu * (0.5 * kappa).ln() - ln_gamma_unchecked(nu + 1.0) + log_hypergeometric_0f1(nu, kappa)
    } else {
        log_debye(nu, kappa)
    }
}

/// `ln Σ_k (κ²/4)^k / (k! (ν+1)_k)`, i.e. `ln[Γ(ν+1) (2/κ)^ν I_ν(κ)]`.
///
/// All terms are positive, so the sum has no cancellation. The running sum is
/// rescaled whenever it grows past 1e250.
fn log_hypergeometric_0f1(nu: f64, kappa: f64) -> f64 {
    const RESCALE: f64 = 1e250;
    let q = 0.25 * kappa * kappa;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut log_scale = 0.0f64;
    let mut k = 0.0f64;
    loop {
        term *= q / ((k + 1.0) * (k + 1.0 + nu));
        k += 1.0;
        sum += term;
        if sum > RESCALE {
            sum /= RESCALE;
            term /= RESCALE;
            log_scale += RESCALE.ln();
        }
        // Past the peak the ratio is < 1 and decreasing, so the tail is
        // bounded by a geometric series.
        let ratio = q / ((k + 1.0) * (k + 1.0 + nu));
        if ratio < 1.0 && term < sum * 1e-17 * (1.0 - ratio) {
            break;
        }
    }
    sum.ln() + log_scale
}

/// Uniform asymptotic expansion of `I_ν(κ)` written in terms of
/// `s = sqrt(ν² + κ²)` so that it reduces to the Hankel expansion at ν = 0.
fn log_debye(nu: f64, kappa: f64) -> f64 {
    let s = nu.hypot(kappa);
    let t = 1.0 / s;
    let p = nu * t;
    let p2 = p * p;
    // u_k(p) / ν^k = t^k v_k(p²)
    let v1 = (3.0 - 5.0 * p2) / 24.0;
    let v2 = (81.0 + p2 * (-462.0 + p2 * 385.0)) / 1152.0;
    let v3 = (30375.0 + p2 * (-369_603.0 + p2 * (765_765.0 + p2 * -425_425.0))) / 414_720.0;
    let v4 = (4_465_125.0
        + p2 * (-94_121_676.0 + p2 * (349_922_430.0 + p2 * (-446_185_740.0 + p2 * 185_910_725.0))))
        / 39_813_120.0;
    let series = 1.0 + t * (v1 + t * (v2 + t * (v3 + t * v4)));
    let eta = if nu == 0.0 { 0.0 } else { nu * (kappa / (nu + s)).ln() };
    s + eta - 0.5 * LN_2PI - 0.5 * s.ln() + series.ln()
}

/// `I_{ν+1}(κ) / I_ν(κ)`; for the vMF distribution with `ν = (d-1)/2` this is
/// the mean resultant length `E⟨x, μ⟩`.
pub fn bessel_ratio(nu: f64, kappa: f64) -> Result<f64> {
    check(nu, kappa)?;
    if kappa == 0.0 {
        return Ok(0.0);
    }
    Ok((log_bessel_i_unchecked(nu + 1.0, kappa) - log_bessel_i_unchecked(nu, kappa)).exp())
}

/// `ln Z_d(κ)` where `Z_d(κ) = E_{u ~ Unif(S^d)} exp(κ⟨u, μ⟩)
/// = 2^ν Γ(ν+1) κ^{-ν} I_ν(κ)` with `ν = (d-1)/2`.
pub fn log_vmf_normalizer(d: u32, kappa: f64) -> Result<f64> {
    if d < 1 {
        return Err(Error::domain("sphere dimension d must be >= 1"));
    }
    let kappa = finite("kappa", kappa)?;
    if kappa < 0.0 {
        return Err(Error::domain(format!("kappa must be >= 0, got {kappa}")));
    }
    Ok(log_vmf_normalizer_unchecked(d, kappa))
}

pub(crate) fn log_vmf_normalizer_unchecked(d: u32, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let nu = 0.5 * (f64::from(d) - 1.0);
    if kappa < series_crossover(nu) {
        log_hypergeometric_0f1(nu, kappa)
    } else {
        nu * std::f64::consts::LN_2 + ln_gamma_unchecked(nu + 1.0) - nu * kappa.ln()
            + log_debye(nu, kappa)
    }
}

/// `Z_d(κ)`; overflows to `+inf` once `κ` exceeds roughly 700, use
/// [`log_vmf_normalizer`] there.
pub fn vmf_normalizer(d: u32, kappa: f64) -> Result<f64> {
    Ok(log_vmf_normalizer(d, kappa)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn frozen_values() {
        // (ν, κ, ln I_ν(κ)) at 40 digits
        let cases = [
            (2.0, 5.0, 2.862_521_684_702_105_7),
            (0.0, 150.0, 146.576_579_950_351_86),
            (0.5, 200.0, 196.431_902_783_521_3),
            (3.5, 1000.0, 995.621_180_830_317_8),
            (63.5, 500.0, 491.943_142_653_400_1),
            (10.0, 30.0, 25.705_719_808_142_33),
            (0.0, 100.5, 97.277_232_637_259_76),
            (7.5, 150.0, 146.388_490_215_586_62),
            (0.0, 10000.0, 9_994.475_903_781_432),
            (3.5, 20.0, 17.276_160_529_050_736),
            (0.0, 1e-3, 2.499_999_843_750_017_4e-7),
            (20.0, 1.0, -56.186_658_528_812_17),
            (63.5, 64.0, 31.371_582_935_120_35),
            (0.0, 99.9, 96.680_234_204_079_29),
        ];
        for (nu, k, want) in cases {
            let got = log_bessel_i(nu, k).unwrap();
            // absolute error in ln I is relative error in I
            assert!(
                (got - want).abs() < 1e-10 + 1e-14 * want.abs(),
                "({nu}, {k}): {got} vs {want}"
            );
        }
        assert!(rel(log_bessel_i(2.0, 5.0).unwrap().exp(), 17.505_614_966_624_236) < 1e-12);
    }

    #[test]
    fn ascending_series_oracle() {
        // plain 200-term sum of (κ/2)^{2k+ν} / (k! Γ(k+ν+1))
        for &nu in &[0.0, 0.5, 1.0, 3.5, 7.0, 31.5] {
            for &k in &[0.1, 1.0, 5.0, 17.0, 33.0, 50.0] {
                let mut sum = 0.0f64;
                for j in 0..200 {
                    let j = j as f64;
                    let lt = (2.0 * j + nu) * (0.5f64 * k).ln()
                        - ln_gamma_unchecked(j + 1.0)
                        - ln_gamma_unchecked(j + nu + 1.0);
                    sum += lt.exp();
                }
                let got = log_bessel_i(nu, k).unwrap().exp();
                assert!(rel(got, sum) < 1e-10, "({nu}, {k}): {got} vs {sum}");
            }
        }
    }

    #[test]
    fn zero_argument() {
        assert_eq!(log_bessel_i(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(log_bessel_i(1.5, 0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(vmf_normalizer(5, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn half_integer_closed_form() {
        // I_{1/2}(κ) = sqrt(2 / (π κ)) sinh κ, on both sides of the crossover
        for &k in &[1e-3, 0.5, 1.0, 9.0, 37.0, 99.0, 101.0, 250.0, 1e3, 1e4] {
            let f: f64 = k;
            let exact = 0.5 * (2.0 / (std::f64::consts::PI * f)).ln()
                + f
                + (-(-2.0 * f).exp_m1() / 2.0).ln();
            let got = log_bessel_i(0.5, k).unwrap();
            assert!((got - exact).abs() < 1e-10 * exact.abs().max(1.0), "k = {k}: {got} vs {exact}");
        }
    }

    #[test]
    fn sphere_two_normaliser() {
        for &k in &[0.1, 1.0, 10.0, 150.0] {
            let exact = f64::sinh(k) / k;
            assert!(rel(vmf_normalizer(2, k).unwrap(), exact) < 1e-11, "k = {k}");
        }
        assert!(rel(vmf_normalizer(2, 1.0).unwrap(), 1.175_201_193_643_801_4) < 1e-14);
        assert!(rel(vmf_normalizer(2, 10.0).unwrap(), 1_101.323_287_470_339_3) < 1e-12);
    }

    #[test]
    fn circle_normaliser_is_i0() {
        for &k in &[0.3, 4.0, 60.0, 500.0] {
            let a = log_vmf_normalizer(1, k).unwrap();
            let b = log_bessel_i(0.0, k).unwrap();
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn normaliser_is_increasing() {
        for d in [1u32, 3, 8, 64] {
            let mut prev = 0.0;
            for i in 1..400 {
                let k = 0.05 * f64::from(i) * f64::from(i);
                let z = log_vmf_normalizer(d, k).unwrap();
                assert!(z > prev, "d = {d}, k = {k}");
                prev = z;
            }
        }
    }

    #[test]
    fn ratio_bounds() {
        for &k in &[0.01, 1.0, 50.0, 5000.0] {
            let r = bessel_ratio(3.5, k).unwrap();
            assert!(r > 0.0 && r < 1.0);
        }
        assert_eq!(bessel_ratio(3.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn negative_arguments_rejected() {
        assert!(log_bessel_i(0.0, -1.0).is_err());
        assert!(log_bessel_i(-0.5, 1.0).is_err());
        assert!(vmf_normalizer(0, 1.0).is_err());
        assert!(vmf_normalizer(3, -1.0).is_err());
    }
}
