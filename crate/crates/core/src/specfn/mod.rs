//! Special functions used by the closed-form null models.
//!
//! All functions are pure and deterministic. Arguments outside the domain
//! produce [`Error::Domain`](crate::Error::Domain) rather than NaN.

pub(crate) mod bessel;
pub(crate) mod beta;
pub(crate) mod gamma;

pub use bessel::{bessel_ratio, log_bessel_i, log_vmf_normalizer, vmf_normalizer};
pub use beta::{beta_fn, ln_beta, reg_inc_beta};
pub use gamma::ln_gamma;

use crate::{Error, Result};

pub(crate) fn finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::domain(format!("{name} must be finite, got {x}")))
    }
}
