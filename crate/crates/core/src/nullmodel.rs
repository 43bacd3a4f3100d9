//! Nearest-neighbour similarity under the uniform and von Mises–Fisher
//! models on the sphere `S^d ⊂ R^{d+1}`.
//!
//! `d` is always the dimension of the sphere, so sampled vectors have
//! `d + 1` coordinates.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::quadrature::integrate;
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::specfn::{bessel_ratio, beta::reg_inc_beta_unchecked, gamma::ln_gamma_unchecked};
use crate::specfn::bessel::log_vmf_normalizer_unchecked;
use crate::specfn::ln_beta;
use crate::{budget, nnstats, stats, EmbeddingSet, Error, Result};

const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Uniform,
    Vmf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModelSpec {
    pub d: u32,
    pub family: Family,
    pub kappa: f64,
    pub mean_direction: Vec<f64>,
    pub seed: u64,
}

impl NullModelSpec {
    pub fn uniform(d: u32, seed: u64) -> Result<Self> {
        check_d(d)?;
        Ok(Self { d, family: Family::Uniform, kappa: 0.0, mean_direction: Vec::new(), seed })
    }

    /// vMF with mean direction `mean_direction` (length `d + 1`, unit norm).
    pub fn vmf(d: u32, kappa: f64, mean_direction: Vec<f64>, seed: u64) -> Result<Self> {
        let spec = Self { d, family: Family::Vmf, kappa, mean_direction, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// vMF centred on the first basis vector.
    pub fn vmf_axis(d: u32, kappa: f64, seed: u64) -> Result<Self> {
        check_d(d)?;
        let mut mu = vec![0.0; d as usize + 1];
        mu[0] = 1.0;
        Self::vmf(d, kappa, mu, seed)
    }

    pub fn ambient_dim(&self) -> usize {
        self.d as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        check_d(self.d)?;
        if self.family == Family::Vmf {
            if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
                return Err(Error::domain(format!("kappa must be finite and >= 0, got {}", self.kappa)));
            }
            if self.mean_direction.len() != self.ambient_dim() {
                return Err(Error::domain(format!(
                    "mean direction has {} coordinates, expected {}",
                    self.mean_direction.len(),
                    self.ambient_dim()
                )));
            }
            let norm = self.mean_direction.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::domain(format!("mean direction has norm {norm}, expected 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ExactIntegral,
    PowerLawAsymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NNTheoryResult {
    pub expected_nn_similarity: f64,
    pub expected_angle: f64,
    pub expected_gap: f64,
    pub regime: Regime,
}

fn check_d(d: u32) -> Result<()> {
    if d < 1 {
        return Err(Error::domain("sphere dimension d must be >= 1"));
    }
    Ok(())
}

fn check_n(n: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::domain(format!("pool size N must be >= 2, got {n}")));
    }
    Ok(())
}

/// Uniform measure of the cap `{x ∈ S^d : ⟨x, e⟩ ≥ t}`.
pub fn cap_probability(d: u32, t: f64) -> Result<f64> {
    check_d(d)?;
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("threshold must lie in [-1, 1], got {t}")));
    }
    cap_unchecked(d, t)
}

fn cap_unchecked(d: u32, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Ok(1.0 - cap_unchecked(d, -t)?);
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    if t >= 1.0 {
        return Ok(0.0);
    }
    Ok(0.5 * reg_inc_beta_unchecked((1.0 - t) * (1.0 + t), 0.5 * f64::from(d), 0.5)?)
}

/// `ln(1 − p_d(t))`, accurate both when `p` is tiny and when it is near one.
fn ln_cap_complement(d: u32, t: f64) -> Result<f64> {
    if t >= 0.0 {
        Ok((-cap_unchecked(d, t)?).ln_1p())
    } else {
        Ok(cap_unchecked(d, -t)?.ln())
    }
}

/// `C_d = 1 / (d·B(d/2, 1/2))`, the small-cap density constant.
pub fn cap_constant(d: u32) -> Result<f64> {
    check_d(d)?;
    let d = f64::from(d);
    Ok((-ln_beta(0.5 * d, 0.5)?).exp() / d)
}

fn gaussian_unit(rng: &mut SimRng, out: &mut [f64]) {
    loop {
        let mut n2 = 0.0;
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
            n2 += *x * *x;
        }
        if n2 > 0.0 {
            let inv = 1.0 / n2.sqrt();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}

fn push_f32(out: &mut Vec<f32>, x: &[f64]) {
    out.extend(x.iter().map(|&v| v as f32));
}

/// `n` points drawn uniformly from `S^d` as normalised Gaussians.
pub fn sample_uniform_sphere(spec: &NullModelSpec, n: usize) -> Result<EmbeddingSet> {
    spec.validate()?;
    if spec.family != Family::Uniform {
        return Err(Error::domain("sample_uniform_sphere needs a uniform spec"));
    }
    uniform_rows(spec.ambient_dim(), n, &mut rng_from_seed(spec.seed))
}

fn uniform_rows(dim: usize, n: usize, rng: &mut SimRng) -> Result<EmbeddingSet> {
    if n < 1 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    budget::check(n, dim)?;
    let mut data = Vec::with_capacity(n * dim);
    let mut x = vec![0.0; dim];
    for _ in 0..n {
        gaussian_unit(rng, &mut x);
        push_f32(&mut data, &x);
    }
    Ok(EmbeddingSet::from_unit_rows(dim, data))
}

/// Sampler for the cosine `w = ⟨x, μ⟩` of a vMF draw (Wood's rejection
/// scheme on the marginal density `∝ e^{κw}(1 − w²)^{(d−2)/2}`).
#[derive(Debug, Clone)]
pub struct VmfCosine {
    kappa: f64,
    b: f64,
    x0: f64,
    c: f64,
    m: f64,
    beta: Beta<f64>,
}

impl VmfCosine {
    pub fn new(d: u32, kappa: f64) -> Result<Self> {
        check_d(d)?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::domain(format!("kappa must be finite and > 0, got {kappa}")));
        }
        let m = f64::from(d);
        let b = m / (2.0 * kappa + (4.0 * kappa * kappa + m * m).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + m * (1.0 - x0 * x0).ln();
        let beta = Beta::new(0.5 * m, 0.5 * m).map_err(|e| Error::domain(e.to_string()))?;
        Ok(Self { kappa, b, x0, c, m, beta })
    }

    /// Returns `(w, 1 − w)`; the second value avoids cancellation near `w = 1`.
    pub fn sample_with_complement<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        loop {
            let z: f64 = self.beta.sample(rng);
            let den = 1.0 - (1.0 - self.b) * z;
            let w = (1.0 - (1.0 + self.b) * z) / den;
            let u: f64 = rng.random();
            if self.kappa * w + self.m * (1.0 - self.x0 * w).ln() - self.c >= u.ln() {
                return (w, 2.0 * self.b * z / den);
            }
        }
    }
}

impl Distribution<f64> for VmfCosine {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_with_complement(rng).0
    }
}

/// `n` points from vMF(μ, κ) on `S^d`. At `κ = 0` this draws exactly the
/// same stream as [`sample_uniform_sphere`] with the same seed.
pub fn sample_vmf(spec: &NullModelSpec, n: usize) -> Result<EmbeddingSet> {
    spec.validate()?;
    if spec.family != Family::Vmf {
        return Err(Error::domain("sample_vmf needs a vMF spec"));
    }
    let dim = spec.ambient_dim();
    let mut rng = rng_from_seed(spec.seed);
    if spec.kappa == 0.0 {
        return uniform_rows(dim, n, &mut rng);
    }
    if n < 1 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    budget::check(n, dim)?;
    let cosine = VmfCosine::new(spec.d, spec.kappa)?;
    let mu = &spec.mean_direction;
    let mut data = Vec::with_capacity(n * dim);
    let mut v = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    for _ in 0..n {
        let (w, one_minus_w) = cosine.sample_with_complement(&mut rng);
        let s = (one_minus_w * (1.0 + w)).max(0.0).sqrt();
        tangent_unit(&mut rng, mu, &mut v);
        let mut n2 = 0.0;
        for i in 0..dim {
            x[i] = w * mu[i] + s * v[i];
            n2 += x[i] * x[i];
        }
        let inv = 1.0 / n2.sqrt();
        x.iter_mut().for_each(|t| *t *= inv);
        push_f32(&mut data, &x);
    }
    Ok(EmbeddingSet::from_unit_rows(dim, data))
}

fn tangent_unit(rng: &mut SimRng, mu: &[f64], v: &mut [f64]) {
    loop {
        gaussian_unit(rng, v);
        let proj: f64 = v.iter().zip(mu).map(|(a, b)| a * b).sum();
        let mut n2 = 0.0;
        for (a, b) in v.iter_mut().zip(mu) {
            *a -= proj * b;
            n2 += *a * *a;
        }
        if n2 > 1e-12 {
            let inv = 1.0 / n2.sqrt();
            v.iter_mut().for_each(|a| *a *= inv);
            return;
        }
    }
}

/// Dispatches on the family.
pub fn sample(spec: &NullModelSpec, n: usize) -> Result<EmbeddingSet> {
    match spec.family {
        Family::Uniform => sample_uniform_sphere(spec, n),
        Family::Vmf => sample_vmf(spec, n),
    }
}

/// `E[M]` and `E[Θ]` for `N` uniform points by adaptive quadrature of the
/// nearest-neighbour CDF `P(M < t) = (1 − p_d(t))^{N−1}`.
pub fn expected_nn_similarity_uniform(d: u32, n: u64) -> Result<NNTheoryResult> {
    check_d(d)?;
    check_n(n)?;
    let m = (n - 1) as f64;
    // 1 − P(M < t)
    let hit = |t: f64| match ln_cap_complement(d, t) {
        Ok(lq) => -(m * lq).exp_m1(),
        Err(_) => f64::NAN,
    };
    let upper = integrate(hit, 0.0, 1.0, QUAD_TOL, 0.0)?;
    let lower = integrate(hit, -1.0, 0.0, QUAD_TOL, 0.0)?;
    let sim = -1.0 + lower + upper;

    let miss = |theta: f64| match ln_cap_complement(d, theta.cos()) {
        Ok(lq) => (m * lq).exp(),
        Err(_) => f64::NAN,
    };
    let half = std::f64::consts::FRAC_PI_2;
    let angle = integrate(miss, 0.0, half, QUAD_TOL, 0.0)?
        + integrate(miss, half, std::f64::consts::PI, QUAD_TOL, 0.0)?;
    Ok(NNTheoryResult {
        expected_nn_similarity: sim,
        expected_angle: angle,
        expected_gap: 1.0 - sim,
        regime: Regime::ExactIntegral,
    })
}

/// Small-angle power law for `N` uniform points:
/// `E[Θ] = Γ(1+1/d)((N−1)C_d)^{−1/d}`, `E[Δ] = ½Γ(1+2/d)((N−1)C_d)^{−2/d}`.
pub fn nn_power_law_asymptotics(d: u32, n: u64) -> Result<NNTheoryResult> {
    check_n(n)?;
    let ln_scale = ((n - 1) as f64).ln() + cap_constant(d)?.ln();
    let df = f64::from(d);
    let angle = (ln_gamma_unchecked(1.0 + 1.0 / df) - ln_scale / df).exp();
    let gap = 0.5 * (ln_gamma_unchecked(1.0 + 2.0 / df) - 2.0 * ln_scale / df).exp();
    Ok(NNTheoryResult {
        expected_nn_similarity: 1.0 - gap,
        expected_angle: angle,
        expected_gap: gap,
        regime: Regime::PowerLawAsymptotic,
    })
}

/// `E[f^{−α}]` under vMF(κ) on `S^d`, where `f` is the density with respect
/// to the uniform measure: `Z_d(κ)^{α−1} Z_d((1−α)κ)`.
///
/// By log-convexity of `Z_d` this never exceeds one, so concentration
/// shrinks the nearest-neighbour gap.
pub fn vmf_moment(d: u32, kappa: f64, alpha: f64) -> Result<f64> {
    check_d(d)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::domain(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    if kappa == 0.0 {
        return Ok(1.0);
    }
    let ln = (alpha - 1.0) * log_vmf_normalizer_unchecked(d, kappa)
        + log_vmf_normalizer_unchecked(d, (1.0 - alpha) * kappa);
    Ok(ln.exp())
}

/// `E⟨x, μ⟩ = I_{ν+1}(κ)/I_ν(κ)` with `ν = (d−1)/2`.
pub fn mean_resultant_length(d: u32, kappa: f64) -> Result<f64> {
    check_d(d)?;
    bessel_ratio(0.5 * (f64::from(d) - 1.0), kappa)
}

/// Uniform power law rescaled by the vMF moments `E[f^{−2/d}]` (gap) and
/// `E[f^{−1/d}]` (angle). Requires `d > 2`.
pub fn expected_nn_gap_vmf(d: u32, kappa: f64, n: u64) -> Result<NNTheoryResult> {
    if d <= 2 {
        return Err(Error::domain(format!("vMF gap law needs d > 2, got {d}")));
    }
    let base = nn_power_law_asymptotics(d, n)?;
    let df = f64::from(d);
    let gap = base.expected_gap * vmf_moment(d, kappa, 2.0 / df)?;
    let angle = base.expected_angle * vmf_moment(d, kappa, 1.0 / df)?;
    Ok(NNTheoryResult {
        expected_nn_similarity: 1.0 - gap,
        expected_angle: angle,
        expected_gap: gap,
        regime: Regime::PowerLawAsymptotic,
    })
}

/// Per-replicate mean NN similarity and gap for `replicates` independent
/// pools of `n` points drawn from `spec`. Replicate `r` uses the stream
/// `derive_seed(spec.seed, "replicate", r)`.
pub fn simulate_mean_nn(spec: &NullModelSpec, n: usize, replicates: usize) -> Result<Vec<nnstats::NNReport>> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::domain("pool size must be >= 2"));
    }
    (0..replicates)
        .map(|r| {
            let mut s = spec.clone();
            s.seed = derive_seed(spec.seed, "replicate", r as u64);
            let set = sample(&s, n)?;
            nnstats::nn_exact(&set, &nnstats::Queries::All)
        })
        .collect()
}

/// Mean and standard error of the replicate mean similarities.
pub fn summarize_replicates(reports: &[nnstats::NNReport]) -> (f64, f64) {
    let xs: Vec<f64> = reports.iter().map(|r| r.mean_nn_similarity).collect();
    stats::mean_and_se(&xs)
}
