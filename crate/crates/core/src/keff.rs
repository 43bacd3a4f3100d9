//! Latent-mixture occupancy and effective pool size from mean
//! nearest-neighbour cosine.
//!
//! A stream of `N` draws from latents with weights `w_z` has partner
//! probability `q_N = 1 − Σ w_z (1 − w_z)^{N−1}`, approximately
//! `1 − exp(−(N−1)/K_eff)` with `K_eff = 1/Σ w_z²`. If partnered points have
//! mean NN cosine `m_+` and the rest behave like a high-uniqueness reference
//! with mean `m_0`, then `M̄ = (1−q)m_0 + q m_+`, which is inverted for `q̂`
//! and then `K̂_eff`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Serialize, Serializer};

use crate::nnstats::{build_lsh_index, nn_approx, nn_exact, LshParams, NNReport, Queries};
use crate::nullmodel::{sample_uniform_sphere, NullModelSpec};
use crate::rng::{derive_seed, stream};
use crate::{stats, EmbeddingSet, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LatentMixture {
    weights: Vec<f64>,
}

impl LatentMixture {
    /// Weights must be positive and sum to one within 1e-9.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("mixture weights"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::domain(format!("mixture weights must be positive, got {w}")));
        }
        let total = stats::pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    /// Scales positive weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total = stats::pairwise_sum(&weights);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::domain("mixture weights must have a positive finite sum"));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("uniform mixture needs K >= 1"));
        }
        Ok(Self { weights: vec![1.0 / k as f64; k] })
    }

    /// `w_z ∝ z^{−s}` for `z = 1..=k`.
    pub fn zipf(k: usize, s: f64) -> Result<Self> {
        if k == 0 || !s.is_finite() {
            return Err(Error::domain("Zipf mixture needs K >= 1 and a finite exponent"));
        }
        Self::normalized((1..=k).map(|z| (z as f64).powf(-s)).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Simpson effective size `1 / Σ w_z²`.
pub fn simpson_keff(mix: &LatentMixture) -> f64 {
    let sq: Vec<f64> = mix.weights.iter().map(|w| w * w).collect();
    1.0 / stats::pairwise_sum(&sq)
}

/// `q_N = Σ_z w_z (1 − (1 − w_z)^{N−1})`.
pub fn partner_probability_exact(mix: &LatentMixture, n: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain(format!("N must be >= 2, got {n}")));
    }
    let m = (n - 1) as f64;
    let terms: Vec<f64> = mix.weights.iter().map(|&w| -w * (m * (-w).ln_1p()).exp_m1()).collect();
    Ok(stats::pairwise_sum(&terms).min(1.0))
}

/// `1 − exp(−(N−1)/K_eff)`.
pub fn partner_probability_approx(k_eff: f64, n: u64) -> Result<f64> {
    if !(k_eff > 0.0) {
        return Err(Error::domain(format!("K_eff must be > 0, got {k_eff}")));
    }
    if n < 2 {
        return Err(Error::domain(format!("N must be >= 2, got {n}")));
    }
    Ok(-(-((n - 1) as f64) / k_eff).exp_m1())
}

/// Expected number of distinct clusters hit by `n` uniform draws from `K`:
/// `K(1 − (1 − 1/K)^n)`.
pub fn distinct_cluster_count(k: u64, n: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("K must be >= 1"));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    Ok(-kf * (n as f64 * (-1.0 / kf).ln_1p()).exp_m1())
}

/// Monte-Carlo partner probability: over `trials` streams of `n` draws,
/// the fraction of draws whose latent appears elsewhere in the stream.
/// Returns the mean and standard error across trials.
pub fn simulate_partner_probability(mix: &LatentMixture, n: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if n < 2 || trials < 2 {
        return Err(Error::domain("need n >= 2 and trials >= 2"));
    }
    let dist = WeightedIndex::new(&mix.weights).map_err(|e| Error::domain(e.to_string()))?;
    let mut counts = vec![0u32; mix.len()];
    let mut draws = vec![0usize; n];
    let fractions: Vec<f64> = (0..trials)
        .map(|t| {
            let mut rng = stream(seed, "partner-mc", t as u64);
            for d in draws.iter_mut() {
                *d = dist.sample(&mut rng);
                counts[*d] += 1;
            }
            let hits = draws.iter().filter(|&&z| counts[z] >= 2).count();
            for &z in &draws {
                counts[z] = 0;
            }
            hits as f64 / n as f64
        })
        .collect();
    Ok(stats::mean_and_se(&fractions))
}

/// `clip((M̄ − m_0)/(m_+ − m_0), 0, 1)` together with the unclipped value.
pub fn qhat_with_raw(mean_nn: f64, m0: f64, m_plus: f64) -> Result<(f64, f64)> {
    if !(mean_nn.is_finite() && m0.is_finite() && m_plus.is_finite()) {
        return Err(Error::domain("mean NN, m0 and m_plus must be finite"));
    }
    if m_plus <= m0 {
        return Err(Error::domain(format!("m_plus ({m_plus}) must exceed m0 ({m0})")));
    }
    let raw = (mean_nn - m0) / (m_plus - m0);
    Ok((raw.clamp(0.0, 1.0), raw))
}

pub fn qhat_from_mean_nn(mean_nn: f64, m0: f64, m_plus: f64) -> Result<f64> {
    Ok(qhat_with_raw(mean_nn, m0, m_plus)?.0)
}

/// `(n_meas − 1) / (−ln(1 − q̂))`: `+∞` at `q̂ = 0`, `0` at `q̂ = 1`.
pub fn keff_from_qhat(q_hat: f64, n_meas: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q_hat) {
        return Err(Error::domain(format!("q_hat must lie in [0, 1], got {q_hat}")));
    }
    if n_meas < 2 {
        return Err(Error::domain(format!("n_meas must be >= 2, got {n_meas}")));
    }
    if q_hat == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((n_meas - 1) as f64 / -(-q_hat).ln_1p())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct M0Estimate {
    pub m0: f64,
    pub se: f64,
    pub n_meas: usize,
    pub references: usize,
}

/// Mean of the reference `M̄` values. All references must share `N_meas`.
pub fn estimate_m0(reference_reports: &[NNReport]) -> Result<M0Estimate> {
    let first = reference_reports.first().ok_or(Error::Empty("reference reports"))?;
    if let Some(r) = reference_reports.iter().find(|r| r.pool_size != first.pool_size) {
        return Err(Error::Mismatch(format!(
            "reference reports measured at N_meas = {} and {}",
            first.pool_size, r.pool_size
        )));
    }
    let means: Vec<f64> = reference_reports.iter().map(|r| r.mean_nn_similarity).collect();
    let (m0, se) = if means.len() >= 2 { stats::mean_and_se(&means) } else { (means[0], 0.0) };
    Ok(M0Estimate { m0, se, n_meas: first.pool_size, references: means.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KeffFlags {
    /// `q̂ = 0`, so `K̂_eff = +∞`.
    pub saturated_low: bool,
    /// `q̂ = 1`, so `K̂_eff = 0`.
    pub saturated_high: bool,
    /// The unclipped `q̂` was negative: the stream looks more unique than the
    /// reference, which points at a miscalibrated `m_0`.
    pub negative_excess: bool,
}

fn ser_inf<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() && *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeffEstimate {
    pub q_hat: f64,
    pub q_hat_raw: f64,
    #[serde(serialize_with = "ser_inf")]
    pub k_eff_hat: f64,
    pub mean_nn: f64,
    pub m0: f64,
    pub m0_se: f64,
    pub m_plus: f64,
    pub n_meas: usize,
    pub stream_queries: usize,
    pub reference_queries: usize,
    pub seed: u64,
    pub flags: KeffFlags,
}

/// Combines a stream report with reference reports at the same `N_meas`.
pub fn estimate_from_reports(stream: &NNReport, references: &[NNReport], m_plus: f64, seed: u64) -> Result<KeffEstimate> {
    let m0 = estimate_m0(references)?;
    if stream.pool_size != m0.n_meas {
        return Err(Error::Mismatch(format!(
            "stream measured at N_meas = {}, reference at {}",
            stream.pool_size, m0.n_meas
        )));
    }
    let (q_hat, q_raw) = qhat_with_raw(stream.mean_nn_similarity, m0.m0, m_plus)?;
    let k = keff_from_qhat(q_hat, stream.pool_size as u64)?;
    Ok(KeffEstimate {
        q_hat,
        q_hat_raw: q_raw,
        k_eff_hat: k,
        mean_nn: stream.mean_nn_similarity,
        m0: m0.m0,
        m0_se: m0.se,
        m_plus,
        n_meas: stream.pool_size,
        stream_queries: stream.query_count,
        reference_queries: references.iter().map(|r| r.query_count).sum(),
        seed,
        flags: KeffFlags { saturated_low: q_hat == 0.0, saturated_high: q_hat == 1.0, negative_excess: q_raw < 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeffConfig {
    pub m_plus: f64,
    pub n_meas: usize,
    pub seed: u64,
    /// Query caps; `None` uses every point of the subsample.
    pub stream_queries_cap: Option<usize>,
    pub reference_queries_cap: Option<usize>,
    pub exact_cutoff: usize,
    pub lsh: LshParams,
}

impl KeffConfig {
    pub fn new(m_plus: f64, n_meas: usize, seed: u64) -> Self {
        Self {
            m_plus,
            n_meas,
            seed,
            stream_queries_cap: None,
            reference_queries_cap: None,
            exact_cutoff: 200_000,
            lsh: LshParams::default(),
        }
    }
}

/// Mean NN report on a subsample of `n_meas` rows drawn without
/// replacement. The subsample depends only on `(seed, count, n_meas)`.
pub fn measure_subsample(set: &EmbeddingSet, n_meas: usize, seed: u64, queries_cap: Option<usize>, exact_cutoff: usize, lsh: LshParams) -> Result<NNReport> {
    if n_meas < 2 || n_meas > set.count() {
        return Err(Error::domain(format!(
            "n_meas must lie in [2, {}], got {n_meas}",
            set.count()
        )));
    }
    let mut rng = stream(seed, "keff-subsample", 0);
    let mut idx: Vec<usize> = (0..set.count()).collect();
    for i in 0..n_meas {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    idx.truncate(n_meas);
    let sub = set.select(&idx)?;
    let sub = if sub.is_normalized() { sub } else { sub.normalize()? };
    let queries = match queries_cap {
        Some(c) => Queries::First(c.max(1)),
        None => Queries::All,
    };
    if n_meas <= exact_cutoff {
        nn_exact(&sub, &queries)
    } else {
        let mut p = lsh;
        p.seed = derive_seed(seed, "keff-lsh", 0);
        nn_approx(&build_lsh_index(&sub, p)?, &queries)
    }
}

/// Full estimate with default settings (all queries, exact search).
pub fn estimate_keff_pipeline(stream: &EmbeddingSet, reference: &EmbeddingSet, m_plus: f64, n_meas: usize, seed: u64) -> Result<KeffEstimate> {
    estimate_keff(stream, reference, &KeffConfig::new(m_plus, n_meas, seed))
}

pub fn estimate_keff(stream_set: &EmbeddingSet, reference: &EmbeddingSet, cfg: &KeffConfig) -> Result<KeffEstimate> {
    if stream_set.dim() != reference.dim() {
        return Err(Error::Mismatch(format!(
            "stream has dimension {}, reference {}",
            stream_set.dim(),
            reference.dim()
        )));
    }
    if !cfg.m_plus.is_finite() {
        return Err(Error::domain("m_plus must be finite"));
    }
    let r = measure_subsample(reference, cfg.n_meas, cfg.seed, cfg.reference_queries_cap, cfg.exact_cutoff, cfg.lsh)?;
    // Validate m_plus against m0 before paying for the stream pass.
    qhat_with_raw(r.mean_nn_similarity, r.mean_nn_similarity, cfg.m_plus)?;
    let s = measure_subsample(stream_set, cfg.n_meas, cfg.seed, cfg.stream_queries_cap, cfg.exact_cutoff, cfg.lsh)?;
    estimate_from_reports(&s, &[r], cfg.m_plus, cfg.seed)
}

/// A stream of `n` exact repeats: one uniform vector on `S^d` per latent of
/// `mix`, then `n` latents drawn with replacement by weight.
pub fn sample_repeat_stream(mix: &LatentMixture, d: u32, n: usize, seed: u64) -> Result<EmbeddingSet> {
    let spec = NullModelSpec::uniform(d, derive_seed(seed, "stream-latents", 0))?;
    let latents = sample_uniform_sphere(&spec, mix.len())?;
    let dist = WeightedIndex::new(&mix.weights).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = stream(seed, "stream-draws", 0);
    let idx: Vec<usize> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    latents.select(&idx)
}
