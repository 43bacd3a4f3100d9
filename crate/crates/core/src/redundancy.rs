//! Cluster-correlated gradient model, effective sample size, unseen-mass
//! learning curves and score separability metrics.
//!
//! A per-sample gradient is `g = μ + δ_z + ξ` with `z` uniform over `K`
//! clusters. `δ_z` is a random unit direction per cluster scaled to energy
//! `ρσ²`; `ξ` is isotropic Gaussian with total expected energy `(1−ρ)σ²`.
//! Same-cluster pairs then have centred inner product `ρσ²` and, averaged
//! over cluster directions, different clusters have zero.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::keff::LatentMixture;
use crate::rng::{stream, SimRng};
use crate::{budget, stats, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientClusterModel {
    pub dim: usize,
    pub k: usize,
    pub sigma2: f64,
    pub rho: f64,
    /// Norm of the global mean `μ`; its direction is fixed by the seed.
    pub global_mean_norm: f64,
    pub seed: u64,
}

impl GradientClusterModel {
    pub fn new(dim: usize, k: usize, sigma2: f64, rho: f64, seed: u64) -> Result<Self> {
        let m = Self { dim, k, sigma2, rho, global_mean_norm: 0.0, seed };
        m.validate()?;
        Ok(m)
    }

    pub fn with_global_mean(mut self, norm: f64) -> Result<Self> {
        self.global_mean_norm = norm;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::domain("gradient dimension must be >= 1"));
        }
        if self.k == 0 {
            return Err(Error::domain("cluster count must be >= 1"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::domain(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::domain(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if !(self.global_mean_norm >= 0.0 && self.global_mean_norm.is_finite()) {
            return Err(Error::domain("global mean norm must be finite and >= 0"));
        }
        budget::check(self.k, self.dim)
    }

    fn global_mean(&self) -> Vec<f64> {
        if self.global_mean_norm == 0.0 {
            return vec![0.0; self.dim];
        }
        let mut rng = stream(self.seed, "global-mean", 0);
        scaled_direction(&mut rng, self.dim, self.global_mean_norm)
    }
}

fn scaled_direction(rng: &mut SimRng, dim: usize, norm: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 0.0 {
            let s = norm / n2.sqrt();
            return v.into_iter().map(|x| x * s).collect();
        }
    }
}

fn draw(model: &GradientClusterModel, mu: &[f64], n: usize, rng: &mut SimRng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let shared = (model.rho * model.sigma2).sqrt();
    let noise = ((1.0 - model.rho) * model.sigma2 / model.dim as f64).sqrt();
    let centres: Vec<Vec<f64>> = (0..model.k).map(|_| scaled_direction(rng, model.dim, shared)).collect();
    let mut labels = Vec::with_capacity(n);
    let vectors = (0..n)
        .map(|_| {
            let z = rng.random_range(0..model.k);
            labels.push(z);
            (0..model.dim)
                .map(|j| {
                    let xi: f64 = StandardNormal.sample(rng);
                    mu[j] + centres[z][j] + noise * xi
                })
                .collect()
        })
        .collect();
    (vectors, labels)
}

/// `n` gradients and their cluster labels. Cluster directions are drawn
/// afresh from the model seed.
pub fn sample_cluster_gradients(model: &GradientClusterModel, n: usize) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    model.validate()?;
    if n == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    budget::check(n, model.dim)?;
    let mut rng = stream(model.seed, "cluster-gradients", 0);
    Ok(draw(model, &model.global_mean(), n, &mut rng))
}

fn dotf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pooled mean same-cluster cross inner product over the mean squared norm,
/// both after subtracting the sample mean; clipped to `[0, 1]`. Only clusters
/// with at least two members contribute cross terms.
pub fn estimate_rho(vectors: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if vectors.len() != labels.len() {
        return Err(Error::LengthMismatch { left: vectors.len(), right: labels.len() });
    }
    let dim = vectors.first().map_or(0, Vec::len);
    if let Some((row, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
        return Err(Error::DimensionMismatch { row, expected: dim, found: v.len() });
    }
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_clusters];
    for &z in labels {
        sizes[z] += 1;
    }
    let usable = sizes.iter().filter(|&&s| s >= 2).count();
    if usable < 2 {
        return Err(Error::InsufficientClusters(usable));
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n;
        }
    }
    let mut sums = vec![vec![0.0; dim]; n_clusters];
    let mut norms = vec![0.0; n_clusters];
    let mut total_norm = 0.0;
    for (v, &z) in vectors.iter().zip(labels) {
        let c: Vec<f64> = v.iter().zip(&mean).map(|(x, m)| x - m).collect();
        let e = dotf(&c, &c);
        total_norm += e;
        norms[z] += e;
        for (s, x) in sums[z].iter_mut().zip(&c) {
            *s += x;
        }
    }
    let (mut cross, mut pairs) = (0.0, 0.0);
    for z in 0..n_clusters {
        if sizes[z] >= 2 {
            cross += dotf(&sums[z], &sums[z]) - norms[z];
            pairs += (sizes[z] * (sizes[z] - 1)) as f64;
        }
    }
    let energy = total_norm / n;
    if !(energy > 0.0) {
        return Err(Error::domain("centred gradients have zero energy"));
    }
    Ok((cross / pairs / energy).clamp(0.0, 1.0))
}

/// `n / (1 + ρ(n−1)/K)`.
pub fn effective_sample_size(n: u64, k: f64, rho: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    if !(k > 0.0) {
        return Err(Error::domain(format!("K must be positive, got {k}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("rho must lie in [0, 1], got {rho}")));
    }
    let n = n as f64;
    Ok(n / (1.0 + rho * (n - 1.0) / k))
}

/// `σ²/n · (1 + ρ(n−1)/K)`.
pub fn predicted_mean_grad_energy(model: &GradientClusterModel, n: u64) -> Result<f64> {
    Ok(model.sigma2 / effective_sample_size(n, model.k as f64, model.rho)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheck {
    pub n: usize,
    pub replicates: usize,
    pub empirical: f64,
    pub se: f64,
    pub predicted: f64,
}

impl VarianceCheck {
    /// `|empirical − predicted|` in standard errors.
    pub fn z(&self) -> f64 {
        (self.empirical - self.predicted).abs() / self.se
    }
}

pub const MIN_REPLICATES: usize = 30;

/// Monte-Carlo `E‖ḡ_n − μ‖²` against the closed form. Replicate `r` uses the
/// stream `(seed, "replicate", r)` and redraws the cluster directions. The
/// standard error is floored at `1e-12·predicted` so zero-variance cells
/// (`ρ = 1, K = 1`) compare exactly.
pub fn verify_variance_saturation(model: &GradientClusterModel, n: usize, replicates: usize) -> Result<VarianceCheck> {
    model.validate()?;
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    if replicates < MIN_REPLICATES {
        return Err(Error::domain(format!(
            "need at least {MIN_REPLICATES} replicates for a standard error, got {replicates}"
        )));
    }
    budget::check(n, model.dim)?;
    let mu = model.global_mean();
    let energies: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(model.seed, "replicate", r);
            let (vectors, _) = draw(model, &mu, n, &mut rng);
            let mut mean = vec![0.0; model.dim];
            for v in &vectors {
                for (m, x) in mean.iter_mut().zip(v) {
                    *m += x;
                }
            }
            mean.iter().zip(&mu).map(|(s, m)| (s / n as f64 - m).powi(2)).sum()
        })
        .collect();
    let (empirical, se) = stats::mean_and_se(&energies);
    let predicted = predicted_mean_grad_energy(model, n as u64)?;
    Ok(VarianceCheck { n, replicates, empirical, se: se.max(1e-12 * predicted), predicted })
}

/// Unseen probability mass `Σ_z w_z (1 − w_z)^n`.
pub fn hutter_excess_risk(mix: &LatentMixture, n: u64) -> f64 {
    let terms: Vec<f64> = mix
        .weights()
        .iter()
        .map(|&w| if w >= 1.0 { if n == 0 { w } else { 0.0 } } else { w * (n as f64 * (-w).ln_1p()).exp() })
        .collect();
    stats::pairwise_sum(&terms)
}

/// Mean and SE of the mass of types not seen in `n` draws.
pub fn simulate_unseen_mass(mix: &LatentMixture, n: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if trials < 2 {
        return Err(Error::domain("need at least 2 trials"));
    }
    let dist = rand::distr::weighted::WeightedIndex::new(mix.weights())
        .map_err(|e| Error::domain(format!("bad mixture: {e}")))?;
    let w = mix.weights();
    let masses: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, "unseen-mass", t);
            let mut seen = vec![false; w.len()];
            for _ in 0..n {
                seen[dist.sample(&mut rng)] = true;
            }
            let unseen: Vec<f64> = w.iter().zip(&seen).filter(|(_, s)| !**s).map(|(w, _)| *w).collect();
            stats::pairwise_sum(&unseen)
        })
        .collect();
    Ok(stats::mean_and_se(&masses))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HutterPoint {
    pub n: u64,
    pub n_eff: f64,
    pub l_finite: f64,
    pub l_inf: f64,
    pub delta: f64,
    /// First-order expansion in `r = ρn/K`.
    pub delta_linear: f64,
}

/// `L_∞ = L* + B n^{−α}`, `L_finite = L* + B n_eff^{−α}` and
/// `Δ = (L_finite − L_∞)/L_∞` on each grid point.
pub fn hutter_degradation_curve(
    k_eff: f64,
    rho: f64,
    n_grid: &[u64],
    alpha: f64,
    l_star: f64,
    b: f64,
) -> Result<Vec<HutterPoint>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(l_star >= 0.0 && l_star.is_finite()) {
        return Err(Error::domain(format!("L* must be finite and >= 0, got {l_star}")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::domain(format!("B must be positive, got {b}")));
    }
    n_grid
        .iter()
        .map(|&n| {
            let n_eff = effective_sample_size(n, k_eff, rho)?;
            let nf = n as f64;
            let base = b * nf.powf(-alpha);
            let l_inf = l_star + base;
            let excess = b * n_eff.powf(-alpha);
            let l_finite = l_star + excess;
            let r = rho * nf / k_eff;
            Ok(HutterPoint {
                n,
                n_eff,
                l_finite,
                l_inf,
                delta: (excess - base) / l_inf,
                delta_linear: alpha * r * base / l_inf,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSets {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl ScoreSets {
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>) -> Self {
        Self { positives, negatives }
    }

    fn check(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::Empty("positive scores"));
        }
        if self.negatives.is_empty() {
            return Err(Error::Empty("negative scores"));
        }
        if self.positives.iter().chain(&self.negatives).any(|x| x.is_nan()) {
            return Err(Error::domain("scores contain NaN"));
        }
        Ok(())
    }
}

/// `(mean(pos) − mean(neg)) / sd(neg)` with the population standard
/// deviation of the negatives.
pub fn zscore(scores: &ScoreSets) -> Result<f64> {
    scores.check()?;
    let mn = stats::mean(&scores.negatives);
    let dev: Vec<f64> = scores.negatives.iter().map(|x| (x - mn) * (x - mn)).collect();
    let sd = (stats::pairwise_sum(&dev) / dev.len() as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((stats::mean(&scores.positives) - mn) / sd)
}

/// Mann–Whitney AUC with half credit for ties, from average ranks.
pub fn auc(scores: &ScoreSets) -> Result<f64> {
    scores.check()?;
    let (np, nn) = (scores.positives.len(), scores.negatives.len());
    let mut all: Vec<(f64, bool)> = scores
        .positives
        .iter()
        .map(|&x| (x, true))
        .chain(scores.negatives.iter().map(|&x| (x, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Doubled ranks keep tie averages integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let twice_avg = (i + 1 + j) as u128;
        rank_sum2 += twice_avg * all[i..j].iter().filter(|e| e.1).count() as u128;
        i = j;
    }
    let np2 = (np as u128) * (np as u128 + 1);
    let u2 = rank_sum2 - np2;
    Ok(u2 as f64 / (2.0 * np as f64 * nn as f64))
}
