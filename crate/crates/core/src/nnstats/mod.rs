//! Nearest-neighbour similarity statistics over embedding sets.
//!
//! For a normalised pool `v_1..v_N` the nearest-neighbour similarity of a
//! query `i` is `M_i = max_{j≠i} ⟨v_i, v_j⟩`, its gap `Δ_i = 1 − M_i` and its
//! angle `Θ_i = 2·asin(sqrt(Δ_i / 2))`. Dot products read `f32` storage and
//! accumulate in `f64`.

mod exact;
pub mod io;
mod ladder;
mod lsh;

pub use exact::dot;
pub use io::{load_embeddings, save_embeddings, Format};
pub use ladder::{
    detect_breakdown, run_ladder, run_subsample_ladder, LadderConfig, LadderEntry, LadderResult,
    PowerFit, RungFailure,
};
pub use lsh::{build_lsh_index, LshIndex, LshParams};

use serde::{Deserialize, Serialize};

use crate::{stats, EmbeddingSet, Error, Result};

pub const DEFAULT_TAIL_THRESHOLDS: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Exact,
    Lsh,
}

/// Which rows of the pool act as queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Queries {
    All,
    /// The first `n` rows.
    First(usize),
    Indices(Vec<usize>),
}

impl Queries {
    fn resolve(&self, pool: usize) -> Result<Vec<usize>> {
        let q: Vec<usize> = match self {
            Queries::All => (0..pool).collect(),
            Queries::First(n) => (0..(*n).min(pool)).collect(),
            Queries::Indices(v) => v.clone(),
        };
        if q.is_empty() {
            return Err(Error::Empty("queries"));
        }
        if let Some(&bad) = q.iter().find(|&&i| i >= pool) {
            return Err(Error::domain(format!("query index {bad} out of range for pool of {pool}")));
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFraction {
    pub threshold: f64,
    pub fraction: f64,
}

/// Aggregates of a nearest-neighbour pass. JSON keys are the field names;
/// per-query values are kept in memory only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NNReport {
    pub pool_size: usize,
    pub query_count: usize,
    pub mean_nn_similarity: f64,
    pub mean_gap: f64,
    pub mean_angle: f64,
    pub tail_fractions: Vec<TailFraction>,
    pub index_kind: IndexKind,
    pub fallback_queries: usize,
    #[serde(skip)]
    pub similarities: Vec<f64>,
}

impl NNReport {
    fn from_similarities(pool_size: usize, sims: Vec<f64>, kind: IndexKind, fallback: usize) -> Result<Self> {
        let gaps: Vec<f64> = sims.iter().map(|m| 1.0 - m).collect();
        let angles: Vec<f64> = gaps.iter().map(|&g| 2.0 * (0.5 * g.clamp(0.0, 2.0)).sqrt().asin()).collect();
        Ok(Self {
            pool_size,
            query_count: sims.len(),
            mean_nn_similarity: stats::mean(&sims),
            mean_gap: stats::mean(&gaps),
            mean_angle: stats::mean(&angles),
            tail_fractions: tail_fraction(&sims, &DEFAULT_TAIL_THRESHOLDS)?,
            index_kind: kind,
            fallback_queries: fallback,
            similarities: sims,
        })
    }

    /// Replaces the tail fractions with ones at `thresholds`.
    pub fn with_tails(mut self, thresholds: &[f64]) -> Result<Self> {
        self.tail_fractions = tail_fraction(&self.similarities, thresholds)?;
        Ok(self)
    }
}

/// Fraction of `similarities` at or above each threshold.
pub fn tail_fraction(similarities: &[f64], thresholds: &[f64]) -> Result<Vec<TailFraction>> {
    if let Some(&t) = thresholds.iter().find(|t| !(-1.0..=1.0).contains(*t)) {
        return Err(Error::domain(format!("tail threshold {t} outside [-1, 1]")));
    }
    if similarities.is_empty() {
        return Err(Error::Empty("similarities"));
    }
    let mut sorted = similarities.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let below = sorted.partition_point(|&m| m < t);
            TailFraction { threshold: t, fraction: (sorted.len() - below) as f64 / n }
        })
        .collect())
}

fn check_pool(set: &EmbeddingSet) -> Result<()> {
    set.require_normalized()?;
    if set.count() < 2 {
        return Err(Error::domain(format!("pool needs at least 2 rows, has {}", set.count())));
    }
    Ok(())
}

/// Exhaustive search over every other row of `set`.
pub fn nn_exact(set: &EmbeddingSet, queries: &Queries) -> Result<NNReport> {
    check_pool(set)?;
    let pool: Vec<usize> = (0..set.count()).collect();
    nn_exact_pool(set, &pool, queries)
}

pub(crate) fn nn_exact_pool(set: &EmbeddingSet, pool: &[usize], queries: &Queries) -> Result<NNReport> {
    let q = queries.resolve(pool.len())?;
    let sims = exact::max_similarities(set, pool, &q)?;
    NNReport::from_similarities(pool.len(), sims, IndexKind::Exact, 0)
}

/// Best candidate among the probed buckets of `index`. Each reported `M_i`
/// is a true dot product, so it never exceeds the exact value.
pub fn nn_approx(index: &LshIndex<'_>, queries: &Queries) -> Result<NNReport> {
    if index.pool_size() < 2 {
        return Err(Error::domain("pool needs at least 2 rows"));
    }
    let q = queries.resolve(index.pool_size())?;
    let probes = index.query_all(&q);
    let fallback = probes.iter().filter(|p| p.fallback).count();
    let sims = probes.into_iter().map(|p| p.similarity).collect();
    NNReport::from_similarities(index.pool_size(), sims, IndexKind::Lsh, fallback)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(angles_deg: &[f64]) -> EmbeddingSet {
        let rows: Vec<[f32; 2]> = angles_deg
            .iter()
            .map(|a| {
                let r = a.to_radians();
                [r.cos() as f32, r.sin() as f32]
            })
            .collect();
        EmbeddingSet::from_rows(&rows).unwrap().normalize().unwrap()
    }

    #[test]
    fn antipodal_pair() {
        let r = nn_exact(&circle(&[0.0, 180.0]), &Queries::All).unwrap();
        assert!((r.mean_nn_similarity + 1.0).abs() < 1e-7);
        assert!((r.mean_gap - (1.0 - r.mean_nn_similarity)).abs() < 1e-12);
    }

    #[test]
    fn three_points_on_circle() {
        let r = nn_exact(&circle(&[0.0, 90.0, 180.0]), &Queries::All).unwrap();
        for m in &r.similarities {
            assert!(m.abs() < 1e-7);
        }
        assert!(r.mean_nn_similarity.abs() < 1e-7);
        assert!((r.mean_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn tails() {
        let t = tail_fraction(&[0.1, 0.5, 0.9], &[-1.0, 0.5, 0.95]).unwrap();
        assert_eq!(t.iter().map(|x| x.fraction).collect::<Vec<_>>(), vec![1.0, 2.0 / 3.0, 0.0]);
        assert!(tail_fraction(&[0.1], &[1.01]).is_err());
    }

    #[test]
    fn rejects_unnormalized_and_tiny_pools() {
        let raw = EmbeddingSet::from_rows(&[[1.0f32, 0.0], [0.0, 2.0]]).unwrap();
        assert!(nn_exact(&raw, &Queries::All).is_err());
        assert!(nn_exact(&circle(&[0.0]), &Queries::All).is_err());
        assert!(nn_exact(&circle(&[0.0, 1.0]), &Queries::Indices(vec![2])).is_err());
    }

    #[test]
    fn full_probe_equals_exact() {
        let spec = crate::nullmodel::NullModelSpec::uniform(7, 5).unwrap();
        let set = crate::nullmodel::sample_uniform_sphere(&spec, 500).unwrap();
        let params = LshParams { tables: 1, hyperplanes_per_table: 6, probe_radius: 6, seed: 3 };
        let idx = build_lsh_index(&set, params).unwrap();
        let a = nn_approx(&idx, &Queries::All).unwrap();
        let e = nn_exact(&set, &Queries::All).unwrap();
        assert_eq!(a.similarities, e.similarities);
        assert_eq!(a.index_kind, IndexKind::Lsh);
    }
}
