//! Random-hyperplane (sign) LSH with Hamming-ball multi-probe.

use std::collections::HashMap;

use rand::seq::index::sample as sample_indices;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::dot;
use crate::rng::{derive_seed, rng_from_seed};
use crate::{budget, EmbeddingSet, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshParams {
    pub tables: usize,
    pub hyperplanes_per_table: usize,
    pub probe_radius: usize,
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        Self { tables: 32, hyperplanes_per_table: 12, probe_radius: 1, seed: 0 }
    }
}

/// An index over a borrowed, normalised set. `pool` lists the rows of the set
/// that are indexed; query and candidate positions refer to it.
pub struct LshIndex<'a> {
    set: &'a EmbeddingSet,
    pool: Vec<usize>,
    params: LshParams,
    planes: Vec<f32>,
    signatures: Vec<u64>,
    buckets: Vec<HashMap<u64, Vec<u32>>>,
}

pub fn build_lsh_index(set: &EmbeddingSet, params: LshParams) -> Result<LshIndex<'_>> {
    let pool: Vec<usize> = (0..set.count()).collect();
    build_lsh_index_on(set, pool, params)
}

pub(crate) fn build_lsh_index_on(set: &EmbeddingSet, pool: Vec<usize>, params: LshParams) -> Result<LshIndex<'_>> {
    set.require_normalized()?;
    if params.tables == 0 {
        return Err(Error::domain("LSH needs at least one table"));
    }
    if params.hyperplanes_per_table > 64 {
        return Err(Error::domain("at most 64 hyperplanes per table"));
    }
    if pool.len() > u32::MAX as usize {
        return Err(Error::domain("LSH pool larger than u32::MAX"));
    }
    let dim = set.dim();
    let bits = params.hyperplanes_per_table;
    budget::check(params.tables * bits, dim)?;
    budget::check(pool.len(), params.tables.max(1))?;

    let mut rng = rng_from_seed(derive_seed(params.seed, "lsh-planes", 0));
    let planes: Vec<f32> = (0..params.tables * bits * dim)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g as f32
        })
        .collect();

    let tables = params.tables;
    let pl = &planes;
    let signatures: Vec<u64> = pool
        .par_iter()
        .flat_map_iter(|&i| {
            let row = set.row(i);
            (0..tables).map(move |t| signature(pl, dim, bits, t, row)).collect::<Vec<_>>()
        })
        .collect();

    let mut buckets = vec![HashMap::<u64, Vec<u32>>::new(); tables];
    for k in 0..pool.len() {
        for (t, table) in buckets.iter_mut().enumerate() {
            table.entry(signatures[k * tables + t]).or_default().push(k as u32);
        }
    }
    Ok(LshIndex { set, pool, params, planes, signatures, buckets })
}

fn signature(planes: &[f32], dim: usize, bits: usize, table: usize, row: &[f32]) -> u64 {
    let mut sig = 0u64;
    for b in 0..bits {
        let off = (table * bits + b) * dim;
        if dot(&planes[off..off + dim], row) >= 0.0 {
            sig |= 1 << b;
        }
    }
    sig
}

fn n_choose_k_sum(n: usize, r: usize) -> f64 {
    let mut total = 0.0;
    let mut c = 1.0;
    for k in 0..=r.min(n) {
        total += c;
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    total
}

/// Calls `f` with every `u64` within Hamming distance `r` of `sig` using the
/// lowest `bits` bits.
fn for_each_probe(sig: u64, bits: usize, r: usize, f: &mut impl FnMut(u64)) {
    fn rec(sig: u64, start: usize, bits: usize, left: usize, f: &mut impl FnMut(u64)) {
        f(sig);
        if left == 0 {
            return;
        }
        for b in start..bits {
            rec(sig ^ (1 << b), b + 1, bits, left - 1, f);
        }
    }
    rec(sig, 0, bits, r, f);
}

pub(crate) struct Probe {
    pub similarity: f64,
    pub fallback: bool,
}

impl LshIndex<'_> {
    pub fn params(&self) -> &LshParams {
        &self.params
    }

    pub fn pool_size(&self) -> usize {
        self.pool.len()
    }

    /// Signature of pool position `k` in table `t`.
    pub fn signature_of(&self, k: usize, t: usize) -> u64 {
        self.signatures[k * self.params.tables + t]
    }

    /// Signature of an arbitrary vector of the index dimension in table `t`.
    pub fn hash(&self, v: &[f32], t: usize) -> u64 {
        signature(&self.planes, self.set.dim(), self.params.hyperplanes_per_table, t, v)
    }

    pub(crate) fn query(&self, k: usize, stamp: &mut [u32], epoch: u32) -> Probe {
        let tables = self.params.tables;
        let bits = self.params.hyperplanes_per_table;
        let r = self.params.probe_radius.min(bits);
        let q = self.set.row(self.pool[k]);
        stamp[k] = epoch;
        let mut best = f64::NEG_INFINITY;
        let mut seen = 0usize;
        let mut visit = |members: &Vec<u32>, best: &mut f64| {
            for &m in members {
                let m = m as usize;
                if stamp[m] != epoch {
                    stamp[m] = epoch;
                    seen += 1;
                    let s = dot(q, self.set.row(self.pool[m]));
                    if s > *best {
                        *best = s;
                    }
                }
            }
        };
        for t in 0..tables {
            let sig = self.signatures[k * tables + t];
            let table = &self.buckets[t];
            if n_choose_k_sum(bits, r) > table.len() as f64 {
                for (key, members) in table {
                    if ((key ^ sig).count_ones() as usize) <= r {
                        visit(members, &mut best);
                    }
                }
            } else {
                for_each_probe(sig, bits, r, &mut |key| {
                    if let Some(members) = table.get(&key) {
                        visit(members, &mut best);
                    }
                });
            }
        }
        if seen > 0 {
            return Probe { similarity: best, fallback: false };
        }
        // No candidate shares a probed bucket: scan a random 1% of the pool.
        let n = self.pool.len();
        let m = (n / 100).max(1).min(n - 1);
        let mut rng = rng_from_seed(derive_seed(self.params.seed, "lsh-fallback", k as u64));
        let mut best = f64::NEG_INFINITY;
        for j in sample_indices(&mut rng, n - 1, m) {
            let j = if j >= k { j + 1 } else { j };
            best = best.max(dot(q, self.set.row(self.pool[j])));
        }
        Probe { similarity: best, fallback: true }
    }

    /// Per-query best similarities and fallback flags for pool positions
    /// `queries`, evaluated in parallel.
    pub(crate) fn query_all(&self, queries: &[usize]) -> Vec<Probe> {
        let n = self.pool.len();
        queries
            .par_iter()
            .map_init(
                || (vec![0u32; n], 0u32),
                |(stamp, epoch), &k| {
                    *epoch = epoch.wrapping_add(1);
                    if *epoch == 0 {
                        stamp.iter_mut().for_each(|s| *s = 0);
                        *epoch = 1;
                    }
                    self.query(k, stamp, *epoch)
                },
            )
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_enumeration_counts() {
        let mut keys = Vec::new();
        for_each_probe(0b1010, 6, 2, &mut |k| keys.push(k));
        assert_eq!(keys.len() as f64, n_choose_k_sum(6, 2));
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), 1 + 6 + 15);
        assert!(keys.iter().all(|k| (k ^ 0b1010).count_ones() <= 2));
    }

    #[test]
    fn zero_planes_is_one_bucket() {
        let set = EmbeddingSet::from_rows(&[[1.0f32, 0.0], [0.0, 1.0], [0.6, 0.8]]).unwrap().normalize().unwrap();
        let idx = build_lsh_index(&set, LshParams { tables: 1, hyperplanes_per_table: 0, probe_radius: 0, seed: 1 })
            .unwrap();
        assert_eq!(idx.buckets[0].len(), 1);
        assert_eq!(idx.buckets[0][&0].len(), 3);
    }
}
