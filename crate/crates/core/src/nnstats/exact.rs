//! Exhaustive nearest-neighbour search.
//!
//! Candidate rows are packed into panels of [`LANES`] rows stored
//! coordinate-major, so one pass over a panel produces [`LANES`] dot products
//! per query. Each dot product is accumulated in `f64` in coordinate order,
//! which makes every value bit-identical to [`dot`].
//!
//! Bitwise-identical rows are collapsed first: a row with multiplicity ≥ 2 has
//! nearest-neighbour similarity equal to its own squared norm or a larger dot
//! with another distinct row, so the search only runs over distinct rows.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use rayon::prelude::*;

use crate::{budget, EmbeddingSet, Result};

const LANES: usize = 8;
const QUERY_BLOCK: usize = 4;

/// `Σ_c a_c b_c` accumulated in `f64` in coordinate order.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        s += f64::from(x) * f64::from(y);
    }
    s
}

/// Distinct rows of a matrix and the group each original row belongs to.
pub(crate) struct Groups {
    pub reps: Vec<usize>,
    pub multiplicity: Vec<u32>,
    pub group_of: Vec<usize>,
}

pub(crate) fn group_rows(set: &EmbeddingSet, rows: &[usize]) -> Groups {
    let mut by_hash: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut reps = Vec::new();
    let mut multiplicity = Vec::new();
    let mut group_of = Vec::with_capacity(rows.len());
    for &i in rows {
        let r = set.row(i);
        let mut h = DefaultHasher::new();
        for x in r {
            x.to_bits().hash(&mut h);
        }
        let bucket = by_hash.entry(h.finish()).or_default();
        let found = bucket.iter().copied().find(|&g| {
            set.row(reps[g]).iter().zip(r).all(|(a, b)| a.to_bits() == b.to_bits())
        });
        let g = match found {
            Some(g) => {
                multiplicity[g] += 1;
                g
            }
            None => {
                reps.push(i);
                multiplicity.push(1);
                bucket.push(reps.len() - 1);
                reps.len() - 1
            }
        };
        group_of.push(g);
    }
    Groups { reps, multiplicity, group_of }
}

struct Panels {
    dim: usize,
    n: usize,
    data: Vec<f32>,
}

impl Panels {
    fn new(set: &EmbeddingSet, rows: &[usize]) -> Self {
        let dim = set.dim();
        let panels = rows.len().div_ceil(LANES);
        let mut data = vec![0.0f32; panels * dim * LANES];
        for (k, &i) in rows.iter().enumerate() {
            let (p, l) = (k / LANES, k % LANES);
            let base = p * dim * LANES;
            for (c, &x) in set.row(i).iter().enumerate() {
                data[base + c * LANES + l] = x;
            }
        }
        Self { dim, n: rows.len(), data }
    }
}

/// For each of the `QUERY_BLOCK` queries (row-major `f64`, `dim` each), the
/// maximum dot product over all panel rows except `skip[b]`.
#[inline(always)]
fn scan_block(panels: &Panels, q: &[f64], skip: &[usize; QUERY_BLOCK]) -> [f64; QUERY_BLOCK] {
    let dim = panels.dim;
    let mut best = [f64::NEG_INFINITY; QUERY_BLOCK];
    for (p, panel) in panels.data.chunks_exact(dim * LANES).enumerate() {
        let mut acc = [[0.0f64; LANES]; QUERY_BLOCK];
        for c in 0..dim {
            let mut x = [0.0f64; LANES];
            for l in 0..LANES {
                x[l] = f64::from(panel[c * LANES + l]);
            }
            for b in 0..QUERY_BLOCK {
                let qc = q[b * dim + c];
                for l in 0..LANES {
                    acc[b][l] += qc * x[l];
                }
            }
        }
        let base = p * LANES;
        let live = (panels.n - base).min(LANES);
        for b in 0..QUERY_BLOCK {
            for (l, &v) in acc[b][..live].iter().enumerate() {
                if v > best[b] && base + l != skip[b] {
                    best[b] = v;
                }
            }
        }
    }
    best
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn scan_block_avx512(panels: &Panels, q: &[f64], skip: &[usize; QUERY_BLOCK]) -> [f64; QUERY_BLOCK] {
    scan_block(panels, q, skip)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn scan_block_avx2(panels: &Panels, q: &[f64], skip: &[usize; QUERY_BLOCK]) -> [f64; QUERY_BLOCK] {
    scan_block(panels, q, skip)
}

fn scan(panels: &Panels, q: &[f64], skip: &[usize; QUERY_BLOCK]) -> [f64; QUERY_BLOCK] {
    #[cfg(target_arch = "x86_64")]
    {
        // Only vector width changes; no contraction or reordering, so results
        // are identical on every path.
        if std::arch::is_x86_feature_detected!("avx512f") {
            return unsafe { scan_block_avx512(panels, q, skip) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            return unsafe { scan_block_avx2(panels, q, skip) };
        }
    }
    scan_block(panels, q, skip)
}

/// Nearest-neighbour similarity `max_{j≠i} ⟨v_i, v_j⟩` over the pool
/// `pool` (indices into `set`) for each pool position in `queries`.
pub(crate) fn max_similarities(set: &EmbeddingSet, pool: &[usize], queries: &[usize]) -> Result<Vec<f64>> {
    let groups = group_rows(set, pool);
    budget::check(groups.reps.len(), set.dim())?;
    let panels = Panels::new(set, &groups.reps);
    let dim = set.dim();

    // distinct query groups, in first-seen order
    let mut slot = vec![usize::MAX; groups.reps.len()];
    let mut qgroups = Vec::new();
    for &qi in queries {
        let g = groups.group_of[qi];
        if slot[g] == usize::MAX {
            slot[g] = qgroups.len();
            qgroups.push(g);
        }
    }

    let per_group: Vec<f64> = qgroups
        .par_chunks(QUERY_BLOCK)
        .flat_map_iter(|block| {
            let mut q = vec![0.0f64; QUERY_BLOCK * dim];
            let mut skip = [usize::MAX; QUERY_BLOCK];
            for b in 0..QUERY_BLOCK {
                let g = block[b.min(block.len() - 1)];
                skip[b] = g;
                for (c, &x) in set.row(groups.reps[g]).iter().enumerate() {
                    q[b * dim + c] = f64::from(x);
                }
            }
            let best = scan(&panels, &q, &skip);
            block
                .iter()
                .zip(best)
                .map(|(&g, m)| {
                    if groups.multiplicity[g] >= 2 {
                        let r = set.row(groups.reps[g]);
                        m.max(dot(r, r))
                    } else {
                        m
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();

    Ok(queries.iter().map(|&qi| per_group[slot[groups.group_of[qi]]]).collect())
}
