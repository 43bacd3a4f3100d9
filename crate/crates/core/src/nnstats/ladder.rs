//! Nested subsample ladders and power-law breakdown detection.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lsh::build_lsh_index_on;
use super::{nn_approx, nn_exact_pool, LshParams, NNReport, Queries, DEFAULT_TAIL_THRESHOLDS};
use crate::output::{csv_line, fmt_float};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{stats, EmbeddingSet, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderConfig {
    pub sizes: Vec<usize>,
    pub queries_cap: usize,
    pub seed: u64,
    /// Rungs up to this size use exhaustive search, larger ones LSH.
    pub exact_cutoff: usize,
    pub lsh: LshParams,
    /// Range of entry positions used for the power-law fit; `None` uses all.
    pub fit_window: Option<(usize, usize)>,
    pub deviation_factor: f64,
    pub tail_thresholds: Vec<f64>,
}

impl LadderConfig {
    pub fn new(sizes: Vec<usize>, seed: u64) -> Self {
        Self {
            sizes,
            queries_cap: 100_000,
            seed,
            exact_cutoff: 200_000,
            lsh: LshParams::default(),
            fit_window: None,
            deviation_factor: 1.5,
            tail_thresholds: DEFAULT_TAIL_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub n: usize,
    pub report: NNReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungFailure {
    pub n: usize,
    pub error: String,
}

/// `ln Δ̄ ≈ intercept + slope·ln N` over entries `window_start..window_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub intercept: f64,
    pub slope: f64,
    pub window_start: usize,
    pub window_end: usize,
}

impl PowerFit {
    pub fn predict(&self, n: usize) -> f64 {
        (self.intercept + self.slope * (n as f64).ln()).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderResult {
    pub entries: Vec<LadderEntry>,
    pub failures: Vec<RungFailure>,
    pub powerlaw_fit: Option<PowerFit>,
    pub breakdown_n: Option<usize>,
}

impl LadderResult {
    /// One line per rung: sizes, aggregates, then one column per tail
    /// threshold of the first entry.
    pub fn to_csv(&self) -> String {
        let tails: Vec<f64> = self
            .entries
            .first()
            .map(|e| e.report.tail_fractions.iter().map(|t| t.threshold).collect())
            .unwrap_or_default();
        let mut header: Vec<String> = [
            "n",
            "query_count",
            "index_kind",
            "mean_nn_similarity",
            "mean_gap",
            "mean_angle",
            "fallback_queries",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(tails.iter().map(|t| format!("tail_{t}")));
        let mut out = csv_line(&header);
        for e in &self.entries {
            let r = &e.report;
            let mut row = vec![
                e.n.to_string(),
                r.query_count.to_string(),
                match r.index_kind {
                    super::IndexKind::Exact => "exact".to_string(),
                    super::IndexKind::Lsh => "lsh".to_string(),
                },
                fmt_float(r.mean_nn_similarity),
                fmt_float(r.mean_gap),
                fmt_float(r.mean_angle),
                r.fallback_queries.to_string(),
            ];
            row.extend(r.tail_fractions.iter().map(|t| fmt_float(t.fraction)));
            out.push_str(&csv_line(&row));
        }
        out
    }
}

/// [`run_ladder`] with default settings.
pub fn run_subsample_ladder(set: &EmbeddingSet, sizes: &[usize], queries_cap: usize, seed: u64) -> Result<LadderResult> {
    let mut cfg = LadderConfig::new(sizes.to_vec(), seed);
    cfg.queries_cap = queries_cap;
    run_ladder(set, &cfg)
}

/// Draws one seeded partial shuffle of the rows; rung `N` is its first `N`
/// entries, so rungs are nested. Queries are the first `min(N, queries_cap)`
/// rows of each rung. A failing rung is recorded and the rest still run.
pub fn run_ladder(set: &EmbeddingSet, cfg: &LadderConfig) -> Result<LadderResult> {
    set.require_normalized()?;
    let sizes = &cfg.sizes;
    if sizes.is_empty() {
        return Err(Error::Empty("ladder sizes"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("ladder sizes must be strictly increasing"));
    }
    if sizes[0] < 2 {
        return Err(Error::domain("ladder sizes must be >= 2"));
    }
    let max = *sizes.last().unwrap();
    if max > set.count() {
        return Err(Error::domain(format!(
            "ladder size {max} exceeds the {} rows available",
            set.count()
        )));
    }
    if cfg.queries_cap == 0 {
        return Err(Error::domain("queries cap must be >= 1"));
    }

    let mut rng = rng_from_seed(derive_seed(cfg.seed, "ladder-shuffle", 0));
    let mut perm: Vec<usize> = (0..set.count()).collect();
    for i in 0..max {
        let j = rng.random_range(i..perm.len());
        perm.swap(i, j);
    }

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (rung, &n) in sizes.iter().enumerate() {
        let pool = &perm[..n];
        let queries = Queries::First(cfg.queries_cap.min(n));
        let report = if n <= cfg.exact_cutoff {
            nn_exact_pool(set, pool, &queries)
        } else {
            let mut lsh = cfg.lsh;
            lsh.seed = derive_seed(cfg.seed, "ladder-lsh", rung as u64);
            build_lsh_index_on(set, pool.to_vec(), lsh).and_then(|idx| nn_approx(&idx, &queries))
        };
        match report.and_then(|r| r.with_tails(&cfg.tail_thresholds)) {
            Ok(report) => entries.push(LadderEntry { n, report }),
            Err(e) => failures.push(RungFailure { n, error: e.to_string() }),
        }
    }

    let mut result = LadderResult { entries, failures, powerlaw_fit: None, breakdown_n: None };
    let window = match cfg.fit_window {
        Some((a, b)) => a..b.min(result.entries.len()),
        None => 0..result.entries.len(),
    };
    if let Ok(fit) = fit_on_window(&result, window.clone()) {
        result.powerlaw_fit = Some(fit);
        result.breakdown_n = detect_breakdown(&result, window, cfg.deviation_factor).ok().flatten();
    }
    Ok(result)
}

fn fit_on_window(ladder: &LadderResult, window: Range<usize>) -> Result<PowerFit> {
    if window.end > ladder.entries.len() || window.start >= window.end {
        return Err(Error::domain(format!(
            "fit window {window:?} outside the {} ladder entries",
            ladder.entries.len()
        )));
    }
    if window.len() < 3 {
        return Err(Error::domain(format!("fit window needs >= 3 rungs, has {}", window.len())));
    }
    let rungs = &ladder.entries[window.clone()];
    if let Some(e) = rungs.iter().find(|e| !(e.report.mean_gap > 0.0)) {
        return Err(Error::DegenerateFit(format!("mean gap {} at N = {}", e.report.mean_gap, e.n)));
    }
    let x: Vec<f64> = rungs.iter().map(|e| (e.n as f64).ln()).collect();
    let y: Vec<f64> = rungs.iter().map(|e| e.report.mean_gap.ln()).collect();
    let (intercept, slope) =
        stats::simple_ols(&x, &y).ok_or_else(|| Error::DegenerateFit("rung sizes have no spread".into()))?;
    Ok(PowerFit { intercept, slope, window_start: window.start, window_end: window.end })
}

/// Fits `ln Δ̄` against `ln N` on `fit_window` and returns the smallest rung
/// whose observed `Δ̄` falls below the fitted value divided by
/// `deviation_factor`.
pub fn detect_breakdown(ladder: &LadderResult, fit_window: Range<usize>, deviation_factor: f64) -> Result<Option<usize>> {
    if !(deviation_factor > 1.0 && deviation_factor.is_finite()) {
        return Err(Error::domain(format!("deviation factor must exceed 1, got {deviation_factor}")));
    }
    let fit = fit_on_window(ladder, fit_window)?;
    Ok(ladder
        .entries
        .iter()
        .find(|e| e.report.mean_gap < fit.predict(e.n) / deviation_factor)
        .map(|e| e.n))
}
