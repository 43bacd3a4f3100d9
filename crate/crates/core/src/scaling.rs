//! Duplicate-aware scaling-law fits.
//!
//! `Δ(C, K) = (L(C, K) − L_∞(C)) / L_∞(C)` is fitted in log space by the plane
//! law `Δ ≈ a C^β K^{−γ}` or the one-parameter ratio law
//! `Δ ≈ λ (√C / K)^η`, and turned back into a loss prediction
//! `L_∞(C)(1 + a C^β K^{−γ})`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{stats, Error, Result};

const COMPUTE_MATCH_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            other => Err(Error::Malformed(format!("unknown split {other:?}"))),
        }
    }
}

/// One training run. `pool_size = +∞` marks a baseline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub compute: f64,
    pub pool_size: f64,
    pub loss: f64,
    pub split: Split,
    pub keff_hat: Option<f64>,
}

impl RunRecord {
    pub fn is_baseline(&self) -> bool {
        self.pool_size.is_infinite()
    }

    fn validate(&self) -> Result<()> {
        if !(self.compute > 0.0 && self.compute.is_finite()) {
            return Err(Error::domain(format!("compute must be positive, got {}", self.compute)));
        }
        if !(self.loss > 0.0 && self.loss.is_finite()) {
            return Err(Error::domain(format!("loss must be positive, got {}", self.loss)));
        }
        if !(self.pool_size > 0.0) {
            return Err(Error::domain(format!("pool size must be positive, got {}", self.pool_size)));
        }
        Ok(())
    }
}

/// Fractional loss increase of one finite-pool run over its baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPoint {
    pub compute: f64,
    pub pool_size: f64,
    pub keff_hat: Option<f64>,
    pub split: Split,
    pub delta: f64,
}

/// A point for the plane and ratio fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub c: f64,
    pub k: f64,
    pub delta: f64,
}

impl DeltaPoint {
    /// Uses `K̂_eff` instead of the nominal pool size when `use_keff` is set
    /// and an estimate is present.
    pub fn plane_point(&self, use_keff: bool) -> PlanePoint {
        let k = match (use_keff, self.keff_hat) {
            (true, Some(k)) => k,
            _ => self.pool_size,
        };
        PlanePoint { c: self.compute, k, delta: self.delta }
    }
}

fn same_compute(a: f64, b: f64) -> bool {
    (a - b).abs() <= COMPUTE_MATCH_RTOL * a.abs().max(b.abs())
}

/// `Δ` for every finite-pool run in `runs`, matched to the baseline with the
/// same split and compute. Negative values are kept.
pub fn frac_increase(runs: &[RunRecord], baseline: &[RunRecord]) -> Result<Vec<DeltaPoint>> {
    let mut out = Vec::new();
    let mut orphans = Vec::new();
    for r in runs.iter().filter(|r| !r.is_baseline()) {
        r.validate()?;
        match baseline.iter().find(|b| b.split == r.split && same_compute(b.compute, r.compute)) {
            Some(b) => {
                b.validate()?;
                out.push(DeltaPoint {
                    compute: r.compute,
                    pool_size: r.pool_size,
                    keff_hat: r.keff_hat,
                    split: r.split,
                    delta: (r.loss - b.loss) / b.loss,
                });
            }
            None => orphans.push(r.compute),
        }
    }
    if !orphans.is_empty() {
        orphans.sort_by(f64::total_cmp);
        orphans.dedup();
        return Err(Error::UnmatchedCompute { computes: orphans });
    }
    Ok(out)
}

/// Splits a mixed run list into `(finite-pool runs, baseline runs)`.
pub fn partition_runs(runs: &[RunRecord]) -> (Vec<RunRecord>, Vec<RunRecord>) {
    runs.iter().partition(|r| !r.is_baseline())
}

/// `y ≈ coefficient · x^exponent` by least squares on `(ln x, ln y)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::domain(format!("power-law points must be positive, got {p:?}")));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    match stats::simple_ols(&x, &y) {
        Some((b0, b1)) if points.len() >= 2 => Ok((b0.exp(), b1)),
        _ => Err(Error::DegenerateFit("power law needs at least 2 distinct x".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneLawFit {
    pub a: f64,
    pub beta: f64,
    pub gamma: f64,
    pub method: String,
    pub n_points: usize,
    pub excluded_nonpositive: usize,
    /// `(predicted − observed) / observed` per fitted point.
    pub residuals: Vec<f64>,
    /// Sum of squared (weighted) residuals in `ln Δ`.
    pub ssr_log: f64,
    pub mean_abs_rel_err: f64,
    pub median_abs_rel_err: f64,
}

impl PlaneLawFit {
    pub fn delta(&self, c: f64, k: f64) -> f64 {
        if k.is_infinite() {
            return 0.0;
        }
        self.a * c.powf(self.beta) * k.powf(-self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioLawFit {
    pub lambda: f64,
    pub eta: f64,
    pub n_points: usize,
    pub excluded_nonpositive: usize,
    pub residuals: Vec<f64>,
    pub ssr_log: f64,
    pub mean_abs_rel_err: f64,
    pub median_abs_rel_err: f64,
}

impl RatioLawFit {
    pub fn delta(&self, c: f64, k: f64) -> f64 {
        self.lambda * (c.sqrt() / k).powf(self.eta)
    }
}

fn positive(points: &[PlanePoint], weights: Option<&[f64]>) -> Result<(Vec<PlanePoint>, Vec<f64>, usize)> {
    if let Some(w) = weights {
        if w.len() != points.len() {
            return Err(Error::LengthMismatch { left: points.len(), right: w.len() });
        }
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::domain("weights must be finite and >= 0"));
        }
    }
    let mut kept = Vec::new();
    let mut kw = Vec::new();
    let mut excluded = 0;
    for (i, p) in points.iter().enumerate() {
        if !(p.c > 0.0 && p.c.is_finite() && p.k > 0.0 && p.k.is_finite()) {
            return Err(Error::domain(format!("fit points need finite positive C and K, got {p:?}")));
        }
        if p.delta > 0.0 {
            kept.push(*p);
            kw.push(weights.map_or(1.0, |w| w[i]));
        } else {
            excluded += 1;
        }
    }
    Ok((kept, kw, excluded))
}

fn distinct(xs: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn error_summary(residuals: &[f64]) -> (f64, f64) {
    let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    (stats::mean(&abs), stats::median(&abs))
}

/// Ordinary least squares of `ln Δ` on `(1, ln C, ln K)`.
pub fn fit_plane_law(points: &[PlanePoint]) -> Result<PlaneLawFit> {
    fit_plane_law_weighted(points, None)
}

/// Weighted least squares in log space; pass inverse squared relative SEs.
/// Points with `Δ ≤ 0` are dropped and counted.
pub fn fit_plane_law_weighted(points: &[PlanePoint], weights: Option<&[f64]>) -> Result<PlaneLawFit> {
    let (pts, w, excluded) = positive(points, weights)?;
    if pts.len() < 3 {
        return Err(Error::DegenerateFit(format!("plane law needs >= 3 points with Δ > 0, has {}", pts.len())));
    }
    if distinct(pts.iter().map(|p| p.c)) < 2 {
        return Err(Error::RankDeficient("compute has no spread".into()));
    }
    if distinct(pts.iter().map(|p| p.k)) < 2 {
        return Err(Error::RankDeficient("pool size has no spread".into()));
    }
    let x1: Vec<f64> = pts.iter().map(|p| p.c.ln()).collect();
    let x2: Vec<f64> = pts.iter().map(|p| p.k.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.delta.ln()).collect();
    let sw = stats::pairwise_sum(&w);
    if !(sw > 0.0) {
        return Err(Error::DegenerateFit("weights sum to zero".into()));
    }
    let wmean = |v: &[f64]| stats::pairwise_sum(&v.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<_>>()) / sw;
    let (m1, m2, my) = (wmean(&x1), wmean(&x2), wmean(&y));
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..pts.len() {
        let (a, b, c) = (x1[i] - m1, x2[i] - m2, y[i] - my);
        s11 += w[i] * a * a;
        s12 += w[i] * a * b;
        s22 += w[i] * b * b;
        s1y += w[i] * a * c;
        s2y += w[i] * b * c;
    }
    let det = s11 * s22 - s12 * s12;
    if !(det > 1e-12 * s11 * s22) {
        return Err(Error::RankDeficient("ln C and ln K are collinear".into()));
    }
    let b1 = (s22 * s1y - s12 * s2y) / det;
    let b2 = (s11 * s2y - s12 * s1y) / det;
    let b0 = my - b1 * m1 - b2 * m2;
    let mut ssr = 0.0;
    let residuals: Vec<f64> = (0..pts.len())
        .map(|i| {
            let fitted = b0 + b1 * x1[i] + b2 * x2[i];
            ssr += w[i] * (y[i] - fitted) * (y[i] - fitted);
            (fitted - y[i]).exp_m1()
        })
        .collect();
    let (mean_e, median_e) = error_summary(&residuals);
    Ok(PlaneLawFit {
        a: b0.exp(),
        beta: b1,
        gamma: -b2,
        method: if weights.is_some() { "wls" } else { "ols" }.into(),
        n_points: pts.len(),
        excluded_nonpositive: excluded,
        residuals,
        ssr_log: ssr,
        mean_abs_rel_err: mean_e,
        median_abs_rel_err: median_e,
    })
}

/// Regression of `ln Δ` on `ln √C − ln K`.
pub fn fit_ratio_law(points: &[PlanePoint]) -> Result<RatioLawFit> {
    let (pts, _, excluded) = positive(points, None)?;
    if pts.len() < 2 {
        return Err(Error::DegenerateFit(format!("ratio law needs >= 2 points with Δ > 0, has {}", pts.len())));
    }
    let x: Vec<f64> = pts.iter().map(|p| 0.5 * p.c.ln() - p.k.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.delta.ln()).collect();
    let (b0, eta) = stats::simple_ols(&x, &y)
        .ok_or_else(|| Error::RankDeficient("√C/K has no spread".into()))?;
    let mut ssr = 0.0;
    let residuals: Vec<f64> = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| {
            let fitted = b0 + eta * xi;
            ssr += (yi - fitted) * (yi - fitted);
            (fitted - yi).exp_m1()
        })
        .collect();
    let (mean_e, median_e) = error_summary(&residuals);
    Ok(RatioLawFit {
        lambda: b0.exp(),
        eta,
        n_points: pts.len(),
        excluded_nonpositive: excluded,
        residuals,
        ssr_log: ssr,
        mean_abs_rel_err: mean_e,
        median_abs_rel_err: median_e,
    })
}

/// `L_∞(C)`, either tabulated at measured computes or a fitted power law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Table(Vec<(f64, f64)>),
    PowerLaw { coefficient: f64, exponent: f64 },
}

impl Baseline {
    pub fn from_runs(baseline: &[RunRecord]) -> Self {
        Baseline::Table(baseline.iter().map(|r| (r.compute, r.loss)).collect())
    }

    /// Power law through the baseline losses, for prediction at unseen `C`.
    pub fn power_law_from_runs(baseline: &[RunRecord]) -> Result<Self> {
        let pts: Vec<(f64, f64)> = baseline.iter().map(|r| (r.compute, r.loss)).collect();
        let (coefficient, exponent) = fit_power_law(&pts)?;
        Ok(Baseline::PowerLaw { coefficient, exponent })
    }

    pub fn eval(&self, c: f64) -> Option<f64> {
        match self {
            Baseline::Table(t) => t.iter().find(|(x, _)| same_compute(*x, c)).map(|&(_, l)| l),
            Baseline::PowerLaw { coefficient, exponent } => {
                (c > 0.0 && c.is_finite()).then(|| coefficient * c.powf(*exponent))
            }
        }
    }
}

/// `L_∞(C)·(1 + a C^β K^{−γ})`; with `K = K̂_eff` this needs only stream
/// geometry. `K = +∞` returns the baseline.
pub fn predict_restored_loss(fit: &PlaneLawFit, baseline: &Baseline, c: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::domain(format!("pool size must be positive, got {k}")));
    }
    let l_inf = baseline.eval(c).ok_or(Error::UndefinedBaseline(c))?;
    Ok(l_inf * (1.0 + fit.delta(c, k)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub predicted: f64,
    pub actual: f64,
    pub abs_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mean_abs_rel_err: f64,
    pub median_abs_rel_err: f64,
    pub rows: Vec<ErrorRow>,
}

pub fn fit_error_report(predictions: &[f64], actuals: &[f64]) -> Result<ErrorReport> {
    if predictions.len() != actuals.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: actuals.len() });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if actuals.iter().any(|a| *a == 0.0 || !a.is_finite()) {
        return Err(Error::domain("actual values must be finite and non-zero"));
    }
    let rows: Vec<ErrorRow> = predictions
        .iter()
        .zip(actuals)
        .map(|(&p, &a)| ErrorRow { predicted: p, actual: a, abs_rel_err: ((p - a) / a).abs() })
        .collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.abs_rel_err).collect();
    Ok(ErrorReport { mean_abs_rel_err: stats::mean(&errs), median_abs_rel_err: stats::median(&errs), rows })
}

fn parse_float(field: &str, line: usize, name: &str) -> Result<f64> {
    let f = field.trim();
    match f.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => f
            .parse()
            .map_err(|_| Error::Malformed(format!("line {line}: cannot parse {name} {f:?}"))),
    }
}

/// Parses `compute,pool_size,loss,split[,keff_hat]` with a header row; the
/// columns may appear in any order and `pool_size` may be `inf`.
pub fn parse_runs_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Empty("runs CSV"))?;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    let col = |name: &str| cols.iter().position(|c| c == name);
    let need = |name: &str| col(name).ok_or_else(|| Error::Malformed(format!("runs CSV lacks a {name:?} column")));
    let (ic, ik, il, is) = (need("compute")?, need("pool_size")?, need("loss")?, need("split")?);
    let ie = col("keff_hat");
    let mut runs = Vec::new();
    for (n, line) in lines {
        let lineno = n + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::DimensionMismatch { row: runs.len(), expected: cols.len(), found: f.len() });
        }
        let keff_hat = match ie.map(|i| f[i].trim()) {
            None | Some("") => None,
            Some(s) => Some(parse_float(s, lineno, "keff_hat")?),
        };
        let r = RunRecord {
            compute: parse_float(f[ic], lineno, "compute")?,
            pool_size: parse_float(f[ik], lineno, "pool_size")?,
            loss: parse_float(f[il], lineno, "loss")?,
            split: f[is].parse()?,
            keff_hat,
        };
        r.validate().map_err(|e| Error::Malformed(format!("line {lineno}: {e}")))?;
        runs.push(r);
    }
    Ok(runs)
}
