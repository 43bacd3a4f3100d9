use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use semdup::keff::{estimate_keff, sample_repeat_stream, KeffConfig, LatentMixture};
use semdup::nnstats::{load_embeddings, run_ladder, save_embeddings, Format, LadderConfig, LshParams};
use semdup::nullmodel::{self, NullModelSpec, Regime};
use semdup::output::{csv_line, fmt_float};
use semdup::redundancy::{self, GradientClusterModel, ScoreSets};
use semdup::rng::derive_seed;
use semdup::scaling::{self, Baseline, RunRecord, Split};
use semdup::EmbeddingSet;

use crate::{
    write_output, BaselineModel, Command, FamilyArg, Failure, FitArgs, FormatArg, GenArgs, GenKind, KeffArgs,
    LshArgs, NnstatsArgs, NullArgs, SimulateArgs,
};

type Res<T = ()> = Result<T, Failure>;

pub(crate) fn dispatch(cmd: &Command, seed: u64, dir: &Path) -> Res {
    match cmd {
        Command::Null(a) => cmd_null(a, seed, dir),
        Command::Nnstats(a) => cmd_nnstats(a, seed, dir),
        Command::Keff(a) => cmd_keff(a, seed, dir),
        Command::Fit(a) => cmd_fit(a, dir),
        Command::Simulate(a) => cmd_simulate(a, seed, dir),
        Command::Gen(a) => cmd_gen(a, seed, dir),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("results serialise");
    s.push('\n');
    s
}

fn format_for(arg: FormatArg, path: &Path) -> Format {
    match arg {
        FormatArg::Auto => Format::from_path(path),
        FormatArg::Binary => Format::Binary,
        FormatArg::Csv => Format::Csv,
    }
}

fn load(path: &Path, fmt: FormatArg) -> Res<EmbeddingSet> {
    Ok(load_embeddings(path, format_for(fmt, path))?)
}

fn lsh_params(a: &LshArgs) -> LshParams {
    LshParams { tables: a.lsh_tables, hyperplanes_per_table: a.lsh_planes, probe_radius: a.lsh_radius, seed: 0 }
}

fn cmd_null(a: &NullArgs, seed: u64, dir: &Path) -> Res {
    if a.n_grid.is_empty() {
        return Err(Failure::usage("--n-grid is empty"));
    }
    if a.mc_replicates < 2 {
        return Err(Failure::usage("--mc-replicates must be >= 2 for a standard error"));
    }
    let uniform_theory = a.family == FamilyArg::Uniform || a.kappa == 0.0;
    let specs: Vec<NullModelSpec> = (0..a.n_grid.len())
        .map(|i| {
            let s = derive_seed(seed, "null", i as u64);
            match a.family {
                FamilyArg::Uniform => NullModelSpec::uniform(a.d, s),
                FamilyArg::Vmf => NullModelSpec::vmf_axis(a.d, a.kappa, s),
            }
        })
        .collect::<Result<_, _>>()?;
    let theory = a
        .n_grid
        .iter()
        .map(|&n| {
            if uniform_theory {
                nullmodel::expected_nn_similarity_uniform(a.d, n)
            } else {
                nullmodel::expected_nn_gap_vmf(a.d, a.kappa, n)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut csv = csv_line(&["N", "E_theory", "E_mc", "se", "regime"]);
    let mut rows = Vec::new();
    for ((&n, spec), th) in a.n_grid.iter().zip(&specs).zip(&theory) {
        let n_usize = usize::try_from(n).map_err(|_| Failure::usage(format!("N = {n} too large")))?;
        let reports = nullmodel::simulate_mean_nn(spec, n_usize, a.mc_replicates)?;
        let (mc, se) = nullmodel::summarize_replicates(&reports);
        let regime = match th.regime {
            Regime::ExactIntegral => "exact_integral",
            Regime::PowerLawAsymptotic => "power_law_asymptotic",
        };
        csv.push_str(&csv_line(&[n.to_string(), fmt_float(th.expected_nn_similarity), fmt_float(mc), fmt_float(se), regime.into()]));
        let z = (th.expected_nn_similarity - mc).abs() / se;
        log::info!("null N={n}: theory {} mc {mc} (z = {z:.2})", th.expected_nn_similarity);
        rows.push(json!({ "n": n, "z": z, "pass": z <= 4.0 }));
    }
    let pass = rows.iter().all(|r| r["pass"] == true);
    write_output(dir, "null.csv", &csv)?;
    write_output(
        dir,
        "summary.json",
        &to_json(&json!({ "family": a.family, "d": a.d, "kappa": a.kappa, "tolerance_se": 4.0, "rows": rows, "pass": pass })),
    )?;
    println!("{}", if pass { "pass" } else { "fail" });
    Ok(())
}

fn parse_window(s: &str) -> Res<(usize, usize)> {
    let bad = || Failure::usage(format!("--fit-window expects start:end, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().parse().map_err(|_| bad())?;
    if a >= b {
        return Err(bad());
    }
    Ok((a, b))
}

fn cmd_nnstats(a: &NnstatsArgs, seed: u64, dir: &Path) -> Res {
    let mut set = load(&a.input, a.format)?;
    if let Some(m) = a.matryoshka {
        set = set.matryoshka_slice(m)?;
    }
    let set = set.normalize()?;
    let sizes = if a.sizes.is_empty() {
        let v: Vec<usize> = (8..usize::BITS).map(|k| 1usize << k).take_while(|&n| n <= set.count()).collect();
        if v.is_empty() {
            return Err(Failure::usage(format!("file has {} rows; pass --sizes explicitly", set.count())));
        }
        v
    } else {
        a.sizes.clone()
    };
    let mut cfg = LadderConfig::new(sizes, derive_seed(seed, "nnstats", 0));
    cfg.queries_cap = a.queries_cap;
    cfg.exact_cutoff = a.lsh.exact_cutoff;
    cfg.lsh = lsh_params(&a.lsh);
    cfg.fit_window = a.fit_window.as_deref().map(parse_window).transpose()?;
    cfg.deviation_factor = a.deviation_factor;
    cfg.tail_thresholds = a.tails.clone();
    if !(a.deviation_factor > 1.0) {
        return Err(Failure::usage("--deviation-factor must exceed 1"));
    }
    let result = run_ladder(&set, &cfg)?;
    for f in &result.failures {
        log::warn!("rung N={} failed: {}", f.n, f.error);
    }
    write_output(dir, "ladder.json", &to_json(&result))?;
    write_output(dir, "ladder.csv", &result.to_csv())?;
    write_output(
        dir,
        "breakdown.json",
        &to_json(&json!({
            "dim": set.dim(),
            "fit_window": cfg.fit_window,
            "deviation_factor": cfg.deviation_factor,
            "powerlaw_fit": result.powerlaw_fit,
            "breakdown_n": result.breakdown_n,
            "failures": result.failures,
        })),
    )?;
    match (&result.powerlaw_fit, result.breakdown_n) {
        (Some(f), Some(n)) => println!("slope {:.4}, breakdown at N = {n}", f.slope),
        (Some(f), None) => println!("slope {:.4}, no breakdown", f.slope),
        _ => println!("no power-law fit"),
    }
    Ok(())
}

fn cmd_keff(a: &KeffArgs, seed: u64, dir: &Path) -> Res {
    let stream = load(&a.stream, a.format)?;
    let reference = load(&a.reference, a.format)?;
    let mut cfg = KeffConfig::new(a.m_plus, a.n_meas, derive_seed(seed, "keff", 0));
    cfg.stream_queries_cap = a.stream_queries_cap;
    cfg.reference_queries_cap = a.reference_queries_cap;
    cfg.exact_cutoff = a.lsh.exact_cutoff;
    cfg.lsh = lsh_params(&a.lsh);
    let est = estimate_keff(&stream, &reference, &cfg)?;
    write_output(dir, "keff.json", &to_json(&est))?;
    println!("k_eff_hat {}", fmt_float(est.k_eff_hat));
    Ok(())
}

/// `C=…,K=…` pairs separated by `;`.
fn parse_predict(s: &str) -> Res<Vec<(f64, f64)>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let mut c = None;
            let mut k = None;
            for kv in p.split(',') {
                let (key, val) = kv
                    .split_once('=')
                    .ok_or_else(|| Failure::usage(format!("--predict entry {kv:?} is not key=value")))?;
                let v = match val.trim().to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" => f64::INFINITY,
                    t => t.parse().map_err(|_| Failure::usage(format!("--predict value {val:?} is not a number")))?,
                };
                match key.trim() {
                    "C" | "c" => c = Some(v),
                    "K" | "k" => k = Some(v),
                    other => return Err(Failure::usage(format!("--predict key {other:?} is not C or K"))),
                }
            }
            match (c, k) {
                (Some(c), Some(k)) => Ok((c, k)),
                _ => Err(Failure::usage(format!("--predict entry {p:?} needs both C and K"))),
            }
        })
        .collect()
}

fn baseline_for(model: BaselineModel, runs: &[RunRecord], c: f64) -> Res<Baseline> {
    let table = Baseline::from_runs(runs);
    Ok(match model {
        BaselineModel::Table => table,
        BaselineModel::Power => Baseline::power_law_from_runs(runs)?,
        BaselineModel::Auto if table.eval(c).is_some() => table,
        BaselineModel::Auto => Baseline::power_law_from_runs(runs)?,
    })
}

fn cmd_fit(a: &FitArgs, dir: &Path) -> Res {
    let text = fs::read_to_string(&a.runs)
        .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", a.runs.display())))?;
    let runs = scaling::parse_runs_csv(&text)?;
    let (finite, base) = scaling::partition_runs(&runs);
    if base.is_empty() {
        return Err(Failure::usage("runs CSV has no baseline rows (pool_size = inf)"));
    }
    if finite.is_empty() {
        return Err(Failure::usage("runs CSV has no finite-pool rows"));
    }
    let targets = a.predict.as_deref().map(parse_predict).transpose()?.unwrap_or_default();
    let splits: BTreeSet<Split> = finite.iter().map(|r| r.split).collect();

    let mut report = BTreeMap::new();
    let mut pred_csv = csv_line(&["split", "compute", "pool_size", "baseline_loss", "delta", "predicted_loss"]);
    for split in splits {
        let f: Vec<RunRecord> = finite.iter().filter(|r| r.split == split).copied().collect();
        let b: Vec<RunRecord> = base.iter().filter(|r| r.split == split).copied().collect();
        let deltas = scaling::frac_increase(&f, &b)?;
        let points: Vec<_> = deltas.iter().map(|d| d.plane_point(a.use_keff)).collect();
        let plane = scaling::fit_plane_law(&points)?;
        let ratio = scaling::fit_ratio_law(&points);
        let table = Baseline::from_runs(&b);
        let mut predicted = Vec::new();
        let mut actual = Vec::new();
        for (r, p) in f.iter().zip(&points) {
            predicted.push(scaling::predict_restored_loss(&plane, &table, p.c, p.k)?);
            actual.push(r.loss);
        }
        let in_sample = scaling::fit_error_report(&predicted, &actual)?;
        for &(c, k) in &targets {
            let baseline = baseline_for(a.baseline_model, &b, c)?;
            let l = scaling::predict_restored_loss(&plane, &baseline, c, k)?;
            let l_inf = baseline.eval(c).ok_or(semdup::Error::UndefinedBaseline(c))?;
            pred_csv.push_str(&csv_line(&[
                split.to_string(),
                fmt_float(c),
                fmt_float(k),
                fmt_float(l_inf),
                fmt_float(plane.delta(c, k)),
                fmt_float(l),
            ]));
        }
        let ratio_json = match &ratio {
            Ok(r) => json!({
                "fit": r,
                "ssr_log_excess_over_plane": r.ssr_log - plane.ssr_log,
            }),
            Err(e) => json!({ "error": e.to_string() }),
        };
        report.insert(
            split.to_string(),
            json!({
                "plane": plane,
                "ratio": ratio_json,
                "in_sample": {
                    "mean_abs_rel_err": in_sample.mean_abs_rel_err,
                    "median_abs_rel_err": in_sample.median_abs_rel_err,
                },
            }),
        );
    }
    write_output(dir, "fit.json", &to_json(&report))?;
    write_output(dir, "predictions.csv", &pred_csv)?;
    for (split, r) in &report {
        println!(
            "{split}: a {} beta {} gamma {}",
            r["plane"]["a"], r["plane"]["beta"], r["plane"]["gamma"]
        );
    }
    Ok(())
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    d / (na * nb).sqrt()
}

fn cmd_simulate(a: &SimulateArgs, seed: u64, dir: &Path) -> Res {
    if a.replicates < redundancy::MIN_REPLICATES {
        return Err(Failure::usage(format!(
            "--replicates must be >= {} for a standard error, got {}",
            redundancy::MIN_REPLICATES,
            a.replicates
        )));
    }
    let mut cells = Vec::new();
    for &rho in &a.rho_grid {
        for &k in &a.k_grid {
            for &n in &a.n_grid {
                let i = cells.len() as u64;
                cells.push((GradientClusterModel::new(a.dim, k, a.sigma2, rho, derive_seed(seed, "simulate", i))?, n));
            }
        }
    }
    let curve = redundancy::hutter_degradation_curve(a.keff, a.rho, &a.curve_n_grid, a.alpha, a.l_star, a.b)?;
    if a.demo_samples < 2 {
        return Err(Failure::usage("--demo-samples must be >= 2"));
    }

    let mut var_csv = csv_line(&["rho", "k", "n", "replicates", "empirical", "se", "predicted", "z", "pass"]);
    let mut failing = Vec::new();
    for (model, n) in &cells {
        let c = redundancy::verify_variance_saturation(model, *n, a.replicates)?;
        let pass = c.z() <= 4.0;
        if !pass {
            failing.push(json!({ "rho": model.rho, "k": model.k, "n": n, "z": c.z() }));
        }
        var_csv.push_str(&csv_line(&[
            fmt_float(model.rho),
            model.k.to_string(),
            n.to_string(),
            c.replicates.to_string(),
            fmt_float(c.empirical),
            fmt_float(c.se),
            fmt_float(c.predicted),
            fmt_float(c.z()),
            pass.to_string(),
        ]));
    }

    let mut curve_csv = csv_line(&["n", "n_eff", "l_finite", "l_inf", "delta", "delta_linear"]);
    for p in &curve {
        curve_csv.push_str(&csv_line(&[
            p.n.to_string(),
            fmt_float(p.n_eff),
            fmt_float(p.l_finite),
            fmt_float(p.l_inf),
            fmt_float(p.delta),
            fmt_float(p.delta_linear),
        ]));
    }

    let mut sep_csv = csv_line(&["rho", "positives", "negatives", "zscore", "auc"]);
    for (i, &rho) in a.rho_grid.iter().enumerate() {
        let model = GradientClusterModel::new(a.dim, a.demo_k, a.sigma2, rho, derive_seed(seed, "simulate-demo", i as u64))?;
        let (v, labels) = redundancy::sample_cluster_gradients(&model, a.demo_samples)?;
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..v.len() {
            if let Some(j) = (i + 1..v.len()).find(|&j| labels[j] == labels[i]) {
                pos.push(cosine(&v[i], &v[j]));
            }
            if i + 1 < v.len() && labels[i + 1] != labels[i] {
                neg.push(cosine(&v[i], &v[i + 1]));
            }
        }
        let scores = ScoreSets::new(pos, neg);
        let (z, auc) = (redundancy::zscore(&scores)?, redundancy::auc(&scores)?);
        sep_csv.push_str(&csv_line(&[
            fmt_float(rho),
            scores.positives.len().to_string(),
            scores.negatives.len().to_string(),
            fmt_float(z),
            fmt_float(auc),
        ]));
    }

    let pass = failing.is_empty();
    write_output(dir, "variance.csv", &var_csv)?;
    write_output(dir, "hutter.csv", &curve_csv)?;
    write_output(dir, "separability.csv", &sep_csv)?;
    write_output(
        dir,
        "summary.json",
        &to_json(&json!({ "cells": cells.len(), "tolerance_se": 4.0, "failing": failing, "pass": pass })),
    )?;
    println!("{}", if pass { "pass" } else { "fail" });
    Ok(())
}

fn cmd_gen(a: &GenArgs, seed: u64, dir: &Path) -> Res {
    let s = derive_seed(seed, "gen", 0);
    let set = match a.kind {
        GenKind::Uniform => nullmodel::sample_uniform_sphere(&NullModelSpec::uniform(a.d, s)?, a.n)?,
        GenKind::Vmf => nullmodel::sample_vmf(&NullModelSpec::vmf_axis(a.d, a.kappa, s)?, a.n)?,
        GenKind::Stream => {
            let mix = match a.zipf {
                Some(e) => LatentMixture::zipf(a.k, e)?,
                None => LatentMixture::uniform(a.k)?,
            };
            sample_repeat_stream(&mix, a.d, a.n, s)?
        }
    };
    let path: PathBuf = if a.out.is_absolute() { a.out.clone() } else { dir.join(&a.out) };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    save_embeddings(&path, &set, format_for(a.format, &path))?;
    println!("wrote {} rows of dimension {} to {}", set.count(), set.dim(), path.display());
    Ok(())
}
