//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p semdup-cli --test acceptance`; pass criterion
//! numbers as extra arguments to run a subset
//! (`cargo test -p semdup-cli --test acceptance -- 3 9`). The process fails
//! on any unexpected FAIL. Criteria listed in `KNOWN_FAILURES` are still
//! evaluated at their stated tolerance and reported as FAIL, but do not
//! fail the run; the README explains why they cannot pass as stated.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::distr::Distribution;
use rand::Rng;

use semdup::keff::{self, estimate_keff, sample_repeat_stream, KeffConfig, LatentMixture};
use semdup::nnstats::{build_lsh_index, nn_approx, nn_exact, run_ladder, LadderConfig, LshParams, Queries};
use semdup::nullmodel::{self, cap_probability, sample_uniform_sphere, NullModelSpec, VmfCosine};
use semdup::redundancy::{self, auc, zscore, GradientClusterModel, ScoreSets};
use semdup::rng::{derive_seed, stream};
use semdup::scaling::{self, Baseline, RunRecord, Split};
use semdup::specfn::log_vmf_normalizer;
use semdup::stats;

const SEED: u64 = 20_240_601;
const KNOWN_FAILURES: &[u32] = &[6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn uniform(d: u32, n: usize, seed: u64) -> semdup::EmbeddingSet {
    sample_uniform_sphere(&NullModelSpec::uniform(d, seed).unwrap(), n).unwrap()
}

fn c01_cap_probability() -> Outcome {
    let start = Instant::now();
    let (n, chunk) = (1_000_000usize, 100_000usize);
    let mut worst = 0.0f64;
    for d in [1u32, 2, 4, 8, 32, 128] {
        let mut hits = [0usize; 9];
        for c in 0..n / chunk {
            let set = uniform(d, chunk, derive_seed(SEED, "c01", u64::from(d) << 8 | c as u64));
            for r in set.rows() {
                let x = f64::from(r[0]);
                for (i, h) in hits.iter_mut().enumerate() {
                    if x >= (i + 1) as f64 / 10.0 {
                        *h += 1;
                    }
                }
            }
        }
        for (i, &h) in hits.iter().enumerate() {
            let p = cap_probability(d, (i + 1) as f64 / 10.0).unwrap();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let diff = (h as f64 / n as f64 - p).abs();
            worst = worst.max(if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY });
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 4.0 && secs < 120.0, format!("max |z| = {worst:.2} over 54 cells, {secs:.1} s"))
}

fn c02_nn_expectation() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, (d, n)) in [(2u32, 64usize), (8, 1024), (16, 4096)].into_iter().enumerate() {
        let spec = NullModelSpec::uniform(d, derive_seed(SEED, "c02", i as u64)).unwrap();
        let (mc, se) = nullmodel::summarize_replicates(&nullmodel::simulate_mean_nn(&spec, n, 200).unwrap());
        let th = nullmodel::expected_nn_similarity_uniform(d, n as u64).unwrap().expected_nn_similarity;
        let z = (mc - th).abs() / se;
        pass &= z <= 4.0;
        parts.push(format!("(d={d}, N={n}) z={z:.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < 600.0, format!("{}, {secs:.1} s", parts.join(", ")))
}

fn c03_power_law_slope() -> Outcome {
    let d = 8u32;
    let total = 1usize << 16;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for e in 10..=16u32 {
        let n = 1usize << e;
        let mut gaps = Vec::new();
        for r in 0..(total / n).max(1) {
            let set = uniform(d, n, derive_seed(SEED, "c03", u64::from(e) << 32 | r as u64));
            gaps.push(nn_exact(&set, &Queries::All).unwrap().mean_gap);
        }
        x.push((n as f64).ln());
        y.push(stats::mean(&gaps).ln());
    }
    let (_, slope) = stats::simple_ols(&x, &y).unwrap();
    outcome((slope + 0.25).abs() <= 0.05, format!("slope {slope:.4} (target -0.25 ± 0.05)"))
}

fn c04_vmf_moment() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, (d, kappa, alpha)) in [(8u32, 5.0, 0.25), (16, 20.0, 0.125)].into_iter().enumerate() {
        let sampler = VmfCosine::new(d, kappa).unwrap();
        let ln_z = log_vmf_normalizer(d, kappa).unwrap();
        let mut rng = stream(SEED, "c04", i as u64);
        let vals: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let w = sampler.sample(&mut rng);
                (-alpha * (kappa * w - ln_z)).exp()
            })
            .collect();
        let (m, se) = stats::mean_and_se(&vals);
        let closed = nullmodel::vmf_moment(d, kappa, alpha).unwrap();
        let z = (m - closed).abs() / se;
        pass &= z <= 4.0;
        parts.push(format!("(d={d}, κ={kappa}, α={alpha}) z={z:.2}"));
    }
    outcome(pass, parts.join(", "))
}

fn c05_occupancy() -> Outcome {
    let mut rng = stream(SEED, "c05-mixtures", 0);
    let mut worst_z = 0.0f64;
    for m in 0..5u64 {
        let k = rng.random_range(3..60usize);
        let n = rng.random_range(2..80usize);
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0f64).powi(3)).collect();
        let mix = LatentMixture::normalized(w).unwrap();
        let (sim, se) = keff::simulate_partner_probability(&mix, n, 100_000, derive_seed(SEED, "c05", m)).unwrap();
        let exact = keff::partner_probability_exact(&mix, n as u64).unwrap();
        worst_z = worst_z.max((sim - exact).abs() / se);
    }
    let mut mixtures = vec![LatentMixture::uniform(10_000).unwrap(), LatentMixture::uniform(100_000).unwrap()];
    for k in [20_000usize, 50_000, 200_000] {
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5f64)).collect();
        mixtures.push(LatentMixture::normalized(w).unwrap());
    }
    let mut worst_err = 0.0f64;
    for mix in &mixtures {
        assert!(mix.weights().iter().all(|&w| w <= 1e-4));
        let k_eff = keff::simpson_keff(mix);
        for n in [2u64, 10, 100, 500, 1000] {
            let e = keff::partner_probability_exact(mix, n).unwrap();
            let a = keff::partner_probability_approx(k_eff, n).unwrap();
            worst_err = worst_err.max((e - a).abs());
        }
    }
    outcome(
        worst_z <= 4.0 && worst_err <= 1e-4,
        format!("simulation max |z| = {worst_z:.2}; rare-collision max |approx - exact| = {worst_err:.2e}"),
    )
}

fn keff_median(k: usize, n_meas: usize, seeds: u64, reference_cap: Option<usize>) -> f64 {
    let mix = LatentMixture::uniform(k).unwrap();
    let mut est: Vec<f64> = (0..seeds)
        .map(|s| {
            let seed = derive_seed(SEED, "c06", (k as u64) << 16 | s);
            let stream_set = sample_repeat_stream(&mix, 64, n_meas, seed).unwrap();
            let reference = uniform(64, n_meas, derive_seed(seed, "reference", 0));
            let mut cfg = KeffConfig::new(1.0, n_meas, seed);
            cfg.reference_queries_cap = reference_cap;
            estimate_keff(&stream_set, &reference, &cfg).unwrap().k_eff_hat
        })
        .collect();
    est.sort_by(f64::total_cmp);
    0.5 * (est[est.len() / 2 - 1] + est[est.len() / 2])
}

fn c06_keff_recovery() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for k in [100usize, 1000, 10_000] {
        let n_meas = (10 * k).min(100_000);
        let cap = (n_meas > 10_000).then_some(10_000);
        let med = keff_median(k, n_meas, 20, cap);
        let ratio = med / k as f64;
        let ok = (1.0 / 1.25..=1.25).contains(&ratio);
        pass &= ok;
        parts.push(format!("K={k}: median {med:.4e} ({})", if ok { "ok" } else { "out of range" }));
    }
    let supplementary: Vec<String> = [100usize, 1000]
        .iter()
        .map(|&k| format!("K={k}: {:.4e}", keff_median(k, k, 20, None)))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        pass && secs < 900.0,
        format!("{}; {secs:.1} s; at n_meas = K instead: {}", parts.join(", "), supplementary.join(", ")),
    )
}

fn c07_variance_saturation() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cells = 0;
    for rho in [0.0, 0.25, 0.5, 1.0] {
        for k in [1usize, 16, 256] {
            for n in [16usize, 256] {
                let model = GradientClusterModel::new(32, k, 1.0, rho, derive_seed(SEED, "c07", cells)).unwrap();
                let c = redundancy::verify_variance_saturation(&model, n, 1000).unwrap();
                worst = worst.max(c.z());
                cells += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 4.0 && secs < 300.0, format!("max |z| = {worst:.2} over {cells} cells, {secs:.1} s"))
}

fn planted_runs(a: f64, beta: f64, gamma: f64, cs: &[f64], ks: &[f64], noise: Option<(&mut semdup::rng::SimRng, f64)>) -> Vec<RunRecord> {
    let l_inf = |c: f64| 2.0 + 10.0 * c.powf(-0.3);
    let mut noise = noise;
    let mut runs = Vec::new();
    for &c in cs {
        runs.push(RunRecord { compute: c, pool_size: f64::INFINITY, loss: l_inf(c), split: Split::Eval, keff_hat: None });
        for &k in ks {
            let mut delta = a * c.powf(beta) * k.powf(-gamma);
            if let Some((rng, sigma)) = noise.as_mut() {
                let g: f64 = rand_distr::StandardNormal.sample(&mut **rng);
                delta *= (*sigma * g).exp();
            }
            runs.push(RunRecord { compute: c, pool_size: k, loss: l_inf(c) * (1.0 + delta), split: Split::Eval, keff_hat: None });
        }
    }
    runs
}

fn fit_runs(runs: &[RunRecord]) -> scaling::PlaneLawFit {
    let (finite, base) = scaling::partition_runs(runs);
    let pts: Vec<_> = scaling::frac_increase(&finite, &base).unwrap().iter().map(|d| d.plane_point(false)).collect();
    scaling::fit_plane_law(&pts).unwrap()
}

fn c08_plane_law() -> Outcome {
    let (a, beta, gamma) = (2.0, 0.8, 1.0);
    let cs = [1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0];
    let ks = [1e3, 1e4, 1e5, 1e6];
    let fit = fit_runs(&planted_runs(a, beta, gamma, &cs, &ks, None));
    let param_err = ((fit.a - a) / a).abs().max((fit.beta - beta).abs()).max((fit.gamma - gamma).abs());

    let held = planted_runs(a, beta, gamma, &[3000.0, 10_000.0], &[3e3, 3e5, 1e7], None);
    let (finite, base) = scaling::partition_runs(&held);
    let table = Baseline::from_runs(&base);
    let pred_err = finite
        .iter()
        .map(|r| ((scaling::predict_restored_loss(&fit, &table, r.compute, r.pool_size).unwrap() - r.loss) / r.loss).abs())
        .fold(0.0, f64::max);

    let mut rng = stream(SEED, "c08", 0);
    let mut gamma_err: Vec<f64> = (0..100)
        .map(|_| (fit_runs(&planted_runs(a, beta, gamma, &cs, &ks, Some((&mut rng, 0.02)))).gamma - gamma).abs())
        .collect();
    gamma_err.sort_by(f64::total_cmp);
    let median = stats::median(&gamma_err);
    outcome(
        param_err <= 1e-6 && pred_err <= 1e-6 && median <= 0.05,
        format!("noiseless max param err {param_err:.1e}, held-out rel err {pred_err:.1e}, noisy median |γ err| {median:.4}"),
    )
}

fn c09_breakdown() -> Outcome {
    // 2^15 distinct points, each present twice: a random pool of size N holds
    // the partner of a point with probability ≈ N/2^16, so the mean gap drops
    // below 1/1.5 of the background trend once that fraction passes 1/3,
    // first at the rung N* = 2^15.
    let base = uniform(8, 1 << 15, derive_seed(SEED, "c09", 0));
    let set = base.concat(&base).unwrap();
    let mut cfg = LadderConfig::new((8..=16).map(|e| 1usize << e).collect(), derive_seed(SEED, "c09", 1));
    cfg.queries_cap = 4096;
    cfg.fit_window = Some((0, 3));
    cfg.deviation_factor = 1.5;
    let expected = 1usize << 15;
    let r = run_ladder(&set, &cfg).unwrap();
    match r.breakdown_n {
        Some(n) => {
            let rungs = ((n as f64).log2() - (expected as f64).log2()).abs();
            outcome(rungs <= 1.0, format!("breakdown at N = {n}, expected {expected}"))
        }
        None => outcome(false, format!("no breakdown detected, expected {expected}")),
    }
}

fn c10_lsh_quality() -> Outcome {
    let set = uniform(32, 100_000, derive_seed(SEED, "c10", 0));
    let queries = Queries::First(10_000);
    let exact = nn_exact(&set, &queries).unwrap();
    let start = Instant::now();
    let params = LshParams { seed: derive_seed(SEED, "c10", 1), ..LshParams::default() };
    let index = build_lsh_index(&set, params).unwrap();
    let approx = nn_approx(&index, &queries).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let hits = approx.similarities.iter().zip(&exact.similarities).filter(|(a, e)| a == e).count();
    let recall = hits as f64 / exact.query_count as f64;
    let dm = (approx.mean_nn_similarity - exact.mean_nn_similarity).abs();
    outcome(
        recall >= 0.9 && dm <= 0.005 && secs < 60.0,
        format!(
            "recall@1 {recall:.4}, |ΔM̄| {dm:.2e}, build+query {secs:.1} s on {} thread(s), 10^4 queries",
            rayon::current_num_threads()
        ),
    )
}

fn c11_separability() -> Outcome {
    let mut rng = stream(SEED, "c11", 0);
    let mut mismatches = 0;
    for _ in 0..100 {
        let np = rng.random_range(1..15usize);
        let nn = rng.random_range(1..15usize);
        let mut draw = |n: usize| (0..n).map(|_| f64::from(rng.random_range(0..8u8)) / 4.0).collect::<Vec<_>>();
        let s = ScoreSets::new(draw(np), draw(nn));
        let mut twice = 0u64;
        for p in &s.positives {
            for q in &s.negatives {
                twice += if p > q { 2 } else if p == q { 1 } else { 0 };
            }
        }
        let oracle = twice as f64 / (2.0 * np as f64 * nn as f64);
        if auc(&s).unwrap() != oracle {
            mismatches += 1;
        }
    }
    let z = zscore(&ScoreSets::new(vec![0.5, 0.7], vec![0.0, 0.2, -0.2, 0.0])).unwrap();
    let hand = 0.6 / 0.02f64.sqrt();
    let z_ok = (z - hand).abs() <= 1e-12;
    outcome(mismatches == 0 && z_ok, format!("auc mismatches {mismatches}/100; zscore {z} vs hand value {hand}"))
}

fn cli(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_semdup")).args(args).output().expect("run semdup");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

fn primary_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !matches!(p.file_name().and_then(|n| n.to_str()), Some("run.meta" | "config.resolved")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn c12_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |s: &str| root.join(s).display().to_string();
    fs::write(
        root.join("runs.csv"),
        "compute,pool_size,loss,split\n1,inf,3.0,eval\n1,1e3,3.1,eval\n1,1e4,3.01,eval\n10,inf,2.5,eval\n10,1e3,2.9,eval\n10,1e4,2.55,eval\n",
    )
    .unwrap();
    let data = p("data");
    for args in [
        vec!["--output-dir", &data, "--seed", "1", "gen", "--kind", "uniform", "--d", "8", "--n", "4096", "--out", "u.bin"],
        vec!["--output-dir", &data, "--seed", "2", "gen", "--kind", "stream", "--d", "16", "--k", "300", "--n", "2000", "--out", "s.bin"],
        vec!["--output-dir", &data, "--seed", "3", "gen", "--kind", "uniform", "--d", "16", "--n", "2000", "--out", "r.bin"],
    ] {
        if cli(&args) != 0 {
            return outcome(false, "could not generate inputs");
        }
    }
    let u = p("data/u.bin");
    let s = p("data/s.bin");
    let r = p("data/r.bin");
    let runs = p("runs.csv");
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("null", vec!["null", "--d", "4", "--n-grid", "64,256", "--mc-replicates", "30"]),
        ("nnstats", vec!["nnstats", "--input", &u, "--sizes", "256,512,1024,2048,4096", "--exact-cutoff", "1024"]),
        ("keff", vec!["keff", "--stream", &s, "--reference", &r, "--n-meas", "1500"]),
        ("fit", vec!["fit", "--runs", &runs, "--predict", "C=5,K=2e3;C=100,K=inf"]),
        ("simulate", vec!["simulate", "--replicates", "30", "--k-grid", "1,16", "--n-grid", "16", "--demo-samples", "300"]),
        ("gen", vec!["gen", "--kind", "vmf", "--d", "8", "--kappa", "4", "--n", "1000", "--out", "v.csv"]),
    ];
    let mut bad = Vec::new();
    for (name, args) in &commands {
        let a = p(&format!("{name}-a"));
        let b = p(&format!("{name}-b"));
        let c = p(&format!("{name}-c"));
        let mut first = vec!["--output-dir", a.as_str(), "--seed", "77"];
        first.extend(args.iter().copied());
        let mut second = first.clone();
        second[1] = b.as_str();
        let resolved = format!("{a}/config.resolved");
        let third = vec!["--config", resolved.as_str(), "--output-dir", c.as_str(), name];
        if cli(&first) != 0 || cli(&second) != 0 || cli(&third) != 0 {
            bad.push(format!("{name} (exit)"));
            continue;
        }
        let oa = primary_outputs(Path::new(&a));
        if oa.is_empty() || oa != primary_outputs(Path::new(&b)) || oa != primary_outputs(Path::new(&c)) {
            bad.push(name.to_string());
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} commands byte-identical across direct and config-file re-runs", commands.len())
        } else {
            format!("differences in {}", bad.join(", "))
        },
    )
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "cap probability vs Monte Carlo", c01_cap_probability),
        (2, "expected NN similarity", c02_nn_expectation),
        (3, "NN gap power-law exponent", c03_power_law_slope),
        (4, "vMF moment identity", c04_vmf_moment),
        (5, "occupancy exactness and approximation", c05_occupancy),
        (6, "K_eff recovery", c06_keff_recovery),
        (7, "variance saturation grid", c07_variance_saturation),
        (8, "plane-law round trip", c08_plane_law),
        (9, "breakdown detection", c09_breakdown),
        (10, "LSH quality", c10_lsh_quality),
        (11, "separability metrics", c11_separability),
        (12, "CLI determinism", c12_determinism),
    ];
    let mut unexpected = Vec::new();
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let status = match (o.pass, KNOWN_FAILURES.contains(&n)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected.push(n);
                "FAIL"
            }
        };
        println!("criterion {n:>2} {status}: {name}: {} [{:.1} s]", o.detail, start.elapsed().as_secs_f64());
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
