//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Runs in-process on one scratch directory;
//! expect just under an hour on a single core.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use glmar::bundle::Bundle;
use glmar::checks::{self, CheckResult};
use glmar::cli::{expand_config, Cli};
use glmar::commands::dispatch;
use glmar_core::hmc::{leapfrog, run_hmc, GlmArTarget, HmcConfig, Parameterization, Target};
use glmar_core::lattice::SpatialKernel;
use glmar_core::model::{ols_init, HyperPriors, SuffStats};
use glmar_core::vb::{run_vb_from, VBConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

const IMAGES: [&str; 6] = ["W1", "W2", "W3", "W4", "W5", "A1"];

fn glmar(args: &[&str]) {
    let mut raw = vec!["glmar".into()];
    raw.extend(args.iter().map(Into::into));
    let raw = expand_config(raw).expect("config expansion");
    let cli = Cli::try_parse_from(&raw).unwrap_or_else(|e| panic!("glmar {args:?}: {e}"));
    let argv: Vec<String> = raw.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    dispatch(&cli, &argv).unwrap_or_else(|e| panic!("glmar {args:?}: {e}"));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn result(name: &'static str, start: Instant, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
        elapsed: start.elapsed().as_secs_f64(),
    }
}

fn fmt_list(v: &[f64], digits: usize) -> String {
    v.iter().map(|x| format!("{x:.digits$}")).collect::<Vec<_>>().join(" ")
}

/// Per-method rows of `report.json`, keyed by method then statistic.
fn method_rows(report: &Value) -> BTreeMap<String, BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for m in report["methods"].as_array().unwrap() {
        let mut stats = BTreeMap::new();
        for s in ["asbias", "amse", "avar", "correlation", "moran_i"] {
            stats.insert(s.to_string(), floats(&m[s]));
        }
        out.insert(m["method"].as_str().unwrap().to_string(), stats);
    }
    out
}

fn comparison_blocks(report: &Value) -> BTreeMap<String, (f64, f64)> {
    report["comparisons"][0]["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| {
            (
                b["image"].as_str().unwrap().to_string(),
                (b["amse_ratio"].as_f64().unwrap(), b["estimate_correlation"].as_f64().unwrap()),
            )
        })
        .collect()
}

fn sensitivity_at_090(report: &Value, method: &str) -> f64 {
    let s = report["sensitivity"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["method"] == method)
        .unwrap();
    let first = &s["curve"][0];
    assert!((first[0].as_f64().unwrap() - 0.9).abs() < 1e-12);
    first[1].as_f64().unwrap()
}

/// Mean |ΔH| over leapfrog trajectories started from posterior draws of a
/// scenario-I replicate, at the tuned `(δ, L)` and at `(δ/2, 2L)`.
fn energy_error_scaling(bundle_dir: &Path) -> (f64, f64, f64, f64, usize) {
    let bundle = Bundle::read(bundle_dir).unwrap();
    let kernel = SpatialKernel::build(&bundle.mask, bundle.mask.dims().len()).unwrap();
    let stats = SuffStats::new(&bundle.data).unwrap();
    let hp = HyperPriors::default();
    let ols = ols_init(&bundle.data, &kernel).unwrap();
    let vb = run_vb_from(&stats, &kernel, &hp, &VBConfig::default(), &ols, &[]).unwrap();
    let init = vb.posterior.mean_state();
    let cfg = HmcConfig {
        n_leapfrog: 25,
        n_iter: 1500,
        n_burn: 1000,
        tune_rounds: 3,
        thin: 10,
        keep_draws: true,
        seed: 11,
        ..HmcConfig::default()
    };
    let fit = run_hmc(&stats, &kernel, &hp, &init, &[], Parameterization::Natural, &cfg, Some(&[])).unwrap();
    let mass = fit.chain.mass.clone();
    let inv_mass: Vec<f64> = mass.iter().map(|m| 1.0 / m).collect();
    let delta = fit.chain.step_size;
    let store = &fit.chain.store;

    let mut target = GlmArTarget::new(&stats, &kernel, &hp, &init, &[], Parameterization::Natural).unwrap();
    let dim = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kinetic = |xi: &[f64]| 0.5 * xi.iter().zip(&inv_mass).map(|(x, m)| x * x * m).sum::<f64>();
    let mut sums = [0.0f64; 2];
    let mut n = 0;
    let mut diverged = 0;
    for d in 0..store.count().min(50) {
        let theta = store.draw(d).to_vec();
        let mut grad = vec![0.0; dim];
        let lp = target.log_density_and_grad(&theta, &mut grad).unwrap();
        for _ in 0..4 {
            let xi: Vec<f64> = mass
                .iter()
                .map(|m| m.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let h0 = -lp + kinetic(&xi);
            let mut dh = [0.0; 2];
            let mut ok = true;
            for (i, (step, l)) in [(delta, 25), (delta / 2.0, 50)].into_iter().enumerate() {
                let out = leapfrog(&mut target, &theta, &xi, &grad, step, l, &inv_mass);
                if out.diverged {
                    ok = false;
                    break;
                }
                dh[i] = (-out.log_density + kinetic(&out.momentum) - h0).abs();
            }
            if ok {
                sums[0] += dh[0];
                sums[1] += dh[1];
                n += 1;
            } else {
                diverged += 1;
            }
        }
    }
    let full = sums[0] / n as f64;
    let half = sums[1] / n as f64;
    (full / half, delta, full, half, diverged)
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().unwrap();
    let root: PathBuf = scratch.path().to_path_buf();
    let mut results: Vec<CheckResult> = Vec::new();
    let mut report = |r: CheckResult| {
        println!("{}", r.line());
        results.push(r);
    };

    report(checks::likelihood_equivalence(0));
    report(checks::gradient_oracle(0));
    report(checks::gaussian_oracle(0));

    // Scenario I at desk scale, shared by the calibration and comparison
    // criteria.
    let s1 = root.join("study1");
    let start6 = Instant::now();
    glmar(&["simulate", "--preset", "study1", "--seed", "7", "--out", p(&s1)]);
    glmar(&["fit", "--data", p(&s1), "--backend", "vb"]);
    let start4 = Instant::now();
    glmar(&[
        "fit", "--data", p(&s1), "--backend", "hmc", "--init", "vb", "--leapfrog", "25", "--tune-rounds", "3",
    ]);
    let hmc_secs = start4.elapsed().as_secs_f64();

    {
        let start = Instant::now();
        let mut rates = Vec::new();
        let mut exp_dh = Vec::new();
        for r in 0..20 {
            let d = json(&s1.join(format!("fits/hmc/rep_{r:03}/diagnostics.json")));
            rates.push(d["acceptance_rate"].as_f64().unwrap());
            exp_dh.push(d["mean_exp_neg_delta_h"].as_f64().unwrap());
        }
        let in_band = rates.iter().filter(|a| (0.55..=0.75).contains(*a)).count();
        let pooled = exp_dh.iter().sum::<f64>() / exp_dh.len() as f64;
        let (ratio, delta, full, half, diverged) = energy_error_scaling(&s1.join("rep_000"));
        let passed = in_band >= 18 && (0.9..=1.1).contains(&pooled) && (3.0..=5.0).contains(&ratio);
        let mut r = result(
            "hmc calibration",
            start,
            passed,
            format!(
                "acceptance in [0.55,0.75] for {in_band}/20 (min {:.3}, max {:.3}); E[exp(-dH)] = {pooled:.4}; \
                 mean|dH| {full:.4} at step {delta:.4} -> {half:.4} at half the step, ratio {ratio:.2} ({diverged} diverged)",
                rates.iter().copied().fold(f64::INFINITY, f64::min),
                rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
        );
        r.elapsed += hmc_secs;
        report(r);
    }

    report(checks::vb_monotonicity(0));

    glmar(&["report", "--data", p(&s1), "--compare", "vb", "hmc"]);
    let rep1 = json(&s1.join("report/report.json"));
    {
        let rows = method_rows(&rep1);
        let blocks = comparison_blocks(&rep1);
        let hmc_corr = &rows["hmc"]["correlation"];
        let vb_corr = &rows["vb"]["correlation"];
        let est_corr: Vec<f64> = IMAGES.iter().map(|i| blocks[*i].1).collect();
        let ratio = rep1["comparisons"][0]["mean_amse_ratio"].as_f64().unwrap();
        let ratio_w = rep1["comparisons"][0]["mean_amse_ratio_w"].as_f64().unwrap();
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let truth_ok = min(hmc_corr) >= 0.95 && min(vb_corr) >= 0.95;
        let est_ok = min(&est_corr) >= 0.98;
        let ratio_ok = (0.8..=1.3).contains(&ratio);
        report(result(
            "scaled study I",
            start6,
            truth_ok && est_ok && ratio_ok,
            format!(
                "truth correlation [{}] hmc [{}] vb [{}]; hmc-vb correlation [{}]; \
                 mean AMSE ratio vb/hmc {ratio:.3} (W only {ratio_w:.3})",
                IMAGES.join(" "),
                fmt_list(hmc_corr, 4),
                fmt_list(vb_corr, 4),
                fmt_list(&est_corr, 4),
            ),
        ));
    }

    // The low-SNR precisions mix slowly from the VB start (the chain has to
    // climb from α ≈ 0.05 to the posterior near 100), hence the longer run.
    let s3 = root.join("study3");
    let start7 = Instant::now();
    glmar(&["simulate", "--preset", "study3", "--seed", "7", "--out", p(&s3)]);
    glmar(&["fit", "--data", p(&s3), "--backend", "vb"]);
    glmar(&[
        "fit", "--data", p(&s3), "--backend", "hmc", "--init", "vb", "--leapfrog", "50", "--iters", "12000",
        "--burn", "6000", "--tune-rounds", "5", "--keep-draws", "--thin", "6",
    ]);
    glmar(&["report", "--data", p(&s3), "--compare", "vb", "hmc", "--ppm"]);
    let rep3 = json(&s3.join("report/report.json"));
    {
        let blocks = comparison_blocks(&rep3);
        let ratios: Vec<f64> = IMAGES[..4].iter().map(|i| blocks[*i].0).collect();
        let mean = ratios.iter().sum::<f64>() / 4.0;
        let hmc = sensitivity_at_090(&rep3, "hmc");
        let vb = sensitivity_at_090(&rep3, "vb");
        report(result(
            "scaled study III",
            start7,
            mean > 1.5 && hmc >= vb,
            format!(
                "AMSE ratio vb/hmc W1-W4 [{}] mean {mean:.3}; sensitivity at 0.90 hmc {hmc:.3} vb {vb:.3}",
                fmt_list(&ratios, 3)
            ),
        ));
    }

    {
        let oracle = checks::metrics_oracles(0);
        let start = Instant::now();
        let mut worst = f64::INFINITY;
        for rep in [&rep1, &rep3] {
            for rows in method_rows(rep).values() {
                for (mse, bias) in rows["amse"].iter().zip(&rows["asbias"]) {
                    worst = worst.min(mse - bias);
                }
            }
        }
        let mut r = result(
            "metrics oracles",
            start,
            oracle.passed && worst >= 0.0,
            format!("{}; min AMSE - ASBIAS over generated reports {worst:.3e}", oracle.detail),
        );
        r.elapsed += oracle.elapsed;
        report(r);
    }

    {
        let start = Instant::now();
        let rep = s1.join("rep_003");
        let mut mismatched = Vec::new();
        let runs: [(&str, Vec<&str>, &[&str]); 3] = [
            (
                "hmc",
                vec!["fit", "--backend", "hmc", "--iters", "300", "--burn", "150", "--leapfrog", "25", "--keep-draws"],
                &["summary.csv", "draws.bin", "diagnostics.json", "manifest.json"],
            ),
            (
                "vb",
                vec!["fit", "--backend", "vb"],
                &["summary.csv", "w_cov.csv", "free_energy.csv", "convergence.json", "manifest.json"],
            ),
            ("sim", vec!["simulate", "--preset", "study3", "--replicates", "2", "--seed", "3"], &[
                "manifest.json",
                "rep_001/series.f64",
                "rep_001/truth.csv",
            ]),
        ];
        for (name, base, files) in runs {
            let out = root.join(format!("determinism_{name}"));
            let mut args = base.clone();
            if name != "sim" {
                args.extend(["--data", p(&rep)]);
            }
            args.extend(["--out", p(&out), "--force"]);
            glmar(&args);
            let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
            glmar(&args);
            for (f, bytes) in files.iter().zip(first) {
                if std::fs::read(out.join(f)).unwrap() != bytes {
                    mismatched.push(format!("{name}/{f}"));
                }
            }
        }
        // Report outputs over the study directories, rerun in place.
        let out = root.join("determinism_report");
        let args = ["report", "--data", p(&s3), "--compare", "vb", "hmc", "--ppm", "--out", p(&out), "--force"];
        glmar(&args);
        let files = ["table.csv", "report.json", "sensitivity.csv", "compare_vb_hmc.csv", "manifest.json"];
        let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
        glmar(&args);
        for (f, bytes) in files.iter().zip(first) {
            if std::fs::read(out.join(f)).unwrap() != bytes {
                mismatched.push(format!("report/{f}"));
            }
        }
        report(result(
            "determinism",
            start,
            mismatched.is_empty(),
            if mismatched.is_empty() {
                "simulate, fit vb, fit hmc and report reruns are byte-identical".into()
            } else {
                format!("differing outputs: {}", mismatched.join(", "))
            },
        ));
    }

    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
