use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use glmar_core::hmc::{run_hmc, HmcConfig, Parameterization};
use glmar_core::lattice::SpatialKernel;
use glmar_core::model::{ols_init, HyperPriors, ParamState, SuffStats};
use glmar_core::summary::PosteriorSummary;
use glmar_core::vb::{run_vb_from, SweepOrder, VBConfig};
use serde::Serialize;

use crate::bundle::{fmt, write_text, Bundle};
use crate::cli::{Backend, FitArgs, InitArg, SweepArg};
use crate::error::{CliError, Result};
use crate::manifest::{prepare_out, Manifest, Timing};
use crate::output::{draws_bytes, summary_csv, w_cov_csv, DRAWS, FREE_ENERGY, SUMMARY, W_COV};
use crate::scenario::{self, replicate_name, FITS};

pub const DIAGNOSTICS: &str = "diagnostics.json";
pub const CONVERGENCE: &str = "convergence.json";

struct Job {
    data_dir: PathBuf,
    out_dir: PathBuf,
    seed: u64,
}

/// Input files of one fitted replicate.
struct Done {
    inputs: Vec<PathBuf>,
    timing: Timing,
}

pub fn default_out(data: &Path, backend: Backend) -> PathBuf {
    data.join(FITS).join(backend.as_str())
}

fn hyperpriors(args: &FitArgs) -> HyperPriors {
    HyperPriors {
        q1: args.q1,
        q2: args.q2,
        r1: args.r1,
        r2: args.r2,
        u1: args.u1,
        u2: args.u2,
    }
}

fn vb_config(args: &FitArgs, seed: u64) -> VBConfig {
    VBConfig {
        max_iter: args.max_iter,
        tol: args.tol,
        sweep: match args.sweep {
            SweepArg::Scan => SweepOrder::Scan,
            SweepArg::Colored => SweepOrder::Colored,
        },
        seed,
    }
}

fn hmc_config(args: &FitArgs, seed: u64) -> HmcConfig {
    HmcConfig {
        step_size: args.step_size,
        n_leapfrog: args.leapfrog,
        n_iter: args.iters,
        n_burn: args.burn,
        target_accept: args.target_accept,
        mass: None,
        adapt_window: args.adapt_window,
        adapt_gain: args.adapt_gain,
        tune_rounds: args.tune_rounds,
        thin: args.thin,
        // Draws are always held in memory for the batch-means errors;
        // --keep-draws only controls whether they are written out.
        keep_draws: true,
        seed,
        ..HmcConfig::default()
    }
}

#[derive(Serialize)]
struct HmcDiagnostics {
    seed: u64,
    parameterization: &'static str,
    init: &'static str,
    iterations: usize,
    burn: usize,
    leapfrog: usize,
    initial_step_size: f64,
    step_size: f64,
    acceptance_rate: f64,
    retained: usize,
    divergent: usize,
    mean_abs_delta_h: f64,
    mean_exp_neg_delta_h: f64,
    mass_min: f64,
    mass_max: f64,
    monitored: Vec<usize>,
}

#[derive(Serialize)]
struct VbConvergence {
    iterations: usize,
    final_rel_change: f64,
    converged: bool,
    free_energy: f64,
    tol: f64,
}

fn write_summary(dir: &Path, s: &PosteriorSummary) -> Result<()> {
    write_text(&dir.join(SUMMARY), &summary_csv(s))
}

fn fit_one(args: &FitArgs, job: &Job) -> Result<Done> {
    let mut timing = Timing::default();
    let bundle = timing.time("read", || Bundle::read(&job.data_dir))?;
    let data = &bundle.data;
    let hp = hyperpriors(args);
    let kernel = SpatialKernel::build(&bundle.mask, bundle.mask.dims().len())?;
    let stats = timing.time("precompute", || SuffStats::new(data))?;
    std::fs::create_dir_all(&job.out_dir).map_err(|e| CliError::io(&job.out_dir, e))?;
    let ols = timing.time("precompute", || ols_init(data, &kernel))?;

    match args.backend {
        Backend::Ols => {
            let s = PosteriorSummary::new("ols", ols.layout(), ols.flatten(), None, None)?;
            timing.time("summarization", || write_summary(&job.out_dir, &s))?;
        }
        Backend::Vb => {
            let cfg = vb_config(args, job.seed);
            let fit = timing.time("ascent", || run_vb_from(&stats, &kernel, &hp, &cfg, &ols, &[]))?;
            timing.time("summarization", || -> Result<()> {
                write_summary(&job.out_dir, &fit.summary)?;
                let mut fe = String::from("iteration,free_energy\n");
                for (i, f) in fit.posterior.free_energy_trace().iter().enumerate() {
                    fe.push_str(&format!("{},{}\n", i + 1, fmt(*f)));
                }
                write_text(&job.out_dir.join(FREE_ENERGY), &fe)?;
                let layout = fit.summary.layout;
                write_text(
                    &job.out_dir.join(W_COV),
                    &w_cov_csv(layout.n, layout.k, |v| fit.posterior.w_cov(v).to_vec()),
                )?;
                let conv = VbConvergence {
                    iterations: fit.report.iterations,
                    final_rel_change: fit.report.final_rel_change,
                    converged: fit.report.converged,
                    free_energy: fit.posterior.free_energy_trace().last().copied().unwrap_or(f64::NAN),
                    tol: args.tol,
                };
                write_json(&job.out_dir.join(CONVERGENCE), &conv)
            })?;
        }
        Backend::Hmc => {
            let cfg = hmc_config(args, job.seed);
            let init: ParamState = match args.init {
                InitArg::Ols => ols,
                InitArg::Vb => {
                    let vcfg = vb_config(args, job.seed);
                    timing
                        .time("init", || run_vb_from(&stats, &kernel, &hp, &vcfg, &ols, &[]))?
                        .posterior
                        .mean_state()
                }
            };
            let dim = init.dim();
            if let Some(m) = &args.monitor {
                if let Some(bad) = m.iter().find(|i| **i >= dim) {
                    return Err(CliError::Usage(format!(
                        "--monitor coordinate {bad} is out of range (R = {dim})"
                    )));
                }
            }
            let param = if args.log_precision {
                Parameterization::LogPrecision
            } else {
                Parameterization::Natural
            };
            let fit = timing.time("sampling", || {
                run_hmc(&stats, &kernel, &hp, &init, &[], param, &cfg, args.monitor.as_deref())
            })?;
            timing.time("summarization", || -> Result<()> {
                write_summary(&job.out_dir, &fit.summary)?;
                let traces = job.out_dir.join("traces");
                std::fs::create_dir_all(&traces).map_err(|e| CliError::io(&traces, e))?;
                let mut monitored = Vec::new();
                for (i, tr) in fit.traces() {
                    monitored.push(i);
                    let mut s = String::from("iteration,value\n");
                    for (it, v) in tr.iter().enumerate() {
                        s.push_str(&format!("{},{}\n", it + 1, fmt(*v)));
                    }
                    write_text(&traces.join(format!("coord_{i:05}.csv")), &s)?;
                }
                let store = &fit.chain.store;
                if args.keep_draws {
                    let path = job.out_dir.join(DRAWS);
                    std::fs::write(&path, draws_bytes(store.dim(), store.count(), store.draws()))
                        .map_err(|e| CliError::io(&path, e))?;
                }
                let dh = store.delta_h_trace();
                let finite: Vec<f64> = dh.iter().copied().filter(|v| v.is_finite()).collect();
                let mass = &fit.chain.mass;
                let diag = HmcDiagnostics {
                    seed: job.seed,
                    parameterization: if args.log_precision { "log" } else { "natural" },
                    init: match args.init {
                        InitArg::Ols => "ols",
                        InitArg::Vb => "vb",
                    },
                    iterations: args.iters,
                    burn: args.burn,
                    leapfrog: args.leapfrog,
                    initial_step_size: args.step_size,
                    step_size: fit.chain.step_size,
                    acceptance_rate: fit.chain.acceptance_rate,
                    retained: store.count(),
                    divergent: dh.len() - finite.len(),
                    mean_abs_delta_h: finite.iter().map(|v| v.abs()).sum::<f64>() / finite.len().max(1) as f64,
                    mean_exp_neg_delta_h: dh.iter().map(|v| (-v).exp()).sum::<f64>() / dh.len().max(1) as f64,
                    mass_min: mass.iter().copied().fold(f64::INFINITY, f64::min),
                    mass_max: mass.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    monitored,
                };
                write_json(&job.out_dir.join(DIAGNOSTICS), &diag)
            })?;
            log::info!(
                "{}: acceptance {:.3}, step size {:.3e}",
                job.data_dir.display(),
                fit.chain.acceptance_rate,
                fit.chain.step_size
            );
        }
    }
    timing.write(&job.out_dir)?;
    Ok(Done {
        inputs: bundle.files,
        timing,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    write_text(path, &(text + "\n"))
}

fn validate(args: &FitArgs) -> Result<()> {
    hyperpriors(args).validate()?;
    match args.backend {
        Backend::Hmc => {
            // The dimension is checked per dataset; 1 skips the mass check.
            hmc_config(args, 0).validate(1)?;
            if args.init == InitArg::Vb {
                vb_config(args, 0).validate()?;
            }
        }
        Backend::Vb => vb_config(args, 0).validate()?,
        Backend::Ols => {}
    }
    if args.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    Ok(())
}

pub fn run(args: &FitArgs, argv: &[String]) -> Result<()> {
    validate(args)?;
    let out = args.out.clone().unwrap_or_else(|| default_out(&args.data, args.backend));
    let jobs: Vec<Job> = if scenario::is_scenario(&args.data) {
        scenario::replicates(&args.data)?
            .into_iter()
            .enumerate()
            .map(|(r, dir)| Job {
                data_dir: dir,
                out_dir: out.join(replicate_name(r)),
                seed: args.seed.wrapping_add(r as u64),
            })
            .collect()
    } else if Bundle::is_bundle(&args.data) {
        vec![Job {
            data_dir: args.data.clone(),
            out_dir: out.clone(),
            seed: args.seed,
        }]
    } else {
        return Err(CliError::Data(format!(
            "{} is neither a dataset bundle nor a scenario directory",
            args.data.display()
        )));
    };
    prepare_out(&out, args.force)?;

    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .min(jobs.len());
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<Done>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = fit_one(args, &jobs[i]);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let mut manifest = Manifest::new(argv, serde_json::to_value(args).unwrap());
    let mut timing = Timing::default();
    for (job, slot) in jobs.iter().zip(results) {
        let done = slot.into_inner().unwrap().expect("every job ran")?;
        for f in &done.inputs {
            manifest.add_input(f)?;
        }
        manifest.seeds.push(job.seed);
        for (phase, secs) in done.timing.phases {
            timing.add(&phase, secs);
        }
    }
    manifest.finish(&out)?;
    timing.write(&out)?;
    log::info!("{} fit of {} dataset(s) written to {}", args.backend.as_str(), jobs.len(), out.display());
    Ok(())
}
