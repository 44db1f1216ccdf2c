use std::path::Path;

use glmar_core::lattice::SpatialKernel;
use glmar_core::simulate::{draw_truth, generate_replicate, preset, InitialNoise, LambdaSpec, Scale, SimScenario};

use crate::bundle::{self, fmt, parse_key_values, read_text, write_bundle, write_text, Design};
use crate::cli::{NoiseStart, ScaleArg, SimulateArgs};
use crate::designs;
use crate::error::{CliError, Result};
use crate::manifest::{prepare_out, Manifest, Timing};
use crate::scenario::{replicate_dir, SCENARIO};

fn parse_list(path: &Path, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Data(format!("{}: {key}: not a number: {s:?}", path.display())))
        })
        .collect()
}

/// Scenario file with keys `name`, `alpha`, `beta` (comma lists) and
/// `lambda` (`fixed:V` or `gamma:SHAPE,SCALE`).
pub fn read_scenario(path: &Path, replicates: usize, seed: u64) -> Result<SimScenario> {
    let kv = parse_key_values(path, &read_text(path)?)?;
    let get = |k: &str| {
        kv.get(k)
            .ok_or_else(|| CliError::Data(format!("{}: missing key {k}", path.display())))
    };
    let lambda_text = get("lambda")?;
    let lambda = if let Some(v) = lambda_text.strip_prefix("fixed:") {
        LambdaSpec::Fixed(parse_list(path, "lambda", v)?[0])
    } else if let Some(v) = lambda_text.strip_prefix("gamma:") {
        let l = parse_list(path, "lambda", v)?;
        if l.len() != 2 {
            return Err(CliError::Data(format!("{}: lambda gamma needs shape,scale", path.display())));
        }
        LambdaSpec::Gamma { shape: l[0], scale: l[1] }
    } else {
        return Err(CliError::Data(format!(
            "{}: lambda must be fixed:V or gamma:SHAPE,SCALE",
            path.display()
        )));
    };
    let scenario = SimScenario {
        name: kv.get("name").cloned().unwrap_or_else(|| "custom".into()),
        alpha: parse_list(path, "alpha", get("alpha")?)?,
        beta: parse_list(path, "beta", get("beta")?)?,
        lambda,
        replicates,
        seed,
        initial_noise: InitialNoise::Stationary,
    };
    scenario.validate().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(scenario)
}

pub fn scenario_text(s: &SimScenario, scale: &str) -> String {
    let list = |v: &[f64]| v.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(",");
    let lambda = match s.lambda {
        LambdaSpec::Fixed(v) => format!("fixed:{}", fmt(v)),
        LambdaSpec::Gamma { shape, scale } => format!("gamma:{},{}", fmt(shape), fmt(scale)),
    };
    let noise = match s.initial_noise {
        InitialNoise::Stationary => "stationary",
        InitialNoise::BurnIn => "burnin",
    };
    format!(
        "name={}\nalpha={}\nbeta={}\nlambda={}\nreplicates={}\nseed={}\ninitial_noise={}\nscale={}\n",
        s.name,
        list(&s.alpha),
        list(&s.beta),
        lambda,
        s.replicates,
        s.seed,
        noise,
        scale
    )
}

pub fn run(args: &SimulateArgs, argv: &[String]) -> Result<()> {
    let mut timing = Timing::default();
    let mut manifest = Manifest::new(argv, serde_json::to_value(args).unwrap());
    let scale = match args.scale {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Full => Scale::Full,
    };
    let j = args.replicates.unwrap_or(scale.replicates());
    if j == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let mut scenario = match (&args.preset, &args.scenario) {
        (Some(p), _) => preset(p.as_str(), j, args.seed).expect("preset names are valid"),
        (None, Some(path)) => {
            manifest.add_input(path)?;
            read_scenario(path, j, args.seed)?
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    scenario.initial_noise = match args.initial_noise {
        NoiseStart::Stationary => InitialNoise::Stationary,
        NoiseStart::Burnin => InitialNoise::BurnIn,
    };
    let mask = match &args.mask {
        Some(path) => {
            manifest.add_input(path)?;
            bundle::read_mask(path)?
        }
        None => scale.mask(),
    };
    let design = match &args.design {
        Some(path) => {
            manifest.add_input(path)?;
            Design::read(path)?
        }
        None => designs::for_k(scenario.k()).ok_or_else(|| {
            CliError::Usage(format!(
                "no bundled design for K = {}; pass --design",
                scenario.k()
            ))
        })??,
    };
    if design.k() != scenario.k() {
        return Err(CliError::Data(format!(
            "design has {} columns but the scenario has K = {}",
            design.k(),
            scenario.k()
        )));
    }
    prepare_out(&args.out, args.force)?;
    let kernel = timing.time("precompute", || SpatialKernel::build(&mask, mask.dims().len()))?;
    let truth = timing.time("truth", || draw_truth(&scenario, &kernel))?;
    let scale_name = if args.mask.is_some() { "custom" } else { args.scale_name() };
    write_text(&args.out.join(SCENARIO), &scenario_text(&scenario, scale_name))?;
    write_text(&args.out.join(bundle::MASK), &bundle::mask_text(&mask))?;
    let truth_text = bundle::truth_csv(&truth);
    write_text(&args.out.join(bundle::TRUTH), &truth_text)?;
    manifest.seeds = vec![scenario.seed];
    for rep in 0..j {
        let data = timing.time("simulate", || generate_replicate(&truth, &design.x, design.t, rep as u64))?;
        let dir = replicate_dir(&args.out, rep);
        timing.time("write", || write_bundle(&dir, &mask, &design, &data, args.series_format))?;
        write_text(&dir.join(bundle::TRUTH), &truth_text)?;
    }
    log::info!("wrote {j} replicates of {} to {}", scenario.name, args.out.display());
    manifest.finish(&args.out)?;
    timing.write(&args.out)
}

impl SimulateArgs {
    fn scale_name(&self) -> &'static str {
        match self.scale {
            ScaleArg::Desk => "desk",
            ScaleArg::Full => "full",
        }
    }
}
