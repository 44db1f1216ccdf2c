use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use glmar_core::metrics::{
    compare_report, contrast_samples, default_thresholds, ppm_from_samples, ppm_gaussian, sensitivity_curve,
    table_rows, truth_activation, truth_moran, Comparison, Contrast, EffectThreshold, Image, MoranWeights, Ppm,
    ReplicateSet,
};
use glmar_core::model::{Block, Layout};
use glmar_core::simulate::GroundTruth;
use glmar_core::summary::PosteriorSummary;
use glmar_core::Mask;
use serde::Serialize;

use crate::bundle::{fmt, read_mask, read_truth, write_text, Meta, MASK, META, TRUTH};
use crate::cli::ReportArgs;
use crate::commands::fit::write_json;
use crate::error::{CliError, Result};
use crate::manifest::{prepare_out, Manifest, Timing};
use crate::output::{read_draws, read_summary, read_w_cov, write_map, DRAWS, SUMMARY, W_COV};
use crate::scenario::{self, replicate_name, FITS};

pub const TABLE: &str = "table.csv";
pub const REPORT: &str = "report.json";
pub const SENSITIVITY: &str = "sensitivity.csv";

/// Named contrasts over the five-column factorial design.
pub fn parse_contrast(spec: &str, k: usize) -> Result<Vec<f64>> {
    let c = match spec {
        "fame" => vec![-0.5, -0.5, 0.5, 0.5, 0.0],
        "face" => vec![0.25, 0.25, 0.25, 0.25, 0.0],
        other => other
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("--contrast: not a number: {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?,
    };
    if c.len() != k {
        return Err(CliError::Usage(format!(
            "--contrast {spec} has {} weights but the model has K = {k}",
            c.len()
        )));
    }
    Ok(c)
}

/// `topQpct`, `Xpct-above-mean`, or a plain number.
pub fn parse_gamma_e(spec: &str) -> Result<EffectThreshold> {
    let bad = || CliError::Usage(format!("--gamma-e: cannot parse {spec:?}"));
    if let Some(q) = spec.strip_prefix("top").and_then(|r| r.strip_suffix("pct")) {
        let q: f64 = q.parse().map_err(|_| bad())?;
        return Ok(EffectThreshold::TopFraction(q / 100.0));
    }
    if let Some(x) = spec.strip_suffix("pct-above-mean") {
        let percent: f64 = x.parse().map_err(|_| bad())?;
        return Ok(EffectThreshold::AboveGlobalMean { percent });
    }
    spec.parse().map(EffectThreshold::Value).map_err(|_| bad())
}

struct Source {
    root: PathBuf,
    scenario: bool,
    reps: Vec<PathBuf>,
}

impl Source {
    fn open(root: &Path) -> Result<Self> {
        if scenario::is_scenario(root) {
            Ok(Self {
                root: root.to_path_buf(),
                scenario: true,
                reps: scenario::replicates(root)?,
            })
        } else if root.join(META).is_file() {
            Ok(Self {
                root: root.to_path_buf(),
                scenario: false,
                reps: vec![root.to_path_buf()],
            })
        } else {
            Err(CliError::Data(format!(
                "{} is neither a dataset bundle nor a scenario directory",
                root.display()
            )))
        }
    }

    fn fit_dir(&self, method: &str, rep: usize) -> PathBuf {
        let base = self.root.join(FITS).join(method);
        if self.scenario {
            base.join(replicate_name(rep))
        } else {
            base
        }
    }

    fn methods(&self) -> Result<Vec<String>> {
        let fits = self.root.join(FITS);
        let mut out: Vec<String> = std::fs::read_dir(&fits)
            .map_err(|e| CliError::io(&fits, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .collect();
        out.sort();
        if out.is_empty() {
            return Err(CliError::Data(format!("{}: no fits found", fits.display())));
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct MethodRows {
    method: String,
    images: Vec<String>,
    asbias: Vec<f64>,
    amse: Vec<f64>,
    avar: Vec<Option<f64>>,
    correlation: Vec<f64>,
    moran_i: Vec<f64>,
}

#[derive(Serialize)]
struct BlockJson {
    image: String,
    amse_a: f64,
    amse_b: f64,
    amse_ratio: f64,
    estimate_correlation: f64,
    moran_a: f64,
    moran_b: f64,
}

#[derive(Serialize)]
struct ComparisonJson {
    method_a: String,
    method_b: String,
    mean_amse_ratio: f64,
    mean_amse_ratio_w: f64,
    blocks: Vec<BlockJson>,
}

#[derive(Serialize)]
struct SensitivityJson {
    method: String,
    /// `(threshold, sensitivity)` averaged over replicates.
    curve: Vec<(f64, f64)>,
    /// Effect threshold of each replicate.
    gamma_e: Vec<f64>,
}

#[derive(Serialize)]
struct ReportJson {
    replicates: usize,
    images: Vec<String>,
    truth_moran_i: Vec<f64>,
    methods: Vec<MethodRows>,
    comparisons: Vec<ComparisonJson>,
    sensitivity: Vec<SensitivityJson>,
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        fmt(v)
    } else {
        String::new()
    }
}

fn table_csv(images: &[Image], truth: &[f64], rows: &[MethodRows]) -> String {
    let mut s = String::from("method,statistic");
    for img in images {
        s.push(',');
        s.push_str(&img.label());
    }
    s.push('\n');
    let mut line = |method: &str, stat: &str, vals: Vec<String>| {
        s.push_str(&format!("{method},{stat},{}\n", vals.join(",")));
    };
    line("truth", "moran_i", truth.iter().map(|v| cell(*v)).collect());
    for r in rows {
        line(&r.method, "asbias", r.asbias.iter().map(|v| cell(*v)).collect());
        line(&r.method, "amse", r.amse.iter().map(|v| cell(*v)).collect());
        line(&r.method, "avar", r.avar.iter().map(|v| v.map(cell).unwrap_or_default()).collect());
        line(&r.method, "correlation", r.correlation.iter().map(|v| cell(*v)).collect());
        line(&r.method, "moran_i", r.moran_i.iter().map(|v| cell(*v)).collect());
    }
    s
}

fn comparison_csv(c: &Comparison) -> String {
    let (a, b) = (&c.method_a, &c.method_b);
    let mut s = format!("image,amse_{a},amse_{b},amse_ratio,estimate_correlation,moran_{a},moran_{b}\n");
    for blk in &c.blocks {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            blk.image.label(),
            cell(blk.amse_a),
            cell(blk.amse_b),
            cell(blk.amse_ratio),
            cell(blk.estimate_correlation),
            cell(blk.amoran_a),
            cell(blk.amoran_b)
        ));
    }
    s
}

fn w_block(summary: &PosteriorSummary) -> &[f64] {
    summary.block_mean(Block::W)
}

/// PPM of one fitted replicate, from stored draws when present, otherwise
/// from the per-voxel Gaussian blocks.
fn replicate_ppm(fit_dir: &Path, summary: &PosteriorSummary, contrast: &Contrast) -> Result<Ppm> {
    let layout = summary.layout;
    let n = layout.n;
    let draws = fit_dir.join(DRAWS);
    if draws.is_file() {
        let (dim, count, d) = read_draws(&draws)?;
        if dim != layout.dim() {
            return Err(CliError::Data(format!(
                "{}: draws have {dim} coordinates, expected {}",
                draws.display(),
                layout.dim()
            )));
        }
        let samples = contrast_samples(contrast, n, |k, v| {
            let i = layout.w(k, v);
            Some((0..count).map(|s| d[s * dim + i]).collect())
        })?;
        let point = contrast.apply(w_block(summary), n)?;
        return Ok(ppm_from_samples(&samples, &point, contrast)?);
    }
    let cov = fit_dir.join(W_COV);
    if cov.is_file() {
        let c = read_w_cov(&cov, n, layout.k)?;
        return Ok(ppm_gaussian(w_block(summary), &c, n, contrast)?);
    }
    Err(CliError::Data(format!(
        "{}: PPMs need {DRAWS} (fit with --keep-draws) or {W_COV}",
        fit_dir.display()
    )))
}

pub fn run(args: &ReportArgs, argv: &[String]) -> Result<()> {
    let mut timing = Timing::default();
    let mut manifest = Manifest::new(argv, serde_json::to_value(args).unwrap());
    let src = Source::open(&args.data)?;
    let methods = match &args.methods {
        Some(m) => m.clone(),
        None => src.methods()?,
    };
    if let Some(pair) = &args.compare {
        for m in pair {
            if !methods.contains(m) {
                return Err(CliError::Usage(format!("--compare method {m:?} is not among the reported methods")));
            }
        }
    }
    if args.map_replicate >= src.reps.len() {
        return Err(CliError::Usage(format!(
            "--map-replicate {} is out of range ({} replicates)",
            args.map_replicate,
            src.reps.len()
        )));
    }

    let (mask, layout, truths) = timing.time("load", || -> Result<(Mask, Layout, Vec<GroundTruth>)> {
        let mask_path = src.reps[0].join(MASK);
        let mask = read_mask(&mask_path)?;
        let mut truths = Vec::new();
        let mut layout = None;
        for rep in &src.reps {
            let meta = Meta::read(&rep.join(META))?;
            let l = Layout::new(meta.k, meta.p, meta.n);
            if *layout.get_or_insert(l) != l {
                return Err(CliError::Data(format!("{}: replicate dimensions differ", rep.display())));
            }
            let tp = rep.join(TRUTH);
            manifest.add_input(&tp)?;
            truths.push(read_truth(&tp, &meta)?);
        }
        if mask.n_voxels() != layout.unwrap().n {
            return Err(CliError::Data(format!("{}: mask does not match N", mask_path.display())));
        }
        Ok((mask, layout.unwrap(), truths))
    })?;

    let mut sets: BTreeMap<String, ReplicateSet> = BTreeMap::new();
    timing.time("load", || -> Result<()> {
        for m in &methods {
            let mut summaries = Vec::new();
            for r in 0..src.reps.len() {
                let path = src.fit_dir(m, r).join(SUMMARY);
                manifest.add_input(&path)?;
                summaries.push(read_summary(&path, m, layout)?);
            }
            sets.insert(m.clone(), ReplicateSet::new(m.clone(), summaries, truths.clone())?);
        }
        Ok(())
    })?;

    let out = args.out.clone().unwrap_or_else(|| src.root.join("report"));
    prepare_out(&out, args.force)?;
    let maps = out.join("maps");
    std::fs::create_dir_all(&maps).map_err(|e| CliError::io(&maps, e))?;

    let weights = MoranWeights::new(&mask);
    let images = Image::all(layout);
    let truth_i = truth_moran(&truths[0], &weights);
    let mut rows = Vec::new();
    timing.time("metrics", || -> Result<()> {
        for m in &methods {
            let t = table_rows(&sets[m], &weights)?;
            for (img, (b, e)) in images.iter().zip(t.asbias.iter().zip(&t.amse)) {
                if e + 1e-12 * e.abs() < *b {
                    log::warn!("{m} {}: AMSE {e} below ASBIAS {b}", img.label());
                }
            }
            rows.push(MethodRows {
                method: m.clone(),
                images: images.iter().map(|i| i.label()).collect(),
                asbias: t.asbias,
                amse: t.amse,
                avar: t.avar,
                correlation: t.correlation,
                moran_i: t.amoran,
            });
        }
        Ok(())
    })?;
    write_text(&out.join(TABLE), &table_csv(&images, &truth_i, &rows))?;

    let mut comparisons = Vec::new();
    if let Some(pair) = &args.compare {
        let (a, b) = (&pair[0], &pair[1]);
        let c = timing.time("metrics", || compare_report(&sets[a], &sets[b], &weights))?;
        write_text(&out.join(format!("compare_{a}_{b}.csv")), &comparison_csv(&c))?;
        let w_imgs: Vec<Image> = (0..layout.k).map(Image::W).collect();
        let mean_w = c.mean_ratio_over(&w_imgs);
        println!(
            "{a}/{b}: mean AMSE ratio {:.4} over all images, {:.4} over W",
            c.mean_amse_ratio, mean_w
        );
        for blk in &c.blocks {
            if let Some(lr) = &blk.variance_log_ratio {
                write_map(&maps, &format!("logvar_{a}_{b}_{}", blk.image.label()), &mask, lr)?;
            }
        }
        comparisons.push(ComparisonJson {
            method_a: a.clone(),
            method_b: b.clone(),
            mean_amse_ratio: c.mean_amse_ratio,
            mean_amse_ratio_w: mean_w,
            blocks: c
                .blocks
                .iter()
                .map(|blk| BlockJson {
                    image: blk.image.label(),
                    amse_a: blk.amse_a,
                    amse_b: blk.amse_b,
                    amse_ratio: blk.amse_ratio,
                    estimate_correlation: blk.estimate_correlation,
                    moran_a: blk.amoran_a,
                    moran_b: blk.amoran_b,
                })
                .collect(),
        });
    }

    timing.time("maps", || -> Result<()> {
        let r = args.map_replicate;
        for img in &images {
            let truth = &truths[r];
            let values = match img {
                Image::W(k) => truth.w_row(*k),
                Image::A(p) => truth.a_row(*p),
            };
            write_map(&maps, &format!("truth_{}", img.label()), &mask, values)?;
            for m in &methods {
                let s = &sets[m].summaries[r];
                let values = match img {
                    Image::W(k) => s.image(Block::W, *k),
                    Image::A(p) => s.image(Block::A, *p),
                };
                write_map(&maps, &format!("{m}_{}", img.label()), &mask, values)?;
            }
        }
        Ok(())
    })?;

    let mut sensitivity = Vec::new();
    if args.ppm {
        let c = parse_contrast(&args.contrast, layout.k)?;
        let contrast = Contrast::new(c, parse_gamma_e(&args.gamma_e)?, args.gamma_p)?;
        let thresholds = default_thresholds();
        timing.time("ppm", || -> Result<()> {
            for m in &methods {
                let mut acc = vec![0.0; thresholds.len()];
                let mut gammas = Vec::new();
                for r in 0..src.reps.len() {
                    let dir = src.fit_dir(m, r);
                    let ppm = replicate_ppm(&dir, &sets[m].summaries[r], &contrast)?;
                    let active = truth_activation(&truths[r], &contrast)?;
                    let curve = sensitivity_curve(&ppm.probability, &active, &thresholds)?;
                    for (a, (_, s)) in acc.iter_mut().zip(curve) {
                        *a += s / src.reps.len() as f64;
                    }
                    gammas.push(ppm.gamma_e);
                    if r == args.map_replicate {
                        write_map(&maps, &format!("ppm_{m}"), &mask, &ppm.probability)?;
                        let act: Vec<f64> = ppm.active.iter().map(|a| f64::from(u8::from(*a))).collect();
                        write_map(&maps, &format!("active_{m}"), &mask, &act)?;
                    }
                }
                sensitivity.push(SensitivityJson {
                    method: m.clone(),
                    curve: thresholds.iter().copied().zip(acc).collect(),
                    gamma_e: gammas,
                });
            }
            Ok(())
        })?;
        let mut s = String::from("threshold");
        for m in &methods {
            s.push(',');
            s.push_str(m);
        }
        s.push('\n');
        for (i, t) in thresholds.iter().enumerate() {
            s.push_str(&format!("{t:.2}"));
            for sj in &sensitivity {
                s.push(',');
                s.push_str(&fmt(sj.curve[i].1));
            }
            s.push('\n');
        }
        write_text(&out.join(SENSITIVITY), &s)?;
        for sj in &sensitivity {
            println!("{}: sensitivity at 0.90 = {:.3}", sj.method, sj.curve[0].1);
        }
    }

    let report = ReportJson {
        replicates: src.reps.len(),
        images: images.iter().map(|i| i.label()).collect(),
        truth_moran_i: truth_i,
        methods: rows,
        comparisons,
        sensitivity,
    };
    write_json(&out.join(REPORT), &report)?;
    manifest.finish(&out)?;
    timing.write(&out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_e_forms() {
        assert_eq!(parse_gamma_e("top10pct").unwrap(), EffectThreshold::TopFraction(0.1));
        assert_eq!(
            parse_gamma_e("10pct-above-mean").unwrap(),
            EffectThreshold::AboveGlobalMean { percent: 10.0 }
        );
        assert_eq!(parse_gamma_e("0.5").unwrap(), EffectThreshold::Value(0.5));
        assert!(parse_gamma_e("lots").is_err());
    }

    #[test]
    fn contrasts() {
        assert_eq!(parse_contrast("fame", 5).unwrap(), vec![-0.5, -0.5, 0.5, 0.5, 0.0]);
        assert_eq!(parse_contrast("1,0", 2).unwrap(), vec![1.0, 0.0]);
        assert!(parse_contrast("fame", 13).is_err());
    }
}
