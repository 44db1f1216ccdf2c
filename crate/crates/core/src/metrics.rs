//! Replicate-level evaluation of posterior summaries against known truth.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::lattice::Mask;
use crate::model::{Block, Layout};
use crate::simulate::GroundTruth;
use crate::special::{mean, normal_sf, pearson, sorted_quantile};
use crate::summary::PosteriorSummary;

/// One coefficient image: row `k` of `W` or row `p` of `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Image {
    W(usize),
    A(usize),
}

impl Image {
    /// `W1`, `A2`, ... (1-based, as in result tables).
    pub fn label(self) -> String {
        match self {
            Image::W(k) => format!("W{}", k + 1),
            Image::A(p) => format!("A{}", p + 1),
        }
    }

    /// All `W` rows followed by all `A` rows.
    pub fn all(layout: Layout) -> Vec<Image> {
        (0..layout.k).map(Image::W).chain((0..layout.p).map(Image::A)).collect()
    }

    fn block_row(self) -> (Block, usize) {
        match self {
            Image::W(k) => (Block::W, k),
            Image::A(p) => (Block::A, p),
        }
    }

    fn truth(self, t: &GroundTruth) -> &[f64] {
        match self {
            Image::W(k) => t.w_row(k),
            Image::A(p) => t.a_row(p),
        }
    }
}

/// Fitted summaries of `J` replicates with their generating truth.
#[derive(Debug, Clone)]
pub struct ReplicateSet {
    pub method: String,
    pub summaries: Vec<PosteriorSummary>,
    pub truths: Vec<GroundTruth>,
}

impl ReplicateSet {
    pub fn new(method: impl Into<String>, summaries: Vec<PosteriorSummary>, truths: Vec<GroundTruth>) -> Result<Self> {
        if summaries.is_empty() {
            return Err(Error::Missing("replicates"));
        }
        if summaries.len() != truths.len() {
            return Err(Error::LengthMismatch {
                what: "truths per replicate",
                expected: summaries.len(),
                got: truths.len(),
            });
        }
        let layout = summaries[0].layout;
        for (s, t) in summaries.iter().zip(&truths) {
            if s.layout != layout {
                return Err(Error::Mismatch("replicates have different dimensions".into()));
            }
            if (t.k, t.p, t.n) != (layout.k, layout.p, layout.n) {
                return Err(Error::Mismatch("truth does not match the summary dimensions".into()));
            }
        }
        Ok(Self {
            method: method.into(),
            summaries,
            truths,
        })
    }

    pub fn layout(&self) -> Layout {
        self.summaries[0].layout
    }

    pub fn len(&self) -> usize {
        self.summaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockStats {
    pub asbias: f64,
    pub amse: f64,
    /// Absent when the summaries carry no variances (OLS).
    pub avar: Option<f64>,
    /// Mean over replicates of the Pearson correlation with the truth image;
    /// replicates with a constant image are skipped (NaN if all are).
    pub correlation: f64,
}

/// Voxel-averaged squared bias, mean squared error and marginal variance,
/// plus the mean correlation with truth.
pub fn summary_stats(set: &ReplicateSet, img: Image) -> Result<BlockStats> {
    let layout = set.layout();
    match img {
        Image::W(k) if k < layout.k => {}
        Image::A(p) if p < layout.p => {}
        _ => return Err(Error::IndexOutOfRange { index: 0, n: 0 }),
    }
    let (block, row) = img.block_row();
    let n = layout.n;
    let j = set.len() as f64;
    let mut avg = vec![0.0; n];
    let mut sq = 0.0;
    let mut var_total = Some(0.0);
    let mut cors = Vec::new();
    for (s, t) in set.summaries.iter().zip(&set.truths) {
        let est = s.image(block, row);
        let truth = img.truth(t);
        for v in 0..n {
            avg[v] += est[v] / j;
            sq += (est[v] - truth[v]) * (est[v] - truth[v]);
        }
        var_total = match (var_total, s.variance_image(block, row)) {
            (Some(acc), Some(vi)) => Some(acc + vi.iter().sum::<f64>()),
            _ => None,
        };
        if let Some(c) = pearson(est, truth) {
            cors.push(c);
        }
    }
    // ASBIAS uses the truth of the first replicate: the truth is shared
    // across replicates of one scenario, and ReplicateSet does not require it.
    let truth0 = img.truth(&set.truths[0]);
    let asbias = avg.iter().zip(truth0).map(|(a, t)| (a - t) * (a - t)).sum::<f64>() / n as f64;
    let nj = n as f64 * j;
    Ok(BlockStats {
        asbias,
        amse: sq / nj,
        avar: var_total.map(|v| v / nj),
        correlation: if cors.is_empty() { f64::NAN } else { mean(&cors) },
    })
}

/// Reciprocal centroid-distance weights over all voxel pairs, computed on
/// the fly from the mask geometry.
#[derive(Debug, Clone)]
pub struct MoranWeights {
    centroids: Vec<[f64; 3]>,
    total: f64,
}

impl MoranWeights {
    pub fn new(mask: &Mask) -> Self {
        let centroids: Vec<[f64; 3]> = (0..mask.n_voxels()).map(|v| mask.centroid(v)).collect();
        let mut total = 0.0;
        for i in 0..centroids.len() {
            for j in i + 1..centroids.len() {
                total += 2.0 * weight(&centroids[i], &centroids[j]);
            }
        }
        Self { centroids, total }
    }

    pub fn n(&self) -> usize {
        self.centroids.len()
    }

    /// `φ_ij`, zero on the diagonal.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            weight(&self.centroids[i], &self.centroids[j])
        }
    }

    /// `Σ_ij φ_ij`.
    pub fn total(&self) -> f64 {
        self.total
    }
}

fn weight(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
    1.0 / d2.sqrt()
}

/// Moran's I, centred at the arithmetic mean of the image.
pub fn morans_i(values: &[f64], weights: &MoranWeights) -> Result<f64> {
    let n = values.len();
    if n != weights.n() {
        return Err(Error::LengthMismatch {
            what: "image voxels",
            expected: weights.n(),
            got: n,
        });
    }
    let m = mean(values);
    let centered: Vec<f64> = values.iter().map(|v| v - m).collect();
    let sq: f64 = centered.iter().map(|c| c * c).sum();
    if !(sq > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mut cross = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in i + 1..n {
            row += weights.weight(i, j) * centered[j];
        }
        cross += 2.0 * centered[i] * row;
    }
    Ok(n as f64 / weights.total() * cross / sq)
}

/// Moran's I averaged over images (AMoran).
pub fn amoran<'a>(images: impl IntoIterator<Item = &'a [f64]>, weights: &MoranWeights) -> Result<f64> {
    let vals: Vec<f64> = images
        .into_iter()
        .map(|im| morans_i(im, weights))
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(Error::Missing("images"));
    }
    Ok(mean(&vals))
}

/// Rule giving the effect-size threshold `γ_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectThreshold {
    Value(f64),
    /// The `(1 − q)` quantile of the point-estimate contrasts across voxels,
    /// so that the top fraction `q` is above it.
    TopFraction(f64),
    /// `percent` above the global mean of the point-estimate contrasts:
    /// `g + |g| · percent / 100`.
    AboveGlobalMean { percent: f64 },
}

impl EffectThreshold {
    pub fn resolve(&self, point: &[f64]) -> Result<f64> {
        match *self {
            EffectThreshold::Value(v) => Ok(v),
            EffectThreshold::TopFraction(q) => {
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::InvalidConfig("top fraction must lie in (0, 1)".into()));
                }
                if point.is_empty() {
                    return Err(Error::Missing("contrast values"));
                }
                let mut sorted = point.to_vec();
                sorted.sort_by(f64::total_cmp);
                Ok(sorted_quantile(&sorted, 1.0 - q))
            }
            EffectThreshold::AboveGlobalMean { percent } => {
                if point.is_empty() {
                    return Err(Error::Missing("contrast values"));
                }
                let g = mean(point);
                Ok(g + g.abs() * percent / 100.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contrast {
    pub c: Vec<f64>,
    pub gamma_e: EffectThreshold,
    pub gamma_p: f64,
}

impl Contrast {
    pub fn new(c: Vec<f64>, gamma_e: EffectThreshold, gamma_p: f64) -> Result<Self> {
        if c.iter().all(|v| *v == 0.0) || !c.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("contrast must be finite and nonzero".into()));
        }
        if !(gamma_p > 0.0 && gamma_p < 1.0) {
            return Err(Error::InvalidConfig("probability threshold must lie in (0, 1)".into()));
        }
        Ok(Self { c, gamma_e, gamma_p })
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if self.c.len() != k {
            return Err(Error::LengthMismatch {
                what: "contrast weights",
                expected: k,
                got: self.c.len(),
            });
        }
        Ok(())
    }

    /// `cᵀw_n` for every voxel of a `K×N` image stack.
    pub fn apply(&self, w: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_k(w.len() / n.max(1))?;
        Ok((0..n)
            .map(|v| self.c.iter().enumerate().map(|(k, c)| c * w[k * n + v]).sum())
            .collect())
    }
}

/// A posterior probability map.
#[derive(Debug, Clone, PartialEq)]
pub struct Ppm {
    pub gamma_e: f64,
    pub probability: Vec<f64>,
    pub active: Vec<bool>,
}

/// Per-voxel contrast samples `cᵀw_n^{(s)}` from per-coordinate draws;
/// `column(k, n)` returns the retained draws of `w_kn`.
pub fn contrast_samples(
    contrast: &Contrast,
    n: usize,
    mut column: impl FnMut(usize, usize) -> Option<Vec<f64>>,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        let mut acc: Option<Vec<f64>> = None;
        for (k, &c) in contrast.c.iter().enumerate() {
            let d = column(k, v).ok_or(Error::Missing("retained draws"))?;
            match &mut acc {
                None => acc = Some(d.iter().map(|x| c * x).collect()),
                Some(a) => {
                    if a.len() != d.len() {
                        return Err(Error::Mismatch("draw counts differ between coordinates".into()));
                    }
                    a.iter_mut().zip(&d).for_each(|(s, x)| *s += c * x);
                }
            }
        }
        out.push(acc.unwrap_or_default());
    }
    Ok(out)
}

/// PPM from samples: the fraction of draws with `cᵀw_n > γ_e`. `point` are
/// the point-estimate contrasts used by threshold rules.
pub fn ppm_from_samples(samples: &[Vec<f64>], point: &[f64], contrast: &Contrast) -> Result<Ppm> {
    let gamma_e = contrast.gamma_e.resolve(point)?;
    let mut probability = Vec::with_capacity(samples.len());
    for s in samples {
        if s.is_empty() {
            return Err(Error::TooFewDraws { needed: 1, got: 0 });
        }
        probability.push(s.iter().filter(|x| **x > gamma_e).count() as f64 / s.len() as f64);
    }
    let active = probability.iter().map(|p| *p > contrast.gamma_p).collect();
    Ok(Ppm {
        gamma_e,
        probability,
        active,
    })
}

/// PPM from per-voxel Gaussians: `P(cᵀw_n > γ_e)` with mean `cᵀm_n` and
/// variance `cᵀΣ_n c`. `w_mean` is `K×N` (row `k` contiguous) and `w_cov`
/// holds one `K×K` block per voxel.
pub fn ppm_gaussian(w_mean: &[f64], w_cov: &[f64], n: usize, contrast: &Contrast) -> Result<Ppm> {
    let k = contrast.c.len();
    if w_mean.len() != k * n || w_cov.len() != k * k * n {
        return Err(Error::LengthMismatch {
            what: "Gaussian posterior",
            expected: k * n,
            got: w_mean.len(),
        });
    }
    let point = contrast.apply(w_mean, n)?;
    let gamma_e = contrast.gamma_e.resolve(&point)?;
    let c = &contrast.c;
    let probability: Vec<f64> = (0..n)
        .map(|v| {
            let cov = &w_cov[v * k * k..(v + 1) * k * k];
            let mut var = 0.0;
            for a in 0..k {
                for b in 0..k {
                    var += c[a] * cov[a * k + b] * c[b];
                }
            }
            let m = point[v];
            if var > 0.0 {
                normal_sf((gamma_e - m) / var.sqrt())
            } else if m > gamma_e {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let active = probability.iter().map(|p| *p > contrast.gamma_p).collect();
    Ok(Ppm {
        gamma_e,
        probability,
        active,
    })
}

/// Voxels whose true contrast exceeds the threshold rule applied to the
/// true contrast image.
pub fn truth_activation(truth: &GroundTruth, contrast: &Contrast) -> Result<Vec<bool>> {
    contrast.check_k(truth.k)?;
    let tc = contrast.apply(&truth.w, truth.n)?;
    let g = contrast.gamma_e.resolve(&tc)?;
    Ok(tc.iter().map(|v| *v > g).collect())
}

/// `0.90, 0.91, ..., 1.00`.
pub fn default_thresholds() -> Vec<f64> {
    (90..=100).map(|i| i as f64 / 100.0).collect()
}

/// Fraction of truly active voxels whose probability exceeds each threshold.
pub fn sensitivity_curve(probability: &[f64], truth_active: &[bool], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if probability.len() != truth_active.len() {
        return Err(Error::LengthMismatch {
            what: "truth activation",
            expected: probability.len(),
            got: truth_active.len(),
        });
    }
    let total = truth_active.iter().filter(|a| **a).count();
    if total == 0 {
        return Err(Error::Missing("truly active voxels"));
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let hit = probability
                .iter()
                .zip(truth_active)
                .filter(|(p, a)| **a && **p > t)
                .count();
            (t, hit as f64 / total as f64)
        })
        .collect())
}

/// Comparison of one image between two methods.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockComparison {
    pub image: Image,
    pub amse_a: f64,
    pub amse_b: f64,
    /// `AMSE_a / AMSE_b`.
    pub amse_ratio: f64,
    /// Mean over replicates of the correlation between the two methods'
    /// estimates.
    pub estimate_correlation: f64,
    pub amoran_a: f64,
    pub amoran_b: f64,
    /// Per voxel, the replicate average of `ln(var_a / var_b)`; absent if
    /// either method lacks variances.
    pub variance_log_ratio: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub method_a: String,
    pub method_b: String,
    pub blocks: Vec<BlockComparison>,
    /// Mean AMSE ratio over all `W` and `A` images.
    pub mean_amse_ratio: f64,
}

impl Comparison {
    /// Mean AMSE ratio over a subset of images.
    pub fn mean_ratio_over(&self, images: &[Image]) -> f64 {
        let r: Vec<f64> = self
            .blocks
            .iter()
            .filter(|b| images.contains(&b.image))
            .map(|b| b.amse_ratio)
            .collect();
        mean(&r)
    }
}

/// Compares two methods fitted to the same replicates.
pub fn compare_report(a: &ReplicateSet, b: &ReplicateSet, weights: &MoranWeights) -> Result<Comparison> {
    if a.len() != b.len() {
        return Err(Error::Mismatch(format!(
            "replicate counts differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.layout() != b.layout() {
        return Err(Error::Mismatch("methods were fitted to different dimensions".into()));
    }
    if a.truths != b.truths {
        return Err(Error::Mismatch("methods were evaluated against different truths".into()));
    }
    let layout = a.layout();
    let mut blocks = Vec::new();
    for img in Image::all(layout) {
        let sa = summary_stats(a, img)?;
        let sb = summary_stats(b, img)?;
        let (block, row) = img.block_row();
        let mut cors = Vec::new();
        let mut log_ratio: Option<Vec<f64>> = Some(vec![0.0; layout.n]);
        let j = a.len() as f64;
        for (x, y) in a.summaries.iter().zip(&b.summaries) {
            if let Some(c) = pearson(x.image(block, row), y.image(block, row)) {
                cors.push(c);
            }
            log_ratio = match (log_ratio, x.variance_image(block, row), y.variance_image(block, row)) {
                (Some(mut acc), Some(va), Some(vb)) => {
                    for ((s, p), q) in acc.iter_mut().zip(va).zip(vb) {
                        *s += (p / q).ln() / j;
                    }
                    Some(acc)
                }
                _ => None,
            };
        }
        let am = |s: &ReplicateSet| amoran(s.summaries.iter().map(|x| x.image(block, row)), weights);
        blocks.push(BlockComparison {
            image: img,
            amse_a: sa.amse,
            amse_b: sb.amse,
            amse_ratio: sa.amse / sb.amse,
            estimate_correlation: if cors.is_empty() { f64::NAN } else { mean(&cors) },
            amoran_a: am(a).unwrap_or(f64::NAN),
            amoran_b: am(b).unwrap_or(f64::NAN),
            variance_log_ratio: log_ratio,
        });
    }
    let ratios: Vec<f64> = blocks.iter().map(|b| b.amse_ratio).collect();
    Ok(Comparison {
        method_a: a.method.clone(),
        method_b: b.method.clone(),
        mean_amse_ratio: mean(&ratios),
        blocks,
    })
}

/// One method's rows of a results table: a column per image.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRows {
    pub method: String,
    pub images: Vec<Image>,
    pub asbias: Vec<f64>,
    pub amse: Vec<f64>,
    pub avar: Vec<Option<f64>>,
    pub correlation: Vec<f64>,
    pub amoran: Vec<f64>,
}

/// Summary statistics and AMoran for every image of a replicate set.
pub fn table_rows(set: &ReplicateSet, weights: &MoranWeights) -> Result<TableRows> {
    let images = Image::all(set.layout());
    let mut rows = TableRows {
        method: set.method.clone(),
        images: images.clone(),
        asbias: Vec::new(),
        amse: Vec::new(),
        avar: Vec::new(),
        correlation: Vec::new(),
        amoran: Vec::new(),
    };
    for img in images {
        let s = summary_stats(set, img)?;
        let (block, row) = img.block_row();
        rows.asbias.push(s.asbias);
        rows.amse.push(s.amse);
        rows.avar.push(s.avar);
        rows.correlation.push(s.correlation);
        rows.amoran.push(amoran(set.summaries.iter().map(|x| x.image(block, row)), weights).unwrap_or(f64::NAN));
    }
    Ok(rows)
}

/// Moran's I of each true image, in [`Image::all`] order.
pub fn truth_moran(truth: &GroundTruth, weights: &MoranWeights) -> Vec<f64> {
    let layout = Layout::new(truth.k, truth.p, truth.n);
    Image::all(layout)
        .into_iter()
        .map(|img| morans_i(img.truth(truth), weights).unwrap_or(f64::NAN))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::moran_brute;
    use crate::simulate::InitialNoise;
    use proptest::prelude::*;

    fn truth(w: Vec<f64>, a: Vec<f64>, k: usize, p: usize, n: usize) -> GroundTruth {
        GroundTruth {
            w,
            a,
            lambda: vec![1.0; n],
            k,
            p,
            n,
            noise_seed: 0,
            initial_noise: InitialNoise::Stationary,
        }
    }

    fn summary(w: &[f64], a: &[f64], var: Option<f64>, k: usize, p: usize, n: usize) -> PosteriorSummary {
        let layout = Layout::new(k, p, n);
        let mut mean = w.to_vec();
        mean.extend_from_slice(a);
        mean.extend(vec![1.0; k + p + n]);
        let variance = var.map(|v| vec![v; layout.dim()]);
        PosteriorSummary::new("t", layout, mean, variance, None).unwrap()
    }

    #[test]
    fn perfect_estimator() {
        let t = truth(vec![1.0, 2.0, 3.0], vec![0.1, 0.2, 0.0], 1, 1, 3);
        let s = summary(&t.w, &t.a, Some(0.5), 1, 1, 3);
        let set = ReplicateSet::new("hmc", vec![s.clone(), s], vec![t.clone(), t]).unwrap();
        let st = summary_stats(&set, Image::W(0)).unwrap();
        assert_eq!((st.asbias, st.amse), (0.0, 0.0));
        assert!((st.correlation - 1.0).abs() < 1e-15);
        assert_eq!(st.avar, Some(0.5));
    }

    #[test]
    fn two_replicate_hand_case() {
        let t = truth(vec![0.0], vec![0.0], 1, 1, 1);
        let s1 = summary(&[1.0], &[0.0], None, 1, 1, 1);
        let s2 = summary(&[-1.0], &[0.0], None, 1, 1, 1);
        let set = ReplicateSet::new("ols", vec![s1, s2], vec![t.clone(), t]).unwrap();
        let st = summary_stats(&set, Image::W(0)).unwrap();
        assert_eq!(st.asbias, 0.0);
        assert_eq!(st.amse, 1.0);
        assert_eq!(st.avar, None);
    }

    #[test]
    fn moran_two_point_antithetic() {
        let w = MoranWeights::new(&Mask::full(&[1, 2]).unwrap());
        assert!((morans_i(&[1.0, -1.0], &w).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn moran_checkerboard_is_negative() {
        let mask = Mask::full(&[4, 4]).unwrap();
        let img: Vec<f64> = (0..16).map(|c| if (c / 4 + c % 4) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(morans_i(&img, &MoranWeights::new(&mask)).unwrap() < 0.0);
    }

    #[test]
    fn moran_of_shuffled_smooth_image_is_smaller() {
        let mask = Mask::full(&[10, 10]).unwrap();
        let w = MoranWeights::new(&mask);
        let smooth: Vec<f64> = (0..100).map(|c| ((c / 10) as f64 * 0.3).sin() + ((c % 10) as f64 * 0.3).cos()).collect();
        let mut shuffled = smooth.clone();
        // Fixed pseudo-random permutation.
        for i in (1..100).rev() {
            let j = (i * 7919 + 13) % (i + 1);
            shuffled.swap(i, j);
        }
        let i0 = morans_i(&smooth, &w).unwrap();
        let i1 = morans_i(&shuffled, &w).unwrap();
        assert!(i1.abs() < i0.abs());
    }

    #[test]
    fn moran_constant_image_fails() {
        let w = MoranWeights::new(&Mask::full(&[2, 2]).unwrap());
        assert_eq!(morans_i(&[3.0; 4], &w), Err(Error::ZeroVariance));
    }

    proptest! {
        #[test]
        fn moran_matches_brute_force(
            rows in 1usize..8,
            cols in 2usize..8,
            seed in proptest::collection::vec(-5.0f64..5.0, 64),
            holes in proptest::collection::vec(any::<bool>(), 64),
        ) {
            let cells = rows * cols;
            let mut inside: Vec<bool> = (0..cells).map(|c| !holes[c] || c % 3 == 0).collect();
            inside[0] = true;
            inside[cells - 1] = true;
            let mask = Mask::new(vec![rows, cols], inside).unwrap();
            let n = mask.n_voxels();
            let vals: Vec<f64> = (0..n).map(|i| seed[i]).collect();
            prop_assume!(vals.iter().any(|v| *v != vals[0]));
            let fast = morans_i(&vals, &MoranWeights::new(&mask)).unwrap();
            let slow = moran_brute(&vals, &mask);
            prop_assert!((fast - slow).abs() < 1e-12 * slow.abs().max(1.0));
        }

        #[test]
        fn ppm_is_monotone_in_threshold(
            means in proptest::collection::vec(-3.0f64..3.0, 6),
            sds in proptest::collection::vec(0.01f64..2.0, 6),
            g1 in -4.0f64..4.0,
            dg in 0.0f64..3.0,
        ) {
            let n = 3;
            let cov: Vec<f64> = (0..n).flat_map(|v| [sds[2*v]*sds[2*v], 0.1*sds[2*v]*sds[2*v+1], 0.1*sds[2*v]*sds[2*v+1], sds[2*v+1]*sds[2*v+1]]).collect();
            let lo = Contrast::new(vec![1.0, -0.5], EffectThreshold::Value(g1), 0.9).unwrap();
            let hi = Contrast::new(vec![1.0, -0.5], EffectThreshold::Value(g1 + dg), 0.9).unwrap();
            let a = ppm_gaussian(&means, &cov, n, &lo).unwrap();
            let b = ppm_gaussian(&means, &cov, n, &hi).unwrap();
            for (p, q) in a.probability.iter().zip(&b.probability) {
                prop_assert!((0.0..=1.0).contains(p) && (0.0..=1.0).contains(q));
                prop_assert!(q <= p);
            }
        }

        #[test]
        fn amse_is_at_least_asbias(
            est in proptest::collection::vec(-3.0f64..3.0, 12),
            tr in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let t = truth(tr.clone(), vec![0.0; 4], 1, 1, 4);
            let sums: Vec<PosteriorSummary> = est.chunks(4).map(|e| summary(e, &[0.0; 4], None, 1, 1, 4)).collect();
            let set = ReplicateSet::new("x", sums, vec![t.clone(), t.clone(), t]).unwrap();
            let s = summary_stats(&set, Image::W(0)).unwrap();
            prop_assert!(s.amse >= s.asbias - 1e-12);
        }
    }

    #[test]
    fn vacuous_threshold_gives_certainty() {
        let c = Contrast::new(vec![1.0], EffectThreshold::Value(f64::NEG_INFINITY), 0.9).unwrap();
        let p = ppm_gaussian(&[0.3, -2.0], &[1.0, 4.0], 2, &c).unwrap();
        assert_eq!(p.probability, vec![1.0, 1.0]);
        let s = ppm_from_samples(&[vec![-1e300, 0.0]], &[0.0], &c).unwrap();
        assert_eq!(s.probability, vec![1.0]);
    }

    #[test]
    fn gaussian_ppm_at_the_mean_is_half() {
        let c = Contrast::new(vec![0.5, 0.5], EffectThreshold::Value(1.0), 0.9).unwrap();
        let p = ppm_gaussian(&[1.5, 0.5], &[0.3, 0.1, 0.1, 0.2], 1, &c).unwrap();
        assert!((p.probability[0] - 0.5).abs() < 1e-15);
        assert!(!p.active[0]);
    }

    #[test]
    fn threshold_rules() {
        let point: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let top = EffectThreshold::TopFraction(0.1).resolve(&point).unwrap();
        assert!((top - 9.1).abs() < 1e-12);
        assert_eq!(point.iter().filter(|v| **v > top).count(), 1);
        let g = EffectThreshold::AboveGlobalMean { percent: 1.0 }.resolve(&point).unwrap();
        assert!((g - 5.5 * 1.01).abs() < 1e-12);
    }

    #[test]
    fn contrast_length_is_checked() {
        let c = Contrast::new(vec![1.0, 1.0, 1.0], EffectThreshold::Value(0.0), 0.9).unwrap();
        assert!(ppm_gaussian(&[0.0; 4], &[1.0; 8], 2, &c).is_err());
        assert!(Contrast::new(vec![0.0], EffectThreshold::Value(0.0), 0.9).is_err());
        assert!(Contrast::new(vec![1.0], EffectThreshold::Value(0.0), 1.0).is_err());
    }

    #[test]
    fn sensitivity_extremes() {
        let truth_active = vec![true, false, true, false];
        let th = default_thresholds();
        assert_eq!(th.len(), 11);
        let perfect = sensitivity_curve(&[1.0, 0.0, 1.0, 0.0], &truth_active, &th[..10]).unwrap();
        assert!(perfect.iter().all(|(_, s)| *s == 1.0));
        let none = sensitivity_curve(&[0.0; 4], &truth_active, &th).unwrap();
        assert!(none.iter().all(|(_, s)| *s == 0.0));
        assert!(sensitivity_curve(&[0.5; 4], &[false; 4], &th).is_err());
    }

    #[test]
    fn self_comparison_and_reciprocity() {
        let mask = Mask::full(&[2, 2]).unwrap();
        let w = MoranWeights::new(&mask);
        let t = truth(vec![1.0, 0.5, -0.2, 0.3], vec![0.1, 0.0, 0.2, -0.1], 1, 1, 4);
        let s1 = summary(&[1.1, 0.4, -0.3, 0.5], &[0.0, 0.1, 0.1, 0.0], Some(0.2), 1, 1, 4);
        let s2 = summary(&[0.8, 0.6, -0.1, 0.1], &[0.2, 0.0, 0.3, -0.3], Some(0.3), 1, 1, 4);
        let a = ReplicateSet::new("hmc", vec![s1.clone()], vec![t.clone()]).unwrap();
        let b = ReplicateSet::new("vb", vec![s2], vec![t.clone()]).unwrap();
        let same = compare_report(&a, &a, &w).unwrap();
        for blk in &same.blocks {
            assert_eq!(blk.amse_ratio, 1.0);
            assert!((blk.estimate_correlation - 1.0).abs() < 1e-15);
        }
        let ab = compare_report(&a, &b, &w).unwrap();
        let ba = compare_report(&b, &a, &w).unwrap();
        for (x, y) in ab.blocks.iter().zip(&ba.blocks) {
            assert!((x.amse_ratio * y.amse_ratio - 1.0).abs() < 1e-12);
        }
        let short = ReplicateSet::new("vb", vec![s1.clone(), s1], vec![t.clone(), t]).unwrap();
        assert!(compare_report(&a, &short, &w).is_err());
    }
}
