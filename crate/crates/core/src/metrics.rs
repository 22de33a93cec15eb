//! Sample-set evaluation: k-space error, RMSE/NMSE/pSNR, pairwise RMSE, mean and std
//! maps, pixel histograms and a directional-uncertainty ratio.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexArray, LinearOperator, RealArray};
use crate::rng::ChainRng;

/// pSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Directionality reported when only the undersampled axis varies.
pub const DIRECTIONALITY_CAP: f64 = 1e6;

/// Mean `|Ex − y|` over every measured voxel of every coil.
pub fn kspace_abs_error(x: &ComplexArray, e: &dyn LinearOperator, y: &ComplexArray) -> Result<f64> {
    let ex = e.apply(x)?;
    if ex.len() != y.len() {
        return Err(Error::Shape(format!("Ex {:?}, y {:?}", ex.shape(), y.shape())));
    }
    if y.is_empty() {
        return Err(Error::Shape("no measured voxels".into()));
    }
    Ok(ex.data().iter().zip(y.data()).map(|(a, b)| (a - b).norm()).sum::<f64>() / y.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    /// `100·‖m⊙(x−ref)‖ / ‖m⊙ref‖`
    pub rmse_percent: f64,
    /// `‖x−ref‖² / ‖ref‖²` over the full frame.
    pub nmse: f64,
    /// `20·log10(max(ref)/√MSE)` over the full frame, capped at [`PSNR_CAP`].
    pub psnr: f64,
}

fn check_same(a: &RealArray, b: &RealArray, mask: &[bool]) -> Result<()> {
    if a.shape() != b.shape() || a.len() != mask.len() {
        return Err(Error::Shape(format!("{:?} vs {:?} with mask of {}", a.shape(), b.shape(), mask.len())));
    }
    Ok(())
}

fn masked_diff_norm(a: &RealArray, b: &RealArray, mask: &[bool]) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn masked_norm(a: &RealArray, mask: &[bool]) -> f64 {
    a.data().iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| x * x).sum::<f64>().sqrt()
}

pub fn image_metrics(x: &RealArray, reference: &RealArray, mask: &[bool]) -> Result<ImageMetrics> {
    check_same(x, reference, mask)?;
    let ref_masked = masked_norm(reference, mask);
    let ref_energy: f64 = reference.data().iter().map(|v| v * v).sum();
    if ref_masked == 0.0 || ref_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let rmse_percent = 100.0 * masked_diff_norm(x, reference, mask) / ref_masked;
    let err: f64 = x.data().iter().zip(reference.data()).map(|(a, b)| (a - b).powi(2)).sum();
    let nmse = err / ref_energy;
    let mse = err / x.len() as f64;
    let peak = reference.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let psnr = if mse == 0.0 { PSNR_CAP } else { (20.0 * (peak / mse.sqrt()).log10()).min(PSNR_CAP) };
    Ok(ImageMetrics { rmse_percent, nmse, psnr })
}

/// Images to evaluate against a fully sampled, bias-free reference.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub samples: Vec<RealArray>,
    pub reference: RealArray,
    pub mask: Vec<bool>,
    /// Axis of the image along which k-space lines are skipped.
    pub undersampled_axis: usize,
}

impl SampleSet {
    pub fn new(samples: Vec<RealArray>, reference: RealArray, mask: Vec<bool>, undersampled_axis: usize) -> Result<Self> {
        if reference.shape().len() != 2 || mask.len() != reference.len() || undersampled_axis > 1 {
            return Err(Error::Shape(format!(
                "reference {:?}, mask of {}, axis {undersampled_axis}",
                reference.shape(),
                mask.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|s| s.shape() != reference.shape()) {
            return Err(Error::Shape(format!("sample {:?}, reference {:?}", bad.shape(), reference.shape())));
        }
        Ok(Self { samples, reference, mask, undersampled_axis })
    }
}

/// Mean and std of RMSE% between `pairs` random distinct pairs, normalized by the
/// reference's masked norm so that the statistic is symmetric in the pair.
pub fn pairwise_rmse(set: &SampleSet, pairs: usize, rng: &mut ChainRng) -> Result<Summary> {
    let n = set.samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if pairs == 0 {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    let denom = masked_norm(&set.reference, &set.mask);
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    let values: Vec<f64> = pair_indices(n, pairs, rng)
        .into_iter()
        .map(|(i, j)| 100.0 * masked_diff_norm(&set.samples[i], &set.samples[j], &set.mask) / denom)
        .collect();
    Ok(Summary::of(&values))
}

/// Unordered pairs `(i, j)` with `i < j`, drawn uniformly with replacement.
pub fn pair_indices(n: usize, pairs: usize, rng: &mut ChainRng) -> Vec<(usize, usize)> {
    (0..pairs)
        .map(|_| {
            let i = rng.below(n);
            let mut j = rng.below(n - 1);
            if j >= i {
                j += 1;
            }
            (i.min(j), i.max(j))
        })
        .collect()
}

/// Mean and unbiased standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub pixel: (usize, usize),
    /// `bins + 1` edges spanning the sample range.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleStatistics {
    pub mean: RealArray,
    /// Unbiased pixelwise standard deviation.
    pub std: RealArray,
    pub histograms: Vec<Histogram>,
}

pub fn sample_statistics(samples: &[RealArray], query: &[(usize, usize)], bins: usize) -> Result<SampleStatistics> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let shape = samples[0].shape().to_vec();
    if shape.len() != 2 || samples.iter().any(|s| s.shape() != shape.as_slice()) {
        return Err(Error::Shape("samples must share one 2D shape".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("histograms need at least one bin".into()));
    }
    let len = samples[0].len();
    // Offsets from the first sample keep identical samples exact and reduce cancellation.
    let first = &samples[0];
    let offset = |i: usize| samples.iter().map(|s| s.data()[i] - first.data()[i]).sum::<f64>() / n as f64;
    let mean = RealArray::from_fn(&shape, |i| first.data()[i] + offset(i));
    let std = RealArray::from_fn(&shape, |i| {
        let d = offset(i);
        let ss = samples.iter().map(|s| (s.data()[i] - first.data()[i] - d).powi(2)).sum::<f64>();
        (ss / (n - 1) as f64).sqrt()
    });
    let histograms = query
        .iter()
        .map(|&(r, c)| {
            if r >= shape[0] || c >= shape[1] {
                return Err(Error::InvalidArgument(format!("pixel ({r}, {c}) outside {shape:?}")));
            }
            let idx = r * shape[1] + c;
            debug_assert!(idx < len);
            let values: Vec<f64> = samples.iter().map(|s| s.data()[idx]).collect();
            Ok(histogram((r, c), &values, bins))
        })
        .collect::<Result<_>>()?;
    Ok(SampleStatistics { mean, std, histograms })
}

fn histogram(pixel: (usize, usize), values: &[f64], bins: usize) -> Histogram {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { pixel, edges, counts }
}

/// Ratio of the summed squared neighbour differences of `std_map` along the undersampled
/// axis to those along the other axis, over neighbour pairs inside the mask.
///
/// Values above 1 mean the uncertainty varies faster along the undersampled axis. A flat map
/// gives 1; a map varying only along the undersampled axis gives [`DIRECTIONALITY_CAP`].
pub fn directionality_statistic(std_map: &RealArray, mask: &[bool], undersampled_axis: usize) -> Result<f64> {
    if std_map.shape().len() != 2 || mask.len() != std_map.len() || undersampled_axis > 1 {
        return Err(Error::Shape(format!("std map {:?}, mask of {}", std_map.shape(), mask.len())));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyRegion);
    }
    let (h, w) = (std_map.shape()[0], std_map.shape()[1]);
    let mut energy = [0.0f64; 2];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !mask[i] {
                continue;
            }
            if r + 1 < h && mask[i + w] {
                energy[0] += (std_map.data()[i + w] - std_map.data()[i]).powi(2);
            }
            if c + 1 < w && mask[i + 1] {
                energy[1] += (std_map.data()[i + 1] - std_map.data()[i]).powi(2);
            }
        }
    }
    let (along, across) = (energy[undersampled_axis], energy[1 - undersampled_axis]);
    Ok(match (along == 0.0, across == 0.0) {
        (true, true) => 1.0,
        (false, true) => DIRECTIONALITY_CAP,
        _ => (along / across).min(DIRECTIONALITY_CAP),
    })
}

/// Pixels above `fraction` of the reference's 99th-percentile magnitude, closed with a
/// 3×3 structuring element.
pub fn foreground_mask(reference: &RealArray, fraction: f64) -> Result<Vec<bool>> {
    if reference.shape().len() != 2 || reference.is_empty() {
        return Err(Error::Shape(format!("reference {:?}", reference.shape())));
    }
    let mut mags: Vec<f64> = reference.data().iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let p99 = mags[((mags.len() - 1) as f64 * 0.99).round() as usize];
    if p99 == 0.0 {
        return Err(Error::ZeroReference);
    }
    let raw: Vec<bool> = reference.data().iter().map(|v| v.abs() > fraction * p99).collect();
    let (h, w) = (reference.shape()[0], reference.shape()[1]);
    let dilated = morph(&raw, h, w, false);
    Ok(morph(&dilated, h, w, true))
}

/// 3×3 dilation (`erode = false`) or erosion. Erosion treats outside pixels as set so that
/// closing never removes pixels at the border.
fn morph(mask: &[bool], h: usize, w: usize, erode: bool) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for r in 0..h {
        for c in 0..w {
            let mut any = false;
            let mut all = true;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    let v = if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        erode
                    } else {
                        mask[rr as usize * w + cc as usize]
                    };
                    any |= v;
                    all &= v;
                }
            }
            out[r * w + c] = if erode { all } else { any };
        }
    }
    out
}

/// Per-sample metrics of one image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub rmse_percent: f64,
    pub nmse: f64,
    pub psnr: f64,
    pub kspace_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub r: f64,
    pub noise_scale: f64,
    pub per_sample: Vec<SampleMetrics>,
    pub rmse_percent: Summary,
    pub nmse: Summary,
    pub psnr: Summary,
    pub kspace_error: Option<Summary>,
    pub pairwise_rmse: Option<Summary>,
    pub mean_map: RealArray,
    pub std_map: RealArray,
    pub directionality: f64,
}

/// Labels a report with its sampler and acquisition settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportContext {
    pub method: String,
    pub r: f64,
    pub noise_scale: f64,
    pub pairs: usize,
    pub seed: u64,
}

/// Evaluates every sample; `kspace_errors`, if given, must have one entry per sample.
pub fn metrics_report(set: &SampleSet, kspace_errors: Option<&[f64]>, ctx: &ReportContext) -> Result<MetricsReport> {
    if let Some(k) = kspace_errors {
        if k.len() != set.samples.len() {
            return Err(Error::Shape(format!("{} k-space errors for {} samples", k.len(), set.samples.len())));
        }
    }
    let per_sample: Vec<SampleMetrics> = set
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let m = image_metrics(s, &set.reference, &set.mask)?;
            Ok(SampleMetrics {
                rmse_percent: m.rmse_percent,
                nmse: m.nmse,
                psnr: m.psnr,
                kspace_error: kspace_errors.map(|k| k[i]),
            })
        })
        .collect::<Result<_>>()?;
    let column = |f: fn(&SampleMetrics) -> f64| Summary::of(&per_sample.iter().map(f).collect::<Vec<_>>());
    let stats = sample_statistics(&set.samples, &[], 1)?;
    let pairwise = pairwise_rmse(set, ctx.pairs, &mut ChainRng::seed_from_u64(ctx.seed))?;
    Ok(MetricsReport {
        method: ctx.method.clone(),
        r: ctx.r,
        noise_scale: ctx.noise_scale,
        rmse_percent: column(|m| m.rmse_percent),
        nmse: column(|m| m.nmse),
        psnr: column(|m| m.psnr),
        kspace_error: kspace_errors.map(Summary::of),
        pairwise_rmse: Some(pairwise),
        directionality: directionality_statistic(&stats.std, &set.mask, set.undersampled_axis)?,
        mean_map: stats.mean,
        std_map: stats.std,
        per_sample,
    })
}

impl MetricsReport {
    /// `(metric, summary)` rows in table order.
    pub fn rows(&self) -> Vec<(&'static str, Summary)> {
        let mut rows = vec![("rmse_percent", self.rmse_percent), ("nmse", self.nmse), ("psnr", self.psnr)];
        if let Some(k) = self.kspace_error {
            rows.push(("kspace_abs_error", k));
        }
        if let Some(p) = self.pairwise_rmse {
            rows.push(("pairwise_rmse", p));
        }
        rows.push(("directionality", Summary { mean: self.directionality, std: 0.0 }));
        rows
    }
}

/// Writes `method,r,noise_scale,metric,mean,std` rows for a set of reports.
pub fn write_csv(reports: &[MetricsReport], mut out: impl Write) -> Result<()> {
    writeln!(out, "method,r,noise_scale,metric,mean,std")?;
    for rep in reports {
        for (name, s) in rep.rows() {
            writeln!(out, "{},{},{},{},{:e},{:e}", rep.method, rep.r, rep.noise_scale, name, s.mean, s.std)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
