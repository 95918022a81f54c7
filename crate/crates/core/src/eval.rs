//! Pixel-accuracy scoring, region aggregation, confidence intervals and
//! inference timing.
//!
//! Conventions: 95 % intervals use the normal approximation
//! `mean ± 1.96·sd/√n` with the sample (n − 1) standard deviation; boxplots
//! use Tukey whiskers (1.5·IQR) and inclusive-median quartiles, where the
//! median belongs to both halves when n is odd.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::lattice::RegionLabel;
use crate::perturb::PerturbSpec;

pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> Result<f64> {
        accuracy(self)
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;
    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

pub fn confusion(pred: &Mask, truth: &Mask) -> Result<Confusion> {
    if !pred.same_shape(truth) {
        return Err(Error::shape(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `(TP + TN) / (TP + TN + FP + FN)`.
pub fn accuracy(c: &Confusion) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::validation("accuracy of an empty confusion matrix"));
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

pub fn ci95(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::validation(format!(
            "confidence interval needs >= 2 values, got {}",
            values.len()
        )));
    }
    let m = mean(values);
    let half = Z_95 * sample_sd(values) / (values.len() as f64).sqrt();
    Ok((m - half, m + half))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::validation("boxplot of no values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let (lower, upper) = if n == 1 {
        (&v[..], &v[..])
    } else {
        // inclusive median: odd n puts the median in both halves
        (&v[..n.div_ceil(2)], &v[n / 2..])
    };
    let q1 = median_sorted(lower);
    let q3 = median_sorted(upper);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
    Ok(BoxStats {
        median: median_sorted(&v),
        q1,
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: v.iter().copied().filter(|x| !(lo_fence..=hi_fence).contains(x)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScore {
    pub specimen_id: String,
    pub layer_index: usize,
    pub region: RegionLabel,
    pub accuracy: f64,
    pub method: String,
    pub perturbation: Option<PerturbSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: RegionLabel,
    pub n: usize,
    pub mean: f64,
    pub ci95: (f64, f64),
    pub boxplot: BoxStats,
}

pub fn region_aggregate(scores: &[LayerScore], region: RegionLabel) -> Result<RegionSummary> {
    let values: Vec<f64> = scores
        .iter()
        .filter(|s| s.region == region)
        .map(|s| s.accuracy)
        .collect();
    if values.len() < 2 {
        return Err(Error::validation(format!(
            "region {region} has {} scores, need >= 2",
            values.len()
        )));
    }
    Ok(RegionSummary {
        region,
        n: values.len(),
        mean: mean(&values),
        ci95: ci95(&values)?,
        boxplot: box_stats(&values)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub samples_s: Vec<f64>,
    pub mean_s: f64,
    pub median_s: f64,
    pub q1_s: f64,
    pub q3_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub hardware: String,
}

impl TimingStats {
    pub fn from_samples(samples_s: Vec<f64>) -> Result<Self> {
        let b = box_stats(&samples_s)?;
        let min_s = samples_s.iter().copied().fold(f64::INFINITY, f64::min);
        let max_s = samples_s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(TimingStats {
            mean_s: mean(&samples_s),
            median_s: b.median,
            q1_s: b.q1,
            q3_s: b.q3,
            min_s,
            max_s,
            samples_s,
            hardware: hardware_description(),
        })
    }
}

/// Times one segmentation call per image on the current thread. Setup is the
/// caller's responsibility and is not timed.
pub fn time_inference<F>(mut method: F, images: &[Image]) -> Result<TimingStats>
where
    F: FnMut(&Image) -> Result<Mask>,
{
    if images.is_empty() {
        return Err(Error::validation("timing needs at least one image"));
    }
    let mut samples = Vec::with_capacity(images.len());
    for img in images {
        let start = Instant::now();
        let mask = method(img)?;
        let elapsed = start.elapsed().as_secs_f64();
        std::hint::black_box(mask);
        samples.push(elapsed.max(1e-9));
    }
    TimingStats::from_samples(samples)
}

pub fn hardware_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{cpu} ({threads} hw threads, single-threaded timing)")
}
