use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evolve::{evolve, AcParams};
use super::levelset::{init_levelset, LevelSet};
use crate::error::{Error, Result};
use crate::eval::{accuracy, confusion};
use crate::image::{Image, Mask};

/// Inclusive parameter ranges of the grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationGrid {
    pub w_min: f64,
    pub w_max: f64,
    pub w_step: f64,
    pub r_min: usize,
    pub r_max: usize,
    pub r_step: usize,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        CalibrationGrid {
            w_min: 0.0,
            w_max: 1.0,
            w_step: 0.05,
            r_min: 1,
            r_max: 12,
            r_step: 1,
        }
    }
}

impl CalibrationGrid {
    pub fn single(w: f64, r_kernel: usize) -> Self {
        CalibrationGrid {
            w_min: w,
            w_max: w,
            w_step: 1.0,
            r_min: r_kernel,
            r_max: r_kernel,
            r_step: 1,
        }
    }

    pub fn w_values(&self) -> Result<Vec<f64>> {
        if !(self.w_step > 0.0) || self.w_max < self.w_min {
            return Err(Error::validation("w grid needs w_step > 0 and w_max >= w_min"));
        }
        let n = ((self.w_max - self.w_min) / self.w_step + 1e-9).floor() as usize;
        // integer stepping avoids accumulated drift; round off representation noise
        Ok((0..=n)
            .map(|i| ((self.w_min + i as f64 * self.w_step) * 1e9).round() / 1e9)
            .collect())
    }

    pub fn r_values(&self) -> Result<Vec<usize>> {
        if self.r_step == 0 || self.r_max < self.r_min {
            return Err(Error::validation("r grid needs r_step > 0 and r_max >= r_min"));
        }
        Ok((self.r_min..=self.r_max).step_by(self.r_step).collect())
    }
}

/// Image, nominal slice and ground truth of one training layer.
#[derive(Debug, Clone)]
pub struct CalibrationPair<'a> {
    pub image: &'a Image,
    pub nominal: &'a Mask,
    pub truth: &'a Mask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub w: f64,
    pub r_kernel: usize,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub best: GridScore,
    /// Every grid point in evaluation order (w outer, r_kernel inner).
    pub table: Vec<GridScore>,
    pub evaluations: usize,
}

impl Calibration {
    pub fn params(&self, base: &AcParams) -> AcParams {
        AcParams {
            w: self.best.w,
            r_kernel: self.best.r_kernel,
            ..*base
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_score_table(path, &self.table)
    }
}

pub fn write_score_table(path: &Path, table: &[GridScore]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut wtr = csv::Writer::from_path(path)?;
    for row in table {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_score_table(path: &Path) -> Result<Vec<GridScore>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Mean pixel accuracy of [`evolve`] over `pairs` at one parameter setting.
pub fn mean_accuracy(pairs: &[CalibrationPair<'_>], inits: &[LevelSet], params: &AcParams) -> Result<f64> {
    let mut total = 0.0;
    for (p, init) in pairs.iter().zip(inits) {
        let mask = evolve(p.image, init, params)?;
        total += accuracy(&confusion(&mask, p.truth)?)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Exhaustive grid search over `(w, r_kernel)`. Ties keep the smaller `w`,
/// then the smaller `r_kernel`.
pub fn calibrate(pairs: &[CalibrationPair<'_>], grid: &CalibrationGrid, base: &AcParams) -> Result<Calibration> {
    if pairs.is_empty() {
        return Err(Error::validation("calibration needs at least one training pair"));
    }
    let inits = pairs
        .iter()
        .map(|p| init_levelset(p.nominal))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Vec::new();
    let mut best: Option<GridScore> = None;
    for w in grid.w_values()? {
        for r in grid.r_values()? {
            let params = AcParams { w, r_kernel: r, ..*base };
            let score = GridScore {
                w,
                r_kernel: r,
                mean_accuracy: mean_accuracy(pairs, &inits, &params)?,
            };
            if best.is_none_or(|b| score.mean_accuracy > b.mean_accuracy) {
                best = Some(score);
            }
            table.push(score);
        }
    }
    Ok(Calibration {
        best: best.expect("grid has at least one point"),
        evaluations: table.len(),
        table,
    })
}
