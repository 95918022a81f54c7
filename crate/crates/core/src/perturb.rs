//! Inference-time image degradations: gamma, additive Gaussian noise and
//! pixelation, each at three severity levels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::quantize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    Gamma,
    GaussianNoise,
    Pixelate,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 3] = [
        PerturbKind::Gamma,
        PerturbKind::GaussianNoise,
        PerturbKind::Pixelate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbKind::Gamma => "gamma",
            PerturbKind::GaussianNoise => "gaussian_noise",
            PerturbKind::Pixelate => "pixelate",
        }
    }

    /// Preset value for a severity level.
    pub fn preset(self, level: Severity) -> f64 {
        let i = level as usize;
        match self {
            PerturbKind::Gamma => [0.8, 1.2, 1.5][i],
            PerturbKind::GaussianNoise => [5.0, 10.0, 20.0][i],
            PerturbKind::Pixelate => [0.75, 0.5, 0.25][i],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low = 0,
    Mid = 1,
    High = 2,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Low, Severity::Mid, Severity::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Mid => "mid",
            Severity::High => "high",
        }
    }
}

/// A perturbation with its numeric parameter. `value` is γ, σ_n (8-bit
/// intensity units) or the scale s, depending on `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub kind: PerturbKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Severity>,
    pub value: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl PerturbSpec {
    pub fn preset(kind: PerturbKind, level: Severity, rng_seed: u64) -> Self {
        PerturbSpec {
            kind,
            level: Some(level),
            value: kind.preset(level),
            rng_seed,
        }
    }

    /// All nine kind × level presets.
    pub fn table(rng_seed: u64) -> Vec<PerturbSpec> {
        PerturbKind::ALL
            .iter()
            .flat_map(|&k| Severity::ALL.iter().map(move |&l| PerturbSpec::preset(k, l, rng_seed)))
            .collect()
    }

    pub fn level_name(&self) -> &'static str {
        self.level.map(Severity::as_str).unwrap_or("custom")
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            PerturbKind::Gamma => self.value > 0.0 && self.value.is_finite(),
            PerturbKind::GaussianNoise => self.value >= 0.0 && self.value.is_finite(),
            PerturbKind::Pixelate => self.value > 0.0 && self.value <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "{} value {} out of range",
                self.kind.as_str(),
                self.value
            )))
        }
    }

    /// Applies this perturbation. `salt` decorrelates the noise between
    /// images that share a spec.
    pub fn apply(&self, image: &Image, salt: u64) -> Result<Image> {
        self.validate()?;
        match self.kind {
            PerturbKind::Gamma => gamma(image, self.value),
            PerturbKind::GaussianNoise => gaussian_noise(
                image,
                self.value,
                crate::seed::derive_seed(&[self.rng_seed, salt]),
            ),
            PerturbKind::Pixelate => pixelate(image, self.value),
        }
    }
}

pub fn gamma(image: &Image, gamma: f64) -> Result<Image> {
    if !(gamma > 0.0) {
        return Err(Error::validation("gamma must be > 0"));
    }
    let lut: Vec<u8> = (0..256)
        .map(|v| quantize(255.0 * (v as f64 / 255.0).powf(gamma)))
        .collect();
    let mut out = image.clone();
    for v in out.data_mut() {
        *v = lut[*v as usize];
    }
    Ok(out)
}

pub fn gaussian_noise(image: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0) {
        return Err(Error::validation("noise sigma must be >= 0"));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::validation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.clone();
    for v in out.data_mut() {
        *v = quantize(*v as f64 + normal.sample(&mut rng));
    }
    Ok(out)
}

/// Block-average down to `(round(s·H), round(s·W))`, then nearest-neighbour
/// back up to `(H, W)`.
pub fn pixelate(image: &Image, scale: f64) -> Result<Image> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::validation("pixelation scale must be in (0, 1]"));
    }
    let (w, h) = (image.width(), image.height());
    let sw = (scale * w as f64).round() as usize;
    let sh = (scale * h as f64).round() as usize;
    if sw < 1 || sh < 1 {
        return Err(Error::validation(format!(
            "pixelation scale {scale} shrinks {w}x{h} below one pixel"
        )));
    }
    if sw == w && sh == h {
        return Ok(image.clone());
    }
    // Source rows/cols covered by small pixel i: [floor(i·n/m), floor((i+1)·n/m)).
    let span = |i: usize, small: usize, full: usize| (i * full / small, ((i + 1) * full / small).max(i * full / small + 1));
    let mut small = vec![0u8; sw * sh];
    for sy in 0..sh {
        let (y0, y1) = span(sy, sh, h);
        for sx in 0..sw {
            let (x0, x1) = span(sx, sw, w);
            let mut sum = 0u64;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += image.get(x, y) as u64;
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            small[sy * sw + sx] = quantize(sum as f64 / n);
        }
    }
    Ok(Image::from_fn(w, h, |x, y| {
        let sx = (x * sw / w).min(sw - 1);
        let sy = (y * sh / h).min(sh - 1);
        small[sy * sw + sx]
    }))
}
