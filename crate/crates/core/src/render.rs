//! Synthetic powder-bed rendering of layer masks.
//!
//! Intensity model, per pixel:
//!
//! ```text
//! base(mask) + ramp(x, y, build_location)
//!   + [foreground] anisotropy · solid_base · cos²(scan_angle − light_azimuth)
//!   + N(0, speckle_sigma²)
//! ```
//!
//! rounded half away from zero, then clamped to `[0, 255]`. This is a
//! simulation of the observed within-layer and layer-to-layer histogram
//! shifts, not a physical image-formation model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::seed::{derive_seed, hash_str};

/// Radius of the build area, mm. Scales the location-dependent part of the
/// illumination ramp.
pub const PLATE_RADIUS_MM: f64 = 150.0;

pub const DEFAULT_SCAN_ROTATION_DEG: f64 = 67.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhotometricParams {
    pub powder_base: f64,
    pub solid_base: f64,
    /// Intensity change across one image width along `illum_direction_deg`.
    pub illum_gradient: f64,
    pub illum_direction_deg: f64,
    pub anisotropy_strength: f64,
    pub light_azimuth_deg: f64,
    pub scan_rotation_deg: f64,
    pub speckle_sigma: f64,
    pub rng_seed: u64,
}

impl Default for PhotometricParams {
    fn default() -> Self {
        PhotometricParams {
            powder_base: 90.0,
            solid_base: 140.0,
            illum_gradient: 0.0,
            illum_direction_deg: 0.0,
            anisotropy_strength: 0.35,
            light_azimuth_deg: 0.0,
            scan_rotation_deg: DEFAULT_SCAN_ROTATION_DEG,
            speckle_sigma: 5.0,
            rng_seed: 0,
        }
    }
}

/// Build-plate position presets standing in for the two specimen locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocationPreset {
    A,
    B,
}

impl LocationPreset {
    /// Build location in mm (left side of the plate, bottom for A, top for B).
    pub fn build_location(self) -> [f64; 2] {
        match self {
            LocationPreset::A => [-75.0, -60.0],
            LocationPreset::B => [-75.0, 60.0],
        }
    }

    /// Photometric parameters for this location; the two presets have
    /// opposite ramp signs, which also flips their illumination offset.
    pub fn params(self, rng_seed: u64) -> PhotometricParams {
        let illum_gradient = match self {
            LocationPreset::A => 40.0,
            LocationPreset::B => -40.0,
        };
        PhotometricParams {
            illum_gradient,
            rng_seed,
            ..PhotometricParams::default()
        }
    }
}

impl PhotometricParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.anisotropy_strength) {
            return Err(Error::validation("anisotropy_strength must be in [0, 1]"));
        }
        if self.speckle_sigma < 0.0 || !self.speckle_sigma.is_finite() {
            return Err(Error::validation("speckle_sigma must be finite and >= 0"));
        }
        if self.anisotropy_strength == 0.0
            && self.speckle_sigma == 0.0
            && self.powder_base == self.solid_base
        {
            return Err(Error::validation(
                "powder_base must differ from solid_base when rendering is noiseless",
            ));
        }
        Ok(())
    }
}

/// Identifies the layer being rendered; every random draw is keyed off it.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerContext<'a> {
    pub specimen_id: &'a str,
    pub layer_index: usize,
    pub build_location: [f64; 2],
}

/// Scan direction of a 1-based layer, degrees in `[0, 360)`.
pub fn scan_angle(layer_index: usize, scan_rotation_deg: f64) -> f64 {
    let a = (layer_index.saturating_sub(1) as f64 * scan_rotation_deg) % 360.0;
    if a < 0.0 {
        a + 360.0
    } else {
        a
    }
}

/// Rounds half away from zero, then clamps to the 8-bit range.
pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn render_layer(mask: &Mask, params: &PhotometricParams, ctx: &LayerContext<'_>) -> Result<Image> {
    params.validate()?;
    let (w, h) = (mask.width(), mask.height());
    let theta = params.illum_direction_deg.to_radians();
    let (c, s) = (theta.cos(), theta.sin());
    let location_term =
        (ctx.build_location[0] * c + ctx.build_location[1] * s) / PLATE_RADIUS_MM;
    let rel = (scan_angle(ctx.layer_index, params.scan_rotation_deg) - params.light_azimuth_deg)
        .to_radians();
    let reflect = params.anisotropy_strength * params.solid_base * rel.cos().powi(2);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
        params.rng_seed,
        hash_str(ctx.specimen_id),
        ctx.layer_index as u64,
    ]));
    let speckle = if params.speckle_sigma > 0.0 {
        Some(Normal::new(0.0, params.speckle_sigma).expect("sigma validated"))
    } else {
        None
    };

    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let v = (y as f64 + 0.5) / h as f64 - 0.5;
        for x in 0..w {
            let u = (x as f64 + 0.5) / w as f64 - 0.5;
            let ramp = params.illum_gradient * (u * c + v * s + location_term);
            let mut value = if mask.get(x, y) {
                params.solid_base + reflect
            } else {
                params.powder_base
            } + ramp;
            if let Some(n) = &speckle {
                value += n.sample(&mut rng);
            }
            data.push(quantize(value));
        }
    }
    Image::new(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_mask(n: usize) -> Mask {
        let c = n as f64 / 2.0;
        Mask::from_fn(n, n, |x, y| {
            let dx = x as f64 + 0.5 - c;
            let dy = y as f64 + 0.5 - c;
            dx * dx + dy * dy < (n as f64 / 4.0).powi(2)
        })
    }

    fn ctx(layer: usize) -> LayerContext<'static> {
        LayerContext {
            specimen_id: "A",
            layer_index: layer,
            build_location: [0.0, 0.0],
        }
    }

    #[test]
    fn scan_angles() {
        assert_eq!(scan_angle(1, 67.0), 0.0);
        assert_eq!(scan_angle(2, 67.0), 67.0);
        assert_eq!(scan_angle(7, 67.0), 42.0);
    }

    #[test]
    fn noiseless_render_has_two_levels() {
        let p = PhotometricParams {
            anisotropy_strength: 0.0,
            speckle_sigma: 0.0,
            illum_gradient: 0.0,
            ..Default::default()
        };
        let img = render_layer(&disk_mask(32), &p, &ctx(3)).unwrap();
        let mut levels: Vec<u8> = img.data().to_vec();
        levels.sort_unstable();
        levels.dedup();
        assert_eq!(levels, vec![90, 140]);
    }

    #[test]
    fn ramp_is_monotone_left_to_right() {
        let p = PhotometricParams {
            anisotropy_strength: 0.0,
            speckle_sigma: 0.0,
            illum_gradient: 60.0,
            illum_direction_deg: 0.0,
            ..Default::default()
        };
        let img = render_layer(&Mask::from_fn(40, 10, |_, _| false), &p, &ctx(1)).unwrap();
        let col_mean = |x: usize| (0..10).map(|y| img.get(x, y) as f64).sum::<f64>() / 10.0;
        for x in 1..40 {
            assert!(col_mean(x) >= col_mean(x - 1));
        }
        assert!(col_mean(39) > col_mean(0));
    }

    #[test]
    fn location_changes_global_mean() {
        let p = LocationPreset::A.params(1);
        let m = disk_mask(32);
        let a = render_layer(&m, &p, &ctx(5)).unwrap();
        let b = render_layer(
            &m,
            &p,
            &LayerContext {
                build_location: [60.0, 0.0],
                ..ctx(5)
            },
        )
        .unwrap();
        assert!((a.mean() - b.mean()).abs() > 1.0);
    }

    #[test]
    fn consecutive_layers_differ_in_foreground_mean() {
        let p = PhotometricParams {
            speckle_sigma: 0.0,
            ..Default::default()
        };
        let m = disk_mask(32);
        let fg_mean = |img: &Image| {
            let vals: Vec<f64> = (0..m.len())
                .filter(|&i| m.data()[i])
                .map(|i| img.data()[i] as f64)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let a = render_layer(&m, &p, &ctx(1)).unwrap();
        let b = render_layer(&m, &p, &ctx(2)).unwrap();
        assert!((fg_mean(&a) - fg_mean(&b)).abs() > 1.0);
    }

    #[test]
    fn deterministic_and_keyed_by_layer() {
        let p = LocationPreset::B.params(42);
        let m = disk_mask(24);
        let a = render_layer(&m, &p, &ctx(9)).unwrap();
        assert_eq!(a, render_layer(&m, &p, &ctx(9)).unwrap());
        assert_ne!(a, render_layer(&m, &p, &ctx(10)).unwrap());
    }

    #[test]
    fn extreme_parameters_stay_in_range() {
        let p = PhotometricParams {
            powder_base: 250.0,
            solid_base: 255.0,
            anisotropy_strength: 1.0,
            illum_gradient: 400.0,
            speckle_sigma: 80.0,
            ..Default::default()
        };
        // u8 output makes out-of-range impossible; quantize must not wrap.
        let img = render_layer(&disk_mask(16), &p, &ctx(4)).unwrap();
        assert!(img.data().iter().any(|&v| v == 255));
        assert_eq!(quantize(-3.2), 0);
        assert_eq!(quantize(1e9), 255);
        assert_eq!(quantize(2.5), 3);
    }

    #[test]
    fn rejects_bad_anisotropy() {
        let p = PhotometricParams {
            anisotropy_strength: 1.5,
            ..Default::default()
        };
        assert!(render_layer(&disk_mask(8), &p, &ctx(1)).is_err());
    }
}
