use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{sha256_hex, ExperimentConfig};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::lattice::{region_label, slice_specimen, RegionLabel};
use crate::render::{render_layer, scan_angle, LayerContext, PhotometricParams};

/// One rendered layer as listed in `manifest.json`. Paths are relative to
/// the dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub specimen_id: String,
    pub layer_index: usize,
    pub z_mm: f64,
    pub scan_angle_deg: f64,
    pub region: RegionLabel,
    pub build_location: [f64; 2],
    pub image: PathBuf,
    pub mask: PathBuf,
    pub nominal: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenRecord {
    pub specimen_id: String,
    pub layer_count: usize,
    pub layers_per_cell: usize,
    pub photometric: PhotometricParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub specimens: Vec<SpecimenRecord>,
    pub layers: Vec<LayerRecord>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    /// Hex SHA-256 of the serialized manifest.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_json()?))
    }

    pub fn layer_count(&self, specimen_id: &str) -> usize {
        self.specimens
            .iter()
            .find(|s| s.specimen_id == specimen_id)
            .map_or(0, |s| s.layer_count)
    }

    pub fn position(&self, specimen_id: &str, layer_index: usize) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| l.specimen_id == specimen_id && l.layer_index == layer_index)
    }
}

/// Pixels of one layer held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerData {
    pub image: Image,
    /// As-built ground truth.
    pub truth: Mask,
    /// Undeviated slice used to initialize the active contour.
    pub nominal: Mask,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    /// Parallel to `manifest.layers`.
    pub layers: Vec<LayerData>,
}

impl Dataset {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Dataset> {
        let mut specimens = Vec::new();
        let mut records = Vec::new();
        let mut layers = Vec::new();
        for entry in &cfg.specimens {
            let truth_spec = cfg.truth_spec(entry);
            let nominal_spec = cfg.nominal_spec(entry);
            let params = cfg.photometric(entry);
            let id = &entry.spec.specimen_id;
            let n_layers = entry.spec.layer_count();
            for n in 1..=n_layers {
                let truth = slice_specimen(&truth_spec, n)?;
                let nominal = slice_specimen(&nominal_spec, n)?;
                let ctx = LayerContext {
                    specimen_id: id,
                    layer_index: n,
                    build_location: entry.spec.build_location,
                };
                let image = render_layer(&truth, &params, &ctx)?;
                let stem = format!("{id}/{n:04}");
                records.push(LayerRecord {
                    specimen_id: id.clone(),
                    layer_index: n,
                    z_mm: entry.spec.z_mm(n),
                    scan_angle_deg: scan_angle(n, params.scan_rotation_deg),
                    region: region_label(n, &entry.spec)?,
                    build_location: entry.spec.build_location,
                    image: format!("{stem}_image.pgm").into(),
                    mask: format!("{stem}_mask.pgm").into(),
                    nominal: format!("{stem}_nominal.pgm").into(),
                });
                layers.push(LayerData { image, truth, nominal });
            }
            specimens.push(SpecimenRecord {
                specimen_id: id.clone(),
                layer_count: n_layers,
                layers_per_cell: entry.spec.layers_per_cell,
                photometric: params,
            });
        }
        Ok(Dataset {
            manifest: Manifest {
                config_hash: cfg.config_hash()?,
                specimens,
                layers: records,
            },
            layers,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for (rec, data) in self.manifest.layers.iter().zip(&self.layers) {
            if let Some(parent) = dir.join(&rec.image).parent() {
                std::fs::create_dir_all(parent)?;
            }
            data.image.save(&dir.join(&rec.image))?;
            data.truth.save(&dir.join(&rec.mask))?;
            data.nominal.save(&dir.join(&rec.nominal))?;
        }
        std::fs::write(dir.join("manifest.json"), self.manifest.to_json()?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let path = dir.join("manifest.json");
        let bytes = std::fs::read(&path)?;
        let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let layers = manifest
            .layers
            .iter()
            .map(|rec| {
                Ok(LayerData {
                    image: Image::load(&dir.join(&rec.image))?,
                    truth: Mask::load(&dir.join(&rec.mask))?,
                    nominal: Mask::load(&dir.join(&rec.nominal))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { manifest, layers })
    }

    /// Loads `dir` when its manifest was produced by this config, otherwise
    /// generates and writes a fresh dataset there.
    pub fn load_or_generate(cfg: &ExperimentConfig, dir: &Path) -> Result<Dataset> {
        if dir.join("manifest.json").exists() {
            let ds = Dataset::load(dir)?;
            if ds.manifest.config_hash == cfg.config_hash()? {
                return Ok(ds);
            }
        }
        let ds = Dataset::generate(cfg)?;
        ds.save(dir)?;
        Ok(ds)
    }

    pub fn get(&self, specimen_id: &str, layer_index: usize) -> Option<(&LayerRecord, &LayerData)> {
        self.manifest
            .position(specimen_id, layer_index)
            .map(|i| (&self.manifest.layers[i], &self.layers[i]))
    }
}
