use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contour::{AcParams, CalibrationGrid};
use crate::error::{Error, Result};
use crate::lattice::{Deviation, SpecimenSpec};
use crate::perturb::PerturbSpec;
use crate::render::{LocationPreset, PhotometricParams};
use crate::segnet::{TrainConfig, UNetConfig};
use crate::seed::{derive_seed, hash_str};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitStrategy {
    #[serde(rename = "separate_A")]
    SeparateA,
    #[serde(rename = "separate_B")]
    SeparateB,
    #[serde(rename = "joint")]
    Joint,
}

impl SplitStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitStrategy::SeparateA => "separate_A",
            SplitStrategy::SeparateB => "separate_B",
            SplitStrategy::Joint => "joint",
        }
    }
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separate_A" | "separate_a" => Ok(SplitStrategy::SeparateA),
            "separate_B" | "separate_b" => Ok(SplitStrategy::SeparateB),
            "joint" => Ok(SplitStrategy::Joint),
            other => Err(Error::Config(format!(
                "unknown split {other:?}; expected separate_A, separate_B or joint"
            ))),
        }
    }
}

/// One specimen of the dataset and the illumination it is rendered under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenEntry {
    pub spec: SpecimenSpec,
    pub preset: LocationPreset,
    /// Explicit rendering parameters; the preset's defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photometric: Option<PhotometricParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub specimens: Vec<SpecimenEntry>,
    /// As-built deviation of the ground truth from the nominal slices; its
    /// seed is replaced by one derived from `seed` and the specimen id.
    pub as_built: Option<Deviation>,
    pub split: SplitStrategy,
    /// Backbone shared by both networks; the graph fields configure the
    /// UNet-GNN.
    pub model: UNetConfig,
    pub train: TrainConfig,
    pub ac: AcParams,
    pub ac_grid: CalibrationGrid,
    /// Training layers used for the contour grid search, evenly spaced.
    pub calib_layers: usize,
    pub perturbations: Vec<PerturbSpec>,
    /// Clean test images timed per method.
    pub bench_images: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let specimen = |id: &str, preset: LocationPreset| SpecimenEntry {
            spec: SpecimenSpec {
                specimen_id: id.to_string(),
                layers_per_cell: 50,
                build_location: preset.build_location(),
                ..SpecimenSpec::default()
            },
            preset,
            photometric: None,
        };
        ExperimentConfig {
            name: "desk".into(),
            seed: 0,
            specimens: vec![specimen("A", LocationPreset::A), specimen("B", LocationPreset::B)],
            as_built: Some(Deviation {
                node_shift_mm: 0.15,
                radius_jitter: 0.15,
                seed: 0,
            }),
            split: SplitStrategy::SeparateA,
            model: UNetConfig::default(),
            train: TrainConfig::default(),
            ac: AcParams::default(),
            ac_grid: CalibrationGrid::default(),
            calib_layers: 4,
            perturbations: PerturbSpec::table(0),
            bench_images: 20,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        if self.specimens.is_empty() {
            return Err(Error::Config("no specimens configured".into()));
        }
        let lpc = self.specimens[0].spec.layers_per_cell;
        let mut ids = std::collections::HashSet::new();
        for s in &self.specimens {
            s.spec.validate().map_err(wrap)?;
            if let Some(p) = &s.photometric {
                p.validate().map_err(wrap)?;
            }
            if s.spec.layers_per_cell != lpc {
                return Err(Error::Config(
                    "all specimens must share layers_per_cell so split boundaries align".into(),
                ));
            }
            if !ids.insert(s.spec.specimen_id.clone()) {
                return Err(Error::Config(format!("duplicate specimen id {:?}", s.spec.specimen_id)));
            }
            if s.spec.width_px() != self.model.input_width || s.spec.height_px() != self.model.input_height {
                return Err(Error::Config(format!(
                    "specimen {} renders {}x{} but the model expects {}x{}",
                    s.spec.specimen_id,
                    s.spec.width_px(),
                    s.spec.height_px(),
                    self.model.input_width,
                    self.model.input_height
                )));
            }
        }
        let needs = match self.split {
            SplitStrategy::SeparateA => vec!["A"],
            SplitStrategy::SeparateB => vec!["B"],
            SplitStrategy::Joint => vec![],
        };
        for id in needs {
            if !ids.contains(id) {
                return Err(Error::Config(format!("split {} needs specimen {id}", self.split)));
            }
        }
        self.model.validate().map_err(wrap)?;
        self.unet_gnn_config().validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.ac.validate().map_err(wrap)?;
        self.ac_grid.w_values().map_err(wrap)?;
        self.ac_grid.r_values().map_err(wrap)?;
        for p in &self.perturbations {
            p.validate().map_err(wrap)?;
        }
        if self.calib_layers == 0 || self.bench_images == 0 {
            return Err(Error::Config("calib_layers and bench_images must be >= 1".into()));
        }
        Ok(())
    }

    pub fn layers_per_cell(&self) -> usize {
        self.specimens[0].spec.layers_per_cell
    }

    pub fn unet_config(&self) -> UNetConfig {
        UNetConfig {
            gnn_enabled: false,
            ..self.model.clone()
        }
    }

    pub fn unet_gnn_config(&self) -> UNetConfig {
        UNetConfig {
            gnn_enabled: true,
            ..self.model.clone()
        }
    }

    /// Sub-seed for one named consumer of randomness.
    pub fn seed_for(&self, purpose: &str) -> u64 {
        derive_seed(&[self.seed, hash_str(purpose)])
    }

    /// Ground-truth geometry of a specimen (nominal plus as-built deviation).
    pub fn truth_spec(&self, entry: &SpecimenEntry) -> SpecimenSpec {
        let mut spec = entry.spec.clone();
        if let Some(dev) = self.as_built {
            spec.deviation = Some(Deviation {
                seed: self.seed_for(&format!("as_built/{}", spec.specimen_id)),
                ..dev
            });
        }
        spec
    }

    pub fn nominal_spec(&self, entry: &SpecimenEntry) -> SpecimenSpec {
        SpecimenSpec {
            deviation: None,
            ..entry.spec.clone()
        }
    }

    pub fn photometric(&self, entry: &SpecimenEntry) -> PhotometricParams {
        let seed = self.seed_for("render");
        match &entry.photometric {
            Some(p) => PhotometricParams { rng_seed: seed, ..*p },
            None => entry.preset.params(seed),
        }
    }

    /// Hex SHA-256 of the canonical JSON of this config without `out_dir`.
    pub fn config_hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out_dir");
        }
        Ok(sha256_hex(serde_json::to_string(&v)?.as_bytes())[..16].to_string())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
