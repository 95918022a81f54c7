use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::Dataset;
use super::report::{write_report, Summary};
use super::split::{make_splits, SplitPlan};
use crate::contour::{calibrate, evolve, init_levelset, read_score_table, AcParams, Calibration, CalibrationPair, GridScore};
use crate::error::{Error, Result};
use crate::eval::{accuracy, confusion, time_inference, TimingStats};
use crate::image::{Image, Mask};
use crate::lattice::RegionLabel;
use crate::perturb::PerturbSpec;
use crate::segnet::{train, ModelCard, SegNet, TrainConfig};
use crate::seed::{derive_seed, hash_str};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "unet")]
    UNet,
    #[serde(rename = "unet_gnn")]
    UNetGnn,
    #[serde(rename = "active_contour")]
    ActiveContour,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::UNet, Method::UNetGnn, Method::ActiveContour];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::UNet => "unet",
            Method::UNetGnn => "unet_gnn",
            Method::ActiveContour => "active_contour",
        }
    }
}

/// Directory layout of one experiment run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputLayout { root: root.into() }
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn results(&self) -> PathBuf {
        self.root.join("results")
    }
    pub fn calibration(&self) -> PathBuf {
        self.root.join("calibration")
    }
    pub fn checkpoint(&self, method: Method) -> PathBuf {
        self.models().join(format!("{}.lsg", method.as_str()))
    }
    pub fn model_card(&self, method: Method) -> PathBuf {
        self.models().join(format!("{}.card.json", method.as_str()))
    }
    pub fn calibration_table(&self) -> PathBuf {
        self.calibration().join("ac_scores.csv")
    }
    pub fn calibration_best(&self) -> PathBuf {
        self.calibration().join("ac_best.json")
    }
    pub fn clean_scores(&self) -> PathBuf {
        self.results().join("scores_clean.csv")
    }
    pub fn perturbed_scores(&self) -> PathBuf {
        self.results().join("scores_perturbed.csv")
    }
    pub fn scores(&self) -> PathBuf {
        self.results().join("scores.csv")
    }
    pub fn timing(&self) -> PathBuf {
        self.results().join("timing.json")
    }
    pub fn timing_samples(&self) -> PathBuf {
        self.results().join("timing_samples.csv")
    }
    pub fn summary(&self) -> PathBuf {
        self.results().join("summary.json")
    }
    pub fn config_echo(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn incomplete_marker(&self) -> PathBuf {
        self.root.join("INCOMPLETE")
    }
}

/// One per-layer result. `perturbation` is `"none"` and `level` `"clean"`
/// for unperturbed inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub specimen: String,
    pub layer: usize,
    pub region: RegionLabel,
    pub method: Method,
    pub split: String,
    pub perturbation: String,
    pub level: String,
    pub value: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub accuracy: f64,
    pub seconds: f64,
}

impl ScoreRow {
    pub fn is_clean(&self) -> bool {
        self.perturbation == "none"
    }
}

pub fn write_rows(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut wtr = csv::Writer::from_path(path)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: Method,
    pub stats: TimingStats,
}

/// The three trained or calibrated segmenters.
#[derive(Debug, Clone)]
pub struct Segmenters {
    pub unet: SegNet,
    pub unet_gnn: SegNet,
    pub ac: AcParams,
}

impl Segmenters {
    /// Segments one image; the contour starts from the nominal slice.
    pub fn segment(&self, method: Method, image: &Image, nominal: &Mask) -> Result<Mask> {
        match method {
            Method::UNet => self.unet.predict(image),
            Method::UNetGnn => self.unet_gnn.predict(image),
            Method::ActiveContour => evolve(image, &init_levelset(nominal)?, &self.ac),
        }
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub layout: OutputLayout,
    pub summary: Summary,
    pub rows: Vec<ScoreRow>,
    pub calibration: Calibration,
    pub timing: Vec<MethodTiming>,
}

fn layout_of(cfg: &ExperimentConfig) -> OutputLayout {
    OutputLayout::new(&cfg.out_dir)
}

fn staged<T>(stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(stage))
}

/// Runs `f` with an INCOMPLETE marker in the output directory that is only
/// removed on success.
pub fn with_marker<T>(layout: &OutputLayout, f: impl FnOnce() -> Result<T>) -> Result<T> {
    std::fs::create_dir_all(&layout.root)?;
    std::fs::write(layout.incomplete_marker(), "running\n")?;
    match f() {
        Ok(v) => {
            std::fs::remove_file(layout.incomplete_marker())?;
            Ok(v)
        }
        Err(e) => {
            let _ = std::fs::write(layout.incomplete_marker(), format!("{e}\n"));
            Err(e)
        }
    }
}

pub fn stage_gen(cfg: &ExperimentConfig) -> Result<Dataset> {
    staged("gen", || {
        let layout = layout_of(cfg);
        cfg.save(&layout.config_echo())?;
        Dataset::load_or_generate(cfg, &layout.dataset())
    })
}

fn plan_of(cfg: &ExperimentConfig, ds: &Dataset) -> Result<SplitPlan> {
    make_splits(&ds.manifest, cfg.split, cfg.layers_per_cell())
}

fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(&[cfg.seed, cfg.train.seed]),
        ..cfg.train.clone()
    }
}

/// Trains both networks from the same backbone initialization.
pub fn stage_train(cfg: &ExperimentConfig, ds: &Dataset) -> Result<(SegNet, SegNet)> {
    staged("train", || {
        let layout = layout_of(cfg);
        let plan = plan_of(cfg, ds)?;
        let pairs: Vec<(&Image, &Mask)> = SplitPlan::expand(&plan.train)
            .iter()
            .map(|(id, n)| {
                ds.get(id, *n)
                    .map(|(_, d)| (&d.image, &d.truth))
                    .ok_or_else(|| Error::validation(format!("layer {id}:{n} missing from dataset")))
            })
            .collect::<Result<_>>()?;
        let tcfg = train_config(cfg);
        let init_seed = cfg.seed_for("init");
        let manifest_hash = ds.manifest.hash()?;
        let mut out = Vec::new();
        for (method, mcfg) in [(Method::UNet, cfg.unet_config()), (Method::UNetGnn, cfg.unet_gnn_config())] {
            let mut model = SegNet::new(mcfg, init_seed)?;
            let (history, adam) = train(&mut model, &pairs, &tcfg)?;
            model.save(&layout.checkpoint(method), Some(&adam))?;
            ModelCard::new(&model, init_seed, &manifest_hash, &tcfg, history).save(&layout.model_card(method))?;
            out.push(model);
        }
        let gnn = out.pop().expect("two models");
        let unet = out.pop().expect("two models");
        Ok((unet, gnn))
    })
}

/// Evenly spaced subset of the training layers, centred in equal strata.
pub fn calibration_layers(plan: &SplitPlan, count: usize) -> Vec<(String, usize)> {
    let all = SplitPlan::expand(&plan.train);
    let count = count.min(all.len());
    (0..count)
        .map(|i| all[(2 * i + 1) * all.len() / (2 * count)].clone())
        .collect()
}

pub fn stage_calibrate(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Calibration> {
    staged("calibrate-ac", || {
        let layout = layout_of(cfg);
        let plan = plan_of(cfg, ds)?;
        let chosen = calibration_layers(&plan, cfg.calib_layers);
        let pairs: Vec<CalibrationPair<'_>> = chosen
            .iter()
            .map(|(id, n)| {
                let (_, d) = ds
                    .get(id, *n)
                    .ok_or_else(|| Error::validation(format!("layer {id}:{n} missing from dataset")))?;
                Ok(CalibrationPair {
                    image: &d.image,
                    nominal: &d.nominal,
                    truth: &d.truth,
                })
            })
            .collect::<Result<_>>()?;
        let cal = calibrate(&pairs, &cfg.ac_grid, &cfg.ac)?;
        cal.write_csv(&layout.calibration_table())?;
        std::fs::write(layout.calibration_best(), serde_json::to_vec_pretty(&cal.best)?)?;
        Ok(cal)
    })
}

pub fn load_calibration(layout: &OutputLayout) -> Result<Calibration> {
    let table = read_score_table(&layout.calibration_table())?;
    let best: GridScore = serde_json::from_slice(&std::fs::read(layout.calibration_best())?)?;
    Ok(Calibration {
        best,
        evaluations: table.len(),
        table,
    })
}

pub fn load_segmenters(cfg: &ExperimentConfig) -> Result<Segmenters> {
    let layout = layout_of(cfg);
    let (unet, _) = SegNet::load(&layout.checkpoint(Method::UNet), cfg.unet_config())?;
    let (unet_gnn, _) = SegNet::load(&layout.checkpoint(Method::UNetGnn), cfg.unet_gnn_config())?;
    let cal = load_calibration(&layout)?;
    Ok(Segmenters {
        unet,
        unet_gnn,
        ac: cal.params(&cfg.ac),
    })
}

fn perturbation_salt(cfg: &ExperimentConfig, specimen: &str, layer: usize) -> u64 {
    derive_seed(&[cfg.seed, hash_str(specimen), layer as u64])
}

fn score_test_set(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    segs: &Segmenters,
    perturbation: Option<&PerturbSpec>,
) -> Result<Vec<ScoreRow>> {
    let plan = plan_of(cfg, ds)?;
    let hash = cfg.config_hash()?;
    let mut rows = Vec::new();
    for (id, n) in SplitPlan::expand(&plan.test) {
        let (rec, d) = ds
            .get(&id, n)
            .ok_or_else(|| Error::validation(format!("layer {id}:{n} missing from dataset")))?;
        let image = match perturbation {
            Some(p) => p.apply(&d.image, perturbation_salt(cfg, &id, n))?,
            None => d.image.clone(),
        };
        for method in Method::ALL {
            let start = Instant::now();
            let mask = segs.segment(method, &image, &d.nominal)?;
            let seconds = start.elapsed().as_secs_f64();
            rows.push(ScoreRow {
                specimen: id.clone(),
                layer: n,
                region: rec.region,
                method,
                split: cfg.split.to_string(),
                perturbation: perturbation.map_or("none", |p| p.kind.as_str()).to_string(),
                level: perturbation.map_or("clean", |p| p.level_name()).to_string(),
                value: perturbation.map(|p| p.value),
                seed: cfg.seed,
                config_hash: hash.clone(),
                accuracy: accuracy(&confusion(&mask, &d.truth)?)?,
                seconds,
            });
        }
    }
    Ok(rows)
}

pub fn stage_eval(cfg: &ExperimentConfig, ds: &Dataset, segs: &Segmenters) -> Result<Vec<ScoreRow>> {
    staged("eval", || {
        let rows = score_test_set(cfg, ds, segs, None)?;
        write_rows(&layout_of(cfg).clean_scores(), &rows)?;
        Ok(rows)
    })
}

pub fn stage_perturb(cfg: &ExperimentConfig, ds: &Dataset, segs: &Segmenters) -> Result<Vec<ScoreRow>> {
    staged("perturb-sweep", || {
        let mut rows = Vec::new();
        for p in &cfg.perturbations {
            rows.extend(score_test_set(cfg, ds, segs, Some(p))?);
        }
        write_rows(&layout_of(cfg).perturbed_scores(), &rows)?;
        Ok(rows)
    })
}

/// Times single-image inference of every method on the first clean test
/// layers, one method at a time on the calling thread.
pub fn stage_bench(cfg: &ExperimentConfig, ds: &Dataset, segs: &Segmenters) -> Result<Vec<MethodTiming>> {
    staged("bench", || {
        let layout = layout_of(cfg);
        let plan = plan_of(cfg, ds)?;
        let chosen: Vec<_> = SplitPlan::expand(&plan.test)
            .into_iter()
            .take(cfg.bench_images)
            .filter_map(|(id, n)| ds.get(&id, n).map(|(_, d)| d))
            .collect();
        let images: Vec<Image> = chosen.iter().map(|d| d.image.clone()).collect();
        let mut out = Vec::new();
        for method in Method::ALL {
            let mut next = chosen.iter();
            let stats = time_inference(
                |img| {
                    let d = next.next().expect("one nominal per image");
                    segs.segment(method, img, &d.nominal)
                },
                &images,
            )?;
            out.push(MethodTiming { method, stats });
        }
        std::fs::create_dir_all(layout.results())?;
        std::fs::write(layout.timing(), serde_json::to_vec_pretty(&out)?)?;
        let mut wtr = csv::Writer::from_path(layout.timing_samples())?;
        wtr.write_record(["method", "image", "seconds"])?;
        for t in &out {
            for (i, s) in t.stats.samples_s.iter().enumerate() {
                wtr.write_record([t.method.as_str(), &i.to_string(), &s.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(out)
    })
}

pub fn load_timing(layout: &OutputLayout) -> Result<Vec<MethodTiming>> {
    Ok(serde_json::from_slice(&std::fs::read(layout.timing())?)?)
}

pub fn stage_report(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    rows: &[ScoreRow],
    calibration: &Calibration,
    timing: &[MethodTiming],
) -> Result<Summary> {
    staged("report", || {
        let layout = layout_of(cfg);
        write_rows(&layout.scores(), rows)?;
        write_report(cfg, &layout, &ds.manifest, rows, calibration, timing)
    })
}

/// Generates (or loads) the dataset, trains both networks, calibrates the
/// contour, evaluates clean and perturbed test data, times inference and
/// writes the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultBundle> {
    staged("config", || cfg.validate())?;
    let layout = layout_of(cfg);
    with_marker(&layout, || {
        let ds = stage_gen(cfg)?;
        let (unet, unet_gnn) = stage_train(cfg, &ds)?;
        let calibration = stage_calibrate(cfg, &ds)?;
        let segs = Segmenters {
            unet,
            unet_gnn,
            ac: calibration.params(&cfg.ac),
        };
        let mut rows = stage_eval(cfg, &ds, &segs)?;
        rows.extend(stage_perturb(cfg, &ds, &segs)?);
        let timing = stage_bench(cfg, &ds, &segs)?;
        let summary = stage_report(cfg, &ds, &rows, &calibration, &timing)?;
        Ok(ResultBundle {
            layout: layout.clone(),
            summary,
            rows,
            calibration,
            timing,
        })
    })
}
