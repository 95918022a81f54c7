//! Experiment driver: dataset generation, training splits, the staged
//! pipeline and its report.

mod config;
mod dataset;
mod pipeline;
mod report;
mod split;

pub use config::{sha256_hex, ExperimentConfig, SpecimenEntry, SplitStrategy};
pub use dataset::{Dataset, LayerData, LayerRecord, Manifest, SpecimenRecord};
pub use pipeline::{
    calibration_layers, load_calibration, load_segmenters, load_timing, read_rows, run_experiment, stage_bench,
    stage_calibrate, stage_eval, stage_gen, stage_perturb, stage_report, stage_train, with_marker, write_rows,
    Method, MethodTiming, OutputLayout, ResultBundle, ScoreRow, Segmenters,
};
pub use report::{box_chart, line_chart, summarize, MethodSummary, PerturbSummary, Summary, BOXPLOT_CONVENTION, CI_METHOD};
pub use split::{make_splits, LayerRange, SplitPlan};
