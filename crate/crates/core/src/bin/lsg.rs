//! `lsg`: dataset generation, training, calibration, evaluation and
//! reporting for the lattice segmentation benchmark.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lsg_core::experiment::{
    load_calibration, load_segmenters, load_timing, read_rows, run_experiment, stage_bench, stage_calibrate,
    stage_eval, stage_gen, stage_perturb, stage_report, stage_train, with_marker, ExperimentConfig, OutputLayout,
    SplitStrategy,
};
use lsg_core::Error;

#[derive(Parser)]
#[command(name = "lsg", version, about = "Lattice powder-bed segmentation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset.
    Gen(Common),
    /// Train U-Net and UNet-GNN on the training split.
    Train(Common),
    /// Grid-search the active-contour weight and kernel radius.
    CalibrateAc(Common),
    /// Score all methods on the clean test split.
    Eval(Common),
    /// Score all methods on every configured perturbation.
    PerturbSweep(Common),
    /// Time single-image inference per method.
    Bench(Common),
    /// Merge scores into the summary, CSV and SVG charts.
    Report(Common),
    /// Run every stage in order.
    Run(Common),
    /// Print the default config as JSON.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    split: Option<SplitStrategy>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(s) = self.split {
            cfg.split = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 2,
        Error::Numeric { .. } => 4,
        Error::Validation(_) | Error::Shape(_) | Error::Range { .. } | Error::Format { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 3,
        _ => 1,
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    let common = match &command {
        Command::DefaultConfig => {
            println!("{}", serde_json::to_string_pretty(&ExperimentConfig::default())?);
            return Ok(());
        }
        Command::Gen(c)
        | Command::Train(c)
        | Command::CalibrateAc(c)
        | Command::Eval(c)
        | Command::PerturbSweep(c)
        | Command::Bench(c)
        | Command::Report(c)
        | Command::Run(c) => c,
    };
    let cfg = common.resolve()?;
    let layout = OutputLayout::new(&cfg.out_dir);
    if let Command::Run(_) = command {
        let bundle = run_experiment(&cfg)?;
        for m in &bundle.summary.methods {
            println!("{:<15} clean accuracy {:.4}", m.method.as_str(), m.clean_mean);
        }
        println!("results in {}", bundle.layout.results().display());
        return Ok(());
    }
    with_marker(&layout, || {
        let ds = stage_gen(&cfg)?;
        match command {
            Command::Gen(_) => println!("{} layers in {}", ds.layers.len(), layout.dataset().display()),
            Command::Train(_) => {
                stage_train(&cfg, &ds)?;
                println!("models in {}", layout.models().display());
            }
            Command::CalibrateAc(_) => {
                let cal = stage_calibrate(&cfg, &ds)?;
                println!(
                    "best w={} r_kernel={} mean accuracy {:.4} over {} grid points",
                    cal.best.w, cal.best.r_kernel, cal.best.mean_accuracy, cal.evaluations
                );
            }
            Command::Eval(_) => {
                let rows = stage_eval(&cfg, &ds, &load_segmenters(&cfg)?)?;
                println!("{} rows in {}", rows.len(), layout.clean_scores().display());
            }
            Command::PerturbSweep(_) => {
                let rows = stage_perturb(&cfg, &ds, &load_segmenters(&cfg)?)?;
                println!("{} rows in {}", rows.len(), layout.perturbed_scores().display());
            }
            Command::Bench(_) => {
                for t in stage_bench(&cfg, &ds, &load_segmenters(&cfg)?)? {
                    println!("{:<15} mean {:.4} s/image", t.method.as_str(), t.stats.mean_s);
                }
            }
            Command::Report(_) => {
                let mut rows = read_rows(&layout.clean_scores())?;
                if layout.perturbed_scores().exists() {
                    rows.extend(read_rows(&layout.perturbed_scores())?);
                }
                let timing = if layout.timing().exists() { load_timing(&layout)? } else { Vec::new() };
                let summary = stage_report(&cfg, &ds, &rows, &load_calibration(&layout)?, &timing)?;
                println!("{} methods summarized in {}", summary.methods.len(), layout.summary().display());
            }
            Command::Run(_) | Command::DefaultConfig => unreachable!("handled above"),
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
