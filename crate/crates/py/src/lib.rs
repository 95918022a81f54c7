//! Python module `lsg`: lattice slicing, rendering, perturbations, metrics
//! and the three segmenters.
//!
//! Images cross the boundary as `bytes` (row-major, one byte per pixel);
//! masks as `bytes` of 0/1.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use lsg_core::contour::{evolve, init_levelset, AcParams};
use lsg_core::eval;
use lsg_core::lattice::{region_label, slice_specimen};
use lsg_core::perturb::{self, PerturbKind, PerturbSpec, Severity};
use lsg_core::render::{render_layer, LayerContext, LocationPreset};
use lsg_core::segnet::{self, TrainConfig, UNetConfig};
use lsg_core::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Validation(_) | Error::Shape(_) | Error::Config(_) => PyValueError::new_err(err.to_string()),
        Error::Range { .. } => PyIndexError::new_err(err.to_string()),
        Error::Io(_) | Error::Format { .. } => PyIOError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

/// 8-bit grayscale image.
#[pyclass(name = "Image", module = "lsg")]
#[derive(Clone)]
pub struct PyImage(lsg_core::Image);

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, data: Vec<u8>) -> PyResult<Self> {
        lsg_core::Image::new(width, height, data).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, value: u8) -> Self {
        Self(lsg_core::Image::filled(width, height, value))
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.data())
    }

    fn get(&self, x: usize, y: usize) -> PyResult<u8> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyIndexError::new_err(format!("pixel ({x}, {y}) outside image")));
        }
        Ok(self.0.get(x, y))
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

/// Binary foreground mask.
#[pyclass(name = "Mask", module = "lsg")]
#[derive(Clone)]
pub struct PyMask(lsg_core::Mask);

#[pymethods]
impl PyMask {
    /// `data` holds one byte per pixel; nonzero is foreground.
    #[new]
    fn new(width: usize, height: usize, data: Vec<u8>) -> PyResult<Self> {
        lsg_core::Mask::new(width, height, data.into_iter().map(|v| v != 0).collect())
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let bytes: Vec<u8> = self.0.data().iter().map(|&b| b as u8).collect();
        PyBytes::new(py, &bytes)
    }

    fn foreground_count(&self) -> usize {
        self.0.foreground_count()
    }

    fn complement(&self) -> Self {
        Self(self.0.complement())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!(
            "Mask({}x{}, foreground={})",
            self.0.width(),
            self.0.height(),
            self.0.foreground_count()
        )
    }
}

/// Periodic rhombic lattice specimen.
#[pyclass(name = "SpecimenSpec", module = "lsg")]
#[derive(Clone)]
pub struct PySpecimenSpec(lsg_core::lattice::SpecimenSpec);

#[pymethods]
impl PySpecimenSpec {
    #[new]
    #[pyo3(signature = (specimen_id="A", cells_x=2, cells_y=2, cells_z=4, layers_per_cell=200, pixels_per_mm=6.4))]
    fn new(
        specimen_id: &str,
        cells_x: usize,
        cells_y: usize,
        cells_z: usize,
        layers_per_cell: usize,
        pixels_per_mm: f64,
    ) -> PyResult<Self> {
        let spec = lsg_core::lattice::SpecimenSpec {
            specimen_id: specimen_id.to_string(),
            cells_x,
            cells_y,
            cells_z,
            layers_per_cell,
            pixels_per_mm,
            ..Default::default()
        };
        spec.validate().map_err(to_py)?;
        Ok(Self(spec))
    }

    #[getter]
    fn layer_count(&self) -> usize {
        self.0.layer_count()
    }

    #[getter]
    fn width_px(&self) -> usize {
        self.0.width_px()
    }

    #[getter]
    fn height_px(&self) -> usize {
        self.0.height_px()
    }

    /// Nominal mask of a 1-based layer.
    fn slice(&self, layer_index: usize) -> PyResult<PyMask> {
        slice_specimen(&self.0, layer_index).map(PyMask).map_err(to_py)
    }

    /// "node", "strut" or "other".
    fn region(&self, layer_index: usize) -> PyResult<&'static str> {
        region_label(layer_index, &self.0).map(|r| r.as_str()).map_err(to_py)
    }
}

fn parse_preset(name: &str) -> PyResult<LocationPreset> {
    match name {
        "A" => Ok(LocationPreset::A),
        "B" => Ok(LocationPreset::B),
        _ => Err(PyValueError::new_err(format!("unknown preset {name:?}, expected \"A\" or \"B\""))),
    }
}

/// Synthetic powder-bed image of a mask under a location preset.
#[pyfunction]
#[pyo3(signature = (mask, preset="A", seed=0, specimen_id="A", layer_index=1))]
fn render(mask: &PyMask, preset: &str, seed: u64, specimen_id: &str, layer_index: usize) -> PyResult<PyImage> {
    let preset = parse_preset(preset)?;
    let ctx = LayerContext {
        specimen_id,
        layer_index,
        build_location: preset.build_location(),
    };
    render_layer(&mask.0, &preset.params(seed), &ctx).map(PyImage).map_err(to_py)
}

#[pyfunction]
fn gamma(image: &PyImage, g: f64) -> PyResult<PyImage> {
    perturb::gamma(&image.0, g).map(PyImage).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (image, sigma, seed=0))]
fn gaussian_noise(image: &PyImage, sigma: f64, seed: u64) -> PyResult<PyImage> {
    perturb::gaussian_noise(&image.0, sigma, seed).map(PyImage).map_err(to_py)
}

#[pyfunction]
fn pixelate(image: &PyImage, scale: f64) -> PyResult<PyImage> {
    perturb::pixelate(&image.0, scale).map(PyImage).map_err(to_py)
}

/// Applies a preset perturbation: `kind` in gamma / gaussian_noise /
/// pixelate, `level` in low / mid / high.
#[pyfunction]
#[pyo3(signature = (image, kind, level, seed=0, salt=0))]
fn perturb_preset(image: &PyImage, kind: &str, level: &str, seed: u64, salt: u64) -> PyResult<PyImage> {
    let kind = PerturbKind::ALL
        .into_iter()
        .find(|k| k.as_str() == kind)
        .ok_or_else(|| PyValueError::new_err(format!("unknown perturbation {kind:?}")))?;
    let level = Severity::ALL
        .into_iter()
        .find(|s| s.as_str() == level)
        .ok_or_else(|| PyValueError::new_err(format!("unknown level {level:?}")))?;
    PerturbSpec::preset(kind, level, seed).apply(&image.0, salt).map(PyImage).map_err(to_py)
}

/// `(tp, tn, fp, fn)` of a prediction against ground truth.
#[pyfunction]
fn confusion(pred: &PyMask, truth: &PyMask) -> PyResult<(u64, u64, u64, u64)> {
    let c = eval::confusion(&pred.0, &truth.0).map_err(to_py)?;
    Ok((c.tp, c.tn, c.fp, c.fn_))
}

#[pyfunction]
fn accuracy(pred: &PyMask, truth: &PyMask) -> PyResult<f64> {
    eval::confusion(&pred.0, &truth.0).and_then(|c| eval::accuracy(&c)).map_err(to_py)
}

/// Lower and upper bound of the normal-approximation 95% interval.
#[pyfunction]
fn ci95(values: Vec<f64>) -> PyResult<(f64, f64)> {
    eval::ci95(&values).map_err(to_py)
}

/// Directed k-NN adjacency of a `channels × height × width` feature map,
/// one neighbour list per pixel in row-major order.
#[pyfunction]
fn knn_graph(values: Vec<f32>, channels: usize, height: usize, width: usize, k: usize) -> PyResult<Vec<Vec<usize>>> {
    let map = segnet::FeatureMap::new(channels, height, width, values).map_err(to_py)?;
    let graph = segnet::build_knn_graph(&map, k).map_err(to_py)?;
    Ok((0..map.node_count()).map(|i| graph.neighbors(i).to_vec()).collect())
}

/// Hybrid region/edge level-set segmentation started from a nominal mask.
#[pyfunction]
#[pyo3(signature = (image, nominal, w=0.5, r_kernel=5, max_iters=500))]
fn active_contour(image: &PyImage, nominal: &PyMask, w: f64, r_kernel: usize, max_iters: usize) -> PyResult<PyMask> {
    let params = AcParams {
        w,
        r_kernel,
        max_iters,
        ..AcParams::default()
    };
    let init = init_levelset(&nominal.0).map_err(to_py)?;
    evolve(&image.0, &init, &params).map(PyMask).map_err(to_py)
}

/// U-Net, or UNet-GNN when `gnn` is true.
#[pyclass(name = "SegNet", module = "lsg")]
pub struct PySegNet(segnet::SegNet);

#[pymethods]
impl PySegNet {
    #[new]
    #[pyo3(signature = (gnn=true, size=128, levels=3, base_channels=8, k=8, gnn_layers=2, seed=0))]
    fn new(gnn: bool, size: usize, levels: usize, base_channels: usize, k: usize, gnn_layers: usize, seed: u64) -> PyResult<Self> {
        let config = UNetConfig {
            levels,
            base_channels,
            input_height: size,
            input_width: size,
            gnn_enabled: gnn,
            gnn_layers,
            k_neighbors: k,
            ..UNetConfig::default()
        };
        segnet::SegNet::new(config, seed).map(Self).map_err(to_py)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.0.parameter_count()
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.0.config.method_name()
    }

    /// Trains with BCE and Adam; returns the training loss of each epoch.
    #[pyo3(signature = (images, masks, epochs=10, batch_size=4, learning_rate=1e-3, seed=0))]
    fn train(
        &mut self,
        py: Python<'_>,
        images: Vec<PyImage>,
        masks: Vec<PyMask>,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        if images.len() != masks.len() {
            return Err(PyValueError::new_err(format!(
                "{} images but {} masks",
                images.len(),
                masks.len()
            )));
        }
        let cfg = TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            seed,
            ..TrainConfig::default()
        };
        let model = &mut self.0;
        let history = py.allow_threads(|| {
            let pairs: Vec<_> = images.iter().zip(&masks).map(|(i, m)| (&i.0, &m.0)).collect();
            segnet::train(model, &pairs, &cfg)
        });
        let (history, _) = history.map_err(to_py)?;
        Ok(history.epochs.iter().map(|e| e.train_loss).collect())
    }

    /// Foreground probabilities, row-major.
    fn predict_proba(&self, image: &PyImage) -> PyResult<Vec<f32>> {
        self.0.predict_proba(&image.0).map(|p| p.values).map_err(to_py)
    }

    fn predict(&self, image: &PyImage) -> PyResult<PyMask> {
        self.0.predict(&image.0).map(PyMask).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path, None).map_err(to_py)
    }

    /// Loads weights saved by a model with the same architecture.
    fn load(&mut self, path: PathBuf) -> PyResult<()> {
        let (model, _) = segnet::SegNet::load(&path, self.0.config.clone()).map_err(to_py)?;
        self.0 = model;
        Ok(())
    }
}

#[pymodule]
pub fn lsg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PySpecimenSpec>()?;
    m.add_class::<PySegNet>()?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(gamma, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_noise, m)?)?;
    m.add_function(wrap_pyfunction!(pixelate, m)?)?;
    m.add_function(wrap_pyfunction!(perturb_preset, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(ci95, m)?)?;
    m.add_function(wrap_pyfunction!(knn_graph, m)?)?;
    m.add_function(wrap_pyfunction!(active_contour, m)?)?;
    Ok(())
}
