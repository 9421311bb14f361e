//! Python bindings. Grids cross the boundary as flat row-major lists with
//! an explicit `(height, width, channels)` shape.

use std::path::PathBuf;

use bevsplat_core::fit::{fit_preset, FitProblem, Preset};
use bevsplat_core::scene::validate;
use bevsplat_core::{camera, gradcheck, io, preview, raster};
use bevsplat_core::{BevGrid, CameraCalib, Gaussian, GaussianScene, Quat, RawHeadGrid, RenderConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn format_err(e: io::FormatError) -> PyErr {
    match e {
        io::FormatError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    }
}

#[pyclass(name = "RenderConfig", module = "bevsplat", from_py_object)]
#[derive(Clone)]
struct PyRenderConfig {
    inner: RenderConfig,
}

#[pymethods]
impl PyRenderConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let inner = match kwargs {
            None => RenderConfig::default(),
            Some(kw) => {
                let json = kw.py().import("json")?.call_method1("dumps", (kw,))?;
                serde_json::from_str(json.extract::<&str>()?).map_err(value_err)?
            }
        };
        inner.check().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Parses a JSON object with any subset of the fields.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: RenderConfig = serde_json::from_str(text).map_err(value_err)?;
        inner.check().map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    fn without_thresholds(&self) -> Self {
        Self {
            inner: self.inner.without_thresholds(),
        }
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    fn __repr__(&self) -> String {
        format!("RenderConfig({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

#[pyclass(name = "GaussianScene", module = "bevsplat", from_py_object)]
#[derive(Clone)]
struct PyScene {
    inner: GaussianScene,
}

#[pymethods]
impl PyScene {
    #[new]
    fn new(feature_dim: usize) -> Self {
        Self {
            inner: GaussianScene::new(feature_dim),
        }
    }

    /// Appends one gaussian; `rotation` is `(w, x, y, z)`.
    fn add(
        &mut self,
        center: [f64; 3],
        scale: [f64; 3],
        rotation: [f64; 4],
        opacity: f64,
        embedding: Vec<f64>,
    ) -> PyResult<()> {
        self.inner
            .push(Gaussian {
                center: center.into(),
                scale: scale.into(),
                rotation: Quat::from_array(rotation),
                opacity,
                embedding,
            })
            .map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::load_scene(&path).map_err(format_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_scene(&path, &self.inner).map_err(format_err)
    }

    /// Invariant violations as messages; empty means valid.
    fn validate(&self) -> Vec<String> {
        validate(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim
    }

    fn centers(&self) -> Vec<[f64; 3]> {
        self.inner.gaussians.iter().map(|g| g.center.into()).collect()
    }

    fn opacities(&self) -> Vec<f64> {
        self.inner.gaussians.iter().map(|g| g.opacity).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "BevGrid", module = "bevsplat", from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: BevGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(height: usize, width: usize, channels: usize, data: Option<Vec<f64>>) -> PyResult<Self> {
        let mut inner = BevGrid::zeros(height, width, channels);
        if let Some(d) = data {
            if d.len() != inner.data.len() {
                return Err(value_err(format!("expected {} values, got {}", inner.data.len(), d.len())));
            }
            inner.data = d;
        }
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.shape()
    }

    fn get(&self, row: usize, col: usize, channel: usize) -> PyResult<f64> {
        let (h, w, c) = self.inner.shape();
        if row >= h || col >= w || channel >= c {
            return Err(pyo3::exceptions::PyIndexError::new_err("grid index out of range"));
        }
        Ok(self.inner.get(row, col, channel))
    }

    /// Flat row-major values, channel fastest.
    fn tolist(&self) -> Vec<f64> {
        self.inner.data.clone()
    }

    fn save_pfm(&self, path: PathBuf) -> PyResult<()> {
        io::save_grid_pfm(&path, &self.inner).map_err(format_err)
    }

    #[staticmethod]
    fn load_pfm(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::load_grid_pfm(&path).map_err(format_err)?,
        })
    }

    /// PCA false-color preview as binary PPM bytes.
    fn preview_ppm<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &preview::preview_pca(&self.inner))
    }
}

#[pyfunction]
#[pyo3(signature = (scene, cfg, naive = false))]
fn render(py: Python<'_>, scene: &PyScene, cfg: &PyRenderConfig, naive: bool) -> PyGrid {
    let (s, c) = (&scene.inner, &cfg.inner);
    let inner = py.detach(|| if naive { raster::render_naive(s, c) } else { raster::render(s, c) });
    PyGrid { inner }
}

/// Gradients of `sum(d_grid * render(scene))`, as a dict of per-gaussian lists.
#[pyfunction]
fn render_backward<'py>(
    py: Python<'py>,
    scene: &PyScene,
    cfg: &PyRenderConfig,
    d_grid: &PyGrid,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let b = py
        .detach(|| raster::render_backward(&scene.inner, &cfg.inner, &d_grid.inner))
        .map_err(value_err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("center", b.center.iter().map(|v| [v.x, v.y, v.z]).collect::<Vec<_>>())?;
    out.set_item("scale", b.scale.iter().map(|v| [v.x, v.y, v.z]).collect::<Vec<_>>())?;
    out.set_item("rotation", b.rotation.iter().map(|v| [v[0], v[1], v[2], v[3]]).collect::<Vec<_>>())?;
    out.set_item("opacity", b.opacity.clone())?;
    out.set_item(
        "embedding",
        (0..b.len()).map(|i| b.embedding_at(i).to_vec()).collect::<Vec<_>>(),
    )?;
    Ok(out)
}

/// Metric depth and `dz/dd` for disparity `d`.
#[pyfunction]
#[pyo3(signature = (disparity, fx, f_ref))]
fn decode_depth(disparity: f64, fx: f64, f_ref: f64) -> PyResult<(f64, f64)> {
    let calib = CameraCalib::new(
        fx,
        fx,
        0.0,
        0.0,
        bevsplat_core::nalgebra::Matrix3::identity(),
        Default::default(),
        1,
        1,
        f_ref,
    )
    .map_err(value_err)?;
    Ok(camera::decode_depth(disparity, &calib))
}

/// Decodes a single-camera head grid. `rotation` is camera-to-world,
/// row-major; per-pixel lists are in row-major pixel order.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (fx, fy, cx, cy, rotation, translation, width, height, f_ref, disparity, offset, quat, scale, opacity_logit, embedding))]
fn decode_camera(
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    rotation: [f64; 9],
    translation: [f64; 3],
    width: usize,
    height: usize,
    f_ref: f64,
    disparity: Vec<f64>,
    offset: Vec<[f64; 3]>,
    quat: Vec<[f64; 4]>,
    scale: Vec<[f64; 3]>,
    opacity_logit: Vec<f64>,
    embedding: Vec<Vec<f64>>,
) -> PyResult<PyScene> {
    let calib = CameraCalib::new(
        fx,
        fy,
        cx,
        cy,
        bevsplat_core::nalgebra::Matrix3::from_row_slice(&rotation),
        translation.into(),
        width,
        height,
        f_ref,
    )
    .map_err(value_err)?;
    let feature_dim = embedding.first().map_or(0, Vec::len);
    if embedding.iter().any(|e| e.len() != feature_dim) {
        return Err(value_err("embeddings differ in length"));
    }
    let raw = RawHeadGrid {
        width,
        height,
        feature_dim,
        disparity,
        offset,
        rotation: quat,
        scale,
        opacity_logit,
        embedding: embedding.concat(),
    };
    let (inner, _) = camera::decode_camera(&raw, &calib).map_err(value_err)?;
    Ok(PyScene { inner })
}

/// Fits a preset; returns `(report as JSON text, fitted scene)`.
#[pyfunction]
#[pyo3(signature = (preset, seed = 0, steps = 400, lr = 0.05, lambda_depth = 0.05))]
fn fit(py: Python<'_>, preset: &str, seed: u64, steps: usize, lr: f64, lambda_depth: f64) -> PyResult<(String, PyScene)> {
    let preset: Preset = preset.parse().map_err(value_err)?;
    let mut problem = FitProblem::from_preset(preset, seed);
    problem.optimizer.steps = steps;
    problem.optimizer.learning_rate = lr;
    problem.weights.depth = lambda_depth;
    let outcome = py.detach(|| fit_preset(&problem, Some(preset))).map_err(value_err)?;
    let report = serde_json::to_string(&outcome.report).map_err(value_err)?;
    Ok((report, PyScene { inner: outcome.scene }))
}

/// Runs every finite-difference suite; returns `(all passed, lines)`.
#[pyfunction]
#[pyo3(signature = (seed = 0, tol = 1e-5))]
fn run_gradcheck(py: Python<'_>, seed: u64, tol: f64) -> (bool, Vec<String>) {
    let suites = py.detach(|| gradcheck::run_all(seed, tol));
    let lines = suites
        .iter()
        .flat_map(|s| {
            s.checks
                .iter()
                .map(move |c| format!("{} {}: {:.3e} (tol {:.0e})", s.suite, c.name, c.max_rel_err, s.tolerance))
        })
        .collect();
    (suites.iter().all(|s| s.passed()), lines)
}

#[pymodule]
fn bevsplat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRenderConfig>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyGrid>()?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(render_backward, m)?)?;
    m.add_function(wrap_pyfunction!(decode_depth, m)?)?;
    m.add_function(wrap_pyfunction!(decode_camera, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_gradcheck, m)?)?;
    Ok(())
}
