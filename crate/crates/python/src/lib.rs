//! Python bindings for detkit. Structured results (detections, reports,
//! summaries) cross the boundary as plain dicts and lists.

use std::path::PathBuf;

use detkit::blocks::{cbam_forward, pconv_forward, CbamParams, CbamSpec, PConvSpec};
use detkit::cost;
use detkit::gradcheck::{run_gradcheck, GradcheckOptions};
use detkit::losses::{self, BBox};
use detkit::ops::{self, Activation, ConvSpec};
use detkit::postprocess::{self, Detection, GridDecodeSpec};
use detkit::tensor::DType;
use detkit::train::{self, ToyNet, TrainConfig};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError};
use pyo3::prelude::*;
use rand::SeedableRng;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(pydetkit, DetkitError, PyException, "Error raised by the detkit library.");

fn err(e: detkit::Error) -> PyErr {
    match e {
        detkit::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => DetkitError::new_err(other.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| DetkitError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| DetkitError::new_err(e.to_string()))
}

fn bbox(b: [f64; 4]) -> PyResult<BBox> {
    BBox::new(b[0], b[1], b[2], b[3]).map_err(err)
}

/// Rank-4 `(n, c, h, w)` array of float64.
#[pyclass(name = "Tensor", module = "pydetkit", from_py_object)]
#[derive(Clone)]
pub struct PyTensor(detkit::Tensor);

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: [usize; 4], data: Vec<f64>) -> PyResult<Self> {
        detkit::Tensor::from_vec(shape, data).map(PyTensor).map_err(err)
    }

    #[staticmethod]
    fn zeros(shape: [usize; 4]) -> Self {
        PyTensor(detkit::Tensor::zeros(shape))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let f = std::fs::File::open(&path)?;
        detkit::Tensor::read_from(std::io::BufReader::new(f)).map(|(t, _)| PyTensor(t)).map_err(err)
    }

    #[pyo3(signature = (path, dtype = "f64"))]
    fn save(&self, path: PathBuf, dtype: &str) -> PyResult<()> {
        let dtype = match dtype {
            "f64" => DType::F64,
            "f32" => DType::F32,
            other => return Err(DetkitError::new_err(format!("unknown dtype {other:?}"))),
        };
        let f = std::fs::File::create(&path)?;
        self.0.write_to(std::io::BufWriter::new(f), dtype).map_err(err)
    }

    #[getter]
    fn shape(&self) -> [usize; 4] {
        self.0.shape()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn at(&self, idx: [usize; 4]) -> PyResult<f64> {
        if idx.iter().zip(self.0.shape()).any(|(&i, d)| i >= d) {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("{idx:?} out of bounds")));
        }
        Ok(self.0.at(idx))
    }

    fn max_abs_diff(&self, other: &PyTensor) -> f64 {
        self.0.max_abs_diff(&other.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: &PyTensor) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.0.shape())
    }
}

#[pyfunction]
#[pyo3(signature = (x, weight, bias, stride = 1, padding = 0))]
fn conv2d(x: &PyTensor, weight: &PyTensor, bias: Vec<f64>, stride: usize, padding: usize) -> PyResult<PyTensor> {
    let [co, ci, k, _] = weight.0.shape();
    let spec = ConvSpec {
        in_channels: ci,
        out_channels: co,
        kernel: k,
        stride,
        padding,
    };
    ops::conv2d_forward(&x.0, &weight.0, &bias, &spec).map(PyTensor).map_err(err)
}

/// Partial convolution over the first `cp` channels; the rest pass through.
#[pyfunction]
fn pconv(x: &PyTensor, weight: &PyTensor, cp: usize) -> PyResult<PyTensor> {
    let spec = PConvSpec::new(x.0.c(), cp, weight.0.shape()[2]).map_err(err)?;
    pconv_forward(&x.0, &weight.0, &spec).map(PyTensor).map_err(err)
}

#[pyfunction]
fn activation(x: &PyTensor, kind: &str) -> PyResult<PyTensor> {
    let kind: Activation = kind.parse().map_err(DetkitError::new_err)?;
    ops::activation(&x.0, kind).map(PyTensor).map_err(err)
}

#[pyfunction]
fn spp(x: &PyTensor, windows: Vec<usize>) -> PyResult<PyTensor> {
    ops::spp(&x.0, &windows).map(PyTensor).map_err(err)
}

/// CBAM with parameters drawn from `seed`.
#[pyfunction]
#[pyo3(signature = (x, reduction = 4, spatial_kernel = 1, composition = "sequential", mlp = "prose", seed = 0))]
fn cbam(
    x: &PyTensor,
    reduction: usize,
    spatial_kernel: usize,
    composition: &str,
    mlp: &str,
    seed: u64,
) -> PyResult<PyTensor> {
    let spec = CbamSpec {
        channels: x.0.c(),
        reduction,
        spatial_kernel,
        composition: composition.parse().map_err(DetkitError::new_err)?,
        channel_mlp: mlp.parse().map_err(DetkitError::new_err)?,
    };
    spec.validate().map_err(err)?;
    let params = CbamParams::init(&spec, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    cbam_forward(&x.0, &params, &spec).map(PyTensor).map_err(err)
}

#[pyfunction]
fn iou(a: [f64; 4], b: [f64; 4]) -> PyResult<f64> {
    Ok(losses::iou(&bbox(a)?, &bbox(b)?))
}

#[pyfunction]
fn ciou_loss(pred: [f64; 4], gt: [f64; 4]) -> PyResult<f64> {
    Ok(losses::ciou_loss(&bbox(pred)?, &bbox(gt)?))
}

#[pyfunction]
fn wiou_loss(pred: [f64; 4], gt: [f64; 4]) -> PyResult<f64> {
    Ok(losses::wiou_loss(&bbox(pred)?, &bbox(gt)?))
}

/// `detections` is a list of `{"bbox": [x1, y1, x2, y2], "score": s, "class": k}`.
#[pyfunction]
fn nms(py: Python<'_>, detections: &Bound<'_, PyAny>, iou_threshold: f64) -> PyResult<Py<PyAny>> {
    let dets: Vec<Detection> = from_py(py, detections)?;
    to_py(py, &postprocess::nms(&dets, iou_threshold))
}

/// Decodes a `(1, 5 + K, gh, gw)` head output.
#[pyfunction]
#[pyo3(signature = (head, stride, num_classes, score_threshold = 0.25))]
fn decode(py: Python<'_>, head: &PyTensor, stride: f64, num_classes: usize, score_threshold: f64) -> PyResult<Py<PyAny>> {
    let mut spec = GridDecodeSpec::new(head.0.h(), head.0.w(), stride, num_classes);
    spec.score_threshold = score_threshold;
    to_py(py, &postprocess::decode(&head.0, &spec).map_err(err)?)
}

#[pyfunction]
fn conv_cost(py: Python<'_>, h: usize, w: usize, c_in: usize, c_out: usize, k: usize) -> PyResult<Py<PyAny>> {
    to_py(py, &cost::conv_cost(h, w, c_in, c_out, k))
}

#[pyfunction]
fn pconv_cost(py: Python<'_>, h: usize, w: usize, c: usize, cp: usize, k: usize) -> PyResult<Py<PyAny>> {
    to_py(py, &cost::pconv_cost(h, w, c, cp, k))
}

/// Partial- vs full-convolution comparison for a net description (or the toy net).
#[pyfunction(name = "bench")]
#[pyo3(signature = (spec = None, cp_fraction = 0.25, bytes_per_element = 8))]
fn bench_variants(py: Python<'_>, spec: Option<&str>, cp_fraction: f64, bytes_per_element: u64) -> PyResult<Py<PyAny>> {
    let net = match spec {
        Some(text) => cost::NetSpec::parse(text).map_err(err)?,
        None => train::ToyNetConfig::default().net_spec(),
    };
    to_py(py, &cost::compare_variants(&net, cp_fraction, bytes_per_element).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (filter = None, cases = 100, seed = 0))]
fn gradcheck(py: Python<'_>, filter: Option<String>, cases: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let rows = run_gradcheck(&GradcheckOptions {
        filter,
        cases,
        seed,
        perturb: None,
    })
    .map_err(err)?;
    to_py(py, &rows)
}

/// `detections` and `ground_truths` are per-image lists of dicts.
#[pyfunction]
#[pyo3(signature = (detections, ground_truths, num_classes, iou_threshold = 0.5))]
fn evaluate(
    py: Python<'_>,
    detections: &Bound<'_, PyAny>,
    ground_truths: &Bound<'_, PyAny>,
    num_classes: usize,
    iou_threshold: f64,
) -> PyResult<Py<PyAny>> {
    let dets: Vec<Vec<Detection>> = from_py(py, detections)?;
    let gts: Vec<Vec<losses::Target>> = from_py(py, ground_truths)?;
    to_py(py, &train::evaluate(&dets, &gts, iou_threshold, num_classes).map_err(err)?)
}

fn train_config(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<TrainConfig> {
    let cfg: TrainConfig = match config {
        Some(c) => from_py(py, c)?,
        None => TrainConfig::default(),
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Trained toy detector.
#[pyclass(name = "Model", module = "pydetkit")]
pub struct PyModel(ToyNet);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        train::load_weights(&path).map(PyModel).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        train::save_weights(&self.0, &path).map_err(err)
    }

    #[getter]
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.config)
    }

    fn num_params(&self) -> usize {
        detkit::Parameters::num_params(&self.0)
    }

    /// Detections for a `(1, 3, s, s)` image at the net's input size.
    #[pyo3(signature = (image, score_threshold = 0.25, nms_iou = 0.45))]
    fn detect(&self, py: Python<'_>, image: &PyTensor, score_threshold: f64, nms_iou: f64) -> PyResult<Py<PyAny>> {
        let mut spec = self.0.config.decode_spec();
        spec.score_threshold = score_threshold;
        let dets = self.0.detect(&image.0, &spec, nms_iou).map_err(err)?;
        to_py(py, &dets)
    }

    /// Scores the net on the synthetic dataset described by `config`.
    #[pyo3(signature = (config = None))]
    fn evaluate(&self, py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Py<PyAny>> {
        let mut cfg = train_config(py, config)?;
        cfg.net = self.0.config.clone();
        let data = cfg.dataset().map_err(err)?;
        to_py(py, &train::evaluate_net(&self.0, &data, &cfg).map_err(err)?)
    }
}

/// Trains on the synthetic dataset. `config` is a (partial) dict of training
/// settings; returns `(model, epoch_stats)`.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn train_toy(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<(PyModel, Py<PyAny>)> {
    let cfg = train_config(py, config)?;
    let out = py.detach(|| train::train_toy(&cfg)).map_err(err)?;
    Ok((PyModel(out.net), to_py(py, &out.stats)?))
}

/// Toggles NaN/Inf rejection and MAC counting.
#[pyfunction]
fn set_checked(on: bool) {
    detkit::tensor::set_checked(on);
}

#[pymodule]
fn pydetkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DetkitError", m.py().get_type::<DetkitError>())?;
    m.add_class::<PyTensor>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(conv2d, m)?)?;
    m.add_function(wrap_pyfunction!(pconv, m)?)?;
    m.add_function(wrap_pyfunction!(activation, m)?)?;
    m.add_function(wrap_pyfunction!(spp, m)?)?;
    m.add_function(wrap_pyfunction!(cbam, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(ciou_loss, m)?)?;
    m.add_function(wrap_pyfunction!(wiou_loss, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(conv_cost, m)?)?;
    m.add_function(wrap_pyfunction!(pconv_cost, m)?)?;
    m.add_function(wrap_pyfunction!(bench_variants, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(train_toy, m)?)?;
    m.add_function(wrap_pyfunction!(set_checked, m)?)?;
    Ok(())
}
