//! Python bindings. Matrices cross the boundary as lists of rows.

use fplsr::basis::{BasisSystem, DEFAULT_ORDER};
use fplsr::fdata::{default_lambda_grid, select_nbasis as select_k, smooth_curves, CurveSet};
use fplsr::ffrm::{amse as amse_score, fit_ffr, FfrModel, FitMethod, DEFAULT_AMSE_GRID, DEFAULT_COMPONENTS};
use fplsr::linalg::{from_rows, to_rows};
use fplsr::pls::{pls_fit, PlsAlgorithm};
use fplsr::simlab::{self, ExperimentConfig, Stream};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

pyo3::create_exception!(pyfplsr, NumericalError, PyArithmeticError);

fn py_err(e: fplsr::Error) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Clamped B-spline basis with equally spaced interior knots.
#[pyclass(name = "Basis", module = "pyfplsr", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyBasis {
    inner: BasisSystem,
}

#[pymethods]
impl PyBasis {
    #[new]
    #[pyo3(signature = (a, b, n_basis, order = DEFAULT_ORDER))]
    fn new(a: f64, b: f64, n_basis: usize, order: usize) -> PyResult<Self> {
        Ok(Self { inner: BasisSystem::uniform(a, b, n_basis, order).map_err(py_err)? })
    }

    #[getter]
    fn n_basis(&self) -> usize {
        self.inner.n_basis()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        self.inner.domain()
    }

    #[getter]
    fn knots(&self) -> Vec<f64> {
        self.inner.knots().to_vec()
    }

    /// Basis values (or derivatives) as a `len(x) x n_basis` table.
    #[pyo3(signature = (x, deriv = 0))]
    fn eval(&self, x: Vec<f64>, deriv: usize) -> PyResult<Rows> {
        Ok(to_rows(&self.inner.eval_basis(&x, deriv).map_err(py_err)?))
    }

    fn gram(&self) -> Rows {
        to_rows(&self.inner.gram_matrix().values)
    }

    #[pyo3(signature = (deriv = 2))]
    fn penalty(&self, deriv: usize) -> PyResult<Rows> {
        Ok(to_rows(&self.inner.penalty_matrix(deriv).map_err(py_err)?))
    }

    fn __repr__(&self) -> String {
        let (a, b) = self.inner.domain();
        format!("Basis({a}, {b}, n_basis={}, order={})", self.inner.n_basis(), self.inner.order())
    }
}

/// Curves expanded in a shared basis.
#[pyclass(name = "Curves", module = "pyfplsr", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyCurves {
    inner: CurveSet,
}

#[pymethods]
impl PyCurves {
    #[new]
    fn new(basis: &PyBasis, coef: Rows) -> PyResult<Self> {
        let coef = from_rows(&coef).map_err(py_err)?;
        Ok(Self { inner: CurveSet::new(basis.inner.clone(), coef).map_err(py_err)? })
    }

    #[getter]
    fn basis(&self) -> PyBasis {
        PyBasis { inner: self.inner.basis().clone() }
    }

    #[getter]
    fn coef(&self) -> Rows {
        to_rows(self.inner.coef())
    }

    #[getter]
    fn n_curves(&self) -> usize {
        self.inner.n_curves()
    }

    fn __len__(&self) -> usize {
        self.inner.n_curves()
    }

    /// Curve values as an `n_curves x len(grid)` table.
    fn eval(&self, grid: Vec<f64>) -> PyResult<Rows> {
        Ok(to_rows(&self.inner.eval(&grid).map_err(py_err)?))
    }

    fn slice(&self, start: usize, end: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.slice(start, end).map_err(py_err)? })
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean_curve()
    }
}

/// Fitted function-on-function regression model.
#[pyclass(name = "Model", module = "pyfplsr", frozen, skip_from_py_object)]
pub struct PyModel {
    inner: FfrModel,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn components(&self) -> usize {
        self.inner.components
    }

    #[getter]
    fn truncated(&self) -> bool {
        self.inner.truncated()
    }

    #[getter]
    fn n_predictors(&self) -> usize {
        self.inner.n_predictors()
    }

    #[getter]
    fn intercept(&self) -> Vec<f64> {
        self.inner.intercept()
    }

    fn predict(&self, predictors: Vec<PyRef<'_, PyCurves>>) -> PyResult<PyCurves> {
        let xs: Vec<CurveSet> = predictors.iter().map(|p| p.inner.clone()).collect();
        Ok(PyCurves { inner: self.inner.predict(&xs).map_err(py_err)? })
    }

    /// Coefficient surface of predictor `m` as a `len(s) x len(t)` table.
    fn surface(&self, m: usize, s: Vec<f64>, t: Vec<f64>) -> PyResult<Rows> {
        Ok(to_rows(&self.inner.coefficient_surface(m, &s, &t).map_err(py_err)?))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(json_err)? })
    }
}

/// Penalized least-squares smoothing with lambda chosen by GCV.
/// Returns the curves and a dict with the chosen `lambda` and `edf`.
#[pyfunction]
#[pyo3(signature = (obs, argvals, basis, lambdas = None))]
fn smooth<'py>(
    py: Python<'py>,
    obs: Rows,
    argvals: Vec<f64>,
    basis: &PyBasis,
    lambdas: Option<Vec<f64>>,
) -> PyResult<(PyCurves, Bound<'py, PyDict>)> {
    let obs = from_rows(&obs).map_err(py_err)?;
    let grid = lambdas.unwrap_or_else(default_lambda_grid);
    let (cs, rep) = smooth_curves(&obs, &argvals, &basis.inner, &grid).map_err(py_err)?;
    let info = PyDict::new(py);
    info.set_item("lambda", rep.lambda)?;
    info.set_item("edf", rep.edf)?;
    info.set_item("gcv_curve", rep.gcv_curve)?;
    Ok((PyCurves { inner: cs }, info))
}

/// Smooths with each candidate basis size and keeps the GCV-best one.
#[pyfunction]
#[pyo3(signature = (obs, argvals, candidates, order = DEFAULT_ORDER))]
fn select_nbasis(obs: Rows, argvals: Vec<f64>, candidates: Vec<usize>, order: usize) -> PyResult<(PyCurves, usize, f64)> {
    let obs = from_rows(&obs).map_err(py_err)?;
    let domain = match (argvals.first(), argvals.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(PyValueError::new_err("argvals is empty")),
    };
    let (cs, rep, k) = select_k(&obs, &argvals, domain, order, &candidates, &default_lambda_grid()).map_err(py_err)?;
    Ok((PyCurves { inner: cs }, k, rep.lambda))
}

#[pyfunction]
#[pyo3(signature = (response, predictors, components = DEFAULT_COMPONENTS, method = "nipals"))]
fn fit(response: &PyCurves, predictors: Vec<PyRef<'_, PyCurves>>, components: usize, method: &str) -> PyResult<PyModel> {
    let method: FitMethod = method.parse().map_err(py_err)?;
    let xs: Vec<CurveSet> = predictors.iter().map(|p| p.inner.clone()).collect();
    Ok(PyModel { inner: fit_ffr(&response.inner, &xs, components, method).map_err(py_err)? })
}

/// Grid-averaged squared error between two curve sets.
#[pyfunction]
#[pyo3(signature = (observed, predicted, grid = DEFAULT_AMSE_GRID))]
fn amse(observed: &PyCurves, predicted: &PyCurves, grid: usize) -> PyResult<f64> {
    amse_score(&observed.inner, &predicted.inner, grid).map_err(py_err)
}

/// Multivariate PLS regression on plain matrices.
#[pyfunction]
#[pyo3(signature = (x, y, components, algorithm = "nipals"))]
fn pls<'py>(py: Python<'py>, x: Rows, y: Rows, components: usize, algorithm: &str) -> PyResult<Bound<'py, PyDict>> {
    let alg = match algorithm.to_ascii_lowercase().as_str() {
        "nipals" => PlsAlgorithm::Nipals,
        "simpls" => PlsAlgorithm::Simpls,
        other => return Err(PyValueError::new_err(format!("unknown algorithm '{other}'"))),
    };
    let x = from_rows(&x).map_err(py_err)?;
    let y = from_rows(&y).map_err(py_err)?;
    let m = pls_fit(&x, &y, components, alg).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("n_components", m.n_components)?;
    out.set_item("truncated", m.truncated)?;
    out.set_item("coefficients", to_rows(&m.coefficients))?;
    out.set_item("scores", to_rows(&m.scores))?;
    out.set_item("weights", to_rows(&m.weights))?;
    out.set_item("x_mean", m.x_mean.to_vec())?;
    out.set_item("y_mean", m.y_mean.to_vec())?;
    out.set_item("fitted", to_rows(&m.fitted))?;
    Ok(out)
}

/// One simulated sample: dict with `s`, `x`, `t`, `y`.
#[pyfunction]
#[pyo3(signature = (n, rho, n_points, k_err, seed, rep = 0))]
fn gen_dataset<'py>(
    py: Python<'py>,
    n: usize,
    rho: f64,
    n_points: usize,
    k_err: usize,
    seed: u64,
    rep: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let d = simlab::gen_dataset(n, rho, n_points, k_err, Stream::new(seed, rep)).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("s", d.s)?;
    out.set_item("x", to_rows(&d.x))?;
    out.set_item("t", d.t)?;
    out.set_item("y", to_rows(&d.y))?;
    Ok(out)
}

/// Runs a Monte-Carlo experiment. `config` is a dict with the same keys
/// as the command-line configuration file. Returns `(records, losses)`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let text: String = py.import("json")?.call_method1("dumps", (config,))?.extract()?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(json_err)?;
    let res = py.detach(|| simlab::run_experiment(&cfg)).map_err(py_err)?;
    let records = serde_json::to_string(&res.records).map_err(json_err)?;
    let losses = serde_json::to_string(&res.losses).map_err(json_err)?;
    Ok((json_to_py(py, &records)?, json_to_py(py, &losses)?))
}

#[pymodule]
pub fn pyfplsr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyBasis>()?;
    m.add_class::<PyCurves>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(smooth, m)?)?;
    m.add_function(wrap_pyfunction!(select_nbasis, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(amse, m)?)?;
    m.add_function(wrap_pyfunction!(pls, m)?)?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
