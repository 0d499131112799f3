//! Python access to the optimizer, the high-fidelity model and the self-checks.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use mfopt::harness::{gradient_fd_check, sample_starts, validate, ExperimentConfig, Scale};
use mfopt::tr_opt::{run_variant, Fidelity, Variant};

fn to_py(e: mfopt::Error) -> PyErr {
    match e {
        mfopt::Error::InvalidInput(_) | mfopt::Error::Config(_) | mfopt::Error::DimensionMismatch(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Heat-conduction design problem with its optimizer configuration.
#[pyclass(module = "mfopt", frozen)]
struct Problem {
    config: ExperimentConfig,
    inner: mfopt::tr_opt::Problem,
}

#[pymethods]
impl Problem {
    /// `config` is a TOML file, `toml` inline TOML text (applied after the file).
    #[new]
    #[pyo3(signature = (config=None, toml=None, scale="desk"))]
    fn new(py: Python<'_>, config: Option<&str>, toml: Option<&str>, scale: &str) -> PyResult<Self> {
        let scale: Scale = scale.parse().map_err(to_py)?;
        let mut text = match config {
            Some(path) => std::fs::read_to_string(Path::new(path))
                .map_err(|e| PyValueError::new_err(format!("cannot read {path}: {e}")))?,
            None => String::new(),
        };
        if let Some(extra) = toml {
            text.push('\n');
            text.push_str(extra);
        }
        let config = ExperimentConfig::from_toml(&text, scale).map_err(to_py)?;
        let inner = py.detach(|| config.build_problem()).map_err(to_py)?;
        Ok(Problem { config, inner })
    }

    /// Number of finite-element unknowns.
    #[getter]
    fn dofs(&self) -> usize {
        self.inner.fom.dim()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.fom.time.steps
    }

    /// `(lower, upper)` of the parameter box.
    #[getter]
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let b = &self.inner.fom.bounds;
        (b.lower.clone(), b.upper.clone())
    }

    /// Effective configuration as TOML.
    fn config_toml(&self) -> String {
        self.config.to_toml()
    }

    /// High-fidelity objective and gradient.
    fn objective(&self, py: Python<'_>, mu: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        let out = py.detach(|| self.inner.fom.eval_output(&mu)).map_err(to_py)?;
        Ok((out.j, out.grad))
    }

    /// Runs one optimizer variant from `mu0` and returns a summary dictionary
    /// including the convergence history.
    fn optimize<'py>(&self, py: Python<'py>, variant: &str, mu0: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let variant: Variant = variant.parse().map_err(to_py)?;
        let r = py.detach(|| run_variant(&self.inner, &self.config.optimizer, variant, &mu0)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("variant", variant.name())?;
        d.set_item("mu", r.mu.clone())?;
        d.set_item("J", r.j)?;
        d.set_item("criticality", r.criticality)?;
        d.set_item("status", r.status.to_string())?;
        d.set_item("outer_iters", r.outer_iters)?;
        d.set_item("fom_evals", r.evals(Fidelity::Fom))?;
        d.set_item("rb_evals", r.evals(Fidelity::Rb))?;
        d.set_item("ml_evals", r.evals(Fidelity::Ml))?;
        d.set_item("total_time_s", r.total_time_s)?;
        d.set_item("decay_violations", r.decay_violations())?;
        let history = PyList::empty(py);
        for e in &r.history {
            let h = PyDict::new(py);
            h.set_item("outer", e.outer)?;
            h.set_item("inner", e.inner)?;
            h.set_item("fidelity", e.fidelity.to_string())?;
            h.set_item("J", e.j)?;
            h.set_item("criticality", e.criticality)?;
            h.set_item("eps_l", e.eps_l)?;
            h.set_item("alpha_l", e.alpha_l)?;
            history.append(h)?;
        }
        d.set_item("history", history)?;
        Ok(d)
    }

    /// Worst componentwise relative gap between the adjoint gradient and
    /// central differences, per random parameter.
    #[pyo3(signature = (points=3))]
    fn gradient_check(&self, py: Python<'_>, points: usize) -> PyResult<Vec<(Vec<f64>, f64)>> {
        let fom = &self.inner.fom;
        let mus = sample_starts(&fom.bounds, points, self.config.experiment.seed);
        let samples =
            py.detach(|| gradient_fd_check(fom, &mus, self.config.validation.fd_step)).map_err(to_py)?;
        Ok(samples.iter().map(|s| (s.mu.clone(), s.worst())).collect())
    }

    /// Full validation suite: `(passed, report)`.
    fn validate(&self, py: Python<'_>) -> PyResult<(bool, String)> {
        let report = py.detach(|| validate(&self.config, &self.inner, None)).map_err(to_py)?;
        Ok((report.passed(), report.to_string()))
    }
}

/// Names accepted by `Problem.optimize`.
#[pyfunction]
fn variants() -> Vec<&'static str> {
    Variant::ALL.iter().map(|v| v.name()).collect()
}

/// Module initializer, public so embedding hosts can register it directly.
#[pymodule]
#[pyo3(name = "mfopt")]
pub fn mfopt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_function(wrap_pyfunction!(variants, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
