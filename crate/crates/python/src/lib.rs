//! Python bindings: kernels and their bands, half-space evolution, limit
//! covariances, the normality test and whole studies driven by a JSON config.

use harmonic_crystal::covariance::{self, LimitCovariance as CoreLimit};
use harmonic_crystal::dynamics::{FieldState, Flavor, HalfMethod, HalfSpace as CoreHalfSpace};
use harmonic_crystal::experiments::{self, ExperimentConfig};
use harmonic_crystal::fields::SpecFile;
use harmonic_crystal::lattice::{LatticeBox, LatticePoint, TorusGrid};
use harmonic_crystal::spectral::{validate_conditions, InteractionKernel, SpectralPoint, Tolerances};
use harmonic_crystal::CrystalError;
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn err(e: CrystalError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any().unbind(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any().unbind(),
            _ => py.None(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn serialize<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &v)
}

#[pyclass(frozen)]
struct Kernel {
    inner: InteractionKernel,
}

#[pymethods]
impl Kernel {
    /// Nearest-neighbour kernel with per-component `gamma` and `mass`.
    #[staticmethod]
    fn nearest_neighbor(d: usize, n: usize, gamma: Vec<f64>, mass: Vec<f64>) -> PyResult<Self> {
        let inner = InteractionKernel::nearest_neighbor(d, n, &gamma, &mass).map_err(err)?;
        Ok(Self { inner })
    }

    /// Kernel from the JSON kernel-file format.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: InteractionKernel::from_json_str(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn components(&self) -> usize {
        self.inner.components()
    }

    /// `V^(theta)` as nested lists of complex numbers.
    fn symbol(&self, theta: Vec<f64>) -> PyResult<Vec<Vec<Complex64>>> {
        if theta.len() != self.inner.dim() {
            return Err(PyValueError::new_err("theta has the wrong dimension"));
        }
        let s = self.inner.symbol(&theta);
        Ok((0..s.nrows()).map(|r| (0..s.ncols()).map(|c| s[(r, c)]).collect()).collect())
    }

    /// Band frequencies at `theta`, repeated by multiplicity, ascending.
    fn frequencies(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        if theta.len() != self.inner.dim() {
            return Err(PyValueError::new_err("theta has the wrong dimension"));
        }
        let p = SpectralPoint::from_symbol(theta.clone(), self.inner.symbol(&theta)).map_err(err)?;
        Ok(p.bands
            .iter()
            .flat_map(|b| std::iter::repeat_n(b.omega, b.multiplicity))
            .collect())
    }

    /// Condition report on an offset grid with `points` nodes per axis.
    fn validate(&self, py: Python<'_>, points: usize) -> PyResult<Py<PyAny>> {
        let grid = TorusGrid::uniform(self.inner.dim(), points, true).map_err(err)?;
        let r = validate_conditions(&self.inner, &grid, &Tolerances::default()).map_err(err)?;
        serialize(py, &r)
    }

    /// Rows of the dispersion table along each axis.
    fn dispersion(&self, py: Python<'_>, points: usize) -> PyResult<Py<PyAny>> {
        serialize(py, &experiments::dispersion_rows(&self.inner, points).map_err(err)?)
    }
}

/// A half-space slab. Fields are flat lists indexed `site * n + k` with sites
/// in row-major order and axis 0 the normal direction.
#[pyclass(frozen)]
struct HalfSpace {
    inner: CoreHalfSpace,
}

impl HalfSpace {
    fn state(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<FieldState> {
        FieldState::new(self.inner.half.clone(), self.inner.n(), u, v, Flavor::Half).map_err(err)
    }
}

#[pymethods]
impl HalfSpace {
    #[new]
    fn new(kernel: &Kernel, extents: Vec<usize>) -> PyResult<Self> {
        let half = LatticeBox::new(extents).map_err(err)?;
        Ok(Self {
            inner: CoreHalfSpace::new(&kernel.inner, half).map_err(err)?,
        })
    }

    #[getter]
    fn extents(&self) -> Vec<usize> {
        self.inner.half.extents.clone()
    }

    #[getter]
    fn group_velocity(&self) -> f64 {
        self.inner.group_velocity
    }

    /// Largest time for which observables within `reach` of the wall are
    /// unaffected by the far end of the slab.
    fn horizon(&self, reach: f64) -> f64 {
        self.inner.horizon(reach)
    }

    /// `(u, v)` at time `t`; `method` is "odd-extension" or "image".
    #[pyo3(signature = (u, v, t, method = "odd-extension"))]
    fn evolve(&self, u: Vec<f64>, v: Vec<f64>, t: f64, method: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let method = match method {
            "odd-extension" => HalfMethod::OddExtension,
            "image" => HalfMethod::Image,
            other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
        };
        let y = self.inner.evolve(&self.state(u, v)?, t, method).map_err(err)?;
        Ok((y.u, y.v))
    }

    /// Adjoint evolution of a test function, restricted to the slab.
    fn adjoint(&self, u: Vec<f64>, v: Vec<f64>, t: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let phi = self.inner.adjoint(&self.state(u, v)?, t).map_err(err)?;
        let keep = self.inner.half.sites() * self.inner.n();
        Ok((phi.u[..keep].to_vec(), phi.v[..keep].to_vec()))
    }
}

#[pyclass(frozen)]
struct LimitCovariance {
    inner: CoreLimit,
}

#[pymethods]
impl LimitCovariance {
    /// `spec` is a covariance spec in JSON (`{"kind": "triangular", "n0": 2}`).
    #[new]
    fn new(kernel: &Kernel, spec: &str, points: usize) -> PyResult<Self> {
        let file: SpecFile = serde_json::from_str(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let spec = file.build(&kernel.inner).map_err(err)?;
        let grid = TorusGrid::uniform(kernel.inner.dim(), points, true).map_err(err)?;
        Ok(Self {
            inner: CoreLimit::new(&kernel.inner, &spec, &grid).map_err(err)?,
        })
    }

    /// Full-space `q_inf(w)` as a `2n x 2n` nested list.
    fn position(&self, w: Vec<i64>) -> PyResult<Vec<Vec<f64>>> {
        let m = self.inner.position(&w).map_err(err)?;
        Ok(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// Half-space `Q_inf(z, z')`.
    fn halfspace(&self, z: Vec<i64>, zp: Vec<i64>) -> PyResult<Vec<Vec<f64>>> {
        let m = self
            .inner
            .halfspace(&LatticePoint(z), &LatticePoint(zp))
            .map_err(err)?;
        Ok(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

/// Moment z-scores and a KS test of `samples` against `N(0, variance)`.
#[pyfunction]
fn normality_test(py: Python<'_>, samples: Vec<f64>, variance: f64) -> PyResult<Py<PyAny>> {
    serialize(py, &covariance::normality_test(&samples, variance).map_err(err)?)
}

/// Runs a study from a JSON config without writing files and returns its
/// report. `command` is one of validate, dispersion, converge, decay,
/// gaussianity.
#[pyfunction]
fn run_study(py: Python<'_>, command: &str, config: &str) -> PyResult<Py<PyAny>> {
    let cfg = ExperimentConfig::from_json_str(config).map_err(err)?;
    let value = py
        .detach(|| -> harmonic_crystal::Result<serde_json::Value> {
            Ok(match command {
                "validate" => serde_json::to_value(experiments::validate(&cfg)?)?,
                "dispersion" => serde_json::to_value(experiments::dispersion_rows(
                    &cfg.kernel()?,
                    cfg.dispersion_points(),
                )?)?,
                "converge" => serde_json::to_value(experiments::convergence_study(&cfg)?)?,
                "decay" => {
                    let hs = CoreHalfSpace::new(&cfg.kernel()?, cfg.half_box()?)?;
                    let tol = &cfg.tolerances;
                    serde_json::to_value(experiments::decay_study(
                        &hs,
                        &cfg.test_functions,
                        &cfg.times,
                        tol.decay_slope,
                        tol.cone_mass,
                    )?)?
                }
                "gaussianity" => serde_json::to_value(experiments::gaussianity_study(&cfg)?.0)?,
                other => {
                    return Err(CrystalError::InvalidParameter(format!("unknown study {other:?}")))
                }
            })
        })
        .map_err(err)?;
    to_py(py, &value)
}

#[pymodule]
fn pycrystal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Kernel>()?;
    m.add_class::<HalfSpace>()?;
    m.add_class::<LimitCovariance>()?;
    m.add_function(wrap_pyfunction!(normality_test, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
