use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use manreg_core::dynamics::{self, StateVector};
use manreg_core::harness::{self, ControllerMode, Scenario};
use manreg_core::{ControlInput, DisturbanceInput, ProjectionConfig, ProjectionState, ReducedState, VirtualInput};
use nalgebra::Vector3;

create_exception!(manreg, ManregError, PyException);

fn err(e: manreg_core::Error) -> PyErr {
    ManregError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    ManregError::new_err(e.to_string())
}

/// Parses a JSON string into Python objects with the stdlib `json` module.
fn to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "VehicleParams", from_py_object)]
#[derive(Clone, Default)]
struct PyVehicleParams {
    inner: manreg_core::VehicleParams,
}

#[pymethods]
impl PyVehicleParams {
    #[new]
    #[pyo3(signature = (m=None, g=None, f_max=None, angle_max=None))]
    fn new(m: Option<f64>, g: Option<f64>, f_max: Option<f64>, angle_max: Option<f64>) -> PyResult<Self> {
        let mut inner = manreg_core::VehicleParams::default();
        inner.m = m.unwrap_or(inner.m);
        inner.g = g.unwrap_or(inner.g);
        inner.f_max = f_max.unwrap_or(inner.f_max);
        inner.angle_max = angle_max.unwrap_or(inner.angle_max);
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }

    #[getter]
    fn g(&self) -> f64 {
        self.inner.g
    }

    #[getter]
    fn f_max(&self) -> f64 {
        self.inner.f_max
    }

    #[getter]
    fn angle_max(&self) -> f64 {
        self.inner.angle_max
    }

    fn hover_thrust(&self) -> f64 {
        self.inner.hover_thrust()
    }

    fn lateral_authority(&self) -> f64 {
        self.inner.lateral_authority()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "Gains", from_py_object)]
#[derive(Clone, Default)]
struct PyGains {
    inner: manreg_core::Gains,
}

#[pymethods]
impl PyGains {
    #[new]
    #[pyo3(signature = (k_p=None, k_d=None, k_psi=None, k_i=None, eta_limit=None))]
    fn new(
        k_p: Option<f64>,
        k_d: Option<f64>,
        k_psi: Option<f64>,
        k_i: Option<f64>,
        eta_limit: Option<f64>,
    ) -> PyResult<Self> {
        let d = manreg_core::Gains::default();
        let inner = manreg_core::Gains {
            k_p: k_p.unwrap_or(d.k_p),
            k_d: k_d.unwrap_or(d.k_d),
            k_psi: k_psi.unwrap_or(d.k_psi),
            k_i: k_i.unwrap_or(d.k_i),
            eta_limit: eta_limit.unwrap_or(d.eta_limit),
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn k_p(&self) -> f64 {
        self.inner.k_p
    }

    #[getter]
    fn k_d(&self) -> f64 {
        self.inner.k_d
    }

    #[getter]
    fn k_psi(&self) -> f64 {
        self.inner.k_psi
    }

    #[getter]
    fn k_i(&self) -> f64 {
        self.inner.k_i
    }

    #[getter]
    fn eta_limit(&self) -> f64 {
        self.inner.eta_limit
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A sampled reference maneuver.
#[pyclass(name = "Maneuver")]
struct PyManeuver {
    inner: manreg_core::Maneuver,
}

#[pymethods]
impl PyManeuver {
    #[staticmethod]
    #[pyo3(signature = (radius, speed, center=(0.0, 0.0, -1.0), psi_d=0.0))]
    fn circle(radius: f64, speed: f64, center: (f64, f64, f64), psi_d: f64) -> PyResult<Self> {
        let c = Vector3::new(center.0, center.1, center.2);
        let inner = manreg_core::Maneuver::circle(radius, speed, c, psi_d).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (speed, leg_length=0.5, fillet_radius=0.2, start=(0.0, 0.0, -1.0), psi_d=0.0))]
    fn turn90(
        speed: f64,
        leg_length: f64,
        fillet_radius: f64,
        start: (f64, f64, f64),
        psi_d: f64,
    ) -> PyResult<Self> {
        let s = Vector3::new(start.0, start.1, start.2);
        let inner = manreg_core::Maneuver::turn90(speed, leg_length, fillet_radius, s, psi_d).map_err(err)?;
        Ok(Self { inner })
    }

    /// Build from the `maneuver` object of a scenario file.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: manreg_core::ManeuverSpec = serde_json::from_str(text).map_err(json_err)?;
        Ok(Self {
            inner: spec.build().map_err(err)?,
        })
    }

    #[getter]
    fn tau_min(&self) -> f64 {
        self.inner.tau_min()
    }

    #[getter]
    fn tau_max(&self) -> f64 {
        self.inner.tau_max()
    }

    #[getter]
    fn closed(&self) -> bool {
        self.inner.closed()
    }

    /// Reference at `tau` as a dict with p, v, a, psi, psi_dot.
    fn eval<'py>(&self, py: Python<'py>, tau: f64) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let r = self.inner.eval(tau);
        let d = pyo3::types::PyDict::new(py);
        d.set_item("p", r.p.as_slice().to_vec())?;
        d.set_item("v", r.v.as_slice().to_vec())?;
        d.set_item("a", r.a.as_slice().to_vec())?;
        d.set_item("psi", r.psi)?;
        d.set_item("psi_dot", r.psi_dot)?;
        Ok(d)
    }

    /// Distance from a position to the geometric path, m.
    fn path_distance(&self, p: (f64, f64, f64)) -> f64 {
        self.inner.path_distance(&Vector3::new(p.0, p.1, p.2))
    }
}

/// Certificate for the closed-loop error dynamics, as a dict.
#[pyfunction]
#[pyo3(signature = (gains=None, with_integral=false))]
fn certify(py: Python<'_>, gains: Option<PyGains>, with_integral: bool) -> PyResult<Py<PyAny>> {
    let g = gains.unwrap_or_default().inner;
    let cert = manreg_core::certify(&g, with_integral, None).map_err(err)?;
    to_py(py, &cert.to_json().map_err(err)?)
}

/// `(f, phi, theta, mu_psi)` realizing the virtual acceleration `mu_p`.
#[pyfunction]
#[pyo3(signature = (mu_p, mu_psi, psi, params=None))]
fn feedback_linearize(
    mu_p: (f64, f64, f64),
    mu_psi: f64,
    psi: f64,
    params: Option<PyVehicleParams>,
) -> PyResult<(f64, f64, f64, f64)> {
    let p = params.unwrap_or_default().inner;
    let mu = VirtualInput {
        mu_p: Vector3::new(mu_p.0, mu_p.1, mu_p.2),
        mu_psi,
        clamped: false,
    };
    let u = manreg_core::feedback_linearize(&mu, psi, &p).map_err(err)?;
    Ok((u.f, u.phi, u.theta, u.mu_psi))
}

/// Time derivative `[v, a, psi_dot]` of the reduced state.
#[pyfunction]
#[pyo3(signature = (p, v, psi, u, params=None))]
fn reduced_dynamics(
    p: (f64, f64, f64),
    v: (f64, f64, f64),
    psi: f64,
    u: (f64, f64, f64, f64),
    params: Option<PyVehicleParams>,
) -> PyResult<Vec<f64>> {
    let params = params.unwrap_or_default().inner;
    let x = ReducedState::new(Vector3::new(p.0, p.1, p.2), Vector3::new(v.0, v.1, v.2), psi);
    let u = ControlInput::new(u.0, u.1, u.2, u.3);
    let dz = dynamics::reduced_dynamics(&x, &u, &DisturbanceInput::none(), &params).map_err(err)?;
    Ok(dz.as_slice().to_vec())
}

/// Projection `(tau_star, dist_sq)` of the state `z = [p, v, psi]` onto the
/// maneuver in the Lyapunov metric of `gains`.
#[pyfunction]
#[pyo3(signature = (z, maneuver, gains=None))]
fn project(z: Vec<f64>, maneuver: &PyManeuver, gains: Option<PyGains>) -> PyResult<(f64, f64)> {
    if z.len() != 7 {
        return Err(ManregError::new_err(format!("state must have 7 entries, got {}", z.len())));
    }
    let g = gains.unwrap_or_default().inner;
    let cert = manreg_core::certify(&g, false, None).map_err(err)?;
    let cfg = ProjectionConfig::from_certificate(&cert).map_err(err)?;
    let mut st = ProjectionState::default();
    let pr = manreg_core::project(&StateVector::from_column_slice(&z), &maneuver.inner, &cfg, &mut st)
        .map_err(err)?;
    Ok((pr.tau_star, pr.dist_sq))
}

/// Run a scenario given as JSON. Returns `(trace_csv, metrics)`.
#[pyfunction]
#[pyo3(signature = (config, mode=None))]
fn run_scenario(py: Python<'_>, config: &str, mode: Option<&str>) -> PyResult<(String, Py<PyAny>)> {
    let mut scenario = Scenario::from_json(config).map_err(err)?;
    if let Some(m) = mode {
        scenario = scenario.with_mode(parse_mode(m)?);
    }
    let out = py.detach(|| harness::run_scenario(&scenario)).map_err(err)?;
    let csv = out.trace.to_csv_string().map_err(err)?;
    let metrics = serde_json::to_string(&out.metrics).map_err(json_err)?;
    Ok((csv, to_py(py, &metrics)?))
}

/// Run a scenario under both controllers and return the summary dict.
#[pyfunction]
fn compare(py: Python<'_>, config: &str) -> PyResult<Py<PyAny>> {
    let scenario = Scenario::from_json(config).map_err(err)?;
    let cmp = py
        .detach(|| {
            harness::compare(
                &scenario.with_mode(ControllerMode::Tracking),
                &scenario.with_mode(ControllerMode::Regulation),
            )
        })
        .map_err(err)?;
    to_py(py, &serde_json::to_string(&cmp.summary).map_err(json_err)?)
}

fn parse_mode(m: &str) -> PyResult<ControllerMode> {
    match m {
        "tracking" => Ok(ControllerMode::Tracking),
        "regulation" => Ok(ControllerMode::Regulation),
        other => Err(ManregError::new_err(format!("unknown mode {other:?}"))),
    }
}

#[pymodule]
fn manreg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ManregError", m.py().get_type::<ManregError>())?;
    m.add("TRACE_HEADER", harness::trace::TRACE_HEADER.join(","))?;
    m.add_class::<PyVehicleParams>()?;
    m.add_class::<PyGains>()?;
    m.add_class::<PyManeuver>()?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(feedback_linearize, m)?)?;
    m.add_function(wrap_pyfunction!(reduced_dynamics, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
