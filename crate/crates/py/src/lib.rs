//! Python bindings: the main dq types, reference-frame transforms,
//! certificate evaluation, the closed-form safety-filter QP, scenario runs
//! and the sampling verifier, exposed as the `gfmsf` module.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gfmsf_core::frames;
use gfmsf_core::plant::{NonStationaryState, StationaryState};
use gfmsf_core::runner;
use gfmsf_core::sfilter::{self, CertificateSet, Halfplane};
use gfmsf_core::verifier::{check_abc_bound as abc_bound, OperationalRegion, Verifier};

/// A (d, q) per-unit phasor.
#[pyclass(name = "DqVector", skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyDqVector {
    inner: frames::DqVector,
}

#[pymethods]
impl PyDqVector {
    #[new]
    fn new(d: f64, q: f64) -> Self {
        Self {
            inner: frames::DqVector::new(d, q),
        }
    }

    #[getter]
    fn d(&self) -> f64 {
        self.inner.d
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q
    }

    fn amplitude(&self) -> f64 {
        self.inner.amplitude()
    }

    /// Rotates the phasor by `theta` radians.
    fn rotate(&self, theta: f64) -> PyDqVector {
        PyDqVector {
            inner: self.inner.rotate(theta),
        }
    }

    fn __repr__(&self) -> String {
        format!("DqVector(d={}, q={})", self.inner.d, self.inner.q)
    }
}

/// Inverse Park transform: dq0 quantities to instantaneous phase values.
#[pyfunction]
fn park_inverse(theta: f64, d: f64, q: f64, zero: f64) -> (f64, f64, f64) {
    let out = frames::park_inverse(theta, frames::Dq0Vector::new(d, q, zero));
    (out[0], out[1], out[2])
}

/// Forward Park transform: instantaneous phase values to dq0.
#[pyfunction]
fn park_forward(theta: f64, a: f64, b: f64, c: f64) -> (f64, f64, f64) {
    let out = frames::park_forward(theta, [a, b, c]);
    (out.d, out.q, out.zero)
}

/// Evaluates the shipped barrier and Lyapunov certificates at a state
/// `(i_d, i_q, dv_d, dv_q, ir_d, ir_q, i_0)`; returns `(B, V)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn eval_certificates(
    i_d: f64,
    i_q: f64,
    dv_d: f64,
    dv_q: f64,
    ir_d: f64,
    ir_q: f64,
    i_0: f64,
) -> (f64, f64) {
    let certs = CertificateSet::builtin();
    let x = NonStationaryState::new(
        frames::DqVector::new(i_d, i_q),
        frames::DqVector::new(dv_d, dv_q),
    );
    let z = StationaryState::new(frames::DqVector::new(ir_d, ir_q), i_0);
    (certs.barrier.eval(&x, &z), certs.lyapunov.eval(&x, &z))
}

/// Result of the two-constraint quadratic program.
#[pyclass(name = "QpResult")]
struct PyQpResult {
    #[pyo3(get)]
    u: (f64, f64),
    #[pyo3(get)]
    active_set: String,
    #[pyo3(get)]
    objective: f64,
}

/// Minimizes `||u_n - u||^2` subject to `a·u <= b` rows given as
/// `(a_d, a_q, b)` tuples.
#[pyfunction]
#[pyo3(signature = (u_n, cbf, clf=None))]
fn qp_solve(
    u_n: (f64, f64),
    cbf: (f64, f64, f64),
    clf: Option<(f64, f64, f64)>,
) -> PyResult<PyQpResult> {
    let row = |(a_d, a_q, b): (f64, f64, f64)| Halfplane {
        a: frames::DqVector::new(a_d, a_q),
        b,
    };
    let res = sfilter::qp_solve(
        frames::DqVector::new(u_n.0, u_n.1),
        row(cbf),
        clf.map(row),
    )
    .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyQpResult {
        u: (res.u.d, res.u.q),
        active_set: format!("{:?}", res.active_set),
        objective: res.objective,
    })
}

/// A finished scenario: scalar metrics plus the full trace.
#[pyclass(name = "ScenarioResult")]
struct PyScenarioResult {
    trace: runner::SimTrace,
    #[pyo3(get)]
    max_overshoot: f64,
    #[pyo3(get)]
    max_dv: f64,
    #[pyo3(get)]
    int_dv: f64,
    #[pyo3(get)]
    recovery_time: Option<f64>,
    #[pyo3(get)]
    stable: bool,
}

#[pymethods]
impl PyScenarioResult {
    fn __len__(&self) -> usize {
        self.trace.records.len()
    }

    /// The trace in the CSV wire format.
    fn to_csv(&self) -> String {
        runner::format_trace(&self.trace)
    }

    /// One trace column by CSV header name.
    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let pick: fn(&runner::TraceRecord) -> f64 = match name {
            "t" => |r| r.t,
            "i_d" => |r| r.i_d,
            "i_q" => |r| r.i_q,
            "i_norm" => |r| r.i_norm,
            "i_phase_max" => |r| r.i_phase_max,
            "v_cd" => |r| r.v_cd,
            "v_cq" => |r| r.v_cq,
            "dv_d" => |r| r.dv_d,
            "dv_q" => |r| r.dv_q,
            "omega_pll" => |r| r.omega_pll,
            "p" => |r| r.p,
            "q" => |r| r.q,
            "B" => |r| r.barrier,
            "V" => |r| r.lyapunov,
            other => {
                return Err(PyValueError::new_err(format!("unknown column {other:?}")))
            }
        };
        Ok(self.trace.records.iter().map(pick).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "ScenarioResult(records={}, max_overshoot={:.4}, max_dv={:.4}, stable={})",
            self.trace.records.len(),
            self.max_overshoot,
            self.max_dv,
            self.stable
        )
    }
}

/// Runs one scenario from configuration text (same format as the CLI's
/// config files; an empty string runs the defaults).
#[pyfunction]
fn run_scenario(config: &str) -> PyResult<PyScenarioResult> {
    let cfg = runner::parse_config(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (trace, metrics) =
        runner::run_scenario(&cfg).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyScenarioResult {
        trace,
        max_overshoot: metrics.max_overshoot,
        max_dv: metrics.max_dv,
        int_dv: metrics.int_dv,
        recovery_time: metrics.recovery_time,
        stable: metrics.stable,
    })
}

/// Runs the paired safety-filter comparison and returns the two recovery
/// times `(with_clf, without_clf)` in seconds.
#[pyfunction]
fn compare_clf(config: &str) -> PyResult<(Option<f64>, Option<f64>)> {
    let cfg = runner::parse_config(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let cmp = runner::compare_clf(&cfg).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((cmp.with_clf.1.recovery_time, cmp.without_clf.1.recovery_time))
}

/// Runs the four certificate checks over `samples` operational-region
/// samples. Returns `(condition, samples_tested, violations)` triples.
#[pyfunction]
#[pyo3(signature = (samples=10_000, seed=1, band=1e-3, paper_sign=false))]
fn verify(samples: usize, seed: u64, band: f64, paper_sign: bool) -> Vec<(String, usize, usize)> {
    let cfg = runner::ScenarioConfig::default();
    let region = OperationalRegion {
        paper_sign,
        ..cfg.region()
    };
    let verifier = Verifier::new(
        CertificateSet::builtin(),
        cfg.filter_params(),
        cfg.certificate_model(),
        region,
    );
    [
        verifier.check_cbf_boundary(samples, seed, band),
        verifier.check_clf_region(samples, seed, band),
        verifier.check_nominal_invariance(samples, seed, band),
        verifier.check_containment(samples, seed),
    ]
    .into_iter()
    .map(|r| (r.condition.to_string(), r.samples_tested, r.violations.len()))
    .collect()
}

/// Worst instantaneous phase-current amplitude over a brute-force angle
/// grid, for a dq amplitude and zero-sequence component.
#[pyfunction]
fn check_abc_bound(n_theta: usize, n_phi: usize, i_hat: f64, i_0: f64) -> f64 {
    abc_bound(n_theta, n_phi, i_hat, i_0)
}

#[pymodule]
fn gfmsf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDqVector>()?;
    m.add_class::<PyQpResult>()?;
    m.add_class::<PyScenarioResult>()?;
    m.add_function(wrap_pyfunction!(park_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(park_forward, m)?)?;
    m.add_function(wrap_pyfunction!(eval_certificates, m)?)?;
    m.add_function(wrap_pyfunction!(qp_solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(compare_clf, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(check_abc_bound, m)?)?;
    Ok(())
}
