//! Python bindings: solve f-E-MAJSAT instances and run QRSE from Python.
//!
//! Counts come back as Python integers and robustness values as
//! `fractions.Fraction`, so nothing is rounded.

use std::time::Duration;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use qrobust::bitvector::parse_mbv;
use qrobust::compiler::RelaxOrder;
use qrobust::counting::{solve_with_chance_bits, Mode, SolveConfig, SolveResult};
use qrobust::formula::parse_extended_dimacs;
use qrobust::qrse::{brute_force_qr as qr_oracle, parse_program, parse_rational, run_qrse, QrseConfig, Solver};

fn config(mode: &str, relax_count: usize, relax_order: &str, timeout: Option<f64>) -> PyResult<SolveConfig> {
    let mode: Mode = mode.parse().map_err(PyValueError::new_err)?;
    let order: RelaxOrder = relax_order.parse().map_err(PyValueError::new_err)?;
    let mut c = SolveConfig {
        mode,
        relax_count,
        relax_order: order,
        ..SolveConfig::default()
    };
    if let Some(t) = timeout {
        c = c.with_timeout(Duration::from_secs_f64(t));
    }
    Ok(c)
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn fraction<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("fractions")?.getattr("Fraction")?.call1((text,))
}

fn result_dict<'py>(py: Python<'py>, r: &SolveResult) -> PyResult<Bound<'py, PyDict>> {
    let d = to_py(py, &r.to_json())?.cast_into::<PyDict>()?;
    d.set_item("lower", r.lower.clone())?;
    d.set_item("upper", r.upper.clone())?;
    Ok(d)
}

fn run<T: Send + 'static>(py: Python<'_>, f: impl FnOnce() -> T + Send + 'static) -> T {
    py.detach(|| qrobust::with_large_stack(f))
}

/// Solves an extended DIMACS instance (`c p choice ... 0` / `c p chance ... 0`).
#[pyfunction]
#[pyo3(signature = (text, mode = "exact", relax_count = 8, relax_order = "bfs", timeout = None))]
fn solve_dimacs(
    py: Python<'_>,
    text: &str,
    mode: &str,
    relax_count: usize,
    relax_order: &str,
    timeout: Option<f64>,
) -> PyResult<Py<PyDict>> {
    let (cnf, p) = parse_extended_dimacs(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let c = config(mode, relax_count, relax_order, timeout)?;
    let r = run(py, move || solve_with_chance_bits(&cnf, &p, p.chance.len(), &c))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(result_dict(py, &r)?.unbind())
}

/// Solves a bitvector constraint file; the chance universe is the
/// uncontrolled input bits and `inputs` decodes the witness.
#[pyfunction]
#[pyo3(signature = (text, mode = "exact", relax_count = 8, relax_order = "bfs", timeout = None))]
fn solve_mbv(
    py: Python<'_>,
    text: &str,
    mode: &str,
    relax_count: usize,
    relax_order: &str,
    timeout: Option<f64>,
) -> PyResult<Py<PyDict>> {
    let file = parse_mbv(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let b = file.blast().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let c = config(mode, relax_count, relax_order, timeout)?;
    let (b, r) = run(py, move || {
        let r = solve_with_chance_bits(&b.cnf, &b.partition, b.uncontrolled_bits(), &c);
        (b, r)
    });
    let r = r.map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = result_dict(py, &r)?;
    d.set_item("inputs", b.decode_controlled(&r.witness))?;
    Ok(d.unbind())
}

/// Runs QRSE (or QRSE+ with `merge`) on a `.qimp` program.
#[pyfunction]
#[pyo3(signature = (text, threshold = "1", bound = 16, merge = false, all = false,
                    mode = "exact", relax_count = 8, relax_order = "bfs", timeout = None))]
#[allow(clippy::too_many_arguments)]
fn qrse(
    py: Python<'_>,
    text: &str,
    threshold: &str,
    bound: usize,
    merge: bool,
    all: bool,
    mode: &str,
    relax_count: usize,
    relax_order: &str,
    timeout: Option<f64>,
) -> PyResult<Py<PyDict>> {
    let p = parse_program(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let cfg = QrseConfig {
        bound,
        threshold: parse_rational(threshold).map_err(PyValueError::new_err)?,
        solver: Solver::Single(config(mode, relax_count, relax_order, timeout)?),
        merge,
        all,
    };
    let report = run(py, move || run_qrse(&p, &cfg)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = to_py(py, &report.to_json())?.cast_into::<PyDict>()?;
    if let Some(chi) = report.chi() {
        d.set_item("chi_lower", fraction(py, &chi.lower.to_string())?)?;
        d.set_item("chi_upper", fraction(py, &chi.upper.to_string())?)?;
    }
    Ok(d.unbind())
}

/// Exact robustness of a small program by running every input.
#[pyfunction]
fn brute_force_qr(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    let p = parse_program(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let q = qr_oracle(&p).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(fraction(py, &q.to_string())?.unbind())
}

#[pymodule]
#[pyo3(name = "qrobust")]
fn qrobust_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve_dimacs, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mbv, m)?)?;
    m.add_function(wrap_pyfunction!(qrse, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_qr, m)?)?;
    Ok(())
}
