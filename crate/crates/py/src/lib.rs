//! Python bindings: `import mvexergy`.
//!
//! Results come back as plain dicts and lists built from the same JSON the
//! command line prints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyModule;

use mvexergy_core::config::{Resolved, RunConfig};
use mvexergy_core::exergy::{self, percentages_of};
use mvexergy_core::sweep::{self, CycleTrace, SweepGrid};
use mvexergy_core::{EngineMaps, Error, FailureKind, MeanValueMaps};

create_exception!(
    mvexergy,
    MvexergyError,
    PyException,
    "Base class of model failures."
);
create_exception!(
    mvexergy,
    ValidationError,
    MvexergyError,
    "Malformed input or configuration."
);
create_exception!(
    mvexergy,
    DomainError,
    MvexergyError,
    "Query outside the calibrated domain."
);
create_exception!(
    mvexergy,
    NumericalError,
    MvexergyError,
    "Integration or convergence failure."
);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.kind() {
        FailureKind::Validation => ValidationError::new_err(msg),
        FailureKind::Domain => DomainError::new_err(msg),
        FailureKind::Numerical => NumericalError::new_err(msg),
    }
}

fn core<T, E: Into<Error>>(r: Result<T, E>) -> PyResult<T> {
    r.map_err(|e| to_py(e.into()))
}

fn to_object<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = core(serde_json::to_string(v))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Operating point in SI units.
#[pyclass(frozen, from_py_object, module = "mvexergy")]
#[derive(Clone, Copy)]
struct OperatingPoint(exergy::OperatingPoint);

#[pymethods]
impl OperatingPoint {
    #[new]
    fn new(omega: f64, torque: f64) -> Self {
        OperatingPoint(exergy::OperatingPoint::new(omega, torque))
    }

    #[staticmethod]
    fn from_rpm(speed_rpm: f64, torque: f64) -> Self {
        OperatingPoint(exergy::OperatingPoint::from_rpm(speed_rpm, torque))
    }

    /// Crankshaft speed [rad/s].
    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega
    }

    /// Brake torque [Nm].
    #[getter]
    fn torque(&self) -> f64 {
        self.0.torque
    }

    #[getter]
    fn speed_rpm(&self) -> f64 {
        self.0.speed_rpm()
    }

    /// Brake power [W].
    #[getter]
    fn power(&self) -> f64 {
        self.0.power()
    }

    fn __repr__(&self) -> String {
        format!(
            "OperatingPoint(omega={}, torque={})",
            self.0.omega, self.0.torque
        )
    }
}

/// Calibrated engine with lazily generated mean-value maps.
#[pyclass(module = "mvexergy")]
struct Engine {
    cfg: Resolved,
    maps: EngineMaps,
    mean: Mutex<BTreeMap<u64, MeanValueMaps>>,
}

impl Engine {
    fn mean_maps(&self, x_egr: f64) -> Result<MeanValueMaps, Error> {
        let key = x_egr.to_bits();
        if let Some(m) = self.mean.lock().expect("cache lock").get(&key) {
            return Ok(m.clone());
        }
        let m = sweep::mean_maps_for(&self.cfg.model, &self.maps, &[x_egr], 0)?
            .pop()
            .expect("one map set per rate");
        self.mean.lock().expect("cache lock").insert(key, m.clone());
        Ok(m)
    }

    /// Reference state for `t0`, with both sweep axes checked against their bounds.
    fn reference(&self, t0: Option<f64>, x_egr: f64) -> PyResult<mvexergy_core::ReferenceState> {
        let env = match t0 {
            Some(t) => self.cfg.reference.with_temperature(t),
            None => self.cfg.reference,
        };
        core(SweepGrid::new(vec![env.temperature], vec![x_egr]))?;
        Ok(env)
    }
}

#[derive(serde::Serialize)]
struct BalanceOut {
    state: exergy::PointState,
    rates: mvexergy_core::ExergyRates,
    breakdown: mvexergy_core::PercentBreakdown,
}

#[pymethods]
impl Engine {
    /// Default calibration, or the JSON run configuration at `config`.
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<PathBuf>) -> PyResult<Self> {
        let cfg = match config {
            Some(path) => {
                let (cfg, raw) = core(RunConfig::load(&path))?;
                core(cfg.resolve(path.parent().unwrap_or(Path::new(".")), &raw))?
            }
            None => Resolved::defaults(),
        };
        let maps = core(cfg.engine_maps())?;
        Ok(Engine {
            cfg,
            maps,
            mean: Mutex::new(BTreeMap::new()),
        })
    }

    /// SHA-256 of the configuration text.
    #[getter]
    fn config_hash(&self) -> String {
        self.cfg.hash.clone()
    }

    /// Fuel rate [kg/s] and exhaust temperature [K] at a point.
    fn engine_maps_at(&self, op: &OperatingPoint) -> PyResult<(f64, f64)> {
        Ok((
            core(self.maps.fuel_rate_at(&op.0))?,
            core(self.maps.exhaust_temperature_at(&op.0))?,
        ))
    }

    /// Eight-term balance at one point: `{"state", "rates", "breakdown"}`.
    #[pyo3(signature = (op, x_egr=0.2, t0=None))]
    fn balance(
        &self,
        py: Python<'_>,
        op: &OperatingPoint,
        x_egr: f64,
        t0: Option<f64>,
    ) -> PyResult<Py<PyAny>> {
        let env = self.reference(t0, x_egr)?;
        let op = op.0;
        let out = py.detach(|| -> Result<BalanceOut, Error> {
            let mm = self.mean_maps(x_egr)?;
            let pb = exergy::balance_detail(&op, &env, &self.cfg.model, &self.maps, &mm)?;
            Ok(BalanceOut {
                state: pb.state,
                rates: pb.rates,
                breakdown: percentages_of(&pb.rates)?,
            })
        });
        to_object(py, &core(out)?)
    }

    /// Integrated breakdown of a trace CSV: `{"totals", "breakdown"}`.
    #[pyo3(signature = (trace, x_egr=0.2, t0=None))]
    fn cycle(
        &self,
        py: Python<'_>,
        trace: PathBuf,
        x_egr: f64,
        t0: Option<f64>,
    ) -> PyResult<Py<PyAny>> {
        let env = self.reference(t0, x_egr)?;
        let out = py.detach(|| -> Result<_, Error> {
            let tr = CycleTrace::load(&trace)?;
            let mm = self.mean_maps(x_egr)?;
            Ok(sweep::evaluate_cycle(
                &tr,
                &env,
                &self.cfg.model,
                &self.maps,
                &mm,
            )?)
        });
        to_object(py, &core(out)?)
    }

    /// Sweep over reference temperature and EGR rate.
    ///
    /// Uses the trace CSVs in `cycles_dir`, or the built-in demo cycles.
    /// Returns `{"result", "trends"}`; trends are `None` on a degenerate grid.
    #[pyo3(signature = (t0_list=None, egr_list=None, cycles_dir=None, jobs=0))]
    fn sweep(
        &self,
        py: Python<'_>,
        t0_list: Option<Vec<f64>>,
        egr_list: Option<Vec<f64>>,
        cycles_dir: Option<PathBuf>,
        jobs: usize,
    ) -> PyResult<Py<PyAny>> {
        let mut grid: SweepGrid = self.cfg.grid.clone();
        if let Some(t) = t0_list {
            grid.t0 = t;
        }
        if let Some(x) = egr_list {
            grid.x_egr = x;
        }
        let out = py.detach(|| -> Result<_, Error> {
            let cycles = match &cycles_dir {
                Some(d) => sweep::load_cycles(d)?,
                None => sweep::demo_cycles(),
            };
            grid.validate()?;
            let mean = grid
                .x_egr
                .iter()
                .map(|&x| self.mean_maps(x))
                .collect::<Result<Vec<_>, _>>()?;
            let result = sweep::run_sweep_with_maps(
                &cycles,
                &grid,
                &self.cfg.reference,
                &self.cfg.model,
                &self.maps,
                &mean,
                jobs,
            )?;
            let trends = sweep::trend_report(&result).ok();
            Ok(serde_json::json!({ "result": result, "trends": trends }))
        });
        to_object(py, &core(out)?)
    }

    /// Long-format CSV of a sweep, as written by the command line.
    #[pyo3(signature = (t0_list=None, egr_list=None, jobs=0))]
    fn sweep_csv(
        &self,
        py: Python<'_>,
        t0_list: Option<Vec<f64>>,
        egr_list: Option<Vec<f64>>,
        jobs: usize,
    ) -> PyResult<String> {
        let grid = core(SweepGrid::new(
            t0_list.unwrap_or_else(|| self.cfg.grid.t0.clone()),
            egr_list.unwrap_or_else(|| self.cfg.grid.x_egr.clone()),
        ))?;
        let out = py.detach(|| -> Result<String, Error> {
            let mean = grid
                .x_egr
                .iter()
                .map(|&x| self.mean_maps(x))
                .collect::<Result<Vec<_>, _>>()?;
            let r = sweep::run_sweep_with_maps(
                &sweep::demo_cycles(),
                &grid,
                &self.cfg.reference,
                &self.cfg.model,
                &self.maps,
                &mean,
                jobs,
            )?;
            Ok(r.to_csv_string())
        });
        core(out)
    }

    /// Writes the fuel-rate and exhaust-temperature maps as CSV.
    fn save_maps(&self, fuel_csv: PathBuf, exhaust_csv: PathBuf) -> PyResult<()> {
        core(self.maps.save(&fuel_csv, &exhaust_csv))
    }
}

/// Chemical-exergy multiplier of `C_x H_y` on `LHV·ṁ_f`.
#[pyfunction]
fn fuel_exergy_multiplier(x: f64, y: f64) -> PyResult<f64> {
    let fuel = core(mvexergy_core::FuelThermo::new(x, y, 42.5e6))?;
    Ok(exergy::fuel_exergy_multiplier(&fuel))
}

/// Writes the four demo traces into `out_dir`; returns their paths.
#[pyfunction]
fn write_demo_cycles(out_dir: PathBuf) -> PyResult<Vec<PathBuf>> {
    core(
        std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
            path: out_dir.display().to_string(),
            source,
        }),
    )?;
    sweep::demo_cycles()
        .into_iter()
        .map(|c| {
            let path = out_dir.join(format!("{}.csv", c.name));
            core(c.save(&path))?;
            Ok(path)
        })
        .collect()
}

#[pymodule]
fn mvexergy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<OperatingPoint>()?;
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(fuel_exergy_multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(write_demo_cycles, m)?)?;
    let py = m.py();
    m.add("MvexergyError", py.get_type::<MvexergyError>())?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("DomainError", py.get_type::<DomainError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    Ok(())
}
