//! Drive-cycle evaluation and the ambient-temperature × EGR-rate sweep.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cylinder::{generate_maps, CylinderError, MeanValueMaps};
use crate::exergy::{
    balance, integrate, percentages, ExergyError, ExergyRates, ExergyTotals, OperatingPoint,
    PercentBreakdown, Term, TermShares,
};
use crate::maps::{rad_s_to_rpm, EngineMaps};
use crate::mixture::{ReferenceState, EGR_MAX};
use crate::model::EngineModel;
use crate::FailureKind;

pub const T0_MIN: f64 = 233.15;
pub const T0_MAX: f64 = 333.15;
/// Relative tolerance on timestep uniformity.
pub const DT_TOL: f64 = 1e-9;
/// Band inside which a term counts as flat [percentage points].
pub const FLAT_BAND_PP: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("trace '{name}': {msg}")]
    Trace { name: String, msg: String },
    #[error("trace '{name}' line {line}: {msg}")]
    TraceCsv {
        name: String,
        line: u64,
        msg: String,
    },
    #[error("invalid sweep grid: {0}")]
    Grid(String),
    #[error("cycle '{cycle}' at t = {t} s: {source}")]
    Sample {
        cycle: String,
        t: f64,
        #[source]
        source: ExergyError,
    },
    #[error("cycle '{cycle}': {source}")]
    Cycle {
        cycle: String,
        #[source]
        source: ExergyError,
    },
    #[error("no mean-value maps for x_EGR = {0}")]
    MissingMaps(f64),
    #[error("statistics need at least 2 cycles at (T0 = {t0}, x_EGR = {x_egr}), found {found}")]
    InsufficientCycles { t0: f64, x_egr: f64, found: usize },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Cylinder(#[from] CylinderError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl SweepError {
    pub fn kind(&self) -> FailureKind {
        match self {
            SweepError::Sample { source, .. } | SweepError::Cycle { source, .. } => {
                crate::exergy_kind(source)
            }
            SweepError::Cylinder(e) => crate::cylinder_kind(e),
            SweepError::Pool(_) => FailureKind::Numerical,
            _ => FailureKind::Validation,
        }
    }
}

/// One row of a trace file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t_s: f64,
    pub omega_radps: f64,
    #[serde(rename = "torque_Nm")]
    pub torque_nm: f64,
}

/// Uniformly sampled engine operating trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTrace {
    pub name: String,
    pub samples: Vec<TraceSample>,
}

impl CycleTrace {
    pub fn new(name: impl Into<String>, samples: Vec<TraceSample>) -> Result<Self, SweepError> {
        let trace = CycleTrace {
            name: name.into(),
            samples,
        };
        trace.validate()?;
        Ok(trace)
    }

    /// Constant operating point held for `horizon` seconds at step `dt`.
    pub fn constant(
        name: impl Into<String>,
        op: OperatingPoint,
        horizon: f64,
        dt: f64,
    ) -> Result<Self, SweepError> {
        let n = (horizon / dt).round() as usize;
        let samples = (0..=n)
            .map(|k| TraceSample {
                t_s: k as f64 * dt,
                omega_radps: op.omega,
                torque_nm: op.torque,
            })
            .collect();
        Self::new(name, samples)
    }

    fn fail(&self, msg: String) -> SweepError {
        SweepError::Trace {
            name: self.name.clone(),
            msg,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.samples.len() < 2 {
            return Err(self.fail("needs at least two samples".into()));
        }
        let dt = self.samples[1].t_s - self.samples[0].t_s;
        if !(dt > 0.0) {
            return Err(self.fail(format!("timestep {dt} s is not positive")));
        }
        for (k, s) in self.samples.iter().enumerate() {
            if !(s.t_s.is_finite() && s.omega_radps.is_finite() && s.torque_nm.is_finite()) {
                return Err(self.fail(format!("non-finite value in sample {k}")));
            }
            if s.omega_radps < 0.0 {
                return Err(self.fail(format!("negative speed at t = {} s", s.t_s)));
            }
            if k > 0 {
                let step = s.t_s - self.samples[k - 1].t_s;
                if !(step > 0.0) {
                    return Err(self.fail(format!("time not increasing at t = {} s", s.t_s)));
                }
                if (step - dt).abs() > DT_TOL * dt.max(1.0) {
                    return Err(self.fail(format!(
                        "non-uniform timestep {step} s at t = {} s (expected {dt} s)",
                        s.t_s
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.samples[1].t_s - self.samples[0].t_s
    }

    pub fn horizon(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t_s) - self.samples[0].t_s
    }

    /// Appends a copy of itself, continuing the time axis.
    pub fn repeated(&self) -> Self {
        let shift = self.horizon() + self.dt();
        let mut samples = self.samples.clone();
        samples.extend(self.samples.iter().map(|s| TraceSample {
            t_s: s.t_s + shift,
            ..*s
        }));
        CycleTrace {
            name: self.name.clone(),
            samples,
        }
    }

    pub fn read_csv<R: Read>(name: &str, input: R) -> Result<Self, SweepError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = rdr.headers().map_err(|e| SweepError::TraceCsv {
            name: name.into(),
            line: 1,
            msg: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != ["t_s", "omega_radps", "torque_Nm"] {
            return Err(SweepError::TraceCsv {
                name: name.into(),
                line: 1,
                msg: "header must be t_s,omega_radps,torque_Nm".into(),
            });
        }
        let mut samples = Vec::new();
        for rec in rdr.deserialize::<TraceSample>() {
            let s = rec.map_err(|e| SweepError::TraceCsv {
                name: name.into(),
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            samples.push(s);
        }
        Self::new(name, samples)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SweepError> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.samples {
            w.serialize(s).map_err(|e| self.fail(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a trace; the file stem becomes the cycle name.
    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cycle".into());
        Self::read_csv(&name, std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SweepError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Loads every `*.csv` trace in a directory, sorted by file name.
pub fn load_cycles(dir: &Path) -> Result<Vec<CycleTrace>, SweepError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| CycleTrace::load(p)).collect()
}

/// Shape of one synthetic demo cycle.
struct DemoShape {
    name: &'static str,
    duration_s: usize,
    rpm_mean: f64,
    rpm_swing: f64,
    torque_mean: f64,
    torque_swing: f64,
    /// Engine on for this share of each on/off period.
    duty: f64,
    period_s: f64,
}

const DEMO_SHAPES: [DemoShape; 4] = [
    DemoShape {
        name: "highway",
        duration_s: 1200,
        rpm_mean: 2300.0,
        rpm_swing: 350.0,
        torque_mean: 560.0,
        torque_swing: 120.0,
        duty: 0.9,
        period_s: 400.0,
    },
    DemoShape {
        name: "mixed",
        duration_s: 1500,
        rpm_mean: 1900.0,
        rpm_swing: 450.0,
        torque_mean: 480.0,
        torque_swing: 160.0,
        duty: 0.7,
        period_s: 250.0,
    },
    DemoShape {
        name: "rural",
        duration_s: 1400,
        rpm_mean: 1500.0,
        rpm_swing: 300.0,
        torque_mean: 520.0,
        torque_swing: 140.0,
        duty: 0.6,
        period_s: 300.0,
    },
    DemoShape {
        name: "urban",
        duration_s: 1800,
        rpm_mean: 1350.0,
        rpm_swing: 250.0,
        torque_mean: 420.0,
        torque_swing: 150.0,
        duty: 0.45,
        period_s: 180.0,
    },
];

/// Four deterministic synthetic cycles with distinct speed/load statistics,
/// sampled at 1 s. Off periods are encoded as zero speed and torque.
pub fn demo_cycles() -> Vec<CycleTrace> {
    DEMO_SHAPES
        .iter()
        .map(|d| {
            let samples = (0..=d.duration_s)
                .map(|k| {
                    let t = k as f64;
                    let on = (t / d.period_s).fract() < d.duty;
                    let (rpm, torque) = if on {
                        let a = 2.0 * PI * t;
                        (
                            d.rpm_mean
                                + d.rpm_swing * (0.7 * (a / 97.0).sin() + 0.3 * (a / 23.0).sin()),
                            d.torque_mean
                                + d.torque_swing
                                    * (0.6 * (a / 61.0).sin() + 0.4 * (a / 17.0 + 1.0).sin()),
                        )
                    } else {
                        (0.0, 0.0)
                    };
                    TraceSample {
                        t_s: t,
                        omega_radps: crate::maps::rpm_to_rad_s(rpm),
                        torque_nm: torque,
                    }
                })
                .collect();
            CycleTrace {
                name: d.name.to_string(),
                samples,
            }
        })
        .collect()
}

/// Per-cycle totals and shares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleBreakdown {
    pub totals: ExergyTotals,
    pub breakdown: PercentBreakdown,
}

/// Integrates the balance over a trace.
///
/// Samples with non-positive torque or speed below the map's idle speed
/// count as engine off and contribute zero to every term.
pub fn evaluate_cycle(
    trace: &CycleTrace,
    env: &ReferenceState,
    model: &EngineModel,
    maps: &EngineMaps,
    mean_maps: &MeanValueMaps,
) -> Result<CycleBreakdown, SweepError> {
    trace.validate()?;
    let idle_rpm = maps.grid().speeds_rpm[0];
    let rates: Vec<ExergyRates> = trace
        .samples
        .iter()
        .map(|s| {
            if s.torque_nm <= 0.0 || rad_s_to_rpm(s.omega_radps) < idle_rpm {
                return Ok(ExergyRates::default());
            }
            let op = OperatingPoint::new(s.omega_radps, s.torque_nm);
            balance(&op, env, model, maps, mean_maps).map_err(|source| SweepError::Sample {
                cycle: trace.name.clone(),
                t: s.t_s,
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    let wrap = |source| SweepError::Cycle {
        cycle: trace.name.clone(),
        source,
    };
    let totals = integrate(&rates, trace.dt()).map_err(wrap)?;
    let breakdown = percentages(&totals).map_err(wrap)?;
    Ok(CycleBreakdown { totals, breakdown })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub t0: Vec<f64>,
    pub x_egr: Vec<f64>,
}

/// The study grid: 6 ambient temperatures × 4 EGR rates.
impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            t0: vec![263.15, 273.15, 283.15, 293.15, 303.15, 313.15],
            x_egr: vec![0.0, 0.1, 0.2, 0.3],
        }
    }
}

impl SweepGrid {
    pub fn new(t0: Vec<f64>, x_egr: Vec<f64>) -> Result<Self, SweepError> {
        let g = SweepGrid { t0, x_egr };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let check = |name: &str, v: &[f64], lo: f64, hi: f64, hi_open: bool| {
            if v.is_empty() {
                return Err(SweepError::Grid(format!("{name} list is empty")));
            }
            if v.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(SweepError::Grid(format!(
                    "{name} list must be strictly increasing"
                )));
            }
            for &x in v {
                let above = if hi_open { x >= hi } else { x > hi };
                if !(x >= lo) || above {
                    return Err(SweepError::Grid(format!(
                        "{name} value {x} outside [{lo}, {hi}{}",
                        if hi_open { ")" } else { "]" }
                    )));
                }
            }
            Ok(())
        };
        check("T0", &self.t0, T0_MIN, T0_MAX, false)?;
        check("x_EGR", &self.x_egr, 0.0, EGR_MAX, true)
    }

    pub fn len(&self) -> usize {
        self.t0.len() * self.x_egr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub cycle: String,
    pub t0: f64,
    pub x_egr: f64,
    pub totals: ExergyTotals,
    pub breakdown: PercentBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the calibration, synthetic-map tables and grid.
    pub calibration_hash: String,
    pub map_files: Vec<String>,
}

/// The full (cycle, T0, x_EGR) cube in cycle-major, T0, then x_EGR order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cycles: Vec<String>,
    pub grid: SweepGrid,
    pub entries: Vec<SweepEntry>,
    pub provenance: Provenance,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl SweepResult {
    pub fn get(&self, cycle: &str, t0: f64, x_egr: f64) -> Option<&SweepEntry> {
        self.entries
            .iter()
            .find(|e| e.cycle == cycle && same(e.t0, t0) && same(e.x_egr, x_egr))
    }

    /// Long-format CSV, one row per (combination, term).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SweepError> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| SweepError::Io(std::io::Error::other(e));
        w.write_record(["cycle", "T0_K", "xEGR", "term", "percent", "signed_value_J"])
            .map_err(csv_err)?;
        for e in &self.entries {
            for term in Term::ALL {
                w.write_record([
                    e.cycle.clone(),
                    e.t0.to_string(),
                    e.x_egr.to_string(),
                    term.name().to_string(),
                    e.breakdown.get(term).to_string(),
                    e.totals.terms.get(term).to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

/// Hash identifying a calibration: model parameters, map tables and grid.
pub fn calibration_hash(model: &EngineModel, maps: &EngineMaps, grid: &SweepGrid) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(model).expect("model serializes"));
    h.update(serde_json::to_vec(&model.thermo).expect("table serializes"));
    h.update(serde_json::to_vec(maps).expect("maps serialize"));
    h.update(serde_json::to_vec(grid).expect("grid serializes"));
    hex::encode(h.finalize())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, SweepError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))
}

/// Mean-value maps for every EGR rate of the grid, on the maps' own lattice.
pub fn mean_maps_for(
    model: &EngineModel,
    maps: &EngineMaps,
    x_egr: &[f64],
    jobs: usize,
) -> Result<Vec<MeanValueMaps>, SweepError> {
    let env = ReferenceState::default();
    pool(jobs)?.install(|| {
        x_egr
            .iter()
            .map(|&x| generate_maps(model, maps.grid(), x, maps, &env).map_err(SweepError::from))
            .collect()
    })
}

/// Full sweep; generates the mean-value maps once per EGR rate.
///
/// `jobs = 0` uses all cores. Output is identical for any `jobs`.
pub fn run_sweep(
    cycles: &[CycleTrace],
    grid: &SweepGrid,
    env: &ReferenceState,
    model: &EngineModel,
    maps: &EngineMaps,
    jobs: usize,
) -> Result<SweepResult, SweepError> {
    grid.validate()?;
    let mean_maps = mean_maps_for(model, maps, &grid.x_egr, jobs)?;
    run_sweep_with_maps(cycles, grid, env, model, maps, &mean_maps, jobs)
}

/// Sweep over precomputed mean-value maps.
pub fn run_sweep_with_maps(
    cycles: &[CycleTrace],
    grid: &SweepGrid,
    env: &ReferenceState,
    model: &EngineModel,
    maps: &EngineMaps,
    mean_maps: &[MeanValueMaps],
    jobs: usize,
) -> Result<SweepResult, SweepError> {
    grid.validate()?;
    if cycles.is_empty() {
        return Err(SweepError::Grid("no cycles to evaluate".into()));
    }
    let maps_for = |x: f64| {
        mean_maps
            .iter()
            .find(|m| same(m.x_egr, x))
            .ok_or(SweepError::MissingMaps(x))
    };
    let mut combos = Vec::with_capacity(cycles.len() * grid.len());
    for c in cycles {
        for &t0 in &grid.t0 {
            for &x in &grid.x_egr {
                combos.push((c, t0, x, maps_for(x)?));
            }
        }
    }
    let entries: Vec<SweepEntry> = pool(jobs)?.install(|| {
        combos
            .par_iter()
            .map(|&(c, t0, x, mm)| {
                let env = env.with_temperature(t0);
                evaluate_cycle(c, &env, model, maps, mm).map(|cb| SweepEntry {
                    cycle: c.name.clone(),
                    t0,
                    x_egr: x,
                    totals: cb.totals,
                    breakdown: cb.breakdown,
                })
            })
            .collect::<Result<_, _>>()
    })?;
    debug_assert_eq!(entries.len(), cycles.len() * grid.len());
    Ok(SweepResult {
        cycles: cycles.iter().map(|c| c.name.clone()).collect(),
        grid: grid.clone(),
        entries,
        provenance: Provenance {
            calibration_hash: calibration_hash(model, maps, grid),
            map_files: Vec::new(),
        },
    })
}

/// Cross-cycle mean and population standard deviation per term [%].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermStats {
    pub cycles: usize,
    pub mean: TermShares,
    pub sd: TermShares,
}

pub fn cycle_stats(result: &SweepResult, t0: f64, x_egr: f64) -> Result<TermStats, SweepError> {
    let picked: Vec<&SweepEntry> = result
        .entries
        .iter()
        .filter(|e| same(e.t0, t0) && same(e.x_egr, x_egr))
        .collect();
    if picked.len() < 2 {
        return Err(SweepError::InsufficientCycles {
            t0,
            x_egr,
            found: picked.len(),
        });
    }
    let n = picked.len() as f64;
    let mean = TermShares::from_fn(|t| picked.iter().map(|e| e.breakdown.get(t)).sum::<f64>() / n);
    let sd = TermShares::from_fn(|t| {
        let m = mean.get(t);
        (picked
            .iter()
            .map(|e| (e.breakdown.get(t) - m).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    });
    Ok(TermStats {
        cycles: picked.len(),
        mean,
        sd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    T0,
    Egr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    Flat,
    Mixed,
}

/// Direction of one term along one axis for one cycle.
///
/// A term is increasing (decreasing) when it rises (falls) strictly between
/// neighbouring grid points on every line of the other axis. Otherwise it is
/// flat when every line stays within [`FLAT_BAND_PP`], else mixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub cycle: String,
    pub term: Term,
    pub axis: Axis,
    pub direction: Direction,
    /// Largest spread along the axis over the lines of the other axis [pp].
    pub range_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub trends: Vec<Trend>,
    /// Per cycle: spread of work% + friction% over the whole grid [pp].
    pub work_friction_range_pp: BTreeMap<String, f64>,
    /// Per cycle: whether that spread is inside the flat band.
    pub work_friction_flat: BTreeMap<String, bool>,
}

impl TrendReport {
    pub fn direction(&self, cycle: &str, term: Term, axis: Axis) -> Option<Direction> {
        self.trends
            .iter()
            .find(|t| t.cycle == cycle && t.term == term && t.axis == axis)
            .map(|t| t.direction)
    }
}

fn classify(lines: &[Vec<f64>]) -> (Direction, f64) {
    let range = lines
        .iter()
        .map(|l| {
            let (lo, hi) = l
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            hi - lo
        })
        .fold(0.0, f64::max);
    let all = |f: fn(f64, f64) -> bool| lines.iter().all(|l| l.windows(2).all(|w| f(w[0], w[1])));
    let dir = if all(|a, b| b > a) {
        Direction::Increasing
    } else if all(|a, b| b < a) {
        Direction::Decreasing
    } else if range < FLAT_BAND_PP {
        Direction::Flat
    } else {
        Direction::Mixed
    };
    (dir, range)
}

pub fn trend_report(result: &SweepResult) -> Result<TrendReport, SweepError> {
    let g = &result.grid;
    if g.t0.len() < 2 || g.x_egr.len() < 2 {
        return Err(SweepError::Grid(
            "trend report needs at least two points on each axis".into(),
        ));
    }
    let entry = |c: &str, t0: f64, x: f64| {
        result
            .get(c, t0, x)
            .ok_or_else(|| SweepError::Grid(format!("missing ({c}, {t0}, {x}) in result")))
    };
    let mut trends = Vec::new();
    let mut wf_range = BTreeMap::new();
    let mut wf_flat = BTreeMap::new();
    for c in &result.cycles {
        for term in Term::ALL {
            let mut along_t0 = Vec::new();
            for &x in &g.x_egr {
                along_t0.push(
                    g.t0.iter()
                        .map(|&t0| entry(c, t0, x).map(|e| e.breakdown.get(term)))
                        .collect::<Result<Vec<_>, _>>()?,
                );
            }
            let mut along_egr = Vec::new();
            for &t0 in &g.t0 {
                along_egr.push(
                    g.x_egr
                        .iter()
                        .map(|&x| entry(c, t0, x).map(|e| e.breakdown.get(term)))
                        .collect::<Result<Vec<_>, _>>()?,
                );
            }
            for (axis, lines) in [(Axis::T0, along_t0), (Axis::Egr, along_egr)] {
                let (direction, range_pp) = classify(&lines);
                trends.push(Trend {
                    cycle: c.clone(),
                    term,
                    axis,
                    direction,
                    range_pp,
                });
            }
        }
        let (lo, hi) = result
            .entries
            .iter()
            .filter(|e| &e.cycle == c)
            .map(|e| e.breakdown.get(Term::Work) + e.breakdown.get(Term::Friction))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
        wf_range.insert(c.clone(), hi - lo);
        wf_flat.insert(c.clone(), hi - lo < FLAT_BAND_PP);
    }
    Ok(TrendReport {
        trends,
        work_friction_range_pp: wf_range,
        work_friction_flat: wf_flat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exergy::ExergyTerms;

    fn toy_result(values: &[(&str, f64)]) -> SweepResult {
        let grid = SweepGrid::new(vec![293.15], vec![0.2]).unwrap();
        let entries = values
            .iter()
            .map(|&(c, comb)| {
                let mut b = PercentBreakdown::default();
                b.percent.combustion = comb;
                SweepEntry {
                    cycle: c.into(),
                    t0: 293.15,
                    x_egr: 0.2,
                    totals: ExergyTotals::default(),
                    breakdown: b,
                }
            })
            .collect();
        SweepResult {
            cycles: values.iter().map(|v| v.0.to_string()).collect(),
            grid,
            entries,
            provenance: Provenance {
                calibration_hash: String::new(),
                map_files: vec![],
            },
        }
    }

    #[test]
    fn population_sd() {
        let r = toy_result(&[("a", 30.0), ("b", 32.0), ("c", 34.0)]);
        let s = cycle_stats(&r, 293.15, 0.2).unwrap();
        assert!((s.mean.combustion - 32.0).abs() < 1e-12);
        assert!((s.sd.combustion - 1.633).abs() < 1e-3);
        let same = toy_result(&[("a", 31.0), ("b", 31.0)]);
        assert_eq!(cycle_stats(&same, 293.15, 0.2).unwrap().sd.combustion, 0.0);
        let one = toy_result(&[("a", 31.0)]);
        assert!(matches!(
            cycle_stats(&one, 293.15, 0.2),
            Err(SweepError::InsufficientCycles { found: 1, .. })
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(SweepGrid::default().validate().is_ok());
        assert_eq!(SweepGrid::default().len(), 24);
        assert!(SweepGrid::new(vec![], vec![0.0]).is_err());
        assert!(SweepGrid::new(vec![300.0, 290.0], vec![0.0]).is_err());
        assert!(SweepGrid::new(vec![200.0], vec![0.0]).is_err());
        assert!(SweepGrid::new(vec![300.0], vec![0.6]).is_err());
        assert!(SweepGrid::new(vec![300.0], vec![-0.1]).is_err());
    }

    #[test]
    fn trace_validation_and_csv() {
        let s = |t, w, q| TraceSample {
            t_s: t,
            omega_radps: w,
            torque_nm: q,
        };
        assert!(CycleTrace::new("x", vec![s(0.0, 100.0, 10.0)]).is_err());
        assert!(CycleTrace::new("x", vec![s(0.0, 100.0, 10.0), s(1.0, -1.0, 0.0)]).is_err());
        assert!(CycleTrace::new(
            "x",
            vec![s(0.0, 1.0, 1.0), s(1.0, 1.0, 1.0), s(2.5, 1.0, 1.0)]
        )
        .is_err());
        let ok = CycleTrace::new(
            "x",
            vec![s(0.0, 1.0, 1.0), s(0.5, 2.0, 3.0), s(1.0, 0.0, 0.0)],
        )
        .unwrap();
        let mut buf = Vec::new();
        ok.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t_s,omega_radps,torque_Nm\n"));
        assert_eq!(CycleTrace::read_csv("x", buf.as_slice()).unwrap(), ok);
        assert!(CycleTrace::read_csv("x", &b"t,w,q\n0,1,1\n1,1,1\n"[..]).is_err());
        let twice = ok.repeated();
        assert_eq!(twice.samples.len(), 6);
        twice.validate().unwrap();
    }

    #[test]
    fn demo_cycles_are_valid_and_distinct() {
        let cycles = demo_cycles();
        assert_eq!(cycles.len(), 4);
        let mut means = Vec::new();
        for c in &cycles {
            c.validate().unwrap();
            let on: Vec<_> = c.samples.iter().filter(|s| s.torque_nm > 0.0).collect();
            assert!(!on.is_empty() && on.len() < c.samples.len());
            for s in &on {
                let rpm = rad_s_to_rpm(s.omega_radps);
                assert!((800.0..=3000.0).contains(&rpm) && s.torque_nm < 827.0);
            }
            means.push(on.iter().map(|s| s.omega_radps).sum::<f64>() / on.len() as f64);
        }
        assert!(means.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(demo_cycles(), cycles);
    }

    #[test]
    fn classification() {
        let (d, _) = classify(&[vec![1.0, 2.0, 3.0], vec![0.0, 0.5, 4.0]]);
        assert_eq!(d, Direction::Increasing);
        let (d, _) = classify(&[vec![3.0, 2.0], vec![1.0, 0.0]]);
        assert_eq!(d, Direction::Decreasing);
        let (d, r) = classify(&[vec![1.0, 1.5, 1.2]]);
        assert_eq!(d, Direction::Flat);
        assert!((r - 0.5).abs() < 1e-12);
        let (d, _) = classify(&[vec![1.0, 5.0, 1.2]]);
        assert_eq!(d, Direction::Mixed);
    }

    #[test]
    fn long_csv_layout() {
        let mut r = toy_result(&[("a", 30.0)]);
        r.entries[0].totals.terms = ExergyTerms {
            combustion: -3.0,
            ..Default::default()
        };
        let text = r.to_csv_string();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "cycle,T0_K,xEGR,term,percent,signed_value_J");
        assert_eq!(lines.len(), 1 + 6);
        assert!(lines.contains(&"a,293.15,0.2,combustion,30,-3"));
    }
}
