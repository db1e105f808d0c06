//! Single-zone crank-angle cylinder model and the mean-value maps derived
//! from it.
//!
//! The closed part of the cycle (intake-valve closing to exhaust-valve
//! opening) is integrated at a fixed crank step. Composition is frozen at
//! the intake mixture; fuel energy enters through a Wiebe burn profile and
//! leaves through Hohenberg wall heat transfer. The mean values are window
//! averages of p and T over the firing interval plus the engine-total wall
//! heat rate over the same window.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineGeometry;
use crate::exergy::OperatingPoint;
use crate::maps::{rad_s_to_rpm, rpm_to_rad_s, EngineMaps, MapError, MapGrid, MapTable};
use crate::mixture::{self, Composition, MixtureError, ReferenceState};
use crate::model::EngineModel;
use crate::thermo::{Species, ThermoError};

#[derive(Debug, Error)]
pub enum CylinderError {
    #[error("invalid cylinder parameters: {0}")]
    InvalidParams(String),
    #[error("numerical failure at {theta:.2} deg aTDC (T = {t} K, p = {p} Pa)")]
    Numerical { theta: f64, t: f64, p: f64 },
    #[error("firing window [{lo}, {hi}] deg not inside trace [{start}, {end}] deg")]
    Window {
        lo: f64,
        hi: f64,
        start: f64,
        end: f64,
    },
    #[error("fuel rate {0} kg/s at the operating point is not positive")]
    NoFuel(f64),
    #[error("map generation failed at {} node(s); first: {}", failures.len(), failures.first().map(|f| f.to_string()).unwrap_or_default())]
    MapGeneration { failures: Vec<NodeFailure> },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFailure {
    pub speed_rpm: f64,
    pub torque: f64,
    pub message: String,
}

impl std::fmt::Display for NodeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({} rpm, {} Nm): {}",
            self.speed_rpm, self.torque, self.message
        )
    }
}

/// Wiebe burn shape and the firing window used for averaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombustionParams {
    pub wiebe_a: f64,
    pub wiebe_m: f64,
    /// Start of combustion [deg aTDC].
    pub soc_deg: f64,
    /// Burn duration [deg].
    pub duration_deg: f64,
    pub window_lo_deg: f64,
    pub window_hi_deg: f64,
}

impl Default for CombustionParams {
    fn default() -> Self {
        CombustionParams {
            wiebe_a: 6.908,
            wiebe_m: 1.5,
            soc_deg: 5.0,
            duration_deg: 90.0,
            window_lo_deg: -30.0,
            window_hi_deg: 120.0,
        }
    }
}

impl CombustionParams {
    pub fn validate(&self) -> Result<(), CylinderError> {
        if !(self.wiebe_a > 0.0 && self.wiebe_m > 0.0 && self.duration_deg > 0.0) {
            return Err(CylinderError::InvalidParams(
                "Wiebe a, m and duration must be positive".into(),
            ));
        }
        if !(self.window_lo_deg < self.soc_deg && self.soc_deg < self.window_hi_deg) {
            return Err(CylinderError::InvalidParams(format!(
                "start of combustion {} must lie inside the firing window [{}, {}]",
                self.soc_deg, self.window_lo_deg, self.window_hi_deg
            )));
        }
        Ok(())
    }
}

/// Hohenberg correlation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatTransferParams {
    pub c1: f64,
    pub c2: f64,
}

impl Default for HeatTransferParams {
    fn default() -> Self {
        HeatTransferParams { c1: 130.0, c2: 1.4 }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderModel {
    pub combustion: CombustionParams,
    pub heat_transfer: HeatTransferParams,
    pub ivc_deg: f64,
    pub evo_deg: f64,
    pub step_deg: f64,
    /// Off for motored runs.
    #[serde(default = "yes")]
    pub burn: bool,
    #[serde(default = "yes")]
    pub wall_heat: bool,
}

impl Default for CylinderModel {
    fn default() -> Self {
        CylinderModel {
            combustion: CombustionParams::default(),
            heat_transfer: HeatTransferParams::default(),
            ivc_deg: -165.0,
            evo_deg: 120.0,
            step_deg: 0.25,
            burn: true,
            wall_heat: true,
        }
    }
}

impl CylinderModel {
    pub fn validate(&self) -> Result<(), CylinderError> {
        self.combustion.validate()?;
        if !(self.step_deg > 0.0 && self.ivc_deg < self.evo_deg) {
            return Err(CylinderError::InvalidParams(
                "need a positive crank step and IVC before EVO".into(),
            ));
        }
        let c = &self.combustion;
        if c.window_lo_deg < self.ivc_deg || c.window_hi_deg > self.evo_deg {
            return Err(CylinderError::Window {
                lo: c.window_lo_deg,
                hi: c.window_hi_deg,
                start: self.ivc_deg,
                end: self.evo_deg,
            });
        }
        Ok(())
    }
}

/// Single-cylinder volume at crank angle θ [deg aTDC] [m³].
pub fn cylinder_volume(theta_deg: f64, geom: &EngineGeometry) -> f64 {
    let th = theta_deg.to_radians();
    let r = geom.conrod_ratio;
    let s = th.sin();
    geom.clearance_volume()
        + 0.5 * geom.cylinder_displacement() * (1.0 + r - th.cos() - (r * r - s * s).sqrt())
}

/// dV/dθ [m³/deg].
fn cylinder_volume_rate(theta_deg: f64, geom: &EngineGeometry) -> f64 {
    let th = theta_deg.to_radians();
    let r = geom.conrod_ratio;
    let (s, c) = th.sin_cos();
    0.5 * geom.cylinder_displacement() * (s + s * c / (r * r - s * s).sqrt()) * PI / 180.0
}

/// Cumulative Wiebe burn fraction.
pub fn wiebe_burn_fraction(theta_deg: f64, params: &CombustionParams) -> f64 {
    if theta_deg <= params.soc_deg {
        return 0.0;
    }
    let z = (theta_deg - params.soc_deg) / params.duration_deg;
    1.0 - (-params.wiebe_a * z.powf(params.wiebe_m + 1.0)).exp()
}

/// d(burn fraction)/dθ [1/deg].
fn wiebe_rate(theta_deg: f64, params: &CombustionParams) -> f64 {
    if theta_deg <= params.soc_deg {
        return 0.0;
    }
    let z = (theta_deg - params.soc_deg) / params.duration_deg;
    let m1 = params.wiebe_m + 1.0;
    params.wiebe_a * m1 / params.duration_deg
        * z.powf(params.wiebe_m)
        * (-params.wiebe_a * z.powf(m1)).exp()
}

/// Hohenberg heat-transfer coefficient [W/(m² K)].
pub fn hohenberg_htc(
    volume: f64,
    pressure: f64,
    temperature: f64,
    mean_piston_speed: f64,
    params: &HeatTransferParams,
) -> Result<f64, CylinderError> {
    if !(volume > 0.0 && pressure > 0.0 && temperature > 0.0 && mean_piston_speed >= 0.0) {
        return Err(CylinderError::InvalidParams(format!(
            "Hohenberg inputs must be positive (V={volume}, p={pressure}, T={temperature}, S_p={mean_piston_speed})"
        )));
    }
    Ok(params.c1
        * volume.powf(-0.06)
        * (pressure / 1e5).powf(0.8)
        * temperature.powf(-0.4)
        * (mean_piston_speed + params.c2).powf(0.8))
}

/// Crank-resolved closed-cycle trace of one cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTraceCA {
    pub theta: Vec<f64>,
    pub pressure: Vec<f64>,
    pub temperature: Vec<f64>,
    /// Cumulative gas-to-wall heat [J].
    pub wall_heat: Vec<f64>,
    /// Cumulative boundary work ∫p dV [J].
    pub work: Vec<f64>,
    pub volume: Vec<f64>,
    /// Trapped moles (fresh + EGR).
    pub moles: f64,
    pub composition: Composition,
    /// Fresh air trapped per cycle [kg].
    pub fresh_mass: f64,
    /// Fuel energy per cycle [J].
    pub fuel_energy: f64,
    pub lambda: f64,
}

impl CycleTraceCA {
    fn value_at(&self, series: &[f64], theta: f64) -> f64 {
        let k = self
            .theta
            .partition_point(|&x| x <= theta)
            .clamp(1, self.theta.len() - 1)
            - 1;
        let t = (theta - self.theta[k]) / (self.theta[k + 1] - self.theta[k]);
        (1.0 - t) * series[k] + t * series[k + 1]
    }

    /// Average of a piecewise-linear series over `[lo, hi]`.
    fn window_average(&self, series: &[f64], lo: f64, hi: f64) -> f64 {
        let mut acc = 0.0;
        let mut prev = (lo, self.value_at(series, lo));
        for (k, &th) in self.theta.iter().enumerate() {
            if th <= lo {
                continue;
            }
            if th >= hi {
                break;
            }
            acc += 0.5 * (prev.1 + series[k]) * (th - prev.0);
            prev = (th, series[k]);
        }
        acc += 0.5 * (prev.1 + self.value_at(series, hi)) * (hi - prev.0);
        acc / (hi - lo)
    }
}

/// Cycle-averaged in-cylinder state at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanValues {
    /// P_cyl [Pa]
    pub pressure: f64,
    /// T_cyl [K]
    pub temperature: f64,
    /// Q̇_cyl, engine total, gas to wall positive [W]
    pub heat_rate: f64,
}

const STATES: usize = 3;

/// Integrates the closed cycle for one cylinder at an operating point.
pub fn simulate_cycle(
    model: &EngineModel,
    op: &OperatingPoint,
    x_egr: f64,
    maps: &EngineMaps,
    env: &ReferenceState,
) -> Result<CycleTraceCA, CylinderError> {
    let fuel_rate = maps.fuel_rate_at(op)?;
    if !(fuel_rate > 0.0) {
        return Err(CylinderError::NoFuel(fuel_rate));
    }
    simulate_with_fuel(model, op, x_egr, fuel_rate, env)
}

pub(crate) fn simulate_with_fuel(
    model: &EngineModel,
    op: &OperatingPoint,
    x_egr: f64,
    fuel_rate: f64,
    env: &ReferenceState,
) -> Result<CycleTraceCA, CylinderError> {
    let cyl = &model.cylinder;
    cyl.validate()?;
    let geom = &model.engine.geometry;
    let table = &model.thermo;
    let r_gas = table.gas_constant();
    let ambient = &env.composition;

    let air_rate = mixture::air_mass_flow(
        op,
        &model.intake,
        geom.displacement,
        model.engine.volumetric_efficiency,
    )?;
    let lam = mixture::lambda(air_rate, fuel_rate, &model.fuel, ambient)?;
    let (charge, _) = mixture::egr_fixed_point(lam, x_egr, &model.fuel, ambient)?;

    let cycles_per_s = f64::from(geom.n_cyl) * op.omega / (4.0 * PI);
    let fresh_mass = air_rate / cycles_per_s;
    let moles = fresh_mass / ambient.molar_mass() / (1.0 - x_egr);
    let fuel_energy = if cyl.burn {
        fuel_rate / cycles_per_s * model.fuel.lhv
    } else {
        0.0
    };
    let sp = geom.mean_piston_speed(op.omega);
    let area_fixed = 2.0 * geom.piston_area();
    let deg_to_s = PI / 180.0 / op.omega;

    let cp_mix = |t: f64| -> Result<f64, ThermoError> {
        Species::ALL
            .iter()
            .try_fold(0.0, |acc, &s| Ok(acc + charge.get(s) * table.cp(s, t)?))
    };

    let rhs = |theta: f64, y: &[f64; STATES]| -> Result<[f64; STATES], CylinderError> {
        let t = y[0];
        let v = cylinder_volume(theta, geom);
        let p = moles * r_gas * t / v;
        if !(t > 0.0 && p > 0.0 && t.is_finite()) {
            return Err(CylinderError::Numerical { theta, t, p });
        }
        let dv = cylinder_volume_rate(theta, geom);
        let dq_fuel = fuel_energy * wiebe_rate(theta, &cyl.combustion);
        let dq_wall = if cyl.wall_heat {
            let h = hohenberg_htc(v, p, t, sp, &cyl.heat_transfer)?;
            let area = area_fixed + 4.0 * v / geom.bore;
            h * area * (t - geom.wall_temperature) * deg_to_s
        } else {
            0.0
        };
        let cv = cp_mix(t).map_err(|_| CylinderError::Numerical { theta, t, p })? - r_gas;
        let dt = (dq_fuel - dq_wall - p * dv) / (moles * cv);
        Ok([dt, dq_wall, p * dv])
    };

    let n_steps = ((cyl.evo_deg - cyl.ivc_deg) / cyl.step_deg).round() as usize;
    let h = (cyl.evo_deg - cyl.ivc_deg) / n_steps as f64;
    let mut trace = CycleTraceCA {
        theta: Vec::with_capacity(n_steps + 1),
        pressure: Vec::with_capacity(n_steps + 1),
        temperature: Vec::with_capacity(n_steps + 1),
        wall_heat: Vec::with_capacity(n_steps + 1),
        work: Vec::with_capacity(n_steps + 1),
        volume: Vec::with_capacity(n_steps + 1),
        moles,
        composition: charge,
        fresh_mass,
        fuel_energy,
        lambda: lam,
    };
    let push = |trace: &mut CycleTraceCA, theta: f64, y: &[f64; STATES]| {
        let v = cylinder_volume(theta, geom);
        trace.theta.push(theta);
        trace.volume.push(v);
        trace.temperature.push(y[0]);
        trace.pressure.push(moles * r_gas * y[0] / v);
        trace.wall_heat.push(y[1]);
        trace.work.push(y[2]);
    };

    let add = |y: &[f64; STATES], k: &[f64; STATES], s: f64| -> [f64; STATES] {
        std::array::from_fn(|i| y[i] + s * k[i])
    };
    let mut y = [model.intake.temperature, 0.0, 0.0];
    push(&mut trace, cyl.ivc_deg, &y);
    for step in 0..n_steps {
        let theta = cyl.ivc_deg + step as f64 * h;
        let k1 = rhs(theta, &y)?;
        let k2 = rhs(theta + 0.5 * h, &add(&y, &k1, 0.5 * h))?;
        let k3 = rhs(theta + 0.5 * h, &add(&y, &k2, 0.5 * h))?;
        let k4 = rhs(theta + h, &add(&y, &k3, h))?;
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        let next = if step + 1 == n_steps {
            cyl.evo_deg
        } else {
            cyl.ivc_deg + (step + 1) as f64 * h
        };
        if !(y[0] > 0.0 && y[0].is_finite()) {
            return Err(CylinderError::Numerical {
                theta: next,
                t: y[0],
                p: moles * r_gas * y[0] / cylinder_volume(next, geom),
            });
        }
        push(&mut trace, next, &y);
    }
    Ok(trace)
}

/// Firing-window averages of a cylinder trace.
pub fn mean_values(
    trace: &CycleTraceCA,
    params: &CombustionParams,
    op: &OperatingPoint,
    geom: &EngineGeometry,
) -> Result<MeanValues, CylinderError> {
    let (lo, hi) = (params.window_lo_deg, params.window_hi_deg);
    let (start, end) = (trace.theta[0], *trace.theta.last().unwrap());
    if !(lo >= start && hi <= end && lo < hi) {
        return Err(CylinderError::Window { lo, hi, start, end });
    }
    let window_heat = trace.value_at(&trace.wall_heat, hi) - trace.value_at(&trace.wall_heat, lo);
    Ok(MeanValues {
        pressure: trace.window_average(&trace.pressure, lo, hi),
        temperature: trace.window_average(&trace.temperature, lo, hi),
        heat_rate: window_heat * f64::from(geom.n_cyl) * op.omega / (4.0 * PI),
    })
}

/// Which mean-value field to interpolate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanQuantity {
    Pressure,
    Temperature,
    HeatRate,
}

impl MeanQuantity {
    pub const ALL: [MeanQuantity; 3] = [
        MeanQuantity::Pressure,
        MeanQuantity::Temperature,
        MeanQuantity::HeatRate,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            MeanQuantity::Pressure => "p_cyl",
            MeanQuantity::Temperature => "t_cyl",
            MeanQuantity::HeatRate => "q_cyl",
        }
    }
}

/// P_cyl, T_cyl and Q̇_cyl over the speed–torque plane for one EGR rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanValueMaps {
    pub x_egr: f64,
    pub pressure: MapTable,
    pub temperature: MapTable,
    pub heat_rate: MapTable,
}

impl MeanValueMaps {
    pub fn grid(&self) -> &MapGrid {
        &self.pressure.grid
    }

    pub fn table(&self, q: MeanQuantity) -> &MapTable {
        match q {
            MeanQuantity::Pressure => &self.pressure,
            MeanQuantity::Temperature => &self.temperature,
            MeanQuantity::HeatRate => &self.heat_rate,
        }
    }

    pub fn interpolate(&self, q: MeanQuantity, omega: f64, torque: f64) -> Result<f64, MapError> {
        self.table(q).interpolate(omega, torque)
    }

    pub fn at(&self, op: &OperatingPoint) -> Result<MeanValues, MapError> {
        Ok(MeanValues {
            pressure: self.pressure.interpolate(op.omega, op.torque)?,
            temperature: self.temperature.interpolate(op.omega, op.torque)?,
            heat_rate: self.heat_rate.interpolate(op.omega, op.torque)?,
        })
    }

    pub fn contains(&self, op: &OperatingPoint) -> bool {
        self.grid().contains(rad_s_to_rpm(op.omega), op.torque)
    }

    pub fn file_name(q: MeanQuantity, x_egr: f64) -> String {
        format!("{}_egr{:.3}.csv", q.file_stem(), x_egr)
    }

    pub fn paths(dir: &Path, x_egr: f64) -> [PathBuf; 3] {
        MeanQuantity::ALL.map(|q| dir.join(Self::file_name(q, x_egr)))
    }

    pub fn save(&self, dir: &Path) -> Result<[PathBuf; 3], MapError> {
        let paths = Self::paths(dir, self.x_egr);
        for (q, p) in MeanQuantity::ALL.iter().zip(paths.iter()) {
            self.table(*q).save(p)?;
        }
        Ok(paths)
    }

    pub fn load(dir: &Path, x_egr: f64) -> Result<Self, MapError> {
        let [p, t, q] = Self::paths(dir, x_egr);
        let maps = MeanValueMaps {
            x_egr,
            pressure: MapTable::load(&p)?,
            temperature: MapTable::load(&t)?,
            heat_rate: MapTable::load(&q)?,
        };
        if maps.pressure.grid != maps.temperature.grid || maps.pressure.grid != maps.heat_rate.grid
        {
            return Err(MapError::Validation(
                "mean-value map grids differ between quantities".into(),
            ));
        }
        Ok(maps)
    }

    /// Checks positivity, T_cyl > T_wall > T0 and T_cyl monotone in torque.
    pub fn check_invariants(&self, wall_temperature: f64, t0: f64) -> Result<(), String> {
        let g = self.grid();
        if !(wall_temperature > t0) {
            return Err(format!(
                "wall temperature {wall_temperature} K not above T0 {t0} K"
            ));
        }
        for (i, j) in g.nodes() {
            let (p, t, q) = (
                self.pressure.at(i, j),
                self.temperature.at(i, j),
                self.heat_rate.at(i, j),
            );
            if !(p > 0.0 && t > 0.0 && q > 0.0) {
                return Err(format!("non-positive entry at node ({i}, {j})"));
            }
            if t <= wall_temperature {
                return Err(format!("T_cyl {t} K not above wall at node ({i}, {j})"));
            }
            if i > 0 && t < self.temperature.at(i - 1, j) {
                return Err(format!("T_cyl decreases with torque at node ({i}, {j})"));
            }
        }
        Ok(())
    }
}

/// Runs the cylinder model at every lattice node for one EGR rate.
///
/// Nodes are evaluated on the current rayon pool; results are assembled in
/// lattice order so the output does not depend on scheduling.
pub fn generate_maps(
    model: &EngineModel,
    grid: &MapGrid,
    x_egr: f64,
    maps: &EngineMaps,
    env: &ReferenceState,
) -> Result<MeanValueMaps, CylinderError> {
    grid.validate()?;
    let nodes: Vec<(usize, usize)> = grid.nodes().collect();
    let results: Vec<Result<MeanValues, NodeFailure>> = nodes
        .par_iter()
        .map(|&(i, j)| {
            let (rpm, torque) = (grid.speeds_rpm[j], grid.torques[i]);
            let op = OperatingPoint::new(rpm_to_rad_s(rpm), torque);
            simulate_cycle(model, &op, x_egr, maps, env)
                .and_then(|trace| {
                    mean_values(
                        &trace,
                        &model.cylinder.combustion,
                        &op,
                        &model.engine.geometry,
                    )
                })
                .map_err(|e| NodeFailure {
                    speed_rpm: rpm,
                    torque,
                    message: e.to_string(),
                })
        })
        .collect();

    let mut failures = Vec::new();
    let mut values = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(v) => values.push(v),
            Err(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        return Err(CylinderError::MapGeneration { failures });
    }
    let table =
        |f: fn(&MeanValues) -> f64| MapTable::new(grid.clone(), values.iter().map(f).collect());
    Ok(MeanValueMaps {
        x_egr,
        pressure: table(|v| v.pressure)?,
        temperature: table(|v| v.temperature)?,
        heat_rate: table(|v| v.heat_rate)?,
    })
}
