//! Speed–torque lookup tables: the engine calibration maps (fuel rate and
//! exhaust temperature), their CSV form and bilinear interpolation.
//!
//! Grids are stored in rpm so that CSV round trips are bit-exact. No
//! extrapolation is ever performed.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineSpec;
use crate::exergy::OperatingPoint;
use crate::thermo::FuelThermo;

/// First header cell of every map CSV.
pub const CSV_CORNER: &str = "torque_Nm\\speed_rpm";

/// Minimum exhaust temperature accepted on a map node [K].
pub const MIN_EXHAUST_TEMPERATURE: f64 = 350.0;

pub fn rpm_to_rad_s(rpm: f64) -> f64 {
    rpm * PI / 30.0
}

pub fn rad_s_to_rpm(omega: f64) -> f64 {
    omega * 30.0 / PI
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("map validation failed: {0}")]
    Validation(String),
    #[error(
        "query ({speed_rpm} rpm, {torque} Nm) outside map box [{}, {}] rpm x [{}, {}] Nm",
        speed_box.0, speed_box.1, torque_box.0, torque_box.1
    )]
    Domain {
        speed_rpm: f64,
        torque: f64,
        speed_box: (f64, f64),
        torque_box: (f64, f64),
    },
}

/// Speed and torque axes of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGrid {
    pub speeds_rpm: Vec<f64>,
    pub torques: Vec<f64>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

impl MapGrid {
    pub fn new(speeds_rpm: Vec<f64>, torques: Vec<f64>) -> Result<Self, MapError> {
        let g = MapGrid {
            speeds_rpm,
            torques,
        };
        g.validate()?;
        Ok(g)
    }

    /// `n` evenly spaced points on `[lo, hi]`, endpoints exact.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.speeds_rpm.len() < 2 || self.torques.len() < 2 {
            return Err(MapError::Validation(
                "grid needs at least two points per axis".into(),
            ));
        }
        if !strictly_increasing(&self.speeds_rpm) {
            return Err(MapError::Validation(
                "speed grid must be strictly increasing".into(),
            ));
        }
        if !strictly_increasing(&self.torques) {
            return Err(MapError::Validation(
                "torque grid must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn speed_box(&self) -> (f64, f64) {
        (self.speeds_rpm[0], *self.speeds_rpm.last().unwrap())
    }

    pub fn torque_box(&self) -> (f64, f64) {
        (self.torques[0], *self.torques.last().unwrap())
    }

    pub fn contains(&self, speed_rpm: f64, torque: f64) -> bool {
        self.locate(speed_rpm, torque).is_some()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.torques.len()).flat_map(move |i| (0..self.speeds_rpm.len()).map(move |j| (i, j)))
    }

    /// Cell index and local coordinate along one axis. Queries within a
    /// relative 1e-12 of an end are snapped to it so that rad/s round trips
    /// do not fall off the box.
    fn axis(axis: &[f64], q: f64) -> Option<(usize, f64)> {
        let lo = axis[0];
        let hi = *axis.last().unwrap();
        let snap = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
        let q = if (q - lo).abs() <= snap {
            lo
        } else if (q - hi).abs() <= snap {
            hi
        } else {
            q
        };
        if !(q >= lo && q <= hi) {
            return None;
        }
        let k = axis.partition_point(|&x| x <= q).clamp(1, axis.len() - 1) - 1;
        let t = (q - axis[k]) / (axis[k + 1] - axis[k]);
        Some((k, t))
    }

    fn locate(&self, speed_rpm: f64, torque: f64) -> Option<((usize, f64), (usize, f64))> {
        Some((
            Self::axis(&self.speeds_rpm, speed_rpm)?,
            Self::axis(&self.torques, torque)?,
        ))
    }

    fn domain_error(&self, speed_rpm: f64, torque: f64) -> MapError {
        MapError::Domain {
            speed_rpm,
            torque,
            speed_box: self.speed_box(),
            torque_box: self.torque_box(),
        }
    }
}

/// A scalar field over a [`MapGrid`]; rows are torques, columns speeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTable {
    pub grid: MapGrid,
    values: Vec<f64>,
}

impl MapTable {
    pub fn new(grid: MapGrid, values: Vec<f64>) -> Result<Self, MapError> {
        grid.validate()?;
        let expect = grid.speeds_rpm.len() * grid.torques.len();
        if values.len() != expect {
            return Err(MapError::Validation(format!(
                "matrix has {} entries, grid needs {expect}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(MapError::Validation(format!(
                "non-finite value at row {}, column {}",
                k / grid.speeds_rpm.len(),
                k % grid.speeds_rpm.len()
            )));
        }
        Ok(MapTable { grid, values })
    }

    pub fn from_fn(grid: MapGrid, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self, MapError> {
        let values = grid
            .nodes()
            .map(|(i, j)| f(grid.speeds_rpm[j], grid.torques[i]))
            .collect();
        Self::new(grid, values)
    }

    /// Value at torque row `i`, speed column `j`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.speeds_rpm.len() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bilinear interpolation with the speed in rpm; exact at nodes.
    pub fn interpolate_rpm(&self, speed_rpm: f64, torque: f64) -> Result<f64, MapError> {
        let ((j, u), (i, v)) = self
            .grid
            .locate(speed_rpm, torque)
            .ok_or_else(|| self.grid.domain_error(speed_rpm, torque))?;
        let lerp = |a: f64, b: f64, t: f64| (1.0 - t) * a + t * b;
        let lower = lerp(self.at(i, j), self.at(i, j + 1), u);
        let upper = lerp(self.at(i + 1, j), self.at(i + 1, j + 1), u);
        Ok(lerp(lower, upper, v))
    }

    /// Bilinear interpolation with the speed in rad/s.
    pub fn interpolate(&self, omega: f64, torque: f64) -> Result<f64, MapError> {
        self.interpolate_rpm(rad_s_to_rpm(omega), torque)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MapError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| MapError::Validation(format!("CSV write failed: {e}"));
        let mut header = vec![CSV_CORNER.to_string()];
        header.extend(self.grid.speeds_rpm.iter().map(|s| s.to_string()));
        w.write_record(&header).map_err(io)?;
        for (i, t) in self.grid.torques.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend((0..self.grid.speeds_rpm.len()).map(|j| self.at(i, j).to_string()));
            w.write_record(&row).map_err(io)?;
        }
        w.flush()
            .map_err(|e| MapError::Validation(format!("CSV flush failed: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, MapError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut rows = rdr.records();
        let parse = |s: &str, row: usize, col: usize| -> Result<f64, MapError> {
            let v: f64 = s.trim().parse().map_err(|_| MapError::Parse {
                row,
                col,
                msg: format!("`{s}` is not a number"),
            })?;
            if v.is_nan() {
                return Err(MapError::Parse {
                    row,
                    col,
                    msg: "NaN is not allowed".into(),
                });
            }
            Ok(v)
        };
        let header = rows
            .next()
            .ok_or(MapError::Parse {
                row: 1,
                col: 1,
                msg: "empty file".into(),
            })?
            .map_err(|e| MapError::Parse {
                row: 1,
                col: 1,
                msg: e.to_string(),
            })?;
        if header.get(0).map(str::trim) != Some(CSV_CORNER) {
            return Err(MapError::Parse {
                row: 1,
                col: 1,
                msg: format!("expected header token `{CSV_CORNER}`"),
            });
        }
        let speeds = header
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, s)| parse(s, 1, c + 1))
            .collect::<Result<Vec<_>, _>>()?;
        let mut torques = Vec::new();
        let mut values = Vec::new();
        for (r, rec) in rows.enumerate() {
            let row = r + 2;
            let rec = rec.map_err(|e| MapError::Parse {
                row,
                col: 1,
                msg: e.to_string(),
            })?;
            if rec.len() != speeds.len() + 1 {
                return Err(MapError::Parse {
                    row,
                    col: rec.len(),
                    msg: format!(
                        "row has {} cells, header implies {}",
                        rec.len(),
                        speeds.len() + 1
                    ),
                });
            }
            torques.push(parse(&rec[0], row, 1)?);
            for c in 1..rec.len() {
                values.push(parse(&rec[c], row, c + 1)?);
            }
        }
        MapTable::new(
            MapGrid {
                speeds_rpm: speeds,
                torques,
            },
            values,
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), MapError> {
        let f = File::create(path).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(f)
    }

    pub fn load(path: &Path) -> Result<Self, MapError> {
        let f = File::open(path).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(BufReader::new(f))
    }
}

/// Which engine-map field to interpolate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineQuantity {
    FuelRate,
    ExhaustTemperature,
}

/// Fuel rate ṁ_f [kg/s] and exhaust temperature T_E [K] over speed–torque.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineMaps {
    pub fuel_rate: MapTable,
    pub exhaust_temperature: MapTable,
}

impl EngineMaps {
    pub fn new(fuel_rate: MapTable, exhaust_temperature: MapTable) -> Result<Self, MapError> {
        let maps = EngineMaps {
            fuel_rate,
            exhaust_temperature,
        };
        maps.validate()?;
        Ok(maps)
    }

    pub fn grid(&self) -> &MapGrid {
        &self.fuel_rate.grid
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.fuel_rate.grid != self.exhaust_temperature.grid {
            return Err(MapError::Validation(
                "fuel-rate and exhaust-temperature grids differ".into(),
            ));
        }
        let g = self.grid();
        for (i, j) in g.nodes() {
            let (s, t) = (g.speeds_rpm[j], g.torques[i]);
            let m = self.fuel_rate.at(i, j);
            if m < 0.0 {
                return Err(MapError::Validation(format!(
                    "negative fuel rate {m} at ({s} rpm, {t} Nm)"
                )));
            }
            let te = self.exhaust_temperature.at(i, j);
            if te < MIN_EXHAUST_TEMPERATURE {
                return Err(MapError::Validation(format!(
                    "exhaust temperature {te} K below {MIN_EXHAUST_TEMPERATURE} K at ({s} rpm, {t} Nm)"
                )));
            }
            if i > 0 && m < self.fuel_rate.at(i - 1, j) {
                return Err(MapError::Validation(format!(
                    "fuel rate decreases with torque at {s} rpm between {} and {t} Nm",
                    g.torques[i - 1]
                )));
            }
        }
        Ok(())
    }

    pub fn interpolate(
        &self,
        quantity: EngineQuantity,
        omega: f64,
        torque: f64,
    ) -> Result<f64, MapError> {
        match quantity {
            EngineQuantity::FuelRate => self.fuel_rate.interpolate(omega, torque),
            EngineQuantity::ExhaustTemperature => {
                self.exhaust_temperature.interpolate(omega, torque)
            }
        }
    }

    pub fn fuel_rate_at(&self, op: &OperatingPoint) -> Result<f64, MapError> {
        self.fuel_rate.interpolate(op.omega, op.torque)
    }

    pub fn exhaust_temperature_at(&self, op: &OperatingPoint) -> Result<f64, MapError> {
        self.exhaust_temperature.interpolate(op.omega, op.torque)
    }

    pub fn contains(&self, op: &OperatingPoint) -> bool {
        self.grid().contains(rad_s_to_rpm(op.omega), op.torque)
    }

    pub fn save(&self, fuel_csv: &Path, texh_csv: &Path) -> Result<(), MapError> {
        self.fuel_rate.save(fuel_csv)?;
        self.exhaust_temperature.save(texh_csv)
    }
}

/// Reads and validates the two calibration maps.
pub fn load_maps(fuel_csv: &Path, texh_csv: &Path) -> Result<EngineMaps, MapError> {
    EngineMaps::new(MapTable::load(fuel_csv)?, MapTable::load(texh_csv)?)
}

/// Parameters of the synthetic calibration maps.
///
/// Fuel rate follows a Willans line: indicated power (brake plus friction
/// from the FMEP model) over an indicated efficiency that is a concave
/// quadratic in speed. Exhaust temperature is affine in BMEP and speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub idle_rpm: f64,
    pub rated_rpm: f64,
    /// Peak brake power reached at `rated_rpm` [W].
    pub rated_power: f64,
    pub speed_points: usize,
    pub torque_points: usize,
    pub peak_indicated_efficiency: f64,
    /// Indicated efficiency at idle and rated speed.
    pub edge_indicated_efficiency: f64,
    /// T_E intercept [K].
    pub exhaust_base: f64,
    /// T_E slope in BMEP [K/bar].
    pub exhaust_per_bmep: f64,
    /// T_E slope in speed [K per 1000 rpm].
    pub exhaust_per_krpm: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            idle_rpm: 800.0,
            rated_rpm: 3000.0,
            rated_power: 260e3,
            speed_points: 12,
            torque_points: 12,
            peak_indicated_efficiency: 0.46,
            edge_indicated_efficiency: 0.41,
            exhaust_base: 365.0,
            exhaust_per_bmep: 30.0,
            exhaust_per_krpm: 20.0,
        }
    }
}

impl SynthParams {
    pub fn max_torque(&self) -> f64 {
        self.rated_power / rpm_to_rad_s(self.rated_rpm)
    }

    pub fn indicated_efficiency(&self, speed_rpm: f64) -> f64 {
        let mid = 0.5 * (self.idle_rpm + self.rated_rpm);
        let half = 0.5 * (self.rated_rpm - self.idle_rpm);
        let z = (speed_rpm - mid) / half;
        self.peak_indicated_efficiency
            - (self.peak_indicated_efficiency - self.edge_indicated_efficiency) * z * z
    }

    pub fn grid(&self) -> MapGrid {
        MapGrid {
            speeds_rpm: MapGrid::linspace(self.idle_rpm, self.rated_rpm, self.speed_points),
            torques: MapGrid::linspace(0.0, self.max_torque(), self.torque_points),
        }
    }
}

/// Synthetic calibration maps standing in for measured dyno data.
pub fn synth_maps(
    engine: &EngineSpec,
    fuel: &FuelThermo,
    params: &SynthParams,
) -> Result<EngineMaps, MapError> {
    let grid = params.grid();
    let fuel_rate = MapTable::from_fn(grid.clone(), |rpm, torque| {
        let omega = rpm_to_rad_s(rpm);
        let indicated = omega * torque + engine.friction_power(omega);
        indicated / params.indicated_efficiency(rpm) / fuel.lhv
    })?;
    let exhaust_temperature = MapTable::from_fn(grid, |rpm, torque| {
        params.exhaust_base
            + params.exhaust_per_bmep * engine.bmep(torque) / 1e5
            + params.exhaust_per_krpm * rpm / 1000.0
    })?;
    EngineMaps::new(fuel_rate, exhaust_temperature)
}
