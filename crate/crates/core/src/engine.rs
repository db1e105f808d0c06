//! Engine geometry, friction and breathing parameters shared by the
//! cylinder, map and exergy modules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineGeometry {
    pub n_cyl: u32,
    /// Total displacement [m³].
    pub displacement: f64,
    pub compression_ratio: f64,
    /// [m]
    pub bore: f64,
    /// [m]
    pub stroke: f64,
    /// Connecting-rod length over crank radius.
    pub conrod_ratio: f64,
    /// Liner/head/piston temperature [K].
    pub wall_temperature: f64,
}

impl Default for EngineGeometry {
    fn default() -> Self {
        EngineGeometry {
            n_cyl: 8,
            displacement: 6.4e-3,
            compression_ratio: 17.5,
            bore: 0.0982,
            stroke: 0.105,
            conrod_ratio: 3.2,
            wall_temperature: 450.0,
        }
    }
}

impl EngineGeometry {
    pub fn cylinder_displacement(&self) -> f64 {
        self.displacement / f64::from(self.n_cyl)
    }

    pub fn clearance_volume(&self) -> f64 {
        self.cylinder_displacement() / (self.compression_ratio - 1.0)
    }

    pub fn piston_area(&self) -> f64 {
        PI / 4.0 * self.bore * self.bore
    }

    /// Mean piston speed S_p = 2·stroke·N [m/s].
    pub fn mean_piston_speed(&self, omega: f64) -> f64 {
        self.stroke * omega / PI
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_cyl == 0 {
            return Err("n_cyl must be at least 1".into());
        }
        for (name, v) in [
            ("displacement", self.displacement),
            ("bore", self.bore),
            ("stroke", self.stroke),
            ("wall_temperature", self.wall_temperature),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.compression_ratio > 1.0) {
            return Err(format!(
                "compression ratio must exceed 1, got {}",
                self.compression_ratio
            ));
        }
        if !(self.conrod_ratio > 1.0) {
            return Err(format!(
                "conrod ratio must exceed 1, got {}",
                self.conrod_ratio
            ));
        }
        let swept = f64::from(self.n_cyl) * self.piston_area() * self.stroke;
        if ((swept - self.displacement) / self.displacement).abs() > 0.01 {
            return Err(format!(
                "bore/stroke give {swept:.4e} m³, more than 1% off displacement {:.4e} m³",
                self.displacement
            ));
        }
        Ok(())
    }
}

/// FMEP = 1000·(C1 + C2·ω + C3·S_p²) [Pa], coefficients in kPa-based units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionModel {
    /// [kPa]
    pub c1: f64,
    /// [s kPa]
    pub c2: f64,
    /// [s² kPa/m²]
    pub c3: f64,
}

impl Default for FrictionModel {
    fn default() -> Self {
        FrictionModel {
            c1: 75.0,
            c2: 0.458,
            c3: 0.4,
        }
    }
}

impl FrictionModel {
    /// Friction mean effective pressure [Pa].
    pub fn fmep(&self, omega: f64, mean_piston_speed: f64) -> f64 {
        1000.0 * (self.c1 + self.c2 * omega + self.c3 * mean_piston_speed * mean_piston_speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineSpec {
    pub geometry: EngineGeometry,
    pub friction: FrictionModel,
    /// Fresh-charge volumetric efficiency referenced to the intake state.
    /// Values above one stand in for turbocharger boost.
    pub volumetric_efficiency: f64,
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec {
            geometry: EngineGeometry::default(),
            friction: FrictionModel::default(),
            volumetric_efficiency: DEFAULT_VOLUMETRIC_EFFICIENCY,
        }
    }
}

pub const DEFAULT_VOLUMETRIC_EFFICIENCY: f64 = 1.7;

impl EngineSpec {
    /// Friction power at speed ω [W], positive.
    pub fn friction_power(&self, omega: f64) -> f64 {
        let sp = self.geometry.mean_piston_speed(omega);
        omega / (4.0 * PI) * self.friction.fmep(omega, sp) * self.geometry.displacement
    }

    /// Brake mean effective pressure for a torque [Pa].
    pub fn bmep(&self, torque: f64) -> f64 {
        4.0 * PI * torque / self.geometry.displacement
    }

    pub fn validate(&self) -> Result<(), String> {
        self.geometry.validate()?;
        if !(self.volumetric_efficiency > 0.0) {
            return Err(format!(
                "volumetric efficiency must be positive, got {}",
                self.volumetric_efficiency
            ));
        }
        Ok(())
    }
}
