//! Ideal-gas molar properties for the tracked species {N2, CO2, H2O, O2}
//! and for the diesel surrogate fuel.
//!
//! Species properties come from two-range 7-coefficient polynomials
//! (break at 1000 K). Enthalpies include the enthalpy of formation, so a
//! reaction enthalpy is a plain difference of outputs. Entropies are
//! absolute (third-law) values at the reference pressure; pressure and
//! mixing corrections live in the chemical-exergy log terms downstream.

use std::fmt;
use std::io::Read;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Universal gas constant used throughout the crate [J/(mol K)].
pub const GAS_CONSTANT: f64 = 8.314;

/// Standard reference temperature for formation properties [K].
pub const T_STANDARD: f64 = 298.15;

const ATOMIC_MASS_C: f64 = 0.012011;
const ATOMIC_MASS_H: f64 = 0.001008;
const ATOMIC_MASS_O: f64 = 0.0159994;
const ATOMIC_MASS_N: f64 = 0.0140067;

/// Validity range of the surrogate fuel model [K].
pub const FUEL_T_MIN: f64 = 250.0;
pub const FUEL_T_MAX: f64 = 3500.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error("temperature {t} K outside validity range [{lo}, {hi}] K for {species}")]
    OutOfRange {
        species: &'static str,
        t: f64,
        lo: f64,
        hi: f64,
    },
    #[error("unknown species `{0}` (expected one of N2, CO2, H2O, O2)")]
    UnknownSpecies(String),
    #[error("invalid fuel: {0}")]
    InvalidFuel(String),
    #[error("invalid property table: {0}")]
    InvalidTable(String),
    #[error("property CSV line {line}: {msg}")]
    Csv { line: u64, msg: String },
}

/// One of the four tracked gas species.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Species {
    N2,
    CO2,
    H2O,
    O2,
}

impl Species {
    pub const ALL: [Species; 4] = [Species::N2, Species::CO2, Species::H2O, Species::O2];

    pub const fn index(self) -> usize {
        match self {
            Species::N2 => 0,
            Species::CO2 => 1,
            Species::H2O => 2,
            Species::O2 => 3,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Species::N2 => "N2",
            Species::CO2 => "CO2",
            Species::H2O => "H2O",
            Species::O2 => "O2",
        }
    }

    /// Atom counts (C, H, O, N) per molecule.
    pub const fn atoms(self) -> [f64; 4] {
        match self {
            Species::N2 => [0.0, 0.0, 0.0, 2.0],
            Species::CO2 => [1.0, 0.0, 2.0, 0.0],
            Species::H2O => [0.0, 2.0, 1.0, 0.0],
            Species::O2 => [0.0, 0.0, 2.0, 0.0],
        }
    }

    /// Molar mass [kg/mol].
    pub fn molar_mass(self) -> f64 {
        let [c, h, o, n] = self.atoms();
        c * ATOMIC_MASS_C + h * ATOMIC_MASS_H + o * ATOMIC_MASS_O + n * ATOMIC_MASS_N
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Species {
    type Err = ThermoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "N2" => Ok(Species::N2),
            "CO2" => Ok(Species::CO2),
            "H2O" => Ok(Species::H2O),
            "O2" => Ok(Species::O2),
            other => Err(ThermoError::UnknownSpecies(other.to_string())),
        }
    }
}

/// A value per tracked species, indexed by [`Species`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerSpecies(pub [f64; 4]);

impl PerSpecies {
    pub const ZERO: PerSpecies = PerSpecies([0.0; 4]);

    pub fn from_fn(mut f: impl FnMut(Species) -> f64) -> Self {
        PerSpecies(Species::ALL.map(&mut f))
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Species, f64)> + '_ {
        Species::ALL.iter().map(move |&s| (s, self[s]))
    }

    pub fn scale(&self, k: f64) -> Self {
        PerSpecies(self.0.map(|v| v * k))
    }

    /// Elemental totals (C, H, O, N) for these molar amounts.
    pub fn atoms(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (s, n) in self.iter() {
            for (o, a) in out.iter_mut().zip(s.atoms()) {
                *o += a * n;
            }
        }
        out
    }
}

impl Index<Species> for PerSpecies {
    type Output = f64;
    fn index(&self, s: Species) -> &f64 {
        &self.0[s.index()]
    }
}

impl IndexMut<Species> for PerSpecies {
    fn index_mut(&mut self, s: Species) -> &mut f64 {
        &mut self.0[s.index()]
    }
}

/// Two-range polynomial curve for one species.
///
/// Coefficients follow the usual 7-term layout:
/// `cp/R = a1 + a2 T + a3 T^2 + a4 T^3 + a5 T^4`, with `a6` and `a7` the
/// enthalpy and entropy integration constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyCurve {
    pub species: Species,
    pub t_low: f64,
    pub t_mid: f64,
    pub t_high: f64,
    pub low: [f64; 7],
    pub high: [f64; 7],
}

impl PropertyCurve {
    fn coeffs(&self, t: f64) -> &[f64; 7] {
        if t < self.t_mid {
            &self.low
        } else {
            &self.high
        }
    }

    fn check(&self, t: f64) -> Result<(), ThermoError> {
        if t.is_finite() && t >= self.t_low && t <= self.t_high {
            Ok(())
        } else {
            Err(ThermoError::OutOfRange {
                species: self.species.name(),
                t,
                lo: self.t_low,
                hi: self.t_high,
            })
        }
    }

    fn cp_r(a: &[f64; 7], t: f64) -> f64 {
        a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * a[4])))
    }

    fn h_rt(a: &[f64; 7], t: f64) -> f64 {
        a[0] + t * (a[1] / 2.0 + t * (a[2] / 3.0 + t * (a[3] / 4.0 + t * a[4] / 5.0))) + a[5] / t
    }

    fn s_r(a: &[f64; 7], t: f64) -> f64 {
        a[0] * t.ln() + t * (a[1] + t * (a[2] / 2.0 + t * (a[3] / 3.0 + t * a[4] / 4.0))) + a[6]
    }

    fn validate(&self) -> Result<(), ThermoError> {
        if !(self.t_low < self.t_mid && self.t_mid < self.t_high) {
            return Err(ThermoError::InvalidTable(format!(
                "{}: ranges must satisfy t_low < t_mid < t_high",
                self.species
            )));
        }
        let tm = self.t_mid;
        let pairs = [
            ("h", Self::h_rt(&self.low, tm), Self::h_rt(&self.high, tm)),
            ("s", Self::s_r(&self.low, tm), Self::s_r(&self.high, tm)),
        ];
        for (what, lo, hi) in pairs {
            let scale = lo.abs().max(hi.abs()).max(1.0);
            if (lo - hi).abs() > 1e-3 * scale {
                return Err(ThermoError::InvalidTable(format!(
                    "{}: {what} discontinuous at {tm} K ({lo} vs {hi})",
                    self.species
                )));
            }
        }
        let mut t = self.t_low;
        while t <= self.t_high {
            if Self::cp_r(self.coeffs(t), t) <= 0.0 {
                return Err(ThermoError::InvalidTable(format!(
                    "{}: non-positive heat capacity at {t} K",
                    self.species
                )));
            }
            t += 10.0;
        }
        Ok(())
    }
}

const STANDARD_CURVES: [PropertyCurve; 4] = [
    PropertyCurve {
        species: Species::N2,
        // low-range polynomial is extrapolated down from 300 K
        t_low: 200.0,
        t_mid: 1000.0,
        t_high: 3500.0,
        low: [
            3.298677e+00,
            1.4082404e-03,
            -3.963222e-06,
            5.641515e-09,
            -2.444854e-12,
            -1.020899e+03,
            3.950372e+00,
        ],
        high: [
            2.92664e+00,
            1.4879768e-03,
            -5.68476e-07,
            1.0097038e-10,
            -6.753351e-15,
            -9.227977e+02,
            5.980528e+00,
        ],
    },
    PropertyCurve {
        species: Species::CO2,
        t_low: 200.0,
        t_mid: 1000.0,
        t_high: 3500.0,
        low: [
            2.35677352e+00,
            8.98459677e-03,
            -7.12356269e-06,
            2.45919022e-09,
            -1.43699548e-13,
            -4.83719697e+04,
            9.90105222e+00,
        ],
        high: [
            3.85746029e+00,
            4.41437026e-03,
            -2.21481404e-06,
            5.23490188e-10,
            -4.72084164e-14,
            -4.8759166e+04,
            2.27163806e+00,
        ],
    },
    PropertyCurve {
        species: Species::H2O,
        t_low: 200.0,
        t_mid: 1000.0,
        t_high: 3500.0,
        low: [
            4.19864056e+00,
            -2.0364341e-03,
            6.52040211e-06,
            -5.48797062e-09,
            1.77197817e-12,
            -3.02937267e+04,
            -8.49032208e-01,
        ],
        high: [
            3.03399249e+00,
            2.17691804e-03,
            -1.64072518e-07,
            -9.7041987e-11,
            1.68200992e-14,
            -3.00042971e+04,
            4.9667701e+00,
        ],
    },
    PropertyCurve {
        species: Species::O2,
        t_low: 200.0,
        t_mid: 1000.0,
        t_high: 3500.0,
        low: [
            3.78245636e+00,
            -2.99673416e-03,
            9.84730201e-06,
            -9.68129509e-09,
            3.24372837e-12,
            -1.06394356e+03,
            3.65767573e+00,
        ],
        high: [
            3.28253784e+00,
            1.48308754e-03,
            -7.57966669e-07,
            2.09470555e-10,
            -2.16717794e-14,
            -1.08845772e+03,
            5.45323129e+00,
        ],
    },
];

/// Property curves for all four species plus the gas constant used to
/// dimensionalize them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyTable {
    curves: [PropertyCurve; 4],
    gas_constant: f64,
}

impl Default for PropertyTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl PropertyTable {
    pub const fn standard() -> Self {
        PropertyTable {
            curves: STANDARD_CURVES,
            gas_constant: GAS_CONSTANT,
        }
    }

    pub fn with_gas_constant(mut self, r: f64) -> Self {
        self.gas_constant = r;
        self
    }

    pub fn gas_constant(&self) -> f64 {
        self.gas_constant
    }

    pub fn curve(&self, species: Species) -> &PropertyCurve {
        &self.curves[species.index()]
    }

    /// Molar heat capacity at constant pressure [J/(mol K)].
    pub fn cp(&self, species: Species, t: f64) -> Result<f64, ThermoError> {
        let c = self.curve(species);
        c.check(t)?;
        Ok(self.gas_constant * PropertyCurve::cp_r(c.coeffs(t), t))
    }

    /// Formation-referenced molar enthalpy [J/mol].
    pub fn enthalpy(&self, species: Species, t: f64) -> Result<f64, ThermoError> {
        let c = self.curve(species);
        c.check(t)?;
        Ok(self.gas_constant * t * PropertyCurve::h_rt(c.coeffs(t), t))
    }

    /// Absolute molar entropy at the reference pressure [J/(mol K)].
    pub fn entropy(&self, species: Species, t: f64) -> Result<f64, ThermoError> {
        let c = self.curve(species);
        c.check(t)?;
        Ok(self.gas_constant * PropertyCurve::s_r(c.coeffs(t), t))
    }

    /// Molar Gibbs energy `h - T s` [J/mol].
    pub fn gibbs(&self, species: Species, t: f64) -> Result<f64, ThermoError> {
        Ok(self.enthalpy(species, t)? - t * self.entropy(species, t)?)
    }

    /// Reads an override table.
    ///
    /// Column order: `species,t_low,t_mid,t_high,low_a1..low_a7,high_a1..high_a7`
    /// (18 columns, header row required). Every species must appear exactly once.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, ThermoError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let mut found: [Option<PropertyCurve>; 4] = [None; 4];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ThermoError::Csv {
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 18 {
                return Err(ThermoError::Csv {
                    line,
                    msg: format!("expected 18 columns, found {}", rec.len()),
                });
            }
            let species: Species = rec[0].parse()?;
            let mut nums = [0.0; 17];
            for (i, n) in nums.iter_mut().enumerate() {
                *n = rec[i + 1].trim().parse().map_err(|_| ThermoError::Csv {
                    line,
                    msg: format!("column {} is not a number: `{}`", i + 2, &rec[i + 1]),
                })?;
            }
            let mut low = [0.0; 7];
            let mut high = [0.0; 7];
            low.copy_from_slice(&nums[3..10]);
            high.copy_from_slice(&nums[10..17]);
            let curve = PropertyCurve {
                species,
                t_low: nums[0],
                t_mid: nums[1],
                t_high: nums[2],
                low,
                high,
            };
            curve.validate()?;
            if found[species.index()].replace(curve).is_some() {
                return Err(ThermoError::Csv {
                    line,
                    msg: format!("duplicate species {species}"),
                });
            }
        }
        let mut curves = STANDARD_CURVES;
        for s in Species::ALL {
            curves[s.index()] = found[s.index()]
                .ok_or_else(|| ThermoError::InvalidTable(format!("missing species {s}")))?;
        }
        Ok(PropertyTable {
            curves,
            gas_constant: GAS_CONSTANT,
        })
    }
}

/// Formation-referenced molar enthalpy from the standard table [J/mol].
pub fn enthalpy(species: Species, t: f64) -> Result<f64, ThermoError> {
    PropertyTable::standard().enthalpy(species, t)
}

/// Absolute molar entropy at the reference pressure from the standard table [J/(mol K)].
pub fn entropy(species: Species, t: f64) -> Result<f64, ThermoError> {
    PropertyTable::standard().entropy(species, t)
}

pub fn gibbs(species: Species, t: f64) -> Result<f64, ThermoError> {
    PropertyTable::standard().gibbs(species, t)
}

/// Diesel surrogate `C_x H_y`.
///
/// Formation enthalpy is anchored so that complete combustion to gaseous
/// CO2 and H2O at 298.15 K releases exactly `lhv` per kilogram. Entropy is a
/// constant standard value extrapolated with a constant heat capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelThermo {
    pub x: f64,
    pub y: f64,
    /// Lower heating value [J/kg].
    pub lhv: f64,
    /// Standard molar entropy at 298.15 K [J/(mol K)].
    #[serde(default = "FuelThermo::default_entropy")]
    pub standard_entropy: f64,
    /// Constant molar heat capacity [J/(mol K)].
    #[serde(default = "FuelThermo::default_cp")]
    pub heat_capacity: f64,
}

impl Default for FuelThermo {
    fn default() -> Self {
        FuelThermo {
            x: 14.4,
            y: 24.9,
            lhv: 42.50e6,
            standard_entropy: Self::default_entropy(),
            heat_capacity: Self::default_cp(),
        }
    }
}

impl FuelThermo {
    fn default_entropy() -> f64 {
        550.0
    }

    fn default_cp() -> f64 {
        450.0
    }

    pub fn new(x: f64, y: f64, lhv: f64) -> Result<Self, ThermoError> {
        let fuel = FuelThermo {
            x,
            y,
            lhv,
            ..Default::default()
        };
        fuel.validate()?;
        Ok(fuel)
    }

    pub fn validate(&self) -> Result<(), ThermoError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.x) || !ok(self.y) {
            return Err(ThermoError::InvalidFuel(format!(
                "formula coefficients must be positive (x={}, y={})",
                self.x, self.y
            )));
        }
        if !ok(self.lhv) || !ok(self.heat_capacity) || !self.standard_entropy.is_finite() {
            return Err(ThermoError::InvalidFuel(
                "LHV and heat capacity must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Molar mass [kg/mol].
    pub fn molar_mass(&self) -> f64 {
        ATOMIC_MASS_C * self.x + ATOMIC_MASS_H * self.y
    }

    /// Oxygen demand for complete combustion [mol O2 / mol fuel].
    pub fn oxygen_demand(&self) -> f64 {
        self.x + self.y / 4.0
    }

    /// Formation enthalpy at 298.15 K implied by the LHV anchor [J/mol].
    pub fn formation_enthalpy(&self, table: &PropertyTable) -> f64 {
        let h = |s| {
            table
                .enthalpy(s, T_STANDARD)
                .expect("298.15 K lies inside every species range")
        };
        self.x * h(Species::CO2) + 0.5 * self.y * h(Species::H2O)
            - self.oxygen_demand() * h(Species::O2)
            + self.lhv * self.molar_mass()
    }

    fn check(&self, t: f64) -> Result<(), ThermoError> {
        if t.is_finite() && (FUEL_T_MIN..=FUEL_T_MAX).contains(&t) {
            Ok(())
        } else {
            Err(ThermoError::OutOfRange {
                species: "fuel",
                t,
                lo: FUEL_T_MIN,
                hi: FUEL_T_MAX,
            })
        }
    }

    pub fn enthalpy(&self, t: f64, table: &PropertyTable) -> Result<f64, ThermoError> {
        self.check(t)?;
        Ok(self.formation_enthalpy(table) + self.heat_capacity * (t - T_STANDARD))
    }

    pub fn entropy(&self, t: f64) -> Result<f64, ThermoError> {
        self.check(t)?;
        Ok(self.standard_entropy + self.heat_capacity * (t / T_STANDARD).ln())
    }
}

/// Molar Gibbs energy of the surrogate fuel [J/mol].
pub fn fuel_gibbs(fuel: &FuelThermo, t: f64, table: &PropertyTable) -> Result<f64, ThermoError> {
    Ok(fuel.enthalpy(t, table)? - t * fuel.entropy(t)?)
}
