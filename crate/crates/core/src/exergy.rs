//! Eight-term exergy balance of the engine, its time integral and the
//! percentage breakdown against input exergy.
//!
//! Sign convention: exergy entering the engine is positive, leaving or
//! destroyed is negative. The `others` term closes the steady-state balance.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cylinder::{MeanValueMaps, MeanValues};
use crate::engine::EngineSpec;
use crate::maps::{rpm_to_rad_s, EngineMaps, MapError};
use crate::mixture::{self, FlowState, IntakeState, MixtureError, ReferenceState, Stoichiometry};
use crate::model::EngineModel;
use crate::thermo::{fuel_gibbs, FuelThermo, PropertyTable, Species, ThermoError};

/// `|others|` share above which a diagnostic is logged [%].
pub const OTHERS_WARN_PERCENT: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ExergyError {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{species} mole fraction {value} cannot enter a logarithm")]
    ZeroFraction { species: Species, value: f64 },
    #[error("{0} is not finite")]
    NonFinite(&'static str),
    #[error("input exergy (fuel + intake) is {0} J, percentages undefined")]
    ZeroInput(f64),
    #[error("rate trace is empty")]
    EmptyTrace,
    #[error("timestep must be positive, got {0}")]
    BadTimestep(f64),
    #[error("mean-value maps were generated at x_EGR = {maps}, requested {requested}")]
    EgrMismatch { maps: f64, requested: f64 },
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// [rad/s]
    pub omega: f64,
    /// [Nm]
    pub torque: f64,
}

impl OperatingPoint {
    pub fn new(omega: f64, torque: f64) -> Self {
        OperatingPoint { omega, torque }
    }

    pub fn from_rpm(speed_rpm: f64, torque: f64) -> Self {
        Self::new(rpm_to_rad_s(speed_rpm), torque)
    }

    pub fn speed_rpm(&self) -> f64 {
        crate::maps::rad_s_to_rpm(self.omega)
    }

    /// Brake power [W].
    pub fn power(&self) -> f64 {
        self.omega * self.torque
    }
}

/// The eight signed terms of the balance, as rates [W] or energies [J].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExergyTerms {
    pub fuel: f64,
    pub intake: f64,
    pub work: f64,
    pub heat: f64,
    pub exhaust: f64,
    pub combustion: f64,
    pub friction: f64,
    pub others: f64,
}

pub type ExergyRates = ExergyTerms;

impl ExergyTerms {
    pub const NAMES: [&'static str; 8] = [
        "fuel",
        "intake",
        "work",
        "heat",
        "exhaust",
        "combustion",
        "friction",
        "others",
    ];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.fuel,
            self.intake,
            self.work,
            self.heat,
            self.exhaust,
            self.combustion,
            self.friction,
            self.others,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        ExergyTerms {
            fuel: a[0],
            intake: a[1],
            work: a[2],
            heat: a[3],
            exhaust: a[4],
            combustion: a[5],
            friction: a[6],
            others: a[7],
        }
    }

    pub fn input(&self) -> f64 {
        self.fuel + self.intake
    }

    pub fn sum(&self) -> f64 {
        self.to_array().iter().sum()
    }

    /// `|Σ terms|` relative to the largest term magnitude.
    pub fn closure_residual(&self) -> f64 {
        let scale = self.to_array().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            0.0
        } else {
            self.sum().abs() / scale
        }
    }

    pub fn get(&self, term: Term) -> f64 {
        match term {
            Term::Work => self.work,
            Term::Heat => self.heat,
            Term::Exhaust => self.exhaust,
            Term::Combustion => self.combustion,
            Term::Friction => self.friction,
            Term::Others => self.others,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * k))
    }
}

/// Time integrals of the eight terms [J] over a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExergyTotals {
    #[serde(flatten)]
    pub terms: ExergyTerms,
    pub horizon_s: f64,
}

/// The six output terms reported as shares of input exergy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Work,
    Heat,
    Exhaust,
    Combustion,
    Friction,
    Others,
}

impl Term {
    pub const ALL: [Term; 6] = [
        Term::Work,
        Term::Combustion,
        Term::Exhaust,
        Term::Friction,
        Term::Heat,
        Term::Others,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Work => "work",
            Term::Heat => "heat",
            Term::Exhaust => "exhaust",
            Term::Combustion => "combustion",
            Term::Friction => "friction",
            Term::Others => "others",
        }
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per output term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TermShares {
    pub work: f64,
    pub heat: f64,
    pub exhaust: f64,
    pub combustion: f64,
    pub friction: f64,
    pub others: f64,
}

impl TermShares {
    pub fn from_fn(mut f: impl FnMut(Term) -> f64) -> Self {
        TermShares {
            work: f(Term::Work),
            heat: f(Term::Heat),
            exhaust: f(Term::Exhaust),
            combustion: f(Term::Combustion),
            friction: f(Term::Friction),
            others: f(Term::Others),
        }
    }

    pub fn get(&self, term: Term) -> f64 {
        match term {
            Term::Work => self.work,
            Term::Heat => self.heat,
            Term::Exhaust => self.exhaust,
            Term::Combustion => self.combustion,
            Term::Friction => self.friction,
            Term::Others => self.others,
        }
    }
}

/// Shares of input exergy [%]: magnitudes plus the signed ratios they
/// come from (negative for exergy leaving or destroyed).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PercentBreakdown {
    pub percent: TermShares,
    pub signed: TermShares,
}

impl PercentBreakdown {
    pub fn get(&self, term: Term) -> f64 {
        self.percent.get(term)
    }

    /// `Σ −signed`, 100 by construction of the closure.
    pub fn signed_total(&self) -> f64 {
        Term::ALL.iter().map(|&t| -self.signed.get(t)).sum()
    }
}

/// Physical flow exergy at temperature `t` relative to the dead state [J/mol].
pub fn psi_physical(
    species: Species,
    t: f64,
    env: &ReferenceState,
    table: &PropertyTable,
) -> Result<f64, ExergyError> {
    let t0 = env.temperature;
    let at = |temp: f64| -> Result<f64, ThermoError> {
        Ok(table.enthalpy(species, temp)? - t0 * table.entropy(species, temp)?)
    };
    if t == t0 {
        return Ok(0.0);
    }
    Ok(at(t)? - at(t0)?)
}

/// Chemical flow exergy `R T0 ln(f / f0)` [J/mol].
pub fn psi_chemical(f: f64, f0: f64, t0: f64, gas_constant: f64) -> Result<f64, ExergyError> {
    if !(f > 0.0) {
        return Err(ExergyError::NonPositive {
            what: "mole fraction",
            value: f,
        });
    }
    if !(f0 > 0.0) {
        return Err(ExergyError::NonPositive {
            what: "reference mole fraction",
            value: f0,
        });
    }
    Ok(gas_constant * t0 * (f / f0).ln())
}

/// Chemical-exergy multiplier on `LHV·ṁ_f` for `C_x H_y`.
pub fn fuel_exergy_multiplier(fuel: &FuelThermo) -> f64 {
    1.04224 + 0.011925 * fuel.x / fuel.y - 0.042 / fuel.x
}

pub fn x_fuel(fuel_mass_flow: f64, fuel: &FuelThermo) -> f64 {
    fuel_exergy_multiplier(fuel) * fuel.lhv * fuel_mass_flow
}

/// Chemical and physical parts of a stream's exergy per mole of stream.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StreamExergy {
    pub chemical: f64,
    pub physical: f64,
}

impl StreamExergy {
    pub fn total(&self) -> f64 {
        self.chemical + self.physical
    }
}

/// Mole-fraction weighted `Σ f (ψ_ch + ψ_ph)` of a stream, split in parts.
///
/// Absent species contribute nothing (the `f ln f` limit).
pub fn stream_exergy(
    composition: &mixture::Composition,
    t: f64,
    env: &ReferenceState,
    table: &PropertyTable,
) -> Result<StreamExergy, ExergyError> {
    let mut out = StreamExergy::default();
    for s in Species::ALL {
        let f = composition.get(s);
        if f == 0.0 {
            continue;
        }
        let f0 = env.composition.get(s);
        out.chemical += f * psi_chemical(f, f0, env.temperature, table.gas_constant())?;
        out.physical += f * psi_physical(s, t, env, table)?;
    }
    Ok(out)
}

pub fn x_intake(
    flows: &FlowState,
    intake: &IntakeState,
    env: &ReferenceState,
    table: &PropertyTable,
) -> Result<f64, ExergyError> {
    Ok(flows.intake
        * stream_exergy(&flows.intake_composition, intake.temperature, env, table)?.total())
}

pub fn x_work(op: &OperatingPoint) -> f64 {
    -op.power()
}

/// Carnot-weighted wall loss; `heat_rate` positive from gas to wall.
pub fn x_heat(heat_rate: f64, t_cyl: f64, env: &ReferenceState) -> Result<f64, ExergyError> {
    if !(t_cyl > 0.0) {
        return Err(ExergyError::NonPositive {
            what: "in-cylinder temperature",
            value: t_cyl,
        });
    }
    Ok((1.0 - env.temperature / t_cyl) * -heat_rate)
}

pub fn x_exhaust(
    flows: &FlowState,
    t_exhaust: f64,
    env: &ReferenceState,
    table: &PropertyTable,
) -> Result<f64, ExergyError> {
    Ok(-flows.exhaust * stream_exergy(&flows.exhaust_composition, t_exhaust, env, table)?.total())
}

/// Exergy destroyed by combustion at the mean in-cylinder state.
pub fn x_combustion(
    flows: &FlowState,
    stoich: &Stoichiometry,
    t_cyl: f64,
    p_cyl: f64,
    fuel: &FuelThermo,
    env: &ReferenceState,
    table: &PropertyTable,
) -> Result<f64, ExergyError> {
    if !(t_cyl > 0.0) {
        return Err(ExergyError::NonPositive {
            what: "in-cylinder temperature",
            value: t_cyl,
        });
    }
    if !(p_cyl > 0.0) {
        return Err(ExergyError::NonPositive {
            what: "in-cylinder pressure",
            value: p_cyl,
        });
    }
    if flows.fuel == 0.0 {
        return Ok(0.0);
    }
    let r = table.gas_constant();
    let g = |s| table.gibbs(s, t_cyl);
    let reaction = fuel_gibbs(fuel, t_cyl, table)?
        - fuel.x * g(Species::CO2)?
        - 0.5 * fuel.y * g(Species::H2O)?
        + fuel.oxygen_demand() * g(Species::O2)?;

    let f_in = &flows.intake_composition;
    let f_out = &flows.exhaust_composition;
    let positive = |s: Species, f: f64| {
        if f > 0.0 {
            Ok(f)
        } else {
            Err(ExergyError::ZeroFraction {
                species: s,
                value: f,
            })
        }
    };
    let n2_ratio = positive(Species::N2, f_in.get(Species::N2))?
        / positive(Species::N2, f_out.get(Species::N2))?;
    let dilution = stoich.lambda / (1.0 - stoich.x_egr)
        * fuel.oxygen_demand()
        * 3.76
        * r
        * t_cyl
        * n2_ratio.ln();

    let p_ratio = p_cyl / env.pressure;
    let mut partial = 0.0;
    for s in [Species::CO2, Species::H2O, Species::O2] {
        let (nu_in, nu_out) = (stoich.nu_in[s], stoich.nu_out[s]);
        if nu_in != 0.0 {
            partial += nu_in * (positive(s, f_in.get(s))? * p_ratio).ln();
        }
        if nu_out != 0.0 {
            partial -= nu_out * (positive(s, f_out.get(s))? * p_ratio).ln();
        }
    }
    partial *= r * t_cyl;

    Ok(-(env.temperature / t_cyl) * flows.fuel * (reaction + dilution + partial))
}

/// Mean friction power loss.
pub fn x_friction(op: &OperatingPoint, engine: &EngineSpec) -> f64 {
    let g = &engine.geometry;
    let fmep = engine
        .friction
        .fmep(op.omega, g.mean_piston_speed(op.omega));
    -op.omega / (4.0 * PI) * fmep * g.displacement
}

/// Closure term: the negative sum of the other seven.
pub fn x_others(terms: [f64; 7]) -> Result<f64, ExergyError> {
    if terms.iter().any(|v| !v.is_finite()) {
        return Err(ExergyError::NonFinite("exergy term"));
    }
    Ok(-terms.iter().sum::<f64>())
}

/// Assembles all eight terms from the evaluated seven.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    fuel: f64,
    intake: f64,
    work: f64,
    heat: f64,
    exhaust: f64,
    combustion: f64,
    friction: f64,
) -> Result<ExergyRates, ExergyError> {
    let others = x_others([fuel, intake, work, heat, exhaust, combustion, friction])?;
    Ok(ExergyTerms {
        fuel,
        intake,
        work,
        heat,
        exhaust,
        combustion,
        friction,
        others,
    })
}

/// Everything interpolated or derived on the way to the balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointState {
    pub op: OperatingPoint,
    pub x_egr: f64,
    pub lambda: f64,
    pub exhaust_temperature: f64,
    pub mean: MeanValues,
    pub flows: FlowState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointBalance {
    pub state: PointState,
    pub rates: ExergyRates,
}

/// Exergy rates at one operating point.
pub fn balance(
    op: &OperatingPoint,
    env: &ReferenceState,
    model: &EngineModel,
    maps: &EngineMaps,
    mean_maps: &MeanValueMaps,
) -> Result<ExergyRates, ExergyError> {
    Ok(balance_detail(op, env, model, maps, mean_maps)?.rates)
}

pub fn balance_detail(
    op: &OperatingPoint,
    env: &ReferenceState,
    model: &EngineModel,
    maps: &EngineMaps,
    mean_maps: &MeanValueMaps,
) -> Result<PointBalance, ExergyError> {
    let fuel_rate = maps.fuel_rate_at(op)?;
    let t_exhaust = maps.exhaust_temperature_at(op)?;
    let mean = mean_maps.at(op)?;
    let x_egr = mean_maps.x_egr;

    let air = mixture::air_mass_flow(
        op,
        &model.intake,
        model.engine.geometry.displacement,
        model.engine.volumetric_efficiency,
    )?;
    let lam = mixture::lambda(air, fuel_rate, &model.fuel, &env.composition)?;
    if lam < mixture::SMOKE_LIMIT_LAMBDA {
        log::warn!(
            "lambda {lam:.3} below smoke limit {} at {:.0} rpm / {:.0} Nm",
            mixture::SMOKE_LIMIT_LAMBDA,
            op.speed_rpm(),
            op.torque
        );
    }
    let stoich = mixture::stoichiometry(lam, x_egr, &model.fuel, &env.composition)?;
    let flows = mixture::flows_from_stoichiometry(fuel_rate, &model.fuel, &stoich);
    let table = &model.thermo;

    let rates = assemble(
        x_fuel(fuel_rate, &model.fuel),
        x_intake(&flows, &model.intake, env, table)?,
        x_work(op),
        x_heat(mean.heat_rate, mean.temperature, env)?,
        x_exhaust(&flows, t_exhaust, env, table)?,
        x_combustion(
            &flows,
            &stoich,
            mean.temperature,
            mean.pressure,
            &model.fuel,
            env,
            table,
        )?,
        x_friction(op, &model.engine),
    )?;
    Ok(PointBalance {
        state: PointState {
            op: *op,
            x_egr,
            lambda: lam,
            exhaust_temperature: t_exhaust,
            mean,
            flows,
        },
        rates,
    })
}

/// Trapezoidal time integral of a uniformly sampled rate trace.
pub fn integrate(rates: &[ExergyRates], dt: f64) -> Result<ExergyTotals, ExergyError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ExergyError::BadTimestep(dt));
    }
    let (first, last) = match (rates.first(), rates.last()) {
        (Some(f), Some(l)) => (f.to_array(), l.to_array()),
        _ => return Err(ExergyError::EmptyTrace),
    };
    let mut acc = [0.0; 8];
    for r in rates.iter().skip(1).take(rates.len().saturating_sub(2)) {
        for (a, v) in acc.iter_mut().zip(r.to_array()) {
            *a += v;
        }
    }
    let ends = if rates.len() == 1 { 0.0 } else { 0.5 };
    let totals = std::array::from_fn(|k| dt * (acc[k] + ends * (first[k] + last[k])));
    Ok(ExergyTotals {
        terms: ExergyTerms::from_array(totals),
        horizon_s: dt * (rates.len() - 1) as f64,
    })
}

/// Shares of input exergy over a horizon.
pub fn percentages(totals: &ExergyTotals) -> Result<PercentBreakdown, ExergyError> {
    percentages_of(&totals.terms)
}

/// Shares of input exergy for any consistent set of terms.
pub fn percentages_of(terms: &ExergyTerms) -> Result<PercentBreakdown, ExergyError> {
    let input = terms.input();
    if !(input > 0.0) {
        return Err(ExergyError::ZeroInput(input));
    }
    let signed = TermShares::from_fn(|t| terms.get(t) / input * 100.0);
    let out = PercentBreakdown {
        percent: TermShares::from_fn(|t| signed.get(t).abs()),
        signed,
    };
    if out.percent.others > OTHERS_WARN_PERCENT {
        log::warn!(
            "unmodelled share {:.2}% exceeds {OTHERS_WARN_PERCENT}%",
            signed.others
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::Composition;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn env() -> ReferenceState {
        ReferenceState::default()
    }

    #[test]
    fn fuel_multiplier() {
        let fuel = FuelThermo::default();
        assert!((fuel_exergy_multiplier(&fuel) - 1.04622).abs() < 1e-4);
        assert_eq!(x_fuel(0.0, &fuel), 0.0);
        assert!((x_fuel(1e-3, &fuel) - 44.46e3).abs() < 10.0);
    }

    #[test]
    fn physical_exergy() {
        let t = PropertyTable::standard();
        for s in Species::ALL {
            assert_eq!(psi_physical(s, 293.15, &env(), &t).unwrap(), 0.0);
            for k in 0..60 {
                let temp = 293.15 + 50.0 * k as f64;
                assert!(psi_physical(s, temp, &env(), &t).unwrap() >= 0.0);
            }
        }
        // constant-cp estimate: cp (ΔT − T0 ln(T/T0)) with cp(N2) ≈ 29.12
        let n2 = psi_physical(Species::N2, 323.15, &env(), &t).unwrap();
        let estimate = 29.12 * (30.0 - 293.15 * (323.15f64 / 293.15).ln());
        assert!((n2 - estimate).abs() < 0.5, "{n2} vs {estimate}");
    }

    #[test]
    fn chemical_exergy() {
        assert_eq!(psi_chemical(0.2, 0.2, 293.15, 8.314).unwrap(), 0.0);
        let two = psi_chemical(0.4, 0.2, 293.15, 8.314).unwrap();
        assert!((two - 1689.0).abs() < 1.0);
        assert_eq!(two, -psi_chemical(0.2, 0.4, 293.15, 8.314).unwrap());
        assert!(psi_chemical(0.0, 0.2, 293.15, 8.314).is_err());
        assert!(psi_chemical(0.1, -0.2, 293.15, 8.314).is_err());
    }

    #[test]
    fn work_heat_friction() {
        let op = OperatingPoint::from_rpm(1973.0, 512.0);
        assert!((x_work(&op) + 105.8e3).abs() < 100.0);
        assert_eq!(x_work(&OperatingPoint::new(200.0, 0.0)), 0.0);
        assert_eq!(x_heat(0.0, 900.0, &env()).unwrap(), 0.0);
        assert_eq!(x_heat(1e4, 293.15, &env()).unwrap(), 0.0);
        assert_relative_eq!(
            x_heat(1e4, 586.3, &env()).unwrap(),
            -5e3,
            max_relative = 1e-12
        );
        assert!(x_heat(1e4, 0.0, &env()).is_err());

        let engine = EngineSpec::default();
        assert_eq!(x_friction(&OperatingPoint::new(0.0, 0.0), &engine), 0.0);
        let f = x_friction(&op, &engine);
        assert!((f + 19.85e3).abs() < 30.0);
        assert!(((f / x_work(&op)) / (6.92 / 36.8) - 1.0).abs() < 0.1);
        let mut prev = 0.0;
        for k in 1..100 {
            let v = x_friction(&OperatingPoint::new(3.2 * k as f64, 0.0), &engine);
            assert!(v < prev);
            prev = v;
        }
    }

    fn flows_at(lam: f64, x_egr: f64) -> (FlowState, Stoichiometry) {
        let fuel = FuelThermo::default();
        let st = mixture::stoichiometry(lam, x_egr, &fuel, &Composition::ambient()).unwrap();
        (mixture::flows_from_stoichiometry(6.4e-3, &fuel, &st), st)
    }

    #[test]
    fn intake_vanishes_at_dead_state() {
        let (flows, _) = flows_at(2.0, 0.0);
        let t = PropertyTable::standard();
        let dead = IntakeState {
            temperature: 293.15,
            pressure: 1e5,
        };
        assert_eq!(x_intake(&flows, &dead, &env(), &t).unwrap(), 0.0);
        let hot = x_intake(&flows, &IntakeState::default(), &env(), &t).unwrap();
        assert!(hot > 0.0);
        let doubled = x_intake(&flows.scaled(2.0), &IntakeState::default(), &env(), &t).unwrap();
        assert_relative_eq!(doubled, 2.0 * hot, max_relative = 1e-14);
    }

    #[test]
    fn exhaust_shrinks_with_warmer_ambient() {
        let (flows, _) = flows_at(2.0, 0.2);
        let t = PropertyTable::standard();
        let mut prev = f64::INFINITY;
        for t0 in [263.15, 273.15, 283.15, 293.15, 303.15, 313.15] {
            let v = x_exhaust(&flows, 720.0, &env().with_temperature(t0), &t).unwrap();
            assert!(v < 0.0 && v.abs() < prev);
            prev = v.abs();
        }
        let doubled = x_exhaust(&flows.scaled(2.0), 720.0, &env(), &t).unwrap();
        let single = x_exhaust(&flows, 720.0, &env(), &t).unwrap();
        assert_relative_eq!(doubled, 2.0 * single, max_relative = 1e-14);
    }

    #[test]
    fn exhaust_chemical_part_is_minor() {
        let (flows, _) = flows_at(2.05, 0.2);
        let s = stream_exergy(
            &flows.exhaust_composition,
            720.0,
            &env(),
            &PropertyTable::standard(),
        )
        .unwrap();
        assert!(s.chemical.abs() < s.physical.abs());
    }

    #[test]
    fn combustion_shrinks_with_hotter_cylinder() {
        let (flows, st) = flows_at(2.0, 0.2);
        let fuel = FuelThermo::default();
        let t = PropertyTable::standard();
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let t_cyl = 700.0 + 50.0 * k as f64;
            let v = x_combustion(&flows, &st, t_cyl, 40e5, &fuel, &env(), &t).unwrap();
            assert!(v < 0.0 && v.abs() < prev);
            prev = v.abs();
        }
        let idle = flows.scaled(0.0);
        assert_eq!(
            x_combustion(&idle, &st, 900.0, 40e5, &fuel, &env(), &t).unwrap(),
            0.0
        );
    }

    #[test]
    fn integration_rules() {
        let r = ExergyTerms::from_array([10.0, 1.0, -4.0, -0.5, -2.0, -3.0, -1.0, -0.5]);
        let constant = vec![r; 101];
        let tot = integrate(&constant, 1.0).unwrap();
        assert_eq!(tot.horizon_s, 100.0);
        for (a, b) in tot.terms.to_array().iter().zip(r.to_array()) {
            assert_relative_eq!(*a, b * 100.0, max_relative = 1e-12);
        }
        assert!(tot.terms.closure_residual() < 1e-9);

        let ramp: Vec<_> = (0..=10).map(|k| r.scaled(k as f64 / 10.0)).collect();
        let tot = integrate(&ramp, 0.5).unwrap();
        assert_relative_eq!(tot.terms.fuel, 10.0 * 5.0 / 2.0, max_relative = 1e-12);

        assert!(matches!(integrate(&[], 1.0), Err(ExergyError::EmptyTrace)));
        assert!(integrate(&constant, 0.0).is_err());
    }

    #[test]
    fn horizon_invariance() {
        let r = ExergyTerms::from_array([10.0, 1.0, -4.0, -0.5, -2.0, -3.0, -1.0, -0.5]);
        let base = percentages(&integrate(&[r; 2], 1.0).unwrap()).unwrap();
        for n in [11, 101] {
            let p = percentages(&integrate(&vec![r; n], 1.0).unwrap()).unwrap();
            for t in Term::ALL {
                assert!((p.get(t) - base.get(t)).abs() <= 1e-12 * base.get(t).max(1.0));
            }
        }
    }

    #[test]
    fn percentages_need_input() {
        let zero = ExergyTotals::default();
        assert!(matches!(percentages(&zero), Err(ExergyError::ZeroInput(_))));
    }

    #[test]
    fn others_rejects_non_finite() {
        assert_eq!(x_others([0.0; 7]).unwrap(), 0.0);
        assert!(x_others([0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn totals_serialize_flat() {
        let t = ExergyTotals {
            terms: ExergyTerms::default(),
            horizon_s: 3.0,
        };
        let v: serde_json::Value = serde_json::to_value(t).unwrap();
        for k in ExergyTerms::NAMES
            .iter()
            .chain(std::iter::once(&"horizon_s"))
        {
            assert!(v.get(k).is_some(), "{k}");
        }
    }

    proptest! {
        #[test]
        fn closure_and_percent_algebra(
            fuel in 1e3f64..1e6, intake in 0.0f64..1e4,
            work in -5e5f64..0.0, heat in -5e4f64..0.0, exhaust in -2e5f64..0.0,
            comb in -3e5f64..0.0, fric in -5e4f64..0.0,
        ) {
            let r = assemble(fuel, intake, work, heat, exhaust, comb, fric).unwrap();
            prop_assert!(r.closure_residual() < 1e-9);
            let p = percentages_of(&r).unwrap();
            prop_assert!((p.signed_total() - 100.0).abs() < 1e-6);
        }
    }
}
