//! Lean-combustion stoichiometry, EGR loop composition and molar flows.
//!
//! All mole tallies are per mole of fuel unless stated otherwise. The fresh
//! charge has the ambient reference composition, and λ is the oxygen-based
//! excess ratio against that charge, so `λ = 1` consumes all the fresh O2.
//! EGR rates are molar fractions of the total intake charge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exergy::OperatingPoint;
use crate::thermo::{FuelThermo, PerSpecies, Species, ThermoError};

/// Tolerance on composition normalization.
pub const COMPOSITION_TOL: f64 = 1e-12;
/// Convergence tolerance of the EGR fixed point (max fraction change).
pub const EGR_TOL: f64 = 1e-12;
pub const EGR_MAX_ITER: usize = 200;
/// Upper bound (exclusive) for the EGR rate.
pub const EGR_MAX: f64 = 0.6;
/// Below this λ a smoke-limit warning is logged.
pub const SMOKE_LIMIT_LAMBDA: f64 = 1.2;

/// Specific gas constant used by the speed-density air model [J/(kg K)].
pub const R_AIR: f64 = 287.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixtureError {
    #[error("invalid composition: {0}")]
    InvalidComposition(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("air-fuel equivalence ratio undefined for fuel flow {0} kg/s")]
    UndefinedLambda(f64),
    #[error("rich mixture (lambda = {0:.4} < 1): complete combustion cannot hold")]
    RichMixture(f64),
    #[error("EGR rate {0} outside [0, {EGR_MAX})")]
    EgrOutOfRange(f64),
    #[error("engine speed must be positive, got {0} rad/s")]
    NonPositiveSpeed(f64),
    #[error(
        "EGR fixed point did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

/// Mole fractions over the tracked species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PerSpecies", into = "PerSpecies")]
pub struct Composition(PerSpecies);

impl Composition {
    pub fn new(fractions: PerSpecies) -> Result<Self, MixtureError> {
        if fractions
            .0
            .iter()
            .any(|f| !f.is_finite() || *f < 0.0 || *f > 1.0)
        {
            return Err(MixtureError::InvalidComposition(format!(
                "fractions must lie in [0, 1]: {:?}",
                fractions.0
            )));
        }
        let sum = fractions.sum();
        if (sum - 1.0).abs() > COMPOSITION_TOL {
            return Err(MixtureError::InvalidComposition(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(Composition(fractions))
    }

    /// Normalizes non-negative molar amounts.
    pub fn from_moles(moles: PerSpecies) -> Result<Self, MixtureError> {
        let total = moles.sum();
        if !(total > 0.0) || moles.0.iter().any(|n| *n < 0.0) {
            return Err(MixtureError::InvalidComposition(format!(
                "cannot normalize molar amounts {:?}",
                moles.0
            )));
        }
        Self::new(moles.scale(1.0 / total))
    }

    /// Reference-state atmosphere with the minor "others" share folded into N2.
    pub fn ambient() -> Self {
        Composition(PerSpecies([0.7567 + 0.0092, 0.0003, 0.0303, 0.2035]))
    }

    /// Dry air as 1 mol O2 per 3.76 mol N2.
    pub fn dry_air() -> Self {
        Composition(PerSpecies([3.76 / 4.76, 0.0, 0.0, 1.0 / 4.76]))
    }

    pub fn fractions(&self) -> &PerSpecies {
        &self.0
    }

    pub fn get(&self, s: Species) -> f64 {
        self.0[s]
    }

    /// Mean molar mass [kg/mol].
    pub fn molar_mass(&self) -> f64 {
        self.0.iter().map(|(s, f)| f * s.molar_mass()).sum()
    }

    pub fn max_abs_diff(&self, other: &Composition) -> f64 {
        self.0
             .0
            .iter()
            .zip(other.0 .0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<PerSpecies> for Composition {
    type Error = MixtureError;
    fn try_from(value: PerSpecies) -> Result<Self, Self::Error> {
        Composition::new(value)
    }
}

impl From<Composition> for PerSpecies {
    fn from(c: Composition) -> Self {
        c.0
    }
}

/// Dead state of the exergy analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceState {
    /// T0 [K]
    pub temperature: f64,
    /// P0 [Pa]
    pub pressure: f64,
    pub composition: Composition,
}

impl Default for ReferenceState {
    fn default() -> Self {
        ReferenceState {
            temperature: 293.15,
            pressure: 1.0e5,
            composition: Composition::ambient(),
        }
    }
}

impl ReferenceState {
    pub fn with_temperature(mut self, t0: f64) -> Self {
        self.temperature = t0;
        self
    }

    pub fn validate(&self) -> Result<(), MixtureError> {
        if !(self.temperature > 0.0 && self.pressure > 0.0) {
            return Err(MixtureError::InvalidState(format!(
                "reference state needs T0 > 0 and P0 > 0 (T0={}, P0={})",
                self.temperature, self.pressure
            )));
        }
        Composition::new(self.composition.0).map(|_| ())
    }
}

/// Intake manifold state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntakeState {
    /// T_I [K]
    pub temperature: f64,
    /// P_I [Pa]
    pub pressure: f64,
}

impl Default for IntakeState {
    fn default() -> Self {
        IntakeState {
            temperature: 323.15,
            pressure: 1.0e5,
        }
    }
}

impl IntakeState {
    pub fn validate(&self) -> Result<(), MixtureError> {
        if self.temperature > 0.0 && self.pressure > 0.0 {
            Ok(())
        } else {
            Err(MixtureError::InvalidState(format!(
                "intake state needs T_I > 0 and P_I > 0 (T_I={}, P_I={})",
                self.temperature, self.pressure
            )))
        }
    }
}

/// Per-mole-fuel species tallies on the charge (ν^I) and exhaust (ν^E) sides.
///
/// Both sides include every species present, EGR-carried ones too.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stoichiometry {
    pub nu_in: PerSpecies,
    pub nu_out: PerSpecies,
    pub lambda: f64,
    pub x_egr: f64,
    /// f^I
    pub intake: Composition,
    /// f^E
    pub exhaust: Composition,
}

impl Stoichiometry {
    /// Largest relative mismatch of C, H, O, N between charge + fuel and exhaust.
    pub fn atom_imbalance(&self, fuel: &FuelThermo) -> f64 {
        let mut lhs = self.nu_in.atoms();
        lhs[0] += fuel.x;
        lhs[1] += fuel.y;
        let rhs = self.nu_out.atoms();
        lhs.iter()
            .zip(rhs.iter())
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn intake_composition(&self) -> Composition {
        self.intake
    }

    pub fn exhaust_composition(&self) -> Composition {
        self.exhaust
    }
}

/// Molar flows through the engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    /// ṁ_f [kg/s]
    pub fuel_mass: f64,
    /// ṅ_f [mol/s]
    pub fuel: f64,
    /// ṅ_1, total intake charge including EGR [mol/s]
    pub intake: f64,
    /// ṅ_E, total cylinder-out exhaust [mol/s]
    pub exhaust: f64,
    pub intake_composition: Composition,
    pub exhaust_composition: Composition,
}

impl FlowState {
    pub fn scaled(&self, k: f64) -> Self {
        FlowState {
            fuel_mass: self.fuel_mass * k,
            fuel: self.fuel * k,
            intake: self.intake * k,
            exhaust: self.exhaust * k,
            ..*self
        }
    }

    /// Largest relative C/H/O/N mismatch of (intake + fuel) against exhaust.
    pub fn atom_imbalance(&self, fuel: &FuelThermo) -> f64 {
        let mut lhs = self
            .intake_composition
            .fractions()
            .scale(self.intake)
            .atoms();
        lhs[0] += fuel.x * self.fuel;
        lhs[1] += fuel.y * self.fuel;
        let rhs = self
            .exhaust_composition
            .fractions()
            .scale(self.exhaust)
            .atoms();
        lhs.iter()
            .zip(rhs.iter())
            .map(|(a, b)| {
                let scale = a.abs().max(b.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Stoichiometric air/fuel mass ratio with dry air (3.76 mol N2 per mol O2).
pub fn stoich_air_fuel_ratio(fuel: &FuelThermo) -> f64 {
    stoich_air_fuel_ratio_with(fuel, &Composition::dry_air())
}

/// Stoichiometric air/fuel mass ratio for an arbitrary fresh-air composition.
pub fn stoich_air_fuel_ratio_with(fuel: &FuelThermo, air: &Composition) -> f64 {
    let air_moles = fuel.oxygen_demand() / air.get(Species::O2);
    air_moles * air.molar_mass() / fuel.molar_mass()
}

/// Speed-density fresh-air flow, four-stroke breathing [kg/s].
pub fn air_mass_flow(
    op: &OperatingPoint,
    intake: &IntakeState,
    displacement: f64,
    volumetric_efficiency: f64,
) -> Result<f64, MixtureError> {
    if !(op.omega > 0.0) {
        return Err(MixtureError::NonPositiveSpeed(op.omega));
    }
    let density = intake.pressure / (R_AIR * intake.temperature);
    Ok(volumetric_efficiency * density * displacement * op.omega / (4.0 * std::f64::consts::PI))
}

/// Air-fuel equivalence ratio λ for the given fresh-air composition.
pub fn lambda(
    air_flow: f64,
    fuel_flow: f64,
    fuel: &FuelThermo,
    air: &Composition,
) -> Result<f64, MixtureError> {
    if !(fuel_flow > 0.0) {
        return Err(MixtureError::UndefinedLambda(fuel_flow));
    }
    let lam = air_flow / (fuel_flow * stoich_air_fuel_ratio_with(fuel, air));
    if lam < 1.0 {
        return Err(MixtureError::RichMixture(lam));
    }
    if lam < SMOKE_LIMIT_LAMBDA {
        log::debug!("lambda {lam:.3} below smoke limit {SMOKE_LIMIT_LAMBDA}");
    }
    Ok(lam)
}

fn check_lambda(lam: f64) -> Result<(), MixtureError> {
    if lam.is_nan() || lam < 1.0 {
        Err(MixtureError::RichMixture(lam))
    } else {
        Ok(())
    }
}

fn check_egr(x_egr: f64) -> Result<(), MixtureError> {
    if (0.0..EGR_MAX).contains(&x_egr) {
        Ok(())
    } else {
        Err(MixtureError::EgrOutOfRange(x_egr))
    }
}

/// Fresh charge per mole of fuel.
fn fresh_moles(lam: f64, fuel: &FuelThermo, ambient: &Composition) -> f64 {
    lam * fuel.oxygen_demand() / ambient.get(Species::O2)
}

/// Burns one mole of fuel completely in `charge` (mol per mol fuel).
fn burn(charge: PerSpecies, fuel: &FuelThermo) -> PerSpecies {
    let mut out = charge;
    out[Species::CO2] += fuel.x;
    out[Species::H2O] += 0.5 * fuel.y;
    out[Species::O2] -= fuel.oxygen_demand();
    out
}

/// Exhaust composition of lean complete combustion with fresh `ambient` air.
pub fn exhaust_composition(
    lam: f64,
    fuel: &FuelThermo,
    ambient: &Composition,
) -> Result<Composition, MixtureError> {
    check_lambda(lam)?;
    let mut charge = ambient.fractions().scale(fresh_moles(lam, fuel, ambient));
    // exact zero residual O2 at λ = 1
    charge[Species::O2] = lam * fuel.oxygen_demand();
    Composition::from_moles(burn(charge, fuel))
}

/// Steady-state EGR loop by successive substitution.
///
/// Returns `(f^I, f^E)`. The exhaust composition is recomputed from the
/// converged charge, so atoms balance exactly across the cylinder.
pub fn egr_fixed_point(
    lam: f64,
    x_egr: f64,
    fuel: &FuelThermo,
    ambient: &Composition,
) -> Result<(Composition, Composition), MixtureError> {
    let st = stoichiometry(lam, x_egr, fuel, ambient)?;
    Ok((st.intake, st.exhaust))
}

/// Per-mole-fuel charge and exhaust tallies at the EGR fixed point.
pub fn stoichiometry(
    lam: f64,
    x_egr: f64,
    fuel: &FuelThermo,
    ambient: &Composition,
) -> Result<Stoichiometry, MixtureError> {
    check_lambda(lam)?;
    check_egr(x_egr)?;
    let n_in = fresh_moles(lam, fuel, ambient) / (1.0 - x_egr);
    let f0 = *ambient.fractions();

    let mut f_in = f0;
    let mut iterations = 0;
    if x_egr > 0.0 {
        let mut residual = f64::INFINITY;
        while residual >= EGR_TOL {
            if iterations == EGR_MAX_ITER {
                return Err(MixtureError::NoConvergence {
                    iterations,
                    residual,
                });
            }
            let f_ex = Composition::from_moles(burn(f_in.scale(n_in), fuel))?;
            let next = PerSpecies::from_fn(|s| (1.0 - x_egr) * f0[s] + x_egr * f_ex.get(s));
            residual = next
                .0
                .iter()
                .zip(f_in.0.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            f_in = next;
            iterations += 1;
        }
    }
    let (f_in, nu_in) = if x_egr == 0.0 {
        let mut nu = f0.scale(n_in);
        nu[Species::O2] = lam * fuel.oxygen_demand();
        (*ambient, nu)
    } else {
        let f = Composition::from_moles(f_in)?;
        (f, f.fractions().scale(n_in))
    };
    let mut nu_out = burn(nu_in, fuel);
    if nu_out[Species::O2] < 0.0 {
        nu_out[Species::O2] = 0.0;
    }
    log::trace!("EGR fixed point converged in {iterations} iterations");
    Ok(Stoichiometry {
        nu_in,
        nu_out,
        lambda: lam,
        x_egr,
        intake: f_in,
        exhaust: Composition::from_moles(nu_out)?,
    })
}

/// Molar flow bookkeeping for a fuel mass flow.
pub fn molar_flows(
    fuel_mass_flow: f64,
    lam: f64,
    x_egr: f64,
    fuel: &FuelThermo,
    ambient: &Composition,
) -> Result<FlowState, MixtureError> {
    if !(fuel_mass_flow >= 0.0) {
        return Err(MixtureError::InvalidState(format!(
            "fuel mass flow must be non-negative, got {fuel_mass_flow}"
        )));
    }
    let st = stoichiometry(lam, x_egr, fuel, ambient)?;
    Ok(flows_from_stoichiometry(fuel_mass_flow, fuel, &st))
}

pub(crate) fn flows_from_stoichiometry(
    fuel_mass_flow: f64,
    fuel: &FuelThermo,
    st: &Stoichiometry,
) -> FlowState {
    let n_fuel = fuel_mass_flow / fuel.molar_mass();
    FlowState {
        fuel_mass: fuel_mass_flow,
        fuel: n_fuel,
        intake: n_fuel * st.nu_in.sum(),
        exhaust: n_fuel * st.nu_out.sum(),
        intake_composition: st.intake,
        exhaust_composition: st.exhaust,
    }
}
