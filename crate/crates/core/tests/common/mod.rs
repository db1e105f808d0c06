//! Shared fixtures and a naive, term-by-term transcription of the exergy
//! balance used as an independent oracle.

#![allow(dead_code)]

use std::f64::consts::PI;

use mvexergy_core::exergy::PointState;
use mvexergy_core::thermo::{PropertyTable, Species};
use mvexergy_core::{EngineMaps, EngineModel, ExergyRates, MeanValueMaps, ReferenceState};

pub const NOMINAL_RPM: f64 = 1973.0;
pub const NOMINAL_TORQUE: f64 = 512.0;

pub fn default_setup() -> (EngineModel, EngineMaps) {
    let model = EngineModel::default();
    let maps = mvexergy_core::maps::synth_maps(&model.engine, &model.fuel, &model.synth).unwrap();
    (model, maps)
}

pub fn mean_maps(model: &EngineModel, maps: &EngineMaps, x_egr: f64) -> MeanValueMaps {
    mvexergy_core::cylinder::generate_maps(
        model,
        maps.grid(),
        x_egr,
        maps,
        &ReferenceState::default(),
    )
    .unwrap()
}

/// Molar stream exergy `Σ f [R T0 ln(f/f0) + (h - h0) - T0 (s - s0)]`.
fn stream(f: [f64; 4], t: f64, env: &ReferenceState, table: &PropertyTable) -> f64 {
    let r = table.gas_constant();
    let t0 = env.temperature;
    let mut sum = 0.0;
    for (k, s) in Species::ALL.into_iter().enumerate() {
        if f[k] == 0.0 {
            continue;
        }
        let f0 = env.composition.get(s);
        let chemical = r * t0 * (f[k] / f0).ln();
        let dh = table.enthalpy(s, t).unwrap() - table.enthalpy(s, t0).unwrap();
        let ds = table.entropy(s, t).unwrap() - table.entropy(s, t0).unwrap();
        sum += f[k] * (chemical + dh - t0 * ds);
    }
    sum
}

fn fractions(c: &mvexergy_core::Composition) -> [f64; 4] {
    Species::ALL.map(|s| c.get(s))
}

/// Seven evaluated terms, then the closure, from the raw point state.
pub fn oracle_rates(state: &PointState, env: &ReferenceState, model: &EngineModel) -> ExergyRates {
    let table = &model.thermo;
    let fuel = &model.fuel;
    let r = table.gas_constant();
    let t0 = env.temperature;
    let fl = &state.flows;
    let (omega, torque) = (state.op.omega, state.op.torque);
    let (t_cyl, p_cyl) = (state.mean.temperature, state.mean.pressure);

    let x_fuel = (1.04224 + 0.011925 * fuel.x / fuel.y - 0.042 / fuel.x) * fuel.lhv * fl.fuel_mass;

    let f_in = fractions(&fl.intake_composition);
    let f_ex = fractions(&fl.exhaust_composition);
    let x_intake = fl.intake * stream(f_in, model.intake.temperature, env, table);
    let x_exhaust = -fl.exhaust * stream(f_ex, state.exhaust_temperature, env, table);
    let x_work = -omega * torque;
    let x_heat = -(1.0 - t0 / t_cyl) * state.mean.heat_rate;

    // fuel Gibbs energy from the LHV-anchored formation enthalpy
    let h298 = |s| table.enthalpy(s, 298.15).unwrap();
    let g = |s| table.enthalpy(s, t_cyl).unwrap() - t_cyl * table.entropy(s, t_cyl).unwrap();
    let demand = fuel.x + fuel.y / 4.0;
    let molar_mass = 0.012011 * fuel.x + 0.001008 * fuel.y;
    let h_f = fuel.x * h298(Species::CO2) + 0.5 * fuel.y * h298(Species::H2O)
        - demand * h298(Species::O2)
        + fuel.lhv * molar_mass
        + fuel.heat_capacity * (t_cyl - 298.15);
    let s_f = fuel.standard_entropy + fuel.heat_capacity * (t_cyl / 298.15).ln();
    let g_f = h_f - t_cyl * s_f;
    let a =
        g_f - fuel.x * g(Species::CO2) - 0.5 * fuel.y * g(Species::H2O) + demand * g(Species::O2);

    let n2 = 0;
    let b =
        state.lambda / (1.0 - state.x_egr) * demand * 3.76 * r * t_cyl * (f_in[n2] / f_ex[n2]).ln();

    let ratio = p_cyl / env.pressure;
    let mut c = 0.0;
    for (k, _) in Species::ALL.iter().enumerate().skip(1) {
        let nu_in = f_in[k] * fl.intake / fl.fuel;
        let nu_out = f_ex[k] * fl.exhaust / fl.fuel;
        if nu_in > 0.0 {
            c += nu_in * (f_in[k] * ratio).ln();
        }
        if nu_out > 0.0 {
            c -= nu_out * (f_ex[k] * ratio).ln();
        }
    }
    c *= r * t_cyl;
    let x_comb = -(t0 / t_cyl) * fl.fuel * (a + b + c);

    let geo = &model.engine.geometry;
    let sp = 2.0 * geo.stroke * omega / (2.0 * PI);
    let fmep = 1000.0 * (75.0 + 0.458 * omega + 0.4 * sp * sp);
    let x_fric = -fmep * geo.displacement * omega / (4.0 * PI);

    let seven = [x_fuel, x_intake, x_work, x_heat, x_exhaust, x_comb, x_fric];
    let others = -seven.iter().sum::<f64>();
    ExergyRates {
        fuel: x_fuel,
        intake: x_intake,
        work: x_work,
        heat: x_heat,
        exhaust: x_exhaust,
        combustion: x_comb,
        friction: x_fric,
        others,
    }
}
