//! Acceptance criteria AC-1 to AC-11, one line each.
//!
//! Runs without the libtest harness so every line is printed under
//! `cargo test`; exits non-zero when any criterion fails.

mod common;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use common::{default_setup, oracle_rates, NOMINAL_RPM, NOMINAL_TORQUE};
use mvexergy_core::cli::{run, Cli};
use mvexergy_core::exergy::{self, balance_detail, percentages, percentages_of};
use mvexergy_core::mixture::{self, stoichiometry};
use mvexergy_core::sweep::{self, cycle_stats, demo_cycles, evaluate_cycle, Axis, Direction};
use mvexergy_core::thermo::{PropertyTable, Species};
use mvexergy_core::{
    CycleTrace, EngineMaps, EngineModel, ExergyRates, MeanValueMaps, OperatingPoint,
    ReferenceState, SweepGrid, Term,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn sample<S: Strategy>(runner: &mut TestRunner, s: &S) -> S::Value {
    s.new_tree(runner).expect("strategy draws").current()
}

/// Random speed/torque inside the map box, away from the zero-torque edge.
fn random_op(runner: &mut TestRunner, maps: &EngineMaps) -> OperatingPoint {
    let g = maps.grid();
    let (s_lo, s_hi) = g.speed_box();
    let (_, t_hi) = g.torque_box();
    let rpm = sample(runner, &(s_lo..=s_hi));
    let torque = sample(runner, &(0.05 * t_hi..=t_hi));
    OperatingPoint::from_rpm(rpm, torque)
}

struct Fixture {
    model: EngineModel,
    maps: EngineMaps,
    grid: SweepGrid,
    /// One per grid EGR rate, in grid order.
    mean: Vec<MeanValueMaps>,
    map_time: Duration,
}

impl Fixture {
    fn new() -> Self {
        let (model, maps) = default_setup();
        let grid = SweepGrid::default();
        let t = Instant::now();
        let mean = sweep::mean_maps_for(&model, &maps, &grid.x_egr, 0).unwrap();
        Fixture {
            model,
            maps,
            grid,
            mean,
            map_time: t.elapsed(),
        }
    }
}

fn closure(fx: &Fixture, worst_pct: &mut f64) -> Outcome {
    let start = Instant::now();
    let mut rng = runner(1000);
    let ops: Vec<_> = (0..1000).map(|_| random_op(&mut rng, &fx.maps)).collect();
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for &t0 in &fx.grid.t0 {
        let env = ReferenceState::default().with_temperature(t0);
        for mm in &fx.mean {
            for op in &ops {
                let rates = match exergy::balance(op, &env, &fx.model, &fx.maps, mm) {
                    Ok(r) => r,
                    Err(e) => return outcome(false, format!("balance failed at {op:?}: {e}")),
                };
                worst = worst.max(rates.closure_residual());
                let shares = percentages_of(&rates).unwrap();
                *worst_pct = worst_pct.max((shares.signed_total() - 100.0).abs());
                count += 1;
            }
        }
    }
    let elapsed = start.elapsed() + fx.map_time;
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(30),
        format!(
            "{count} balances, worst residual {worst:.2e}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn fuel_multiplier() -> Outcome {
    let fuel = mvexergy_core::FuelThermo::default();
    let m = exergy::fuel_exergy_multiplier(&fuel);
    outcome((m - 1.04622).abs() <= 1e-4, format!("multiplier {m:.6}"))
}

fn nominal_point() -> Outcome {
    let start = Instant::now();
    let cli = Cli::try_parse_from([
        "mvexergy",
        "balance",
        "--speed",
        &NOMINAL_RPM.to_string(),
        "--torque",
        &NOMINAL_TORQUE.to_string(),
        "--egr",
        "0.2",
        "--t0",
        "293.15",
    ])
    .unwrap();
    let mut buf = Vec::new();
    if let Err(e) = run(cli, &mut buf) {
        return outcome(false, format!("balance command failed: {e}"));
    }
    let elapsed = start.elapsed();
    let json: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    let pct = &json["breakdown"]["percent"];
    #[allow(clippy::approx_constant)]
    let targets = [
        ("work", 36.8),
        ("combustion", 31.7),
        ("exhaust", 17.7),
        ("friction", 6.92),
        ("heat", 3.74),
        ("others", 3.14),
    ];
    let mut pass = elapsed < Duration::from_secs(60);
    let mut parts = Vec::new();
    for (name, target) in targets {
        let v = pct[name].as_f64().unwrap();
        pass &= (v - target).abs() <= 5.0;
        parts.push(format!("{name} {v:.2} ({target})"));
    }
    let ratio = pct["friction"].as_f64().unwrap() / pct["work"].as_f64().unwrap();
    let target_ratio = 6.92 / 36.8;
    pass &= ((ratio - target_ratio) / target_ratio).abs() <= 0.10;
    outcome(
        pass,
        format!(
            "{}; friction/work {ratio:.4} ({target_ratio:.4}); {:.1} s",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn trends(fx: &Fixture, worst_pct: &mut f64) -> (Outcome, Option<sweep::SweepResult>) {
    let start = Instant::now();
    let cycles = demo_cycles();
    let env = ReferenceState::default();
    let result =
        sweep::run_sweep_with_maps(&cycles, &fx.grid, &env, &fx.model, &fx.maps, &fx.mean, 0)
            .unwrap();
    for e in &result.entries {
        *worst_pct = worst_pct.max((e.breakdown.signed_total() - 100.0).abs());
    }
    let report = sweep::trend_report(&result).unwrap();
    let expected = [
        (Term::Heat, Axis::Egr, Direction::Decreasing),
        (Term::Combustion, Axis::Egr, Direction::Increasing),
        (Term::Exhaust, Axis::Egr, Direction::Increasing),
        (Term::Exhaust, Axis::T0, Direction::Decreasing),
        (Term::Heat, Axis::T0, Direction::Decreasing),
        (Term::Combustion, Axis::T0, Direction::Increasing),
    ];
    let mut misses = Vec::new();
    for c in &result.cycles {
        for (term, axis, dir) in expected {
            let got = report.direction(c, term, axis);
            if got != Some(dir) {
                misses.push(format!("{c}/{}/{axis:?}: {got:?}", term.name()));
            }
        }
    }
    let wf_max = report
        .work_friction_range_pp
        .values()
        .cloned()
        .fold(0.0, f64::max);
    let elapsed = start.elapsed() + fx.map_time;
    let pass = misses.is_empty() && wf_max < 2.0 && elapsed < Duration::from_secs(600);
    let detail = if misses.is_empty() {
        format!(
            "{} cycles x {} combos, 6 directions hold, work+friction spread {wf_max:.3} pp, {:.1} s",
            result.cycles.len(),
            fx.grid.len(),
            elapsed.as_secs_f64()
        )
    } else {
        format!("direction mismatches: {}", misses.join("; "))
    };
    (outcome(pass, detail), Some(result))
}

fn horizon_invariance(fx: &Fixture) -> Outcome {
    let env = ReferenceState::default();
    let mm = &fx.mean[fx.grid.x_egr.iter().position(|&x| x == 0.2).unwrap()];
    let op = OperatingPoint::from_rpm(NOMINAL_RPM, NOMINAL_TORQUE);
    let shares: Vec<_> = [1.0, 10.0, 100.0]
        .iter()
        .map(|&h| {
            let trace = CycleTrace::constant("constant", op, h, 0.5).unwrap();
            evaluate_cycle(&trace, &env, &fx.model, &fx.maps, mm)
                .unwrap()
                .breakdown
        })
        .collect();
    let mut worst = 0.0f64;
    for s in &shares[1..] {
        for t in Term::ALL {
            let (a, b) = (s.get(t), shares[0].get(t));
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    outcome(
        worst <= 1e-12,
        format!("T in {{1, 10, 100}} s, worst relative spread {worst:.2e}"),
    )
}

fn conservation() -> Outcome {
    let fuel = mvexergy_core::FuelThermo::default();
    let ambient = mvexergy_core::Composition::ambient();
    let mut r = runner(1000);
    let worst = Cell::new(0.0f64);
    let strategy = (1.0f64..6.0, 0.0f64..0.6, 1e-4f64..0.05);
    let res = r.run(&strategy, |(lam, x, mf)| {
        let st = stoichiometry(lam, x, &fuel, &ambient).unwrap();
        let flows = mixture::molar_flows(mf, lam, x, &fuel, &ambient).unwrap();
        let e = st.atom_imbalance(&fuel).max(flows.atom_imbalance(&fuel));
        worst.set(worst.get().max(e));
        proptest::prop_assert!(e <= 1e-12, "imbalance {e:e} at lambda {lam}, x_EGR {x}");
        Ok(())
    });
    match res {
        Ok(()) => outcome(
            true,
            format!(
                "1000 (lambda, x_EGR) draws, worst C/H/O/N mismatch {:.2e}",
                worst.get()
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

/// (T [K], H - H298 [kJ/mol], S [J/(mol K)])
type JanafRow = (f64, f64, f64);

/// NIST-JANAF: standard formation enthalpy [J/mol] and four table rows.
fn janaf() -> Vec<(Species, f64, [JanafRow; 4])> {
    vec![
        (
            Species::N2,
            0.0,
            [
                (298.15, 0.0, 191.609),
                (500.0, 5.912, 206.739),
                (1000.0, 21.463, 228.170),
                (2000.0, 56.137, 252.074),
            ],
        ),
        (
            Species::O2,
            0.0,
            [
                (298.15, 0.0, 205.147),
                (500.0, 6.084, 220.693),
                (1000.0, 22.707, 243.578),
                (2000.0, 59.199, 268.748),
            ],
        ),
        (
            Species::CO2,
            -393_522.0,
            [
                (298.15, 0.0, 213.795),
                (500.0, 8.305, 234.901),
                (1000.0, 33.397, 269.299),
                (2000.0, 91.439, 309.293),
            ],
        ),
        (
            Species::H2O,
            -241_826.0,
            [
                (298.15, 0.0, 188.834),
                (500.0, 6.925, 206.534),
                (1000.0, 26.000, 232.738),
                (2000.0, 72.790, 264.571),
            ],
        ),
    ]
}

fn thermo_table() -> Outcome {
    let table = PropertyTable::standard();
    let mut worst_h = 0.0f64;
    let mut worst_s = 0.0f64;
    for (species, hf, rows) in janaf() {
        for (t, dh, s) in rows {
            let h_ref = hf + 1000.0 * dh;
            let h = table.enthalpy(species, t).unwrap();
            // elements at 298.15 K have h = 0; judge against R*T there
            let scale = h_ref.abs().max(8.314 * t);
            worst_h = worst_h.max((h - h_ref).abs() / scale);
            let s_model = table.entropy(species, t).unwrap();
            worst_s = worst_s.max((s_model - s).abs() / s);
        }
    }
    outcome(
        worst_h <= 0.01 && worst_s <= 0.01,
        format!(
            "16 points, worst h {:.3}%, worst s {:.3}%",
            100.0 * worst_h,
            100.0 * worst_s
        ),
    )
}

fn percentage_algebra(worst: f64) -> Outcome {
    outcome(
        worst <= 1e-6,
        format!("worst |signed sum - 100| {worst:.2e} over closure and sweep points"),
    )
}

fn oracle_equivalence(fx: &Fixture) -> Outcome {
    let mut r = runner(100);
    let mut worst = 0.0f64;
    let mut by_term: BTreeMap<&str, f64> = BTreeMap::new();
    for _ in 0..100 {
        let op = random_op(&mut r, &fx.maps);
        let k = sample(&mut r, &(0..fx.mean.len()));
        let t0 = sample(&mut r, &(263.15f64..313.15));
        let env = ReferenceState::default().with_temperature(t0);
        let pb = balance_detail(&op, &env, &fx.model, &fx.maps, &fx.mean[k]).unwrap();
        let oracle = oracle_rates(&pb.state, &env, &fx.model);
        for (name, (a, b)) in ExergyRates::NAMES
            .iter()
            .zip(pb.rates.to_array().into_iter().zip(oracle.to_array()))
        {
            // the closure term crosses zero; judge it at the scale of the balance
            let scale = if *name == "others" {
                pb.rates.input()
            } else {
                b.abs()
            };
            let rel = if scale == 0.0 {
                a.abs()
            } else {
                (a - b).abs() / scale
            };
            worst = worst.max(rel);
            let e = by_term.entry(name).or_default();
            *e = e.max(rel);
        }
    }
    let detail = by_term
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        worst <= 1e-12,
        format!("100 states, worst {worst:.2e}, others vs input exergy ({detail})"),
    )
}

fn determinism(fx: &Fixture) -> Outcome {
    let cycles = demo_cycles();
    let env = ReferenceState::default();
    let csv = |jobs| {
        let mean = sweep::mean_maps_for(&fx.model, &fx.maps, &fx.grid.x_egr, jobs).unwrap();
        sweep::run_sweep_with_maps(&cycles, &fx.grid, &env, &fx.model, &fx.maps, &mean, jobs)
            .unwrap()
            .to_csv_string()
    };
    let serial = csv(1);
    let parallel = csv(8);
    outcome(
        serial == parallel,
        format!(
            "jobs 1 vs 8, {} bytes, identical: {}",
            serial.len(),
            serial == parallel
        ),
    )
}

fn substituted(result: Option<&sweep::SweepResult>, ac3: bool, ac4: bool) -> Outcome {
    let Some(result) = result else {
        return outcome(false, "no sweep result");
    };
    let stats = cycle_stats(result, 293.15, 0.2).unwrap();
    let sd = Term::ALL
        .iter()
        .map(|&t| format!("{} {:.2}", t.name(), stats.sd.get(t)))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        ac3 && ac4,
        format!("figure values out of reach; replaced by AC-3 and AC-4; reported SD [pp] at 293.15 K / 0.2: {sd}"),
    )
}

fn main() -> ExitCode {
    let fx = Fixture::new();
    let mut worst_pct = 0.0f64;
    let mut lines: Vec<(&str, &str, Outcome)> = Vec::new();

    lines.push(("AC-1", "closure", closure(&fx, &mut worst_pct)));
    lines.push(("AC-2", "fuel exergy multiplier", fuel_multiplier()));
    lines.push(("AC-3", "nominal point", nominal_point()));
    let (ac4, result) = trends(&fx, &mut worst_pct);
    lines.push(("AC-4", "trends", ac4));
    lines.push(("AC-5", "horizon invariance", horizon_invariance(&fx)));
    lines.push(("AC-6", "elemental conservation", conservation()));
    lines.push(("AC-7", "property table", thermo_table()));
    if let Some(r) = &result {
        for e in &r.entries {
            worst_pct =
                worst_pct.max((percentages(&e.totals).unwrap().signed_total() - 100.0).abs());
        }
    }
    lines.push(("AC-8", "percentage algebra", percentage_algebra(worst_pct)));
    lines.push(("AC-9", "oracle equivalence", oracle_equivalence(&fx)));
    lines.push(("AC-10", "determinism", determinism(&fx)));
    let (ac3, ac4) = (lines[2].2.pass, lines[3].2.pass);
    lines.push((
        "AC-11",
        "substituted figures",
        substituted(result.as_ref(), ac3, ac4),
    ));

    let mut failed = 0;
    for (id, name, o) in &lines {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{id:<5} {tag} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        lines.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
