//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{Resolved, RunConfig};
use crate::cylinder::{generate_maps, MeanValueMaps};
use crate::exergy::{
    balance_detail, percentages, percentages_of, ExergyTotals, OperatingPoint, PercentBreakdown,
    PointState,
};
use crate::maps::EngineMaps;
use crate::sweep::{self, CycleTrace, SweepGrid, TermStats, TrendReport};
use crate::{Error, ExergyRates, ReferenceState};

pub const FUEL_MAP_FILE: &str = "fuel_rate.csv";
pub const EXHAUST_MAP_FILE: &str = "exhaust_temperature.csv";

#[derive(Debug, Parser)]
#[command(
    name = "mvexergy",
    version,
    about = "Mean-value exergy balance of a turbocharged diesel engine"
)]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Reserved; every command is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct MapSource {
    /// Fuel-rate map CSV (synthetic maps when omitted).
    #[arg(long, requires = "exhaust_map")]
    pub fuel_map: Option<PathBuf>,
    /// Exhaust-temperature map CSV.
    #[arg(long, requires = "fuel_map")]
    pub exhaust_map: Option<PathBuf>,
    /// Directory of mean-value map CSVs; regenerated when absent.
    #[arg(long)]
    pub mean_maps: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic fuel-rate and exhaust-temperature maps.
    SynthMaps {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate mean-value cylinder maps for each EGR rate.
    GenMaps {
        #[arg(long, value_delimiter = ',', default_value = "0.2")]
        egr: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        maps: MapSource,
    },
    /// Exergy balance at one operating point, as JSON.
    Balance {
        /// Engine speed [rpm].
        #[arg(long)]
        speed: f64,
        /// Brake torque [Nm].
        #[arg(long)]
        torque: f64,
        /// Reference temperature [K].
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long, default_value_t = 0.2)]
        egr: f64,
        #[command(flatten)]
        maps: MapSource,
    },
    /// Integrated breakdown of one or more traces.
    Cycle {
        #[arg(long, required = true, num_args = 1..)]
        trace: Vec<PathBuf>,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long, default_value_t = 0.2)]
        egr: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        maps: MapSource,
    },
    /// Full sweep over reference temperature and EGR rate.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        t0_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        egr_list: Option<Vec<f64>>,
        /// Directory of trace CSVs (the built-in demo cycles when omitted).
        #[arg(long)]
        cycles: Option<PathBuf>,
        /// Long-format result CSV.
        #[arg(long)]
        out: PathBuf,
        /// Trend report and statistics JSON (defaults next to `--out`).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        maps: MapSource,
    },
    /// Write the four synthetic demo traces.
    DemoCycles {
        #[arg(long)]
        out: PathBuf,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

struct Session {
    cfg: Resolved,
    jobs: usize,
}

impl Session {
    fn engine_maps(&self, src: Option<&MapSource>) -> Result<EngineMaps, Error> {
        match src {
            Some(MapSource {
                fuel_map: Some(f),
                exhaust_map: Some(e),
                ..
            }) => Ok(crate::maps::load_maps(f, e)?),
            _ => self.cfg.engine_maps(),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Error> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))
    }

    fn mean_maps(
        &self,
        src: &MapSource,
        maps: &EngineMaps,
        x_egr: f64,
    ) -> Result<MeanValueMaps, Error> {
        let dir = src.mean_maps.as_ref().or(self.cfg.mean_value_dir.as_ref());
        if let Some(dir) = dir {
            if MeanValueMaps::paths(dir, x_egr).iter().all(|p| p.exists()) {
                return Ok(MeanValueMaps::load(dir, x_egr)?);
            }
            log::info!(
                "no mean-value maps for x_EGR = {x_egr} in {}, generating",
                dir.display()
            );
        }
        let env = ReferenceState::default();
        Ok(self
            .pool()?
            .install(|| generate_maps(&self.cfg.model, maps.grid(), x_egr, maps, &env))?)
    }

    fn reference(&self, t0: Option<f64>) -> Result<ReferenceState, Error> {
        let env = match t0 {
            Some(t) => self.cfg.reference.with_temperature(t),
            None => self.cfg.reference,
        };
        if !(sweep::T0_MIN..=sweep::T0_MAX).contains(&env.temperature) {
            return Err(Error::Validation(format!(
                "T0 = {} K outside [{}, {}] K",
                env.temperature,
                sweep::T0_MIN,
                sweep::T0_MAX
            )));
        }
        Ok(env)
    }

    fn out_dir(&self, explicit: Option<&PathBuf>) -> PathBuf {
        explicit
            .cloned()
            .or_else(|| self.cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Serialize)]
struct BalanceReport {
    config_hash: String,
    state: PointState,
    rates: ExergyRates,
    /// Relative eight-term residual.
    closure: f64,
    breakdown: PercentBreakdown,
}

#[derive(Serialize)]
struct CycleReport {
    cycle: String,
    t0: f64,
    x_egr: f64,
    totals: ExergyTotals,
    breakdown: PercentBreakdown,
}

#[derive(Serialize)]
struct SweepReport {
    config_hash: String,
    calibration_hash: String,
    cycles: Vec<String>,
    grid: SweepGrid,
    trends: TrendReport,
    /// Cross-cycle statistics at each grid point.
    stats: Vec<GridStats>,
}

#[derive(Serialize)]
struct GridStats {
    t0: f64,
    x_egr: f64,
    stats: TermStats,
}

fn check_egr(x_egr: f64) -> Result<(), Error> {
    if (0.0..crate::mixture::EGR_MAX).contains(&x_egr) {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "x_EGR = {x_egr} outside [0, {})",
            crate::mixture::EGR_MAX
        )))
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Error> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Runs a parsed command line, writing primary output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), Error> {
    let cfg = match &cli.config {
        Some(path) => {
            let (cfg, raw) = RunConfig::load(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.resolve(base, &raw)?
        }
        None => Resolved::defaults(),
    };
    let session = Session {
        cfg,
        jobs: cli.jobs,
    };
    let emit = |out: &mut dyn Write, text: &str| -> Result<(), Error> {
        out.write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>")))
    };

    match cli.command {
        Command::SynthMaps { out: dir } => {
            let dir = session.out_dir(dir.as_ref());
            create_dir(&dir)?;
            let maps = session.cfg.engine_maps()?;
            let (f, e) = (dir.join(FUEL_MAP_FILE), dir.join(EXHAUST_MAP_FILE));
            maps.save(&f, &e)?;
            emit(out, &format!("{}\n{}\n", f.display(), e.display()))
        }
        Command::GenMaps {
            egr,
            out: dir,
            maps,
        } => {
            let dir = session.out_dir(dir.as_ref());
            create_dir(&dir)?;
            let engine_maps = session.engine_maps(Some(&maps))?;
            egr.iter().try_for_each(|&x| check_egr(x))?;
            let all = sweep::mean_maps_for(&session.cfg.model, &engine_maps, &egr, session.jobs)?;
            for m in all {
                for p in m.save(&dir)? {
                    emit(out, &format!("{}\n", p.display()))?;
                }
            }
            Ok(())
        }
        Command::Balance {
            speed,
            torque,
            t0,
            egr,
            maps,
        } => {
            let env = session.reference(t0)?;
            check_egr(egr)?;
            let engine_maps = session.engine_maps(Some(&maps))?;
            let op = OperatingPoint::from_rpm(speed, torque);
            // domain check before the map generation cost
            engine_maps.fuel_rate_at(&op)?;
            let mm = session.mean_maps(&maps, &engine_maps, egr)?;
            let pb = balance_detail(&op, &env, &session.cfg.model, &engine_maps, &mm)?;
            let report = BalanceReport {
                config_hash: session.cfg.hash.clone(),
                state: pb.state,
                rates: pb.rates,
                closure: pb.rates.closure_residual(),
                breakdown: percentages_of(&pb.rates)?,
            };
            emit(out, &to_json(&report)?)
        }
        Command::Cycle {
            trace,
            t0,
            egr,
            format,
            maps,
        } => {
            let env = session.reference(t0)?;
            check_egr(egr)?;
            let engine_maps = session.engine_maps(Some(&maps))?;
            let mm = session.mean_maps(&maps, &engine_maps, egr)?;
            let mut reports = Vec::new();
            for path in &trace {
                let tr = CycleTrace::load(path)?;
                let cb = sweep::evaluate_cycle(&tr, &env, &session.cfg.model, &engine_maps, &mm)?;
                debug_assert_eq!(cb.breakdown, percentages(&cb.totals)?);
                reports.push(CycleReport {
                    cycle: tr.name,
                    t0: env.temperature,
                    x_egr: egr,
                    totals: cb.totals,
                    breakdown: cb.breakdown,
                });
            }
            match format {
                Format::Json => emit(out, &to_json(&reports)?),
                Format::Csv => {
                    let mut text = String::from("cycle,T0_K,xEGR,term,percent,signed_value_J\n");
                    for r in &reports {
                        for term in crate::Term::ALL {
                            text.push_str(&format!(
                                "{},{},{},{},{},{}\n",
                                r.cycle,
                                r.t0,
                                r.x_egr,
                                term,
                                r.breakdown.get(term),
                                r.totals.terms.get(term)
                            ));
                        }
                    }
                    emit(out, &text)
                }
            }
        }
        Command::Sweep {
            t0_list,
            egr_list,
            cycles,
            out: out_path,
            report,
            maps,
        } => {
            let mut grid = session.cfg.grid.clone();
            if let Some(t) = t0_list {
                grid.t0 = t;
            }
            if let Some(x) = egr_list {
                grid.x_egr = x;
            }
            grid.validate()?;
            let traces = match cycles.as_ref().or(session.cfg.cycles_dir.as_ref()) {
                Some(dir) => sweep::load_cycles(dir)?,
                None => sweep::demo_cycles(),
            };
            let engine_maps = session.engine_maps(Some(&maps))?;
            let mut mean = Vec::with_capacity(grid.x_egr.len());
            for &x in &grid.x_egr {
                mean.push(session.mean_maps(&maps, &engine_maps, x)?);
            }
            let mut result = sweep::run_sweep_with_maps(
                &traces,
                &grid,
                &session.cfg.reference,
                &session.cfg.model,
                &engine_maps,
                &mean,
                session.jobs,
            )?;
            if let (Some(f), Some(e)) = (&maps.fuel_map, &maps.exhaust_map) {
                result.provenance.map_files =
                    vec![f.display().to_string(), e.display().to_string()];
            }
            write_file(&out_path, result.to_csv_string().as_bytes())?;

            let trends = if grid.t0.len() >= 2 && grid.x_egr.len() >= 2 {
                Some(sweep::trend_report(&result)?)
            } else {
                None
            };
            let mut stats = Vec::new();
            if traces.len() >= 2 {
                for &t0 in &grid.t0 {
                    for &x in &grid.x_egr {
                        stats.push(GridStats {
                            t0,
                            x_egr: x,
                            stats: sweep::cycle_stats(&result, t0, x)?,
                        });
                    }
                }
            }
            let report_path = report.unwrap_or_else(|| out_path.with_extension("report.json"));
            if let Some(trends) = trends {
                let rep = SweepReport {
                    config_hash: session.cfg.hash.clone(),
                    calibration_hash: result.provenance.calibration_hash.clone(),
                    cycles: result.cycles.clone(),
                    grid: grid.clone(),
                    trends,
                    stats,
                };
                write_file(&report_path, to_json(&rep)?.as_bytes())?;
                emit(
                    out,
                    &format!("{}\n{}\n", out_path.display(), report_path.display()),
                )
            } else {
                emit(out, &format!("{}\n", out_path.display()))
            }
        }
        Command::DemoCycles { out: dir } => {
            create_dir(&dir)?;
            for c in sweep::demo_cycles() {
                let path = dir.join(format!("{}.csv", c.name));
                c.save(&path)?;
                emit(out, &format!("{}\n", path.display()))?;
            }
            Ok(())
        }
    }
}
