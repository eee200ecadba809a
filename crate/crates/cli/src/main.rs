//! `offgrid`: planner, simulator, meter collector, reports and cell
//! diagnostics for an off-grid solar installation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration as StdDuration;

use chrono::Duration;
use clap::{Args, Parser, Subcommand, ValueEnum};
use offgrid_core::battery::{
    check_parallel, classify_cell_health, reassemble_pack, BatteryPack, CellBlockSpec, DEFAULT_MAX_DELTA_V,
};
use offgrid_core::ems::{
    collect_trace, latest_snapshot, render_report, replay_log, restore, snapshot, CollectOptions, EnergyIndex,
    EnergyLedger, LedgerLog, LineFilter, Period, PollConfig, ReportFormat, DEFAULT_CADENCE_S, DEFAULT_RETRIES,
};
use offgrid_core::pv::{enumerate_string_configs, PvModuleSpec, VoltageWindow};
use offgrid_core::simulation::{preset, run_scenario, write_trace_csv, Scenario, TracePoint};
use offgrid_core::telemetry::NodeRegistry;

#[derive(Debug, Parser)]
#[command(name = "offgrid", version, about = "Off-grid solar system planner, simulator and energy monitor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List series/parallel layouts of a module count that fit an inverter PV input.
    PlanStrings(PlanStrings),
    /// Regroup the blocks of a battery pack for a new system voltage.
    PlanPack(PlanPack),
    /// Estimate the inrush current of joining two battery packs.
    CheckParallel(CheckParallel),
    /// Run a scenario and write the trace as CSV.
    Simulate(Simulate),
    /// Poll simulated meters fed by a scenario and record the readings.
    Poll(Poll),
    /// Print energy statistics from a record log or snapshot.
    Report(Report),
    /// Classify measured open-circuit voltages of battery blocks.
    Doctor(Doctor),
}

#[derive(Debug, Args)]
struct PlanStrings {
    /// Total number of modules.
    #[arg(long)]
    modules: u32,
    /// Module peak power in W.
    #[arg(long, default_value_t = 75.0)]
    power: f64,
    /// Module voltage at maximum power.
    #[arg(long, default_value_t = 17.0)]
    vmp: f64,
    /// Module open-circuit voltage.
    #[arg(long, default_value_t = 21.7)]
    voc: f64,
    #[arg(long, default_value_t = 90.0)]
    op_min: f64,
    #[arg(long, default_value_t = 230.0)]
    op_max: f64,
    #[arg(long, default_value_t = 250.0)]
    oc_max: f64,
}

#[derive(Debug, Args)]
struct PlanPack {
    /// Existing pack as VOLTAGE,CAPACITY,block=VOLTAGE/CAPACITY, e.g. 24V,600Ah,block=12V/100Ah.
    #[arg(long)]
    source: PackArg,
    /// Target system voltage, e.g. 48V.
    #[arg(long, value_parser = parse_volts)]
    target: f64,
    #[arg(long, value_enum, default_value_t = ChemistryArg::Lead12)]
    chemistry: ChemistryArg,
}

#[derive(Debug, Args)]
struct CheckParallel {
    /// Terminal voltage of pack A.
    #[arg(long)]
    va: f64,
    /// Terminal voltage of pack B.
    #[arg(long)]
    vb: f64,
    /// Internal resistance of pack A in ohms.
    #[arg(long)]
    ra: f64,
    /// Internal resistance of pack B in ohms.
    #[arg(long)]
    rb: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_DELTA_V)]
    max_delta_v: f64,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ScenarioSource {
    /// Built-in scenario name.
    #[arg(long)]
    preset: Option<String>,
    /// Scenario TOML file.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Simulate {
    #[command(flatten)]
    source: ScenarioSource,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Poll {
    #[command(flatten)]
    source: ScenarioSource,
    /// Registry preset name or TOML file. Defaults to the registry matching the scenario.
    #[arg(long)]
    registry: Option<String>,
    /// Stop after this many poll cycles.
    #[arg(long)]
    cycles: Option<u64>,
    /// Seconds between poll cycles.
    #[arg(long, default_value_t = DEFAULT_CADENCE_S, value_parser = clap::value_parser!(i64).range(1..))]
    cadence: i64,
    /// Probability that a request or response frame is lost.
    #[arg(long, default_value_t = 0.0, value_parser = parse_probability)]
    loss: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Turn on meter reading noise with this seed.
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Per-request timeout in milliseconds.
    #[arg(long, default_value_t = 200)]
    timeout_ms: u64,
    #[arg(long, default_value_t = DEFAULT_RETRIES)]
    retries: u32,
    /// Append every record to this log file.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write a snapshot of the ledger into this directory.
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
    /// Number of snapshots to retain.
    #[arg(long, default_value_t = 3)]
    keep: usize,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct LedgerSource {
    /// Record log written by `poll --log`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Snapshot file, or a directory whose latest snapshot is used.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Report {
    #[command(flatten)]
    source: LedgerSource,
    #[arg(long, value_enum, default_value_t = PeriodArg::All)]
    period: PeriodArg,
    /// Comma-separated line names; all lines when absent.
    #[arg(long, value_delimiter = ',')]
    lines: Vec<String>,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
    /// Poll cadence in seconds, used for gap detection.
    #[arg(long, default_value_t = DEFAULT_CADENCE_S, value_parser = clap::value_parser!(i64).range(1..))]
    cadence: i64,
}

#[derive(Debug, Args)]
struct Doctor {
    #[arg(long, value_enum)]
    chemistry: ChemistryArg,
    /// Comma-separated measured open-circuit voltages per block.
    #[arg(long, value_delimiter = ',', required = true)]
    ocv: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChemistryArg {
    /// 12 V lead-acid monobloc.
    Lead12,
    /// 3.2 V LFP cell.
    Lfp,
}

impl ChemistryArg {
    fn block(self) -> CellBlockSpec {
        match self {
            ChemistryArg::Lead12 => CellBlockSpec::lead_acid_12v_100ah(),
            ChemistryArg::Lfp => CellBlockSpec::lfp_cell_100ah(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PeriodArg {
    All,
    Day,
    Month,
    Year,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy)]
struct PackArg {
    voltage: f64,
    capacity: f64,
    block_voltage: f64,
    block_capacity: f64,
}

impl FromStr for PackArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [voltage, capacity, block] = parts[..] else {
            return Err("expected VOLTAGE,CAPACITY,block=VOLTAGE/CAPACITY".into());
        };
        let block = block.strip_prefix("block=").ok_or("third field must start with block=")?;
        let (block_voltage, block_capacity) = block.split_once('/').ok_or("block must be VOLTAGE/CAPACITY")?;
        Ok(Self {
            voltage: parse_volts(voltage)?,
            capacity: parse_amp_hours(capacity)?,
            block_voltage: parse_volts(block_voltage)?,
            block_capacity: parse_amp_hours(block_capacity)?,
        })
    }
}

fn parse_unit(s: &str, unit: &str) -> Result<f64, String> {
    let digits = s.trim().strip_suffix(unit).unwrap_or(s.trim());
    match digits.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("{s:?} is not a positive quantity in {unit}")),
    }
}

fn parse_volts(s: &str) -> Result<f64, String> {
    parse_unit(s, "V")
}

fn parse_amp_hours(s: &str) -> Result<f64, String> {
    parse_unit(s, "Ah")
}

fn parse_probability(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(p) if (0.0..=1.0).contains(&p) => Ok(p),
        _ => Err(format!("{s:?} is not a probability in [0, 1]")),
    }
}

/// A domain error reported as `error: <name>: <message>` with exit code 1.
#[derive(Debug)]
struct Failure {
    name: &'static str,
    message: String,
}

impl Failure {
    fn new(name: &'static str, message: impl Display) -> Self {
        Self { name, message: message.to_string() }
    }

    fn io(context: impl Display, e: io::Error) -> Self {
        Self::new("IoError", format!("{context}: {e}"))
    }
}

macro_rules! named_failure {
    ($($ty:ty),*) => {$(
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure::new(e.name(), &e)
            }
        }
    )*};
}

named_failure!(
    offgrid_core::pv::PvError,
    offgrid_core::battery::BatteryError,
    offgrid_core::simulation::ScenarioError,
    offgrid_core::telemetry::RegistryError,
    offgrid_core::telemetry::MeterError,
    offgrid_core::ems::StorageError
);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli.command, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = out.flush();
            eprintln!("error: {}: {}", f.name, f.message);
            ExitCode::from(1)
        }
    }
}

fn run(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::PlanStrings(a) => plan_strings(a, out),
        Command::PlanPack(a) => plan_pack(a, out),
        Command::CheckParallel(a) => check_parallel_cmd(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Poll(a) => poll(a, out),
        Command::Report(a) => report(a, out),
        Command::Doctor(a) => doctor(a, out),
    }
    .map_err(|e| match e {
        Error::Failure(f) => f,
        Error::Stdout(e) => Failure::io("stdout", e),
    })
}

enum Error {
    Failure(Failure),
    Stdout(io::Error),
}

impl<T: Into<Failure>> From<T> for Error {
    fn from(e: T) -> Self {
        Error::Failure(e.into())
    }
}

fn emit(out: &mut dyn Write, text: impl Display) -> Result<(), Error> {
    writeln!(out, "{text}").map_err(Error::Stdout)
}

fn plan_strings(a: PlanStrings, out: &mut dyn Write) -> Result<(), Error> {
    let module = PvModuleSpec::new("module", a.power, a.vmp, a.voc)?;
    let window = VoltageWindow::new(a.op_min, a.op_max, a.oc_max)?;
    let configs = enumerate_string_configs(&module, a.modules, &window);
    if configs.is_empty() {
        return emit(out, format!("no layout of {} modules fits the window", a.modules));
    }
    for c in configs {
        emit(
            out,
            format!(
                "{}  Vmp {:.1} V  Voc {:.1} V  {:.0} Wp",
                c,
                c.operating_voltage(),
                c.open_circuit_voltage(),
                c.power_peak()
            ),
        )?;
    }
    Ok(())
}

fn plan_pack(a: PlanPack, out: &mut dyn Write) -> Result<(), Error> {
    let s = a.source;
    let mut block = a.chemistry.block();
    block.nominal_voltage = s.block_voltage;
    block.capacity = s.block_capacity;
    if block.cutoff_voltage >= block.nominal_voltage {
        block.cutoff_voltage = block.nominal_voltage * 0.8;
    }
    let series = whole_ratio(s.voltage, s.block_voltage).ok_or_else(|| {
        Failure::new(
            "UnreachableVoltage",
            format!("{} V is not a multiple of the {} V block", s.voltage, s.block_voltage),
        )
    })?;
    let parallel = whole_ratio(s.capacity, s.block_capacity).ok_or_else(|| {
        Failure::new(
            "NonDivisibleTopology",
            format!("{} Ah is not a multiple of the {} Ah block", s.capacity, s.block_capacity),
        )
    })?;
    let source = BatteryPack::new(block, series, parallel)?;
    let target = reassemble_pack(&source, a.target)?;
    emit(out, target)?;
    emit(
        out,
        format!(
            "{}s{}p of {} blocks (was {}s{}p)",
            target.series,
            target.parallel,
            target.block_count(),
            series,
            parallel
        ),
    )
}

fn whole_ratio(total: f64, part: f64) -> Option<u32> {
    let r = total / part;
    ((r - r.round()).abs() < 1e-9 * r.max(1.0) && r >= 1.0).then(|| r.round() as u32)
}

fn check_parallel_cmd(a: CheckParallel, out: &mut dyn Write) -> Result<(), Error> {
    if !(a.ra + a.rb > 0.0) || a.ra < 0.0 || a.rb < 0.0 {
        return Err(Failure::new("InvalidSpec", "resistances must be non-negative with a positive sum").into());
    }
    let current = check_parallel(a.va, a.vb, a.ra, a.rb, a.max_delta_v)?;
    emit(out, format!("delta {:.2} V, inrush {:.1} A", (a.va - a.vb).abs(), current))?;
    emit(out, "OK")
}

fn load_scenario(source: &ScenarioSource) -> Result<Scenario, Failure> {
    match (&source.preset, &source.scenario) {
        (Some(name), _) => Ok(preset(name)?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(path.display(), e))?;
            Ok(Scenario::from_toml(&text)?)
        }
        (None, None) => unreachable!("clap requires one scenario source"),
    }
}

fn simulate(a: Simulate, out: &mut dyn Write) -> Result<(), Error> {
    let scenario = load_scenario(&a.source)?;
    let trace = run_scenario(&scenario)?;
    match &a.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::io(path.display(), e))?;
            let mut w = BufWriter::new(file);
            write_trace_csv(&trace, &mut w).and_then(|()| w.flush()).map_err(|e| Failure::io(path.display(), e))?;
            emit(out, summary(&scenario, &trace))
        }
        None => write_trace_csv(&trace, out).map_err(Error::Stdout),
    }
}

fn summary(scenario: &Scenario, trace: &[TracePoint]) -> String {
    let max_v = trace.iter().map(|p| p.bus_voltage).fold(f64::NEG_INFINITY, f64::max);
    let peak_a = trace.iter().map(|p| p.bus_current).fold(0.0, f64::max);
    let unserved: f64 =
        trace.iter().map(|p| p.total_load() - p.served_load()).sum::<f64>() * scenario.dt_s as f64 / 3600.0;
    format!(
        "{}: {} steps, max bus voltage {:.1} V, peak charge current {:.1} A, unserved {:.0} Wh",
        scenario.name,
        trace.len(),
        max_v,
        peak_a,
        unserved
    )
}

fn load_registry(spec: Option<&str>, source: &ScenarioSource) -> Result<NodeRegistry, Failure> {
    let spec = spec.unwrap_or(match source.preset.as_deref() {
        Some("future-plan") => "future-plan",
        _ => "2021",
    });
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "toml") {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path.display(), e))?;
        Ok(NodeRegistry::from_toml(&text)?)
    } else {
        Ok(NodeRegistry::preset(spec)?)
    }
}

fn poll(a: Poll, out: &mut dyn Write) -> Result<(), Error> {
    let scenario = load_scenario(&a.source)?;
    let registry = load_registry(a.registry.as_deref(), &a.source)?;
    let trace = run_scenario(&scenario)?;
    let options = CollectOptions {
        cadence: Duration::seconds(a.cadence),
        poll: PollConfig { timeout: StdDuration::from_millis(a.timeout_ms), retries: a.retries },
        loss: a.loss,
        seed: a.seed,
        noise_seed: a.noise_seed,
        max_cycles: a.cycles,
    };
    let mut ledger = EnergyLedger::new();
    let s = collect_trace(&trace, &registry, &options, &mut ledger)?;
    if let Some(path) = &a.log {
        let mut log = LedgerLog::open(path)?;
        for e in ledger.entries() {
            log.append(&e.record)?;
        }
        log.sync()?;
    }
    if let Some(dir) = &a.snapshot_dir {
        let path = snapshot(&ledger, dir, a.keep)?;
        emit(out, format!("snapshot {}", path.display()))?;
    }
    emit(
        out,
        format!(
            "{} cycles over {} nodes: {} records, {} offline reads, {} duplicates, {} resets",
            s.cycles,
            registry.len(),
            s.records,
            s.offline,
            s.duplicates,
            s.resets
        ),
    )?;
    emit(out, format!("ledger sha256 {}", ledger.digest()))
}

fn report(a: Report, out: &mut dyn Write) -> Result<(), Error> {
    let ledger = match (&a.source.log, &a.source.snapshot) {
        (Some(path), _) => replay_log(path)?.0,
        (None, Some(path)) if path.is_dir() => {
            let latest = latest_snapshot(path)?
                .ok_or_else(|| Failure::new("StorageError", format!("no snapshot in {}", path.display())))?;
            restore(&latest)?
        }
        (None, Some(path)) => restore(path)?,
        (None, None) => unreachable!("clap requires one ledger source"),
    };
    let filter = if a.lines.is_empty() { LineFilter::All } else { LineFilter::Only(a.lines) };
    let stats: Vec<_> = EnergyIndex::build(&ledger, Duration::seconds(a.cadence))
        .all_stats(&filter)
        .into_iter()
        .filter(|s| {
            matches!(
                (a.period, s.period),
                (PeriodArg::All, _)
                    | (PeriodArg::Day, Period::Day(_))
                    | (PeriodArg::Month, Period::Month { .. })
                    | (PeriodArg::Year, Period::Year(_))
            )
        })
        .collect();
    let format = match a.format {
        FormatArg::Table => ReportFormat::Table,
        FormatArg::Csv => ReportFormat::Csv,
    };
    out.write_all(render_report(&stats, format).as_bytes()).map_err(Error::Stdout)
}

fn doctor(a: Doctor, out: &mut dyn Write) -> Result<(), Error> {
    let block = a.chemistry.block();
    for v in a.ocv {
        emit(out, format!("{v:.1} V  {}", classify_cell_health(&block, v)))?;
    }
    Ok(())
}
