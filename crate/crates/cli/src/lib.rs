//! Command-line front end: parameter loading, command dispatch and
//! deterministic CSV/JSON artifacts.

use std::fs;
use std::path::PathBuf;

use cableqsim_core::circuit::{bracketing_modes, select_modes};
use cableqsim_core::dynamics::occupancy_traces;
use cableqsim_core::gatemetrics::{
    calibrate_gate, cz_pair_coupling, duration_scan, optimize_operating_point, CalibrationOptions, GateReport, ScanRow,
    SearchSpec,
};
use cableqsim_core::hilbert::{BareLabel, CouplingModel};
use cableqsim_core::par::Execution;
use cableqsim_core::perturbation::{zz_fourth_order, zz_resonant_approx, zz_resonant_root};
use cableqsim_core::pulses::{build_schedule, ScheduleConfig, ScheduleKind, SlepianShape};
use cableqsim_core::spectrum::{computational_labels, energy_spectrum_scan, zz_free_point, zz_map};
use cableqsim_core::{CircuitParams, GateKind, ModeSelection, ModeSet, Qubit, System, TruncationSpec};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "cableqsim", version, about = "Cable-coupled transmon spectra, ZZ maps and gate calibration")]
pub struct Cli {
    /// Circuit parameter file (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads, 0 = one per core.
    #[arg(long, global = true, env = "CABLEQSIM_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Cable mode numbers, e.g. `10,11`; default brackets the idle frequencies.
    #[arg(long, global = true)]
    pub modes: Option<String>,
    /// Keep every mode strictly inside `lo:hi` (GHz) instead of `--modes`.
    #[arg(long, global = true, conflicts_with = "modes")]
    pub mode_window: Option<String>,
    #[arg(long, global = true, default_value_t = 4)]
    pub levels_qubit: usize,
    #[arg(long, global = true, default_value_t = 3)]
    pub levels_mode: usize,
    /// `full` or `rwa`.
    #[arg(long, global = true, default_value = "full")]
    pub coupling: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Labeled eigenenergies versus the q1 frequency.
    Spectrum {
        /// q1 grid `lo:hi:step` (GHz).
        #[arg(long)]
        f1: String,
        /// Fixed q2 frequency (GHz); default is the q2 idle frequency.
        #[arg(long)]
        f2: Option<f64>,
        /// Number of lowest levels written per point.
        #[arg(long, default_value_t = 12)]
        levels: usize,
    },
    /// ZZ strength on an f1 × f2 grid.
    ZzMap {
        #[arg(long)]
        f1: String,
        #[arg(long)]
        f2: String,
        /// Crossings next to values above this magnitude (GHz) are poles.
        #[arg(long, default_value_t = 1e-3)]
        pole_cap: f64,
    },
    /// ZZ-free frequency at fixed detuning f1 − f2.
    ZzFree {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        detuning: f64,
        /// Search bracket `lo:hi` for the mean frequency; default is ±30 MHz
        /// around the mean idle frequency.
        #[arg(long)]
        bracket: Option<String>,
    },
    /// Perturbative ZZ: fourth-order and near-resonance forms.
    ZzAnalytic {
        /// Mean-frequency grid `lo:hi:step` (GHz).
        #[arg(long)]
        f: String,
        /// Detuning f1 − f2 for the fourth-order column (GHz).
        #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
        detuning: f64,
        /// Root bracket for the near-resonance form; default spans the modes.
        #[arg(long)]
        bracket: Option<String>,
    },
    /// Sampled frequency waveforms of a pulse schedule.
    Waveform {
        #[command(flatten)]
        gate: GateArgs,
        /// Square-pulse hold time (ns).
        #[arg(long, default_value_t = 100.0)]
        hold: f64,
        /// Slepian pair coupling (GHz); default is extracted from the spectrum.
        #[arg(long)]
        j: Option<f64>,
        #[arg(long, default_value_t = cableqsim_core::pulses::DEFAULT_SAMPLE_DT)]
        sample_dt: f64,
    },
    /// Calibrates one gate and writes its report and occupancy traces.
    Simulate {
        #[command(flatten)]
        gate: GateArgs,
        #[command(flatten)]
        cal: CalArgs,
    },
    /// Idle-frequency optimization along the ZZ-off contour.
    GateOpt {
        #[arg(long, default_value = "iswap")]
        gate: String,
        #[arg(long, default_value = "square")]
        schedule: String,
        /// Candidate q2 idle frequencies `lo:hi:step`.
        #[arg(long)]
        q2_idle: String,
        /// Bracket `lo:hi` for the ZZ-free q1 partner.
        #[arg(long)]
        q1_bracket: String,
        /// Interaction frequencies `f1,f2`.
        #[arg(long)]
        int: String,
        #[command(flatten)]
        cal: CalArgs,
    },
    /// Calibrated duration versus interaction frequency.
    DurationScan {
        #[arg(long, default_value = "iswap")]
        gate: String,
        #[arg(long, default_value = "square")]
        schedule: String,
        /// Idle frequencies `f1,f2`.
        #[arg(long)]
        idle: String,
        /// q2 interaction grid `lo:hi:step`.
        #[arg(long)]
        int_q2: String,
        /// q1 interaction = q2 interaction + offset; default 0 for iSWAP and
        /// the q1 anharmonicity for CZ.
        #[arg(long, allow_hyphen_values = true)]
        int_offset: Option<f64>,
        #[command(flatten)]
        cal: CalArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct GateArgs {
    #[arg(long, default_value = "iswap")]
    pub gate: String,
    #[arg(long, default_value = "square")]
    pub schedule: String,
    /// Idle frequencies `f1,f2`.
    #[arg(long)]
    pub idle: String,
    /// Interaction frequencies `f1,f2`.
    #[arg(long)]
    pub int: String,
}

#[derive(Debug, Clone, Args)]
pub struct CalArgs {
    /// Time step of the final shaped-pulse simulation (ns).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Longest hold time scanned (ns).
    #[arg(long)]
    pub max_duration: Option<f64>,
    /// Slepian duration (ns).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Skip the interaction-frequency refinement.
    #[arg(long)]
    pub no_refine: bool,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: exit status 2.
    Config(String),
    /// Failure inside a computation: exit status 1.
    Module(cableqsim_core::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// Single-line JSON description.
    pub fn to_json_line(&self) -> String {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m.clone()),
            CliError::Module(e) => (e.kind(), e.to_string()),
            CliError::Io(e) => ("io", e.to_string()),
        };
        json!({ "error": kind, "message": message }).to_string()
    }
}

impl From<cableqsim_core::Error> for CliError {
    fn from(e: cableqsim_core::Error) -> Self {
        CliError::Module(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config<T>(r: cableqsim_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Config(e.to_string()))
}

/// Parses `lo:hi:step` (inclusive of `hi`) or a single value.
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad number {s:?} in grid {text:?}")));
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(CliError::Config(format!("grid {text:?} needs lo <= hi and step > 0")));
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            if n > 1_000_000 {
                return Err(CliError::Config(format!("grid {text:?} has {n} points")));
            }
            Ok((0..n).map(|k| lo + k as f64 * step).collect())
        }
        _ => Err(CliError::Config(format!("grid {text:?} is not lo:hi:step"))),
    }
}

/// Parses `lo:hi`.
pub fn parse_range(text: &str) -> CliResult<(f64, f64)> {
    let v = parse_list(text, ':')?;
    match v.as_slice() {
        &[lo, hi] if lo < hi => Ok((lo, hi)),
        _ => Err(CliError::Config(format!("range {text:?} is not lo:hi with lo < hi"))),
    }
}

/// Parses `a,b`.
pub fn parse_pair(text: &str) -> CliResult<(f64, f64)> {
    let v = parse_list(text, ',')?;
    match v.as_slice() {
        &[a, b] => Ok((a, b)),
        _ => Err(CliError::Config(format!("{text:?} is not a pair a,b"))),
    }
}

fn parse_list(text: &str, sep: char) -> CliResult<Vec<f64>> {
    text.split(sep)
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad number {s:?} in {text:?}"))))
        .collect()
}

/// Fixed scientific notation with nine significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.8e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), fmt_f64)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Resolved model shared by all commands.
struct Model {
    params: CircuitParams,
    modes: ModeSet,
    trunc: TruncationSpec,
}

impl Model {
    fn resolve(cli: &Cli) -> CliResult<Self> {
        let params = match &cli.params {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                config(CircuitParams::from_json_str(&text))?
            }
            None => CircuitParams::default(),
        };
        let m = &cli.model;
        let modes = if let Some(list) = &m.modes {
            let idx = list
                .split(',')
                .map(|s| s.trim().parse::<u32>().map_err(|_| CliError::Config(format!("bad mode number {s:?}"))))
                .collect::<CliResult<Vec<u32>>>()?;
            config(select_modes(&params, &ModeSelection::Indices(idx)))?
        } else if let Some(w) = &m.mode_window {
            let (lo, hi) = parse_range(w)?;
            config(select_modes(&params, &ModeSelection::Window { lo, hi }))?
        } else {
            config(bracketing_modes(&params))?
        };
        let mut trunc = TruncationSpec::with_levels(m.levels_qubit, m.levels_mode);
        trunc.coupling_model = match m.coupling.to_ascii_lowercase().as_str() {
            "full" => CouplingModel::Full,
            "rwa" => CouplingModel::Rwa,
            other => return Err(CliError::Config(format!("unknown coupling model {other:?}"))),
        };
        if m.levels_qubit < 3 || m.levels_mode < 2 {
            return Err(CliError::Config("need at least 3 qubit levels and 2 mode levels".into()));
        }
        Ok(Model { params, modes, trunc })
    }

    fn system(&self) -> CliResult<System> {
        config(System::new(self.params.clone(), self.modes.clone(), self.trunc))
    }

    fn to_json(&self) -> Value {
        json!({
            "params": self.params,
            "modes": self.modes.indices,
            "truncation": {
                "levels_qubit": self.trunc.levels_qubit,
                "levels_mode": self.trunc.levels_mode,
                "coupling_model": format!("{:?}", self.trunc.coupling_model).to_ascii_lowercase(),
            },
        })
    }
}

/// Writes artifacts under one command name and configuration hash.
struct Output {
    dir: PathBuf,
    command: &'static str,
    hash: String,
    files: Vec<String>,
}

impl Output {
    fn header(&self, columns: &[&str]) -> String {
        format!(
            "# cableqsim {} {}\n# config_sha256 {}\n# columns {}\n",
            self.command,
            VERSION,
            self.hash,
            columns.join(",")
        )
    }

    fn csv(&mut self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<PathBuf> {
        let mut text = self.header(columns);
        text.push_str(&columns.join(","));
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write(name, &text)
    }

    /// JSON artifacts carry the header as a leading `header` object.
    fn json(&mut self, name: &str, schema: &str, body: Value) -> CliResult<PathBuf> {
        let doc = json!({
            "header": { "command": self.command, "version": VERSION, "config_sha256": self.hash, "schema": schema },
            "body": body,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
        text.push('\n');
        self.write(name, &text)
    }

    fn write(&mut self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.files.push(name.to_string());
        Ok(path)
    }
}

fn gate_kind(s: &str) -> CliResult<GateKind> {
    config(s.parse())
}

fn schedule_kind(s: &str) -> CliResult<ScheduleKind> {
    config(s.parse())
}

fn cal_options(cal: &CalArgs) -> CliResult<CalibrationOptions> {
    let mut o = CalibrationOptions::default();
    if let Some(dt) = cal.dt {
        if !(dt > 0.0) {
            return Err(CliError::Config(format!("dt must be positive, got {dt}")));
        }
        o.dt = dt;
        o.coarse_dt = o.coarse_dt.max(dt);
    }
    if let Some(m) = cal.max_duration {
        if !(m > 0.0) {
            return Err(CliError::Config(format!("max duration must be positive, got {m}")));
        }
        o.max_duration = m;
    }
    if let Some(tau) = cal.tau {
        o.shape = SlepianShape { tau, ..o.shape };
    }
    if cal.no_refine {
        o.square_refine = None;
        o.shaped_refine = None;
    }
    Ok(o)
}

fn cal_json(o: &CalibrationOptions) -> Value {
    serde_json::to_value(o).expect("serializable")
}

/// The command's resolved options, in the form hashed into the manifest.
fn resolve_options(cli: &Cli, model: &Model) -> CliResult<Value> {
    let p = &model.params;
    Ok(match &cli.command {
        Command::Spectrum { f1, f2, levels } => json!({
            "f1": parse_grid(f1)?, "f2": f2.unwrap_or(p.f_q2), "levels": levels,
        }),
        Command::ZzMap { f1, f2, pole_cap } => json!({
            "f1": parse_grid(f1)?, "f2": parse_grid(f2)?, "pole_cap": pole_cap,
        }),
        Command::ZzFree { detuning, bracket } => {
            let b = match bracket {
                Some(b) => parse_range(b)?,
                None => {
                    let m = 0.5 * (p.f_q1 + p.f_q2);
                    (m - 0.03, m + 0.03)
                }
            };
            json!({ "detuning": detuning, "bracket": [b.0, b.1] })
        }
        Command::ZzAnalytic { f, detuning, bracket } => {
            let b = match bracket {
                Some(b) => parse_range(b)?,
                None => {
                    let lo = model.modes.frequencies.first().copied().unwrap_or(0.0);
                    let hi = model.modes.frequencies.last().copied().unwrap_or(0.0);
                    (lo + 0.02, hi - 0.02)
                }
            };
            json!({ "f": parse_grid(f)?, "detuning": detuning, "bracket": [b.0, b.1] })
        }
        Command::Waveform { gate, hold, j, sample_dt } => json!({
            "gate": gate_kind(&gate.gate)?, "schedule": schedule_kind(&gate.schedule)?,
            "idle": parse_pair(&gate.idle)?, "int": parse_pair(&gate.int)?,
            "hold": hold, "j": j, "sample_dt": sample_dt,
        }),
        Command::Simulate { gate, cal } => json!({
            "gate": gate_kind(&gate.gate)?, "schedule": schedule_kind(&gate.schedule)?,
            "idle": parse_pair(&gate.idle)?, "int": parse_pair(&gate.int)?,
            "calibration": cal_json(&cal_options(cal)?),
        }),
        Command::GateOpt { gate, schedule, q2_idle, q1_bracket, int, cal } => json!({
            "gate": gate_kind(gate)?, "schedule": schedule_kind(schedule)?,
            "q2_idle": parse_grid(q2_idle)?, "q1_bracket": parse_range(q1_bracket)?, "int": parse_pair(int)?,
            "calibration": cal_json(&cal_options(cal)?),
        }),
        Command::DurationScan { gate, schedule, idle, int_q2, int_offset, cal } => {
            let kind = gate_kind(gate)?;
            let offset = int_offset.unwrap_or(match kind {
                GateKind::Iswap => 0.0,
                GateKind::Cz => p.alpha(Qubit::Q1),
            });
            json!({
                "gate": kind, "schedule": schedule_kind(schedule)?, "idle": parse_pair(idle)?,
                "int_q2": parse_grid(int_q2)?, "int_offset": offset,
                "calibration": cal_json(&cal_options(cal)?),
            })
        }
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Spectrum { .. } => "spectrum",
        Command::ZzMap { .. } => "zz-map",
        Command::ZzFree { .. } => "zz-free",
        Command::ZzAnalytic { .. } => "zz-analytic",
        Command::Waveform { .. } => "waveform",
        Command::Simulate { .. } => "simulate",
        Command::GateOpt { .. } => "gate-opt",
        Command::DurationScan { .. } => "duration-scan",
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_sha256: &'a str,
    config: &'a Value,
    outputs: &'a [String],
}

/// Runs one command on a pool of `cli.threads` workers. Everything is
/// validated before any computation starts; outputs do not depend on the
/// thread count.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let model = Model::resolve(cli)?;
    let options = resolve_options(cli, &model)?;
    let command = command_name(&cli.command);
    let resolved = json!({ "command": command, "model": model.to_json(), "options": options });
    let hash = sha256_hex(serde_json::to_string(&resolved).expect("serializable").as_bytes());

    fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", cli.out.display())))?;
    let probe = cli.out.join(".cableqsim-write-test");
    fs::write(&probe, b"").map_err(|e| CliError::Config(format!("{} is not writable: {e}", cli.out.display())))?;
    let _ = fs::remove_file(&probe);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let mut out = Output { dir: cli.out.clone(), command, hash: hash.clone(), files: Vec::new() };
    pool.install(|| dispatch(&cli.command, &model, &options, &mut out))?;

    let manifest = Manifest {
        tool: "cableqsim",
        version: VERSION,
        command,
        config_sha256: &hash,
        config: &resolved,
        outputs: &out.files,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
    text.push('\n');
    fs::write(cli.out.join("manifest.json"), text)?;
    Ok(out.files.iter().map(|f| cli.out.join(f)).chain([cli.out.join("manifest.json")]).collect())
}

fn f64s(v: &Value) -> Vec<f64> {
    v.as_array().map(|a| a.iter().filter_map(Value::as_f64).collect()).unwrap_or_default()
}

fn pair(v: &Value) -> (f64, f64) {
    let a = f64s(v);
    (a[0], a[1])
}

fn dispatch(command: &Command, model: &Model, o: &Value, out: &mut Output) -> CliResult<()> {
    let exec = Execution::Parallel;
    match command {
        Command::Spectrum { levels, .. } => {
            let sys = model.system()?;
            let f2 = o["f2"].as_f64().unwrap();
            let samples = energy_spectrum_scan(&sys, &f64s(&o["f1"]), f2, exec)?;
            let rows = samples.iter().flat_map(|s| {
                s.levels.iter().take(*levels).map(move |l| {
                    vec![
                        fmt_f64(s.f1),
                        fmt_f64(s.f2),
                        l.index.to_string(),
                        fmt_f64(l.energy),
                        l.label.as_ref().map_or_else(|| "unassigned".into(), |b| b.to_string().replace(',', ";")),
                        fmt_f64(l.overlap2),
                        l.excitations().map_or_else(|| "nan".into(), |n| n.to_string()),
                    ]
                })
            });
            out.csv("spectrum.csv", &["f1", "f2", "index", "energy", "label", "overlap2", "excitations"], rows)?;
        }
        Command::ZzMap { .. } => {
            let sys = model.system()?;
            let map = zz_map(&sys, &f64s(&o["f1"]), &f64s(&o["f2"]), exec);
            let mut rows = Vec::new();
            for (i1, &f1) in map.f1_axis.iter().enumerate() {
                for (i2, &f2) in map.f2_axis.iter().enumerate() {
                    rows.push(vec![fmt_f64(f1), fmt_f64(f2), fmt_opt(map.at(i1, i2)), map.flag(i1, i2).as_str().into()]);
                }
            }
            out.csv("zz_map.csv", &["f1", "f2", "zz", "flag"], rows)?;
            let cross = map.zero_crossings(o["pole_cap"].as_f64().unwrap());
            out.csv("zz_contour.csv", &["f1", "f2"], cross.iter().map(|&(a, b)| vec![fmt_f64(a), fmt_f64(b)]))?;
        }
        Command::ZzFree { .. } => {
            let sys = model.system()?;
            let d = o["detuning"].as_f64().unwrap();
            let f = zz_free_point(&sys, d, pair(&o["bracket"]))?;
            out.json(
                "zz_free.json",
                "frequency: mean of f1 and f2 (GHz); f1, f2 (GHz); detuning f1 - f2 (GHz)",
                json!({ "frequency": f, "f1": f + 0.5 * d, "f2": f - 0.5 * d, "detuning": d }),
            )?;
            println!("{}", fmt_f64(f));
        }
        Command::ZzAnalytic { .. } => {
            let p = &model.params;
            let (a1, a2) = (p.alpha(Qubit::Q1), p.alpha(Qubit::Q2));
            let d = o["detuning"].as_f64().unwrap();
            let rows = f64s(&o["f"]).into_iter().map(|f| {
                let (f1, f2) = (f + 0.5 * d, f - 0.5 * d);
                vec![
                    fmt_f64(f),
                    fmt_opt(zz_resonant_approx(p, &model.modes, f, a1).ok()),
                    fmt_f64(f1),
                    fmt_f64(f2),
                    fmt_opt(zz_fourth_order(p, &model.modes, f1, f2, a1, a2).ok()),
                ]
            });
            out.csv("zz_analytic.csv", &["f", "zz_resonant", "f1", "f2", "zz_fourth_order"], rows)?;
            let root = zz_resonant_root(p, &model.modes, a1, pair(&o["bracket"]));
            let body = match root {
                Ok(r) => json!({ "resonant_root": r }),
                Err(e) => json!({ "resonant_root": null, "error": e.kind(), "message": e.to_string() }),
            };
            out.json("zz_analytic.json", "resonant_root: sign change of the near-resonance form (GHz)", body)?;
        }
        Command::Waveform { .. } => {
            let sys = model.system()?;
            let kind: ScheduleKind = serde_json::from_value(o["schedule"].clone()).unwrap();
            let (idle, int) = (pair(&o["idle"]), pair(&o["int"]));
            let defaults = CalibrationOptions::default();
            let j = match o["j"].as_f64() {
                Some(j) => j,
                None if kind == ScheduleKind::SquareSquare => 0.0,
                None => defaults.j_scale * cz_pair_coupling(&sys, idle, int)?,
            };
            let cfg = ScheduleConfig {
                idle,
                int,
                hold: o["hold"].as_f64().unwrap(),
                j_coupling: j,
                shape: defaults.shape,
                hybrid_square_qubit: defaults.hybrid_square_qubit,
                sample_dt: o["sample_dt"].as_f64().unwrap(),
            };
            let schedule = build_schedule(kind, &cfg)?;
            let rows = schedule.sample().into_iter().map(|(t, a, b)| vec![fmt_f64(t), fmt_f64(a), fmt_f64(b)]);
            out.csv("waveform.csv", &["t", "f1", "f2"], rows)?;
        }
        Command::Simulate { .. } => {
            let sys = model.system()?;
            let (gate, schedule, opts) = gate_setup(o)?;
            let report = calibrate_gate(&sys, gate, schedule, pair(&o["idle"]), pair(&o["int"]), &opts)?;
            out.json("gate_report.json", "GateReport", serde_json::to_value(&report).expect("serializable"))?;
            write_traces(&sys, &report, &opts, out)?;
        }
        Command::GateOpt { .. } => {
            let sys = model.system()?;
            let (gate, schedule, opts) = gate_setup(o)?;
            let search = SearchSpec {
                q2_idle_grid: f64s(&o["q2_idle"]),
                q1_bracket: pair(&o["q1_bracket"]),
                int_freqs: pair(&o["int"]),
            };
            let op = optimize_operating_point(&sys, gate, schedule, &search, &opts, exec)?;
            scan_csv(out, "gate_opt_scan.csv", &op.scan)?;
            out.json("gate_opt_best.json", "GateReport", serde_json::to_value(&op.best).expect("serializable"))?;
        }
        Command::DurationScan { .. } => {
            let sys = model.system()?;
            let (gate, schedule, opts) = gate_setup(o)?;
            let offset = o["int_offset"].as_f64().unwrap();
            let grid: Vec<(f64, f64)> = f64s(&o["int_q2"]).into_iter().map(|f2| (f2 + offset, f2)).collect();
            let rows = duration_scan(&sys, gate, schedule, pair(&o["idle"]), &grid, &opts, exec);
            scan_csv(out, "duration_scan.csv", &rows)?;
        }
    }
    Ok(())
}

fn gate_setup(o: &Value) -> CliResult<(GateKind, ScheduleKind, CalibrationOptions)> {
    let gate = serde_json::from_value(o["gate"].clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let schedule = serde_json::from_value(o["schedule"].clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let opts = serde_json::from_value(o["calibration"].clone()).map_err(|e| CliError::Config(e.to_string()))?;
    Ok((gate, schedule, opts))
}

fn scan_csv(out: &mut Output, name: &str, rows: &[ScanRow]) -> CliResult<PathBuf> {
    let cols = [
        "idle_f1",
        "idle_f2",
        "int_f1",
        "int_f2",
        "duration",
        "fidelity",
        "coherent_error",
        "incoherent_error",
        "status",
    ];
    let body = rows.iter().map(|r| {
        vec![
            fmt_opt(r.idle_freqs.map(|p| p.0)),
            fmt_opt(r.idle_freqs.map(|p| p.1)),
            fmt_opt(r.int_freqs.map(|p| p.0)),
            fmt_opt(r.int_freqs.map(|p| p.1)),
            fmt_opt(r.duration),
            fmt_opt(r.fidelity),
            fmt_opt(r.coherent_error),
            fmt_opt(r.incoherent_error),
            r.status.clone(),
        ]
    });
    out.csv(name, &cols, body)
}

/// Bare occupancies of the four computational states along the
/// calibrated schedule.
fn write_traces(sys: &System, report: &GateReport, opts: &CalibrationOptions, out: &mut Output) -> CliResult<()> {
    let cfg = ScheduleConfig {
        idle: report.idle_freqs,
        int: report.int_freqs,
        hold: report.duration,
        j_coupling: report.j_coupling.unwrap_or(0.0),
        shape: SlepianShape { tau: report.duration, ..opts.shape.clone() },
        hybrid_square_qubit: opts.hybrid_square_qubit,
        sample_dt: opts.dt,
    };
    let schedule = build_schedule(report.schedule_kind, &cfg)?;
    let labels: Vec<BareLabel> = computational_labels(sys.basis().n_modes()).to_vec();
    let dt = report.dt.unwrap_or(opts.dt);
    let traces = occupancy_traces(sys, &schedule, &labels, dt, opts.trace_dt)?;
    let mut cols: Vec<String> = vec!["initial".into(), "t".into(), "n_q1".into(), "n_q2".into()];
    cols.extend(sys.modes.indices.iter().map(|m| format!("n_m{m}")));
    let mut rows = Vec::new();
    for tr in &traces {
        for (k, &t) in tr.times.iter().enumerate() {
            let mut row = vec![
                tr.initial_label.to_string().replace(',', ";"),
                fmt_f64(t),
                fmt_f64(tr.qubit_occupancy[0][k]),
                fmt_f64(tr.qubit_occupancy[1][k]),
            ];
            row.extend(tr.mode_occupancy.iter().map(|m| fmt_f64(m[k])));
            rows.push(row);
        }
    }
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    out.csv("traces.csv", &cols, rows)?;
    Ok(())
}

/// Convenience for tests: parse arguments and run.
pub fn run_args<I, T>(args: I) -> CliResult<Vec<PathBuf>>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    run(&cli)
}
