//! The `fracwave` command line.
//!
//! A JSON config file given by `--config` supplies flag values by their long
//! names (`{"alpha": "0.35:0.75:9", "finite-difference": true}`); flags on the
//! command line win. A top-level `"command"` key names the subcommand when the
//! command line does not.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::criteria::{self, CriterionOptions, GrowingModeOptions, Verdict};
use crate::dynamics::{self, CriticalOptions, EvolveOptions, Outcome, Scheme};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Symbol};
use crate::io::{self, Cell, ProfileCache, Table};
use crate::specops;
use crate::verify;
use crate::waves::{self, Family, ModelParams, Normalization, SolveOptions, WaveProfile};

const SUBCOMMANDS: &[&str] =
    &["ground-state", "spectrum", "criterion", "growing-mode", "moving-kernel", "evolve", "critical", "verify"];

#[derive(Parser, Debug)]
#[command(name = "fracwave", version, about = "Solitary waves of fractional KdV and BBM equations")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// JSON file of flag values; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for tables, fields and manifests (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Profile cache directory; `FRACWAVE_CACHE` overrides it.
    #[arg(long, global = true, default_value = ".fracwave-cache")]
    pub cache_dir: PathBuf,
    #[arg(long, global = true)]
    pub no_cache: bool,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Jsonl,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyArg {
    Fkdv,
    Fbbm,
    Whitham,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum NuArg {
    PaperEq16,
    GroundState,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeArg {
    Etdrk4,
    Ifrk4,
    Rk4,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Etdrk4 => Scheme::Etdrk4,
            SchemeArg::Ifrk4 => Scheme::Ifrk4,
            SchemeArg::Rk4 => Scheme::Rk4,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "fkdv")]
    pub family: FamilyArg,
    /// Value, list `a,b`, or range `start:stop:count[g]`.
    #[arg(long, default_value = "0.75")]
    pub alpha: String,
    #[arg(long, default_value_t = 1)]
    pub p: u32,
    /// Value, list, or range like `--alpha`.
    #[arg(long, default_value = "1")]
    pub c: String,
    #[arg(long, value_enum, default_value = "paper-eq16")]
    pub nu: NuArg,
    /// Dispersion parameter of the Whitham symbol.
    #[arg(long, default_value_t = 1.0)]
    pub whitham_gamma: f64,
    /// Grid half-length (default: scaled to the profile width).
    #[arg(long)]
    pub length: Option<f64>,
    /// Grid size (default: tabulated by alpha).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

impl ModelArgs {
    fn points(&self) -> Result<Vec<(f64, f64)>> {
        let alphas = io::parse_range(&self.alpha)?;
        let cs = io::parse_range(&self.c)?;
        Ok(alphas.iter().flat_map(|&a| cs.iter().map(move |&c| (a, c))).collect())
    }

    fn params(&self, alpha: f64, c: f64) -> Result<ModelParams> {
        let nu = match self.nu {
            NuArg::PaperEq16 => Normalization::PaperEq16,
            NuArg::GroundState => Normalization::GroundState,
        };
        match self.family {
            FamilyArg::Fkdv => ModelParams::fkdv(alpha, self.p, c, nu),
            FamilyArg::Fbbm => ModelParams::fbbm(alpha, c),
            FamilyArg::Whitham => ModelParams::new(
                Family::Gfkdv { symbol: Symbol::Whitham { gamma: self.whitham_gamma } },
                alpha,
                self.p,
                c,
                nu,
            ),
        }
    }

    fn grid(&self, params: &ModelParams) -> Result<Arc<Grid>> {
        let auto = waves::auto_grid(params)?;
        match (self.length, self.n) {
            (None, None) => Ok(auto),
            (l, n) => Grid::shared(l.unwrap_or(auto.half_length()), n.unwrap_or(auto.len())),
        }
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, ..SolveOptions::patient() }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve profiles and report their diagnostics.
    GroundState {
        #[command(flatten)]
        model: ModelArgs,
        /// Also write each profile as a .fld file under --out.
        #[arg(long)]
        write_fields: bool,
    },
    /// Spectrum of the linearized operator.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        kernel_tol: Option<f64>,
        /// Dense operator grid size instead of the profile grid.
        #[arg(long)]
        operator_n: Option<usize>,
        /// Number of eigenvalues listed.
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Verdict table of the stability criterion over a sweep.
    Criterion {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        finite_difference: bool,
        /// Remove the periodization error from the finite difference (two extra grids).
        #[arg(long)]
        tail_extrapolation: bool,
        #[arg(long)]
        pairing: bool,
        /// Also search for a growing mode on an operator grid of this size.
        #[arg(long)]
        growing_mode_n: Option<usize>,
    },
    /// Growing mode of the linearized flow.
    GrowingMode {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        no_crosscheck: bool,
        /// Seed the nonlinear flow with the mode and fit its growth over this time.
        #[arg(long)]
        evolve: Option<f64>,
        #[arg(long, default_value_t = 1e-4)]
        amplitude: f64,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Near-kernel eigenvalue of the mode family as the spectral parameter shrinks.
    MovingKernel {
        #[command(flatten)]
        model: ModelArgs,
        /// Values of the spectral parameter (list or range).
        #[arg(long)]
        lambdas: Option<String>,
    },
    /// Time evolution from a profile or a field file.
    Evolve {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Start from this .fld file instead of the profile.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Multiply the initial profile by this factor.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Rescaled diagnostics of the alpha = 1/2 collapse scenario.
    Critical {
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Initial data is this multiple of the ground state.
        #[arg(long, default_value_t = 1.05)]
        amplitude: f64,
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long, default_value_t = 50.0)]
        length: f64,
        #[arg(long, default_value_t = 16384)]
        n: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the oracle suite and print a pass/fail table.
    Verify,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Time step (default: from the stability envelope and the advective limit).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub t_final: f64,
    /// Number of stored snapshots after the initial one.
    #[arg(long, default_value_t = 20)]
    pub snapshots: usize,
    /// Speed of the co-moving frame (default: the wave speed).
    #[arg(long)]
    pub frame_speed: Option<f64>,
    /// Stop when the energy drifts by more than this fraction.
    #[arg(long)]
    pub energy_guard: Option<f64>,
    /// Skip writing snapshot fields.
    #[arg(long)]
    pub no_fields: bool,
}

/// How a command ended, ordered by severity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok,
    HypothesisViolated,
    Failed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::HypothesisViolated => 2,
            Status::Failed => 1,
        }
    }
}

/// Insert the config file's flags right after the subcommand name, so later
/// command-line occurrences override them.
pub fn expand_config(argv: &[String]) -> Result<Vec<String>> {
    let mut path = None;
    let mut i = 1;
    while i < argv.len() {
        if argv[i] == "--config" {
            path = argv.get(i + 1).cloned();
            break;
        }
        if let Some(p) = argv[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            break;
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(argv.to_vec());
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("config {path}: {e}")))?;
    let cfg: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {path}: {e}")))?;
    let Value::Object(map) = cfg else {
        return Err(Error::Config(format!("config {path}: expected a JSON object")));
    };
    let mut tokens = Vec::new();
    let mut command = None;
    for (k, v) in &map {
        if k == "command" {
            command = v.as_str().map(str::to_string);
            continue;
        }
        let flag = format!("--{}", k.replace('_', "-"));
        match v {
            Value::Bool(true) => tokens.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(a) => {
                tokens.push(flag);
                tokens.push(a.iter().map(scalar_token).collect::<Vec<_>>().join(","));
            }
            other => {
                tokens.push(flag);
                tokens.push(scalar_token(other));
            }
        }
    }
    let mut out = argv.to_vec();
    match out.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) {
        Some(pos) => {
            out.splice(pos + 1..pos + 1, tokens);
        }
        None => {
            let cmd = command.ok_or_else(|| Error::Config("no subcommand on the command line or in the config".into()))?;
            out.insert(1, cmd);
            out.splice(2..2, tokens);
        }
    }
    Ok(out)
}

fn scalar_token(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}

/// Parse, run, and return the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match expand_config(&argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("fracwave: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(s) => s.exit_code(),
        Err(e) => {
            eprintln!("fracwave: {e}");
            1
        }
    }
}

struct Ctx {
    out: Option<PathBuf>,
    format: Option<Format>,
    cache: ProfileCache,
    jobs: usize,
}

impl Ctx {
    fn emit_table(&self, name: &str, table: &Table) -> Result<()> {
        let format = self.format.unwrap_or(Format::Csv);
        let (ext, bytes) = match format {
            Format::Jsonl | Format::Json => {
                let mut b = Vec::new();
                table.write_jsonl(&mut b)?;
                ("jsonl", b)
            }
            Format::Csv => ("csv", table.to_csv_string()?.into_bytes()),
        };
        self.emit(&format!("{name}.{ext}"), &bytes)
    }

    fn emit_json(&self, name: &str, v: &Value) -> Result<()> {
        let text = match self.format {
            Some(Format::Jsonl) => io::json_string(v) + "\n",
            _ => io::json_pretty(v) + "\n",
        };
        self.emit(&format!("{name}.json"), text.as_bytes())
    }

    fn emit(&self, file: &str, bytes: &[u8]) -> Result<()> {
        match &self.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                io::write_atomic(&dir.join(file), bytes)?;
            }
            None => {
                let mut so = std::io::stdout().lock();
                so.write_all(bytes)?;
                so.flush()?;
            }
        }
        Ok(())
    }

    fn profile(&self, params: &ModelParams, grid: &Arc<Grid>, opts: &SolveOptions) -> Result<WaveProfile> {
        self.cache.ground_state(params, grid, opts).map(|(w, _)| w)
    }

    /// Map `f` over the points on the worker pool, keeping input order.
    fn sweep<T: Send>(&self, points: &[(f64, f64)], f: impl Fn(f64, f64) -> T + Sync + Send) -> Result<Vec<T>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(pool.install(|| points.par_iter().map(|&(a, c)| f(a, c)).collect()))
    }
}

pub fn execute(cli: &Cli) -> Result<Status> {
    let g = &cli.global;
    let ctx = Ctx {
        out: g.out.clone(),
        format: g.format,
        cache: ProfileCache::resolve(Some(g.cache_dir.clone()), !g.no_cache),
        jobs: g.jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1),
    };
    match &cli.command {
        Command::GroundState { model, write_fields } => ground_state(&ctx, model, *write_fields),
        Command::Spectrum { model, kernel_tol, operator_n, count } => spectrum(&ctx, model, *kernel_tol, *operator_n, *count),
        Command::Criterion { model, finite_difference, tail_extrapolation, pairing, growing_mode_n } => {
            let opts = CriterionOptions {
                finite_difference: *finite_difference || *tail_extrapolation,
                tail_extrapolation: *tail_extrapolation,
                pairing: *pairing,
                growing_mode: *growing_mode_n,
            };
            criterion(&ctx, model, &opts)
        }
        Command::GrowingMode { model, no_crosscheck, evolve, amplitude, dt } => {
            growing_mode(&ctx, model, !*no_crosscheck, *evolve, *amplitude, *dt)
        }
        Command::MovingKernel { model, lambdas } => moving_kernel(&ctx, model, lambdas.as_deref()),
        Command::Evolve { model, run, from, scale } => evolve(&ctx, model, run, from.as_deref(), *scale),
        Command::Critical { c, amplitude, k, length, n, run } => critical(&ctx, *c, *amplitude, *k, *length, *n, run),
        Command::Verify => verify_cmd(&ctx),
    }
}

fn single_point(model: &ModelArgs) -> Result<(f64, f64)> {
    let pts = model.points()?;
    if pts.len() != 1 {
        return Err(Error::Config(format!("this command takes a single (alpha, c) point, got {}", pts.len())));
    }
    Ok(pts[0])
}

fn ground_state(ctx: &Ctx, model: &ModelArgs, write_fields: bool) -> Result<Status> {
    let points = model.points()?;
    let opts = model.solve_options();
    let rows = ctx.sweep(&points, |alpha, c| -> Result<(ModelParams, WaveProfile)> {
        let params = model.params(alpha, c)?;
        let grid = model.grid(&params)?;
        Ok((params.clone(), ctx.profile(&params, &grid, &opts)?))
    })?;
    let mut table = Table::new(&[
        "family", "alpha", "p", "c", "L", "N", "peak", "mass", "seminorm", "residual", "pohozaev", "energy",
        "iterations", "spectral_tail", "decay_exponent", "error",
    ]);
    let mut status = Status::Ok;
    for ((alpha, c), r) in points.iter().zip(rows) {
        match r {
            Ok((params, w)) => {
                let (e, _) = waves::energy_mass(&w.field, &params);
                let decay = waves::decay_check(&w).ok().map(|d| d.exponent);
                table.push(vec![
                    params.family.name().into(),
                    (*alpha).into(),
                    params.p.into(),
                    (*c).into(),
                    w.grid().half_length().into(),
                    w.grid().len().into(),
                    w.field.max_abs().into(),
                    w.mass.into(),
                    w.seminorm.into(),
                    w.residual.into(),
                    waves::pohozaev_residual(&w).into(),
                    e.into(),
                    w.iterations.into(),
                    w.spectral_tail.into(),
                    decay.into(),
                    Cell::Empty,
                ]);
                if write_fields {
                    if let Some(dir) = &ctx.out {
                        fs::create_dir_all(dir)?;
                        let name = format!("profile_{}_a{}_p{}_c{}.fld", params.family.name(), alpha, params.p, c);
                        w.field.write_fld(&dir.join(name))?;
                    }
                }
            }
            Err(e) => {
                eprintln!("fracwave: alpha = {alpha}, c = {c}: {e}");
                status = Status::Failed;
                table.push(error_row(model, *alpha, *c, 16, &e));
            }
        }
    }
    ctx.emit_table("ground_state", &table)?;
    Ok(status)
}

fn error_row(model: &ModelArgs, alpha: f64, c: f64, width: usize, e: &Error) -> Vec<Cell> {
    let mut row = vec![Cell::Empty; width];
    row[0] = format!("{:?}", model.family).to_lowercase().into();
    row[1] = alpha.into();
    row[2] = model.p.into();
    row[3] = c.into();
    row[width - 1] = e.to_string().into();
    row
}

fn spectrum(ctx: &Ctx, model: &ModelArgs, kernel_tol: Option<f64>, operator_n: Option<usize>, count: usize) -> Result<Status> {
    let (alpha, c) = single_point(model)?;
    let params = model.params(alpha, c)?;
    let w = match operator_n {
        Some(n) => criteria::operator_profile(&params, n)?,
        None => ctx.profile(&params, &model.grid(&params)?, &model.solve_options())?,
    };
    let report = specops::linearized_spectrum(&w, kernel_tol)?;
    let oracles = specops::operator_oracles(&w, -0.1)?;
    let lowest: Vec<f64> = report.eigenvalues.iter().take(count).copied().collect();
    let v = json!({
        "tag": io::to_value(&report.tag)?,
        "params": io::to_value(&params)?,
        "L": w.grid().half_length(),
        "N": w.grid().len(),
        "eigenvalues": lowest,
        "complete": report.complete,
        "morse_index": report.morse_index,
        "kernel_dim": report.kernel_dim,
        "kernel_tol": report.kernel_tol,
        "ambiguous_kernel": report.ambiguous_kernel,
        "kernel_alignment": report.kernel_alignment(&w.derivative()),
        "spectral_radius": report.spectral_radius,
        "residuals": io::to_value(&report.residuals)?,
        "oracles": io::to_value(&oracles)?,
    });
    ctx.emit_json("spectrum", &v)?;
    Ok(if report.kernel_dim == 1 { Status::Ok } else { Status::HypothesisViolated })
}

fn criterion(ctx: &Ctx, model: &ModelArgs, opts: &CriterionOptions) -> Result<Status> {
    let points = model.points()?;
    let rows = ctx.sweep(&points, |alpha, c| -> Result<criteria::CriterionRow> {
        let params = model.params(alpha, c)?;
        let grid = if model.length.is_some() || model.n.is_some() { Some(model.grid(&params)?) } else { None };
        criteria::criterion_row(&params, grid, opts)
    })?;
    let mut table = Table::new(&[
        "family",
        "alpha",
        "p",
        "c",
        "morse",
        "kernel_dim",
        "slope",
        "slope_source",
        "verdict",
        "lambda_growth",
        "lambda_crosscheck",
        "rule",
        "closed_form",
        "finite_difference",
        "pairing",
        "kernel_alignment",
        "spectral_tail",
        "note",
        "error",
    ]);
    let mut status = Status::Ok;
    for ((alpha, c), r) in points.iter().zip(rows) {
        match r {
            Ok(row) => {
                let v = &row.verdict;
                if v.verdict == Verdict::HypothesisViolated {
                    status = status.max(Status::HypothesisViolated);
                }
                table.push(vec![
                    row.family.clone().into(),
                    row.alpha.into(),
                    row.p.into(),
                    row.c.into(),
                    v.morse_index.into(),
                    v.kernel_dim.into(),
                    v.slope.into(),
                    io::to_value(&v.slope_source)?.as_str().unwrap_or("").into(),
                    v.verdict.name().into(),
                    row.lambda_growth.into(),
                    row.lambda_crosscheck.into(),
                    v.rule.clone().into(),
                    row.closed_form.into(),
                    row.finite_difference.into(),
                    row.pairing.into(),
                    row.kernel_alignment.into(),
                    row.spectral_tail.into(),
                    v.note.clone().map(Cell::Text).unwrap_or(Cell::Empty),
                    Cell::Empty,
                ]);
            }
            Err(e) => {
                eprintln!("fracwave: alpha = {alpha}, c = {c}: {e}");
                status = Status::Failed;
                table.push(error_row(model, *alpha, *c, 19, &e));
            }
        }
    }
    ctx.emit_table("criterion", &table)?;
    Ok(status)
}

fn growing_mode(
    ctx: &Ctx,
    model: &ModelArgs,
    crosscheck: bool,
    evolve_for: Option<f64>,
    amplitude: f64,
    dt: Option<f64>,
) -> Result<Status> {
    let (alpha, c) = single_point(model)?;
    let params = model.params(alpha, c)?;
    let w = ctx.profile(&params, &model.grid(&params)?, &model.solve_options())?;
    let opts = GrowingModeOptions { crosscheck, ..Default::default() };
    let t0 = Instant::now();
    let mode = criteria::find_growing_mode(&w, &opts)?;
    let mut v = json!({
        "params": io::to_value(&params)?,
        "L": w.grid().half_length(),
        "N": w.grid().len(),
        "found": mode.is_some(),
        "mode": io::to_value(&mode)?,
        "seconds": t0.elapsed().as_secs_f64(),
    });
    if let (Some(m), Some(t_final)) = (&mode, evolve_for) {
        let fit = seeded_growth(&w, m, amplitude, dt, t_final)?;
        v["nonlinear"] = fit;
    }
    ctx.emit_json("growing_mode", &v)?;
    Ok(Status::Ok)
}

/// Evolve `φ + amplitude·Re(mode)` and fit the growth of the orbit distance.
pub fn seeded_growth(w: &WaveProfile, mode: &criteria::GrowingMode, amplitude: f64, dt: Option<f64>, t_final: f64) -> Result<Value> {
    let shape = mode.real_field(w.grid())?;
    let ew = criteria::evolution_profile(w)?;
    let u0 = Field::new(ew.grid().clone(), ew.values().iter().zip(&shape.values).map(|(q, v)| q + amplitude * v).collect())?;
    let dt = dt.unwrap_or_else(|| dynamics::suggest_dt(&u0, &ew.params, Scheme::default_for(&ew.params), ew.params.c, 2.0));
    let g = dynamics::seeded_growth(w, &shape, amplitude, dt, t_final, (1e-3, 1e-1))?;
    let mut v = io::to_value(&g)?;
    v["relative_gap"] = Value::from((g.fit.rate - mode.lambda).abs() / mode.lambda);
    Ok(v)
}

fn moving_kernel(ctx: &Ctx, model: &ModelArgs, lambdas: Option<&str>) -> Result<Status> {
    let (alpha, c) = single_point(model)?;
    let params = model.params(alpha, c)?;
    let w = ctx.profile(&params, &model.grid(&params)?, &model.solve_options())?;
    let list = match lambdas {
        Some(s) => io::parse_range(s)?,
        None => criteria::default_lambda_list(&params),
    };
    let mk = criteria::moving_kernel_probe(&w, &list)?;
    let v = json!({
        "params": io::to_value(&params)?,
        "L": w.grid().half_length(),
        "N": w.grid().len(),
        "result": io::to_value(&mk)?,
    });
    ctx.emit_json("moving_kernel", &v)?;
    Ok(Status::Ok)
}

fn run_options(run: &RunArgs, params: &ModelParams, u0: &Field, frame: f64) -> EvolveOptions {
    let scheme = run.scheme.map(Scheme::from).unwrap_or_else(|| Scheme::default_for(params));
    let dt = run.dt.unwrap_or_else(|| dynamics::suggest_dt(u0, params, scheme, frame, 0.5));
    let steps = (run.t_final / dt).round().max(1.0) as usize;
    let mut opts = EvolveOptions::new(scheme, dt, run.t_final);
    opts.stride = (steps / run.snapshots.max(1)).max(1);
    opts.check_every = opts.stride.min(10);
    opts.frame_speed = frame;
    opts.energy_guard = run.energy_guard;
    opts
}

fn write_run(
    ctx: &Ctx,
    run: &RunArgs,
    traj: &dynamics::Trajectory,
    table: &Table,
    extra: Value,
) -> Result<()> {
    let mut snapshots = Vec::new();
    if let Some(dir) = &ctx.out {
        fs::create_dir_all(dir)?;
        if !run.no_fields {
            for (i, s) in traj.snapshots.iter().enumerate() {
                let name = format!("snapshot_{i:05}.fld");
                s.field.write_fld(&dir.join(&name))?;
                snapshots.push(json!({"t": s.t, "file": name}));
            }
        }
    }
    let csv_name = "diagnostics.csv";
    if ctx.out.is_some() {
        ctx.emit(csv_name, table.to_csv_string()?.as_bytes())?;
    }
    let mut manifest = json!({
        "params": io::to_value(&traj.params)?,
        "scheme": traj.scheme.name(),
        "dt": traj.dt,
        "T": run.t_final,
        "frame_speed": traj.frame_speed,
        "steps": traj.steps,
        "outcome": io::to_value(&traj.outcome)?,
        "snapshots": snapshots,
        "diagnostics": if ctx.out.is_some() { Value::from(csv_name) } else { Value::Null },
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut manifest, extra) {
        m.extend(e);
    }
    ctx.emit_json("manifest", &manifest)?;
    if ctx.out.is_none() {
        ctx.emit_table("diagnostics", table)?;
    }
    Ok(())
}

fn diagnostics_table(rows: &[[f64; 7]]) -> Table {
    let mut t = Table::new(&["t", "E", "F", "rho", "gamma_hat", "mu", "Bt"]);
    for r in rows {
        t.push(r.iter().map(|&x| if x.is_nan() { Cell::Empty } else { Cell::Num(x) }).collect());
    }
    t
}

fn evolve(ctx: &Ctx, model: &ModelArgs, run: &RunArgs, from: Option<&Path>, scale: f64) -> Result<Status> {
    let (alpha, c) = single_point(model)?;
    let params = model.params(alpha, c)?;
    let w = ctx.profile(&params, &model.grid(&params)?, &model.solve_options())?;
    let w = criteria::evolution_profile(&w)?;
    let u0 = match from {
        Some(p) => {
            let f = Field::read_fld(p)?;
            if *f.grid != **w.grid() {
                return Err(Error::Config(format!(
                    "{}: grid (L = {}, N = {}) differs from the profile grid (L = {}, N = {})",
                    p.display(),
                    f.grid.half_length(),
                    f.grid.len(),
                    w.grid().half_length(),
                    w.grid().len()
                )));
            }
            Field::new(w.grid().clone(), f.values)?
        }
        None => w.field.scaled(scale),
    };
    let frame = run.frame_speed.unwrap_or(0.0);
    let opts = run_options(run, &w.params, &u0, frame);
    let traj = dynamics::evolve(&u0, &w.params, &opts)?;
    let drift = dynamics::conservation_monitor(&traj)?;
    let rows = dynamics::diagnostics_rows(&traj, &w, None)?;
    write_run(ctx, run, &traj, &diagnostics_table(&rows), json!({"drift": io::to_value(&drift)?}))?;
    Ok(match traj.outcome {
        Outcome::Completed => Status::Ok,
        _ => Status::Failed,
    })
}

fn critical(ctx: &Ctx, c: f64, amplitude: f64, k: u32, length: f64, n: usize, run: &RunArgs) -> Result<Status> {
    let params = ModelParams::fkdv(0.5, 1, c, Normalization::PaperEq16)?;
    let grid = Grid::shared(length * params.width_scale(), n)?;
    let q = ctx.profile(&params, &grid, &SolveOptions::patient())?;
    let u0 = q.field.scaled(amplitude);
    let frame = run.frame_speed.unwrap_or(c);
    let mut opts = run_options(run, &params, &u0, frame);
    if opts.energy_guard.is_none() {
        opts.energy_guard = Some(1e-3);
    }
    let traj = dynamics::evolve(&u0, &params, &opts)?;
    let diags = dynamics::critical_monitor(&traj, &q, &CriticalOptions { k })?;
    let rows = dynamics::diagnostics_rows(&traj, &q, Some(&diags))?;
    let summary = critical_summary(&q, &diags, c)?;
    write_run(ctx, run, &traj, &diagnostics_table(&rows), json!({"critical": summary, "amplitude": amplitude, "k": k}))?;
    Ok(Status::Ok)
}

/// Headline numbers of a critical run.
pub fn critical_summary(q: &WaveProfile, diags: &[dynamics::CriticalDiagnostics], c: f64) -> Result<Value> {
    let (e_q, f_q) = waves::energy_mass(&q.field, &q.params);
    let after: Vec<&dynamics::CriticalDiagnostics> = diags.iter().filter(|d| d.t > 0.5).collect();
    let monotone = after.windows(2).all(|p| p[1].mu >= p[0].mu);
    let max = |f: fn(&dynamics::CriticalDiagnostics) -> f64| diags.iter().map(f).fold(0.0f64, f64::max);
    let t: Vec<f64> = diags.iter().map(|d| d.t).collect();
    let mu: Vec<f64> = diags.iter().map(|d| d.mu).collect();
    let gamma = dynamics::unwrap_shifts(&diags.iter().map(|d| d.gamma).collect::<Vec<_>>(), f64::INFINITY);
    let shift = dynamics::shift_tracking_check(&t, &gamma, &mu, c).ok();
    Ok(json!({
        "energy_of_ground_state": e_q,
        "mass_of_ground_state": f_q,
        "energy_ratio": e_q.abs() / f_q,
        "mu_final": mu.last().copied().unwrap_or(f64::NAN),
        "mu_max": max(|d| d.mu),
        "mu_nondecreasing_after_0.5": monotone,
        "rho_max": max(|d| d.rho),
        "rho_initial": diags.first().map(|d| d.rho).unwrap_or(f64::NAN),
        "identity_mass_max": max(|d| d.identity_mass),
        "identity_seminorm_max": max(|d| d.identity_seminorm),
        "identity_energy_max": max(|d| d.identity_energy),
        "quadratic_form_min": diags.iter().map(|d| d.quadratic_form).fold(f64::INFINITY, f64::min),
        "quadratic_form_sign": if diags.iter().all(|d| d.quadratic_form > 0.0) { "positive" } else { "not positive" },
        "shift_bound_ratio": shift.map(|s| s.bound_ratio),
    }))
}

fn verify_cmd(ctx: &Ctx) -> Result<Status> {
    let checks = verify::run_all();
    let mut table = Table::new(&["check", "value", "tolerance", "result", "seconds", "detail"]);
    for ch in &checks {
        table.push(vec![
            ch.name.clone().into(),
            ch.value.into(),
            ch.tolerance.into(),
            if ch.pass { "PASS" } else { "FAIL" }.into(),
            ch.seconds.into(),
            ch.detail.clone().into(),
        ]);
    }
    match (&ctx.out, ctx.format) {
        (None, None) => {
            let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
            let mut so = std::io::stdout().lock();
            for ch in &checks {
                writeln!(
                    so,
                    "{}  {:<width$}  {:>12}  (tol {})  {:.1}s  {}",
                    if ch.pass { "PASS" } else { "FAIL" },
                    ch.name,
                    io::fmt_sig(ch.value, 4),
                    io::fmt_sig(ch.tolerance, 2),
                    ch.seconds,
                    ch.detail
                )?;
            }
            let passed = checks.iter().filter(|c| c.pass).count();
            writeln!(so, "{passed}/{} checks passed", checks.len())?;
        }
        _ => ctx.emit_table("verify", &table)?,
    }
    Ok(if checks.iter().all(|c| c.pass) { Status::Ok } else { Status::Failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn config_values_yield_to_flags() {
        let dir = std::env::temp_dir().join(format!("fracwave-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("run.json");
        fs::write(&cfg, r#"{"alpha": "0.35:0.75:9", "c": 2, "finite-difference": true, "jobs": 3}"#).unwrap();
        let a = expand_config(&argv(&format!("fracwave criterion --config {} --c 1", cfg.display()))).unwrap();
        let cli = Cli::try_parse_from(&a).unwrap();
        assert_eq!(cli.global.jobs, Some(3));
        match cli.command {
            Command::Criterion { model, finite_difference, .. } => {
                assert_eq!(model.alpha, "0.35:0.75:9");
                assert_eq!(model.c, "1");
                assert!(finite_difference);
            }
            other => panic!("{other:?}"),
        }
        fs::write(&cfg, r#"{"command": "ground-state", "alpha": [0.6, 0.7]}"#).unwrap();
        let a = expand_config(&argv(&format!("fracwave --config {}", cfg.display()))).unwrap();
        let cli = Cli::try_parse_from(&a).unwrap();
        match cli.command {
            Command::GroundState { model, .. } => assert_eq!(model.points().unwrap().len(), 2),
            other => panic!("{other:?}"),
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn exit_codes_rank_failures() {
        assert_eq!(Status::Ok.max(Status::HypothesisViolated).exit_code(), 2);
        assert_eq!(Status::HypothesisViolated.max(Status::Failed).exit_code(), 1);
        assert_eq!(run(argv("fracwave no-such-command")), 1);
        assert_eq!(run(argv("fracwave ground-state --family fbbm --alpha 0.2 --c 2 --no-cache")), 1);
    }
}
