use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mmlt_core::bench::{grid_sweep, pow2_grid, spr, BenchRecord};
use mmlt_core::dsl::{parse_task_with, recognize, Bindings, Dims, TaskSpec, DEFAULT_EXTERNALS};
use mmlt_core::exec::{DataSpec, OperandValue, Operands};
use mmlt_core::matrix::{DataMode, Layout, MatrixBuffer};
use mmlt_core::naive::run_naive;
use mmlt_core::plan::{compile, CompiledTask, MachineModel};
use mmlt_core::tiled::TileParams;
use mmlt_core::tune::{adaptive_execute, fixed_execute, MonotonicClock};
use mmlt_core::{presets, Error, Result};

/// Adaptive execution of matrix-multiplication-like loop tasks.
#[derive(Parser)]
#[command(name = "mmlt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a task and report elapsed time and SPR.
    Run(RunArgs),
    /// Run adaptively and print the tuning report as JSON.
    Tune(RunArgs),
    /// Time a power-of-two (kc, nc) grid plus the adaptive run.
    Bench(BenchArgs),
    /// Show recognition, DAG, pseudo program, register ledger and kernel plan.
    Explain(TaskArgs),
}

#[derive(Args)]
struct TaskArgs {
    /// Task source file.
    #[arg(long, conflicts_with = "preset")]
    task: Option<PathBuf>,
    /// Built-in task, e.g. `matmul`, `q1`, `q2-ij-atb`.
    #[arg(long)]
    preset: Option<String>,
    /// Extra integer bindings for range bounds, `NAME=VALUE`.
    #[arg(long = "bind", value_parser = parse_binding)]
    binds: Vec<(String, i64)>,
    /// Elements per vector register.
    #[arg(long, default_value_t = 8)]
    simd_width: usize,
    /// Vector registers available to the kernel.
    #[arg(long, default_value_t = 32)]
    registers: usize,
    #[arg(long, default_value_t = 12)]
    max_kernel_h: usize,
    /// Defaults to max(16, 2 * simd width).
    #[arg(long)]
    max_kernel_w: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, num_args = 3, value_names = ["M", "K", "N"], required = true)]
    dims: Vec<i64>,
    #[arg(long, value_enum, default_value_t = LayoutArg::Row)]
    layout_a: LayoutArg,
    #[arg(long, value_enum, default_value_t = LayoutArg::Row)]
    layout_b: LayoutArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = DataArg::Int)]
    data: DataArg,
    /// Copy operands into kernel access order before executing.
    #[arg(long)]
    packing: bool,
    #[arg(long, value_enum, default_value_t = Mode::Adaptive)]
    mode: Mode,
    #[arg(long, required_if_eq("mode", "fixed"))]
    kc: Option<usize>,
    #[arg(long, required_if_eq("mode", "fixed"))]
    nc: Option<usize>,
    /// Compare against the naive loop.
    #[arg(long)]
    verify: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Repetitions; the minimum elapsed is reported.
    #[arg(long, default_value_t = 3)]
    trials: usize,
    /// Load the A-like operand from an AMLT file.
    #[arg(long)]
    a_file: Option<PathBuf>,
    /// Load the B-like operand from an AMLT file.
    #[arg(long)]
    b_file: Option<PathBuf>,
    /// Write the result matrix (run) or the report (tune) here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Largest kc in the grid (defaults to min(K, 1024)).
    #[arg(long)]
    kc_max: Option<usize>,
    /// Largest nc in the grid (defaults to min(N, 1024)).
    #[arg(long)]
    nc_max: Option<usize>,
    /// Report the mean over trials instead of the minimum.
    #[arg(long)]
    mean: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Row,
    Col,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataArg {
    Int,
    Real,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    Adaptive,
    Fixed,
    Naive,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

fn parse_binding(s: &str) -> std::result::Result<(String, i64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v = v.trim().parse().map_err(|e| format!("`{v}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Row => Layout::RowMajor,
            LayoutArg::Col => Layout::ColMajor,
        }
    }
}

/// Failure that should exit with the given code.
struct Failure {
    code: u8,
    class: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::UnboundVariable { .. } | Error::NotMmlt { .. } | Error::UnsupportedExpression(_) => 2,
            _ => 1,
        };
        Failure { code, class: e.class(), message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Tune(a) => cmd_tune(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Explain(a) => cmd_explain(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.class, f.message);
            ExitCode::from(f.code)
        }
    }
}

impl TaskArgs {
    fn source(&self) -> Result<(String, String)> {
        match (&self.task, &self.preset) {
            (Some(path), _) => Ok((path.display().to_string(), std::fs::read_to_string(path)?)),
            (None, Some(name)) => Ok((name.clone(), presets::preset(name)?)),
            (None, None) => Err(Error::InvalidArgument("one of --task or --preset is required".into())),
        }
    }

    fn parse(&self) -> Result<(String, TaskSpec)> {
        let (id, src) = self.source()?;
        let mut externals: Vec<&str> = DEFAULT_EXTERNALS.to_vec();
        externals.extend(self.binds.iter().map(|(k, _)| k.as_str()));
        Ok((id, parse_task_with(&src, &externals)?))
    }

    fn machine(&self) -> Result<MachineModel> {
        let m = MachineModel {
            simd_width: self.simd_width,
            n_vec_regs: self.registers,
            max_kernel_h: self.max_kernel_h,
            max_kernel_w: self.max_kernel_w.unwrap_or((2 * self.simd_width).max(16)),
        };
        m.validate()?;
        Ok(m)
    }
}

struct Prepared {
    id: String,
    ct: CompiledTask,
    bindings: Bindings,
    dims: Dims,
    operands: Operands,
    mode: DataMode,
}

fn prepare(a: &RunArgs) -> CliResult<Prepared> {
    let (id, task) = a.task.parse()?;
    let ct = compile(&task, &a.task.machine()?)?;
    let [m, k, n] = [a.dims[0], a.dims[1], a.dims[2]];
    if m < 1 || k < 1 || n < 1 {
        return Err(Error::InvalidArgument("dimensions must be at least 1".into()).into());
    }
    let mut bindings: Bindings = [("M".to_string(), m), ("K".to_string(), k), ("N".to_string(), n)].into();
    bindings.extend(a.task.binds.iter().cloned());
    let dims = ct.info.dims(&bindings)?;
    let mode = match a.data {
        DataArg::Int => DataMode::Int,
        DataArg::Real => DataMode::Real,
    };
    let spec = DataSpec { seed: a.seed, mode, layout_a: a.layout_a.into(), layout_b: a.layout_b.into() };
    let mut operands = Operands::generate(&ct.info, &dims, &spec);
    for (file, name) in [(&a.a_file, &ct.info.a.name), (&a.b_file, &ct.info.b.name)] {
        if let Some(path) = file {
            operands.inputs.insert(name.clone(), OperandValue::Matrix(MatrixBuffer::load(path)?));
        }
    }
    if a.mode == Mode::Fixed && (a.kc == Some(0) || a.nc == Some(0)) {
        return Err(Error::InvalidArgument("--kc and --nc must be at least 1".into()).into());
    }
    Ok(Prepared { id, ct, bindings, dims, operands, mode })
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Adaptive => "adaptive",
        Mode::Fixed => "fixed",
        Mode::Naive => "naive",
    }
}

fn cmd_run(a: &RunArgs) -> CliResult<()> {
    let p = prepare(a)?;
    let mut best: Option<(f64, Operands, Option<TileParams>)> = None;
    for _ in 0..a.trials.max(1) {
        let mut ops = p.operands.clone();
        let (elapsed, chosen) = match a.mode {
            Mode::Adaptive => {
                let (report, e) = adaptive_execute(&p.ct, &p.dims, &mut ops, &mut MonotonicClock::new(), a.packing)?;
                (e, Some(report.chosen))
            }
            Mode::Fixed => {
                let params = TileParams { kc: a.kc.unwrap_or(1), nc: a.nc.unwrap_or(1) };
                (fixed_execute(&p.ct, &p.dims, &mut ops, params, a.packing)?, Some(params))
            }
            Mode::Naive => (run_naive(&p.ct.task, &p.bindings, &ops.inputs, &mut ops.result)?, None),
        };
        if best.as_ref().is_none_or(|b| elapsed < b.0) {
            best = Some((elapsed, ops, chosen));
        }
    }
    let (elapsed, ops, chosen) = best.expect("at least one trial");
    let verification = if a.verify { Some(verify(&p, &ops.result)?) } else { None };
    if let Some(path) = &a.out {
        ops.result.save(path)?;
    }
    let d = p.dims;
    let record = BenchRecord {
        task: p.id.clone(),
        dims: d,
        mode: mode_name(a.mode).into(),
        elapsed,
        spr: spr(d.m, d.k, d.n, elapsed.max(f64::MIN_POSITIVE))?,
        chosen,
        verification: verification.as_ref().map(|v| v.0.clone()),
    };
    print_record(&record, a.format);
    match verification {
        Some((_, false)) => Err(Failure { code: 3, class: "verification", message: "result differs from the naive loop".into() }),
        _ => Ok(()),
    }
}

/// Compare with the naive loop: exact for int data, 1e-12 relative for real data.
fn verify(p: &Prepared, result: &MatrixBuffer) -> Result<(String, bool)> {
    let mut ops = p.operands.clone();
    run_naive(&p.ct.task, &p.bindings, &ops.inputs, &mut ops.result)?;
    let err = result.max_rel_error(&ops.result);
    Ok(match p.mode {
        DataMode::Int if result.same_values(&ops.result) => ("exact".into(), true),
        DataMode::Int => (format!("mismatch (max relative error {err:e})"), false),
        DataMode::Real => (format!("max relative error {err:e}"), err <= 1e-12),
    })
}

fn print_record(r: &BenchRecord, format: Format) {
    let chosen = r.chosen.map(|c| format!("{},{}", c.kc, c.nc)).unwrap_or_default();
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(r).expect("record serializes")),
        Format::Csv => {
            println!("task,m,k,n,mode,elapsed,spr,kc,nc,verification");
            let (kc, nc) = chosen.split_once(',').unwrap_or(("", ""));
            println!(
                "{},{},{},{},{},{:.6},{:.4},{kc},{nc},{}",
                r.task,
                r.dims.m,
                r.dims.k,
                r.dims.n,
                r.mode,
                r.elapsed,
                r.spr,
                r.verification.as_deref().unwrap_or("")
            );
        }
        Format::Table => {
            println!("task          {}", r.task);
            println!("dims          {} x {} x {}", r.dims.m, r.dims.k, r.dims.n);
            println!("mode          {}", r.mode);
            println!("elapsed       {:.6} s", r.elapsed);
            println!("spr           {:.4}", r.spr);
            if let Some(c) = r.chosen {
                println!("kc, nc        {}, {}", c.kc, c.nc);
            }
            if let Some(v) = &r.verification {
                println!("verification  {v}");
            }
        }
    }
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_tune(a: &RunArgs) -> CliResult<()> {
    let mut p = prepare(a)?;
    let (report, elapsed) = adaptive_execute(&p.ct, &p.dims, &mut p.operands, &mut MonotonicClock::new(), a.packing)?;
    #[derive(Serialize)]
    struct Out<'a> {
        task: &'a str,
        dims: Dims,
        elapsed: f64,
        #[serde(flatten)]
        report: &'a mmlt_core::tune::TuneReport,
    }
    let out = Out { task: &p.id, dims: p.dims, elapsed, report: &report };
    emit(&(serde_json::to_string_pretty(&out).expect("report serializes") + "\n"), &a.out)?;
    Ok(())
}

fn cmd_bench(b: &BenchArgs) -> CliResult<()> {
    let a = &b.run;
    let p = prepare(a)?;
    let kcs = pow2_grid(b.kc_max.unwrap_or(p.dims.k.min(1024)));
    let ncs = pow2_grid(b.nc_max.unwrap_or(p.dims.n.min(1024)));
    let grid = if b.mean {
        // Means: sum single-trial sweeps.
        let n = a.trials.max(1);
        let mut acc = grid_sweep(&p.ct, &p.dims, &p.operands, &kcs, &ncs, 1, a.packing)?;
        for _ in 1..n {
            let g = grid_sweep(&p.ct, &p.dims, &p.operands, &kcs, &ncs, 1, a.packing)?;
            for (ra, rb) in acc.elapsed.iter_mut().zip(&g.elapsed) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
            acc.adaptive_elapsed += g.adaptive_elapsed;
        }
        acc.elapsed.iter_mut().flatten().for_each(|x| *x /= n as f64);
        acc.adaptive_elapsed /= n as f64;
        acc
    } else {
        grid_sweep(&p.ct, &p.dims, &p.operands, &kcs, &ncs, a.trials.max(1), a.packing)?
    };
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&grid).expect("grid serializes") + "\n",
        Format::Csv => grid.to_csv(),
        Format::Table => {
            let mut s = format!("{:>8}", "kc\\nc");
            for nc in &grid.ncs {
                s.push_str(&format!("{nc:>10}"));
            }
            s.push('\n');
            for (kc, row) in grid.kcs.iter().zip(&grid.elapsed) {
                s.push_str(&format!("{kc:>8}"));
                for e in row {
                    s.push_str(&format!("{e:>10.4}"));
                }
                s.push('\n');
            }
            let (bp, be) = grid.best();
            let c = grid.adaptive.chosen;
            s.push_str(&format!("best grid: kc={} nc={} {:.4} s\n", bp.kc, bp.nc, be));
            s.push_str(&format!(
                "adaptive:  kc={} nc={} {:.4} s ({:.3}x best)\n",
                c.kc,
                c.nc,
                grid.adaptive_elapsed,
                grid.adaptive_elapsed / be
            ));
            s
        }
    };
    emit(&text, &a.out)?;
    Ok(())
}

fn cmd_explain(a: &TaskArgs) -> CliResult<()> {
    let (id, task) = a.parse()?;
    let machine = a.machine()?;
    println!("task: {id}");
    println!("{task}");
    let recog = recognize(&task);
    match recog.mmlt() {
        Some(info) => {
            println!("\nrecognized: matrix-multiplication-like");
            println!("  result {}, A-like {}{}, B-like {}{}", info.result, info.a.name, t(info.a.transposed), info.b.name, t(info.b.transposed));
            for l in &info.aux_leaves {
                println!("  aux {} ({:?})", l.name, l.class);
            }
        }
        None => {
            let Some(c) = (match recog {
                mmlt_core::dsl::Recognition::NotMmlt { failed_condition } => Some(failed_condition),
                _ => None,
            }) else {
                unreachable!()
            };
            return Err(Error::NotMmlt { condition: c }.into());
        }
    }
    let ct = compile(&task, &machine)?;
    println!("\nexpression DAG:\n{}", ct.dag);
    println!(
        "\npseudo program ({} extra vector, {} mask registers):\n{}",
        ct.program.n_extra_vec_regs, ct.program.n_mask_regs, ct.program
    );
    if ct.plan.program != ct.program {
        println!("\nafter accumulate fusion:\n{}", ct.plan.program);
    }
    println!(
        "\nregister ledger for {} (S_w = {}, R = {}):\n{}",
        ct.plan.shape, machine.simd_width, machine.n_vec_regs, ct.plan.ledger
    );
    println!("\nchosen kernel: {}", ct.plan.shape);
    println!("\n{}", ct.plan);
    Ok(())
}

fn t(transposed: bool) -> &'static str {
    if transposed {
        " (transposed)"
    } else {
        ""
    }
}
