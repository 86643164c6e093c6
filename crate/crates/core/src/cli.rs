//! Command-line front end.
//!
//! Exit codes: `solve` returns 0 on a complete result, 2 when the budget ran
//! out and 1 on input errors. `qrse` returns 0 when a path meets the
//! threshold, 3 when none can, 2 when undecided and 1 on input errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use rayon::prelude::*;
use serde_json::json;

use crate::bitvector::{parse_mbv, BlastResult};
use crate::compiler::{Budget, Heuristic, RelaxOrder};
use crate::counting::{
    decimal, millis, parse_portfolio, solve_portfolio, solve_with_chance_bits, Mode, SolveConfig, SolveResult, Stage,
    Status,
};
use crate::formula::{parse_extended_dimacs, Cnf, VarPartition};
use crate::qrse::{parse_program, parse_rational, run_qrse, QrseConfig, Solver, Verdict, SOLVER_STACK};

#[derive(Debug, Parser)]
#[command(name = "qrobust", version, about = "Quantitative robustness via f-E-MAJSAT")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an f-E-MAJSAT instance (.cnf with choice/chance lines, or .mbv).
    Solve(SolveArgs),
    /// Rank the paths of a .qimp program by quantitative robustness.
    Qrse(QrseArgs),
    /// Run an algorithm matrix over a directory of instances and print CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

/// A comma-separated stage list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stages(pub Vec<Stage>);

fn parse_stages(s: &str) -> Result<Stages, String> {
    parse_portfolio(s).map(Stages)
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value = "exact")]
    pub mode: Mode,
    /// Number of chance variables promoted to the upper layer in relax mode.
    #[arg(long, default_value_t = 8)]
    pub relax_count: usize,
    #[arg(long, default_value = "bfs")]
    pub relax_order: RelaxOrder,
    /// Time budget in seconds.
    #[arg(long, env = "QROBUST_TIMEOUT")]
    pub timeout: Option<f64>,
    /// Node budget for each compilation.
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Branching heuristic: dissection, min-degree or literal-count.
    #[arg(long, default_value = "dissection")]
    pub heuristic: Heuristic,
    /// Comma-separated stages such as `bfs:8,bfs:128`; overrides --mode.
    #[arg(long, value_parser = parse_stages)]
    pub portfolio: Option<Stages>,
}

impl SolverArgs {
    fn budget(&self) -> Budget {
        Budget {
            max_nodes: self.max_nodes,
            max_time: self.timeout.map(Duration::from_secs_f64),
        }
    }

    fn config(&self) -> SolveConfig {
        SolveConfig {
            mode: self.mode,
            relax_count: self.relax_count,
            relax_order: self.relax_order,
            budget: self.budget(),
            heuristic: self.heuristic,
        }
    }

    fn solver(&self) -> Solver {
        match &self.portfolio {
            Some(stages) => Solver::Portfolio {
                stages: stages.0.clone(),
                budget: self.budget(),
                heuristic: self.heuristic,
            },
            None => Solver::Single(self.config()),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct QrseArgs {
    pub input: PathBuf,
    /// Robustness threshold, as a fraction (`1/5`) or a decimal (`0.2`).
    #[arg(long, default_value = "1", value_parser = parse_rational)]
    pub threshold: BigRational,
    /// Maximum number of branch decisions per path.
    #[arg(long, default_value_t = 16)]
    pub bound: usize,
    /// Score the disjunction of target paths.
    #[arg(long)]
    pub merge: bool,
    /// Score every path instead of stopping at the first that meets the threshold.
    #[arg(long)]
    pub all: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Directory of .cnf and .mbv instances.
    pub dir: PathBuf,
    /// Algorithm matrix as comma-separated stages.
    #[arg(long, default_value = "exact,bfs:8", value_parser = parse_stages)]
    pub configs: Stages,
    /// Time budget per instance and configuration, in seconds.
    #[arg(long, env = "QROBUST_TIMEOUT", default_value_t = 10.0)]
    pub timeout: f64,
    #[arg(long)]
    pub max_nodes: Option<usize>,
    #[arg(long, default_value = "dissection")]
    pub heuristic: Heuristic,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// A loaded solver instance.
pub struct Instance {
    pub cnf: Cnf,
    pub partition: VarPartition,
    pub chance_bits: usize,
    pub blast: Option<BlastResult>,
}

/// Reads a `.cnf` or `.mbv` file.
pub fn load_instance(path: &Path) -> Result<Instance, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let fail = |e: &dyn std::fmt::Display| format!("{}: {e}", path.display());
    match path.extension().and_then(|e| e.to_str()) {
        Some("mbv") => {
            let file = parse_mbv(&text).map_err(|e| fail(&e))?;
            let b = file.blast().map_err(|e| fail(&e))?;
            Ok(Instance {
                cnf: b.cnf.clone(),
                partition: b.partition.clone(),
                chance_bits: b.uncontrolled_bits(),
                blast: Some(b),
            })
        }
        Some("cnf") => {
            let (cnf, partition) = parse_extended_dimacs(&text).map_err(|e| fail(&e))?;
            Ok(Instance {
                chance_bits: partition.chance.len(),
                cnf,
                partition,
                blast: None,
            })
        }
        _ => Err(format!("{}: expected a .cnf or .mbv file", path.display())),
    }
}

fn run_solver(inst: &Instance, args: &SolverArgs) -> Result<SolveResult, String> {
    let r = match &args.portfolio {
        Some(stages) => solve_portfolio(
            &inst.cnf,
            &inst.partition,
            inst.chance_bits,
            &stages.0,
            args.budget(),
            args.heuristic,
            |r| r.is_exact(),
        ),
        None => solve_with_chance_bits(&inst.cnf, &inst.partition, inst.chance_bits, &args.config()),
    };
    r.map_err(|e| e.to_string())
}

fn witness_text(inst: &Instance, r: &SolveResult) -> String {
    match &inst.blast {
        Some(b) => b
            .decode_controlled(&r.witness)
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" "),
        None => r
            .witness
            .iter()
            .map(|(v, b)| (if b { 1 } else { -1 }) * i64::from(v.index()))
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    }
}

/// Header of the benchmark CSV; `solve --format csv` prints the same columns.
pub const CSV_HEADER: &str = "instance,mode,r,order,lower,upper,imprecision,wall_ms,status";

fn imprecision_cell(r: &SolveResult) -> String {
    match r.imprecision() {
        Some(x) => decimal(&x, 6),
        None => "inf".into(),
    }
}

fn csv_row(instance: &str, stage: &Stage, outcome: &Result<SolveResult, String>, wall: Duration) -> String {
    let (order, r) = match stage.mode {
        Mode::Relax => (stage.order.to_string(), stage.r.to_string()),
        _ => ("-".to_string(), "0".to_string()),
    };
    let (lower, upper, imprecision, status) = match outcome {
        Ok(res) => (
            res.lower.to_string(),
            res.upper.to_string(),
            imprecision_cell(res),
            res.status.to_string(),
        ),
        Err(_) => ("-".into(), "-".into(), "-".into(), "error".into()),
    };
    format!(
        "{instance},{},{r},{order},{lower},{upper},{imprecision},{:.3},{status}",
        stage.mode,
        millis(wall)
    )
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> i32 {
    let inst = match load_instance(&args.input) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let start = Instant::now();
    let outcome = run_solver(&inst, &args.solver);
    let wall = start.elapsed();
    let r = match outcome {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let (lo, hi) = r.ratio();
    let name = args.input.display().to_string();
    let _ = match args.format {
        Format::Json => {
            let mut v = r.to_json();
            v["instance"] = json!(name);
            v["ratio"] = json!({
                "lower": lo.to_string(),
                "upper": hi.to_string(),
                "lower_decimal": decimal(&lo, 10),
                "upper_decimal": decimal(&hi, 10),
            });
            if let Some(b) = &inst.blast {
                v["inputs"] = json!(b.decode_controlled(&r.witness));
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("serialisable"))
        }
        Format::Text => writeln!(
            out,
            "instance   {name}\nalgorithm  {}\nstatus     {}\nlower      {}\nupper      {}\nratio      [{}, {}]\nwitness    {}\nnodes      {}\ntime_ms    {:.3}{}",
            r.algorithm,
            r.status,
            r.lower,
            r.upper,
            decimal(&lo, 10),
            decimal(&hi, 10),
            witness_text(&inst, &r),
            r.stats.nodes,
            millis(wall),
            r.note.as_ref().map(|n| format!("\nnote       {n}")).unwrap_or_default()
        ),
        Format::Csv => {
            let stage = Stage {
                mode: args.solver.mode,
                order: args.solver.relax_order,
                r: args.solver.relax_count,
            };
            writeln!(out, "{CSV_HEADER}\n{}", csv_row(&name, &stage, &Ok(r.clone()), wall))
        }
    };
    match r.status {
        Status::Complete => 0,
        Status::Partial => 2,
    }
}

fn cmd_qrse(args: &QrseArgs, out: &mut dyn Write) -> i32 {
    let text = match std::fs::read_to_string(&args.input) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.input.display());
            return 1;
        }
    };
    let program = match parse_program(&text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", args.input.display());
            return 1;
        }
    };
    let cfg = QrseConfig {
        bound: args.bound,
        threshold: args.threshold.clone(),
        solver: args.solver.solver(),
        merge: args.merge,
        all: args.all,
    };
    let report = match run_qrse(&program, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let _ = match args.format {
        Format::Json => writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&report.to_json()).expect("serialisable")
        ),
        Format::Text => write!(out, "{}", report.to_text()),
        Format::Csv => {
            let mut s = String::from("path,lower,upper,status\n");
            for e in &report.entries {
                s.push_str(&format!("{},{},{},{}\n", e.id, e.lower, e.upper, e.status));
            }
            write!(out, "{s}")
        }
    };
    match report.verdict {
        Verdict::Found => 0,
        Verdict::NotFound => 3,
        Verdict::Unknown => 2,
    }
}

/// Instances of `dir` in name order.
pub fn corpus(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("cnf" | "mbv")))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> i32 {
    let files = match corpus(&args.dir) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let jobs: Vec<(&PathBuf, &Stage)> = files.iter().flat_map(|f| args.configs.0.iter().map(move |s| (f, s))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new().stack_size(SOLVER_STACK);
    if let Some(n) = args.jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().expect("thread pool");
    let rows: Vec<String> = pool.install(|| {
        jobs.par_iter()
            .map(|(file, stage)| {
                let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                let start = Instant::now();
                let outcome = load_instance(file).and_then(|inst| {
                    let solver = SolverArgs {
                        mode: stage.mode,
                        relax_count: stage.r,
                        relax_order: stage.order,
                        timeout: Some(args.timeout),
                        max_nodes: args.max_nodes,
                        heuristic: args.heuristic,
                        portfolio: None,
                    };
                    run_solver(&inst, &solver)
                });
                if let Err(e) = &outcome {
                    eprintln!("warning: {name} {stage}: {e}");
                }
                csv_row(&name, stage, &outcome, start.elapsed())
            })
            .collect()
    });
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    let _ = write!(out, "{text}");
    0
}

/// Runs the command line `args` (including the program name), writing the
/// report to `out`, and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, out),
        Command::Qrse(a) => cmd_qrse(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

pub fn main() -> std::process::ExitCode {
    let args: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let code = crate::with_large_stack(move || {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        run(args, &mut lock)
    });
    std::process::ExitCode::from(code as u8)
}
