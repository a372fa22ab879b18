//! Command-line interface: solve, generate, exact, eval and bench.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance::{gen_euclidean, gen_gap_instance, gen_suite_instance, parse_instance, Instance};
use crate::oracle::exact_solve;
use crate::pipeline::{solve, SolveConfig};

#[derive(Parser, Debug)]
#[command(name = "capkm", version, about = "Capacitated k-median with (1+eps) capacity violation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline and print the report.
    Solve(SolveArgs),
    /// Write a generated instance.
    Generate(GenerateArgs),
    /// Brute-force optimum.
    Exact(ExactArgs),
    /// Check and price an assignment file.
    Eval(EvalArgs),
    /// Solve a seeded suite and tabulate the ratios.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = true)]
struct Source {
    /// Instance file.
    #[arg(long, conflicts_with_all = ["gap", "euclid"])]
    input: Option<PathBuf>,
    /// Gap family with `U` groups.
    #[arg(long, value_name = "U", requires = "dist", conflicts_with = "euclid")]
    gap: Option<u32>,
    /// Distance between gap groups.
    #[arg(long, value_name = "D", requires = "gap")]
    dist: Option<f64>,
    /// Random Euclidean instance.
    #[arg(long, num_args = 5, value_names = ["NF", "NC", "K", "CAPLO", "CAPHI"])]
    euclid: Option<Vec<u64>>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    max_iters: usize,
    #[arg(long, default_value_t = crate::relaxation::DEFAULT_BUDGET)]
    budget: usize,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write `<client> <facility>` lines here.
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Emit the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExactArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Capacities are `floor(scale * u)`.
    #[arg(long, default_value_t = 1.0)]
    cap_scale: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    assignment: PathBuf,
    /// Allowed loads are `ceil((1+eps) u)`.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.5])]
    eps: Vec<f64>,
    /// Also write the rows as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(source: &Source, seed: u64) -> Result<Instance> {
    if let Some(path) = &source.input {
        let text = std::fs::read_to_string(path)?;
        return Ok(parse_instance(&text)?);
    }
    if let Some(u) = source.gap {
        return gen_gap_instance(u, source.dist.unwrap_or(1.0));
    }
    if let Some(v) = &source.euclid {
        let cap = |x: u64| u32::try_from(x).map_err(|_| Error::InvalidInput(format!("capacity {x} too large")));
        return gen_euclidean(v[0] as usize, v[1] as usize, v[2] as usize, cap(v[3])?, cap(v[4])?, seed);
    }
    Err(Error::InvalidInput("no instance source given".into()))
}

fn emit(out: &mut dyn Write, path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// One solved suite instance.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub seed: u64,
    pub eps: f64,
    pub nf: usize,
    pub nc: usize,
    pub k: usize,
    pub lp: f64,
    pub cost: f64,
    pub opt: f64,
    pub ratio_lp: f64,
    pub ratio_opt: f64,
    pub violation: f64,
    pub open: usize,
    pub seconds: f64,
}

impl BenchRow {
    pub const HEADER: &'static str = "seed,eps,nf,nc,k,lp,cost,opt,ratio_lp,ratio_opt,violation,open,seconds";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.3}",
            self.seed, self.eps, self.nf, self.nc, self.k, self.lp, self.cost, self.opt, self.ratio_lp, self.ratio_opt, self.violation, self.open, self.seconds
        )
    }
}

/// Solves suite instances `seed .. seed + count` for every `eps`, in parallel.
pub fn bench_suite(count: u64, seed: u64, eps: &[f64]) -> Result<Vec<BenchRow>> {
    let jobs: Vec<(u64, f64)> = (seed..seed + count).flat_map(|s| eps.iter().map(move |&e| (s, e))).collect();
    jobs.par_iter()
        .map(|&(s, e)| {
            let inst = gen_suite_instance(s)?;
            let start = Instant::now();
            let report = solve(&inst, &SolveConfig::new(e).with_seed(s))?;
            let seconds = start.elapsed().as_secs_f64();
            let opt = exact_solve(&inst, 1.0)?.cost;
            Ok(BenchRow {
                seed: s,
                eps: e,
                nf: inst.nf(),
                nc: inst.nc(),
                k: inst.k(),
                lp: report.lp_value,
                cost: report.cost,
                opt,
                ratio_lp: report.ratio,
                ratio_opt: if opt > 0.0 { report.cost / opt } else if report.cost <= 1e-9 { 1.0 } else { f64::INFINITY },
                violation: report.violation,
                open: report.open.len(),
                seconds,
            })
        })
        .collect()
}

/// Checks an assignment against caps `⌈(1+ε)u⌉` and `k`; returns its cost.
pub fn evaluate(inst: &Instance, text: &str, eps: f64) -> Result<f64> {
    let mut facility_of: Vec<Option<usize>> = vec![None; inst.nc()];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(c), Some(f), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::InvalidInput(format!("line {}: expected `<client> <facility>`", n + 1)));
        };
        let j = inst.client_index(c).ok_or_else(|| Error::InvalidInput(format!("line {}: unknown client `{c}`", n + 1)))?;
        let i = inst.facility_index(f).ok_or_else(|| Error::InvalidInput(format!("line {}: unknown facility `{f}`", n + 1)))?;
        if facility_of[j].replace(i).is_some() {
            return Err(Error::Infeasible(format!("client `{c}` assigned twice")));
        }
    }
    let mut loads = vec![0usize; inst.nf()];
    let mut cost = 0.0;
    for (j, f) in facility_of.iter().enumerate() {
        let i = f.ok_or_else(|| Error::Infeasible(format!("client `{}` unassigned", inst.clients()[j])))?;
        loads[i] += 1;
        cost += inst.fc(i, j);
    }
    let open = loads.iter().filter(|&&l| l > 0).count();
    if open > inst.k() {
        return Err(Error::Infeasible(format!("{open} facilities used, k = {}", inst.k())));
    }
    for (i, &load) in loads.iter().enumerate() {
        let cap = ((1.0 + eps) * inst.capacity(i) as f64 - 1e-9).ceil() as usize;
        if load > cap {
            return Err(Error::Infeasible(format!("facility `{}` serves {load} clients, cap {cap}", inst.facilities()[i].id)));
        }
    }
    Ok(cost)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Solve(a) => {
            let inst = load(&a.source, a.seed)?;
            let mut cfg = SolveConfig::new(a.eps).with_seed(a.seed);
            cfg.max_iters = a.max_iters;
            cfg.budget = a.budget;
            let report = solve(&inst, &cfg)?;
            let text = if a.json { report.to_json() + "\n" } else { report.to_text() };
            emit(out, a.out.as_ref(), &text)?;
            if let Some(p) = &a.assignment {
                std::fs::write(p, report.assignment_text(&inst))?;
            }
        }
        Command::Generate(a) => {
            let inst = load(&a.source, a.seed)?;
            emit(out, a.out.as_ref(), &inst.to_text())?;
        }
        Command::Exact(a) => {
            let inst = load(&a.source, a.seed)?;
            let r = exact_solve(&inst, a.cap_scale)?;
            if !r.feasible {
                return Err(Error::Infeasible("no open set admits an assignment".into()));
            }
            writeln!(out, "{}", r.cost)?;
        }
        Command::Eval(a) => {
            let inst = load(&a.source, a.seed)?;
            let text = std::fs::read_to_string(&a.assignment)?;
            writeln!(out, "{}", evaluate(&inst, &text, a.eps)?)?;
        }
        Command::Bench(a) => {
            let rows = bench_suite(a.count, a.seed, &a.eps)?;
            writeln!(out, "{:>6} {:>5} {:>3} {:>3} {:>3} {:>10} {:>10} {:>10} {:>8} {:>8} {:>6} {:>4} {:>7}", "seed", "eps", "nf", "nc", "k", "lp", "cost", "opt", "cost/lp", "cost/opt", "viol", "open", "secs")?;
            for r in &rows {
                writeln!(
                    out,
                    "{:>6} {:>5} {:>3} {:>3} {:>3} {:>10.4} {:>10.4} {:>10.4} {:>8.4} {:>8.4} {:>6.3} {:>4} {:>7.3}",
                    r.seed, r.eps, r.nf, r.nc, r.k, r.lp, r.cost, r.opt, r.ratio_lp, r.ratio_opt, r.violation, r.open, r.seconds
                )?;
            }
            if let Some(p) = &a.out {
                let mut csv = String::from(BenchRow::HEADER);
                csv.push('\n');
                for r in &rows {
                    csv.push_str(&r.csv());
                    csv.push('\n');
                }
                std::fs::write(p, csv)?;
            }
        }
    }
    Ok(())
}

/// Exit code for an error: 1 infeasible, 2 input or IO, 3 internal.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) => 1,
        Error::Parse(_) | Error::Io(_) | Error::InvalidInput(_) => 2,
        _ => 3,
    }
}

fn init_logging() {
    let level = match std::env::var("CAPKM_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("trace") => log::LevelFilter::Trace,
        _ => log::LevelFilter::Warn,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

/// Parses `args` (including the program name), runs the command writing to
/// `out`, and returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs with the process arguments and standard streams.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("capkm").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn exact_on_gap() {
        let (code, out, _) = call(&["exact", "--gap", "3", "--dist", "1"]);
        assert_eq!(code, 0);
        assert_eq!(out.trim(), "2");
    }

    #[test]
    fn missing_file_is_io_error() {
        let (code, _, err) = call(&["solve", "--input", "/nonexistent/instance.txt"]);
        assert_eq!(code, 2);
        assert!(err.contains("error"));
    }

    #[test]
    fn conflicting_sources_rejected() {
        let (code, _, _) = call(&["solve", "--input", "x", "--gap", "2", "--dist", "1"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn infeasible_exit_code() {
        let (code, _, err) = call(&["solve", "--euclid", "3", "20", "1", "1", "1"]);
        assert_eq!(code, 1, "{err}");
    }
}
