use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hybridflow_core::bench::run_bench;
use hybridflow_core::case::{
    parse_case, parse_dcline_table, synthesize_multi_area, write_case, CaseData,
};
use hybridflow_core::coordinator::{sequential_solve, SolveOptions, SolveStatus};
use hybridflow_core::grid::build_graph;
use hybridflow_core::partition::partition_by_dc;
use hybridflow_core::solution::{
    read_expected, validate, write_solution, OutputFormat, SolutionRecord, Tolerances,
};
use hybridflow_core::Error;

#[derive(Parser)]
#[command(
    name = "hybridflow",
    version,
    about = "Partitioned sequential AC/DC power flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Worker threads (0 picks the number of cores).
    #[arg(long, env = "HYBRIDFLOW_THREADS", default_value_t = 0)]
    threads: usize,
    /// AC mismatch tolerance in per unit.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_outer: usize,
    /// Solve the whole network as one system instead of per AC area.
    #[arg(long)]
    no_partition: bool,
}

impl SolveArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            ac_tol: self.tol,
            max_outer: self.max_outer,
            threads: self.threads,
            partition_enabled: !self.no_partition,
            ..SolveOptions::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Human,
    Machine,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a case and print or write the solution.
    Solve {
        case: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Print the AC areas obtained by cutting every DC link.
    Partition { case: PathBuf },
    /// Build a ring of DC-coupled copies of a base case.
    Gen {
        base: PathBuf,
        #[arg(long)]
        copies: usize,
        /// dcline table whose first row is the link template.
        #[arg(long)]
        link_template: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time solves over a sweep of thread counts.
    Bench {
        case: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8])]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeat: usize,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a case and compare it with an expected solution file.
    Validate {
        case: PathBuf,
        #[arg(long)]
        expect: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        vtol: f64,
        /// Degrees, for bus and converter angles.
        #[arg(long, default_value_t = 0.05)]
        atol: f64,
        #[command(flatten)]
        solve: SolveArgs,
    },
}

struct Failure {
    code: u8,
    category: &'static str,
    message: String,
}

impl Failure {
    fn new(code: u8, category: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code,
            category,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Argument(_)) {
            2
        } else {
            1
        };
        Failure::new(code, e.category(), e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(1, "io", format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::new(1, "io", format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<CaseData, Failure> {
    parse_case(&read(path)?).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn non_convergence(status: &SolveStatus) -> Result<(), Failure> {
    match status {
        SolveStatus::Converged => Ok(()),
        SolveStatus::Diverged { area, mismatch } => Err(Failure::new(
            3,
            "nonconvergence",
            match area {
                Some(a) => format!("area {a} diverged, mismatch {mismatch:.3e}"),
                None => format!("outer iteration limit reached, mismatch {mismatch:.3e}"),
            },
        )),
        SolveStatus::Infeasible { link, quantity } => Err(Failure::new(
            3,
            "nonconvergence",
            format!("link {link} ended with {quantity} outside its range"),
        )),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve {
            case,
            solve,
            out,
            format,
        } => {
            let sol = sequential_solve(&load(&case)?, &solve.options())?;
            let format = match format {
                Format::Human => OutputFormat::HumanTable,
                Format::Machine => OutputFormat::MachineReadable,
            };
            let text = write_solution(&sol, format);
            match out {
                Some(path) => write(&path, &text)?,
                None => print!("{text}"),
            }
            non_convergence(&sol.status)
        }
        Command::Partition { case } => {
            let graph = build_graph(&load(&case)?)?;
            let p = partition_by_dc(&graph)?;
            let ids = |v: &[usize]| {
                v.iter()
                    .map(|&k| format!("{}-{}", graph.links[k].r_bus, graph.links[k].i_bus))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            println!("buses: {}", graph.bus_count());
            println!("areas: {}", p.area_count);
            println!("imbalance: {:?}", p.imbalance);
            println!("cut edges: {}", p.cut_edge_count);
            println!("separating links: {}", ids(&p.separating_links));
            println!("embedded links: {}", ids(&p.embedded_links));
            println!("  area    buses   slack");
            for (a, buses) in p.areas.iter().enumerate() {
                println!(
                    "{a:>6} {:>8} {:>7}",
                    buses.len(),
                    graph.buses[p.area_slacks[a]].id
                );
            }
            Ok(())
        }
        Command::Gen {
            base,
            copies,
            link_template,
            out,
        } => {
            let base = load(&base)?;
            let links = parse_dcline_table(&read(&link_template)?)?;
            let template = links.first().ok_or_else(|| {
                Failure::new(
                    2,
                    "argument",
                    format!("{} has no dcline rows", link_template.display()),
                )
            })?;
            let case = synthesize_multi_area(&base, copies, template)?;
            write(&out, &write_case(&case))?;
            eprintln!(
                "wrote {} buses, {} links to {}",
                case.bus_records.len(),
                case.dcline_records.len(),
                out.display()
            );
            Ok(())
        }
        Command::Bench {
            case,
            threads,
            repeat,
            out,
        } => {
            let report = run_bench(&load(&case)?, &threads, repeat, &SolveOptions::default())?;
            print!("{}", report.to_table());
            if let Some(path) = out {
                write(&path, &report.to_json())?;
            }
            Ok(())
        }
        Command::Validate {
            case,
            expect,
            vtol,
            atol,
            solve,
        } => {
            let expected = read_expected(&read(&expect)?)?;
            let sol = sequential_solve(&load(&case)?, &solve.options())?;
            non_convergence(&sol.status)?;
            let report = validate(
                &SolutionRecord::from_solution(&sol),
                &expected,
                Tolerances { vtol, atol },
            );
            for c in &report.checks {
                println!(
                    "{} {:<40} expected {:>12.6} actual {:>12.6} tol {}",
                    if c.passed() { "ok  " } else { "FAIL" },
                    c.what,
                    c.expected,
                    c.actual,
                    c.tolerance
                );
            }
            for m in &report.missing {
                println!("FAIL {m} not found");
            }
            if report.passed() {
                Ok(())
            } else {
                let bad = report.failures().count() + report.missing.len();
                Err(Failure::new(
                    4,
                    "validation",
                    format!("{bad} check(s) out of tolerance"),
                ))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.category, f.message);
            ExitCode::from(f.code)
        }
    }
}
