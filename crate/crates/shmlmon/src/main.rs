use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use shmlmon_core::harness::{gen_workload, run_bench, BenchError, WorkloadSpec};
use shmlmon_core::syntax::format_trace;
use shmlmon_core::{
    check_wellformed, deploy, oracle_verdict, parse_event, parse_formula, parse_trace, run_trace, synthesize, Event, Mode,
    Outcome, RuntimeError, SchedulerConfig, Verdict, WellFormedFormula,
};

const GRAMMAR: &str = "\
Formula files:
  formula  := tt | ff | [action] formula | formula & formula
            | max X. formula | X | if boolexpr then formula else formula
            | ( formula )
  action   := pat ! pat        output
            | pat ? pat        input
  pat      := var | _ | int | atom | {pat, ...}
  boolexpr := arith cmp arith | boolexpr and boolexpr | boolexpr or boolexpr
            | not boolexpr | ( boolexpr )
  cmp      := == | != | < | <= | > | >=
  arith    := operand ((+ | - | *) operand)*
  Term variables are u..z optionally followed by digits, other lowercase
  names are atoms, recursion variables start with an uppercase letter.

Trace files:
  one event per line, `target ! value` or `target ? value`, values closed
  patterns such as `srv ? {5,c1}`; blank lines and `#` comments are skipped.

Exit status: 0 no violation, 1 violation, 2 usage or formula error,
3 internal or protocol fault.";

#[derive(Parser)]
#[command(name = "shmlmon", version, about = "Asynchronous runtime monitors for safety properties", after_help = GRAMMAR)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monitor a trace with a synthesized network and print the verdict.
    Check {
        #[command(flatten)]
        formula: FormulaArg,
        /// Trace file, `-` for standard input.
        #[arg(short, long)]
        trace: PathBuf,
        #[arg(short, long, default_value = "reconf")]
        mode: Mode,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a trace with the sequential reference evaluator.
    Oracle {
        #[command(flatten)]
        formula: FormulaArg,
        #[arg(short, long)]
        trace: PathBuf,
    },
    /// Print the initial monitor network and its size.
    Plan {
        #[command(flatten)]
        formula: FormulaArg,
        #[arg(short, long, default_value = "reconf")]
        mode: Mode,
    },
    /// Run several modes on one trace and print a JSON report.
    Bench {
        #[command(flatten)]
        formula: FormulaArg,
        /// Trace file; a workload is generated when absent.
        #[arg(short, long)]
        trace: Option<PathBuf>,
        /// `all` or a comma separated list of modes.
        #[arg(long, default_value = "all", value_parser = parse_modes)]
        modes: ModeList,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        workload: WorkloadArgs,
    },
    /// Write a predecessor-server workload trace.
    Gen {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; standard output when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monitor events as they arrive on a TCP connection or standard input.
    Serve {
        #[command(flatten)]
        formula: FormulaArg,
        #[arg(short, long, default_value = "reconf")]
        mode: Mode,
        /// Address to accept one connection on, e.g. 127.0.0.1:7070.
        #[arg(long)]
        listen: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct FormulaArg {
    /// Formula file.
    #[arg(short = 'f', long = "formula")]
    path: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Sim,
    Threads,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "sim")]
    backend: BackendKind,
    /// Worker threads for the thread backend.
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Scheduler seed for the simulated backend, also the workload seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// How long the network may take to settle after an event.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
}

impl RunArgs {
    fn config(&self) -> SchedulerConfig {
        let base = match self.backend {
            BackendKind::Sim => SchedulerConfig::sim(self.seed),
            BackendKind::Threads => SchedulerConfig::threads(self.workers.max(1)),
        };
        base.with_timeout(Duration::from_millis(self.timeout_ms))
    }
}

#[derive(Args)]
struct WorkloadArgs {
    #[arg(long, default_value_t = 1)]
    clients: usize,
    /// Requests per client.
    #[arg(long, default_value_t = 1)]
    requests: usize,
    #[arg(long, default_value_t = 0.0)]
    error_rate: f64,
    /// Append a final `end ! done` event.
    #[arg(long)]
    end: bool,
}

impl WorkloadArgs {
    fn spec(&self, seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            clients: self.clients,
            requests_per_client: self.requests,
            error_rate: self.error_rate,
            end_event: self.end,
            seed,
            ..WorkloadSpec::default()
        }
    }
}

#[derive(Clone)]
struct ModeList(Vec<Mode>);

fn parse_modes(s: &str) -> Result<ModeList, String> {
    if s == "all" {
        return Ok(ModeList(Mode::ALL.to_vec()));
    }
    s.split(',').map(|m| m.trim().parse()).collect::<Result<Vec<Mode>, _>>().map(ModeList)
}

/// Why the command stopped, and with which exit status.
enum Failure {
    Usage(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn internal(e: RuntimeError) -> Failure {
    match e {
        RuntimeError::Usage(m) => Failure::Usage(anyhow!(m)),
        other => Failure::Internal(other.into()),
    }
}

fn read_input(path: &Path) -> anyhow::Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).context("reading standard input")?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn load_formula(arg: &FormulaArg) -> Result<(String, WellFormedFormula), Failure> {
    let src = read_input(&arg.path).map_err(usage)?;
    let parsed = parse_formula(&src).map_err(|e| usage(anyhow!("{}: {e}", arg.path.display())))?;
    let wf = check_wellformed(&parsed).map_err(|e| usage(anyhow!("{}: {e}", arg.path.display())))?;
    Ok((src, wf))
}

fn load_trace(path: &Path) -> Result<Vec<Event>, Failure> {
    let src = read_input(path).map_err(usage)?;
    parse_trace(&src).map_err(|e| usage(anyhow!("{}: {e}", path.display())))
}

/// Prints the outcome and picks the exit status.
fn report(outcome: &Outcome) -> Result<u8, Failure> {
    match outcome {
        Outcome::Verdict(v) => {
            println!("{v}");
            Ok(u8::from(matches!(v, Verdict::Violation(_))))
        }
        Outcome::EvalFault { index, error } => Err(usage(anyhow!("cannot evaluate a condition at event {index}: {error}"))),
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Check { formula, trace, mode, run } => {
            let (_, f) = load_formula(&formula)?;
            let trace = load_trace(&trace)?;
            let plan = synthesize(&f, mode).map_err(usage)?;
            let finished = run_trace(&plan, &trace, &run.config()).map_err(internal)?;
            report(&finished.outcome)
        }
        Command::Oracle { formula, trace } => {
            let (_, f) = load_formula(&formula)?;
            let trace = load_trace(&trace)?;
            match oracle_verdict(&f, &trace) {
                Ok(v) => report(&Outcome::Verdict(v)),
                Err(e) => report(&Outcome::EvalFault { index: e.index, error: e.source }),
            }
        }
        Command::Plan { formula, mode } => {
            let (_, f) = load_formula(&formula)?;
            let plan = synthesize(&f, mode).map_err(usage)?;
            print!("{plan}");
            println!("{}", serde_json::to_string(&plan.stats()).expect("stats serialize"));
            Ok(0)
        }
        Command::Bench { formula, trace, modes, reps, run, workload } => {
            let (src, f) = load_formula(&formula)?;
            let (events, label) = match &trace {
                Some(path) => (load_trace(path)?, path.display().to_string()),
                None => {
                    let spec = workload.spec(run.seed);
                    (gen_workload(&spec), spec.to_string())
                }
            };
            let bench = run_bench(&f, &src, &events, &label, &modes.0, &run.config(), reps).map_err(|e| match e {
                BenchError::Synthesis { .. } => usage(e),
                other => Failure::Internal(other.into()),
            })?;
            println!("{}", bench.to_json());
            Ok(0)
        }
        Command::Gen { workload, seed, output } => {
            let text = format_trace(&gen_workload(&workload.spec(seed)));
            match output {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display())).map_err(usage)?,
                None => io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Internal(e.into()))?,
            }
            Ok(0)
        }
        Command::Serve { formula, mode, listen, run } => {
            let (_, f) = load_formula(&formula)?;
            let plan = synthesize(&f, mode).map_err(usage)?;
            let input: Box<dyn BufRead> = match listen {
                Some(addr) => {
                    let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}")).map_err(usage)?;
                    eprintln!("listening on {}", listener.local_addr().map_err(|e| Failure::Internal(e.into()))?);
                    let (stream, peer) = listener.accept().map_err(|e| Failure::Internal(e.into()))?;
                    eprintln!("monitoring events from {peer}");
                    Box::new(BufReader::new(stream))
                }
                None => Box::new(io::stdin().lock()),
            };
            serve(input, &plan, &run.config())
        }
    }
}

/// Feeds events to the network as lines arrive. Stops reading at the first
/// violation; end of input is the end of the trace.
fn serve(input: Box<dyn BufRead>, plan: &shmlmon_core::MonitorPlan, config: &SchedulerConfig) -> Result<u8, Failure> {
    let mut handle = deploy(plan, config).map_err(internal)?;
    let mut index = 0u64;
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Failure::Internal(e.into()))?;
        let content = line.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        index += 1;
        let event = parse_event(content, n + 1, index).map_err(|e| usage(anyhow!("line {}: {e}", n + 1)))?;
        handle.offer_event(&event).map_err(internal)?;
        if handle.outcome() != Outcome::Verdict(Verdict::NoViolation) {
            break;
        }
    }
    let finished = handle.finish().map_err(internal)?;
    report(&finished.outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{GRAMMAR}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            let code = failure.code();
            let (Failure::Usage(e) | Failure::Internal(e)) = failure;
            eprintln!("error: {e:#}");
            if code == 2 {
                eprintln!("\n{GRAMMAR}");
            }
            ExitCode::from(code)
        }
    }
}
