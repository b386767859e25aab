use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cfa2::abstract_sem::AnalyzerConfig;
use cfa2::clients::{operator_pairs_cfa2, operator_pairs_kcfa};
use cfa2::concrete::{self, Outcome};
use cfa2::corpus;
use cfa2::cps::CpsProgram;
use cfa2::difftest;
use cfa2::kcfa::kcfa_analyze_with;
use cfa2::report::{self, bench_row, bench_table, compile, run_analysis, AnalysisKind};
use cfa2::summarize::analyze;

const EXIT_PROGRAM: u8 = 1;
const EXIT_TOOL: u8 = 2;

#[derive(Parser)]
#[command(name = "cfa2", version, about = "Pushdown control-flow analysis for a small Scheme")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args, Clone, Copy)]
struct ConfigArgs {
    /// Disable the strong update of operators on the top frame.
    #[arg(long)]
    no_stack_filtering: bool,
    /// Use one global heap.
    #[arg(long)]
    heap_widening: bool,
    /// Explore both arms of every conditional.
    #[arg(long)]
    no_branch_pruning: bool,
}

impl ConfigArgs {
    fn config(self) -> AnalyzerConfig {
        AnalyzerConfig {
            stack_filtering: !self.no_stack_filtering,
            heap_widening: self.heap_widening,
            branch_pruning: !self.no_branch_pruning,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a program on the concrete machine.
    Run {
        path: PathBuf,
        #[arg(long, default_value_t = concrete::DEFAULT_FUEL)]
        fuel: u64,
    },
    /// Analyze a program and print a report.
    Analyze {
        path: PathBuf,
        #[arg(long, default_value = "cfa2")]
        analysis: AnalysisKind,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run every analysis on every `.scm` file of a directory.
    Bench {
        /// Defaults to `$CFA2_CORPUS` or the bundled corpus.
        dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// List references whose flow sets differ between analyses.
    Compare {
        path: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Check random programs against the concrete machine.
    Difftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 30)]
        max_size: usize,
        #[arg(long, default_value_t = difftest::CHECK_FUEL)]
        fuel: u64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Visited counts on the witness family of sizes 1..=max.
    Stress {
        #[arg(long, default_value_t = 6)]
        max: usize,
    },
}

enum Failure {
    Program(String),
    Tool(String),
}

fn load(path: &Path) -> Result<CpsProgram, Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| Failure::Tool(format!("{}: {e}", path.display())))?;
    compile(&src).map_err(|e| Failure::Program(format!("{}: {e}", path.display())))
}

fn program_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { path, fuel } => {
            let prog = load(&path)?;
            match concrete::run(&prog, fuel) {
                Outcome::Finished(v) => {
                    println!("{v}");
                    Ok(())
                }
                other => Err(Failure::Program(other.to_string())),
            }
        }
        Command::Analyze {
            path,
            analysis,
            format,
            config,
        } => {
            let prog = load(&path)?;
            let r = report::report(&program_name(&path), &prog, analysis, config.config());
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&r).expect("report serializes")),
                Format::Table => print!("{}", r.to_table()),
            }
            Ok(())
        }
        Command::Bench { dir, format, config } => {
            let dir = dir.unwrap_or_else(corpus::corpus_dir);
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| Failure::Tool(format!("{}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "scm"))
                .collect();
            files.sort();
            let rows: Vec<_> = files
                .iter()
                .filter(|p| program_name(p) != "omega")
                .map(|p| {
                    let name = program_name(p);
                    match load(p) {
                        Ok(prog) => Ok(bench_row(&name, &prog, config.config())),
                        Err(Failure::Program(e) | Failure::Tool(e)) => Err((name, e)),
                    }
                })
                .collect();
            match format {
                Format::Table => print!("{}", bench_table(&rows)),
                Format::Json => {
                    let ok: Vec<_> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();
                    println!("{}", serde_json::to_string_pretty(&ok).expect("rows serialize"));
                }
            }
            Ok(())
        }
        Command::Compare { path, config } => {
            let prog = load(&path)?;
            let config = config.config();
            let outs: Vec<_> = AnalysisKind::ALL
                .iter()
                .map(|k| run_analysis(&prog, *k, config))
                .collect();
            let mut diffs = 0;
            for site in outs[0].flows.keys() {
                let vals: Vec<_> = outs
                    .iter()
                    .map(|o| o.flows.get(site).cloned().unwrap_or_default())
                    .collect();
                if vals.windows(2).any(|w| w[0] != w[1]) {
                    diffs += 1;
                    let parts: Vec<String> = outs.iter().zip(&vals).map(|(o, v)| format!("{} {v}", o.kind)).collect();
                    println!("{}@{}: {}", prog.var_name(site.1), site.0, parts.join(", "));
                }
            }
            let a = analyze(&prog, config);
            let zero = kcfa_analyze_with(&prog, 0, config.branch_pruning);
            for site in prog.calls() {
                let c = operator_pairs_cfa2(&prog, &a, site);
                let z = operator_pairs_kcfa(&prog, &zero, site);
                if c.len() != z.len() {
                    diffs += 1;
                    println!("operator flows after call {site}: cfa2 {}, 0cfa {}", c.len(), z.len());
                }
            }
            if diffs == 0 {
                println!("no differences");
            }
            Ok(())
        }
        Command::Difftest {
            seed,
            cases,
            max_size,
            fuel,
            config,
        } => {
            let s = difftest::run_random(seed, cases, max_size, fuel, config.config());
            println!(
                "{} programs, {} simulation steps, {} states checked for soundness ({} exact)",
                s.cases, s.simulation_steps, s.soundness_states, s.exact_hits
            );
            for (src, c) in &s.failures {
                println!("FAIL {c}\n  program: {src}");
            }
            if s.failures.is_empty() {
                Ok(())
            } else {
                Err(Failure::Program(format!("{} failures", s.failures.len())))
            }
        }
        Command::Stress { max } => {
            for (i, v) in difftest::stress_exponential(max) {
                println!("{i} {v}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Program(e)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_PROGRAM)
        }
        Err(Failure::Tool(e)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_TOOL)
        }
    }
}
