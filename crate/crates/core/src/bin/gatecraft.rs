//! Command-line front end: dataset generation, training, evaluation and
//! single-unitary synthesis.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage or configuration error,
//! 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gatecraft::circuit::render_text;
use gatecraft::enumerate::{synthesize_batch, Budget, EnumConfig, Task};
use gatecraft::io;
use gatecraft::library::LibraryJson;
use gatecraft::taskgen::{generate_dataset, read_public, TaskGenConfig, TEST_FILE, TRAIN_FILE};
use gatecraft::train::{evaluate, initial_library, run_training, TrainConfig};
use gatecraft::{ComplexMatrix, ConnectivityConstraint, Error, Library, Program};

#[derive(Parser)]
#[command(name = "gatecraft", version, about = "Quantum circuit synthesis with a learned gate library")]
struct Cli {
    /// JSON file with optional `gen_tasks` and `train` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the high-level gate set and write train/test task files.
    GenTasks {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Run the training loop, checkpointing every iteration.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lambda_struct: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Continue from the newest checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Solved fraction of a task file under a library.
    Eval {
        /// Library checkpoint; the elementary set when omitted.
        #[arg(long)]
        library: Option<PathBuf>,
        /// A dataset directory (uses its test split) or a tasks JSONL file.
        #[arg(long)]
        tasks: PathBuf,
        /// Write one JSON line per task with its best circuit.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Print every gate's weight, program, expansion and diagram.
    ShowLibrary {
        /// Library checkpoint; the elementary set when omitted.
        library: Option<PathBuf>,
    },
    /// Find the most probable circuits for one unitary.
    Solve {
        /// JSON matrix `{"dim": d, "entries": [[re, im], ...]}`.
        unitary: PathBuf,
        #[arg(long)]
        library: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstraintArg {
    Full,
    NearestNeighbor,
}

#[derive(Args, Default)]
struct SearchArgs {
    #[arg(long)]
    n_qubits: Option<usize>,
    #[arg(long, value_enum)]
    constraint: Option<ConstraintArg>,
    /// Node budget per enumeration (deterministic).
    #[arg(long, conflicts_with = "seconds")]
    nodes: Option<u64>,
    /// Wall-clock budget per enumeration.
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

impl SearchArgs {
    fn apply(&self, n_qubits: &mut usize, constraint: &mut ConnectivityConstraint, e: &mut EnumConfig) {
        if let Some(n) = self.n_qubits {
            *n_qubits = n;
        }
        if let Some(c) = self.constraint {
            *constraint = match c {
                ConstraintArg::Full => ConnectivityConstraint::Full,
                ConstraintArg::NearestNeighbor => ConnectivityConstraint::NearestNeighbor,
            };
        }
        if let Some(n) = self.nodes {
            e.budget = Budget::Nodes(n);
        }
        if let Some(s) = self.seconds {
            e.budget = Budget::Seconds(s);
        }
        if let Some(k) = self.k {
            e.k = k;
        }
        if let Some(w) = self.workers {
            e.workers = w;
        }
    }
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    gen_tasks: TaskGenConfig,
    train: TrainConfig,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, Error> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    io::read_json(path).map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::Config(other.to_string()),
    })
}

fn load_library(path: Option<&Path>) -> Result<Library, Error> {
    match path {
        Some(p) => Library::from_json(&io::read_json::<LibraryJson>(p)?),
        None => Ok(Library::g0()),
    }
}

fn load_tasks(path: &Path) -> Result<Vec<Task>, Error> {
    if path.is_dir() {
        let test = path.join(TEST_FILE);
        read_public(&if test.exists() { test } else { path.join(TRAIN_FILE) })
    } else {
        read_public(path)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenTasks {
            out,
            n_train,
            seed,
            search,
        } => {
            let mut cfg = config.gen_tasks;
            search.apply(&mut cfg.n_qubits, &mut cfg.constraint, &mut cfg.enumeration);
            if let Some(o) = out {
                cfg.out = o;
            }
            if let Some(n) = n_train {
                cfg.n_train = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (train, test) = generate_dataset(&cfg, true)?;
            println!(
                "wrote {} training and {} test tasks to {}",
                train.len(),
                test.len(),
                cfg.out.display()
            );
        }
        Command::Train {
            dataset,
            run_dir,
            iterations,
            batch_size,
            seed,
            lambda_struct,
            alpha,
            resume,
            search,
        } => {
            let mut cfg = config.train;
            search.apply(&mut cfg.n_qubits, &mut cfg.constraint, &mut cfg.enumeration);
            if let Some(d) = dataset {
                cfg.dataset = d;
            }
            if let Some(r) = run_dir {
                cfg.run_dir = r;
            }
            if let Some(i) = iterations {
                cfg.iterations = i;
            }
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(l) = lambda_struct {
                cfg.learn.prior.lambda_struct = l;
            }
            if let Some(a) = alpha {
                cfg.learn.prior.dirichlet_alpha = a;
            }
            cfg.validate()?;
            let t = run_training(&cfg, resume)?;
            match t.metrics().last() {
                Some(m) => println!(
                    "iteration {}: train {:.3}, test {:.3}, {} gates",
                    m.iteration, m.train_solved_frac, m.test_solved_frac, m.library_size
                ),
                None => println!("no iterations run; library unchanged"),
            }
            println!("checkpoints in {}", cfg.run_dir.display());
        }
        Command::Eval {
            library,
            tasks,
            report,
            search,
        } => {
            let lib = load_library(library.as_deref())?;
            let tasks = load_tasks(&tasks)?;
            let mut cfg = config.train;
            search.apply(&mut cfg.n_qubits, &mut cfg.constraint, &mut cfg.enumeration);
            let r = evaluate(&lib, &tasks, &cfg.constraint, &cfg.enumeration)?;
            println!(
                "solved {}/{} ({:.4}), {} nodes visited",
                r.tasks.iter().filter(|t| t.solved()).count(),
                r.tasks.len(),
                r.solved_fraction,
                r.report.visited
            );
            if let Some(path) = report {
                let lines = r.tasks.iter().map(|t| {
                    serde_json::json!({
                        "id": t.id,
                        "solved": t.solved(),
                        "program": t.best.as_ref().map(|b| Program::from_circuit(&b.circuit).to_string()),
                        "log_prob": t.best.as_ref().map(|b| b.log_prob),
                    })
                });
                io::write_jsonl(&path, lines)?;
            }
        }
        Command::ShowLibrary { library } => {
            let lib = match library {
                Some(p) => load_library(Some(&p))?,
                None => initial_library(&config.train)?,
            };
            print!("{}", lib.describe());
        }
        Command::Solve {
            unitary,
            library,
            search,
        } => {
            let u: ComplexMatrix = io::read_json(&unitary)?;
            let lib = load_library(library.as_deref())?;
            let mut cfg = config.train;
            cfg.n_qubits = u.n_qubits();
            search.apply(&mut cfg.n_qubits, &mut cfg.constraint, &mut cfg.enumeration);
            if cfg.n_qubits != u.n_qubits() {
                return Err(Error::Config(format!(
                    "the unitary acts on {} qubits, --n-qubits says {}",
                    u.n_qubits(),
                    cfg.n_qubits
                )));
            }
            let out = synthesize_batch(&[Task::new("target", u)], &lib, &cfg.constraint, &cfg.enumeration)?;
            let set = &out.sets["target"];
            if set.is_empty() {
                println!("no circuit found within the budget ({} nodes visited)", out.report.visited);
                return Ok(());
            }
            for (i, sc) in set.circuits().iter().enumerate() {
                println!("#{} log_prob {:.4}, {} gates", i + 1, sc.log_prob, sc.circuit.len());
                println!("{}", Program::from_circuit(&sc.circuit));
                print!("{}", render_text(&sc.circuit.expand()));
                println!();
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Json { .. } | Error::Format(_) => 3,
        Error::Config(_)
        | Error::Parse { .. }
        | Error::UnknownGate(_)
        | Error::DuplicateGate(_)
        | Error::InvalidLibrary(_)
        | Error::BadDimension(_)
        | Error::DimensionMismatch { .. }
        | Error::NoValidAssignment { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
