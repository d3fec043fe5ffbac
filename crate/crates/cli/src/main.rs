use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod report;

/// Check concurrent object models and traces against weak-visibility
/// specifications.
#[derive(Parser, Debug)]
#[command(name = "weakvis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExploreMode {
    Exhaustive,
    Random,
    /// Exhaustive over merged product states; no step budget needed.
    Stateful,
}

#[derive(clap::Args, Debug, Clone)]
pub struct SpecArgs {
    /// Abstract data type: map or queue. Defaults to the model's type.
    #[arg(long)]
    pub spec: Option<String>,
    /// Visibility override such as `has=absolute`; repeatable.
    #[arg(long = "vis", value_name = "METHOD=KIND")]
    pub vis: Vec<String>,
}

#[derive(clap::Args, Debug, Clone)]
pub struct ExploreArgs {
    /// Object model name.
    #[arg(long)]
    pub model: String,
    /// Client program: inline text or a file path.
    #[arg(long, required_unless_present = "all_clients")]
    pub client: Option<String>,
    /// Explore every client with this many invocations per thread.
    #[arg(long, value_name = "OPS", conflicts_with = "client")]
    pub all_clients: Option<usize>,
    /// Thread count for --all-clients.
    #[arg(long, default_value_t = 2)]
    pub threads: usize,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, value_enum, default_value_t = ExploreMode::Exhaustive)]
    pub mode: ExploreMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub step_budget: usize,
    #[arg(long, default_value_t = 4)]
    pub table_size: usize,
    /// Value domain for --all-clients.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pub values: Vec<i64>,
    /// Monitor atomic step shapes instead of single actions.
    #[arg(long)]
    pub atomic: bool,
    /// Stop enumerating after this many schedules.
    #[arg(long)]
    pub max_schedules: Option<usize>,
    /// Worker threads; exploration currently runs on one.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Explore schedules of a client on a model under the product check.
    Explore(ExploreArgs),
    /// Decide whether a history (JSON) belongs to a specification.
    CheckHistory {
        file: PathBuf,
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 8)]
        max_ops: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the product check over a trace (JSON lines).
    CheckTrace {
        file: PathBuf,
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        atomic: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the generative closure with the witness search.
    CrossValidate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, short = 'n', default_value_t = 3)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        values: Vec<i64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Explore(args) => commands::explore(&args),
        Command::CheckHistory {
            file,
            spec,
            max_ops,
            out,
        } => commands::check_history(&file, &spec, max_ops).map(|r| (r, out)),
        Command::CheckTrace {
            file,
            spec,
            atomic,
            out,
        } => commands::check_trace(&file, &spec, atomic).map(|r| (r, out)),
        Command::CrossValidate {
            spec,
            n,
            values,
            out,
        } => commands::cross_validate(&spec, n, &values).map(|r| (r, out)),
    };
    match outcome {
        Ok((report, out)) => match report.emit(out.as_deref()) {
            Ok(()) => ExitCode::from(report.exit_code()),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
