//! `ymkit`: run, validate and inspect scenario files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ymkit::runner::{self, Scenario, Status};

#[derive(Parser)]
#[command(name = "ymkit", version, about = "Null-cone parametrix and energy experiments for Yang-Mills fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment of a scenario and write CSV tables plus report.json.
    Run {
        #[command(flatten)]
        input: Input,
        /// Output directory; overrides the scenario's `output` field.
        #[arg(long, env = "YMKIT_OUT")]
        out: Option<PathBuf>,
        /// Worker threads for the parallel kernels.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a scenario and list every problem found.
    Validate {
        #[command(flatten)]
        input: Input,
    },
    /// Print the available charts, algebras, field profiles and experiments as JSON.
    Catalog,
}

#[derive(Args)]
struct Input {
    /// Scenario file (JSON).
    #[arg(value_name = "CONFIG", conflicts_with = "config")]
    path: Option<PathBuf>,
    /// Scenario file, as a flag.
    #[arg(long, value_name = "CONFIG")]
    config: Option<PathBuf>,
    /// Treat unknown keys as errors instead of warnings.
    #[arg(long)]
    strict: bool,
}

impl Input {
    fn load(&self) -> Result<Scenario> {
        let Some(path) = self.path.as_ref().or(self.config.as_ref()) else {
            bail!("no scenario given; pass a path or --config");
        };
        let sc = runner::load_config(path, self.strict).with_context(|| format!("loading {}", path.display()))?;
        for w in &sc.warnings {
            eprintln!("warning: {w}");
        }
        Ok(sc)
    }
}

fn output_dir(flag: Option<PathBuf>, sc: &Scenario) -> PathBuf {
    flag.or_else(|| sc.output.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn run(input: &Input, out: Option<PathBuf>, threads: Option<usize>) -> Result<bool> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        if !ymkit::exec::set_threads(n) {
            eprintln!("warning: --threads ignored (built without the parallel feature)");
        }
    }
    let sc = input.load()?;
    let dir = output_dir(out, &sc);
    let report = runner::run(&sc)?;
    let files = runner::emit(&report, &dir)?;
    for e in &report.experiments {
        println!("{:<16} {:?}", e.experiment.name(), e.status);
        for c in e.checks.iter().filter(|c| !c.passed) {
            let value = c.value.map_or("non-finite".to_string(), |v| format!("{v:e}"));
            println!("  failed {}: {value} not in [{}, {}]", c.metric, bound(c.lower), bound(c.upper));
        }
        if let Some(err) = &e.error {
            println!("  error: {err}");
        }
    }
    if report.partial {
        println!("partial report: at least one experiment raised an error");
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(report.passed && report.experiments.iter().all(|e| e.status == Status::Pass))
}

fn bound(b: Option<f64>) -> String {
    b.map_or("-".into(), |v| format!("{v:e}"))
}

fn validate(input: &Input) -> Result<()> {
    let sc = input.load()?;
    println!("{}: ok ({} experiments)", display_name(&sc, input), sc.experiments.len());
    Ok(())
}

fn display_name(sc: &Scenario, input: &Input) -> String {
    input.path.as_deref().or(input.config.as_deref()).map_or(sc.name.clone(), |p: &Path| p.display().to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { input, out, threads } => run(&input, out, threads),
        Command::Validate { input } => validate(&input).map(|()| true),
        Command::Catalog => {
            serde_json::to_string_pretty(&runner::catalog()).map(|s| println!("{s}")).map(|()| true).map_err(Into::into)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
