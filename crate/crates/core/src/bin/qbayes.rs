// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Command-line front end for the experiment harness.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qbayes::harness::config::{ExperimentConfig, ExperimentKind, OutputFormat};
use qbayes::harness::emit::{write_rows, write_run};
use qbayes::harness::run::{run_experiment_with_threads, RunOutput};
use qbayes::Result;

#[derive(Parser, Debug)]
#[command(name = "qbayes", version, about = "Bayesian inference for exchangeable quantum states")]
struct Cli {
    /// Experiment configuration (JSON). Without it the subcommand's built-in
    /// configuration is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for the results file and summary.json. Without it,
    /// rows go to standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Overrides the configured seed and QBAYES_SEED_OVERRIDE.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for independent trials.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run the experiment described by --config (default: qubit counts).
    Run,
    /// Check the ensemble Bayes rule against explicit tensor-product states.
    Verify,
    /// Compare Bayes predictions with the maximum-entropy product state.
    MaxentCompare,
    /// Posterior predictive count distribution.
    Predict,
    /// Simulated tomography and posterior concentration.
    Tomography,
}

impl Command {
    fn kind(self) -> Option<ExperimentKind> {
        match self {
            Command::Run => None,
            Command::Verify => Some(ExperimentKind::VerifyOracle),
            Command::MaxentCompare => Some(ExperimentKind::MaxentCompare),
            Command::Predict => Some(ExperimentKind::Predict),
            Command::Tomography => Some(ExperimentKind::Tomography),
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default_for(cli.command.kind().unwrap_or(ExperimentKind::QubitCounts)),
    };
    if let Some(kind) = cli.command.kind() {
        if config.kind != kind {
            return Err(qbayes::Error::Config {
                field: "kind".into(),
                message: format!("subcommand expects {}, config has {}", kind.name(), config.kind.name()),
            });
        }
    }
    config.apply_seed_override()?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn report(kind: ExperimentKind, output: &RunOutput, err: &mut impl Write) -> std::io::Result<()> {
    if kind == ExperimentKind::VerifyOracle {
        for r in output.rows.iter().filter(|r| r.quantity == "pass") {
            let label = if r.trial == 0 { "case" } else { "entangled" };
            let td = output
                .rows
                .iter()
                .find(|o| o.trial == r.trial && o.step == r.step && o.quantity == "trace_distance_posterior")
                .and_then(|o| o.value.as_f64())
                .unwrap_or(f64::NAN);
            let verdict = if r.value.as_bool() == Some(true) { "pass" } else { "FAIL" };
            writeln!(err, "{label} {:>3} {verdict} trace_distance={td:.3e}", r.step)?;
        }
    }
    let s = &output.summary;
    writeln!(err, "{} seed={} hash={} rows={}", s.kind.name(), s.seed, s.config_hash, s.row_count)?;
    for a in &s.aggregates {
        writeln!(err, "  step {:>6} {} = {}", a.step, a.quantity, a.value)?;
    }
    for (name, ok) in &s.passed {
        writeln!(err, "  {name}: {}", if *ok { "pass" } else { "FAIL" })?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<bool> {
    let config = load(cli)?;
    let output = run_experiment_with_threads(&config, cli.threads)?;
    let format = cli
        .format
        .map(OutputFormat::from)
        .or(config.output.as_ref().map(|o| o.format))
        .unwrap_or_default();
    let dir = cli.out.clone().or(config.output.as_ref().map(|o| o.path.clone()));
    match dir {
        Some(dir) => {
            let path = write_run(&output, format, &dir)?;
            report(config.kind, &output, &mut std::io::stdout().lock())?;
            println!("wrote {}", path.display());
        }
        None => {
            write_rows(&output.rows, format, std::io::stdout().lock())?;
            report(config.kind, &output, &mut std::io::stderr().lock())?;
        }
    }
    Ok(output.summary.passed.values().all(|&ok| ok))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(qbayes::Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
