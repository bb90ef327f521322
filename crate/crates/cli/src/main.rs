//! Batch driver: loads a catalog (preset or file), runs the analysis
//! pipeline or a named certification suite, and emits reports.
//!
//! Exit codes: 0 success, 2 validation failure, 3 internal check violation.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use einstein_core::analysis::{self, AnalysisConfig};
use einstein_core::butterflies::Version;
use einstein_core::catalog_io;
use einstein_core::lattice::Catalog;
use einstein_core::presets;
use einstein_core::topology::Field;

#[derive(Parser)]
#[command(
    name = "einstein-cli",
    about = "Existence analysis for invariant Einstein metrics on compact homogeneous spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Q,
    Z2,
}

#[derive(Clone, Copy, ValueEnum)]
enum VersionArg {
    Fine,
    Draft,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Json,
    Md,
}

#[derive(clap::Args)]
struct Source {
    /// built-in preset name
    #[arg(long, conflicts_with = "catalog")]
    preset: Option<String>,
    /// catalog JSON file
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// numeric tolerance for validation and predicates
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and print the verdict report
    Analyze {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FieldArg::Q)]
        field: FieldArg,
        #[arg(long, value_enum, default_value_t = VersionArg::Fine)]
        version: VersionArg,
        #[arg(long, value_enum, default_value_t = ReportArg::Md)]
        report: ReportArg,
        /// one equivalence class per item instead of fingerprint classes
        #[arg(long)]
        trivial_equivalence: bool,
        #[arg(long, default_value_t = 16)]
        starts: usize,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        /// write the report to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one invariant suite: filtering | butterflies | retraction | cover | curvature
    Certify {
        #[command(flatten)]
        source: Source,
        suite: String,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = VersionArg::Fine)]
        version: VersionArg,
    },
    /// Multi-start Einstein metric search
    Einstein {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 16)]
        starts: usize,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// write the iteration trace as JSON lines
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Write a built-in preset as a catalog JSON file
    ExportPreset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in presets
    Presets,
}

fn load_source(source: &Source) -> Result<Catalog, String> {
    match (&source.preset, &source.catalog) {
        (Some(name), None) => presets::preset(name)
            .map(|p| p.catalog)
            .ok_or_else(|| format!("unknown preset {name:?}; see `presets`")),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            catalog_io::load_catalog(&text, source.tol).map_err(|e| e.to_string())
        }
        _ => Err("exactly one of --preset or --catalog is required".into()),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err((msg, code)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

type Failure = (String, ExitCode);

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let validation = |e: String| (e, ExitCode::from(2));
    let violation = |e: String| (e, ExitCode::from(3));
    let map_analysis = |e: analysis::AnalysisError| match e {
        analysis::AnalysisError::Validation(m) => (m, ExitCode::from(2)),
        analysis::AnalysisError::CheckViolation(m) => (m, ExitCode::from(3)),
    };
    match cli.command {
        Command::Analyze {
            source,
            eps,
            samples,
            seed,
            field,
            version,
            report,
            trivial_equivalence,
            starts,
            budget,
            out,
        } => {
            let cat = load_source(&source).map_err(validation)?;
            let config = AnalysisConfig {
                eps,
                samples,
                seed,
                field: match field {
                    FieldArg::Q => Field::Q,
                    FieldArg::Z2 => Field::Z2,
                },
                version: match version {
                    VersionArg::Fine => Version::Fine,
                    VersionArg::Draft => Version::Draft,
                },
                starts,
                budget,
                trivial_equivalence,
            };
            let rep = analysis::run_analyze(&cat, &config).map_err(map_analysis)?;
            let text = match report {
                ReportArg::Md => rep.to_markdown(),
                ReportArg::Json => serde_json::to_string_pretty(&rep).unwrap(),
            };
            emit(&out, &text).map_err(validation)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { source, suite, samples, seed, version } => {
            let cat = load_source(&source).map_err(validation)?;
            let rep = analysis::run_certify(
                &cat,
                &suite,
                samples,
                seed,
                match version {
                    VersionArg::Fine => Version::Fine,
                    VersionArg::Draft => Version::Draft,
                },
            )
            .map_err(map_analysis)?;
            for line in &rep.details {
                println!("{line}");
            }
            if rep.passed {
                println!("suite {}: pass", rep.suite);
                Ok(ExitCode::SUCCESS)
            } else {
                Err(violation(format!("suite {} failed", rep.suite)))
            }
        }
        Command::Einstein { source, starts, budget, seed, trace_out } => {
            let cat = load_source(&source).map_err(validation)?;
            let (rows, trace) =
                analysis::run_einstein(&cat, starts, budget, seed).map_err(map_analysis)?;
            if let Some(path) = trace_out {
                let lines: Vec<String> =
                    trace.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
                fs::write(&path, lines.join("\n"))
                    .map_err(|e| validation(format!("{}: {e}", path.display())))?;
            }
            println!("| summand values | sc | residual |");
            println!("|---|---|---|");
            for row in rows {
                let vals: Vec<String> =
                    row.summand_values.iter().map(|v| format!("{v:.6}")).collect();
                let note = row.note.map(|n| format!(" ({n})")).unwrap_or_default();
                println!(
                    "| ({}) | {:.6} | {:.2e} |{}",
                    vals.join(", "),
                    row.sc,
                    row.residual,
                    note
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportPreset { name, out } => {
            let p = presets::preset(&name)
                .ok_or_else(|| validation(format!("unknown preset {name:?}")))?;
            let file = catalog_io::save_catalog(&p.catalog);
            let text = serde_json::to_string_pretty(&file).unwrap();
            emit(&out, &text).map_err(validation)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets => {
            for name in presets::PRESET_NAMES {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
