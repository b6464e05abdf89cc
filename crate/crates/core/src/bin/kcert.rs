use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kahler_conformal::models::{builtin_model, list_models};
use kahler_conformal::report::{
    render, run_certification, Format, Pipeline, RunConfig, Source, EXIT_INPUT,
};
use kahler_conformal::stats::Tolerances;

#[derive(Parser)]
#[command(name = "kcert", version, about = "Certify flat complex conformal connections on Kähler charts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run certification pipelines over seeded sample points.
    Certify(CertifyArgs),
    /// List the built-in models and their parameters.
    ListModels,
    /// Write a built-in model as a spec JSON document.
    EmitSpec {
        #[arg(long)]
        model: String,
        #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_pair)]
        params: Vec<(String, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    model: Option<String>,
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_pair)]
    params: Vec<(String, f64)>,
    #[arg(long, value_enum, default_value = "all")]
    pipeline: Pipeline,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Per-check threshold override.
    #[arg(long = "tol", value_name = "CHECK=VALUE", value_parser = parse_pair)]
    tolerances: Vec<(String, f64)>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("`{v}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn write_out(out: Option<&PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("CERTIFY_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn certify(args: CertifyArgs) -> ExitCode {
    let source = match (args.model, args.file) {
        (Some(name), _) => Source::Builtin {
            name,
            params: args.params.into_iter().collect(),
        },
        (None, Some(path)) => Source::File(path),
        (None, None) => unreachable!("clap requires a source"),
    };
    let config = RunConfig {
        source,
        pipeline: args.pipeline,
        points: args.points,
        seed: args.seed,
        tolerances: Tolerances {
            overrides: args.tolerances.into_iter().collect(),
        },
    };
    match run_certification(&config) {
        Ok(report) => {
            if let Err(e) = write_out(args.out.as_ref(), &render(&report, args.format)) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_INPUT as u8);
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    match Cli::parse().command {
        Command::Certify(args) => certify(args),
        Command::ListModels => {
            for m in list_models() {
                println!("{}: {}", m.name, m.description);
                for p in &m.params {
                    println!("  --param {}={}  {}", p.name, p.default, p.description);
                }
            }
            ExitCode::SUCCESS
        }
        Command::EmitSpec { model, params, out } => {
            let params: BTreeMap<String, f64> = params.into_iter().collect();
            let spec = match builtin_model(&model, &params) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_INPUT as u8);
                }
            };
            let mut json = spec.to_json();
            json.push('\n');
            match write_out(out.as_ref(), &json) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_INPUT as u8)
                }
            }
        }
    }
}
