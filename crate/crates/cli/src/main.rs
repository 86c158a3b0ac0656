use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use minl_core::experiment::{parse_kv, run, ExperimentKind, ExperimentSpec};
use minl_core::MinlError;

/// Simulate and optimize measurement-induced two-mode squeezing.
#[derive(Parser, Debug)]
#[command(name = "minl", version)]
struct Args {
    /// simulate, optimize, xi_sweep, phase_heatmap, tradeoff, loss_sweep,
    /// wigner, photon_dist, oracle_check or special_case
    kind: String,
    /// Named parameter preset (fig2 .. fig8).
    #[arg(long)]
    preset: Option<String>,
    /// File of key=value lines, applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path; a JSON sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
}

fn fail(err: &MinlError) -> ExitCode {
    let kind = if err.is_validation() { "validation" } else { "numerical" };
    let line = serde_json::json!({ "error": kind, "message": err.to_string() });
    eprintln!("{line}");
    ExitCode::from(if err.is_validation() { 1 } else { 2 })
}

fn build_spec(args: &Args) -> Result<ExperimentSpec, MinlError> {
    let kind: ExperimentKind = args.kind.parse()?;
    let mut spec = ExperimentSpec::new(kind);
    spec.seed = args.seed;
    spec.output_path = args.out.clone();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        spec.params.extend(parse_kv(&text)?);
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| MinlError::InvalidParameter(format!("--set expects key=value, got '{kv}'")))?;
        spec.params.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(p) = &args.preset {
        spec = spec.with_preset(p)?;
    }
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.kind() == clap::error::ErrorKind::DisplayHelp || e.kind() == clap::error::ErrorKind::DisplayVersion => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&MinlError::InvalidParameter(e.to_string().lines().next().unwrap_or("").to_string())),
    };
    if let Some(n) = args.threads {
        if n == 0 {
            return fail(&MinlError::InvalidParameter("--threads must be positive".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&MinlError::Numerical(e.to_string()));
        }
    }
    let spec = match build_spec(&args) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let out = match run(&spec) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    if let Some(path) = &spec.output_path {
        match out.write(path) {
            Ok(files) => {
                for f in files {
                    log::info!("wrote {}", f.display());
                }
            }
            Err(e) => return fail(&e),
        }
    } else {
        for (_, t) in &out.tables {
            print!("{}", t.to_csv());
        }
    }
    eprintln!("{}: {}", out.name, out.summary);
    if out.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
