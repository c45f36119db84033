use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use jcq_cli::{parse_config, run, CliError, Command, Overrides};

/// Driven dissipative Jaynes-Cummings experiments.
///
/// Parameters come from a TOML file (`--config`) and `--set section.key=value`
/// overrides; the dedicated flags below win over both. Worker threads: `JCQ_THREADS`.
#[derive(Debug, Parser)]
#[command(name = "jcq", version)]
struct Args {
    /// What to compute; may instead be given as `subcommand` in the config file.
    #[arg(value_enum)]
    subcommand: Option<Command>,
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// `section.key=value`, repeatable; the value is parsed as TOML.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    trajectories: Option<u64>,
}

fn execute(args: Args) -> Result<(), CliError> {
    jcq_cli::init_threads()?;
    let text = args.config.as_deref().map(jcq_cli::config::read_config).transpose()?;
    let mut sets = args.sets;
    let flags = [
        ("numerics.n_max", args.n_max.map(|v| v.to_string())),
        ("numerics.seed", args.seed.map(|v| v.to_string())),
        ("numerics.dt", args.dt.map(|v| format!("{v:?}"))),
        ("numerics.t_final", args.t_final.map(|v| format!("{v:?}"))),
        ("numerics.trajectories", args.trajectories.map(|v| v.to_string())),
    ];
    sets.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| format!("{k}={v}"))));
    let ov = Overrides {
        subcommand: args.subcommand,
        output_dir: args.output_dir,
        sets,
    };
    let cfg = parse_config(text.as_deref(), &ov)?;
    let input = args.config.as_deref().zip(text.as_deref());
    let m = run(&cfg, input)?;
    eprintln!(
        "{}: {} files in {} ({:.2} s)",
        m.subcommand,
        m.outputs.len() + 1,
        cfg.output_dir.display(),
        m.wall_time_s
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
