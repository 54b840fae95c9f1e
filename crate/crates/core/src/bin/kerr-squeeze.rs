use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kerr_squeeze::scenario::{
    parse_config, run_scenario, scenario_line, Overrides, Registry, ScenarioConfig,
};

/// Quantum noise of femtosecond pulses in Kerr fibre: run scenarios, write CSVs.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Directory of extra scenario configs (*.toml) added to the built-ins.
    #[arg(long, global = true)]
    scenario_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a named scenario.
    Run {
        /// Path to a TOML config, or the name of a registered scenario.
        target: String,
        /// Output root; each scenario writes into <out>/<name>/.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Time-grid sample count (power of two).
        #[arg(long)]
        grid_samples: Option<usize>,
    },
    /// List registered scenarios.
    List,
    /// Print the fully resolved config of a scenario.
    Describe { scenario: String },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn registry(dir: Option<&Path>) -> Result<Registry, ExitCode> {
    let mut r = Registry::builtin();
    if let Some(d) = dir {
        r.load_dir(d).map_err(|e| fail(EXIT_VALIDATION, e))?;
    }
    Ok(r)
}

/// Scenarios to run with the source text used to anchor errors.
fn load_target(target: &str, reg: &Registry) -> Result<(Vec<ScenarioConfig>, String, String), ExitCode> {
    let path = Path::new(target);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| fail(EXIT_VALIDATION, format!("{target}: {e}")))?;
        let file = parse_config(&text, target).map_err(|e| fail(EXIT_VALIDATION, e))?;
        return Ok((file.scenario, text, target.to_string()));
    }
    match reg.get(target) {
        Some(e) => Ok((vec![e.config.clone()], String::new(), e.origin.clone())),
        None => Err(fail(EXIT_VALIDATION, format!("'{target}' is neither a config file nor a known scenario"))),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let reg = match registry(cli.scenario_dir.as_deref()) {
        Ok(r) => r,
        Err(code) => return code,
    };
    match cli.command {
        Command::List => {
            for (name, desc) in reg.list() {
                println!("{name:<12} {desc}");
            }
            ExitCode::SUCCESS
        }
        Command::Describe { scenario } => {
            let Some(entry) = reg.get(&scenario) else {
                return fail(EXIT_VALIDATION, format!("unknown scenario '{scenario}'"));
            };
            match entry.config.resolve(&Overrides::default()).and_then(|c| c.to_manifest()) {
                Ok(text) => {
                    println!("# {}", entry.origin);
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_VALIDATION, format!("{}: {e}", entry.origin)),
            }
        }
        Command::Run { target, out, seed, grid_samples } => {
            let (scenarios, text, source) = match load_target(&target, &reg) {
                Ok(x) => x,
                Err(code) => return code,
            };
            let ov = Overrides { seed, grid_samples };
            let mut resolved = Vec::with_capacity(scenarios.len());
            for s in &scenarios {
                match s.resolve(&ov) {
                    Ok(c) => resolved.push(c),
                    Err(e) => {
                        let at = scenario_line(&text, &s.name).map(|l| format!(":{l}")).unwrap_or_default();
                        return fail(EXIT_VALIDATION, format!("{source}{at}: scenario '{}': {e}", s.name));
                    }
                }
            }
            for cfg in &resolved {
                match run_scenario(cfg, &out) {
                    Ok(o) => println!("{}: wrote {} files to {}", cfg.name, o.files.len(), o.dir.display()),
                    Err(e) => return fail(EXIT_RUNTIME, format!("scenario '{}': {e}", cfg.name)),
                }
            }
            ExitCode::SUCCESS
        }
    }
}
