use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use manreg_core::harness::{compare, plotdata, run_scenario, scenario_maneuver, ControllerMode, Scenario, TraceLog};
use manreg_core::Result;

/// Maneuver regulation vs trajectory tracking for a VTOL reduced model.
#[derive(Parser)]
#[command(name = "manreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes trace.csv and metrics.json.
    Sim {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the scenario under both controllers; writes both traces and summary.json.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the Lyapunov certificate of the scenario gains as JSON.
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Split a trace into tidy per-panel CSVs.
    Plotdata {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;

fn load(path: &PathBuf) -> std::result::Result<Scenario, ExitCode> {
    Scenario::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Sim { config, out } => {
            let scenario = Scenario::load(&config)?;
            let output = run_scenario(&scenario)?;
            output.write(&scenario, &out)?;
            Ok(output.metrics.diverged)
        }
        Command::Compare { config, out } => {
            let scenario = Scenario::load(&config)?;
            let cmp = compare(
                &scenario.with_mode(ControllerMode::Tracking),
                &scenario.with_mode(ControllerMode::Regulation),
            )?;
            cmp.write(&out)?;
            scenario_maneuver(&scenario)?.write_table_csv(std::fs::File::create(out.join("maneuver.csv"))?)?;
            println!("{}", serde_json::to_string_pretty(&cmp.summary)?);
            Ok(cmp.summary.verdicts.tracking_diverged || cmp.summary.verdicts.regulation_diverged)
        }
        Command::Certify { config } => {
            let scenario = Scenario::load(&config)?;
            println!("{}", scenario.certificate()?.to_json()?);
            Ok(false)
        }
        Command::Plotdata { trace, out } => {
            let log = TraceLog::read_csv(std::fs::File::open(&trace)?)?;
            plotdata::write_panels(&log, &out)?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Sim { config, .. } | Command::Compare { config, .. } | Command::Certify { config } = &cli.command
    {
        if let Err(code) = load(config) {
            return code;
        }
    }
    match run(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("run diverged");
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
