use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use smstrack_core::canonical_command_table;
use smstrack_sim::gateway::{Gateway, GatewayOptions};
use smstrack_sim::{decode_nmea_report, Scenario, Simulation};

#[derive(Debug, Parser)]
#[command(
    name = "smstrack",
    version,
    about = "Simulator for an SMS-controlled vehicle tracker"
)]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Cmd>,

    /// Print the command table as `<text>\t<tag>` lines.
    #[arg(long)]
    print_commands: bool,

    /// Serve the phone-console gateway with a real-time virtual clock.
    #[arg(long)]
    interactive: bool,

    #[arg(long, default_value_t = 4860, requires = "interactive")]
    port: u16,

    #[arg(long, default_value = "127.0.0.1", requires = "interactive")]
    host: String,

    /// Virtual milliseconds per real millisecond.
    #[arg(long, default_value_t = 1.0, requires = "interactive")]
    speedup: f64,

    /// Settings and pre-scheduled events for the interactive session.
    #[arg(long, requires = "interactive")]
    scenario: Option<PathBuf>,

    /// Keep the session on disk as a replayable batch scenario.
    #[arg(long, requires = "interactive")]
    record: Option<PathBuf>,

    /// Stop the interactive session at this virtual time.
    #[arg(long, requires = "interactive")]
    until_ms: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run a scenario in batch mode and emit its JSONL transcript.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the transcript here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode an NMEA file and print one line per fix.
    DecodeNmea { file: PathBuf },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Some(Cmd::Run {
            scenario,
            seed,
            out: path,
        }) => {
            let mut scn = Scenario::load(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            if let Some(seed) = seed {
                scn.config.seed = seed;
            }
            let jsonl = Simulation::run(&scn)?.to_jsonl();
            match path {
                Some(p) => fs::write(&p, jsonl).with_context(|| format!("writing {}", p.display()))?,
                None => out.write_all(jsonl.as_bytes())?,
            }
        }
        Some(Cmd::DecodeNmea { file }) => {
            let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            for line in decode_nmea_report(&bytes) {
                writeln!(out, "{line}")?;
            }
        }
        None if cli.print_commands => out.write_all(canonical_command_table().dump().as_bytes())?,
        None if cli.interactive => {
            let scn = match &cli.scenario {
                Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display()))?,
                None => Scenario::default(),
            };
            let sim = Simulation::from_scenario(&scn)?;
            let options = GatewayOptions {
                speedup: cli.speedup,
                until_ms: cli.until_ms,
                record_to: cli.record,
            };
            let gateway = Gateway::bind((cli.host.as_str(), cli.port), sim, options)?;
            eprintln!("smstrack: gateway listening on {}", gateway.local_addr()?);
            gateway.serve()?;
        }
        None => bail!("nothing to do; see --help"),
    }
    Ok(())
}
