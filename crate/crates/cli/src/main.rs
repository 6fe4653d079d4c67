use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use helios_revote::board::ArchivePolicy;
use helios_revote::crypto::{generate_group, GroupParams};
use helios_revote::netsim::{read_jsonl, write_jsonl};
use helios_revote::properties::{check_all, tally_check, Trace, Verdict};
use helios_revote::scenarios::{
    builtin, run_poll_station_scenario, run_scenario, ScenarioConfig, ScenarioRun, BUILTIN_NAMES,
};

/// Seed for the default 256-bit group, so every run uses the same group.
const GROUP_SEED: u64 = 1;
const GROUP_BITS: u32 = 256;

#[derive(Debug, Parser)]
#[command(
    name = "helios-sim",
    version,
    about = "Simulate Helios-style re-voting under a hold/release network adversary"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a builtin scenario or a JSON scenario config.
    Run {
        /// Builtin name (see `list`) or path to a config file.
        scenario: String,
        /// Override the board's archive policy.
        #[arg(long)]
        policy: Option<ArchivePolicy>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the transcript as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the final board as JSON.
        #[arg(long)]
        board_out: Option<PathBuf>,
        /// Write the electoral roll as a JSON array of voter ids.
        #[arg(long)]
        roll_out: Option<PathBuf>,
        /// Use the 4-bit group (p = 23) instead of the 256-bit default.
        #[arg(long)]
        tiny_group: bool,
        /// Print the verdicts as JSON instead of a report.
        #[arg(long)]
        json: bool,
    },
    /// List builtin scenarios.
    List {
        /// Also write each builtin's config to DIR/<name>.json.
        #[arg(long, value_name = "DIR")]
        export: Option<PathBuf>,
    },
    /// Re-evaluate the properties from a transcript alone.
    Verify {
        trace: PathBuf,
        /// JSON array of registered voter ids.
        #[arg(long)]
        roll: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Compare the published tally with recounts over the cast ballots.
    TallyCheck { trace: PathBuf },
}

enum Outcome {
    Holds,
    Violation,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Holds) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Run {
            scenario,
            policy,
            seed,
            out,
            board_out,
            roll_out,
            tiny_group,
            json,
        } => {
            let mut cfg = load_scenario(&scenario, seed)?;
            if let Some(policy) = policy {
                cfg = cfg.with_policy(policy);
            }
            let params = if tiny_group {
                GroupParams::tiny()
            } else {
                generate_group(GROUP_BITS, GROUP_SEED)?
            };
            let run = if cfg.poll_station.is_some() {
                run_poll_station_scenario(&cfg, &params)?
            } else {
                run_scenario(&cfg, &params)?
            };
            if let Some(path) = out {
                let file = create(&path)?;
                let mut writer = BufWriter::new(file);
                write_jsonl(run.trace.events(), &mut writer)?;
                writer.flush()?;
            }
            if let Some(path) = board_out {
                write_json(&path, &run.board)?;
            }
            if let Some(path) = roll_out {
                write_json(&path, &run.roll)?;
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&run.verdicts)?);
            } else {
                report_run(&cfg, &run);
            }
            Ok(outcome(&run.verdicts))
        }
        Command::List { export } => {
            for name in BUILTIN_NAMES {
                println!("{name}");
            }
            if let Some(dir) = export {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                for name in BUILTIN_NAMES {
                    write_json(&dir.join(format!("{name}.json")), &builtin(name, 0)?)?;
                }
            }
            Ok(Outcome::Holds)
        }
        Command::Verify { trace, roll, json } => {
            let trace = load_trace(&trace)?;
            let roll: BTreeSet<String> = serde_json::from_reader(BufReader::new(open(&roll)?))
                .with_context(|| format!("parsing roll {}", roll.display()))?;
            let verdicts = check_all(&trace, &roll)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&verdicts)?);
            } else {
                report_verdicts(&trace, &verdicts);
            }
            Ok(outcome(&verdicts))
        }
        Command::TallyCheck { trace } => {
            let trace = load_trace(&trace)?;
            let check = tally_check(&trace)?;
            println!("published tally:            {}", check.published);
            println!("recount of accepted entries: {}", check.accepted_recount);
            println!("recount of last casts:       {}", check.last_cast_recount);
            if check.matches_board() && check.matches_intent() {
                println!("tally matches the voters' last choices");
                Ok(Outcome::Holds)
            } else {
                if !check.matches_board() {
                    println!("MISMATCH: tally differs from the accepted entries");
                }
                if !check.matches_intent() {
                    println!("MISMATCH: tally differs from the voters' last choices");
                }
                Ok(Outcome::Violation)
            }
        }
    }
}

fn outcome(verdicts: &[Verdict]) -> Outcome {
    if verdicts.iter().all(|v| v.holds) {
        Outcome::Holds
    } else {
        Outcome::Violation
    }
}

fn load_scenario(name: &str, seed: Option<u64>) -> Result<ScenarioConfig> {
    let path = Path::new(name);
    let cfg = if BUILTIN_NAMES.contains(&name) {
        builtin(name, seed.unwrap_or(0))?
    } else if path.is_file() {
        let cfg: ScenarioConfig = serde_json::from_reader(BufReader::new(open(path)?))
            .with_context(|| format!("parsing scenario {}", path.display()))?;
        match seed {
            Some(seed) => cfg.with_seed(seed),
            None => cfg,
        }
    } else {
        anyhow::bail!("`{name}` is neither a builtin scenario nor a config file");
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_trace(path: &Path) -> Result<Trace> {
    let events = read_jsonl(BufReader::new(open(path)?))
        .with_context(|| format!("reading transcript {}", path.display()))?;
    Ok(Trace::new(events)?)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut writer = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(())
}

fn report_run(cfg: &ScenarioConfig, run: &ScenarioRun) {
    println!(
        "scenario: {} (policy {}, seed {})",
        run.name, run.policy, cfg.seed
    );
    println!("tally:    {}", run.tally);
    for entry in &run.board.entries {
        println!(
            "  {} {:<12} {:<10} {:?}",
            entry.submission,
            entry.session,
            entry.voter_id.as_deref().unwrap_or("-"),
            entry.status
        );
    }
    for lookup in run.lookups() {
        println!(
            "  step {}: {} checks the board {} close: {}",
            lookup.step,
            lookup.voter,
            if lookup.after_close {
                "after"
            } else {
                "before"
            },
            lookup.outcome.as_str()
        );
    }
    report_verdicts(&run.trace, &run.verdicts);
}

fn report_verdicts(trace: &Trace, verdicts: &[Verdict]) {
    for verdict in verdicts {
        if verdict.holds {
            println!("{:<24} holds", verdict.property.as_str());
            continue;
        }
        println!("{:<24} VIOLATED", verdict.property.as_str());
        for event in verdict.witness(trace) {
            println!(
                "    step {:>4}  {}",
                event.step,
                serde_json::to_string(event).expect("events serialize")
            );
        }
    }
}
