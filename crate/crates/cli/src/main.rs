//! `mmoscope`: analyze MMORPG traffic in packet captures, generate synthetic
//! ground-truth traces, shuffle captures for robustness testing, and verify
//! reports against manifests.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mmoscope_cli::verify::{cmd_verify, VerifyArgs};
use mmoscope_cli::{cmd_analyze, cmd_generate, cmd_shuffle, AnalyzeArgs, GenerateArgs, ShuffleArgs};

#[derive(Parser)]
#[command(name = "mmoscope", version, about = "MMORPG packet-trace analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a pcap capture and write a report bundle.
    Analyze {
        /// Input capture (libpcap classic format).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output report directory.
        #[arg(long)]
        out: PathBuf,
        /// Width of time-of-day slots in minutes (must divide 60).
        #[arg(long, default_value_t = 60)]
        slot_minutes: u32,
        /// Teleport filter: remove steps faster than factor x median speed.
        #[arg(long, default_value_t = 100.0)]
        teleport_factor: f64,
        /// Hex salt; when set, IPs and account tokens appear as pseudonyms.
        #[arg(long)]
        anon_salt: Option<String>,
        /// Report format: csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Generate a synthetic trace and ground-truth manifest from a scenario.
    Generate {
        /// Scenario file (JSON).
        #[arg(long)]
        scenario: PathBuf,
        /// Seed override; defaults to the scenario's seed field.
        #[arg(long)]
        seed: Option<u64>,
        /// Output pcap path.
        #[arg(long)]
        out: PathBuf,
        /// Output manifest path.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Reorder and duplicate TCP segments of a capture within a window.
    Shuffle {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Permutation window in records.
        #[arg(long, default_value_t = 8)]
        window: usize,
        /// Fraction of data segments to duplicate.
        #[arg(long, default_value_t = 0.01)]
        dup_fraction: f64,
    },
    /// Compare a report bundle against a generator manifest.
    Verify {
        /// Report directory written by `analyze`.
        #[arg(long)]
        report: PathBuf,
        /// Manifest written by `generate`.
        #[arg(long)]
        manifest: PathBuf,
        /// Relative tolerance on per-user playing time.
        #[arg(long, default_value_t = 0.01)]
        playing_tol: f64,
        /// Relative tolerance on mean filtered speed.
        #[arg(long, default_value_t = 0.02)]
        speed_tol: f64,
        /// Absolute tolerance on group-table cells.
        #[arg(long, default_value_t = 0)]
        group_tol: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Analyze { input, out, slot_minutes, teleport_factor, anon_salt, format } => {
            cmd_analyze(&AnalyzeArgs {
                input,
                out,
                slot_minutes: *slot_minutes,
                teleport_factor: *teleport_factor,
                anon_salt: anon_salt.as_deref(),
                format,
            })
        }
        Command::Generate { scenario, seed, out, manifest } => {
            cmd_generate(&GenerateArgs { scenario, seed: *seed, out, manifest })
        }
        Command::Shuffle { input, out, seed, window, dup_fraction } => cmd_shuffle(&ShuffleArgs {
            input,
            out,
            seed: *seed,
            window: *window,
            dup_fraction: *dup_fraction,
        }),
        Command::Verify { report, manifest, playing_tol, speed_tol, group_tol } => {
            cmd_verify(&VerifyArgs {
                report,
                manifest,
                playing_tol: *playing_tol,
                speed_tol: *speed_tol,
                group_tol: *group_tol,
            })
        }
    };
    ExitCode::from(code)
}
