//! Command implementations behind the `mmoscope` binary.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error,
//! 3 report/manifest schema error.

pub mod verify;

use std::path::Path;

use mmoscope_core::pipeline::{analyze_path, AnalyzeOptions};
use mmoscope_core::report::{write_bundle, ReportFormat, WriteOptions};
use mmoscope_synth::shuffle::{shuffle_segments, ShuffleOptions};
use mmoscope_synth::{Scenario, SynthError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAIL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_SCHEMA: u8 = 3;

pub struct AnalyzeArgs<'a> {
    pub input: &'a Path,
    pub out: &'a Path,
    pub slot_minutes: u32,
    pub teleport_factor: f64,
    pub anon_salt: Option<&'a str>,
    pub format: &'a str,
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> u8 {
    let format = match ReportFormat::from_str(args.format) {
        Some(f) => f,
        None => {
            eprintln!("error: unknown report format '{}', expected csv or json", args.format);
            return EXIT_INPUT;
        }
    };
    let salt = match args.anon_salt.map(decode_hex).transpose() {
        Ok(salt) => salt,
        Err(e) => {
            eprintln!("error: --anon-salt: {e}");
            return EXIT_INPUT;
        }
    };
    if args.slot_minutes == 0 || 60 % args.slot_minutes != 0 {
        eprintln!("error: --slot-minutes must divide 60");
        return EXIT_INPUT;
    }
    if args.teleport_factor <= 1.0 {
        eprintln!("error: --teleport-factor must be greater than 1");
        return EXIT_INPUT;
    }
    let opts = AnalyzeOptions {
        slot_minutes: args.slot_minutes,
        teleport_factor: args.teleport_factor,
    };
    let analysis = match analyze_path(args.input, &opts) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: cannot analyze {}: {e}", args.input.display());
            return EXIT_INPUT;
        }
    };
    if analysis.stats.truncated_tail {
        eprintln!("warning: capture ends inside a record; trailing data ignored");
    }
    if analysis.stats.ts_regressions > 0 {
        eprintln!(
            "warning: {} timestamp regressions in capture order",
            analysis.stats.ts_regressions
        );
    }
    if analysis.matrix.clipped_intervals > 0 {
        eprintln!(
            "warning: {} playing intervals clipped to the trace span",
            analysis.matrix.clipped_intervals
        );
    }
    let write_opts = WriteOptions { format: Some(format), anon_salt: salt };
    if let Err(e) = write_bundle(&analysis, args.out, &write_opts) {
        eprintln!("error: cannot write report to {}: {e}", args.out.display());
        return EXIT_INPUT;
    }
    println!(
        "analyzed {}: {} flows, {} confirmed connections, {} users",
        args.input.display(),
        analysis.dpd.flows,
        analysis.connections.len(),
        analysis.users.len()
    );
    EXIT_OK
}

pub struct GenerateArgs<'a> {
    pub scenario: &'a Path,
    pub seed: Option<u64>,
    pub out: &'a Path,
    pub manifest: &'a Path,
}

pub fn cmd_generate(args: &GenerateArgs) -> u8 {
    let json = match std::fs::read_to_string(args.scenario) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: cannot read scenario {}: {e}", args.scenario.display());
            return EXIT_INPUT;
        }
    };
    let scenario = match Scenario::from_json(&json) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: scenario does not parse: {e}");
            return EXIT_INPUT;
        }
    };
    match mmoscope_synth::generate(&scenario, args.seed, args.out, args.manifest) {
        Ok(manifest) => {
            println!(
                "generated {}: {} users, {} packets, manifest {}",
                args.out.display(),
                manifest.users.len(),
                manifest.categories.values().map(|c| c.packets).sum::<u64>(),
                args.manifest.display()
            );
            EXIT_OK
        }
        Err(SynthError::InvalidScenario(issues)) => {
            eprintln!("error: scenario invalid:");
            for issue in issues {
                eprintln!("  - {issue}");
            }
            EXIT_INPUT
        }
        Err(e) => {
            eprintln!("error: generation failed: {e}");
            EXIT_INPUT
        }
    }
}

pub struct ShuffleArgs<'a> {
    pub input: &'a Path,
    pub out: &'a Path,
    pub seed: u64,
    pub window: usize,
    pub dup_fraction: f64,
}

pub fn cmd_shuffle(args: &ShuffleArgs) -> u8 {
    if args.window == 0 {
        eprintln!("error: --window must be at least 1");
        return EXIT_INPUT;
    }
    if !(0.0..=1.0).contains(&args.dup_fraction) {
        eprintln!("error: --dup-fraction must lie in [0, 1]");
        return EXIT_INPUT;
    }
    let opts = ShuffleOptions { window: args.window, duplicate_fraction: args.dup_fraction };
    match shuffle_segments(args.input, args.out, args.seed, opts) {
        Ok(()) => {
            println!("shuffled {} -> {}", args.input.display(), args.out.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: shuffle failed: {e}");
            EXIT_INPUT
        }
    }
}

fn decode_hex(s: &str) -> Result<Vec<u8>, String> {
    if s.len() % 2 != 0 {
        return Err("odd number of hex digits".into());
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|e| e.to_string()))
        .collect()
}
