//! Report-vs-manifest verification: compare an analyzer report bundle with
//! the generator's ground-truth manifest and print one PASS/FAIL line per
//! check.

use std::collections::BTreeMap;
use std::path::Path;

use mmoscope_synth::Manifest;

use crate::{EXIT_OK, EXIT_SCHEMA, EXIT_VERIFY_FAIL};

pub struct VerifyArgs<'a> {
    pub report: &'a Path,
    pub manifest: &'a Path,
    pub playing_tol: f64,
    pub speed_tol: f64,
    pub group_tol: u64,
}

#[derive(Debug)]
enum VerifyError {
    Schema(String),
}

struct ReportUsers {
    /// token -> (playing_s, distance_wm)
    rows: BTreeMap<String, (f64, f64)>,
}

struct ReportGroups {
    /// bucket -> (n_ips, n_users)
    rows: BTreeMap<String, (u64, u64)>,
}

pub fn cmd_verify(args: &VerifyArgs) -> u8 {
    match run(args) {
        Ok(all_passed) => {
            if all_passed {
                println!("verification OK");
                EXIT_OK
            } else {
                println!("verification FAILED");
                EXIT_VERIFY_FAIL
            }
        }
        Err(VerifyError::Schema(msg)) => {
            eprintln!("error: schema mismatch: {msg}");
            EXIT_SCHEMA
        }
    }
}

fn run(args: &VerifyArgs) -> Result<bool, VerifyError> {
    let manifest = Manifest::load(args.manifest)
        .map_err(|e| VerifyError::Schema(format!("manifest {}: {e}", args.manifest.display())))?;
    let users = load_users(&args.report.join("users.csv"))?;
    let groups = load_groups(&args.report.join("groups.csv"))?;
    let summary = load_summary(&args.report.join("summary.json"))?;

    let mut all = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {} ({})", if ok { "PASS" } else { "FAIL" }, name, detail);
        all &= ok;
    };

    // User count, exact.
    let report_count = users.rows.len() as u64;
    check(
        "user_count",
        report_count == manifest.expected.user_count,
        format!("report {} vs manifest {}", report_count, manifest.expected.user_count),
    );

    // Group table rows, within +-group_tol per cell.
    for truth in &manifest.groups {
        let (n_ips, n_users) = groups.rows.get(&truth.size).copied().unwrap_or((0, 0));
        let ok = n_ips.abs_diff(truth.n_ips) <= args.group_tol
            && n_users.abs_diff(truth.n_users) <= args.group_tol;
        check(
            &format!("group_row[{}]", truth.size),
            ok,
            format!(
                "report ips={} users={} vs manifest ips={} users={}",
                n_ips, n_users, truth.n_ips, truth.n_users
            ),
        );
    }

    // Per-user playing time, relative tolerance.
    let mut worst_rel = 0.0f64;
    let mut worst_token = String::new();
    let mut playing_ok = true;
    let mut missing = 0u64;
    for truth in &manifest.users {
        match users.rows.get(&truth.token) {
            Some(&(playing_s, _)) => {
                let truth_s = truth.playing_us as f64 / 1e6;
                let rel = if truth_s > 0.0 {
                    (playing_s - truth_s).abs() / truth_s
                } else if playing_s == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                if rel > worst_rel {
                    worst_rel = rel;
                    worst_token = truth.token.clone();
                }
                playing_ok &= rel <= args.playing_tol;
            }
            None => {
                missing += 1;
                playing_ok = false;
            }
        }
    }
    check(
        "playing_time",
        playing_ok,
        if missing > 0 {
            format!("{missing} manifest users missing from report")
        } else {
            format!("worst relative error {:.6} ({})", worst_rel, worst_token)
        },
    );

    // Mean filtered speed, relative tolerance.
    let report_speed = summary.speed;
    let truth_speed = manifest.movement.mean_filtered_speed_wm_s;
    let speed_rel = if truth_speed > 0.0 {
        (report_speed - truth_speed).abs() / truth_speed
    } else if report_speed == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    check(
        "mean_filtered_speed",
        speed_rel <= args.speed_tol,
        format!("report {} vs manifest {} (rel {:.6})", report_speed, truth_speed, speed_rel),
    );

    // Movement share: exact integer agreement.
    let share_ok = summary.movement_packets == manifest.expected.movement_packets
        && summary.client_payload_packets == manifest.expected.client_game_payload_packets;
    check(
        "movement_share",
        share_ok,
        format!(
            "report {}/{} vs manifest {}/{}",
            summary.movement_packets,
            summary.client_payload_packets,
            manifest.expected.movement_packets,
            manifest.expected.client_game_payload_packets
        ),
    );

    Ok(all)
}

fn load_users(path: &Path) -> Result<ReportUsers, VerifyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| VerifyError::Schema(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| VerifyError::Schema(format!("{}: empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let token_i = col(&cols, "token", path)?;
    let playing_i = col(&cols, "playing_s", path)?;
    let distance_i = col(&cols, "distance_wm", path)?;
    let mut rows = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(VerifyError::Schema(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                n + 2,
                fields.len(),
                cols.len()
            )));
        }
        let playing: f64 = fields[playing_i]
            .parse()
            .map_err(|_| VerifyError::Schema(format!("{}: bad playing_s", path.display())))?;
        let distance: f64 = fields[distance_i]
            .parse()
            .map_err(|_| VerifyError::Schema(format!("{}: bad distance_wm", path.display())))?;
        rows.insert(fields[token_i].to_string(), (playing, distance));
    }
    Ok(ReportUsers { rows })
}

fn load_groups(path: &Path) -> Result<ReportGroups, VerifyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| VerifyError::Schema(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| VerifyError::Schema(format!("{}: empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let size_i = col(&cols, "size", path)?;
    let ips_i = col(&cols, "n_ips", path)?;
    let users_i = col(&cols, "n_users", path)?;
    let mut rows = BTreeMap::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| -> Result<u64, VerifyError> {
            s.parse().map_err(|_| VerifyError::Schema(format!("{}: bad count", path.display())))
        };
        rows.insert(
            fields[size_i].to_string(),
            (parse(fields[ips_i])?, parse(fields[users_i])?),
        );
    }
    Ok(ReportGroups { rows })
}

struct SummaryFields {
    speed: f64,
    movement_packets: u64,
    client_payload_packets: u64,
}

fn load_summary(path: &Path) -> Result<SummaryFields, VerifyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| VerifyError::Schema(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| VerifyError::Schema(format!("{}: {e}", path.display())))?;
    let speed = value
        .pointer("/movement/mean_speed_wm_s")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| VerifyError::Schema(format!("{}: missing movement.mean_speed_wm_s", path.display())))?;
    let movement_packets = value
        .pointer("/wow/movement_packets")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| VerifyError::Schema(format!("{}: missing wow.movement_packets", path.display())))?;
    let client_payload_packets = value
        .pointer("/wow/client_payload_packets")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| {
            VerifyError::Schema(format!("{}: missing wow.client_payload_packets", path.display()))
        })?;
    Ok(SummaryFields { speed, movement_packets, client_payload_packets })
}

fn col(cols: &[&str], name: &str, path: &Path) -> Result<usize, VerifyError> {
    cols.iter()
        .position(|&c| c == name)
        .ok_or_else(|| VerifyError::Schema(format!("{}: missing column {name}", path.display())))
}
