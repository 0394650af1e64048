//! Report bundle serialization.
//!
//! All files are written with fixed field ordering and fixed float
//! formatting (6 significant digits; timestamps keep full microsecond
//! precision), so identical analyses produce byte-identical bundles.
//! The exact schemas are documented in the repository README.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::analytics::Cdf;
use crate::fmt::sig6;
use crate::pipeline::Analysis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(ReportFormat::Csv),
            "json" => Some(ReportFormat::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct WriteOptions {
    pub format: Option<ReportFormat>,
    /// Salt for keyed pseudonyms; metrics are computed on raw keys and only
    /// serialization rewrites them.
    pub anon_salt: Option<Vec<u8>>,
}

/// Keyed pseudonym: 16 hex characters of SHA-256 over salt and value.
pub fn pseudonym(salt: &[u8], value: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt);
    hasher.update([0u8]);
    hasher.update(value.as_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

struct NameMapper {
    salt: Option<Vec<u8>>,
}

impl NameMapper {
    fn map(&self, value: &str) -> String {
        match &self.salt {
            Some(salt) => pseudonym(salt, value),
            None => value.to_string(),
        }
    }

    fn map_opt(&self, value: &Option<String>) -> String {
        value.as_deref().map(|v| self.map(v)).unwrap_or_default()
    }
}

/// File names of the fixed CDF series, aligned with `Analysis::flow_cdfs`
/// followed by durations, playing, distance, and speed.
pub fn cdf_file_names(analysis: &Analysis) -> Vec<(String, &Cdf)> {
    let mut out: Vec<(String, &Cdf)> = Vec::new();
    for cdf in &analysis.flow_cdfs {
        out.push((format!("cdf_{}", cdf.label), cdf));
    }
    let d = &analysis.durations;
    for cdf in [&d.conn_durations, &d.playing_all, &d.playing_tiger, &d.playing_lion] {
        out.push((format!("cdf_{}", cdf.label), cdf));
    }
    for cdf in &analysis.distance_cdfs {
        out.push((format!("cdf_{}", cdf.label), cdf));
    }
    out.push((format!("cdf_{}", analysis.speed_cdf.label), &analysis.speed_cdf));
    out
}

/// Write the whole bundle into `dir`, creating it if needed.
pub fn write_bundle(analysis: &Analysis, dir: &Path, opts: &WriteOptions) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let format = opts.format.unwrap_or(ReportFormat::Csv);
    let mapper = NameMapper { salt: opts.anon_salt.clone() };
    match format {
        ReportFormat::Csv => write_csv_bundle(analysis, dir, &mapper)?,
        ReportFormat::Json => write_json_bundle(analysis, dir, &mapper)?,
    }
    // summary.json is part of both formats.
    let summary = serde_json::to_string_pretty(&analysis.summary).expect("summary serializes");
    write_file(dir, "summary.json", summary.as_bytes())
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> io::Result<()> {
    let mut f = fs::File::create(dir.join(name))?;
    f.write_all(bytes)?;
    f.flush()
}

fn write_csv_bundle(analysis: &Analysis, dir: &Path, mapper: &NameMapper) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(
        "conn_id,client_ip,client_port,server_ip,server_port,kind,version,start,end,\
         pkts_c2s,pkts_s2c,bytes_c2s,bytes_s2c,user,gapped\n",
    );
    for row in &analysis.conn_rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.conn_id,
            mapper.map(&row.client_ip.to_string()),
            row.client_port,
            mapper.map(&row.server_ip.to_string()),
            row.server_port,
            row.kind.as_str(),
            row.version.map(|v| v.as_str()).unwrap_or(""),
            row.start,
            row.end,
            row.pkts_c2s,
            row.pkts_s2c,
            row.bytes_c2s,
            row.bytes_s2c,
            mapper.map_opt(&row.user),
            row.gapped,
        ));
    }
    write_file(dir, "connections.csv", out.as_bytes())?;

    let mut out = String::new();
    out.push_str("token,ips,group_sizes,playing_s,distance_wm,mean_speed_wm_s\n");
    let size_by_ip: std::collections::BTreeMap<_, _> =
        analysis.group_records.iter().map(|r| (r.ip, r.size())).collect();
    for user in &analysis.users {
        let ips: Vec<String> = user.client_ips.iter().map(|ip| mapper.map(&ip.to_string())).collect();
        let sizes: Vec<String> = user
            .client_ips
            .iter()
            .map(|ip| size_by_ip.get(ip).copied().unwrap_or(0).to_string())
            .collect();
        let movement = analysis.user_movement.get(&user.token).copied().unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            mapper.map(&user.token),
            ips.join(";"),
            sizes.join(";"),
            crate::time::Micros(user.playing_us),
            sig6(movement.distance_wm),
            sig6(movement.mean_speed()),
        ));
    }
    write_file(dir, "users.csv", out.as_bytes())?;

    let mut out = String::new();
    out.push_str("size,n_ips,n_users,volume_share\n");
    for row in &analysis.group_table.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.bucket,
            row.n_ips,
            row.n_users,
            sig6(row.volume_share_pct)
        ));
    }
    write_file(dir, "groups.csv", out.as_bytes())?;

    for (name, cdf) in cdf_file_names(analysis) {
        let mut out = String::new();
        out.push_str("value,fraction\n");
        for (value, fraction) in cdf.points() {
            out.push_str(&format!("{},{}\n", sig6(value), sig6(fraction)));
        }
        write_file(dir, &format!("{name}.csv"), out.as_bytes())?;
    }

    let mut out = String::new();
    out.push_str("token,class");
    for slot in 0..analysis.matrix.slots {
        out.push_str(&format!(",slot_{slot}"));
    }
    out.push('\n');
    for row in &analysis.matrix.rows {
        out.push_str(&format!("{},{}", mapper.map(&row.token), row.class.as_str()));
        for &cell in &row.cells_us {
            out.push_str(&format!(",{}", sig6(cell as f64 / 60e6)));
        }
        out.push('\n');
    }
    write_file(dir, "timeofday.csv", out.as_bytes())
}

fn write_json_bundle(analysis: &Analysis, dir: &Path, mapper: &NameMapper) -> io::Result<()> {
    use serde_json::{json, Value};

    let connections: Vec<Value> = analysis
        .conn_rows
        .iter()
        .map(|row| {
            json!({
                "conn_id": row.conn_id,
                "client_ip": mapper.map(&row.client_ip.to_string()),
                "client_port": row.client_port,
                "server_ip": mapper.map(&row.server_ip.to_string()),
                "server_port": row.server_port,
                "kind": row.kind.as_str(),
                "version": row.version.map(|v| v.as_str()),
                "start": row.start.to_string(),
                "end": row.end.to_string(),
                "pkts_c2s": row.pkts_c2s,
                "pkts_s2c": row.pkts_s2c,
                "bytes_c2s": row.bytes_c2s,
                "bytes_s2c": row.bytes_s2c,
                "user": mapper.map_opt(&row.user),
                "gapped": row.gapped,
            })
        })
        .collect();
    write_file(dir, "connections.json", pretty(&connections).as_bytes())?;

    let size_by_ip: std::collections::BTreeMap<_, _> =
        analysis.group_records.iter().map(|r| (r.ip, r.size())).collect();
    let users: Vec<Value> = analysis
        .users
        .iter()
        .map(|user| {
            let movement = analysis.user_movement.get(&user.token).copied().unwrap_or_default();
            json!({
                "token": mapper.map(&user.token),
                "ips": user.client_ips.iter().map(|ip| mapper.map(&ip.to_string())).collect::<Vec<_>>(),
                "group_sizes": user.client_ips.iter().map(|ip| size_by_ip.get(ip).copied().unwrap_or(0)).collect::<Vec<_>>(),
                "playing_s": crate::time::Micros(user.playing_us).to_string(),
                "distance_wm": crate::fmt::sig6_f64(movement.distance_wm),
                "mean_speed_wm_s": crate::fmt::sig6_f64(movement.mean_speed()),
            })
        })
        .collect();
    write_file(dir, "users.json", pretty(&users).as_bytes())?;

    let groups: Vec<Value> = analysis
        .group_table
        .rows
        .iter()
        .map(|row| {
            json!({
                "size": row.bucket,
                "n_ips": row.n_ips,
                "n_users": row.n_users,
                "volume_share": crate::fmt::sig6_f64(row.volume_share_pct),
            })
        })
        .collect();
    write_file(dir, "groups.json", pretty(&groups).as_bytes())?;

    for (name, cdf) in cdf_file_names(analysis) {
        let points: Vec<Value> = cdf
            .points()
            .map(|(v, f)| json!([crate::fmt::sig6_f64(v), crate::fmt::sig6_f64(f)]))
            .collect();
        let doc = json!({ "label": cdf.label, "points": points });
        write_file(dir, &format!("{name}.json"), pretty(&doc).as_bytes())?;
    }

    let rows: Vec<Value> = analysis
        .matrix
        .rows
        .iter()
        .map(|row| {
            json!({
                "token": mapper.map(&row.token),
                "class": row.class.as_str(),
                "minutes": row.cells_us.iter().map(|&c| crate::fmt::sig6_f64(c as f64 / 60e6)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let doc = json!({ "slot_minutes": analysis.matrix.slot_minutes, "rows": rows });
    write_file(dir, "timeofday.json", pretty(&doc).as_bytes())
}

fn pretty(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("report value serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudonym_is_stable_and_distinct() {
        let a = pseudonym(b"salt", "10.0.0.1");
        let b = pseudonym(b"salt", "10.0.0.1");
        let c = pseudonym(b"salt", "10.0.0.2");
        let d = pseudonym(b"other", "10.0.0.1");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a.len(), 16);
        assert!(a.chars().all(|ch| ch.is_ascii_hexdigit()));
    }
}
