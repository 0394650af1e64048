//! End-to-end analysis: capture -> reassembly -> detection -> dissection ->
//! attribution -> statistics, gathered into one [`Analysis`] value that the
//! report writer serializes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::analytics::{
    self, avatar_tracks, duration_cdfs, flow_stats, movement_share, path_stats, teleport_filter,
    time_of_day, Cdf, Direction, DurationStats, MovementAnalysis, MovementShare, TimeOfDayMatrix,
};
use crate::capture::reassembly::Reassembler;
use crate::capture::{CaptureError, PacketRecord, TraceReader, TraceStats};
use crate::dissect::{dissect_connection, WowConnection};
use crate::dpd::{self, DpdState, Kind, RejectReason};
use crate::fmt::sig6_f64;
use crate::session::{attribute, classify_groups, user_classes, GroupRecord, GroupTable, User, UserClass};
use crate::time::Micros;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Capture(#[from] CaptureError),
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub slot_minutes: u32,
    pub teleport_factor: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { slot_minutes: 60, teleport_factor: 100.0 }
    }
}

/// Detection counters over every flow in the trace.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct DpdCounts {
    pub flows: u64,
    pub candidates_logon: u64,
    pub candidates_game: u64,
    pub confirmed_logon: u64,
    pub confirmed_game: u64,
    /// Step-one matches rejected by step two (responder mismatch or silent).
    pub rejected_candidates: u64,
    pub rejected_no_signature: u64,
    pub rejected_midstream: u64,
    pub rejected_no_payload: u64,
    pub gapped_flows: u64,
}

/// Deduplicated payload universe of the whole trace, the denominator for
/// traffic shares. Retransmissions and duplicated segments never change it.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PayloadUniverse {
    pub packets: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub first_ts: String,
    pub last_ts: String,
    pub duration_s: f64,
    pub non_tcp_packets: u64,
    pub non_tcp_bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WowTrafficSummary {
    pub payload_packets: u64,
    pub payload_bytes: u64,
    pub total_payload_packets: u64,
    pub total_payload_bytes: u64,
    pub packet_share: f64,
    pub byte_share: f64,
    pub movement_packets: u64,
    pub client_payload_packets: u64,
    pub movement_share: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UsersSummary {
    pub count: u64,
    pub unattributed_connections: u64,
    pub avg_playing_hours: f64,
    pub below_0_28h_fraction: f64,
    pub above_2_8h_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MovementSummary {
    pub avatars: u64,
    pub total_distance_wm: f64,
    pub mean_speed_wm_s: f64,
    pub raw_mean_speed_wm_s: f64,
    pub raw_median_speed_wm_s: f64,
    pub teleport_factor: f64,
    pub teleport_threshold_wm_s: f64,
    pub affected_avatars: u64,
    pub affected_fraction: f64,
    pub removed_steps: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummaryRow {
    pub size: String,
    pub n_ips: u64,
    pub n_users: u64,
    pub volume_share_pct: f64,
}

/// The summary object written to `summary.json`. Every field is invariant
/// under segment reordering and duplication of the input capture.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub trace: TraceSummary,
    pub dpd: DpdCounts,
    pub wow: WowTrafficSummary,
    pub users: UsersSummary,
    pub movement: MovementSummary,
    pub groups: Vec<GroupSummaryRow>,
}

/// One row of the connections table.
#[derive(Debug, Clone)]
pub struct ConnRow {
    pub conn_id: u64,
    pub client_ip: std::net::Ipv4Addr,
    pub client_port: u16,
    pub server_ip: std::net::Ipv4Addr,
    pub server_port: u16,
    pub kind: Kind,
    pub version: Option<crate::protocol::ProtocolVersion>,
    pub start: Micros,
    pub end: Micros,
    pub pkts_c2s: u64,
    pub pkts_s2c: u64,
    pub bytes_c2s: u64,
    pub bytes_s2c: u64,
    pub user: Option<String>,
    pub gapped: bool,
}

/// Per-user movement aggregates derived from the filtered paths.
#[derive(Debug, Clone, Copy, Default)]
pub struct UserMovement {
    pub distance_wm: f64,
    pub speed_sum: f64,
    pub retained_steps: u64,
}

impl UserMovement {
    pub fn mean_speed(&self) -> f64 {
        if self.retained_steps > 0 {
            self.speed_sum / self.retained_steps as f64
        } else {
            0.0
        }
    }
}

#[derive(Debug)]
pub struct Analysis {
    pub stats: TraceStats,
    pub dpd: DpdCounts,
    pub universe: PayloadUniverse,
    /// Confirmed connections, canonical order; `conn_rows` aligns with them.
    pub connections: Vec<WowConnection>,
    pub conn_rows: Vec<ConnRow>,
    pub users: Vec<User>,
    pub classes: Vec<UserClass>,
    pub unattributed_connections: u64,
    pub group_records: Vec<GroupRecord>,
    pub group_table: GroupTable,
    pub flow_cdfs: Vec<Cdf>,
    pub durations: DurationStats,
    pub matrix: TimeOfDayMatrix,
    pub move_share: MovementShare,
    pub movement: MovementAnalysis,
    pub distance_cdfs: Vec<Cdf>,
    pub speed_cdf: Cdf,
    pub user_movement: BTreeMap<String, UserMovement>,
    pub summary: Summary,
}

/// Analyze a capture file.
pub fn analyze_path(path: &Path, opts: &AnalyzeOptions) -> Result<Analysis, PipelineError> {
    let mut reader = TraceReader::open(path)?;
    let mut reassembler = Reassembler::new();
    while let Some(pkt) = reader.next_packet()? {
        reassembler.push(&pkt);
    }
    let stats = reader.into_stats();
    Ok(analyze_flows(stats, reassembler, opts))
}

/// Analyze an in-memory packet sequence (tests, replay checks).
pub fn analyze_packets(
    packets: &[PacketRecord],
    stats: TraceStats,
    opts: &AnalyzeOptions,
) -> Analysis {
    let mut reassembler = Reassembler::new();
    for p in packets {
        reassembler.push(p);
    }
    analyze_flows(stats, reassembler, opts)
}

fn analyze_flows(stats: TraceStats, reassembler: Reassembler, opts: &AnalyzeOptions) -> Analysis {
    let flows = reassembler.finish();

    let mut dpd_counts = DpdCounts::default();
    let mut universe = PayloadUniverse::default();
    let mut connections: Vec<WowConnection> = Vec::new();
    for flow in flows {
        dpd_counts.flows += 1;
        if flow.gapped() {
            dpd_counts.gapped_flows += 1;
        }
        universe.packets += flow.c2s.payload_packets() + flow.s2c.payload_packets();
        universe.bytes += flow.c2s.len() as u64 + flow.s2c.len() as u64;
        let outcome = dpd::classify_flow(&flow);
        match outcome.candidate {
            Some(Kind::Logon) => dpd_counts.candidates_logon += 1,
            Some(Kind::Game) => dpd_counts.candidates_game += 1,
            None => {}
        }
        match outcome.state {
            DpdState::Confirmed(kind) => {
                match kind {
                    Kind::Logon => dpd_counts.confirmed_logon += 1,
                    Kind::Game => dpd_counts.confirmed_game += 1,
                }
                connections.push(dissect_connection(flow, kind));
            }
            DpdState::Rejected(reason) => match reason {
                RejectReason::Midstream => dpd_counts.rejected_midstream += 1,
                RejectReason::NoClientPayload => dpd_counts.rejected_no_payload += 1,
                RejectReason::NoSignature => dpd_counts.rejected_no_signature += 1,
                RejectReason::NoServerPayload | RejectReason::ResponderMismatch => {
                    dpd_counts.rejected_candidates += 1;
                }
            },
        }
    }

    let attribution = attribute(&connections);
    let users = attribution.users;
    let conn_user = attribution.conn_user;
    let (group_records, group_table) = classify_groups(&users, &connections);
    let classes = user_classes(&users, &group_records);

    let mut flow_cdfs = Vec::with_capacity(12);
    for kind in [Kind::Logon, Kind::Game] {
        for dir in [Direction::C2s, Direction::S2c] {
            let (size, rate, thr) = flow_stats(&connections, kind, dir);
            flow_cdfs.push(size);
            flow_cdfs.push(rate);
            flow_cdfs.push(thr);
        }
    }

    let durations = duration_cdfs(&connections, &users, &classes);
    let move_share = movement_share(&connections);

    let trace_start = stats.first_ts.unwrap_or(Micros(0));
    let trace_end = stats.last_ts.unwrap_or(trace_start);
    let matrix = time_of_day(&users, &classes, opts.slot_minutes, trace_start, trace_end);

    let conn_tokens: Vec<Option<String>> = conn_user
        .iter()
        .map(|u| u.map(|i| users[i].token.clone()))
        .collect();
    let tracks = avatar_tracks(&connections, &conn_tokens);
    let paths: Vec<analytics::PathStats> = tracks.iter().map(path_stats).collect();
    let movement = teleport_filter(&paths, opts.teleport_factor);

    let mut user_movement: BTreeMap<String, UserMovement> = BTreeMap::new();
    for report in &movement.paths {
        if let Some(token) = &report.user {
            let entry = user_movement.entry(token.clone()).or_default();
            entry.distance_wm += report.filtered_distance;
            entry.speed_sum += report.retained_speed_mean * report.retained_steps as f64;
            entry.retained_steps += report.retained_steps;
        }
    }

    let distance_for = |label: &str, class_filter: Option<crate::session::GroupLabel>| {
        let samples: Vec<f64> = users
            .iter()
            .zip(&classes)
            .filter(|(_, c)| class_filter.map_or(true, |l| c.includes(l)))
            .map(|(u, _)| user_movement.get(&u.token).map_or(0.0, |m| m.distance_wm))
            .collect();
        Cdf::from_samples(label, samples)
    };
    let distance_cdfs = vec![
        distance_for("distance_users_all", None),
        distance_for("distance_users_tiger", Some(crate::session::GroupLabel::Tiger)),
        distance_for("distance_users_lion", Some(crate::session::GroupLabel::Lion)),
    ];
    let speed_cdf = Cdf::from_samples("speed_steps_all", movement.retained_speeds.clone());

    let mut conn_rows = Vec::with_capacity(connections.len());
    let mut unattributed_connections = 0u64;
    for (idx, conn) in connections.iter().enumerate() {
        let token = conn_tokens[idx].clone();
        if token.is_none() {
            unattributed_connections += 1;
        }
        conn_rows.push(ConnRow {
            conn_id: idx as u64,
            client_ip: conn.flow.client.ip,
            client_port: conn.flow.client.port,
            server_ip: conn.flow.server.ip,
            server_port: conn.flow.server.port,
            kind: conn.kind,
            version: conn.version,
            start: conn.flow.first_ts,
            end: conn.flow.last_ts,
            pkts_c2s: conn.flow.c2s.payload_packets(),
            pkts_s2c: conn.flow.s2c.payload_packets(),
            bytes_c2s: conn.flow.c2s.len() as u64,
            bytes_s2c: conn.flow.s2c.len() as u64,
            user: token,
            gapped: conn.flow.gapped(),
        });
    }

    let wow_payload_packets: u64 = conn_rows.iter().map(|r| r.pkts_c2s + r.pkts_s2c).sum();
    let wow_payload_bytes: u64 = conn_rows.iter().map(|r| r.bytes_c2s + r.bytes_s2c).sum();

    let total_distance: f64 = movement.paths.iter().map(|p| p.filtered_distance).sum();
    let avg_playing_hours = if users.is_empty() {
        0.0
    } else {
        users.iter().map(|u| u.playing_us as f64 / 3_600e6).sum::<f64>() / users.len() as f64
    };

    let summary = Summary {
        trace: TraceSummary {
            first_ts: trace_start.to_string(),
            last_ts: trace_end.to_string(),
            duration_s: sig6_f64(trace_end.since(trace_start) as f64 / 1e6),
            non_tcp_packets: stats.non_tcp_packets,
            non_tcp_bytes: stats.non_tcp_bytes,
        },
        dpd: dpd_counts,
        wow: WowTrafficSummary {
            payload_packets: wow_payload_packets,
            payload_bytes: wow_payload_bytes,
            total_payload_packets: universe.packets,
            total_payload_bytes: universe.bytes,
            packet_share: sig6_f64(ratio(wow_payload_packets, universe.packets)),
            byte_share: sig6_f64(ratio(wow_payload_bytes, universe.bytes)),
            movement_packets: move_share.movement_packets,
            client_payload_packets: move_share.client_payload_packets,
            movement_share: sig6_f64(move_share.share()),
        },
        users: UsersSummary {
            count: users.len() as u64,
            unattributed_connections,
            avg_playing_hours: sig6_f64(avg_playing_hours),
            below_0_28h_fraction: sig6_f64(durations.below_short_probe),
            above_2_8h_fraction: sig6_f64(durations.above_long_probe),
        },
        movement: MovementSummary {
            avatars: movement.total_avatars,
            total_distance_wm: sig6_f64(total_distance),
            mean_speed_wm_s: sig6_f64(movement.mean_filtered_speed),
            raw_mean_speed_wm_s: sig6_f64(movement.mean_raw_speed),
            raw_median_speed_wm_s: sig6_f64(movement.raw_median_speed),
            teleport_factor: movement.factor,
            teleport_threshold_wm_s: sig6_f64(movement.threshold.unwrap_or(0.0)),
            affected_avatars: movement.affected_avatars,
            affected_fraction: sig6_f64(movement.affected_fraction),
            removed_steps: movement.removed_steps_total,
        },
        groups: group_table
            .rows
            .iter()
            .map(|r| GroupSummaryRow {
                size: r.bucket.clone(),
                n_ips: r.n_ips,
                n_users: r.n_users,
                volume_share_pct: sig6_f64(r.volume_share_pct),
            })
            .collect(),
    };

    Analysis {
        stats,
        dpd: dpd_counts,
        universe,
        connections,
        conn_rows,
        users,
        classes,
        unattributed_connections,
        group_records,
        group_table,
        flow_cdfs,
        durations,
        matrix,
        move_share,
        movement,
        distance_cdfs,
        speed_cdf,
        user_movement,
        summary,
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
