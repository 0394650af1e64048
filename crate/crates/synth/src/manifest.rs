//! Ground-truth manifest: exact per-user and global quantities computed
//! from the emitted events, used as the oracle when verifying analyzer
//! reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub trace_start_us: u64,
    pub trace_end_us: u64,
    pub users: Vec<ManifestUser>,
    pub groups: Vec<ManifestGroupRow>,
    /// Emission counters keyed by category: wow-logon, wow-game, background,
    /// adversarial.
    pub categories: BTreeMap<String, CategoryCount>,
    pub movement: ManifestMovement,
    pub expected: ExpectedSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestUser {
    pub token: String,
    pub ips: Vec<String>,
    /// Distinct users seen on each IP, aligned with `ips`.
    pub group_sizes: Vec<u32>,
    pub class: String,
    /// Game-connection spans, first to last packet, microseconds.
    pub game_spans_us: Vec<(u64, u64)>,
    pub playing_us: u64,
    pub movement_frames: u64,
    pub raw_distance_wm: f64,
    pub filtered_distance_wm: f64,
    pub mean_speed_wm_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestGroupRow {
    pub size: String,
    pub n_ips: u64,
    pub n_users: u64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CategoryCount {
    /// Every emitted record, handshakes and teardown included.
    pub packets: u64,
    pub payload_packets: u64,
    pub payload_bytes: u64,
    pub frame_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestMovement {
    /// Teleport filter factor the manifest numbers were computed with.
    pub teleport_factor: f64,
    pub total_avatars: u64,
    pub affected_avatars: u64,
    pub affected_fraction: f64,
    pub removed_steps: u64,
    pub raw_median_speed_wm_s: f64,
    pub mean_raw_speed_wm_s: f64,
    pub mean_filtered_speed_wm_s: f64,
}

/// The analyzer-recoverable quantities in one place.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpectedSummary {
    pub user_count: u64,
    pub movement_packets: u64,
    pub client_game_payload_packets: u64,
    pub movement_share: f64,
    pub wow_payload_packets: u64,
    pub wow_payload_bytes: u64,
    pub total_payload_packets: u64,
    pub total_payload_bytes: u64,
    pub wow_packet_share: f64,
    pub wow_byte_share: f64,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let json = std::fs::read_to_string(path)?;
        serde_json::from_str(&json).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
