//! Traffic and behavior statistics: per-kind flow distributions, movement
//! share, playing-time distributions and probes, the time-of-day matrix,
//! avatar path statistics, and teleport outlier filtering.
//!
//! Everything here is a fold over canonically ordered inputs, so repeated
//! runs over the same bytes produce identical numbers.

use std::collections::BTreeMap;

use crate::dissect::WowConnection;
use crate::dpd::Kind;
use crate::protocol::AvatarId;
use crate::session::{User, UserClass};
use crate::time::Micros;

/// Playing-time probe thresholds reported alongside the user CDFs.
pub const SHORT_PLAY_PROBE_S: f64 = 0.28 * 3600.0;
pub const LONG_PLAY_PROBE_S: f64 = 2.8 * 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    C2s,
    S2c,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::C2s => "c2s",
            Direction::S2c => "s2c",
        }
    }
}

/// An empirical distribution: sorted samples with cumulative fractions.
#[derive(Debug, Clone)]
pub struct Cdf {
    pub label: String,
    samples: Vec<f64>,
}

impl Cdf {
    pub fn from_samples(label: impl Into<String>, mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Cdf { label: label.into(), samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(value, cumulative fraction)` pairs; fractions end at 1.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.samples.len() as f64;
        self.samples.iter().enumerate().map(move |(i, &v)| (v, (i + 1) as f64 / n))
    }

    /// Smallest sample with cumulative fraction >= q.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let n = self.samples.len();
        let idx = ((q * n as f64).ceil() as usize).saturating_sub(1).min(n - 1);
        Some(self.samples[idx])
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

fn stream_of(conn: &WowConnection, dir: Direction) -> &crate::capture::reassembly::DirectionalStream {
    match dir {
        Direction::C2s => &conn.flow.c2s,
        Direction::S2c => &conn.flow.s2c,
    }
}

/// Packet-size, packet-rate, and throughput distributions for one connection
/// kind and direction. Sizes pool every distinct payload packet; rate and
/// throughput are per connection, and connections shorter than one second
/// are excluded from both.
pub fn flow_stats(conns: &[WowConnection], kind: Kind, dir: Direction) -> (Cdf, Cdf, Cdf) {
    let mut sizes = Vec::new();
    let mut rates = Vec::new();
    let mut throughputs = Vec::new();
    for conn in conns.iter().filter(|c| c.kind == kind) {
        let stream = stream_of(conn, dir);
        sizes.extend(stream.packets.iter().map(|p| p.len as f64));
        let duration_us = conn.flow.duration_us();
        if duration_us >= 1_000_000 {
            let dur_s = duration_us as f64 / 1e6;
            rates.push(stream.payload_packets() as f64 / dur_s);
            throughputs.push(stream.len() as f64 / dur_s);
        }
    }
    let tag = format!("{}_{}", kind.as_str(), dir.as_str());
    (
        Cdf::from_samples(format!("size_{tag}"), sizes),
        Cdf::from_samples(format!("rate_{tag}"), rates),
        Cdf::from_samples(format!("throughput_{tag}"), throughputs),
    )
}

/// Movement share over confirmed game connections: client packets carrying
/// exactly one movement frame over all client payload packets. Both counts
/// are integers so the ratio is exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MovementShare {
    pub movement_packets: u64,
    pub client_payload_packets: u64,
}

impl MovementShare {
    pub fn share(&self) -> f64 {
        if self.client_payload_packets == 0 {
            0.0
        } else {
            self.movement_packets as f64 / self.client_payload_packets as f64
        }
    }
}

pub fn movement_share(conns: &[WowConnection]) -> MovementShare {
    let mut out = MovementShare::default();
    for conn in conns.iter().filter(|c| c.kind == Kind::Game) {
        out.movement_packets += conn.movement_exact_packets;
        out.client_payload_packets += conn.client_payload_packets();
    }
    out
}

/// Connection-duration and per-user playing-time distributions, the latter
/// split by user class, plus the two playing-time probes.
#[derive(Debug, Clone)]
pub struct DurationStats {
    pub conn_durations: Cdf,
    pub playing_all: Cdf,
    pub playing_tiger: Cdf,
    pub playing_lion: Cdf,
    /// Fraction of users playing less than 0.28 hours.
    pub below_short_probe: f64,
    /// Fraction of users playing more than 2.8 hours.
    pub above_long_probe: f64,
}

pub fn duration_cdfs(
    conns: &[WowConnection],
    users: &[User],
    classes: &[UserClass],
) -> DurationStats {
    let durations: Vec<f64> = conns
        .iter()
        .filter(|c| c.kind == Kind::Game)
        .map(|c| c.flow.duration_us() as f64 / 1e6)
        .collect();
    let playing: Vec<f64> = users.iter().map(|u| u.playing_us as f64 / 1e6).collect();
    let tiger: Vec<f64> = users
        .iter()
        .zip(classes)
        .filter(|(_, c)| c.includes(crate::session::GroupLabel::Tiger))
        .map(|(u, _)| u.playing_us as f64 / 1e6)
        .collect();
    let lion: Vec<f64> = users
        .iter()
        .zip(classes)
        .filter(|(_, c)| c.includes(crate::session::GroupLabel::Lion))
        .map(|(u, _)| u.playing_us as f64 / 1e6)
        .collect();
    let n = playing.len() as f64;
    let below = playing.iter().filter(|&&p| p < SHORT_PLAY_PROBE_S).count() as f64;
    let above = playing.iter().filter(|&&p| p > LONG_PLAY_PROBE_S).count() as f64;
    DurationStats {
        conn_durations: Cdf::from_samples("duration_game_conn", durations),
        playing_all: Cdf::from_samples("playing_users_all", playing),
        playing_tiger: Cdf::from_samples("playing_users_tiger", tiger),
        playing_lion: Cdf::from_samples("playing_users_lion", lion),
        below_short_probe: if n > 0.0 { below / n } else { 0.0 },
        above_long_probe: if n > 0.0 { above / n } else { 0.0 },
    }
}

/// Per-user minutes played per time slot, wrapped at the trace start.
#[derive(Debug, Clone)]
pub struct TimeOfDayMatrix {
    pub slot_minutes: u32,
    pub slots: usize,
    pub trace_start: Micros,
    pub rows: Vec<TodRow>,
    /// Intervals (or parts) outside the trace span, clipped with a warning.
    pub clipped_intervals: u64,
}

#[derive(Debug, Clone)]
pub struct TodRow {
    pub token: String,
    pub class: UserClass,
    /// Exact microseconds of play per slot; serialize as minutes.
    pub cells_us: Vec<u64>,
}

impl TodRow {
    pub fn row_sum_us(&self) -> u64 {
        self.cells_us.iter().sum()
    }
}

/// Clip each playing interval into slots of `slot_minutes`. Column 0 is the
/// slot beginning at the trace start; row order is class, then token.
pub fn time_of_day(
    users: &[User],
    classes: &[UserClass],
    slot_minutes: u32,
    trace_start: Micros,
    trace_end: Micros,
) -> TimeOfDayMatrix {
    let slot_us = slot_minutes as u64 * 60 * 1_000_000;
    let span = trace_end.since(trace_start).max(1);
    let slots = span.div_ceil(slot_us).max(1) as usize;
    let mut clipped = 0u64;

    let mut order: Vec<usize> = (0..users.len()).collect();
    order.sort_by(|&a, &b| (classes[a], &users[a].token).cmp(&(classes[b], &users[b].token)));

    let mut rows = Vec::with_capacity(users.len());
    for idx in order {
        let user = &users[idx];
        let mut cells_us = vec![0u64; slots];
        for &(start, end) in &user.playing_intervals_us {
            let cs = start.max(trace_start.0);
            let ce = end.min(trace_end.0);
            if cs > start || ce < end {
                clipped += 1;
            }
            if ce <= cs {
                continue;
            }
            let mut t = cs;
            while t < ce {
                let slot = ((t - trace_start.0) / slot_us) as usize;
                let slot_end = trace_start.0 + (slot as u64 + 1) * slot_us;
                let piece_end = ce.min(slot_end);
                // Slots past the matrix edge wrap back to the start.
                cells_us[slot % slots] += piece_end - t;
                t = piece_end;
            }
        }
        rows.push(TodRow { token: user.token.clone(), class: classes[idx], cells_us });
    }
    TimeOfDayMatrix { slot_minutes, slots, trace_start, rows, clipped_intervals: clipped }
}

/// One avatar's coordinate trail, samples sorted by capture time.
#[derive(Debug, Clone)]
pub struct AvatarTrack {
    pub avatar: AvatarId,
    /// Token of the user whose connections carried this avatar.
    pub user: Option<String>,
    pub samples: Vec<(Micros, [f64; 3])>,
}

/// Group movement messages by avatar across all game connections.
pub fn avatar_tracks(conns: &[WowConnection], conn_user_token: &[Option<String>]) -> Vec<AvatarTrack> {
    let mut by_avatar: BTreeMap<AvatarId, AvatarTrack> = BTreeMap::new();
    for (conn, token) in conns.iter().zip(conn_user_token) {
        for tm in &conn.movements {
            let entry = by_avatar.entry(tm.msg.avatar).or_insert_with(|| AvatarTrack {
                avatar: tm.msg.avatar,
                user: token.clone(),
                samples: Vec::new(),
            });
            if entry.user.is_none() {
                entry.user = token.clone();
            }
            entry.samples.push((tm.ts, tm.msg.position()));
        }
    }
    let mut tracks: Vec<AvatarTrack> = by_avatar.into_values().collect();
    for track in &mut tracks {
        track.samples.sort_by_key(|&(ts, _)| ts);
    }
    tracks
}

#[derive(Debug, Clone, Copy)]
pub struct PathStep {
    pub distance: f64,
    pub dt_us: u64,
    pub speed: f64,
}

#[derive(Debug, Clone)]
pub struct PathStats {
    pub avatar: AvatarId,
    pub user: Option<String>,
    pub steps: Vec<PathStep>,
    pub total_distance: f64,
}

fn euclid(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let dz = b[2] - a[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Step distances and speeds along one trail. Samples with equal timestamps
/// extend the prior step's distance (its speed is recomputed); a trail with
/// a single sample has no steps and zero distance.
pub fn path_stats(track: &AvatarTrack) -> PathStats {
    let mut steps: Vec<PathStep> = Vec::new();
    let mut total = 0.0f64;
    let mut head_distance = 0.0f64;
    let mut prev: Option<(Micros, [f64; 3])> = None;
    for &(ts, pos) in &track.samples {
        if let Some((pts, ppos)) = prev {
            let d = euclid(ppos, pos);
            let dt = ts - pts;
            if dt == 0 {
                total += d;
                match steps.last_mut() {
                    Some(last) => {
                        last.distance += d;
                        last.speed = last.distance / (last.dt_us as f64 / 1e6);
                    }
                    // Zero-dt hop before any timed step: credit the next one.
                    None => head_distance += d,
                }
            } else {
                let distance = d + head_distance;
                head_distance = 0.0;
                total += distance;
                steps.push(PathStep { distance, dt_us: dt, speed: distance / (dt as f64 / 1e6) });
            }
        }
        prev = Some((ts, pos));
    }
    PathStats { avatar: track.avatar, user: track.user.clone(), steps, total_distance: total }
}

/// Teleport filtering over all avatar paths.
#[derive(Debug, Clone)]
pub struct MovementAnalysis {
    pub factor: f64,
    pub raw_median_speed: f64,
    /// `factor * raw_median_speed`; `None` when there are no steps at all.
    pub threshold: Option<f64>,
    pub paths: Vec<AvatarPathReport>,
    pub total_avatars: u64,
    pub affected_avatars: u64,
    pub affected_fraction: f64,
    pub removed_steps_total: u64,
    /// Unweighted mean over every raw step speed.
    pub mean_raw_speed: f64,
    /// Unweighted mean over retained step speeds.
    pub mean_filtered_speed: f64,
    /// Pooled retained step speeds, avatar-major order (for the speed CDF).
    pub retained_speeds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AvatarPathReport {
    pub avatar: AvatarId,
    pub user: Option<String>,
    pub steps: u64,
    pub raw_distance: f64,
    pub filtered_distance: f64,
    pub removed_steps: u64,
    pub retained_steps: u64,
    pub retained_speed_mean: f64,
}

/// Remove steps whose speed exceeds `factor` times the median of all raw
/// step speeds. The median is robust to the very outliers being detected;
/// with `factor` at infinity this is the identity.
pub fn teleport_filter(paths: &[PathStats], factor: f64) -> MovementAnalysis {
    let mut raw_speeds: Vec<f64> = Vec::new();
    for p in paths {
        raw_speeds.extend(p.steps.iter().map(|s| s.speed));
    }
    let mean_raw_speed = if raw_speeds.is_empty() {
        0.0
    } else {
        raw_speeds.iter().sum::<f64>() / raw_speeds.len() as f64
    };
    let raw_median_speed = median(&mut raw_speeds.clone());
    let threshold = if raw_speeds.is_empty() { None } else { Some(factor * raw_median_speed) };

    let mut reports = Vec::with_capacity(paths.len());
    let mut retained_speeds = Vec::new();
    let mut affected = 0u64;
    let mut removed_total = 0u64;
    for p in paths {
        let mut filtered_distance = 0.0f64;
        let mut removed = 0u64;
        let mut speed_sum = 0.0f64;
        let mut retained = 0u64;
        for step in &p.steps {
            let keep = threshold.map_or(true, |t| step.speed <= t);
            if keep {
                filtered_distance += step.distance;
                speed_sum += step.speed;
                retained += 1;
                retained_speeds.push(step.speed);
            } else {
                removed += 1;
            }
        }
        if removed > 0 {
            affected += 1;
        }
        removed_total += removed;
        reports.push(AvatarPathReport {
            avatar: p.avatar,
            user: p.user.clone(),
            steps: p.steps.len() as u64,
            raw_distance: p.total_distance,
            filtered_distance,
            removed_steps: removed,
            retained_steps: retained,
            retained_speed_mean: if retained > 0 { speed_sum / retained as f64 } else { 0.0 },
        });
    }
    let total_avatars = paths.len() as u64;
    let mean_filtered_speed = if retained_speeds.is_empty() {
        0.0
    } else {
        retained_speeds.iter().sum::<f64>() / retained_speeds.len() as f64
    };
    MovementAnalysis {
        factor,
        raw_median_speed,
        threshold,
        paths: reports,
        total_avatars,
        affected_avatars: affected,
        affected_fraction: if total_avatars > 0 { affected as f64 / total_avatars as f64 } else { 0.0 },
        removed_steps_total: removed_total,
        mean_raw_speed,
        mean_filtered_speed,
        retained_speeds,
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}
