//! Packet emission: turn a simulation plan into Ethernet/IPv4/TCP frames
//! with proper handshakes, sequence numbers, and checksums, one application
//! message per packet for game traffic, and write the pcap plus manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use mmoscope_core::analytics::{path_stats, teleport_filter, AvatarTrack};
use mmoscope_core::capture::pcap::{LinkType, PcapWriter};
use mmoscope_core::protocol::{
    self, AvatarId, ObjectPos, ProtocolVersion, OPCODE_PING, OPCODE_PONG,
};
use mmoscope_core::time::{merge_intervals, Micros};

use crate::manifest::{
    CategoryCount, ExpectedSummary, Manifest, ManifestGroupRow, ManifestMovement, ManifestUser,
};
use crate::mobility::{Tick, Walker};
use crate::scenario::Scenario;
use crate::simulate::{SimPlan, SimUser};
use crate::stats::sub_rng;
use crate::SynthError;

/// Teleport filter factor the manifest's movement numbers use; matches the
/// analyzer default.
pub const MANIFEST_TELEPORT_FACTOR: f64 = 100.0;

const LOGON_SERVER: (Ipv4Addr, u16) = (Ipv4Addr::new(198, 51, 100, 10), 3724);
const GAME_SERVER_NET: [u8; 3] = [203, 0, 113];
const GAME_PORT: u16 = 8085;

/// Spacing between handshake/teardown packets.
const CTL_STEP_US: u64 = 2_000;
/// The game connection opens this long after the logon connection.
const GAME_OPEN_DELAY_US: u64 = 1_200_000;
/// Movement starts this long after the game connection is established.
const MOVE_WARMUP_US: u64 = 1_000_000;
/// Movement stops this long before session end.
const MOVE_COOLDOWN_US: u64 = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Category {
    Logon,
    Game,
    Background,
    Adversarial,
}

impl Category {
    fn key(self) -> &'static str {
        match self {
            Category::Logon => "wow-logon",
            Category::Game => "wow-game",
            Category::Background => "background",
            Category::Adversarial => "adversarial",
        }
    }
}

struct EmittedPacket {
    ts_us: u64,
    order: u64,
    frame: Vec<u8>,
}

#[derive(Default)]
struct Accounting {
    categories: BTreeMap<&'static str, CategoryCount>,
    movement_packets: u64,
    client_game_payload_packets: u64,
}

impl Accounting {
    fn record(&mut self, category: Category, frame_len: usize, payload_len: usize, c2s: bool, movement: bool) {
        let c = self.categories.entry(category.key()).or_default();
        c.packets += 1;
        c.frame_bytes += frame_len as u64;
        if payload_len > 0 {
            c.payload_packets += 1;
            c.payload_bytes += payload_len as u64;
            if category == Category::Game && c2s {
                self.client_game_payload_packets += 1;
                if movement {
                    self.movement_packets += 1;
                }
            }
        }
    }
}

struct Sink {
    packets: Vec<EmittedPacket>,
    accounting: Accounting,
    order: u64,
}

impl Sink {
    fn new() -> Self {
        Sink { packets: Vec::new(), accounting: Accounting::default(), order: 0 }
    }

    fn push(&mut self, ts_us: u64, frame: Vec<u8>, category: Category, payload_len: usize, c2s: bool, movement: bool) {
        self.accounting.record(category, frame.len(), payload_len, c2s, movement);
        self.packets.push(EmittedPacket { ts_us, order: self.order, frame });
        self.order += 1;
    }
}

/// One synthetic TCP connection with live sequence state.
struct TcpFlow {
    client: (Ipv4Addr, u16),
    server: (Ipv4Addr, u16),
    category: Category,
    seq_c: u32,
    seq_s: u32,
    ident: u16,
    first_ts: Option<u64>,
    last_ts: u64,
}

impl TcpFlow {
    fn new(client: (Ipv4Addr, u16), server: (Ipv4Addr, u16), category: Category, rng: &mut ChaCha12Rng) -> Self {
        TcpFlow {
            client,
            server,
            category,
            seq_c: rng.gen(),
            seq_s: rng.gen(),
            ident: rng.gen(),
            first_ts: None,
            last_ts: 0,
        }
    }

    fn span(&self) -> (u64, u64) {
        (self.first_ts.unwrap_or(0), self.last_ts)
    }

    fn emit(&mut self, sink: &mut Sink, ts_us: u64, c2s: bool, flags: u8, payload: &[u8], movement: bool) {
        let (src, dst, seq, ack) = if c2s {
            (self.client, self.server, self.seq_c, self.seq_s)
        } else {
            (self.server, self.client, self.seq_s, self.seq_c)
        };
        self.ident = self.ident.wrapping_add(1);
        let frame = build_tcp_frame(src, dst, seq, ack, flags, self.ident, payload);
        // SYN and FIN each consume one sequence number.
        let advance = payload.len() as u32
            + (flags & 0x02 != 0) as u32
            + (flags & 0x01 != 0) as u32;
        if c2s {
            self.seq_c = self.seq_c.wrapping_add(advance);
        } else {
            self.seq_s = self.seq_s.wrapping_add(advance);
        }
        if self.first_ts.is_none() {
            self.first_ts = Some(ts_us);
        }
        self.last_ts = self.last_ts.max(ts_us);
        sink.push(ts_us, frame, self.category, payload.len(), c2s, movement);
    }

    /// SYN, SYN|ACK, ACK.
    fn handshake(&mut self, sink: &mut Sink, t0: u64) -> u64 {
        self.emit(sink, t0, true, 0x02, &[], false);
        self.emit(sink, t0 + CTL_STEP_US, false, 0x12, &[], false);
        self.emit(sink, t0 + 2 * CTL_STEP_US, true, 0x10, &[], false);
        t0 + 2 * CTL_STEP_US
    }

    fn send(&mut self, sink: &mut Sink, ts_us: u64, c2s: bool, payload: &[u8], movement: bool) {
        self.emit(sink, ts_us, c2s, 0x18, payload, movement);
    }

    /// FIN|ACK exchange from both sides.
    fn close(&mut self, sink: &mut Sink, t0: u64) -> u64 {
        self.emit(sink, t0, true, 0x11, &[], false);
        self.emit(sink, t0 + CTL_STEP_US, false, 0x10, &[], false);
        self.emit(sink, t0 + 2 * CTL_STEP_US, false, 0x11, &[], false);
        self.emit(sink, t0 + 3 * CTL_STEP_US, true, 0x10, &[], false);
        t0 + 3 * CTL_STEP_US
    }
}

/// Emit the whole scenario and write pcap + manifest data.
pub fn emit_pcap(
    scenario: &Scenario,
    seed: u64,
    plan: &SimPlan,
    pcap_path: &Path,
) -> Result<Manifest, SynthError> {
    let mut sink = Sink::new();
    let mut ports: BTreeMap<Ipv4Addr, u16> = BTreeMap::new();
    let next_port = |ip: Ipv4Addr, ports: &mut BTreeMap<Ipv4Addr, u16>| {
        let p = ports.entry(ip).or_insert(30_000);
        let port = *p;
        *p += 1;
        port
    };

    let tickp_us = if scenario.movement.movement_hz > 0.0 {
        (1e6 / scenario.movement.movement_hz).round() as u64
    } else {
        1_000_000
    };

    let mut user_spans: Vec<Vec<(u64, u64)>> = vec![Vec::new(); plan.users.len()];
    let mut user_movements: Vec<Vec<(u64, protocol::MovementMessage)>> =
        vec![Vec::new(); plan.users.len()];

    for user in &plan.users {
        let mut flow_rng = sub_rng(seed, 0x0f10_0000 + user.idx as u64);
        let mut walker = Walker::new(
            sub_rng(seed, 0x0a00_0000 + user.idx as u64),
            scenario.movement.walk_speed_wm_s,
            scenario.movement.movement_hz,
            user.pause_s,
            scenario.movement.teleport_speed_factor,
            user.teleporter,
        );
        let mut keepalive_seq = 0u32;
        for session in &user.sessions {
            let t0 = session.start_us;

            // Logon connection: challenge, response, quick close.
            let mut logon = TcpFlow::new(
                (session.ip, next_port(session.ip, &mut ports)),
                LOGON_SERVER,
                Category::Logon,
                &mut flow_rng,
            );
            let est = logon.handshake(&mut sink, t0);
            logon.send(
                &mut sink,
                est + 2_000,
                true,
                &protocol::build_logon_challenge(user.build, &user.token),
                false,
            );
            let mut server_token = [0u8; 32];
            flow_rng.fill(&mut server_token);
            logon.send(
                &mut sink,
                est + 1_002_000,
                false,
                &protocol::build_logon_response(&server_token),
                false,
            );
            logon.close(&mut sink, est + 1_010_000);

            // Game connection: auth exchange, then gameplay until the end.
            let gsrv_ip = Ipv4Addr::new(
                GAME_SERVER_NET[0],
                GAME_SERVER_NET[1],
                GAME_SERVER_NET[2],
                1 + (user.idx % 8) as u8,
            );
            let mut game = TcpFlow::new(
                (session.ip, next_port(session.ip, &mut ports)),
                (gsrv_ip, GAME_PORT),
                Category::Game,
                &mut flow_rng,
            );
            let est = game.handshake(&mut sink, t0 + GAME_OPEN_DELAY_US);
            game.send(
                &mut sink,
                est + 2_000,
                true,
                &protocol::build_auth_session(user.build, &user.token, flow_rng.gen()),
                false,
            );
            game.send(
                &mut sink,
                est + 12_000,
                false,
                &protocol::build_auth_challenge(flow_rng.gen()),
                false,
            );

            let move_start = est + MOVE_WARMUP_US;
            let move_end = session.end_us.saturating_sub(MOVE_COOLDOWN_US);

            // The first sample reports the avatar's position unchanged.
            if scenario.movement.movement_hz > 0.0 && move_start < move_end {
                let pos = walker.emit_current();
                let msg = movement_message(user, &walker, pos, move_start);
                game.send(&mut sink, move_start, true, &protocol::build_movement(&msg), true);
                user_movements[user.idx as usize].push((move_start, msg));

                let mut t = move_start + tickp_us;
                while t <= move_end {
                    if let Tick::Emit { pos, .. } = walker.tick() {
                        let msg = movement_message(user, &walker, pos, t);
                        game.send(&mut sink, t, true, &protocol::build_movement(&msg), true);
                        user_movements[user.idx as usize].push((t, msg));
                    }
                    t += tickp_us;
                }
            }

            // Keep-alives, server object updates, and opaque chatter.
            let mut t = est + 2 * tickp_us + tickp_us / 2;
            let mut opaque_toggle = false;
            while t <= move_end {
                game.send(&mut sink, t, true, &protocol::build_keepalive(OPCODE_PING, keepalive_seq), false);
                game.send(
                    &mut sink,
                    t + 30_000,
                    false,
                    &protocol::build_keepalive(OPCODE_PONG, keepalive_seq),
                    false,
                );
                keepalive_seq += 1;
                // Every third keep-alive round adds an opaque message.
                if keepalive_seq % 3 == 0 {
                    let len = flow_rng.gen_range(16..=64);
                    let mut body = vec![0u8; len];
                    flow_rng.fill(&mut body[..]);
                    game.send(&mut sink, t + 61_000, opaque_toggle, &protocol::build_opaque(&body), false);
                    opaque_toggle = !opaque_toggle;
                }
                t += 5 * tickp_us;
            }
            let mut t = est + tickp_us + tickp_us / 5;
            while t <= move_end {
                let count = flow_rng.gen_range(0..=6u32);
                let objects: Vec<ObjectPos> = (0..count)
                    .map(|k| ObjectPos {
                        id: object_id(user.version, user.idx, k),
                        x: flow_rng.gen_range(0.0..10_000.0f32),
                        y: flow_rng.gen_range(0.0..10_000.0f32),
                        z: flow_rng.gen_range(0.0..100.0f32),
                    })
                    .collect();
                game.send(&mut sink, t, false, &protocol::build_object_update(&objects), false);
                t += 2 * tickp_us;
            }

            game.close(&mut sink, session.end_us);
            user_spans[user.idx as usize].push(game.span());
        }
    }

    emit_background(scenario, seed, plan, &mut sink);

    // Stable global order: time, then emission sequence.
    sink.packets.sort_by_key(|p| (p.ts_us, p.order));

    let file = std::fs::File::create(pcap_path)?;
    let mut writer = PcapWriter::new(std::io::BufWriter::with_capacity(1 << 20, file), LinkType::Ethernet)?;
    let mut trace_end_us = plan.trace_start_us;
    for p in &sink.packets {
        writer.write_record(Micros(p.ts_us), &p.frame)?;
        trace_end_us = trace_end_us.max(p.ts_us);
    }
    writer.flush()?;

    Ok(build_manifest(seed, plan, sink, user_spans, user_movements, trace_end_us))
}

fn movement_message(
    user: &SimUser,
    walker: &Walker,
    pos: [f64; 3],
    ts_us: u64,
) -> protocol::MovementMessage {
    protocol::MovementMessage {
        avatar: user.avatar,
        move_flags: 0x0000_0001,
        move_flags2: 0,
        game_time_ms: (ts_us / 1000) as u32,
        x: pos[0] as f32,
        y: pos[1] as f32,
        z: pos[2] as f32,
        orientation: walker.heading as f32,
        fall_time_ms: 0,
        pitch: 0.0,
    }
}

fn object_id(version: ProtocolVersion, user_idx: u32, k: u32) -> AvatarId {
    match version {
        ProtocolVersion::A => AvatarId::Short(0x00a0_0000 + user_idx * 16 + k),
        ProtocolVersion::B => AvatarId::Guid { low: 0x9000 + user_idx * 16 + k, high: 1, realm: 1 },
    }
}

fn emit_background(scenario: &Scenario, seed: u64, plan: &SimPlan, sink: &mut Sink) {
    let bg = &scenario.background;
    if bg.flow_count == 0 {
        return;
    }
    let span_us = plan.trace_end_us - plan.trace_start_us;
    let usable = span_us.saturating_sub(30_000_000).max(1);
    let budget_per_flow = (bg.byte_volume_target / bg.flow_count as u64).max(64);
    for i in 0..bg.flow_count {
        let adversarial = i < bg.adversarial_count;
        let mut rng = sub_rng(seed, 0x0b00_0000 + i as u64);
        let client_ip = Ipv4Addr::new(172, 16, 1 + (i / 200) as u8, 1 + (i % 200) as u8);
        let server_ip = Ipv4Addr::new(192, 0, 2, 1 + (i % 200) as u8);
        let client = (client_ip, 20_000 + (i % 20_000) as u16);
        let server = (server_ip, if i % 2 == 0 { 443 } else { 80 });
        let category = if adversarial { Category::Adversarial } else { Category::Background };
        let mut flow = TcpFlow::new(client, server, category, &mut rng);

        let t0 = plan.trace_start_us
            + 2_000_000
            + ((i as u64 * usable) / bg.flow_count as u64).min(usable - 1);
        let mut t = flow.handshake(sink, t0) + rng.gen_range(5_000..50_000);

        let mut remaining = budget_per_flow as i64;
        let mut c2s = true;
        let mut first_c2s = true;
        let mut first_s2c = true;
        // Both directions always carry at least one payload packet, so
        // step-two evidence exists for every flow.
        while remaining > 0 || first_c2s || first_s2c {
            let size = rng.gen_range(200..=1400usize).min(remaining.max(64) as usize);
            let mut payload = vec![0u8; size.max(8)];
            rng.fill(&mut payload[..]);
            if c2s && first_c2s {
                shape_initiator(&mut payload, adversarial, i, &mut rng);
                first_c2s = false;
            } else if !c2s && first_s2c {
                shape_responder(&mut payload, adversarial, i);
                first_s2c = false;
            }
            remaining -= payload.len() as i64;
            flow.send(sink, t, c2s, &payload, false);
            c2s = !c2s;
            t += rng.gen_range(20_000..400_000);
        }
        flow.close(sink, t);
    }
}

/// First client payload: either a deliberate step-one signature match
/// (adversarial) or bytes guarded against accidental matches.
fn shape_initiator(payload: &mut [u8], adversarial: bool, flow_idx: u32, rng: &mut ChaCha12Rng) {
    if adversarial {
        if flow_idx % 2 == 0 {
            // Logon signature: 0x00 ... "WoW" at offsets 4..7.
            payload[0] = 0x00;
            payload[4..7].copy_from_slice(b"WoW");
            // Keep offsets 2..4 away from the game signature.
            if payload[2] == 0xed && payload[3] == 0x01 {
                payload[2] = 0x10;
            }
        } else {
            // Game signature at offsets 2..4, not the logon one.
            payload[2] = 0xed;
            payload[3] = 0x01;
            payload[0] = 0x47;
        }
    } else {
        payload[0] = 0x47; // never 0x00
        if payload[2] == 0xed && payload[3] == 0x01 {
            payload[2] = rng.gen_range(0x02..=0x7f);
        }
    }
}

/// First server payload: for adversarial flows it must violate the step-two
/// signature of whatever step one matched.
fn shape_responder(payload: &mut [u8], adversarial: bool, flow_idx: u32) {
    if adversarial {
        if flow_idx % 2 == 0 {
            payload[0] = 0x5a; // logon confirm needs 0x00
        } else {
            payload[2] = 0xed; // game confirm needs 0xec 0x01
            payload[3] = 0x01;
        }
    } else {
        payload[0] = 0x48;
        if payload[2] == 0xec && payload[3] == 0x01 {
            payload[2] = 0x11;
        }
    }
}

fn build_manifest(
    seed: u64,
    plan: &SimPlan,
    sink: Sink,
    user_spans: Vec<Vec<(u64, u64)>>,
    user_movements: Vec<Vec<(u64, protocol::MovementMessage)>>,
    trace_end_us: u64,
) -> Manifest {
    // Group truth from actual session IPs.
    let mut tokens_by_ip: BTreeMap<Ipv4Addr, BTreeSet<String>> = BTreeMap::new();
    for user in &plan.users {
        for session in &user.sessions {
            tokens_by_ip.entry(session.ip).or_default().insert(user.token.clone());
        }
    }
    let mut rows: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for tokens in tokens_by_ip.values() {
        let size = tokens.len() as u64;
        let bucket = if size <= 4 { size.to_string() } else { ">4".to_string() };
        let row = rows.entry(bucket).or_default();
        row.0 += 1;
        row.1 += size;
    }
    let groups: Vec<ManifestGroupRow> = ["1", "2", "3", "4", ">4"]
        .iter()
        .map(|&bucket| {
            let (n_ips, n_users) = rows.get(bucket).copied().unwrap_or_default();
            ManifestGroupRow { size: bucket.to_string(), n_ips, n_users }
        })
        .collect();

    // Movement ground truth through the same path math the analyzer uses.
    let tracks: Vec<AvatarTrack> = plan
        .users
        .iter()
        .filter(|u| !user_movements[u.idx as usize].is_empty())
        .map(|u| AvatarTrack {
            avatar: u.avatar,
            user: Some(u.token.clone()),
            samples: user_movements[u.idx as usize]
                .iter()
                .map(|(ts, m)| (Micros(*ts), m.position()))
                .collect(),
        })
        .collect();
    let paths: Vec<_> = tracks.iter().map(path_stats).collect();
    let movement_analysis = teleport_filter(&paths, MANIFEST_TELEPORT_FACTOR);
    let per_user_movement: BTreeMap<String, (f64, f64, f64, u64)> = movement_analysis
        .paths
        .iter()
        .map(|p| {
            (
                p.user.clone().unwrap_or_default(),
                (p.raw_distance, p.filtered_distance, p.retained_speed_mean, p.retained_steps),
            )
        })
        .collect();

    let users: Vec<ManifestUser> = plan
        .users
        .iter()
        .map(|u| {
            let ips: BTreeSet<Ipv4Addr> = u.sessions.iter().map(|s| s.ip).collect();
            let group_sizes: Vec<u32> =
                ips.iter().map(|ip| tokens_by_ip[ip].len() as u32).collect();
            let labels: BTreeSet<bool> =
                group_sizes.iter().map(|&s| s == 1).collect();
            let class = if labels.len() == 2 {
                "both"
            } else if labels.contains(&true) {
                "tiger"
            } else {
                "lion"
            };
            let spans = merge_intervals(&user_spans[u.idx as usize]);
            let playing_us = spans.iter().map(|(s, e)| e - s).sum();
            let (raw_d, filt_d, speed_mean, _) = per_user_movement
                .get(&u.token)
                .copied()
                .unwrap_or((0.0, 0.0, 0.0, 0));
            ManifestUser {
                token: u.token.clone(),
                ips: ips.iter().map(|ip| ip.to_string()).collect(),
                group_sizes,
                class: class.to_string(),
                game_spans_us: user_spans[u.idx as usize].clone(),
                playing_us,
                movement_frames: user_movements[u.idx as usize].len() as u64,
                raw_distance_wm: raw_d,
                filtered_distance_wm: filt_d,
                mean_speed_wm_s: speed_mean,
            }
        })
        .collect();

    let cat = |key: &str| sink.accounting.categories.get(key).copied().unwrap_or_default();
    let logon = cat("wow-logon");
    let game = cat("wow-game");
    let background = cat("background");
    let adversarial = cat("adversarial");
    let wow_payload_packets = logon.payload_packets + game.payload_packets;
    let wow_payload_bytes = logon.payload_bytes + game.payload_bytes;
    let total_payload_packets =
        wow_payload_packets + background.payload_packets + adversarial.payload_packets;
    let total_payload_bytes = wow_payload_bytes + background.payload_bytes + adversarial.payload_bytes;
    let movement_packets = sink.accounting.movement_packets;
    let client_game_payload_packets = sink.accounting.client_game_payload_packets;

    let categories: BTreeMap<String, CategoryCount> = sink
        .accounting
        .categories
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();

    Manifest {
        seed,
        trace_start_us: plan.trace_start_us,
        trace_end_us,
        users,
        groups,
        categories,
        movement: ManifestMovement {
            teleport_factor: MANIFEST_TELEPORT_FACTOR,
            total_avatars: movement_analysis.total_avatars,
            affected_avatars: movement_analysis.affected_avatars,
            affected_fraction: movement_analysis.affected_fraction,
            removed_steps: movement_analysis.removed_steps_total,
            raw_median_speed_wm_s: movement_analysis.raw_median_speed,
            mean_raw_speed_wm_s: movement_analysis.mean_raw_speed,
            mean_filtered_speed_wm_s: movement_analysis.mean_filtered_speed,
        },
        expected: ExpectedSummary {
            user_count: plan.users.len() as u64,
            movement_packets,
            client_game_payload_packets,
            movement_share: if client_game_payload_packets > 0 {
                movement_packets as f64 / client_game_payload_packets as f64
            } else {
                0.0
            },
            wow_payload_packets,
            wow_payload_bytes,
            total_payload_packets,
            total_payload_bytes,
            wow_packet_share: share(wow_payload_packets, total_payload_packets),
            wow_byte_share: share(wow_payload_bytes, total_payload_bytes),
        },
    }
}

fn share(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

// ---- frame construction ----------------------------------------------------

fn build_tcp_frame(
    src: (Ipv4Addr, u16),
    dst: (Ipv4Addr, u16),
    seq: u32,
    ack: u32,
    flags: u8,
    ident: u16,
    payload: &[u8],
) -> Vec<u8> {
    let mut tcp = Vec::with_capacity(20 + payload.len());
    tcp.extend_from_slice(&src.1.to_be_bytes());
    tcp.extend_from_slice(&dst.1.to_be_bytes());
    tcp.extend_from_slice(&seq.to_be_bytes());
    tcp.extend_from_slice(&ack.to_be_bytes());
    tcp.push(0x50);
    tcp.push(flags);
    tcp.extend_from_slice(&8192u16.to_be_bytes());
    tcp.extend_from_slice(&[0, 0]); // checksum placeholder
    tcp.extend_from_slice(&[0, 0]); // urgent pointer
    tcp.extend_from_slice(payload);
    let tcp_ck = tcp_checksum(src.0, dst.0, &tcp);
    tcp[16..18].copy_from_slice(&tcp_ck.to_be_bytes());

    let total_len = 20 + tcp.len();
    let mut ip = Vec::with_capacity(total_len);
    ip.push(0x45);
    ip.push(0);
    ip.extend_from_slice(&(total_len as u16).to_be_bytes());
    ip.extend_from_slice(&ident.to_be_bytes());
    ip.extend_from_slice(&0x4000u16.to_be_bytes()); // don't fragment
    ip.push(64);
    ip.push(6);
    ip.extend_from_slice(&[0, 0]); // checksum placeholder
    ip.extend_from_slice(&src.0.octets());
    ip.extend_from_slice(&dst.0.octets());
    let ip_ck = ones_complement_sum(&ip);
    ip[10..12].copy_from_slice(&ip_ck.to_be_bytes());
    ip.extend_from_slice(&tcp);

    let mut frame = Vec::with_capacity(14 + ip.len());
    frame.extend_from_slice(&mac_for(dst.0));
    frame.extend_from_slice(&mac_for(src.0));
    frame.extend_from_slice(&0x0800u16.to_be_bytes());
    frame.extend_from_slice(&ip);
    frame
}

fn mac_for(ip: Ipv4Addr) -> [u8; 6] {
    let o = ip.octets();
    [0x02, 0x00, o[0], o[1], o[2], o[3]]
}

fn ones_complement_sum(bytes: &[u8]) -> u16 {
    let mut sum = 0u32;
    let mut chunks = bytes.chunks_exact(2);
    for c in &mut chunks {
        sum += u16::from_be_bytes([c[0], c[1]]) as u32;
    }
    if let [last] = chunks.remainder() {
        sum += (*last as u32) << 8;
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

fn tcp_checksum(src: Ipv4Addr, dst: Ipv4Addr, tcp: &[u8]) -> u16 {
    let mut pseudo = Vec::with_capacity(12 + tcp.len());
    pseudo.extend_from_slice(&src.octets());
    pseudo.extend_from_slice(&dst.octets());
    pseudo.push(0);
    pseudo.push(6);
    pseudo.extend_from_slice(&(tcp.len() as u16).to_be_bytes());
    pseudo.extend_from_slice(tcp);
    ones_complement_sum(&pseudo)
}
