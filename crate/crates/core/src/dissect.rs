//! Per-connection dissection: split confirmed flows into frames and parse
//! the messages the analyzer understands.

use crate::capture::reassembly::ReassembledFlow;
use crate::dpd::Kind;
use crate::protocol::{
    self, GameAuth, LogonInfo, MovementMessage, ProtocolVersion, OPCODE_AUTH_CHALLENGE,
    OPCODE_AUTH_SESSION, OPCODE_MOVEMENT, OPCODE_OBJECT_UPDATE, OPCODE_OPAQUE, OPCODE_PING,
    OPCODE_PONG,
};
use crate::time::Micros;

/// A movement message with the capture timestamp of its first wire byte.
#[derive(Debug, Clone)]
pub struct TimedMovement {
    pub ts: Micros,
    pub msg: MovementMessage,
}

/// Frame and message counters for one connection.
#[derive(Debug, Clone, Default)]
pub struct DissectStats {
    pub frames_c2s: u64,
    pub frames_s2c: u64,
    pub truncated_frames: u64,
    /// A frame size below the minimum stopped parsing at this many streams.
    pub malformed_framing: bool,
    pub unknown_opcodes: u64,
    pub malformed_movements: u64,
    pub movement_frames: u64,
    pub object_updates: u64,
    pub objects_total: u64,
    pub object_malformed: u64,
    pub keepalives: u64,
    pub opaque_frames: u64,
}

/// A confirmed connection with everything the dissector extracted.
#[derive(Debug, Clone)]
pub struct WowConnection {
    pub flow: ReassembledFlow,
    pub kind: Kind,
    pub version: Option<ProtocolVersion>,
    /// Account token from the logon challenge or the game auth message.
    pub token: Option<String>,
    /// Game connection whose auth frame was missing or malformed: kept for
    /// traffic metrics, excluded from per-user metrics.
    pub auth_malformed: bool,
    pub movements: Vec<TimedMovement>,
    /// Client packets whose payload is exactly one valid movement frame.
    pub movement_exact_packets: u64,
    pub stats: DissectStats,
}

impl WowConnection {
    pub fn client_payload_packets(&self) -> u64 {
        self.flow.c2s.payload_packets()
    }
}

/// Dissect a DPD-confirmed flow.
pub fn dissect_connection(flow: ReassembledFlow, kind: Kind) -> WowConnection {
    match kind {
        Kind::Logon => dissect_logon(flow),
        Kind::Game => dissect_game(flow),
    }
}

fn dissect_logon(flow: ReassembledFlow) -> WowConnection {
    let (token, version, malformed) = match protocol::parse_logon_challenge(&flow.c2s.bytes) {
        Ok(LogonInfo { account_token, version, .. }) => (Some(account_token), Some(version), false),
        Err(_) => (None, None, true),
    };
    WowConnection {
        flow,
        kind: Kind::Logon,
        version,
        token,
        auth_malformed: malformed,
        movements: Vec::new(),
        movement_exact_packets: 0,
        stats: DissectStats::default(),
    }
}

fn dissect_game(flow: ReassembledFlow) -> WowConnection {
    let mut stats = DissectStats::default();
    let mut version = None;
    let mut token = None;
    let mut auth_malformed = false;
    let mut movements = Vec::new();
    let mut movement_exact_packets = 0u64;

    let c2s = protocol::split_frames(&flow.c2s.bytes);
    stats.frames_c2s = c2s.frames.len() as u64;
    stats.truncated_frames += c2s.truncated_frames as u64;
    stats.malformed_framing |= c2s.malformed_at.is_some();

    match c2s.frames.first() {
        Some(first) if first.opcode == OPCODE_AUTH_SESSION => {
            match protocol::parse_game_auth(first.body) {
                Ok(GameAuth { build, account_token, .. }) => {
                    version = Some(ProtocolVersion::from_build(build));
                    token = Some(account_token);
                }
                Err(_) => auth_malformed = true,
            }
        }
        _ => auth_malformed = true,
    }

    for frame in &c2s.frames {
        match frame.opcode {
            OPCODE_AUTH_SESSION => {}
            OPCODE_MOVEMENT => {
                stats.movement_frames += 1;
                let parsed = version
                    .ok_or(())
                    .and_then(|v| protocol::parse_movement(frame.body, v).map_err(|_| ()));
                match parsed {
                    Ok(msg) if msg.x.is_finite() && msg.y.is_finite() && msg.z.is_finite() => {
                        let ts = flow.c2s.ts_at(frame.start).unwrap_or(flow.first_ts);
                        if flow.c2s.has_exact_packet(frame.start, frame.wire_len() as u32) {
                            movement_exact_packets += 1;
                        }
                        movements.push(TimedMovement { ts, msg });
                    }
                    _ => stats.malformed_movements += 1,
                }
            }
            OPCODE_PING => stats.keepalives += 1,
            OPCODE_OPAQUE => stats.opaque_frames += 1,
            _ => stats.unknown_opcodes += 1,
        }
    }

    let s2c = protocol::split_frames(&flow.s2c.bytes);
    stats.frames_s2c = s2c.frames.len() as u64;
    stats.truncated_frames += s2c.truncated_frames as u64;
    stats.malformed_framing |= s2c.malformed_at.is_some();
    for frame in &s2c.frames {
        match frame.opcode {
            OPCODE_AUTH_CHALLENGE => {}
            OPCODE_OBJECT_UPDATE => {
                stats.object_updates += 1;
                if let Some(v) = version {
                    let (objects, malformed) = protocol::parse_object_update(frame.body, v);
                    stats.objects_total += objects.len() as u64;
                    if malformed {
                        stats.object_malformed += 1;
                    }
                }
            }
            OPCODE_PONG => stats.keepalives += 1,
            OPCODE_OPAQUE => stats.opaque_frames += 1,
            _ => stats.unknown_opcodes += 1,
        }
    }

    WowConnection {
        flow,
        kind: Kind::Game,
        version,
        token,
        auth_malformed,
        movements,
        movement_exact_packets,
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::reassembly::reassemble;
    use crate::capture::{PacketRecord, TcpFlags};
    use crate::protocol::AvatarId;
    use std::net::Ipv4Addr;

    fn game_packets(frames: &[(Vec<u8>, bool, u64)]) -> Vec<PacketRecord> {
        // (wire bytes, client-to-server, ts) one frame per packet
        let mut seq_c = 1u32;
        let mut seq_s = 1u32;
        frames
            .iter()
            .map(|(bytes, c2s, ts)| {
                let (sp, dp, seq) = if *c2s {
                    let s = seq_c;
                    seq_c += bytes.len() as u32;
                    (5000, 8085, s)
                } else {
                    let s = seq_s;
                    seq_s += bytes.len() as u32;
                    (8085, 5000, s)
                };
                PacketRecord {
                    ts: Micros(*ts),
                    src_ip: if *c2s { Ipv4Addr::new(10, 0, 0, 1) } else { Ipv4Addr::new(10, 9, 0, 1) },
                    dst_ip: if *c2s { Ipv4Addr::new(10, 9, 0, 1) } else { Ipv4Addr::new(10, 0, 0, 1) },
                    src_port: sp,
                    dst_port: dp,
                    tcp_seq: seq,
                    tcp_flags: TcpFlags::from_byte(0x18),
                    payload: bytes.clone(),
                }
            })
            .collect()
    }

    fn movement(avatar: AvatarId, x: f32) -> MovementMessage {
        MovementMessage {
            avatar,
            move_flags: 1,
            move_flags2: 0,
            game_time_ms: 0,
            x,
            y: 0.0,
            z: 0.0,
            orientation: 0.0,
            fall_time_ms: 0,
            pitch: 0.0,
        }
    }

    #[test]
    fn game_connection_dissects_auth_and_movements() {
        let auth = protocol::build_auth_session(8606, "AXKQ", 7);
        let challenge = protocol::build_auth_challenge(9);
        let mv1 = protocol::build_movement(&movement(AvatarId::Short(0x1001), 1.0));
        let mv2 = protocol::build_movement(&movement(AvatarId::Short(0x1001), 2.0));
        let packets = game_packets(&[
            (auth, true, 1_000_000),
            (challenge, false, 1_100_000),
            (mv1, true, 2_000_000),
            (mv2, true, 3_000_000),
        ]);
        let mut flows = reassemble(&packets);
        let conn = dissect_connection(flows.remove(0), Kind::Game);
        assert_eq!(conn.token.as_deref(), Some("AXKQ"));
        assert_eq!(conn.version, Some(ProtocolVersion::A));
        assert!(!conn.auth_malformed);
        assert_eq!(conn.movements.len(), 2);
        assert_eq!(conn.movement_exact_packets, 2);
        assert_eq!(conn.movements[0].ts, Micros(2_000_000));
        assert_eq!(conn.stats.frames_c2s, 3);
        assert_eq!(conn.stats.frames_s2c, 1);
    }

    #[test]
    fn malformed_auth_downgrades_to_unattributed() {
        let mut auth = protocol::build_auth_session(8606, "AXKQ", 7);
        auth.truncate(auth.len() - 2);
        // Fix the frame size so framing still parses, body is short.
        let size = (auth.len() - 2) as u16;
        auth[0..2].copy_from_slice(&size.to_be_bytes());
        let challenge = protocol::build_auth_challenge(9);
        let packets = game_packets(&[(auth, true, 1), (challenge, false, 2)]);
        let mut flows = reassemble(&packets);
        let conn = dissect_connection(flows.remove(0), Kind::Game);
        assert!(conn.auth_malformed);
        assert!(conn.token.is_none());
        assert!(conn.movements.is_empty());
    }

    #[test]
    fn unknown_opcode_counted_not_fatal() {
        let auth = protocol::build_auth_session(8606, "AXKQ", 7);
        let challenge = protocol::build_auth_challenge(9);
        let odd = protocol::build_frame(0x0999, &[1, 2, 3]);
        let mv = protocol::build_movement(&movement(AvatarId::Short(0x1001), 1.0));
        let packets =
            game_packets(&[(auth, true, 1), (challenge, false, 2), (odd, true, 3), (mv, true, 4)]);
        let mut flows = reassemble(&packets);
        let conn = dissect_connection(flows.remove(0), Kind::Game);
        assert_eq!(conn.stats.unknown_opcodes, 1);
        assert_eq!(conn.movements.len(), 1);
    }

    #[test]
    fn logon_connection_carries_token() {
        let challenge = protocol::build_logon_challenge(12340, "B7");
        let response = protocol::build_logon_response(&[0xab; 32]);
        let packets = game_packets(&[(challenge, true, 1), (response, false, 2)]);
        let mut flows = reassemble(&packets);
        let conn = dissect_connection(flows.remove(0), Kind::Logon);
        assert_eq!(conn.token.as_deref(), Some("B7"));
        assert_eq!(conn.version, Some(ProtocolVersion::B));
    }
}
