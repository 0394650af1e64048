//! The WoW-like wire format: frame layout, opcodes, and message codecs.
//!
//! The real game protocol is proprietary and partly encrypted; this module
//! defines a documented stand-in whose on-the-wire observables match what an
//! analyzer can see: the logon/game signature bytes, 43-byte (version A) and
//! 51-byte (version B) client movement frames that differ only in how the
//! avatar id is embedded, variable-size multi-object server updates, and an
//! opaque opcode standing in for encrypted messages.
//!
//! Game-connection framing: `u16` big-endian size (bytes following the size
//! field), `u16` little-endian opcode, body. The auth opcodes 0x01ED/0x01EC
//! therefore put the literal bytes `ED 01` / `EC 01` at stream offsets 2..4,
//! which is exactly what the detection signatures key on. Logon connections
//! carry their own small header-based exchange instead of game frames.

use std::fmt;

use serde::{Deserialize, Serialize};

use thiserror::Error;

/// Client game-session authentication (client to server, first game frame).
pub const OPCODE_AUTH_SESSION: u16 = 0x01ed;
/// Server auth challenge (server to client, first game frame).
pub const OPCODE_AUTH_CHALLENGE: u16 = 0x01ec;
/// Avatar coordinate update (client to server).
pub const OPCODE_MOVEMENT: u16 = 0x01ee;
/// Multi-object coordinate update (server to client).
pub const OPCODE_OBJECT_UPDATE: u16 = 0x01ef;
/// Keep-alive ping (client to server).
pub const OPCODE_PING: u16 = 0x01f1;
/// Keep-alive pong (server to client).
pub const OPCODE_PONG: u16 = 0x01f2;
/// Opaque message; stands in for the protocol's encrypted payloads.
pub const OPCODE_OPAQUE: u16 = 0x01f5;

/// Opcodes the dissector understands; anything else counts as unknown.
pub const KNOWN_OPCODES: [u16; 7] = [
    OPCODE_AUTH_SESSION,
    OPCODE_AUTH_CHALLENGE,
    OPCODE_MOVEMENT,
    OPCODE_OBJECT_UPDATE,
    OPCODE_PING,
    OPCODE_PONG,
    OPCODE_OPAQUE,
];

/// Highest client build that speaks version A (the 2.4.3-era protocol).
pub const MAX_VERSION_A_BUILD: u16 = 8606;

/// Canonical client builds for the two protocol generations.
pub const BUILD_VERSION_A: u16 = 8606;
pub const BUILD_VERSION_B: u16 = 12340;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProtocolVersion {
    /// 2.4.3-era: 4-byte avatar ids, 43-byte movement frames.
    A,
    /// 3.x.y-era: 12-byte avatar ids, 51-byte movement frames.
    B,
}

impl ProtocolVersion {
    pub fn from_build(build: u16) -> Self {
        if build <= MAX_VERSION_A_BUILD {
            ProtocolVersion::A
        } else {
            ProtocolVersion::B
        }
    }

    /// Width of an object/avatar identifier on the wire.
    pub fn id_width(self) -> usize {
        match self {
            ProtocolVersion::A => 4,
            ProtocolVersion::B => 12,
        }
    }

    /// Movement frame body length (everything after size+opcode).
    pub fn movement_body_len(self) -> usize {
        // id + flags(4) + flags2(2) + game_time(4) + xyz(12) + orientation(4)
        // + fall_time(4) + pitch(4) + reserved(1)
        self.id_width() + 35
    }

    /// Total movement frame length on the wire: 43 (A) or 51 (B).
    pub fn movement_wire_len(self) -> usize {
        4 + self.movement_body_len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolVersion::A => "A",
            ProtocolVersion::B => "B",
        }
    }
}

/// Avatar/object identifier; version A uses a bare 32-bit id, version B a
/// 96-bit guid of (low, high, realm) words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AvatarId {
    Short(u32),
    Guid { low: u32, high: u32, realm: u32 },
}

impl AvatarId {
    pub fn version(self) -> ProtocolVersion {
        match self {
            AvatarId::Short(_) => ProtocolVersion::A,
            AvatarId::Guid { .. } => ProtocolVersion::B,
        }
    }

    fn encode_into(self, out: &mut Vec<u8>) {
        match self {
            AvatarId::Short(id) => out.extend_from_slice(&id.to_le_bytes()),
            AvatarId::Guid { low, high, realm } => {
                out.extend_from_slice(&low.to_le_bytes());
                out.extend_from_slice(&high.to_le_bytes());
                out.extend_from_slice(&realm.to_le_bytes());
            }
        }
    }

    fn decode(version: ProtocolVersion, bytes: &[u8]) -> AvatarId {
        match version {
            ProtocolVersion::A => AvatarId::Short(le_u32(&bytes[0..4])),
            ProtocolVersion::B => AvatarId::Guid {
                low: le_u32(&bytes[0..4]),
                high: le_u32(&bytes[4..8]),
                realm: le_u32(&bytes[8..12]),
            },
        }
    }
}

impl fmt::Display for AvatarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AvatarId::Short(id) => write!(f, "a{id:08x}"),
            AvatarId::Guid { low, high, realm } => write!(f, "g{realm:04x}-{high:08x}-{low:08x}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("frame size field {0} below minimum 2")]
    FrameSizeTooSmall(u16),
    #[error("logon challenge malformed: {0}")]
    MalformedLogon(&'static str),
    #[error("auth session malformed: {0}")]
    MalformedAuth(&'static str),
    #[error("movement body length {got} does not match version {version:?} ({expected})")]
    MalformedMovement { version: ProtocolVersion, expected: usize, got: usize },
}

/// A parsed game frame borrowed from its stream.
#[derive(Debug, Clone, Copy)]
pub struct GameFrame<'a> {
    /// Value of the size field: opcode bytes plus body length.
    pub size: u16,
    pub opcode: u16,
    pub body: &'a [u8],
    /// Stream offset of the frame's first byte (the size field).
    pub start: u64,
}

impl GameFrame<'_> {
    /// Whole frame length on the wire.
    pub fn wire_len(&self) -> usize {
        2 + self.size as usize
    }
}

/// Result of partitioning a directional stream into frames.
#[derive(Debug, Default)]
pub struct FrameSplit<'a> {
    pub frames: Vec<GameFrame<'a>>,
    /// Bytes consumed by complete frames.
    pub consumed: u64,
    /// A trailing partial frame was dropped.
    pub truncated_frames: u32,
    /// Offset at which an impossible size field stopped parsing.
    pub malformed_at: Option<u64>,
}

/// Split a game stream prefix into frames. A trailing partial frame (gapped
/// or truncated flow) is dropped and counted; a size field below the minimum
/// marks the stream malformed from that offset onward and parsing stops.
pub fn split_frames(stream: &[u8]) -> FrameSplit<'_> {
    let mut out = FrameSplit::default();
    let mut off = 0usize;
    while stream.len() - off >= 2 {
        let size = u16::from_be_bytes([stream[off], stream[off + 1]]);
        if size < 2 {
            out.malformed_at = Some(off as u64);
            return out;
        }
        let total = 2 + size as usize;
        if stream.len() - off < total {
            out.truncated_frames += 1;
            return out;
        }
        let opcode = u16::from_le_bytes([stream[off + 2], stream[off + 3]]);
        out.frames.push(GameFrame {
            size,
            opcode,
            body: &stream[off + 4..off + total],
            start: off as u64,
        });
        off += total;
        out.consumed = off as u64;
    }
    if stream.len() - off > 0 {
        out.truncated_frames += 1;
    }
    out
}

/// Build one game frame: size (BE), opcode (LE), body.
pub fn build_frame(opcode: u16, body: &[u8]) -> Vec<u8> {
    let size = (2 + body.len()) as u16;
    let mut out = Vec::with_capacity(2 + size as usize);
    out.extend_from_slice(&size.to_be_bytes());
    out.extend_from_slice(&opcode.to_le_bytes());
    out.extend_from_slice(body);
    out
}

// ---- logon connection messages -------------------------------------------

/// Parsed client logon challenge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogonInfo {
    pub account_token: String,
    pub build: u16,
    pub version: ProtocolVersion,
}

/// Client logon challenge layout: opcode 0x00, reserved, u16 LE remaining
/// size, "WoW", major, minor, patch, u16 LE build, u8 account length,
/// account bytes. Byte 0 and "WoW" at offsets 4..7 form the detection
/// signature.
pub fn build_logon_challenge(build: u16, account: &str) -> Vec<u8> {
    let version = ProtocolVersion::from_build(build);
    let (major, minor, patch) = match version {
        ProtocolVersion::A => (2, 4, 3),
        ProtocolVersion::B => (3, 3, 5),
    };
    let mut out = Vec::with_capacity(13 + account.len());
    out.push(0x00);
    out.push(0x00);
    out.extend_from_slice(&((9 + account.len()) as u16).to_le_bytes());
    out.extend_from_slice(b"WoW");
    out.push(major);
    out.push(minor);
    out.push(patch);
    out.extend_from_slice(&build.to_le_bytes());
    out.push(account.len() as u8);
    out.extend_from_slice(account.as_bytes());
    out
}

pub fn parse_logon_challenge(bytes: &[u8]) -> Result<LogonInfo, ProtocolError> {
    if bytes.len() < 13 {
        return Err(ProtocolError::MalformedLogon("shorter than fixed header"));
    }
    if bytes[0] != 0x00 || &bytes[4..7] != b"WoW" {
        return Err(ProtocolError::MalformedLogon("signature bytes missing"));
    }
    let build = u16::from_le_bytes([bytes[10], bytes[11]]);
    let account_len = bytes[12] as usize;
    if account_len == 0 {
        return Err(ProtocolError::MalformedLogon("empty account"));
    }
    if bytes.len() < 13 + account_len {
        return Err(ProtocolError::MalformedLogon("account runs past buffer"));
    }
    let account_token = String::from_utf8_lossy(&bytes[13..13 + account_len]).into_owned();
    Ok(LogonInfo { account_token, build, version: ProtocolVersion::from_build(build) })
}

/// Server logon response: 0x00 status header plus an opaque 32-byte token.
/// The leading zero byte is the responder signature.
pub fn build_logon_response(server_token: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(34);
    out.push(0x00);
    out.push(0x00);
    out.extend_from_slice(server_token);
    out
}

// ---- game connection messages --------------------------------------------

/// Parsed client auth-session frame body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameAuth {
    pub build: u16,
    pub account_token: String,
    pub client_seed: u32,
}

/// Auth session body: u16 LE build, u8 account length, account bytes,
/// u32 LE client seed.
pub fn build_auth_session(build: u16, account: &str, client_seed: u32) -> Vec<u8> {
    let mut body = Vec::with_capacity(7 + account.len());
    body.extend_from_slice(&build.to_le_bytes());
    body.push(account.len() as u8);
    body.extend_from_slice(account.as_bytes());
    body.extend_from_slice(&client_seed.to_le_bytes());
    build_frame(OPCODE_AUTH_SESSION, &body)
}

pub fn parse_game_auth(body: &[u8]) -> Result<GameAuth, ProtocolError> {
    if body.len() < 3 {
        return Err(ProtocolError::MalformedAuth("shorter than fixed header"));
    }
    let build = u16::from_le_bytes([body[0], body[1]]);
    let account_len = body[2] as usize;
    if account_len == 0 {
        return Err(ProtocolError::MalformedAuth("empty account"));
    }
    if body.len() < 3 + account_len + 4 {
        return Err(ProtocolError::MalformedAuth("truncated before seed"));
    }
    let account_token = String::from_utf8_lossy(&body[3..3 + account_len]).into_owned();
    let client_seed = le_u32(&body[3 + account_len..3 + account_len + 4]);
    Ok(GameAuth { build, account_token, client_seed })
}

/// Server auth challenge: u32 LE server seed. Its frame bytes `EC 01` at
/// offsets 2..4 are the game responder signature.
pub fn build_auth_challenge(server_seed: u32) -> Vec<u8> {
    build_frame(OPCODE_AUTH_CHALLENGE, &server_seed.to_le_bytes())
}

/// One avatar coordinate update.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementMessage {
    pub avatar: AvatarId,
    pub move_flags: u32,
    pub move_flags2: u16,
    pub game_time_ms: u32,
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub orientation: f32,
    pub fall_time_ms: u32,
    pub pitch: f32,
}

impl MovementMessage {
    pub fn version(&self) -> ProtocolVersion {
        self.avatar.version()
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }
}

/// Movement body, all little-endian: avatar id (4 or 12 bytes), u32 move
/// flags, u16 extra flags, u32 game time, f32 x/y/z, f32 orientation,
/// u32 fall time, f32 pitch, u8 reserved. The whole frame is 43 bytes for
/// version A and 51 for version B.
pub fn build_movement(msg: &MovementMessage) -> Vec<u8> {
    let mut body = Vec::with_capacity(msg.version().movement_body_len());
    msg.avatar.encode_into(&mut body);
    body.extend_from_slice(&msg.move_flags.to_le_bytes());
    body.extend_from_slice(&msg.move_flags2.to_le_bytes());
    body.extend_from_slice(&msg.game_time_ms.to_le_bytes());
    body.extend_from_slice(&msg.x.to_le_bytes());
    body.extend_from_slice(&msg.y.to_le_bytes());
    body.extend_from_slice(&msg.z.to_le_bytes());
    body.extend_from_slice(&msg.orientation.to_le_bytes());
    body.extend_from_slice(&msg.fall_time_ms.to_le_bytes());
    body.extend_from_slice(&msg.pitch.to_le_bytes());
    body.push(0x00);
    build_frame(OPCODE_MOVEMENT, &body)
}

pub fn parse_movement(
    body: &[u8],
    version: ProtocolVersion,
) -> Result<MovementMessage, ProtocolError> {
    let expected = version.movement_body_len();
    if body.len() != expected {
        return Err(ProtocolError::MalformedMovement { version, expected, got: body.len() });
    }
    let w = version.id_width();
    let avatar = AvatarId::decode(version, &body[..w]);
    let msg = MovementMessage {
        avatar,
        move_flags: le_u32(&body[w..w + 4]),
        move_flags2: u16::from_le_bytes([body[w + 4], body[w + 5]]),
        game_time_ms: le_u32(&body[w + 6..w + 10]),
        x: le_f32(&body[w + 10..w + 14]),
        y: le_f32(&body[w + 14..w + 18]),
        z: le_f32(&body[w + 18..w + 22]),
        orientation: le_f32(&body[w + 22..w + 26]),
        fall_time_ms: le_u32(&body[w + 26..w + 30]),
        pitch: le_f32(&body[w + 30..w + 34]),
    };
    Ok(msg)
}

/// One object position block in a server update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectPos {
    pub id: AvatarId,
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

/// Object update body: u8 count, then count blocks of id + f32 x/y/z.
pub fn build_object_update(objects: &[ObjectPos]) -> Vec<u8> {
    let mut body = Vec::new();
    body.push(objects.len() as u8);
    for obj in objects {
        obj.id.encode_into(&mut body);
        body.extend_from_slice(&obj.x.to_le_bytes());
        body.extend_from_slice(&obj.y.to_le_bytes());
        body.extend_from_slice(&obj.z.to_le_bytes());
    }
    build_frame(OPCODE_OBJECT_UPDATE, &body)
}

/// Parsed object update plus a flag for a count that overran the body;
/// whatever fits is returned.
pub fn parse_object_update(body: &[u8], version: ProtocolVersion) -> (Vec<ObjectPos>, bool) {
    if body.is_empty() {
        return (Vec::new(), true);
    }
    let declared = body[0] as usize;
    let block = version.id_width() + 12;
    let mut out = Vec::with_capacity(declared.min(64));
    let mut off = 1usize;
    while out.len() < declared && body.len() - off >= block {
        let id = AvatarId::decode(version, &body[off..off + version.id_width()]);
        let f = &body[off + version.id_width()..off + block];
        out.push(ObjectPos {
            id,
            x: le_f32(&f[0..4]),
            y: le_f32(&f[4..8]),
            z: le_f32(&f[8..12]),
        });
        off += block;
    }
    let malformed = out.len() < declared;
    (out, malformed)
}

/// Keep-alive frame carrying a u32 LE sequence number.
pub fn build_keepalive(opcode: u16, sequence: u32) -> Vec<u8> {
    build_frame(opcode, &sequence.to_le_bytes())
}

/// Opaque frame standing in for encrypted protocol messages.
pub fn build_opaque(payload: &[u8]) -> Vec<u8> {
    build_frame(OPCODE_OPAQUE, payload)
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().unwrap())
}

fn le_f32(b: &[u8]) -> f32 {
    f32::from_le_bytes(b.try_into().unwrap())
}
