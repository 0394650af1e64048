//! TCP stream reassembly.
//!
//! Flows are keyed by the unordered endpoint pair; the initiator is the pure
//! SYN sender (the SYN|ACK sender's peer as a fallback), or the first-seen
//! sender when no handshake is observed at all. Orientation is resolved from
//! the evidence gathered over the whole flow, so the result does not depend
//! on the order segments appear in the file.
//!
//! Overlapping and retransmitted segments contribute bytes first-writer-wins:
//! a byte offset is owned by the packet that first covered it. A missing
//! segment truncates the delivered stream at the gap and flags the flow.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use crate::capture::PacketRecord;
use crate::time::Micros;

/// Idle time after which a five-tuple is considered a new connection.
pub const FLOW_TIMEOUT_US: u64 = 3600 * 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

/// Unordered endpoint pair; `a <= b` by (ip, port).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub a: Endpoint,
    pub b: Endpoint,
}

impl FlowKey {
    fn from_packet(p: &PacketRecord) -> (FlowKey, usize) {
        let src = Endpoint { ip: p.src_ip, port: p.src_port };
        let dst = Endpoint { ip: p.dst_ip, port: p.dst_port };
        if src <= dst {
            (FlowKey { a: src, b: dst }, 0)
        } else {
            (FlowKey { a: dst, b: src }, 1)
        }
    }

    fn endpoint(&self, side: usize) -> Endpoint {
        if side == 0 {
            self.a
        } else {
            self.b
        }
    }
}

/// A payload-bearing packet that contributed at least one new byte.
#[derive(Debug, Clone, Copy)]
pub struct PacketSeg {
    /// Offset of the packet's first payload byte in the directional stream.
    pub offset: u64,
    /// Full payload length of the packet.
    pub len: u32,
    pub ts: Micros,
}

/// In-order application bytes for one direction of a flow.
#[derive(Debug, Clone, Default)]
pub struct DirectionalStream {
    /// Contiguous reassembled prefix.
    pub bytes: Vec<u8>,
    /// True if a hole truncated the stream.
    pub gapped: bool,
    /// Accepted bytes beyond the first hole (not delivered).
    pub dropped_bytes: u64,
    /// Contributing payload packets, sorted by stream offset.
    pub packets: Vec<PacketSeg>,
    /// Packets whose payload contributed no new bytes.
    pub retransmits: u64,
    /// Raw payload bytes observed, retransmissions included.
    pub payload_bytes_seen: u64,
    /// (offset, ts) of each contributed range within the delivered prefix.
    ts_index: Vec<(u64, Micros)>,
}

impl DirectionalStream {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// Number of distinct payload packets (retransmissions excluded).
    pub fn payload_packets(&self) -> u64 {
        self.packets.len() as u64
    }

    /// Capture timestamp of the packet that contributed the byte at `offset`.
    pub fn ts_at(&self, offset: u64) -> Option<Micros> {
        if offset >= self.bytes.len() as u64 {
            return None;
        }
        match self.ts_index.binary_search_by_key(&offset, |&(o, _)| o) {
            Ok(i) => Some(self.ts_index[i].1),
            Err(0) => None,
            Err(i) => Some(self.ts_index[i - 1].1),
        }
    }

    /// True if some contributing packet covers exactly `[offset, offset+len)`.
    pub fn has_exact_packet(&self, offset: u64, len: u32) -> bool {
        self.packets
            .binary_search_by_key(&offset, |p| p.offset)
            .map(|i| self.packets[i].len == len)
            .unwrap_or(false)
    }
}

/// One reassembled TCP conversation.
#[derive(Debug, Clone)]
pub struct ReassembledFlow {
    pub client: Endpoint,
    pub server: Endpoint,
    /// Ordinal of this connection on its five-tuple (idle-timeout splits).
    pub instance: u32,
    pub first_ts: Micros,
    pub last_ts: Micros,
    /// No pure SYN from the initiator was observed.
    pub midstream: bool,
    pub fin_seen: bool,
    pub rst_seen: bool,
    pub c2s: DirectionalStream,
    pub s2c: DirectionalStream,
}

impl ReassembledFlow {
    pub fn duration_us(&self) -> u64 {
        self.last_ts - self.first_ts
    }

    pub fn gapped(&self) -> bool {
        self.c2s.gapped || self.s2c.gapped
    }
}

#[derive(Debug, Default)]
struct SideState {
    /// Stream offset 0 corresponds to this absolute sequence number.
    base_seq: Option<u32>,
    /// The base came from a SYN (authoritative) rather than first-seen data.
    base_from_syn: bool,
    /// Pure SYN seen from this side.
    pure_syn: bool,
    /// SYN|ACK seen from this side.
    syn_ack: bool,
    /// Accepted non-overlapping ranges keyed by stream offset.
    ranges: std::collections::BTreeMap<u64, (Vec<u8>, Micros)>,
    packets: Vec<PacketSeg>,
    retransmits: u64,
    payload_bytes_seen: u64,
}

impl SideState {
    /// First-writer-wins insert; returns bytes newly contributed.
    fn insert(&mut self, offset: u64, data: &[u8], ts: Micros) -> u64 {
        let end = offset + data.len() as u64;
        let mut contributed = 0u64;
        let mut cursor = offset;
        // Ranges starting before `offset` may overlap its head.
        if let Some((&start, (bytes, _))) = self.ranges.range(..=offset).next_back() {
            let covered_end = start + bytes.len() as u64;
            if covered_end > cursor {
                cursor = covered_end.min(end);
            }
        }
        while cursor < end {
            let next_start = self
                .ranges
                .range(cursor..)
                .next()
                .map(|(&s, _)| s)
                .unwrap_or(u64::MAX);
            if next_start >= end {
                let slice = &data[(cursor - offset) as usize..];
                contributed += slice.len() as u64;
                self.ranges.insert(cursor, (slice.to_vec(), ts));
                break;
            }
            if next_start > cursor {
                let slice = &data[(cursor - offset) as usize..(next_start - offset) as usize];
                contributed += slice.len() as u64;
                self.ranges.insert(cursor, (slice.to_vec(), ts));
            }
            let (covered, _) = &self.ranges[&next_start];
            cursor = (next_start + covered.len() as u64).min(end).max(next_start);
        }
        contributed
    }

    /// Shift all recorded offsets forward when a late SYN reveals that the
    /// provisional base overshot the true initial sequence number.
    fn rebase(&mut self, shift: u64) {
        if shift == 0 {
            return;
        }
        let old = std::mem::take(&mut self.ranges);
        for (off, v) in old {
            self.ranges.insert(off + shift, v);
        }
        for p in &mut self.packets {
            p.offset += shift;
        }
    }

    fn finalize(mut self) -> DirectionalStream {
        let mut bytes = Vec::new();
        let mut ts_index = Vec::new();
        let mut gapped = false;
        let mut dropped = 0u64;
        let mut expected = 0u64;
        for (off, (data, ts)) in std::mem::take(&mut self.ranges) {
            if off == expected && !gapped {
                ts_index.push((off, ts));
                bytes.extend_from_slice(&data);
                expected += data.len() as u64;
            } else {
                gapped = true;
                dropped += data.len() as u64;
            }
        }
        self.packets.sort_by_key(|p| (p.offset, p.len, p.ts));
        DirectionalStream {
            bytes,
            gapped,
            dropped_bytes: dropped,
            packets: self.packets,
            retransmits: self.retransmits,
            payload_bytes_seen: self.payload_bytes_seen,
            ts_index,
        }
    }
}

struct LiveFlow {
    key: FlowKey,
    instance: u32,
    first_ts: Micros,
    /// Maximum timestamp seen (idle detection must not depend on file order).
    max_ts: Micros,
    /// Side index (0/1) of the first-seen sender, file order.
    first_sender: usize,
    fin_seen: bool,
    rst_seen: bool,
    sides: [SideState; 2],
}

impl LiveFlow {
    fn new(key: FlowKey, instance: u32, first_sender: usize, ts: Micros) -> Self {
        LiveFlow {
            key,
            instance,
            first_ts: ts,
            max_ts: ts,
            first_sender,
            fin_seen: false,
            rst_seen: false,
            sides: [SideState::default(), SideState::default()],
        }
    }

    fn apply(&mut self, side: usize, p: &PacketRecord) {
        if p.ts < self.first_ts {
            self.first_ts = p.ts;
        }
        if p.ts > self.max_ts {
            self.max_ts = p.ts;
        }
        if p.tcp_flags.fin {
            self.fin_seen = true;
        }
        if p.tcp_flags.rst {
            self.rst_seen = true;
        }
        let state = &mut self.sides[side];
        if p.tcp_flags.syn {
            if p.tcp_flags.is_pure_syn() {
                state.pure_syn = true;
            } else {
                state.syn_ack = true;
            }
            let true_base = p.tcp_seq.wrapping_add(1);
            match state.base_seq {
                Some(provisional) if !state.base_from_syn && provisional != true_base => {
                    // Data arrived before the SYN (reordered capture): shift
                    // provisional offsets so they are relative to ISN+1.
                    let shift = provisional.wrapping_sub(true_base);
                    if shift < 1 << 20 {
                        state.rebase(shift as u64);
                        state.base_seq = Some(true_base);
                    }
                }
                None => state.base_seq = Some(true_base),
                _ => {}
            }
            state.base_from_syn = true;
        }
        if p.payload.is_empty() {
            return;
        }
        let state = &mut self.sides[side];
        state.payload_bytes_seen += p.payload.len() as u64;
        let base = *state.base_seq.get_or_insert(p.tcp_seq);
        let mut rel = p.tcp_seq.wrapping_sub(base);
        if rel > u32::MAX / 2 {
            if state.base_from_syn {
                // Entirely before the handshake-derived base: stale bytes.
                state.retransmits += 1;
                return;
            }
            // The provisional base was not the stream start after all:
            // rebase so this earlier segment becomes the new offset zero.
            let shift = base.wrapping_sub(p.tcp_seq);
            if shift >= 1 << 20 {
                state.retransmits += 1;
                return;
            }
            state.rebase(shift as u64);
            state.base_seq = Some(p.tcp_seq);
            rel = 0;
        }
        let offset = rel as u64;
        let contributed = state.insert(offset, &p.payload, p.ts);
        if contributed > 0 {
            state.packets.push(PacketSeg { offset, len: p.payload.len() as u32, ts: p.ts });
        } else {
            state.retransmits += 1;
        }
    }

    fn finalize(self) -> ReassembledFlow {
        // Pure SYN pins the initiator; a SYN|ACK pins its peer; otherwise the
        // first-seen sender is the initiator.
        let initiator = if self.sides[0].pure_syn {
            0
        } else if self.sides[1].pure_syn {
            1
        } else if self.sides[0].syn_ack {
            1
        } else if self.sides[1].syn_ack {
            0
        } else {
            self.first_sender
        };
        let midstream = !self.sides[initiator].pure_syn;
        let [side_a, side_b] = self.sides;
        let (c2s_state, s2c_state) = if initiator == 0 { (side_a, side_b) } else { (side_b, side_a) };
        ReassembledFlow {
            client: self.key.endpoint(initiator),
            server: self.key.endpoint(1 - initiator),
            instance: self.instance,
            first_ts: self.first_ts,
            last_ts: self.max_ts,
            midstream,
            fin_seen: self.fin_seen,
            rst_seen: self.rst_seen,
            c2s: c2s_state.finalize(),
            s2c: s2c_state.finalize(),
        }
    }
}

/// Streaming reassembler: feed packets in capture order, then [`finish`].
///
/// [`finish`]: Reassembler::finish
pub struct Reassembler {
    live: HashMap<FlowKey, LiveFlow>,
    done: Vec<ReassembledFlow>,
    instance_counter: HashMap<FlowKey, u32>,
    timeout_us: u64,
}

impl Default for Reassembler {
    fn default() -> Self {
        Self::new()
    }
}

impl Reassembler {
    pub fn new() -> Self {
        Self::with_timeout(FLOW_TIMEOUT_US)
    }

    pub fn with_timeout(timeout_us: u64) -> Self {
        Reassembler {
            live: HashMap::new(),
            done: Vec::new(),
            instance_counter: HashMap::new(),
            timeout_us,
        }
    }

    pub fn push(&mut self, p: &PacketRecord) {
        let (key, side) = FlowKey::from_packet(p);
        if let Some(flow) = self.live.get(&key) {
            if p.ts.since(flow.max_ts) >= self.timeout_us {
                let closed = self.live.remove(&key).unwrap();
                self.done.push(closed.finalize());
            }
        }
        let flow = self.live.entry(key).or_insert_with(|| {
            let counter = self.instance_counter.entry(key).or_insert(0);
            let instance = *counter;
            *counter += 1;
            LiveFlow::new(key, instance, side, p.ts)
        });
        flow.apply(side, p);
    }

    /// Close remaining flows and return all of them in canonical order.
    pub fn finish(mut self) -> Vec<ReassembledFlow> {
        for (_, flow) in self.live.drain() {
            self.done.push(flow.finalize());
        }
        self.done.sort_by(|x, y| {
            (x.first_ts, x.client, x.server, x.instance)
                .cmp(&(y.first_ts, y.client, y.server, y.instance))
        });
        self.done
    }
}

/// Reassemble an in-memory packet sequence. Tests and small inputs.
pub fn reassemble(packets: &[PacketRecord]) -> Vec<ReassembledFlow> {
    let mut r = Reassembler::new();
    for p in packets {
        r.push(p);
    }
    r.finish()
}
