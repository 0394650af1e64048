//! Capture ingest: libpcap file I/O, IPv4/TCP frame parsing, and TCP stream
//! reassembly into per-connection directional byte streams.

pub mod pcap;
pub mod reassembly;

use std::net::Ipv4Addr;
use std::path::Path;

use thiserror::Error;

use crate::time::Micros;
use pcap::{LinkType, PcapReader};

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed global header: {0}")]
    BadHeader(String),
    #[error("unsupported link type {0} (expected ethernet=1 or raw ipv4=101)")]
    UnsupportedLinkType(u32),
}

/// TCP header flags the analyzer cares about.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TcpFlags {
    pub syn: bool,
    pub ack: bool,
    pub fin: bool,
    pub rst: bool,
}

impl TcpFlags {
    pub fn from_byte(b: u8) -> Self {
        TcpFlags {
            syn: b & 0x02 != 0,
            ack: b & 0x10 != 0,
            fin: b & 0x01 != 0,
            rst: b & 0x04 != 0,
        }
    }

    pub fn to_byte(self) -> u8 {
        (self.fin as u8)
            | (self.syn as u8) << 1
            | (self.rst as u8) << 2
            | (self.ack as u8) << 4
    }

    /// SYN without ACK: the connection initiator's opening segment.
    pub fn is_pure_syn(self) -> bool {
        self.syn && !self.ack
    }
}

/// One captured IPv4/TCP packet.
#[derive(Debug, Clone)]
pub struct PacketRecord {
    pub ts: Micros,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub tcp_seq: u32,
    pub tcp_flags: TcpFlags,
    pub payload: Vec<u8>,
}

/// Running counters over a whole capture file.
#[derive(Debug, Clone, Default)]
pub struct TraceStats {
    pub total_packets: u64,
    /// Sum of original (on-the-wire) frame lengths over every record.
    pub total_bytes: u64,
    pub tcp_packets: u64,
    pub tcp_bytes: u64,
    pub tcp_payload_bytes: u64,
    /// Records that are IPv4 but not TCP, or not IPv4 at all.
    pub non_tcp_packets: u64,
    pub non_tcp_bytes: u64,
    /// Frames too short to parse; counted under non_tcp as well.
    pub malformed_frames: u64,
    /// Capture-order timestamp regressions (reported, not fatal).
    pub ts_regressions: u64,
    /// The file ended inside a record; reading stopped there.
    pub truncated_tail: bool,
    pub first_ts: Option<Micros>,
    pub last_ts: Option<Micros>,
}

impl TraceStats {
    fn observe_ts(&mut self, ts: Micros) {
        if let Some(last) = self.last_ts {
            if ts < last {
                self.ts_regressions += 1;
            }
        }
        // Span bounds are min/max, not first/last in file order, so a
        // reordered capture spans the same interval.
        if self.first_ts.map_or(true, |first| ts < first) {
            self.first_ts = Some(ts);
        }
        if self.last_ts.map_or(true, |last| ts > last) {
            self.last_ts = Some(ts);
        }
        self.total_packets += 1;
    }
}

/// Streaming reader that parses a capture into [`PacketRecord`]s while
/// accumulating [`TraceStats`]. Non-TCP and non-IPv4 records are counted but
/// not yielded.
pub struct TraceReader {
    reader: PcapReader<std::io::BufReader<std::fs::File>>,
    stats: TraceStats,
}

impl TraceReader {
    pub fn open(path: &Path) -> Result<Self, CaptureError> {
        let file = std::fs::File::open(path)?;
        let reader = PcapReader::new(std::io::BufReader::with_capacity(1 << 20, file))?;
        Ok(TraceReader { reader, stats: TraceStats::default() })
    }

    pub fn stats(&self) -> &TraceStats {
        &self.stats
    }

    pub fn into_stats(self) -> TraceStats {
        self.stats
    }

    pub fn link_type(&self) -> LinkType {
        self.reader.link_type()
    }

    /// Next IPv4/TCP packet, or `None` at end of file.
    pub fn next_packet(&mut self) -> Result<Option<PacketRecord>, CaptureError> {
        loop {
            let record = match self.reader.next_record()? {
                Some(r) => r,
                None => {
                    self.stats.truncated_tail = self.reader.truncated_tail();
                    return Ok(None);
                }
            };
            self.stats.observe_ts(record.ts);
            self.stats.total_bytes += record.orig_len as u64;
            match parse_frame(self.reader.link_type(), &record.data) {
                ParsedFrame::Tcp { src_ip, dst_ip, src_port, dst_port, seq, flags, payload } => {
                    self.stats.tcp_packets += 1;
                    self.stats.tcp_bytes += record.orig_len as u64;
                    self.stats.tcp_payload_bytes += payload.len() as u64;
                    return Ok(Some(PacketRecord {
                        ts: record.ts,
                        src_ip,
                        dst_ip,
                        src_port,
                        dst_port,
                        tcp_seq: seq,
                        tcp_flags: flags,
                        payload: payload.to_vec(),
                    }));
                }
                ParsedFrame::Other => {
                    self.stats.non_tcp_packets += 1;
                    self.stats.non_tcp_bytes += record.orig_len as u64;
                }
                ParsedFrame::Malformed => {
                    self.stats.malformed_frames += 1;
                    self.stats.non_tcp_packets += 1;
                    self.stats.non_tcp_bytes += record.orig_len as u64;
                }
            }
        }
    }
}

/// Read a whole trace eagerly. Convenience for tests and small inputs;
/// the pipeline streams instead.
pub fn read_trace(path: &Path) -> Result<(Vec<PacketRecord>, TraceStats), CaptureError> {
    let mut reader = TraceReader::open(path)?;
    let mut packets = Vec::new();
    while let Some(pkt) = reader.next_packet()? {
        packets.push(pkt);
    }
    Ok((packets, reader.into_stats()))
}

enum ParsedFrame<'a> {
    Tcp {
        src_ip: Ipv4Addr,
        dst_ip: Ipv4Addr,
        src_port: u16,
        dst_port: u16,
        seq: u32,
        flags: TcpFlags,
        payload: &'a [u8],
    },
    /// Parseable but not IPv4/TCP (UDP, IPv6, ARP, fragments, ...).
    Other,
    Malformed,
}

fn parse_frame(link: LinkType, data: &[u8]) -> ParsedFrame<'_> {
    let ip = match link {
        LinkType::Ethernet => {
            if data.len() < 14 {
                return ParsedFrame::Malformed;
            }
            let ethertype = u16::from_be_bytes([data[12], data[13]]);
            if ethertype != 0x0800 {
                return ParsedFrame::Other;
            }
            &data[14..]
        }
        LinkType::RawIp => data,
    };
    parse_ipv4(ip)
}

fn parse_ipv4(ip: &[u8]) -> ParsedFrame<'_> {
    if ip.len() < 20 {
        return ParsedFrame::Malformed;
    }
    if ip[0] >> 4 != 4 {
        return ParsedFrame::Other;
    }
    let ihl = (ip[0] & 0x0f) as usize * 4;
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    if ihl < 20 || ip.len() < ihl || total_len < ihl {
        return ParsedFrame::Malformed;
    }
    // Fragmented datagrams: defragmentation is out of scope.
    let frag = u16::from_be_bytes([ip[6], ip[7]]);
    if frag & 0x2000 != 0 || frag & 0x1fff != 0 {
        return ParsedFrame::Other;
    }
    if ip[9] != 6 {
        return ParsedFrame::Other;
    }
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    // Bound the datagram by the IP total length, not the captured frame,
    // so link-layer trailers never leak into the payload.
    let dgram_end = total_len.min(ip.len());
    let tcp = &ip[ihl..dgram_end];
    if tcp.len() < 20 {
        return ParsedFrame::Malformed;
    }
    let data_off = (tcp[12] >> 4) as usize * 4;
    if data_off < 20 || tcp.len() < data_off {
        return ParsedFrame::Malformed;
    }
    ParsedFrame::Tcp {
        src_ip,
        dst_ip,
        src_port: u16::from_be_bytes([tcp[0], tcp[1]]),
        dst_port: u16::from_be_bytes([tcp[2], tcp[3]]),
        seq: u32::from_be_bytes([tcp[4], tcp[5], tcp[6], tcp[7]]),
        flags: TcpFlags::from_byte(tcp[13]),
        payload: &tcp[data_off..],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::pcap::PcapWriter;
    use std::io::Write;

    /// Minimal Ethernet+IPv4 frame with an arbitrary transport protocol.
    pub(crate) fn build_ipv4_frame(
        proto: u8,
        src: Ipv4Addr,
        dst: Ipv4Addr,
        transport: &[u8],
    ) -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(&[0u8; 12]);
        f.extend_from_slice(&0x0800u16.to_be_bytes());
        let total = 20 + transport.len();
        f.push(0x45);
        f.push(0);
        f.extend_from_slice(&(total as u16).to_be_bytes());
        f.extend_from_slice(&[0; 4]);
        f.push(64);
        f.push(proto);
        f.extend_from_slice(&[0; 2]);
        f.extend_from_slice(&src.octets());
        f.extend_from_slice(&dst.octets());
        f.extend_from_slice(transport);
        f
    }

    fn tcp_segment(src_port: u16, dst_port: u16, seq: u32, flags: u8, payload: &[u8]) -> Vec<u8> {
        let mut t = Vec::new();
        t.extend_from_slice(&src_port.to_be_bytes());
        t.extend_from_slice(&dst_port.to_be_bytes());
        t.extend_from_slice(&seq.to_be_bytes());
        t.extend_from_slice(&0u32.to_be_bytes());
        t.push(0x50);
        t.push(flags);
        t.extend_from_slice(&1024u16.to_be_bytes());
        t.extend_from_slice(&[0; 4]);
        t.extend_from_slice(payload);
        t
    }

    #[test]
    fn empty_capture_yields_nothing() {
        let dir = std::env::temp_dir().join("mmoscope-capture-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.pcap");
        {
            let f = std::fs::File::create(&path).unwrap();
            let _ = PcapWriter::new(std::io::BufWriter::new(f), LinkType::Ethernet).unwrap();
        }
        let (packets, stats) = read_trace(&path).unwrap();
        assert!(packets.is_empty());
        assert_eq!(stats.total_bytes, 0);
        assert_eq!(stats.total_packets, 0);
        assert!(!stats.truncated_tail);
    }

    #[test]
    fn udp_counted_tcp_yielded() {
        let dir = std::env::temp_dir().join("mmoscope-capture-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mixed.pcap");
        let a = Ipv4Addr::new(10, 0, 0, 1);
        let b = Ipv4Addr::new(10, 0, 0, 2);
        let udp_frame = build_ipv4_frame(17, a, b, &[0u8; 12]);
        let tcp_frame = build_ipv4_frame(6, a, b, &tcp_segment(1234, 80, 7, 0x18, b"hi"));
        {
            let f = std::fs::File::create(&path).unwrap();
            let mut w = PcapWriter::new(std::io::BufWriter::new(f), LinkType::Ethernet).unwrap();
            w.write_record(Micros::from_secs(1), &udp_frame).unwrap();
            w.write_record(Micros::from_secs(2), &tcp_frame).unwrap();
            w.flush().unwrap();
        }
        let (packets, stats) = read_trace(&path).unwrap();
        assert_eq!(packets.len(), 1);
        assert_eq!(packets[0].payload, b"hi");
        assert_eq!(stats.non_tcp_packets, 1);
        assert_eq!(stats.non_tcp_bytes, udp_frame.len() as u64);
        assert_eq!(stats.total_bytes, (udp_frame.len() + tcp_frame.len()) as u64);
        // payload conservation: yielded payload + non-tcp frame bytes cover the capture
        assert_eq!(stats.tcp_payload_bytes, 2);
    }

    #[test]
    fn handshake_trace_yields_three_empty_records() {
        let dir = std::env::temp_dir().join("mmoscope-capture-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("handshake.pcap");
        let client = Ipv4Addr::new(10, 0, 0, 1);
        let server = Ipv4Addr::new(10, 9, 0, 1);
        let syn = build_ipv4_frame(6, client, server, &tcp_segment(5000, 8085, 100, 0x02, &[]));
        let synack = build_ipv4_frame(6, server, client, &tcp_segment(8085, 5000, 900, 0x12, &[]));
        let ack = build_ipv4_frame(6, client, server, &tcp_segment(5000, 8085, 101, 0x10, &[]));
        {
            let f = std::fs::File::create(&path).unwrap();
            let mut w = PcapWriter::new(std::io::BufWriter::new(f), LinkType::Ethernet).unwrap();
            w.write_record(Micros::from_parts(1, 0), &syn).unwrap();
            w.write_record(Micros::from_parts(1, 2000), &synack).unwrap();
            w.write_record(Micros::from_parts(1, 4000), &ack).unwrap();
            w.flush().unwrap();
        }
        let (packets, stats) = read_trace(&path).unwrap();
        assert_eq!(packets.len(), 3);
        assert!(packets.iter().all(|p| p.payload.is_empty()));
        assert_eq!(packets[0].ts, Micros::from_parts(1, 0));
        assert_eq!(packets[0].src_ip, client);
        assert_eq!(packets[0].dst_ip, server);
        assert_eq!((packets[0].src_port, packets[0].dst_port), (5000, 8085));
        assert_eq!(packets[0].tcp_seq, 100);
        assert!(packets[0].tcp_flags.is_pure_syn());
        assert!(packets[1].tcp_flags.syn && packets[1].tcp_flags.ack);
        assert_eq!(packets[1].src_ip, server);
        assert!(!packets[2].tcp_flags.syn && packets[2].tcp_flags.ack);
        assert_eq!(stats.tcp_packets, 3);
        assert_eq!(stats.tcp_payload_bytes, 0);
    }

    #[test]
    fn truncated_tail_stops_with_warning_flag() {
        let dir = std::env::temp_dir().join("mmoscope-capture-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trunc.pcap");
        let a = Ipv4Addr::new(10, 0, 0, 1);
        let b = Ipv4Addr::new(10, 0, 0, 2);
        let tcp_frame = build_ipv4_frame(6, a, b, &tcp_segment(1234, 80, 7, 0x18, b"hi"));
        let mut bytes = Vec::new();
        {
            let mut w = PcapWriter::new(&mut bytes, LinkType::Ethernet).unwrap();
            w.write_record(Micros::from_secs(1), &tcp_frame).unwrap();
            w.write_record(Micros::from_secs(2), &tcp_frame).unwrap();
            w.flush().unwrap();
        }
        bytes.truncate(bytes.len() - 5);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(&bytes).unwrap();
        drop(f);
        let (packets, stats) = read_trace(&path).unwrap();
        assert_eq!(packets.len(), 1);
        assert!(stats.truncated_tail);
    }

    #[test]
    fn bad_magic_is_fatal() {
        let dir = std::env::temp_dir().join("mmoscope-capture-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.pcap");
        std::fs::write(&path, [0u8; 24]).unwrap();
        assert!(matches!(TraceReader::open(&path), Err(CaptureError::BadHeader(_))));
    }
}
