//! Reassembly test vectors: reorder capture records within a bounded window
//! and duplicate a fraction of the TCP data segments. Record bytes and
//! timestamps are copied verbatim, so the semantic content of every flow is
//! unchanged and an analyzer must produce the identical report.

use std::path::Path;

use rand::Rng;

use mmoscope_core::capture::pcap::{LinkType, PcapReader, PcapWriter, RawRecord};
use mmoscope_core::capture::CaptureError;

use crate::stats::sub_rng;
use crate::SynthError;

#[derive(Debug, Clone, Copy)]
pub struct ShuffleOptions {
    /// Permutation window in records; 1 leaves the order unchanged.
    pub window: usize,
    /// Fraction of payload-bearing TCP segments to duplicate.
    pub duplicate_fraction: f64,
}

impl Default for ShuffleOptions {
    fn default() -> Self {
        ShuffleOptions { window: 8, duplicate_fraction: 0.01 }
    }
}

/// Shuffle `input` into `output` under the given seed and options.
pub fn shuffle_segments(
    input: &Path,
    output: &Path,
    seed: u64,
    opts: ShuffleOptions,
) -> Result<(), SynthError> {
    let file = std::fs::File::open(input)?;
    let mut reader = PcapReader::new(std::io::BufReader::with_capacity(1 << 20, file))?;
    let link_type = reader.link_type();
    let mut records: Vec<RawRecord> = Vec::new();
    while let Some(rec) = reader.next_record()? {
        records.push(rec);
    }
    if reader.truncated_tail() {
        return Err(SynthError::Capture(CaptureError::BadHeader(
            "input capture is truncated".into(),
        )));
    }

    let mut rng = sub_rng(seed, SHUFFLE_STREAM);
    // Duplication pass: a copy of a data segment right after the original,
    // same bytes and timestamp.
    let mut expanded: Vec<RawRecord> = Vec::with_capacity(records.len());
    for rec in records {
        let dup = opts.duplicate_fraction > 0.0
            && has_tcp_payload(link_type, &rec.data)
            && rng.gen::<f64>() < opts.duplicate_fraction;
        if dup {
            expanded.push(rec.clone());
        }
        expanded.push(rec);
    }

    // Window permutation pass.
    if opts.window > 1 {
        for chunk in expanded.chunks_mut(opts.window) {
            for i in (1..chunk.len()).rev() {
                let j = rng.gen_range(0..=i);
                chunk.swap(i, j);
            }
        }
    }

    let out = std::fs::File::create(output)?;
    let mut writer = PcapWriter::new(std::io::BufWriter::with_capacity(1 << 20, out), link_type)?;
    for rec in &expanded {
        writer.write_record(rec.ts, &rec.data)?;
    }
    writer.flush()?;
    Ok(())
}

/// Sub-stream id for the shuffle RNG.
const SHUFFLE_STREAM: u64 = 0x0051_0f1e;

fn has_tcp_payload(link: LinkType, data: &[u8]) -> bool {
    let ip = match link {
        LinkType::Ethernet => {
            if data.len() < 14 || u16::from_be_bytes([data[12], data[13]]) != 0x0800 {
                return false;
            }
            &data[14..]
        }
        LinkType::RawIp => data,
    };
    if ip.len() < 20 || ip[0] >> 4 != 4 || ip[9] != 6 {
        return false;
    }
    let ihl = (ip[0] & 0x0f) as usize * 4;
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    if ihl < 20 || ip.len() < ihl + 20 || total_len < ihl + 20 {
        return false;
    }
    let tcp = &ip[ihl..total_len.min(ip.len())];
    let data_off = (tcp[12] >> 4) as usize * 4;
    tcp.len() > data_off
}
