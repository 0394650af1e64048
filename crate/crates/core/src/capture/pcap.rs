//! Classic libpcap file format: 24-byte global header, then 16-byte record
//! headers with microsecond timestamps. Both byte orders are read; files are
//! always written little-endian.

use std::io::{self, Read, Write};

use crate::capture::CaptureError;
use crate::time::Micros;

const MAGIC_US: u32 = 0xa1b2_c3d4;
const MAGIC_US_SWAPPED: u32 = 0xd4c3_b2a1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkType {
    Ethernet,
    RawIp,
}

impl LinkType {
    pub fn code(self) -> u32 {
        match self {
            LinkType::Ethernet => 1,
            LinkType::RawIp => 101,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(LinkType::Ethernet),
            101 => Some(LinkType::RawIp),
            _ => None,
        }
    }
}

/// One raw capture record, link-layer bytes untouched.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub ts: Micros,
    pub orig_len: u32,
    pub data: Vec<u8>,
}

pub struct PcapReader<R: Read> {
    inner: R,
    swapped: bool,
    link_type: LinkType,
    truncated_tail: bool,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, CaptureError> {
        let mut header = [0u8; 24];
        inner
            .read_exact(&mut header)
            .map_err(|e| CaptureError::BadHeader(format!("short global header: {e}")))?;
        let magic = u32::from_le_bytes(header[0..4].try_into().unwrap());
        let swapped = match magic {
            MAGIC_US => false,
            MAGIC_US_SWAPPED => true,
            other => {
                return Err(CaptureError::BadHeader(format!("unknown magic 0x{other:08x}")));
            }
        };
        let u32_at = |b: &[u8]| {
            let arr: [u8; 4] = b.try_into().unwrap();
            if swapped {
                u32::from_be_bytes(arr)
            } else {
                u32::from_le_bytes(arr)
            }
        };
        let link_code = u32_at(&header[20..24]);
        let link_type = LinkType::from_code(link_code)
            .ok_or(CaptureError::UnsupportedLinkType(link_code))?;
        Ok(PcapReader { inner, swapped, link_type, truncated_tail: false })
    }

    pub fn link_type(&self) -> LinkType {
        self.link_type
    }

    /// True once the file ended in the middle of a record.
    pub fn truncated_tail(&self) -> bool {
        self.truncated_tail
    }

    /// Next record, or `None` at (possibly truncated) end of file.
    pub fn next_record(&mut self) -> Result<Option<RawRecord>, CaptureError> {
        let mut header = [0u8; 16];
        match read_exact_or_eof(&mut self.inner, &mut header)? {
            ReadOutcome::Eof => return Ok(None),
            ReadOutcome::Partial => {
                self.truncated_tail = true;
                return Ok(None);
            }
            ReadOutcome::Full => {}
        }
        let u32_at = |b: &[u8]| {
            let arr: [u8; 4] = b.try_into().unwrap();
            if self.swapped {
                u32::from_be_bytes(arr)
            } else {
                u32::from_le_bytes(arr)
            }
        };
        let ts_sec = u32_at(&header[0..4]) as u64;
        let ts_usec = u32_at(&header[4..8]) as u64;
        let incl_len = u32_at(&header[8..12]) as usize;
        let orig_len = u32_at(&header[12..16]);
        let mut data = vec![0u8; incl_len];
        match read_exact_or_eof(&mut self.inner, &mut data)? {
            ReadOutcome::Full => {}
            ReadOutcome::Eof | ReadOutcome::Partial => {
                self.truncated_tail = true;
                return Ok(None);
            }
        }
        Ok(Some(RawRecord { ts: Micros::from_parts(ts_sec, ts_usec), orig_len, data }))
    }
}

enum ReadOutcome {
    Full,
    Partial,
    Eof,
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<ReadOutcome> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Ok(if filled == 0 { ReadOutcome::Eof } else { ReadOutcome::Partial });
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(ReadOutcome::Full)
}

pub struct PcapWriter<W: Write> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, link_type: LinkType) -> io::Result<Self> {
        inner.write_all(&MAGIC_US.to_le_bytes())?;
        inner.write_all(&2u16.to_le_bytes())?; // version major
        inner.write_all(&4u16.to_le_bytes())?; // version minor
        inner.write_all(&0i32.to_le_bytes())?; // thiszone
        inner.write_all(&0u32.to_le_bytes())?; // sigfigs
        inner.write_all(&65535u32.to_le_bytes())?; // snaplen
        inner.write_all(&link_type.code().to_le_bytes())?;
        Ok(PcapWriter { inner })
    }

    pub fn write_record(&mut self, ts: Micros, frame: &[u8]) -> io::Result<()> {
        let secs = (ts.0 / 1_000_000) as u32;
        let usecs = (ts.0 % 1_000_000) as u32;
        self.inner.write_all(&secs.to_le_bytes())?;
        self.inner.write_all(&usecs.to_le_bytes())?;
        self.inner.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.inner.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.inner.write_all(frame)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}
