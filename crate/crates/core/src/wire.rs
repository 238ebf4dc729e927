//! Gateway to middlebox wire formats.
//!
//! Packet frame: `"SHVEPKT1" || packet_id (8) || payload_len (2) || 5 * payload_len mask bytes`.
//! Verdict: `packet_id (8) || decision (1) || count (2) || count * (rule_id (4) || position (2) || action (1))`.
//! All integers big-endian.

use std::fmt;
use std::io::{self, Read, Write};

use crate::crypto::{ActionCode, ByteMask, EncryptedPacket, MASK_LEN, MAX_PAYLOAD};
use crate::engine::{Decision, Match, Verdict};
use crate::error::Error;

pub const FRAME_MAGIC: &[u8; 8] = b"SHVEPKT1";
pub const FRAME_HEADER_LEN: usize = 8 + 8 + 2;
const MATCH_RECORD_LEN: usize = 4 + 2 + 1;

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("frame declares payload length {0}, outside 1..=1500")]
    BadLength(usize),
    #[error("stream ended inside a frame")]
    Truncated,
    #[error("{0} trailing bytes after frame")]
    Trailing(usize),
    #[error("bad verdict: {0}")]
    BadVerdict(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<FrameError> for Error {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Io(io) => Error::Io(io),
            other => Error::Format(other.to_string()),
        }
    }
}

pub fn frame_len(payload_len: usize) -> usize {
    FRAME_HEADER_LEN + MASK_LEN * payload_len
}

pub fn encode_frame(pkt: &EncryptedPacket) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame_len(pkt.len()));
    write_frame(&mut out, pkt).expect("writing to a Vec cannot fail");
    out
}

pub fn write_frame<W: Write>(mut w: W, pkt: &EncryptedPacket) -> io::Result<()> {
    let mut buf = Vec::with_capacity(frame_len(pkt.len()));
    buf.extend_from_slice(FRAME_MAGIC);
    buf.extend_from_slice(&pkt.packet_id.to_be_bytes());
    buf.extend_from_slice(&(pkt.len() as u16).to_be_bytes());
    for m in pkt.masks() {
        buf.extend_from_slice(m.as_bytes());
    }
    w.write_all(&buf)
}

/// Reads exactly `buf.len()` bytes; `Ok(false)` on a clean EOF before the first byte.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, FrameError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

fn read_frame_body<R: Read>(r: &mut R, header: &[u8; FRAME_HEADER_LEN]) -> Result<EncryptedPacket, FrameError> {
    if &header[..8] != FRAME_MAGIC {
        return Err(FrameError::BadMagic);
    }
    let packet_id = u64::from_be_bytes(header[8..16].try_into().unwrap());
    let len = u16::from_be_bytes([header[16], header[17]]) as usize;
    if len == 0 || len > MAX_PAYLOAD {
        return Err(FrameError::BadLength(len));
    }
    let mut body = vec![0u8; MASK_LEN * len];
    if !read_full(r, &mut body)? {
        return Err(FrameError::Truncated);
    }
    let masks = body
        .chunks_exact(MASK_LEN)
        .map(|c| ByteMask(c.try_into().unwrap()))
        .collect();
    Ok(EncryptedPacket::from_masks(packet_id, masks).expect("length checked above"))
}

/// Reads one frame; `Ok(None)` on clean EOF. Any error leaves the stream unsynchronised.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<EncryptedPacket>, FrameError> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    if !read_full(r, &mut header)? {
        return Ok(None);
    }
    read_frame_body(r, &header).map(Some)
}

pub fn decode_frame(bytes: &[u8]) -> Result<EncryptedPacket, FrameError> {
    let mut cursor = bytes;
    let pkt = read_frame(&mut cursor)?.ok_or(FrameError::Truncated)?;
    if !cursor.is_empty() {
        return Err(FrameError::Trailing(cursor.len()));
    }
    Ok(pkt)
}

/// Frame iterator for stored streams that reports malformed frames and
/// resynchronises on the next magic instead of stopping.
pub struct FrameReader<R> {
    inner: R,
    buf: Vec<u8>,
    eof: bool,
    done: bool,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        FrameReader { inner, buf: Vec::new(), eof: false, done: false }
    }

    /// Buffers at least `n` bytes; false if the stream ends first.
    fn fill(&mut self, n: usize) -> io::Result<bool> {
        let mut chunk = [0u8; 8192];
        while self.buf.len() < n && !self.eof {
            match self.inner.read(&mut chunk) {
                Ok(0) => self.eof = true,
                Ok(k) => self.buf.extend_from_slice(&chunk[..k]),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        Ok(self.buf.len() >= n)
    }

    /// Drops bytes up to the next magic after offset 0.
    fn resync(&mut self) -> io::Result<()> {
        let mut from = 1;
        loop {
            let hit = self
                .buf
                .get(from..)
                .and_then(|b| b.windows(8).position(|w| w == FRAME_MAGIC));
            if let Some(i) = hit {
                self.buf.drain(..from + i);
                return Ok(());
            }
            if self.eof {
                self.buf.clear();
                return Ok(());
            }
            let keep = self.buf.len().saturating_sub(from).min(7);
            self.buf.drain(..self.buf.len() - keep);
            from = 0;
            let want = self.buf.len() + 8;
            self.fill(want)?;
        }
    }

    fn next_frame(&mut self) -> Result<Option<EncryptedPacket>, FrameError> {
        if !self.fill(8)? {
            if self.buf.is_empty() {
                return Ok(None);
            }
            self.buf.clear();
            return Err(FrameError::Truncated);
        }
        if &self.buf[..8] != FRAME_MAGIC {
            self.resync()?;
            return Err(FrameError::BadMagic);
        }
        if !self.fill(FRAME_HEADER_LEN)? {
            self.buf.clear();
            return Err(FrameError::Truncated);
        }
        let len = u16::from_be_bytes([self.buf[16], self.buf[17]]) as usize;
        if len == 0 || len > MAX_PAYLOAD {
            self.resync()?;
            return Err(FrameError::BadLength(len));
        }
        let total = frame_len(len);
        if !self.fill(total)? {
            self.buf.clear();
            return Err(FrameError::Truncated);
        }
        let pkt = decode_frame(&self.buf[..total])?;
        self.buf.drain(..total);
        Ok(Some(pkt))
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<EncryptedPacket, FrameError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_frame() {
            Ok(Some(pkt)) => Some(Ok(pkt)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                if matches!(e, FrameError::Io(_)) {
                    self.done = true;
                }
                Some(Err(e))
            }
        }
    }
}

pub fn verdict_len(matches: usize) -> usize {
    8 + 1 + 2 + MATCH_RECORD_LEN * matches
}

pub fn encode_verdict(v: &Verdict) -> Vec<u8> {
    let mut out = Vec::with_capacity(verdict_len(v.matches.len()));
    out.extend_from_slice(&v.packet_id.to_be_bytes());
    out.push(v.decision.code());
    out.extend_from_slice(&(v.matches.len() as u16).to_be_bytes());
    for m in &v.matches {
        out.extend_from_slice(&m.rule_id.to_be_bytes());
        out.extend_from_slice(&m.position.to_be_bytes());
        out.push(m.action as u8);
    }
    out
}

pub fn write_verdict<W: Write>(mut w: W, v: &Verdict) -> io::Result<()> {
    w.write_all(&encode_verdict(v))
}

/// Reads one verdict; `Ok(None)` on clean EOF.
pub fn read_verdict<R: Read>(r: &mut R) -> Result<Option<Verdict>, FrameError> {
    let mut head = [0u8; 11];
    if !read_full(r, &mut head)? {
        return Ok(None);
    }
    let packet_id = u64::from_be_bytes(head[..8].try_into().unwrap());
    let decision = Decision::from_code(head[8])
        .ok_or_else(|| FrameError::BadVerdict(format!("decision code {}", head[8])))?;
    let count = u16::from_be_bytes([head[9], head[10]]) as usize;
    let mut body = vec![0u8; MATCH_RECORD_LEN * count];
    if !body.is_empty() && !read_full(r, &mut body)? {
        return Err(FrameError::Truncated);
    }
    let mut matches = Vec::with_capacity(count);
    for rec in body.chunks_exact(MATCH_RECORD_LEN) {
        let action = ActionCode::from_u8(rec[6])
            .filter(|a| *a != ActionCode::Marker)
            .ok_or_else(|| FrameError::BadVerdict(format!("action code {}", rec[6])))?;
        matches.push(Match {
            rule_id: u32::from_be_bytes(rec[..4].try_into().unwrap()),
            position: u16::from_be_bytes([rec[4], rec[5]]),
            action,
        });
    }
    if Decision::aggregate(&matches) != decision {
        return Err(FrameError::BadVerdict("decision disagrees with matches".into()));
    }
    Ok(Some(Verdict { packet_id, decision, matches }))
}

/// Line-oriented verdict record: `packet_id, decision, [rule_id@position:action ...]`.
impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}, [", self.packet_id, self.decision)?;
        for (i, m) in self.matches.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}@{}:{}", m.rule_id, m.position, m.action)?;
        }
        f.write_str("]")
    }
}

/// Parses a record produced by `Verdict`'s `Display`.
pub fn parse_verdict_record(line: &str) -> Result<Verdict, FrameError> {
    let bad = || FrameError::BadVerdict(format!("unparseable record `{line}`"));
    let mut parts = line.splitn(3, ", ");
    let packet_id = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
    let decision = parts.next().and_then(Decision::parse).ok_or_else(bad)?;
    let list = parts
        .next()
        .and_then(|s| s.trim().strip_prefix('[')?.strip_suffix(']'))
        .ok_or_else(bad)?;
    let mut matches = Vec::new();
    for item in list.split_whitespace() {
        let (id, rest) = item.split_once('@').ok_or_else(bad)?;
        let (pos, action) = rest.split_once(':').ok_or_else(bad)?;
        matches.push(Match {
            rule_id: id.parse().map_err(|_| bad())?,
            position: pos.parse().map_err(|_| bad())?,
            action: ActionCode::parse(action).ok_or_else(bad)?,
        });
    }
    Ok(Verdict { packet_id, decision, matches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{shve_enc, MasterKey, Prf};
    use proptest::prelude::*;

    fn pkt(id: u64, payload: &[u8]) -> EncryptedPacket {
        let prf = Prf::new(&MasterKey::from_bytes(&[2; 16]).unwrap());
        shve_enc(&prf, payload, id).unwrap()
    }

    #[test]
    fn frame_layout() {
        let p = pkt(0x0102, &[0u8; 1500]);
        let bytes = encode_frame(&p);
        assert_eq!(bytes.len(), 18 + 7500);
        assert_eq!(&bytes[..8], b"SHVEPKT1");
        assert_eq!(&bytes[8..16], &0x0102u64.to_be_bytes());
        assert_eq!(&bytes[16..18], &1500u16.to_be_bytes());
        assert_eq!(encode_frame(&pkt(1, b"x")).len(), 18 + 5);
    }

    #[test]
    fn frame_reader_resyncs_after_garbage() {
        let a = pkt(1, b"first");
        let b = pkt(2, b"second");
        let c = pkt(3, b"third");
        let mut stream = encode_frame(&a);
        stream.extend_from_slice(b"garbageSHVE");
        stream.extend_from_slice(&encode_frame(&b));
        // zero-length frame
        stream.extend_from_slice(FRAME_MAGIC);
        stream.extend_from_slice(&[0u8; 10]);
        stream.extend_from_slice(&encode_frame(&c));
        let tail = encode_frame(&pkt(4, b"cut short"));
        stream.extend_from_slice(&tail[..tail.len() - 3]);

        let out: Vec<_> = FrameReader::new(&stream[..]).collect();
        assert_eq!(out.len(), 6, "{out:?}");
        assert_eq!(out[0].as_ref().unwrap(), &a);
        assert!(matches!(out[1], Err(FrameError::BadMagic)));
        assert_eq!(out[2].as_ref().unwrap(), &b);
        assert!(matches!(out[3], Err(FrameError::BadLength(0))));
        assert_eq!(out[4].as_ref().unwrap(), &c);
        assert!(matches!(out[5], Err(FrameError::Truncated)));
    }

    #[test]
    fn frame_reader_garbage_only() {
        let out: Vec<_> = FrameReader::new(&b"no frames in here at all"[..]).collect();
        assert_eq!(out.len(), 1);
        assert!(matches!(out[0], Err(FrameError::BadMagic)));
        assert_eq!(FrameReader::new(&b""[..]).count(), 0);
    }

    #[test]
    fn read_frame_errors() {
        let bytes = encode_frame(&pkt(9, b"abc"));
        assert!(matches!(read_frame(&mut &bytes[..5]), Err(FrameError::Truncated)));
        assert!(matches!(read_frame(&mut &bytes[..bytes.len() - 1]), Err(FrameError::Truncated)));
        let mut bad = bytes.clone();
        bad[16..18].copy_from_slice(&1501u16.to_be_bytes());
        assert!(matches!(read_frame(&mut &bad[..]), Err(FrameError::BadLength(1501))));
        assert!(read_frame(&mut &b""[..]).unwrap().is_none());
    }

    #[test]
    fn verdict_binary_and_text() {
        let v = Verdict::new(
            42,
            vec![
                Match { position: 100, rule_id: 9, action: ActionCode::Alert },
                Match { position: 14, rule_id: 7, action: ActionCode::Drop },
            ],
        );
        let bytes = encode_verdict(&v);
        assert_eq!(bytes.len(), 8 + 1 + 2 + 2 * 7);
        assert_eq!(bytes[8], 2);
        assert_eq!(read_verdict(&mut &bytes[..]).unwrap().unwrap(), v);
        assert_eq!(v.to_string(), "42, drop, [7@14:drop 9@100:alert]");
        assert_eq!(parse_verdict_record(&v.to_string()).unwrap(), v);

        let pass = Verdict::new(1, vec![]);
        assert_eq!(pass.to_string(), "1, pass, []");
        assert_eq!(parse_verdict_record("1, pass, []").unwrap(), pass);
        assert!(parse_verdict_record("1, maybe, []").is_err());
    }

    #[test]
    fn inconsistent_verdict_rejected() {
        let mut bytes = encode_verdict(&Verdict::new(1, vec![Match { position: 1, rule_id: 1, action: ActionCode::Log }]));
        bytes[8] = 0;
        assert!(matches!(read_verdict(&mut &bytes[..]), Err(FrameError::BadVerdict(_))));
    }

    proptest! {
        #[test]
        fn frame_round_trip(id in any::<u64>(), masks in proptest::collection::vec(any::<[u8; 5]>(), 1..=1500)) {
            let p = EncryptedPacket::from_masks(id, masks.into_iter().map(ByteMask).collect()).unwrap();
            let bytes = encode_frame(&p);
            prop_assert_eq!(bytes.len(), frame_len(p.len()));
            prop_assert_eq!(decode_frame(&bytes).unwrap(), p);
        }

        #[test]
        fn frame_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_frame(&bytes);
            let _ = FrameReader::new(&bytes[..]).count();
            let _ = read_verdict(&mut &bytes[..]);
        }
    }
}
