//! Gateway-side preprocessing: one byte-wise encryption per packet, streamed
//! to the middlebox as `SHVEPKT1` frames.

use std::io::{self, Write};

use crate::crypto::{shve_enc, EncryptedPacket, MasterKey, Prf, MAX_PAYLOAD};
use crate::error::{Error, Result};
use crate::wire::write_frame;

/// A plaintext packet ready for encryption.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourcePacket {
    /// Input payload this packet was segmented from.
    pub flow_id: u64,
    pub packet_id: u64,
    pub payload: Vec<u8>,
}

/// Splits a payload into MTU-sized segments. Patterns spanning a boundary are not matched.
pub fn segment(payload: &[u8]) -> impl Iterator<Item = &[u8]> {
    payload.chunks(MAX_PAYLOAD)
}

/// Turns a sequence of payloads into MTU-bounded packets with sequential ids.
///
/// Each input payload becomes one flow. Empty payloads produce no packets.
pub struct PacketSource<I> {
    payloads: I,
    next_flow: u64,
    next_packet: u64,
    pending: std::vec::IntoIter<SourcePacket>,
}

impl<I: Iterator<Item = Vec<u8>>> PacketSource<I> {
    pub fn new(payloads: I) -> Self {
        Self::starting_at(payloads, 0)
    }

    pub fn starting_at(payloads: I, first_packet_id: u64) -> Self {
        PacketSource {
            payloads,
            next_flow: 0,
            next_packet: first_packet_id,
            pending: Vec::new().into_iter(),
        }
    }
}

impl<I: Iterator<Item = Vec<u8>>> Iterator for PacketSource<I> {
    type Item = SourcePacket;

    fn next(&mut self) -> Option<SourcePacket> {
        loop {
            if let Some(p) = self.pending.next() {
                return Some(p);
            }
            let payload = self.payloads.next()?;
            let flow_id = self.next_flow;
            self.next_flow += 1;
            let mut segs = Vec::new();
            for chunk in segment(&payload) {
                segs.push(SourcePacket { flow_id, packet_id: self.next_packet, payload: chunk.to_vec() });
                self.next_packet += 1;
            }
            self.pending = segs.into_iter();
        }
    }
}

/// Parses one hex-encoded payload per line; blank lines and `#` comments are skipped.
pub fn payloads_from_hex_lines(text: &str) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bytes = decode_hex(line).map_err(|msg| Error::Parse { line: i + 1, msg })?;
        out.push(bytes);
    }
    Ok(out)
}

fn decode_hex(s: &str) -> std::result::Result<Vec<u8>, String> {
    let digits: String = s.chars().filter(|c| !c.is_ascii_whitespace()).collect();
    hex::decode(digits).map_err(|e| e.to_string())
}

pub struct Gateway {
    prf: Prf,
}

impl Gateway {
    pub fn new(msk: &MasterKey) -> Self {
        Gateway { prf: Prf::new(msk) }
    }

    /// Encrypts one payload of 1..=1500 bytes. The result serves both filtering and matching.
    pub fn preprocess(&self, payload: &[u8], packet_id: u64) -> Result<EncryptedPacket> {
        shve_enc(&self.prf, payload, packet_id)
    }
}

/// Consumer of encrypted packets, in order.
pub trait FrameSink {
    fn send(&mut self, pkt: &EncryptedPacket) -> io::Result<()>;
}

/// Writes `SHVEPKT1` frames to any byte sink.
pub struct FrameWriter<W>(pub W);

impl<W: Write> FrameSink for FrameWriter<W> {
    fn send(&mut self, pkt: &EncryptedPacket) -> io::Result<()> {
        write_frame(&mut self.0, pkt)
    }
}

impl FrameSink for Vec<EncryptedPacket> {
    fn send(&mut self, pkt: &EncryptedPacket) -> io::Result<()> {
        self.push(pkt.clone());
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("sink failed after {sent} frames: {source}")]
pub struct StreamError {
    pub sent: usize,
    #[source]
    pub source: io::Error,
}

/// Encrypts and forwards every packet; returns the number of frames sent.
pub fn stream<I, S>(gw: &Gateway, source: I, sink: &mut S) -> std::result::Result<usize, StreamError>
where
    I: IntoIterator<Item = SourcePacket>,
    S: FrameSink + ?Sized,
{
    let mut sent = 0;
    for p in source {
        let pkt = gw
            .preprocess(&p.payload, p.packet_id)
            .expect("source packets are segmented to 1..=1500 bytes");
        sink.send(&pkt).map_err(|source| StreamError { sent, source })?;
        sent += 1;
    }
    Ok(sent)
}
