use rand::{CryptoRng, RngCore};

use super::kdf::kdf;
use super::prf::{MaskSource, Prf};
use super::seal::{open_block, seal, seals_marker, ActionPayload};
use super::{check_window, ByteMask, BLOCK_LEN, MASK_LEN, MAX_PAYLOAD};
use crate::error::{Error, Result};

/// Serialized size of a pattern trapdoor inside a bucket: `len (2) || d0 (5) || d1 (16)`.
pub const PATTERN_ENTRY_LEN: usize = 2 + MASK_LEN + BLOCK_LEN;
/// Serialized size of a filter trapdoor: `start (2) || d0 (5) || d1 (16)`.
pub const FILTER_ENTRY_LEN: usize = 2 + MASK_LEN + BLOCK_LEN;

/// Byte-wise, position-bound encryption of one payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedPacket {
    pub packet_id: u64,
    masks: Vec<ByteMask>,
}

impl EncryptedPacket {
    pub fn from_masks(packet_id: u64, masks: Vec<ByteMask>) -> Result<Self> {
        if masks.is_empty() || masks.len() > MAX_PAYLOAD {
            return Err(Error::PayloadLength(masks.len()));
        }
        Ok(EncryptedPacket { packet_id, masks })
    }

    /// Payload length in bytes.
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[ByteMask] {
        &self.masks
    }

    /// Mask of the byte at a 1-based position.
    pub fn mask_at(&self, position: usize) -> ByteMask {
        self.masks[position - 1]
    }

    /// XOR of the masks covering `len` bytes from `start`, or `None` past the end.
    #[inline]
    fn fold(&self, start: usize, len: usize) -> Option<ByteMask> {
        let end = (start - 1).checked_add(len)?;
        let window = self.masks.get(start - 1..end)?;
        Some(ByteMask::from_u64(window.iter().fold(0, |acc, m| acc ^ m.to_u64())))
    }
}

/// Trapdoor for a contiguous pattern at one placement; seals a rule action.
///
/// `start` is carried by the storage bucket and is not part of the 23-byte entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatternTrapdoor {
    pub start: u16,
    pub pattern_len: u16,
    pub d0: ByteMask,
    pub d1: [u8; BLOCK_LEN],
}

impl PatternTrapdoor {
    pub fn to_entry(&self) -> [u8; PATTERN_ENTRY_LEN] {
        let mut out = [0u8; PATTERN_ENTRY_LEN];
        out[..2].copy_from_slice(&self.pattern_len.to_be_bytes());
        out[2..7].copy_from_slice(&self.d0.0);
        out[7..].copy_from_slice(&self.d1);
        out
    }

    pub fn from_entry(start: u16, entry: &[u8]) -> Result<Self> {
        let entry: &[u8; PATTERN_ENTRY_LEN] = entry.try_into().map_err(|_| Error::Length {
            expected: PATTERN_ENTRY_LEN,
            actual: entry.len(),
        })?;
        let pattern_len = u16::from_be_bytes([entry[0], entry[1]]);
        if check_window(start as usize, pattern_len as usize).is_err() {
            return Err(Error::format(format!(
                "pattern entry of length {pattern_len} does not fit at start {start}"
            )));
        }
        Ok(PatternTrapdoor {
            start,
            pattern_len,
            d0: ByteMask(entry[2..7].try_into().unwrap()),
            d1: entry[7..].try_into().unwrap(),
        })
    }
}

/// Membership-only trapdoor over a 2-byte window at `start, start + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterTrapdoor {
    pub start: u16,
    pub d0: ByteMask,
    pub d1: [u8; BLOCK_LEN],
}

impl FilterTrapdoor {
    pub fn to_entry(&self) -> [u8; FILTER_ENTRY_LEN] {
        let mut out = [0u8; FILTER_ENTRY_LEN];
        out[..2].copy_from_slice(&self.start.to_be_bytes());
        out[2..7].copy_from_slice(&self.d0.0);
        out[7..].copy_from_slice(&self.d1);
        out
    }

    pub fn from_entry(entry: &[u8]) -> Result<Self> {
        let entry: &[u8; FILTER_ENTRY_LEN] = entry.try_into().map_err(|_| Error::Length {
            expected: FILTER_ENTRY_LEN,
            actual: entry.len(),
        })?;
        let start = u16::from_be_bytes([entry[0], entry[1]]);
        if check_window(start as usize, 2).is_err() {
            return Err(Error::format(format!("filter entry start {start} out of range")));
        }
        Ok(FilterTrapdoor {
            start,
            d0: ByteMask(entry[2..7].try_into().unwrap()),
            d1: entry[7..].try_into().unwrap(),
        })
    }
}

/// Encrypts every payload byte against its 1-based position.
pub fn shve_enc(prf: &Prf, payload: &[u8], packet_id: u64) -> Result<EncryptedPacket> {
    if payload.is_empty() || payload.len() > MAX_PAYLOAD {
        return Err(Error::PayloadLength(payload.len()));
    }
    let masks = payload
        .iter()
        .enumerate()
        .map(|(i, &b)| prf.mask(b, i + 1))
        .collect();
    Ok(EncryptedPacket { packet_id, masks })
}

fn masked_key<M: MaskSource>(masks: &M, start: usize, pattern: &[u8], key: ByteMask) -> ByteMask {
    pattern
        .iter()
        .enumerate()
        .fold(key, |acc, (j, &b)| acc ^ masks.mask(b, start + j))
}

/// Builds a pattern trapdoor under a fresh random five-byte key.
pub fn shve_plus_keygen<M, R>(
    masks: &M,
    start: usize,
    pattern: &[u8],
    payload: ActionPayload,
    rng: &mut R,
) -> Result<PatternTrapdoor>
where
    M: MaskSource,
    R: RngCore + CryptoRng,
{
    shve_plus_keygen_with_key(masks, start, pattern, payload, ByteMask::random(rng))
}

/// [`shve_plus_keygen`] with the hidden key supplied by the caller.
///
/// Reusing a key across trapdoors lets the middlebox correlate them; this
/// entry point exists for known-answer tests.
pub fn shve_plus_keygen_with_key<M: MaskSource>(
    masks: &M,
    start: usize,
    pattern: &[u8],
    payload: ActionPayload,
    key: ByteMask,
) -> Result<PatternTrapdoor> {
    check_window(start, pattern.len())?;
    Ok(PatternTrapdoor {
        start: start as u16,
        pattern_len: pattern.len() as u16,
        d0: masked_key(masks, start, pattern, key),
        d1: seal(&kdf(&key), &payload),
    })
}

/// Builds a filter trapdoor over a 2-byte window sealing the constant marker.
pub fn shve_keygen<M, R>(masks: &M, start: usize, window: [u8; 2], rng: &mut R) -> Result<FilterTrapdoor>
where
    M: MaskSource,
    R: RngCore + CryptoRng,
{
    shve_keygen_with_key(masks, start, window, ByteMask::random(rng))
}

pub fn shve_keygen_with_key<M: MaskSource>(
    masks: &M,
    start: usize,
    window: [u8; 2],
    key: ByteMask,
) -> Result<FilterTrapdoor> {
    check_window(start, 2)?;
    Ok(FilterTrapdoor {
        start: start as u16,
        d0: masked_key(masks, start, &window, key),
        d1: seal(&kdf(&key), &ActionPayload::marker()),
    })
}

/// Membership test: does the packet carry the trapdoor's two bytes at its position?
///
/// A window running past the end of the packet is a non-match.
#[inline]
pub fn shve_query(t: &FilterTrapdoor, pkt: &EncryptedPacket) -> bool {
    match pkt.fold(t.start as usize, 2) {
        Some(acc) => seals_marker(&kdf(&(acc ^ t.d0)), &t.d1),
        None => false,
    }
}

/// Recovers the sealed action iff the packet carries the pattern at the trapdoor's start.
///
/// Costs `pattern_len` mask XORs and one block decryption.
#[inline]
pub fn shve_plus_query(t: &PatternTrapdoor, pkt: &EncryptedPacket) -> Option<ActionPayload> {
    let acc = pkt.fold(t.start as usize, t.pattern_len as usize)?;
    open_block(&kdf(&(acc ^ t.d0)), &t.d1).filter(|p| !p.is_marker())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{ActionCode, MasterKey};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn fixed_prf() -> Prf {
        Prf::new(&MasterKey::from_bytes(&(0u8..16).collect::<Vec<_>>()).unwrap())
    }

    fn alert(id: u32) -> ActionPayload {
        ActionPayload::new(ActionCode::Alert, id)
    }

    #[test]
    fn known_answer_pattern_trapdoor() {
        // d0 = K ^ masks of 00 01 86 A0 at positions 12..15, masks computed with
        // an external AES-CMAC implementation under msk = 00 01 .. 0f.
        let t = shve_plus_keygen_with_key(
            &fixed_prf(),
            12,
            &[0x00, 0x01, 0x86, 0xa0],
            alert(1),
            ByteMask([1, 2, 3, 4, 5]),
        )
        .unwrap();
        assert_eq!(t.d0.0, [0xaf, 0xe4, 0x83, 0x39, 0xad]);
        assert_eq!(t.pattern_len, 4);
        assert_eq!(t.start, 12);
    }

    #[test]
    fn known_answer_filter_trapdoor() {
        let t = shve_keygen_with_key(&fixed_prf(), 5, *b"ab", ByteMask([1, 2, 3, 4, 5])).unwrap();
        assert_eq!(t.d0.0, [0x8b, 0xec, 0x90, 0x91, 0xd6]);
    }

    #[test]
    fn single_byte_pattern_degenerates() {
        let prf = fixed_prf();
        let k = ByteMask([9, 9, 9, 9, 9]);
        let t = shve_plus_keygen_with_key(&prf, 1, b"A", alert(1), k).unwrap();
        assert_eq!(t.d0, prf.eval(b'A', 1).unwrap() ^ k);
    }

    #[test]
    fn query_recovers_on_match_only() {
        let prf = fixed_prf();
        let mut rng = StdRng::seed_from_u64(11);
        let payload = b"xxxxGET /index.html";
        let pkt = shve_enc(&prf, payload, 1).unwrap();
        let t = shve_plus_keygen(&prf, 5, b"GET", alert(42), &mut rng).unwrap();
        assert_eq!(shve_plus_query(&t, &pkt), Some(alert(42)));

        let shifted = shve_plus_keygen(&prf, 6, b"GET", alert(42), &mut rng).unwrap();
        assert_eq!(shve_plus_query(&shifted, &pkt), None);

        let other = shve_enc(&prf, b"xxxxGEX /index.html", 2).unwrap();
        assert_eq!(shve_plus_query(&t, &other), None);
    }

    #[test]
    fn pattern_past_end_is_no_match() {
        let prf = fixed_prf();
        let mut rng = StdRng::seed_from_u64(12);
        let pkt = shve_enc(&prf, b"abc", 1).unwrap();
        let t = shve_plus_keygen(&prf, 2, b"bcd", alert(1), &mut rng).unwrap();
        assert_eq!(shve_plus_query(&t, &pkt), None);
        let f = shve_keygen(&prf, 3, *b"cd", &mut rng).unwrap();
        assert!(!shve_query(&f, &pkt));
    }

    #[test]
    fn filter_query_semantics() {
        let prf = fixed_prf();
        let mut rng = StdRng::seed_from_u64(13);
        let pkt = shve_enc(&prf, b"zzab", 1).unwrap();
        assert!(shve_query(&shve_keygen(&prf, 3, *b"ab", &mut rng).unwrap(), &pkt));
        assert!(!shve_query(&shve_keygen(&prf, 3, *b"ac", &mut rng).unwrap(), &pkt));
        assert!(!shve_query(&shve_keygen(&prf, 2, *b"ab", &mut rng).unwrap(), &pkt));
    }

    #[test]
    fn filter_marker_never_surfaces_as_action() {
        let prf = fixed_prf();
        let key = ByteMask([3; 5]);
        let f = shve_keygen_with_key(&prf, 1, *b"ab", key).unwrap();
        // Same d0/d1 viewed as a pattern trapdoor: opens to the marker, which is not an action.
        let as_pattern = PatternTrapdoor { start: 1, pattern_len: 2, d0: f.d0, d1: f.d1 };
        let pkt = shve_enc(&prf, b"ab", 1).unwrap();
        assert!(shve_query(&f, &pkt));
        assert_eq!(shve_plus_query(&as_pattern, &pkt), None);
    }

    #[test]
    fn enc_length_bounds() {
        let prf = fixed_prf();
        assert!(matches!(shve_enc(&prf, &[], 0), Err(Error::PayloadLength(0))));
        assert!(matches!(shve_enc(&prf, &[0; 1501], 0), Err(Error::PayloadLength(1501))));
        assert_eq!(shve_enc(&prf, &[0; 1500], 0).unwrap().len(), 1500);
        assert_eq!(shve_enc(&prf, &[7], 0).unwrap().len(), 1);
    }

    #[test]
    fn keygen_window_overflow() {
        let prf = fixed_prf();
        let mut rng = StdRng::seed_from_u64(14);
        assert!(matches!(
            shve_plus_keygen(&prf, 1499, b"abc", alert(1), &mut rng),
            Err(Error::WindowOverflow { start: 1499, len: 3 })
        ));
        assert!(shve_keygen(&prf, 1500, *b"ab", &mut rng).is_err());
        assert!(shve_keygen(&prf, 1499, *b"ab", &mut rng).is_ok());
        assert!(matches!(
            shve_plus_keygen(&prf, 1, b"", alert(1), &mut rng),
            Err(Error::EmptyPattern)
        ));
    }

    #[test]
    fn fresh_keys_per_trapdoor() {
        let prf = fixed_prf();
        let mut rng = StdRng::seed_from_u64(15);
        let a = shve_plus_keygen(&prf, 3, b"abc", alert(1), &mut rng).unwrap();
        let b = shve_plus_keygen(&prf, 3, b"abc", alert(1), &mut rng).unwrap();
        assert_ne!(a.d0, b.d0);
        assert_ne!(a.d1, b.d1);
    }

    #[test]
    fn entry_encoding() {
        let t = PatternTrapdoor { start: 17, pattern_len: 4, d0: ByteMask([1, 2, 3, 4, 5]), d1: [9; 16] };
        let e = t.to_entry();
        assert_eq!(e.len(), 23);
        assert_eq!(&e[..2], &[0, 4]);
        assert_eq!(PatternTrapdoor::from_entry(17, &e).unwrap(), t);
        assert!(PatternTrapdoor::from_entry(1498, &e).is_err());

        let f = FilterTrapdoor { start: 300, d0: ByteMask([5; 5]), d1: [1; 16] };
        let e = f.to_entry();
        assert_eq!(&e[..2], &300u16.to_be_bytes());
        assert_eq!(FilterTrapdoor::from_entry(&e).unwrap(), f);
    }
}
