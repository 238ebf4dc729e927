use super::short_cmac::ShortCmac;
use super::{check_position, ByteMask, MasterKey, MASK_LEN, MAX_PAYLOAD};
use crate::error::Result;

/// Anything that can produce the mask of `byte` at a 1-based `position`.
///
/// Callers guarantee `1 <= position <= 1500`.
pub trait MaskSource {
    fn mask(&self, byte: u8, position: usize) -> ByteMask;
}

impl<T: MaskSource + ?Sized> MaskSource for &T {
    #[inline]
    fn mask(&self, byte: u8, position: usize) -> ByteMask {
        (**self).mask(byte, position)
    }
}

/// AES-CMAC keyed by the master key, truncated to five bytes.
///
/// Input encoding is the byte value followed by the big-endian 16-bit position.
#[derive(Clone)]
pub struct Prf {
    mac: ShortCmac,
}

impl Prf {
    pub fn new(msk: &MasterKey) -> Self {
        Prf { mac: ShortCmac::new(msk.as_bytes()) }
    }

    pub fn eval(&self, byte: u8, position: usize) -> Result<ByteMask> {
        check_position(position)?;
        Ok(self.mask(byte, position))
    }
}

impl MaskSource for Prf {
    #[inline]
    fn mask(&self, byte: u8, position: usize) -> ByteMask {
        debug_assert!((1..=MAX_PAYLOAD).contains(&position));
        let pos = (position as u16).to_be_bytes();
        let tag = self.mac.tag(&[byte, pos[0], pos[1]]);
        let mut out = [0u8; MASK_LEN];
        out.copy_from_slice(&tag[..MASK_LEN]);
        ByteMask(out)
    }
}

/// One-shot PRF evaluation.
pub fn prf_eval(msk: &MasterKey, byte: u8, position: usize) -> Result<ByteMask> {
    Prf::new(msk).eval(byte, position)
}

/// Every `(byte, position)` mask precomputed: 256 x 1500 entries, about 1.9 MB.
///
/// Rule compilation touches each cell many times, so it pays for itself once a
/// ruleset has more than a handful of full-window rules.
pub struct MaskTable {
    masks: Vec<ByteMask>,
}

impl MaskTable {
    pub fn build(prf: &Prf) -> Self {
        let mut masks = Vec::with_capacity(256 * MAX_PAYLOAD);
        for position in 1..=MAX_PAYLOAD {
            for byte in 0..=255u8 {
                masks.push(prf.mask(byte, position));
            }
        }
        MaskTable { masks }
    }
}

impl MaskSource for MaskTable {
    #[inline]
    fn mask(&self, byte: u8, position: usize) -> ByteMask {
        self.masks[(position - 1) * 256 + byte as usize]
    }
}
