//! Symmetric hidden-vector primitives over byte positions.
//!
//! A payload `x` is encrypted position by position as `c_l = PRF(msk, x_l || l)`
//! truncated to five bytes. A trapdoor over a contiguous pattern hides a fresh
//! five-byte key `K` under the XOR of the pattern's own masks, and seals a
//! 16-byte message under `KDF(K)`. Only a ciphertext carrying the same bytes at
//! the same positions unmasks `K` and opens the message.
//!
//! All positions are 1-based, matching the rule window arithmetic.

mod kdf;
mod one_shot;
mod prf;
mod seal;
mod short_cmac;
mod shve;

use std::fmt;
use std::ops::{BitXor, BitXorAssign};

use rand::{CryptoRng, RngCore};

use crate::error::{Error, Result};

pub use kdf::kdf;
pub use prf::{prf_eval, MaskSource, MaskTable, Prf};
pub use seal::{open, seal, ActionCode, ActionPayload, PAYLOAD_MAGIC};
pub use shve::{
    shve_enc, shve_keygen, shve_keygen_with_key, shve_plus_keygen, shve_plus_keygen_with_key,
    shve_plus_query, shve_query, EncryptedPacket, FilterTrapdoor, PatternTrapdoor,
    FILTER_ENTRY_LEN, PATTERN_ENTRY_LEN,
};

/// Largest payload (and highest position) handled, the Ethernet MTU.
pub const MAX_PAYLOAD: usize = 1500;
/// Truncated PRF output length.
pub const MASK_LEN: usize = 5;
/// Sealed block and derived key length.
pub const BLOCK_LEN: usize = 16;
pub const MASTER_KEY_LEN: usize = 16;

/// The gateway's 128-bit secret.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterKey([u8; MASTER_KEY_LEN]);

impl MasterKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; MASTER_KEY_LEN];
        rng.fill_bytes(&mut bytes);
        MasterKey(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bytes: [u8; MASTER_KEY_LEN] = bytes.try_into().map_err(|_| Error::Length {
            expected: MASTER_KEY_LEN,
            actual: bytes.len(),
        })?;
        Ok(MasterKey(bytes))
    }

    pub fn as_bytes(&self) -> &[u8; MASTER_KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterKey(..)")
    }
}

/// A 40-bit truncated PRF value, also used for the masked key `d0` and `K`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ByteMask(pub [u8; MASK_LEN]);

impl ByteMask {
    pub const ZERO: ByteMask = ByteMask([0; MASK_LEN]);

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; MASK_LEN];
        rng.fill_bytes(&mut bytes);
        ByteMask(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; MASK_LEN] {
        &self.0
    }

    /// Big-endian value in the low 40 bits.
    #[inline]
    pub(crate) fn to_u64(self) -> u64 {
        let k = self.0;
        u64::from_be_bytes([0, 0, 0, k[0], k[1], k[2], k[3], k[4]])
    }

    #[inline]
    pub(crate) fn from_u64(v: u64) -> Self {
        let b = v.to_be_bytes();
        ByteMask([b[3], b[4], b[5], b[6], b[7]])
    }
}

impl BitXor for ByteMask {
    type Output = ByteMask;

    #[inline]
    fn bitxor(mut self, rhs: ByteMask) -> ByteMask {
        self ^= rhs;
        self
    }
}

impl BitXorAssign for ByteMask {
    #[inline]
    fn bitxor_assign(&mut self, rhs: ByteMask) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a ^= b;
        }
    }
}

impl fmt::Debug for ByteMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ByteMask(")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn check_position(position: usize) -> Result<()> {
    if (1..=MAX_PAYLOAD).contains(&position) {
        Ok(())
    } else {
        Err(Error::PositionOutOfRange(position))
    }
}

/// Checks that `len` bytes starting at 1-based `start` stay within the MTU.
pub(crate) fn check_window(start: usize, len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::EmptyPattern);
    }
    if start == 0 || start + len - 1 > MAX_PAYLOAD {
        return Err(Error::WindowOverflow { start, len });
    }
    Ok(())
}
