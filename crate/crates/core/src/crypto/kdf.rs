use std::sync::OnceLock;

use super::short_cmac::ShortCmac;
use super::{ByteMask, BLOCK_LEN};

// Public domain-separation key; the secret is the five-byte input.
const KDF_KEY: &[u8; 16] = b"shvebox-kdf-key1";
const LABEL: &[u8; 4] = b"seal";

fn kdf_mac() -> &'static ShortCmac {
    static MAC: OnceLock<ShortCmac> = OnceLock::new();
    MAC.get_or_init(|| ShortCmac::new(KDF_KEY))
}

/// Expands a 40-bit masked key into a 128-bit sealing key.
///
/// Counter-mode layout with a single iteration:
/// `0x01 || "seal" || 0x00 || k5 || 0x0080`, MACed with AES-CMAC under a fixed key.
pub fn kdf(k5: &ByteMask) -> [u8; BLOCK_LEN] {
    // assembled in a register; byte-wise stores followed by a block load stall
    kdf_mac().tag_padded(PADDED_TEMPLATE | (k5.to_u64() as u128) << 40)
}

// `0x01 || label || 0x00 || 00000 00000 || 0x0080 || 0x80 00 00`
const PADDED_TEMPLATE: u128 = u128::from_be_bytes([
    0x01, LABEL[0], LABEL[1], LABEL[2], LABEL[3], 0x00, 0, 0, 0, 0, 0, 0x00, 0x80, 0x80, 0, 0,
]);
