use aes::cipher::{BlockEncrypt, KeyInit};
use aes::{Aes128Enc, Block};

use super::BLOCK_LEN;

/// AES-CMAC for messages shorter than one block.
///
/// Such a message is padded with `0x80 00..` and XORed with the second subkey,
/// so the tag is one cipher call. Every PRF and KDF input here is 3 or 13 bytes.
#[derive(Clone)]
pub(crate) struct ShortCmac {
    cipher: Aes128Enc,
    k2: u128,
}

fn dbl(x: u128) -> u128 {
    (x << 1) ^ if x >> 127 == 1 { 0x87 } else { 0 }
}

impl ShortCmac {
    pub(crate) fn new(key: &[u8; BLOCK_LEN]) -> Self {
        let cipher = Aes128Enc::new(key.into());
        let mut l = Block::default();
        cipher.encrypt_block(&mut l);
        let k2 = dbl(dbl(u128::from_be_bytes(l.into())));
        ShortCmac { cipher, k2 }
    }

    #[inline]
    pub(crate) fn tag(&self, msg: &[u8]) -> [u8; BLOCK_LEN] {
        assert!(msg.len() < BLOCK_LEN);
        let mut padded = [0u8; BLOCK_LEN];
        padded[..msg.len()].copy_from_slice(msg);
        padded[msg.len()] = 0x80;
        self.tag_padded(u128::from_be_bytes(padded))
    }

    /// Tag of a message already padded to a big-endian block.
    #[inline]
    pub(crate) fn tag_padded(&self, padded: u128) -> [u8; BLOCK_LEN] {
        let mut b = Block::from((padded ^ self.k2).to_be_bytes());
        self.cipher.encrypt_block(&mut b);
        b.into()
    }
}
