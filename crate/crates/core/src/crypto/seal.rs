use std::fmt;

use aes::cipher::{BlockDecrypt, KeyInit};
use aes::{Aes128Dec, Block};

use super::{one_shot, BLOCK_LEN};
use crate::error::{Error, Result};

/// Tag occupying the first eight bytes of every sealed plaintext.
pub const PAYLOAD_MAGIC: [u8; 8] = *b"SHVEACT1";

/// What the middlebox does with a packet carrying a matched pattern.
///
/// `Marker` never names a rule; it is the constant message sealed inside
/// filter trapdoors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ActionCode {
    Marker = 0,
    Alert = 1,
    Drop = 2,
    Log = 3,
}

impl ActionCode {
    pub fn from_u8(code: u8) -> Option<Self> {
        match code {
            0 => Some(ActionCode::Marker),
            1 => Some(ActionCode::Alert),
            2 => Some(ActionCode::Drop),
            3 => Some(ActionCode::Log),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionCode::Marker => "marker",
            ActionCode::Alert => "alert",
            ActionCode::Drop => "drop",
            ActionCode::Log => "log",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "alert" => Some(ActionCode::Alert),
            "drop" => Some(ActionCode::Drop),
            "log" => Some(ActionCode::Log),
            _ => None,
        }
    }

    /// Ordering used when several rules hit one packet: drop > alert > log.
    pub fn severity(self) -> u8 {
        match self {
            ActionCode::Marker => 0,
            ActionCode::Log => 1,
            ActionCode::Alert => 2,
            ActionCode::Drop => 3,
        }
    }
}

impl fmt::Display for ActionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The 16-byte message sealed in `d1`:
/// `magic (8) || action (1) || rule_id (4, BE) || 0 0 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ActionPayload {
    pub action: ActionCode,
    pub rule_id: u32,
}

impl ActionPayload {
    pub fn new(action: ActionCode, rule_id: u32) -> Self {
        ActionPayload { action, rule_id }
    }

    pub fn marker() -> Self {
        ActionPayload { action: ActionCode::Marker, rule_id: 0 }
    }

    pub fn is_marker(&self) -> bool {
        self.action == ActionCode::Marker
    }

    pub fn to_block(&self) -> [u8; BLOCK_LEN] {
        let mut block = [0u8; BLOCK_LEN];
        block[..8].copy_from_slice(&PAYLOAD_MAGIC);
        block[8] = self.action as u8;
        block[9..13].copy_from_slice(&self.rule_id.to_be_bytes());
        block
    }

    /// Parses a decrypted block; `None` unless magic, action code and the
    /// reserved bytes all check out.
    pub fn from_block(block: &[u8; BLOCK_LEN]) -> Option<Self> {
        if block[..8] != PAYLOAD_MAGIC || block[13..] != [0, 0, 0] {
            return None;
        }
        let action = ActionCode::from_u8(block[8])?;
        let rule_id = u32::from_be_bytes(block[9..13].try_into().unwrap());
        Some(ActionPayload { action, rule_id })
    }
}

/// Single-block AES-128 encryption of the payload. Each key seals exactly one block.
pub fn seal(key: &[u8; BLOCK_LEN], payload: &ActionPayload) -> [u8; BLOCK_LEN] {
    encrypt_block(key, payload.to_block())
}

/// Decrypts and validates a sealed block. A wrong key yields `Ok(None)`.
pub fn open(key: &[u8; BLOCK_LEN], block: &[u8]) -> Result<Option<ActionPayload>> {
    let block: &[u8; BLOCK_LEN] = block.try_into().map_err(|_| Error::Length {
        expected: BLOCK_LEN,
        actual: block.len(),
    })?;
    Ok(open_block(key, block))
}

#[inline]
pub(crate) fn open_block(key: &[u8; BLOCK_LEN], block: &[u8; BLOCK_LEN]) -> Option<ActionPayload> {
    let cipher = Aes128Dec::new(key.into());
    let mut b = Block::from(*block);
    cipher.decrypt_block(&mut b);
    ActionPayload::from_block(&b.into())
}

const MARKER_BLOCK: [u8; BLOCK_LEN] = *b"SHVEACT1\0\0\0\0\0\0\0\0";

/// True iff `block` opens to the filter marker under `key`.
///
/// The marker plaintext is a constant, so re-encrypting it and comparing is
/// equivalent to opening and validating, and needs only the encryption schedule.
#[inline]
pub(crate) fn seals_marker(key: &[u8; BLOCK_LEN], block: &[u8; BLOCK_LEN]) -> bool {
    encrypt_block(key, MARKER_BLOCK) == *block
}

#[inline]
fn encrypt_block(key: &[u8; BLOCK_LEN], plain: [u8; BLOCK_LEN]) -> [u8; BLOCK_LEN] {
    one_shot::encrypt(key, &plain)
}
