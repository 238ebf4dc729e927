use std::io::Write;

use rand::{CryptoRng, RngCore};

use super::{with_masks, SHORT_PATTERN_MAX};
use crate::codec::Reader;
use crate::crypto::{
    shve_plus_keygen, ActionPayload, MaskSource, MasterKey, PatternTrapdoor, MAX_PAYLOAD,
    PATTERN_ENTRY_LEN,
};
use crate::error::{Error, Result};
use crate::rules::Rule;

pub const DB_MAGIC: &[u8; 8] = b"SHVEPDB1";
pub const DB_FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 8 + 2 + 8;
const BUCKET_HEADER_LEN: usize = 4;

/// Pattern trapdoors bucketed by start position, split by pattern length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedRuleDb {
    short: Vec<Vec<PatternTrapdoor>>,
    long: Vec<Vec<PatternTrapdoor>>,
    total: usize,
}

impl Default for EncryptedRuleDb {
    fn default() -> Self {
        Self::new()
    }
}

impl EncryptedRuleDb {
    pub fn new() -> Self {
        EncryptedRuleDb {
            short: vec![Vec::new(); MAX_PAYLOAD],
            long: vec![Vec::new(); MAX_PAYLOAD],
            total: 0,
        }
    }

    pub fn insert(&mut self, t: PatternTrapdoor) {
        let idx = t.start as usize - 1;
        if t.pattern_len as usize <= SHORT_PATTERN_MAX {
            self.short[idx].push(t);
        } else {
            self.long[idx].push(t);
        }
        self.total += 1;
    }

    /// Total trapdoor count.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Trapdoors of patterns of length <= 3 starting at a 1-based position.
    pub fn short_bucket(&self, position: usize) -> &[PatternTrapdoor] {
        &self.short[position - 1]
    }

    pub fn long_bucket(&self, position: usize) -> &[PatternTrapdoor] {
        &self.long[position - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = &PatternTrapdoor> {
        self.short.iter().chain(self.long.iter()).flatten()
    }

    /// Exact byte size of the serialized file.
    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + 2 * MAX_PAYLOAD * BUCKET_HEADER_LEN + PATTERN_ENTRY_LEN * self.total
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DB_MAGIC)?;
        w.write_all(&DB_FORMAT_VERSION.to_be_bytes())?;
        w.write_all(&(self.total as u64).to_be_bytes())?;
        for pos in 0..MAX_PAYLOAD {
            for bucket in [&self.short[pos], &self.long[pos]] {
                w.write_all(&(bucket.len() as u32).to_be_bytes())?;
                for t in bucket {
                    w.write_all(&t.to_entry())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "pattern database");
        r.expect_magic(DB_MAGIC)?;
        r.expect_version(DB_FORMAT_VERSION)?;
        let declared = r.u64()?;

        let mut db = EncryptedRuleDb::new();
        for pos in 1..=MAX_PAYLOAD {
            for long in [false, true] {
                let count = r.u32()? as usize;
                let entries = r.take(count.checked_mul(PATTERN_ENTRY_LEN).ok_or_else(|| {
                    Error::format("bucket count overflows")
                })?)?;
                for entry in entries.chunks_exact(PATTERN_ENTRY_LEN) {
                    let t = PatternTrapdoor::from_entry(pos as u16, entry)?;
                    if (t.pattern_len as usize > SHORT_PATTERN_MAX) != long {
                        return Err(Error::format(format!(
                            "length-{} entry in the wrong bucket at position {pos}",
                            t.pattern_len
                        )));
                    }
                    db.insert(t);
                }
            }
        }
        r.finish()?;
        if declared != db.total as u64 {
            return Err(Error::format(format!(
                "header declares {declared} entries, buckets hold {}",
                db.total
            )));
        }
        Ok(db)
    }
}

/// Emits one trapdoor per rule placement, each under a fresh key.
pub fn compile_patterns<R: RngCore + CryptoRng>(msk: &MasterKey, rules: &[Rule], rng: &mut R) -> EncryptedRuleDb {
    with_masks(msk, rules, |masks| compile_patterns_with(&masks, rules, rng))
}

pub fn compile_patterns_with<M, R>(masks: &M, rules: &[Rule], rng: &mut R) -> EncryptedRuleDb
where
    M: MaskSource,
    R: RngCore + CryptoRng,
{
    let mut db = EncryptedRuleDb::new();
    for rule in rules {
        let payload = ActionPayload::new(rule.action, rule.rule_id);
        for start in rule.placements() {
            let t = shve_plus_keygen(masks, start, &rule.pattern, payload, rng)
                .expect("placements stay within the MTU");
            db.insert(t);
        }
    }
    db
}
