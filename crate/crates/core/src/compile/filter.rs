use std::collections::BTreeSet;
use std::io::Write;

use rand::{CryptoRng, RngCore};

use super::{with_masks, SHORT_PATTERN_MAX};
use crate::codec::Reader;
use crate::crypto::{shve_keygen, FilterTrapdoor, MaskSource, MasterKey, FILTER_ENTRY_LEN};
use crate::error::{Error, Result};
use crate::rules::Rule;

pub const FILTER_MAGIC: &[u8; 8] = b"SHVEFLT1";
pub const FILTER_FORMAT_VERSION: u16 = 1;

/// Two-level encrypted prefix filter.
///
/// `f1` holds first-two-byte windows of patterns of length 2..=3, `f2` those of
/// longer patterns. Each `f2` entry links to exactly one `f3` entry holding the
/// same pattern's bytes 3..4 two positions later. Entries are sorted by start.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncryptedFilter {
    pub f1: Vec<FilterTrapdoor>,
    pub f2: Vec<FilterTrapdoor>,
    pub f3_link: Vec<u32>,
    pub f3: Vec<FilterTrapdoor>,
}

impl EncryptedFilter {
    pub fn entry_count(&self) -> usize {
        self.f1.len() + self.f2.len() + self.f3.len()
    }

    pub fn serialized_len(&self) -> usize {
        8 + 2 + 3 * 4 + FILTER_ENTRY_LEN * self.entry_count() + 4 * self.f2.len()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FILTER_MAGIC)?;
        w.write_all(&FILTER_FORMAT_VERSION.to_be_bytes())?;
        w.write_all(&(self.f1.len() as u32).to_be_bytes())?;
        for t in &self.f1 {
            w.write_all(&t.to_entry())?;
        }
        w.write_all(&(self.f2.len() as u32).to_be_bytes())?;
        for (t, link) in self.f2.iter().zip(&self.f3_link) {
            w.write_all(&t.to_entry())?;
            w.write_all(&link.to_be_bytes())?;
        }
        w.write_all(&(self.f3.len() as u32).to_be_bytes())?;
        for t in &self.f3 {
            w.write_all(&t.to_entry())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "filter");
        r.expect_magic(FILTER_MAGIC)?;
        r.expect_version(FILTER_FORMAT_VERSION)?;

        let n1 = r.u32()? as usize;
        let mut f1 = Vec::with_capacity(n1.min(bytes.len() / FILTER_ENTRY_LEN));
        for _ in 0..n1 {
            f1.push(FilterTrapdoor::from_entry(r.take(FILTER_ENTRY_LEN)?)?);
        }

        let n2 = r.u32()? as usize;
        let mut f2 = Vec::with_capacity(n2.min(bytes.len() / FILTER_ENTRY_LEN));
        let mut f3_link = Vec::with_capacity(f2.capacity());
        for _ in 0..n2 {
            f2.push(FilterTrapdoor::from_entry(r.take(FILTER_ENTRY_LEN)?)?);
            f3_link.push(r.u32()?);
        }

        let n3 = r.u32()? as usize;
        let mut f3 = Vec::with_capacity(n3.min(bytes.len() / FILTER_ENTRY_LEN));
        for _ in 0..n3 {
            f3.push(FilterTrapdoor::from_entry(r.take(FILTER_ENTRY_LEN)?)?);
        }
        r.finish()?;

        for (t, &link) in f2.iter().zip(&f3_link) {
            let linked = f3
                .get(link as usize)
                .ok_or_else(|| Error::format(format!("f3 link {link} out of range")))?;
            if linked.start != t.start + 2 {
                return Err(Error::format(format!(
                    "f3 entry {link} starts at {}, expected {}",
                    linked.start,
                    t.start + 2
                )));
            }
        }

        let mut filter = EncryptedFilter { f1, f2, f3_link, f3 };
        filter.sort_by_start();
        Ok(filter)
    }

    /// Restores the start ordering the engine relies on for early exit.
    fn sort_by_start(&mut self) {
        self.f1.sort_by_key(|t| t.start);
        if self.f2.windows(2).any(|w| w[0].start > w[1].start) {
            let mut paired: Vec<_> = self.f2.drain(..).zip(self.f3_link.drain(..)).collect();
            paired.sort_by_key(|(t, _)| t.start);
            (self.f2, self.f3_link) = paired.into_iter().unzip();
        }
    }
}

/// Builds the filter with `(window, start)` deduplication.
pub fn compile_filter<R: RngCore + CryptoRng>(msk: &MasterKey, rules: &[Rule], rng: &mut R) -> EncryptedFilter {
    with_masks(msk, rules, |masks| compile_filter_with(&masks, rules, true, rng))
}

/// Builds the filter; `dedup = false` emits one entry per rule placement.
///
/// Long patterns sharing a first window at a start share one `f2` trapdoor,
/// repeated once per distinct next window so that every `f2` entry keeps a
/// single `f3` partner.
pub fn compile_filter_with<M, R>(masks: &M, rules: &[Rule], dedup: bool, rng: &mut R) -> EncryptedFilter
where
    M: MaskSource,
    R: RngCore + CryptoRng,
{
    let mut short: Vec<(u16, [u8; 2])> = Vec::new();
    let mut long: Vec<(u16, [u8; 2], [u8; 2])> = Vec::new();

    for rule in rules {
        let p = &rule.pattern;
        if p.len() < 2 {
            continue;
        }
        let first = [p[0], p[1]];
        for start in rule.placements() {
            if p.len() <= SHORT_PATTERN_MAX {
                short.push((start as u16, first));
            } else {
                long.push((start as u16, first, [p[2], p[3]]));
            }
        }
    }

    if dedup {
        short = short.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        long = long.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    } else {
        short.sort_by_key(|e| e.0);
        long.sort_by_key(|e| e.0);
    }

    let keygen = |start: usize, window: [u8; 2], rng: &mut R| {
        shve_keygen(masks, start, window, rng).expect("filter windows stay within the MTU")
    };

    let mut filter = EncryptedFilter::default();
    let mut prev = None;
    for (start, window) in short {
        filter.f1.push(keygen(start as usize, window, rng));
    }
    for (start, first, next) in long {
        // one trapdoor per (window, start): repeats are the same entry, each with its own link
        let shared = dedup && matches!(filter.f2.last(), Some(t) if t.start == start && prev == Some(first));
        let t = if shared { *filter.f2.last().unwrap() } else { keygen(start as usize, first, rng) };
        prev = Some(first);
        filter.f2.push(t);
        filter.f3_link.push(filter.f3.len() as u32);
        filter.f3.push(keygen(start as usize + 2, next, rng));
    }
    filter
}
