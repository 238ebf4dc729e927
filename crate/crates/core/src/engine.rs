//! Middlebox-side inspection: encrypted prefix filtering followed by trapdoor
//! matching restricted to the surviving positions.

use std::fmt;
use std::thread;

use crate::compile::{EncryptedFilter, EncryptedRuleDb};
use crate::crypto::{
    shve_plus_query, shve_query, ActionCode, EncryptedPacket, FilterTrapdoor, PatternTrapdoor, MAX_PAYLOAD,
};
use crate::oracle::PlainMatch;

/// Filter survivors, 1-based and sorted: `m1` for the short bucket, `m2` for the long one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidateSet {
    pub m1: Vec<u16>,
    pub m2: Vec<u16>,
}

/// Counts of cryptographic queries actually executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryStats {
    /// Filter trapdoor queries across `F1`, `F2` and linked `F3` entries.
    pub filter_queries: u64,
    /// Pattern trapdoor queries.
    pub pattern_queries: u64,
}

impl QueryStats {
    pub fn total(&self) -> u64 {
        self.filter_queries + self.pattern_queries
    }

    pub fn add(&mut self, other: QueryStats) {
        self.filter_queries += other.filter_queries;
        self.pattern_queries += other.pattern_queries;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Match {
    pub position: u16,
    pub rule_id: u32,
    pub action: ActionCode,
}

impl From<PlainMatch> for Match {
    fn from(m: PlainMatch) -> Self {
        Match { position: m.position as u16, rule_id: m.rule_id, action: m.action }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Pass,
    Alert,
    Drop,
    Log,
}

impl Decision {
    /// Wire code; equal to the action code of the deciding rule, 0 for pass.
    pub fn code(self) -> u8 {
        match self {
            Decision::Pass => 0,
            Decision::Alert => 1,
            Decision::Drop => 2,
            Decision::Log => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Decision::Pass),
            1 => Some(Decision::Alert),
            2 => Some(Decision::Drop),
            3 => Some(Decision::Log),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Pass => "pass",
            Decision::Alert => "alert",
            Decision::Drop => "drop",
            Decision::Log => "log",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Decision::Pass, Decision::Alert, Decision::Drop, Decision::Log]
            .into_iter()
            .find(|d| d.as_str() == s)
    }

    /// Most severe action among the matches: drop > alert > log > pass.
    pub fn aggregate(matches: &[Match]) -> Self {
        match matches.iter().map(|m| m.action).max_by_key(|a| a.severity()) {
            None | Some(ActionCode::Marker) => Decision::Pass,
            Some(ActionCode::Alert) => Decision::Alert,
            Some(ActionCode::Drop) => Decision::Drop,
            Some(ActionCode::Log) => Decision::Log,
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub packet_id: u64,
    pub decision: Decision,
    /// Sorted by position, then rule id.
    pub matches: Vec<Match>,
}

impl Verdict {
    pub fn new(packet_id: u64, mut matches: Vec<Match>) -> Self {
        matches.sort();
        Verdict { packet_id, decision: Decision::aggregate(&matches), matches }
    }
}

/// Runs every `F1` and `F2` trapdoor that fits in the packet; an `F2` hit
/// survives only if its linked `F3` trapdoor also matches.
pub fn filter_scan(filter: &EncryptedFilter, pkt: &EncryptedPacket) -> CandidateSet {
    filter_scan_counted(filter, pkt, &mut QueryStats::default())
}

pub fn filter_scan_counted(filter: &EncryptedFilter, pkt: &EncryptedPacket, stats: &mut QueryStats) -> CandidateSet {
    let len = pkt.len();
    let mut seen = [false; MAX_PAYLOAD + 1];
    let mut m1 = Vec::new();
    for t in &filter.f1 {
        let start = t.start as usize;
        if start + 1 > len {
            break;
        }
        if seen[start] {
            continue;
        }
        stats.filter_queries += 1;
        if shve_query(t, pkt) {
            seen[start] = true;
            m1.push(t.start);
        }
    }

    let mut m2 = Vec::new();
    if len > 3 {
        let mut seen = [false; MAX_PAYLOAD + 1];
        // adjacent identical f2 trapdoors share one answer
        let mut last: Option<(&FilterTrapdoor, bool)> = None;
        for (t, &link) in filter.f2.iter().zip(&filter.f3_link) {
            let start = t.start as usize;
            if start + 3 > len {
                break;
            }
            if seen[start] {
                continue;
            }
            let hit = match last {
                Some((prev, hit)) if prev == t => hit,
                _ => {
                    stats.filter_queries += 1;
                    shve_query(t, pkt)
                }
            };
            last = Some((t, hit));
            if !hit {
                continue;
            }
            stats.filter_queries += 1;
            if shve_query(&filter.f3[link as usize], pkt) {
                seen[start] = true;
                m2.push(t.start);
            }
        }
    }
    CandidateSet { m1, m2 }
}

#[inline]
fn query_into(t: &PatternTrapdoor, pkt: &EncryptedPacket, out: &mut Vec<Match>, stats: &mut QueryStats) {
    if t.start as usize + t.pattern_len as usize - 1 > pkt.len() {
        return;
    }
    stats.pattern_queries += 1;
    if let Some(p) = shve_plus_query(t, pkt) {
        out.push(Match { position: t.start, rule_id: p.rule_id, action: p.action });
    }
}

/// Queries short-bucket trapdoors at `m1`, long-bucket trapdoors at `m2`, and
/// every always-check (single-byte) trapdoor.
pub fn match_candidates(
    db: &EncryptedRuleDb,
    pkt: &EncryptedPacket,
    cands: &CandidateSet,
    always_check: &[PatternTrapdoor],
) -> Vec<Match> {
    match_candidates_counted(db, pkt, cands, always_check, &mut QueryStats::default())
}

pub fn match_candidates_counted(
    db: &EncryptedRuleDb,
    pkt: &EncryptedPacket,
    cands: &CandidateSet,
    always_check: &[PatternTrapdoor],
    stats: &mut QueryStats,
) -> Vec<Match> {
    let mut out = Vec::new();
    for &p in &cands.m1 {
        for t in db.short_bucket(p as usize) {
            // single-byte trapdoors are covered by `always_check`
            if t.pattern_len >= 2 {
                query_into(t, pkt, &mut out, stats);
            }
        }
    }
    for &p in &cands.m2 {
        for t in db.long_bucket(p as usize) {
            query_into(t, pkt, &mut out, stats);
        }
    }
    for t in always_check {
        if t.start as usize > pkt.len() {
            break;
        }
        query_into(t, pkt, &mut out, stats);
    }
    out.sort();
    out
}

/// Baseline without filtering: every trapdoor that fits in the packet is queried.
pub fn full_scan(db: &EncryptedRuleDb, pkt: &EncryptedPacket) -> Vec<Match> {
    full_scan_counted(db, pkt, &mut QueryStats::default())
}

pub fn full_scan_counted(db: &EncryptedRuleDb, pkt: &EncryptedPacket, stats: &mut QueryStats) -> Vec<Match> {
    let mut out = Vec::new();
    for p in 1..=pkt.len() {
        for t in db.short_bucket(p).iter().chain(db.long_bucket(p)) {
            query_into(t, pkt, &mut out, stats);
        }
    }
    out.sort();
    out
}

/// Single-byte trapdoors, which the filter cannot cover, sorted by start.
pub fn always_check_trapdoors(db: &EncryptedRuleDb) -> Vec<PatternTrapdoor> {
    (1..=MAX_PAYLOAD)
        .flat_map(|p| db.short_bucket(p).iter().filter(|t| t.pattern_len == 1).copied())
        .collect()
}

/// One-shot filtered inspection. Prefer [`Inspector`] for repeated use.
pub fn inspect(db: &EncryptedRuleDb, filter: &EncryptedFilter, pkt: &EncryptedPacket) -> Verdict {
    let always = always_check_trapdoors(db);
    let cands = filter_scan(filter, pkt);
    Verdict::new(pkt.packet_id, match_candidates(db, pkt, &cands, &always))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScanMode {
    #[default]
    Filtered,
    FullScan,
}

/// Read-only middlebox state shared across packets and worker threads.
pub struct Inspector {
    db: EncryptedRuleDb,
    filter: EncryptedFilter,
    always_check: Vec<PatternTrapdoor>,
}

impl Inspector {
    pub fn new(db: EncryptedRuleDb, filter: EncryptedFilter) -> Self {
        let always_check = always_check_trapdoors(&db);
        Inspector { db, filter, always_check }
    }

    pub fn db(&self) -> &EncryptedRuleDb {
        &self.db
    }

    pub fn filter(&self) -> &EncryptedFilter {
        &self.filter
    }

    pub fn inspect(&self, pkt: &EncryptedPacket) -> Verdict {
        self.inspect_counted(pkt, ScanMode::Filtered).0
    }

    pub fn inspect_counted(&self, pkt: &EncryptedPacket, mode: ScanMode) -> (Verdict, QueryStats) {
        let mut stats = QueryStats::default();
        let matches = match mode {
            ScanMode::Filtered => {
                let cands = filter_scan_counted(&self.filter, pkt, &mut stats);
                match_candidates_counted(&self.db, pkt, &cands, &self.always_check, &mut stats)
            }
            ScanMode::FullScan => full_scan_counted(&self.db, pkt, &mut stats),
        };
        (Verdict::new(pkt.packet_id, matches), stats)
    }

    /// Inspects a batch on `workers` threads; output order follows input order
    /// and does not depend on the worker count.
    pub fn inspect_batch(&self, packets: &[EncryptedPacket], mode: ScanMode, workers: usize) -> Vec<Verdict> {
        let workers = workers.max(1);
        if workers == 1 || packets.len() < 2 {
            return packets.iter().map(|p| self.inspect_counted(p, mode).0).collect();
        }
        let chunk = packets.len().div_ceil(workers);
        thread::scope(|s| {
            let handles: Vec<_> = packets
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|p| self.inspect_counted(p, mode).0).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("inspection worker panicked"))
                .collect()
        })
    }
}
