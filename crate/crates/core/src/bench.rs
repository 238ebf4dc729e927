//! Benchmark harness: filtered vs full-scan inspection on a seeded synthetic corpus.

use std::fmt;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::compile::{compile_filter, compile_patterns};
use crate::config::BenchParams;
use crate::corpus::{synthetic_rules, synthetic_traffic, RuleParams, TrafficParams};
use crate::crypto::{shve_enc, EncryptedPacket, MasterKey, Prf, MASK_LEN};
use crate::engine::{Inspector, QueryStats, ScanMode};

#[derive(Clone, Debug)]
pub struct RunStats {
    pub packets: usize,
    pub elapsed: Duration,
    pub p50: Duration,
    pub p95: Duration,
    pub queries: QueryStats,
    pub payload_bytes: usize,
}

impl RunStats {
    pub fn pps(&self) -> f64 {
        self.packets as f64 / self.elapsed.as_secs_f64()
    }

    /// Plaintext payload megabytes per second.
    pub fn mbps(&self) -> f64 {
        self.payload_bytes as f64 / 1e6 / self.elapsed.as_secs_f64()
    }
}

fn percentile(sorted: &[Duration], q: f64) -> Duration {
    if sorted.is_empty() {
        return Duration::ZERO;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Inspects every packet once on the calling thread, timing each.
pub fn measure(inspector: &Inspector, packets: &[EncryptedPacket], mode: ScanMode) -> RunStats {
    let mut lat = Vec::with_capacity(packets.len());
    let mut queries = QueryStats::default();
    let start = Instant::now();
    for p in packets {
        let t = Instant::now();
        let (_, q) = inspector.inspect_counted(p, mode);
        lat.push(t.elapsed());
        queries.add(q);
    }
    let elapsed = start.elapsed();
    lat.sort_unstable();
    RunStats {
        packets: packets.len(),
        elapsed,
        p50: percentile(&lat, 0.5),
        p95: percentile(&lat, 0.95),
        queries,
        payload_bytes: packets.iter().map(|p| p.len()).sum(),
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub rules: usize,
    pub db_entries: usize,
    pub filter_entries: usize,
    pub compile_time: Duration,
    pub payload_bytes: usize,
    pub body_bytes: usize,
    pub malicious_packets: usize,
    pub filtered: RunStats,
    pub unfiltered: Option<RunStats>,
}

impl BenchReport {
    pub fn bandwidth_ratio(&self) -> f64 {
        self.body_bytes as f64 / self.payload_bytes as f64
    }

    pub fn speedup(&self) -> Option<f64> {
        let u = self.unfiltered.as_ref()?;
        Some(u.elapsed.as_secs_f64() / self.filtered.elapsed.as_secs_f64())
    }
}

/// Builds the corpus from `params.seed`, compiles it under `msk`, and times both scan modes
/// (the full scan is skipped when `with_baseline` is false).
pub fn run_bench(msk: &MasterKey, params: &BenchParams, with_baseline: bool) -> BenchReport {
    let rules = synthetic_rules(params.seed, RuleParams { count: params.rules, ..RuleParams::default() });
    let traffic = synthetic_traffic(
        &rules,
        params.seed.wrapping_add(1),
        TrafficParams {
            packets: params.packets,
            min_len: params.min_len,
            max_len: params.max_len,
            malicious_fraction: params.malicious_fraction,
        },
    );
    let mut rng = StdRng::seed_from_u64(params.seed.wrapping_add(2));
    let t = Instant::now();
    let db = compile_patterns(msk, &rules, &mut rng);
    let filter = compile_filter(msk, &rules, &mut rng);
    let compile_time = t.elapsed();

    let prf = Prf::new(msk);
    let packets: Vec<EncryptedPacket> = traffic
        .iter()
        .enumerate()
        .map(|(i, p)| shve_enc(&prf, &p.payload, i as u64).expect("corpus payloads are 1..=1500 bytes"))
        .collect();
    let payload_bytes = traffic.iter().map(|p| p.payload.len()).sum();
    let body_bytes = packets.iter().map(|p| p.len() * MASK_LEN).sum();

    let db_entries = db.len();
    let filter_entries = filter.entry_count();
    let inspector = Inspector::new(db, filter);
    let filtered = measure(&inspector, &packets, ScanMode::Filtered);
    let unfiltered = with_baseline.then(|| measure(&inspector, &packets, ScanMode::FullScan));
    BenchReport {
        rules: rules.len(),
        db_entries,
        filter_entries,
        compile_time,
        payload_bytes,
        body_bytes,
        malicious_packets: traffic.iter().filter(|p| p.planted.is_some()).count(),
        filtered,
        unfiltered,
    }
}

fn write_run(f: &mut fmt::Formatter<'_>, name: &str, r: &RunStats) -> fmt::Result {
    writeln!(
        f,
        "{name:<10} p50 {:>9.1} us  p95 {:>9.1} us  {:>9.0} pps  {:>7.2} MBps  filter queries {:>11}  pattern queries {:>11}",
        r.p50.as_secs_f64() * 1e6,
        r.p95.as_secs_f64() * 1e6,
        r.pps(),
        r.mbps(),
        r.queries.filter_queries,
        r.queries.pattern_queries,
    )
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "rules {}  db entries {}  filter entries {}  compile {:.2?}",
            self.rules, self.db_entries, self.filter_entries, self.compile_time
        )?;
        writeln!(
            f,
            "packets {}  malicious {}  payload bytes {}  body bytes {}  bandwidth ratio {:.3}",
            self.filtered.packets,
            self.malicious_packets,
            self.payload_bytes,
            self.body_bytes,
            self.bandwidth_ratio()
        )?;
        write_run(f, "filtered", &self.filtered)?;
        if let Some(u) = &self.unfiltered {
            write_run(f, "full-scan", u)?;
        }
        if let Some(s) = self.speedup() {
            writeln!(f, "speedup    {s:.2}x")?;
        }
        Ok(())
    }
}
