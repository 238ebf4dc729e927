//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Runs as a plain binary (no libtest harness) so that the timing criteria are
//! measured serially, without other tests competing for the CPU.

use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use shvebox_core::bench::measure;
use shvebox_core::compile::{compile_filter, compile_patterns, EncryptedFilter, EncryptedRuleDb};
use shvebox_core::corpus::{synthetic_rules, synthetic_traffic, RuleParams, SyntheticPacket, TrafficParams};
use shvebox_core::crypto::*;
use shvebox_core::engine::{filter_scan, Inspector, Match, ScanMode, Verdict};
use shvebox_core::gateway::{stream, FrameWriter, Gateway, PacketSource};
use shvebox_core::oracle::{plain_filter, plain_match};
use shvebox_core::rules::{parse_ruleset, Rule};
use shvebox_core::service::{Client, Server};
use shvebox_core::wire::frame_len;

const ORACLE_PACKETS: usize = 10_000;
const ORACLE_RULES: usize = 200;
const SOUNDNESS_TRIALS: usize = 1_000_000;
const SPEEDUP_RULES: usize = 1_000;
const SPEEDUP_PACKETS: usize = 1_000;
const SPEEDUP_FLOOR: f64 = 2.0;
const LATENCY_RULES: usize = 1_500;
const LATENCY_PACKETS: usize = 1_000;
const LATENCY_CEILING: Duration = Duration::from_millis(1);
const BINDING_SAMPLES: usize = 100_000;
const FILTER_ORACLE_PACKETS: usize = 10_000;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, name: &str, pass: bool, detail: String, took: Duration) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        if !pass {
            self.failures += 1;
        }
        println!("[{verdict}] {id:<4} {name:<26} {detail}  ({:.1?})", took);
    }
}

fn msk() -> MasterKey {
    MasterKey::from_bytes(&[0xa5; 16]).unwrap()
}

struct Setup {
    rules: Vec<Rule>,
    traffic: Vec<SyntheticPacket>,
    packets: Vec<EncryptedPacket>,
    inspector: Inspector,
}

fn setup(rule_count: usize, packets: usize, malicious: f64, seed: u64) -> Setup {
    let key = msk();
    let rules = synthetic_rules(seed, RuleParams { count: rule_count, ..RuleParams::default() });
    let traffic = synthetic_traffic(
        &rules,
        seed + 1,
        TrafficParams { packets, min_len: 1, max_len: MAX_PAYLOAD, malicious_fraction: malicious },
    );
    let mut rng = StdRng::seed_from_u64(seed + 2);
    let inspector = Inspector::new(compile_patterns(&key, &rules, &mut rng), compile_filter(&key, &rules, &mut rng));
    let prf = Prf::new(&key);
    let packets = traffic
        .iter()
        .enumerate()
        .map(|(i, p)| shve_enc(&prf, &p.payload, i as u64).unwrap())
        .collect();
    Setup { rules, traffic, packets, inspector }
}

fn oracle_verdict(rules: &[Rule], payload: &[u8], id: u64) -> Verdict {
    Verdict::new(id, plain_match(rules, payload).into_iter().map(Match::from).collect())
}

fn oracle_equivalence(r: &mut Report, s: &Setup) {
    let t = Instant::now();
    let mut bad = 0;
    let mut matched = 0;
    for (p, pkt) in s.traffic.iter().zip(&s.packets) {
        let want = oracle_verdict(&s.rules, &p.payload, pkt.packet_id);
        matched += usize::from(!want.matches.is_empty());
        bad += usize::from(s.inspector.inspect(pkt) != want);
    }
    let lens_ok = s.traffic.iter().all(|p| (1..=MAX_PAYLOAD).contains(&p.payload.len()));
    let max_pat = s.rules.iter().map(|r| r.pattern.len()).max().unwrap_or(0);
    r.line(
        "1",
        "oracle equivalence",
        bad == 0 && lens_ok && s.packets.len() >= 10_000 && s.rules.len() >= 200,
        format!(
            "{} packets x {} rules (pattern len 1..={max_pat}), {matched} with matches, {bad} discrepancies",
            s.packets.len(),
            s.rules.len()
        ),
        t.elapsed(),
    );
}

fn filter_transparency(r: &mut Report, s: &Setup) {
    let t = Instant::now();
    let bad = s
        .packets
        .iter()
        .filter(|p| s.inspector.inspect_counted(p, ScanMode::Filtered).0 != s.inspector.inspect_counted(p, ScanMode::FullScan).0)
        .count();
    r.line(
        "2",
        "filter transparency",
        bad == 0,
        format!("{} packets, filtered vs full scan, {bad} discrepancies", s.packets.len()),
        t.elapsed(),
    );
}

fn bandwidth(r: &mut Report, s: &Setup) {
    let t = Instant::now();
    let gw = Gateway::new(&msk());
    let payloads: Vec<Vec<u8>> = s.traffic.iter().map(|p| p.payload.clone()).collect();
    let payload_bytes: usize = payloads.iter().map(Vec::len).sum();
    let mut wire = Vec::new();
    let frames = stream(&gw, PacketSource::new(payloads.into_iter()), &mut FrameWriter(&mut wire)).unwrap();
    let body_bytes = wire.len() - frames * frame_len(0);
    let mtu = gw.preprocess(&[0x41; 1500], 0).unwrap();
    let mtu_body = mtu.len() * MASK_LEN;
    let pass = body_bytes == 5 * payload_bytes && mtu_body == 7500 && frame_len(1500) == 7500 + 18;
    r.line(
        "3",
        "bandwidth constant",
        pass,
        format!(
            "body/payload = {body_bytes}/{payload_bytes} = {:.6}, 1500-byte payload -> {mtu_body}-byte body",
            body_bytes as f64 / payload_bytes as f64
        ),
        t.elapsed(),
    );
}

fn entry_sizes(r: &mut Report) {
    let t = Instant::now();
    let rules = parse_ruleset("alert content:\"|00 01 86 A0|\" offset:12 depth:8").unwrap();
    let mut rng = StdRng::seed_from_u64(4);
    let db = compile_patterns(&msk(), &rules, &mut rng);
    let filter = compile_filter(&msk(), &rules, &mut rng);
    let starts: Vec<u16> = db.iter().map(|t| t.start).collect();
    let entry = db.iter().next().map(|t| t.to_entry().len()).unwrap_or(0);
    let pass = entry == 23
        && PATTERN_ENTRY_LEN == 23
        && starts == (12..=17).collect::<Vec<u16>>()
        && filter.f2.len() == 6
        && filter.f3.len() == 6
        && filter.f1.is_empty();
    r.line(
        "4",
        "entry size golden values",
        pass,
        format!("entry {entry} bytes, trapdoor starts {starts:?}, f2 {} f3 {}", filter.f2.len(), filter.f3.len()),
        t.elapsed(),
    );
}

fn soundness(r: &mut Report) {
    let t = Instant::now();
    let key = msk();
    let prf = Prf::new(&key);
    let mut rng = StdRng::seed_from_u64(5);
    let packets: Vec<(Vec<u8>, EncryptedPacket)> = (0..1000)
        .map(|i| {
            let payload: Vec<u8> = (0..64).map(|_| rng.gen()).collect();
            let pkt = shve_enc(&prf, &payload, i).unwrap();
            (payload, pkt)
        })
        .collect();
    let mut trials = 0usize;
    let mut recovered = 0usize;
    let mut skipped = 0usize;
    while trials < SOUNDNESS_TRIALS {
        let len = rng.gen_range(1..=8);
        let start = rng.gen_range(1..=64 - len + 1);
        let pattern: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let action = ActionPayload::new(ActionCode::Drop, rng.gen());
        let td = shve_plus_keygen(&prf, start, &pattern, action, &mut rng).unwrap();
        for (payload, pkt) in packets.iter().take(1000) {
            if payload[start - 1..start - 1 + len] == pattern[..] {
                skipped += 1;
                continue;
            }
            trials += 1;
            recovered += usize::from(shve_plus_query(&td, pkt).is_some());
        }
    }
    r.line(
        "5",
        "statistical soundness",
        recovered == 0 && trials >= SOUNDNESS_TRIALS,
        format!("{trials} non-matching queries, {recovered} recoveries ({skipped} true matches skipped)"),
        t.elapsed(),
    );
}

fn speedup(r: &mut Report) {
    let t = Instant::now();
    let s = setup(SPEEDUP_RULES, SPEEDUP_PACKETS, 0.01, 600);
    let filtered = measure(&s.inspector, &s.packets, ScanMode::Filtered);
    let full = measure(&s.inspector, &s.packets, ScanMode::FullScan);
    let ratio = full.elapsed.as_secs_f64() / filtered.elapsed.as_secs_f64();
    let fewer = filtered.queries.total() < full.queries.total()
        && filtered.queries.pattern_queries < full.queries.pattern_queries;
    let malicious = s.traffic.iter().filter(|p| p.planted.is_some()).count();
    r.line(
        "6",
        "filter speedup",
        fewer && ratio >= SPEEDUP_FLOOR,
        format!(
            "{} rules, {} packets ({malicious} malicious): queries {} (filter {} + pattern {}) vs {}, wall {:.1?} vs {:.1?}, speedup {ratio:.2}x (floor {SPEEDUP_FLOOR}x)",
            s.rules.len(),
            s.packets.len(),
            filtered.queries.total(),
            filtered.queries.filter_queries,
            filtered.queries.pattern_queries,
            full.queries.total(),
            filtered.elapsed,
            full.elapsed,
        ),
        t.elapsed(),
    );
}

fn latency(r: &mut Report) -> (EncryptedRuleDb, EncryptedFilter) {
    let t = Instant::now();
    let s = setup(LATENCY_RULES, LATENCY_PACKETS, 0.01, 700);
    let run = measure(&s.inspector, &s.packets, ScanMode::Filtered);
    let db = s.inspector.db();
    let f = s.inspector.filter();
    let db_ok = db.to_bytes().len() == 12_018 + 23 * db.len();
    let f_ok = f.to_bytes().len() == 22 + 23 * f.entry_count() + 4 * f.f2.len();
    r.line(
        "7",
        "latency and size formula",
        run.p50 < LATENCY_CEILING && db_ok && f_ok,
        format!(
            "{} rules, median {:.1} us, p95 {:.1} us (ceiling 1000 us); db {} B = 12018 + 23 x {}; filter {} B = 22 + 23 x {} + 4 x {}",
            s.rules.len(),
            run.p50.as_secs_f64() * 1e6,
            run.p95.as_secs_f64() * 1e6,
            db.serialized_len(),
            db.len(),
            f.serialized_len(),
            f.entry_count(),
            f.f2.len(),
        ),
        t.elapsed(),
    );
    (db.clone(), f.clone())
}

fn properties(r: &mut Report, s: &Setup, big: (EncryptedRuleDb, EncryptedFilter)) {
    // position binding
    let t = Instant::now();
    let prf = Prf::new(&msk());
    let mut rng = StdRng::seed_from_u64(8);
    let mut collisions = 0;
    for _ in 0..BINDING_SAMPLES {
        let b: u8 = rng.gen();
        let p = rng.gen_range(1..=MAX_PAYLOAD);
        let q = (p + rng.gen_range(1..MAX_PAYLOAD) - 1) % MAX_PAYLOAD + 1;
        collisions += usize::from(prf.mask(b, p) == prf.mask(b, q));
    }
    r.line(
        "8a",
        "position binding",
        collisions == 0,
        format!("{BINDING_SAMPLES} cross-position samples, {collisions} collisions"),
        t.elapsed(),
    );

    let t = Instant::now();
    let mut bad = 0;
    for _ in 0..10_000 {
        let key: [u8; 16] = rng.gen();
        let p = ActionPayload::new(ActionCode::from_u8(rng.gen_range(1..=3)).unwrap(), rng.gen());
        bad += usize::from(open(&key, &seal(&key, &p)).unwrap() != Some(p));
    }
    r.line("8b", "seal/open round trip", bad == 0, format!("10000 random keys, {bad} failures"), t.elapsed());

    let t = Instant::now();
    let (db, f) = big;
    let db_rt = EncryptedRuleDb::from_bytes(&db.to_bytes()).map(|d| d == db).unwrap_or(false);
    let f_rt = EncryptedFilter::from_bytes(&f.to_bytes()).map(|x| x == f).unwrap_or(false);
    r.line(
        "8c",
        "serialization round trip",
        db_rt && f_rt,
        format!("db {} entries: {db_rt}, filter {} entries: {f_rt}", db.len(), f.entry_count()),
        t.elapsed(),
    );

    let t = Instant::now();
    let rules = synthetic_rules(9, RuleParams { count: 100, ..RuleParams::default() });
    let key = msk();
    let filter = compile_filter(&key, &rules, &mut rng);
    let traffic = synthetic_traffic(&rules, 10, TrafficParams { packets: FILTER_ORACLE_PACKETS, malicious_fraction: 0.3, ..Default::default() });
    let mut bad = 0;
    let mut nonempty = 0;
    for (i, p) in traffic.iter().enumerate() {
        let pkt = shve_enc(&prf, &p.payload, i as u64).unwrap();
        let c = filter_scan(&filter, &pkt);
        let (m1, m2) = plain_filter(&rules, &p.payload);
        nonempty += usize::from(!m1.is_empty() || !m2.is_empty());
        let got1: Vec<usize> = c.m1.iter().map(|&x| x as usize).collect();
        let got2: Vec<usize> = c.m2.iter().map(|&x| x as usize).collect();
        bad += usize::from(got1 != m1 || got2 != m2);
    }
    r.line(
        "8d",
        "filter-oracle equivalence",
        bad == 0,
        format!("{FILTER_ORACLE_PACKETS} packets x 100 rules, {nonempty} with candidates, {bad} discrepancies"),
        t.elapsed(),
    );

    let t = Instant::now();
    let inspector = Arc::new(Inspector::new(s.inspector.db().clone(), s.inspector.filter().clone()));
    let server = Server::bind("127.0.0.1:0", inspector.clone()).unwrap().spawn().unwrap();
    let addr = server.local_addr();
    let conns = 8;
    let sample = &s.packets[..2000];
    let results: Vec<_> = thread::scope(|sc| {
        let hs: Vec<_> = (0..conns)
            .map(|c| {
                let mine: Vec<_> = sample.iter().skip(c).step_by(conns).cloned().collect();
                sc.spawn(move || Client::connect(addr).and_then(|cl| cl.run(mine).map_err(std::io::Error::other)))
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    server.shutdown();
    let mut bad = 0;
    let mut total = 0;
    for (c, res) in results.into_iter().enumerate() {
        let want: Vec<_> = sample.iter().skip(c).step_by(conns).map(|p| s.inspector.inspect(p)).collect();
        match res {
            Ok(got) => {
                total += got.len();
                bad += got.iter().zip(&want).filter(|(a, b)| a != b).count() + want.len().abs_diff(got.len());
            }
            Err(_) => bad += want.len(),
        }
    }
    r.line(
        "8e",
        "loopback service",
        bad == 0 && total == sample.len(),
        format!("{conns} connections, {total} verdicts over TCP vs offline, {bad} discrepancies"),
        t.elapsed(),
    );
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut r = Report { failures: 0 };
    println!("acceptance suite");

    let t = Instant::now();
    let base = setup(ORACLE_RULES, ORACLE_PACKETS, 0.25, 100);
    println!("       corpus: {} rules, {} packets, built in {:.1?}", base.rules.len(), base.packets.len(), t.elapsed());

    oracle_equivalence(&mut r, &base);
    filter_transparency(&mut r, &base);
    bandwidth(&mut r, &base);
    entry_sizes(&mut r);
    soundness(&mut r);
    speedup(&mut r);
    let big = latency(&mut r);
    properties(&mut r, &base, big);

    println!("{} failing, total {:.1?}", r.failures, started.elapsed());
    if r.failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
