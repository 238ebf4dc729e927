//! Seeded synthetic rulesets and traffic for differential tests and benchmarks.
//!
//! Rules are built from a small vocabulary of protocol-like stems followed by
//! random tails, so that first-two and first-four byte prefixes repeat across
//! rules the way they do in real signature sets. Windows mix anchored,
//! regional and unbounded rules.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::crypto::{ActionCode, MAX_PAYLOAD};
use crate::rules::Rule;

const STEMS: &[&[u8]] = &[
    b"GET /", b"POST ", b"HTTP/", b"Host:", b"User-", b"Cooki", b"/cgi-", b"\x00\x01\x86\xa0",
    b"\xffSMB", b"\x16\x03\x01", b"\x00\x00\x00\x01", b"USER ", b"PASS ", b"RETR ", b"EHLO ", b"%PDF-",
    b"MZ\x90\x00", b"\x7fELF", b"<scri", b"SELEC", b"../..", b"cmd.e", b"\x05\x01\x00", b"\x90\x90\x90\x90",
];

/// Stems used by unbounded rules; the rest only appear in anchored or regional rules.
const UNBOUNDED_STEMS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuleParams {
    pub count: usize,
    pub max_len: usize,
    /// Fraction of rules with neither offset nor depth.
    pub unbounded_fraction: f64,
    /// Fraction of rules searched in a wide region (offset up to 200, window up to 100 bytes past the pattern).
    pub regional_fraction: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams { count: 200, max_len: 64, unbounded_fraction: 0.1, regional_fraction: 0.15 }
    }
}

fn pattern_len<R: Rng>(rng: &mut R, max_len: usize) -> usize {
    let roll: f64 = rng.gen();
    if roll < 0.03 {
        1
    } else if roll < 0.15 {
        rng.gen_range(2..=3.min(max_len))
    } else {
        // skewed toward short patterns, as in signature sets
        let span = max_len.saturating_sub(4) as f64;
        let x: f64 = rng.gen::<f64>().powi(2);
        (4 + (x * span).round() as usize).min(max_len)
    }
    .clamp(1, max_len)
}

fn make_pattern<R: Rng>(rng: &mut R, len: usize, stem: &[u8]) -> Vec<u8> {
    let mut p: Vec<u8> = stem.iter().copied().take(len).collect();
    while p.len() < len {
        p.push(rng.gen());
    }
    p
}

fn pick_action<R: Rng>(rng: &mut R) -> ActionCode {
    match rng.gen_range(0..20) {
        0..=11 => ActionCode::Alert,
        12..=16 => ActionCode::Log,
        _ => ActionCode::Drop,
    }
}

/// Generates `params.count` valid rules with ids `1..=count`.
pub fn synthetic_rules(seed: u64, params: RuleParams) -> Vec<Rule> {
    let mut rng = StdRng::seed_from_u64(seed);
    let max_len = params.max_len.clamp(1, MAX_PAYLOAD);
    (1..=params.count as u32)
        .map(|rule_id| {
            let len = pattern_len(&mut rng, max_len);
            let kind: f64 = rng.gen();
            let (stem_pool, offset, depth) = if len == 1 {
                // single-byte rules are always tightly anchored
                (STEMS, rng.gen_range(0..=16u16), rng.gen_range(1..=8u16))
            } else if len > 3 && kind < params.unbounded_fraction {
                // short patterns would fire everywhere without a window
                (&STEMS[..UNBOUNDED_STEMS], 0, 0)
            } else if kind < params.unbounded_fraction + params.regional_fraction {
                let offset = rng.gen_range(0..=200u16);
                (STEMS, offset, len as u16 + rng.gen_range(0..=100u16))
            } else {
                let offset = rng.gen_range(0..=32u16);
                (STEMS, offset, len as u16 + rng.gen_range(0..=16u16))
            };
            let stem = stem_pool.choose(&mut rng).unwrap();
            let pattern = make_pattern(&mut rng, len, stem);
            Rule::new(rule_id, pattern, offset, depth, pick_action(&mut rng))
                .expect("generated windows always admit a placement")
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrafficParams {
    pub packets: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of packets carrying a planted rule pattern.
    pub malicious_fraction: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams { packets: 1000, min_len: 1, max_len: MAX_PAYLOAD, malicious_fraction: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticPacket {
    pub payload: Vec<u8>,
    /// Rule whose pattern was planted, if any.
    pub planted: Option<u32>,
}

/// Random payloads; a `malicious_fraction` of them get one rule's pattern planted
/// at a random in-window placement (the packet is lengthened if needed).
pub fn synthetic_traffic(rules: &[Rule], seed: u64, params: TrafficParams) -> Vec<SyntheticPacket> {
    let mut rng = StdRng::seed_from_u64(seed);
    let min_len = params.min_len.clamp(1, MAX_PAYLOAD);
    let max_len = params.max_len.clamp(min_len, MAX_PAYLOAD);
    (0..params.packets)
        .map(|_| {
            let mut len = rng.gen_range(min_len..=max_len);
            let plant = !rules.is_empty() && rng.gen_bool(params.malicious_fraction.clamp(0.0, 1.0));
            if !plant {
                let payload = (0..len).map(|_| rng.gen()).collect();
                return SyntheticPacket { payload, planted: None };
            }
            let rule = rules.choose(&mut rng).unwrap();
            let placement = rng.gen_range(rule.placements());
            len = len.max(placement + rule.pattern.len() - 1);
            let mut payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            payload[placement - 1..placement - 1 + rule.pattern.len()].copy_from_slice(&rule.pattern);
            SyntheticPacket { payload, planted: Some(rule.rule_id) }
        })
        .collect()
}
