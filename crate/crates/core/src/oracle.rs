//! Plaintext reference matcher and filter. Never used by the encrypted pipeline;
//! differential tests compare against it.

use crate::compile::SHORT_PATTERN_MAX;
use crate::crypto::ActionCode;
use crate::rules::Rule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlainMatch {
    pub position: usize,
    pub rule_id: u32,
    pub action: ActionCode,
}

/// Every `(rule, placement)` whose bytes appear verbatim in the payload,
/// sorted by position then rule id.
pub fn plain_match(rules: &[Rule], payload: &[u8]) -> Vec<PlainMatch> {
    let mut out = Vec::new();
    for rule in rules {
        let l = rule.pattern.len();
        for p in rule.placements() {
            if p + l - 1 > payload.len() {
                break;
            }
            if payload[p - 1..p - 1 + l] == rule.pattern[..] {
                out.push(PlainMatch { position: p, rule_id: rule.rule_id, action: rule.action });
            }
        }
    }
    out.sort();
    out
}

/// Candidate start positions the encrypted filter should report, as `(m1, m2)`.
///
/// `m1`: a length 2..=3 pattern's first two bytes at one of its placements.
/// `m2`: a longer pattern's first four bytes at one of its placements.
pub fn plain_filter(rules: &[Rule], payload: &[u8]) -> (Vec<usize>, Vec<usize>) {
    let mut m1 = Vec::new();
    let mut m2 = Vec::new();
    for rule in rules {
        let l = rule.pattern.len();
        if l < 2 {
            continue;
        }
        let probe = if l <= SHORT_PATTERN_MAX { 2 } else { 4 };
        if l > SHORT_PATTERN_MAX && payload.len() <= 3 {
            continue;
        }
        for p in rule.placements() {
            if p + probe - 1 > payload.len() {
                break;
            }
            if payload[p - 1..p - 1 + probe] == rule.pattern[..probe] {
                if probe == 2 { m1.push(p) } else { m2.push(p) }
            }
        }
    }
    for m in [&mut m1, &mut m2] {
        m.sort_unstable();
        m.dedup();
    }
    (m1, m2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_ruleset;

    #[test]
    fn overlapping_occurrences() {
        let rules = parse_ruleset("alert content:\"aa\"").unwrap();
        let got: Vec<usize> = plain_match(&rules, b"aaa").iter().map(|m| m.position).collect();
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn outside_window_is_ignored() {
        let rules = parse_ruleset("alert content:\"|00 01 86 A0|\" offset:12 depth:8").unwrap();
        let mut payload = vec![0xffu8; 40];
        payload[9..13].copy_from_slice(&[0x00, 0x01, 0x86, 0xa0]);
        assert!(plain_match(&rules, &payload).is_empty());

        let mut payload = vec![0xffu8; 40];
        payload[13..17].copy_from_slice(&[0x00, 0x01, 0x86, 0xa0]);
        let m = plain_match(&rules, &payload);
        assert_eq!(m, vec![PlainMatch { position: 14, rule_id: 1, action: ActionCode::Alert }]);
    }

    #[test]
    fn progressive_rejection() {
        let rules = parse_ruleset("alert content:\"abcd\"").unwrap();
        let mut payload = b"....abxx....".to_vec();
        assert_eq!(plain_filter(&rules, &payload), (vec![], vec![]));
        payload[6..8].copy_from_slice(b"cd");
        assert_eq!(plain_filter(&rules, &payload), (vec![], vec![5]));
    }

    #[test]
    fn short_prefix_candidate() {
        let rules = parse_ruleset("alert content:\"ab\"").unwrap();
        assert_eq!(plain_filter(&rules, b"zzab"), (vec![3], vec![]));
    }

    #[test]
    fn filter_covers_matches() {
        let rules = parse_ruleset("alert content:\"abc\"\nlog content:\"abcdef\" depth:30\ndrop content:\"x\"").unwrap();
        let payload = b"zzabcdefabcxx";
        let (m1, m2) = plain_filter(&rules, payload);
        for m in plain_match(&rules, payload) {
            let l = rules[m.rule_id as usize - 1].pattern.len();
            match l {
                1 => {}
                2..=3 => assert!(m1.contains(&m.position)),
                _ => assert!(m2.contains(&m.position)),
            }
        }
    }
}
