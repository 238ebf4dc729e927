//! Inspection rules and the line-oriented ruleset grammar.
//!
//! ```text
//! # comment
//! alert content:"|00 01 86 A0|" offset:12 depth:8
//! drop content:"GET /admin"
//! log content:"User-Agent|3a 20|curl" depth:200
//! ```
//!
//! Content mixes ASCII and `|hex|` runs as in Snort; `\"`, `\\` and `\|` escape
//! inside ASCII runs. Offsets and depths are 1-based positions and byte counts.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use crate::crypto::{ActionCode, MAX_PAYLOAD};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub rule_id: u32,
    pub pattern: Vec<u8>,
    /// First allowed start position; 0 means unset.
    pub offset: u16,
    /// Search extent measured from the window start; 0 means unset.
    pub depth: u16,
    pub action: ActionCode,
}

impl Rule {
    /// Builds a rule and checks that it has at least one placement.
    pub fn new(rule_id: u32, pattern: Vec<u8>, offset: u16, depth: u16, action: ActionCode) -> Result<Self> {
        let rule = Rule { rule_id, pattern, offset, depth, action };
        rule.validate().map_err(|msg| Error::Validation { line: 0, msg })?;
        Ok(rule)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.pattern.is_empty() || self.pattern.len() > MAX_PAYLOAD {
            return Err(format!("pattern length {} outside 1..=1500", self.pattern.len()));
        }
        if self.action == ActionCode::Marker {
            return Err("rule action must be alert, drop or log".into());
        }
        if self.placement_count() == 0 {
            return Err(format!(
                "{}-byte pattern does not fit its window [{}, {}]",
                self.pattern.len(),
                self.window_start(),
                self.window_end()
            ));
        }
        Ok(())
    }

    pub fn window_start(&self) -> usize {
        (self.offset as usize).max(1)
    }

    /// Last byte the window may cover, clamped to the MTU.
    pub fn window_end(&self) -> usize {
        let start = self.window_start();
        let end = if self.depth > 0 { start + self.depth as usize } else { MAX_PAYLOAD };
        end.min(MAX_PAYLOAD)
    }

    /// Every start position at which the pattern lies entirely inside the window.
    pub fn placements(&self) -> RangeInclusive<usize> {
        let start = self.window_start();
        let last = (self.window_end() + 1).saturating_sub(self.pattern.len());
        if last < start {
            // empty range
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        start..=last
    }

    pub fn placement_count(&self) -> usize {
        (self.window_end() + 2).saturating_sub(self.window_start() + self.pattern.len())
    }

    /// Renders the rule back into ruleset syntax.
    pub fn to_line(&self) -> String {
        let mut line = format!("{} content:\"{}\"", self.action, encode_content(&self.pattern));
        if self.offset > 0 {
            let _ = write!(line, " offset:{}", self.offset);
        }
        if self.depth > 0 {
            let _ = write!(line, " depth:{}", self.depth);
        }
        line
    }
}

/// Parses a ruleset, numbering rules from 1 in file order.
pub fn parse_ruleset(text: &str) -> Result<Vec<Rule>> {
    let mut rules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rule_id = rules.len() as u32 + 1;
        let rule = parse_line(line, rule_id).map_err(|msg| Error::Parse { line: line_no, msg })?;
        rule.validate()
            .map_err(|msg| Error::Validation { line: line_no, msg })?;
        rules.push(rule);
    }
    Ok(rules)
}

fn parse_line(line: &str, rule_id: u32) -> std::result::Result<Rule, String> {
    let (action_word, mut rest) = line
        .split_once(char::is_whitespace)
        .ok_or_else(|| "expected `<action> content:\"...\"`".to_string())?;
    let action = ActionCode::parse(action_word)
        .ok_or_else(|| format!("unknown action `{action_word}`"))?;

    let mut pattern = None;
    let mut offset = None;
    let mut depth = None;

    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        let (key, after) = rest
            .split_once(':')
            .ok_or_else(|| format!("expected `key:value` near `{rest}`"))?;
        match key {
            "content" => {
                if pattern.is_some() {
                    return Err("only one content per rule is supported".into());
                }
                let (bytes, tail) = parse_content(after)?;
                pattern = Some(bytes);
                rest = tail;
            }
            "offset" | "depth" => {
                let end = after.find(char::is_whitespace).unwrap_or(after.len());
                let value: u16 = after[..end]
                    .parse()
                    .map_err(|_| format!("{key} expects an integer in 0..=65535, got `{}`", &after[..end]))?;
                let slot = if key == "offset" { &mut offset } else { &mut depth };
                if slot.replace(value).is_some() {
                    return Err(format!("duplicate `{key}`"));
                }
                rest = &after[end..];
            }
            other => return Err(format!("unsupported option `{other}`")),
        }
    }

    let pattern = pattern.ok_or_else(|| "missing content".to_string())?;
    Ok(Rule {
        rule_id,
        pattern,
        offset: offset.unwrap_or(0),
        depth: depth.unwrap_or(0),
        action,
    })
}

/// Parses `"..."` at the start of `s`, returning the bytes and the remaining input.
fn parse_content(s: &str) -> std::result::Result<(Vec<u8>, &str), String> {
    let body = s
        .strip_prefix('"')
        .ok_or_else(|| "content must be double-quoted".to_string())?;
    let mut out = Vec::new();
    let mut chars = body.char_indices();
    let mut in_hex = false;
    let mut hex_digits = String::new();

    while let Some((i, c)) = chars.next() {
        if in_hex {
            match c {
                '|' => {
                    flush_hex(&mut hex_digits, &mut out)?;
                    in_hex = false;
                }
                c if c.is_ascii_hexdigit() => hex_digits.push(c),
                c if c.is_whitespace() => flush_hex(&mut hex_digits, &mut out)?,
                '"' => return Err("unterminated |hex| run".into()),
                c => return Err(format!("invalid hex digit `{c}`")),
            }
            continue;
        }
        match c {
            '"' => {
                if out.is_empty() {
                    return Err("empty content".into());
                }
                return Ok((out, &body[i + 1..]));
            }
            '|' => in_hex = true,
            '\\' => match chars.next() {
                Some((_, e @ ('"' | '\\' | '|'))) => out.push(e as u8),
                _ => return Err("bad escape in content".into()),
            },
            c if c.is_ascii() => out.push(c as u8),
            c => return Err(format!("non-ASCII character `{c}` in content; use |hex|")),
        }
    }
    Err("unterminated content string".into())
}

fn flush_hex(digits: &mut String, out: &mut Vec<u8>) -> std::result::Result<(), String> {
    if digits.is_empty() {
        return Ok(());
    }
    if !digits.len().is_multiple_of(2) {
        return Err(format!("odd number of hex digits in `{digits}`"));
    }
    for pair in digits.as_bytes().chunks(2) {
        let s = std::str::from_utf8(pair).unwrap();
        out.push(u8::from_str_radix(s, 16).unwrap());
    }
    digits.clear();
    Ok(())
}

fn encode_content(pattern: &[u8]) -> String {
    let mut s = String::new();
    let mut in_hex = false;
    for &b in pattern {
        let printable = b.is_ascii_graphic() && !matches!(b, b'"' | b'\\' | b'|') || b == b' ';
        if printable {
            if in_hex {
                s.push('|');
                in_hex = false;
            }
            s.push(b as char);
        } else {
            if in_hex {
                s.push(' ');
            } else {
                s.push('|');
                in_hex = true;
            }
            let _ = write!(s, "{b:02X}");
        }
    }
    if in_hex {
        s.push('|');
    }
    s
}

/// Renders rules as ruleset text. Rule ids are implied by line order.
pub fn format_ruleset(rules: &[Rule]) -> String {
    let mut out = String::new();
    for r in rules {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}
