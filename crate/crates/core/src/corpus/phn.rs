use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a TIMIT-style `.PHN` transcription, in 16 kHz samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneSegment {
    pub phone: String,
    pub start_sample: u64,
    pub end_sample: u64,
}

impl PhoneSegment {
    pub fn new(phone: impl Into<String>, start_sample: u64, end_sample: u64) -> Self {
        Self {
            phone: phone.into(),
            start_sample,
            end_sample,
        }
    }
}

/// Parses `start end phone` lines. Segments must be non-empty and contiguous.
pub fn parse_phn(text: &str) -> Result<Vec<PhoneSegment>> {
    let mut out: Vec<PhoneSegment> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| Error::Phn { line, message };
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(format!("expected `start end phone`, got {trimmed:?}")));
        }
        let index = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| err(format!("bad sample index {s:?}")))
        };
        let (start, end) = (index(fields[0])?, index(fields[1])?);
        if start >= end {
            return Err(err(format!("segment {start}..{end} is empty or reversed")));
        }
        if let Some(prev) = out.last() {
            if start < prev.end_sample {
                return Err(err(format!(
                    "segment starts at {start}, overlapping the previous one ending at {}",
                    prev.end_sample
                )));
            }
            if start > prev.end_sample {
                return Err(err(format!(
                    "gap between {} and {start}",
                    prev.end_sample
                )));
            }
        }
        out.push(PhoneSegment::new(fields[2], start, end));
    }
    Ok(out)
}

pub fn read_phn(path: impl AsRef<Path>) -> Result<Vec<PhoneSegment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_phn(&text)
}

pub fn format_phn(segments: &[PhoneSegment]) -> String {
    segments
        .iter()
        .map(|s| format!("{} {} {}\n", s.start_sample, s.end_sample, s.phone))
        .collect()
}

/// Number of distinct phones plus distinct ordered adjacent phone pairs.
pub fn score_recording(segments: &[PhoneSegment]) -> usize {
    let phones: HashSet<&str> = segments.iter().map(|s| s.phone.as_str()).collect();
    let pairs: HashSet<(&str, &str)> = segments
        .windows(2)
        .map(|w| (w[0].phone.as_str(), w[1].phone.as_str()))
        .collect();
    phones.len() + pairs.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn segs(phones: &[&str]) -> Vec<PhoneSegment> {
        phones
            .iter()
            .enumerate()
            .map(|(i, p)| PhoneSegment::new(*p, i as u64 * 100, (i as u64 + 1) * 100))
            .collect()
    }

    #[test]
    fn parses_two_segments() {
        let s = parse_phn("0 1600 h#\n1600 3200 sh").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1], PhoneSegment::new("sh", 1600, 3200));
        assert_eq!(parse_phn(&format_phn(&s)).unwrap(), s);
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(parse_phn("").unwrap().is_empty());
        assert!(parse_phn("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        for (text, line) in [
            ("0 1600 h#\n1500 3200 sh", 2),
            ("0 1600 h#\n1700 3200 sh", 2),
            ("0 1600 h#\n\n1600 -3 sh", 3),
            ("10 10 h#", 1),
            ("0 5", 1),
        ] {
            match parse_phn(text) {
                Err(Error::Phn { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_recording(&segs(&["sh"])), 1);
        assert_eq!(score_recording(&segs(&["sh", "ix", "sh"])), 4);
        assert_eq!(score_recording(&segs(&["a", "a", "b"])), 4);
        assert_eq!(score_recording(&[]), 0);
    }

    /// Set-free recount: sort and deduplicate explicit lists.
    fn brute_score(phones: &[String]) -> usize {
        let mut singles: Vec<&String> = phones.iter().collect();
        singles.sort();
        singles.dedup();
        let mut pairs: Vec<(&String, &String)> =
            phones.windows(2).map(|w| (&w[0], &w[1])).collect();
        pairs.sort();
        pairs.dedup();
        singles.len() + pairs.len()
    }

    proptest! {
        #[test]
        fn score_matches_brute_force(ids in proptest::collection::vec(0u8..6, 0..40)) {
            let phones: Vec<String> = ids.iter().map(|i| format!("p{i}")).collect();
            let refs: Vec<&str> = phones.iter().map(String::as_str).collect();
            prop_assert_eq!(score_recording(&segs(&refs)), brute_score(&phones));
        }
    }
}
