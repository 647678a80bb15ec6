use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::phn::PhoneSegment;
use crate::audio::SAMPLE_RATE;
use crate::error::{Error, Result};
use crate::filter::enforce_min_hold;
use crate::viseme::{VisemeId, VisemeTrack24, FRAME_RATE};

const DEFAULT_TABLE: &str = include_str!("../../data/phone_visemes.json");

#[derive(Debug, Serialize, Deserialize)]
struct TableFile {
    version: u32,
    visemes: BTreeMap<VisemeId, Vec<String>>,
}

/// Phone label to viseme mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneTable {
    pub version: u32,
    map: HashMap<String, VisemeId>,
}

impl PhoneTable {
    /// The built-in table covering the 61-phone TIMIT alphabet.
    pub fn timit() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("built-in phone table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text)?;
        let mut map = HashMap::new();
        for (viseme, phones) in file.visemes {
            for phone in phones {
                if let Some(prev) = map.insert(phone.clone(), viseme) {
                    return Err(Error::Config(format!(
                        "phone {phone:?} mapped to both {prev} and {viseme}"
                    )));
                }
            }
        }
        Ok(Self {
            version: file.version,
            map,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn get(&self, phone: &str) -> Option<VisemeId> {
        self.map.get(phone).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Number of 24 fps frames whose midpoint falls before `end_sample`.
pub fn oracle_frame_count(end_sample: u64) -> usize {
    // frame n covers midpoint (n + 0.5) / 24 s = (2n + 1) * rate / 48 samples
    let rate = SAMPLE_RATE as u64;
    let mut n = 0usize;
    while ((2 * n as u64 + 1) * rate) < end_sample * 2 * FRAME_RATE as u64 {
        n += 1;
    }
    n
}

/// Stand-in for hand-animated labels: each 24 fps frame takes the viseme of the
/// phone covering its midpoint, then the min-hold rule is applied.
pub fn oracle_visemes(segments: &[PhoneSegment], table: &PhoneTable) -> Result<VisemeTrack24> {
    let mut unknown: Vec<&str> = segments
        .iter()
        .map(|s| s.phone.as_str())
        .filter(|p| table.get(p).is_none())
        .collect();
    if !unknown.is_empty() {
        unknown.sort_unstable();
        unknown.dedup();
        return Err(Error::UnknownPhone(unknown.join(", ")));
    }
    let Some(last) = segments.last() else {
        return Ok(VisemeTrack24::default());
    };
    let rate = SAMPLE_RATE as u64;
    let fps2 = 2 * FRAME_RATE as u64;
    let mut frames = Vec::new();
    let mut seg = 0;
    for n in 0..oracle_frame_count(last.end_sample) {
        // midpoint in units of 1 / (2 * 24 * 16000) s, compared without rounding
        let mid = (2 * n as u64 + 1) * rate;
        while seg < segments.len() && segments[seg].end_sample * fps2 <= mid {
            seg += 1;
        }
        let v = match segments.get(seg) {
            Some(s) if s.start_sample * fps2 <= mid => table.get(&s.phone).expect("checked"),
            _ => VisemeId::Silent,
        };
        frames.push(v);
    }
    Ok(enforce_min_hold(&VisemeTrack24::new(frames)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viseme::run_lengths;
    use proptest::prelude::*;

    #[test]
    fn table_covers_timit_alphabet() {
        let t = PhoneTable::timit();
        assert_eq!(t.len(), 61);
        assert_eq!(t.version, 1);
        assert_eq!(t.get("m"), Some(VisemeId::M));
        assert_eq!(t.get("uw"), Some(VisemeId::WOo));
        assert_eq!(t.get("h#"), Some(VisemeId::Silent));
        assert_eq!(t.get("f"), Some(VisemeId::F));
        assert_eq!(t.get("zz"), None);
    }

    #[test]
    fn duplicate_phones_rejected() {
        let text = r#"{"version": 2, "visemes": {"M": ["m"], "F": ["m"]}}"#;
        assert!(PhoneTable::from_json(text).is_err());
    }

    #[test]
    fn all_silence_gives_all_silent() {
        let segs = vec![
            PhoneSegment::new("h#", 0, 8000),
            PhoneSegment::new("pau", 8000, 16000),
        ];
        let track = oracle_visemes(&segs, &PhoneTable::timit()).unwrap();
        assert_eq!(track.len(), 24);
        assert!(track.frames.iter().all(|&v| v == VisemeId::Silent));
    }

    #[test]
    fn half_second_of_m_is_twelve_frames() {
        let segs = vec![PhoneSegment::new("m", 0, 8000)];
        let track = oracle_visemes(&segs, &PhoneTable::timit()).unwrap();
        assert_eq!(track.frames, vec![VisemeId::M; 12]);
    }

    #[test]
    fn unknown_phone_is_listed() {
        let segs = vec![PhoneSegment::new("xx", 0, 100), PhoneSegment::new("m", 100, 200)];
        match oracle_visemes(&segs, &PhoneTable::timit()) {
            Err(Error::UnknownPhone(s)) => assert_eq!(s, "xx"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn midpoint_rule() {
        // frame 1 midpoint at 1.5/24 s = 1000 samples
        let segs = vec![
            PhoneSegment::new("h#", 0, 1000),
            PhoneSegment::new("aa", 1000, 4000),
            PhoneSegment::new("m", 4000, 8000),
        ];
        let track = oracle_visemes(&segs, &PhoneTable::timit()).unwrap();
        assert_eq!(track.frames[0], VisemeId::Silent);
        // frame 1 would be Ah but Silent was held for one frame only
        assert_eq!(track.frames[1], VisemeId::Silent);
        assert_eq!(track.frames[2], VisemeId::Ah);
        assert_eq!(track.frames[6], VisemeId::M);
    }

    proptest! {
        #[test]
        fn oracle_tracks_hold_at_least_two_frames(durs in proptest::collection::vec((0usize..61, 100u64..3000), 1..30)) {
            let table = PhoneTable::timit();
            let phones: Vec<String> = table.map.keys().cloned().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let mut t = 0;
            let segs: Vec<PhoneSegment> = durs.iter().map(|&(p, d)| {
                let s = PhoneSegment::new(phones[p].clone(), t, t + d);
                t += d;
                s
            }).collect();
            let track = oracle_visemes(&segs, &table).unwrap();
            let runs = run_lengths(&track.frames);
            if runs.len() > 1 {
                prop_assert!(runs[..runs.len() - 1].iter().all(|&r| r >= 2));
            }
        }
    }
}
