//! The 12-class viseme vocabulary and viseme tracks at 24 fps and 100 Hz.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const NUM_VISEMES: usize = 12;
pub const FRAME_RATE: u32 = 24;
pub const STEP_RATE: u32 = 100;

/// Mouth-shape class. Integer codes are fixed and used in every file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum VisemeId {
    Silent = 0,
    Ah = 1,
    D = 2,
    Ee = 3,
    F = 4,
    L = 5,
    M = 6,
    Oh = 7,
    R = 8,
    S = 9,
    Uh = 10,
    WOo = 11,
}

impl VisemeId {
    pub const ALL: [VisemeId; NUM_VISEMES] = [
        VisemeId::Silent,
        VisemeId::Ah,
        VisemeId::D,
        VisemeId::Ee,
        VisemeId::F,
        VisemeId::L,
        VisemeId::M,
        VisemeId::Oh,
        VisemeId::R,
        VisemeId::S,
        VisemeId::Uh,
        VisemeId::WOo,
    ];

    /// The eight classes kept by [`VisemeId::to_subset`].
    pub const SUBSET: [VisemeId; 8] = [
        VisemeId::Silent,
        VisemeId::Ah,
        VisemeId::D,
        VisemeId::Ee,
        VisemeId::F,
        VisemeId::M,
        VisemeId::Oh,
        VisemeId::WOo,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            VisemeId::Silent => "Silent",
            VisemeId::Ah => "Ah",
            VisemeId::D => "D",
            VisemeId::Ee => "Ee",
            VisemeId::F => "F",
            VisemeId::L => "L",
            VisemeId::M => "M",
            VisemeId::Oh => "Oh",
            VisemeId::R => "R",
            VisemeId::S => "S",
            VisemeId::Uh => "Uh",
            VisemeId::WOo => "W-Oo",
        }
    }

    /// Projection onto the 8-class set: S->D, L->D, Uh->Ah, R->W-Oo.
    pub fn to_subset(self) -> Self {
        match self {
            VisemeId::S | VisemeId::L => VisemeId::D,
            VisemeId::Uh => VisemeId::Ah,
            VisemeId::R => VisemeId::WOo,
            other => other,
        }
    }
}

impl fmt::Display for VisemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VisemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = match s {
            "Silent" | "Neutral" => VisemeId::Silent,
            "Ah" => VisemeId::Ah,
            "D" => VisemeId::D,
            "Ee" => VisemeId::Ee,
            "F" => VisemeId::F,
            "L" => VisemeId::L,
            "M" => VisemeId::M,
            "Oh" => VisemeId::Oh,
            "R" => VisemeId::R,
            "S" => VisemeId::S,
            "Uh" => VisemeId::Uh,
            "W-Oo" | "WOo" => VisemeId::WOo,
            other => return Err(Error::UnknownViseme(other.to_string())),
        };
        Ok(v)
    }
}

impl Serialize for VisemeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for VisemeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Viseme frames at 24 fps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisemeTrack24 {
    pub frames: Vec<VisemeId>,
    pub start_time: f64,
}

/// Viseme labels at 100 Hz, one per feature vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisemeTrack100 {
    pub steps: Vec<VisemeId>,
    pub start_time: f64,
}

impl VisemeTrack24 {
    pub fn new(frames: Vec<VisemeId>) -> Self {
        Self {
            frames,
            start_time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / FRAME_RATE as f64
    }

    pub fn remap_to_subset(&self) -> Self {
        Self {
            frames: remap_to_subset(&self.frames),
            start_time: self.start_time,
        }
    }

    pub fn to_file(&self) -> TrackFile {
        TrackFile {
            fps: FRAME_RATE,
            start_time: self.start_time,
            visemes: self.frames.clone(),
        }
    }
}

impl VisemeTrack100 {
    pub fn new(steps: Vec<VisemeId>) -> Self {
        Self {
            steps,
            start_time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_file(&self) -> TrackFile {
        TrackFile {
            fps: STEP_RATE,
            start_time: self.start_time,
            visemes: self.steps.clone(),
        }
    }
}

/// Maps every viseme through [`VisemeId::to_subset`].
pub fn remap_to_subset(visemes: &[VisemeId]) -> Vec<VisemeId> {
    visemes.iter().map(|v| v.to_subset()).collect()
}

/// 100 Hz step k takes 24 fps frame floor(k * 24 / 100); frames past the end are
/// replaced by the last frame.
pub fn upsample_24_to_100(track: &VisemeTrack24, target_len: usize) -> Result<VisemeTrack100> {
    let last = *track
        .frames
        .last()
        .ok_or(Error::Empty("cannot upsample an empty viseme track"))?;
    let steps = (0..target_len)
        .map(|k| {
            track
                .frames
                .get(k * FRAME_RATE as usize / STEP_RATE as usize)
                .copied()
                .unwrap_or(last)
        })
        .collect();
    Ok(VisemeTrack100 {
        steps,
        start_time: track.start_time,
    })
}

/// 100 Hz length that exactly covers a 24 fps track: ceil(frames * 100 / 24).
pub fn steps_covering(frames: usize) -> usize {
    (frames * STEP_RATE as usize).div_ceil(FRAME_RATE as usize)
}

/// JSON track file: `{"fps": 24|100, "start_time": s, "visemes": ["Ah", ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub fps: u32,
    #[serde(default)]
    pub start_time: f64,
    pub visemes: Vec<VisemeId>,
}

impl TrackFile {
    pub fn into_track24(self) -> Result<VisemeTrack24> {
        if self.fps != FRAME_RATE {
            return Err(Error::Format(format!(
                "expected a {FRAME_RATE} fps track, got {} fps",
                self.fps
            )));
        }
        Ok(VisemeTrack24 {
            frames: self.visemes,
            start_time: self.start_time,
        })
    }

    pub fn into_track100(self) -> Result<VisemeTrack100> {
        if self.fps != STEP_RATE {
            return Err(Error::Format(format!(
                "expected a {STEP_RATE} Hz track, got {} fps",
                self.fps
            )));
        }
        Ok(VisemeTrack100 {
            steps: self.visemes,
            start_time: self.start_time,
        })
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Compact CSV: a `frame_index,viseme_code` header, then one row per frame.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_index,viseme_code\n");
        for (i, v) in self.visemes.iter().enumerate() {
            out.push_str(&format!("{i},{}\n", v.code()));
        }
        out
    }

    pub fn from_csv(text: &str, fps: u32) -> Result<Self> {
        let mut visemes = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (line_no == 0 && line.starts_with("frame_index")) {
                continue;
            }
            let bad = || Error::Format(format!("track csv line {}: {line:?}", line_no + 1));
            let (idx, code) = line.split_once(',').ok_or_else(bad)?;
            let idx: usize = idx.trim().parse().map_err(|_| bad())?;
            if idx != visemes.len() {
                return Err(bad());
            }
            let code: u8 = code.trim().parse().map_err(|_| bad())?;
            visemes.push(VisemeId::from_code(code).ok_or_else(bad)?);
        }
        Ok(Self {
            fps,
            start_time: 0.0,
            visemes,
        })
    }
}

/// Lengths of maximal runs of equal visemes.
pub fn run_lengths(visemes: &[VisemeId]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut iter = visemes.iter();
    if let Some(mut current) = iter.next() {
        let mut len = 1;
        for v in iter {
            if v == current {
                len += 1;
            } else {
                runs.push(len);
                current = v;
                len = 1;
            }
        }
        runs.push(len);
    }
    runs
}

/// Number of positions where the viseme differs from its predecessor.
pub fn count_transitions(visemes: &[VisemeId]) -> usize {
    visemes.windows(2).filter(|w| w[0] != w[1]).count()
}
