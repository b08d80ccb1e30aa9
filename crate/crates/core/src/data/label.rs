use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// The six emotion classes with their fixed integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EmotionLabel {
    Worry = 0,
    Happy = 1,
    Neutral = 2,
    Angry = 3,
    Surprise = 4,
    Sad = 5,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 6] = [
        EmotionLabel::Worry,
        EmotionLabel::Happy,
        EmotionLabel::Neutral,
        EmotionLabel::Angry,
        EmotionLabel::Surprise,
        EmotionLabel::Sad,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: i64) -> Result<Self> {
        usize::try_from(code)
            .ok()
            .and_then(|c| Self::ALL.get(c).copied())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown emotion label code {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Worry => "worry",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Angry => "angry",
            EmotionLabel::Surprise => "surprise",
            EmotionLabel::Sad => "sad",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts either the name or the integer code.
impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(l) = Self::ALL.iter().find(|l| l.name() == s) {
            return Ok(*l);
        }
        match s.parse::<i64>() {
            Ok(code) => Self::from_code(code),
            Err(_) => Err(Error::InvalidParameter(format!(
                "unknown emotion label `{s}`"
            ))),
        }
    }
}

impl Serialize for EmotionLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for EmotionLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = i64::deserialize(d)?;
        Self::from_code(code).map_err(serde::de::Error::custom)
    }
}
