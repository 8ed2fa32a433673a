//! The nine monitored regions of a transformer scene.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Region of interest. Ids 1..=9 follow the canonical ordering of the
/// labels; id 0 in a mask means "unassigned".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Roi {
    In1,
    In2,
    In3,
    Out1,
    Out2,
    Out3,
    Out4,
    Body,
    Background,
}

impl Roi {
    pub const ALL: [Roi; 9] = [
        Roi::In1,
        Roi::In2,
        Roi::In3,
        Roi::Out1,
        Roi::Out2,
        Roi::Out3,
        Roi::Out4,
        Roi::Body,
        Roi::Background,
    ];

    pub fn id(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_id(id: u8) -> Option<Roi> {
        match id {
            1..=9 => Some(Self::ALL[id as usize - 1]),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Roi::In1 => "in_1",
            Roi::In2 => "in_2",
            Roi::In3 => "in_3",
            Roi::Out1 => "out_1",
            Roi::Out2 => "out_2",
            Roi::Out3 => "out_3",
            Roi::Out4 => "out_4",
            Roi::Body => "body",
            Roi::Background => "background",
        }
    }
}

impl fmt::Display for Roi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown ROI label `{0}`")]
pub struct UnknownRoiLabel(pub String);

impl FromStr for Roi {
    type Err = UnknownRoiLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // `in-1` and `back` are accepted as the short table spellings.
        let norm = s.trim().replace('-', "_");
        if norm == "back" {
            return Ok(Roi::Background);
        }
        Roi::ALL
            .into_iter()
            .find(|r| r.label() == norm)
            .ok_or_else(|| UnknownRoiLabel(s.to_string()))
    }
}

impl From<Roi> for String {
    fn from(r: Roi) -> String {
        r.label().to_string()
    }
}

impl TryFrom<String> for Roi {
    type Error = UnknownRoiLabel;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_and_labels_round_trip() {
        for r in Roi::ALL {
            assert_eq!(Roi::from_id(r.id()), Some(r));
            assert_eq!(r.label().parse::<Roi>().unwrap(), r);
        }
        assert_eq!(Roi::from_id(0), None);
        assert_eq!(Roi::from_id(10), None);
        assert_eq!("in-1".parse::<Roi>().unwrap(), Roi::In1);
        assert_eq!("back".parse::<Roi>().unwrap(), Roi::Background);
        assert!("roof".parse::<Roi>().is_err());
    }
}
