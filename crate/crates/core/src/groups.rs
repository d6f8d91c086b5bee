//! Social group categories and their values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GroupCategory {
    Expertise,
    Time,
    Location,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupValue {
    Expert,
    Novice,
    Fast,
    Slow,
    US,
    NonUS,
    UNK,
}

impl GroupCategory {
    pub const ALL: [GroupCategory; 3] = [
        GroupCategory::Expertise,
        GroupCategory::Time,
        GroupCategory::Location,
    ];

    /// The two substantive values of the category, in catalog order.
    pub fn pair(self) -> [GroupValue; 2] {
        match self {
            GroupCategory::Expertise => [GroupValue::Expert, GroupValue::Novice],
            GroupCategory::Time => [GroupValue::Fast, GroupValue::Slow],
            GroupCategory::Location => [GroupValue::US, GroupValue::NonUS],
        }
    }

    /// Every legal value including `UNK`.
    pub fn values(self) -> [GroupValue; 3] {
        let [a, b] = self.pair();
        [a, b, GroupValue::UNK]
    }

    pub fn admits(self, value: GroupValue) -> bool {
        self.values().contains(&value)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroupCategory::Expertise => "EXPERTISE",
            GroupCategory::Time => "TIME",
            GroupCategory::Location => "LOCATION",
        }
    }
}

impl GroupValue {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupValue::Expert => "Expert",
            GroupValue::Novice => "Novice",
            GroupValue::Fast => "Fast",
            GroupValue::Slow => "Slow",
            GroupValue::US => "US",
            GroupValue::NonUS => "NonUS",
            GroupValue::UNK => "UNK",
        }
    }
}

impl fmt::Display for GroupCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for GroupValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "EXPERTISE" => Ok(GroupCategory::Expertise),
            "TIME" => Ok(GroupCategory::Time),
            "LOCATION" => Ok(GroupCategory::Location),
            _ => Err(Error::Parse(format!("unknown group category '{s}'"))),
        }
    }
}

impl FromStr for GroupValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "expert" => Ok(GroupValue::Expert),
            "novice" => Ok(GroupValue::Novice),
            "fast" => Ok(GroupValue::Fast),
            "slow" => Ok(GroupValue::Slow),
            "us" => Ok(GroupValue::US),
            "nonus" | "non-us" | "non_us" => Ok(GroupValue::NonUS),
            "unk" => Ok(GroupValue::UNK),
            _ => Err(Error::Parse(format!("unknown group value '{s}'"))),
        }
    }
}

/// A (category, value) pair. Construction checks that the value belongs to
/// the category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawLabel", into = "RawLabel")]
pub struct GroupLabel {
    category: GroupCategory,
    value: GroupValue,
}

impl GroupLabel {
    pub fn new(category: GroupCategory, value: GroupValue) -> Result<Self, Error> {
        if category.admits(value) {
            Ok(GroupLabel { category, value })
        } else {
            Err(Error::InvalidInput(format!(
                "value {value} is not legal for category {category}"
            )))
        }
    }

    pub fn unk(category: GroupCategory) -> Self {
        GroupLabel {
            category,
            value: GroupValue::UNK,
        }
    }

    pub fn category(&self) -> GroupCategory {
        self.category
    }

    pub fn value(&self) -> GroupValue {
        self.value
    }

    pub fn is_unk(&self) -> bool {
        self.value == GroupValue::UNK
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.category, self.value)
    }
}

impl FromStr for GroupLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (c, v) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected CATEGORY:Value, got '{s}'")))?;
        GroupLabel::new(c.parse()?, v.parse()?)
    }
}

#[derive(Serialize, Deserialize)]
struct RawLabel {
    category: GroupCategory,
    value: GroupValue,
}

impl TryFrom<RawLabel> for GroupLabel {
    type Error = Error;

    fn try_from(raw: RawLabel) -> Result<Self, Self::Error> {
        GroupLabel::new(raw.category, raw.value)
    }
}

impl From<GroupLabel> for RawLabel {
    fn from(label: GroupLabel) -> Self {
        RawLabel {
            category: label.category,
            value: label.value,
        }
    }
}
