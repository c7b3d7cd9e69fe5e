//! Domain enums shared by the parsers, the generator and the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laterality {
    Left,
    Right,
    Isthmus,
}

impl Laterality {
    pub const ALL: [Laterality; 3] = [Laterality::Right, Laterality::Left, Laterality::Isthmus];

    pub fn as_str(self) -> &'static str {
        match self {
            Laterality::Left => "left",
            Laterality::Right => "right",
            Laterality::Isthmus => "isthmus",
        }
    }
}

impl fmt::Display for Laterality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Laterality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "lt" | "l" => Ok(Laterality::Left),
            "right" | "rt" | "r" => Ok(Laterality::Right),
            "isthmus" => Ok(Laterality::Isthmus),
            other => Err(format!("unknown laterality '{other}'")),
        }
    }
}

/// Definitive cytology classes (Bethesda II, V and VI).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagnosis {
    Benign,
    Suspicious,
    Malignant,
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Diagnosis::Benign => "benign",
            Diagnosis::Suspicious => "suspicious",
            Diagnosis::Malignant => "malignant",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StudyKind {
    #[serde(rename = "FNA")]
    Fna,
    #[serde(rename = "diagnostic")]
    Diagnostic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Transverse,
    Longitudinal,
    Unknown,
}

/// Site of image acquisition. The three generator sites are named; any
/// other label read from input files is kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Site {
    Site1,
    Site2,
    Site3,
    Other(String),
}

impl Site {
    pub fn as_str(&self) -> &str {
        match self {
            Site::Site1 => "Site1",
            Site::Site2 => "Site2",
            Site::Site3 => "Site3",
            Site::Other(s) => s,
        }
    }
}

impl From<String> for Site {
    fn from(s: String) -> Self {
        match s.as_str() {
            "Site1" => Site::Site1,
            "Site2" => Site::Site2,
            "Site3" => Site::Site3,
            _ => Site::Other(s),
        }
    }
}

impl From<Site> for String {
    fn from(s: Site) -> Self {
        s.as_str().to_string()
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
