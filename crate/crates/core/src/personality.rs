//! Big-Five trait identifiers and per-essay labels.

use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

/// One of the five binary personality dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PersonalityTrait {
    Extraversion,
    Neuroticism,
    Agreeableness,
    Conscientiousness,
    Openness,
}

impl PersonalityTrait {
    /// Canonical column order: EXT, NEU, AGR, CON, OPN.
    pub const ALL: [PersonalityTrait; 5] = [
        PersonalityTrait::Extraversion,
        PersonalityTrait::Neuroticism,
        PersonalityTrait::Agreeableness,
        PersonalityTrait::Conscientiousness,
        PersonalityTrait::Openness,
    ];

    pub fn code(self) -> &'static str {
        match self {
            PersonalityTrait::Extraversion => "EXT",
            PersonalityTrait::Neuroticism => "NEU",
            PersonalityTrait::Agreeableness => "AGR",
            PersonalityTrait::Conscientiousness => "CON",
            PersonalityTrait::Openness => "OPN",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PersonalityTrait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for PersonalityTrait {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        PersonalityTrait::ALL
            .into_iter()
            .find(|tr| tr.code().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::UnknownTrait(s.to_string()))
    }
}

/// Binary labels for all five traits, indexed by [`PersonalityTrait::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TraitLabels(pub [bool; 5]);

impl TraitLabels {
    pub fn get(&self, t: PersonalityTrait) -> bool {
        self.0[t.index()]
    }

    pub fn set(&mut self, t: PersonalityTrait, value: bool) {
        self.0[t.index()] = value;
    }
}

/// An author's essay with its five trait labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Essay {
    pub author_id: String,
    pub text: String,
    pub labels: TraitLabels,
}
