//! Text normalization, punctuation classes and the two degradation
//! conditions (punctuation-only loss and fully fused text).
//!
//! Every string that crosses a module boundary goes through [`normalize`]:
//! canonical composition (NFC), whitespace runs collapsed to one ASCII
//! space, no leading or trailing whitespace. Zero-width joiner and
//! non-joiner are not whitespace and survive untouched.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// Devanagari danda.
pub const DANDA: char = '\u{0964}';
/// Devanagari double danda.
pub const DOUBLE_DANDA: char = '\u{0965}';

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("punctuation class is empty")]
    EmptyPunctClass,
    #[error("{0:?} (U+{1:04X}) is neither punctuation nor symbol")]
    NotPunctuation(char, u32),
    #[error("unknown degradation mode {0:?} (expected punct-only or fused)")]
    UnknownMode(String),
}

/// Text in canonical-composed form with collapsed, trimmed whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whitespace-delimited tokens.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ').filter(|w| !w.is_empty())
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NormalizedText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl From<NormalizedText> for String {
    fn from(t: NormalizedText) -> Self {
        t.0
    }
}

impl From<&str> for NormalizedText {
    fn from(raw: &str) -> Self {
        normalize(raw)
    }
}

impl From<String> for NormalizedText {
    fn from(raw: String) -> Self {
        normalize(&raw)
    }
}

/// NFC-compose, collapse whitespace runs to a single space and trim.
pub fn normalize(raw: &str) -> NormalizedText {
    let composed: String = raw.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    for word in composed.split(char::is_whitespace).filter(|w| !w.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    // Joining composed segments with a space never creates a new composition,
    // so `out` is already NFC.
    NormalizedText(out)
}

/// True when Unicode classifies `c` as punctuation (P*) or symbol (S*).
pub fn is_punct_or_symbol(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | MathSymbol
            | CurrencySymbol
            | ModifierSymbol
            | OtherSymbol
    )
}

/// The set of marks treated as punctuation by degradation and restoration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<char>", into = "Vec<char>")]
pub struct PunctClass {
    marks: BTreeSet<char>,
}

impl PunctClass {
    pub fn new<I: IntoIterator<Item = char>>(marks: I) -> Result<Self, TextError> {
        let marks: BTreeSet<char> = marks.into_iter().collect();
        if marks.is_empty() {
            return Err(TextError::EmptyPunctClass);
        }
        if let Some(&bad) = marks
            .iter()
            .find(|&&c| !(c == DANDA || c == DOUBLE_DANDA || is_punct_or_symbol(c)))
        {
            return Err(TextError::NotPunctuation(bad, bad as u32));
        }
        Ok(Self { marks })
    }

    /// Parse a class from the characters of `spec` (whitespace ignored).
    pub fn parse(spec: &str) -> Result<Self, TextError> {
        Self::new(spec.chars().filter(|c| !c.is_whitespace()))
    }

    pub fn contains(&self, c: char) -> bool {
        self.marks.contains(&c)
    }

    pub fn marks(&self) -> impl Iterator<Item = char> + '_ {
        self.marks.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }
}

impl Default for PunctClass {
    fn default() -> Self {
        let marks = [DANDA, DOUBLE_DANDA, ',', '?', '!', '.', ';', ':', '\'', '"']
            .into_iter()
            .collect();
        Self { marks }
    }
}

impl TryFrom<Vec<char>> for PunctClass {
    type Error = TextError;

    fn try_from(marks: Vec<char>) -> Result<Self, Self::Error> {
        Self::new(marks)
    }
}

impl From<PunctClass> for Vec<char> {
    fn from(pc: PunctClass) -> Self {
        pc.marks.into_iter().collect()
    }
}

/// Remove every mark of `pc`, keeping word boundaries, then re-normalize.
pub fn strip_punctuation(t: &NormalizedText, pc: &PunctClass) -> NormalizedText {
    let filtered: String = t.as_str().chars().filter(|&c| !pc.contains(c)).collect();
    normalize(&filtered)
}

/// Remove all whitespace; every other code point keeps its order.
pub fn fuse_words(t: &NormalizedText) -> NormalizedText {
    let filtered: String = t.as_str().chars().filter(|c| !c.is_whitespace()).collect();
    // Dropping a space can leave a combining mark next to a base it now composes with.
    NormalizedText(filtered.nfc().collect())
}

/// The two degradation conditions applied to restoration training inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegradeMode {
    /// Punctuation removed, word boundaries kept.
    PunctOnly,
    /// Punctuation and inter-word spaces removed.
    Fused,
}

impl DegradeMode {
    pub const ALL: [DegradeMode; 2] = [DegradeMode::PunctOnly, DegradeMode::Fused];

    pub fn as_str(self) -> &'static str {
        match self {
            DegradeMode::PunctOnly => "punct-only",
            DegradeMode::Fused => "fused",
        }
    }
}

impl fmt::Display for DegradeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DegradeMode {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "punct-only" | "punct_only" | "punctonly" => Ok(DegradeMode::PunctOnly),
            "fused" => Ok(DegradeMode::Fused),
            other => Err(TextError::UnknownMode(other.to_string())),
        }
    }
}

pub fn degrade(t: &NormalizedText, mode: DegradeMode, pc: &PunctClass) -> NormalizedText {
    let stripped = strip_punctuation(t, pc);
    match mode {
        DegradeMode::PunctOnly => stripped,
        DegradeMode::Fused => fuse_words(&stripped),
    }
}

/// ASCII or Devanagari decimal digit.
pub fn is_numeral(c: char) -> bool {
    c.is_ascii_digit() || ('\u{0966}'..='\u{096F}').contains(&c)
}
